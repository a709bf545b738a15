//! Maps raw actor outputs (pre-squash logits) onto feasible actions, and back-
//! propagates gradients through that map.
//!
//! Raw layout per UAV: `[displacement (3) | preference (D) | cpu (D) | offload (D)]`.
//! The normalized action fed to critics has the same layout and holds the
//! displacement divided by the per-slot step limit, the preference, the CPU
//! share of capacity and the offload ratio.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::env::LocalAction;
use crate::nn::sigmoid;
use crate::world::WorldConfig;

/// Additive floor inside the log-preference bias of the CPU soft-mask.
pub const PREFERENCE_EPS: f64 = 1e-6;

/// How the offloading head is coupled to the other branches.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffloadWiring {
    /// `ratio = sigmoid(o) * preference`.
    #[default]
    PreferenceGated,
    /// `ratio = sigmoid(o + ln(D * share + eps)) * preference`: devices granted
    /// more than an equal CPU share are pushed toward offloading.
    CapacityGated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionStyle {
    /// Nested post-processing of the multi-branch actor.
    MultiBranch(OffloadWiring),
    /// Generic squashing; CPU logits only renormalized to the capacity.
    Naive,
    /// Only the displacement is learned; the rest is decided elsewhere.
    DisplacementOnly,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActionProjector {
    style: ActionStyle,
    devices: usize,
    agents: usize,
    max_step: f64,
    cpu_capacity: f64,
}

impl ActionProjector {
    pub fn new(style: ActionStyle, config: &WorldConfig, agents: usize) -> Self {
        Self {
            style,
            devices: config.num_devices,
            agents,
            max_step: config.max_step(),
            cpu_capacity: config.cpu_capacity_max,
        }
    }

    pub fn style(&self) -> ActionStyle {
        self.style
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn devices(&self) -> usize {
        self.devices
    }

    pub fn dim_per_agent(&self) -> usize {
        match self.style {
            ActionStyle::DisplacementOnly => 3,
            _ => 3 + 3 * self.devices,
        }
    }

    /// Width of both the raw and the normalized vectors.
    pub fn dim(&self) -> usize {
        self.agents * self.dim_per_agent()
    }

    pub fn project(&self, raw: &[f64]) -> Vec<f64> {
        assert_eq!(raw.len(), self.dim(), "raw action width");
        let mut out = vec![0.0; raw.len()];
        let k = self.dim_per_agent();
        for (z, n) in raw.chunks(k).zip(out.chunks_mut(k)) {
            self.project_chunk(z, n);
        }
        out
    }

    /// Vector-Jacobian product: gradient w.r.t. the raw vector given the
    /// gradient w.r.t. the normalized action.
    pub fn vjp(&self, raw: &[f64], grad_normalized: &[f64]) -> Vec<f64> {
        assert_eq!(raw.len(), self.dim(), "raw action width");
        assert_eq!(grad_normalized.len(), self.dim(), "gradient width");
        let mut out = vec![0.0; raw.len()];
        let k = self.dim_per_agent();
        for ((z, g), o) in raw.chunks(k).zip(grad_normalized.chunks(k)).zip(out.chunks_mut(k)) {
            self.vjp_chunk(z, g, o);
        }
        out
    }

    pub fn project_batch(&self, raw: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = Array2::zeros(raw.dim());
        for (r, mut o) in raw.rows().into_iter().zip(out.rows_mut()) {
            let p = self.project(&r.to_vec());
            o.assign(&ndarray::ArrayView1::from(&p));
        }
        out
    }

    pub fn vjp_batch(&self, raw: ArrayView2<'_, f64>, grad: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = Array2::zeros(raw.dim());
        for ((r, g), mut o) in raw.rows().into_iter().zip(grad.rows()).zip(out.rows_mut()) {
            let v = self.vjp(&r.to_vec(), &g.to_vec());
            o.assign(&ndarray::ArrayView1::from(&v));
        }
        out
    }

    /// Converts a normalized action into environment units, one per agent.
    /// With [`ActionStyle::DisplacementOnly`] only the displacement is set and
    /// the device vectors are empty.
    pub fn local_actions(&self, normalized: &[f64]) -> Vec<LocalAction> {
        let d = self.devices;
        normalized
            .chunks(self.dim_per_agent())
            .map(|n| {
                let displacement = [n[0] * self.max_step, n[1] * self.max_step, n[2] * self.max_step];
                if self.style == ActionStyle::DisplacementOnly {
                    return LocalAction {
                        displacement,
                        preference: vec![],
                        cpu_alloc: vec![],
                        offload_ratio: vec![],
                    };
                }
                LocalAction {
                    displacement,
                    preference: n[3..3 + d].to_vec(),
                    cpu_alloc: n[3 + d..3 + 2 * d].iter().map(|s| s * self.cpu_capacity).collect(),
                    offload_ratio: n[3 + 2 * d..3 + 3 * d].to_vec(),
                }
            })
            .collect()
    }

    fn project_chunk(&self, z: &[f64], n: &mut [f64]) {
        let d = self.devices;
        let t = [z[0].tanh(), z[1].tanh(), z[2].tanh()];
        let norm = (t[0] * t[0] + t[1] * t[1] + t[2] * t[2]).sqrt();
        let scale = if norm > 1.0 { 1.0 / norm } else { 1.0 };
        for i in 0..3 {
            n[i] = t[i] * scale;
        }
        if self.style == ActionStyle::DisplacementOnly {
            return;
        }
        let (y, c, o) = (&z[3..3 + d], &z[3 + d..3 + 2 * d], &z[3 + 2 * d..]);
        let (pref, rest) = n[3..].split_at_mut(d);
        let (share, ratio) = rest.split_at_mut(d);
        for i in 0..d {
            pref[i] = sigmoid(y[i]);
        }
        match self.style {
            ActionStyle::MultiBranch(wiring) => {
                let logits: Vec<f64> = (0..d).map(|i| c[i] + (pref[i] + PREFERENCE_EPS).ln()).collect();
                softmax_into(&logits, share);
                for i in 0..d {
                    let gate = match wiring {
                        OffloadWiring::PreferenceGated => o[i],
                        OffloadWiring::CapacityGated => o[i] + (d as f64 * share[i] + PREFERENCE_EPS).ln(),
                    };
                    ratio[i] = sigmoid(gate) * pref[i];
                }
            }
            ActionStyle::Naive => {
                let total: f64 = c.iter().map(|&v| sigmoid(v)).sum();
                if total >= f64::MIN_POSITIVE {
                    for i in 0..d {
                        share[i] = sigmoid(c[i]) / total;
                    }
                } else {
                    log_sigmoid_shares(c, share);
                }
                for i in 0..d {
                    ratio[i] = sigmoid(o[i]);
                }
            }
            ActionStyle::DisplacementOnly => unreachable!(),
        }
    }

    fn vjp_chunk(&self, z: &[f64], g: &[f64], out: &mut [f64]) {
        let d = self.devices;
        let t = [z[0].tanh(), z[1].tanh(), z[2].tanh()];
        let norm = (t[0] * t[0] + t[1] * t[1] + t[2] * t[2]).sqrt();
        let g_t: [f64; 3] = if norm > 1.0 {
            let n = [t[0] / norm, t[1] / norm, t[2] / norm];
            let dot = n[0] * g[0] + n[1] * g[1] + n[2] * g[2];
            [0, 1, 2].map(|i| (g[i] - n[i] * dot) / norm)
        } else {
            [g[0], g[1], g[2]]
        };
        for i in 0..3 {
            out[i] = g_t[i] * (1.0 - t[i] * t[i]);
        }
        if self.style == ActionStyle::DisplacementOnly {
            return;
        }
        let (y, c, o) = (&z[3..3 + d], &z[3 + d..3 + 2 * d], &z[3 + 2 * d..]);
        let (g_pref_in, g_share_in, g_ratio) = (&g[3..3 + d], &g[3 + d..3 + 2 * d], &g[3 + 2 * d..]);
        let pref: Vec<f64> = y.iter().map(|&v| sigmoid(v)).collect();
        let mut g_pref = g_pref_in.to_vec();
        let (g_y, rest) = out[3..].split_at_mut(d);
        let (g_c, g_o) = rest.split_at_mut(d);
        match self.style {
            ActionStyle::MultiBranch(wiring) => {
                let logits: Vec<f64> = (0..d).map(|i| c[i] + (pref[i] + PREFERENCE_EPS).ln()).collect();
                let mut share = vec![0.0; d];
                softmax_into(&logits, &mut share);
                let mut g_share = g_share_in.to_vec();
                for i in 0..d {
                    match wiring {
                        OffloadWiring::PreferenceGated => {
                            let s = sigmoid(o[i]);
                            g_o[i] = g_ratio[i] * pref[i] * s * (1.0 - s);
                            g_pref[i] += g_ratio[i] * s;
                        }
                        OffloadWiring::CapacityGated => {
                            let inner = d as f64 * share[i] + PREFERENCE_EPS;
                            let s = sigmoid(o[i] + inner.ln());
                            let ds = g_ratio[i] * pref[i] * s * (1.0 - s);
                            g_o[i] = ds;
                            g_share[i] += ds * d as f64 / inner;
                            g_pref[i] += g_ratio[i] * s;
                        }
                    }
                }
                let dot: f64 = (0..d).map(|i| g_share[i] * share[i]).sum();
                for i in 0..d {
                    let g_logit = share[i] * (g_share[i] - dot);
                    g_c[i] = g_logit;
                    g_pref[i] += g_logit / (pref[i] + PREFERENCE_EPS);
                }
            }
            ActionStyle::Naive => {
                let sig: Vec<f64> = c.iter().map(|&v| sigmoid(v)).collect();
                let total: f64 = sig.iter().sum();
                if total >= f64::MIN_POSITIVE {
                    let dot: f64 = (0..d).map(|i| g_share_in[i] * sig[i] / total).sum();
                    for i in 0..d {
                        g_c[i] = sig[i] * (1.0 - sig[i]) * (g_share_in[i] - dot) / total;
                    }
                } else {
                    let mut share = vec![0.0; d];
                    log_sigmoid_shares(c, &mut share);
                    let dot: f64 = (0..d).map(|i| g_share_in[i] * share[i]).sum();
                    for i in 0..d {
                        g_c[i] = share[i] * (1.0 - sig[i]) * (g_share_in[i] - dot);
                    }
                }
                for i in 0..d {
                    let s = sigmoid(o[i]);
                    g_o[i] = g_ratio[i] * s * (1.0 - s);
                }
            }
            ActionStyle::DisplacementOnly => unreachable!(),
        }
        for i in 0..d {
            g_y[i] = g_pref[i] * pref[i] * (1.0 - pref[i]);
        }
    }
}

/// `sigmoid(c_i) / sum_j sigmoid(c_j)` computed as a softmax of
/// `ln sigmoid(c)`, for logits so negative that every sigmoid underflows.
fn log_sigmoid_shares(c: &[f64], out: &mut [f64]) {
    let logits: Vec<f64> = c.iter().map(|&v| v.min(0.0) - (-v.abs()).exp().ln_1p()).collect();
    softmax_into(&logits, out);
}

fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn projector(style: ActionStyle, d: usize) -> ActionProjector {
        let cfg = WorldConfig {
            num_devices: d,
            ..Default::default()
        };
        ActionProjector::new(style, &cfg, 1)
    }

    const STYLES: [ActionStyle; 4] = [
        ActionStyle::MultiBranch(OffloadWiring::PreferenceGated),
        ActionStyle::MultiBranch(OffloadWiring::CapacityGated),
        ActionStyle::Naive,
        ActionStyle::DisplacementOnly,
    ];

    #[test]
    fn naive_shares_survive_sigmoid_underflow() {
        let p = projector(ActionStyle::Naive, 3);
        let mut raw = vec![0.0; p.dim()];
        raw[3 + 3..3 + 6].copy_from_slice(&[-900.0, -901.0, -1000.0]);
        let n = p.project(&raw);
        let share = &n[6..9];
        assert!((share.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((share[0] / share[1] - 1f64.exp()).abs() < 1e-9, "{share:?}");
        let g = p.vjp(&raw, &vec![1.0; p.dim()]);
        assert!(g.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn equal_logits_split_capacity_evenly() {
        let p = projector(ActionStyle::MultiBranch(OffloadWiring::PreferenceGated), 4);
        let raw = vec![0.3; p.dim()];
        let a = &p.local_actions(&p.project(&raw))[0];
        for f in &a.cpu_alloc {
            assert!((f - 50e9 / 4.0).abs() < 1e-3);
        }
    }

    #[test]
    fn zero_preference_masks_device() {
        let p = projector(ActionStyle::MultiBranch(OffloadWiring::PreferenceGated), 3);
        let mut raw = vec![0.0; p.dim()];
        raw[3] = -1000.0; // preference of device 0 underflows to 0
        let n = p.project(&raw);
        assert_eq!(n[3], 0.0);
        assert_eq!(n[3 + 6], 0.0, "offload ratio");
        // ln(eps) bias: share of device 0 is eps / (eps + 2 * 0.5) relative
        assert!(n[3 + 3] < 1e-5, "cpu share {}", n[6]);
    }

    #[test]
    fn projection_is_total() {
        let mut rng = crate::rng::stream(11, "proj");
        for style in STYLES {
            let p = projector(style, 6);
            for _ in 0..2000 {
                let scale = 10f64.powf(rng.random_range(-2.0..3.0));
                let raw: Vec<f64> = (0..p.dim()).map(|_| rng.random_range(-1.0..1.0) * scale).collect();
                let a = &p.local_actions(&p.project(&raw))[0];
                let step = crate::world::norm3(a.displacement);
                assert!(step <= 10.0 * (1.0 + 1e-12), "{step}");
                if style == ActionStyle::DisplacementOnly {
                    continue;
                }
                let total: f64 = a.cpu_alloc.iter().sum();
                assert!((total - 50e9).abs() / 50e9 < 1e-9);
                assert!(a.offload_ratio.iter().chain(&a.preference).all(|r| (0.0..=1.0).contains(r)));
            }
        }
    }

    #[test]
    fn vjp_matches_finite_differences() {
        let mut rng = crate::rng::stream(12, "proj");
        for style in STYLES {
            let p = projector(style, 4);
            for case in 0..50 {
                // half the cases push the displacement past the norm clamp
                let spread = if case % 2 == 0 { 0.5 } else { 3.0 };
                let raw: Vec<f64> = (0..p.dim()).map(|_| rng.random_range(-spread..spread)).collect();
                let w: Vec<f64> = (0..p.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let analytic = p.vjp(&raw, &w);
                let f = |r: &[f64]| p.project(r).iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
                for i in 0..p.dim() {
                    let h = 1e-6;
                    let mut up = raw.clone();
                    let mut dn = raw.clone();
                    up[i] += h;
                    dn[i] -= h;
                    let numeric = (f(&up) - f(&dn)) / (2.0 * h);
                    let err = (numeric - analytic[i]).abs() / numeric.abs().max(analytic[i].abs()).max(1e-6);
                    assert!(err < 1e-5, "{style:?} coord {i}: {numeric} vs {}", analytic[i]);
                }
            }
        }
    }

    #[test]
    fn multi_agent_chunks_are_independent() {
        let cfg = WorldConfig::default();
        let joint = ActionProjector::new(ActionStyle::Naive, &cfg, 2);
        let single = ActionProjector::new(ActionStyle::Naive, &cfg, 1);
        let raw: Vec<f64> = (0..joint.dim()).map(|i| (i as f64 * 0.37).sin()).collect();
        let n = joint.project(&raw);
        let k = single.dim();
        assert_eq!(&n[..k], &single.project(&raw[..k])[..]);
        assert_eq!(&n[k..], &single.project(&raw[k..])[..]);
        assert_eq!(joint.local_actions(&n).len(), 2);
    }
}
