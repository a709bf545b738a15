//! Trunk-and-heads policy networks.
//!
//! A shared relu trunk feeds any number of heads; each head is a small relu
//! branch ending in a linear layer. The raw action is the concatenation of all
//! head outputs. The multi-branch actor has four heads per UAV
//! (displacement, preference, CPU, offload), the naive actor one wide head,
//! the separated design a single displacement head.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{adam_step, soft_update, Activation, AdamConfig, AdamState, ForwardCache, GradientSet, Mlp, MlpDocument};
use crate::{Error, Result};

use super::projection::ActionStyle;

/// Hidden layer widths of actors and critics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Architecture {
    pub trunk: Vec<usize>,
    pub branch: Vec<usize>,
    pub critic: Vec<usize>,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            trunk: vec![128, 128, 128],
            branch: vec![64, 32],
            critic: vec![512, 256, 128, 64],
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        for (key, widths) in [("arch.trunk", &self.trunk), ("arch.critic", &self.critic)] {
            if widths.is_empty() || widths.contains(&0) {
                return Err(Error::config(key, "needs at least one layer, all widths > 0"));
            }
        }
        if self.branch.contains(&0) {
            return Err(Error::config("arch.branch", "widths must be > 0"));
        }
        Ok(())
    }
}

fn relu_stack(widths: &[usize]) -> Vec<(usize, Activation)> {
    widths.iter().map(|&w| (w, Activation::Relu)).collect()
}

/// Critic: relu hidden layers and a linear scalar output.
pub fn build_critic<R: Rng + ?Sized>(input_dim: usize, arch: &Architecture, rng: &mut R) -> Result<Mlp> {
    let mut spec = relu_stack(&arch.critic);
    spec.push((1, Activation::Linear));
    Mlp::new(input_dim, &spec, rng)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyNet {
    trunk: Mlp,
    heads: Vec<Mlp>,
}

#[derive(Clone, Debug)]
pub struct PolicyCache {
    trunk: ForwardCache,
    heads: Vec<ForwardCache>,
}

#[derive(Clone, Debug)]
pub struct PolicyGrads {
    pub trunk: GradientSet,
    pub heads: Vec<GradientSet>,
}

impl PolicyGrads {
    /// Gradients in [`PolicyNet::flat_params`] order.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = self.trunk.flat_params();
        for h in &self.heads {
            out.extend(h.flat_params());
        }
        out
    }
}

impl PolicyNet {
    /// Builds the actor matching `style` for `agents` UAVs over `devices`
    /// devices. `agents > 1` repeats the per-UAV head set (central actor).
    pub fn build<R: Rng + ?Sized>(
        style: ActionStyle,
        state_dim: usize,
        devices: usize,
        agents: usize,
        arch: &Architecture,
        rng: &mut R,
    ) -> Result<Self> {
        let trunk = Mlp::new(state_dim, &relu_stack(&arch.trunk), rng)?;
        let width = *arch.trunk.last().expect("validated trunk");
        let branch = |out: usize, rng: &mut R| {
            let mut spec = relu_stack(&arch.branch);
            spec.push((out, Activation::Linear));
            Mlp::new(width, &spec, rng)
        };
        let mut heads = Vec::new();
        for _ in 0..agents {
            match style {
                ActionStyle::MultiBranch(_) => {
                    for out in [3, devices, devices, devices] {
                        heads.push(branch(out, rng)?);
                    }
                }
                ActionStyle::Naive => heads.push(Mlp::new(width, &[(3 + 3 * devices, Activation::Linear)], rng)?),
                ActionStyle::DisplacementOnly => heads.push(branch(3, rng)?),
            }
        }
        Ok(Self { trunk, heads })
    }

    pub fn from_parts(trunk: Mlp, heads: Vec<Mlp>) -> Result<Self> {
        if heads.is_empty() {
            return Err(Error::EmptySpec);
        }
        if let Some(h) = heads.iter().find(|h| h.input_dim() != trunk.output_dim()) {
            return Err(Error::Shape(format!(
                "head expects {} inputs, trunk yields {}",
                h.input_dim(),
                trunk.output_dim()
            )));
        }
        Ok(Self { trunk, heads })
    }

    pub fn trunk(&self) -> &Mlp {
        &self.trunk
    }

    pub fn heads(&self) -> &[Mlp] {
        &self.heads
    }

    pub fn input_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.heads.iter().map(Mlp::output_dim).sum()
    }

    pub fn forward(&self, states: ArrayView2<'_, f64>) -> Result<(Array2<f64>, PolicyCache)> {
        let (features, trunk) = self.trunk.forward(states)?;
        let mut outs = Vec::with_capacity(self.heads.len());
        let mut caches = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let (y, c) = head.forward(features.view())?;
            outs.push(y);
            caches.push(c);
        }
        let views: Vec<_> = outs.iter().map(|o| o.view()).collect();
        let raw = concatenate(Axis(1), &views).expect("heads share the batch size");
        Ok((raw, PolicyCache { trunk, heads: caches }))
    }

    pub fn predict(&self, states: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let features = self.trunk.predict(states)?;
        let outs = self
            .heads
            .iter()
            .map(|h| h.predict(features.view()))
            .collect::<Result<Vec<_>>>()?;
        let views: Vec<_> = outs.iter().map(|o| o.view()).collect();
        Ok(concatenate(Axis(1), &views).expect("heads share the batch size"))
    }

    pub fn predict_one(&self, state: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, state.len()), state).map_err(|e| Error::Shape(e.to_string()))?;
        Ok(self.predict(x)?.into_raw_vec_and_offset().0)
    }

    pub fn backward(&self, cache: &PolicyCache, grad_raw: ArrayView2<'_, f64>) -> PolicyGrads {
        let mut offset = 0;
        let mut heads = Vec::with_capacity(self.heads.len());
        let mut grad_features: Option<Array2<f64>> = None;
        for (head, c) in self.heads.iter().zip(&cache.heads) {
            let w = head.output_dim();
            let g = head.backward(c, grad_raw.slice(s![.., offset..offset + w]));
            offset += w;
            match grad_features.as_mut() {
                Some(acc) => *acc += &g.input,
                None => grad_features = Some(g.input.clone()),
            }
            heads.push(g);
        }
        let trunk = self
            .trunk
            .backward(&cache.trunk, grad_features.expect("at least one head").view());
        PolicyGrads { trunk, heads }
    }

    pub fn soft_update_from(&mut self, online: &PolicyNet, tau: f64) -> Result<()> {
        if self.heads.len() != online.heads.len() {
            return Err(Error::Shape("soft update between different actors".into()));
        }
        soft_update(&mut self.trunk, &online.trunk, tau)?;
        for (t, o) in self.heads.iter_mut().zip(&online.heads) {
            soft_update(t, o, tau)?;
        }
        Ok(())
    }

    pub fn parameters_finite(&self) -> bool {
        self.trunk.parameters_finite() && self.heads.iter().all(Mlp::parameters_finite)
    }

    /// Trunk parameters followed by each head's, see [`Mlp::flat_params`].
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = self.trunk.flat_params();
        for h in &self.heads {
            out.extend(h.flat_params());
        }
        out
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        let total: usize = self.trunk.num_parameters() + self.heads.iter().map(Mlp::num_parameters).sum::<usize>();
        if values.len() != total {
            return Err(Error::Shape(format!("{} values for {total} parameters", values.len())));
        }
        let (head, mut rest) = values.split_at(self.trunk.num_parameters());
        self.trunk.set_flat_params(head)?;
        for h in &mut self.heads {
            let (this, tail) = rest.split_at(h.num_parameters());
            h.set_flat_params(this)?;
            rest = tail;
        }
        Ok(())
    }

    pub fn to_document(&self) -> PolicyDocument {
        PolicyDocument {
            trunk: self.trunk.to_document(),
            heads: self.heads.iter().map(Mlp::to_document).collect(),
        }
    }

    pub fn from_document(doc: &PolicyDocument) -> Result<Self> {
        let trunk = Mlp::from_document(&doc.trunk)?;
        let heads = doc.heads.iter().map(Mlp::from_document).collect::<Result<Vec<_>>>()?;
        Self::from_parts(trunk, heads)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyDocument {
    pub trunk: MlpDocument,
    pub heads: Vec<MlpDocument>,
}

/// One Adam state per sub-network of a [`PolicyNet`].
#[derive(Clone, Debug)]
pub struct PolicyAdam {
    trunk: AdamState,
    heads: Vec<AdamState>,
}

impl PolicyAdam {
    pub fn new(net: &PolicyNet, config: AdamConfig) -> Self {
        Self {
            trunk: AdamState::new(&net.trunk, config.clone()),
            heads: net.heads.iter().map(|h| AdamState::new(h, config.clone())).collect(),
        }
    }

    pub fn step(&mut self, net: &mut PolicyNet, grads: &PolicyGrads) -> Result<()> {
        adam_step(&mut net.trunk, &grads.trunk, &mut self.trunk)?;
        for ((h, g), st) in net.heads.iter_mut().zip(&grads.heads).zip(&mut self.heads) {
            adam_step(h, g, st)?;
        }
        Ok(())
    }
}
