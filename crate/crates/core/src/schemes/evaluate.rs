use serde::{Deserialize, Serialize};

use crate::env::{Env, Fixture, GlobalState, StepResult};
use crate::rng;
use crate::Result;

use super::control::{Decision, TeamPolicy};

/// Noise-free test protocol shared by every scheme.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalProtocol {
    /// Evaluate after every `every`-th training episode (0 disables).
    pub every: usize,
    pub seeds: Vec<u64>,
    pub frames: usize,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        Self {
            every: 50,
            seeds: (0..10).collect(),
            frames: 4,
        }
    }
}

/// Aggregates of one played episode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    /// Energy of all devices over the episode, J.
    pub total_energy: f64,
    /// `total_energy` per device and frame, J.
    pub mean_device_energy: f64,
    /// Mean over frames of the fraction of bits finished by frame end.
    pub completion_fraction: f64,
    pub collision_events: usize,
    pub slots: usize,
}

#[derive(Clone, Debug, Default)]
pub(crate) struct StatsAccumulator {
    energy: f64,
    completions: Vec<f64>,
    collisions: usize,
    slots: usize,
}

impl StatsAccumulator {
    pub(crate) fn push(&mut self, step: &StepResult) {
        let diag = &step.diagnostics;
        self.energy += diag.energy_per_device.iter().sum::<f64>();
        if diag.frame_unfinished.is_some() || step.done {
            self.completions.push(diag.completion_fraction);
        }
        self.collisions += usize::from(diag.collision);
        self.slots += 1;
    }

    pub(crate) fn finish(&self, devices: usize, frames: usize) -> EpisodeStats {
        let completion_fraction = if self.completions.is_empty() {
            0.0
        } else {
            self.completions.iter().sum::<f64>() / self.completions.len() as f64
        };
        EpisodeStats {
            total_energy: self.energy,
            mean_device_energy: self.energy / (devices * frames) as f64,
            completion_fraction,
            collision_events: self.collisions,
            slots: self.slots,
        }
    }
}

/// Plays one episode from the environment's current state with the noise-free
/// policy, reporting every slot to `observer`.
pub fn run_episode(
    policy: &TeamPolicy,
    env: &mut Env,
    mut observer: impl FnMut(&GlobalState, &Decision, &StepResult),
) -> Result<EpisodeStats> {
    let mut stats = StatsAccumulator::default();
    loop {
        let state = env.state().clone();
        let decision = policy.act(&state)?;
        let step = env.step(&decision.actions)?;
        observer(&state, &decision, &step);
        stats.push(&step);
        if step.done {
            break;
        }
    }
    Ok(stats.finish(env.config().num_devices, env.frames()))
}

/// Mean and sample standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
}

impl Moments {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub total_energy: Moments,
    pub mean_device_energy: Moments,
    pub completion_fraction: Moments,
    pub collision_events: Moments,
    pub per_seed: Vec<EpisodeStats>,
}

impl EvalSummary {
    pub fn from_episodes(per_seed: Vec<EpisodeStats>) -> Self {
        let col = |f: fn(&EpisodeStats) -> f64| Moments::of(&per_seed.iter().map(f).collect::<Vec<_>>());
        Self {
            episodes: per_seed.len(),
            total_energy: col(|s| s.total_energy),
            mean_device_energy: col(|s| s.mean_device_energy),
            completion_fraction: col(|s| s.completion_fraction),
            collision_events: col(|s| s.collision_events as f64),
            per_seed,
        }
    }
}

/// Environment used for evaluation seed `seed`; identical for every scheme.
pub fn eval_env(policy: &TeamPolicy, seed: u64, frames: usize, fixture: Option<&Fixture>) -> Result<Env> {
    Env::new(
        policy.controller().world().clone(),
        frames,
        fixture.cloned(),
        rng::stream(seed, "eval"),
    )
}

pub fn evaluate(policy: &TeamPolicy, protocol: &EvalProtocol, fixture: Option<&Fixture>) -> Result<EvalSummary> {
    let per_seed = protocol
        .seeds
        .iter()
        .map(|&seed| {
            let mut env = eval_env(policy, seed, protocol.frames, fixture)?;
            run_episode(policy, &mut env, |_, _, _| {})
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalSummary::from_episodes(per_seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments() {
        let m = Moments::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(Moments::of(&[7.0]).std, 0.0);
    }
}
