//! Learning machinery of one UAV (or of a central coordinator): actor and
//! critic networks with target copies, feasibility projection, replay and the
//! DDPG update steps.

mod actor;
mod projection;
mod replay;

pub use actor::{build_critic, Architecture, PolicyAdam, PolicyCache, PolicyDocument, PolicyGrads, PolicyNet};
pub use projection::{ActionProjector, ActionStyle, OffloadWiring, PREFERENCE_EPS};
pub use replay::{ReplayBuffer, Transition};

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::nn::{adam_step, soft_update, AdamConfig, AdamState, Mlp};
use crate::{Error, Result};

/// Uniform range of raw logits drawn during warm-up.
pub const WARMUP_RAW_RANGE: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentHyperparams {
    pub gamma: f64,
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub noise_sigma_start: f64,
    pub noise_sigma_end: f64,
    /// Episodes over which the exploration noise decays linearly.
    pub noise_decay_episodes: usize,
    /// Environment slots of uniformly random raw actions before any update.
    pub warmup_steps: usize,
}

impl Default for AgentHyperparams {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            tau: 0.005,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            batch_size: 128,
            buffer_capacity: 50_000,
            noise_sigma_start: 0.2,
            noise_sigma_end: 0.01,
            noise_decay_episodes: 2400,
            warmup_steps: 1000,
        }
    }
}

impl AgentHyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::config("agent.gamma", "must lie in [0, 1]"));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::config("agent.tau", "must lie in (0, 1]"));
        }
        for (key, lr) in [("agent.actor_lr", self.actor_lr), ("agent.critic_lr", self.critic_lr)] {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(Error::config(key, "must be > 0"));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::config("agent.batch_size", "must be > 0"));
        }
        if self.buffer_capacity < self.batch_size {
            return Err(Error::config("agent.buffer_capacity", "must hold at least one batch"));
        }
        if !(self.noise_sigma_start >= 0.0 && self.noise_sigma_end >= 0.0) {
            return Err(Error::config("agent.noise_sigma_start", "noise levels must be >= 0"));
        }
        Ok(())
    }

    /// Exploration noise level for a (zero-based) training episode.
    pub fn noise_sigma(&self, episode: usize) -> f64 {
        if episode >= self.noise_decay_episodes {
            return self.noise_sigma_end;
        }
        let progress = episode as f64 / self.noise_decay_episodes as f64;
        self.noise_sigma_start + (self.noise_sigma_end - self.noise_sigma_start) * progress
    }
}

/// Uniformly random raw action used during warm-up.
pub fn warmup_raw<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim)
        .map(|_| rng.random_range(-WARMUP_RAW_RANGE..WARMUP_RAW_RANGE))
        .collect()
}

/// Stacks equally long rows into a batch matrix.
pub fn stack_rows<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Array2<f64> {
    let rows: Vec<&[f64]> = rows.into_iter().collect();
    let width = rows.first().map_or(0, |r| r.len());
    let mut flat = Vec::with_capacity(rows.len() * width);
    for r in &rows {
        assert_eq!(r.len(), width, "ragged batch");
        flat.extend_from_slice(r);
    }
    Array2::from_shape_vec((rows.len(), width), flat).expect("shape checked")
}

pub fn hconcat(parts: &[ArrayView2<'_, f64>]) -> Array2<f64> {
    concatenate(Axis(1), parts).expect("parts share the batch size")
}

/// An actor-critic pair with target copies and optimizers.
///
/// The critic input layout is decided by the caller; the learner only needs
/// to know where its own normalized action sits inside it.
#[derive(Clone, Debug)]
pub struct Learner {
    pub actor: PolicyNet,
    pub actor_target: PolicyNet,
    pub critic: Mlp,
    pub critic_target: Mlp,
    pub projector: ActionProjector,
    actor_opt: PolicyAdam,
    critic_opt: AdamState,
    tau: f64,
}

impl Learner {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        critic_input_dim: usize,
        projector: ActionProjector,
        arch: &Architecture,
        hyper: &AgentHyperparams,
        rng: &mut R,
    ) -> Result<Self> {
        let actor = PolicyNet::build(projector.style(), state_dim, projector.devices(), projector.agents(), arch, rng)?;
        let critic = build_critic(critic_input_dim, arch, rng)?;
        Ok(Self::from_networks(actor, critic, projector, hyper))
    }

    /// Wraps given networks; targets start as exact copies.
    pub fn from_networks(actor: PolicyNet, critic: Mlp, projector: ActionProjector, hyper: &AgentHyperparams) -> Self {
        Self {
            actor_opt: PolicyAdam::new(&actor, AdamConfig::with_lr(hyper.actor_lr)),
            critic_opt: AdamState::new(&critic, AdamConfig::with_lr(hyper.critic_lr)),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            projector,
            tau: hyper.tau,
        }
    }

    /// Restores a learner from checkpointed networks (fresh optimizer state).
    pub fn from_checkpoint(
        actor: PolicyNet,
        actor_target: PolicyNet,
        critic: Mlp,
        critic_target: Mlp,
        projector: ActionProjector,
        hyper: &AgentHyperparams,
    ) -> Self {
        let mut learner = Self::from_networks(actor, critic, projector, hyper);
        learner.actor_target = actor_target;
        learner.critic_target = critic_target;
        learner
    }

    /// Raw (noisy) and normalized action for one state.
    pub fn act<R: Rng + ?Sized>(&self, state: &[f64], sigma: f64, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut raw = self.actor.predict_one(state)?;
        if !raw.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged("non-finite actor output".into()));
        }
        if sigma > 0.0 {
            for v in raw.iter_mut() {
                let w: f64 = rng.sample(StandardNormal);
                *v += sigma * w;
            }
        }
        let normalized = self.projector.project(&raw);
        Ok((raw, normalized))
    }

    /// Noise-free normalized actions of the target actor.
    pub fn target_actions(&self, states: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let raw = self.actor_target.predict(states)?;
        Ok(self.projector.project_batch(raw.view()))
    }

    /// One Adam step on the mean squared TD error; returns the pre-step loss.
    pub fn critic_fit(&mut self, inputs: ArrayView2<'_, f64>, targets: ArrayView1<'_, f64>) -> Result<f64> {
        let (q, cache) = self.critic.forward(inputs)?;
        let residual = &q.column(0) - &targets;
        let n = residual.len() as f64;
        let loss = residual.dot(&residual) / n;
        if !loss.is_finite() {
            return Err(Error::Diverged(format!("critic loss {loss}")));
        }
        let grad = (residual * (2.0 / n)).insert_axis(Axis(1));
        let grads = self.critic.backward(&cache, grad.view());
        adam_step(&mut self.critic, &grads, &mut self.critic_opt)?;
        Ok(loss)
    }

    /// Deterministic policy gradient of `mean(objective)` with respect to the
    /// actor parameters, without applying it.
    ///
    /// `objective` receives the batch of normalized actions and returns the
    /// per-sample objective together with its gradient w.r.t. those actions.
    pub fn actor_gradient_with(
        &self,
        states: ArrayView2<'_, f64>,
        objective: impl FnOnce(ArrayView2<'_, f64>) -> Result<(Array1<f64>, Array2<f64>)>,
    ) -> Result<(f64, PolicyGrads)> {
        let (raw, cache) = self.actor.forward(states)?;
        let normalized = self.projector.project_batch(raw.view());
        let (values, grad_norm) = objective(normalized.view())?;
        let n = values.len() as f64;
        let mean = values.sum() / n;
        if !mean.is_finite() {
            return Err(Error::Diverged(format!("actor objective {mean}")));
        }
        // descend on -mean(objective)
        let grad_raw = self.projector.vjp_batch(raw.view(), (grad_norm * (-1.0 / n)).view());
        Ok((mean, self.actor.backward(&cache, grad_raw.view())))
    }

    /// Critic-based objective: `build` places the normalized actions into the
    /// critic input; the actions occupy columns `offset..offset + dim`.
    pub fn actor_gradient(
        &self,
        states: ArrayView2<'_, f64>,
        offset: usize,
        build: impl FnOnce(ArrayView2<'_, f64>) -> Array2<f64>,
    ) -> Result<(f64, PolicyGrads)> {
        let dim = self.projector.dim();
        let critic = &self.critic;
        self.actor_gradient_with(states, |actions| {
            let inputs = build(actions);
            let (q, cache) = critic.forward(inputs.view())?;
            let ones = Array2::ones((q.nrows(), 1));
            let grad_in = critic.input_gradient(&cache, ones.view());
            Ok((q.column(0).to_owned(), grad_in.slice(s![.., offset..offset + dim]).to_owned()))
        })
    }

    pub fn apply_actor_gradient(&mut self, grads: &PolicyGrads) -> Result<()> {
        self.actor_opt.step(&mut self.actor, grads)
    }

    pub fn soft_update_targets(&mut self) -> Result<()> {
        soft_update(&mut self.critic_target, &self.critic, self.tau)?;
        self.actor_target.soft_update_from(&self.actor, self.tau)
    }
}

/// A sampled mini-batch of local transitions.
#[derive(Clone, Debug)]
pub struct Batch {
    pub states: Array2<f64>,
    pub raw_actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
    pub dones: Array1<f64>,
}

impl Batch {
    pub fn from_transitions(items: &[&Transition]) -> Self {
        Self {
            states: stack_rows(items.iter().map(|t| t.state.as_slice())),
            raw_actions: stack_rows(items.iter().map(|t| t.raw_action.as_slice())),
            rewards: items.iter().map(|t| t.reward).collect(),
            next_states: stack_rows(items.iter().map(|t| t.next_state.as_slice())),
            dones: items.iter().map(|t| if t.done { 1.0 } else { 0.0 }).collect(),
        }
    }
}

/// Decentralized DDPG agent: its critic sees only the local state and its own
/// action, and it learns from its own buffer.
#[derive(Clone, Debug)]
pub struct DdpgAgent {
    pub learner: Learner,
    pub buffer: ReplayBuffer<Transition>,
    pub hyper: AgentHyperparams,
}

impl DdpgAgent {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        projector: ActionProjector,
        arch: &Architecture,
        hyper: AgentHyperparams,
        rng: &mut R,
    ) -> Result<Self> {
        let critic_input = state_dim + projector.dim();
        let learner = Learner::new(state_dim, critic_input, projector, arch, &hyper, rng)?;
        Ok(Self::from_learner(learner, hyper))
    }

    pub fn from_learner(learner: Learner, hyper: AgentHyperparams) -> Self {
        Self {
            buffer: ReplayBuffer::new(hyper.buffer_capacity),
            learner,
            hyper,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.learner.actor.input_dim()
    }

    pub fn act<R: Rng + ?Sized>(&self, state: &[f64], sigma: f64, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
        self.learner.act(state, sigma, rng)
    }

    pub fn store(&mut self, transition: Transition) {
        self.buffer.store(transition);
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Batch> {
        let items = self.buffer.sample(self.hyper.batch_size, rng)?;
        Ok(Batch::from_transitions(&items))
    }

    /// `r + gamma (1 - done) Q'(s', project(actor'(s')))`.
    pub fn td_targets(&self, batch: &Batch) -> Result<Array1<f64>> {
        let next_actions = self.learner.target_actions(batch.next_states.view())?;
        let inputs = hconcat(&[batch.next_states.view(), next_actions.view()]);
        let q_next = self.learner.critic_target.predict(inputs.view())?;
        let bootstrap = (1.0 - &batch.dones) * q_next.column(0) * self.hyper.gamma;
        Ok(&batch.rewards + &bootstrap)
    }

    pub fn critic_update(&mut self, batch: &Batch) -> Result<f64> {
        let targets = self.td_targets(batch)?;
        let actions = self.learner.projector.project_batch(batch.raw_actions.view());
        let inputs = hconcat(&[batch.states.view(), actions.view()]);
        self.learner.critic_fit(inputs.view(), targets.view())
    }

    /// Policy-gradient ascent on `Q(s, project(actor(s)))`, then soft target
    /// updates. Returns the mean Q before the step.
    pub fn actor_update(&mut self, batch: &Batch) -> Result<f64> {
        let states = batch.states.view();
        let (objective, grads) = self
            .learner
            .actor_gradient(states, states.ncols(), |a| hconcat(&[states, a]))?;
        self.learner.apply_actor_gradient(&grads)?;
        self.learner.soft_update_targets()?;
        Ok(objective)
    }

    /// One critic and one actor update on a fresh batch, if enough data is
    /// buffered. Returns `(critic_loss, actor_objective)`.
    pub fn train_step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Option<(f64, f64)>> {
        if self.buffer.len() < self.hyper.batch_size {
            return Ok(None);
        }
        let batch = self.sample(rng)?;
        let critic_loss = self.critic_update(&batch)?;
        let objective = self.actor_update(&batch)?;
        Ok(Some((critic_loss, objective)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Layer};
    use crate::rng;
    use crate::world::WorldConfig;
    use ndarray::Array1;

    fn tiny_arch() -> Architecture {
        Architecture {
            trunk: vec![16, 16],
            branch: vec![8],
            critic: vec![16],
        }
    }

    fn tiny_agent(seed: u64, hyper: AgentHyperparams) -> DdpgAgent {
        let cfg = WorldConfig {
            num_devices: 2,
            ..Default::default()
        };
        let proj = ActionProjector::new(ActionStyle::MultiBranch(OffloadWiring::PreferenceGated), &cfg, 1);
        DdpgAgent::new(5, proj, &tiny_arch(), hyper, &mut rng::stream(seed, "agent")).unwrap()
    }

    fn random_batch(agent: &DdpgAgent, n: usize, seed: u64) -> Batch {
        let mut r = rng::stream(seed, "batch");
        let dim = agent.learner.projector.dim();
        let items: Vec<Transition> = (0..n)
            .map(|_| Transition {
                state: (0..5).map(|_| r.random_range(0.0..1.0)).collect(),
                raw_action: warmup_raw(dim, &mut r),
                reward: r.random_range(-2.0..0.0),
                next_state: (0..5).map(|_| r.random_range(0.0..1.0)).collect(),
                done: r.random_bool(0.3),
            })
            .collect();
        Batch::from_transitions(&items.iter().collect::<Vec<_>>())
    }

    #[test]
    fn noise_schedule() {
        let h = AgentHyperparams {
            noise_decay_episodes: 100,
            ..Default::default()
        };
        assert_eq!(h.noise_sigma(0), 0.2);
        assert!((h.noise_sigma(50) - 0.105).abs() < 1e-12);
        assert_eq!(h.noise_sigma(100), 0.01);
        assert_eq!(h.noise_sigma(5000), 0.01);
    }

    #[test]
    fn targets_start_equal_to_online() {
        let a = tiny_agent(1, AgentHyperparams::default());
        assert_eq!(a.learner.actor, a.learner.actor_target);
        assert_eq!(a.learner.critic, a.learner.critic_target);
    }

    #[test]
    fn act_is_deterministic_without_noise() {
        let a = tiny_agent(2, AgentHyperparams::default());
        let s = [0.1, 0.2, 0.3, 0.4, 0.5];
        let x = a.act(&s, 0.0, &mut rng::stream(1, "n")).unwrap();
        let y = a.act(&s, 0.0, &mut rng::stream(2, "n")).unwrap();
        assert_eq!(x, y);
        let z = a.act(&s, 0.2, &mut rng::stream(1, "n")).unwrap();
        assert_ne!(x.0, z.0);
    }

    #[test]
    fn myopic_and_terminal_targets() {
        let a = tiny_agent(3, AgentHyperparams {
            gamma: 0.0,
            ..Default::default()
        });
        let b = random_batch(&a, 16, 1);
        assert_eq!(a.td_targets(&b).unwrap(), b.rewards);

        let mut a = tiny_agent(3, AgentHyperparams::default());
        let mut b = random_batch(&a, 16, 1);
        b.dones.fill(1.0);
        assert_eq!(a.td_targets(&b).unwrap(), b.rewards);
        // and the update still runs
        a.critic_update(&b).unwrap();
    }

    #[test]
    fn linear_critic_step_reduces_loss() {
        let mut a = tiny_agent(4, AgentHyperparams {
            critic_lr: 1e-3,
            ..Default::default()
        });
        let in_dim = 5 + a.learner.projector.dim();
        let linear = Mlp::new(in_dim, &[(1, Activation::Linear)], &mut rng::stream(4, "lin")).unwrap();
        a.learner = Learner::from_networks(a.learner.actor.clone(), linear, a.learner.projector.clone(), &a.hyper);
        let b = random_batch(&a, 1, 9);
        let targets = a.td_targets(&b).unwrap();
        let actions = a.learner.projector.project_batch(b.raw_actions.view());
        let inputs = hconcat(&[b.states.view(), actions.view()]);
        let before = a.learner.critic_fit(inputs.view(), targets.view()).unwrap();
        let q = a.learner.critic.predict(inputs.view()).unwrap();
        let after = (q[[0, 0]] - targets[0]).powi(2);
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn constant_critic_leaves_actor_unchanged() {
        let mut a = tiny_agent(5, AgentHyperparams::default());
        let in_dim = 5 + a.learner.projector.dim();
        let constant = Mlp::from_layers(vec![Layer {
            weights: Array2::zeros((1, in_dim)),
            biases: Array1::from(vec![3.5]),
            activation: Activation::Linear,
        }])
        .unwrap();
        a.learner = Learner::from_networks(a.learner.actor.clone(), constant, a.learner.projector.clone(), &a.hyper);
        let before = a.learner.actor.clone();
        let b = random_batch(&a, 8, 2);
        let objective = a.actor_update(&b).unwrap();
        assert_eq!(objective, 3.5);
        assert_eq!(a.learner.actor, before);
    }

    #[test]
    fn synthetic_critic_pulls_action_to_target() {
        let mut a = tiny_agent(6, AgentHyperparams {
            actor_lr: 1e-2,
            ..Default::default()
        });
        let dim = a.learner.projector.dim();
        // interior, feasible target: small displacement, shares summing to 1
        let target = Array1::from(vec![0.3, -0.2, 0.1, 0.8, 0.3, 0.7, 0.3, 0.6, 0.2]);
        assert_eq!(target.len(), dim);
        let states = random_batch(&a, 32, 3).states;
        let distance = |l: &Learner| {
            let raw = l.actor.predict(states.view()).unwrap();
            let n = l.projector.project_batch(raw.view());
            (&n - &target).mapv(|v| v * v).sum() / n.nrows() as f64
        };
        let start = distance(&a.learner);
        for _ in 0..300 {
            let (_, g) = a
                .learner
                .actor_gradient_with(states.view(), |actions| {
                    let diff = &actions - &target;
                    let values = diff.mapv(|v| -v * v).sum_axis(Axis(1));
                    Ok((values, diff * -2.0))
                })
                .unwrap();
            a.learner.apply_actor_gradient(&g).unwrap();
        }
        let end = distance(&a.learner);
        assert!(end < 0.1 * start, "{start} -> {end}");
    }

    #[test]
    fn train_step_waits_for_a_batch() {
        let mut a = tiny_agent(7, AgentHyperparams {
            batch_size: 4,
            buffer_capacity: 16,
            ..Default::default()
        });
        let mut r = rng::stream(1, "t");
        assert!(a.train_step(&mut r).unwrap().is_none());
        let b = random_batch(&a, 4, 5);
        for i in 0..4 {
            a.store(Transition {
                state: b.states.row(i).to_vec(),
                raw_action: b.raw_actions.row(i).to_vec(),
                reward: b.rewards[i],
                next_state: b.next_states.row(i).to_vec(),
                done: b.dones[i] > 0.5,
            });
        }
        let (loss, _) = a.train_step(&mut r).unwrap().unwrap();
        assert!(loss.is_finite());
        assert_ne!(a.learner.actor, a.learner.actor_target);
    }
}
