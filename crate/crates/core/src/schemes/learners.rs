//! Learner sets of the training regimes and their per-slot updates.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::agent::{
    hconcat, stack_rows, AgentHyperparams, Architecture, DdpgAgent, Learner, PolicyDocument,
    PolicyNet, ReplayBuffer, Transition,
};
use crate::nn::MlpDocument;
use crate::rng::{self, StreamRng};
use crate::Result;

use super::control::Controller;
use super::SchemeId;

/// One slot of every UAV at once, kept by the centralized critics.
#[derive(Clone, Debug, PartialEq)]
pub struct JointTransition {
    pub states: Vec<Vec<f64>>,
    pub raw_actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub next_states: Vec<Vec<f64>>,
    pub done: bool,
}

/// An agent together with its private sampling stream.
#[derive(Clone, Debug)]
pub struct Worker {
    pub agent: DdpgAgent,
    pub rng: StreamRng,
}

#[derive(Clone, Debug)]
pub enum LearnerSet {
    /// Own critic and buffer per UAV.
    Independent(Vec<Worker>),
    /// Own actor and critic per UAV; critics see all states and actions and
    /// share one buffer of joint transitions.
    Joint {
        learners: Vec<Learner>,
        rngs: Vec<StreamRng>,
        buffer: ReplayBuffer<JointTransition>,
        hyper: AgentHyperparams,
    },
    /// One coordinator acting for all UAVs.
    Central(Worker),
}

/// Mean losses of one update round.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateLosses {
    pub critic: f64,
    pub actor: f64,
}

/// Runs `f` over `items`, split across up to `threads` scoped threads. Results
/// keep the item order, so the outcome does not depend on `threads`.
pub fn run_workers<T: Send, R: Send>(
    items: &mut [T],
    threads: usize,
    f: impl Fn(&mut T) -> Result<R> + Sync,
) -> Result<Vec<R>> {
    if threads <= 1 || items.len() <= 1 {
        return items.iter_mut().map(&f).collect();
    }
    let total = items.len();
    let chunk = total.div_ceil(threads);
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks_mut(chunk)
            .map(|part| {
                let f = &f;
                scope.spawn(move || part.iter_mut().map(f).collect::<Result<Vec<R>>>())
            })
            .collect();
        let mut out = Vec::with_capacity(total);
        for h in handles {
            out.extend(h.join().expect("update worker panicked")?);
        }
        Ok(out)
    })
}

fn mean_losses(pairs: &[(f64, f64)]) -> UpdateLosses {
    let n = pairs.len() as f64;
    UpdateLosses {
        critic: pairs.iter().map(|p| p.0).sum::<f64>() / n,
        actor: pairs.iter().map(|p| -p.1).sum::<f64>() / n,
    }
}

/// Inputs of one centralized critic update, computed before any network of
/// the round changes.
struct JointBatch {
    critic_inputs: Array2<f64>,
    targets: ndarray::Array1<f64>,
    states: Vec<Array2<f64>>,
    actions: Vec<Array2<f64>>,
}

impl LearnerSet {
    pub fn new(controller: &Controller, arch: &Architecture, hyper: &AgentHyperparams, seed: u64) -> Result<Self> {
        let state_dim = controller.input_dim();
        let projector = controller.projector().clone();
        let worker = |i: usize| -> Result<Worker> {
            let mut rng = rng::stream(seed, &format!("agent/{i}"));
            let agent = DdpgAgent::new(state_dim, projector.clone(), arch, hyper.clone(), &mut rng)?;
            Ok(Worker { agent, rng })
        };
        Ok(match controller.scheme() {
            SchemeId::Ctce => Self::Central(worker(0)?),
            SchemeId::Ctde => {
                let n = controller.num_actors();
                let critic_dim = n * (state_dim + projector.dim());
                let mut learners = Vec::with_capacity(n);
                let mut rngs = Vec::with_capacity(n);
                for i in 0..n {
                    let mut rng = rng::stream(seed, &format!("agent/{i}"));
                    learners.push(Learner::new(state_dim, critic_dim, projector.clone(), arch, hyper, &mut rng)?);
                    rngs.push(rng);
                }
                Self::Joint {
                    learners,
                    rngs,
                    buffer: ReplayBuffer::new(hyper.buffer_capacity),
                    hyper: hyper.clone(),
                }
            }
            _ => Self::Independent((0..controller.num_actors()).map(worker).collect::<Result<_>>()?),
        })
    }

    pub fn learners(&self) -> Vec<&Learner> {
        match self {
            Self::Independent(w) => w.iter().map(|w| &w.agent.learner).collect(),
            Self::Joint { learners, .. } => learners.iter().collect(),
            Self::Central(w) => vec![&w.agent.learner],
        }
    }

    pub fn actors(&self) -> Vec<&PolicyNet> {
        self.learners().into_iter().map(|l| &l.actor).collect()
    }

    pub fn buffer_len(&self) -> usize {
        match self {
            Self::Independent(w) => w.first().map_or(0, |w| w.agent.buffer.len()),
            Self::Joint { buffer, .. } => buffer.len(),
            Self::Central(w) => w.agent.buffer.len(),
        }
    }

    /// Buffer of a decentralized agent.
    pub fn local_buffer(&self, uav: usize) -> Option<&ReplayBuffer<Transition>> {
        match self {
            Self::Independent(w) => w.get(uav).map(|w| &w.agent.buffer),
            _ => None,
        }
    }

    pub fn store(&mut self, states: Vec<Vec<f64>>, raw: Vec<Vec<f64>>, rewards: &[f64], next: Vec<Vec<f64>>, done: bool) {
        match self {
            Self::Independent(workers) => {
                for (((w, s), a), (r, n)) in workers.iter_mut().zip(states).zip(raw).zip(rewards.iter().zip(next)) {
                    w.agent.store(Transition {
                        state: s,
                        raw_action: a,
                        reward: *r,
                        next_state: n,
                        done,
                    });
                }
            }
            Self::Joint { buffer, .. } => buffer.store(JointTransition {
                states,
                raw_actions: raw,
                rewards: rewards.to_vec(),
                next_states: next,
                done,
            }),
            Self::Central(w) => {
                let mut states = states;
                let mut raw = raw;
                let mut next = next;
                w.agent.store(Transition {
                    state: states.swap_remove(0),
                    raw_action: raw.swap_remove(0),
                    reward: rewards.iter().sum(),
                    next_state: next.swap_remove(0),
                    done,
                });
            }
        }
    }

    /// One critic and one actor step per learner, if a batch is available.
    pub fn update(&mut self, threads: usize) -> Result<Option<UpdateLosses>> {
        match self {
            Self::Independent(workers) => {
                let out = run_workers(workers, threads, |w| w.agent.train_step(&mut w.rng))?;
                let pairs: Option<Vec<(f64, f64)>> = out.into_iter().collect();
                Ok(pairs.map(|p| mean_losses(&p)))
            }
            Self::Central(w) => Ok(w.agent.train_step(&mut w.rng)?.map(|p| mean_losses(&[p]))),
            Self::Joint {
                learners,
                rngs,
                buffer,
                hyper,
            } => {
                if buffer.len() < hyper.batch_size {
                    return Ok(None);
                }
                let pairs = joint_update(learners, rngs, buffer, hyper, threads)?;
                Ok(Some(mean_losses(&pairs)))
            }
        }
    }

    pub fn to_documents(&self) -> Vec<NetworkDocuments> {
        self.learners()
            .into_iter()
            .map(|l| NetworkDocuments {
                actor: l.actor.to_document(),
                actor_target: l.actor_target.to_document(),
                critic: l.critic.to_document(),
                critic_target: l.critic_target.to_document(),
            })
            .collect()
    }
}

fn joint_update(
    learners: &mut [Learner],
    rngs: &mut [StreamRng],
    buffer: &ReplayBuffer<JointTransition>,
    hyper: &AgentHyperparams,
    threads: usize,
) -> Result<Vec<(f64, f64)>> {
    // Phase 1 reads every target actor, phase 2 changes only the own
    // learner; the barrier between them keeps both modes identical.
    let shared: &[Learner] = learners;
    let mut jobs: Vec<(usize, &mut StreamRng)> = rngs.iter_mut().enumerate().collect();
    let batches = run_workers(&mut jobs, threads, |(i, rng)| joint_batch(*i, shared, buffer, hyper, rng))?;

    let mut jobs: Vec<(usize, &mut Learner, JointBatch)> = learners
        .iter_mut()
        .zip(batches)
        .enumerate()
        .map(|(i, (l, b))| (i, l, b))
        .collect();
    run_workers(&mut jobs, threads, |(i, learner, batch)| {
        let critic_loss = learner.critic_fit(batch.critic_inputs.view(), batch.targets.view())?;
        let state_block: usize = batch.states.iter().map(|s| s.ncols()).sum();
        let offset = state_block + batch.actions[..*i].iter().map(|a| a.ncols()).sum::<usize>();
        let (objective, grads) = learner.actor_gradient(batch.states[*i].view(), offset, |own| {
            let mut parts: Vec<ArrayView2<'_, f64>> = batch.states.iter().map(|s| s.view()).collect();
            for (j, a) in batch.actions.iter().enumerate() {
                parts.push(if j == *i { own } else { a.view() });
            }
            hconcat(&parts)
        })?;
        learner.apply_actor_gradient(&grads)?;
        learner.soft_update_targets()?;
        Ok((critic_loss, objective))
    })
}

fn joint_batch(
    agent: usize,
    learners: &[Learner],
    buffer: &ReplayBuffer<JointTransition>,
    hyper: &AgentHyperparams,
    rng: &mut StreamRng,
) -> Result<JointBatch> {
    let items = buffer.sample(hyper.batch_size, rng)?;
    let n = learners.len();
    let column = |pick: &dyn Fn(&JointTransition) -> &[f64]| stack_rows(items.iter().map(|t| pick(t)));
    let states: Vec<Array2<f64>> = (0..n).map(|j| column(&|t| &t.states[j])).collect();
    let next_states: Vec<Array2<f64>> = (0..n).map(|j| column(&|t| &t.next_states[j])).collect();
    let actions: Vec<Array2<f64>> = (0..n)
        .map(|j| learners[j].projector.project_batch(column(&|t| &t.raw_actions[j]).view()))
        .collect();
    let next_actions = (0..n)
        .map(|j| learners[j].target_actions(next_states[j].view()))
        .collect::<Result<Vec<_>>>()?;

    let join = |s: &[Array2<f64>], a: &[Array2<f64>]| {
        let parts: Vec<ArrayView2<'_, f64>> = s.iter().chain(a).map(|m| m.view()).collect();
        hconcat(&parts)
    };
    let next_inputs = join(&next_states, &next_actions);
    let q_next = learners[agent].critic_target.predict(next_inputs.view())?;
    let targets = items
        .iter()
        .zip(q_next.column(0))
        .map(|(t, q)| t.rewards[agent] + if t.done { 0.0 } else { hyper.gamma * q })
        .collect();
    Ok(JointBatch {
        critic_inputs: join(&states, &actions),
        targets,
        states,
        actions,
    })
}

/// Weights of one learner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkDocuments {
    pub actor: PolicyDocument,
    pub actor_target: PolicyDocument,
    pub critic: MlpDocument,
    pub critic_target: MlpDocument,
}

impl NetworkDocuments {
    pub fn learner(&self, controller: &Controller, hyper: &AgentHyperparams) -> Result<Learner> {
        Ok(Learner::from_checkpoint(
            PolicyNet::from_document(&self.actor)?,
            PolicyNet::from_document(&self.actor_target)?,
            crate::nn::Mlp::from_document(&self.critic)?,
            crate::nn::Mlp::from_document(&self.critic_target)?,
            controller.projector().clone(),
            hyper,
        ))
    }
}
