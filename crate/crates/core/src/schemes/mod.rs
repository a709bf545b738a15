//! Training regimes and the shared evaluation protocol.
//!
//! | scheme        | actor input                    | critic input                | buffer          |
//! |---------------|--------------------------------|-----------------------------|-----------------|
//! | `dtde`        | own observation + messages     | own state and action        | own             |
//! | `dtde_no_msg` | own observation, zero messages | own state and action        | own             |
//! | `naive_actor` | as `dtde`, single-head actor   | own state and action        | own             |
//! | `separated`   | as `dtde`, displacement only   | own state and displacement  | own             |
//! | `ctde`        | as `dtde`                      | all states and actions      | shared, joint   |
//! | `ctce`        | all observations               | all observations and action | central         |
//!
//! Every regime plays the same environment; one slot consists of acting,
//! stepping, storing and then one update per learner.

mod checkpoint;
mod control;
mod evaluate;
mod learners;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use checkpoint::{Checkpoint, CHECKPOINT_SCHEMA_VERSION};
pub use control::{heuristic_resources, Controller, Decision, LocalView, TeamPolicy};
pub use evaluate::{eval_env, evaluate, run_episode, EpisodeStats, EvalProtocol, EvalSummary, Moments};
pub use learners::{run_workers, JointTransition, LearnerSet, NetworkDocuments, UpdateLosses};

use crate::agent::{warmup_raw, AgentHyperparams, Architecture, OffloadWiring, ReplayBuffer, Transition};
use crate::env::{AgentMessage, Env, LocalObservation};
use crate::rng::{self, StreamRng};
use crate::world::WorldConfig;
use crate::{Error, Result};

use evaluate::StatsAccumulator;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeId {
    Dtde,
    Ctde,
    Ctce,
    DtdeNoMsg,
    NaiveActor,
    Separated,
}

impl SchemeId {
    pub const ALL: [SchemeId; 6] = [
        SchemeId::Dtde,
        SchemeId::Ctde,
        SchemeId::Ctce,
        SchemeId::DtdeNoMsg,
        SchemeId::NaiveActor,
        SchemeId::Separated,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeId::Dtde => "dtde",
            SchemeId::Ctde => "ctde",
            SchemeId::Ctce => "ctce",
            SchemeId::DtdeNoMsg => "dtde_no_msg",
            SchemeId::NaiveActor => "naive_actor",
            SchemeId::Separated => "separated",
        }
    }

    /// Whether each UAV learns only from what it observes, receives and stores.
    pub fn is_decentralized(self) -> bool {
        !matches!(self, SchemeId::Ctde | SchemeId::Ctce)
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::config("scheme", format!("unknown scheme `{s}`")))
    }
}

/// Everything a training run depends on besides the scheme and the seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeConfig {
    pub world: WorldConfig,
    pub agent: AgentHyperparams,
    pub arch: Architecture,
    pub wiring: OffloadWiring,
    pub episodes: usize,
    /// Frames per training episode.
    pub train_frames: usize,
    pub eval: EvalProtocol,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig::default(),
            agent: AgentHyperparams::default(),
            arch: Architecture::default(),
            wiring: OffloadWiring::default(),
            episodes: 3000,
            train_frames: 1,
            eval: EvalProtocol::default(),
        }
    }
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.agent.validate()?;
        self.arch.validate()?;
        if self.train_frames == 0 {
            return Err(Error::config("train_frames", "must be >= 1"));
        }
        if self.eval.frames == 0 {
            return Err(Error::config("eval.frames", "must be >= 1"));
        }
        if self.eval.every > 0 && self.eval.seeds.is_empty() {
            return Err(Error::config("eval.seeds", "must not be empty when evaluation is enabled"));
        }
        Ok(())
    }

    fn eval_due(&self, episode: usize) -> bool {
        self.eval.every > 0 && (episode.is_multiple_of(self.eval.every) || episode + 1 == self.episodes)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    /// Training-episode device energy per device and frame, J.
    pub mean_device_energy_j: f64,
    pub completion_fraction: f64,
    pub collision_events: usize,
    /// Mean over the episode's updates of `-Q`; `None` before learning starts.
    pub actor_loss: Option<f64>,
    pub critic_loss: Option<f64>,
    pub wallclock_s: f64,
    pub eval: Option<EvalSummary>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub records: Vec<EpisodeRecord>,
}

impl TrainReport {
    /// `(episode, noise-free mean device energy)` of every evaluation point.
    pub fn eval_curve(&self) -> Vec<(usize, f64)> {
        self.records
            .iter()
            .filter_map(|r| r.eval.as_ref().map(|e| (r.episode, e.mean_device_energy.mean)))
            .collect()
    }
}

/// What a decentralized UAV had access to when it acted.
#[derive(Debug)]
pub struct AuditEvent<'a> {
    pub episode: usize,
    pub slot: usize,
    pub uav: usize,
    pub observation: &'a LocalObservation,
    pub inbox: Option<&'a [AgentMessage]>,
    /// The actor input built from `observation` and `inbox`.
    pub input: &'a [f64],
    pub buffer: &'a ReplayBuffer<Transition>,
}

#[derive(Default)]
pub struct TrainOptions<'a> {
    /// Worker threads for the per-learner updates; results do not depend on it.
    pub threads: usize,
    /// Called for every decentralized actor decision.
    pub audit: Option<&'a mut dyn FnMut(&AuditEvent<'_>)>,
    /// Called after every episode.
    pub progress: Option<&'a mut dyn FnMut(&EpisodeRecord)>,
}

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct Trained {
    pub scheme: SchemeId,
    pub config: SchemeConfig,
    pub controller: Controller,
    pub learners: LearnerSet,
    pub report: TrainReport,
}

impl Trained {
    pub fn policy(&self) -> TeamPolicy {
        let actors = self.learners.actors().into_iter().cloned().collect();
        TeamPolicy::new(self.controller.clone(), actors).expect("actors built by the controller")
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            scheme: self.scheme,
            config: self.config.clone(),
            episodes_trained: self.report.records.len(),
            noise_sigma: self.config.agent.noise_sigma(self.report.records.len()),
            networks: self.learners.to_documents(),
        }
    }
}

pub fn train(scheme: SchemeId, config: &SchemeConfig, seed: u64) -> Result<Trained> {
    train_with(scheme, config, seed, TrainOptions::default())
}

pub fn train_with(scheme: SchemeId, config: &SchemeConfig, seed: u64, mut options: TrainOptions<'_>) -> Result<Trained> {
    config.validate()?;
    let controller = Controller::new(scheme, &config.world, config.wiring);
    let mut learners = LearnerSet::new(&controller, &config.arch, &config.agent, seed)?;
    let mut env = Env::new(config.world.clone(), config.train_frames, None, rng::stream(seed, "env"))?;
    let mut noise: Vec<StreamRng> = (0..controller.num_actors())
        .map(|i| rng::stream(seed, &format!("noise/{i}")))
        .collect();
    let dim = controller.projector().dim();
    let mut steps = 0usize;
    let mut report = TrainReport::default();
    let started = Instant::now();

    for episode in 0..config.episodes {
        let wrap = |source: Error| {
            if source.is_divergence() {
                Error::EpisodeDiverged {
                    episode,
                    source: Box::new(source),
                }
            } else {
                source
            }
        };
        if episode > 0 {
            env.reset().map_err(wrap)?;
        }
        let sigma = config.agent.noise_sigma(episode);
        let mut stats = StatsAccumulator::default();
        let (mut critic_sum, mut actor_sum, mut updates) = (0.0, 0.0, 0usize);
        loop {
            let state = env.state().clone();
            if let Some(audit) = options.audit.as_deref_mut() {
                if scheme.is_decentralized() {
                    for (uav, view) in controller.local_views(&state).iter().enumerate() {
                        let input = view.encode(&config.world);
                        audit(&AuditEvent {
                            episode,
                            slot: state.slot_index,
                            uav,
                            observation: &view.observation,
                            inbox: view.inbox.as_deref(),
                            input: &input,
                            buffer: learners.local_buffer(uav).expect("decentralized learners"),
                        });
                    }
                }
            }
            let inputs = controller.inputs(&state);
            let raw = if steps < config.agent.warmup_steps {
                noise.iter_mut().map(|r| warmup_raw(dim, r)).collect()
            } else {
                learners
                    .learners()
                    .iter()
                    .zip(&inputs)
                    .zip(noise.iter_mut())
                    .map(|((l, x), r)| l.act(x, sigma, r).map(|(raw, _)| raw))
                    .collect::<Result<Vec<_>>>()
                    .map_err(wrap)?
            };
            let decision = controller.decide(&state, inputs, raw).map_err(wrap)?;
            let step = env.step(&decision.actions).map_err(wrap)?;
            stats.push(&step);
            let next_inputs = controller.inputs(env.state());
            learners.store(decision.inputs, decision.raw, &step.local_rewards, next_inputs, step.done);
            steps += 1;
            if steps >= config.agent.warmup_steps {
                if let Some(losses) = learners.update(options.threads).map_err(wrap)? {
                    critic_sum += losses.critic;
                    actor_sum += losses.actor;
                    updates += 1;
                }
            }
            if step.done {
                break;
            }
        }

        let ep = stats.finish(config.world.num_devices, config.train_frames);
        let mean = |sum: f64| (updates > 0).then(|| sum / updates as f64);
        let eval = if config.eval_due(episode) {
            let policy = TeamPolicy::new(controller.clone(), learners.actors().into_iter().cloned().collect())?;
            Some(evaluate(&policy, &config.eval, None).map_err(wrap)?)
        } else {
            None
        };
        let record = EpisodeRecord {
            episode,
            mean_device_energy_j: ep.mean_device_energy,
            completion_fraction: ep.completion_fraction,
            collision_events: ep.collision_events,
            actor_loss: mean(actor_sum),
            critic_loss: mean(critic_sum),
            wallclock_s: started.elapsed().as_secs_f64(),
            eval,
        };
        if let Some(progress) = options.progress.as_deref_mut() {
            progress(&record);
        }
        report.records.push(record);
    }

    Ok(Trained {
        scheme,
        config: config.clone(),
        controller,
        learners,
        report,
    })
}
