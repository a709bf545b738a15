//! From global state to actor inputs, and from raw actor outputs to the
//! feasible per-UAV actions the environment executes.

use crate::agent::{ActionProjector, ActionStyle, OffloadWiring, PolicyNet};
use crate::env::{emit_message, inbox, local_state_dim, observation_dim, observe, AgentMessage, GlobalState, LocalAction, LocalObservation};
use crate::world::{apply_uav_displacement, channel_gain, offload_capacity, uplink_rate, Vec3, WorldConfig};
use crate::{Error, Result};

use super::SchemeId;

/// What one decentralized actor is allowed to see in a slot.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalView {
    pub observation: LocalObservation,
    /// `None` when messages are withheld (zero-filled block).
    pub inbox: Option<Vec<AgentMessage>>,
}

impl LocalView {
    pub fn encode(&self, config: &WorldConfig) -> Vec<f64> {
        self.observation.encode(self.inbox.as_deref(), config)
    }
}

/// The actions of one slot together with everything needed to learn from it.
#[derive(Clone, Debug)]
pub struct Decision {
    /// Actor inputs, one per actor.
    pub inputs: Vec<Vec<f64>>,
    /// Raw actor outputs including exploration noise.
    pub raw: Vec<Vec<f64>>,
    pub actions: Vec<LocalAction>,
}

/// Static wiring of a scheme: who observes what and how raw outputs become
/// environment actions.
#[derive(Clone, Debug, PartialEq)]
pub struct Controller {
    scheme: SchemeId,
    world: WorldConfig,
    projector: ActionProjector,
}

impl Controller {
    pub fn new(scheme: SchemeId, world: &WorldConfig, wiring: OffloadWiring) -> Self {
        let style = match scheme {
            SchemeId::NaiveActor => ActionStyle::Naive,
            SchemeId::Separated => ActionStyle::DisplacementOnly,
            _ => ActionStyle::MultiBranch(wiring),
        };
        let agents = if scheme == SchemeId::Ctce { world.num_uavs } else { 1 };
        Self {
            scheme,
            world: world.clone(),
            projector: ActionProjector::new(style, world, agents),
        }
    }

    pub fn scheme(&self) -> SchemeId {
        self.scheme
    }

    pub fn world(&self) -> &WorldConfig {
        &self.world
    }

    /// Projector of a single actor.
    pub fn projector(&self) -> &ActionProjector {
        &self.projector
    }

    pub fn num_actors(&self) -> usize {
        if self.scheme == SchemeId::Ctce {
            1
        } else {
            self.world.num_uavs
        }
    }

    pub fn input_dim(&self) -> usize {
        match self.scheme {
            SchemeId::Ctce => self.world.num_uavs * observation_dim(&self.world),
            _ => local_state_dim(&self.world),
        }
    }

    /// Per-UAV views; empty for the central scheme, which sees everything.
    pub fn local_views(&self, state: &GlobalState) -> Vec<LocalView> {
        if self.scheme == SchemeId::Ctce {
            return Vec::new();
        }
        let nu = self.world.num_uavs;
        let messages: Vec<AgentMessage> = (0..nu).map(|u| emit_message(state, u)).collect();
        (0..nu)
            .map(|u| LocalView {
                observation: observe(state, u, &self.world),
                inbox: (self.scheme != SchemeId::DtdeNoMsg).then(|| inbox(&messages, u)),
            })
            .collect()
    }

    pub fn inputs(&self, state: &GlobalState) -> Vec<Vec<f64>> {
        if self.scheme == SchemeId::Ctce {
            let global = (0..self.world.num_uavs)
                .flat_map(|u| observe(state, u, &self.world).encode_observation(&self.world))
                .collect();
            return vec![global];
        }
        self.local_views(state).iter().map(|v| v.encode(&self.world)).collect()
    }

    /// Turns raw actor outputs into environment actions.
    pub fn decide(&self, state: &GlobalState, inputs: Vec<Vec<f64>>, raw: Vec<Vec<f64>>) -> Result<Decision> {
        if raw.len() != self.num_actors() {
            return Err(Error::Shape(format!("expected {} raw actions, got {}", self.num_actors(), raw.len())));
        }
        let mut actions = Vec::with_capacity(self.world.num_uavs);
        for r in &raw {
            if r.len() != self.projector.dim() {
                return Err(Error::Shape(format!("raw action width {} != {}", r.len(), self.projector.dim())));
            }
            if !r.iter().all(|v| v.is_finite()) {
                return Err(Error::Diverged("non-finite raw action".into()));
            }
            actions.extend(self.projector.local_actions(&self.projector.project(r)));
        }
        if self.scheme == SchemeId::Separated {
            let moves: Vec<Vec3> = actions.iter().map(|a| a.displacement).collect();
            actions = heuristic_resources(state, &moves, &self.world)?;
        }
        Ok(Decision { inputs, raw, actions })
    }
}

/// Resource management of the separated design, evaluated at the poses the
/// UAVs reach with `displacements`: each device joins the UAV with the highest
/// channel gain (ties to the lower index), every UAV splits its CPU equally
/// among its devices, and each device offloads what the link and VM can carry
/// within one slot.
pub fn heuristic_resources(state: &GlobalState, displacements: &[Vec3], config: &WorldConfig) -> Result<Vec<LocalAction>> {
    let (nu, nd) = (config.num_uavs, config.num_devices);
    let poses: Vec<_> = state
        .uavs
        .iter()
        .zip(displacements)
        .map(|(p, &m)| apply_uav_displacement(p, m, config))
        .collect();
    let mut serving = vec![0usize; nd];
    let mut gains = vec![0.0; nd];
    for (d, dev) in state.devices.iter().enumerate() {
        let mut best = (0, f64::NEG_INFINITY);
        for (u, pose) in poses.iter().enumerate() {
            let g = channel_gain(pose, dev.position, config)?;
            if g > best.1 {
                best = (u, g);
            }
        }
        serving[d] = best.0;
        gains[d] = best.1;
    }
    let mut actions: Vec<LocalAction> = displacements
        .iter()
        .map(|&displacement| LocalAction {
            displacement,
            preference: vec![0.0; nd],
            cpu_alloc: vec![0.0; nd],
            offload_ratio: vec![0.0; nd],
        })
        .collect();
    for u in 0..nu {
        let members: Vec<usize> = (0..nd).filter(|&d| serving[d] == u).collect();
        if members.is_empty() {
            continue;
        }
        let share = config.cpu_capacity_max / members.len() as f64;
        for d in members {
            let a = &mut actions[u];
            a.preference[d] = 1.0;
            a.cpu_alloc[d] = share;
            let remaining = state.devices[d].remaining_bits;
            if remaining > 0.0 {
                let cap = offload_capacity(uplink_rate(gains[d], config), share, config);
                a.offload_ratio[d] = (cap / remaining).min(1.0);
            }
        }
    }
    Ok(actions)
}

/// Trained actors of a scheme, detached from their critics.
#[derive(Clone, Debug, PartialEq)]
pub struct TeamPolicy {
    controller: Controller,
    actors: Vec<PolicyNet>,
}

impl TeamPolicy {
    pub fn new(controller: Controller, actors: Vec<PolicyNet>) -> Result<Self> {
        if actors.len() != controller.num_actors() {
            return Err(Error::Shape(format!(
                "{} needs {} actors, got {}",
                controller.scheme(),
                controller.num_actors(),
                actors.len()
            )));
        }
        for a in &actors {
            if a.input_dim() != controller.input_dim() || a.output_dim() != controller.projector().dim() {
                return Err(Error::Shape(format!(
                    "actor maps {} -> {}, scheme needs {} -> {}",
                    a.input_dim(),
                    a.output_dim(),
                    controller.input_dim(),
                    controller.projector().dim()
                )));
            }
        }
        Ok(Self { controller, actors })
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }

    pub fn actors(&self) -> &[PolicyNet] {
        &self.actors
    }

    /// Noise-free decision.
    pub fn act(&self, state: &GlobalState) -> Result<Decision> {
        let inputs = self.controller.inputs(state);
        let raw = self
            .actors
            .iter()
            .zip(&inputs)
            .map(|(a, x)| a.predict_one(x))
            .collect::<Result<Vec<_>>>()?;
        self.controller.decide(state, inputs, raw)
    }
}
