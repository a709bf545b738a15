//! Episodic multi-agent environment over the world model.
//!
//! One slot proceeds in a fixed order: UAVs move, devices are associated,
//! tasks are uploaded and computed against the new UAV poses, devices move,
//! rewards are assigned. An episode spans one or more frames; task volumes are
//! re-drawn at every frame boundary.
//!
//! # Local state layout
//!
//! For `U` UAVs and `D` devices the local state of UAV `u` is the
//! concatenation of
//!
//! | block                         | width           | scaling                          |
//! |-------------------------------|-----------------|----------------------------------|
//! | own position                  | 3               | x/side, y/side, altitude band    |
//! | own previous CPU allocation   | D               | / cpu_capacity_max               |
//! | own previous offload ratios   | D               | as is                            |
//! | device positions (x, y)       | 2D              | / side                           |
//! | remaining task fraction       | D               | remaining / initial              |
//! | slot phase within frame       | 1               | slot / slots_per_frame           |
//! | messages of the other UAVs    | (U - 1)(3 + D)  | position as above, preferences   |
//!
//! Messages appear in increasing UAV index order, skipping `u`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::StreamRng;
use crate::world::{
    self, apply_uav_displacement, channel_gain, slot_execute, step_device_mobility, uplink_rate,
    DeviceState, SlotOutcome, UavPose, Vec2, Vec3, WorldConfig,
};
use crate::{Error, Result};

/// Relative slack allowed on the CPU capacity sum of an incoming action.
pub const CAPACITY_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalState {
    pub slot_index: usize,
    pub devices: Vec<DeviceState>,
    pub uavs: Vec<UavPose>,
    /// UAV x device, cycles/s actually applied in the previous slot.
    pub prev_cpu_alloc: Vec<Vec<f64>>,
    /// UAV x device, ratios actually applied in the previous slot.
    pub prev_offload_ratio: Vec<Vec<f64>>,
    /// UAV x device, association preferences announced in the previous slot.
    pub prev_preference: Vec<Vec<f64>>,
}

/// One UAV's decision for a slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalAction {
    pub displacement: Vec3,
    pub preference: Vec<f64>,
    pub cpu_alloc: Vec<f64>,
    pub offload_ratio: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentMessage {
    pub uav_position: Vec3,
    pub preference: Vec<f64>,
}

/// What a UAV observes by itself, before messages are attached.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalObservation {
    pub uav: usize,
    pub position: Vec3,
    pub prev_cpu_alloc: Vec<f64>,
    pub prev_offload_ratio: Vec<f64>,
    pub device_positions: Vec<Vec2>,
    pub remaining_fraction: Vec<f64>,
    pub slot_phase: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    /// Device energy spent in this slot, joules.
    pub energy_per_device: Vec<f64>,
    /// `None` with a single UAV.
    pub min_separation: Option<f64>,
    /// Whether any UAV pair was closer than the separation threshold.
    pub collision: bool,
    /// Fraction of the current frame's task bits already processed.
    pub completion_fraction: f64,
    /// Set on the last slot of a frame: unfinished fraction per device.
    pub frame_unfinished: Option<Vec<f64>>,
    /// Cumulative time (seconds into the frame) at which each device finished
    /// during this slot, if it did.
    pub finished_at: Vec<Option<f64>>,
    /// Linear gain between each device and its serving UAV in this slot.
    pub serving_gain: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub local_rewards: Vec<f64>,
    pub outcomes: Vec<SlotOutcome>,
    pub assignment: Vec<usize>,
    pub done: bool,
    pub diagnostics: Diagnostics,
}

/// Pinned scenario values; `null` entries fall back to random draws.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fixture {
    #[serde(default)]
    pub device_positions: Option<Vec<Option<Vec2>>>,
    #[serde(default)]
    pub task_bits: Option<Vec<Option<f64>>>,
    #[serde(default)]
    pub uav_positions: Option<Vec<Vec3>>,
}

impl Fixture {
    pub fn check(&self, config: &WorldConfig) -> Result<()> {
        let check = |field, got: Option<usize>, expected| match got {
            Some(got) if got != expected => Err(Error::FixtureMismatch {
                field,
                got,
                expected,
            }),
            _ => Ok(()),
        };
        check("device_positions", self.device_positions.as_ref().map(Vec::len), config.num_devices)?;
        check("task_bits", self.task_bits.as_ref().map(Vec::len), config.num_devices)?;
        check("uav_positions", self.uav_positions.as_ref().map(Vec::len), config.num_uavs)?;
        Ok(())
    }

    fn task_bits_for(&self, device: usize) -> Option<f64> {
        self.task_bits.as_ref().and_then(|t| t[device])
    }
}

/// Deterministic starting positions: spread along the mid line at mid altitude.
pub fn initial_uav_poses(config: &WorldConfig) -> Vec<UavPose> {
    let u = config.num_uavs as f64;
    let mid_altitude = 0.5 * (config.altitude_min + config.altitude_max);
    (0..config.num_uavs)
        .map(|i| UavPose {
            position: [
                config.region_side * (i as f64 + 0.5) / u,
                0.5 * config.region_side,
                mid_altitude,
            ],
        })
        .collect()
}

/// Starts a new episode.
///
/// Random draws happen in a fixed order whether or not a fixture overrides
/// them, so pinning one quantity leaves every other draw unchanged.
pub fn reset(rng: &mut StreamRng, config: &WorldConfig, fixture: Option<&Fixture>) -> Result<GlobalState> {
    if let Some(f) = fixture {
        f.check(config)?;
    }
    let side = config.region_side;
    let mut devices = Vec::with_capacity(config.num_devices);
    for d in 0..config.num_devices {
        let mut position = [rng.random_range(0.0..=side), rng.random_range(0.0..=side)];
        let heading = rng.random_range(0.0..std::f64::consts::TAU);
        if let Some(Some(p)) = fixture.and_then(|f| f.device_positions.as_ref()).map(|p| p[d]) {
            position = p;
        }
        let mean_velocity = [
            config.mobility.mean_speed * heading.cos(),
            config.mobility.mean_speed * heading.sin(),
        ];
        devices.push(DeviceState {
            position,
            velocity: mean_velocity,
            mean_velocity,
            remaining_bits: 0.0,
            initial_bits: 0.0,
        });
    }
    draw_tasks(&mut devices, rng, config, fixture);

    let uavs = match fixture.and_then(|f| f.uav_positions.as_ref()) {
        Some(p) => p.iter().map(|&position| UavPose { position }).collect(),
        None => initial_uav_poses(config),
    };
    let zeros = vec![vec![0.0; config.num_devices]; config.num_uavs];
    Ok(GlobalState {
        slot_index: 0,
        devices,
        uavs,
        prev_cpu_alloc: zeros.clone(),
        prev_offload_ratio: zeros.clone(),
        prev_preference: zeros,
    })
}

fn draw_tasks(devices: &mut [DeviceState], rng: &mut StreamRng, config: &WorldConfig, fixture: Option<&Fixture>) {
    for (d, dev) in devices.iter_mut().enumerate() {
        let sampled = world::sample_task(rng, config);
        let bits = fixture.and_then(|f| f.task_bits_for(d)).unwrap_or(sampled);
        dev.initial_bits = bits;
        dev.remaining_bits = bits;
    }
}

/// Device-to-UAV matching: highest preference wins, ties go to the lowest index.
pub fn resolve_association(preferences: &[Vec<f64>]) -> Vec<usize> {
    let devices = preferences.first().map_or(0, Vec::len);
    (0..devices)
        .map(|d| {
            let mut best = 0;
            for u in 1..preferences.len() {
                if preferences[u][d] > preferences[best][d] {
                    best = u;
                }
            }
            best
        })
        .collect()
}

pub fn emit_message(state: &GlobalState, uav: usize) -> AgentMessage {
    AgentMessage {
        uav_position: state.uavs[uav].position,
        preference: state.prev_preference[uav].clone(),
    }
}

/// Messages received by `uav`: every other UAV's message in index order.
pub fn inbox(messages: &[AgentMessage], uav: usize) -> Vec<AgentMessage> {
    messages
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != uav)
        .map(|(_, m)| m.clone())
        .collect()
}

pub fn local_state_dim(config: &WorldConfig) -> usize {
    observation_dim(config) + (config.num_uavs - 1) * (3 + config.num_devices)
}

pub fn observation_dim(config: &WorldConfig) -> usize {
    4 + 5 * config.num_devices
}

pub fn observe(state: &GlobalState, uav: usize, config: &WorldConfig) -> LocalObservation {
    LocalObservation {
        uav,
        position: state.uavs[uav].position,
        prev_cpu_alloc: state.prev_cpu_alloc[uav].clone(),
        prev_offload_ratio: state.prev_offload_ratio[uav].clone(),
        device_positions: state.devices.iter().map(|d| d.position).collect(),
        remaining_fraction: state
            .devices
            .iter()
            .map(|d| {
                if d.initial_bits > 0.0 {
                    d.remaining_bits / d.initial_bits
                } else {
                    0.0
                }
            })
            .collect(),
        slot_phase: (state.slot_index % config.slots_per_frame) as f64 / config.slots_per_frame as f64,
    }
}

fn push_position(out: &mut Vec<f64>, p: Vec3, config: &WorldConfig) {
    let band = config.altitude_max - config.altitude_min;
    out.push(p[0] / config.region_side);
    out.push(p[1] / config.region_side);
    out.push(if band > 0.0 {
        (p[2] - config.altitude_min) / band
    } else {
        0.0
    });
}

impl LocalObservation {
    /// Observation features without any message block.
    pub fn encode_observation(&self, config: &WorldConfig) -> Vec<f64> {
        let mut out = Vec::with_capacity(local_state_dim(config));
        push_position(&mut out, self.position, config);
        out.extend(self.prev_cpu_alloc.iter().map(|f| f / config.cpu_capacity_max));
        out.extend(self.prev_offload_ratio.iter().copied());
        for p in &self.device_positions {
            out.push(p[0] / config.region_side);
            out.push(p[1] / config.region_side);
        }
        out.extend(self.remaining_fraction.iter().copied());
        out.push(self.slot_phase);
        out
    }

    /// Full local state; `None` zero-fills the message block.
    pub fn encode(&self, messages: Option<&[AgentMessage]>, config: &WorldConfig) -> Vec<f64> {
        let mut out = self.encode_observation(config);
        match messages {
            Some(msgs) => {
                debug_assert_eq!(msgs.len(), config.num_uavs - 1);
                for m in msgs {
                    push_position(&mut out, m.uav_position, config);
                    out.extend(m.preference.iter().copied());
                }
            }
            None => out.resize(local_state_dim(config), 0.0),
        }
        out
    }
}

pub fn encode_local_state(
    state: &GlobalState,
    uav: usize,
    messages: Option<&[AgentMessage]>,
    config: &WorldConfig,
) -> Vec<f64> {
    observe(state, uav, config).encode(messages, config)
}

fn validate_actions(actions: &[LocalAction], config: &WorldConfig) -> Result<()> {
    if actions.len() != config.num_uavs {
        return Err(Error::Shape(format!(
            "expected {} local actions, got {}",
            config.num_uavs,
            actions.len()
        )));
    }
    let d = config.num_devices;
    for (uav, a) in actions.iter().enumerate() {
        let bad = |reason: String| Err(Error::UnprojectedAction { uav, reason });
        if a.preference.len() != d || a.cpu_alloc.len() != d || a.offload_ratio.len() != d {
            return bad("vector lengths do not match the device count".into());
        }
        if !a.displacement.iter().all(|c| c.is_finite()) {
            return bad("non-finite displacement".into());
        }
        let unit = |x: &f64| (0.0..=1.0).contains(x);
        if !a.preference.iter().all(unit) {
            return bad("preference outside [0, 1]".into());
        }
        if !a.offload_ratio.iter().all(unit) {
            return bad("offload ratio outside [0, 1]".into());
        }
        if !a.cpu_alloc.iter().all(|f| f.is_finite() && *f >= 0.0) {
            return bad("negative or non-finite cpu allocation".into());
        }
        let total: f64 = a.cpu_alloc.iter().sum();
        if total > config.cpu_capacity_max * (1.0 + CAPACITY_TOLERANCE) {
            return bad(format!("cpu allocation {total} exceeds capacity {}", config.cpu_capacity_max));
        }
    }
    Ok(())
}

fn distance_to_nearest_other(uavs: &[UavPose], u: usize) -> Option<f64> {
    uavs.iter()
        .enumerate()
        .filter(|&(i, _)| i != u)
        .map(|(_, p)| world::distance3(p.position, uavs[u].position))
        .reduce(f64::min)
}

/// Advances the global state by one slot.
///
/// `frames` is the episode length in frames; tasks are re-drawn (or re-pinned
/// from `fixture`) after the last slot of every frame except the final one.
pub fn step(
    state: &GlobalState,
    actions: &[LocalAction],
    config: &WorldConfig,
    frames: usize,
    rng: &mut StreamRng,
    fixture: Option<&Fixture>,
) -> Result<(GlobalState, StepResult)> {
    validate_actions(actions, config)?;
    let (nu, nd) = (config.num_uavs, config.num_devices);
    let slots = config.slots_per_frame;
    let slot = config.slot_duration();

    let uavs: Vec<UavPose> = state
        .uavs
        .iter()
        .zip(actions)
        .map(|(pose, a)| apply_uav_displacement(pose, a.displacement, config))
        .collect();

    let preferences: Vec<Vec<f64>> = actions.iter().map(|a| a.preference.clone()).collect();
    let assignment = resolve_association(&preferences);

    let mut devices = state.devices.clone();
    let mut outcomes = Vec::with_capacity(nd);
    let mut serving_gain = Vec::with_capacity(nd);
    let mut finished_at = vec![None; nd];
    let phase_start = (state.slot_index % slots) as f64 * slot;
    for (d, dev) in devices.iter_mut().enumerate() {
        let u = assignment[d];
        let gain = channel_gain(&uavs[u], dev.position, config)?;
        let rate = uplink_rate(gain, config);
        let before = dev.remaining_bits;
        let (outcome, left) = slot_execute(
            before,
            actions[u].offload_ratio[d],
            actions[u].cpu_alloc[d],
            rate,
            config,
        )?;
        if before > 0.0 && left == 0.0 {
            let busy = (outcome.t_uplink + outcome.t_remote_compute).max(outcome.t_local_compute);
            finished_at[d] = Some(phase_start + busy);
        }
        dev.remaining_bits = left;
        outcomes.push(outcome);
        serving_gain.push(gain);
    }

    let energy_per_device: Vec<f64> = outcomes.iter().map(SlotOutcome::energy).collect();
    let frame_end = (state.slot_index + 1).is_multiple_of(slots);
    let frame_unfinished: Option<Vec<f64>> = frame_end.then(|| {
        devices
            .iter()
            .map(|d| {
                if d.initial_bits > 0.0 {
                    d.remaining_bits / d.initial_bits
                } else {
                    0.0
                }
            })
            .collect()
    });

    let mut local_rewards = vec![0.0; nu];
    for u in 0..nu {
        let mut reward = 0.0;
        for d in (0..nd).filter(|&d| assignment[d] == u) {
            reward -= energy_per_device[d];
            if let Some(unfinished) = &frame_unfinished {
                reward -= config.reward.unfinished_per_task * unfinished[d];
            }
        }
        if let Some(nearest) = distance_to_nearest_other(&uavs, u) {
            reward -= config.reward.collision_per_meter * (config.uav_min_separation - nearest).max(0.0);
        }
        local_rewards[u] = reward;
    }

    let min_separation = (nu >= 2).then(|| world::min_uav_separation(&uavs)).transpose()?;
    let collision = min_separation.is_some_and(|s| s < config.uav_min_separation);
    let (total, left): (f64, f64) = devices
        .iter()
        .fold((0.0, 0.0), |(t, l), d| (t + d.initial_bits, l + d.remaining_bits));
    let completion_fraction = if total > 0.0 { 1.0 - left / total } else { 1.0 };

    for dev in devices.iter_mut() {
        *dev = step_device_mobility(dev, rng, config);
    }

    let mut prev_cpu_alloc = vec![vec![0.0; nd]; nu];
    let mut prev_offload_ratio = vec![vec![0.0; nd]; nu];
    for d in 0..nd {
        let u = assignment[d];
        prev_cpu_alloc[u][d] = actions[u].cpu_alloc[d];
        prev_offload_ratio[u][d] = actions[u].offload_ratio[d];
    }

    let slot_index = state.slot_index + 1;
    let budget = frames * slots;
    let last_frame = slot_index > (frames.saturating_sub(1)) * slots;
    let all_done = devices.iter().all(|d| d.remaining_bits == 0.0);
    let done = slot_index >= budget || (all_done && last_frame);
    if frame_end && slot_index < budget {
        draw_tasks(&mut devices, rng, config, fixture);
    }

    let next = GlobalState {
        slot_index,
        devices,
        uavs,
        prev_cpu_alloc,
        prev_offload_ratio,
        prev_preference: preferences,
    };
    let result = StepResult {
        local_rewards,
        outcomes,
        assignment,
        done,
        diagnostics: Diagnostics {
            energy_per_device,
            min_separation,
            collision,
            completion_fraction,
            frame_unfinished,
            finished_at,
            serving_gain,
        },
    };
    Ok((next, result))
}

/// A stateful wrapper pairing a global state with its configuration, random
/// stream, episode length and optional fixture.
#[derive(Clone, Debug)]
pub struct Env {
    config: WorldConfig,
    frames: usize,
    fixture: Option<Fixture>,
    rng: StreamRng,
    state: GlobalState,
}

impl Env {
    pub fn new(config: WorldConfig, frames: usize, fixture: Option<Fixture>, mut rng: StreamRng) -> Result<Self> {
        config.validate()?;
        if frames == 0 {
            return Err(Error::config("frames", "must be >= 1"));
        }
        let state = reset(&mut rng, &config, fixture.as_ref())?;
        Ok(Self {
            config,
            frames,
            fixture,
            rng,
            state,
        })
    }

    pub fn reset(&mut self) -> Result<&GlobalState> {
        self.state = reset(&mut self.rng, &self.config, self.fixture.as_ref())?;
        Ok(&self.state)
    }

    pub fn step(&mut self, actions: &[LocalAction]) -> Result<StepResult> {
        let (next, result) = step(
            &self.state,
            actions,
            &self.config,
            self.frames,
            &mut self.rng,
            self.fixture.as_ref(),
        )?;
        self.state = next;
        Ok(result)
    }

    pub fn state(&self) -> &GlobalState {
        &self.state
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn messages(&self) -> Vec<AgentMessage> {
        (0..self.config.num_uavs)
            .map(|u| emit_message(&self.state, u))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn small_config() -> WorldConfig {
        WorldConfig {
            num_uavs: 2,
            num_devices: 2,
            ..Default::default()
        }
    }

    fn idle_action(d: usize) -> LocalAction {
        LocalAction {
            displacement: [0.0; 3],
            preference: vec![0.5; d],
            cpu_alloc: vec![0.0; d],
            offload_ratio: vec![0.0; d],
        }
    }

    #[test]
    fn reset_is_deterministic() {
        let cfg = WorldConfig::default();
        let a = reset(&mut rng::stream(9, "env"), &cfg, None).unwrap();
        let b = reset(&mut rng::stream(9, "env"), &cfg, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.prev_cpu_alloc, vec![vec![0.0; 6]; 2]);
        assert_eq!(a.uavs[0].position, [25.0, 50.0, 100.0]);
        assert_eq!(a.uavs[1].position, [75.0, 50.0, 100.0]);
    }

    #[test]
    fn reset_honors_fixture() {
        let cfg = small_config();
        let fixture = Fixture {
            device_positions: Some(vec![Some([10.0, 20.0]), Some([30.0, 40.0])]),
            task_bits: Some(vec![Some(8.2e6), None]),
            uav_positions: None,
        };
        let s = reset(&mut rng::stream(1, "env"), &cfg, Some(&fixture)).unwrap();
        assert_eq!(s.devices[0].position, [10.0, 20.0]);
        assert_eq!(s.devices[1].position, [30.0, 40.0]);
        assert_eq!(s.devices[0].initial_bits, 8.2e6);
        // the unpinned volume is the same draw an unpinned reset makes
        let free = reset(&mut rng::stream(1, "env"), &cfg, None).unwrap();
        assert_eq!(s.devices[1].initial_bits, free.devices[1].initial_bits);
    }

    #[test]
    fn fixture_dimension_mismatch() {
        let cfg = small_config();
        let fixture = Fixture {
            task_bits: Some(vec![Some(1e6); 3]),
            ..Default::default()
        };
        let err = reset(&mut rng::stream(1, "env"), &cfg, Some(&fixture)).unwrap_err();
        assert!(matches!(err, Error::FixtureMismatch { field: "task_bits", got: 3, expected: 2 }));
    }

    #[test]
    fn association_examples() {
        assert_eq!(resolve_association(&[vec![0.3, 0.0, 1.0]]), vec![0, 0, 0]);
        assert_eq!(resolve_association(&[vec![0.9, 0.2], vec![0.1, 0.8]]), vec![0, 1]);
        assert_eq!(resolve_association(&[vec![0.4; 3], vec![0.4; 3], vec![0.4; 3]]), vec![0, 0, 0]);
    }

    #[test]
    fn local_state_normalization() {
        let cfg = small_config();
        let mut s = reset(&mut rng::stream(1, "env"), &cfg, None).unwrap();
        s.uavs[0].position = [50.0, 50.0, 100.0];
        s.devices[1].remaining_bits = 0.0;
        let msgs = inbox(&[emit_message(&s, 0), emit_message(&s, 1)], 0);
        let v = encode_local_state(&s, 0, Some(&msgs), &cfg);
        assert_eq!(v.len(), local_state_dim(&cfg));
        assert_eq!(&v[..3], &[0.5, 0.5, 0.5]);
        let rem = 3 + 2 * 2 + 2 * 2;
        assert_eq!(&v[rem..rem + 2], &[1.0, 0.0]);

        let silent = encode_local_state(&s, 0, None, &cfg);
        let obs = observation_dim(&cfg);
        assert_eq!(silent.len(), v.len());
        assert!(silent[obs..].iter().all(|&x| x == 0.0));
        assert_eq!(&silent[..obs], &v[..obs]);
    }

    #[test]
    fn idle_step_costs_only_collision() {
        let cfg = WorldConfig {
            uav_min_separation: 5.0,
            ..small_config()
        };
        let fixture = Fixture {
            task_bits: Some(vec![Some(0.0), Some(0.0)]),
            uav_positions: Some(vec![[50.0, 50.0, 100.0], [51.0, 50.0, 100.0]]),
            ..Default::default()
        };
        let mut r = rng::stream(1, "env");
        let s = reset(&mut r, &cfg, Some(&fixture)).unwrap();
        let actions = vec![idle_action(2), idle_action(2)];
        let (_, res) = step(&s, &actions, &cfg, 1, &mut r, Some(&fixture)).unwrap();
        assert!(res.diagnostics.energy_per_device.iter().all(|&e| e == 0.0));
        for r in &res.local_rewards {
            assert!((r + 4.0).abs() < 1e-12, "{r}");
        }
        assert!(res.diagnostics.collision);
        assert!(res.done, "all tasks finished in the only frame");
    }

    #[test]
    fn full_offload_energy_matches_slot_oracle() {
        let cfg = WorldConfig {
            num_uavs: 1,
            num_devices: 1,
            ..Default::default()
        };
        let fixture = Fixture {
            device_positions: Some(vec![Some([40.0, 60.0])]),
            task_bits: Some(vec![Some(4e6)]),
            uav_positions: Some(vec![[50.0, 50.0, 80.0]]),
        };
        let mut r = rng::stream(5, "env");
        let s = reset(&mut r, &cfg, Some(&fixture)).unwrap();
        let action = LocalAction {
            displacement: [0.0; 3],
            preference: vec![1.0],
            cpu_alloc: vec![2e10],
            offload_ratio: vec![1.0],
        };
        let (next, res) = step(&s, &[action], &cfg, 1, &mut r, Some(&fixture)).unwrap();
        let gain = channel_gain(&s.uavs[0], [40.0, 60.0], &cfg).unwrap();
        let rate = uplink_rate(gain, &cfg);
        let (expect, left) = slot_execute(4e6, 1.0, 2e10, rate, &cfg).unwrap();
        assert_eq!(res.outcomes[0], expect);
        assert_eq!(res.diagnostics.energy_per_device[0], cfg.tx_power_device * expect.t_uplink);
        assert_eq!(next.devices[0].remaining_bits, left);
        assert_eq!(res.local_rewards[0], -expect.energy());
        assert_eq!(next.prev_cpu_alloc, vec![vec![2e10]]);
    }

    #[test]
    fn non_serving_entries_are_masked() {
        let cfg = small_config();
        let mut r = rng::stream(2, "env");
        let s = reset(&mut r, &cfg, None).unwrap();
        let a0 = LocalAction {
            displacement: [0.0; 3],
            preference: vec![1.0, 0.0],
            cpu_alloc: vec![1e10, 1e10],
            offload_ratio: vec![0.5, 0.9],
        };
        let a1 = LocalAction {
            displacement: [0.0; 3],
            preference: vec![0.0, 1.0],
            cpu_alloc: vec![3e10, 2e10],
            offload_ratio: vec![0.7, 0.2],
        };
        let (next, res) = step(&s, &[a0, a1], &cfg, 1, &mut r, None).unwrap();
        assert_eq!(res.assignment, vec![0, 1]);
        assert_eq!(next.prev_cpu_alloc, vec![vec![1e10, 0.0], vec![0.0, 2e10]]);
        assert_eq!(next.prev_offload_ratio, vec![vec![0.5, 0.0], vec![0.0, 0.2]]);
        assert_eq!(next.prev_preference, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn rejects_unprojected_actions() {
        let cfg = small_config();
        let mut r = rng::stream(2, "env");
        let s = reset(&mut r, &cfg, None).unwrap();
        let mut bad = idle_action(2);
        bad.cpu_alloc = vec![40e9, 20e9];
        let err = step(&s, &[bad, idle_action(2)], &cfg, 1, &mut r, None).unwrap_err();
        assert!(matches!(err, Error::UnprojectedAction { uav: 0, .. }));
        assert!(err.to_string().contains("unprojected action"));

        let mut bad = idle_action(2);
        bad.offload_ratio[1] = 1.2;
        assert!(step(&s, &[idle_action(2), bad], &cfg, 1, &mut r, None).is_err());
    }

    #[test]
    fn multi_frame_episode_resamples_tasks() {
        let cfg = small_config();
        let mut env = Env::new(cfg.clone(), 2, None, rng::stream(4, "env")).unwrap();
        let first: Vec<f64> = env.state().devices.iter().map(|d| d.initial_bits).collect();
        let mut dones = vec![];
        let mut penalties = 0;
        for _ in 0..20 {
            let res = env.step(&[idle_action(2), idle_action(2)]).unwrap();
            dones.push(res.done);
            penalties += usize::from(res.diagnostics.frame_unfinished.is_some());
        }
        let second: Vec<f64> = env.state().devices.iter().map(|d| d.initial_bits).collect();
        assert_ne!(first, second);
        assert_eq!(penalties, 2);
        assert_eq!(dones.iter().filter(|&&d| d).count(), 1);
        assert!(dones[19]);
    }
}
