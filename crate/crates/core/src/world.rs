//! Scenario physics: ground-device mobility, UAV kinematics, the probabilistic
//! line-of-sight air-to-ground channel, FDMA uplink rates and per-slot task
//! execution with latency and energy accounting.
//!
//! Everything here is a pure function of its inputs plus, for mobility and
//! task sampling, a caller-owned random stream.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Residual below this fraction of the pre-slot volume is treated as finished.
///
/// Splitting `remaining` into `ratio * remaining` and `(1 - ratio) * remaining`
/// leaves round-off residue of a few ulps; without the snap such a task would
/// never be reported complete.
pub const RESIDUAL_SNAP: f64 = 1e-9;

pub type Vec2 = [f64; 2];
pub type Vec3 = [f64; 3];

/// Probabilistic line-of-sight parameters of the air-to-ground channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    pub a: f64,
    pub b: f64,
    pub eta_los_db: f64,
    pub eta_nlos_db: f64,
}

impl Default for ChannelParams {
    /// Urban environment.
    fn default() -> Self {
        Self {
            a: 9.61,
            b: 0.16,
            eta_los_db: 1.0,
            eta_nlos_db: 20.0,
        }
    }
}

/// First-order Gauss-Markov mobility parameters for ground devices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilityParams {
    /// Velocity memory in `[0, 1]`.
    pub alpha: f64,
    /// Magnitude of each device's mean velocity, m/s.
    pub mean_speed: f64,
    /// Per-axis standard deviation of the velocity innovation, m/s.
    pub speed_sigma: f64,
}

impl Default for MobilityParams {
    fn default() -> Self {
        Self {
            alpha: 0.8,
            mean_speed: 2.0,
            speed_sigma: 1.0,
        }
    }
}

/// Penalty weights of the local reward, in joules.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    /// Joules per meter of violation of the minimum UAV separation.
    pub collision_per_meter: f64,
    /// Joules per unfinished task at frame end (scaled by unfinished fraction).
    pub unfinished_per_task: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            collision_per_meter: 1.0,
            unfinished_per_task: 10.0,
        }
    }
}

/// All physical, channel, task and constraint constants of a scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub region_side: f64,
    pub altitude_min: f64,
    pub altitude_max: f64,
    pub num_uavs: usize,
    pub num_devices: usize,
    pub frame_duration: f64,
    pub slots_per_frame: usize,
    pub uav_speed_max: f64,
    pub uav_min_separation: f64,
    pub cpu_capacity_max: f64,
    pub cycles_per_bit: f64,
    pub device_local_freq: f64,
    pub task_bits_min: f64,
    pub task_bits_max: f64,
    pub bandwidth_total: f64,
    pub carrier_freq: f64,
    pub noise_density: f64,
    pub tx_power_device: f64,
    /// Only informational: downlink is free of latency and device energy.
    pub tx_power_uav: f64,
    pub channel: ChannelParams,
    pub mobility: MobilityParams,
    pub kappa: f64,
    pub reward: RewardWeights,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            region_side: 100.0,
            altitude_min: 50.0,
            altitude_max: 150.0,
            num_uavs: 2,
            num_devices: 6,
            frame_duration: 2.0,
            slots_per_frame: 10,
            uav_speed_max: 50.0,
            uav_min_separation: 10.0,
            cpu_capacity_max: 50e9,
            cycles_per_bit: 1550.7,
            device_local_freq: 1e9,
            task_bits_min: 1.2e6,
            task_bits_max: 12e6,
            bandwidth_total: 40e6,
            carrier_freq: 2e9,
            // -174 dBm/Hz
            noise_density: 10f64.powf(-17.4) * 1e-3,
            tx_power_device: 0.1,
            tx_power_uav: 10.0,
            channel: ChannelParams::default(),
            mobility: MobilityParams::default(),
            kappa: 1e-28,
            reward: RewardWeights::default(),
        }
    }
}

impl WorldConfig {
    pub fn slot_duration(&self) -> f64 {
        self.frame_duration / self.slots_per_frame as f64
    }

    /// FDMA share of one device.
    pub fn bandwidth_per_device(&self) -> f64 {
        self.bandwidth_total / self.num_devices as f64
    }

    /// Largest displacement a UAV can make within one slot.
    pub fn max_step(&self) -> f64 {
        self.uav_speed_max * self.slot_duration()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("region_side", self.region_side),
            ("altitude_min", self.altitude_min),
            ("altitude_max", self.altitude_max),
            ("frame_duration", self.frame_duration),
            ("uav_speed_max", self.uav_speed_max),
            ("uav_min_separation", self.uav_min_separation),
            ("cpu_capacity_max", self.cpu_capacity_max),
            ("cycles_per_bit", self.cycles_per_bit),
            ("device_local_freq", self.device_local_freq),
            ("task_bits_min", self.task_bits_min),
            ("task_bits_max", self.task_bits_max),
            ("bandwidth_total", self.bandwidth_total),
            ("carrier_freq", self.carrier_freq),
            ("noise_density", self.noise_density),
            ("tx_power_device", self.tx_power_device),
            ("tx_power_uav", self.tx_power_uav),
            ("kappa", self.kappa),
        ];
        for (key, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::config(key, format!("must be finite and > 0, got {value}")));
            }
        }
        if self.num_uavs == 0 {
            return Err(Error::config("num_uavs", "must be >= 1"));
        }
        if self.num_devices == 0 {
            return Err(Error::config("num_devices", "must be >= 1"));
        }
        if self.slots_per_frame == 0 {
            return Err(Error::config("slots_per_frame", "must be >= 1"));
        }
        if self.task_bits_min > self.task_bits_max {
            return Err(Error::config("task_bits_min", "must not exceed task_bits_max"));
        }
        if self.altitude_min > self.altitude_max {
            return Err(Error::config("altitude_min", "must not exceed altitude_max"));
        }
        let m = &self.mobility;
        if !(0.0..=1.0).contains(&m.alpha) {
            return Err(Error::config("mobility.alpha", "must lie in [0, 1]"));
        }
        if !(m.mean_speed >= 0.0 && m.speed_sigma >= 0.0) {
            return Err(Error::config("mobility", "speeds must be >= 0"));
        }
        if !(self.channel.a > 0.0 && self.channel.b > 0.0) {
            return Err(Error::config("channel", "a and b must be > 0"));
        }
        if !(self.reward.collision_per_meter >= 0.0 && self.reward.unfinished_per_task >= 0.0) {
            return Err(Error::config("reward", "weights must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceState {
    pub position: Vec2,
    pub velocity: Vec2,
    /// Asymptotic mean of the Gauss-Markov velocity process.
    pub mean_velocity: Vec2,
    pub remaining_bits: f64,
    pub initial_bits: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UavPose {
    pub position: Vec3,
}

/// What happened to one device's task during one slot.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SlotOutcome {
    pub bits_offloaded: f64,
    pub bits_local: f64,
    pub t_uplink: f64,
    pub t_remote_compute: f64,
    pub t_local_compute: f64,
    pub energy_tx: f64,
    pub energy_local: f64,
}

impl SlotOutcome {
    pub fn energy(&self) -> f64 {
        self.energy_tx + self.energy_local
    }
}

/// Initial task volume of every device, uniform over the configured range.
pub fn sample_tasks<R: Rng + ?Sized>(rng: &mut R, config: &WorldConfig) -> Vec<f64> {
    (0..config.num_devices)
        .map(|_| sample_task(rng, config))
        .collect()
}

pub(crate) fn sample_task<R: Rng + ?Sized>(rng: &mut R, config: &WorldConfig) -> f64 {
    let (lo, hi) = (config.task_bits_min, config.task_bits_max);
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Advances one device by a slot under first-order Gauss-Markov mobility with
/// specular reflection at the region walls.
pub fn step_device_mobility<R: Rng + ?Sized>(
    device: &DeviceState,
    rng: &mut R,
    config: &WorldConfig,
) -> DeviceState {
    let MobilityParams {
        alpha, speed_sigma, ..
    } = config.mobility;
    let innovation = (1.0 - alpha * alpha).max(0.0).sqrt() * speed_sigma;
    let dt = config.slot_duration();
    let side = config.region_side;

    let mut next = device.clone();
    for axis in 0..2 {
        let w: f64 = rng.sample(StandardNormal);
        let mut v = alpha * device.velocity[axis]
            + (1.0 - alpha) * device.mean_velocity[axis]
            + innovation * w;
        let mut mean = device.mean_velocity[axis];
        let mut x = device.position[axis] + v * dt;
        // A single slot can overshoot by more than one side only at absurd speeds.
        while !(0.0..=side).contains(&x) {
            x = if x > side { 2.0 * side - x } else { -x };
            v = -v;
            mean = -mean;
        }
        next.position[axis] = x;
        next.velocity[axis] = v;
        next.mean_velocity[axis] = mean;
    }
    next
}

/// Applies a requested displacement under the speed limit and the flight box.
pub fn apply_uav_displacement(pose: &UavPose, raw_displacement: Vec3, config: &WorldConfig) -> UavPose {
    let mut step = if raw_displacement.iter().all(|c| c.is_finite()) {
        raw_displacement
    } else {
        [0.0; 3]
    };
    let limit = config.max_step();
    let norm = norm3(step);
    if norm > limit {
        let scale = limit / norm;
        step.iter_mut().for_each(|c| *c *= scale);
    }
    let p = pose.position;
    UavPose {
        position: [
            (p[0] + step[0]).clamp(0.0, config.region_side),
            (p[1] + step[1]).clamp(0.0, config.region_side),
            (p[2] + step[2]).clamp(config.altitude_min, config.altitude_max),
        ],
    }
}

/// Line-of-sight probability at elevation angle `elevation_deg`.
pub fn los_probability(elevation_deg: f64, channel: &ChannelParams) -> f64 {
    1.0 / (1.0 + channel.a * (-channel.b * (elevation_deg - channel.a)).exp())
}

pub fn free_space_loss_db(distance: f64, carrier_freq: f64) -> f64 {
    20.0 * (4.0 * std::f64::consts::PI * carrier_freq * distance / SPEED_OF_LIGHT).log10()
}

/// Expected (LoS-probability weighted) linear power gain between a UAV and a
/// ground device.
pub fn channel_gain(uav: &UavPose, device_pos: Vec2, config: &WorldConfig) -> Result<f64> {
    let [ux, uy, altitude] = uav.position;
    let horizontal = (ux - device_pos[0]).hypot(uy - device_pos[1]);
    let distance = horizontal.hypot(altitude);
    if distance == 0.0 {
        return Err(Error::CoincidentPositions);
    }
    let elevation = altitude.atan2(horizontal).to_degrees();
    let p_los = los_probability(elevation, &config.channel);
    let loss_db = free_space_loss_db(distance, config.carrier_freq)
        + p_los * config.channel.eta_los_db
        + (1.0 - p_los) * config.channel.eta_nlos_db;
    Ok(10f64.powf(-loss_db / 10.0))
}

/// Shannon rate of a device on its dedicated FDMA sub-band.
pub fn uplink_rate(gain: f64, config: &WorldConfig) -> f64 {
    let bandwidth = config.bandwidth_per_device();
    let snr = config.tx_power_device * gain / (config.noise_density * bandwidth);
    bandwidth * snr.ln_1p() / std::f64::consts::LN_2
}

/// Bits a device can push through upload followed by remote computation
/// within one slot.
pub fn offload_capacity(rate: f64, f_vm: f64, config: &WorldConfig) -> f64 {
    if rate > 0.0 && f_vm > 0.0 {
        config.slot_duration() / (1.0 / rate + config.cycles_per_bit / f_vm)
    } else {
        0.0
    }
}

/// Bits the device can compute on its own CPU within one slot.
pub fn local_capacity(config: &WorldConfig) -> f64 {
    config.device_local_freq * config.slot_duration() / config.cycles_per_bit
}

/// Executes one slot of a partially offloaded task.
///
/// Returns the outcome and the remaining volume after the slot. Upload then
/// remote compute of the offloaded part always fits in the slot.
pub fn slot_execute(
    remaining_bits: f64,
    offload_ratio: f64,
    f_vm: f64,
    rate: f64,
    config: &WorldConfig,
) -> Result<(SlotOutcome, f64)> {
    let finite_nonneg = |x: f64| x.is_finite() && x >= 0.0;
    if !(finite_nonneg(remaining_bits) && finite_nonneg(f_vm) && finite_nonneg(rate)) {
        return Err(Error::InvalidSlotInputs(format!(
            "remaining_bits={remaining_bits}, f_vm={f_vm}, rate={rate}"
        )));
    }
    if !(0.0..=1.0).contains(&offload_ratio) {
        return Err(Error::InvalidSlotInputs(format!("offload_ratio={offload_ratio}")));
    }
    let slot = config.slot_duration();
    let c = config.cycles_per_bit;

    let bits_offloaded = (offload_ratio * remaining_bits).min(offload_capacity(rate, f_vm, config));
    let bits_local = ((1.0 - offload_ratio) * remaining_bits).min(local_capacity(config));

    let (t_uplink, mut t_remote_compute) = if bits_offloaded > 0.0 {
        (bits_offloaded / rate, bits_offloaded * c / f_vm)
    } else {
        (0.0, 0.0)
    };
    // Absorb the last-ulp overshoot when the capacity bound is active.
    if t_uplink + t_remote_compute > slot {
        t_remote_compute = (slot - t_uplink).max(0.0);
    }
    let t_local_compute = (bits_local * c / config.device_local_freq).min(slot);

    let outcome = SlotOutcome {
        bits_offloaded,
        bits_local,
        t_uplink,
        t_remote_compute,
        t_local_compute,
        energy_tx: config.tx_power_device * t_uplink,
        energy_local: config.kappa * config.device_local_freq.powi(2) * c * bits_local,
    };
    let mut left = (remaining_bits - bits_offloaded - bits_local).max(0.0);
    if left <= RESIDUAL_SNAP * remaining_bits {
        left = 0.0;
    }
    Ok((outcome, left))
}

pub fn norm3(v: Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub fn distance3(a: Vec3, b: Vec3) -> f64 {
    norm3([a[0] - b[0], a[1] - b[1], a[2] - b[2]])
}

/// Smallest pairwise 3D distance among the UAVs.
pub fn min_uav_separation(poses: &[UavPose]) -> Result<f64> {
    if poses.len() < 2 {
        return Err(Error::TooFewPoses(poses.len()));
    }
    let mut best = f64::INFINITY;
    for (i, a) in poses.iter().enumerate() {
        for b in &poses[i + 1..] {
            best = best.min(distance3(a.position, b.position));
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs())
    }

    fn device_at(x: f64, y: f64) -> DeviceState {
        DeviceState {
            position: [x, y],
            velocity: [0.0, 0.0],
            mean_velocity: [0.0, 0.0],
            remaining_bits: 1e6,
            initial_bits: 1e6,
        }
    }

    #[test]
    fn default_config_is_valid() {
        let cfg = WorldConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.bandwidth_per_device(), 40e6 / 6.0);
        assert_eq!(cfg.slot_duration(), 0.2);
        assert_eq!(cfg.max_step(), 10.0);
    }

    #[test]
    fn validation_names_the_key() {
        let cfg = WorldConfig {
            task_bits_min: 13e6,
            ..Default::default()
        };
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("task_bits_min"), "{err}");
        let cfg = WorldConfig {
            carrier_freq: -1.0,
            ..Default::default()
        };
        assert!(cfg.validate().unwrap_err().to_string().contains("carrier_freq"));
    }

    #[test]
    fn degenerate_task_interval() {
        let cfg = WorldConfig {
            task_bits_min: 5e6,
            task_bits_max: 5e6,
            ..Default::default()
        };
        let mut r = rng::stream(1, "t");
        assert_eq!(sample_tasks(&mut r, &cfg), vec![5e6; 6]);
    }

    #[test]
    fn task_mean_matches_uniform() {
        let cfg = WorldConfig::default();
        let mut r = rng::stream(2, "t");
        let n = 100_000;
        let mean = (0..n).map(|_| sample_task(&mut r, &cfg)).sum::<f64>() / n as f64;
        assert!((mean - 6.6e6).abs() < 0.01 * 6.6e6, "mean {mean}");
    }

    #[test]
    fn mobility_limits() {
        let mut r = rng::stream(3, "m");
        let mut dev = device_at(50.0, 50.0);
        dev.velocity = [1.5, -0.5];
        dev.mean_velocity = [2.0, 0.0];

        let mut cfg = WorldConfig::default();
        cfg.mobility.alpha = 1.0;
        let next = step_device_mobility(&dev, &mut r, &cfg);
        assert_eq!(next.velocity, [1.5, -0.5]);

        cfg.mobility.alpha = 0.0;
        cfg.mobility.speed_sigma = 0.0;
        let next = step_device_mobility(&dev, &mut r, &cfg);
        assert_eq!(next.velocity, [2.0, 0.0]);
        assert_eq!(next.remaining_bits, dev.remaining_bits);
    }

    #[test]
    fn mobility_reflects_at_wall() {
        let mut cfg = WorldConfig::default();
        cfg.mobility.alpha = 1.0;
        let mut dev = device_at(99.9, 50.0);
        dev.velocity = [1.0, 0.0];
        let next = step_device_mobility(&dev, &mut rng::stream(0, "m"), &cfg);
        assert!((next.position[0] - 99.9).abs() < 1e-12, "{:?}", next.position);
        assert_eq!(next.velocity[0], -1.0);
        assert_eq!(next.position[1], 50.0);
    }

    #[test]
    fn displacement_examples() {
        let cfg = WorldConfig::default();
        let pose = UavPose {
            position: [50.0, 50.0, 100.0],
        };
        assert_eq!(apply_uav_displacement(&pose, [0.0; 3], &cfg), pose);

        // norm 20 (12, 16, 0) rescaled to 10
        let moved = apply_uav_displacement(&pose, [12.0, 16.0, 0.0], &cfg);
        let d = [moved.position[0] - 50.0, moved.position[1] - 50.0, moved.position[2] - 100.0];
        assert!((norm3(d) - 10.0).abs() < 1e-12);
        assert!((d[0] - 6.0).abs() < 1e-12 && (d[1] - 8.0).abs() < 1e-12);

        let top = UavPose {
            position: [50.0, 50.0, 150.0],
        };
        assert_eq!(apply_uav_displacement(&top, [0.0, 0.0, 5.0], &cfg).position[2], 150.0);
    }

    #[test]
    fn los_probability_values() {
        let ch = ChannelParams::default();
        assert!((los_probability(9.61, &ch) - 1.0 / 10.61).abs() < 1e-15);
        assert!((los_probability(9.61, &ch) - 0.09425).abs() < 1e-5);
        assert!((los_probability(45.0, &ch) - 0.9676).abs() < 1e-4);
        let mut prev = 0.0;
        for i in 0..=900 {
            let p = los_probability(i as f64 * 0.1, &ch);
            assert!(p > prev);
            prev = p;
        }
    }

    #[test]
    fn free_space_term() {
        // 20 log10(4 pi f d / c) = 78.468383... for d = 100 m, f = 2 GHz
        assert!((free_space_loss_db(100.0, 2e9) - 78.468383).abs() < 1e-5);
    }

    #[test]
    fn channel_gain_rejects_coincident() {
        let cfg = WorldConfig::default();
        let pose = UavPose {
            position: [10.0, 10.0, 0.0],
        };
        assert!(matches!(
            channel_gain(&pose, [10.0, 10.0], &cfg),
            Err(Error::CoincidentPositions)
        ));
    }

    #[test]
    fn gain_decreases_with_distance_at_fixed_elevation() {
        let cfg = WorldConfig::default();
        let mut prev = f64::INFINITY;
        // 30 degree elevation, growing slant range
        for k in 1..50 {
            let h = k as f64 * 3.0;
            let r = h / 30f64.to_radians().tan();
            let g = channel_gain(&UavPose { position: [r, 0.0, h] }, [0.0, 0.0], &cfg).unwrap();
            assert!(g <= prev);
            prev = g;
        }
    }

    #[test]
    fn uplink_rate_values() {
        let cfg = WorldConfig::default();
        let r = uplink_rate(1.148e-8, &cfg);
        assert!(rel_close(r, 1.03e8, 0.01), "{r}");
        assert!(uplink_rate(1e-30, &cfg) < 1e-6);
        assert_eq!(uplink_rate(0.0, &cfg), 0.0);
    }

    #[test]
    fn slot_execute_examples() {
        let cfg = WorldConfig::default();
        let (out, left) = slot_execute(0.0, 0.7, 1e10, 1e8, &cfg).unwrap();
        assert_eq!(out, SlotOutcome::default());
        assert_eq!(left, 0.0);

        let cap = offload_capacity(1e8, 1e10, &cfg);
        assert!(rel_close(cap, 1.2116e6, 1e-4), "{cap}");
        let (out, _) = slot_execute(12e6, 1.0, 1e10, 1e8, &cfg).unwrap();
        assert_eq!(out.bits_offloaded, cap);
        assert!(out.t_uplink + out.t_remote_compute <= cfg.slot_duration());

        let (out, _) = slot_execute(1e6, 0.0, 0.0, 0.0, &cfg).unwrap();
        assert_eq!(out.bits_local, 1e6f64.min(local_capacity(&cfg)));
        let (out, _) = slot_execute(1e5, 0.0, 0.0, 0.0, &cfg).unwrap();
        assert!(rel_close(out.energy_local, 1e-28 * 1e18 * 1550.7 * 1e5, 1e-12));
    }

    #[test]
    fn local_energy_spot_value() {
        // kappa f^2 C b with b = 1e6 bits
        let cfg = WorldConfig::default();
        let e = cfg.kappa * cfg.device_local_freq.powi(2) * cfg.cycles_per_bit * 1e6;
        assert!(rel_close(e, 1.5507e-1, 1e-12));
    }

    #[test]
    fn slot_execute_rejects_bad_inputs() {
        let cfg = WorldConfig::default();
        for (rem, rho, f, r) in [
            (f64::NAN, 0.5, 1e9, 1e8),
            (-1.0, 0.5, 1e9, 1e8),
            (1e6, 1.5, 1e9, 1e8),
            (1e6, 0.5, -1e9, 1e8),
            (1e6, 0.5, 1e9, f64::INFINITY),
        ] {
            assert!(matches!(
                slot_execute(rem, rho, f, r, &cfg),
                Err(Error::InvalidSlotInputs(_))
            ));
        }
    }

    #[test]
    fn separation_examples() {
        let p = |x, y, z| UavPose { position: [x, y, z] };
        assert_eq!(min_uav_separation(&[p(1.0, 2.0, 3.0), p(1.0, 2.0, 3.0)]).unwrap(), 0.0);
        assert_eq!(min_uav_separation(&[p(0.0, 0.0, 100.0), p(3.0, 4.0, 100.0)]).unwrap(), 5.0);
        assert!(matches!(min_uav_separation(&[p(0.0, 0.0, 0.0)]), Err(Error::TooFewPoses(1))));
    }
}
