//! The operations behind the CLI subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use uavmec_core::schemes::{
    eval_env, run_episode, train_with, Checkpoint, EpisodeRecord, EpisodeStats, EvalSummary, SchemeConfig, SchemeId,
    TeamPolicy, TrainOptions, Trained,
};
use uavmec_core::world::WorldConfig;

use crate::config::{BehaviorConfig, ExperimentConfig};
use crate::error::{BenchError, Result};
use crate::output::{self, CurvePoint, RunManifest, RunWriter};
use crate::plot::{self, Panel, Series};

pub const METRICS_FILE: &str = "metrics.csv";

pub fn checkpoint_file(scheme: SchemeId) -> String {
    format!("checkpoints/{scheme}.json")
}

/// Prints a progress line for evaluation episodes.
fn log_record(scheme: SchemeId, seed: u64, r: &EpisodeRecord) {
    if let Some(e) = &r.eval {
        eprintln!(
            "[{scheme} seed {seed}] episode {:>5}  eval energy {:.5} J  completion {:.4}  train energy {:.5} J  {:.0}s",
            r.episode, e.mean_device_energy.mean, e.completion_fraction.mean, r.mean_device_energy_j, r.wallclock_s
        );
    }
}

/// Trains one scheme and writes its run directory.
pub fn train_run(
    config: &ExperimentConfig,
    scheme: SchemeId,
    seed: u64,
    out: &Path,
    threads: usize,
    verbose: bool,
) -> Result<(Trained, RunManifest)> {
    config.validate()?;
    let mut writer = RunWriter::new(out)?;
    let mut progress = |r: &EpisodeRecord| {
        if verbose {
            log_record(scheme, seed, r);
        }
    };
    let trained = train_with(
        scheme,
        &config.scheme_config(),
        seed,
        TrainOptions {
            threads,
            progress: Some(&mut progress),
            ..Default::default()
        },
    )?;
    writer.write(METRICS_FILE, &output::metrics_csv(&trained.report)?)?;
    writer.write("timing.csv", &output::timing_csv(&trained.report)?)?;
    writer.write(&checkpoint_file(scheme), trained.checkpoint().to_json().as_bytes())?;
    let manifest = writer.finish("train", config, Some(scheme), Some(seed))?;
    Ok((trained, manifest))
}

/// A finished run directory whose manifest matches the request.
fn completed_run(dir: &Path, config: &ExperimentConfig, scheme: SchemeId, seed: u64) -> Option<RunManifest> {
    let m = RunManifest::load(dir).ok()?;
    let matches = m.command == "train" && m.scheme == Some(scheme) && m.seed == Some(seed) && &m.config == config;
    (matches && m.verify(dir).is_ok()).then_some(m)
}

/// Evaluation points recorded in a metrics file.
pub fn read_eval_curve(path: &Path) -> Result<Vec<(usize, f64, f64)>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| BenchError::Manifest(format!("{}: missing column {name}", path.display())))
    };
    let (ep, energy, completion) = (col("episode")?, col("eval_energy_mean_j")?, col("eval_completion")?);
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        if row[energy].is_empty() {
            continue;
        }
        let parse = |i: usize| {
            row[i]
                .parse::<f64>()
                .map_err(|e| BenchError::Manifest(format!("{}: {e}", path.display())))
        };
        out.push((parse(ep)? as usize, parse(energy)?, parse(completion)?));
    }
    Ok(out)
}

pub fn run_dir(out: &Path, scheme: SchemeId, seed: u64) -> PathBuf {
    out.join("runs").join(scheme.as_str()).join(format!("seed-{seed}"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchemeRun {
    pub scheme: SchemeId,
    pub seed: u64,
    pub dir: PathBuf,
    /// `(episode, eval energy, eval completion)`.
    pub curve: Vec<(usize, f64, f64)>,
    pub reused: bool,
}

impl SchemeRun {
    pub fn final_energy(&self) -> Option<f64> {
        self.curve.last().map(|p| p.1)
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let path = self.dir.join(checkpoint_file(self.scheme));
        let text = fs::read_to_string(&path).map_err(BenchError::io(&path))?;
        Ok(Checkpoint::from_json(&text)?)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Comparison {
    pub runs: Vec<SchemeRun>,
}

pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

impl Comparison {
    pub fn runs_of(&self, scheme: SchemeId) -> impl Iterator<Item = &SchemeRun> {
        self.runs.iter().filter(move |r| r.scheme == scheme)
    }

    /// Median over seeds of the last evaluation energy.
    pub fn median_final_energy(&self, scheme: SchemeId) -> Option<f64> {
        let finals: Vec<f64> = self.runs_of(scheme).filter_map(SchemeRun::final_energy).collect();
        median(&finals)
    }

    /// Median-over-seeds evaluation curve.
    pub fn median_curve(&self, scheme: SchemeId) -> Vec<(f64, f64)> {
        let runs: Vec<&SchemeRun> = self.runs_of(scheme).collect();
        let Some(first) = runs.first() else {
            return Vec::new();
        };
        first
            .curve
            .iter()
            .enumerate()
            .filter_map(|(i, &(episode, _, _))| {
                let at: Vec<f64> = runs.iter().filter_map(|r| r.curve.get(i).map(|p| p.1)).collect();
                median(&at).map(|m| (episode as f64, m))
            })
            .collect()
    }
}

/// Trains (or reuses finished runs of) every configured scheme and seed, then
/// writes `comparison.csv` and `plots/fig3.svg`.
pub fn compare(config: &ExperimentConfig, out: &Path, threads: usize, verbose: bool) -> Result<Comparison> {
    config.validate()?;
    if config.schemes.is_empty() || config.seeds.is_empty() {
        return Err(BenchError::Config("schemes and seeds must not be empty for compare".into()));
    }
    let mut writer = RunWriter::new(out)?;
    let mut comparison = Comparison::default();
    for &scheme in &config.schemes {
        for &seed in &config.seeds {
            let dir = run_dir(out, scheme, seed);
            let reused = completed_run(&dir, config, scheme, seed).is_some();
            if reused {
                if verbose {
                    eprintln!("[{scheme} seed {seed}] reusing {}", dir.display());
                }
            } else {
                train_run(config, scheme, seed, &dir, threads, verbose)?;
            }
            let curve = read_eval_curve(&dir.join(METRICS_FILE))?;
            comparison.runs.push(SchemeRun {
                scheme,
                seed,
                dir,
                curve,
                reused,
            });
        }
    }

    let points: Vec<CurvePoint> = comparison
        .runs
        .iter()
        .flat_map(|r| {
            r.curve.iter().map(move |&(episode, energy_j, completion)| CurvePoint {
                scheme: r.scheme,
                seed: r.seed,
                episode,
                energy_j,
                completion,
            })
        })
        .collect();
    writer.write("comparison.csv", &output::comparison_csv(&points)?)?;
    let series = config
        .schemes
        .iter()
        .map(|&s| Series {
            name: s.to_string(),
            points: comparison.median_curve(s),
        })
        .collect();
    let svg = plot::render(
        "Average device energy during training",
        &[Panel::Lines {
            title: format!("median over {} seeds, noise-free evaluation", config.seeds.len()),
            x_label: "episode".into(),
            y_label: "energy per device and frame (J)".into(),
            series,
        }],
    );
    writer.write("plots/fig3.svg", svg.as_bytes())?;
    writer.finish("compare", config, None, None)?;
    Ok(comparison)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path)
        .map_err(|e| BenchError::Config(format!("cannot read checkpoint {}: {e}", path.display())))?;
    Checkpoint::from_json(&text).map_err(|e| BenchError::Config(format!("checkpoint {}: {e}", path.display())))
}

/// Evaluates a checkpoint over `seeds` (the checkpoint's own protocol if
/// `None`) and writes `eval.csv`.
pub fn eval_run(checkpoint: &Checkpoint, seeds: Option<Vec<u64>>, out: &Path) -> Result<EvalSummary> {
    let mut protocol = checkpoint.config.eval.clone();
    if let Some(seeds) = seeds {
        protocol.seeds = seeds;
    }
    let policy = checkpoint.policy()?;
    let mut per_seed = Vec::with_capacity(protocol.seeds.len());
    for &seed in &protocol.seeds {
        let mut env = eval_env(&policy, seed, protocol.frames, None)?;
        per_seed.push((seed, run_episode(&policy, &mut env, |_, _, _| {})?));
    }
    let summary = EvalSummary::from_episodes(per_seed.iter().map(|p| p.1).collect());
    let config = ExperimentConfig::from_scheme_config(&checkpoint.config);
    let mut writer = RunWriter::new(out)?;
    writer.write("eval.csv", &output::eval_csv(&per_seed)?)?;
    writer.finish("eval", &config, Some(checkpoint.scheme), None)?;
    Ok(summary)
}

pub fn summary_table(scheme: SchemeId, s: &EvalSummary) -> String {
    format!(
        "scheme      {scheme}\nepisodes    {}\nenergy/dev  {:.6} ± {:.6} J per frame\ntotal       {:.6} ± {:.6} J\ncompletion  {:.6} ± {:.6}\ncollisions  {:.3} ± {:.3}\n",
        s.episodes,
        s.mean_device_energy.mean,
        s.mean_device_energy.std,
        s.total_energy.mean,
        s.total_energy.std,
        s.completion_fraction.mean,
        s.completion_fraction.std,
        s.collision_events.mean,
        s.collision_events.std,
    )
}

/// What happened to one pinned device in one replay.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviceBehavior {
    pub device: usize,
    pub task_bits: f64,
    /// Time into the first frame at which the task finished.
    pub completion_time: Option<f64>,
    /// Mean linear channel gain to the serving UAV over the slots in which
    /// the task was still open.
    pub mean_serving_gain: f64,
    /// Offloaded bits over the task volume.
    pub offload_fraction: f64,
    pub gain_per_slot: Vec<f64>,
    pub cumulative_offload: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BehaviorReplay {
    pub seed: u64,
    pub stats: EpisodeStats,
    pub devices: Vec<DeviceBehavior>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BehaviorReport {
    pub frame_duration: f64,
    pub replays: Vec<BehaviorReplay>,
}

impl BehaviorReport {
    fn values(&self, device: usize, f: impl Fn(&DeviceBehavior) -> f64) -> Vec<f64> {
        self.replays.iter().map(|r| f(&r.devices[device])).collect()
    }

    pub fn pinned(&self) -> usize {
        self.replays.first().map_or(0, |r| r.devices.len())
    }

    /// Replays in which every pinned task finished within the first frame.
    pub fn all_completed(&self) -> usize {
        self.replays
            .iter()
            .filter(|r| {
                r.devices
                    .iter()
                    .all(|d| d.completion_time.is_some_and(|t| t <= self.frame_duration))
            })
            .count()
    }

    pub fn median_offload(&self, device: usize) -> f64 {
        median(&self.values(device, |d| d.offload_fraction)).unwrap_or(f64::NAN)
    }

    pub fn median_gain(&self, device: usize) -> f64 {
        median(&self.values(device, |d| d.mean_serving_gain)).unwrap_or(f64::NAN)
    }

    /// Unfinished tasks count as `NaN` and are skipped.
    pub fn median_completion(&self, device: usize) -> f64 {
        median(&self.values(device, |d| d.completion_time.unwrap_or(f64::NAN))).unwrap_or(f64::NAN)
    }

    /// Human-readable soft checks on the pinned pair (the first two devices).
    pub fn soft_checks(&self) -> Vec<(bool, String)> {
        let mut out = vec![(
            self.all_completed() * 10 >= self.replays.len() * 8,
            format!(
                "all pinned tasks finish within {} s in {}/{} replays",
                self.frame_duration,
                self.all_completed(),
                self.replays.len()
            ),
        )];
        if self.pinned() >= 2 {
            let (small, large) = (0, 1);
            let (os, ol) = (self.median_offload(small), self.median_offload(large));
            out.push((
                ol >= os,
                format!("median offload fraction: larger task {ol:.4} vs smaller {os:.4}"),
            ));
            let (gs, gl) = (self.median_gain(small), self.median_gain(large));
            out.push((
                gl >= gs,
                format!(
                    "median serving gain: larger task {:.2} dB vs smaller {:.2} dB",
                    10.0 * gl.log10(),
                    10.0 * gs.log10()
                ),
            ));
        }
        out
    }
}

/// Replays the pinned-volume fixture with a trained policy.
pub fn replay_behaviors(policy: &TeamPolicy, behavior: &BehaviorConfig) -> Result<BehaviorReport> {
    let world: &WorldConfig = policy.controller().world();
    let fixture = behavior.fixture(world)?;
    let pinned = behavior.task_bits.len();
    let slots = world.slots_per_frame;
    let mut replays = Vec::with_capacity(behavior.seeds.len());
    for &seed in &behavior.seeds {
        let mut env = eval_env(policy, seed, behavior.frames, Some(&fixture))?;
        let initial: Vec<f64> = env.state().devices[..pinned].iter().map(|d| d.initial_bits).collect();
        let mut devices: Vec<DeviceBehavior> = (0..pinned)
            .map(|d| DeviceBehavior {
                device: d,
                task_bits: initial[d],
                completion_time: None,
                mean_serving_gain: 0.0,
                offload_fraction: 0.0,
                gain_per_slot: Vec::new(),
                cumulative_offload: Vec::new(),
            })
            .collect();
        let mut open_slots = vec![0usize; pinned];
        let mut offloaded = vec![0.0; pinned];
        let stats = run_episode(policy, &mut env, |state, _, step| {
            if state.slot_index >= slots {
                return;
            }
            for (d, b) in devices.iter_mut().enumerate() {
                let gain = step.diagnostics.serving_gain[d];
                b.gain_per_slot.push(gain);
                if state.devices[d].remaining_bits > 0.0 {
                    b.mean_serving_gain += gain;
                    open_slots[d] += 1;
                }
                offloaded[d] += step.outcomes[d].bits_offloaded;
                b.cumulative_offload.push(offloaded[d] / b.task_bits);
                if b.completion_time.is_none() {
                    b.completion_time = step.diagnostics.finished_at[d];
                }
            }
        })?;
        for (d, b) in devices.iter_mut().enumerate() {
            b.mean_serving_gain /= open_slots[d].max(1) as f64;
            b.offload_fraction = offloaded[d] / b.task_bits;
        }
        replays.push(BehaviorReplay { seed, stats, devices });
    }
    Ok(BehaviorReport {
        frame_duration: world.frame_duration,
        replays,
    })
}

fn behaviors_csv(report: &BehaviorReport) -> Result<(Vec<u8>, Vec<u8>)> {
    let mut summary = csv::Writer::from_writer(Vec::new());
    summary.write_record([
        "seed",
        "device",
        "task_bits",
        "completion_time_s",
        "mean_serving_gain",
        "offload_fraction",
    ])?;
    let mut slots = csv::Writer::from_writer(Vec::new());
    slots.write_record(["seed", "device", "slot", "serving_gain", "cumulative_offload_fraction"])?;
    for r in &report.replays {
        for d in &r.devices {
            summary.write_record([
                r.seed.to_string(),
                d.device.to_string(),
                output::num(d.task_bits),
                d.completion_time.map(output::num).unwrap_or_default(),
                output::num(d.mean_serving_gain),
                output::num(d.offload_fraction),
            ])?;
            for (k, (g, c)) in d.gain_per_slot.iter().zip(&d.cumulative_offload).enumerate() {
                slots.write_record([
                    r.seed.to_string(),
                    d.device.to_string(),
                    k.to_string(),
                    output::num(*g),
                    output::num(*c),
                ])?;
            }
        }
    }
    let done = |w: csv::Writer<Vec<u8>>| w.into_inner().map_err(|e| BenchError::Csv(e.into_error().into()));
    Ok((done(summary)?, done(slots)?))
}

fn behavior_figure(report: &BehaviorReport) -> String {
    let names: Vec<String> = (0..report.pinned())
        .map(|d| {
            let bits = report.replays.first().map_or(f64::NAN, |r| r.devices[d].task_bits);
            format!("ID {d} ({:.1} Mbit)", bits / 1e6)
        })
        .collect();
    let per_slot = |d: usize, f: fn(&DeviceBehavior) -> &Vec<f64>, map: fn(f64) -> f64| -> Vec<(f64, f64)> {
        let len = report.replays.iter().map(|r| f(&r.devices[d]).len()).min().unwrap_or(0);
        (0..len)
            .map(|k| {
                let mean = report.replays.iter().map(|r| f(&r.devices[d])[k]).sum::<f64>() / report.replays.len() as f64;
                (k as f64, map(mean))
            })
            .collect()
    };
    let lines = |f: fn(&DeviceBehavior) -> &Vec<f64>, map: fn(f64) -> f64| -> Vec<Series> {
        names
            .iter()
            .enumerate()
            .map(|(d, n)| Series {
                name: n.clone(),
                points: per_slot(d, f, map),
            })
            .collect()
    };
    plot::render(
        "Behavior on pinned task volumes",
        &[
            Panel::Bars {
                title: "task completion time (median)".into(),
                y_label: "seconds".into(),
                bars: names
                    .iter()
                    .enumerate()
                    .map(|(d, n)| (n.clone(), report.median_completion(d)))
                    .collect(),
            },
            Panel::Lines {
                title: "channel gain to serving UAV (mean)".into(),
                x_label: "slot".into(),
                y_label: "gain (dB)".into(),
                series: lines(|b| &b.gain_per_slot, |g| 10.0 * g.log10()),
            },
            Panel::Lines {
                title: "cumulative offloaded fraction (mean)".into(),
                x_label: "slot".into(),
                y_label: "fraction of task".into(),
                series: lines(|b| &b.cumulative_offload, |v| v),
            },
        ],
    )
}

/// Replays the fixture, writes `behaviors.csv`, `behavior_slots.csv` and
/// `plots/fig4.svg`.
pub fn behaviors_run(checkpoint: &Checkpoint, behavior: &BehaviorConfig, out: &Path) -> Result<BehaviorReport> {
    let policy = checkpoint.policy()?;
    let report = replay_behaviors(&policy, behavior)?;
    let (summary, slots) = behaviors_csv(&report)?;
    let mut config = ExperimentConfig::from_scheme_config(&checkpoint.config);
    config.behavior = behavior.clone();
    let mut writer = RunWriter::new(out)?;
    writer.write("behaviors.csv", &summary)?;
    writer.write("behavior_slots.csv", &slots)?;
    writer.write("plots/fig4.svg", behavior_figure(&report).as_bytes())?;
    writer.finish("behaviors", &config, Some(checkpoint.scheme), None)?;
    Ok(report)
}

impl ExperimentConfig {
    pub fn from_scheme_config(c: &SchemeConfig) -> Self {
        Self {
            world: c.world.clone(),
            agent: c.agent.clone(),
            arch: c.arch.clone(),
            wiring: c.wiring,
            episodes: c.episodes,
            train_frames: c.train_frames,
            eval: c.eval.clone(),
            ..Default::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[f64::NAN]), None);
    }
}
