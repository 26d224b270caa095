//! Batch commands: scenario generation, training, arm comparison and the
//! speed sweep. Every command writes CSV plus a `manifest.json`.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::Utc;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use ecoedgetwin::a2c::{
    build_networks, infer_offloading, tail_mean, train_logged, EpisodeRecord, InferConfig,
    TrainConfig, TrainReport,
};
use ecoedgetwin::baseline::wrap_benchmark;
use ecoedgetwin::env::{load_tdrive, Environment, MecEnv, MobilitySource, StepLog};
use ecoedgetwin::model::{build_scenario, Scenario};
use ecoedgetwin::nn::Network;
use ecoedgetwin::{Error, Result, ScenarioConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
const EXIT_OTHER: i32 = 1;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::Json(_) => EXIT_CONFIG,
        Error::Data(_) | Error::Csv(_) => EXIT_DATA,
        Error::Numeric(_) | Error::InfeasibleLink(_) | Error::Domain(_) => EXIT_NUMERIC,
        _ => EXIT_OTHER,
    }
}

#[derive(Debug, Parser)]
#[command(name = "ecoedgetwin", version, about = "Edge offloading simulator with a digital-twin aware A2C agent")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a scenario and write it as JSON.
    Generate(GenerateArgs),
    /// Train one arm and write per-episode metrics and a checkpoint.
    Train(TrainArgs),
    /// Train both arms on each seed and write paired metrics.
    Compare(CompareArgs),
    /// Evaluate a frozen policy at several user speeds.
    SpeedSweep(SweepArgs),
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Training seed; defaults to the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// `synthetic` or a T-Drive CSV file.
    #[arg(long, default_value = "synthetic")]
    pub trajectories: String,
    /// Train the benchmark arm (no DT features, no DT action).
    #[arg(long)]
    pub benchmark: bool,
    /// Learner settings as JSON; missing keys keep their defaults.
    #[arg(long)]
    pub train_config: Option<PathBuf>,
    /// Also write `steps.csv`.
    #[arg(long)]
    pub step_log: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    pub seeds: Vec<u64>,
    #[arg(long, default_value = "synthetic")]
    pub trajectories: String,
    #[arg(long)]
    pub train_config: Option<PathBuf>,
    /// Episodes per arm in the summary's tail columns.
    #[arg(long, default_value_t = 20)]
    pub tail: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0,20,40,60")]
    pub speeds: Vec<f64>,
    /// Actor checkpoint; trained from scratch when absent.
    #[arg(long)]
    pub actor: Option<PathBuf>,
    /// Critic checkpoint (only read together with --actor).
    #[arg(long)]
    pub critic: Option<PathBuf>,
    /// Training episodes when no checkpoint is given.
    #[arg(long, default_value_t = 100)]
    pub train_episodes: usize,
    /// Evaluation episodes per speed.
    #[arg(long, default_value_t = 20)]
    pub episodes: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub train_config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Inputs and provenance of one command run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: String,
    pub seed: u64,
    pub config_sha256: String,
    pub output_dir: String,
    pub flags: Vec<(String, String)>,
    pub started_at: String,
    pub finished_at: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn write_manifest(dir: &Path, mut m: RunManifest) -> Result<()> {
    m.finished_at = Utc::now().to_rfc3339();
    let f = File::create(dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(BufWriter::new(f), &m)?;
    Ok(())
}

struct Loaded {
    config: ScenarioConfig,
    hash: String,
}

fn load_config(path: &Path) -> Result<Loaded> {
    let bytes = fs::read(path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
    Ok(Loaded {
        config: ScenarioConfig::from_json_str(&text)?,
        hash: sha256_hex(&bytes),
    })
}

fn load_train_config(path: Option<&Path>) -> Result<TrainConfig> {
    let Some(p) = path else {
        return Ok(TrainConfig::default());
    };
    let text = fs::read_to_string(p).map_err(|e| Error::config(p.display().to_string(), e.to_string()))?;
    let tc: TrainConfig =
        serde_json::from_str(&text).map_err(|e| Error::config(p.display().to_string(), e.to_string()))?;
    tc.validate()?;
    Ok(tc)
}

fn mobility_source(source: &str, cfg: &ScenarioConfig) -> Result<MobilitySource<f64>> {
    if source == "synthetic" {
        return Ok(MobilitySource::Synthetic);
    }
    let data = load_tdrive(source)?;
    log::info!(
        "loaded {} trajectories ({} malformed, {} dropped rows)",
        data.trajectories.len(),
        data.malformed_rows,
        data.dropped_rows
    );
    let paths = data.to_paths(cfg.area_side_km, cfg.mobility.slot_s);
    Ok(MobilitySource::Replay(Arc::new(paths)))
}

fn manifest(command: &str, config: &Path, seed: u64, hash: &str, out: &Path, flags: Vec<(String, String)>) -> RunManifest {
    RunManifest {
        command: command.into(),
        config_path: config.display().to_string(),
        seed,
        config_sha256: hash.into(),
        output_dir: out.display().to_string(),
        flags,
        started_at: Utc::now().to_rfc3339(),
        finished_at: String::new(),
    }
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<Scenario<f64>> {
    let loaded = load_config(&args.config)?;
    let seed = args.seed.unwrap_or(loaded.config.seed);
    let scenario = build_scenario::<f64>(&loaded.config, seed)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let f = File::create(&args.out)?;
    serde_json::to_writer_pretty(BufWriter::new(f), &scenario)?;
    Ok(scenario)
}

/// Trains one arm on a fresh environment.
pub fn train_arm<W: std::io::Write>(
    scenario: &Scenario<f64>,
    mobility: MobilitySource<f64>,
    benchmark: bool,
    tc: &TrainConfig,
    log: Option<&mut StepLog<W>>,
) -> Result<TrainReport<f64>> {
    let env = MecEnv::new(scenario.clone(), mobility)?;
    let (actor, critic) = build_networks::<f64>(env.state_dim(), env.action_count(), &tc.hidden, tc.seed)?;
    if benchmark {
        train_logged(&mut wrap_benchmark(env), actor, critic, tc, log)
    } else {
        let mut env = env;
        train_logged(&mut env, actor, critic, tc, log)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub episodes: usize,
    pub tail_reward: f64,
    pub total_energy_j: f64,
    pub mean_qoe: f64,
}

pub fn cmd_train(args: &TrainArgs) -> Result<TrainSummary> {
    let loaded = load_config(&args.config)?;
    let cfg = &loaded.config;
    let mut tc = load_train_config(args.train_config.as_deref())?;
    if let Some(n) = args.episodes {
        tc.episodes = n;
    }
    tc.seed = args.seed.unwrap_or(cfg.seed);
    tc.validate()?;
    fs::create_dir_all(&args.out)?;
    let m = manifest(
        "train",
        &args.config,
        tc.seed,
        &loaded.hash,
        &args.out,
        vec![
            ("episodes".into(), tc.episodes.to_string()),
            ("trajectories".into(), args.trajectories.clone()),
            ("benchmark".into(), args.benchmark.to_string()),
        ],
    );

    let scenario = build_scenario::<f64>(cfg, cfg.seed)?;
    let mobility = mobility_source(&args.trajectories, cfg)?;
    let report = if args.step_log {
        let f = BufWriter::new(File::create(args.out.join("steps.csv"))?);
        let mut log = StepLog::new(f)?;
        train_arm(&scenario, mobility, args.benchmark, &tc, Some(&mut log))?
    } else {
        train_arm::<std::io::Sink>(&scenario, mobility, args.benchmark, &tc, None)?
    };

    report.write_csv(BufWriter::new(File::create(args.out.join("train.csv"))?))?;
    report.actor.save(args.out.join("actor.json"))?;
    report.critic.save(args.out.join("critic.json"))?;
    write_manifest(&args.out, m)?;

    let summary = TrainSummary {
        episodes: report.records.len(),
        tail_reward: report.tail_mean(20, |r| r.total_reward),
        total_energy_j: report.records.iter().map(|r| r.energy_j).sum(),
        mean_qoe: report.tail_mean(report.records.len(), |r| r.qoe),
    };
    println!(
        "episodes {}  mean reward (last 20) {:.4}  total energy {:.4} J  mean qoe {:.4}",
        summary.episodes, summary.tail_reward, summary.total_energy_j, summary.mean_qoe
    );
    Ok(summary)
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub energy_mean: f64,
    pub energy_std: f64,
    pub qoe_mean: f64,
    pub qoe_std: f64,
    pub latency_mean: f64,
    pub latency_std: f64,
    /// Means over the last `tail` episodes of every seed.
    pub tail_energy_mean: f64,
    pub tail_qoe_mean: f64,
    pub tail_latency_mean: f64,
}

fn summarize(runs: &[Vec<EpisodeRecord>], tail: usize) -> ArmSummary {
    let all: Vec<&EpisodeRecord> = runs.iter().flatten().collect();
    let col = |f: fn(&EpisodeRecord) -> f64| all.iter().map(|r| f(r)).collect::<Vec<_>>();
    let (em, es) = mean_std(&col(|r| r.energy_j));
    let (qm, qs) = mean_std(&col(|r| r.qoe));
    let (lm, ls) = mean_std(&col(|r| r.latency_s));
    let tails = |f: fn(&EpisodeRecord) -> f64| {
        runs.iter().map(|r| tail_mean(r, tail, f)).sum::<f64>() / runs.len().max(1) as f64
    };
    ArmSummary {
        energy_mean: em,
        energy_std: es,
        qoe_mean: qm,
        qoe_std: qs,
        latency_mean: lm,
        latency_std: ls,
        tail_energy_mean: tails(|r| r.energy_j),
        tail_qoe_mean: tails(|r| r.qoe),
        tail_latency_mean: tails(|r| r.latency_s),
    }
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub seeds: Vec<u64>,
    /// Per seed, EcoEdgeTwin records.
    pub eco: Vec<Vec<EpisodeRecord>>,
    /// Per seed, benchmark records.
    pub bench: Vec<Vec<EpisodeRecord>>,
    pub eco_summary: ArmSummary,
    pub bench_summary: ArmSummary,
}

pub const COMPARE_HEADER: [&str; 12] = [
    "seed",
    "episode",
    "eco_reward",
    "eco_scaled_reward",
    "eco_energy_j",
    "eco_latency_s",
    "eco_qoe",
    "bench_reward",
    "bench_scaled_reward",
    "bench_energy_j",
    "bench_latency_s",
    "bench_qoe",
];

pub const SUMMARY_HEADER: [&str; 20] = [
    "seeds",
    "episodes",
    "eco_energy_mean",
    "eco_energy_std",
    "eco_qoe_mean",
    "eco_qoe_std",
    "eco_latency_mean",
    "eco_latency_std",
    "bench_energy_mean",
    "bench_energy_std",
    "bench_qoe_mean",
    "bench_qoe_std",
    "bench_latency_mean",
    "bench_latency_std",
    "eco_tail_energy_mean",
    "eco_tail_qoe_mean",
    "eco_tail_latency_mean",
    "bench_tail_energy_mean",
    "bench_tail_qoe_mean",
    "bench_tail_latency_mean",
];

pub fn cmd_compare(args: &CompareArgs) -> Result<Comparison> {
    let loaded = load_config(&args.config)?;
    let cfg = &loaded.config;
    let mut base = load_train_config(args.train_config.as_deref())?;
    base.episodes = args.episodes;
    base.eval_interval = 0;
    base.validate()?;
    if args.seeds.is_empty() {
        return Err(Error::config("seeds", "need at least one seed"));
    }
    fs::create_dir_all(&args.out)?;
    let m = manifest(
        "compare",
        &args.config,
        args.seeds[0],
        &loaded.hash,
        &args.out,
        vec![
            ("episodes".into(), args.episodes.to_string()),
            (
                "seeds".into(),
                args.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(","),
            ),
            ("trajectories".into(), args.trajectories.clone()),
        ],
    );
    let scenario = build_scenario::<f64>(cfg, cfg.seed)?;
    let mobility = mobility_source(&args.trajectories, cfg)?;

    let jobs: Vec<(u64, bool)> = args.seeds.iter().flat_map(|&s| [(s, false), (s, true)]).collect();
    let results: Vec<Result<Vec<EpisodeRecord>>> = jobs
        .par_iter()
        .map(|&(seed, bench)| {
            let tc = TrainConfig { seed, ..base.clone() };
            train_arm::<std::io::Sink>(&scenario, mobility.clone(), bench, &tc, None).map(|r| r.records)
        })
        .collect();
    let mut eco = Vec::new();
    let mut bench = Vec::new();
    for (r, &(_, is_bench)) in results.into_iter().zip(&jobs) {
        if is_bench {
            bench.push(r?);
        } else {
            eco.push(r?);
        }
    }

    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(args.out.join("compare.csv"))?));
    w.write_record(COMPARE_HEADER)?;
    for ((seed, e), b) in args.seeds.iter().zip(&eco).zip(&bench) {
        for (x, y) in e.iter().zip(b) {
            w.write_record([
                seed.to_string(),
                x.episode.to_string(),
                x.total_reward.to_string(),
                x.scaled_reward.to_string(),
                x.energy_j.to_string(),
                x.latency_s.to_string(),
                x.qoe.to_string(),
                y.total_reward.to_string(),
                y.scaled_reward.to_string(),
                y.energy_j.to_string(),
                y.latency_s.to_string(),
                y.qoe.to_string(),
            ])?;
        }
    }
    w.flush()?;

    let eco_summary = summarize(&eco, args.tail);
    let bench_summary = summarize(&bench, args.tail);
    let mut s = csv::Writer::from_writer(BufWriter::new(File::create(args.out.join("compare_summary.csv"))?));
    s.write_record(SUMMARY_HEADER)?;
    let (e, b) = (&eco_summary, &bench_summary);
    let mut row = vec![args.seeds.len().to_string(), args.episodes.to_string()];
    row.extend(
        [
            e.energy_mean,
            e.energy_std,
            e.qoe_mean,
            e.qoe_std,
            e.latency_mean,
            e.latency_std,
            b.energy_mean,
            b.energy_std,
            b.qoe_mean,
            b.qoe_std,
            b.latency_mean,
            b.latency_std,
            e.tail_energy_mean,
            e.tail_qoe_mean,
            e.tail_latency_mean,
            b.tail_energy_mean,
            b.tail_qoe_mean,
            b.tail_latency_mean,
        ]
        .iter()
        .map(f64::to_string),
    );
    s.write_record(&row)?;
    s.flush()?;
    write_manifest(&args.out, m)?;
    println!(
        "energy/episode: eco {:.4} J, bench {:.4} J   qoe: eco {:.4}, bench {:.4}  (last {} episodes)",
        e.tail_energy_mean, b.tail_energy_mean, e.tail_qoe_mean, b.tail_qoe_mean, args.tail
    );
    Ok(Comparison {
        seeds: args.seeds.clone(),
        eco,
        bench,
        eco_summary,
        bench_summary,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub speed_kmh: f64,
    /// Mean per-step latency.
    pub latency_s: f64,
    pub migrations: f64,
    pub energy_j: f64,
    pub qoe: f64,
}

pub const SWEEP_HEADER: [&str; 5] = ["speed_kmh", "latency_s", "migrations", "energy_j", "qoe"];

/// Frozen greedy evaluation of `actor` at each speed, with identical
/// evaluation seeds across speeds.
pub fn sweep_speeds(
    scenario: &Scenario<f64>,
    actor: &Network<f64>,
    critic: &Network<f64>,
    speeds: &[f64],
    episodes: usize,
    max_steps: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    speeds
        .iter()
        .map(|&v| {
            if !(v >= 0.0) {
                return Err(Error::config("speeds", format!("speed {v} must be >= 0")));
            }
            let mut env = MecEnv::new(scenario.clone(), MobilitySource::Synthetic)?.with_speed(v);
            let (mut a, mut c) = (actor.clone(), critic.clone());
            let cfg = InferConfig {
                episodes,
                max_steps,
                frozen: true,
                greedy: true,
                seed,
                ..InferConfig::default()
            };
            let rep = infer_offloading(&mut env, &mut a, &mut c, &cfg)?;
            let n = rep.records.len().max(1) as f64;
            let mean = |f: fn(&EpisodeRecord) -> f64| rep.records.iter().map(f).sum::<f64>() / n;
            Ok(SweepRow {
                speed_kmh: v,
                latency_s: mean(|r| r.latency_s),
                migrations: mean(|r| r.migrations as f64),
                energy_j: mean(|r| r.energy_j),
                qoe: mean(|r| r.qoe),
            })
        })
        .collect()
}

pub fn cmd_speed_sweep(args: &SweepArgs) -> Result<Vec<SweepRow>> {
    let loaded = load_config(&args.config)?;
    let cfg = &loaded.config;
    let mut tc = load_train_config(args.train_config.as_deref())?;
    tc.episodes = args.train_episodes;
    tc.seed = args.seed.unwrap_or(cfg.seed);
    tc.eval_interval = 0;
    tc.validate()?;
    fs::create_dir_all(&args.out)?;
    let m = manifest(
        "speed-sweep",
        &args.config,
        tc.seed,
        &loaded.hash,
        &args.out,
        vec![
            (
                "speeds".into(),
                args.speeds.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
            ),
            ("episodes".into(), args.episodes.to_string()),
        ],
    );
    let scenario = build_scenario::<f64>(cfg, cfg.seed)?;
    let (actor, critic) = match &args.actor {
        Some(p) => {
            let actor = Network::load(p, None)?;
            let critic = match &args.critic {
                Some(c) => Network::load(c, None)?,
                None => {
                    let mut dims = actor.layer_dims();
                    *dims.last_mut().expect("nonempty dims") = 1;
                    Network::zeros(&dims)?
                }
            };
            (actor, critic)
        }
        None => {
            let r = train_arm::<std::io::Sink>(&scenario, MobilitySource::Synthetic, false, &tc, None)?;
            (r.actor, r.critic)
        }
    };
    let rows = sweep_speeds(&scenario, &actor, &critic, &args.speeds, args.episodes, tc.max_steps, tc.seed)?;
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(args.out.join("sweep.csv"))?));
    w.write_record(SWEEP_HEADER)?;
    for r in &rows {
        w.write_record([
            r.speed_kmh.to_string(),
            r.latency_s.to_string(),
            r.migrations.to_string(),
            r.energy_j.to_string(),
            r.qoe.to_string(),
        ])?;
    }
    w.flush()?;
    write_manifest(&args.out, m)?;
    Ok(rows)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => {
            let s = cmd_generate(&a)?;
            println!("{} servers, {} users -> {}", s.servers.len(), s.users.len(), a.out.display());
        }
        Command::Train(a) => {
            cmd_train(&a)?;
        }
        Command::Compare(a) => {
            cmd_compare(&a)?;
        }
        Command::SpeedSweep(a) => {
            for r in cmd_speed_sweep(&a)? {
                println!(
                    "{:>6.1} km/h  latency {:.6} s  migrations {:.2}",
                    r.speed_kmh, r.latency_s, r.migrations
                );
            }
        }
    }
    Ok(())
}
