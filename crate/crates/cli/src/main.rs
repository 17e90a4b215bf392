use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use gridresponder::config::RunConfig;
use gridresponder::cyber::write_ndjson;
use gridresponder::env::{action_space, Scenario, StepRecord, VoltVarEnv};
use gridresponder::experiment::{build_env, evaluate_policy, rid_report, EvalSummary};
use gridresponder::fusion::{fuse, generate_dataset, read_dataset_csv, write_dataset_csv, write_embedding_csv};
use gridresponder::grid::{CaseId, ControlAction};
use gridresponder::responder::{
    assess_env, respond, AssessLimits, FeedbackStore, PolicyHandle, Recommendation, SystemAssessment, SystemStatus,
};
use gridresponder::rl::{load_checkpoint, save_checkpoint, train_with_progress, write_curve_csv, Algorithm, CheckpointMeta};
use gridresponder_service::{read_episode, AppState, Live};

#[derive(Parser)]
#[command(name = "gridresponder", version, about = "Volt-Var response engine: simulate, train, analyse and serve")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML run configuration.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set train.ppo.learning_rate=1e-3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    case: Option<CaseId>,
    #[arg(long)]
    case_file: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<Scenario>,
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory; defaults to `<output_dir>/<command>-<scenario>-...`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a PPO or A2C policy and evaluate it.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        algo: Option<Algorithm>,
        #[arg(long)]
        steps: Option<usize>,
        /// Freeze RID-redundant devices.
        #[arg(long)]
        use_rid: bool,
    },
    /// Evaluate a checkpoint with deterministic actions.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Controller role discovery on the scenario's contingency network.
    Rid {
        #[command(flatten)]
        common: Common,
    },
    /// Generate (or read) a telemetry dataset and run the fusion pipeline.
    Fuse {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        frames: Option<usize>,
        /// Existing dataset CSV instead of a generated one.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Run one episode, executing the top recommendation whenever the state is abnormal.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Serve the HTTP API over a live simulation.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        addr: Option<String>,
        #[arg(long)]
        episodes_dir: Option<PathBuf>,
        #[arg(long)]
        feedback_log: Option<PathBuf>,
    },
    /// Print an episode log step by step at the replay pace.
    Replay {
        episode: PathBuf,
        /// Delay between steps, ms.
        #[arg(long, default_value_t = 1000)]
        step_ms: u64,
    },
}

/// Exit code 2: a named input file does not exist.
#[derive(Debug)]
struct MissingFile(PathBuf, &'static str);

impl std::fmt::Display for MissingFile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} not found: {}", self.1, self.0.display())
    }
}

impl std::error::Error for MissingFile {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<MissingFile>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn require(path: &Path, what: &'static str) -> Result<()> {
    if !path.exists() {
        return Err(MissingFile(path.to_path_buf(), what).into());
    }
    Ok(())
}

/// Defaults, then `base` or the config file, then `--set`, then flags.
fn resolve(common: &Common, base: Option<RunConfig>) -> Result<RunConfig> {
    let mut cfg = match (&common.config, base) {
        (Some(p), _) => {
            require(p, "config file")?;
            RunConfig::load(Some(p))?
        }
        (None, Some(b)) => b,
        (None, None) => RunConfig::default(),
    };
    for kv in &common.set {
        let (k, v) = kv.split_once('=').with_context(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(c) = common.case {
        cfg.case = c;
        cfg.case_file = None;
    }
    if let Some(p) = &common.case_file {
        require(p, "case file")?;
        cfg.case_file = Some(p.clone());
    }
    if let Some(s) = common.scenario {
        cfg.scenario = s;
        // a scenario flag alone picks the case it is defined on
        if common.case.is_none() && cfg.case_file.is_none() {
            if let Some(c) = s.native_case() {
                cfg.case = c;
            }
        }
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn case_label(cfg: &RunConfig) -> String {
    match &cfg.case_file {
        Some(p) => p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "case".into()),
        None => cfg.case.to_string(),
    }
}

fn run_dir(common: &Common, cfg: &RunConfig, name: &str) -> Result<PathBuf> {
    let dir = common.out.clone().unwrap_or_else(|| cfg.output_dir.join(name));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

#[derive(Serialize)]
struct RunRecord<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    argv: Vec<String>,
    case: String,
    config: &'a RunConfig,
    elapsed_s: f64,
    result: T,
}

fn write_run_json<T: Serialize>(dir: &Path, command: &str, cfg: &RunConfig, started: Instant, result: T) -> Result<()> {
    let rec = RunRecord {
        command,
        version: env!("CARGO_PKG_VERSION"),
        argv: std::env::args().collect(),
        case: case_label(cfg),
        config: cfg,
        elapsed_s: started.elapsed().as_secs_f64(),
        result,
    };
    write_json(&dir.join("run.json"), &rec)
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut f, v)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

fn write_episodes(path: &Path, logs: &[Vec<StepRecord>]) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    for log in logs {
        write_ndjson(&mut f, log)?;
    }
    f.flush()?;
    Ok(())
}

fn band(cfg: &RunConfig) -> (f64, f64) {
    (cfg.env.weights.v_lo, cfg.env.weights.v_hi)
}

/// Loads a checkpoint, mapping a missing file to exit code 2.
fn load_policy(path: &Path) -> Result<(PolicyHandle, CheckpointMeta)> {
    require(path, "checkpoint")?;
    let (policy, header) = load_checkpoint(path).with_context(|| format!("reading {}", path.display()))?;
    let handle = PolicyHandle { policy, checkpoint: path.display().to_string(), algo: header.meta.algo.clone() };
    Ok((handle, header.meta))
}

fn check_policy_fits(policy: &PolicyHandle, env: &VoltVarEnv) -> Result<()> {
    use gridresponder::rl::Environment;
    let arch = &policy.policy.net.arch;
    if arch.obs_dim != env.observation_dim() || arch.action_spec() != env.action_spec() {
        bail!(
            "checkpoint {} does not fit this environment (observation {} vs {}, action spec {:?} vs {:?})",
            policy.checkpoint,
            arch.obs_dim,
            env.observation_dim(),
            arch.action_spec(),
            env.action_spec()
        );
    }
    Ok(())
}

fn run(cmd: Cmd) -> Result<()> {
    let started = Instant::now();
    match cmd {
        Cmd::Train { common, algo, steps, use_rid } => {
            let mut cfg = resolve(&common, None)?;
            if let Some(a) = algo {
                cfg.train.algo = a;
            }
            if let Some(s) = steps {
                cfg.train.total_steps = s;
            }
            cfg.use_rid |= use_rid;
            cfg.validate()?;
            let name = format!(
                "train-{}-{}-{}{}-s{}",
                case_label(&cfg),
                cfg.scenario,
                cfg.train.algo,
                if cfg.use_rid { "-rid" } else { "" },
                cfg.seed
            );
            let dir = run_dir(&common, &cfg, &name)?;
            let (mut env, roles) = build_env(&cfg)?;
            let frozen: Vec<String> = env.space().frozen.iter().map(|k| k.to_string()).collect();
            eprintln!(
                "training {} on {} / {} for {} steps (seed {}, {} of {} devices controllable)",
                cfg.train.algo,
                case_label(&cfg),
                cfg.scenario,
                cfg.train.total_steps,
                cfg.seed,
                env.space().dim_after,
                env.space().dim_before
            );
            let every = (cfg.train.total_steps / cfg.train.log_interval / 10).max(1);
            let mut rows = 0usize;
            let out = train_with_progress(&mut env, &cfg.train, cfg.seed, &mut |_, p| {
                rows += 1;
                if rows % every == 0 {
                    eprintln!("  step {:>7}  mean episode reward {:>10.3}", p.step, p.mean_reward);
                }
                Ok(())
            })?;
            if let Some(msg) = &out.diverged {
                eprintln!("warning: training diverged ({msg}); keeping the last finite policy");
            }
            write_curve_csv(File::create(dir.join("curve.csv"))?, &out.curve)?;
            let meta = CheckpointMeta {
                algo: cfg.train.algo.to_string(),
                case: case_label(&cfg),
                scenario: cfg.scenario.to_string(),
                seed: cfg.seed,
                step: out.steps,
                frozen: frozen.clone(),
                config: serde_json::to_value(&cfg)?,
            };
            save_checkpoint(&dir.join("policy.ckpt"), &out.policy, &meta)?;
            if let Some(r) = &roles {
                write_json(&dir.join("roles.json"), r)?;
            }
            // weights are stored as f32; evaluate what was saved
            let (saved, _) = load_checkpoint(&dir.join("policy.ckpt"))?;
            let (summary, logs) = evaluate_policy(&mut env, &saved, cfg.eval_episodes, band(&cfg))?;
            write_json(&dir.join("eval.json"), &summary)?;
            write_episodes(&dir.join("eval_episodes.ndjson"), &logs)?;
            print_eval(&summary);
            let final_curve = out.curve.last().map(|p| p.mean_reward);
            write_run_json(
                &dir,
                "train",
                &cfg,
                started,
                json!({
                    "steps": out.steps,
                    "episodes": out.episodes,
                    "diverged": out.diverged,
                    "frozen": frozen,
                    "final_curve_reward": final_curve,
                    "eval": summary,
                    "checkpoint": dir.join("policy.ckpt"),
                }),
            )?;
            println!("run directory: {}", dir.display());
        }
        Cmd::Eval { common, checkpoint, episodes } => {
            let (policy, meta) = load_policy(&checkpoint)?;
            let base: Option<RunConfig> = serde_json::from_value(meta.config.clone()).ok();
            let mut cfg = resolve(&common, base)?;
            if let Some(n) = episodes {
                cfg.eval_episodes = n;
            }
            cfg.use_rid = !meta.frozen.is_empty();
            cfg.validate()?;
            let name = format!("eval-{}-{}-{}-s{}", case_label(&cfg), cfg.scenario, meta.algo, meta.seed);
            let dir = run_dir(&common, &cfg, &name)?;
            let (mut env, _) = build_env(&cfg)?;
            check_policy_fits(&policy, &env)?;
            let (summary, logs) = evaluate_policy(&mut env, &policy.policy, cfg.eval_episodes, band(&cfg))?;
            write_json(&dir.join("eval.json"), &summary)?;
            write_episodes(&dir.join("eval_episodes.ndjson"), &logs)?;
            print_eval(&summary);
            write_run_json(&dir, "eval", &cfg, started, json!({ "checkpoint": checkpoint, "eval": summary }))?;
            println!("run directory: {}", dir.display());
        }
        Cmd::Rid { common } => {
            let cfg = resolve(&common, None)?;
            let dir = run_dir(&common, &cfg, &format!("rid-{}-{}", case_label(&cfg), cfg.scenario))?;
            let env = VoltVarEnv::new(cfg.network()?, cfg.scenario, cfg.env.clone())?;
            let report = rid_report(&env, &case_label(&cfg), &cfg.rid)?;
            let space = action_space(env.network(), Some(&report.roles))?;
            write_json(&dir.join("rid.json"), &report)?;
            let names = |v: &[gridresponder::grid::DeviceKey]| v.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(", ");
            println!("case {} / scenario {}", report.case, report.scenario);
            println!(
                "targets: {} ({})",
                report.sensitivity.quantities.len(),
                if report.targets_from_violations { "violations" } else { "all bus voltages, no violation present" }
            );
            println!("unavailable: {}", if report.unavailable.is_empty() { "none".into() } else { names(&report.unavailable) });
            println!("rank: {}", report.roles.rank);
            println!("essential: {}", names(&report.roles.essential));
            println!("critical: {}", if report.roles.critical.is_empty() { "none".into() } else { names(&report.roles.critical) });
            println!("redundant: {}", names(&report.roles.redundant));
            if !report.has_critical_battery() {
                println!("No critical battery");
            }
            println!(
                "action space: {} -> {} devices (reduction {:.1}%)",
                space.dim_before,
                space.dim_after,
                100.0 * space.reduction_ratio
            );
            write_run_json(
                &dir,
                "rid",
                &cfg,
                started,
                json!({ "rank": report.roles.rank, "reduction_ratio": space.reduction_ratio, "critical_battery": report.has_critical_battery() }),
            )?;
            println!("run directory: {}", dir.display());
        }
        Cmd::Fuse { common, frames, dataset } => {
            let mut cfg = resolve(&common, None)?;
            if let Some(n) = frames {
                cfg.fuse.frames = n;
            }
            cfg.validate()?;
            let dir = run_dir(&common, &cfg, &format!("fuse-{}-{}-s{}", case_label(&cfg), cfg.scenario, cfg.seed))?;
            let data = match &dataset {
                Some(p) => {
                    require(p, "dataset")?;
                    read_dataset_csv(File::open(p)?)?
                }
                None => {
                    if cfg.scenario == Scenario::Normal {
                        bail!("fuse needs an attack scenario (uc1, uc2 or wscc9_dos) to generate a dataset");
                    }
                    generate_dataset(&cfg.network()?, cfg.scenario, cfg.fuse.frames, cfg.seed, &cfg.env)?
                }
            };
            write_dataset_csv(File::create(dir.join("dataset.csv"))?, &data)?;
            let report = fuse(&data, &cfg.fuse.options, cfg.seed)?;
            write_embedding_csv(
                File::create(dir.join("embedding.csv"))?,
                &report.embedding.points,
                &report.clustering.labels,
                &data,
            )?;
            let summary = json!({
                "frames": data.len(),
                "kl": report.embedding.kl,
                "explained_ratio": report.explained_ratio,
                "scores": report.scores,
                "silhouette_fused": report.silhouette_fused,
                "silhouette_physical": report.silhouette_physical,
                "stable_cluster": report.clustering.stable_cluster,
            });
            write_json(&dir.join("fusion.json"), &report)?;
            if let Some(s) = &report.scores {
                println!("precision {:.4} recall {:.4} f1 {:.4}", s.precision, s.recall, s.f1);
            }
            if let (Some(a), Some(b)) = (report.silhouette_fused, report.silhouette_physical) {
                println!("silhouette cyber+physical {a:.4}, physical only {b:.4}");
            }
            write_run_json(&dir, "fuse", &cfg, started, summary)?;
            println!("run directory: {}", dir.display());
        }
        Cmd::Simulate { common, checkpoint } => {
            let cfg = resolve(&common, None)?;
            let policy = checkpoint.as_deref().map(load_policy).transpose()?.map(|(p, _)| p);
            let dir = run_dir(&common, &cfg, &format!("simulate-{}-{}-s{}", case_label(&cfg), cfg.scenario, cfg.seed))?;
            let mut env = VoltVarEnv::new(cfg.network()?, cfg.scenario, cfg.env.clone())?;
            if let Some(p) = &policy {
                check_policy_fits(p, &env)?;
            }
            let result = simulate(&mut env, &cfg, policy.as_ref(), &dir)?;
            write_run_json(&dir, "simulate", &cfg, started, &result)?;
            println!(
                "{} hours, {} recommendations executed, episode reward {:.3}, {} hours fully in band",
                result.hours, result.executed, result.total_reward, result.hours_in_band
            );
            println!("run directory: {}", dir.display());
        }
        Cmd::Serve { common, checkpoint, addr, episodes_dir, feedback_log } => {
            let mut cfg = resolve(&common, None)?;
            if let Some(a) = addr {
                cfg.serve.addr = a;
            }
            if checkpoint.is_some() {
                cfg.serve.checkpoint = checkpoint;
            }
            if episodes_dir.is_some() {
                cfg.serve.episodes_dir = episodes_dir;
            }
            if feedback_log.is_some() {
                cfg.serve.feedback_log = feedback_log;
            }
            let policy = cfg.serve.checkpoint.as_deref().map(load_policy).transpose()?.map(|(p, _)| p);
            let env = VoltVarEnv::new(cfg.network()?, cfg.scenario, cfg.env.clone())?;
            if let Some(p) = &policy {
                check_policy_fits(p, &env)?;
            }
            let store = match &cfg.serve.feedback_log {
                Some(p) => FeedbackStore::open(p)?,
                None => FeedbackStore::in_memory(),
            };
            let live = Live::new(env, case_label(&cfg), cfg.seed, store, policy, cfg.responder.clone())?;
            let mut state = AppState::new(live);
            state.episodes_dir = cfg.serve.episodes_dir.clone();
            state.replay_step = Duration::from_millis(cfg.serve.replay_step_ms);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(gridresponder_service::serve(Arc::new(state), &cfg.serve.addr))?;
        }
        Cmd::Replay { episode, step_ms } => {
            require(&episode, "episode log")?;
            let steps = read_episode(&episode)?;
            for (i, s) in steps.iter().enumerate() {
                if i > 0 {
                    std::thread::sleep(Duration::from_millis(step_ms));
                }
                let (lo, hi) = s.voltages.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
                println!(
                    "hour {:>2}  reward {:>8.4}  V [{lo:.4}, {hi:.4}]  commands {}  blocked {}",
                    s.hour,
                    s.reward.total,
                    s.action.commands.len(),
                    s.blocked_devices.len()
                );
            }
        }
    }
    Ok(())
}

fn print_eval(s: &EvalSummary) {
    println!(
        "eval: {} episodes, mean reward {:.3} (std {:.3}), f_volt {:.4} f_ctrl {:.4} f_power {:.4}, in band {:.1}% of steps",
        s.episodes,
        s.mean_reward,
        s.std_reward,
        s.f_volt,
        s.f_ctrl,
        s.f_power,
        100.0 * s.in_band_fraction
    );
}

/// One line of `events.ndjson`.
#[derive(Serialize)]
struct SimEvent<'a> {
    hour: usize,
    assessment: &'a SystemAssessment,
    recommendation: Option<&'a Recommendation>,
    executed: &'a ControlAction,
    reward: f64,
    blocked: Vec<String>,
}

#[derive(Serialize)]
struct SimResult {
    hours: usize,
    executed: usize,
    total_reward: f64,
    hours_in_band: usize,
}

fn simulate(env: &mut VoltVarEnv, cfg: &RunConfig, policy: Option<&PolicyHandle>, dir: &Path) -> Result<SimResult> {
    env.reset_state(cfg.seed)?;
    let limits = AssessLimits { v_lo: cfg.env.weights.v_lo, v_hi: cfg.env.weights.v_hi };
    let mut events = BufWriter::new(File::create(dir.join("events.ndjson"))?);
    let mut steps = Vec::new();
    let mut res = SimResult { hours: 0, executed: 0, total_reward: 0.0, hours_in_band: 0 };
    let mut next_id = 1;
    loop {
        let assessment = assess_env(env, &limits);
        let rec = if assessment.status == SystemStatus::Abnormal {
            let r = respond(&assessment, env, policy, &cfg.responder, next_id)?;
            next_id += 1;
            Some(r)
        } else {
            None
        };
        let action = rec.as_ref().and_then(|r| r.top()).map(|a| a.action.clone()).unwrap_or_default();
        let out = env.step_action(&action)?;
        res.executed += (!action.commands.is_empty()) as usize;
        res.hours += 1;
        res.total_reward += out.reward.total;
        res.hours_in_band += out.state.all_voltages_within(limits.v_lo, limits.v_hi) as usize;
        let ev = SimEvent {
            hour: out.record.hour,
            assessment: &assessment,
            recommendation: rec.as_ref(),
            executed: &action,
            reward: out.reward.total,
            blocked: out.blocked.iter().map(|k| k.to_string()).collect(),
        };
        serde_json::to_writer(&mut events, &ev)?;
        events.write_all(b"\n")?;
        steps.push(out.record);
        if out.done {
            break;
        }
    }
    events.flush()?;
    write_episodes(&dir.join("episode.ndjson"), &[steps])?;
    let mut cyber = BufWriter::new(File::create(dir.join("cyber_events.ndjson"))?);
    write_ndjson(&mut cyber, env.cyber().events())?;
    cyber.flush()?;
    Ok(res)
}
