//! `rebound`: simulate, plan, estimate, and evaluate bandit arms whose
//! rewards sag under repeated pulls and rebound with rest.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rebound_cli::experiment::{run_experiment, ExperimentSpec, TraceSpec};
use rebound_cli::io;
use rebound_core::dynamics::{ArmParams, EnvConfig, Environment, PullHistory};
use rebound_core::eep::{eep_run, EepConfig, ExplorationMode};
use rebound_core::planning::{
    lookahead_gap_bound, lookahead_plan, PlanMode, PlanRequest, SearchLimits,
};
use rebound_core::regret::lookahead_regret;
use rebound_core::sysid::{
    confidence_radii, ols_affine_fit, recover_params, residual_noise_std, small_ball_psi,
    ArmEstimate, ConfidenceRadii, EstimatedModel,
};
use serde::Deserialize;
use serde_json::json;
use std::fs;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "rebound", version, about = "Rebounding-arm bandit toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan a window of pulls for a given history and arm parameters.
    Plan(PlanArgs),
    /// Fit satiation dynamics from influence trajectories.
    Estimate(EstimateArgs),
    /// Emit a satiation/reward trace under an explicit pull schedule.
    Trace(TraceArgs),
    /// Run the explore-estimate-plan learner against a simulated environment.
    Eep(EepArgs),
    /// Score a recorded run against per-window optimal competitors.
    Regret(RegretArgs),
    /// Run a grid experiment described by a spec file.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct PlanArgs {
    /// JSON file with arms, history, window, mode, and limits.
    #[arg(long)]
    config: PathBuf,
    /// Write the plan JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Trajectory CSV (arm,index,value) with one trajectory per arm.
    #[arg(long)]
    input: PathBuf,
    /// Steps between consecutive pulls behind the trajectories.
    #[arg(long, default_value_t = 1)]
    spacing: usize,
    /// Confidence level for radii; omitted radii are not computed.
    #[arg(long)]
    delta: Option<f64>,
    /// Trajectory-length parameter used by the radii.
    #[arg(long, default_value_t = 5)]
    t_min: usize,
    /// Write the model JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TraceArgs {
    /// JSON file with the environment and the pull schedule.
    #[arg(long)]
    config: PathBuf,
    /// Output CSV (t,arm,satiation,reward,pulled).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EepArgs {
    /// JSON file with the environment (arms, sigma_z, seed).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    horizon: usize,
    #[arg(long)]
    window: usize,
    /// Planner mode: exact or heuristic.
    #[arg(long, default_value = "exact")]
    mode: String,
    /// Exploration layout: "repeated" or "interval:<m>".
    #[arg(long, default_value = "repeated")]
    exploration: String,
    /// Overrides the environment seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output run CSV (run_id,t,arm,reward,phase).
    #[arg(long)]
    out: PathBuf,
    /// Write the fitted model JSON here instead of stdout.
    #[arg(long)]
    model_out: Option<PathBuf>,
}

#[derive(Args)]
struct RegretArgs {
    /// Run CSV produced by `rebound eep`.
    #[arg(long)]
    run: PathBuf,
    /// JSON file with the true environment parameters.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    window: usize,
    /// Output CSV (episode,oracle,learner,gap).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment spec JSON.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the spec's output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker pool size (defaults to the number of cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Deserialize)]
struct PlanConfig {
    arms: Vec<ArmParams>,
    #[serde(default)]
    history: Vec<usize>,
    window: usize,
    #[serde(default)]
    mode: PlanMode,
    #[serde(default)]
    limits: SearchLimits,
}

#[derive(Deserialize)]
struct TraceConfig {
    env: EnvConfig,
    schedule: Vec<Option<usize>>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn emit_json(value: &serde_json::Value, out: Option<&PathBuf>) -> Result<()> {
    let text = format!("{value:#}\n");
    match out {
        Some(path) => {
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn parse_plan_mode(mode: &str) -> Result<PlanMode> {
    match mode {
        "exact" => Ok(PlanMode::Exact),
        "heuristic" => Ok(PlanMode::Heuristic),
        other => bail!("unknown planner mode {other:?} (expected exact or heuristic)"),
    }
}

fn parse_exploration(text: &str) -> Result<ExplorationMode> {
    if text == "repeated" {
        return Ok(ExplorationMode::Repeated);
    }
    if let Some(m) = text.strip_prefix("interval:") {
        let spacing: usize = m.parse().context("interval spacing must be an integer")?;
        return Ok(ExplorationMode::Interval { spacing });
    }
    bail!("unknown exploration {text:?} (expected repeated or interval:<m>)")
}

fn cmd_plan(args: &PlanArgs) -> Result<()> {
    let cfg: PlanConfig = read_json(&args.config)?;
    let t_start = cfg.history.len();
    let t_end = t_start + cfg.window;
    let history = PullHistory::from_actions(cfg.arms.len(), t_end, cfg.history.clone())?;
    let request = PlanRequest {
        arms: &cfg.arms,
        history: &history,
        t_start,
        t_end,
    };
    let plan = lookahead_plan(&request, cfg.mode, &cfg.limits)?;
    let gap_bound = lookahead_gap_bound(&cfg.arms, t_end, cfg.window)?;
    emit_json(
        &json!({
            "actions": plan.actions,
            "objective": plan.objective,
            "optimality": plan.optimality,
            "nodes_explored": plan.nodes_explored,
            "gap_bound": gap_bound,
        }),
        args.out.as_ref(),
    )
}

fn cmd_estimate(args: &EstimateArgs) -> Result<()> {
    if let Some(delta) = args.delta {
        if !(delta > 0.0 && delta < 1.0) {
            bail!("delta must lie in (0, 1), got {delta}");
        }
    }
    let trajectories = io::read_trajectories(&args.input, args.spacing)?;
    if trajectories.is_empty() {
        bail!("{} holds no trajectories", args.input.display());
    }
    let mut arms = Vec::with_capacity(trajectories.len());
    for traj in &trajectories {
        let est = match ols_affine_fit(traj)
            .and_then(|(a, d)| recover_params(a, d, args.spacing).map(|(g, l)| (a, d, g, l)))
        {
            Ok((a_hat, d_hat, gamma_hat, lambda_hat)) => {
                let sigma_z_hat = residual_noise_std(traj, a_hat, d_hat).ok();
                let radii = match (args.delta, sigma_z_hat) {
                    (Some(delta), Some(sigma)) => {
                        let n = traj.len() - 1;
                        let (eps_a, eps_d) = confidence_radii(n, delta, sigma, a_hat, args.t_min)?;
                        Some(ConfidenceRadii { eps_a, eps_d })
                    }
                    _ => None,
                };
                ArmEstimate {
                    arm: traj.arm_index,
                    a_hat,
                    d_hat,
                    gamma_hat,
                    lambda_hat,
                    b_hat: None,
                    radii,
                    psi: sigma_z_hat.map(|s| small_ball_psi(a_hat, d_hat, s)),
                    sigma_z_hat,
                    sign_flipped: a_hat < 0.0,
                    fallback: false,
                }
            }
            Err(_) => ArmEstimate::fallback(traj.arm_index, None),
        };
        arms.push(est);
    }
    let model = EstimatedModel { arms };
    emit_json(&serde_json::to_value(&model)?, args.out.as_ref())
}

fn cmd_trace(args: &TraceArgs) -> Result<()> {
    let cfg: TraceConfig = read_json(&args.config)?;
    let spec = ExperimentSpec::Trace(TraceSpec {
        env: cfg.env,
        schedule: cfg.schedule,
        out: args.out.clone(),
    });
    let outcome = run_experiment(&spec, None)?;
    println!("{}", serde_json::to_value(&outcome)?);
    Ok(())
}

fn cmd_eep(args: &EepArgs) -> Result<()> {
    let mut env_cfg: EnvConfig = read_json(&args.config)?;
    if let Some(seed) = args.seed {
        env_cfg.seed = seed;
    }
    let mut config = EepConfig::new(args.window, args.horizon);
    config.plan_mode = parse_plan_mode(&args.mode)?;
    config.exploration = parse_exploration(&args.exploration)?;
    let mut env = Environment::new(&env_cfg, args.horizon)?;
    let run = eep_run(&mut env, &config)?;
    io::write_run_csv(&args.out, env_cfg.seed, &run.actions, &run.rewards, |t| {
        run.phase(t)
    })?;
    let model = json!({
        "model": run.model,
        "exploration_end": run.exploration_end,
        "window": args.window,
        "horizon": args.horizon,
        "window_exceeds_guarantee": run.window_exceeds_guarantee,
        "any_fallback": run.model.any_fallback(),
    });
    emit_json(&model, args.model_out.as_ref())
}

fn cmd_regret(args: &RegretArgs) -> Result<()> {
    let env_cfg: EnvConfig = read_json(&args.config)?;
    let actions = io::read_run_actions(&args.run)?;
    let report = lookahead_regret(
        &actions,
        &env_cfg.arms,
        args.window,
        &SearchLimits::default(),
    )?;
    io::write_regret_csv(&args.out, &report)?;
    println!(
        "{}",
        json!({
            "window": report.window,
            "horizon": report.horizon,
            "episodes": report.per_episode.len(),
            "total_regret": report.total,
        })
    );
    Ok(())
}

fn cmd_experiment(args: &ExperimentArgs) -> Result<()> {
    let mut spec: ExperimentSpec = read_json(&args.config)?;
    if let Some(out) = &args.out {
        spec.set_out(out.clone());
    }
    let outcome = run_experiment(&spec, args.threads)?;
    println!("{}", serde_json::to_value(&outcome)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Plan(args) => cmd_plan(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Trace(args) => cmd_trace(args),
        Command::Eep(args) => cmd_eep(args),
        Command::Regret(args) => cmd_regret(args),
        Command::Experiment(args) => cmd_experiment(args),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("{}", json!({ "error": format!("{err:#}") }));
        std::process::exit(1);
    }
}
