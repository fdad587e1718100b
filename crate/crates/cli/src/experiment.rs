//! Grid experiment runner.
//!
//! Each experiment expands into an ordered list of cells (grid point times
//! replication). Cells run in a worker pool; a collector writes finished
//! cells to the output CSV strictly in canonical order, so the file on
//! disk is always a prefix of the final byte-identical output. Rerunning a
//! spec skips the cells already on disk; rerunning a finished spec is a
//! no-op.

use crate::slope::{slope_fit, SlopeFit};
use crate::HarnessError;
use rayon::prelude::*;
use rebound_core::dynamics::{derive_seed, ArmProcess, EnvConfig, Environment};
use rebound_core::eep::{eep_run, EepConfig, ExplorationMode};
use rebound_core::planning::{
    lookahead_gap_bound, lookahead_plan, PlanError, PlanMode, PlanRequest, SearchLimits,
};
use rebound_core::regret::lookahead_regret;
use rebound_core::sysid::{ols_affine_fit, recover_params, Trajectory};
use rebound_core::PullHistory;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::mpsc;

fn default_spacing() -> usize {
    1
}

/// Satiation and reward trace of every arm under an explicit pull
/// schedule; entries of `None` pull nothing that step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceSpec {
    pub env: EnvConfig,
    pub schedule: Vec<Option<usize>>,
    pub out: PathBuf,
}

/// Absolute estimation errors of the dynamics fit against trajectory
/// length, per arm and replication.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimationRateSpec {
    pub env: EnvConfig,
    pub n_grid: Vec<usize>,
    pub seeds: u64,
    #[serde(default = "default_spacing")]
    pub spacing: usize,
    pub out: PathBuf,
}

/// Windowed-planning objective and gap bound across window sizes at one
/// horizon.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LookaheadCompareSpec {
    pub env: EnvConfig,
    pub horizon: usize,
    pub w_list: Vec<usize>,
    #[serde(default)]
    pub limits: SearchLimits,
    pub out: PathBuf,
}

/// Total windowed regret of the explore-estimate-plan learner across
/// horizons, window sizes, and replications.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EepRegretSpec {
    pub env: EnvConfig,
    pub t_grid: Vec<usize>,
    pub w_list: Vec<usize>,
    pub seeds: u64,
    #[serde(default)]
    pub limits: SearchLimits,
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentSpec {
    Trace(TraceSpec),
    EstimationRate(EstimationRateSpec),
    LookaheadCompare(LookaheadCompareSpec),
    EepRegret(EepRegretSpec),
}

impl ExperimentSpec {
    pub fn out(&self) -> &Path {
        match self {
            Self::Trace(s) => &s.out,
            Self::EstimationRate(s) => &s.out,
            Self::LookaheadCompare(s) => &s.out,
            Self::EepRegret(s) => &s.out,
        }
    }

    pub fn set_out(&mut self, out: PathBuf) {
        match self {
            Self::Trace(s) => s.out = out,
            Self::EstimationRate(s) => s.out = out,
            Self::LookaheadCompare(s) => s.out = out,
            Self::EepRegret(s) => s.out = out,
        }
    }

    fn validate(&self) -> Result<(), HarnessError> {
        let invalid = |msg: &str| Err(HarnessError::InvalidSpec(msg.into()));
        match self {
            Self::Trace(s) => {
                s.env.validate()?;
                if s.schedule.is_empty() {
                    return invalid("trace schedule is empty");
                }
                if let Some(bad) = s
                    .schedule
                    .iter()
                    .flatten()
                    .find(|&&arm| arm >= s.env.num_arms())
                {
                    return invalid(&format!("schedule pulls unknown arm {bad}"));
                }
            }
            Self::EstimationRate(s) => {
                s.env.validate()?;
                if s.n_grid.is_empty() || s.n_grid.iter().any(|&n| n < 2) {
                    return invalid("n_grid must be nonempty with entries >= 2");
                }
                if s.seeds == 0 {
                    return invalid("seeds must be at least 1");
                }
                if s.spacing == 0 {
                    return invalid("spacing must be at least 1");
                }
            }
            Self::LookaheadCompare(s) => {
                s.env.validate()?;
                if s.w_list.is_empty() {
                    return invalid("w_list is empty");
                }
                if s.horizon == 0 {
                    return invalid("horizon must be at least 1");
                }
                if s.w_list.iter().any(|&w| w == 0 || w > s.horizon) {
                    return invalid("every window must lie in [1, horizon]");
                }
            }
            Self::EepRegret(s) => {
                s.env.validate()?;
                if s.t_grid.is_empty() || s.w_list.is_empty() {
                    return invalid("t_grid and w_list must be nonempty");
                }
                if s.seeds == 0 {
                    return invalid("seeds must be at least 1");
                }
                if s.w_list.contains(&0) {
                    return invalid("windows must be at least 1");
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunOutcome {
    pub csv: PathBuf,
    pub summary: PathBuf,
    pub cells_total: usize,
    pub cells_computed: usize,
    /// The spec's output was already complete; nothing was recomputed.
    pub up_to_date: bool,
}

pub fn summary_path(out: &Path) -> PathBuf {
    out.with_extension("summary.json")
}

pub fn run_experiment(
    spec: &ExperimentSpec,
    threads: Option<usize>,
) -> Result<RunOutcome, HarnessError> {
    spec.validate()?;
    let (header, rows_per_cell, num_cells) = match spec {
        ExperimentSpec::Trace(s) => (
            "t,arm,satiation,reward,pulled",
            s.schedule.len() * s.env.num_arms(),
            1,
        ),
        ExperimentSpec::EstimationRate(s) => (
            "n,seed,arm,err_gamma,err_lambda",
            s.env.num_arms(),
            s.n_grid.len() * s.seeds as usize,
        ),
        ExperimentSpec::LookaheadCompare(s) => {
            ("w,objective,gap_bound,nodes,status", 1, s.w_list.len())
        }
        ExperimentSpec::EepRegret(s) => (
            "horizon,window,seed,regret,exploration_end,status",
            1,
            s.t_grid.len() * s.w_list.len() * s.seeds as usize,
        ),
    };
    let out = spec.out().to_path_buf();
    let summary = summary_path(&out);
    let computed = run_cells(&out, header, rows_per_cell, num_cells, threads, |idx| {
        compute_cell(spec, idx)
    })?;
    let up_to_date = computed == 0 && summary.exists();
    if !up_to_date {
        let value = summarize(spec, &out)?;
        fs::write(&summary, format!("{:#}\n", value))?;
    }
    Ok(RunOutcome {
        csv: out,
        summary,
        cells_total: num_cells,
        cells_computed: computed,
        up_to_date,
    })
}

fn compute_cell(spec: &ExperimentSpec, idx: usize) -> Vec<String> {
    match spec {
        ExperimentSpec::Trace(s) => trace_cell(s),
        ExperimentSpec::EstimationRate(s) => {
            let seeds = s.seeds as usize;
            estimation_rate_cell(s, s.n_grid[idx / seeds], (idx % seeds) as u64)
        }
        ExperimentSpec::LookaheadCompare(s) => vec![lookahead_compare_cell(s, s.w_list[idx])],
        ExperimentSpec::EepRegret(s) => {
            let seeds = s.seeds as usize;
            let per_t = s.w_list.len() * seeds;
            let horizon = s.t_grid[idx / per_t];
            let window = s.w_list[(idx % per_t) / seeds];
            let seed = (idx % seeds) as u64;
            vec![eep_regret_cell(s, horizon, window, seed)]
        }
    }
}

fn trace_cell(spec: &TraceSpec) -> Vec<String> {
    let mut procs: Vec<ArmProcess> = spec
        .env
        .arms
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            ArmProcess::new(p, spec.env.sigma_z, derive_seed(spec.env.seed, &[k as u64]))
        })
        .collect();
    let mut rows = Vec::with_capacity(spec.schedule.len() * procs.len());
    for (i, &pulled_arm) in spec.schedule.iter().enumerate() {
        let t = i + 1;
        for (k, proc) in procs.iter().enumerate() {
            let pulled = pulled_arm == Some(k);
            rows.push(format!(
                "{t},{k},{},{},{}",
                proc.satiation(),
                proc.reward_if_pulled(),
                u8::from(pulled)
            ));
        }
        for (k, proc) in procs.iter_mut().enumerate() {
            proc.advance(pulled_arm == Some(k));
        }
    }
    rows
}

fn estimation_rate_cell(spec: &EstimationRateSpec, n: usize, seed: u64) -> Vec<String> {
    use rand::SeedableRng;
    let mut rows = Vec::with_capacity(spec.env.num_arms());
    for (k, arm) in spec.env.arms.iter().enumerate() {
        let mut rng =
            rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(spec.env.seed, &[k as u64, seed]));
        let fit = Trajectory::simulate(arm, spec.spacing, n, spec.env.sigma_z, &mut rng)
            .and_then(|traj| ols_affine_fit(&traj))
            .and_then(|(a, d)| recover_params(a, d, spec.spacing));
        let (eg, el) = match fit {
            Ok((g, l)) => ((g - arm.gamma).abs(), (l - arm.lambda).abs()),
            Err(_) => (f64::NAN, f64::NAN),
        };
        rows.push(format!("{n},{seed},{k},{eg},{el}"));
    }
    rows
}

/// Expected cumulative reward collected by following the window planner
/// for the whole horizon, plus the total node count.
fn windowed_run_value(
    arms: &[rebound_core::ArmParams],
    horizon: usize,
    window: usize,
    limits: &SearchLimits,
) -> Result<(f64, u64), PlanError> {
    let mut history = PullHistory::new(arms.len(), horizon);
    let mut total = 0.0;
    let mut nodes = 0u64;
    while history.completed() < horizon {
        let t = history.completed();
        let req = PlanRequest {
            arms,
            history: &history,
            t_start: t,
            t_end: (t + window).min(horizon),
        };
        let plan = lookahead_plan(&req, PlanMode::Exact, limits)?;
        total += plan.objective;
        nodes += plan.nodes_explored;
        for a in plan.actions {
            history.push(a).expect("plan stays within horizon");
        }
    }
    Ok((total, nodes))
}

fn lookahead_compare_cell(spec: &LookaheadCompareSpec, window: usize) -> String {
    let bound = lookahead_gap_bound(&spec.env.arms, spec.horizon, window)
        .expect("window validated against horizon");
    match windowed_run_value(&spec.env.arms, spec.horizon, window, &spec.limits) {
        Ok((objective, nodes)) => format!("{window},{objective},{bound},{nodes},ok"),
        Err(PlanError::ExactCapExceeded { .. }) => {
            format!("{window},NaN,{bound},0,cap_exceeded")
        }
        Err(err) => format!("{window},NaN,{bound},0,error:{}", compact(&err.to_string())),
    }
}

fn eep_regret_cell(spec: &EepRegretSpec, horizon: usize, window: usize, seed: u64) -> String {
    let cell_seed = derive_seed(spec.env.seed, &[horizon as u64, window as u64, seed]);
    let env_cfg = EnvConfig {
        seed: cell_seed,
        ..spec.env.clone()
    };
    let outcome = (|| -> Result<(f64, usize), HarnessError> {
        let mut env = Environment::new(&env_cfg, horizon)?;
        let mut config = EepConfig::new(window, horizon);
        config.limits = spec.limits;
        config.exploration = ExplorationMode::Repeated;
        let run = eep_run(&mut env, &config)?;
        let report = lookahead_regret(&run.actions, &spec.env.arms, window, &spec.limits)?;
        Ok((report.total, run.exploration_end))
    })();
    match outcome {
        Ok((regret, exploration_end)) => {
            format!("{horizon},{window},{seed},{regret},{exploration_end},ok")
        }
        Err(err) => {
            format!(
                "{horizon},{window},{seed},NaN,0,error:{}",
                compact(&err.to_string())
            )
        }
    }
}

/// Collapses an error message into a single CSV-safe token.
fn compact(message: &str) -> String {
    message
        .chars()
        .map(|c| if c == ',' || c == '\n' { ' ' } else { c })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join("_")
}

// ---------------------------------------------------------------------------
// Cell engine
// ---------------------------------------------------------------------------

/// Reads the resumable state of an output file: the number of complete
/// cells already on disk. Partial trailing cells are truncated away.
fn resume_state(
    path: &Path,
    header: &str,
    rows_per_cell: usize,
    num_cells: usize,
) -> Result<usize, HarnessError> {
    if !path.exists() {
        return Ok(0);
    }
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let found = lines.next().unwrap_or_default();
    if found != header {
        return Err(HarnessError::SchemaMismatch {
            path: path.display().to_string(),
            expected: header.into(),
            found: found.into(),
        });
    }
    let rows: Vec<&str> = lines.filter(|l| !l.is_empty()).collect();
    let done = rows.len() / rows_per_cell;
    if done > num_cells {
        return Err(HarnessError::StaleOutput {
            path: path.display().to_string(),
        });
    }
    if !rows.len().is_multiple_of(rows_per_cell) {
        // A crash left a partial cell behind; drop it and resume from the
        // last complete cell.
        let keep = done * rows_per_cell;
        let mut out = String::with_capacity(text.len());
        out.push_str(header);
        out.push('\n');
        for row in &rows[..keep] {
            out.push_str(row);
            out.push('\n');
        }
        fs::write(path, out)?;
    }
    Ok(done)
}

/// Runs the missing cells in a worker pool, appending finished cells to
/// the output in canonical order. Returns how many cells were computed.
fn run_cells<F>(
    path: &Path,
    header: &str,
    rows_per_cell: usize,
    num_cells: usize,
    threads: Option<usize>,
    compute: F,
) -> Result<usize, HarnessError>
where
    F: Fn(usize) -> Vec<String> + Sync,
{
    let done = resume_state(path, header, rows_per_cell, num_cells)?;
    if done == num_cells {
        return Ok(0);
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut file = if done == 0 {
        let mut f = fs::File::create(path)?;
        writeln!(f, "{header}")?;
        f
    } else {
        fs::OpenOptions::new().append(true).open(path)?
    };

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| HarnessError::ThreadPool(e.to_string()))?;

    let (tx, rx) = mpsc::channel::<(usize, Vec<String>)>();
    let mut io_error: Option<HarnessError> = None;
    std::thread::scope(|scope| {
        let compute = &compute;
        scope.spawn(move || {
            pool.install(|| {
                (done..num_cells)
                    .into_par_iter()
                    .for_each_with(tx, |tx, idx| {
                        let rows = compute(idx);
                        let _ = tx.send((idx, rows));
                    });
            });
        });
        // Collector: flush cells strictly in canonical order so the file
        // is always a valid prefix of the final output.
        let mut pending: BTreeMap<usize, Vec<String>> = BTreeMap::new();
        let mut next = done;
        for (idx, rows) in rx {
            pending.insert(idx, rows);
            while let Some(rows) = pending.remove(&next) {
                for row in &rows {
                    if let Err(e) = writeln!(file, "{row}") {
                        io_error.get_or_insert(e.into());
                    }
                }
                if let Err(e) = file.flush() {
                    io_error.get_or_insert(e.into());
                }
                next += 1;
            }
        }
    });
    match io_error {
        Some(err) => Err(err),
        None => Ok(num_cells - done),
    }
}

// ---------------------------------------------------------------------------
// Summaries
// ---------------------------------------------------------------------------

fn read_rows(path: &Path) -> Result<Vec<Vec<String>>, HarnessError> {
    let text = fs::read_to_string(path)?;
    Ok(text
        .lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect())
}

fn parse_f64(path: &Path, field: &str) -> Result<f64, HarnessError> {
    field.parse().map_err(|_| HarnessError::MalformedRow {
        path: path.display().to_string(),
        line: 0,
        message: format!("bad float {field:?}"),
    })
}

fn slope_json(fit: &SlopeFit) -> serde_json::Value {
    json!({ "slope": fit.slope, "intercept": fit.intercept, "r2": fit.r2 })
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("no NaN medians"));
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    })
}

fn summarize(spec: &ExperimentSpec, out: &Path) -> Result<serde_json::Value, HarnessError> {
    match spec {
        ExperimentSpec::Trace(s) => Ok(json!({
            "kind": "trace",
            "horizon": s.schedule.len(),
            "arms": s.env.num_arms(),
            "pulls": s.schedule.iter().flatten().count(),
        })),
        ExperimentSpec::EstimationRate(s) => {
            let rows = read_rows(out)?;
            // Median error over seeds per (arm, n), then a log-log slope
            // per arm for each parameter.
            let mut buckets: BTreeMap<(usize, usize), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
            for row in &rows {
                let n: usize = row[0].parse().unwrap_or(0);
                let arm: usize = row[2].parse().unwrap_or(0);
                let eg = parse_f64(out, &row[3])?;
                let el = parse_f64(out, &row[4])?;
                let entry = buckets.entry((arm, n)).or_default();
                if eg.is_finite() {
                    entry.0.push(eg);
                }
                if el.is_finite() {
                    entry.1.push(el);
                }
            }
            let mut per_arm = Vec::new();
            for arm in 0..s.env.num_arms() {
                let mut gamma_points = Vec::new();
                let mut lambda_points = Vec::new();
                for &n in &s.n_grid {
                    if let Some((gs, ls)) = buckets.get_mut(&(arm, n)) {
                        if let Some(m) = median(gs) {
                            if m > 0.0 {
                                gamma_points.push((n as f64, m));
                            }
                        }
                        if let Some(m) = median(ls) {
                            if m > 0.0 {
                                lambda_points.push((n as f64, m));
                            }
                        }
                    }
                }
                let gamma_fit = slope_fit(&gamma_points).ok();
                let lambda_fit = slope_fit(&lambda_points).ok();
                per_arm.push(json!({
                    "arm": arm,
                    "gamma": gamma_fit.as_ref().map(slope_json),
                    "lambda": lambda_fit.as_ref().map(slope_json),
                }));
            }
            Ok(json!({
                "kind": "estimation_rate",
                "n_grid": s.n_grid,
                "seeds": s.seeds,
                "spacing": s.spacing,
                "per_arm": per_arm,
            }))
        }
        ExperimentSpec::LookaheadCompare(s) => {
            let rows = read_rows(out)?;
            let solved: Vec<serde_json::Value> = rows
                .iter()
                .map(|row| {
                    json!({
                        "w": row[0].parse::<usize>().unwrap_or(0),
                        "objective": row[1].parse::<f64>().ok().filter(|v| v.is_finite()),
                        "gap_bound": row[2].parse::<f64>().ok(),
                        "status": row[4],
                    })
                })
                .collect();
            // Full-horizon reference only when the exact search fits the
            // cap; otherwise the gap bound is the only certificate.
            let k = s.env.num_arms() as f64;
            let reference = if k.powi(s.horizon as i32) <= s.limits.exact_leaf_cap as f64 {
                let (objective, _) =
                    windowed_run_value(&s.env.arms, s.horizon, s.horizon, &s.limits)?;
                json!({ "kind": "exact", "objective": objective })
            } else {
                json!({ "kind": "bound_only" })
            };
            Ok(json!({
                "kind": "lookahead_compare",
                "horizon": s.horizon,
                "reference": reference,
                "windows": solved,
            }))
        }
        ExperimentSpec::EepRegret(s) => {
            let rows = read_rows(out)?;
            let mut by_window: BTreeMap<usize, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
            let mut errors = 0usize;
            for row in &rows {
                if row[5] != "ok" {
                    errors += 1;
                    continue;
                }
                let horizon: usize = row[0].parse().unwrap_or(0);
                let window: usize = row[1].parse().unwrap_or(0);
                let regret = parse_f64(out, &row[3])?;
                by_window
                    .entry(window)
                    .or_default()
                    .entry(horizon)
                    .or_default()
                    .push(regret);
            }
            let mut per_window = Vec::new();
            for (&window, horizons) in &by_window {
                let points: Vec<(f64, f64)> = horizons
                    .iter()
                    .map(|(&t, regrets)| {
                        (t as f64, regrets.iter().sum::<f64>() / regrets.len() as f64)
                    })
                    .filter(|&(_, r)| r > 0.0)
                    .collect();
                let fit = slope_fit(&points).ok();
                per_window.push(json!({
                    "window": window,
                    "mean_regret": points,
                    "fit": fit.as_ref().map(slope_json),
                }));
            }
            Ok(json!({
                "kind": "eep_regret",
                "t_grid": s.t_grid,
                "seeds": s.seeds,
                "errors": errors,
                "per_window": per_window,
            }))
        }
    }
}
