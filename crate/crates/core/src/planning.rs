//! Planning over known (or estimated) arm parameters.
//!
//! The window planner maximizes the expected cumulative reward of the next
//! `w` pulls given the full pull history so far. Exact mode runs a
//! depth-first branch-and-bound over the `K^w` action sequences; heuristic
//! mode runs a beam search and flags its result as non-optimal. The module
//! also provides greedy stepping (the `w = 1` special case), evaluation of
//! full-horizon assignments in bilinear and linearized form, an upper
//! bound on the optimality gap of windowed planning, and the residue-class
//! partition that solves the identical-arm case as a maximum cut.

use crate::dynamics::{self, ArmParams, DynamicsError, PullHistory};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance for reward comparisons in argmax and search, so tie
/// resolution does not depend on platform rounding.
pub const COMPARE_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("planning window is empty: t_start {t_start} >= t_end {t_end}")]
    EmptyWindow { t_start: usize, t_end: usize },
    #[error("window end {t_end} exceeds horizon {horizon}")]
    WindowBeyondHorizon { t_end: usize, horizon: usize },
    #[error("history is complete through {completed} but the plan starts at {t_start}")]
    HistoryMismatch { completed: usize, t_start: usize },
    #[error(
        "exact search over {num_arms}^{window} sequences exceeds the cap of {cap} (use heuristic mode or raise the cap)"
    )]
    ExactCapExceeded {
        num_arms: usize,
        window: usize,
        cap: u64,
    },
    #[error("lookahead window must lie in [1, {horizon}], got {window}")]
    WindowOutOfRange { window: usize, horizon: usize },
    #[error("time {t} has {count} arms pulled; exactly one is required")]
    PullCountViolation { t: usize, count: usize },
    #[error("arm {arm} marked pulled at time 0")]
    PullAtTimeZero { arm: usize },
    #[error("assignment shape invalid: {0}")]
    BadShape(String),
    #[error("linearization variable z[{arm}][{t}][{i}] violates its product constraints")]
    LinearizationViolation { arm: usize, t: usize, i: usize },
}

/// Whether a plan is certified optimal for its window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimality {
    Exact,
    Heuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanMode {
    #[default]
    Exact,
    Heuristic,
}

/// Search budget knobs forwarded to the planner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchLimits {
    /// Exact mode refuses windows whose full enumeration `K^w` exceeds this.
    pub exact_leaf_cap: u64,
    /// Beam width used by the heuristic planner (and to seed the exact
    /// search with an incumbent).
    pub beam_width: usize,
}

impl Default for SearchLimits {
    fn default() -> Self {
        Self {
            exact_leaf_cap: 10_000_000,
            beam_width: 256,
        }
    }
}

/// A window-planning problem: continue the recorded history from
/// `t_start` and choose the pulls for times `t_start + 1 ..= t_end`.
#[derive(Debug, Clone)]
pub struct PlanRequest<'a> {
    pub arms: &'a [ArmParams],
    pub history: &'a PullHistory,
    pub t_start: usize,
    pub t_end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanResult {
    /// Arm to pull at each of the window's steps.
    pub actions: Vec<usize>,
    /// Expected cumulative reward of the window under the given parameters.
    pub objective: f64,
    pub optimality: Optimality,
    /// Search nodes visited (branch-and-bound plus any beam pre-pass).
    pub nodes_explored: u64,
}

fn validate_arms(arms: &[ArmParams]) -> Result<(), PlanError> {
    if arms.is_empty() {
        return Err(DynamicsError::NoArms.into());
    }
    for arm in arms {
        arm.validate()?;
    }
    Ok(())
}

fn argmax_reward(arms: &[ArmParams], sats: &[f64]) -> usize {
    let mut best = 0;
    let mut best_v = arms[0].base_reward - arms[0].lambda * sats[0];
    for (k, arm) in arms.iter().enumerate().skip(1) {
        let v = arm.base_reward - arm.lambda * sats[k];
        if v > best_v + COMPARE_TOL {
            best = k;
            best_v = v;
        }
    }
    best
}

/// Arm the greedy policy pulls next: the one with the highest expected
/// reward given the history, ties going to the lowest index.
pub fn greedy_step(arms: &[ArmParams], history: &PullHistory) -> Result<usize, PlanError> {
    validate_arms(arms)?;
    let sats = dynamics::current_satiations(arms, history)?;
    Ok(argmax_reward(arms, &sats))
}

/// Full greedy action sequence over `horizon` steps from an empty history.
pub fn greedy_policy(arms: &[ArmParams], horizon: usize) -> Result<Vec<usize>, PlanError> {
    validate_arms(arms)?;
    let mut sats = vec![0.0; arms.len()];
    let mut actions = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let pick = argmax_reward(arms, &sats);
        actions.push(pick);
        for (k, s) in sats.iter_mut().enumerate() {
            *s = arms[k].gamma * (*s + if k == pick { 1.0 } else { 0.0 });
        }
    }
    Ok(actions)
}

/// Table of `gamma_k^j` for `j = 0..=max_pow`, flattened per arm.
struct GammaPowers {
    per_arm: usize,
    table: Vec<f64>,
}

impl GammaPowers {
    fn new(arms: &[ArmParams], max_pow: usize) -> Self {
        let per_arm = max_pow + 1;
        let mut table = Vec::with_capacity(arms.len() * per_arm);
        for arm in arms {
            let mut p = 1.0;
            for _ in 0..per_arm {
                table.push(p);
                p *= arm.gamma;
            }
        }
        Self { per_arm, table }
    }

    #[inline]
    fn get(&self, arm: usize, pow: usize) -> f64 {
        self.table[arm * self.per_arm + pow]
    }
}

/// Admissible upper bound on the reward of the remaining `steps` pulls
/// when the arms' satiations at the next decision time are `sats`.
///
/// While an arm stays unpulled its satiation can only decay, so the best
/// reward it could pay `j` steps from now is `b - lambda * gamma^j * s`.
/// Summing the per-step maximum over arms ignores the satiation added by
/// the pulls themselves and therefore never undercounts.
fn residual_bound(arms: &[ArmParams], pows: &GammaPowers, sats: &[f64], steps: usize) -> f64 {
    let mut total = 0.0;
    for j in 0..steps {
        let mut best = f64::NEG_INFINITY;
        for (k, arm) in arms.iter().enumerate() {
            let v = arm.base_reward - arm.lambda * pows.get(k, j) * sats[k];
            if v > best {
                best = v;
            }
        }
        total += best;
    }
    total
}

struct BeamCand {
    value: f64,
    score: f64,
    seq: Vec<usize>,
    sats: Vec<f64>,
}

fn beam_search(
    arms: &[ArmParams],
    s0: &[f64],
    window: usize,
    width: usize,
    pows: &GammaPowers,
) -> (f64, Vec<usize>, u64) {
    let width = width.max(1);
    let mut beam = vec![BeamCand {
        value: 0.0,
        score: residual_bound(arms, pows, s0, window),
        seq: Vec::new(),
        sats: s0.to_vec(),
    }];
    let mut nodes = 0u64;
    for depth in 0..window {
        let remaining = window - depth - 1;
        let mut next: Vec<BeamCand> = Vec::with_capacity(beam.len() * arms.len());
        for cand in &beam {
            for (k, arm) in arms.iter().enumerate() {
                nodes += 1;
                let reward = arm.base_reward - arm.lambda * cand.sats[k];
                let sats: Vec<f64> = cand
                    .sats
                    .iter()
                    .enumerate()
                    .map(|(j, &s)| arms[j].gamma * (s + if j == k { 1.0 } else { 0.0 }))
                    .collect();
                let value = cand.value + reward;
                let score = value + residual_bound(arms, pows, &sats, remaining);
                let mut seq = cand.seq.clone();
                seq.push(k);
                next.push(BeamCand {
                    value,
                    score,
                    sats,
                    seq,
                });
            }
        }
        next.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .expect("finite scores")
                .then_with(|| a.seq.cmp(&b.seq))
        });
        next.truncate(width);
        beam = next;
    }
    let best = &beam[0];
    (best.value, best.seq.clone(), nodes)
}

struct DfsSearch<'a> {
    arms: &'a [ArmParams],
    pows: &'a GammaPowers,
    window: usize,
    nodes: u64,
    best_value: f64,
    best_seq: Vec<usize>,
    actions: Vec<usize>,
    // Satiation scratch: slot `depth` holds the levels at that depth's
    // decision time.
    sats: Vec<f64>,
}

impl DfsSearch<'_> {
    fn run(&mut self, depth: usize, value: f64) {
        self.nodes += 1;
        if depth == self.window {
            if value > self.best_value + COMPARE_TOL {
                self.best_value = value;
                self.best_seq.clone_from(&self.actions);
            } else if value >= self.best_value - COMPARE_TOL {
                // Tie within tolerance: keep the lexicographically
                // smallest sequence (and the larger of the tied values).
                if self.actions < self.best_seq {
                    self.best_seq.clone_from(&self.actions);
                }
                if value > self.best_value {
                    self.best_value = value;
                }
            }
            return;
        }
        let num_arms = self.arms.len();
        let remaining = self.window - depth - 1;
        let mut order: Vec<(f64, usize)> = {
            let cur = &self.sats[depth * num_arms..(depth + 1) * num_arms];
            self.arms
                .iter()
                .enumerate()
                .map(|(k, arm)| (arm.base_reward - arm.lambda * cur[k], k))
                .collect()
        };
        // Best immediate reward first, lowest index on ties.
        order.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .expect("finite rewards")
                .then(a.1.cmp(&b.1))
        });
        for (reward, k) in order {
            let child_value = value + reward;
            let (head, tail) = self.sats.split_at_mut((depth + 1) * num_arms);
            let cur = &head[depth * num_arms..];
            let next = &mut tail[..num_arms];
            for (j, arm) in self.arms.iter().enumerate() {
                next[j] = arm.gamma * (cur[j] + if j == k { 1.0 } else { 0.0 });
            }
            let bound = child_value + residual_bound(self.arms, self.pows, next, remaining);
            if bound < self.best_value - COMPARE_TOL {
                continue;
            }
            self.actions.push(k);
            self.run(depth + 1, child_value);
            self.actions.pop();
        }
    }
}

fn exact_search(
    arms: &[ArmParams],
    s0: &[f64],
    window: usize,
    limits: &SearchLimits,
) -> Result<PlanResult, PlanError> {
    let leaves = (arms.len() as f64).powi(window as i32);
    if leaves > limits.exact_leaf_cap as f64 {
        return Err(PlanError::ExactCapExceeded {
            num_arms: arms.len(),
            window,
            cap: limits.exact_leaf_cap,
        });
    }
    let pows = GammaPowers::new(arms, window);
    // Seed the incumbent with a beam pass so the depth-first search starts
    // with a strong pruning threshold.
    let (seed_value, seed_seq, beam_nodes) =
        beam_search(arms, s0, window, limits.beam_width, &pows);
    let mut search = DfsSearch {
        arms,
        pows: &pows,
        window,
        nodes: 0,
        best_value: seed_value,
        best_seq: seed_seq,
        actions: Vec::with_capacity(window),
        sats: vec![0.0; (window + 1) * arms.len()],
    };
    search.sats[..arms.len()].copy_from_slice(s0);
    search.run(0, 0.0);
    Ok(PlanResult {
        actions: search.best_seq,
        objective: search.best_value,
        optimality: Optimality::Exact,
        nodes_explored: search.nodes + beam_nodes,
    })
}

/// Plans the pulls for times `t_start + 1 ..= t_end` given the history.
///
/// Exact mode returns a provably optimal window plan (lexicographically
/// smallest among optima); heuristic mode returns a feasible plan whose
/// objective is at most the optimum. A window of one step reproduces the
/// greedy choice, and a window covering the whole horizon from an empty
/// history solves the full planning problem.
pub fn lookahead_plan(
    req: &PlanRequest<'_>,
    mode: PlanMode,
    limits: &SearchLimits,
) -> Result<PlanResult, PlanError> {
    validate_arms(req.arms)?;
    if req.t_start >= req.t_end {
        return Err(PlanError::EmptyWindow {
            t_start: req.t_start,
            t_end: req.t_end,
        });
    }
    if req.t_end > req.history.horizon() {
        return Err(PlanError::WindowBeyondHorizon {
            t_end: req.t_end,
            horizon: req.history.horizon(),
        });
    }
    if req.history.completed() != req.t_start {
        return Err(PlanError::HistoryMismatch {
            completed: req.history.completed(),
            t_start: req.t_start,
        });
    }
    let s0 = dynamics::current_satiations(req.arms, req.history)?;
    let window = req.t_end - req.t_start;
    match mode {
        PlanMode::Exact => exact_search(req.arms, &s0, window, limits),
        PlanMode::Heuristic => {
            let pows = GammaPowers::new(req.arms, window);
            let (value, seq, nodes) = beam_search(req.arms, &s0, window, limits.beam_width, &pows);
            Ok(PlanResult {
                actions: seq,
                objective: value,
                optimality: Optimality::Heuristic,
                nodes_explored: nodes,
            })
        }
    }
}

/// Full binary pull assignment over arms and times `0..=horizon`.
///
/// Rows are arms; column `t` records whether the arm is pulled at step `t`.
/// Feasibility (no pull at time 0, exactly one arm per later step) is
/// checked by the objective evaluators, so infeasible assignments can be
/// represented and rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct PullAssignment {
    num_arms: usize,
    horizon: usize,
    pulls: Vec<Vec<bool>>,
}

impl PullAssignment {
    pub fn new(pulls: Vec<Vec<bool>>) -> Result<Self, PlanError> {
        if pulls.is_empty() {
            return Err(PlanError::BadShape("no arms".into()));
        }
        let len = pulls[0].len();
        if len == 0 {
            return Err(PlanError::BadShape("empty time axis".into()));
        }
        if pulls.iter().any(|row| row.len() != len) {
            return Err(PlanError::BadShape("ragged rows".into()));
        }
        Ok(Self {
            num_arms: pulls.len(),
            horizon: len - 1,
            pulls,
        })
    }

    /// Builds the feasible assignment corresponding to an action sequence
    /// (`actions[i]` pulled at step `i + 1`).
    pub fn from_actions(num_arms: usize, actions: &[usize]) -> Result<Self, PlanError> {
        if num_arms == 0 {
            return Err(PlanError::BadShape("no arms".into()));
        }
        let mut pulls = vec![vec![false; actions.len() + 1]; num_arms];
        for (i, &a) in actions.iter().enumerate() {
            if a >= num_arms {
                return Err(DynamicsError::ArmIndexOutOfRange { index: a, num_arms }.into());
            }
            pulls[a][i + 1] = true;
        }
        Self::new(pulls)
    }

    pub fn num_arms(&self) -> usize {
        self.num_arms
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn is_pulled(&self, arm: usize, t: usize) -> bool {
        self.pulls[arm][t]
    }

    pub fn check_feasible(&self) -> Result<(), PlanError> {
        for (k, row) in self.pulls.iter().enumerate() {
            if row[0] {
                return Err(PlanError::PullAtTimeZero { arm: k });
            }
        }
        for t in 1..=self.horizon {
            let count = self.pulls.iter().filter(|row| row[t]).count();
            if count != 1 {
                return Err(PlanError::PullCountViolation { t, count });
            }
        }
        Ok(())
    }
}

/// Expected cumulative reward of a feasible full-horizon assignment, with
/// the satiation penalty expressed through products of pull indicators.
pub fn objective_bilinear(
    arms: &[ArmParams],
    assignment: &PullAssignment,
) -> Result<f64, PlanError> {
    validate_arms(arms)?;
    if arms.len() != assignment.num_arms() {
        return Err(DynamicsError::ArmCountMismatch {
            expected: assignment.num_arms(),
            got: arms.len(),
        }
        .into());
    }
    assignment.check_feasible()?;
    let mut total = 0.0;
    for (k, arm) in arms.iter().enumerate() {
        let mut s = 0.0;
        for t in 1..=assignment.horizon() {
            let pulled = assignment.is_pulled(k, t);
            if pulled {
                total += arm.base_reward - arm.lambda * s;
            }
            s = arm.gamma * (s + if pulled { 1.0 } else { 0.0 });
        }
    }
    Ok(total)
}

/// Auxiliary binaries `z[k][t][i]` standing in for the products
/// `u[k][i] * u[k][t]` in the linearized objective.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizationVars {
    // Indexed [arm][t - 1][i] with t in 1..=horizon and i in 0..t.
    products: Vec<Vec<Vec<bool>>>,
}

impl LinearizationVars {
    pub fn new(products: Vec<Vec<Vec<bool>>>) -> Self {
        Self { products }
    }

    /// The exact products implied by an assignment; always satisfies the
    /// product constraints.
    pub fn products_of(assignment: &PullAssignment) -> Self {
        let products = (0..assignment.num_arms())
            .map(|k| {
                (1..=assignment.horizon())
                    .map(|t| {
                        (0..t)
                            .map(|i| assignment.is_pulled(k, i) && assignment.is_pulled(k, t))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self { products }
    }

    fn check_shape(&self, num_arms: usize, horizon: usize) -> Result<(), PlanError> {
        if self.products.len() != num_arms {
            return Err(PlanError::BadShape(format!(
                "expected {num_arms} arm blocks, got {}",
                self.products.len()
            )));
        }
        for block in &self.products {
            if block.len() != horizon {
                return Err(PlanError::BadShape(format!(
                    "expected {horizon} time slots per arm, got {}",
                    block.len()
                )));
            }
            for (t_idx, row) in block.iter().enumerate() {
                if row.len() != t_idx + 1 {
                    return Err(PlanError::BadShape(format!(
                        "slot {} should hold {} entries, got {}",
                        t_idx + 1,
                        t_idx + 1,
                        row.len()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Value of the linearized objective: base rewards of the pulls minus the
/// discounted satiation penalty expressed through `z`.
///
/// Checks the three product constraints tying `z[k][t][i]` to
/// `u[k][i]` and `u[k][t]` and rejects any violation.
pub fn objective_linearized(
    arms: &[ArmParams],
    assignment: &PullAssignment,
    vars: &LinearizationVars,
) -> Result<f64, PlanError> {
    validate_arms(arms)?;
    if arms.len() != assignment.num_arms() {
        return Err(DynamicsError::ArmCountMismatch {
            expected: assignment.num_arms(),
            got: arms.len(),
        }
        .into());
    }
    assignment.check_feasible()?;
    vars.check_shape(assignment.num_arms(), assignment.horizon())?;
    let mut total = 0.0;
    for (k, arm) in arms.iter().enumerate() {
        for t in 1..=assignment.horizon() {
            if assignment.is_pulled(k, t) {
                total += arm.base_reward;
            }
            for i in 0..t {
                let z = vars.products[k][t - 1][i];
                let u_i = assignment.is_pulled(k, i);
                let u_t = assignment.is_pulled(k, t);
                // z <= u_i, z <= u_t, u_i + u_t - 1 <= z.
                if (z && !(u_i && u_t)) || (u_i && u_t && !z) {
                    return Err(PlanError::LinearizationViolation { arm: k, t, i });
                }
                if z {
                    total -= arm.lambda * arm.gamma.powi((t - i) as i32);
                }
            }
        }
    }
    Ok(total)
}

/// Upper bound on the optimality gap of following the `window`-step planner
/// for a full horizon, in terms of the largest retention and influence
/// factors across arms.
pub fn lookahead_gap_bound(
    arms: &[ArmParams],
    horizon: usize,
    window: usize,
) -> Result<f64, PlanError> {
    validate_arms(arms)?;
    if window == 0 || window > horizon {
        return Err(PlanError::WindowOutOfRange { window, horizon });
    }
    let gbar = arms.iter().map(|a| a.gamma).fold(0.0, f64::max);
    let lbar = arms.iter().map(|a| a.lambda).fold(0.0, f64::max);
    let episodes = horizon.div_ceil(window) as f64;
    let gap =
        lbar * gbar * (1.0 - gbar.powi((horizon - window) as i32)) / ((1.0 - gbar) * (1.0 - gbar));
    Ok(gap * episodes)
}

/// Residue-class partition of times `1..=horizon` into `num_parts` parts:
/// part `k` (1-based) collects the times congruent to `k` modulo the part
/// count. For identical arms, playing part `k` with arm `k` is an optimal
/// schedule, and the partition attains the maximum cut weight.
pub fn max_kcut_partition(num_parts: usize, horizon: usize) -> Vec<Vec<usize>> {
    assert!(
        num_parts >= 1 && horizon >= 1,
        "need at least one part and one time step"
    );
    let mut parts = vec![Vec::new(); num_parts];
    for t in 1..=horizon {
        let mut r = t % num_parts;
        if r == 0 {
            r = num_parts;
        }
        parts[r - 1].push(t);
    }
    parts
}

/// Total weight `lambda * gamma^{|i - j|}` of the pairs that cross parts.
pub fn cut_weight(partition: &[Vec<usize>], lambda: f64, gamma: f64) -> f64 {
    let mut labeled: Vec<(usize, usize)> = Vec::new();
    for (part, times) in partition.iter().enumerate() {
        for &t in times {
            labeled.push((t, part));
        }
    }
    let mut total = 0.0;
    for (i, &(ti, pi)) in labeled.iter().enumerate() {
        for &(tj, pj) in &labeled[i + 1..] {
            if pi != pj {
                total += lambda * gamma.powi((ti as i64 - tj as i64).unsigned_abs() as i32);
            }
        }
    }
    total
}

/// Total weight of all pairs among times `1..=horizon`.
pub fn total_pairwise_weight(horizon: usize, lambda: f64, gamma: f64) -> f64 {
    let mut total = 0.0;
    for d in 1..horizon {
        total += (horizon - d) as f64 * lambda * gamma.powi(d as i32);
    }
    total
}
