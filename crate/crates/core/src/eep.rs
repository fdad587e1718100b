//! Explore-estimate-plan learner.
//!
//! The learner first pulls every arm on an even schedule long enough to
//! identify the satiation dynamics, fits each arm's affine influence
//! recursion from the observed rewards, and then plays the rest of the
//! horizon in fixed-size windows planned under the fitted parameters.

use crate::dynamics::{DynamicsError, Environment};
use crate::planning::{lookahead_plan, PlanError, PlanMode, PlanRequest, PlanResult, SearchLimits};
use crate::sysid::{
    self, ols_affine_fit, recover_params, small_ball_psi, ArmEstimate, EstimatedModel, Trajectory,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EepError {
    #[error("window must lie in [1, {horizon}], got {window}")]
    WindowOutOfRange { window: usize, horizon: usize },
    #[error("exploration needs {exploration} steps but the horizon is only {horizon}")]
    HorizonTooShort { exploration: usize, horizon: usize },
    #[error("exploration spacing must lie in [1, {num_arms}], got {spacing}")]
    SpacingOutOfRange { spacing: usize, num_arms: usize },
    #[error("environment already advanced to step {time}; a fresh environment is required")]
    EnvironmentNotFresh { time: usize },
    #[error("environment horizon {env_horizon} is shorter than the run horizon {horizon}")]
    EnvironmentHorizonTooShort { env_horizon: usize, horizon: usize },
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// How the exploration phase spreads its pulls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplorationMode {
    /// Each arm is pulled in one consecutive block.
    Repeated,
    /// Arms are grouped and played round-robin so each arm is pulled every
    /// `spacing` steps; `spacing` equal to the arm count is cyclic play.
    Interval { spacing: usize },
}

#[derive(Debug, Clone)]
pub struct EepConfig {
    pub window: usize,
    pub horizon: usize,
    pub exploration: ExplorationMode,
    pub plan_mode: PlanMode,
    pub limits: SearchLimits,
}

impl EepConfig {
    pub fn new(window: usize, horizon: usize) -> Self {
        Self {
            window,
            horizon,
            exploration: ExplorationMode::Repeated,
            plan_mode: PlanMode::Exact,
            limits: SearchLimits::default(),
        }
    }
}

/// Which phase of a run a step belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Explore,
    /// Filler steps rounding the exploration phase out to its scheduled
    /// length; excluded from the estimation datasets.
    Remainder,
    Plan,
}

/// Exploration schedule: the arm to pull at each of the first
/// `exploration_end` steps, plus which of those pulls feed each arm's
/// estimation dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ExploreSchedule {
    pub exploration_end: usize,
    pub actions: Vec<usize>,
    /// Steps (1-based) whose rewards enter each arm's trajectory.
    pub estimation_pulls: Vec<Vec<usize>>,
    /// Pull spacing of each arm's estimation data.
    pub spacing: Vec<usize>,
    /// First filler step, if any (always `<= exploration_end`).
    pub remainder_start: usize,
}

/// Largest integer whose cube is at most `n`.
fn cbrt_floor(n: u128) -> u64 {
    let mut lo: u128 = 0;
    let mut hi: u128 = 1 << 43; // (2^43)^3 > u128::MAX / 4; plenty for u64 inputs
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        if mid.saturating_mul(mid).saturating_mul(mid) <= n {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    lo as u64
}

/// Exploration length: floor(T^(2/3)) rounded up to the next multiple of
/// the window, always adding at least one window.
fn exploration_length(horizon: usize, window: usize) -> usize {
    let t = horizon as u128;
    let base = cbrt_floor(t * t) as usize;
    base + window - (base % window)
}

/// Builds the exploration phase for a run: per-arm pull blocks (or grouped
/// round-robin play) followed by filler steps cycling through the arms.
pub fn explore_schedule(
    horizon: usize,
    window: usize,
    num_arms: usize,
    mode: ExplorationMode,
) -> Result<ExploreSchedule, EepError> {
    if num_arms == 0 {
        return Err(DynamicsError::NoArms.into());
    }
    if window == 0 || window > horizon {
        return Err(EepError::WindowOutOfRange { window, horizon });
    }
    let exploration_end = exploration_length(horizon, window);
    if exploration_end >= horizon {
        return Err(EepError::HorizonTooShort {
            exploration: exploration_end,
            horizon,
        });
    }
    let pulls_per_arm = exploration_end / num_arms;
    let mut actions = Vec::with_capacity(exploration_end);
    let mut estimation_pulls = vec![Vec::with_capacity(pulls_per_arm); num_arms];
    let mut spacing = vec![1usize; num_arms];
    match mode {
        ExplorationMode::Repeated => {
            for (arm, pulls) in estimation_pulls.iter_mut().enumerate() {
                for _ in 0..pulls_per_arm {
                    actions.push(arm);
                    pulls.push(actions.len());
                }
            }
        }
        ExplorationMode::Interval { spacing: m } => {
            if m == 0 || m > num_arms {
                return Err(EepError::SpacingOutOfRange {
                    spacing: m,
                    num_arms,
                });
            }
            // Consecutive groups of `m` arms share a block and are played
            // round-robin inside it, so each is pulled every `m` steps
            // (the trailing group may be smaller).
            let mut group_start = 0;
            while group_start < num_arms {
                let group = group_start..(group_start + m).min(num_arms);
                let group_size = group.len();
                for _ in 0..pulls_per_arm {
                    for arm in group.clone() {
                        actions.push(arm);
                        estimation_pulls[arm].push(actions.len());
                    }
                }
                for arm in group {
                    spacing[arm] = group_size;
                }
                group_start += group_size;
            }
        }
    }
    let remainder_start = actions.len() + 1;
    let mut arm = 0;
    while actions.len() < exploration_end {
        actions.push(arm);
        arm = (arm + 1) % num_arms;
    }
    Ok(ExploreSchedule {
        exploration_end,
        actions,
        estimation_pulls,
        spacing,
        remainder_start,
    })
}

/// Complete record of one explore-estimate-plan run.
#[derive(Debug, Clone)]
pub struct EepRun {
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub model: EstimatedModel,
    pub exploration_end: usize,
    pub remainder_start: usize,
    /// Window boundaries `(t_start, t_end]` of each planning episode.
    pub episode_bounds: Vec<(usize, usize)>,
    pub plans: Vec<PlanResult>,
    /// The window is past the regime the exploration budget is tuned for
    /// (window cubed exceeding the squared horizon).
    pub window_exceeds_guarantee: bool,
}

impl EepRun {
    pub fn phase(&self, t: usize) -> Phase {
        if t < self.remainder_start {
            Phase::Explore
        } else if t <= self.exploration_end {
            Phase::Remainder
        } else {
            Phase::Plan
        }
    }
}

fn fit_arm(
    arm: usize,
    traj_result: Result<Trajectory, sysid::SysidError>,
    b_hat: f64,
) -> ArmEstimate {
    let traj = match traj_result {
        Ok(t) => t,
        Err(_) => return ArmEstimate::fallback(arm, Some(b_hat)),
    };
    let Ok((a_hat, d_hat)) = ols_affine_fit(&traj) else {
        return ArmEstimate::fallback(arm, Some(b_hat));
    };
    let Ok((gamma_hat, lambda_hat)) = recover_params(a_hat, d_hat, traj.spacing()) else {
        return ArmEstimate::fallback(arm, Some(b_hat));
    };
    let sigma_z_hat = sysid::residual_noise_std(&traj, a_hat, d_hat).ok();
    let psi = sigma_z_hat.map(|s| small_ball_psi(a_hat, d_hat, s));
    ArmEstimate {
        arm,
        a_hat,
        d_hat,
        gamma_hat,
        lambda_hat,
        b_hat: Some(b_hat),
        radii: None,
        psi,
        sigma_z_hat,
        sign_flipped: a_hat < 0.0,
        fallback: false,
    }
}

/// Runs explore-estimate-plan against a fresh environment.
///
/// Exploration rewards feed per-arm influence trajectories (first reward
/// minus each later reward); the first reward of each arm is taken as its
/// base reward. Arms whose fit fails fall back to base reward only and are
/// flagged in the returned model. Planning then proceeds window by window
/// under the fitted parameters, against the learner's own full history.
pub fn eep_run(env: &mut Environment, config: &EepConfig) -> Result<EepRun, EepError> {
    if env.time() != 1 {
        return Err(EepError::EnvironmentNotFresh { time: env.time() });
    }
    if env.horizon() < config.horizon {
        return Err(EepError::EnvironmentHorizonTooShort {
            env_horizon: env.horizon(),
            horizon: config.horizon,
        });
    }
    let num_arms = env.num_arms();
    let schedule = explore_schedule(config.horizon, config.window, num_arms, config.exploration)?;

    let mut actions = Vec::with_capacity(config.horizon);
    let mut rewards = Vec::with_capacity(config.horizon);
    for &arm in &schedule.actions {
        rewards.push(env.step(arm)?);
        actions.push(arm);
    }

    let mut estimates = Vec::with_capacity(num_arms);
    for arm in 0..num_arms {
        let pulls = &schedule.estimation_pulls[arm];
        if pulls.is_empty() {
            // Zero estimation pulls can only happen on horizons too short
            // to give every arm a block; the fit has nothing to work with.
            estimates.push(ArmEstimate::fallback(arm, None));
            continue;
        }
        let b_hat = rewards[pulls[0] - 1];
        let values: Vec<f64> = pulls.iter().map(|&t| b_hat - rewards[t - 1]).collect();
        let traj = Trajectory::new(arm, schedule.spacing[arm], values);
        estimates.push(fit_arm(arm, traj, b_hat));
    }
    let model = EstimatedModel { arms: estimates };
    let planning_arms = model
        .planning_params()
        .expect("every explored arm carries a base reward");

    let mut episode_bounds = Vec::new();
    let mut plans = Vec::new();
    let mut t_prev = schedule.exploration_end;
    while t_prev < config.horizon {
        let t_next = (t_prev + config.window).min(config.horizon);
        let plan = {
            let request = PlanRequest {
                arms: &planning_arms,
                history: env.history(),
                t_start: t_prev,
                t_end: t_next,
            };
            lookahead_plan(&request, config.plan_mode, &config.limits)?
        };
        for &arm in &plan.actions {
            rewards.push(env.step(arm)?);
            actions.push(arm);
        }
        episode_bounds.push((t_prev, t_next));
        plans.push(plan);
        t_prev = t_next;
    }

    let window_exceeds_guarantee = {
        let w = config.window as u128;
        let t = config.horizon as u128;
        w * w * w > t * t
    };
    Ok(EepRun {
        actions,
        rewards,
        model,
        exploration_end: schedule.exploration_end,
        remainder_start: schedule.remainder_start,
        episode_bounds,
        plans,
        window_exceeds_guarantee,
    })
}
