//! Windowed lookahead regret of an executed action record.
//!
//! The horizon is split into windows. For each window, the record's
//! expected reward under the true parameters is compared against the best
//! time-dependent competitor for that window, which is exactly the window
//! plan computed under the true parameters from the learner's own history:
//! for time-dependent play the expected reward of the stochastic chain
//! collapses to the deterministic closed form.

use crate::dynamics::{ArmParams, DynamicsError, PullHistory};
use crate::planning::{lookahead_plan, PlanError, PlanMode, PlanRequest, SearchLimits};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RegretError {
    #[error("window must lie in [1, {horizon}], got {window}")]
    WindowOutOfRange { window: usize, horizon: usize },
    #[error("action record is empty")]
    EmptyRecord,
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpisodeGap {
    pub episode: usize,
    pub oracle_value: f64,
    pub learner_value: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretReport {
    pub window: usize,
    pub horizon: usize,
    pub per_episode: Vec<EpisodeGap>,
    pub total: f64,
}

/// Best time-dependent play for the window `t_start + 1 ..= t_end` given
/// the learner's own history, under the true parameters: an exact window
/// plan and its objective.
pub fn episode_oracle(
    arms: &[ArmParams],
    history: &PullHistory,
    t_start: usize,
    t_end: usize,
    limits: &SearchLimits,
) -> Result<(Vec<usize>, f64), RegretError> {
    let prefix = history.prefix(t_start.min(history.completed()));
    let request = PlanRequest {
        arms,
        history: &prefix,
        t_start,
        t_end,
    };
    let plan = lookahead_plan(&request, PlanMode::Exact, limits)?;
    Ok((plan.actions, plan.objective))
}

/// Windowed lookahead regret of an executed action record against the
/// per-window optimal time-dependent competitor.
///
/// Both sides are evaluated in closed form under the true parameters, so
/// the report is exact conditional on the record; averaging reports over
/// independent runs estimates the expected regret of the policy that
/// produced them.
pub fn lookahead_regret(
    actions: &[usize],
    arms: &[ArmParams],
    window: usize,
    limits: &SearchLimits,
) -> Result<RegretReport, RegretError> {
    if actions.is_empty() {
        return Err(RegretError::EmptyRecord);
    }
    let horizon = actions.len();
    if window == 0 || window > horizon {
        return Err(RegretError::WindowOutOfRange { window, horizon });
    }
    let history = PullHistory::from_actions(arms.len(), horizon, actions.to_vec())
        .map_err(PlanError::from)?;

    // Expected reward of every executed step under the true parameters.
    let mut step_values = Vec::with_capacity(horizon);
    let mut sats = vec![0.0; arms.len()];
    for &arm in actions {
        step_values.push(arms[arm].base_reward - arms[arm].lambda * sats[arm]);
        for (k, s) in sats.iter_mut().enumerate() {
            *s = arms[k].gamma * (*s + if k == arm { 1.0 } else { 0.0 });
        }
    }

    let num_episodes = horizon.div_ceil(window);
    let mut per_episode = Vec::with_capacity(num_episodes);
    let mut total = 0.0;
    for episode in 0..num_episodes {
        let t_start = episode * window;
        let t_end = (t_start + window).min(horizon);
        let (_, oracle_value) = episode_oracle(arms, &history, t_start, t_end, limits)?;
        let learner_value: f64 = step_values[t_start..t_end].iter().sum();
        let gap = oracle_value - learner_value;
        total += gap;
        per_episode.push(EpisodeGap {
            episode,
            oracle_value,
            learner_value,
            gap,
        });
    }
    Ok(RegretReport {
        window,
        horizon,
        per_episode,
        total,
    })
}
