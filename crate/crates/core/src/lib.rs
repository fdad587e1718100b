//! Toolkit for bandit arms whose expected rewards decline under consecutive
//! pulls and rebound toward a base level with rest.
//!
//! Each arm carries a hidden satiation level that rises when the arm is
//! pulled and decays geometrically otherwise; the reward of a pull is the
//! arm's base reward minus its satiation influence. The crate covers the
//! full loop of working with such arms:
//!
//! - [`dynamics`]: arm parameters, the stochastic satiation process, the
//!   closed-form expected rewards, and the observable per-arm state.
//! - [`planning`]: greedy stepping, an exact branch-and-bound window
//!   planner with a beam-search fallback, window objectives in bilinear and
//!   linearized form, and the residue-class cut construction.
//! - [`sysid`]: least-squares identification of the satiation dynamics
//!   from logged influence trajectories, with confidence radii.
//! - [`eep`]: the explore-estimate-plan learner that schedules exploration
//!   pulls, fits the dynamics, and plans in windows against a live
//!   environment.
//! - [`regret`]: windowed lookahead regret of any executed action record
//!   against per-episode optimal time-dependent competitors.

pub mod dynamics;
pub mod eep;
pub mod planning;
pub mod regret;
pub mod sysid;

pub use dynamics::{
    expected_reward, mdp_reward, satiation_expected, state_bound, ArmParams, ArmProcess,
    DynamicsError, EnvConfig, Environment, MdpState, PullHistory,
};
pub use eep::{eep_run, explore_schedule, EepConfig, EepError, EepRun, ExplorationMode, Phase};
pub use planning::{
    greedy_policy, greedy_step, lookahead_gap_bound, lookahead_plan, max_kcut_partition,
    objective_bilinear, objective_linearized, Optimality, PlanError, PlanMode, PlanRequest,
    PlanResult, PullAssignment, SearchLimits,
};
pub use regret::{episode_oracle, lookahead_regret, RegretError, RegretReport};
pub use sysid::{
    confidence_radii, multi_traj_estimate, ols_affine_fit, recover_params, ArmEstimate,
    EstimatedModel, SysidError, Trajectory,
};
