//! Identification of the satiation dynamics from logged influence
//! trajectories.
//!
//! When an arm is pulled every `m` steps, the observed satiation influences
//! (first reward minus each later reward) follow the scalar affine
//! recursion `x' = a x + d + noise` with `a = gamma^m` and
//! `d = lambda * gamma^m`. This module fits `(a, d)` by ordinary least
//! squares on a single trajectory, by the paired-difference estimator on a
//! batch of trajectories, recovers `(gamma, lambda)` from the fit, and
//! provides finite-sample confidence radii.

use crate::dynamics::{ArmParams, DynamicsError};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Estimated retention factors are clamped below this before planning so
/// geometric sums stay finite.
pub const GAMMA_CLAMP_MAX: f64 = 1.0 - 1e-6;

#[derive(Debug, Error)]
pub enum SysidError {
    #[error("trajectory must start at zero influence, first value is {0}")]
    NonzeroFirstValue(f64),
    #[error("pull spacing must be at least 1")]
    ZeroSpacing,
    #[error("trajectory of length {len} is too short; need at least {needed} values")]
    TooShort { len: usize, needed: usize },
    #[error("normal equations are rank deficient (covariate values carry no spread)")]
    RankDeficient,
    #[error("estimated transition coefficient is too close to zero; influence ratio undefined")]
    DegenerateRatio,
    #[error("paired trajectory differences vanish; transition coefficient unidentifiable")]
    DegenerateData,
    #[error("need at least {needed} trajectories, got {got}")]
    NotEnoughTrajectories { needed: usize, got: usize },
    #[error("trajectory {index} has {len} values but t_min {t_min} requires {needed}")]
    TrajectoryTooShort {
        index: usize,
        len: usize,
        t_min: usize,
        needed: usize,
    },
    #[error("t_min must be at least 2, got {0}")]
    TminTooSmall(usize),
    #[error("delta must lie in (0, 1), got {0}")]
    DeltaOutOfRange(f64),
    #[error("sample count must be at least 1")]
    EmptySample,
    #[error("estimate for arm {0} carries no base reward; cannot build planning parameters")]
    MissingBaseReward(usize),
    #[error("estimate for arm {0} is not finite")]
    NonFiniteEstimate(usize),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// A single arm's evenly spaced influence trajectory; `values[0]` is the
/// zero influence observed at the arm's first pull.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub arm_index: usize,
    spacing: usize,
    values: Vec<f64>,
}

impl Trajectory {
    pub fn new(arm_index: usize, spacing: usize, values: Vec<f64>) -> Result<Self, SysidError> {
        if spacing == 0 {
            return Err(SysidError::ZeroSpacing);
        }
        if values.len() < 2 {
            return Err(SysidError::TooShort {
                len: values.len(),
                needed: 2,
            });
        }
        if values[0] != 0.0 {
            return Err(SysidError::NonzeroFirstValue(values[0]));
        }
        Ok(Self {
            arm_index,
            spacing,
            values,
        })
    }

    pub fn spacing(&self) -> usize {
        self.spacing
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Simulates the influence trajectory of `arm` pulled every `spacing`
    /// steps for `transitions` transitions (so `transitions + 1` values).
    pub fn simulate(
        arm: &ArmParams,
        spacing: usize,
        transitions: usize,
        sigma_z: f64,
        rng: &mut impl Rng,
    ) -> Result<Self, SysidError> {
        if spacing == 0 {
            return Err(SysidError::ZeroSpacing);
        }
        arm.validate()?;
        let (a, d) = arm.affine_coeffs(spacing);
        let noise_std = arm.affine_noise_std(sigma_z, spacing);
        let mut values = Vec::with_capacity(transitions + 1);
        let mut x = 0.0;
        values.push(x);
        for _ in 0..transitions {
            x = a * x + d + noise_std * rng.sample::<f64, _>(StandardNormal);
            values.push(x);
        }
        // Simulated trajectories are not tied to an environment arm slot.
        Self::new(0, spacing, values)
    }
}

/// Ordinary least squares fit of `x' = a x + d` on the consecutive pairs
/// of a trajectory. Closed-form 2x2 solve with a determinant guard.
pub fn ols_affine_fit(traj: &Trajectory) -> Result<(f64, f64), SysidError> {
    let values = traj.values();
    // Two regression pairs are the minimum for two parameters.
    if values.len() < 3 {
        return Err(SysidError::TooShort {
            len: values.len(),
            needed: 3,
        });
    }
    let n = (values.len() - 1) as f64;
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for pair in values.windows(2) {
        let (x, y) = (pair[0], pair[1]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let det = n * sxx - sx * sx;
    let scale = (n * sxx).abs().max(sx * sx).max(f64::MIN_POSITIVE);
    if det.abs() <= 1e-12 * scale {
        return Err(SysidError::RankDeficient);
    }
    let a = (n * sxy - sx * sy) / det;
    let d = (sy - a * sx) / n;
    Ok((a, d))
}

/// Recovers `(gamma, lambda)` from fitted affine coefficients via the
/// root and ratio transforms, taking absolute values throughout.
pub fn recover_params(a_hat: f64, d_hat: f64, spacing: usize) -> Result<(f64, f64), SysidError> {
    if spacing == 0 {
        return Err(SysidError::ZeroSpacing);
    }
    if a_hat.abs() < 1e-9 {
        return Err(SysidError::DegenerateRatio);
    }
    let gamma = if spacing == 1 {
        a_hat.abs()
    } else {
        a_hat.abs().powf(1.0 / spacing as f64)
    };
    let lambda = (d_hat / a_hat).abs();
    Ok((gamma, lambda))
}

/// Unbiased residual noise standard deviation of an OLS fit (divisor
/// `n - 2`); a diagnostic for the trajectory's aggregated noise level.
pub fn residual_noise_std(traj: &Trajectory, a_hat: f64, d_hat: f64) -> Result<f64, SysidError> {
    let values = traj.values();
    if values.len() < 4 {
        return Err(SysidError::TooShort {
            len: values.len(),
            needed: 4,
        });
    }
    let n = (values.len() - 1) as f64;
    let mut ss = 0.0;
    for pair in values.windows(2) {
        let r = pair[1] - a_hat * pair[0] - d_hat;
        ss += r * r;
    }
    Ok((ss / (n - 2.0)).sqrt())
}

/// Small-ball diagnostic constant of the single-trajectory fit; smaller
/// values mean slower identification. Defined for `|a| < 1`.
pub fn small_ball_psi(a: f64, d: f64, sigma_zk: f64) -> f64 {
    if a.abs() >= 1.0 {
        return f64::NAN;
    }
    let var = sigma_zk * sigma_zk;
    let one_minus = (1.0 - a) * (1.0 - a);
    let one_minus_sq = 1.0 - a * a;
    let first = var * one_minus / (16.0 * d * d * one_minus_sq + one_minus * var);
    let second = var / (4.0 * one_minus_sq);
    first.min(second).sqrt()
}

/// Result of the paired-difference estimator over a batch of trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MultiTrajFit {
    pub a_hat: f64,
    pub d_hat: f64,
    pub num_trajectories: usize,
}

impl MultiTrajFit {
    /// Whether the batch is large enough for the concentration guarantee
    /// behind the transition-coefficient radius (`n >= 64 log(2/delta)`).
    pub fn precondition_met(&self, delta: f64) -> Result<bool, SysidError> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(SysidError::DeltaOutOfRange(delta));
        }
        Ok(self.num_trajectories as f64 >= 64.0 * (2.0 / delta).ln())
    }
}

/// Batch estimator over `n` independent trajectories: the offset is the
/// mean second value, and the transition coefficient is a least-squares
/// ratio on pairwise-differenced trajectories (pairing trajectory `i` with
/// trajectory `2i`), which cancels the offset.
pub fn multi_traj_estimate(trajs: &[Trajectory], t_min: usize) -> Result<MultiTrajFit, SysidError> {
    if trajs.len() < 2 {
        return Err(SysidError::NotEnoughTrajectories {
            needed: 2,
            got: trajs.len(),
        });
    }
    if t_min < 2 {
        return Err(SysidError::TminTooSmall(t_min));
    }
    for (i, traj) in trajs.iter().enumerate() {
        if traj.len() < t_min + 1 {
            return Err(SysidError::TrajectoryTooShort {
                index: i,
                len: traj.len(),
                t_min,
                needed: t_min + 1,
            });
        }
    }
    let n = trajs.len();
    let d_hat = trajs.iter().map(|t| t.values()[1]).sum::<f64>() / n as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 1..=n / 2 {
        let first = trajs[i - 1].values();
        let second = trajs[2 * i - 1].values();
        let y_last = first[t_min - 1] - second[t_min - 1];
        let y_next = first[t_min] - second[t_min];
        num += y_last * y_next;
        den += y_last * y_last;
    }
    if den == 0.0 {
        return Err(SysidError::DegenerateData);
    }
    Ok(MultiTrajFit {
        a_hat: num / den,
        d_hat,
        num_trajectories: n,
    })
}

/// Finite-sample confidence half-widths for the batch estimators, with the
/// fitted transition coefficient plugged in for the unknown truth.
pub fn confidence_radii(
    n: usize,
    delta: f64,
    sigma_zk: f64,
    a_hat: f64,
    t_min: usize,
) -> Result<(f64, f64), SysidError> {
    if n == 0 {
        return Err(SysidError::EmptySample);
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(SysidError::DeltaOutOfRange(delta));
    }
    let nf = n as f64;
    let eps_d = (2.0 * sigma_zk * sigma_zk * (2.0 / delta).ln() / nf).sqrt();
    let mut geom = 0.0;
    let a2 = a_hat * a_hat;
    let mut pow = 1.0;
    for _ in 0..=t_min {
        geom += pow;
        pow *= a2;
    }
    let eps_a = 4.0 * (2.0 * (4.0 / delta).ln() / (nf * geom)).sqrt();
    Ok((eps_a, eps_d))
}

/// Confidence half-widths attached to an arm estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceRadii {
    pub eps_a: f64,
    pub eps_d: f64,
}

/// Fitted model of one arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmEstimate {
    pub arm: usize,
    pub a_hat: f64,
    pub d_hat: f64,
    pub gamma_hat: f64,
    pub lambda_hat: f64,
    /// Base reward observed at the arm's first pull, when available.
    pub b_hat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radii: Option<ConfidenceRadii>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<f64>,
    /// Residual estimate of the aggregated noise level; diagnostic only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_z_hat: Option<f64>,
    /// The fitted transition coefficient was negative and its sign was
    /// dropped during recovery.
    #[serde(default)]
    pub sign_flipped: bool,
    /// Estimation failed for this arm; the model fell back to the base
    /// reward alone (zero retention and influence).
    #[serde(default)]
    pub fallback: bool,
}

impl ArmEstimate {
    /// An estimate standing in for a failed fit: the arm behaves as a flat
    /// reward source at its observed base reward.
    pub fn fallback(arm: usize, b_hat: Option<f64>) -> Self {
        Self {
            arm,
            a_hat: 0.0,
            d_hat: 0.0,
            gamma_hat: 0.0,
            lambda_hat: 0.0,
            b_hat,
            radii: None,
            psi: None,
            sigma_z_hat: None,
            sign_flipped: false,
            fallback: true,
        }
    }
}

/// Per-arm fitted model, in arm order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EstimatedModel {
    pub arms: Vec<ArmEstimate>,
}

impl EstimatedModel {
    /// Whether any arm's fit fell back to base reward only.
    pub fn any_fallback(&self) -> bool {
        self.arms.iter().any(|a| a.fallback)
    }

    /// Planning-safe arm parameters: retention clamped into
    /// `[0, GAMMA_CLAMP_MAX]` and base rewards required.
    pub fn planning_params(&self) -> Result<Vec<ArmParams>, SysidError> {
        self.arms
            .iter()
            .map(|est| {
                let b = est.b_hat.ok_or(SysidError::MissingBaseReward(est.arm))?;
                if !(est.gamma_hat.is_finite() && est.lambda_hat.is_finite() && b.is_finite()) {
                    return Err(SysidError::NonFiniteEstimate(est.arm));
                }
                let gamma = est.gamma_hat.clamp(0.0, GAMMA_CLAMP_MAX);
                Ok(ArmParams {
                    gamma,
                    lambda: est.lambda_hat,
                    base_reward: b,
                })
            })
            .collect()
    }
}
