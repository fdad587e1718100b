//! Acceptance suite. Each test pins one release criterion at its stated
//! tolerance and prints a pass line; run with `--nocapture` to see them.
//!
//! The exhaustive reference values are computed by plain recursions local
//! to this file, independent of the planner under test.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rebound_cli::slope::slope_fit;
use rebound_core::dynamics::{
    derive_seed, expected_reward, ArmParams, EnvConfig, Environment, PullHistory,
};
use rebound_core::eep::{eep_run, EepConfig};
use rebound_core::planning::{
    cut_weight, greedy_policy, lookahead_gap_bound, lookahead_plan, max_kcut_partition,
    objective_bilinear, objective_linearized, total_pairwise_weight, LinearizationVars, PlanMode,
    PlanRequest, PullAssignment, SearchLimits,
};
use rebound_core::regret::{episode_oracle, lookahead_regret};
use rebound_core::sysid::{ols_affine_fit, recover_params, Trajectory};
use std::time::Instant;

const TOL: f64 = 1e-9;

/// Five-arm benchmark mix used across the estimation and regret sweeps.
fn bench_arms() -> Vec<ArmParams> {
    vec![
        ArmParams::new(0.5, 1.0, 2.0).unwrap(),
        ArmParams::new(0.5, 3.0, 3.0).unwrap(),
        ArmParams::new(0.6, 3.0, 4.0).unwrap(),
        ArmParams::new(0.7, 2.0, 2.0).unwrap(),
        ArmParams::new(0.8, 2.0, 10.0).unwrap(),
    ]
}

/// Satiation levels after a pull sequence, by plain recursion.
fn satiations_after(arms: &[ArmParams], actions: &[usize]) -> Vec<f64> {
    let mut sats = vec![0.0; arms.len()];
    for &a in actions {
        for (k, s) in sats.iter_mut().enumerate() {
            *s = arms[k].gamma * (*s + if k == a { 1.0 } else { 0.0 });
        }
    }
    sats
}

/// Expected cumulative reward of a full action sequence, by recursion.
fn sequence_value(arms: &[ArmParams], actions: &[usize]) -> f64 {
    let mut sats = vec![0.0; arms.len()];
    let mut total = 0.0;
    for &a in actions {
        total += arms[a].base_reward - arms[a].lambda * sats[a];
        for (k, s) in sats.iter_mut().enumerate() {
            *s = arms[k].gamma * (*s + if k == a { 1.0 } else { 0.0 });
        }
    }
    total
}

/// Exhaustive maximum over every action sequence of a window, starting
/// from given satiation levels.
fn enumerate_best(arms: &[ArmParams], s0: &[f64], window: usize) -> f64 {
    fn go(arms: &[ArmParams], sats: &[f64], left: usize, acc: f64, best: &mut f64) {
        if left == 0 {
            if acc > *best {
                *best = acc;
            }
            return;
        }
        for k in 0..arms.len() {
            let reward = arms[k].base_reward - arms[k].lambda * sats[k];
            let next: Vec<f64> = sats
                .iter()
                .enumerate()
                .map(|(j, &s)| arms[j].gamma * (s + if j == k { 1.0 } else { 0.0 }))
                .collect();
            go(arms, &next, left - 1, acc + reward, best);
        }
    }
    let mut best = f64::NEG_INFINITY;
    go(arms, s0, window, 0.0, &mut best);
    best
}

fn random_arm(rng: &mut impl Rng) -> ArmParams {
    ArmParams::new(
        rng.random_range(0.0..0.95),
        rng.random_range(0.0..3.0),
        rng.random_range(-2.0..10.0),
    )
    .unwrap()
}

#[test]
fn criterion_01_greedy_matches_brute_force_on_identical_arms() {
    let start = Instant::now();
    let arms = vec![ArmParams::new(0.6, 2.0, 3.0).unwrap(); 3];
    let horizon = 9;
    let greedy = greedy_policy(&arms, horizon).unwrap();
    let greedy_value = sequence_value(&arms, &greedy);
    let best = enumerate_best(&arms, &[0.0; 3], horizon);
    assert!(
        (greedy_value - best).abs() <= TOL,
        "greedy {greedy_value} vs brute force {best}"
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!("criterion 01 (greedy optimality, identical arms): PASS in {elapsed:?}");
}

#[test]
fn criterion_02_inflated_arm_example_gap() {
    let horizon = 5usize;
    let gamma2: f64 = 0.5;
    let b1 = 1.0;
    let b2 = b1 + (gamma2 - gamma2.powi(horizon as i32)) / (1.0 - gamma2);
    let arms = vec![
        ArmParams::new(0.3, 1.0, b1).unwrap(),
        ArmParams::new(gamma2, 1.0, b2).unwrap(),
    ];
    let greedy = greedy_policy(&arms, horizon).unwrap();
    assert_eq!(
        greedy,
        vec![1, 1, 1, 1, 0],
        "greedy must ride the inflated arm until the end"
    );
    // The non-greedy schedule that rests the inflated arm one step earlier.
    let better = vec![1, 1, 1, 0, 1];
    let gap = sequence_value(&arms, &better) - sequence_value(&arms, &greedy);
    let expect = gamma2 - gamma2.powi(horizon as i32 - 1);
    assert!((expect - 0.4375).abs() <= TOL);
    assert!((gap - expect).abs() <= TOL, "gap {gap} vs {expect}");
    println!("criterion 02 (greedy suboptimality gap = {expect}): PASS");
}

#[test]
fn criterion_03_exact_planner_matches_enumeration() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
    let limits = SearchLimits::default();
    for case in 0..50 {
        let num_arms = rng.random_range(1..=4);
        let window = rng.random_range(1..=8);
        let prefix_len = rng.random_range(0..=6);
        let arms: Vec<ArmParams> = (0..num_arms).map(|_| random_arm(&mut rng)).collect();
        let prefix: Vec<usize> = (0..prefix_len)
            .map(|_| rng.random_range(0..num_arms))
            .collect();
        let history =
            PullHistory::from_actions(num_arms, prefix_len + window, prefix.clone()).unwrap();
        let req = PlanRequest {
            arms: &arms,
            history: &history,
            t_start: prefix_len,
            t_end: prefix_len + window,
        };
        let plan = lookahead_plan(&req, PlanMode::Exact, &limits).unwrap();
        let best = enumerate_best(&arms, &satiations_after(&arms, &prefix), window);
        assert!(
            (plan.objective - best).abs() <= TOL,
            "case {case}: planner {} vs enumeration {best}",
            plan.objective
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!("criterion 03 (exact planner vs enumeration, 50 instances): PASS in {elapsed:?}");
}

#[test]
fn criterion_04_gap_bound_is_sound() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xB0DE);
    let limits = SearchLimits::default();
    let mut violations = 0usize;
    for _ in 0..100 {
        let num_arms = rng.random_range(1..=3);
        let horizon = rng.random_range(2..=12);
        let arms: Vec<ArmParams> = (0..num_arms).map(|_| random_arm(&mut rng)).collect();
        let optimum = enumerate_best(&arms, &vec![0.0; num_arms], horizon);
        for window in 1..=horizon {
            let mut history = PullHistory::new(num_arms, horizon);
            while history.completed() < horizon {
                let t = history.completed();
                let req = PlanRequest {
                    arms: &arms,
                    history: &history,
                    t_start: t,
                    t_end: (t + window).min(horizon),
                };
                let plan = lookahead_plan(&req, PlanMode::Exact, &limits).unwrap();
                for a in plan.actions {
                    history.push(a).unwrap();
                }
            }
            let achieved = sequence_value(&arms, history.actions());
            let bound = lookahead_gap_bound(&arms, horizon, window).unwrap();
            if optimum - achieved > bound + TOL {
                violations += 1;
            }
        }
    }
    assert_eq!(violations, 0);
    let elapsed = start.elapsed();
    println!("criterion 04 (gap bound sound on 100 instances, all windows): PASS in {elapsed:?}");
}

#[test]
fn criterion_05_bilinear_and_linearized_objectives_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x11EA);
    for _ in 0..1000 {
        let num_arms = rng.random_range(1..=4);
        let horizon = rng.random_range(1..=12);
        let arms: Vec<ArmParams> = (0..num_arms).map(|_| random_arm(&mut rng)).collect();
        let actions: Vec<usize> = (0..horizon)
            .map(|_| rng.random_range(0..num_arms))
            .collect();
        let assignment = PullAssignment::from_actions(num_arms, &actions).unwrap();
        let z = LinearizationVars::products_of(&assignment);
        let bilinear = objective_bilinear(&arms, &assignment).unwrap();
        let linear = objective_linearized(&arms, &assignment, &z).unwrap();
        assert!((bilinear - linear).abs() <= TOL, "{bilinear} vs {linear}");
    }
    println!("criterion 05 (objective forms agree on 1000 assignments): PASS");
}

#[test]
fn criterion_06_residue_partition_is_a_maximum_cut() {
    for num_parts in 1..=3usize {
        for horizon in 1..=8usize {
            for &gamma in &[0.3, 0.6, 0.9] {
                let lambda = 1.0;
                let residue = max_kcut_partition(num_parts, horizon);
                let residue_weight = cut_weight(&residue, lambda, gamma);
                let mut best: f64 = 0.0;
                for code in 0..num_parts.pow(horizon as u32) {
                    let mut parts = vec![Vec::new(); num_parts];
                    let mut c = code;
                    for t in 1..=horizon {
                        parts[c % num_parts].push(t);
                        c /= num_parts;
                    }
                    best = best.max(cut_weight(&parts, lambda, gamma));
                }
                assert!(
                    (residue_weight - best).abs() <= TOL && residue_weight >= best - TOL,
                    "K={num_parts} T={horizon} gamma={gamma}: {residue_weight} vs {best}"
                );
                // Cross-check the schedule correspondence: for identical
                // arms, horizon * b - total weight + best cut equals the
                // exhaustive optimum of the pull objective.
                if num_parts >= 2 {
                    let b = 2.0;
                    let arms = vec![ArmParams::new(gamma, lambda, b).unwrap(); num_parts];
                    let optimum = enumerate_best(&arms, &vec![0.0; num_parts], horizon);
                    let reconstructed = horizon as f64 * b
                        - total_pairwise_weight(horizon, lambda, gamma)
                        + residue_weight;
                    assert!(
                        (optimum - reconstructed).abs() <= TOL,
                        "correspondence broke: {optimum} vs {reconstructed}"
                    );
                }
            }
        }
    }
    println!("criterion 06 (residue partition attains the maximum cut): PASS");
}

#[test]
fn criterion_07_noiseless_fits_recover_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x51D);
    for case in 0..20 {
        let gamma = rng.random_range(0.05..0.95);
        let lambda = rng.random_range(0.1..4.0);
        let spacing = rng.random_range(1..=3);
        let arm = ArmParams::new(gamma, lambda, 0.0).unwrap();
        let traj = Trajectory::simulate(&arm, spacing, 14, 0.0, &mut rng).unwrap();
        let (a_hat, d_hat) = ols_affine_fit(&traj).unwrap();
        let (g, l) = recover_params(a_hat, d_hat, spacing).unwrap();
        assert!(
            (g - gamma).abs() <= TOL && (l - lambda).abs() <= TOL,
            "case {case}: ({gamma}, {lambda}, m={spacing}) -> ({g}, {l})"
        );
    }
    println!("criterion 07 (noiseless identification exact, 20 triples): PASS");
}

#[test]
fn criterion_08_estimation_error_shrinks_at_the_square_root_rate() {
    let start = Instant::now();
    let arms = bench_arms();
    // Benchmark noise variance 0.1; at lower noise the informative startup
    // transient dominates the high-retention arms over this sample range
    // and flattens their error curves below the square-root rate.
    let sigma_z = 0.1f64.sqrt();
    let n_grid = [100usize, 316, 1000, 3162, 10_000];
    let seeds = 30u64;
    for (k, arm) in arms.iter().enumerate() {
        let mut med_gamma = Vec::new();
        let mut med_lambda = Vec::new();
        for &n in &n_grid {
            let mut err_gamma = Vec::new();
            let mut err_lambda = Vec::new();
            for seed in 0..seeds {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(0xA8, &[k as u64, seed]));
                let traj = Trajectory::simulate(arm, 1, n, sigma_z, &mut rng).unwrap();
                let (a_hat, d_hat) = ols_affine_fit(&traj).unwrap();
                let (g, l) = recover_params(a_hat, d_hat, 1).unwrap();
                err_gamma.push((g - arm.gamma).abs());
                err_lambda.push((l - arm.lambda).abs());
            }
            err_gamma.sort_by(|a, b| a.partial_cmp(b).unwrap());
            err_lambda.sort_by(|a, b| a.partial_cmp(b).unwrap());
            med_gamma.push((n as f64, err_gamma[seeds as usize / 2]));
            med_lambda.push((n as f64, err_lambda[seeds as usize / 2]));
        }
        let gamma_fit = slope_fit(&med_gamma).unwrap();
        let lambda_fit = slope_fit(&med_lambda).unwrap();
        for (name, fit) in [("gamma", gamma_fit), ("lambda", lambda_fit)] {
            assert!(
                (-0.65..=-0.35).contains(&fit.slope),
                "arm {k} {name} slope {} outside [-0.65, -0.35]",
                fit.slope
            );
        }
        println!(
            "  arm {k}: gamma slope {:.3}, lambda slope {:.3}",
            gamma_fit.slope, lambda_fit.slope
        );
    }
    println!(
        "criterion 08 (estimation error rate): PASS in {:?}",
        start.elapsed()
    );
}

#[test]
fn criterion_09_eep_regret_grows_at_the_two_thirds_rate() {
    let start = Instant::now();
    let arms = bench_arms();
    let sigma_z = 0.1;
    let t_grid = [60usize, 80, 100, 150, 200, 300, 400];
    let w_list = [2usize, 5, 8, 10];
    let seeds = 20u64;
    let limits = SearchLimits::default();

    // Substitute computational check: single-window solves at the widest
    // window stay under five seconds each.
    let mut probe_rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_solve = std::time::Duration::ZERO;
    for prefix_len in [0usize, 60, 390] {
        let prefix: Vec<usize> = (0..prefix_len)
            .map(|_| probe_rng.random_range(0..arms.len()))
            .collect();
        let history = PullHistory::from_actions(arms.len(), prefix_len + 10, prefix).unwrap();
        let req = PlanRequest {
            arms: &arms,
            history: &history,
            t_start: prefix_len,
            t_end: prefix_len + 10,
        };
        let solve_start = Instant::now();
        lookahead_plan(&req, PlanMode::Exact, &limits).unwrap();
        worst_solve = worst_solve.max(solve_start.elapsed());
    }
    assert!(
        worst_solve.as_secs_f64() < 5.0,
        "window solve took {worst_solve:?}"
    );

    let cells: Vec<(usize, usize, u64)> = t_grid
        .iter()
        .flat_map(|&t| {
            w_list
                .iter()
                .flat_map(move |&w| (0..seeds).map(move |s| (t, w, s)))
        })
        .collect();
    let regrets: Vec<((usize, usize), f64)> = cells
        .par_iter()
        .map(|&(horizon, window, seed)| {
            let cfg = EnvConfig {
                arms: arms.clone(),
                sigma_z,
                seed: derive_seed(0xEE9, &[horizon as u64, window as u64, seed]),
            };
            let mut env = Environment::new(&cfg, horizon).unwrap();
            let mut config = EepConfig::new(window, horizon);
            config.limits = limits;
            let run = eep_run(&mut env, &config).unwrap();
            let report = lookahead_regret(&run.actions, &arms, window, &limits).unwrap();
            ((horizon, window), report.total)
        })
        .collect();

    let mut out_of_bracket = Vec::new();
    for &window in &w_list {
        let points: Vec<(f64, f64)> = t_grid
            .iter()
            .map(|&t| {
                let vals: Vec<f64> = regrets
                    .iter()
                    .filter(|((h, w), _)| *h == t && *w == window)
                    .map(|&(_, r)| r)
                    .collect();
                (t as f64, vals.iter().sum::<f64>() / vals.len() as f64)
            })
            .collect();
        assert!(
            points.iter().all(|&(_, r)| r > 0.0),
            "regret must be positive"
        );
        let fit = slope_fit(&points).unwrap();
        println!(
            "  window {window}: regret slope {:.3} (r2 {:.3}, means {:?})",
            fit.slope,
            fit.r2,
            points.iter().map(|p| p.1.round()).collect::<Vec<_>>()
        );
        if !(0.55..=0.85).contains(&fit.slope) {
            out_of_bracket.push((window, fit.slope));
        }
    }
    assert!(
        out_of_bracket.is_empty(),
        "slopes outside [0.55, 0.85]: {out_of_bracket:?}"
    );
    println!(
        "criterion 09 (regret growth rate; worst window solve {worst_solve:?}): PASS in {:?}",
        start.elapsed()
    );
}

#[test]
fn criterion_10_episode_oracle_matches_competitor_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0AC);
    let limits = SearchLimits::default();
    for case in 0..50 {
        let num_arms = rng.random_range(1..=3);
        let window = rng.random_range(1..=5);
        let prefix_len = rng.random_range(0..=10);
        let arms: Vec<ArmParams> = (0..num_arms).map(|_| random_arm(&mut rng)).collect();
        let prefix: Vec<usize> = (0..prefix_len)
            .map(|_| rng.random_range(0..num_arms))
            .collect();
        let history =
            PullHistory::from_actions(num_arms, prefix_len + window, prefix.clone()).unwrap();
        let (_, oracle) =
            episode_oracle(&arms, &history, prefix_len, prefix_len + window, &limits).unwrap();
        let best = enumerate_best(&arms, &satiations_after(&arms, &prefix), window);
        assert!(
            (oracle - best).abs() <= TOL,
            "case {case}: {oracle} vs {best}"
        );
    }

    // Self-play: replaying the oracle window by window leaves zero regret.
    let arms = vec![
        ArmParams::new(0.6, 1.5, 3.0).unwrap(),
        ArmParams::new(0.4, 1.0, 2.5).unwrap(),
        ArmParams::new(0.8, 2.0, 4.0).unwrap(),
    ];
    let horizon = 24;
    let window = 4;
    let mut history = PullHistory::new(3, horizon);
    while history.completed() < horizon {
        let t = history.completed();
        let (actions, _) =
            episode_oracle(&arms, &history, t, (t + window).min(horizon), &limits).unwrap();
        for a in actions {
            history.push(a).unwrap();
        }
    }
    let report = lookahead_regret(history.actions(), &arms, window, &limits).unwrap();
    assert!(
        report.total.abs() <= TOL,
        "self-play regret {}",
        report.total
    );
    println!("criterion 10 (episode oracle + self-play regret): PASS");
}

#[test]
fn criterion_11_rewards_decline_and_rebound_with_diminishing_changes() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1111);
    for case in 0..100 {
        let arm = ArmParams::new(
            rng.random_range(0.05..0.97),
            rng.random_range(0.1..5.0),
            rng.random_range(-5.0..10.0),
        )
        .unwrap();
        let pulls = 12;
        let rest = 12;
        let mut flags = vec![false];
        let mut declining = Vec::new();
        for _ in 0..pulls {
            declining.push(expected_reward(&arm, &flags).unwrap());
            flags.push(true);
        }
        let drops: Vec<f64> = declining.windows(2).map(|w| w[0] - w[1]).collect();
        assert!(
            drops.iter().all(|&d| d >= -TOL),
            "case {case}: reward rose under pulls"
        );
        assert!(
            drops.windows(2).all(|w| w[1] <= w[0] + TOL),
            "case {case}: drops must diminish"
        );
        let mut rebounding = Vec::new();
        for _ in 0..rest {
            flags.push(false);
            rebounding.push(expected_reward(&arm, &flags).unwrap());
        }
        let gains: Vec<f64> = rebounding.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(
            gains.iter().all(|&g| g >= -TOL),
            "case {case}: reward fell during rest"
        );
        assert!(
            gains.windows(2).all(|w| w[1] <= w[0] + TOL),
            "case {case}: gains must diminish"
        );
        assert!(rebounding.iter().all(|&r| r <= arm.base_reward + TOL));
    }
    println!("criterion 11 (decline and rebound with diminishing changes): PASS");
}
