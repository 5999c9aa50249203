//! Acceptance run: one `[PASS]`/`[FAIL]` line per criterion, non-zero exit on
//! any failure. Built with `harness = false` so the lines are always printed.

mod common;

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::{instance, loglog_slope, mean_se, random_lambda, random_theta_in_ball, scale_rewards};
use coreplan::bounds;
use coreplan::corelp::{
    build_corelp, extract_pi_dagger, j_star_alp, j_star_lra, solve_corelp_exact, solve_lralp, solve_mdp_dual,
    DualVector,
};
use coreplan::corestomp::{
    distance_gen_checks, duality_gap_exact, lambda_component, prox_update, run_corestomp, run_corestomp_observed,
    sample_action, theta_estimate, PlannerConfig, SaddleLayout,
};
use coreplan::features::epsilon_approx;
use coreplan::generate::{bias_only_features, random_mdp, FeatureFamily};
use coreplan::mdp::{q_star, value_iteration};
use coreplan::simulator::{GenerativeOracle, RewardNoise, Simulator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const VI_TOL: f64 = 1e-11;

type Criterion = (&'static str, Duration, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn max(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

fn oracle_equivalence() -> Outcome {
    let worst = max((0..50u64).into_par_iter().map(|k| {
        let mut rng = ChaCha8Rng::seed_from_u64(k);
        let s = rng.random_range(2..=15);
        let a = rng.random_range(1..=3);
        let gamma = if k % 2 == 0 { 0.5 } else { 0.9 };
        let mdp = random_mdp(&mut rng, s, a, gamma, None).unwrap();
        let v = value_iteration(&mdp, VI_TOL);
        max((0..s).map(|s0| (solve_mdp_dual(&mdp, s0).unwrap().0 - v[s0]).abs()))
    })
    .collect::<Vec<_>>());
    outcome(worst <= 1e-6, format!("max |LP − VI| = {worst:.2e} (tol 1e-6)"))
}

/// Worst slack of the two CoreLP inequalities: `(value err − bound, action loss − bound)`.
fn corelp_slack(inst: &coreplan::generate::Instance, s0: usize) -> (f64, f64, f64) {
    let v = value_iteration(&inst.mdp, VI_TOL);
    let q = q_star(&inst.mdp, &v);
    let (eps, _) = epsilon_approx(&inst.features, &v).unwrap();
    let problem = build_corelp(&inst.mdp, &inst.features, &inst.core, s0).unwrap();
    let (value, lambda) = solve_corelp_exact(&problem).unwrap();
    let pi = extract_pi_dagger(&lambda).unwrap();
    let gamma = inst.mdp.gamma();
    let value_err = (value - v[s0]).abs() - bounds::corelp_value_bound(eps, gamma);
    let action_loss = v[s0] - q.expected(s0, &pi) - bounds::corelp_action_bound(eps, gamma);
    (value_err, action_loss, eps)
}

fn exact_regime() -> Outcome {
    let slack: Vec<(f64, f64, f64)> = (0..50u64)
        .into_par_iter()
        .map(|k| {
            let gamma = [0.5, 0.9][k as usize % 2];
            let inst = instance(4 + k as usize % 8, 1 + k as usize % 3, gamma, FeatureFamily::Tabular, k);
            corelp_slack(&inst, k as usize % 4)
        })
        .collect();
    let value = max(slack.iter().map(|t| t.0));
    let action = max(slack.iter().map(|t| t.1));
    outcome(
        value <= 1e-5 && action <= 1e-5,
        format!("max |V† − v*| = {value:.2e}, max action loss = {action:.2e} (tol 1e-5)"),
    )
}

fn misspecified_regime() -> Outcome {
    let slack: Vec<(f64, f64, f64)> = (0..50u64)
        .into_par_iter()
        .map(|k| {
            let gamma = [0.5, 0.7, 0.9][k as usize % 3];
            let family = if k % 2 == 0 {
                FeatureFamily::BiasOnly
            } else {
                FeatureFamily::BiasValueNoise { noise: 0.5 }
            };
            let inst = instance(5 + k as usize % 8, 2 + k as usize % 2, gamma, family, 100 + k);
            corelp_slack(&inst, 0)
        })
        .collect();
    let value = max(slack.iter().map(|t| t.0));
    let action = max(slack.iter().map(|t| t.1));
    let positive = slack.iter().filter(|t| t.2 > 1e-9).count();
    outcome(
        value <= 1e-5 && action <= 1e-5 && positive == slack.len(),
        format!(
            "worst excess over 10γε/(1−γ) = {value:.2e}, over 20γε/(1−γ) = {action:.2e}; ε > 0 on {positive}/50"
        ),
    )
}

fn lralp_and_j_star() -> Outcome {
    let rows: Vec<(f64, f64, f64)> = (0..20u64)
        .into_par_iter()
        .map(|k| {
            let family = match k % 3 {
                0 => FeatureFamily::BiasValueNoise { noise: 0.5 },
                1 => FeatureFamily::ConvexMixture { core: 3, dim: 3 },
                _ => FeatureFamily::HardAggregation { clusters: 3 },
            };
            let gamma = [0.5, 0.8][k as usize % 2];
            let inst = instance(6 + k as usize % 7, 2, gamma, family, 200 + k);
            let n = inst.mdp.num_states();
            let v = value_iteration(&inst.mdp, VI_TOL);
            let (eps, _) = epsilon_approx(&inst.features, &v).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(k);
            let mu: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let (value, _) = solve_lralp(&inst.mdp, &inst.features, &inst.core, &mu).unwrap();
            let mu_l1: f64 = mu.iter().sum();
            let lralp_excess =
                (value - mu.iter().zip(v.as_slice()).map(|(m, x)| m * x).sum::<f64>()).abs() - bounds::lralp_bound(eps, gamma, mu_l1);
            let mut low = f64::INFINITY;
            let mut high = f64::NEG_INFINITY;
            for s in 0..n {
                let gap = j_star_alp(&inst.features, &v, s).unwrap() - j_star_lra(&inst.features, &inst.core, &v, s).unwrap();
                low = low.min(gap);
                high = high.max(gap - bounds::j_star_gap_bound(eps));
            }
            (lralp_excess, low, high)
        })
        .collect();
    let lralp = max(rows.iter().map(|r| r.0));
    let low = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let high = max(rows.iter().map(|r| r.2));
    outcome(
        lralp <= 1e-5 && low >= -1e-5 && high <= 1e-5,
        format!("LRALP excess {lralp:.2e}; min J*_ALP − J*_LRA = {low:.2e}; excess over 2ε = {high:.2e}"),
    )
}

fn unbiasedness() -> Outcome {
    let worst = max((0..20u64).into_par_iter().map(|k| {
        let family = [FeatureFamily::Tabular, FeatureFamily::ConvexMixture { core: 3, dim: 3 }][k as usize % 2].clone();
        let inst = instance(5 + k as usize % 5, 2 + k as usize % 2, 0.6, family, 300 + k);
        let problem = build_corelp(&inst.mdp, &inst.features, &inst.core, 1).unwrap();
        let layout = SaddleLayout::from_problem(&problem);
        let config = PlannerConfig::theorem_defaults(&layout, 1, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(k);
        let lambda = random_lambda(&mut rng, &layout);
        let theta = random_theta_in_ball(&mut rng, &inst.core.phi_star(), config.radius);
        let f = &inst.features;
        let a = layout.num_actions;
        let l1 = lambda.l1_norm();
        let mut rho = vec![0.0; layout.num_rows()];
        let mut xi = vec![0.0; problem.dim()];
        for (i, out) in rho.iter_mut().enumerate() {
            let s = layout.row_state(i);
            for (next, &p) in inst.mdp.transition_row(s, i % a).iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let r = inst.mdp.reward(s, i % a);
                *out += p * lambda_component(r, layout.gamma, f.row(s), f.row(next), &theta);
                let est = theta_estimate(f.row(layout.s0), l1, layout.gamma, f.row(s), f.row(next));
                let w = lambda.as_slice()[i] / l1 * p;
                xi.iter_mut().zip(&est).for_each(|(x, e)| *x += w * e);
            }
        }
        let rho_err = max(rho.iter().zip(problem.grad_lambda(&theta)).map(|(x, y)| (x - y).abs()));
        let xi_err = max(xi.iter().zip(problem.grad_theta(&lambda)).map(|(x, y)| (x - y).abs()));
        rho_err.max(xi_err)
    })
    .collect::<Vec<_>>());
    outcome(worst <= 1e-12, format!("max |E[estimate] − gradient| = {worst:.2e} (tol 1e-12)"))
}

fn run_invariants() -> Outcome {
    let inst = instance(10, 3, 0.7, FeatureFamily::ConvexMixture { core: 3, dim: 3 }, 400);
    let layout = SaddleLayout::new(0, inst.core.indices().to_vec(), 3, 0.7).unwrap();
    let mdp = Arc::new(inst.mdp.clone());
    let t = 2000;
    let rows: Vec<(f64, f64, bool)> = (0..10u64)
        .into_par_iter()
        .map(|seed| {
            let config = PlannerConfig::theorem_defaults(&layout, t, seed);
            let mut oracle = GenerativeOracle::new(mdp.clone(), 500 + seed);
            let mut lambda_worst: f64 = 0.0;
            let mut ball_worst: f64 = f64::NEG_INFINITY;
            let out = run_corestomp_observed(&mut oracle, &inst.features, &layout, &config, |step| {
                for l in [step.lambda_half, &step.iterate.lambda] {
                    lambda_worst = lambda_worst.max(l.lambda_gamma_violation(layout.gamma));
                }
                for th in [step.theta_half, &step.iterate.theta[..]] {
                    ball_worst = ball_worst.max(inst.core.core_norm(th) - config.radius);
                }
            })
            .unwrap();
            let expected = 2 * t as u64 * layout.queries_per_sample();
            (lambda_worst, ball_worst, out.report.query_count == expected && oracle.query_count() == expected)
        })
        .collect();
    let lambda = max(rows.iter().map(|r| r.0));
    let ball = rows.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let counts = rows.iter().all(|r| r.2);
    outcome(
        lambda <= 1e-9 && ball <= 1e-9 && counts,
        format!(
            "max Λ_γ violation {lambda:.2e}, max ‖Φ★θ‖₂ − B = {ball:.2e}, query count 2T(1+(1+m)A) = {} on all seeds: {counts}",
            2 * t as u64 * layout.queries_per_sample()
        ),
    )
}

fn gap_decay() -> Outcome {
    let gamma = 0.2;
    let base = random_mdp(&mut ChaCha8Rng::seed_from_u64(1), 10, 2, gamma, Some(3)).unwrap();
    let mdp = scale_rewards(&base, 0.8);
    let (features, core) = bias_only_features(10).unwrap();
    let problem = build_corelp(&mdp, &features, &core, 0).unwrap();
    let layout = SaddleLayout::from_problem(&problem);
    let mdp = Arc::new(mdp);
    let schedule = [500usize, 2000, 8000];
    let mut means = Vec::new();
    let mut lines = Vec::new();
    let mut below = true;
    for &t in &schedule {
        let gaps: Vec<f64> = (0..50u64)
            .into_par_iter()
            .map(|seed| {
                let config = PlannerConfig::theorem_defaults(&layout, t, seed);
                let mut oracle =
                    GenerativeOracle::new(mdp.clone(), 1000 + seed).with_noise(RewardNoise::UniformPm(1.0));
                let out = run_corestomp(&mut oracle, &features, &layout, &config).unwrap();
                duality_gap_exact(&problem, &out.lambda_hat, &out.theta_hat, config.radius).unwrap()
            })
            .collect();
        let (mean, se) = mean_se(&gaps);
        let bound = bounds::mirror_prox_gap_bound(PlannerConfig::theorem_defaults(&layout, t, 0).lipschitz, t);
        below &= mean <= bound + 2.0 * se;
        lines.push(format!("T={t}: {mean:.4}±{se:.4} vs {bound:.3}"));
        means.push(mean);
    }
    let xs: Vec<f64> = schedule.iter().map(|&t| t as f64).collect();
    let slope = loglog_slope(&xs, &means);
    outcome(
        below && (-0.65..=-0.35).contains(&slope),
        format!("{}; slope {slope:.3} (want [−0.65, −0.35])", lines.join(", ")),
    )
}

fn end_to_end() -> Outcome {
    let (s, a, gamma, t) = (5, 2, 0.5, 40_000);
    let losses: Vec<(f64, f64)> = (0..30u64)
        .into_par_iter()
        .map(|seed| {
            let inst = instance(s, a, gamma, FeatureFamily::Tabular, 600 + seed);
            let layout = SaddleLayout::new(0, inst.core.indices().to_vec(), a, gamma).unwrap();
            let v = value_iteration(&inst.mdp, VI_TOL);
            let q = q_star(&inst.mdp, &v);
            let config = PlannerConfig::theorem_defaults(&layout, t, seed);
            let mut oracle = GenerativeOracle::new(Arc::new(inst.mdp.clone()), 700 + seed);
            let out = run_corestomp(&mut oracle, &inst.features, &layout, &config).unwrap();
            let action = sample_action(&oracle, &out.pi_hat, u64::MAX);
            (v[0] - q.get(0, action), v[0] - q.expected(0, &out.pi_hat))
        })
        .collect();
    let sampled: Vec<f64> = losses.iter().map(|l| l.0).collect();
    let (mean, se) = mean_se(&sampled);
    let expected = losses.iter().map(|l| l.1).sum::<f64>() / losses.len() as f64;
    let bound = bounds::corestomp_bound(0.0, gamma, a, s, t);
    outcome(
        mean <= bound + 2.0 * se,
        format!("mean loss {mean:.4}±{se:.4} (expected under π̂ {expected:.4}) vs bound {bound:.4}"),
    )
}

fn distance_generating() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst_strong = f64::INFINITY;
    let mut worst_vertex: f64 = 0.0;
    let mut worst_identity: f64 = 0.0;
    for k in 0..1000 {
        let m = 1 + k % 6;
        let a = 1 + k % 4;
        let gamma = [0.05, 0.3, 0.6, 0.9][k % 4];
        let layout = SaddleLayout::new(0, (0..m).collect(), a, gamma).unwrap();
        let l1 = random_lambda(&mut rng, &layout);
        let l2 = random_lambda(&mut rng, &layout);
        let report = distance_gen_checks(&layout, &l1, &l2).unwrap();
        worst_strong = worst_strong.min(report.divergence - report.half_l1_sq);

        let mut vertex = vec![0.0; layout.num_rows()];
        vertex[rng.random_range(0..a)] = 1.0;
        vertex[a + rng.random_range(0..m * a)] = layout.core_mass();
        let vertex = DualVector::new(vertex, a).unwrap();
        let d = distance_gen_checks(&layout, &vertex, &layout.initial_lambda()).unwrap().divergence;
        let target = layout.ell() / (1.0 - gamma).powi(2);
        worst_vertex = worst_vertex.max((d - target).abs());

        let phi_star = nalgebra::DMatrix::from_fn(m, 2, |_, _| rng.random_range(-1.0..1.0));
        let config = PlannerConfig::theorem_defaults(&layout, 100, 0);
        let theta = random_theta_in_ball(&mut rng, &phi_star, config.radius);
        let (t2, lam2) = prox_update(&config, &layout, &phi_star, &theta, &l1, &[0.0; 2], &vec![0.0; layout.num_rows()]);
        let dt = max(t2.iter().zip(&theta).map(|(x, y)| (x - y).abs()));
        let dl = max(lam2.as_slice().iter().zip(l1.as_slice()).map(|(x, y)| (x - y).abs()));
        worst_identity = worst_identity.max(dt).max(dl);
    }
    outcome(
        worst_strong >= -1e-10 && worst_vertex <= 1e-9 && worst_identity <= 1e-12,
        format!(
            "min D_Λ − ‖·‖₁²/2 = {worst_strong:.2e}; max |D_Λ(vertex, λ0) − ℓ/(1−γ)²| = {worst_vertex:.2e}; max prox drift = {worst_identity:.2e}"
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("oracle equivalence", Duration::from_secs(30), oracle_equivalence),
        ("CoreLP exact regime", Duration::from_secs(60), exact_regime),
        ("CoreLP misspecified regime", Duration::from_secs(120), misspecified_regime),
        ("LRALP and J* gap", Duration::from_secs(120), lralp_and_j_star),
        ("estimator unbiasedness", Duration::from_secs(10), unbiasedness),
        ("planner invariants", Duration::from_secs(60), run_invariants),
        ("duality gap decay", Duration::from_secs(600), gap_decay),
        ("end-to-end action loss", Duration::from_secs(1200), end_to_end),
        ("distance-generating function", Duration::from_secs(10), distance_generating),
    ];
    let mut failures = 0;
    for (k, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = run();
        let elapsed = start.elapsed();
        let passed = result.passed && elapsed <= *budget;
        failures += usize::from(!passed);
        println!(
            "[{}] {}. {name}: {} [{:.1}s of {}s]",
            if passed { "PASS" } else { "FAIL" },
            k + 1,
            result.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
