//! Runs the configured planner over every trial and checks the bounds.

use std::sync::Arc;
use std::time::Instant;

use anyhow::{Context, Result};
use coreplan::bounds;
use coreplan::corelp::{build_corelp, extract_pi_dagger, solve_corelp_exact, solve_lralp};
use coreplan::corestomp::{
    argmax_action, duality_gap_exact, run_corestomp, sample_action, PlannerConfig, SaddleLayout, StepGeometry,
};
use coreplan::features::epsilon_approx;
use coreplan::generate::Instance;
use coreplan::mdp::{q_star, value_iteration, ActionValues, ValueFunction};
use coreplan::simulator::{GenerativeOracle, RewardNoise};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ActionRule, ExperimentConfig, Geometry, Planner};
use crate::stats::{loglog_slope, mean_se};

const VI_TOL: f64 = 1e-11;
/// Slack on the deterministic inequalities.
const EXACT_SLACK: f64 = 1e-5;
/// Slack on per-run identities of the stochastic planner.
const RUN_SLACK: f64 = 1e-9;
/// Oracle stream used for the final action draw.
const ACTION_STREAM: u64 = 0xac7;
/// Mixed into trial seeds so oracle and planner generators never coincide.
const ORACLE_SALT: u64 = 0x9e37_79b9_7f4a_7c15;
const SLOPE_RANGE: (f64, f64) = (-0.65, -0.35);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSummary {
    pub num_states: usize,
    pub num_actions: usize,
    pub dim: usize,
    pub num_core: usize,
    pub gamma: f64,
    pub eps_approx: f64,
    pub v_star: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub s0: usize,
    /// Iteration count; `None` for the exact planners.
    pub iterations: Option<usize>,
    /// `V†` for `corelp-exact`, the relaxed ALP value for `lralp`, `f(λ̂, θ̂)` for `corestomp`.
    pub value: Option<f64>,
    /// `v*(s0) − q*(s0, a)` for the reported action; `|value − v*(s0)|` for `lralp`.
    pub loss: Option<f64>,
    /// `v*(s0) − Σ_a π(a) q*(s0, a)`.
    pub expected_loss: Option<f64>,
    pub gap: Option<f64>,
    pub pi: Vec<f64>,
    pub action: Option<usize>,
    /// CoreLP action bound `20γε/(1−γ)`, or the relaxed ALP bound for `lralp`.
    pub bound_thm2: f64,
    pub bound_thm3: Option<f64>,
    pub bound_lemma11: Option<f64>,
    pub queries: u64,
    pub wall_ms: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub iterations: usize,
    pub trials: usize,
    pub mean_gap: f64,
    pub se_gap: f64,
    pub mean_loss: f64,
    pub se_loss: f64,
    pub mean_expected_loss: f64,
    pub bound_thm3: f64,
    pub bound_lemma11: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// Hard checks set the exit code; soft ones only flag.
    pub hard: bool,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub instance: InstanceSummary,
    pub trials: Vec<TrialRecord>,
    pub aggregates: Vec<Aggregate>,
    /// Least-squares log-log slope of mean gap against `T`, when at least two
    /// distinct `T` have positive mean gap.
    pub gap_slope: Option<f64>,
    pub checks: Vec<Check>,
}

impl RunReport {
    pub fn hard_failures(&self) -> usize {
        self.checks.iter().filter(|c| c.hard && !c.passed).count()
    }
}

struct Oracles {
    instance: Instance,
    mdp: Arc<coreplan::Mdp>,
    v_star: ValueFunction,
    q: ActionValues,
    eps: f64,
}

fn blank_record(trial: usize, seed: u64, s0: usize, iterations: Option<usize>) -> TrialRecord {
    TrialRecord {
        trial,
        seed,
        s0,
        iterations,
        value: None,
        loss: None,
        expected_loss: None,
        gap: None,
        pi: Vec::new(),
        action: None,
        bound_thm2: 0.0,
        bound_thm3: None,
        bound_lemma11: None,
        queries: 0,
        wall_ms: 0.0,
        error: None,
    }
}

fn corelp_trial(o: &Oracles, rec: &mut TrialRecord) -> Result<()> {
    let s0 = rec.s0;
    let gamma = o.instance.mdp.gamma();
    let problem = build_corelp(&o.instance.mdp, &o.instance.features, &o.instance.core, s0)?;
    let (value, lambda) = solve_corelp_exact(&problem)?;
    let pi = extract_pi_dagger(&lambda)?;
    let action = argmax_action(&pi);
    rec.value = Some(value);
    rec.loss = Some(o.v_star[s0] - o.q.get(s0, action));
    rec.expected_loss = Some(o.v_star[s0] - o.q.expected(s0, &pi));
    rec.action = Some(action);
    rec.pi = pi;
    rec.bound_thm2 = bounds::corelp_action_bound(o.eps, gamma);
    Ok(())
}

fn lralp_trial(o: &Oracles, rec: &mut TrialRecord) -> Result<()> {
    let s0 = rec.s0;
    let mut mu = vec![0.0; o.instance.mdp.num_states()];
    mu[s0] = 1.0;
    let (value, _) = solve_lralp(&o.instance.mdp, &o.instance.features, &o.instance.core, &mu)?;
    rec.value = Some(value);
    rec.loss = Some((value - o.v_star[s0]).abs());
    rec.bound_thm2 = bounds::lralp_bound(o.eps, o.instance.mdp.gamma(), 1.0);
    Ok(())
}

fn corestomp_trial(o: &Oracles, config: &ExperimentConfig, rec: &mut TrialRecord) -> Result<()> {
    let s0 = rec.s0;
    let t = rec.iterations.expect("corestomp trials carry T");
    let inst = &o.instance;
    let gamma = inst.mdp.gamma();
    let problem = build_corelp(&inst.mdp, &inst.features, &inst.core, s0)?;
    let layout = SaddleLayout::new(s0, inst.core.indices().to_vec(), inst.mdp.num_actions(), gamma)?;
    let mut planner = PlannerConfig::theorem_defaults(&layout, t, rec.seed);
    planner.geometry = match config.geometry {
        Geometry::Literal => StepGeometry::Literal,
        Geometry::Composite => StepGeometry::Composite,
    };
    let noise = if config.reward_noise > 0.0 {
        RewardNoise::UniformPm(config.reward_noise)
    } else {
        RewardNoise::None
    };
    let mut oracle = GenerativeOracle::new(Arc::clone(&o.mdp), rec.seed ^ ORACLE_SALT).with_noise(noise);
    let out = run_corestomp(&mut oracle, &inst.features, &layout, &planner)?;
    let gap = duality_gap_exact(&problem, &out.lambda_hat, &out.theta_hat, planner.radius)?;
    let action = match config.action {
        ActionRule::Sample => sample_action(&oracle, &out.pi_hat, ACTION_STREAM),
        ActionRule::Argmax => argmax_action(&out.pi_hat),
    };
    let f_hat = coreplan::corelp::saddle_objective(&problem, &out.lambda_hat, &out.theta_hat);
    let lambda_violation = out.lambda_hat.lambda_gamma_violation(gamma);
    if lambda_violation > RUN_SLACK {
        anyhow::bail!("averaged λ leaves Λ_γ by {lambda_violation:e}");
    }
    rec.value = Some(f_hat);
    rec.loss = Some(o.v_star[s0] - o.q.get(s0, action));
    rec.expected_loss = Some(o.v_star[s0] - o.q.expected(s0, &out.pi_hat));
    rec.gap = Some(gap);
    rec.action = Some(action);
    rec.pi = out.pi_hat;
    rec.queries = out.report.query_count;
    rec.bound_thm2 = bounds::corelp_action_bound(o.eps, gamma);
    rec.bound_thm3 = Some(bounds::corestomp_bound(o.eps, gamma, layout.num_actions, layout.num_core(), t));
    rec.bound_lemma11 = Some(bounds::mirror_prox_gap_bound(planner.lipschitz, t));
    Ok(())
}

/// Runs every trial of `config`, on `threads` worker threads when given.
pub fn run_experiment(config: &ExperimentConfig, threads: Option<usize>) -> Result<RunReport> {
    config.validate()?;
    let instance = config.instance().context("building the instance")?;
    let v_star = value_iteration(&instance.mdp, VI_TOL);
    let q = q_star(&instance.mdp, &v_star);
    let (eps, _) = epsilon_approx(&instance.features, &v_star)?;
    let oracles = Oracles {
        mdp: Arc::new(instance.mdp.clone()),
        instance,
        v_star,
        q,
        eps,
    };
    let n = oracles.instance.mdp.num_states();

    let mut jobs = Vec::new();
    match config.planner {
        Planner::Corestomp => {
            for &t in &config.schedule {
                for k in 0..config.trials {
                    jobs.push(blank_record(k, config.seed.wrapping_add(k as u64), config.s0, Some(t)));
                }
            }
        }
        // The exact planners are deterministic; trials sweep the planning state.
        Planner::CorelpExact | Planner::Lralp => {
            for k in 0..config.trials {
                jobs.push(blank_record(k, config.seed.wrapping_add(k as u64), (config.s0 + k) % n, None));
            }
        }
    }

    let run_all = || -> Vec<TrialRecord> {
        jobs.into_par_iter()
            .map(|mut rec| {
                let start = Instant::now();
                let result = match config.planner {
                    Planner::CorelpExact => corelp_trial(&oracles, &mut rec),
                    Planner::Lralp => lralp_trial(&oracles, &mut rec),
                    Planner::Corestomp => corestomp_trial(&oracles, config, &mut rec),
                };
                rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
                if let Err(e) = result {
                    rec.error = Some(format!("{e:#}"));
                }
                rec
            })
            .collect()
    };
    let trials = match threads {
        Some(k) => rayon::ThreadPoolBuilder::new().num_threads(k).build()?.install(run_all),
        None => run_all(),
    };

    let inst = &oracles.instance;
    let summary = InstanceSummary {
        num_states: n,
        num_actions: inst.mdp.num_actions(),
        dim: inst.features.dim(),
        num_core: inst.core.len(),
        gamma: inst.mdp.gamma(),
        eps_approx: eps,
        v_star: oracles.v_star.values.clone(),
    };
    let aggregates = aggregate(&trials, &config.schedule);
    let gap_slope = slope_of(&aggregates);
    let checks = checks(config, &oracles, &trials, &aggregates, gap_slope);
    Ok(RunReport {
        config: config.clone(),
        instance: summary,
        trials,
        aggregates,
        gap_slope,
        checks,
    })
}

fn aggregate(trials: &[TrialRecord], schedule: &[usize]) -> Vec<Aggregate> {
    let mut seen = Vec::new();
    for &t in schedule {
        if seen.contains(&t) {
            continue;
        }
        seen.push(t);
    }
    seen.into_iter()
        .filter_map(|t| {
            let ok: Vec<&TrialRecord> = trials
                .iter()
                .filter(|r| r.iterations == Some(t) && r.error.is_none())
                .collect();
            if ok.is_empty() {
                return None;
            }
            let col = |f: fn(&TrialRecord) -> Option<f64>| ok.iter().filter_map(|r| f(r)).collect::<Vec<f64>>();
            let (mean_gap, se_gap) = mean_se(&col(|r| r.gap));
            let (mean_loss, se_loss) = mean_se(&col(|r| r.loss));
            let (mean_expected_loss, _) = mean_se(&col(|r| r.expected_loss));
            Some(Aggregate {
                iterations: t,
                trials: ok.len(),
                mean_gap,
                se_gap,
                mean_loss,
                se_loss,
                mean_expected_loss,
                bound_thm3: ok[0].bound_thm3.unwrap_or(f64::NAN),
                bound_lemma11: ok[0].bound_lemma11.unwrap_or(f64::NAN),
            })
        })
        .collect()
}

/// Slope of mean gap against `T`, or `None` with fewer than two usable points.
pub fn slope_of(aggregates: &[Aggregate]) -> Option<f64> {
    let points: Vec<(f64, f64)> = aggregates
        .iter()
        .filter(|a| a.mean_gap > 0.0)
        .map(|a| (a.iterations as f64, a.mean_gap))
        .collect();
    if points.len() < 2 {
        return None;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.into_iter().unzip();
    Some(loglog_slope(&xs, &ys))
}

fn check(name: &str, hard: bool, passed: bool, detail: String) -> Check {
    Check {
        name: name.into(),
        hard,
        passed,
        detail,
    }
}

fn checks(
    config: &ExperimentConfig,
    o: &Oracles,
    trials: &[TrialRecord],
    aggregates: &[Aggregate],
    gap_slope: Option<f64>,
) -> Vec<Check> {
    let gamma = o.instance.mdp.gamma();
    let errors: Vec<String> = trials
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| format!("trial {} (T={:?}): {e}", r.trial, r.iterations)))
        .collect();
    let mut out = vec![check(
        "trials completed",
        true,
        errors.is_empty(),
        if errors.is_empty() {
            format!("{} trials", trials.len())
        } else {
            errors.join("; ")
        },
    )];
    let ok = || trials.iter().filter(|r| r.error.is_none());
    let worst = |f: &dyn Fn(&TrialRecord) -> f64| ok().map(f).fold(f64::NEG_INFINITY, f64::max);
    match config.planner {
        Planner::CorelpExact => {
            let value_bound = bounds::corelp_value_bound(o.eps, gamma);
            let v = worst(&|r| (r.value.unwrap_or(f64::NAN) - o.v_star[r.s0]).abs() - value_bound);
            out.push(check("value within 10γε/(1−γ)", true, v <= EXACT_SLACK, format!("worst excess {v:.3e}")));
            let a = worst(&|r| r.expected_loss.unwrap_or(f64::NAN) - r.bound_thm2);
            out.push(check("action loss within 20γε/(1−γ)", true, a <= EXACT_SLACK, format!("worst excess {a:.3e}")));
        }
        Planner::Lralp => {
            let v = worst(&|r| r.loss.unwrap_or(f64::NAN) - r.bound_thm2);
            out.push(check(
                "relaxed ALP within 10‖μ‖₁ε/(1−γ)",
                true,
                v <= EXACT_SLACK,
                format!("worst excess {v:.3e}"),
            ));
        }
        Planner::Corestomp => {
            let per_sample = |r: &TrialRecord| {
                let m = o.instance.core.len() as u64;
                let a = o.instance.mdp.num_actions() as u64;
                2 * r.iterations.unwrap_or(0) as u64 * (1 + (1 + m) * a)
            };
            let bad_counts = ok().filter(|r| r.queries != per_sample(r)).count();
            out.push(check(
                "query count 2T(1+(1+m)A)",
                true,
                bad_counts == 0,
                format!("{bad_counts} mismatched trials"),
            ));
            let neg = worst(&|r| -r.gap.unwrap_or(f64::NAN));
            out.push(check("duality gap non-negative", true, neg <= RUN_SLACK, format!("smallest gap {:.3e}", -neg)));
            let excess = worst(&|r| {
                r.expected_loss.unwrap_or(f64::NAN) - bounds::gap_to_loss_bound(o.eps, gamma, r.gap.unwrap_or(f64::NAN))
            });
            out.push(check(
                "expected loss within 32γε/(1−γ) + gap",
                true,
                excess <= RUN_SLACK,
                format!("worst excess {excess:.3e}"),
            ));
            for a in aggregates {
                out.push(check(
                    &format!("T={} mean gap within 14C/√(3T)", a.iterations),
                    false,
                    a.mean_gap <= a.bound_lemma11 + 2.0 * a.se_gap,
                    format!("{:.4} ± {:.4} vs {:.4}", a.mean_gap, a.se_gap, a.bound_lemma11),
                ));
                out.push(check(
                    &format!("T={} mean loss within the planner bound", a.iterations),
                    false,
                    a.mean_loss <= a.bound_thm3 + 2.0 * a.se_loss,
                    format!("{:.4} ± {:.4} vs {:.4}", a.mean_loss, a.se_loss, a.bound_thm3),
                ));
            }
            if let Some(s) = gap_slope {
                out.push(check(
                    "gap slope in [−0.65, −0.35]",
                    false,
                    (SLOPE_RANGE.0..=SLOPE_RANGE.1).contains(&s),
                    format!("{s:.3}"),
                ));
            }
        }
    }
    out
}
