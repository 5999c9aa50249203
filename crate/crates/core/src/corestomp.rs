//! Stochastic mirror-prox on the core-state saddle point.
//!
//! The planner works on `f(λ, θ) = λᵀWr + φ0ᵀθ + λᵀBθ` over
//! `Λ_γ × {θ : ‖Φ★θ‖₂ ≤ B}`. Gradients are estimated from simulator calls
//! at `s0` and the core states only, and features are read only for `s0`,
//! the core states and sampled next states. The λ-player uses a scaled
//! entropic geometry, the θ-player a Euclidean one.
//!
//! The exact evaluators at the bottom of the module ([`exact_gradients`],
//! [`duality_gap_exact`]) take a [`CoreLpProblem`] and are meant for testing
//! the planner against the tabular model.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corelp::{CoreLpProblem, DualVector};
use crate::features::FeatureMap;
use crate::mdp::dot;
use crate::simulator::{inverse_cdf, GenerativeOracle, SimError, Simulator};

/// Default numerical floor on λ entries.
pub const LAMBDA_FLOOR: f64 = 1e-300;
/// ChaCha stream of the planner's own generator, kept apart from stream 0
/// used by a root [`GenerativeOracle`] with the same seed.
pub const PLANNER_STREAM: u64 = u64::MAX;
/// Residual above which a gradient is reported as outside the row space of `Φ★`.
pub const ROW_SPACE_TOL: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlannerError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid dimensions: {0}")]
    Dimension(String),
    #[error("vector outside the row space of the core features (residual {0:.3e})")]
    OutsideRowSpace(f64),
    #[error("domain violation: {0}")]
    Domain(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Read access to feature rows.
///
/// The planner is generic over this so that callers can restrict or audit
/// which rows it reads.
pub trait FeatureRows {
    fn dim(&self) -> usize;
    fn row(&self, s: usize) -> &[f64];
}

impl FeatureRows for FeatureMap {
    fn dim(&self) -> usize {
        FeatureMap::dim(self)
    }

    fn row(&self, s: usize) -> &[f64] {
        FeatureMap::row(self, s)
    }
}

/// The planning state, core states, action count and discount: everything the
/// planner knows about the problem besides simulator and feature access.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddleLayout {
    pub s0: usize,
    pub core: Vec<usize>,
    pub num_actions: usize,
    pub gamma: f64,
}

impl SaddleLayout {
    pub fn new(s0: usize, core: Vec<usize>, num_actions: usize, gamma: f64) -> Result<Self, PlannerError> {
        if core.is_empty() {
            return Err(PlannerError::Dimension("empty core set".into()));
        }
        if num_actions == 0 {
            return Err(PlannerError::Dimension("no actions".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(PlannerError::Config(format!("discount {gamma} outside [0, 1)")));
        }
        Ok(SaddleLayout { s0, core, num_actions, gamma })
    }

    pub fn from_problem(problem: &CoreLpProblem) -> Self {
        SaddleLayout {
            s0: problem.s0(),
            core: problem.core().indices().to_vec(),
            num_actions: problem.num_actions(),
            gamma: problem.gamma(),
        }
    }

    pub fn num_core(&self) -> usize {
        self.core.len()
    }

    /// `(1+m)A`.
    pub fn num_rows(&self) -> usize {
        (1 + self.core.len()) * self.num_actions
    }

    pub fn row_state(&self, i: usize) -> usize {
        match i / self.num_actions {
            0 => self.s0,
            k => self.core[k - 1],
        }
    }

    /// Simulator calls per gradient pair: `1 + (1+m)A`.
    pub fn queries_per_sample(&self) -> u64 {
        1 + self.num_rows() as u64
    }

    /// `ℓ = ln A + γ ln m`.
    pub fn ell(&self) -> f64 {
        (self.num_actions as f64).ln() + self.gamma * (self.core.len() as f64).ln()
    }

    /// Mass of the core block in `Λ_γ`.
    pub fn core_mass(&self) -> f64 {
        self.gamma / (1.0 - self.gamma)
    }

    /// The initializer: `1/A` on the `s0` block, `γ/((1−γ)mA)` on the core block.
    pub fn initial_lambda(&self) -> DualVector {
        let a = self.num_actions;
        let per_core = self.core_mass() / (self.core.len() * a) as f64;
        let mut values = vec![1.0 / a as f64; a];
        values.resize(self.num_rows(), per_core.max(LAMBDA_FLOOR));
        DualVector::new(values, a).expect("layout sizes are consistent")
    }
}

/// How the prox step scales the two gradient blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepGeometry {
    /// `θ − ηξ` and `exp(log λ + ηρ)`, both with the raw step `η`.
    #[default]
    Literal,
    /// The prox map of the weighted composite distance
    /// `(1−γ)²h_γ(λ)/(2ℓ) + ‖Φ★θ‖₂²/(2B²)`: the λ block steps with
    /// `η·2ℓ/(1−γ)` and the θ block with `η·B²(Φ★ᵀΦ★)⁺`.
    Composite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig {
    /// Iteration count `T`.
    pub iterations: usize,
    /// Radius `B` of the primal ball `‖Φ★θ‖₂ ≤ B`.
    pub radius: f64,
    /// Constant `C` bounding gradient magnitude and variance.
    pub lipschitz: f64,
    /// Step size `η`.
    pub eta: f64,
    /// Seed of the planner's own stream, used to draw cells from `λ/‖λ‖₁`.
    pub seed: u64,
    pub lambda_floor: f64,
    pub geometry: StepGeometry,
    ell: f64,
}

impl PlannerConfig {
    /// `B = (9/8)√m/(1−γ)`, `C = (9/4)√(m(1+2ℓ))/(1−γ)²`, `η = √(2/(7T))/C`.
    pub fn theorem_defaults(layout: &SaddleLayout, iterations: usize, seed: u64) -> Self {
        let m = layout.num_core() as f64;
        let h = 1.0 - layout.gamma;
        let ell = layout.ell();
        let lipschitz = 2.25 * (m * (1.0 + 2.0 * ell)).sqrt() / (h * h);
        PlannerConfig {
            iterations,
            radius: 1.125 * m.sqrt() / h,
            lipschitz,
            eta: (2.0 / (7.0 * iterations.max(1) as f64)).sqrt() / lipschitz,
            seed,
            lambda_floor: LAMBDA_FLOOR,
            geometry: StepGeometry::Literal,
            ell,
        }
    }

    /// `ℓ = ln A + γ ln m` for the layout this configuration was built from.
    pub fn ell(&self) -> f64 {
        self.ell
    }

    pub fn validate(&self) -> Result<(), PlannerError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(PlannerError::Config(format!("{name} must be positive, got {v}")))
            }
        };
        if self.iterations == 0 {
            return Err(PlannerError::Config("at least one iteration is required".into()));
        }
        positive("radius", self.radius)?;
        positive("lipschitz", self.lipschitz)?;
        positive("eta", self.eta)?;
        positive("lambda_floor", self.lambda_floor)
    }
}

/// Planner state after `tau` iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddleIterate {
    pub theta: Vec<f64>,
    pub lambda: DualVector,
    /// Sum of the post-update `λ_τ`.
    pub lambda_sum: Vec<f64>,
    /// Sum of the extrapolated `θ'_τ`.
    pub theta_half_sum: Vec<f64>,
    pub tau: usize,
}

/// One paired gradient estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSample {
    /// Estimate of `f_λ`.
    pub rho: Vec<f64>,
    /// Estimate of `f_θ`.
    pub xi: Vec<f64>,
    pub queries_used: u64,
}

/// Passed to the observer after each iteration.
#[derive(Debug)]
pub struct Step<'a> {
    pub theta_half: &'a [f64],
    pub lambda_half: &'a DualVector,
    pub iterate: &'a SaddleIterate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerReport {
    pub iterations: usize,
    pub query_count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerOutput {
    /// Average of the post-update `λ_τ`.
    pub lambda_hat: DualVector,
    /// Average of the extrapolated `θ'_τ`, kept for duality-gap evaluation.
    pub theta_hat: Vec<f64>,
    /// `π̂(a) = λ̂_{s0 a}`.
    pub pi_hat: Vec<f64>,
    pub report: PlannerReport,
}

/// `f_λ(θ) = Wr + Bθ` and `f_θ(λ) = φ0 + Bᵀλ` from the tabular model.
pub fn exact_gradients(problem: &CoreLpProblem, lambda: &DualVector, theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    (problem.grad_lambda(theta), problem.grad_theta(lambda))
}

/// `Δφ(s, s')ᵀθ = (γφ_{s'} − φ_s)ᵀθ`.
#[inline]
fn delta_dot(gamma: f64, phi_s: &[f64], phi_next: &[f64], theta: &[f64]) -> f64 {
    phi_s
        .iter()
        .zip(phi_next)
        .zip(theta)
        .map(|((p, q), t)| (gamma * q - p) * t)
        .sum()
}

/// One component of the λ-gradient estimate: `r̂ + (γφ_{s'} − φ_s)ᵀθ`.
pub fn lambda_component(r_hat: f64, gamma: f64, phi_s: &[f64], phi_next: &[f64], theta: &[f64]) -> f64 {
    r_hat + delta_dot(gamma, phi_s, phi_next, theta)
}

/// The θ-gradient estimate for one sampled transition:
/// `φ0 + ‖λ‖₁(γφ_{s'} − φ_s)`.
pub fn theta_estimate(phi0: &[f64], l1: f64, gamma: f64, phi_s: &[f64], phi_next: &[f64]) -> Vec<f64> {
    phi0.iter()
        .zip(phi_s.iter().zip(phi_next))
        .map(|(z, (p, q))| z + l1 * (gamma * q - p))
        .collect()
}

/// Estimate of `f_λ(θ)`: one simulator call per row of `S₊ × A`.
pub fn sample_grad_lambda<S: Simulator, F: FeatureRows>(
    sim: &mut S,
    features: &F,
    layout: &SaddleLayout,
    theta: &[f64],
) -> Result<Vec<f64>, PlannerError> {
    let a_count = layout.num_actions;
    let mut out = Vec::with_capacity(layout.num_rows());
    for i in 0..layout.num_rows() {
        let s = layout.row_state(i);
        let (next, r_hat) = sim.simulate(s, i % a_count)?;
        out.push(lambda_component(r_hat, layout.gamma, features.row(s), features.row(next), theta));
    }
    Ok(out)
}

/// Estimate of `f_θ(λ)`: a cell `(s, a)` drawn from `λ/‖λ‖₁` with `rng`,
/// then one simulator call.
pub fn sample_grad_theta<S: Simulator, F: FeatureRows, R: Rng>(
    sim: &mut S,
    features: &F,
    layout: &SaddleLayout,
    lambda: &DualVector,
    rng: &mut R,
) -> Result<Vec<f64>, PlannerError> {
    if lambda.len() != layout.num_rows() {
        return Err(PlannerError::Dimension("dual vector length".into()));
    }
    let l1 = lambda.l1_norm();
    let i = inverse_cdf(lambda.as_slice(), rng.random::<f64>() * l1);
    let s = layout.row_state(i);
    let (next, _) = sim.simulate(s, i % layout.num_actions)?;
    Ok(theta_estimate(
        features.row(layout.s0),
        l1,
        layout.gamma,
        features.row(s),
        features.row(next),
    ))
}

/// Draws `ξ` then `ρ`, using `1 + (1+m)A` simulator calls.
pub fn sample_gradients<S: Simulator, F: FeatureRows, R: Rng>(
    sim: &mut S,
    features: &F,
    layout: &SaddleLayout,
    lambda: &DualVector,
    theta: &[f64],
    rng: &mut R,
) -> Result<GradientSample, PlannerError> {
    let before = sim.query_count();
    let xi = sample_grad_theta(sim, features, layout, lambda, rng)?;
    let rho = sample_grad_lambda(sim, features, layout, theta)?;
    Ok(GradientSample {
        rho,
        xi,
        queries_used: sim.query_count() - before,
    })
}

/// `Φ★` read row by row through `features`.
pub fn core_matrix<F: FeatureRows>(features: &F, layout: &SaddleLayout) -> DMatrix<f64> {
    let d = features.dim();
    DMatrix::from_fn(layout.num_core(), d, |k, j| features.row(layout.core[k])[j])
}

fn core_norm(phi_star: &DMatrix<f64>, theta: &[f64]) -> f64 {
    (phi_star * DVector::from_column_slice(theta)).norm()
}

/// Entropic step on one block: `exp(log λ + ηρ)` rescaled to `mass`.
fn entropic_block(lambda: &[f64], rho: &[f64], eta: f64, mass: f64, floor: f64, out: &mut Vec<f64>) {
    if mass <= 0.0 {
        out.extend(std::iter::repeat_n(floor, lambda.len()));
        return;
    }
    let logs: Vec<f64> = lambda
        .iter()
        .zip(rho)
        .map(|(l, r)| l.max(floor).ln() + eta * r)
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|v| (v - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    out.extend(weights.iter().map(|w| (mass * w / total).max(floor)));
}

/// `B²(Φ★ᵀΦ★)⁺` when the composite geometry is selected.
fn preconditioner(config: &PlannerConfig, phi_star: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    match config.geometry {
        StepGeometry::Literal => None,
        StepGeometry::Composite => {
            let gram = phi_star.transpose() * phi_star;
            let pinv = gram
                .pseudo_inverse(1e-12)
                .expect("pseudo-inverse tolerance is non-negative");
            Some(pinv * (config.radius * config.radius))
        }
    }
}

/// One prox step from `(θ, λ)` along `(−ξ, ρ)`.
///
/// `θ − ηξ` is scaled back into the ball `‖Φ★θ‖₂ ≤ B`; `λ` takes an
/// entropic step and each block is renormalized to its `Λ_γ` mass.
/// With [`StepGeometry::Composite`] the two steps are rescaled first.
pub fn prox_update(
    config: &PlannerConfig,
    layout: &SaddleLayout,
    phi_star: &DMatrix<f64>,
    theta: &[f64],
    lambda: &DualVector,
    xi: &[f64],
    rho: &[f64],
) -> (Vec<f64>, DualVector) {
    let precond = preconditioner(config, phi_star);
    prox_step(config, layout, phi_star, precond.as_ref(), theta, lambda, xi, rho)
}

#[allow(clippy::too_many_arguments)]
fn prox_step(
    config: &PlannerConfig,
    layout: &SaddleLayout,
    phi_star: &DMatrix<f64>,
    precond: Option<&DMatrix<f64>>,
    theta: &[f64],
    lambda: &DualVector,
    xi: &[f64],
    rho: &[f64],
) -> (Vec<f64>, DualVector) {
    let eta = config.eta;
    let direction: Vec<f64> = match precond {
        None => xi.to_vec(),
        Some(p) => (p * DVector::from_column_slice(xi)).iter().copied().collect(),
    };
    let mut next_theta: Vec<f64> = theta.iter().zip(&direction).map(|(t, x)| t - eta * x).collect();
    let scale = (core_norm(phi_star, &next_theta) / config.radius).max(1.0);
    if scale > 1.0 {
        next_theta.iter_mut().for_each(|t| *t /= scale);
    }
    let lambda_eta = match config.geometry {
        StepGeometry::Literal => eta,
        StepGeometry::Composite => eta * 2.0 * config.ell / (1.0 - layout.gamma),
    };
    let a = layout.num_actions;
    let mut values = Vec::with_capacity(lambda.len());
    entropic_block(lambda.pi_block(), &rho[..a], lambda_eta, 1.0, config.lambda_floor, &mut values);
    entropic_block(
        lambda.core_block(),
        &rho[a..],
        lambda_eta,
        layout.core_mass(),
        config.lambda_floor,
        &mut values,
    );
    (next_theta, DualVector::new(values, a).expect("block sizes preserved"))
}

/// Runs the planner for `config.iterations` steps.
pub fn run_corestomp<S: Simulator, F: FeatureRows>(
    sim: &mut S,
    features: &F,
    layout: &SaddleLayout,
    config: &PlannerConfig,
) -> Result<PlannerOutput, PlannerError> {
    run_corestomp_observed(sim, features, layout, config, |_| {})
}

/// [`run_corestomp`] with a callback invoked after every iteration.
pub fn run_corestomp_observed<S, F, O>(
    sim: &mut S,
    features: &F,
    layout: &SaddleLayout,
    config: &PlannerConfig,
    mut observer: O,
) -> Result<PlannerOutput, PlannerError>
where
    S: Simulator,
    F: FeatureRows,
    O: FnMut(&Step<'_>),
{
    config.validate()?;
    if sim.num_actions() != layout.num_actions {
        return Err(PlannerError::Dimension(format!(
            "simulator has {} actions, layout {}",
            sim.num_actions(),
            layout.num_actions
        )));
    }
    let d = features.dim();
    let phi_star = core_matrix(features, layout);
    let precond = preconditioner(config, &phi_star);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(PLANNER_STREAM);
    let start_queries = sim.query_count();
    let mut it = SaddleIterate {
        theta: vec![0.0; d],
        lambda: layout.initial_lambda(),
        lambda_sum: vec![0.0; layout.num_rows()],
        theta_half_sum: vec![0.0; d],
        tau: 0,
    };
    for _ in 0..config.iterations {
        let g = sample_gradients(sim, features, layout, &it.lambda, &it.theta, &mut rng)?;
        let (theta_half, lambda_half) = prox_step(
            config,
            layout,
            &phi_star,
            precond.as_ref(),
            &it.theta,
            &it.lambda,
            &g.xi,
            &g.rho,
        );
        let g = sample_gradients(sim, features, layout, &lambda_half, &theta_half, &mut rng)?;
        let (theta, lambda) = prox_step(
            config,
            layout,
            &phi_star,
            precond.as_ref(),
            &it.theta,
            &it.lambda,
            &g.xi,
            &g.rho,
        );
        it.theta = theta;
        it.lambda = lambda;
        it.tau += 1;
        for (s, l) in it.lambda_sum.iter_mut().zip(it.lambda.as_slice()) {
            *s += l;
        }
        for (s, t) in it.theta_half_sum.iter_mut().zip(&theta_half) {
            *s += t;
        }
        observer(&Step {
            theta_half: &theta_half,
            lambda_half: &lambda_half,
            iterate: &it,
        });
    }
    let t = config.iterations as f64;
    let lambda_hat = DualVector::new(it.lambda_sum.iter().map(|v| v / t).collect(), layout.num_actions)
        .expect("layout sizes are consistent");
    let block_sum: f64 = lambda_hat.pi_block().iter().sum();
    let pi_hat = lambda_hat.pi_block().iter().map(|v| v / block_sum).collect();
    Ok(PlannerOutput {
        theta_hat: it.theta_half_sum.iter().map(|v| v / t).collect(),
        lambda_hat,
        pi_hat,
        report: PlannerReport {
            iterations: config.iterations,
            query_count: sim.query_count() - start_queries,
        },
    })
}

/// Draws `a ~ π̂` from a fork of `oracle`, leaving the oracle itself untouched.
pub fn sample_action(oracle: &GenerativeOracle, pi_hat: &[f64], stream_id: u64) -> usize {
    oracle.fork(stream_id).sample_categorical(pi_hat)
}

/// Lowest-index most likely action of `π̂`.
pub fn argmax_action(pi_hat: &[f64]) -> usize {
    let best = pi_hat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    pi_hat.iter().position(|&p| p == best).unwrap_or(0)
}

/// `‖g‖_* = min { ‖u‖₂ : Φ★ᵀu = g }`, via the pseudo-inverse.
pub fn dual_norm(phi_star: &DMatrix<f64>, g: &[f64]) -> Result<f64, PlannerError> {
    let g = DVector::from_column_slice(g);
    let t = phi_star.transpose();
    let svd = t.clone().svd(true, true);
    let cutoff = 1e-12 * svd.singular_values.max().max(1.0);
    let u = svd
        .solve(&g, cutoff)
        .map_err(|e| PlannerError::Domain(e.to_string()))?;
    let residual = (&t * &u - &g).amax();
    if residual > ROW_SPACE_TOL {
        return Err(PlannerError::OutsideRowSpace(residual));
    }
    Ok(u.norm())
}

/// The `B`-bounded duality gap
/// `max_{λ ∈ Λ_γ} f(λ, θ̂) − inf_{‖Φ★θ‖₂ ≤ B} f(λ̂, θ)`, in closed form.
///
/// The max sits at a vertex: all `s0` mass on the best `s0` cell and all
/// core mass on the best core cell. The inf is `f(λ̂, 0) − B‖f_θ(λ̂)‖_*`.
pub fn duality_gap_exact(
    problem: &CoreLpProblem,
    lambda_hat: &DualVector,
    theta_hat: &[f64],
    radius: f64,
) -> Result<f64, PlannerError> {
    if lambda_hat.len() != problem.num_rows() || theta_hat.len() != problem.dim() {
        return Err(PlannerError::Dimension("iterate does not match the problem".into()));
    }
    let a = problem.num_actions();
    let gamma = problem.gamma();
    let c = problem.grad_lambda(theta_hat);
    let best = |xs: &[f64]| xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut upper = best(&c[..a]) + dot(problem.phi0(), theta_hat);
    if gamma > 0.0 {
        upper += gamma / (1.0 - gamma) * best(&c[a..]);
    }
    let g = problem.grad_theta(lambda_hat);
    let at_zero = dot(lambda_hat.as_slice(), problem.wr());
    let lower = at_zero - radius * dual_norm(&problem.core().phi_star(), &g)?;
    Ok(upper - lower)
}

/// Divergence and diameter quantities for the λ geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceReport {
    /// `D_Λ(λ1, λ2)` for `h_γ(λ) = h((1−γ)λ)/(1−γ)²`.
    pub divergence: f64,
    /// `‖λ1 − λ2‖₁² / 2`.
    pub half_l1_sq: f64,
    /// `Ω_Λ = √(2ℓ)/(1−γ)`.
    pub omega_lambda: f64,
    /// `D_Λ(λ1, λ0) / Ω_Λ²` against the planner's initializer; at most 1/2.
    pub normalized_from_start: f64,
}

fn bregman(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(&a, &b)| if a > 0.0 { a * (a / b).ln() - a + b } else { b })
        .sum()
}

fn scaled_divergence(l1: &[f64], l2: &[f64], gamma: f64) -> f64 {
    let h = 1.0 - gamma;
    let x: Vec<f64> = l1.iter().map(|v| h * v).collect();
    let y: Vec<f64> = l2.iter().map(|v| h * v).collect();
    bregman(&x, &y) / (h * h)
}

/// Checks the λ-geometry identities on a pair of points in `Λ_γ`.
///
/// `lambda1` may have zero entries; `lambda2` must be strictly positive.
pub fn distance_gen_checks(
    layout: &SaddleLayout,
    lambda1: &DualVector,
    lambda2: &DualVector,
) -> Result<DivergenceReport, PlannerError> {
    const MEMBERSHIP_TOL: f64 = 1e-9;
    for (name, l) in [("λ1", lambda1), ("λ2", lambda2)] {
        if l.len() != layout.num_rows() {
            return Err(PlannerError::Dimension(format!("{name} length")));
        }
        let v = l.lambda_gamma_violation(layout.gamma);
        if v > MEMBERSHIP_TOL {
            return Err(PlannerError::Domain(format!("{name} is outside Λ_γ by {v:e}")));
        }
    }
    if lambda2.as_slice().iter().any(|&v| v <= 0.0) {
        return Err(PlannerError::Domain("λ2 must be strictly positive".into()));
    }
    let gamma = layout.gamma;
    let diff: f64 = lambda1
        .as_slice()
        .iter()
        .zip(lambda2.as_slice())
        .map(|(a, b)| (a - b).abs())
        .sum();
    let omega_lambda = (2.0 * layout.ell()).sqrt() / (1.0 - gamma);
    let from_start = scaled_divergence(lambda1.as_slice(), layout.initial_lambda().as_slice(), gamma);
    Ok(DivergenceReport {
        divergence: scaled_divergence(lambda1.as_slice(), lambda2.as_slice(), gamma),
        half_l1_sq: diff * diff / 2.0,
        omega_lambda,
        normalized_from_start: if omega_lambda > 0.0 {
            from_start / (omega_lambda * omega_lambda)
        } else {
            0.0
        },
    })
}

/// Squared diameter of the joint domain measured from `(0, λ0)` under the
/// normalized composite distance: `2(D_Λ(λ, λ0)/Ω_Λ² + ‖Φ★θ‖₂²/(2B²))`.
/// It never exceeds 2 on the feasible set.
pub fn composite_radius_sq(
    layout: &SaddleLayout,
    phi_star: &DMatrix<f64>,
    radius: f64,
    lambda: &DualVector,
    theta: &[f64],
) -> Result<f64, PlannerError> {
    let report = distance_gen_checks(layout, lambda, &layout.initial_lambda())?;
    let n = core_norm(phi_star, theta);
    Ok(2.0 * (report.normalized_from_start + n * n / (2.0 * radius * radius)))
}
