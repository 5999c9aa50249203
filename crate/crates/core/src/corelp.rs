//! The core-state linear program and its relatives.
//!
//! For a planning state `s0` and core states `S★ = (s_1, …, s_m)`, the
//! augmented list `S₊ = (s0, s_1, …, s_m)` indexes `(1+m)A` rows. Row
//! `(s, a)` of the constraint matrix is `γP_{sa}Φ − φ_s` and the matching
//! objective entry is `r_{sa}`. The program is
//!
//! ```text
//! V† = max { λᵀWr : λ ≥ 0, Σ_a λ_{s0 a} = 1, φ0 + λᵀB = 0 }
//! ```
//!
//! and its maximizer's first block is the action distribution `π†`.
//! Everything here reads the transition table directly; it is the exact
//! reference that the stochastic planner is measured against.

use thiserror::Error;

use crate::features::{CoreSet, FeatureMap};
use crate::lp::{solve_lp, LinearProgram, LpError, LpStatus};
use crate::mdp::{dot, Mdp, MdpError, ValueFunction};

/// Negative entries of magnitude below this are treated as simplex round-off.
pub const CLAMP_TOL: f64 = 1e-10;
/// Allowed deviation of `Σ_a λ_{s0 a}` from 1 when extracting `π†`.
pub const BLOCK_SUM_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum CoreLpError {
    #[error("invalid dimensions: {0}")]
    Dimension(String),
    #[error("linear program status {0:?}")]
    Status(LpStatus),
    #[error("vector is not in Λ: {0}")]
    NotInLambda(String),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// A non-negative vector over `S₊ × A`, split as `π ⊕ λ★`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualVector {
    values: Vec<f64>,
    num_actions: usize,
}

impl DualVector {
    /// Wraps raw values. Only the length is checked; sign and block sums are
    /// checked by [`DualVector::lambda_violation`] and friends.
    pub fn new(values: Vec<f64>, num_actions: usize) -> Result<Self, CoreLpError> {
        if num_actions == 0 || values.len() < num_actions || !values.len().is_multiple_of(num_actions) {
            return Err(CoreLpError::Dimension(format!(
                "length {} is not a positive multiple of A = {} covering s0",
                values.len(),
                num_actions
            )));
        }
        Ok(DualVector { values, num_actions })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Number of core states `m`.
    pub fn num_core(&self) -> usize {
        self.values.len() / self.num_actions - 1
    }

    /// The `s0` block, `λ_{s0 a}` for `a = 0..A`.
    pub fn pi_block(&self) -> &[f64] {
        &self.values[..self.num_actions]
    }

    /// The core block `λ★`, ordered by core state then action.
    pub fn core_block(&self) -> &[f64] {
        &self.values[self.num_actions..]
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }

    /// Largest violation of `λ ≥ 0` and `Σ_a λ_{s0 a} = 1`.
    pub fn lambda_violation(&self) -> f64 {
        let neg = self.values.iter().fold(0.0f64, |m, &v| m.max(-v));
        let block: f64 = self.pi_block().iter().sum();
        neg.max((block - 1.0).abs())
    }

    /// Largest violation of membership in `Λ_γ`: the `Λ` conditions plus
    /// `Σ λ★ = γ/(1−γ)`, which together give `‖λ‖₁ = 1/(1−γ)`.
    pub fn lambda_gamma_violation(&self, gamma: f64) -> f64 {
        let core: f64 = self.core_block().iter().sum();
        self.lambda_violation()
            .max((core - gamma / (1.0 - gamma)).abs())
    }
}

/// The materialized core-state LP for one planning state.
#[derive(Debug, Clone)]
pub struct CoreLpProblem {
    s0: usize,
    core: CoreSet,
    num_actions: usize,
    gamma: f64,
    dim: usize,
    b_mat: Vec<f64>,
    wr: Vec<f64>,
    phi0: Vec<f64>,
}

/// `γP_{sa}Φ − φ_s` for one state-action pair.
fn constraint_row(mdp: &Mdp, features: &FeatureMap, s: usize, a: usize) -> Vec<f64> {
    let d = features.dim();
    let gamma = mdp.gamma();
    let mut row: Vec<f64> = features.row(s).iter().map(|v| -v).collect();
    for (next, &p) in mdp.transition_row(s, a).iter().enumerate() {
        if p != 0.0 {
            let phi = features.row(next);
            for j in 0..d {
                row[j] += gamma * p * phi[j];
            }
        }
    }
    row
}

fn check_compatible(mdp: &Mdp, features: &FeatureMap, core: &CoreSet) -> Result<(), CoreLpError> {
    if features.num_states() != mdp.num_states() {
        return Err(CoreLpError::Dimension(format!(
            "features cover {} states, MDP has {}",
            features.num_states(),
            mdp.num_states()
        )));
    }
    if core.dim() != features.dim() {
        return Err(CoreLpError::Dimension("core set built for another feature map".into()));
    }
    Ok(())
}

pub fn build_corelp(
    mdp: &Mdp,
    features: &FeatureMap,
    core: &CoreSet,
    s0: usize,
) -> Result<CoreLpProblem, CoreLpError> {
    mdp.check_state(s0)?;
    check_compatible(mdp, features, core)?;
    let a_count = mdp.num_actions();
    let states: Vec<usize> = std::iter::once(s0).chain(core.indices().iter().copied()).collect();
    let mut b_mat = Vec::with_capacity(states.len() * a_count * features.dim());
    let mut wr = Vec::with_capacity(states.len() * a_count);
    for &s in &states {
        for a in 0..a_count {
            b_mat.extend(constraint_row(mdp, features, s, a));
            wr.push(mdp.reward(s, a));
        }
    }
    Ok(CoreLpProblem {
        s0,
        core: core.clone(),
        num_actions: a_count,
        gamma: mdp.gamma(),
        dim: features.dim(),
        b_mat,
        wr,
        phi0: features.row(s0).to_vec(),
    })
}

impl CoreLpProblem {
    pub fn s0(&self) -> usize {
        self.s0
    }

    pub fn core(&self) -> &CoreSet {
        &self.core
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `(1+m)A`.
    pub fn num_rows(&self) -> usize {
        self.wr.len()
    }

    /// State of row `i` in `S₊ × A` ordering.
    pub fn row_state(&self, i: usize) -> usize {
        let block = i / self.num_actions;
        if block == 0 {
            self.s0
        } else {
            self.core.indices()[block - 1]
        }
    }

    pub fn row_action(&self, i: usize) -> usize {
        i % self.num_actions
    }

    pub fn b_row(&self, i: usize) -> &[f64] {
        &self.b_mat[i * self.dim..(i + 1) * self.dim]
    }

    pub fn b_mat(&self) -> &[f64] {
        &self.b_mat
    }

    pub fn wr(&self) -> &[f64] {
        &self.wr
    }

    pub fn phi0(&self) -> &[f64] {
        &self.phi0
    }

    fn check_lambda(&self, lambda: &DualVector) {
        assert_eq!(lambda.len(), self.num_rows(), "dual vector length");
    }

    /// `f_λ(θ) = Wr + Bθ`.
    pub fn grad_lambda(&self, theta: &[f64]) -> Vec<f64> {
        assert_eq!(theta.len(), self.dim, "θ length");
        (0..self.num_rows())
            .map(|i| self.wr[i] + dot(self.b_row(i), theta))
            .collect()
    }

    /// `f_θ(λ) = φ0 + Bᵀλ`.
    pub fn grad_theta(&self, lambda: &DualVector) -> Vec<f64> {
        self.check_lambda(lambda);
        let mut g = self.phi0.clone();
        for (i, &l) in lambda.as_slice().iter().enumerate() {
            if l != 0.0 {
                for (gj, bj) in g.iter_mut().zip(self.b_row(i)) {
                    *gj += l * bj;
                }
            }
        }
        g
    }
}

/// Solves the core-state LP exactly, returning `(V†, λ†)`.
///
/// Infeasibility or unboundedness cannot happen when the features carry a
/// bias direction and the core set spans every state's features, so either
/// status is reported as an error.
pub fn solve_corelp_exact(problem: &CoreLpProblem) -> Result<(f64, DualVector), CoreLpError> {
    let n = problem.num_rows();
    let mut lp = LinearProgram::maximize(problem.wr.clone());
    for j in 0..problem.dim {
        let row = (0..n).map(|i| problem.b_row(i)[j]).collect();
        lp = lp.eq(row, -problem.phi0[j]);
    }
    let mut block = vec![0.0; n];
    block[..problem.num_actions].fill(1.0);
    lp = lp.eq(block, 1.0);
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(CoreLpError::Status(sol.status));
    }
    Ok((sol.objective_value, DualVector::new(sol.x, problem.num_actions)?))
}

/// `π†(a) = λ_{s0 a}` after clamping round-off negatives and renormalizing.
pub fn extract_pi_dagger(lambda: &DualVector) -> Result<Vec<f64>, CoreLpError> {
    let block = lambda.pi_block();
    if let Some(v) = block.iter().find(|&&v| v < -CLAMP_TOL) {
        return Err(CoreLpError::NotInLambda(format!("negative entry {v:e}")));
    }
    let clamped: Vec<f64> = block.iter().map(|&v| v.max(0.0)).collect();
    let sum: f64 = clamped.iter().sum();
    if (sum - 1.0).abs() > BLOCK_SUM_TOL {
        return Err(CoreLpError::NotInLambda(format!("s0 block sums to {sum}")));
    }
    Ok(clamped.iter().map(|v| v / sum).collect())
}

/// `f(λ, θ) = λᵀWr + φ0ᵀθ + λᵀBθ`.
pub fn saddle_objective(problem: &CoreLpProblem, lambda: &DualVector, theta: &[f64]) -> f64 {
    problem.check_lambda(lambda);
    let grad = problem.grad_lambda(theta);
    dot(lambda.as_slice(), &grad) + dot(&problem.phi0, theta)
}

/// `g_μ(λ★, θ) = λ★ᵀW★r + μᵀΦθ + λ★ᵀB★θ`, the saddle objective of the
/// relaxed ALP with weighting `μ`, evaluated on the core rows of `problem`.
pub fn lralp_saddle_objective(
    problem: &CoreLpProblem,
    features: &FeatureMap,
    mu: &[f64],
    lambda_star: &[f64],
    theta: &[f64],
) -> f64 {
    let a = problem.num_actions;
    assert_eq!(lambda_star.len(), problem.num_rows() - a, "λ★ length");
    assert_eq!(mu.len(), features.num_states(), "μ length");
    let grad = problem.grad_lambda(theta);
    let values = features.values(theta);
    dot(lambda_star, &grad[a..]) + dot(mu, &values)
}

/// `Σ_a π(a) P_{s0 a}`, the next-state distribution under `π` from `s0`.
pub fn next_state_distribution(mdp: &Mdp, s0: usize, pi: &[f64]) -> Vec<f64> {
    assert_eq!(pi.len(), mdp.num_actions(), "π length");
    let mut out = vec![0.0; mdp.num_states()];
    for (a, &p) in pi.iter().enumerate() {
        for (o, &t) in out.iter_mut().zip(mdp.transition_row(s0, a)) {
            *o += p * t;
        }
    }
    out
}

fn require_optimal(status: LpStatus) -> Result<(), CoreLpError> {
    match status {
        LpStatus::Optimal => Ok(()),
        other => Err(CoreLpError::Status(other)),
    }
}

/// Relaxed ALP: `min μᵀΦθ` subject to `r_{sa} + (γP_{sa}Φ − φ_s)θ ≤ 0` for
/// every core state `s` and action `a`, with `θ` free. Returns `(value, θ)`.
pub fn solve_lralp(
    mdp: &Mdp,
    features: &FeatureMap,
    core: &CoreSet,
    mu: &[f64],
) -> Result<(f64, Vec<f64>), CoreLpError> {
    check_compatible(mdp, features, core)?;
    if mu.len() != mdp.num_states() {
        return Err(CoreLpError::Dimension("μ length".into()));
    }
    if let Some(v) = mu.iter().find(|&&v| v < 0.0) {
        return Err(CoreLpError::Dimension(format!("μ has negative entry {v}")));
    }
    let d = features.dim();
    let mut objective = vec![0.0; d];
    for (s, &w) in mu.iter().enumerate() {
        for (o, p) in objective.iter_mut().zip(features.row(s)) {
            *o += w * p;
        }
    }
    let mut lp = LinearProgram::minimize(objective).all_free();
    for &s in core.indices() {
        for a in 0..mdp.num_actions() {
            lp = lp.le(constraint_row(mdp, features, s, a), -mdp.reward(s, a));
        }
    }
    let sol = solve_lp(&lp)?;
    require_optimal(sol.status)?;
    Ok((sol.objective_value, sol.x))
}

fn j_star(
    features: &FeatureMap,
    rows: &[usize],
    v_star: &ValueFunction,
    s: usize,
) -> Result<f64, CoreLpError> {
    if s >= features.num_states() || v_star.values.len() != features.num_states() {
        return Err(CoreLpError::Dimension("state or value function out of range".into()));
    }
    let mut lp = LinearProgram::minimize(features.row(s).to_vec()).all_free();
    for &k in rows {
        lp = lp.ge(features.row(k).to_vec(), v_star[k]);
    }
    let sol = solve_lp(&lp)?;
    require_optimal(sol.status)?;
    Ok(sol.objective_value)
}

/// `min { φ_sᵀθ : Φθ ≥ v* }`.
pub fn j_star_alp(features: &FeatureMap, v_star: &ValueFunction, s: usize) -> Result<f64, CoreLpError> {
    let all: Vec<usize> = (0..features.num_states()).collect();
    j_star(features, &all, v_star, s)
}

/// `min { φ_sᵀθ : Φ★θ ≥ v*_★ }`, the same program with only core rows kept.
pub fn j_star_lra(
    features: &FeatureMap,
    core: &CoreSet,
    v_star: &ValueFunction,
    s: usize,
) -> Result<f64, CoreLpError> {
    if core.dim() != features.dim() {
        return Err(CoreLpError::Dimension("core set built for another feature map".into()));
    }
    j_star(features, core.indices(), v_star, s)
}

/// The MDP's occupancy-measure LP from `s0`:
/// `max μᵀr` subject to `e_{s0} + μᵀ(γP − E) = 0`, `μ ≥ 0`.
pub fn mdp_dual_lp(mdp: &Mdp, s0: usize) -> Result<LinearProgram, CoreLpError> {
    mdp.check_state(s0)?;
    let (n, a_count, gamma) = (mdp.num_states(), mdp.num_actions(), mdp.gamma());
    let mut lp = LinearProgram::maximize(mdp.rewards().to_vec());
    for t in 0..n {
        let row = (0..n * a_count)
            .map(|i| {
                let (s, a) = (i / a_count, i % a_count);
                gamma * mdp.transition_row(s, a)[t] - if s == t { 1.0 } else { 0.0 }
            })
            .collect();
        lp = lp.eq(row, if t == s0 { -1.0 } else { 0.0 });
    }
    Ok(lp)
}

/// The MDP's value LP from `s0`:
/// `min v(s0)` subject to `r + (γP − E)v ≤ 0`, `v` free.
pub fn mdp_primal_lp(mdp: &Mdp, s0: usize) -> Result<LinearProgram, CoreLpError> {
    mdp.check_state(s0)?;
    let (n, a_count, gamma) = (mdp.num_states(), mdp.num_actions(), mdp.gamma());
    let mut objective = vec![0.0; n];
    objective[s0] = 1.0;
    let mut lp = LinearProgram::minimize(objective).all_free();
    for s in 0..n {
        for a in 0..a_count {
            let mut row: Vec<f64> = mdp.transition_row(s, a).iter().map(|p| gamma * p).collect();
            row[s] -= 1.0;
            lp = lp.le(row, -mdp.reward(s, a));
        }
    }
    Ok(lp)
}

/// Solves [`mdp_dual_lp`], returning `(v*(s0), μ)`.
pub fn solve_mdp_dual(mdp: &Mdp, s0: usize) -> Result<(f64, Vec<f64>), CoreLpError> {
    let sol = solve_lp(&mdp_dual_lp(mdp, s0)?)?;
    require_optimal(sol.status)?;
    Ok((sol.objective_value, sol.x))
}

/// Solves [`mdp_primal_lp`], returning `(v*(s0), v)`.
pub fn solve_mdp_primal(mdp: &Mdp, s0: usize) -> Result<(f64, Vec<f64>), CoreLpError> {
    let sol = solve_lp(&mdp_primal_lp(mdp, s0)?)?;
    require_optimal(sol.status)?;
    Ok((sol.objective_value, sol.x))
}
