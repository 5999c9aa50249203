//! Feature maps, core-state sets and the exact approximation error.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{solve_lp, LinearProgram, LpError, LpStatus};
use crate::mdp::{dot, ValueFunction};

/// Residual allowed when certifying that `1` lies in the span of the features.
pub const BIAS_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("invalid dimensions: {0}")]
    Dimension(String),
    #[error("constant vector is not in the feature span (residual {0:.3e})")]
    NoBias(f64),
    #[error("core state {0} out of range")]
    CoreIndex(usize),
    #[error("core state {0} listed twice")]
    DuplicateCore(usize),
    #[error("core feature matrix has rank zero")]
    DegenerateCore,
    #[error("state {0} is not a convex combination of the core features")]
    NotInHull(usize),
    #[error("linear program status {0:?}")]
    LpStatus(LpStatus),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Per-state feature vectors `φ_s ∈ R^d`, stored as an `S × d` row-major table.
///
/// Construction certifies that some `η` satisfies `Φη = 1`; the witness is
/// kept and available through [`FeatureMap::bias_witness`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    num_states: usize,
    dim: usize,
    phi: Vec<f64>,
    bias_witness: Vec<f64>,
}

impl FeatureMap {
    pub fn new(num_states: usize, dim: usize, phi: Vec<f64>) -> Result<Self, FeatureError> {
        if num_states == 0 || dim == 0 {
            return Err(FeatureError::Dimension("empty feature table".into()));
        }
        if phi.len() != num_states * dim {
            return Err(FeatureError::Dimension(format!(
                "phi has length {}, expected {}",
                phi.len(),
                num_states * dim
            )));
        }
        let mat = DMatrix::from_row_slice(num_states, dim, &phi);
        let ones = DVector::from_element(num_states, 1.0);
        let eta = mat
            .clone()
            .svd(true, true)
            .solve(&ones, 1e-12)
            .map_err(|e| FeatureError::Dimension(e.to_string()))?;
        let residual = (&mat * &eta - ones).amax();
        if residual.is_nan() || residual > BIAS_TOL {
            return Err(FeatureError::NoBias(residual));
        }
        Ok(FeatureMap {
            num_states,
            dim,
            phi,
            bias_witness: eta.iter().copied().collect(),
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        &self.phi[s * self.dim..(s + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.phi
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.num_states, self.dim, &self.phi)
    }

    /// A vector `η` with `Φη = 1`.
    pub fn bias_witness(&self) -> &[f64] {
        &self.bias_witness
    }

    /// `Φθ`.
    pub fn values(&self, theta: &[f64]) -> Vec<f64> {
        (0..self.num_states).map(|s| dot(self.row(s), theta)).collect()
    }
}

/// Designated core states and the stacked core feature matrix `Φ★`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreSet {
    indices: Vec<usize>,
    dim: usize,
    phi_star: Vec<f64>,
}

impl CoreSet {
    pub fn new(features: &FeatureMap, indices: Vec<usize>) -> Result<Self, FeatureError> {
        if indices.is_empty() {
            return Err(FeatureError::Dimension("core set is empty".into()));
        }
        let mut seen = vec![false; features.num_states()];
        for &s in &indices {
            if s >= features.num_states() {
                return Err(FeatureError::CoreIndex(s));
            }
            if std::mem::replace(&mut seen[s], true) {
                return Err(FeatureError::DuplicateCore(s));
            }
        }
        let phi_star = indices
            .iter()
            .flat_map(|&s| features.row(s).iter().copied())
            .collect();
        Ok(CoreSet {
            indices,
            dim: features.dim(),
            phi_star,
        })
    }

    /// Every state is a core state.
    pub fn all_states(features: &FeatureMap) -> Self {
        CoreSet::new(features, (0..features.num_states()).collect())
            .expect("all-state core set is always valid")
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Number of core states `m`.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row `k` of `Φ★`.
    pub fn row(&self, k: usize) -> &[f64] {
        &self.phi_star[k * self.dim..(k + 1) * self.dim]
    }

    pub fn phi_star(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.dim, &self.phi_star)
    }

    /// `‖Φ★θ‖₂`.
    pub fn core_norm(&self, theta: &[f64]) -> f64 {
        (0..self.len())
            .map(|k| dot(self.row(k), theta).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Outcome of a core-set certification.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreSetCheck {
    pub valid: bool,
    /// Smallest state whose features leave the convex hull of `Φ★`.
    pub first_violation: Option<usize>,
    /// Convex weights `z_s` with `z_sᵀΦ★ = φ_s`, for every state checked
    /// before the first violation.
    pub weights: Vec<Vec<f64>>,
}

/// Convex weights expressing `target` through `rows`, if they exist.
pub fn convex_weights(rows: &[&[f64]], target: &[f64]) -> Result<Option<Vec<f64>>, FeatureError> {
    let m = rows.len();
    let mut lp = LinearProgram::minimize(vec![0.0; m]);
    for (j, &t) in target.iter().enumerate() {
        lp = lp.eq(rows.iter().map(|r| r[j]).collect(), t);
    }
    lp = lp.eq(vec![1.0; m], 1.0);
    let sol = solve_lp(&lp)?;
    Ok(match sol.status {
        LpStatus::Optimal => Some(sol.x),
        _ => None,
    })
}

/// Certifies that every feature row is a convex combination of core rows.
pub fn check_core_set(features: &FeatureMap, core: &CoreSet) -> Result<CoreSetCheck, FeatureError> {
    if core.dim() != features.dim() {
        return Err(FeatureError::Dimension("core set built for another feature map".into()));
    }
    if core.phi_star.iter().all(|v| *v == 0.0) {
        return Err(FeatureError::DegenerateCore);
    }
    let rows: Vec<&[f64]> = (0..core.len()).map(|k| core.row(k)).collect();
    let mut weights = Vec::with_capacity(features.num_states());
    for s in 0..features.num_states() {
        match convex_weights(&rows, features.row(s))? {
            Some(z) => weights.push(z),
            None => {
                return Ok(CoreSetCheck {
                    valid: false,
                    first_violation: Some(s),
                    weights,
                })
            }
        }
    }
    Ok(CoreSetCheck {
        valid: true,
        first_violation: None,
        weights,
    })
}

/// Best sup-norm approximation of `v*` in the feature span.
///
/// Solves the Chebyshev LP `min ε s.t. |v*(s) - φ_sᵀθ| <= ε` and returns
/// `(ε, θ)`. The returned `ε` is recomputed as `‖v* - Φθ‖∞` from the LP's
/// `θ`, so it always certifies the returned weights.
pub fn epsilon_approx(
    features: &FeatureMap,
    v_star: &ValueFunction,
) -> Result<(f64, Vec<f64>), FeatureError> {
    let d = features.dim();
    if v_star.values.len() != features.num_states() {
        return Err(FeatureError::Dimension("value function length".into()));
    }
    // Variables: θ (free, d entries), then ε >= 0.
    let mut objective = vec![0.0; d + 1];
    objective[d] = 1.0;
    let mut lp = LinearProgram::minimize(objective);
    for j in 0..d {
        lp = lp.free(j);
    }
    for s in 0..features.num_states() {
        let phi = features.row(s);
        let mut upper: Vec<f64> = phi.to_vec();
        upper.push(-1.0);
        let mut lower: Vec<f64> = phi.iter().map(|v| -v).collect();
        lower.push(-1.0);
        lp = lp.le(upper, v_star[s]).le(lower, -v_star[s]);
    }
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(FeatureError::LpStatus(sol.status));
    }
    let theta = sol.x[..d].to_vec();
    let eps = features
        .values(&theta)
        .iter()
        .zip(&v_star.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok((eps, theta))
}

/// On-disk JSON layout of a feature map plus its core set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureFile {
    pub dim: usize,
    pub phi: Vec<f64>,
    pub core_indices: Vec<usize>,
}

impl FeatureFile {
    pub fn from_parts(features: &FeatureMap, core: &CoreSet) -> Self {
        FeatureFile {
            dim: features.dim(),
            phi: features.as_slice().to_vec(),
            core_indices: core.indices().to_vec(),
        }
    }

    /// Validates the bias condition always and the hull condition when
    /// `certify_core` is set.
    pub fn into_parts(self, certify_core: bool) -> Result<(FeatureMap, CoreSet), FeatureError> {
        if self.dim == 0 || !self.phi.len().is_multiple_of(self.dim) {
            return Err(FeatureError::Dimension(format!(
                "phi length {} is not a multiple of dim {}",
                self.phi.len(),
                self.dim
            )));
        }
        let features = FeatureMap::new(self.phi.len() / self.dim, self.dim, self.phi)?;
        let core = CoreSet::new(&features, self.core_indices)?;
        if certify_core {
            let check = check_core_set(&features, &core)?;
            if let Some(s) = check.first_violation {
                return Err(FeatureError::NotInHull(s));
            }
        }
        Ok((features, core))
    }

    pub fn load(path: impl AsRef<Path>, certify_core: bool) -> Result<(FeatureMap, CoreSet), FeatureError> {
        let file: FeatureFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        file.into_parts(certify_core)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), FeatureError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
