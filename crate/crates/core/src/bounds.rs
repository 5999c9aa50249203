//! Right-hand sides of the approximation, optimization and planning bounds.
//!
//! `eps` is the sup-norm approximation error of `v*` in the feature span,
//! `m` the number of core states and `ell = ln A + γ ln m`.

/// `ln A + γ ln m`.
pub fn ell(num_actions: usize, num_core: usize, gamma: f64) -> f64 {
    (num_actions as f64).ln() + gamma * (num_core as f64).ln()
}

/// `|V† − v*(s0)| ≤ 10γε/(1−γ)`.
pub fn corelp_value_bound(eps: f64, gamma: f64) -> f64 {
    10.0 * gamma * eps / (1.0 - gamma)
}

/// `v*(s0) − Σ_a π†(a) q*(s0, a) ≤ 20γε/(1−γ)`.
pub fn corelp_action_bound(eps: f64, gamma: f64) -> f64 {
    20.0 * gamma * eps / (1.0 - gamma)
}

/// `|V_LRALP(μ) − μᵀv*| ≤ 10‖μ‖₁ε/(1−γ)`.
pub fn lralp_bound(eps: f64, gamma: f64, mu_l1: f64) -> f64 {
    10.0 * mu_l1 * eps / (1.0 - gamma)
}

/// `J*_ALP − J*_LRA ≤ 2ε`.
pub fn j_star_gap_bound(eps: f64) -> f64 {
    2.0 * eps
}

/// `(9/4)√(m(1+2ℓ))/(1−γ)²`.
pub fn lipschitz_constant(num_actions: usize, num_core: usize, gamma: f64) -> f64 {
    let m = num_core as f64;
    2.25 * (m * (1.0 + 2.0 * ell(num_actions, num_core, gamma))).sqrt() / (1.0 - gamma).powi(2)
}

/// Expected duality gap after `T` iterations: `14C/√(3T)`.
pub fn mirror_prox_gap_bound(lipschitz: f64, iterations: usize) -> f64 {
    14.0 * lipschitz / (3.0 * iterations as f64).sqrt()
}

/// Expected action loss of the stochastic planner after `T` iterations:
/// `32ε/(1−γ) + (21/(2(1−γ)²))√(3m(1+2ℓ)/T)`.
pub fn corestomp_bound(eps: f64, gamma: f64, num_actions: usize, num_core: usize, iterations: usize) -> f64 {
    let m = num_core as f64;
    let l = ell(num_actions, num_core, gamma);
    32.0 * eps / (1.0 - gamma)
        + 10.5 / (1.0 - gamma).powi(2) * (3.0 * m * (1.0 + 2.0 * l) / iterations as f64).sqrt()
}

/// Per-run action loss in terms of the realized duality gap:
/// `v*(s0) − Σ_a π̂(a) q*(s0, a) ≤ 32γε/(1−γ) + δ_B(λ̂, θ̂)`.
pub fn gap_to_loss_bound(eps: f64, gamma: f64, gap: f64) -> f64 {
    32.0 * gamma * eps / (1.0 - gamma) + gap
}

/// Largest possible action loss with rewards in `[−1, 1]`: `2/(1−γ)`.
pub fn trivial_loss_bound(gamma: f64) -> f64 {
    2.0 / (1.0 - gamma)
}
