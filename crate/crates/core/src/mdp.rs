//! Tabular discounted MDPs and their exact oracles.
//!
//! Transitions are stored densely as an `(S·A) × S` row-major table; the
//! state-action index of `(s, a)` is `s·A + a`. Everything here is ground
//! truth for the rest of the crate, so every routine is exact up to the
//! tolerance it is given.

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest state count handled by the desk-scale tooling.
pub const MAX_STATES: usize = 200;
const ROW_SUM_TOL: f64 = 1e-12;
/// State counts up to this size use a direct linear solve for policy evaluation.
const DIRECT_SOLVE_LIMIT: usize = 64;
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("invalid dimensions: {0}")]
    Dimension(String),
    #[error("transition row (s={state}, a={action}) has negative entry {value} at s'={next}")]
    NegativeProbability {
        state: usize,
        action: usize,
        next: usize,
        value: f64,
    },
    #[error("transition row (s={state}, a={action}) sums to {sum}, expected 1")]
    RowSum { state: usize, action: usize, sum: f64 },
    #[error("reward r(s={state}, a={action}) = {value} lies outside [-1, 1]")]
    RewardRange { state: usize, action: usize, value: f64 },
    #[error("discount {0} outside [0, 1)")]
    Discount(f64),
    #[error("policy row {state} is not a distribution (sum {sum})")]
    PolicyRow { state: usize, sum: f64 },
    #[error("state {0} out of range")]
    State(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// A finite discounted MDP with rewards in `[-1, 1]`.
#[derive(Clone, PartialEq)]
pub struct Mdp {
    num_states: usize,
    num_actions: usize,
    transitions: Vec<f64>,
    rewards: Vec<f64>,
    gamma: f64,
}

/// On-disk JSON layout of an [`Mdp`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MdpFile {
    pub num_states: usize,
    pub num_actions: usize,
    pub gamma: f64,
    pub rewards: Vec<f64>,
    pub transitions: Vec<f64>,
}

impl fmt::Debug for Mdp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Mdp")
            .field("num_states", &self.num_states)
            .field("num_actions", &self.num_actions)
            .field("gamma", &self.gamma)
            .finish_non_exhaustive()
    }
}

impl Mdp {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
        gamma: f64,
    ) -> Result<Self, MdpError> {
        if num_states == 0 || num_actions == 0 {
            return Err(MdpError::Dimension("need at least one state and one action".into()));
        }
        let sa = num_states * num_actions;
        if rewards.len() != sa {
            return Err(MdpError::Dimension(format!(
                "rewards has length {}, expected {sa}",
                rewards.len()
            )));
        }
        if transitions.len() != sa * num_states {
            return Err(MdpError::Dimension(format!(
                "transitions has length {}, expected {}",
                transitions.len(),
                sa * num_states
            )));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(MdpError::Discount(gamma));
        }
        for row in 0..sa {
            let (state, action) = (row / num_actions, row % num_actions);
            let probs = &transitions[row * num_states..(row + 1) * num_states];
            if let Some((next, &value)) = probs.iter().enumerate().find(|(_, p)| p.is_nan() || **p < 0.0) {
                return Err(MdpError::NegativeProbability {
                    state,
                    action,
                    next,
                    value,
                });
            }
            let sum: f64 = probs.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(MdpError::RowSum { state, action, sum });
            }
        }
        if let Some((i, &value)) = rewards
            .iter()
            .enumerate()
            .find(|(_, r)| !(-1.0..=1.0).contains(*r))
        {
            return Err(MdpError::RewardRange {
                state: i / num_actions,
                action: i % num_actions,
                value,
            });
        }
        Ok(Mdp {
            num_states,
            num_actions,
            transitions,
            rewards,
            gamma,
        })
    }

    pub fn from_file(file: MdpFile) -> Result<Self, MdpError> {
        Mdp::new(
            file.num_states,
            file.num_actions,
            file.transitions,
            file.rewards,
            file.gamma,
        )
    }

    pub fn to_file(&self) -> MdpFile {
        MdpFile {
            num_states: self.num_states,
            num_actions: self.num_actions,
            gamma: self.gamma,
            rewards: self.rewards.clone(),
            transitions: self.transitions.clone(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, MdpError> {
        Mdp::from_file(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("MDP serialization cannot fail")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MdpError> {
        Mdp::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MdpError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Effective horizon `1/(1-γ)`.
    pub fn horizon(&self) -> f64 {
        1.0 / (1.0 - self.gamma)
    }

    #[inline]
    pub fn index(&self, s: usize, a: usize) -> usize {
        s * self.num_actions + a
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[self.index(s, a)]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    /// Next-state distribution `P_{sa}`.
    #[inline]
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let row = self.index(s, a);
        &self.transitions[row * self.num_states..(row + 1) * self.num_states]
    }

    pub fn check_state(&self, s: usize) -> Result<(), MdpError> {
        if s < self.num_states {
            Ok(())
        } else {
            Err(MdpError::State(s))
        }
    }

    /// `r_{sa} + γ P_{sa} v`.
    pub fn backup(&self, s: usize, a: usize, v: &[f64]) -> f64 {
        self.reward(s, a) + self.gamma * dot(self.transition_row(s, a), v)
    }

    /// Bellman optimality operator `T v`.
    pub fn bellman_optimality(&self, v: &[f64]) -> Vec<f64> {
        (0..self.num_states)
            .map(|s| {
                (0..self.num_actions)
                    .map(|a| self.backup(s, a, v))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    }

    /// Policy Bellman operator `r_π + γ P_π v`.
    pub fn bellman_policy(&self, policy: &Policy, v: &[f64]) -> Vec<f64> {
        (0..self.num_states)
            .map(|s| {
                (0..self.num_actions)
                    .map(|a| policy.prob(s, a) * self.backup(s, a, v))
                    .sum()
            })
            .collect()
    }

    /// `(r_π, P_π)` of a stationary policy.
    fn policy_kernel(&self, policy: &Policy) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.num_states;
        let mut r = DVector::zeros(n);
        let mut p = DMatrix::zeros(n, n);
        for s in 0..n {
            for a in 0..self.num_actions {
                let w = policy.prob(s, a);
                if w == 0.0 {
                    continue;
                }
                r[s] += w * self.reward(s, a);
                for (next, &prob) in self.transition_row(s, a).iter().enumerate() {
                    p[(s, next)] += w * prob;
                }
            }
        }
        (r, p)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// A stationary stochastic policy, one action distribution per state.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self, MdpError> {
        if probs.len() != num_states * num_actions {
            return Err(MdpError::Dimension(format!(
                "policy table has length {}, expected {}",
                probs.len(),
                num_states * num_actions
            )));
        }
        for s in 0..num_states {
            let row = &probs[s * num_actions..(s + 1) * num_actions];
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| p.is_nan() || *p < 0.0) || (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(MdpError::PolicyRow { state: s, sum });
            }
        }
        Ok(Policy {
            num_states,
            num_actions,
            probs,
        })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Policy {
            num_states,
            num_actions,
            probs: vec![1.0 / num_actions as f64; num_states * num_actions],
        }
    }

    pub fn deterministic(num_actions: usize, actions: &[usize]) -> Self {
        let mut probs = vec![0.0; actions.len() * num_actions];
        for (s, &a) in actions.iter().enumerate() {
            probs[s * num_actions + a] = 1.0;
        }
        Policy {
            num_states: actions.len(),
            num_actions,
            probs,
        }
    }

    /// Plays the same action distribution in every state.
    pub fn stationary(num_states: usize, dist: &[f64]) -> Result<Self, MdpError> {
        let probs = (0..num_states).flat_map(|_| dist.iter().copied()).collect();
        Policy::new(num_states, dist.len(), probs)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.num_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.num_actions..(s + 1) * self.num_actions]
    }

    /// Replaces the action distribution at state `s`.
    pub fn set_row(&mut self, s: usize, dist: &[f64]) -> Result<(), MdpError> {
        let sum: f64 = dist.iter().sum();
        if dist.len() != self.num_actions
            || dist.iter().any(|p| p.is_nan() || *p < 0.0)
            || (sum - 1.0).abs() > ROW_SUM_TOL
        {
            return Err(MdpError::PolicyRow { state: s, sum });
        }
        self.probs[s * self.num_actions..(s + 1) * self.num_actions].copy_from_slice(dist);
        Ok(())
    }
}

/// A state-value vector of length `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub values: Vec<f64>,
}

impl ValueFunction {
    pub fn new(values: Vec<f64>) -> Self {
        ValueFunction { values }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn sup_distance(&self, other: &ValueFunction) -> f64 {
        sup_distance(&self.values, &other.values)
    }
}

impl std::ops::Index<usize> for ValueFunction {
    type Output = f64;
    fn index(&self, s: usize) -> &f64 {
        &self.values[s]
    }
}

/// A state-action value table of length `S·A`, indexed like the rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionValues {
    pub num_actions: usize,
    pub values: Vec<f64>,
}

impl ActionValues {
    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.num_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.num_actions..(s + 1) * self.num_actions]
    }

    /// Expected value `Σ_a π(a) q(s, a)` of an action distribution.
    pub fn expected(&self, s: usize, dist: &[f64]) -> f64 {
        dot(self.row(s), dist)
    }

    /// Lowest-index maximizing action at `s`.
    pub fn greedy_action(&self, s: usize) -> usize {
        let row = self.row(s);
        let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.iter().position(|&q| q >= best - TIE_TOL).unwrap_or(0)
    }
}

/// Optimal value function within `tol` in sup norm.
///
/// Stops once successive iterates differ by at most `tol·(1-γ)/(2γ)`, which
/// puts the returned iterate within `tol/2` of `v*`.
pub fn value_iteration(mdp: &Mdp, tol: f64) -> ValueFunction {
    assert!(tol > 0.0, "tolerance must be positive");
    let gamma = mdp.gamma();
    let mut v = vec![0.0; mdp.num_states()];
    if gamma == 0.0 {
        return ValueFunction::new(mdp.bellman_optimality(&v));
    }
    let threshold = tol * (1.0 - gamma) / (2.0 * gamma);
    loop {
        let next = mdp.bellman_optimality(&v);
        let gap = sup_distance(&next, &v);
        v = next;
        if gap <= threshold {
            return ValueFunction::new(v);
        }
    }
}

/// `q*_{sa} = r_{sa} + γ P_{sa} v*`.
pub fn q_star(mdp: &Mdp, v_star: &ValueFunction) -> ActionValues {
    let values = (0..mdp.num_states())
        .flat_map(|s| (0..mdp.num_actions()).map(move |a| (s, a)))
        .map(|(s, a)| mdp.backup(s, a, v_star.as_slice()))
        .collect();
    ActionValues {
        num_actions: mdp.num_actions(),
        values,
    }
}

/// Greedy policy with respect to `q`, ties going to the lowest action index.
pub fn greedy_policy(q: &ActionValues) -> Policy {
    let num_states = q.values.len() / q.num_actions;
    let actions: Vec<usize> = (0..num_states).map(|s| q.greedy_action(s)).collect();
    Policy::deterministic(q.num_actions, &actions)
}

/// Value `v_π` of a stationary policy within `tol`.
///
/// Small MDPs use a direct solve of `(I - γP_π) v = r_π`; larger ones iterate
/// the policy Bellman operator with the same stopping rule as
/// [`value_iteration`].
pub fn policy_evaluation(mdp: &Mdp, policy: &Policy, tol: f64) -> ValueFunction {
    assert!(tol > 0.0, "tolerance must be positive");
    let n = mdp.num_states();
    let gamma = mdp.gamma();
    if n <= DIRECT_SOLVE_LIMIT {
        let (r, p) = mdp.policy_kernel(policy);
        let lhs = DMatrix::identity(n, n) - p * gamma;
        let v = lhs
            .lu()
            .solve(&r)
            .expect("I - γP_π is invertible for γ < 1");
        return ValueFunction::new(v.iter().copied().collect());
    }
    let mut v = vec![0.0; n];
    if gamma == 0.0 {
        return ValueFunction::new(mdp.bellman_policy(policy, &v));
    }
    let threshold = tol * (1.0 - gamma) / (2.0 * gamma);
    loop {
        let next = mdp.bellman_policy(policy, &v);
        let gap = sup_distance(&next, &v);
        v = next;
        if gap <= threshold {
            return ValueFunction::new(v);
        }
    }
}

/// Discounted state-action occupancy measure of `policy` started at `start`.
///
/// The result sums to `1/(1-γ)` and satisfies the dual-LP flow constraint
/// `e_start + μᵀ(γP - E) = 0`.
pub fn occupancy_measure(
    mdp: &Mdp,
    policy: &Policy,
    start: usize,
    tol: f64,
) -> Result<Vec<f64>, MdpError> {
    assert!(tol > 0.0, "tolerance must be positive");
    mdp.check_state(start)?;
    let n = mdp.num_states();
    let gamma = mdp.gamma();
    let (_, p) = mdp.policy_kernel(policy);
    // Discounted state visitation d solves (I - γP_πᵀ) d = e_start.
    let visits: Vec<f64> = if n <= DIRECT_SOLVE_LIMIT {
        let lhs = DMatrix::identity(n, n) - p.transpose() * gamma;
        let mut e = DVector::zeros(n);
        e[start] = 1.0;
        lhs.lu()
            .solve(&e)
            .expect("I - γP_πᵀ is invertible for γ < 1")
            .iter()
            .copied()
            .collect()
    } else {
        let pt = p.transpose();
        let mut term = DVector::zeros(n);
        term[start] = 1.0;
        let mut total = term.clone();
        let mut weight = 1.0;
        // Remaining mass after step t is γ^{t+1}/(1-γ).
        while weight * gamma / (1.0 - gamma) > tol {
            term = &pt * term * gamma;
            weight *= gamma;
            total += &term;
        }
        total.iter().copied().collect()
    };
    let a = mdp.num_actions();
    Ok((0..n * a)
        .map(|i| visits[i / a] * policy.prob(i / a, i % a))
        .collect())
}

/// Value loss of a policy together with the performance-difference surrogate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueLoss {
    /// `max_s v*(s) - v_π(s)`.
    pub loss: f64,
    /// `max_s E_{a~π(s)}[v*(s) - q*(s, a)]`.
    pub surrogate: f64,
}

impl ValueLoss {
    /// The performance-difference bound `surrogate / (1-γ)`.
    pub fn bound(&self, gamma: f64) -> f64 {
        self.surrogate / (1.0 - gamma)
    }
}

pub fn value_loss(mdp: &Mdp, policy: &Policy, tol: f64) -> ValueLoss {
    let v_star = value_iteration(mdp, tol);
    let q = q_star(mdp, &v_star);
    let v_pi = policy_evaluation(mdp, policy, tol);
    let loss = (0..mdp.num_states())
        .map(|s| v_star[s] - v_pi[s])
        .fold(0.0, f64::max);
    let surrogate = (0..mdp.num_states())
        .map(|s| v_star[s] - q.expected(s, policy.row(s)))
        .fold(0.0, f64::max);
    ValueLoss { loss, surrogate }
}
