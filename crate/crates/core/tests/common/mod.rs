#![allow(dead_code)]

use coreplan::corelp::DualVector;
use coreplan::corestomp::SaddleLayout;
use coreplan::generate::{generate_instance, FeatureFamily, Instance, InstanceSpec};
use coreplan::mdp::Mdp;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn instance(
    num_states: usize,
    num_actions: usize,
    gamma: f64,
    features: FeatureFamily,
    seed: u64,
) -> Instance {
    generate_instance(&InstanceSpec {
        num_states,
        num_actions,
        gamma,
        features,
        branching: None,
        seed,
    })
    .expect("instance generation")
}

pub fn scale_rewards(mdp: &Mdp, factor: f64) -> Mdp {
    let f = mdp.to_file();
    let rewards = f.rewards.iter().map(|r| r * factor).collect();
    Mdp::new(f.num_states, f.num_actions, f.transitions, rewards, f.gamma).expect("scaled rewards stay in range")
}

pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}

fn simplex<R: Rng>(rng: &mut R, n: usize, mass: f64) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln() + 1e-12).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|v| mass * v / total).collect()
}

/// A strictly positive point of `Λ_γ`.
pub fn random_lambda<R: Rng>(rng: &mut R, layout: &SaddleLayout) -> DualVector {
    let a = layout.num_actions;
    let mut values = simplex(rng, a, 1.0);
    values.extend(simplex(rng, layout.num_rows() - a, layout.core_mass()));
    DualVector::new(values, a).unwrap()
}

/// A point of `Λ` with arbitrary positive total mass.
pub fn random_positive_lambda<R: Rng>(rng: &mut R, rows: usize, num_actions: usize) -> DualVector {
    let values = (0..rows).map(|_| rng.random_range(0.01..2.0)).collect();
    DualVector::new(values, num_actions).unwrap()
}

/// `θ` with `‖Φ★θ‖₂` uniform in `[0, radius]`.
pub fn random_theta_in_ball<R: Rng>(rng: &mut R, phi_star: &DMatrix<f64>, radius: f64) -> Vec<f64> {
    let d = phi_star.ncols();
    let theta = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
    let norm = (phi_star * &theta).norm();
    if norm == 0.0 {
        return vec![0.0; d];
    }
    let target = rng.random_range(0.0..radius);
    (theta * (target / norm)).iter().copied().collect()
}
