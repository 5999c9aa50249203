//! Random instances: MDPs, feature maps and core sets with known structure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{check_core_set, convex_weights, CoreSet, FeatureError, FeatureMap};
use crate::mdp::{value_iteration, Mdp, MdpError, MAX_STATES};

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("invalid instance spec: {0}")]
    Spec(String),
    #[error("gave up after {attempts} attempts: {reason}")]
    RetriesExhausted { attempts: usize, reason: String },
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Features(#[from] FeatureError),
}

/// Feature construction schemes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FeatureFamily {
    /// `Φ = I`, every state a core state.
    Tabular,
    /// A single constant column; one core state.
    BiasOnly,
    /// `φ_s = (1, v*(s) + noise·u_s, w_s)` with `u_s, w_s ~ U[0, 1]`.
    /// With `noise = 0` the optimal values are exactly representable.
    BiasValueNoise { noise: f64 },
    /// One-hot cluster indicators; the first state of each cluster is core.
    HardAggregation { clusters: usize },
    /// Core rows `(1, x_k)` with `x_k ~ U[0,1]^{dim−1}`, other rows random
    /// convex combinations of the core rows.
    ConvexMixture { core: usize, dim: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub num_states: usize,
    pub num_actions: usize,
    pub gamma: f64,
    pub features: FeatureFamily,
    /// Successor states per row; all states when absent.
    #[serde(default)]
    pub branching: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub mdp: Mdp,
    pub features: FeatureMap,
    pub core: CoreSet,
}

const MAX_ATTEMPTS: usize = 20;

/// A row-stochastic table with `branching` random successors per row and
/// exponential weights, and rewards uniform on `[−1, 1]`.
pub fn random_mdp<R: Rng>(
    rng: &mut R,
    num_states: usize,
    num_actions: usize,
    gamma: f64,
    branching: Option<usize>,
) -> Result<Mdp, MdpError> {
    let k = branching.unwrap_or(num_states).clamp(1, num_states.max(1));
    let mut transitions = vec![0.0; num_states * num_actions * num_states];
    for row in transitions.chunks_mut(num_states.max(1)) {
        let mut states: Vec<usize> = (0..num_states).collect();
        for i in 0..k {
            let j = rng.random_range(i..num_states);
            states.swap(i, j);
        }
        let weights: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        let total: f64 = weights.iter().sum();
        for (&s, w) in states[..k].iter().zip(&weights) {
            row[s] = w / total;
        }
        // Absorb rounding so the row sums to one exactly enough for validation.
        let excess: f64 = row.iter().sum::<f64>() - 1.0;
        row[states[0]] -= excess;
    }
    let rewards = (0..num_states * num_actions)
        .map(|_| rng.random_range(-1.0..=1.0))
        .collect();
    Mdp::new(num_states, num_actions, transitions, rewards, gamma)
}

pub fn tabular_features(num_states: usize) -> Result<(FeatureMap, CoreSet), FeatureError> {
    let mut phi = vec![0.0; num_states * num_states];
    for s in 0..num_states {
        phi[s * num_states + s] = 1.0;
    }
    let f = FeatureMap::new(num_states, num_states, phi)?;
    let core = CoreSet::all_states(&f);
    Ok((f, core))
}

pub fn bias_only_features(num_states: usize) -> Result<(FeatureMap, CoreSet), FeatureError> {
    let f = FeatureMap::new(num_states, 1, vec![1.0; num_states])?;
    let core = CoreSet::new(&f, vec![0])?;
    Ok((f, core))
}

/// States whose features are not convex combinations of the other kept
/// states, found by removing redundant states one at a time. The result
/// satisfies the core-set condition for every state.
pub fn hull_core(features: &FeatureMap) -> Result<CoreSet, FeatureError> {
    let mut kept: Vec<usize> = (0..features.num_states()).collect();
    let mut i = 0;
    while i < kept.len() {
        if kept.len() == 1 {
            break;
        }
        let s = kept[i];
        let others: Vec<&[f64]> = kept
            .iter()
            .filter(|&&k| k != s)
            .map(|&k| features.row(k))
            .collect();
        if convex_weights(&others, features.row(s))?.is_some() {
            kept.remove(i);
        } else {
            i += 1;
        }
    }
    CoreSet::new(features, kept)
}

fn bias_value_noise<R: Rng>(rng: &mut R, mdp: &Mdp, noise: f64) -> Result<(FeatureMap, CoreSet), FeatureError> {
    let v = value_iteration(mdp, 1e-12);
    let n = mdp.num_states();
    let mut phi = Vec::with_capacity(3 * n);
    for s in 0..n {
        phi.push(1.0);
        phi.push(v[s] + noise * rng.random::<f64>());
        phi.push(rng.random::<f64>());
    }
    let f = FeatureMap::new(n, 3, phi)?;
    let core = hull_core(&f)?;
    Ok((f, core))
}

fn hard_aggregation<R: Rng>(rng: &mut R, num_states: usize, clusters: usize) -> Result<(FeatureMap, CoreSet), FeatureError> {
    let mut phi = vec![0.0; num_states * clusters];
    for s in 0..num_states {
        let c = if s < clusters { s } else { rng.random_range(0..clusters) };
        phi[s * clusters + c] = 1.0;
    }
    let f = FeatureMap::new(num_states, clusters, phi)?;
    let core = CoreSet::new(&f, (0..clusters).collect())?;
    Ok((f, core))
}

fn convex_mixture<R: Rng>(
    rng: &mut R,
    num_states: usize,
    core: usize,
    dim: usize,
) -> Result<(FeatureMap, CoreSet), FeatureError> {
    let core_rows: Vec<Vec<f64>> = (0..core)
        .map(|_| {
            std::iter::once(1.0)
                .chain((1..dim).map(|_| rng.random::<f64>()))
                .collect()
        })
        .collect();
    let mut phi = Vec::with_capacity(num_states * dim);
    for s in 0..num_states {
        if s < core {
            phi.extend(&core_rows[s]);
            continue;
        }
        let w: Vec<f64> = (0..core).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        let total: f64 = w.iter().sum();
        for j in 0..dim {
            phi.push(core_rows.iter().zip(&w).map(|(r, wk)| wk / total * r[j]).sum());
        }
    }
    let f = FeatureMap::new(num_states, dim, phi)?;
    let core = CoreSet::new(&f, (0..core).collect())?;
    Ok((f, core))
}

/// Builds features of the given family for `mdp`.
pub fn family_features<R: Rng>(
    rng: &mut R,
    mdp: &Mdp,
    family: &FeatureFamily,
) -> Result<(FeatureMap, CoreSet), FeatureError> {
    let n = mdp.num_states();
    match *family {
        FeatureFamily::Tabular => tabular_features(n),
        FeatureFamily::BiasOnly => bias_only_features(n),
        FeatureFamily::BiasValueNoise { noise } => bias_value_noise(rng, mdp, noise),
        FeatureFamily::HardAggregation { clusters } => hard_aggregation(rng, n, clusters),
        FeatureFamily::ConvexMixture { core, dim } => convex_mixture(rng, n, core, dim),
    }
}

impl InstanceSpec {
    pub fn validate(&self) -> Result<(), GenerateError> {
        let bad = |msg: String| Err(GenerateError::Spec(msg));
        if self.num_states == 0 || self.num_states > MAX_STATES {
            return bad(format!("num_states must be in 1..={MAX_STATES}"));
        }
        if self.num_actions == 0 {
            return bad("num_actions must be positive".into());
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1)", self.gamma));
        }
        if self.branching == Some(0) {
            return bad("branching must be positive".into());
        }
        match self.features {
            FeatureFamily::BiasValueNoise { noise } if !(noise >= 0.0 && noise.is_finite()) => {
                bad(format!("noise {noise} must be a non-negative number"))
            }
            FeatureFamily::HardAggregation { clusters } if clusters == 0 || clusters > self.num_states => {
                bad(format!("clusters must be in 1..={}", self.num_states))
            }
            FeatureFamily::ConvexMixture { core, dim } if core == 0 || core > self.num_states || dim == 0 => {
                bad(format!("core must be in 1..={} and dim positive", self.num_states))
            }
            _ => Ok(()),
        }
    }
}

/// Generates an instance and certifies its core set, retrying with fresh
/// randomness when certification fails.
pub fn generate_instance(spec: &InstanceSpec) -> Result<Instance, GenerateError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut reason = String::new();
    for _ in 0..MAX_ATTEMPTS {
        let mdp = random_mdp(&mut rng, spec.num_states, spec.num_actions, spec.gamma, spec.branching)?;
        let (features, core) = match family_features(&mut rng, &mdp, &spec.features) {
            Ok(pair) => pair,
            Err(e) => {
                reason = e.to_string();
                continue;
            }
        };
        let check = check_core_set(&features, &core)?;
        match check.first_violation {
            None => return Ok(Instance { mdp, features, core }),
            Some(s) => reason = format!("state {s} is outside the hull of the core features"),
        }
    }
    Err(GenerateError::RetriesExhausted {
        attempts: MAX_ATTEMPTS,
        reason,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::epsilon_approx;

    fn spec(n: usize, features: FeatureFamily) -> InstanceSpec {
        InstanceSpec {
            num_states: n,
            num_actions: 2,
            gamma: 0.8,
            features,
            branching: None,
            seed: 7,
        }
    }

    #[test]
    fn tabular_instance() {
        let inst = generate_instance(&spec(4, FeatureFamily::Tabular)).unwrap();
        assert_eq!(inst.features.dim(), 4);
        assert_eq!(inst.core.indices(), &[0, 1, 2, 3]);
        let v = value_iteration(&inst.mdp, 1e-12);
        let (eps, _) = epsilon_approx(&inst.features, &v).unwrap();
        assert!(eps < 1e-9);
    }

    #[test]
    fn noiseless_value_features_represent_v_star() {
        let inst = generate_instance(&spec(10, FeatureFamily::BiasValueNoise { noise: 0.0 })).unwrap();
        let v = value_iteration(&inst.mdp, 1e-12);
        let (eps, _) = epsilon_approx(&inst.features, &v).unwrap();
        assert!(eps <= 1e-7, "ε = {eps}");
    }

    #[test]
    fn hard_aggregation_rows_copy_core_rows() {
        let inst = generate_instance(&spec(9, FeatureFamily::HardAggregation { clusters: 3 })).unwrap();
        for s in 0..9 {
            let row = inst.features.row(s);
            assert!((0..3).any(|k| inst.core.row(k) == row));
        }
    }

    #[test]
    fn convex_mixture_core_set_is_certified() {
        let inst = generate_instance(&spec(12, FeatureFamily::ConvexMixture { core: 4, dim: 3 })).unwrap();
        assert_eq!(inst.core.len(), 4);
        assert!(check_core_set(&inst.features, &inst.core).unwrap().valid);
    }

    #[test]
    fn sparse_rows_have_requested_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mdp = random_mdp(&mut rng, 8, 3, 0.5, Some(2)).unwrap();
        for s in 0..8 {
            for a in 0..3 {
                let support = mdp.transition_row(s, a).iter().filter(|&&p| p > 0.0).count();
                assert!((1..=2).contains(&support));
            }
        }
    }

    #[test]
    fn hull_core_keeps_interval_endpoints() {
        let xs = [0.3, 0.0, 0.7, 1.0, 0.5];
        let phi: Vec<f64> = xs.iter().flat_map(|&x| [1.0, x]).collect();
        let f = FeatureMap::new(5, 2, phi).unwrap();
        assert_eq!(hull_core(&f).unwrap().indices(), &[1, 3]);
    }

    #[test]
    fn same_seed_same_instance() {
        let s = spec(6, FeatureFamily::BiasValueNoise { noise: 0.3 });
        let a = generate_instance(&s).unwrap();
        let b = generate_instance(&s).unwrap();
        assert_eq!(a.mdp.to_json(), b.mdp.to_json());
        assert_eq!(a.features, b.features);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(generate_instance(&spec(0, FeatureFamily::Tabular)).is_err());
        assert!(generate_instance(&spec(3, FeatureFamily::HardAggregation { clusters: 4 })).is_err());
        let mut s = spec(3, FeatureFamily::Tabular);
        s.gamma = 1.0;
        assert!(generate_instance(&s).is_err());
    }
}
