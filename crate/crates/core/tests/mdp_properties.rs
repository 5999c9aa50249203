use coreplan::generate::random_mdp;
use coreplan::mdp::{occupancy_measure, policy_evaluation, value_iteration, value_loss, Policy};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_policy<R: Rng>(rng: &mut R, s: usize, a: usize) -> Policy {
    let mut probs = Vec::with_capacity(s * a);
    for _ in 0..s {
        let w: Vec<f64> = (0..a).map(|_| rng.random::<f64>() + 1e-3).collect();
        let total: f64 = w.iter().sum();
        probs.extend(w.iter().map(|x| x / total));
    }
    Policy::new(s, a, probs).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn value_iteration_bellman_residual(seed in any::<u64>(), s in 1usize..15, a in 1usize..4, gamma in 0.0f64..0.95) {
        let mdp = random_mdp(&mut ChaCha8Rng::seed_from_u64(seed), s, a, gamma, None).unwrap();
        let tol = 1e-8;
        let v = value_iteration(&mdp, tol);
        let tv = mdp.bellman_optimality(v.as_slice());
        let residual = v.as_slice().iter().zip(&tv).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(residual <= tol * (1.0 + gamma));
    }

    #[test]
    fn occupancy_satisfies_flow_and_mass(seed in any::<u64>(), s in 1usize..15, a in 1usize..4, gamma in 0.0f64..0.95) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mdp = random_mdp(&mut rng, s, a, gamma, None).unwrap();
        let policy = random_policy(&mut rng, s, a);
        let start = rng.random_range(0..s);
        let mu = occupancy_measure(&mdp, &policy, start, 1e-8).unwrap();
        prop_assert!((mu.iter().sum::<f64>() - 1.0 / (1.0 - gamma)).abs() <= 1e-6);
        for t in 0..s {
            let mut flow = if t == start { 1.0 } else { 0.0 };
            for (i, m) in mu.iter().enumerate() {
                let p = mdp.transition_row(i / a, i % a)[t];
                let e = if i / a == t { 1.0 } else { 0.0 };
                flow += m * (gamma * p - e);
            }
            prop_assert!(flow.abs() <= 1e-6, "flow residual {} at state {}", flow, t);
        }
    }

    #[test]
    fn occupancy_value_matches_policy_evaluation(seed in any::<u64>(), s in 1usize..12, a in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mdp = random_mdp(&mut rng, s, a, 0.8, Some(3)).unwrap();
        let policy = random_policy(&mut rng, s, a);
        let v = policy_evaluation(&mdp, &policy, 1e-11);
        for start in 0..s {
            let mu = occupancy_measure(&mdp, &policy, start, 1e-11).unwrap();
            let value: f64 = mu.iter().zip(mdp.rewards()).map(|(m, r)| m * r).sum();
            prop_assert!((value - v[start]).abs() <= 1e-8);
        }
    }
}

#[test]
fn performance_difference_bound_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 0..100 {
        let s = rng.random_range(1..=20);
        let a = rng.random_range(1..=4);
        let gamma = [0.3, 0.6, 0.9][k % 3];
        let mdp = random_mdp(&mut rng, s, a, gamma, None).unwrap();
        let policy = random_policy(&mut rng, s, a);
        let loss = value_loss(&mdp, &policy, 1e-10);
        assert!(loss.loss >= -1e-8);
        assert!(loss.loss <= loss.bound(gamma) + 1e-7, "pair {k}: {} > {}", loss.loss, loss.bound(gamma));
    }
}
