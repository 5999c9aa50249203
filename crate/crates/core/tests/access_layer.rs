//! The planner sees the problem only through `Simulator` and `FeatureRows`.
//! These wrappers record every access and check that only the planning state,
//! the core states and returned next states are touched.

mod common;

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::sync::Arc;

use common::instance;
use coreplan::corestomp::{run_corestomp, FeatureRows, PlannerConfig, SaddleLayout};
use coreplan::generate::FeatureFamily;
use coreplan::simulator::{GenerativeOracle, SimError, Simulator};
use coreplan::FeatureMap;

struct RecordingSim<S> {
    inner: S,
    queried: BTreeSet<usize>,
    returned: BTreeSet<usize>,
}

impl<S: Simulator> Simulator for RecordingSim<S> {
    fn num_actions(&self) -> usize {
        self.inner.num_actions()
    }

    fn simulate(&mut self, s: usize, a: usize) -> Result<(usize, f64), SimError> {
        let out = self.inner.simulate(s, a)?;
        self.queried.insert(s);
        self.returned.insert(out.0);
        Ok(out)
    }

    fn query_count(&self) -> u64 {
        self.inner.query_count()
    }
}

struct RecordingRows<'a> {
    inner: &'a FeatureMap,
    read: RefCell<BTreeSet<usize>>,
}

impl FeatureRows for RecordingRows<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn row(&self, s: usize) -> &[f64] {
        self.read.borrow_mut().insert(s);
        self.inner.row(s)
    }
}

/// A simulator with no transition table: a fixed cycle over `n` states.
struct Cycle {
    n: usize,
    calls: u64,
}

impl Simulator for Cycle {
    fn num_actions(&self) -> usize {
        2
    }

    fn simulate(&mut self, s: usize, a: usize) -> Result<(usize, f64), SimError> {
        if s >= self.n || a >= 2 {
            return Err(SimError::InvalidPair { state: s, action: a });
        }
        self.calls += 1;
        Ok(((s + 1 + a) % self.n, if a == 0 { 0.5 } else { -0.5 }))
    }

    fn query_count(&self) -> u64 {
        self.calls
    }
}

#[test]
fn planner_touches_only_allowed_states() {
    for k in 0..6u64 {
        let inst = instance(12, 2, 0.7, FeatureFamily::ConvexMixture { core: 3, dim: 3 }, 40 + k);
        let s0 = 11 - k as usize;
        let layout = SaddleLayout::new(s0, inst.core.indices().to_vec(), 2, 0.7).unwrap();
        let mut sim = RecordingSim {
            inner: GenerativeOracle::new(Arc::new(inst.mdp.clone()), k),
            queried: BTreeSet::new(),
            returned: BTreeSet::new(),
        };
        let rows = RecordingRows { inner: &inst.features, read: RefCell::new(BTreeSet::new()) };
        let config = PlannerConfig::theorem_defaults(&layout, 200, k);
        run_corestomp(&mut sim, &rows, &layout, &config).unwrap();

        let allowed: BTreeSet<usize> = std::iter::once(s0).chain(inst.core.indices().iter().copied()).collect();
        assert!(sim.queried.is_subset(&allowed), "queried {:?}, allowed {:?}", sim.queried, allowed);
        let readable: BTreeSet<usize> = allowed.union(&sim.returned).copied().collect();
        let read = rows.read.into_inner();
        assert!(read.is_subset(&readable), "read {read:?}, readable {readable:?}");
        assert!(read.len() < inst.features.num_states() || readable.len() == inst.features.num_states());
    }
}

#[test]
fn planner_runs_on_a_simulator_without_a_model() {
    let phi: Vec<f64> = (0..6).flat_map(|s| [1.0, (s % 2) as f64]).collect();
    let features = FeatureMap::new(6, 2, phi).unwrap();
    let layout = SaddleLayout::new(3, vec![0, 1], 2, 0.5).unwrap();
    let config = PlannerConfig::theorem_defaults(&layout, 50, 0);
    let mut sim = Cycle { n: 6, calls: 0 };
    let out = run_corestomp(&mut sim, &features, &layout, &config).unwrap();
    assert_eq!(out.report.query_count, 2 * 50 * 7);
    assert!(out.pi_hat[0] > out.pi_hat[1]);
}
