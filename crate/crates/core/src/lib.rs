//! Planning in discounted MDPs with core states and linear features.
//!
//! The crate has two halves. The exact half works on a tabular [`mdp::Mdp`]
//! and solves linear programs directly: the core-state LP, its relaxed ALP
//! counterpart, and the diagnostic programs used to measure approximation
//! error. The stochastic half ([`corestomp`]) solves the same problem through
//! a generative simulator with stochastic mirror-prox and never looks at the
//! transition table.
//!
//! ```
//! use std::sync::Arc;
//!
//! use coreplan::corelp::{build_corelp, solve_corelp_exact};
//! use coreplan::corestomp::{run_corestomp, PlannerConfig, SaddleLayout};
//! use coreplan::generate::{generate_instance, FeatureFamily, InstanceSpec};
//! use coreplan::GenerativeOracle;
//!
//! let inst = generate_instance(&InstanceSpec {
//!     num_states: 8,
//!     num_actions: 2,
//!     gamma: 0.5,
//!     features: FeatureFamily::HardAggregation { clusters: 3 },
//!     branching: None,
//!     seed: 1,
//! })
//! .unwrap();
//!
//! let problem = build_corelp(&inst.mdp, &inst.features, &inst.core, 0).unwrap();
//! let (_v_dagger, _lambda) = solve_corelp_exact(&problem).unwrap();
//!
//! let layout = SaddleLayout::from_problem(&problem);
//! let config = PlannerConfig::theorem_defaults(&layout, 100, 0);
//! let mut oracle = GenerativeOracle::new(Arc::new(inst.mdp), 0);
//! let out = run_corestomp(&mut oracle, &inst.features, &layout, &config).unwrap();
//! assert_eq!(out.pi_hat.len(), 2);
//! ```

pub mod bounds;
pub mod corelp;
pub mod corestomp;
pub mod features;
pub mod generate;
pub mod lp;
pub mod mdp;
pub mod simulator;

pub use corelp::{CoreLpProblem, DualVector};
pub use corestomp::{PlannerConfig, SaddleIterate, SaddleLayout, StepGeometry};
pub use features::{CoreSet, FeatureMap};
pub use mdp::{Mdp, Policy, ValueFunction};
pub use simulator::{GenerativeOracle, Simulator};
