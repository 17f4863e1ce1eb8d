//! Multi-objective quadratic assignment: instance handling, a memetic
//! island-model solver with an NSGA-II baseline, and quality metrics.
//!
//! ```
//! use mqap::instance::{generate_uniform, InstanceSpec};
//! use mqap::evaluation::evaluate_full;
//!
//! let inst = generate_uniform(&InstanceSpec::new(6, 2, 0.0, 1)).unwrap();
//! let cost = evaluate_full(&inst, &[0, 1, 2, 3, 4, 5]).unwrap();
//! assert_eq!(cost.len(), 2);
//! ```

pub mod archive;
pub mod clock;
pub mod evaluation;
pub mod experiment;
pub mod genetics;
pub mod instance;
pub mod island;
pub mod localsearch;
pub mod metrics;
pub mod ranking;
