//! Simulator and planner for budget-constrained data allocation under the
//! coverage-density trade-off.
//!
//! A synthetic conditional vector field `f*(z, p, t) = g(p) + M z + v t` with
//! certified Lipschitz constants stands in for the demonstrator. Policies are
//! fitted from noisy repeated observations at anchor conditions and queried
//! through a nearest-anchor (or kernel) rule, which lets every error bound of
//! the allocation analysis be checked numerically:
//!
//! * [`space`]: condition domain, anchor layouts, fill distance, regions
//! * [`field`]: ground-truth fields and observation noise
//! * [`estimation`]: per-anchor estimators and surrogate policies
//! * [`allocation`]: closed-form bounds, optimal anchor counts, budget splits
//! * [`rollout`]: fixed-step integration, Grönwall bound, region success rates
//! * [`mining`]: teacher-forced deviation scoring and boundary selection
//! * [`pipeline`]: two-stage anchor/boundary orchestration and baselines
//! * [`experiments`]: seeded runners, config, CSV and summary output

pub mod allocation;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod field;
pub mod mining;
pub mod pipeline;
pub mod rng;
pub mod rollout;
pub mod space;
pub mod stats;

pub use error::{Error, Result};
