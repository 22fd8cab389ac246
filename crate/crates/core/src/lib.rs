//! Hierarchical secure aggregation over prime fields.
//!
//! Users in clusters send linearly coded, key-masked gradient pieces to
//! their relay; relays forward a fixed combination to the server, which
//! recovers only the sum. The crate builds the code ([`builder`]), runs
//! rounds with dropouts ([`runtime`]), and audits decodability and
//! leakage exactly ([`audit`]).

pub mod audit;
pub mod builder;
pub mod combin;
pub mod dump;
pub mod ff;
pub mod matrix;
pub mod reference;
pub mod runtime;
pub mod topology;

pub use builder::{build_scheme, BuildError, BuildOptions, Scheme};
pub use ff::{Fe, FieldRng, PrimeField, DEFAULT_MODULUS};
pub use matrix::Matrix;
pub use topology::{Assignment, DerivedParams, Rate, RateReport, Scenario};
