//! Exact linear-Gaussian realization of the natural process.

pub mod condition;
pub mod field;
pub mod grid;
pub mod identities;
pub mod law;
pub mod plan;
pub mod setup;

pub use condition::{conditional_coeffs, ConditionError, Conditioning};
pub use field::{build_field, build_field_with, GaussianField};
pub use grid::{GridError, SampleGrid, SamplePoint};
pub use identities::{
    cell_covariance_formula, cell_formula_values, check_time_markov, fig2_inconsistency, path_law_deviation,
    time_markov_defect, tower_invariance, InvarianceReport, MarkovError,
};
pub use law::Law;
pub use plan::{BridgeOrder, ConstructionPlan, FieldError, Location, PointId, PointTable};
pub use setup::{AddressError, NaturalSetup, PointAddress};
