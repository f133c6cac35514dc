//! Semantically shaped costmaps for grid path planning.
//!
//! A scenario is rasterized into a labelled occupancy grid, each obstacle gets
//! an exact Euclidean distance field and a repulsive potential, a text sensor
//! scores how dangerous each obstacle is given an operator prompt, and those
//! scores are fused into Beta posteriors whose means scale the potentials.
//! The planner is a two-queue multi-heuristic A* over the shaped field.

pub mod distance_field;
pub mod fusion;
pub mod metrics;
pub mod num;
pub mod planner;
pub mod potential_field;
pub mod scenario;
pub mod sensor;
pub mod session;

pub use distance_field::{FieldDump, FieldError, ScalarField};
pub use fusion::{BetaState, DangerReading, FusionError, FusionParams, PosteriorTrack};
pub use metrics::PathMetrics;
pub use num::Scalar;
pub use planner::{Connectivity, PlanError, PlanResult, PlannerParams};
pub use potential_field::PotentialStack;
pub use scenario::{load_scenario, rasterize, Cell, Scenario, ScenarioError, SemanticGrid};
pub use sensor::{
    BackendKind, FixtureBackend, FixtureRecord, HttpBackend, HttpConfig, MockBackend, SensorBackend, SensorError,
    SensorQuery, SensorResponse,
};
pub use session::{ComparisonTable, FieldKind, PromptVariant, Session, SessionError};

pub type Field = ScalarField<f64>;
pub type Field32 = ScalarField<f32>;
pub type Beta = BetaState<f64>;
pub type Stack = PotentialStack<f64>;
pub type Plan = PlanResult<f64>;
pub type Params = PlannerParams<f64>;
pub type Fusion = FusionParams<f64>;
