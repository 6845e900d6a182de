//! Off-policy linear policy evaluation: finite MDPs and benchmarks,
//! independence-sampling buffers, gradient-TD learners, and the
//! convergence-rate constants and checks for the NEU objective.

pub mod analysis;
pub mod buffers;
pub mod envs;
pub mod learners;
pub mod linalg;
pub mod mdp;

pub use analysis::{Evaluator, Metric, ProblemConstants};
pub use buffers::{BatchPair, NotReady, Routing, TwinBuffers};
pub use envs::{Benchmark, BenchmarkName};
pub use learners::{Algorithm, Hyperparams, Learner, LearnerState, StepInput, StepOutcome};
pub use linalg::{Matrix, Vector};
pub use mdp::{ExpectedMatrices, FeatureMap, MdpError, MdpModel, Policy, Transition};
