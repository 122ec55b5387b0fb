//! Discrete Kalman filtering for perfect-model linear systems, QR-method
//! Lyapunov analysis, and diagnostics that measure how the forecast and
//! analysis error covariances collapse onto the span of the
//! unstable-neutral backward Lyapunov vectors.
//!
//! The crate is organized around a small pipeline:
//!
//! * [`system`] — seeded generation of bounded operator sequences
//!   `A_n, H_n, Q_n` and deterministic truth/observation trajectories;
//! * [`kalman`] — the covariance and mean recursions, the Kalman gain,
//!   and the stabilized closure products used by the factorized form of
//!   the analysis covariance;
//! * [`lyapunov`] — Lyapunov exponents and backward/forward bases via the
//!   QR method, with small-window dense cross-checks;
//! * [`gramian`] — observability/controllability Gramians;
//! * [`diagnostics`] — per-step rank and subspace-restriction metrics;
//! * [`spectral`] — autonomous-case analysis: invariant subspaces via
//!   ordered real Schur form, matrix-power singular value limits, and
//!   Jordan-block probes.
//!
//! All operations are pure functions of their inputs; results are
//! immutable values that are safe to share across threads.

pub mod diagnostics;
pub mod error;
pub mod gramian;
pub mod kalman;
pub mod linalg;
pub mod lyapunov;
mod schur;
pub mod spectral;
pub mod system;

pub use error::{Error, Result};
pub use linalg::{Matrix, SortedSpectrum, SvdFactors, Vector};
pub use system::{
    Delta0Spec, ExplicitOperators, GeneratorKind, OperatorBounds, StepOperators, SystemSpec,
    Trajectory,
};
pub use kalman::{ClosureAccumulator, FilterRun, FilterState, StepMetrics};
pub use lyapunov::{LyapunovResult, OseledetsSnapshot};
pub use gramian::{GramianKind, GramianReport, NoiseCoupling, ObservabilityScan};
pub use diagnostics::DiagnosticsFrame;
pub use spectral::{AutonomousAnalysis, AutonomousNullspace, JordanBlockProbe, PowerSample};
