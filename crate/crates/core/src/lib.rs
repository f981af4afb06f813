//! Pseudo-spectral laboratory for the energy-critical complex Ginzburg-Landau
//! family `v_t = e^{i theta}(laplacian v - mu |v|^{4/(d-2)} v)` on a periodic
//! box, covering the dissipative interior of the angle range and the heat and
//! Schrodinger endpoints.

pub mod config;
pub mod diagnostics;
pub mod fft;
pub mod grid;
pub mod ground_state;
pub mod io;
pub mod limits;
pub mod quadrature;
pub mod semiflow;

pub use diagnostics::DiagnosticRecord;
pub use grid::{make_grid, Complex64, Field, GridSpec};
pub use ground_state::{ground_state_constants, GroundStateConstants};
pub use semiflow::{evolve, DealiasFactor, EquationSpec, StepperConfig, Trajectory};
