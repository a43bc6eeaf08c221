//! Energy-quadratization time steppers with a relaxation step for
//! phase-field gradient flows on periodic rectangles.

pub mod driver;
pub mod error;
pub mod linsolve;
pub mod models;
pub mod relax;
pub mod spectral;
pub mod stepper;

pub use error::{Error, Result};
pub use models::{build_ac, build_ch, build_mbe, build_pfc, ModelKind, ModelSpec};
pub use relax::{relax_bdf2, relax_cn, relax_fixed, solve_xi, RelaxCoeffs};
pub use spectral::{make_grid, Grid, RealField, VectorField};
pub use stepper::{init_state, step_bdf2, step_cn, SchemeKind, State, StepResult, Stepper};
