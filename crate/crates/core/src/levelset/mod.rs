//! Level-set reachability for the closed-loop two-car system.

pub mod field;
pub mod grid;
pub mod hamiltonian;
pub mod io;
pub mod slice;
pub mod solver;

pub use field::{
    initial_payoff, SafetyCriterion, SafetyVerdict, SolveSetup, SolveStats, ValueField, DEFAULT_MIN_HEADWAY,
};
pub use grid::{Axis, GridSpec};
pub use hamiltonian::{hamiltonian, project_physical, worst_case_disturbance};
pub use io::{read_vfield, write_vfield};
pub use slice::{extract_slice, Polyline};
pub use solver::{solve, solve_with_observer, FaceRule, Scheme, SolverOptions, Sweep};
