//! The identification problem: data generation, the prediction-error
//! objective and its gradient, entrywise prior-knowledge constraints, and
//! evaluation metrics.

mod constraints;
mod eig;
mod objective;
mod problem;
mod random;
mod trajectory;

pub use constraints::{
    BoxMargins, ConstraintSpec, ConstraintValues, EntryEquality, OneBox, TwoBox,
    sample_index_sets,
};
pub use eig::{EigReport, eig_rel_error, sorted_eigenvalues, spectral_abscissa};
pub use constraints::{ConstraintGradients, constraint_gradients, constraint_values, max_violation};
pub use objective::{
    assemble_a, entry_gradient_blocks, euclidean_gradient_at_matrix, euclidean_gradient_blocks,
    objective_gradient, objective_value, objective_value_at_matrix,
};
pub use problem::{EnloProblem, Modeling, ProblemInstance, RnloProblem};
pub use random::{random_initial_point, random_stable_triple, random_unit_box_vector};
pub use trajectory::{Trajectory, add_noise, scale_trajectory, simulate_euler, simulate_true};
