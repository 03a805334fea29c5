use nalgebra::DVector;

use crate::error::Result;

/// Constraint values at a point, flattened in row-enumeration order.
#[derive(Debug, Clone)]
pub struct FlatConstraintValues {
    pub ineq: DVector<f64>,
    pub eq: DVector<f64>,
}

impl FlatConstraintValues {
    pub fn empty() -> Self {
        Self {
            ineq: DVector::zeros(0),
            eq: DVector::zeros(0),
        }
    }

    /// `max{0, g...}` over inequality rows together with `|h|` over equality
    /// rows.
    pub fn max_violation(&self) -> f64 {
        let gi = self.ineq.iter().fold(0.0f64, |acc, &v| acc.max(v));
        let he = self.eq.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
        gi.max(he)
    }

    /// `sum max{0, g} + sum |h|`, the violation term of the l1 merit
    /// function.
    pub fn violation_sum(&self) -> f64 {
        self.ineq.iter().map(|&v| v.max(0.0)).sum::<f64>()
            + self.eq.iter().map(|&v| v.abs()).sum::<f64>()
    }
}

/// First-order model of a problem at one point, expressed in the orthonormal
/// chart there: the cost gradient and one `(gradient, value)` row per
/// constraint.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub grad: DVector<f64>,
    pub ineq_values: DVector<f64>,
    pub ineq_grads: Vec<DVector<f64>>,
    pub eq_values: DVector<f64>,
    pub eq_grads: Vec<DVector<f64>>,
}

/// A constrained minimization problem presented to the solver through
/// per-point orthonormal coordinates. Because the chart is orthonormal, the
/// coordinate 2-norm of the gradient equals its Riemannian norm and the
/// identity matrix is a faithful metric Hessian surrogate.
pub trait Problem {
    type Point: Clone;

    /// Coordinate dimension of the tangent space.
    fn dim(&self) -> usize;

    fn cost(&self, x: &Self::Point) -> Result<f64>;

    fn constraint_values(&self, x: &Self::Point) -> Result<FlatConstraintValues>;

    fn linearize(&self, x: &Self::Point) -> Result<Linearization>;

    /// Moves away from `x` along the coordinate step `z` and returns the new
    /// point on the search space.
    fn retract(&self, x: &Self::Point, z: &DVector<f64>) -> Result<Self::Point>;

    /// Whether the point satisfies the search-space invariants. Points
    /// produced by `retract` always do; the flag feeds the
    /// manifold-violation indicator of the KKT residual.
    fn on_manifold(&self, x: &Self::Point) -> bool;

    /// A norm of the point itself, recorded for boundedness monitoring.
    fn point_norm(&self, x: &Self::Point) -> f64;
}
