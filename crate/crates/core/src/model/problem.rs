use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{ProductPoint, build_chart, manifold_dim, retract};
use crate::model::constraints::{ConstraintSpec, constraint_gradients, constraint_values};
use crate::model::objective::{objective_gradient, objective_value};
use crate::model::trajectory::Trajectory;
use crate::solver::{FlatConstraintValues, Linearization, Problem};

/// Which of the three formulations an instance is solved under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modeling {
    /// Constrained minimization over the stability-preserving product space.
    Rnlo,
    /// The same cost and constraints over the flat space of system matrices;
    /// nothing enforces stability.
    Enlo,
    /// Unconstrained minimization over the product space; stability holds
    /// but the prior knowledge is ignored.
    Ucro,
}

/// One identification task: the data, the prior knowledge, and the chosen
/// formulation.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub trajectory: Trajectory,
    pub constraints: ConstraintSpec,
    pub modeling: Modeling,
}

/// The identification problem posed on the product space `(J, R, Q)`. With an
/// empty constraint specification this is the unconstrained formulation.
#[derive(Debug, Clone)]
pub struct RnloProblem {
    traj: Trajectory,
    spec: ConstraintSpec,
}

impl RnloProblem {
    pub fn new(traj: Trajectory, spec: ConstraintSpec) -> Result<Self> {
        spec.validate(traj.state_dim())?;
        Ok(Self { traj, spec })
    }

    pub fn unconstrained(traj: Trajectory) -> Self {
        Self {
            traj,
            spec: ConstraintSpec::default(),
        }
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.traj
    }

    pub fn spec(&self) -> &ConstraintSpec {
        &self.spec
    }
}

impl Problem for RnloProblem {
    type Point = ProductPoint;

    fn dim(&self) -> usize {
        manifold_dim(self.traj.state_dim())
    }

    fn cost(&self, x: &ProductPoint) -> Result<f64> {
        objective_value(x, &self.traj)
    }

    fn constraint_values(&self, x: &ProductPoint) -> Result<FlatConstraintValues> {
        let v = constraint_values(x, &self.spec)?;
        Ok(FlatConstraintValues {
            ineq: v.flat_ineq(),
            eq: v.flat_eq(),
        })
    }

    fn linearize(&self, x: &ProductPoint) -> Result<Linearization> {
        let chart = build_chart(x);
        let grad = chart.to_coords(&objective_gradient(x, &self.traj)?)?;
        let values = constraint_values(x, &self.spec)?;
        let grads = constraint_gradients(x, &self.spec)?;
        let ineq_grads = grads
            .ineq
            .iter()
            .map(|t| chart.to_coords(t))
            .collect::<Result<Vec<_>>>()?;
        let eq_grads = grads
            .eq
            .iter()
            .map(|t| chart.to_coords(t))
            .collect::<Result<Vec<_>>>()?;
        Ok(Linearization {
            grad,
            ineq_values: values.flat_ineq(),
            ineq_grads,
            eq_values: values.flat_eq(),
            eq_grads,
        })
    }

    fn retract(&self, x: &ProductPoint, z: &DVector<f64>) -> Result<ProductPoint> {
        let chart = build_chart(x);
        retract(x, &chart.from_coords(z)?)
    }

    fn on_manifold(&self, x: &ProductPoint) -> bool {
        x.dim() == self.traj.state_dim()
            && x.r.matrix().clone().cholesky().is_some()
            && x.q.matrix().clone().cholesky().is_some()
    }

    fn point_norm(&self, x: &ProductPoint) -> f64 {
        (x.j.matrix().norm_squared()
            + x.r.matrix().norm_squared()
            + x.q.matrix().norm_squared())
        .sqrt()
    }
}

/// The flat-space formulation: the decision variable is the system matrix
/// itself, the chart is the entry basis (column-major), and a step is plain
/// addition.
#[derive(Debug, Clone)]
pub struct EnloProblem {
    traj: Trajectory,
    spec: ConstraintSpec,
}

impl EnloProblem {
    pub fn new(traj: Trajectory, spec: ConstraintSpec) -> Result<Self> {
        spec.validate(traj.state_dim())?;
        Ok(Self { traj, spec })
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.traj
    }

    pub fn spec(&self) -> &ConstraintSpec {
        &self.spec
    }

    fn flat(&self, i: usize, j: usize) -> usize {
        j * self.traj.state_dim() + i
    }
}

impl Problem for EnloProblem {
    type Point = DMatrix<f64>;

    fn dim(&self) -> usize {
        let n = self.traj.state_dim();
        n * n
    }

    fn cost(&self, a: &DMatrix<f64>) -> Result<f64> {
        crate::model::objective::objective_value_at_matrix(a, &self.traj)
    }

    fn constraint_values(&self, a: &DMatrix<f64>) -> Result<FlatConstraintValues> {
        let v = self.spec.values_at_matrix(a)?;
        Ok(FlatConstraintValues {
            ineq: v.flat_ineq(),
            eq: v.flat_eq(),
        })
    }

    fn linearize(&self, a: &DMatrix<f64>) -> Result<Linearization> {
        let n = self.traj.state_dim();
        if a.nrows() != n || a.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: a.nrows().max(a.ncols()),
                context: "system matrix",
            });
        }
        let g = crate::model::objective::euclidean_gradient_at_matrix(a, &self.traj)?;
        let grad = DVector::from_column_slice(g.as_slice());
        let values = self.spec.values_at_matrix(a)?;
        let dim = self.dim();
        let unit = |idx: usize, scale: f64| {
            let mut v = DVector::zeros(dim);
            v[idx] = scale;
            v
        };
        let mut ineq_grads = Vec::with_capacity(self.spec.num_ineq_rows());
        for e in &self.spec.one_box {
            ineq_grads.push(unit(self.flat(e.i, e.j), -1.0));
            ineq_grads.push(unit(self.flat(e.i, e.j), 1.0));
        }
        for e in &self.spec.two_box {
            ineq_grads.push(unit(self.flat(e.i, e.j), -1.0));
            ineq_grads.push(unit(self.flat(e.i, e.j), 1.0));
            let dev = a[(e.i, e.j)] - e.center;
            ineq_grads.push(unit(self.flat(e.i, e.j), -2.0 * dev));
        }
        let eq_grads = self
            .spec
            .equality
            .iter()
            .map(|e| unit(self.flat(e.i, e.j), 1.0))
            .collect();
        Ok(Linearization {
            grad,
            ineq_values: values.flat_ineq(),
            ineq_grads,
            eq_values: values.flat_eq(),
            eq_grads,
        })
    }

    fn retract(&self, a: &DMatrix<f64>, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: z.len(),
                context: "flat-space step",
            });
        }
        let n = self.traj.state_dim();
        let step = DMatrix::from_column_slice(n, n, z.as_slice());
        Ok(a + step)
    }

    fn on_manifold(&self, _a: &DMatrix<f64>) -> bool {
        true
    }

    fn point_norm(&self, a: &DMatrix<f64>) -> f64 {
        a.norm()
    }
}
