use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{ProductPoint, TangentVector, riem_grad_from_euclidean};
use crate::model::objective::{assemble_a, entry_gradient_blocks};

/// Entrywise interval prior: `lower <= A_ij <= upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneBox {
    pub i: usize,
    pub j: usize,
    pub lower: f64,
    pub upper: f64,
}

/// Entrywise interval prior with an excluded central band: the entry lies in
/// `[lower, center - half_gap] U [center + half_gap, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoBox {
    pub i: usize,
    pub j: usize,
    pub lower: f64,
    pub upper: f64,
    pub center: f64,
    pub half_gap: f64,
}

/// Exact knowledge of an entry: `A_ij = target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryEquality {
    pub i: usize,
    pub j: usize,
    pub target: f64,
}

/// Index sets and bounds for entrywise prior knowledge on the system matrix.
///
/// Constraint rows are enumerated in a fixed order shared by values,
/// gradients, and Lagrange multipliers: for each 1-box entry the lower then
/// the upper row; for each 2-box entry the lower, upper, then band row; then
/// one row per equality entry.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    #[serde(default)]
    pub one_box: Vec<OneBox>,
    #[serde(default)]
    pub two_box: Vec<TwoBox>,
    #[serde(default)]
    pub equality: Vec<EntryEquality>,
}

/// Values of every constraint family at a fixed system matrix. A point is
/// feasible iff all inequality families are `<= 0` and all equality values
/// are `0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintValues {
    /// `-A_ij + lower`, 1-box entries then 2-box entries.
    pub lower: Vec<f64>,
    /// `A_ij - upper`, same order.
    pub upper: Vec<f64>,
    /// `-(A_ij - center)^2 + half_gap^2`, 2-box entries.
    pub band: Vec<f64>,
    /// `A_ij - target`, equality entries.
    pub equality: Vec<f64>,
    one_box_count: usize,
}

impl ConstraintValues {
    /// Inequality values in enumeration order.
    pub fn flat_ineq(&self) -> DVector<f64> {
        let n1 = self.one_box_count;
        let n2 = self.band.len();
        let mut out = Vec::with_capacity(2 * n1 + 3 * n2);
        for k in 0..n1 {
            out.push(self.lower[k]);
            out.push(self.upper[k]);
        }
        for k in 0..n2 {
            out.push(self.lower[n1 + k]);
            out.push(self.upper[n1 + k]);
            out.push(self.band[k]);
        }
        DVector::from_vec(out)
    }

    /// Equality values in enumeration order.
    pub fn flat_eq(&self) -> DVector<f64> {
        DVector::from_vec(self.equality.clone())
    }

    /// `max{0, g...}` over inequality rows, together with `|h|` over
    /// equality rows.
    pub fn max_violation(&self) -> f64 {
        let ineq = self
            .lower
            .iter()
            .chain(self.upper.iter())
            .chain(self.band.iter())
            .fold(0.0f64, |acc, &v| acc.max(v));
        let eq = self.equality.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
        ineq.max(eq).max(0.0)
    }
}

/// Gradients of every constraint row as tangent vectors, aligned with the
/// row enumeration of [`ConstraintValues::flat_ineq`] / `flat_eq`.
#[derive(Debug, Clone)]
pub struct ConstraintGradients {
    pub ineq: Vec<TangentVector>,
    pub eq: Vec<TangentVector>,
}

impl ConstraintSpec {
    pub fn is_empty(&self) -> bool {
        self.one_box.is_empty() && self.two_box.is_empty() && self.equality.is_empty()
    }

    pub fn num_ineq_rows(&self) -> usize {
        2 * self.one_box.len() + 3 * self.two_box.len()
    }

    pub fn num_eq_rows(&self) -> usize {
        self.equality.len()
    }

    /// Checks index bounds, disjointness of the 1-box and 2-box sets, bound
    /// ordering, and band containment.
    pub fn validate(&self, n: usize) -> Result<()> {
        let check_idx = |i: usize, j: usize| -> Result<()> {
            if i >= n || j >= n {
                return Err(Error::InvalidConstraint(format!(
                    "index ({i},{j}) out of range for n = {n}"
                )));
            }
            Ok(())
        };
        for e in &self.one_box {
            check_idx(e.i, e.j)?;
            if !(e.lower < e.upper) {
                return Err(Error::InvalidConstraint(format!(
                    "1-box ({},{}) needs lower < upper, got [{}, {}]",
                    e.i, e.j, e.lower, e.upper
                )));
            }
        }
        for e in &self.two_box {
            check_idx(e.i, e.j)?;
            if !(e.lower < e.upper) {
                return Err(Error::InvalidConstraint(format!(
                    "2-box ({},{}) needs lower < upper",
                    e.i, e.j
                )));
            }
            if !(e.half_gap > 0.0) {
                return Err(Error::InvalidConstraint(format!(
                    "2-box ({},{}) needs half_gap > 0",
                    e.i, e.j
                )));
            }
            if !(e.center - e.half_gap > e.lower && e.center + e.half_gap < e.upper) {
                return Err(Error::InvalidConstraint(format!(
                    "2-box ({},{}) band [{}, {}] not inside ({}, {})",
                    e.i,
                    e.j,
                    e.center - e.half_gap,
                    e.center + e.half_gap,
                    e.lower,
                    e.upper
                )));
            }
        }
        for e in &self.equality {
            check_idx(e.i, e.j)?;
        }
        for a in &self.one_box {
            for b in &self.two_box {
                if a.i == b.i && a.j == b.j {
                    return Err(Error::InvalidConstraint(format!(
                        "entry ({},{}) appears in both 1-box and 2-box sets",
                        a.i, a.j
                    )));
                }
            }
        }
        Ok(())
    }

    /// Evaluates every constraint family at a fixed matrix.
    pub fn values_at_matrix(&self, a: &DMatrix<f64>) -> Result<ConstraintValues> {
        let n = a.nrows();
        self.validate(n)?;
        let mut lower = Vec::with_capacity(self.one_box.len() + self.two_box.len());
        let mut upper = Vec::with_capacity(lower.capacity());
        let mut band = Vec::with_capacity(self.two_box.len());
        for e in &self.one_box {
            let v = a[(e.i, e.j)];
            lower.push(-v + e.lower);
            upper.push(v - e.upper);
        }
        for e in &self.two_box {
            let v = a[(e.i, e.j)];
            lower.push(-v + e.lower);
            upper.push(v - e.upper);
            let dev = v - e.center;
            band.push(-dev * dev + e.half_gap * e.half_gap);
        }
        let equality = self
            .equality
            .iter()
            .map(|e| a[(e.i, e.j)] - e.target)
            .collect();
        Ok(ConstraintValues {
            lower,
            upper,
            band,
            equality,
            one_box_count: self.one_box.len(),
        })
    }

    /// Builds a specification around a reference matrix so that the matrix
    /// itself is strictly feasible. Each selected entry gets the window
    /// `value -+ (rel |value| + abs)`; 2-box entries additionally exclude a
    /// band placed on a random side of the value.
    pub fn around_matrix(
        a: &DMatrix<f64>,
        one_idx: &[(usize, usize)],
        two_idx: &[(usize, usize)],
        margins: &BoxMargins,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut spec = ConstraintSpec::default();
        for &(i, j) in one_idx {
            let v = a[(i, j)];
            let half = margins.rel * v.abs() + margins.abs;
            spec.one_box.push(OneBox {
                i,
                j,
                lower: v - half,
                upper: v + half,
            });
        }
        for &(i, j) in two_idx {
            let v = a[(i, j)];
            let half = margins.rel * v.abs() + margins.abs;
            let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            spec.two_box.push(TwoBox {
                i,
                j,
                lower: v - half,
                upper: v + half,
                center: v + side * margins.band_center_frac * half,
                half_gap: margins.band_half_frac * half,
            });
        }
        spec.validate(a.nrows())?;
        Ok(spec)
    }
}

/// Window and band parameters for [`ConstraintSpec::around_matrix`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxMargins {
    /// Relative half-width of the window around the reference value.
    pub rel: f64,
    /// Absolute half-width added on top.
    pub abs: f64,
    /// Band center offset as a fraction of the window half-width.
    pub band_center_frac: f64,
    /// Band half-gap as a fraction of the window half-width. Must stay below
    /// `band_center_frac` so that the reference value stays feasible, and
    /// `band_center_frac + band_half_frac` must stay below 1 so the band
    /// stays inside the window.
    pub band_half_frac: f64,
}

impl Default for BoxMargins {
    fn default() -> Self {
        Self {
            rel: 0.1,
            abs: 0.05,
            band_center_frac: 0.5,
            band_half_frac: 0.2,
        }
    }
}

/// Samples `one_count + two_count` distinct matrix indices uniformly without
/// replacement and splits them into the 1-box and 2-box sets.
pub fn sample_index_sets(
    n: usize,
    one_count: usize,
    two_count: usize,
    rng: &mut impl Rng,
) -> Result<(Vec<(usize, usize)>, Vec<(usize, usize)>)> {
    let total = one_count + two_count;
    if total > n * n {
        return Err(Error::InvalidConfig(format!(
            "cannot sample {total} distinct entries from a {n}x{n} matrix"
        )));
    }
    let mut all: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .collect();
    for k in 0..total {
        let r = rng.gen_range(k..all.len());
        all.swap(k, r);
    }
    let one = all[..one_count].to_vec();
    let two = all[one_count..total].to_vec();
    Ok((one, two))
}

/// Constraint values at a point of the product space.
pub fn constraint_values(x: &ProductPoint, spec: &ConstraintSpec) -> Result<ConstraintValues> {
    spec.values_at_matrix(&assemble_a(x))
}

/// `max{0, g...}` over all constraint rows at a point.
pub fn max_violation(x: &ProductPoint, spec: &ConstraintSpec) -> Result<f64> {
    Ok(constraint_values(x, spec)?.max_violation())
}

/// Riemannian gradients of every constraint row at `x`.
///
/// All rows are affine or quadratic images of the entry functional
/// `phi_ij(x) = e_i^T (J - R) Q e_j`, whose Euclidean gradient blocks are
/// `G_J = e_i e_j^T Q^T`, `G_R = -G_J`, `G_Q = (J - R)^T e_i e_j^T`. The
/// chain rule scales the projected gradient by -1 for lower rows, +1 for
/// upper and equality rows, and `-2 (phi - center)` for band rows.
pub fn constraint_gradients(
    x: &ProductPoint,
    spec: &ConstraintSpec,
) -> Result<ConstraintGradients> {
    spec.validate(x.dim())?;
    let a = assemble_a(x);
    let phi_grad = |i: usize, j: usize| -> Result<TangentVector> {
        let (g_j, g_q) = entry_gradient_blocks(x, i, j);
        let g_r = -&g_j;
        riem_grad_from_euclidean(x, &g_j, &g_r, &g_q)
    };
    let mut ineq = Vec::with_capacity(spec.num_ineq_rows());
    for e in &spec.one_box {
        let t = phi_grad(e.i, e.j)?;
        ineq.push(t.scale(-1.0));
        ineq.push(t);
    }
    for e in &spec.two_box {
        let t = phi_grad(e.i, e.j)?;
        ineq.push(t.scale(-1.0));
        ineq.push(t.clone());
        let dev = a[(e.i, e.j)] - e.center;
        ineq.push(t.scale(-2.0 * dev));
    }
    let mut eq = Vec::with_capacity(spec.num_eq_rows());
    for e in &spec.equality {
        eq.push(phi_grad(e.i, e.j)?);
    }
    Ok(ConstraintGradients { ineq, eq })
}
