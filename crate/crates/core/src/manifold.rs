//! Geometry of the search space: skew-symmetric matrices, symmetric positive
//! definite matrices, and their product.
//!
//! The product space carries the Frobenius metric on the skew block and the
//! affine-invariant metric `tr(P^-1 u P^-1 v)` on each positive definite
//! block. Steps are taken with a second-order retraction that keeps the
//! positive definite blocks positive definite for any symmetric tangent
//! input. A per-point orthonormal chart turns tangent vectors into plain
//! coordinate vectors so that downstream quadratic subproblems see the
//! identity metric.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Absolute tolerance for representation invariants (symmetry, antisymmetry).
pub const REPR_TOL: f64 = 1e-12;
/// Absolute tolerance for derived quantities (orthonormality, round-trips).
pub const DERIVED_TOL: f64 = 1e-10;

fn check_square(m: &DMatrix<f64>) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

/// Mirrors the upper triangle so the result is bitwise symmetric.
fn symmetrize_storage(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// A real skew-symmetric matrix, `M^T = -M`.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewMatrix(DMatrix<f64>);

impl SkewMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_square(&m)?;
        let max_defect = (&m + m.transpose()).abs().max();
        if max_defect > REPR_TOL {
            return Err(Error::NotSkewSymmetric { max_defect });
        }
        Ok(Self(m))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

/// A real symmetric matrix, `M^T = M`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_square(&m)?;
        let max_asym = (&m - m.transpose()).abs().max();
        if max_asym > REPR_TOL {
            return Err(Error::NotSymmetric { max_asym });
        }
        Ok(Self(m))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

/// A symmetric positive definite matrix: symmetric within [`REPR_TOL`] and
/// admitting a Cholesky factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix(DMatrix<f64>);

impl SpdMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_square(&m)?;
        let max_asym = (&m - m.transpose()).abs().max();
        if max_asym > REPR_TOL {
            return Err(Error::NotSymmetric { max_asym });
        }
        if m.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite {
                context: "Cholesky factorization failed",
            });
        }
        Ok(Self(m))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// Symmetric square root and inverse square root via eigendecomposition.
    /// Eigendecomposition (rather than Cholesky) keeps both factors symmetric.
    pub fn sqrt_pair(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let se = self.0.clone().symmetric_eigen();
        let sqrt_vals = se.eigenvalues.map(|v| v.max(0.0).sqrt());
        let isqrt_vals = sqrt_vals.map(|v| 1.0 / v);
        let u = &se.eigenvectors;
        let sqrt = symmetrize_storage(&(u * DMatrix::from_diagonal(&sqrt_vals) * u.transpose()));
        let isqrt = symmetrize_storage(&(u * DMatrix::from_diagonal(&isqrt_vals) * u.transpose()));
        (sqrt, isqrt)
    }
}

/// A point on the product space: `(J, R, Q)` with `J` skew-symmetric and
/// `R`, `Q` symmetric positive definite. The assembled system matrix
/// `A = (J - R) Q` is stable for every such point.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductPoint {
    pub j: SkewMatrix,
    pub r: SpdMatrix,
    pub q: SpdMatrix,
}

impl ProductPoint {
    pub fn new(j: SkewMatrix, r: SpdMatrix, q: SpdMatrix) -> Result<Self> {
        let n = j.dim();
        if r.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: r.dim(),
                context: "R block of product point",
            });
        }
        if q.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: q.dim(),
                context: "Q block of product point",
            });
        }
        Ok(Self { j, r, q })
    }

    pub fn dim(&self) -> usize {
        self.j.dim()
    }
}

/// A tangent vector at a point of the product space: a skew block and two
/// symmetric blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub xi_j: SkewMatrix,
    pub xi_r: SymMatrix,
    pub xi_q: SymMatrix,
}

impl TangentVector {
    pub fn new(xi_j: SkewMatrix, xi_r: SymMatrix, xi_q: SymMatrix) -> Result<Self> {
        let n = xi_j.dim();
        if xi_r.dim() != n || xi_q.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: xi_r.dim().max(xi_q.dim()),
                context: "tangent vector blocks",
            });
        }
        Ok(Self { xi_j, xi_r, xi_q })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            xi_j: SkewMatrix::zeros(n),
            xi_r: SymMatrix::zeros(n),
            xi_q: SymMatrix::zeros(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.xi_j.dim()
    }

    pub fn scale(&self, t: f64) -> Self {
        Self {
            xi_j: SkewMatrix(&self.xi_j.0 * t),
            xi_r: SymMatrix(&self.xi_r.0 * t),
            xi_q: SymMatrix(&self.xi_q.0 * t),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            xi_j: SkewMatrix(&self.xi_j.0 + &other.xi_j.0),
            xi_r: SymMatrix(&self.xi_r.0 + &other.xi_r.0),
            xi_q: SymMatrix(&self.xi_q.0 + &other.xi_q.0),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.xi_j.0.iter().all(|&v| v == 0.0)
            && self.xi_r.0.iter().all(|&v| v == 0.0)
            && self.xi_q.0.iter().all(|&v| v == 0.0)
    }
}

/// Intrinsic dimension of the product space for state dimension `n`:
/// `n(n-1)/2` skew coordinates plus `n(n+1)/2` for each positive definite
/// block.
pub fn manifold_dim(n: usize) -> usize {
    n * (n - 1) / 2 + n * (n + 1)
}

/// Antisymmetric part `(M - M^T) / 2`.
pub fn skew_project(m: &DMatrix<f64>) -> Result<SkewMatrix> {
    let n = check_square(m)?;
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] - m[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = -v;
        }
    }
    Ok(SkewMatrix(out))
}

/// Symmetric part `(M + M^T) / 2`.
pub fn sym_project(m: &DMatrix<f64>) -> Result<SymMatrix> {
    let n = check_square(m)?;
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(SymMatrix(out))
}

fn check_tangent_dims(x: &ProductPoint, v: &TangentVector, context: &'static str) -> Result<()> {
    if v.dim() != x.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            got: v.dim(),
            context,
        });
    }
    Ok(())
}

/// Riemannian inner product at `x`:
/// `tr(u_J^T v_J) + tr(R^-1 u_R R^-1 v_R) + tr(Q^-1 u_Q Q^-1 v_Q)`.
pub fn metric(x: &ProductPoint, u: &TangentVector, v: &TangentVector) -> Result<f64> {
    check_tangent_dims(x, u, "metric first argument")?;
    check_tangent_dims(x, v, "metric second argument")?;

    let skew_part = u.xi_j.0.dot(&v.xi_j.0);

    let spd_part = |p: &SpdMatrix, a: &SymMatrix, b: &SymMatrix| -> f64 {
        let chol = p
            .0
            .clone()
            .cholesky()
            .expect("positive definite by invariant");
        let pa = chol.solve(&a.0);
        let pb = chol.solve(&b.0);
        // tr(pa * pb) without forming the product
        let mut acc = 0.0;
        for i in 0..pa.nrows() {
            for k in 0..pa.ncols() {
                acc += pa[(i, k)] * pb[(k, i)];
            }
        }
        acc
    };

    Ok(skew_part + spd_part(&x.r, &u.xi_r, &v.xi_r) + spd_part(&x.q, &u.xi_q, &v.xi_q))
}

/// Metric norm of a tangent vector at `x`.
pub fn norm(x: &ProductPoint, v: &TangentVector) -> Result<f64> {
    Ok(metric(x, v, v)?.max(0.0).sqrt())
}

fn retract_spd(p: &SpdMatrix, xi: &SymMatrix, context: &'static str) -> Result<SpdMatrix> {
    let chol = p
        .0
        .clone()
        .cholesky()
        .expect("positive definite by invariant");
    let w = chol.solve(&xi.0); // P^-1 xi
    let quad = symmetrize_storage(&(&xi.0 * w));
    let out = symmetrize_storage(&(&p.0 + &xi.0 + 0.5 * quad));
    if out.clone().cholesky().is_none() {
        return Err(Error::RetractionFailure { context });
    }
    Ok(SpdMatrix(out))
}

/// Retraction on the product space: identity map on the skew block,
/// `P + xi + xi P^-1 xi / 2` on each positive definite block. The quadratic
/// completion equals `P^{1/2} (I + S + S^2/2) P^{1/2}` with
/// `S = P^{-1/2} xi P^{-1/2}`, and `1 + s + s^2/2 > 0` for every real `s`,
/// so positive definiteness is preserved; a Cholesky failure on the result
/// is reported as an internal invariant violation.
pub fn retract(x: &ProductPoint, v: &TangentVector) -> Result<ProductPoint> {
    check_tangent_dims(x, v, "retraction direction")?;
    let j = SkewMatrix(&x.j.0 + &v.xi_j.0);
    let r = retract_spd(&x.r, &v.xi_r, "R block")?;
    let q = retract_spd(&x.q, &v.xi_q, "Q block")?;
    Ok(ProductPoint { j, r, q })
}

/// Converts Euclidean gradients of a smooth extension into the Riemannian
/// gradient: `(skew(G_J), R sym(G_R) R, Q sym(G_Q) Q)`.
pub fn riem_grad_from_euclidean(
    x: &ProductPoint,
    g_j: &DMatrix<f64>,
    g_r: &DMatrix<f64>,
    g_q: &DMatrix<f64>,
) -> Result<TangentVector> {
    let n = x.dim();
    for (g, context) in [
        (g_j, "Euclidean gradient J block"),
        (g_r, "Euclidean gradient R block"),
        (g_q, "Euclidean gradient Q block"),
    ] {
        if g.nrows() != n || g.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: g.nrows().max(g.ncols()),
                context,
            });
        }
    }
    let xi_j = skew_project(g_j)?;
    let sym_r = sym_project(g_r)?;
    let sym_q = sym_project(g_q)?;
    let xi_r = SymMatrix(symmetrize_storage(&(&x.r.0 * sym_r.0 * &x.r.0)));
    let xi_q = SymMatrix(symmetrize_storage(&(&x.q.0 * sym_q.0 * &x.q.0)));
    Ok(TangentVector { xi_j, xi_r, xi_q })
}

/// An orthonormal chart of the tangent space at a base point.
///
/// Skew coordinates use the basis `(E_ij - E_ji)/sqrt(2)` for `i < j`; each
/// positive definite block uses `P^{1/2} B_k P^{1/2}` where `B_k` runs over
/// the Frobenius-orthonormal symmetric basis (diagonal `E_ii` first, then
/// `(E_ij + E_ji)/sqrt(2)` for `i < j`). In these coordinates the Riemannian
/// metric is the identity, so the coordinate 2-norm of a gradient equals its
/// metric norm.
#[derive(Debug, Clone)]
pub struct TangentChart {
    base: ProductPoint,
    r_sqrt: DMatrix<f64>,
    r_isqrt: DMatrix<f64>,
    q_sqrt: DMatrix<f64>,
    q_isqrt: DMatrix<f64>,
}

impl TangentChart {
    pub fn dim(&self) -> usize {
        manifold_dim(self.base.dim())
    }

    pub fn base(&self) -> &ProductPoint {
        &self.base
    }

    /// The orthonormal basis as explicit tangent vectors, in coordinate
    /// order. Mostly useful for verification; the coordinate maps below do
    /// not go through this list.
    pub fn basis(&self) -> Vec<TangentVector> {
        let n = self.base.dim();
        let mut out = Vec::with_capacity(self.dim());
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        for i in 0..n {
            for j in (i + 1)..n {
                let mut m = DMatrix::zeros(n, n);
                m[(i, j)] = inv_sqrt2;
                m[(j, i)] = -inv_sqrt2;
                out.push(TangentVector {
                    xi_j: SkewMatrix(m),
                    xi_r: SymMatrix::zeros(n),
                    xi_q: SymMatrix::zeros(n),
                });
            }
        }
        for block in 0..2 {
            let sqrt = if block == 0 { &self.r_sqrt } else { &self.q_sqrt };
            let mut push_sym = |b: DMatrix<f64>| {
                let m = SymMatrix(symmetrize_storage(&(sqrt * b * sqrt)));
                out.push(TangentVector {
                    xi_j: SkewMatrix::zeros(n),
                    xi_r: if block == 0 { m.clone() } else { SymMatrix::zeros(n) },
                    xi_q: if block == 0 { SymMatrix::zeros(n) } else { m },
                });
            };
            for i in 0..n {
                let mut b = DMatrix::zeros(n, n);
                b[(i, i)] = 1.0;
                push_sym(b);
            }
            for i in 0..n {
                for j in (i + 1)..n {
                    let mut b = DMatrix::zeros(n, n);
                    b[(i, j)] = inv_sqrt2;
                    b[(j, i)] = inv_sqrt2;
                    push_sym(b);
                }
            }
        }
        out
    }

    /// Coordinates of a tangent vector in the orthonormal basis.
    pub fn to_coords(&self, v: &TangentVector) -> Result<DVector<f64>> {
        check_tangent_dims(&self.base, v, "chart to_coords")?;
        let n = self.base.dim();
        let sqrt2 = std::f64::consts::SQRT_2;
        let mut c = DVector::zeros(self.dim());
        let mut k = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                c[k] = sqrt2 * v.xi_j.0[(i, j)];
                k += 1;
            }
        }
        for (isqrt, xi) in [(&self.r_isqrt, &v.xi_r), (&self.q_isqrt, &v.xi_q)] {
            let s = symmetrize_storage(&(isqrt * &xi.0 * isqrt));
            for i in 0..n {
                c[k] = s[(i, i)];
                k += 1;
            }
            for i in 0..n {
                for j in (i + 1)..n {
                    c[k] = sqrt2 * s[(i, j)];
                    k += 1;
                }
            }
        }
        Ok(c)
    }

    /// Tangent vector represented by a coordinate vector.
    pub fn from_coords(&self, c: &DVector<f64>) -> Result<TangentVector> {
        if c.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: c.len(),
                context: "chart from_coords",
            });
        }
        let n = self.base.dim();
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        let mut k = 0;
        let mut xi_j = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                xi_j[(i, j)] = c[k] * inv_sqrt2;
                xi_j[(j, i)] = -c[k] * inv_sqrt2;
                k += 1;
            }
        }
        let mut blocks = Vec::with_capacity(2);
        for sqrt in [&self.r_sqrt, &self.q_sqrt] {
            let mut s = DMatrix::zeros(n, n);
            for i in 0..n {
                s[(i, i)] = c[k];
                k += 1;
            }
            for i in 0..n {
                for j in (i + 1)..n {
                    let v = c[k] * inv_sqrt2;
                    s[(i, j)] = v;
                    s[(j, i)] = v;
                    k += 1;
                }
            }
            blocks.push(symmetrize_storage(&(sqrt * s * sqrt)));
        }
        let xi_q = SymMatrix(blocks.pop().expect("two blocks"));
        let xi_r = SymMatrix(blocks.pop().expect("two blocks"));
        Ok(TangentVector {
            xi_j: SkewMatrix(xi_j),
            xi_r,
            xi_q,
        })
    }
}

/// Builds the orthonormal chart at `x`.
pub fn build_chart(x: &ProductPoint) -> TangentChart {
    let (r_sqrt, r_isqrt) = x.r.sqrt_pair();
    let (q_sqrt, q_isqrt) = x.q.sqrt_pair();
    TangentChart {
        base: x.clone(),
        r_sqrt,
        r_isqrt,
        q_sqrt,
        q_isqrt,
    }
}
