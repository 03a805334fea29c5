use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::manifold::{ProductPoint, SpdMatrix, skew_project};

/// Ridge added to the Gram construction so the blocks stay safely positive
/// definite.
const SPD_RIDGE: f64 = 0.15;
/// Weight of the Gram part relative to the ridge.
const SPD_GRAM_WEIGHT: f64 = 0.6;

fn gaussian_matrix(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| rng.sample(StandardNormal))
}

fn gram_spd(n: usize, rng: &mut impl Rng) -> SpdMatrix {
    let g = gaussian_matrix(n, rng);
    let mut m = (&g * g.transpose()) * (SPD_GRAM_WEIGHT / n as f64);
    for i in 0..n {
        m[(i, i)] += SPD_RIDGE;
    }
    // mirror the upper triangle so symmetry is bitwise
    for i in 0..n {
        for j in (i + 1)..n {
            m[(j, i)] = m[(i, j)];
        }
    }
    SpdMatrix::new(m).expect("Gram matrix plus ridge is positive definite")
}

/// Draws a random point of the product space: `J` is the antisymmetric part
/// of a Gaussian matrix, `R` and `Q` are normalized Gram matrices of
/// Gaussian matrices plus a small ridge. The assembled `A = (J - R) Q` is
/// stable by construction.
pub fn random_stable_triple(n: usize, rng: &mut impl Rng) -> ProductPoint {
    let j = skew_project(&gaussian_matrix(n, rng)).expect("square by construction");
    let r = gram_spd(n, rng);
    let q = gram_spd(n, rng);
    ProductPoint::new(j, r, q).expect("matching dimensions")
}

/// Draws a random starting point for the solver. Same law as
/// [`random_stable_triple`]; a separate name because the two draws play
/// different roles in an experiment.
pub fn random_initial_point(n: usize, rng: &mut impl Rng) -> ProductPoint {
    random_stable_triple(n, rng)
}

/// Uniform draw from `[-1, 1]^n`.
pub fn random_unit_box_vector(n: usize, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::eig::spectral_abscissa;
    use crate::model::objective::assemble_a;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn invariants_hold_across_seed_sweep() {
        for seed in 0..1000 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_stable_triple(10, &mut rng);
            // typed invariants are checked at construction; re-assert the
            // stability consequence on the assembled system
            assert!(
                spectral_abscissa(&assemble_a(&x)) < 0.0,
                "seed {seed} produced an unstable assembly"
            );
        }
    }

    #[test]
    fn fixed_seed_reproduces_output() {
        let a = random_stable_triple(6, &mut ChaCha8Rng::seed_from_u64(3));
        let b = random_stable_triple(6, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        let u = random_unit_box_vector(6, &mut ChaCha8Rng::seed_from_u64(4));
        let v = random_unit_box_vector(6, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(u, v);
    }

    #[test]
    fn degenerate_dimension_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_stable_triple(1, &mut rng);
        assert_eq!(x.j.matrix()[(0, 0)], 0.0);
        assert!(assemble_a(&x)[(0, 0)] < 0.0);
    }
}
