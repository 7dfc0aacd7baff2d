//! Uniform-grid representation of 1-periodic fields on the unit torus with
//! Fourier differentiation, the inverse Laplacian and `L²`/`H¹` quadrature.
//!
//! Wavevectors are integers in `[-N/2, N/2)` per axis with angular frequency
//! `2πk`, so every field has period exactly one. Odd derivatives drop the
//! Nyquist mode. Grid averages are exact quadrature for trigonometric
//! polynomials resolved by the grid.

mod field;
mod grid;

pub use field::{ScalarField, VectorField};
pub use grid::{make_grid, Grid, POINCARE_CONSTANT};
pub(crate) use grid::wavenumber;

pub(crate) use field::dot;

/// Real trigonometric polynomial `Σ a cos(2πk·x + φ)` sampled on `grid`.
pub fn trig_sum(grid: &Grid, modes: &[(Vec<i64>, f64, f64)]) -> ScalarField {
    ScalarField::from_fn(grid, |x| {
        modes
            .iter()
            .map(|(k, a, phase)| {
                let arg: f64 = k.iter().zip(x).map(|(&ki, &xi)| ki as f64 * xi).sum();
                a * (2.0 * std::f64::consts::PI * arg + phase).cos()
            })
            .sum()
    })
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Random real field whose modes satisfy `|k_i| ≤ kmax` on every axis.
    pub(crate) fn random_band_limited(grid: &Grid, kmax: i64, terms: usize, seed: u64) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let modes: Vec<_> = (0..terms)
            .map(|_| {
                let k: Vec<i64> = (0..grid.dim()).map(|_| rng.gen_range(-kmax..=kmax)).collect();
                (k, rng.gen_range(-1.0..1.0), rng.gen_range(0.0..std::f64::consts::TAU))
            })
            .collect();
        trig_sum(grid, &modes)
    }

    pub(crate) fn random_mean_zero(grid: &Grid, kmax: i64, terms: usize, seed: u64) -> ScalarField {
        random_band_limited(grid, kmax, terms, seed).without_mean()
    }
}

#[cfg(test)]
mod properties {
    use super::testing::*;
    use super::*;
    use proptest::prelude::*;

    fn grid2() -> Grid {
        make_grid(2, &[32, 16]).unwrap()
    }

    fn grid3() -> Grid {
        make_grid(3, &[16, 8, 16]).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn parseval(seed in any::<u64>(), three in any::<bool>()) {
            let g = if three { grid3() } else { grid2() };
            let f = random_band_limited(&g, 3, 6, seed);
            let spectral: f64 = f.spectrum().iter().map(|c| c.norm_sqr()).sum();
            let l2 = f.l2_norm().powi(2);
            prop_assert!((l2 - spectral).abs() <= 1e-12 * l2.max(1e-300));
        }

        #[test]
        fn round_trip_and_mean(seed in any::<u64>()) {
            let g = grid2();
            let f = random_band_limited(&g, 5, 8, seed);
            let back = ScalarField::from_spectrum(&g, f.spectrum().to_vec());
            let scale = f.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (a, b) in back.values().iter().zip(f.values()) {
                prop_assert!((a - b).abs() <= 1e-12 * scale);
            }
            prop_assert!((f.mean() - f.spectrum()[0].re).abs() <= 1e-13 * scale.max(1.0));
        }

        #[test]
        fn poincare(seed in any::<u64>(), three in any::<bool>()) {
            let g = if three { grid3() } else { grid2() };
            let f = random_mean_zero(&g, 3, 6, seed);
            prop_assert!(f.l2_norm() <= POINCARE_CONSTANT * f.h1_seminorm() + 1e-12);
        }

        #[test]
        fn gradient_is_minus_adjoint_of_divergence(seed in any::<u64>()) {
            let g = grid2();
            let f = random_band_limited(&g, 4, 6, seed);
            let v = VectorField::new(vec![
                random_band_limited(&g, 4, 6, seed.wrapping_add(1)),
                random_band_limited(&g, 4, 6, seed.wrapping_add(2)),
            ]).unwrap();
            let lhs = f.gradient().l2_inner(&v).unwrap();
            let rhs = -f.l2_inner(&v.divergence()).unwrap();
            let scale = f.h1_seminorm() * v.l2_norm();
            prop_assert!((lhs - rhs).abs() <= 1e-11 * scale.max(1e-300));
        }

        #[test]
        fn poisson_inverts_laplacian(seed in any::<u64>(), three in any::<bool>()) {
            let g = if three { grid3() } else { grid2() };
            let f = random_mean_zero(&g, 3, 6, seed);
            let back = f.laplacian().scale(-1.0).solve_poisson().unwrap();
            prop_assert!(back.sub(&f).unwrap().l2_norm() <= 1e-11 * f.l2_norm().max(1e-300));
        }
    }
}
