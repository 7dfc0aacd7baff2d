use std::sync::OnceLock;

use num_complex::Complex64;

use super::grid::Grid;
use crate::error::{Error, Result};

/// A real 1-periodic function sampled on a [`Grid`]. Physical samples are the
/// source of truth; the spectrum is computed on first use and cached.
#[derive(Clone)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
    spectrum: OnceLock<Vec<Complex64>>,
}

/// `dim` scalar components sharing one grid.
#[derive(Clone, Debug)]
pub struct VectorField {
    components: Vec<ScalarField>,
}

impl std::fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScalarField")
            .field("grid", &self.grid)
            .field("mean", &self.mean())
            .finish()
    }
}

impl ScalarField {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<ScalarField> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(ScalarField::from_raw(grid, values))
    }

    pub(crate) fn from_raw(grid: &Grid, values: Vec<f64>) -> ScalarField {
        debug_assert_eq!(values.len(), grid.len());
        ScalarField {
            grid: grid.clone(),
            values,
            spectrum: OnceLock::new(),
        }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> ScalarField {
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        ScalarField::from_raw(grid, values)
    }

    pub fn zeros(grid: &Grid) -> ScalarField {
        ScalarField::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, value: f64) -> ScalarField {
        ScalarField::from_raw(grid, vec![value; grid.len()])
    }

    /// Builds a field from spectral coefficients (same normalisation as
    /// [`Grid::forward`]); the imaginary part of the synthesis is dropped.
    pub fn from_spectrum(grid: &Grid, spectrum: Vec<Complex64>) -> ScalarField {
        let values = grid.inverse_real(spectrum);
        ScalarField::from_raw(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn spectrum(&self) -> &[Complex64] {
        self.spectrum.get_or_init(|| self.grid.forward(&self.values))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `‖f‖₂` on the unit-volume torus.
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() / self.values.len() as f64).sqrt()
    }

    pub fn l2_inner(&self, other: &ScalarField) -> Result<f64> {
        self.check_grid(other)?;
        Ok(dot(&self.values, &other.values))
    }

    /// `‖∇f‖₂`, evaluated through Parseval with the same Nyquist convention as
    /// [`ScalarField::gradient`].
    pub fn h1_seminorm(&self) -> f64 {
        let hat = self.spectrum();
        let mut s = 0.0;
        for axis in 0..self.grid.dim() {
            let d = self.grid.deriv(axis);
            s += hat.iter().zip(d).map(|(c, k)| k * k * c.norm_sqr()).sum::<f64>();
        }
        s.sqrt()
    }

    /// Full `H¹` norm `(‖f‖₂² + ‖∇f‖₂²)^{1/2}`.
    pub fn h1_norm(&self) -> f64 {
        (self.l2_norm().powi(2) + self.h1_seminorm().powi(2)).sqrt()
    }

    pub fn gradient(&self) -> VectorField {
        let hat = self.spectrum();
        let components = (0..self.grid.dim())
            .map(|axis| {
                let d = self.grid.deriv(axis);
                let g = hat
                    .iter()
                    .zip(d)
                    .map(|(c, k)| Complex64::new(0.0, *k) * c)
                    .collect();
                ScalarField::from_spectrum(&self.grid, g)
            })
            .collect();
        VectorField { components }
    }

    /// Spectral partial derivative along one axis.
    pub fn partial(&self, axis: usize) -> ScalarField {
        let d = self.grid.deriv(axis);
        let g = self
            .spectrum()
            .iter()
            .zip(d)
            .map(|(c, k)| Complex64::new(0.0, *k) * c)
            .collect();
        ScalarField::from_spectrum(&self.grid, g)
    }

    pub fn laplacian(&self) -> ScalarField {
        let g = self
            .spectrum()
            .iter()
            .zip(self.grid.ksq())
            .map(|(c, k2)| -k2 * c)
            .collect();
        ScalarField::from_spectrum(&self.grid, g)
    }

    /// Mean-zero `g` with `-Δg = f`. Rejects `f` whose mean exceeds
    /// `1e-10 · ‖f‖₂`.
    pub fn solve_poisson(&self) -> Result<ScalarField> {
        let mean = self.mean();
        let tol = 1e-10 * self.l2_norm();
        if mean.abs() > tol {
            return Err(Error::NonZeroMean { mean, tol });
        }
        let g = self
            .spectrum()
            .iter()
            .zip(self.grid.ksq())
            .map(|(c, &k2)| if k2 > 0.0 { c / k2 } else { Complex64::new(0.0, 0.0) })
            .collect();
        Ok(ScalarField::from_spectrum(&self.grid, g))
    }

    /// Spectral interpolation onto another grid of the same dimension.
    /// Modes not representable on the target grid are discarded.
    pub fn resample(&self, target: &Grid) -> Result<ScalarField> {
        if target.dim() != self.grid.dim() {
            return Err(Error::GridMismatch);
        }
        if *target == self.grid {
            return Ok(self.clone());
        }
        let hat = self.spectrum();
        let mut out = vec![Complex64::new(0.0, 0.0); target.len()];
        for (flat, c) in hat.iter().enumerate() {
            let k = self.grid.wavevector(flat);
            let nyquist = k
                .iter()
                .zip(self.grid.shape())
                .any(|(&ki, &n)| n % 2 == 0 && ki == -(n as i64) / 2);
            if nyquist {
                continue;
            }
            if let Some(t) = target.spectral_index(&k) {
                out[t] = *c;
            }
        }
        Ok(ScalarField::from_spectrum(target, out))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField::from_raw(&self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn scale(&self, s: f64) -> ScalarField {
        self.map(|v| s * v)
    }

    pub fn add(&self, other: &ScalarField) -> Result<ScalarField> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> Result<ScalarField> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Pointwise product without dealiasing.
    pub fn mul(&self, other: &ScalarField) -> Result<ScalarField> {
        self.zip_with(other, |a, b| a * b)
    }

    /// Product truncated back to the grid's modes after evaluation on the
    /// 3/2-padded grid, so no aliased content enters the result.
    pub fn dealiased_mul(&self, other: &ScalarField) -> Result<ScalarField> {
        self.check_grid(other)?;
        let pad = self.grid.padding();
        let a = pad.to_padded_physical(self.spectrum());
        let b = pad.to_padded_physical(other.spectrum());
        let prod: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        let hat = pad.truncate(&pad.grid.forward(&prod));
        Ok(ScalarField::from_spectrum(&self.grid, hat))
    }

    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<ScalarField> {
        self.check_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(ScalarField::from_raw(&self.grid, values))
    }

    /// Copy with the mean removed.
    pub fn without_mean(&self) -> ScalarField {
        let m = self.mean();
        self.map(|v| v - m)
    }

    fn check_grid(&self, other: &ScalarField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }
}

impl VectorField {
    pub fn new(components: Vec<ScalarField>) -> Result<VectorField> {
        let first = components.first().ok_or(Error::GridMismatch)?;
        if components.len() != first.grid().dim()
            || components.iter().any(|c| c.grid() != first.grid())
        {
            return Err(Error::GridMismatch);
        }
        Ok(VectorField { components })
    }

    pub fn zeros(grid: &Grid) -> VectorField {
        VectorField {
            components: (0..grid.dim()).map(|_| ScalarField::zeros(grid)).collect(),
        }
    }

    pub fn grid(&self) -> &Grid {
        self.components[0].grid()
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    pub fn component(&self, axis: usize) -> &ScalarField {
        &self.components[axis]
    }

    pub fn divergence(&self) -> ScalarField {
        let grid = self.grid();
        let mut hat = vec![Complex64::new(0.0, 0.0); grid.len()];
        for (axis, c) in self.components.iter().enumerate() {
            let d = grid.deriv(axis);
            for ((h, s), k) in hat.iter_mut().zip(c.spectrum()).zip(d) {
                *h += Complex64::new(0.0, *k) * s;
            }
        }
        ScalarField::from_spectrum(grid, hat)
    }

    pub fn l2_inner(&self, other: &VectorField) -> Result<f64> {
        if self.grid() != other.grid() {
            return Err(Error::GridMismatch);
        }
        self.components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.l2_inner(b))
            .sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.l2_norm().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Pointwise `v · e`.
    pub fn dot_direction(&self, e: &[f64]) -> ScalarField {
        let grid = self.grid();
        let mut out = vec![0.0; grid.len()];
        for (c, &ei) in self.components.iter().zip(e) {
            if ei != 0.0 {
                for (o, v) in out.iter_mut().zip(c.values()) {
                    *o += ei * v;
                }
            }
        }
        ScalarField::from_raw(grid, out)
    }
}

/// Grid average of a product, i.e. the `L²` inner product on the unit torus.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::make_grid;
    use std::f64::consts::PI;

    fn grid() -> Grid {
        make_grid(2, &[32, 32]).unwrap()
    }

    #[test]
    fn gradient_of_single_mode() {
        let g = grid();
        let f = ScalarField::from_fn(&g, |x| (2.0 * PI * x[0]).sin());
        let grad = f.gradient();
        for i in 0..g.len() {
            let x = g.point(i);
            assert!((grad.component(0).values()[i] - 2.0 * PI * (2.0 * PI * x[0]).cos()).abs() < 1e-12);
            assert!(grad.component(1).values()[i].abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let f = ScalarField::constant(&grid(), 3.5);
        assert!(f.gradient().l2_norm() < 1e-14);
    }

    #[test]
    fn gradient_of_product_of_modes() {
        let g = grid();
        let f = ScalarField::from_fn(&g, |x| (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).sin());
        let grad = f.gradient();
        for i in 0..g.len() {
            let x = g.point(i);
            let (s0, c0) = (2.0 * PI * x[0]).sin_cos();
            let (s1, c1) = (2.0 * PI * x[1]).sin_cos();
            assert!((grad.component(0).values()[i] - 2.0 * PI * c0 * s1).abs() < 1e-12);
            assert!((grad.component(1).values()[i] - 2.0 * PI * s0 * c1).abs() < 1e-12);
        }
    }

    #[test]
    fn poisson_examples() {
        let g = grid();
        let f = ScalarField::from_fn(&g, |x| (2.0 * PI * x[1]).sin());
        let u = f.solve_poisson().unwrap();
        for i in 0..g.len() {
            let expect = (2.0 * PI * g.point(i)[1]).sin() / (4.0 * PI * PI);
            assert!((u.values()[i] - expect).abs() < 1e-14);
        }
        let z = ScalarField::zeros(&g).solve_poisson().unwrap();
        assert_eq!(z.l2_norm(), 0.0);
        let f = ScalarField::from_fn(&g, |x| (2.0 * PI * x[0]).sin() + (4.0 * PI * x[1]).sin());
        let u = f.solve_poisson().unwrap();
        for i in 0..g.len() {
            let x = g.point(i);
            let expect = (2.0 * PI * x[0]).sin() / (4.0 * PI * PI) + (4.0 * PI * x[1]).sin() / (16.0 * PI * PI);
            assert!((u.values()[i] - expect).abs() < 1e-14);
        }
        let residual = u.laplacian().scale(-1.0).sub(&f).unwrap().l2_norm();
        assert!(residual <= 1e-10 * f.l2_norm());
    }

    #[test]
    fn poisson_rejects_nonzero_mean() {
        let f = ScalarField::constant(&grid(), 1.0);
        assert!(matches!(f.solve_poisson(), Err(Error::NonZeroMean { .. })));
    }

    #[test]
    fn norms_of_simple_fields() {
        let g = grid();
        let f = ScalarField::from_fn(&g, |x| (2.0 * PI * x[0]).sin());
        assert!((f.l2_norm() - 1.0 / 2f64.sqrt()).abs() < 1e-14);
        let f = ScalarField::from_fn(&g, |x| (2.0 * PI * x[1]).sin());
        assert!((f.h1_seminorm() - 2.0 * PI / 2f64.sqrt()).abs() < 1e-12);
        assert!((f.gradient().l2_norm() - f.h1_seminorm()).abs() < 1e-12);
        let f = ScalarField::from_fn(&g, |x| 1.0 + (2.0 * PI * x[0]).sin());
        assert!((f.mean() - 1.0).abs() < 1e-14);
        assert!((f.spectrum()[0].re - f.mean()).abs() < 1e-13);
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let a = ScalarField::zeros(&grid());
        let b = ScalarField::zeros(&make_grid(2, &[16, 16]).unwrap());
        assert!(matches!(a.l2_inner(&b), Err(Error::GridMismatch)));
        assert!(ScalarField::new(&grid(), vec![0.0; 3]).is_err());
        let mut v = vec![0.0; grid().len()];
        v[3] = f64::NAN;
        assert!(matches!(ScalarField::new(&grid(), v), Err(Error::NonFinite)));
    }

    #[test]
    fn resample_is_exact_for_band_limited_fields() {
        let coarse = make_grid(2, &[16, 16]).unwrap();
        let fine = make_grid(2, &[64, 32]).unwrap();
        let f = |x: &[f64]| (2.0 * PI * x[0]).sin() * (6.0 * PI * x[1]).cos() + 0.3;
        let up = ScalarField::from_fn(&coarse, f).resample(&fine).unwrap();
        let direct = ScalarField::from_fn(&fine, f);
        assert!(up.sub(&direct).unwrap().l2_norm() < 1e-13);
        let down = direct.resample(&coarse).unwrap();
        assert!(down.sub(&ScalarField::from_fn(&coarse, f)).unwrap().l2_norm() < 1e-13);
    }

    #[test]
    fn dealiased_product_matches_exact_low_modes() {
        let g = make_grid(2, &[16, 16]).unwrap();
        let a = ScalarField::from_fn(&g, |x| (2.0 * PI * 5.0 * x[0]).cos());
        let b = ScalarField::from_fn(&g, |x| (2.0 * PI * 5.0 * x[0]).cos());
        // cos² = (1 + cos(20πx))/2; mode 10 is above N/2 and must vanish.
        let p = a.dealiased_mul(&b).unwrap();
        for v in p.values() {
            assert!((v - 0.5).abs() < 1e-14);
        }
        // The plain product aliases mode 10 onto mode -6.
        let q = a.mul(&b).unwrap();
        assert!((q.sub(&p).unwrap().l2_norm() - 0.5 / 2f64.sqrt()).abs() < 1e-12);
    }
}
