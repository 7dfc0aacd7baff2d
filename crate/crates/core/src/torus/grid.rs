use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Poincaré constant for mean-zero functions on the unit torus: the lowest
/// nonzero Laplacian eigenvalue is `4π²`, so `‖f‖₂ ≤ ‖∇f‖₂ / (2π)`.
pub const POINCARE_CONSTANT: f64 = 1.0 / (2.0 * PI);

const MIN_POINTS: usize = 8;
const MAX_POINTS: usize = 4096;

/// Uniform grid on the unit torus `[0,1)^dim`, stored row-major with the last
/// axis contiguous.
#[derive(Clone)]
pub struct Grid {
    inner: Arc<GridInner>,
}

struct GridInner {
    shape: Vec<usize>,
    len: usize,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
    /// `2πk` along each axis for every flat index, Nyquist entries zeroed.
    deriv: Vec<Vec<f64>>,
    /// `|2πk|²` for every flat index, Nyquist included.
    ksq: Vec<f64>,
    padded: OnceLock<Padding>,
}

/// Index maps between a grid and its 3/2-padded companion.
pub(crate) struct Padding {
    pub(crate) grid: Grid,
    /// Flat padded index of each unpadded spectral slot.
    pub(crate) map: Vec<usize>,
    /// Unpadded slots that are retained when truncating (no Nyquist component).
    pub(crate) keep: Vec<bool>,
}

/// Validated constructor for the public two- and three-dimensional grids.
pub fn make_grid(dim: usize, resolution: &[usize]) -> Result<Grid> {
    if !(2..=3).contains(&dim) {
        return Err(Error::Dimension(dim));
    }
    if resolution.len() != dim {
        return Err(Error::AxisCount {
            expected: dim,
            got: resolution.len(),
        });
    }
    for &n in resolution {
        if !n.is_power_of_two() || !(MIN_POINTS..=MAX_POINTS).contains(&n) {
            return Err(Error::Resolution(n));
        }
    }
    Ok(Grid::unchecked(resolution))
}

impl Grid {
    /// Builds a grid of any dimension and any positive axis lengths. Used for
    /// transverse tori and padded work grids.
    pub(crate) fn unchecked(shape: &[usize]) -> Grid {
        assert!(!shape.is_empty() && shape.iter().all(|&n| n > 0));
        let mut planner = FftPlanner::<f64>::new();
        let forward = shape.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inverse = shape.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        let len = shape.iter().product();

        let mut deriv = vec![vec![0.0; len]; shape.len()];
        let mut ksq = vec![0.0; len];
        let mut idx = vec![0usize; shape.len()];
        for flat in 0..len {
            let mut s = 0.0;
            for (axis, &j) in idx.iter().enumerate() {
                let n = shape[axis];
                let k = wavenumber(j, n) as f64;
                s += (2.0 * PI * k).powi(2);
                if !(n % 2 == 0 && j == n / 2) {
                    deriv[axis][flat] = 2.0 * PI * k;
                }
            }
            ksq[flat] = s;
            increment(&mut idx, shape);
        }

        Grid {
            inner: Arc::new(GridInner {
                shape: shape.to_vec(),
                len,
                forward,
                inverse,
                deriv,
                ksq,
                padded: OnceLock::new(),
            }),
        }
    }

    /// A one- or two-dimensional grid for the transverse torus of a shear flow.
    pub fn transverse(resolution: &[usize]) -> Result<Grid> {
        if resolution.is_empty() || resolution.len() > 2 {
            return Err(Error::Dimension(resolution.len()));
        }
        for &n in resolution {
            if !n.is_power_of_two() || !(MIN_POINTS..=MAX_POINTS).contains(&n) {
                return Err(Error::Resolution(n));
            }
        }
        Ok(Grid::unchecked(resolution))
    }

    pub fn dim(&self) -> usize {
        self.inner.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    /// Total number of grid points.
    pub fn len(&self) -> usize {
        self.inner.len
    }

    pub fn is_empty(&self) -> bool {
        self.inner.len == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        1.0 / self.inner.shape[axis] as f64
    }

    pub fn poincare_constant(&self) -> f64 {
        POINCARE_CONSTANT
    }

    /// Coordinates of the grid point with the given flat index.
    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut rem = flat;
        let mut x = vec![0.0; self.dim()];
        for axis in (0..self.dim()).rev() {
            let n = self.inner.shape[axis];
            x[axis] = (rem % n) as f64 / n as f64;
            rem /= n;
        }
        x
    }

    /// Integer wavevector of a flat spectral index, in `[-N/2, N/2)` per axis.
    pub fn wavevector(&self, flat: usize) -> Vec<i64> {
        let mut rem = flat;
        let mut k = vec![0; self.dim()];
        for axis in (0..self.dim()).rev() {
            let n = self.inner.shape[axis];
            k[axis] = wavenumber(rem % n, n);
            rem /= n;
        }
        k
    }

    /// Flat spectral index of an integer wavevector, if it is representable.
    pub fn spectral_index(&self, k: &[i64]) -> Option<usize> {
        if k.len() != self.dim() {
            return None;
        }
        let mut flat = 0;
        for (axis, &ki) in k.iter().enumerate() {
            let n = self.inner.shape[axis] as i64;
            if ki < -n / 2 || ki >= n - n / 2 {
                return None;
            }
            flat = flat * n as usize + ki.rem_euclid(n) as usize;
        }
        Some(flat)
    }

    pub(crate) fn deriv(&self, axis: usize) -> &[f64] {
        &self.inner.deriv[axis]
    }

    pub(crate) fn ksq(&self) -> &[f64] {
        &self.inner.ksq
    }

    /// Normalised forward transform: coefficient `k` is `mean(f · e^{-2πik·x})`.
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, true);
        let scale = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|c| *c *= scale);
        data
    }

    /// Inverse of [`Grid::forward`], keeping the real part.
    pub fn inverse_real(&self, mut spectrum: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut spectrum, false);
        spectrum.into_iter().map(|c| c.re).collect()
    }

    fn transform(&self, data: &mut [Complex64], forward: bool) {
        assert_eq!(data.len(), self.len());
        let shape = &self.inner.shape;
        let plans = if forward {
            &self.inner.forward
        } else {
            &self.inner.inverse
        };
        let dim = shape.len();
        // Contiguous last axis: all lines processed in one batch.
        plans[dim - 1].process(data);
        if dim == 1 {
            return;
        }
        let mut lines = vec![Complex64::new(0.0, 0.0); data.len()];
        for axis in 0..dim - 1 {
            let n = shape[axis];
            let stride: usize = shape[axis + 1..].iter().product();
            let outer: usize = shape[..axis].iter().product();
            let mut line = 0;
            for o in 0..outer {
                let base = o * n * stride;
                for i in 0..stride {
                    let dst = &mut lines[line * n..(line + 1) * n];
                    for (j, d) in dst.iter_mut().enumerate() {
                        *d = data[base + j * stride + i];
                    }
                    line += 1;
                }
            }
            plans[axis].process(&mut lines);
            let mut line = 0;
            for o in 0..outer {
                let base = o * n * stride;
                for i in 0..stride {
                    let src = &lines[line * n..(line + 1) * n];
                    for (j, s) in src.iter().enumerate() {
                        data[base + j * stride + i] = *s;
                    }
                    line += 1;
                }
            }
        }
    }

    /// The 3/2-padded companion grid used for dealiased products.
    pub(crate) fn padding(&self) -> &Padding {
        self.inner.padded.get_or_init(|| {
            let shape = &self.inner.shape;
            let padded_shape: Vec<usize> = shape.iter().map(|&n| 3 * n / 2).collect();
            let grid = Grid::unchecked(&padded_shape);
            let mut map = Vec::with_capacity(self.len());
            let mut keep = Vec::with_capacity(self.len());
            let mut idx = vec![0usize; shape.len()];
            for _ in 0..self.len() {
                let mut flat = 0;
                let mut kept = true;
                for (axis, &j) in idx.iter().enumerate() {
                    let n = shape[axis];
                    let m = padded_shape[axis] as i64;
                    let k = wavenumber(j, n);
                    if n % 2 == 0 && j == n / 2 {
                        kept = false;
                    }
                    flat = flat * m as usize + k.rem_euclid(m) as usize;
                }
                map.push(flat);
                keep.push(kept);
                increment(&mut idx, shape);
            }
            Padding { grid, map, keep }
        })
    }
}

impl Padding {
    /// Zero-pads a spectrum onto the padded grid. Nyquist slots are dropped so
    /// the padded field stays real.
    pub(crate) fn pad(&self, spectrum: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.grid.len()];
        for (i, c) in spectrum.iter().enumerate() {
            if self.keep[i] {
                out[self.map[i]] = *c;
            }
        }
        out
    }

    pub(crate) fn truncate(&self, padded: &[Complex64]) -> Vec<Complex64> {
        self.map
            .iter()
            .zip(&self.keep)
            .map(|(&m, &k)| if k { padded[m] } else { Complex64::new(0.0, 0.0) })
            .collect()
    }

    /// Physical samples on the padded grid of a spectrum given on the base grid.
    pub(crate) fn to_padded_physical(&self, spectrum: &[Complex64]) -> Vec<f64> {
        self.grid.inverse_real(self.pad(spectrum))
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner) || self.inner.shape == other.inner.shape
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("shape", &self.inner.shape).finish()
    }
}

pub(crate) fn wavenumber(j: usize, n: usize) -> i64 {
    if j < n.div_ceil(2) {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

fn increment(idx: &mut [usize], shape: &[usize]) {
    for axis in (0..shape.len()).rev() {
        idx[axis] += 1;
        if idx[axis] < shape[axis] {
            return;
        }
        idx[axis] = 0;
    }
}
