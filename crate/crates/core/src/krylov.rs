//! Restarted GMRES with right preconditioning.

/// Stopping and restart controls for [`gmres`].
#[derive(Clone, Debug)]
pub struct GmresOptions {
    /// Target for `‖b − Ax‖ / ‖b‖`.
    pub tol: f64,
    pub max_iter: usize,
    pub restart: usize,
    /// Iterations per stagnation window.
    pub stall_window: usize,
    /// A window whose residual ratio exceeds this is a stall.
    pub stall_ratio: f64,
}

impl Default for GmresOptions {
    fn default() -> Self {
        GmresOptions {
            tol: 1e-10,
            max_iter: 4000,
            restart: 200,
            stall_window: 50,
            stall_ratio: 0.99,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    /// Relative residual of the returned iterate.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stalled: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Solves `A x = b` with `A` given by `apply` and an approximate inverse
/// `precond`, iterating on `A M⁻¹ y = r₀` so the minimised residual is the
/// true one.
pub fn gmres(
    mut apply: impl FnMut(&[f64]) -> Vec<f64>,
    mut precond: impl FnMut(&[f64]) -> Vec<f64>,
    b: &[f64],
    x0: Option<Vec<f64>>,
    opts: &GmresOptions,
) -> GmresOutcome {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = x0.unwrap_or_else(|| vec![0.0; n]);
    if bnorm == 0.0 {
        return GmresOutcome {
            x: vec![0.0; n],
            residual: 0.0,
            iterations: 0,
            converged: true,
            stalled: false,
        };
    }

    let mut r: Vec<f64> = {
        let ax = apply(&x);
        b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect()
    };
    let mut rel = norm(&r) / bnorm;
    let mut iterations = 0;
    let mut history = vec![rel];
    let m = opts.restart.max(1);

    while rel > opts.tol && iterations < opts.max_iter {
        let beta = norm(&r);
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        let mut h = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k = 0;
        let mut stalled = false;
        let mut claimed = false;
        let cycle_start = rel;

        while k < m && iterations < opts.max_iter {
            let z = precond(&basis[k]);
            let mut w = apply(&z);
            // Two passes of classical Gram-Schmidt.
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let c = dot(&w, v);
                    h[i][k] += c;
                    axpy(&mut w, -c, v);
                }
            }
            let wn = norm(&w);
            h[k + 1][k] = wn;
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let denom = (h[k][k] * h[k][k] + h[k + 1][k] * h[k + 1][k]).sqrt();
            if denom == 0.0 {
                cs[k] = 1.0;
                sn[k] = 0.0;
            } else {
                cs[k] = h[k][k] / denom;
                sn[k] = h[k + 1][k] / denom;
            }
            h[k][k] = cs[k] * h[k][k] + sn[k] * h[k + 1][k];
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            iterations += 1;
            k += 1;
            let est = g[k].abs() / bnorm;
            history.push(est);
            if est <= opts.tol || wn == 0.0 {
                claimed = true;
                break;
            }
            if history.len() > opts.stall_window {
                let prev = history[history.len() - 1 - opts.stall_window];
                if est > opts.stall_ratio * prev {
                    stalled = true;
                    break;
                }
            }
            basis.push(w.iter().map(|v| v / wn).collect());
        }

        // Back substitution for the least-squares coefficients.
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= h[i][j] * y[j];
            }
            y[i] = if h[i][i] != 0.0 { s / h[i][i] } else { 0.0 };
        }
        let mut update = vec![0.0; n];
        for (yi, v) in y.iter().zip(&basis) {
            axpy(&mut update, *yi, v);
        }
        let dx = precond(&update);
        axpy(&mut x, 1.0, &dx);
        let ax = apply(&x);
        r = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        rel = norm(&r) / bnorm;
        // The recurrence claimed convergence but the true residual is stuck
        // at the rounding floor.
        if claimed && rel > opts.tol && rel > 0.5 * cycle_start {
            stalled = true;
        }
        if stalled {
            return GmresOutcome {
                x,
                residual: rel,
                iterations,
                converged: rel <= opts.tol,
                stalled: true,
            };
        }
    }

    GmresOutcome {
        x,
        residual: rel,
        iterations,
        converged: rel <= opts.tol,
        stalled: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn matvec(a: &DMatrix<f64>) -> impl FnMut(&[f64]) -> Vec<f64> + '_ {
        move |x| (a * DVector::from_column_slice(x)).as_slice().to_vec()
    }

    #[test]
    fn solves_nonsymmetric_system() {
        let n = 40;
        let a = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                4.0 + i as f64 * 0.1
            } else if j == i + 1 {
                1.5
            } else if i == j + 1 {
                -0.7
            } else {
                0.0
            }
        });
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let out = gmres(matvec(&a), |v| v.to_vec(), &b, None, &GmresOptions { tol: 1e-12, ..Default::default() });
        assert!(out.converged);
        let exact = a.clone().lu().solve(&DVector::from_column_slice(&b)).unwrap();
        for (x, e) in out.x.iter().zip(exact.iter()) {
            assert!((x - e).abs() < 1e-10);
        }
    }

    #[test]
    fn restarts_and_preconditioning() {
        let n = 60;
        let a = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                (i + 1) as f64
            } else if j == (i + 3) % n {
                0.5
            } else {
                0.0
            }
        });
        let diag: Vec<f64> = (0..n).map(|i| (i + 1) as f64).collect();
        let b = vec![1.0; n];
        let opts = GmresOptions { tol: 1e-11, restart: 5, ..Default::default() };
        let out = gmres(matvec(&a), |v| v.iter().zip(&diag).map(|(x, d)| x / d).collect(), &b, None, &opts);
        assert!(out.converged, "residual {}", out.residual);
        assert!(out.iterations > 5);
    }

    #[test]
    fn zero_rhs_and_stall_detection() {
        let a = DMatrix::<f64>::identity(4, 4);
        let out = gmres(matvec(&a), |v| v.to_vec(), &[0.0; 4], None, &GmresOptions::default());
        assert!(out.converged && out.x.iter().all(|&v| v == 0.0));

        // A cyclic shift has no useful Krylov progress until the full dimension.
        let n = 200;
        let shift = DMatrix::from_fn(n, n, |i, j| if i == (j + 1) % n { 1.0 } else { 0.0 });
        let mut b = vec![0.0; n];
        b[0] = 1.0;
        let opts = GmresOptions { stall_window: 20, ..Default::default() };
        let out = gmres(matvec(&shift), |v| v.to_vec(), &b, None, &opts);
        assert!(out.stalled && !out.converged);
    }
}
