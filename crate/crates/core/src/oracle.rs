//! Dense reference solutions for small grids. The discrete operators are
//! assembled column by column and handed to direct factorizations, giving an
//! independent check on the iterative solvers.

use nalgebra::{DMatrix, DVector};

use crate::cell::{check_direction, CellOperator};
use crate::eigen::EigenOperator;
use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::torus::ScalarField;

/// Largest grid the dense routines accept.
pub const MAX_DENSE_POINTS: usize = 4096;

fn assemble(n: usize, apply: impl Fn(&[f64]) -> Vec<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let mut unit = vec![0.0; n];
    for j in 0..n {
        unit[j] = 1.0;
        let col = apply(&unit);
        m.set_column(j, &DVector::from_vec(col));
        unit[j] = 0.0;
    }
    m
}

fn check_size(flow: &FlowField) -> Result<usize> {
    let n = flow.grid().len();
    if n > MAX_DENSE_POINTS {
        return Err(Error::InvalidArgument(format!(
            "{n} grid points exceed the dense limit {MAX_DENSE_POINTS}"
        )));
    }
    Ok(n)
}

/// Mean-zero solution of the discrete cell problem by LU on the operator
/// bordered with the mean constraint.
pub fn dense_cell_solution(flow: &FlowField, e: &[f64], amplitude: f64) -> Result<ScalarField> {
    check_direction(e, flow.grid().dim())?;
    let n = check_size(flow)?;
    let op = CellOperator::new(flow, amplitude);
    let core = assemble(n, |z| op.apply(z));
    let mut m = DMatrix::zeros(n + 1, n + 1);
    m.view_mut((0, 0), (n, n)).copy_from(&core);
    for i in 0..n {
        m[(i, n)] = 1.0;
        m[(n, i)] = 1.0;
    }
    let mut rhs = DVector::zeros(n + 1);
    rhs.rows_mut(0, n).copy_from_slice(flow.along(e).values());
    let sol = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidArgument("singular bordered cell operator".into()))?;
    ScalarField::new(flow.grid(), sol.rows(0, n).iter().copied().collect())
}

/// Eigenvalue of largest real part of the assembled eigen operator.
pub fn dense_principal_eigenvalue(flow: &FlowField, e: &[f64], amplitude: f64, lambda: f64) -> Result<f64> {
    check_direction(e, flow.grid().dim())?;
    let n = check_size(flow)?;
    let op = EigenOperator::new(flow, e, amplitude, lambda);
    let m = assemble(n, |z| op.apply(z));
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(None, |best: Option<f64>, v| Some(best.map_or(v, |b| b.max(v))))
        .ok_or_else(|| Error::InvalidArgument("empty operator".into()))
}
