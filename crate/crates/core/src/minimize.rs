//! Bracketed minimisation of quasi-convex functions on `(0, ∞)` by Brent's
//! method, carried out in `ln x` so tolerances are relative.

use crate::error::{Error, Result};

const INV_PHI2: f64 = 0.381_966_011_250_105_2;
const SAMPLES: usize = 5;
const MAX_EXPANSIONS: usize = 60;

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: f64,
    pub value: f64,
    /// Three-point bracket found before refinement.
    pub bracket: (f64, f64),
    pub evaluations: usize,
}

/// Minimises `f` over `x > 0`, starting from the window `[lo, hi]` and
/// expanding it geometrically. Expansion to the right stops at `cap`.
pub fn minimize_positive(
    mut f: impl FnMut(f64) -> Result<f64>,
    lo: f64,
    hi: f64,
    cap: f64,
    rel_tol: f64,
) -> Result<Minimum> {
    if !(lo > 0.0 && hi > lo && cap >= hi && rel_tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bad search window lo={lo} hi={hi} cap={cap} tol={rel_tol}"
        )));
    }
    let mut evaluations = 0;
    let mut eval = |t: f64, n: &mut usize| -> Result<f64> {
        *n += 1;
        let v = f(t.exp())?;
        if v.is_nan() {
            return Err(Error::NonFinite);
        }
        Ok(v)
    };

    let (mut a, mut c) = (lo.ln(), hi.ln());
    let mut pts: Vec<(f64, f64)> = Vec::new();
    let mut expansions = 0;
    let (left, mid, right) = loop {
        let step = (c - a) / (SAMPLES - 1) as f64;
        for i in 0..SAMPLES {
            let t = if i == SAMPLES - 1 { c } else { a + step * i as f64 };
            if !pts.iter().any(|p| (p.0 - t).abs() <= 1e-15 * t.abs().max(1.0)) {
                let v = eval(t, &mut evaluations)?;
                pts.push((t, v));
            }
        }
        pts.sort_by(|p, q| p.0.total_cmp(&q.0));
        let window: Vec<(f64, f64)> = pts.iter().copied().filter(|p| p.0 >= a && p.0 <= c).collect();
        let best = (0..window.len())
            .min_by(|&i, &j| window[i].1.total_cmp(&window[j].1))
            .unwrap();
        if best > 0 && best + 1 < window.len() {
            break (window[best - 1], window[best], window[best + 1]);
        }
        expansions += 1;
        if expansions > MAX_EXPANSIONS {
            return Err(Error::Bracket { lambda_hi: c.exp() });
        }
        if best == 0 {
            c = window[1].0;
            a -= 3.0 * (c - a).max(1.0);
        } else {
            if c >= cap.ln() {
                return Err(Error::Bracket { lambda_hi: c.exp() });
            }
            a = window[window.len() - 2].0;
            c = (c + (c - a).max(1.0)).min(cap.ln());
        }
    };
    let bracket = (left.0.exp(), right.0.exp());

    // Brent: golden-section steps, replaced by parabolic ones when those
    // land safely inside the bracket.
    let (mut a, mut b) = (left.0, right.0);
    let (mut x, mut fx) = mid;
    let (mut w, mut fw) = mid;
    let (mut v, mut fv) = mid;
    let (mut d, mut e): (f64, f64) = (0.0, 0.0);
    let tol1 = 0.25 * rel_tol;
    loop {
        let m = 0.5 * (a + b);
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let prev = e;
            if p.abs() < (0.5 * q * prev).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(m - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= m { a - x } else { b - x };
            d = INV_PHI2 * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = eval(u, &mut evaluations)?;
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            (v, fv) = (w, fw);
            (w, fw) = (x, fx);
            (x, fx) = (u, fu);
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                (v, fv) = (w, fw);
                (w, fw) = (u, fu);
            } else if fu <= fv || v == x || v == w {
                (v, fv) = (u, fu);
            }
        }
    }
    Ok(Minimum {
        x: x.exp(),
        value: fx,
        bracket,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_minimum_of_kpp_objective() {
        let m = minimize_positive(|l| Ok((1.0 + l * l) / l), 1e-3, 10.0, 1e6, 1e-8).unwrap();
        assert!((m.x - 1.0).abs() < 1e-7);
        assert!((m.value - 2.0).abs() < 1e-12);
        assert!(m.bracket.0 < 1.0 && m.bracket.1 > 1.0);
    }

    #[test]
    fn expands_right_and_left() {
        let m = minimize_positive(|l| Ok((l / 500.0).ln().powi(2)), 1e-3, 1.0, 1e6, 1e-9).unwrap();
        assert!((m.x / 500.0 - 1.0).abs() < 1e-8);
        let m = minimize_positive(|l| Ok((l / 1e-7).ln().powi(2)), 1.0, 10.0, 1e6, 1e-9).unwrap();
        assert!((m.x / 1e-7 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn reports_missing_bracket() {
        let e = minimize_positive(|l| Ok(-l), 1e-3, 1.0, 100.0, 1e-6).unwrap_err();
        assert!(matches!(e, Error::Bracket { lambda_hi } if (lambda_hi - 100.0).abs() < 1e-9));
        assert!(minimize_positive(|l| Ok(l), 1.0, 0.5, 100.0, 1e-6).is_err());
    }

    #[test]
    fn propagates_errors() {
        let e = minimize_positive(|_| Err(Error::NonFinite), 1e-3, 1.0, 100.0, 1e-6);
        assert!(matches!(e, Err(Error::NonFinite)));
    }
}

#[cfg(test)]
mod properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn kpp_shaped_objectives(a in 0.01f64..100.0, b in 0.01f64..100.0) {
            // (a + b l²)/l is minimised at √(a/b) with value 2√(ab).
            let m = minimize_positive(|l| Ok((a + b * l * l) / l), 1e-3, 10.0, 1e8, 1e-8).unwrap();
            let x = (a / b).sqrt();
            prop_assert!((m.x - x).abs() <= 1e-6 * x);
            prop_assert!((m.value - 2.0 * (a * b).sqrt()).abs() <= 1e-10 * m.value);
            prop_assert!(m.bracket.0 <= m.x && m.x <= m.bracket.1);
        }
    }
}
