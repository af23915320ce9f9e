use super::Mat;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const NODES: usize = 8;
const MAX_DEPTH: usize = 40;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Adaptive Gauss-Legendre integration of a matrix-valued function on `[a, b]`.
///
/// A panel is accepted when the 8-point rule on it agrees with the sum over its two
/// halves to within `tol` scaled by the panel's share of the interval.
pub fn integrate<S: Scalar>(
    f: &dyn Fn(S) -> Result<Mat<S>>,
    a: S,
    b: S,
    tol: S,
) -> Result<Mat<S>> {
    let (x, w) = gauss_legendre(NODES);
    let rule = |lo: S, hi: S| -> Result<Mat<S>> {
        let half = (hi - lo) * S::lit(0.5);
        let mid = (hi + lo) * S::lit(0.5);
        let mut acc: Option<Mat<S>> = None;
        for (xi, wi) in x.iter().zip(&w) {
            let v = f(mid + half * S::lit(*xi))?.scale(half * S::lit(*wi));
            acc = Some(match acc {
                None => v,
                Some(s) => &s + &v,
            });
        }
        Ok(acc.expect("at least one node"))
    };
    let whole = rule(a, b)?;
    recurse(&rule, a, b, whole, tol, b - a, 0)
}

fn recurse<S: Scalar>(
    rule: &dyn Fn(S, S) -> Result<Mat<S>>,
    a: S,
    b: S,
    whole: Mat<S>,
    tol: S,
    span: S,
    depth: usize,
) -> Result<Mat<S>> {
    let mid = (a + b) * S::lit(0.5);
    let left = rule(a, mid)?;
    let right = rule(mid, b)?;
    let refined = &left + &right;
    let err = (&refined - &whole).norm_max();
    let budget = tol * (b - a) / span;
    if err <= budget || err <= S::epsilon() * refined.norm_max() {
        return Ok(refined);
    }
    if depth >= MAX_DEPTH {
        return Err(Error::Numerical("adaptive quadrature did not converge".into()));
    }
    let l = recurse(rule, a, mid, left, tol, span, depth + 1)?;
    let r = recurse(rule, mid, b, right, tol, span, depth + 1)?;
    Ok(&l + &r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two() {
        let (x, w) = gauss_legendre(8);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn polynomial_exactness() {
        let f = |t: f64| Ok(Mat::scalar(t.powi(9) - 3.0 * t * t));
        let v = integrate(&f, 0.0, 2.0, 1e-12).unwrap();
        assert!((v[(0, 0)] - (2f64.powi(10) / 10.0 - 8.0)).abs() < 1e-11);
    }

    #[test]
    fn oscillatory() {
        let f = |t: f64| Ok(Mat::from_rows(&[[t.sin(), (10.0 * t).cos()]]).unwrap());
        let v = integrate(&f, 0.0, 10.0, 1e-11).unwrap();
        assert!((v[(0, 0)] - (1.0 - 10f64.cos())).abs() < 1e-10);
        assert!((v[(0, 1)] - 100f64.sin() / 10.0).abs() < 1e-10);
    }
}
