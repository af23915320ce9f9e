//! Eigenvalues of small dense matrices: balancing, Hessenberg reduction and the
//! Francis double-shift QR iteration for the general case, cyclic Jacobi for the
//! symmetric case.

#![allow(clippy::needless_range_loop)]

use num_complex::Complex;

use super::Mat;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAX_QR_ITERATIONS: usize = 60;

/// All eigenvalues of a square matrix, in no particular order.
pub fn eigenvalues<S: Scalar>(m: &Mat<S>) -> Result<Vec<Complex<S>>> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("eigenvalues of non-square {}x{} matrix", m.rows(), m.cols())));
    }
    if !m.is_finite() {
        return Err(Error::Numerical("non-finite matrix entries".into()));
    }
    let n = m.rows();
    if n == 0 {
        return Ok(vec![]);
    }
    // Power-of-two normalization keeps squared entries clear of underflow and overflow.
    let big = m.data().iter().fold(S::zero(), |acc, v| acc.max(v.abs()));
    if big == S::zero() {
        return Ok(vec![Complex::new(S::zero(), S::zero()); n]);
    }
    let e = big.log2().round();
    let down = S::lit(2.0).powf(-e);
    let up = S::lit(2.0).powf(e);
    let mut a = m.to_rows();
    for row in a.iter_mut() {
        for v in row.iter_mut() {
            *v *= down;
        }
    }
    balance(&mut a);
    hessenberg(&mut a);
    Ok(hqr(&mut a)?.into_iter().map(|z| z * up).collect())
}

/// Largest eigenvalue modulus.
pub fn spectral_radius<S: Scalar>(m: &Mat<S>) -> Result<S> {
    Ok(eigenvalues(m)?.into_iter().map(|z| z.norm()).fold(S::zero(), S::max))
}

/// Largest real part among the eigenvalues.
pub fn spectral_abscissa<S: Scalar>(m: &Mat<S>) -> Result<S> {
    Ok(eigenvalues(m)?.into_iter().map(|z| z.re).fold(S::neg_infinity(), S::max))
}

/// Euclidean logarithmic norm: largest eigenvalue of `(M + M^T) / 2`.
pub fn log_norm<S: Scalar>(m: &Mat<S>) -> Result<S> {
    if !m.is_square() {
        return Err(Error::Dimension("log norm of non-square matrix".into()));
    }
    let sym = (m + &m.transpose()).scale(S::lit(0.5));
    Ok(symmetric_eigenvalues(&sym).into_iter().fold(S::neg_infinity(), S::max))
}

/// Eigenvalues of a symmetric matrix (only the upper triangle is trusted).
pub fn symmetric_eigenvalues<S: Scalar>(m: &Mat<S>) -> Vec<S> {
    let n = m.rows();
    let mut a = Mat::from_fn(n, n, |i, j| if i <= j { m[(i, j)] } else { m[(j, i)] });
    let scale = a.norm_max();
    if scale == S::zero() {
        return vec![S::zero(); n];
    }
    let tiny = S::epsilon() * S::epsilon() * scale * scale;
    for _sweep in 0..100 {
        let off: S = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off <= tiny {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == S::zero() {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (S::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + S::one()).sqrt());
                let c = S::one() / (t * t + S::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[(i, i)]).collect()
}

fn balance<S: Scalar>(a: &mut [Vec<S>]) {
    let n = a.len();
    let radix = S::lit(2.0);
    let sqrdx = radix * radix;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut r = S::zero();
            let mut c = S::zero();
            for j in 0..n {
                if j != i {
                    c += a[j][i].abs();
                    r += a[i][j].abs();
                }
            }
            if c != S::zero() && r != S::zero() {
                let mut g = r / radix;
                let mut f = S::one();
                let s = c + r;
                while c < g {
                    f *= radix;
                    c *= sqrdx;
                }
                g = r * radix;
                while c > g {
                    f /= radix;
                    c /= sqrdx;
                }
                if (c + r) / f < S::lit(0.95) * s {
                    done = false;
                    let g = S::one() / f;
                    for j in 0..n {
                        a[i][j] *= g;
                    }
                    for row in a.iter_mut() {
                        row[i] *= f;
                    }
                }
            }
        }
    }
}

/// Reduction to upper Hessenberg form by stabilized elementary similarity transforms.
fn hessenberg<S: Scalar>(a: &mut [Vec<S>]) {
    let n = a.len();
    for m in 1..n.saturating_sub(1) {
        let mut x = S::zero();
        let mut i = m;
        for j in m..n {
            if a[j][m - 1].abs() > x.abs() {
                x = a[j][m - 1];
                i = j;
            }
        }
        if i != m {
            a.swap(i, m);
            for row in a.iter_mut() {
                row.swap(i, m);
            }
        }
        if x != S::zero() {
            for i in m + 1..n {
                let mut y = a[i][m - 1];
                if y != S::zero() {
                    y /= x;
                    a[i][m - 1] = y;
                    for j in m..n {
                        let v = a[m][j];
                        a[i][j] -= y * v;
                    }
                    for row in a.iter_mut() {
                        let v = row[i];
                        row[m] += y * v;
                    }
                }
            }
        }
    }
    for i in 0..n {
        for j in 0..i.saturating_sub(1) {
            a[i][j] = S::zero();
        }
    }
}

fn sign<S: Scalar>(a: S, b: S) -> S {
    if b >= S::zero() {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Eigenvalues of an upper Hessenberg matrix (destroyed on output).
fn hqr<S: Scalar>(a: &mut [Vec<S>]) -> Result<Vec<Complex<S>>> {
    let n = a.len();
    let eps = S::epsilon();
    let mut out = vec![Complex::new(S::zero(), S::zero()); n];
    let mut anorm = S::zero();
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += a[i][j].abs();
        }
    }
    let mut nn = n as isize - 1;
    let mut t = S::zero();
    while nn >= 0 {
        let mut its = 0;
        loop {
            let nu = nn as usize;
            let mut l = nu;
            while l > 0 {
                let mut s = a[l - 1][l - 1].abs() + a[l][l].abs();
                if s == S::zero() {
                    s = anorm;
                }
                if a[l][l - 1].abs() <= eps * s {
                    a[l][l - 1] = S::zero();
                    break;
                }
                l -= 1;
            }
            let mut x = a[nu][nu];
            if l == nu {
                out[nu] = Complex::new(x + t, S::zero());
                nn -= 1;
            } else {
                let mut y = a[nu - 1][nu - 1];
                let mut w = a[nu][nu - 1] * a[nu - 1][nu];
                if l == nu - 1 {
                    let p = S::lit(0.5) * (y - x);
                    let q = p * p + w;
                    let mut z = q.abs().sqrt();
                    x += t;
                    if q >= S::zero() {
                        z = p + sign(z, p);
                        let mut lo = x + z;
                        let hi = x + z;
                        if z != S::zero() {
                            lo = x - w / z;
                        }
                        out[nu - 1] = Complex::new(hi, S::zero());
                        out[nu] = Complex::new(lo, S::zero());
                    } else {
                        out[nu - 1] = Complex::new(x + p, z);
                        out[nu] = Complex::new(x + p, -z);
                    }
                    nn -= 2;
                } else {
                    if its == MAX_QR_ITERATIONS {
                        return Err(Error::Numerical("QR iteration did not converge".into()));
                    }
                    if its == 10 || its == 20 || its == 40 {
                        t += x;
                        for (i, row) in a.iter_mut().enumerate().take(nu + 1) {
                            row[i] -= x;
                        }
                        let s = a[nu][nu - 1].abs() + a[nu - 1][nu - 2].abs();
                        x = S::lit(0.75) * s;
                        y = x;
                        w = S::lit(-0.4375) * s * s;
                    }
                    its += 1;
                    let mut m = nu - 2;
                    let (mut p, mut q, mut r);
                    loop {
                        let z = a[m][m];
                        let rr = x - z;
                        let ss = y - z;
                        p = (rr * ss - w) / a[m + 1][m] + a[m][m + 1];
                        q = a[m + 1][m + 1] - z - rr - ss;
                        r = a[m + 2][m + 1];
                        let s = p.abs() + q.abs() + r.abs();
                        p /= s;
                        q /= s;
                        r /= s;
                        if m == l {
                            break;
                        }
                        let u = a[m][m - 1].abs() * (q.abs() + r.abs());
                        let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
                        if u <= eps * v {
                            break;
                        }
                        m -= 1;
                    }
                    for i in m + 2..=nu {
                        a[i][i - 2] = S::zero();
                        if i != m + 2 {
                            a[i][i - 3] = S::zero();
                        }
                    }
                    let mut k = m;
                    while k < nu {
                        if k != m {
                            p = a[k][k - 1];
                            q = a[k + 1][k - 1];
                            r = S::zero();
                            if k + 1 != nu {
                                r = a[k + 2][k - 1];
                            }
                            x = p.abs() + q.abs() + r.abs();
                            if x != S::zero() {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        let s = sign((p * p + q * q + r * r).sqrt(), p);
                        if s != S::zero() {
                            if k == m {
                                if l != m {
                                    a[k][k - 1] = -a[k][k - 1];
                                }
                            } else {
                                a[k][k - 1] = -s * x;
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            let z = r / s;
                            q /= p;
                            r /= p;
                            for j in k..=nu {
                                let mut pp = a[k][j] + q * a[k + 1][j];
                                if k + 1 != nu {
                                    pp += r * a[k + 2][j];
                                    a[k + 2][j] -= pp * z;
                                }
                                a[k + 1][j] -= pp * y;
                                a[k][j] -= pp * x;
                            }
                            let mmin = nu.min(k + 3);
                            for row in a.iter_mut().take(mmin + 1).skip(l) {
                                let mut pp = x * row[k] + y * row[k + 1];
                                if k + 1 != nu {
                                    pp += z * row[k + 2];
                                    row[k + 2] -= pp * r;
                                }
                                row[k + 1] -= pp * q;
                                row[k] -= pp;
                            }
                        }
                        k += 1;
                    }
                }
            }
            if nn < 0 || l + 1 >= nn as usize {
                break;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_and_huge_scales() {
        let m: Mat<f64> = Mat::from_rows(&[[6.53e-163, 7.4e-164], [7.4e-164, 4.97e-162]]).unwrap();
        let (a, b, d) = (6.53f64, 0.74, 49.7);
        let want = ((a + d) + ((a - d) * (a - d) + 4.0 * b * b).sqrt()) / 2.0 * 1e-163;
        let r = spectral_radius(&m).unwrap();
        assert!((r / want - 1.0).abs() <= 1e-14, "{r} vs {want}");
        let h = m.scale(1e300).scale(1e162);
        let rh = spectral_radius(&h).unwrap();
        assert!((rh / (want * 1e163 * 1e299) - 1.0).abs() <= 1e-14, "{rh}");
    }

    #[test]
    fn identity_and_nilpotent() {
        assert!((spectral_radius(&Mat::<f64>::identity(3)).unwrap() - 1.0).abs() < 1e-15);
        let n = Mat::from_rows(&[[0.0, 1.0], [0.0, 0.0]]).unwrap();
        assert_eq!(spectral_radius(&n).unwrap(), 0.0);
    }

    #[test]
    fn two_by_two_characteristic_polynomial() {
        let m = Mat::from_rows(&[[0.6703, 0.06703], [1.4841, 0.9671]]).unwrap();
        let (tr, det) = (m.trace(), m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]);
        let disc: f64 = tr * tr - 4.0 * det;
        let oracle = (tr + disc.sqrt()) / 2.0;
        let rho = spectral_radius(&m).unwrap();
        assert!((rho - oracle).abs() < 1e-12);
        assert!((rho - 1.167).abs() < 1e-3);
    }

    #[test]
    fn complex_pair() {
        let m = Mat::<f64>::from_rows(&[[1.0, -2.0], [3.0, 1.0]]).unwrap();
        // 1 ± i sqrt(6)
        let ev = eigenvalues(&m).unwrap();
        for z in ev {
            assert!((z.re - 1.0).abs() < 1e-13);
            assert!((z.im.abs() - 6f64.sqrt()).abs() < 1e-13);
        }
    }

    #[test]
    fn companion_matrix_roots() {
        // (x-1)(x-2)(x-3)(x+4)(x+0.5) = x^5 - 1.5 x^4 - 14 x^3 + 31.5 x^2 - 5 x - 12
        let coeffs = [-1.5, -14.0, 31.5, -5.0, -12.0];
        let m = Mat::from_fn(5, 5, |i, j| if i == 0 { -coeffs[j] } else if j + 1 == i { 1.0 } else { 0.0 });
        let mut re: Vec<f64> = eigenvalues(&m).unwrap().iter().map(|z| z.re).collect();
        re.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (got, want) in re.iter().zip([-4.0, -0.5, 1.0, 2.0, 3.0]) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
    }

    #[test]
    fn log_norm_examples() {
        assert_eq!(log_norm(&Mat::diag(&[-1.0, -2.0])).unwrap(), -1.0);
        let skew = Mat::from_rows(&[[0.0, 1.0], [-1.0, 0.0]]).unwrap();
        assert_eq!(log_norm(&skew).unwrap(), 0.0);
        let m = Mat::from_rows(&[[-1.0, 1.0], [0.0, -0.1]]).unwrap();
        // symmetric part [[-1, 0.5], [0.5, -0.1]]: (tr + sqrt(tr^2 - 4 det)) / 2
        let oracle = (-1.1 + (1.21f64 + 0.6).sqrt()) / 2.0;
        assert!((log_norm(&m).unwrap() - oracle).abs() < 1e-14);
        assert!((oracle - 0.1226812).abs() < 1e-6);
    }

    #[test]
    fn jacobi_matches_closed_form() {
        let m = Mat::from_rows(&[[2.0, 1.0, 0.0], [1.0, 2.0, 1.0], [0.0, 1.0, 2.0]]).unwrap();
        let mut ev = symmetric_eigenvalues(&m);
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let r2 = 2f64.sqrt();
        for (g, w) in ev.iter().zip([2.0 - r2, 2.0, 2.0 + r2]) {
            assert!((g - w).abs() < 1e-14);
        }
    }

    #[test]
    fn single_precision_radius() {
        let m = Mat::from_rows(&[[0.5f32, 0.25], [0.1, 0.3]]).unwrap();
        let tr = 0.8f32;
        let det = 0.15f32 - 0.025;
        let oracle = (tr + (tr * tr - 4.0 * det).sqrt()) / 2.0;
        assert!((spectral_radius(&m).unwrap() - oracle).abs() < 1e-6);
    }
}
