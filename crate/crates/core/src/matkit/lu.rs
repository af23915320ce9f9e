use super::Mat;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Reciprocal 1-norm condition number below which a matrix counts as singular.
pub const SINGULARITY_RCOND: f64 = 1e-12;

/// LU factorization with partial pivoting, `P A = L U`.
#[derive(Clone, Debug)]
pub struct Lu<S> {
    lu: Mat<S>,
    perm: Vec<usize>,
    singular: bool,
}

impl<S: Scalar> Lu<S> {
    pub fn new(a: &Mat<S>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Dimension(format!("LU of non-square {}x{} matrix", a.rows(), a.cols())));
        }
        let n = a.rows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut singular = false;
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| lu[(i, k)].abs().partial_cmp(&lu[(j, k)].abs()).unwrap())
                .unwrap();
            if lu[(p, k)] == S::zero() {
                singular = true;
                continue;
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    let t = lu[(p, j)];
                    lu[(p, j)] = lu[(k, j)];
                    lu[(k, j)] = t;
                }
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                if f != S::zero() {
                    for j in k + 1..n {
                        let u = lu[(k, j)];
                        lu[(i, j)] -= f * u;
                    }
                }
            }
        }
        Ok(Lu { lu, perm, singular })
    }

    pub fn is_singular(&self) -> bool {
        self.singular
    }

    /// Solves `A X = B` for a matrix right-hand side.
    pub fn solve(&self, b: &Mat<S>) -> Result<Mat<S>> {
        let n = self.lu.rows();
        if b.rows() != n {
            return Err(Error::Dimension(format!("right-hand side has {} rows, expected {n}", b.rows())));
        }
        if self.singular {
            return Err(Error::Singular { role: "matrix".into(), rcond: 0.0 });
        }
        let mut x = Mat::from_fn(n, b.cols(), |i, j| b[(self.perm[i], j)]);
        for c in 0..b.cols() {
            for i in 0..n {
                let mut s = x[(i, c)];
                for k in 0..i {
                    s -= self.lu[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s;
            }
            for i in (0..n).rev() {
                let mut s = x[(i, c)];
                for k in i + 1..n {
                    s -= self.lu[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s / self.lu[(i, i)];
            }
        }
        Ok(x)
    }
}

/// Inverse of `m` with a reciprocal-condition guard; `role` names the matrix in errors.
pub fn invert<S: Scalar>(m: &Mat<S>, role: &str) -> Result<Mat<S>> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("cannot invert {}x{} {role}", m.rows(), m.cols())));
    }
    let lu = Lu::new(m)?;
    if lu.is_singular() {
        return Err(Error::Singular { role: role.to_string(), rcond: 0.0 });
    }
    let inv = lu.solve(&Mat::identity(m.rows()))?;
    let rcond = (S::one() / (m.norm1() * inv.norm1())).as_f64();
    if !(rcond >= SINGULARITY_RCOND) {
        return Err(Error::Singular { role: role.to_string(), rcond });
    }
    Ok(inv)
}

/// Solves `A X = B` without the conditioning guard.
pub fn solve<S: Scalar>(a: &Mat<S>, b: &Mat<S>) -> Result<Mat<S>> {
    Lu::new(a)?.solve(b)
}
