//! Matrix exponential by scaling and squaring with diagonal Padé approximants
//! (degrees 3, 5, 7, 9 and 13), plus block-augmented integrals of exponentials.

use super::lu::solve;
use super::Mat;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const THETA_3: f64 = 1.495585217958292e-2;
const THETA_5: f64 = 2.53939833006323e-1;
const THETA_7: f64 = 9.504178996162932e-1;
const THETA_9: f64 = 2.097847961257068e0;
const THETA_13: f64 = 5.371920351148152e0;

const PADE_3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE_5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE_7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const PADE_9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE_13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// `e^{M t}`.
pub fn mat_exp<S: Scalar>(m: &Mat<S>, t: S) -> Result<Mat<S>> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("exponential of non-square {}x{} matrix", m.rows(), m.cols())));
    }
    if !t.is_finite() || !m.is_finite() {
        return Err(Error::Numerical("non-finite input to matrix exponential".into()));
    }
    let a = m.scale(t);
    let n = a.rows();
    let norm = a.norm1().as_f64();
    if norm == 0.0 {
        return Ok(Mat::identity(n));
    }
    let id = Mat::identity(n);
    let a2 = &a * &a;

    let low = |coef: &[f64]| -> (Mat<S>, Mat<S>) {
        // Even and odd parts of the numerator polynomial, built from powers of A^2.
        let mut u = id.scale(S::lit(coef[1]));
        let mut v = id.scale(S::lit(coef[0]));
        let mut pow = id.clone();
        for k in 1..coef.len() / 2 {
            pow = &pow * &a2;
            u = &u + &pow.scale(S::lit(coef[2 * k + 1]));
            v = &v + &pow.scale(S::lit(coef[2 * k]));
        }
        (&a * &u, v)
    };

    let (u, v, squarings) = if norm <= THETA_3 {
        let (u, v) = low(&PADE_3);
        (u, v, 0)
    } else if norm <= THETA_5 {
        let (u, v) = low(&PADE_5);
        (u, v, 0)
    } else if norm <= THETA_7 {
        let (u, v) = low(&PADE_7);
        (u, v, 0)
    } else if norm <= THETA_9 {
        let (u, v) = low(&PADE_9);
        (u, v, 0)
    } else {
        let s = (norm / THETA_13).log2().ceil().max(0.0) as i32;
        let a = a.scale(S::lit(2f64.powi(-s)));
        let b = |k: usize| S::lit(PADE_13[k]);
        let a2 = &a * &a;
        let a4 = &a2 * &a2;
        let a6 = &a4 * &a2;
        let inner_u = &(&a6.scale(b(13)) + &a4.scale(b(11))) + &a2.scale(b(9));
        let u = &(&(&(&(&a6 * &inner_u) + &a6.scale(b(7))) + &a4.scale(b(5))) + &a2.scale(b(3)))
            + &id.scale(b(1));
        let u = &a * &u;
        let inner_v = &(&a6.scale(b(12)) + &a4.scale(b(10))) + &a2.scale(b(8));
        let v = &(&(&(&(&a6 * &inner_v) + &a6.scale(b(6))) + &a4.scale(b(4))) + &a2.scale(b(2)))
            + &id.scale(b(0));
        (u, v, s)
    };

    let mut r = solve(&(&v - &u), &(&v + &u))?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    if !r.is_finite() {
        return Err(Error::Numerical("matrix exponential overflowed".into()));
    }
    Ok(r)
}

/// `(e^{D h}, ∫_0^h e^{D(h-s)} C ds)` read off `exp(h [[D, C], [0, 0]])`.
pub fn exp_with_forced_integral<S: Scalar>(d: &Mat<S>, c: &Mat<S>, h: S) -> Result<(Mat<S>, Mat<S>)> {
    if !d.is_square() || c.rows() != d.rows() {
        return Err(Error::Dimension(format!(
            "forced integral needs square D and matching C, got {}x{} and {}x{}",
            d.rows(),
            d.cols(),
            c.rows(),
            c.cols()
        )));
    }
    if h < S::zero() {
        return Err(Error::Precondition("negative duration".into()));
    }
    let (m, n) = (d.rows(), c.cols());
    let aug = Mat::from_blocks(d, c, &Mat::zeros(n, m), &Mat::zeros(n, n))?;
    let e = mat_exp(&aug, h)?;
    Ok((e.block(0, 0, m, m), e.block(0, m, m, n)))
}

/// First and second integrals of `e^{D s}` over `[0, h]`.
#[derive(Clone, Debug)]
pub struct ExpIntegrals<S> {
    /// `e^{D h}`
    pub exp: Mat<S>,
    /// `∫_0^h e^{D s} ds`
    pub first: Mat<S>,
    /// `∫_0^h ∫_0^s e^{D r} dr ds`
    pub second: Mat<S>,
}

/// Reads all three quantities off one exponential of `[[D, I, 0], [0, 0, I], [0, 0, 0]]`.
pub fn exp_integrals<S: Scalar>(d: &Mat<S>, h: S) -> Result<ExpIntegrals<S>> {
    if !d.is_square() {
        return Err(Error::Dimension("exp_integrals needs a square matrix".into()));
    }
    let m = d.rows();
    let mut aug = Mat::zeros(3 * m, 3 * m);
    aug.set_block(0, 0, d);
    aug.set_block(0, m, &Mat::identity(m));
    aug.set_block(m, 2 * m, &Mat::identity(m));
    let e = mat_exp(&aug, h)?;
    Ok(ExpIntegrals {
        exp: e.block(0, 0, m, m),
        first: e.block(0, m, m, m),
        second: e.block(0, 2 * m, m, m),
    })
}

/// `∫_0^h e^{X(h-s)} Y e^{X s} ds`, the off-diagonal block of `exp(h [[X, Y], [0, X]])`.
pub fn van_loan_integral<S: Scalar>(x: &Mat<S>, y: &Mat<S>, h: S) -> Result<Mat<S>> {
    if !x.is_square() || y.shape() != x.shape() {
        return Err(Error::Dimension("van Loan integral needs equal square blocks".into()));
    }
    let n = x.rows();
    let aug = Mat::from_blocks(x, y, &Mat::zeros(n, n), x)?;
    Ok(mat_exp(&aug, h)?.block(0, n, n, n))
}
