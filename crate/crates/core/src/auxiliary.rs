//! Auxiliary systems: reduced modes `A - B D^{-1} C`, the averaged matrices
//! `Lambda(T, sigma)`, the first-order expansion of the period flow, and lifting
//! of instability certificates back to the perturbed system.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flows::{eps_flow, flow, FlowResult};
use crate::matkit::{exp_integrals, invert, mat_exp, quad, spectral_radius, Mat};
use crate::model::{BlockSystem, DecayEstimate, Piece, PwcSignal};
use crate::rng;
use crate::scalar::Scalar;

/// `A - B D^{-1} C` for every mode, in order.
pub fn reduced_modes<S: Scalar>(sys: &BlockSystem<S>) -> Result<Vec<Mat<S>>> {
    sys.modes()
        .iter()
        .enumerate()
        .map(|(i, md)| {
            let dinv = invert(&md.d, &format!("D of mode {i}"))?;
            Ok(&md.a - &(&md.b * &(&dinv * &md.c)))
        })
        .collect()
}

/// The pieces of `Lambda(T, sigma) = (Lambda1 + Lambda2 (I - PhiD)^{-1} Lambda0) / T`.
#[derive(Clone, Debug, Serialize)]
pub struct LambdaParts<S: Scalar> {
    /// `∫_0^T Phi_D(T, s) C(s) ds`
    pub lambda0: Mat<S>,
    /// `∫_0^T A(s) + B(s) Lambda0(s) ds`
    pub lambda1: Mat<S>,
    /// `∫_0^T B(s) Phi_D(s, 0) ds`
    pub lambda2: Mat<S>,
    pub phi_d: Mat<S>,
    pub lambda: Mat<S>,
    pub t: S,
    pub signal_digest: String,
}

impl<S: Scalar> LambdaParts<S> {
    /// Recomputes `Lambda` from the other parts.
    pub fn reconstruct(&self) -> Result<Mat<S>> {
        let k = monodromy_inverse(&self.phi_d)?;
        Ok((&self.lambda1 + &(&self.lambda2 * &(&k * &self.lambda0))).scale(S::one() / self.t))
    }

    /// `(I - PhiD)^{-1} Lambda0`, the leading term of the graph map `Q(eps)`.
    pub fn q0(&self) -> Result<Mat<S>> {
        Ok(&monodromy_inverse(&self.phi_d)? * &self.lambda0)
    }

    pub fn report(&self, sig: &PwcSignal<S>) -> LambdaReport<S> {
        LambdaReport {
            t: self.t,
            pieces: sig.clone(),
            lambda: self.lambda.clone(),
            parts: PartsJson {
                lambda0: self.lambda0.clone(),
                lambda1: self.lambda1.clone(),
                lambda2: self.lambda2.clone(),
                phi_d: self.phi_d.clone(),
            },
        }
    }
}

/// Lambda-report JSON layout.
#[derive(Clone, Debug, Serialize)]
pub struct LambdaReport<S: Scalar> {
    #[serde(rename = "T")]
    pub t: S,
    pub pieces: PwcSignal<S>,
    #[serde(rename = "Lambda")]
    pub lambda: Mat<S>,
    pub parts: PartsJson<S>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PartsJson<S: Scalar> {
    #[serde(rename = "Lambda0")]
    pub lambda0: Mat<S>,
    #[serde(rename = "Lambda1")]
    pub lambda1: Mat<S>,
    #[serde(rename = "Lambda2")]
    pub lambda2: Mat<S>,
    #[serde(rename = "PhiD")]
    pub phi_d: Mat<S>,
}

fn monodromy_inverse<S: Scalar>(phi_d: &Mat<S>) -> Result<Mat<S>> {
    let m = phi_d.rows();
    invert(&(&Mat::identity(m) - phi_d), "I - PhiD (fast monodromy not contractive)")
}

/// Exact piecewise accumulation: on a piece of length `h` with constant blocks,
/// `Lambda0(s0 + r) = e^{D r} Lambda0(s0) + ∫_0^r e^{D u} du C`, so both integrals
/// reduce to the first and second integrals of `e^{D u}`.
pub fn lambda_parts<S: Scalar>(sys: &BlockSystem<S>, sig: &PwcSignal<S>) -> Result<LambdaParts<S>> {
    sig.check_modes(sys.modes().len())?;
    let (n, m) = (sys.n(), sys.m());
    let mut l0 = Mat::zeros(m, n);
    let mut l1 = Mat::zeros(n, n);
    let mut l2 = Mat::zeros(n, m);
    let mut f = Mat::identity(m);
    for p in sig.pieces() {
        let md = &sys.modes()[p.mode];
        let ints = exp_integrals(&md.d, p.dwell)?;
        l2 = &l2 + &(&md.b * &(&ints.first * &f));
        let inner = &(&ints.first * &l0) + &(&ints.second * &md.c);
        l1 = &(&l1 + &md.a.scale(p.dwell)) + &(&md.b * &inner);
        l0 = &(&ints.exp * &l0) + &(&ints.first * &md.c);
        f = &ints.exp * &f;
    }
    let t = sig.total_duration();
    let k = monodromy_inverse(&f)?;
    let lambda = (&l1 + &(&l2 * &(&k * &l0))).scale(S::one() / t);
    Ok(LambdaParts { lambda0: l0, lambda1: l1, lambda2: l2, phi_d: f, lambda, t, signal_digest: sig.digest() })
}

/// Settings for sampling the set of averaged matrices.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckSampleConfig {
    pub max_pieces: usize,
    pub dwell_min: f64,
    pub dwell_max: f64,
    pub count: usize,
    pub seed: u64,
}

impl Default for CheckSampleConfig {
    fn default() -> Self {
        CheckSampleConfig { max_pieces: 4, dwell_min: 5e-2, dwell_max: 20.0, count: 512, seed: 0 }
    }
}

/// One sampled `Lambda(T, sigma)` with the signal that produced it.
#[derive(Clone, Debug, Serialize)]
pub struct CheckMode<S: Scalar> {
    pub lambda: Mat<S>,
    pub signal: PwcSignal<S>,
}

const DWELL_GRID: usize = 16;

fn sample_signal<S: Scalar>(modes: usize, cfg: &CheckSampleConfig, k: u64) -> PwcSignal<S> {
    let mut r = rng::substream(cfg.seed, "check-sample", k);
    let len = 1 + (k as usize) % cfg.max_pieces.max(1);
    let (lo, hi) = (cfg.dwell_min.ln(), cfg.dwell_max.ln());
    let pieces = (0..len)
        .map(|_| {
            let mode = r.gen_range(0..modes);
            let dwell = if r.gen_bool(0.5) {
                let i = r.gen_range(0..DWELL_GRID);
                (lo + (hi - lo) * i as f64 / (DWELL_GRID - 1) as f64).exp()
            } else {
                rng::log_uniform(&mut r, cfg.dwell_min, cfg.dwell_max)
            };
            Piece { mode, dwell: S::lit(dwell) }
        })
        .collect();
    PwcSignal::new(pieces).expect("positive dwells")
}

/// Reduced modes (from constant signals) first, then `extra`, then `count` seeded
/// random signals stratified by piece count. Signals whose fast monodromy is not
/// invertible are skipped.
pub fn sample_check_modes<S: Scalar>(
    sys: &BlockSystem<S>,
    cfg: &CheckSampleConfig,
    extra: &[PwcSignal<S>],
) -> Result<Vec<CheckMode<S>>> {
    if cfg.max_pieces == 0 || !(cfg.dwell_min > 0.0) || !(cfg.dwell_max >= cfg.dwell_min) {
        return Err(Error::Precondition("check sampler needs max_pieces >= 1 and 0 < dwell_min <= dwell_max".into()));
    }
    let mut out: Vec<CheckMode<S>> = reduced_modes(sys)?
        .into_iter()
        .enumerate()
        .map(|(i, lambda)| CheckMode { lambda, signal: PwcSignal::constant(i, S::one()) })
        .collect();
    let k = sys.modes().len();
    let signals: Vec<PwcSignal<S>> = extra
        .iter()
        .cloned()
        .chain((0..cfg.count as u64).map(|i| sample_signal(k, cfg, i)))
        .collect();
    let sampled: Vec<Option<CheckMode<S>>> = signals
        .into_par_iter()
        .map(|signal| lambda_parts(sys, &signal).ok().map(|p| CheckMode { lambda: p.lambda, signal }))
        .collect();
    out.extend(sampled.into_iter().flatten());
    Ok(out)
}

/// Explicit bound `C2 + 2 c C1^2 (1 + Tbar)` on every `|Lambda(T, sigma)|`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CheckBound<S> {
    pub c1: S,
    pub c2: S,
    pub t_bar: S,
    pub value: S,
}

/// With `|Phi_D(t, s)| <= c e^{-alpha (t - s)}`: `|Lambda0|, |Lambda2| <= C1 min(1, T)`
/// for `C1 = c max(|B|, |C|) max(1, 1/alpha)`, `|Lambda1| <= C2 T` for
/// `C2 = max|A| + max|B| C1`, and `Tbar = log(2c) / alpha`.
pub fn check_bound<S: Scalar>(sys: &BlockSystem<S>, decay: &DecayEstimate<S>) -> CheckBound<S> {
    let maxn = |f: &dyn Fn(&crate::model::BlockMode<S>) -> S| sys.modes().iter().map(f).fold(S::zero(), S::max);
    let a = maxn(&|md| md.a.norm2());
    let b = maxn(&|md| md.b.norm2());
    let c = maxn(&|md| md.c.norm2());
    let alpha = decay.delta;
    let c1 = decay.c * b.max(c) * S::one().max(S::one() / alpha);
    let c2 = a + b * c1;
    let t_bar = (S::lit(2.0) * decay.c).ln() / alpha;
    CheckBound { c1, c2, t_bar, value: c2 + S::lit(2.0) * decay.c * c1 * c1 * (S::one() + t_bar) }
}

/// Period flow `M(eps)` of the shifted perturbed system for `sigma(. / eps)`,
/// computed after rescaling time by `1 / eps`: modes `[[eps (A + mu), eps B], [C, D + eps mu]]`
/// driven by `sigma` on `[0, T]`.
pub fn period_flow<S: Scalar>(sys: &BlockSystem<S>, sig: &PwcSignal<S>, mu: S, eps: S) -> Result<Mat<S>> {
    let modes: Vec<Mat<S>> = sys
        .modes()
        .iter()
        .map(|md| Mat::from_blocks(&md.a.add_diag(mu).scale(eps), &md.b.scale(eps), &md.c, &md.d.add_diag(eps * mu)))
        .collect::<Result<_>>()?;
    Ok(flow(&modes, sig)?.phi)
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualRow<S: Scalar> {
    pub epsilon: S,
    /// Norm of the top-left block of `P^{-1} M(eps) P - I - eps T (Lambda + mu I)`.
    pub r1: S,
    /// Norm of the bottom-left block of `P^{-1} M(eps) P`.
    pub r2: S,
    pub r1_over_eps2: S,
    pub r2_over_eps: S,
    /// `(TL(eps) - I) / (eps T) - mu I`, an `O(eps)` estimate of `Lambda`.
    pub lambda_estimate: Mat<S>,
    /// `2 g(eps) - g(2 eps)` for the estimate `g` above.
    pub richardson: Mat<S>,
    /// `|M(eps) - M0 - eps M1| / eps^2`.
    pub expansion_residual: S,
}

/// First-order data of the period flow `M(eps) = M0 + eps M1 + O(eps^2)`.
#[derive(Clone, Debug, Serialize)]
pub struct ExpansionReport<S: Scalar> {
    pub m0: Mat<S>,
    pub m1: Mat<S>,
    pub q0: Mat<S>,
    pub lambda: Mat<S>,
    pub t: S,
    pub mu: S,
    pub residuals: Vec<ResidualRow<S>>,
}

/// Dyadic ladder `2^-3 .. 2^-10`.
pub fn default_eps_ladder<S: Scalar>() -> Vec<S> {
    (3..=10).map(|k| S::lit(2f64.powi(-k))).collect()
}

pub const EXPANSION_QUAD_TOL: f64 = 1e-10;

/// `M1 = ∫_0^T Phi_{N0}(T, r) N1(r) Phi_{N0}(r, 0) dr` by adaptive quadrature per piece,
/// with `N0 = [[0, 0], [C, D]]` and `N1 = [[A + mu, B], [0, mu]]`.
pub fn first_order_term<S: Scalar>(sys: &BlockSystem<S>, sig: &PwcSignal<S>, mu: S) -> Result<Mat<S>> {
    let (n, m) = (sys.n(), sys.m());
    let k = n + m;
    let n0: Vec<Mat<S>> = sys
        .modes()
        .iter()
        .map(|md| Mat::from_blocks(&Mat::zeros(n, n), &Mat::zeros(n, m), &md.c, &md.d))
        .collect::<Result<_>>()?;
    let n1: Vec<Mat<S>> = sys
        .modes()
        .iter()
        .map(|md| Mat::from_blocks(&md.a.add_diag(mu), &md.b, &Mat::zeros(m, n), &Mat::identity(m).scale(mu)))
        .collect::<Result<_>>()?;
    let exps: Vec<Mat<S>> = sig.pieces().iter().map(|p| mat_exp(&n0[p.mode], p.dwell)).collect::<Result<_>>()?;
    // left[j] = Phi(s_j, 0), right[j] = Phi(T, s_{j+1}).
    let mut left = vec![Mat::identity(k)];
    for e in &exps {
        left.push(e * left.last().expect("non-empty"));
    }
    let mut right = vec![Mat::identity(k); exps.len()];
    for j in (0..exps.len().saturating_sub(1)).rev() {
        right[j] = &right[j + 1] * &exps[j + 1];
    }
    let mut total = Mat::zeros(k, k);
    let tol = S::lit(EXPANSION_QUAD_TOL);
    for (j, p) in sig.pieces().iter().enumerate() {
        let (g, y) = (&n0[p.mode], &n1[p.mode]);
        let h = p.dwell;
        let integrand = |r: S| -> Result<Mat<S>> { Ok(&(&mat_exp(g, h - r)? * y) * &mat_exp(g, r)?) };
        let piece = quad::integrate(&integrand, S::zero(), h, tol)?;
        total = &total + &(&right[j] * &(&piece * &left[j]));
    }
    Ok(total)
}

fn lambda_estimate<S: Scalar>(
    sys: &BlockSystem<S>,
    sig: &PwcSignal<S>,
    q0: &Mat<S>,
    mu: S,
    eps: S,
) -> Result<(Mat<S>, Mat<S>, Mat<S>)> {
    let (n, m) = (sys.n(), sys.m());
    let big = period_flow(sys, sig, mu, eps)?;
    let p = Mat::from_blocks(&Mat::identity(n), &Mat::zeros(n, m), q0, &Mat::identity(m))?;
    let pinv = Mat::from_blocks(&Mat::identity(n), &Mat::zeros(n, m), &-q0, &Mat::identity(m))?;
    let conj = &(&pinv * &big) * &p;
    let tl = conj.block(0, 0, n, n);
    let bl = conj.block(n, 0, m, n);
    let t = sig.total_duration();
    let g = tl.add_diag(-S::one()).scale(S::one() / (eps * t)).add_diag(-mu);
    Ok((g, bl, big))
}

pub fn expansion_report<S: Scalar>(sys: &BlockSystem<S>, sig: &PwcSignal<S>, mu: S, eps: &[S]) -> Result<ExpansionReport<S>> {
    let parts = lambda_parts(sys, sig)?;
    let (n, m) = (sys.n(), sys.m());
    let q0 = parts.q0()?;
    let m0 = Mat::from_blocks(&Mat::identity(n), &Mat::zeros(n, m), &parts.lambda0, &parts.phi_d)?;
    let m1 = first_order_term(sys, sig, mu)?;
    let t = parts.t;
    let residuals = eps
        .iter()
        .map(|&e| {
            let (g, bl, big) = lambda_estimate(sys, sig, &q0, mu, e)?;
            let (g2, _, _) = lambda_estimate(sys, sig, &q0, mu, e * S::lit(2.0))?;
            let r1 = (&g - &parts.lambda).scale(e * t).norm2();
            let r2 = bl.norm2();
            let expansion_residual = (&(&big - &m0) - &m1.scale(e)).norm2() / (e * e);
            Ok(ResidualRow {
                epsilon: e,
                r1,
                r2,
                r1_over_eps2: r1 / (e * e),
                r2_over_eps: r2 / e,
                richardson: &g.scale(S::lit(2.0)) - &g2,
                lambda_estimate: g,
                expansion_residual,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ExpansionReport { m0, m1, q0, lambda: parts.lambda, t, mu, residuals })
}

/// One block `(sigma_k, t_k)` of an instability certificate for the averaged system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "S: Scalar"))]
pub struct CheckBlock<S: Scalar> {
    pub signal: PwcSignal<S>,
    pub t: S,
}

/// `rho(e^{t_l Lambda_l} ... e^{t_1 Lambda_1}) > 1` witnesses instability of the averaged system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "S: Scalar"))]
pub struct CheckCertificate<S: Scalar> {
    pub blocks: Vec<CheckBlock<S>>,
}

impl<S: Scalar> CheckCertificate<S> {
    /// `(rho, Lambda_k)` of the averaged product.
    pub fn evaluate(&self, sys: &BlockSystem<S>) -> Result<(S, Vec<Mat<S>>)> {
        if self.blocks.is_empty() {
            return Err(Error::Precondition("certificate has no blocks".into()));
        }
        let n = sys.n();
        let mut prod = Mat::identity(n);
        let mut lambdas = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            if !(b.t > S::zero()) {
                return Err(Error::Precondition(format!("block time must be positive, got {}", b.t)));
            }
            let l = lambda_parts(sys, &b.signal)?.lambda;
            prod = &mat_exp(&l, b.t)? * &prod;
            lambdas.push(l);
        }
        Ok((spectral_radius(&prod)?, lambdas))
    }
}

/// Explicit instability witness for the perturbed system at one epsilon.
#[derive(Clone, Debug, Serialize)]
pub struct LiftedCertificate<S: Scalar> {
    pub epsilon: S,
    pub signal: PwcSignal<S>,
    pub flow: FlowResult<S>,
    pub rho: S,
    /// Spectral radius of the flow over one period `eps T_k` of each block.
    pub block_rhos: Vec<S>,
    pub repetitions: Vec<usize>,
    pub averaged_rho: S,
    pub t_eps: S,
    /// `log(rho) / t_eps`, a lower bound on the perturbed exponent.
    pub rate: S,
}

/// Repeats `sigma_k(. / eps)` `N_k = floor(t_k / (eps T_k))` times per block and
/// concatenates. The flow is the product of period-flow powers.
pub fn lift_check_certificate<S: Scalar>(
    sys: &BlockSystem<S>,
    cert: &CheckCertificate<S>,
    epsilon: S,
) -> Result<LiftedCertificate<S>> {
    if !(epsilon > S::zero()) {
        return Err(Error::Precondition(format!("epsilon must be positive, got {epsilon}")));
    }
    let (averaged_rho, _) = cert.evaluate(sys)?;
    if !(averaged_rho > S::one()) {
        return Err(Error::Precondition(format!(
            "averaged product has spectral radius {averaged_rho} <= 1; not an instability certificate"
        )));
    }
    let k = sys.n() + sys.m();
    let mut phi = Mat::identity(k);
    let mut signal: Option<PwcSignal<S>> = None;
    let mut block_rhos = Vec::new();
    let mut repetitions = Vec::new();
    for (i, b) in cert.blocks.iter().enumerate() {
        let big_t = b.signal.total_duration();
        if !(epsilon * big_t < b.t) {
            return Err(Error::Precondition(format!(
                "epsilon too large for block {i}: eps T = {} >= t = {}",
                epsilon * big_t,
                b.t
            )));
        }
        let reps = (b.t / (epsilon * big_t)).floor().to_usize().expect("finite repetition count");
        let period = b.signal.time_scaled(epsilon)?;
        let m = eps_flow(sys, &period, epsilon)?.phi;
        block_rhos.push(spectral_radius(&m)?);
        phi = &matrix_power(&m, reps) * &phi;
        let rep = period.periodize(reps)?;
        signal = Some(match signal {
            None => rep,
            Some(s) => s.concat(&rep),
        });
        repetitions.push(reps);
    }
    let signal = signal.expect("at least one block");
    let t_eps = signal.total_duration();
    let rho = spectral_radius(&phi)?;
    let flow = FlowResult { phi, t: t_eps, signal_digest: signal.digest() };
    Ok(LiftedCertificate { epsilon, rate: rho.ln() / t_eps, signal, flow, rho, block_rhos, repetitions, averaged_rho, t_eps })
}

fn matrix_power<S: Scalar>(m: &Mat<S>, mut e: usize) -> Mat<S> {
    let mut base = m.clone();
    let mut acc = Mat::identity(m.rows());
    while e > 0 {
        if e & 1 == 1 {
            acc = &acc * &base;
        }
        base = &base * &base;
        e >>= 1;
    }
    acc
}
