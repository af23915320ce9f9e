//! One-sided bounds on maximal Lyapunov exponents of switching systems.
//!
//! Lower bounds come from witnesses: for any signal `sigma` on `[0, t]`,
//! `lambda >= log rho(Phi_sigma(t, 0)) / t`. Upper bounds come from the largest
//! logarithmic norm over the modes.

mod chain;

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flows::{eps_modes, flow, fmt17};
use crate::matkit::{log_norm, mat_exp, spectral_abscissa, spectral_radius, Mat};
use crate::model::{BlockSystem, Piece, PwcSignal};
use crate::rng;
use crate::scalar::Scalar;

pub use chain::{chain_experiment, ChainConfig, ChainReport, ChainStage, LiftSummary};

/// A lower bound must exceed this to certify instability; absorbs round-off in `rho`.
pub const VERDICT_MARGIN: f64 = 1e-10;

/// Allowed excess of a lower bound over an upper bound before the pair is inconsistent.
pub const CONSISTENCY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Side {
    Lower,
    Upper,
}

/// Evidence backing a bound.
#[derive(Clone, Debug, Serialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Certificate<S: Scalar> {
    /// `value = log(rho) / t` with `rho` the spectral radius of the flow of `signal`.
    Witness { signal: PwcSignal<S>, t: S, rho: S },
    /// Logarithmic norm of every mode; the bound is their maximum.
    LogNorm { per_mode: Vec<S> },
    /// Sampled support bound for a differential inclusion.
    InclusionSupport { directions: usize, cloud_tolerance: S, slack: S },
    /// Greedy inclusion trajectory; sound only up to cloud and step error.
    GreedyTrajectory { x0: Vec<S>, horizon: S, step: S, cloud_tolerance: S, heuristic: bool },
}

/// One-sided numeric bound on a maximal Lyapunov exponent.
#[derive(Clone, Debug, Serialize)]
pub struct LyapunovBound<S: Scalar> {
    pub value: S,
    pub side: Side,
    pub certificate: Certificate<S>,
}

impl<S: Scalar> LyapunovBound<S> {
    /// Recomputes a witness value from scratch; `None` for non-witness certificates.
    pub fn replay(&self, modes: &[Mat<S>]) -> Option<Result<S>> {
        match &self.certificate {
            Certificate::Witness { signal, .. } => Some(witness_value(modes, signal).map(|(v, _)| v)),
            _ => None,
        }
    }

    pub fn witness_signal(&self) -> Option<&PwcSignal<S>> {
        match &self.certificate {
            Certificate::Witness { signal, .. } => Some(signal),
            _ => None,
        }
    }
}

/// Randomized witness search settings. Dwell bounds are in the time unit of the modes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SearchConfig {
    pub max_pieces: usize,
    pub dwell_min: f64,
    pub dwell_max: f64,
    pub restarts: usize,
    pub descent_iterations: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { max_pieces: 6, dwell_min: 1e-2, dwell_max: 10.0, restarts: 128, descent_iterations: 200, seed: 0 }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_pieces == 0 {
            return Err(Error::Precondition("max_pieces must be at least 1".into()));
        }
        if !(self.dwell_min > 0.0) || !(self.dwell_max >= self.dwell_min) || !self.dwell_max.is_finite() {
            return Err(Error::Precondition(format!(
                "dwell range [{}, {}] must be positive and ordered",
                self.dwell_min, self.dwell_max
            )));
        }
        Ok(())
    }

    /// Same search with every dwell bound multiplied by `factor`.
    pub fn time_scaled(&self, factor: f64) -> Self {
        SearchConfig { dwell_min: self.dwell_min * factor, dwell_max: self.dwell_max * factor, ..self.clone() }
    }

    fn constant_dwell(&self) -> f64 {
        1.0f64.clamp(self.dwell_min, self.dwell_max)
    }
}

/// `(log rho / t, rho)` for the flow of `sig`. Single-piece signals use the
/// spectral abscissa directly, which is the same number without underflow.
pub fn witness_value<S: Scalar>(modes: &[Mat<S>], sig: &PwcSignal<S>) -> Result<(S, S)> {
    let t = sig.total_duration();
    let merged = sig.merged();
    if let [p] = merged.pieces() {
        sig.check_modes(modes.len())?;
        let alpha = spectral_abscissa(&modes[p.mode])?;
        return Ok((alpha, (alpha * t).exp()));
    }
    let phi = flow(modes, sig)?.phi;
    let rho = spectral_radius(&phi)?;
    if !rho_in_range(rho) {
        return Err(Error::Numerical(format!("witness flow spectral radius {rho} is out of range")));
    }
    Ok((rho.ln() / t, rho))
}

/// Below this the flow has lost its significant digits to underflow.
fn rho_in_range<S: Scalar>(rho: S) -> bool {
    rho.is_finite() && rho >= S::min_positive_value() / S::epsilon()
}

#[derive(Clone, Debug)]
struct Candidate<S: Scalar> {
    signal: PwcSignal<S>,
    value: S,
    rho: S,
}

impl<S: Scalar> Candidate<S> {
    fn eval(modes: &[Mat<S>], signal: PwcSignal<S>) -> Option<Self> {
        let (value, rho) = witness_value(modes, &signal).ok()?;
        (value.is_finite() || value == S::neg_infinity()).then_some(Candidate { signal, value, rho })
    }

    fn into_bound(self) -> LyapunovBound<S> {
        let t = self.signal.total_duration();
        LyapunovBound { value: self.value, side: Side::Lower, certificate: Certificate::Witness { signal: self.signal, t, rho: self.rho } }
    }
}

fn close<S: Scalar>(a: S, b: S) -> bool {
    (a - b).abs() <= S::lit(1e-12) * S::one().max(a.abs())
}

/// Larger value wins; near-ties go to the smallest signal digest.
fn better<S: Scalar>(a: &Candidate<S>, b: &Candidate<S>) -> bool {
    if close(a.value, b.value) {
        a.signal.digest() < b.signal.digest()
    } else {
        a.value > b.value
    }
}

/// Longer warm-start signals are evaluated but not descended.
const MAX_DESCENT_PIECES: usize = 64;

/// Coordinate descent on dwells with multiplicative steps `x 1.1` and `x 0.9`.
/// Stops after `iterations` passes or at the first pass without improvement.
fn descend<S: Scalar>(modes: &[Mat<S>], start: Candidate<S>, cfg: &SearchConfig) -> Candidate<S> {
    if start.signal.merged().len() < 2 || start.signal.len() > MAX_DESCENT_PIECES {
        return start;
    }
    let mut pieces: Vec<Piece<S>> = start.signal.pieces().to_vec();
    let mut exps: Vec<Mat<S>> = match pieces.iter().map(|p| mat_exp(&modes[p.mode], p.dwell)).collect() {
        Ok(e) => e,
        Err(_) => return start,
    };
    let mut best = start;
    let eval = |exps: &[Mat<S>], t: S| -> Option<(S, S)> {
        let phi = exps.iter().skip(1).fold(exps[0].clone(), |acc, e| e * &acc);
        let rho = spectral_radius(&phi).ok().filter(|&r| rho_in_range(r))?;
        let v = rho.ln() / t;
        v.is_finite().then_some((v, rho))
    };
    let gain = S::lit(1e-12);
    for _ in 0..cfg.descent_iterations {
        let mut improved = false;
        for i in 0..pieces.len() {
            for f in [1.1, 0.9] {
                let dwell = pieces[i].dwell * S::lit(f);
                let Ok(e) = mat_exp(&modes[pieces[i].mode], dwell) else { continue };
                let old = std::mem::replace(&mut exps[i], e);
                let t = best.signal.total_duration() - pieces[i].dwell + dwell;
                match eval(&exps, t) {
                    Some((v, rho)) if v > best.value + gain * S::one().max(best.value.abs()) => {
                        pieces[i].dwell = dwell;
                        best = Candidate { signal: PwcSignal::new(pieces.clone()).expect("positive dwells"), value: v, rho };
                        improved = true;
                    }
                    _ => exps[i] = old,
                }
            }
        }
        if !improved {
            break;
        }
    }
    // Report the replayable value of the final signal rather than the incremental one.
    Candidate::eval(modes, best.signal.clone()).unwrap_or(best)
}

fn random_signal<S: Scalar>(modes: usize, cfg: &SearchConfig, k: u64) -> PwcSignal<S> {
    let mut r = rng::substream(cfg.seed, "lambda-lower", k);
    let len = 1 + (k as usize) % cfg.max_pieces;
    let pieces = (0..len)
        .map(|_| Piece { mode: r.gen_range(0..modes), dwell: S::lit(rng::log_uniform(&mut r, cfg.dwell_min, cfg.dwell_max)) })
        .collect();
    PwcSignal::new(pieces).expect("positive dwells")
}

/// Best witness found by seeded random restarts plus dwell descent.
pub fn lambda_lower<S: Scalar>(modes: &[Mat<S>], cfg: &SearchConfig) -> LyapunovBound<S> {
    lambda_lower_with(modes, cfg, &[])
}

/// As [`lambda_lower`], also descending from each of the `warm` signals, so the
/// result is never below the best warm witness.
pub fn lambda_lower_with<S: Scalar>(modes: &[Mat<S>], cfg: &SearchConfig, warm: &[PwcSignal<S>]) -> LyapunovBound<S> {
    assert!(!modes.is_empty(), "lambda_lower needs at least one mode");
    let cd = S::lit(cfg.constant_dwell());
    let mut starts: Vec<PwcSignal<S>> = (0..modes.len()).map(|i| PwcSignal::constant(i, cd)).collect();
    starts.extend(warm.iter().filter(|w| w.check_modes(modes.len()).is_ok()).cloned());
    let fixed = starts.len();
    let all: Vec<Option<Candidate<S>>> = (0..fixed + cfg.restarts)
        .into_par_iter()
        .map(|k| {
            let sig = if k < fixed { starts[k].clone() } else { random_signal(modes.len(), cfg, (k - fixed) as u64) };
            Candidate::eval(modes, sig).map(|c| descend(modes, c, cfg))
        })
        .collect();
    let best = all.into_iter().flatten().reduce(|a, b| if better(&b, &a) { b } else { a });
    match best {
        Some(c) => c.into_bound(),
        None => LyapunovBound {
            value: S::neg_infinity(),
            side: Side::Lower,
            certificate: Certificate::Witness { signal: PwcSignal::constant(0, cd), t: cd, rho: S::zero() },
        },
    }
}

/// `max_k log_norm(N_k)`.
pub fn lambda_upper_lognorm<S: Scalar>(modes: &[Mat<S>]) -> LyapunovBound<S> {
    let per_mode: Vec<S> = modes.iter().map(|m| log_norm(m).unwrap_or(S::infinity())).collect();
    let value = per_mode.iter().copied().fold(S::neg_infinity(), S::max);
    LyapunovBound { value, side: Side::Upper, certificate: Certificate::LogNorm { per_mode } }
}

/// Every mode plus `mu I`.
pub fn shift_modes<S: Scalar>(modes: &[Mat<S>], mu: S) -> Vec<Mat<S>> {
    modes.iter().map(|m| m.add_diag(mu)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "ES")]
    Es,
    #[serde(rename = "EU")]
    Eu,
    #[serde(rename = "UNDECIDED")]
    Undecided,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Es => "ES",
            Verdict::Eu => "EU",
            Verdict::Undecided => "UNDECIDED",
        })
    }
}

pub fn classify_values(lower: f64, upper: f64) -> Result<Verdict> {
    if lower > upper + CONSISTENCY_TOL {
        return Err(Error::InconsistentBounds { lower, upper });
    }
    Ok(if upper < 0.0 {
        Verdict::Es
    } else if lower > VERDICT_MARGIN {
        Verdict::Eu
    } else {
        Verdict::Undecided
    })
}

pub fn classify<S: Scalar>(lower: &LyapunovBound<S>, upper: &LyapunovBound<S>) -> Result<Verdict> {
    if lower.side != Side::Lower || upper.side != Side::Upper {
        return Err(Error::Precondition("classify needs a lower and an upper bound".into()));
    }
    classify_values(lower.value.as_f64(), upper.value.as_f64())
}

/// Bounds on `lambda(Sigma_eps)` at one epsilon.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow<S: Scalar> {
    pub epsilon: S,
    pub lower: LyapunovBound<S>,
    pub upper: LyapunovBound<S>,
    pub eps_times_lower: S,
    pub verdict: Verdict,
}

/// Per-epsilon bounds for the perturbed system, sorted by epsilon descending.
/// Dwell bounds of `cfg` are scaled by epsilon, the natural time unit of the fast modes.
pub fn sweep_eps<S: Scalar>(sys: &BlockSystem<S>, eps: &[S], cfg: &SearchConfig) -> Result<Vec<SweepRow<S>>> {
    sweep_eps_with(sys, eps, cfg, |_| Vec::new())
}

/// As [`sweep_eps`], with extra warm-start signals per epsilon.
pub fn sweep_eps_with<S: Scalar>(
    sys: &BlockSystem<S>,
    eps: &[S],
    cfg: &SearchConfig,
    warm: impl Fn(S) -> Vec<PwcSignal<S>>,
) -> Result<Vec<SweepRow<S>>> {
    cfg.validate()?;
    let mut eps = eps.to_vec();
    eps.sort_by(|a, b| b.partial_cmp(a).expect("finite epsilon"));
    eps.iter()
        .map(|&e| {
            let modes = eps_modes(sys, e)?;
            let lower = lambda_lower_with(&modes, &cfg.time_scaled(e.as_f64()), &warm(e));
            let upper = lambda_upper_lognorm(&modes);
            let verdict = classify(&lower, &upper)?;
            Ok(SweepRow { epsilon: e, eps_times_lower: e * lower.value, lower, upper, verdict })
        })
        .collect()
}

/// Sweep CSV with header `epsilon,lower,upper,eps_times_lower,verdict`.
pub fn write_sweep_csv<S: Scalar, W: Write>(rows: &[SweepRow<S>], mut w: W) -> std::io::Result<()> {
    writeln!(w, "epsilon,lower,upper,eps_times_lower,verdict")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt17(r.epsilon.as_f64()),
            fmt17(r.lower.value.as_f64()),
            fmt17(r.upper.value.as_f64()),
            fmt17(r.eps_times_lower.as_f64()),
            r.verdict
        )?;
    }
    Ok(())
}
