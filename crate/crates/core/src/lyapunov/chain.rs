//! Bounds along the chain `lambda(bar) <= lambda(check) <= liminf lambda(eps)
//! <= limsup lambda(eps) <= lambda(hat)`.

use serde::Serialize;

use super::{lambda_lower_with, lambda_upper_lognorm, sweep_eps_with, LyapunovBound, SearchConfig, SweepRow, CONSISTENCY_TOL};
use crate::auxiliary::{
    lift_check_certificate, reduced_modes, sample_check_modes, CheckBlock, CheckCertificate, CheckSampleConfig,
};
use crate::error::Result;
use crate::inclusion::{hat_lower_greedy, hat_upper_bound, HatConfig};
use crate::matkit::Mat;
use crate::model::{AssumptionCheck, BlockSystem, PwcSignal};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainConfig {
    pub search: SearchConfig,
    pub check: CheckSampleConfig,
    pub eps: Vec<f64>,
    pub hat: HatConfig,
    /// Largest piece count of a lifted signal used as a warm start.
    pub max_lift_pieces: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            search: SearchConfig::default(),
            check: CheckSampleConfig::default(),
            eps: vec![0.1, 0.03, 0.01],
            hat: HatConfig::default(),
            max_lift_pieces: 4096,
        }
    }
}

impl ChainConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.search.seed = seed;
        self.check.seed = seed;
        self.hat.kset.seed = seed;
        self
    }
}

/// One ordering check `left <= right + tol` between a lower and an upper bound.
#[derive(Clone, Debug, Serialize)]
pub struct ChainStage {
    pub left: String,
    pub right: String,
    pub left_value: f64,
    pub right_value: f64,
    pub holds: bool,
}

/// Lifted certificate summary at one epsilon.
#[derive(Clone, Debug, Serialize)]
pub struct LiftSummary<S: Scalar> {
    pub epsilon: S,
    pub rho: S,
    pub rate: S,
    pub pieces: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ChainReport<S: Scalar> {
    pub assumption: AssumptionCheck<S>,
    pub bar_lower: LyapunovBound<S>,
    pub bar_upper: LyapunovBound<S>,
    pub check_lower: LyapunovBound<S>,
    /// Averaged-system instability certificate, when the check bound is positive.
    pub check_certificate: Option<CheckCertificate<S>>,
    pub check_sample_size: usize,
    pub eps_rows: Vec<SweepRow<S>>,
    pub lifts: Vec<LiftSummary<S>>,
    pub hat_upper: LyapunovBound<S>,
    pub hat_lower: LyapunovBound<S>,
    pub stages: Vec<ChainStage>,
    pub consistent: bool,
}

impl<S: Scalar> ChainReport<S> {
    /// Row at the smallest epsilon.
    pub fn finest(&self) -> &SweepRow<S> {
        self.eps_rows.last().expect("at least one epsilon")
    }
}

/// Certificate blocks from a check witness: one block per piece, with block times
/// scaled up (only for single-block witnesses, where scaling preserves the rate)
/// until `eps T_k < t_k`.
fn certificate_from_witness<S: Scalar>(witness: &PwcSignal<S>, provenance: &[PwcSignal<S>]) -> CheckCertificate<S> {
    let blocks = witness
        .merged()
        .pieces()
        .iter()
        .map(|p| CheckBlock { signal: provenance[p.mode].clone(), t: p.dwell })
        .collect();
    CheckCertificate { blocks }
}

fn stretched<S: Scalar>(cert: &CheckCertificate<S>, eps: S) -> Option<CheckCertificate<S>> {
    let fits = |c: &CheckCertificate<S>| c.blocks.iter().all(|b| eps * b.signal.total_duration() < b.t);
    if fits(cert) {
        return Some(cert.clone());
    }
    if let [b] = cert.blocks.as_slice() {
        let t = (S::lit(4.0) * eps * b.signal.total_duration()).max(b.t);
        return Some(CheckCertificate { blocks: vec![CheckBlock { signal: b.signal.clone(), t }] });
    }
    None
}

/// Refuses unless the fast subsystem is certified exponentially stable.
pub fn chain_experiment<S: Scalar>(sys: &BlockSystem<S>, cfg: &ChainConfig) -> Result<ChainReport<S>> {
    let assumption = sys.assumption().clone();
    assumption.require()?;

    let bar = reduced_modes(sys)?;
    let bar_lower = lambda_lower_with(&bar, &cfg.search, &[]);
    let bar_upper = lambda_upper_lognorm(&bar);

    let sample = sample_check_modes(sys, &cfg.check, &[])?;
    let check_mats: Vec<Mat<S>> = sample.iter().map(|c| c.lambda.clone()).collect();
    let provenance: Vec<PwcSignal<S>> = sample.iter().map(|c| c.signal.clone()).collect();
    // Reduced modes come first in the sample, so the bar witness indexes it directly.
    let warm: Vec<PwcSignal<S>> = bar_lower.witness_signal().cloned().into_iter().collect();
    let check_lower = lambda_lower_with(&check_mats, &cfg.search, &warm);
    let check_certificate = match check_lower.witness_signal() {
        Some(w) if check_lower.value > S::lit(super::VERDICT_MARGIN) => Some(certificate_from_witness(w, &provenance)),
        _ => None,
    };

    let mut lifts = Vec::new();
    let eps: Vec<S> = cfg.eps.iter().map(|&e| S::lit(e)).collect();
    let mut warm_by_eps: Vec<(S, Vec<PwcSignal<S>>)> = Vec::new();
    for &e in &eps {
        let mut w = Vec::new();
        if let Some(cert) = &check_certificate {
            // One period of each block at the fast time scale.
            for b in &cert.blocks {
                w.push(b.signal.time_scaled(e)?);
            }
            if let Some(c) = stretched(cert, e) {
                if let Ok(l) = lift_check_certificate(sys, &c, e) {
                    lifts.push(LiftSummary { epsilon: e, rho: l.rho, rate: l.rate, pieces: l.signal.len() });
                    if l.signal.len() <= cfg.max_lift_pieces {
                        w.push(l.signal);
                    }
                }
            }
        }
        warm_by_eps.push((e, w));
    }
    let eps_rows = sweep_eps_with(sys, &eps, &cfg.search, |e| {
        warm_by_eps.iter().find(|(x, _)| *x == e).map(|(_, w)| w.clone()).unwrap_or_default()
    })?;

    let hat_upper = hat_upper_bound(sys, &cfg.hat)?;
    let x0 = vec![S::one(); sys.n()];
    let hat_lower = hat_lower_greedy(sys, &x0, &cfg.hat)?;

    let mut stages = Vec::new();
    let mut stage = |left: &str, lv: S, right: &str, rv: S, tol: f64| {
        let (lv, rv) = (lv.as_f64(), rv.as_f64());
        stages.push(ChainStage { left: left.into(), right: right.into(), left_value: lv, right_value: rv, holds: lv <= rv + tol });
    };
    let hat_tol = CONSISTENCY_TOL + cfg.hat.kset.tolerance;
    stage("bar.lower", bar_lower.value, "bar.upper", bar_upper.value, CONSISTENCY_TOL);
    stage("bar.lower", bar_lower.value, "check.lower", check_lower.value, CONSISTENCY_TOL);
    stage("check.lower", check_lower.value, "hat.upper", hat_upper.value, hat_tol);
    for r in &eps_rows {
        let name = format!("eps[{}].lower", r.epsilon);
        stage(&name, r.lower.value, &format!("eps[{}].upper", r.epsilon), r.upper.value, CONSISTENCY_TOL);
        stage(&name, r.lower.value, "hat.upper", hat_upper.value, hat_tol);
    }
    stage("hat.lower", hat_lower.value, "hat.upper", hat_upper.value, hat_tol);
    let consistent = stages.iter().all(|s| s.holds);

    Ok(ChainReport {
        assumption,
        bar_lower,
        bar_upper,
        check_lower,
        check_certificate,
        check_sample_size: sample.len(),
        eps_rows,
        lifts,
        hat_upper,
        hat_lower,
        stages,
        consistent,
    })
}
