//! Block systems, switching signals and their on-disk formats.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result, Violation};
use crate::lyapunov::{lambda_lower, lambda_upper_lognorm, LyapunovBound, SearchConfig};
use crate::matkit::{mat_exp, Mat};
use crate::rng;
use crate::scalar::Scalar;

/// One element `[[A, B], [C, D]]` of the mode set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "S: Scalar"))]
pub struct BlockMode<S: Scalar> {
    #[serde(rename = "A")]
    pub a: Mat<S>,
    #[serde(rename = "B")]
    pub b: Mat<S>,
    #[serde(rename = "C")]
    pub c: Mat<S>,
    #[serde(rename = "D")]
    pub d: Mat<S>,
}

impl<S: Scalar> BlockMode<S> {
    /// The full `(n+m)`-square block matrix.
    pub fn full(&self) -> Mat<S> {
        Mat::from_blocks(&self.a, &self.b, &self.c, &self.d).expect("validated block shapes")
    }

    pub fn shifted(&self, mu: S) -> Self {
        BlockMode { a: self.a.add_diag(mu), b: self.b.clone(), c: self.c.clone(), d: self.d.add_diag(mu) }
    }
}

/// Finite mode set of a singularly perturbed switching system with slow
/// dimension `n` and fast dimension `m`.
#[derive(Clone, Debug)]
pub struct BlockSystem<S: Scalar> {
    n: usize,
    m: usize,
    modes: Vec<BlockMode<S>>,
    assumption: OnceLock<AssumptionCheck<S>>,
}

impl<S: Scalar> PartialEq for BlockSystem<S> {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.m == other.m && self.modes == other.modes
    }
}

impl<S: Scalar> BlockSystem<S> {
    pub fn new(n: usize, m: usize, modes: Vec<BlockMode<S>>) -> Result<Self> {
        let violations = check_modes(n, m, &modes);
        if !violations.is_empty() {
            return Err(Error::Validation(violations));
        }
        Ok(BlockSystem { n, m, modes, assumption: OnceLock::new() })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn modes(&self) -> &[BlockMode<S>] {
        &self.modes
    }

    pub fn d_modes(&self) -> Vec<Mat<S>> {
        self.modes.iter().map(|md| md.d.clone()).collect()
    }

    pub fn a_modes(&self) -> Vec<Mat<S>> {
        self.modes.iter().map(|md| md.a.clone()).collect()
    }

    /// Assumption check with the default search configuration, computed once.
    pub fn assumption(&self) -> &AssumptionCheck<S> {
        self.assumption.get_or_init(|| {
            check_assumption_fast_stable(self, DEFAULT_ASSUMPTION_HORIZON, &SearchConfig::default())
        })
    }

    pub fn to_raw(&self) -> RawSystem {
        let rows = |x: &Mat<S>| x.cast::<f64>().to_rows();
        RawSystem {
            n: self.n as i64,
            m: self.m as i64,
            modes: self
                .modes
                .iter()
                .map(|md| RawMode { a: rows(&md.a), b: rows(&md.b), c: rows(&md.c), d: rows(&md.d) })
                .collect(),
        }
    }

    pub fn cast<T: Scalar>(&self) -> BlockSystem<T> {
        let modes = self
            .modes
            .iter()
            .map(|md| BlockMode { a: md.a.cast(), b: md.b.cast(), c: md.c.cast(), d: md.d.cast() })
            .collect();
        BlockSystem { n: self.n, m: self.m, modes, assumption: OnceLock::new() }
    }
}

fn check_modes<S: Scalar>(n: usize, m: usize, modes: &[BlockMode<S>]) -> Vec<Violation> {
    let mut out = Vec::new();
    if n == 0 {
        out.push(Violation { index: None, field: "n".into(), message: "must be positive".into() });
    }
    if m == 0 {
        out.push(Violation { index: None, field: "m".into(), message: "must be positive".into() });
    }
    if modes.is_empty() {
        out.push(Violation { index: None, field: "modes".into(), message: "empty mode set".into() });
    }
    for (i, md) in modes.iter().enumerate() {
        for (name, mat, shape) in
            [("A", &md.a, (n, n)), ("B", &md.b, (n, m)), ("C", &md.c, (m, n)), ("D", &md.d, (m, m))]
        {
            if mat.shape() != shape {
                out.push(Violation {
                    index: Some(i),
                    field: name.into(),
                    message: format!("shape {}x{}, expected {}x{}", mat.rows(), mat.cols(), shape.0, shape.1),
                });
            } else if !mat.is_finite() {
                out.push(Violation { index: Some(i), field: name.into(), message: "non-finite entry".into() });
            }
        }
    }
    out
}

/// System file contents before validation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawSystem {
    pub n: i64,
    pub m: i64,
    pub modes: Vec<RawMode>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawMode {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    pub d: Vec<Vec<f64>>,
}

/// Checks a parsed system description, collecting every violation found.
pub fn validate_system<S: Scalar>(raw: &RawSystem) -> Result<BlockSystem<S>> {
    let mut violations = Vec::new();
    let dim = |v: i64, field: &str, violations: &mut Vec<Violation>| -> usize {
        if v <= 0 {
            violations.push(Violation { index: None, field: field.into(), message: format!("must be positive, got {v}") });
            0
        } else {
            v as usize
        }
    };
    let n = dim(raw.n, "n", &mut violations);
    let m = dim(raw.m, "m", &mut violations);
    if raw.modes.is_empty() {
        violations.push(Violation { index: None, field: "modes".into(), message: "empty mode set".into() });
    }
    let mut modes = Vec::with_capacity(raw.modes.len());
    for (i, rm) in raw.modes.iter().enumerate() {
        let mut parse = |name: &str, rows: &Vec<Vec<f64>>, shape: (usize, usize)| -> Option<Mat<S>> {
            let ragged = rows.iter().any(|r| r.len() != rows.first().map_or(0, |f| f.len()));
            let got = (rows.len(), rows.first().map_or(0, |r| r.len()));
            if ragged || got != shape {
                violations.push(Violation {
                    index: Some(i),
                    field: name.into(),
                    message: if ragged {
                        "ragged rows".into()
                    } else {
                        format!("shape {}x{}, expected {}x{}", got.0, got.1, shape.0, shape.1)
                    },
                });
                return None;
            }
            if rows.iter().flatten().any(|x| !x.is_finite()) {
                violations.push(Violation { index: Some(i), field: name.into(), message: "non-finite entry".into() });
                return None;
            }
            let conv: Vec<Vec<S>> = rows.iter().map(|r| r.iter().map(|&x| S::lit(x)).collect()).collect();
            Mat::from_rows(&conv).ok()
        };
        let a = parse("A", &rm.a, (n, n));
        let b = parse("B", &rm.b, (n, m));
        let c = parse("C", &rm.c, (m, n));
        let d = parse("D", &rm.d, (m, m));
        if let (Some(a), Some(b), Some(c), Some(d)) = (a, b, c, d) {
            modes.push(BlockMode { a, b, c, d });
        }
    }
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    BlockSystem::new(n, m, modes)
}

pub fn parse_system<S: Scalar>(json: &str) -> Result<BlockSystem<S>> {
    let raw: RawSystem = serde_json::from_str(json)?;
    validate_system(&raw)
}

pub fn system_to_json<S: Scalar>(sys: &BlockSystem<S>) -> String {
    crate::format::to_json17(&sys.to_raw()).expect("system serializes")
}

/// One constant stretch of a piecewise-constant signal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Piece<S> {
    pub mode: usize,
    pub dwell: S,
}

/// Piecewise-constant switching signal: a finite list of `(mode, dwell)` pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct PwcSignal<S> {
    pieces: Vec<Piece<S>>,
}

impl<S: Scalar> PwcSignal<S> {
    pub fn new(pieces: Vec<Piece<S>>) -> Result<Self> {
        let mut violations = Vec::new();
        if pieces.is_empty() {
            violations.push(Violation { index: None, field: "pieces".into(), message: "empty signal".into() });
        }
        for (i, p) in pieces.iter().enumerate() {
            if !(p.dwell > S::zero()) || !p.dwell.is_finite() {
                violations.push(Violation {
                    index: Some(i),
                    field: "dwell".into(),
                    message: format!("dwell must be positive and finite, got {}", p.dwell),
                });
            }
        }
        if !violations.is_empty() {
            return Err(Error::Validation(violations));
        }
        Ok(PwcSignal { pieces })
    }

    pub fn from_pairs(pairs: &[(usize, S)]) -> Result<Self> {
        Self::new(pairs.iter().map(|&(mode, dwell)| Piece { mode, dwell }).collect())
    }

    pub fn constant(mode: usize, dwell: S) -> Self {
        Self::from_pairs(&[(mode, dwell)]).expect("positive dwell")
    }

    pub fn pieces(&self) -> &[Piece<S>] {
        &self.pieces
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn total_duration(&self) -> S {
        self.pieces.iter().map(|p| p.dwell).sum()
    }

    /// Fails if a piece points past the end of a mode list of length `modes`.
    pub fn check_modes(&self, modes: usize) -> Result<()> {
        let bad: Vec<Violation> = self
            .pieces
            .iter()
            .enumerate()
            .filter(|(_, p)| p.mode >= modes)
            .map(|(i, p)| Violation {
                index: Some(i),
                field: "mode_index".into(),
                message: format!("mode {} out of range for {modes} modes", p.mode),
            })
            .collect();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(bad))
        }
    }

    /// `repetitions` back-to-back copies of the signal.
    pub fn periodize(&self, repetitions: usize) -> Result<Self> {
        if repetitions == 0 {
            return Err(Error::Precondition("repetitions must be positive".into()));
        }
        let mut pieces = Vec::with_capacity(self.pieces.len() * repetitions);
        for _ in 0..repetitions {
            pieces.extend_from_slice(&self.pieces);
        }
        Ok(PwcSignal { pieces })
    }

    pub fn concat(&self, other: &Self) -> Self {
        let mut pieces = self.pieces.clone();
        pieces.extend_from_slice(&other.pieces);
        PwcSignal { pieces }
    }

    /// The signal `t -> sigma(t / factor)`: every dwell multiplied by `factor`.
    pub fn time_scaled(&self, factor: S) -> Result<Self> {
        Self::new(self.pieces.iter().map(|p| Piece { mode: p.mode, dwell: p.dwell * factor }).collect())
    }

    /// The signal restricted to `[0, horizon]`, repeated periodically when shorter.
    pub fn covering(&self, horizon: S) -> Result<Self> {
        if !(horizon > S::zero()) || !horizon.is_finite() {
            return Err(Error::Precondition(format!("horizon must be positive and finite, got {horizon}")));
        }
        let mut pieces = Vec::new();
        let mut t = S::zero();
        'outer: loop {
            for p in &self.pieces {
                let left = horizon - t;
                if p.dwell >= left {
                    pieces.push(Piece { mode: p.mode, dwell: left });
                    break 'outer;
                }
                pieces.push(*p);
                t += p.dwell;
            }
        }
        Self::new(pieces)
    }

    /// Adjacent pieces with the same mode merged.
    pub fn merged(&self) -> Self {
        let mut pieces: Vec<Piece<S>> = Vec::with_capacity(self.pieces.len());
        for p in &self.pieces {
            match pieces.last_mut() {
                Some(last) if last.mode == p.mode => last.dwell += p.dwell,
                _ => pieces.push(*p),
            }
        }
        PwcSignal { pieces }
    }

    /// Hex SHA-256 of the exact `(mode, dwell)` sequence.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for p in &self.pieces {
            h.update((p.mode as u64).to_le_bytes());
            h.update(p.dwell.as_f64().to_bits().to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_raw(&self) -> RawSignal {
        RawSignal { pieces: self.pieces.iter().map(|p| (p.mode, p.dwell.as_f64())).collect() }
    }

    pub fn cast<T: Scalar>(&self) -> PwcSignal<T> {
        PwcSignal { pieces: self.pieces.iter().map(|p| Piece { mode: p.mode, dwell: T::lit(p.dwell.as_f64()) }).collect() }
    }
}

impl<S: Scalar> Serialize for PwcSignal<S> {
    fn serialize<Z: serde::Serializer>(&self, ser: Z) -> std::result::Result<Z::Ok, Z::Error> {
        self.to_raw().serialize(ser)
    }
}

impl<'de, S: Scalar> Deserialize<'de> for PwcSignal<S> {
    fn deserialize<Z: serde::Deserializer<'de>>(de: Z) -> std::result::Result<Self, Z::Error> {
        let raw = RawSignal::deserialize(de)?;
        raw.validate().map_err(serde::de::Error::custom)
    }
}

/// Signal file contents: `{"pieces": [[mode_index, dwell], ...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawSignal {
    pub pieces: Vec<(usize, f64)>,
}

impl RawSignal {
    pub fn validate<S: Scalar>(&self) -> Result<PwcSignal<S>> {
        PwcSignal::new(self.pieces.iter().map(|&(mode, d)| Piece { mode, dwell: S::lit(d) }).collect())
    }
}

pub fn parse_signal<S: Scalar>(json: &str) -> Result<PwcSignal<S>> {
    let raw: RawSignal = serde_json::from_str(json)?;
    raw.validate()
}

/// Overshoot constant and rate in `|Phi_D(t, s)| <= c e^{-delta (t - s)}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayEstimate<S> {
    pub c: S,
    pub delta: S,
    /// True when (c, delta) were fitted from sampled flows rather than derived
    /// from a negative logarithmic norm.
    pub fitted: bool,
}

impl<S: Scalar> DecayEstimate<S> {
    pub fn new(c: S, delta: S, fitted: bool) -> Result<Self> {
        if !(c >= S::one()) || !(delta > S::zero()) {
            return Err(Error::Precondition(format!("decay estimate needs c >= 1 and delta > 0, got c = {c}, delta = {delta}")));
        }
        Ok(DecayEstimate { c, delta, fitted })
    }

    /// Time after which `c e^{-delta t} <= fraction`.
    pub fn settle_time(&self, fraction: S) -> S {
        ((self.c / fraction).ln() / self.delta).max(S::zero())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AssumptionVerdict {
    Holds,
    Fails,
    Undecided,
}

/// Outcome of checking that the fast subsystem `y' = D(t) y` is exponentially stable.
#[derive(Clone, Debug, Serialize)]
pub struct AssumptionCheck<S: Scalar> {
    pub verdict: AssumptionVerdict,
    pub lower: LyapunovBound<S>,
    pub upper: LyapunovBound<S>,
    pub decay: Option<DecayEstimate<S>>,
}

impl<S: Scalar> AssumptionCheck<S> {
    pub fn holds(&self) -> bool {
        self.verdict == AssumptionVerdict::Holds
    }

    pub fn require(&self) -> Result<DecayEstimate<S>> {
        match (self.verdict, self.decay) {
            (AssumptionVerdict::Holds, Some(d)) => Ok(d),
            (v, _) => Err(Error::Refused(format!(
                "fast subsystem not certified exponentially stable (verdict {v:?}, lower {:.6}, upper {:.6})",
                self.lower.value, self.upper.value
            ))),
        }
    }
}

pub const DEFAULT_ASSUMPTION_HORIZON: f64 = 50.0;

/// Bounds on the maximal Lyapunov exponent of the fast subsystem and the
/// resulting verdict.
pub fn check_assumption_fast_stable<S: Scalar>(
    sys: &BlockSystem<S>,
    horizon: f64,
    cfg: &SearchConfig,
) -> AssumptionCheck<S> {
    let d = sys.d_modes();
    let cfg = SearchConfig { dwell_max: cfg.dwell_max.min(horizon), ..cfg.clone() };
    let upper = lambda_upper_lognorm(&d);
    let lower = lambda_lower(&d, &cfg);
    let verdict = if upper.value < S::zero() {
        AssumptionVerdict::Holds
    } else if lower.value > S::lit(crate::lyapunov::VERDICT_MARGIN) {
        AssumptionVerdict::Fails
    } else {
        AssumptionVerdict::Undecided
    };
    let decay = if upper.value < S::zero() {
        DecayEstimate::new(S::one(), -upper.value, false).ok()
    } else if verdict != AssumptionVerdict::Fails {
        fit_decay(&d, horizon, cfg.seed)
    } else {
        None
    };
    AssumptionCheck { verdict, lower, upper, decay }
}

/// Fits `(c, delta)` from the worst sampled flow norms over random signals.
fn fit_decay<S: Scalar>(d: &[Mat<S>], horizon: f64, seed: u64) -> Option<DecayEstimate<S>> {
    use rand::Rng;
    const SIGNALS: u64 = 64;
    const GRID: usize = 50;
    let dt = horizon / GRID as f64;
    let mut worst = vec![f64::NEG_INFINITY; GRID + 1];
    for k in 0..SIGNALS {
        let mut r = rng::substream(seed, "decay-fit", k);
        let mut phi = Mat::<S>::identity(d[0].rows());
        worst[0] = worst[0].max(0.0);
        for w in worst.iter_mut().skip(1) {
            let mut left = dt;
            while left > 0.0 {
                let step = rng::log_uniform(&mut r, 1e-2, dt).min(left);
                let md = r.gen_range(0..d.len());
                phi = &mat_exp(&d[md], S::lit(step)).ok()? * &phi;
                left -= step;
            }
            *w = w.max(phi.norm2().as_f64().ln());
        }
    }
    let delta = -(worst[GRID] - worst[GRID / 2]) / (horizon / 2.0);
    if !(delta > 0.0) {
        return None;
    }
    let log_c = worst.iter().enumerate().map(|(i, &g)| g + delta * i as f64 * dt).fold(0.0, f64::max);
    DecayEstimate::new(S::lit(log_c.exp()), S::lit(delta), true).ok()
}
