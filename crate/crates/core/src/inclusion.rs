//! Sampled approximations of the limit set `K(x)` of the forced fast dynamics
//! `y' = D(t) y + C(t) x`, `y(0) = 0`, and bounds for the inclusion
//! `x' in A x + B K(x)`.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lyapunov::{Certificate, LyapunovBound, Side};
use crate::matkit::{log_norm, mat_exp, Mat};
use crate::model::{BlockSystem, DecayEstimate};
use crate::rng;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KsetConfig {
    /// Number of random fast signals.
    pub signals: usize,
    /// Collection time after burn-in, in units of `1 / delta`.
    pub horizon_decays: f64,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for KsetConfig {
    fn default() -> Self {
        KsetConfig { signals: 64, horizon_decays: 100.0, tolerance: 0.05, seed: 0 }
    }
}

/// Finite sample of `K(x)`, snapped to a grid of spacing `tolerance / 10`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointCloud<S: Scalar> {
    pub base_x: Vec<S>,
    pub points: Vec<Vec<S>>,
    pub burn_in: S,
    pub decay: DecayEstimate<S>,
    pub tolerance: S,
    pub seed: u64,
    /// A priori bound `c max|C x| / delta` on every point's norm.
    pub radius: S,
}

#[derive(Serialize)]
struct CloudJson<'a, S: Scalar> {
    x: &'a [S],
    tolerance: S,
    seed: u64,
    points: &'a [Vec<S>],
}

impl<S: Scalar> PointCloud<S> {
    /// Cloud JSON: `{"x", "tolerance", "seed", "points"}`.
    pub fn to_json(&self) -> String {
        crate::format::to_json17(&CloudJson { x: &self.base_x, tolerance: self.tolerance, seed: self.seed, points: &self.points })
            .expect("finite cloud serializes")
    }

    pub fn scaled(&self, factor: S) -> Vec<Vec<S>> {
        self.points.iter().map(|p| p.iter().map(|&v| v * factor).collect()).collect()
    }
}

fn norm<S: Scalar>(v: &[S]) -> S {
    v.iter().map(|&x| x * x).sum::<S>().sqrt()
}

/// Step propagator `z -> E z + j` of `y' = D y + u` over `h`.
fn affine_step<S: Scalar>(d: &Mat<S>, u: &[S], h: S) -> Result<(Mat<S>, Vec<S>)> {
    let m = d.rows();
    let mut aug = Mat::zeros(m + 1, m + 1);
    aug.set_block(0, 0, d);
    for (i, &v) in u.iter().enumerate() {
        aug[(i, m)] = v;
    }
    let e = mat_exp(&aug, h)?;
    Ok((e.block(0, 0, m, m), (0..m).map(|i| e[(i, m)]).collect()))
}

/// Simulates `signals` random fast signals from `y(0) = 0`. Dwells are exponential
/// with mean `1 / delta`, rounded up to whole sample steps; samples after the
/// burn-in `log(c R / tol) / delta` are kept.
pub fn kset_estimate<S: Scalar>(sys: &BlockSystem<S>, x: &[S], cfg: &KsetConfig) -> Result<PointCloud<S>> {
    let decay = sys.assumption().require()?;
    kset_estimate_with(sys, x, cfg, decay)
}

pub fn kset_estimate_with<S: Scalar>(
    sys: &BlockSystem<S>,
    x: &[S],
    cfg: &KsetConfig,
    decay: DecayEstimate<S>,
) -> Result<PointCloud<S>> {
    if x.len() != sys.n() {
        return Err(Error::Dimension(format!("slow state has length {}, expected {}", x.len(), sys.n())));
    }
    if !(cfg.tolerance > 0.0) || cfg.signals == 0 || !(cfg.horizon_decays > 0.0) {
        return Err(Error::Precondition("kset needs tolerance > 0, signals >= 1 and horizon > 0".into()));
    }
    let m = sys.m();
    let tol = cfg.tolerance;
    let (c, delta) = (decay.c.as_f64(), decay.delta.as_f64());
    let forcing: Vec<Vec<S>> = sys.modes().iter().map(|md| md.c.mul_vec(x)).collect();
    let umax = forcing.iter().map(|u| norm(u).as_f64()).fold(0.0, f64::max);
    let radius = c * umax / delta;
    let base = PointCloud {
        base_x: x.to_vec(),
        points: vec![vec![S::zero(); m]],
        burn_in: S::zero(),
        decay,
        tolerance: S::lit(tol),
        seed: cfg.seed,
        radius: S::lit(radius),
    };
    if radius == 0.0 {
        return Ok(base);
    }
    let burn_in = ((c * radius / tol).ln() / delta).max(0.0);
    let speed = sys.modes().iter().map(|md| md.d.norm2().as_f64()).fold(0.0, f64::max) * radius + umax;
    let dt = (tol / speed).min(0.1 / delta);
    let burn_steps = (burn_in / dt).ceil() as u64;
    let total_steps = burn_steps + (cfg.horizon_decays / delta / dt).ceil() as u64;
    let steps: Vec<(Mat<S>, Vec<S>)> =
        sys.modes().iter().zip(&forcing).map(|(md, u)| affine_step(&md.d, u, S::lit(dt))).collect::<Result<_>>()?;
    let grid = tol / 10.0;
    let snapped: Vec<BTreeSet<Vec<i64>>> = (0..cfg.signals as u64)
        .into_par_iter()
        .map(|k| {
            use rand::Rng;
            let mut r = rng::substream(cfg.seed, "kset", k);
            let mut y = vec![S::zero(); m];
            let mut set = BTreeSet::new();
            let mut step = 0u64;
            while step < total_steps {
                let mode = r.gen_range(0..steps.len());
                let len = ((rng::exponential(&mut r, 1.0 / delta) / dt).ceil() as u64).max(1);
                let (e, j) = &steps[mode];
                for _ in 0..len.min(total_steps - step) {
                    let mut next = e.mul_vec(&y);
                    for (a, b) in next.iter_mut().zip(j) {
                        *a += *b;
                    }
                    y = next;
                    step += 1;
                    if step >= burn_steps {
                        set.insert(y.iter().map(|v| (v.as_f64() / grid).round() as i64).collect());
                    }
                }
            }
            set
        })
        .collect();
    let union: BTreeSet<Vec<i64>> = snapped.into_iter().flatten().collect();
    let points = union.into_iter().map(|k| k.into_iter().map(|i| S::lit(i as f64 * grid)).collect()).collect();
    Ok(PointCloud { points, burn_in: S::lit(burn_in), ..base })
}

/// Hausdorff distance between two finite point sets.
pub fn hausdorff<S: Scalar>(a: &[Vec<S>], b: &[Vec<S>]) -> S {
    let one_sided = |p: &[Vec<S>], q: &[Vec<S>]| -> S {
        p.par_iter()
            .map(|u| {
                q.iter()
                    .map(|v| norm(&u.iter().zip(v).map(|(&x, &y)| x - y).collect::<Vec<_>>()))
                    .fold(S::infinity(), S::min)
            })
            .reduce(S::zero, S::max)
    };
    one_sided(a, b).max(one_sided(b, a))
}

/// `d_H(K(scale x), scale K(x))` from two independent cloud estimates.
pub fn kset_homogeneity_check<S: Scalar>(sys: &BlockSystem<S>, x: &[S], scale: S, cfg: &KsetConfig) -> Result<S> {
    if scale == S::zero() {
        return Err(Error::Precondition("homogeneity scale must be nonzero".into()));
    }
    let base = kset_estimate(sys, x, cfg)?;
    let sx: Vec<S> = x.iter().map(|&v| v * scale).collect();
    let other = kset_estimate(sys, &sx, cfg)?;
    Ok(hausdorff(&other.points, &base.scaled(scale)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HatConfig {
    /// Sphere samples for `n >= 2`; scaled by `2^(n-2)`.
    pub directions: usize,
    pub kset: KsetConfig,
    pub greedy_horizon: f64,
    pub greedy_step: f64,
}

impl Default for HatConfig {
    fn default() -> Self {
        HatConfig { directions: 256, kset: KsetConfig::default(), greedy_horizon: 10.0, greedy_step: 0.01 }
    }
}

const PRIMES: [u32; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let (mut f, mut r) = (1.0, 0.0);
    while i > 0 {
        f /= base as f64;
        r += f * (i % b) as f64;
        i /= b;
    }
    r
}

/// Deterministic unit vectors: `+-1` for `n = 1`, equally spaced angles for `n = 2`,
/// normalized Halton points inside the unit ball otherwise.
pub fn sphere_directions(n: usize, count: usize) -> Vec<Vec<f64>> {
    match n {
        0 => vec![],
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|i| {
                let th = std::f64::consts::TAU * (i as f64 + 0.5) / count as f64;
                vec![th.cos(), th.sin()]
            })
            .collect(),
        _ => {
            assert!(n <= PRIMES.len(), "sphere sampling supports n <= {}", PRIMES.len());
            let mut out = Vec::with_capacity(count);
            let mut i = 1u64;
            while out.len() < count {
                let v: Vec<f64> = (0..n).map(|d| 2.0 * radical_inverse(i, PRIMES[d]) - 1.0).collect();
                let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if (0.1..=1.0).contains(&r) {
                    out.push(v.iter().map(|x| x / r).collect());
                }
                i += 1;
            }
            out
        }
    }
}

/// Largest distance from a probe point of the sphere to the nearest sample.
fn sphere_mesh(n: usize, dirs: &[Vec<f64>]) -> f64 {
    match n {
        1 => 0.0,
        2 => 2.0 * (std::f64::consts::PI / (2.0 * dirs.len() as f64)).sin(),
        _ => {
            let probes: Vec<Vec<f64>> = sphere_directions(n, 8 * dirs.len()).into_iter().skip(dirs.len()).collect();
            probes
                .iter()
                .map(|p| {
                    dirs.iter()
                        .map(|d| p.iter().zip(d).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
                        .fold(f64::INFINITY, f64::min)
                })
                .fold(0.0, f64::max)
        }
    }
}

fn quad_form<S: Scalar>(x: &[S], a: &Mat<S>, b: &Mat<S>, y: &[S]) -> S {
    let ax = a.mul_vec(x);
    let by = b.mul_vec(y);
    x.iter().zip(ax.iter().zip(&by)).map(|(&xi, (&p, &q))| xi * (p + q)).sum()
}

fn inclusion_degenerate<S: Scalar>(sys: &BlockSystem<S>) -> bool {
    sys.modes().iter().all(|md| md.b.norm_max() == S::zero())
        || sys.modes().iter().all(|md| md.c.norm_max() == S::zero())
}

/// Upper bound on the growth rate of the inclusion:
/// `max x^T (A x + B y)` over sampled unit `x`, modes and `y` in the cloud of `K(x)`,
/// plus `|B| tol` for cloud error and `eta L` for gaps between sphere samples.
pub fn hat_upper_bound<S: Scalar>(sys: &BlockSystem<S>, cfg: &HatConfig) -> Result<LyapunovBound<S>> {
    let decay = sys.assumption().require()?;
    let n = sys.n();
    if inclusion_degenerate(sys) {
        // K(x) = {0} or B = 0: the inclusion is the switched system of the A blocks.
        let value = sys.modes().iter().map(|md| log_norm(&md.a)).collect::<Result<Vec<S>>>()?.into_iter().fold(S::neg_infinity(), S::max);
        return Ok(LyapunovBound {
            value,
            side: Side::Upper,
            certificate: Certificate::InclusionSupport { directions: 0, cloud_tolerance: S::zero(), slack: S::zero() },
        });
    }
    let count = if n >= 2 { cfg.directions.max(1) << (n - 2).min(16) } else { 2 };
    let dirs = sphere_directions(n, count);
    let tol = S::lit(cfg.kset.tolerance);
    let bmax = sys.modes().iter().map(|md| md.b.norm2()).fold(S::zero(), S::max);
    let amax = sys.modes().iter().map(|md| md.a.norm2()).fold(S::zero(), S::max);
    let cmax = sys.modes().iter().map(|md| md.c.norm2()).fold(S::zero(), S::max);
    let k_radius = decay.c * cmax / decay.delta;
    let lipschitz = S::lit(2.0) * (amax + bmax * k_radius);
    let mesh = S::lit(sphere_mesh(n, &dirs));
    let best: Vec<S> = dirs
        .iter()
        .map(|d| {
            let xh: Vec<S> = d.iter().map(|&v| S::lit(v)).collect();
            let cloud = kset_estimate_with(sys, &xh, &cfg.kset, decay)?;
            Ok(sys
                .modes()
                .iter()
                .flat_map(|md| cloud.points.iter().map(|y| quad_form(&xh, &md.a, &md.b, y)))
                .fold(S::neg_infinity(), S::max))
        })
        .collect::<Result<_>>()?;
    let slack = bmax * tol + mesh * lipschitz;
    let value = best.into_iter().fold(S::neg_infinity(), S::max) + slack;
    Ok(LyapunovBound {
        value,
        side: Side::Upper,
        certificate: Certificate::InclusionSupport { directions: dirs.len(), cloud_tolerance: tol, slack },
    })
}

/// Greedy inclusion trajectory: each step picks the mode and cloud point `p` of the
/// nearest sampled direction maximizing `x^T (A x + B |x| p)`, then propagates
/// `x' = (A + B p xh^T) x` exactly over the step. Heuristic: valid only up to
/// cloud and step error.
pub fn hat_lower_greedy<S: Scalar>(sys: &BlockSystem<S>, x0: &[S], cfg: &HatConfig) -> Result<LyapunovBound<S>> {
    let decay = sys.assumption().require()?;
    let n = sys.n();
    if x0.len() != n || norm(x0) == S::zero() {
        return Err(Error::Precondition("greedy start must be a nonzero slow state".into()));
    }
    let h = S::lit(cfg.greedy_step);
    let steps = (cfg.greedy_horizon / cfg.greedy_step).round().max(1.0) as usize;
    let count = if n >= 2 { (cfg.directions.max(1) << (n - 2).min(16)).min(64) } else { 2 };
    let dirs: Vec<Vec<S>> = sphere_directions(n, count).into_iter().map(|d| d.into_iter().map(S::lit).collect()).collect();
    let clouds: Vec<Vec<Vec<S>>> = if inclusion_degenerate(sys) {
        vec![vec![vec![S::zero(); sys.m()]]; dirs.len()]
    } else {
        dirs.iter().map(|d| kset_estimate_with(sys, d, &cfg.kset, decay).map(|c| c.points)).collect::<Result<_>>()?
    };
    let mut x: Vec<S> = x0.to_vec();
    let mut log_growth = S::zero();
    for _ in 0..steps {
        let r = norm(&x);
        let xh: Vec<S> = x.iter().map(|&v| v / r).collect();
        let nearest = (0..dirs.len())
            .min_by(|&i, &j| {
                let di: S = dirs[i].iter().zip(&xh).map(|(a, b)| (*a - *b) * (*a - *b)).sum();
                let dj: S = dirs[j].iter().zip(&xh).map(|(a, b)| (*a - *b) * (*a - *b)).sum();
                di.partial_cmp(&dj).expect("finite distances")
            })
            .expect("non-empty directions");
        let (mut best, mut arg) = (S::neg_infinity(), (0usize, 0usize));
        for (k, md) in sys.modes().iter().enumerate() {
            for (pi, p) in clouds[nearest].iter().enumerate() {
                let v = quad_form(&xh, &md.a, &md.b, p);
                if v > best {
                    best = v;
                    arg = (k, pi);
                }
            }
        }
        let md = &sys.modes()[arg.0];
        let bp = md.b.mul_vec(&clouds[nearest][arg.1]);
        let gen = &md.a + &Mat::from_fn(n, n, |i, j| bp[i] * xh[j]);
        let next = mat_exp(&gen, h)?.mul_vec(&xh);
        let nr = norm(&next);
        log_growth += nr.ln();
        x = next.iter().map(|&v| v / nr).collect();
    }
    let horizon = h * S::of_usize(steps);
    Ok(LyapunovBound {
        value: log_growth / horizon,
        side: Side::Lower,
        certificate: Certificate::GreedyTrajectory { x0: x0.to_vec(), horizon, step: h, cloud_tolerance: S::lit(cfg.kset.tolerance), heuristic: true },
    })
}
