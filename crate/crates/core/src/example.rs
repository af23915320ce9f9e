//! The planar two-mode example: `M1 = [[-1, 1], [0, -0.1]]`, `M2 = [[-3, 0], [2, -0.1]]`
//! with `n = m = 1`, and the 2-periodic signal `M1` on `[0, 1]`, `M2` on `[1, 2]`.

use std::fs;
use std::path::Path;

use num_rational::Rational64;
use num_traits::{Signed, Zero};
use serde::Serialize;

use crate::auxiliary::{lambda_parts, reduced_modes};
use crate::error::{Error, Result};
use crate::flows::{eps_flow, simulate, SimTarget};
use crate::format::to_json17;
use crate::lyapunov::{chain_experiment, write_sweep_csv, ChainConfig};
use crate::matkit::{spectral_radius, Mat};
use crate::model::{BlockMode, BlockSystem, PwcSignal};
use crate::scalar::Scalar;

pub fn example_system<S: Scalar>() -> BlockSystem<S> {
    let s = |x: f64| Mat::scalar(S::lit(x));
    BlockSystem::new(
        1,
        1,
        vec![
            BlockMode { a: s(-1.0), b: s(1.0), c: s(0.0), d: s(-0.1) },
            BlockMode { a: s(-3.0), b: s(0.0), c: s(2.0), d: s(-0.1) },
        ],
    )
    .expect("example system is valid")
}

/// `M1` on `[0, 1]`, then `M2` on `[1, 2]`.
pub fn example_signal<S: Scalar>() -> PwcSignal<S> {
    PwcSignal::from_pairs(&[(0, S::one()), (1, S::one())]).expect("positive dwells")
}

/// `-2 + 100 (1 - e^{-0.2})^{-1} (1 - e^{-0.1})^2`.
pub fn lambda_closed_form() -> f64 {
    let q = 1.0 - (-0.1f64).exp();
    -2.0 + 100.0 * q * q / (1.0 - (-0.2f64).exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Sp5<S> {
    pub gamma: S,
    pub det_product: S,
    /// `-sqrt(det M1 det M2)`.
    pub threshold: S,
    pub holds: bool,
}

fn check_2x2<S: Scalar>(m: &Mat<S>, name: &str) -> Result<()> {
    if m.shape() != (2, 2) {
        return Err(Error::Dimension(format!("{name} must be 2x2, got {}x{}", m.rows(), m.cols())));
    }
    Ok(())
}

/// `Gamma = (tr M1 tr M2 - tr(M1 M2)) / 2` against `-sqrt(det M1 det M2)`.
pub fn gamma_sp5<S: Scalar>(m1: &Mat<S>, m2: &Mat<S>) -> Result<Sp5<S>> {
    check_2x2(m1, "M1")?;
    check_2x2(m2, "M2")?;
    let det = |m: &Mat<S>| m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let gamma = (m1.trace() * m2.trace() - (m1 * m2).trace()) * S::lit(0.5);
    let det_product = det(m1) * det(m2);
    if det_product < S::zero() {
        return Err(Error::Precondition(format!("det M1 det M2 = {det_product} < 0; threshold undefined")));
    }
    let threshold = -det_product.sqrt();
    Ok(Sp5 { gamma, det_product, threshold, holds: gamma < threshold })
}

/// Exact rational evaluation; `holds` is decided as `Gamma < 0 and Gamma^2 > det product`.
pub fn gamma_sp5_exact(m1: &[[Rational64; 2]; 2], m2: &[[Rational64; 2]; 2]) -> Result<(Rational64, Rational64, bool)> {
    let tr = |m: &[[Rational64; 2]; 2]| m[0][0] + m[1][1];
    let det = |m: &[[Rational64; 2]; 2]| m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let tr_prod = (0..2).map(|i| (0..2).map(|k| m1[i][k] * m2[k][i]).sum::<Rational64>()).sum::<Rational64>();
    let gamma = (tr(m1) * tr(m2) - tr_prod) / Rational64::from_integer(2);
    let det_product = det(m1) * det(m2);
    if det_product.is_negative() {
        return Err(Error::Precondition(format!("det M1 det M2 = {det_product} < 0; threshold undefined")));
    }
    let holds = gamma.is_negative() && !gamma.is_zero() && gamma * gamma > det_product;
    Ok((gamma, det_product, holds))
}

/// The example's mode matrices with exact decimal entries.
pub fn example_modes_exact() -> ([[Rational64; 2]; 2], [[Rational64; 2]; 2]) {
    let r = |p: i64, q: i64| Rational64::new(p, q);
    ([[r(-1, 1), r(1, 1)], [r(0, 1), r(-1, 10)]], [[r(-3, 1), r(0, 1)], [r(2, 1), r(-1, 10)]])
}

#[derive(Clone, Debug, Serialize)]
pub struct GammaReport {
    pub gamma: f64,
    pub det_product: f64,
    pub threshold: f64,
    pub holds: bool,
    pub exact_gamma: String,
    pub exact_det_product: String,
    pub exact_holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExampleReport {
    pub gamma: f64,
    pub det_product: f64,
    pub sp5_holds: bool,
    pub bar_modes: Vec<f64>,
    pub lambda_check_value: f64,
    pub rho_at_eps: Vec<(f64, f64)>,
    pub figure1_csv_path: String,
    /// `|(x, y)(20)| / |(x, y)(0)|` of the Figure-1 trajectory.
    pub figure1_growth: f64,
    pub chain_consistent: bool,
}

pub const FIGURE1_EPS: f64 = 0.1;
pub const FIGURE1_HORIZON: f64 = 20.0;
pub const FIGURE1_DT: f64 = 0.01;
pub const RHO_EPS: [f64; 3] = [0.1, 0.05, 0.01];

/// Spectral radius of the period flow of `sigma(. / eps)`.
pub fn period_rho(eps: f64) -> Result<f64> {
    let sys = example_system::<f64>();
    let sig = example_signal::<f64>().time_scaled(eps)?;
    spectral_radius(&eps_flow(&sys, &sig, eps)?.phi)
}

/// Figure-1 trajectory: `eps = 0.1`, `(x, y)(0) = (1, 1)`, horizon 20, samples every 0.01.
pub fn figure1() -> Result<crate::flows::Trajectory<f64>> {
    let sys = example_system::<f64>();
    let period = example_signal::<f64>().time_scaled(FIGURE1_EPS)?;
    let reps = (FIGURE1_HORIZON / period.total_duration()).round() as usize;
    simulate(&sys, &period.periodize(reps)?, &SimTarget::Perturbed(FIGURE1_EPS), &[1.0, 1.0], FIGURE1_DT)
}

pub fn example_chain_config(seed: u64) -> ChainConfig {
    ChainConfig { eps: RHO_EPS.to_vec(), ..ChainConfig::default() }.with_seed(seed)
}

/// Writes `figure1.csv`, `lambda.json`, `gamma.json`, `sweep.csv` and `chain.json` to `out`.
pub fn run_example(out: &Path, seed: u64) -> Result<ExampleReport> {
    fs::create_dir_all(out)?;
    let sys = example_system::<f64>();
    let modes: Vec<Mat<f64>> = sys.modes().iter().map(BlockMode::full).collect();

    let sp5 = gamma_sp5(&modes[0], &modes[1])?;
    let (m1, m2) = example_modes_exact();
    let (eg, ed, eh) = gamma_sp5_exact(&m1, &m2)?;
    let gamma = GammaReport {
        gamma: sp5.gamma,
        det_product: sp5.det_product,
        threshold: sp5.threshold,
        holds: sp5.holds,
        exact_gamma: eg.to_string(),
        exact_det_product: ed.to_string(),
        exact_holds: eh,
    };
    fs::write(out.join("gamma.json"), to_json17(&gamma)?)?;

    let sig = example_signal::<f64>();
    let parts = lambda_parts(&sys, &sig)?;
    fs::write(out.join("lambda.json"), to_json17(&parts.report(&sig))?)?;

    let traj = figure1()?;
    let fig = out.join("figure1.csv");
    traj.write_csv(std::io::BufWriter::new(fs::File::create(&fig)?))?;
    let norm = |s: &[f64]| s.iter().map(|v| v * v).sum::<f64>().sqrt();
    let figure1_growth = norm(traj.last()) / norm(&traj.states[0]);

    let rho_at_eps = RHO_EPS.iter().map(|&e| Ok((e, period_rho(e)?))).collect::<Result<Vec<_>>>()?;

    let chain = chain_experiment(&sys, &example_chain_config(seed))?;
    let mut sweep = Vec::new();
    write_sweep_csv(&chain.eps_rows, &mut sweep)?;
    fs::write(out.join("sweep.csv"), sweep)?;
    fs::write(out.join("chain.json"), to_json17(&chain)?)?;

    Ok(ExampleReport {
        gamma: sp5.gamma,
        det_product: sp5.det_product,
        sp5_holds: sp5.holds,
        bar_modes: reduced_modes(&sys)?.iter().map(|m| m[(0, 0)]).collect(),
        lambda_check_value: parts.lambda[(0, 0)],
        rho_at_eps,
        figure1_csv_path: fig.display().to_string(),
        figure1_growth,
        chain_consistent: chain.consistent,
    })
}
