//! `slyap` command-line front end.
//!
//! Exit codes: 0 success, 1 validation or usage error, 2 numerical refusal
//! (assumption fails, singular matrix, no certificate), 3 IO error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use slyap::auxiliary::{
    lambda_parts, lift_check_certificate, reduced_modes, sample_check_modes, CheckCertificate, CheckSampleConfig,
};
use slyap::example::run_example;
use slyap::flows::{eps_flow, eps_modes, flow, simulate, SimTarget};
use slyap::inclusion::{hat_lower_greedy, hat_upper_bound, kset_estimate, HatConfig, KsetConfig};
use slyap::lyapunov::{
    chain_experiment, classify, lambda_lower, lambda_upper_lognorm, shift_modes, sweep_eps, write_sweep_csv,
    ChainConfig, LyapunovBound, SearchConfig, Verdict,
};
use slyap::matkit::{spectral_radius, Mat};
use slyap::model::{parse_signal, parse_system, BlockMode};
use slyap::{to_json17, Error, Signal, System};

#[derive(Parser, Debug)]
#[command(name = "slyap", version, about = "Stability analysis of singularly perturbed linear switching systems")]
struct Cli {
    /// Seed for every randomized search.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; falls back to SLYAP_THREADS, then the core count.
    #[arg(long, global = true, env = "SLYAP_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug, Clone)]
struct SearchArgs {
    #[arg(long, default_value_t = 6)]
    max_pieces: usize,
    #[arg(long, default_value_t = 1e-2)]
    dwell_min: f64,
    #[arg(long, default_value_t = 10.0)]
    dwell_max: f64,
    #[arg(long, default_value_t = 128)]
    restarts: usize,
    #[arg(long, default_value_t = 200)]
    iterations: usize,
}

impl SearchArgs {
    fn config(&self, seed: u64) -> SearchConfig {
        SearchConfig {
            max_pieces: self.max_pieces,
            dwell_min: self.dwell_min,
            dwell_max: self.dwell_max,
            restarts: self.restarts,
            descent_iterations: self.iterations,
            seed,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Check a system file and report its dimensions.
    Validate { system: PathBuf },
    /// Flow of a signal; with --eps, of the perturbed system, otherwise of the block modes.
    Flow {
        system: PathBuf,
        signal: PathBuf,
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Sampled trajectory of the perturbed system; the signal repeats to cover the horizon.
    Simulate {
        system: PathBuf,
        signal: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true)]
        x0: Vec<f64>,
        #[arg(long)]
        horizon: f64,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reduced modes and bounds on the reduced system.
    Bar {
        system: PathBuf,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Averaged matrix of one signal with its parts.
    LambdaParts { system: PathBuf, signal: PathBuf },
    /// Sampled averaged matrices with provenance signals.
    CheckSample {
        system: PathBuf,
        #[arg(long, default_value_t = 512)]
        count: usize,
        #[arg(long, default_value_t = 4)]
        max_pieces: usize,
        #[arg(long, default_value_t = 5e-2)]
        dwell_min: f64,
        #[arg(long, default_value_t = 20.0)]
        dwell_max: f64,
    },
    /// Lower and upper exponent bounds of the perturbed system (block modes when --eps is absent).
    Bounds {
        system: PathBuf,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        mu: f64,
        /// Writes the witness signal for replay with `flow`.
        #[arg(long)]
        witness_out: Option<PathBuf>,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Bounds for each epsilon, as CSV.
    Sweep {
        system: PathBuf,
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        eps_list: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Point-cloud estimate of the fast limit set at a slow state.
    Kset {
        system: PathBuf,
        #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true, required = true)]
        x: Vec<f64>,
        #[arg(long, default_value_t = 0.05)]
        tol: f64,
        #[arg(long, default_value_t = 64)]
        signals: usize,
    },
    /// Upper and greedy lower bounds for the inclusion.
    HatBounds {
        system: PathBuf,
        #[arg(long, default_value_t = 256)]
        directions: usize,
        #[arg(long, default_value_t = 0.05)]
        tol: f64,
        /// Greedy start; defaults to all ones.
        #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true)]
        x0: Option<Vec<f64>>,
    },
    /// Lifts an averaged-system certificate to the perturbed system.
    Certify {
        system: PathBuf,
        #[arg(long)]
        from_check: PathBuf,
        #[arg(long)]
        eps: f64,
        /// Writes the lifted signal for replay with `flow --eps`.
        #[arg(long)]
        signal_out: Option<PathBuf>,
    },
    /// Full chain of bounds across the auxiliary systems.
    Chain {
        system: PathBuf,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        eps_list: Option<Vec<f64>>,
    },
    /// Reproduces the planar example and writes its artifacts.
    Example {
        #[arg(long)]
        out: PathBuf,
    },
}

/// Maps a library error to the documented exit code.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Validation(_) | Error::Dimension(_) | Error::Json(_) => 1,
        Error::Io(_) => 3,
        Error::Singular { .. }
        | Error::Refused(_)
        | Error::Precondition(_)
        | Error::Numerical(_)
        | Error::InconsistentBounds { .. } => 2,
    }
}

fn read(path: &Path) -> slyap::Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn load_system(path: &Path) -> slyap::Result<System> {
    parse_system(&read(path)?)
}

fn load_signal(path: &Path) -> slyap::Result<Signal> {
    parse_signal(&read(path)?)
}

fn write(path: &Path, contents: &str) -> slyap::Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn emit<T: Serialize>(value: &T) -> slyap::Result<()> {
    print!("{}", to_json17(value)?);
    Ok(())
}

fn positive(name: &str, v: f64) -> slyap::Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Validation(vec![slyap::error::Violation {
            index: None,
            field: name.into(),
            message: format!("must be positive and finite, got {v}"),
        }]))
    }
}

#[derive(Serialize)]
struct FlowOut<'a> {
    epsilon: Option<f64>,
    t: f64,
    signal_digest: &'a str,
    phi: &'a Mat<f64>,
    rho: f64,
    rate: f64,
}

#[derive(Serialize)]
struct BoundsOut<'a> {
    epsilon: Option<f64>,
    mu: f64,
    lower: &'a LyapunovBound<f64>,
    upper: &'a LyapunovBound<f64>,
    verdict: Verdict,
}

#[derive(Serialize)]
struct BarOut<'a> {
    modes: &'a [Mat<f64>],
    lower: &'a LyapunovBound<f64>,
    upper: &'a LyapunovBound<f64>,
    verdict: Verdict,
}

#[derive(Serialize)]
struct HatOut<'a> {
    upper: &'a LyapunovBound<f64>,
    lower: &'a LyapunovBound<f64>,
}

#[derive(Serialize)]
struct CertifyOut<'a> {
    epsilon: f64,
    rho: f64,
    rate: f64,
    t_eps: f64,
    averaged_rho: f64,
    block_rhos: &'a [f64],
    repetitions: &'a [usize],
    signal_digest: &'a str,
    pieces: usize,
    verdict: Verdict,
}

fn run(cli: Cli) -> slyap::Result<()> {
    let seed = cli.seed;
    match cli.cmd {
        Cmd::Validate { system } => {
            let sys = load_system(&system)?;
            #[derive(Serialize)]
            struct Out {
                n: usize,
                m: usize,
                modes: usize,
            }
            emit(&Out { n: sys.n(), m: sys.m(), modes: sys.modes().len() })
        }
        Cmd::Flow { system, signal, eps } => {
            let sys = load_system(&system)?;
            let sig = load_signal(&signal)?;
            let res = match eps {
                Some(e) => {
                    positive("eps", e)?;
                    eps_flow(&sys, &sig, e)?
                }
                None => flow(&sys.modes().iter().map(BlockMode::full).collect::<Vec<_>>(), &sig)?,
            };
            let rho = spectral_radius(&res.phi)?;
            emit(&FlowOut {
                epsilon: eps,
                t: res.t,
                signal_digest: &res.signal_digest,
                phi: &res.phi,
                rho,
                rate: rho.ln() / res.t,
            })
        }
        Cmd::Simulate { system, signal, eps, x0, horizon, dt, out } => {
            let sys = load_system(&system)?;
            let sig = load_signal(&signal)?.covering(horizon)?;
            positive("eps", eps)?;
            positive("dt", dt)?;
            let traj = simulate(&sys, &sig, &SimTarget::Perturbed(eps), &x0, dt)?;
            write(&out, &traj.to_csv_string())
        }
        Cmd::Bar { system, search } => {
            let sys = load_system(&system)?;
            let modes = reduced_modes(&sys)?;
            let cfg = search.config(seed);
            cfg.validate()?;
            let lower = lambda_lower(&modes, &cfg);
            let upper = lambda_upper_lognorm(&modes);
            let verdict = classify(&lower, &upper)?;
            emit(&BarOut { modes: &modes, lower: &lower, upper: &upper, verdict })
        }
        Cmd::LambdaParts { system, signal } => {
            let sys = load_system(&system)?;
            let sig = load_signal(&signal)?;
            emit(&lambda_parts(&sys, &sig)?.report(&sig))
        }
        Cmd::CheckSample { system, count, max_pieces, dwell_min, dwell_max } => {
            let sys = load_system(&system)?;
            let cfg = CheckSampleConfig { max_pieces, dwell_min, dwell_max, count, seed };
            emit(&sample_check_modes(&sys, &cfg, &[])?)
        }
        Cmd::Bounds { system, eps, mu, witness_out, search } => {
            let sys = load_system(&system)?;
            let (modes, cfg) = match eps {
                Some(e) => {
                    positive("eps", e)?;
                    (eps_modes(&sys, e)?, search.config(seed).time_scaled(e))
                }
                None => (sys.modes().iter().map(BlockMode::full).collect(), search.config(seed)),
            };
            cfg.validate()?;
            let modes = shift_modes(&modes, mu);
            let lower = lambda_lower(&modes, &cfg);
            let upper = lambda_upper_lognorm(&modes);
            let verdict = classify(&lower, &upper)?;
            if let (Some(path), Some(sig)) = (witness_out, lower.witness_signal()) {
                write(&path, &to_json17(sig)?)?;
            }
            emit(&BoundsOut { epsilon: eps, mu, lower: &lower, upper: &upper, verdict })
        }
        Cmd::Sweep { system, eps_list, out, search } => {
            let sys = load_system(&system)?;
            for &e in &eps_list {
                positive("eps-list", e)?;
            }
            let rows = sweep_eps(&sys, &eps_list, &search.config(seed))?;
            let mut buf = Vec::new();
            write_sweep_csv(&rows, &mut buf)?;
            let text = String::from_utf8(buf).expect("CSV is ASCII");
            match out {
                Some(p) => write(&p, &text),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        Cmd::Kset { system, x, tol, signals } => {
            let sys = load_system(&system)?;
            positive("tol", tol)?;
            let cfg = KsetConfig { signals, tolerance: tol, seed, ..KsetConfig::default() };
            print!("{}", kset_estimate(&sys, &x, &cfg)?.to_json());
            Ok(())
        }
        Cmd::HatBounds { system, directions, tol, x0 } => {
            let sys = load_system(&system)?;
            positive("tol", tol)?;
            let cfg = HatConfig {
                directions,
                kset: KsetConfig { tolerance: tol, seed, ..KsetConfig::default() },
                ..HatConfig::default()
            };
            let x0 = x0.unwrap_or_else(|| vec![1.0; sys.n()]);
            let upper = hat_upper_bound(&sys, &cfg)?;
            let lower = hat_lower_greedy(&sys, &x0, &cfg)?;
            emit(&HatOut { upper: &upper, lower: &lower })
        }
        Cmd::Certify { system, from_check, eps, signal_out } => {
            let sys = load_system(&system)?;
            let cert: CheckCertificate<f64> = serde_json::from_str(&read(&from_check)?)?;
            let lifted = lift_check_certificate(&sys, &cert, eps)?;
            if let Some(p) = signal_out {
                write(&p, &to_json17(&lifted.signal)?)?;
            }
            emit(&CertifyOut {
                epsilon: lifted.epsilon,
                rho: lifted.rho,
                rate: lifted.rate,
                t_eps: lifted.t_eps,
                averaged_rho: lifted.averaged_rho,
                block_rhos: &lifted.block_rhos,
                repetitions: &lifted.repetitions,
                signal_digest: &lifted.flow.signal_digest,
                pieces: lifted.signal.len(),
                verdict: if lifted.rho > 1.0 { Verdict::Eu } else { Verdict::Undecided },
            })
        }
        Cmd::Chain { system, eps_list } => {
            let sys = load_system(&system)?;
            let mut cfg = ChainConfig::default().with_seed(seed);
            if let Some(eps) = eps_list {
                for &e in &eps {
                    positive("eps-list", e)?;
                }
                cfg.eps = eps;
            }
            emit(&chain_experiment(&sys, &cfg)?)
        }
        Cmd::Example { out } => emit(&run_example(&out, seed)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n.max(1));
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return ExitCode::from(2);
        }
    };
    match pool.install(|| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
