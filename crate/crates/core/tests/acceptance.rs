//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::time::{Duration, Instant};

use rand::Rng;
use slyap::auxiliary::{
    default_eps_ladder, expansion_report, lambda_parts, lift_check_certificate, CheckBlock, CheckCertificate,
};
use slyap::example::{
    example_chain_config, example_modes_exact, example_signal, example_system, figure1, gamma_sp5, gamma_sp5_exact,
    lambda_closed_form,
};
use slyap::flows::eps_modes;
use slyap::inclusion::{hat_lower_greedy, hat_upper_bound, hausdorff, kset_estimate, kset_homogeneity_check};
use slyap::inclusion::{HatConfig, KsetConfig};
use slyap::lyapunov::{chain_experiment, lambda_lower, ChainConfig, SearchConfig};
use slyap::matkit::Mat;
use slyap::model::{BlockMode, BlockSystem, PwcSignal};
use slyap::{rng, to_json17};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// ---- independent oracles ----

/// `A - B D^{-1} C` by Gaussian elimination with partial pivoting on `[D | C]`.
fn reduced_oracle(md: &BlockMode<f64>) -> Vec<Vec<f64>> {
    let m = md.d.rows();
    let n = md.a.rows();
    let mut aug: Vec<Vec<f64>> =
        (0..m).map(|i| (0..m).map(|j| md.d[(i, j)]).chain((0..n).map(|j| md.c[(i, j)])).collect()).collect();
    for k in 0..m {
        let p = (k..m).max_by(|&a, &b| aug[a][k].abs().total_cmp(&aug[b][k].abs())).unwrap();
        aug.swap(k, p);
        for i in 0..m {
            if i != k {
                let f = aug[i][k] / aug[k][k];
                let pivot = aug[k].clone();
                for (x, p) in aug[i].iter_mut().zip(&pivot) {
                    *x -= f * p;
                }
            }
        }
    }
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| md.a[(i, j)] - (0..m).map(|k| md.b[(i, k)] * aug[k][m + j] / aug[k][k]).sum::<f64>())
                .collect()
        })
        .collect()
}

type M2 = [[f64; 2]; 2];

fn mul2(a: M2, b: M2) -> M2 {
    let mut r = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            r[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    r
}

fn rho2(m: M2) -> f64 {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = tr * tr / 4.0 - det;
    if disc >= 0.0 {
        (tr / 2.0 + disc.sqrt()).abs().max((tr / 2.0 - disc.sqrt()).abs())
    } else {
        det.sqrt()
    }
}

/// Period flow of the example at level `eps` from closed-form triangular exponentials:
/// `[[-1, 1], [0, -1]]` and `[[-3, 0], [20, -1]]` scaled by `0.1 / eps`, each for `eps`.
fn example_period_oracle(eps: f64) -> M2 {
    let (a, d) = (-1.0, -0.1 / eps);
    let h = eps;
    // Upper triangular [[a, 1], [0, d]].
    let off1 = if (a - d).abs() < 1e-14 { h * (a * h).exp() } else { ((a * h).exp() - (d * h).exp()) / (a - d) };
    let e1 = [[(a * h).exp(), off1], [0.0, (d * h).exp()]];
    let (a2, c2) = (-3.0, 2.0 / eps);
    let off2 = c2 * ((a2 * h).exp() - (d * h).exp()) / (a2 - d);
    let e2 = [[(a2 * h).exp(), 0.0], [off2, (d * h).exp()]];
    mul2(e2, e1)
}

/// Scalar reachability of `y' = -0.1 y` and `y' = -0.1 y + 2` from 0: the reachable
/// interval propagated on small steps, then sampled on a grid of spacing `h`.
fn kset_oracle(h: f64) -> Vec<Vec<f64>> {
    let dt = 1e-2f64;
    let step = |y: f64, f: f64| f + (y - f) * (-0.1 * dt).exp();
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    for _ in 0..200_000 {
        lo = step(lo, 0.0).min(step(lo, 20.0));
        hi = step(hi, 0.0).max(step(hi, 20.0));
    }
    let n = ((hi - lo) / h).round() as usize;
    (0..=n).map(|i| vec![lo + i as f64 * h]).collect()
}

// ---- criteria ----

fn c1() -> Outcome {
    let sys = example_system::<f64>();
    let m: Vec<Mat<f64>> = sys.modes().iter().map(BlockMode::full).collect();
    let s = gamma_sp5(&m[0], &m[1]).unwrap();
    let (e1, e2) = example_modes_exact();
    let (g, d, h) = gamma_sp5_exact(&e1, &e2).unwrap();
    let pass = (s.gamma + 0.8).abs() <= 1e-12 && (s.det_product - 0.03).abs() <= 1e-12 && s.holds && h;
    outcome(pass, format!("gamma={:.17} det={:.17} holds={} exact=({g}, {d}, {h})", s.gamma, s.det_product, s.holds))
}

fn c2() -> Outcome {
    let p = lambda_parts(&example_system::<f64>(), &example_signal()).unwrap();
    let oracle = -2.0 + 100.0 * (1.0 - (-0.1f64).exp()).powi(2) / (1.0 - (-0.2f64).exp());
    let v = p.lambda[(0, 0)];
    let pass = p.lambda.shape() == (1, 1) && (v - oracle).abs() <= 1e-9 && (oracle - lambda_closed_form()).abs() < 1e-15;
    outcome(pass, format!("Lambda={v:.17} oracle={oracle:.17} err={:.2e}", (v - oracle).abs()))
}

fn random_mode(r: &mut impl Rng, n: usize, m: usize) -> BlockMode<f64> {
    let mut u = |rows: usize, cols: usize| Mat::from_fn(rows, cols, |_, _| r.gen_range(-1.0..1.0));
    let a = u(n, n);
    let b = u(n, m);
    let c = u(m, n);
    let raw: Mat<f64> = u(m, m);
    // Gershgorin: every eigenvalue has real part <= -0.5.
    let shift = (0..m).map(|i| (0..m).map(|j| raw[(i, j)].abs()).sum::<f64>()).fold(0.0, f64::max) + 0.5;
    BlockMode { a, b, c, d: raw.add_diag(-shift) }
}

fn c3() -> Outcome {
    let mut r = rng::substream(0, "acceptance-collapse", 0);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let (n, m) = (r.gen_range(1..=3), r.gen_range(1..=3));
        let md = random_mode(&mut r, n, m);
        let t: f64 = r.gen_range(0.1..5.0);
        let sys = BlockSystem::new(n, m, vec![md.clone()]).unwrap();
        let lam = lambda_parts(&sys, &PwcSignal::constant(0, t)).unwrap().lambda;
        let oracle = reduced_oracle(&md);
        let err = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| (lam[(i, j)] - oracle[i][j]).powi(2)).sum::<f64>();
        worst = worst.max(err.sqrt());
    }
    outcome(worst <= 1e-9, format!("50 draws, max |Lambda - reduced| = {worst:.2e}"))
}

fn c4() -> Outcome {
    let sys = example_system::<f64>();
    let eps: Vec<f64> = default_eps_ladder::<f64>().into_iter().filter(|&e| e <= 0.0625).collect();
    let rep = expansion_report(&sys, &example_signal(), 0.0, &eps).unwrap();
    let spread = |f: &dyn Fn(&slyap::auxiliary::ResidualRow<f64>) -> f64| {
        let v: Vec<f64> = rep.residuals.iter().map(f).collect();
        v.iter().cloned().fold(0.0, f64::max) / v.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    let s1 = spread(&|r| r.r1_over_eps2);
    let s2 = spread(&|r| r.r2_over_eps);
    let last = rep.residuals.last().unwrap();
    let rich = (last.richardson[(0, 0)] - rep.lambda[(0, 0)]).abs();
    let pass = eps.len() == 7 && s1 < 4.0 && s2 < 4.0 && rich <= 1e-3;
    outcome(pass, format!("eps 2^-4..2^-10: r1/eps^2 spread {s1:.3}, r2/eps spread {s2:.3}, Richardson err {rich:.2e}"))
}

fn c5() -> Outcome {
    let sys = BlockSystem::new(
        1,
        1,
        vec![BlockMode { a: Mat::scalar(0.0), b: Mat::scalar(1.0), c: Mat::scalar(1.0), d: Mat::scalar(1.0) }],
    )
    .unwrap();
    let mut notes = Vec::new();
    let mut pass = true;
    for eps in [0.1f64, 0.01, 0.001] {
        let modes = eps_modes(&sys, eps).unwrap();
        let lam = lambda_lower(&modes, &SearchConfig::default()).value;
        // Largest root of l^2 - l / eps - 1 / eps = 0.
        let oracle = (1.0 / eps + (1.0 / (eps * eps) + 4.0 / eps).sqrt()) / 2.0;
        let scaled = eps * lam;
        pass &= (scaled - 1.0).abs() <= 2.0 * eps && (lam - oracle).abs() <= 1e-9 * oracle;
        notes.push(format!("eps={eps}: eps*lambda={scaled:.12}"));
    }
    outcome(pass, notes.join(", "))
}

fn single_block_certificate() -> CheckCertificate<f64> {
    CheckCertificate { blocks: vec![CheckBlock { signal: example_signal(), t: 1.0 }] }
}

fn c6_artifacts() -> Vec<String> {
    let sys = example_system::<f64>();
    [0.1, 0.01].iter().map(|&e| to_json17(&lift_check_certificate(&sys, &single_block_certificate(), e).unwrap()).unwrap()).collect()
}

fn c6() -> Outcome {
    let sys = example_system::<f64>();
    let cert = single_block_certificate();
    let l1 = lift_check_certificate(&sys, &cert, 0.1).unwrap();
    let l2 = lift_check_certificate(&sys, &cert, 0.01).unwrap();
    let oracle = rho2(example_period_oracle(0.1));
    let per_period = l1.block_rhos[0];
    let pass = l1.rho > 1.0
        && l2.rho > 1.0
        && (per_period - 1.167).abs() <= 0.01
        && (per_period - oracle).abs() <= 1e-9
        && (l1.averaged_rho.ln() - lambda_closed_form()).abs() <= 1e-9;
    outcome(
        pass,
        format!(
            "eps=0.1: per-period rho={per_period:.6} (oracle {oracle:.6}), {} periods rho={:.6}; eps=0.01: rho={:.6}",
            l1.repetitions[0], l1.rho, l2.rho
        ),
    )
}

fn c7_artifacts() -> Vec<String> {
    vec![figure1().unwrap().to_csv_string()]
}

fn c7() -> Outcome {
    let t = figure1().unwrap();
    let x: Vec<f64> = t.states.iter().map(|s| s[0].abs()).collect();
    let growth = x.last().unwrap() / x[0];
    let need = (0.7f64 * 20.0 * 0.9).exp();
    // Envelope: the maximum of |x| over consecutive windows of length 2.
    let per = 200;
    let env: Vec<f64> = x.chunks_exact(per).map(|c| c.iter().cloned().fold(0.0, f64::max)).collect();
    let monotone = env.windows(2).all(|w| w[1] > w[0]);
    let same = t.to_csv_string() == figure1().unwrap().to_csv_string();
    outcome(
        growth >= need && monotone && same,
        format!("|x(20)|/|x(0)|={growth:.4e} (need {need:.4e}), envelope monotone={monotone}, CSV identical={same}"),
    )
}

fn kset_cfg() -> KsetConfig {
    KsetConfig { tolerance: 0.05, ..KsetConfig::default() }
}

fn c8_artifacts() -> Vec<String> {
    let sys = example_system::<f64>();
    vec![
        kset_estimate(&sys, &[1.0], &kset_cfg()).unwrap().to_json(),
        format!("{:e}", kset_homogeneity_check(&sys, &[1.0], 2.0, &kset_cfg()).unwrap()),
    ]
}

fn c8() -> Outcome {
    let sys = example_system::<f64>();
    let cloud = kset_estimate(&sys, &[1.0], &kset_cfg()).unwrap();
    let oracle = kset_oracle(1e-3);
    let d = hausdorff(&cloud.points, &oracle);
    let hom = kset_homogeneity_check(&sys, &[1.0], 2.0, &kset_cfg()).unwrap();
    let (lo, hi) = (oracle[0][0], oracle.last().unwrap()[0]);
    outcome(
        d <= 0.1 && hom <= 0.1,
        format!("{} points, d_H to [{lo:.4}, {hi:.4}] = {d:.4}, homogeneity at 2 = {hom:.4}", cloud.points.len()),
    )
}

fn c9_artifacts() -> Vec<String> {
    let sys = example_system::<f64>();
    let cfg = HatConfig::default();
    vec![
        to_json17(&hat_upper_bound(&sys, &cfg).unwrap()).unwrap(),
        to_json17(&hat_lower_greedy(&sys, &[1.0], &cfg).unwrap()).unwrap(),
    ]
}

fn c9() -> Outcome {
    let sys = example_system::<f64>();
    let cfg = HatConfig::default();
    let up = hat_upper_bound(&sys, &cfg).unwrap().value;
    let lo = hat_lower_greedy(&sys, &[1.0], &cfg).unwrap().value;
    let oracle = -1.0 + 20.0;
    outcome((up - oracle).abs() <= 0.3 && (lo - oracle).abs() <= 0.3, format!("upper={up:.6}, greedy lower={lo:.6}, oracle {oracle}"))
}

/// Symmetric negative definite `n x n` matrix with spectrum in `[-3, -0.2]`.
fn random_stable_symmetric(r: &mut impl Rng, n: usize) -> Mat<f64> {
    let g: Mat<f64> = Mat::from_fn(n, n, |_, _| r.gen_range(-1.0..1.0));
    let s: Mat<f64> = Mat::from_fn(n, n, |i, j| 0.5 * (g[(i, j)] + g[(j, i)]));
    let bound = (0..n).map(|i| (0..n).map(|j| s[(i, j)].abs()).sum::<f64>()).fold(0.0, f64::max);
    let lo: f64 = r.gen_range(0.2..1.0);
    s.scale(1.0 / bound.max(1.0)).add_diag(-1.0 - lo)
}

fn c10() -> Outcome {
    let sys = example_system::<f64>();
    let rep = chain_experiment(&sys, &example_chain_config(0)).unwrap();
    let bar = rep.bar_lower.value;
    let check = rep.check_lower.value;
    let fine = rep.finest();
    let max_eps_lower = rep.eps_rows.iter().map(|r| r.lower.value).fold(f64::NEG_INFINITY, f64::max);
    let order_bar = (bar + 1.0).abs() < 1e-9 && bar <= check;
    let check_big = check >= 2.99;
    let check_vs_eps = check <= fine.lower.value + 0.5;
    let eps_vs_hat = max_eps_lower <= 19.3;

    let mut r = rng::substream(0, "acceptance-decoupled", 0);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (n, m, k) = (r.gen_range(1..=3), r.gen_range(1..=2), r.gen_range(1..=3));
        let modes = (0..k)
            .map(|_| BlockMode {
                a: random_stable_symmetric(&mut r, n),
                b: Mat::zeros(n, m),
                c: Mat::zeros(m, n),
                d: random_stable_symmetric(&mut r, m),
            })
            .collect();
        let sys = BlockSystem::new(n, m, modes).unwrap();
        let mut cfg = ChainConfig { eps: vec![0.1, 0.01], ..ChainConfig::default() };
        cfg.search.restarts = 16;
        cfg.check.count = 32;
        cfg.hat.directions = 32;
        let rep = chain_experiment(&sys, &cfg).unwrap();
        let q = [rep.bar_lower.value, rep.bar_upper.value, rep.check_lower.value, rep.finest().lower.value, rep.hat_upper.value];
        let spread = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - q.iter().cloned().fold(f64::INFINITY, f64::min);
        worst = worst.max(spread);
    }
    let decoupled = worst <= 1e-6;
    outcome(
        order_bar && check_big && check_vs_eps && eps_vs_hat && decoupled,
        format!(
            "bar={bar:.6} check={check:.6} eps[{}]={:.6} (check <= eps + 0.5: {check_vs_eps}) max eps lower={max_eps_lower:.6} <= 19.3: {eps_vs_hat}; decoupled spread {worst:.2e}",
            fine.epsilon, fine.lower.value
        ),
    )
}

fn c11() -> Outcome {
    let run = || [c6_artifacts(), c7_artifacts(), c8_artifacts(), c9_artifacts()].concat();
    let first = run();
    let second = run();
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(run);
    let same = first == second && first == single;
    let bytes: usize = first.iter().map(String::len).sum();
    outcome(same, format!("{} artifacts ({bytes} bytes) identical across repeats and thread counts: {same}", first.len()))
}

type Criterion = (&'static str, fn() -> Outcome, Duration);

fn main() {
    let criteria: [Criterion; 11] = [
        ("example gamma check", c1, Duration::from_secs(1)),
        ("Lambda closed form", c2, Duration::from_secs(1)),
        ("constant-signal collapse", c3, Duration::from_secs(5)),
        ("expansion order", c4, Duration::from_secs(10)),
        ("scalar eps scaling", c5, Duration::from_secs(1)),
        ("instability lift", c6, Duration::from_secs(1)),
        ("figure-1 growth", c7, Duration::from_secs(5)),
        ("fast limit set", c8, Duration::from_secs(30)),
        ("inclusion bounds", c9, Duration::from_secs(30)),
        ("chain consistency", c10, Duration::from_secs(120)),
        ("determinism", c11, Duration::from_secs(120)),
    ];
    let mut failed = 0;
    for (i, (name, f, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = f();
        let took = start.elapsed();
        let pass = o.pass && took <= *limit;
        failed += usize::from(!pass);
        println!(
            "criterion {:>2} [{}] {name}: {} ({:.3}s, limit {}s)",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64(),
            limit.as_secs()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
