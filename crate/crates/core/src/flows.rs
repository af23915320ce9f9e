//! Flows of switching systems and of the singularly perturbed family, and exact
//! sampled trajectories.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matkit::{mat_exp, Mat};
use crate::model::{BlockMode, BlockSystem, PwcSignal};
use crate::scalar::Scalar;

pub use crate::format::fmt17;

/// `Phi(t, 0)` for a signal, with the signal's digest for provenance.
#[derive(Clone, Debug, Serialize)]
pub struct FlowResult<S: Scalar> {
    pub phi: Mat<S>,
    pub t: S,
    pub signal_digest: String,
}

fn check_square_modes<S: Scalar>(modes: &[Mat<S>]) -> Result<usize> {
    let first = modes.first().ok_or_else(|| Error::Dimension("empty mode list".into()))?;
    let n = first.rows();
    if let Some((i, bad)) = modes.iter().enumerate().find(|(_, m)| !m.is_square() || m.rows() != n) {
        return Err(Error::Dimension(format!("mode {i} is {}x{}, expected {n}x{n}", bad.rows(), bad.cols())));
    }
    Ok(n)
}

/// `e^{N_k tau_k} ... e^{N_1 tau_1}`: later pieces multiply on the left.
pub fn flow<S: Scalar>(modes: &[Mat<S>], sig: &PwcSignal<S>) -> Result<FlowResult<S>> {
    let n = check_square_modes(modes)?;
    sig.check_modes(modes.len())?;
    let mut phi = Mat::identity(n);
    for p in sig.pieces() {
        phi = &mat_exp(&modes[p.mode], p.dwell)? * &phi;
    }
    Ok(FlowResult { phi, t: sig.total_duration(), signal_digest: sig.digest() })
}

/// `[[A, B], [C / eps, D / eps]]`.
pub fn eps_mode<S: Scalar>(mode: &BlockMode<S>, epsilon: S) -> Result<Mat<S>> {
    if !(epsilon > S::zero()) {
        return Err(Error::Precondition(format!("epsilon must be positive, got {epsilon}")));
    }
    let inv = S::one() / epsilon;
    Mat::from_blocks(&mode.a, &mode.b, &mode.c.scale(inv), &mode.d.scale(inv))
}

pub fn eps_modes<S: Scalar>(sys: &BlockSystem<S>, epsilon: S) -> Result<Vec<Mat<S>>> {
    sys.modes().iter().map(|md| eps_mode(md, epsilon)).collect()
}

/// `[[eps A, eps B], [C, D]]`, the generator after the time rescaling `t -> eps t`.
pub fn rescaled_mode<S: Scalar>(mode: &BlockMode<S>, epsilon: S) -> Result<Mat<S>> {
    Mat::from_blocks(&mode.a.scale(epsilon), &mode.b.scale(epsilon), &mode.c, &mode.d)
}

/// Flow of the perturbed system driven by an (already time-scaled) signal.
pub fn eps_flow<S: Scalar>(sys: &BlockSystem<S>, sig: &PwcSignal<S>, epsilon: S) -> Result<FlowResult<S>> {
    flow(&eps_modes(sys, epsilon)?, sig)
}

/// Sampled states of a switching system.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory<S: Scalar> {
    pub times: Vec<S>,
    pub states: Vec<Vec<S>>,
    pub epsilon: Option<S>,
    /// Slow dimension, for CSV headers; zero when the state is fast-only.
    pub n: usize,
}

impl<S: Scalar> Trajectory<S> {
    pub fn last(&self) -> &[S] {
        self.states.last().expect("non-empty trajectory")
    }

    /// CSV with header `t,x1..xn,y1..ym` and 17 significant digits per value.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let dim = self.states.first().map_or(0, |s| s.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.n).map(|i| format!("x{i}")));
        header.extend((1..=dim - self.n).map(|i| format!("y{i}")));
        writeln!(w, "{}", header.join(","))?;
        for (t, s) in self.times.iter().zip(&self.states) {
            let mut row = vec![fmt17(t.as_f64())];
            row.extend(s.iter().map(|v| fmt17(v.as_f64())));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to memory");
        String::from_utf8(buf).expect("ascii csv")
    }
}


/// Which dynamics to simulate.
#[derive(Clone, Debug)]
pub enum SimTarget<S> {
    /// Full state `(x, y)` of the perturbed system at the given epsilon.
    Perturbed(S),
    /// Fast dynamics `y' = D y + C x` with the slow state frozen at `x`
    /// (`x = 0` gives the fast subsystem `y' = D y`).
    Fast(Vec<S>),
}

/// Piecewise generator of a possibly affine system `z' = G z + g`.
struct Affine<S: Scalar> {
    gen: Mat<S>,
    forcing: Option<Vec<S>>,
}

impl<S: Scalar> Affine<S> {
    /// Exact propagator over `h` as an augmented `(k+1)`-square matrix.
    fn propagator(&self, h: S) -> Result<Mat<S>> {
        match &self.forcing {
            None => mat_exp(&self.gen, h),
            Some(g) => {
                let k = self.gen.rows();
                let mut aug = Mat::zeros(k + 1, k + 1);
                aug.set_block(0, 0, &self.gen);
                for (i, &v) in g.iter().enumerate() {
                    aug[(i, k)] = v;
                }
                mat_exp(&aug, h)
            }
        }
    }

    fn apply(&self, prop: &Mat<S>, z: &[S]) -> Vec<S> {
        match self.forcing {
            None => prop.mul_vec(z),
            Some(_) => {
                let mut ext = z.to_vec();
                ext.push(S::one());
                let mut out = prop.mul_vec(&ext);
                out.pop();
                out
            }
        }
    }
}

/// Exact propagation sampled on the grid `k * sample_dt` plus every switching instant.
pub fn simulate<S: Scalar>(
    sys: &BlockSystem<S>,
    sig: &PwcSignal<S>,
    target: &SimTarget<S>,
    z0: &[S],
    sample_dt: S,
) -> Result<Trajectory<S>> {
    if !(sample_dt > S::zero()) {
        return Err(Error::Precondition("sample_dt must be positive".into()));
    }
    sig.check_modes(sys.modes().len())?;
    let (gens, epsilon, n): (Vec<Affine<S>>, Option<S>, usize) = match target {
        SimTarget::Perturbed(eps) => (
            eps_modes(sys, *eps)?.into_iter().map(|gen| Affine { gen, forcing: None }).collect(),
            Some(*eps),
            sys.n(),
        ),
        SimTarget::Fast(x) => {
            if x.len() != sys.n() {
                return Err(Error::Dimension(format!("slow state has length {}, expected {}", x.len(), sys.n())));
            }
            let all_zero = x.iter().all(|v| *v == S::zero());
            let gens = sys
                .modes()
                .iter()
                .map(|md| Affine { gen: md.d.clone(), forcing: (!all_zero).then(|| md.c.mul_vec(x)) })
                .collect();
            (gens, None, 0)
        }
    };
    let dim = gens[0].gen.rows();
    if z0.len() != dim {
        return Err(Error::Dimension(format!("initial state has length {}, expected {dim}", z0.len())));
    }

    let total = sig.total_duration();
    let mut times = vec![S::zero()];
    let mut states = vec![z0.to_vec()];
    let mut start = S::zero();
    let mut z = z0.to_vec();
    let mut k = 1usize;
    let snap = sample_dt * S::lit(1e-9);
    for p in sig.pieces() {
        let g = &gens[p.mode];
        let end = start + p.dwell;
        loop {
            let tk = S::of_usize(k) * sample_dt;
            if tk >= end - snap || tk > total {
                break;
            }
            let prop = g.propagator(tk - start)?;
            times.push(tk);
            states.push(g.apply(&prop, &z));
            k += 1;
        }
        z = g.apply(&g.propagator(p.dwell)?, &z);
        times.push(end);
        states.push(z.clone());
        if (S::of_usize(k) * sample_dt - end).abs() <= snap {
            k += 1;
        }
        start = end;
    }
    Ok(Trajectory { times, states, epsilon, n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_system, RawMode, RawSystem};

    pub(crate) fn example() -> BlockSystem<f64> {
        validate_system(&RawSystem {
            n: 1,
            m: 1,
            modes: vec![
                RawMode { a: vec![vec![-1.0]], b: vec![vec![1.0]], c: vec![vec![0.0]], d: vec![vec![-0.1]] },
                RawMode { a: vec![vec![-3.0]], b: vec![vec![0.0]], c: vec![vec![2.0]], d: vec![vec![-0.1]] },
            ],
        })
        .unwrap()
    }

    #[test]
    fn single_piece_is_exponential() {
        let n = Mat::from_rows(&[[0.3, -1.0], [2.0, -0.5]]).unwrap();
        let f = flow(std::slice::from_ref(&n), &PwcSignal::constant(0, 0.7)).unwrap();
        assert!((&f.phi - &mat_exp(&n, 0.7).unwrap()).norm_max() < 1e-15);
        assert_eq!(f.t, 0.7);
    }

    #[test]
    fn group_law_over_pieces() {
        let n = Mat::from_rows(&[[0.3, -1.0], [2.0, -0.5]]).unwrap();
        let two = flow(std::slice::from_ref(&n), &PwcSignal::from_pairs(&[(0, 0.4), (0, 0.9)]).unwrap()).unwrap();
        let one = flow(&[n], &PwcSignal::constant(0, 1.3)).unwrap();
        assert!((&two.phi - &one.phi).norm_max() < 1e-13);
    }

    #[test]
    fn eps_modes_of_example() {
        let sys = example();
        let m = eps_modes(&sys, 0.1).unwrap();
        assert_eq!(m[0], Mat::from_rows(&[[-1.0, 1.0], [0.0, -1.0]]).unwrap());
        assert!((&m[1] - &Mat::from_rows(&[[-3.0, 0.0], [20.0, -1.0]]).unwrap()).norm_max() < 1e-14);
        assert_eq!(eps_mode(&sys.modes()[1], 1.0).unwrap(), sys.modes()[1].full());
        assert!(eps_mode(&sys.modes()[0], 0.0).is_err());
    }

    #[test]
    fn example_period_flow() {
        let sys = example();
        let sig = PwcSignal::from_pairs(&[(0, 1.0), (1, 1.0)]).unwrap().time_scaled(0.1).unwrap();
        let f = eps_flow(&sys, &sig, 0.1).unwrap();
        // Product of the two closed-form exponentials:
        // e^{0.1 N1} = e^{-0.1} [[1, 0.1], [0, 1]],
        // e^{0.1 N2} = [[e^{-0.3}, 0], [20 (e^{-0.1} - e^{-0.3}) / 2 * ... ]] computed below.
        let e1 = Mat::from_rows(&[[(-0.1f64).exp(), 0.1 * (-0.1f64).exp()], [0.0, (-0.1f64).exp()]]).unwrap();
        // [[-3, 0], [20, -1]] has off-diagonal term 20 (e^{-0.1} - e^{-0.3}) / (-1 + 3).
        let off = 20.0 * ((-0.1f64).exp() - (-0.3f64).exp()) / 2.0;
        let e2 = Mat::from_rows(&[[(-0.3f64).exp(), 0.0], [off, (-0.1f64).exp()]]).unwrap();
        let oracle = &e2 * &e1;
        assert!((&f.phi - &oracle).norm_max() < 1e-14);
        let approx = Mat::from_rows(&[[0.6703, 0.06703], [1.4841, 0.9671]]).unwrap();
        assert!((&f.phi - &approx).norm_max() < 1e-4);
    }

    #[test]
    fn trajectory_of_fast_dynamics() {
        let sys = validate_system::<f64>(&RawSystem {
            n: 1,
            m: 1,
            modes: vec![RawMode { a: vec![vec![0.0]], b: vec![vec![0.0]], c: vec![vec![2.0]], d: vec![vec![-0.1]] }],
        })
        .unwrap();
        let tr = simulate(&sys, &PwcSignal::constant(0, 10.0), &SimTarget::Fast(vec![1.0]), &[0.0], 0.5).unwrap();
        assert_eq!(tr.times.len(), 21);
        for (t, s) in tr.times.iter().zip(&tr.states) {
            assert!((s[0] - 20.0 * (1.0 - (-0.1 * t).exp())).abs() < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn zero_state_stays_zero() {
        let sys = example();
        let sig = PwcSignal::from_pairs(&[(0, 0.3), (1, 0.2)]).unwrap();
        let tr = simulate(&sys, &sig, &SimTarget::Perturbed(0.1), &[0.0, 0.0], 0.05).unwrap();
        assert!(tr.states.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn sample_grid_includes_switches() {
        let sys = example();
        let sig = PwcSignal::from_pairs(&[(0, 0.25), (1, 0.3)]).unwrap();
        let tr = simulate(&sys, &sig, &SimTarget::Perturbed(0.1), &[1.0, 1.0], 0.1).unwrap();
        let t: Vec<f64> = tr.times.clone();
        assert!(t.windows(2).all(|w| w[0] < w[1]));
        assert!(t.iter().any(|&x| (x - 0.25).abs() < 1e-15));
        assert!((t.last().unwrap() - 0.55).abs() < 1e-15);
        assert_eq!(t.len(), 8); // 0, .1, .2, .25, .3, .4, .5, .55
    }

    #[test]
    fn csv_header_and_precision() {
        let sys = example();
        let tr = simulate(&sys, &PwcSignal::constant(0, 0.1), &SimTarget::Perturbed(0.1), &[1.0, 1.0], 0.1).unwrap();
        let csv = tr.to_csv_string();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,x1,y1");
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first[1], "1.0000000000000000e0");
        assert_eq!(first[1].parse::<f64>().unwrap(), 1.0);
    }

    #[test]
    fn dimension_errors() {
        let sys = example();
        let sig = PwcSignal::constant(0, 1.0);
        assert!(simulate(&sys, &sig, &SimTarget::Perturbed(0.1), &[1.0], 0.1).is_err());
        assert!(simulate(&sys, &sig, &SimTarget::Fast(vec![1.0, 2.0]), &[0.0], 0.1).is_err());
        let bad = [Mat::<f64>::identity(2), Mat::identity(3)];
        assert!(matches!(flow(&bad, &PwcSignal::constant(1, 1.0)), Err(Error::Dimension(_))));
    }
}
