#![allow(dead_code)]

use proptest::prelude::*;
use slyap::matkit::Mat;
use slyap::model::{BlockMode, BlockSystem, PwcSignal};

pub fn mat(rows: usize, cols: usize, range: f64) -> impl Strategy<Value = Mat<f64>> {
    prop::collection::vec(-range..range, rows * cols).prop_map(move |v| Mat::new(rows, cols, v).unwrap())
}

/// `raw` shifted left until every Gershgorin disc lies in `Re z <= -margin`.
pub fn hurwitz(raw: &Mat<f64>, margin: f64) -> Mat<f64> {
    let n = raw.rows();
    let shift = (0..n).map(|i| (0..n).map(|j| raw[(i, j)].abs()).sum::<f64>()).fold(0.0, f64::max);
    raw.add_diag(-shift - margin)
}

fn mode(n: usize, m: usize) -> impl Strategy<Value = BlockMode<f64>> {
    (mat(n, n, 2.0), mat(n, m, 2.0), mat(m, n, 2.0), mat(m, m, 2.0))
        .prop_map(|(a, b, c, d)| BlockMode { a, b, c, d: hurwitz(&d, 0.5) })
}

/// Systems with `n, m <= max_dim`, up to three modes, and diagonally dominant Hurwitz `D`.
pub fn system(max_dim: usize) -> impl Strategy<Value = BlockSystem<f64>> {
    (1..=max_dim, 1..=max_dim, 1..=3usize).prop_flat_map(|(n, m, k)| {
        prop::collection::vec(mode(n, m), k).prop_map(move |modes| BlockSystem::new(n, m, modes).unwrap())
    })
}

pub fn signal(modes: usize, max_pieces: usize, dwell: std::ops::Range<f64>) -> impl Strategy<Value = PwcSignal<f64>> {
    prop::collection::vec((0..modes, dwell), 1..=max_pieces)
        .prop_map(|p| PwcSignal::from_pairs(&p).unwrap())
}

pub fn system_and_signal(max_dim: usize, max_pieces: usize) -> impl Strategy<Value = (BlockSystem<f64>, PwcSignal<f64>)> {
    system(max_dim).prop_flat_map(move |s| {
        let k = s.modes().len();
        (Just(s), signal(k, max_pieces, 0.05..1.5))
    })
}
