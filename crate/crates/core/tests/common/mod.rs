//! Dense-matrix oracles for small one-dimensional grids. Everything here is
//! built from explicit sums over the lattice, independently of the FFT and
//! factor-based code paths.

#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use schl::{Field, Grid, LowRankOperator, C64};

pub type Mat = DMatrix<C64>;

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn mode(n: usize, k: usize) -> f64 {
    if k < n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

/// Matrix of the Fourier multiplier with symbol `m(ξ)` on a 1-d grid.
pub fn multiplier(grid: &Grid, m: impl Fn(f64) -> C64) -> Mat {
    let n = grid.n();
    let dxi = 2.0 * PI / grid.len();
    let syms: Vec<(f64, C64)> = (0..n).map(|k| (mode(n, k) * dxi, m(mode(n, k) * dxi))).collect();
    Mat::from_fn(n, n, |j, l| {
        let dx = grid.coord(j) - grid.coord(l);
        syms.iter().map(|(xi, s)| s * C64::from_polar(1.0, xi * dx)).sum::<C64>() / n as f64
    })
}

pub fn diagonal(grid: &Grid, f: impl Fn(f64) -> f64) -> Mat {
    let n = grid.n();
    Mat::from_fn(n, n, |i, j| if i == j { c(f(grid.coord(i))) } else { c(0.0) })
}

pub fn position_weight(grid: &Grid, s: f64) -> Mat {
    diagonal(grid, |x| (1.0 + x * x).powf(0.5 * s))
}

pub fn frequency_weight(grid: &Grid, hbar: f64, s: f64) -> Mat {
    multiplier(grid, |xi| c((1.0 + hbar * hbar * xi * xi).powf(0.5 * s)))
}

pub fn gradient(grid: &Grid) -> Mat {
    multiplier(grid, |xi| C64::new(0.0, xi))
}

pub fn scaled_position(grid: &Grid, hbar: f64) -> Mat {
    diagonal(grid, |x| x / hbar)
}

/// Operator matrix `Δx Σ C_jk f_j ḡ_kᵀ` on `l²(Δx)` from raw factors.
pub fn operator_matrix(grid: &Grid, left: &[Field], right: &[Field], coeffs: &Mat) -> Mat {
    let n = grid.n();
    let mut m = Mat::zeros(n, n);
    for (j, f) in left.iter().enumerate() {
        for (k, g) in right.iter().enumerate() {
            let cjk = coeffs[(j, k)];
            for a in 0..n {
                for b in 0..n {
                    m[(a, b)] += cjk * f.values()[a] * g.values()[b].conj();
                }
            }
        }
    }
    m * c(grid.dx())
}

pub fn operator_of(a: &LowRankOperator) -> Mat {
    operator_matrix(a.grid(), a.left(), a.right(), a.coeffs())
}

/// Scaled Schatten norm `(2πħ)^{1/r} ‖M‖_{S^r}`.
pub fn schatten(m: &Mat, hbar: f64, r: f64) -> f64 {
    let s = m.clone().singular_values();
    if r.is_infinite() {
        return s.iter().copied().fold(0.0, f64::max);
    }
    (2.0 * PI * hbar).powf(1.0 / r) * s.iter().map(|v| v.powf(r)).sum::<f64>().powf(1.0 / r)
}

pub fn commutator(g: &Mat, m: &Mat) -> Mat {
    g * m - m * g
}

/// All thirteen terms of the `X^σ_ħ` ledger in order.
pub fn x_sigma_terms(grid: &Grid, hbar: f64, m: &Mat, sigma: f64) -> Vec<f64> {
    let d = gradient(grid);
    let x = scaled_position(grid, hbar);
    let fw = |s: f64| frequency_weight(grid, hbar, s);
    let pw = |s: f64| position_weight(grid, s);
    let w2 = |w: &Mat, a: &Mat| w * a * w;
    let cd = commutator(&d, m);
    let cx = commutator(&x, m);
    vec![
        schatten(m, hbar, 1.0),
        schatten(&w2(&fw(sigma), m), hbar, f64::INFINITY),
        schatten(&w2(&pw(sigma), m), hbar, f64::INFINITY),
        schatten(&cd, hbar, 1.0),
        schatten(&cx, hbar, 1.0),
        schatten(&w2(&fw(sigma), &cd), hbar, 2.0),
        schatten(&w2(&pw(sigma), &cx), hbar, 2.0),
        schatten(&w2(&fw(sigma), &cd), hbar, f64::INFINITY),
        schatten(&w2(&pw(sigma), &cx), hbar, f64::INFINITY),
        schatten(&w2(&fw(0.5 * sigma), &commutator(&d, &cd)), hbar, 2.0),
        schatten(&w2(&pw(0.5 * sigma), &commutator(&x, &cx)), hbar, 2.0),
        schatten(&w2(&fw(0.5 * sigma), &commutator(&d, &cx)), hbar, 2.0),
        schatten(&w2(&pw(0.5 * sigma), &commutator(&d, &cx)), hbar, 2.0),
    ]
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

pub fn mat_rel_err(a: &Mat, b: &Mat) -> f64 {
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).norm() / scale
    }
}

/// Random operator with `rank` factor pairs, sometimes hermitian.
pub fn random_operator(grid: &Grid, hbar: f64, rank: usize, rng: &mut ChaCha8Rng) -> LowRankOperator {
    let mut field = || {
        let v = (0..grid.points()).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        Field::from_values(grid, v, schl::Space::Position).unwrap()
    };
    let left: Vec<Field> = (0..rank).map(|_| field()).collect();
    let right: Vec<Field> = (0..rank).map(|_| field()).collect();
    if rng.gen_bool(0.5) {
        let w: Vec<f64> = (0..rank).map(|_| rng.gen_range(-1.0..1.0)).collect();
        LowRankOperator::from_orbitals(grid, hbar, left, &w).unwrap()
    } else {
        let coeffs = Mat::from_fn(rank, rank, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        LowRankOperator::new(grid, hbar, left, right, coeffs, schl::Symmetry::General).unwrap()
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
