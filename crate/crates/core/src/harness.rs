//! Diagnostics over trajectories: density norm ledgers, decay fits,
//! dispersive constants, wave-operator norms, scattering residuals and
//! ħ sweeps.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::density::{x_sigma_norm, Generator, LowRankOperator, NormLedger, Weight};
use crate::error::{Error, Result};
use crate::grid::{fourier_multiplier, fourier_transform, Direction, Field, Grid, Space, C64};
use crate::phase_space::{toeplitz_quantize, ClassicalDistribution, CoherentConvention, ToeplitzOptions};
use crate::propagate::{
    free_propagate, free_symbol, hartree_evolve, phase_symbol, profile_of, wave_operator_adjoint_apply,
    wave_operator_apply, HartreeOptions, Interaction, PotentialSpec, Trajectory, BOUNDARY_TOL,
};

/// `⟨t⟩ = (1 + t²)^{1/2}`.
pub fn bracket(t: f64) -> f64 {
    (1.0 + t * t).sqrt()
}

/// Exponents of the time weights in the density ledger; `7b/8 < a < b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LedgerParams {
    pub a: f64,
    pub b: f64,
}

impl LedgerParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && 7.0 * b / 8.0 < a && a < b) {
            return Err(Error::InvalidParameter(format!("ledger exponents need 7b/8 < a < b, got a = {a}, b = {b}")));
        }
        Ok(Self { a, b })
    }
}

impl Default for LedgerParams {
    fn default() -> Self {
        Self { a: 0.036, b: 0.04 }
    }
}

/// Component names of [`density_ledger`], in order.
pub const DENSITY_TERMS: [&str; 6] = ["rho_l1", "rho_linf", "grad_l1", "grad_linf", "grad_fl1", "hess_l2"];

/// Weighted density norms at time `t`:
/// `‖ρ‖_{L¹}`, `⟨t⟩^d‖ρ‖_{L^∞}`, `⟨t⟩^{1−a}‖∇ρ‖_{L¹}`, `⟨t⟩^{d+1−a}‖∇ρ‖_{L^∞}`,
/// `⟨t⟩^{d+1−a}ħ^{3/2}‖∇ρ‖_{FL¹}`, `⟨t⟩^{d+1/2−b}‖∇²ρ‖_{L²}`.
pub fn density_ledger(rho: &Field, t: f64, hbar: f64, params: LedgerParams) -> Result<NormLedger> {
    rho.require(Space::Position)?;
    let grid = rho.grid();
    let d = grid.dim();
    let df = d as f64;
    let real = Field::from_real(grid, &rho.real_parts())?;
    let hat = fourier_transform(&real, Direction::Forward)?;
    let mut grad_sq = vec![0.0; grid.points()];
    for a in 0..d {
        let m = grid.symbol(|xi| C64::new(0.0, xi[a]));
        let g = fourier_multiplier(&real, &m)?;
        for (s, v) in grad_sq.iter_mut().zip(g.values()) {
            *s += v.re * v.re;
        }
    }
    let grad: Vec<f64> = grad_sq.iter().map(|v| v.sqrt()).collect();
    let dx = grid.cell_volume();
    let dxi = grid.freq_volume();
    let mut fl1 = 0.0;
    let mut hess = 0.0;
    for (i, v) in hat.values().iter().enumerate() {
        let k2: f64 = grid.frequency(i).iter().map(|x| x * x).sum();
        fl1 += k2.sqrt() * v.norm();
        hess += k2 * k2 * v.norm_sqr();
    }
    let tb = bracket(t);
    let vals = real.real_parts();
    let mut out = NormLedger::new();
    out.push("rho_l1", vals.iter().map(|v| v.abs()).sum::<f64>() * dx)?;
    out.push("rho_linf", tb.powf(df) * vals.iter().fold(0.0f64, |m, v| m.max(v.abs())))?;
    out.push("grad_l1", tb.powf(1.0 - params.a) * grad.iter().sum::<f64>() * dx)?;
    out.push("grad_linf", tb.powf(df + 1.0 - params.a) * grad.iter().copied().fold(0.0, f64::max))?;
    out.push("grad_fl1", tb.powf(df + 1.0 - params.a) * hbar.powf(1.5) * fl1 * dxi)?;
    out.push("hess_l2", tb.powf(df + 0.5 - params.b) * (hess * dxi).sqrt())?;
    Ok(out)
}

/// One ledger per trajectory stamp.
pub fn norm_ledger_series(traj: &Trajectory, params: LedgerParams) -> Result<Vec<(f64, NormLedger)>> {
    traj.stamps
        .iter()
        .map(|s| Ok((s.t, density_ledger(&s.gamma.density(), s.t, traj.hbar, params)?)))
        .collect()
}

/// Extracts one named component from a ledger series.
pub fn component(series: &[(f64, NormLedger)], name: &str) -> Vec<(f64, f64)> {
    series.iter().filter_map(|(t, l)| l.get(name).map(|v| (*t, v))).collect()
}

/// Time coordinate of the log-log fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TimeAxis {
    /// `log t`
    Plain,
    /// `log ⟨t⟩`
    Bracket,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayFit {
    pub t_min: f64,
    pub t_max: f64,
    pub exponent: f64,
    pub constant: f64,
    /// Root-mean-square residual of the log-log fit.
    pub residual: f64,
    pub points: usize,
}

/// Least squares `log v = log C + α log τ` over the samples inside `window`.
pub fn decay_fit(series: &[(f64, f64)], window: (f64, f64), axis: TimeAxis) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> =
        series.iter().copied().filter(|(t, _)| *t >= window.0 && *t <= window.1).collect();
    if pts.len() < 8 {
        return Err(Error::FitPoints(pts.len()));
    }
    if let Some((_, v)) = pts.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(Error::NonPositive(*v));
    }
    let xy: Vec<(f64, f64)> = pts
        .iter()
        .map(|(t, v)| {
            let tau = match axis {
                TimeAxis::Plain => *t,
                TimeAxis::Bracket => bracket(*t),
            };
            (tau.ln(), v.ln())
        })
        .collect();
    if xy.iter().any(|(x, _)| !x.is_finite()) {
        return Err(Error::InvalidParameter("fit window must exclude t ≤ 0 on the plain axis".into()));
    }
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("fit window holds a single time".into()));
    }
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let rss: f64 = xy.iter().map(|p| (p.1 - icpt - slope * p.0).powi(2)).sum();
    Ok(DecayFit {
        t_min: pts.first().unwrap().0,
        t_max: pts.last().unwrap().0,
        exponent: slope,
        constant: icpt.exp(),
        residual: (rss / n).sqrt(),
        points: pts.len(),
    })
}

/// Log-log slope of the samples with `t ≥ t_from`; used to judge whether a
/// series stays bounded (slope near zero or negative).
pub fn late_slope(series: &[(f64, f64)], t_from: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        series.iter().copied().filter(|(t, v)| *t >= t_from && *t > 0.0 && *v > 0.0).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Bounded over the run: every value finite and the late log-log slope
/// (from `t_from` on) at most `slope_tol`.
pub fn is_bounded(series: &[(f64, f64)], t_from: f64, slope_tol: f64) -> bool {
    series.iter().all(|(_, v)| v.is_finite()) && late_slope(series, t_from).map_or(true, |s| s <= slope_tol)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DispersiveReport {
    pub times: Vec<f64>,
    /// `(tħ)^{d/2} sup_x |U(t) e^{-iΨ} g|` per time.
    pub weighted: Vec<f64>,
    pub constant: f64,
    pub probe_width: f64,
}

/// L¹-normalized Gaussian of width `w` centered at the origin.
pub fn dispersive_probe(grid: &Grid, width: f64) -> Field {
    let mut g = Field::from_fn(grid, |x| {
        C64::new((-x.iter().map(|v| v * v).sum::<f64>() / (2.0 * width * width)).exp(), 0.0)
    });
    let l1: f64 = g.values().iter().map(|v| v.norm()).sum::<f64>() * grid.cell_volume();
    g.scale(C64::new(1.0 / l1, 0.0));
    g
}

/// `sup_t (tħ)^{d/2} ‖U(t) e^{-iΨ(t,-iħ∇)}‖_{L¹→L^∞}` estimated on one probe
/// column. `phases[k]`, when given, holds `Ψ(t_k, ħξ)` on the frequency
/// lattice of `probe` in storage order.
pub fn dispersive_constant(
    probe: &Grid,
    times: &[f64],
    hbar: f64,
    phases: Option<&[Vec<f64>]>,
    width: f64,
) -> Result<DispersiveReport> {
    let limit = 8.0 * probe.dx();
    if !(width > 0.0) || width > limit {
        return Err(Error::ProbeWidth { width, limit });
    }
    if let Some(p) = phases {
        if p.len() != times.len() {
            return Err(Error::LengthMismatch { expected: times.len(), got: p.len() });
        }
    }
    let g = dispersive_probe(probe, width);
    let d = probe.dim() as f64;
    let mut weighted = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        if !(t * hbar > 0.0) {
            return Err(Error::InvalidParameter(format!("dispersive estimate needs tħ > 0, got t = {t}")));
        }
        let mut sym = free_symbol(probe, t, hbar);
        if let Some(p) = phases {
            if p[k].len() != probe.points() {
                return Err(Error::LengthMismatch { expected: probe.points(), got: p[k].len() });
            }
            for (s, psi) in sym.iter_mut().zip(&p[k]) {
                *s *= C64::from_polar(1.0, -psi);
            }
        }
        let out = fourier_multiplier(&g, &sym)?;
        let frac = out.shell_fraction();
        if frac > BOUNDARY_TOL {
            return Err(Error::BoundaryContamination { t, fraction: frac });
        }
        weighted.push((t * hbar).powf(0.5 * d) * out.sup_norm());
    }
    let constant = weighted.iter().copied().fold(0.0, f64::max);
    Ok(DispersiveReport { times: times.to_vec(), weighted, constant, probe_width: width })
}

/// Cubic (Catmull–Rom) resampling of a stored phase `Ψ(t, ħξ)` onto the
/// frequency lattice of another one-dimensional grid. Frequencies beyond the
/// source lattice take the nearest edge value.
pub fn resample_phase(psi: &Field, probe: &Grid) -> Result<Vec<f64>> {
    let src = psi.grid();
    if src == probe {
        return Ok(psi.real_parts());
    }
    if src.dim() != 1 || probe.dim() != 1 {
        return Err(Error::Unsupported(src.dim()));
    }
    let n = src.n();
    // Centered copy: index j holds mode j − n/2.
    let mut centered = vec![0.0; n];
    for (i, v) in psi.values().iter().enumerate() {
        centered[(src.mode(i) + n as i64 / 2) as usize] = v.re;
    }
    let h = src.dxi();
    let at = |j: i64| centered[j.clamp(0, n as i64 - 1) as usize];
    Ok((0..probe.points())
        .map(|i| {
            let s = probe.freq(i) / h + (n / 2) as f64;
            if s <= 0.0 {
                return centered[0];
            }
            if s >= (n - 1) as f64 {
                return centered[n - 1];
            }
            let j = s.floor() as i64;
            let u = s - j as f64;
            let (p0, p1, p2, p3) = (at(j - 1), at(j), at(j + 1), at(j + 2));
            p1 + 0.5
                * u
                * (p2 - p0 + u * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + u * (3.0 * (p1 - p2) + p3 - p0)))
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PowerOptions {
    pub min_iter: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self { min_iter: 20, max_iter: 200, tol: 1e-6, seed: 7 }
    }
}

/// Operator norm of a matrix-free map by power iteration on `A*A`.
pub fn power_norm<A, B>(grid: &Grid, apply: A, adjoint: B, opts: &PowerOptions) -> Result<f64>
where
    A: Fn(&Field) -> Result<Field>,
    B: Fn(&Field) -> Result<Field>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let vals = (0..grid.points()).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let mut v = Field::from_values(grid, vals, Space::Position)?;
    v.scale(C64::new(1.0 / v.l2_norm(), 0.0));
    let mut prev = 0.0;
    for it in 1..=opts.max_iter {
        let w = apply(&v)?;
        let est = w.l2_norm();
        let z = adjoint(&w)?;
        let zn = z.l2_norm();
        if zn == 0.0 {
            return Ok(0.0);
        }
        v = z.scaled(C64::new(1.0 / zn, 0.0));
        if it >= opts.min_iter && (est - prev).abs() <= opts.tol * est {
            return Ok(est);
        }
        prev = est;
    }
    Err(Error::PowerIteration(opts.max_iter))
}

/// Which weight conjugates the wave operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum WeightKind {
    /// `⟨x⟩^s e^{iΨ} W ⟨x⟩^{-s}` (the phase is optional)
    Position,
    /// `⟨ħ∇⟩^s W ⟨ħ∇⟩^{-s}`
    Frequency,
}

/// `‖w^s [e^{iΨ}] W_V(t) w^{-s}‖` for one stamp.
pub fn wave_operator_norm(
    traj: &Trajectory,
    t: f64,
    s: f64,
    kind: WeightKind,
    corrected: bool,
    opts: &PowerOptions,
) -> Result<f64> {
    if !(0.0..=2.0).contains(&s) {
        return Err(Error::InvalidParameter(format!("weight exponent must lie in [0, 2], got {s}")));
    }
    let stamp = traj.stamp(t)?;
    let hbar = traj.hbar;
    let (up, down) = match kind {
        WeightKind::Position => (Weight::Position(s), Weight::Position(-s)),
        WeightKind::Frequency => (Weight::Frequency(s), Weight::Frequency(-s)),
    };
    let use_phase = corrected && kind == WeightKind::Position;
    let plus = phase_symbol(&stamp.psi, 1.0);
    let minus = phase_symbol(&stamp.psi, -1.0);
    let apply = |u: &Field| -> Result<Field> {
        let mut v = wave_operator_apply(&down.apply(u, hbar)?, traj, t)?;
        if use_phase {
            v = fourier_multiplier(&v, &plus)?;
        }
        up.apply(&v, hbar)
    };
    let adjoint = |u: &Field| -> Result<Field> {
        let mut v = up.apply(u, hbar)?;
        if use_phase {
            v = fourier_multiplier(&v, &minus)?;
        }
        down.apply(&wave_operator_adjoint_apply(&v, traj, t)?, hbar)
    };
    power_norm(traj.grid(), apply, adjoint, opts)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WaveBoundSeries {
    pub s: f64,
    pub kind: WeightKind,
    pub times: Vec<f64>,
    pub corrected: Vec<f64>,
    pub uncorrected: Vec<f64>,
    /// Running supremum of the corrected series.
    pub running_sup: Vec<f64>,
}

/// Weighted wave-operator norms over the given stamps, with and without the
/// phase correction (they coincide for frequency weights).
pub fn wave_operator_boundedness(
    traj: &Trajectory,
    s_list: &[f64],
    times: &[f64],
    kind: WeightKind,
    opts: &PowerOptions,
) -> Result<Vec<WaveBoundSeries>> {
    let mut out = Vec::with_capacity(s_list.len());
    for &s in s_list {
        let mut corrected = Vec::with_capacity(times.len());
        let mut uncorrected = Vec::with_capacity(times.len());
        for &t in times {
            let c = wave_operator_norm(traj, t, s, kind, true, opts)?;
            let u = if kind == WeightKind::Position { wave_operator_norm(traj, t, s, kind, false, opts)? } else { c };
            corrected.push(c);
            uncorrected.push(u);
        }
        let mut sup = 0.0f64;
        let running_sup = corrected
            .iter()
            .map(|v| {
                sup = sup.max(*v);
                sup
            })
            .collect();
        out.push(WaveBoundSeries { s, kind, times: times.to_vec(), corrected, uncorrected, running_sup });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScatteringPoint {
    pub t1: f64,
    pub t2: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScatteringReport {
    pub hbar: f64,
    pub points: Vec<ScatteringPoint>,
    pub strictly_decreasing: bool,
    /// Log-log slope of the residual against `t₁`.
    pub rate: Option<f64>,
}

/// Operator-norm differences of the modified profile between stamp pairs.
pub fn scattering_residual(traj: &Trajectory, pairs: &[(f64, f64)]) -> Result<ScatteringReport> {
    let mut points = Vec::with_capacity(pairs.len());
    for &(t1, t2) in pairs {
        if t1 > t2 {
            return Err(Error::InvalidParameter(format!("pair ({t1}, {t2}) is not ordered")));
        }
        let s1 = traj.stamp(t1)?;
        let s2 = traj.stamp(t2)?;
        let p1 = profile_of(&s1.gamma, &s1.psi, s1.t, traj.hbar)?;
        let p2 = profile_of(&s2.gamma, &s2.psi, s2.t, traj.hbar)?;
        let residual = if t1 == t2 { 0.0 } else { p2.sub(&p1)?.operator_norm() };
        points.push(ScatteringPoint { t1, t2, residual });
    }
    let strictly_decreasing = points.windows(2).all(|w| w[1].residual < w[0].residual);
    let rate = late_slope(&points.iter().map(|p| (p.t1, p.residual)).collect::<Vec<_>>(), 0.0);
    Ok(ScatteringReport { hbar: traj.hbar, points, strictly_decreasing, rate })
}

/// Dyadic stamp pairs `(t, 2t)` with `t_first ≤ t` and `2t ≤ t_last`.
pub fn dyadic_pairs(t_first: f64, t_last: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut t = t_first;
    while 2.0 * t <= t_last * (1.0 + 1e-12) {
        out.push((t, 2.0 * t));
        t *= 2.0;
    }
    out
}

/// Gaussian classical seed `Π (2π s_q s_p)^{-1} e^{-(q−q₀)²/(2s_q²) − (p−p₀)²/(2s_p²)}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GaussianSeed {
    pub spread_q: f64,
    pub spread_p: f64,
    pub center_q: f64,
    pub center_p: f64,
}

impl Default for GaussianSeed {
    fn default() -> Self {
        Self { spread_q: 0.5, spread_p: 0.5, center_q: 0.0, center_p: 0.0 }
    }
}

impl GaussianSeed {
    pub fn eval(&self, q: &[f64], p: &[f64]) -> f64 {
        let mut v = 1.0;
        for (qa, pa) in q.iter().zip(p) {
            v *= (-(qa - self.center_q).powi(2) / (2.0 * self.spread_q.powi(2))
                - (pa - self.center_p).powi(2) / (2.0 * self.spread_p.powi(2)))
            .exp()
                / (2.0 * PI * self.spread_q * self.spread_p);
        }
        v
    }

    pub fn distribution(&self, q: &Grid, p: &Grid) -> Result<ClassicalDistribution> {
        let s = *self;
        ClassicalDistribution::from_fn(q, p, move |qq, pp| s.eval(qq, pp))
    }

    /// Node lattices with spacing at most `√ħ/2` covering eight spreads
    /// around the center.
    pub fn lattices(&self, d: usize, hbar: f64) -> Result<(Grid, Grid)> {
        let h = 0.5 * hbar.sqrt();
        let make = |spread: f64, center: f64| -> Result<Grid> {
            let span = 2.0 * (8.0 * spread + center.abs());
            let h = h.min(spread / 2.0);
            let n = ((span / h).ceil() as usize).next_power_of_two().max(8);
            Grid::new(d, n, n as f64 * h)
        };
        Ok((make(self.spread_q, self.center_q)?, make(self.spread_p, self.center_p)?))
    }

    /// `Op_T[f₀]` on `grid`.
    pub fn quantize(&self, grid: &Grid, hbar: f64, convention: CoherentConvention) -> Result<LowRankOperator> {
        let (q, p) = self.lattices(grid.dim(), hbar)?;
        let f = self.distribution(&q, &p)?;
        toeplitz_quantize(&f, grid, hbar, &ToeplitzOptions { convention, ..ToeplitzOptions::default() })
    }
}

/// `(2πħ)^{-d} |u₀⟩⟨u₀|` with `u₀` the L²-normalized Gaussian of the given width.
pub fn rank_one_seed(grid: &Grid, hbar: f64, width: f64) -> Result<LowRankOperator> {
    let mut u = Field::from_fn(grid, |x| {
        C64::new((-x.iter().map(|v| v * v).sum::<f64>() / (2.0 * width * width)).exp(), 0.0)
    });
    let norm = u.l2_norm();
    u.scale(C64::new(1.0 / norm, 0.0));
    let w = 1.0 / (2.0 * PI * hbar).powi(grid.dim() as i32);
    LowRankOperator::from_orbitals(grid, hbar, vec![u], &[w])
}

/// `sup ρ(t)` of [`rank_one_seed`] under free evolution.
pub fn rank_one_sup_density(d: usize, hbar: f64, width: f64, t: f64) -> f64 {
    let w2 = width * width;
    (PI * w2 * (1.0 + hbar * hbar * t * t / (w2 * w2))).powf(-0.5 * d as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum SeedKind {
    Toeplitz(GaussianSeed),
    RankOne { width: f64 },
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub dim: usize,
    pub n: usize,
    pub len: f64,
    pub hbars: Vec<f64>,
    pub potential: PotentialSpec,
    pub seed: SeedKind,
    pub convention: CoherentConvention,
    pub horizon: f64,
    pub dt: f64,
    pub stride: usize,
    pub window: (f64, f64),
    pub params: LedgerParams,
    pub sigma: f64,
    /// Pass threshold for the uniformity ratios.
    pub threshold: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            dim: 1,
            n: 4096,
            len: 320.0,
            hbars: vec![1.0, 0.5, 0.25, 0.125],
            potential: PotentialSpec::coulomb(0.0),
            seed: SeedKind::Toeplitz(GaussianSeed::default()),
            convention: CoherentConvention::Normalized,
            horizon: 40.0,
            dt: 0.05,
            stride: 20,
            window: (5.0, 40.0),
            params: LedgerParams::default(),
            sigma: 1.6,
            threshold: 2.0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HbarRun {
    pub hbar: f64,
    pub rank: usize,
    pub mass: f64,
    pub mass_drift: f64,
    pub fit: DecayFit,
    /// `sup_t ⟨t⟩^d ‖ρ(t)‖_{L^∞}`.
    pub weighted_sup: f64,
    pub x_sigma: f64,
    pub ledger: Vec<(f64, NormLedger)>,
    /// Largest relative deviation of `sup ρ(t)` from the closed form
    /// (rank-one seeds only).
    pub closed_form_error: Option<f64>,
    pub flags: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub hbars: Vec<f64>,
    pub runs: Vec<HbarRun>,
    /// max/min of the weighted suprema.
    pub uniformity_sup: f64,
    /// max/min of the fitted decay constants.
    pub uniformity_constant: f64,
    /// max/min of `‖γ₀‖_{X^σ_ħ}`.
    pub uniformity_x_sigma: f64,
    pub threshold: f64,
    pub tainted: bool,
    pub flags: Vec<String>,
}

fn ratio(v: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = v.fold((f64::INFINITY, 0.0f64), |(lo, hi), x| (lo.min(x), hi.max(x)));
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

fn check_hbars(hbars: &[f64]) -> Result<()> {
    if hbars.is_empty() || hbars.iter().any(|h| !(*h > 0.0 && *h <= 1.0)) {
        return Err(Error::InvalidParameter("ħ values must lie in (0, 1]".into()));
    }
    if hbars.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter("ħ list must be strictly descending".into()));
    }
    Ok(())
}

/// Initial datum of a sweep member.
pub fn sweep_seed(cfg: &SweepConfig, grid: &Grid, hbar: f64) -> Result<LowRankOperator> {
    match &cfg.seed {
        SeedKind::Toeplitz(s) => s.quantize(grid, hbar, cfg.convention),
        SeedKind::RankOne { width } => rank_one_seed(grid, hbar, *width),
    }
}

/// One member of a sweep. Free runs are evaluated by exact propagation at
/// the stamp times; interacting runs go through the Hartree integrator,
/// whose trajectory is returned.
pub fn run_member(cfg: &SweepConfig, hbar: f64) -> Result<(HbarRun, Option<Trajectory>)> {
    let grid = Grid::new(cfg.dim, cfg.n, cfg.len)?;
    let gamma0 = sweep_seed(cfg, &grid, hbar)?;
    let interaction = Interaction::new(cfg.potential.clone(), &grid)?;
    let x_sigma = x_sigma_norm(&gamma0, cfg.sigma)?.total();
    let mut flags = Vec::new();
    let (ledger, traj) = if interaction.is_zero() {
        let scale = gamma0.schatten_norm(2.0)?;
        let (orbitals, weights) = gamma0.eigen_decomposition(1e-13 * scale)?;
        let steps = (cfg.horizon / cfg.dt).round() as usize;
        let stride = cfg.stride.max(1);
        let times: Vec<f64> = (0..=steps).filter(|m| m % stride == 0 || *m == steps).map(|m| m as f64 * cfg.dt).collect();
        let pv = gamma0.phase_volume();
        let ledger = times
            .par_iter()
            .map(|&t| {
                let mut rho = vec![C64::new(0.0, 0.0); grid.points()];
                for (u, w) in orbitals.iter().zip(&weights) {
                    let v = free_propagate(u, t, hbar)?;
                    for (r, x) in rho.iter_mut().zip(v.values()) {
                        r.re += pv * w * x.norm_sqr();
                    }
                }
                let rho = Field::from_values(&grid, rho, Space::Position)?;
                let frac = rho.shell_fraction();
                if frac > BOUNDARY_TOL {
                    return Err(Error::BoundaryContamination { t, fraction: frac });
                }
                Ok((t, density_ledger(&rho, t, hbar, cfg.params)?))
            })
            .collect::<Result<Vec<_>>>();
        let ledger = match ledger {
            Ok(l) => l,
            Err(Error::BoundaryContamination { t, fraction }) => {
                flags.push(format!("boundary-contaminated at t = {t} ({fraction:e})"));
                Vec::new()
            }
            Err(e) => return Err(e),
        };
        (ledger, None)
    } else {
        let opts = HartreeOptions { dt: cfg.dt, horizon: cfg.horizon, stride: cfg.stride, ..HartreeOptions::default() };
        let traj = hartree_evolve(&gamma0, &interaction, &opts)?;
        flags.extend(traj.flags.iter().cloned());
        (norm_ledger_series(&traj, cfg.params)?, Some(traj))
    };
    let linf: Vec<(f64, f64)> =
        component(&ledger, "rho_linf").into_iter().map(|(t, v)| (t, v / bracket(t).powi(cfg.dim as i32))).collect();
    let fit = decay_fit(&linf, cfg.window, TimeAxis::Plain)?;
    let weighted_sup = component(&ledger, "rho_linf").iter().map(|p| p.1).fold(0.0, f64::max);
    let l1 = component(&ledger, "rho_l1");
    let mass = l1.first().map_or(0.0, |p| p.1);
    let mass_drift = l1.iter().map(|p| (p.1 - mass).abs()).fold(0.0, f64::max) / mass.max(f64::MIN_POSITIVE);
    let closed_form_error = match cfg.seed {
        SeedKind::RankOne { width } if interaction.is_zero() => Some(
            linf.iter()
                .map(|(t, v)| {
                    let exact = rank_one_sup_density(cfg.dim, hbar, width, *t);
                    (v - exact).abs() / exact
                })
                .fold(0.0, f64::max),
        ),
        _ => None,
    };
    let run = HbarRun {
        hbar,
        rank: gamma0.rank(),
        mass,
        mass_drift,
        fit,
        weighted_sup,
        x_sigma,
        ledger,
        closed_form_error,
        flags,
    };
    Ok((run, traj))
}

/// Assembles a report from finished member runs.
pub fn sweep_report(runs: Vec<HbarRun>, threshold: f64) -> SweepReport {
    let tainted = runs.iter().any(|r| r.flags.iter().any(|f| f.starts_with("boundary")));
    let mut flags = Vec::new();
    if tainted {
        flags.push("tainted: a member run touched the boundary".to_string());
    }
    SweepReport {
        hbars: runs.iter().map(|r| r.hbar).collect(),
        uniformity_sup: ratio(runs.iter().map(|r| r.weighted_sup)),
        uniformity_constant: ratio(runs.iter().map(|r| r.fit.constant)),
        uniformity_x_sigma: ratio(runs.iter().map(|r| r.x_sigma)),
        runs,
        threshold,
        tainted,
        flags,
    }
}

/// Quantize, evolve, ledger and fit for every ħ; members run in parallel.
pub fn hbar_sweep(cfg: &SweepConfig) -> Result<SweepReport> {
    check_hbars(&cfg.hbars)?;
    cfg.params.validate()?;
    let runs = cfg
        .hbars
        .par_iter()
        .map(|&h| run_member(cfg, h).map(|r| r.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(sweep_report(runs, cfg.threshold))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ToeplitzStudy {
    pub hbar: f64,
    /// Node spacings, coarsest first.
    pub spacings: Vec<f64>,
    /// `‖[x/(iħ), Op_T f] − Op_T[∂_p f]‖_{S²_ħ}` relative to the second term.
    pub residual_p: Vec<f64>,
    /// `‖[∇, Op_T f] − Op_T[∂_q f]‖_{S²_ħ}` relative to the second term.
    pub residual_q: Vec<f64>,
    pub orders_p: Vec<f64>,
    pub orders_q: Vec<f64>,
    /// `|(2πħ)^d Tr Op_T f − ∬ f| / ∬ f` at the finest spacing.
    pub trace_error: f64,
}

/// Derivative identities of the Toeplitz quantization of a one-dimensional
/// Gaussian seed under node refinement.
pub fn toeplitz_calculus(
    seed: &GaussianSeed,
    grid: &Grid,
    hbar: f64,
    spacings: &[f64],
    convention: CoherentConvention,
) -> Result<ToeplitzStudy> {
    if grid.dim() != 1 {
        return Err(Error::Unsupported(grid.dim()));
    }
    if spacings.len() < 2 || spacings.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::InvalidParameter("need at least two positive node spacings".into()));
    }
    let s = *seed;
    let opts = ToeplitzOptions { tol: 1e-12, convention, allow_signed: true, ..ToeplitzOptions::default() };
    let mut residual_p = Vec::new();
    let mut residual_q = Vec::new();
    let mut trace_error = 0.0;
    for &h in spacings {
        let lattice = |spread: f64, center: f64| -> Result<Grid> {
            let span = 2.0 * (8.0 * spread + center.abs());
            let n = ((span / h).ceil() as usize).next_power_of_two().max(8);
            Grid::new(1, n, n as f64 * h)
        };
        let q = lattice(s.spread_q, s.center_q)?;
        let p = lattice(s.spread_p, s.center_p)?;
        let f = s.distribution(&q, &p)?;
        let fq = ClassicalDistribution::from_fn(&q, &p, |x, y| -(x[0] - s.center_q) / s.spread_q.powi(2) * s.eval(x, y))?;
        let fp = ClassicalDistribution::from_fn(&q, &p, |x, y| -(y[0] - s.center_p) / s.spread_p.powi(2) * s.eval(x, y))?;
        let a = toeplitz_quantize(&f, grid, hbar, &opts)?;
        let bq = toeplitz_quantize(&fq, grid, hbar, &opts)?;
        let bp = toeplitz_quantize(&fp, grid, hbar, &opts)?;
        let cp = a.commutator(Generator::ScaledPosition(0))?.scaled(C64::new(0.0, -1.0));
        let cq = a.commutator(Generator::Gradient(0))?;
        residual_p.push(cp.sub(&bp)?.schatten_norm(2.0)? / bp.schatten_norm(2.0)?);
        residual_q.push(cq.sub(&bq)?.schatten_norm(2.0)? / bq.schatten_norm(2.0)?);
        trace_error = (a.phase_volume() * a.trace().re - 1.0).abs();
    }
    let orders = |r: &[f64]| -> Vec<f64> {
        r.windows(2).zip(spacings.windows(2)).map(|(e, h)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln()).collect()
    };
    Ok(ToeplitzStudy {
        hbar,
        spacings: spacings.to_vec(),
        orders_p: orders(&residual_p),
        orders_q: orders(&residual_q),
        residual_p,
        residual_q,
        trace_error,
    })
}

impl LedgerParams {
    pub fn validate(&self) -> Result<()> {
        Self::new(self.a, self.b).map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_power_laws() {
        let s: Vec<(f64, f64)> = (0..20).map(|k| 5.0 + 2.0 * k as f64).map(|t| (t, 7.0 * t.powi(-2))).collect();
        let f = decay_fit(&s, (5.0, 50.0), TimeAxis::Plain).unwrap();
        assert!((f.exponent + 2.0).abs() < 1e-10);
        assert!((f.constant - 7.0).abs() < 1e-9);
        assert!(f.residual < 1e-12);
        let b: Vec<(f64, f64)> = (0..46).map(|k| 5.0 + k as f64).map(|t| (t, 1.0 / bracket(t))).collect();
        let f = decay_fit(&b, (5.0, 50.0), TimeAxis::Bracket).unwrap();
        assert!((f.exponent + 1.0).abs() < 1e-6);
    }

    #[test]
    fn fit_rejects_bad_windows() {
        let s: Vec<(f64, f64)> = (1..5).map(|t| (t as f64, 1.0)).collect();
        assert!(matches!(decay_fit(&s, (0.0, 10.0), TimeAxis::Plain), Err(Error::FitPoints(4))));
        let z: Vec<(f64, f64)> = (1..12).map(|t| (t as f64, if t == 3 { 0.0 } else { 1.0 })).collect();
        assert!(matches!(decay_fit(&z, (0.0, 20.0), TimeAxis::Plain), Err(Error::NonPositive(_))));
    }

    #[test]
    fn ledger_params_ordering() {
        assert!(LedgerParams::new(0.036, 0.04).is_ok());
        assert!(LedgerParams::new(0.03, 0.04).is_err());
        assert!(LedgerParams::new(0.05, 0.04).is_err());
    }

    #[test]
    fn zero_density_ledger() {
        let g = Grid::new(1, 64, 10.0).unwrap();
        let l = density_ledger(&Field::zeros(&g, Space::Position), 3.0, 0.5, LedgerParams::default()).unwrap();
        assert_eq!(l.names(), DENSITY_TERMS.to_vec());
        assert_eq!(l.total(), 0.0);
    }

    #[test]
    fn free_dispersive_constant() {
        let g = Grid::new(1, 1024, 256.0).unwrap();
        let r = dispersive_constant(&g, &[1.0, 2.0, 4.0, 8.0], 1.0, None, 2.0 * g.dx()).unwrap();
        let c = (2.0 * PI).powf(-0.5);
        assert!((r.constant - c).abs() < 0.05 * c);
        assert!(matches!(dispersive_constant(&g, &[1.0], 1.0, None, 9.0 * g.dx()), Err(Error::ProbeWidth { .. })));
    }

    #[test]
    fn phase_resampling_is_exact_for_cubics() {
        let src = Grid::new(1, 64, 20.0).unwrap();
        let probe = Grid::new(1, 32, 30.0).unwrap();
        let f = |k: f64| 0.3 * k * k - 0.1 * k + 2.0;
        let psi = Field::from_values(&src, (0..64).map(|i| C64::new(f(src.freq(i)), 0.0)).collect(), Space::Frequency)
            .unwrap();
        let out = resample_phase(&psi, &probe).unwrap();
        for (i, v) in out.iter().enumerate() {
            assert!((v - f(probe.freq(i))).abs() < 1e-10);
        }
    }

    #[test]
    fn dyadic_pairs_cover_window() {
        assert_eq!(dyadic_pairs(5.0, 40.0), vec![(5.0, 10.0), (10.0, 20.0), (20.0, 40.0)]);
    }
}
