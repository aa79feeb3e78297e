//! Phase-space objects: classical distributions on `(q, p)` lattices, the
//! Wigner transform, coherent-state (Toeplitz) quantization and Vlasov
//! transport.

use std::f64::consts::PI;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::density::{combine, hermitian_eigen, LowRankOperator, Symmetry};
use crate::error::{Error, Result};
use crate::grid::{
    apply_multiplier_in_place, derivative, read_samples, read_snapshot_header, write_samples,
    write_snapshot_header, Field, Grid, Space, C64,
};
use crate::propagate::{Interaction, BOUNDARY_TOL};

/// Real samples `f(q, p)` on a tensor lattice; storage is q-major, so the
/// sample at `(iq, ip)` sits at `iq · N_p + ip`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalDistribution {
    q: Grid,
    p: Grid,
    values: Vec<f64>,
}

impl ClassicalDistribution {
    pub fn new(q: &Grid, p: &Grid, values: Vec<f64>) -> Result<Self> {
        if q.dim() != p.dim() {
            return Err(Error::GridMismatch);
        }
        if values.len() != q.points() * p.points() {
            return Err(Error::LengthMismatch { expected: q.points() * p.points(), got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("distribution samples"));
        }
        Ok(Self { q: q.clone(), p: p.clone(), values })
    }

    pub fn zeros(q: &Grid, p: &Grid) -> Self {
        Self { q: q.clone(), p: p.clone(), values: vec![0.0; q.points() * p.points()] }
    }

    pub fn from_fn(q: &Grid, p: &Grid, f: impl Fn(&[f64], &[f64]) -> f64 + Sync) -> Result<Self> {
        let d = q.dim();
        let np = p.points();
        let values: Vec<f64> = (0..q.points() * np)
            .into_par_iter()
            .map(|i| f(&q.position(i / np)[..d], &p.position(i % np)[..d]))
            .collect();
        Self::new(q, p, values)
    }

    pub fn q_grid(&self) -> &Grid {
        &self.q
    }

    pub fn p_grid(&self) -> &Grid {
        &self.p
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn cell(&self) -> f64 {
        self.q.cell_volume() * self.p.cell_volume()
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    fn same_lattice(&self, other: &Self) -> Result<()> {
        if self.q != other.q || self.p != other.p {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    pub fn l1_distance(&self, other: &Self) -> Result<f64> {
        self.same_lattice(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).sum::<f64>() * self.cell())
    }

    pub fn l2_distance(&self, other: &Self) -> Result<f64> {
        self.same_lattice(other)?;
        Ok((self.values.iter().zip(&other.values).map(|(a, b)| (a - b).powi(2)).sum::<f64>() * self.cell()).sqrt())
    }

    pub fn sup_distance(&self, other: &Self) -> Result<f64> {
        self.same_lattice(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }

    /// `∬ f φ dq dp`.
    pub fn pair(&self, phi: impl Fn(&[f64], &[f64]) -> f64 + Sync) -> f64 {
        let d = self.q.dim();
        let np = self.p.points();
        let total: f64 = (0..self.values.len())
            .into_par_iter()
            .map(|i| {
                let v = self.values[i];
                if v == 0.0 {
                    0.0
                } else {
                    v * phi(&self.q.position(i / np)[..d], &self.p.position(i % np)[..d])
                }
            })
            .collect::<Vec<_>>()
            .iter()
            .sum();
        total * self.cell()
    }

    /// Largest fraction of `∫|f|` carried by the outermost layer in q or p.
    pub fn boundary_fraction(&self) -> f64 {
        let np = self.p.points();
        let mut total = 0.0;
        let mut shell = 0.0;
        for (i, v) in self.values.iter().enumerate() {
            let a = v.abs();
            total += a;
            if self.q.is_shell(i / np) || self.p.is_shell(i % np) {
                shell += a;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            shell / total
        }
    }

    /// Snapshot with `d` doubled; the p box length rides in the auxiliary
    /// header slot and `log₂` of the p point count in the spare byte.
    pub fn write_snapshot(&self, w: &mut impl Write) -> Result<()> {
        let extra = if self.p.n() == self.q.n() { 0 } else { self.p.n().trailing_zeros() as u8 };
        write_snapshot_header(w, &self.q, Space::Position, 2 * self.q.dim(), self.p.len(), extra)?;
        let c: Vec<C64> = self.values.iter().map(|&v| C64::new(v, 0.0)).collect();
        write_samples(w, &c)
    }

    pub fn read_snapshot(r: &mut impl Read) -> Result<Self> {
        let h = read_snapshot_header(r)?;
        if h.dim % 2 != 0 || h.dim == 0 {
            return Err(Error::Format(format!("phase-space snapshot needs even dimension, got {}", h.dim)));
        }
        let q = Grid::new(h.dim / 2, h.n, h.len)?;
        let pn = if h.extra == 0 { h.n } else { 1usize.checked_shl(h.extra as u32).unwrap_or(0) };
        let p = Grid::new(h.dim / 2, pn, h.aux)?;
        let c = read_samples(r, q.points() * p.points())?;
        Self::new(&q, &p, c.iter().map(|v| v.re).collect())
    }
}

/// `ρ(f)(q) = ∫ f(q, p) dp`.
pub fn classical_density(f: &ClassicalDistribution) -> Field {
    let np = f.p.points();
    let dp = f.p.cell_volume();
    let values = f.values.chunks_exact(np).map(|row| C64::new(row.iter().sum::<f64>() * dp, 0.0)).collect();
    Field::from_raw(&f.q, values, Space::Position)
}

/// Multiplier realizing `g(x) ↦ g(x − s)` on trigonometric interpolants.
fn shift_symbol(grid: &Grid, s: &[f64]) -> Vec<C64> {
    let n = grid.n();
    let d = grid.dim();
    let axis: Vec<Vec<C64>> = (0..d)
        .map(|a| {
            (0..n)
                .map(|i| {
                    let xi = grid.freq(i);
                    if i == n / 2 {
                        C64::new((xi * s[a]).cos(), 0.0)
                    } else {
                        C64::from_polar(1.0, -xi * s[a])
                    }
                })
                .collect()
        })
        .collect();
    (0..grid.points())
        .map(|idx| {
            let ix = grid.unravel(idx);
            (0..d).map(|a| axis[a][ix[a]]).product()
        })
        .collect()
}

fn shift_in_place(grid: &Grid, data: &mut [C64], s: &[f64]) {
    if s.iter().all(|v| *v == 0.0) {
        return;
    }
    apply_multiplier_in_place(grid, data, &shift_symbol(grid, s));
}

/// Free transport `f(q − tp, p)` by exact trigonometric shifts in q.
pub fn vlasov_free(f: &ClassicalDistribution, t: f64) -> ClassicalDistribution {
    transport_q(f, t)
}

fn transport_q(f: &ClassicalDistribution, t: f64) -> ClassicalDistribution {
    if t == 0.0 {
        return f.clone();
    }
    let nq = f.q.points();
    let np = f.p.points();
    let d = f.q.dim();
    let cols: Vec<Vec<f64>> = (0..np)
        .into_par_iter()
        .map(|ip| {
            let p = f.p.position(ip);
            let s: Vec<f64> = (0..d).map(|a| t * p[a]).collect();
            let mut col: Vec<C64> = (0..nq).map(|iq| C64::new(f.values[iq * np + ip], 0.0)).collect();
            shift_in_place(&f.q, &mut col, &s);
            col.iter().map(|v| v.re).collect()
        })
        .collect();
    let mut out = f.clone();
    for (ip, col) in cols.iter().enumerate() {
        for (iq, v) in col.iter().enumerate() {
            out.values[iq * np + ip] = *v;
        }
    }
    out
}

/// `f(q, p) ↦ f(q, p + dt ∇V(q))`.
fn kick_p(f: &ClassicalDistribution, grad_v: &[Vec<f64>], dt: f64) -> ClassicalDistribution {
    let np = f.p.points();
    let d = f.q.dim();
    let mut out = f.clone();
    out.values.par_chunks_exact_mut(np).enumerate().for_each(|(iq, row)| {
        let s: Vec<f64> = (0..d).map(|a| -dt * grad_v[a][iq]).collect();
        let mut c: Vec<C64> = row.iter().map(|&v| C64::new(v, 0.0)).collect();
        shift_in_place(&f.p, &mut c, &s);
        for (r, v) in row.iter_mut().zip(c) {
            *r = v.re;
        }
    });
    out
}

#[derive(Clone, Debug)]
pub struct VlasovTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<ClassicalDistribution>,
    pub flags: Vec<String>,
}

/// Strang-split semi-Lagrangian solver: half transport, kick with the force
/// of `w ∗ ρ(f)`, half transport. One-dimensional only.
pub fn vlasov_evolve(
    f0: &ClassicalDistribution,
    interaction: &Interaction,
    horizon: f64,
    dt: f64,
    stride: usize,
) -> Result<VlasovTrajectory> {
    let d = f0.q.dim();
    if d != 1 {
        return Err(Error::Unsupported(d));
    }
    if interaction.grid() != &f0.q {
        return Err(Error::GridMismatch);
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let steps = (horizon / dt).round() as usize;
    let stride = stride.max(1);
    let mut f = f0.clone();
    let mut out = VlasovTrajectory { times: vec![0.0], states: vec![f0.clone()], flags: Vec::new() };
    for m in 1..=steps {
        let half = transport_q(&f, 0.5 * dt);
        let grad: Vec<Vec<f64>> = if interaction.is_zero() {
            vec![vec![0.0; f.q.points()]; d]
        } else {
            let v = interaction.potential(&classical_density(&half));
            (0..d).map(|a| derivative(&v, a).map(|g| g.real_parts())).collect::<Result<_>>()?
        };
        let kicked = kick_p(&half, &grad, dt);
        f = transport_q(&kicked, 0.5 * dt);
        let t = m as f64 * dt;
        let frac = f.boundary_fraction();
        if m % stride == 0 || m == steps || frac > BOUNDARY_TOL {
            out.times.push(t);
            out.states.push(f.clone());
        }
        if frac > BOUNDARY_TOL {
            out.flags.push(format!("boundary-contaminated at t = {t}"));
            break;
        }
    }
    Ok(out)
}

/// Samples of `f` on a twice-finer lattice: `out[2i + o] = f(x_i + o Δx/2)`.
fn upsample(f: &Field) -> Vec<C64> {
    let grid = f.grid();
    let d = grid.dim();
    let n = grid.n();
    let h = 0.5 * grid.dx();
    let fine_n = 2 * n;
    let mut out = vec![C64::new(0.0, 0.0); fine_n.pow(d as u32)];
    for pattern in 0..(1usize << d) {
        let s: Vec<f64> = (0..d).map(|a| if pattern >> a & 1 == 1 { -h } else { 0.0 }).collect();
        let mut vals = f.values().to_vec();
        shift_in_place(grid, &mut vals, &s);
        for (idx, v) in vals.into_iter().enumerate() {
            let ix = grid.unravel(idx);
            let mut fine = 0;
            for a in 0..d {
                fine = fine * fine_n + 2 * ix[a] + (pattern >> a & 1);
            }
            out[fine] = v;
        }
    }
    out
}

/// Default momentum lattice of [`wigner`]: `p = ħξ`, centered.
pub fn wigner_momentum_grid(grid: &Grid, hbar: f64) -> Result<Grid> {
    Grid::new(grid.dim(), grid.n(), 2.0 * PI * hbar * grid.n() as f64 / grid.len())
}

/// Left factors (with the coefficients folded in) and right factors on the
/// twice-finer lattice.
fn kernel_slices(a: &LowRankOperator) -> (Vec<Vec<C64>>, Vec<Vec<C64>>) {
    let fine_left: Vec<Vec<C64>> = {
        // Fold C into the left factors: L_k = Σ_j C_jk f_j.
        let combined = combine(a.left(), a.coeffs(), a.grid());
        combined.par_iter().map(upsample).collect()
    };
    let fine_right: Vec<Vec<C64>> = a.right().par_iter().map(upsample).collect();
    (fine_left, fine_right)
}

/// `Wig[A](q, p) = ∫ A(q + y/2, q − y/2) e^{-ip·y/ħ} dy` on the q lattice of
/// `A` and the momentum lattice `p = ħξ`.
pub fn wigner(a: &LowRankOperator) -> Result<ClassicalDistribution> {
    let grid = a.grid();
    let d = grid.dim();
    if d > 2 {
        return Err(Error::Unsupported(d));
    }
    let n = grid.n();
    let fine_n = 2 * n;
    let pgrid = wigner_momentum_grid(grid, a.hbar())?;
    let (fl, fr) = kernel_slices(a);
    let nq = grid.points();
    let dxd = grid.cell_volume();
    let rows: Vec<Vec<f64>> = (0..nq)
        .into_par_iter()
        .map(|iq| {
            let qi = grid.unravel(iq);
            let mut folded = vec![C64::new(0.0, 0.0); nq];
            // Lag y = mΔx with m in [-n/2, n/2) per axis; the kernel is read at
            // fine indices 2q ± m.
            for mi in 0..nq {
                let mut plus = 0usize;
                let mut minus = 0usize;
                let mut fold = 0usize;
                let mut rem = mi;
                let mut digits = [0usize; 2];
                for a in (0..d).rev() {
                    digits[a] = rem % n;
                    rem /= n;
                }
                for a in 0..d {
                    let m = digits[a] as i64 - n as i64 / 2;
                    let c = 2 * qi[a] as i64;
                    plus = plus * fine_n + (c + m).rem_euclid(fine_n as i64) as usize;
                    minus = minus * fine_n + (c - m).rem_euclid(fine_n as i64) as usize;
                    fold = fold * n + m.rem_euclid(n as i64) as usize;
                }
                let mut s = C64::new(0.0, 0.0);
                for (l, r) in fl.iter().zip(&fr) {
                    s += l[plus] * r[minus].conj();
                }
                folded[fold] += s;
            }
            grid.dft(&mut folded, true);
            // Reorder modes to the centered momentum lattice.
            let mut row = vec![0.0; nq];
            for (k, v) in folded.iter().enumerate() {
                let kx = grid.unravel(k);
                let mut j = 0usize;
                for a in 0..d {
                    let mode = grid.mode(kx[a]);
                    j = j * n + (mode + n as i64 / 2) as usize;
                }
                row[j] = v.re * dxd;
            }
            row
        })
        .collect();
    let values = rows.into_iter().flatten().collect();
    ClassicalDistribution::new(grid, &pgrid, values)
}

/// Wigner transform on an arbitrary momentum lattice (one dimension).
pub fn wigner_on(a: &LowRankOperator, pgrid: &Grid) -> Result<ClassicalDistribution> {
    let grid = a.grid();
    if grid.dim() != 1 || pgrid.dim() != 1 {
        return Err(Error::Unsupported(grid.dim()));
    }
    let n = grid.n();
    let fine_n = 2 * n;
    let hbar = a.hbar();
    let (fl, fr) = kernel_slices(a);
    let np = pgrid.points();
    let dx = grid.dx();
    // Phase table e^{-i p_j m Δx/ħ} for m in [-n/2, n/2).
    let half = n as i64 / 2;
    let table: Vec<Vec<C64>> = (0..np)
        .map(|j| {
            let p = pgrid.coord(j);
            (0..n).map(|mi| C64::from_polar(1.0, -p * (mi as i64 - half) as f64 * dx / hbar)).collect()
        })
        .collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|iq| {
            let c = 2 * iq as i64;
            let s: Vec<C64> = (0..n)
                .map(|mi| {
                    let m = mi as i64 - half;
                    let plus = (c + m).rem_euclid(fine_n as i64) as usize;
                    let minus = (c - m).rem_euclid(fine_n as i64) as usize;
                    fl.iter().zip(&fr).map(|(l, r)| l[plus] * r[minus].conj()).sum()
                })
                .collect();
            table
                .iter()
                .map(|row| row.iter().zip(&s).map(|(e, v)| e * v).sum::<C64>().re * dx)
                .collect()
        })
        .collect();
    ClassicalDistribution::new(grid, pgrid, rows.into_iter().flatten().collect())
}

/// Coherent-state convention.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoherentConvention {
    /// `(πħ)^{-d/4} e^{-|x−q|²/(2ħ)} e^{ip·x/ħ}`
    Normalized,
    /// `e^{-|x−q|²/(2ħ) + iq·(x−p)/ħ}` exactly as printed in the source text.
    PaperLiteral,
}

pub fn coherent_state(grid: &Grid, hbar: f64, q: &[f64], p: &[f64], convention: CoherentConvention) -> Field {
    let d = grid.dim();
    let amp = match convention {
        CoherentConvention::Normalized => (PI * hbar).powf(-0.25 * d as f64),
        CoherentConvention::PaperLiteral => 1.0,
    };
    Field::from_fn(grid, |x| {
        let mut r2 = 0.0;
        let mut phase = 0.0;
        for a in 0..d {
            r2 += (x[a] - q[a]).powi(2);
            phase += match convention {
                CoherentConvention::Normalized => p[a] * x[a],
                CoherentConvention::PaperLiteral => q[a] * (x[a] - p[a]),
            };
        }
        C64::from_polar(amp * (-r2 / (2.0 * hbar)).exp(), phase / hbar)
    })
}

#[derive(Clone, Debug)]
pub struct ToeplitzOptions {
    /// Node strides along the q and p lattices of the distribution.
    pub q_stride: usize,
    pub p_stride: usize,
    /// Final truncation, relative to the leading eigenvalue (`S²` budget).
    pub tol: f64,
    pub convention: CoherentConvention,
    /// Accept sign-changing symbols (used for derivative identities).
    pub allow_signed: bool,
}

impl Default for ToeplitzOptions {
    fn default() -> Self {
        Self { q_stride: 1, p_stride: 1, tol: 1e-8, convention: CoherentConvention::Normalized, allow_signed: false }
    }
}

/// Strides giving node spacing at most `√ħ / 2` on the lattices of `f`.
pub fn default_strides(f: &ClassicalDistribution, hbar: f64) -> (usize, usize) {
    let target = 0.5 * hbar.sqrt();
    let sq = ((target / f.q.dx()).floor() as usize).max(1);
    let sp = ((target / f.p.dx()).floor() as usize).max(1);
    (sq, sp)
}

/// Positive-definite accumulator `Σ w_i |v_i⟩⟨v_i|` in an incrementally
/// grown orthonormal basis.
struct Accumulator {
    grid: Grid,
    basis: Vec<Field>,
    s: DMatrix<C64>,
    truncated_at: usize,
}

impl Accumulator {
    fn new(grid: &Grid) -> Self {
        Self { grid: grid.clone(), basis: Vec::new(), s: DMatrix::zeros(0, 0), truncated_at: 0 }
    }

    fn add(&mut self, vecs: Vec<Field>, weights: &[f64]) {
        let r0 = self.basis.len();
        let zero = C64::new(0.0, 0.0);
        // Each vector is projected against the whole current basis, including
        // the directions contributed earlier in the same batch.
        let mut coords: Vec<Vec<C64>> = Vec::with_capacity(vecs.len());
        for v in &vecs {
            let norm0 = v.l2_norm();
            let mut w = v.clone();
            let mut c = vec![zero; self.basis.len()];
            for _ in 0..2 {
                let proj: Vec<C64> = self.basis.par_iter().map(|b| b.inner(&w)).collect();
                for (k, (b, p)) in self.basis.iter().zip(&proj).enumerate() {
                    w.axpy(-p, b);
                    c[k] += p;
                }
            }
            let norm = w.l2_norm();
            if norm > 1e-10 * norm0 {
                w.scale(C64::new(1.0 / norm, 0.0));
                self.basis.push(w);
                c.push(C64::new(norm, 0.0));
            }
            coords.push(c);
        }
        let total = self.basis.len();
        let mut s = DMatrix::from_element(total, total, zero);
        s.view_mut((0, 0), (r0, r0)).copy_from(&self.s);
        for (c, &w) in coords.iter().zip(weights) {
            if w == 0.0 {
                continue;
            }
            let mut col = DVector::from_element(total, zero);
            for (k, v) in c.iter().enumerate() {
                col[k] = *v;
            }
            s += (&col * col.adjoint()) * C64::new(w, 0.0);
        }
        self.s = s;
        if self.basis.len() > self.truncated_at + 48 {
            self.truncate(1e-13);
        }
    }

    /// Rotates to the eigenbasis and keeps eigenvalues whose dropped tail has
    /// `l²` mass below `rel · max|λ|`.
    fn truncate(&mut self, rel: f64) {
        if self.basis.is_empty() {
            return;
        }
        let eig = hermitian_eigen(&self.s);
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].abs().partial_cmp(&eig.eigenvalues[i].abs()).unwrap());
        let top = eig.eigenvalues[order[0]].abs();
        let mut keep = order.len();
        let mut dropped = 0.0;
        while keep > 0 {
            let v = eig.eigenvalues[order[keep - 1]];
            let next = dropped + v * v;
            if next.sqrt() > rel * top {
                break;
            }
            dropped = next;
            keep -= 1;
        }
        let mut w = DMatrix::from_element(self.basis.len(), keep, C64::new(0.0, 0.0));
        let mut lam = Vec::with_capacity(keep);
        for (c, &i) in order.iter().take(keep).enumerate() {
            w.set_column(c, &eig.eigenvectors.column(i));
            lam.push(C64::new(eig.eigenvalues[i], 0.0));
        }
        self.basis = combine(&self.basis, &w, &self.grid);
        self.s = DMatrix::from_diagonal(&DVector::from_vec(lam));
        self.truncated_at = self.basis.len();
    }
}

/// `Op_T[f] = (2πħ)^{-d} ∬ |φ_{q,p}⟩⟨φ_{q,p}| f dq dp` by node quadrature on
/// the lattice of `f`, realized on the quantum grid `grid`.
pub fn toeplitz_quantize(
    f: &ClassicalDistribution,
    grid: &Grid,
    hbar: f64,
    opts: &ToeplitzOptions,
) -> Result<LowRankOperator> {
    if f.q.dim() != grid.dim() {
        return Err(Error::GridMismatch);
    }
    let d = grid.dim();
    let fmax = f.values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if !opts.allow_signed {
        let fmin = f.min();
        if fmin < -1e-12 * fmax.max(1.0) {
            return Err(Error::NegativeDistribution(fmin));
        }
    }
    let (sq, sp) = (opts.q_stride.max(1), opts.p_stride.max(1));
    let n_q = f.q.n();
    let n_p = f.p.n();
    let node_cell = (f.q.dx() * sq as f64).powi(d as i32) * (f.p.dx() * sp as f64).powi(d as i32);
    let scale = node_cell / (2.0 * PI * hbar).powi(d as i32);
    let cutoff = 1e-14 * fmax;
    let on_stride = |g: &Grid, idx: usize, stride: usize, n: usize| {
        let ix = g.unravel(idx);
        (0..d).all(|a| ix[a] % stride == (n / 2) % stride)
    };
    let np = f.p.points();
    let mut acc = Accumulator::new(grid);
    for iq in 0..f.q.points() {
        if !on_stride(&f.q, iq, sq, n_q) {
            continue;
        }
        let q = f.q.position(iq);
        let nodes: Vec<(usize, f64)> = (0..np)
            .filter(|&ip| on_stride(&f.p, ip, sp, n_p))
            .map(|ip| (ip, f.values[iq * np + ip]))
            .filter(|(_, v)| v.abs() > cutoff)
            .collect();
        if nodes.is_empty() {
            continue;
        }
        let vecs: Vec<Field> = nodes
            .par_iter()
            .map(|(ip, _)| coherent_state(grid, hbar, &q[..d], &f.p.position(*ip)[..d], opts.convention))
            .collect();
        let weights: Vec<f64> = nodes.iter().map(|(_, v)| v * scale).collect();
        acc.add(vecs, &weights);
    }
    acc.truncate(opts.tol);
    let lam: Vec<f64> = acc.s.diagonal().iter().map(|v| v.re).collect();
    LowRankOperator::from_orbitals(grid, hbar, acc.basis, &lam).map(|a| a.with_symmetry(Symmetry::Hermitian))
}

/// Smallest eigenvalue of a hermitian operator in diagonal form, relative to
/// the largest magnitude.
pub fn relative_min_eigenvalue(a: &LowRankOperator) -> f64 {
    let diag: Vec<f64> = a.coeffs().diagonal().iter().map(|v| v.re).collect();
    let top = diag.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if top == 0.0 {
        return 0.0;
    }
    diag.iter().copied().fold(f64::INFINITY, f64::min) / top
}

/// Smooth bump `Π_a exp(1 − 1/(1 − z_a²))` supported in `|z_a| < 1`.
fn bump(z: &[f64]) -> f64 {
    let mut v = 1.0;
    for &x in z {
        if x.abs() >= 1.0 {
            return 0.0;
        }
        v *= (1.0 - 1.0 / (1.0 - x * x)).exp();
    }
    v
}

/// Fixed panel of 16 compactly supported test functions; `scale` sets the
/// center spacing and radius in phase-space units.
pub fn test_panel(d: usize, scale: f64) -> Vec<(Vec<f64>, f64)> {
    let mut out = Vec::with_capacity(16);
    if d == 1 {
        let c = [-1.5, -0.5, 0.5, 1.5];
        for &a in &c {
            for &b in &c {
                out.push((vec![a * scale, b * scale], scale));
            }
        }
    } else {
        let c = 0.75 * scale;
        for bits in 0..16usize {
            let mut center = Vec::with_capacity(2 * d);
            for k in 0..2 * d {
                center.push(if bits >> (k % 4) & 1 == 1 { c } else { -c });
            }
            out.push((center, scale));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseSpaceDistance {
    /// `max_φ |∬ (Wig[A] − f) φ|` over the fixed panel.
    pub weak: f64,
    /// `‖Wig[A] − f‖_{L²}`.
    pub l2: f64,
}

/// Distance of two distributions on the same lattice.
pub fn distribution_distance(w: &ClassicalDistribution, f: &ClassicalDistribution, scale: f64) -> Result<PhaseSpaceDistance> {
    w.same_lattice(f)?;
    let d = w.q.dim();
    let diff = ClassicalDistribution {
        q: w.q.clone(),
        p: w.p.clone(),
        values: w.values.iter().zip(&f.values).map(|(a, b)| a - b).collect(),
    };
    let mut weak: f64 = 0.0;
    for (center, r) in test_panel(d, scale) {
        let v = diff.pair(|q, p| {
            let mut z = Vec::with_capacity(2 * d);
            for a in 0..d {
                z.push((q[a] - center[a]) / r);
            }
            for a in 0..d {
                z.push((p[a] - center[d + a]) / r);
            }
            bump(&z)
        });
        weak = weak.max(v.abs());
    }
    let l2 = w.l2_distance(f)?;
    Ok(PhaseSpaceDistance { weak, l2 })
}

/// Weak-panel and `L²` distance between `Wig[A]` and `f`, evaluated on the
/// lattice of `f` (whose q lattice must be the grid of `A`).
pub fn wigner_vlasov_distance(a: &LowRankOperator, f: &ClassicalDistribution) -> Result<PhaseSpaceDistance> {
    if a.grid() != &f.q {
        return Err(Error::GridMismatch);
    }
    let w = if a.grid().dim() == 1 { wigner_on(a, &f.p)? } else { wigner(a)? };
    distribution_distance(&w, f, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_wigner_closed_form() {
        let hbar = 0.5;
        let g = Grid::new(1, 256, 24.0).unwrap();
        let phi = Field::from_fn(&g, |x| C64::new((-x[0] * x[0] / (2.0 * hbar)).exp(), 0.0));
        let a = LowRankOperator::from_orbitals(&g, hbar, vec![phi], &[1.0]).unwrap();
        let w = wigner(&a).unwrap();
        let expect = ClassicalDistribution::from_fn(w.q_grid(), w.p_grid(), |q, p| {
            2.0 * (PI * hbar).sqrt() * (-(q[0] * q[0] + p[0] * p[0]) / hbar).exp()
        })
        .unwrap();
        assert!(w.sup_distance(&expect).unwrap() < 1e-7);
        let w2 = wigner_on(&a, w.p_grid()).unwrap();
        assert!(w2.sup_distance(&expect).unwrap() < 1e-7);
    }

    #[test]
    fn wigner_marginal_is_density() {
        let hbar = 0.25;
        let g = Grid::new(1, 128, 16.0).unwrap();
        let u = Field::from_fn(&g, |x| C64::new((-(x[0] - 1.0).powi(2)).exp(), 0.3 * (-(x[0] * x[0])).exp()));
        let v = Field::from_fn(&g, |x| C64::new((-(x[0] + 0.5).powi(2)).exp(), 0.0));
        let a = LowRankOperator::from_orbitals(&g, hbar, vec![u, v], &[0.7, 0.2]).unwrap();
        let w = wigner(&a).unwrap();
        let marg = classical_density(&w);
        let rho = a.density();
        assert!(marg.l2_distance(&rho) < 1e-8 * rho.l2_norm());
        let tr = a.trace().re;
        assert!((w.mass() / a.phase_volume() - tr).abs() < 1e-8 * tr);
    }

    #[test]
    fn free_transport_closed_form() {
        let q = Grid::new(1, 256, 60.0).unwrap();
        let p = Grid::new(1, 64, 12.0).unwrap();
        let g = |x: f64| (-x * x / 2.0).exp();
        let f0 = ClassicalDistribution::from_fn(&q, &p, |q, p| g(q[0]) * g(p[0])).unwrap();
        let f = vlasov_free(&f0, 2.0);
        let expect = ClassicalDistribution::from_fn(&q, &p, |q, p| g(q[0] - 2.0 * p[0]) * g(p[0])).unwrap();
        assert!(f.sup_distance(&expect).unwrap() < 1e-8);
        assert!((f.mass() - f0.mass()).abs() < 1e-10 * f0.mass());
        assert_eq!(vlasov_free(&f0, 0.0), f0);
    }

    #[test]
    fn snapshot_round_trip() {
        let q = Grid::new(1, 16, 6.0).unwrap();
        for pn in [16, 8, 64] {
            let p = Grid::new(1, pn, 3.0).unwrap();
            let f = ClassicalDistribution::from_fn(&q, &p, |q, p| q[0] * p[0]).unwrap();
            let mut buf = Vec::new();
            f.write_snapshot(&mut buf).unwrap();
            let back = ClassicalDistribution::read_snapshot(&mut buf.as_slice()).unwrap();
            assert_eq!(back, f);
        }
    }

    #[test]
    fn single_node_quantization_is_rank_one() {
        let hbar = 0.5;
        let g = Grid::new(1, 128, 20.0).unwrap();
        let q = Grid::new(1, 16, 8.0).unwrap();
        let p = Grid::new(1, 16, 8.0).unwrap();
        let mut f = ClassicalDistribution::zeros(&q, &p);
        let (iq, ip) = (10, 6);
        f.values_mut()[iq * 16 + ip] = 1.0 / f.cell();
        let a = toeplitz_quantize(&f, &g, hbar, &ToeplitzOptions::default()).unwrap();
        assert_eq!(a.rank(), 1);
        let phi = coherent_state(&g, hbar, &[q.coord(iq)], &[p.coord(ip)], CoherentConvention::Normalized);
        let expect = LowRankOperator::from_orbitals(&g, hbar, vec![phi], &[1.0 / (2.0 * PI * hbar)]).unwrap();
        assert!(a.sub(&expect).unwrap().schatten_norm(2.0).unwrap() < 1e-10);
    }
}

