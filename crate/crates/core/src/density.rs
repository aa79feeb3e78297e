//! Finite-rank operators `A = Σ C_jk |f_j⟩⟨g_k|` on `l²(Δx^d)`.
//!
//! Schatten norms come from a reduced QR of each factor family followed by a
//! small SVD of the core matrix. All scaled norms carry the `(2πħ)^{d/r}`
//! factor.

use std::f64::consts::PI;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::ser::{Serialize, SerializeMap, Serializer};

use crate::error::{Error, Result};
use crate::grid::{
    fourier_multiplier, read_samples, read_snapshot_header, write_samples, write_snapshot_header,
    Field, Grid, Space, C64,
};

/// Largest grid accepted by [`LowRankOperator::materialize_dense`].
pub const DENSE_LIMIT: usize = 4096;

/// Relative cutoff below which singular values count as zero.
pub const SINGULAR_CUTOFF: f64 = 1e-14;

/// Relative residual below which a factor is treated as linearly dependent.
const DEPENDENCE_TOL: f64 = 1e-12;

const OPERATOR_MAGIC: &[u8; 4] = b"SCLR";
const OPERATOR_VERSION: u16 = 1;

fn czero() -> C64 {
    C64::new(0.0, 0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Symmetry {
    General,
    Hermitian,
    AntiHermitian,
}

impl Symmetry {
    fn code(self) -> u8 {
        match self {
            Symmetry::General => 0,
            Symmetry::Hermitian => 1,
            Symmetry::AntiHermitian => 2,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Symmetry::General),
            1 => Ok(Symmetry::Hermitian),
            2 => Ok(Symmetry::AntiHermitian),
            _ => Err(Error::Format(format!("bad symmetry flag {c}"))),
        }
    }

    fn flipped(self) -> Self {
        match self {
            Symmetry::Hermitian => Symmetry::AntiHermitian,
            Symmetry::AntiHermitian => Symmetry::Hermitian,
            Symmetry::General => Symmetry::General,
        }
    }

    fn times(self, s: C64) -> Self {
        let real = s.im == 0.0;
        let imag = s.re == 0.0;
        match self {
            Symmetry::General => Symmetry::General,
            _ if s == czero() => self,
            _ if real => self,
            _ if imag => self.flipped(),
            _ => Symmetry::General,
        }
    }
}

/// Multiplicative weight applied on one side of an operator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Weight {
    /// `⟨x⟩^s`
    Position(f64),
    /// `⟨ħ∇⟩^s`, the multiplier `(1 + ħ²|ξ|²)^{s/2}`
    Frequency(f64),
}

impl Weight {
    pub fn identity() -> Self {
        Weight::Position(0.0)
    }

    fn exponent(self) -> f64 {
        match self {
            Weight::Position(s) | Weight::Frequency(s) => s,
        }
    }

    /// Applies the weight to a position-space field.
    pub fn apply(self, f: &Field, hbar: f64) -> Result<Field> {
        if self.exponent() == 0.0 {
            return Ok(f.clone());
        }
        let grid = f.grid();
        match self {
            Weight::Position(s) => {
                let w = grid.sample(|x| (1.0 + x.iter().map(|v| v * v).sum::<f64>()).powf(0.5 * s));
                let mut out = f.clone();
                out.mul_pointwise(&w);
                Ok(out)
            }
            Weight::Frequency(s) => {
                let m = grid.symbol(|xi| {
                    let k2: f64 = xi.iter().map(|v| v * v).sum();
                    C64::new((1.0 + hbar * hbar * k2).powf(0.5 * s), 0.0)
                });
                fourier_multiplier(f, &m)
            }
        }
    }
}

/// Generators used in commutators.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Generator {
    /// Multiplication by `x_j`.
    Position(usize),
    /// Multiplication by `x_j / ħ`.
    ScaledPosition(usize),
    /// Spectral derivative `∂_j`.
    Gradient(usize),
}

impl Generator {
    fn axis(self) -> usize {
        match self {
            Generator::Position(j) | Generator::ScaledPosition(j) | Generator::Gradient(j) => j,
        }
    }

    /// Applies the generator (`adjoint = true` applies its adjoint).
    pub fn apply(self, f: &Field, hbar: f64, adjoint: bool) -> Result<Field> {
        let grid = f.grid();
        let j = self.axis();
        if j >= grid.dim() {
            return Err(Error::Axis { axis: j, dim: grid.dim() });
        }
        match self {
            Generator::Position(_) | Generator::ScaledPosition(_) => {
                let scale = if matches!(self, Generator::ScaledPosition(_)) { 1.0 / hbar } else { 1.0 };
                let w = grid.sample(|x| x[j] * scale);
                let mut out = f.clone();
                out.mul_pointwise(&w);
                Ok(out)
            }
            Generator::Gradient(_) => {
                let sign = if adjoint { -1.0 } else { 1.0 };
                let m = grid.symbol(|xi| C64::new(0.0, sign * xi[j]));
                fourier_multiplier(f, &m)
            }
        }
    }

    fn is_symmetric(self) -> bool {
        !matches!(self, Generator::Gradient(_))
    }
}

/// Orthonormal basis of a family of fields together with coordinates:
/// `vectors[j] = Σ_i q[i] · r[(i, j)]`.
pub struct Factorization {
    pub q: Vec<Field>,
    pub r: DMatrix<C64>,
}

/// Classical Gram–Schmidt with reorthogonalization under `l²(Δx^d)`.
/// Vectors whose residual falls below `1e-12` of their own norm are treated
/// as dependent and produce no new basis element.
pub fn orthonormalize(vectors: &[Field]) -> Factorization {
    let k = vectors.len();
    let mut q: Vec<Field> = Vec::new();
    let mut cols: Vec<Vec<C64>> = Vec::with_capacity(k);
    for v in vectors {
        let norm0 = v.l2_norm();
        let mut w = v.clone();
        let mut coeff = vec![czero(); q.len()];
        for _ in 0..2 {
            let proj: Vec<C64> = q.par_iter().map(|b| b.inner(&w)).collect();
            for (i, (b, p)) in q.iter().zip(&proj).enumerate() {
                w.axpy(-p, b);
                coeff[i] += p;
            }
        }
        let norm = w.l2_norm();
        if norm0 > 0.0 && norm > DEPENDENCE_TOL * norm0 {
            w.scale(C64::new(1.0 / norm, 0.0));
            q.push(w);
            coeff.push(C64::new(norm, 0.0));
        }
        cols.push(coeff);
    }
    let rank = q.len();
    let mut r = DMatrix::from_element(rank, k, czero());
    for (j, c) in cols.iter().enumerate() {
        for (i, v) in c.iter().enumerate() {
            r[(i, j)] = *v;
        }
    }
    Factorization { q, r }
}

/// Gram matrix `G_ij = ⟨a_i, b_j⟩`.
pub fn gram(a: &[Field], b: &[Field]) -> DMatrix<C64> {
    let mut g = DMatrix::from_element(a.len(), b.len(), czero());
    let entries: Vec<(usize, usize, C64)> = (0..a.len())
        .into_par_iter()
        .flat_map_iter(|i| (0..b.len()).map(move |j| (i, j, a[i].inner(&b[j]))))
        .collect();
    for (i, j, v) in entries {
        g[(i, j)] = v;
    }
    g
}

/// `out_i = Σ_j basis_j · m[(j, i)]`.
pub fn combine(basis: &[Field], m: &DMatrix<C64>, grid: &Grid) -> Vec<Field> {
    (0..m.ncols())
        .into_par_iter()
        .map(|i| {
            let mut out = Field::zeros(grid, Space::Position);
            for (j, b) in basis.iter().enumerate() {
                let c = m[(j, i)];
                if c != czero() {
                    out.axpy(c, b);
                }
            }
            out
        })
        .collect()
}

/// Finite-rank kernel `A(x, x′) = Σ C_jk f_j(x) ḡ_k(x′)` with `ħ` attached.
#[derive(Clone, Debug)]
pub struct LowRankOperator {
    hbar: f64,
    grid: Grid,
    left: Vec<Field>,
    right: Vec<Field>,
    coeffs: DMatrix<C64>,
    symmetry: Symmetry,
}

impl LowRankOperator {
    pub fn new(
        grid: &Grid,
        hbar: f64,
        left: Vec<Field>,
        right: Vec<Field>,
        coeffs: DMatrix<C64>,
        symmetry: Symmetry,
    ) -> Result<Self> {
        if !(hbar > 0.0 && hbar <= 1.0) {
            return Err(Error::InvalidParameter(format!("hbar must lie in (0, 1], got {hbar}")));
        }
        if coeffs.nrows() != left.len() || coeffs.ncols() != right.len() {
            return Err(Error::LengthMismatch { expected: left.len() * right.len(), got: coeffs.len() });
        }
        for f in left.iter().chain(&right) {
            if f.grid() != grid {
                return Err(Error::GridMismatch);
            }
            f.require(Space::Position)?;
        }
        if coeffs.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::NonFinite("coefficient matrix"));
        }
        Ok(Self { hbar, grid: grid.clone(), left, right, coeffs, symmetry })
    }

    pub fn zero(grid: &Grid, hbar: f64) -> Self {
        Self {
            hbar,
            grid: grid.clone(),
            left: Vec::new(),
            right: Vec::new(),
            coeffs: DMatrix::zeros(0, 0),
            symmetry: Symmetry::Hermitian,
        }
    }

    /// `Σ λ_n |u_n⟩⟨u_n|`.
    pub fn from_orbitals(grid: &Grid, hbar: f64, orbitals: Vec<Field>, weights: &[f64]) -> Result<Self> {
        if orbitals.len() != weights.len() {
            return Err(Error::LengthMismatch { expected: orbitals.len(), got: weights.len() });
        }
        let c = DMatrix::from_diagonal(&DVector::from_iterator(
            weights.len(),
            weights.iter().map(|&w| C64::new(w, 0.0)),
        ));
        Self::new(grid, hbar, orbitals.clone(), orbitals, c, Symmetry::Hermitian)
    }

    /// `c |u⟩⟨v|`.
    pub fn rank_one(grid: &Grid, hbar: f64, u: Field, v: Field, c: C64) -> Result<Self> {
        Self::new(grid, hbar, vec![u], vec![v], DMatrix::from_element(1, 1, c), Symmetry::General)
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn left(&self) -> &[Field] {
        &self.left
    }

    pub fn right(&self) -> &[Field] {
        &self.right
    }

    pub fn coeffs(&self) -> &DMatrix<C64> {
        &self.coeffs
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    pub fn is_hermitian(&self) -> bool {
        self.symmetry == Symmetry::Hermitian
    }

    pub fn with_symmetry(mut self, symmetry: Symmetry) -> Self {
        self.symmetry = symmetry;
        self
    }

    /// Number of stored factor pairs (an upper bound for the rank).
    pub fn rank(&self) -> usize {
        self.left.len().max(self.right.len())
    }

    /// `(2πħ)^d`.
    pub fn phase_volume(&self) -> f64 {
        (2.0 * PI * self.hbar).powi(self.grid.dim() as i32)
    }

    pub fn scaled(&self, s: C64) -> Self {
        let mut out = self.clone();
        out.coeffs *= s;
        out.symmetry = self.symmetry.times(s);
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let (m, n) = self.coeffs.shape();
        let (p, q) = other.coeffs.shape();
        let mut c = DMatrix::from_element(m + p, n + q, czero());
        c.view_mut((0, 0), (m, n)).copy_from(&self.coeffs);
        c.view_mut((m, n), (p, q)).copy_from(&other.coeffs);
        let symmetry = if self.symmetry == other.symmetry || other.rank() == 0 {
            self.symmetry
        } else if self.rank() == 0 {
            other.symmetry
        } else {
            Symmetry::General
        };
        Ok(Self {
            hbar: self.hbar,
            grid: self.grid.clone(),
            left: self.left.iter().chain(&other.left).cloned().collect(),
            right: self.right.iter().chain(&other.right).cloned().collect(),
            coeffs: c,
            symmetry,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scaled(C64::new(-1.0, 0.0)))
    }

    pub fn adjoint(&self) -> Self {
        Self {
            hbar: self.hbar,
            grid: self.grid.clone(),
            left: self.right.clone(),
            right: self.left.clone(),
            coeffs: self.coeffs.adjoint(),
            symmetry: self.symmetry,
        }
    }

    /// Operator product `self ∘ other`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let g = gram(&self.right, &other.left);
        let c = &self.coeffs * g * &other.coeffs;
        Ok(Self {
            hbar: self.hbar,
            grid: self.grid.clone(),
            left: self.left.clone(),
            right: other.right.clone(),
            coeffs: c,
            symmetry: Symmetry::General,
        })
    }

    /// `(Au)(x) = Σ_x′ A(x, x′) u(x′) Δx^d`.
    pub fn apply(&self, u: &Field) -> Result<Field> {
        if u.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        let proj: Vec<C64> = self.right.iter().map(|g| g.inner(u)).collect();
        let mut out = Field::zeros(&self.grid, Space::Position);
        for (j, f) in self.left.iter().enumerate() {
            let c: C64 = (0..proj.len()).map(|k| self.coeffs[(j, k)] * proj[k]).sum();
            out.axpy(c, f);
        }
        Ok(out)
    }

    /// Applies `lmap` to every left factor and `rmap` to every right factor.
    /// Conjugation `U A V*` is `map_factors(U, V)`.
    pub fn map_factors<L, R>(&self, lmap: L, rmap: R) -> Result<Self>
    where
        L: Fn(&Field) -> Result<Field> + Sync,
        R: Fn(&Field) -> Result<Field> + Sync,
    {
        let left = self.left.par_iter().map(&lmap).collect::<Result<Vec<_>>>()?;
        let right = self.right.par_iter().map(&rmap).collect::<Result<Vec<_>>>()?;
        Ok(Self { left, right, ..self.clone() })
    }

    /// Unitary conjugation `U A U*` (symmetry preserved).
    pub fn conjugate<U>(&self, u: U) -> Result<Self>
    where
        U: Fn(&Field) -> Result<Field> + Sync,
    {
        let left = self.left.par_iter().map(&u).collect::<Result<Vec<_>>>()?;
        let right = self.right.par_iter().map(&u).collect::<Result<Vec<_>>>()?;
        Ok(Self { left, right, ..self.clone() })
    }

    /// `Tr A = Σ C_jk ⟨g_k, f_j⟩`.
    pub fn trace(&self) -> C64 {
        let g = gram(&self.right, &self.left);
        let mut t = czero();
        for j in 0..self.left.len() {
            for k in 0..self.right.len() {
                t += self.coeffs[(j, k)] * g[(k, j)];
            }
        }
        t
    }

    /// Core matrix `R_F C R_G^H` with the orthonormal bases of both sides.
    fn core(&self) -> (Factorization, Factorization, DMatrix<C64>) {
        let qf = orthonormalize(&self.left);
        let qg = orthonormalize(&self.right);
        let m = &qf.r * &self.coeffs * qg.r.adjoint();
        (qf, qg, m)
    }

    /// Singular values in descending order, with values below
    /// `1e-14 × largest` set to zero.
    pub fn singular_values(&self) -> Vec<f64> {
        let (_, _, m) = self.core();
        if m.nrows() == 0 || m.ncols() == 0 {
            return Vec::new();
        }
        let mut s: Vec<f64> = flush_tiny(&m).singular_values().iter().copied().collect();
        s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let top = s[0];
        for v in &mut s {
            if *v < SINGULAR_CUTOFF * top {
                *v = 0.0;
            }
        }
        s
    }

    /// Scaled Schatten norm `(2πħ)^{d/r} ‖A‖_{S^r}`; `r = ∞` is the operator norm.
    pub fn schatten_norm(&self, r: f64) -> Result<f64> {
        if !(r >= 1.0) {
            return Err(Error::SchattenExponent(r));
        }
        let s = self.singular_values();
        schatten_from_singular(&s, r, self.phase_volume())
    }

    pub fn operator_norm(&self) -> f64 {
        self.singular_values().first().copied().unwrap_or(0.0)
    }

    /// Density function `(2πħ)^d Σ C_jk f_j(x) ḡ_k(x)`.
    pub fn density(&self) -> Field {
        let n = self.grid.points();
        let scale = self.phase_volume();
        let hermitian = self.is_hermitian();
        let mut out = vec![czero(); n];
        // Accumulate per left factor; sequential order keeps results bitwise
        // reproducible regardless of thread count.
        let rows: Vec<Vec<C64>> = self
            .left
            .par_iter()
            .enumerate()
            .map(|(j, f)| {
                let mut acc = vec![czero(); n];
                for (k, g) in self.right.iter().enumerate() {
                    let c = self.coeffs[(j, k)];
                    if c == czero() {
                        continue;
                    }
                    for ((a, fv), gv) in acc.iter_mut().zip(f.values()).zip(g.values()) {
                        *a += c * fv * gv.conj();
                    }
                }
                acc
            })
            .collect();
        for row in rows {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        for v in &mut out {
            *v *= scale;
            if hermitian {
                v.im = 0.0;
            }
        }
        Field::from_raw(&self.grid, out, Space::Position)
    }

    /// `W_l A W_r` with real weights (the right weight is self-adjoint).
    pub fn apply_weights(&self, left: Weight, right: Weight) -> Result<Self> {
        let hbar = self.hbar;
        let mut out = self.map_factors(|f| left.apply(f, hbar), |g| right.apply(g, hbar))?;
        if left != right {
            out.symmetry = Symmetry::General;
        }
        Ok(out)
    }

    /// `[G, A] = Σ C (|G f⟩⟨g| − |f⟩⟨G* g|)`.
    pub fn commutator(&self, generator: Generator) -> Result<Self> {
        let hbar = self.hbar;
        let gf = self.left.par_iter().map(|f| generator.apply(f, hbar, false)).collect::<Result<Vec<_>>>()?;
        let gg = self.right.par_iter().map(|g| generator.apply(g, hbar, true)).collect::<Result<Vec<_>>>()?;
        let (m, n) = self.coeffs.shape();
        let mut c = DMatrix::from_element(2 * m, 2 * n, czero());
        c.view_mut((0, 0), (m, n)).copy_from(&self.coeffs);
        c.view_mut((m, n), (m, n)).copy_from(&(-&self.coeffs));
        let symmetry = if generator.is_symmetric() { self.symmetry.flipped() } else { self.symmetry };
        if self.rank() == 0 {
            return Ok(self.clone());
        }
        Ok(Self {
            hbar,
            grid: self.grid.clone(),
            left: gf.into_iter().chain(self.left.iter().cloned()).collect(),
            right: self.right.iter().cloned().chain(gg).collect(),
            coeffs: c,
            symmetry,
        })
    }

    /// Lowest-rank approximation with `‖A − result‖_{S²_ħ} ≤ tol`.
    pub fn recompress(&self, tol: f64) -> Result<Self> {
        if !(tol >= 0.0) {
            return Err(Error::InvalidParameter(format!("tolerance must be nonnegative, got {tol}")));
        }
        let budget = tol / self.phase_volume().sqrt();
        match self.symmetry {
            Symmetry::Hermitian | Symmetry::AntiHermitian => self.recompress_normal(budget),
            Symmetry::General => self.recompress_general(budget),
        }
    }

    fn recompress_general(&self, budget: f64) -> Result<Self> {
        let (qf, qg, m) = self.core();
        if m.nrows() == 0 || m.ncols() == 0 {
            return Ok(Self::zero(&self.grid, self.hbar).with_symmetry(self.symmetry));
        }
        let svd = flush_tiny(&m).svd(true, true);
        let u = svd.u.unwrap();
        let vt = svd.v_t.unwrap();
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].partial_cmp(&svd.singular_values[a]).unwrap());
        let s: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
        let keep = kept_count(&s, budget);
        let mut ul = DMatrix::from_element(u.nrows(), keep, czero());
        let mut vr = DMatrix::from_element(vt.ncols(), keep, czero());
        for (c, &i) in order.iter().take(keep).enumerate() {
            ul.set_column(c, &u.column(i));
            vr.set_column(c, &vt.row(i).adjoint());
        }
        let left = combine(&qf.q, &ul, &self.grid);
        let right = combine(&qg.q, &vr, &self.grid);
        let c = DMatrix::from_diagonal(&DVector::from_iterator(keep, s.iter().take(keep).map(|&v| C64::new(v, 0.0))));
        Ok(Self { hbar: self.hbar, grid: self.grid.clone(), left, right, coeffs: c, symmetry: self.symmetry })
    }

    fn recompress_normal(&self, budget: f64) -> Result<Self> {
        let both: Vec<Field> = self.left.iter().chain(&self.right).cloned().collect();
        let basis = orthonormalize(&both).q;
        if basis.is_empty() {
            return Ok(Self::zero(&self.grid, self.hbar).with_symmetry(self.symmetry));
        }
        let pf = gram(&basis, &self.left);
        let pg = gram(&basis, &self.right);
        let mut m = &pf * &self.coeffs * pg.adjoint();
        let anti = self.symmetry == Symmetry::AntiHermitian;
        if anti {
            m *= C64::new(0.0, 1.0);
        }
        let eig = hermitian_eigen(&m);
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].abs().partial_cmp(&eig.eigenvalues[a].abs()).unwrap());
        let mags: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].abs()).collect();
        let keep = kept_count(&mags, budget);
        let mut w = DMatrix::from_element(basis.len(), keep, czero());
        let mut lam = Vec::with_capacity(keep);
        for (c, &i) in order.iter().take(keep).enumerate() {
            w.set_column(c, &eig.eigenvectors.column(i));
            let l = eig.eigenvalues[i];
            lam.push(if anti { C64::new(0.0, -l) } else { C64::new(l, 0.0) });
        }
        let vecs = combine(&basis, &w, &self.grid);
        let c = DMatrix::from_diagonal(&DVector::from_vec(lam));
        Ok(Self {
            hbar: self.hbar,
            grid: self.grid.clone(),
            left: vecs.clone(),
            right: vecs,
            coeffs: c,
            symmetry: self.symmetry,
        })
    }

    /// Orthonormal eigenpairs of a hermitian operator, largest `|λ|` first.
    pub fn eigen_decomposition(&self, tol: f64) -> Result<(Vec<Field>, Vec<f64>)> {
        if !self.is_hermitian() {
            return Err(Error::NotHermitian);
        }
        let c = self.recompress(tol)?;
        let lam = c.coeffs.diagonal().iter().map(|v| v.re).collect();
        Ok((c.left, lam))
    }

    /// `‖A − A*‖_{S²_ħ}`.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut g = self.sub(&self.adjoint()).unwrap();
        g.symmetry = Symmetry::General;
        g.schatten_norm(2.0).unwrap()
    }

    /// Dense kernel `K_ij = A(x_i, x_j)`; the operator matrix on
    /// `l²(Δx^d)` is `Δx^d K`.
    pub fn materialize_dense(&self) -> Result<DMatrix<C64>> {
        let n = self.grid.points();
        if n > DENSE_LIMIT {
            return Err(Error::DenseTooLarge(n));
        }
        let f = DMatrix::from_fn(n, self.left.len(), |i, j| self.left[j].values()[i]);
        let g = DMatrix::from_fn(n, self.right.len(), |i, j| self.right[j].values()[i]);
        Ok(f * &self.coeffs * g.adjoint())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let mut h = Vec::with_capacity(32);
        h.extend_from_slice(OPERATOR_MAGIC);
        h.extend_from_slice(&OPERATOR_VERSION.to_le_bytes());
        h.push(self.symmetry.code());
        h.push(0);
        h.extend_from_slice(&self.hbar.to_le_bytes());
        h.extend_from_slice(&(self.coeffs.nrows() as u32).to_le_bytes());
        h.extend_from_slice(&(self.coeffs.ncols() as u32).to_le_bytes());
        w.write_all(&h)?;
        write_snapshot_header(w, &self.grid, Space::Position, self.grid.dim(), 0.0, 0)?;
        let c: Vec<C64> = (0..self.coeffs.nrows())
            .flat_map(|i| (0..self.coeffs.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| self.coeffs[(i, j)])
            .collect();
        write_samples(w, &c)?;
        for f in self.left.iter().chain(&self.right) {
            f.write_snapshot(w)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut h = [0u8; 24];
        r.read_exact(&mut h)?;
        if &h[0..4] != OPERATOR_MAGIC {
            return Err(Error::Format("bad operator magic".into()));
        }
        let version = u16::from_le_bytes([h[4], h[5]]);
        if version != OPERATOR_VERSION {
            return Err(Error::Format(format!("unsupported operator version {version}")));
        }
        let symmetry = Symmetry::from_code(h[6])?;
        let hbar = f64::from_le_bytes(h[8..16].try_into().unwrap());
        let rows = u32::from_le_bytes(h[16..20].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(h[20..24].try_into().unwrap()) as usize;
        let gh = read_snapshot_header(r)?;
        let grid = Grid::new(gh.dim, gh.n, gh.len)?;
        let c = read_samples(r, rows * cols)?;
        let coeffs = DMatrix::from_row_slice(rows, cols, &c);
        let mut read_fields = |count: usize| -> Result<Vec<Field>> {
            (0..count)
                .map(|_| {
                    let f = Field::read_snapshot(r)?;
                    if f.grid() != &grid {
                        return Err(Error::GridMismatch);
                    }
                    Ok(f)
                })
                .collect()
        };
        let left = read_fields(rows)?;
        let right = read_fields(cols)?;
        Self::new(&grid, hbar, left, right, coeffs, symmetry)
    }
}

fn kept_count(desc: &[f64], budget: f64) -> usize {
    let top = desc.first().copied().unwrap_or(0.0);
    let mut keep = desc.iter().take_while(|&&s| s > SINGULAR_CUTOFF * top).count();
    let mut dropped = 0.0;
    while keep > 0 {
        let next = dropped + desc[keep - 1] * desc[keep - 1];
        if next.sqrt() > budget {
            break;
        }
        dropped = next;
        keep -= 1;
    }
    keep
}

/// Eigendecomposition of the hermitian part of `m`. Entries below `1e-30`
/// of the largest are flushed first: the tridiagonal QR in nalgebra
/// returns NaN when tiny entries underflow in its rotations.
pub fn hermitian_eigen(m: &DMatrix<C64>) -> nalgebra::SymmetricEigen<C64, nalgebra::Dyn> {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    flush_tiny(&h).symmetric_eigen()
}

fn flush_tiny(m: &DMatrix<C64>) -> DMatrix<C64> {
    let top = m.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let floor = 1e-30 * top;
    m.map(|v| if v.norm() < floor { czero() } else { v })
}

/// Scaled Schatten norm from singular values and the phase volume `(2πħ)^d`.
pub fn schatten_from_singular(s: &[f64], r: f64, phase_volume: f64) -> Result<f64> {
    if !(r >= 1.0) {
        return Err(Error::SchattenExponent(r));
    }
    if r.is_infinite() {
        return Ok(s.iter().copied().fold(0.0, f64::max));
    }
    let top = s.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return Ok(0.0);
    }
    // Scale by the largest value to keep large exponents in range.
    let sum: f64 = s.iter().map(|v| (v / top).powf(r)).sum();
    let val = phase_volume.powf(1.0 / r) * top * sum.powf(1.0 / r);
    if !val.is_finite() {
        return Err(Error::NonFinite("Schatten norm"));
    }
    Ok(val)
}

/// Ordered collection of named nonnegative norm values.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NormLedger {
    entries: Vec<(String, f64)>,
}

impl NormLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: f64) -> Result<()> {
        if !(value.is_finite() && value >= 0.0) {
            return Err(Error::NonFinite("ledger entry"));
        }
        self.entries.push((name.into(), value));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v).sum()
    }
}

impl Serialize for NormLedger {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.entries.len()))?;
        for (k, v) in &self.entries {
            m.serialize_entry(k, v)?;
        }
        m.end()
    }
}

/// Names of the terms reported by [`x_sigma_norm`], in order.
pub const X_SIGMA_TERMS: [&str; 13] = [
    "s1",
    "b_freq",
    "b_pos",
    "s1_grad",
    "s1_xh",
    "s2_freq_grad",
    "s2_pos_xh",
    "b_freq_grad",
    "b_pos_xh",
    "s2_freq_grad_grad",
    "s2_pos_xh_xh",
    "s2_freq_grad_xh",
    "s2_pos_grad_xh",
];

/// Every term of the `X^σ_ħ` norm. Single commutators are summed over the
/// coordinate index, double commutators over ordered coordinate pairs.
/// The ledger total is the norm.
pub fn x_sigma_norm(a: &LowRankOperator, sigma: f64) -> Result<NormLedger> {
    let d = a.grid().dim();
    let fq = |s: f64| Weight::Frequency(s);
    let ps = |s: f64| Weight::Position(s);
    let grads: Vec<LowRankOperator> =
        (0..d).map(|j| a.commutator(Generator::Gradient(j))).collect::<Result<_>>()?;
    let xhs: Vec<LowRankOperator> =
        (0..d).map(|j| a.commutator(Generator::ScaledPosition(j))).collect::<Result<_>>()?;

    let weighted = |ops: &[LowRankOperator], w: Weight, r: f64| -> Result<f64> {
        let mut acc = 0.0;
        for op in ops {
            acc += op.apply_weights(w, w)?.schatten_norm(r)?;
        }
        Ok(acc)
    };
    let double = |inner: &[LowRankOperator], outer: fn(usize) -> Generator, w: Weight| -> Result<f64> {
        let mut acc = 0.0;
        for op in inner {
            for j in 0..d {
                acc += op.commutator(outer(j))?.apply_weights(w, w)?.schatten_norm(2.0)?;
            }
        }
        Ok(acc)
    };

    let values = [
        a.schatten_norm(1.0)?,
        a.apply_weights(fq(sigma), fq(sigma))?.operator_norm(),
        a.apply_weights(ps(sigma), ps(sigma))?.operator_norm(),
        weighted(&grads, Weight::identity(), 1.0)?,
        weighted(&xhs, Weight::identity(), 1.0)?,
        weighted(&grads, fq(sigma), 2.0)?,
        weighted(&xhs, ps(sigma), 2.0)?,
        weighted(&grads, fq(sigma), f64::INFINITY)?,
        weighted(&xhs, ps(sigma), f64::INFINITY)?,
        double(&grads, Generator::Gradient, fq(0.5 * sigma))?,
        double(&xhs, Generator::ScaledPosition, ps(0.5 * sigma))?,
        double(&xhs, Generator::Gradient, fq(0.5 * sigma))?,
        double(&xhs, Generator::Gradient, ps(0.5 * sigma))?,
    ];
    let mut ledger = NormLedger::new();
    for (name, v) in X_SIGMA_TERMS.iter().zip(values) {
        ledger.push(*name, v)?;
    }
    Ok(ledger)
}
