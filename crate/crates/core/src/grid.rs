//! Periodic spectral grids and sampled fields.
//!
//! A [`Grid`] is the box `[-L/2, L/2)^d` sampled at `n` points per axis,
//! `x_j = -L/2 + j Δx`. Frequency-space samples are stored in FFT order,
//! storage index `i` carrying the signed mode `k = i` for `i < n/2` and
//! `k = i - n` otherwise, with `ξ_k = 2πk/L`.
//!
//! The transforms follow the symmetric convention
//! `f̂(ξ) = (2π)^{-d/2} ∫ e^{-ix·ξ} f(x) dx`, realized as the unnormalized DFT
//! scaled by `Δx^d / (2π)^{d/2}` (forward) and `Δξ^d / (2π)^{d/2}` (inverse).

use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Default cap on `n^d`.
pub const DEFAULT_POINT_BUDGET: usize = 1 << 22;

const SNAPSHOT_MAGIC: &[u8; 4] = b"SCHL";
const SNAPSHOT_VERSION: u16 = 1;
pub(crate) const SNAPSHOT_HEADER_LEN: usize = 32;

struct GridInner {
    dim: usize,
    n: usize,
    len: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Periodic lattice in `d` dimensions. Cheap to clone and safe to share.
#[derive(Clone)]
pub struct Grid {
    inner: Arc<GridInner>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("dim", &self.dim())
            .field("n", &self.n())
            .field("len", &self.len())
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.dim() == other.dim()
                && self.n() == other.n()
                && self.len().to_bits() == other.len().to_bits())
    }
}

impl Grid {
    pub fn new(dim: usize, n: usize, len: f64) -> Result<Self> {
        Self::with_budget(dim, n, len, DEFAULT_POINT_BUDGET)
    }

    pub fn with_budget(dim: usize, n: usize, len: f64, budget: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::Dimension(dim));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::NonPowerOfTwo(n));
        }
        if !(len.is_finite() && len > 0.0) {
            return Err(Error::BoxLength(len));
        }
        let points = n
            .checked_pow(dim as u32)
            .ok_or(Error::MemoryBudget { points: usize::MAX, budget })?;
        if points > budget {
            return Err(Error::MemoryBudget { points, budget });
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        Ok(Self {
            inner: Arc::new(GridInner { dim, n, len, forward, inverse }),
        })
    }

    pub fn dim(&self) -> usize {
        self.inner.dim
    }

    pub fn n(&self) -> usize {
        self.inner.n
    }

    pub fn len(&self) -> f64 {
        self.inner.len
    }

    pub fn points(&self) -> usize {
        self.n().pow(self.dim() as u32)
    }

    pub fn dx(&self) -> f64 {
        self.len() / self.n() as f64
    }

    pub fn dxi(&self) -> f64 {
        2.0 * PI / self.len()
    }

    /// Quadrature weight `Δx^d`.
    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.dim() as i32)
    }

    /// Quadrature weight `Δξ^d`.
    pub fn freq_volume(&self) -> f64 {
        self.dxi().powi(self.dim() as i32)
    }

    pub fn coord(&self, i: usize) -> f64 {
        -0.5 * self.len() + i as f64 * self.dx()
    }

    /// Signed mode number of storage index `i`.
    pub fn mode(&self, i: usize) -> i64 {
        let n = self.n();
        if i < n / 2 {
            i as i64
        } else {
            i as i64 - n as i64
        }
    }

    pub fn freq(&self, i: usize) -> f64 {
        self.mode(i) as f64 * self.dxi()
    }

    pub fn max_freq(&self) -> f64 {
        PI * self.n() as f64 / self.len()
    }

    /// Per-axis indices of flat index `idx` (row-major, axis 0 slowest).
    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let n = self.n();
        let mut out = [0usize; 3];
        let mut rem = idx;
        for a in (0..self.dim()).rev() {
            out[a] = rem % n;
            rem /= n;
        }
        out
    }

    pub fn position(&self, idx: usize) -> [f64; 3] {
        let ix = self.unravel(idx);
        let mut x = [0.0; 3];
        for a in 0..self.dim() {
            x[a] = self.coord(ix[a]);
        }
        x
    }

    pub fn frequency(&self, idx: usize) -> [f64; 3] {
        let ix = self.unravel(idx);
        let mut xi = [0.0; 3];
        for a in 0..self.dim() {
            xi[a] = self.freq(ix[a]);
        }
        xi
    }

    /// Samples a frequency symbol on the lattice (FFT order).
    pub fn symbol(&self, f: impl Fn(&[f64]) -> C64) -> Vec<C64> {
        let d = self.dim();
        (0..self.points())
            .map(|i| f(&self.frequency(i)[..d]))
            .collect()
    }

    /// Samples a real position-space function.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        let d = self.dim();
        (0..self.points()).map(|i| f(&self.position(i)[..d])).collect()
    }

    /// True when every index sits on the outermost layer of the box.
    pub fn is_shell(&self, idx: usize) -> bool {
        let ix = self.unravel(idx);
        let n = self.n();
        ix[..self.dim()].iter().any(|&i| i == 0 || i == n - 1)
    }

    /// Parity `(-1)^{Σ k_a}` of the frequency index.
    fn parity(&self, idx: usize) -> f64 {
        let ix = self.unravel(idx);
        let s: usize = ix[..self.dim()].iter().sum();
        if s % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Unnormalized multi-dimensional DFT in place.
    pub(crate) fn dft(&self, data: &mut [C64], forward: bool) {
        let n = self.n();
        let d = self.dim();
        debug_assert_eq!(data.len(), self.points());
        let plan = if forward { &self.inner.forward } else { &self.inner.inverse };
        let mut scratch = vec![C64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        if d == 1 {
            plan.process_with_scratch(data, &mut scratch);
            return;
        }
        // Last axis is contiguous.
        for chunk in data.chunks_exact_mut(n) {
            plan.process_with_scratch(chunk, &mut scratch);
        }
        let mut line = vec![C64::new(0.0, 0.0); n];
        for axis in 0..d - 1 {
            let stride = n.pow((d - 1 - axis) as u32);
            let block = stride * n;
            for start in (0..data.len()).step_by(block) {
                for off in 0..stride {
                    let base = start + off;
                    for (j, v) in line.iter_mut().enumerate() {
                        *v = data[base + j * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (j, v) in line.iter().enumerate() {
                        data[base + j * stride] = *v;
                    }
                }
            }
        }
    }
}

/// Which representation a [`Field`] holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Space {
    Position,
    Frequency,
}

impl Space {
    fn name(self) -> &'static str {
        match self {
            Space::Position => "position",
            Space::Frequency => "frequency",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Complex samples on a [`Grid`].
#[derive(Clone, Debug)]
pub struct Field {
    grid: Grid,
    values: Vec<C64>,
    space: Space,
}

impl Field {
    pub fn zeros(grid: &Grid, space: Space) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![C64::new(0.0, 0.0); grid.points()],
            space,
        }
    }

    pub fn from_values(grid: &Grid, values: Vec<C64>, space: Space) -> Result<Self> {
        if values.len() != grid.points() {
            return Err(Error::LengthMismatch { expected: grid.points(), got: values.len() });
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NonFinite("field samples"));
        }
        Ok(Self { grid: grid.clone(), values, space })
    }

    pub(crate) fn from_raw(grid: &Grid, values: Vec<C64>, space: Space) -> Self {
        debug_assert_eq!(values.len(), grid.points());
        Self { grid: grid.clone(), values, space }
    }

    pub fn from_real(grid: &Grid, values: &[f64]) -> Result<Self> {
        Self::from_values(grid, values.iter().map(|&v| C64::new(v, 0.0)).collect(), Space::Position)
    }

    /// Samples `f` at the position lattice.
    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> C64) -> Self {
        let d = grid.dim();
        let values = (0..grid.points()).map(|i| f(&grid.position(i)[..d])).collect();
        Self { grid: grid.clone(), values, space: Space::Position }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub(crate) fn require(&self, space: Space) -> Result<()> {
        if self.space != space {
            return Err(Error::SpaceMismatch { expected: space.name() });
        }
        Ok(())
    }

    pub(crate) fn same_grid(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    fn weight(&self) -> f64 {
        match self.space {
            Space::Position => self.grid.cell_volume(),
            Space::Frequency => self.grid.freq_volume(),
        }
    }

    /// `l²` norm with the lattice quadrature weight of the current space.
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.weight()).sqrt()
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return self.sup_norm();
        }
        (self.values.iter().map(|v| v.norm().powf(p)).sum::<f64>() * self.weight()).powf(1.0 / p)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn integral(&self) -> C64 {
        self.values.iter().sum::<C64>() * self.weight()
    }

    /// `⟨self, other⟩ = Σ conj(self)·other·w`.
    pub fn inner(&self, other: &Field) -> C64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.conj() * b)
            .sum::<C64>()
            * self.weight()
    }

    pub fn scale(&mut self, s: C64) {
        for v in &mut self.values {
            *v *= s;
        }
    }

    pub fn scaled(mut self, s: C64) -> Self {
        self.scale(s);
        self
    }

    /// `self += s·other`.
    pub fn axpy(&mut self, s: C64, other: &Field) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += s * b;
        }
    }

    pub fn mul_pointwise(&mut self, m: &[f64]) {
        for (a, b) in self.values.iter_mut().zip(m) {
            *a *= *b;
        }
    }

    pub fn mul_pointwise_complex(&mut self, m: &[C64]) {
        for (a, b) in self.values.iter_mut().zip(m) {
            *a *= *b;
        }
    }

    pub fn conj(&self) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v.conj()).collect(),
            space: self.space,
        }
    }

    /// `‖self − other‖` in the current space's `l²`.
    pub fn l2_distance(&self, other: &Field) -> f64 {
        (self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            * self.weight())
        .sqrt()
    }

    /// Fraction of `∫|f|` (or of `∫ f` for densities) carried by the outermost
    /// layer of grid points.
    pub fn shell_fraction(&self) -> f64 {
        let mut total = 0.0;
        let mut shell = 0.0;
        for (i, v) in self.values.iter().enumerate() {
            let m = v.norm();
            total += m;
            if self.grid.is_shell(i) {
                shell += m;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            shell / total
        }
    }

    pub fn write_snapshot(&self, w: &mut impl Write) -> Result<()> {
        write_snapshot_header(w, &self.grid, self.space, self.grid.dim(), 0.0, 0)?;
        write_samples(w, &self.values)
    }

    pub fn read_snapshot(r: &mut impl Read) -> Result<Field> {
        let header = read_snapshot_header(r)?;
        let grid = Grid::new(header.dim, header.n, header.len)?;
        let values = read_samples(r, grid.points())?;
        Field::from_values(&grid, values, header.space)
    }
}

pub(crate) struct SnapshotHeader {
    pub dim: usize,
    pub n: usize,
    pub len: f64,
    pub space: Space,
    pub aux: f64,
    /// Spare byte; phase-space snapshots keep `log₂` of the p point count
    /// here, zero meaning the same count as q.
    pub extra: u8,
}

/// 32-byte header: magic, version u16, d u16, n u32, L f64, space u8, a
/// spare byte, two zero bytes, and an auxiliary f64 (zero for plain fields).
pub(crate) fn write_snapshot_header(
    w: &mut impl Write,
    grid: &Grid,
    space: Space,
    dim: usize,
    aux: f64,
    extra: u8,
) -> Result<()> {
    let mut h = [0u8; SNAPSHOT_HEADER_LEN];
    h[0..4].copy_from_slice(SNAPSHOT_MAGIC);
    h[4..6].copy_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    h[6..8].copy_from_slice(&(dim as u16).to_le_bytes());
    h[8..12].copy_from_slice(&(grid.n() as u32).to_le_bytes());
    h[12..20].copy_from_slice(&grid.len().to_le_bytes());
    h[20] = match space {
        Space::Position => 0,
        Space::Frequency => 1,
    };
    h[21] = extra;
    h[24..32].copy_from_slice(&aux.to_le_bytes());
    w.write_all(&h)?;
    Ok(())
}

pub(crate) fn read_snapshot_header(r: &mut impl Read) -> Result<SnapshotHeader> {
    let mut h = [0u8; SNAPSHOT_HEADER_LEN];
    r.read_exact(&mut h)?;
    if &h[0..4] != SNAPSHOT_MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u16::from_le_bytes([h[4], h[5]]);
    if version != SNAPSHOT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let dim = u16::from_le_bytes([h[6], h[7]]) as usize;
    let n = u32::from_le_bytes(h[8..12].try_into().unwrap()) as usize;
    let len = f64::from_le_bytes(h[12..20].try_into().unwrap());
    let space = match h[20] {
        0 => Space::Position,
        1 => Space::Frequency,
        s => return Err(Error::Format(format!("bad space flag {s}"))),
    };
    let aux = f64::from_le_bytes(h[24..32].try_into().unwrap());
    Ok(SnapshotHeader { dim, n, len, space, aux, extra: h[21] })
}

pub(crate) fn write_samples(w: &mut impl Write, values: &[C64]) -> Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 16);
    for v in values {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub(crate) fn read_samples(r: &mut impl Read, count: usize) -> Result<Vec<C64>> {
    let mut buf = vec![0u8; count * 16];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(16)
        .map(|c| {
            C64::new(
                f64::from_le_bytes(c[0..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..16].try_into().unwrap()),
            )
        })
        .collect())
}

/// Normalized Fourier transform in the symmetric `(2π)^{-d/2}` convention.
pub fn fourier_transform(f: &Field, direction: Direction) -> Result<Field> {
    let grid = f.grid();
    let d = grid.dim() as i32;
    let mut values = f.values.clone();
    match direction {
        Direction::Forward => {
            f.require(Space::Position)?;
            grid.dft(&mut values, true);
            let s = (grid.dx() / (2.0 * PI).sqrt()).powi(d);
            for (i, v) in values.iter_mut().enumerate() {
                *v *= s * grid.parity(i);
            }
            Ok(Field::from_raw(grid, values, Space::Frequency))
        }
        Direction::Inverse => {
            f.require(Space::Frequency)?;
            let s = (grid.dxi() / (2.0 * PI).sqrt()).powi(d);
            for (i, v) in values.iter_mut().enumerate() {
                *v *= s * grid.parity(i);
            }
            grid.dft(&mut values, false);
            Ok(Field::from_raw(grid, values, Space::Position))
        }
    }
}

/// Applies the Fourier multiplier with symbol samples `m` (FFT order).
pub fn fourier_multiplier(f: &Field, m: &[C64]) -> Result<Field> {
    f.require(Space::Position)?;
    let grid = f.grid();
    if m.len() != grid.points() {
        return Err(Error::LengthMismatch { expected: grid.points(), got: m.len() });
    }
    if m.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(Error::NonFinite("multiplier symbol"));
    }
    let mut values = f.values.clone();
    apply_multiplier_in_place(grid, &mut values, m);
    Ok(Field::from_raw(grid, values, Space::Position))
}

pub(crate) fn apply_multiplier_in_place(grid: &Grid, values: &mut [C64], m: &[C64]) {
    grid.dft(values, true);
    let inv = 1.0 / grid.points() as f64;
    for (v, s) in values.iter_mut().zip(m) {
        *v *= s * inv;
    }
    grid.dft(values, false);
}

/// Spectral derivative `∂_axis f`.
pub fn derivative(f: &Field, axis: usize) -> Result<Field> {
    let grid = f.grid();
    if axis >= grid.dim() {
        return Err(Error::Axis { axis, dim: grid.dim() });
    }
    let m = grid.symbol(|xi| C64::new(0.0, xi[axis]));
    fourier_multiplier(f, &m)
}

/// Periodic convolution `(w ∗ ρ)(x) = ∫ w(x − y) ρ(y) dy` with `w` sampled as
/// a function of displacement on the centered lattice.
pub fn convolve(w: &Field, rho: &Field) -> Result<Field> {
    w.same_grid(rho)?;
    w.require(Space::Position)?;
    rho.require(Space::Position)?;
    let grid = w.grid();
    let mut wh = w.values.clone();
    grid.dft(&mut wh, true);
    Ok(convolve_with_spectrum(grid, &wh, rho))
}

/// Convolution against a precomputed unnormalized DFT of the kernel.
pub(crate) fn convolve_with_spectrum(grid: &Grid, kernel_dft: &[C64], rho: &Field) -> Field {
    let mut values = rho.values.clone();
    grid.dft(&mut values, true);
    let s = grid.cell_volume() / grid.points() as f64;
    for (i, (v, k)) in values.iter_mut().zip(kernel_dft).enumerate() {
        *v *= k * (s * grid.parity(i));
    }
    grid.dft(&mut values, false);
    Field::from_raw(grid, values, Space::Position)
}

/// Normalized trigonometric coefficients `c_k = DFT(f)_k / N`.
fn trig_coefficients(f: &Field) -> Vec<C64> {
    let mut c = f.values.clone();
    f.grid.dft(&mut c, true);
    let inv = 1.0 / f.grid.points() as f64;
    for v in &mut c {
        *v *= inv;
    }
    c
}

/// Per-axis basis values `e^{iξ_k (y − x0)}` for one coordinate, with the
/// Nyquist mode replaced by its cosine so real data interpolate to real values.
fn axis_basis(grid: &Grid, y: f64) -> Vec<C64> {
    let n = grid.n();
    let x0 = -0.5 * grid.len();
    let theta = grid.dxi() * (y - x0);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        if i == n / 2 {
            out.push(C64::new((theta * (n / 2) as f64).cos(), 0.0));
        } else {
            out.push(C64::from_polar(1.0, theta * grid.mode(i) as f64));
        }
    }
    out
}

/// Evaluates the trigonometric interpolant of `f` at arbitrary points. Points
/// with some `|y_a| > L/2` are answered by `far_field`.
pub fn interpolate(
    f: &Field,
    points: &[[f64; 3]],
    far_field: &dyn Fn(&[f64]) -> C64,
) -> Result<Vec<C64>> {
    f.require(Space::Position)?;
    let grid = f.grid();
    let d = grid.dim();
    let n = grid.n();
    let half = 0.5 * grid.len();
    let c = trig_coefficients(f);
    let mut out = Vec::with_capacity(points.len());
    for p in points {
        if p[..d].iter().any(|y| y.abs() > half) {
            out.push(far_field(&p[..d]));
            continue;
        }
        let bases: Vec<Vec<C64>> = (0..d).map(|a| axis_basis(grid, p[a])).collect();
        let v = match d {
            1 => c.iter().zip(&bases[0]).map(|(a, b)| a * b).sum(),
            2 => {
                let mut acc = C64::new(0.0, 0.0);
                for i in 0..n {
                    let row: C64 = c[i * n..(i + 1) * n].iter().zip(&bases[1]).map(|(a, b)| a * b).sum();
                    acc += row * bases[0][i];
                }
                acc
            }
            _ => {
                let mut acc = C64::new(0.0, 0.0);
                for i in 0..n {
                    let mut plane = C64::new(0.0, 0.0);
                    for j in 0..n {
                        let off = (i * n + j) * n;
                        let row: C64 = c[off..off + n].iter().zip(&bases[2]).map(|(a, b)| a * b).sum();
                        plane += row * bases[1][j];
                    }
                    acc += plane * bases[0][i];
                }
                acc
            }
        };
        out.push(v);
    }
    Ok(out)
}

/// Evaluates the trigonometric interpolant of `f` on the scaled lattice
/// `y = spacing · k`, one point per frequency-lattice index `k` (FFT order).
/// Uses a chirp-z transform per axis, so the cost is `O(N log N)`.
pub fn interpolate_lattice(
    f: &Field,
    spacing: f64,
    far_field: &dyn Fn(&[f64]) -> C64,
) -> Result<Field> {
    f.require(Space::Position)?;
    let grid = f.grid();
    let d = grid.dim();
    let n = grid.n();
    let half = 0.5 * grid.len();
    let x0 = -half;
    let gamma = grid.dxi();
    let alpha = gamma * spacing;
    let c = trig_coefficients(f);

    // Coefficient lines indexed by signed mode -n/2..=n/2 (Nyquist split).
    let chirp = ChirpZ::new(n + 1, n, alpha, -(n as i64) / 2, -(n as i64) / 2);
    let mut data = c;
    for axis in 0..d {
        let stride = n.pow((d - 1 - axis) as u32);
        let block = stride * n;
        let mut input = vec![C64::new(0.0, 0.0); n + 1];
        for start in (0..data.len()).step_by(block) {
            for off in 0..stride {
                let base = start + off;
                for (s, slot) in input.iter_mut().enumerate() {
                    let k = s as i64 - (n as i64) / 2;
                    let idx = if k == (n as i64) / 2 { n / 2 } else { k.rem_euclid(n as i64) as usize };
                    let mut v = data[base + idx * stride];
                    if k.unsigned_abs() as usize == n / 2 {
                        v *= 0.5;
                    }
                    *slot = v * C64::from_polar(1.0, -gamma * k as f64 * x0);
                }
                let out = chirp.apply(&input);
                for (s, v) in out.iter().enumerate() {
                    let m = s as i64 - (n as i64) / 2;
                    let idx = m.rem_euclid(n as i64) as usize;
                    data[base + idx * stride] = *v;
                }
            }
        }
    }
    for (idx, v) in data.iter_mut().enumerate() {
        let ix = grid.unravel(idx);
        let mut y = [0.0; 3];
        for a in 0..d {
            y[a] = spacing * grid.mode(ix[a]) as f64;
        }
        if y[..d].iter().any(|c| c.abs() > half) {
            *v = far_field(&y[..d]);
        }
    }
    Ok(Field::from_raw(grid, data, Space::Frequency))
}

/// Bluestein evaluation of `F_m = Σ_k a_k e^{iα k m}` for contiguous index
/// ranges `k ∈ [k0, k0+nk)`, `m ∈ [m0, m0+nm)`.
struct ChirpZ {
    nk: usize,
    nm: usize,
    alpha: f64,
    k0: i64,
    m0: i64,
    size: usize,
    kernel: Vec<C64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl ChirpZ {
    fn new(nk: usize, nm: usize, alpha: f64, k0: i64, m0: i64) -> Self {
        let size = (nk + nm - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(size);
        let inverse = planner.plan_fft_inverse(size);
        let shift = m0 - k0;
        let mut kernel = vec![C64::new(0.0, 0.0); size];
        for s in -(nk as i64 - 1)..(nm as i64) {
            let l = (s + shift) as f64;
            kernel[s.rem_euclid(size as i64) as usize] = C64::from_polar(1.0, -0.5 * alpha * l * l);
        }
        forward.process(&mut kernel);
        Self { nk, nm, alpha, k0, m0, size, kernel, forward, inverse }
    }

    fn apply(&self, a: &[C64]) -> Vec<C64> {
        debug_assert_eq!(a.len(), self.nk);
        let mut buf = vec![C64::new(0.0, 0.0); self.size];
        for (j, v) in a.iter().enumerate() {
            let k = (self.k0 + j as i64) as f64;
            buf[j] = v * C64::from_polar(1.0, 0.5 * self.alpha * k * k);
        }
        self.forward.process(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.kernel) {
            *b *= k;
        }
        self.inverse.process(&mut buf);
        let inv = 1.0 / self.size as f64;
        (0..self.nm)
            .map(|i| {
                let m = (self.m0 + i as i64) as f64;
                buf[i] * inv * C64::from_polar(1.0, 0.5 * self.alpha * m * m)
            })
            .collect()
    }
}
