//! Free, external-potential and self-consistent propagation.
//!
//! Time stepping is Strang splitting `K(dt/2) F(dt) K(dt/2)` with
//! `K(s) = e^{-isV/ħ}` and `F(dt)` the free multiplier. For time-dependent
//! potentials both half kicks use `V` at the step midpoint, which keeps the
//! step exactly invertible by running it with `-dt`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde_json::json;

use crate::density::LowRankOperator;
use crate::error::{Error, Result};
use crate::grid::{
    apply_multiplier_in_place, convolve_with_spectrum, fourier_multiplier, fourier_transform,
    interpolate, interpolate_lattice, Direction, Field, Grid, Space, C64,
};

/// Mass fraction on the outermost grid layer that marks a run contaminated.
pub const BOUNDARY_TOL: f64 = 1e-6;

/// Pair interaction `w`.
#[derive(Clone, Debug)]
pub enum PotentialKind {
    /// `w(x) = κ⟨x⟩^{-1}`
    RegularizedCoulomb,
    /// `w(x) = κ e^{-|x|²/(2 width²)}`
    Gaussian { width: f64 },
    /// `w(x) = κ · samples(x)` on the run grid
    Custom(Field),
}

#[derive(Clone, Debug)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub coupling: f64,
    /// Constant added to `w`; only moves the potential by `shift · mass`.
    pub shift: f64,
}

impl PotentialSpec {
    pub fn coulomb(coupling: f64) -> Self {
        Self { kind: PotentialKind::RegularizedCoulomb, coupling, shift: 0.0 }
    }

    pub fn gaussian(coupling: f64, width: f64) -> Self {
        Self { kind: PotentialKind::Gaussian { width }, coupling, shift: 0.0 }
    }

    pub fn custom(samples: Field, coupling: f64) -> Self {
        Self { kind: PotentialKind::Custom(samples), coupling, shift: 0.0 }
    }

    pub fn is_custom(&self) -> bool {
        matches!(self.kind, PotentialKind::Custom(_))
    }

    /// Analytic `w` for the built-in kinds.
    pub fn eval(&self, x: &[f64]) -> Option<f64> {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let base = match self.kind {
            PotentialKind::RegularizedCoulomb => (1.0 + r2).powf(-0.5),
            PotentialKind::Gaussian { width } => (-0.5 * r2 / (width * width)).exp(),
            PotentialKind::Custom(_) => return None,
        };
        Some(self.coupling * base + self.shift)
    }

    /// Far-field value of `w ∗ ρ` at `y` outside the box for total mass `m`.
    pub fn far_field(&self, y: &[f64], mass: f64) -> f64 {
        let r = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        match self.kind {
            PotentialKind::RegularizedCoulomb => self.coupling * mass / r + self.shift * mass,
            PotentialKind::Gaussian { width } => {
                self.coupling * mass * (-0.5 * r * r / (width * width)).exp() + self.shift * mass
            }
            PotentialKind::Custom(_) => 0.0,
        }
    }

    pub fn describe(&self) -> serde_json::Value {
        let far = match self.kind {
            PotentialKind::RegularizedCoulomb => "coupling*mass/|y|",
            PotentialKind::Gaussian { .. } => "coupling*mass*exp(-|y|^2/(2 width^2))",
            PotentialKind::Custom(_) => "zero (flagged)",
        };
        let kind = match &self.kind {
            PotentialKind::RegularizedCoulomb => json!({"kind": "regularized-coulomb"}),
            PotentialKind::Gaussian { width } => json!({"kind": "gaussian", "width": width}),
            PotentialKind::Custom(_) => json!({"kind": "custom"}),
        };
        json!({"interaction": kind, "coupling": self.coupling, "shift": self.shift, "far_field": far})
    }

    /// Constants `C_k = max_x |∂^k w(x)| ⟨x⟩^{1+k}` for `k = 0..=3`, taken
    /// along coordinate axes with centered differences on the grid points.
    /// The difference step scales with `⟨x⟩` so rounding noise stays flat.
    pub fn decay_constants(&self, grid: &Grid) -> Option<[f64; 4]> {
        self.eval(&[0.0; 3][..grid.dim()])?;
        let d = grid.dim();
        let w = |x: &[f64]| self.eval(x).unwrap() - self.shift;
        let mut c = [0.0f64; 4];
        for idx in 0..grid.points() {
            let x = grid.position(idx);
            let x = &x[..d];
            let br = (1.0 + x.iter().map(|v| v * v).sum::<f64>()).sqrt();
            let h = 1e-3 * br;
            c[0] = c[0].max(w(x).abs() * br);
            for a in 0..d {
                let at = |s: f64| {
                    let mut y = [0.0; 3];
                    y[..d].copy_from_slice(x);
                    y[a] += s * h;
                    w(&y[..d])
                };
                let (m2, m1, z, p1, p2) = (at(-2.0), at(-1.0), at(0.0), at(1.0), at(2.0));
                let d1 = (p1 - m1) / (2.0 * h);
                let d2 = (p1 - 2.0 * z + m1) / (h * h);
                let d3 = (p2 - 2.0 * p1 + 2.0 * m1 - m2) / (2.0 * h * h * h);
                c[1] = c[1].max(d1.abs() * br.powi(2));
                c[2] = c[2].max(d2.abs() * br.powi(3));
                c[3] = c[3].max(d3.abs() * br.powi(4));
            }
        }
        Some(c)
    }
}

/// An interaction prepared for a specific grid.
#[derive(Clone, Debug)]
pub struct Interaction {
    spec: PotentialSpec,
    grid: Grid,
    kernel_dft: Vec<C64>,
    constants: Option<[f64; 4]>,
}

impl Interaction {
    pub fn new(spec: PotentialSpec, grid: &Grid) -> Result<Self> {
        let mut samples: Vec<C64> = match &spec.kind {
            PotentialKind::Custom(f) => {
                if f.grid() != grid {
                    return Err(Error::GridMismatch);
                }
                f.values().iter().map(|v| C64::new(spec.coupling * v.re + spec.shift, 0.0)).collect()
            }
            _ => {
                let d = grid.dim();
                (0..grid.points())
                    .map(|i| C64::new(spec.eval(&grid.position(i)[..d]).unwrap(), 0.0))
                    .collect()
            }
        };
        if let PotentialKind::Gaussian { width } = spec.kind {
            if !(width > 0.0) {
                return Err(Error::InvalidParameter(format!("gaussian width must be positive, got {width}")));
            }
        }
        if samples.iter().any(|v| !v.re.is_finite()) {
            return Err(Error::NonFinite("interaction samples"));
        }
        let constants = spec.decay_constants(grid);
        if let Some(c) = constants {
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("interaction decay constants"));
            }
        }
        grid.dft(&mut samples, true);
        Ok(Self { spec, grid: grid.clone(), kernel_dft: samples, constants })
    }

    pub fn spec(&self) -> &PotentialSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn decay_constants(&self) -> Option<[f64; 4]> {
        self.constants
    }

    pub fn is_zero(&self) -> bool {
        self.spec.coupling == 0.0 && self.spec.shift == 0.0
    }

    /// `V = w ∗ ρ` (real part).
    pub fn potential(&self, rho: &Field) -> Field {
        if self.is_zero() {
            return Field::zeros(&self.grid, Space::Position);
        }
        let mut v = convolve_with_spectrum(&self.grid, &self.kernel_dft, rho);
        for s in v.values_mut() {
            s.im = 0.0;
        }
        v
    }

    pub fn far_field(&self, mass: f64) -> impl Fn(&[f64]) -> C64 + '_ {
        move |y| C64::new(self.spec.far_field(y, mass), 0.0)
    }
}

/// Symbol `e^{-itħ|ξ|²/2}` on the frequency lattice.
pub fn free_symbol(grid: &Grid, t: f64, hbar: f64) -> Vec<C64> {
    grid.symbol(|xi| {
        let k2: f64 = xi.iter().map(|v| v * v).sum();
        C64::from_polar(1.0, -0.5 * t * hbar * k2)
    })
}

/// `U(t) u` for the free semi-classical flow.
pub fn free_propagate(u: &Field, t: f64, hbar: f64) -> Result<Field> {
    if t == 0.0 {
        u.require(Space::Position)?;
        return Ok(u.clone());
    }
    fourier_multiplier(u, &free_symbol(u.grid(), t, hbar))
}

/// One reusable Strang step of fixed size.
pub struct StrangStep {
    grid: Grid,
    hbar: f64,
    dt: f64,
    free: Vec<C64>,
}

impl StrangStep {
    pub fn new(grid: &Grid, hbar: f64, dt: f64) -> Self {
        Self { grid: grid.clone(), hbar, dt, free: free_symbol(grid, dt, hbar) }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Half-kick phases `e^{-i dt V/(2ħ)}`.
    pub fn kick(&self, v: &[f64]) -> Vec<C64> {
        let s = -0.5 * self.dt / self.hbar;
        v.iter().map(|&x| C64::from_polar(1.0, s * x)).collect()
    }

    pub fn apply(&self, u: &mut Field, kick: &[C64]) {
        u.mul_pointwise_complex(kick);
        apply_multiplier_in_place(&self.grid, u.values_mut(), &self.free);
        u.mul_pointwise_complex(kick);
    }

    pub fn apply_all(&self, us: &mut [Field], v: &[f64]) {
        let kick = self.kick(v);
        us.par_iter_mut().for_each(|u| self.apply(u, &kick));
    }
}

fn real_parts(f: &Field) -> Vec<f64> {
    f.values().iter().map(|v| v.re).collect()
}

/// Step sizes covering `[t0, t1]` with steps of `dt` (the last one shortened).
pub fn step_sizes(t0: f64, t1: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let span = t1 - t0;
    if span < 0.0 {
        return Err(Error::InvalidParameter("t1 must not precede t0".into()));
    }
    let full = (span / dt * (1.0 + 1e-12)).floor() as usize;
    let mut out = vec![dt; full];
    let rest = span - full as f64 * dt;
    if rest > 1e-12 * dt.max(span) {
        out.push(rest);
    }
    Ok(out)
}

/// `U_V(t1, t0) u` with a prescribed potential `V(t, ·)`.
pub fn evolve_external(
    u: &Field,
    potential: &dyn Fn(f64) -> Field,
    t0: f64,
    t1: f64,
    dt: f64,
    hbar: f64,
) -> Result<Field> {
    u.require(Space::Position)?;
    let mut out = u.clone();
    let mut t = t0;
    let mut cached: Option<StrangStep> = None;
    for h in step_sizes(t0, t1, dt)? {
        if cached.as_ref().map(|s| s.dt() != h).unwrap_or(true) {
            cached = Some(StrangStep::new(u.grid(), hbar, h));
        }
        let step = cached.as_ref().unwrap();
        let v = potential(t + 0.5 * h);
        step.apply(&mut out, &step.kick(&real_parts(&v)));
        t += h;
    }
    let frac = out.values().iter().map(|v| v.norm_sqr()).collect::<Vec<_>>();
    let total: f64 = frac.iter().sum();
    let shell: f64 = frac.iter().enumerate().filter(|(i, _)| u.grid().is_shell(*i)).map(|(_, v)| v).sum();
    if total > 0.0 && shell / total > BOUNDARY_TOL {
        return Err(Error::BoundaryContamination { t: t1, fraction: shell / total });
    }
    Ok(out)
}

/// Quadrature rule for the phase-correction time integral.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhaseRule {
    Midpoint,
    LeftEndpoint,
}

/// `Ψ_k += (dt/ħ) V(τ, τħξ_k)`; `Ψ_k` stores the symbol value at `ħξ_k`.
pub fn accumulate_phase(
    psi: &mut Field,
    v: &Field,
    tau: f64,
    dt: f64,
    hbar: f64,
    far_field: &dyn Fn(&[f64]) -> C64,
) -> Result<()> {
    psi.require(Space::Frequency)?;
    psi.same_grid(v)?;
    let grid = v.grid();
    let values = if tau == 0.0 {
        let at0 = interpolate(v, &[[0.0; 3]], far_field)?[0];
        vec![at0; grid.points()]
    } else {
        interpolate_lattice(v, tau * hbar * grid.dxi(), far_field)?.into_values()
    };
    let s = dt / hbar;
    for (p, w) in psi.values_mut().iter_mut().zip(values) {
        p.re += s * w.re;
    }
    Ok(())
}

/// Multiplier `e^{i sign Ψ(t, -iħ∇)}` from stored symbol values.
pub fn phase_symbol(psi: &Field, sign: f64) -> Vec<C64> {
    psi.values().iter().map(|p| C64::from_polar(1.0, sign * p.re)).collect()
}

/// One stored snapshot of a Hartree trajectory.
#[derive(Clone, Debug)]
pub struct Stamp {
    pub t: f64,
    pub step: usize,
    pub gamma: LowRankOperator,
    pub potential: Field,
    pub psi: Field,
    pub mass: f64,
    pub energy: f64,
}

#[derive(Clone, Debug)]
pub struct HartreeOptions {
    pub dt: f64,
    pub horizon: f64,
    pub stride: usize,
    pub phase_rule: PhaseRule,
    pub boundary_tol: f64,
    /// Relative `S²_ħ` tolerance used to diagonalize the initial datum.
    pub eig_tol: f64,
}

impl Default for HartreeOptions {
    fn default() -> Self {
        Self {
            dt: 0.05,
            horizon: 1.0,
            stride: 1,
            phase_rule: PhaseRule::Midpoint,
            boundary_tol: BOUNDARY_TOL,
            eig_tol: 1e-13,
        }
    }
}

/// Self-consistent Hartree run.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub hbar: f64,
    pub dt: f64,
    pub interaction: Interaction,
    pub stamps: Vec<Stamp>,
    /// Potential used by step `m` (both half kicks), indexed by step.
    pub step_potentials: Vec<Vec<f64>>,
    pub flags: Vec<String>,
    pub contamination: Option<(f64, f64)>,
}

impl Trajectory {
    pub fn grid(&self) -> &Grid {
        self.interaction.grid()
    }

    pub fn times(&self) -> Vec<f64> {
        self.stamps.iter().map(|s| s.t).collect()
    }

    pub fn stamp(&self, t: f64) -> Result<&Stamp> {
        self.stamps
            .iter()
            .find(|s| (s.t - t).abs() <= 1e-9 * self.dt.max(1.0))
            .ok_or(Error::NotAStamp(t))
    }

    pub fn final_stamp(&self) -> &Stamp {
        self.stamps.last().expect("trajectory has at least one stamp")
    }

    pub fn step_dt(&self) -> f64 {
        self.dt
    }

    /// `U_V(t_m, 0) u` replaying the stored step potentials.
    pub fn propagate_to(&self, u: &Field, step: usize) -> Field {
        let s = StrangStep::new(self.grid(), self.hbar, self.dt);
        let mut out = u.clone();
        for v in &self.step_potentials[..step] {
            s.apply(&mut out, &s.kick(v));
        }
        out
    }

    /// `U_V(t_m, 0)^* u`.
    pub fn propagate_back_from(&self, u: &Field, step: usize) -> Field {
        let s = StrangStep::new(self.grid(), self.hbar, -self.dt);
        let mut out = u.clone();
        for v in self.step_potentials[..step].iter().rev() {
            s.apply(&mut out, &s.kick(v));
        }
        out
    }

    /// `Ψ(t_m, ħξ)` on another frequency lattice (`probe`), rebuilt from the
    /// stored step potentials with the same quadrature rule as the run.
    pub fn phase_on(&self, probe: &Grid, step: usize) -> Result<Vec<f64>> {
        if probe.dim() != self.grid().dim() {
            return Err(Error::GridMismatch);
        }
        let d = probe.dim();
        let mut psi = vec![0.0; probe.points()];
        let pts: Vec<[f64; 3]> = (0..probe.points()).map(|i| probe.frequency(i)).collect();
        for (m, v) in self.step_potentials[..step].iter().enumerate() {
            let tau = (m as f64 + 0.5) * self.dt;
            let field = Field::from_raw(self.grid(), v.iter().map(|&x| C64::new(x, 0.0)).collect(), Space::Position);
            let mass = self.stamps[0].mass;
            let far = self.interaction.far_field(mass);
            let scaled: Vec<[f64; 3]> = pts
                .iter()
                .map(|p| {
                    let mut y = [0.0; 3];
                    for a in 0..d {
                        y[a] = tau * self.hbar * p[a];
                    }
                    y
                })
                .collect();
            let vals = interpolate(&field, &scaled, &far)?;
            for (p, w) in psi.iter_mut().zip(vals) {
                *p += self.dt / self.hbar * w.re;
            }
        }
        Ok(psi)
    }
}

/// Incremental Hartree integrator. Orbitals evolve under the common
/// self-consistent potential; one predictor–corrector pass per step.
pub struct HartreeSolver {
    interaction: Interaction,
    hbar: f64,
    dt: f64,
    rule: PhaseRule,
    step: StrangStep,
    half: StrangStep,
    orbitals: Vec<Field>,
    weights: Vec<f64>,
    psi: Field,
    potential: Field,
    steps_done: usize,
}

impl HartreeSolver {
    pub fn new(gamma0: &LowRankOperator, interaction: &Interaction, dt: f64, rule: PhaseRule, eig_tol: f64) -> Result<Self> {
        if !gamma0.is_hermitian() {
            return Err(Error::NotHermitian);
        }
        if gamma0.grid() != interaction.grid() {
            return Err(Error::GridMismatch);
        }
        let scale = gamma0.schatten_norm(2.0)?;
        let (orbitals, weights) = gamma0.eigen_decomposition(eig_tol * scale)?;
        let psi = Field::zeros(gamma0.grid(), Space::Frequency);
        Self::from_state(interaction, gamma0.hbar(), dt, rule, orbitals, weights, psi, 0)
    }

    /// Restarts from stored orbitals, weights and phase after `steps_done` steps.
    #[allow(clippy::too_many_arguments)]
    pub fn from_state(
        interaction: &Interaction,
        hbar: f64,
        dt: f64,
        rule: PhaseRule,
        orbitals: Vec<Field>,
        weights: Vec<f64>,
        psi: Field,
        steps_done: usize,
    ) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        let grid = interaction.grid().clone();
        let mut s = Self {
            interaction: interaction.clone(),
            hbar,
            dt,
            rule,
            step: StrangStep::new(&grid, hbar, dt),
            half: StrangStep::new(&grid, hbar, 0.5 * dt),
            orbitals,
            weights,
            psi,
            potential: Field::zeros(&grid, Space::Position),
            steps_done,
        };
        s.potential = s.interaction.potential(&s.density());
        Ok(s)
    }

    pub fn time(&self) -> f64 {
        self.steps_done as f64 * self.dt
    }

    pub fn steps_done(&self) -> usize {
        self.steps_done
    }

    pub fn psi(&self) -> &Field {
        &self.psi
    }

    pub fn potential(&self) -> &Field {
        &self.potential
    }

    pub fn orbitals(&self) -> &[Field] {
        &self.orbitals
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn density_of(&self, orbitals: &[Field]) -> Field {
        let grid = self.interaction.grid();
        let scale = (2.0 * PI * self.hbar).powi(grid.dim() as i32);
        let mut rho = vec![C64::new(0.0, 0.0); grid.points()];
        for (u, &w) in orbitals.iter().zip(&self.weights) {
            for (r, v) in rho.iter_mut().zip(u.values()) {
                r.re += w * v.norm_sqr();
            }
        }
        for r in &mut rho {
            r.re *= scale;
        }
        Field::from_raw(grid, rho, Space::Position)
    }

    pub fn density(&self) -> Field {
        self.density_of(&self.orbitals)
    }

    pub fn operator(&self) -> LowRankOperator {
        LowRankOperator::from_orbitals(self.interaction.grid(), self.hbar, self.orbitals.clone(), &self.weights)
            .expect("orbitals share the interaction grid")
    }

    pub fn mass(&self) -> f64 {
        self.density().integral().re
    }

    /// `(2πħ)^d Σ λ_n (ħ²/2)‖∇u_n‖² + ½∫(w∗ρ)ρ`.
    pub fn energy(&self) -> Result<f64> {
        let grid = self.interaction.grid();
        let scale = (2.0 * PI * self.hbar).powi(grid.dim() as i32);
        let k2: Vec<f64> = (0..grid.points())
            .map(|i| grid.frequency(i).iter().map(|v| v * v).sum())
            .collect();
        let mut kinetic = 0.0;
        for (u, &w) in self.orbitals.iter().zip(&self.weights) {
            let uh = fourier_transform(u, Direction::Forward)?;
            let g: f64 = uh.values().iter().zip(&k2).map(|(v, k)| v.norm_sqr() * k).sum::<f64>() * grid.freq_volume();
            kinetic += w * 0.5 * self.hbar * self.hbar * g;
        }
        let rho = self.density();
        let pot: f64 = rho
            .values()
            .iter()
            .zip(self.potential.values())
            .map(|(r, v)| r.re * v.re)
            .sum::<f64>()
            * grid.cell_volume();
        Ok(scale * kinetic + 0.5 * pot)
    }

    /// Advances one step and returns the potential used by the corrector.
    pub fn advance(&mut self) -> Result<Vec<f64>> {
        let t = self.time();
        let v_now = real_parts(&self.potential);
        let mut pred = self.orbitals.clone();
        self.half.apply_all(&mut pred, &v_now);
        let v_mid = self.interaction.potential(&self.density_of(&pred));
        let v_mid_re = real_parts(&v_mid);
        self.step.apply_all(&mut self.orbitals, &v_mid_re);
        let mass = self.mass();
        match self.rule {
            PhaseRule::Midpoint => {
                let far = self.interaction.far_field(mass);
                accumulate_phase(&mut self.psi, &v_mid, t + 0.5 * self.dt, self.dt, self.hbar, &far)?;
            }
            PhaseRule::LeftEndpoint => {
                let far = self.interaction.far_field(mass);
                let v = self.potential.clone();
                accumulate_phase(&mut self.psi, &v, t, self.dt, self.hbar, &far)?;
            }
        }
        self.steps_done += 1;
        self.potential = self.interaction.potential(&self.density());
        if self.orbitals.iter().any(|u| u.values().iter().any(|v| !(v.re.is_finite() && v.im.is_finite()))) {
            return Err(Error::Divergence(format!("non-finite orbital at t = {}", self.time())));
        }
        Ok(v_mid_re)
    }

    pub fn stamp(&self) -> Result<Stamp> {
        Ok(Stamp {
            t: self.time(),
            step: self.steps_done,
            gamma: self.operator(),
            potential: self.potential.clone(),
            psi: self.psi.clone(),
            mass: self.mass(),
            energy: self.energy()?,
        })
    }
}

/// Runs the self-consistent evolution from `γ₀` up to the horizon. A run
/// that contaminates the boundary stops early with a flag and a final stamp.
pub fn hartree_evolve(gamma0: &LowRankOperator, interaction: &Interaction, opts: &HartreeOptions) -> Result<Trajectory> {
    let mut solver = HartreeSolver::new(gamma0, interaction, opts.dt, opts.phase_rule, opts.eig_tol)?;
    let frac = solver.density().shell_fraction();
    if frac > opts.boundary_tol {
        return Err(Error::BoundaryContamination { t: 0.0, fraction: frac });
    }
    let steps = (opts.horizon / opts.dt).round() as usize;
    let stride = opts.stride.max(1);
    let mut traj = Trajectory {
        hbar: gamma0.hbar(),
        dt: opts.dt,
        interaction: interaction.clone(),
        stamps: vec![solver.stamp()?],
        step_potentials: Vec::with_capacity(steps),
        flags: Vec::new(),
        contamination: None,
    };
    if interaction.spec().is_custom() {
        traj.flags.push("far-field-zero".into());
    }
    for m in 1..=steps {
        traj.step_potentials.push(solver.advance()?);
        let frac = solver.density().shell_fraction();
        let contaminated = frac > opts.boundary_tol;
        if m % stride == 0 || m == steps || contaminated {
            traj.stamps.push(solver.stamp()?);
        }
        if contaminated {
            traj.contamination = Some((solver.time(), frac));
            traj.flags.push("boundary-contaminated".into());
            break;
        }
    }
    Ok(traj)
}

/// `W_V(t) u = U(-t) U_V(t) u` along a trajectory.
pub fn wave_operator_apply(u: &Field, traj: &Trajectory, t: f64) -> Result<Field> {
    let stamp = traj.stamp(t)?;
    free_propagate(&traj.propagate_to(u, stamp.step), -stamp.t, traj.hbar)
}

/// `W_V(t)^* u = U_V(t)^* U(t) u`.
pub fn wave_operator_adjoint_apply(u: &Field, traj: &Trajectory, t: f64) -> Result<Field> {
    let stamp = traj.stamp(t)?;
    Ok(traj.propagate_back_from(&free_propagate(u, stamp.t, traj.hbar)?, stamp.step))
}

/// `e^{iΨ(t,-iħ∇)} U(t)^* γ(t) U(t) e^{-iΨ(t,-iħ∇)}`.
pub fn modified_profile(traj: &Trajectory, t: f64) -> Result<LowRankOperator> {
    let stamp = traj.stamp(t)?;
    profile_of(&stamp.gamma, &stamp.psi, stamp.t, traj.hbar)
}

/// Profile with an explicit phase (pass a zero field for the uncorrected one).
pub fn profile_of(gamma: &LowRankOperator, psi: &Field, t: f64, hbar: f64) -> Result<LowRankOperator> {
    let grid = gamma.grid();
    let free = free_symbol(grid, -t, hbar);
    let ph = phase_symbol(psi, 1.0);
    let sym: Vec<C64> = free.iter().zip(&ph).map(|(a, b)| a * b).collect();
    gamma.conjugate(|f| fourier_multiplier(f, &sym))
}

/// `(x_axis + itħ∂_axis) u`.
pub fn j_apply(u: &Field, t: f64, hbar: f64, axis: usize) -> Result<Field> {
    let grid = u.grid();
    if axis >= grid.dim() {
        return Err(Error::Axis { axis, dim: grid.dim() });
    }
    let m = grid.symbol(|xi| C64::new(0.0, xi[axis]));
    let mut du = fourier_multiplier(u, &m)?;
    du.scale(C64::new(0.0, t * hbar));
    let x = grid.sample(|x| x[axis]);
    let mut xu = u.clone();
    xu.mul_pointwise(&x);
    xu.axpy(C64::new(1.0, 0.0), &du);
    Ok(xu)
}

/// `M(t) D(t) F M(t) u` with `M(t) = e^{i|x|²/(2tħ)}` and
/// `D(t)g(x) = (itħ)^{-d/2} g(x/(tħ))`. The transform is evaluated at the
/// off-lattice frequencies `x/(tħ)` by a separable direct sum.
pub fn mdfm_apply(u: &Field, t: f64, hbar: f64) -> Result<Field> {
    u.require(Space::Position)?;
    if t == 0.0 {
        return Err(Error::InvalidParameter("MDFM needs t ≠ 0".into()));
    }
    let grid = u.grid();
    let d = grid.dim();
    let n = grid.n();
    let th = t * hbar;
    let chirp = grid.sample(|x| x.iter().map(|v| v * v).sum::<f64>() / (2.0 * th));
    let mut g: Vec<C64> = u.values().iter().zip(&chirp).map(|(v, c)| v * C64::from_polar(1.0, *c)).collect();
    // E[j][l] = e^{-i x_l ξ_j} dx / √(2π), ξ_j = x_j / (tħ).
    let w = grid.dx() / (2.0 * PI).sqrt();
    let table: Vec<C64> = (0..n * n)
        .map(|jl| {
            let (j, l) = (jl / n, jl % n);
            C64::from_polar(w, -grid.coord(l) * grid.coord(j) / th)
        })
        .collect();
    let mut line = vec![C64::new(0.0, 0.0); n];
    for axis in 0..d {
        let stride = n.pow((d - 1 - axis) as u32);
        let block = stride * n;
        for start in (0..g.len()).step_by(block) {
            for off in 0..stride {
                let base = start + off;
                for (j, out) in line.iter_mut().enumerate() {
                    let row = &table[j * n..(j + 1) * n];
                    *out = (0..n).map(|l| row[l] * g[base + l * stride]).sum();
                }
                for (j, v) in line.iter().enumerate() {
                    g[base + j * stride] = *v;
                }
            }
        }
    }
    let pre = C64::new(0.0, th).powf(-0.5 * d as f64);
    for (v, c) in g.iter_mut().zip(&chirp) {
        *v *= pre * C64::from_polar(1.0, *c);
    }
    Ok(Field::from_raw(grid, g, Space::Position))
}
