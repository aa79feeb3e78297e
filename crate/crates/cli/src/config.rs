//! Experiment configuration. One TOML file fully specifies a run.

use serde::{Deserialize, Serialize};

use schl::harness::{GaussianSeed, LedgerParams};
use schl::identities::IdentityConfig;
use schl::propagate::PotentialSpec;

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub grid: GridBlock,
    pub physics: PhysicsBlock,
    pub data: DataBlock,
    pub time: TimeBlock,
    pub output: OutputBlock,
    pub identities: IdentityBlock,
    pub dispersive: DispersiveBlock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridBlock {
    pub dim: usize,
    pub n: usize,
    pub len: f64,
    /// Momentum lattice of classical distributions.
    pub p_n: usize,
    pub p_len: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialKind {
    Coulomb,
    Gaussian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsBlock {
    pub hbar: f64,
    pub hbars: Vec<f64>,
    pub potential: PotentialKind,
    pub kappa: f64,
    /// Width of the Gaussian potential.
    pub potential_width: f64,
    pub sigma: f64,
    pub a: f64,
    pub b: f64,
    /// Enforce the parameter ranges of the three-dimensional theory.
    pub fidelity: bool,
    pub sweep_threshold: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedSource {
    Toeplitz,
    RankOne,
    File,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataBlock {
    pub seed: SeedSource,
    pub spread_q: f64,
    pub spread_p: f64,
    pub center_q: f64,
    pub center_p: f64,
    /// Width of the rank-one Gaussian.
    pub width: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    /// Seed for randomized estimators. Every current command is
    /// deterministic without it; it is kept with the run for provenance.
    pub rng_seed: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeBlock {
    pub horizon: f64,
    pub dt: f64,
    pub stride: usize,
    /// Fit window of `fit-decay` and `sweep-hbar`.
    pub window: [f64; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Json,
    Csv,
    Snapshot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub dir: String,
    pub formats: Vec<Format>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdentityBlock {
    pub levels: usize,
    pub coupling: f64,
    pub width: f64,
    pub shift: f64,
    pub bump_width: f64,
    pub spectral_tol: f64,
    pub order: f64,
    pub order_tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DispersiveBlock {
    pub n: usize,
    pub len: f64,
    /// Probe width in grid spacings.
    pub width_cells: f64,
    /// Evaluation times of the free estimate; interacting runs use every
    /// stamp from `t_min` on.
    pub times: Vec<f64>,
    pub t_min: f64,
}

impl Default for GridBlock {
    fn default() -> Self {
        Self { dim: 1, n: 256, len: 40.0, p_n: 128, p_len: 12.8 }
    }
}

impl Default for PhysicsBlock {
    fn default() -> Self {
        Self {
            hbar: 0.5,
            hbars: vec![1.0, 0.5, 0.25, 0.125],
            potential: PotentialKind::Coulomb,
            kappa: 0.0,
            potential_width: 1.0,
            sigma: 1.6,
            a: LedgerParams::default().a,
            b: LedgerParams::default().b,
            fidelity: false,
            sweep_threshold: 2.0,
        }
    }
}

impl Default for DataBlock {
    fn default() -> Self {
        let g = GaussianSeed::default();
        Self {
            seed: SeedSource::Toeplitz,
            spread_q: g.spread_q,
            spread_p: g.spread_p,
            center_q: g.center_q,
            center_p: g.center_p,
            width: 1.0,
            path: None,
            rng_seed: 1,
        }
    }
}

impl Default for TimeBlock {
    fn default() -> Self {
        Self { horizon: 1.0, dt: 0.1, stride: 1, window: [5.0, 40.0] }
    }
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { dir: "out".into(), formats: vec![Format::Json, Format::Csv, Format::Snapshot] }
    }
}

impl Default for IdentityBlock {
    fn default() -> Self {
        let c = IdentityConfig::default();
        Self {
            levels: c.levels,
            coupling: c.coupling,
            width: c.width,
            shift: c.shift,
            bump_width: c.bump_width,
            spectral_tol: c.spectral_tol,
            order: c.order,
            order_tol: c.order_tol,
        }
    }
}

impl Default for DispersiveBlock {
    fn default() -> Self {
        Self { n: 1024, len: 200.0, width_cells: 2.0, times: vec![1.0, 2.0, 4.0, 8.0], t_min: 1.0 }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            grid: GridBlock::default(),
            physics: PhysicsBlock::default(),
            data: DataBlock::default(),
            time: TimeBlock::default(),
            output: OutputBlock::default(),
            identities: IdentityBlock::default(),
            dispersive: DispersiveBlock::default(),
        }
    }
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let g = &self.grid;
        if !(1..=3).contains(&g.dim) {
            return Err(bad(format!("grid.dim must be 1, 2 or 3, got {}", g.dim)));
        }
        for (name, n) in [("grid.n", g.n), ("grid.p_n", g.p_n), ("dispersive.n", self.dispersive.n)] {
            if n < 8 || !n.is_power_of_two() {
                return Err(bad(format!("{name} must be a power of two ≥ 8, got {n}")));
            }
        }
        for (name, v) in [("grid.len", g.len), ("grid.p_len", g.p_len), ("dispersive.len", self.dispersive.len)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad(format!("{name} must be positive, got {v}")));
            }
        }
        let p = &self.physics;
        if !(p.hbar > 0.0 && p.hbar <= 1.0) {
            return Err(bad(format!("physics.hbar must lie in (0, 1], got {}", p.hbar)));
        }
        if p.hbars.is_empty() || p.hbars.iter().any(|h| !(*h > 0.0 && *h <= 1.0)) {
            return Err(bad("physics.hbars must be a nonempty list in (0, 1]"));
        }
        if p.hbars.windows(2).any(|w| w[1] >= w[0]) {
            return Err(bad("physics.hbars must be strictly descending"));
        }
        if !p.kappa.is_finite() || !(p.potential_width > 0.0) {
            return Err(bad("physics.kappa must be finite and physics.potential_width positive"));
        }
        if !(p.sigma >= 0.0 && p.sigma.is_finite()) {
            return Err(bad(format!("physics.sigma must be nonnegative, got {}", p.sigma)));
        }
        if p.fidelity && g.dim == 3 && !(p.sigma > 1.5 && p.sigma < 2.0) {
            return Err(bad(format!("fidelity mode in d = 3 needs σ ∈ (3/2, 2), got {}", p.sigma)));
        }
        LedgerParams::new(p.a, p.b).map_err(|e| bad(e.to_string()))?;
        if !(p.sweep_threshold >= 1.0) {
            return Err(bad("physics.sweep_threshold must be at least 1"));
        }
        let d = &self.data;
        for (name, v) in [("data.spread_q", d.spread_q), ("data.spread_p", d.spread_p), ("data.width", d.width)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad(format!("{name} must be positive, got {v}")));
            }
        }
        if !(d.center_q.is_finite() && d.center_p.is_finite()) {
            return Err(bad("data centers must be finite"));
        }
        if d.seed == SeedSource::File && d.path.is_none() {
            return Err(bad("data.seed = \"file\" needs data.path"));
        }
        let t = &self.time;
        if !(t.dt > 0.0 && t.dt.is_finite() && t.horizon >= 0.0 && t.horizon.is_finite()) {
            return Err(bad("time.dt must be positive and time.horizon nonnegative"));
        }
        if t.stride == 0 {
            return Err(bad("time.stride must be at least 1"));
        }
        if !(t.window[0] < t.window[1]) {
            return Err(bad("time.window must be increasing"));
        }
        let i = &self.identities;
        if i.levels < 2 || !(i.spectral_tol > 0.0 && i.order_tol >= 0.0) {
            return Err(bad("identities need at least two levels and positive tolerances"));
        }
        let disp = &self.dispersive;
        if !(disp.width_cells > 0.0 && disp.width_cells <= 8.0) {
            return Err(bad("dispersive.width_cells must lie in (0, 8]"));
        }
        if disp.times.iter().any(|t| !(*t > 0.0)) {
            return Err(bad("dispersive.times must be positive"));
        }
        if self.output.dir.is_empty() {
            return Err(bad("output.dir must not be empty"));
        }
        Ok(())
    }

    pub fn potential(&self) -> PotentialSpec {
        match self.physics.potential {
            PotentialKind::Coulomb => PotentialSpec::coulomb(self.physics.kappa),
            PotentialKind::Gaussian => PotentialSpec::gaussian(self.physics.kappa, self.physics.potential_width),
        }
    }

    pub fn gaussian_seed(&self) -> GaussianSeed {
        GaussianSeed {
            spread_q: self.data.spread_q,
            spread_p: self.data.spread_p,
            center_q: self.data.center_q,
            center_p: self.data.center_p,
        }
    }

    pub fn ledger_params(&self) -> LedgerParams {
        LedgerParams { a: self.physics.a, b: self.physics.b }
    }

    pub fn wants(&self, f: Format) -> bool {
        self.output.formats.contains(&f)
    }

    pub fn identity_config(&self) -> IdentityConfig {
        let i = &self.identities;
        IdentityConfig {
            dim: self.grid.dim,
            n: self.grid.n,
            len: self.grid.len,
            hbar: self.physics.hbar,
            t: self.time.horizon,
            dt: self.time.dt,
            levels: i.levels,
            coupling: i.coupling,
            width: i.width,
            shift: i.shift,
            bump_width: i.bump_width,
            spectral_tol: i.spectral_tol,
            order: i.order,
            order_tol: i.order_tol,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = ExperimentConfig::parse("[grid]\nn = 512\n[physics]\nkappa = 0.02\n").unwrap();
        assert_eq!(c.grid.n, 512);
        assert_eq!(c.physics.kappa, 0.02);
        assert_eq!(c.time, TimeBlock::default());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_ranges() {
        assert!(ExperimentConfig::parse("[grid]\nsize = 3\n").is_err());
        assert!(ExperimentConfig::parse("[physics]\na = 0.01\nb = 0.04\n").is_err());
        assert!(ExperimentConfig::parse("[grid]\nn = 100\n").is_err());
        assert!(ExperimentConfig::parse("[physics]\nhbars = [0.5, 1.0]\n").is_err());
        let fid = "[grid]\ndim = 3\nn = 32\n[physics]\nfidelity = true\nsigma = 1.2\n";
        assert!(ExperimentConfig::parse(fid).is_err());
        assert!(ExperimentConfig::parse(&fid.replace("1.2", "1.7")).is_ok());
    }
}
