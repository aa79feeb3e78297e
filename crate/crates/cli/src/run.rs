//! Command implementations. Each command writes its artifacts into the
//! output directory and finishes with `manifest.json`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use schl::harness::{
    density_ledger, dispersive_constant, hbar_sweep, rank_one_seed, resample_phase, run_member, GaussianSeed, SeedKind,
    SweepConfig, DENSITY_TERMS,
};
use schl::identities::{identity_suite, Suite};
use schl::phase_space::{
    classical_density, relative_min_eigenvalue, vlasov_evolve, CoherentConvention,
};
use schl::propagate::{hartree_evolve, HartreeOptions, HartreeSolver, Interaction, PhaseRule, BOUNDARY_TOL};
use schl::{x_sigma_norm, Field, Grid, LowRankOperator};

use crate::config::{ExperimentConfig, Format, SeedSource};
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    RunHartree,
    RunVlasov,
    SweepHbar,
    CheckIdentities,
    FitDecay,
    Quantize,
    Dispersive,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::RunHartree => "run-hartree",
            Command::RunVlasov => "run-vlasov",
            Command::SweepHbar => "sweep-hbar",
            Command::CheckIdentities => "check-identities",
            Command::FitDecay => "fit-decay",
            Command::Quantize => "quantize",
            Command::Dispersive => "dispersive",
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Overrides `output.dir`.
    pub out: Option<PathBuf>,
    pub resume: bool,
    pub paper_literal: bool,
    pub quiet: bool,
    /// Stop `run-hartree` at the first checkpoint at or after this step, as
    /// if the process had been interrupted there.
    pub halt_after: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Status {
    Completed,
    Halted,
    Failed(String),
    Contaminated(String),
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub status: Status,
    pub artifacts: Vec<String>,
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    text: &'a str,
    opts: &'a RunOptions,
    dir: PathBuf,
    artifacts: Vec<String>,
}

impl Ctx<'_> {
    fn path(&mut self, name: &str) -> PathBuf {
        if !self.artifacts.iter().any(|a| a == name) {
            self.artifacts.push(name.to_string());
        }
        self.dir.join(name)
    }

    fn convention(&self) -> CoherentConvention {
        if self.opts.paper_literal {
            CoherentConvention::PaperLiteral
        } else {
            CoherentConvention::Normalized
        }
    }

    fn say(&self, msg: impl AsRef<str>) {
        if !self.opts.quiet {
            println!("{}", msg.as_ref());
        }
    }

    /// Report with the config embedded verbatim.
    fn write_json(&mut self, name: &str, body: Value) -> Result<(), CliError> {
        if !self.cfg.wants(Format::Json) {
            return Ok(());
        }
        let report = json!({ "config": self.text, "report": body });
        let path = self.path(name);
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, &report)?;
        w.write_all(b"\n")?;
        Ok(())
    }

    fn write_csv<R: Serialize>(&mut self, name: &str, rows: &[R]) -> Result<(), CliError> {
        if !self.cfg.wants(Format::Csv) {
            return Ok(());
        }
        let path = self.path(name);
        let mut w = csv::Writer::from_path(path)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    fn write_operator(&mut self, name: &str, a: &LowRankOperator) -> Result<(), CliError> {
        if !self.cfg.wants(Format::Snapshot) {
            return Ok(());
        }
        let path = self.path(name);
        let mut w = BufWriter::new(File::create(path)?);
        a.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

/// Runs one command. Artifacts and the manifest are written even when the
/// run ends in a failed check or a contamination abort; those outcomes are
/// returned as errors afterwards.
pub fn run_experiment(
    text: &str,
    cfg: &ExperimentConfig,
    command: Command,
    opts: &RunOptions,
) -> Result<RunSummary, CliError> {
    cfg.validate()?;
    let dir = opts.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    fs::create_dir_all(&dir)?;
    let mut ctx = Ctx { cfg, text, opts, dir: dir.clone(), artifacts: Vec::new() };
    let result = match command {
        Command::RunHartree => run_hartree(&mut ctx),
        Command::RunVlasov => run_vlasov(&mut ctx),
        Command::SweepHbar => sweep(&mut ctx),
        Command::CheckIdentities => check_identities(&mut ctx),
        Command::FitDecay => fit_decay(&mut ctx),
        Command::Quantize => quantize(&mut ctx),
        Command::Dispersive => dispersive(&mut ctx),
    };
    let (status, error) = match result {
        Ok(s) => (s, None),
        Err(e) => (Status::Failed(e.to_string()), Some(e)),
    };
    let (label, detail, code) = match (&status, &error) {
        (_, Some(e)) => ("error", e.to_string(), e.exit_code()),
        (Status::Completed, _) => ("completed", String::new(), 0),
        (Status::Halted, _) => ("halted", String::new(), 0),
        (Status::Failed(m), _) => ("failed", m.clone(), 1),
        (Status::Contaminated(m), _) => ("contaminated", m.clone(), 3),
    };
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let manifest = json!({
        "tool": "schl",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command.name(),
        "status": label,
        "detail": detail,
        "exit_code": code,
        "artifacts": ctx.artifacts,
        "config": text,
        "created_unix": created,
    });
    let mut w = BufWriter::new(File::create(dir.join("manifest.json"))?);
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    w.write_all(b"\n")?;
    w.flush()?;
    ctx.say(format!("{}: {label}{}", command.name(), if detail.is_empty() { String::new() } else { format!(" ({detail})") }));
    if let Some(e) = error {
        return Err(e);
    }
    match &status {
        Status::Failed(m) => Err(CliError::Checks(m.clone())),
        Status::Contaminated(m) => Err(CliError::Contamination(m.clone())),
        _ => Ok(RunSummary { out_dir: dir, status, artifacts: ctx.artifacts }),
    }
}

fn grid_of(cfg: &ExperimentConfig) -> Result<Grid, CliError> {
    Ok(Grid::new(cfg.grid.dim, cfg.grid.n, cfg.grid.len)?)
}

fn read_operator(path: &Path) -> Result<LowRankOperator, CliError> {
    let mut r = BufReader::new(File::open(path)?);
    Ok(LowRankOperator::read_from(&mut r)?)
}

fn initial_datum(ctx: &Ctx, grid: &Grid, hbar: f64) -> Result<LowRankOperator, CliError> {
    let cfg = ctx.cfg;
    match cfg.data.seed {
        SeedSource::Toeplitz => Ok(cfg.gaussian_seed().quantize(grid, hbar, ctx.convention())?),
        SeedSource::RankOne => Ok(rank_one_seed(grid, hbar, cfg.data.width)?),
        SeedSource::File => {
            let a = read_operator(Path::new(cfg.data.path.as_deref().unwrap_or_default()))?;
            if a.grid() != grid || a.hbar() != hbar {
                return Err(CliError::Config("seed file does not match grid or physics.hbar".into()));
            }
            Ok(a)
        }
    }
}

fn sweep_config(ctx: &Ctx) -> Result<SweepConfig, CliError> {
    let cfg = ctx.cfg;
    let seed = match cfg.data.seed {
        SeedSource::Toeplitz => SeedKind::Toeplitz(cfg.gaussian_seed()),
        SeedSource::RankOne => SeedKind::RankOne { width: cfg.data.width },
        SeedSource::File => return Err(CliError::Config("sweeps need a toeplitz or rank-one seed".into())),
    };
    Ok(SweepConfig {
        dim: cfg.grid.dim,
        n: cfg.grid.n,
        len: cfg.grid.len,
        hbars: cfg.physics.hbars.clone(),
        potential: cfg.potential(),
        seed,
        convention: ctx.convention(),
        horizon: cfg.time.horizon,
        dt: cfg.time.dt,
        stride: cfg.time.stride,
        window: (cfg.time.window[0], cfg.time.window[1]),
        params: cfg.ledger_params(),
        sigma: cfg.physics.sigma,
        threshold: cfg.physics.sweep_threshold,
    })
}

/// One line of the Hartree ledger CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub t: f64,
    pub step: usize,
    pub mass: f64,
    pub energy: f64,
    pub rho_l1: f64,
    pub rho_linf: f64,
    pub grad_l1: f64,
    pub grad_linf: f64,
    pub grad_fl1: f64,
    pub hess_l2: f64,
}

fn ledger_row(solver: &HartreeSolver, hbar: f64, cfg: &ExperimentConfig) -> Result<LedgerRow, CliError> {
    let t = solver.time();
    let l = density_ledger(&solver.density(), t, hbar, cfg.ledger_params())?;
    let v: Vec<f64> = DENSITY_TERMS.iter().map(|n| l.get(n).unwrap_or(f64::NAN)).collect();
    Ok(LedgerRow {
        t,
        step: solver.steps_done(),
        mass: solver.mass(),
        energy: solver.energy()?,
        rho_l1: v[0],
        rho_linf: v[1],
        grad_l1: v[2],
        grad_linf: v[3],
        grad_fl1: v[4],
        hess_l2: v[5],
    })
}

#[derive(Serialize, Deserialize)]
struct CheckpointState {
    config: ExperimentConfig,
    steps_done: usize,
    weights: Vec<f64>,
    rows: Vec<LedgerRow>,
}

const CHECKPOINT: &str = "checkpoint";
const CHECKPOINT_NEW: &str = "checkpoint-new";

fn write_checkpoint(dir: &Path, cfg: &ExperimentConfig, solver: &HartreeSolver, rows: &[LedgerRow]) -> Result<(), CliError> {
    let fresh = dir.join(CHECKPOINT_NEW);
    if fresh.exists() {
        fs::remove_dir_all(&fresh)?;
    }
    fs::create_dir_all(&fresh)?;
    let op = solver.operator();
    let mut w = BufWriter::new(File::create(fresh.join("orbitals.bin"))?);
    op.write_to(&mut w)?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(fresh.join("psi.bin"))?);
    solver.psi().write_snapshot(&mut w)?;
    w.flush()?;
    let state = CheckpointState {
        config: cfg.clone(),
        steps_done: solver.steps_done(),
        weights: solver.weights().to_vec(),
        rows: rows.to_vec(),
    };
    serde_json::to_writer(BufWriter::new(File::create(fresh.join("state.json"))?), &state)?;
    let old = dir.join(CHECKPOINT);
    if old.exists() {
        fs::remove_dir_all(&old)?;
    }
    fs::rename(&fresh, &old)?;
    Ok(())
}

fn read_checkpoint(
    dir: &Path,
    cfg: &ExperimentConfig,
    interaction: &Interaction,
) -> Result<Option<(HartreeSolver, Vec<LedgerRow>)>, CliError> {
    let mut ck = dir.join(CHECKPOINT);
    if !ck.exists() {
        ck = dir.join(CHECKPOINT_NEW);
        if !ck.join("state.json").exists() {
            return Ok(None);
        }
    }
    let state: CheckpointState = serde_json::from_reader(BufReader::new(File::open(ck.join("state.json"))?))?;
    let mut stored = state.config.clone();
    stored.output = cfg.output.clone();
    if &stored != cfg {
        return Err(CliError::Config("config differs from the one stored with the checkpoint".into()));
    }
    let op = read_operator(&ck.join("orbitals.bin"))?;
    let psi = Field::read_snapshot(&mut BufReader::new(File::open(ck.join("psi.bin"))?))?;
    let solver = HartreeSolver::from_state(
        interaction,
        op.hbar(),
        cfg.time.dt,
        PhaseRule::Midpoint,
        op.left().to_vec(),
        state.weights,
        psi,
        state.steps_done,
    )?;
    Ok(Some((solver, state.rows)))
}

fn drift(rows: &[LedgerRow], f: impl Fn(&LedgerRow) -> f64) -> f64 {
    let Some(first) = rows.first() else { return 0.0 };
    let v0 = f(first);
    rows.iter().map(|r| (f(r) - v0).abs()).fold(0.0, f64::max) / v0.abs().max(f64::MIN_POSITIVE)
}

fn run_hartree(ctx: &mut Ctx) -> Result<Status, CliError> {
    let cfg = ctx.cfg;
    let grid = grid_of(cfg)?;
    let hbar = cfg.physics.hbar;
    let interaction = Interaction::new(cfg.potential(), &grid)?;
    let steps = (cfg.time.horizon / cfg.time.dt).round() as usize;
    let stride = cfg.time.stride;
    let resumed = if ctx.opts.resume { read_checkpoint(&ctx.dir, cfg, &interaction)? } else { None };
    let (mut solver, mut rows) = match resumed {
        Some(s) => {
            ctx.say(format!("resuming at step {}", s.0.steps_done()));
            s
        }
        None => {
            let gamma0 = initial_datum(ctx, &grid, hbar)?;
            let solver = HartreeSolver::new(&gamma0, &interaction, cfg.time.dt, PhaseRule::Midpoint, 1e-13)?;
            let row = ledger_row(&solver, hbar, cfg)?;
            (solver, vec![row])
        }
    };
    let mut status = Status::Completed;
    let frac = solver.density().shell_fraction();
    if frac > BOUNDARY_TOL {
        status = Status::Contaminated(format!("initial datum touches the boundary ({frac:e})"));
    }
    while status == Status::Completed && solver.steps_done() < steps {
        solver.advance().map_err(|e| match e {
            schl::Error::Divergence(m) => CliError::Divergence(m),
            e => e.into(),
        })?;
        let m = solver.steps_done();
        let frac = solver.density().shell_fraction();
        if m % stride == 0 || m == steps || frac > BOUNDARY_TOL {
            rows.push(ledger_row(&solver, hbar, cfg)?);
        }
        if frac > BOUNDARY_TOL {
            status = Status::Contaminated(format!("boundary contamination at t = {} ({frac:e})", solver.time()));
            break;
        }
        if m % stride == 0 && m < steps {
            write_checkpoint(&ctx.dir, cfg, &solver, &rows)?;
            if ctx.opts.halt_after.is_some_and(|h| m >= h) {
                status = Status::Halted;
            }
        }
    }
    ctx.write_csv("ledger.csv", &rows)?;
    if status == Status::Halted {
        return Ok(status);
    }
    let mass_drift = drift(&rows, |r| r.mass);
    let energy_drift = drift(&rows, |r| r.energy);
    let mut flags = Vec::new();
    if mass_drift > 1e-8 {
        flags.push(format!("mass drift {mass_drift:e} exceeds 1e-8"));
    }
    if energy_drift > 1e-6 {
        flags.push(format!("energy drift {energy_drift:e} exceeds 1e-6"));
    }
    let gamma = solver.operator();
    ctx.write_operator("gamma_final.bin", &gamma)?;
    ctx.write_json(
        "hartree.json",
        json!({
            "hbar": hbar,
            "steps": solver.steps_done(),
            "t_final": solver.time(),
            "rank": gamma.rank(),
            "mass_drift": mass_drift,
            "energy_drift": energy_drift,
            "flags": flags,
        }),
    )?;
    if matches!(status, Status::Contaminated(_)) {
        return Ok(status);
    }
    if !flags.is_empty() {
        return Ok(Status::Failed(flags.join("; ")));
    }
    Ok(status)
}

#[derive(Serialize)]
struct VlasovRow {
    t: f64,
    mass: f64,
    rho_linf: f64,
    f_min: f64,
    boundary_fraction: f64,
}

fn run_vlasov(ctx: &mut Ctx) -> Result<Status, CliError> {
    let cfg = ctx.cfg;
    if cfg.grid.dim != 1 {
        return Err(CliError::Config("run-vlasov is one-dimensional".into()));
    }
    if cfg.data.seed != SeedSource::Toeplitz {
        return Err(CliError::Config("run-vlasov needs the classical (toeplitz) seed".into()));
    }
    let q = grid_of(cfg)?;
    let p = Grid::new(1, cfg.grid.p_n, cfg.grid.p_len)?;
    let f0 = cfg.gaussian_seed().distribution(&q, &p)?;
    let interaction = Interaction::new(cfg.potential(), &q)?;
    let traj = vlasov_evolve(&f0, &interaction, cfg.time.horizon, cfg.time.dt, cfg.time.stride)?;
    let rows: Vec<VlasovRow> = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(t, f)| VlasovRow {
            t: *t,
            mass: f.mass(),
            rho_linf: classical_density(f).sup_norm(),
            f_min: f.min(),
            boundary_fraction: f.boundary_fraction(),
        })
        .collect();
    ctx.write_csv("vlasov.csv", &rows)?;
    let last = traj.states.last().expect("trajectory holds the initial state");
    if cfg.wants(Format::Snapshot) {
        let path = ctx.path("f_final.bin");
        let mut w = BufWriter::new(File::create(path)?);
        last.write_snapshot(&mut w)?;
        w.flush()?;
    }
    let mass_drift = (last.mass() - f0.mass()).abs() / f0.mass();
    ctx.write_json("vlasov.json", json!({ "t_final": traj.times.last(), "mass_drift": mass_drift, "flags": traj.flags }))?;
    if let Some(flag) = traj.flags.first() {
        return Ok(Status::Contaminated(flag.clone()));
    }
    Ok(Status::Completed)
}

fn sweep(ctx: &mut Ctx) -> Result<Status, CliError> {
    let scfg = sweep_config(ctx)?;
    let report = hbar_sweep(&scfg)?;
    for run in &report.runs {
        let rows: Vec<Value> = run
            .ledger
            .iter()
            .map(|(t, l)| {
                let mut row = serde_json::Map::new();
                row.insert("t".into(), json!(t));
                for (k, v) in l.entries() {
                    row.insert(k.clone(), json!(v));
                }
                Value::Object(row)
            })
            .collect();
        write_ledger_rows(ctx, &format!("ledger_hbar_{}.csv", run.hbar), &rows)?;
    }
    let mut body = serde_json::to_value(&report)?;
    if let Value::Object(m) = &mut body {
        for run in m.get_mut("runs").and_then(Value::as_array_mut).into_iter().flatten() {
            if let Value::Object(r) = run {
                r.remove("ledger");
            }
        }
    }
    ctx.write_json("sweep.json", body)?;
    if report.tainted {
        return Ok(Status::Contaminated(report.flags.join("; ")));
    }
    if report.uniformity_constant > scfg.threshold {
        return Ok(Status::Failed(format!(
            "uniformity ratio {:.4} exceeds {}",
            report.uniformity_constant, scfg.threshold
        )));
    }
    Ok(Status::Completed)
}

fn write_ledger_rows(ctx: &mut Ctx, name: &str, rows: &[Value]) -> Result<(), CliError> {
    if !ctx.cfg.wants(Format::Csv) {
        return Ok(());
    }
    let path = ctx.path(name);
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    header.extend(DENSITY_TERMS.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for r in rows {
        let rec: Vec<String> = header.iter().map(|k| r.get(k).map(|v| v.to_string()).unwrap_or_default()).collect();
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn check_identities(ctx: &mut Ctx) -> Result<Status, CliError> {
    let report = identity_suite(&ctx.cfg.identity_config(), Suite::All)?;
    ctx.write_json("identities.json", serde_json::to_value(&report)?)?;
    for r in &report.results {
        ctx.say(format!(
            "  {:<28} {} {:?}",
            r.name,
            if !r.asserted { "reported" } else if r.passed { "pass" } else { "FAIL" },
            r.residuals
        ));
    }
    if report.passed {
        Ok(Status::Completed)
    } else {
        let failed: Vec<&str> =
            report.results.iter().filter(|r| r.asserted && !r.passed).map(|r| r.name.as_str()).collect();
        Ok(Status::Failed(format!("identities failed: {}", failed.join(", "))))
    }
}

fn fit_decay(ctx: &mut Ctx) -> Result<Status, CliError> {
    let scfg = sweep_config(ctx)?;
    let (run, _) = run_member(&scfg, ctx.cfg.physics.hbar)?;
    let rows: Vec<Value> = run
        .ledger
        .iter()
        .map(|(t, l)| {
            let mut row = serde_json::Map::new();
            row.insert("t".into(), json!(t));
            for (k, v) in l.entries() {
                row.insert(k.clone(), json!(v));
            }
            Value::Object(row)
        })
        .collect();
    write_ledger_rows(ctx, "ledger.csv", &rows)?;
    ctx.say(format!("  exponent {:.4}, constant {:.4}", run.fit.exponent, run.fit.constant));
    let flags = run.flags.clone();
    let mut body = serde_json::to_value(&run)?;
    if let Value::Object(m) = &mut body {
        m.remove("ledger");
    }
    ctx.write_json("fit.json", body)?;
    if let Some(f) = flags.iter().find(|f| f.starts_with("boundary")) {
        return Ok(Status::Contaminated(f.clone()));
    }
    Ok(Status::Completed)
}

fn quantize(ctx: &mut Ctx) -> Result<Status, CliError> {
    let cfg = ctx.cfg;
    let grid = grid_of(cfg)?;
    let hbar = cfg.physics.hbar;
    let a = initial_datum(ctx, &grid, hbar)?;
    let ledger = x_sigma_norm(&a, cfg.physics.sigma)?;
    let mass = a.phase_volume() * a.trace().re;
    let seed: Option<GaussianSeed> = (cfg.data.seed == SeedSource::Toeplitz).then(|| cfg.gaussian_seed());
    ctx.write_operator("operator.bin", &a)?;
    ctx.write_json(
        "quantize.json",
        json!({
            "hbar": hbar,
            "convention": format!("{:?}", ctx.convention()),
            "seed": seed,
            "rank": a.rank(),
            "trace_mass": mass,
            "relative_min_eigenvalue": relative_min_eigenvalue(&a),
            "x_sigma": ledger,
            "x_sigma_total": ledger.total(),
        }),
    )?;
    ctx.say(format!("  rank {}, trace mass {mass:.12}", a.rank()));
    Ok(Status::Completed)
}

fn dispersive(ctx: &mut Ctx) -> Result<Status, CliError> {
    let cfg = ctx.cfg;
    let hbar = cfg.physics.hbar;
    let d = &cfg.dispersive;
    let probe = Grid::new(1, d.n, d.len)?;
    let width = d.width_cells * probe.dx();
    let free = dispersive_constant(&probe, &d.times, hbar, None, width)?;
    let mut body = json!({ "free": free, "free_target": (2.0 * std::f64::consts::PI).powf(-0.5) });
    if cfg.physics.kappa != 0.0 {
        if cfg.grid.dim != 1 {
            return Err(CliError::Config("phase-corrected dispersive estimate is one-dimensional".into()));
        }
        let grid = grid_of(cfg)?;
        let interaction = Interaction::new(cfg.potential(), &grid)?;
        let gamma0 = initial_datum(ctx, &grid, hbar)?;
        let opts = HartreeOptions {
            dt: cfg.time.dt,
            horizon: cfg.time.horizon,
            stride: cfg.time.stride,
            ..HartreeOptions::default()
        };
        let traj = hartree_evolve(&gamma0, &interaction, &opts)?;
        if let Some((t, f)) = traj.contamination {
            return Ok(Status::Contaminated(format!("boundary contamination at t = {t} ({f:e})")));
        }
        let stamps: Vec<_> = traj.stamps.iter().filter(|s| s.t >= d.t_min).collect();
        let times: Vec<f64> = stamps.iter().map(|s| s.t).collect();
        let phases = stamps.iter().map(|s| resample_phase(&s.psi, &probe)).collect::<schl::Result<Vec<_>>>()?;
        let with = dispersive_constant(&probe, &times, hbar, Some(&phases), width)?;
        let without = dispersive_constant(&probe, &times, hbar, None, width)?;
        body["interacting"] = json!({
            "with_phase": with,
            "without_phase": without,
            "ratio": with.constant / without.constant,
        });
    }
    ctx.say(format!("  free constant {:.6}", free.constant));
    ctx.write_json("dispersive.json", body)?;
    Ok(Status::Completed)
}
