//! Reproducible experiment commands.
//!
//! Each command reads a TOML configuration (defaults, then a file, then
//! `key=value` overrides, later sources winning), validates it, writes its
//! outputs into a directory and finishes by atomically writing
//! `manifest.toml`: the effective configuration, seed, code version,
//! timestamps and a SHA-256 for every output file. [`verify_run`] re-runs a
//! manifest and compares checksums.
//!
//! Exit codes: 0 pass, 1 check failure, 2 configuration error, 3 numerical
//! instability.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{chaos_replica, l2_decay_snapshots, ChaosConfig, ChaosReport, ReplicaResult};
use crate::error::ensure;
use crate::grid::{SpatialGrid, TimeGrid};
use crate::initial::InitialLaw;
use crate::io::{self, fmt_f64, Table};
use crate::kernel::{kernel_eval, kernel_lp_norm, kernel_time_integral, KernelParams, SlabCount};
use crate::particles::{brownian_reference, simulate_counted, simulate_partial_driftless, SimulationConfig};
use crate::pde::{pde_solve, DensityGrid};
use crate::quadrature;
use crate::rng::CounterRng;
use crate::stats::log_log_slope;
use crate::stochastic::{
    exp_moment_scan, girsanov_mc, novikov_probe, window_scaling, Estimate, ExpMomentConfig, GirsanovConfig,
    WindowEstimator,
};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.toml";
pub const ENV_WORKERS: &str = "KSP_WORKERS";
pub const ENV_OUTPUT_DIR: &str = "KSP_OUTPUT_DIR";

/// The experiment commands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    KernelCheck,
    Simulate,
    Pde,
    Chaos,
    Stochastic,
    Bench,
}

impl Command {
    pub const ALL: [Command; 6] =
        [Command::KernelCheck, Command::Simulate, Command::Pde, Command::Chaos, Command::Stochastic, Command::Bench];

    pub fn name(self) -> &'static str {
        match self {
            Command::KernelCheck => "kernel-check",
            Command::Simulate => "simulate",
            Command::Pde => "pde",
            Command::Chaos => "chaos",
            Command::Stochastic => "stochastic",
            Command::Bench => "bench",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }

    /// The default configuration as a TOML table.
    pub fn default_config(self) -> toml::Table {
        fn table<T: Serialize>(v: &T) -> toml::Table {
            toml::Table::try_from(v).expect("default configs serialise")
        }
        match self {
            Command::KernelCheck => table(&KernelCheckConfig::default()),
            Command::Simulate => table(&SimulateConfig::default()),
            Command::Pde => table(&PdeConfig::default()),
            Command::Chaos => table(&ChaosRunConfig::default()),
            Command::Stochastic => table(&StochasticConfig::default()),
            Command::Bench => table(&BenchConfig::default()),
        }
    }
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    CheckFailed,
    Unstable,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::CheckFailed => 1,
            Status::Unstable => 3,
        }
    }
}

/// Process exit code for an error.
pub fn error_exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Domain(_) => 2,
        Error::Instability(_) => 3,
        Error::State(_) | Error::Io(_) => 1,
    }
}

fn schema(v: u32) -> Result<()> {
    ensure!(v == SCHEMA_VERSION, Config, "unsupported schema_version {v}, expected {SCHEMA_VERSION}");
    Ok(())
}

fn one() -> u32 {
    SCHEMA_VERSION
}

// ---------------------------------------------------------------- configs

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelCheckConfig {
    #[serde(default = "one")]
    pub schema_version: u32,
    pub lambda: f64,
    pub p_values: Vec<f64>,
    pub times: Vec<f64>,
    pub slope_tolerance: f64,
    /// Random `(x, a, b)` triples for the time-integral check.
    pub n_random: usize,
    pub rel_tolerance: f64,
    pub seed: u64,
}

impl Default for KernelCheckConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            lambda: 0.0,
            p_values: vec![1.0, 2.0, 4.0],
            times: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            slope_tolerance: 1e-3,
            n_random: 1000,
            rel_tolerance: 1e-10,
            seed: 1,
        }
    }
}

impl KernelCheckConfig {
    pub fn validate(&self) -> Result<()> {
        schema(self.schema_version)?;
        ensure!(self.lambda >= 0.0 && self.lambda.is_finite(), Config, "lambda must be >= 0");
        ensure!(!self.p_values.is_empty(), Config, "p_values must not be empty");
        for &p in &self.p_values {
            ensure!(p.is_finite() && p >= 1.0, Config, "p must satisfy 1 <= p < inf, got {p}");
        }
        ensure!(self.times.len() >= 2, Config, "need at least two times for a slope");
        ensure!(self.times.iter().all(|&t| t > 0.0 && t.is_finite()), Config, "times must be > 0");
        ensure!(self.slope_tolerance > 0.0 && self.rel_tolerance > 0.0, Config, "tolerances must be > 0");
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default = "one")]
    pub schema_version: u32,
    pub simulation: SimulationConfig,
    /// Size of the driftless block; absent for the full system.
    #[serde(default)]
    pub driftless: Option<usize>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        let grid = TimeGrid::new(0.01, 100).expect("valid grid");
        Self {
            schema_version: SCHEMA_VERSION,
            simulation: SimulationConfig::new(64, grid, InitialLaw::default(), KernelParams::default(), 1),
            driftless: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeConfig {
    #[serde(default = "one")]
    pub schema_version: u32,
    pub initial: InitialLaw,
    pub params: KernelParams,
    pub half_width: f64,
    pub h: f64,
    /// Snapshot spacing (internal steps are refined to `≤ h²`).
    pub dt: f64,
    pub n_steps: usize,
    #[serde(default)]
    pub max_dt: Option<f64>,
    /// Write every `snapshot_every`-th snapshot (and the last).
    pub snapshot_every: usize,
    pub mass_tolerance: f64,
    pub heat_tolerance: f64,
}

impl Default for PdeConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            initial: InitialLaw::default(),
            params: KernelParams::default(),
            half_width: 12.0,
            h: 0.02,
            dt: 0.01,
            n_steps: 100,
            max_dt: None,
            snapshot_every: 10,
            mass_tolerance: 1e-8,
            heat_tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChaosRunConfig {
    #[serde(default = "one")]
    pub schema_version: u32,
    pub n_values: Vec<usize>,
    pub replicas: usize,
    pub times: Vec<f64>,
    pub half_width: f64,
    pub h: f64,
    /// Particle settings; `n_particles` is replaced by each entry of
    /// `n_values` and `seed` is the base of the replica seeds.
    pub simulation: SimulationConfig,
}

impl Default for ChaosRunConfig {
    fn default() -> Self {
        let grid = TimeGrid::new(0.01, 50).expect("valid grid");
        Self {
            schema_version: SCHEMA_VERSION,
            n_values: vec![16, 32, 64],
            replicas: 8,
            times: vec![0.1, 0.25, 0.5],
            half_width: 10.0,
            h: 0.02,
            simulation: SimulationConfig::new(1, grid, InitialLaw::default(), KernelParams::default(), 1),
        }
    }
}

impl ChaosRunConfig {
    pub fn study(&self) -> ChaosConfig {
        ChaosConfig {
            n_values: self.n_values.clone(),
            replicas: self.replicas,
            times: self.times.clone(),
            sim: self.simulation.clone(),
            half_width: self.half_width,
            h: self.h,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowTask {
    pub t1: f64,
    pub lengths: Vec<f64>,
    pub dt: f64,
    pub horizon: f64,
    #[serde(default)]
    pub start: f64,
    pub n_samples: usize,
    pub slope_range: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentTask {
    pub config: ExpMomentConfig,
    /// Ensemble sizes for the `1/N`-scaled scan.
    pub n_values: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NovikovTask {
    pub simulation: SimulationConfig,
    pub kappas: Vec<f64>,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StochasticConfig {
    #[serde(default = "one")]
    pub schema_version: u32,
    #[serde(default)]
    pub window: Option<WindowTask>,
    #[serde(default)]
    pub moments: Option<MomentTask>,
    #[serde(default)]
    pub girsanov: Option<GirsanovConfig>,
    #[serde(default)]
    pub novikov: Option<NovikovTask>,
}

impl Default for StochasticConfig {
    fn default() -> Self {
        let params = KernelParams::default();
        Self {
            schema_version: SCHEMA_VERSION,
            window: None,
            moments: Some(MomentTask {
                config: ExpMomentConfig {
                    alpha: 1.0,
                    scale_inv_n: None,
                    dt: 0.01,
                    n_steps: 50,
                    law: crate::stochastic::PathLaw::Brownian { start: 0.0 },
                    n_samples: 1000,
                    seed: 1,
                    params,
                },
                n_values: vec![8, 32, 128],
            }),
            girsanov: Some(GirsanovConfig {
                sim: SimulationConfig::new(
                    8,
                    TimeGrid::new(1.0 / 256.0, 64).expect("valid grid"),
                    InitialLaw::default(),
                    params,
                    1,
                ),
                r: 1,
                replicas: 1000,
            }),
            novikov: Some(NovikovTask {
                simulation: SimulationConfig::new(
                    4,
                    TimeGrid::new(1.0 / 64.0, 16).expect("valid grid"),
                    InitialLaw::default(),
                    params,
                    1,
                ),
                kappas: vec![0.1, 0.5],
                n_samples: 200,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    #[serde(default = "one")]
    pub schema_version: u32,
    pub n_values: Vec<usize>,
    pub dt: f64,
    pub n_steps: usize,
    pub initial: InitialLaw,
    pub params: KernelParams,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            n_values: vec![16, 32, 64, 128],
            dt: 0.01,
            n_steps: 100,
            initial: InitialLaw::default(),
            params: KernelParams::default(),
            seed: 1,
        }
    }
}

// ---------------------------------------------------------------- config loading

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies a `dotted.key=value` override; the value is read as TOML and
/// falls back to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not of the form key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    ensure!(parts.iter().all(|p| !p.is_empty()), Config, "bad override key `{key}`");
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{p}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

/// Defaults, then `file_text`, then `overrides`.
pub fn effective_config(cmd: Command, file_text: Option<&str>, overrides: &[String]) -> Result<toml::Table> {
    let mut table = cmd.default_config();
    if let Some(text) = file_text {
        let file: toml::Table = toml::from_str(text).map_err(|e| Error::Config(format!("malformed config: {e}")))?;
        merge(&mut table, file);
    }
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    Ok(table)
}

fn decode<T: DeserializeOwned>(table: &toml::Table) -> Result<T> {
    T::deserialize(toml::Value::Table(table.clone())).map_err(|e| Error::Config(format!("invalid config: {e}")))
}

// ---------------------------------------------------------------- manifest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    /// Path relative to the run directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
    /// Timing tables are excluded from reproducibility checks.
    pub deterministic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub command: Command,
    pub schema_version: u32,
    pub code_version: String,
    pub seed: u64,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub status: Status,
    pub exit_code: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run: RunInfo,
    pub config: toml::Table,
    pub outputs: Vec<OutputRecord>,
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("malformed manifest: {e}")))
    }
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

/// What a command produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub status: Status,
    pub manifest: RunManifest,
    /// Human-readable summary.
    pub summary: String,
}

struct Outputs<'a> {
    dir: &'a Path,
    files: Vec<(PathBuf, bool)>,
    summary: String,
    failed: bool,
    unstable: bool,
}

impl<'a> Outputs<'a> {
    fn new(dir: &'a Path) -> Self {
        Self { dir, files: Vec::new(), summary: String::new(), failed: false, unstable: false }
    }

    fn table(&mut self, name: &str, t: &Table) -> Result<()> {
        let p = self.dir.join(name);
        t.write(&p)?;
        self.files.push((p, true));
        Ok(())
    }

    fn timing(&mut self, name: &str, t: &Table) -> Result<()> {
        let p = self.dir.join(name);
        t.write(&p)?;
        self.files.push((p, false));
        Ok(())
    }

    fn bytes(&mut self, name: &str, b: &[u8]) -> Result<()> {
        let p = self.dir.join(name);
        io::write_atomic(&p, b)?;
        self.files.push((p, true));
        Ok(())
    }

    fn check(&mut self, checks: &mut Table, name: &str, value: f64, target: &str, pass: bool) {
        if !pass {
            self.failed = true;
        }
        let _ = writeln!(self.summary, "{} {name}: {value:.6e} (target {target})", if pass { "PASS" } else { "FAIL" });
        checks.push(vec![name.to_string(), fmt_f64(value), target.to_string(), pass.to_string()]);
    }
}

fn check_table() -> Table {
    Table::new(&["check", "value", "target", "pass"])
}

/// Resolves the worker count: flag, then `KSP_WORKERS`, then all cores.
pub fn resolve_workers(flag: Option<usize>) -> Option<usize> {
    flag.or_else(|| std::env::var(ENV_WORKERS).ok().and_then(|v| v.parse().ok())).filter(|&w| w > 0)
}

/// Resolves the output directory: flag, then `$KSP_OUTPUT_DIR/<command>`,
/// then `runs/<command>`.
pub fn resolve_output_dir(flag: Option<PathBuf>, cmd: Command) -> PathBuf {
    flag.unwrap_or_else(|| {
        let base = std::env::var_os(ENV_OUTPUT_DIR).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
        base.join(cmd.name())
    })
}

/// Runs `cmd` with an effective configuration table, writing into `dir`.
pub fn run(cmd: Command, config: &toml::Table, dir: &Path, workers: Option<usize>) -> Result<RunOutcome> {
    let started = unix_now();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    fs::create_dir_all(dir)?;
    let mut out = Outputs::new(dir);
    let (seed, echo) = pool.install(|| -> Result<(u64, toml::Table)> {
        match cmd {
            Command::KernelCheck => {
                let c: KernelCheckConfig = decode(config)?;
                c.validate()?;
                cmd_kernel_check(&c, &mut out)?;
                Ok((c.seed, toml::Table::try_from(&c).expect("serialisable")))
            }
            Command::Simulate => {
                let c: SimulateConfig = decode(config)?;
                schema(c.schema_version)?;
                cmd_simulate(&c, &mut out)?;
                Ok((c.simulation.seed, toml::Table::try_from(&c).expect("serialisable")))
            }
            Command::Pde => {
                let c: PdeConfig = decode(config)?;
                schema(c.schema_version)?;
                cmd_pde(&c, &mut out)?;
                Ok((0, toml::Table::try_from(&c).expect("serialisable")))
            }
            Command::Chaos => {
                let c: ChaosRunConfig = decode(config)?;
                schema(c.schema_version)?;
                cmd_chaos(&c, &mut out)?;
                Ok((c.simulation.seed, toml::Table::try_from(&c).expect("serialisable")))
            }
            Command::Stochastic => {
                let c: StochasticConfig = decode(config)?;
                schema(c.schema_version)?;
                cmd_stochastic(&c, &mut out)?;
                let seed = c.girsanov.as_ref().map_or(0, |g| g.sim.seed);
                Ok((seed, toml::Table::try_from(&c).expect("serialisable")))
            }
            Command::Bench => {
                let c: BenchConfig = decode(config)?;
                schema(c.schema_version)?;
                cmd_bench(&c, &mut out)?;
                Ok((c.seed, toml::Table::try_from(&c).expect("serialisable")))
            }
        }
    })?;
    let status = if out.failed {
        Status::CheckFailed
    } else if out.unstable {
        Status::Unstable
    } else {
        Status::Pass
    };
    let mut outputs = Vec::new();
    for (p, deterministic) in &out.files {
        outputs.push(OutputRecord {
            path: p.strip_prefix(dir).unwrap_or(p).to_string_lossy().into_owned(),
            sha256: io::sha256_file(p)?,
            bytes: fs::metadata(p)?.len(),
            deterministic: *deterministic,
        });
    }
    let manifest = RunManifest {
        run: RunInfo {
            command: cmd,
            schema_version: SCHEMA_VERSION,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            started_unix: started,
            finished_unix: unix_now(),
            status,
            exit_code: status.exit_code(),
        },
        config: echo,
        outputs,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Config(format!("manifest: {e}")))?;
    io::write_atomic(&dir.join(MANIFEST), text.as_bytes())?;
    Ok(RunOutcome { status, manifest, summary: out.summary })
}

/// Outcome of re-running a manifest.
#[derive(Debug, Clone)]
pub struct VerifyReport {
    /// `(path, reproduced)` for every deterministic output.
    pub files: Vec<(String, bool)>,
}

impl VerifyReport {
    pub fn all_match(&self) -> bool {
        self.files.iter().all(|(_, ok)| *ok)
    }
}

/// Re-runs the manifest in `dir` into `scratch` and compares checksums of the
/// deterministic outputs.
pub fn verify_run(dir: &Path, scratch: &Path, workers: Option<usize>) -> Result<VerifyReport> {
    let m = RunManifest::read(dir)?;
    let again = run(m.run.command, &m.config, scratch, workers)?;
    let files = m
        .outputs
        .iter()
        .filter(|o| o.deterministic)
        .map(|o| {
            let other = again.manifest.outputs.iter().find(|p| p.path == o.path);
            (o.path.clone(), other.is_some_and(|p| p.sha256 == o.sha256))
        })
        .collect();
    Ok(VerifyReport { files })
}

// ---------------------------------------------------------------- commands

fn cmd_kernel_check(c: &KernelCheckConfig, out: &mut Outputs) -> Result<()> {
    let params = KernelParams::new(c.lambda, 1.0)?;
    let mut checks = check_table();
    let mut norms = Table::new(&["p", "t", "norm"]);
    for &p in &c.p_values {
        let mut ys = Vec::new();
        for &t in &c.times {
            let n = kernel_lp_norm(t, p, &params)?;
            norms.push(vec![fmt_f64(p), fmt_f64(t), fmt_f64(n)]);
            ys.push(n * (c.lambda * t).exp());
        }
        let slope = log_log_slope(&c.times, &ys);
        let expected = -(1.0 - 1.0 / (2.0 * p));
        out.check(
            &mut checks,
            &format!("norm_slope_p{p}"),
            slope,
            &format!("{expected}±{}", c.slope_tolerance),
            (slope - expected).abs() <= c.slope_tolerance,
        );
    }
    let rng = CounterRng::new(c.seed);
    let mut worst: f64 = 0.0;
    for i in 0..c.n_random {
        let u = rng.uniforms(0, i as u64);
        let sign = if u[3] < 0.5 { -1.0 } else { 1.0 };
        let x = sign * (0.01 + 2.99 * u[0]);
        let a = 2.0 * u[1];
        let b = a + 0.05 + 1.95 * u[2];
        let closed = kernel_time_integral(x, a, b, &params)?;
        let lambda = c.lambda;
        let oracle = quadrature::integrate(|s| kernel_eval(s, x, &KernelParams { lambda, chi: 1.0 }).unwrap_or(0.0), a, b, 0.0, 1e-14);
        worst = worst.max((closed - oracle).abs() / oracle.abs());
    }
    out.check(&mut checks, "time_integral_rel_error", worst, &format!("<{}", c.rel_tolerance), worst < c.rel_tolerance);
    out.table("kernel_norms.csv", &norms)?;
    out.table("kernel_check.csv", &checks)
}

fn cmd_simulate(c: &SimulateConfig, out: &mut Outputs) -> Result<()> {
    let sim = &c.simulation;
    sim.validate()?;
    let (ens, count) = match c.driftless {
        Some(r) => (simulate_partial_driftless(r, sim)?, SlabCount::default()),
        None => simulate_counted(sim)?,
    };
    let mut files = io::write_paths(&out.dir.join("paths.bin"), &ens)?;
    out.files.extend(files.drain(..).map(|p| (p, true)));
    let fin = ens.final_positions();
    let mut t = Table::new(&["particle", "x_final"]);
    for (i, x) in fin.iter().enumerate() {
        t.push(vec![i.to_string(), fmt_f64(*x)]);
    }
    out.table("final_positions.csv", &t)?;
    let (mean, _) = crate::stats::mean_and_se(&fin);
    let mut s = Table::new(&["metric", "value"]);
    s.push(vec!["n_particles".into(), sim.n_particles.to_string()]);
    s.push(vec!["mean_final".into(), fmt_f64(mean)]);
    s.push(vec!["slabs_evaluated".into(), count.evaluated.to_string()]);
    s.push(vec!["slabs_skipped".into(), count.skipped.to_string()]);
    out.table("summary.csv", &s)?;
    let _ = writeln!(out.summary, "simulated N={} for {} steps", sim.n_particles, sim.n_steps);
    if sim.params.is_decoupled() {
        let mut checks = check_table();
        let same = brownian_reference(sim)?.positions() == ens.positions();
        out.check(&mut checks, "matches_brownian_reference", if same { 1.0 } else { 0.0 }, "bit-exact", same);
        out.table("checks.csv", &checks)?;
    }
    Ok(())
}

fn cmd_pde(c: &PdeConfig, out: &mut Outputs) -> Result<()> {
    schema(c.schema_version)?;
    ensure!(c.snapshot_every >= 1, Config, "snapshot_every must be >= 1");
    let grid = SpatialGrid::symmetric(c.half_width, c.h)?;
    let times = TimeGrid::new(c.dt, c.n_steps)?;
    let sol = pde_solve(&c.initial, grid, times, &c.params, c.max_dt)?;
    out.table("snapshots.csv", &io::snapshot_table(&sol, c.snapshot_every))?;
    out.bytes("snapshots.bin", &io::encode_snapshots(&sol, c.snapshot_every)?)?;
    let mut checks = check_table();
    out.check(&mut checks, "mass_drift", sol.max_mass_drift, &format!("<={}", c.mass_tolerance), sol.max_mass_drift <= c.mass_tolerance);
    out.check(&mut checks, "max_clipped_mass", sol.max_clipped_mass, "<=1e-10", sol.max_clipped_mass <= 1e-10);
    if c.initial.is_symmetric() {
        let asym = sol.snapshots.iter().map(|s| s.rho.asymmetry()).fold(0.0, f64::max);
        out.check(&mut checks, "max_asymmetry", asym, "<1e-10", asym < 1e-10);
    }
    if c.params.is_decoupled() {
        let fin = sol.final_state();
        let t = fin.time;
        let err = (0..grid.n_cells())
            .map(|i| (fin.rho.values()[i] - c.initial.convolved_pdf(grid.center(i), t)).abs())
            .fold(0.0, f64::max);
        out.check(&mut checks, "heat_max_error", err, &format!("<{}", c.heat_tolerance), err < c.heat_tolerance);
    }
    let ts: Vec<f64> = (1..=c.n_steps).map(|k| times.time(k)).collect();
    let decay = l2_decay_snapshots(&sol, &ts)?;
    let last = decay.last().map_or(0.0, |d| d.scaled_norm);
    let peak = decay.iter().map(|d| d.scaled_norm).fold(0.0, f64::max);
    out.check(&mut checks, "decay_ratio", peak / last, "<=3", peak <= 3.0 * last);
    let mut d = Table::new(&["t", "scaled_l2_norm"]);
    for p in &decay {
        d.push(vec![fmt_f64(p.t), fmt_f64(p.scaled_norm)]);
    }
    out.table("l2_decay.csv", &d)?;
    out.table("report.csv", &checks)?;
    let _ = writeln!(out.summary, "pde: {} snapshots, {} substeps each", sol.snapshots.len(), sol.substeps);
    Ok(())
}

fn replica_file(dir: &Path, n: usize, q: usize) -> PathBuf {
    dir.join("replicas").join(format!("n{n}_r{q}.toml"))
}

fn cmd_chaos(c: &ChaosRunConfig, out: &mut Outputs) -> Result<()> {
    let study = c.study();
    study.validate()?;
    let reference = study.reference()?;
    let jobs: Vec<(usize, usize)> = c.n_values.iter().flat_map(|&n| (0..c.replicas).map(move |q| (n, q))).collect();
    let dir = out.dir.to_path_buf();
    let results = jobs
        .par_iter()
        .map(|&(n, q)| {
            let path = replica_file(&dir, n, q);
            let seed = study.replica_seed(n, q);
            if let Ok(text) = fs::read_to_string(&path) {
                if let Ok(r) = toml::from_str::<ReplicaResult>(&text) {
                    if r.seed == seed && r.n == n && r.replica == q && r.w1.len() == c.times.len() {
                        return Ok((r, path));
                    }
                }
            }
            let r = chaos_replica(&study, &reference, n, q)?;
            let text = toml::to_string(&r).map_err(|e| Error::Config(format!("replica file: {e}")))?;
            io::write_atomic(&path, text.as_bytes())?;
            Ok((r, path))
        })
        .collect::<Result<Vec<_>>>()?;
    for (_, p) in &results {
        out.files.push((p.clone(), true));
    }
    let rows: Vec<ReplicaResult> = results.into_iter().map(|(r, _)| r).collect();
    let report = ChaosReport::aggregate(&study, &reference, &rows)?;
    let mut w = Table::new(&["n", "t", "w1_mean", "w1_se", "replicas"]);
    for (a, &n) in report.n_values.iter().enumerate() {
        for (b, &t) in report.times.iter().enumerate() {
            w.push(vec![n.to_string(), fmt_f64(t), fmt_f64(report.w1_mean[a][b]), fmt_f64(report.w1_se[a][b]), report.replicas.to_string()]);
        }
    }
    out.table("chaos_w1.csv", &w)?;
    let mut f = Table::new(&["t", "slope"]);
    for (t, s) in report.times.iter().zip(&report.fit) {
        f.push(vec![fmt_f64(*t), fmt_f64(*s)]);
    }
    out.table("chaos_fit.csv", &f)?;
    let mut d = Table::new(&["t", "scaled_l2_norm"]);
    for p in &report.l2_decay {
        d.push(vec![fmt_f64(p.t), fmt_f64(p.scaled_norm)]);
    }
    out.table("chaos_decay.csv", &d)?;
    let mut checks = check_table();
    let last = report.times.len() - 1;
    let dec = report.strictly_decreasing(last, 2.0);
    out.check(&mut checks, "w1_decreasing_in_n", report.fit[last], "strict decrease beyond 2 SE", dec);
    out.table("checks.csv", &checks)?;
    Ok(())
}

fn estimate_row(t: &mut Table, task: &str, label: &str, e: &Estimate) {
    t.push(vec![
        task.into(),
        label.into(),
        fmt_f64(e.mean),
        fmt_f64(e.std_error),
        e.n.to_string(),
        fmt_f64(e.max_exponent),
        fmt_f64(e.max_weight_fraction),
        e.unstable.to_string(),
    ]);
}

fn cmd_stochastic(c: &StochasticConfig, out: &mut Outputs) -> Result<()> {
    let mut est = Table::new(&["task", "label", "estimate", "std_error", "n", "max_exponent", "max_weight_fraction", "unstable"]);
    let mut checks = check_table();
    if let Some(w) = &c.window {
        let grid = TimeGrid::with_horizon(w.horizon, w.dt)?;
        let x = vec![0.0; grid.n_steps() + 1];
        let estimator = WindowEstimator::new(grid, KernelParams::default(), w.start);
        let (ests, slope) = window_scaling(&estimator, w.t1, &w.lengths, &x, w.n_samples, 1)?;
        for (l, e) in w.lengths.iter().zip(&ests) {
            est.push(vec![
                "window".into(),
                format!("len={l}"),
                fmt_f64(e.mean),
                fmt_f64(e.std_error),
                e.n.to_string(),
                "".into(),
                "".into(),
                "false".into(),
            ]);
        }
        let [lo, hi] = w.slope_range;
        out.check(&mut checks, "window_slope", slope, &format!("[{lo},{hi}]"), (lo..=hi).contains(&slope));
    }
    if let Some(m) = &c.moments {
        let ests = exp_moment_scan(&m.config, &m.n_values)?;
        for (n, e) in m.n_values.iter().zip(&ests) {
            estimate_row(&mut est, "moments", &format!("N={n}"), e);
            out.unstable |= e.unstable;
        }
        let mono = ests.windows(2).all(|p| p[1].mean <= p[0].mean + 2.0 * p[0].std_error.hypot(p[1].std_error));
        out.check(&mut checks, "moments_nonincreasing_in_n", ests.last().map_or(0.0, |e| e.mean), "nonincreasing within 2 SE", mono);
    }
    if let Some(g) = &c.girsanov {
        let e = girsanov_mc(g)?;
        estimate_row(&mut est, "girsanov", &format!("N={},r={}", g.sim.n_particles, g.r), &e);
        out.unstable |= e.unstable;
        out.check(&mut checks, "girsanov_mean_is_one", e.mean, "1 within 3 SE", e.covers(1.0, 3.0));
    }
    if let Some(n) = &c.novikov {
        let ests = novikov_probe(&n.simulation, &n.kappas, n.n_samples)?;
        for (k, e) in n.kappas.iter().zip(&ests) {
            estimate_row(&mut est, "novikov", &format!("kappa={k}"), e);
            out.unstable |= e.unstable;
        }
        let mono = ests.windows(2).all(|p| p[1].mean >= p[0].mean);
        out.check(&mut checks, "novikov_nondecreasing_in_kappa", ests.last().map_or(0.0, |e| e.mean), "nondecreasing", mono);
    }
    if out.unstable {
        let _ = writeln!(out.summary, "WARNING at least one estimate is dominated by a single sample");
    }
    out.table("estimates.csv", &est)?;
    out.table("checks.csv", &checks)
}

fn cmd_bench(c: &BenchConfig, out: &mut Outputs) -> Result<()> {
    schema(c.schema_version)?;
    ensure!(!c.n_values.is_empty(), Config, "n_values must not be empty");
    let grid = TimeGrid::new(c.dt, c.n_steps)?;
    let mut det = Table::new(&["n", "slabs_total", "slabs_evaluated", "slabs_skipped", "max_final_diff"]);
    let mut timing = Table::new(&["n", "seconds_cutoff", "seconds_full", "ns_per_slab_cutoff", "ns_per_slab_full"]);
    let mut checks = check_table();
    let mut prev_full = 0.0;
    let mut monotone = true;
    let mut worst: f64 = 0.0;
    for &n in &c.n_values {
        let mut sim = SimulationConfig::new(n, grid, c.initial, c.params, c.seed);
        let t0 = Instant::now();
        let (on, cnt_on) = simulate_counted(&sim)?;
        let s_on = t0.elapsed().as_secs_f64();
        sim.cutoff = false;
        let t1 = Instant::now();
        let (off, cnt_off) = simulate_counted(&sim)?;
        let s_off = t1.elapsed().as_secs_f64();
        let diff = on
            .final_positions()
            .iter()
            .zip(off.final_positions())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst = worst.max(diff);
        monotone &= s_off >= prev_full;
        prev_full = s_off;
        det.push(vec![
            n.to_string(),
            cnt_off.evaluated.to_string(),
            cnt_on.evaluated.to_string(),
            cnt_on.skipped.to_string(),
            fmt_f64(diff),
        ]);
        timing.push(vec![
            n.to_string(),
            format!("{s_on:.6}"),
            format!("{s_off:.6}"),
            format!("{:.3}", s_on * 1e9 / cnt_on.evaluated.max(1) as f64),
            format!("{:.3}", s_off * 1e9 / cnt_off.evaluated.max(1) as f64),
        ]);
    }
    out.check(&mut checks, "cutoff_final_diff", worst, "<1e-12", worst < 1e-12);
    let _ = writeln!(out.summary, "{} timing monotone in N: {monotone}", if monotone { "INFO" } else { "WARN" });
    out.table("bench.csv", &det)?;
    out.table("checks.csv", &checks)?;
    out.timing("timing.csv", &timing)
}

/// The reference density used by the chaos study, for callers that want to
/// compare against other estimators.
pub fn chaos_reference_density(c: &ChaosRunConfig, t: f64) -> Result<DensityGrid> {
    let study = c.study();
    let sol = study.reference()?;
    let k = sol
        .times
        .index_of(t)
        .ok_or_else(|| Error::Domain(format!("time {t} is not on the simulation grid")))?;
    Ok(sol.snapshot(k).rho.clone())
}
