//! File formats: binary path dumps, snapshot tables and small helpers.
//!
//! Path dump layout (all little-endian):
//!
//! ```text
//! offset  size  field
//!      0     8  magic "KSPATHS\0"
//!      8     4  format version (u32, currently 1)
//!     12     4  flags (u32; bit 0: increments block present)
//!     16     8  N (u64)
//!     24     8  n_steps (u64)
//!     32     8  dt (f64)
//!     40     8  seed (u64)
//!     48        positions, N·(n_steps+1) f64, particle-major
//!               increments, N·n_steps f64, particle-major (if flagged)
//! ```
//!
//! A plain-text `.txt` sidecar repeats the header fields.
//!
//! Snapshot dumps follow the same conventions with magic `"KSSNAPS\0"`:
//! version (u32), flags (u32, unused), `n_cells` (u64), `n_times` (u64),
//! `x_min`, `x_max` (f64), then the times, then `n_times` rows of `ρ`, then
//! `n_times` rows of `c`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::ensure;
use crate::grid::TimeGrid;
use crate::particles::PathEnsemble;
use crate::pde::PdeSolution;
use crate::{Error, Result};

pub const PATH_MAGIC: &[u8; 8] = b"KSPATHS\0";
pub const PATH_VERSION: u32 = 1;
const FLAG_INCREMENTS: u32 = 1;
const HEADER_LEN: usize = 48;

fn put_f64s(w: &mut impl Write, xs: &[f64]) -> Result<()> {
    for x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

/// Serialises an ensemble in the path-dump layout.
pub fn encode_paths(ens: &PathEnsemble) -> Result<Vec<u8>> {
    ensure!(ens.is_complete(), State, "only complete ensembles can be written");
    let inc = ens.increments();
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * ens.positions().len() * 2);
    buf.extend_from_slice(PATH_MAGIC);
    buf.extend_from_slice(&PATH_VERSION.to_le_bytes());
    buf.extend_from_slice(&(if inc.is_some() { FLAG_INCREMENTS } else { 0 }).to_le_bytes());
    buf.extend_from_slice(&(ens.n_particles() as u64).to_le_bytes());
    buf.extend_from_slice(&(ens.grid().n_steps() as u64).to_le_bytes());
    buf.extend_from_slice(&ens.grid().dt().to_le_bytes());
    buf.extend_from_slice(&ens.seed().to_le_bytes());
    put_f64s(&mut buf, ens.positions())?;
    if let Some(inc) = inc {
        put_f64s(&mut buf, inc)?;
    }
    Ok(buf)
}

fn take<const L: usize>(bytes: &[u8], at: usize) -> [u8; L] {
    bytes[at..at + L].try_into().expect("length checked")
}

/// Parses a path dump.
pub fn decode_paths(bytes: &[u8]) -> Result<PathEnsemble> {
    ensure!(bytes.len() >= HEADER_LEN && &bytes[..8] == PATH_MAGIC, Config, "not a path dump");
    let version = u32::from_le_bytes(take(bytes, 8));
    ensure!(version == PATH_VERSION, Config, "unsupported path dump version {version}");
    let flags = u32::from_le_bytes(take(bytes, 12));
    let n = u64::from_le_bytes(take(bytes, 16)) as usize;
    let n_steps = u64::from_le_bytes(take(bytes, 24)) as usize;
    let dt = f64::from_le_bytes(take(bytes, 32));
    let seed = u64::from_le_bytes(take(bytes, 40));
    let grid = TimeGrid::new(dt, n_steps)?;
    let n_pos = n * (n_steps + 1);
    let n_inc = if flags & FLAG_INCREMENTS != 0 { n * n_steps } else { 0 };
    ensure!(
        bytes.len() == HEADER_LEN + 8 * (n_pos + n_inc),
        Config,
        "path dump has {} bytes, expected {}",
        bytes.len(),
        HEADER_LEN + 8 * (n_pos + n_inc)
    );
    let floats: Vec<f64> = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let (pos, inc) = floats.split_at(n_pos);
    let increments = (n_inc > 0).then(|| inc.to_vec());
    PathEnsemble::from_parts(n, grid, seed, pos.to_vec(), increments)
}

/// Plain-text description of a path dump.
pub fn paths_sidecar(ens: &PathEnsemble) -> String {
    format!(
        "format = KSPATHS\nversion = {PATH_VERSION}\nbyte_order = little_endian\nlayout = particle_major\n\
         n_particles = {}\nn_steps = {}\ndt = {:?}\nseed = {}\nincrements = {}\n",
        ens.n_particles(),
        ens.grid().n_steps(),
        ens.grid().dt(),
        ens.seed(),
        ens.has_increments()
    )
}

/// Writes `<path>` and its `<path>.txt` sidecar; returns the files written.
pub fn write_paths(path: &Path, ens: &PathEnsemble) -> Result<Vec<PathBuf>> {
    write_atomic(path, &encode_paths(ens)?)?;
    let side = sidecar_path(path);
    write_atomic(&side, paths_sidecar(ens).as_bytes())?;
    Ok(vec![path.to_path_buf(), side])
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".txt");
    PathBuf::from(s)
}

pub fn read_paths(path: &Path) -> Result<PathEnsemble> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    decode_paths(&bytes)
}

/// Writes through a temporary file in the same directory and renames it into
/// place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = BufWriter::new(File::create(&tmp)?);
        f.write_all(bytes)?;
        f.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Hex-encoded SHA-256 of a file.
pub fn sha256_file(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    let mut f = BufReader::new(File::open(path)?);
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Comma-separated table with a header row; floats use round-trip
/// formatting.
#[derive(Debug, Clone, Default)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self { header: header.iter().map(|s| s.as_ref().to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.render().as_bytes())
    }

    /// Parses a table written by [`Table::render`].
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| Error::Config("empty table".into()))?
            .split(',')
            .map(str::to_string)
            .collect();
        let mut t = Table { header, rows: Vec::new() };
        for line in lines.filter(|l| !l.is_empty()) {
            let row: Vec<String> = line.split(',').map(str::to_string).collect();
            ensure!(row.len() == t.header.len(), Config, "ragged table row: {line}");
            t.rows.push(row);
        }
        Ok(t)
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i].as_str()).collect())
    }
}

/// Round-trip float formatting.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// Snapshot table with columns `t,x,rho,c`, one row per cell and time.
pub fn snapshot_table(solution: &PdeSolution, every: usize) -> Table {
    let mut t = Table::new(&["t", "x", "rho", "c"]);
    for (k, s) in solution.snapshots.iter().enumerate() {
        if k % every.max(1) != 0 && k != solution.snapshots.len() - 1 {
            continue;
        }
        let grid = s.grid();
        for (i, (rho, c)) in s.rho.values().iter().zip(&s.c).enumerate() {
            t.push(vec![fmt_f64(s.time), fmt_f64(grid.center(i)), fmt_f64(*rho), fmt_f64(*c)]);
        }
    }
    t
}

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"KSSNAPS\0";

/// Serialises every `every`-th snapshot (and the last) in the binary
/// snapshot layout.
pub fn encode_snapshots(solution: &PdeSolution, every: usize) -> Result<Vec<u8>> {
    let picked: Vec<_> = solution
        .snapshots
        .iter()
        .enumerate()
        .filter(|(k, _)| k % every.max(1) == 0 || *k == solution.snapshots.len() - 1)
        .map(|(_, s)| s)
        .collect();
    let grid = *solution.snapshots[0].grid();
    let mut buf = Vec::new();
    buf.extend_from_slice(SNAPSHOT_MAGIC);
    buf.extend_from_slice(&PATH_VERSION.to_le_bytes());
    buf.extend_from_slice(&0u32.to_le_bytes());
    buf.extend_from_slice(&(grid.n_cells() as u64).to_le_bytes());
    buf.extend_from_slice(&(picked.len() as u64).to_le_bytes());
    buf.extend_from_slice(&grid.x_min().to_le_bytes());
    buf.extend_from_slice(&grid.x_max().to_le_bytes());
    put_f64s(&mut buf, &picked.iter().map(|s| s.time).collect::<Vec<_>>())?;
    for s in &picked {
        put_f64s(&mut buf, s.rho.values())?;
    }
    for s in &picked {
        put_f64s(&mut buf, &s.c)?;
    }
    Ok(buf)
}

/// Grid, snapshot times, densities and concentrations read back from a snapshot dump.
pub type DecodedSnapshots = (crate::grid::SpatialGrid, Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Snapshot times, densities and concentrations from a binary snapshot dump.
pub fn decode_snapshots(bytes: &[u8]) -> Result<DecodedSnapshots> {
    ensure!(bytes.len() >= HEADER_LEN && &bytes[..8] == SNAPSHOT_MAGIC, Config, "not a snapshot dump");
    let n_cells = u64::from_le_bytes(take(bytes, 16)) as usize;
    let n_times = u64::from_le_bytes(take(bytes, 24)) as usize;
    let grid = crate::grid::SpatialGrid::new(f64::from_le_bytes(take(bytes, 32)), f64::from_le_bytes(take(bytes, 40)), n_cells)?;
    ensure!(bytes.len() == HEADER_LEN + 8 * n_times * (1 + 2 * n_cells), Config, "snapshot dump has the wrong length");
    let floats: Vec<f64> = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let (times, rest) = floats.split_at(n_times);
    let (rho, c) = rest.split_at(n_times * n_cells);
    let rows = |v: &[f64]| v.chunks(n_cells).map(<[f64]>::to_vec).collect::<Vec<_>>();
    Ok((grid, times.to_vec(), rows(rho), rows(c)))
}
