//! CSV and binary artifact emission: diagnostics tables, sweep tables,
//! field snapshots, and run manifests.
//!
//! All decimal output uses 17 significant digits so that text artifacts
//! round-trip 64-bit floats exactly; all line endings are LF.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::diagnostics::DiagnosticRecord;
use crate::grid::{make_grid, Complex64, Field, GridError};
use crate::limits::SweepResult;

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"CGLF";
pub const SNAPSHOT_VERSION: u32 = 1;

pub const DIAGNOSTICS_HEADER: &str =
    "t,mass,kinetic,potential,energy,hi_potential,lap,cross,grad_flow_sq,h2,h3";
pub const SWEEP_HEADER: &str = "theta,gap,sup_h1,sup_l2";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: bad magic bytes (not a snapshot file)")]
    BadMagic { path: String },
    #[error("{path}: snapshot version {found}, expected {expected}")]
    VersionMismatch {
        path: String,
        found: u32,
        expected: u32,
    },
    #[error("{path}: truncated payload: expected {expected} bytes of samples, found {found}")]
    Truncated {
        path: String,
        expected: usize,
        found: usize,
    },
    #[error("{path}: malformed CSV at line {line}: {message}")]
    MalformedCsv {
        path: String,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Grid(#[from] GridError),
}

fn io_err(path: &Path, source: std::io::Error) -> IoError {
    IoError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Write the per-sample diagnostics ledger.
pub fn write_diagnostics_csv(
    records: &[DiagnosticRecord],
    path: &Path,
) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?);
    let mut res = writeln!(w, "{DIAGNOSTICS_HEADER}");
    for r in records {
        res = res.and_then(|_| {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.t,
                r.mass,
                r.kinetic,
                r.potential,
                r.energy,
                r.hi_potential,
                r.lap,
                r.cross,
                r.grad_flow_sq,
                r.h2,
                r.h3
            )
        });
    }
    res.and_then(|_| w.flush()).map_err(|e| io_err(path, e))
}

/// Read back a diagnostics CSV written by [`write_diagnostics_csv`].
pub fn read_diagnostics_csv(path: &Path) -> Result<Vec<DiagnosticRecord>, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let bad = |line: usize, message: String| IoError::MalformedCsv {
        path: path.display().to_string(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == DIAGNOSTICS_HEADER => {}
        other => {
            return Err(bad(
                1,
                format!("expected header `{DIAGNOSTICS_HEADER}`, got {other:?}"),
            ))
        }
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(bad(line_no, format!("expected 11 fields, got {}", fields.len())));
        }
        let mut vals = [0.0f64; 11];
        for (slot, field) in vals.iter_mut().zip(&fields) {
            *slot = field
                .parse()
                .map_err(|_| bad(line_no, format!("not a number: `{field}`")))?;
        }
        records.push(DiagnosticRecord {
            t: vals[0],
            mass: vals[1],
            kinetic: vals[2],
            potential: vals[3],
            energy: vals[4],
            hi_potential: vals[5],
            lap: vals[6],
            cross: vals[7],
            grad_flow_sq: vals[8],
            h2: vals[9],
            h3: vals[10],
        });
    }
    Ok(records)
}

/// Write the per-angle sweep summary.
pub fn write_sweep_csv(sweep: &SweepResult, path: &Path) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?);
    let mut res = writeln!(w, "{SWEEP_HEADER}");
    for &(theta, gap, sup_h1, sup_l2) in &sweep.points {
        res = res.and_then(|_| {
            writeln!(w, "{theta:.16e},{gap:.16e},{sup_h1:.16e},{sup_l2:.16e}")
        });
    }
    res.and_then(|_| w.flush()).map_err(|e| io_err(path, e))
}

/// Snapshot header fields alongside the raw samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotMeta {
    pub theta: f64,
    pub t: f64,
    pub mu: i8,
}

/// Binary field snapshot: magic `CGLF`, version, d, n (u32 LE), then L,
/// theta, t (f64 LE), mu (i8), then `n^d` interleaved (re, im) f64 LE
/// samples in row-major order. Header length before samples: 41 bytes.
pub fn write_snapshot(field: &Field, meta: &SnapshotMeta, path: &Path) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?);
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
        w.write_all(&(field.grid.d as u32).to_le_bytes())?;
        w.write_all(&(field.grid.n as u32).to_le_bytes())?;
        w.write_all(&field.grid.length.to_le_bytes())?;
        w.write_all(&meta.theta.to_le_bytes())?;
        w.write_all(&meta.t.to_le_bytes())?;
        w.write_all(&meta.mu.to_le_bytes())?;
        for v in &field.values {
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
        w.flush()
    };
    write(&mut w).map_err(|e| io_err(path, e))
}

/// Exact inverse of [`write_snapshot`].
pub fn read_snapshot(path: &Path) -> Result<(Field, SnapshotMeta), IoError> {
    let mut r = BufReader::new(File::open(path).map_err(|e| io_err(path, e))?);
    let mut header = [0u8; 41];
    r.read_exact(&mut header).map_err(|_| IoError::Truncated {
        path: path.display().to_string(),
        expected: 41,
        found: 0,
    })?;
    if &header[0..4] != SNAPSHOT_MAGIC {
        return Err(IoError::BadMagic {
            path: path.display().to_string(),
        });
    }
    let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(header[o..o + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != SNAPSHOT_VERSION {
        return Err(IoError::VersionMismatch {
            path: path.display().to_string(),
            found: version,
            expected: SNAPSHOT_VERSION,
        });
    }
    let d = u32_at(8) as usize;
    let n = u32_at(12) as usize;
    let length = f64_at(16);
    let meta = SnapshotMeta {
        theta: f64_at(24),
        t: f64_at(32),
        mu: header[40] as i8,
    };
    let grid = make_grid(d, n, length)?;
    let count = grid.total_points();
    let mut payload = Vec::new();
    r.read_to_end(&mut payload).map_err(|e| io_err(path, e))?;
    if payload.len() != count * 16 {
        return Err(IoError::Truncated {
            path: path.display().to_string(),
            expected: count * 16,
            found: payload.len(),
        });
    }
    let values = payload
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[0..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..16].try_into().unwrap()),
            )
        })
        .collect();
    Ok((Field { grid, values }, meta))
}

/// Run provenance: what ran, with which resolved configuration, and what it
/// produced. Written as a valid configuration file (provenance in comments)
/// so a manifest can be fed back as the config of an identical rerun.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub threads: usize,
    pub duration_seconds: f64,
    /// Resolved configuration echo (every key, defaults included).
    pub config_text: String,
    pub outputs: Vec<String>,
}

pub fn write_manifest(manifest: &RunManifest, path: &Path) -> Result<(), IoError> {
    let mut out = String::new();
    out.push_str("# manifest\n");
    out.push_str(&format!("# command = {}\n", manifest.command));
    out.push_str(&format!("# version = {}\n", manifest.version));
    out.push_str(&format!("# threads = {}\n", manifest.threads));
    out.push_str(&format!(
        "# duration_seconds = {:.16e}\n",
        manifest.duration_seconds
    ));
    for o in &manifest.outputs {
        out.push_str(&format!("# output = {o}\n"));
    }
    out.push_str(&manifest.config_text);
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}
