//! On-disk formats: CHNS1 field snapshots, diagnostics CSV, atomic writes.
//!
//! CHNS1 layout (little-endian): magic `"CHNS1\n"`, u32 version = 1, u32 nx,
//! u32 ny, f64 L, f64 t, then `nx·ny` f64 row-major for φ, ux, uy.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{ChnsError, Result};
use crate::grid::{GridSpec, ScalarField, VelocityField};
use crate::integrator::{Diagnostics, State};

pub const MAGIC: &[u8; 6] = b"CHNS1\n";
pub const VERSION: u32 = 1;

pub const CSV_HEADER: &str = "t,mean_phi,E_phi,E_kin,E_total,u_L2,phi_H1,control_L2";

pub fn encode_snapshot(s: &State) -> Vec<u8> {
    let g = s.grid();
    let n = g.len();
    let mut out = Vec::with_capacity(6 + 8 + 16 + 24 * n);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(g.nx as u32).to_le_bytes());
    out.extend_from_slice(&(g.ny as u32).to_le_bytes());
    out.extend_from_slice(&g.length.to_le_bytes());
    out.extend_from_slice(&s.t.to_le_bytes());
    for v in s.phi.values().iter().chain(s.u.ux()).chain(s.u.uy()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<State> {
    let bad = |m: &str| ChnsError::Format(m.to_string());
    if bytes.len() < 34 || &bytes[..6] != MAGIC {
        return Err(bad("not a CHNS1 snapshot"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u32_at(6);
    if version != VERSION {
        return Err(bad(&format!("unsupported CHNS1 version {version}")));
    }
    let grid = GridSpec::new(u32_at(10) as usize, u32_at(14) as usize, f64_at(18))?;
    let t = f64_at(26);
    let n = grid.len();
    if bytes.len() != 34 + 24 * n {
        return Err(bad(&format!("expected {} bytes, got {}", 34 + 24 * n, bytes.len())));
    }
    let block = |b: usize| -> Vec<f64> { (0..n).map(|i| f64_at(34 + 8 * (b * n + i))).collect() };
    let phi = ScalarField::from_values(grid, block(0))?;
    let u = VelocityField::from_components(grid, block(1), block(2))?;
    State::new(t, phi, u)
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| ChnsError::Config(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_snapshot(path: &Path, s: &State) -> Result<()> {
    write_atomic(path, &encode_snapshot(s))
}

pub fn read_snapshot(path: &Path) -> Result<State> {
    decode_snapshot(&fs::read(path)?)
}

/// Diagnostics as CSV; floats use the shortest representation that
/// round-trips.
pub fn diagnostics_csv(rows: &[Diagnostics]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for d in rows {
        let fields = [d.t, d.mean_phi, d.e_phi, d.e_kin, d.e_total, d.u_l2, d.phi_h1, d.control_l2];
        let line: Vec<String> = fields.iter().map(|v| format!("{v}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}
