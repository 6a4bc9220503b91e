//! Serialization of fields, lattices and run data.
//!
//! Field snapshots use a fixed binary layout: an ASCII magic tag, a header of
//! little-endian integers/floats (points per axis, domain length, time), then
//! the four spin planes in order `s = 2*s1 + s2`, each row-major over
//! `(x1, x2)`, each amplitude a little-endian f64 pair (re, im). Lattice
//! snapshots prepend the ring header and append each cell's internal
//! configuration after its field blob. Tabular data goes to CSV.

use std::io::{Read, Write};

use num_complex::Complex64;

use crate::engine::TrajectoryTrace;
use crate::field::{ParticleConfig, SpinorField};
use crate::grid::GridSpec;
use crate::harness::RunLedger;
use crate::lattice::{CellState, LatticeState, MassDensity, RingSpec};
use crate::relax::GradientDiagnostics;
use crate::{CoreError, Result};

const FIELD_MAGIC: &[u8; 8] = b"PWFIELD1";
const LATTICE_MAGIC: &[u8; 8] = b"PWLATT1\0";

pub fn write_field<W: Write>(w: &mut W, field: &SpinorField, t: f64) -> Result<()> {
    w.write_all(FIELD_MAGIC)?;
    w.write_all(&(field.grid().points() as u64).to_le_bytes())?;
    w.write_all(&field.grid().length().to_le_bytes())?;
    w.write_all(&t.to_le_bytes())?;
    write_amplitudes(w, field)?;
    Ok(())
}

pub fn read_field<R: Read>(r: &mut R) -> Result<(SpinorField, f64)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != FIELD_MAGIC {
        return Err(CoreError::SnapshotIo("bad field magic".into()));
    }
    let points = read_u64(r)? as usize;
    let length = read_f64(r)?;
    let t = read_f64(r)?;
    let grid = GridSpec::new(points, length)?;
    let mut field = SpinorField::zeros(grid);
    read_amplitudes(r, &mut field)?;
    Ok((field, t))
}

pub fn write_lattice<W: Write>(w: &mut W, lattice: &LatticeState) -> Result<()> {
    w.write_all(LATTICE_MAGIC)?;
    w.write_all(&(lattice.ring().cells() as u64).to_le_bytes())?;
    w.write_all(&lattice.ring().spacing().to_le_bytes())?;
    w.write_all(&lattice.t().to_le_bytes())?;
    w.write_all(&(lattice.grid().points() as u64).to_le_bytes())?;
    w.write_all(&lattice.grid().length().to_le_bytes())?;
    for cell in lattice.cells() {
        write_amplitudes(w, &cell.phi)?;
        w.write_all(&cell.z.x1.to_le_bytes())?;
        w.write_all(&cell.z.x2.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_lattice<R: Read>(r: &mut R) -> Result<LatticeState> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != LATTICE_MAGIC {
        return Err(CoreError::SnapshotIo("bad lattice magic".into()));
    }
    let cells = read_u64(r)? as usize;
    let spacing = read_f64(r)?;
    let t = read_f64(r)?;
    let points = read_u64(r)? as usize;
    let length = read_f64(r)?;
    let ring = RingSpec::new(cells, spacing)?;
    let grid = GridSpec::new(points, length)?;
    let mut states = Vec::with_capacity(cells);
    for _ in 0..cells {
        let mut phi = SpinorField::zeros(grid);
        read_amplitudes(r, &mut phi)?;
        let x1 = read_f64(r)?;
        let x2 = read_f64(r)?;
        states.push(CellState {
            phi,
            z: ParticleConfig::new(x1, x2),
        });
    }
    LatticeState::new(ring, states, t)
}

fn write_amplitudes<W: Write>(w: &mut W, field: &SpinorField) -> Result<()> {
    for a in field.amplitudes() {
        w.write_all(&a.re.to_le_bytes())?;
        w.write_all(&a.im.to_le_bytes())?;
    }
    Ok(())
}

fn read_amplitudes<R: Read>(r: &mut R, field: &mut SpinorField) -> Result<()> {
    for a in field.amplitudes_mut() {
        *a = Complex64::new(read_f64(r)?, read_f64(r)?);
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

pub fn write_trajectories_csv<W: Write>(w: &mut W, traces: &[TrajectoryTrace]) -> Result<()> {
    writeln!(w, "run_id,t,x1,x2")?;
    for (run, trace) in traces.iter().enumerate() {
        for (t, c) in trace.samples() {
            writeln!(w, "{run},{t},{},{}", c.x1, c.x2)?;
        }
    }
    Ok(())
}

pub fn write_ledger_csv<W: Write>(w: &mut W, ledger: &RunLedger) -> Result<()> {
    writeln!(
        w,
        "run_id,pair_a_index,pair_b_index,alpha,beta,A,B,lambda_x1,lambda_x2,seed,flagged"
    )?;
    for r in &ledger.records {
        let (a, b) = match r.outcome {
            Some((a, b)) => (a.sign(), b.sign()),
            None => (0, 0),
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.run_id,
            r.pair.0,
            r.pair.1,
            r.settings.alpha.radians(),
            r.settings.beta.radians(),
            a,
            b,
            r.lambda.x1,
            r.lambda.x2,
            r.seed,
            u8::from(r.flagged())
        )?;
    }
    Ok(())
}

pub fn write_gradient_csv<W: Write>(w: &mut W, diag: &GradientDiagnostics) -> Result<()> {
    writeln!(w, "t,G_phi,G_z")?;
    for (t, g_phi, g_z) in diag.samples() {
        writeln!(w, "{t},{g_phi},{g_z}")?;
    }
    Ok(())
}

pub fn write_mass_density_csv<W: Write>(w: &mut W, trace: &[(f64, MassDensity)]) -> Result<()> {
    writeln!(w, "t,cell_index,particle_index")?;
    for (t, density) in trace {
        for (cell, particle) in &density.occupancy {
            writeln!(w, "{t},{cell},{particle}")?;
        }
    }
    Ok(())
}
