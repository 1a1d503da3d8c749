//! Binary dump of a [`PathBatch`].
//!
//! Little-endian layout:
//!
//! | field        | type     |
//! |--------------|----------|
//! | magic        | `b"VSPB"`|
//! | version      | u32 = 1  |
//! | first_path   | u64      |
//! | n_paths      | u64      |
//! | steps        | u64      |
//! | d            | u32      |
//! | m            | u32      |
//! | t0           | f64      |
//! | T            | f64      |
//! | master_seed  | u64      |
//! | fingerprint  | u64      |
//!
//! followed by `X` (`n_paths * (steps + 1) * d` f64, path-major then
//! node-major) and `dW` (`n_paths * steps * m` f64, path-major then
//! cell-major).

use std::io::{Read, Write};
use std::path::Path;

use super::PathBatch;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::rng::SeedSpec;

const MAGIC: &[u8; 4] = b"VSPB";
const VERSION: u32 = 1;

pub fn write_batch(batch: &PathBatch, mut w: impl Write) -> Result<()> {
    let g = batch.grid;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(batch.first_path as u64).to_le_bytes())?;
    w.write_all(&(batch.n_paths as u64).to_le_bytes())?;
    w.write_all(&(g.steps() as u64).to_le_bytes())?;
    w.write_all(&(batch.d as u32).to_le_bytes())?;
    w.write_all(&(batch.m as u32).to_le_bytes())?;
    w.write_all(&g.t0().to_le_bytes())?;
    w.write_all(&g.t_end().to_le_bytes())?;
    w.write_all(&batch.seed.master_seed.to_le_bytes())?;
    w.write_all(&batch.fingerprint.to_le_bytes())?;
    for v in batch.x.iter().chain(&batch.dw) {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn save_batch(batch: &PathBatch, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_batch(batch, &mut w)?;
    w.flush()?;
    Ok(())
}

fn take<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

pub fn read_batch(mut r: impl Read) -> Result<PathBatch> {
    if &take::<4>(&mut r)? != MAGIC {
        return Err(Error::Io("not a path batch dump".into()));
    }
    let version = u32::from_le_bytes(take(&mut r)?);
    if version != VERSION {
        return Err(Error::Io(format!("unsupported dump version {version}")));
    }
    let first_path = u64::from_le_bytes(take(&mut r)?) as usize;
    let n_paths = u64::from_le_bytes(take(&mut r)?) as usize;
    let steps = u64::from_le_bytes(take(&mut r)?) as usize;
    let d = u32::from_le_bytes(take(&mut r)?) as usize;
    let m = u32::from_le_bytes(take(&mut r)?) as usize;
    let t0 = f64::from_le_bytes(take(&mut r)?);
    let t_end = f64::from_le_bytes(take(&mut r)?);
    let seed = SeedSpec::new(u64::from_le_bytes(take(&mut r)?));
    let fingerprint = u64::from_le_bytes(take(&mut r)?);
    let grid = TimeGrid::new(t0, t_end, steps)?;
    let mut read_vec = |len: usize| -> Result<Vec<f64>> {
        (0..len).map(|_| Ok(f64::from_le_bytes(take(&mut r)?))).collect()
    };
    let x = read_vec(n_paths * (steps + 1) * d)?;
    let dw = read_vec(n_paths * steps * m)?;
    Ok(PathBatch {
        grid,
        first_path,
        n_paths,
        d,
        m,
        x,
        dw,
        fingerprint,
        seed,
    })
}

pub fn load_batch(path: &Path) -> Result<PathBatch> {
    let file = std::fs::File::open(path)?;
    read_batch(std::io::BufReader::new(file))
}
