//! Binary checkpoints for trial states.
//!
//! Layout (little-endian): magic "PKLB", format version u32, n u32,
//! spacing f64, B 3xf64, variant u32, variant-specific header, then complex
//! records as interleaved re/im f64 pairs in x-fastest order. Loading rejects
//! wrong magic or version and validates lengths, so a truncated file fails
//! loudly rather than producing a silently wrong state.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read as IoRead, Write as IoWrite};
use std::path::Path;

use num_complex::Complex64;

use crate::ansatz::{AnsatzState, PairFactor};
use crate::field::ComplexField3D;
use crate::grid::{Grid3D, MagneticGauge};
use crate::twobody::TwoBodyState;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"PKLB";
const VERSION: u32 = 1;

fn write_u32(w: &mut impl IoWrite, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64(w: &mut impl IoWrite, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl IoRead) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut impl IoRead) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn write_complex_block(w: &mut impl IoWrite, vals: &[Complex64]) -> Result<()> {
    let mut buf = Vec::with_capacity(vals.len() * 16);
    for v in vals {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_complex_block(r: &mut impl IoRead, len: usize) -> Result<Vec<Complex64>> {
    let mut buf = vec![0u8; len * 16];
    r.read_exact(&mut buf)?;
    let mut out = Vec::with_capacity(len);
    for chunk in buf.chunks_exact(16) {
        let re = f64::from_le_bytes(chunk[0..8].try_into().unwrap());
        let im = f64::from_le_bytes(chunk[8..16].try_into().unwrap());
        out.push(Complex64::new(re, im));
    }
    Ok(out)
}

pub fn save_state(path: &Path, state: &AnsatzState, gauge: &MagneticGauge) -> Result<()> {
    let f = File::create(path)?;
    let mut w = BufWriter::new(f);
    w.write_all(MAGIC)?;
    write_u32(&mut w, VERSION)?;
    let grid = state.grid();
    write_u32(&mut w, grid.n as u32)?;
    write_f64(&mut w, grid.spacing)?;
    for &b in &gauge.b {
        write_f64(&mut w, b)?;
    }
    match state {
        AnsatzState::Hartree { orbitals } => {
            write_u32(&mut w, 0)?;
            write_u32(&mut w, orbitals.len() as u32)?;
            for o in orbitals {
                write_complex_block(&mut w, &o.values)?;
            }
        }
        AnsatzState::Slater { orbitals, spins, q } => {
            write_u32(&mut w, 1)?;
            write_u32(&mut w, orbitals.len() as u32)?;
            write_u32(&mut w, *q as u32)?;
            for &s in spins {
                write_u32(&mut w, s as u32)?;
            }
            for o in orbitals {
                write_complex_block(&mut w, &o.values)?;
            }
        }
        AnsatzState::Pair { orbital, factor } => {
            write_u32(&mut w, 2)?;
            match factor {
                PairFactor::Gaussian { c, w: width } => {
                    write_u32(&mut w, 0)?;
                    write_f64(&mut w, *c)?;
                    write_f64(&mut w, *width)?;
                }
                PairFactor::Table { rs, gs } => {
                    write_u32(&mut w, 1)?;
                    write_u32(&mut w, rs.len() as u32)?;
                    for &r in rs {
                        write_f64(&mut w, r)?;
                    }
                    for &g in gs {
                        write_f64(&mut w, g)?;
                    }
                }
            }
            write_complex_block(&mut w, &orbital.values)?;
        }
        AnsatzState::TwoBody(t) => {
            write_u32(&mut w, 3)?;
            write_complex_block(&mut w, &t.values)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_state(path: &Path) -> Result<(AnsatzState, MagneticGauge)> {
    let f = File::open(path)?;
    let mut r = BufReader::new(f);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Config(format!(
            "not a checkpoint file: bad magic {magic:?}"
        )));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Config(format!(
            "unsupported checkpoint version {version} (expected {VERSION})"
        )));
    }
    let n = read_u32(&mut r)? as usize;
    let spacing = read_f64(&mut r)?;
    let grid = Grid3D::new(n, spacing)?;
    let gauge = MagneticGauge {
        b: [read_f64(&mut r)?, read_f64(&mut r)?, read_f64(&mut r)?],
    };
    let n3 = grid.len();
    let variant = read_u32(&mut r)?;
    let state = match variant {
        0 => {
            let count = read_u32(&mut r)? as usize;
            if count == 0 || count > 8 {
                return Err(Error::Config(format!("bad orbital count {count}")));
            }
            let mut orbitals = Vec::with_capacity(count);
            for _ in 0..count {
                orbitals.push(ComplexField3D {
                    grid,
                    values: read_complex_block(&mut r, n3)?,
                });
            }
            AnsatzState::Hartree { orbitals }
        }
        1 => {
            let count = read_u32(&mut r)? as usize;
            if count == 0 || count > 4 {
                return Err(Error::Config(format!("bad orbital count {count}")));
            }
            let q = read_u32(&mut r)? as usize;
            let mut spins = Vec::with_capacity(count);
            for _ in 0..count {
                spins.push(read_u32(&mut r)? as usize);
            }
            if q == 0 || spins.iter().any(|&s| s >= q) {
                return Err(Error::Config("inconsistent spin labels".into()));
            }
            let mut orbitals = Vec::with_capacity(count);
            for _ in 0..count {
                orbitals.push(ComplexField3D {
                    grid,
                    values: read_complex_block(&mut r, n3)?,
                });
            }
            AnsatzState::Slater { orbitals, spins, q }
        }
        2 => {
            let kind = read_u32(&mut r)?;
            let factor = match kind {
                0 => PairFactor::Gaussian {
                    c: read_f64(&mut r)?,
                    w: read_f64(&mut r)?,
                },
                1 => {
                    let len = read_u32(&mut r)? as usize;
                    if len < 2 || len > 1_000_000 {
                        return Err(Error::Config(format!("bad table length {len}")));
                    }
                    let mut rs = Vec::with_capacity(len);
                    for _ in 0..len {
                        rs.push(read_f64(&mut r)?);
                    }
                    let mut gs = Vec::with_capacity(len);
                    for _ in 0..len {
                        gs.push(read_f64(&mut r)?);
                    }
                    PairFactor::Table { rs, gs }
                }
                k => return Err(Error::Config(format!("unknown pair factor kind {k}"))),
            };
            factor.validate()?;
            let orbital = ComplexField3D {
                grid,
                values: read_complex_block(&mut r, n3)?,
            };
            AnsatzState::Pair { orbital, factor }
        }
        3 => {
            let values = read_complex_block(&mut r, n3 * n3)?;
            AnsatzState::TwoBody(TwoBodyState::new(grid, values)?)
        }
        v => return Err(Error::Config(format!("unknown state variant {v}"))),
    };
    // require exact length: no trailing garbage
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(Error::Config("trailing bytes after checkpoint payload".into()));
    }
    Ok((state, gauge))
}
