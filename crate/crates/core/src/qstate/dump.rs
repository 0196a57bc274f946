//! Field dumps: a little-endian binary format, a text variant and a CSV
//! emitter for plotting.
//!
//! Binary layout: magic `HLWF`, `u32` format version, `u32` dims, per axis
//! `u64` points and `f64` extent, then `f64` time, hbar and mass, then one
//! `(f64 re, f64 im)` pair per cell with x running fastest.

use std::io::{BufRead, BufWriter, Read, Write};

use num_complex::Complex64;

use super::grid::GridSpec;
use super::system::SystemConfig;
use super::wave::{position_density, WaveFunction};
use crate::error::{Error, Result};
use crate::fmt::num;

const MAGIC: &[u8; 4] = b"HLWF";
const VERSION: u32 = 1;

/// A field read back from a dump, with the physical constants it was saved with.
#[derive(Clone, Debug)]
pub struct FieldDump {
    pub psi: WaveFunction,
    pub hbar: f64,
    pub mass: f64,
}

pub fn write_binary<W: Write>(out: W, psi: &WaveFunction, sys: &SystemConfig) -> Result<()> {
    let mut w = BufWriter::new(out);
    let g = psi.grid();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(g.dims() as u32).to_le_bytes())?;
    for a in 0..g.dims() {
        w.write_all(&(g.points()[a] as u64).to_le_bytes())?;
        w.write_all(&g.extent()[a].to_le_bytes())?;
    }
    for v in [psi.time(), sys.hbar, sys.mass] {
        w.write_all(&v.to_le_bytes())?;
    }
    for z in psi.amplitudes() {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

pub fn read_binary<R: Read>(mut r: R) -> Result<FieldDump> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a field dump (bad magic)".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported field dump version {version}")));
    }
    let dims = read_u32(&mut r)? as usize;
    if dims == 0 || dims > 2 {
        return Err(Error::Format(format!("field dump has {dims} axes")));
    }
    let mut points = Vec::with_capacity(dims);
    let mut extent = Vec::with_capacity(dims);
    for _ in 0..dims {
        points.push(read_u64(&mut r)? as usize);
        extent.push(read_f64(&mut r)?);
    }
    let grid = GridSpec::new(&points, &extent).map_err(|e| Error::Format(e.to_string()))?;
    let time = read_f64(&mut r)?;
    let hbar = read_f64(&mut r)?;
    let mass = read_f64(&mut r)?;
    let mut amps = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        let re = read_f64(&mut r)?;
        let im = read_f64(&mut r)?;
        amps.push(Complex64::new(re, im));
    }
    let psi = WaveFunction::from_parts(grid, amps, time)?;
    Ok(FieldDump { psi, hbar, mass })
}

/// Text variant: `key value...` header lines, a `data` line, then one
/// `re im` pair per line.
pub fn write_text<W: Write>(out: W, psi: &WaveFunction, sys: &SystemConfig) -> Result<()> {
    let mut w = BufWriter::new(out);
    let g = psi.grid();
    writeln!(w, "dims {}", g.dims())?;
    writeln!(w, "points {}", join(g.points().iter().map(|p| p.to_string())))?;
    writeln!(w, "extent {}", join(g.extent().iter().map(|&v| num(v))))?;
    writeln!(w, "time {}", num(psi.time()))?;
    writeln!(w, "hbar {}", num(sys.hbar))?;
    writeln!(w, "mass {}", num(sys.mass))?;
    writeln!(w, "data")?;
    for z in psi.amplitudes() {
        writeln!(w, "{:e} {:e}", z.re, z.im)?;
    }
    w.flush()?;
    Ok(())
}

fn join(it: impl Iterator<Item = String>) -> String {
    it.collect::<Vec<_>>().join(" ")
}

pub fn read_text<R: BufRead>(r: R) -> Result<FieldDump> {
    let mut lines = r.lines();
    let mut header = std::collections::HashMap::new();
    for line in lines.by_ref() {
        let line = line?;
        let line = line.trim();
        if line == "data" {
            break;
        }
        let (k, v) = line.split_once(' ').ok_or_else(|| Error::Format(format!("bad header line {line:?}")))?;
        header.insert(k.to_string(), v.to_string());
    }
    let get = |k: &str| header.get(k).ok_or_else(|| Error::Format(format!("missing header {k}")));
    let floats = |s: &str| -> Result<Vec<f64>> {
        s.split_whitespace().map(|t| t.parse().map_err(|_| Error::Format(format!("bad number {t:?}")))).collect()
    };
    let points: Vec<usize> = get("points")?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Format(format!("bad count {t:?}"))))
        .collect::<Result<_>>()?;
    let extent = floats(get("extent")?)?;
    let grid = GridSpec::new(&points, &extent).map_err(|e| Error::Format(e.to_string()))?;
    let one = |k: &str| -> Result<f64> {
        floats(get(k)?)?.first().copied().ok_or_else(|| Error::Format(format!("empty {k}")))
    };
    let (time, hbar, mass) = (one("time")?, one("hbar")?, one("mass")?);
    let mut amps = Vec::with_capacity(grid.len());
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v = floats(&line)?;
        if v.len() != 2 {
            return Err(Error::Format(format!("expected `re im`, got {line:?}")));
        }
        amps.push(Complex64::new(v[0], v[1]));
    }
    let psi = WaveFunction::from_parts(grid, amps, time).map_err(|e| Error::Format(e.to_string()))?;
    Ok(FieldDump { psi, hbar, mass })
}

/// CSV with columns `x,y,re,im,density` (y is 0 on a line).
pub fn write_csv<W: Write>(out: W, psi: &WaveFunction) -> Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "x,y,re,im,density")?;
    let g = psi.grid();
    let d = position_density(psi);
    for (i, z) in psi.amplitudes().iter().enumerate() {
        let p = g.position(i);
        writeln!(w, "{},{},{},{},{}", num(p[0]), num(p[1]), num(z.re), num(z.im), num(d[i]))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field() -> (WaveFunction, SystemConfig) {
        let g = GridSpec::new(&[16, 32], &[2.0, 3.0]).unwrap();
        let amps = (0..g.len()).map(|i| Complex64::new(i as f64 * 0.1, -(i as f64).sqrt())).collect();
        (WaveFunction::from_parts(g, amps, 0.25).unwrap(), SystemConfig::free(2.0, 0.5).unwrap())
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let (psi, sys) = field();
        let mut buf = Vec::new();
        write_binary(&mut buf, &psi, &sys).unwrap();
        let back = read_binary(&buf[..]).unwrap();
        assert_eq!(back.psi, psi);
        assert_eq!((back.hbar, back.mass), (0.5, 2.0));
    }

    #[test]
    fn text_round_trip_is_exact() {
        let (psi, sys) = field();
        let mut buf = Vec::new();
        write_text(&mut buf, &psi, &sys).unwrap();
        let back = read_text(&buf[..]).unwrap();
        assert_eq!(back.psi, psi);
    }

    #[test]
    fn corrupt_binary_rejected() {
        let (psi, sys) = field();
        let mut buf = Vec::new();
        write_binary(&mut buf, &psi, &sys).unwrap();
        assert!(read_binary(&buf[..buf.len() - 3]).is_err());
        buf[0] = b'X';
        assert!(matches!(read_binary(&buf[..]), Err(Error::Format(_))));
    }

    #[test]
    fn csv_has_one_row_per_cell() {
        let (psi, _) = field();
        let mut buf = Vec::new();
        write_csv(&mut buf, &psi).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 1 + psi.grid().len());
        assert!(s.starts_with("x,y,re,im,density\n"));
    }
}
