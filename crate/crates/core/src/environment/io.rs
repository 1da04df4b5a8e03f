//! Binary and CSV persistence for conductance fields.
//!
//! Binary layout (all integers little-endian):
//!
//! ```text
//! "RCM1" | d: u32 | L: u32 | spec_len: u32 | spec: canonical JSON (UTF-8)
//!        | seed: u64 | values: f64 × (L^d · d), ordered by (vertex, axis)
//! ```

use std::io::{Read, Write};

use super::{ConductanceField, EnvironmentSpec};
use crate::error::{RcmError, Result};
use crate::lattice::TorusGeometry;
use crate::report::{canonical_json, fmt_f64};

pub const MAGIC: &[u8; 4] = b"RCM1";

pub fn write_env<W: Write>(mut w: W, field: &ConductanceField) -> Result<()> {
    let g = field.geometry();
    let spec = canonical_json(field.spec());
    w.write_all(MAGIC)?;
    w.write_all(&(g.dim() as u32).to_le_bytes())?;
    w.write_all(&(g.side() as u32).to_le_bytes())?;
    w.write_all(&(spec.len() as u32).to_le_bytes())?;
    w.write_all(spec.as_bytes())?;
    w.write_all(&field.seed().to_le_bytes())?;
    for v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| RcmError::BadFormat("truncated header".into()))?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_env<R: Read>(mut r: R) -> Result<ConductanceField> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| RcmError::BadFormat("missing magic".into()))?;
    if &magic != MAGIC {
        return Err(RcmError::BadFormat(format!("magic {magic:?} is not RCM1")));
    }
    let d = read_u32(&mut r)? as usize;
    let side = read_u32(&mut r)? as usize;
    let geometry = TorusGeometry::new(d, side).map_err(|e| RcmError::BadFormat(e.to_string()))?;
    let len = read_u32(&mut r)? as usize;
    if len > 1 << 20 {
        return Err(RcmError::BadFormat(format!("spec header of {len} bytes")));
    }
    let mut spec_bytes = vec![0u8; len];
    r.read_exact(&mut spec_bytes)
        .map_err(|_| RcmError::BadFormat("truncated spec".into()))?;
    let spec: EnvironmentSpec = serde_json::from_slice(&spec_bytes)
        .map_err(|e| RcmError::BadFormat(format!("spec: {e}")))?;
    let mut seed = [0u8; 8];
    r.read_exact(&mut seed)
        .map_err(|_| RcmError::BadFormat("truncated seed".into()))?;
    let mut values = Vec::with_capacity(geometry.edge_count());
    let mut b = [0u8; 8];
    for _ in 0..geometry.edge_count() {
        r.read_exact(&mut b)
            .map_err(|_| RcmError::BadFormat("truncated edge values".into()))?;
        values.push(f64::from_le_bytes(b));
    }
    if r.read(&mut b)? != 0 {
        return Err(RcmError::BadFormat(
            "trailing bytes after edge values".into(),
        ));
    }
    ConductanceField::from_values(geometry, values, spec, u64::from_le_bytes(seed))
        .map_err(|e| RcmError::BadFormat(e.to_string()))
}

/// CSV with columns `x0..x{d-1}, axis, value`, one row per edge.
pub fn write_env_csv<W: Write>(mut w: W, field: &ConductanceField) -> Result<()> {
    let g = field.geometry();
    let coords: Vec<String> = (0..g.dim()).map(|i| format!("x{i}")).collect();
    writeln!(w, "{},axis,value", coords.join(","))?;
    for e in 0..g.edge_count() {
        let v = e / g.dim();
        let p = g.point(v);
        let cs: Vec<String> = p.iter().map(|c| c.to_string()).collect();
        writeln!(
            w,
            "{},{},{}",
            cs.join(","),
            e % g.dim(),
            fmt_f64(field.edge_value(e))
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::sample_environment;

    #[test]
    fn round_trip_and_bad_magic() {
        let g = TorusGeometry::new(2, 6).unwrap();
        for spec in [
            EnvironmentSpec::Constant { level: 1.0 },
            EnvironmentSpec::GaussianFkg {
                mass: 0.7,
                beta: 0.3,
            },
        ] {
            let f = sample_environment(&spec, g, 99).unwrap();
            let mut buf = Vec::new();
            write_env(&mut buf, &f).unwrap();
            let back = read_env(buf.as_slice()).unwrap();
            assert_eq!(back, f);
            let mut again = Vec::new();
            write_env(&mut again, &back).unwrap();
            assert_eq!(buf, again);
            buf[0] = b'X';
            assert!(matches!(
                read_env(buf.as_slice()),
                Err(RcmError::BadFormat(_))
            ));
        }
    }

    #[test]
    fn csv_rows() {
        let g = TorusGeometry::new(2, 4).unwrap();
        let f = ConductanceField::constant(g, 0.1).unwrap();
        let mut buf = Vec::new();
        write_env_csv(&mut buf, &f).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 1 + g.edge_count());
        assert_eq!(s.lines().nth(1).unwrap(), "0,0,0,0.1");
    }
}
