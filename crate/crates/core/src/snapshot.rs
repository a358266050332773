//! Binary field snapshots.
//!
//! Layout (little-endian): `"PHI4"`, version `u16`, `d: u8`, `N: u8`,
//! `L: f64`, `time: f64`, `seed: u64`, then the site values as `f64` in
//! lexicographic order.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Phi4Error, Result};
use crate::lattice::{Field, LatticeGrid};

pub const MAGIC: &[u8; 4] = b"PHI4";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub field: Field,
    pub seed: u64,
}

impl Snapshot {
    pub fn encode(&self) -> Vec<u8> {
        let g = self.field.grid();
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * g.num_sites());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(g.dim() as u8);
        out.push(g.level() as u8);
        out.extend_from_slice(&g.side().to_le_bytes());
        out.extend_from_slice(&self.field.time.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        for v in self.field.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(Phi4Error::Snapshot("missing PHI4 header".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Phi4Error::Snapshot(format!("unsupported version {version}")));
        }
        let d = bytes[6] as usize;
        let level = bytes[7] as u32;
        let f64_at = |i: usize| f64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
        let side = f64_at(8);
        let time = f64_at(16);
        let seed = u64::from_le_bytes(bytes[24..32].try_into().unwrap());
        let grid = LatticeGrid::new(d, side, level)?;
        let body = &bytes[HEADER_LEN..];
        if body.len() != 8 * grid.num_sites() {
            return Err(Phi4Error::Snapshot(format!(
                "expected {} value bytes, found {}",
                8 * grid.num_sites(),
                body.len()
            )));
        }
        let values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { field: Field::new(grid, values, time)?, seed })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.encode())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::decode(&buf)
    }

    /// Step index implied by `time = step · dt`, checked to be exact.
    pub fn step(&self, dt: f64) -> Result<u64> {
        let s = (self.field.time / dt).round();
        if s < 0.0 || s * dt != self.field.time {
            return Err(Phi4Error::Snapshot(format!(
                "time {} is not a step multiple of dt = {dt}",
                self.field.time
            )));
        }
        Ok(s as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_grid;

    #[test]
    fn roundtrip() {
        let g = build_grid(2, 2.0, 3).unwrap();
        let mut f = Field::from_fn(g, |x| x[0] - x[1] * 0.3);
        f.time = 0.75;
        let s = Snapshot { field: f, seed: 99 };
        let bytes = s.encode();
        assert_eq!(&bytes[..4], b"PHI4");
        assert_eq!(bytes.len(), HEADER_LEN + 8 * 256);
        assert_eq!(Snapshot::decode(&bytes).unwrap(), s);
        assert_eq!(s.step(0.25).unwrap(), 3);
        assert!(Snapshot::decode(&bytes[..40]).is_err());
    }
}
