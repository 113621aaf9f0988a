//! Little-endian binary format:
//!
//! ```text
//! "BSRT" | version u32 | flags u32 | eta f64 | g f64 | dims 3 x u32
//! | rho, theta, r nodes (f64) | A, beta, c, cum_energy (f32, ρ-major, r-minor)
//! | rho_eff (f32, ρ-major) | clamped cell count u64
//! ```

use serde::{Deserialize, Serialize};

use super::{BssrdfTable, BuildStats, TableGrids, RHO_EFF_TOLERANCE};
use crate::error::{Error, Result};
use crate::medium::SignConvention;

pub const MAGIC: [u8; 4] = *b"BSRT";
pub const FORMAT_VERSION: u32 = 1;

/// Relative slack for checks that compare values rounded to `f32`.
const F32_SLACK: f64 = 1e-5;

/// Human-readable description of a table, written next to the binary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMetadata {
    pub format_version: u32,
    pub eta: f64,
    pub g: f64,
    pub flip_zb: bool,
    pub flip_virtual_flux: bool,
    pub dims: [usize; 3],
    pub r_max: f64,
    pub channel_bytes: usize,
    pub file_bytes: usize,
    pub clamped_cells: u64,
    pub max_rho_eff: f64,
    pub rho_eff_above_one: usize,
    pub rho_eff_above_tolerance: usize,
}

impl BssrdfTable {
    /// Bytes taken by `A`, `β`, `c` and the cumulative energy.
    pub fn channel_bytes(&self) -> usize {
        4 * 4 * self.grids.cell_count()
    }

    pub fn serialized_len(&self) -> usize {
        let [n_rho, n_theta, n_r] = self.grids.dims();
        4 + 4
            + 4
            + 8
            + 8
            + 12
            + 8 * (n_rho + n_theta + n_r)
            + self.channel_bytes()
            + 4 * n_rho * n_theta
            + 8
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.serialized_len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.convention.bits().to_le_bytes());
        out.extend_from_slice(&self.eta.to_le_bytes());
        out.extend_from_slice(&self.g.to_le_bytes());
        for d in self.grids.dims() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for grid in [&self.grids.rho, &self.grids.theta, &self.grids.r] {
            for x in grid.nodes() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        for channel in [
            &self.a,
            &self.beta,
            &self.c,
            &self.cum_energy,
            &self.rho_eff,
        ] {
            for v in channel.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(&self.stats.clamped_cells.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = Reader { bytes, pos: 0 };
        if rd.take(4)? != MAGIC {
            return Err(Error::CorruptHeader("bad magic".into()));
        }
        let version = rd.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::CorruptHeader(format!(
                "unsupported version {version}"
            )));
        }
        let convention = SignConvention::from_bits(rd.u32()?)?;
        let eta = rd.f64()?;
        let g = rd.f64()?;
        let dims = [rd.u32()? as usize, rd.u32()? as usize, rd.u32()? as usize];
        if dims.iter().any(|d| *d < 2) {
            return Err(Error::DimensionMismatch(format!(
                "degenerate dims {dims:?}"
            )));
        }
        let cells = dims
            .iter()
            .try_fold(1usize, |acc, d| acc.checked_mul(*d))
            .ok_or_else(|| Error::DimensionMismatch(format!("dims {dims:?} overflow")))?;
        let expected = 4
            + 4
            + 4
            + 8
            + 8
            + 12
            + 8 * (dims[0] + dims[1] + dims[2])
            + 16 * cells
            + 4 * dims[0] * dims[1]
            + 8;
        if bytes.len() < expected {
            return Err(Error::CorruptHeader(format!(
                "truncated: {} bytes, dims {dims:?} need {expected}",
                bytes.len()
            )));
        }
        if bytes.len() > expected {
            return Err(Error::DimensionMismatch(format!(
                "{} trailing bytes after dims {dims:?}",
                bytes.len() - expected
            )));
        }
        let rho = rd.f64s(dims[0])?;
        let theta = rd.f64s(dims[1])?;
        let r = rd.f64s(dims[2])?;
        let grids = TableGrids::new(rho, theta, r)
            .map_err(|e| Error::InvariantViolation(format!("grid: {e}")))?;
        let table = BssrdfTable {
            eta,
            g,
            convention,
            grids,
            a: rd.f32s(cells)?,
            beta: rd.f32s(cells)?,
            c: rd.f32s(cells)?,
            cum_energy: rd.f32s(cells)?,
            rho_eff: rd.f32s(dims[0] * dims[1])?,
            stats: BuildStats {
                clamped_cells: rd.u64()?,
            },
        };
        table.check_invariants()?;
        Ok(table)
    }

    /// Cell-wise checks of the stored channels.
    pub fn check_invariants(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvariantViolation(msg));
        if !(self.eta > 1.0 && (-1.0..=1.0).contains(&self.g)) {
            return bad(format!("material eta={} g={}", self.eta, self.g));
        }
        let [n_rho, n_theta, n_r] = self.grids.dims();
        for idx in 0..self.grids.cell_count() {
            let (a, beta, c) = (
                self.a[idx] as f64,
                self.beta[idx] as f64,
                self.c[idx] as f64,
            );
            if !(a.is_finite() && beta.is_finite() && c.is_finite()) {
                return bad(format!("non-finite cell {idx}"));
            }
            if a < 0.0 || beta < 0.0 || !(0.0..1.0).contains(&c) {
                return bad(format!("cell {idx}: A={a} beta={beta} c={c}"));
            }
            // Non-negative profile: 2πα ≥ -β(1-c)/(1+c). Subnormal cells
            // lose their relative precision in f32.
            let a_min = 2.0 * beta * c / (1.0 + c);
            if a < a_min - F32_SLACK * beta - f32::MIN_POSITIVE as f64 {
                return bad(format!("cell {idx}: A={a} below {a_min}"));
            }
        }
        for ij in 0..n_rho * n_theta {
            let row = &self.cum_energy[ij * n_r..(ij + 1) * n_r];
            if row[0] != 0.0 || row.windows(2).any(|w| !(w[1] >= w[0])) {
                return bad(format!(
                    "cumulative energy of row {ij} is not non-decreasing"
                ));
            }
            if self.rho_eff[ij] != row[n_r - 1] {
                return bad(format!("rho_eff of row {ij} differs from its cumulative"));
            }
        }
        Ok(())
    }

    pub fn metadata(&self) -> TableMetadata {
        let max_rho_eff = self.rho_eff.iter().fold(0.0f64, |m, v| m.max(*v as f64));
        TableMetadata {
            format_version: FORMAT_VERSION,
            eta: self.eta,
            g: self.g,
            flip_zb: self.convention.flip_zb,
            flip_virtual_flux: self.convention.flip_virtual_flux,
            dims: self.grids.dims(),
            r_max: self.grids.r_max(),
            channel_bytes: self.channel_bytes(),
            file_bytes: self.serialized_len(),
            clamped_cells: self.stats.clamped_cells,
            max_rho_eff,
            rho_eff_above_one: self.rho_eff.iter().filter(|v| **v > 1.0).count(),
            rho_eff_above_tolerance: self
                .rho_eff
                .iter()
                .filter(|v| **v as f64 > 1.0 + RHO_EFF_TOLERANCE)
                .count(),
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::CorruptHeader(format!(
                "truncated at byte {} of {}",
                self.pos,
                self.bytes.len()
            )));
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        Ok(self
            .take(4 * n)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect())
    }
}
