use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{BssrdfTable, BuildStats, TableGrids};
use crate::catmullrom::integrate_1d;
use crate::error::{Error, Result};
use crate::medium::{MediumParams, SignConvention};
use crate::pbd::BeamOracle;
use crate::wrapped_cauchy::{gwc_fit, AnchorSet, FitStatus};

/// Radius used in place of `r = 0` for the angular fit, where the beam
/// integrand is near-singular.
pub const R0_FIT_RADIUS: f64 = 1e-4;

/// How many cells ended in each fit branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FitCensus {
    pub exact: u64,
    pub degenerate: u64,
    pub clamped: u64,
    pub fallback: u64,
}

impl FitCensus {
    fn add(&mut self, status: FitStatus) {
        match status {
            FitStatus::Exact => self.exact += 1,
            FitStatus::Degenerate => self.degenerate += 1,
            FitStatus::Clamped => self.clamped += 1,
            FitStatus::Fallback => self.fallback += 1,
        }
    }

    fn merge(mut self, other: Self) -> Self {
        self.exact += other.exact;
        self.degenerate += other.degenerate;
        self.clamped += other.clamped;
        self.fallback += other.fallback;
        self
    }
}

/// Builds the table on the standard grids with the literal sign convention.
pub fn build_table(eta: f64, g: f64, build_samples: usize) -> Result<BssrdfTable> {
    let (table, _) = build_table_on(
        TableGrids::standard(),
        eta,
        g,
        build_samples,
        SignConvention::LITERAL,
    )?;
    Ok(table)
}

struct Row {
    a: Vec<f32>,
    beta: Vec<f32>,
    c: Vec<f32>,
    cum: Vec<f32>,
    rho_eff: f32,
    census: FitCensus,
}

pub fn build_table_on(
    grids: TableGrids,
    eta: f64,
    g: f64,
    build_samples: usize,
    convention: SignConvention,
) -> Result<(BssrdfTable, FitCensus)> {
    MediumParams::from_albedo(eta, g, 0.5)?;
    if build_samples == 0 {
        return Err(Error::InvalidInput("build_samples must be positive".into()));
    }
    let [n_rho, n_theta, _] = grids.dims();
    let rows: Vec<Row> = (0..n_rho * n_theta)
        .into_par_iter()
        .map(|ij| {
            let (i, j) = (ij / n_theta, ij % n_theta);
            build_row(&grids, eta, g, build_samples, convention, i, j)
        })
        .collect::<Result<_>>()?;

    let n = grids.cell_count();
    let mut table = BssrdfTable {
        eta,
        g,
        convention,
        a: Vec::with_capacity(n),
        beta: Vec::with_capacity(n),
        c: Vec::with_capacity(n),
        cum_energy: Vec::with_capacity(n),
        rho_eff: Vec::with_capacity(n_rho * n_theta),
        grids,
        stats: BuildStats::default(),
    };
    let mut census = FitCensus::default();
    for row in rows {
        table.a.extend(row.a);
        table.beta.extend(row.beta);
        table.c.extend(row.c);
        table.cum_energy.extend(row.cum);
        table.rho_eff.push(row.rho_eff);
        census = census.merge(row.census);
    }
    table.stats.clamped_cells = census.clamped + census.fallback;
    Ok((table, census))
}

fn build_row(
    grids: &TableGrids,
    eta: f64,
    g: f64,
    samples: usize,
    convention: SignConvention,
    i: usize,
    j: usize,
) -> Result<Row> {
    let rho = grids.rho.nodes()[i];
    let theta = grids.theta.nodes()[j];
    let params = MediumParams::from_albedo(eta, g, rho)?;
    let oracle = BeamOracle::new(&params, theta, convention)?;
    let anchors = AnchorSet::OPTIMIZED;
    let phis = anchors.angles();
    let n_r = grids.r.len();
    let mut row = Row {
        a: Vec::with_capacity(n_r),
        beta: Vec::with_capacity(n_r),
        c: Vec::with_capacity(n_r),
        cum: Vec::with_capacity(n_r),
        rho_eff: 0.0,
        census: FitCensus::default(),
    };
    for &r in grids.r.nodes() {
        let r_fit = if r > 0.0 { r } else { R0_FIT_RADIUS };
        let f = [
            oracle.eval(r_fit, phis[0], samples)?,
            oracle.eval(r_fit, phis[1], samples)?,
            oracle.eval(r_fit, phis[2], samples)?,
        ];
        let fit = gwc_fit(f[0], f[1], f[2], &anchors)?;
        row.census.add(fit.status);
        row.a.push(fit.params.mass() as f32);
        row.beta.push(fit.params.beta as f32);
        row.c.push(fit.params.c as f32);
    }
    // Radial energy from the stored (rounded) channel so that lookups
    // reproduce the cumulative exactly.
    let energy: Vec<f64> = row
        .a
        .iter()
        .zip(grids.r.nodes())
        .map(|(a, r)| *a as f64 * r)
        .collect();
    let (cum, total) = integrate_1d(&grids.r, &energy, None)?;
    row.cum = cum.iter().map(|v| *v as f32).collect();
    row.rho_eff = total as f32;
    Ok(row)
}
