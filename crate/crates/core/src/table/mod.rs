//! The `(ρ, θ, r)` tabulation of fitted azimuthal profiles.
//!
//! Every cell stores `A = E/r = 2πα + β`, `β` and `c` for albedo `ρ`,
//! incidence `θ` and exit radius `r` (lengths in mean free paths). Lookups
//! collapse the `ρ` axis first, then `θ`, then `r`; along `r` the energy
//! `E = A·r` is interpolated and divided back by `r`, which keeps the radial
//! density used for sampling identical to the one used for evaluation.

mod build;
mod io;

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use crate::catmullrom::{
    cdf_1d, cr_weights, integrate_1d, pdf_1d, sample_1d, Grid1D, SplineWeights,
};
use crate::error::{Error, Result};
use crate::medium::SignConvention;
use crate::wrapped_cauchy::{gwc_eval, gwc_sample, GwcParams, MAX_CONCENTRATION};

pub use build::{build_table, build_table_on, FitCensus, R0_FIT_RADIUS};
pub use io::{TableMetadata, FORMAT_VERSION, MAGIC};

/// Effective albedo above `1 + RHO_EFF_TOLERANCE` is reported as unphysical.
pub const RHO_EFF_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct TableGrids {
    pub rho: Grid1D,
    pub theta: Grid1D,
    pub r: Grid1D,
}

impl TableGrids {
    /// 100 albedos clustered towards 1, 10 uniform incidence angles
    /// covering `[0, π/2]` and 64 radii growing geometrically from 0.0025.
    pub fn standard() -> Self {
        let denom = 1.0 - (-8.0f64).exp();
        let rho = (0..100)
            .map(|i| (1.0 - (-8.0 * i as f64 / 99.0).exp()) / denom)
            .collect();
        let theta = (0..10).map(|i| i as f64 * PI / 18.0).collect();
        let mut r = vec![0.0];
        r.extend((1..64).map(|i| 0.0025 * 1.2f64.powi(i)));
        Self::new(rho, theta, r).expect("standard grids are valid")
    }

    pub fn new(rho: Vec<f64>, theta: Vec<f64>, r: Vec<f64>) -> Result<Self> {
        let grids = Self {
            rho: Grid1D::new(rho)?,
            theta: Grid1D::new(theta)?,
            r: Grid1D::new(r)?,
        };
        if grids.rho.first() < 0.0 || grids.rho.last() > 1.0 {
            return Err(Error::InvalidInput(
                "albedo nodes must lie in [0, 1]".into(),
            ));
        }
        if grids.theta.first() < 0.0 || grids.theta.last() > FRAC_PI_2 {
            return Err(Error::InvalidInput(
                "incidence nodes must lie in [0, pi/2]".into(),
            ));
        }
        if grids.r.first() != 0.0 {
            return Err(Error::InvalidInput(
                "the first radius node must be 0".into(),
            ));
        }
        Ok(grids)
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.rho.len(), self.theta.len(), self.r.len()]
    }

    pub fn cell_count(&self) -> usize {
        self.rho.len() * self.theta.len() * self.r.len()
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.theta.len() + j) * self.r.len() + k
    }

    pub fn r_max(&self) -> f64 {
        self.r.last()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BuildStats {
    /// Cells whose closed-form fit had to be projected or replaced.
    pub clamped_cells: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BssrdfTable {
    pub(crate) eta: f64,
    pub(crate) g: f64,
    pub(crate) convention: SignConvention,
    pub(crate) grids: TableGrids,
    pub(crate) a: Vec<f32>,
    pub(crate) beta: Vec<f32>,
    pub(crate) c: Vec<f32>,
    pub(crate) cum_energy: Vec<f32>,
    pub(crate) rho_eff: Vec<f32>,
    pub(crate) stats: BuildStats,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarSample {
    pub r: f64,
    pub phi: f64,
    /// Joint density over `(r, φ)`.
    pub pdf: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncidentSample {
    pub theta: f64,
    pub r: f64,
    pub phi: f64,
    pub phi_prime: f64,
    /// Product of the densities of `θ`, `(r, φ)` and `φ′`.
    pub pdf: f64,
}

/// Interpolation weights of one `(ρ, θ)` query.
#[derive(Debug, Clone, Copy)]
struct PlaneWeights {
    rho: SplineWeights,
    theta: SplineWeights,
}

impl BssrdfTable {
    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn convention(&self) -> SignConvention {
        self.convention
    }

    pub fn grids(&self) -> &TableGrids {
        &self.grids
    }

    pub fn build_stats(&self) -> BuildStats {
        self.stats
    }

    pub fn channel_a(&self) -> &[f32] {
        &self.a
    }

    pub fn channel_beta(&self) -> &[f32] {
        &self.beta
    }

    pub fn channel_c(&self) -> &[f32] {
        &self.c
    }

    pub fn cum_energy(&self) -> &[f32] {
        &self.cum_energy
    }

    /// Effective albedo at the grid nodes, `ρ`-major.
    pub fn rho_eff_nodes(&self) -> &[f32] {
        &self.rho_eff
    }

    /// Stored parameters of cell `(i, j, k)` with `α` recovered from `A`.
    pub fn cell_params(&self, i: usize, j: usize, k: usize) -> GwcParams {
        let idx = self.grids.index(i, j, k);
        let (a, beta) = (self.a[idx] as f64, self.beta[idx] as f64);
        GwcParams::new((a - beta) / TAU, beta, self.c[idx] as f64)
    }

    fn plane_weights(&self, rho: f64, theta: f64) -> Result<PlaneWeights> {
        let rho_w = cr_weights(&self.grids.rho, rho).map_err(|_| Error::OutOfDomain {
            axis: "rho",
            value: rho,
            lo: self.grids.rho.first(),
            hi: self.grids.rho.last(),
        })?;
        let theta_w = cr_weights(&self.grids.theta, theta).map_err(|_| Error::OutOfDomain {
            axis: "theta",
            value: theta,
            lo: self.grids.theta.first(),
            hi: self.grids.theta.last(),
        })?;
        Ok(PlaneWeights {
            rho: rho_w,
            theta: theta_w,
        })
    }

    /// Channel value at radius node `k`, interpolated over `(ρ, θ)`.
    fn collapse(&self, channel: &[f32], w: &PlaneWeights, k: usize) -> f64 {
        let [n_rho, n_theta, _] = self.grids.dims();
        let mut out = 0.0;
        for (j, wj) in w.theta.terms(n_theta) {
            let mut acc = 0.0;
            for (i, wi) in w.rho.terms(n_rho) {
                acc += wi * channel[self.grids.index(i, j, k)] as f64;
            }
            out += wj * acc;
        }
        out
    }

    fn energy_node(&self, w: &PlaneWeights, k: usize) -> f64 {
        self.collapse(&self.a, w, k) * self.grids.r.nodes()[k]
    }

    /// Interpolated model parameters, projected onto the valid region.
    /// `None` beyond the last radius node.
    fn params_at(&self, w: &PlaneWeights, r: f64) -> Result<Option<GwcParams>> {
        if !(r >= 0.0) {
            return Err(Error::InvalidInput(format!("radius {r} must be >= 0")));
        }
        if r > self.grids.r_max() {
            return Ok(None);
        }
        let wr = cr_weights(&self.grids.r, r)?;
        let n_r = self.grids.r.len();
        let (mut energy, mut beta, mut c) = (0.0, 0.0, 0.0);
        for (k, wk) in wr.terms(n_r) {
            energy += wk * self.energy_node(w, k);
            beta += wk * self.collapse(&self.beta, w, k);
            c += wk * self.collapse(&self.c, w, k);
        }
        let a = if r > 0.0 {
            energy / r
        } else {
            self.collapse(&self.a, w, 0)
        };
        Ok(Some(project(a, beta, c)))
    }

    /// Model profile at exit point `(r, φ)`; zero beyond the last radius.
    pub fn evaluate(&self, rho: f64, theta: f64, r: f64, phi: f64) -> Result<f64> {
        let w = self.plane_weights(rho, theta)?;
        Ok(match self.params_at(&w, r)? {
            Some(p) => gwc_eval(phi, &p).max(0.0),
            None => 0.0,
        })
    }

    /// Interpolated parameters at `(ρ, θ, r)`, or `None` beyond the last radius.
    pub fn params(&self, rho: f64, theta: f64, r: f64) -> Result<Option<GwcParams>> {
        let w = self.plane_weights(rho, theta)?;
        self.params_at(&w, r)
    }

    /// Effective albedo interpolated over `(ρ, θ)` from the stored nodes.
    pub fn rho_eff(&self, rho: f64, theta: f64) -> Result<f64> {
        let w = self.plane_weights(rho, theta)?;
        let n_theta = self.grids.theta.len();
        let n_rho = self.grids.rho.len();
        let mut out = 0.0;
        for (j, wj) in w.theta.terms(n_theta) {
            let mut acc = 0.0;
            for (i, wi) in w.rho.terms(n_rho) {
                acc += wi * self.rho_eff[i * n_theta + j] as f64;
            }
            out += wj * acc;
        }
        Ok(out.max(0.0))
    }

    /// Precomputes the radial distribution at `(ρ, θ)` for repeated
    /// sampling or density queries.
    pub fn exit_distribution(&self, rho: f64, theta: f64) -> Result<ExitDistribution<'_>> {
        let w = self.plane_weights(rho, theta)?;
        let [n_rho, n_theta, n_r] = self.grids.dims();
        let mut a_row = vec![0.0f64; n_r];
        for (j, wj) in w.theta.terms(n_theta) {
            for (i, wi) in w.rho.terms(n_rho) {
                let base = self.grids.index(i, j, 0);
                let wij = wi * wj;
                for (acc, v) in a_row.iter_mut().zip(&self.a[base..base + n_r]) {
                    *acc += wij * *v as f64;
                }
            }
        }
        let energy: Vec<f64> = a_row
            .iter()
            .zip(self.grids.r.nodes())
            .map(|(a, r)| a * r)
            .collect();
        let (cumulative, total) = integrate_1d(&self.grids.r, &energy, None)?;
        Ok(ExitDistribution {
            table: self,
            weights: w,
            energy,
            cumulative,
            total,
        })
    }

    pub fn sample_exit(&self, rho: f64, theta: f64, u1: f64, u2: f64) -> Result<PolarSample> {
        self.exit_distribution(rho, theta)?.sample(u1, u2)
    }

    pub fn pdf_exit(&self, rho: f64, theta: f64, r: f64, phi: f64) -> Result<f64> {
        self.exit_distribution(rho, theta)?.pdf(r, phi)
    }

    /// Incidence angle drawn from the effective albedo at `ρ`, then an exit
    /// point from [`Self::sample_exit`] and a uniform azimuth `φ′`.
    pub fn sample_incident(
        &self,
        rho: f64,
        u0: f64,
        u1: f64,
        u2: f64,
        u3: f64,
    ) -> Result<IncidentSample> {
        let dist = self.incident_distribution(rho)?;
        let (theta, pdf_theta) = dist.sample(u0)?;
        let exit = self.sample_exit(rho, theta, u1, u2)?;
        if !(0.0..=1.0).contains(&u3) {
            return Err(Error::InvalidInput(format!("u3 = {u3} outside [0, 1]")));
        }
        let phi_prime = -PI + TAU * u3;
        Ok(IncidentSample {
            theta,
            r: exit.r,
            phi: exit.phi,
            phi_prime,
            pdf: pdf_theta * exit.pdf / TAU,
        })
    }

    /// Density of incidence angles at albedo `ρ` used by
    /// [`Self::sample_incident`].
    pub fn incident_distribution(&self, rho: f64) -> Result<IncidentDistribution<'_>> {
        let w = self.plane_weights(rho, self.grids.theta.first())?;
        let n_theta = self.grids.theta.len();
        let n_rho = self.grids.rho.len();
        let row: Vec<f64> = (0..n_theta)
            .map(|j| {
                w.rho
                    .terms(n_rho)
                    .map(|(i, wi)| wi * self.rho_eff[i * n_theta + j] as f64)
                    .sum()
            })
            .collect();
        let (cumulative, total) = integrate_1d(&self.grids.theta, &row, None)?;
        if !(total > 0.0) {
            return Err(Error::ZeroMass);
        }
        Ok(IncidentDistribution {
            grid: &self.grids.theta,
            row,
            cumulative,
            total,
        })
    }
}

fn project(a: f64, beta: f64, c: f64) -> GwcParams {
    let beta = beta.max(0.0);
    let c = c.clamp(0.0, MAX_CONCENTRATION);
    let alpha = ((a - beta) / TAU).max(GwcParams::alpha_floor(beta, c));
    GwcParams::new(alpha, beta, c)
}

/// Radial energy profile at a fixed `(ρ, θ)`.
#[derive(Debug, Clone)]
pub struct ExitDistribution<'a> {
    table: &'a BssrdfTable,
    weights: PlaneWeights,
    energy: Vec<f64>,
    cumulative: Vec<f64>,
    total: f64,
}

impl ExitDistribution<'_> {
    /// `∫ E(r) dr` of the interpolated profile.
    pub fn total_energy(&self) -> f64 {
        self.total
    }

    pub fn radial_pdf(&self, r: f64) -> Result<f64> {
        if !(self.total > 0.0) {
            return Err(Error::ZeroMass);
        }
        if !(r >= 0.0) {
            return Err(Error::InvalidInput(format!("radius {r} must be >= 0")));
        }
        if r > self.table.grids.r_max() {
            return Ok(0.0);
        }
        pdf_1d(&self.table.grids.r, &self.energy, self.total, r)
    }

    pub fn pdf(&self, r: f64, phi: f64) -> Result<f64> {
        let radial = self.radial_pdf(r)?;
        if radial == 0.0 {
            return Ok(0.0);
        }
        let Some(p) = self.table.params_at(&self.weights, r)? else {
            return Ok(0.0);
        };
        let mass = p.mass();
        if !(mass > 0.0) {
            return Ok(0.0);
        }
        Ok(radial * gwc_eval(phi, &p).max(0.0) / mass)
    }

    /// Draws a radius from the energy profile, then an azimuth from the
    /// angular profile at that radius. The returned density is zero only
    /// for draws landing exactly where the radial profile vanishes.
    pub fn sample(&self, u1: f64, u2: f64) -> Result<PolarSample> {
        if !(self.total > 0.0) {
            return Err(Error::ZeroMass);
        }
        if !(0.0..=1.0).contains(&u2) {
            return Err(Error::InvalidInput(format!("u2 = {u2} outside [0, 1]")));
        }
        let (r, _) = sample_1d(&self.table.grids.r, &self.energy, &self.cumulative, u1)?;
        let phi = match self.table.params_at(&self.weights, r)? {
            Some(p) if p.mass() > 0.0 => gwc_sample(u2, &p)?,
            _ => -PI + TAU * u2,
        };
        let pdf = self.pdf(r, phi)?;
        Ok(PolarSample { r, phi, pdf })
    }
}

/// Density of incidence angles proportional to the effective albedo.
#[derive(Debug, Clone)]
pub struct IncidentDistribution<'a> {
    grid: &'a Grid1D,
    row: Vec<f64>,
    cumulative: Vec<f64>,
    total: f64,
}

impl IncidentDistribution<'_> {
    pub fn pdf(&self, theta: f64) -> Result<f64> {
        pdf_1d(self.grid, &self.row, self.total, theta)
    }

    pub fn cdf(&self, theta: f64) -> Result<f64> {
        cdf_1d(self.grid, &self.row, &self.cumulative, theta)
    }

    pub fn sample(&self, u: f64) -> Result<(f64, f64)> {
        sample_1d(self.grid, &self.row, &self.cumulative, u)
    }
}
