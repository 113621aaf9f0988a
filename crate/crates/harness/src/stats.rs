//! Relative error of the tabulated model against the beam oracle at
//! importance-sampled exit points.

use bssrdf_core::pbd::REFERENCE_BEAM_SAMPLES;
use bssrdf_core::{BeamOracle, BssrdfTable, MediumParams};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::rng;

/// Oracle values below this are too close to zero for a relative error.
pub const ORACLE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationConfig {
    pub rho: f64,
    pub theta: f64,
    pub eta: f64,
    pub g: f64,
}

/// Error summary, all errors in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean_rel_error: f64,
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
    pub n_samples: usize,
    pub excluded: usize,
    pub config: ValidationConfig,
}

/// Signed relative errors `(model - oracle) / oracle` of sampled points.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeErrors {
    pub errors: Vec<f64>,
    pub excluded: usize,
    pub config: ValidationConfig,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationPoint {
    pub r: f64,
    pub phi: f64,
    pub model: f64,
    pub oracle: f64,
}

/// Draws `n` exit points via the table's importance sampling and evaluates
/// model and oracle at each. Point `i` uses random stream `(seed, i)`.
pub fn sample_points(
    table: &BssrdfTable,
    rho: f64,
    theta: f64,
    n: usize,
    seed: u64,
    oracle_samples: usize,
) -> Result<Vec<ValidationPoint>> {
    if n == 0 {
        return Err(HarnessError::Invalid("n must be positive".into()));
    }
    let params = MediumParams::from_albedo(table.eta(), table.g(), rho)?;
    let oracle = BeamOracle::new(&params, theta, table.convention())?;
    let dist = table.exit_distribution(rho, theta)?;
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, i);
            let s = dist.sample(rng.random(), rng.random())?;
            Ok(ValidationPoint {
                r: s.r,
                phi: s.phi,
                model: table.evaluate(rho, theta, s.r, s.phi)?,
                oracle: oracle.eval(s.r, s.phi, oracle_samples)?,
            })
        })
        .collect()
}

pub fn relative_errors(
    table: &BssrdfTable,
    rho: f64,
    theta: f64,
    n: usize,
    seed: u64,
) -> Result<RelativeErrors> {
    let points = sample_points(table, rho, theta, n, seed, REFERENCE_BEAM_SAMPLES)?;
    let mut errors = Vec::with_capacity(points.len());
    let mut excluded = 0;
    for p in points {
        if p.oracle < ORACLE_FLOOR {
            excluded += 1;
        } else {
            errors.push((p.model - p.oracle) / p.oracle);
        }
    }
    Ok(RelativeErrors {
        errors,
        excluded,
        config: ValidationConfig {
            rho,
            theta,
            eta: table.eta(),
            g: table.g(),
        },
    })
}

pub fn validate(
    table: &BssrdfTable,
    rho: f64,
    theta: f64,
    n: usize,
    seed: u64,
) -> Result<ErrorStats> {
    ErrorStats::from_errors(&relative_errors(table, rho, theta, n, seed)?)
}

/// Nearest-rank percentile of sorted data.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

impl ErrorStats {
    pub fn from_errors(e: &RelativeErrors) -> Result<Self> {
        if e.errors.is_empty() {
            return Err(HarnessError::Invalid(
                "no point had a usable oracle value".into(),
            ));
        }
        let mut abs: Vec<f64> = e.errors.iter().map(|v| v.abs() * 100.0).collect();
        abs.sort_by(f64::total_cmp);
        Ok(Self {
            mean_rel_error: abs.iter().sum::<f64>() / abs.len() as f64,
            p50: percentile(&abs, 50.0),
            p95: percentile(&abs, 95.0),
            p99: percentile(&abs, 99.0),
            max: abs[abs.len() - 1],
            n_samples: abs.len(),
            excluded: e.excluded,
            config: e.config,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// Range of the bins in percent, `[-limit, limit]`.
    pub limit: f64,
    pub counts: Vec<u64>,
    pub below: u64,
    pub above: u64,
}

impl Histogram {
    /// Bins signed relative errors (fractions) in percent.
    pub fn from_errors(errors: &[f64], bins: usize, limit: f64) -> Result<Self> {
        if bins == 0 || !(limit > 0.0) {
            return Err(HarnessError::Invalid(
                "histogram needs bins > 0 and a positive range".into(),
            ));
        }
        let mut h = Self {
            limit,
            counts: vec![0; bins],
            below: 0,
            above: 0,
        };
        for e in errors {
            let pct = e * 100.0;
            if pct < -limit {
                h.below += 1;
            } else if pct > limit {
                h.above += 1;
            } else {
                let b = ((pct + limit) / (2.0 * limit) * bins as f64) as usize;
                h.counts[b.min(bins - 1)] += 1;
            }
        }
        Ok(h)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.below + self.above
    }

    /// Left edge of bin `i` in percent.
    pub fn edge(&self, i: usize) -> f64 {
        -self.limit + 2.0 * self.limit * i as f64 / self.counts.len() as f64
    }

    /// Bar chart as a standalone SVG document.
    pub fn to_svg(&self, title: &str) -> String {
        let (w, h, pad) = (640.0, 360.0, 40.0);
        let peak = self.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
        let bw = (w - 2.0 * pad) / self.counts.len() as f64;
        let mut out = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
             <text x=\"{pad}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{title}</text>\n"
        );
        for (i, c) in self.counts.iter().enumerate() {
            let bh = (h - 2.0 * pad) * *c as f64 / peak;
            out += &format!(
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"steelblue\"/>\n",
                pad + i as f64 * bw,
                h - pad - bh,
                bw.max(0.5),
                bh
            );
        }
        for (x, label) in [(pad, -self.limit), (w / 2.0, 0.0), (w - pad, self.limit)] {
            out += &format!(
                "<text x=\"{x:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{label}%</text>\n",
                h - pad + 16.0
            );
        }
        out += "</svg>\n";
        out
    }
}
