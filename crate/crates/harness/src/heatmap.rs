//! Beam-oracle profile sampled over a square patch of the surface.

use bssrdf_core::{BeamOracle, MediumParams, SignConvention};
use rayon::prelude::*;

use crate::error::{HarnessError, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatmapSpec {
    pub theta: f64,
    /// Side length of the patch in mean free paths, centred on the entry point.
    pub extent: f64,
    pub resolution: usize,
    pub beam_samples: usize,
}

/// Pixel `(i, j)` centre on the surface; `+x` is the incidence azimuth,
/// row 0 is at `+y`.
pub fn pixel_center(spec: &HeatmapSpec, i: usize, j: usize) -> (f64, f64) {
    let h = spec.extent / spec.resolution as f64;
    let half = 0.5 * spec.extent;
    ((i as f64 + 0.5) * h - half, half - (j as f64 + 0.5) * h)
}

pub fn emit_heatmap(
    params: &MediumParams,
    convention: SignConvention,
    spec: &HeatmapSpec,
) -> Result<Image> {
    if !(spec.extent > 0.0 && spec.extent.is_finite()) {
        return Err(HarnessError::Invalid(format!(
            "extent must be positive, got {}",
            spec.extent
        )));
    }
    if spec.resolution == 0 || spec.beam_samples == 0 {
        return Err(HarnessError::Invalid(
            "resolution and beam samples must be positive".into(),
        ));
    }
    let oracle = BeamOracle::new(params, spec.theta, convention)?;
    let n = spec.resolution;
    let rows: Vec<Vec<f32>> = (0..n)
        .into_par_iter()
        .map(|j| {
            (0..n)
                .map(|i| {
                    let (x, y) = pixel_center(spec, i, j);
                    let r = (x * x + y * y).sqrt();
                    let phi = y.atan2(x);
                    Ok(oracle.eval(r, phi, spec.beam_samples)? as f32)
                })
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;
    let mut img = Image::new(n, n, 1);
    img.data = rows.into_iter().flatten().collect();
    Ok(img)
}

/// Intensity-weighted mean position of a single-channel field.
pub fn centroid(img: &Image, spec: &HeatmapSpec) -> (f64, f64) {
    let (mut sx, mut sy, mut s) = (0.0, 0.0, 0.0);
    for j in 0..img.height {
        for i in 0..img.width {
            let v = img.at(i, j, 0) as f64;
            let (x, y) = pixel_center(spec, i, j);
            sx += v * x;
            sy += v * y;
            s += v;
        }
    }
    (sx / s, sy / s)
}
