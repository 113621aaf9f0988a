//! Wrapped Cauchy distribution and the General Wrapped Cauchy (GWC)
//! angular model `f(φ) = α + β pdf_WC(φ; c)`.
//!
//! A GWC is fitted in closed form through three anchor azimuths. Negative
//! pedestals are allowed as long as the function stays non-negative on
//! `[-π, π]`, i.e. `α ≥ -β pdf_WC(π; c)`; see [`GwcParams::alpha_floor`].

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest concentration a fit is clamped to.
pub const MAX_CONCENTRATION: f64 = 1.0 - 1e-6;

/// Beyond this the WC concentration `c ≈ 1/(2a)` is numerically zero and
/// the anchors are treated like the degenerate `f2 = f3` case.
const MAX_ANCHOR_RATIO: f64 = 1e6;

const SAMPLE_MAX_ITERATIONS: usize = 64;

pub fn wc_pdf(phi: f64, c: f64) -> f64 {
    (1.0 - c * c) / (TAU * (1.0 + c * c - 2.0 * c * phi.cos()))
}

pub fn wc_cdf(phi: f64, c: f64) -> f64 {
    if phi <= -PI {
        return 0.0;
    }
    if phi >= PI {
        return 1.0;
    }
    0.5 + (((1.0 + c) / (1.0 - c)) * (0.5 * phi).tan()).atan() / PI
}

pub fn wc_invcdf(u: f64, c: f64) -> f64 {
    if u <= 0.0 {
        return -PI;
    }
    if u >= 1.0 {
        return PI;
    }
    2.0 * (((1.0 - c) / (1.0 + c)) * (PI * (u - 0.5)).tan()).atan()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GwcParams {
    pub alpha: f64,
    pub beta: f64,
    pub c: f64,
}

impl GwcParams {
    pub fn new(alpha: f64, beta: f64, c: f64) -> Self {
        Self { alpha, beta, c }
    }

    /// Smallest pedestal keeping the function non-negative everywhere.
    pub fn alpha_floor(beta: f64, c: f64) -> f64 {
        -beta * wc_pdf(PI, c)
    }

    /// `∫ f dφ = 2πα + β`.
    pub fn mass(&self) -> f64 {
        TAU * self.alpha + self.beta
    }

    pub fn is_valid(&self) -> bool {
        self.alpha.is_finite()
            && self.beta.is_finite()
            && self.beta >= 0.0
            && (0.0..1.0).contains(&self.c)
            && self.alpha >= Self::alpha_floor(self.beta, self.c) * (1.0 + 1e-12)
    }
}

pub fn gwc_eval(phi: f64, p: &GwcParams) -> f64 {
    p.alpha + p.beta * wc_pdf(phi, p.c)
}

pub fn gwc_cdf(phi: f64, p: &GwcParams) -> Result<f64> {
    let mass = p.mass();
    if !(mass > 0.0) {
        return Err(Error::ZeroMass);
    }
    if phi <= -PI {
        return Ok(0.0);
    }
    if phi >= PI {
        return Ok(1.0);
    }
    Ok((p.alpha * (phi + PI) + p.beta * wc_cdf(phi, p.c)) / mass)
}

/// Inverse of [`gwc_cdf`] by safeguarded Newton iteration started from the
/// pure Wrapped Cauchy inverse.
pub fn gwc_sample(u: f64, p: &GwcParams) -> Result<f64> {
    let mass = p.mass();
    if !(mass > 0.0) {
        return Err(Error::ZeroMass);
    }
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::InvalidInput(format!("u = {u} outside [0, 1]")));
    }
    if u == 0.0 {
        return Ok(-PI);
    }
    if u == 1.0 {
        return Ok(PI);
    }
    let (mut lo, mut hi) = (-PI, PI);
    let mut phi = wc_invcdf(u, p.c);
    for _ in 0..SAMPLE_MAX_ITERATIONS {
        let err = gwc_cdf(phi, p)? - u;
        if err.abs() <= 1e-13 {
            return Ok(phi);
        }
        if err > 0.0 {
            hi = phi;
        } else {
            lo = phi;
        }
        if hi - lo <= 4.0 * f64::EPSILON * PI {
            return Ok(phi);
        }
        let density = gwc_eval(phi, p) / mass;
        let step = phi - err / density;
        phi = if density > 0.0 && step > lo && step < hi {
            step
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::IterationLimit {
        iterations: SAMPLE_MAX_ITERATIONS,
    })
}

/// `E = (2πα + β) r`.
pub fn energy_from_params(p: &GwcParams, r: f64) -> f64 {
    p.mass() * r
}

pub fn alpha_from_energy(energy: f64, beta: f64, r: f64) -> Result<f64> {
    if r == 0.0 {
        return Err(Error::InvalidInput(
            "pedestal is undetermined at r = 0".into(),
        ));
    }
    Ok((energy / r - beta) / TAU)
}

/// Cosines of the three fitting azimuths, strictly decreasing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorSet {
    cos_phi: [f64; 3],
}

impl AnchorSet {
    /// Anchors tuned for low relative error of the fitted profile.
    pub const OPTIMIZED: AnchorSet = AnchorSet {
        cos_phi: [0.9530, 0.4050, -0.7527],
    };

    pub fn new(cos_phi_1: f64, cos_phi_2: f64, cos_phi_3: f64) -> Result<Self> {
        let c = [cos_phi_1, cos_phi_2, cos_phi_3];
        if c.iter().any(|v| !(-1.0..=1.0).contains(v)) || !(c[0] > c[1] && c[1] > c[2]) {
            return Err(Error::InvalidInput(format!(
                "anchor cosines must be strictly decreasing in [-1, 1]: {c:?}"
            )));
        }
        Ok(Self { cos_phi: c })
    }

    pub fn cosines(&self) -> [f64; 3] {
        self.cos_phi
    }

    /// Anchor azimuths in `[0, π]`.
    pub fn angles(&self) -> [f64; 3] {
        self.cos_phi.map(f64::acos)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitStatus {
    /// Closed-form solution, passes through all three anchors.
    Exact,
    /// `f2 = f3` (or numerically linear in `cos φ`): a flat profile at `f1`.
    Degenerate,
    /// The closed form left the valid region and was projected back.
    Clamped,
    /// No real concentration exists (`a² < 1`): flat profile at the anchor mean.
    Fallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GwcFit {
    pub params: GwcParams,
    pub status: FitStatus,
}

/// Closed-form GWC through `(φ_i, f_i)` for the three anchors.
pub fn gwc_fit(f1: f64, f2: f64, f3: f64, anchors: &AnchorSet) -> Result<GwcFit> {
    let f = [f1, f2, f3];
    if f.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidInput(format!(
            "anchor values must be finite and non-negative: {f:?}"
        )));
    }
    let [x1, x2, x3] = anchors.cos_phi;
    let degenerate = GwcFit {
        params: GwcParams::new(0.0, TAU * f1, 0.0),
        status: FitStatus::Degenerate,
    };
    if (f2 - f3).abs() <= 1e-9 * f1 {
        return Ok(degenerate);
    }
    let k = (x1 - x2) / (x2 - x3);
    let big_k = (f1 - f2) / (f2 - f3);
    let a = (big_k * x1 - k * x3) / (big_k - k);
    if !a.is_finite() || a.abs() > MAX_ANCHOR_RATIO {
        return Ok(degenerate);
    }
    let mean = (f1 + f2 + f3) / 3.0;
    if a < 1.0 {
        return Ok(GwcFit {
            params: GwcParams::new(0.0, TAU * mean, 0.0),
            status: FitStatus::Fallback,
        });
    }
    let b = (a * a - 1.0).sqrt();
    let c = a - b;
    // 1/(a - x1) - 1/(a - x3) written without cancellation.
    let beta = TAU * (f1 - f3) * (a - x1) * (a - x3) / (b * (x1 - x3));
    let alpha = f1 - beta * b / (TAU * (a - x1));
    let raw = GwcParams::new(alpha, beta, c);
    if raw.is_valid() && c <= MAX_CONCENTRATION {
        return Ok(GwcFit {
            params: raw,
            status: FitStatus::Exact,
        });
    }
    Ok(GwcFit {
        params: project_fit(raw, mean, anchors),
        status: FitStatus::Clamped,
    })
}

/// Pulls an out-of-range solution back into the valid region while keeping
/// the mean over the anchors.
fn project_fit(raw: GwcParams, mean: f64, anchors: &AnchorSet) -> GwcParams {
    let c = raw.c.clamp(0.0, MAX_CONCENTRATION);
    if c == 0.0 || raw.beta <= 0.0 {
        return GwcParams::new(mean, 0.0, c);
    }
    let anchor_pdf = anchors
        .cos_phi
        .iter()
        .map(|x| wc_pdf(x.acos(), c))
        .sum::<f64>()
        / 3.0;
    let floor_pdf = wc_pdf(PI, c);
    let alpha = raw.alpha.max(GwcParams::alpha_floor(raw.beta, c));
    let beta = (mean - alpha) / anchor_pdf;
    if beta >= 0.0 && alpha >= GwcParams::alpha_floor(beta, c) {
        return GwcParams::new(alpha, beta, c);
    }
    // Profile touching zero at φ = π.
    let beta = mean / (anchor_pdf - floor_pdf);
    GwcParams::new(-beta * floor_pdf, beta, c)
}
