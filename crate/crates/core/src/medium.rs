//! Material parameters, dielectric Fresnel terms and the derived dipole
//! constants shared by the beam-diffusion oracle and the table builder.
//!
//! Fresnel moments use the hemispherical convention
//!
//! ```text
//! F_k(eta) = ∫_0^{π/2} F_r(eta, cos θ) sin θ cos^k θ dθ
//! ```
//!
//! evaluated with composite Simpson quadrature on [`FRESNEL_MOMENT_INTERVALS`]
//! intervals. `F_r` is the reflectance seen by light arriving from the
//! rarer side, so the moments are those of external reflection.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of Simpson intervals used for the Fresnel moments.
pub const FRESNEL_MOMENT_INTERVALS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MediumParams {
    pub eta: f64,
    pub g: f64,
    pub sigma_s: f64,
    pub sigma_a: f64,
}

impl MediumParams {
    pub fn new(eta: f64, g: f64, sigma_s: f64, sigma_a: f64) -> Result<Self> {
        let p = Self {
            eta,
            g,
            sigma_s,
            sigma_a,
        };
        p.validate()?;
        Ok(p)
    }

    /// Unit-extinction medium (`sigma_t = 1`) with the given single-scattering
    /// albedo. This is the parameterization every table is built in.
    pub fn from_albedo(eta: f64, g: f64, rho: f64) -> Result<Self> {
        Self::new(eta, g, rho, 1.0 - rho)
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.eta, self.g, self.sigma_s, self.sigma_a]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidInput(format!(
                "non-finite medium parameter: {self:?}"
            )));
        }
        if self.eta <= 1.0 {
            return Err(Error::InvalidInput(format!(
                "relative index of refraction must exceed 1, got {}",
                self.eta
            )));
        }
        if !(-1.0..=1.0).contains(&self.g) {
            return Err(Error::InvalidInput(format!(
                "mean cosine g must lie in [-1, 1], got {}",
                self.g
            )));
        }
        if self.sigma_s < 0.0 || self.sigma_a < 0.0 {
            return Err(Error::InvalidInput(
                "scattering and absorption coefficients must be non-negative".into(),
            ));
        }
        if self.sigma_t() <= 0.0 {
            return Err(Error::InvalidInput("extinction must be positive".into()));
        }
        Ok(())
    }

    pub fn sigma_t(&self) -> f64 {
        self.sigma_s + self.sigma_a
    }

    pub fn albedo(&self) -> f64 {
        self.sigma_s / self.sigma_t()
    }
}

/// Sign choices for the two ambiguous terms of the dipole. The default is
/// the literal form: a negative extrapolation offset `z_b`, and a virtual
/// vector-flux term weighted by `z_r + 2 z_b`.
///
/// * `flip_zb` negates `z_b` (classical positive extrapolation distance).
/// * `flip_virtual_flux` weights the virtual flux term by `z_r - 2 z_b`,
///   i.e. by `-z_v`, the form of the classical dipole difference.
///
/// The two bits are persisted in the table header.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignConvention {
    pub flip_zb: bool,
    pub flip_virtual_flux: bool,
}

impl SignConvention {
    pub const LITERAL: Self = Self {
        flip_zb: false,
        flip_virtual_flux: false,
    };

    pub fn bits(self) -> u32 {
        (self.flip_zb as u32) | ((self.flip_virtual_flux as u32) << 1)
    }

    pub fn from_bits(bits: u32) -> Result<Self> {
        if bits & !0b11 != 0 {
            return Err(Error::CorruptHeader(format!("unknown flag bits {bits:#x}")));
        }
        Ok(Self {
            flip_zb: bits & 1 != 0,
            flip_virtual_flux: bits & 2 != 0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub sigma_s_prime: f64,
    pub sigma_t_prime: f64,
    pub rho_prime: f64,
    /// Diffusion coefficient.
    pub d: f64,
    pub sigma_tr: f64,
    pub z_b: f64,
    pub c_phi: f64,
    pub c_e: f64,
    pub fresnel_m1: f64,
    pub fresnel_m2: f64,
    pub convention: SignConvention,
}

/// Unpolarized dielectric reflectance for light hitting an interface with
/// relative index `eta` (transmitted over incident) at incidence cosine
/// `cos_theta`. Total internal reflection returns 1.
pub fn fresnel_reflectance(eta: f64, cos_theta: f64) -> f64 {
    let cos_i = cos_theta.clamp(0.0, 1.0);
    let sin2_t = (1.0 - cos_i * cos_i) / (eta * eta);
    if sin2_t >= 1.0 {
        return 1.0;
    }
    let cos_t = (1.0 - sin2_t).sqrt();
    let r_s = (cos_i - eta * cos_t) / (cos_i + eta * cos_t);
    let r_p = (eta * cos_i - cos_t) / (eta * cos_i + cos_t);
    0.5 * (r_s * r_s + r_p * r_p)
}

/// `k`-th hemispherical moment of [`fresnel_reflectance`].
pub fn fresnel_moment(eta: f64, k: i32) -> f64 {
    let n = FRESNEL_MOMENT_INTERVALS;
    let h = FRAC_PI_2 / n as f64;
    let f = |theta: f64| {
        let (s, c) = theta.sin_cos();
        fresnel_reflectance(eta, c) * s * c.powi(k)
    };
    let mut sum = f(0.0) + f(FRAC_PI_2);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(i as f64 * h);
    }
    sum * h / 3.0
}

/// Snell refraction into the denser medium: returns `(sin θ', cos θ')`.
pub fn refract_cos(eta: f64, theta: f64) -> (f64, f64) {
    let sin_t = (theta.sin() / eta).clamp(0.0, 1.0);
    let cos_t = (1.0 - sin_t * sin_t).max(0.0).sqrt();
    (sin_t, cos_t)
}

pub fn derive_constants(
    params: &MediumParams,
    convention: SignConvention,
) -> Result<DerivedConstants> {
    params.validate()?;
    let sigma_s_prime = params.sigma_s * (1.0 - params.g);
    let sigma_t_prime = sigma_s_prime + params.sigma_a;
    if sigma_t_prime <= 0.0 {
        return Err(Error::InvalidInput(
            "reduced extinction sigma_t' is zero".into(),
        ));
    }
    let rho_prime = sigma_s_prime / sigma_t_prime;
    let d = (2.0 * params.sigma_a + sigma_s_prime) / (3.0 * sigma_t_prime * sigma_t_prime);
    let sigma_tr = (params.sigma_a / d).sqrt();
    let fresnel_m1 = fresnel_moment(params.eta, 1);
    let fresnel_m2 = fresnel_moment(params.eta, 2);
    let mut z_b = -2.0 * d * (1.0 + 3.0 * fresnel_m2) / (1.0 - 2.0 * fresnel_m1);
    if convention.flip_zb {
        z_b = -z_b;
    }
    Ok(DerivedConstants {
        sigma_s_prime,
        sigma_t_prime,
        rho_prime,
        d,
        sigma_tr,
        z_b,
        c_phi: (1.0 - 2.0 * fresnel_m1) / 4.0,
        c_e: (1.0 - 3.0 * fresnel_m2) / 2.0,
        fresnel_m1,
        fresnel_m2,
        convention,
    })
}
