//! Forward particle tracer for a cone of light hitting a semi-infinite slab
//! at `z = 0`. Each particle is refracted with Fresnel weighting, then
//! re-emitted through the tabulated profile of each colour channel.

use std::f64::consts::TAU;
use std::path::Path;

use bssrdf_core::medium::fresnel_reflectance;
use bssrdf_core::BssrdfTable;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, HarnessError, Result};
use crate::image::Image;
use crate::rng;

/// Particles per random stream; also the unit of parallel work.
const CHUNK: u64 = 1 << 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlabScene {
    /// Incidence angle of the cone axis, degrees.
    pub theta_deg: f64,
    /// Cone half-angle, degrees.
    pub cone_deg: f64,
    /// Distance from the cone apex to the surface along the axis.
    pub apex_distance: f64,
    pub center_x: f64,
    pub center_y: f64,
    pub sigma_s: f64,
    pub sigma_a_rgb: [f64; 3],
    pub eta: f64,
    pub g: f64,
    pub width: usize,
    pub height: usize,
    /// Physical width of the image; the height follows the pixel aspect.
    pub extent: f64,
    pub particles: u64,
    pub seed: u64,
}

impl Default for SlabScene {
    fn default() -> Self {
        Self {
            theta_deg: 60.0,
            cone_deg: 2.0,
            apex_distance: 10.0,
            center_x: 0.0,
            center_y: 0.0,
            sigma_s: 1.0,
            sigma_a_rgb: [0.01, 0.1, 1.0],
            eta: 1.33,
            g: 0.0,
            width: 128,
            height: 128,
            extent: 40.0,
            particles: 1_000_000,
            seed: 0,
        }
    }
}

impl SlabScene {
    /// Parses `key = value` lines; `#` starts a comment. Unlisted keys keep
    /// their defaults.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut s = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| HarnessError::Config {
                path: origin.to_string(),
                line: n + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got '{line}'")))?;
            let (key, value) = (key.trim(), value.trim());
            let num = |v: &str| {
                v.parse::<f64>()
                    .map_err(|_| err(format!("{key}: '{v}' is not a number")))
            };
            let int = |v: &str| {
                v.parse::<u64>()
                    .map_err(|_| err(format!("{key}: '{v}' is not an integer")))
            };
            match key {
                "theta_deg" => s.theta_deg = num(value)?,
                "cone_deg" => s.cone_deg = num(value)?,
                "apex_distance" => s.apex_distance = num(value)?,
                "center_x" => s.center_x = num(value)?,
                "center_y" => s.center_y = num(value)?,
                "sigma_s" => s.sigma_s = num(value)?,
                "sigma_a_rgb" => {
                    let parts: Vec<&str> = value
                        .split(|c: char| c == ',' || c.is_whitespace())
                        .filter(|p| !p.is_empty())
                        .collect();
                    if parts.len() != 3 {
                        return Err(err(format!(
                            "sigma_a_rgb needs 3 values, got {}",
                            parts.len()
                        )));
                    }
                    for (k, p) in parts.iter().enumerate() {
                        s.sigma_a_rgb[k] = num(p)?;
                    }
                }
                "eta" => s.eta = num(value)?,
                "g" => s.g = num(value)?,
                "width" => s.width = int(value)? as usize,
                "height" => s.height = int(value)? as usize,
                "extent" => s.extent = num(value)?,
                "particles" => s.particles = int(value)?,
                "seed" => s.seed = int(value)?,
                _ => return Err(err(format!("unknown key '{key}'"))),
            }
        }
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HarnessError::Invalid(m.to_string()));
        if !(0.0..90.0).contains(&self.theta_deg) {
            return bad("theta_deg must lie in [0, 90)");
        }
        if !(self.cone_deg >= 0.0 && self.theta_deg + self.cone_deg < 90.0) {
            return bad("cone must be non-negative and stay below the horizon");
        }
        if !(self.apex_distance > 0.0 && self.extent > 0.0) {
            return bad("apex_distance and extent must be positive");
        }
        if self.width == 0 || self.height == 0 || self.particles == 0 {
            return bad("width, height and particles must be positive");
        }
        if !(self.sigma_s >= 0.0) || self.sigma_a_rgb.iter().any(|a| !(*a >= 0.0)) {
            return bad("coefficients must be non-negative");
        }
        if self.sigma_a_rgb.iter().any(|a| !(self.sigma_s + a > 0.0)) {
            return bad("every channel needs positive extinction");
        }
        Ok(())
    }

    pub fn pixel_size(&self) -> f64 {
        self.extent / self.width as f64
    }

    pub fn extent_y(&self) -> f64 {
        self.pixel_size() * self.height as f64
    }

    /// Pixel holding surface point `(x, y)`, if any.
    pub fn pixel(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let h = self.pixel_size();
        let col = ((x + 0.5 * self.extent) / h).floor();
        let row = ((0.5 * self.extent_y() - y) / h).floor();
        if col >= 0.0 && row >= 0.0 && (col as usize) < self.width && (row as usize) < self.height {
            Some((col as usize, row as usize))
        } else {
            None
        }
    }

    pub fn pixel_center(&self, col: usize, row: usize) -> (f64, f64) {
        let h = self.pixel_size();
        (
            (col as f64 + 0.5) * h - 0.5 * self.extent,
            0.5 * self.extent_y() - (row as f64 + 0.5) * h,
        )
    }
}

/// Exitance image (energy per unit area, incident power normalized to 1).
pub fn trace_beam(scene: &SlabScene, tables: [&BssrdfTable; 3]) -> Result<Image> {
    scene.validate()?;
    for t in tables {
        if t.eta() != scene.eta || t.g() != scene.g {
            return Err(HarnessError::Invalid(format!(
                "table built for eta={} g={}, scene has eta={} g={}",
                t.eta(),
                t.g(),
                scene.eta,
                scene.g
            )));
        }
    }
    let chunks = scene.particles.div_ceil(CHUNK);
    let batch = (rayon::current_num_threads() as u64 * 4).max(1);
    let mut acc = vec![0.0f64; scene.width * scene.height * 3];
    let mut start = 0;
    while start < chunks {
        let end = (start + batch).min(chunks);
        let parts: Vec<Vec<f64>> = (start..end)
            .into_par_iter()
            .map(|c| trace_chunk(scene, tables, c))
            .collect::<Result<_>>()?;
        // Merge in chunk order so the sum is independent of scheduling.
        for part in parts {
            for (a, p) in acc.iter_mut().zip(part) {
                *a += p;
            }
        }
        start = end;
    }
    let area = scene.pixel_size() * scene.pixel_size();
    let norm = 1.0 / (scene.particles as f64 * area);
    let mut img = Image::new(scene.width, scene.height, 3);
    img.data = acc.iter().map(|v| (v * norm) as f32).collect();
    Ok(img)
}

fn trace_chunk(scene: &SlabScene, tables: [&BssrdfTable; 3], chunk: u64) -> Result<Vec<f64>> {
    let mut buf = vec![0.0f64; scene.width * scene.height * 3];
    let mut rng = rng::stream(scene.seed, chunk);
    let first = chunk * CHUNK;
    let count = CHUNK.min(scene.particles - first);

    let theta = scene.theta_deg.to_radians();
    let axis = [theta.sin(), 0.0, -theta.cos()];
    // Basis perpendicular to the axis.
    let e1 = [theta.cos(), 0.0, theta.sin()];
    let e2 = [0.0, 1.0, 0.0];
    let apex = [
        scene.center_x - scene.apex_distance * axis[0],
        scene.center_y,
        -scene.apex_distance * axis[2],
    ];
    let cos_max = scene.cone_deg.to_radians().cos();
    let rho: [f64; 3] = scene
        .sigma_a_rgb
        .map(|a| scene.sigma_s / (scene.sigma_s + a));
    let sigma_t: [f64; 3] = scene.sigma_a_rgb.map(|a| scene.sigma_s + a);

    for _ in 0..count {
        let cos_a = 1.0 - rng.random::<f64>() * (1.0 - cos_max);
        let sin_a = (1.0 - cos_a * cos_a).max(0.0).sqrt();
        let b = TAU * rng.random::<f64>();
        let d: [f64; 3] =
            std::array::from_fn(|k| cos_a * axis[k] + sin_a * (b.cos() * e1[k] + b.sin() * e2[k]));
        let t = -apex[2] / d[2];
        let hit = (apex[0] + t * d[0], apex[1] + t * d[1]);
        let cos_i = (-d[2]).clamp(0.0, 1.0);
        let theta_i = cos_i.acos();
        let psi = d[1].atan2(d[0]);
        let transmitted = 1.0 - fresnel_reflectance(scene.eta, cos_i);
        for c in 0..3 {
            let dist = tables[c].exit_distribution(rho[c], theta_i)?;
            let energy = dist.total_energy();
            if !(energy > 0.0) {
                continue;
            }
            let s = dist.sample(rng.random(), rng.random())?;
            let r = s.r / sigma_t[c];
            let ang = psi + s.phi;
            let (x, y) = (hit.0 + r * ang.cos(), hit.1 + r * ang.sin());
            if let Some((col, row)) = scene.pixel(x, y) {
                buf[(row * scene.width + col) * 3 + c] += transmitted * energy;
            }
        }
    }
    Ok(buf)
}

/// Energy-weighted mean position per channel, relative to the beam centre.
pub fn channel_centroids(img: &Image, scene: &SlabScene) -> [(f64, f64); 3] {
    std::array::from_fn(|c| {
        let (mut sx, mut sy, mut s) = (0.0, 0.0, 0.0);
        for row in 0..img.height {
            for col in 0..img.width {
                let v = img.at(col, row, c) as f64;
                let (x, y) = scene.pixel_center(col, row);
                sx += v * (x - scene.center_x);
                sy += v * (y - scene.center_y);
                s += v;
            }
        }
        (sx / s, sy / s)
    })
}

/// Energy-weighted RMS distance from the beam centre per channel.
pub fn channel_spread(img: &Image, scene: &SlabScene) -> [f64; 3] {
    std::array::from_fn(|c| {
        let (mut m2, mut s) = (0.0, 0.0);
        for row in 0..img.height {
            for col in 0..img.width {
                let v = img.at(col, row, c) as f64;
                let (x, y) = scene.pixel_center(col, row);
                m2 += v * ((x - scene.center_x).powi(2) + (y - scene.center_y).powi(2));
                s += v;
            }
        }
        (m2 / s).sqrt()
    })
}

/// Total energy leaving the image per channel.
pub fn channel_energy(img: &Image, scene: &SlabScene) -> [f64; 3] {
    let area = scene.pixel_size() * scene.pixel_size();
    std::array::from_fn(|c| {
        img.data
            .iter()
            .skip(c)
            .step_by(3)
            .map(|v| *v as f64 * area)
            .sum()
    })
}

/// Largest per-pixel difference between the image and its quarter turn,
/// relative to the channel peak, maximised over channels.
pub fn rotation_residual(img: &Image) -> f64 {
    let rot = img.rot90();
    (0..img.channels)
        .map(|c| {
            let peak = img.channel_max(c) as f64;
            let worst = img
                .data
                .iter()
                .zip(&rot.data)
                .skip(c)
                .step_by(img.channels)
                .map(|(a, b)| (*a as f64 - *b as f64).abs())
                .fold(0.0, f64::max);
            if peak > 0.0 {
                worst / peak
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}
