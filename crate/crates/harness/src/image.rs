//! Float images with PFM I/O and tone-mapped PNG output.

use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{io_err, HarnessError, Result};

/// Row-major float image, row 0 at the top, 1 or 3 interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        assert!(channels == 1 || channels == 3, "1 or 3 channels");
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn at(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn channel_max(&self, c: usize) -> f32 {
        self.data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .fold(0.0f32, |m, v| m.max(*v))
    }

    /// Rotation by 90° counter-clockwise (square images only).
    pub fn rot90(&self) -> Image {
        assert_eq!(self.width, self.height, "rot90 needs a square image");
        let n = self.width;
        let mut out = Image::new(n, n, self.channels);
        for y in 0..n {
            for x in 0..n {
                for c in 0..self.channels {
                    out.data[((n - 1 - x) * n + y) * self.channels + c] = self.at(x, y, c);
                }
            }
        }
        out
    }

    pub fn to_pfm(&self) -> Vec<u8> {
        let tag = if self.channels == 3 { "PF" } else { "Pf" };
        let mut out = format!("{tag}\n{} {}\n-1.0\n", self.width, self.height).into_bytes();
        let row = self.width * self.channels;
        for y in (0..self.height).rev() {
            for v in &self.data[y * row..(y + 1) * row] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_pfm(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| HarnessError::Image(m.to_string());
        // Header: three whitespace-separated tokens, one whitespace byte, data.
        let mut tokens = Vec::new();
        let mut pos = 0;
        while tokens.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            tokens
                .push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-text header"))?);
        }
        pos += 1;
        let channels = match tokens[0] {
            "PF" => 3,
            "Pf" => 1,
            _ => return Err(bad("not a PFM file")),
        };
        let width: usize = tokens[1].parse().map_err(|_| bad("bad width"))?;
        let height: usize = tokens[2].parse().map_err(|_| bad("bad height"))?;
        let scale: f32 = tokens[3].parse().map_err(|_| bad("bad scale"))?;
        let little = scale < 0.0;
        let row = width * channels;
        let need = row * height * 4;
        let body = bytes.get(pos..).ok_or_else(|| bad("missing data"))?;
        if body.len() != need {
            return Err(bad(&format!(
                "expected {need} data bytes, found {}",
                body.len()
            )));
        }
        let mut img = Image::new(width, height, channels);
        for (k, chunk) in body.chunks_exact(4).enumerate() {
            let b: [u8; 4] = chunk.try_into().unwrap();
            let v = if little {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            };
            let (file_row, col) = (k / row, k % row);
            img.data[(height - 1 - file_row) * row + col] = v;
        }
        Ok(img)
    }

    pub fn write_pfm(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_pfm()).map_err(io_err(path))
    }

    pub fn read_pfm(path: &Path) -> Result<Self> {
        Self::from_pfm(&std::fs::read(path).map_err(io_err(path))?)
    }

    pub fn write_png(&self, path: &Path, tone: &ToneMap) -> Result<()> {
        let file = std::fs::File::create(path).map_err(io_err(path))?;
        let mut enc =
            png::Encoder::new(BufWriter::new(file), self.width as u32, self.height as u32);
        enc.set_color(if self.channels == 3 {
            png::ColorType::Rgb
        } else {
            png::ColorType::Grayscale
        });
        enc.set_depth(png::BitDepth::Eight);
        let pixels: Vec<u8> = self.data.iter().map(|v| tone.apply(*v as f64)).collect();
        let mut w = enc
            .write_header()
            .map_err(|e| HarnessError::Image(e.to_string()))?;
        w.write_image_data(&pixels)
            .map_err(|e| HarnessError::Image(e.to_string()))?;
        w.finish().map_err(|e| HarnessError::Image(e.to_string()))?;
        Ok(())
    }
}

/// Display mapping recorded next to every PNG.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToneMap {
    pub exposure: f64,
    pub gamma: f64,
    /// If set, values are shown on a log scale spanning this many decades
    /// below `1 / exposure`.
    pub log_decades: Option<f64>,
}

impl ToneMap {
    pub const GAMMA: f64 = 2.2;

    /// Linear mapping that puts `white` at full intensity.
    pub fn linear(white: f64) -> Self {
        Self {
            exposure: if white > 0.0 { 1.0 / white } else { 1.0 },
            gamma: Self::GAMMA,
            log_decades: None,
        }
    }

    pub fn log(white: f64, decades: f64) -> Self {
        Self {
            log_decades: Some(decades),
            gamma: 1.0,
            ..Self::linear(white)
        }
    }

    pub fn apply(&self, v: f64) -> u8 {
        let x = v * self.exposure;
        let y = match self.log_decades {
            Some(d) if x > 0.0 => 1.0 + x.log10() / d,
            Some(_) => 0.0,
            None => x,
        };
        (y.clamp(0.0, 1.0).powf(1.0 / self.gamma) * 255.0).round() as u8
    }
}

/// Writes `value` as pretty JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| HarnessError::Invalid(e.to_string()))?;
    w.write_all(b"\n").map_err(io_err(path))
}
