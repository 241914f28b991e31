//! Core flow-field and video data types.
//!
//! A [`FlowField`] stores per-pixel displacement as two row-major planes
//! (`u` horizontal, `v` vertical) in pixels per frame gap. A [`PolarFlow`]
//! is its magnitude/angle form with the magnitude normalized to `[0, 1]`
//! and the normalization factor kept in `scale`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where a flow field came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowSource {
    Estimated,
    Ingested,
    Corrected,
}

/// Dense optical flow between two frames separated by `stride` frame gaps.
///
/// Invariants: `u.len() == v.len() == width * height`, all values finite.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub u: Vec<f32>,
    pub v: Vec<f32>,
    pub stride: usize,
    pub source: FlowSource,
}

impl FlowField {
    pub fn new(
        width: usize,
        height: usize,
        u: Vec<f32>,
        v: Vec<f32>,
        stride: usize,
        source: FlowSource,
    ) -> Result<Self> {
        if width == 0 || height == 0 || width > 100_000 || height > 100_000 {
            return Err(Error::DimensionOverflow {
                width: width as i64,
                height: height as i64,
            });
        }
        let n = width * height;
        if u.len() != n || v.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "flow planes have {}/{} values for {}x{}",
                u.len(),
                v.len(),
                width,
                height
            )));
        }
        if stride == 0 {
            return Err(Error::InvalidConfig("stride must be >= 1".into()));
        }
        let field = FlowField {
            width,
            height,
            u,
            v,
            stride,
            source,
        };
        field.check_finite()?;
        Ok(field)
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField {
            width,
            height,
            u: vec![0.0; width * height],
            v: vec![0.0; width * height],
            stride: 1,
            source: FlowSource::Estimated,
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.u.iter().chain(self.v.iter()).all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFiniteValue("flow field".into()))
        }
    }

    /// Euclidean magnitude at pixel `i`.
    pub fn magnitude_at(&self, i: usize) -> f64 {
        let (u, v) = (self.u[i] as f64, self.v[i] as f64);
        (u * u + v * v).sqrt()
    }

    /// Mean Euclidean magnitude over all pixels.
    pub fn mean_magnitude(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        (0..self.len()).map(|i| self.magnitude_at(i)).sum::<f64>() / self.len() as f64
    }
}

/// Magnitude/angle form of a flow field.
///
/// `m` is normalized to `[0, 1]`; `scale` is the positive factor that maps
/// it back to pixel units (1 when the source field was identically zero).
/// `phi` is in `(-pi, pi]`, with the convention that `u` is the sine-side
/// argument and `v` the cosine-side one; pixels with zero magnitude carry
/// `phi = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarFlow {
    pub width: usize,
    pub height: usize,
    pub m: Vec<f32>,
    pub phi: Vec<f32>,
    pub scale: f32,
}

impl PolarFlow {
    pub fn new(width: usize, height: usize, m: Vec<f32>, phi: Vec<f32>, scale: f32) -> Result<Self> {
        let n = width * height;
        if m.len() != n || phi.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "polar planes have {}/{} values for {}x{}",
                m.len(),
                phi.len(),
                width,
                height
            )));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidConfig(format!("scale {scale} must be > 0")));
        }
        for &x in &m {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::InvalidConfig(format!(
                    "normalized magnitude {x} outside [0, 1]"
                )));
            }
        }
        for &a in &phi {
            if !a.is_finite() || a <= -std::f32::consts::PI || a > std::f32::consts::PI {
                return Err(Error::InvalidConfig(format!("angle {a} outside (-pi, pi]")));
            }
        }
        Ok(PolarFlow {
            width,
            height,
            m,
            phi,
            scale,
        })
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A single grayscale frame, luminance in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Frame {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "frame has {} values for {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Frame {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Frame {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Bilinear sample with replicated edges.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let xc = x.clamp(0.0, (self.width - 1) as f64);
        let yc = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = xc.floor() as usize;
        let y0 = yc.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = xc - x0 as f64;
        let fy = yc - y0 as f64;
        let p00 = self.at(x0, y0) as f64;
        let p10 = self.at(x1, y0) as f64;
        let p01 = self.at(x0, y1) as f64;
        let p11 = self.at(x1, y1) as f64;
        p00 * (1.0 - fx) * (1.0 - fy) + p10 * fx * (1.0 - fy) + p01 * (1.0 - fx) * fy + p11 * fx * fy
    }
}

/// An ordered sequence of equally sized grayscale frames.
#[derive(Debug, Clone)]
pub struct VideoClip {
    pub frames: Vec<Frame>,
    pub width: usize,
    pub height: usize,
    pub label: Option<usize>,
}

impl VideoClip {
    pub fn new(frames: Vec<Frame>, label: Option<usize>) -> Result<Self> {
        let first = frames.first().ok_or(Error::TooFewFrames(0))?;
        let (width, height) = (first.width, first.height);
        for f in &frames {
            if f.width != width || f.height != height {
                return Err(Error::MixedDimensions(width, height, f.width, f.height));
            }
        }
        Ok(VideoClip {
            frames,
            width,
            height,
            label,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }
}
