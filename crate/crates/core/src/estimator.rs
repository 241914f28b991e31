//! Multi-stride frame pairing and a self-contained classical variational
//! optical-flow estimator (brightness constancy + quadratic smoothness,
//! solved by per-pixel Gauss-Seidel sweeps inside a coarse-to-fine
//! pyramid).
//!
//! Externally computed flow (TV-L1, LDOF, ...) is ingested as `.flo`
//! files instead of being reimplemented; this estimator exists so the
//! pipeline runs with no external tools.

use std::cell::Cell;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{FlowField, FlowSource, Frame, VideoClip};

/// Ordered set of frame gaps used to form motion streams.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrideSet {
    strides: Vec<usize>,
}

impl StrideSet {
    pub fn new(strides: Vec<usize>) -> Result<Self> {
        if strides.is_empty() {
            return Err(Error::InvalidConfig("stride set is empty".into()));
        }
        for w in strides.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidConfig(format!(
                    "strides must be strictly increasing, got {:?} then {:?}",
                    w[0], w[1]
                )));
            }
        }
        if strides[0] == 0 {
            return Err(Error::InvalidConfig("strides must be >= 1".into()));
        }
        Ok(StrideSet { strides })
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }
}

impl Default for StrideSet {
    /// The long-clip default set; short clips lose the long strides
    /// through the drop rule.
    fn default() -> Self {
        StrideSet {
            strides: vec![1, 2, 4, 6, 8, 12, 15, 30, 45],
        }
    }
}

/// A frame pair (start, start + stride) belonging to one stride stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FramePair {
    pub start: usize,
    pub stride: usize,
}

impl FramePair {
    pub fn end(&self) -> usize {
        self.start + self.stride
    }
}

/// Solver parameters for [`estimate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Smoothness weight.
    pub alpha: f64,
    /// Gauss-Seidel sweeps per pyramid level.
    pub iterations: usize,
    pub pyramid_levels: usize,
    /// Downsampling factor between levels, in (0, 1).
    pub pyramid_scale: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            alpha: 15.0,
            iterations: 100,
            pyramid_levels: 4,
            pyramid_scale: 0.5,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidConfig(format!("alpha {} must be > 0", self.alpha)));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be >= 1".into()));
        }
        if self.pyramid_levels == 0 {
            return Err(Error::InvalidConfig("pyramid_levels must be >= 1".into()));
        }
        if !(self.pyramid_scale > 0.0 && self.pyramid_scale < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "pyramid_scale {} must be in (0, 1)",
                self.pyramid_scale
            )));
        }
        Ok(())
    }
}

thread_local! {
    static ESTIMATE_CALLS: Cell<u64> = const { Cell::new(0) };
}

/// Per-thread count of [`estimate`] invocations. Used to assert that a
/// code path performs no flow computation (the prediction path must not).
pub fn estimate_call_count() -> u64 {
    ESTIMATE_CALLS.with(|c| c.get())
}

pub fn reset_estimate_call_count() {
    ESTIMATE_CALLS.with(|c| c.set(0));
}

/// Enumerate frame pairs for every stride. A stride with no room in the
/// clip contributes no pairs: that stream is dropped.
pub fn pair_frames(clip: &VideoClip, strides: &StrideSet) -> Result<Vec<FramePair>> {
    let n = clip.frame_count();
    if n < 2 {
        return Err(Error::TooFewFrames(n));
    }
    let mut pairs = Vec::new();
    for &s in strides.strides() {
        if s >= n {
            continue;
        }
        for t in 0..n - s {
            pairs.push(FramePair { start: t, stride: s });
        }
    }
    Ok(pairs)
}

struct Level {
    w: usize,
    h: usize,
    ix: Vec<f64>,
    iy: Vec<f64>,
    /// Linearized data constant: residual = ix*u + iy*v + c.
    c: Vec<f64>,
}

fn blur_binomial(img: &[f64], w: usize, h: usize) -> Vec<f64> {
    let kernel = [1.0, 4.0, 6.0, 4.0, 1.0];
    let clampi = |i: i64, n: usize| i.clamp(0, n as i64 - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * img[y * w + clampi(x as i64 + k as i64 - 2, w)];
            }
            tmp[y * w + x] = acc / 16.0;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * tmp[clampi(y as i64 + k as i64 - 2, h) * w + x];
            }
            out[y * w + x] = acc / 16.0;
        }
    }
    out
}

fn resample(img: &[f64], w: usize, h: usize, nw: usize, nh: usize) -> Vec<f64> {
    let mut out = vec![0.0; nw * nh];
    let sx = w as f64 / nw as f64;
    let sy = h as f64 / nh as f64;
    for y in 0..nh {
        for x in 0..nw {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
            let x0 = fx.floor() as usize;
            let y0 = fy.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let y1 = (y0 + 1).min(h - 1);
            let ax = fx - x0 as f64;
            let ay = fy - y0 as f64;
            out[y * nw + x] = img[y0 * w + x0] * (1.0 - ax) * (1.0 - ay)
                + img[y0 * w + x1] * ax * (1.0 - ay)
                + img[y1 * w + x0] * (1.0 - ax) * ay
                + img[y1 * w + x1] * ax * ay;
        }
    }
    out
}

fn build_pyramid(frame: &Frame, cfg: &EstimatorConfig) -> Vec<(Vec<f64>, usize, usize)> {
    let mut levels = Vec::new();
    let mut img: Vec<f64> = frame.data.iter().map(|&v| v as f64).collect();
    let (mut w, mut h) = (frame.width, frame.height);
    levels.push((img.clone(), w, h));
    while levels.len() < cfg.pyramid_levels {
        let nw = ((w as f64 * cfg.pyramid_scale).round() as usize).max(4);
        let nh = ((h as f64 * cfg.pyramid_scale).round() as usize).max(4);
        if nw == w && nh == h || nw < 4 || nh < 4 {
            break;
        }
        let blurred = blur_binomial(&img, w, h);
        img = resample(&blurred, w, h, nw, nh);
        w = nw;
        h = nh;
        levels.push((img.clone(), w, h));
    }
    levels
}

fn sample_clamped(img: &[f64], w: usize, h: usize, x: f64, y: f64) -> f64 {
    let xc = x.clamp(0.0, (w - 1) as f64);
    let yc = y.clamp(0.0, (h - 1) as f64);
    let x0 = xc.floor() as usize;
    let y0 = yc.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = xc - x0 as f64;
    let fy = yc - y0 as f64;
    img[y0 * w + x0] * (1.0 - fx) * (1.0 - fy)
        + img[y0 * w + x1] * fx * (1.0 - fy)
        + img[y1 * w + x0] * (1.0 - fx) * fy
        + img[y1 * w + x1] * fx * fy
}

/// Warp `b` by the current flow, linearize brightness constancy around it.
fn linearize(
    a: &[f64],
    b: &[f64],
    w: usize,
    h: usize,
    u0: &[f64],
    v0: &[f64],
) -> Level {
    let n = w * h;
    let mut warped = vec![0.0; n];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            warped[i] = sample_clamped(b, w, h, x as f64 + u0[i], y as f64 + v0[i]);
        }
    }
    let mut ix = vec![0.0; n];
    let mut iy = vec![0.0; n];
    let mut c = vec![0.0; n];
    let clampi = |i: i64, n: usize| i.clamp(0, n as i64 - 1) as usize;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let avg = |xx: usize, yy: usize| (a[yy * w + xx] + warped[yy * w + xx]) * 0.5;
            let gx = (avg(clampi(x as i64 + 1, w), y) - avg(clampi(x as i64 - 1, w), y)) * 0.5;
            let gy = (avg(x, clampi(y as i64 + 1, h)) - avg(x, clampi(y as i64 - 1, h))) * 0.5;
            let it = warped[i] - a[i];
            ix[i] = gx;
            iy[i] = gy;
            c[i] = it - gx * u0[i] - gy * v0[i];
        }
    }
    Level { w, h, ix, iy, c }
}

/// Quadratic energy the sweeps minimize: data residual squared plus
/// alpha^2 times squared flow differences over 4-neighbor edges.
fn energy(level: &Level, alpha2: f64, u: &[f64], v: &[f64]) -> f64 {
    let (w, h) = (level.w, level.h);
    let mut e = 0.0;
    for i in 0..w * h {
        let r = level.ix[i] * u[i] + level.iy[i] * v[i] + level.c[i];
        e += r * r;
    }
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                let j = i + 1;
                e += alpha2 * ((u[i] - u[j]).powi(2) + (v[i] - v[j]).powi(2));
            }
            if y + 1 < h {
                let j = i + w;
                e += alpha2 * ((u[i] - u[j]).powi(2) + (v[i] - v[j]).powi(2));
            }
        }
    }
    e
}

/// One Gauss-Seidel sweep: every pixel solves its local 2x2 system
/// exactly with neighbors fixed, so the energy never increases.
fn sweep(level: &Level, alpha2: f64, u: &mut [f64], v: &mut [f64]) {
    let (w, h) = (level.w, level.h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let mut nsum_u = 0.0;
            let mut nsum_v = 0.0;
            let mut nn = 0.0;
            if x > 0 {
                nsum_u += u[i - 1];
                nsum_v += v[i - 1];
                nn += 1.0;
            }
            if x + 1 < w {
                nsum_u += u[i + 1];
                nsum_v += v[i + 1];
                nn += 1.0;
            }
            if y > 0 {
                nsum_u += u[i - w];
                nsum_v += v[i - w];
                nn += 1.0;
            }
            if y + 1 < h {
                nsum_u += u[i + w];
                nsum_v += v[i + w];
                nn += 1.0;
            }
            let (ix, iy, c) = (level.ix[i], level.iy[i], level.c[i]);
            let a11 = ix * ix + alpha2 * nn;
            let a22 = iy * iy + alpha2 * nn;
            let a12 = ix * iy;
            let b1 = alpha2 * nsum_u - ix * c;
            let b2 = alpha2 * nsum_v - iy * c;
            let det = a11 * a22 - a12 * a12;
            u[i] = (b1 * a22 - b2 * a12) / det;
            v[i] = (a11 * b2 - a12 * b1) / det;
        }
    }
}

/// Result of [`estimate_traced`]: the flow plus the energy after each
/// sweep at the finest pyramid level.
pub struct EstimateTrace {
    pub field: FlowField,
    pub finest_energies: Vec<f64>,
}

/// Dense flow from `frame_a` to `frame_b`.
pub fn estimate(frame_a: &Frame, frame_b: &Frame, cfg: &EstimatorConfig) -> Result<FlowField> {
    Ok(estimate_impl(frame_a, frame_b, cfg, false)?.field)
}

/// Same as [`estimate`] but records the finest-level energy trajectory.
pub fn estimate_traced(
    frame_a: &Frame,
    frame_b: &Frame,
    cfg: &EstimatorConfig,
) -> Result<EstimateTrace> {
    estimate_impl(frame_a, frame_b, cfg, true)
}

fn estimate_impl(
    frame_a: &Frame,
    frame_b: &Frame,
    cfg: &EstimatorConfig,
    trace: bool,
) -> Result<EstimateTrace> {
    cfg.validate()?;
    if frame_a.width != frame_b.width || frame_a.height != frame_b.height {
        return Err(Error::MixedDimensions(
            frame_a.width,
            frame_a.height,
            frame_b.width,
            frame_b.height,
        ));
    }
    ESTIMATE_CALLS.with(|c| c.set(c.get() + 1));

    let pyr_a = build_pyramid(frame_a, cfg);
    let pyr_b = build_pyramid(frame_b, cfg);
    let alpha2 = cfg.alpha * cfg.alpha;

    let coarsest = pyr_a.len() - 1;
    let (mut w, mut h) = (pyr_a[coarsest].1, pyr_a[coarsest].2);
    let mut u = vec![0.0f64; w * h];
    let mut v = vec![0.0f64; w * h];
    let mut finest_energies = Vec::new();

    for li in (0..pyr_a.len()).rev() {
        let (ref a, lw, lh) = pyr_a[li];
        let (ref b, _, _) = pyr_b[li];
        if (lw, lh) != (w, h) {
            let su = lw as f64 / w as f64;
            let sv = lh as f64 / h as f64;
            u = resample(&u, w, h, lw, lh).iter().map(|x| x * su).collect();
            v = resample(&v, w, h, lw, lh).iter().map(|x| x * sv).collect();
            w = lw;
            h = lh;
        }
        let level = linearize(a, b, w, h, &u, &v);
        for _ in 0..cfg.iterations {
            sweep(&level, alpha2, &mut u, &mut v);
            if trace && li == 0 {
                finest_energies.push(energy(&level, alpha2, &u, &v));
            }
        }
        if u.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteValue(format!(
                "flow solver diverged at pyramid level {li} ({w}x{h})"
            )));
        }
    }

    let field = FlowField::new(
        frame_a.width,
        frame_a.height,
        u.iter().map(|&x| x as f32).collect(),
        v.iter().map(|&x| x as f32).collect(),
        1,
        FlowSource::Estimated,
    )?;
    Ok(EstimateTrace {
        field,
        finest_energies,
    })
}

/// Estimate one field per frame pair of every surviving stride stream.
pub fn estimate_clip(
    clip: &VideoClip,
    strides: &StrideSet,
    cfg: &EstimatorConfig,
) -> Result<Vec<FlowField>> {
    let pairs = pair_frames(clip, strides)?;
    pairs
        .par_iter()
        .map(|p| {
            let mut field = estimate(&clip.frames[p.start], &clip.frames[p.end()], cfg)?;
            field.stride = p.stride;
            Ok(field)
        })
        .collect()
}
