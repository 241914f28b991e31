//! Image-sequence ingestion and the JSON clip manifest.
//!
//! Frames are decoded to luminance in `[0, 1]`; color inputs are reduced
//! with the Rec.601 weights. The manifest is the sidecar that carries
//! everything the `.flo` format cannot: frame list, label, stride
//! availability and per-field provenance.

use std::path::{Path, PathBuf};

use image::DynamicImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{Frame, VideoClip};

const REC601: [f32; 3] = [0.299, 0.587, 0.114];

/// Load all frames in `dir` matching `pattern` (a file-name glob),
/// lexicographically ordered.
pub fn load_frames(dir: &Path, pattern: &str) -> Result<VideoClip> {
    let full = dir.join(pattern);
    let full = full
        .to_str()
        .ok_or_else(|| Error::InvalidConfig("non-utf8 path".into()))?;
    let pat = glob::glob(full).map_err(|e| Error::InvalidConfig(format!("bad glob: {e}")))?;
    let mut paths: Vec<PathBuf> = Vec::new();
    for entry in pat {
        let p = entry.map_err(|e| Error::IoFailure(e.into_error()))?;
        if p.is_file() {
            paths.push(p);
        }
    }
    paths.sort();
    if paths.len() < 2 {
        return Err(Error::TooFewFrames(paths.len()));
    }
    let mut frames = Vec::with_capacity(paths.len());
    for p in &paths {
        frames.push(load_frame(p)?);
    }
    let first = (frames[0].width, frames[0].height);
    for f in &frames {
        if (f.width, f.height) != first {
            return Err(Error::MixedDimensions(first.0, first.1, f.width, f.height));
        }
    }
    VideoClip::new(frames, None)
}

/// Decode one image file to a luminance frame.
pub fn load_frame(path: &Path) -> Result<Frame> {
    let img = image::open(path).map_err(|e| Error::DecodeFailure {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    Ok(to_luminance(&img))
}

fn to_luminance(img: &DynamicImage) -> Frame {
    match img {
        DynamicImage::ImageLuma8(b) => Frame {
            width: b.width() as usize,
            height: b.height() as usize,
            data: b.pixels().map(|p| p.0[0] as f32 / 255.0).collect(),
        },
        DynamicImage::ImageLuma16(b) => Frame {
            width: b.width() as usize,
            height: b.height() as usize,
            data: b.pixels().map(|p| p.0[0] as f32 / 65535.0).collect(),
        },
        other => {
            let rgb = other.to_rgb32f();
            Frame {
                width: rgb.width() as usize,
                height: rgb.height() as usize,
                data: rgb
                    .pixels()
                    .map(|p| {
                        (p.0[0] * REC601[0] + p.0[1] * REC601[1] + p.0[2] * REC601[2])
                            .clamp(0.0, 1.0)
                    })
                    .collect(),
            }
        }
    }
}

/// Save a frame as 16-bit grayscale PNG.
pub fn save_frame_png(frame: &Frame, path: &Path) -> Result<()> {
    let data: Vec<u16> = frame
        .data
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    let img =
        image::ImageBuffer::<image::Luma<u16>, _>::from_raw(frame.width as u32, frame.height as u32, data)
            .ok_or_else(|| Error::InvalidConfig("frame buffer size mismatch".into()))?;
    img.save(path).map_err(|e| Error::DecodeFailure {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// Provenance of one stored flow field.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FlowEntry {
    /// Path relative to the manifest location.
    pub path: String,
    /// Estimator or ingestion tag ("hs", "tvl1", "gt", ...).
    pub estimator: String,
    pub stride: usize,
    /// First frame index of the (t, t+stride) pair.
    pub start_frame: usize,
    /// Power-normalization strength if the field was corrected.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f32>,
}

/// Sidecar manifest for one clip.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct ClipManifest {
    pub id: String,
    /// Frame image paths relative to the manifest location, in order.
    pub frames: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
    /// Strides for which flow streams exist or can be computed.
    #[serde(default)]
    pub strides: Vec<usize>,
    #[serde(default)]
    pub flows: Vec<FlowEntry>,
}

impl ClipManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Flow entries for one (estimator, stride) stream, ordered by start frame.
    pub fn stream(&self, estimator: &str, stride: usize) -> Vec<&FlowEntry> {
        let mut entries: Vec<&FlowEntry> = self
            .flows
            .iter()
            .filter(|e| e.estimator == estimator && e.stride == stride)
            .collect();
        entries.sort_by_key(|e| e.start_frame);
        entries
    }

    /// Load the clip's frames relative to `base`.
    pub fn load_clip(&self, base: &Path) -> Result<VideoClip> {
        if self.frames.len() < 2 {
            return Err(Error::TooFewFrames(self.frames.len()));
        }
        let mut frames = Vec::with_capacity(self.frames.len());
        for rel in &self.frames {
            frames.push(load_frame(&base.join(rel))?);
        }
        VideoClip::new(frames, self.label)
    }
}

/// Top-level manifest for a corpus directory.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct CorpusManifest {
    /// Paths to clip manifests relative to this file.
    pub clips: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl CorpusManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Load every clip with its manifest, in manifest order.
    pub fn load_clips(&self, base: &Path) -> Result<Vec<(ClipManifest, VideoClip)>> {
        let mut out = Vec::with_capacity(self.clips.len());
        for rel in &self.clips {
            let mpath = base.join(rel);
            let manifest = ClipManifest::load(&mpath)?;
            let mbase = mpath
                .parent()
                .ok_or_else(|| Error::Malformed(format!("no parent dir for {rel}")))?
                .to_path_buf();
            let clip = manifest.load_clip(&mbase)?;
            out.push((manifest, clip));
        }
        Ok(out)
    }
}
