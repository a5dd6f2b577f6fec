//! Frame sequences, the on-disk manifest, and frame I/O.
//!
//! A sequence on disk is a directory of numbered lossless 8-bit grayscale
//! images plus a TOML manifest:
//!
//! ```toml
//! dir = "frames"            # relative to the manifest file
//! pattern = "frame_%05d.png"
//! fps = 60.0
//! pixel_scale_um = 0.5
//! medium = "collagen"
//! frames = 600              # optional; otherwise scanned from index 0
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Rect;

/// One 8-bit grayscale image, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for Frame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Frame")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl Frame {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput("frame must be non-empty".into()));
        }
        if data.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "frame buffer has {} bytes, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "frame must be non-empty");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.data[y * self.width + x] = value;
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<u8> {
        self.data
    }

    pub fn crop(&self, rect: Rect) -> Result<Frame> {
        if rect.w == 0 || rect.h == 0 || rect.x + rect.w > self.width || rect.y + rect.h > self.height
        {
            return Err(Error::InvalidInput(format!(
                "crop {:?} outside {}x{} frame",
                rect, self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(rect.w * rect.h);
        for y in rect.y..rect.y + rect.h {
            let start = y * self.width + rect.x;
            data.extend_from_slice(&self.data[start..start + rect.w]);
        }
        Frame::new(rect.w, rect.h, data)
    }

    pub fn to_image(&self) -> GrayImage {
        GrayImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
            .expect("buffer size matches dimensions")
    }

    /// Converts any decoded image to 8-bit luminance. Color inputs use the
    /// Rec. 601 weights (0.299, 0.587, 0.114).
    pub fn from_dynamic(img: &DynamicImage) -> Result<Frame> {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let data = match img {
            DynamicImage::ImageLuma8(g) => g.as_raw().clone(),
            DynamicImage::ImageLumaA8(_)
            | DynamicImage::ImageLuma16(_)
            | DynamicImage::ImageLumaA16(_) => img.to_luma8().into_raw(),
            _ => img
                .to_rgb8()
                .pixels()
                .map(|p| {
                    let [r, g, b] = p.0;
                    let y = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
                    y.round().clamp(0.0, 255.0) as u8
                })
                .collect(),
        };
        Frame::new(w, h, data)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_image().save(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Ordered grayscale frames sharing one size, with acquisition metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    frames: Vec<Frame>,
    fps: f64,
    pixel_scale: f64,
    medium: String,
}

impl FrameSequence {
    pub fn new(frames: Vec<Frame>, fps: f64, pixel_scale: f64, medium: impl Into<String>) -> Result<Self> {
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::InvalidInput(format!("fps must be positive, got {fps}")));
        }
        if !(pixel_scale > 0.0 && pixel_scale.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "pixel scale must be positive, got {pixel_scale}"
            )));
        }
        if let Some(first) = frames.first() {
            let (w, h) = first.dims();
            for (index, f) in frames.iter().enumerate() {
                if f.dims() != (w, h) {
                    return Err(Error::DimensionMismatch {
                        index,
                        path: "<memory>".into(),
                        expected_w: w,
                        expected_h: h,
                        actual_w: f.width(),
                        actual_h: f.height(),
                    });
                }
            }
        }
        Ok(Self {
            frames,
            fps,
            pixel_scale,
            medium: medium.into(),
        })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &Frame {
        &self.frames[t]
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// `(width, height)`, or `(0, 0)` for an empty sequence.
    pub fn dims(&self) -> (usize, usize) {
        self.frames.first().map(Frame::dims).unwrap_or((0, 0))
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    /// Micrometers per pixel.
    pub fn pixel_scale(&self) -> f64 {
        self.pixel_scale
    }

    pub fn medium(&self) -> &str {
        &self.medium
    }
}

/// On-disk description of a frame directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceManifest {
    pub dir: PathBuf,
    pub pattern: String,
    pub fps: f64,
    pub pixel_scale_um: f64,
    #[serde(default)]
    pub medium: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<usize>,
    /// Directory the manifest was read from; `dir` is resolved against it.
    #[serde(skip)]
    pub base: PathBuf,
}

impl SequenceManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: SequenceManifest = toml::from_str(&text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start].lines().count().max(1) as u64)
                .unwrap_or(0);
            Error::format(path.display().to_string(), line, e.message().to_string())
        })?;
        manifest.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::Config(format!("manifest fps must be positive, got {}", self.fps)));
        }
        if !(self.pixel_scale_um > 0.0 && self.pixel_scale_um.is_finite()) {
            return Err(Error::Config(format!(
                "manifest pixel_scale_um must be positive, got {}",
                self.pixel_scale_um
            )));
        }
        format_index(&self.pattern, 0)?;
        Ok(())
    }

    pub fn frame_dir(&self) -> PathBuf {
        self.base.join(&self.dir)
    }

    pub fn frame_path(&self, index: usize) -> Result<PathBuf> {
        Ok(self.frame_dir().join(format_index(&self.pattern, index)?))
    }

    /// Paths of every frame in index order. With an explicit `frames` count a
    /// missing file is an error; otherwise files are scanned from index 0
    /// until the first gap.
    pub fn frame_paths(&self) -> Result<Vec<PathBuf>> {
        let mut paths = Vec::new();
        match self.frames {
            Some(n) => {
                for i in 0..n {
                    let p = self.frame_path(i)?;
                    if !p.is_file() {
                        return Err(Error::io(
                            &p,
                            std::io::Error::new(
                                std::io::ErrorKind::NotFound,
                                format!("frame {i} is missing"),
                            ),
                        ));
                    }
                    paths.push(p);
                }
            }
            None => loop {
                let p = self.frame_path(paths.len())?;
                if !p.is_file() {
                    break;
                }
                paths.push(p);
            },
        }
        if paths.is_empty() {
            let p = self.frame_path(0)?;
            return Err(Error::io(
                &p,
                std::io::Error::new(std::io::ErrorKind::NotFound, "no frames found"),
            ));
        }
        Ok(paths)
    }
}

/// Expands a printf-style `%d` / `%0Nd` / `%Nd` placeholder. Exactly one
/// placeholder is required; `%%` is a literal percent sign.
pub fn format_index(pattern: &str, index: usize) -> Result<String> {
    let bad = |msg: &str| Error::Config(format!("frame pattern {pattern:?}: {msg}"));
    let mut out = String::with_capacity(pattern.len() + 8);
    let mut chars = pattern.chars().peekable();
    let mut placeholders = 0;
    while let Some(c) = chars.next() {
        if c != '%' {
            out.push(c);
            continue;
        }
        if chars.peek() == Some(&'%') {
            chars.next();
            out.push('%');
            continue;
        }
        let zero = chars.peek() == Some(&'0');
        if zero {
            chars.next();
        }
        let mut width = 0usize;
        while let Some(d) = chars.peek().and_then(|c| c.to_digit(10)) {
            width = width * 10 + d as usize;
            chars.next();
        }
        match chars.next() {
            Some('d') | Some('u') | Some('i') => {}
            _ => return Err(bad("only integer placeholders are supported")),
        }
        if zero {
            out.push_str(&format!("{index:0width$}"));
        } else {
            out.push_str(&format!("{index:width$}"));
        }
        placeholders += 1;
    }
    if placeholders != 1 {
        return Err(bad("expected exactly one index placeholder"));
    }
    Ok(out)
}

pub fn load_frame(path: &Path) -> Result<Frame> {
    let img = image::open(path).map_err(|source| match source {
        image::ImageError::IoError(e) => Error::io(path, e),
        source => Error::Image {
            path: path.to_path_buf(),
            source,
        },
    })?;
    Frame::from_dynamic(&img)
}

/// Reads every frame named by the manifest.
pub fn load_sequence(manifest: &SequenceManifest) -> Result<FrameSequence> {
    manifest.validate()?;
    let paths = manifest.frame_paths()?;
    let mut frames: Vec<Frame> = Vec::with_capacity(paths.len());
    for (index, path) in paths.iter().enumerate() {
        let frame = load_frame(path)?;
        if let Some(first) = frames.first() {
            if frame.dims() != first.dims() {
                return Err(Error::DimensionMismatch {
                    index,
                    path: path.display().to_string(),
                    expected_w: first.width(),
                    expected_h: first.height(),
                    actual_w: frame.width(),
                    actual_h: frame.height(),
                });
            }
        }
        frames.push(frame);
    }
    FrameSequence::new(
        frames,
        manifest.fps,
        manifest.pixel_scale_um,
        manifest.medium.clone(),
    )
}

/// Writes every frame as PNG into `dir` and a `manifest.toml` next to them.
/// Returns the manifest (with `base` set to `dir`).
pub fn write_sequence(seq: &FrameSequence, dir: &Path, pattern: &str) -> Result<SequenceManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = SequenceManifest {
        dir: PathBuf::from("."),
        pattern: pattern.to_string(),
        fps: seq.fps(),
        pixel_scale_um: seq.pixel_scale(),
        medium: seq.medium().to_string(),
        frames: Some(seq.len()),
        base: dir.to_path_buf(),
    };
    manifest.validate()?;
    for (i, frame) in seq.frames().iter().enumerate() {
        frame.save_png(&manifest.frame_path(i)?)?;
    }
    manifest.write(&dir.join("manifest.toml"))?;
    Ok(manifest)
}

/// Crops every frame to `rect`; metadata is preserved.
pub fn crop_roi(seq: &FrameSequence, rect: Rect) -> Result<FrameSequence> {
    let frames = seq
        .frames()
        .iter()
        .map(|f| f.crop(rect))
        .collect::<Result<Vec<_>>>()?;
    FrameSequence::new(frames, seq.fps(), seq.pixel_scale(), seq.medium())
}
