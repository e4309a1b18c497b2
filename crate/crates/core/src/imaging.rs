//! Panorama model, gnomonic view extraction, luminance and RGB histograms.

use std::io::Cursor;

use image::ImageFormat;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::scalar::Scalar;

pub const HISTOGRAM_BINS: usize = 256;
pub const MAX_FOV_DEG: f64 = 120.0;

/// Rec.601 luma weights.
const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, thiserror::Error)]
pub enum ImagingError {
    #[error("cannot decode image: {0}")]
    Decode(String),
    #[error("panorama must be 2:1 equirectangular, got {width}x{height}")]
    Shape { width: u32, height: u32 },
    #[error("invalid argument: {0}")]
    Argument(String),
}

pub type Rgb = [u8; 3];

/// Anything with a row-major RGB pixel grid.
pub trait RgbImage {
    fn width(&self) -> u32;
    fn height(&self) -> u32;
    fn pixels(&self) -> &[Rgb];

    fn pixel(&self, x: u32, y: u32) -> Rgb {
        self.pixels()[(y * self.width() + x) as usize]
    }

    /// SHA-256 over dimensions and pixel bytes, lowercase hex.
    fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.width().to_le_bytes());
        hasher.update(self.height().to_le_bytes());
        for px in self.pixels() {
            hasher.update(px);
        }
        hex::encode(hasher.finalize())
    }

    /// PNG encoding of the pixel grid.
    fn to_png(&self) -> Vec<u8> {
        let raw: Vec<u8> = self.pixels().iter().flatten().copied().collect();
        let buf = image::RgbImage::from_raw(self.width(), self.height(), raw)
            .expect("pixel count matches dimensions");
        let mut out = Cursor::new(Vec::new());
        buf.write_to(&mut out, ImageFormat::Png).expect("png encoding to memory");
        out.into_inner()
    }
}

/// Equirectangular full-sphere image. Column `x` maps to azimuth
/// `x / width * 360` relative to the column at `north_offset_deg`.
#[derive(Debug, Clone, PartialEq)]
pub struct Panorama {
    width: u32,
    height: u32,
    pixels: Vec<Rgb>,
    north_offset: Option<f64>,
}

impl Panorama {
    pub fn new(width: u32, height: u32, pixels: Vec<Rgb>, north_offset_deg: Option<f64>) -> Result<Self, ImagingError> {
        if height == 0 || width != 2 * height {
            return Err(ImagingError::Shape { width, height });
        }
        if pixels.len() != (width as usize) * (height as usize) {
            return Err(ImagingError::Argument(format!(
                "{} pixels for a {width}x{height} panorama",
                pixels.len()
            )));
        }
        let north_offset = match north_offset_deg {
            Some(d) if !d.is_finite() => {
                return Err(ImagingError::Argument(format!("north offset {d} is not finite")))
            }
            other => other.map(|d| d.rem_euclid(360.0)),
        };
        Ok(Self {
            width,
            height,
            pixels,
            north_offset,
        })
    }

    /// Panorama filled by evaluating `f(x, y)` for every pixel.
    pub fn from_fn(width: u32, height: u32, north_offset_deg: Option<f64>, mut f: impl FnMut(u32, u32) -> Rgb) -> Result<Self, ImagingError> {
        let mut pixels = Vec::with_capacity((width * height) as usize);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels, north_offset_deg)
    }

    /// Degrees; zero when no north metadata was supplied.
    pub fn north_offset_deg(&self) -> f64 {
        self.north_offset.unwrap_or(0.0)
    }

    pub fn has_north_offset(&self) -> bool {
        self.north_offset.is_some()
    }

    pub fn with_north_offset(mut self, north_offset_deg: Option<f64>) -> Self {
        self.north_offset = north_offset_deg.map(|d| d.rem_euclid(360.0));
        self
    }

    /// Fractional panorama coordinates for an absolute direction.
    pub fn direction_to_pixel(&self, azimuth_deg: f64, elevation_deg: f64) -> (f64, f64) {
        let col = (azimuth_deg + self.north_offset_deg()).rem_euclid(360.0) / 360.0 * self.width as f64;
        let row = (0.5 - elevation_deg / 180.0) * self.height as f64;
        (col, row)
    }

    fn sample_nearest(&self, azimuth_deg: f64, elevation_deg: f64) -> Rgb {
        let (col, row) = self.direction_to_pixel(azimuth_deg, elevation_deg);
        let x = (col.floor() as i64).rem_euclid(self.width as i64) as u32;
        let y = (row.floor() as i64).clamp(0, self.height as i64 - 1) as u32;
        self.pixel(x, y)
    }
}

impl RgbImage for Panorama {
    fn width(&self) -> u32 {
        self.width
    }
    fn height(&self) -> u32 {
        self.height
    }
    fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }
}

/// Rectilinear view cut out of a panorama.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<Rgb>,
    pub heading_deg: f64,
    pub pitch_deg: f64,
    pub fov_deg: f64,
}

impl View {
    /// A bare pixel grid, e.g. for tests and provider fixtures.
    pub fn from_pixels(width: u32, height: u32, pixels: Vec<Rgb>) -> Result<Self, ImagingError> {
        if pixels.len() != (width as usize) * (height as usize) {
            return Err(ImagingError::Argument(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
            heading_deg: 0.0,
            pitch_deg: 0.0,
            fov_deg: 90.0,
        })
    }

    pub fn filled(width: u32, height: u32, color: Rgb) -> Self {
        Self::from_pixels(width, height, vec![color; (width * height) as usize]).expect("sized")
    }
}

impl RgbImage for View {
    fn width(&self) -> u32 {
        self.width
    }
    fn height(&self) -> u32 {
        self.height
    }
    fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }
}

/// Decodes PNG or JPEG bytes into a panorama.
pub fn decode_panorama(bytes: &[u8], north_offset_deg: Option<f64>) -> Result<Panorama, ImagingError> {
    let format = image::guess_format(bytes).map_err(|e| ImagingError::Decode(e.to_string()))?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Jpeg) {
        return Err(ImagingError::Decode(format!("unsupported format {format:?}")));
    }
    let decoded = image::load_from_memory_with_format(bytes, format)
        .map_err(|e| ImagingError::Decode(e.to_string()))?
        .into_rgb8();
    let (width, height) = decoded.dimensions();
    if height == 0 || width != 2 * height {
        return Err(ImagingError::Shape { width, height });
    }
    let pixels = decoded.pixels().map(|p| p.0).collect();
    Panorama::new(width, height, pixels, north_offset_deg)
}

/// Absolute (azimuth, elevation) of a unit ray, degrees.
fn ray_angles(east: f64, north: f64, up: f64) -> (f64, f64) {
    let azimuth = east.atan2(north).to_degrees().rem_euclid(360.0);
    let elevation = up.atan2(east.hypot(north)).to_degrees();
    (azimuth, elevation)
}

/// Gnomonic projection of the panorama around (`heading_deg`, `pitch_deg`)
/// with horizontal field of view `fov_deg`, nearest-neighbor sampled.
pub fn extract_view(
    pano: &Panorama,
    heading_deg: f64,
    pitch_deg: f64,
    fov_deg: f64,
    out_width: u32,
    out_height: u32,
) -> Result<View, ImagingError> {
    if !heading_deg.is_finite() {
        return Err(ImagingError::Argument(format!("heading {heading_deg} is not finite")));
    }
    if !(-90.0..=90.0).contains(&pitch_deg) {
        return Err(ImagingError::Argument(format!("pitch {pitch_deg} outside [-90, 90]")));
    }
    if !(fov_deg > 0.0 && fov_deg <= MAX_FOV_DEG) {
        return Err(ImagingError::Argument(format!("fov {fov_deg} outside (0, 120]")));
    }
    if out_width == 0 || out_height == 0 {
        return Err(ImagingError::Argument("view dimensions must be positive".into()));
    }
    let heading = heading_deg.rem_euclid(360.0);
    let (sh, ch) = heading.to_radians().sin_cos();
    let (sp, cp) = pitch_deg.to_radians().sin_cos();
    // camera basis in (east, north, up)
    let forward = [cp * sh, cp * ch, sp];
    let right = [ch, -sh, 0.0];
    let up = [-sp * sh, -sp * ch, cp];

    let half = (fov_deg.to_radians() / 2.0).tan();
    let (w, h) = (out_width as f64, out_height as f64);
    let mut pixels = Vec::with_capacity((out_width * out_height) as usize);
    for j in 0..out_height {
        let v = (1.0 - 2.0 * (j as f64 + 0.5) / h) * half * h / w;
        for i in 0..out_width {
            let u = (2.0 * (i as f64 + 0.5) / w - 1.0) * half;
            let d = [
                forward[0] + u * right[0] + v * up[0],
                forward[1] + u * right[1] + v * up[1],
                forward[2] + u * right[2] + v * up[2],
            ];
            let (az, el) = ray_angles(d[0], d[1], d[2]);
            pixels.push(pano.sample_nearest(az, el));
        }
    }
    Ok(View {
        width: out_width,
        height: out_height,
        pixels,
        heading_deg: heading,
        pitch_deg,
        fov_deg,
    })
}

/// Mean Rec.601 luma over all pixels.
pub fn mean_luminance<T: Scalar>(img: &impl RgbImage) -> Result<T, ImagingError> {
    let pixels = img.pixels();
    if pixels.is_empty() {
        return Err(ImagingError::Argument("empty image".into()));
    }
    let total: f64 = pixels
        .iter()
        .map(|p| LUMA[0] * p[0] as f64 + LUMA[1] * p[1] as f64 + LUMA[2] * p[2] as f64)
        .sum();
    Ok(T::of(total / pixels.len() as f64))
}

/// Per-channel intensity frequencies; each channel sums to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RgbHistogram<T> {
    bins: [Vec<T>; 3],
}

impl<T: Scalar> RgbHistogram<T> {
    /// Validates shape, non-negativity and per-channel normalization.
    pub fn from_channels(bins: [Vec<T>; 3]) -> Result<Self, ImagingError> {
        for (c, channel) in bins.iter().enumerate() {
            if channel.len() != HISTOGRAM_BINS {
                return Err(ImagingError::Argument(format!(
                    "channel {c} has {} bins, expected {HISTOGRAM_BINS}",
                    channel.len()
                )));
            }
            if channel.iter().any(|v| !(*v >= T::zero()) || !v.is_finite()) {
                return Err(ImagingError::Argument(format!("channel {c} has a negative or non-finite bin")));
            }
            if !crate::scalar::sums_to_one(channel.iter().copied()) {
                return Err(ImagingError::Argument(format!("channel {c} does not sum to 1")));
            }
        }
        Ok(Self { bins })
    }

    pub(crate) fn from_channels_unchecked(bins: [Vec<T>; 3]) -> Self {
        Self { bins }
    }

    pub fn channel(&self, c: usize) -> &[T] {
        &self.bins[c]
    }

    pub fn channels(&self) -> &[Vec<T>; 3] {
        &self.bins
    }

    /// All 768 bins, R then G then B.
    pub fn iter(&self) -> impl Iterator<Item = T> + '_ {
        self.bins.iter().flat_map(|c| c.iter().copied())
    }
}

pub fn channel_histogram<T: Scalar>(img: &impl RgbImage) -> Result<RgbHistogram<T>, ImagingError> {
    let pixels = img.pixels();
    if pixels.is_empty() {
        return Err(ImagingError::Argument("empty image".into()));
    }
    let mut counts = [[0u64; HISTOGRAM_BINS]; 3];
    for px in pixels {
        for c in 0..3 {
            counts[c][px[c] as usize] += 1;
        }
    }
    let total = T::of_count(pixels.len());
    let bins = counts.map(|channel| {
        channel
            .iter()
            .map(|&n| T::of_count(n as usize) / total)
            .collect::<Vec<T>>()
    });
    Ok(RgbHistogram::from_channels_unchecked(bins))
}
