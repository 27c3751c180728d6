//! Image and map containers, PNG I/O, and decomposition initialization.
//!
//! All pixel arithmetic in this crate is done in `f64`. An [`Image`] stores
//! interleaved row-major intensities in `[0, 1]` (one value per channel per
//! pixel); a [`Map`] is a single-channel field whose range is unconstrained
//! unless an operation states otherwise. The noise term of a
//! [`Decomposition`] reuses `Image` storage but holds a signed residual;
//! the `[0, 1]` range is enforced at the PNG boundary, not per element.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{CoreError, Result};

/// Strictly positive floor applied to illumination values so that the
/// reflectance update `R = I / L` stays well conditioned on black pixels.
pub const DELTA_L: f64 = 1e-4;

/// H×W×C intensity array, row-major and channel-interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    /// Wraps raw data. `channels` must be 1 or 3 and `data.len()` must equal
    /// `height * width * channels`.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(CoreError::argument(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(CoreError::argument(format!(
                "data length {} does not match {height}x{width}x{channels}",
                data.len()
            )));
        }
        Ok(Image {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Image::constant(height, width, channels, 0.0)
    }

    pub fn constant(height: usize, width: usize, channels: usize, value: f64) -> Self {
        assert!(channels == 1 || channels == 3);
        Image {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    /// Extracts one channel as a map.
    pub fn channel(&self, c: usize) -> Map {
        assert!(c < self.channels);
        let mut data = Vec::with_capacity(self.height * self.width);
        for px in 0..self.height * self.width {
            data.push(self.data[px * self.channels + c]);
        }
        Map {
            height: self.height,
            width: self.width,
            data,
        }
    }

    /// Rebuilds an interleaved image from per-channel maps (1 or 3 of them).
    pub fn from_channels(maps: &[Map]) -> Result<Self> {
        if maps.is_empty() || (maps.len() != 1 && maps.len() != 3) {
            return Err(CoreError::argument(format!(
                "expected 1 or 3 channel maps, got {}",
                maps.len()
            )));
        }
        let (h, w) = (maps[0].height, maps[0].width);
        if maps.iter().any(|m| m.height != h || m.width != w) {
            return Err(CoreError::argument("channel maps disagree on dimensions"));
        }
        let channels = maps.len();
        let mut data = vec![0.0; h * w * channels];
        for (c, m) in maps.iter().enumerate() {
            for px in 0..h * w {
                data[px * channels + c] = m.data[px];
            }
        }
        Ok(Image {
            height: h,
            width: w,
            channels,
            data,
        })
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Single-channel row-major field (illumination, per-channel views, masks
/// rendered as reals). Range is unconstrained.
#[derive(Debug, Clone, PartialEq)]
pub struct Map {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Map {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(CoreError::argument(format!(
                "data length {} does not match {height}x{width}",
                data.len()
            )));
        }
        Ok(Map {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Map::constant(height, width, 0.0)
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Self {
        Map {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    /// Builds a map by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Map {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn same_shape(&self, other: &Map) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Map {
        Map {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

/// Snapshot of the solver state after one stage, kept when history
/// recording is enabled.
#[derive(Debug, Clone)]
pub struct StageSnapshot {
    /// 0 is the initialization; stage k is the state after k full updates.
    pub stage: usize,
    pub illumination: Map,
    pub reflectance: Image,
    pub noise: Image,
    /// Frobenius norm of `I - R∘L - N`.
    pub residual_norm: f64,
}

/// The decomposition triple. `illumination` is single-channel with values in
/// `[DELTA_L, 1]`; `reflectance` is per-channel in `[0, 1]`; `noise` is a
/// signed residual sharing the image's shape.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub illumination: Map,
    pub reflectance: Image,
    pub noise: Image,
    pub stage_history: Option<Vec<StageSnapshot>>,
}

/// Reads an 8-bit grayscale or RGB PNG; every byte `u` maps to `u / 255`.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let file = File::open(path.as_ref())?;
    let decoder = png::Decoder::new(file);
    let mut reader = decoder
        .read_info()
        .map_err(|e| CoreError::format(format!("png decode: {e}")))?;
    let info = reader.info();
    if info.bit_depth != png::BitDepth::Eight {
        return Err(CoreError::format(format!(
            "unsupported bit depth {:?}; only 8-bit PNG is handled",
            info.bit_depth
        )));
    }
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => {
            return Err(CoreError::format(format!(
                "unsupported color type {other:?}; only grayscale and RGB are handled"
            )));
        }
    };
    let mut buf = vec![0u8; reader.output_buffer_size()];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| CoreError::format(format!("png decode: {e}")))?;
    let (w, h) = (frame.width as usize, frame.height as usize);
    let bytes = &buf[..frame.buffer_size()];
    let data: Vec<f64> = bytes.iter().map(|&u| u as f64 / 255.0).collect();
    Image::new(h, w, channels, data)
}

/// Writes an image as an 8-bit PNG. Intensities are clamped to `[0, 1]` and
/// quantized with round-half-up, so a save/load round trip moves each value
/// by at most `1/510`.
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path.as_ref())?;
    let w = BufWriter::new(file);
    let mut encoder = png::Encoder::new(w, img.width as u32, img.height as u32);
    encoder.set_color(if img.channels == 1 {
        png::ColorType::Grayscale
    } else {
        png::ColorType::Rgb
    });
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| CoreError::format(format!("png encode: {e}")))?;
    let bytes: Vec<u8> = img
        .data
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8)
        .collect();
    writer
        .write_image_data(&bytes)
        .map_err(|e| CoreError::format(format!("png encode: {e}")))?;
    Ok(())
}

/// Per-pixel maximum over channels; grayscale input comes back unchanged.
pub fn extract_illumination(img: &Image) -> Map {
    let mut data = Vec::with_capacity(img.height * img.width);
    for px in 0..img.height * img.width {
        let mut m = f64::NEG_INFINITY;
        for c in 0..img.channels {
            m = m.max(img.data[px * img.channels + c]);
        }
        data.push(m);
    }
    Map {
        height: img.height,
        width: img.width,
        data,
    }
}

/// Raises every intensity to `gamma`. Values in `[0, 1]` stay in `[0, 1]`.
pub fn gamma_transform(img: &Image, gamma: f64) -> Result<Image> {
    if !(gamma > 0.0) {
        return Err(CoreError::argument(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    Ok(img.map_values(|v| v.powf(gamma)))
}

/// Starting point for the unfolded solver: `L0` is the max-channel
/// illumination floored at [`DELTA_L`], `R0 = I / L0` clamped to `[0, 1]`,
/// and `N0 = 0`. Wherever no clamp fires this reconstructs `I` exactly.
pub fn init_decomposition(img: &Image) -> Decomposition {
    let lum = extract_illumination(img);
    let illumination = lum.map_values(|v| v.max(DELTA_L));
    let mut reflectance = Image::zeros(img.height, img.width, img.channels);
    for px in 0..img.height * img.width {
        let l = illumination.data[px];
        for c in 0..img.channels {
            let r = (img.data[px * img.channels + c] / l).clamp(0.0, 1.0);
            reflectance.data[px * img.channels + c] = r;
        }
    }
    Decomposition {
        illumination,
        reflectance,
        noise: Image::zeros(img.height, img.width, img.channels),
        stage_history: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn rgb1(r: f64, g: f64, b: f64) -> Image {
        Image::new(1, 1, 3, vec![r, g, b]).unwrap()
    }

    #[test]
    fn load_maps_bytes_exactly() {
        let dir = tempdir().unwrap();
        for (bytes, want) in [
            ([255u8, 255, 255], [1.0, 1.0, 1.0]),
            ([0, 0, 0], [0.0, 0.0, 0.0]),
            ([51, 102, 204], [0.2, 0.4, 0.8]),
        ] {
            let path = dir.path().join(format!("{}.png", bytes[0]));
            let img = rgb1(
                bytes[0] as f64 / 255.0,
                bytes[1] as f64 / 255.0,
                bytes[2] as f64 / 255.0,
            );
            save_image(&img, &path).unwrap();
            let back = load_image(&path).unwrap();
            assert_eq!(back.data(), &want);
        }
    }

    #[test]
    fn save_quantizes_round_half_up() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("q.png");
        save_image(&rgb1(0.5, 1.0, 0.0), &path).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back.get(0, 0, 0), 128.0 / 255.0);
        assert_eq!(back.get(0, 0, 1), 1.0);
        assert_eq!(back.get(0, 0, 2), 0.0);
    }

    #[test]
    fn load_rejects_missing_file() {
        let err = load_image("/nonexistent/nope.png").unwrap_err();
        assert!(matches!(err, CoreError::Io(_)));
    }

    #[test]
    fn load_rejects_16_bit() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("deep.png");
        {
            let file = File::create(&path).unwrap();
            let mut enc = png::Encoder::new(BufWriter::new(file), 1, 1);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Sixteen);
            let mut w = enc.write_header().unwrap();
            w.write_image_data(&[0x12, 0x34]).unwrap();
        }
        let err = load_image(&path).unwrap_err();
        assert!(matches!(err, CoreError::Format(_)));
    }

    #[test]
    fn load_rejects_palette() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("pal.png");
        {
            let file = File::create(&path).unwrap();
            let mut enc = png::Encoder::new(BufWriter::new(file), 1, 1);
            enc.set_color(png::ColorType::Indexed);
            enc.set_depth(png::BitDepth::Eight);
            enc.set_palette(vec![10, 20, 30]);
            let mut w = enc.write_header().unwrap();
            w.write_image_data(&[0]).unwrap();
        }
        let err = load_image(&path).unwrap_err();
        assert!(matches!(err, CoreError::Format(_)));
    }

    #[test]
    fn illumination_is_channel_max() {
        let img = rgb1(0.2, 0.5, 0.3);
        assert_eq!(extract_illumination(&img).get(0, 0), 0.5);

        let zeros = Image::zeros(2, 3, 3);
        assert!(extract_illumination(&zeros)
            .data()
            .iter()
            .all(|&v| v == 0.0));

        let gray = Image::new(2, 2, 1, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(extract_illumination(&gray).data(), gray.data());
    }

    #[test]
    fn gamma_examples() {
        let img = rgb1(0.25, 1.0, 0.5);
        let id = gamma_transform(&img, 1.0).unwrap();
        assert_eq!(id.data(), img.data());

        let half = gamma_transform(&img, 0.5).unwrap();
        assert!((half.get(0, 0, 0) - 0.5).abs() < 1e-15);
        assert_eq!(half.get(0, 0, 1), 1.0);

        assert!(gamma_transform(&img, 0.0).is_err());
        assert!(gamma_transform(&img, -1.0).is_err());
    }

    #[test]
    fn init_examples() {
        let d = init_decomposition(&Image::constant(2, 2, 3, 0.5));
        assert!(d.illumination.data().iter().all(|&v| v == 0.5));
        assert!(d.reflectance.data().iter().all(|&v| v == 1.0));
        assert!(d.noise.data().iter().all(|&v| v == 0.0));

        let d = init_decomposition(&Image::zeros(2, 2, 3));
        assert!(d.illumination.data().iter().all(|&v| v == DELTA_L));
        assert!(d.reflectance.data().iter().all(|&v| v == 0.0));

        let d = init_decomposition(&rgb1(0.2, 0.4, 0.8));
        assert_eq!(d.illumination.get(0, 0), 0.8);
        assert_eq!(d.reflectance.get(0, 0, 0), 0.25);
        assert_eq!(d.reflectance.get(0, 0, 1), 0.5);
        assert_eq!(d.reflectance.get(0, 0, 2), 1.0);
    }

    #[test]
    fn init_reconstructs_when_not_black() {
        let img = Image::new(1, 2, 3, vec![0.3, 0.6, 0.9, 0.1, 0.1, 0.1]).unwrap();
        let d = init_decomposition(&img);
        for px in 0..2 {
            for c in 0..3 {
                let rebuilt = d.reflectance.data()[px * 3 + c] * d.illumination.data()[px];
                assert!((rebuilt - img.data()[px * 3 + c]).abs() < 1e-15);
            }
        }
    }
}
