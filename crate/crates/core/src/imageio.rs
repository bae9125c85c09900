//! RGB images in unit range, binary PNM I/O, progressive decolorization,
//! PSNR and filter-grid export.
//!
//! Images are stored row-major with interleaved channels, `[r, g, b, r, g, b, ...]`,
//! every sample an `f64` in `[0, 1]`.

use std::fs;
use std::path::Path;

use crate::autoencoder::AutoencoderModel;
use crate::error::{Error, Result};

pub const CHANNELS: usize = 3;

/// Highest decolorization level; level 5 is full grayscale.
pub const MAX_DECOLOR_LEVEL: u32 = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    /// Builds an image from interleaved RGB samples, rejecting wrong lengths
    /// and out-of-range or non-finite intensities.
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "zero-sized image {width}x{height}"
            )));
        }
        if data.len() != width * height * CHANNELS {
            return Err(Error::InvalidImage(format!(
                "{width}x{height} image needs {} samples, got {}",
                width * height * CHANNELS,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidImage(format!("intensity {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Uniformly filled image.
    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Result<Self> {
        let data = (0..width * height).flat_map(|_| rgb).collect();
        Self::new(width, height, data)
    }

    /// Builds an image from a per-pixel function, clamping into `[0, 1]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * CHANNELS);
        for y in 0..height {
            for x in 0..width {
                data.extend(f(x, y).iter().map(|v| v.clamp(0.0, 1.0)));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * CHANNELS;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// True when every pixel has R = G = B.
    pub fn is_gray(&self) -> bool {
        self.data
            .chunks_exact(CHANNELS)
            .all(|p| p[0] == p[1] && p[1] == p[2])
    }

    fn same_dims(&self, other: &Image) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{}", self.width, self.height),
                found: format!("{}x{}", other.width, other.height),
            });
        }
        Ok(())
    }
}

/// Rec.601 luma.
pub fn luma(rgb: [f64; 3]) -> f64 {
    0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2]
}

/// Reads a binary PPM (P6) or PGM (P5) file. Gray files are expanded to RGB.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })?;
    decode_pnm(&bytes)
}

/// Decodes an in-memory P5/P6 stream.
pub fn decode_pnm(bytes: &[u8]) -> Result<Image> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(Error::UnsupportedFormat("missing PNM magic".into()));
    }
    let channels = match bytes[1] {
        b'6' => 3,
        b'5' => 1,
        m => {
            return Err(Error::UnsupportedFormat(format!(
                "PNM variant P{}",
                m as char
            )))
        }
    };

    let mut cursor = HeaderCursor { bytes, pos: 2 };
    let width = cursor.next_number()?;
    let height = cursor.next_number()?;
    let maxval = cursor.next_number()?;
    if width == 0 || height == 0 {
        return Err(Error::CorruptImage(format!(
            "zero dimension {width}x{height}"
        )));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::UnsupportedFormat(format!(
            "maxval {maxval} (only 8-bit samples are supported)"
        )));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(cursor.pos) {
        Some(b) if b.is_ascii_whitespace() => cursor.pos += 1,
        _ => return Err(Error::CorruptImage("missing raster separator".into())),
    }

    let expected = width * height * channels;
    let raster = &bytes[cursor.pos..];
    if raster.len() < expected {
        return Err(Error::CorruptImage(format!(
            "raster truncated: expected {expected} bytes, found {}",
            raster.len()
        )));
    }

    let scale = maxval as f64;
    let mut data = Vec::with_capacity(width * height * CHANNELS);
    for &v in &raster[..expected] {
        if v as usize > maxval {
            return Err(Error::CorruptImage(format!(
                "sample {v} exceeds maxval {maxval}"
            )));
        }
        let f = v as f64 / scale;
        if channels == 1 {
            data.extend([f, f, f]);
        } else {
            data.push(f);
        }
    }
    Image::new(width, height, data)
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn next_number(&mut self) -> Result<usize> {
        loop {
            match self.bytes.get(self.pos) {
                None => return Err(Error::CorruptImage("header truncated".into())),
                Some(b'#') => {
                    while let Some(&b) = self.bytes.get(self.pos) {
                        self.pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(_) => break,
            }
        }
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(|b| b.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::CorruptImage(format!(
                "expected a number in header at byte {start}"
            )));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::CorruptImage("header number out of range".into()))
    }
}

fn quantize(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Encodes as P6, or as P5 of the luma channel when `gray` is set.
pub fn encode_pnm(img: &Image, gray: bool) -> Vec<u8> {
    let magic = if gray { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    if gray {
        out.extend(
            img.data
                .chunks_exact(CHANNELS)
                .map(|p| quantize(luma([p[0], p[1], p[2]]))),
        );
    } else {
        out.extend(img.data.iter().map(|&v| quantize(v)));
    }
    out
}

/// Writes an 8-bit file; `.pgm` paths get P5 (luma), anything else P6.
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let gray = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    fs::write(path, encode_pnm(img, gray)).map_err(|source| Error::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Linear blend of each channel toward Rec.601 luma with weight `level / 5`.
pub fn decolorize(img: &Image, level: u32) -> Result<Image> {
    if level > MAX_DECOLOR_LEVEL {
        return Err(Error::LevelOutOfRange(level));
    }
    if level == 0 {
        return Ok(img.clone());
    }
    let alpha = level as f64 / MAX_DECOLOR_LEVEL as f64;
    let mut data = Vec::with_capacity(img.data.len());
    for p in img.data.chunks_exact(CHANNELS) {
        let y = luma([p[0], p[1], p[2]]);
        if level == MAX_DECOLOR_LEVEL {
            data.extend([y, y, y]);
        } else {
            data.extend(
                p.iter()
                    .map(|&c| ((1.0 - alpha) * c + alpha * y).clamp(0.0, 1.0)),
            );
        }
    }
    Image::new(img.width, img.height, data)
}

/// Peak signal-to-noise ratio with peak 1.0; identical images give `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    a.same_dims(b)?;
    let sse: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    let mse = sse / a.data.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

/// Tiles square RGB tiles (each `side * side * 3` values, already in unit range)
/// into a grid with 1-pixel black separators and a 1-pixel black border.
pub fn tile_grid(tiles: &[Vec<f64>], side: usize, cols: usize) -> Result<Image> {
    if tiles.is_empty() || side == 0 || cols == 0 {
        return Err(Error::InvalidArgument(
            "grid needs at least one tile, a positive side and positive column count".into(),
        ));
    }
    let cols = cols.min(tiles.len());
    let rows = tiles.len().div_ceil(cols);
    let width = cols * side + cols + 1;
    let height = rows * side + rows + 1;
    let mut data = vec![0.0; width * height * CHANNELS];
    for (t, tile) in tiles.iter().enumerate() {
        if tile.len() != side * side * CHANNELS {
            return Err(Error::DimensionMismatch {
                expected: format!("{} tile values", side * side * CHANNELS),
                found: tile.len().to_string(),
            });
        }
        let x0 = 1 + (t % cols) * (side + 1);
        let y0 = 1 + (t / cols) * (side + 1);
        for y in 0..side {
            let dst = ((y0 + y) * width + x0) * CHANNELS;
            let src = y * side * CHANNELS;
            data[dst..dst + side * CHANNELS].copy_from_slice(&tile[src..src + side * CHANNELS]);
        }
    }
    Image::new(width, height, data)
}

/// Min-max normalizes a filter into `[0, 1]`; a constant filter becomes mid-gray.
pub fn normalize_tile(values: &[f64]) -> Vec<f64> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if hi <= lo {
        return vec![0.5; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// Renders every encoder filter as a normalized tile, in filter order.
pub fn filter_grid(model: &AutoencoderModel, cols: usize) -> Result<Image> {
    let side = model.patch_side();
    let d = model.dim();
    if side * side * CHANNELS != d || model.channels() != CHANNELS {
        return Err(Error::DimensionMismatch {
            expected: format!("{side}x{side}x{CHANNELS} filters"),
            found: format!("{d} values per filter"),
        });
    }
    let tiles: Vec<Vec<f64>> = (0..model.hidden())
        .map(|j| normalize_tile(model.w1().column(j).as_slice()))
        .collect();
    tile_grid(&tiles, side, cols)
}

/// Writes the encoder filter grid as a P6 file.
pub fn export_filter_grid(
    model: &AutoencoderModel,
    path: impl AsRef<Path>,
    cols: usize,
) -> Result<()> {
    let grid = filter_grid(model, cols)?;
    let path = path.as_ref();
    fs::write(path, encode_pnm(&grid, false)).map_err(|source| Error::Write {
        path: path.to_path_buf(),
        source,
    })
}
