//! Single-channel intensity rasters with a validity mask.

use std::path::Path;

use image::{GrayAlphaImage, GrayImage, LumaA};

use crate::error::{Error, Result};

/// Row-major grayscale raster with values in `[0, 1]` and a per-pixel mask.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
    pub mask: Vec<bool>,
}

impl ImageBuffer {
    /// All pixels invalid, value 0.
    pub fn new(width: usize, height: usize) -> Self {
        ImageBuffer {
            width,
            height,
            data: vec![0.0; width * height],
            mask: vec![false; width * height],
        }
    }

    /// Every pixel valid with the given values.
    pub fn from_data(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height, "raster size mismatch");
        ImageBuffer {
            width,
            height,
            mask: vec![true; data.len()],
            data,
        }
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let i = self.index(x, y);
        self.mask[i].then(|| self.data[i])
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        let i = self.index(x, y);
        self.data[i] = value;
        self.mask[i] = true;
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Bilinear sample at continuous pixel position `(u, v)` (pixel centres at
    /// half-integers). `None` if any tap with non-zero weight is outside the
    /// raster or masked.
    #[inline]
    pub fn sample_bilinear(&self, u: f64, v: f64) -> Option<f64> {
        let x = u - 0.5;
        let y = v - 0.5;
        if !(x > -1.0 && y > -1.0) {
            return None;
        }
        let (x0, fx) = split_tap(x);
        let (y0, fy) = split_tap(y);
        let mut acc = 0.0;
        for (dy, wy) in [(0i64, 1.0 - fy), (1, fy)] {
            if wy == 0.0 {
                continue;
            }
            for (dx, wx) in [(0i64, 1.0 - fx), (1, fx)] {
                if wx == 0.0 {
                    continue;
                }
                let xi = x0 + dx;
                let yi = y0 + dy;
                if xi < 0 || yi < 0 || xi >= self.width as i64 || yi >= self.height as i64 {
                    return None;
                }
                let i = yi as usize * self.width + xi as usize;
                if !self.mask[i] {
                    return None;
                }
                acc += wx * wy * self.data[i];
            }
        }
        Some(acc)
    }

    /// Rounds every value to the nearest multiple of 1/255, as 8-bit storage does.
    pub fn quantize_8bit(&mut self) {
        for v in &mut self.data {
            *v = (v.clamp(0.0, 1.0) * 255.0).round() / 255.0;
        }
    }

    /// Loads a PNG or PGM, converting to luminance. An alpha channel below 50%
    /// marks pixels invalid.
    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let la = img.to_luma_alpha8();
        let (w, h) = (la.width() as usize, la.height() as usize);
        let mut out = ImageBuffer::new(w, h);
        for (x, y, px) in la.enumerate_pixels() {
            let i = y as usize * w + x as usize;
            out.data[i] = px[0] as f64 / 255.0;
            out.mask[i] = px[1] >= 128;
        }
        Ok(out)
    }

    /// Writes an 8-bit image; `.pgm` gets plain luminance (masked pixels 0),
    /// anything else a gray+alpha PNG carrying the mask.
    pub fn save(&self, path: &Path) -> Result<()> {
        let to_u8 = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        let is_pgm = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
        let err = |source| Error::Image {
            path: path.to_path_buf(),
            source,
        };
        if is_pgm {
            let img = GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
                let i = self.index(x as usize, y as usize);
                image::Luma([if self.mask[i] { to_u8(self.data[i]) } else { 0 }])
            });
            img.save(path).map_err(err)
        } else {
            let img = GrayAlphaImage::from_fn(self.width as u32, self.height as u32, |x, y| {
                let i = self.index(x as usize, y as usize);
                LumaA([to_u8(self.data[i]), if self.mask[i] { 255 } else { 0 }])
            });
            img.save(path).map_err(err)
        }
    }
}

/// Integer tap and fractional weight of a sample coordinate. Fractions within
/// rounding noise of a pixel centre snap to it, so samples at integer
/// alignment read a single tap.
#[inline]
fn split_tap(x: f64) -> (i64, f64) {
    const SNAP: f64 = 1e-9;
    let x0 = x.floor();
    let f = x - x0;
    if f < SNAP {
        (x0 as i64, 0.0)
    } else if f > 1.0 - SNAP {
        (x0 as i64 + 1, 0.0)
    } else {
        (x0 as i64, f)
    }
}
