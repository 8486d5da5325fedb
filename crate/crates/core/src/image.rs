//! Dense multi-channel floating point images.
//!
//! Pixel `(x, y)` has its center at continuous coordinate `(x, y)`. Sampling
//! outside the raster clamps to the nearest border pixel.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        assert!(channels > 0, "image needs at least one channel");
        Image {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::SizeMismatch(format!(
                "{} samples for a {width}x{height}x{channels} image",
                data.len()
            )));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds an image by evaluating `f(x, y, pixel)` for every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, &mut [f64]),
    ) -> Self {
        let mut img = Image::new(width, height, channels);
        for y in 0..height {
            for x in 0..width {
                let i = (y * width + x) * channels;
                f(x, y, &mut img.data[i..i + channels]);
            }
        }
        img
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
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

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    /// Row `y` as an interleaved slice.
    pub fn row(&self, y: usize) -> &[f64] {
        let n = self.width * self.channels;
        &self.data[y * n..(y + 1) * n]
    }

    /// Bilinear sample of channel `c` at a continuous position, clamped to the raster.
    #[inline]
    pub fn bilinear(&self, x: f64, y: f64, c: usize) -> f64 {
        let (x0, x1, fx) = lerp_taps(x, self.width);
        let (y0, y1, fy) = lerp_taps(y, self.height);
        let a = self.get(x0, y0, c);
        let b = self.get(x1, y0, c);
        let d = self.get(x0, y1, c);
        let e = self.get(x1, y1, c);
        let top = a + (b - a) * fx;
        let bot = d + (e - d) * fx;
        top + (bot - top) * fy
    }

    /// Bilinear sample of every channel into `out`.
    pub fn bilinear_into(&self, x: f64, y: f64, out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate().take(self.channels) {
            *o = self.bilinear(x, y, c);
        }
    }

    /// Extracts a single channel as a one-channel image.
    pub fn channel(&self, c: usize) -> Image {
        assert!(c < self.channels);
        let data = self
            .data
            .chunks_exact(self.channels)
            .map(|px| px[c])
            .collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Separable Gaussian blur with clamped borders. `sigma <= 0` is the identity.
    pub fn gaussian_blur(&self, sigma: f64) -> Image {
        if sigma <= 0.0 {
            return self.clone();
        }
        let radius = (3.0 * sigma).ceil() as isize;
        let kernel: Vec<f64> = (-radius..=radius)
            .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
            .collect();
        let norm: f64 = kernel.iter().sum();
        let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();

        let (w, h, ch) = (self.width as isize, self.height as isize, self.channels);
        let mut tmp = Image::new(self.width, self.height, ch);
        for y in 0..h {
            for x in 0..w {
                for c in 0..ch {
                    let mut acc = 0.0;
                    for (k, &kv) in kernel.iter().enumerate() {
                        let xx = (x + k as isize - radius).clamp(0, w - 1);
                        acc += kv * self.get(xx as usize, y as usize, c);
                    }
                    tmp.set(x as usize, y as usize, c, acc);
                }
            }
        }
        let mut out = Image::new(self.width, self.height, ch);
        for y in 0..h {
            for x in 0..w {
                for c in 0..ch {
                    let mut acc = 0.0;
                    for (k, &kv) in kernel.iter().enumerate() {
                        let yy = (y + k as isize - radius).clamp(0, h - 1);
                        acc += kv * tmp.get(x as usize, yy as usize, c);
                    }
                    out.set(x as usize, y as usize, c, acc);
                }
            }
        }
        out
    }

    /// Reads a PNG/PPM/PGM file as RGB with values scaled to `[0, 1]`.
    pub fn load_rgb(path: &Path) -> Result<Image> {
        let dynimg = image::open(path).map_err(|source| match source {
            image::ImageError::IoError(e) => Error::io(path, e),
            other => Error::Image {
                path: path.to_path_buf(),
                source: other,
            },
        })?;
        let rgb = dynimg.to_rgb32f();
        let (w, h) = rgb.dimensions();
        let data = rgb.into_raw().into_iter().map(f64::from).collect();
        Image::from_vec(w as usize, h as usize, 3, data)
    }

    /// Quantizes `[0, 1]` values to 8 bits. One-channel images become grayscale,
    /// three-channel images RGB.
    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        let bytes: Vec<u8> = self
            .data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        let color = match self.channels {
            1 => image::ExtendedColorType::L8,
            3 => image::ExtendedColorType::Rgb8,
            n => {
                return Err(Error::InvalidParameter(format!(
                    "cannot encode {n}-channel image as PNG"
                )))
            }
        };
        let mut out = Vec::new();
        let encoder = image::codecs::png::PngEncoder::new(&mut out);
        image::ImageEncoder::write_image(
            encoder,
            &bytes,
            self.width as u32,
            self.height as u32,
            color,
        )
        .map_err(|source| Error::Image {
            path: "<png encoder>".into(),
            source,
        })?;
        Ok(out)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes = self.to_png_bytes()?;
        crate::io::write_atomic(path, &bytes)
    }
}

#[inline]
fn lerp_taps(v: f64, n: usize) -> (usize, usize, f64) {
    let max = (n - 1) as f64;
    let v = v.clamp(0.0, max);
    let i0 = v.floor();
    let f = v - i0;
    let i0 = i0 as usize;
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, f)
}

/// sRGB `[0,1]` to CIE LAB (D65), with every channel divided by 100 so that L
/// lies in `[0, 1]` and a, b roughly in `[-1.3, 1.3]`.
pub fn srgb_to_lab(rgb: &[f64]) -> [f64; 3] {
    fn linearize(c: f64) -> f64 {
        let c = c.clamp(0.0, 1.0);
        if c <= 0.04045 {
            c / 12.92
        } else {
            ((c + 0.055) / 1.055).powf(2.4)
        }
    }
    fn f(t: f64) -> f64 {
        const DELTA: f64 = 6.0 / 29.0;
        if t > DELTA * DELTA * DELTA {
            t.cbrt()
        } else {
            t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
        }
    }
    let r = linearize(rgb[0]);
    let g = linearize(rgb[1]);
    let b = linearize(rgb[2]);
    let x = (0.412_456_4 * r + 0.357_576_1 * g + 0.180_437_5 * b) / 0.950_47;
    let y = 0.212_672_9 * r + 0.715_152_2 * g + 0.072_175_0 * b;
    let z = (0.019_333_9 * r + 0.119_192 * g + 0.950_304_1 * b) / 1.088_83;
    let (fx, fy, fz) = (f(x), f(y), f(z));
    let l = 116.0 * fy - 16.0;
    let a = 500.0 * (fx - fy);
    let bb = 200.0 * (fy - fz);
    [l / 100.0, a / 100.0, bb / 100.0]
}

/// Converts a three-channel sRGB image to normalized LAB.
pub fn rgb_image_to_lab(rgb: &Image) -> Image {
    assert_eq!(rgb.channels(), 3, "LAB conversion needs an RGB image");
    Image::from_fn(rgb.width(), rgb.height(), 3, |x, y, px| {
        px.copy_from_slice(&srgb_to_lab(rgb.pixel(x, y)));
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_hits_pixel_centers_and_midpoints() {
        let img = Image::from_vec(2, 2, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(img.bilinear(0.0, 0.0, 0), 0.0);
        assert_eq!(img.bilinear(1.0, 1.0, 0), 3.0);
        assert!((img.bilinear(0.5, 0.5, 0) - 1.5).abs() < 1e-12);
        // clamped outside
        assert_eq!(img.bilinear(-4.0, 0.0, 0), 0.0);
        assert_eq!(img.bilinear(9.0, 9.0, 0), 3.0);
    }

    #[test]
    fn lab_of_white_and_black() {
        let white = srgb_to_lab(&[1.0, 1.0, 1.0]);
        assert!((white[0] - 1.0).abs() < 1e-4);
        assert!(white[1].abs() < 1e-4 && white[2].abs() < 1e-4);
        let black = srgb_to_lab(&[0.0, 0.0, 0.0]);
        assert!(black.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn lab_is_monotone_in_gray() {
        let mut prev = -1.0;
        for i in 0..=255 {
            let g = i as f64 / 255.0;
            let l = srgb_to_lab(&[g, g, g])[0];
            assert!(l > prev);
            prev = l;
        }
    }

    #[test]
    fn blur_preserves_constant() {
        let img = Image::filled(9, 7, 3, 0.25);
        let b = img.gaussian_blur(1.5);
        assert!(b.data().iter().all(|v| (v - 0.25).abs() < 1e-12));
    }
}
