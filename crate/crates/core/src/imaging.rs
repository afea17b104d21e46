//! Floating-point sRGB image buffers and file I/O.

use std::path::Path;

use image::{GrayImage, ImageFormat, Luma, Rgb, RgbImage};

use crate::colorimetry::SrgbColor;
use crate::error::{Error, Result};

/// Row-major W×H grid of sRGB colors.
#[derive(Debug, Clone, PartialEq)]
pub struct SrgbImage {
    width: u32,
    height: u32,
    pixels: Vec<SrgbColor>,
}

impl SrgbImage {
    pub fn filled(width: u32, height: u32, color: SrgbColor) -> Self {
        SrgbImage {
            width,
            height,
            pixels: vec![color; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> SrgbColor) -> Self {
        let mut pixels = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        SrgbImage {
            width,
            height,
            pixels,
        }
    }

    pub fn from_pixels(width: u32, height: u32, pixels: Vec<SrgbColor>) -> Result<Self> {
        if pixels.len() != width as usize * height as usize {
            return Err(Error::invalid(format!(
                "pixel buffer of length {} does not match {}x{}",
                pixels.len(),
                width,
                height
            )));
        }
        Ok(SrgbImage {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[SrgbColor] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [SrgbColor] {
        &mut self.pixels
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> SrgbColor {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, c: SrgbColor) {
        let w = self.width as usize;
        self.pixels[y as usize * w + x as usize] = c;
    }

    pub fn map(&self, f: impl Fn(SrgbColor) -> SrgbColor) -> SrgbImage {
        SrgbImage {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&c| f(c)).collect(),
        }
    }

    pub fn from_rgb8(img: &RgbImage) -> Self {
        SrgbImage {
            width: img.width(),
            height: img.height(),
            pixels: img.pixels().map(|p| SrgbColor::from_u8(p.0)).collect(),
        }
    }

    pub fn to_rgb8(&self) -> RgbImage {
        RgbImage::from_fn(self.width, self.height, |x, y| Rgb(self.get(x, y).to_u8()))
    }

    /// Round-trips every pixel through 8-bit storage.
    pub fn quantized(&self) -> SrgbImage {
        self.map(|c| SrgbColor::from_u8(c.to_u8()))
    }

    /// Gamma-encoded luma with weights (0.299, 0.587, 0.114) on 8-bit values.
    pub fn to_luma8(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| {
            let [r, g, b] = self.get(x, y).to_u8();
            Luma([luma_u8(r, g, b)])
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::image(path, e))?;
        Ok(SrgbImage::from_rgb8(&img.to_rgb8()))
    }

    /// Saves as PNG or binary PPM, chosen by extension.
    pub fn save(&self, path: &Path) -> Result<()> {
        let format = match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("ppm") => ImageFormat::Pnm,
            _ => ImageFormat::Png,
        };
        self.to_rgb8()
            .save_with_format(path, format)
            .map_err(|e| Error::image(path, e))
    }
}

#[inline]
pub fn luma_u8(r: u8, g: u8, b: u8) -> u8 {
    let y = 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b);
    y.round().clamp(0.0, 255.0) as u8
}

/// Bilinear resampling of a grayscale image with pixel-center alignment.
pub fn resize_gray(src: &GrayImage, width: u32, height: u32) -> GrayImage {
    let (sw, sh) = src.dimensions();
    if (sw, sh) == (width, height) {
        return src.clone();
    }
    let sx = f64::from(sw) / f64::from(width);
    let sy = f64::from(sh) / f64::from(height);
    let px = |x: i64, y: i64| -> f64 {
        let x = x.clamp(0, i64::from(sw) - 1) as u32;
        let y = y.clamp(0, i64::from(sh) - 1) as u32;
        f64::from(src.get_pixel(x, y).0[0])
    };
    GrayImage::from_fn(width, height, |x, y| {
        let fx = (f64::from(x) + 0.5) * sx - 0.5;
        let fy = (f64::from(y) + 0.5) * sy - 0.5;
        let x0 = fx.floor();
        let y0 = fy.floor();
        let tx = fx - x0;
        let ty = fy - y0;
        let (x0, y0) = (x0 as i64, y0 as i64);
        let top = px(x0, y0) * (1.0 - tx) + px(x0 + 1, y0) * tx;
        let bottom = px(x0, y0 + 1) * (1.0 - tx) + px(x0 + 1, y0 + 1) * tx;
        let v = top * (1.0 - ty) + bottom * ty;
        Luma([v.round().clamp(0.0, 255.0) as u8])
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resize_identity_and_constant() {
        let g = GrayImage::from_pixel(10, 8, Luma([77]));
        assert_eq!(resize_gray(&g, 10, 8), g);
        let r = resize_gray(&g, 5, 3);
        assert!(r.pixels().all(|p| p.0[0] == 77));
    }

    #[test]
    fn luma_weights() {
        assert_eq!(luma_u8(255, 255, 255), 255);
        assert_eq!(luma_u8(0, 0, 0), 0);
        assert_eq!(luma_u8(255, 0, 0), 76);
    }

    #[test]
    fn rgb8_round_trip() {
        let img = SrgbImage::from_fn(3, 2, |x, y| SrgbColor::from_u8([x as u8 * 40, y as u8 * 90, 7]));
        assert_eq!(SrgbImage::from_rgb8(&img.to_rgb8()), img);
    }
}
