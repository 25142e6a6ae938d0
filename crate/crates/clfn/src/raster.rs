//! In-memory float images and PNG import/export.
//!
//! One container covers the three pixel layouts the pipeline moves around:
//! RGBA training images (4 channels), RGB renders (3), and grayscale
//! saliency maps (1). Data is row-major, channel-interleaved f32.

use std::path::Path;

use crate::error::{Error, Result};

/// Rec.709 luma weights.
const LUMA_WEIGHTS: [f32; 3] = [0.2126, 0.7152, 0.0722];

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// Row-major, channel-interleaved: `data[(y * width + x) * channels + c]`.
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Image {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    /// Builds an image by evaluating `f(x, y)` per pixel.
    pub fn from_fn<F>(width: usize, height: usize, channels: usize, mut f: F) -> Self
    where
        F: FnMut(usize, usize) -> Vec<f32>,
    {
        let mut img = Image::new(width, height, channels);
        for y in 0..height {
            for x in 0..width {
                let px = f(x, y);
                debug_assert_eq!(px.len(), channels);
                img.pixel_mut(x, y).copy_from_slice(&px);
            }
        }
        img
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f32] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    pub fn at(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Single-channel luminance. RGBA is composited over black (straight
    /// alpha) before applying Rec.709 weights; grayscale passes through.
    pub fn luminance(&self) -> Image {
        let mut out = Image::new(self.width, self.height, 1);
        for (dst, src) in out.data.iter_mut().zip(self.data.chunks(self.channels)) {
            *dst = match self.channels {
                1 => src[0],
                3 => LUMA_WEIGHTS[0] * src[0] + LUMA_WEIGHTS[1] * src[1] + LUMA_WEIGHTS[2] * src[2],
                4 => {
                    let a = src[3];
                    a * (LUMA_WEIGHTS[0] * src[0]
                        + LUMA_WEIGHTS[1] * src[1]
                        + LUMA_WEIGHTS[2] * src[2])
                }
                n => panic!("luminance undefined for {n}-channel image"),
            };
        }
        out
    }

    /// Writes a PNG, clamping values into [0, 1] at export time only.
    /// 1 channel saves as 8-bit grayscale, 3 as RGB8, 4 as RGBA8.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let quantize = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        let w = self.width as u32;
        let h = self.height as u32;
        match self.channels {
            1 => {
                let buf: Vec<u8> = self.data.iter().map(|&v| quantize(v)).collect();
                let img = image::GrayImage::from_raw(w, h, buf)
                    .ok_or_else(|| Error::invalid("image buffer size mismatch"))?;
                img.save(path)?;
            }
            3 => {
                let buf: Vec<u8> = self.data.iter().map(|&v| quantize(v)).collect();
                let img = image::RgbImage::from_raw(w, h, buf)
                    .ok_or_else(|| Error::invalid("image buffer size mismatch"))?;
                img.save(path)?;
            }
            4 => {
                let buf: Vec<u8> = self.data.iter().map(|&v| quantize(v)).collect();
                let img = image::RgbaImage::from_raw(w, h, buf)
                    .ok_or_else(|| Error::invalid("image buffer size mismatch"))?;
                img.save(path)?;
            }
            n => return Err(Error::invalid(format!("cannot save {n}-channel image"))),
        }
        Ok(())
    }

    /// Loads a PNG. Grayscale files become 1-channel images, everything
    /// else is normalized to 4-channel RGBA in [0, 1].
    pub fn load_png(path: &Path) -> Result<Image> {
        let dynimg = image::open(path)?;
        let img = match dynimg {
            image::DynamicImage::ImageLuma8(g) => {
                let (w, h) = g.dimensions();
                Image {
                    width: w as usize,
                    height: h as usize,
                    channels: 1,
                    data: g.into_raw().iter().map(|&v| v as f32 / 255.0).collect(),
                }
            }
            other => {
                let rgba = other.to_rgba8();
                let (w, h) = rgba.dimensions();
                Image {
                    width: w as usize,
                    height: h as usize,
                    channels: 4,
                    data: rgba.into_raw().iter().map(|&v| v as f32 / 255.0).collect(),
                }
            }
        };
        Ok(img)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pixel_indexing_round_trips() {
        let mut img = Image::new(4, 3, 4);
        img.pixel_mut(2, 1).copy_from_slice(&[0.1, 0.2, 0.3, 1.0]);
        assert_eq!(img.pixel(2, 1), &[0.1, 0.2, 0.3, 1.0]);
        assert_eq!(img.at(2, 1, 2), 0.3);
    }

    #[test]
    fn luminance_composites_alpha_over_black() {
        let mut img = Image::new(1, 1, 4);
        img.pixel_mut(0, 0).copy_from_slice(&[1.0, 1.0, 1.0, 0.5]);
        let y = img.luminance();
        assert!((y.at(0, 0, 0) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn png_round_trip_preserves_8bit_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        let img = Image::from_fn(5, 4, 4, |x, y| {
            vec![x as f32 / 4.0, y as f32 / 3.0, 0.5, 1.0]
        });
        img.save_png(&path).unwrap();
        let back = Image::load_png(&path).unwrap();
        assert_eq!(back.width, 5);
        assert_eq!(back.height, 4);
        for (a, b) in img.data.iter().zip(back.data.iter()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
    }
}
