//! Summed-area tables for constant-time box filtering at arbitrary scales
//! and positions.
//!
//! The table stores double-precision prefix sums with a zero-padded first
//! row and column; a rectangle sum needs four lookups. Fractional rectangle
//! corners are evaluated by bilinearly interpolating the four neighboring
//! table entries, which is exactly the integral of the piecewise-constant
//! image over the fractional rectangle.

use crate::error::{Error, Result};
use crate::raster::Image;

/// Axis-aligned rectangle in continuous pixel units. `(0, 0)` is the top-left
/// corner of the top-left pixel, so pixel `(i, j)` spans `[i, i+1] x [j, j+1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Rect {
        Rect { x0, y0, x1, y1 }
    }

    /// Square of side `side` centered at `(cx, cy)`.
    pub fn centered(cx: f64, cy: f64, side: f64) -> Rect {
        let h = side / 2.0;
        Rect::new(cx - h, cy - h, cx + h, cy + h)
    }

    fn clipped(&self, width: f64, height: f64) -> Rect {
        Rect {
            x0: self.x0.clamp(0.0, width),
            y0: self.y0.clamp(0.0, height),
            x1: self.x1.clamp(0.0, width),
            y1: self.y1.clamp(0.0, height),
        }
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0).max(0.0) * (self.y1 - self.y0).max(0.0)
    }
}

#[derive(Clone, Debug)]
pub struct SummedAreaTable {
    /// (height+1) x (width+1) x channels prefix sums, row-major.
    sums: Vec<f64>,
    width: usize,
    height: usize,
    channels: usize,
}

impl SummedAreaTable {
    /// Builds the table from an image; sums accumulate in double precision.
    pub fn build(image: &Image) -> Result<SummedAreaTable> {
        if image.width == 0 || image.height == 0 {
            return Err(Error::invalid("cannot build a summed-area table from an empty image"));
        }
        let (w, h, c) = (image.width, image.height, image.channels);
        let stride = (w + 1) * c;
        let mut sums = vec![0.0f64; (h + 1) * stride];
        for y in 0..h {
            // Running row sum keeps the recurrence single-pass:
            // S[y+1][x+1] = S[y][x+1] + rowsum(0..=x).
            let mut row_acc = vec![0.0f64; c];
            for x in 0..w {
                let px = image.pixel(x, y);
                let above = (y * stride + (x + 1) * c)..(y * stride + (x + 2) * c);
                let dst = (y + 1) * stride + (x + 1) * c;
                for ch in 0..c {
                    row_acc[ch] += px[ch] as f64;
                    sums[dst + ch] = sums[above.start + ch] + row_acc[ch];
                }
            }
        }
        Ok(SummedAreaTable {
            sums,
            width: w,
            height: h,
            channels: c,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Table entry at integer corner coordinates.
    fn entry(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * (self.width + 1) + x) * self.channels;
        &self.sums[i..i + self.channels]
    }

    /// Prefix integral at a continuous corner, bilinearly interpolated from
    /// the four surrounding table entries.
    fn corner_into(&self, x: f64, y: f64, out: &mut [f64]) {
        let xi = (x.floor() as usize).min(self.width.saturating_sub(1));
        let yi = (y.floor() as usize).min(self.height.saturating_sub(1));
        let fx = x - xi as f64;
        let fy = y - yi as f64;
        let s00 = self.entry(xi, yi);
        let s10 = self.entry(xi + 1, yi);
        let s01 = self.entry(xi, yi + 1);
        let s11 = self.entry(xi + 1, yi + 1);
        for c in 0..self.channels {
            out[c] = (1.0 - fx) * (1.0 - fy) * s00[c]
                + fx * (1.0 - fy) * s10[c]
                + (1.0 - fx) * fy * s01[c]
                + fx * fy * s11[c];
        }
    }

    /// Area-weighted mean color over a continuous rectangle, clipped to the
    /// image bounds and normalized by the clipped area.
    pub fn rect_average_into(&self, rect: Rect, out: &mut [f64]) -> Result<()> {
        debug_assert_eq!(out.len(), self.channels);
        let r = rect.clipped(self.width as f64, self.height as f64);
        let area = r.area();
        if area <= 0.0 {
            return Err(Error::invalid(format!(
                "rectangle has zero area after clipping to image bounds: {rect:?}"
            )));
        }
        let mut c00 = [0.0f64; 8];
        let mut c10 = [0.0f64; 8];
        let mut c01 = [0.0f64; 8];
        let mut c11 = [0.0f64; 8];
        let n = self.channels;
        self.corner_into(r.x0, r.y0, &mut c00[..n]);
        self.corner_into(r.x1, r.y0, &mut c10[..n]);
        self.corner_into(r.x0, r.y1, &mut c01[..n]);
        self.corner_into(r.x1, r.y1, &mut c11[..n]);
        for c in 0..n {
            out[c] = (c11[c] - c10[c] - c01[c] + c00[c]) / area;
        }
        Ok(())
    }

    pub fn rect_average(&self, rect: Rect) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.channels];
        self.rect_average_into(rect, &mut out)?;
        Ok(out)
    }

    /// Box-filtered sample: the mean over the square footprint of side
    /// `1/scale` centered at `px`, clipped to the image. At scale 1 on a
    /// pixel center this is the pixel's own value.
    pub fn filtered_sample_into(&self, px: (f64, f64), scale: f64, out: &mut [f64]) -> Result<()> {
        if !(scale > 0.0 && scale <= 1.0) {
            return Err(Error::invalid(format!(
                "scale must lie in (0, 1], got {scale}"
            )));
        }
        self.rect_average_into(Rect::centered(px.0, px.1, 1.0 / scale), out)
    }

    pub fn filtered_sample(&self, px: (f64, f64), scale: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.channels];
        self.filtered_sample_into(px, scale, &mut out)?;
        Ok(out)
    }
}

/// Box-downsamples the tabulated image to `out` pixels: each output pixel is
/// the filtered sample at its center in source coordinates.
pub fn box_downsample(sat: &SummedAreaTable, out: (usize, usize)) -> Result<Image> {
    let (ow, oh) = out;
    if ow < 1 || oh < 1 || ow > sat.width() || oh > sat.height() {
        return Err(Error::invalid(format!(
            "downsample target {ow}x{oh} outside 1..source size"
        )));
    }
    let scale = (ow as f64 / sat.width() as f64).min(1.0);
    let mut img = Image::new(ow, oh, sat.channels());
    let mut buf = vec![0.0f64; sat.channels()];
    for y in 0..oh {
        for x in 0..ow {
            let sx = (x as f64 + 0.5) * sat.width() as f64 / ow as f64;
            let sy = (y as f64 + 0.5) * sat.height() as f64 / oh as f64;
            sat.filtered_sample_into((sx, sy), scale, &mut buf)?;
            for (c, v) in buf.iter().enumerate() {
                img.pixel_mut(x, y)[c] = *v as f32;
            }
        }
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn image_from_rows(rows: &[&[f32]]) -> Image {
        let h = rows.len();
        let w = rows[0].len();
        Image::from_fn(w, h, 1, |x, y| vec![rows[y][x]])
    }

    fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize, c: usize) -> Image {
        let mut img = Image::new(w, h, c);
        for v in img.data.iter_mut() {
            *v = rng.random_range(0.0..1.0);
        }
        img
    }

    /// Direct-summation oracle for integer-aligned rectangles.
    fn brute_force_mean(img: &Image, x0: usize, y0: usize, x1: usize, y1: usize, c: usize) -> f64 {
        let mut sum = 0.0;
        for y in y0..y1 {
            for x in x0..x1 {
                sum += img.at(x, y, c) as f64;
            }
        }
        sum / ((x1 - x0) * (y1 - y0)) as f64
    }

    /// Supersampling oracle for fractional rectangles: midpoint-rule
    /// integration of the piecewise-constant image at 256 samples per axis.
    fn supersampled_mean(img: &Image, rect: Rect, c: usize) -> f64 {
        let n = 256;
        let mut sum = 0.0;
        for j in 0..n {
            let y = rect.y0 + (rect.y1 - rect.y0) * (j as f64 + 0.5) / n as f64;
            let yi = (y.floor() as usize).min(img.height - 1);
            for i in 0..n {
                let x = rect.x0 + (rect.x1 - rect.x0) * (i as f64 + 0.5) / n as f64;
                let xi = (x.floor() as usize).min(img.width - 1);
                sum += img.at(xi, yi, c) as f64;
            }
        }
        sum / (n * n) as f64
    }

    /// Exact-integration oracle: overlap area of the rect with every pixel.
    fn exact_mean(img: &Image, rect: Rect, c: usize) -> f64 {
        let mut sum = 0.0;
        let mut area = 0.0;
        for y in 0..img.height {
            for x in 0..img.width {
                let ox = (rect.x1.min(x as f64 + 1.0) - rect.x0.max(x as f64)).max(0.0);
                let oy = (rect.y1.min(y as f64 + 1.0) - rect.y0.max(y as f64)).max(0.0);
                sum += ox * oy * img.at(x, y, c) as f64;
                area += ox * oy;
            }
        }
        sum / area
    }

    #[test]
    fn single_element_table() {
        let img = image_from_rows(&[&[0.7]]);
        let sat = SummedAreaTable::build(&img).unwrap();
        assert!((sat.entry(1, 1)[0] - 0.7).abs() < 1e-6);
        assert_eq!(sat.entry(0, 1)[0], 0.0);
        assert_eq!(sat.entry(1, 0)[0], 0.0);
    }

    #[test]
    fn two_by_two_total_matches_direct_summation() {
        let img = image_from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let sat = SummedAreaTable::build(&img).unwrap();
        assert!((sat.entry(2, 2)[0] - 10.0).abs() < 1e-9);
        let avg = sat.rect_average(Rect::new(0.0, 0.0, 2.0, 2.0)).unwrap();
        assert!((avg[0] - 2.5).abs() < 1e-9);
    }

    #[test]
    fn all_zero_image_gives_zero_sums() {
        let img = Image::new(5, 3, 2);
        let sat = SummedAreaTable::build(&img).unwrap();
        assert!(sat.sums.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_image_is_rejected() {
        let img = Image::new(0, 4, 1);
        assert!(SummedAreaTable::build(&img).is_err());
    }

    #[test]
    fn constant_image_averages_to_the_constant() {
        let img = Image::from_fn(9, 7, 3, |_, _| vec![0.25, 0.5, 0.75]);
        let sat = SummedAreaTable::build(&img).unwrap();
        for rect in [
            Rect::new(0.0, 0.0, 9.0, 7.0),
            Rect::new(1.3, 2.7, 5.9, 3.4),
            Rect::centered(4.0, 3.0, 2.5),
        ] {
            let avg = sat.rect_average(rect).unwrap();
            assert!((avg[0] - 0.25).abs() < 1e-6);
            assert!((avg[1] - 0.5).abs() < 1e-6);
            assert!((avg[2] - 0.75).abs() < 1e-6);
        }
    }

    #[test]
    fn fractional_rect_matches_supersampling_oracle() {
        let img = image_from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let sat = SummedAreaTable::build(&img).unwrap();
        let rect = Rect::new(0.5, 0.5, 1.5, 1.5);
        let got = sat.rect_average(rect).unwrap()[0];
        let oracle = supersampled_mean(&img, rect, 0);
        assert!((got - oracle).abs() < 1e-3, "got {got}, oracle {oracle}");
        // The exact-overlap oracle agrees to machine precision.
        assert!((got - exact_mean(&img, rect, 0)).abs() < 1e-12);
    }

    #[test]
    fn zero_area_rect_is_rejected() {
        let img = image_from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let sat = SummedAreaTable::build(&img).unwrap();
        assert!(sat.rect_average(Rect::new(1.0, 0.0, 1.0, 2.0)).is_err());
        // Entirely outside the image clips to nothing.
        assert!(sat.rect_average(Rect::new(5.0, 5.0, 7.0, 7.0)).is_err());
    }

    #[test]
    fn unit_scale_at_pixel_centers_reproduces_the_image() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let img = random_image(&mut rng, 13, 9, 4);
        let sat = SummedAreaTable::build(&img).unwrap();
        for y in 0..img.height {
            for x in 0..img.width {
                let got = sat
                    .filtered_sample((x as f64 + 0.5, y as f64 + 0.5), 1.0)
                    .unwrap();
                for c in 0..4 {
                    assert!((got[c] - img.at(x, y, c) as f64).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn quarter_scale_center_matches_brute_force_block_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let img = random_image(&mut rng, 32, 32, 1);
        let sat = SummedAreaTable::build(&img).unwrap();
        // Footprint of side 4 centered at the image center covers a 4x4 block
        // twice over: side 1/scale = 4 starting at pixel 14.
        let got = sat.filtered_sample((16.0, 16.0), 0.25).unwrap()[0];
        let oracle = brute_force_mean(&img, 14, 14, 18, 18, 0);
        assert!((got - oracle).abs() < 1e-5);
        // 1/8 scale on a constant image stays constant.
        let flat = Image::from_fn(32, 32, 1, |_, _| vec![0.42]);
        let flat_sat = SummedAreaTable::build(&flat).unwrap();
        let v = flat_sat.filtered_sample((16.0, 16.0), 0.125).unwrap()[0];
        assert!((v - 0.42).abs() < 1e-6);
    }

    #[test]
    fn out_of_range_scale_is_rejected() {
        let img = image_from_rows(&[&[1.0]]);
        let sat = SummedAreaTable::build(&img).unwrap();
        assert!(sat.filtered_sample((0.5, 0.5), 0.0).is_err());
        assert!(sat.filtered_sample((0.5, 0.5), 1.5).is_err());
    }

    #[test]
    fn box_downsample_halves_a_checkerboard_to_gray() {
        let img = image_from_rows(&[
            &[1.0, 0.0, 1.0, 0.0],
            &[0.0, 1.0, 0.0, 1.0],
            &[1.0, 0.0, 1.0, 0.0],
            &[0.0, 1.0, 0.0, 1.0],
        ]);
        let sat = SummedAreaTable::build(&img).unwrap();
        let half = box_downsample(&sat, (2, 2)).unwrap();
        assert!(half.data.iter().all(|&v| (v - 0.5).abs() < 1e-6));
        let same = box_downsample(&sat, (4, 4)).unwrap();
        for (a, b) in same.data.iter().zip(img.data.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!(box_downsample(&sat, (8, 8)).is_err());
    }

    #[test]
    fn nesting_partition_recombines_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = random_image(&mut rng, 24, 18, 3);
        let sat = SummedAreaTable::build(&img).unwrap();
        let outer = Rect::new(2.25, 1.5, 19.75, 16.0);
        let split_x = 11.3;
        let left = Rect::new(outer.x0, outer.y0, split_x, outer.y1);
        let right = Rect::new(split_x, outer.y0, outer.x1, outer.y1);
        let whole = sat.rect_average(outer).unwrap();
        let l = sat.rect_average(left).unwrap();
        let r = sat.rect_average(right).unwrap();
        for c in 0..3 {
            let combined = (l[c] * left.area() + r[c] * right.area()) / outer.area();
            assert!((whole[c] - combined).abs() < 1e-5);
        }
    }

    proptest! {
        #[test]
        fn integer_rects_match_brute_force(
            seed in 0u64..500,
            x0 in 0usize..15, y0 in 0usize..11,
            dw in 1usize..8, dh in 1usize..8,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let img = random_image(&mut rng, 16, 12, 2);
            let sat = SummedAreaTable::build(&img).unwrap();
            let x1 = (x0 + dw).min(16);
            let y1 = (y0 + dh).min(12);
            prop_assume!(x1 > x0 && y1 > y0);
            let avg = sat
                .rect_average(Rect::new(x0 as f64, y0 as f64, x1 as f64, y1 as f64))
                .unwrap();
            for c in 0..2 {
                let oracle = brute_force_mean(&img, x0, y0, x1, y1, c);
                prop_assert!((avg[c] - oracle).abs() < 1e-5);
            }
        }

        #[test]
        fn fractional_rects_match_exact_integration(
            seed in 0u64..500,
            x0 in 0.0f64..10.0, y0 in 0.0f64..6.0,
            dw in 0.3f64..5.0, dh in 0.3f64..5.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
            let img = random_image(&mut rng, 16, 12, 1);
            let sat = SummedAreaTable::build(&img).unwrap();
            let rect = Rect::new(x0, y0, (x0 + dw).min(16.0), (y0 + dh).min(12.0));
            let avg = sat.rect_average(rect).unwrap()[0];
            prop_assert!((avg - exact_mean(&img, rect, 0)).abs() < 1e-9);
        }

        #[test]
        fn one_pixel_corner_perturbation_is_lipschitz(
            seed in 0u64..200,
            x0 in 0.0f64..8.0, y0 in 0.0f64..4.0,
            dx in -1.0f64..1.0, dy in -1.0f64..1.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x777);
            let img = random_image(&mut rng, 16, 12, 1);
            let sat = SummedAreaTable::build(&img).unwrap();
            let a = Rect::new(x0, y0, x0 + 6.0, y0 + 6.0);
            let b = Rect::new((x0 + dx).max(0.0), (y0 + dy).max(0.0), x0 + 6.0, y0 + 6.0);
            let va = sat.rect_average(a).unwrap()[0];
            let vb = sat.rect_average(b).unwrap()[0];
            // Values in [0,1]: the averages differ by at most twice the
            // relative symmetric-difference area.
            let ca = a.clipped(16.0, 12.0);
            let cb = b.clipped(16.0, 12.0);
            let overlap = Rect::new(
                ca.x0.max(cb.x0), ca.y0.max(cb.y0),
                ca.x1.min(cb.x1), ca.y1.min(cb.y1),
            ).area();
            let sym = ca.area() + cb.area() - 2.0 * overlap;
            let bound = 2.0 * sym / ca.area().min(cb.area()) + 1e-9;
            prop_assert!((va - vb).abs() <= bound, "diff {} > bound {}", (va - vb).abs(), bound);
        }
    }
}
