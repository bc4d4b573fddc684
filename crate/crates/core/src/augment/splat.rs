use image::{Rgb, RgbImage};

use super::{AugmentError, FlowField};

/// Relative depth band within which splats onto the same output pixel are
/// blended rather than occluded.
pub const DEPTH_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct WarpedImage {
    pub image: RgbImage,
    /// True where at least one source pixel landed.
    pub coverage: Vec<bool>,
}

impl WarpedImage {
    pub fn coverage_fraction(&self) -> f64 {
        if self.coverage.is_empty() {
            return 0.0;
        }
        self.coverage.iter().filter(|c| **c).count() as f64 / self.coverage.len() as f64
    }

    pub fn coverage_image(&self) -> image::GrayImage {
        let (w, h) = self.image.dimensions();
        image::GrayImage::from_fn(w, h, |x, y| {
            image::Luma([if self.coverage[(y * w + x) as usize] { 255 } else { 0 }])
        })
    }
}

/// Bilinear footprint of a sub-pixel target: up to four `(index, weight)`.
fn footprint(w: u32, h: u32, tu: f64, tv: f64) -> impl Iterator<Item = (usize, f64)> {
    let (x0, y0) = (tu.floor(), tv.floor());
    let (ax, ay) = (tu - x0, tv - y0);
    [
        (x0, y0, (1.0 - ax) * (1.0 - ay)),
        (x0 + 1.0, y0, ax * (1.0 - ay)),
        (x0, y0 + 1.0, (1.0 - ax) * ay),
        (x0 + 1.0, y0 + 1.0, ax * ay),
    ]
    .into_iter()
    .filter(move |&(x, y, wt)| {
        wt > 0.0 && x >= 0.0 && y >= 0.0 && x < w as f64 && y < h as f64
    })
    .map(move |(x, y, wt)| (y as usize * w as usize + x as usize, wt))
}

/// Forward-splat `img` along `flow`. Each output pixel keeps only the
/// nearest surface (per the flow's target depth) and blends the bilinear
/// contributions within [`DEPTH_TOLERANCE`] of it.
pub fn warp_image(img: &RgbImage, flow: &FlowField) -> Result<WarpedImage, AugmentError> {
    let (w, h) = img.dimensions();
    if (w, h) != (flow.width, flow.height) {
        return Err(AugmentError::DimensionMismatch {
            expected: (flow.width, flow.height),
            got: (w, h),
        });
    }
    let n = (w as usize) * (h as usize);
    let target = |i: usize| {
        let (u, v) = ((i % w as usize) as f64, (i / w as usize) as f64);
        (u + flow.du[i], v + flow.dv[i])
    };

    let mut zbuf = vec![f64::INFINITY; n];
    for (i, _, _) in flow.iter_valid() {
        let (tu, tv) = target(i);
        for (j, _) in footprint(w, h, tu, tv) {
            zbuf[j] = zbuf[j].min(flow.depth[i]);
        }
    }

    let mut acc = vec![[0.0f64; 3]; n];
    let mut wsum = vec![0.0f64; n];
    for (i, _, _) in flow.iter_valid() {
        let (tu, tv) = target(i);
        let src = img.get_pixel((i % w as usize) as u32, (i / w as usize) as u32).0;
        for (j, wt) in footprint(w, h, tu, tv) {
            if flow.depth[i] <= zbuf[j] * (1.0 + DEPTH_TOLERANCE) {
                for c in 0..3 {
                    acc[j][c] += wt * src[c] as f64;
                }
                wsum[j] += wt;
            }
        }
    }

    let mut out = RgbImage::new(w, h);
    let mut coverage = vec![false; n];
    for j in 0..n {
        if wsum[j] > 0.0 {
            coverage[j] = true;
            let px = acc[j].map(|a| (a / wsum[j]).round().clamp(0.0, 255.0) as u8);
            out.put_pixel((j % w as usize) as u32, (j / w as usize) as u32, Rgb(px));
        }
    }
    Ok(WarpedImage {
        image: out,
        coverage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(w: u32, h: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| Rgb([(x * 10) as u8, (y * 20) as u8, 7]))
    }

    #[test]
    fn zero_flow_is_identity() {
        let img = gradient(9, 7);
        let out = warp_image(&img, &FlowField::uniform(9, 7, 0.0, 0.0)).unwrap();
        assert_eq!(out.image, img);
        assert_eq!(out.coverage_fraction(), 1.0);
    }

    #[test]
    fn integer_shift() {
        let img = gradient(10, 4);
        let out = warp_image(&img, &FlowField::uniform(10, 4, 3.0, 0.0)).unwrap();
        for y in 0..4 {
            for x in 0..10 {
                let covered = out.coverage[(y * 10 + x) as usize];
                assert_eq!(covered, x >= 3);
                if covered {
                    assert_eq!(out.image.get_pixel(x, y), img.get_pixel(x - 3, y));
                }
            }
        }
    }

    #[test]
    fn nearer_surface_wins() {
        let img = RgbImage::from_fn(2, 1, |x, _| Rgb([if x == 0 { 200 } else { 10 }; 3]));
        let mut flow = FlowField::uniform(2, 1, 0.0, 0.0);
        flow.du[0] = 1.0;
        flow.depth[0] = 0.5;
        flow.depth[1] = 2.0;
        let out = warp_image(&img, &flow).unwrap();
        assert_eq!(out.image.get_pixel(1, 0).0, [200; 3]);
        assert!(!out.coverage[0]);
    }

    #[test]
    fn dimension_check() {
        let img = gradient(4, 4);
        assert!(matches!(
            warp_image(&img, &FlowField::uniform(4, 3, 0.0, 0.0)),
            Err(AugmentError::DimensionMismatch { .. })
        ));
    }
}
