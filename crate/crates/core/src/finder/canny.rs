//! Edge-filter drop finder used as a non-learned baseline.

use std::collections::VecDeque;

use crate::cropper::largest_component;
use crate::error::{Error, Result};
use crate::imgcore::{BinaryMask, RasterImage};

const BLUR_SIGMA: f64 = 1.4;
const BLUR_RADIUS: usize = 2;
/// Radius of the disk used for morphological closing.
pub const CLOSING_RADIUS: usize = 2;

fn gaussian_kernel() -> Vec<f32> {
    let k: Vec<f64> = (0..=2 * BLUR_RADIUS)
        .map(|i| {
            let d = i as f64 - BLUR_RADIUS as f64;
            (-d * d / (2.0 * BLUR_SIGMA * BLUR_SIGMA)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.iter().map(|v| (v / s) as f32).collect()
}

/// Reflect-101 border index.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let mut i = i;
    while i < 0 || i >= n {
        i = if i < 0 { -i } else { 2 * (n - 1) - i };
    }
    i as usize
}

fn blur(src: &[f32], h: usize, w: usize) -> Vec<f32> {
    let k = gaussian_kernel();
    let r = BLUR_RADIUS as isize;
    let mut tmp = vec![0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = (-r..=r).map(|d| k[(d + r) as usize] * src[y * w + reflect(x as isize + d, w)]).sum();
        }
    }
    let mut out = vec![0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = (-r..=r).map(|d| k[(d + r) as usize] * tmp[reflect(y as isize + d, h) * w + x]).sum();
        }
    }
    out
}

/// Sobel gradients (unnormalized 3x3 kernels) with reflected borders.
fn sobel(src: &[f32], h: usize, w: usize) -> (Vec<f32>, Vec<f32>) {
    let at = |y: isize, x: isize| src[reflect(y, h) * w + reflect(x, w)];
    let mut gx = vec![0f32; h * w];
    let mut gy = vec![0f32; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            gx[i] = (at(y - 1, x + 1) + 2.0 * at(y, x + 1) + at(y + 1, x + 1))
                - (at(y - 1, x - 1) + 2.0 * at(y, x - 1) + at(y + 1, x - 1));
            gy[i] = (at(y + 1, x - 1) + 2.0 * at(y + 1, x) + at(y + 1, x + 1))
                - (at(y - 1, x - 1) + 2.0 * at(y - 1, x) + at(y - 1, x + 1));
        }
    }
    (gx, gy)
}

/// Canny edge map. Thresholds apply to the L2 Sobel magnitude of the
/// blurred 0..255 grayscale image.
pub fn canny_edges(image: &RasterImage, low: f64, high: f64) -> Result<BinaryMask> {
    check_thresholds(low, high)?;
    let (h, w) = (image.height(), image.width());
    let gray: Vec<f32> = image.to_gray().pixels().iter().map(|&v| v as f32).collect();
    let smooth = blur(&gray, h, w);
    let (gx, gy) = sobel(&smooth, h, w);
    let mag: Vec<f32> = gx.iter().zip(&gy).map(|(a, b)| (a * a + b * b).sqrt()).collect();

    // Non-maximum suppression along the quantized gradient direction.
    let m = |y: isize, x: isize| -> f32 {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            0.0
        } else {
            mag[y as usize * w + x as usize]
        }
    };
    let mut thin = vec![0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let v = mag[i];
            if v == 0.0 {
                continue;
            }
            let angle = (gy[i] as f64).atan2(gx[i] as f64).to_degrees().rem_euclid(180.0);
            let (dy, dx) = if !(22.5..157.5).contains(&angle) {
                (0, 1)
            } else if angle < 67.5 {
                (1, 1)
            } else if angle < 112.5 {
                (1, 0)
            } else {
                (1, -1)
            };
            let (yi, xi) = (y as isize, x as isize);
            if v >= m(yi + dy, xi + dx) && v > m(yi - dy, xi - dx) {
                thin[i] = v;
            }
        }
    }

    // Hysteresis: weak pixels survive when 8-connected to a strong one.
    let mut edge = vec![0u8; h * w];
    let mut queue = VecDeque::new();
    for (i, &v) in thin.iter().enumerate() {
        if v as f64 >= high {
            edge[i] = 1;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (y, x) = ((i / w) as isize, (i % w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (ny, nx) = (y + dy, x + dx);
                if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if edge[j] == 0 && thin[j] as f64 >= low && thin[j] > 0.0 {
                    edge[j] = 1;
                    queue.push_back(j);
                }
            }
        }
    }
    BinaryMask::new(h, w, edge)
}

fn check_thresholds(low: f64, high: f64) -> Result<()> {
    if !(0.0..=255.0).contains(&low) || !(0.0..=255.0).contains(&high) || low >= high {
        return Err(Error::InvalidArgument(format!("canny thresholds must satisfy 0 ≤ low < high ≤ 255, got ({low}, {high})")));
    }
    Ok(())
}

fn disk_offsets(r: usize) -> Vec<(isize, isize)> {
    let r = r as isize;
    let mut v = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dy * dy + dx * dx <= r * r {
                v.push((dy, dx));
            }
        }
    }
    v
}

/// Dilation (`grow`) or erosion with a disk; outside pixels count as
/// background for dilation and foreground for erosion.
fn morph(mask: &BinaryMask, r: usize, grow: bool) -> BinaryMask {
    let (h, w) = (mask.height(), mask.width());
    let offs = disk_offsets(r);
    BinaryMask::from_fn(h, w, |y, x| {
        let probe = |&(dy, dx): &(isize, isize)| {
            let (ny, nx) = (y as isize + dy, x as isize + dx);
            if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                !grow
            } else {
                mask.get(ny as usize, nx as usize)
            }
        };
        if grow {
            offs.iter().any(probe)
        } else {
            offs.iter().all(probe)
        }
    })
}

pub fn close(mask: &BinaryMask, radius: usize) -> BinaryMask {
    morph(&morph(mask, radius, true), radius, false)
}

/// Everything not reachable from the image border through background
/// pixels: the boundary plus all enclosed holes.
pub fn fill_enclosed(boundary: &BinaryMask) -> BinaryMask {
    let (h, w) = (boundary.height(), boundary.width());
    let mut outside = vec![false; h * w];
    let mut queue = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            if (y == 0 || x == 0 || y + 1 == h || x + 1 == w) && !boundary.get(y, x) {
                outside[y * w + x] = true;
                queue.push_back(y * w + x);
            }
        }
    }
    while let Some(i) = queue.pop_front() {
        let (y, x) = (i / w, i % w);
        let mut visit = |j: usize| {
            if !outside[j] && boundary.values()[j] == 0 {
                outside[j] = true;
                queue.push_back(j);
            }
        };
        if y > 0 {
            visit(i - w);
        }
        if y + 1 < h {
            visit(i + w);
        }
        if x > 0 {
            visit(i - 1);
        }
        if x + 1 < w {
            visit(i + 1);
        }
    }
    BinaryMask::new(h, w, outside.iter().map(|&o| u8::from(!o)).collect()).expect("same dimensions")
}

/// Grayscale, blur, Canny, close, fill enclosed regions, keep the largest.
pub fn canny_baseline_mask(image: &RasterImage, low_threshold: f64, high_threshold: f64) -> Result<BinaryMask> {
    let edges = canny_edges(image, low_threshold, high_threshold)?;
    let closed = close(&edges, CLOSING_RADIUS);
    Ok(largest_component(&fill_enclosed(&closed)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{confusion_counts, iou};

    fn circle_image(n: usize, r: f64) -> (RasterImage, BinaryMask) {
        let c = (n as f64 - 1.0) / 2.0;
        let mask = BinaryMask::from_fn(n, n, |y, x| (y as f64 - c).powi(2) + (x as f64 - c).powi(2) <= r * r);
        let mut img = RasterImage::filled(n, n, 3, 40);
        for y in 0..n {
            for x in 0..n {
                if mask.get(y, x) {
                    for ch in 0..3 {
                        img.set(y, x, ch, 220);
                    }
                }
            }
        }
        (img, mask)
    }

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let k = gaussian_kernel();
        assert!((k.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        assert_eq!(k[0], k[4]);
        assert_eq!(k[1], k[3]);
    }

    #[test]
    fn uniform_image_gives_empty_mask() {
        let m = canny_baseline_mask(&RasterImage::filled(40, 50, 3, 128), 50.0, 150.0).unwrap();
        assert!((m.count() as f64) < 0.01 * 2000.0);
    }

    #[test]
    fn filled_circle_is_recovered() {
        let (img, truth) = circle_image(96, 28.0);
        let m = canny_baseline_mask(&img, 50.0, 150.0).unwrap();
        let score = iou(&confusion_counts(&m, &truth).unwrap());
        assert!(score >= 0.8, "iou {score}");
    }

    #[test]
    fn open_edges_fill_nothing() {
        let line = BinaryMask::from_fn(10, 10, |y, _| y == 4);
        // A full-width line splits the image; both halves touch the border.
        assert_eq!(fill_enclosed(&line), line);
    }

    #[test]
    fn rejects_bad_thresholds() {
        let img = RasterImage::filled(8, 8, 1, 0);
        assert!(canny_baseline_mask(&img, 100.0, 50.0).is_err());
        assert!(canny_baseline_mask(&img, 50.0, 50.0).is_err());
        assert!(canny_baseline_mask(&img, -1.0, 50.0).is_err());
        assert!(canny_baseline_mask(&img, 10.0, 300.0).is_err());
    }

    #[test]
    fn closing_bridges_small_gap() {
        let ring = BinaryMask::from_fn(30, 30, |y, x| {
            let d = ((y as f64 - 14.5).powi(2) + (x as f64 - 14.5).powi(2)).sqrt();
            (8.0..11.0).contains(&d) && !(x > 20 && (14..16).contains(&y))
        });
        assert!(fill_enclosed(&ring).count() < 200);
        let filled = fill_enclosed(&close(&ring, 2));
        assert!(filled.get(15, 15));
    }
}
