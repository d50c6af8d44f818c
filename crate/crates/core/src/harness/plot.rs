//! Minimal line-chart rasterizer for ROC and training curves.

use crate::imgcore::RasterImage;

pub const PALETTE: [[u8; 3]; 6] = [[31, 119, 180], [214, 39, 40], [44, 160, 44], [255, 127, 14], [148, 103, 189], [23, 190, 207]];

pub struct Series {
    pub points: Vec<(f64, f64)>,
    pub color: [u8; 3],
}

/// Line chart over `[x0, x1] x [y0, y1]` with a frame, quarter gridlines,
/// an optional diagonal, and one colored legend swatch per series.
pub struct Chart {
    pub size: usize,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub diagonal: bool,
}

const MARGIN: usize = 24;

impl Chart {
    pub fn render(&self, series: &[Series]) -> RasterImage {
        let n = self.size;
        let mut img = RasterImage::filled(n, n, 3, 255);
        let span = (n - 2 * MARGIN) as f64;
        let to_px = |x: f64, y: f64| {
            let fx = (x - self.x_range.0) / (self.x_range.1 - self.x_range.0);
            let fy = (y - self.y_range.0) / (self.y_range.1 - self.y_range.0);
            (MARGIN as f64 + fx * span, (n - MARGIN) as f64 - fy * span)
        };
        let grid = [225, 225, 225];
        for q in 1..4 {
            let f = q as f64 / 4.0;
            let gx = self.x_range.0 + f * (self.x_range.1 - self.x_range.0);
            let gy = self.y_range.0 + f * (self.y_range.1 - self.y_range.0);
            line(&mut img, to_px(gx, self.y_range.0), to_px(gx, self.y_range.1), grid);
            line(&mut img, to_px(self.x_range.0, gy), to_px(self.x_range.1, gy), grid);
        }
        if self.diagonal {
            line(&mut img, to_px(self.x_range.0, self.y_range.0), to_px(self.x_range.1, self.y_range.1), [170, 170, 170]);
        }
        let corners = [
            to_px(self.x_range.0, self.y_range.0),
            to_px(self.x_range.1, self.y_range.0),
            to_px(self.x_range.1, self.y_range.1),
            to_px(self.x_range.0, self.y_range.1),
        ];
        for i in 0..4 {
            line(&mut img, corners[i], corners[(i + 1) % 4], [0, 0, 0]);
        }
        for s in series {
            for w in s.points.windows(2) {
                let (a, b) = (to_px(w[0].0, w[0].1), to_px(w[1].0, w[1].1));
                line(&mut img, a, b, s.color);
                line(&mut img, (a.0, a.1 - 1.0), (b.0, b.1 - 1.0), s.color);
            }
        }
        for (i, s) in series.iter().enumerate() {
            let x0 = MARGIN + 4 + 14 * i;
            for y in 6..16 {
                for x in x0..(x0 + 10).min(n) {
                    for c in 0..3 {
                        img.set(y, x, c, s.color[c]);
                    }
                }
            }
        }
        img
    }
}

fn line(img: &mut RasterImage, a: (f64, f64), b: (f64, f64), color: [u8; 3]) {
    let steps = ((b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil() as usize).max(1);
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let x = (a.0 + t * (b.0 - a.0)).round();
        let y = (a.1 + t * (b.1 - a.1)).round();
        if x >= 0.0 && y >= 0.0 && (x as usize) < img.width() && (y as usize) < img.height() {
            for c in 0..3 {
                img.set(y as usize, x as usize, c, color[c]);
            }
        }
    }
}
