//! 3×3 Sobel gradients of multi-channel images and EPIs.

use crate::image::Image;

/// Per-pixel Sobel gradient, summed over channels.
///
/// Each channel's response is scaled by 1/8 so a unit ramp has unit slope.
/// Before summing, every channel gradient is sign-aligned with the channel of
/// largest magnitude at that pixel so opposite-signed channels do not cancel.
#[derive(Debug, Clone)]
pub struct GradientField {
    width: usize,
    height: usize,
    gx: Vec<f64>,
    gy: Vec<f64>,
    flag_rows: bool,
}

/// A gradient evaluated at a continuous position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientSample {
    pub g: [f64; 2],
    /// The sample fell within one pixel of a flagged border and used clamped data.
    pub clamped: bool,
}

impl GradientSample {
    pub fn norm(&self) -> f64 {
        self.g[0].hypot(self.g[1])
    }
}

impl GradientField {
    /// Gradient field of an ordinary image; both borders are flagged.
    pub fn of_image(img: &Image) -> Self {
        Self::compute(img, true)
    }

    /// Gradient field of an EPI. Rows are views, so clamping along the angular
    /// axis is not flagged; only the spatial (x) border is.
    pub fn of_epi(img: &Image) -> Self {
        Self::compute(img, false)
    }

    fn compute(img: &Image, flag_rows: bool) -> Self {
        let (w, h, ch) = (img.width(), img.height(), img.channels());
        let mut gx = vec![0.0; w * h];
        let mut gy = vec![0.0; w * h];
        let at = |x: isize, y: isize, c: usize| {
            let xx = x.clamp(0, w as isize - 1) as usize;
            let yy = y.clamp(0, h as isize - 1) as usize;
            img.get(xx, yy, c)
        };
        let mut per_channel = vec![[0.0f64; 2]; ch];
        for y in 0..h as isize {
            for x in 0..w as isize {
                // one-sided differences at the border keep linear ramps exact
                let span_x = ((x + 1).min(w as isize - 1) - (x - 1).max(0)).max(1) as f64;
                let span_y = ((y + 1).min(h as isize - 1) - (y - 1).max(0)).max(1) as f64;
                let mut best = 0usize;
                let mut best_mag = -1.0;
                for (c, pc) in per_channel.iter_mut().enumerate() {
                    let sx = (at(x + 1, y - 1, c) + 2.0 * at(x + 1, y, c) + at(x + 1, y + 1, c))
                        - (at(x - 1, y - 1, c) + 2.0 * at(x - 1, y, c) + at(x - 1, y + 1, c));
                    let sy = (at(x - 1, y + 1, c) + 2.0 * at(x, y + 1, c) + at(x + 1, y + 1, c))
                        - (at(x - 1, y - 1, c) + 2.0 * at(x, y - 1, c) + at(x + 1, y - 1, c));
                    *pc = [sx / (4.0 * span_x), sy / (4.0 * span_y)];
                    let m = pc[0] * pc[0] + pc[1] * pc[1];
                    if m > best_mag {
                        best_mag = m;
                        best = c;
                    }
                }
                let dom = per_channel[best];
                let (mut ax, mut ay) = (0.0, 0.0);
                for pc in &per_channel {
                    let s = if pc[0] * dom[0] + pc[1] * dom[1] < 0.0 {
                        -1.0
                    } else {
                        1.0
                    };
                    ax += s * pc[0];
                    ay += s * pc[1];
                }
                let i = y as usize * w + x as usize;
                gx[i] = ax;
                gy[i] = ay;
            }
        }
        GradientField {
            width: w,
            height: h,
            gx,
            gy,
            flag_rows,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn at_pixel(&self, x: usize, y: usize) -> [f64; 2] {
        let i = y * self.width + x;
        [self.gx[i], self.gy[i]]
    }

    #[inline]
    pub fn magnitude(&self, x: usize, y: usize) -> f64 {
        let [a, b] = self.at_pixel(x, y);
        a.hypot(b)
    }

    /// Bilinear interpolation of the per-pixel gradient at `(x, y)`.
    pub fn sample(&self, x: f64, y: f64) -> GradientSample {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        let mut clamped = x < 1.0 || x > max_x - 1.0;
        if self.flag_rows {
            clamped |= y < 1.0 || y > max_y - 1.0;
        }
        let xc = x.clamp(0.0, max_x);
        let yc = y.clamp(0.0, max_y);
        let (x0, y0) = (xc.floor() as usize, yc.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (fx, fy) = (xc - x0 as f64, yc - y0 as f64);
        let lerp = |v: &[f64]| {
            let top = v[y0 * self.width + x0] * (1.0 - fx) + v[y0 * self.width + x1] * fx;
            let bot = v[y1 * self.width + x0] * (1.0 - fx) + v[y1 * self.width + x1] * fx;
            top * (1.0 - fy) + bot * fy
        };
        GradientSample {
            g: [lerp(&self.gx), lerp(&self.gy)],
            clamped,
        }
    }
}

/// Sobel gradient of `img` at a subpixel point.
pub fn sobel_gradient(img: &Image, x: f64, y: f64) -> GradientSample {
    GradientField::of_image(img).sample(x, y)
}

/// `|cos|` of the angle between two 2-vectors; zero when either is degenerate.
pub fn abs_cosine(a: [f64; 2], b: [f64; 2]) -> f64 {
    let na = a[0].hypot(a[1]);
    let nb = b[0].hypot(b[1]);
    if na < 1e-12 || nb < 1e-12 {
        return 0.0;
    }
    ((a[0] * b[0] + a[1] * b[1]) / (na * nb)).abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_edge_points_right() {
        let img = Image::from_fn(8, 8, 3, |x, _, px| px.fill(if x >= 4 { 1.0 } else { 0.0 }));
        let g = sobel_gradient(&img, 3.5, 4.0);
        assert!(g.g[0] > 0.0);
        assert!(g.g[1].abs() < 1e-12);
        assert!(!g.clamped);
    }

    #[test]
    fn constant_image_has_zero_gradient() {
        let img = Image::filled(6, 6, 3, 0.3);
        let g = sobel_gradient(&img, 2.7, 3.1);
        assert_eq!(g.g, [0.0, 0.0]);
    }

    #[test]
    fn border_samples_are_flagged() {
        let img = Image::filled(6, 6, 1, 0.3);
        assert!(sobel_gradient(&img, 0.5, 3.0).clamped);
        assert!(sobel_gradient(&img, 3.0, 5.0).clamped);
        let epi = GradientField::of_epi(&img);
        assert!(!epi.sample(3.0, 0.0).clamped);
        assert!(epi.sample(0.2, 3.0).clamped);
    }

    #[test]
    fn opposite_channels_do_not_cancel() {
        // channel 0 rises, channel 1 falls across the same edge
        let img = Image::from_fn(8, 8, 2, |x, _, px| {
            let s = if x >= 4 { 1.0 } else { 0.0 };
            px[0] = s;
            px[1] = 1.0 - s;
        });
        let g = GradientField::of_image(&img).at_pixel(4, 4);
        assert!(g[0].abs() > 0.9, "{g:?}");
    }

    #[test]
    fn diagonal_edge_direction() {
        // ramp along (1,1)
        let img = Image::from_fn(16, 16, 1, |x, y, px| px[0] = (x + y) as f64 / 30.0);
        let g = sobel_gradient(&img, 8.0, 8.0).g;
        let ang = g[1].atan2(g[0]).to_degrees();
        assert!((ang - 45.0).abs() < 5.0, "{ang}");
    }
}
