//! Error metrics, error and normal visualizations, and the reprojection-error
//! side selection used as a baseline.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::OffsetSign;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::lightfield::{DisparityMap, LightField};
use crate::refine::SparsePoint;

/// Ground-truth pixels whose disparity gradient exceeds this are depth edges.
pub const EDGE_GRADIENT_THRESHOLD: f64 = 0.1;

/// Default boundary-recall tolerances in pixels.
pub const DEFAULT_TOLERANCES: [usize; 4] = [0, 1, 2, 4];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallPoint {
    pub tolerance: usize,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mse_x100: f64,
    pub rmse: f64,
    pub q25: f64,
    pub q50: f64,
    /// Pixels valid in both maps.
    pub evaluated_pixels: usize,
    pub gt_edge_pixels: usize,
    pub boundary_recall: Vec<RecallPoint>,
}

/// Linear-interpolation percentile of `sorted` (ascending), `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Central-difference gradient magnitude, one-sided at the border.
pub fn gradient_magnitude(d: &DisparityMap) -> Vec<f64> {
    let (w, h) = (d.width(), d.height());
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let (gx, gy) = central_diff(d, x, y);
            out[y * w + x] = gx.hypot(gy);
        }
    }
    out
}

fn central_diff(d: &DisparityMap, x: usize, y: usize) -> (f64, f64) {
    let (w, h) = (d.width(), d.height());
    let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
    let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
    let gx = if xr > xl { (d.get(xr, y) - d.get(xl, y)) / (xr - xl) as f64 } else { 0.0 };
    let gy = if yd > yu { (d.get(x, yd) - d.get(x, yu)) / (yd - yu) as f64 } else { 0.0 };
    (gx, gy)
}

fn check_dims(a: &DisparityMap, b: &DisparityMap) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::SizeMismatch(format!(
            "prediction is {}x{}, ground truth is {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

/// Metrics over pixels valid in both maps.
///
/// Boundary recall at tolerance `t` is the fraction of ground-truth edge
/// pixels with a predicted edge pixel within Chebyshev distance `t`. With no
/// ground-truth edges the recall is 1.
pub fn compute_metrics(pred: &DisparityMap, gt: &DisparityMap, tolerances: &[usize]) -> Result<MetricsReport> {
    check_dims(pred, gt)?;
    let mut abs_err = Vec::with_capacity(gt.values().len());
    let mut sq = 0.0;
    for i in 0..gt.values().len() {
        if !(pred.valid_mask()[i] && gt.valid_mask()[i]) {
            continue;
        }
        let e = pred.values()[i] - gt.values()[i];
        sq += e * e;
        abs_err.push(e.abs());
    }
    if abs_err.is_empty() {
        return Err(Error::InvalidParameter("no pixel is valid in both maps".into()));
    }
    let n = abs_err.len();
    let mse = sq / n as f64;
    abs_err.sort_by(f64::total_cmp);

    let (w, h) = (gt.width(), gt.height());
    let gt_edges: Vec<bool> = gradient_magnitude(gt).iter().map(|&g| g > EDGE_GRADIENT_THRESHOLD).collect();
    let pred_edges: Vec<bool> = gradient_magnitude(pred).iter().map(|&g| g > EDGE_GRADIENT_THRESHOLD).collect();
    let n_edges = gt_edges.iter().filter(|&&e| e).count();
    let boundary_recall = tolerances
        .iter()
        .map(|&t| {
            if n_edges == 0 {
                return RecallPoint { tolerance: t, recall: 1.0 };
            }
            let mut hit = 0usize;
            for y in 0..h {
                for x in 0..w {
                    if !gt_edges[y * w + x] {
                        continue;
                    }
                    let found = (y.saturating_sub(t)..=(y + t).min(h - 1))
                        .any(|yy| (x.saturating_sub(t)..=(x + t).min(w - 1)).any(|xx| pred_edges[yy * w + xx]));
                    hit += found as usize;
                }
            }
            RecallPoint {
                tolerance: t,
                recall: hit as f64 / n_edges as f64,
            }
        })
        .collect();

    Ok(MetricsReport {
        mse_x100: 100.0 * mse,
        rmse: mse.sqrt(),
        q25: percentile(&abs_err, 0.25),
        q50: percentile(&abs_err, 0.5),
        evaluated_pixels: n,
        gt_edge_pixels: n_edges,
        boundary_recall,
    })
}

/// Per-pixel `|pred - gt|`; pixels invalid in either map are zero.
pub fn abs_error_map(pred: &DisparityMap, gt: &DisparityMap) -> Result<Image> {
    check_dims(pred, gt)?;
    Ok(Image::from_fn(gt.width(), gt.height(), 1, |x, y, px| {
        px[0] = if pred.is_valid(x, y) && gt.is_valid(x, y) {
            (pred.get(x, y) - gt.get(x, y)).abs()
        } else {
            0.0
        };
    }))
}

/// Error map scaled so that `max_error` (or the largest error when `None`) is white.
pub fn error_visualization(err: &Image, max_error: Option<f64>) -> Image {
    let top = max_error.unwrap_or_else(|| err.min_max().1).max(1e-12);
    err.map(|v| (v / top).clamp(0.0, 1.0))
}

/// Disparity-as-depth scale used for normals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    /// Depth units per unit disparity relative to one pixel of image spacing.
    pub scale: f64,
}

impl Default for Intrinsics {
    fn default() -> Self {
        Intrinsics { scale: 1.0 }
    }
}

/// Normal of the surface `z = scale · d(u, v)`, encoded as `(n + 1) / 2`.
pub fn normal_map(d: &DisparityMap, intrinsics: Intrinsics) -> Image {
    Image::from_fn(d.width(), d.height(), 3, |x, y, px| {
        let (gx, gy) = central_diff(d, x, y);
        let n = [-intrinsics.scale * gx, -intrinsics.scale * gy, 1.0];
        let len = (n[0] * n[0] + n[1] * n[1] + 1.0).sqrt();
        for c in 0..3 {
            px[c] = (n[c] / len + 1.0) / 2.0;
        }
    })
}

/// Disparities closer than this to the z-buffer front count as unoccluded.
pub const ZBUFFER_TOLERANCE: f64 = 0.25;

/// Mean L1 RGB error of warping every non-central view onto the central view
/// through `disp`. Pixels hidden in a view by a nearer central pixel, or
/// warping outside it, skip that view. Pixels seen by no view score zero.
pub fn reprojection_error(lf: &LightField, disp: &DisparityMap) -> Result<Vec<f64>> {
    let (w, h) = (lf.width(), lf.height());
    if disp.width() != w || disp.height() != h {
        return Err(Error::SizeMismatch(format!(
            "disparity is {}x{}, light field is {w}x{h}",
            disp.width(),
            disp.height()
        )));
    }
    let (sc, tc) = (lf.s_center(), lf.t_center());
    let central = lf.central_rgb();
    let views: Vec<(usize, usize)> = (0..lf.n_t())
        .flat_map(|t| (0..lf.n_s()).map(move |s| (s, t)))
        .filter(|&(s, t)| (s, t) != (sc, tc))
        .collect();
    let per_view: Vec<(Vec<f64>, Vec<u32>)> = views
        .par_iter()
        .map(|&(s, t)| {
            let ds = s as f64 - sc as f64;
            let dt = t as f64 - tc as f64;
            let target = |x: usize, y: usize| {
                let d = disp.get(x, y);
                (x as f64 + d * ds, y as f64 + d * dt)
            };
            let mut zbuf = vec![f64::NEG_INFINITY; w * h];
            let inside = |tx: f64, ty: f64| tx >= 0.0 && ty >= 0.0 && tx <= (w - 1) as f64 && ty <= (h - 1) as f64;
            for y in 0..h {
                for x in 0..w {
                    let (tx, ty) = target(x, y);
                    if inside(tx, ty) {
                        let i = ty.round() as usize * w + tx.round() as usize;
                        zbuf[i] = zbuf[i].max(disp.get(x, y));
                    }
                }
            }
            let view = lf.rgb(s, t);
            let mut err = vec![0.0; w * h];
            let mut cnt = vec![0u32; w * h];
            let mut px = [0.0; 3];
            for y in 0..h {
                for x in 0..w {
                    let (tx, ty) = target(x, y);
                    if !inside(tx, ty) {
                        continue;
                    }
                    let i = ty.round() as usize * w + tx.round() as usize;
                    if disp.get(x, y) < zbuf[i] - ZBUFFER_TOLERANCE {
                        continue;
                    }
                    view.bilinear_into(tx, ty, &mut px);
                    let c = central.pixel(x, y);
                    err[y * w + x] = (0..3).map(|k| (px[k] - c[k]).abs()).sum::<f64>() / 3.0;
                    cnt[y * w + x] = 1;
                }
            }
            (err, cnt)
        })
        .collect();
    let mut sum = vec![0.0; w * h];
    let mut count = vec![0u32; w * h];
    for (e, c) in &per_view {
        for i in 0..w * h {
            sum[i] += e[i];
            count[i] += c[i];
        }
    }
    Ok(sum
        .iter()
        .zip(&count)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect())
}

/// Reprojection error of the forward and backward directional solutions.
pub fn reprojection_error_maps(lf: &LightField, d_f: &DisparityMap, d_b: &DisparityMap) -> Result<(Vec<f64>, Vec<f64>)> {
    let (a, b) = rayon::join(|| reprojection_error(lf, d_f), || reprojection_error(lf, d_b));
    Ok((a?, b?))
}

/// Picks, per point, the side whose solution has the lower reprojection error
/// summed over the pixels under the depth-profile samples (both sides of the
/// edge); ties go forward. Degenerate points stay unoffset.
pub fn reproj_sign_baseline(points: &[SparsePoint], err_f: &[f64], err_b: &[f64], width: usize) -> Vec<OffsetSign> {
    points
        .iter()
        .map(|p| {
            if p.degenerate {
                return OffsetSign::None;
            }
            let height = err_f.len() / width;
            let mut ef = 0.0;
            let mut eb = 0.0;
            for t in crate::diffusion::PROFILE_OFFSETS {
                let x = (p.pos[0] + t * p.grad[0]).round().clamp(0.0, (width - 1) as f64) as usize;
                let y = (p.pos[1] + t * p.grad[1]).round().clamp(0.0, (height - 1) as f64) as usize;
                ef += err_f[y * width + x];
                eb += err_b[y * width + x];
            }
            if eb < ef {
                OffsetSign::Backward
            } else {
                OffsetSign::Forward
            }
        })
        .collect()
}
