//! Sub-pixel refinement of EPI lines and joint filtering of the projected labels.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::epi_edges::EpiLine;
use crate::error::{Error, Result};
use crate::gradient::GradientField;
use crate::image::Image;
use crate::lightfield::{Epi, EpiAxis};

/// Random-search schedule: at iteration `j` (from 1) both intercepts move by
/// `U(-1, 1) · alpha · t^j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchParams {
    pub alpha: f64,
    pub t: f64,
    pub iters: usize,
    pub bins: usize,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            alpha: 0.15,
            t: 0.88,
            iters: 10,
            bins: 32,
        }
    }
}

/// Shannon entropy (bits) of the L-channel histogram sampled along `line`,
/// one bilinear sample per EPI row, `bins` buckets over `[0, 1]`.
pub fn entropy(line: &EpiLine, epi: &Epi, bins: usize) -> f64 {
    let bins = bins.max(1);
    let mut counts = vec![0usize; bins];
    let rows = epi.height();
    for j in 0..rows {
        let v = epi.image.bilinear(line.x_at(j as f64), j as f64, 0).clamp(0.0, 1.0);
        let b = ((v * bins as f64) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let n = rows as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Mixes a global seed with a line identity into a per-line RNG seed.
pub fn line_seed(global: u64, axis: EpiAxis, slice: usize, ordinal: usize) -> u64 {
    let mut z = global
        ^ (slice as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ (ordinal as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f)
        ^ match axis {
            EpiAxis::Horizontal => 0x1656_67b1_9e37_79f9,
            EpiAxis::Vertical => 0x27d4_eb2f_1656_67c5,
        };
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Annealed random search over `(x_top, x_bottom)` minimizing [`entropy`].
///
/// Proposals are accepted only on strict improvement; proposals leaving the
/// EPI are rejected but still consume an iteration.
pub fn refine_line(line: &EpiLine, epi: &Epi, params: &SearchParams, seed: u64) -> EpiLine {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = *line;
    let mut best_e = entropy(line, epi, params.bins);
    let max_x = (epi.width() - 1) as f64;
    for j in 1..=params.iters {
        let radius = params.alpha * params.t.powi(j as i32);
        let o_t: f64 = rng.random_range(-1.0..=1.0) * radius;
        let o_b: f64 = rng.random_range(-1.0..=1.0) * radius;
        if best_e == 0.0 {
            continue;
        }
        let (xt, xb) = (best.x_top + o_t, best.x_bottom + o_b);
        if !(0.0..=max_x).contains(&xt) || !(0.0..=max_x).contains(&xb) {
            continue;
        }
        let cand = EpiLine::from_intercepts(&best, xt, xb);
        let e = entropy(&cand, epi, params.bins);
        if e < best_e {
            best = cand;
            best_e = e;
        }
    }
    best
}

/// A sparse disparity label in the central view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsePoint {
    /// Subpixel `(u, v)` position.
    pub pos: [f64; 2],
    pub disparity: f64,
    /// Normalized LAB color at `pos`.
    pub color: [f64; 3],
    /// Unit image gradient, or zero when degenerate.
    pub grad: [f64; 2],
    /// Gradient magnitude before normalization.
    pub grad_norm: f64,
    pub degenerate: bool,
    pub clamped: bool,
    pub axis: EpiAxis,
    pub slice_index: usize,
}

pub type SparsePointSet = Vec<SparsePoint>;

/// Projects visible lines into the central view.
///
/// A horizontal-EPI line from image row `v` crossing the central row at `x`
/// lands at `(x, v)`; a vertical-EPI line from column `u` lands at `(u, x)`.
pub fn project_to_central(lines: &[EpiLine], central_lab: &Image) -> SparsePointSet {
    let grad = GradientField::of_image(central_lab);
    project_with_gradient(lines, central_lab, &grad)
}

pub(crate) fn project_with_gradient(
    lines: &[EpiLine],
    central_lab: &Image,
    grad: &GradientField,
) -> SparsePointSet {
    let max_u = (central_lab.width() - 1) as f64;
    let max_v = (central_lab.height() - 1) as f64;
    lines
        .iter()
        .map(|l| {
            let along = l.center_x();
            let raw = match l.axis {
                EpiAxis::Horizontal => [along, l.slice_index as f64],
                EpiAxis::Vertical => [l.slice_index as f64, along],
            };
            let pos = [raw[0].clamp(0.0, max_u), raw[1].clamp(0.0, max_v)];
            let mut color = [0.0; 3];
            central_lab.bilinear_into(pos[0], pos[1], &mut color);
            let g = grad.sample(pos[0], pos[1]);
            let norm = g.norm();
            let degenerate = norm < 1e-9;
            let unit = if degenerate {
                [0.0, 0.0]
            } else {
                [g.g[0] / norm, g.g[1] / norm]
            };
            SparsePoint {
                pos,
                disparity: l.disparity,
                color,
                grad: unit,
                grad_norm: norm,
                degenerate,
                clamped: pos != raw || g.clamped,
                axis: l.axis,
                slice_index: l.slice_index,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrilateralParams {
    pub sigma_s: f64,
    pub sigma_d: f64,
    pub sigma_c: f64,
}

impl Default for TrilateralParams {
    fn default() -> Self {
        TrilateralParams {
            sigma_s: 10.0,
            sigma_d: 0.1,
            sigma_c: 0.5,
        }
    }
}

#[inline]
fn gauss(d2: f64, sigma: f64) -> f64 {
    (-d2 / (2.0 * sigma * sigma)).exp()
}

/// Joint spatial / disparity / color smoothing of the label disparities.
///
/// Each output disparity is the normalized weighted mean of the neighbor
/// disparities `q_d` within `3·sigma_s`, with weights
/// `N(|p_s - q_s|)·N(p_d - q_d)·N(|p_c - q_c|)`. Reads the input set and writes
/// a fresh one.
pub fn trilateral_filter(points: &[SparsePoint], params: &TrilateralParams) -> Result<SparsePointSet> {
    if points.is_empty() {
        return Err(Error::InvalidParameter("trilateral filter needs at least one point".into()));
    }
    let cell = params.sigma_s.max(1e-6);
    let radius = 3.0 * params.sigma_s;
    let reach = (radius / cell).ceil() as i64;
    let key = |p: &SparsePoint| ((p.pos[0] / cell).floor() as i64, (p.pos[1] / cell).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        grid.entry(key(p)).or_default().push(i);
    }
    use rayon::prelude::*;
    let out = points
        .par_iter()
        .map(|p| {
            let (cx, cy) = key(p);
            let mut num = 0.0;
            let mut den = 0.0;
            for gy in cy - reach..=cy + reach {
                for gx in cx - reach..=cx + reach {
                    let Some(bucket) = grid.get(&(gx, gy)) else {
                        continue;
                    };
                    for &qi in bucket {
                        let q = &points[qi];
                        let ds2 = (p.pos[0] - q.pos[0]).powi(2) + (p.pos[1] - q.pos[1]).powi(2);
                        if ds2 > radius * radius {
                            continue;
                        }
                        let dc2: f64 = (0..3).map(|c| (p.color[c] - q.color[c]).powi(2)).sum();
                        let wgt = gauss(ds2, params.sigma_s)
                            * gauss((p.disparity - q.disparity).powi(2), params.sigma_d)
                            * gauss(dc2, params.sigma_c);
                        num += wgt * q.disparity;
                        den += wgt;
                    }
                }
            }
            let mut f = *p;
            if den > 0.0 {
                f.disparity = num / den;
            }
            f
        })
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn epi_from_l(rows: &[&[f64]]) -> Epi {
        let h = rows.len();
        let w = rows[0].len();
        let image = Image::from_fn(w, h, 3, |x, y, px| px.copy_from_slice(&[rows[y][x], 0.0, 0.0]));
        Epi {
            image,
            axis: EpiAxis::Horizontal,
            slice_index: 0,
            center_row: h / 2,
        }
    }

    fn vertical_line(x: f64, rows: usize) -> EpiLine {
        EpiLine {
            x_top: x,
            x_bottom: x,
            disparity: 0.0,
            visible: true,
            axis: EpiAxis::Horizontal,
            slice_index: 0,
            strength: 1.0,
            rows,
            center_row: rows / 2,
        }
    }

    #[test]
    fn entropy_of_single_bucket_is_zero() {
        let row: &[f64] = &[0.3, 0.3, 0.3];
        let epi = epi_from_l(&[row; 9]);
        assert_eq!(entropy(&vertical_line(1.0, 9), &epi, 32), 0.0);
    }

    #[test]
    fn entropy_of_nine_distinct_buckets() {
        let vals: Vec<[f64; 1]> = (0..9).map(|i| [(i as f64 * 3.0 + 0.5) / 32.0]).collect();
        let rows: Vec<&[f64]> = vals.iter().map(|v| &v[..]).collect();
        let epi = epi_from_l(&rows);
        let e = entropy(&vertical_line(0.0, 9), &epi, 32);
        assert!((e - 9f64.log2()).abs() < 1e-12, "{e}");
    }

    #[test]
    fn refine_keeps_zero_entropy_line() {
        let row: &[f64] = &[0.1, 0.5, 0.9, 0.5];
        let epi = epi_from_l(&[row; 9]);
        let l = vertical_line(1.0, 9);
        for seed in 0..5 {
            assert_eq!(refine_line(&l, &epi, &SearchParams::default(), seed), l);
        }
    }

    #[test]
    fn seeds_differ_per_line() {
        let a = line_seed(7, EpiAxis::Horizontal, 3, 0);
        let b = line_seed(7, EpiAxis::Vertical, 3, 0);
        let c = line_seed(7, EpiAxis::Horizontal, 3, 1);
        assert!(a != b && a != c && b != c);
        assert_eq!(a, line_seed(7, EpiAxis::Horizontal, 3, 0));
    }

    #[test]
    fn projection_places_points_by_axis() {
        let lab = Image::from_fn(20, 10, 3, |x, _, px| px.fill(x as f64 / 20.0));
        let mut h = vertical_line(7.25, 9);
        h.slice_index = 4;
        let mut v = h;
        v.axis = EpiAxis::Vertical;
        v.x_top = 3.0;
        v.x_bottom = 3.0;
        v.slice_index = 12;
        let pts = project_to_central(&[h, v], &lab);
        assert_eq!(pts[0].pos, [7.25, 4.0]);
        assert_eq!(pts[1].pos, [12.0, 3.0]);
        assert!((pts[0].grad[0] - 1.0).abs() < 1e-9);
        // border clamp
        let mut far = h;
        far.x_top = 25.0;
        far.x_bottom = 25.0;
        let p = project_to_central(&[far], &lab)[0];
        assert_eq!(p.pos[0], 19.0);
        assert!(p.clamped);
    }
}
