//! EPI line detection with a bank of sheared Prewitt kernels, gradient-alignment
//! outlier rejection and central-view visibility.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradient::{abs_cosine, GradientField};
use crate::lightfield::{Epi, EpiAxis, LightField};

/// Derivative samples on each side of the line that enter a kernel row.
const HALF_SUPPORT: isize = 3;

/// Width of the Gaussian weighting the derivative samples across the line.
const TAP_SIGMA: f64 = 1.0;

/// Gradients weaker than this never count as aligned.
const MIN_GRADIENT: f64 = 1e-6;

/// A straight line through an EPI, parameterized by its x-intercepts with the
/// top (row 0) and bottom (row `rows - 1`) rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpiLine {
    pub x_top: f64,
    pub x_bottom: f64,
    pub disparity: f64,
    pub visible: bool,
    pub axis: EpiAxis,
    pub slice_index: usize,
    pub strength: f64,
    pub rows: usize,
    pub center_row: usize,
}

impl EpiLine {
    pub fn from_intercepts(template: &EpiLine, x_top: f64, x_bottom: f64) -> EpiLine {
        let mut l = *template;
        l.x_top = x_top;
        l.x_bottom = x_bottom;
        l.disparity = template.axis.disparity_sign() * (x_bottom - x_top) / (l.rows - 1) as f64;
        l
    }

    /// x position of the line at EPI row `j` (continuous).
    #[inline]
    pub fn x_at(&self, j: f64) -> f64 {
        self.x_top + (self.x_bottom - self.x_top) * j / (self.rows - 1) as f64
    }

    /// Where the line crosses the central-view row.
    pub fn center_x(&self) -> f64 {
        self.x_at(self.center_row as f64)
    }

    /// Unit normal of the line in EPI `(x, row)` coordinates.
    pub fn normal(&self) -> [f64; 2] {
        let dx = self.x_bottom - self.x_top;
        let dy = (self.rows - 1) as f64;
        let n = dx.hypot(dy);
        [dy / n, -dx / n]
    }
}

/// Oriented kernels, one per candidate disparity.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    orientations: Vec<f64>,
}

impl FilterBank {
    /// `size` kernels uniformly spanning `[-d_max, d_max]`; `size` must be odd.
    pub fn new(size: usize, d_max: f64) -> Result<Self> {
        if size.is_multiple_of(2) || size < 3 {
            return Err(Error::InvalidParameter(format!(
                "filter bank size must be odd and >= 3, got {size}"
            )));
        }
        if !(d_max > 0.0 && d_max.is_finite()) {
            return Err(Error::InvalidParameter(format!("d_max must be positive, got {d_max}")));
        }
        let half = (size / 2) as f64;
        let orientations = (0..size)
            .map(|i| d_max * (i as f64 - half) / half)
            .collect();
        Ok(FilterBank { orientations })
    }

    pub fn orientations(&self) -> &[f64] {
        &self.orientations
    }

    pub fn len(&self) -> usize {
        self.orientations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orientations.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.orientations[1] - self.orientations[0]
    }

    pub fn d_max(&self) -> f64 {
        *self.orientations.last().expect("non-empty bank")
    }

    /// Responses of every kernel at every edge position `x + 0.5`, `x in 0..width-1`.
    ///
    /// Each kernel row weights the horizontal pixel differences around the
    /// sheared line by a Gaussian of their exact distance to it, so the
    /// response peaks where the line sits on the edge. Rows are summed
    /// uniformly; a unit step centered on every row scores 1. Absolute
    /// per-channel responses are summed over the LAB channels.
    pub fn responses(&self, epi: &Epi) -> Vec<Vec<f64>> {
        let img = &epi.image;
        let (w, h, ch) = (img.width(), img.height(), img.channels());
        let positions = w.saturating_sub(1);
        let norm = 1.0 / h as f64;
        // deriv[j][x * ch + c] = I(x + 1) - I(x), located at x + 0.5
        let deriv: Vec<Vec<f64>> = (0..h)
            .map(|j| {
                let row = img.row(j);
                (0..positions * ch).map(|i| row[i + ch] - row[i]).collect()
            })
            .collect();
        let mut acc = vec![0.0; positions * ch];
        self.orientations
            .iter()
            .map(|&o| {
                acc.iter_mut().for_each(|a| *a = 0.0);
                for (j, d) in deriv.iter().enumerate() {
                    let shift = o * (j as f64 - epi.center_row as f64);
                    let base = shift.floor();
                    let f = shift - base;
                    let base = base as isize;
                    // sample x + base + k sits at distance k - f from the line
                    for k in -HALF_SUPPORT..=HALF_SUPPORT + 1 {
                        let t = k as f64 - f;
                        let wt = (-t * t / (2.0 * TAP_SIGMA * TAP_SIGMA)).exp();
                        let lo = (-(base + k)).max(0) as usize;
                        let hi = (positions as isize - base - k).clamp(0, positions as isize) as usize;
                        for x in lo..hi {
                            let src = (x as isize + base + k) as usize * ch;
                            for c in 0..ch {
                                acc[x * ch + c] += wt * d[src + c];
                            }
                        }
                    }
                }
                (0..positions)
                    .map(|x| (0..ch).map(|c| acc[x * ch + c].abs()).sum::<f64>() * norm)
                    .collect()
            })
            .collect()
    }
}

/// Tunables of the line detector and the alignment tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdgeParams {
    pub d_max: f64,
    pub bank_size: usize,
    /// Angular tolerance of the outlier test, radians.
    pub tau_f: f64,
    /// Divisor giving the minimum aligned-sample count `k = ceil(rows / c)`.
    pub c: f64,
    /// Angular tolerance of the visibility test, radians.
    pub tau_v: f64,
    /// Minimum summed LAB step response for a detection.
    pub response_threshold: f64,
    /// Non-maximum suppression half-window in pixels along the central row.
    pub nms_window: usize,
}

impl Default for EdgeParams {
    fn default() -> Self {
        EdgeParams {
            d_max: 2.0,
            bank_size: 33,
            tau_f: PI / 13.0,
            c: 4.0,
            tau_v: PI / 10.0,
            response_threshold: 0.004,
            nms_window: 2,
        }
    }
}

impl EdgeParams {
    pub fn bank(&self) -> Result<FilterBank> {
        FilterBank::new(self.bank_size, self.d_max)
    }
}

/// Finds lines at local maxima of the best-orientation response.
pub fn detect_lines(epi: &Epi, bank: &FilterBank, threshold: f64, nms_window: usize) -> Vec<EpiLine> {
    let (w, h) = (epi.width(), epi.height());
    if h < 3 || w < 3 {
        return Vec::new();
    }
    let responses = bank.responses(epi);
    let positions = w - 1;
    let mut best = vec![0.0; positions];
    let mut best_k = vec![0usize; positions];
    for (k, r) in responses.iter().enumerate() {
        for x in 0..positions {
            // strict comparison keeps the first (most negative) orientation on ties
            if r[x] > best[x] {
                best[x] = r[x];
                best_k[x] = k;
            }
        }
    }

    let mut lines = Vec::new();
    for x in 0..positions {
        let s = best[x];
        if s <= threshold {
            continue;
        }
        let lo = x.saturating_sub(nms_window);
        let hi = (x + nms_window).min(positions - 1);
        let is_max = (lo..x).all(|xx| best[xx] < s) && (x + 1..=hi).all(|xx| best[xx] <= s);
        if !is_max {
            continue;
        }
        let k = best_k[x];
        let r = &responses[k];
        let mut offset = 0.0;
        if x > 0 && x + 1 < positions {
            let (a, b, c) = (r[x - 1], r[x], r[x + 1]);
            let denom = a - 2.0 * b + c;
            if denom < 0.0 {
                offset = (0.5 * (a - c) / denom).clamp(-0.5, 0.5);
            }
        }
        let e = x as f64 + 0.5 + offset;
        let d = bank.orientations()[k];
        let cr = epi.center_row as f64;
        let x_top = e - d * cr;
        let x_bottom = e + d * ((h - 1) as f64 - cr);
        let limit = w as f64;
        if x_top < 0.0 || x_top >= limit || x_bottom < 0.0 || x_bottom >= limit {
            continue;
        }
        lines.push(EpiLine {
            x_top,
            x_bottom,
            disparity: d,
            visible: false,
            axis: epi.axis,
            slice_index: epi.slice_index,
            strength: s,
            rows: h,
            center_row: epi.center_row,
        });
    }
    lines
}

/// Keep/discard decision of the gradient-alignment test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Keep,
    Discard,
}

/// Is the sample at EPI row `j` aligned with the line normal within `tau`?
/// Border-clamped samples never count.
pub fn sample_aligned(line: &EpiLine, grad: &GradientField, j: usize, tau: f64) -> bool {
    let sample = grad.sample(line.x_at(j as f64), j as f64);
    if sample.clamped || sample.norm() < MIN_GRADIENT {
        return false;
    }
    abs_cosine(sample.g, line.normal()) > tau.cos()
}

/// Number of rows (one sample per view) where the EPI gradient aligns with the line normal.
pub fn aligned_sample_count(line: &EpiLine, grad: &GradientField, tau: f64) -> usize {
    (0..line.rows)
        .filter(|&j| sample_aligned(line, grad, j, tau))
        .count()
}

/// Minimum aligned-sample count `k = ceil(rows / c)`.
pub fn min_aligned(rows: usize, c: f64) -> usize {
    (rows as f64 / c).ceil() as usize
}

/// Discards a line whose gradient aligns at fewer than `ceil(rows / c)` samples.
pub fn reject_outliers(line: &EpiLine, grad: &GradientField, tau_f: f64, c: f64) -> Verdict {
    if aligned_sample_count(line, grad, tau_f) >= min_aligned(line.rows, c) {
        Verdict::Keep
    } else {
        Verdict::Discard
    }
}

/// Central-view visibility: alignment at the central row within `tau_v`.
pub fn visibility(line: &EpiLine, grad: &GradientField, tau_v: f64) -> bool {
    sample_aligned(line, grad, line.center_row, tau_v)
}

/// Lines of one EPI after detection, rejection and the visibility test.
#[derive(Debug, Clone, Default)]
pub struct EpiLines {
    pub detected: usize,
    pub kept: usize,
    /// Visible lines, ordered by `x_top`.
    pub visible: Vec<EpiLine>,
}

/// Runs detect → reject → visibility on one EPI.
pub fn process_epi(epi: &Epi, bank: &FilterBank, params: &EdgeParams) -> EpiLines {
    let candidates = detect_lines(epi, bank, params.response_threshold, params.nms_window);
    let grad = GradientField::of_epi(&epi.image);
    let detected = candidates.len();
    let kept: Vec<EpiLine> = candidates
        .into_iter()
        .filter(|l| reject_outliers(l, &grad, params.tau_f, params.c) == Verdict::Keep)
        .collect();
    let n_kept = kept.len();
    let mut visible: Vec<EpiLine> = kept
        .into_iter()
        .filter_map(|mut l| {
            l.visible = visibility(&l, &grad, params.tau_v);
            l.visible.then_some(l)
        })
        .collect();
    visible.sort_by(|a, b| a.x_top.total_cmp(&b.x_top));
    EpiLines {
        detected,
        kept: n_kept,
        visible,
    }
}

/// Every `(axis, slice)` of the central cross-hair, in output order.
pub fn cross_hair_slices(lf: &LightField) -> Vec<(EpiAxis, usize)> {
    (0..lf.height())
        .map(|v| (EpiAxis::Horizontal, v))
        .chain((0..lf.width()).map(|u| (EpiAxis::Vertical, u)))
        .collect()
}

/// Summary of a full cross-hair sweep.
#[derive(Debug, Clone, Default)]
pub struct SparseLines {
    pub detected: usize,
    pub kept: usize,
    /// Visible lines ordered by `(axis, slice_index, x_top)`.
    pub lines: Vec<EpiLine>,
}

/// Detects visible lines over all horizontal and vertical central-cross-hair EPIs.
pub fn collect_sparse_lines(lf: &LightField, params: &EdgeParams) -> Result<SparseLines> {
    let bank = params.bank()?;
    let per_epi: Vec<EpiLines> = cross_hair_slices(lf)
        .par_iter()
        .map(|&(axis, slice)| {
            let epi = lf.extract_epi(axis, slice)?;
            Ok(process_epi(&epi, &bank, params))
        })
        .collect::<Result<_>>()?;
    let mut out = SparseLines::default();
    for e in per_epi {
        out.detected += e.detected;
        out.kept += e.kept;
        out.lines.extend(e.visible);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Image;

    /// EPI of a vertical step edge moving with disparity `d`, edge at `x0` on the center row.
    fn step_epi(w: usize, h: usize, x0: f64, d: f64) -> Epi {
        let c = h / 2;
        let image = Image::from_fn(w, h, 3, |x, j, px| {
            let e = x0 + d * (j as f64 - c as f64);
            // box-filtered step
            let cov = ((x as f64 + 0.5) - e).clamp(0.0, 1.0);
            let v = 0.2 + 0.5 * cov;
            px.copy_from_slice(&[v, 0.0, 0.0]);
        });
        Epi {
            image,
            axis: EpiAxis::Horizontal,
            slice_index: 0,
            center_row: c,
        }
    }

    #[test]
    fn bank_is_symmetric_and_uniform() {
        let b = FilterBank::new(17, 2.0).unwrap();
        assert_eq!(b.len(), 17);
        assert!((b.step() - 0.25).abs() < 1e-12);
        assert_eq!(b.orientations()[8], 0.0);
        for i in 0..17 {
            assert!((b.orientations()[i] + b.orientations()[16 - i]).abs() < 1e-12);
        }
        assert!(FilterBank::new(16, 2.0).is_err());
    }

    #[test]
    fn single_step_yields_one_line() {
        let bank = FilterBank::new(17, 2.0).unwrap();
        let epi = step_epi(40, 9, 20.5, 1.0);
        let lines = detect_lines(&epi, &bank, 0.004, 2);
        assert_eq!(lines.len(), 1, "{lines:?}");
        assert!((lines[0].disparity - 1.0).abs() <= 0.125);
        assert!((lines[0].center_x() - 20.5).abs() < 0.3);
    }

    #[test]
    fn constant_epi_has_no_lines() {
        let bank = FilterBank::new(17, 2.0).unwrap();
        let mut epi = step_epi(30, 9, 15.0, 0.0);
        epi.image = Image::filled(30, 9, 3, 0.4);
        assert!(detect_lines(&epi, &bank, 0.004, 2).is_empty());
    }

    #[test]
    fn perfect_line_passes_strictest_test() {
        let epi = step_epi(40, 9, 20.5, 1.0);
        let grad = GradientField::of_epi(&epi.image);
        let line = EpiLine {
            x_top: 20.5 - 4.0,
            x_bottom: 20.5 + 4.0,
            disparity: 1.0,
            visible: false,
            axis: EpiAxis::Horizontal,
            slice_index: 0,
            strength: 1.0,
            rows: 9,
            center_row: 4,
        };
        assert_eq!(aligned_sample_count(&line, &grad, PI / 13.0), 9);
        assert_eq!(reject_outliers(&line, &grad, PI / 13.0, 1.0), Verdict::Keep);
        assert!(visibility(&line, &grad, PI / 10.0));
    }

    #[test]
    fn line_over_flat_region_is_discarded() {
        let epi = step_epi(40, 9, 30.5, 0.0);
        let grad = GradientField::of_epi(&epi.image);
        let line = EpiLine {
            x_top: 10.0,
            x_bottom: 12.0,
            disparity: 0.25,
            visible: false,
            axis: EpiAxis::Horizontal,
            slice_index: 0,
            strength: 1.0,
            rows: 9,
            center_row: 4,
        };
        assert_eq!(aligned_sample_count(&line, &grad, PI / 13.0), 0);
        assert_eq!(reject_outliers(&line, &grad, PI / 13.0, 4.0), Verdict::Discard);
    }

    #[test]
    fn k_uses_ceiling() {
        assert_eq!(min_aligned(9, 4.0), 3);
        assert_eq!(min_aligned(9, 1.0), 9);
        assert_eq!(min_aligned(7, 4.0), 2);
    }

    #[test]
    fn border_sample_never_aligned() {
        let epi = step_epi(12, 9, 0.6, 0.0);
        let grad = GradientField::of_epi(&epi.image);
        let line = EpiLine {
            x_top: 0.6,
            x_bottom: 0.6,
            disparity: 0.0,
            visible: false,
            axis: EpiAxis::Horizontal,
            slice_index: 0,
            strength: 1.0,
            rows: 9,
            center_row: 4,
        };
        assert!(!visibility(&line, &grad, PI / 10.0));
    }
}
