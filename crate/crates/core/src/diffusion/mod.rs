//! Sparse-to-dense disparity diffusion.
//!
//! Labels are splatted onto the pixel grid and propagated by minimizing
//! `Σ λ_d (S - D)² + Σ_{4-neighbors} λ_s (D_p - D_q)²`. Offsetting every label
//! one pixel along `+∇I` and `-∇I` and solving twice reveals which side of each
//! edge the label belongs to: the correct side produces a step-shaped profile.

pub mod solver;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradient::GradientField;
use crate::image::Image;
use crate::lightfield::DisparityMap;
use crate::refine::SparsePoint;
pub use solver::{GridSystem, Preconditioner, SolveReport, SolverConfig};

/// Step filter applied to the normalized 4-sample depth profile.
pub const STEP_FILTER: [f64; 4] = [-1.0, -1.0, 1.0, 1.0];
/// Profile sample offsets along the unit gradient, in pixels.
pub const PROFILE_OFFSETS: [f64; 4] = [-1.5, -0.5, 0.5, 1.5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffsetSign {
    Forward,
    Backward,
    None,
}

impl OffsetSign {
    pub fn factor(self) -> f64 {
        match self {
            OffsetSign::Forward => 1.0,
            OffsetSign::Backward => -1.0,
            OffsetSign::None => 0.0,
        }
    }

    pub fn from_factor(f: f64) -> Self {
        if f > 0.0 {
            OffsetSign::Forward
        } else if f < 0.0 {
            OffsetSign::Backward
        } else {
            OffsetSign::None
        }
    }
}

/// Labels rasterized onto the pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SplatImage {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub occupied: Vec<bool>,
    /// Index of the point that won each occupied pixel.
    pub owner: Vec<Option<usize>>,
}

impl SplatImage {
    pub fn occupied_count(&self) -> usize {
        self.occupied.iter().filter(|&&o| o).count()
    }
}

/// Rounds `target` to the nearest pixel; exact half-way ties go toward `origin`.
fn round_toward(target: f64, origin: f64) -> f64 {
    let fl = target.floor();
    let frac = target - fl;
    if (frac - 0.5).abs() < 1e-9 {
        if target > origin {
            fl
        } else if target < origin {
            fl + 1.0
        } else {
            target.round()
        }
    } else {
        target.round()
    }
}

/// Total order used to resolve splat collisions: larger disparity wins, then
/// larger position, then larger gradient. Independent of input order.
fn beats(a: &SparsePoint, b: &SparsePoint) -> bool {
    let ka = [a.disparity, a.pos[0], a.pos[1], a.grad[0], a.grad[1]];
    let kb = [b.disparity, b.pos[0], b.pos[1], b.grad[0], b.grad[1]];
    for (x, y) in ka.iter().zip(&kb) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Greater => return true,
            std::cmp::Ordering::Less => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    false
}

/// Splats points moved by a per-point signed unit gradient. Points landing
/// outside the image are dropped.
pub fn splat_with_signs(points: &[SparsePoint], signs: &[OffsetSign], width: usize, height: usize) -> SplatImage {
    assert_eq!(points.len(), signs.len());
    let mut img = SplatImage {
        width,
        height,
        values: vec![0.0; width * height],
        occupied: vec![false; width * height],
        owner: vec![None; width * height],
    };
    for (i, (p, s)) in points.iter().zip(signs).enumerate() {
        let f = s.factor();
        let tx = round_toward(p.pos[0] + f * p.grad[0], p.pos[0]);
        let ty = round_toward(p.pos[1] + f * p.grad[1], p.pos[1]);
        if tx < 0.0 || ty < 0.0 || tx >= width as f64 || ty >= height as f64 {
            continue;
        }
        let idx = ty as usize * width + tx as usize;
        let take = match img.owner[idx] {
            None => true,
            Some(j) => beats(p, &points[j]),
        };
        if take {
            img.values[idx] = p.disparity;
            img.occupied[idx] = true;
            img.owner[idx] = Some(i);
        }
    }
    img
}

/// Splats every point with the same offset sign.
pub fn splat(points: &[SparsePoint], sign: OffsetSign, width: usize, height: usize) -> SplatImage {
    splat_with_signs(points, &vec![sign; points.len()], width, height)
}

/// Per-pixel data and smoothness weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMaps {
    pub width: usize,
    pub height: usize,
    pub lambda_d: Vec<f64>,
    pub lambda_s: Vec<f64>,
}

impl WeightMaps {
    pub fn lambda_s_image(&self) -> Image {
        Image::from_vec(self.width, self.height, 1, self.lambda_s.clone()).expect("sizes agree")
    }
}

/// Constants of the directional and final solves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionParams {
    /// Data weight at labeled pixels in the directional and naive solves.
    pub data_weight: f64,
    /// Scale of the final data weight `omega · exp(a · λ_e)`.
    pub omega: f64,
    pub a: f64,
    /// Added to every gradient magnitude in the smoothness weights.
    pub epsilon: f64,
    /// Smallest disparity range used to normalize a depth profile.
    pub min_step: f64,
}

impl Default for DiffusionParams {
    fn default() -> Self {
        DiffusionParams {
            data_weight: 1e6,
            omega: 150.0,
            a: 3.0,
            epsilon: 1e-4,
            min_step: 0.5,
        }
    }
}

/// Weights of the directional solves: `data_weight` on labeled pixels and
/// `λ_s = 1 / (‖∇I‖ + ε)` everywhere.
pub fn directional_weights(splat: &SplatImage, image_grad: &GradientField, params: &DiffusionParams) -> WeightMaps {
    let (w, h) = (splat.width, splat.height);
    let lambda_d = splat
        .occupied
        .iter()
        .map(|&o| if o { params.data_weight } else { 0.0 })
        .collect();
    let mut lambda_s = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            lambda_s[y * w + x] = 1.0 / (image_grad.magnitude(x, y) + params.epsilon);
        }
    }
    WeightMaps {
        width: w,
        height: h,
        lambda_d,
        lambda_s,
    }
}

/// Minimizes the diffusion energy for the given splat and weights.
pub fn solve_poisson(splat: &SplatImage, weights: &WeightMaps, cfg: &SolverConfig) -> Result<(DisparityMap, SolveReport)> {
    let (w, h) = (splat.width, splat.height);
    if weights.width != w || weights.height != h {
        return Err(Error::SizeMismatch(format!(
            "weights are {}x{}, splat is {w}x{h}",
            weights.width, weights.height
        )));
    }
    if !weights.lambda_d.iter().any(|&d| d > 0.0) {
        return Err(Error::InvalidParameter("no pixel carries a positive data weight".into()));
    }
    let data: Vec<f64> = weights
        .lambda_d
        .iter()
        .zip(&splat.occupied)
        .map(|(&d, &o)| if o { d } else { 0.0 })
        .collect();
    let sys = GridSystem::from_node_weights(w, h, data, &weights.lambda_s);
    let rhs: Vec<f64> = sys.data.iter().zip(&splat.values).map(|(d, s)| d * s).collect();
    // start from the weighted mean of the constraints
    let total: f64 = sys.data.iter().sum();
    let mean = rhs.iter().sum::<f64>() / total;
    let mut x = vec![mean; w * h];
    let report = solver::pcg(&sys, &rhs, &mut x, cfg)?;
    if !report.converged {
        log::warn!(
            "diffusion solve stopped at {} iterations, relative residual {:.3e}",
            report.iterations,
            report.relative_residual
        );
    }
    Ok((DisparityMap::from_values(w, h, x)?, report))
}

/// Per-point depth-edge confidence and the chosen offset side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeChoice {
    pub lambda_e: f64,
    pub sign: OffsetSign,
}

/// Step-filter response of a 4-sample profile after min-max normalization.
///
/// The normalizing span is at least `min_span`, so a window whose disparity
/// varies by less than that scores proportionally less and a flat one scores zero.
pub fn step_response(profile: [f64; 4], min_span: f64) -> f64 {
    let lo = profile.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = profile.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi - lo > 1e-12) {
        return 0.0;
    }
    let span = (hi - lo).max(min_span);
    profile
        .iter()
        .zip(&STEP_FILTER)
        .map(|(v, f)| f * (v - lo) / span)
        .sum::<f64>()
        .abs()
}

/// Depth profile of `map` around `p` along its unit gradient.
pub fn profile(map: &DisparityMap, p: &SparsePoint) -> [f64; 4] {
    PROFILE_OFFSETS.map(|t| map.bilinear(p.pos[0] + t * p.grad[0], p.pos[1] + t * p.grad[1]))
}

/// Compares the two directional solutions around every point. `λ_e` is the
/// larger step response; the sign names the solution attaining it, with ties
/// going to the forward solution. Points without a gradient get `λ_e = 0`.
pub fn bidirectional_weights(
    points: &[SparsePoint],
    forward: &DisparityMap,
    backward: &DisparityMap,
    min_span: f64,
) -> Vec<EdgeChoice> {
    points
        .iter()
        .map(|p| {
            if p.degenerate {
                return EdgeChoice {
                    lambda_e: 0.0,
                    sign: OffsetSign::Forward,
                };
            }
            let rf = step_response(profile(forward, p), min_span);
            let rb = step_response(profile(backward, p), min_span);
            if rb > rf {
                EdgeChoice {
                    lambda_e: rb,
                    sign: OffsetSign::Backward,
                }
            } else {
                EdgeChoice {
                    lambda_e: rf,
                    sign: OffsetSign::Forward,
                }
            }
        })
        .collect()
}

/// Sobel gradient magnitude of `a + b` at every pixel.
fn summed_gradient_magnitude(a: &DisparityMap, b: &DisparityMap) -> Vec<f64> {
    let (w, h) = (a.width(), a.height());
    let sum: Vec<f64> = a.values().iter().zip(b.values()).map(|(p, q)| p + q).collect();
    let img = Image::from_vec(w, h, 1, sum).expect("sizes agree");
    let g = GradientField::of_image(&img);
    (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).map(|(x, y)| g.magnitude(x, y)).collect()
}

/// Weights of the final solve.
///
/// `λ_d = omega · exp(a · λ_e)` on pixels won by a point, zero elsewhere.
/// `λ_s = 1 / ((‖∇I‖ + ε)(‖∇D_f + ∇D_b‖ + ε))`, capped at `1/ε`.
pub fn final_weights(
    splat: &SplatImage,
    choices: &[EdgeChoice],
    forward: &DisparityMap,
    backward: &DisparityMap,
    image_grad: &GradientField,
    params: &DiffusionParams,
) -> WeightMaps {
    let (w, h) = (splat.width, splat.height);
    let lambda_d = splat
        .owner
        .iter()
        .map(|o| match o {
            Some(i) => params.omega * (params.a * choices[*i].lambda_e).exp(),
            None => 0.0,
        })
        .collect();
    let depth_grad = summed_gradient_magnitude(forward, backward);
    let cap = 1.0 / params.epsilon;
    let mut lambda_s = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let denom = (image_grad.magnitude(x, y) + params.epsilon) * (depth_grad[i] + params.epsilon);
            lambda_s[i] = (1.0 / denom).min(cap);
        }
    }
    WeightMaps {
        width: w,
        height: h,
        lambda_d,
        lambda_s,
    }
}

/// Output of [`final_solve`].
#[derive(Debug, Clone)]
pub struct FinalSolve {
    pub disparity: DisparityMap,
    pub report: SolveReport,
    pub weights: WeightMaps,
}

/// Splats every point on its chosen side and solves with the final weights.
pub fn final_solve(
    points: &[SparsePoint],
    choices: &[EdgeChoice],
    forward: &DisparityMap,
    backward: &DisparityMap,
    image_grad: &GradientField,
    params: &DiffusionParams,
    cfg: &SolverConfig,
) -> Result<FinalSolve> {
    if choices.len() != points.len() {
        return Err(Error::SizeMismatch(format!(
            "{} choices for {} points",
            choices.len(),
            points.len()
        )));
    }
    let (w, h) = (forward.width(), forward.height());
    if backward.width() != w || backward.height() != h || image_grad.width() != w || image_grad.height() != h {
        return Err(Error::SizeMismatch("final solve inputs disagree in size".into()));
    }
    let signs: Vec<OffsetSign> = choices.iter().map(|c| c.sign).collect();
    let splat = splat_with_signs(points, &signs, w, h);
    let weights = final_weights(&splat, choices, forward, backward, image_grad, params);
    let (disparity, report) = solve_poisson(&splat, &weights, cfg)?;
    Ok(FinalSolve {
        disparity,
        report,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lightfield::EpiAxis;

    pub(crate) fn point(x: f64, y: f64, d: f64, g: [f64; 2]) -> SparsePoint {
        SparsePoint {
            pos: [x, y],
            disparity: d,
            color: [0.5, 0.0, 0.0],
            grad: g,
            grad_norm: 1.0,
            degenerate: g == [0.0, 0.0],
            clamped: false,
            axis: EpiAxis::Horizontal,
            slice_index: y as usize,
        }
    }

    #[test]
    fn splat_offsets_by_unit_gradient() {
        let p = point(10.0, 10.0, 0.7, [1.0, 0.0]);
        let s = splat(&[p], OffsetSign::Forward, 20, 20);
        assert!(s.occupied[10 * 20 + 11]);
        assert_eq!(s.values[10 * 20 + 11], 0.7);
        assert_eq!(s.occupied_count(), 1);
    }

    #[test]
    fn splat_collision_keeps_nearer_surface() {
        let a = point(5.0, 5.0, 0.5, [0.0, 0.0]);
        let b = point(5.2, 4.9, 1.5, [0.0, 0.0]);
        for pts in [[a, b], [b, a]] {
            let s = splat(&pts, OffsetSign::None, 10, 10);
            assert_eq!(s.values[5 * 10 + 5], 1.5);
        }
    }

    #[test]
    fn splat_drops_points_leaving_image() {
        let p = point(0.2, 3.0, 1.0, [-1.0, 0.0]);
        assert_eq!(splat(&[p], OffsetSign::Forward, 5, 5).occupied_count(), 0);
    }

    #[test]
    fn half_pixel_ties_round_toward_label() {
        let p = point(10.5, 3.0, 1.0, [1.0, 0.0]);
        let f = splat(&[p], OffsetSign::Forward, 20, 6);
        let b = splat(&[p], OffsetSign::Backward, 20, 6);
        assert!(f.occupied[3 * 20 + 11]);
        assert!(b.occupied[3 * 20 + 10]);
    }

    #[test]
    fn step_response_conventions() {
        assert_eq!(step_response([0.0, 0.0, 1.0, 1.0], 0.1), 2.0);
        assert_eq!(step_response([0.5; 4], 0.1), 0.0);
        assert_eq!(step_response([3.0, 3.0, 1.0, 1.0], 0.1), 2.0);
        assert!((step_response([0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0], 0.1) - 4.0 / 3.0).abs() < 1e-12);
        // a 0.01 wobble is not a step
        assert!((step_response([1.0, 1.0, 1.01, 1.01], 0.1) - 0.2).abs() < 1e-9);
        assert_eq!(step_response([1.0, 1.0, 1.01, 1.01], 0.0), 2.0);
    }

    #[test]
    fn bidirectional_prefers_step_side() {
        let w = 8;
        let p = point(3.5, 2.0, 1.0, [1.0, 0.0]);
        // samples at x = 2, 3, 4, 5
        let step = DisparityMap::from_fn(w, 4, |x, _| if x >= 4 { 1.0 } else { 0.0 });
        let flat = DisparityMap::from_fn(w, 4, |_, _| 0.5);
        let c = bidirectional_weights(&[p], &step, &flat, 0.1)[0];
        assert_eq!(c.lambda_e, 2.0);
        assert_eq!(c.sign, OffsetSign::Forward);
        let c = bidirectional_weights(&[p], &flat, &step, 0.1)[0];
        assert_eq!(c.sign, OffsetSign::Backward);
        let c = bidirectional_weights(&[p], &flat, &flat, 0.1)[0];
        assert_eq!((c.lambda_e, c.sign), (0.0, OffsetSign::Forward));
    }

    #[test]
    fn constant_constraints_give_constant_map() {
        let pts: Vec<_> = [(2.0, 2.0), (9.0, 3.0), (5.0, 8.0)]
            .iter()
            .map(|&(x, y)| point(x, y, 0.8, [0.0, 0.0]))
            .collect();
        let s = splat(&pts, OffsetSign::None, 12, 10);
        let lab = Image::from_fn(12, 10, 3, |x, y, px| px.fill(((x * y) % 5) as f64 / 5.0));
        let g = GradientField::of_image(&lab);
        let wts = directional_weights(&s, &g, &DiffusionParams::default());
        let (d, rep) = solve_poisson(&s, &wts, &SolverConfig::default()).unwrap();
        assert!(rep.relative_residual < 1e-9);
        assert!(d.values().iter().all(|v| (v - 0.8).abs() < 1e-9));
    }

    #[test]
    fn zero_confidence_gives_omega_weights() {
        let pts = vec![point(2.0, 2.0, 0.3, [1.0, 0.0]), point(6.0, 5.0, 0.3, [0.0, 1.0])];
        let choices = vec![
            EdgeChoice {
                lambda_e: 0.0,
                sign: OffsetSign::Forward
            };
            2
        ];
        let flat = DisparityMap::from_fn(10, 10, |_, _| 0.3);
        let g = GradientField::of_image(&Image::filled(10, 10, 3, 0.2));
        let params = DiffusionParams::default();
        let s = splat_with_signs(&pts, &[OffsetSign::Forward; 2], 10, 10);
        let wts = final_weights(&s, &choices, &flat, &flat, &g, &params);
        let nonzero: Vec<f64> = wts.lambda_d.iter().cloned().filter(|&v| v > 0.0).collect();
        assert_eq!(nonzero, vec![150.0, 150.0]);
        assert!(wts.lambda_s.iter().all(|&v| v <= 1.0 / params.epsilon + 1e-9));
    }
}
