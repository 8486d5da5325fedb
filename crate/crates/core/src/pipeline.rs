//! End-to-end depth estimation for the central view.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Mode, PipelineConfig};
use crate::diffusion::{
    bidirectional_weights, directional_weights, final_solve, solve_poisson, splat, EdgeChoice, OffsetSign,
    SolveReport, WeightMaps,
};
use crate::epi_edges::{cross_hair_slices, process_epi, EpiLine};
use crate::error::{Error, Result};
use crate::eval::{reproj_sign_baseline, reprojection_error_maps};
use crate::gradient::GradientField;
use crate::lightfield::{DisparityMap, LightField};
use crate::refine::{line_seed, project_with_gradient, refine_line, trilateral_filter, SparsePointSet};

pub const DIAGNOSTICS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTime {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub name: String,
    #[serde(flatten)]
    pub report: SolveReport,
    pub constrained_pixels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub schema_version: u32,
    pub width: usize,
    pub height: usize,
    pub n_s: usize,
    pub n_t: usize,
    pub mode: Mode,
    pub seed: u64,
    pub lines_detected: usize,
    pub lines_kept: usize,
    pub lines_visible: usize,
    pub sparse_points: usize,
    pub degenerate_points: usize,
    pub forward_choices: usize,
    pub backward_choices: usize,
    pub stage_seconds: Vec<StageTime>,
    pub total_seconds: f64,
    pub solves: Vec<SolveDiagnostics>,
    pub lambda_s_range: [f64; 2],
    pub deviations: Vec<String>,
}

/// Everything produced by [`estimate_depth`].
#[derive(Debug, Clone)]
pub struct DepthEstimate {
    pub disparity: DisparityMap,
    pub diagnostics: Diagnostics,
    /// Filtered labels in the central view.
    pub points: SparsePointSet,
    /// Per-point side choice; empty in naive mode.
    pub choices: Vec<EdgeChoice>,
    /// Weights of the last solve; `lambda_s` is the depth-edge confidence.
    pub weights: WeightMaps,
    /// Forward and backward directional solutions; absent in naive mode.
    pub directional: Option<(DisparityMap, DisparityMap)>,
}

/// Visible, refined lines of every cross-hair EPI.
#[derive(Debug, Clone, Default)]
pub struct RefinedLines {
    pub detected: usize,
    pub kept: usize,
    pub lines: Vec<EpiLine>,
}

/// Detect → reject → visibility → refine, in parallel over EPIs, merged in
/// `(axis, slice, x_top)` order.
pub fn refined_lines(lf: &LightField, cfg: &PipelineConfig) -> Result<RefinedLines> {
    let bank = cfg.edges.bank()?;
    let per_epi: Vec<_> = cross_hair_slices(lf)
        .par_iter()
        .map(|&(axis, slice)| {
            let epi = lf.extract_epi(axis, slice)?;
            let found = process_epi(&epi, &bank, &cfg.edges);
            let refined: Vec<EpiLine> = found
                .visible
                .iter()
                .enumerate()
                .map(|(k, l)| refine_line(l, &epi, &cfg.search, line_seed(cfg.seed, axis, slice, k)))
                .collect();
            Ok((found.detected, found.kept, refined))
        })
        .collect::<Result<_>>()?;
    let mut out = RefinedLines::default();
    for (d, k, lines) in per_epi {
        out.detected += d;
        out.kept += k;
        out.lines.extend(lines);
    }
    Ok(out)
}

fn add_label_noise(points: &mut SparsePointSet, sigma: f64, seed: u64) -> Result<()> {
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6c61_6265_6c6e_6f69);
    for p in points.iter_mut() {
        p.disparity += normal.sample(&mut rng);
    }
    Ok(())
}

struct Clock {
    start: Instant,
    last: Instant,
    stages: Vec<StageTime>,
}

impl Clock {
    fn new() -> Self {
        let now = Instant::now();
        Clock {
            start: now,
            last: now,
            stages: Vec::new(),
        }
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        let seconds = (now - self.last).as_secs_f64();
        log::info!("{stage}: {seconds:.3}s");
        self.stages.push(StageTime {
            stage: stage.to_string(),
            seconds,
        });
        self.last = now;
    }
}

fn solve_diag(name: &str, report: SolveReport, weights: &WeightMaps) -> SolveDiagnostics {
    SolveDiagnostics {
        name: name.to_string(),
        report,
        constrained_pixels: weights.lambda_d.iter().filter(|&&d| d > 0.0).count(),
    }
}

/// Estimates the central-view disparity map.
pub fn estimate_depth(lf: &LightField, cfg: &PipelineConfig) -> Result<DepthEstimate> {
    cfg.validate()?;
    let (w, h) = (lf.width(), lf.height());
    let mut clock = Clock::new();

    let lines = refined_lines(lf, cfg)?;
    clock.lap("edges_and_refinement");

    let central = lf.central_lab();
    let image_grad = GradientField::of_image(central);
    let projected = project_with_gradient(&lines.lines, central, &image_grad);
    if projected.is_empty() {
        return Err(Error::Textureless);
    }
    let mut points = trilateral_filter(&projected, &cfg.trilateral)?;
    if cfg.label_noise_sigma > 0.0 {
        add_label_noise(&mut points, cfg.label_noise_sigma, cfg.seed)?;
    }
    let d_max = cfg.edges.d_max;
    for p in points.iter_mut() {
        p.disparity = p.disparity.clamp(-d_max, d_max);
    }
    clock.lap("projection_and_filtering");

    let params = &cfg.diffusion;
    let mut solves = Vec::new();
    let (disparity, weights, choices, directional) = if cfg.mode == Mode::Naive {
        let s = splat(&points, OffsetSign::None, w, h);
        let wts = directional_weights(&s, &image_grad, params);
        let (d, rep) = solve_poisson(&s, &wts, &cfg.solver)?;
        solves.push(solve_diag("naive", rep, &wts));
        clock.lap("naive_solve");
        (d, wts, Vec::new(), None)
    } else {
        let solve_side = |sign| {
            let s = splat(&points, sign, w, h);
            let wts = directional_weights(&s, &image_grad, params);
            solve_poisson(&s, &wts, &cfg.solver).map(|(d, r)| (d, r, wts))
        };
        let (f, b) = rayon::join(|| solve_side(OffsetSign::Forward), || solve_side(OffsetSign::Backward));
        let (d_f, rep_f, w_f) = f?;
        let (d_b, rep_b, w_b) = b?;
        solves.push(solve_diag("forward", rep_f, &w_f));
        solves.push(solve_diag("backward", rep_b, &w_b));
        clock.lap("directional_solves");

        let mut choices = bidirectional_weights(&points, &d_f, &d_b, params.min_step);
        if cfg.mode == Mode::ReprojectionBaseline {
            let (err_f, err_b) = reprojection_error_maps(lf, &d_f, &d_b)?;
            let signs = reproj_sign_baseline(&points, &err_f, &err_b, w);
            for (c, s) in choices.iter_mut().zip(signs) {
                c.sign = s;
            }
        }
        clock.lap("side_selection");

        let fin = final_solve(&points, &choices, &d_f, &d_b, &image_grad, params, &cfg.solver)?;
        solves.push(solve_diag("final", fin.report, &fin.weights));
        clock.lap("final_solve");
        (fin.disparity, fin.weights, choices, Some((d_f, d_b)))
    };

    let lambda_s_range = weights
        .lambda_s
        .iter()
        .fold([f64::INFINITY, f64::NEG_INFINITY], |[lo, hi], &v| [lo.min(v), hi.max(v)]);
    let diagnostics = Diagnostics {
        schema_version: DIAGNOSTICS_SCHEMA_VERSION,
        width: w,
        height: h,
        n_s: lf.n_s(),
        n_t: lf.n_t(),
        mode: cfg.mode,
        seed: cfg.seed,
        lines_detected: lines.detected,
        lines_kept: lines.kept,
        lines_visible: lines.lines.len(),
        sparse_points: points.len(),
        degenerate_points: points.iter().filter(|p| p.degenerate).count(),
        forward_choices: choices.iter().filter(|c| c.sign == OffsetSign::Forward).count(),
        backward_choices: choices.iter().filter(|c| c.sign == OffsetSign::Backward).count(),
        total_seconds: (Instant::now() - clock.start).as_secs_f64(),
        stage_seconds: clock.stages,
        solves,
        lambda_s_range,
        deviations: cfg.deviations(),
    };
    Ok(DepthEstimate {
        disparity,
        diagnostics,
        points,
        choices,
        weights,
        directional,
    })
}
