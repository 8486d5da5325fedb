//! Diffuses a handful of labels across an image with a vertical intensity
//! edge. Smoothness is weak across the edge, so the two halves keep their
//! own values.

use lfdepth::diffusion::{directional_weights, solve_poisson, splat, DiffusionParams, OffsetSign, SolverConfig};
use lfdepth::gradient::GradientField;
use lfdepth::refine::SparsePoint;
use lfdepth::{EpiAxis, Image};

fn label(x: f64, y: f64, d: f64) -> SparsePoint {
    SparsePoint {
        pos: [x, y],
        disparity: d,
        color: [0.5, 0.0, 0.0],
        grad: [0.0, 0.0],
        grad_norm: 0.0,
        degenerate: true,
        clamped: false,
        axis: EpiAxis::Horizontal,
        slice_index: y as usize,
    }
}

fn main() -> lfdepth::Result<()> {
    let (w, h) = (32, 16);
    let image = Image::from_fn(w, h, 3, |x, _, px| px[0] = if x >= w / 2 { 0.8 } else { 0.2 });
    let grad = GradientField::of_image(&image);

    let points = [label(4.0, 4.0, 0.5), label(6.0, 12.0, 0.5), label(26.0, 8.0, 1.5)];
    let s = splat(&points, OffsetSign::None, w, h);
    let weights = directional_weights(&s, &grad, &DiffusionParams::default());
    let (d, report) = solve_poisson(&s, &weights, &SolverConfig::default())?;

    println!("{} iterations, residual {:.1e}", report.iterations, report.relative_residual);
    for y in (0..h).step_by(4) {
        let row: Vec<String> = (0..w).step_by(3).map(|x| format!("{:.2}", d.get(x, y))).collect();
        println!("{}", row.join(" "));
    }
    Ok(())
}
