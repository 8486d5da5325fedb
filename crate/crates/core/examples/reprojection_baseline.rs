//! Side selection by step response versus by multi-view reprojection error
//! on the occlusion suite.

use lfdepth::eval::{compute_metrics, reprojection_error};
use lfdepth::synth::{presets, render};
use lfdepth::{estimate_depth, Mode, PipelineConfig};

fn main() -> lfdepth::Result<()> {
    for (i, spec) in presets::occlusion_suite(64, 9).iter().enumerate().take(4) {
        let (lf, gt) = render(spec, i as u64)?;
        let mut line = format!("scene {i}:");
        for mode in [Mode::Bidirectional, Mode::ReprojectionBaseline, Mode::Naive] {
            let cfg = PipelineConfig {
                mode,
                ..Default::default()
            };
            let est = estimate_depth(&lf, &cfg)?;
            let mse = compute_metrics(&est.disparity, &gt, &[])?.mse_x100;
            let reproj = reprojection_error(&lf, &est.disparity)?;
            let mean = reproj.iter().sum::<f64>() / reproj.len() as f64;
            line += &format!("  {mode:?} MSEx100 {mse:.3} reproj {mean:.4}");
        }
        println!("{line}");
    }
    Ok(())
}
