//! Full pipeline on an occlusion scene, compared against naive diffusion.
//! Writes the depth-edge confidence and both directional solves as PNGs.

use std::path::PathBuf;

use lfdepth::eval::compute_metrics;
use lfdepth::io::disparity_preview;
use lfdepth::synth::{presets, render};
use lfdepth::{estimate_depth, Mode, PipelineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| "bidirectional_out".into());
    std::fs::create_dir_all(&out)?;

    let (lf, gt) = render(&presets::two_plane(96, 9, 0.1, 1.2), 0)?;
    let ours = estimate_depth(&lf, &PipelineConfig::default())?;
    let naive = estimate_depth(
        &lf,
        &PipelineConfig {
            mode: Mode::Naive,
            ..Default::default()
        },
    )?;

    let diag = &ours.diagnostics;
    println!(
        "{} labels, {} forward / {} backward, {:.2}s",
        diag.sparse_points, diag.forward_choices, diag.backward_choices, diag.total_seconds
    );
    for (name, est) in [("bidirectional", &ours), ("naive", &naive)] {
        let m = compute_metrics(&est.disparity, &gt, &[])?;
        println!("{name:>13}: MSEx100 {:.3}  Q25 {:.4}", m.mse_x100, m.q25);
    }

    disparity_preview(&ours.disparity).save_png(&out.join("disparity.png"))?;
    ours.weights.lambda_s_image().save_png(&out.join("confidence.png"))?;
    if let Some((f, b)) = &ours.directional {
        disparity_preview(f).save_png(&out.join("forward.png"))?;
        disparity_preview(b).save_png(&out.join("backward.png"))?;
    }
    println!("images in {}", out.display());
    Ok(())
}
