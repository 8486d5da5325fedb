//! Detects, filters and refines lines in the central horizontal EPI of a
//! slanted textured plane.

use lfdepth::epi_edges::{process_epi, EdgeParams};
use lfdepth::refine::{refine_line, SearchParams};
use lfdepth::synth::{presets, render};
use lfdepth::EpiAxis;

fn main() -> lfdepth::Result<()> {
    let (lf, gt) = render(&presets::textured_plane(64, 9, 0.8), 3)?;
    let row = lf.height() / 2;
    let epi = lf.extract_epi(EpiAxis::Horizontal, row)?;

    let params = EdgeParams::default();
    let found = process_epi(&epi, &params.bank()?, &params);
    println!(
        "row {row}: {} detected, {} kept, {} visible",
        found.detected,
        found.kept,
        found.visible.len()
    );

    let search = SearchParams::default();
    for (k, line) in found.visible.iter().enumerate().take(8) {
        let refined = refine_line(line, &epi, &search, k as u64);
        let truth = gt.get(line.center_x().round() as usize, row);
        println!(
            "x={:6.2}  bank {:+.3}  refined {:+.3}  truth {:+.3}",
            line.center_x(),
            line.disparity,
            refined.disparity,
            truth
        );
    }
    Ok(())
}
