//! Metrics, error visualization and a normal map for a slightly wrong
//! prediction of a slanted plane.

use lfdepth::eval::{abs_error_map, compute_metrics, error_visualization, normal_map, Intrinsics, DEFAULT_TOLERANCES};
use lfdepth::DisparityMap;

fn main() -> lfdepth::Result<()> {
    let (w, h) = (64, 48);
    let gt = DisparityMap::from_fn(w, h, |x, _| if x < w / 2 { 0.3 } else { 1.0 + 0.01 * x as f64 });
    // boundary shifted by two pixels plus a small bias
    let pred = DisparityMap::from_fn(w, h, |x, _| if x < w / 2 + 2 { 0.32 } else { 1.0 + 0.01 * x as f64 });

    let report = compute_metrics(&pred, &gt, &DEFAULT_TOLERANCES)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));

    let err = abs_error_map(&pred, &gt)?;
    error_visualization(&err, Some(0.5)).save_png("evaluate_error.png".as_ref())?;
    normal_map(&gt, Intrinsics::default()).save_png("evaluate_normals.png".as_ref())?;
    Ok(())
}
