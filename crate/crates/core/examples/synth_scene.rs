//! Renders a two-layer scene and writes it as a view grid plus ground truth.
//!
//! ```text
//! cargo run --example synth_scene -- /tmp/two_plane
//! lfdepth depth --input /tmp/two_plane --out /tmp/two_plane/out
//! ```

use std::path::PathBuf;

use lfdepth::io::write_pfm;
use lfdepth::synth::{presets, render};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| "synth_out".into());
    std::fs::create_dir_all(&out)?;

    let spec = presets::two_plane(96, 9, 0.2, 1.1);
    let (lf, gt) = render(&spec, 7)?;
    for t in 0..lf.n_t() {
        for s in 0..lf.n_s() {
            let idx = t * lf.n_s() + s;
            lf.rgb(s, t).save_png(&out.join(format!("input_Cam{idx:03}.png")))?;
        }
    }
    write_pfm(&out.join("gt.pfm"), &gt)?;
    let layout = lfdepth::GridLayout {
        n_s: lf.n_s(),
        n_t: lf.n_t(),
        ..lfdepth::GridLayout::hci()
    };
    std::fs::write(out.join("layout.toml"), toml::to_string(&layout)?)?;

    let (lo, hi) = gt.valid_range().unwrap_or((0.0, 0.0));
    println!(
        "{} views of {}x{} in {}, disparity {lo:.2}..{hi:.2}",
        lf.n_s() * lf.n_t(),
        lf.width(),
        lf.height(),
        out.display()
    );
    Ok(())
}
