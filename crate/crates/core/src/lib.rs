//! Dense, occlusion-aware disparity estimation for 4D light fields.
//!
//! The pipeline detects lines in the epipolar-plane images of the central
//! cross-hair, refines them to sub-pixel disparity, projects them into the
//! central view as sparse labels and diffuses those labels into a dense map.
//! Depth edges are told apart from texture edges by diffusing twice, with the
//! labels nudged to either side of their image edge, and keeping the side that
//! yields a step.
//!
//! ```no_run
//! use lfdepth::{estimate_depth, load_light_field, GridLayout, PipelineConfig};
//!
//! let lf = load_light_field("scene/".as_ref(), &GridLayout::hci())?;
//! let est = estimate_depth(&lf, &PipelineConfig::default())?;
//! lfdepth::io::write_pfm("disparity.pfm".as_ref(), &est.disparity)?;
//! # Ok::<(), lfdepth::Error>(())
//! ```

pub mod config;
pub mod diffusion;
pub mod epi_edges;
pub mod error;
pub mod eval;
pub mod gradient;
pub mod image;
pub mod io;
pub mod lightfield;
pub mod pipeline;
pub mod refine;
pub mod synth;

pub use config::{Mode, PipelineConfig};
pub use error::{Error, Result};
pub use image::Image;
pub use lightfield::{load_light_field, DisparityMap, Epi, EpiAxis, GridLayout, LightField};
pub use pipeline::{estimate_depth, DepthEstimate, Diagnostics};
