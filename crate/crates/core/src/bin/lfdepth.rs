use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lfdepth::diffusion::Preconditioner;
use lfdepth::epi_edges::{cross_hair_slices, detect_lines, reject_outliers, visibility, EpiLine, Verdict};
use lfdepth::eval::{abs_error_map, compute_metrics, error_visualization, DEFAULT_TOLERANCES};
use lfdepth::gradient::GradientField;
use lfdepth::io::{disparity_preview, read_pfm, write_atomic, write_pfm};
use lfdepth::synth::{render, SceneSpec};
use lfdepth::{estimate_depth, load_light_field, EpiAxis, Error, GridLayout, Image, LightField, Mode, PipelineConfig};

#[derive(Parser)]
#[command(name = "lfdepth", version, about = "Occlusion-aware disparity estimation for light fields")]
struct Cli {
    /// Worker threads; 0 uses every logical core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the central-view disparity of a view grid.
    Depth(DepthArgs),
    /// Compare a predicted disparity PFM against ground truth.
    Eval(EvalArgs),
    /// Render a synthetic scene to a view grid plus ground truth.
    Synth(SynthArgs),
    /// Write the detected EPI lines as CSV and annotated EPI images.
    EpiDump(EpiDumpArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Directory holding the view images.
    #[arg(long)]
    input: PathBuf,
    /// Grid naming (TOML or JSON). Defaults to `<input>/layout.toml` if present, else the HCI 9×9 naming.
    #[arg(long)]
    layout: Option<PathBuf>,
    /// Keep only the central `k×k` views (odd `k`).
    #[arg(long)]
    crop: Option<usize>,
}

#[derive(Args)]
struct TuningArgs {
    /// Pipeline configuration file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Disparity search range in pixels per view.
    #[arg(long)]
    dmax: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Random-search iterations per line.
    #[arg(long)]
    refine_iters: Option<usize>,
    #[arg(long)]
    sigma_s: Option<f64>,
    #[arg(long)]
    sigma_d: Option<f64>,
    #[arg(long)]
    sigma_c: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Bidirectional,
    ReprojectionBaseline,
    Naive,
}

#[derive(Clone, Copy, ValueEnum)]
enum PreconditionerArg {
    Jacobi,
    Multigrid,
}

#[derive(Args)]
struct DepthArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    tuning: TuningArgs,
    /// Relative residual at which the solver stops.
    #[arg(long)]
    solver_tol: Option<f64>,
    #[arg(long)]
    solver_max_iters: Option<usize>,
    #[arg(long, value_enum)]
    preconditioner: Option<PreconditionerArg>,
    /// Single undirected diffusion of the labels (ablation).
    #[arg(long, conflicts_with = "mode")]
    naive: bool,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Write the smoothness weight of the last solve as `confidence.png`.
    #[arg(long)]
    dump_confidence: bool,
    /// Write the two directional solutions as `forward.pfm` and `backward.pfm`.
    #[arg(long)]
    dump_directional: bool,
    /// Write the filtered sparse labels as `sparse.csv`.
    #[arg(long)]
    dump_sparse: bool,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Boundary-recall tolerances in pixels.
    #[arg(long, value_delimiter = ',')]
    tolerances: Option<Vec<usize>>,
    /// Directory for `metrics.json` and `error.png`; metrics are always printed.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Error mapped to white in `error.png`; defaults to the largest error.
    #[arg(long)]
    max_error: Option<f64>,
}

#[derive(Args)]
struct SynthArgs {
    /// Scene description (TOML).
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for the views, `layout.toml` and `gt.pfm`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EpiDumpArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    tuning: TuningArgs,
    /// Horizontal EPI rows to render; defaults to the middle row.
    #[arg(long, value_delimiter = ',')]
    rows: Option<Vec<usize>>,
    /// Vertical EPI columns to render; defaults to the middle column.
    #[arg(long, value_delimiter = ',')]
    cols: Option<Vec<usize>>,
    /// Vertical magnification of the rendered EPIs.
    #[arg(long, default_value_t = 8)]
    scale: usize,
    #[arg(long, default_value = "epi")]
    out: PathBuf,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::Image { .. } | Error::MissingView { .. } | Error::DimensionMismatch { .. } | Error::Format { .. } => 2,
        Error::Config(_) | Error::InvalidParameter(_) => 3,
        Error::Textureless | Error::SizeMismatch(_) => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    let result = match cli.command {
        Command::Depth(a) => run_depth(a),
        Command::Eval(a) => run_eval(a),
        Command::Synth(a) => run_synth(a),
        Command::EpiDump(a) => run_epi_dump(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load_input(a: &InputArgs) -> Result<LightField, Error> {
    let layout = match &a.layout {
        Some(p) => GridLayout::load(p)?,
        None if a.input.join("layout.toml").is_file() => GridLayout::load(&a.input.join("layout.toml"))?,
        None => GridLayout::hci(),
    };
    let lf = load_light_field(&a.input, &layout)?;
    log::info!("loaded {}x{} views of {}x{}", lf.n_s(), lf.n_t(), lf.width(), lf.height());
    match a.crop {
        Some(k) => lf.crop_angular(k),
        None => Ok(lf),
    }
}

fn build_config(t: &TuningArgs) -> Result<PipelineConfig, Error> {
    let mut cfg = match &t.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = t.dmax {
        cfg.edges.d_max = v;
    }
    if let Some(v) = t.seed {
        cfg.seed = v;
    }
    if let Some(v) = t.refine_iters {
        cfg.search.iters = v;
    }
    if let Some(v) = t.sigma_s {
        cfg.trilateral.sigma_s = v;
    }
    if let Some(v) = t.sigma_d {
        cfg.trilateral.sigma_d = v;
    }
    if let Some(v) = t.sigma_c {
        cfg.trilateral.sigma_c = v;
    }
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn run_depth(a: DepthArgs) -> Result<(), Error> {
    let mut cfg = build_config(&a.tuning)?;
    if let Some(v) = a.solver_tol {
        cfg.solver.residual_tol = v;
    }
    if let Some(v) = a.solver_max_iters {
        cfg.solver.max_iters = v;
    }
    if let Some(p) = a.preconditioner {
        cfg.solver.preconditioner = match p {
            PreconditionerArg::Jacobi => Preconditioner::Jacobi,
            PreconditionerArg::Multigrid => Preconditioner::Multigrid,
        };
    }
    if a.naive {
        cfg.mode = Mode::Naive;
    } else if let Some(m) = a.mode {
        cfg.mode = match m {
            ModeArg::Bidirectional => Mode::Bidirectional,
            ModeArg::ReprojectionBaseline => Mode::ReprojectionBaseline,
            ModeArg::Naive => Mode::Naive,
        };
    }
    cfg.validate()?;
    let lf = load_input(&a.input)?;
    let est = estimate_depth(&lf, &cfg)?;

    create_dir(&a.out)?;
    write_pfm(&a.out.join("disparity.pfm"), &est.disparity)?;
    disparity_preview(&est.disparity).save_png(&a.out.join("preview.png"))?;
    write_json(&a.out.join("diag.json"), &est.diagnostics)?;
    if a.dump_confidence {
        let ls = est.weights.lambda_s_image();
        let (lo, hi) = ls.min_max();
        let span = (hi - lo).max(1e-12);
        ls.map(|v| (v - lo) / span).save_png(&a.out.join("confidence.png"))?;
    }
    if a.dump_directional {
        match &est.directional {
            Some((f, b)) => {
                write_pfm(&a.out.join("forward.pfm"), f)?;
                write_pfm(&a.out.join("backward.pfm"), b)?;
            }
            None => log::warn!("naive mode has no directional solutions"),
        }
    }
    if a.dump_sparse {
        let mut csv = String::from("u,v,disparity,grad_u,grad_v,degenerate,axis,slice,lambda_e,sign\n");
        for (i, p) in est.points.iter().enumerate() {
            let (le, sign) = est
                .choices
                .get(i)
                .map(|c| (c.lambda_e, c.sign.factor()))
                .unwrap_or((0.0, 0.0));
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{},{}",
                p.pos[0],
                p.pos[1],
                p.disparity,
                p.grad[0],
                p.grad[1],
                p.degenerate,
                axis_name(p.axis),
                p.slice_index,
                le,
                sign
            );
        }
        write_atomic(&a.out.join("sparse.csv"), csv.as_bytes())?;
    }
    log::info!(
        "{} sparse labels, wrote {}",
        est.diagnostics.sparse_points,
        a.out.join("disparity.pfm").display()
    );
    Ok(())
}

fn run_eval(a: EvalArgs) -> Result<(), Error> {
    let pred = read_pfm(&a.pred)?;
    let gt = read_pfm(&a.gt)?;
    let tolerances = a.tolerances.unwrap_or_else(|| DEFAULT_TOLERANCES.to_vec());
    let report = compute_metrics(&pred, &gt, &tolerances)?;
    println!("{}", serde_json::to_string_pretty(&report).map_err(|e| Error::Config(e.to_string()))?);
    if let Some(out) = &a.out {
        create_dir(out)?;
        write_json(&out.join("metrics.json"), &report)?;
        let err = abs_error_map(&pred, &gt)?;
        error_visualization(&err, a.max_error).save_png(&out.join("error.png"))?;
    }
    Ok(())
}

fn run_synth(a: SynthArgs) -> Result<(), Error> {
    let text = std::fs::read_to_string(&a.spec).map_err(|e| Error::Io {
        path: a.spec.clone(),
        source: e,
    })?;
    let spec = SceneSpec::from_toml_str(&text)?;
    let (lf, gt) = render(&spec, a.seed)?;
    create_dir(&a.out)?;
    let layout = GridLayout {
        pattern: "input_Cam{idx:03}.png".into(),
        n_s: lf.n_s(),
        n_t: lf.n_t(),
        ..GridLayout::hci()
    };
    for t in 0..lf.n_t() {
        for s in 0..lf.n_s() {
            lf.rgb(s, t).save_png(&a.out.join(layout.file_name(s, t)?))?;
        }
    }
    let layout_text = toml::to_string(&layout).map_err(|e| Error::Config(e.to_string()))?;
    write_atomic(&a.out.join("layout.toml"), layout_text.as_bytes())?;
    write_pfm(&a.out.join("gt.pfm"), &gt)?;
    log::info!("wrote {}x{} views to {}", lf.n_s(), lf.n_t(), a.out.display());
    Ok(())
}

fn axis_name(axis: EpiAxis) -> &'static str {
    match axis {
        EpiAxis::Horizontal => "horizontal",
        EpiAxis::Vertical => "vertical",
    }
}

/// EPI lines after outlier rejection, with the visibility flag filled in.
fn kept_lines(lf: &LightField, cfg: &PipelineConfig, axis: EpiAxis, slice: usize) -> Result<(Image, Vec<EpiLine>), Error> {
    let bank = cfg.edges.bank()?;
    let epi = lf.extract_epi(axis, slice)?;
    let grad = GradientField::of_epi(&epi.image);
    let lines = detect_lines(&epi, &bank, cfg.edges.response_threshold, cfg.edges.nms_window)
        .into_iter()
        .filter(|l| reject_outliers(l, &grad, cfg.edges.tau_f, cfg.edges.c) == Verdict::Keep)
        .map(|mut l| {
            l.visible = visibility(&l, &grad, cfg.edges.tau_v);
            l
        })
        .collect();
    Ok((epi.image, lines))
}

fn render_epi(epi: &Image, lines: &[EpiLine], scale: usize) -> Image {
    let scale = scale.max(1);
    let (w, h) = (epi.width(), epi.height());
    let mut img = Image::from_fn(w, h * scale, 3, |x, y, px| px.fill(epi.get(x, y / scale, 0).clamp(0.0, 1.0)));
    for l in lines {
        let color = if l.visible { [1.0, 0.2, 0.1] } else { [0.1, 0.4, 1.0] };
        for yy in 0..h * scale {
            let j = (yy as f64 + 0.5) / scale as f64 - 0.5;
            let x = l.x_at(j).round();
            if x >= 0.0 && (x as usize) < w {
                img.pixel_mut(x as usize, yy).copy_from_slice(&color);
            }
        }
    }
    img
}

fn run_epi_dump(a: EpiDumpArgs) -> Result<(), Error> {
    let cfg = build_config(&a.tuning)?;
    cfg.validate()?;
    let lf = load_input(&a.input)?;
    create_dir(&a.out)?;
    let mut csv = String::from("axis,slice,x_top,x_bottom,disparity,visible,strength\n");
    for (axis, slice) in cross_hair_slices(&lf) {
        let (_, lines) = kept_lines(&lf, &cfg, axis, slice)?;
        for l in &lines {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{}",
                axis_name(axis),
                slice,
                l.x_top,
                l.x_bottom,
                l.disparity,
                l.visible,
                l.strength
            );
        }
    }
    write_atomic(&a.out.join("lines.csv"), csv.as_bytes())?;
    let rows = a.rows.clone().unwrap_or_else(|| vec![lf.height() / 2]);
    let cols = a.cols.clone().unwrap_or_else(|| vec![lf.width() / 2]);
    let picks = rows
        .into_iter()
        .map(|r| (EpiAxis::Horizontal, r))
        .chain(cols.into_iter().map(|c| (EpiAxis::Vertical, c)));
    for (axis, slice) in picks {
        let (img, lines) = kept_lines(&lf, &cfg, axis, slice)?;
        let name = format!("epi_{}_{slice:04}.png", axis_name(axis));
        render_epi(&img, &lines, a.scale).save_png(&a.out.join(name))?;
    }
    log::info!("wrote {}", a.out.join("lines.csv").display());
    Ok(())
}
