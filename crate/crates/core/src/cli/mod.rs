//! Command-line front end: `fit`, `generate`, `extract` and `render`.
//!
//! Exit codes: 0 success, 1 configuration error, 2 I/O or file-format
//! error, 3 guidance failure.

mod config;
mod rundir;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use config::{GuidanceConfig, InitStrategy, ModelChoice, ProviderKind, RunConfig, DEFAULT_LAYERS, GUIDANCE_URL_ENV};
pub use rundir::RunDir;

use crate::checkpoint::Checkpoint;
use crate::compositor::render;
use crate::error::{Error, Result};
use crate::extraction::{emit_svg, extract, ExtractOptions, SvgStyle, DEFAULT_DISCARD_THRESHOLD, DEFAULT_GRID};
use crate::guidance::{GuidanceProvider, NoiseSchedule, ReconstructionOracle, RemoteProvider, StubProvider};
use crate::raster::RasterImage;
use crate::training::{stage_distill, stage_finetune, stage_init_rgb, InitSource, ShapeMask, TrainObserver};

/// Appendix prompt list shipped with the crate.
pub const BUILTIN_PROMPTS: &str = include_str!("../../data/prompts.txt");

#[derive(Debug, Parser)]
#[command(name = "implicit-layers", version, about = "Layered neural implicit vector graphics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the layered field to a raster image (reconstruction only).
    Fit(FitArgs),
    /// Generate from a text prompt through score distillation.
    Generate(GenerateArgs),
    /// Convert a checkpoint into a layered SVG.
    Extract(ExtractArgs),
    /// Render a checkpoint to PNG.
    Render(RenderArgs),
}

#[derive(Debug, Args, Default)]
pub struct RunArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run directory.
    #[arg(long = "out-dir")]
    pub out_dir: Option<PathBuf>,
    /// Model card: 12k or 1k.
    #[arg(long)]
    pub model: Option<String>,
    /// Custom model hidden width (with --depth and --octaves).
    #[arg(long)]
    pub width: Option<usize>,
    /// Custom model depth in fully connected layers.
    #[arg(long)]
    pub depth: Option<usize>,
    /// Custom model encoding octaves.
    #[arg(long)]
    pub octaves: Option<usize>,
    /// Number of implicit layers L.
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fine-tuning iterations.
    #[arg(long)]
    pub iterations: Option<u64>,
    /// Reconstruction iterations.
    #[arg(long = "distill-iterations")]
    pub distill_iterations: Option<u64>,
    /// RGB generator iterations.
    #[arg(long = "init-iterations")]
    pub init_iterations: Option<u64>,
    #[arg(long = "batch-size")]
    pub batch_size: Option<usize>,
    #[arg(long = "render-size")]
    pub render_size: Option<usize>,
    #[arg(long = "distill-size")]
    pub distill_size: Option<usize>,
    #[arg(long = "lr-mlp")]
    pub lr_mlp: Option<f64>,
    #[arg(long = "lr-color")]
    pub lr_color: Option<f64>,
    /// Entropy weight during fine-tuning.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Entropy weight during reconstruction.
    #[arg(long = "lambda-prime")]
    pub lambda_prime: Option<f64>,
    #[arg(long = "guidance-scale")]
    pub guidance_scale: Option<f64>,
    /// Checkpoint cadence in fine-tuning iterations.
    #[arg(long = "checkpoint-every")]
    pub checkpoint_every: Option<u64>,
    /// Disable query-point jitter in both stages.
    #[arg(long = "no-jitter")]
    pub no_jitter: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Target PNG.
    #[arg(long)]
    pub target: PathBuf,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Text prompt.
    #[arg(long, conflicts_with = "prompt_file")]
    pub prompt: Option<String>,
    /// File with one prompt per line; `builtin` selects the shipped list.
    #[arg(long = "prompt-file")]
    pub prompt_file: Option<String>,
    /// Zero-based line of --prompt-file.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    /// rgb-generator, ddpm-sample, random, or shapes:<box|ellipse|blob,...>.
    #[arg(long)]
    pub init: Option<String>,
    /// Guidance provider: stub, remote or oracle.
    #[arg(long)]
    pub guidance: Option<String>,
    /// Guidance service URL (overrides the environment).
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Target image for the oracle provider.
    #[arg(long = "oracle-target")]
    pub oracle_target: Option<PathBuf>,
    /// Write render and gradient snapshots during fine-tuning.
    #[arg(long = "snapshot-grads")]
    pub snapshot_grads: bool,
    /// Snapshot cadence in iterations.
    #[arg(long = "snapshot-every")]
    pub snapshot_every: Option<u64>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output SVG.
    #[arg(long)]
    pub out: PathBuf,
    /// Sampling grid resolution.
    #[arg(long, default_value_t = DEFAULT_GRID)]
    pub n: usize,
    /// Fit tolerance in unit-square units (default 2/n).
    #[arg(long)]
    pub tol: Option<f64>,
    /// Layers whose occupancy stays below this are dropped.
    #[arg(long, default_value_t = DEFAULT_DISCARD_THRESHOLD)]
    pub threshold: f64,
    /// SVG canvas size in pixels.
    #[arg(long, default_value_t = 512)]
    pub size: usize,
    /// Outline-only line-drawing style.
    #[arg(long = "stroke-only")]
    pub stroke_only: bool,
    #[arg(long = "stroke-width", default_value_t = 2.0)]
    pub stroke_width: f64,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output PNG.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 512)]
    pub width: usize,
    #[arg(long, default_value_t = 512)]
    pub height: usize,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) | Error::Image(_) | Error::Format(_) | Error::Json(_) | Error::MissingCache(_) => 2,
        Error::Guidance(_) | Error::UnavailableSource(_) => 3,
        _ => 1,
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit(args) => cmd_fit(&args),
        Command::Generate(args) => cmd_generate(&args),
        Command::Extract(args) => cmd_extract(&args),
        Command::Render(args) => cmd_render(&args),
    }
}

fn build_config(run: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &run.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(m) = &run.model {
        cfg.model = m.parse()?;
        cfg.train.lr_mlp = cfg.model.learning_rate();
    }
    match (run.width, run.depth, run.octaves) {
        (None, None, None) => {}
        (Some(width), Some(depth), Some(octaves)) => cfg.model = ModelChoice::Custom { width, depth, octaves },
        _ => return Err(Error::Config("a custom model needs --width, --depth and --octaves together".into())),
    }
    let t = &mut cfg.train;
    macro_rules! set {
        ($($flag:ident => $field:expr),* $(,)?) => {
            $(if let Some(v) = run.$flag { $field = v; })*
        };
    }
    set!(
        layers => cfg.layers,
        seed => cfg.seed,
        iterations => t.iterations,
        distill_iterations => t.distill_iterations,
        init_iterations => t.init_iterations,
        batch_size => t.batch_size,
        render_size => t.render_size,
        distill_size => t.distill_size,
        lr_mlp => t.lr_mlp,
        lr_color => t.lr_color,
        lambda => t.lambda,
        lambda_prime => t.lambda_prime,
        guidance_scale => t.guidance_scale,
    );
    if let Some(every) = run.checkpoint_every {
        t.checkpoint_every = Some(every);
    }
    if run.no_jitter {
        t.jitter = false;
        t.jitter_distill = false;
    }
    if let Some(dir) = &run.out_dir {
        cfg.output_dir = dir.clone();
    }
    Ok(cfg)
}

fn read_target(path: &Path) -> Result<RasterImage> {
    RasterImage::read_png(path).map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    })
}

fn finish(
    dir: &mut RunDir,
    cfg: &RunConfig,
    stage: &str,
    iteration: u64,
    field: &crate::field::FieldParams,
    palette: &crate::compositor::Palette,
) -> Result<RasterImage> {
    dir.flush()?;
    dir.save_checkpoint("final", stage, iteration, field, palette)?;
    let img = render(field, palette, cfg.final_render_size, cfg.final_render_size)?;
    img.write_png(dir.path("final.png"))?;
    Ok(img)
}

pub fn cmd_fit(args: &FitArgs) -> Result<()> {
    let cfg = build_config(&args.run)?.resolve()?;
    let target = read_target(&args.target)?;
    let mut dir = RunDir::create(&cfg)?;
    log::info!(
        "fitting {}×{} target with {} layers into {}",
        target.width(),
        target.height(),
        cfg.layers,
        dir.root().display()
    );
    let arch = cfg.model.architecture(cfg.layers)?;
    let (field, palette) = stage_distill(InitSource::Image(target.clone()), arch, &cfg.train, &mut dir)?;
    finish(&mut dir, &cfg, "distill", cfg.train.distill_iterations, &field, &palette)?;
    let recon = render(&field, &palette, target.width(), target.height())?;
    let mse = recon.mse(&target)?;
    let met = cfg.max_final_mse.map(|m| mse < m);
    dir.write_summary(&serde_json::json!({
        "command": "fit",
        "final_mse": mse,
        "max_final_mse": cfg.max_final_mse,
        "threshold_met": met,
        "param_count": field.param_count(),
    }))?;
    if met == Some(false) {
        log::warn!("final MSE {mse:.6} is above the configured threshold");
    }
    println!("{}", dir.path("final.nivel.json").display());
    Ok(())
}

fn resolve_prompt(args: &GenerateArgs) -> Result<String> {
    if let Some(p) = &args.prompt {
        return Ok(p.clone());
    }
    let text = match args.prompt_file.as_deref() {
        None | Some("builtin") => BUILTIN_PROMPTS.to_string(),
        Some(path) => fs::read_to_string(path)?,
    };
    let prompts: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    prompts
        .get(args.index)
        .map(|s| s.to_string())
        .ok_or_else(|| Error::Config(format!("prompt index {} out of range (0..{})", args.index, prompts.len())))
}

/// Builds the provider named in the config. The endpoint comes from the
/// flag, then the environment, then the config file.
pub fn build_provider(cfg: &GuidanceConfig, render_size: usize) -> Result<(Box<dyn GuidanceProvider>, NoiseSchedule)> {
    let local = NoiseSchedule::from_spec(cfg.schedule)?;
    let provider: Box<dyn GuidanceProvider> = match cfg.provider {
        ProviderKind::Stub => Box::new(StubProvider),
        ProviderKind::Remote => {
            let url = cfg
                .endpoint
                .clone()
                .ok_or_else(|| Error::Config(format!("remote guidance needs --endpoint or {GUIDANCE_URL_ENV}")))?;
            let remote = RemoteProvider::connect(&url, cfg.retry_policy()?)
                .map_err(|e| Error::Guidance(format!("guidance service at {url} is unavailable: {e}")))?;
            log::info!("guidance service {} ({})", remote.health().model_id, remote.health().mode);
            Box::new(remote)
        }
        ProviderKind::Oracle => {
            let path = cfg
                .oracle_target
                .as_ref()
                .ok_or_else(|| Error::Config("oracle guidance needs --oracle-target".into()))?;
            let mut target = read_target(path)?;
            if target.width() != render_size || target.height() != render_size {
                target = target.resample_nearest(render_size, render_size)?;
            }
            Box::new(ReconstructionOracle::new(target, local.clone(), cfg.oracle_strength))
        }
    };
    let schedule = provider.schedule().unwrap_or(local);
    Ok((provider, schedule))
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let mut cfg = build_config(&args.run)?;
    if let Some(init) = &args.init {
        cfg.init = init.parse()?;
    }
    if let Some(g) = &args.guidance {
        cfg.guidance.provider = g.parse()?;
    }
    if let Ok(url) = std::env::var(GUIDANCE_URL_ENV) {
        if !url.is_empty() {
            cfg.guidance.endpoint = Some(url);
        }
    }
    if let Some(url) = &args.endpoint {
        cfg.guidance.endpoint = Some(url.clone());
    }
    if let Some(path) = &args.oracle_target {
        cfg.guidance.oracle_target = Some(path.clone());
    }
    if args.snapshot_grads {
        cfg.snapshot_grads = true;
    }
    if let Some(every) = args.snapshot_every {
        cfg.train.snapshot_every = Some(every);
    }
    let cfg = cfg.resolve()?;
    let prompt = resolve_prompt(args)?;
    let (provider, schedule) = build_provider(&cfg.guidance, cfg.train.render_size)?;

    let mut dir = RunDir::create(&cfg)?;
    fs::write(dir.path("prompt.txt"), format!("{prompt}\n"))?;
    log::info!("generating {prompt:?} with {} guidance into {}", provider.name(), dir.root().display());
    let arch = cfg.model.architecture(cfg.layers)?;
    let train = &cfg.train;

    let generator;
    let source = match &cfg.init {
        InitStrategy::RgbGenerator => {
            generator = stage_init_rgb(&prompt, provider.as_ref(), &schedule, train, &mut dir)?;
            generator.render(train.distill_size, train.distill_size)?.write_png(dir.path("init-rgb.png"))?;
            InitSource::RgbGenerator(&generator)
        }
        InitStrategy::DdpmSample => {
            let sample = provider.sample(&prompt, train.distill_size, cfg.seed)?;
            sample.write_png(dir.path("init-sample.png"))?;
            InitSource::Image(sample)
        }
        InitStrategy::Random => InitSource::Random,
        InitStrategy::Shapes(kinds) => {
            InitSource::Shapes(kinds.iter().enumerate().map(|(i, &k)| ShapeMask::centered(k, i)).collect())
        }
    };
    let (field, palette) = stage_distill(source, arch, train, &mut dir)?;
    dir.on_checkpoint("distill", train.distill_iterations, &field, &palette)?;
    let (field, palette) = stage_finetune(field, palette, &prompt, provider.as_ref(), &schedule, train, &mut dir)?;
    finish(&mut dir, &cfg, "finetune", train.iterations, &field, &palette)?;
    dir.write_summary(&serde_json::json!({
        "command": "generate",
        "prompt": prompt,
        "provider": provider.name(),
        "param_count": field.param_count(),
    }))?;
    println!("{}", dir.path("final.nivel.json").display());
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    if !path.exists() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("checkpoint {} not found", path.display()),
        )));
    }
    Checkpoint::load(path)
}

pub fn cmd_extract(args: &ExtractArgs) -> Result<()> {
    let ck = load_checkpoint(&args.checkpoint)?;
    let opts = ExtractOptions {
        n: args.n,
        tol: args.tol,
        discard_threshold: args.threshold,
        ..ExtractOptions::default()
    };
    let style = if args.stroke_only {
        SvgStyle::Stroke {
            width: args.stroke_width,
        }
    } else {
        SvgStyle::Fill
    };
    let doc = extract(&ck.field, &ck.palette, &opts)?;
    log::info!("{} of {} layers kept", doc.layers.len(), ck.field.layers());
    fs::write(&args.out, emit_svg(&doc, args.size, style)?)?;
    Ok(())
}

pub fn cmd_render(args: &RenderArgs) -> Result<()> {
    if args.width == 0 || args.height == 0 {
        return Err(Error::Config(format!("render size {}×{} must be positive", args.width, args.height)));
    }
    let ck = load_checkpoint(&args.checkpoint)?;
    render(&ck.field, &ck.palette, args.width, args.height)?.write_png(&args.out)?;
    Ok(())
}
