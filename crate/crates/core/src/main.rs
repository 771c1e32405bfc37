use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use retinoscan::aggregation::{FusionMode, VoterStats};
use retinoscan::config::{parse_config, parse_coord, parse_flags, RunConfig};
use retinoscan::grading::Seeding;
use retinoscan::imaging::{lift_to_volume, load_mask, load_plane, load_volume, save_mask, save_plane, save_volume, Volume};
use retinoscan::lpdmf::{denoise, denoise_volume, psnr};
use retinoscan::metrics::{confusion, format_report, roc_curve};
use retinoscan::micronet::{build_network, load_model, save_model, train};
use retinoscan::patcher::{enumerate_centers, load_patches, sample_patch, save_patches, Patch};
use retinoscan::phantom::{generate_phantom, sample_balanced_patches};
use retinoscan::pipeline::{grade_mask, run_pipeline, segment_volume, PipelineError, Stage, StageContext};

#[derive(Parser)]
#[command(name = "retinoscan", version, about = "Retinoblastoma segmentation and grading pipeline")]
struct Cli {
    /// Run configuration (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for network initialisation, training and phantoms.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Remove impulse noise from a PGM/PPM plane or an .rbvol volume.
    Denoise(DenoiseArgs),
    /// Cut nine-grid patches, or balanced labelled patches, from a volume.
    Extract(ExtractArgs),
    /// Train the patch classifier.
    Train(TrainArgs),
    /// Classify every voxel and fuse the nine grids into a mask.
    Segment(SegmentArgs),
    /// Group, stage and treatment for a mask.
    Grade(GradeArgs),
    /// Compare a predicted mask with a reference.
    Evaluate(EvaluateArgs),
    /// Write a synthetic volume with its ground truth.
    Phantom(PhantomArgs),
    /// Denoise, segment, grade and optionally evaluate in one run.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct DenoiseArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Clean reference for a PSNR printout (same format as the input).
    #[arg(long)]
    reference: Option<PathBuf>,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    vol: PathBuf,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long, default_value_t = 0)]
    margin: usize,
    #[arg(long)]
    out: PathBuf,
    /// Label patches from this mask.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Draw this many class-balanced patches instead of the full lattice.
    #[arg(long, requires = "mask")]
    balanced: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    patches: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

#[derive(Args)]
struct SegmentArgs {
    #[arg(long)]
    vol: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    mode: Option<FusionMode>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the fused tumor scores.
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    margin: Option<usize>,
}

#[derive(Args)]
struct GradeArgs {
    #[arg(long)]
    mask: PathBuf,
    /// Voxel spacing in mm.
    #[arg(long)]
    spacing: f64,
    #[arg(long)]
    disc: Option<String>,
    #[arg(long)]
    fovea: Option<String>,
    /// Sets both subretinal and vitreous seeding.
    #[arg(long)]
    seeding: Option<Seeding>,
    #[arg(long)]
    vitreous_seeding: Option<Seeding>,
    /// Comma list: touches_lens, neovascular_glaucoma, orbital_cellulitis,
    /// intraocular_hemorrhage, diffuse_infiltrating.
    #[arg(long)]
    flags: Option<String>,
    #[arg(long)]
    enucleated: bool,
    #[arg(long)]
    resected: bool,
    #[arg(long)]
    remnants: bool,
    #[arg(long)]
    regional: bool,
    #[arg(long)]
    metastasis: bool,
    /// Printed to stdout when omitted
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Printed to stdout when omitted
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct PhantomArgs {
    /// `nx,ny,nz`.
    #[arg(long)]
    dims: Option<String>,
    #[arg(long)]
    tumors: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    /// Files are written as `<prefix>volume.rbvol`, `<prefix>clean.rbvol`,
    /// `<prefix>mask.rbmask` and `<prefix>truth.txt`.
    #[arg(long)]
    out_prefix: String,
}

#[derive(Args)]
struct PipelineArgs {
    /// .rbvol volume, or a PGM/PPM plane lifted to `volume.depth` slices.
    #[arg(long)]
    vol: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Reference mask; adds `metrics.txt`.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Also write `denoised.rbvol` and `scores.rbvol`.
    #[arg(long)]
    keep_intermediates: bool,
}

struct Ctx {
    cfg: RunConfig,
    verbose: bool,
}

impl Ctx {
    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn is_volume(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "rbvol")
}

fn load_any_volume(path: &Path, cfg: &RunConfig, stage: Stage) -> Result<Volume, PipelineError> {
    if is_volume(path) {
        load_volume(path).stage(stage)
    } else {
        let plane = load_plane(path, 1.0).stage(stage)?;
        lift_to_volume(&plane, cfg.volume_depth).stage(stage)
    }
}

fn cmd_denoise(ctx: &Ctx, a: &DenoiseArgs) -> Result<(), PipelineError> {
    let st = Stage::Denoise;
    if is_volume(&a.input) {
        let v = load_volume(&a.input).stage(st)?;
        let out = denoise_volume(&v, &ctx.cfg.filter);
        if let Some(r) = &a.reference {
            let clean = load_volume(r).stage(st)?;
            let (before, after) = (volume_psnr(&clean, &v)?, volume_psnr(&clean, &out)?);
            println!("psnr_noisy={before:.6}\npsnr_denoised={after:.6}");
        }
        save_volume(&out, &a.out).stage(st)
    } else {
        let p = load_plane(&a.input, 1.0).stage(st)?;
        let out = denoise(&p, &ctx.cfg.filter);
        if let Some(r) = &a.reference {
            let clean = load_plane(r, 1.0).stage(st)?;
            let before = psnr(&clean, &p).stage(st)?;
            let after = psnr(&clean, &out).stage(st)?;
            println!("psnr_noisy={before:.6}\npsnr_denoised={after:.6}");
        }
        save_plane(&out, &a.out).stage(st)
    }
}

fn volume_psnr(a: &Volume, b: &Volume) -> Result<f64, PipelineError> {
    if a.dims() != b.dims() {
        return Err(PipelineError::new(Stage::Denoise, format!("dims {:?} vs {:?}", a.dims(), b.dims())));
    }
    let mse = a.voxels().iter().zip(b.voxels()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { 10.0 * (1.0 / mse).log10() })
}

fn cmd_extract(ctx: &Ctx, a: &ExtractArgs) -> Result<(), PipelineError> {
    let st = Stage::Extract;
    let vol = load_volume(&a.vol).stage(st)?;
    let mask = a.mask.as_ref().map(load_mask).transpose().stage(st)?;
    if let Some(m) = &mask {
        if m.dims() != vol.dims() {
            return Err(PipelineError::new(st, format!("mask {:?} vs volume {:?}", m.dims(), vol.dims())));
        }
    }
    let grid = ctx.cfg.grid;
    let patches: Vec<Patch> = match (a.balanced, &mask) {
        (Some(count), Some(m)) => sample_balanced_patches(&vol, m, count, &grid, ctx.cfg.seed).stage(st)?,
        _ => {
            let mut out = Vec::new();
            for c in enumerate_centers(vol.dims(), a.stride, a.margin) {
                for g in grid.grids_at(c.map(|v| v as f64)).iter() {
                    let p = sample_patch(&vol, g, grid.slices, grid.slice_step);
                    out.push(match &mask {
                        Some(m) => p.with_label(m.get(c[0], c[1], c[2])),
                        None => p,
                    });
                }
            }
            out
        }
    };
    ctx.log(format!("extracted {} patches", patches.len()));
    save_patches(&patches, &a.out).stage(st)
}

fn cmd_train(ctx: &Ctx, a: &TrainArgs) -> Result<(), PipelineError> {
    let st = Stage::Train;
    let patches = load_patches(&a.patches).stage(st)?;
    let first = patches.first().ok_or_else(|| PipelineError::new(st, "patch archive is empty"))?;
    let mut net = ctx.cfg.network();
    net.input = [first.n, first.n, first.slices];
    let mut tc = ctx.cfg.train;
    tc.epochs = a.epochs.unwrap_or(tc.epochs);
    tc.learning_rate = a.lr.unwrap_or(tc.learning_rate);
    let model = build_network(&net).stage(st)?;
    let (model, hist) = train(model, &patches, &tc).stage(st)?;
    for (e, (l, acc)) in hist.epoch_loss.iter().zip(&hist.epoch_accuracy).enumerate() {
        ctx.log(format!("epoch {} loss {l:.6} accuracy {acc:.4}", e + 1));
    }
    save_model(&model, &a.out).stage(st)
}

fn cmd_segment(ctx: &Ctx, a: &SegmentArgs) -> Result<(), PipelineError> {
    let st = Stage::Segment;
    let mut cfg = ctx.cfg.clone();
    cfg.segment.mode = a.mode.unwrap_or(cfg.segment.mode);
    cfg.segment.stride = a.stride.unwrap_or(cfg.segment.stride);
    cfg.segment.margin = a.margin.unwrap_or(cfg.segment.margin);
    let vol = load_volume(&a.vol).stage(st)?;
    let model = load_model(&a.model).stage(st)?;
    let seg = segment_volume(&vol, &model, &cfg, &[VoterStats { ..cfg.segment.stats }; 9])?;
    ctx.log(format!("{} tumor voxels", seg.mask.count_ones()));
    save_mask(&seg.mask, &a.out).stage(st)?;
    if let Some(s) = &a.scores {
        save_volume(&seg.scores, s).stage(st)?;
    }
    Ok(())
}

fn cmd_grade(ctx: &Ctx, a: &GradeArgs) -> Result<(), PipelineError> {
    let st = Stage::Grade;
    let mut cfg = ctx.cfg.clone();
    let g = &mut cfg.grade;
    if let Some(d) = &a.disc {
        g.landmarks.disc = parse_coord("--disc", d).stage(st)?;
    }
    if let Some(f) = &a.fovea {
        g.landmarks.fovea = parse_coord("--fovea", f).stage(st)?;
    }
    if let Some(s) = a.seeding {
        g.subretinal_seeding = s;
        g.vitreous_seeding = s;
    }
    if let Some(s) = a.vitreous_seeding {
        g.vitreous_seeding = s;
    }
    if let Some(f) = &a.flags {
        g.flags = parse_flags("--flags", f).stage(st)?;
    }
    let f = &mut g.findings;
    f.enucleated |= a.enucleated;
    f.completely_resected |= a.resected;
    f.microscopic_remnants |= a.remnants;
    f.regional_extension |= a.regional;
    f.metastasis |= a.metastasis;
    if !(a.spacing > 0.0) {
        return Err(PipelineError::new(st, format!("spacing {} must be positive", a.spacing)));
    }
    let mask = load_mask(&a.mask).stage(st)?;
    let report = grade_mask(&mask, [a.spacing; 3], &cfg)?;
    emit_report(ctx, a.report.as_deref(), &report.to_text()).stage(st)
}

fn cmd_evaluate(ctx: &Ctx, a: &EvaluateArgs) -> Result<(), PipelineError> {
    let st = Stage::Evaluate;
    let truth = load_mask(&a.truth).stage(st)?;
    let pred = load_mask(&a.pred).stage(st)?;
    let c = confusion(&truth, &pred).stage(st)?;
    let roc = match &a.scores {
        Some(s) => Some(roc_curve(&load_volume(s).stage(st)?, &truth).stage(st)?),
        None => None,
    };
    emit_report(ctx, a.report.as_deref(), &format_report(&c, roc.as_ref())).stage(st)
}

fn emit_report(ctx: &Ctx, path: Option<&Path>, text: &str) -> std::io::Result<()> {
    match path {
        Some(p) => {
            ctx.log(text.trim_end());
            fs::write(p, text)
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_phantom(ctx: &Ctx, a: &PhantomArgs) -> Result<(), PipelineError> {
    let st = Stage::Phantom;
    let mut spec = ctx.cfg.phantom.clone();
    if let Some(d) = &a.dims {
        let dims = d.split(',').map(|t| t.trim().parse::<usize>()).collect::<Result<Vec<_>, _>>().stage(st)?;
        spec.dims = dims.try_into().map_err(|_| PipelineError::new(st, "--dims needs three values"))?;
    }
    spec.tumor_count = a.tumors.unwrap_or(spec.tumor_count);
    spec.noise_density = a.noise.unwrap_or(spec.noise_density);
    let truth = generate_phantom(&spec).stage(st)?;
    let prefix = &a.out_prefix;
    if let Some(parent) = Path::new(&format!("{prefix}x")).parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).stage(st)?;
        }
    }
    save_volume(&truth.volume, format!("{prefix}volume.rbvol")).stage(st)?;
    save_volume(&truth.clean_volume, format!("{prefix}clean.rbvol")).stage(st)?;
    save_mask(&truth.mask, format!("{prefix}mask.rbmask")).stage(st)?;
    fs::write(format!("{prefix}truth.txt"), truth.report()).stage(st)?;
    ctx.log(format!("{} tumor voxels", truth.mask.count_ones()));
    Ok(())
}

fn cmd_pipeline(ctx: &Ctx, a: &PipelineArgs) -> Result<(), PipelineError> {
    let vol = load_any_volume(&a.vol, &ctx.cfg, Stage::Load)?;
    let truth = a.truth.as_ref().map(load_mask).transpose().stage(Stage::Load)?;
    let out = run_pipeline(&ctx.cfg, &vol, &a.model, truth.as_ref())?;
    ctx.log(format!("{} tumor voxels", out.segmentation.mask.count_ones()));
    out.write(&a.out_dir, a.keep_intermediates)
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| PipelineError::new(Stage::Load, format!("{}: {e}", p.display())))?;
            parse_config(&text).stage(Stage::Load)?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.set_seed(s);
    }
    let ctx = Ctx { cfg, verbose: cli.verbose };
    match &cli.command {
        Command::Denoise(a) => cmd_denoise(&ctx, a),
        Command::Extract(a) => cmd_extract(&ctx, a),
        Command::Train(a) => cmd_train(&ctx, a),
        Command::Segment(a) => cmd_segment(&ctx, a),
        Command::Grade(a) => cmd_grade(&ctx, a),
        Command::Evaluate(a) => cmd_evaluate(&ctx, a),
        Command::Phantom(a) => cmd_phantom(&ctx, a),
        Command::Pipeline(a) => cmd_pipeline(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("retinoscan: {e}");
            ExitCode::FAILURE
        }
    }
}
