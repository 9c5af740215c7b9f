use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use meshreg::deform::DisplacementField;
use meshreg::mesh::{read_obj, write_obj};
use meshreg::metrics::MetricsReport;
use meshreg::pipeline::{
    extract_surface, par_map, register_targets, run_ablations, score, write_fits, write_summaries, Ablation, Dataset,
    PointTable, RunConfig, TargetData,
};
use meshreg::register::{compose_pair, map_points, ref_to_target};
use meshreg::synth::{
    dataset_manifest, gen_reference, layout, write_manifest, write_manifest_case, write_reference, WarpLimits, SPACING,
};
use meshreg::volume::{read_nifti, read_volume, BinaryMask, VoxelGrid};
use meshreg::Mesh;

/// Registration by template-mesh deformation on synthetic vertebra data.
#[derive(Debug, Parser)]
#[command(name = "meshreg", version)]
struct Cli {
    /// Run configuration (JSON); unknown keys are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the effective configuration as JSON and exit.
    #[arg(long, global = true)]
    print_config: bool,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; work is split across cases only.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Synth {
        #[arg(long, default_value_t = 12)]
        cases: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract a smoothed surface mesh from a mask.
    Extract {
        /// Mask volume (.rawvol, or .nii NIfTI-1); foreground is any value > 0.
        #[arg(long)]
        mask: PathBuf,
        /// Overrides `surface.smooth_iters`.
        #[arg(long)]
        smooth_iters: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Deform the reference onto one target, or onto every case of a dataset.
    Fit {
        #[arg(long, requires = "target", conflicts_with = "dataset")]
        reference: Option<PathBuf>,
        /// Target mask (.rawvol / .nii) or closed surface (.obj).
        #[arg(long, requires = "reference")]
        target: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Output directory (per-case subdirectories for a dataset).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Map points through reference-to-target or pairwise correspondence.
    Register {
        mode: Mode,
        #[arg(long)]
        reference: PathBuf,
        /// Displacement CSV; give two (source case, then target case) for `pair`.
        #[arg(long = "disp", required = true)]
        disps: Vec<PathBuf>,
        /// Points CSV with header `x,y,z` or `<name>,x,y,z`.
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score fitted displacements of a dataset.
    Eval {
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Directory written by `fit --dataset`.
        #[arg(long)]
        results: Option<PathBuf>,
        /// Where to write the metric CSVs (defaults to the results directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rerun the experiments under ablation variants.
    Ablate {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        which: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Ref2tgt,
    Pair,
}

/// Bad invocation (exit 1) as opposed to bad data (exit 2).
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::read(p).map_err(|e| usage(format!("config {}: {e}", p.display())))?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if cli.jobs == 0 {
        return Err(usage("--jobs must be >= 1"));
    }
    Ok(cfg)
}

/// Folds command-line paths and overrides into the configuration.
fn apply_flags(cfg: &mut RunConfig, command: &Command) {
    match command {
        Command::Fit { dataset, out, .. } if dataset.is_some() => {
            cfg.paths.dataset = dataset.clone();
            if out.is_some() {
                cfg.paths.results = out.clone();
            }
        }
        Command::Eval { dataset, results, .. } => {
            if dataset.is_some() {
                cfg.paths.dataset = dataset.clone();
            }
            if results.is_some() {
                cfg.paths.results = results.clone();
            }
        }
        Command::Ablate { dataset: Some(d), .. } => cfg.paths.dataset = Some(d.clone()),
        Command::Extract { smooth_iters: Some(n), .. } => cfg.surface.smooth_iters = *n,
        _ => {}
    }
}

fn require(path: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    path.clone().ok_or_else(|| usage(format!("missing {what}")))
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    apply_flags(&mut cfg, &cli.command);
    if cli.print_config {
        println!("{}", cfg.to_json());
        return Ok(());
    }
    let jobs = cli.jobs;
    match cli.command {
        Command::Synth { cases, out } => cmd_synth(cases, &out, cfg.seed, jobs),
        Command::Extract { mask, out, .. } => cmd_extract(&mask, &out, &cfg),
        Command::Fit {
            reference: Some(r),
            target: Some(t),
            out,
            ..
        } => cmd_fit_single(&r, &t, &require(&out, "--out")?, &cfg),
        Command::Fit { .. } => {
            let dataset = require(&cfg.paths.dataset, "--dataset (or paths.dataset), or --reference with --target")?;
            let results = require(&cfg.paths.results, "--out (or paths.results)")?;
            cmd_fit_dataset(&dataset, &results, &cfg, jobs)
        }
        Command::Register {
            mode,
            reference,
            disps,
            points,
            out,
        } => cmd_register(mode, &reference, &disps, &points, &out, &cfg),
        Command::Eval { out, .. } => {
            let dataset = require(&cfg.paths.dataset, "--dataset (or paths.dataset)")?;
            let results = require(&cfg.paths.results, "--results (or paths.results)")?;
            let out = out.unwrap_or_else(|| results.clone());
            cmd_eval(&dataset, &results, &out, &cfg, jobs)
        }
        Command::Ablate { which, out, .. } => {
            let dataset = require(&cfg.paths.dataset, "--dataset (or paths.dataset)")?;
            let which = which
                .iter()
                .map(|w| w.parse::<Ablation>().map_err(|e| usage(format!("--which: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            cmd_ablate(&dataset, &which, &out, &cfg, jobs)
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn cmd_synth(cases: usize, out: &Path, seed: u64, jobs: usize) -> Result<()> {
    if cases == 0 {
        return Err(usage("--cases must be >= 1"));
    }
    let limits = WarpLimits::default();
    let reference = gen_reference(seed).context("generating the reference")?;
    write_reference(&reference, out.join(layout::REF_DIR))?;
    let mut manifest = dataset_manifest(cases, seed, &limits);
    let written = par_map(jobs, &manifest.cases, |c| write_manifest_case(&reference, c, &limits, out))?;
    for (c, (dir, warp_seed)) in manifest.cases.iter_mut().zip(written) {
        c.warp_seed = warp_seed;
        log::info!("wrote {}", dir.display());
    }
    write_manifest(&manifest, out)?;
    Ok(())
}

/// Reads a mask volume; NIfTI by extension, `.rawvol` otherwise.
fn read_mask(path: &Path) -> Result<BinaryMask<f64>> {
    let name = path.to_string_lossy();
    let grid: VoxelGrid<f64> = if name.ends_with(".nii") {
        read_nifti(path)?
    } else {
        read_volume(path)?
    };
    let mask = grid.threshold(0.0);
    if mask.count() == 0 {
        return Err(anyhow::anyhow!("{}: mask has no foreground voxels", path.display()));
    }
    Ok(mask)
}

fn cmd_extract(mask: &Path, out: &Path, cfg: &RunConfig) -> Result<()> {
    let mesh = extract_surface(&read_mask(mask)?, &cfg.surface).with_context(|| format!("extracting {}", mask.display()))?;
    write_obj(&mesh, out)?;
    Ok(())
}

fn read_target(path: &Path, cfg: &RunConfig) -> Result<TargetData> {
    if path.extension().is_some_and(|e| e == "obj") {
        let mesh: Mesh = read_obj(path)?;
        TargetData::from_surface(mesh, SPACING).with_context(|| format!("target {}", path.display()))
    } else {
        TargetData::from_mask(read_mask(path)?, &cfg.surface).with_context(|| format!("target {}", path.display()))
    }
}

fn cmd_fit_single(reference: &Path, target: &Path, out: &Path, cfg: &RunConfig) -> Result<()> {
    let reference: Mesh = read_obj(reference)?;
    let target = read_target(target, cfg)?;
    let reg = register_targets(&reference, &[target], cfg, 1)?;
    create_dir(out)?;
    let fit = &reg.fits[0];
    fit.disp.write_csv(out.join(meshreg::pipeline::DISPLACEMENT_CSV))?;
    write_obj(&fit.predicted, out.join(meshreg::pipeline::PREDICTED_OBJ))?;
    write_report(out, fit.report.as_ref(), reg.gnn_history.as_deref())
}

fn write_report(
    out: &Path,
    report: Option<&meshreg::deform::FitReport>,
    gnn: Option<&[meshreg::deform::GnnStep]>,
) -> Result<()> {
    let path = out.join(meshreg::pipeline::FIT_REPORT_JSON);
    let text = match (report, gnn) {
        (Some(r), _) => serde_json::to_string_pretty(r)?,
        (None, Some(h)) => serde_json::to_string_pretty(h)?,
        (None, None) => return Ok(()),
    };
    std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn cmd_fit_dataset(dataset: &Path, results: &Path, cfg: &RunConfig, jobs: usize) -> Result<()> {
    let ds = Dataset::load(dataset)?;
    let targets = ds.targets(&cfg.surface, jobs)?;
    let reg = register_targets(&ds.reference.mesh, &targets, cfg, jobs)?;
    create_dir(results)?;
    write_fits(results, &ds.ids, &reg.fits)?;
    if let Some(h) = &reg.gnn_history {
        write_report(results, None, Some(h))?;
    }
    cfg.write(results.join("config.json"))?;
    Ok(())
}

fn cmd_register(mode: Mode, reference: &Path, disps: &[PathBuf], points: &Path, out: &Path, cfg: &RunConfig) -> Result<()> {
    let expected = match mode {
        Mode::Ref2tgt => 1,
        Mode::Pair => 2,
    };
    if disps.len() != expected {
        return Err(usage(format!("{mode:?} takes {expected} --disp file(s), got {}", disps.len()).to_lowercase()));
    }
    let reference: Mesh = read_obj(reference)?;
    let fields = disps
        .iter()
        .map(|p| {
            let d = DisplacementField::read_csv(p)?;
            d.check_matches(&reference).with_context(|| format!("{}", p.display()))?;
            Ok(d)
        })
        .collect::<Result<Vec<_>>>()?;
    let corr = match mode {
        Mode::Ref2tgt => ref_to_target(&reference, &fields[0])?,
        Mode::Pair => compose_pair(&fields[0], &fields[1], &reference)?,
    };
    let table = PointTable::read(points)?;
    let mapped = map_points(&corr, &table.points, &cfg.interp)?;
    table.write_with(&mapped, out)?;
    Ok(())
}

fn write_report_csv(report: MetricsReport, path: &Path) -> Result<()> {
    report.with_aggregates().write_csv(path)?;
    Ok(())
}

fn cmd_eval(dataset: &Path, results: &Path, out: &Path, cfg: &RunConfig, jobs: usize) -> Result<()> {
    let ds = Dataset::load(dataset)?;
    let fits = meshreg::pipeline::read_fits(&ds, results)?;
    let scores = score(&ds, &fits, cfg, jobs)?;
    create_dir(out)?;
    write_report_csv(scores.ref2tgt, &out.join("metrics_ref2tgt.csv"))?;
    write_report_csv(scores.pairwise, &out.join("metrics_pairwise.csv"))?;
    Ok(())
}

fn cmd_ablate(dataset: &Path, which: &[Ablation], out: &Path, cfg: &RunConfig, jobs: usize) -> Result<()> {
    let ds = Dataset::load(dataset)?;
    let runs = run_ablations(&ds, cfg, which, jobs)?;
    create_dir(out)?;
    let summaries: Vec<_> = runs.iter().map(|(name, s)| s.summary(name)).collect();
    write_summaries(&summaries, out.join("ablation.csv"))?;
    for (name, s) in runs {
        write_report_csv(s.ref2tgt, &out.join(format!("{name}_ref2tgt.csv")))?;
        write_report_csv(s.pairwise, &out.join(format!("{name}_pairwise.csv")))?;
    }
    Ok(())
}
