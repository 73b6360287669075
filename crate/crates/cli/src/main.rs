mod svg;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gmaplatent_core::canonical::canonical_straighten;
use gmaplatent_core::geometry::graph::DEFAULT_ISLAND_THRESHOLD;
use gmaplatent_core::io;
use gmaplatent_core::layout::{DEFAULT_OUTLIER_QUANTILE, LayoutTransform};
use gmaplatent_core::ot::OtConfig;
use gmaplatent_core::pipeline::{
    build_pipeline, build_source_matching, compose_pipeline, lay_out, merge_domain, prepare,
    BuildConfig, BuildFailure, LayoutStrategy, Mode,
};
use gmaplatent_core::registration::{build_correspondence, register_canonical};
use gmaplatent_core::translator::{densify, translate_curve, translate_point, DEFAULT_SAMPLES_PER_SEGMENT};
use gmaplatent_core::verify::check_pipeline;
use gmaplatent_core::{Error, Label, LabeledPointCloud, Result};

#[derive(Parser)]
#[command(name = "gmaplatent", version, about = "Align two cluster-labeled 2D latent spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter outliers and lay out the clusters of one point cloud.
    Layout(LayoutCmd),
    /// Transport laid out samples onto a square, merge and mesh them.
    Merge(MergeCmd),
    /// Straighten a merged mesh onto the unit square.
    Straighten(StraightenCmd),
    /// Register two canonical domains.
    Register(RegisterCmd),
    /// Build or assemble a full pipeline bundle.
    Compose(ComposeCmd),
    /// Translate codes or curves through a bundle.
    Translate(TranslateCmd),
    /// Check the invariants of a bundle, canonical file or point file.
    Verify(VerifyCmd),
    /// Write SVG diagnostics.
    Plot(PlotCmd),
}

#[derive(Clone, Copy, ValueEnum)]
enum LayoutMode {
    Separate,
    Grid,
    Match,
}

#[derive(Args, Clone)]
struct BuildArgs {
    /// Seed of the duplicate-position perturbation.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "grid")]
    mode: LayoutMode,
    /// Grid columns; defaults to the ceiling of the square root of the class count.
    #[arg(long)]
    columns: Option<usize>,
    /// Keep samples within this quantile of their class's distance to its barycenter.
    #[arg(long, default_value_t = DEFAULT_OUTLIER_QUANTILE, conflicts_with = "full_domain")]
    outlier_quantile: f64,
    /// Keep every sample.
    #[arg(long)]
    full_domain: bool,
    #[arg(long, default_value_t = 512)]
    grid: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 5000)]
    max_steps: usize,
    /// Max allowed cell measure error; defaults to 5% of the mean cell measure.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_ISLAND_THRESHOLD)]
    island_threshold: f64,
}

impl BuildArgs {
    fn config(&self) -> BuildConfig {
        BuildConfig {
            mode: if self.full_domain { Mode::FullDomain } else { Mode::OutlierFree { quantile: self.outlier_quantile } },
            layout: match self.mode {
                LayoutMode::Separate => LayoutStrategy::Separate,
                LayoutMode::Grid => LayoutStrategy::Grid { columns: self.columns },
                LayoutMode::Match => LayoutStrategy::MatchTarget,
            },
            ot: OtConfig {
                grid: self.grid,
                learning_rate: self.lr,
                max_steps: self.max_steps,
                tolerance: self.tol,
                ..OtConfig::default()
            },
            island_threshold: self.island_threshold,
            seed: self.seed,
        }
    }
}

#[derive(Args)]
struct LayoutCmd {
    #[arg(long = "in")]
    input: PathBuf,
    /// Receives `points.csv` (kept samples), `laid.csv` and `layout.csv`.
    #[arg(long)]
    out_dir: PathBuf,
    /// Stage directory of the built target, for `--mode match`.
    #[arg(long)]
    target_dir: Option<PathBuf>,
    /// Class correspondence CSV `source,target`, for `--mode match`.
    #[arg(long)]
    classes: Option<PathBuf>,
    #[command(flatten)]
    build: BuildArgs,
}

#[derive(Args)]
struct MergeCmd {
    /// Laid out point file.
    #[arg(long = "in")]
    input: PathBuf,
    /// Merged mesh with its feature graph.
    #[arg(long)]
    out: PathBuf,
    /// Merge map file.
    #[arg(long)]
    map: PathBuf,
    /// Solver report CSV, written on failure too.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    build: BuildArgs,
}

#[derive(Args)]
struct StraightenCmd {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RegisterCmd {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    classes: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ComposeCmd {
    /// Source point file; builds every stage.
    #[arg(long, requires = "target", conflicts_with = "source_dir")]
    source: Option<PathBuf>,
    #[arg(long)]
    target: Option<PathBuf>,
    /// Source stage directory (`points.csv`, `layout.csv`, `merge.map`, `canonical.mesh`).
    #[arg(long, requires = "target_dir")]
    source_dir: Option<PathBuf>,
    #[arg(long)]
    target_dir: Option<PathBuf>,
    #[arg(long)]
    classes: PathBuf,
    /// Bundle directory.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    build: BuildArgs,
}

#[derive(Args)]
struct TranslateCmd {
    #[arg(long)]
    bundle: PathBuf,
    /// Codes `id,x,y`.
    #[arg(long = "in", conflicts_with = "curves")]
    input: Option<PathBuf>,
    /// Polylines `curve,x,y`.
    #[arg(long)]
    curves: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Samples per polyline segment.
    #[arg(long, default_value_t = DEFAULT_SAMPLES_PER_SEGMENT)]
    densify: usize,
}

#[derive(Args)]
struct VerifyCmd {
    #[arg(long, conflicts_with_all = ["canonical", "points"])]
    bundle: Option<PathBuf>,
    #[arg(long, conflicts_with = "points")]
    canonical: Option<PathBuf>,
    #[arg(long)]
    points: Option<PathBuf>,
}

#[derive(Args)]
struct PlotCmd {
    /// Writes point, cell and canonical plots of both domains.
    #[arg(long)]
    bundle: Option<PathBuf>,
    #[arg(long)]
    points: Option<PathBuf>,
    #[arg(long)]
    canonical: Option<PathBuf>,
    #[arg(long)]
    merge: Option<PathBuf>,
    /// Polylines `curve,x,y` to trace through the bundle.
    #[arg(long, requires = "bundle")]
    curves: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SAMPLES_PER_SEGMENT)]
    densify: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse(_)
        | Error::Io(_)
        | Error::InvalidCloud(_)
        | Error::EmptyClass(_)
        | Error::AllCollinear
        | Error::DuplicateAfterPerturbation(..) => 2,
        Error::NoConvergence(_) | Error::EmptyCellPersistent(..) | Error::NoConsistentLayout(_) => 3,
        Error::UnmappedLabel(_) | Error::AmbiguousCorrespondence(_) | Error::NotIsomorphic(_) => 5,
        _ => 4,
    }
}

fn read_class_map(path: &Path) -> Result<BTreeMap<Label, Label>> {
    io::parse_class_map(&read(path)?)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn print_json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("report serializes"));
}

fn layout(cmd: LayoutCmd) -> Result<()> {
    let cloud = io::read_points(&cmd.input)?;
    let config = cmd.build.config();
    let (kept, laid, transform): (LabeledPointCloud, LabeledPointCloud, LayoutTransform) = match config.layout {
        LayoutStrategy::MatchTarget => {
            let (Some(dir), Some(classes)) = (&cmd.target_dir, &cmd.classes) else {
                return Err(Error::Parse("--mode match needs --target-dir and --classes".into()));
            };
            let target = io::read_domain_dir(dir)?;
            let map = read_class_map(classes)?;
            let d = build_source_matching(&cloud, &target, &map, &config).map_err(BuildFailure::into_error)?;
            let laid = d.layout.apply(&d.cloud)?;
            (d.cloud, laid, d.layout)
        }
        strategy => {
            let kept = prepare(&cloud, config.mode)?;
            let (laid, t) = lay_out(&kept, strategy)?;
            (kept, laid, t)
        }
    };
    log::info!("kept {} of {} samples", kept.len(), cloud.len());
    io::write_points(&cmd.out_dir.join(io::POINTS_FILE), &kept)?;
    io::write_points(&cmd.out_dir.join("laid.csv"), &laid)?;
    write(&cmd.out_dir.join(io::LAYOUT_FILE), &io::layout_to_string(&transform))
}

fn merge(cmd: MergeCmd) -> Result<()> {
    let laid = io::read_points(&cmd.input)?;
    let config = cmd.build.config();
    match merge_domain(&laid, &config) {
        Ok(m) => {
            if let Some(r) = &cmd.report {
                write(r, &io::solver_report_to_string(&m.history))?;
            }
            log::info!("transport converged in {} steps, error {:e}", m.transport.steps, m.transport.max_error);
            write(&cmd.out, &io::mesh_to_string(&m.mesh))?;
            write(&cmd.map, &io::merge_to_string(&laid.ids(), &laid.labels(), &m.map, &m.transport))
        }
        Err(BuildFailure::Transport(f)) => {
            if let Some(r) = &cmd.report {
                write(r, &io::solver_report_to_string(&f.history))?;
            }
            eprintln!("best measure error {:e} after {} steps", f.best.max_error, f.best.steps);
            Err(f.error)
        }
        Err(BuildFailure::Other(e)) => Err(e),
    }
}

fn straighten(cmd: StraightenCmd) -> Result<()> {
    let mesh = io::read_mesh(&cmd.input)?;
    let d = canonical_straighten(&mesh)?;
    print_json(d.report());
    write(&cmd.out, &io::canonical_to_string(&d))
}

fn register(cmd: RegisterCmd) -> Result<()> {
    let d1 = io::read_canonical(&cmd.source)?;
    let d2 = io::read_canonical(&cmd.target)?;
    let map = read_class_map(&cmd.classes)?;
    let corr = build_correspondence(&d1, &d2, &map)?;
    let r = register_canonical(&d1, &d2, &corr)?;
    print_json(&r.report);
    write(&cmd.out, &io::registration_to_string(&corr, r.report.interior_weights, r.map.target_positions()))
}

fn compose(cmd: ComposeCmd) -> Result<()> {
    let map = read_class_map(&cmd.classes)?;
    let config = cmd.build.config();
    let pipeline = match (&cmd.source, &cmd.target, &cmd.source_dir, &cmd.target_dir) {
        (Some(s), Some(t), None, None) => {
            let source = io::read_points(s)?;
            let target = io::read_points(t)?;
            build_pipeline(&source, &target, &map, &config).map_err(BuildFailure::into_error)?
        }
        (None, None, Some(s), Some(t)) => {
            let source = io::read_domain_dir(s)?;
            let target = io::read_domain_dir(t)?;
            compose_pipeline(source, target, &map, &config)?
        }
        _ => return Err(Error::Parse("give --source/--target or --source-dir/--target-dir".into())),
    };
    io::write_bundle(&cmd.out, &pipeline)
}

fn translate(cmd: TranslateCmd) -> Result<()> {
    let p = io::read_bundle(&cmd.bundle)?;
    if let Some(input) = &cmd.input {
        let codes = io::parse_codes(&read(input)?)?;
        let rows = codes
            .into_iter()
            .map(|(id, c)| translate_point(&p, c).map(|r| (id, r)))
            .collect::<Result<Vec<_>>>()?;
        let flagged = rows.iter().filter(|(_, r)| r.extrapolated).count();
        log::info!("translated {} codes, {flagged} extrapolated", rows.len());
        write(&cmd.out, &io::translations_to_string(&rows))
    } else if let Some(curves) = &cmd.curves {
        let mut out = Vec::new();
        for (c, poly) in io::parse_curves(&read(curves)?)? {
            let t = translate_curve(&p, &poly, cmd.densify)?;
            eprintln!("curve {c}: {} class transitions, max gap {:e}", t.transitions(), t.max_gap);
            out.push((c, densify(&poly, cmd.densify), t));
        }
        write(&cmd.out, &io::curve_translations_to_string(&out))
    } else {
        Err(Error::Parse("give --in or --curves".into()))
    }
}

fn verify(cmd: VerifyCmd) -> Result<()> {
    if let Some(b) = &cmd.bundle {
        let check = check_pipeline(&io::read_bundle(b)?);
        print_json(&check);
        if !check.is_valid() {
            return Err(Error::ConstraintViolation(check.violations.join("; ")));
        }
    } else if let Some(c) = &cmd.canonical {
        let d = io::read_canonical(c)?;
        let check = gmaplatent_core::verify::CanonicalCheck::of(&d);
        print_json(&check);
        let v = check.violations("canonical");
        if !v.is_empty() {
            return Err(Error::ConstraintViolation(v.join("; ")));
        }
    } else if let Some(p) = &cmd.points {
        let cloud = io::read_points(p)?;
        cloud.check_triangulable()?;
        let counts: BTreeMap<Label, usize> = cloud.members().into_iter().map(|(l, m)| (l, m.len())).collect();
        print_json(&counts);
    } else {
        return Err(Error::Parse("give --bundle, --canonical or --points".into()));
    }
    Ok(())
}

fn plot(cmd: PlotCmd) -> Result<()> {
    let out = &cmd.out;
    if let Some(b) = &cmd.bundle {
        let p = io::read_bundle(b)?;
        for (name, d) in [("source", &p.source), ("target", &p.target)] {
            write(&out.join(format!("{name}_points.svg")), &svg::points(&d.cloud))?;
            let laid = d.layout.apply(&d.cloud)?;
            write(&out.join(format!("{name}_cells.svg")), &svg::cells(&laid, &d.merge, &d.transport))?;
            write(&out.join(format!("{name}_canonical.svg")), &svg::canonical(&d.canonical, &[]))?;
        }
        if let Some(c) = &cmd.curves {
            let mut traces = Vec::new();
            let mut canonical_traces = Vec::new();
            for (_, poly) in io::parse_curves(&read(c)?)? {
                let t = translate_curve(&p, &poly, cmd.densify)?;
                traces.push((densify(&poly, cmd.densify), t.points.iter().map(|r| r.target_position).collect::<Vec<_>>()));
                canonical_traces.push(t.points.iter().map(|r| r.stage_trace[3]).collect::<Vec<_>>());
            }
            write(&out.join("curves.svg"), &svg::curves(&p.source.cloud, &p.target.cloud, &traces))?;
            write(&out.join("curves_canonical.svg"), &svg::canonical(&p.target.canonical, &canonical_traces))?;
        }
    }
    if let Some(pts) = &cmd.points {
        write(&out.join("points.svg"), &svg::points(&io::read_points(pts)?))?;
    }
    if let Some(c) = &cmd.canonical {
        write(&out.join("canonical.svg"), &svg::canonical(&io::read_canonical(c)?, &[]))?;
    }
    if let Some(m) = &cmd.merge {
        let f = io::read_merge(m)?;
        let samples = f
            .ids
            .iter()
            .zip(&f.labels)
            .zip(f.map.original_positions())
            .map(|((&id, &label), &position)| gmaplatent_core::Sample { id, position, label })
            .collect();
        let laid = LabeledPointCloud::from_samples(samples)?;
        write(&out.join("cells.svg"), &svg::cells(&laid, &f.map, &f.transport))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Layout(c) => layout(c),
        Command::Merge(c) => merge(c),
        Command::Straighten(c) => straighten(c),
        Command::Register(c) => register(c),
        Command::Compose(c) => compose(c),
        Command::Translate(c) => translate(c),
        Command::Verify(c) => verify(c),
        Command::Plot(c) => plot(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
