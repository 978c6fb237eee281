//! `coastseg`: scene selection, dataset building, segmentation, evaluation
//! and band importance from the command line.

mod config;

use std::fmt;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use coastseg_core::catalog::{
    altitude_by_month, annotate_altitude, cloud_histogram, filter_catalog, read_catalog, select_scenes,
    write_catalog, write_csv_rows,
};
use coastseg_core::dataset::{build_dataset, load_crop, BuildOptions, DatasetManifest, DirSource};
use coastseg_core::exec::{init_threads, Exec};
use coastseg_core::fixtures::write_fixture_set;
use coastseg_core::gbdt::{predict_gbdt_with, sample_training_pixels_with, train_gbdt_with, GbdtModel};
use coastseg_core::importance::{
    band_importance_with, export_permuted_suite_with, read_suite_input, read_suite_manifest,
    score_external_predictions, write_importance_csv, BandImportance, Predictor, TestImage,
};
use coastseg_core::index::{compute_ndwi_with, threshold_segment};
use coastseg_core::metrics::{
    aggregate_report, comparison_tables, evaluate_batch, evaluate_image_with, read_rows_csv, write_rows_csv,
    EvalItem, MetricRow, Strata,
};
use coastseg_core::raster::{read_mask, read_raster, write_mask, RasterScene, SegMask};

use config::RunConfig;

const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Parser)]
#[command(name = "coastseg", version, about = "Coastal land/ocean segmentation benchmark pipeline")]
struct Cli {
    /// JSON run config; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Print a JSON summary on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Master seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker thread cap (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write the synthetic fixture set to DIR and exit.
    #[arg(long, value_name = "DIR")]
    make_fixtures: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Filter the catalog and pick one scene per (year, altitude class).
    SelectScenes(SelectArgs),
    /// Sample test and training crops from the selected scenes.
    BuildDataset(BuildArgs),
    /// Segment with the NDWI threshold.
    Segment(PredictArgs),
    /// Train the gradient-boosted tree baseline on training crops.
    TrainGbdt(TrainArgs),
    /// Segment with a trained tree model.
    PredictGbdt(PredictGbdtArgs),
    /// Score predicted masks against ground truth.
    Evaluate(EvaluateArgs),
    /// Per-band permutation importance.
    PermImportance(ImportanceArgs),
    /// Aggregate metric rows into summary and comparison tables.
    Report(ReportArgs),
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Selected scenes CSV, with altitude columns.
    #[arg(long)]
    out: PathBuf,
    /// Also write monthly altitude and cloud histogram CSVs here.
    #[arg(long)]
    summary_dir: Option<PathBuf>,
}

#[derive(Args)]
struct BuildArgs {
    /// Selected scenes CSV.
    #[arg(long)]
    selected: PathBuf,
    #[arg(long)]
    scene_dir: Option<PathBuf>,
    #[arg(long)]
    mask_dir: Option<PathBuf>,
    /// Dataset directory for crops and the manifest.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the number of training crops per scene.
    #[arg(long)]
    train_per_scene: Option<usize>,
}

#[derive(Args)]
struct PredictArgs {
    /// Single scene bundle to segment.
    #[arg(long, requires = "output", conflicts_with_all = ["dataset", "suite"])]
    input: Option<PathBuf>,
    /// Mask bundle for `--input`.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Segment every test crop in this dataset.
    #[arg(long, conflicts_with = "suite")]
    dataset: Option<PathBuf>,
    /// Segment every input of an exported permutation suite.
    #[arg(long)]
    suite: Option<PathBuf>,
    /// Directory for predicted masks (dataset and suite modes).
    #[arg(long)]
    out: Option<PathBuf>,
    /// NDWI threshold.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct PredictGbdtArgs {
    /// Model JSON written by `train-gbdt`.
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    target: PredictArgs,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset whose training crops supply the pixel samples.
    #[arg(long)]
    dataset: PathBuf,
    /// Output model JSON.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    n_trees: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    pixels_per_image: Option<usize>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Predicted mask bundle (single-pair mode).
    #[arg(long, requires = "truth", conflicts_with_all = ["dataset", "pred_dir"])]
    pred: Option<PathBuf>,
    /// Ground-truth mask bundle (single-pair mode).
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Dataset whose test crops supply truth and strata.
    #[arg(long, requires = "pred_dir")]
    dataset: Option<PathBuf>,
    /// Directory of predicted masks named after the test crops.
    #[arg(long)]
    pred_dir: Option<PathBuf>,
    /// Metric rows CSV (dataset mode).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    buffer_radius: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Ndwi,
    Gbdt,
}

#[derive(Args)]
struct ImportanceArgs {
    /// Dataset whose test crops are permuted.
    #[arg(long)]
    dataset: PathBuf,
    /// Predictor scored in-process.
    #[arg(long, value_enum, default_value = "ndwi")]
    method: Method,
    /// Model for `--method gbdt`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Write the permuted suite for an external predictor instead.
    #[arg(long, conflicts_with = "score_external")]
    export: Option<PathBuf>,
    /// Score external predictions of an exported suite.
    #[arg(long)]
    score_external: Option<PathBuf>,
    /// Importance CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Permutations averaged per band (in-process only).
    #[arg(long)]
    repeats: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// Metric rows as METHOD=PATH; repeat for each method.
    #[arg(long = "rows", value_name = "METHOD=PATH", required = true)]
    rows: Vec<String>,
    /// Output directory for summary JSON and comparison CSVs.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

struct Ctx {
    cfg: RunConfig,
    json: bool,
    exec: Exec,
}

impl Ctx {
    fn emit(&self, human: impl fmt::Display, value: serde_json::Value) -> anyhow::Result<()> {
        let mut out = std::io::stdout().lock();
        if self.json {
            writeln!(out, "{}", serde_json::to_string(&value)?)?;
        } else {
            writeln!(out, "{human}")?;
        }
        Ok(())
    }
}

fn pick(flag: Option<PathBuf>, cfg: &Option<PathBuf>, name: &str) -> anyhow::Result<PathBuf> {
    flag.or_else(|| cfg.clone())
        .ok_or_else(|| usage(format!("missing --{name} (not set in config either)")))
}

fn create_file(path: &Path) -> anyhow::Result<BufWriter<fs::File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn create_dir(path: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut w = create_file(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn select(ctx: &Ctx, a: SelectArgs) -> anyhow::Result<()> {
    let path = pick(a.catalog, &ctx.cfg.catalog, "catalog")?;
    let file = fs::File::open(&path).with_context(|| format!("opening {}", path.display()))?;
    let records = read_catalog(BufReader::new(file))?;
    let policy = &ctx.cfg.policy;
    let mut filtered = filter_catalog(&records, policy);
    annotate_altitude(&mut filtered, policy, ctx.exec)?;
    let selected = select_scenes(&filtered, policy)?;
    let mut w = create_file(&a.out)?;
    write_catalog(&selected, &mut w)?;
    w.flush()?;
    if let Some(dir) = &a.summary_dir {
        create_dir(dir)?;
        let mut all = records.clone();
        annotate_altitude(&mut all, policy, ctx.exec)?;
        let mut w = create_file(&dir.join("altitude_by_month.csv"))?;
        write_csv_rows(&altitude_by_month(&all), &mut w)?;
        w.flush()?;
        let mut w = create_file(&dir.join("cloud_histogram.csv"))?;
        write_csv_rows(&cloud_histogram(&all, 10.0), &mut w)?;
        w.flush()?;
    }
    let ids: Vec<&str> = selected.iter().map(|r| r.scene_id.as_str()).collect();
    ctx.emit(
        format_args!(
            "{} records, {} pass the filter, {} selected",
            records.len(),
            filtered.len(),
            selected.len()
        ),
        json!({"records": records.len(), "filtered": filtered.len(), "selected": ids}),
    )
}

fn dataset_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> anyhow::Result<PathBuf> {
    flag.or_else(|| cfg.out_dir.as_ref().map(|d| d.join("dataset")))
        .ok_or_else(|| usage("missing --out (no out_dir in config either)"))
}

fn build(ctx: &Ctx, a: BuildArgs) -> anyhow::Result<()> {
    let file = fs::File::open(&a.selected).with_context(|| format!("opening {}", a.selected.display()))?;
    let records = read_catalog(BufReader::new(file))?;
    let source = DirSource {
        scene_dir: pick(a.scene_dir, &ctx.cfg.scene_dir, "scene-dir")?,
        mask_dir: pick(a.mask_dir, &ctx.cfg.mask_dir, "mask-dir")?,
    };
    let out = dataset_dir(a.out, &ctx.cfg)?;
    create_dir(&out)?;
    let mut params = ctx.cfg.crop;
    if let Some(n) = a.train_per_scene {
        params.train_per_scene = n;
    }
    let opts = BuildOptions {
        params,
        coastal_types: ctx.cfg.coastal_types.clone(),
        rng_seed: ctx.cfg.seed,
        out_dir: Some(&out),
        exec: ctx.exec,
    };
    let manifest = build_dataset(&records, &source, &opts)?;
    manifest.save(&out.join(MANIFEST_FILE))?;
    let (tests, trains) = (manifest.tests().count(), manifest.trains().count());
    ctx.emit(
        format_args!("{tests} test crops, {trains} training crops in {}", out.display()),
        json!({"test_crops": tests, "train_crops": trains, "seed": manifest.rng_seed}),
    )
}

fn load_manifest(dir: &Path) -> anyhow::Result<DatasetManifest> {
    Ok(DatasetManifest::load(&dir.join(MANIFEST_FILE))?)
}

/// Test crops of a dataset as (crop name, scene, truth, strata).
fn load_tests(dir: &Path, exec: Exec) -> anyhow::Result<Vec<(TestImage, Strata)>> {
    let manifest = load_manifest(dir)?;
    let tests: Vec<_> = manifest.tests().cloned().collect();
    if tests.is_empty() {
        bail!("dataset {} has no test crops", dir.display());
    }
    Ok(exec.try_map(&tests, |e| {
        let (scene, truth) = load_crop(dir, e)?;
        Ok::<_, coastseg_core::Error>((
            TestImage {
                id: e.name(),
                scene,
                truth,
            },
            Strata::from_entry(e),
        ))
    })?)
}

/// Runs `predictor` in one of the three target modes.
fn run_predictor(ctx: &Ctx, t: PredictArgs, name: &str, predictor: &dyn Predictor) -> anyhow::Result<()> {
    if let Some(input) = t.input {
        let output = t.output.expect("clap enforces --output");
        let scene = read_raster(&input)?;
        write_mask(&predictor.predict(&scene)?, &output)?;
        return ctx.emit(
            format_args!("{name} mask written to {}", output.display()),
            json!({"method": name, "images": 1}),
        );
    }
    let out = t.out.ok_or_else(|| usage("dataset and suite modes need --out"))?;
    create_dir(&out)?;
    let jobs: Vec<(String, RasterScene)> = if let Some(suite) = &t.suite {
        let manifest = read_suite_manifest(suite)?;
        let mut jobs = Vec::new();
        for img in &manifest.images {
            for (variant, stem) in &img.inputs {
                jobs.push((img.expected_predictions[variant].clone(), read_suite_input(suite, stem)?));
            }
        }
        jobs
    } else if let Some(dataset) = &t.dataset {
        load_tests(dataset, ctx.exec)?
            .into_iter()
            .map(|(img, _)| (img.id, img.scene))
            .collect()
    } else {
        return Err(usage("give one of --input, --dataset or --suite"));
    };
    ctx.exec.try_map(&jobs, |(stem, scene)| {
        write_mask(&predictor.predict(scene)?, &out.join(stem))
    })?;
    ctx.emit(
        format_args!("{} {name} masks written to {}", jobs.len(), out.display()),
        json!({"method": name, "images": jobs.len()}),
    )
}

struct Ndwi {
    threshold: f64,
}

impl Predictor for Ndwi {
    fn predict(&self, scene: &RasterScene) -> coastseg_core::Result<SegMask> {
        threshold_segment(&compute_ndwi_with(scene, Exec::Sequential)?, self.threshold)
    }
}

fn segment(ctx: &Ctx, a: PredictArgs) -> anyhow::Result<()> {
    let threshold = a.threshold.unwrap_or(ctx.cfg.ndwi_threshold);
    run_predictor(ctx, a, "ndwi", &Ndwi { threshold })
}

fn train(ctx: &Ctx, a: TrainArgs) -> anyhow::Result<()> {
    let manifest = load_manifest(&a.dataset)?;
    let trains: Vec<_> = manifest.trains().cloned().collect();
    if trains.is_empty() {
        bail!("dataset {} has no training crops", a.dataset.display());
    }
    let crops = ctx.exec.try_map(&trains, |e| load_crop(&a.dataset, e))?;
    let per_image = a.pixels_per_image.unwrap_or(ctx.cfg.pixels_per_image);
    let samples = sample_training_pixels_with(&crops, per_image, ctx.cfg.seed, ctx.exec)?;
    let mut params = ctx.cfg.gbdt;
    params.n_trees = a.n_trees.unwrap_or(params.n_trees);
    params.max_depth = a.max_depth.unwrap_or(params.max_depth);
    params.learning_rate = a.learning_rate.unwrap_or(params.learning_rate);
    let model = train_gbdt_with(&samples, &params, ctx.exec)?;
    model.save(&a.model)?;
    let final_loss = model.loss_history.last().copied();
    ctx.emit(
        format_args!(
            "{} trees on {} pixels, model written to {}",
            model.trees.len(),
            samples.len(),
            a.model.display()
        ),
        json!({"trees": model.trees.len(), "samples": samples.len(), "degenerate": model.degenerate, "final_loss": final_loss}),
    )
}

fn predict_gbdt(ctx: &Ctx, a: PredictGbdtArgs) -> anyhow::Result<()> {
    let model = GbdtModel::load(&a.model)?;
    let predictor = move |scene: &RasterScene| predict_gbdt_with(&model, scene, Exec::Sequential);
    run_predictor(ctx, a.target, "gbdt", &predictor)
}

fn evaluate(ctx: &Ctx, a: EvaluateArgs) -> anyhow::Result<()> {
    let mut params = ctx.cfg.eval;
    if let Some(r) = a.buffer_radius {
        params.buffer_radius = r;
    }
    if let Some(pred) = a.pred {
        let truth = a.truth.expect("clap enforces --truth");
        let row = evaluate_image_with(&read_mask(&pred)?, &read_mask(&truth)?, &params, ctx.exec)?;
        let name = pred.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let row = MetricRow { image_id: name, ..row };
        println!("{}", serde_json::to_string(&row)?);
        return Ok(());
    }
    let (Some(dataset), Some(pred_dir)) = (a.dataset, a.pred_dir) else {
        return Err(usage("give --pred/--truth or --dataset/--pred-dir"));
    };
    let tests = load_tests(&dataset, ctx.exec)?;
    let items = tests
        .into_iter()
        .map(|(img, strata)| {
            Ok(EvalItem {
                pred: read_mask(&pred_dir.join(&img.id))?,
                image_id: img.id,
                truth: img.truth,
                strata,
            })
        })
        .collect::<coastseg_core::Result<Vec<_>>>()?;
    let rows = evaluate_batch(&items, &params, ctx.exec)?;
    let out = a.out.ok_or_else(|| usage("dataset mode needs --out"))?;
    let mut w = create_file(&out)?;
    write_rows_csv(&rows, &mut w)?;
    w.flush()?;
    let report = aggregate_report(&rows)?;
    ctx.emit(
        format_args!(
            "{} images: accuracy {:.4}, f1 {:.4}, fom {:.4}",
            rows.len(),
            report.overall.accuracy,
            report.overall.f1,
            report.overall.fom
        ),
        serde_json::to_value(&report.overall)?,
    )
}

fn importance(ctx: &Ctx, a: ImportanceArgs) -> anyhow::Result<()> {
    let tests: Vec<TestImage> = load_tests(&a.dataset, ctx.exec)?.into_iter().map(|(t, _)| t).collect();
    let seed = ctx.cfg.seed;
    if let Some(dir) = &a.export {
        let manifest = export_permuted_suite_with(&tests, dir, seed, ctx.exec)?;
        let n = manifest.images.len();
        return ctx.emit(
            format_args!("{} images x 8 variants exported to {}", n, dir.display()),
            json!({"images": n, "bundles": n * 8}),
        );
    }
    let scores: Vec<BandImportance> = if let Some(pred_dir) = &a.score_external {
        score_external_predictions(pred_dir, &tests, seed)?
    } else {
        let repeats = a.repeats.unwrap_or(ctx.cfg.importance_repeats);
        match a.method {
            Method::Ndwi => band_importance_with(
                &Ndwi {
                    threshold: ctx.cfg.ndwi_threshold,
                },
                &tests,
                seed,
                repeats,
                ctx.exec,
            )?,
            Method::Gbdt => {
                let path = a.model.as_ref().ok_or_else(|| usage("--method gbdt needs --model"))?;
                band_importance_with(&GbdtModel::load(path)?, &tests, seed, repeats, ctx.exec)?
            }
        }
    };
    if let Some(out) = &a.out {
        let mut w = create_file(out)?;
        write_importance_csv(&scores, &mut w)?;
        w.flush()?;
    }
    let human = scores
        .iter()
        .map(|s| format!("{}: {:.2}", s.band, s.score))
        .collect::<Vec<_>>()
        .join(", ");
    ctx.emit(human, serde_json::to_value(&scores)?)
}

fn report(ctx: &Ctx, a: ReportArgs) -> anyhow::Result<()> {
    let mut methods = Vec::new();
    for spec in &a.rows {
        let (name, path) = spec
            .split_once('=')
            .ok_or_else(|| usage(format!("--rows expects METHOD=PATH, got {spec}")))?;
        let file = fs::File::open(path).with_context(|| format!("opening {path}"))?;
        let rows = read_rows_csv(BufReader::new(file))?;
        methods.push((name.to_string(), aggregate_report(&rows)?));
    }
    create_dir(&a.out)?;
    for (name, rep) in &methods {
        write_json(&a.out.join(format!("{name}_summary.json")), rep)?;
    }
    for (stem, text) in comparison_tables(&methods) {
        let path = a.out.join(format!("{stem}.csv"));
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    let overall: serde_json::Map<String, serde_json::Value> = methods
        .iter()
        .map(|(n, r)| Ok((n.clone(), serde_json::to_value(&r.overall)?)))
        .collect::<anyhow::Result<_>>()?;
    let human = methods
        .iter()
        .map(|(n, r)| format!("{n}: accuracy {:.4} over {} images", r.overall.accuracy, r.overall.n))
        .collect::<Vec<_>>()
        .join("\n");
    ctx.emit(human, serde_json::Value::Object(overall))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(|e| usage(format!("{e:#}")))?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    init_threads(cli.threads).map_err(usage)?;
    let ctx = Ctx {
        cfg,
        json: cli.json,
        exec: Exec::default(),
    };

    if let Some(dir) = &cli.make_fixtures {
        let set = write_fixture_set(dir, ctx.cfg.seed)?;
        ctx.emit(
            format_args!("fixtures for {} scenes written to {}", set.scene_ids.len(), dir.display()),
            serde_json::to_value(&set)?,
        )?;
        if cli.command.is_none() {
            return Ok(());
        }
    }
    match cli.command {
        Some(Command::SelectScenes(a)) => select(&ctx, a),
        Some(Command::BuildDataset(a)) => build(&ctx, a),
        Some(Command::Segment(a)) => segment(&ctx, a),
        Some(Command::TrainGbdt(a)) => train(&ctx, a),
        Some(Command::PredictGbdt(a)) => predict_gbdt(&ctx, a),
        Some(Command::Evaluate(a)) => evaluate(&ctx, a),
        Some(Command::PermImportance(a)) => importance(&ctx, a),
        Some(Command::Report(a)) => report(&ctx, a),
        None => Err(usage("no subcommand given; see --help")),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let is_usage = e.downcast_ref::<UsageError>().is_some();
            let line = json!({
                "error": format!("{e:#}"),
                "kind": if is_usage { "usage" } else { "runtime" },
            });
            eprintln!("{line}");
            log::debug!("{e:?}");
            ExitCode::from(if is_usage { 2 } else { 1 })
        }
    }
}
