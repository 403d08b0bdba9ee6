//! `scmkit` command-line front end.
//!
//! Every subcommand reads and writes plain files (COCO JSON, crop-plan JSON,
//! `SCMH` heatmaps) so an external detector can be slotted in between the
//! steps. Data goes to files or stdout, diagnostics to stderr.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{coco_ap, format_table, EvalParams, EvalResult};
use crate::fusion::{fuse, FusionConfig};
use crate::geometry::{clip, BoundingBox, Detection};
use crate::heatmap::{load_heatmap, save_heatmap, splat, HeatmapConfig};
use crate::io::{
    load_config, load_dataset, load_plans, load_results, pretty, save_dataset, save_plans,
    save_results, write_text, Category, DatasetBundle, ImageInfo,
};
use crate::scm::{propose_detailed, ScmConfig};
use crate::simulate::{
    generate_scene, run_pipeline, simulate_detector, DetectorModel, PipelineRun, PipelineSettings,
    SceneSpec, View, SIM_CATEGORY, SIM_IMAGE_ID,
};

/// Everything a config file may set. All sections are optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub scene: SceneSpec,
    pub detector: DetectorModel,
    pub scm: ScmConfig,
    pub heatmap: HeatmapConfig,
    pub fusion: FusionConfig,
    pub eval: EvalParams,
}

impl PipelineConfig {
    pub fn settings(&self) -> PipelineSettings {
        PipelineSettings {
            scm: self.scm,
            heatmap: self.heatmap,
            fusion: self.fusion,
            eval: self.eval.clone(),
        }
    }
}

/// `W x H` pair such as `16x10` or `1024x640`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims(pub u32, pub u32);

impl FromStr for Dims {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (w, h) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("expected WxH, got '{s}'"))?;
        let parse = |v: &str| v.trim().parse::<u32>().map_err(|e| format!("'{v}': {e}"));
        Ok(Dims(parse(w)?, parse(h)?))
    }
}

#[derive(Debug, Parser)]
#[command(name = "scmkit", version, about = "Dense-region crop proposal, detection fusion and COCO evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Propose crop plans from a heatmap or from coarse detections.
    Propose(ProposeArgs),
    /// Merge coarse and per-crop detections into one results file.
    Fuse(FuseArgs),
    /// Score a results file against COCO annotations.
    Eval(EvalArgs),
    /// Generate a synthetic scene and its whole-image detections.
    Simulate(SimArgs),
    /// Run the coarse -> crops -> fine -> fuse loop on a synthetic scene.
    Pipeline(SimArgs),
}

/// Options shared by every subcommand that reads a config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML (or .json) config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Density grid, columns x rows [default: 16x10].
    #[arg(long, value_name = "GXxGY")]
    pub grid: Option<Dims>,
    /// Densest grid cells kept as candidates [default: 30].
    #[arg(long)]
    pub topk: Option<usize>,
    /// Crop budget per image [default: 2].
    #[arg(long)]
    pub crops: Option<usize>,
    /// Binarization threshold as a fraction of the heatmap maximum [default: 0.2].
    #[arg(long)]
    pub tau: Option<f64>,
    /// IoU above which fusion suppresses duplicates [default: 0.5].
    #[arg(long)]
    pub nms_iou: Option<f64>,
    /// Detector input size [default: 1024x640].
    #[arg(long, value_name = "WxH")]
    pub target: Option<Dims>,
    /// Seed for both scene generation and the pseudo-detector.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Overrides {
    pub fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg: PipelineConfig = match &self.config {
            Some(path) => load_config(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(Dims(gx, gy)) = self.grid {
            cfg.scm.grid_x = gx as usize;
            cfg.scm.grid_y = gy as usize;
        }
        if let Some(k) = self.topk {
            cfg.scm.top_k = k;
        }
        if let Some(k) = self.crops {
            cfg.scm.crop_budget = k;
        }
        if let Some(t) = self.tau {
            cfg.heatmap.binarize_threshold = t;
        }
        if let Some(t) = self.nms_iou {
            cfg.fusion.nms_iou = t;
        }
        if let Some(Dims(w, h)) = self.target {
            cfg.scm.target_w = w;
            cfg.scm.target_h = h;
        }
        if let Some(seed) = self.seed {
            cfg.scene.seed = seed;
            cfg.detector.seed = seed;
        }
        cfg.scm.validate()?;
        cfg.heatmap.validate()?;
        cfg.fusion.validate()?;
        cfg.eval.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct ProposeArgs {
    /// SCMH heatmap file.
    #[arg(long)]
    pub heatmap: Option<PathBuf>,
    /// COCO results JSON of coarse detections for a single image.
    #[arg(long)]
    pub detections: Option<PathBuf>,
    /// Original image size.
    #[arg(long, value_name = "WxH")]
    pub image: Dims,
    /// Crop-plan JSON output.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the heatmap built from `--detections`.
    #[arg(long)]
    pub save_heatmap: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// COCO results JSON of the whole-image pass.
    #[arg(long)]
    pub coarse: PathBuf,
    /// Crop-plan JSON produced by `propose`.
    #[arg(long)]
    pub plans: PathBuf,
    /// One results file per plan, in plan order, boxes in crop coordinates.
    #[arg(long = "crop-results", num_args = 0..)]
    pub crop_results: Vec<PathBuf>,
    #[arg(long, value_name = "WxH")]
    pub image: Dims,
    #[arg(long)]
    pub out: PathBuf,
    /// Edge margin in pixels for dropping truncated crop detections [default: 2].
    #[arg(long)]
    pub margin: Option<f64>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long)]
    pub annotations: PathBuf,
    /// Comma-separated IoU thresholds [default: 0.50:0.05:0.95].
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    /// Per image and category detection cap [default: none].
    #[arg(long)]
    pub max_dets: Option<usize>,
    /// Row label in the printed table.
    #[arg(long, default_value = "detector")]
    pub method: String,
    /// EvalResult JSON output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Directory receiving every intermediate artifact.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(stdout) => {
            print!("{stdout}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Usage(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

/// Executes a subcommand and returns what it prints on stdout.
pub fn run(command: &Command) -> Result<String> {
    match command {
        Command::Propose(a) => cmd_propose(a),
        Command::Fuse(a) => cmd_fuse(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Pipeline(a) => cmd_pipeline(a),
    }
}

pub fn cmd_propose(args: &ProposeArgs) -> Result<String> {
    let cfg = args.overrides.resolve()?;
    let Dims(iw, ih) = args.image;
    let heatmap = match (&args.heatmap, &args.detections) {
        (Some(path), None) => load_heatmap(path)?,
        (None, Some(path)) => {
            let dets = load_results(path)?;
            let image = BoundingBox::new(0.0, 0.0, iw as f64, ih as f64)?;
            if let Some(first) = dets.first() {
                if dets.iter().any(|d| d.image_id != first.image_id) {
                    return Err(Error::input(format!(
                        "{}: detections span several images",
                        path.display()
                    )));
                }
            }
            let inside: Vec<BoundingBox> =
                dets.iter().filter_map(|d| clip(&d.bbox, &image)).collect();
            let h = splat(&inside, iw, ih, &cfg.heatmap)?;
            if let Some(out) = &args.save_heatmap {
                save_heatmap(&h, out)?;
            }
            h
        }
        _ => {
            return Err(Error::Usage(
                "give exactly one of --heatmap or --detections".into(),
            ))
        }
    };
    let proposal = propose_detailed(&heatmap, &cfg.scm, cfg.heatmap.binarize_threshold, iw, ih)?;
    save_plans(&proposal.plans, &args.out)?;
    Ok(format!(
        "regions found: {}, crops emitted: {}\n",
        proposal.regions.len(),
        proposal.plans.len()
    ))
}

pub fn cmd_fuse(args: &FuseArgs) -> Result<String> {
    let cfg = args.overrides.resolve()?;
    let mut fusion = cfg.fusion;
    if let Some(m) = args.margin {
        fusion.boundary_margin = m;
    }
    let plans = load_plans(&args.plans)?;
    if plans.len() != args.crop_results.len() {
        return Err(Error::Usage(format!(
            "{} crop plans but {} --crop-results files",
            plans.len(),
            args.crop_results.len()
        )));
    }
    let coarse = load_results(&args.coarse)?;
    let fine = plans
        .into_iter()
        .zip(&args.crop_results)
        .map(|(p, path)| Ok((p, load_results(path)?)))
        .collect::<Result<Vec<_>>>()?;
    let Dims(iw, ih) = args.image;
    let fused = fuse(&coarse, &fine, &fusion, iw as f64, ih as f64)?;
    save_results(&fused, &args.out)?;
    let n_in = coarse.len() + fine.iter().map(|(_, d)| d.len()).sum::<usize>();
    Ok(format!("fused {n_in} detections into {}\n", fused.len()))
}

pub fn cmd_eval(args: &EvalArgs) -> Result<String> {
    let bundle = load_dataset(&args.annotations)?;
    let dets = load_results(&args.results)?;
    let mut params = EvalParams {
        max_dets: args.max_dets,
        ..EvalParams::default()
    };
    if let Some(t) = &args.thresholds {
        params.iou_thresholds = t.clone();
    }
    let result = coco_ap(&dets, &bundle.annotations, &bundle.vocabulary(), &params)?;
    if let Some(out) = &args.out {
        write_text(out, &pretty(&result))?;
    }
    Ok(format_table(&[(args.method.as_str(), &result)]))
}

fn scene_bundle(run_scene: &crate::simulate::Scene) -> Result<DatasetBundle> {
    DatasetBundle::new(
        vec![ImageInfo {
            id: SIM_IMAGE_ID,
            width: run_scene.image_w,
            height: run_scene.image_h,
            file_name: "synthetic.png".into(),
        }],
        run_scene.ground_truth.clone(),
        vec![Category {
            id: SIM_CATEGORY,
            name: "car".into(),
        }],
    )
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn cmd_simulate(args: &SimArgs) -> Result<String> {
    let cfg = args.overrides.resolve()?;
    let scene = generate_scene(&cfg.scene)?;
    let (iw, ih) = (scene.image_w as f64, scene.image_h as f64);
    let view = View {
        image_id: SIM_IMAGE_ID,
        scale: (cfg.scm.target_w as f64 / iw).min(cfg.scm.target_h as f64 / ih),
        bounds: BoundingBox::new(0.0, 0.0, iw, ih)?,
    };
    let coarse = simulate_detector(&scene.ground_truth, &cfg.detector, &view)?;
    if let Some(dir) = &args.out_dir {
        ensure_dir(dir)?;
        save_dataset(&scene_bundle(&scene)?, dir.join("scene.json"))?;
        save_results(&coarse, dir.join("coarse_results.json"))?;
    }
    Ok(format!(
        "{} vehicles, {} whole-image detections at scale {:.4}\n",
        scene.ground_truth.len(),
        coarse.len(),
        view.scale
    ))
}

fn without_timing(r: &EvalResult) -> EvalResult {
    EvalResult {
        per_image_seconds: None,
        ..r.clone()
    }
}

#[derive(Serialize)]
struct Report {
    coarse_only: EvalResult,
    fused: EvalResult,
    crops: usize,
    cluster_coverage: f64,
}

fn write_artifacts(run: &PipelineRun, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    save_dataset(&scene_bundle(&run.scene)?, dir.join("scene.json"))?;
    save_heatmap(&run.heatmap, dir.join("heatmap.scmh"))?;
    save_plans(&run.proposal.plans, dir.join("plans.json"))?;
    save_results(&run.coarse, dir.join("coarse_results.json"))?;
    for (k, (_, dets)) in run.fine.iter().enumerate() {
        save_results(dets, dir.join(format!("crop_{k}_results.json")))?;
    }
    let fused: Vec<Detection> = run.fused_detections();
    save_results(&fused, dir.join("fused_results.json"))?;

    let coarse = without_timing(&run.coarse_eval);
    let fused_eval = without_timing(&run.fused_eval);
    write_text(
        &dir.join("report.txt"),
        &format_table(&[("coarse only", &coarse), ("coarse + crops", &fused_eval)]),
    )?;
    let report = Report {
        coarse_only: coarse,
        fused: fused_eval,
        crops: run.proposal.plans.len(),
        cluster_coverage: run.cluster_coverage(),
    };
    write_text(&dir.join("report.json"), &pretty(&report))
}

pub fn cmd_pipeline(args: &SimArgs) -> Result<String> {
    let cfg = args.overrides.resolve()?;
    let run = run_pipeline(&cfg.scene, &cfg.detector, &cfg.settings())?;
    if let Some(dir) = &args.out_dir {
        write_artifacts(&run, dir)?;
    }
    Ok(format_table(&[
        ("coarse only", &run.coarse_eval),
        ("coarse + crops", &run.fused_eval),
    ]))
}
