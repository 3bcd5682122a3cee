//! The synth, segment, eval and ablate subcommands.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;

use binseg::cloud::gt_instances;
use binseg::eval::{average_precision, diagnostics, standard_overlaps, EvalReport};
use binseg::io::cloud_file::{load_cloud, save_cloud, CloudFile};
use binseg::io::config::{load_pipeline_config, load_synth_config};
use binseg::io::ply::{save_ply, PlyFile};
use binseg::io::results::{CloudRef, ResultsFile};
use binseg::io::Provenance;
use binseg::pipeline::{segment as run_pipeline, ClusteringMode, PipelineConfig};
use binseg::scoring::Scorer;
use binseg::synth::{apply_noise, generate_scene, GENERATOR_NAME};

#[derive(Args)]
pub struct SynthArgs {
    /// Scene (and optional noise) configuration, TOML.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the scene seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output cloud file.
    #[arg(long)]
    out: PathBuf,
    /// Also export an ASCII PLY copy.
    #[arg(long)]
    ply: Option<PathBuf>,
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => load_synth_config(path).with_context(|| format!("reading {}", path.display()))?,
        None => Default::default(),
    };
    if let Some(seed) = args.seed {
        config.scene.seed = seed;
    }
    let mut scene = generate_scene(&config.scene)?;
    if let Some(noise) = &config.noise {
        apply_noise(&mut scene.cloud, &scene.catalog, noise)?;
    }
    let file = CloudFile {
        cloud: scene.cloud,
        catalog: scene.catalog,
        provenance: Provenance { generator: GENERATOR_NAME.into(), seed: config.scene.seed },
    };
    save_cloud(&args.out, &file)?;
    if let Some(ply_path) = &args.ply {
        save_ply(
            ply_path,
            &PlyFile {
                cloud: file.cloud.clone(),
                catalog: Some(file.catalog.clone()),
                provenance: Some(file.provenance.clone()),
            },
        )?;
    }
    println!("wrote {} points to {}", file.cloud.len(), args.out.display());
    Ok(())
}

/// Per-field overrides for the pipeline config; flags win over the file.
#[derive(Args, Clone)]
pub struct PipelineOverrides {
    #[arg(long)]
    r_d: Option<f64>,
    #[arg(long)]
    theta_d: Option<u32>,
    #[arg(long)]
    link_radius: Option<f64>,
    #[arg(long)]
    k_secondaries: Option<usize>,
    #[arg(long)]
    nms_iou: Option<f64>,
    #[arg(long)]
    min_proposal_points: Option<usize>,
    #[arg(long)]
    scorer: Option<Scorer>,
    #[arg(long)]
    clustering: Option<ClusteringMode>,
    #[arg(long)]
    voting: Option<bool>,
    #[arg(long)]
    distance_min_points: Option<usize>,
}

impl PipelineOverrides {
    fn apply(&self, mut config: PipelineConfig) -> PipelineConfig {
        if let Some(v) = self.r_d {
            config.r_d = v;
        }
        if let Some(v) = self.theta_d {
            config.theta_d = v;
        }
        if let Some(v) = self.link_radius {
            config.link_radius = Some(v);
        }
        if let Some(v) = self.k_secondaries {
            config.k_secondaries = v;
        }
        if let Some(v) = self.nms_iou {
            config.nms_iou = v;
        }
        if let Some(v) = self.min_proposal_points {
            config.min_proposal_points = Some(v);
        }
        if let Some(v) = self.scorer {
            config.scorer = v;
        }
        if let Some(v) = self.clustering {
            config.clustering = v;
        }
        if let Some(v) = self.voting {
            config.voting = v;
        }
        if let Some(v) = self.distance_min_points {
            config.distance_min_points = v;
        }
        config
    }
}

/// Loads the pipeline config from `--config`, the `BINSEG_CONFIG`
/// environment variable, or defaults.
pub fn resolve_pipeline_config(path: Option<&Path>) -> Result<PipelineConfig> {
    if let Some(path) = path {
        return load_pipeline_config(path)
            .with_context(|| format!("reading {}", path.display()));
    }
    if let Ok(env_path) = std::env::var(crate::CONFIG_ENV) {
        return load_pipeline_config(Path::new(&env_path))
            .with_context(|| format!("reading {env_path} from ${}", crate::CONFIG_ENV));
    }
    Ok(PipelineConfig::default())
}

#[derive(Args)]
pub struct SegmentArgs {
    /// Input cloud file.
    #[arg(long)]
    cloud: PathBuf,
    /// Pipeline configuration, TOML.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output results file (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Embed local-scene records in the results.
    #[arg(long)]
    export_scenes: bool,
    #[command(flatten)]
    overrides: PipelineOverrides,
}

pub fn segment(args: SegmentArgs) -> Result<()> {
    let file = load_cloud(&args.cloud).with_context(|| format!("reading {}", args.cloud.display()))?;
    let config = args.overrides.apply(resolve_pipeline_config(args.config.as_deref())?);
    let output = run_pipeline(&file.cloud, &file.catalog, &config)?;
    let results = ResultsFile::from_output(
        &config,
        &output,
        &file.catalog,
        CloudRef {
            path: Some(args.cloud.display().to_string()),
            n_points: file.cloud.len(),
        },
        Some(file.provenance.clone()),
        args.export_scenes,
    );
    results.save(&args.out)?;
    println!(
        "{} proposals from {} points ({} HPs, {} LPs), coverage {:.3}",
        output.proposals.len(),
        file.cloud.len(),
        output.metadata.counts.n_hp,
        output.metadata.counts.n_lp,
        output.metadata.counts.foreground_coverage,
    );
    Ok(())
}

#[derive(Args)]
pub struct EvalArgs {
    /// Results file produced by `segment`.
    #[arg(long)]
    results: PathBuf,
    /// The cloud the results refer to; must carry ground truth.
    #[arg(long)]
    cloud: PathBuf,
    /// Where to write the updated results (default: in place).
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let mut results = ResultsFile::load(&args.results)
        .with_context(|| format!("reading {}", args.results.display()))?;
    let file = load_cloud(&args.cloud).with_context(|| format!("reading {}", args.cloud.display()))?;
    if file.cloud.len() != results.cloud.n_points {
        bail!(
            "results refer to a cloud of {} points, got {}",
            results.cloud.n_points,
            file.cloud.len()
        );
    }
    let report = evaluate_output(&file, &results.proposals()?)?;
    print_report(&report);
    results.eval = Some(report);
    results.save(args.out.as_deref().unwrap_or(&args.results))?;
    Ok(())
}

pub fn evaluate_output(
    file: &CloudFile,
    proposals: &[binseg::cloud::InstanceProposal],
) -> Result<EvalReport> {
    let gt = gt_instances(&file.cloud).context("cloud has no ground truth to evaluate against")?;
    let mut report = average_precision(proposals, &gt, &standard_overlaps());
    report.diagnostics = diagnostics(&file.cloud, proposals).ok();
    Ok(report)
}

fn print_report(report: &EvalReport) {
    println!("mAP   {:.3}", report.map);
    println!("AP_50 {:.3}", report.ap_50);
    println!("AP_25 {:.3}", report.ap_25);
    if let Some(d) = &report.diagnostics {
        println!(
            "offset distance {:.4}  direction {:.3}  mean dice {:.3}",
            d.offset_distance, d.offset_direction, d.mean_dice
        );
    }
}

#[derive(Args)]
pub struct AblateArgs {
    /// Stage to toggle: voting, local-scene, or clustering.
    #[arg(long)]
    stage: String,
    #[arg(long)]
    cloud: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output comparison report (JSON).
    #[arg(long)]
    out: PathBuf,
}

pub fn ablate(args: AblateArgs) -> Result<()> {
    let file = load_cloud(&args.cloud).with_context(|| format!("reading {}", args.cloud.display()))?;
    let base = resolve_pipeline_config(args.config.as_deref())?;
    let (with, without, note) = match args.stage.as_str() {
        "voting" => (
            PipelineConfig { voting: true, ..base.clone() },
            PipelineConfig { voting: false, ..base.clone() },
            "without: LPs are left unassigned",
        ),
        "local-scene" => (
            base.clone(),
            PipelineConfig { k_secondaries: 0, ..base.clone() },
            "without: scenes hold only their primary instance; with the identity refiner the proposals are unchanged",
        ),
        "clustering" => (
            PipelineConfig { clustering: ClusteringMode::Binary, ..base.clone() },
            PipelineConfig { clustering: ClusteringMode::Distance, ..base.clone() },
            "without: the distance-clustering baseline replaces binary clustering",
        ),
        other => bail!("unknown stage '{other}' (expected voting, local-scene, or clustering)"),
    };

    let mut rows = Vec::new();
    for (variant, config) in [("with", with), ("without", without)] {
        let output = run_pipeline(&file.cloud, &file.catalog, &config)?;
        let eval = evaluate_output(&file, &output.proposals)?;
        println!(
            "{variant:<8} {}: mAP {:.3}  AP_50 {:.3}  AP_25 {:.3}  coverage {:.3}",
            args.stage,
            eval.map,
            eval.ap_50,
            eval.ap_25,
            output.metadata.counts.foreground_coverage,
        );
        rows.push(serde_json::json!({
            "variant": variant,
            "config": config,
            "eval": eval,
            "counts": output.metadata.counts,
            "timings_ms": output.metadata.timings,
        }));
    }
    let report = serde_json::json!({
        "schema_version": 1,
        "stage": args.stage,
        "note": note,
        "cloud": args.cloud.display().to_string(),
        "rows": rows,
    });
    binseg::io::atomic_write(&args.out, format!("{report:#}\n").as_bytes())?;
    Ok(())
}
