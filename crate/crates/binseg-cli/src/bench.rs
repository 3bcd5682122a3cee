//! Seeded benchmark harness: binary vs distance clustering across noise
//! levels and seeds, plus parameter sweeps over r_d, theta_d and K.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use binseg::cloud::gt_instances;
use binseg::eval::{average_precision, standard_overlaps};
use binseg::io::config::{load_suite_config, NoiseLevel, SuiteConfig};
use binseg::pipeline::{segment, ClusteringMode, PipelineConfig, StageTimings};
use binseg::synth::{apply_noise, generate_scene, SceneConfig};

#[derive(Args)]
pub struct BenchArgs {
    /// Suite configuration, TOML.
    #[arg(long)]
    suite: PathBuf,
    /// Output report (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Optional SVG chart of the sweep curves.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
struct ModeRow {
    mode: ClusteringMode,
    noise: String,
    seed: u64,
    map: f64,
    ap_50: f64,
    ap_25: f64,
    coverage: f64,
    n_proposals: usize,
    n_gt_instances: usize,
    timings_ms: StageTimings,
}

#[derive(Debug, Clone, Serialize)]
struct SweepRow {
    param: String,
    value: f64,
    seed: u64,
    map: f64,
}

#[derive(Debug, Clone, Serialize)]
struct SweepSummary {
    param: String,
    value: f64,
    map_mean: f64,
}

fn scene_for(base: &SceneConfig, noise: &NoiseLevel, seed: u64) -> Result<binseg::synth::SyntheticScene> {
    let mut scene = generate_scene(&SceneConfig { seed, ..base.clone() })?;
    // Every (noise level, scene seed) pair gets its own noise stream.
    let mut noise_model = noise.noise.clone();
    noise_model.seed ^= seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    apply_noise(&mut scene.cloud, &scene.catalog, &noise_model)?;
    Ok(scene)
}

fn run_once(
    suite: &SuiteConfig,
    noise: &NoiseLevel,
    seed: u64,
    config: &PipelineConfig,
) -> Result<(f64, f64, f64, f64, usize, usize, StageTimings)> {
    let scene = scene_for(&suite.scene, noise, seed)?;
    let output = segment(&scene.cloud, &scene.catalog, config)?;
    let gt = gt_instances(&scene.cloud)?;
    let report = average_precision(&output.proposals, &gt, &standard_overlaps());
    Ok((
        report.map,
        report.ap_50,
        report.ap_25,
        output.metadata.counts.foreground_coverage,
        output.proposals.len(),
        gt.len(),
        output.metadata.timings,
    ))
}

pub fn bench(args: BenchArgs) -> Result<()> {
    let suite = load_suite_config(&args.suite)
        .with_context(|| format!("reading {}", args.suite.display()))?;

    // One row per (mode, noise level, seed), scenes running concurrently.
    let mut jobs: Vec<(ClusteringMode, &NoiseLevel, u64)> = Vec::new();
    for &mode in &suite.modes {
        for noise in &suite.noise_levels {
            for &seed in &suite.seeds {
                jobs.push((mode, noise, seed));
            }
        }
    }
    let mut rows: Vec<ModeRow> = jobs
        .par_iter()
        .map(|&(mode, noise, seed)| {
            let config = PipelineConfig { clustering: mode, ..suite.pipeline.clone() };
            let (map, ap_50, ap_25, coverage, n_proposals, n_gt, timings) =
                run_once(&suite, noise, seed, &config)?;
            Ok(ModeRow {
                mode,
                noise: noise.name.clone(),
                seed,
                map,
                ap_50,
                ap_25,
                coverage,
                n_proposals,
                n_gt_instances: n_gt,
                timings_ms: timings,
            })
        })
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| {
        format!("{:?}", a.mode)
            .cmp(&format!("{:?}", b.mode))
            .then(a.noise.cmp(&b.noise))
            .then(a.seed.cmp(&b.seed))
    });

    // Sweeps run in binary mode against the first noise level.
    let sweep_noise = suite.noise_levels.first().cloned();
    let mut sweep_rows: Vec<SweepRow> = Vec::new();
    if let Some(noise) = &sweep_noise {
        let mut sweep_jobs: Vec<(String, f64, PipelineConfig)> = Vec::new();
        for &r_d in &suite.sweep.r_d {
            sweep_jobs.push((
                "r_d".into(),
                r_d,
                PipelineConfig { r_d, link_radius: None, ..suite.pipeline.clone() },
            ));
        }
        for &theta_d in &suite.sweep.theta_d {
            sweep_jobs.push((
                "theta_d".into(),
                theta_d as f64,
                PipelineConfig { theta_d, min_proposal_points: None, ..suite.pipeline.clone() },
            ));
        }
        for &k in &suite.sweep.k_secondaries {
            sweep_jobs.push((
                "k_secondaries".into(),
                k as f64,
                PipelineConfig { k_secondaries: k, ..suite.pipeline.clone() },
            ));
        }
        let suite_ref = &suite;
        sweep_rows = sweep_jobs
            .par_iter()
            .flat_map(|(param, value, config)| {
                suite_ref
                    .seeds
                    .par_iter()
                    .map(move |&seed| {
                        let (map, ..) = run_once(suite_ref, noise, seed, config)?;
                        Ok(SweepRow { param: param.clone(), value: *value, seed, map })
                    })
                    .collect::<Vec<Result<SweepRow>>>()
            })
            .collect::<Result<_>>()?;
        sweep_rows.sort_by(|a, b| {
            a.param
                .cmp(&b.param)
                .then(a.value.total_cmp(&b.value))
                .then(a.seed.cmp(&b.seed))
        });
    }

    let mut summaries: Vec<SweepSummary> = Vec::new();
    {
        let mut keys: Vec<(String, f64)> =
            sweep_rows.iter().map(|r| (r.param.clone(), r.value)).collect();
        keys.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        keys.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);
        for (param, value) in keys {
            let maps: Vec<f64> = sweep_rows
                .iter()
                .filter(|r| r.param == param && r.value == value)
                .map(|r| r.map)
                .collect();
            summaries.push(SweepSummary {
                param,
                value,
                map_mean: maps.iter().sum::<f64>() / maps.len() as f64,
            });
        }
    }

    for row in &rows {
        println!(
            "{:<9} {:<12} seed {:<4} mAP {:.3}  AP_50 {:.3}  coverage {:.3}",
            format!("{:?}", row.mode).to_lowercase(),
            row.noise,
            row.seed,
            row.map,
            row.ap_50,
            row.coverage,
        );
    }
    for s in &summaries {
        println!("sweep {:<14} = {:<6} mean mAP {:.3}", s.param, s.value, s.map_mean);
    }

    let report = serde_json::json!({
        "schema_version": 1,
        "suite": suite,
        "rows": rows,
        "sweep_rows": sweep_rows,
        "sweep_summary": summaries,
    });
    binseg::io::atomic_write(&args.out, format!("{report:#}\n").as_bytes())?;

    if let Some(svg_path) = &args.svg {
        binseg::io::atomic_write(svg_path, sweep_svg(&summaries).as_bytes())?;
    }
    Ok(())
}

/// Minimal static chart: one polyline of mean mAP per sweep axis.
fn sweep_svg(summaries: &[SweepSummary]) -> String {
    let params: Vec<String> = {
        let mut p: Vec<String> = summaries.iter().map(|s| s.param.clone()).collect();
        p.sort();
        p.dedup();
        p
    };
    let (w, h, margin) = (640.0, 200.0, 40.0);
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{}\">\n",
        (h + 20.0) * params.len().max(1) as f64
    ));
    for (chart, param) in params.iter().enumerate() {
        let top = chart as f64 * (h + 20.0);
        let points: Vec<(f64, f64)> = summaries
            .iter()
            .filter(|s| &s.param == param)
            .map(|s| (s.value, s.map_mean))
            .collect();
        let (lo, hi) = points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(x, _)| {
                (lo.min(x), hi.max(x))
            });
        let span = (hi - lo).max(1e-9);
        let path: Vec<String> = points
            .iter()
            .map(|&(x, y)| {
                let px = margin + (x - lo) / span * (w - 2.0 * margin);
                let py = top + h - margin - y * (h - 2.0 * margin);
                format!("{px:.1},{py:.1}")
            })
            .collect();
        out.push_str(&format!(
            "<text x=\"{margin}\" y=\"{}\" font-size=\"12\">mean mAP vs {param}</text>\n",
            top + 16.0
        ));
        out.push_str(&format!(
            "<rect x=\"{margin}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#999\"/>\n",
            top + margin,
            w - 2.0 * margin,
            h - 2.0 * margin
        ));
        if !path.is_empty() {
            out.push_str(&format!(
                "<polyline fill=\"none\" stroke=\"#2266cc\" stroke-width=\"2\" points=\"{}\"/>\n",
                path.join(" ")
            ));
        }
        for &(x, y) in &points {
            let px = margin + (x - lo) / span * (w - 2.0 * margin);
            let py = top + h - margin - y * (h - 2.0 * margin);
            out.push_str(&format!("<circle cx=\"{px:.1}\" cy=\"{py:.1}\" r=\"3\" fill=\"#2266cc\"/>\n"));
            out.push_str(&format!(
                "<text x=\"{px:.1}\" y=\"{:.1}\" font-size=\"9\" text-anchor=\"middle\">{x}</text>\n",
                top + h - margin + 12.0
            ));
        }
    }
    out.push_str("</svg>\n");
    out
}
