//! End-to-end segmentation: background removal, offset shift, density
//! binarization, HP grouping, LP voting, local scenes, an optional refiner
//! hook, scoring and NMS.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cloud::{ClassCatalog, InstanceProposal, LabeledCloud, Point3};
use crate::clustering::{distance_cluster, group_hps, PreliminaryAssignment};
use crate::density::{binarize, point_densities};
use crate::eval::foreground_coverage;
use crate::local_scene::{build_local_scenes, LocalScene};
use crate::scoring::{nms, score_proposals, ScoreParams, Scorer};
use crate::voting::{assign_lps, FullAssignment};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ClusteringMode {
    #[default]
    Binary,
    Distance,
}

impl std::str::FromStr for ClusteringMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(ClusteringMode::Binary),
            "distance" => Ok(ClusteringMode::Distance),
            other => Err(Error::InvalidConfig(format!("unknown clustering mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Density ball radius in meters.
    pub r_d: f64,
    /// Density threshold separating HPs from LPs.
    pub theta_d: u32,
    /// Linking radius for grouping; defaults to `r_d`.
    pub link_radius: Option<f64>,
    /// Secondary instances per local scene.
    pub k_secondaries: usize,
    /// IoU threshold for greedy NMS.
    pub nms_iou: f64,
    /// Proposals smaller than this are dropped before scoring; defaults to
    /// `theta_d`.
    pub min_proposal_points: Option<usize>,
    pub scorer: Scorer,
    pub clustering: ClusteringMode,
    /// Whether LPs are voted into instances (binary mode).
    pub voting: bool,
    /// Component size cutoff for the distance-clustering baseline.
    pub distance_min_points: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            r_d: 0.04,
            theta_d: 30,
            link_radius: None,
            k_secondaries: 7,
            nms_iou: 0.3,
            min_proposal_points: None,
            scorer: Scorer::default(),
            clustering: ClusteringMode::default(),
            voting: true,
            distance_min_points: 50,
        }
    }
}

impl PipelineConfig {
    pub fn link_radius(&self) -> f64 {
        self.link_radius.unwrap_or(self.r_d)
    }

    pub fn min_proposal_points(&self) -> usize {
        self.min_proposal_points.unwrap_or(self.theta_d as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_d > 0.0) {
            return Err(Error::InvalidConfig(format!("r_d must be positive, got {}", self.r_d)));
        }
        if !(self.link_radius() > 0.0) {
            return Err(Error::InvalidConfig("link_radius must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.nms_iou) {
            return Err(Error::InvalidConfig(format!(
                "nms_iou {} outside [0,1]",
                self.nms_iou
            )));
        }
        if self.distance_min_points == 0 {
            return Err(Error::InvalidConfig("distance_min_points must be at least 1".into()));
        }
        Ok(())
    }
}

/// Wall time per stage in milliseconds. Isolated from the rest of the run
/// record so deterministic comparisons can skip it.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub prepare_ms: f64,
    pub group_hps_ms: f64,
    pub vote_lps_ms: f64,
    pub local_scene_ms: f64,
    pub post_process_ms: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunCounts {
    pub n_points: usize,
    pub n_foreground: usize,
    pub n_hp: usize,
    pub n_lp: usize,
    /// Points dropped by the distance-clustering size filter.
    pub n_ignored: usize,
    /// Preliminary instances before size filtering.
    pub n_instances: usize,
    pub n_proposals_pre_nms: usize,
    pub n_proposals: usize,
    /// Fraction of foreground points inside some final proposal.
    pub foreground_coverage: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunMetadata {
    pub counts: RunCounts,
    pub timings: StageTimings,
}

#[derive(Debug, Clone)]
pub struct SegmentOutput {
    /// Final proposals in NMS keep order (descending score).
    pub proposals: Vec<InstanceProposal>,
    /// One local scene per preliminary instance; `primary`/`secondaries`
    /// index the preliminary instance list, not `proposals`.
    pub scenes: Vec<LocalScene>,
    pub metadata: RunMetadata,
}

/// Replacement point set for a scene's primary instance. Must stay within
/// the scene's points; an empty result drops the proposal.
pub type Refiner = dyn Fn(&LocalScene, &LabeledCloud) -> Vec<usize> + Sync;

/// Cloud indices of points whose predicted class is not background.
pub fn foreground_indices(cloud: &LabeledCloud, catalog: &ClassCatalog) -> Vec<usize> {
    (0..cloud.len())
        .filter(|&i| !catalog.is_background(cloud.semantic[i]))
        .collect()
}

pub fn segment(
    cloud: &LabeledCloud,
    catalog: &ClassCatalog,
    config: &PipelineConfig,
) -> Result<SegmentOutput> {
    segment_with_refiner(cloud, catalog, config, None)
}

pub fn segment_with_refiner(
    cloud: &LabeledCloud,
    catalog: &ClassCatalog,
    config: &PipelineConfig,
    refiner: Option<&Refiner>,
) -> Result<SegmentOutput> {
    config.validate()?;
    catalog.validate()?;
    cloud.validate(catalog.len())?;

    let mut timings = StageTimings::default();
    let mut counts = RunCounts { n_points: cloud.len(), ..RunCounts::default() };

    let t = Instant::now();
    let foreground = foreground_indices(cloud, catalog);
    counts.n_foreground = foreground.len();
    if foreground.is_empty() {
        return Ok(SegmentOutput {
            proposals: Vec::new(),
            scenes: Vec::new(),
            metadata: RunMetadata { counts, timings },
        });
    }
    let shifted_all = crate::cloud::apply_offsets(cloud)?;
    let shifted_fg: Vec<Point3> = foreground.iter().map(|&i| shifted_all[i]).collect();
    let original_fg: Vec<Point3> = foreground.iter().map(|&i| cloud.points[i]).collect();
    let labels_fg: Vec<u32> = foreground.iter().map(|&i| cloud.semantic[i]).collect();

    let densities = point_densities(&shifted_fg, config.r_d)?;
    let split = binarize(&densities, config.theta_d);
    counts.n_hp = split.hp_count();
    counts.n_lp = split.lp_count();
    timings.prepare_ms = t.elapsed().as_secs_f64() * 1e3;

    let t = Instant::now();
    let preliminary: PreliminaryAssignment = match config.clustering {
        ClusteringMode::Binary => {
            group_hps(&shifted_fg, &split.hp, &labels_fg, config.link_radius())?
        }
        ClusteringMode::Distance => distance_cluster(
            &shifted_fg,
            &labels_fg,
            config.link_radius(),
            config.distance_min_points,
        )?,
    };
    counts.n_ignored = preliminary.ignored.len();
    counts.n_instances = preliminary.n_instances();
    timings.group_hps_ms = t.elapsed().as_secs_f64() * 1e3;

    let t = Instant::now();
    let assignment: FullAssignment =
        if config.clustering == ClusteringMode::Binary && config.voting {
            let lp_mask: Vec<bool> = split.hp.iter().map(|&h| !h).collect();
            assign_lps(&original_fg, &preliminary, &lp_mask, &labels_fg, catalog)?
        } else {
            FullAssignment {
                instance: preliminary.instance.clone(),
                instance_class: preliminary.instance_class.clone(),
            }
        };
    timings.vote_lps_ms = t.elapsed().as_secs_f64() * 1e3;

    let mut proposals: Vec<InstanceProposal> = assignment
        .members()
        .into_iter()
        .zip(assignment.instance_class.iter())
        .filter(|(members, _)| !members.is_empty())
        .map(|(members, &class)| {
            let cloud_indices: Vec<usize> = members.into_iter().map(|i| foreground[i]).collect();
            InstanceProposal::from_members(cloud_indices, class, &cloud.points)
        })
        .collect::<Result<_>>()?;

    let t = Instant::now();
    let scenes = build_local_scenes(&proposals, cloud, config.k_secondaries)?;
    if let Some(refine) = refiner {
        for scene in &scenes {
            let refined = refine(scene, cloud);
            let allowed: std::collections::HashSet<usize> =
                scene.point_indices.iter().copied().collect();
            if let Some(&bad) = refined.iter().find(|p| !allowed.contains(p)) {
                return Err(Error::RefinerOutOfScene { point: bad });
            }
            if refined.is_empty() {
                proposals[scene.primary].point_indices.clear();
            } else {
                proposals[scene.primary] = InstanceProposal::from_members(
                    refined,
                    proposals[scene.primary].class_id,
                    &cloud.points,
                )?;
            }
        }
    }
    timings.local_scene_ms = t.elapsed().as_secs_f64() * 1e3;

    let t = Instant::now();
    let min_points = config.min_proposal_points();
    let mut filtered: Vec<InstanceProposal> = proposals
        .into_iter()
        .filter(|p| p.len() >= min_points.max(1))
        .collect();
    counts.n_proposals_pre_nms = filtered.len();

    let mut density_by_point = vec![0u32; cloud.len()];
    for (local, &i) in foreground.iter().enumerate() {
        density_by_point[i] = densities.counts[local];
    }
    let params = ScoreParams {
        theta_d: config.theta_d,
        r_d: config.r_d,
        densities: Some(density_by_point),
    };
    let scores = score_proposals(&filtered, cloud, config.scorer, &params)?;
    for (p, &s) in filtered.iter_mut().zip(scores.iter()) {
        p.score = s;
    }
    let kept = nms(&filtered, &scores, config.nms_iou)?;
    let final_proposals: Vec<InstanceProposal> =
        kept.into_iter().map(|id| filtered[id].clone()).collect();
    counts.n_proposals = final_proposals.len();
    counts.foreground_coverage = foreground_coverage(&final_proposals, &foreground);
    timings.post_process_ms = t.elapsed().as_secs_f64() * 1e3;

    Ok(SegmentOutput {
        proposals: final_proposals,
        scenes,
        metadata: RunMetadata { counts, timings },
    })
}
