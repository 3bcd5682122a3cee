//! JSON results document: config echo, per-instance records with
//! run-length-encoded masks, stage timings, and and evaluation report when
//! ground truth was available.
//!
//! Timings live in their own top-level field so byte comparisons of
//! otherwise deterministic runs can exclude them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cloud::{ClassCatalog, InstanceProposal, Point3};
use crate::eval::EvalReport;
use crate::io::Provenance;
use crate::pipeline::{PipelineConfig, RunCounts, SegmentOutput, StageTimings};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CloudRef {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub path: Option<String>,
    pub n_points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub class_id: u32,
    pub class_name: String,
    pub score: f64,
    pub n_points: usize,
    pub centroid: [f64; 3],
    /// `[start, len]` runs over sorted cloud point indices.
    pub mask_rle: Vec<[u64; 2]>,
}

/// Compact local-scene record: member instance ids plus the per-rank weight.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneRecord {
    pub primary: usize,
    pub secondaries: Vec<usize>,
    pub n_points: usize,
    /// Weight per member, primary first.
    pub member_weights: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultsFile {
    pub schema_version: u32,
    pub config: PipelineConfig,
    pub cloud: CloudRef,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub provenance: Option<Provenance>,
    pub instances: Vec<InstanceRecord>,
    pub counts: RunCounts,
    pub timings_ms: StageTimings,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub scenes: Option<Vec<SceneRecord>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eval: Option<EvalReport>,
}

/// Encodes sorted, duplicate-free indices as `[start, len]` runs.
pub fn rle_encode(indices: &[usize]) -> Vec<[u64; 2]> {
    let mut runs: Vec<[u64; 2]> = Vec::new();
    for &i in indices {
        match runs.last_mut() {
            Some(run) if run[0] + run[1] == i as u64 => run[1] += 1,
            _ => runs.push([i as u64, 1]),
        }
    }
    runs
}

/// Decodes runs back to indices, validating shape and the optional upper
/// bound.
pub fn rle_decode(runs: &[[u64; 2]], n_points: Option<usize>) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    let mut next_free = 0u64;
    for run in runs {
        let [start, len] = *run;
        if len == 0 {
            return Err(Error::Format("empty run in mask".into()));
        }
        if start < next_free {
            return Err(Error::Format("mask runs overlap or are unsorted".into()));
        }
        let end = start
            .checked_add(len)
            .ok_or_else(|| Error::Format("mask run overflows".into()))?;
        if let Some(n) = n_points {
            if end > n as u64 {
                return Err(Error::Format(format!(
                    "mask index {} exceeds cloud size {n}",
                    end - 1
                )));
            }
        }
        for i in start..end {
            out.push(i as usize);
        }
        next_free = end;
    }
    Ok(out)
}

impl ResultsFile {
    pub fn from_output(
        config: &PipelineConfig,
        output: &SegmentOutput,
        catalog: &ClassCatalog,
        cloud: CloudRef,
        provenance: Option<Provenance>,
        include_scenes: bool,
    ) -> ResultsFile {
        let instances = output
            .proposals
            .iter()
            .map(|p| InstanceRecord {
                class_id: p.class_id,
                class_name: catalog
                    .classes
                    .get(p.class_id as usize)
                    .map(|c| c.name.clone())
                    .unwrap_or_default(),
                score: p.score,
                n_points: p.len(),
                centroid: [p.centroid.x, p.centroid.y, p.centroid.z],
                mask_rle: rle_encode(&p.point_indices),
            })
            .collect();
        let scenes = include_scenes.then(|| {
            output
                .scenes
                .iter()
                .map(|s| {
                    let mut member_weights = vec![1.0];
                    let mut seen = 0u32;
                    for (&rank, &w) in s.member_rank.iter().zip(s.weights.iter()) {
                        if rank > seen {
                            member_weights.push(w);
                            seen = rank;
                        }
                    }
                    SceneRecord {
                        primary: s.primary,
                        secondaries: s.secondaries.clone(),
                        n_points: s.point_indices.len(),
                        member_weights,
                    }
                })
                .collect()
        });
        ResultsFile {
            schema_version: SCHEMA_VERSION,
            config: config.clone(),
            cloud,
            provenance,
            instances,
            counts: output.metadata.counts.clone(),
            timings_ms: output.metadata.timings.clone(),
            scenes,
            eval: None,
        }
    }

    /// Parses and validates a results document.
    pub fn from_slice(bytes: &[u8]) -> Result<ResultsFile> {
        let file: ResultsFile = serde_json::from_slice(bytes)?;
        file.validate()?;
        Ok(file)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "unsupported results schema {}",
                self.schema_version
            )));
        }
        for (i, inst) in self.instances.iter().enumerate() {
            let decoded = rle_decode(&inst.mask_rle, Some(self.cloud.n_points))?;
            if decoded.len() != inst.n_points {
                return Err(Error::Format(format!(
                    "instance {i}: mask holds {} points, record says {}",
                    decoded.len(),
                    inst.n_points
                )));
            }
            if !(0.0..=1.0).contains(&inst.score) {
                return Err(Error::Format(format!(
                    "instance {i}: score {} outside [0,1]",
                    inst.score
                )));
            }
        }
        Ok(())
    }

    /// Reconstructs proposals from the mask records.
    pub fn proposals(&self) -> Result<Vec<InstanceProposal>> {
        self.instances
            .iter()
            .map(|inst| {
                Ok(InstanceProposal {
                    point_indices: rle_decode(&inst.mask_rle, Some(self.cloud.n_points))?,
                    class_id: inst.class_id,
                    centroid: Point3::new(inst.centroid[0], inst.centroid[1], inst.centroid[2]),
                    score: inst.score,
                })
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::atomic_write(path, &self.to_json()?)
    }

    pub fn load(path: &Path) -> Result<ResultsFile> {
        Self::from_slice(&std::fs::read(path)?)
    }
}
