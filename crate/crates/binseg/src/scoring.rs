//! Proposal scoring strategies and greedy non-maximum suppression.
//!
//! The network scorer of the original pipeline is replaced by pluggable
//! strategies: a learning-free heuristic built from instance size and member
//! density, an oracle that scores by best overlap with ground truth (the
//! pipeline's upper bound), and a constant scorer.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cloud::{gt_instances, InstanceProposal, LabeledCloud};
use crate::density::point_densities;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scorer {
    #[default]
    Heuristic,
    Oracle,
    Constant,
}

impl FromStr for Scorer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heuristic" => Ok(Scorer::Heuristic),
            "oracle" => Ok(Scorer::Oracle),
            "constant" => Ok(Scorer::Constant),
            other => Err(Error::InvalidConfig(format!("unknown scorer '{other}'"))),
        }
    }
}

impl std::fmt::Display for Scorer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scorer::Heuristic => "heuristic",
            Scorer::Oracle => "oracle",
            Scorer::Constant => "constant",
        })
    }
}

/// Inputs the heuristic scorer needs beyond the proposals themselves.
#[derive(Debug, Clone, Default)]
pub struct ScoreParams {
    pub theta_d: u32,
    pub r_d: f64,
    /// Shifted-space density per cloud point, when the caller already
    /// computed it. Otherwise the heuristic falls back to a density field
    /// over the union of proposal members in shifted space.
    pub densities: Option<Vec<u32>>,
}

/// Intersection-over-union of two proposals' point-index sets.
pub fn pairwise_iou(a: &InstanceProposal, b: &InstanceProposal) -> f64 {
    let inter = sorted_intersection(&a.point_indices, &b.point_indices);
    let union = a.point_indices.len() + b.point_indices.len() - inter;
    if union == 0 {
        return 0.0;
    }
    inter as f64 / union as f64
}

pub(crate) fn sorted_intersection(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Scores every proposal in `[0,1]` with the chosen strategy.
pub fn score_proposals(
    proposals: &[InstanceProposal],
    cloud: &LabeledCloud,
    scorer: Scorer,
    params: &ScoreParams,
) -> Result<Vec<f64>> {
    match scorer {
        Scorer::Constant => Ok(vec![1.0; proposals.len()]),
        Scorer::Oracle => {
            let gt = gt_instances(cloud)?;
            Ok(proposals
                .iter()
                .map(|p| {
                    gt.iter()
                        .map(|g| pairwise_iou(p, g))
                        .fold(0.0, f64::max)
                })
                .collect())
        }
        Scorer::Heuristic => heuristic_scores(proposals, cloud, params),
    }
}

fn heuristic_scores(
    proposals: &[InstanceProposal],
    cloud: &LabeledCloud,
    params: &ScoreParams,
) -> Result<Vec<f64>> {
    if proposals.is_empty() {
        return Ok(Vec::new());
    }
    // Mean member count per class over the proposal set itself.
    let mut count_sum: std::collections::HashMap<u32, (usize, usize)> = Default::default();
    for p in proposals {
        let e = count_sum.entry(p.class_id).or_insert((0, 0));
        e.0 += p.point_indices.len();
        e.1 += 1;
    }
    let mean_count: std::collections::HashMap<u32, f64> = count_sum
        .into_iter()
        .map(|(c, (sum, n))| (c, sum as f64 / n as f64))
        .collect();

    let owned;
    let densities: &[u32] = match &params.densities {
        Some(d) => d,
        None => {
            owned = member_densities(proposals, cloud, params.r_d)?;
            &owned
        }
    };

    Ok(proposals
        .iter()
        .map(|p| {
            let size_factor =
                (p.point_indices.len() as f64 / mean_count[&p.class_id]).clamp(0.0, 1.0);
            let mean_density = p
                .point_indices
                .iter()
                .map(|&i| densities[i] as f64)
                .sum::<f64>()
                / p.point_indices.len() as f64;
            let density_factor = if params.theta_d == 0 {
                1.0
            } else {
                (mean_density / params.theta_d as f64).clamp(0.0, 1.0)
            };
            size_factor * density_factor
        })
        .collect())
}

/// Density field over the union of proposal members, in shifted space,
/// scattered back to cloud indices.
fn member_densities(
    proposals: &[InstanceProposal],
    cloud: &LabeledCloud,
    r_d: f64,
) -> Result<Vec<u32>> {
    let shifted = crate::cloud::apply_offsets(cloud)?;
    let mut member: Vec<usize> = proposals
        .iter()
        .flat_map(|p| p.point_indices.iter().copied())
        .collect();
    member.sort_unstable();
    member.dedup();
    let pts: Vec<_> = member.iter().map(|&i| shifted[i]).collect();
    let field = point_densities(&pts, r_d)?;
    let mut out = vec![0u32; cloud.len()];
    for (slot, &i) in member.iter().enumerate() {
        out[i] = field.counts[slot];
    }
    Ok(out)
}

/// Greedy NMS: repeatedly keep the highest-scoring remaining proposal and
/// discard the rest with IoU strictly above the threshold against it. Score
/// ties break toward the lower proposal id. Returns kept proposal ids.
pub fn nms(
    proposals: &[InstanceProposal],
    scores: &[f64],
    iou_threshold: f64,
) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&iou_threshold) {
        return Err(Error::InvalidConfig(format!(
            "nms iou threshold {iou_threshold} outside [0,1]"
        )));
    }
    if proposals.len() != scores.len() {
        return Err(Error::InvalidConfig(
            "scores are not aligned with proposals".into(),
        ));
    }
    let mut order: Vec<usize> = (0..proposals.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut suppressed = vec![false; proposals.len()];
    let mut kept = Vec::new();
    for (pos, &id) in order.iter().enumerate() {
        if suppressed[id] {
            continue;
        }
        kept.push(id);
        for &other in &order[pos + 1..] {
            if !suppressed[other] && pairwise_iou(&proposals[id], &proposals[other]) > iou_threshold
            {
                suppressed[other] = true;
            }
        }
    }
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Point3;

    fn proposal(indices: Vec<usize>) -> InstanceProposal {
        InstanceProposal {
            point_indices: indices,
            class_id: 0,
            centroid: Point3::ZERO,
            score: 1.0,
        }
    }

    #[test]
    fn iou_identities() {
        let a = proposal((0..10).collect());
        assert_eq!(pairwise_iou(&a, &a), 1.0);
        let b = proposal((10..20).collect());
        assert_eq!(pairwise_iou(&a, &b), 0.0);
        // |A|=|B|=10 with 5 shared: 5/15
        let c = proposal((5..15).collect());
        assert!((pairwise_iou(&a, &c) - 5.0 / 15.0).abs() < 1e-15);
        assert_eq!(pairwise_iou(&a, &c), pairwise_iou(&c, &a));
    }

    fn tiny_cloud() -> LabeledCloud {
        let n = 20;
        let points: Vec<Point3> = (0..n).map(|i| Point3::new(i as f64 * 0.01, 0.0, 0.0)).collect();
        LabeledCloud {
            points: points.clone(),
            semantic: vec![1; n],
            semantic_scores: None,
            offsets: Some(vec![Point3::ZERO; n]),
            gt_instance: Some(vec![0; n]),
            gt_semantic: Some(vec![1; n]),
        }
    }

    #[test]
    fn constant_scorer_returns_ones() {
        let cloud = tiny_cloud();
        let props = vec![proposal((0..5).collect()), proposal((5..9).collect())];
        let scores =
            score_proposals(&props, &cloud, Scorer::Constant, &ScoreParams::default()).unwrap();
        assert_eq!(scores, vec![1.0, 1.0]);
    }

    #[test]
    fn oracle_scores_gt_equal_proposal_as_one() {
        let cloud = tiny_cloud();
        let mut gt_prop = proposal((0..20).collect());
        gt_prop.class_id = 1;
        let scores =
            score_proposals(&[gt_prop], &cloud, Scorer::Oracle, &ScoreParams::default()).unwrap();
        assert_eq!(scores, vec![1.0]);
    }

    #[test]
    fn oracle_without_ground_truth_errors() {
        let mut cloud = tiny_cloud();
        cloud.gt_instance = None;
        let props = vec![proposal(vec![0, 1])];
        assert!(score_proposals(&props, &cloud, Scorer::Oracle, &ScoreParams::default()).is_err());
    }

    #[test]
    fn heuristic_size_factor_is_monotone() {
        let cloud = tiny_cloud();
        let params = ScoreParams { theta_d: 1, r_d: 0.05, densities: None };
        // Two proposals of one class fix the class mean; growing the smaller
        // one toward the mean never lowers its score.
        let small = vec![proposal((0..4).collect()), proposal((10..20).collect())];
        let grown = vec![proposal((0..7).collect()), proposal((10..20).collect())];
        let s = score_proposals(&small, &cloud, Scorer::Heuristic, &params).unwrap();
        let g = score_proposals(&grown, &cloud, Scorer::Heuristic, &params).unwrap();
        assert!(g[0] >= s[0]);
        for v in s.iter().chain(g.iter()) {
            assert!((0.0..=1.0).contains(v));
        }
    }

    #[test]
    fn nms_suppresses_duplicates() {
        let props = vec![proposal((0..10).collect()), proposal((0..10).collect())];
        let kept = nms(&props, &[0.9, 0.8], 0.5).unwrap();
        assert_eq!(kept, vec![0]);
    }

    #[test]
    fn nms_keeps_disjoint_proposals() {
        let props = vec![
            proposal((0..10).collect()),
            proposal((10..20).collect()),
            proposal((20..30).collect()),
        ];
        let kept = nms(&props, &[0.5, 0.9, 0.7], 0.5).unwrap();
        assert_eq!(kept.len(), 3);
    }

    #[test]
    fn nms_chain_keeps_endpoints() {
        // A and B overlap, B and C overlap, A and C are disjoint: the greedy
        // pass keeps {A, C}.
        let a = proposal((0..10).collect());
        let b = proposal((5..15).collect());
        let c = proposal((10..20).collect());
        let props = vec![a, b, c];
        let iou_ab = pairwise_iou(&props[0], &props[1]);
        let iou_bc = pairwise_iou(&props[1], &props[2]);
        let iou_ac = pairwise_iou(&props[0], &props[2]);
        assert!(iou_ab > 0.3 && iou_bc > 0.3 && iou_ac == 0.0);
        let kept = nms(&props, &[0.9, 0.8, 0.7], 0.3).unwrap();
        assert_eq!(kept, vec![0, 2]);
    }

    #[test]
    fn nms_invariant_under_positive_score_scaling() {
        let props = vec![
            proposal((0..10).collect()),
            proposal((5..15).collect()),
            proposal((20..30).collect()),
        ];
        let scores = [0.9, 0.5, 0.7];
        let scaled: Vec<f64> = scores.iter().map(|s| s * 0.137).collect();
        let a = nms(&props, &scores, 0.3).unwrap();
        let b = nms(&props, &scaled, 0.3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn nms_rejects_bad_threshold() {
        let props = vec![proposal(vec![0])];
        assert!(nms(&props, &[1.0], 1.5).is_err());
        assert!(nms(&props, &[1.0], -0.1).is_err());
    }
}
