//! Local scenes: each instance paired with its K nearest neighbors and a
//! per-point weight mask marking the primary instance.
//!
//! The primary instance carries weight 1.0; the i-th closest secondary
//! (1-based) carries `(min(K, N-1) - i) / min(K, N-1)` where `N` is the
//! number of instances in the scene. One local scene exists per instance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{InstanceProposal, LabeledCloud};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalScene {
    /// Index of the primary instance in the proposal list.
    pub primary: usize,
    /// Secondary instance indices, ascending centroid distance.
    pub secondaries: Vec<usize>,
    /// Cloud point indices of all member instances.
    pub point_indices: Vec<usize>,
    /// Membership rank per scene point: 0 = primary, i = i-th secondary.
    pub member_rank: Vec<u32>,
    /// Weight per scene point.
    pub weights: Vec<f64>,
    /// Predicted-class score per scene point (1.0 when the cloud carries no
    /// score matrix).
    pub semantic_scores: Vec<f32>,
}

/// The `min(k, N-1)` instances with smallest centroid distance to the
/// primary, ascending; centroid-distance ties break toward the lower id.
pub fn nearest_instances(
    proposals: &[InstanceProposal],
    primary_id: usize,
    k: usize,
) -> Result<Vec<usize>> {
    let primary = proposals
        .get(primary_id)
        .ok_or(Error::UnknownInstance(primary_id))?;
    let mut others: Vec<(f64, usize)> = proposals
        .iter()
        .enumerate()
        .filter(|(id, _)| *id != primary_id)
        .map(|(id, p)| (p.centroid.dist_sq(&primary.centroid), id))
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    others.truncate(k);
    Ok(others.into_iter().map(|(_, id)| id).collect())
}

/// Weight of the `rank`-th closest secondary (1-based) in a scene drawn from
/// `n_instances` total instances with parameter `k`.
pub fn secondary_weight(rank: usize, k: usize, n_instances: usize) -> f64 {
    let m = k.min(n_instances.saturating_sub(1));
    debug_assert!(rank >= 1 && rank <= m);
    (m - rank) as f64 / m as f64
}

/// Per-point weights for a scene: 1.0 on the primary, the rank formula on
/// secondaries. `n_instances` is the instance count of the full scene.
pub fn weight_mask(scene: &LocalScene, k: usize, n_instances: usize) -> Vec<f64> {
    scene
        .member_rank
        .iter()
        .map(|&rank| {
            if rank == 0 {
                1.0
            } else {
                secondary_weight(rank as usize, k, n_instances)
            }
        })
        .collect()
}

fn build_one(
    proposals: &[InstanceProposal],
    cloud: &LabeledCloud,
    primary_id: usize,
    k: usize,
) -> Result<LocalScene> {
    let secondaries = nearest_instances(proposals, primary_id, k)?;
    let mut point_indices = Vec::new();
    let mut member_rank = Vec::new();
    for (rank, &inst) in std::iter::once(&primary_id).chain(secondaries.iter()).enumerate() {
        for &p in &proposals[inst].point_indices {
            point_indices.push(p);
            member_rank.push(rank as u32);
        }
    }
    let semantic_scores = point_indices
        .iter()
        .map(|&p| match &cloud.semantic_scores {
            Some(m) => m.row(p)[cloud.semantic[p] as usize],
            None => 1.0,
        })
        .collect();
    let mut scene = LocalScene {
        primary: primary_id,
        secondaries,
        point_indices,
        member_rank,
        weights: Vec::new(),
        semantic_scores,
    };
    scene.weights = weight_mask(&scene, k, proposals.len());
    Ok(scene)
}

/// One local scene per instance, in instance order. Scene construction is
/// independent per primary and runs in parallel.
pub fn build_local_scenes(
    proposals: &[InstanceProposal],
    cloud: &LabeledCloud,
    k: usize,
) -> Result<Vec<LocalScene>> {
    (0..proposals.len())
        .into_par_iter()
        .map(|id| build_one(proposals, cloud, id, k))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Point3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn proposal_at(x: f64, id_base: usize) -> InstanceProposal {
        InstanceProposal {
            point_indices: vec![id_base, id_base + 1],
            class_id: 0,
            centroid: Point3::new(x, 0.0, 0.0),
            score: 1.0,
        }
    }

    fn bare_cloud(n: usize) -> LabeledCloud {
        LabeledCloud {
            points: vec![Point3::ZERO; n],
            semantic: vec![0; n],
            semantic_scores: None,
            offsets: None,
            gt_instance: None,
            gt_semantic: None,
        }
    }

    #[test]
    fn single_instance_has_no_secondaries() {
        let props = vec![proposal_at(0.0, 0)];
        assert!(nearest_instances(&props, 0, 7).unwrap().is_empty());
        let scenes = build_local_scenes(&props, &bare_cloud(2), 7).unwrap();
        assert_eq!(scenes.len(), 1);
        assert!(scenes[0].weights.iter().all(|&w| w == 1.0));
    }

    #[test]
    fn collinear_centroids_pick_the_nearest() {
        let props = vec![proposal_at(0.0, 0), proposal_at(1.0, 2), proposal_at(5.0, 4)];
        assert_eq!(nearest_instances(&props, 0, 1).unwrap(), vec![1]);
    }

    #[test]
    fn unknown_primary_errors() {
        let props = vec![proposal_at(0.0, 0)];
        assert!(matches!(
            nearest_instances(&props, 3, 1),
            Err(Error::UnknownInstance(3))
        ));
    }

    #[test]
    fn matches_exhaustive_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let props: Vec<InstanceProposal> = (0..20)
            .map(|i| InstanceProposal {
                point_indices: vec![i],
                class_id: 0,
                centroid: Point3::new(rng.gen(), rng.gen(), rng.gen()),
                score: 1.0,
            })
            .collect();
        let got = nearest_instances(&props, 3, 7).unwrap();
        let mut expected: Vec<(f64, usize)> = (0..20)
            .filter(|&i| i != 3)
            .map(|i| (props[i].centroid.dist_sq(&props[3].centroid), i))
            .collect();
        expected.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let expected: Vec<usize> = expected.into_iter().take(7).map(|(_, i)| i).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn weight_formula_exact_values() {
        // K = 7 with 10 instances: first secondary 6/7, seventh 0.
        assert!((secondary_weight(1, 7, 10) - 6.0 / 7.0).abs() < 1e-12);
        assert_eq!(secondary_weight(7, 7, 10), 0.0);
        // Two instances in total: the single secondary gets 0.
        assert_eq!(secondary_weight(1, 7, 2), 0.0);
    }

    #[test]
    fn weights_strictly_decrease_over_ranks() {
        let props: Vec<InstanceProposal> = (0..6)
            .map(|i| proposal_at(i as f64, i * 2))
            .collect();
        let scenes = build_local_scenes(&props, &bare_cloud(12), 4).unwrap();
        assert_eq!(scenes.len(), props.len());
        for scene in &scenes {
            let mut per_rank: Vec<f64> = Vec::new();
            for (rank, w) in scene.member_rank.iter().zip(scene.weights.iter()) {
                let r = *rank as usize;
                if per_rank.len() <= r {
                    per_rank.resize(r + 1, *w);
                }
                assert_eq!(per_rank[r], *w);
                assert!((0.0..=1.0).contains(w));
            }
            for pair in per_rank.windows(2) {
                assert!(pair[0] > pair[1]);
            }
        }
    }

    #[test]
    fn semantic_scores_are_carried_through() {
        use crate::cloud::ScoreMatrix;
        let props = vec![proposal_at(0.0, 0), proposal_at(1.0, 2)];
        let mut cloud = bare_cloud(4);
        cloud.semantic = vec![0, 1, 1, 0];
        cloud.semantic_scores = Some(ScoreMatrix {
            n_classes: 2,
            values: vec![0.9, 0.1, 0.2, 0.8, 0.3, 0.7, 0.6, 0.4],
        });
        let scenes = build_local_scenes(&props, &cloud, 1).unwrap();
        let scene = &scenes[0];
        // Each point carries the score of its own predicted class.
        for (&p, &s) in scene.point_indices.iter().zip(scene.semantic_scores.iter()) {
            let expected = cloud.semantic_scores.as_ref().unwrap().row(p)[cloud.semantic[p] as usize];
            assert_eq!(s, expected);
        }
    }

    #[test]
    fn scene_points_are_the_disjoint_union_of_members() {
        let props: Vec<InstanceProposal> = (0..5)
            .map(|i| proposal_at(i as f64, i * 2))
            .collect();
        let scenes = build_local_scenes(&props, &bare_cloud(10), 2).unwrap();
        for scene in &scenes {
            let mut expected: Vec<usize> = Vec::new();
            expected.extend(&props[scene.primary].point_indices);
            for &s in &scene.secondaries {
                expected.extend(&props[s].point_indices);
            }
            assert_eq!(scene.point_indices, expected);
            let unique: std::collections::HashSet<_> = scene.point_indices.iter().collect();
            assert_eq!(unique.len(), scene.point_indices.len());
        }
    }
}
