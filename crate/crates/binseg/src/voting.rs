//! Assignment of low-density points to instances by neighbor voting.
//!
//! Each LP looks at the grouped HPs of its own predicted class within the
//! class mean size `r_m` in original coordinates and joins the instance
//! holding the most of them. If no same-class HP is in range, the LP joins
//! the instance of its globally nearest HP regardless of class. Only
//! original HPs ever vote; LPs assigned earlier never join the voter pool,
//! so the result is independent of processing order and a single parallel
//! pass suffices.

use rayon::prelude::*;

use crate::cloud::{ClassCatalog, Point3};
use crate::clustering::PreliminaryAssignment;
use crate::spatial::SpatialIndex;
use crate::{Error, Result};

/// Instance ids after voting. HPs keep their preliminary id; LPs receive the
/// voted id. Voting never creates instances.
#[derive(Debug, Clone)]
pub struct FullAssignment {
    pub instance: Vec<Option<u32>>,
    pub instance_class: Vec<u32>,
}

impl FullAssignment {
    pub fn n_instances(&self) -> usize {
        self.instance_class.len()
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.instance_class.len()];
        for (i, inst) in self.instance.iter().enumerate() {
            if let Some(id) = inst {
                out[*id as usize].push(i);
            }
        }
        out
    }
}

struct VoterPool {
    /// Tree over the voters of one class, plus each voter's global index and
    /// instance id in tree order.
    by_class: std::collections::HashMap<u32, (SpatialIndex, Vec<(usize, u32)>)>,
    all: SpatialIndex,
    all_info: Vec<(usize, u32)>,
}

fn build_pool(
    original_points: &[Point3],
    preliminary: &PreliminaryAssignment,
    semantic_labels: &[u32],
) -> VoterPool {
    let mut class_members: std::collections::HashMap<u32, Vec<(usize, u32)>> =
        std::collections::HashMap::new();
    let mut all_info = Vec::new();
    for (i, inst) in preliminary.instance.iter().enumerate() {
        if let Some(id) = inst {
            class_members
                .entry(semantic_labels[i])
                .or_default()
                .push((i, *id));
            all_info.push((i, *id));
        }
    }
    let by_class = class_members
        .into_iter()
        .map(|(class, info)| {
            let pts: Vec<Point3> = info.iter().map(|&(i, _)| original_points[i]).collect();
            (class, (SpatialIndex::build(&pts), info))
        })
        .collect();
    let all_pts: Vec<Point3> = all_info.iter().map(|&(i, _)| original_points[i]).collect();
    VoterPool { by_class, all: SpatialIndex::build(&all_pts), all_info }
}

fn vote_one(
    lp: usize,
    original_points: &[Point3],
    semantic_labels: &[u32],
    pool: &VoterPool,
    r_m: f64,
) -> u32 {
    let p = &original_points[lp];
    if let Some((tree, info)) = pool.by_class.get(&semantic_labels[lp]) {
        // Fold votes during the walk; the handful of instances in range
        // keeps the linear scan cheap.
        let mut votes: Vec<(u32, u32)> = Vec::new();
        tree.for_each_within(p, r_m, |t| {
            let inst = info[t as usize].1;
            match votes.iter_mut().find(|(id, _)| *id == inst) {
                Some((_, n)) => *n += 1,
                None => votes.push((inst, 1)),
            }
        });
        if !votes.is_empty() {
            let best = votes.iter().map(|&(_, n)| n).max().expect("non-empty votes");
            let tied: Vec<u32> = votes
                .iter()
                .filter(|(_, n)| *n == best)
                .map(|&(id, _)| id)
                .collect();
            if tied.len() == 1 {
                return tied[0];
            }
            // Tie: the instance of the single nearest voting HP; distance
            // ties resolve toward the lower point index, then the lower id.
            let mut nearest: Option<(f64, usize, u32)> = None;
            tree.for_each_within(p, r_m, |t| {
                let (global, inst) = info[t as usize];
                if !tied.contains(&inst) {
                    return;
                }
                let key = (original_points[global].dist_sq(p), global, inst);
                match nearest {
                    Some((d, g, _)) if (key.0, key.1) >= (d, g) => {}
                    _ => nearest = Some(key),
                }
            });
            return nearest.expect("tied instances have voters").2;
        }
    }
    // No same-class HP in range: fall back to the globally nearest HP.
    let nn = pool.all.knn_query(p, 1).expect("voter pool is non-empty");
    pool.all_info[nn[0].0].1
}

/// Assigns every LP to an instance. HPs keep their preliminary assignment.
///
/// Errors with [`Error::Unassignable`] when LPs exist but no grouped HP does.
pub fn assign_lps(
    original_points: &[Point3],
    preliminary: &PreliminaryAssignment,
    lp_mask: &[bool],
    semantic_labels: &[u32],
    catalog: &ClassCatalog,
) -> Result<FullAssignment> {
    let lps: Vec<usize> = (0..original_points.len())
        .filter(|&i| lp_mask[i] && preliminary.instance[i].is_none())
        .collect();
    let n_voters = preliminary.instance.iter().filter(|i| i.is_some()).count();
    if n_voters == 0 {
        if lps.is_empty() {
            return Ok(FullAssignment {
                instance: preliminary.instance.clone(),
                instance_class: preliminary.instance_class.clone(),
            });
        }
        return Err(Error::Unassignable { unassigned: lps });
    }
    // Every LP class needs a mean size before any parallel work starts.
    let mut radii: std::collections::HashMap<u32, f64> = std::collections::HashMap::new();
    for &lp in &lps {
        let class = semantic_labels[lp];
        if let std::collections::hash_map::Entry::Vacant(e) = radii.entry(class) {
            e.insert(catalog.mean_size(class)?);
        }
    }

    let pool = build_pool(original_points, preliminary, semantic_labels);
    let voted: Vec<(usize, u32)> = lps
        .par_iter()
        .map(|&lp| {
            let r_m = radii[&semantic_labels[lp]];
            (lp, vote_one(lp, original_points, semantic_labels, &pool, r_m))
        })
        .collect();

    let mut instance = preliminary.instance.clone();
    for (lp, id) in voted {
        instance[lp] = Some(id);
    }
    Ok(FullAssignment { instance, instance_class: preliminary.instance_class.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::ClassInfo;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn catalog(r_m: f64) -> ClassCatalog {
        ClassCatalog {
            classes: vec![
                ClassInfo { name: "bg".into(), background: true, mean_size: None },
                ClassInfo { name: "a".into(), background: false, mean_size: Some(r_m) },
                ClassInfo { name: "b".into(), background: false, mean_size: Some(r_m) },
            ],
        }
    }

    fn preliminary(instance: Vec<Option<u32>>, classes: Vec<u32>) -> PreliminaryAssignment {
        PreliminaryAssignment { instance, instance_class: classes, ignored: Vec::new() }
    }

    #[test]
    fn unanimous_vote() {
        // LP at origin surrounded by HPs of one instance.
        let points = vec![
            Point3::ZERO,
            Point3::new(0.1, 0.0, 0.0),
            Point3::new(0.0, 0.1, 0.0),
            Point3::new(0.0, 0.0, 0.1),
        ];
        let pre = preliminary(vec![None, Some(0), Some(0), Some(0)], vec![1]);
        let lp_mask = vec![true, false, false, false];
        let got = assign_lps(&points, &pre, &lp_mask, &[1, 1, 1, 1], &catalog(0.5)).unwrap();
        assert_eq!(got.instance[0], Some(0));
    }

    #[test]
    fn majority_wins() {
        // 5 HPs of instance 0 and 3 of instance 1 inside r_m.
        let mut points = vec![Point3::ZERO];
        let mut instance = vec![None];
        for i in 0..5 {
            points.push(Point3::new(0.1 + 0.01 * i as f64, 0.0, 0.0));
            instance.push(Some(0));
        }
        for i in 0..3 {
            points.push(Point3::new(-0.05 - 0.01 * i as f64, 0.0, 0.0));
            instance.push(Some(1));
        }
        let labels = vec![1u32; points.len()];
        let mut lp_mask = vec![false; points.len()];
        lp_mask[0] = true;
        let pre = preliminary(instance, vec![1, 1]);
        let got = assign_lps(&points, &pre, &lp_mask, &labels, &catalog(0.5)).unwrap();
        assert_eq!(got.instance[0], Some(0));
    }

    #[test]
    fn fallback_ignores_class() {
        // No same-class HP within r_m; the nearest HP overall is class 2 and
        // belongs to instance 1.
        let points = vec![
            Point3::ZERO,
            Point3::new(0.05, 0.0, 0.0),  // class 2, instance 1
            Point3::new(10.0, 0.0, 0.0),  // class 1, instance 0 (far away)
        ];
        let labels = vec![1u32, 2, 1];
        let pre = preliminary(vec![None, Some(1), Some(0)], vec![1, 2]);
        let lp_mask = vec![true, false, false];
        let got = assign_lps(&points, &pre, &lp_mask, &labels, &catalog(0.3)).unwrap();
        assert_eq!(got.instance[0], Some(1));
    }

    #[test]
    fn zero_hps_is_unassignable() {
        let points = vec![Point3::ZERO, Point3::new(1.0, 0.0, 0.0)];
        let pre = preliminary(vec![None, None], vec![]);
        let got = assign_lps(&points, &pre, &[true, true], &[1, 1], &catalog(0.5));
        match got {
            Err(Error::Unassignable { unassigned }) => assert_eq!(unassigned, vec![0, 1]),
            other => panic!("expected Unassignable, got {other:?}"),
        }
    }

    #[test]
    fn votes_match_brute_force_recount() {
        for seed in 0..6u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 300;
            let points: Vec<Point3> = (0..n)
                .map(|_| Point3::new(rng.gen(), rng.gen(), rng.gen()))
                .collect();
            let labels: Vec<u32> = (0..n).map(|_| rng.gen_range(1..3)).collect();
            let mut instance: Vec<Option<u32>> = Vec::new();
            let mut classes = vec![1u32, 2, 1, 2];
            for i in 0..n {
                if rng.gen_bool(0.7) {
                    // HPs of each class split between two instances
                    let id = if labels[i] == 1 {
                        if points[i].x < 0.5 { 0 } else { 2 }
                    } else if points[i].x < 0.5 {
                        1
                    } else {
                        3
                    };
                    instance.push(Some(id));
                } else {
                    instance.push(None);
                }
            }
            // Drop unused instance ids from the tail so ids stay dense.
            while let Some(last) = classes.last() {
                let id = (classes.len() - 1) as u32;
                if instance.iter().any(|x| *x == Some(id)) {
                    let _ = last;
                    break;
                }
                classes.pop();
            }
            let lp_mask: Vec<bool> = instance.iter().map(|x| x.is_none()).collect();
            let pre = preliminary(instance.clone(), classes);
            let r_m = 0.25;
            let got = assign_lps(&points, &pre, &lp_mask, &labels, &catalog(r_m)).unwrap();

            // Oracle: full recount over all HP distances.
            for lp in 0..n {
                if !lp_mask[lp] {
                    assert_eq!(got.instance[lp], instance[lp]);
                    continue;
                }
                let mut votes: std::collections::HashMap<u32, usize> = Default::default();
                let mut candidates: Vec<(f64, usize, u32)> = Vec::new();
                let mut nearest_any: Option<(f64, usize, u32)> = None;
                for h in 0..n {
                    let Some(id) = instance[h] else { continue };
                    let d = points[lp].dist_sq(&points[h]);
                    if labels[h] == labels[lp] && d <= r_m * r_m {
                        *votes.entry(id).or_insert(0) += 1;
                        candidates.push((d, h, id));
                    }
                    match nearest_any {
                        Some((bd, bh, _)) if (d, h) >= (bd, bh) => {}
                        _ => nearest_any = Some((d, h, id)),
                    }
                }
                let expected = if votes.is_empty() {
                    nearest_any.unwrap().2
                } else {
                    let best = *votes.values().max().unwrap();
                    let tied: Vec<u32> = votes
                        .iter()
                        .filter(|(_, &c)| c == best)
                        .map(|(&id, _)| id)
                        .collect();
                    if tied.len() == 1 {
                        tied[0]
                    } else {
                        candidates
                            .iter()
                            .filter(|(_, _, id)| tied.contains(id))
                            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                            .unwrap()
                            .2
                    }
                };
                assert_eq!(got.instance[lp], Some(expected), "seed {seed} lp {lp}");
            }
        }
    }

    #[test]
    fn larger_radius_only_adds_voters() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 120;
        let points: Vec<Point3> = (0..n)
            .map(|_| Point3::new(rng.gen(), rng.gen(), rng.gen()))
            .collect();
        let instance: Vec<Option<u32>> = (0..n)
            .map(|i| if i % 3 == 0 { None } else { Some((i % 2) as u32) })
            .collect();
        let pool_pts: Vec<usize> = (0..n).filter(|&i| instance[i].is_some()).collect();
        let lp = (0..n).find(|&i| instance[i].is_none()).unwrap();
        let voters = |r: f64| -> std::collections::HashSet<usize> {
            pool_pts
                .iter()
                .copied()
                .filter(|&h| points[lp].dist_sq(&points[h]) <= r * r)
                .collect()
        };
        let small = voters(0.2);
        let large = voters(0.4);
        assert!(small.is_subset(&large));
    }

    #[test]
    fn hp_assignments_never_change() {
        let points = vec![
            Point3::ZERO,
            Point3::new(0.01, 0.0, 0.0),
            Point3::new(0.4, 0.0, 0.0),
        ];
        let pre = preliminary(vec![Some(0), None, Some(1)], vec![1, 1]);
        let got = assign_lps(&points, &pre, &[false, true, false], &[1, 1, 1], &catalog(0.5))
            .unwrap();
        assert_eq!(got.instance[0], Some(0));
        assert_eq!(got.instance[2], Some(1));
        assert_eq!(got.instance[1], Some(0));
    }
}
