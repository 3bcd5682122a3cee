//! Grouping of high-density points into preliminary instances, plus the
//! distance-clustering baseline.
//!
//! Both operations build same-class connected components over points within
//! `link_radius` of each other in shifted space; semantic labels guide the
//! clustering by restricting edges to points of one predicted class. Classes
//! are independent, so they are clustered in parallel; the merge assigns
//! instance ids in order of each component's smallest member index, which
//! makes the result schedule-independent.

use rayon::prelude::*;

use crate::cloud::Point3;
use crate::spatial::SpatialIndex;
use crate::{Error, Result};

/// Instance ids for grouped points. `instance[i]` is `None` for points that
/// were not grouped (LPs in HP grouping, dropped points in distance mode).
#[derive(Debug, Clone)]
pub struct PreliminaryAssignment {
    pub instance: Vec<Option<u32>>,
    /// Class of each instance, indexed by instance id.
    pub instance_class: Vec<u32>,
    /// Points dropped by the distance-clustering size filter.
    pub ignored: Vec<usize>,
}

impl PreliminaryAssignment {
    pub fn n_instances(&self) -> usize {
        self.instance_class.len()
    }

    /// Member indices per instance, sorted ascending.
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

struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n as u32).collect(), size: vec![1; n] }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            self.parent[x as usize] = self.parent[self.parent[x as usize] as usize];
            x = self.parent[x as usize];
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
    }
}

/// Connected components among the masked points of one class, as sorted
/// global index lists ordered by smallest member.
fn class_components(
    points: &[Point3],
    members: &[usize],
    link_radius: f64,
) -> Vec<Vec<usize>> {
    let local: Vec<Point3> = members.iter().map(|&i| points[i]).collect();
    let index = SpatialIndex::build(&local);
    let mut uf = UnionFind::new(local.len());
    index.for_each_link(link_radius, |i, j| uf.union(i, j));
    let mut by_root: std::collections::HashMap<u32, Vec<usize>> =
        std::collections::HashMap::new();
    for i in 0..local.len() {
        let root = uf.find(i as u32);
        by_root.entry(root).or_default().push(members[i]);
    }
    let mut comps: Vec<Vec<usize>> = by_root.into_values().collect();
    for c in &mut comps {
        c.sort_unstable();
    }
    comps.sort_by_key(|c| c[0]);
    comps
}

fn assemble(
    n_points: usize,
    mut components: Vec<(u32, Vec<usize>)>,
    min_points: usize,
) -> PreliminaryAssignment {
    components.sort_by_key(|(_, c)| c[0]);
    let mut instance = vec![None; n_points];
    let mut instance_class = Vec::new();
    let mut ignored = Vec::new();
    for (class, comp) in components {
        if comp.len() < min_points {
            ignored.extend(comp);
            continue;
        }
        let id = instance_class.len() as u32;
        instance_class.push(class);
        for i in comp {
            instance[i] = Some(id);
        }
    }
    ignored.sort_unstable();
    PreliminaryAssignment { instance, instance_class, ignored }
}

fn grouped_by_class(mask: &[bool], semantic_labels: &[u32]) -> Vec<(u32, Vec<usize>)> {
    let mut by_class: std::collections::BTreeMap<u32, Vec<usize>> =
        std::collections::BTreeMap::new();
    for (i, &m) in mask.iter().enumerate() {
        if m {
            by_class.entry(semantic_labels[i]).or_default().push(i);
        }
    }
    by_class.into_iter().collect()
}

/// Groups HPs into preliminary instances: connected components of same-class
/// HP pairs within `link_radius` in shifted space.
pub fn group_hps(
    shifted_points: &[Point3],
    hp_mask: &[bool],
    semantic_labels: &[u32],
    link_radius: f64,
) -> Result<PreliminaryAssignment> {
    if !(link_radius > 0.0) {
        return Err(Error::NonPositiveRadius(link_radius));
    }
    let classes = grouped_by_class(hp_mask, semantic_labels);
    let components: Vec<(u32, Vec<usize>)> = classes
        .par_iter()
        .flat_map(|(class, members)| {
            class_components(shifted_points, members, link_radius)
                .into_iter()
                .map(|c| (*class, c))
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(assemble(shifted_points.len(), components, 1))
}

/// Distance-clustering baseline: same-class components over all foreground
/// points (no binarization). Components smaller than `min_points` are
/// dropped and reported as ignored.
pub fn distance_cluster(
    shifted_points: &[Point3],
    semantic_labels: &[u32],
    link_radius: f64,
    min_points: usize,
) -> Result<PreliminaryAssignment> {
    if !(link_radius > 0.0) {
        return Err(Error::NonPositiveRadius(link_radius));
    }
    if min_points == 0 {
        return Err(Error::InvalidConfig("min_points must be at least 1".into()));
    }
    let mask = vec![true; shifted_points.len()];
    let classes = grouped_by_class(&mask, semantic_labels);
    let components: Vec<(u32, Vec<usize>)> = classes
        .par_iter()
        .flat_map(|(class, members)| {
            class_components(shifted_points, members, link_radius)
                .into_iter()
                .map(|c| (*class, c))
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(assemble(shifted_points.len(), components, min_points))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// O(N^2) oracle: breadth-first components over the same-class adjacency
    /// graph, no spatial index involved.
    fn brute_components(
        points: &[Point3],
        mask: &[bool],
        labels: &[u32],
        radius: f64,
    ) -> Vec<Vec<usize>> {
        let n = points.len();
        let r_sq = radius * radius;
        let mut seen = vec![false; n];
        let mut comps = Vec::new();
        for start in 0..n {
            if !mask[start] || seen[start] {
                continue;
            }
            let mut queue = std::collections::VecDeque::from([start]);
            seen[start] = true;
            let mut comp = Vec::new();
            while let Some(i) = queue.pop_front() {
                comp.push(i);
                for j in 0..n {
                    if mask[j]
                        && !seen[j]
                        && labels[j] == labels[i]
                        && points[i].dist_sq(&points[j]) <= r_sq
                    {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps.sort_by_key(|c| c[0]);
        comps
    }

    fn blob(rng: &mut ChaCha8Rng, center: Point3, n: usize, spread: f64) -> Vec<Point3> {
        (0..n)
            .map(|_| {
                Point3::new(
                    center.x + (rng.gen::<f64>() - 0.5) * spread,
                    center.y + (rng.gen::<f64>() - 0.5) * spread,
                    center.z + (rng.gen::<f64>() - 0.5) * spread,
                )
            })
            .collect()
    }

    #[test]
    fn separated_blobs_form_two_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut pts = blob(&mut rng, Point3::ZERO, 30, 0.02);
        pts.extend(blob(&mut rng, Point3::new(1.0, 0.0, 0.0), 30, 0.02));
        let labels = vec![2u32; 60];
        let mask = vec![true; 60];
        let got = group_hps(&pts, &mask, &labels, 0.04).unwrap();
        assert_eq!(got.n_instances(), 2);
        assert_eq!(got.instance_class, vec![2, 2]);
    }

    #[test]
    fn semantic_labels_split_touching_blob() {
        // One spatial blob carrying two predicted classes must produce two
        // instances even though every point touches the others.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts = blob(&mut rng, Point3::ZERO, 40, 0.02);
        let labels: Vec<u32> = (0..40).map(|i| if i % 2 == 0 { 1 } else { 3 }).collect();
        let mask = vec![true; 40];
        let got = group_hps(&pts, &mask, &labels, 0.04).unwrap();
        assert_eq!(got.n_instances(), 2);
        let mut classes = got.instance_class.clone();
        classes.sort_unstable();
        assert_eq!(classes, vec![1, 3]);
    }

    #[test]
    fn matches_brute_force_on_random_scenes() {
        for seed in 0..8u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 250;
            let pts: Vec<Point3> = (0..n)
                .map(|_| {
                    Point3::new(
                        rng.gen::<f64>() * 0.5,
                        rng.gen::<f64>() * 0.5,
                        rng.gen::<f64>() * 0.5,
                    )
                })
                .collect();
            let labels: Vec<u32> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            let mask: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.8)).collect();
            let got = group_hps(&pts, &mask, &labels, 0.05).unwrap();
            assert_eq!(got.members(), brute_components(&pts, &mask, &labels, 0.05));
        }
    }

    #[test]
    fn distance_cluster_with_min_one_equals_group_all_hp() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 120;
        let pts: Vec<Point3> = (0..n)
            .map(|_| Point3::new(rng.gen::<f64>() * 0.4, rng.gen::<f64>() * 0.4, rng.gen::<f64>() * 0.4))
            .collect();
        let labels: Vec<u32> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let mask = vec![true; n];
        let grouped = group_hps(&pts, &mask, &labels, 0.06).unwrap();
        let dist = distance_cluster(&pts, &labels, 0.06, 1).unwrap();
        assert_eq!(grouped.instance, dist.instance);
        assert_eq!(grouped.instance_class, dist.instance_class);
        assert!(dist.ignored.is_empty());
    }

    #[test]
    fn touching_same_class_objects_merge_in_distance_mode() {
        // Two blobs joined by a thin bridge of shared points: brute-force
        // confirms the single component that binarization would prevent.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut pts = blob(&mut rng, Point3::ZERO, 40, 0.03);
        pts.extend(blob(&mut rng, Point3::new(0.3, 0.0, 0.0), 40, 0.03));
        for i in 0..10 {
            pts.push(Point3::new(0.03 * i as f64, 0.0, 0.0));
        }
        let labels = vec![1u32; pts.len()];
        let got = distance_cluster(&pts, &labels, 0.04, 1).unwrap();
        assert_eq!(got.n_instances(), 1);
        let mask = vec![true; pts.len()];
        assert_eq!(brute_components(&pts, &mask, &labels, 0.04).len(), 1);
    }

    #[test]
    fn small_components_are_ignored() {
        let mut pts = Vec::new();
        for i in 0..8 {
            pts.push(Point3::new(0.01 * i as f64, 0.0, 0.0));
        }
        let labels = vec![0u32; 8];
        let got = distance_cluster(&pts, &labels, 0.04, 10).unwrap();
        assert_eq!(got.n_instances(), 0);
        assert_eq!(got.ignored, (0..8).collect::<Vec<_>>());
        assert!(got.instance.iter().all(|i| i.is_none()));
    }

    #[test]
    fn empty_hp_mask_yields_zero_instances() {
        let pts = vec![Point3::ZERO; 5];
        let got = group_hps(&pts, &[false; 5], &[0; 5], 0.04).unwrap();
        assert_eq!(got.n_instances(), 0);
    }

    #[test]
    fn per_class_runs_union_to_the_global_run() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 200;
        let pts: Vec<Point3> = (0..n)
            .map(|_| Point3::new(rng.gen::<f64>() * 0.4, rng.gen::<f64>() * 0.4, rng.gen::<f64>() * 0.4))
            .collect();
        let labels: Vec<u32> = (0..n).map(|_| rng.gen_range(0..3)).collect();
        let mask = vec![true; n];
        let global = group_hps(&pts, &mask, &labels, 0.05).unwrap();

        let mut union: Vec<Vec<usize>> = Vec::new();
        for class in 0..3u32 {
            let class_mask: Vec<bool> = (0..n).map(|i| labels[i] == class).collect();
            let part = group_hps(&pts, &class_mask, &labels, 0.05).unwrap();
            union.extend(part.members());
        }
        union.sort_by_key(|c| c[0]);
        assert_eq!(global.members(), union);
    }

    #[test]
    fn never_mixes_classes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 150;
        let pts: Vec<Point3> = (0..n)
            .map(|_| Point3::new(rng.gen::<f64>() * 0.2, rng.gen::<f64>() * 0.2, rng.gen::<f64>() * 0.2))
            .collect();
        let labels: Vec<u32> = (0..n).map(|_| rng.gen_range(0..4)).collect();
        let mask = vec![true; n];
        let got = group_hps(&pts, &mask, &labels, 0.05).unwrap();
        for (i, inst) in got.instance.iter().enumerate() {
            if let Some(id) = inst {
                assert_eq!(got.instance_class[*id as usize], labels[i]);
            }
        }
    }

    #[test]
    fn permutation_changes_only_the_labeling() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 180;
        let pts: Vec<Point3> = (0..n)
            .map(|_| Point3::new(rng.gen::<f64>() * 0.4, rng.gen::<f64>() * 0.4, rng.gen::<f64>() * 0.4))
            .collect();
        let labels: Vec<u32> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let mask = vec![true; n];

        let mut perm: Vec<usize> = (0..n).collect();
        perm.rotate_left(37);
        let p_pts: Vec<Point3> = perm.iter().map(|&i| pts[i]).collect();
        let p_labels: Vec<u32> = perm.iter().map(|&i| labels[i]).collect();

        let a = group_hps(&pts, &mask, &labels, 0.05).unwrap();
        let b = group_hps(&p_pts, &mask, &p_labels, 0.05).unwrap();

        let canon = |members: Vec<Vec<usize>>| {
            let mut sets: Vec<Vec<usize>> = members;
            sets.sort();
            sets
        };
        let b_relabeled: Vec<Vec<usize>> = b
            .members()
            .into_iter()
            .map(|c| {
                let mut mapped: Vec<usize> = c.into_iter().map(|i| perm[i]).collect();
                mapped.sort_unstable();
                mapped
            })
            .collect();
        assert_eq!(canon(a.members()), canon(b_relabeled));
    }
}
