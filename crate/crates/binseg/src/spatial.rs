//! Static kd-tree over a fixed point set with exact radius and k-nearest
//! queries.
//!
//! Queries return exactly what a linear scan with the same metric would:
//! radius queries use a closed ball (`dist <= r`), kNN ties break toward the
//! lower point index. Build is deterministic, and a built index is read-only,
//! so it can be queried from many threads without synchronization.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::cloud::Point3;
use crate::{Error, Result};

const LEAF_SIZE: usize = 16;

#[derive(Debug)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// kd-tree over an owned copy of the input points. Indices in query results
/// refer to positions in the original list.
#[derive(Debug)]
pub struct SpatialIndex {
    points: Vec<Point3>,
    /// Points permuted into tree order so leaf scans stay contiguous.
    leaf_points: Vec<Point3>,
    order: Vec<u32>,
    nodes: Vec<Node>,
    root: Option<usize>,
}

impl SpatialIndex {
    pub fn build(points: &[Point3]) -> SpatialIndex {
        let mut index = SpatialIndex {
            points: points.to_vec(),
            leaf_points: Vec::new(),
            order: (0..points.len() as u32).collect(),
            nodes: Vec::new(),
            root: None,
        };
        if !points.is_empty() {
            index.root = Some(index.build_node(0, points.len()));
        }
        index.leaf_points = index.order.iter().map(|&i| points[i as usize]).collect();
        index
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return self.nodes.len() - 1;
        }
        // Split on the axis with the largest spread; ties go to the lower
        // axis, so the build is fully determined by the input.
        let mut axis = 0;
        let mut best_spread = f64::NEG_INFINITY;
        for a in 0..3 {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &i in &self.order[start..end] {
                let v = self.points[i as usize].coord(a);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if hi - lo > best_spread {
                best_spread = hi - lo;
                axis = a;
            }
        }
        let mid = (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid, |&a, &b| {
            points[a as usize]
                .coord(axis)
                .total_cmp(&points[b as usize].coord(axis))
                .then(a.cmp(&b))
        });
        let value = self.points[self.order[start + mid] as usize].coord(axis);
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { start: 0, end: 0 }); // placeholder
        let left = self.build_node(start, start + mid);
        let right = self.build_node(start + mid, end);
        self.nodes[slot] = Node::Split { axis, value, left, right };
        slot
    }

    /// Indices of all points with `dist(point, center) <= r`, ascending.
    pub fn radius_query(&self, center: &Point3, r: f64) -> Result<Vec<usize>> {
        if r < 0.0 {
            return Err(Error::NegativeRadius(r));
        }
        let mut out = Vec::new();
        if let Some(root) = self.root {
            self.radius_walk(root, center, r, r * r, &mut |i| out.push(i as usize));
        }
        out.sort_unstable();
        Ok(out)
    }

    /// Number of points with `dist(point, center) <= r`.
    pub fn radius_count(&self, center: &Point3, r: f64) -> Result<usize> {
        if r < 0.0 {
            return Err(Error::NegativeRadius(r));
        }
        let mut n = 0usize;
        if let Some(root) = self.root {
            self.radius_walk(root, center, r, r * r, &mut |_| n += 1);
        }
        Ok(n)
    }

    /// Visits every in-ball point without collecting or sorting; visit order
    /// is unspecified but deterministic. Hot paths that fold the hits (vote
    /// counting, union-find linking) use this to skip the per-query
    /// allocation of [`SpatialIndex::radius_query`]. The caller has already
    /// validated `r >= 0`.
    pub(crate) fn for_each_within<F: FnMut(u32)>(&self, center: &Point3, r: f64, mut visit: F) {
        debug_assert!(r >= 0.0);
        if let Some(root) = self.root {
            self.radius_walk(root, center, r, r * r, &mut visit);
        }
    }

    /// Calls `link(i, j)` for every pair with `dist <= r` and `i < j`, once
    /// per pair. Queries are issued in tree order, so consecutive walks stay
    /// in the same tree region and the pass scales with the tree size rather
    /// than thrashing the cache.
    pub(crate) fn for_each_link<F: FnMut(u32, u32)>(&self, r: f64, mut link: F) {
        debug_assert!(r >= 0.0);
        let Some(root) = self.root else { return };
        for k in 0..self.leaf_points.len() {
            let center = self.leaf_points[k];
            let i = self.order[k];
            self.radius_walk(root, &center, r, r * r, &mut |j| {
                if j > i {
                    link(i, j);
                }
            });
        }
    }

    fn radius_walk<F: FnMut(u32)>(
        &self,
        node: usize,
        center: &Point3,
        r: f64,
        r_sq: f64,
        visit: &mut F,
    ) {
        match &self.nodes[node] {
            Node::Leaf { start, end } => {
                for k in *start..*end {
                    if self.leaf_points[k].dist_sq(center) <= r_sq {
                        visit(self.order[k]);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let c = center.coord(*axis);
                // Left subtree holds coords <= value, right holds >= value.
                if c - value <= r {
                    self.radius_walk(*left, center, r, r_sq, visit);
                }
                if value - c <= r {
                    self.radius_walk(*right, center, r, r_sq, visit);
                }
            }
        }
    }

    /// The `min(k, N)` closest points as `(index, distance)` pairs, ascending
    /// by distance, distance ties broken by the lower index.
    pub fn knn_query(&self, center: &Point3, k: usize) -> Result<Vec<(usize, f64)>> {
        if k == 0 {
            return Err(Error::ZeroK);
        }
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        if let Some(root) = self.root {
            self.knn_walk(root, center, k, &mut heap);
        }
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort_unstable_by(|a, b| a.cmp(b));
        Ok(out
            .into_iter()
            .map(|c| (c.index as usize, c.dist_sq.sqrt()))
            .collect())
    }

    fn knn_walk(&self, node: usize, center: &Point3, k: usize, heap: &mut BinaryHeap<Candidate>) {
        match &self.nodes[node] {
            Node::Leaf { start, end } => {
                for idx in *start..*end {
                    let cand = Candidate {
                        dist_sq: self.leaf_points[idx].dist_sq(center),
                        index: self.order[idx],
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand.cmp(heap.peek().expect("non-empty heap")) == Ordering::Less {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let c = center.coord(*axis);
                let (near, far, gap) = if c <= *value {
                    (*left, *right, value - c)
                } else {
                    (*right, *left, c - value)
                };
                self.knn_walk(near, center, k, heap);
                let bound = if heap.len() < k {
                    f64::INFINITY
                } else {
                    heap.peek().expect("non-empty heap").dist_sq
                };
                // The far side can still contain ties at exactly `bound` that
                // win on index, so it is pruned only on strict exceedance.
                if gap * gap <= bound {
                    self.knn_walk(far, center, k, heap);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist_sq: f64,
    index: u32,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist_sq
            .total_cmp(&other.dist_sq)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(seed: u64, n: usize, extent: f64) -> Vec<Point3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                Point3::new(
                    rng.gen::<f64>() * extent,
                    rng.gen::<f64>() * extent,
                    rng.gen::<f64>() * extent,
                )
            })
            .collect()
    }

    /// Linear-scan oracle with the same metric and tie rules.
    fn brute_radius(points: &[Point3], center: &Point3, r: f64) -> Vec<usize> {
        let r_sq = r * r;
        (0..points.len())
            .filter(|&i| points[i].dist_sq(center) <= r_sq)
            .collect()
    }

    fn brute_knn(points: &[Point3], center: &Point3, k: usize) -> Vec<(usize, f64)> {
        let mut all: Vec<(usize, f64)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, p.dist_sq(center)))
            .collect();
        all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        all.truncate(k);
        all.into_iter().map(|(i, d)| (i, d.sqrt())).collect()
    }

    #[test]
    fn empty_index_yields_empty_results() {
        let idx = SpatialIndex::build(&[]);
        assert!(idx.radius_query(&Point3::ZERO, 1.0).unwrap().is_empty());
        assert!(idx.knn_query(&Point3::ZERO, 3).unwrap().is_empty());
    }

    #[test]
    fn duplicates_are_returned_individually() {
        let p = Point3::new(1.0, 1.0, 1.0);
        let idx = SpatialIndex::build(&[p, p, p]);
        assert_eq!(idx.radius_query(&p, 0.0).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn zero_radius_hits_exact_location_only() {
        let pts = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(0.5, 0.0, 0.0),
            Point3::new(0.0, 0.0, 0.0),
        ];
        let idx = SpatialIndex::build(&pts);
        assert_eq!(idx.radius_query(&pts[0], 0.0).unwrap(), vec![0, 2]);
    }

    #[test]
    fn unit_grid_axis_cross() {
        // Integer grid [-2,2]^3; the closed unit ball around the origin holds
        // the origin plus the six axis neighbors.
        let mut pts = Vec::new();
        for x in -2..=2 {
            for y in -2..=2 {
                for z in -2..=2 {
                    pts.push(Point3::new(x as f64, y as f64, z as f64));
                }
            }
        }
        let idx = SpatialIndex::build(&pts);
        let hits = idx.radius_query(&Point3::ZERO, 1.0).unwrap();
        assert_eq!(hits.len(), 7);
        for &i in &hits {
            assert!(pts[i].dist(&Point3::ZERO) <= 1.0);
        }
    }

    #[test]
    fn radius_matches_linear_scan() {
        let pts = random_cloud(42, 1000, 1.0);
        let idx = SpatialIndex::build(&pts);
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..20 {
            let c = Point3::new(rng.gen(), rng.gen(), rng.gen());
            assert_eq!(
                idx.radius_query(&c, 0.1).unwrap(),
                brute_radius(&pts, &c, 0.1)
            );
        }
    }

    #[test]
    fn knn_singleton_and_exhaustive() {
        let pts = vec![Point3::new(1.0, 2.0, 3.0)];
        let idx = SpatialIndex::build(&pts);
        assert_eq!(idx.knn_query(&Point3::ZERO, 1).unwrap()[0].0, 0);

        let pts = random_cloud(5, 40, 1.0);
        let idx = SpatialIndex::build(&pts);
        let all = idx.knn_query(&Point3::ZERO, pts.len()).unwrap();
        assert_eq!(all.len(), pts.len());
        assert_eq!(all, brute_knn(&pts, &Point3::ZERO, pts.len()));
    }

    #[test]
    fn knn_matches_linear_scan() {
        let pts = random_cloud(9, 500, 1.0);
        let idx = SpatialIndex::build(&pts);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..30 {
            let c = Point3::new(rng.gen(), rng.gen(), rng.gen());
            assert_eq!(idx.knn_query(&c, 5).unwrap(), brute_knn(&pts, &c, 5));
        }
    }

    #[test]
    fn knn_tie_breaks_on_lower_index() {
        // Two points equidistant from the query; only the lower index fits.
        let pts = vec![
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(-1.0, 0.0, 0.0),
            Point3::new(5.0, 0.0, 0.0),
        ];
        let idx = SpatialIndex::build(&pts);
        let got = idx.knn_query(&Point3::ZERO, 1).unwrap();
        assert_eq!(got[0].0, 0);
    }

    #[test]
    fn invalid_arguments_error() {
        let idx = SpatialIndex::build(&random_cloud(1, 10, 1.0));
        assert!(matches!(
            idx.radius_query(&Point3::ZERO, -0.5),
            Err(Error::NegativeRadius(_))
        ));
        assert!(matches!(idx.knn_query(&Point3::ZERO, 0), Err(Error::ZeroK)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn radius_results_grow_with_radius(seed in 0u64..1000, r1 in 0.0f64..0.3, dr in 0.0f64..0.3) {
            let pts = random_cloud(seed, 200, 1.0);
            let idx = SpatialIndex::build(&pts);
            let c = Point3::new(0.5, 0.5, 0.5);
            let small = idx.radius_query(&c, r1).unwrap();
            let large = idx.radius_query(&c, r1 + dr).unwrap();
            let large_set: std::collections::HashSet<usize> = large.into_iter().collect();
            prop_assert!(small.iter().all(|i| large_set.contains(i)));
        }

        #[test]
        fn knn_distances_non_decreasing(seed in 0u64..1000, k in 1usize..50) {
            let pts = random_cloud(seed, 80, 1.0);
            let idx = SpatialIndex::build(&pts);
            let got = idx.knn_query(&Point3::new(0.2, 0.9, 0.4), k).unwrap();
            prop_assert_eq!(got.len(), k.min(pts.len()));
            for w in got.windows(2) {
                prop_assert!(w[0].1 <= w[1].1);
            }
        }

        #[test]
        fn permutation_relabels_results(seed in 0u64..1000) {
            let pts = random_cloud(seed, 120, 1.0);
            let mut perm: Vec<usize> = (0..pts.len()).collect();
            // Deterministic shuffle derived from the seed.
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
            for i in (1..perm.len()).rev() {
                let j = rng.gen_range(0..=i);
                perm.swap(i, j);
            }
            let permuted: Vec<Point3> = perm.iter().map(|&i| pts[i]).collect();

            let idx_a = SpatialIndex::build(&pts);
            let idx_b = SpatialIndex::build(&permuted);
            let c = Point3::new(0.4, 0.4, 0.4);
            let mut relabeled: Vec<usize> = idx_b
                .radius_query(&c, 0.25)
                .unwrap()
                .into_iter()
                .map(|i| perm[i])
                .collect();
            relabeled.sort_unstable();
            prop_assert_eq!(relabeled, idx_a.radius_query(&c, 0.25).unwrap());
        }
    }
}
