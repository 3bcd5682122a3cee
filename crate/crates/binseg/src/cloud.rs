//! Core domain types shared by the whole pipeline, plus centroid and offset
//! arithmetic.
//!
//! Everything here is an immutable value object after construction; types can
//! be shared freely across threads.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Reserved ground-truth instance id for background points. Never a valid
/// instance id.
pub const BACKGROUND_INSTANCE: u32 = u32::MAX;

/// A point in meters. All components must be finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ZERO: Point3 = Point3 { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn add(&self, o: &Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }

    pub fn sub(&self, o: &Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }

    pub fn scale(&self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn dot(&self, o: &Point3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dist_sq(&self, o: &Point3) -> f64 {
        let dx = self.x - o.x;
        let dy = self.y - o.y;
        let dz = self.z - o.z;
        dx * dx + dy * dy + dz * dz
    }

    pub fn dist(&self, o: &Point3) -> f64 {
        self.dist_sq(o).sqrt()
    }

    pub fn coord(&self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }
}

/// One class of the scene vocabulary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassInfo {
    pub name: String,
    pub background: bool,
    /// Mean object size in meters (bounding-sphere diameter averaged over
    /// instances of the class). Present for foreground classes.
    pub mean_size: Option<f64>,
}

/// Class vocabulary: names, background flags and per-class mean sizes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassCatalog {
    pub classes: Vec<ClassInfo>,
}

impl ClassCatalog {
    pub fn validate(&self) -> Result<()> {
        let mut any_foreground = false;
        for (id, c) in self.classes.iter().enumerate() {
            if !c.background {
                any_foreground = true;
                match c.mean_size {
                    Some(r) if r > 0.0 && r.is_finite() => {}
                    _ => {
                        return Err(Error::InvalidConfig(format!(
                            "foreground class {id} ({}) needs a positive mean size",
                            c.name
                        )))
                    }
                }
            }
        }
        if !any_foreground {
            return Err(Error::InvalidConfig(
                "catalog needs at least one foreground class".into(),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn is_background(&self, class_id: u32) -> bool {
        self.classes
            .get(class_id as usize)
            .map(|c| c.background)
            .unwrap_or(false)
    }

    pub fn mean_size(&self, class_id: u32) -> Result<f64> {
        self.classes
            .get(class_id as usize)
            .and_then(|c| c.mean_size)
            .ok_or(Error::MissingMeanSize(class_id))
    }

    pub fn foreground_ids(&self) -> Vec<u32> {
        self.classes
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.background)
            .map(|(i, _)| i as u32)
            .collect()
    }
}

/// Per-point semantic score matrix, row-major `[n_points x n_classes]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub n_classes: usize,
    pub values: Vec<f32>,
}

impl ScoreMatrix {
    pub fn row(&self, point: usize) -> &[f32] {
        let s = point * self.n_classes;
        &self.values[s..s + self.n_classes]
    }
}

/// A labeled point cloud: coordinates, per-point semantic predictions,
/// predicted offsets toward instance centroids, and optional ground truth.
///
/// All per-point arrays have identical length.
#[derive(Debug, Clone)]
pub struct LabeledCloud {
    pub points: Vec<Point3>,
    /// Predicted class id per point.
    pub semantic: Vec<u32>,
    /// Optional per-point class score vector.
    pub semantic_scores: Option<ScoreMatrix>,
    /// Predicted displacement toward the instance centroid, per point.
    pub offsets: Option<Vec<Point3>>,
    /// Ground-truth instance id per point; [`BACKGROUND_INSTANCE`] marks
    /// background.
    pub gt_instance: Option<Vec<u32>>,
    /// Ground-truth class id per point.
    pub gt_semantic: Option<Vec<u32>>,
}

impl LabeledCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self, n_classes: usize) -> Result<()> {
        let n = self.points.len();
        let check_len = |len: usize, what: &str| {
            if len != n {
                Err(Error::InvalidCloud(format!(
                    "{what} has {len} entries for {n} points"
                )))
            } else {
                Ok(())
            }
        };
        check_len(self.semantic.len(), "semantic")?;
        if let Some(o) = &self.offsets {
            check_len(o.len(), "offsets")?;
            if let Some(bad) = o.iter().position(|p| !p.is_finite()) {
                return Err(Error::InvalidCloud(format!("offset {bad} is not finite")));
            }
        }
        if let Some(g) = &self.gt_instance {
            check_len(g.len(), "gt_instance")?;
        }
        if let Some(g) = &self.gt_semantic {
            check_len(g.len(), "gt_semantic")?;
            if let Some(bad) = g.iter().position(|&c| c as usize >= n_classes) {
                return Err(Error::InvalidCloud(format!(
                    "gt class id {} at point {bad} out of range",
                    g[bad]
                )));
            }
        }
        if let Some(s) = &self.semantic_scores {
            if s.n_classes != n_classes {
                return Err(Error::InvalidCloud(format!(
                    "score matrix has {} classes, catalog has {n_classes}",
                    s.n_classes
                )));
            }
            check_len(s.values.len() / n_classes.max(1), "semantic_scores")?;
            if s.values.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::InvalidCloud("semantic score outside [0,1]".into()));
            }
        }
        if let Some(bad) = self.points.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidCloud(format!("point {bad} is not finite")));
        }
        if let Some(bad) = self.semantic.iter().position(|&c| c as usize >= n_classes) {
            return Err(Error::InvalidCloud(format!(
                "class id {} at point {bad} out of range",
                self.semantic[bad]
            )));
        }
        Ok(())
    }
}

/// A proposed instance: member point indices into the cloud, class, centroid
/// over original coordinates, and a confidence score in `[0,1]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceProposal {
    /// Sorted ascending, duplicate-free indices into the cloud.
    pub point_indices: Vec<usize>,
    pub class_id: u32,
    pub centroid: Point3,
    pub score: f64,
}

impl InstanceProposal {
    /// Builds a proposal from member indices, computing the centroid over the
    /// original coordinates. Indices are sorted and deduplicated.
    pub fn from_members(
        mut point_indices: Vec<usize>,
        class_id: u32,
        points: &[Point3],
    ) -> Result<Self> {
        point_indices.sort_unstable();
        point_indices.dedup();
        let members: Vec<Point3> = point_indices.iter().map(|&i| points[i]).collect();
        let centroid = centroid(&members)?;
        Ok(InstanceProposal { point_indices, class_id, centroid, score: 1.0 })
    }

    pub fn len(&self) -> usize {
        self.point_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point_indices.is_empty()
    }
}

/// Component-wise arithmetic mean of a non-empty point list.
pub fn centroid(points: &[Point3]) -> Result<Point3> {
    if points.is_empty() {
        return Err(Error::EmptyInstance);
    }
    let mut acc = Point3::ZERO;
    for p in points {
        acc = acc.add(p);
    }
    Ok(acc.scale(1.0 / points.len() as f64))
}

/// Shifts every point by its predicted offset: `shifted[i] = points[i] + offsets[i]`.
pub fn apply_offsets(cloud: &LabeledCloud) -> Result<Vec<Point3>> {
    let offsets = cloud.offsets.as_ref().ok_or(Error::MissingOffsets)?;
    Ok(cloud
        .points
        .iter()
        .zip(offsets.iter())
        .map(|(p, o)| p.add(o))
        .collect())
}

/// Ideal offsets from ground truth: each foreground point gets the vector
/// from itself to its instance centroid; background points get zero.
pub fn ground_truth_offsets(cloud: &LabeledCloud) -> Result<Vec<Point3>> {
    let gt = cloud.gt_instance.as_ref().ok_or(Error::MissingGroundTruth)?;
    let centroids = gt_centroids(&cloud.points, gt);
    Ok(cloud
        .points
        .iter()
        .zip(gt.iter())
        .map(|(p, &inst)| {
            if inst == BACKGROUND_INSTANCE {
                Point3::ZERO
            } else {
                centroids[&inst].sub(p)
            }
        })
        .collect())
}

fn gt_centroids(
    points: &[Point3],
    gt: &[u32],
) -> std::collections::HashMap<u32, Point3> {
    let mut sums: std::collections::HashMap<u32, (Point3, usize)> =
        std::collections::HashMap::new();
    for (p, &inst) in points.iter().zip(gt.iter()) {
        if inst != BACKGROUND_INSTANCE {
            let e = sums.entry(inst).or_insert((Point3::ZERO, 0));
            e.0 = e.0.add(p);
            e.1 += 1;
        }
    }
    sums.into_iter()
        .map(|(k, (s, n))| (k, s.scale(1.0 / n as f64)))
        .collect()
}

/// Ground-truth instances of a cloud as proposals (score 1.0), ordered by
/// instance id. Class is taken from the members' ground-truth semantics.
pub fn gt_instances(cloud: &LabeledCloud) -> Result<Vec<InstanceProposal>> {
    let gt = cloud.gt_instance.as_ref().ok_or(Error::MissingGroundTruth)?;
    let gt_sem = cloud.gt_semantic.as_ref().ok_or(Error::MissingGroundTruth)?;
    let mut members: std::collections::BTreeMap<u32, Vec<usize>> =
        std::collections::BTreeMap::new();
    for (i, &inst) in gt.iter().enumerate() {
        if inst != BACKGROUND_INSTANCE {
            members.entry(inst).or_default().push(i);
        }
    }
    members
        .into_values()
        .map(|idx| {
            let class_id = gt_sem[idx[0]];
            InstanceProposal::from_members(idx, class_id, &cloud.points)
        })
        .collect()
}
