//! Point-wise density on the offset branch and the HP/LP split.
//!
//! The density of a point is the number of points (itself included) inside
//! the closed ball of radius `r_d` around it in shifted space. Points whose
//! density strictly exceeds the threshold become high-density points (HPs);
//! everything else is a low-density point (LP).

use rayon::prelude::*;

use crate::cloud::Point3;
use crate::spatial::SpatialIndex;
use crate::{Error, Result};

/// Per-point density counts at a fixed radius. Every count is at least 1
/// because a point always sees itself.
#[derive(Debug, Clone)]
pub struct DensityField {
    pub counts: Vec<u32>,
    pub radius: f64,
}

/// Per-point HP/LP flags at a fixed threshold. `hp` aligns with the point
/// slice the densities were computed on.
#[derive(Debug, Clone)]
pub struct BinaryLabel {
    pub hp: Vec<bool>,
    pub threshold: u32,
}

impl BinaryLabel {
    pub fn hp_count(&self) -> usize {
        self.hp.iter().filter(|&&b| b).count()
    }

    pub fn lp_count(&self) -> usize {
        self.hp.len() - self.hp_count()
    }
}

/// Counts, for every shifted foreground point, how many points lie within
/// `r_d` of it (itself included). Queries run in parallel against a shared
/// read-only index; the output does not depend on the schedule.
pub fn point_densities(shifted_foreground: &[Point3], r_d: f64) -> Result<DensityField> {
    if !(r_d > 0.0) {
        return Err(Error::NonPositiveRadius(r_d));
    }
    let index = SpatialIndex::build(shifted_foreground);
    let counts: Vec<u32> = shifted_foreground
        .par_iter()
        .map(|p| {
            index
                .radius_count(p, r_d)
                .expect("radius validated above") as u32
        })
        .collect();
    Ok(DensityField { counts, radius: r_d })
}

/// Splits points into HPs (`density > theta_d`, strict) and LPs (the rest).
pub fn binarize(densities: &DensityField, theta_d: u32) -> BinaryLabel {
    BinaryLabel {
        hp: densities.counts.iter().map(|&d| d > theta_d).collect(),
        threshold: theta_d,
    }
}
