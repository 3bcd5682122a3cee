//! Average precision over IoU overlaps plus offset-quality diagnostics.
//!
//! The matching protocol: per class and overlap threshold, predictions are
//! visited in descending score order (ties toward the lower proposal id) and
//! each one greedily takes the unmatched ground-truth instance of its class
//! with the highest IoU at or above the threshold. The precision-recall
//! curve is integrated with all-point interpolation. The mean runs over
//! classes present in the ground truth.

use serde::{Deserialize, Serialize};

use crate::cloud::{gt_instances, InstanceProposal, LabeledCloud, Point3, BACKGROUND_INSTANCE};
use crate::scoring::{pairwise_iou, sorted_intersection};
use crate::{Error, Result};

/// IoU thresholds `[0.5:0.95:0.05]` used for the mean AP.
pub fn standard_overlaps() -> Vec<f64> {
    (0..10).map(|i| 0.5 + 0.05 * i as f64).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerClassAp {
    pub class_id: u32,
    /// Mean AP over the requested overlap range.
    pub ap: f64,
    pub ap_50: f64,
    pub ap_25: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OffsetDiagnostics {
    /// Mean L2 distance between predicted and ideal offsets.
    pub offset_distance: f64,
    /// Negated mean cosine between predicted and ideal offsets (-1 is best).
    pub offset_direction: f64,
    /// Points excluded from the direction mean for zero-length offsets.
    pub direction_excluded: usize,
    /// Mean over ground-truth instances of the best dice against any
    /// prediction.
    pub mean_dice: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    /// Mean AP over the overlap range.
    pub map: f64,
    pub ap_50: f64,
    pub ap_25: f64,
    /// Mean AP per individual overlap threshold.
    pub ap_by_overlap: Vec<(f64, f64)>,
    pub per_class: Vec<PerClassAp>,
    /// Mean precision at overlap 0.5 over classes with predictions.
    pub mprec_50: f64,
    /// Mean recall at overlap 0.5 over classes with ground truth.
    pub mrec_50: f64,
    pub n_gt_instances: usize,
    pub n_predictions: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub diagnostics: Option<OffsetDiagnostics>,
}

/// Greedy matching flags: predictions in score order each take the unmatched
/// ground-truth instance with the highest IoU at or above the threshold.
fn match_flags(sorted_preds: &[&InstanceProposal], gt: &[&InstanceProposal], tau: f64) -> Vec<bool> {
    let mut matched = vec![false; gt.len()];
    let mut tp_flags = Vec::with_capacity(sorted_preds.len());
    for pred in sorted_preds {
        let mut best: Option<(f64, usize)> = None;
        for (g, gt_inst) in gt.iter().enumerate() {
            if matched[g] {
                continue;
            }
            let iou = pairwise_iou(pred, gt_inst);
            if iou >= tau {
                match best {
                    Some((b, _)) if iou <= b => {}
                    _ => best = Some((iou, g)),
                }
            }
        }
        match best {
            Some((_, g)) => {
                matched[g] = true;
                tp_flags.push(true);
            }
            None => tp_flags.push(false),
        }
    }
    tp_flags
}

/// AP for one class at one threshold, with predictions pre-sorted.
fn class_ap(sorted_preds: &[&InstanceProposal], gt: &[&InstanceProposal], tau: f64) -> f64 {
    let npos = gt.len();
    if npos == 0 {
        return 0.0;
    }
    let tp_flags = match_flags(sorted_preds, gt, tau);
    // All-point interpolation over the PR curve.
    let n = tp_flags.len();
    let mut precision = vec![0.0; n];
    let mut recall = vec![0.0; n];
    let (mut tp, mut fp) = (0usize, 0usize);
    for i in 0..n {
        if tp_flags[i] {
            tp += 1;
        } else {
            fp += 1;
        }
        precision[i] = tp as f64 / (tp + fp) as f64;
        recall[i] = tp as f64 / npos as f64;
    }
    let mut envelope = precision.clone();
    for i in (0..n.saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for i in 0..n {
        if tp_flags[i] {
            ap += (recall[i] - prev_recall) * envelope[i];
            prev_recall = recall[i];
        }
    }
    ap
}

/// Evaluates predictions against ground-truth instances. `overlaps` is the
/// threshold set for the headline mean; 0.25 and 0.5 are always reported.
pub fn average_precision(
    predictions: &[InstanceProposal],
    gt: &[InstanceProposal],
    overlaps: &[f64],
) -> EvalReport {
    let mut classes: Vec<u32> = gt.iter().map(|g| g.class_id).collect();
    classes.sort_unstable();
    classes.dedup();

    let sorted_preds_of = |c: u32| -> Vec<&InstanceProposal> {
        let mut preds_c: Vec<(usize, &InstanceProposal)> = predictions
            .iter()
            .enumerate()
            .filter(|(_, p)| p.class_id == c)
            .collect();
        preds_c.sort_by(|(ia, a), (ib, b)| b.score.total_cmp(&a.score).then(ia.cmp(ib)));
        preds_c.into_iter().map(|(_, p)| p).collect()
    };
    let per_class_at = |tau: f64| -> Vec<f64> {
        classes
            .iter()
            .map(|&c| {
                let gt_c: Vec<&InstanceProposal> =
                    gt.iter().filter(|g| g.class_id == c).collect();
                class_ap(&sorted_preds_of(c), &gt_c, tau)
            })
            .collect()
    };

    // Mean precision/recall at overlap 0.5: precision over classes with
    // predictions, recall over classes with ground truth.
    let mut all_classes: Vec<u32> = classes.clone();
    all_classes.extend(predictions.iter().map(|p| p.class_id));
    all_classes.sort_unstable();
    all_classes.dedup();
    let mut precisions = Vec::new();
    let mut recalls = Vec::new();
    for &c in &all_classes {
        let gt_c: Vec<&InstanceProposal> = gt.iter().filter(|g| g.class_id == c).collect();
        let preds_c = sorted_preds_of(c);
        let tp = match_flags(&preds_c, &gt_c, 0.5)
            .iter()
            .filter(|&&t| t)
            .count();
        if !preds_c.is_empty() {
            precisions.push(tp as f64 / preds_c.len() as f64);
        }
        if !gt_c.is_empty() {
            recalls.push(tp as f64 / gt_c.len() as f64);
        }
    }

    let mean = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };

    let mut ap_by_overlap = Vec::new();
    let mut per_class_sum = vec![0.0; classes.len()];
    for &tau in overlaps {
        let per = per_class_at(tau);
        for (s, v) in per_class_sum.iter_mut().zip(per.iter()) {
            *s += v;
        }
        ap_by_overlap.push((tau, mean(&per)));
    }
    let per_50 = per_class_at(0.5);
    let per_25 = per_class_at(0.25);

    let per_class: Vec<PerClassAp> = classes
        .iter()
        .enumerate()
        .map(|(i, &class_id)| PerClassAp {
            class_id,
            ap: if overlaps.is_empty() {
                0.0
            } else {
                per_class_sum[i] / overlaps.len() as f64
            },
            ap_50: per_50[i],
            ap_25: per_25[i],
        })
        .collect();

    EvalReport {
        map: mean(&per_class.iter().map(|c| c.ap).collect::<Vec<_>>()),
        ap_50: mean(&per_50),
        ap_25: mean(&per_25),
        ap_by_overlap,
        per_class,
        mprec_50: mean(&precisions),
        mrec_50: mean(&recalls),
        n_gt_instances: gt.len(),
        n_predictions: predictions.len(),
        diagnostics: None,
    }
}

/// Mean L2 distance between predicted offsets and the ideal offsets over the
/// masked points.
pub fn offset_distance_metric(
    offsets: &[Point3],
    gt_offsets: &[Point3],
    foreground_mask: &[bool],
) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..offsets.len() {
        if foreground_mask[i] {
            sum += offsets[i].sub(&gt_offsets[i]).norm();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::InvalidCloud("no foreground points to evaluate".into()));
    }
    Ok(sum / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionMetric {
    /// Negated mean cosine similarity: -1 aligned, 0 orthogonal, +1 opposed.
    pub value: f64,
    /// Points skipped because either offset had zero length.
    pub excluded: usize,
}

/// Negated mean cosine similarity between predicted and ideal offsets.
/// Zero-length offsets on either side are excluded and counted.
pub fn offset_direction_metric(
    offsets: &[Point3],
    gt_offsets: &[Point3],
    foreground_mask: &[bool],
) -> Result<DirectionMetric> {
    let mut sum = 0.0;
    let mut n = 0usize;
    let mut excluded = 0usize;
    for i in 0..offsets.len() {
        if !foreground_mask[i] {
            continue;
        }
        let (a, b) = (offsets[i], gt_offsets[i]);
        let (na, nb) = (a.norm(), b.norm());
        if na == 0.0 || nb == 0.0 {
            excluded += 1;
            continue;
        }
        sum += a.dot(&b) / (na * nb);
        n += 1;
    }
    if n == 0 {
        return Err(Error::InvalidCloud(
            "no nonzero offset pairs to evaluate".into(),
        ));
    }
    Ok(DirectionMetric { value: -sum / n as f64, excluded })
}

/// Dice coefficient `2|P∩G| / (|P|+|G|)` over sorted point-index sets.
pub fn dice_metric(pred_mask: &[usize], gt_mask: &[usize]) -> Result<f64> {
    if gt_mask.is_empty() {
        return Err(Error::EmptyInstance);
    }
    let inter = sorted_intersection(pred_mask, gt_mask);
    Ok(2.0 * inter as f64 / (pred_mask.len() + gt_mask.len()) as f64)
}

/// Fraction of the given foreground points contained in some proposal.
pub fn foreground_coverage(proposals: &[InstanceProposal], foreground: &[usize]) -> f64 {
    if foreground.is_empty() {
        return 1.0;
    }
    let covered: std::collections::HashSet<usize> = proposals
        .iter()
        .flat_map(|p| p.point_indices.iter().copied())
        .collect();
    foreground.iter().filter(|i| covered.contains(i)).count() as f64 / foreground.len() as f64
}

/// Offset and mask-quality diagnostics for a cloud with ground truth.
pub fn diagnostics(
    cloud: &LabeledCloud,
    predictions: &[InstanceProposal],
) -> Result<OffsetDiagnostics> {
    let gt_inst = cloud.gt_instance.as_ref().ok_or(Error::MissingGroundTruth)?;
    let offsets = cloud.offsets.as_ref().ok_or(Error::MissingOffsets)?;
    let ideal = crate::cloud::ground_truth_offsets(cloud)?;
    let mask: Vec<bool> = gt_inst.iter().map(|&g| g != BACKGROUND_INSTANCE).collect();
    let distance = offset_distance_metric(offsets, &ideal, &mask)?;
    let direction = offset_direction_metric(offsets, &ideal, &mask)?;
    let gt = gt_instances(cloud)?;
    let mut dice_sum = 0.0;
    for g in &gt {
        let best = predictions
            .iter()
            .map(|p| dice_metric(&p.point_indices, &g.point_indices).unwrap_or(0.0))
            .fold(0.0, f64::max);
        dice_sum += best;
    }
    Ok(OffsetDiagnostics {
        offset_distance: distance,
        offset_direction: direction.value,
        direction_excluded: direction.excluded,
        mean_dice: if gt.is_empty() { 0.0 } else { dice_sum / gt.len() as f64 },
    })
}
