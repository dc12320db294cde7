//! Evaluation metrics: coverage and weighted coverage over instances,
//! per-class precision/recall at an IoU threshold, and pointwise semantic
//! scores, with per-class breakdowns.
//!
//! Conventions the definitions leave open, fixed here: coverage matches
//! ground-truth regions against all predicted regions regardless of class;
//! precision/recall is class-constrained with greedy one-to-one matching by
//! descending IoU; classes absent from both sides are skipped; precision is
//! 0 when ground truth exists but nothing was predicted.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// A labeling of points into disjoint regions (instances), each point also
/// carrying a class id.
#[derive(Clone, Debug)]
pub struct LabeledRegions {
    num_points: usize,
    /// Sorted point indices per region, keyed order = sorted region id.
    regions: Vec<Region>,
}

#[derive(Clone, Debug)]
struct Region {
    points: Vec<usize>,
    /// Majority class over the region's points, ties to the lowest id.
    class: u32,
}

impl LabeledRegions {
    pub fn from_labels(classes: &[u32], instances: &[u32]) -> Result<Self> {
        if classes.len() != instances.len() {
            return Err(Error::Input {
                detail: format!(
                    "{} class labels vs {} instance labels",
                    classes.len(),
                    instances.len()
                ),
            });
        }
        let mut by_id: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (idx, &inst) in instances.iter().enumerate() {
            by_id.entry(inst).or_default().push(idx);
        }
        let regions = by_id
            .into_values()
            .map(|points| {
                let mut votes: BTreeMap<u32, u32> = BTreeMap::new();
                for &p in &points {
                    *votes.entry(classes[p]).or_insert(0) += 1;
                }
                let class = votes
                    .iter()
                    .fold(None::<(u32, u32)>, |acc, (&c, &n)| match acc {
                        Some((_, best)) if n <= best => acc,
                        _ => Some((c, n)),
                    })
                    .map(|(c, _)| c)
                    .unwrap_or(0);
                Region { points, class }
            })
            .collect();
        Ok(LabeledRegions {
            num_points: classes.len(),
            regions,
        })
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }

    pub fn num_regions(&self) -> usize {
        self.regions.len()
    }

    fn classes_present(&self) -> Vec<u32> {
        let mut out: Vec<u32> = self.regions.iter().map(|r| r.class).collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Intersection size of two sorted index lists.
fn intersection(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}

fn iou(a: &[usize], b: &[usize]) -> f64 {
    let inter = intersection(a, b);
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Coverage and weighted coverage: mean / size-weighted mean over
/// ground-truth regions of the best IoU against any predicted region.
pub fn coverage(gt: &LabeledRegions, pred: &LabeledRegions) -> Result<(f64, f64)> {
    if gt.num_points != pred.num_points {
        return Err(Error::Input {
            detail: format!(
                "ground truth over {} points, prediction over {}",
                gt.num_points, pred.num_points
            ),
        });
    }
    if gt.regions.is_empty() {
        return Err(Error::Input {
            detail: "ground truth has no regions".into(),
        });
    }
    let total_points: usize = gt.regions.iter().map(|r| r.points.len()).sum();
    let mut cov = 0.0;
    let mut wcov = 0.0;
    for g in &gt.regions {
        let best = pred
            .regions
            .iter()
            .map(|o| iou(&g.points, &o.points))
            .fold(0.0, f64::max);
        cov += best;
        wcov += best * g.points.len() as f64;
    }
    Ok((
        cov / gt.regions.len() as f64,
        wcov / total_points as f64,
    ))
}

/// Per-class coverage breakdown: for each class present in the ground
/// truth, coverage over that class's regions (against all predictions).
pub fn per_class_wcov(gt: &LabeledRegions, pred: &LabeledRegions) -> Vec<(u32, f64)> {
    let mut out = Vec::new();
    for class in gt.classes_present() {
        let regions: Vec<&Region> = gt.regions.iter().filter(|r| r.class == class).collect();
        let total: usize = regions.iter().map(|r| r.points.len()).sum();
        if total == 0 {
            continue;
        }
        let mut wcov = 0.0;
        for g in &regions {
            let best = pred
                .regions
                .iter()
                .map(|o| iou(&g.points, &o.points))
                .fold(0.0, f64::max);
            wcov += best * g.points.len() as f64;
        }
        out.push((class, wcov / total as f64));
    }
    out
}

/// Class-constrained instance match counts at an IoU threshold.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

/// Greedy one-to-one matching per class: candidate pairs above the IoU
/// threshold, taken in descending IoU order.
pub fn match_counts_per_class(
    gt: &LabeledRegions,
    pred: &LabeledRegions,
    iou_threshold: f64,
) -> Result<BTreeMap<u32, MatchCounts>> {
    if !(0.0 < iou_threshold && iou_threshold <= 1.0) {
        return Err(Error::Config {
            detail: format!("IoU threshold must be in (0, 1], got {iou_threshold}"),
        });
    }
    if gt.num_points != pred.num_points {
        return Err(Error::Input {
            detail: format!(
                "ground truth over {} points, prediction over {}",
                gt.num_points, pred.num_points
            ),
        });
    }
    let mut out: BTreeMap<u32, MatchCounts> = BTreeMap::new();
    for class in gt.classes_present() {
        let gt_idx: Vec<usize> = (0..gt.regions.len())
            .filter(|&i| gt.regions[i].class == class)
            .collect();
        let pred_idx: Vec<usize> = (0..pred.regions.len())
            .filter(|&i| pred.regions[i].class == class)
            .collect();

        // candidates sorted by descending IoU, ties by region order
        let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
        for (gi, &g) in gt_idx.iter().enumerate() {
            for (pi, &p) in pred_idx.iter().enumerate() {
                let v = iou(&gt.regions[g].points, &pred.regions[p].points);
                if v >= iou_threshold {
                    candidates.push((v, gi, pi));
                }
            }
        }
        candidates.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        let mut gt_used = vec![false; gt_idx.len()];
        let mut pred_used = vec![false; pred_idx.len()];
        let mut tp = 0;
        for (_, gi, pi) in candidates {
            if !gt_used[gi] && !pred_used[pi] {
                gt_used[gi] = true;
                pred_used[pi] = true;
                tp += 1;
            }
        }
        out.insert(
            class,
            MatchCounts {
                tp,
                fp: pred_idx.len() - tp,
                fn_: gt_idx.len() - tp,
            },
        );
    }
    Ok(out)
}

/// Mean per-class precision and recall from match counts.
pub fn prec_recall_from_counts(counts: &BTreeMap<u32, MatchCounts>) -> (f64, f64) {
    if counts.is_empty() {
        return (0.0, 0.0);
    }
    let mut prec = 0.0;
    let mut rec = 0.0;
    for c in counts.values() {
        prec += if c.tp + c.fp == 0 {
            0.0
        } else {
            c.tp as f64 / (c.tp + c.fp) as f64
        };
        rec += if c.tp + c.fn_ == 0 {
            0.0
        } else {
            c.tp as f64 / (c.tp + c.fn_) as f64
        };
    }
    (prec / counts.len() as f64, rec / counts.len() as f64)
}

/// Mean per-class precision/recall of predicted instances at the threshold.
pub fn prec_recall(
    gt: &LabeledRegions,
    pred: &LabeledRegions,
    iou_threshold: f64,
) -> Result<(f64, f64)> {
    Ok(prec_recall_from_counts(&match_counts_per_class(
        gt,
        pred,
        iou_threshold,
    )?))
}

/// Pointwise class confusion counts, `counts[gt][pred]`.
#[derive(Clone, Debug)]
pub struct Confusion {
    pub counts: Vec<Vec<u64>>,
}

impl Confusion {
    pub fn new(num_classes: usize) -> Self {
        Confusion {
            counts: vec![vec![0; num_classes]; num_classes],
        }
    }

    pub fn add(&mut self, gt: &[u32], pred: &[u32]) -> Result<()> {
        if gt.len() != pred.len() {
            return Err(Error::Input {
                detail: format!("{} gt labels vs {} predictions", gt.len(), pred.len()),
            });
        }
        let n_c = self.counts.len();
        for (&g, &p) in gt.iter().zip(pred.iter()) {
            if g as usize >= n_c {
                return Err(Error::Label {
                    label: g,
                    num_classes: n_c,
                });
            }
            if p as usize >= n_c {
                return Err(Error::Label {
                    label: p,
                    num_classes: n_c,
                });
            }
            self.counts[g as usize][p as usize] += 1;
        }
        Ok(())
    }

    /// (oAcc, mAcc, mIoU); means run over classes present in ground truth.
    pub fn scores(&self) -> (f64, f64, f64) {
        let n_c = self.counts.len();
        let total: u64 = self.counts.iter().flatten().sum();
        if total == 0 {
            return (0.0, 0.0, 0.0);
        }
        let correct: u64 = (0..n_c).map(|c| self.counts[c][c]).sum();
        let o_acc = correct as f64 / total as f64;

        let mut m_acc = 0.0;
        let mut m_iou = 0.0;
        let mut present = 0usize;
        for c in 0..n_c {
            let gt_total: u64 = self.counts[c].iter().sum();
            if gt_total == 0 {
                continue;
            }
            present += 1;
            let tp = self.counts[c][c];
            let fp: u64 = (0..n_c).filter(|&g| g != c).map(|g| self.counts[g][c]).sum();
            let fn_ = gt_total - tp;
            m_acc += tp as f64 / gt_total as f64;
            let denom = tp + fp + fn_;
            m_iou += if denom == 0 {
                0.0
            } else {
                tp as f64 / denom as f64
            };
        }
        if present == 0 {
            (o_acc, 0.0, 0.0)
        } else {
            (o_acc, m_acc / present as f64, m_iou / present as f64)
        }
    }

    /// Per-class IoU for classes present in ground truth.
    pub fn per_class_iou(&self) -> Vec<(u32, f64)> {
        let n_c = self.counts.len();
        let mut out = Vec::new();
        for c in 0..n_c {
            let gt_total: u64 = self.counts[c].iter().sum();
            if gt_total == 0 {
                continue;
            }
            let tp = self.counts[c][c];
            let fp: u64 = (0..n_c).filter(|&g| g != c).map(|g| self.counts[g][c]).sum();
            let fn_ = gt_total - tp;
            let denom = tp + fp + fn_;
            out.push((
                c as u32,
                if denom == 0 {
                    0.0
                } else {
                    tp as f64 / denom as f64
                },
            ));
        }
        out
    }
}

/// Pointwise semantic scores: (oAcc, mAcc, mIoU).
pub fn semantic_scores(gt: &[u32], pred: &[u32], num_classes: usize) -> Result<(f64, f64, f64)> {
    let mut confusion = Confusion::new(num_classes);
    confusion.add(gt, pred)?;
    Ok(confusion.scores())
}

/// The full metric suite with per-class breakdowns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub m_cov: f64,
    pub m_wcov: f64,
    pub m_prec: f64,
    pub m_rec: f64,
    pub m_acc: f64,
    pub m_iou: f64,
    pub o_acc: f64,
    /// (class id, weighted coverage) for classes present in ground truth.
    pub per_class_wcov: Vec<(u32, f64)>,
    /// (class id, IoU) for classes present in ground truth.
    pub per_class_iou: Vec<(u32, f64)>,
    pub scenes: usize,
    pub uncovered_points: usize,
}

impl MetricsReport {
    pub fn headline(&self) -> [(&'static str, f64); 7] {
        [
            ("mCov", self.m_cov),
            ("mWCov", self.m_wcov),
            ("mPrec", self.m_prec),
            ("mRec", self.m_rec),
            ("mAcc", self.m_acc),
            ("mIoU", self.m_iou),
            ("oAcc", self.o_acc),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.headline() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Numeric {
                    detail: format!("{name} = {v} outside [0, 1]"),
                });
            }
        }
        Ok(())
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str("metric    value\n");
        for (name, v) in self.headline() {
            out.push_str(&format!("{name:<8} {:>7.4}\n", v));
        }
        out.push_str(&format!(
            "scenes: {}   uncovered points: {}\n",
            self.scenes, self.uncovered_points
        ));
        if !self.per_class_wcov.is_empty() {
            out.push_str("\nper-class WCov\n");
            for (c, v) in &self.per_class_wcov {
                out.push_str(&format!("  class {c:<4} {v:>7.4}\n"));
            }
        }
        if !self.per_class_iou.is_empty() {
            out.push_str("\nper-class IoU\n");
            for (c, v) in &self.per_class_iou {
                out.push_str(&format!("  class {c:<4} {v:>7.4}\n"));
            }
        }
        out
    }
}

/// Accumulates metrics across scenes: coverage averages per scene,
/// precision/recall pools match counts per class, semantic scores pool the
/// confusion matrix.
pub struct MetricsAccumulator {
    iou_threshold: f64,
    confusion: Confusion,
    cov_sum: f64,
    wcov_sum: f64,
    scenes: usize,
    counts: BTreeMap<u32, MatchCounts>,
    wcov_per_class: BTreeMap<u32, (f64, usize)>,
    uncovered_points: usize,
}

impl MetricsAccumulator {
    pub fn new(num_classes: usize, iou_threshold: f64) -> Self {
        MetricsAccumulator {
            iou_threshold,
            confusion: Confusion::new(num_classes),
            cov_sum: 0.0,
            wcov_sum: 0.0,
            scenes: 0,
            counts: BTreeMap::new(),
            wcov_per_class: BTreeMap::new(),
            uncovered_points: 0,
        }
    }

    pub fn add_scene(
        &mut self,
        gt_classes: &[u32],
        gt_instances: &[u32],
        pred_classes: &[u32],
        pred_instances: &[u32],
        uncovered: usize,
    ) -> Result<()> {
        let gt = LabeledRegions::from_labels(gt_classes, gt_instances)?;
        let pred = LabeledRegions::from_labels(pred_classes, pred_instances)?;
        let (cov, wcov) = coverage(&gt, &pred)?;
        self.cov_sum += cov;
        self.wcov_sum += wcov;
        self.scenes += 1;
        self.uncovered_points += uncovered;
        for (class, c) in match_counts_per_class(&gt, &pred, self.iou_threshold)? {
            let entry = self.counts.entry(class).or_default();
            entry.tp += c.tp;
            entry.fp += c.fp;
            entry.fn_ += c.fn_;
        }
        for (class, wcov) in per_class_wcov(&gt, &pred) {
            let entry = self.wcov_per_class.entry(class).or_insert((0.0, 0));
            entry.0 += wcov;
            entry.1 += 1;
        }
        self.confusion.add(gt_classes, pred_classes)?;
        Ok(())
    }

    pub fn report(&self) -> Result<MetricsReport> {
        if self.scenes == 0 {
            return Err(Error::Input {
                detail: "no scenes accumulated".into(),
            });
        }
        let (o_acc, m_acc, m_iou) = self.confusion.scores();
        let (m_prec, m_rec) = prec_recall_from_counts(&self.counts);
        let report = MetricsReport {
            m_cov: self.cov_sum / self.scenes as f64,
            m_wcov: self.wcov_sum / self.scenes as f64,
            m_prec,
            m_rec,
            m_acc,
            m_iou,
            o_acc,
            per_class_wcov: self
                .wcov_per_class
                .iter()
                .map(|(&c, &(sum, n))| (c, sum / n as f64))
                .collect(),
            per_class_iou: self.confusion.per_class_iou(),
            scenes: self.scenes,
            uncovered_points: self.uncovered_points,
        };
        report.validate()?;
        Ok(report)
    }
}
