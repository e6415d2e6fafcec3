//! Detection evaluation: IoU-threshold matching, all-points interpolated
//! average precision, mAP sweeps over IoU thresholds, and per-class AP
//! deltas between two runs.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_records, write_records};
use crate::types::{iou_unchecked, GroundTruth, Proposal, ProposalSet};

pub const THUMOS_THRESHOLDS: [f64; 5] = [0.3, 0.4, 0.5, 0.6, 0.7];
pub const ANET_THRESHOLDS: [f64; 3] = [0.5, 0.75, 0.95];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Thumos,
    Anet,
}

impl Preset {
    pub fn thresholds(self) -> Vec<f64> {
        match self {
            Preset::Thumos => THUMOS_THRESHOLDS.to_vec(),
            Preset::Anet => ANET_THRESHOLDS.to_vec(),
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "thumos" => Ok(Preset::Thumos),
            "anet" => Ok(Preset::Anet),
            _ => Err(Error::validation(format!("unknown preset {s:?} (thumos|anet)"))),
        }
    }
}

/// Predictions in evaluation order: score descending, then earlier start,
/// then input order.
fn eval_order(preds: &[Proposal]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&i, &j| {
        preds[j]
            .score
            .total_cmp(&preds[i].score)
            .then(preds[i].t_start.total_cmp(&preds[j].t_start))
    });
    order
}

/// Marks each prediction of one video as true or false positive.
///
/// A prediction is a TP iff an unmatched ground-truth segment with the
/// same label has IoU ≥ `iou_threshold`; the highest-IoU such segment is
/// consumed. Output is in evaluation order.
pub fn match_predictions(preds: &ProposalSet, gt: &GroundTruth, iou_threshold: f64) -> Result<Vec<(Proposal, bool)>> {
    if preds.video_id != gt.video_id {
        return Err(Error::validation(format!(
            "prediction video {} does not match ground truth {}",
            preds.video_id, gt.video_id
        )));
    }
    Ok(match_flags(&preds.proposals, gt, iou_threshold)
        .into_iter()
        .map(|(i, tp)| (preds.proposals[i].clone(), tp))
        .collect())
}

fn match_flags(preds: &[Proposal], gt: &GroundTruth, iou_threshold: f64) -> Vec<(usize, bool)> {
    let mut taken = vec![false; gt.segments.len()];
    eval_order(preds)
        .into_iter()
        .map(|i| {
            let p = &preds[i];
            let mut best: Option<(usize, f64)> = None;
            for (g, seg) in gt.segments.iter().enumerate() {
                if taken[g] || seg.label != p.label {
                    continue;
                }
                let iou = iou_unchecked(p.interval(), seg.interval());
                if iou >= iou_threshold && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((g, iou));
                }
            }
            if let Some((g, _)) = best {
                taken[g] = true;
            }
            (i, best.is_some())
        })
        .collect()
}

/// All-points interpolated AP over a score-ordered TP/FP list.
///
/// Returns `None` when `num_gt == 0` (the class is excluded from mAP).
pub fn average_precision(flags: &[bool], num_gt: usize) -> Option<f64> {
    if num_gt == 0 {
        return None;
    }
    let mut precision = Vec::with_capacity(flags.len());
    let mut tp = 0usize;
    for (i, &hit) in flags.iter().enumerate() {
        tp += hit as usize;
        precision.push(tp as f64 / (i + 1) as f64);
    }
    // non-increasing envelope
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let step = 1.0 / num_gt as f64;
    let ap: f64 = flags
        .iter()
        .zip(&precision)
        .filter(|(&hit, _)| hit)
        .map(|(_, &p)| p * step)
        .sum();
    Some(ap.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub thresholds: Vec<f64>,
    /// Class → AP at each threshold (same order as `thresholds`). Only
    /// classes present in the ground truth appear.
    pub per_class_ap: BTreeMap<String, Vec<f64>>,
    pub map_at: Vec<f64>,
    pub average_map: f64,
    /// Detections whose label never occurs in the ground truth.
    pub spurious_detections: usize,
}

impl EvalReport {
    fn threshold_index(&self, iou: f64) -> Option<usize> {
        self.thresholds.iter().position(|&t| (t - iou).abs() < 1e-9)
    }

    pub fn map_at_threshold(&self, iou: f64) -> Option<f64> {
        self.threshold_index(iou).map(|i| self.map_at[i])
    }

    pub fn ap(&self, label: &str, iou: f64) -> Option<f64> {
        let i = self.threshold_index(iou)?;
        self.per_class_ap.get(label).map(|v| v[i])
    }
}

/// Evaluates predictions for many videos at each IoU threshold.
///
/// Flags are pooled per class across videos (ordered by score, then video
/// id, then within-video rank) before computing AP.
pub fn evaluate(preds: &[ProposalSet], gts: &[GroundTruth], thresholds: &[f64]) -> Result<EvalReport> {
    if thresholds.is_empty() {
        return Err(Error::validation("no IoU thresholds given"));
    }
    if let Some(t) = thresholds.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(Error::validation(format!("IoU threshold {t} outside (0, 1]")));
    }
    let gt_by_id: BTreeMap<&str, &GroundTruth> = gts.iter().map(|g| (g.video_id.as_str(), g)).collect();
    if gt_by_id.len() != gts.len() {
        return Err(Error::validation("duplicate video ids in ground truth"));
    }
    let mut unknown: Vec<&str> = preds
        .iter()
        .map(|p| p.video_id.as_str())
        .filter(|id| !gt_by_id.contains_key(id))
        .collect();
    if !unknown.is_empty() {
        unknown.sort_unstable();
        unknown.dedup();
        return Err(Error::validation(format!(
            "predictions for unknown videos: {}",
            unknown.join(",")
        )));
    }

    let mut pred_by_id: BTreeMap<&str, Vec<Proposal>> = BTreeMap::new();
    for set in preds {
        for p in &set.proposals {
            p.validate()?;
        }
        pred_by_id
            .entry(set.video_id.as_str())
            .or_default()
            .extend(set.proposals.iter().cloned());
    }

    let classes: BTreeSet<&str> = gts
        .iter()
        .flat_map(|g| g.segments.iter().map(|s| s.label.as_str()))
        .collect();
    let mut num_gt: HashMap<&str, usize> = HashMap::new();
    for s in gts.iter().flat_map(|g| &g.segments) {
        *num_gt.entry(s.label.as_str()).or_default() += 1;
    }
    let spurious_detections = pred_by_id
        .values()
        .flatten()
        .filter(|p| !classes.contains(p.label.as_str()))
        .count();

    let mut per_class_ap: BTreeMap<String, Vec<f64>> = classes
        .iter()
        .map(|c| (c.to_string(), Vec::with_capacity(thresholds.len())))
        .collect();
    let mut map_at = Vec::with_capacity(thresholds.len());
    for &thr in thresholds {
        // class -> (score, video rank, within-video rank, tp)
        let mut pooled: HashMap<&str, Vec<(f64, usize, usize, bool)>> = HashMap::new();
        for (v, (id, props)) in pred_by_id.iter().enumerate() {
            let gt = gt_by_id[id];
            for (rank, (i, tp)) in match_flags(props, gt, thr).into_iter().enumerate() {
                let p = &props[i];
                if classes.contains(p.label.as_str()) {
                    pooled.entry(p.label.as_str()).or_default().push((p.score, v, rank, tp));
                }
            }
        }
        let mut sum = 0.0;
        for class in &classes {
            let mut dets = pooled.remove(class).unwrap_or_default();
            dets.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let flags: Vec<bool> = dets.iter().map(|d| d.3).collect();
            let ap = average_precision(&flags, num_gt[class]).unwrap_or(0.0);
            per_class_ap.get_mut(*class).unwrap().push(ap);
            sum += ap;
        }
        map_at.push(if classes.is_empty() {
            0.0
        } else {
            sum / classes.len() as f64
        });
    }
    let average_map = map_at.iter().sum::<f64>() / map_at.len() as f64;
    Ok(EvalReport {
        thresholds: thresholds.to_vec(),
        per_class_ap,
        map_at,
        average_map,
        spurious_detections,
    })
}

/// `AP_with − AP_without` per class at one threshold, sorted descending
/// (ties by class name).
pub fn per_class_delta(with_audio: &EvalReport, video_only: &EvalReport, iou: f64) -> Result<Vec<(String, f64)>> {
    let (Some(i), Some(j)) = (with_audio.threshold_index(iou), video_only.threshold_index(iou)) else {
        return Err(Error::validation(format!("threshold {iou} missing from a report")));
    };
    let a: BTreeSet<&String> = with_audio.per_class_ap.keys().collect();
    let b: BTreeSet<&String> = video_only.per_class_ap.keys().collect();
    if a != b {
        let diff: Vec<&str> = a.symmetric_difference(&b).map(|s| s.as_str()).collect();
        return Err(Error::validation(format!("class sets differ: {}", diff.join(","))));
    }
    let mut deltas: Vec<(String, f64)> = with_audio
        .per_class_ap
        .iter()
        .map(|(c, aps)| (c.clone(), aps[i] - video_only.per_class_ap[c][j]))
        .collect();
    deltas.sort_by(|x, y| y.1.total_cmp(&x.1).then_with(|| x.0.cmp(&y.0)));
    Ok(deltas)
}

pub fn write_delta_csv(deltas: &[(String, f64)], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("class,delta_ap\n");
    for (c, d) in deltas {
        let quoted = if c.contains([',', '"', '\n']) {
            format!("\"{}\"", c.replace('"', "\"\""))
        } else {
            c.clone()
        };
        out.push_str(&format!("{quoted},{d}\n"));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case", deny_unknown_fields)]
enum ReportRecord {
    Summary {
        thresholds: Vec<f64>,
        average_map: f64,
        spurious_detections: usize,
    },
    Map {
        iou: f64,
        map: f64,
    },
    ClassAp {
        label: String,
        iou: f64,
        ap: f64,
    },
}

/// Writes a report as newline-delimited records: one `summary`, one `map`
/// per threshold, then one `class_ap` per (class, threshold).
pub fn write_report(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    let mut records = vec![ReportRecord::Summary {
        thresholds: report.thresholds.clone(),
        average_map: report.average_map,
        spurious_detections: report.spurious_detections,
    }];
    records.extend(
        report
            .thresholds
            .iter()
            .zip(&report.map_at)
            .map(|(&iou, &map)| ReportRecord::Map { iou, map }),
    );
    for (label, aps) in &report.per_class_ap {
        for (&iou, &ap) in report.thresholds.iter().zip(aps) {
            records.push(ReportRecord::ClassAp {
                label: label.clone(),
                iou,
                ap,
            });
        }
    }
    write_records(path.as_ref(), records)
}

pub fn read_report(path: impl AsRef<Path>) -> Result<EvalReport> {
    let path = path.as_ref();
    let mut summary = None;
    let mut maps = Vec::new();
    let mut aps: Vec<(String, f64, f64)> = Vec::new();
    read_records(path, |rec: ReportRecord, _| {
        match rec {
            ReportRecord::Summary {
                thresholds,
                average_map,
                spurious_detections,
            } => {
                if summary.is_some() {
                    return Err("duplicate summary record".to_string());
                }
                summary = Some((thresholds, average_map, spurious_detections));
            }
            ReportRecord::Map { iou, map } => maps.push((iou, map)),
            ReportRecord::ClassAp { label, iou, ap } => aps.push((label, iou, ap)),
        }
        Ok(())
    })?;
    let (thresholds, average_map, spurious_detections) =
        summary.ok_or_else(|| Error::Format(format!("{}: report has no summary record", path.display())))?;
    let idx = |iou: f64| {
        thresholds
            .iter()
            .position(|&t| t == iou)
            .ok_or_else(|| Error::Format(format!("{}: threshold {iou} not in summary", path.display())))
    };
    let mut map_at = vec![f64::NAN; thresholds.len()];
    for (iou, map) in maps {
        map_at[idx(iou)?] = map;
    }
    let mut per_class_ap: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (label, iou, ap) in aps {
        let i = idx(iou)?;
        per_class_ap
            .entry(label)
            .or_insert_with(|| vec![f64::NAN; thresholds.len()])[i] = ap;
    }
    if map_at.iter().chain(per_class_ap.values().flatten()).any(|v| v.is_nan()) {
        return Err(Error::Format(format!("{}: report is missing entries", path.display())));
    }
    Ok(EvalReport {
        thresholds,
        per_class_ap,
        map_at,
        average_map,
        spurious_detections,
    })
}
