//! Independent reference implementations shared by the integration tests
//! and the acceptance suite. Written directly from the definitions, without
//! calling into the crate's algorithms.
#![allow(dead_code)]

use std::path::PathBuf;

use talfuse::{Proposal, ProposalSet};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join(rel)
}

/// Length of the intersection over length of the union, with the union
/// measured as the covered part of the line.
pub fn iou_oracle(a: (f64, f64), b: (f64, f64)) -> f64 {
    let inter = (a.1.min(b.1) - a.0.max(b.0)).max(0.0);
    let union = if inter > 0.0 {
        a.1.max(b.1) - a.0.min(b.0)
    } else {
        (a.1 - a.0) + (b.1 - b.0)
    };
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// True when `a` outranks `b`: higher score, earlier start, longer, then
/// earlier input position.
fn outranks(a: (usize, &Proposal), b: (usize, &Proposal)) -> bool {
    let (ia, pa) = a;
    let (ib, pb) = b;
    if pa.score != pb.score {
        return pa.score > pb.score;
    }
    if pa.t_start != pb.t_start {
        return pa.t_start < pb.t_start;
    }
    let (da, db) = (pa.t_end - pa.t_start, pb.t_end - pb.t_start);
    if da != db {
        return da > db;
    }
    ia < ib
}

/// Greedy NMS by repeated arg-max over the survivors.
pub fn nms_oracle(props: &[Proposal], thr: f64, max_out: Option<usize>) -> Vec<Proposal> {
    let mut alive: Vec<usize> = (0..props.len()).collect();
    let mut out = Vec::new();
    while !alive.is_empty() && out.len() < max_out.unwrap_or(usize::MAX) {
        let mut best = alive[0];
        for &i in &alive[1..] {
            if outranks((i, &props[i]), (best, &props[best])) {
                best = i;
            }
        }
        let b = &props[best];
        alive.retain(|&i| {
            i != best && !(props[i].label == b.label && iou_oracle(props[i].interval(), b.interval()) > thr)
        });
        out.push(b.clone());
    }
    out
}

pub fn pooled(sets: &[ProposalSet]) -> Vec<Proposal> {
    sets.iter().flat_map(|s| s.proposals.iter().cloned()).collect()
}

/// Area under the interpolated PR curve as a sum of rectangles: each true
/// positive adds `1/num_gt` recall at the best precision reachable at that
/// recall or beyond.
pub fn ap_oracle(flags: &[bool], num_gt: usize) -> f64 {
    let prec: Vec<f64> = (0..flags.len())
        .map(|i| flags[..=i].iter().filter(|&&f| f).count() as f64 / (i + 1) as f64)
        .collect();
    let mut area = 0.0;
    for k in 0..flags.len() {
        if flags[k] {
            let best = prec[k..].iter().cloned().fold(0.0, f64::max);
            area += best / num_gt as f64;
        }
    }
    area
}

/// Single-class AP for one video by exhaustive matching in score order,
/// used to cross-check `evaluate`.
pub fn single_video_ap(preds: &[Proposal], gt: &[(f64, f64)], thr: f64) -> f64 {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&i, &j| {
        preds[j]
            .score
            .partial_cmp(&preds[i].score)
            .unwrap()
            .then(preds[i].t_start.partial_cmp(&preds[j].t_start).unwrap())
    });
    let mut used = vec![false; gt.len()];
    let mut flags = Vec::new();
    for i in order {
        let mut best: Option<(usize, f64)> = None;
        for (g, &seg) in gt.iter().enumerate() {
            let iou = iou_oracle(preds[i].interval(), seg);
            if !used[g] && iou >= thr && best.is_none_or(|(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        if let Some((g, _)) = best {
            used[g] = true;
        }
        flags.push(best.is_some());
    }
    ap_oracle(&flags, gt.len())
}
