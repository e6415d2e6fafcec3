//! Decision-level fusion: pool proposals from several modalities and reduce
//! them with class-wise greedy non-maximum suppression.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::types::{iou_unchecked, Proposal, ProposalSet};

/// Ranking used for greedy selection: higher score first, then earlier
/// start, then longer duration. Callers break remaining ties by input order.
pub(crate) fn rank_order(a: &Proposal, b: &Proposal) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.t_start.total_cmp(&b.t_start))
        .then(b.duration().total_cmp(&a.duration()))
}

fn check_threshold(iou_threshold: f64) -> Result<()> {
    if !(iou_threshold > 0.0 && iou_threshold < 1.0) {
        return Err(Error::validation(format!(
            "nms iou threshold must lie in (0, 1), got {iou_threshold}"
        )));
    }
    Ok(())
}

/// Greedy per-class NMS. Output is in selection order (descending rank).
pub fn nms(set: &ProposalSet, iou_threshold: f64, max_out: Option<usize>) -> Result<ProposalSet> {
    check_threshold(iou_threshold)?;
    for p in &set.proposals {
        p.validate()?;
    }
    let props = &set.proposals;
    let mut order: Vec<usize> = (0..props.len()).collect();
    // stable sort keeps input order as the last tie-break
    order.sort_by(|&i, &j| rank_order(&props[i], &props[j]));

    let limit = max_out.unwrap_or(usize::MAX);
    let mut keep: Vec<usize> = Vec::new();
    let mut suppressed = vec![false; props.len()];
    for (pos, &i) in order.iter().enumerate() {
        if keep.len() >= limit {
            break;
        }
        if suppressed[i] {
            continue;
        }
        keep.push(i);
        for &j in &order[pos + 1..] {
            if !suppressed[j]
                && props[j].label == props[i].label
                && iou_unchecked(props[i].interval(), props[j].interval()) > iou_threshold
            {
                suppressed[j] = true;
            }
        }
    }
    Ok(ProposalSet {
        video_id: set.video_id.clone(),
        proposals: keep.into_iter().map(|i| props[i].clone()).collect(),
    })
}

/// Concatenates the per-modality proposal sets of one video and applies
/// [`nms`] to the pool.
pub fn pool_and_nms(sets: &[ProposalSet], iou_threshold: f64, max_out: Option<usize>) -> Result<ProposalSet> {
    let first = sets
        .first()
        .ok_or_else(|| Error::validation("pool_and_nms needs at least one proposal set"))?;
    let mixed: Vec<&str> = sets
        .iter()
        .filter(|s| s.video_id != first.video_id)
        .map(|s| s.video_id.as_str())
        .collect();
    if !mixed.is_empty() {
        return Err(Error::validation(format!(
            "cannot pool proposals of different videos: {} vs {}",
            first.video_id,
            mixed.join(",")
        )));
    }
    let pooled = ProposalSet {
        video_id: first.video_id.clone(),
        proposals: sets.iter().flat_map(|s| s.proposals.iter().cloned()).collect(),
    };
    nms(&pooled, iou_threshold, max_out)
}
