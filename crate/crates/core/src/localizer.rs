//! Toy proposal generation and refinement stage: a per-snippet linear
//! softmax classifier trained by mini-batch gradient descent, plus
//! threshold-and-group extraction of temporal proposals from its scores.
//!
//! Class index 0 is background; index `c + 1` is `labels[c]`.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::align::AlignedPair;
use crate::error::{Error, Result};
use crate::fusion::{concat_rows, rmattn_backward, rmattn_forward_rows, RMAttnParams};
use crate::io::Checkpoint;
use crate::linalg::{softmax_in_place, Matrix};
use crate::types::{FeatureSequence, GroundTruth, Proposal, ProposalSet, SnippetTiming};

#[derive(Debug, Clone, PartialEq)]
pub struct ScorerParams {
    pub labels: Vec<String>,
    /// `(C + 1) × d`
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl ScorerParams {
    pub fn zeros(labels: Vec<String>, dim: usize) -> Self {
        let k = labels.len() + 1;
        Self {
            labels,
            w: Matrix::zeros(k, dim),
            b: vec![0.0; k],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.w.cols()
    }

    pub fn write_to(&self, ck: &mut Checkpoint, prefix: &str) {
        let labels = serde_json::to_string(&self.labels).expect("labels serialize");
        ck.put_text(format!("{prefix}labels"), labels);
        ck.put_matrix(format!("{prefix}w"), self.w.clone());
        ck.put_matrix(
            format!("{prefix}b"),
            Matrix::from_vec(self.b.len(), 1, self.b.clone()).expect("bias shape"),
        );
    }

    pub fn read_from(ck: &Checkpoint, prefix: &str) -> Result<Self> {
        let labels: Vec<String> = serde_json::from_str(ck.text(&format!("{prefix}labels"))?)
            .map_err(|e| Error::Format(format!("bad label list: {e}")))?;
        let w = ck.matrix(&format!("{prefix}w"))?.clone();
        let b = ck.matrix(&format!("{prefix}b"))?.clone().into_vec();
        if w.rows() != labels.len() + 1 || b.len() != w.rows() || !w.is_finite() {
            return Err(Error::Format("scorer parameter shapes are inconsistent".into()));
        }
        Ok(Self { labels, w, b })
    }
}

/// Per-snippet class probabilities, `L × (C + 1)`, rows summing to 1.
pub fn score_rows(params: &ScorerParams, data: &Matrix) -> Result<Matrix> {
    if data.cols() != params.dim() {
        return Err(Error::validation(format!(
            "scorer expects dim {}, got {}",
            params.dim(),
            data.cols()
        )));
    }
    let k = params.w.rows();
    let mut out = Matrix::zeros(data.rows(), k);
    for t in 0..data.rows() {
        let row = out.row_mut(t);
        params.w.matvec_into(data.row(t), row);
        row.iter_mut().zip(&params.b).for_each(|(z, b)| *z += b);
        softmax_in_place(row);
    }
    Ok(out)
}

pub fn score_sequence(params: &ScorerParams, seq: &FeatureSequence) -> Result<Matrix> {
    score_rows(params, seq.data())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    /// Snippets per mini-batch; 0 means full batch.
    pub batch: usize,
    pub seed: u64,
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.5,
            epochs: 30,
            batch: 256,
            seed: 0,
            l2: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub scorer: ScorerParams,
    pub rmattn: Option<RMAttnParams>,
    /// Mean regularized loss over each epoch's mini-batches.
    pub loss_trace: Vec<f64>,
}

/// Per-snippet targets: `c + 1` when the snippet center lies inside a
/// ground-truth segment labelled `labels[c]`, else 0.
pub fn snippet_targets(gt: &GroundTruth, timing: &SnippetTiming, len: usize, labels: &[String]) -> Vec<usize> {
    (0..len)
        .map(|i| {
            let c = timing.center(i);
            gt.segments
                .iter()
                .find(|s| s.t_start <= c && c < s.t_end)
                .and_then(|s| labels.iter().position(|l| *l == s.label))
                .map_or(0, |k| k + 1)
        })
        .collect()
}

fn check_train_inputs(
    lens: impl Iterator<Item = (usize, usize)>,
    targets: &[&[usize]],
    classes: usize,
    lr: f64,
) -> Result<()> {
    if targets.is_empty() {
        return Err(Error::validation("training set is empty"));
    }
    if !(lr.is_finite() && lr >= 0.0) {
        return Err(Error::validation(format!("learning rate must be >= 0, got {lr}")));
    }
    for (i, ((len, _), t)) in lens.zip(targets).enumerate() {
        if t.len() != len {
            return Err(Error::validation(format!(
                "sequence {i}: {len} rows but {} targets",
                t.len()
            )));
        }
        if let Some(&bad) = t.iter().find(|&&y| y > classes) {
            return Err(Error::validation(format!(
                "sequence {i}: target {bad} outside 0..={classes}"
            )));
        }
    }
    Ok(())
}

/// Accumulates softmax cross-entropy gradients for a batch of fused rows.
/// Returns the summed loss and, when requested, the input gradient.
fn scorer_batch(
    params: &ScorerParams,
    rows: &Matrix,
    targets: &[usize],
    grad_w: &mut Matrix,
    grad_b: &mut [f64],
    mut grad_x: Option<&mut Matrix>,
) -> f64 {
    let mut probs = vec![0.0; params.w.rows()];
    let mut loss = 0.0;
    for (t, &y) in targets.iter().enumerate() {
        let x = rows.row(t);
        params.w.matvec_into(x, &mut probs);
        probs.iter_mut().zip(&params.b).for_each(|(z, b)| *z += b);
        softmax_in_place(&mut probs);
        loss -= probs[y].max(f64::MIN_POSITIVE).ln();
        probs[y] -= 1.0;
        grad_w.add_outer(1.0, &probs, x);
        grad_b.iter_mut().zip(&probs).for_each(|(g, d)| *g += d);
        if let Some(gx) = grad_x.as_deref_mut() {
            params.w.matvec_t_acc(&probs, gx.row_mut(t));
        }
    }
    loss
}

fn gather_rows(seqs: &[&Matrix], index: &[(usize, usize)]) -> Matrix {
    let d = seqs[index[0].0].cols();
    let mut data = Vec::with_capacity(index.len() * d);
    for &(s, t) in index {
        data.extend_from_slice(seqs[s].row(t));
    }
    Matrix::from_vec(index.len(), d, data).expect("gathered rows")
}

struct Batches {
    index: Vec<(usize, usize)>,
    batch: usize,
    rng: ChaCha8Rng,
}

impl Batches {
    fn new(lens: &[usize], batch: usize, seed: u64) -> Self {
        let index = lens
            .iter()
            .enumerate()
            .flat_map(|(s, &l)| (0..l).map(move |t| (s, t)))
            .collect::<Vec<_>>();
        let batch = if batch == 0 { index.len() } else { batch };
        Self {
            index,
            batch,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn epoch(&mut self) -> Vec<Vec<(usize, usize)>> {
        if self.batch < self.index.len() {
            self.index.shuffle(&mut self.rng);
        }
        self.index.chunks(self.batch).map(<[_]>::to_vec).collect()
    }
}

fn sgd_step(param: &mut [f64], grad: &[f64], lr: f64, inv_n: f64, l2: f64) {
    for (p, g) in param.iter_mut().zip(grad) {
        *p -= lr * (g * inv_n + l2 * *p);
    }
}

/// Trains the scorer on fixed feature sequences.
pub fn train_scorer(
    data: &[(FeatureSequence, Vec<usize>)],
    labels: Vec<String>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let targets: Vec<&[usize]> = data.iter().map(|(_, y)| y.as_slice()).collect();
    check_train_inputs(
        data.iter().map(|(s, _)| (s.len(), s.dim())),
        &targets,
        labels.len(),
        cfg.lr,
    )?;
    let dim = data[0].0.dim();
    if let Some((s, _)) = data.iter().find(|(s, _)| s.dim() != dim) {
        return Err(Error::validation(format!("mixed feature dims {dim} and {}", s.dim())));
    }
    let seqs: Vec<&Matrix> = data.iter().map(|(s, _)| s.data()).collect();
    let lens: Vec<usize> = seqs.iter().map(|m| m.rows()).collect();
    let mut scorer = ScorerParams::zeros(labels, dim);
    let mut batches = Batches::new(&lens, cfg.batch, cfg.seed);
    let mut loss_trace = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let (mut total, mut count) = (0.0, 0usize);
        for idx in batches.epoch() {
            let rows = gather_rows(&seqs, &idx);
            let ys: Vec<usize> = idx.iter().map(|&(s, t)| targets[s][t]).collect();
            let mut gw = Matrix::zeros(scorer.w.rows(), dim);
            let mut gb = vec![0.0; scorer.b.len()];
            let loss = scorer_batch(&scorer, &rows, &ys, &mut gw, &mut gb, None);
            let n = ys.len() as f64;
            total += loss / n + 0.5 * cfg.l2 * scorer.w.frobenius_sq();
            count += 1;
            sgd_step(scorer.w.as_mut_slice(), gw.as_slice(), cfg.lr, 1.0 / n, cfg.l2);
            sgd_step(&mut scorer.b, &gb, cfg.lr, 1.0 / n, 0.0);
        }
        loss_trace.push(total / count.max(1) as f64);
    }
    Ok(TrainOutcome {
        scorer,
        rmattn: None,
        loss_trace,
    })
}

/// Trains the scorer jointly with an RMAttn block on aligned pairs.
pub fn train_rmattn_scorer(
    data: &[(AlignedPair, Vec<usize>)],
    labels: Vec<String>,
    cfg: &TrainConfig,
    hidden: Option<usize>,
) -> Result<TrainOutcome> {
    let targets: Vec<&[usize]> = data.iter().map(|(_, y)| y.as_slice()).collect();
    check_train_inputs(data.iter().map(|(p, _)| (p.len(), 0)), &targets, labels.len(), cfg.lr)?;
    let (d_v, d_a) = (data[0].0.video.dim(), data[0].0.audio.dim());
    if data.iter().any(|(p, _)| p.video.dim() != d_v || p.audio.dim() != d_a) {
        return Err(Error::validation("mixed feature dims in training pairs"));
    }
    let d_h = hidden.unwrap_or_else(|| RMAttnParams::default_hidden(d_v, d_a));
    let mut attn = RMAttnParams::init(d_v, d_a, d_h, cfg.seed)?;
    let videos: Vec<&Matrix> = data.iter().map(|(p, _)| p.video.data()).collect();
    let audios: Vec<&Matrix> = data.iter().map(|(p, _)| p.audio.data()).collect();
    let lens: Vec<usize> = videos.iter().map(|m| m.rows()).collect();
    let mut scorer = ScorerParams::zeros(labels, d_v + d_a);
    let mut batches = Batches::new(&lens, cfg.batch, cfg.seed);
    let mut loss_trace = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let (mut total, mut count) = (0.0, 0usize);
        for idx in batches.epoch() {
            let v = gather_rows(&videos, &idx);
            let a = gather_rows(&audios, &idx);
            let ys: Vec<usize> = idx.iter().map(|&(s, t)| targets[s][t]).collect();
            let (fused, cache) = rmattn_forward_rows(&attn, &v, &a)?;
            let mut gw = Matrix::zeros(scorer.w.rows(), d_v + d_a);
            let mut gb = vec![0.0; scorer.b.len()];
            let mut gx = Matrix::zeros(ys.len(), d_v + d_a);
            let loss = scorer_batch(&scorer, &fused, &ys, &mut gw, &mut gb, Some(&mut gx));
            let (ga, _) = rmattn_backward(&attn, &cache, &gx)?;
            let n = ys.len() as f64;
            let reg: f64 = scorer.w.frobenius_sq()
                + [&attn.w_gv, &attn.g_v, &attn.w_ga, &attn.g_a, &attn.p, &attn.q]
                    .iter()
                    .map(|m| m.frobenius_sq())
                    .sum::<f64>();
            total += loss / n + 0.5 * cfg.l2 * reg;
            count += 1;
            sgd_step(scorer.w.as_mut_slice(), gw.as_slice(), cfg.lr, 1.0 / n, cfg.l2);
            sgd_step(&mut scorer.b, &gb, cfg.lr, 1.0 / n, 0.0);
            for ((name, p), (_, g)) in attn.tensors_mut().into_iter().zip(ga.tensors()) {
                let l2 = if name.starts_with('b') { 0.0 } else { cfg.l2 };
                sgd_step(p, g, cfg.lr, 1.0 / n, l2);
            }
        }
        loss_trace.push(total / count.max(1) as f64);
    }
    Ok(TrainOutcome {
        scorer,
        rmattn: Some(attn),
        loss_trace,
    })
}

/// Fused rows for a pair under RMAttn, or plain concatenation when no
/// block is given.
pub fn fuse_rows(pair: &AlignedPair, rmattn: Option<&RMAttnParams>) -> Result<Matrix> {
    match rmattn {
        Some(p) => Ok(rmattn_forward_rows(p, pair.video.data(), pair.audio.data())?.0),
        None => concat_rows(pair.video.data(), pair.audio.data()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalConfig {
    pub thresholds: Vec<f64>,
    /// Minimum run length in snippets.
    pub min_len: usize,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        Self {
            thresholds: vec![0.3, 0.5, 0.7],
            min_len: 1,
        }
    }
}

/// Threshold-and-group proposal extraction.
///
/// For each class `c` and threshold `τ`, every maximal run of consecutive
/// snippets with `p_c > τ` and at least `min_len` snippets becomes a
/// proposal spanning the run's first window start to its last window end,
/// scored by the mean `p_c` over the run. Identical proposals produced by
/// different thresholds are merged, keeping the higher score.
pub fn generate_proposals(
    video_id: &str,
    scores: &Matrix,
    timing: &SnippetTiming,
    labels: &[String],
    cfg: &ProposalConfig,
) -> Result<ProposalSet> {
    if cfg.thresholds.is_empty() {
        return Err(Error::validation("proposal threshold list is empty"));
    }
    if scores.cols() != labels.len() + 1 {
        return Err(Error::validation(format!(
            "score matrix has {} columns, expected {}",
            scores.cols(),
            labels.len() + 1
        )));
    }
    let min_len = cfg.min_len.max(1);
    let l = scores.rows();
    // (class, first, last) -> score
    let mut found: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
    for c in 1..scores.cols() {
        for &tau in &cfg.thresholds {
            let mut t = 0;
            while t < l {
                if scores.get(t, c) <= tau {
                    t += 1;
                    continue;
                }
                let first = t;
                let mut sum = 0.0;
                while t < l && scores.get(t, c) > tau {
                    sum += scores.get(t, c);
                    t += 1;
                }
                let run = t - first;
                if run >= min_len {
                    let score = (sum / run as f64).clamp(0.0, 1.0);
                    let slot = found.entry((c, first, t - 1)).or_insert(score);
                    *slot = slot.max(score);
                }
            }
        }
    }
    let proposals = found
        .into_iter()
        .map(|((c, first, last), score)| {
            Proposal::new(
                timing.window_start(first).max(0.0),
                timing.window_end(last),
                labels[c - 1].clone(),
                score,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProposalSet {
        video_id: video_id.to_string(),
        proposals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Modality, Segment};

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|c| format!("c{c}")).collect()
    }

    #[test]
    fn zero_weights_give_uniform_rows() {
        let params = ScorerParams::zeros(labels(3), 2);
        let scores = score_rows(&params, &Matrix::from_rows(&[vec![1.0, -4.0], vec![0.0, 9.0]]).unwrap()).unwrap();
        for t in 0..2 {
            assert!(scores.row(t).iter().all(|&p| (p - 0.25).abs() < 1e-15));
        }
    }

    #[test]
    fn score_dim_mismatch() {
        let params = ScorerParams::zeros(labels(1), 3);
        assert!(score_rows(&params, &Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn single_run_proposal() {
        // class 1 at 0.9 over snippets 2..=5, background elsewhere
        let mut rows = vec![vec![0.95, 0.05]; 8];
        for r in rows.iter_mut().take(6).skip(2) {
            *r = vec![0.1, 0.9];
        }
        let scores = Matrix::from_rows(&rows).unwrap();
        let timing = SnippetTiming::new(0.0, 1.0, 1.0).unwrap();
        let cfg = ProposalConfig {
            thresholds: vec![0.5],
            min_len: 1,
        };
        let set = generate_proposals("v", &scores, &timing, &labels(1), &cfg).unwrap();
        assert_eq!(set.proposals.len(), 1);
        let p = &set.proposals[0];
        assert_eq!((p.t_start, p.t_end, p.label.as_str()), (2.0, 6.0, "c0"));
        assert!((p.score - 0.9).abs() < 1e-12);

        // the identical run from two thresholds is emitted once
        let cfg2 = ProposalConfig {
            thresholds: vec![0.5, 0.6],
            min_len: 1,
        };
        assert_eq!(
            generate_proposals("v", &scores, &timing, &labels(1), &cfg2)
                .unwrap()
                .len(),
            1
        );
    }

    #[test]
    fn background_only_gives_nothing() {
        let scores = Matrix::from_rows(&vec![vec![1.0, 0.0, 0.0]; 5]).unwrap();
        let timing = SnippetTiming::new(0.0, 1.0, 1.0).unwrap();
        let set = generate_proposals("v", &scores, &timing, &labels(2), &ProposalConfig::default()).unwrap();
        assert!(set.is_empty());
        let empty = ProposalConfig {
            thresholds: vec![],
            min_len: 1,
        };
        assert!(generate_proposals("v", &scores, &timing, &labels(2), &empty).is_err());
    }

    #[test]
    fn targets_follow_snippet_centers() {
        let gt = GroundTruth::new("v", 10.0, vec![Segment::new(2.0, 5.0, "c1")]).unwrap();
        let timing = SnippetTiming::new(0.0, 1.0, 1.0).unwrap();
        let y = snippet_targets(&gt, &timing, 7, &labels(2));
        assert_eq!(y, vec![0, 0, 2, 2, 2, 0, 0]);
    }

    fn separable_data() -> Vec<(FeatureSequence, Vec<usize>)> {
        let timing = SnippetTiming::new(0.0, 1.0, 1.0).unwrap();
        (0..4)
            .map(|s| {
                let ys: Vec<usize> = (0..20).map(|t| (t + s) % 2).collect();
                let rows: Vec<Vec<f64>> = ys
                    .iter()
                    .enumerate()
                    .map(|(t, &y)| {
                        let jitter = 0.1 * ((t * 7 + s) % 5) as f64;
                        if y == 1 {
                            vec![1.0 + jitter, 0.5]
                        } else {
                            vec![-1.0 - jitter, 0.5]
                        }
                    })
                    .collect();
                (FeatureSequence::from_rows(Modality::Fused, &rows, timing).unwrap(), ys)
            })
            .collect()
    }

    #[test]
    fn separable_data_is_learned() {
        let data = separable_data();
        let cfg = TrainConfig {
            lr: 0.5,
            epochs: 50,
            batch: 16,
            seed: 1,
            l2: 0.0,
        };
        let out = train_scorer(&data, labels(1), &cfg).unwrap();
        let (mut hit, mut n) = (0, 0);
        for (seq, ys) in &data {
            let p = score_sequence(&out.scorer, seq).unwrap();
            for (t, &y) in ys.iter().enumerate() {
                let pred = if p.get(t, 1) > p.get(t, 0) { 1 } else { 0 };
                hit += (pred == y) as usize;
                n += 1;
            }
        }
        assert!(hit as f64 / n as f64 >= 0.99);
    }

    #[test]
    fn zero_learning_rate_keeps_init() {
        let data = separable_data();
        let cfg = TrainConfig {
            lr: 0.0,
            epochs: 3,
            batch: 8,
            seed: 1,
            l2: 0.1,
        };
        let out = train_scorer(&data, labels(1), &cfg).unwrap();
        assert_eq!(out.scorer, ScorerParams::zeros(labels(1), 2));
    }

    #[test]
    fn full_batch_loss_is_non_increasing() {
        let data = separable_data();
        let cfg = TrainConfig {
            lr: 0.2,
            epochs: 40,
            batch: 0,
            seed: 1,
            l2: 1e-3,
        };
        let out = train_scorer(&data, labels(1), &cfg).unwrap();
        for w in out.loss_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-6, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn bad_training_inputs() {
        assert!(train_scorer(&[], labels(1), &TrainConfig::default()).is_err());
        let mut data = separable_data();
        data[0].1[0] = 5;
        assert!(train_scorer(&data, labels(1), &TrainConfig::default()).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut params = ScorerParams::zeros(labels(2), 3);
        params.w.set(1, 2, -0.25);
        params.b[2] = 1.5;
        let mut ck = Checkpoint::new();
        params.write_to(&mut ck, "scorer.");
        let back = Checkpoint::decode(&ck.encode()).unwrap();
        assert_eq!(ScorerParams::read_from(&back, "scorer.").unwrap(), params);
    }
}
