//! End-to-end wiring: alignment, fusion scheme, scorer training, proposal
//! inference and checkpointing for a set of episodes.

use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::{align, AlignMethod, AlignedPair, DEFAULT_AUDIO_WINDOW};
use crate::error::{Error, Result};
use crate::fusion::RMAttnParams;
use crate::io::Checkpoint;
use crate::linalg::Matrix;
use crate::localizer::{
    fuse_rows, generate_proposals, score_rows, snippet_targets, train_rmattn_scorer, train_scorer, ProposalConfig,
    ScorerParams, TrainConfig, TrainOutcome,
};
use crate::nms::{nms, pool_and_nms};
use crate::synth::Episode;
use crate::types::{FeatureSequence, Modality, ProposalSet, SnippetTiming};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    VideoOnly,
    AudioOnly,
    Concat,
    Rmattn,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::VideoOnly, Scheme::AudioOnly, Scheme::Concat, Scheme::Rmattn];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::VideoOnly => "video_only",
            Scheme::AudioOnly => "audio_only",
            Scheme::Concat => "concat",
            Scheme::Rmattn => "rmattn",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "video_only" | "video" => Ok(Scheme::VideoOnly),
            "audio_only" | "audio" => Ok(Scheme::AudioOnly),
            "concat" => Ok(Scheme::Concat),
            "rmattn" => Ok(Scheme::Rmattn),
            _ => Err(Error::validation(format!(
                "unknown scheme {s:?} (video_only|audio_only|concat|rmattn)"
            ))),
        }
    }
}

/// Flat run configuration (TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub scheme: Scheme,
    /// Alignment used by the fused schemes.
    pub align: AlignMethod,
    /// Centering window in seconds for `align = "paired"`.
    pub align_window: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub l2: f64,
    /// RMAttn hidden width; 0 selects `min(d_v, d_a)`.
    pub hidden: usize,
    pub thresholds: Vec<f64>,
    pub min_len: usize,
    /// IoU threshold of the NMS applied to each video's proposals.
    pub nms_iou: f64,
    /// Cap on proposals per video after NMS; 0 means no cap.
    pub max_proposals: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let proposals = ProposalConfig::default();
        Self {
            scheme: Scheme::Concat,
            align: AlignMethod::Paired,
            align_window: DEFAULT_AUDIO_WINDOW,
            lr: train.lr,
            epochs: train.epochs,
            batch: train.batch,
            seed: train.seed,
            l2: train.l2,
            hidden: 0,
            thresholds: proposals.thresholds,
            min_len: 2,
            nms_iou: 0.5,
            max_proposals: 0,
        }
    }
}

impl PipelineConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            epochs: self.epochs,
            batch: self.batch,
            seed: self.seed,
            l2: self.l2,
        }
    }

    pub fn proposal_config(&self) -> ProposalConfig {
        ProposalConfig {
            thresholds: self.thresholds.clone(),
            min_len: self.min_len,
        }
    }

    pub fn max_out(&self) -> Option<usize> {
        (self.max_proposals > 0).then_some(self.max_proposals)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Model input for one episode: feature rows (or an aligned pair for
/// RMAttn) on a single timing grid.
enum Prepared {
    Single(FeatureSequence),
    Pair(AlignedPair),
}

impl Prepared {
    fn timing(&self) -> &SnippetTiming {
        match self {
            Prepared::Single(s) => s.timing(),
            Prepared::Pair(p) => p.video.timing(),
        }
    }

    fn len(&self) -> usize {
        match self {
            Prepared::Single(s) => s.len(),
            Prepared::Pair(p) => p.len(),
        }
    }
}

fn prepare(ep: &Episode, cfg: &PipelineConfig) -> Result<Prepared> {
    Ok(match cfg.scheme {
        Scheme::VideoOnly => Prepared::Single(ep.video.clone()),
        Scheme::AudioOnly => Prepared::Single(ep.audio.clone()),
        Scheme::Concat => {
            let pair = align(cfg.align, &ep.audio, &ep.video, cfg.align_window)?;
            Prepared::Single(crate::fusion::concat_fuse(&pair)?)
        }
        Scheme::Rmattn => Prepared::Pair(align(cfg.align, &ep.audio, &ep.video, cfg.align_window)?),
    })
}

/// Sorted class vocabulary from the training annotations.
pub fn label_vocabulary(episodes: &[Episode]) -> Vec<String> {
    episodes
        .iter()
        .flat_map(|e| e.gt.segments.iter().map(|s| s.label.clone()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: PipelineConfig,
    pub scorer: ScorerParams,
    pub rmattn: Option<RMAttnParams>,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: Model,
    pub loss_trace: Vec<f64>,
}

pub fn train(episodes: &[Episode], cfg: &PipelineConfig) -> Result<Trained> {
    if episodes.is_empty() {
        return Err(Error::validation("no training episodes"));
    }
    let labels = label_vocabulary(episodes);
    let prepared: Vec<Prepared> = episodes.iter().map(|e| prepare(e, cfg)).collect::<Result<_>>()?;
    let targets: Vec<Vec<usize>> = episodes
        .iter()
        .zip(&prepared)
        .map(|(e, p)| snippet_targets(&e.gt, p.timing(), p.len(), &labels))
        .collect();
    let tc = cfg.train_config();
    let TrainOutcome {
        scorer,
        rmattn,
        loss_trace,
    } = if cfg.scheme == Scheme::Rmattn {
        let data: Vec<(AlignedPair, Vec<usize>)> = prepared
            .into_iter()
            .zip(targets)
            .map(|(p, y)| match p {
                Prepared::Pair(pair) => (pair, y),
                Prepared::Single(_) => unreachable!("rmattn prepares pairs"),
            })
            .collect();
        let hidden = (cfg.hidden > 0).then_some(cfg.hidden);
        train_rmattn_scorer(&data, labels, &tc, hidden)?
    } else {
        let data: Vec<(FeatureSequence, Vec<usize>)> = prepared
            .into_iter()
            .zip(targets)
            .map(|(p, y)| match p {
                Prepared::Single(s) => (s, y),
                Prepared::Pair(_) => unreachable!("only rmattn prepares pairs"),
            })
            .collect();
        train_scorer(&data, labels, &tc)?
    };
    Ok(Trained {
        model: Model {
            config: cfg.clone(),
            scorer,
            rmattn,
        },
        loss_trace,
    })
}

impl Model {
    /// Per-snippet class probabilities and their timing for one episode.
    pub fn score(&self, ep: &Episode) -> Result<(Matrix, SnippetTiming)> {
        let prepared = prepare(ep, &self.config)?;
        let rows = match &prepared {
            Prepared::Single(s) => s.data().clone(),
            Prepared::Pair(p) => fuse_rows(p, self.rmattn.as_ref())?,
        };
        Ok((score_rows(&self.scorer, &rows)?, *prepared.timing()))
    }

    pub fn infer(&self, ep: &Episode) -> Result<ProposalSet> {
        let (scores, timing) = self.score(ep)?;
        let raw = generate_proposals(
            &ep.id,
            &scores,
            &timing,
            &self.scorer.labels,
            &self.config.proposal_config(),
        )?;
        nms(&raw, self.config.nms_iou, self.config.max_out())
    }

    /// Runs inference on every episode using the current rayon pool;
    /// output order follows `episodes`.
    pub fn infer_all(&self, episodes: &[Episode]) -> Result<Vec<ProposalSet>> {
        episodes.par_iter().map(|e| self.infer(e)).collect()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.put_text("config", self.config.to_toml());
        self.scorer.write_to(&mut ck, "scorer.");
        if let Some(p) = &self.rmattn {
            p.write_to(&mut ck, "rmattn.");
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let config = PipelineConfig::from_toml(ck.text("config")?)?;
        let scorer = ScorerParams::read_from(ck, "scorer.")?;
        let rmattn = if ck.has("rmattn.topology") {
            Some(RMAttnParams::read_from(ck, "rmattn.")?)
        } else {
            None
        };
        if (config.scheme == Scheme::Rmattn) != rmattn.is_some() {
            return Err(Error::Format("checkpoint scheme and rmattn sections disagree".into()));
        }
        Ok(Self { config, scorer, rmattn })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().write(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::read(path)?)
    }
}

/// Per-video pooled NMS over several runs' proposals. Videos appear in the
/// order of first occurrence; a video missing from a run contributes nothing.
pub fn fuse_decisions(runs: &[Vec<ProposalSet>], iou: f64, max_out: Option<usize>) -> Result<Vec<ProposalSet>> {
    let mut ids: Vec<&str> = Vec::new();
    for set in runs.iter().flatten() {
        if !ids.contains(&set.video_id.as_str()) {
            ids.push(&set.video_id);
        }
    }
    ids.into_iter()
        .map(|id| {
            let sets: Vec<ProposalSet> = runs.iter().flatten().filter(|s| s.video_id == id).cloned().collect();
            pool_and_nms(&sets, iou, max_out)
        })
        .collect()
}

/// Checks a feature sequence carries the expected modality tag.
pub fn expect_modality(seq: &FeatureSequence, m: Modality) -> Result<()> {
    if seq.modality() != m {
        return Err(Error::validation(format!(
            "expected {m} features, got {}",
            seq.modality()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_episodes, SynthConfig};

    #[test]
    fn config_toml_round_trip() {
        let cfg = PipelineConfig {
            scheme: Scheme::Rmattn,
            align: AlignMethod::AvgTrim,
            ..PipelineConfig::default()
        };
        assert_eq!(PipelineConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert!(PipelineConfig::from_toml("nonsense_key = 3").is_err());
        assert_eq!(PipelineConfig::from_toml("").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn checkpoint_round_trip_and_determinism() {
        let synth = SynthConfig::default();
        let train_eps = generate_episodes(&synth, 0..6).unwrap();
        let test_eps = generate_episodes(&synth, 6..8).unwrap();
        let cfg = PipelineConfig {
            scheme: Scheme::Rmattn,
            epochs: 3,
            ..PipelineConfig::default()
        };
        let a = train(&train_eps, &cfg).unwrap().model;
        let b = train(&train_eps, &cfg).unwrap().model;
        assert_eq!(a.scorer, b.scorer);
        let back = Model::from_checkpoint(&Checkpoint::decode(&a.to_checkpoint().encode()).unwrap()).unwrap();
        assert_eq!(back.infer_all(&test_eps).unwrap(), a.infer_all(&test_eps).unwrap());
    }
}
