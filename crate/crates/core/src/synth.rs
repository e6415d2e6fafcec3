//! Synthetic audio/video feature streams with labelled action segments.
//!
//! Background snippets are isotropic Gaussian noise. Inside an action of
//! class `c` the video rows carry a class signature. The audio rows carry
//! the class's audio signature with probability `ρ` (per segment), with
//! extra transient energy on the segment's first and last audio snippets.
//! Independently, each episode carries ambient audio bursts (unrelated to
//! any action) whose expected count is `(1 − ρ)` times the expected action
//! count; with `ρ = 0` audio is independent of the labels.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_features, read_records, write_features, write_ground_truth, write_records};
use crate::linalg::Matrix;
use crate::types::{FeatureSequence, GroundTruth, Modality, Segment, SnippetTiming};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub d_v: usize,
    pub d_a: usize,
    pub video_hop: f64,
    pub video_window: f64,
    pub audio_hop: f64,
    pub audio_window: f64,
    /// Episode length in video snippets, inclusive range.
    pub episode_len: (usize, usize),
    pub actions_per_episode: (usize, usize),
    /// Action length in video snippets, inclusive range.
    pub action_len: (usize, usize),
    /// Probability that a segment's audio carries its class signature (ρ).
    pub audio_informativeness: f64,
    /// Extra audio energy on segment onset/offset snippets (β).
    pub transient_boost: f64,
    /// Background noise standard deviation (σ).
    pub noise: f64,
    /// Norm of the class video signature.
    pub video_signal: f64,
    /// Norm of the class audio signature.
    pub audio_signal: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_classes: 5,
            d_v: 16,
            d_a: 8,
            video_hop: 1.0,
            video_window: 1.0,
            audio_hop: 1.0,
            audio_window: 1.0,
            episode_len: (48, 80),
            actions_per_episode: (1, 3),
            action_len: (4, 12),
            audio_informativeness: 0.9,
            transient_boost: 1.5,
            noise: 1.0,
            video_signal: 3.0,
            audio_signal: 3.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.num_classes == 0 || self.d_v == 0 || self.d_a == 0 {
            return bad("num_classes, d_v and d_a must be >= 1".into());
        }
        for (name, (lo, hi)) in [
            ("episode_len", self.episode_len),
            ("actions_per_episode", self.actions_per_episode),
            ("action_len", self.action_len),
        ] {
            if lo > hi {
                return bad(format!("{name} range [{lo}, {hi}] is empty"));
            }
        }
        if self.episode_len.0 == 0 || self.action_len.0 == 0 {
            return bad("episode_len and action_len must start at >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.audio_informativeness) {
            return bad(format!(
                "audio_informativeness must lie in [0, 1], got {}",
                self.audio_informativeness
            ));
        }
        if !(self.noise.is_finite() && self.noise > 0.0) {
            return bad(format!("noise must be > 0, got {}", self.noise));
        }
        for (name, v) in [
            ("transient_boost", self.transient_boost),
            ("video_signal", self.video_signal),
            ("audio_signal", self.audio_signal),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be >= 0, got {v}"));
            }
        }
        SnippetTiming::new(0.0, self.video_hop, self.video_window)?;
        SnippetTiming::new(0.0, self.audio_hop, self.audio_window)?;
        let (n, len) = (self.actions_per_episode.1, self.action_len.1);
        let worst = n * len + n.saturating_sub(1);
        if worst > self.episode_len.0 {
            return Err(Error::Generation(format!(
                "infeasible packing: {n} actions of up to {len} snippets need {worst} snippets, \
                 shortest episode has {}",
                self.episode_len.0
            )));
        }
        Ok(())
    }

    pub fn labels(&self) -> Vec<String> {
        (0..self.num_classes).map(class_label).collect()
    }
}

/// Dataset generation job: split sizes plus the generator config, as one
/// flat TOML table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthJob {
    pub n_train: usize,
    pub n_test: usize,
    #[serde(flatten)]
    pub dataset: SynthConfig,
}

impl Default for SynthJob {
    fn default() -> Self {
        Self {
            n_train: 200,
            n_test: 100,
            dataset: SynthConfig::default(),
        }
    }
}

impl SynthJob {
    /// Parses a flat table; unknown keys are rejected.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg_err = |e: &dyn std::fmt::Display| Error::Config(e.to_string());
        let mut table: toml::Table = toml::from_str(text).map_err(|e| cfg_err(&e))?;
        let mut job = Self::default();
        for (key, slot) in [("n_train", &mut job.n_train), ("n_test", &mut job.n_test)] {
            if let Some(v) = table.remove(key) {
                *slot = v.try_into().map_err(|e| cfg_err(&format!("{key}: {e}")))?;
            }
        }
        job.dataset = table.try_into().map_err(|e| cfg_err(&e))?;
        Ok(job)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("job serializes")
    }

    pub fn run(&self, out_dir: impl AsRef<Path>) -> Result<Manifest> {
        generate_dataset(&self.dataset, self.n_train, self.n_test, out_dir)
    }
}

pub fn class_label(c: usize) -> String {
    format!("class_{c}")
}

pub fn episode_id(index: u64) -> String {
    format!("ep{index:05}")
}

/// Per-dataset constant vectors, derived from the config seed alone.
struct Signatures {
    video: Vec<Vec<f64>>,
    audio: Vec<Vec<f64>>,
    ambient: Vec<Vec<f64>>,
}

fn random_direction(rng: &mut ChaCha8Rng, dim: usize, norm: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.iter_mut().for_each(|x| *x *= norm / n);
    v
}

impl Signatures {
    fn new(cfg: &SynthConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(u64::MAX);
        let c = cfg.num_classes;
        Self {
            video: (0..c)
                .map(|_| random_direction(&mut rng, cfg.d_v, cfg.video_signal))
                .collect(),
            audio: (0..c)
                .map(|_| random_direction(&mut rng, cfg.d_a, cfg.audio_signal))
                .collect(),
            ambient: (0..c)
                .map(|_| random_direction(&mut rng, cfg.d_a, cfg.audio_signal))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub id: String,
    pub video: FeatureSequence,
    pub audio: FeatureSequence,
    pub gt: GroundTruth,
}

fn noise_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, sigma: f64) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("noise shape")
}

fn add_row(m: &mut Matrix, i: usize, v: &[f64], scale: f64) {
    m.row_mut(i).iter_mut().zip(v).for_each(|(x, s)| *x += scale * s);
}

/// Rounds every entry to `f32` so the episode survives the feature file
/// format unchanged.
fn to_storage_precision(m: &mut Matrix) {
    m.as_mut_slice().iter_mut().for_each(|v| *v = *v as f32 as f64);
}

/// Generates episode `index` of the dataset described by `cfg`.
pub fn generate_episode(cfg: &SynthConfig, index: u64) -> Result<Episode> {
    cfg.validate()?;
    let sig = Signatures::new(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);

    let len = rng.random_range(cfg.episode_len.0..=cfg.episode_len.1);
    let n = rng.random_range(cfg.actions_per_episode.0..=cfg.actions_per_episode.1);
    let lens: Vec<usize> = (0..n)
        .map(|_| rng.random_range(cfg.action_len.0..=cfg.action_len.1))
        .collect();
    let classes: Vec<usize> = (0..n).map(|_| rng.random_range(0..cfg.num_classes)).collect();

    // spread the free snippets over n + 1 gaps, keeping >= 1 between actions
    let free = len - lens.iter().sum::<usize>() - n.saturating_sub(1);
    let mut cuts: Vec<usize> = (0..n).map(|_| rng.random_range(0..=free)).collect();
    cuts.sort_unstable();
    let mut spans = Vec::with_capacity(n);
    let (mut cursor, mut prev_cut) = (0usize, 0usize);
    for (k, (&l, &cut)) in lens.iter().zip(&cuts).enumerate() {
        cursor += cut - prev_cut + usize::from(k > 0);
        prev_cut = cut;
        spans.push((cursor, cursor + l));
        cursor += l;
    }

    let vt = SnippetTiming::new(0.0, cfg.video_hop, cfg.video_window)?;
    let duration = vt.window_end(len - 1);
    let at = SnippetTiming::new(0.0, cfg.audio_hop, cfg.audio_window)?;
    let len_a = (((duration - cfg.audio_window) / cfg.audio_hop).floor() as usize + 1).max(1);

    let mut video = noise_matrix(&mut rng, len, cfg.d_v, cfg.noise);
    let mut audio = noise_matrix(&mut rng, len_a, cfg.d_a, cfg.noise);
    let mut segments = Vec::with_capacity(n);
    for (&(s, e), &c) in spans.iter().zip(&classes) {
        let seg = Segment::new(vt.window_start(s), vt.window_end(e - 1), class_label(c));
        for i in s..e {
            add_row(&mut video, i, &sig.video[c], 1.0);
        }
        let informative = rng.random_bool(cfg.audio_informativeness);
        if informative {
            let inside: Vec<usize> = (0..len_a)
                .filter(|&j| {
                    let t = at.center(j);
                    seg.t_start <= t && t < seg.t_end
                })
                .collect();
            add_burst(&mut audio, &inside, &sig.audio[c], cfg);
        }
        segments.push(seg);
    }

    // ambient bursts, placed independently of the actions with wrap-around
    // so every audio snippet is equally likely to be covered
    for _ in 0..n_draw(&mut rng, cfg.actions_per_episode) {
        if !rng.random_bool(1.0 - cfg.audio_informativeness) {
            continue;
        }
        let burst_len = rng.random_range(cfg.action_len.0..=cfg.action_len.1);
        let span = ((burst_len as f64 * cfg.video_hop / cfg.audio_hop).round() as usize).clamp(1, len_a);
        let start = rng.random_range(0..len_a);
        let idx: Vec<usize> = (0..span).map(|k| (start + k) % len_a).collect();
        let kind = rng.random_range(0..sig.ambient.len());
        add_burst(&mut audio, &idx, &sig.ambient[kind], cfg);
    }

    to_storage_precision(&mut video);
    to_storage_precision(&mut audio);
    let id = episode_id(index);
    Ok(Episode {
        video: FeatureSequence::new(Modality::Video, video, vt)?,
        audio: FeatureSequence::new(Modality::Audio, audio, at)?,
        gt: GroundTruth::new(id.clone(), duration, segments)?,
        id,
    })
}

fn n_draw(rng: &mut ChaCha8Rng, (lo, hi): (usize, usize)) -> usize {
    rng.random_range(lo..=hi)
}

/// Adds `signature` to the listed rows, plus `β · signature/‖signature‖` on
/// the first and last of them.
fn add_burst(audio: &mut Matrix, rows: &[usize], signature: &[f64], cfg: &SynthConfig) {
    for &j in rows {
        add_row(audio, j, signature, 1.0);
    }
    let norm = signature.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 && cfg.transient_boost > 0.0 {
        let scale = cfg.transient_boost / norm;
        if let Some(&first) = rows.first() {
            add_row(audio, first, signature, scale);
        }
        if let Some(&last) = rows.last().filter(|_| rows.len() > 1) {
            add_row(audio, last, signature, scale);
        }
    }
}

pub fn generate_episodes(cfg: &SynthConfig, indices: std::ops::Range<u64>) -> Result<Vec<Episode>> {
    indices.map(|i| generate_episode(cfg, i)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub video_id: String,
    pub split: Split,
    /// Paths are relative to the manifest's directory.
    pub video: PathBuf,
    pub audio: PathBuf,
    pub annotations: PathBuf,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";

impl Manifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut entries = Vec::new();
        read_records(path, |e: ManifestEntry, _| {
            entries.push(e);
            Ok(())
        })?;
        Ok(Self {
            root: path.parent().map(Path::to_path_buf).unwrap_or_default(),
            entries,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_records(path.as_ref(), &self.entries)
    }

    pub fn resolve(&self, rel: &Path) -> PathBuf {
        self.root.join(rel)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Loads features and ground truth for every entry of `split`.
    pub fn load(&self, split: Split) -> Result<Vec<Episode>> {
        let mut gt_cache: Vec<(PathBuf, Vec<GroundTruth>)> = Vec::new();
        let mut out = Vec::new();
        for e in self.split(split) {
            let ann = self.resolve(&e.annotations);
            if !gt_cache.iter().any(|(p, _)| *p == ann) {
                let gts = crate::io::read_ground_truth(&ann)?;
                gt_cache.push((ann.clone(), gts));
            }
            let gts = &gt_cache.iter().find(|(p, _)| *p == ann).unwrap().1;
            let segments = gts
                .iter()
                .find(|g| g.video_id == e.video_id)
                .map(|g| g.segments.clone())
                .unwrap_or_default();
            out.push(Episode {
                id: e.video_id.clone(),
                video: read_features(self.resolve(&e.video))?,
                audio: read_features(self.resolve(&e.audio))?,
                gt: GroundTruth::new(e.video_id.clone(), e.duration, segments)?,
            });
        }
        Ok(out)
    }
}

/// Writes `n_train + n_test` episodes under `out_dir` and returns the
/// manifest (also written to `out_dir/manifest.jsonl`). Train episodes use
/// indices `0..n_train`, test episodes the following `n_test`.
pub fn generate_dataset(
    cfg: &SynthConfig,
    n_train: usize,
    n_test: usize,
    out_dir: impl AsRef<Path>,
) -> Result<Manifest> {
    cfg.validate()?;
    let out_dir = out_dir.as_ref();
    let feat_dir = out_dir.join("features");
    std::fs::create_dir_all(&feat_dir).map_err(|e| Error::io(&feat_dir, e))?;
    let mut entries = Vec::with_capacity(n_train + n_test);
    for (split, range, ann) in [
        (Split::Train, 0..n_train as u64, "train_gt.jsonl"),
        (Split::Test, n_train as u64..(n_train + n_test) as u64, "test_gt.jsonl"),
    ] {
        let mut gts = Vec::new();
        for i in range {
            let ep = generate_episode(cfg, i)?;
            let video = PathBuf::from("features").join(format!("{}.video.mmfs", ep.id));
            let audio = PathBuf::from("features").join(format!("{}.audio.mmfs", ep.id));
            write_features(&ep.video, out_dir.join(&video))?;
            write_features(&ep.audio, out_dir.join(&audio))?;
            entries.push(ManifestEntry {
                video_id: ep.id.clone(),
                split,
                video,
                audio,
                annotations: PathBuf::from(ann),
                duration: ep.gt.duration,
            });
            gts.push(ep.gt);
        }
        write_ground_truth(&gts, out_dir.join(ann))?;
    }
    let manifest = Manifest {
        root: out_dir.to_path_buf(),
        entries,
    };
    manifest.write(out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_for_fixed_seed() {
        let cfg = SynthConfig::default();
        assert_eq!(generate_episode(&cfg, 3).unwrap(), generate_episode(&cfg, 3).unwrap());
        assert_ne!(generate_episode(&cfg, 3).unwrap(), generate_episode(&cfg, 4).unwrap());
    }

    #[test]
    fn segments_are_disjoint_and_inside() {
        let cfg = SynthConfig::default();
        for i in 0..50 {
            let ep = generate_episode(&cfg, i).unwrap();
            let segs = &ep.gt.segments;
            assert!(!segs.is_empty());
            for w in segs.windows(2) {
                assert!(w[0].t_end < w[1].t_start, "{w:?}");
            }
            assert!(segs.iter().all(|s| s.t_start >= 0.0 && s.t_end <= ep.gt.duration));
            assert_eq!(ep.video.len(), ep.audio.len());
        }
    }

    #[test]
    fn infeasible_packing_is_an_error() {
        let cfg = SynthConfig {
            episode_len: (10, 20),
            actions_per_episode: (3, 3),
            action_len: (4, 4),
            ..SynthConfig::default()
        };
        assert!(matches!(generate_episode(&cfg, 0), Err(Error::Generation(_))));
    }

    #[test]
    fn config_validation() {
        let bad = SynthConfig {
            audio_informativeness: 1.5,
            ..SynthConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SynthConfig {
            noise: 0.0,
            ..SynthConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn job_toml_is_flat() {
        let job = SynthJob::from_toml("n_train = 3\nseed = 42\nnoise = 2\nepisode_len = [50, 60]").unwrap();
        assert_eq!((job.n_train, job.n_test), (3, 100));
        assert_eq!(job.dataset.seed, 42);
        assert_eq!(job.dataset.noise, 2.0);
        assert_eq!(job.dataset.episode_len, (50, 60));
        assert_eq!(SynthJob::from_toml(&job.to_toml()).unwrap(), job);
        assert!(SynthJob::from_toml("n_trian = 3").is_err());
    }

    #[test]
    fn dataset_smoke() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig::default();
        let m = generate_dataset(&cfg, 1, 1, dir.path()).unwrap();
        assert_eq!(m.entries.len(), 2);
        for e in &m.entries {
            assert!(m.resolve(&e.video).exists());
            assert!(m.resolve(&e.audio).exists());
            assert!(m.resolve(&e.annotations).exists());
        }
        let reread = Manifest::read(dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(reread.entries, m.entries);
    }
}
