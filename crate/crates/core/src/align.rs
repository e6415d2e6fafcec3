//! Length equalization of audio and video feature sequences so they can be
//! fused along the feature dimension.
//!
//! Three routes are provided:
//!
//! * [`pair_by_window_centering`]: resample audio onto the video snippet
//!   grid by averaging audio rows whose windows overlap a window centered on
//!   each video snippet. Uncovered snippets get a zero row.
//! * [`dup_trim`]: repeat each element of the shorter sequence `k` times,
//!   then trim both to a common length.
//! * [`avg_trim`]: average groups of `k′ = ⌈L_long / L_short⌉` elements of
//!   the longer sequence, then trim both to a common length.
//!
//! Trimming always keeps the prefix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::types::{FeatureSequence, Modality, SnippetTiming};

/// Default audio window in seconds.
pub const DEFAULT_AUDIO_WINDOW: f64 = 1.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignMethod {
    Paired,
    DupTrim,
    AvgTrim,
}

impl std::str::FromStr for AlignMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paired" => Ok(AlignMethod::Paired),
            "duptrim" | "dup_trim" => Ok(AlignMethod::DupTrim),
            "avgtrim" | "avg_trim" => Ok(AlignMethod::AvgTrim),
            _ => Err(Error::validation(format!("unknown alignment method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentTrace {
    pub method: AlignMethod,
    /// Replication factor (dup_trim) or `⌊L_long / L_short⌋` (avg_trim).
    pub k: usize,
    /// `⌈L_long / L_short⌉`, avg_trim only.
    pub k_prime: Option<usize>,
    /// Common length after trimming.
    pub l_m: usize,
    /// Length of the pooled sequence, avg_trim only.
    pub l_a_prime: Option<usize>,
    /// Which modality was duplicated or pooled, if any.
    pub resampled: Option<Modality>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPair {
    pub video: FeatureSequence,
    pub audio: FeatureSequence,
    pub trace: AlignmentTrace,
}

impl AlignedPair {
    pub fn len(&self) -> usize {
        self.video.len()
    }

    pub fn is_empty(&self) -> bool {
        self.video.is_empty()
    }

    /// Builds a pair from sequences that are already the same length.
    pub fn from_equal_length(video: FeatureSequence, audio: FeatureSequence) -> Result<Self> {
        check_roles(&audio, &video)?;
        if video.len() != audio.len() {
            return Err(Error::validation(format!(
                "pair lengths differ: video {} vs audio {}",
                video.len(),
                audio.len()
            )));
        }
        let l_m = video.len();
        Ok(Self {
            video,
            audio,
            trace: AlignmentTrace {
                method: AlignMethod::Paired,
                k: 1,
                k_prime: None,
                l_m,
                l_a_prime: None,
                resampled: None,
            },
        })
    }
}

fn check_roles(audio: &FeatureSequence, video: &FeatureSequence) -> Result<()> {
    if audio.modality() != Modality::Audio {
        return Err(Error::validation(format!(
            "expected an audio sequence, got {}",
            audio.modality()
        )));
    }
    if video.modality() != Modality::Video {
        return Err(Error::validation(format!(
            "expected a video sequence, got {}",
            video.modality()
        )));
    }
    Ok(())
}

pub fn align(
    method: AlignMethod,
    audio: &FeatureSequence,
    video: &FeatureSequence,
    window: f64,
) -> Result<AlignedPair> {
    match method {
        AlignMethod::Paired => pair_by_window_centering(audio, video, window),
        AlignMethod::DupTrim => dup_trim(audio, video),
        AlignMethod::AvgTrim => avg_trim(audio, video),
    }
}

/// Resamples `audio` onto the video snippet grid.
///
/// For each video snippet center `c`, the output audio row is the mean of
/// the audio rows whose windows overlap `[c − window/2, c + window/2]` with
/// positive measure, or the zero vector when none does.
pub fn pair_by_window_centering(audio: &FeatureSequence, video: &FeatureSequence, window: f64) -> Result<AlignedPair> {
    check_roles(audio, video)?;
    if !(window.is_finite() && window > 0.0) {
        return Err(Error::validation(format!("centering window must be > 0, got {window}")));
    }
    let at = audio.timing();
    let (l_v, l_a, d_a) = (video.len(), audio.len(), audio.dim());
    let mut out = Matrix::zeros(l_v, d_a);
    for i in 0..l_v {
        let c = video.timing().center(i);
        let (q_lo, q_hi) = (c - window / 2.0, c + window / 2.0);
        // Audio window starts and ends both increase with j, so the
        // overlapping set is a contiguous index range.
        let lo = partition_point(l_a, |j| at.window_end(j) <= q_lo);
        let hi = partition_point(l_a, |j| at.window_start(j) < q_hi);
        let row = out.row_mut(i);
        let mut n = 0usize;
        for j in lo..hi {
            let overlap = at.window_end(j).min(q_hi) - at.window_start(j).max(q_lo);
            if overlap > 0.0 {
                for (o, &x) in row.iter_mut().zip(audio.row(j)) {
                    *o += x;
                }
                n += 1;
            }
        }
        if n > 1 {
            let inv = 1.0 / n as f64;
            row.iter_mut().for_each(|v| *v *= inv);
        }
    }
    let audio_out = FeatureSequence::new(Modality::Audio, out, *video.timing())?;
    Ok(AlignedPair {
        video: video.clone(),
        audio: audio_out,
        trace: AlignmentTrace {
            method: AlignMethod::Paired,
            k: 1,
            k_prime: None,
            l_m: l_v,
            l_a_prime: None,
            resampled: Some(Modality::Audio),
        },
    })
}

/// First index in `0..n` where `pred` is false; `pred` must be monotone
/// (true then false).
fn partition_point(n: usize, pred: impl Fn(usize) -> bool) -> usize {
    let (mut lo, mut hi) = (0, n);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if pred(mid) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

fn repeat_rows(seq: &FeatureSequence, k: usize, len: usize, timing: SnippetTiming) -> Result<FeatureSequence> {
    let d = seq.dim();
    let mut data = Vec::with_capacity(len * d);
    for t in 0..len {
        data.extend_from_slice(seq.row(t / k));
    }
    FeatureSequence::new(seq.modality(), Matrix::from_vec(len, d, data)?, timing)
}

fn pool_rows(seq: &FeatureSequence, group: usize) -> Result<FeatureSequence> {
    let (l, d) = (seq.len(), seq.dim());
    let pooled_len = l.div_ceil(group);
    let mut out = Matrix::zeros(pooled_len, d);
    for g in 0..pooled_len {
        let members = g * group..((g + 1) * group).min(l);
        let inv = 1.0 / members.len() as f64;
        let row = out.row_mut(g);
        for t in members {
            for (o, &x) in row.iter_mut().zip(seq.row(t)) {
                *o += x;
            }
        }
        row.iter_mut().for_each(|v| *v *= inv);
    }
    FeatureSequence::new(seq.modality(), out, seq.timing().pooled(group))
}

/// Duplicate-and-trim alignment.
///
/// With `L_s ≤ L_l` the shorter and longer lengths, `k = max(1, ⌊L_l/L_s⌋)`,
/// each shorter-sequence row is repeated `k` times and both are trimmed to
/// `L_m = min(L_l, k·L_s)`. Both outputs carry the longer sequence's timing;
/// with equal lengths the inputs are returned unchanged.
pub fn dup_trim(audio: &FeatureSequence, video: &FeatureSequence) -> Result<AlignedPair> {
    check_roles(audio, video)?;
    let (l_a, l_v) = (audio.len(), video.len());
    if l_a == l_v {
        return Ok(AlignedPair {
            video: video.clone(),
            audio: audio.clone(),
            trace: AlignmentTrace {
                method: AlignMethod::DupTrim,
                k: 1,
                k_prime: None,
                l_m: l_v,
                l_a_prime: None,
                resampled: None,
            },
        });
    }
    let (short, long) = if l_v < l_a { (video, audio) } else { (audio, video) };
    let k = (long.len() / short.len()).max(1);
    let l_m = long.len().min(k * short.len());
    let timing = *long.timing();
    let expanded = repeat_rows(short, k, l_m, timing)?;
    let trimmed = long.truncated(l_m)?;
    let (video, audio) = if l_v < l_a {
        (expanded, trimmed)
    } else {
        (trimmed, expanded)
    };
    Ok(AlignedPair {
        video,
        audio,
        trace: AlignmentTrace {
            method: AlignMethod::DupTrim,
            k,
            k_prime: None,
            l_m,
            l_a_prime: None,
            resampled: Some(short.modality()),
        },
    })
}

/// Average-and-trim alignment.
///
/// With `L_v < L_a` (roles mirror otherwise), `k′ = ⌈L_a / L_v⌉`; audio is
/// split into consecutive groups of `k′` rows (the last group may be
/// shorter and is averaged over its own size), giving `L_a′ = ⌈L_a / k′⌉`
/// rows; both sequences are trimmed to `L_m = min(L_a′, L_v)`.
pub fn avg_trim(audio: &FeatureSequence, video: &FeatureSequence) -> Result<AlignedPair> {
    check_roles(audio, video)?;
    let (l_a, l_v) = (audio.len(), video.len());
    let audio_longer = l_a >= l_v;
    let (short, long) = if audio_longer { (video, audio) } else { (audio, video) };
    let k = (long.len() / short.len()).max(1);
    let k_prime = long.len().div_ceil(short.len());
    let pooled = pool_rows(long, k_prime)?;
    let l_pooled = pooled.len();
    let l_m = l_pooled.min(short.len());
    let pooled = pooled.truncated(l_m)?;
    let kept = short.truncated(l_m)?;
    let (video, audio) = if audio_longer { (kept, pooled) } else { (pooled, kept) };
    Ok(AlignedPair {
        video,
        audio,
        trace: AlignmentTrace {
            method: AlignMethod::AvgTrim,
            k,
            k_prime: Some(k_prime),
            l_m,
            l_a_prime: Some(l_pooled),
            resampled: (k_prime > 1).then(|| long.modality()),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn timing(hop: f64, window: f64) -> SnippetTiming {
        SnippetTiming::new(0.0, hop, window).unwrap()
    }

    /// Row `i` is `[base + i, base + i + 0.5]`.
    fn ramp(modality: Modality, len: usize, base: f64, t: SnippetTiming) -> FeatureSequence {
        let rows: Vec<Vec<f64>> = (0..len).map(|i| vec![base + i as f64, base + i as f64 + 0.5]).collect();
        FeatureSequence::from_rows(modality, &rows, t).unwrap()
    }

    #[test]
    fn centering_overlap_example() {
        // audio snippet [0, 1.2]; video centers 0.5 and 1.5 with a 1.2 s window
        let audio = FeatureSequence::from_rows(Modality::Audio, &[vec![3.0, -1.0]], timing(1.2, 1.2)).unwrap();
        let video = ramp(Modality::Video, 2, 0.0, timing(1.0, 1.0));
        let pair = pair_by_window_centering(&audio, &video, 1.2).unwrap();
        assert_eq!(pair.audio.row(0), &[3.0, -1.0]);
        assert_eq!(pair.audio.row(1), &[3.0, -1.0]);
        assert_eq!(pair.trace.l_m, 2);
        assert_eq!(pair.trace.k, 1);
        assert_eq!(pair.trace.method, AlignMethod::Paired);
        assert_eq!(pair.audio.timing(), video.timing());
    }

    #[test]
    fn centering_beyond_coverage_is_zero() {
        let audio = ramp(Modality::Audio, 2, 1.0, timing(1.0, 1.0));
        let video = ramp(Modality::Video, 10, 0.0, timing(1.0, 1.0));
        let pair = pair_by_window_centering(&audio, &video, 1.2).unwrap();
        assert_eq!(pair.audio.row(9), &[0.0, 0.0]);
        assert_eq!(pair.audio.len(), 10);
    }

    #[test]
    fn centering_identity_when_timing_matches() {
        let t = timing(1.0, 1.0);
        let audio = ramp(Modality::Audio, 5, 10.0, t);
        let video = ramp(Modality::Video, 5, 0.0, t);
        // a window equal to the hop touches neighbours only at endpoints
        let pair = pair_by_window_centering(&audio, &video, 1.0).unwrap();
        assert_eq!(pair.audio, audio);
        assert_eq!(pair.video, video);
    }

    #[test]
    fn centering_averages_multiple_overlaps() {
        let audio = ramp(Modality::Audio, 4, 0.0, timing(0.5, 0.5));
        let video = ramp(Modality::Video, 2, 0.0, timing(1.0, 1.0));
        let pair = pair_by_window_centering(&audio, &video, 1.0).unwrap();
        // video window [0,1] covers audio snippets 0 and 1
        assert_eq!(pair.audio.row(0), &[0.5, 1.0]);
        assert_eq!(pair.audio.row(1), &[2.5, 3.0]);
    }

    #[test]
    fn centering_rejects_bad_window_and_roles() {
        let t = timing(1.0, 1.0);
        let audio = ramp(Modality::Audio, 2, 0.0, t);
        let video = ramp(Modality::Video, 2, 0.0, t);
        assert!(pair_by_window_centering(&audio, &video, 0.0).is_err());
        assert!(pair_by_window_centering(&video, &audio, 1.2).is_err());
    }

    #[test]
    fn dup_trim_equal_lengths_is_identity() {
        let t = timing(1.0, 1.0);
        let audio = ramp(Modality::Audio, 4, 10.0, t);
        let video = ramp(Modality::Video, 4, 0.0, timing(0.5, 0.5));
        let pair = dup_trim(&audio, &video).unwrap();
        assert_eq!((pair.trace.k, pair.trace.l_m), (1, 4));
        assert_eq!(pair.audio, audio);
        assert_eq!(pair.video, video);
    }

    #[test]
    fn dup_trim_video_shorter() {
        let video = ramp(Modality::Video, 3, 0.0, timing(2.0, 2.0));
        let audio = ramp(Modality::Audio, 7, 100.0, timing(1.0, 1.0));
        let pair = dup_trim(&audio, &video).unwrap();
        assert_eq!((pair.trace.k, pair.trace.l_m), (2, 6));
        assert_eq!(pair.video.len(), 6);
        assert_eq!(pair.audio.len(), 6);
        let firsts: Vec<f64> = (0..6).map(|t| pair.video.row(t)[0]).collect();
        assert_eq!(firsts, vec![0.0, 0.0, 1.0, 1.0, 2.0, 2.0]);
        assert_eq!(pair.audio.row(5), audio.row(5));
        assert_eq!(pair.video.timing(), audio.timing());
        assert_eq!(pair.trace.resampled, Some(Modality::Video));
    }

    #[test]
    fn dup_trim_audio_shorter() {
        let audio = ramp(Modality::Audio, 2, 100.0, timing(2.0, 2.0));
        let video = ramp(Modality::Video, 5, 0.0, timing(1.0, 1.0));
        let pair = dup_trim(&audio, &video).unwrap();
        assert_eq!((pair.trace.k, pair.trace.l_m), (2, 4));
        let firsts: Vec<f64> = (0..4).map(|t| pair.audio.row(t)[0]).collect();
        assert_eq!(firsts, vec![100.0, 100.0, 101.0, 101.0]);
        assert_eq!(pair.video, video.truncated(4).unwrap());
    }

    #[test]
    fn avg_trim_equal_lengths() {
        let t = timing(1.0, 1.0);
        let audio = ramp(Modality::Audio, 4, 10.0, t);
        let video = ramp(Modality::Video, 4, 0.0, t);
        let pair = avg_trim(&audio, &video).unwrap();
        assert_eq!(pair.trace.k_prime, Some(1));
        assert_eq!(pair.trace.l_m, 4);
        assert_eq!(pair.audio, audio);
        assert_eq!(pair.video, video);
    }

    #[test]
    fn avg_trim_seven_over_three() {
        let audio = ramp(Modality::Audio, 7, 0.0, timing(1.0, 1.0));
        let video = ramp(Modality::Video, 3, 0.0, timing(3.0, 3.0));
        let pair = avg_trim(&audio, &video).unwrap();
        assert_eq!(pair.trace.k_prime, Some(3));
        assert_eq!(pair.trace.l_a_prime, Some(3));
        assert_eq!(pair.trace.l_m, 3);
        // groups {0,1,2}, {3,4,5}, {6}
        let firsts: Vec<f64> = (0..3).map(|t| pair.audio.row(t)[0]).collect();
        assert_eq!(firsts, vec![1.0, 4.0, 6.0]);
    }

    #[test]
    fn avg_trim_six_over_four_trims_video() {
        let audio = ramp(Modality::Audio, 6, 0.0, timing(1.0, 1.0));
        let video = ramp(Modality::Video, 4, 0.0, timing(1.5, 1.5));
        let pair = avg_trim(&audio, &video).unwrap();
        assert_eq!(pair.trace.k_prime, Some(2));
        assert_eq!(pair.trace.l_a_prime, Some(3));
        assert_eq!(pair.trace.l_m, 3);
        assert_eq!(pair.video, video.truncated(3).unwrap());
        assert_eq!(pair.audio.row(0), &[0.5, 1.0]);
    }

    #[test]
    fn avg_trim_mirrored_pools_video() {
        let audio = ramp(Modality::Audio, 2, 0.0, timing(2.0, 2.0));
        let video = ramp(Modality::Video, 5, 0.0, timing(1.0, 1.0));
        let pair = avg_trim(&audio, &video).unwrap();
        assert_eq!(pair.trace.k_prime, Some(3));
        assert_eq!(pair.trace.l_a_prime, Some(2));
        assert_eq!(pair.trace.l_m, 2);
        assert_eq!(pair.video.row(1)[0], 3.5);
        assert_eq!(pair.trace.resampled, Some(Modality::Video));
    }

    #[test]
    fn method_parsing() {
        assert_eq!("duptrim".parse::<AlignMethod>().unwrap(), AlignMethod::DupTrim);
        assert!("nearest".parse::<AlignMethod>().is_err());
    }
}
