//! Shared domain types: feature sequences, snippet timing, proposals and
//! ground truth, plus temporal interval arithmetic.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Video,
    Audio,
    Fused,
}

impl Modality {
    pub fn code(self) -> u8 {
        match self {
            Modality::Video => 0,
            Modality::Audio => 1,
            Modality::Fused => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Modality::Video),
            1 => Some(Modality::Audio),
            2 => Some(Modality::Fused),
            _ => None,
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Video => "video",
            Modality::Audio => "audio",
            Modality::Fused => "fused",
        })
    }
}

/// Placement of snippet windows on the time axis. Snippet `i` covers
/// `[start_offset + i·hop, start_offset + i·hop + window]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnippetTiming {
    start_offset: f64,
    hop: f64,
    window: f64,
}

impl SnippetTiming {
    pub fn new(start_offset: f64, hop: f64, window: f64) -> Result<Self> {
        if !start_offset.is_finite() {
            return Err(Error::validation("timing start_offset must be finite"));
        }
        if !(hop.is_finite() && hop > 0.0) {
            return Err(Error::validation(format!("timing hop must be > 0, got {hop}")));
        }
        if !(window.is_finite() && window > 0.0) {
            return Err(Error::validation(format!("timing window must be > 0, got {window}")));
        }
        Ok(Self {
            start_offset,
            hop,
            window,
        })
    }

    pub fn start_offset(&self) -> f64 {
        self.start_offset
    }

    pub fn hop(&self) -> f64 {
        self.hop
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    #[inline]
    pub fn window_start(&self, i: usize) -> f64 {
        self.start_offset + i as f64 * self.hop
    }

    #[inline]
    pub fn window_end(&self, i: usize) -> f64 {
        self.window_start(i) + self.window
    }

    #[inline]
    pub fn center(&self, i: usize) -> f64 {
        self.window_start(i) + self.window / 2.0
    }

    /// Timing of a sequence whose element `j` pools elements
    /// `j·group .. (j+1)·group` of a sequence with this timing.
    pub fn pooled(&self, group: usize) -> Self {
        let g = group.max(1) as f64;
        Self {
            start_offset: self.start_offset,
            hop: self.hop * g,
            window: self.window + (g - 1.0) * self.hop,
        }
    }
}

/// Center times of the first `len` snippets.
pub fn snippet_centers(timing: &SnippetTiming, len: usize) -> Result<Vec<f64>> {
    if len == 0 {
        return Err(Error::validation("snippet count must be >= 1"));
    }
    Ok((0..len).map(|i| timing.center(i)).collect())
}

/// One modality's snippet features: an `L × d` matrix plus timing.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    modality: Modality,
    data: Matrix,
    timing: SnippetTiming,
}

impl FeatureSequence {
    pub fn new(modality: Modality, data: Matrix, timing: SnippetTiming) -> Result<Self> {
        if data.rows() == 0 || data.cols() == 0 {
            return Err(Error::validation(format!(
                "feature sequence must be at least 1x1, got {}x{}",
                data.rows(),
                data.cols()
            )));
        }
        if !data.is_finite() {
            return Err(Error::validation("feature sequence contains non-finite values"));
        }
        Ok(Self { modality, data, timing })
    }

    pub fn from_rows(modality: Modality, rows: &[Vec<f64>], timing: SnippetTiming) -> Result<Self> {
        Self::new(modality, Matrix::from_rows(rows)?, timing)
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn len(&self) -> usize {
        self.data.rows()
    }

    /// Always false; kept for clippy's `len_without_is_empty`.
    pub fn is_empty(&self) -> bool {
        self.data.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.cols()
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.data.row(i)
    }

    pub fn timing(&self) -> &SnippetTiming {
        &self.timing
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.timing.center(i)).collect()
    }

    /// Keeps the first `len` rows.
    pub fn truncated(&self, len: usize) -> Result<Self> {
        if len == 0 || len > self.len() {
            return Err(Error::validation(format!(
                "cannot truncate length {} to {len}",
                self.len()
            )));
        }
        let d = self.dim();
        let data = Matrix::from_vec(len, d, self.data.as_slice()[..len * d].to_vec())?;
        Ok(Self {
            modality: self.modality,
            data,
            timing: self.timing,
        })
    }
}

/// Closed time interval `[start, end]` in seconds, with `start < end`.
pub type Interval = (f64, f64);

fn check_interval((s, e): Interval) -> Result<()> {
    if !(s.is_finite() && e.is_finite()) || s >= e {
        return Err(Error::validation(format!("degenerate interval [{s}, {e}]")));
    }
    Ok(())
}

/// Intersection over union of two temporal intervals. The union is the
/// measure of the set union, so disjoint intervals give 0.
pub fn temporal_iou(a: Interval, b: Interval) -> Result<f64> {
    check_interval(a)?;
    check_interval(b)?;
    Ok(iou_unchecked(a, b))
}

#[inline]
pub(crate) fn iou_unchecked(a: Interval, b: Interval) -> f64 {
    let inter = (a.1.min(b.1) - a.0.max(b.0)).max(0.0);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = (a.1 - a.0) + (b.1 - b.0) - inter;
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub t_start: f64,
    pub t_end: f64,
    pub label: String,
    pub score: f64,
}

impl Proposal {
    pub fn new(t_start: f64, t_end: f64, label: impl Into<String>, score: f64) -> Result<Self> {
        let p = Self {
            t_start,
            t_end,
            label: label.into(),
            score,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_start.is_finite() && self.t_start >= 0.0) {
            return Err(Error::validation(format!(
                "t_start must be finite and >= 0, got {}",
                self.t_start
            )));
        }
        if !(self.t_end.is_finite() && self.t_start < self.t_end) {
            return Err(Error::validation(format!(
                "t_start must be < t_end, got [{}, {}]",
                self.t_start, self.t_end
            )));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::validation(format!(
                "score must lie in [0, 1], got {}",
                self.score
            )));
        }
        Ok(())
    }

    pub fn interval(&self) -> Interval {
        (self.t_start, self.t_end)
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProposalSet {
    pub video_id: String,
    pub proposals: Vec<Proposal>,
}

impl ProposalSet {
    pub fn new(video_id: impl Into<String>, proposals: Vec<Proposal>) -> Result<Self> {
        for p in &proposals {
            p.validate()?;
        }
        Ok(Self {
            video_id: video_id.into(),
            proposals,
        })
    }

    pub fn empty(video_id: impl Into<String>) -> Self {
        Self {
            video_id: video_id.into(),
            proposals: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.proposals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.proposals.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub t_start: f64,
    pub t_end: f64,
    pub label: String,
}

impl Segment {
    pub fn new(t_start: f64, t_end: f64, label: impl Into<String>) -> Self {
        Self {
            t_start,
            t_end,
            label: label.into(),
        }
    }

    pub fn interval(&self) -> Interval {
        (self.t_start, self.t_end)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub video_id: String,
    pub duration: f64,
    pub segments: Vec<Segment>,
}

impl GroundTruth {
    pub fn new(video_id: impl Into<String>, duration: f64, segments: Vec<Segment>) -> Result<Self> {
        let video_id = video_id.into();
        if !(duration.is_finite() && duration >= 0.0) {
            return Err(Error::validation(format!("{video_id}: bad duration {duration}")));
        }
        for s in &segments {
            if !(s.t_start.is_finite() && s.t_end.is_finite())
                || s.t_start < 0.0
                || s.t_start >= s.t_end
                || s.t_end > duration
            {
                return Err(Error::validation(format!(
                    "{video_id}: segment [{}, {}] outside [0, {duration}] or degenerate",
                    s.t_start, s.t_end
                )));
            }
        }
        Ok(Self {
            video_id,
            duration,
            segments,
        })
    }
}
