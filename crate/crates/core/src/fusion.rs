//! Encoding fusion of an aligned audio/video pair into one sequence.
//!
//! Two schemes: plain concatenation along the feature dimension, and a
//! gated residual cross-modal block ("RMAttn"). For each timestep, with
//! `x = [v ‖ a]`:
//!
//! ```text
//! h_v = tanh(W_gv·x + b_v)        h_a = tanh(W_ga·x + b_a)
//! γ_v = σ(G_v·h_v)                γ_a = σ(G_a·h_a)
//! v′  = v + γ_v ⊙ (P·a)           a′  = a + γ_a ⊙ (Q·v)
//! out = [v′ ‖ a′]
//! ```
//!
//! With `P = Q = 0` the block reduces exactly to concatenation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::align::AlignedPair;
use crate::error::{Error, Result};
use crate::io::Checkpoint;
use crate::linalg::{dot, sigmoid, Matrix};
use crate::types::{FeatureSequence, Modality};

/// Identifies the block wiring stored in checkpoints.
pub const RMATTN_TOPOLOGY: &str = "gated-residual-v1";

/// `[video_t ‖ audio_t]` for every timestep. Timing comes from the video side.
pub fn concat_fuse(pair: &AlignedPair) -> Result<FeatureSequence> {
    let fused = concat_rows(pair.video.data(), pair.audio.data())?;
    FeatureSequence::new(Modality::Fused, fused, *pair.video.timing())
}

pub(crate) fn concat_rows(video: &Matrix, audio: &Matrix) -> Result<Matrix> {
    if video.rows() != audio.rows() {
        return Err(Error::validation(format!(
            "cannot concatenate {} video rows with {} audio rows",
            video.rows(),
            audio.rows()
        )));
    }
    let (d_v, d_a) = (video.cols(), audio.cols());
    let mut out = Vec::with_capacity(video.rows() * (d_v + d_a));
    for t in 0..video.rows() {
        out.extend_from_slice(video.row(t));
        out.extend_from_slice(audio.row(t));
    }
    Matrix::from_vec(video.rows(), d_v + d_a, out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RMAttnParams {
    pub d_v: usize,
    pub d_a: usize,
    pub d_h: usize,
    /// `d_h × (d_v + d_a)`
    pub w_gv: Matrix,
    pub b_v: Vec<f64>,
    /// `d_v × d_h`
    pub g_v: Matrix,
    /// `d_h × (d_v + d_a)`
    pub w_ga: Matrix,
    pub b_a: Vec<f64>,
    /// `d_a × d_h`
    pub g_a: Matrix,
    /// `d_v × d_a`, audio into video.
    pub p: Matrix,
    /// `d_a × d_v`, video into audio.
    pub q: Matrix,
}

const TENSOR_NAMES: [&str; 8] = ["w_gv", "b_v", "g_v", "w_ga", "b_a", "g_a", "p", "q"];

impl RMAttnParams {
    pub fn zeros(d_v: usize, d_a: usize, d_h: usize) -> Self {
        Self {
            d_v,
            d_a,
            d_h,
            w_gv: Matrix::zeros(d_h, d_v + d_a),
            b_v: vec![0.0; d_h],
            g_v: Matrix::zeros(d_v, d_h),
            w_ga: Matrix::zeros(d_h, d_v + d_a),
            b_a: vec![0.0; d_h],
            g_a: Matrix::zeros(d_a, d_h),
            p: Matrix::zeros(d_v, d_a),
            q: Matrix::zeros(d_a, d_v),
        }
    }

    /// Glorot-uniform weights (`s = √(6 / (fan_in + fan_out))` per matrix),
    /// zero biases, deterministic in `seed`.
    pub fn init(d_v: usize, d_a: usize, d_h: usize, seed: u64) -> Result<Self> {
        if d_v == 0 || d_a == 0 || d_h == 0 {
            return Err(Error::validation(format!(
                "rmattn dims must be >= 1, got d_v={d_v} d_a={d_a} d_h={d_h}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(d_v, d_a, d_h);
        for m in [&mut p.w_gv, &mut p.g_v, &mut p.w_ga, &mut p.g_a, &mut p.p, &mut p.q] {
            let s = (6.0 / (m.rows() + m.cols()) as f64).sqrt();
            m.as_mut_slice().iter_mut().for_each(|v| *v = rng.random_range(-s..=s));
        }
        Ok(p)
    }

    /// Default hidden width: `min(d_v, d_a)`.
    pub fn default_hidden(d_v: usize, d_a: usize) -> usize {
        d_v.min(d_a)
    }

    pub fn out_dim(&self) -> usize {
        self.d_v + self.d_a
    }

    /// Every trainable tensor, flattened, in a fixed order.
    pub fn tensors(&self) -> [(&'static str, &[f64]); 8] {
        [
            (TENSOR_NAMES[0], self.w_gv.as_slice()),
            (TENSOR_NAMES[1], &self.b_v),
            (TENSOR_NAMES[2], self.g_v.as_slice()),
            (TENSOR_NAMES[3], self.w_ga.as_slice()),
            (TENSOR_NAMES[4], &self.b_a),
            (TENSOR_NAMES[5], self.g_a.as_slice()),
            (TENSOR_NAMES[6], self.p.as_slice()),
            (TENSOR_NAMES[7], self.q.as_slice()),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut [f64]); 8] {
        [
            (TENSOR_NAMES[0], self.w_gv.as_mut_slice()),
            (TENSOR_NAMES[1], &mut self.b_v),
            (TENSOR_NAMES[2], self.g_v.as_mut_slice()),
            (TENSOR_NAMES[3], self.w_ga.as_mut_slice()),
            (TENSOR_NAMES[4], &mut self.b_a),
            (TENSOR_NAMES[5], self.g_a.as_mut_slice()),
            (TENSOR_NAMES[6], self.p.as_mut_slice()),
            (TENSOR_NAMES[7], self.q.as_mut_slice()),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    fn check_shapes(&self) -> Result<()> {
        let (v, a, h) = (self.d_v, self.d_a, self.d_h);
        let ok = self.w_gv.shape() == (h, v + a)
            && self.w_ga.shape() == (h, v + a)
            && self.g_v.shape() == (v, h)
            && self.g_a.shape() == (a, h)
            && self.p.shape() == (v, a)
            && self.q.shape() == (a, v)
            && self.b_v.len() == h
            && self.b_a.len() == h;
        if !ok {
            return Err(Error::validation("rmattn parameter shapes are inconsistent"));
        }
        if !self.is_finite() {
            return Err(Error::validation("rmattn parameters contain non-finite values"));
        }
        Ok(())
    }

    pub fn write_to(&self, ck: &mut Checkpoint, prefix: &str) {
        ck.put_text(format!("{prefix}topology"), RMATTN_TOPOLOGY);
        ck.put_matrix(format!("{prefix}w_gv"), self.w_gv.clone());
        ck.put_matrix(
            format!("{prefix}b_v"),
            Matrix::from_vec(self.d_h, 1, self.b_v.clone()).unwrap(),
        );
        ck.put_matrix(format!("{prefix}g_v"), self.g_v.clone());
        ck.put_matrix(format!("{prefix}w_ga"), self.w_ga.clone());
        ck.put_matrix(
            format!("{prefix}b_a"),
            Matrix::from_vec(self.d_h, 1, self.b_a.clone()).unwrap(),
        );
        ck.put_matrix(format!("{prefix}g_a"), self.g_a.clone());
        ck.put_matrix(format!("{prefix}p"), self.p.clone());
        ck.put_matrix(format!("{prefix}q"), self.q.clone());
    }

    pub fn read_from(ck: &Checkpoint, prefix: &str) -> Result<Self> {
        let topology = ck.text(&format!("{prefix}topology"))?;
        if topology != RMATTN_TOPOLOGY {
            return Err(Error::Format(format!("unsupported rmattn topology {topology:?}")));
        }
        let m = |name: &str| ck.matrix(&format!("{prefix}{name}")).cloned();
        let p = m("p")?;
        let (d_v, d_a) = p.shape();
        let w_gv = m("w_gv")?;
        let params = Self {
            d_v,
            d_a,
            d_h: w_gv.rows(),
            w_gv,
            b_v: m("b_v")?.into_vec(),
            g_v: m("g_v")?,
            w_ga: m("w_ga")?,
            b_a: m("b_a")?.into_vec(),
            g_a: m("g_a")?,
            p,
            q: m("q")?,
        };
        params.check_shapes().map_err(|e| Error::Format(e.to_string()))?;
        Ok(params)
    }
}

/// Intermediates saved by the forward pass, one row per timestep.
#[derive(Debug, Clone)]
pub struct RMAttnCache {
    x: Matrix,
    h_v: Matrix,
    gate_v: Matrix,
    proj_v: Matrix,
    h_a: Matrix,
    gate_a: Matrix,
    proj_a: Matrix,
}

impl RMAttnCache {
    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    /// Video-path gates `γ_v`, one row per timestep.
    pub fn video_gates(&self) -> &Matrix {
        &self.gate_v
    }

    /// Audio-path gates `γ_a`, one row per timestep.
    pub fn audio_gates(&self) -> &Matrix {
        &self.gate_a
    }
}

/// Gradients of a scalar loss with respect to the block's inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct InputGrads {
    pub video: Matrix,
    pub audio: Matrix,
}

pub fn rmattn_forward(params: &RMAttnParams, pair: &AlignedPair) -> Result<(FeatureSequence, RMAttnCache)> {
    let (out, cache) = rmattn_forward_rows(params, pair.video.data(), pair.audio.data())?;
    Ok((FeatureSequence::new(Modality::Fused, out, *pair.video.timing())?, cache))
}

/// Forward pass on raw row matrices (`L × d_v` and `L × d_a`).
pub fn rmattn_forward_rows(params: &RMAttnParams, video: &Matrix, audio: &Matrix) -> Result<(Matrix, RMAttnCache)> {
    params.check_shapes()?;
    let (d_v, d_a, d_h) = (params.d_v, params.d_a, params.d_h);
    if video.cols() != d_v || audio.cols() != d_a || video.rows() != audio.rows() {
        return Err(Error::validation(format!(
            "rmattn expects L×{d_v} video and L×{d_a} audio, got {}×{} and {}×{}",
            video.rows(),
            video.cols(),
            audio.rows(),
            audio.cols()
        )));
    }
    let l = video.rows();
    let x = concat_rows(video, audio)?;
    let mut cache = RMAttnCache {
        x,
        h_v: Matrix::zeros(l, d_h),
        gate_v: Matrix::zeros(l, d_v),
        proj_v: Matrix::zeros(l, d_v),
        h_a: Matrix::zeros(l, d_h),
        gate_a: Matrix::zeros(l, d_a),
        proj_a: Matrix::zeros(l, d_a),
    };
    let mut out = Matrix::zeros(l, d_v + d_a);
    for t in 0..l {
        let (v, a) = (video.row(t), audio.row(t));
        let x = cache.x.row(t);

        let h_v = cache.h_v.row_mut(t);
        params.w_gv.matvec_into(x, h_v);
        for (h, b) in h_v.iter_mut().zip(&params.b_v) {
            *h = (*h + b).tanh();
        }
        let h_a = cache.h_a.row_mut(t);
        params.w_ga.matvec_into(x, h_a);
        for (h, b) in h_a.iter_mut().zip(&params.b_a) {
            *h = (*h + b).tanh();
        }

        let gate_v = cache.gate_v.row_mut(t);
        params.g_v.matvec_into(cache.h_v.row(t), gate_v);
        gate_v.iter_mut().for_each(|g| *g = sigmoid(*g));
        let gate_a = cache.gate_a.row_mut(t);
        params.g_a.matvec_into(cache.h_a.row(t), gate_a);
        gate_a.iter_mut().for_each(|g| *g = sigmoid(*g));

        params.p.matvec_into(a, cache.proj_v.row_mut(t));
        params.q.matvec_into(v, cache.proj_a.row_mut(t));

        let row = out.row_mut(t);
        for i in 0..d_v {
            row[i] = v[i] + cache.gate_v.get(t, i) * cache.proj_v.get(t, i);
        }
        for j in 0..d_a {
            row[d_v + j] = a[j] + cache.gate_a.get(t, j) * cache.proj_a.get(t, j);
        }
    }
    Ok((out, cache))
}

/// Exact gradients of `Σ upstream ⊙ output` with respect to the parameters
/// and both inputs.
pub fn rmattn_backward(
    params: &RMAttnParams,
    cache: &RMAttnCache,
    upstream: &Matrix,
) -> Result<(RMAttnParams, InputGrads)> {
    let (d_v, d_a, d_h) = (params.d_v, params.d_a, params.d_h);
    let l = cache.len();
    if upstream.shape() != (l, d_v + d_a) || cache.x.cols() != d_v + d_a || cache.h_v.cols() != d_h {
        return Err(Error::validation(format!(
            "upstream gradient {}×{} does not match forward output {l}×{}",
            upstream.rows(),
            upstream.cols(),
            d_v + d_a
        )));
    }
    let mut grads = RMAttnParams::zeros(d_v, d_a, d_h);
    let mut d_video = Matrix::zeros(l, d_v);
    let mut d_audio = Matrix::zeros(l, d_a);
    let mut dx = vec![0.0; d_v + d_a];
    let mut d_proj_v = vec![0.0; d_v];
    let mut dz_v = vec![0.0; d_v];
    let mut d_proj_a = vec![0.0; d_a];
    let mut dz_a = vec![0.0; d_a];
    let mut dh = vec![0.0; d_h];

    for t in 0..l {
        let up = upstream.row(t);
        let (up_v, up_a) = up.split_at(d_v);
        let x = cache.x.row(t);
        let (v, a) = x.split_at(d_v);
        dx.iter_mut().for_each(|g| *g = 0.0);

        // residual identity paths
        dx[..d_v].copy_from_slice(up_v);
        dx[d_v..].copy_from_slice(up_a);

        // video refinement: v′ = v + γ_v ⊙ (P·a)
        let (gate_v, proj_v) = (cache.gate_v.row(t), cache.proj_v.row(t));
        for i in 0..d_v {
            d_proj_v[i] = up_v[i] * gate_v[i];
            let d_gate = up_v[i] * proj_v[i];
            dz_v[i] = d_gate * gate_v[i] * (1.0 - gate_v[i]);
        }
        grads.p.add_outer(1.0, &d_proj_v, a);
        params.p.matvec_t_acc(&d_proj_v, &mut dx[d_v..]);
        let h_v = cache.h_v.row(t);
        grads.g_v.add_outer(1.0, &dz_v, h_v);
        dh.iter_mut().for_each(|g| *g = 0.0);
        params.g_v.matvec_t_acc(&dz_v, &mut dh);
        for (g, &h) in dh.iter_mut().zip(h_v) {
            *g *= 1.0 - h * h;
        }
        grads.w_gv.add_outer(1.0, &dh, x);
        grads.b_v.iter_mut().zip(&dh).for_each(|(b, g)| *b += g);
        params.w_gv.matvec_t_acc(&dh, &mut dx);

        // audio refinement: a′ = a + γ_a ⊙ (Q·v)
        let (gate_a, proj_a) = (cache.gate_a.row(t), cache.proj_a.row(t));
        for j in 0..d_a {
            d_proj_a[j] = up_a[j] * gate_a[j];
            let d_gate = up_a[j] * proj_a[j];
            dz_a[j] = d_gate * gate_a[j] * (1.0 - gate_a[j]);
        }
        grads.q.add_outer(1.0, &d_proj_a, v);
        params.q.matvec_t_acc(&d_proj_a, &mut dx[..d_v]);
        let h_a = cache.h_a.row(t);
        grads.g_a.add_outer(1.0, &dz_a, h_a);
        dh.iter_mut().for_each(|g| *g = 0.0);
        params.g_a.matvec_t_acc(&dz_a, &mut dh);
        for (g, &h) in dh.iter_mut().zip(h_a) {
            *g *= 1.0 - h * h;
        }
        grads.w_ga.add_outer(1.0, &dh, x);
        grads.b_a.iter_mut().zip(&dh).for_each(|(b, g)| *b += g);
        params.w_ga.matvec_t_acc(&dh, &mut dx);

        d_video.row_mut(t).copy_from_slice(&dx[..d_v]);
        d_audio.row_mut(t).copy_from_slice(&dx[d_v..]);
    }
    Ok((
        grads,
        InputGrads {
            video: d_video,
            audio: d_audio,
        },
    ))
}

/// Scalar `Σ upstream ⊙ rmattn(video, audio)`; the objective whose gradient
/// [`rmattn_backward`] returns.
pub fn rmattn_objective(params: &RMAttnParams, video: &Matrix, audio: &Matrix, upstream: &Matrix) -> Result<f64> {
    let (out, _) = rmattn_forward_rows(params, video, audio)?;
    Ok(dot(out.as_slice(), upstream.as_slice()))
}
