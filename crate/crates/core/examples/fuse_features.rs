//! Concatenation versus the gated residual block on one synthetic episode,
//! with the mean gate activations of each direction.
//!
//! ```bash
//! cargo run -p talfuse --example fuse_features
//! ```

use talfuse::align::{align, AlignMethod, DEFAULT_AUDIO_WINDOW};
use talfuse::fusion::{concat_fuse, rmattn_forward, RMAttnParams};
use talfuse::synth::{generate_episode, SynthConfig};

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn main() -> talfuse::Result<()> {
    let ep = generate_episode(&SynthConfig::default(), 0)?;
    let pair = align(AlignMethod::Paired, &ep.audio, &ep.video, DEFAULT_AUDIO_WINDOW)?;

    let concat = concat_fuse(&pair)?;
    println!("concat: {} x {}", concat.len(), concat.dim());

    let (d_v, d_a) = (pair.video.dim(), pair.audio.dim());
    let params = RMAttnParams::init(d_v, d_a, RMAttnParams::default_hidden(d_v, d_a), 7)?;
    let (fused, cache) = rmattn_forward(&params, &pair)?;
    println!("rmattn: {} x {} (hidden {})", fused.len(), fused.dim(), params.d_h);
    println!("  mean video gate {:.4}", mean(cache.video_gates().as_slice()));
    println!("  mean audio gate {:.4}", mean(cache.audio_gates().as_slice()));

    let shift: f64 = fused
        .data()
        .as_slice()
        .iter()
        .zip(concat.data().as_slice())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    println!("  ||rmattn - concat||_F = {shift:.4}");
    Ok(())
}
