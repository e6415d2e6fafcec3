//! Equalizes a short video sequence and a longer audio sequence with each
//! alignment route and prints the resulting traces.
//!
//! ```bash
//! cargo run -p talfuse --example align_sequences
//! ```

use talfuse::align::{avg_trim, dup_trim, pair_by_window_centering, DEFAULT_AUDIO_WINDOW};
use talfuse::{FeatureSequence, Modality, SnippetTiming};

fn ramp(modality: Modality, len: usize, timing: SnippetTiming) -> FeatureSequence {
    let rows: Vec<Vec<f64>> = (0..len).map(|i| vec![i as f64]).collect();
    FeatureSequence::from_rows(modality, &rows, timing).unwrap()
}

fn main() -> talfuse::Result<()> {
    // 3 video snippets of 1 s, 7 audio snippets of 0.4 s
    let video = ramp(Modality::Video, 3, SnippetTiming::new(0.0, 1.0, 1.0)?);
    let audio = ramp(Modality::Audio, 7, SnippetTiming::new(0.0, 0.4, 0.4)?);

    let dup = dup_trim(&audio, &video)?;
    println!("dup_trim: k={} L_m={}", dup.trace.k, dup.trace.l_m);
    println!("  video rows {:?}", dup.video.data().as_slice());
    println!("  audio rows {:?}", dup.audio.data().as_slice());

    let avg = avg_trim(&audio, &video)?;
    println!(
        "avg_trim: k'={} L_a'={} L_m={}",
        avg.trace.k_prime.unwrap(),
        avg.trace.l_a_prime.unwrap(),
        avg.trace.l_m
    );
    println!("  audio rows {:?}", avg.audio.data().as_slice());

    let paired = pair_by_window_centering(&audio, &video, DEFAULT_AUDIO_WINDOW)?;
    println!("paired (window {DEFAULT_AUDIO_WINDOW} s): L_m={}", paired.trace.l_m);
    for i in 0..paired.len() {
        println!(
            "  center {:.1} s -> audio {:.3}",
            video.timing().center(i),
            paired.audio.row(i)[0]
        );
    }
    Ok(())
}
