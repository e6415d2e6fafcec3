//! Compares video-only, audio-only, concat, RMAttn and pooled-NMS decision
//! fusion on synthetic episodes, averaging mAP@0.5 over several seeds.
//!
//! ```bash
//! cargo run --release -p talfuse --example fusion_benefit -- 0.9 5
//! ```

use talfuse::eval::evaluate;
use talfuse::pipeline::{fuse_decisions, train, PipelineConfig, Scheme};
use talfuse::synth::{generate_episodes, SynthConfig};

fn main() -> talfuse::Result<()> {
    let mut args = std::env::args().skip(1);
    let rho: f64 = args.next().map_or(0.9, |s| s.parse().expect("rho"));
    let seeds: u64 = args.next().map_or(3, |s| s.parse().expect("seed count"));
    let defaults = SynthConfig::default();
    let video_signal: f64 = args
        .next()
        .map_or(defaults.video_signal, |s| s.parse().expect("video signal"));
    let audio_signal: f64 = args
        .next()
        .map_or(defaults.audio_signal, |s| s.parse().expect("audio signal"));
    let base = match args.next() {
        Some(path) => PipelineConfig::from_toml(&std::fs::read_to_string(path).expect("config file"))?,
        None => PipelineConfig::default(),
    };

    let mut totals = [0.0; 5];
    for seed in 0..seeds {
        let synth = SynthConfig {
            audio_informativeness: rho,
            video_signal,
            audio_signal,
            seed,
            ..SynthConfig::default()
        };
        let train_eps = generate_episodes(&synth, 0..200)?;
        let test_eps = generate_episodes(&synth, 200..300)?;
        let gts: Vec<_> = test_eps.iter().map(|e| e.gt.clone()).collect();

        let mut runs = Vec::new();
        let mut line = format!("seed {seed}:");
        for (k, scheme) in Scheme::ALL.into_iter().enumerate() {
            let cfg = PipelineConfig {
                scheme,
                seed,
                ..base.clone()
            };
            let model = train(&train_eps, &cfg)?.model;
            let preds = model.infer_all(&test_eps)?;
            let map = evaluate(&preds, &gts, &[0.5])?.map_at[0];
            totals[k] += map;
            line += &format!(" {}={map:.4}", scheme.name());
            runs.push(preds);
        }
        let pooled = fuse_decisions(&runs[..2], 0.5, None)?;
        let map = evaluate(&pooled, &gts, &[0.5])?.map_at[0];
        totals[4] += map;
        line += &format!(" pooled_nms={map:.4}");
        println!("{line}");
    }
    let names = ["video_only", "audio_only", "concat", "rmattn", "pooled_nms"];
    for (name, total) in names.iter().zip(totals) {
        println!("mean mAP@0.5 {name:<11} {:.4}", total / seeds as f64);
    }
    Ok(())
}
