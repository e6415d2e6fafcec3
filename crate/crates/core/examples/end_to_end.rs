//! Train, infer and evaluate every scheme on one small synthetic dataset,
//! then report the per-class AP change from adding audio.
//!
//! ```bash
//! cargo run --release -p talfuse --example end_to_end
//! ```

use talfuse::eval::{evaluate, per_class_delta, Preset};
use talfuse::pipeline::{train, PipelineConfig, Scheme};
use talfuse::synth::{generate_episodes, SynthConfig};

fn main() -> talfuse::Result<()> {
    let synth = SynthConfig {
        seed: 11,
        ..SynthConfig::default()
    };
    let train_eps = generate_episodes(&synth, 0..100)?;
    let test_eps = generate_episodes(&synth, 100..150)?;
    let gts: Vec<_> = test_eps.iter().map(|e| e.gt.clone()).collect();
    let thresholds = Preset::Thumos.thresholds();

    let mut reports = Vec::new();
    for scheme in Scheme::ALL {
        let cfg = PipelineConfig {
            scheme,
            ..PipelineConfig::default()
        };
        let trained = train(&train_eps, &cfg)?;
        let preds = trained.model.infer_all(&test_eps)?;
        let report = evaluate(&preds, &gts, &thresholds)?;
        println!(
            "{:<10} final loss {:.4}  mAP@0.5 {:.4}  avg mAP {:.4}",
            scheme.name(),
            trained.loss_trace.last().unwrap(),
            report.map_at_threshold(0.5).unwrap(),
            report.average_map
        );
        reports.push(report);
    }
    println!("AP@0.5 change, rmattn vs video_only:");
    for (class, d) in per_class_delta(&reports[3], &reports[0], 0.5)? {
        println!("  {class} {d:+.4}");
    }
    Ok(())
}
