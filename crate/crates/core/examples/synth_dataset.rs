//! Writes a small synthetic dataset to a directory and reloads it through
//! the manifest.
//!
//! ```bash
//! cargo run -p talfuse --example synth_dataset -- /tmp/talfuse-demo
//! ```

use talfuse::synth::{generate_dataset, Manifest, Split, SynthConfig, MANIFEST_FILE};

fn main() -> talfuse::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "talfuse-demo".into());
    let cfg = SynthConfig {
        audio_informativeness: 0.5,
        seed: 3,
        ..SynthConfig::default()
    };
    generate_dataset(&cfg, 8, 4, &out)?;
    let manifest = Manifest::read(std::path::Path::new(&out).join(MANIFEST_FILE))?;
    for split in [Split::Train, Split::Test] {
        let eps = manifest.load(split)?;
        let segs: usize = eps.iter().map(|e| e.gt.segments.len()).sum();
        println!("{split:?}: {} episodes, {segs} segments", eps.len());
    }
    let first = &manifest.load(Split::Train)?[0];
    println!(
        "{}: video {}x{}, audio {}x{}, duration {} s",
        first.id,
        first.video.len(),
        first.video.dim(),
        first.audio.len(),
        first.audio.dim(),
        first.gt.duration
    );
    for s in &first.gt.segments {
        println!("  {} [{}, {}]", s.label, s.t_start, s.t_end);
    }
    Ok(())
}
