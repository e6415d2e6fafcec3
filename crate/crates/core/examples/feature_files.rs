//! Round-trips a feature sequence through the binary feature container and
//! shows the header fields.
//!
//! ```bash
//! cargo run -p talfuse --example feature_files
//! ```

use talfuse::io::{decode_features, encode_features, FEATURE_HEADER_LEN};
use talfuse::{FeatureSequence, Modality, SnippetTiming};

fn main() -> talfuse::Result<()> {
    let rows = vec![vec![0.5, -1.25, 2.0], vec![3.0, 0.0, -0.75]];
    let seq = FeatureSequence::from_rows(Modality::Audio, &rows, SnippetTiming::new(0.5, 0.96, 0.96)?)?;
    let bytes = encode_features(&seq)?;
    println!(
        "{} bytes ({} header + {} payload)",
        bytes.len(),
        FEATURE_HEADER_LEN,
        bytes.len() - FEATURE_HEADER_LEN
    );
    println!("magic {:?}", std::str::from_utf8(&bytes[..4]).unwrap());
    let back = decode_features(&bytes)?;
    println!(
        "{} x {} {} features, hop {} s, window {} s",
        back.len(),
        back.dim(),
        back.modality(),
        back.timing().hop(),
        back.timing().window()
    );
    assert_eq!(back, seq);

    let mut broken = bytes.clone();
    broken[4] = 9;
    println!("bad version -> {}", decode_features(&broken).unwrap_err());
    println!(
        "truncated   -> {}",
        decode_features(&bytes[..bytes.len() - 1]).unwrap_err()
    );
    Ok(())
}
