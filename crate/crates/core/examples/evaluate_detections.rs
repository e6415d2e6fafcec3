//! mAP at the THUMOS-style thresholds for a small hand-built example, and
//! the per-class AP difference against a weaker detector.
//!
//! ```bash
//! cargo run -p talfuse --example evaluate_detections
//! ```

use talfuse::eval::{evaluate, per_class_delta, Preset};
use talfuse::{GroundTruth, Proposal, ProposalSet, Segment};

fn main() -> talfuse::Result<()> {
    let gt = vec![
        GroundTruth::new(
            "a",
            30.0,
            vec![Segment::new(2.0, 8.0, "jump"), Segment::new(15.0, 20.0, "throw")],
        )?,
        GroundTruth::new("b", 30.0, vec![Segment::new(5.0, 12.0, "jump")])?,
    ];
    let strong = vec![
        ProposalSet::new(
            "a",
            vec![
                Proposal::new(2.0, 7.5, "jump", 0.9)?,
                Proposal::new(15.5, 20.0, "throw", 0.8)?,
            ],
        )?,
        ProposalSet::new("b", vec![Proposal::new(5.0, 11.0, "jump", 0.7)?])?,
    ];
    let weak = vec![
        ProposalSet::new(
            "a",
            vec![
                Proposal::new(0.0, 5.0, "jump", 0.9)?,
                Proposal::new(14.0, 23.0, "throw", 0.8)?,
            ],
        )?,
        ProposalSet::new("b", vec![Proposal::new(6.0, 11.0, "jump", 0.3)?])?,
    ];
    let thresholds = Preset::Thumos.thresholds();
    let rs = evaluate(&strong, &gt, &thresholds)?;
    let rw = evaluate(&weak, &gt, &thresholds)?;
    println!("iou   strong  weak");
    for (i, t) in thresholds.iter().enumerate() {
        println!("{t:.1}   {:.4}  {:.4}", rs.map_at[i], rw.map_at[i]);
    }
    println!("average {:.4} {:.4}", rs.average_map, rw.average_map);
    for (class, d) in per_class_delta(&rs, &rw, 0.5)? {
        println!("delta AP@0.5 {class}: {d:+.3}");
    }
    Ok(())
}
