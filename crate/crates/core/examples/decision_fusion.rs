//! Pools proposals from two modalities for one video and keeps the
//! class-wise NMS survivors.
//!
//! ```bash
//! cargo run -p talfuse --example decision_fusion
//! ```

use talfuse::{pool_and_nms, Proposal, ProposalSet};

fn main() -> talfuse::Result<()> {
    let video = ProposalSet::new(
        "clip",
        vec![
            Proposal::new(2.0, 8.0, "jump", 0.9)?,
            Proposal::new(20.0, 26.0, "throw", 0.6)?,
        ],
    )?;
    let audio = ProposalSet::new(
        "clip",
        vec![
            Proposal::new(2.5, 8.5, "jump", 0.7)?,
            Proposal::new(12.0, 15.0, "jump", 0.5)?,
            Proposal::new(19.0, 26.0, "throw", 0.8)?,
        ],
    )?;
    let fused = pool_and_nms(&[video, audio], 0.5, None)?;
    for p in &fused.proposals {
        println!(
            "{:>5} [{:>4.1}, {:>4.1}] score {:.2}",
            p.label, p.t_start, p.t_end, p.score
        );
    }
    Ok(())
}
