//! Compares the analytic RMAttn gradients with central finite differences
//! for a few random configurations.
//!
//! ```bash
//! cargo run -p talfuse --example gradient_check
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use talfuse::fusion::{rmattn_backward, rmattn_forward_rows, rmattn_objective, RMAttnParams};
use talfuse::Matrix;

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

fn main() -> talfuse::Result<()> {
    let h = 1e-5;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d_v, d_a, d_h, l) = (
            rng.random_range(1..=8),
            rng.random_range(1..=8),
            rng.random_range(1..=8),
            rng.random_range(1..=6),
        );
        let params = RMAttnParams::init(d_v, d_a, d_h, seed)?;
        let video = random(&mut rng, l, d_v);
        let audio = random(&mut rng, l, d_a);
        let upstream = random(&mut rng, l, d_v + d_a);
        let (_, cache) = rmattn_forward_rows(&params, &video, &audio)?;
        let (grads, _) = rmattn_backward(&params, &cache, &upstream)?;

        let mut worst = 0.0f64;
        for (k, (_, g)) in grads.tensors().into_iter().enumerate() {
            for (i, &gi) in g.iter().enumerate() {
                let mut plus = params.clone();
                plus.tensors_mut()[k].1[i] += h;
                let mut minus = params.clone();
                minus.tensors_mut()[k].1[i] -= h;
                let fd = (rmattn_objective(&plus, &video, &audio, &upstream)?
                    - rmattn_objective(&minus, &video, &audio, &upstream)?)
                    / (2.0 * h);
                let err = (gi - fd).abs() / gi.abs().max(fd.abs()).max(1e-4);
                if err > worst {
                    worst = err;
                }
            }
        }
        println!("seed {seed}: d_v={d_v} d_a={d_a} d_h={d_h} L={l} max rel err {worst:.2e}");
    }
    Ok(())
}
