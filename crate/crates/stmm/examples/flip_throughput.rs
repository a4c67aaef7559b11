//! Measures raw single-thread flip throughput on the 3x3 general product.
//!
//! Flips are the inner loop of the whole search, so this is the number that
//! decides how far a desk machine gets. Counts only successful flips, the same
//! notion the search statistics report.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stmm::flip::{Engine, FlipOutcome};
use stmm::scheme::Scheme;
use stmm::tensor::Tensor;

fn main() {
    let tensor = Tensor::from_code("gg", 3).unwrap();
    let start = Scheme::naive(&tensor, 2).unwrap();
    let mut engine = Engine::new(&start, None);
    let mut rng = ChaCha8Rng::seed_from_u64(42);

    let mut flips: u64 = 0;
    let goal = 5_000_000u64;
    let t0 = Instant::now();
    while flips < goal {
        match engine.random_flip(&mut rng) {
            FlipOutcome::Applied { removed: 0 } => flips += 1,
            FlipOutcome::Applied { .. } => {
                // Rank drops end a walk; restart from the naive scheme to
                // keep measuring steady-state flip cost.
                flips += 1;
                engine = Engine::new(&start, None);
            }
            FlipOutcome::NoCandidates => unreachable!("rank-27 schemes always share factors"),
        }
    }
    let dt = t0.elapsed().as_secs_f64();
    println!("{flips} flips in {dt:.2} s: {:.2e} flips/s", flips as f64 / dt);
}
