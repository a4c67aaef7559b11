//! Walks the flip graph of the 2x2 matrix product over F2 until it finds a
//! rank-7 scheme, i.e. rediscovers Strassen multiplication from scratch.
//!
//! The walk starts at the naive 8-term scheme. Flips move between rank-8
//! decompositions; the moment two terms collide, the rank drops to 7 and the
//! search stops. With the fixed seed below this takes a few thousand flips.

use std::time::Duration;

use stmm::flip::{search, SearchParams, WalkParams};
use stmm::tensor::Tensor;

fn main() {
    let tensor = Tensor::from_code("gg", 2).unwrap();
    let params = SearchParams {
        walk: WalkParams { limit: 100_000, stagnation: 20_000, verify_every_step: false },
        pool_target: 16,
        target_rank: Some(7),
        max_walks: Some(1_000),
        time_limit: Some(Duration::from_secs(10)),
        walkers: 1,
        seed: 1,
    };
    let found = search(&tensor, 2, &params).expect("naive scheme is valid");

    for level in &found.levels {
        println!(
            "rank {:2}: {:6} flips, {:3} plus transitions, pool {}",
            level.rank, level.flips, level.plus_transitions, level.pool_size
        );
    }
    assert_eq!(found.best.rank(), 7, "the 2x2 product has rank 7 over F2");
    found.best.verify(&tensor).expect("every emitted scheme verifies");

    println!("\nrank-7 scheme after {} flips:\n", found.flips);
    print!("{}", found.best.write_string());
}
