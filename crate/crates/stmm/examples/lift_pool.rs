//! Searches the 2x2 symmetric-times-symmetric product over F3, then lifts the
//! rank-5 pool to exact coefficients.
//!
//! Mod-3 schemes are points on the decomposition variety over F3; Hensel
//! lifting refines each one 3-adically and rational reconstruction snaps the
//! result to Q when the true coefficients are small fractions. Some pool
//! members lift to integers, some to halves, some fail to reconstruct at all.
//! The published rank-5 scheme for this format has denominator 2, so at least
//! one pool member is expected to land on denominators dividing a power of 2.

use std::time::Duration;

use stmm::flip::{search, SearchParams, WalkParams};
use stmm::lift::{lift_to_exact, LiftError};
use stmm::tensor::Tensor;

fn main() {
    let tensor = Tensor::from_code("ss", 2).unwrap();
    let params = SearchParams {
        walk: WalkParams { limit: 1_000_000, stagnation: 30_000, verify_every_step: false },
        pool_target: 40,
        target_rank: None,
        max_walks: Some(25_000),
        time_limit: Some(Duration::from_secs(45)),
        walkers: 1,
        seed: 3,
    };
    let found = search(&tensor, 3, &params).expect("naive scheme is valid");
    println!("best rank {} with a pool of {}", found.best.rank(), found.pool.len());

    let mut integral = 0usize;
    let mut rational = 0usize;
    let mut failed = 0usize;
    for (i, s) in found.pool.iter().enumerate() {
        match lift_to_exact(s, &tensor, 10) {
            Ok(e) if e.is_integral() => {
                integral += 1;
                println!("pool {i:3}: Z");
            }
            Ok(e) => {
                rational += 1;
                e.verify(&tensor).expect("lifted schemes verify exactly");
                println!("pool {i:3}: Q, max denominator {}", e.max_denominator());
            }
            Err(LiftError::ReconstructionFailed { .. }) => {
                failed += 1;
                println!("pool {i:3}: no rational point within the reconstruction bound");
            }
            Err(e) => panic!("pool schemes verify mod 3, lifting can only fail late: {e}"),
        }
    }
    println!("\n{integral} integral, {rational} rational, {failed} unreconstructed");
}
