//! Prints the asymptotic factor γ for the built-in scheme catalog.
//!
//! Recursing on a rank-r scheme for a k×k block format gives a multiplication
//! count γ·n^ω + O(n²), where γ depends on r and on how many of the r products
//! are themselves structured. Entries whose auxiliary formats resolve to exact
//! rationals are printed as fractions; the rest fall back to floating point.
//! The two baselines at the bottom are what plain block recursion achieves
//! without any structured scheme.

use stmm::analysis::{
    catalog_gammas, reference_aat_gamma, structural_zero_gamma, triangular_baseline_gamma, Omega,
};
use stmm::tensor::FormatPair;

fn main() {
    let omega: Omega = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("omega is 3, log27, or a number in [2,3]"))
        .unwrap_or(Omega::Log2Of7);
    println!("omega = {omega}\n");
    println!("format  field  k  rank  profile        gamma         skip-zeros baseline");

    for row in catalog_gammas(omega) {
        let (pair, _) = FormatPair::parse(&row.format).unwrap();
        let zeros = structural_zero_gamma(pair);
        let via = row.derived_from.map(|w| format!("  (via {w})")).unwrap_or_default();
        println!(
            "{:4} {:>6} {:3} {:4}   {:12} {:<13} {}{via}",
            row.format,
            row.field.name(),
            row.k,
            row.rank,
            format!("{:?}", row.profile.as_tuple()),
            row.gamma.to_string(),
            zeros,
        );
    }

    let tri = triangular_baseline_gamma(2, omega).expect("2^omega > 4");
    let aat = reference_aat_gamma(omega).expect("4^omega > 10");
    println!("\nblockwise triangular baseline, k=2: {tri}");
    println!("reference A Aᵀ recursion:           {aat}");
}
