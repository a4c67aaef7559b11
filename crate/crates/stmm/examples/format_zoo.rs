//! Builds the multiplication tensor of every supported format and tabulates
//! its shape and nonzero count.
//!
//! The nonzero count is the rank of the naive scheme, i.e. the number of
//! scalar products the obvious algorithm spends. The drop from `n³` is what
//! structure buys before any search happens; the search then shaves it
//! further.

use stmm::tensor::{Tensor, CANONICAL_CODES};

fn main() {
    println!("{:6} {:>14} {:>6} {:>6} {:>6} {:>6}", "format", "dims (n=4)", "n=2", "n=3", "n=4", "n=5");
    for code in CANONICAL_CODES {
        let dims = Tensor::from_code(code, 4).unwrap().dims;
        let nnz: Vec<String> =
            (2..=5).map(|n| Tensor::from_code(code, n).unwrap().nnz().to_string()).collect();
        println!(
            "{code:6} {:>14} {:>6} {:>6} {:>6} {:>6}",
            format!("{}x{}x{}", dims[0], dims[1], dims[2]),
            nnz[0],
            nnz[1],
            nnz[2],
            nnz[3]
        );
    }
}
