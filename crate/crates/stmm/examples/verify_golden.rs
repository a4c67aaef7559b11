//! Verifies every scheme shipped in `fixtures/` and prints what each one is.
//!
//! Each file is checked against the multiplication tensor reconstructed from
//! its own header, in its declared field. For `A Aᵀ` formats the recursive
//! profile depends on which search criterion is applied, so both are shown.

use stmm::analysis::{classify_exact, classify_scheme, Criterion};
use stmm::scheme::{read_scheme_file, AnyScheme};
use stmm::tensor::Tensor;

fn main() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .expect("fixtures directory exists")
        .map(|e| e.expect("readable directory entry").path())
        .filter(|p| p.extension().is_some_and(|x| x == "scheme"))
        .collect();
    paths.sort();

    for path in paths {
        let scheme = read_scheme_file(&path).expect("fixture parses");
        let h = scheme.header().clone();
        let tensor = Tensor::build(h.format, h.n);
        scheme.verify(&tensor).expect("fixture verifies");

        let profile = |c| match &scheme {
            AnyScheme::Modular(s) => classify_scheme(s, c),
            AnyScheme::Exact(s) => classify_exact(s, c),
        };
        let adds = match &scheme {
            AnyScheme::Modular(s) => s.count_additions(),
            AnyScheme::Exact(s) => s.count_additions(),
        };

        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        print!(
            "{name:24} {:>2} n={} {:2}  rank {:2}  additions {:3}",
            h.format.code(),
            h.n,
            h.field.name(),
            scheme.rank(),
            adds
        );
        if h.format.right_is_transpose() {
            let uv = profile(Some(Criterion::Uv)).unwrap();
            let wd = profile(Some(Criterion::WDiag)).unwrap();
            println!("  profile uv={:?} wdiag={:?}", uv.as_tuple(), wd.as_tuple());
        } else {
            println!("  profile {:?}", profile(None).unwrap().as_tuple());
        }
    }
}
