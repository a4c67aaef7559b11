//! Command-line front end.
//!
//! Five commands cover the pipeline: `build` prints tensor shapes and can
//! dump naive schemes, `search` runs seeded flip walks and writes the
//! resulting pool, `lift` turns modular schemes into exact ones, `verify`
//! re-checks scheme files and classifies their terms, and `catalog` computes
//! γ tables, either from the built-in parameter set or from a directory of
//! exact schemes.
//!
//! Exit status: 0 on success, 1 when a scheme fails to verify or lift, 2 for
//! usage errors. Searches are reproducible: the manifest contains only the
//! run parameters and content digests, never timings, so a rerun with the
//! same seed and a single walker produces byte-identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::analysis::{
    catalog_gammas, classify_exact, classify_scheme, gamma, reference_aat_gamma, resolve_gammas,
    structural_zero_gamma, triangular_baseline_gamma, AnalysisError, Criterion, GammaRequest,
    GammaValue, Omega, RecursionProfile,
};
use crate::flip::{search_from, SearchParams, WalkParams};
use crate::lift::{lift_to_exact, LiftError};
use crate::scheme::{read_scheme_file, AnyScheme, ExactScheme, Field, Scheme};
use crate::tensor::{FormatPair, Normalization, Tensor};

#[derive(Parser)]
#[command(
    name = "stmm",
    about = "Low-rank schemes for structured matrix multiplication",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print a format's tensor dimensions and nonzero count; optionally
    /// write its naive scheme.
    Build(BuildArgs),
    /// Run a seeded flip-graph search and write the pool of best schemes.
    Search(SearchArgs),
    /// Lift modular schemes to exact integer or rational ones.
    Lift(LiftArgs),
    /// Re-verify scheme files and classify their recursive calls.
    Verify(VerifyArgs),
    /// Compute γ tables from the built-in parameters or a scheme directory.
    Catalog(CatalogArgs),
}

#[derive(Args)]
struct BuildArgs {
    /// Format code, e.g. gg, ug, gt, ss.
    #[arg(long)]
    format: String,
    /// Matrix size.
    #[arg(long)]
    n: usize,
    /// Zero the first and last diagonal outputs (A·Aᵀ formats only).
    #[arg(long)]
    corner_zeroed: bool,
    /// Coefficient domain of the dumped naive scheme.
    #[arg(long, default_value = "Z")]
    field: String,
    /// Write the naive scheme here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SearchArgs {
    /// Format code, e.g. gg, ug, gt, ss.
    #[arg(long)]
    format: String,
    /// Matrix size.
    #[arg(long)]
    n: usize,
    /// Coefficient field of the walk: F2 or F3.
    #[arg(long, default_value = "F2")]
    field: String,
    /// Zero the first and last diagonal outputs before searching
    /// (A·Aᵀ formats only); lift restores them.
    #[arg(long)]
    corner_zeroed: bool,
    /// Random seed; walkers use per-walker streams of it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Parallel walkers (default: STMM_THREADS or 1).
    #[arg(long)]
    walkers: Option<usize>,
    /// Flip limit per walk.
    #[arg(long, default_value_t = 1_000_000)]
    walk_limit: u64,
    /// Flips without progress before a plus transition.
    #[arg(long, default_value_t = 50_000)]
    stagnation: u64,
    /// Pool size per rank level.
    #[arg(long, default_value_t = 10_000)]
    pool: usize,
    /// Stop as soon as this rank is reached.
    #[arg(long)]
    target_rank: Option<usize>,
    /// Stop after this many walks.
    #[arg(long)]
    max_walks: Option<u64>,
    /// Stop after this many seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Output directory (default: stmm-<format><n>-<field>-s<seed>).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LiftArgs {
    /// Modular scheme files to lift.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// p-adic precision: lift modulo p^steps. Doubled once automatically if
    /// reconstruction fails and the modulus still fits.
    #[arg(long, default_value_t = 10)]
    steps: u32,
    /// Directory for the exact schemes (default: next to each input).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Scheme files to verify.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Require this format code.
    #[arg(long)]
    format: Option<String>,
    /// Require this matrix size.
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Args)]
struct CatalogArgs {
    /// Directory of exact scheme files; without it, the built-in best-known
    /// parameters are used.
    #[arg(long)]
    dir: Option<PathBuf>,
    /// Matmul exponent: 3, log2(7), or a number in [2, 3].
    #[arg(long, default_value = "log2(7)")]
    omega: String,
    /// Emit the table as JSON.
    #[arg(long)]
    json: bool,
}

/// Parses arguments and runs the command, returning the process exit code.
pub fn run() -> u8 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.cmd {
        Cmd::Build(a) => cmd_build(a),
        Cmd::Search(a) => cmd_search(a),
        Cmd::Lift(a) => cmd_lift(a),
        Cmd::Verify(a) => cmd_verify(a),
        Cmd::Catalog(a) => cmd_catalog(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

type CmdResult = Result<u8, Box<dyn std::error::Error>>;

fn usage(msg: impl std::fmt::Display) -> CmdResult {
    eprintln!("error: {msg}");
    Ok(2)
}

fn parse_format(code: &str) -> Result<FormatPair, String> {
    match FormatPair::parse(code) {
        Ok((pair, norm)) => {
            if norm != Normalization::Identity {
                eprintln!("note: {} is handled as its canonical form {}", code, pair.code());
            }
            Ok(pair)
        }
        Err(e) => Err(e.to_string()),
    }
}

fn build_tensor(pair: FormatPair, n: usize, corner_zeroed: bool) -> Result<Tensor, String> {
    let tensor = Tensor::build(pair, n);
    if !corner_zeroed {
        return Ok(tensor);
    }
    if !pair.right_is_transpose() {
        return Err(format!("--corner-zeroed only applies to A·Aᵀ formats, not {}", pair.code()));
    }
    Ok(tensor.zero_corner_outputs())
}

fn cmd_build(args: BuildArgs) -> CmdResult {
    let pair = match parse_format(&args.format) {
        Ok(p) => p,
        Err(e) => return usage(e),
    };
    if args.n == 0 {
        return usage("--n must be positive");
    }
    let Some(field) = Field::parse(&args.field) else {
        return usage(format!("unknown field {:?}", args.field));
    };
    let tensor = match build_tensor(pair, args.n, args.corner_zeroed) {
        Ok(t) => t,
        Err(e) => return usage(e),
    };
    let [d1, d2, d3] = tensor.dims;
    print!("format={} n={} dims=({d1},{d2},{d3}) nnz={}", pair.code(), args.n, tensor.nnz());
    if tensor.zeroed.is_empty() {
        println!();
    } else {
        println!(" zeroed_outputs={:?}", tensor.zeroed);
    }
    if let Some(out) = args.out {
        let rank = match field.char_p() {
            Some(p) => {
                let s = Scheme::naive(&tensor, p)?;
                s.write_file(&out)?;
                s.rank()
            }
            None => {
                let mut s = ExactScheme::naive(&tensor);
                s.header.field = field;
                s.write_file(&out)?;
                s.rank()
            }
        };
        println!("wrote naive scheme, rank {rank}, to {}", out.display());
    }
    Ok(0)
}

#[derive(Serialize)]
struct SearchManifest {
    command: &'static str,
    format: String,
    n: usize,
    field: &'static str,
    corner_zeroed: bool,
    seed: u64,
    walkers: usize,
    walk_limit: u64,
    stagnation: u64,
    pool_target: usize,
    target_rank: Option<usize>,
    max_walks: Option<u64>,
    time_limit_s: Option<f64>,
    tensor_nnz: usize,
    start_rank: usize,
    start_digest: String,
    best_rank: usize,
    best_digest: String,
    reached_target: bool,
    walks: u64,
    flips: u64,
    plus_transitions: u64,
    pool_digests: Vec<String>,
}

fn cmd_search(args: SearchArgs) -> CmdResult {
    let pair = match parse_format(&args.format) {
        Ok(p) => p,
        Err(e) => return usage(e),
    };
    if args.n == 0 {
        return usage("--n must be positive");
    }
    let p = match Field::parse(&args.field).and_then(Field::char_p) {
        Some(p) => p,
        None => return usage(format!("search needs --field F2 or F3, got {:?}", args.field)),
    };
    let tensor = match build_tensor(pair, args.n, args.corner_zeroed) {
        Ok(t) => t,
        Err(e) => return usage(e),
    };
    let walkers = args.walkers.unwrap_or_else(default_walkers);
    if walkers == 0 {
        return usage("--walkers must be positive");
    }
    let params = SearchParams {
        walk: WalkParams {
            limit: args.walk_limit,
            stagnation: args.stagnation,
            verify_every_step: false,
        },
        pool_target: args.pool,
        target_rank: args.target_rank,
        max_walks: args.max_walks,
        time_limit: args.time_limit.map(Duration::from_secs_f64),
        walkers,
        seed: args.seed,
    };

    let start = Scheme::naive(&tensor, p)?;
    let start_digest = start.digest();
    let t0 = Instant::now();
    let out = search_from(start, &tensor, &params);
    let wall = t0.elapsed();

    let dir = args.out.unwrap_or_else(|| {
        PathBuf::from(format!("stmm-{}{}-F{p}-s{}", pair.code(), args.n, args.seed))
    });
    fs::create_dir_all(&dir)?;
    for (i, s) in out.pool.iter().enumerate() {
        s.write_file(dir.join(format!("pool-{i:03}.scheme")))?;
    }
    out.best.write_file(dir.join("best.scheme"))?;

    let manifest = SearchManifest {
        command: "search",
        format: pair.code(),
        n: args.n,
        field: if p == 2 { "F2" } else { "F3" },
        corner_zeroed: args.corner_zeroed,
        seed: args.seed,
        walkers,
        walk_limit: args.walk_limit,
        stagnation: args.stagnation,
        pool_target: args.pool,
        target_rank: args.target_rank,
        max_walks: args.max_walks,
        time_limit_s: args.time_limit,
        tensor_nnz: tensor.nnz(),
        start_rank: out.start_rank,
        start_digest,
        best_rank: out.best.rank(),
        best_digest: out.best.digest(),
        reached_target: out.reached_target,
        walks: out.walks,
        flips: out.flips,
        plus_transitions: out.plus_transitions,
        pool_digests: out.pool.iter().map(Scheme::digest).collect(),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;

    let mut stats = String::new();
    for level in &out.levels {
        stats.push_str(&serde_json::to_string(level)?);
        stats.push('\n');
    }
    fs::write(dir.join("stats.jsonl"), stats)?;

    for level in &out.levels {
        println!(
            "rank {:>3}: pool {:>5}, walks {:>6}, flips {:>12}, plus {:>8}, {:>8} ms",
            level.rank, level.pool_size, level.walks, level.flips, level.plus_transitions,
            level.wall_ms
        );
    }
    let secs = wall.as_secs_f64();
    let rate = if secs > 0.0 { out.flips as f64 / secs } else { 0.0 };
    println!(
        "rank {} -> {} in {} walks, {} flips ({:.2e} flips/s), pool {} written to {}",
        out.start_rank,
        out.best.rank(),
        out.walks,
        out.flips,
        rate,
        out.pool.len(),
        dir.display()
    );
    Ok(0)
}

fn default_walkers() -> usize {
    std::env::var("STMM_THREADS").ok().and_then(|v| v.parse().ok()).filter(|&w| w > 0).unwrap_or(1)
}

/// Largest exponent s with p^s < 2^63.
fn max_lift_steps(p: u8) -> u32 {
    match p {
        2 => 62,
        3 => 39,
        _ => unreachable!("modular schemes are over F2 or F3"),
    }
}

fn cmd_lift(args: LiftArgs) -> CmdResult {
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)?;
    }
    let mut lifted = 0usize;
    for path in &args.inputs {
        match lift_one(path, &args) {
            Ok(line) => {
                lifted += 1;
                println!("{}: {line}", path.display());
            }
            Err(e) => eprintln!("{}: {e}", path.display()),
        }
    }
    Ok(if lifted > 0 { 0 } else { 1 })
}

fn lift_one(path: &Path, args: &LiftArgs) -> Result<String, Box<dyn std::error::Error>> {
    let scheme = match read_scheme_file(path)? {
        AnyScheme::Modular(s) => s,
        AnyScheme::Exact(s) => {
            // Nothing to lift; report the field it already has.
            return Ok(format!("already exact ({}), rank {}", s.header.field.name(), s.rank()));
        }
    };
    let header = scheme.header.clone();
    let tensor = build_tensor(header.format, header.n, header.corner_zeroed)
        .expect("scheme headers only carry valid formats");

    let steps = args.steps.min(max_lift_steps(scheme.p()));
    let mut exact = match lift_to_exact(&scheme, &tensor, steps) {
        Ok(e) => e,
        Err(LiftError::ReconstructionFailed { .. }) if steps * 2 <= max_lift_steps(scheme.p()) => {
            // Denominators can outgrow the reconstruction bound; more
            // p-adic digits raise it quadratically.
            lift_to_exact(&scheme, &tensor, steps * 2)?
        }
        Err(e) => return Err(e.into()),
    };
    if header.corner_zeroed {
        exact = exact.with_completion(&tensor);
        let full = Tensor::build(header.format, header.n);
        exact.verify(&full)?;
    }

    let out_path = match &args.out {
        Some(dir) => dir.join(exact_name(path)),
        None => path.with_file_name(exact_name(path)),
    };
    exact.write_file(&out_path)?;
    let mut line = if exact.is_integral() {
        format!("Z, rank {}", exact.rank())
    } else {
        format!("Q, rank {}, max denominator {}", exact.rank(), exact.max_denominator())
    };
    if header.corner_zeroed {
        let _ = write!(line, " (completed {} corner terms)", exact.rank() - scheme.rank());
    }
    let _ = write!(line, " -> {}", out_path.display());
    Ok(line)
}

fn exact_name(input: &Path) -> String {
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("scheme");
    format!("{stem}-exact.scheme")
}

fn cmd_verify(args: VerifyArgs) -> CmdResult {
    let mut failures = 0usize;
    for path in &args.inputs {
        match verify_one(path, &args) {
            Ok(line) => println!("{}: ok, {line}", path.display()),
            Err(e) => {
                failures += 1;
                eprintln!("{}: FAIL, {e}", path.display());
            }
        }
    }
    Ok(if failures == 0 { 0 } else { 1 })
}

fn verify_one(path: &Path, args: &VerifyArgs) -> Result<String, Box<dyn std::error::Error>> {
    let scheme = read_scheme_file(path)?;
    let header = scheme.header().clone();
    if let Some(want) = &args.format {
        let pair = parse_format(want).map_err(|e| format!("bad --format: {e}"))?;
        if pair != header.format {
            return Err(
                format!("format is {}, expected {}", header.format.code(), pair.code()).into()
            );
        }
    }
    if let Some(want) = args.n {
        if want != header.n {
            return Err(format!("n is {}, expected {want}", header.n).into());
        }
    }
    let tensor = build_tensor(header.format, header.n, header.corner_zeroed)
        .expect("scheme headers only carry valid formats");
    scheme.verify(&tensor)?;

    let mut line = format!(
        "{} n={} field={}, rank {}, additions {}",
        header.format.code(),
        header.n,
        header.field.name(),
        scheme.rank(),
        match &scheme {
            AnyScheme::Modular(s) => s.count_additions(),
            AnyScheme::Exact(s) => s.count_additions(),
        }
    );
    if header.corner_zeroed {
        let _ = write!(line, " (corner-zeroed tensor)");
    }
    let profile = |c: Option<Criterion>| match &scheme {
        AnyScheme::Modular(s) => classify_scheme(s, c),
        AnyScheme::Exact(s) => classify_exact(s, c),
    };
    if header.format.right_is_transpose() {
        let uv = profile(Some(Criterion::Uv))?;
        let wd = profile(Some(Criterion::WDiag))?;
        let _ = write!(line, ", profile uv={:?} wdiag={:?}", uv.as_tuple(), wd.as_tuple());
    } else {
        let _ = write!(line, ", profile {:?}", profile(None)?.as_tuple());
    }
    Ok(line)
}

#[derive(Serialize, Clone)]
struct CatalogRowOut {
    format: String,
    field: &'static str,
    k: usize,
    rank: usize,
    profile: (u32, u32, u32),
    criterion: Option<&'static str>,
    gamma: String,
    gamma_value: f64,
    exact: bool,
    /// Leading coefficient of the tensor's nonzero count: the ω=3 factor of
    /// naive evaluation that skips structural zeros.
    zeros_baseline: String,
    source: String,
}

fn zeros_baseline(pair: FormatPair) -> String {
    let r = structural_zero_gamma(pair);
    GammaValue::Exact(r).to_string()
}

fn print_rows(rows: &[CatalogRowOut], json: bool) -> Result<(), Box<dyn std::error::Error>> {
    if json {
        println!("{}", serde_json::to_string_pretty(rows)?);
        return Ok(());
    }
    println!(
        "{:<7} {:>2} {:>4} {:<5} {:<12} {:<6} {:>9}  {:<12} {:<10} {}",
        "format", "k", "rank", "field", "profile", "crit", "gamma", "(exact)", "zeros", "source"
    );
    for r in rows {
        println!(
            "{:<7} {:>2} {:>4} {:<5} {:<12} {:<6} {:>9.4} {:<13} {:<10} {}",
            r.format,
            r.k,
            r.rank,
            r.field,
            format!("{:?}", r.profile),
            r.criterion.unwrap_or("-"),
            r.gamma_value,
            if r.exact { format!("= {}", r.gamma) } else { String::new() },
            r.zeros_baseline,
            r.source
        );
    }
    Ok(())
}

fn cmd_catalog(args: CatalogArgs) -> CmdResult {
    let omega: Omega = match args.omega.parse() {
        Ok(w) => w,
        Err(e) => return usage(e),
    };
    match &args.dir {
        None => {
            let rows: Vec<CatalogRowOut> = catalog_gammas(omega)
                .into_iter()
                .map(|r| {
                    let pair = FormatPair::parse(&r.format).expect("catalog formats parse").0;
                    CatalogRowOut {
                        format: r.format,
                        field: r.field.name(),
                        k: r.k,
                        rank: r.rank,
                        profile: r.profile.as_tuple(),
                        criterion: None,
                        gamma: r.gamma.to_string(),
                        gamma_value: r.gamma.as_f64(),
                        exact: r.gamma.is_exact(),
                        zeros_baseline: zeros_baseline(pair),
                        source: match r.derived_from {
                            Some(src) => format!("builtin (via {src})"),
                            None => "builtin".to_string(),
                        },
                    }
                })
                .collect();
            print_rows(&rows, args.json)?;
            if !args.json {
                println!(
                    "blockwise triangular baseline (k=2): {}; reference A·Aᵀ recursion: {}",
                    triangular_baseline_gamma(2, omega)?,
                    reference_aat_gamma(omega)?
                );
            }
            Ok(0)
        }
        Some(dir) => catalog_from_dir(dir, omega, args.json),
    }
}

/// One classified candidate row from a scheme directory.
#[derive(Clone)]
struct DirRow {
    code: String,
    pair: FormatPair,
    k: usize,
    rank: usize,
    field: Field,
    criterion: Option<Criterion>,
    profile: RecursionProfile,
    max_den: i64,
    support: usize,
    file: String,
}

fn catalog_from_dir(dir: &Path, omega: Omega, json: bool) -> CmdResult {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map_or(false, |e| e == "scheme"))
        .collect();
    files.sort();

    let mut rows: Vec<DirRow> = Vec::new();
    let mut skipped: Vec<String> = Vec::new();
    let mut broken = 0usize;
    for path in &files {
        let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("?").to_string();
        let exact = match read_scheme_file(path) {
            Ok(AnyScheme::Exact(s)) => s,
            Ok(AnyScheme::Modular(_)) => {
                skipped.push(format!("{name}: modular scheme, lift it first"));
                continue;
            }
            Err(e) => {
                skipped.push(format!("{name}: {e}"));
                broken += 1;
                continue;
            }
        };
        let header = exact.header.clone();
        let tensor = build_tensor(header.format, header.n, header.corner_zeroed)
            .expect("scheme headers only carry valid formats");
        if let Err(e) = exact.verify(&tensor) {
            skipped.push(format!("{name}: fails verification: {e}"));
            broken += 1;
            continue;
        }
        let criteria: &[Option<Criterion>] = if header.format.right_is_transpose() {
            &[Some(Criterion::Uv), Some(Criterion::WDiag)]
        } else {
            &[None]
        };
        for &criterion in criteria {
            rows.push(DirRow {
                code: header.format.code(),
                pair: header.format,
                k: header.n,
                rank: exact.rank(),
                field: header.field,
                criterion,
                profile: classify_exact(&exact, criterion)?,
                max_den: exact.max_denominator(),
                support: exact.total_support(),
                file: name.clone(),
            });
        }
    }

    // Pareto-filter within each (format, size, rank) group; schemes that
    // are dominated there can never be the reported row.
    let mut by_group: BTreeMap<(String, usize, usize), Vec<DirRow>> = BTreeMap::new();
    for row in rows {
        by_group.entry((row.code.clone(), row.k, row.rank)).or_default().push(row);
    }
    let mut rows: Vec<DirRow> = Vec::new();
    for (_, group) in by_group {
        for i in 0..group.len() {
            if !group.iter().any(|other| other.profile.dominates(&group[i].profile)) {
                rows.push(group[i].clone());
            }
        }
    }

    let (selected, registry, unresolved) = select_catalog_rows(&mut rows, omega)?;

    let mut out_rows: Vec<CatalogRowOut> = Vec::new();
    for (code, idx) in &selected {
        let row = &rows[*idx];
        let g = &registry[code];
        out_rows.push(CatalogRowOut {
            format: code.clone(),
            field: row.field.name(),
            k: row.k,
            rank: row.rank,
            profile: row.profile.as_tuple(),
            criterion: row.criterion.map(Criterion::code),
            gamma: g.to_string(),
            gamma_value: g.as_f64(),
            exact: g.is_exact(),
            zeros_baseline: zeros_baseline(row.pair),
            source: row.file.clone(),
        });
    }
    print_rows(&out_rows, json)?;
    if !json {
        for (row, reason) in &unresolved {
            println!("unresolved: {} ({}): {reason}", row.code, row.file);
        }
        for s in &skipped {
            println!("skipped: {s}");
        }
    }
    Ok(if broken == 0 { 0 } else { 1 })
}

type Selection = BTreeMap<String, usize>;

/// Picks one row per format and computes a consistent γ registry. Rows whose
/// side formats are nowhere in the directory are set aside with the reason.
#[allow(clippy::type_complexity)]
fn select_catalog_rows(
    rows: &mut Vec<DirRow>,
    omega: Omega,
) -> Result<(Selection, BTreeMap<String, GammaValue>, Vec<(DirRow, String)>), AnalysisError> {
    let mut unresolved: Vec<(DirRow, String)> = Vec::new();
    'restart: loop {
        let mut selection: Selection = BTreeMap::new();
        for (i, row) in rows.iter().enumerate() {
            selection.entry(row.code.clone()).or_insert(i);
        }
        if selection.is_empty() {
            return Ok((selection, BTreeMap::new(), unresolved));
        }

        // Alternate resolving γs for the current picks with re-picking each
        // format's row by the γ it would get, until the picks are stable.
        // The pass cap only guards against pick oscillation; the last
        // resolved registry is consistent with its selection either way.
        for pass in 0..64 {
            let requests: Vec<GammaRequest> = selection
                .values()
                .map(|&i| GammaRequest {
                    format: rows[i].pair,
                    k: rows[i].k,
                    rank: rows[i].rank,
                    profile: rows[i].profile,
                })
                .collect();
            let registry = match resolve_gammas(&requests, omega) {
                Ok(r) => r,
                Err(AnalysisError::MissingGamma { key }) => {
                    prune_rows(rows, &mut unresolved, &key, format!("needs γ for {key}"));
                    continue 'restart;
                }
                Err(AnalysisError::NoFixedPoint { key }) => {
                    prune_rows(rows, &mut unresolved, &key, format!("γ of {key} diverges"));
                    continue 'restart;
                }
                Err(e) => return Err(e),
            };
            let mut next = selection.clone();
            let mut changed = false;
            for (code, pick) in next.iter_mut() {
                let best = pick_best(rows, code, &registry, omega);
                if *pick != best {
                    *pick = best;
                    changed = true;
                }
            }
            if !changed || pass == 63 {
                // The registry matches `selection`; on the cap we keep that
                // consistent pair rather than chase an oscillating pick.
                return Ok((selection, registry, unresolved));
            }
            selection = next;
        }
    }
}

/// Index of the format's row with the smallest γ under `registry`, breaking
/// ties toward integer coefficients, small denominators, and sparsity.
fn pick_best(
    rows: &[DirRow],
    code: &str,
    registry: &BTreeMap<String, GammaValue>,
    omega: Omega,
) -> usize {
    rows.iter()
        .enumerate()
        .filter(|(_, r)| r.code == code)
        .min_by(|(i, a), (j, b)| {
            row_gamma(a, registry, omega)
                .partial_cmp(&row_gamma(b, registry, omega))
                .unwrap()
                .then_with(|| {
                    let key = |r: &DirRow| (r.field != Field::Z, r.max_den, r.support);
                    key(a).cmp(&key(b)).then(i.cmp(j))
                })
        })
        .map(|(i, _)| i)
        .expect("selection formats have rows")
}

/// γ a row would get with side values from `registry`; rows whose sides are
/// missing rank last.
fn row_gamma(row: &DirRow, registry: &BTreeMap<String, GammaValue>, omega: Omega) -> f64 {
    let (ag_key, gb_key) = crate::analysis::aux_formats(row.pair);
    let side = |key: &str, q: u32| -> Option<Option<GammaValue>> {
        if q == 0 {
            return Some(None);
        }
        registry.get(key).cloned().map(Some)
    };
    let (Some(g_ag), Some(g_gb)) =
        (side(&ag_key, row.profile.q_ag), side(&gb_key, row.profile.q_gb))
    else {
        return f64::INFINITY;
    };
    gamma(row.rank, row.profile, row.k, omega, g_ag.as_ref(), g_gb.as_ref())
        .map_or(f64::INFINITY, |g| g.as_f64())
}

/// Drops every row that directly needs γ of `key`, recording why. Formats
/// that lose all their rows stop being providers, which cascades on the next
/// resolution attempt.
fn prune_rows(rows: &mut Vec<DirRow>, unresolved: &mut Vec<(DirRow, String)>, key: &str, reason: String) {
    let mut kept = Vec::with_capacity(rows.len());
    for row in rows.drain(..) {
        let (ag_key, gb_key) = crate::analysis::aux_formats(row.pair);
        let needs = (row.profile.q_ag > 0 && ag_key == key)
            || (row.profile.q_gb > 0 && gb_key == key)
            || row.code == key;
        if needs {
            unresolved.push((row, reason.clone()));
        } else {
            kept.push(row);
        }
    }
    *rows = kept;
}

/// Entry point for the `stmm` binary.
pub fn main() -> ! {
    std::process::exit(run() as i32);
}
