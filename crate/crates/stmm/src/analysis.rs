//! Recursion analysis: which terms of a scheme are again structured products,
//! and what multiplication count that recursion yields.
//!
//! Applying a size-`k` scheme to a matrix of `k x k` blocks turns each term
//! into one block product. Most are general products, but a term whose left
//! factor only uses diagonal entries multiplies by a *block-diagonal* slice
//! of a structured operand, i.e. by `k` independent structured blocks, and
//! similar conditions hold on the right. Counting such terms gives a profile
//! `(q_ab, q_ag, q_gb)`: products that recurse into the same format, into
//! (structured x general), and into (general x structured).
//!
//! With `M(n) = γ·n^ω + O(n²)` multiplications at cutoff-free recursion, the
//! profile determines the factor
//!
//! ```text
//! γ_ab = (r − q_ab − q_ag(1−γ_ag) − q_gb(1−γ_gb)) / (k^ω − q_ab)
//! ```
//!
//! where `γ_ag`, `γ_gb` are the factors of the side formats and `ω` is the
//! exponent of the general multiplication being recursed on. When `k^ω` is an
//! integer (always for `ω = 3`, and for `k` a power of two when `ω = log₂7`)
//! the factor is an exact rational.
//!
//! For an `A·Aᵀ` product the left and right factors index the same operand,
//! so being block-diagonal is not enough; a term recurses only if it is
//! itself an `X·Xᵀ`-shaped product. Two sufficient criteria are supported:
//! equal factor vectors (`u = v`), and outputs confined to diagonal blocks of
//! the symmetric result, which makes the term an output truncation of a
//! general `X·Yᵀ` product.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::scheme::{ExactScheme, Field, Scheme};
use crate::tensor::{FormatPair, RightOperand, StructureTag, Tensor};

/// What makes a term of an `A·Aᵀ` scheme count as recursive.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Criterion {
    /// The term's two factor vectors are identical, so on blocks it is a
    /// `X·Xᵀ` product.
    Uv,
    /// The term only writes diagonal outputs of the symmetric result, so on
    /// blocks it is a diagonal-truncated `X·Yᵀ` product.
    WDiag,
}

impl Criterion {
    pub fn code(self) -> &'static str {
        match self {
            Criterion::Uv => "uv",
            Criterion::WDiag => "wdiag",
        }
    }

    pub fn parse(s: &str) -> Option<Criterion> {
        match s {
            "uv" => Some(Criterion::Uv),
            "wdiag" => Some(Criterion::WDiag),
            _ => None,
        }
    }
}

/// Counts of recursive block products in a scheme.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RecursionProfile {
    /// Terms that recurse into the scheme's own format.
    pub q_ab: u32,
    /// Terms that recurse into (structured left) x general.
    pub q_ag: u32,
    /// Terms that recurse into general x (structured right).
    pub q_gb: u32,
}

impl RecursionProfile {
    pub fn new(q_ab: u32, q_ag: u32, q_gb: u32) -> Self {
        RecursionProfile { q_ab, q_ag, q_gb }
    }

    pub fn as_tuple(&self) -> (u32, u32, u32) {
        (self.q_ab, self.q_ag, self.q_gb)
    }

    /// Componentwise order: true when `self` is at least `other` everywhere
    /// and strictly better somewhere.
    pub fn dominates(&self, other: &RecursionProfile) -> bool {
        self.q_ab >= other.q_ab
            && self.q_ag >= other.q_ag
            && self.q_gb >= other.q_gb
            && self.as_tuple() != other.as_tuple()
    }
}

/// Factor supports of one term, the only data classification needs.
#[derive(Clone, Debug)]
pub struct TermView {
    pub u_support: Vec<usize>,
    pub v_support: Vec<usize>,
    pub w_support: Vec<usize>,
    /// True when the u and v coefficient vectors are identical.
    pub uv_equal: bool,
}

fn diag_mask(tag: StructureTag, n: usize) -> Vec<bool> {
    let mut mask = vec![false; tag.free_count(n)];
    for i in tag.diagonal_free_indices(n) {
        mask[i] = true;
    }
    mask
}

fn within(support: &[usize], mask: &[bool]) -> bool {
    support.iter().all(|&i| mask[i])
}

/// Classifies the terms of a scheme for `format` at size `n` into the
/// recursion profile. For `A·Aᵀ` formats, `criterion` decides which terms
/// count as self-recursive; without one, no term does. Formats with two
/// independent operands reject a criterion, which only means something when
/// both factors index the same matrix.
pub fn classify_terms(
    format: FormatPair,
    n: usize,
    criterion: Option<Criterion>,
    terms: &[TermView],
) -> Result<RecursionProfile, AnalysisError> {
    if criterion.is_some() && !format.right_is_transpose() {
        return Err(AnalysisError::CriterionNotApplicable { format: format.code() });
    }
    let a = format.left;
    let mut p = RecursionProfile::default();
    match format.right {
        RightOperand::Matrix(StructureTag::General) => {
            // The right factor recurses as general either way, so only
            // diagonal-support left factors earn anything, and only when the
            // left operand is actually structured.
            if a != StructureTag::General {
                let da = diag_mask(a, n);
                p.q_ab = terms.iter().filter(|t| within(&t.u_support, &da)).count() as u32;
            }
        }
        RightOperand::Matrix(b) => {
            let da = diag_mask(a, n);
            let db = diag_mask(b, n);
            for t in terms {
                let left = a != StructureTag::General && within(&t.u_support, &da);
                let right = within(&t.v_support, &db);
                match (left, right) {
                    (true, true) => p.q_ab += 1,
                    (true, false) => p.q_ag += 1,
                    (false, true) => p.q_gb += 1,
                    (false, false) => {}
                }
            }
            if a == b {
                // Transposing a general x structured block product gives a
                // structured x general one of the same format, so the two
                // side kinds coincide.
                p.q_ag += p.q_gb;
                p.q_gb = 0;
            }
        }
        RightOperand::TransposedLeft => {
            let da = diag_mask(a, n);
            let dout = {
                let mut m = vec![false; n * (n + 1) / 2];
                for i in format.diagonal_output_indices(n) {
                    m[i] = true;
                }
                m
            };
            for t in terms {
                let is_rec = match criterion {
                    Some(Criterion::Uv) => t.uv_equal,
                    Some(Criterion::WDiag) => within(&t.w_support, &dout),
                    None => false,
                };
                let left_ok = a == StructureTag::General || within(&t.u_support, &da);
                let right_ok = a == StructureTag::General || within(&t.v_support, &da);
                if is_rec && left_ok && right_ok {
                    p.q_ab += 1;
                } else if is_rec {
                    // Recursive in shape but with off-diagonal operand
                    // blocks: a general X·Yᵀ product with truncated outputs,
                    // i.e. a gt call.
                    p.q_gb += 1;
                } else if a != StructureTag::General && (left_ok || right_ok) {
                    // One structured-diagonal side; transposition folds the
                    // right-sided case onto the left.
                    p.q_ag += 1;
                }
            }
        }
    }
    Ok(p)
}

pub fn classify_scheme(
    s: &Scheme,
    criterion: Option<Criterion>,
) -> Result<RecursionProfile, AnalysisError> {
    let views: Vec<TermView> = s
        .terms
        .iter()
        .map(|t| TermView {
            u_support: t.u.support().map(|(i, _)| i).collect(),
            v_support: t.v.support().map(|(i, _)| i).collect(),
            w_support: t.w.support().map(|(i, _)| i).collect(),
            uv_equal: t.u == t.v,
        })
        .collect();
    classify_terms(s.header.format, s.header.n, criterion, &views)
}

pub fn classify_exact(
    s: &ExactScheme,
    criterion: Option<Criterion>,
) -> Result<RecursionProfile, AnalysisError> {
    let supp = |xs: &[num_rational::Rational64]| {
        xs.iter().enumerate().filter(|(_, c)| !c.is_zero()).map(|(i, _)| i).collect()
    };
    let views: Vec<TermView> = s
        .terms
        .iter()
        .map(|t| TermView {
            u_support: supp(&t.u),
            v_support: supp(&t.v),
            w_support: supp(&t.w),
            uv_equal: t.u == t.v,
        })
        .collect();
    classify_terms(s.header.format, s.header.n, criterion, &views)
}

/// The formats of the side calls a profile refers to: `(q_ag format,
/// q_gb format)`. For `A·Aᵀ` products the `q_gb` calls are truncated general
/// `X·Yᵀ` products, i.e. `gt`.
pub fn aux_formats(format: FormatPair) -> (String, String) {
    let canon = |code: String| {
        FormatPair::parse(&code).expect("tag pair with g is always supported").0.code()
    };
    match format.right {
        RightOperand::TransposedLeft => (canon(format!("{}g", format.left.code())), "gt".into()),
        RightOperand::Matrix(b) => (
            canon(format!("{}g", format.left.code())),
            canon(format!("g{}", b.code())),
        ),
    }
}

/// The exponent of the general matrix multiplication the recursion hands its
/// general block products to.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Omega {
    /// Classical cubic multiplication.
    Three,
    /// 2x2 recursion with 7 products.
    Log2Of7,
    /// Any other exponent; always treated as inexact.
    Other(f64),
}

impl Omega {
    pub fn as_f64(self) -> f64 {
        match self {
            Omega::Three => 3.0,
            Omega::Log2Of7 => 7f64.log2(),
            Omega::Other(x) => x,
        }
    }

    /// `k^ω` as an exact integer when it is one: `k³`, or `7^t` for
    /// `k = 2^t` under `ω = log₂7`.
    pub fn pow_exact(self, k: usize) -> Option<BigInt> {
        match self {
            Omega::Three => Some(BigInt::from(k).pow(3)),
            Omega::Log2Of7 => {
                if k.is_power_of_two() {
                    Some(BigInt::from(7).pow(k.trailing_zeros()))
                } else {
                    None
                }
            }
            Omega::Other(_) => None,
        }
    }
}

impl std::str::FromStr for Omega {
    type Err = String;

    fn from_str(s: &str) -> Result<Omega, String> {
        match s {
            "3" => Ok(Omega::Three),
            "log27" | "log2(7)" | "log2_7" => Ok(Omega::Log2Of7),
            other => {
                let x: f64 = other.parse().map_err(|_| format!("bad exponent {other:?}"))?;
                if !(2.0..=3.0).contains(&x) {
                    return Err(format!("exponent {x} outside [2, 3]"));
                }
                Ok(Omega::Other(x))
            }
        }
    }
}

impl std::fmt::Display for Omega {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Omega::Three => write!(f, "3"),
            Omega::Log2Of7 => write!(f, "log2(7)"),
            Omega::Other(x) => write!(f, "{x}"),
        }
    }
}

/// A complexity factor, exact when the inputs allow it.
#[derive(Clone, Debug, PartialEq)]
pub enum GammaValue {
    Exact(BigRational),
    Approx(f64),
}

impl GammaValue {
    pub fn exact_int(n: i64) -> GammaValue {
        GammaValue::Exact(BigRational::from_integer(n.into()))
    }

    pub fn as_f64(&self) -> f64 {
        match self {
            GammaValue::Exact(r) => r.to_f64().expect("gamma fits in f64"),
            GammaValue::Approx(x) => *x,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, GammaValue::Exact(_))
    }
}

impl std::fmt::Display for GammaValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GammaValue::Exact(r) if r.denom().is_one() => write!(f, "{}", r.numer()),
            GammaValue::Exact(r) => write!(f, "{}/{}", r.numer(), r.denom()),
            GammaValue::Approx(x) => write!(f, "{x:.6}"),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("no γ known for side format {key:?}; add it to the registry first")]
    MissingGamma { key: String },
    #[error("k^ω − q_ab is not positive for k={k}, profile {profile:?}")]
    DegenerateDenominator { k: usize, profile: (u32, u32, u32) },
    #[error("recursion criterion only applies to A·Aᵀ formats, not {format}")]
    CriterionNotApplicable { format: String },
    #[error("γ dependencies of {key} do not reach a fixed point")]
    NoFixedPoint { key: String },
}

/// Computes `γ = (r − q_ab − q_ag(1−γ_ag) − q_gb(1−γ_gb)) / (k^ω − q_ab)`.
/// Side factors may be `None` when the corresponding count is zero.
pub fn gamma(
    rank: usize,
    profile: RecursionProfile,
    k: usize,
    omega: Omega,
    gamma_ag: Option<&GammaValue>,
    gamma_gb: Option<&GammaValue>,
) -> Result<GammaValue, AnalysisError> {
    let (q_ab, q_ag, q_gb) = profile.as_tuple();
    assert!(q_ag == 0 || gamma_ag.is_some(), "q_ag > 0 needs a side γ");
    assert!(q_gb == 0 || gamma_gb.is_some(), "q_gb > 0 needs a side γ");

    let exact_ok = |g: Option<&GammaValue>, q: u32| q == 0 || g.map_or(false, GammaValue::is_exact);
    if let Some(kw) = omega.pow_exact(k) {
        if exact_ok(gamma_ag, q_ag) && exact_ok(gamma_gb, q_gb) {
            let big = |x: u32| BigRational::from_integer(BigInt::from(x));
            let mut num = BigRational::from_integer(BigInt::from(rank)) - big(q_ab);
            for (q, g) in [(q_ag, gamma_ag), (q_gb, gamma_gb)] {
                if q > 0 {
                    let GammaValue::Exact(g) = g.unwrap() else { unreachable!() };
                    num -= big(q) * (BigRational::one() - g);
                }
            }
            let den = BigRational::from_integer(kw) - big(q_ab);
            if !den.is_positive() {
                return Err(AnalysisError::DegenerateDenominator { k, profile: profile.as_tuple() });
            }
            return Ok(GammaValue::Exact(num / den));
        }
    }
    let kw = (k as f64).powf(omega.as_f64());
    let mut num = rank as f64 - q_ab as f64;
    for (q, g) in [(q_ag, gamma_ag), (q_gb, gamma_gb)] {
        if q > 0 {
            num -= q as f64 * (1.0 - g.unwrap().as_f64());
        }
    }
    let den = kw - q_ab as f64;
    if den <= 0.0 {
        return Err(AnalysisError::DegenerateDenominator { k, profile: profile.as_tuple() });
    }
    Ok(GammaValue::Approx(num / den))
}

/// Shared configuration for γ computations: the exponent and the γ values of
/// formats that appear as side calls.
#[derive(Clone, Debug)]
pub struct AnalysisConfig {
    pub omega: Omega,
    registry: BTreeMap<String, GammaValue>,
}

impl AnalysisConfig {
    /// Starts with only the general product (`γ_gg = 1`) known.
    pub fn new(omega: Omega) -> Self {
        let mut registry = BTreeMap::new();
        registry.insert("gg".to_string(), GammaValue::exact_int(1));
        AnalysisConfig { omega, registry }
    }

    pub fn insert(&mut self, format_code: &str, gamma: GammaValue) {
        self.registry.insert(format_code.to_string(), gamma);
    }

    pub fn get(&self, format_code: &str) -> Option<&GammaValue> {
        self.registry.get(format_code)
    }

    /// γ for a size-`k` rank-`rank` scheme of `format` with the given
    /// profile, resolving side formats from the registry.
    pub fn gamma_for(
        &self,
        format: FormatPair,
        k: usize,
        rank: usize,
        profile: RecursionProfile,
    ) -> Result<GammaValue, AnalysisError> {
        let (ag_key, gb_key) = aux_formats(format);
        let lookup = |key: &String, q: u32| -> Result<Option<&GammaValue>, AnalysisError> {
            if q == 0 {
                return Ok(None);
            }
            self.registry
                .get(key)
                .map(Some)
                .ok_or_else(|| AnalysisError::MissingGamma { key: key.clone() })
        };
        let g_ag = lookup(&ag_key, profile.q_ag)?;
        let g_gb = lookup(&gb_key, profile.q_gb)?;
        gamma(rank, profile, k, self.omega, g_ag, g_gb)
    }
}

/// One format whose γ is wanted, with the scheme parameters to compute it
/// from.
#[derive(Clone, Debug)]
pub struct GammaRequest {
    pub format: FormatPair,
    pub k: usize,
    pub rank: usize,
    pub profile: RecursionProfile,
}

/// Computes γ for a set of formats together, resolving side-format values
/// among the requests themselves. Acyclic dependencies are ordered and kept
/// exact where possible; cycles (a gt scheme whose off-diagonal terms are
/// again gt calls, say) are resolved by fixed-point iteration to 1e-12 and
/// come out inexact. Side formats not present anywhere are an error.
pub fn resolve_gammas(
    requests: &[GammaRequest],
    omega: Omega,
) -> Result<BTreeMap<String, GammaValue>, AnalysisError> {
    let mut cfg = AnalysisConfig::new(omega);
    let mut pending: Vec<(String, &GammaRequest)> =
        requests.iter().map(|r| (r.format.code(), r)).collect();

    // Pass 1: everything reachable in dependency order, exactly.
    loop {
        let mut progressed = false;
        pending.retain(|(code, req)| {
            if cfg.get(code).is_some() {
                return false;
            }
            match cfg.gamma_for(req.format, req.k, req.rank, req.profile) {
                Ok(g) => {
                    cfg.insert(code, g);
                    progressed = true;
                    false
                }
                Err(AnalysisError::MissingGamma { .. }) => true,
                // Degenerate rows stay out of the registry; the caller sees
                // the same error again if anything depends on them.
                Err(_) => true,
            }
        });
        if !progressed {
            break;
        }
    }

    // Pass 2: the rest is cyclic (or truly unresolvable). Iterate from
    // γ = 1 for the unknowns, which bounds every real γ from above.
    if !pending.is_empty() {
        let known: Vec<String> = requests.iter().map(|r| r.format.code()).collect();
        for (_, req) in &pending {
            let (ag, gb) = aux_formats(req.format);
            for (key, q) in [(ag, req.profile.q_ag), (gb, req.profile.q_gb)] {
                if q > 0 && cfg.get(&key).is_none() && !known.contains(&key) {
                    return Err(AnalysisError::MissingGamma { key });
                }
            }
        }
        let mut values: BTreeMap<String, f64> =
            pending.iter().map(|(c, _)| (c.clone(), 1.0)).collect();
        let mut converged = false;
        for _ in 0..10_000 {
            let mut delta = 0.0f64;
            for (code, req) in &pending {
                let (ag_key, gb_key) = aux_formats(req.format);
                let side = |key: &str| {
                    cfg.get(key).map(GammaValue::as_f64).or_else(|| values.get(key).copied())
                };
                let g_ag = side(&ag_key).map(GammaValue::Approx);
                let g_gb = side(&gb_key).map(GammaValue::Approx);
                let g = gamma(req.rank, req.profile, req.k, omega, g_ag.as_ref(), g_gb.as_ref())?
                    .as_f64();
                let old = values.insert(code.clone(), g).unwrap();
                delta = delta.max((g - old).abs());
            }
            if delta < 1e-12 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(AnalysisError::NoFixedPoint { key: pending[0].0.clone() });
        }
        for (code, g) in values {
            cfg.insert(&code, GammaValue::Approx(g));
        }
    }

    let mut out = BTreeMap::new();
    for req in requests {
        let code = req.format.code();
        let g = cfg.get(&code).expect("all requests resolved").clone();
        out.insert(code, g);
    }
    Ok(out)
}

/// Operation count of the two-kind recursion `M(n) = q·M(n/k) +
/// (r−q)·(n/k)^ω` with `M(1) = 1`, evaluated at `n` (a power of `k`):
/// `M(n) = n^{log_k q} + B(n^ω − n^{log_k q})` with `B = (r−q)/(k^ω−q)`.
pub fn closed_form_multiplications(rank: usize, q: u32, k: usize, omega: Omega, n: usize) -> f64 {
    assert!(k >= 2 && n >= 1);
    let mut m = n;
    while m > 1 {
        assert_eq!(m % k, 0, "n={n} is not a power of k={k}");
        m /= k;
    }
    if n == 1 {
        return 1.0;
    }
    let w = omega.as_f64();
    let kw = (k as f64).powf(w);
    let b = (rank as f64 - q as f64) / (kw - q as f64);
    if q == 0 {
        return b * (n as f64).powf(w);
    }
    let t1 = (n as f64).powf((q as f64).ln() / (k as f64).ln());
    t1 + b * ((n as f64).powf(w) - t1)
}

/// γ of the blockwise triangular-times-general product that uses a fast
/// general multiplication for every off-diagonal block product: `k(k+1)/2·k`
/// block products, of which the `k²` diagonal-left ones recurse.
pub fn triangular_baseline_gamma(k: usize, omega: Omega) -> Result<GammaValue, AnalysisError> {
    let r = k * k * (k + 1) / 2;
    let q = (k * k) as u32;
    gamma(r, RecursionProfile::new(q, 0, 0), k, omega, None, None)
}

/// γ of the reference recursive `A·Aᵀ` construction that splits into 4x4
/// blocks, spends 34 block products and recurses on 10 of them.
pub fn reference_aat_gamma(omega: Omega) -> Result<GammaValue, AnalysisError> {
    gamma(34, RecursionProfile::new(10, 0, 0), 4, omega, None, None)
}

/// Leading coefficient of the nonzero count `nnz(n)` of a format's tensor,
/// i.e. the `γ` (at `ω = 3`) of the naive algorithm that merely skips
/// products that are structurally zero. A floor for naive evaluation, not
/// for structure-aware classical algorithms, which can do better on
/// symmetric and skew inputs.
pub fn structural_zero_gamma(format: FormatPair) -> BigRational {
    // nnz(n) is a cubic polynomial in n; its third finite difference is six
    // times the leading coefficient. Sample away from small-n irregularities
    // and confirm the fourth difference vanishes.
    let f: Vec<i64> = (5..=9).map(|n| Tensor::build(format, n).nnz() as i64).collect();
    let d3 = f[3] - 3 * f[2] + 3 * f[1] - f[0];
    let d3b = f[4] - 3 * f[3] + 3 * f[2] - f[1];
    assert_eq!(d3, d3b, "nnz growth of {} is not cubic", format.code());
    BigRational::new(d3.into(), 6.into())
}

/// One best-known scheme with its recursion parameters.
#[derive(Clone, Copy, Debug)]
pub struct CatalogEntry {
    pub format: &'static str,
    pub field: Field,
    /// Scheme size, i.e. the block count of the recursion.
    pub k: usize,
    pub rank: usize,
    pub profile: (u32, u32, u32),
}

/// Best known recursion parameters per format: first the integer-coefficient
/// schemes, then the rational ones. Order matters: every entry's side
/// formats appear earlier (or are `gg`/derived from the other section).
pub const CATALOG: &[CatalogEntry] = &[
    CatalogEntry { format: "ug", field: Field::Z, k: 4, rank: 34, profile: (12, 0, 0) },
    CatalogEntry { format: "sg", field: Field::Z, k: 4, rank: 40, profile: (0, 0, 0) },
    CatalogEntry { format: "wg", field: Field::Z, k: 4, rank: 40, profile: (0, 0, 0) },
    CatalogEntry { format: "gt", field: Field::Z, k: 4, rank: 34, profile: (12, 0, 0) },
    CatalogEntry { format: "ut", field: Field::Z, k: 4, rank: 19, profile: (4, 5, 6) },
    CatalogEntry { format: "st", field: Field::Z, k: 5, rank: 39, profile: (0, 0, 5) },
    CatalogEntry { format: "wt", field: Field::Z, k: 4, rank: 22, profile: (0, 0, 4) },
    CatalogEntry { format: "uu", field: Field::Z, k: 4, rank: 19, profile: (4, 10, 0) },
    CatalogEntry { format: "us", field: Field::Z, k: 5, rank: 52, profile: (1, 11, 0) },
    CatalogEntry { format: "uw", field: Field::Z, k: 4, rank: 29, profile: (1, 8, 0) },
    CatalogEntry { format: "sw", field: Field::Z, k: 3, rank: 15, profile: (0, 0, 0) },
    CatalogEntry { format: "ul", field: Field::Z, k: 5, rank: 47, profile: (2, 17, 0) },
    CatalogEntry { format: "ss", field: Field::Z, k: 4, rank: 32, profile: (0, 0, 0) },
    CatalogEntry { format: "ww", field: Field::Z, k: 3, rank: 15, profile: (0, 0, 0) },
    CatalogEntry { format: "wg", field: Field::Q, k: 3, rank: 18, profile: (2, 0, 0) },
    CatalogEntry { format: "st", field: Field::Q, k: 5, rank: 35, profile: (0, 0, 5) },
    CatalogEntry { format: "wt", field: Field::Q, k: 4, rank: 22, profile: (0, 0, 6) },
    CatalogEntry { format: "us", field: Field::Q, k: 4, rank: 28, profile: (1, 6, 0) },
    CatalogEntry { format: "sw", field: Field::Q, k: 3, rank: 14, profile: (0, 2, 1) },
    CatalogEntry { format: "ss", field: Field::Q, k: 4, rank: 30, profile: (0, 1, 0) },
    CatalogEntry { format: "ww", field: Field::Q, k: 3, rank: 15, profile: (3, 0, 0) },
];

/// A skew-symmetric matrix is the zero-diagonal special case of the free-
/// diagonal skew format, so every `w`-side scheme applies to `k` inputs with
/// the same parameters.
pub const DERIVED_FORMATS: &[(&str, &str)] =
    &[("kg", "wg"), ("kt", "wt"), ("uk", "uw"), ("sk", "sw"), ("kk", "ww")];

/// One row of the computed catalog.
#[derive(Clone, Debug)]
pub struct CatalogGamma {
    pub format: String,
    pub field: Field,
    pub k: usize,
    pub rank: usize,
    pub profile: RecursionProfile,
    pub gamma: GammaValue,
    /// Set when the row reuses another format's scheme.
    pub derived_from: Option<&'static str>,
}

/// Computes γ for every catalog entry plus the rows derived from them.
/// Side-format γ values resolve within the same coefficient family first
/// (rational rows prefer rational side schemes), then fall back to the
/// integer family.
pub fn catalog_gammas(omega: Omega) -> Vec<CatalogGamma> {
    let mut z_cfg = AnalysisConfig::new(omega);
    let mut q_reg: BTreeMap<String, GammaValue> = BTreeMap::new();
    let mut rows: Vec<CatalogGamma> = Vec::new();
    for e in CATALOG {
        let (pair, _) = FormatPair::parse(e.format).expect("catalog format parses");
        let profile = RecursionProfile::new(e.profile.0, e.profile.1, e.profile.2);
        let g = match e.field {
            Field::Z => {
                let g = z_cfg
                    .gamma_for(pair, e.k, e.rank, profile)
                    .expect("integer catalog rows resolve in order");
                z_cfg.insert(e.format, g.clone());
                g
            }
            _ => {
                // Prefer same-family side γs, fall back to the integer rows.
                let (ag_key, gb_key) = aux_formats(pair);
                let pick = |key: &str, q: u32| {
                    (q > 0).then(|| {
                        q_reg
                            .get(key)
                            .or_else(|| z_cfg.get(key))
                            .expect("catalog rows resolve in order")
                            .clone()
                    })
                };
                let g_ag = pick(&ag_key, profile.q_ag);
                let g_gb = pick(&gb_key, profile.q_gb);
                let g = gamma(e.rank, profile, e.k, omega, g_ag.as_ref(), g_gb.as_ref())
                    .expect("catalog rows are non-degenerate");
                q_reg.insert(e.format.to_string(), g.clone());
                g
            }
        };
        rows.push(CatalogGamma {
            format: e.format.to_string(),
            field: e.field,
            k: e.k,
            rank: e.rank,
            profile,
            gamma: g,
            derived_from: None,
        });
    }
    let base = rows.clone();
    for &(derived, source) in DERIVED_FORMATS {
        for row in base.iter().filter(|r| r.format == source) {
            rows.push(CatalogGamma {
                format: derived.to_string(),
                derived_from: Some(source),
                ..row.clone()
            });
        }
    }
    rows
}

/// Picks the preferred scheme among candidates by recursion profile: keep
/// the componentwise-maximal profiles, then prefer integer coefficients over
/// rationals, smaller worst denominators, and finally sparser schemes.
pub fn pareto_select(candidates: &[(RecursionProfile, &ExactScheme)]) -> Option<usize> {
    if candidates.is_empty() {
        return None;
    }
    let frontier: Vec<usize> = (0..candidates.len())
        .filter(|&i| !candidates.iter().any(|(p, _)| p.dominates(&candidates[i].0)))
        .collect();
    frontier.into_iter().min_by_key(|&i| {
        let s = candidates[i].1;
        (!s.is_integral() as u8, s.max_denominator(), s.total_support(), i)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheme::Scheme;
    use crate::tensor::Tensor;

    fn naive_profile(code: &str, n: usize, criterion: Option<Criterion>) -> RecursionProfile {
        let t = Tensor::from_code(code, n).unwrap();
        let s = Scheme::naive(&t, 3).unwrap();
        classify_scheme(&s, criterion).unwrap()
    }

    #[test]
    fn criterion_rejected_for_independent_operands() {
        let t = Tensor::from_code("ug", 2).unwrap();
        let s = Scheme::naive(&t, 2).unwrap();
        assert_eq!(
            classify_scheme(&s, Some(Criterion::Uv)),
            Err(AnalysisError::CriterionNotApplicable { format: "ug".into() })
        );
    }

    #[test]
    fn classify_left_structured_times_general() {
        // Naive ug terms are e_{(k,m)} ⊗ e ⊗ e; the left support is diagonal
        // exactly when k == m, which happens for n of the n(n+1)/2 cells,
        // each over n outputs.
        for n in 2..=4 {
            let p = naive_profile("ug", n, None);
            assert_eq!(p.as_tuple(), ((n * n) as u32, 0, 0), "n={n}");
        }
        // A general left operand earns nothing.
        assert_eq!(naive_profile("gg", 3, None).as_tuple(), (0, 0, 0));
    }

    #[test]
    fn classify_two_structured_operands() {
        // Naive us terms for n=2: triples (k ≤ m, l); left-diagonal iff
        // k == m, right-diagonal iff m == l.
        assert_eq!(naive_profile("us", 2, None).as_tuple(), (2, 2, 1));
        // Equal formats fold the right-sided calls onto the left.
        assert_eq!(naive_profile("ss", 2, None).as_tuple(), (2, 4, 0));
    }

    #[test]
    fn classify_transposed_products() {
        // Naive gt terms with diagonal outputs have u = v; both criteria
        // find exactly those.
        let terms_on_diag = |n: usize| (n * n) as u32;
        for n in 2..=3 {
            for c in [Criterion::Uv, Criterion::WDiag] {
                let p = naive_profile("gt", n, Some(c));
                assert_eq!(p.as_tuple(), (terms_on_diag(n), 0, 0), "n={n} {c:?}");
            }
            assert_eq!(naive_profile("gt", n, None).as_tuple(), (0, 0, 0));
        }
        // With a structured operand, u=v still needs diagonal supports to
        // count in full. Naive ut at n=2 has 4 terms: u=v on the two
        // diagonal cells (q_ab), u=v on the off-diagonal cell, which only
        // recurses as a truncated general product (q_gb), and one mixed
        // term with a diagonal right support (q_ag).
        assert_eq!(Tensor::from_code("ut", 2).unwrap().nnz(), 4);
        let p = naive_profile("ut", 2, Some(Criterion::Uv));
        assert_eq!(p.as_tuple(), (2, 1, 1));
    }

    #[test]
    fn gamma_matches_hand_computed_rows() {
        let w = Omega::Log2Of7;
        let exact = |n: i64, d: i64| GammaValue::Exact(BigRational::new(n.into(), d.into()));
        let ug = gamma(34, RecursionProfile::new(12, 0, 0), 4, w, None, None).unwrap();
        assert_eq!(ug, exact(22, 37));
        let sg = gamma(40, RecursionProfile::new(0, 0, 0), 4, w, None, None).unwrap();
        assert_eq!(sg, exact(40, 49));
        let ut =
            gamma(19, RecursionProfile::new(4, 5, 6), 4, w, Some(&ug), Some(&ug)).unwrap();
        assert_eq!(ut, exact(26, 111));
        let uu = gamma(19, RecursionProfile::new(4, 10, 0), 4, w, Some(&ug), None).unwrap();
        assert_eq!(uu, exact(9, 37));
        // Non-power-of-two sizes go inexact.
        let sw = gamma(15, RecursionProfile::new(0, 0, 0), 3, w, None, None).unwrap();
        assert!(!sw.is_exact());
        assert!((sw.as_f64() - 15.0 / 3f64.powf(w.as_f64())).abs() < 1e-12);
        // Cubic recursion keeps everything rational.
        let c = gamma(15, RecursionProfile::new(0, 0, 0), 3, Omega::Three, None, None).unwrap();
        assert_eq!(c, exact(15, 27));
    }

    #[test]
    fn registry_resolves_side_formats() {
        let mut cfg = AnalysisConfig::new(Omega::Log2Of7);
        let (pair, _) = FormatPair::parse("ut").unwrap();
        let profile = RecursionProfile::new(4, 5, 6);
        assert_eq!(
            cfg.gamma_for(pair, 4, 19, profile),
            Err(AnalysisError::MissingGamma { key: "ug".into() })
        );
        cfg.insert("ug", GammaValue::Exact(BigRational::new(22.into(), 37.into())));
        cfg.insert("gt", GammaValue::Exact(BigRational::new(22.into(), 37.into())));
        let g = cfg.gamma_for(pair, 4, 19, profile).unwrap();
        assert_eq!(g, GammaValue::Exact(BigRational::new(26.into(), 111.into())));
    }

    #[test]
    fn aux_formats_normalize_to_canonical_codes() {
        let f = |code: &str| aux_formats(FormatPair::parse(code).unwrap().0);
        assert_eq!(f("ut"), ("ug".to_string(), "gt".to_string()));
        assert_eq!(f("sw"), ("sg".to_string(), "wg".to_string()));
        assert_eq!(f("ul"), ("ug".to_string(), "ug".to_string()));
        assert_eq!(f("uu"), ("ug".to_string(), "ug".to_string()));
        assert_eq!(f("gt"), ("gg".to_string(), "gt".to_string()));
    }

    #[test]
    fn catalog_reproduces_published_factors() {
        let rows = catalog_gammas(Omega::Log2Of7);
        let get = |fmt: &str, field: Field| {
            rows.iter()
                .find(|r| r.format == fmt && r.field == field)
                .unwrap_or_else(|| panic!("{fmt} {field:?} missing"))
                .gamma
                .as_f64()
        };
        for (fmt, want) in [
            ("ug", 0.595),
            ("sg", 0.816),
            ("gt", 0.595),
            ("ut", 0.234),
            ("st", 0.403),
            ("uu", 0.243),
            ("us", 0.513),
            ("ul", 0.425),
            ("ss", 0.653),
            ("wt", 0.416),
            ("kg", 0.816),
            ("kt", 0.416),
            ("uk", 0.516),
            ("sk", 0.687),
            ("kk", 0.687),
        ] {
            assert!((get(fmt, Field::Z) - want).abs() < 1e-3, "{fmt}: {}", get(fmt, Field::Z));
        }
        for (fmt, want) in [
            ("wg", 0.806),
            ("st", 0.360),
            ("wt", 0.399),
            ("us", 0.512),
            ("sw", 0.615),
            ("ss", 0.608),
            ("ww", 0.637),
        ] {
            assert!((get(fmt, Field::Q) - want).abs() < 1e-3, "{fmt} Q: {}", get(fmt, Field::Q));
        }
    }

    #[test]
    fn baseline_factors() {
        assert_eq!(
            triangular_baseline_gamma(2, Omega::Log2Of7).unwrap(),
            GammaValue::Exact(BigRational::new(2.into(), 3.into()))
        );
        // At ω = 3 the blockwise construction gives 1/2 for every k.
        for k in 2..=5 {
            assert_eq!(
                triangular_baseline_gamma(k, Omega::Three).unwrap(),
                GammaValue::Exact(BigRational::new(1.into(), 2.into())),
                "k={k}"
            );
        }
        assert_eq!(
            reference_aat_gamma(Omega::Log2Of7).unwrap(),
            GammaValue::Exact(BigRational::new(8.into(), 13.into()))
        );
        assert_eq!(
            reference_aat_gamma(Omega::Three).unwrap(),
            GammaValue::Exact(BigRational::new(4.into(), 9.into()))
        );
    }

    #[test]
    fn structural_zero_limits() {
        let lead = |code: &str| structural_zero_gamma(FormatPair::parse(code).unwrap().0);
        assert_eq!(lead("gg"), BigRational::from_integer(1.into()));
        assert_eq!(lead("ut"), BigRational::new(1.into(), 6.into()));
        assert_eq!(lead("uu"), BigRational::new(1.into(), 6.into()));
        assert_eq!(lead("ug"), BigRational::new(1.into(), 2.into()));
        assert_eq!(lead("ul"), BigRational::new(1.into(), 3.into()));
        assert_eq!(lead("kk"), BigRational::from_integer(1.into()));
    }

    #[test]
    fn resolver_orders_dependencies_and_iterates_cycles() {
        let req = |code: &str, k, rank, p: (u32, u32, u32)| GammaRequest {
            format: FormatPair::parse(code).unwrap().0,
            k,
            rank,
            profile: RecursionProfile::new(p.0, p.1, p.2),
        };
        let w = Omega::Log2Of7;
        // ut depends on ug and gt; order in the request list must not matter.
        let rs = [req("ut", 4, 19, (4, 5, 6)), req("gt", 4, 34, (12, 0, 0)), req("ug", 4, 34, (12, 0, 0))];
        let out = resolve_gammas(&rs, w).unwrap();
        assert_eq!(out["ut"], GammaValue::Exact(BigRational::new(26.into(), 111.into())));
        assert!(out["ug"].is_exact());

        // A gt scheme whose off-diagonal recursive terms are again gt calls
        // references itself; the fixed point of γ = (8 − 2(1−γ))/(3^ω − 9)
        // is 6/(3^ω − 11).
        let out = resolve_gammas(&[req("gt", 3, 17, (9, 0, 2))], w).unwrap();
        let want = 6.0 / (3f64.powf(w.as_f64()) - 11.0);
        assert!(!out["gt"].is_exact());
        assert!((out["gt"].as_f64() - want).abs() < 1e-9);

        // Depending on an absent format is an error, not a silent guess.
        assert_eq!(
            resolve_gammas(&[req("ut", 4, 19, (4, 5, 6))], w),
            Err(AnalysisError::MissingGamma { key: "ug".into() })
        );
    }

    #[test]
    fn closed_form_approaches_gamma() {
        // For a profile with only self-calls, M(n)/n^ω tends to γ.
        let g = gamma(34, RecursionProfile::new(12, 0, 0), 4, Omega::Log2Of7, None, None)
            .unwrap()
            .as_f64();
        let n = 4usize.pow(6);
        let m = closed_form_multiplications(34, 12, 4, Omega::Log2Of7, n);
        let ratio = m / (n as f64).powf(Omega::Log2Of7.as_f64());
        assert!((ratio - g).abs() / g < 0.01, "ratio {ratio} vs γ {g}");
    }

    #[test]
    fn closed_form_counts() {
        // Strassen all the way down.
        for m in 0..6 {
            let got = closed_form_multiplications(7, 0, 2, Omega::Log2Of7, 1 << m);
            assert!((got - 7f64.powi(m as i32)).abs() < 1e-6, "m={m}");
        }
        // One level of a 4x4 scheme at n = 4 costs exactly its rank.
        let got = closed_form_multiplications(34, 12, 4, Omega::Three, 4);
        assert!((got - 34.0).abs() < 1e-9);
        // Two levels of a 3x3 scheme with 9 self-calls.
        let got = closed_form_multiplications(17, 9, 3, Omega::Log2Of7, 9);
        let want = 9.0 * 17.0 + 8.0 * 3f64.powf(Omega::Log2Of7.as_f64());
        assert!((got - want).abs() < 1e-9);
    }

    #[test]
    fn pareto_prefers_dominant_then_integral() {
        use crate::scheme::ExactScheme;
        let t = Tensor::from_code("gg", 1).unwrap();
        let z = ExactScheme::naive(&t);
        let mut q = z.clone();
        q.terms[0].u[0] = num_rational::Rational64::new(1, 2);
        q.terms[0].v[0] = num_rational::Rational64::from_integer(2);
        let p = |a, b, c| RecursionProfile::new(a, b, c);
        // (2,0,0) dominates (1,0,0); incomparable (0,3,0) survives and the
        // integral scheme wins the tie-break.
        let cands = vec![(p(1, 0, 0), &z), (p(2, 0, 0), &q), (p(0, 3, 0), &z)];
        assert_eq!(pareto_select(&cands), Some(2));
        let cands = vec![(p(2, 0, 0), &z), (p(2, 0, 0), &q)];
        assert_eq!(pareto_select(&cands), Some(0));
        assert_eq!(pareto_select(&[]), None);
    }
}
