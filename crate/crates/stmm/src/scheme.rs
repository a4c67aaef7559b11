//! Bilinear schemes: rank-one term lists over a prime field or over Z/Q,
//! verification against a tensor, cost counting, and a plain-text file format.
//!
//! A rank-`r` scheme for a tensor `T` is a list of terms `(u_q, v_q, w_q)`
//! with `Σ_q u_q ⊗ v_q ⊗ w_q = T`. Terms over GF(2)/GF(3) use packed vectors
//! ([`Scheme`]); exact terms over the integers or rationals use fractions
//! ([`ExactScheme`]).
//!
//! # File format
//!
//! Schemes are stored as plain text. A header of `key=value` lines is
//! followed by `rank` groups of three factor lines:
//!
//! ```text
//! shape=[2,2,2]
//! format=gg
//! field=Z
//! rank=7
//! u 1 0 0 1
//! v 1 0 0 1
//! w 1 0 0 1
//! ...
//! ```
//!
//! `shape` is the matrix size (all three equal), `format` the operand pair
//! code, `field` one of `F2`, `F3`, `Z`, `Q`. Optional header lines:
//! `profile=(a,b,c)` records a recursion profile, `criterion=uv|wdiag|none`
//! the restriction the scheme was searched under, and `corner_zeroed=true`
//! marks a scheme for a tensor whose two corner outputs were removed.
//! Fraction entries are written `num/den` in lowest terms with a positive
//! denominator. The parser skips blank lines and `#` comments; the writer
//! emits none, so writing a parsed canonical file reproduces it byte for
//! byte.

use std::fmt::Write as _;
use std::path::Path;

use num_rational::{BigRational, Rational64};
use num_traits::{One, Zero};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::Criterion;
use crate::gf::{PackedVec, MAX_LEN};
use crate::tensor::{FormatPair, Tensor};

/// Coefficient domain of a stored scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Field {
    F2,
    F3,
    Z,
    Q,
}

impl Field {
    pub fn name(self) -> &'static str {
        match self {
            Field::F2 => "F2",
            Field::F3 => "F3",
            Field::Z => "Z",
            Field::Q => "Q",
        }
    }

    pub fn parse(s: &str) -> Option<Field> {
        Some(match s {
            "F2" => Field::F2,
            "F3" => Field::F3,
            "Z" => Field::Z,
            "Q" => Field::Q,
            _ => return None,
        })
    }

    /// The characteristic for modular fields.
    pub fn char_p(self) -> Option<u8> {
        match self {
            Field::F2 => Some(2),
            Field::F3 => Some(3),
            _ => None,
        }
    }
}

/// Scheme metadata shared by the modular and exact representations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SchemeHeader {
    pub n: usize,
    pub format: FormatPair,
    pub field: Field,
    /// Recursive call counts `(q_ab, q_ag, q_gb)` when known.
    pub profile: Option<(u32, u32, u32)>,
    /// The search restriction this scheme satisfies, if any.
    pub criterion: Option<Criterion>,
    /// True when the scheme targets a tensor with its corner outputs zeroed.
    pub corner_zeroed: bool,
}

impl SchemeHeader {
    pub fn new(format: FormatPair, n: usize, field: Field) -> Self {
        SchemeHeader { n, format, field, profile: None, criterion: None, corner_zeroed: false }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.format.dims(self.n)
    }
}

/// One rank-one term over a prime field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Term {
    pub u: PackedVec,
    pub v: PackedVec,
    pub w: PackedVec,
}

impl Term {
    pub fn factor(&self, axis: usize) -> &PackedVec {
        match axis {
            0 => &self.u,
            1 => &self.v,
            _ => &self.w,
        }
    }

    pub fn factor_mut(&mut self, axis: usize) -> &mut PackedVec {
        match axis {
            0 => &mut self.u,
            1 => &mut self.v,
            _ => &mut self.w,
        }
    }
}

/// A bilinear scheme over GF(2) or GF(3).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scheme {
    pub header: SchemeHeader,
    pub terms: Vec<Term>,
}

/// One rank-one term with rational coefficients.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExactTerm {
    pub u: Vec<Rational64>,
    pub v: Vec<Rational64>,
    pub w: Vec<Rational64>,
}

/// A bilinear scheme over Z or Q.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExactScheme {
    pub header: SchemeHeader,
    pub terms: Vec<ExactTerm>,
}

#[derive(Debug, Error)]
pub enum SchemeError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Format(#[from] crate::tensor::FormatError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("axis of width {0} does not fit a packed vector (max {MAX_LEN})")]
    TooWide(usize),
}

/// Verification failure: the first tensor cell where the contraction differs.
#[derive(Debug, Error, PartialEq, Eq)]
#[error("scheme does not reproduce the tensor at ({i},{j},{k}): expected {expected}, got {got}")]
pub struct VerifyError {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub expected: String,
    pub got: String,
}

impl Scheme {
    /// The characteristic of the scheme's field.
    pub fn p(&self) -> u8 {
        self.header.field.char_p().expect("modular scheme has a prime field")
    }

    pub fn rank(&self) -> usize {
        self.terms.len()
    }

    /// The trivial scheme with one term per nonzero tensor entry.
    pub fn naive(tensor: &Tensor, p: u8) -> Result<Scheme, SchemeError> {
        let [d1, d2, d3] = tensor.dims;
        for d in tensor.dims {
            if d > MAX_LEN {
                return Err(SchemeError::TooWide(d));
            }
        }
        let field = if p == 2 { Field::F2 } else { Field::F3 };
        let mut header = SchemeHeader::new(tensor.format, tensor.n, field);
        header.corner_zeroed = !tensor.zeroed.is_empty();
        let terms = tensor
            .nonzero_entries()
            .map(|(i, j, k, val)| {
                let mut u = PackedVec::zero(p, d1);
                let mut v = PackedVec::zero(p, d2);
                let mut w = PackedVec::zero(p, d3);
                // The entry sign goes on u: p-adic lifting corrects the
                // leading coordinate of a term, so a sign there converges
                // back to the signed unit scheme instead of a rational
                // variety point.
                u.set(i, (val as i16).rem_euclid(p as i16) as u8);
                v.set(j, 1);
                w.set(k, 1);
                Term { u, v, w }
            })
            .collect();
        Ok(Scheme { header, terms })
    }

    /// Contracts the terms into a dense tensor of residues mod p.
    pub fn contract(&self) -> Vec<u8> {
        let [_, d2, d3] = self.header.dims();
        let p = self.p() as u16;
        let mut out = vec![0u8; self.header.dims().iter().product()];
        for t in &self.terms {
            for (i, ui) in t.u.support() {
                for (j, vj) in t.v.support() {
                    let uv = (ui * vj) as u16;
                    for (k, wk) in t.w.support() {
                        let cell = &mut out[(i * d2 + j) * d3 + k];
                        *cell = ((*cell as u16 + uv * wk as u16) % p) as u8;
                    }
                }
            }
        }
        out
    }

    /// Checks that the contraction reproduces `tensor` mod p.
    pub fn verify(&self, tensor: &Tensor) -> Result<(), VerifyError> {
        let [d1, d2, d3] = self.header.dims();
        assert_eq!([d1, d2, d3], tensor.dims, "scheme and tensor dimensions differ");
        let p = self.p();
        let got = self.contract();
        for i in 0..d1 {
            for j in 0..d2 {
                for k in 0..d3 {
                    let want = tensor.get_mod(i, j, k, p);
                    let have = got[(i * d2 + j) * d3 + k];
                    if want != have {
                        return Err(VerifyError {
                            i,
                            j,
                            k,
                            expected: want.to_string(),
                            got: have.to_string(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Number of field additions to evaluate the scheme: forming each left
    /// and right factor costs its support size minus one, and each output
    /// costs the support of its column of W minus one. Scalar multiples are
    /// free.
    pub fn count_additions(&self) -> usize {
        let d3 = self.header.dims()[2];
        let mut adds = 0usize;
        for t in &self.terms {
            adds += (t.u.support_size() as usize).saturating_sub(1);
            adds += (t.v.support_size() as usize).saturating_sub(1);
        }
        for k in 0..d3 {
            let col = self.terms.iter().filter(|t| t.w.get(k) != 0).count();
            adds += col.saturating_sub(1);
        }
        adds
    }

    /// Order-independent content hash: 16 bytes of SHA-256 over the sorted
    /// terms, hex encoded. Two schemes with the same terms in any order get
    /// the same digest.
    pub fn digest(&self) -> String {
        let mut keys: Vec<[u8; 48]> = self
            .terms
            .iter()
            .map(|t| {
                let mut buf = [0u8; 48];
                for (a, f) in [t.u, t.v, t.w].iter().enumerate() {
                    let (lo, hi) = f.words();
                    buf[a * 16..a * 16 + 8].copy_from_slice(&lo.to_le_bytes());
                    buf[a * 16 + 8..a * 16 + 16].copy_from_slice(&hi.to_le_bytes());
                }
                buf
            })
            .collect();
        keys.sort_unstable();
        let mut h = Sha256::new();
        h.update([self.p()]);
        for d in self.header.dims() {
            h.update((d as u64).to_le_bytes());
        }
        for k in &keys {
            h.update(k);
        }
        let full = h.finalize();
        full[..16].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn write_string(&self) -> String {
        let dims = self.header.dims();
        let mut out = header_string(&self.header, self.terms.len());
        for t in &self.terms {
            for (name, f, d) in [("u", &t.u, dims[0]), ("v", &t.v, dims[1]), ("w", &t.w, dims[2])] {
                debug_assert_eq!(f.len(), d);
                out.push_str(name);
                for i in 0..d {
                    let _ = write!(out, " {}", f.get(i));
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<(), SchemeError> {
        std::fs::write(path, self.write_string())?;
        Ok(())
    }
}

impl ExactTerm {
    pub fn factor(&self, axis: usize) -> &[Rational64] {
        match axis {
            0 => &self.u,
            1 => &self.v,
            _ => &self.w,
        }
    }
}

impl ExactScheme {
    pub fn rank(&self) -> usize {
        self.terms.len()
    }

    /// The trivial exact scheme with one term per nonzero tensor entry.
    pub fn naive(tensor: &Tensor) -> ExactScheme {
        let [d1, d2, d3] = tensor.dims;
        let mut header = SchemeHeader::new(tensor.format, tensor.n, Field::Z);
        header.corner_zeroed = !tensor.zeroed.is_empty();
        let terms = tensor
            .nonzero_entries()
            .map(|(i, j, k, val)| {
                let mut t = ExactTerm {
                    u: vec![Rational64::zero(); d1],
                    v: vec![Rational64::zero(); d2],
                    w: vec![Rational64::zero(); d3],
                };
                t.u[i] = Rational64::from_integer(val as i64);
                t.v[j] = Rational64::one();
                t.w[k] = Rational64::one();
                t
            })
            .collect();
        ExactScheme { header, terms }
    }

    /// Contraction minus the tensor, as a sparse list of nonzero cells. An
    /// empty defect means the scheme is valid; a small defect localizes a
    /// transcription error.
    pub fn defect(&self, tensor: &Tensor) -> Vec<(usize, usize, usize, BigRational)> {
        let [d1, d2, d3] = self.header.dims();
        assert_eq!([d1, d2, d3], tensor.dims, "scheme and tensor dimensions differ");
        let mut acc = vec![BigRational::zero(); d1 * d2 * d3];
        for t in &self.terms {
            for (i, ui) in t.u.iter().enumerate().filter(|(_, c)| !c.is_zero()) {
                for (j, vj) in t.v.iter().enumerate().filter(|(_, c)| !c.is_zero()) {
                    let uv = big(ui) * big(vj);
                    for (k, wk) in t.w.iter().enumerate().filter(|(_, c)| !c.is_zero()) {
                        acc[(i * d2 + j) * d3 + k] += &uv * big(wk);
                    }
                }
            }
        }
        let mut out = Vec::new();
        for i in 0..d1 {
            for j in 0..d2 {
                for k in 0..d3 {
                    let mut d = acc[(i * d2 + j) * d3 + k].clone();
                    d -= BigRational::from_integer(tensor.get(i, j, k).into());
                    if !d.is_zero() {
                        out.push((i, j, k, d));
                    }
                }
            }
        }
        out
    }

    /// Checks that the terms sum to `tensor` exactly.
    pub fn verify(&self, tensor: &Tensor) -> Result<(), VerifyError> {
        match self.defect(tensor).into_iter().next() {
            None => Ok(()),
            Some((i, j, k, d)) => {
                let expected = tensor.get(i, j, k).to_string();
                let got = (BigRational::from_integer(tensor.get(i, j, k).into()) + d).to_string();
                Err(VerifyError { i, j, k, expected, got })
            }
        }
    }

    /// Same addition count as [`Scheme::count_additions`]; coefficients other
    /// than `±1` still cost nothing because scalar multiples are not counted.
    pub fn count_additions(&self) -> usize {
        let d3 = self.header.dims()[2];
        let nnz = |xs: &[Rational64]| xs.iter().filter(|c| !c.is_zero()).count();
        let mut adds = 0usize;
        for t in &self.terms {
            adds += nnz(&t.u).saturating_sub(1);
            adds += nnz(&t.v).saturating_sub(1);
        }
        for k in 0..d3 {
            let col = self.terms.iter().filter(|t| !t.w[k].is_zero()).count();
            adds += col.saturating_sub(1);
        }
        adds
    }

    /// Extends a scheme for an output-zeroed tensor with the naive terms
    /// that compute the removed outputs, yielding a scheme for the full
    /// tensor. `zeroed` must be the tensor this scheme verifies against.
    pub fn with_completion(&self, zeroed: &Tensor) -> ExactScheme {
        assert_eq!(self.header.dims(), zeroed.dims, "scheme and tensor dimensions differ");
        assert!(!zeroed.zeroed.is_empty(), "tensor has no zeroed outputs to complete");
        let [d1, d2, d3] = self.header.dims();
        let mut out = self.clone();
        for (i, j, k, c) in zeroed.completion_terms() {
            let mut t = ExactTerm {
                u: vec![Rational64::zero(); d1],
                v: vec![Rational64::zero(); d2],
                w: vec![Rational64::zero(); d3],
            };
            t.u[i] = Rational64::one();
            t.v[j] = Rational64::one();
            t.w[k] = Rational64::from_integer(c as i64);
            out.terms.push(t);
        }
        out.header.corner_zeroed = false;
        out
    }

    /// True when every coefficient is an integer.
    pub fn is_integral(&self) -> bool {
        self.terms.iter().all(|t| {
            t.u.iter().chain(&t.v).chain(&t.w).all(|c| c.denom().is_one())
        })
    }

    /// Largest absolute coefficient denominator.
    pub fn max_denominator(&self) -> i64 {
        self.terms
            .iter()
            .flat_map(|t| t.u.iter().chain(&t.v).chain(&t.w))
            .map(|c| *c.denom())
            .max()
            .unwrap_or(1)
    }

    /// Total number of nonzero coefficients across all factors.
    pub fn total_support(&self) -> usize {
        self.terms
            .iter()
            .flat_map(|t| t.u.iter().chain(&t.v).chain(&t.w))
            .filter(|c| !c.is_zero())
            .count()
    }

    pub fn write_string(&self) -> String {
        let mut out = header_string(&self.header, self.terms.len());
        for t in &self.terms {
            for (name, f) in [("u", &t.u), ("v", &t.v), ("w", &t.w)] {
                out.push_str(name);
                for c in f.iter() {
                    if c.denom().is_one() {
                        let _ = write!(out, " {}", c.numer());
                    } else {
                        let _ = write!(out, " {}/{}", c.numer(), c.denom());
                    }
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<(), SchemeError> {
        std::fs::write(path, self.write_string())?;
        Ok(())
    }
}

fn big(c: &Rational64) -> BigRational {
    BigRational::new((*c.numer()).into(), (*c.denom()).into())
}

/// Evaluates the bilinear map of an exact scheme on inputs `a`, `b` whose
/// elements come from any commutative-enough structure: `zero` produces an
/// additive identity and `scale` applies a rational coefficient. Because the
/// products `m_q` never commute the factors, `T` may itself be a matrix type,
/// which is how a scheme is applied recursively to blocks.
pub fn evaluate_bilinear<T>(
    scheme: &ExactScheme,
    a: &[T],
    b: &[T],
    zero: impl Fn() -> T,
    scale: impl Fn(&T, Rational64) -> T,
) -> Vec<T>
where
    T: Clone + std::ops::Add<Output = T> + std::ops::Mul<Output = T>,
{
    let [d1, d2, d3] = scheme.header.dims();
    assert_eq!(a.len(), d1, "left input length");
    assert_eq!(b.len(), d2, "right input length");
    let combine = |coeffs: &[Rational64], xs: &[T]| {
        let mut acc = zero();
        for (c, x) in coeffs.iter().zip(xs) {
            if !c.is_zero() {
                acc = acc + scale(x, *c);
            }
        }
        acc
    };
    let products: Vec<T> =
        scheme.terms.iter().map(|t| combine(&t.u, a) * combine(&t.v, b)).collect();
    (0..d3)
        .map(|k| {
            let mut acc = zero();
            for (t, m) in scheme.terms.iter().zip(&products) {
                if !t.w[k].is_zero() {
                    acc = acc + scale(m, t.w[k]);
                }
            }
            acc
        })
        .collect()
}

fn header_string(h: &SchemeHeader, rank: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "shape=[{},{},{}]", h.n, h.n, h.n);
    let _ = writeln!(out, "format={}", h.format.code());
    let _ = writeln!(out, "field={}", h.field.name());
    let _ = writeln!(out, "rank={rank}");
    if let Some((a, b, c)) = h.profile {
        let _ = writeln!(out, "profile=({a},{b},{c})");
    }
    if let Some(c) = h.criterion {
        let _ = writeln!(out, "criterion={}", c.code());
    }
    if h.corner_zeroed {
        let _ = writeln!(out, "corner_zeroed=true");
    }
    out
}

/// A scheme read from a file: modular or exact depending on its `field`.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyScheme {
    Modular(Scheme),
    Exact(ExactScheme),
}

impl AnyScheme {
    pub fn header(&self) -> &SchemeHeader {
        match self {
            AnyScheme::Modular(s) => &s.header,
            AnyScheme::Exact(s) => &s.header,
        }
    }

    pub fn rank(&self) -> usize {
        match self {
            AnyScheme::Modular(s) => s.rank(),
            AnyScheme::Exact(s) => s.rank(),
        }
    }

    pub fn write_string(&self) -> String {
        match self {
            AnyScheme::Modular(s) => s.write_string(),
            AnyScheme::Exact(s) => s.write_string(),
        }
    }

    pub fn verify(&self, tensor: &Tensor) -> Result<(), VerifyError> {
        match self {
            AnyScheme::Modular(s) => s.verify(tensor),
            AnyScheme::Exact(s) => s.verify(tensor),
        }
    }
}

/// Parses a scheme file. See the module docs for the format.
pub fn read_scheme_str(text: &str) -> Result<AnyScheme, SchemeError> {
    let err = |line: usize, msg: String| SchemeError::Parse { line, msg };
    let mut n = None;
    let mut format = None;
    let mut field = None;
    let mut rank = None;
    let mut profile = None;
    let mut criterion = None;
    let mut corner_zeroed = false;

    // (line number, axis letter, entries)
    let mut factor_lines: Vec<(usize, char, Vec<Rational64>)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("u ").or_else(|| line.strip_prefix("v ")).or_else(|| line.strip_prefix("w ")) {
            let axis = line.chars().next().unwrap();
            let term = factor_lines.len() / 3 + 1;
            let entries = rest
                .split_whitespace()
                .map(|tok| {
                    parse_entry(tok)
                        .ok_or_else(|| err(lineno, format!("term {term}, {axis} factor: bad coefficient {tok:?}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            factor_lines.push((lineno, axis, entries));
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(err(lineno, format!("expected key=value or factor line, got {line:?}")));
        };
        let (key, value) = (key.trim(), value.trim());
        match key {
            "shape" => {
                let inner = value
                    .strip_prefix('[')
                    .and_then(|v| v.strip_suffix(']'))
                    .ok_or_else(|| err(lineno, format!("bad shape {value:?}")))?;
                let parts: Vec<usize> = inner
                    .split(',')
                    .map(|x| x.trim().parse::<usize>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| err(lineno, format!("bad shape {value:?}: {e}")))?;
                if parts.len() != 3 || parts[0] != parts[1] || parts[1] != parts[2] || parts[0] == 0 {
                    return Err(err(lineno, format!("shape must be [n,n,n] with n>=1, got {value:?}")));
                }
                n = Some(parts[0]);
            }
            "format" => {
                let (pair, norm) = FormatPair::parse(value)?;
                if norm != crate::tensor::Normalization::Identity {
                    return Err(err(lineno, format!("format {value:?} is not canonical; use {}", pair.code())));
                }
                format = Some(pair);
            }
            "field" => {
                field = Some(
                    Field::parse(value).ok_or_else(|| err(lineno, format!("unknown field {value:?}")))?,
                );
            }
            "rank" => {
                rank = Some(value.parse::<usize>().map_err(|e| err(lineno, format!("bad rank: {e}")))?);
            }
            "profile" => {
                let inner = value
                    .strip_prefix('(')
                    .and_then(|v| v.strip_suffix(')'))
                    .ok_or_else(|| err(lineno, format!("bad profile {value:?}")))?;
                let parts: Vec<u32> = inner
                    .split(',')
                    .map(|x| x.trim().parse::<u32>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| err(lineno, format!("bad profile {value:?}: {e}")))?;
                if parts.len() != 3 {
                    return Err(err(lineno, format!("profile needs three counts, got {value:?}")));
                }
                profile = Some((parts[0], parts[1], parts[2]));
            }
            "criterion" => {
                criterion = match value {
                    "none" => None,
                    other => Some(
                        Criterion::parse(other)
                            .ok_or_else(|| err(lineno, format!("unknown criterion {value:?}")))?,
                    ),
                };
            }
            "corner_zeroed" => {
                corner_zeroed = value
                    .parse::<bool>()
                    .map_err(|e| err(lineno, format!("bad corner_zeroed: {e}")))?;
            }
            other => return Err(err(lineno, format!("unknown header key {other:?}"))),
        }
    }

    let n = n.ok_or_else(|| err(0, "missing shape".into()))?;
    let format = format.ok_or_else(|| err(0, "missing format".into()))?;
    let field = field.ok_or_else(|| err(0, "missing field".into()))?;
    let rank = rank.ok_or_else(|| err(0, "missing rank".into()))?;
    let dims = format.dims(n);

    if factor_lines.len() != 3 * rank {
        return Err(err(
            0,
            format!("expected {} factor lines for rank {rank}, found {}", 3 * rank, factor_lines.len()),
        ));
    }
    let mut header = SchemeHeader::new(format, n, field);
    header.profile = profile;
    header.criterion = criterion;
    header.corner_zeroed = corner_zeroed;

    let mut exact_terms = Vec::with_capacity(rank);
    for group in factor_lines.chunks(3) {
        let mut factors: Vec<Vec<Rational64>> = Vec::with_capacity(3);
        for (axis_idx, (lineno, axis, entries)) in group.iter().enumerate() {
            let want = ['u', 'v', 'w'][axis_idx];
            if *axis != want {
                return Err(err(*lineno, format!("expected a {want:?} line, found {axis:?}")));
            }
            if entries.len() != dims[axis_idx] {
                return Err(err(
                    *lineno,
                    format!("{axis} line has {} entries, dimension is {}", entries.len(), dims[axis_idx]),
                ));
            }
            if let Some(p) = field.char_p() {
                for c in entries {
                    if !c.denom().is_one()
                        || *c.numer() < 0
                        || *c.numer() >= p as i64
                    {
                        return Err(err(*lineno, format!("coefficient {c} is not a residue mod {p}")));
                    }
                }
            } else if field == Field::Z {
                for c in entries {
                    if !c.denom().is_one() {
                        return Err(err(*lineno, format!("field=Z forbids fraction {c}")));
                    }
                }
            }
            factors.push(entries.clone());
        }
        let w = factors.pop().unwrap();
        let v = factors.pop().unwrap();
        let u = factors.pop().unwrap();
        exact_terms.push(ExactTerm { u, v, w });
    }

    match field.char_p() {
        Some(p) => {
            for d in dims {
                if d > MAX_LEN {
                    return Err(SchemeError::TooWide(d));
                }
            }
            let terms = exact_terms
                .iter()
                .map(|t| {
                    let pack = |xs: &[Rational64]| {
                        let vals: Vec<u8> = xs.iter().map(|c| *c.numer() as u8).collect();
                        PackedVec::from_slice(p, &vals)
                    };
                    Term { u: pack(&t.u), v: pack(&t.v), w: pack(&t.w) }
                })
                .collect();
            Ok(AnyScheme::Modular(Scheme { header, terms }))
        }
        None => Ok(AnyScheme::Exact(ExactScheme { header, terms: exact_terms })),
    }
}

fn parse_entry(tok: &str) -> Option<Rational64> {
    match tok.split_once('/') {
        None => tok.parse::<i64>().ok().map(Rational64::from_integer),
        Some((num, den)) => {
            let (n, d) = (num.parse::<i64>().ok()?, den.parse::<i64>().ok()?);
            if d <= 0 {
                return None;
            }
            let r = Rational64::new(n, d);
            // Require lowest terms so the canonical writer round-trips.
            (*r.numer() == n && *r.denom() == d).then_some(r)
        }
    }
}

pub fn read_scheme_file(path: impl AsRef<Path>) -> Result<AnyScheme, SchemeError> {
    read_scheme_str(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::CANONICAL_CODES;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn naive_schemes_verify_for_all_formats() {
        for code in CANONICAL_CODES {
            for n in 1..=4 {
                let t = Tensor::from_code(code, n).unwrap();
                for p in [2, 3] {
                    let s = Scheme::naive(&t, p).unwrap();
                    assert_eq!(s.rank(), t.nnz());
                    s.verify(&t).unwrap_or_else(|e| panic!("{code} n={n} p={p}: {e}"));
                }
                let e = ExactScheme::naive(&t);
                e.verify(&t).unwrap_or_else(|err| panic!("{code} n={n} exact: {err}"));
            }
        }
    }

    #[test]
    fn verify_rejects_wrong_scheme() {
        let t = Tensor::from_code("gg", 2).unwrap();
        let mut s = Scheme::naive(&t, 2).unwrap();
        s.terms.pop();
        assert!(s.verify(&t).is_err());
        let mut e = ExactScheme::naive(&t);
        e.terms[0].w[0] = Rational64::new(1, 2);
        let d = e.defect(&t);
        assert_eq!(d.len(), 1, "single perturbed coefficient leaves a single defect cell");
    }

    #[test]
    fn naive_corner_zeroed_scheme_verifies() {
        let t = Tensor::from_code("gt", 4).unwrap().zero_corner_outputs();
        let s = Scheme::naive(&t, 2).unwrap();
        assert!(s.header.corner_zeroed);
        s.verify(&t).unwrap();
    }

    #[test]
    fn addition_count_uses_factor_and_output_supports() {
        // Two terms over gg n=1 sharing the single output: 0 factor adds,
        // 1 output add.
        let t = Tensor::from_code("gg", 1).unwrap();
        let mut s = Scheme::naive(&t, 3).unwrap();
        s.terms.push(s.terms[0]);
        assert_eq!(s.count_additions(), 1);
        // Naive schemes cost one output add per extra term on a slice.
        let t2 = Tensor::from_code("gg", 2).unwrap();
        let s2 = Scheme::naive(&t2, 2).unwrap();
        // 8 terms, 4 outputs, each output hit twice.
        assert_eq!(s2.count_additions(), 4);
    }

    #[test]
    fn digest_ignores_term_order_but_not_content() {
        let t = Tensor::from_code("ug", 3).unwrap();
        let s = Scheme::naive(&t, 3).unwrap();
        let mut shuffled = s.clone();
        shuffled.terms.reverse();
        assert_eq!(s.digest(), shuffled.digest());
        let mut changed = s.clone();
        let mut w = changed.terms[0].w;
        w.set(0, (w.get(0) + 1) % 3);
        changed.terms[0].w = w;
        assert_ne!(s.digest(), changed.digest());
        assert_eq!(s.digest().len(), 32);
    }

    #[test]
    fn modular_roundtrip_is_byte_exact() {
        let t = Tensor::from_code("kt", 3).unwrap();
        for p in [2u8, 3] {
            let s = Scheme::naive(&t, p).unwrap();
            let text = s.write_string();
            let parsed = read_scheme_str(&text).unwrap();
            assert_eq!(parsed.write_string(), text);
            match parsed {
                AnyScheme::Modular(m) => assert_eq!(m, s),
                _ => panic!("expected modular scheme"),
            }
        }
    }

    #[test]
    fn exact_roundtrip_is_byte_exact() {
        let t = Tensor::from_code("ss", 2).unwrap();
        let mut e = ExactScheme::naive(&t);
        e.header.field = Field::Q;
        e.header.profile = Some((3, 1, 0));
        e.header.criterion = Some(Criterion::Uv);
        e.terms[0].u[1] = Rational64::new(-3, 2);
        e.terms[1].w[2] = Rational64::new(7, 5);
        let text = e.write_string();
        let parsed = read_scheme_str(&text).unwrap();
        assert_eq!(parsed.write_string(), text);
        match parsed {
            AnyScheme::Exact(x) => assert_eq!(x, e),
            _ => panic!("expected exact scheme"),
        }
    }

    #[test]
    fn parser_tolerates_comments_and_blank_lines() {
        let text = "\n# a scheme\n\nshape=[1,1,1]\nformat=gg\n\nfield=Z\nrank=1\n# body\nu 1\nv 1\nw 1\n\n";
        let s = read_scheme_str(text).unwrap();
        assert_eq!(s.rank(), 1);
        let canonical = s.write_string();
        assert_eq!(canonical, "shape=[1,1,1]\nformat=gg\nfield=Z\nrank=1\nu 1\nv 1\nw 1\n");
    }

    #[test]
    fn parser_rejects_malformed_input() {
        let base = "shape=[1,1,1]\nformat=gg\nfield=Z\nrank=1\nu 1\nv 1\nw 1\n";
        assert!(read_scheme_str(base).is_ok());
        for (broken, why) in [
            (base.replace("field=Z", "field=F5"), "unknown field"),
            (base.replace("rank=1", "rank=2"), "rank mismatch"),
            (base.replace("u 1", "u 1 0"), "entry count"),
            (base.replace("w 1", "w 1/2"), "fraction in Z"),
            (base.replace("shape=[1,1,1]", "shape=[1,2,1]"), "non-square shape"),
            (base.replace("format=gg", "format=gu"), "non-canonical format"),
            (base.replace("u 1", "q 1"), "unknown line"),
        ] {
            assert!(read_scheme_str(&broken).is_err(), "{why}");
        }
        // Fractions must be reduced with positive denominators.
        let q = "shape=[1,1,1]\nformat=gg\nfield=Q\nrank=1\nu 2/4\nv 1\nw 1\n";
        assert!(read_scheme_str(q).is_err());
        let q2 = "shape=[1,1,1]\nformat=gg\nfield=Q\nrank=1\nu 1/-2\nv 1\nw 1\n";
        assert!(read_scheme_str(q2).is_err());
        let f3 = "shape=[1,1,1]\nformat=gg\nfield=F3\nrank=1\nu 3\nv 1\nw 1\n";
        assert!(read_scheme_str(f3).is_err());
    }

    #[test]
    fn evaluate_matches_direct_product() {
        // Multiply two random 2x2 integer matrices through the naive scheme.
        let t = Tensor::from_code("gg", 2).unwrap();
        let s = ExactScheme::naive(&t);
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..50 {
            let a: Vec<i64> = (0..4).map(|_| rng.gen_range(-9..9)).collect();
            let b: Vec<i64> = (0..4).map(|_| rng.gen_range(-9..9)).collect();
            let ar: Vec<Rational64> = a.iter().map(|&x| Rational64::from_integer(x)).collect();
            let br: Vec<Rational64> = b.iter().map(|&x| Rational64::from_integer(x)).collect();
            let c = evaluate_bilinear(&s, &ar, &br, Rational64::zero, |x, c| x * c);
            for k in 0..2 {
                for l in 0..2 {
                    let want = a[k * 2] * b[l] + a[k * 2 + 1] * b[2 + l];
                    assert_eq!(c[k * 2 + l], Rational64::from_integer(want));
                }
            }
        }
    }
}
