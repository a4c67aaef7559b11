//! Multiplication tensors for products of structured matrices.
//!
//! A structure tag fixes how an `n x n` matrix is parameterized by a vector of
//! free entries: a general matrix by all `n²` entries, a triangular or
//! symmetric one by `n(n+1)/2`, a skew-symmetric one by `n(n-1)/2`, and so on.
//! Every matrix cell `(i, j)` either is a structural zero or carries the value
//! `± a_f` of one free entry `f`; [`StructureTag::cell`] returns that mapping.
//!
//! For a product `C = A * B` with formats `a`, `b` the multiplication tensor
//! `T` is indexed by (free entry of A, free entry of B, output cell) and
//! collects the coefficient of `a_i * b_j` in output `k`. The second operand
//! may also be the transpose of the first (`C = A * Aᵀ`); the output is then
//! symmetric and only its upper triangle is kept, which shrinks the third
//! dimension to `n(n+1)/2`.
//!
//! Format codes are two letters, e.g. `"ug"` for upper-triangular times
//! general or `"st"` for symmetric times own transpose. Pairs outside the
//! canonical set of 20 are normalized by two rank-preserving symmetries:
//! transposing the whole product (`AB ↦ BᵀAᵀ`, which reverses the pair and
//! swaps upper/lower) and conjugating by the exchange matrix (which keeps the
//! order and swaps upper/lower). The pair `kw` reduces to neither and is
//! rejected.

use std::fmt;
use thiserror::Error;

/// How a single operand is structured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StructureTag {
    /// All `n²` entries free. Code `g`.
    General,
    /// Upper triangular: zero below the diagonal. Code `u`.
    Upper,
    /// Lower triangular: zero above the diagonal. Code `l`.
    Lower,
    /// Symmetric: `(i,j)` and `(j,i)` share one free entry. Code `s`.
    Symmetric,
    /// Skew-symmetric with zero diagonal: `(j,i) = -(i,j)`. Code `k`.
    Skew,
    /// Skew off the diagonal but with a free diagonal. Code `w`.
    SkewDiag,
}

use StructureTag::*;

impl StructureTag {
    pub fn code(self) -> char {
        match self {
            General => 'g',
            Upper => 'u',
            Lower => 'l',
            Symmetric => 's',
            Skew => 'k',
            SkewDiag => 'w',
        }
    }

    pub fn from_code(c: char) -> Option<Self> {
        Some(match c {
            'g' => General,
            'u' => Upper,
            'l' => Lower,
            's' => Symmetric,
            'k' => Skew,
            'w' => SkewDiag,
            _ => return None,
        })
    }

    /// Number of free entries of an `n x n` matrix with this structure.
    pub fn free_count(self, n: usize) -> usize {
        match self {
            General => n * n,
            Upper | Lower | Symmetric | SkewDiag => n * (n + 1) / 2,
            Skew => n * (n - 1) / 2,
        }
    }

    /// The tag of the transposed matrix (also of the exchange conjugate).
    pub fn flipped(self) -> Self {
        match self {
            Upper => Lower,
            Lower => Upper,
            other => other,
        }
    }

    /// Maps a matrix cell to `(free index, sign)`, or `None` for a structural
    /// zero. The value of cell `(i, j)` is `sign * a[free index]`.
    pub fn cell(self, n: usize, i: usize, j: usize) -> Option<(usize, i8)> {
        debug_assert!(i < n && j < n);
        match self {
            General => Some((i * n + j, 1)),
            Upper => (i <= j).then(|| (upper_index(n, i, j), 1)),
            Lower => (i >= j).then(|| (i * (i + 1) / 2 + j, 1)),
            Symmetric => {
                let (r, c) = (i.min(j), i.max(j));
                Some((upper_index(n, r, c), 1))
            }
            Skew => match i.cmp(&j) {
                std::cmp::Ordering::Less => Some((strict_upper_index(n, i, j), 1)),
                std::cmp::Ordering::Equal => None,
                std::cmp::Ordering::Greater => Some((strict_upper_index(n, j, i), -1)),
            },
            SkewDiag => {
                if i <= j {
                    Some((upper_index(n, i, j), 1))
                } else {
                    Some((upper_index(n, j, i), -1))
                }
            }
        }
    }

    /// Free indices whose representative cell lies on the diagonal. These are
    /// the entries that survive when the operand is restricted to diagonal
    /// blocks, which is what recursion analysis needs. Empty for skew
    /// matrices, whose diagonal is structurally zero.
    pub fn diagonal_free_indices(self, n: usize) -> Vec<usize> {
        if self == Skew {
            return Vec::new();
        }
        (0..n).map(|i| self.cell(n, i, i).expect("diagonal cell is free").0).collect()
    }
}

/// Row-major index into the upper triangle including the diagonal.
/// Row `i` starts after the `n + (n-1) + ... + (n-i+1) = i(2n-i+1)/2` cells
/// of the rows above it.
#[inline]
pub fn upper_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i <= j && j < n);
    i * (2 * n - i + 1) / 2 + (j - i)
}

/// Row-major index into the strict upper triangle (diagonal excluded).
#[inline]
pub fn strict_upper_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

/// The second operand of a product: its own structured matrix, or the
/// transpose of the first operand (an `A * Aᵀ` product).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RightOperand {
    Matrix(StructureTag),
    TransposedLeft,
}

/// A pair of operand formats, e.g. upper-triangular times general.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FormatPair {
    pub left: StructureTag,
    pub right: RightOperand,
}

/// Which symmetry [`FormatPair::parse`] applied to reach the canonical pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Normalization {
    /// The input was already canonical.
    Identity,
    /// Product transposition `AB ↦ BᵀAᵀ`.
    Transposed,
    /// Conjugation by the exchange matrix.
    Reversed,
    /// Both symmetries combined.
    TransposedReversed,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("invalid format code {0:?}: expected two letters from g,u,l,s,k,w plus optional trailing t")]
    Invalid(String),
    #[error("format {0:?} mixes the two skew variants and reduces to no supported pair")]
    Unsupported(String),
}

/// Catalog order of the 20 canonical format pairs.
pub const CANONICAL_CODES: [&str; 20] = [
    "gg", "ug", "sg", "kg", "gt", "ut", "st", "kt", "uu", "us", "uk", "sk", "ul", "ss", "kk",
    "wg", "wt", "uw", "sw", "ww",
];

impl FormatPair {
    pub fn new(left: StructureTag, right: RightOperand) -> Self {
        FormatPair { left, right }
    }

    /// True for `A * Aᵀ` products.
    pub fn right_is_transpose(&self) -> bool {
        self.right == RightOperand::TransposedLeft
    }

    pub fn code(&self) -> String {
        let r = match self.right {
            RightOperand::Matrix(t) => t.code(),
            RightOperand::TransposedLeft => 't',
        };
        format!("{}{}", self.left.code(), r)
    }

    /// Parses a two-letter code and normalizes it to the canonical pair,
    /// reporting which symmetry was applied.
    pub fn parse(code: &str) -> Result<(FormatPair, Normalization), FormatError> {
        let lower = code.to_ascii_lowercase();
        let mut chars = lower.chars();
        let (Some(a), Some(b), None) = (chars.next(), chars.next(), chars.next()) else {
            return Err(FormatError::Invalid(code.to_string()));
        };
        let left = StructureTag::from_code(a).ok_or_else(|| FormatError::Invalid(code.to_string()))?;
        let right = if b == 't' {
            RightOperand::TransposedLeft
        } else {
            RightOperand::Matrix(
                StructureTag::from_code(b).ok_or_else(|| FormatError::Invalid(code.to_string()))?,
            )
        };
        let pair = FormatPair { left, right };
        for (cand, norm) in [
            (pair, Normalization::Identity),
            (pair.reversed(), Normalization::Reversed),
            (pair.transposed(), Normalization::Transposed),
            (pair.transposed().reversed(), Normalization::TransposedReversed),
        ] {
            if cand.is_canonical() {
                return Ok((cand, norm));
            }
        }
        Err(FormatError::Unsupported(code.to_string()))
    }

    /// The pair describing `BᵀAᵀ`, whose tensor is the original one with the
    /// operand axes exchanged and the output transposed.
    pub fn transposed(&self) -> FormatPair {
        match self.right {
            // (A Aᵀ)ᵀ = A Aᵀ.
            RightOperand::TransposedLeft => *self,
            RightOperand::Matrix(b) => FormatPair {
                left: b.flipped(),
                right: RightOperand::Matrix(self.left.flipped()),
            },
        }
    }

    /// The pair describing `(JAJ)(JBJ)` for the exchange matrix `J`.
    pub fn reversed(&self) -> FormatPair {
        FormatPair {
            left: self.left.flipped(),
            right: match self.right {
                RightOperand::Matrix(b) => RightOperand::Matrix(b.flipped()),
                RightOperand::TransposedLeft => RightOperand::TransposedLeft,
            },
        }
    }

    pub fn is_canonical(&self) -> bool {
        CANONICAL_CODES.contains(&self.code().as_str())
    }

    /// All 20 canonical pairs in catalog order.
    pub fn canonical_list() -> Vec<FormatPair> {
        CANONICAL_CODES
            .iter()
            .map(|c| {
                let (p, n) = FormatPair::parse(c).expect("canonical code parses");
                debug_assert_eq!(n, Normalization::Identity);
                p
            })
            .collect()
    }

    /// Tensor dimensions `[free(A), free(B), outputs]` for size `n`.
    pub fn dims(&self, n: usize) -> [usize; 3] {
        let d1 = self.left.free_count(n);
        match self.right {
            RightOperand::Matrix(b) => [d1, b.free_count(n), n * n],
            RightOperand::TransposedLeft => [d1, d1, n * (n + 1) / 2],
        }
    }

    /// Output cells on the diagonal of `C`, as output indices.
    pub fn diagonal_output_indices(&self, n: usize) -> Vec<usize> {
        if self.right_is_transpose() {
            (0..n).map(|k| upper_index(n, k, k)).collect()
        } else {
            (0..n).map(|k| k * n + k).collect()
        }
    }
}

impl fmt::Display for FormatPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code())
    }
}

/// A dense multiplication tensor with entries in `{-1, 0, +1}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tensor {
    pub format: FormatPair,
    pub n: usize,
    pub dims: [usize; 3],
    /// Output slices that were explicitly zeroed, in increasing order.
    pub zeroed: Vec<usize>,
    entries: Vec<i8>,
}

impl Tensor {
    /// Builds the multiplication tensor for the given format pair and size.
    pub fn build(format: FormatPair, n: usize) -> Tensor {
        assert!(n >= 1, "matrix size must be positive");
        let dims = format.dims(n);
        let mut t = Tensor { format, n, dims, zeroed: Vec::new(), entries: vec![0; dims[0] * dims[1] * dims[2]] };
        match format.right {
            RightOperand::Matrix(b) => {
                for k in 0..n {
                    for l in 0..n {
                        for m in 0..n {
                            let Some((ia, sa)) = format.left.cell(n, k, m) else { continue };
                            let Some((ib, sb)) = b.cell(n, m, l) else { continue };
                            t.bump(ia, ib, k * n + l, sa * sb);
                        }
                    }
                }
            }
            RightOperand::TransposedLeft => {
                // C = A Aᵀ is symmetric; keep outputs with k <= l only.
                for k in 0..n {
                    for l in k..n {
                        for m in 0..n {
                            let Some((ia, sa)) = format.left.cell(n, k, m) else { continue };
                            let Some((ib, sb)) = format.left.cell(n, l, m) else { continue };
                            t.bump(ia, ib, upper_index(n, k, l), sa * sb);
                        }
                    }
                }
            }
        }
        t
    }

    /// Parses a code and builds the canonical tensor for it.
    pub fn from_code(code: &str, n: usize) -> Result<Tensor, FormatError> {
        let (pair, _) = FormatPair::parse(code)?;
        Ok(Tensor::build(pair, n))
    }

    fn bump(&mut self, i: usize, j: usize, k: usize, val: i8) {
        let idx = (i * self.dims[1] + j) * self.dims[2] + k;
        // Distinct loop iterations hit distinct cells, so this never
        // accumulates; entries stay in {-1, +1}.
        debug_assert_eq!(self.entries[idx], 0, "tensor cell written twice");
        self.entries[idx] = val;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> i8 {
        self.entries[(i * self.dims[1] + j) * self.dims[2] + k]
    }

    /// Entry reduced into `0..p`.
    #[inline]
    pub fn get_mod(&self, i: usize, j: usize, k: usize, p: u8) -> u8 {
        (self.get(i, j, k) as i16).rem_euclid(p as i16) as u8
    }

    pub fn nnz(&self) -> usize {
        self.entries.iter().filter(|&&e| e != 0).count()
    }

    /// Iterates the nonzero entries as `(i, j, k, value)`.
    pub fn nonzero_entries(&self) -> impl Iterator<Item = (usize, usize, usize, i8)> + '_ {
        let [_, d2, d3] = self.dims;
        self.entries.iter().enumerate().filter(|(_, &e)| e != 0).map(move |(idx, &e)| {
            let k = idx % d3;
            let j = (idx / d3) % d2;
            let i = idx / (d3 * d2);
            (i, j, k, e)
        })
    }

    /// Copy of the tensor with the given output slices zeroed out. The slices
    /// are recorded in [`Tensor::zeroed`] so the removed outputs can be
    /// completed separately later.
    pub fn zero_outputs(&self, outputs: &[usize]) -> Tensor {
        let mut t = self.clone();
        for &k in outputs {
            assert!(k < self.dims[2], "output index {k} out of range");
            for i in 0..self.dims[0] {
                for j in 0..self.dims[1] {
                    t.entries[(i * self.dims[1] + j) * self.dims[2] + k] = 0;
                }
            }
            if !t.zeroed.contains(&k) {
                t.zeroed.push(k);
            }
        }
        t.zeroed.sort_unstable();
        t
    }

    /// For an `A Aᵀ` tensor: zeroes the two corner outputs `(0,0)` and
    /// `(n-1,n-1)`. Those outputs are plain sums of squares, so they can be
    /// computed naively afterwards while the search handles the rest.
    ///
    /// # Panics
    /// If the format is not an `A * Aᵀ` product.
    pub fn zero_corner_outputs(&self) -> Tensor {
        assert!(self.format.right_is_transpose(), "corner zeroing applies to A*Aᵀ formats only");
        let first = upper_index(self.n, 0, 0);
        let last = upper_index(self.n, self.n - 1, self.n - 1);
        self.zero_outputs(&[first, last])
    }

    /// Rank-one terms `(u index, v index, w index, coefficient)` that compute
    /// the zeroed outputs naively: for a zeroed output `(k,k)` these are the
    /// products `a(k,m)²` with coefficient `+1`.
    ///
    /// Only diagonal outputs of `A Aᵀ` formats can be completed this way.
    pub fn completion_terms(&self) -> Vec<(usize, usize, usize, i8)> {
        assert!(self.format.right_is_transpose(), "completion applies to A*Aᵀ formats only");
        let n = self.n;
        let diag: Vec<usize> = self.format.diagonal_output_indices(n);
        let mut terms = Vec::new();
        for &out in &self.zeroed {
            let k = diag
                .iter()
                .position(|&d| d == out)
                .expect("only diagonal outputs can be completed naively");
            for m in 0..n {
                let Some((ia, _sa)) = self.format.left.cell(n, k, m) else { continue };
                // The coefficient is sa², which is always +1.
                terms.push((ia, ia, out, 1));
            }
        }
        terms
    }

    /// True when every axis fits in one packed 64-element word.
    pub fn supports_packed(&self) -> bool {
        self.dims.iter().all(|&d| d <= crate::gf::MAX_LEN)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Closed-form nonzero counts per canonical format, derived by counting
    /// the loop iterations that survive the structural-zero checks.
    fn nnz_formula(code: &str, n: usize) -> usize {
        let tri = n * (n + 1) / 2;
        match code {
            "gg" | "sg" | "ss" | "wg" | "sw" | "ww" => n * n * n,
            "ug" | "gt" | "st" | "us" | "wt" | "uw" => n * tri,
            "kg" | "sk" => n * n * (n - 1),
            "ut" | "uu" => (n * (n + 1) * (n + 2)) / 6,
            "kt" => n * (n - 1) + n * (n - 1) / 2 * (n.max(2) - 2),
            "uk" => tri * (n - 1),
            "ul" => n * (n + 1) * (2 * n + 1) / 6,
            "kk" => n * (n - 1) * (n - 1),
            _ => unreachable!("unknown code {code}"),
        }
    }

    #[test]
    fn tensor_nnz_matches_closed_forms() {
        for code in CANONICAL_CODES {
            for n in 1..=7 {
                let t = Tensor::from_code(code, n).unwrap();
                assert_eq!(t.nnz(), nnz_formula(code, n), "{code} n={n}");
            }
        }
    }

    #[test]
    fn entries_are_signs_only() {
        for code in CANONICAL_CODES {
            let t = Tensor::from_code(code, 4).unwrap();
            for (_, _, _, v) in t.nonzero_entries() {
                assert!(v == 1 || v == -1);
            }
        }
    }

    #[test]
    fn cell_maps_are_injective_and_complete() {
        for tag in [General, Upper, Lower, Symmetric, Skew, SkewDiag] {
            for n in 1..=6 {
                let count = tag.free_count(n);
                let mut seen = vec![false; count];
                let mut representatives = 0;
                for i in 0..n {
                    for j in 0..n {
                        if let Some((idx, sign)) = tag.cell(n, i, j) {
                            assert!(idx < count, "{tag:?} index range");
                            assert!(sign == 1 || sign == -1);
                            if sign == 1 && !seen[idx] {
                                seen[idx] = true;
                                representatives += 1;
                            }
                        }
                    }
                }
                assert_eq!(representatives, count, "{tag:?} n={n}: every free entry has a +1 cell");
                assert!(seen.iter().all(|&s| s), "{tag:?} n={n}: free entries all reachable");
            }
        }
    }

    #[test]
    fn skew_cells_are_antisymmetric() {
        let n = 5;
        for tag in [Skew, SkewDiag] {
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let (idx_ij, s_ij) = tag.cell(n, i, j).unwrap();
                    let (idx_ji, s_ji) = tag.cell(n, j, i).unwrap();
                    assert_eq!(idx_ij, idx_ji);
                    assert_eq!(s_ij, -s_ji);
                }
            }
        }
        assert_eq!(Skew.cell(4, 2, 2), None);
        assert_eq!(SkewDiag.cell(4, 2, 2), Some((upper_index(4, 2, 2), 1)));
    }

    #[test]
    fn parse_normalizes_equivalent_pairs() {
        for (input, canonical, norm) in [
            ("gg", "gg", Normalization::Identity),
            ("gu", "ug", Normalization::TransposedReversed),
            ("lg", "ug", Normalization::Reversed),
            ("gl", "ug", Normalization::Transposed),
            ("ll", "uu", Normalization::Reversed),
            ("lu", "ul", Normalization::Reversed),
            ("su", "us", Normalization::TransposedReversed),
            ("sl", "us", Normalization::Transposed),
            ("ls", "us", Normalization::Reversed),
            ("ku", "uk", Normalization::TransposedReversed),
            ("wu", "uw", Normalization::TransposedReversed),
            ("ks", "sk", Normalization::Transposed),
            ("ws", "sw", Normalization::Transposed),
            ("gk", "kg", Normalization::Transposed),
            ("gw", "wg", Normalization::Transposed),
            ("gs", "sg", Normalization::Transposed),
            ("lt", "ut", Normalization::Reversed),
            ("UT", "ut", Normalization::Identity),
        ] {
            let (pair, n) = FormatPair::parse(input).unwrap_or_else(|e| panic!("{input}: {e}"));
            assert_eq!(pair.code(), canonical, "{input}");
            assert_eq!(n, norm, "{input}");
        }
        assert!(matches!(FormatPair::parse("kw"), Err(FormatError::Unsupported(_))));
        assert!(matches!(FormatPair::parse("wk"), Err(FormatError::Unsupported(_))));
        assert!(matches!(FormatPair::parse("tg"), Err(FormatError::Invalid(_))));
        assert!(matches!(FormatPair::parse("g"), Err(FormatError::Invalid(_))));
        assert!(matches!(FormatPair::parse("ggg"), Err(FormatError::Invalid(_))));
        assert!(matches!(FormatPair::parse("xy"), Err(FormatError::Invalid(_))));
    }

    #[test]
    fn nnz_is_invariant_under_normalization() {
        // The symmetries permute tensor entries, so equivalent pairs must
        // produce tensors of equal support size.
        for (variant, canonical) in
            [("gu", "ug"), ("lg", "ug"), ("gl", "ug"), ("ll", "uu"), ("lu", "ul"), ("sl", "us"),
             ("ku", "uk"), ("lt", "ut"), ("ks", "sk"), ("gw", "wg")]
        {
            for n in 2..=5 {
                let a = {
                    // Build the non-canonical variant directly.
                    let mut chars = variant.chars();
                    let left = StructureTag::from_code(chars.next().unwrap()).unwrap();
                    let right = match chars.next().unwrap() {
                        't' => RightOperand::TransposedLeft,
                        c => RightOperand::Matrix(StructureTag::from_code(c).unwrap()),
                    };
                    Tensor::build(FormatPair::new(left, right), n)
                };
                let b = Tensor::from_code(canonical, n).unwrap();
                assert_eq!(a.nnz(), b.nnz(), "{variant} vs {canonical} n={n}");
            }
        }
    }

    #[test]
    fn canonical_list_has_twenty_distinct_pairs() {
        let list = FormatPair::canonical_list();
        assert_eq!(list.len(), 20);
        for (pair, code) in list.iter().zip(CANONICAL_CODES) {
            assert_eq!(pair.code(), code);
            assert!(pair.is_canonical());
        }
    }

    #[test]
    fn corner_zeroing_removes_two_diagonal_slices() {
        let t = Tensor::from_code("gt", 4).unwrap();
        let z = t.zero_corner_outputs();
        assert_eq!(z.zeroed, vec![upper_index(4, 0, 0), upper_index(4, 3, 3)]);
        // Each zeroed output row of C = A Aᵀ is a sum of n squares here.
        assert_eq!(z.nnz(), t.nnz() - 8);
        let completion = z.completion_terms();
        assert_eq!(completion.len(), 8);
        for (i, j, k, c) in completion {
            assert_eq!(i, j);
            assert!(z.zeroed.contains(&k));
            assert_eq!(c, 1);
        }
    }

    #[test]
    fn completion_skips_structural_zeros() {
        // Skew rows have a structural zero at the diagonal cell, so each
        // corner output is a sum of n-1 squares, not n.
        let z = Tensor::from_code("kt", 4).unwrap().zero_corner_outputs();
        assert_eq!(z.completion_terms().len(), 2 * 3);
    }

    #[test]
    fn diagonal_indices() {
        assert_eq!(General.diagonal_free_indices(3), vec![0, 4, 8]);
        assert_eq!(Upper.diagonal_free_indices(3), vec![0, 3, 5]);
        assert_eq!(Lower.diagonal_free_indices(3), vec![0, 2, 5]);
        assert_eq!(Symmetric.diagonal_free_indices(3), vec![0, 3, 5]);
        assert_eq!(SkewDiag.diagonal_free_indices(3), vec![0, 3, 5]);
        assert_eq!(Skew.diagonal_free_indices(3), Vec::<usize>::new());
        let (gt, _) = FormatPair::parse("gt").unwrap();
        assert_eq!(gt.diagonal_output_indices(3), vec![0, 3, 5]);
        let (gg, _) = FormatPair::parse("gg").unwrap();
        assert_eq!(gg.diagonal_output_indices(3), vec![0, 4, 8]);
    }

    #[test]
    fn transpose_pairs_use_shared_left_indexing() {
        // For A Aᵀ both tensor axes index free entries of A, so the diagonal
        // output slices must be symmetric.
        let t = Tensor::from_code("st", 3).unwrap();
        for k in FormatPair::parse("st").unwrap().0.diagonal_output_indices(3) {
            for i in 0..t.dims[0] {
                for j in 0..t.dims[1] {
                    assert_eq!(t.get(i, j, k), t.get(j, i, k));
                }
            }
        }
    }
}
