//! Bit-packed vectors over GF(2) and GF(3), and row-echelon elimination.
//!
//! # Representation
//!
//! A [`PackedVec`] holds up to 64 field elements in two machine words:
//!
//! * GF(2): bit `i` of `lo` is the coefficient at position `i`; `hi` is 0.
//! * GF(3): two bit planes. Position `i` encodes `0` as `(lo,hi) = (0,0)`,
//!   `1` as `(1,0)` and `2` as `(0,1)`. The code `(1,1)` is forbidden and
//!   never produced. Negation mod 3 swaps the planes, so it costs two moves.
//!
//! Bits above `len` are kept at zero in both planes; every operation below
//! preserves that invariant without extra masking.
//!
//! Addition over GF(3) uses a fixed boolean gate sequence. With
//! `na = !(a.lo | a.hi)` (positions where `a` is zero) and `nb` likewise:
//!
//! ```text
//! sum.lo = (a.lo & nb) | (b.lo & na) | (a.hi & b.hi)
//! sum.hi = (a.hi & nb) | (b.hi & na) | (a.lo & b.lo)
//! ```
//!
//! i.e. a one survives next to a zero, and `2 + 2 = 1`, `1 + 1 = 2`,
//! `1 + 2 = 0`. The sequence is verified exhaustively against scalar
//! arithmetic in the test suite.
//!
//! Matrices wider than 64 columns store each row as a list of packed blocks.
//! [`GFMatrix::echelonize`] records the exact row-operation sequence so that
//! the same elimination can be replayed on any number of right-hand sides,
//! which is what the lifting code does: one echelon form per Jacobian, one
//! cheap replay per lifting step.

use std::fmt;

/// Maximum number of field elements in a single [`PackedVec`].
pub const MAX_LEN: usize = 64;

/// Checks that `p` is a supported characteristic.
#[inline]
fn check_p(p: u8) {
    assert!(p == 2 || p == 3, "unsupported characteristic {p}; only 2 and 3 are packed");
}

/// A vector of up to 64 elements of GF(2) or GF(3), packed into two words.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PackedVec {
    p: u8,
    len: u8,
    lo: u64,
    hi: u64,
}

impl PackedVec {
    /// All-zero vector of `len` elements over GF(`p`).
    ///
    /// # Panics
    /// If `p` is not 2 or 3, or `len > 64`.
    pub fn zero(p: u8, len: usize) -> Self {
        check_p(p);
        assert!(len <= MAX_LEN, "packed length {len} exceeds {MAX_LEN}");
        PackedVec { p, len: len as u8, lo: 0, hi: 0 }
    }

    /// Builds a vector from scalar entries, which must already be reduced mod `p`.
    pub fn from_slice(p: u8, entries: &[u8]) -> Self {
        let mut v = Self::zero(p, entries.len());
        for (i, &e) in entries.iter().enumerate() {
            v.set(i, e);
        }
        v
    }

    /// Raw words `(lo, hi)`. `hi` is always zero over GF(2).
    #[inline]
    pub fn words(&self) -> (u64, u64) {
        (self.lo, self.hi)
    }

    /// Rebuilds a vector from raw words. Caller guarantees the encoding is valid.
    #[inline]
    pub(crate) fn from_words(p: u8, len: usize, lo: u64, hi: u64) -> Self {
        debug_assert!(lo & hi == 0, "invalid GF(3) code 11");
        PackedVec { p, len: len as u8, lo, hi }
    }

    #[inline]
    pub fn p(&self) -> u8 {
        self.p
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len as usize
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn is_zero(&self) -> bool {
        self.lo == 0 && self.hi == 0
    }

    /// Element at position `i`, in `0..p`.
    #[inline]
    pub fn get(&self, i: usize) -> u8 {
        debug_assert!(i < self.len());
        let l = (self.lo >> i) & 1;
        let h = (self.hi >> i) & 1;
        (l + 2 * h) as u8
    }

    /// Sets position `i` to `val`, which must be in `0..p`.
    pub fn set(&mut self, i: usize, val: u8) {
        assert!(i < self.len(), "index {i} out of range for length {}", self.len());
        assert!(val < self.p, "value {val} not reduced mod {}", self.p);
        let bit = 1u64 << i;
        self.lo &= !bit;
        self.hi &= !bit;
        match val {
            0 => {}
            1 => self.lo |= bit,
            _ => self.hi |= bit,
        }
    }

    /// Number of nonzero positions.
    #[inline]
    pub fn support_size(&self) -> u32 {
        (self.lo | self.hi).count_ones()
    }

    /// Iterates `(position, value)` over nonzero entries, in position order.
    pub fn support(&self) -> Support {
        Support { mask: self.lo | self.hi, lo: self.lo, hi: self.hi }
    }

    #[inline]
    fn check_compat(&self, other: &Self) {
        assert!(
            self.p == other.p && self.len == other.len,
            "packed vector mismatch: ({}, len {}) vs ({}, len {})",
            self.p,
            self.len,
            other.p,
            other.len
        );
    }

    /// Elementwise sum mod `p`.
    #[inline]
    pub fn add(&self, other: &Self) -> Self {
        self.check_compat(other);
        if self.p == 2 {
            PackedVec { lo: self.lo ^ other.lo, ..*self }
        } else {
            let (lo, hi) = gf3_add(self.lo, self.hi, other.lo, other.hi);
            PackedVec { lo, hi, ..*self }
        }
    }

    /// Elementwise difference mod `p`.
    #[inline]
    pub fn sub(&self, other: &Self) -> Self {
        if self.p == 2 {
            self.add(other)
        } else {
            self.add(&other.neg())
        }
    }

    /// Elementwise negation mod `p`. Over GF(3) this swaps the bit planes.
    #[inline]
    pub fn neg(&self) -> Self {
        if self.p == 2 {
            *self
        } else {
            PackedVec { lo: self.hi, hi: self.lo, ..*self }
        }
    }

    /// Multiplies every entry by the scalar `c` in `0..p`.
    #[inline]
    pub fn scale(&self, c: u8) -> Self {
        assert!(c < self.p, "scalar {c} not reduced mod {}", self.p);
        match c {
            0 => PackedVec { lo: 0, hi: 0, ..*self },
            1 => *self,
            _ => self.neg(),
        }
    }

    /// Inner product mod `p`, via popcounts of the product planes.
    pub fn dot(&self, other: &Self) -> u8 {
        self.check_compat(other);
        if self.p == 2 {
            ((self.lo & other.lo).count_ones() & 1) as u8
        } else {
            let plo = (self.lo & other.lo) | (self.hi & other.hi);
            let phi = (self.lo & other.hi) | (self.hi & other.lo);
            ((plo.count_ones() + 2 * phi.count_ones()) % 3) as u8
        }
    }

    /// Canonical representative of the scalar class `{v, 2v}` plus the
    /// multiplier `c` with `self == c * canonical`. Over GF(2) the class is
    /// trivial and `c == 1`.
    ///
    /// Two vectors are scalar multiples of each other exactly when their
    /// canonical representatives are equal, which is how the flip engine
    /// detects shared factors over GF(3).
    #[inline]
    pub fn canonical(&self) -> (Self, u8) {
        if self.p == 2 {
            return (*self, 1);
        }
        let n = self.neg();
        if (n.lo, n.hi) < (self.lo, self.hi) {
            (n, 2)
        } else {
            (*self, 1)
        }
    }

    /// Entries as scalars, for conversion and display.
    pub fn to_vec(&self) -> Vec<u8> {
        (0..self.len()).map(|i| self.get(i)).collect()
    }
}

impl fmt::Debug for PackedVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PackedVec(p={}, [", self.p)?;
        for i in 0..self.len() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{}", self.get(i))?;
        }
        write!(f, "])")
    }
}

/// Two-plane addition over GF(3). See the module docs for the gate identity.
#[inline(always)]
pub(crate) fn gf3_add(alo: u64, ahi: u64, blo: u64, bhi: u64) -> (u64, u64) {
    let na = !(alo | ahi);
    let nb = !(blo | bhi);
    let lo = (alo & nb) | (blo & na) | (ahi & bhi);
    let hi = (ahi & nb) | (bhi & na) | (alo & blo);
    (lo, hi)
}

/// Iterator over the nonzero entries of a [`PackedVec`].
pub struct Support {
    mask: u64,
    lo: u64,
    hi: u64,
}

impl Iterator for Support {
    type Item = (usize, u8);

    #[inline]
    fn next(&mut self) -> Option<(usize, u8)> {
        if self.mask == 0 {
            return None;
        }
        let i = self.mask.trailing_zeros() as usize;
        self.mask &= self.mask - 1;
        let val = (((self.lo >> i) & 1) + 2 * ((self.hi >> i) & 1)) as u8;
        Some((i, val))
    }
}

/// A dense matrix over GF(2) or GF(3). Rows are lists of packed 64-column
/// blocks, so the column count is unbounded.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GFMatrix {
    p: u8,
    n_rows: usize,
    n_cols: usize,
    rows: Vec<Vec<PackedVec>>,
}

/// One recorded elementary row operation.
///
/// Replaying the recorded sequence against the original matrix reproduces the
/// echelon matrix; replaying it against a right-hand side applies the same
/// elimination to that vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowOp {
    /// Exchange rows `a` and `b`.
    Swap { a: u32, b: u32 },
    /// `row[dst] += c * row[src]` (mod p).
    AddMul { dst: u32, src: u32, c: u8 },
    /// `row[r] *= c` (mod p).
    Scale { r: u32, c: u8 },
}

impl GFMatrix {
    /// Zero matrix.
    pub fn zero(p: u8, n_rows: usize, n_cols: usize) -> Self {
        check_p(p);
        let blocks = n_cols.div_ceil(MAX_LEN).max(1);
        let row = (0..blocks)
            .map(|b| {
                let w = (n_cols - b * MAX_LEN).min(MAX_LEN);
                PackedVec::zero(p, w)
            })
            .collect::<Vec<_>>();
        GFMatrix { p, n_rows, n_cols, rows: vec![row; n_rows] }
    }

    #[inline]
    pub fn p(&self) -> u8 {
        self.p
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.rows[r][c / MAX_LEN].get(c % MAX_LEN)
    }

    pub fn set(&mut self, r: usize, c: usize, val: u8) {
        self.rows[r][c / MAX_LEN].set(c % MAX_LEN, val);
    }

    fn row_is_zero(&self, r: usize) -> bool {
        self.rows[r].iter().all(PackedVec::is_zero)
    }

    fn apply(&mut self, op: RowOp) {
        match op {
            RowOp::Swap { a, b } => self.rows.swap(a as usize, b as usize),
            RowOp::AddMul { dst, src, c } => {
                let (d, s) = (dst as usize, src as usize);
                debug_assert_ne!(d, s);
                for b in 0..self.rows[d].len() {
                    let scaled = self.rows[s][b].scale(c);
                    self.rows[d][b] = self.rows[d][b].add(&scaled);
                }
            }
            RowOp::Scale { r, c } => {
                let r = r as usize;
                for b in 0..self.rows[r].len() {
                    self.rows[r][b] = self.rows[r][b].scale(c);
                }
            }
        }
    }

    /// Gaussian elimination to row-echelon form with unit pivots.
    ///
    /// Pivot search is top-down per column, so the result is deterministic.
    /// The recorded operation sequence can be replayed on right-hand sides
    /// with [`EchelonForm::reduce_rhs`].
    pub fn echelonize(mut self) -> EchelonForm {
        let mut ops = Vec::new();
        let mut pivots = Vec::new();
        let mut next_row = 0usize;
        for col in 0..self.n_cols {
            if next_row == self.n_rows {
                break;
            }
            let Some(pr) = (next_row..self.n_rows).find(|&r| self.get(r, col) != 0) else {
                continue;
            };
            if pr != next_row {
                let op = RowOp::Swap { a: next_row as u32, b: pr as u32 };
                self.apply(op);
                ops.push(op);
            }
            let pv = self.get(next_row, col);
            if pv != 1 {
                // Over GF(3) the only non-unit pivot is 2, and 2*2 = 1.
                let op = RowOp::Scale { r: next_row as u32, c: 2 };
                self.apply(op);
                ops.push(op);
            }
            for r in next_row + 1..self.n_rows {
                let e = self.get(r, col);
                if e != 0 {
                    let c = (self.p - e) % self.p;
                    let op = RowOp::AddMul { dst: r as u32, src: next_row as u32, c };
                    self.apply(op);
                    ops.push(op);
                }
            }
            pivots.push(col);
            next_row += 1;
        }
        let rank = pivots.len();
        debug_assert!((rank..self.n_rows).all(|r| self.row_is_zero(r)));
        EchelonForm { matrix: self, pivots, rank, ops }
    }
}

/// Result of [`GFMatrix::echelonize`]: the echelon matrix, its pivot columns,
/// the rank, and the replayable row-operation sequence.
#[derive(Clone, Debug)]
pub struct EchelonForm {
    pub matrix: GFMatrix,
    pub pivots: Vec<usize>,
    pub rank: usize,
    pub ops: Vec<RowOp>,
}

impl EchelonForm {
    /// Replays the recorded elimination on a right-hand side in place.
    pub fn reduce_rhs(&self, rhs: &mut [u8]) {
        assert_eq!(rhs.len(), self.matrix.n_rows, "rhs length mismatch");
        let p = self.matrix.p;
        for &op in &self.ops {
            match op {
                RowOp::Swap { a, b } => rhs.swap(a as usize, b as usize),
                RowOp::AddMul { dst, src, c } => {
                    rhs[dst as usize] = (rhs[dst as usize] + c * rhs[src as usize]) % p;
                }
                RowOp::Scale { r, c } => {
                    rhs[r as usize] = (rhs[r as usize] * c) % p;
                }
            }
        }
    }

    /// Solves `A x = rhs` for the matrix that was echelonized.
    ///
    /// Returns the particular solution with all free variables set to zero,
    /// or `None` when the system is inconsistent.
    pub fn solve(&self, rhs: &[u8]) -> Option<Vec<u8>> {
        let p = self.matrix.p;
        let mut r = rhs.to_vec();
        self.reduce_rhs(&mut r);
        // Rows below the rank are identically zero; a nonzero rhs there means
        // the right-hand side is outside the column span.
        if r[self.rank..].iter().any(|&x| x != 0) {
            return None;
        }
        let mut x = vec![0u8; self.matrix.n_cols];
        for row in (0..self.rank).rev() {
            let pc = self.pivots[row];
            let mut acc = r[row] as i32;
            for b in pc / MAX_LEN..self.matrix.rows[row].len() {
                for (off, val) in self.matrix.rows[row][b].support() {
                    let col = b * MAX_LEN + off;
                    if col > pc {
                        acc -= val as i32 * x[col] as i32;
                    }
                }
            }
            // Pivot entries are normalized to 1 during elimination.
            x[pc] = acc.rem_euclid(p as i32) as u8;
        }
        Some(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn gf3_add_matches_scalar_table() {
        for a in 0u8..3 {
            for b in 0u8..3 {
                let va = PackedVec::from_slice(3, &[a]);
                let vb = PackedVec::from_slice(3, &[b]);
                assert_eq!(va.add(&vb).get(0), (a + b) % 3, "{a}+{b}");
                assert_eq!(va.sub(&vb).get(0), (3 + a - b) % 3, "{a}-{b}");
            }
        }
    }

    #[test]
    fn packed_ops_match_scalar_oracle() {
        let mut rng = StdRng::seed_from_u64(0x5eed);
        for p in [2u8, 3] {
            for _ in 0..2000 {
                let len = rng.gen_range(1..=64);
                let xs: Vec<u8> = (0..len).map(|_| rng.gen_range(0..p)).collect();
                let ys: Vec<u8> = (0..len).map(|_| rng.gen_range(0..p)).collect();
                let vx = PackedVec::from_slice(p, &xs);
                let vy = PackedVec::from_slice(p, &ys);
                let sum: Vec<u8> = xs.iter().zip(&ys).map(|(a, b)| (a + b) % p).collect();
                let diff: Vec<u8> = xs.iter().zip(&ys).map(|(a, b)| (p + a - b) % p).collect();
                let neg: Vec<u8> = xs.iter().map(|a| (p - a) % p).collect();
                let dot = xs.iter().zip(&ys).map(|(a, b)| (a * b) as u32).sum::<u32>() % p as u32;
                assert_eq!(vx.add(&vy).to_vec(), sum);
                assert_eq!(vx.sub(&vy).to_vec(), diff);
                assert_eq!(vx.neg().to_vec(), neg);
                assert_eq!(vx.dot(&vy) as u32, dot);
                for c in 0..p {
                    let scaled: Vec<u8> = xs.iter().map(|a| (a * c) % p).collect();
                    assert_eq!(vx.scale(c).to_vec(), scaled);
                }
                let (lo, hi) = vx.add(&vy).words();
                assert_eq!(lo & hi, 0, "forbidden GF(3) code after add");
            }
        }
    }

    #[test]
    fn canonical_identifies_scalar_classes() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..500 {
            let len = rng.gen_range(1..=64);
            let xs: Vec<u8> = (0..len).map(|_| rng.gen_range(0..3)).collect();
            let v = PackedVec::from_slice(3, &xs);
            let (cv, c) = v.canonical();
            assert_eq!(cv.scale(c), v);
            let (cn, _) = v.neg().canonical();
            assert_eq!(cv, cn, "v and 2v must share a canonical representative");
        }
    }

    #[test]
    fn support_iterates_nonzeros_in_order() {
        let v = PackedVec::from_slice(3, &[0, 2, 0, 1, 2]);
        let got: Vec<(usize, u8)> = v.support().collect();
        assert_eq!(got, vec![(1, 2), (3, 1), (4, 2)]);
        assert_eq!(v.support_size(), 3);
    }

    /// Dense scalar elimination used as an oracle for the packed version.
    fn scalar_solve(p: u8, a: &[Vec<u8>], rhs: &[u8]) -> Option<Vec<u8>> {
        let rows = a.len();
        let cols = if rows == 0 { 0 } else { a[0].len() };
        let mut m: Vec<Vec<i32>> =
            a.iter().map(|r| r.iter().map(|&x| x as i32).collect()).collect();
        let mut b: Vec<i32> = rhs.iter().map(|&x| x as i32).collect();
        let p = p as i32;
        let mut pivots = Vec::new();
        let mut nr = 0usize;
        for c in 0..cols {
            let Some(pr) = (nr..rows).find(|&r| m[r][c] % p != 0) else { continue };
            m.swap(nr, pr);
            b.swap(nr, pr);
            let inv = if m[nr][c].rem_euclid(p) == 1 { 1 } else { 2 };
            for x in m[nr].iter_mut() {
                *x = (*x * inv).rem_euclid(p);
            }
            b[nr] = (b[nr] * inv).rem_euclid(p);
            for r in 0..rows {
                if r != nr && m[r][c] % p != 0 {
                    let f = m[r][c];
                    for cc in 0..cols {
                        m[r][cc] = (m[r][cc] - f * m[nr][cc]).rem_euclid(p);
                    }
                    b[r] = (b[r] - f * b[nr]).rem_euclid(p);
                }
            }
            pivots.push((nr, c));
            nr += 1;
            if nr == rows {
                break;
            }
        }
        if b[nr..].iter().any(|&x| x % p != 0) {
            return None;
        }
        let mut x = vec![0u8; cols];
        for &(r, c) in &pivots {
            x[c] = b[r] as u8;
        }
        Some(x)
    }

    #[test]
    fn echelon_solve_matches_scalar_oracle() {
        let mut rng = StdRng::seed_from_u64(42);
        for p in [2u8, 3] {
            for case in 0..300 {
                // Mix narrow and multi-block widths.
                let rows = rng.gen_range(1..20);
                let cols = if case % 3 == 0 { rng.gen_range(65..150) } else { rng.gen_range(1..40) };
                let a: Vec<Vec<u8>> = (0..rows)
                    .map(|_| (0..cols).map(|_| rng.gen_range(0..p)).collect())
                    .collect();
                let mut m = GFMatrix::zero(p, rows, cols);
                for (r, row) in a.iter().enumerate() {
                    for (c, &v) in row.iter().enumerate() {
                        m.set(r, c, v);
                    }
                }
                // Half the cases get a consistent rhs (A * x for random x).
                let rhs: Vec<u8> = if case % 2 == 0 {
                    let x: Vec<u8> = (0..cols).map(|_| rng.gen_range(0..p)).collect();
                    a.iter()
                        .map(|row| {
                            (row.iter().zip(&x).map(|(&m, &v)| (m * v) as u32).sum::<u32>()
                                % p as u32) as u8
                        })
                        .collect()
                } else {
                    (0..rows).map(|_| rng.gen_range(0..p)).collect()
                };
                let ech = m.echelonize();
                let got = ech.solve(&rhs);
                let want = scalar_solve(p, &a, &rhs);
                assert_eq!(got.is_some(), want.is_some(), "solvability p={p} case={case}");
                if let Some(x) = got {
                    // Verify the solution rather than compare vectors: the
                    // particular solutions may differ in free variables.
                    for (r, row) in a.iter().enumerate() {
                        let acc = row.iter().zip(&x).map(|(&m, &v)| (m * v) as u32).sum::<u32>()
                            % p as u32;
                        assert_eq!(acc as u8, rhs[r] % p, "residual row {r}");
                    }
                }
            }
        }
    }

    #[test]
    fn echelon_ops_replay_reproduces_matrix() {
        let mut rng = StdRng::seed_from_u64(9);
        for p in [2u8, 3] {
            let rows = 12;
            let cols = 90;
            let mut m = GFMatrix::zero(p, rows, cols);
            for r in 0..rows {
                for c in 0..cols {
                    m.set(r, c, rng.gen_range(0..p));
                }
            }
            let original = m.clone();
            let ech = m.echelonize();
            let mut replay = original;
            for &op in &ech.ops {
                replay.apply(op);
            }
            assert_eq!(replay, ech.matrix);
        }
    }
}
