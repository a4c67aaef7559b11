//! Lifting a scheme mod p to an exact scheme over Z or Q.
//!
//! A scheme that verifies mod p is a root of the polynomial system
//! `contract(X) − T = 0` over GF(p). Newton iteration refines it digit by
//! digit: if `X` is correct mod `p^j`, the residual is `p^j · g` for some `g`,
//! and solving `J·δ ≡ −g (mod p)` with the Jacobian `J` and updating
//! `X += p^j · δ` makes it correct mod `p^{j+1}`. The simplified variant used
//! here keeps the Jacobian fixed at the starting point, so it is echelonized
//! once and each step only replays the elimination on a new right-hand side.
//! When a step's system is inconsistent the scheme admits no such lift and
//! the search must supply a different mod-p scheme.
//!
//! After enough steps the residues mod `p^steps` determine small rational
//! coefficients uniquely: [`rational_reconstruct`] inverts `a ≡ n/d` by the
//! half-extended Euclidean algorithm, accepting only `|n|, d ≤ √(m/2)` with
//! `gcd(n, d) = 1` and `d` invertible mod `m`. The reconstructed scheme is
//! verified exactly before it is returned; a scheme whose true coefficients
//! need a larger modulus fails reconstruction rather than passing silently.

use num_integer::Integer;
use num_rational::Rational64;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::gf::GFMatrix;
use crate::scheme::{ExactScheme, ExactTerm, Field, Scheme, SchemeError, Term, VerifyError};
use crate::tensor::Tensor;
use crate::PackedVec;

#[derive(Debug, Error)]
pub enum LiftError {
    #[error("input scheme does not verify mod its field: {0}")]
    InputNotVerified(#[source] VerifyError),
    #[error("modulus {p}^{steps} does not fit in 63 bits")]
    ModulusOverflow { p: u8, steps: u32 },
    #[error("no lift exists: the correction system at step {step} is inconsistent")]
    NotLiftable { step: u32 },
    #[error("rational reconstruction failed: {reason}")]
    ReconstructionFailed { reason: String },
    #[error("coefficient denominator {den} is divisible by {p}")]
    DenominatorNotInvertible { den: i64, p: u8 },
    #[error(transparent)]
    Scheme(#[from] SchemeError),
}

/// One term with coefficients as residues mod `p^steps`.
#[derive(Clone, Debug)]
pub struct PadicTerm {
    pub u: Vec<u64>,
    pub v: Vec<u64>,
    pub w: Vec<u64>,
}

/// A scheme lifted to residues mod `p^steps`.
#[derive(Clone, Debug)]
pub struct PadicScheme {
    pub header: crate::scheme::SchemeHeader,
    pub p: u8,
    pub steps: u32,
    pub modulus: u64,
    pub terms: Vec<PadicTerm>,
}

impl PadicScheme {
    /// Contraction of the terms, reduced mod `m`.
    fn contract_mod(&self, m: u64) -> Vec<u64> {
        let [d1, d2, d3] = self.header.dims();
        let mut out = vec![0u64; d1 * d2 * d3];
        for t in &self.terms {
            for i in 0..d1 {
                if t.u[i] == 0 {
                    continue;
                }
                for j in 0..d2 {
                    if t.v[j] == 0 {
                        continue;
                    }
                    let uv = mul_mod(t.u[i] % m, t.v[j] % m, m);
                    for k in 0..d3 {
                        if t.w[k] != 0 {
                            let cell = &mut out[(i * d2 + j) * d3 + k];
                            *cell = (*cell + mul_mod(uv, t.w[k] % m, m)) % m;
                        }
                    }
                }
            }
        }
        out
    }

    /// Checks `contract ≡ tensor (mod m)` for any divisor `m` of the modulus.
    pub fn verify_mod(&self, tensor: &Tensor, m: u64) -> bool {
        let [d1, d2, d3] = self.header.dims();
        assert_eq!([d1, d2, d3], tensor.dims, "scheme and tensor dimensions differ");
        let got = self.contract_mod(m);
        for (idx, &have) in got.iter().enumerate() {
            let k = idx % d3;
            let j = (idx / d3) % d2;
            let i = idx / (d3 * d2);
            let want = (tensor.get(i, j, k) as i128).rem_euclid(m as i128) as u64;
            if have != want {
                return false;
            }
        }
        true
    }

    /// Reconstructs exact rational coefficients from the residues and
    /// verifies the result against `tensor`.
    pub fn reconstruct(&self, tensor: &Tensor) -> Result<ExactScheme, LiftError> {
        let m = self.modulus;
        let rec = |x: &u64| {
            rational_reconstruct(*x, m).ok_or_else(|| LiftError::ReconstructionFailed {
                reason: format!("residue {x} mod {m} has no small fraction"),
            })
        };
        let terms = self
            .terms
            .iter()
            .map(|t| {
                Ok(ExactTerm {
                    u: t.u.iter().map(rec).collect::<Result<_, _>>()?,
                    v: t.v.iter().map(rec).collect::<Result<_, _>>()?,
                    w: t.w.iter().map(rec).collect::<Result<_, _>>()?,
                })
            })
            .collect::<Result<Vec<_>, LiftError>>()?;
        let integral = terms
            .iter()
            .all(|t: &ExactTerm| t.u.iter().chain(&t.v).chain(&t.w).all(|c| c.denom().is_one()));
        let mut header = self.header.clone();
        header.field = if integral { Field::Z } else { Field::Q };
        let exact = ExactScheme { header, terms };
        exact.verify(tensor).map_err(|e| LiftError::ReconstructionFailed {
            reason: format!("reconstructed scheme is not exact: {e}"),
        })?;
        Ok(exact)
    }
}

#[inline]
fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

/// Lifts a verified mod-p scheme to residues mod `p^steps` by simplified
/// Newton iteration. The returned scheme satisfies
/// `contract ≡ tensor (mod p^steps)`.
pub fn hensel_lift(scheme: &Scheme, tensor: &Tensor, steps: u32) -> Result<PadicScheme, LiftError> {
    assert!(steps >= 1, "at least one digit");
    let p = scheme.p();
    let modulus = (p as u64)
        .checked_pow(steps)
        .filter(|&m| m < (1u64 << 63))
        .ok_or(LiftError::ModulusOverflow { p, steps })?;
    scheme.verify(tensor).map_err(LiftError::InputNotVerified)?;

    let [d1, d2, d3] = scheme.header.dims();
    let r = scheme.rank();
    let rows = d1 * d2 * d3;
    let cols = r * (d1 + d2 + d3);
    let row_of = |i: usize, j: usize, k: usize| (i * d2 + j) * d3 + k;

    // Jacobian of the contraction at the starting point, frozen across steps.
    // Columns: all u coefficients, then all v, then all w, term-major.
    let mut jac = GFMatrix::zero(p, rows, cols);
    for (q, t) in scheme.terms.iter().enumerate() {
        for i in 0..d1 {
            let col = q * d1 + i;
            for (j, vj) in t.v.support() {
                for (k, wk) in t.w.support() {
                    jac.set(row_of(i, j, k), col, vj * wk % p);
                }
            }
        }
        for j in 0..d2 {
            let col = r * d1 + q * d2 + j;
            for (i, ui) in t.u.support() {
                for (k, wk) in t.w.support() {
                    jac.set(row_of(i, j, k), col, ui * wk % p);
                }
            }
        }
        for k in 0..d3 {
            let col = r * d1 + r * d2 + q * d3 + k;
            for (i, ui) in t.u.support() {
                for (j, vj) in t.v.support() {
                    jac.set(row_of(i, j, k), col, ui * vj % p);
                }
            }
        }
    }
    let ech = jac.echelonize();

    let mut lifted = PadicScheme {
        header: scheme.header.clone(),
        p,
        steps,
        modulus,
        terms: scheme
            .terms
            .iter()
            .map(|t| PadicTerm {
                u: (0..d1).map(|i| t.u.get(i) as u64).collect(),
                v: (0..d2).map(|j| t.v.get(j) as u64).collect(),
                w: (0..d3).map(|k| t.w.get(k) as u64).collect(),
            })
            .collect(),
    };

    let mut pj = 1u64; // p^j
    for step in 1..steps {
        pj *= p as u64;
        let m_next = pj * p as u64; // p^{j+1}
        let contraction = lifted.contract_mod(m_next);
        let mut rhs = vec![0u8; rows];
        for (idx, &have) in contraction.iter().enumerate() {
            let k = idx % d3;
            let j = (idx / d3) % d2;
            let i = idx / (d3 * d2);
            let want = (tensor.get(i, j, k) as i128).rem_euclid(m_next as i128) as u64;
            let residual = (have + m_next - want) % m_next;
            // Correct digits below p^j stay correct: the residual is a
            // multiple of p^j by construction.
            assert_eq!(residual % pj, 0, "residual lost a settled digit at step {step}");
            let g = (residual / pj) as u8;
            rhs[idx] = (p - g % p) % p; // solve J δ = -g
        }
        let delta = ech.solve(&rhs).ok_or(LiftError::NotLiftable { step })?;
        for (q, t) in lifted.terms.iter_mut().enumerate() {
            for i in 0..d1 {
                t.u[i] = (t.u[i] + pj * delta[q * d1 + i] as u64) % modulus;
            }
            for j in 0..d2 {
                t.v[j] = (t.v[j] + pj * delta[r * d1 + q * d2 + j] as u64) % modulus;
            }
            for k in 0..d3 {
                t.w[k] = (t.w[k] + pj * delta[r * d1 + r * d2 + q * d3 + k] as u64) % modulus;
            }
        }
        assert!(
            lifted.verify_mod(tensor, m_next),
            "lift step {step} failed to restore congruence mod {m_next}"
        );
    }
    Ok(lifted)
}

/// Full pipeline: Hensel-lift a mod-p scheme and reconstruct exact rational
/// coefficients, verified against `tensor`.
pub fn lift_to_exact(
    scheme: &Scheme,
    tensor: &Tensor,
    steps: u32,
) -> Result<ExactScheme, LiftError> {
    hensel_lift(scheme, tensor, steps)?.reconstruct(tensor)
}

/// Largest integer whose square is at most `x`.
fn isqrt(x: u64) -> u64 {
    if x == 0 {
        return 0;
    }
    let mut r = (x as f64).sqrt() as u64;
    while r.checked_mul(r).map_or(true, |s| s > x) {
        r -= 1;
    }
    while (r + 1).checked_mul(r + 1).map_or(false, |s| s <= x) {
        r += 1;
    }
    r
}

/// Recovers the unique fraction `n/d ≡ a (mod m)` with `|n| ≤ √(m/2)`,
/// `0 < d ≤ √(m/2)`, `gcd(n,d) = 1` and `gcd(d,m) = 1`, if one exists.
pub fn rational_reconstruct(a: u64, m: u64) -> Option<Rational64> {
    assert!(m > 1 && m < (1 << 63));
    let bound = isqrt(m / 2) as i128;
    let (mut r0, mut t0) = (m as i128, 0i128);
    let (mut r1, mut t1) = ((a % m) as i128, 1i128);
    while r1 > bound {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    if t1 == 0 {
        return None;
    }
    let (num, den) = if t1 < 0 { (-r1, -t1) } else { (r1, t1) };
    if den > bound || num.gcd(&den) != 1 || den.gcd(&(m as i128)) != 1 {
        return None;
    }
    Some(Rational64::new(num as i64, den as i64))
}

/// Reduces an exact scheme mod p, mapping `n/d` to `n · d⁻¹`. Terms with a
/// factor that vanishes mod p are dropped, so the result can have lower rank;
/// it still verifies mod p whenever the input was exact.
pub fn reduce_mod(exact: &ExactScheme, p: u8) -> Result<Scheme, LiftError> {
    let [d1, d2, d3] = exact.header.dims();
    for d in [d1, d2, d3] {
        if d > crate::gf::MAX_LEN {
            return Err(SchemeError::TooWide(d).into());
        }
    }
    let reduce_vec = |xs: &[Rational64]| -> Result<PackedVec, LiftError> {
        let mut v = PackedVec::zero(p, xs.len());
        for (i, c) in xs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let den = *c.denom();
            if den % p as i64 == 0 {
                return Err(LiftError::DenominatorNotInvertible { den, p });
            }
            let n = c.numer().rem_euclid(p as i64) as u8;
            let d = den.rem_euclid(p as i64) as u8;
            // Over GF(2) and GF(3) every nonzero residue is its own inverse.
            v.set(i, n * d % p);
        }
        Ok(v)
    };
    let mut terms = Vec::new();
    for t in &exact.terms {
        let u = reduce_vec(&t.u)?;
        let v = reduce_vec(&t.v)?;
        let w = reduce_vec(&t.w)?;
        if u.is_zero() || v.is_zero() || w.is_zero() {
            continue;
        }
        terms.push(Term { u, v, w });
    }
    let mut header = exact.header.clone();
    header.field = if p == 2 { Field::F2 } else { Field::F3 };
    Ok(Scheme { header, terms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::Signed;

    #[test]
    fn isqrt_is_exact() {
        for x in 0..2000u64 {
            let r = isqrt(x);
            assert!(r * r <= x && (r + 1) * (r + 1) > x, "x={x}");
        }
        assert_eq!(isqrt(u64::MAX / 4), (1u64 << 31) - 1);
    }

    #[test]
    fn reconstruction_round_trips_small_fractions() {
        let m: u64 = 3u64.pow(10); // 59049, bound 171
        for num in -20i64..=20 {
            for den in 1i64..=20 {
                if num.gcd(&den) != 1 || den % 3 == 0 {
                    continue;
                }
                // Encode num/den as a residue mod m.
                let inv = mod_inverse(den.rem_euclid(m as i64) as u64, m);
                let residue = mul_mod(num.rem_euclid(m as i64) as u64, inv, m);
                let got = rational_reconstruct(residue, m);
                assert_eq!(got, Some(Rational64::new(num, den)), "{num}/{den}");
            }
        }
    }

    fn mod_inverse(a: u64, m: u64) -> u64 {
        // Fermat is unavailable for composite m; extended Euclid instead.
        let (mut r0, mut t0) = (m as i128, 0i128);
        let (mut r1, mut t1) = (a as i128, 1i128);
        while r1 != 0 {
            let q = r0 / r1;
            (r0, r1) = (r1, r0 - q * r1);
            (t0, t1) = (t1, t0 - q * t1);
        }
        assert_eq!(r0, 1, "not invertible");
        t0.rem_euclid(m as i128) as u64
    }

    #[test]
    fn reconstruction_rejects_out_of_range_values() {
        let m: u64 = 3u64.pow(10);
        let bound = isqrt(m / 2) as i64;
        // A residue encoding a fraction just past the bound must not round
        // trip to it.
        let too_big = bound + 1;
        let got = rational_reconstruct(too_big.rem_euclid(m as i64) as u64, m);
        assert_ne!(got, Some(Rational64::from_integer(too_big)));
    }

    #[test]
    fn naive_scheme_lifts_to_signed_unit_coefficients() {
        // The mod-p naive scheme folds the -1 coefficients to p-1. Lifting
        // must recover an exact scheme; the sign may land on any factor of a
        // term (u⊗v⊗(-w) = (-u)⊗v⊗w), so check values, not positions.
        for (code, n, p) in [("kg", 3, 2), ("kg", 3, 3), ("kt", 3, 3), ("ww", 2, 2)] {
            let t = Tensor::from_code(code, n).unwrap();
            let s = Scheme::naive(&t, p).unwrap();
            let exact = lift_to_exact(&s, &t, 8).unwrap_or_else(|e| panic!("{code} p={p}: {e}"));
            exact.verify(&t).unwrap();
            assert_eq!(exact.header.field, Field::Z);
            assert_eq!(exact.rank(), s.rank());
            for term in &exact.terms {
                for c in term.u.iter().chain(&term.v).chain(&term.w) {
                    assert!(c.abs() <= Rational64::one(), "{code} p={p}: coefficient {c}");
                }
            }
        }
    }

    #[test]
    fn padic_invariant_holds_at_every_scale() {
        let t = Tensor::from_code("kg", 2).unwrap();
        let s = Scheme::naive(&t, 3).unwrap();
        let lifted = hensel_lift(&s, &t, 7).unwrap();
        assert_eq!(lifted.modulus, 3u64.pow(7));
        let mut m = 1u64;
        for _ in 0..7 {
            m *= 3;
            assert!(lifted.verify_mod(&t, m), "mod {m}");
        }
    }

    #[test]
    fn lift_rejects_invalid_input_and_oversized_modulus() {
        let t = Tensor::from_code("gg", 2).unwrap();
        let mut s = Scheme::naive(&t, 2).unwrap();
        assert!(matches!(
            hensel_lift(&s, &t, 64),
            Err(LiftError::ModulusOverflow { p: 2, steps: 64 })
        ));
        s.terms.pop();
        assert!(matches!(hensel_lift(&s, &t, 4), Err(LiftError::InputNotVerified(_))));
    }

    #[test]
    fn reduce_mod_drops_canceling_pairs() {
        // Two extra terms that cancel over Z both vanish mod 2, leaving a
        // lower-rank scheme that still verifies.
        let t = Tensor::from_code("gg", 1).unwrap();
        let mut e = ExactScheme::naive(&t);
        let two = Rational64::from_integer(2);
        e.terms.push(ExactTerm { u: vec![two], v: vec![Rational64::one()], w: vec![Rational64::one()] });
        e.terms.push(ExactTerm { u: vec![two], v: vec![Rational64::one()], w: vec![-Rational64::one()] });
        e.verify(&t).unwrap();
        let reduced = reduce_mod(&e, 2).unwrap();
        assert_eq!(reduced.rank(), 1);
        reduced.verify(&t).unwrap();
    }

    #[test]
    fn reduce_mod_inverts_denominators() {
        let t = Tensor::from_code("gg", 1).unwrap();
        let half = Rational64::new(1, 2);
        let e = ExactScheme {
            header: crate::scheme::SchemeHeader::new(t.format, 1, Field::Q),
            terms: vec![ExactTerm { u: vec![half], v: vec![two_()], w: vec![Rational64::one()] }],
        };
        e.verify(&t).unwrap();
        let reduced = reduce_mod(&e, 3).unwrap();
        reduced.verify(&t).unwrap();
        assert!(matches!(reduce_mod(&e, 2), Err(LiftError::DenominatorNotInvertible { den: 2, p: 2 })));
    }

    fn two_() -> Rational64 {
        Rational64::from_integer(2)
    }

    #[test]
    fn signed_entries_round_trip_through_reduction_and_lifting() {
        // naive exact -> reduce mod 3 -> lift back to an exact scheme of the
        // same rank with unit coefficients.
        let t = Tensor::from_code("sk", 3).unwrap();
        let e = ExactScheme::naive(&t);
        let reduced = reduce_mod(&e, 3).unwrap();
        reduced.verify(&t).unwrap();
        let back = lift_to_exact(&reduced, &t, 6).unwrap();
        back.verify(&t).unwrap();
        assert_eq!(back.rank(), e.rank());
        assert!(back.is_integral());
    }
}
