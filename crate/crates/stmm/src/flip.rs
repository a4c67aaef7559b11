//! Random walks over the flip graph of a tensor's rank decompositions.
//!
//! Two rank-one terms that share a factor on one axis, say `x⊗y₁⊗z₁` and
//! `x⊗y₂⊗z₂`, can be rewritten without changing their sum:
//!
//! ```text
//! x⊗y₁⊗z₁ + x⊗y₂⊗z₂  =  x⊗(y₁+y₂)⊗z₁ + x⊗y₂⊗(z₂−z₁)
//! ```
//!
//! Such a *flip* keeps the rank, unless one of the rewritten factors becomes
//! zero, in which case its term drops out and the rank shrinks. A walk
//! performs uniformly random flips, occasionally escaping stagnation with a
//! *plus transition* (split one term in two, then flip), and stops as soon as
//! the rank falls below its starting value.
//!
//! [`search`] runs many such walks: schemes that reach rank `r-1` collect in
//! a pool, and once the pool is large enough the search moves down a level
//! and walks from random pool members. Everything is deterministic given the
//! seed; parallel walkers draw from per-walker streams of the same generator.
//!
//! # Engine representation
//!
//! Terms live in a slot map of raw two-word factors. For each axis, a hash
//! map groups terms by the *canonical class* of their factor on that axis
//! (over GF(3) a factor and its negation are interchangeable after scalar
//! renormalization, so classes are sign-insensitive). Buckets with at least
//! two members are flip candidates; an axis keeps their keys and sizes in a
//! dense list, so sampling a candidate uniformly is one scan of that list and
//! every update is O(1) hash work. Flips never touch the shared axis, and
//! scalar renormalization never moves a term between buckets, so the
//! bookkeeping stays incremental.

use std::collections::BTreeMap;
use std::collections::{HashMap, HashSet};
use std::hash::{BuildHasherDefault, Hasher};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gf::gf3_add;
use crate::scheme::{Scheme, Term};
use crate::tensor::Tensor;
use crate::PackedVec;

/// Raw two-plane words of one factor.
type Words = (u64, u64);

const DEAD: u32 = u32::MAX;

#[inline(always)]
fn neg_words(p: u8, w: Words) -> Words {
    if p == 2 {
        w
    } else {
        (w.1, w.0)
    }
}

#[inline(always)]
fn add_words(p: u8, a: Words, b: Words) -> Words {
    if p == 2 {
        (a.0 ^ b.0, 0)
    } else {
        gf3_add(a.0, a.1, b.0, b.1)
    }
}

#[inline(always)]
fn sub_words(p: u8, a: Words, b: Words) -> Words {
    add_words(p, a, neg_words(p, b))
}

/// Sign-insensitive bucket key: the lexicographically smaller of the factor
/// and its negation.
#[inline(always)]
fn canon_key(p: u8, w: Words) -> Words {
    if p == 2 {
        return w;
    }
    let n = (w.1, w.0);
    if n < w {
        n
    } else {
        w
    }
}

/// Multiply-rotate hasher for the fixed-shape bucket keys. Hash maps are
/// never iterated, so determinism does not depend on the hasher, but a cheap
/// one keeps the per-flip constant small.
#[derive(Default)]
struct KeyHasher(u64);

impl Hasher for KeyHasher {
    #[inline]
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = (self.0 ^ b as u64).wrapping_mul(0x100000001b3);
        }
    }

    #[inline]
    fn write_u64(&mut self, x: u64) {
        self.0 = (self.0 ^ x).wrapping_mul(0x9e3779b97f4a7c15).rotate_left(23);
    }
}

type KeyMap = HashMap<Words, Bucket, BuildHasherDefault<KeyHasher>>;

struct Bucket {
    members: Vec<u32>,
    /// Index into `Axis::active` while the bucket has two or more members.
    active_pos: u32,
}

struct Axis {
    map: KeyMap,
    /// Keys and cached sizes of buckets with at least two members.
    active: Vec<(Words, u32)>,
    /// Total number of unordered candidate pairs, Σ size·(size−1)/2.
    pairs: u64,
}

impl Axis {
    fn new() -> Axis {
        Axis { map: KeyMap::default(), active: Vec::new(), pairs: 0 }
    }
}

struct RawTerm {
    f: [Words; 3],
    /// Position inside the bucket member list, per axis.
    bucket_pos: [u32; 3],
}

/// What a single flip did to the term count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlipOutcome {
    /// No two terms share a factor class on any axis.
    NoCandidates,
    /// A flip was applied and `removed` terms vanished (0, 1 or 2).
    Applied { removed: u32 },
}

/// Mutable walk state for one scheme.
pub struct Engine {
    p: u8,
    dims: [usize; 3],
    terms: Vec<RawTerm>,
    free: Vec<u32>,
    live: Vec<u32>,
    live_pos: Vec<u32>,
    axes: [Axis; 3],
    /// Dense residues of the target tensor, for optional per-step checks.
    target: Option<Vec<u8>>,
}

impl Engine {
    /// Builds the walk state from a scheme. When `target` is given, the
    /// engine can cheaply re-verify the contraction at any point.
    pub fn new(scheme: &Scheme, target: Option<&Tensor>) -> Engine {
        let dims = scheme.header.dims();
        let p = scheme.p();
        let target = target.map(|t| {
            assert_eq!(t.dims, dims, "target tensor does not match the scheme dimensions");
            let mut dense = vec![0u8; dims.iter().product()];
            for (i, j, k, v) in t.nonzero_entries() {
                dense[(i * dims[1] + j) * dims[2] + k] = (v as i16).rem_euclid(p as i16) as u8;
            }
            dense
        });
        let mut eng = Engine {
            p,
            dims,
            terms: Vec::with_capacity(scheme.terms.len() * 2),
            free: Vec::new(),
            live: Vec::new(),
            live_pos: Vec::new(),
            axes: [Axis::new(), Axis::new(), Axis::new()],
            target,
        };
        for t in &scheme.terms {
            let f = [t.u.words(), t.v.words(), t.w.words()];
            assert!(f.iter().all(|w| *w != (0, 0)), "scheme contains a zero factor");
            eng.insert_term(f);
        }
        eng
    }

    pub fn rank(&self) -> usize {
        self.live.len()
    }

    pub fn p(&self) -> u8 {
        self.p
    }

    /// Total number of flip candidates across all axes.
    pub fn candidate_pairs(&self) -> u64 {
        self.axes.iter().map(|a| a.pairs).sum()
    }

    fn insert_term(&mut self, f: [Words; 3]) -> u32 {
        let id = match self.free.pop() {
            Some(id) => {
                self.terms[id as usize] = RawTerm { f, bucket_pos: [0; 3] };
                id
            }
            None => {
                self.terms.push(RawTerm { f, bucket_pos: [0; 3] });
                self.live_pos.push(DEAD);
                (self.terms.len() - 1) as u32
            }
        };
        self.live_pos[id as usize] = self.live.len() as u32;
        self.live.push(id);
        for ax in 0..3 {
            self.bucket_insert(ax, id);
        }
        id
    }

    fn remove_term(&mut self, id: u32) {
        for ax in 0..3 {
            self.bucket_remove(ax, id);
        }
        let pos = self.live_pos[id as usize];
        debug_assert_ne!(pos, DEAD);
        self.live.swap_remove(pos as usize);
        if let Some(&moved) = self.live.get(pos as usize) {
            self.live_pos[moved as usize] = pos;
        }
        self.live_pos[id as usize] = DEAD;
        self.free.push(id);
    }

    fn bucket_insert(&mut self, ax: usize, id: u32) {
        let key = canon_key(self.p, self.terms[id as usize].f[ax]);
        let axis = &mut self.axes[ax];
        let bucket = axis.map.entry(key).or_insert(Bucket { members: Vec::new(), active_pos: DEAD });
        axis.pairs += bucket.members.len() as u64;
        bucket.members.push(id);
        self.terms[id as usize].bucket_pos[ax] = (bucket.members.len() - 1) as u32;
        let size = bucket.members.len() as u32;
        if size == 2 {
            bucket.active_pos = axis.active.len() as u32;
            axis.active.push((key, 2));
        } else if size > 2 {
            axis.active[bucket.active_pos as usize].1 = size;
        }
    }

    fn bucket_remove(&mut self, ax: usize, id: u32) {
        let key = canon_key(self.p, self.terms[id as usize].f[ax]);
        let pos = self.terms[id as usize].bucket_pos[ax] as usize;
        let axis = &mut self.axes[ax];
        let bucket = axis.map.get_mut(&key).expect("term factor is bucketed");
        let old_size = bucket.members.len();
        axis.pairs -= (old_size - 1) as u64;
        debug_assert_eq!(bucket.members[pos], id);
        bucket.members.swap_remove(pos);
        if let Some(&moved) = bucket.members.get(pos) {
            self.terms[moved as usize].bucket_pos[ax] = pos as u32;
        }
        match bucket.members.len() {
            0 => {
                axis.map.remove(&key);
            }
            1 => {
                // Dropped out of the candidate list.
                let apos = bucket.active_pos as usize;
                bucket.active_pos = DEAD;
                axis.active.swap_remove(apos);
                if let Some(&(moved_key, _)) = axis.active.get(apos) {
                    axis.map.get_mut(&moved_key).expect("active key exists").active_pos =
                        apos as u32;
                }
            }
            s => {
                axis.active[bucket.active_pos as usize].1 = s as u32;
            }
        }
    }

    fn update_factor(&mut self, id: u32, ax: usize, new: Words) {
        self.bucket_remove(ax, id);
        self.terms[id as usize].f[ax] = new;
        self.bucket_insert(ax, id);
    }

    /// Applies one uniformly random flip. Candidates are weighted so every
    /// (unordered pair, shared axis) combination is equally likely, and the
    /// rewrite direction is chosen uniformly among the four variants.
    pub fn random_flip(&mut self, rng: &mut impl Rng) -> FlipOutcome {
        let total: u64 = self.candidate_pairs();
        if total == 0 {
            return FlipOutcome::NoCandidates;
        }
        let mut pick = rng.gen_range(0..total);
        let mut ax = 0;
        for (i, axis) in self.axes.iter().enumerate() {
            if pick < axis.pairs {
                ax = i;
                break;
            }
            pick -= axis.pairs;
        }
        // Weight buckets by their pair count so pairs stay uniform overall.
        let axis = &self.axes[ax];
        let mut key = axis.active[0].0;
        for &(k, s) in &axis.active {
            let w = (s as u64) * (s as u64 - 1) / 2;
            if pick < w {
                key = k;
                break;
            }
            pick -= w;
        }
        let members = &axis.map[&key].members;
        let s = members.len();
        let i = rng.gen_range(0..s);
        let mut j = rng.gen_range(0..s - 1);
        if j >= i {
            j += 1;
        }
        let (a, b) = (members[i], members[j]);
        let variant = rng.gen_range(0..4u8);
        FlipOutcome::Applied { removed: self.apply_flip(a, b, ax, variant) }
    }

    /// Rewrites the pair `(a, b)` sharing a factor class on axis `ax`.
    /// `variant` selects the receiving term (`a` for 0/1, `b` for 2/3) and
    /// which of the two free axes receives the sum.
    fn apply_flip(&mut self, a: u32, b: u32, ax: usize, variant: u8) -> u32 {
        debug_assert_ne!(a, b);
        debug_assert_eq!(
            canon_key(self.p, self.terms[a as usize].f[ax]),
            canon_key(self.p, self.terms[b as usize].f[ax]),
        );
        // Renormalize b so the shared factors agree exactly: negating two of
        // a term's factors keeps its value and keeps both bucket classes.
        if self.terms[b as usize].f[ax] != self.terms[a as usize].f[ax] {
            let ay = (ax + 1) % 3;
            let t = &mut self.terms[b as usize];
            t.f[ax] = neg_words(self.p, t.f[ax]);
            t.f[ay] = neg_words(self.p, t.f[ay]);
            debug_assert_eq!(self.terms[b as usize].f[ax], self.terms[a as usize].f[ax]);
        }
        let others = [(ax + 1) % 3, (ax + 2) % 3];
        let (recv, other) = if variant < 2 { (a, b) } else { (b, a) };
        let e = others[(variant % 2) as usize];
        let f = others[1 - (variant % 2) as usize];
        // recv gains the other term's factor on axis e; the other term sheds
        // the receiver's factor on the remaining axis f. The sum of the two
        // terms is unchanged.
        let new_recv = add_words(self.p, self.terms[recv as usize].f[e], self.terms[other as usize].f[e]);
        let new_other = sub_words(self.p, self.terms[other as usize].f[f], self.terms[recv as usize].f[f]);
        let mut removed = 0;
        if new_recv == (0, 0) {
            self.remove_term(recv);
            removed += 1;
        } else {
            self.update_factor(recv, e, new_recv);
        }
        if new_other == (0, 0) {
            self.remove_term(other);
            removed += 1;
        } else {
            self.update_factor(other, f, new_other);
        }
        removed
    }

    /// Splits a random term on a random axis into two terms whose factors on
    /// that axis sum to the original, then applies one random flip involving
    /// a new term. The split alone keeps the contraction and raises the rank
    /// by one; the follow-up flip is what lets the walk leave a local
    /// minimum. Returns the net rank change.
    pub fn plus_transition(&mut self, rng: &mut impl Rng) -> i64 {
        let before = self.rank() as i64;
        let (id, ax, split) = loop {
            let id = self.live[rng.gen_range(0..self.live.len())];
            let ax = rng.gen_range(0..3);
            if let Some(split) = self.random_split_vector(rng, self.terms[id as usize].f[ax], self.dims[ax]) {
                break (id, ax, split);
            }
        };
        let rest = sub_words(self.p, self.terms[id as usize].f[ax], split);
        debug_assert!(split != (0, 0) && rest != (0, 0));
        self.update_factor(id, ax, split);
        let mut f2 = self.terms[id as usize].f;
        f2[ax] = rest;
        let id2 = self.insert_term(f2);

        // The two halves share their factors on the other two axes, so at
        // least those candidate pairs exist.
        let mut cands: Vec<(u32, u32, usize)> = Vec::new();
        for t in [id, id2] {
            for a in 0..3 {
                let key = canon_key(self.p, self.terms[t as usize].f[a]);
                for &m in &self.axes[a].map[&key].members {
                    if m != t {
                        cands.push((t.min(m), t.max(m), a));
                    }
                }
            }
        }
        cands.sort_unstable();
        cands.dedup();
        debug_assert!(!cands.is_empty());
        let (x, y, a) = cands[rng.gen_range(0..cands.len())];
        self.apply_flip(x, y, a, rng.gen_range(0..4u8));
        self.rank() as i64 - before
    }

    /// Uniform nonzero vector on `len` packed elements, different from `avoid`
    /// and from `avoid`'s complement being zero. Returns `None` when no such
    /// vector exists (only for degenerate one-element GF(2) axes).
    fn random_split_vector(&self, rng: &mut impl Rng, avoid: Words, len: usize) -> Option<Words> {
        debug_assert!(len >= 1);
        if self.p == 2 && len == 1 {
            // The only nonzero vector is `avoid` itself.
            return None;
        }
        for _ in 0..64 {
            let w = if self.p == 2 {
                let mask = if len == 64 { !0u64 } else { (1u64 << len) - 1 };
                (rng.gen::<u64>() & mask, 0)
            } else {
                let mut lo = 0u64;
                let mut hi = 0u64;
                for i in 0..len {
                    match rng.gen_range(0..3u8) {
                        1 => lo |= 1 << i,
                        2 => hi |= 1 << i,
                        _ => {}
                    }
                }
                (lo, hi)
            };
            if w != (0, 0) && w != avoid {
                return Some(w);
            }
        }
        None
    }

    /// Dense contraction of the live terms, as residues mod p.
    pub fn contract(&self) -> Vec<u8> {
        let [_, d2, d3] = self.dims;
        let p = self.p as u16;
        let mut out = vec![0u8; self.dims.iter().product()];
        for &id in &self.live {
            let t = &self.terms[id as usize];
            for (i, ui) in support(t.f[0]) {
                for (j, vj) in support(t.f[1]) {
                    let uv = (ui * vj) as u16;
                    for (k, wk) in support(t.f[2]) {
                        let cell = &mut out[(i * d2 + j) * d3 + k];
                        *cell = ((*cell as u16 + uv * wk as u16) % p) as u8;
                    }
                }
            }
        }
        out
    }

    /// Checks the contraction against the target tensor captured at
    /// construction.
    ///
    /// # Panics
    /// If the engine was built without a target.
    pub fn matches_target(&self) -> bool {
        let target = self.target.as_ref().expect("engine built without a target tensor");
        self.contract() == *target
    }

    /// Extracts the current terms as a scheme with the given header template.
    pub fn to_scheme(&self, template: &Scheme) -> Scheme {
        let [d1, d2, d3] = self.dims;
        let terms = self
            .live
            .iter()
            .map(|&id| {
                let t = &self.terms[id as usize];
                Term {
                    u: PackedVec::from_words(self.p, d1, t.f[0].0, t.f[0].1),
                    v: PackedVec::from_words(self.p, d2, t.f[1].0, t.f[1].1),
                    w: PackedVec::from_words(self.p, d3, t.f[2].0, t.f[2].1),
                }
            })
            .collect();
        Scheme { header: template.header.clone(), terms }
    }

    /// Exhaustive consistency check of the incremental bucket bookkeeping.
    /// Test-only: rebuilds every invariant from scratch.
    #[cfg(test)]
    fn check_invariants(&self) {
        for (i, &id) in self.live.iter().enumerate() {
            assert_eq!(self.live_pos[id as usize], i as u32);
        }
        for ax in 0..3 {
            let axis = &self.axes[ax];
            let mut sizes: HashMap<Words, u32> = HashMap::new();
            for &id in &self.live {
                let key = canon_key(self.p, self.terms[id as usize].f[ax]);
                *sizes.entry(key).or_default() += 1;
                let b = &axis.map[&key];
                assert_eq!(b.members[self.terms[id as usize].bucket_pos[ax] as usize], id);
            }
            assert_eq!(axis.map.len(), sizes.len());
            let mut pairs = 0u64;
            for (key, size) in &sizes {
                assert_eq!(axis.map[key].members.len() as u32, *size);
                pairs += (*size as u64) * (*size as u64 - 1) / 2;
                let b = &axis.map[key];
                if *size >= 2 {
                    assert_eq!(axis.active[b.active_pos as usize], (*key, *size));
                } else {
                    assert_eq!(b.active_pos, DEAD);
                }
            }
            assert_eq!(axis.pairs, pairs);
            assert_eq!(axis.active.len(), sizes.values().filter(|&&s| s >= 2).count());
        }
    }
}

#[inline]
fn support(w: Words) -> impl Iterator<Item = (usize, u8)> {
    let mut mask = w.0 | w.1;
    std::iter::from_fn(move || {
        if mask == 0 {
            return None;
        }
        let i = mask.trailing_zeros() as usize;
        mask &= mask - 1;
        Some((i, (((w.0 >> i) & 1) + 2 * ((w.1 >> i) & 1)) as u8))
    })
}

/// Parameters of a single walk.
#[derive(Clone, Copy, Debug)]
pub struct WalkParams {
    /// Maximum number of steps (flips plus transitions) per walk.
    pub limit: u64,
    /// Steps without a rank drop before a plus transition fires.
    pub stagnation: u64,
    /// Re-verify the contraction after every step. Orders of magnitude
    /// slower; for debugging the engine, not for searching.
    pub verify_every_step: bool,
}

impl Default for WalkParams {
    fn default() -> Self {
        WalkParams {
            limit: 1_000_000,
            stagnation: 50_000,
            verify_every_step: cfg!(debug_assertions),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WalkEnd {
    /// Rank fell below the starting rank.
    Improved,
    /// The step limit ran out first.
    Exhausted,
    /// The stop flag or deadline fired.
    Aborted,
}

#[derive(Clone, Copy, Debug)]
pub struct WalkStats {
    pub end: WalkEnd,
    pub flips: u64,
    pub plus_transitions: u64,
}

/// Walks until the rank drops below its starting value or the budget runs
/// out. The engine is left at the final scheme either way.
pub fn random_walk(
    engine: &mut Engine,
    params: &WalkParams,
    rng: &mut impl Rng,
    stop: Option<&AtomicBool>,
    deadline: Option<Instant>,
) -> WalkStats {
    let start = engine.rank();
    let mut stats = WalkStats { end: WalkEnd::Exhausted, flips: 0, plus_transitions: 0 };
    let mut since_progress = 0u64;
    for step in 0..params.limit {
        if engine.rank() < start {
            stats.end = WalkEnd::Improved;
            return stats;
        }
        if step % 8192 == 0 {
            if stop.map_or(false, |s| s.load(Ordering::Relaxed))
                || deadline.map_or(false, |d| Instant::now() >= d)
            {
                stats.end = WalkEnd::Aborted;
                return stats;
            }
        }
        if since_progress >= params.stagnation {
            engine.plus_transition(rng);
            stats.plus_transitions += 1;
            since_progress = 0;
        } else {
            match engine.random_flip(rng) {
                FlipOutcome::NoCandidates => {
                    engine.plus_transition(rng);
                    stats.plus_transitions += 1;
                    since_progress = 0;
                }
                FlipOutcome::Applied { removed } => {
                    stats.flips += 1;
                    if removed > 0 {
                        since_progress = 0;
                    } else {
                        since_progress += 1;
                    }
                }
            }
        }
        if params.verify_every_step {
            assert!(engine.matches_target(), "contraction drifted from the target");
        }
    }
    if engine.rank() < start {
        stats.end = WalkEnd::Improved;
    }
    stats
}

/// Parameters of a pool search.
#[derive(Clone, Debug)]
pub struct SearchParams {
    pub walk: WalkParams,
    /// Pool size at rank r-1 that triggers the switch to level r-1.
    pub pool_target: usize,
    /// Stop as soon as a verified scheme of at most this rank appears.
    pub target_rank: Option<usize>,
    /// Stop after this many walks in total.
    pub max_walks: Option<u64>,
    /// Stop after this much wall time.
    pub time_limit: Option<Duration>,
    /// Number of parallel walkers.
    pub walkers: usize,
    pub seed: u64,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            walk: WalkParams::default(),
            pool_target: 10_000,
            target_rank: None,
            max_walks: None,
            time_limit: None,
            walkers: 1,
            seed: 0,
        }
    }
}

/// Per-level counters of a search.
#[derive(Clone, Debug, serde::Serialize)]
pub struct LevelStats {
    pub rank: usize,
    pub pool_size: usize,
    pub walks: u64,
    pub flips: u64,
    pub plus_transitions: u64,
    pub wall_ms: u128,
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    /// The lowest-rank verified scheme found (the start scheme if no walk
    /// improved on it).
    pub best: Scheme,
    /// All distinct verified schemes collected at the best rank, `best`
    /// among them.
    pub pool: Vec<Scheme>,
    pub start_rank: usize,
    /// True when `target_rank` was reached.
    pub reached_target: bool,
    pub walks: u64,
    pub flips: u64,
    pub plus_transitions: u64,
    pub levels: Vec<LevelStats>,
}

#[derive(Default)]
struct LevelAccum {
    pool: Vec<Scheme>,
    // Canonical digests of pool members; admission refuses duplicates.
    digests: HashSet<String>,
    walks: u64,
    flips: u64,
    plus: u64,
    wall: Duration,
}

struct Shared {
    levels: BTreeMap<usize, LevelAccum>,
    current: usize,
    since: Instant,
    walks: u64,
    best: Scheme,
    reached: bool,
    flips: u64,
    plus: u64,
}

/// Runs a pool search starting from the naive scheme of `tensor`.
pub fn search(tensor: &Tensor, p: u8, params: &SearchParams) -> Result<SearchOutcome, crate::scheme::SchemeError> {
    let naive = Scheme::naive(tensor, p)?;
    Ok(search_from(naive, tensor, params))
}

/// Runs a pool search starting from an existing verified scheme.
pub fn search_from(start: Scheme, tensor: &Tensor, params: &SearchParams) -> SearchOutcome {
    assert!(params.walkers >= 1, "at least one walker");
    start.verify(tensor).expect("start scheme must verify");
    let start_rank = start.rank();
    let t0 = Instant::now();
    let deadline = params.time_limit.map(|d| t0 + d);
    let stop = AtomicBool::new(false);

    let mut levels = BTreeMap::new();
    levels.insert(
        start_rank,
        LevelAccum {
            pool: vec![start.clone()],
            digests: HashSet::from([start.digest()]),
            ..Default::default()
        },
    );
    let shared = Mutex::new(Shared {
        levels,
        current: start_rank,
        since: t0,
        walks: 0,
        best: start.clone(),
        reached: params.target_rank.map_or(false, |t| start_rank <= t),
        flips: 0,
        plus: 0,
    });
    if shared.lock().unwrap().reached {
        stop.store(true, Ordering::Relaxed);
    }

    std::thread::scope(|scope| {
        for worker in 0..params.walkers {
            let shared = &shared;
            let stop = &stop;
            scope.spawn(move || {
                let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
                rng.set_stream(worker as u64);
                loop {
                    if stop.load(Ordering::Relaxed) {
                        break;
                    }
                    let (level, scheme) = {
                        let mut sh = shared.lock().unwrap();
                        if params.max_walks.map_or(false, |m| sh.walks >= m)
                            || deadline.map_or(false, |d| Instant::now() >= d)
                        {
                            stop.store(true, Ordering::Relaxed);
                            break;
                        }
                        sh.walks += 1;
                        let level = sh.current;
                        let pool = &sh.levels.get(&level).expect("current level has a pool").pool;
                        let pick = rng.gen_range(0..pool.len());
                        (level, pool[pick].clone())
                    };
                    let mut engine =
                        Engine::new(&scheme, params.walk.verify_every_step.then_some(tensor));
                    let ws = random_walk(&mut engine, &params.walk, &mut rng, Some(stop), deadline);
                    let improved = (ws.end == WalkEnd::Improved).then(|| {
                        let found = engine.to_scheme(&scheme);
                        // Admission check: never pool an unverified scheme.
                        found
                            .verify(tensor)
                            .expect("walk produced a scheme that fails verification");
                        found
                    });
                    let mut sh = shared.lock().unwrap();
                    let acc = sh.levels.entry(level).or_default();
                    acc.walks += 1;
                    acc.flips += ws.flips;
                    acc.plus += ws.plus_transitions;
                    sh.flips += ws.flips;
                    sh.plus += ws.plus_transitions;
                    if let Some(found) = improved {
                        let rank = found.rank();
                        if rank < sh.best.rank() {
                            sh.best = found.clone();
                        }
                        let entry = sh.levels.entry(rank).or_default();
                        if entry.pool.len() < params.pool_target
                            && entry.digests.insert(found.digest())
                        {
                            entry.pool.push(found);
                        }
                        if rank < sh.current && sh.levels[&rank].pool.len() >= params.pool_target {
                            let now = Instant::now();
                            let since = sh.since;
                            let cur = sh.current;
                            sh.levels.entry(cur).or_default().wall += now - since;
                            sh.current = rank;
                            sh.since = now;
                        }
                        if params.target_rank.map_or(false, |t| rank <= t) {
                            sh.reached = true;
                            stop.store(true, Ordering::Relaxed);
                        }
                    }
                }
            });
        }
    });

    let mut sh = shared.into_inner().unwrap();
    let now = Instant::now();
    let since = sh.since;
    let cur = sh.current;
    sh.levels.entry(cur).or_default().wall += now - since;
    let levels = sh
        .levels
        .iter()
        .rev()
        .map(|(&rank, acc)| LevelStats {
            rank,
            pool_size: acc.pool.len(),
            walks: acc.walks,
            flips: acc.flips,
            plus_transitions: acc.plus,
            wall_ms: acc.wall.as_millis(),
        })
        .collect();
    let pool = sh.levels[&sh.best.rank()].pool.clone();
    SearchOutcome {
        best: sh.best,
        pool,
        start_rank,
        reached_target: sh.reached,
        walks: sh.walks,
        flips: sh.flips,
        plus_transitions: sh.plus,
        levels,
    }
}
