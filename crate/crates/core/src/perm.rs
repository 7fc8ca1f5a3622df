//! Permutation algebra.
//!
//! Permutations are stored 0-based (`images[i]` is the image of `i`); all
//! serialized forms (JSON arrays, cycle notation) are 1-based. The associated
//! permutation matrix follows the convention `P[i][j] = 1` iff `i = sigma(j)`,
//! so applying `P` to a vector moves the entry at slot `j` to slot `sigma(j)`
//! (see [`Permutation::scatter`]).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest size accepted by [`enumerate`] unless the caller raises the cap.
/// 12! is ~4.8e8 permutations; beyond that an exhaustive scan stops being a
/// realistic interactive operation.
pub const DEFAULT_ENUM_CAP: usize = 12;

/// Hard ceiling for rank arithmetic: 20! is the largest factorial that fits
/// in a `u64`.
pub const MAX_ENUM_SIZE: usize = 20;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PermError {
    #[error("permutation must have at least one element")]
    Empty,
    #[error("images {images:?} are not a bijection of 1..={n}")]
    NotABijection { n: usize, images: Vec<usize> },
    #[error("size mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },
    #[error(
        "exhaustive enumeration of S_{n} refused: {n} exceeds the cap of {cap} \
         (override the cap explicitly to proceed)"
    )]
    CapExceeded { n: usize, cap: usize },
    #[error("rank {rank} out of range for size {n} (must be < {n}!)")]
    RankOutOfRange { rank: u64, n: usize },
    #[error("cannot parse cycle notation {input:?}: {reason}")]
    BadCycles { input: String, reason: String },
}

/// A bijection of `{0, .., N-1}`.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation {
    images: Vec<usize>,
}

impl std::fmt::Debug for Permutation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Permutation({:?})", self.one_based_images())
    }
}

/// Cycle notation with 1-based labels, fixed points omitted: `(1 3 2)(4 5)`.
impl std::fmt::Display for Permutation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let cycles = self.cycles();
        let mut wrote = false;
        for cycle in &cycles {
            if cycle.len() < 2 {
                continue;
            }
            wrote = true;
            write!(f, "(")?;
            for (k, &i) in cycle.iter().enumerate() {
                if k > 0 {
                    write!(f, " ")?;
                }
                write!(f, "{}", i + 1)?;
            }
            write!(f, ")")?;
        }
        if !wrote {
            write!(f, "id")?;
        }
        Ok(())
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = PermError;
    fn try_from(one_based: Vec<usize>) -> Result<Self, PermError> {
        Permutation::from_one_based(&one_based)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Vec<usize> {
        p.one_based_images()
    }
}

fn is_bijection(images: &[usize]) -> bool {
    let n = images.len();
    let mut seen = vec![false; n];
    for &x in images {
        if x >= n || seen[x] {
            return false;
        }
        seen[x] = true;
    }
    true
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation {
            images: (0..n).collect(),
        }
    }

    /// The order-reversing permutation `i -> n-1-i`.
    pub fn reversal(n: usize) -> Self {
        Permutation {
            images: (0..n).rev().collect(),
        }
    }

    /// Build from 0-based images (`images[i] = sigma(i)`).
    pub fn from_images(images: Vec<usize>) -> Result<Self, PermError> {
        if images.is_empty() {
            return Err(PermError::Empty);
        }
        if !is_bijection(&images) {
            return Err(PermError::NotABijection {
                n: images.len(),
                images,
            });
        }
        Ok(Permutation { images })
    }

    /// Build from a 1-based image array, the external serialized form.
    pub fn from_one_based(images: &[usize]) -> Result<Self, PermError> {
        if images.is_empty() {
            return Err(PermError::Empty);
        }
        if images.contains(&0) {
            return Err(PermError::NotABijection {
                n: images.len(),
                images: images.to_vec(),
            });
        }
        Self::from_images(images.iter().map(|&x| x - 1).collect())
    }

    /// The transposition swapping `i` and `j` (0-based); identity if `i == j`.
    pub fn transposition(n: usize, i: usize, j: usize) -> Self {
        assert!(i < n && j < n, "transposition indices out of range");
        let mut images: Vec<usize> = (0..n).collect();
        images.swap(i, j);
        Permutation { images }
    }

    /// Parse 1-based cycle notation such as `(1 2 3)(4 5)`; `id` or an empty
    /// cycle list is the identity. Elements may be separated by spaces or
    /// commas.
    pub fn from_cycles(n: usize, input: &str) -> Result<Self, PermError> {
        let bad = |reason: &str| PermError::BadCycles {
            input: input.to_string(),
            reason: reason.to_string(),
        };
        if n == 0 {
            return Err(PermError::Empty);
        }
        let trimmed = input.trim();
        let mut images: Vec<usize> = (0..n).collect();
        if trimmed.is_empty() || trimmed == "id" || trimmed == "identity" {
            return Ok(Permutation { images });
        }
        let mut used = vec![false; n];
        let mut rest = trimmed;
        while !rest.is_empty() {
            rest = rest.trim_start();
            if rest.is_empty() {
                break;
            }
            if !rest.starts_with('(') {
                return Err(bad("expected '('"));
            }
            let close = rest.find(')').ok_or_else(|| bad("missing ')'"))?;
            let body = &rest[1..close];
            let mut cycle = Vec::new();
            for tok in body.split(|c: char| c.is_whitespace() || c == ',') {
                if tok.is_empty() {
                    continue;
                }
                let label: usize = tok
                    .parse()
                    .map_err(|_| bad(&format!("not a number: {tok:?}")))?;
                if label == 0 || label > n {
                    return Err(bad(&format!("label {label} out of 1..={n}")));
                }
                if used[label - 1] {
                    return Err(bad(&format!("label {label} repeated")));
                }
                used[label - 1] = true;
                cycle.push(label - 1);
            }
            for k in 0..cycle.len() {
                images[cycle[k]] = cycle[(k + 1) % cycle.len()];
            }
            rest = &rest[close + 1..];
        }
        Ok(Permutation { images })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// `sigma(i)`, 0-based.
    pub fn image_of(&self, i: usize) -> usize {
        self.images[i]
    }

    pub fn images(&self) -> &[usize] {
        &self.images
    }

    pub fn one_based_images(&self) -> Vec<usize> {
        self.images.iter().map(|&x| x + 1).collect()
    }

    pub fn is_identity(&self) -> bool {
        self.images.iter().enumerate().all(|(i, &x)| i == x)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.images.len()];
        for (i, &x) in self.images.iter().enumerate() {
            inv[x] = i;
        }
        Permutation { images: inv }
    }

    /// Functional composition: `compose(p, q)(i) = p(q(i))`.
    pub fn compose(&self, q: &Permutation) -> Result<Self, PermError> {
        if self.len() != q.len() {
            return Err(PermError::SizeMismatch {
                left: self.len(),
                right: q.len(),
            });
        }
        Ok(Permutation {
            images: q.images.iter().map(|&i| self.images[i]).collect(),
        })
    }

    /// `sigma^k` via cycle decomposition, O(N) for any exponent.
    pub fn pow(&self, k: u64) -> Self {
        let n = self.len();
        let mut images = vec![0; n];
        for cycle in self.cycles() {
            let len = cycle.len() as u64;
            let shift = (k % len) as usize;
            for (pos, &i) in cycle.iter().enumerate() {
                images[i] = cycle[(pos + shift) % cycle.len()];
            }
        }
        Permutation { images }
    }

    /// Disjoint cycles, each starting at its smallest element, ordered by
    /// that element. Fixed points appear as singleton cycles.
    pub fn cycles(&self) -> Vec<Vec<usize>> {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut cycle = Vec::new();
            let mut i = start;
            while !seen[i] {
                seen[i] = true;
                cycle.push(i);
                i = self.images[i];
            }
            out.push(cycle);
        }
        out
    }

    /// Smallest `K >= 1` with `sigma^K = id`: the lcm of the cycle lengths.
    pub fn order(&self) -> u64 {
        self.cycles().iter().map(|c| c.len() as u64).fold(1, lcm)
    }

    /// Apply the permutation matrix `P` to a vector: the entry at slot `j`
    /// moves to slot `sigma(j)`, i.e. `out[sigma(j)] = w[j]`.
    pub fn scatter<T: Copy>(&self, w: &[T]) -> Vec<T> {
        assert_eq!(w.len(), self.len(), "scatter length mismatch");
        let mut out = w.to_vec();
        for (j, &x) in w.iter().enumerate() {
            out[self.images[j]] = x;
        }
        out
    }

    /// Apply the transposed matrix `P^T = P^-1`: `out[j] = w[sigma(j)]`.
    pub fn gather<T: Copy>(&self, w: &[T]) -> Vec<T> {
        assert_eq!(w.len(), self.len(), "gather length mismatch");
        self.images.iter().map(|&i| w[i]).collect()
    }

    /// Stable argsort: the permutation `rho` with `values[rho(k)]` ascending
    /// and ties kept in original order. `values` must not contain NaN.
    pub fn argsort_stable(values: &[f64]) -> Self {
        let mut idx: Vec<usize> = (0..values.len()).collect();
        idx.sort_by(|&a, &b| {
            values[a]
                .partial_cmp(&values[b])
                .expect("argsort_stable: NaN in input")
        });
        Permutation { images: idx }
    }

    /// Conjugation `rho^-1 . self . rho`, the relabeling of `self` induced by
    /// re-indexing coordinates through `rho`.
    pub fn conjugate_by(&self, rho: &Permutation) -> Result<Self, PermError> {
        rho.inverse().compose(self)?.compose(rho)
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a, b) * b
}

/// The factorization chain `sigma_0, .., sigma_N`: `sigma_0 = sigma` and
/// `sigma_n = (n sigma_{n-1}(n)) . sigma_{n-1}` (1-based `n`). Each step
/// pins position `n` to itself, so `sigma_n` restricted to the first `n`
/// positions is the identity and the last two entries are the identity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TranspositionChain {
    pub steps: Vec<Permutation>,
}

pub fn transposition_chain(p: &Permutation) -> TranspositionChain {
    let n = p.len();
    let mut steps = Vec::with_capacity(n + 1);
    steps.push(p.clone());
    for pos in 0..n {
        let prev = steps.last().unwrap();
        let t = Permutation::transposition(n, pos, prev.image_of(pos));
        let next = t.compose(prev).expect("same size by construction");
        steps.push(next);
    }
    TranspositionChain { steps }
}

/// Index sets comparing the iterates of two permutations:
/// `e_k = {i : p^k(i) != q^k(i)}` and
/// `g_k = {i : p^l(i) = q^l(i) for all l <= k}` (0-based indices).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DivergenceSets {
    pub e_k: Vec<usize>,
    pub g_k: Vec<usize>,
    pub m_k: usize,
}

pub fn divergence_sets(
    p: &Permutation,
    q: &Permutation,
    k: u64,
) -> Result<DivergenceSets, PermError> {
    if p.len() != q.len() {
        return Err(PermError::SizeMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    let n = p.len();
    let mut agree_all = vec![true; n];
    let mut p_pow = Permutation::identity(n);
    let mut q_pow = Permutation::identity(n);
    for _ in 0..k {
        p_pow = p.compose(&p_pow).expect("same size");
        q_pow = q.compose(&q_pow).expect("same size");
        for i in 0..n {
            if p_pow.image_of(i) != q_pow.image_of(i) {
                agree_all[i] = false;
            }
        }
    }
    let e_k: Vec<usize> = (0..n)
        .filter(|&i| p_pow.image_of(i) != q_pow.image_of(i))
        .collect();
    let g_k: Vec<usize> = (0..n).filter(|&i| agree_all[i]).collect();
    Ok(DivergenceSets {
        m_k: e_k.len(),
        e_k,
        g_k,
    })
}

/// `n!` for `n <= 20`.
pub fn factorial(n: usize) -> u64 {
    assert!(n <= MAX_ENUM_SIZE, "factorial overflow for n = {n}");
    (1..=n as u64).product()
}

/// Lexicographic rank of a permutation among all of its size, via the
/// factorial number system (Lehmer code).
pub fn rank(p: &Permutation) -> u64 {
    let n = p.len();
    assert!(n <= MAX_ENUM_SIZE, "rank overflow for n = {n}");
    let mut r = 0u64;
    for i in 0..n {
        let smaller_right = (i + 1..n).filter(|&j| p.images[j] < p.images[i]).count();
        r += smaller_right as u64 * factorial(n - 1 - i);
    }
    r
}

/// Inverse of [`rank`]: the permutation of size `n` at lexicographic rank `r`.
pub fn unrank(n: usize, r: u64) -> Result<Permutation, PermError> {
    if n == 0 {
        return Err(PermError::Empty);
    }
    if n > MAX_ENUM_SIZE || r >= factorial(n) {
        return Err(PermError::RankOutOfRange { rank: r, n });
    }
    let mut available: Vec<usize> = (0..n).collect();
    let mut images = Vec::with_capacity(n);
    let mut rem = r;
    for i in 0..n {
        let f = factorial(n - 1 - i);
        let digit = (rem / f) as usize;
        rem %= f;
        images.push(available.remove(digit));
    }
    Ok(Permutation { images })
}

/// Advance `images` to its lexicographic successor; false once at the last
/// permutation (descending order).
fn next_lexicographic(images: &mut [usize]) -> bool {
    let n = images.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && images[i - 1] >= images[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let pivot = i - 1;
    let mut j = n - 1;
    while images[j] <= images[pivot] {
        j -= 1;
    }
    images.swap(pivot, j);
    images[i..].reverse();
    true
}

/// Deterministic lexicographic stream over a rank range of `S_n`.
pub struct Enumerator {
    current: Option<Vec<usize>>,
    remaining: u64,
}

impl Enumerator {
    fn new(n: usize, start: u64, end: u64) -> Result<Self, PermError> {
        let total = factorial(n);
        if start > end || end > total {
            return Err(PermError::RankOutOfRange { rank: end, n });
        }
        if start == end {
            return Ok(Enumerator {
                current: None,
                remaining: 0,
            });
        }
        let first = unrank(n, start)?;
        Ok(Enumerator {
            current: Some(first.images),
            remaining: end - start,
        })
    }
}

impl Iterator for Enumerator {
    type Item = Permutation;

    fn next(&mut self) -> Option<Permutation> {
        if self.remaining == 0 {
            return None;
        }
        let images = self.current.as_mut()?;
        let out = Permutation {
            images: images.clone(),
        };
        self.remaining -= 1;
        if self.remaining > 0 && !next_lexicographic(images) {
            self.remaining = 0;
        }
        Some(out)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let r = self.remaining as usize;
        (r, Some(r))
    }
}

/// All `n!` permutations of size `n` in lexicographic order, refusing sizes
/// above [`DEFAULT_ENUM_CAP`].
pub fn enumerate(n: usize) -> Result<Enumerator, PermError> {
    enumerate_with_cap(n, DEFAULT_ENUM_CAP)
}

/// Like [`enumerate`] with an explicit cap (hard ceiling [`MAX_ENUM_SIZE`]).
pub fn enumerate_with_cap(n: usize, cap: usize) -> Result<Enumerator, PermError> {
    if n == 0 {
        return Err(PermError::Empty);
    }
    let cap = cap.min(MAX_ENUM_SIZE);
    if n > cap {
        return Err(PermError::CapExceeded { n, cap });
    }
    Enumerator::new(n, 0, factorial(n))
}

/// The permutations with lexicographic rank in `[start, end)`; this is how
/// parallel workers split the search space into disjoint blocks.
pub fn enumerate_range(n: usize, start: u64, end: u64) -> Result<Enumerator, PermError> {
    if n == 0 {
        return Err(PermError::Empty);
    }
    if n > MAX_ENUM_SIZE {
        return Err(PermError::CapExceeded {
            n,
            cap: MAX_ENUM_SIZE,
        });
    }
    Enumerator::new(n, start, end)
}

/// Visit every image array with rank in `[start, end)` without allocating
/// per item; the hot path of the exhaustive solver.
pub fn for_each_in_rank_range(
    n: usize,
    start: u64,
    end: u64,
    mut f: impl FnMut(&[usize]),
) -> Result<(), PermError> {
    if start >= end {
        return Ok(());
    }
    let mut images = unrank(n, start)?.images;
    let mut left = end - start;
    loop {
        f(&images);
        left -= 1;
        if left == 0 {
            break;
        }
        if !next_lexicographic(&mut images) {
            break;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_perm(rng: &mut ChaCha8Rng, n: usize) -> Permutation {
        let mut images: Vec<usize> = (0..n).collect();
        images.shuffle(rng);
        Permutation::from_images(images).unwrap()
    }

    #[test]
    fn compose_identity_and_involution() {
        let id = Permutation::identity(4);
        let p = Permutation::from_one_based(&[2, 3, 4, 1]).unwrap();
        assert_eq!(id.compose(&p).unwrap(), p);
        assert_eq!(p.compose(&id).unwrap(), p);
        let swap = Permutation::transposition(2, 0, 1);
        assert!(swap.compose(&swap).unwrap().is_identity());
    }

    #[test]
    fn compose_cycle_squared_matches_pointwise_oracle() {
        let c = Permutation::from_cycles(4, "(1 2 3 4)").unwrap();
        let sq = c.compose(&c).unwrap();
        // Oracle: apply the map twice point by point.
        let expect: Vec<usize> = (0..4).map(|i| c.image_of(c.image_of(i))).collect();
        assert_eq!(sq.images(), &expect[..]);
        assert_eq!(sq.one_based_images(), vec![3, 4, 1, 2]);
    }

    #[test]
    fn compose_size_mismatch_errors() {
        let p = Permutation::identity(3);
        let q = Permutation::identity(4);
        assert!(matches!(p.compose(&q), Err(PermError::SizeMismatch { .. })));
    }

    #[test]
    fn order_examples() {
        assert_eq!(Permutation::identity(5).order(), 1);
        let c4 = Permutation::from_cycles(4, "(1 2 3 4)").unwrap();
        assert_eq!(c4.order(), 4);
        let p = Permutation::from_cycles(5, "(1 2)(3 4 5)").unwrap();
        assert_eq!(p.order(), 6);
        // Oracle: repeated composition.
        let mut acc = p.clone();
        let mut k = 1;
        while !acc.is_identity() {
            acc = p.compose(&acc).unwrap();
            k += 1;
        }
        assert_eq!(k, 6);
    }

    #[test]
    fn order_via_pow() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let p = random_perm(&mut rng, 9);
            let k = p.order();
            assert!(p.pow(k).is_identity());
            for d in 1..k {
                if k % d == 0 && d < k {
                    assert!(!p.pow(d).is_identity());
                }
            }
        }
    }

    #[test]
    fn chain_of_identity_is_all_identity() {
        let chain = transposition_chain(&Permutation::identity(4));
        assert_eq!(chain.steps.len(), 5);
        assert!(chain.steps.iter().all(|s| s.is_identity()));
    }

    #[test]
    fn chain_of_swap_matches_hand_computation() {
        let p = Permutation::from_cycles(3, "(1 2)").unwrap();
        let chain = transposition_chain(&p);
        assert_eq!(chain.steps[0], p);
        assert!(chain.steps[1].is_identity());
        assert!(chain.steps[2].is_identity());
        assert!(chain.steps[3].is_identity());
    }

    #[test]
    fn chain_invariants_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = 2 + (rng.next_u32() as usize % 9);
            let p = random_perm(&mut rng, n);
            let chain = transposition_chain(&p);
            assert_eq!(chain.steps[0], p);
            assert!(chain.steps[n - 1].is_identity());
            assert!(chain.steps[n].is_identity());
            for (k, step) in chain.steps.iter().enumerate() {
                for i in 0..k.min(n) {
                    assert_eq!(step.image_of(i), i, "sigma_{k} must fix 0..{k}");
                }
            }
            // Fixed points of sigma stay fixed along the whole chain.
            for i in 0..n {
                if p.image_of(i) == i {
                    for step in &chain.steps {
                        assert_eq!(step.image_of(i), i);
                    }
                }
            }
        }
    }

    #[test]
    fn chain_skips_disjoint_transposition_step() {
        // sigma = (i j) . sigma' with disjoint supports gives sigma_j = sigma_{j-1}.
        let sigma_prime = Permutation::from_cycles(6, "(1 3 4)").unwrap();
        let t = Permutation::from_cycles(6, "(2 5)").unwrap();
        let sigma = t.compose(&sigma_prime).unwrap();
        let chain = transposition_chain(&sigma);
        // 1-based j = 5 -> chain indices 5 and 4.
        assert_eq!(chain.steps[5], chain.steps[4]);
    }

    #[test]
    fn divergence_sets_of_equal_perms_is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_perm(&mut rng, 8);
        for k in 1..=8 {
            let d = divergence_sets(&p, &p, k).unwrap();
            assert_eq!(d.m_k, 0);
            assert!(d.e_k.is_empty());
            assert_eq!(d.g_k.len(), 8);
        }
    }

    #[test]
    fn divergence_sets_hand_example() {
        // p = (1 2), q = id on N=3, k=1: E_1 = {1,2}, G_1 = {3} in 1-based labels.
        let p = Permutation::from_cycles(3, "(1 2)").unwrap();
        let q = Permutation::identity(3);
        let d = divergence_sets(&p, &q, 1).unwrap();
        assert_eq!(d.e_k, vec![0, 1]);
        assert_eq!(d.g_k, vec![2]);
        assert_eq!(d.m_k, 2);
    }

    #[test]
    fn divergence_growth_bound_random_pairs() {
        // m_k <= k*m_1 and #G_k >= max(N - k*m_1, 0) over 1000 random pairs.
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for _ in 0..1000 {
            let n = 2 + (rng.next_u32() as usize % 9);
            let p = random_perm(&mut rng, n);
            let q = random_perm(&mut rng, n);
            let m1 = divergence_sets(&p, &q, 1).unwrap().m_k;
            for k in 1..=n as u64 {
                let d = divergence_sets(&p, &q, k).unwrap();
                assert!(d.m_k <= k as usize * m1, "m_k <= k m_1 violated");
                assert!(
                    d.g_k.len() >= n.saturating_sub(k as usize * m1),
                    "#G_k lower bound violated"
                );
            }
        }
    }

    #[test]
    fn telescoping_identity_random() {
        // sum_n u_n v_n - sum_n u_n v_{sigma(n)} telescopes over the chain.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let n = 2 + (rng.next_u32() as usize % 9);
            let sigma = random_perm(&mut rng, n);
            let u: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let lhs: f64 = (0..n).map(|i| u[i] * (v[i] - v[sigma.image_of(i)])).sum();
            let chain = transposition_chain(&sigma);
            let mut rhs = 0.0;
            // 1-based positions j = 1..N-1 pair with sigma_{j-1}; 0-based
            // position jb pairs with chain step jb.
            for jb in 0..n - 1 {
                let prev = &chain.steps[jb];
                let prev_inv = prev.inverse();
                rhs += (u[jb] - u[prev_inv.image_of(jb)]) * (v[jb] - v[prev.image_of(jb)]);
            }
            let scale = lhs.abs().max(rhs.abs()).max(1e-30);
            assert!(
                (lhs - rhs).abs() <= 1e-12 * scale,
                "telescoping identity violated: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn enumerate_smallest_cases() {
        let all: Vec<_> = enumerate(1).unwrap().collect();
        assert_eq!(all, vec![Permutation::identity(1)]);

        let all: Vec<_> = enumerate(3).unwrap().collect();
        assert_eq!(all.len(), 6);
        assert_eq!(all[0].one_based_images(), vec![1, 2, 3]);
        assert_eq!(all[5].one_based_images(), vec![3, 2, 1]);
        // Lexicographically sorted and all distinct.
        for w in all.windows(2) {
            assert!(w[0].images() < w[1].images());
        }
    }

    #[test]
    fn enumerate_counts_distinct() {
        for n in 1..=6 {
            let mut seen = std::collections::HashSet::new();
            for p in enumerate(n).unwrap() {
                assert!(seen.insert(p.images().to_vec()));
            }
            assert_eq!(seen.len() as u64, factorial(n));
        }
    }

    #[test]
    fn enumerate_refuses_above_cap() {
        assert!(matches!(
            enumerate(13),
            Err(PermError::CapExceeded { n: 13, cap: 12 })
        ));
        assert!(enumerate_with_cap(13, 13).is_ok());
    }

    #[test]
    fn rank_unrank_round_trip_all_of_s6() {
        for (r, p) in enumerate(6).unwrap().enumerate() {
            assert_eq!(rank(&p), r as u64);
            assert_eq!(unrank(6, r as u64).unwrap(), p);
        }
    }

    #[test]
    fn range_enumeration_partitions_the_space() {
        let n = 5;
        let total = factorial(n);
        let mut stitched = Vec::new();
        for w in 0..4u64 {
            let lo = w * total / 4;
            let hi = (w + 1) * total / 4;
            stitched.extend(enumerate_range(n, lo, hi).unwrap());
        }
        let direct: Vec<_> = enumerate(n).unwrap().collect();
        assert_eq!(stitched, direct);
    }

    #[test]
    fn for_each_matches_iterator() {
        let mut seen = Vec::new();
        for_each_in_rank_range(4, 5, 17, |im| seen.push(im.to_vec())).unwrap();
        let expect: Vec<_> = enumerate_range(4, 5, 17)
            .unwrap()
            .map(|p| p.images().to_vec())
            .collect();
        assert_eq!(seen, expect);
    }

    #[test]
    fn scatter_gather_are_inverse_actions() {
        let p = Permutation::from_one_based(&[3, 1, 2]).unwrap();
        let w = [10.0, 20.0, 30.0];
        // Entry j lands at slot sigma(j).
        let pushed = p.scatter(&w);
        assert_eq!(pushed, vec![20.0, 30.0, 10.0]);
        assert_eq!(p.gather(&pushed), w.to_vec());
    }

    #[test]
    fn argsort_stable_sorts_and_respects_ties() {
        let v = [3.0, 1.0, 2.0, 1.0];
        let rho = Permutation::argsort_stable(&v);
        assert_eq!(rho.images(), &[1, 3, 2, 0]);
        let sorted = rho.gather(&v);
        assert!(sorted.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn serde_uses_one_based_arrays() {
        let p = Permutation::from_one_based(&[2, 3, 1]).unwrap();
        assert_eq!(serde_json::to_string(&p).unwrap(), "[2,3,1]");
        let back: Permutation = serde_json::from_str("[2,3,1]").unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<Permutation>("[2,2,1]").is_err());
        assert!(serde_json::from_str::<Permutation>("[0,1,2]").is_err());
    }

    #[test]
    fn cycle_notation_round_trip() {
        let p = Permutation::from_cycles(5, "(1 2 3)(4 5)").unwrap();
        assert_eq!(p.one_based_images(), vec![2, 3, 1, 5, 4]);
        assert_eq!(format!("{p}"), "(1 2 3)(4 5)");
        assert_eq!(format!("{}", Permutation::identity(3)), "id");
        assert!(Permutation::from_cycles(3, "(1 4)").is_err());
        assert!(Permutation::from_cycles(3, "(1 1)").is_err());
    }

    proptest! {
        #[test]
        fn bijectivity_closed_under_compose_and_inverse(
            seed in 0u64..1000, n in 1usize..=12
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_perm(&mut rng, n);
            let q = random_perm(&mut rng, n);
            let c = p.compose(&q).unwrap();
            prop_assert!(is_bijection(c.images()));
            prop_assert!(p.compose(&p.inverse()).unwrap().is_identity());
            prop_assert!(p.inverse().compose(&p).unwrap().is_identity());
        }

        #[test]
        fn rank_unrank_round_trip_random(seed in 0u64..500, n in 1usize..=10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_perm(&mut rng, n);
            let r = rank(&p);
            prop_assert!(r < factorial(n));
            prop_assert_eq!(unrank(n, r).unwrap(), p);
        }
    }
}
