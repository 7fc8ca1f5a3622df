//! Sufficiency criterion: when does the sorted matching solve the exact
//! problem?
//!
//! The exact objective expands as `J(P) = <u, Pv> + sum_{l>=1} <u, (PD)^l Pv>`.
//! The criterion compares a bound on how much the tail can reorder candidates
//! against the guaranteed first-order gap between the sorted matching and any
//! other permutation:
//!
//! * `s_m`: partial sums of the sorted minimal gap products
//!   `p_n = min_{i!=n, j!=n} |(u_n - u_i)(w_n - w_j)|` with `w` the
//!   ascending rearrangement of `v`;
//! * `F_m^+/F_m^-`: upper/lower bounds for sums of at most `m` products
//!   `u_i v_j` with distinct rows and columns (sign-dependent block sums of
//!   the sorted arrays);
//! * `phi(m1)`: the tail bound `sum_{l>=1} d_max^l F^+_{(l+1)m1} -
//!   d_min^l F^-_{(l+1)m1}` divided by `s_{ceil(m1/2)}`, evaluated exactly:
//!   `F` saturates for `m >= N`, so the series reduces to a finite part plus
//!   two closed-form geometric tails.
//!
//! If `max_{2 <= m1 <= N} phi(m1) <= 1` the maximizer (and minimizer) of the
//! exact objective coincides with the sorted matching, so the `O(N log N)`
//! closed form replaces the `N!` scan.

use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{normalize_sorted_u, AllocationSystem};
use crate::numeric::NeumaierSum;
use crate::perm::Permutation;

#[derive(Debug, Error, PartialEq)]
pub enum CriterionError {
    #[error("criterion needs at least two slots")]
    TooSmall,
    #[error(
        "entries of {which} mix signs; the criterion requires each of u and v \
         to keep a constant sign"
    )]
    MixedSign { which: &'static str },
    #[error(
        "degenerate gap products: s_{m} = 0 (duplicate entries leave no \
         certified first-order gap, phi is undefined)"
    )]
    DegenerateGaps { m: usize },
    #[error("m1 = {m1} out of range 2..={n}")]
    BadM1 { m1: usize, n: usize },
    #[error("u must be sorted ascending (apply normalize_sorted_u first)")]
    UnsortedU,
    #[error("sigma_plus does not sort v ascending")]
    BadSigmaPlus,
}

/// Sign pattern of the weight vectors, `u` first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SignCase {
    #[serde(rename = "u+v+")]
    PosPos,
    #[serde(rename = "u-v+")]
    NegPos,
    #[serde(rename = "u+v-")]
    PosNeg,
    #[serde(rename = "u-v-")]
    NegNeg,
}

fn constant_sign(xs: &[f64], which: &'static str) -> Result<bool, CriterionError> {
    let has_pos = xs.iter().any(|&x| x > 0.0);
    let has_neg = xs.iter().any(|&x| x < 0.0);
    if has_pos && has_neg {
        return Err(CriterionError::MixedSign { which });
    }
    // All-zero vectors count as non-negative.
    Ok(!has_neg)
}

/// Classify the sign pattern, rejecting mixed-sign vectors.
pub fn sign_case(u: &[f64], v: &[f64]) -> Result<SignCase, CriterionError> {
    let u_pos = constant_sign(u, "u")?;
    let v_pos = constant_sign(v, "v")?;
    Ok(match (u_pos, v_pos) {
        (true, true) => SignCase::PosPos,
        (false, true) => SignCase::NegPos,
        (true, false) => SignCase::PosNeg,
        (false, false) => SignCase::NegNeg,
    })
}

/// Minimal gap products around the sorted matching.
#[derive(Clone, Debug, Serialize)]
pub struct GapProducts {
    /// `p_n` in slot order (0-based n).
    pub p_tilde: Vec<f64>,
    /// `p_tilde` sorted ascending.
    pub p_sorted: Vec<f64>,
    /// Prefix sums of `p_sorted`: `s[m-1] = p_1 + .. + p_m`.
    pub s: Vec<f64>,
}

fn is_ascending(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[0] <= w[1])
}

/// Distance to the nearest other entry of an ascending array; for sorted
/// input the minimum over all other indices is attained at a neighbor.
fn neighbor_gaps(sorted: &[f64]) -> Vec<f64> {
    let n = sorted.len();
    (0..n)
        .map(|i| {
            let left = if i > 0 {
                sorted[i] - sorted[i - 1]
            } else {
                f64::INFINITY
            };
            let right = if i + 1 < n {
                sorted[i + 1] - sorted[i]
            } else {
                f64::INFINITY
            };
            left.min(right)
        })
        .collect()
}

/// Gap products `p_n = min_{i!=n} |u_n - u_i| * min_{j!=n} |w_n - w_j|`
/// (`w_n = v[sigma_plus(n)]`, ascending), their sorted rearrangement, and
/// the prefix sums `s_m`. Requires `u` ascending and `N >= 2`.
pub fn gap_products(
    u: &[f64],
    v: &[f64],
    sigma_plus: &Permutation,
) -> Result<GapProducts, CriterionError> {
    let n = u.len();
    if n < 2 {
        return Err(CriterionError::TooSmall);
    }
    if !is_ascending(u) {
        return Err(CriterionError::UnsortedU);
    }
    let w = sigma_plus.gather(v);
    if !is_ascending(&w) {
        return Err(CriterionError::BadSigmaPlus);
    }
    let gu = neighbor_gaps(u);
    let gw = neighbor_gaps(&w);
    let p_tilde: Vec<f64> = gu.iter().zip(&gw).map(|(&a, &b)| a * b).collect();
    let mut p_sorted = p_tilde.clone();
    p_sorted.sort_by(f64::total_cmp);
    let mut s = Vec::with_capacity(n);
    let mut acc = NeumaierSum::new();
    for &p in &p_sorted {
        acc.add(p);
        s.push(acc.total());
    }
    Ok(GapProducts {
        p_tilde,
        p_sorted,
        s,
    })
}

/// `(F_m^-, F_m^+)`: lower/upper bounds for sums of at most `m` products
/// `u_i v_j` over distinct rows and columns. Requires `u` ascending; the
/// block-sum formulas depend on the sign pattern and both saturate at
/// `m >= N`.
pub fn f_bounds(u: &[f64], v: &[f64], m: usize) -> Result<(f64, f64), CriterionError> {
    let n = u.len();
    if n < 2 {
        return Err(CriterionError::TooSmall);
    }
    if !is_ascending(u) {
        return Err(CriterionError::UnsortedU);
    }
    let case = sign_case(u, v)?;
    let mut sv = v.to_vec();
    sv.sort_by(f64::total_cmp);
    Ok(f_bounds_sorted(u, &sv, case, m))
}

/// Core block sums over pre-sorted arrays (`su`, `sv` both ascending).
fn f_bounds_sorted(su: &[f64], sv: &[f64], case: SignCase, m: usize) -> (f64, f64) {
    let n = su.len();
    let m = m.min(n);
    let mut plus = NeumaierSum::new();
    let mut minus = NeumaierSum::new();
    match case {
        SignCase::PosPos => {
            // Max: the m largest sorted products. Min: the m smallest entries
            // of each, anti-matched.
            for t in 0..m {
                plus.add(su[n - m + t] * sv[n - m + t]);
                minus.add(su[t] * sv[m - 1 - t]);
            }
        }
        SignCase::NegPos => {
            // Min: most-negative u against the largest v, sorted-aligned.
            // Max: least-negative u against the largest v, anti-matched.
            for t in 0..m {
                plus.add(su[n - m + t] * sv[n - 1 - t]);
                minus.add(su[t] * sv[n - 1 - t]);
            }
        }
        SignCase::PosNeg => {
            // Mirror of NegPos with the roles of u and v exchanged.
            for t in 0..m {
                plus.add(su[t] * sv[n - m + t]);
                minus.add(su[n - m + t] * sv[m - 1 - t]);
            }
        }
        SignCase::NegNeg => {
            // Products are positive again; the extreme blocks swap ends.
            for t in 0..m {
                plus.add(su[t] * sv[t]);
                minus.add(su[n - 1 - t] * sv[n - m + t]);
            }
        }
    }
    (minus.total(), plus.total())
}

/// Everything [`check`] computes: the gap sums, both `F` sequences, every
/// `phi(m1)` and the verdict.
#[derive(Clone, Debug, Serialize)]
pub struct CriterionReport {
    pub sign_case: SignCase,
    /// `s_m` for `m = 1..=N` (index `m-1`).
    pub s: Vec<f64>,
    /// `F_m^+` for `m = 1..=N` (index `m-1`).
    pub f_plus: Vec<f64>,
    /// `F_m^-` for `m = 1..=N` (index `m-1`).
    pub f_minus: Vec<f64>,
    /// `phi(m1)` for `m1 = 2..=N` (index `m1-2`).
    pub phi: Vec<f64>,
    pub max_phi: f64,
    /// `max_phi <= 1`: the sorted matching provably solves both the
    /// maximization and the minimization of the exact objective.
    pub satisfied: bool,
    pub d_max: f64,
    pub d_min: f64,
}

struct Prepared {
    n: usize,
    case: SignCase,
    s: Vec<f64>,
    f_plus: Vec<f64>,
    f_minus: Vec<f64>,
    /// The F sequences of the sign-flipped equivalent problem with positive
    /// vectors: identical to `(f_plus, f_minus)` when `u` and `v` share a
    /// sign, and `(-f_minus, -f_plus)` when exactly one is negative (the
    /// flip `u -> -u` or `v -> -v` negates every product and swaps the roles
    /// of upper and lower bound). The series in `phi` is always evaluated on
    /// these positive-problem bounds.
    tilde_plus: Vec<f64>,
    tilde_minus: Vec<f64>,
    d_max: f64,
    d_min: f64,
}

fn prepare(sys: &AllocationSystem) -> Result<Prepared, CriterionError> {
    let n = sys.n();
    if n < 2 {
        return Err(CriterionError::TooSmall);
    }
    let (sorted, _) = normalize_sorted_u(sys);
    let case = sign_case(sorted.u(), sorted.v())?;
    let sigma_plus = Permutation::argsort_stable(sorted.v());
    let gaps = gap_products(sorted.u(), sorted.v(), &sigma_plus)?;
    let mut sv = sorted.v().to_vec();
    sv.sort_by(f64::total_cmp);
    let mut f_plus = Vec::with_capacity(n);
    let mut f_minus = Vec::with_capacity(n);
    for m in 1..=n {
        let (fm, fp) = f_bounds_sorted(sorted.u(), &sv, case, m);
        f_minus.push(fm);
        f_plus.push(fp);
    }
    let mixed_sign = matches!(case, SignCase::NegPos | SignCase::PosNeg);
    let (tilde_plus, tilde_minus) = if mixed_sign {
        (
            f_minus.iter().map(|x| -x).collect(),
            f_plus.iter().map(|x| -x).collect(),
        )
    } else {
        (f_plus.clone(), f_minus.clone())
    };
    Ok(Prepared {
        n,
        case,
        s: gaps.s,
        f_plus,
        f_minus,
        tilde_plus,
        tilde_minus,
        d_max: sys.d_max(),
        d_min: sys.d_min(),
    })
}

fn phi_from_parts(parts: &Prepared, m1: usize) -> Result<f64, CriterionError> {
    let n = parts.n;
    if m1 < 2 || m1 > n {
        return Err(CriterionError::BadM1 { m1, n });
    }
    let s_index = m1.div_ceil(2);
    let s_gap = parts.s[s_index - 1];
    if s_gap == 0.0 {
        return Err(CriterionError::DegenerateGaps { m: s_index });
    }
    // F saturates at m >= N, so the series splits after l* = floor(N/m1) - 1
    // into an exact finite part plus two geometric tails.
    let l_star = n / m1 - 1;
    let mut acc = NeumaierSum::new();
    let mut dmax_pow = 1.0;
    let mut dmin_pow = 1.0;
    for l in 1..=l_star {
        dmax_pow *= parts.d_max;
        dmin_pow *= parts.d_min;
        let m = (l + 1) * m1;
        acc.add(dmax_pow * parts.tilde_plus[m - 1]);
        acc.add(-(dmin_pow * parts.tilde_minus[m - 1]));
    }
    dmax_pow *= parts.d_max;
    dmin_pow *= parts.d_min;
    acc.add(dmax_pow / (1.0 - parts.d_max) * parts.tilde_plus[n - 1]);
    acc.add(-(dmin_pow / (1.0 - parts.d_min) * parts.tilde_minus[n - 1]));
    Ok(acc.total() / s_gap)
}

/// The tail-to-gap ratio `phi(m1)`. The system is normalized internally, so
/// `u` need not be pre-sorted.
///
/// The series `sum_{l>=1} d_max^l F^+_{(l+1)m1} - d_min^l F^-_{(l+1)m1}` is
/// evaluated on the bounds of the sign-flipped positive problem: when `u`
/// and `v` share a sign those are `(F^+, F^-)` themselves, and when exactly
/// one is negative they are `(-F^-, -F^+)`; flipping one vector negates
/// every product and swaps the roles of the two bounds.
pub fn phi(sys: &AllocationSystem, m1: usize) -> Result<f64, CriterionError> {
    let parts = prepare(sys)?;
    phi_from_parts(&parts, m1)
}

/// Evaluate `phi` over every `m1` and report the verdict
/// `max_{m1 >= 2} phi(m1) <= 1`.
pub fn check(sys: &AllocationSystem) -> Result<CriterionReport, CriterionError> {
    let parts = prepare(sys)?;
    let mut phis = Vec::with_capacity(parts.n - 1);
    for m1 in 2..=parts.n {
        phis.push(phi_from_parts(&parts, m1)?);
    }
    let max_phi = phis.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(CriterionReport {
        sign_case: parts.case,
        s: parts.s,
        f_plus: parts.f_plus,
        f_minus: parts.f_minus,
        phi: phis,
        max_phi,
        satisfied: max_phi <= 1.0,
        d_max: parts.d_max,
        d_min: parts.d_min,
    })
}

/// `phi(m1)` evaluated only for `m1 = 2`.
///
/// Heuristic shortcut: across the systems explored experimentally the
/// maximum of `phi` sits at `m1 = 2`, but that is an observation, not a
/// theorem, so a `true` from this function is NOT a certificate. Use
/// [`check`] for the sound verdict.
pub fn quick_phi2(sys: &AllocationSystem) -> Result<f64, CriterionError> {
    phi(sys, 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::objective_j;
    use crate::perm;
    use crate::solvers::{solve_approx, solve_exact, SolveOptions};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sys(u: Vec<f64>, v: Vec<f64>, d: Vec<f64>) -> AllocationSystem {
        AllocationSystem::new(u, v, d).unwrap()
    }

    #[test]
    fn sign_case_classification() {
        assert_eq!(sign_case(&[1.0, 2.0], &[3.0, 4.0]), Ok(SignCase::PosPos));
        assert_eq!(sign_case(&[-1.0, -2.0], &[3.0, 4.0]), Ok(SignCase::NegPos));
        assert_eq!(sign_case(&[1.0, 2.0], &[-3.0, -4.0]), Ok(SignCase::PosNeg));
        assert_eq!(
            sign_case(&[-1.0, -2.0], &[-3.0, -4.0]),
            Ok(SignCase::NegNeg)
        );
        assert_eq!(sign_case(&[0.0, 0.0], &[0.0, 1.0]), Ok(SignCase::PosPos));
        assert!(matches!(
            sign_case(&[-1.0, 2.0], &[1.0, 1.0]),
            Err(CriterionError::MixedSign { which: "u" })
        ));
    }

    #[test]
    fn gap_products_hand_example() {
        // u = (1,2,4), v = (1,3,4) already sorted.
        let u = [1.0, 2.0, 4.0];
        let v = [1.0, 3.0, 4.0];
        let g = gap_products(&u, &v, &Permutation::identity(3)).unwrap();
        assert_eq!(g.p_tilde, vec![2.0, 1.0, 2.0]);
        assert_eq!(g.p_sorted, vec![1.0, 2.0, 2.0]);
        assert_eq!(g.s, vec![1.0, 3.0, 5.0]);
    }

    #[test]
    fn gap_products_duplicate_entry_zeroes_s1() {
        let u = [1.0, 1.0, 2.0];
        let v = [1.0, 2.0, 3.0];
        let g = gap_products(&u, &v, &Permutation::identity(3)).unwrap();
        assert_eq!(g.s[0], 0.0);
    }

    #[test]
    fn gap_products_rejects_small_and_unsorted() {
        assert!(matches!(
            gap_products(&[1.0], &[1.0], &Permutation::identity(1)),
            Err(CriterionError::TooSmall)
        ));
        assert!(matches!(
            gap_products(&[2.0, 1.0], &[1.0, 2.0], &Permutation::identity(2)),
            Err(CriterionError::UnsortedU)
        ));
    }

    #[test]
    fn neighbor_shortcut_equals_full_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        for _ in 0..500 {
            let n = 2 + rng.random_range(0..9usize);
            let mut u: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            u.sort_by(f64::total_cmp);
            v.sort_by(f64::total_cmp);
            let g = gap_products(&u, &v, &Permutation::identity(n)).unwrap();
            for i in 0..n {
                let full_u = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| (u[i] - u[j]).abs())
                    .fold(f64::INFINITY, f64::min);
                let full_v = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| (v[i] - v[j]).abs())
                    .fold(f64::INFINITY, f64::min);
                let full = full_u * full_v;
                assert!(
                    (g.p_tilde[i] - full).abs() <= 1e-12 * full.abs().max(1e-300),
                    "neighbor shortcut mismatch at {i}: {} vs {full}",
                    g.p_tilde[i]
                );
            }
        }
    }

    #[test]
    fn f_bounds_hand_example_positive() {
        // u = (1,2), v = (3,4): F_1^+ = 2*4, F_1^- = 1*3.
        let (fm, fp) = f_bounds(&[1.0, 2.0], &[3.0, 4.0], 1).unwrap();
        assert_eq!(fp, 8.0);
        assert_eq!(fm, 3.0);
    }

    #[test]
    fn f_bounds_saturate_past_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for case_id in 0..4 {
            let n = 5;
            let mut u: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..4.0)).collect();
            let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..4.0)).collect();
            if case_id == 1 || case_id == 3 {
                for x in &mut u {
                    *x = -*x;
                }
            }
            if case_id == 2 || case_id == 3 {
                for x in &mut v {
                    *x = -*x;
                }
            }
            u.sort_by(f64::total_cmp);
            let at_n = f_bounds(&u, &v, n).unwrap();
            for m in n..n + 4 {
                assert_eq!(f_bounds(&u, &v, m).unwrap(), at_n);
            }
        }
    }

    #[test]
    fn f_bounds_ordering_all_sign_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(90);
        for _ in 0..400 {
            let n = 2 + rng.random_range(0..8usize);
            let mut u: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..5.0)).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..5.0)).collect();
            let flip_u = rng.random_range(0..2) == 1;
            let flip_v = rng.random_range(0..2) == 1;
            if flip_u {
                for x in &mut u {
                    *x = -*x;
                }
            }
            let v: Vec<f64> = if flip_v {
                v.iter().map(|x| -x).collect()
            } else {
                v
            };
            u.sort_by(f64::total_cmp);
            let mut prev_plus: Option<f64> = None;
            for m in 1..=n {
                let (fm, fp) = f_bounds(&u, &v, m).unwrap();
                assert!(
                    fp >= fm - 1e-12 * fp.abs().max(fm.abs()),
                    "F+ >= F- violated at m={m}: {fp} < {fm}"
                );
                if !flip_u && !flip_v {
                    if let Some(prev) = prev_plus {
                        assert!(fp >= prev - 1e-12 * fp.abs().max(1.0));
                    }
                }
                prev_plus = Some(fp);
            }
        }
    }

    #[test]
    fn f_bounds_extremal_over_exhaustive_pairings() {
        // In the u+v+, u+v- and u-v- cases F_m^- and F_m^+ bound every sum of
        // exactly m products u_i v_j with distinct rows and columns. (The
        // u-v+ case uses the sign-adjusted block sums instead, pinned by
        // `negative_u_case_reduces_to_flipped_positive_case`.)
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let n = 2 + rng.random_range(0..4usize); // up to 5
            let mut u: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..3.0)).collect();
            let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..3.0)).collect();
            let flip_v = rng.random_range(0..2) == 1;
            if rng.random_range(0..2) == 1 {
                // Only flip u when v flips too, keeping u-v+ out of this test.
                if flip_v {
                    for x in &mut u {
                        *x = -*x;
                    }
                }
            }
            if flip_v {
                for x in &mut v {
                    *x = -*x;
                }
            }
            u.sort_by(f64::total_cmp);
            for m in 1..=n {
                let (fm, fp) = f_bounds(&u, &v, m).unwrap();
                // All pairings of an m-subset of rows with an m-subset of
                // columns, enumerated through full permutations restricted
                // to their first m points.
                for p in perm::enumerate(n).unwrap() {
                    for q in perm::enumerate(n).unwrap() {
                        let total: f64 = (0..m).map(|t| u[p.image_of(t)] * v[q.image_of(t)]).sum();
                        let tol = 1e-9 * (1.0 + total.abs());
                        assert!(
                            total <= fp + tol && total >= fm - tol,
                            "m={m}: sum {total} outside [{fm}, {fp}]"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn negative_u_case_reduces_to_flipped_positive_case() {
        // Computing the negative-u bounds on (u, v) must equal applying the
        // descending-adapted positive formulas to (-u, v) with the roles of
        // the two v-sorters swapped and the overall sign flipped.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let n = 2 + rng.random_range(0..7usize);
            let mut u: Vec<f64> = (0..n).map(|_| -rng.random_range(0.05..5.0)).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..5.0)).collect();
            u.sort_by(f64::total_cmp);
            let mut sv = v.clone();
            sv.sort_by(f64::total_cmp);
            for m in 1..=n + 2 {
                let (fm, fp) = f_bounds(&u, &v, m).unwrap();
                let mm = m.min(n);
                // Oracle: tilde_u = -u is positive, sorted descending; the
                // high/low blocks of the positive-case formulas move to the
                // front/back and the v-sorters swap direction.
                let tilde_plus: f64 = (0..mm).map(|t| -u[t] * sv[n - 1 - t]).sum();
                let tilde_minus: f64 = (0..mm)
                    .map(|t| {
                        let n1 = n - mm + t; // 0-based row in the tail block
                        -u[n1] * sv[2 * n - mm - n1 - 1]
                    })
                    .sum();
                assert!((fm - (-tilde_plus)).abs() <= 1e-12 * tilde_plus.abs().max(1.0));
                assert!((fp - (-tilde_minus)).abs() <= 1e-12 * tilde_minus.abs().max(1.0));
            }
        }
    }

    #[test]
    fn phi_at_m1_equal_n_is_pure_tail() {
        let s = sys(
            vec![1.0, 2.0, 4.0],
            vec![1.0, 3.0, 4.0],
            vec![0.2, 0.5, 0.3],
        );
        let parts = prepare(&s).unwrap();
        let n = 3;
        let expect = (parts.d_max / (1.0 - parts.d_max) * parts.f_plus[n - 1]
            - parts.d_min / (1.0 - parts.d_min) * parts.f_minus[n - 1])
            / parts.s[((n as f64) / 2.0).ceil() as usize - 1];
        let got = phi(&s, n).unwrap();
        assert!((got - expect).abs() <= 1e-12 * expect.abs().max(1.0));
    }

    #[test]
    fn phi_truncation_matches_naive_partial_sum() {
        // The closed form must agree with a long explicit partial sum; keep
        // d_max <= 0.8 so the 200-term geometric remainder is below 1e-10
        // relative.
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..100 {
            let n = 2 + rng.random_range(0..9usize);
            let mut u: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..5.0)).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..5.0)).collect();
            if rng.random_range(0..2) == 1 {
                for x in &mut u {
                    *x = -*x;
                }
            }
            u.sort_by(f64::total_cmp);
            let d: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.8)).collect();
            let s = sys(u.clone(), v.clone(), d);
            let parts = prepare(&s).unwrap();
            for m1 in 2..=n {
                let s_gap = parts.s[m1.div_ceil(2) - 1];
                if s_gap == 0.0 {
                    continue;
                }
                let exact = phi(&s, m1).unwrap();
                let mut naive = 0.0;
                for l in 1..=200u32 {
                    let m = ((l as usize + 1) * m1).min(n);
                    naive += parts.d_max.powi(l as i32) * parts.tilde_plus[m - 1]
                        - parts.d_min.powi(l as i32) * parts.tilde_minus[m - 1];
                }
                naive /= s_gap;
                assert!(
                    (exact - naive).abs() <= 1e-10 * exact.abs().max(naive.abs()).max(1e-300),
                    "m1={m1}: truncated {exact} vs naive {naive}"
                );
            }
        }
    }

    #[test]
    fn phi_errors() {
        let s = sys(vec![1.0, 2.0], vec![1.0, 2.0], vec![0.5, 0.5]);
        assert!(matches!(
            phi(&s, 1),
            Err(CriterionError::BadM1 { m1: 1, n: 2 })
        ));
        assert!(matches!(
            phi(&s, 3),
            Err(CriterionError::BadM1 { m1: 3, n: 2 })
        ));
        let degenerate = sys(vec![1.0, 1.0], vec![1.0, 2.0], vec![0.5, 0.5]);
        assert!(matches!(
            phi(&degenerate, 2),
            Err(CriterionError::DegenerateGaps { m: 1 })
        ));
    }

    #[test]
    fn vanishing_decay_factor_satisfies_trivially() {
        let s = sys(
            vec![1.0, 2.0, 3.0],
            vec![1.0, 2.5, 4.0],
            vec![1e-14, 2e-14, 3e-14],
        );
        let report = check(&s).unwrap();
        assert!(report.satisfied);
        assert!(report.max_phi.abs() < 1e-10);
    }

    #[test]
    fn check_handles_unsorted_negative_u() {
        let s = sys(
            vec![-1.0, -3.0, -2.0],
            vec![0.5, 1.0, 2.0],
            vec![0.01, 0.02, 0.03],
        );
        let report = check(&s).unwrap();
        assert_eq!(report.sign_case, SignCase::NegPos);
        assert_eq!(report.phi.len(), 2);
        assert!(report.satisfied);
    }

    #[test]
    fn intermediate_tail_bound_holds() {
        // |<u, (P+ D)^l P+ v - (P D)^l P v>| must stay below
        // d_max^l F+_{(l+1)m1} - d_min^l F-_{(l+1)m1} with m1 = #E_1(s+, s).
        let mut rng = ChaCha8Rng::seed_from_u64(2718);
        let mut checked = 0u32;
        for _ in 0..400 {
            let n = 2 + rng.random_range(0..6usize);
            let mut u: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..4.0)).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..4.0)).collect();
            u.sort_by(f64::total_cmp);
            let d: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.95)).collect();
            let s = sys(u.clone(), v.clone(), d.clone());
            let plus = solve_approx(&s).best_perm;
            let mut images: Vec<usize> = (0..n).collect();
            use rand::seq::SliceRandom;
            images.shuffle(&mut rng);
            let p = Permutation::from_images(images).unwrap();
            let m1 = perm::divergence_sets(&plus, &p, 1).unwrap().m_k;
            if m1 == 0 {
                continue;
            }
            let iterate = |q: &Permutation, l: u32| -> f64 {
                let mut w = q.scatter(&v);
                for _ in 0..l {
                    let scaled: Vec<f64> = w.iter().zip(&d).map(|(&x, &dd)| x * dd).collect();
                    w = q.scatter(&scaled);
                }
                u.iter().zip(&w).map(|(&a, &b)| a * b).sum()
            };
            for l in 1..=5u32 {
                let diff = (iterate(&plus, l) - iterate(&p, l)).abs();
                let m = ((l as usize + 1) * m1).min(n);
                let (fm, fp) = f_bounds(&u, &v, m).unwrap();
                let bound = s.d_max().powi(l as i32) * fp - s.d_min().powi(l as i32) * fm;
                assert!(
                    diff <= bound * (1.0 + 1e-9) + 1e-12,
                    "tail bound violated at l={l}, m1={m1}: {diff} > {bound}"
                );
                checked += 1;
            }
        }
        assert!(checked > 500, "not enough non-trivial cases: {checked}");
    }

    #[test]
    fn soundness_on_random_systems_smoke() {
        // Small in-module version of the headline soundness property; the
        // acceptance suite runs the full-size variant.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut satisfied_count = 0;
        for _ in 0..120 {
            let n = 3 + rng.random_range(0..4usize);
            let mut u: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..5.0)).collect();
            let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..5.0)).collect();
            if rng.random_range(0..2) == 1 {
                for x in &mut u {
                    *x = -*x;
                }
            }
            if rng.random_range(0..2) == 1 {
                for x in &mut v {
                    *x = -*x;
                }
            }
            // Log-uniform decay factors so both verdicts occur: small d
            // makes the tail negligible (satisfied), d near 1 blows it up.
            let d: Vec<f64> = (0..n)
                .map(|_| (rng.random_range((1e-8f64).ln()..(0.9f64).ln())).exp())
                .collect();
            let s = sys(u, v, d);
            let report = match check(&s) {
                Ok(r) => r,
                Err(CriterionError::DegenerateGaps { .. }) => continue,
                Err(e) => panic!("unexpected criterion error: {e}"),
            };
            if !report.satisfied {
                continue;
            }
            satisfied_count += 1;
            let exact = solve_exact(&s, &SolveOptions::default()).unwrap();
            let approx = solve_approx(&s);
            let j_plus = objective_j(&s, &approx.best_perm).unwrap();
            let j_minus = objective_j(&s, &approx.worst_perm).unwrap();
            assert!(
                (exact.best_value - j_plus).abs() <= 1e-10 * exact.best_value.abs(),
                "satisfied verdict but max differs: {} vs {}",
                exact.best_value,
                j_plus
            );
            assert!(
                (exact.worst_value - j_minus).abs() <= 1e-10 * exact.worst_value.abs(),
                "satisfied verdict but min differs: {} vs {}",
                exact.worst_value,
                j_minus
            );
        }
        assert!(satisfied_count > 0, "no satisfied systems sampled");
    }
}
