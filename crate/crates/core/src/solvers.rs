//! The two optimizers over permutations.
//!
//! [`solve_exact`] scans all `N!` permutations of the exact objective `J`;
//! the rank space is split into contiguous lexicographic blocks so parallel
//! workers enumerate disjoint ranges and the merged result is bit-identical
//! to a single-threaded scan. [`solve_approx`] solves the assignment
//! relaxation `max <u, P v>` in closed form: the cost matrix `u_i v_j` has
//! rank one, so sorted matching is optimal and no general assignment solver
//! is needed.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{objective_approx_raw, objective_raw, AllocationSystem, DynamicsError};
use crate::perm::{self, PermError, Permutation};

/// Relative tolerance used only for the `ties` diagnostic; optimum selection
/// itself uses exact floating comparisons.
const TIE_REL_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Perm(#[from] PermError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

#[derive(Clone, Copy, Debug)]
pub struct SolveOptions {
    pub workers: usize,
    pub n_cap: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            workers: 1,
            n_cap: perm::DEFAULT_ENUM_CAP,
        }
    }
}

/// Outcome of an optimization pass over the permutation set.
///
/// `best` is the maximizing side and `worst` the minimizing side; on equal
/// values the lexicographically smallest image array wins, so results do not
/// depend on the worker count. `ties` counts the permutations whose value
/// lies within `1e-12 * |best_value|` of the best (diagnostic only).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveResult {
    pub best_perm: Permutation,
    pub best_value: f64,
    pub worst_perm: Permutation,
    pub worst_value: f64,
    pub evaluated: u64,
    pub ties: u64,
}

/// f64 key ordered by total order, for the near-optimal value histogram.
#[derive(Clone, Copy, PartialEq)]
struct ValueKey(f64);

impl Eq for ValueKey {}

impl PartialOrd for ValueKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ValueKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Running extremum of one side of the scan.
struct SideTracker {
    maximize: bool,
    value: f64,
    images: Vec<usize>,
    /// Distinct values within tolerance of the running extremum -> count.
    near: BTreeMap<ValueKey, u64>,
}

impl SideTracker {
    fn new(maximize: bool) -> Self {
        SideTracker {
            maximize,
            value: if maximize {
                f64::NEG_INFINITY
            } else {
                f64::INFINITY
            },
            images: Vec::new(),
            near: BTreeMap::new(),
        }
    }

    fn tol(&self) -> f64 {
        TIE_REL_TOL * self.value.abs()
    }

    fn qualifies(&self, v: f64) -> bool {
        if self.maximize {
            v >= self.value - self.tol()
        } else {
            v <= self.value + self.tol()
        }
    }

    fn prune(&mut self) {
        if self.maximize {
            // Keep keys >= value - tol.
            let cut = ValueKey(self.value - self.tol());
            self.near = self.near.split_off(&cut);
        } else {
            // Keep keys <= value + tol.
            let cut = (self.value + self.tol()).next_up();
            let _disqualified = self.near.split_off(&ValueKey(cut));
        }
    }

    fn observe(&mut self, v: f64, images: &[usize]) {
        let improves = if self.maximize {
            v > self.value
        } else {
            v < self.value
        };
        if improves {
            self.value = v;
            self.images.clear();
            self.images.extend_from_slice(images);
            *self.near.entry(ValueKey(v)).or_insert(0) += 1;
            self.prune();
        } else if self.qualifies(v) {
            *self.near.entry(ValueKey(v)).or_insert(0) += 1;
        }
    }

    /// Merge `other` into `self`; `other` must come from a later rank block
    /// so that lexicographic tie-breaking keeps the earlier representative.
    fn merge(&mut self, other: SideTracker) {
        let improves = if self.maximize {
            other.value > self.value
        } else {
            other.value < self.value
        };
        if improves {
            self.value = other.value;
            self.images = other.images;
        }
        for (k, c) in other.near {
            *self.near.entry(k).or_insert(0) += c;
        }
        self.prune();
    }

    fn tie_count(&self) -> u64 {
        self.near
            .iter()
            .filter(|(k, _)| self.qualifies(k.0))
            .map(|(_, c)| c)
            .sum()
    }
}

struct ScanOutcome {
    max: SideTracker,
    min: SideTracker,
}

fn scan_block(sys: &AllocationSystem, n: usize, lo: u64, hi: u64) -> ScanOutcome {
    let mut max = SideTracker::new(true);
    let mut min = SideTracker::new(false);
    let mut visited = vec![false; n];
    perm::for_each_in_rank_range(n, lo, hi, |images| {
        let v = objective_raw(sys.u(), sys.d(), sys.v(), images, &mut visited);
        max.observe(v, images);
        min.observe(v, images);
    })
    .expect("block bounds checked by caller");
    ScanOutcome { max, min }
}

/// Exhaustive maximization and minimization of `J` over all `N!`
/// permutations. Refuses `N` above `opts.n_cap` (default 12).
pub fn solve_exact(sys: &AllocationSystem, opts: &SolveOptions) -> Result<SolveResult, SolveError> {
    let n = sys.n();
    let cap = opts.n_cap.min(perm::MAX_ENUM_SIZE);
    if n > cap {
        return Err(PermError::CapExceeded { n, cap }.into());
    }
    let total = perm::factorial(n);
    let workers = opts.workers.max(1).min(total.max(1) as usize);

    let outcome = if workers == 1 {
        scan_block(sys, n, 0, total)
    } else {
        let blocks: Vec<(u64, u64)> = (0..workers as u64)
            .map(|w| (w * total / workers as u64, (w + 1) * total / workers as u64))
            .collect();
        let mut results: Vec<Option<ScanOutcome>> = std::thread::scope(|scope| {
            let handles: Vec<_> = blocks
                .iter()
                .map(|&(lo, hi)| scope.spawn(move || scan_block(sys, n, lo, hi)))
                .collect();
            handles
                .into_iter()
                .map(|h| Some(h.join().expect("solver worker panicked")))
                .collect()
        });
        // Merge in ascending block order: lexicographic tie-break stays exact.
        let mut acc = results[0].take().unwrap();
        for slot in results.iter_mut().skip(1) {
            let part = slot.take().unwrap();
            acc.max.merge(part.max);
            acc.min.merge(part.min);
        }
        acc
    };

    let ties = outcome.max.tie_count();
    Ok(SolveResult {
        best_perm: Permutation::from_images(outcome.max.images).expect("scan yields bijections"),
        best_value: outcome.max.value,
        worst_perm: Permutation::from_images(outcome.min.images).expect("scan yields bijections"),
        worst_value: outcome.min.value,
        evaluated: total,
        ties,
    })
}

/// The sorted-matching permutations: the maximizer pairs the largest entry
/// of `u` with the largest of `v` and so on down; the minimizer pairs the
/// largest with the smallest. Ties are broken by the stable argsort, so
/// duplicated entries still give a deterministic optimal representative.
pub fn sorted_matching(u: &[f64], v: &[f64]) -> (Permutation, Permutation) {
    let n = u.len();
    let rho_u = Permutation::argsort_stable(u);
    let rho_v = Permutation::argsort_stable(v);
    let rho_v_inv = rho_v.inverse();
    let plus = rho_u.compose(&rho_v_inv).expect("same size");
    let minus = rho_u
        .compose(&Permutation::reversal(n))
        .expect("same size")
        .compose(&rho_v_inv)
        .expect("same size");
    (plus, minus)
}

/// Closed-form optimization of the approximate objective `<u, P v>`.
pub fn solve_approx(sys: &AllocationSystem) -> SolveResult {
    let (plus, minus) = sorted_matching(sys.u(), sys.v());
    let best_value = objective_approx_raw(sys.u(), sys.v(), plus.images());
    let worst_value = objective_approx_raw(sys.u(), sys.v(), minus.images());
    SolveResult {
        best_perm: plus,
        best_value,
        worst_perm: minus,
        worst_value,
        evaluated: 2,
        ties: 1,
    }
}
