//! Optimal periodic re-allocation strategies for switched linear systems.
//!
//! A switched linear system distributes `N` constant resources over `N`
//! activities; after every period `T` the allocation is rearranged by a fixed
//! permutation. The trajectory converges to a periodic regime whose value
//! `J(P) = <u, (I - PD)^-1 P v>` depends only on the permutation matrix `P`,
//! so finding the best re-allocation strategy is a discrete optimization over
//! the `N!` permutations.
//!
//! This crate provides:
//!
//! * [`perm`]: permutation algebra: composition, powers, order, lexicographic
//!   enumeration with factorial-number-system unranking, the transposition
//!   factorization chain and divergence sets used by the optimality criterion;
//! * [`dynamics`]: the switched system itself: building `(D, v)` from rates,
//!   closed-form trajectories, the periodic steady state and both objectives
//!   `J` and its linear approximation `<u, Pv>`;
//! * [`solvers`]: exhaustive exact search over all permutations (parallel,
//!   deterministic) and the `O(N log N)` sorted-matching optimum of the
//!   approximate objective;
//! * [`criterion`]: a sufficiency test certifying when the sorted matching
//!   solves the exact problem;
//! * [`raceway`]: the microalgae raceway application: photoinhibition
//!   dynamics under a layered exponentially attenuated light field, growth
//!   objective, strategy-efficiency ratios and parameter sweeps.
//!
//! Indexing convention: the Rust API is 0-based throughout; serialized
//! permutations (JSON image arrays, cycle notation) are 1-based.

pub mod criterion;
pub mod dynamics;
pub mod numeric;
pub mod perm;
pub mod raceway;
pub mod solvers;

pub use dynamics::AllocationSystem;
pub use perm::Permutation;
