//! The switched linear resource-allocation system.
//!
//! Each of the `N` slots carries a scalar state obeying
//! `x_n'(t) = -a_n x_n(t) + b_n` on every period of length `T`; at the period
//! boundaries the states are rearranged by a permutation matrix `P`
//! (`x <- P x`, entry `j` moving to slot `sigma(j)`). Over one period the flow
//! contracts by `d_n = exp(-a_n T)` and accumulates `v_n = b_n/a_n (1 - d_n)`,
//! so the boundary states follow the affine step map `x -> P D x + P v`.
//! Because every `d_n` lies strictly inside `(0, 1)` the map is a contraction
//! and has a unique fixed point `x_per = (I - P D)^-1 P v`, the periodic
//! regime; the objective `J(P) = <u, x_per>` is what the solvers optimize.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::perm::{PermError, Permutation};

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("decay rate a[{index}] = {value} must be strictly positive and finite")]
    BadDecayRate { index: usize, value: f64 },
    #[error("source rate b[{index}] = {value} must be non-negative and finite")]
    BadSourceRate { index: usize, value: f64 },
    #[error("period must be strictly positive and finite, got {0}")]
    BadPeriod(f64),
    #[error("{0}")]
    LengthMismatch(String),
    #[error("d[{index}] = {value} must lie strictly inside (0, 1)")]
    DecayFactorOutOfRange { index: usize, value: f64 },
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("system must have at least one slot")]
    Empty,
    #[error(
        "objective weights do not satisfy u = dtilde*w componentwise \
         (index {index}: u = {u}, dtilde*w = {expected})"
    )]
    WeightMismatch { index: usize, u: f64, expected: f64 },
    #[error(transparent)]
    Perm(#[from] PermError),
}

fn check_finite(name: &'static str, xs: &[f64]) -> Result<(), DynamicsError> {
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(DynamicsError::NonFinite(name));
    }
    Ok(())
}

/// Per-slot rates and the re-allocation period.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SwitchedDynamics {
    /// Decay rates `a_n > 0`, per unit time.
    #[serde(rename = "a")]
    pub decay: Vec<f64>,
    /// Source rates `b_n >= 0`, per unit time.
    #[serde(rename = "b")]
    pub source: Vec<f64>,
    /// Period between two re-allocations.
    #[serde(rename = "T")]
    pub period: f64,
    /// Initial time `T_0` (boundaries are `T_k = k T + T_0`).
    #[serde(default)]
    pub t0: f64,
}

impl SwitchedDynamics {
    pub fn new(decay: Vec<f64>, source: Vec<f64>, period: f64) -> Result<Self, DynamicsError> {
        if decay.is_empty() {
            return Err(DynamicsError::Empty);
        }
        if decay.len() != source.len() {
            return Err(DynamicsError::LengthMismatch(format!(
                "a has {} entries but b has {}",
                decay.len(),
                source.len()
            )));
        }
        for (i, &a) in decay.iter().enumerate() {
            if !(a.is_finite() && a > 0.0) {
                return Err(DynamicsError::BadDecayRate { index: i, value: a });
            }
        }
        for (i, &b) in source.iter().enumerate() {
            if !(b.is_finite() && b >= 0.0) {
                return Err(DynamicsError::BadSourceRate { index: i, value: b });
            }
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(DynamicsError::BadPeriod(period));
        }
        Ok(SwitchedDynamics {
            decay,
            source,
            period,
            t0: 0.0,
        })
    }

    pub fn with_t0(mut self, t0: f64) -> Self {
        self.t0 = t0;
        self
    }

    pub fn n(&self) -> usize {
        self.decay.len()
    }
}

/// The `(u, v, d)` triple defining the objective
/// `J(P) = <u, (I - P D)^-1 P v>`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "RawAllocationSystem")]
pub struct AllocationSystem {
    u: Vec<f64>,
    v: Vec<f64>,
    d: Vec<f64>,
}

#[derive(Deserialize)]
struct RawAllocationSystem {
    u: Vec<f64>,
    v: Vec<f64>,
    d: Vec<f64>,
}

impl TryFrom<RawAllocationSystem> for AllocationSystem {
    type Error = DynamicsError;
    fn try_from(raw: RawAllocationSystem) -> Result<Self, DynamicsError> {
        AllocationSystem::new(raw.u, raw.v, raw.d)
    }
}

impl AllocationSystem {
    pub fn new(u: Vec<f64>, v: Vec<f64>, d: Vec<f64>) -> Result<Self, DynamicsError> {
        if u.is_empty() {
            return Err(DynamicsError::Empty);
        }
        if u.len() != v.len() || u.len() != d.len() {
            return Err(DynamicsError::LengthMismatch(format!(
                "u, v, d must have equal lengths (got {}, {}, {})",
                u.len(),
                v.len(),
                d.len()
            )));
        }
        check_finite("u", &u)?;
        check_finite("v", &v)?;
        for (i, &x) in d.iter().enumerate() {
            if !(x.is_finite() && x > 0.0 && x < 1.0) {
                return Err(DynamicsError::DecayFactorOutOfRange { index: i, value: x });
            }
        }
        Ok(AllocationSystem { u, v, d })
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn d_max(&self) -> f64 {
        self.d.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn d_min(&self) -> f64 {
        self.d.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Result of [`build_system`]: the system plus the indices (if any) whose
/// decay factor underflowed and was clamped to the smallest positive normal
/// number to preserve the strict `0 < d_n < 1` invariant.
#[derive(Clone, Debug)]
pub struct BuiltSystem {
    pub system: AllocationSystem,
    pub clamped: Vec<usize>,
}

/// One-period aggregation: `d_n = exp(-a_n T)`, `v_n = b_n/a_n (1 - d_n)`.
pub fn build_system(dynamics: &SwitchedDynamics, u: &[f64]) -> Result<BuiltSystem, DynamicsError> {
    let n = dynamics.n();
    if u.len() != n {
        return Err(DynamicsError::LengthMismatch(format!(
            "u has {} entries but the dynamics have {n} slots",
            u.len()
        )));
    }
    check_finite("u", u)?;
    let mut d = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    let mut clamped = Vec::new();
    for i in 0..n {
        let decay_factor = (-dynamics.decay[i] * dynamics.period).exp();
        v.push(dynamics.source[i] / dynamics.decay[i] * (1.0 - decay_factor));
        if decay_factor == 0.0 {
            clamped.push(i);
            d.push(f64::MIN_POSITIVE);
        } else {
            d.push(decay_factor);
        }
    }
    Ok(BuiltSystem {
        system: AllocationSystem::new(u.to_vec(), v, d)?,
        clamped,
    })
}

/// Time-integrated benefit weights: `J_av(P) = (J(P) + <w, vtilde>) / T` with
/// `u = dtilde * w` componentwise.
#[derive(Clone, Debug)]
pub struct GeneralObjective {
    pub w: Vec<f64>,
    pub dtilde: Vec<f64>,
    pub vtilde: Vec<f64>,
}

impl GeneralObjective {
    pub fn new(dynamics: &SwitchedDynamics, w: Vec<f64>) -> Result<Self, DynamicsError> {
        if w.len() != dynamics.n() {
            return Err(DynamicsError::LengthMismatch(format!(
                "w has {} entries but the dynamics have {} slots",
                w.len(),
                dynamics.n()
            )));
        }
        check_finite("w", &w)?;
        let t = dynamics.period;
        let dtilde: Vec<f64> = dynamics
            .decay
            .iter()
            .map(|&a| (1.0 - (-a * t).exp()) / a)
            .collect();
        let vtilde: Vec<f64> = dynamics
            .decay
            .iter()
            .zip(&dynamics.source)
            .zip(&dtilde)
            .map(|((&a, &b), &dt)| b / a * (t - dt))
            .collect();
        Ok(GeneralObjective { w, dtilde, vtilde })
    }

    /// The matching allocation system, with `u = dtilde * w`.
    pub fn allocation_system(
        &self,
        dynamics: &SwitchedDynamics,
    ) -> Result<BuiltSystem, DynamicsError> {
        let u: Vec<f64> = self
            .dtilde
            .iter()
            .zip(&self.w)
            .map(|(&dt, &w)| dt * w)
            .collect();
        build_system(dynamics, &u)
    }
}

/// State of the unique periodic regime at the period boundaries.
#[derive(Clone, Debug, Serialize)]
pub struct SteadyState {
    pub x_per: Vec<f64>,
}

fn check_perm_size(sys_n: usize, p: &Permutation) -> Result<(), DynamicsError> {
    if p.len() != sys_n {
        return Err(DynamicsError::LengthMismatch(format!(
            "permutation of size {} applied to a system of size {sys_n}",
            p.len()
        )));
    }
    Ok(())
}

/// Solve `(I - P D) x = P v` through the cycle structure of `sigma`.
///
/// Row `sigma(j)` of the system reads `x_{sigma(j)} = d_j x_j + v_j`, so each
/// cycle of `sigma` closes a scalar geometric recursion solved in O(cycle
/// length). `visited` is caller-provided scratch (all false, same length).
pub(crate) fn periodic_state_into(
    d: &[f64],
    v: &[f64],
    sigma: &[usize],
    x: &mut [f64],
    visited: &mut [bool],
) {
    let n = sigma.len();
    for start in 0..n {
        if visited[start] {
            continue;
        }
        // One backward pass around the cycle accumulates
        // num = v_last + d_last (v_prev + d_prev (...)) and prod = product of d.
        let mut num = v[start];
        let mut prod = d[start];
        let mut j = sigma[start];
        while j != start {
            num = num * d[j] + v[j];
            prod *= d[j];
            j = sigma[j];
        }
        let x_start = num / (1.0 - prod);
        // Forward pass fills the states along the cycle.
        let mut j = start;
        let mut xj = x_start;
        loop {
            visited[j] = true;
            let next = sigma[j];
            let x_next = d[j] * xj + v[j];
            x[j] = xj;
            if next == start {
                break;
            }
            xj = x_next;
            j = next;
        }
    }
    for flag in visited.iter_mut() {
        *flag = false;
    }
}

/// `J(P) = <u, x_per>` evaluated without allocating; the exhaustive solver's
/// hot path. `visited` is scratch as in [`periodic_state_into`].
pub(crate) fn objective_raw(
    u: &[f64],
    d: &[f64],
    v: &[f64],
    sigma: &[usize],
    visited: &mut [bool],
) -> f64 {
    let n = sigma.len();
    let mut total = 0.0;
    for start in 0..n {
        if visited[start] {
            continue;
        }
        let mut num = v[start];
        let mut prod = d[start];
        let mut j = sigma[start];
        while j != start {
            num = num * d[j] + v[j];
            prod *= d[j];
            j = sigma[j];
        }
        let x_start = num / (1.0 - prod);
        let mut j = start;
        let mut xj = x_start;
        loop {
            visited[j] = true;
            total += u[j] * xj;
            let next = sigma[j];
            if next == start {
                break;
            }
            xj = d[j] * xj + v[j];
            j = next;
        }
    }
    for flag in visited.iter_mut() {
        *flag = false;
    }
    total
}

/// The periodic regime `x_per = (I - P D)^-1 P v`.
pub fn steady_state(sys: &AllocationSystem, p: &Permutation) -> Result<SteadyState, DynamicsError> {
    check_perm_size(sys.n(), p)?;
    let n = sys.n();
    let mut x = vec![0.0; n];
    let mut visited = vec![false; n];
    periodic_state_into(&sys.d, &sys.v, p.images(), &mut x, &mut visited);
    Ok(SteadyState { x_per: x })
}

/// `J(P) = <u, (I - P D)^-1 P v>`.
pub fn objective_j(sys: &AllocationSystem, p: &Permutation) -> Result<f64, DynamicsError> {
    check_perm_size(sys.n(), p)?;
    let mut visited = vec![false; sys.n()];
    Ok(objective_raw(
        &sys.u,
        &sys.d,
        &sys.v,
        p.images(),
        &mut visited,
    ))
}

/// First-order approximation `J_approx(P) = <u, P v> = sum_j u_{sigma(j)} v_j`.
pub fn objective_j_approx(sys: &AllocationSystem, p: &Permutation) -> Result<f64, DynamicsError> {
    check_perm_size(sys.n(), p)?;
    Ok(objective_approx_raw(&sys.u, &sys.v, p.images()))
}

pub(crate) fn objective_approx_raw(u: &[f64], v: &[f64], sigma: &[usize]) -> f64 {
    sigma.iter().zip(v).map(|(&sj, &vj)| u[sj] * vj).sum()
}

/// The per-period average benefit `J_av(P) = (J(P) + <w, vtilde>) / T`.
///
/// Requires `sys.u = dtilde * w` componentwise (relative tolerance 1e-12);
/// under that tie `argmax J_av = argmax J` since the two differ by an affine
/// map with positive slope.
pub fn average_benefit(
    obj: &GeneralObjective,
    dynamics: &SwitchedDynamics,
    sys: &AllocationSystem,
    p: &Permutation,
) -> Result<f64, DynamicsError> {
    if obj.w.len() != sys.n() {
        return Err(DynamicsError::LengthMismatch(format!(
            "w has {} entries but the system has {} slots",
            obj.w.len(),
            sys.n()
        )));
    }
    for i in 0..sys.n() {
        let expected = obj.dtilde[i] * obj.w[i];
        let scale = expected.abs().max(sys.u[i].abs());
        if (sys.u[i] - expected).abs() > 1e-12 * scale {
            return Err(DynamicsError::WeightMismatch {
                index: i,
                u: sys.u[i],
                expected,
            });
        }
    }
    let j = objective_j(sys, p)?;
    let offset: f64 = obj.w.iter().zip(&obj.vtilde).map(|(&w, &vt)| w * vt).sum();
    Ok((j + offset) / dynamics.period)
}

/// Appendix-style normalization: relabel the slots so the objective weights
/// come out ascending. Returns the relabeled system and the stable argsort
/// `rho` of `u`; for every permutation `p`,
/// `objective_j(sys, p) == objective_j(sorted, p.conjugate_by(rho))`
/// (and the same for `objective_j_approx`).
pub fn normalize_sorted_u(sys: &AllocationSystem) -> (AllocationSystem, Permutation) {
    let rho = Permutation::argsort_stable(&sys.u);
    let sorted = AllocationSystem {
        u: rho.gather(&sys.u),
        v: rho.gather(&sys.v),
        d: rho.gather(&sys.d),
    };
    (sorted, rho)
}

/// A sampled closed-form trajectory of the switched system.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    /// CSV with header `t,x1,..,xN`.
    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, |s| s.len());
        let mut out = String::from("t");
        for i in 1..=n {
            out.push_str(&format!(",x{i}"));
        }
        out.push('\n');
        for (t, row) in self.times.iter().zip(&self.states) {
            out.push_str(&format!("{t}"));
            for x in row {
                out.push_str(&format!(",{x}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Exact trajectory over `k_steps + 1` periods starting from `x0` at `T_0`:
/// within each period every component follows its scalar exponential
/// solution; after each of the first `k_steps` periods the state vector is
/// permuted by `P`. Each period contributes `samples_per_period` sample
/// points (the first at the period start, post-jump); the final period end
/// is appended as the last sample.
pub fn simulate(
    dynamics: &SwitchedDynamics,
    p: &Permutation,
    x0: &[f64],
    k_steps: usize,
    samples_per_period: usize,
) -> Result<Trajectory, DynamicsError> {
    check_perm_size(dynamics.n(), p)?;
    if x0.len() != dynamics.n() {
        return Err(DynamicsError::LengthMismatch(format!(
            "x0 has {} entries but the dynamics have {} slots",
            x0.len(),
            dynamics.n()
        )));
    }
    check_finite("x0", x0)?;
    let samples = samples_per_period.max(1);
    let t = dynamics.period;
    let n = dynamics.n();
    let flow = |x: &[f64], dt: f64| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let eq = dynamics.source[i] / dynamics.decay[i];
                eq + (x[i] - eq) * (-dynamics.decay[i] * dt).exp()
            })
            .collect()
    };
    let mut times = Vec::with_capacity((k_steps + 1) * samples + 1);
    let mut states = Vec::with_capacity((k_steps + 1) * samples + 1);
    let mut x = x0.to_vec();
    for k in 0..=k_steps {
        let period_start = dynamics.t0 + k as f64 * t;
        for s in 0..samples {
            let dt = s as f64 / samples as f64 * t;
            times.push(period_start + dt);
            states.push(flow(&x, dt));
        }
        let x_end = flow(&x, t);
        if k < k_steps {
            x = p.scatter(&x_end);
        } else {
            times.push(period_start + t);
            states.push(x_end);
        }
    }
    Ok(Trajectory { times, states })
}

/// One application of the boundary step map `x -> P D x + P v`.
pub fn step_map(sys: &AllocationSystem, p: &Permutation, x: &[f64]) -> Vec<f64> {
    let pre: Vec<f64> = (0..sys.n()).map(|i| sys.d[i] * x[i] + sys.v[i]).collect();
    p.scatter(&pre)
}
