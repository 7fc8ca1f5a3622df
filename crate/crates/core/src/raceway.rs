//! Microalgae raceway application.
//!
//! A raceway pond is discretized into `N` horizontal layers; light decays
//! exponentially with depth, so each layer sees a constant intensity over one
//! lap of the paddle wheel. The photoinhibition state `C_n` of the algae in
//! layer `n` relaxes as `C' = -alpha(I_n) C + beta(I_n)` during a lap, and
//! the wheel rearranges whole layers between laps: exactly the switched
//! system of [`crate::dynamics`] with `u = Gamma`, `v = V`,
//! `D_nn = exp(-alpha(I_n) T)`. The average net specific growth rate over
//! the periodic regime is affine in the objective `J(P)`, so optimizing the
//! mixing strategy is the permutation problem solved by [`crate::solvers`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::criterion::{self, CriterionReport};
use crate::dynamics::{objective_j, AllocationSystem, DynamicsError};
use crate::numeric::NeumaierSum;
use crate::perm::Permutation;
use crate::solvers::{solve_approx, solve_exact, SolveError, SolveOptions, SolveResult};

#[derive(Debug, Error)]
pub enum RacewayError {
    #[error("invalid scenario: {0}")]
    BadScenario(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("zero denominator: mu_bar({which}) = 0, ratios undefined")]
    ZeroDenominator { which: &'static str },
    #[error(
        "sweep refused: estimated {estimate} objective evaluations exceed the \
         budget of {budget} (raise --budget to proceed)"
    )]
    BudgetExceeded { estimate: u64, budget: u64 },
}

/// Photoinhibition model parameters.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HanParams {
    /// Photosystem repair rate (1/s).
    pub k_r: f64,
    /// Damage rate (dimensionless).
    pub k_d: f64,
    /// Turnover rate (s).
    #[serde(rename = "tau_h")]
    pub tau: f64,
    /// Specific photon absorption (m^2 / umol).
    #[serde(rename = "sigma_h")]
    pub sigma: f64,
    /// Growth factor relating photosynthetic activity to growth (dimensionless).
    pub k_h: f64,
    /// Respiration rate (1/s).
    #[serde(rename = "R")]
    pub respiration: f64,
}

impl Default for HanParams {
    fn default() -> Self {
        HanParams {
            k_r: 6.8e-3,
            k_d: 2.99e-4,
            tau: 0.25,
            sigma: 0.047,
            k_h: 8.7e-6,
            respiration: 1.389e-7,
        }
    }
}

impl HanParams {
    pub fn validate(&self) -> Result<(), RacewayError> {
        let fields = [
            ("k_r", self.k_r),
            ("k_d", self.k_d),
            ("tau_h", self.tau),
            ("sigma_h", self.sigma),
            ("k_h", self.k_h),
            ("R", self.respiration),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(RacewayError::BadScenario(format!(
                    "{name} must be strictly positive, got {value}"
                )));
            }
        }
        Ok(())
    }
}

fn default_depth() -> f64 {
    0.4
}

/// A fully parameterized raceway experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RacewayScenario {
    /// Surface light intensity (umol m^-2 s^-1).
    #[serde(rename = "I_s")]
    pub surface_light: f64,
    /// Fraction of the surface light reaching the bottom, in (0, 1].
    pub q: f64,
    /// Lap duration (s).
    #[serde(rename = "T")]
    pub lap: f64,
    /// Number of layers.
    #[serde(rename = "N")]
    pub layers: usize,
    /// Water depth (m).
    #[serde(rename = "h", default = "default_depth")]
    pub depth: f64,
    #[serde(default)]
    pub han: HanParams,
}

impl RacewayScenario {
    pub fn new(surface_light: f64, q: f64, lap: f64, layers: usize) -> Self {
        RacewayScenario {
            surface_light,
            q,
            lap,
            layers,
            depth: default_depth(),
            han: HanParams::default(),
        }
    }

    pub fn validate(&self) -> Result<(), RacewayError> {
        self.han.validate()?;
        if !(self.surface_light.is_finite() && self.surface_light >= 0.0) {
            return Err(RacewayError::BadScenario(format!(
                "I_s must be non-negative, got {}",
                self.surface_light
            )));
        }
        if !(self.q.is_finite() && self.q > 0.0 && self.q <= 1.0) {
            return Err(RacewayError::BadScenario(format!(
                "q must lie in (0, 1], got {}",
                self.q
            )));
        }
        if !(self.lap.is_finite() && self.lap > 0.0) {
            return Err(RacewayError::BadScenario(format!(
                "T must be strictly positive, got {}",
                self.lap
            )));
        }
        if self.layers == 0 {
            return Err(RacewayError::BadScenario("N must be at least 1".into()));
        }
        if !(self.depth.is_finite() && self.depth > 0.0) {
            return Err(RacewayError::BadScenario(format!(
                "h must be strictly positive, got {}",
                self.depth
            )));
        }
        Ok(())
    }

    /// Light extinction coefficient `(1/h) ln(1/q)`.
    pub fn extinction(&self) -> f64 {
        (1.0 / self.q).ln() / self.depth
    }

    /// Layer mid-depths `z_n = -(n - 1/2) h / N`, strictly decreasing.
    pub fn layer_depths(&self) -> Vec<f64> {
        let n = self.layers as f64;
        (0..self.layers)
            .map(|i| -((i as f64 + 0.5) / n) * self.depth)
            .collect()
    }
}

/// Exponentially attenuated light per layer: `I_n = I_s exp(eps * z_n)`.
pub fn light_profile(sc: &RacewayScenario) -> Result<Vec<f64>, RacewayError> {
    sc.validate()?;
    let eps = sc.extinction();
    Ok(sc
        .layer_depths()
        .iter()
        .map(|&z| sc.surface_light * (eps * z).exp())
        .collect())
}

/// Reduced photoinhibition rates at light intensity `I`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HanRates {
    /// Relaxation rate of the damaged state, `beta + k_r`.
    pub alpha: f64,
    /// Damage production rate.
    pub beta: f64,
    /// Growth penalty per unit of damage.
    pub gamma: f64,
    /// Gross specific growth rate minus respiration.
    pub zeta: f64,
}

pub fn han_rates(intensity: f64, p: &HanParams) -> HanRates {
    let si = p.sigma * intensity;
    let denom = p.tau * si + 1.0;
    let beta = p.k_d * p.tau * si * si / denom;
    let gamma = p.k_h * si / denom;
    HanRates {
        alpha: beta + p.k_r,
        beta,
        gamma,
        zeta: gamma - p.respiration,
    }
}

/// Per-layer vectors of the growth objective.
///
/// `Gamma_n <= 0` weighs the damage state at the lap start, `V_n >= 0` is the
/// one-lap damage accumulation, `Z_n` the control-independent growth part,
/// and `d_n = exp(-alpha_n T)` the lap contraction. `Gamma` and `V` always
/// carry opposite signs.
#[derive(Clone, Debug, Serialize)]
pub struct HanVectors {
    pub gamma_vec: Vec<f64>,
    pub v_vec: Vec<f64>,
    pub z_vec: Vec<f64>,
    pub d_vec: Vec<f64>,
    /// Layers whose decay factor underflowed and was clamped.
    pub clamped: Vec<usize>,
}

/// Assemble the allocation system of a scenario: `u = Gamma`, `v = V`,
/// `d_n = exp(-alpha(I_n) T)`.
pub fn build_han_system(
    sc: &RacewayScenario,
) -> Result<(HanVectors, AllocationSystem), RacewayError> {
    let light = light_profile(sc)?;
    let t = sc.lap;
    let mut gamma_vec = Vec::with_capacity(sc.layers);
    let mut v_vec = Vec::with_capacity(sc.layers);
    let mut z_vec = Vec::with_capacity(sc.layers);
    let mut d_vec = Vec::with_capacity(sc.layers);
    let mut clamped = Vec::new();
    for (i, &intensity) in light.iter().enumerate() {
        let r = han_rates(intensity, &sc.han);
        let decay = (-r.alpha * t).exp();
        gamma_vec.push(r.gamma / r.alpha * (decay - 1.0));
        v_vec.push(r.beta / r.alpha * (1.0 - decay));
        z_vec.push(
            r.gamma * r.beta / (r.alpha * r.alpha) * (1.0 - decay) - r.gamma * r.beta / r.alpha * t
                + r.zeta * t,
        );
        if decay == 0.0 {
            clamped.push(i);
            d_vec.push(f64::MIN_POSITIVE);
        } else {
            d_vec.push(decay);
        }
    }
    let system = AllocationSystem::new(gamma_vec.clone(), v_vec.clone(), d_vec.clone())?;
    Ok((
        HanVectors {
            gamma_vec,
            v_vec,
            z_vec,
            d_vec,
            clamped,
        },
        system,
    ))
}

fn mu_from_objective(j: f64, z_sum: f64, layers: usize, lap: f64) -> f64 {
    (j + z_sum) / (layers as f64 * lap)
}

fn z_sum(hv: &HanVectors) -> f64 {
    let mut acc = NeumaierSum::new();
    for &z in &hv.z_vec {
        acc.add(z);
    }
    acc.total()
}

/// Average net specific growth rate of the periodic regime under mixing
/// strategy `p`: `mu_bar = (<Gamma, C(0)> + sum Z) / (N T)` with
/// `C(0) = (I - P D)^-1 P V`.
pub fn mu_bar(sc: &RacewayScenario, p: &Permutation) -> Result<f64, RacewayError> {
    let (hv, sys) = build_han_system(sc)?;
    let j = objective_j(&sys, p)?;
    Ok(mu_from_objective(j, z_sum(&hv), sc.layers, sc.lap))
}

/// Growth-rate improvement ratios between mixing strategies.
///
/// `r1` compares the optimum against no mixing, `r2` the optimum against the
/// worst strategy, `r3` no mixing against the worst; `rt1`/`rt2` replace the
/// optimum by the sorted-matching strategy. The optimum can never lose to
/// the sorted matching, so `r1 >= rt1` and `r2 >= rt2`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct EfficiencyRatios {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub rt1: f64,
    pub rt2: f64,
}

/// Everything a single scenario evaluation produces.
#[derive(Clone, Debug, Serialize)]
pub struct ScenarioReport {
    pub scenario: RacewayScenario,
    pub mu_max: f64,
    pub mu_min: f64,
    pub mu_identity: f64,
    pub mu_plus: f64,
    pub mu_minus: f64,
    pub p_max: Permutation,
    pub p_min: Permutation,
    pub p_plus: Permutation,
    pub p_minus: Permutation,
    /// Whether the sorted matching attains the exact optimum (value equality
    /// within 1e-12 relative).
    pub pmax_equals_pplus: bool,
    pub ratios: Option<EfficiencyRatios>,
    pub criterion: Option<CriterionReport>,
    /// Why `criterion` is absent, when it is.
    pub criterion_error: Option<String>,
    pub evaluated: u64,
}

struct ScenarioCore {
    sys: AllocationSystem,
    z: f64,
    exact: SolveResult,
    approx: SolveResult,
    j_id: f64,
    j_plus: f64,
    j_minus: f64,
}

fn scenario_core(sc: &RacewayScenario, opts: &SolveOptions) -> Result<ScenarioCore, RacewayError> {
    sc.validate()?;
    let (hv, sys) = build_han_system(sc)?;
    let exact = solve_exact(&sys, opts)?;
    let approx = solve_approx(&sys);
    let id = Permutation::identity(sc.layers);
    let j_id = objective_j(&sys, &id)?;
    let j_plus = objective_j(&sys, &approx.best_perm)?;
    let j_minus = objective_j(&sys, &approx.worst_perm)?;
    let z = z_sum(&hv);
    Ok(ScenarioCore {
        sys,
        z,
        exact,
        approx,
        j_id,
        j_plus,
        j_minus,
    })
}

/// All J-values a ratio computation needs.
struct ObjectiveSet {
    j_max: f64,
    j_min: f64,
    j_id: f64,
    j_plus: f64,
}

fn ratios_from_objectives(
    o: &ObjectiveSet,
    z: f64,
    sc: &RacewayScenario,
) -> Result<EfficiencyRatios, RacewayError> {
    let mu = |j: f64| mu_from_objective(j, z, sc.layers, sc.lap);
    let mu_max = mu(o.j_max);
    let mu_min = mu(o.j_min);
    let mu_id = mu(o.j_id);
    let mu_plus = mu(o.j_plus);
    if mu_id == 0.0 {
        return Err(RacewayError::ZeroDenominator { which: "identity" });
    }
    if mu_min == 0.0 {
        return Err(RacewayError::ZeroDenominator { which: "P_min" });
    }
    // +0.0 turns the negative zero of exactly-equal strategies into +0.0.
    Ok(EfficiencyRatios {
        r1: (mu_max - mu_id) / mu_id + 0.0,
        r2: (mu_max - mu_min) / mu_min + 0.0,
        r3: (mu_id - mu_min) / mu_id + 0.0,
        rt1: (mu_plus - mu_id) / mu_id + 0.0,
        rt2: (mu_plus - mu_min) / mu_min + 0.0,
    })
}

fn ratios_from_core(
    core: &ScenarioCore,
    sc: &RacewayScenario,
) -> Result<EfficiencyRatios, RacewayError> {
    ratios_from_objectives(
        &ObjectiveSet {
            j_max: core.exact.best_value,
            j_min: core.exact.worst_value,
            j_id: core.j_id,
            j_plus: core.j_plus,
        },
        core.z,
        sc,
    )
}

/// The five strategy-efficiency ratios of a scenario (exact solve inside).
pub fn efficiency_ratios(
    sc: &RacewayScenario,
    opts: &SolveOptions,
) -> Result<EfficiencyRatios, RacewayError> {
    let core = scenario_core(sc, opts)?;
    ratios_from_core(&core, sc)
}

/// Full evaluation of one scenario: exact and approximate optima, growth
/// rates, ratios and the criterion verdict.
pub fn evaluate_scenario(
    sc: &RacewayScenario,
    opts: &SolveOptions,
) -> Result<ScenarioReport, RacewayError> {
    let core = scenario_core(sc, opts)?;
    let mu = |j: f64| mu_from_objective(j, core.z, sc.layers, sc.lap);
    let mu_max = mu(core.exact.best_value);
    let ratios = ratios_from_core(&core, sc).ok();
    let (criterion, criterion_error) = match criterion::check(&core.sys) {
        Ok(report) => (Some(report), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let gap = (core.exact.best_value - core.j_plus).abs();
    Ok(ScenarioReport {
        scenario: sc.clone(),
        mu_max,
        mu_min: mu(core.exact.worst_value),
        mu_identity: mu(core.j_id),
        mu_plus: mu(core.j_plus),
        mu_minus: mu(core.j_minus),
        p_max: core.exact.best_perm.clone(),
        p_min: core.exact.worst_perm.clone(),
        p_plus: core.approx.best_perm.clone(),
        p_minus: core.approx.worst_perm.clone(),
        pmax_equals_pplus: gap <= 1e-12 * core.exact.best_value.abs(),
        ratios,
        criterion,
        criterion_error,
        evaluated: core.exact.evaluated,
    })
}

/// Output column of a parameter sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepColumn {
    MuMax,
    MuPlus,
    MuIdentity,
    MuMin,
    CriterionSatisfied,
    MaxPhi,
    R1,
    R2,
    R3,
    Rt1,
    Rt2,
    PmaxEqPplus,
}

impl SweepColumn {
    pub fn all() -> Vec<SweepColumn> {
        use SweepColumn::*;
        vec![
            MuMax,
            MuPlus,
            MuIdentity,
            MuMin,
            CriterionSatisfied,
            MaxPhi,
            R1,
            R2,
            R3,
            Rt1,
            Rt2,
            PmaxEqPplus,
        ]
    }

    pub fn name(&self) -> &'static str {
        use SweepColumn::*;
        match self {
            MuMax => "mu_max",
            MuPlus => "mu_plus",
            MuIdentity => "mu_identity",
            MuMin => "mu_min",
            CriterionSatisfied => "criterion_satisfied",
            MaxPhi => "max_phi",
            R1 => "r1",
            R2 => "r2",
            R3 => "r3",
            Rt1 => "rt1",
            Rt2 => "rt2",
            PmaxEqPplus => "pmax_eq_pplus",
        }
    }

    fn needs_exact(&self) -> bool {
        use SweepColumn::*;
        !matches!(self, MuPlus | CriterionSatisfied | MaxPhi | MuIdentity)
    }
}

impl std::str::FromStr for SweepColumn {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        SweepColumn::all()
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = SweepColumn::all().iter().map(|c| c.name()).collect();
                format!("unknown column {s:?}; known columns: {}", names.join(", "))
            })
    }
}

/// Cartesian grid of scenario parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepGrid {
    #[serde(rename = "I_s")]
    pub i_s: Vec<f64>,
    pub q: Vec<f64>,
    #[serde(rename = "T")]
    pub t: Vec<f64>,
    #[serde(rename = "N")]
    pub n: Vec<usize>,
    #[serde(rename = "h", default = "default_depth")]
    pub depth: f64,
    #[serde(default)]
    pub han: HanParams,
}

impl SweepGrid {
    pub fn points(&self) -> usize {
        self.i_s.len() * self.q.len() * self.t.len() * self.n.len()
    }

    /// Grid points in deterministic row order (I_s, then q, then T, then N).
    pub fn scenarios(&self) -> Vec<RacewayScenario> {
        let mut out = Vec::with_capacity(self.points());
        for &i_s in &self.i_s {
            for &q in &self.q {
                for &t in &self.t {
                    for &n in &self.n {
                        out.push(RacewayScenario {
                            surface_light: i_s,
                            q,
                            lap: t,
                            layers: n,
                            depth: self.depth,
                            han: self.han,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct SweepOptions {
    pub columns: Vec<SweepColumn>,
    pub solve: SolveOptions,
    /// Refusal threshold on the estimated number of objective evaluations.
    pub budget_evals: u64,
    /// Worker threads across grid points.
    pub workers: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            columns: SweepColumn::all(),
            solve: SolveOptions::default(),
            budget_evals: 2_000_000_000,
            workers: 1,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub i_s: f64,
    pub q: f64,
    pub t: f64,
    pub n: usize,
    /// One entry per requested column; `None` when unavailable (degenerate
    /// criterion, zero ratio denominator).
    pub values: Vec<Option<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepTable {
    pub columns: Vec<SweepColumn>,
    pub rows: Vec<SweepRow>,
    /// Estimated objective evaluations, reported before the run.
    pub estimated_evals: u64,
}

impl SweepTable {
    /// CSV with a leading `#` comment recording the run configuration.
    pub fn to_csv(&self, config_line: &str) -> String {
        let mut out = String::new();
        out.push_str(&format!("# {config_line}\n"));
        out.push_str("I_s,q,T,N");
        for c in &self.columns {
            out.push(',');
            out.push_str(c.name());
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("{},{},{},{}", row.i_s, row.q, row.t, row.n));
            for v in &row.values {
                out.push(',');
                if let Some(x) = v {
                    out.push_str(&format!("{x}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Estimated objective evaluations for one grid.
pub fn estimate_sweep_evals(grid: &SweepGrid, columns: &[SweepColumn]) -> u64 {
    let needs_exact = columns.iter().any(|c| c.needs_exact());
    let mut total = 0u64;
    for &n in &grid.n {
        let per_point = if needs_exact && n <= crate::perm::MAX_ENUM_SIZE {
            crate::perm::factorial(n)
        } else {
            1
        };
        total = total.saturating_add(
            per_point.saturating_mul((grid.i_s.len() * grid.q.len() * grid.t.len()) as u64),
        );
    }
    total
}

fn sweep_point(
    sc: &RacewayScenario,
    columns: &[SweepColumn],
    solve: &SolveOptions,
) -> Result<Vec<Option<f64>>, RacewayError> {
    let needs_exact = columns.iter().any(|c| c.needs_exact());
    let needs_criterion = columns
        .iter()
        .any(|c| matches!(c, SweepColumn::CriterionSatisfied | SweepColumn::MaxPhi));
    sc.validate()?;
    let (hv, sys) = build_han_system(sc)?;
    let z = z_sum(&hv);
    let mu = |j: f64| mu_from_objective(j, z, sc.layers, sc.lap);
    let approx = solve_approx(&sys);
    let j_plus = objective_j(&sys, &approx.best_perm)?;
    let j_id = objective_j(&sys, &Permutation::identity(sc.layers))?;
    let exact = if needs_exact {
        Some(solve_exact(&sys, solve)?)
    } else {
        None
    };
    let criterion = if needs_criterion {
        criterion::check(&sys).ok()
    } else {
        None
    };
    let ratios = exact.as_ref().and_then(|ex| {
        ratios_from_objectives(
            &ObjectiveSet {
                j_max: ex.best_value,
                j_min: ex.worst_value,
                j_id,
                j_plus,
            },
            z,
            sc,
        )
        .ok()
    });
    let values = columns
        .iter()
        .map(|c| match c {
            SweepColumn::MuMax => exact.as_ref().map(|e| mu(e.best_value)),
            SweepColumn::MuMin => exact.as_ref().map(|e| mu(e.worst_value)),
            SweepColumn::MuPlus => Some(mu(j_plus)),
            SweepColumn::MuIdentity => Some(mu(j_id)),
            SweepColumn::CriterionSatisfied => {
                criterion
                    .as_ref()
                    .map(|r| if r.satisfied { 1.0 } else { 0.0 })
            }
            SweepColumn::MaxPhi => criterion.as_ref().map(|r| r.max_phi),
            SweepColumn::R1 => ratios.as_ref().map(|r| r.r1),
            SweepColumn::R2 => ratios.as_ref().map(|r| r.r2),
            SweepColumn::R3 => ratios.as_ref().map(|r| r.r3),
            SweepColumn::Rt1 => ratios.as_ref().map(|r| r.rt1),
            SweepColumn::Rt2 => ratios.as_ref().map(|r| r.rt2),
            SweepColumn::PmaxEqPplus => exact.as_ref().map(|e| {
                if (e.best_value - j_plus).abs() <= 1e-12 * e.best_value.abs() {
                    1.0
                } else {
                    0.0
                }
            }),
        })
        .collect();
    Ok(values)
}

/// Evaluate every grid point, in deterministic row order, parallelized
/// across points. Refuses grids whose estimated cost exceeds the budget.
pub fn sweep(grid: &SweepGrid, opts: &SweepOptions) -> Result<SweepTable, RacewayError> {
    let estimate = estimate_sweep_evals(grid, &opts.columns);
    if estimate > opts.budget_evals {
        return Err(RacewayError::BudgetExceeded {
            estimate,
            budget: opts.budget_evals,
        });
    }
    let scenarios = grid.scenarios();
    let workers = opts.workers.max(1).min(scenarios.len().max(1));
    let mut results: Vec<Option<Result<Vec<Option<f64>>, RacewayError>>> =
        (0..scenarios.len()).map(|_| None).collect();
    if workers <= 1 {
        for (slot, sc) in results.iter_mut().zip(&scenarios) {
            *slot = Some(sweep_point(sc, &opts.columns, &opts.solve));
        }
    } else {
        let next = std::sync::atomic::AtomicUsize::new(0);
        let slots = std::sync::Mutex::new(&mut results);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    if i >= scenarios.len() {
                        break;
                    }
                    let value = sweep_point(&scenarios[i], &opts.columns, &opts.solve);
                    slots.lock().unwrap()[i] = Some(value);
                });
            }
        });
    }
    let mut rows = Vec::with_capacity(scenarios.len());
    for (sc, slot) in scenarios.iter().zip(results) {
        let values = slot.expect("all points visited")?;
        rows.push(SweepRow {
            i_s: sc.surface_light,
            q: sc.q,
            t: sc.lap,
            n: sc.layers,
            values,
        });
    }
    Ok(SweepTable {
        columns: opts.columns.clone(),
        rows,
        estimated_evals: estimate,
    })
}
