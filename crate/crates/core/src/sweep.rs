//! Smallest investment reaching a target success probability.
//!
//! Candidates live on the lattice `n * tolerance`; bisection over `n` returns
//! the smallest lattice point whose solver value reaches the target.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::ReturnModel;
use crate::mortality::{hazard_sequence, HazardSequence, LifeTable, MAX_AGE};
use crate::policy::Policy;
use crate::schedule::{build_dca_schedule, build_lump_sum_schedule, compute_thresholds};
use crate::simulate::{simulate_success, simulate_success_mortality, SimConfig, SimResult};
use crate::solver::{
    backward_induction, backward_induction_mortality, PolicySurface, SolverConfig, ValueSurface,
};

pub const DEFAULT_TOLERANCE: f64 = 0.01;
pub const DEFAULT_DCA_BRACKET: (f64, f64) = (0.01, 5.0);

pub const CSV_HEADER: [&str; 8] = [
    "k1",
    "k2",
    "start_age",
    "confidence",
    "x",
    "solver_value",
    "sim_value",
    "sim_stderr",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMode {
    Lump,
    Dca,
    LumpMortality,
    DcaMortality,
}

impl SweepMode {
    pub fn uses_mortality(self) -> bool {
        matches!(self, SweepMode::LumpMortality | SweepMode::DcaMortality)
    }
}

impl std::str::FromStr for SweepMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lump" => Ok(SweepMode::Lump),
            "dca" => Ok(SweepMode::Dca),
            "lump-mortality" => Ok(SweepMode::LumpMortality),
            "dca-mortality" => Ok(SweepMode::DcaMortality),
            _ => Err(Error::Validation(format!(
                "mode must be lump, dca, lump-mortality or dca-mortality, got `{s}`"
            ))),
        }
    }
}

/// Which policy the simulation check at the returned amount runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckPolicy {
    Optimal,
    AllStock,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    pub model: ReturnModel,
    pub solver: SolverConfig,
    pub w: f64,
    pub r: f64,
    pub tolerance: f64,
    /// Overrides the default search bracket.
    pub bracket: Option<(f64, f64)>,
    /// Simulation checks at the returned amount; `None` skips them.
    pub sim: Option<SimConfig>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            model: ReturnModel::default(),
            solver: SolverConfig::default(),
            w: 0.0,
            r: 0.0,
            tolerance: DEFAULT_TOLERANCE,
            bracket: None,
            sim: Some(SimConfig::default()),
        }
    }
}

impl SweepSettings {
    fn sim_config(&self) -> Option<SimConfig> {
        self.sim.map(|s| SimConfig {
            w: self.w,
            r: self.r,
            ..s
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub x: f64,
    pub solver_value: f64,
    /// Interpolated optimal policy simulated at `x`.
    pub optimal_sim: Option<SimResult>,
    /// All-stock policy simulated at `x`.
    pub all_stock_sim: Option<SimResult>,
    /// Number of distinct amounts evaluated.
    pub probes: usize,
}

/// A surface solved at one probe: value at the probe and what is needed to
/// simulate its policy.
struct Probe {
    value: f64,
    policy: Option<PolicySurface>,
}

/// Smallest `n` in `[n_lo, n_hi]` with `eval(n).value >= target`.
fn lattice_bisect(
    target: f64,
    tol: f64,
    bracket: (f64, f64),
    mut eval: impl FnMut(f64) -> Result<Probe>,
) -> Result<(f64, Probe, usize)> {
    let (lo, hi) = bracket;
    if !(lo > 0.0 && lo < hi && hi.is_finite()) {
        return Err(Error::Validation(format!(
            "search bracket must satisfy 0 < lo < hi, got [{lo}, {hi}]"
        )));
    }
    let n_lo = (lo / tol - 1e-9).ceil().max(1.0) as u64;
    let n_hi = (hi / tol + 1e-9).floor() as u64;
    if n_hi < n_lo {
        return Err(Error::Validation(format!(
            "bracket [{lo}, {hi}] contains no multiple of {tol}"
        )));
    }
    let at = |n: u64| n as f64 * tol;
    let mut probes = 1;
    let top = eval(at(n_hi))?;
    if top.value < target {
        return Err(Error::NotAchievable {
            target,
            bracket_top: at(n_hi),
            value_at_top: top.value,
        });
    }
    let (mut a, mut b, mut best) = (n_lo, n_hi, top);
    if n_lo < n_hi {
        probes += 1;
        let bottom = eval(at(n_lo))?;
        if bottom.value >= target {
            return Ok((at(n_lo), bottom, probes));
        }
    } else {
        return Ok((at(n_hi), best, probes));
    }
    // v(a) < target <= v(b)
    while b - a > 1 {
        let mid = a + (b - a) / 2;
        probes += 1;
        let p = eval(at(mid))?;
        if p.value >= target {
            b = mid;
            best = p;
        } else {
            a = mid;
        }
    }
    Ok((at(b), best, probes))
}

fn check_target(confidence: f64, settings: &SweepSettings) -> Result<()> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::Validation(format!(
            "confidence must be in (0, 1), got {confidence}"
        )));
    }
    if !(settings.tolerance > 0.0 && settings.tolerance.is_finite()) {
        return Err(Error::Validation(format!(
            "tolerance must be positive, got {}",
            settings.tolerance
        )));
    }
    settings.solver.validate()?;
    settings.model.validate()
}

fn solve_any(
    schedule: &crate::schedule::CashFlowSchedule,
    settings: &SweepSettings,
    hazards: Option<&HazardSequence>,
) -> Result<(ValueSurface, PolicySurface)> {
    let t = compute_thresholds(schedule, settings.w, settings.r)?;
    match hazards {
        None => backward_induction(schedule, &t, &settings.model, &settings.solver),
        Some(h) => backward_induction_mortality(schedule, &t, &settings.model, h, &settings.solver),
    }
}

fn simulate_checks(
    schedule: &crate::schedule::CashFlowSchedule,
    policy: Option<PolicySurface>,
    settings: &SweepSettings,
    hazards: Option<&HazardSequence>,
) -> Result<(Option<SimResult>, Option<SimResult>)> {
    let Some(cfg) = settings.sim_config() else {
        return Ok((None, None));
    };
    let run = |p: &Policy| match hazards {
        None => simulate_success(schedule, p, &settings.model, &cfg),
        Some(h) => simulate_success_mortality(schedule, p, &settings.model, h, &cfg),
    };
    // a trivially satisfiable schedule has no surface; bond-only completes it
    let optimal = run(&policy.map_or(Policy::Constant(0.0), Policy::Interpolated))?;
    let all_stock = run(&Policy::Constant(1.0))?;
    Ok((Some(optimal), Some(all_stock)))
}

/// Minimal `c_0` with `v_0(c_0) >= confidence` for `c_0` followed by
/// `withdrawals` unit withdrawals. With `hazards`, the mortality-adjusted
/// value is used and `hazards` must cover the whole horizon.
pub fn min_lump_sum(
    withdrawals: usize,
    confidence: f64,
    settings: &SweepSettings,
    hazards: Option<&HazardSequence>,
) -> Result<SweepOutcome> {
    check_target(confidence, settings)?;
    let template = build_lump_sum_schedule(1.0, withdrawals)?;
    // thresholds do not involve c_0, so one solve serves every probe
    let (surface, policy) = solve_any(&template, settings, hazards)?;
    let w0 = surface.stages[0].threshold;
    let bracket = settings.bracket.unwrap_or((w0 / 10.0, 2.0 * w0));
    let (x, probe, probes) = lattice_bisect(confidence, settings.tolerance, bracket, |c0| {
        Ok(Probe {
            value: surface.value_at(0, c0),
            policy: None,
        })
    })?;
    let schedule = template.with_initial(x)?;
    let (optimal_sim, all_stock_sim) = simulate_checks(&schedule, Some(policy), settings, hazards)?;
    Ok(SweepOutcome {
        x,
        solver_value: probe.value,
        optimal_sim,
        all_stock_sim,
        probes,
    })
}

/// Minimal annual contribution `x` with `v_0 >= confidence` for `k1`
/// contributions of `x` followed by `k2` unit withdrawals.
pub fn min_dca_amount(
    k1: usize,
    k2: usize,
    confidence: f64,
    settings: &SweepSettings,
    hazards: Option<&HazardSequence>,
) -> Result<SweepOutcome> {
    check_target(confidence, settings)?;
    build_dca_schedule(1.0, k1, k2)?;
    let bracket = settings.bracket.unwrap_or(DEFAULT_DCA_BRACKET);
    let (x, probe, probes) = lattice_bisect(confidence, settings.tolerance, bracket, |x| {
        let schedule = build_dca_schedule(x, k1, k2)?;
        match solve_any(&schedule, settings, hazards) {
            Ok((surface, policy)) => Ok(Probe {
                value: surface.v0_at_c0,
                policy: Some(policy),
            }),
            Err(Error::TriviallySatisfiable { .. }) => Ok(Probe {
                value: 1.0,
                policy: None,
            }),
            Err(e) => Err(e),
        }
    })?;
    let schedule = build_dca_schedule(x, k1, k2)?;
    let (optimal_sim, all_stock_sim) = simulate_checks(&schedule, probe.policy, settings, hazards)?;
    Ok(SweepOutcome {
        x,
        solver_value: probe.value,
        optimal_sim,
        all_stock_sim,
        probes,
    })
}

/// One cell of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub k1: Option<usize>,
    pub k2: Option<usize>,
    pub start_age: Option<usize>,
    pub confidence: f64,
    /// `Err` carries the failure for this cell only.
    pub outcome: std::result::Result<SweepOutcome, String>,
}

/// Parameter sets to sweep; cells are the cross product relevant to the mode.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub mode: SweepMode,
    pub confidences: Vec<f64>,
    pub k1: Vec<usize>,
    pub k2: Vec<usize>,
    pub start_ages: Vec<usize>,
}

/// Run every cell of `spec`. Per-cell failures (such as an unreachable
/// target) are recorded in the row; other errors abort.
pub fn run_sweep(
    spec: &SweepSpec,
    settings: &SweepSettings,
    life_table: &LifeTable,
) -> Result<Vec<SweepRow>> {
    for c in &spec.confidences {
        check_target(*c, settings)?;
    }
    let mut rows = Vec::new();
    let cell = |r: Result<SweepOutcome>| match r {
        Ok(o) => Ok(Ok(o)),
        Err(e @ (Error::NotAchievable { .. } | Error::TriviallySatisfiable { .. })) => {
            Ok(Err(e.to_string()))
        }
        Err(e) => Err(e),
    };
    match spec.mode {
        SweepMode::Lump => {
            for &k2 in &spec.k2 {
                for row in lump_frontier_row(k2, &spec.confidences, settings, None)? {
                    rows.push(SweepRow {
                        k2: Some(k2),
                        ..row
                    });
                }
            }
        }
        SweepMode::LumpMortality => {
            for &s in &spec.start_ages {
                let h = hazard_sequence(life_table, s)?;
                for row in lump_frontier_row(h.horizon(), &spec.confidences, settings, Some(&h))? {
                    rows.push(SweepRow {
                        start_age: Some(s),
                        ..row
                    });
                }
            }
        }
        SweepMode::Dca => {
            for &k1 in &spec.k1 {
                for &k2 in &spec.k2 {
                    for &c in &spec.confidences {
                        rows.push(SweepRow {
                            k1: Some(k1),
                            k2: Some(k2),
                            start_age: None,
                            confidence: c,
                            outcome: cell(min_dca_amount(k1, k2, c, settings, None))?,
                        });
                    }
                }
            }
        }
        SweepMode::DcaMortality => {
            for &k1 in &spec.k1 {
                for &s in &spec.start_ages {
                    let h = hazard_sequence(life_table, s)?;
                    let k = MAX_AGE - s;
                    if k1 > k {
                        return Err(Error::Validation(format!(
                            "{k1} contributions do not fit before age {MAX_AGE} from age {s}"
                        )));
                    }
                    let k2 = k + 1 - k1;
                    for &c in &spec.confidences {
                        rows.push(SweepRow {
                            k1: Some(k1),
                            k2: Some(k2),
                            start_age: Some(s),
                            confidence: c,
                            outcome: cell(min_dca_amount(k1, k2, c, settings, Some(&h)))?,
                        });
                    }
                }
            }
        }
    }
    Ok(rows)
}

fn lump_frontier_row(
    withdrawals: usize,
    confidences: &[f64],
    settings: &SweepSettings,
    hazards: Option<&HazardSequence>,
) -> Result<Vec<SweepRow>> {
    confidences
        .iter()
        .map(|&c| {
            let outcome = match min_lump_sum(withdrawals, c, settings, hazards) {
                Ok(o) => Ok(o),
                Err(e @ Error::NotAchievable { .. }) => Err(e.to_string()),
                Err(e) => return Err(e),
            };
            Ok(SweepRow {
                k1: None,
                k2: None,
                start_age: None,
                confidence: c,
                outcome,
            })
        })
        .collect()
}

/// Minimal lump sums for every `(k2, C)` pair, rows ordered by `k2` then `C`.
pub fn confidence_frontier(
    k2_values: &[usize],
    confidences: &[f64],
    settings: &SweepSettings,
) -> Result<Vec<SweepRow>> {
    let spec = SweepSpec {
        mode: SweepMode::Lump,
        confidences: confidences.to_vec(),
        k1: Vec::new(),
        k2: k2_values.to_vec(),
        start_ages: Vec::new(),
    };
    run_sweep(&spec, settings, &LifeTable::bundled())
}

#[derive(Serialize)]
struct CsvRecord {
    k1: Option<usize>,
    k2: Option<usize>,
    start_age: Option<usize>,
    confidence: f64,
    x: Option<f64>,
    solver_value: Option<f64>,
    sim_value: Option<f64>,
    sim_stderr: Option<f64>,
}

/// Write rows as CSV. Unreached cells leave `x` and the values empty.
/// `check` picks which simulation fills `sim_value`.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], check: CheckPolicy, out: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    wtr.write_record(CSV_HEADER)?;
    for row in rows {
        let ok = row.outcome.as_ref().ok();
        let sim = ok.and_then(|o| match check {
            CheckPolicy::Optimal => o.optimal_sim,
            CheckPolicy::AllStock => o.all_stock_sim,
        });
        wtr.serialize(CsvRecord {
            k1: row.k1,
            k2: row.k2,
            start_age: row.start_age,
            confidence: row.confidence,
            x: ok.map(|o| o.x),
            solver_value: ok.map(|o| o.solver_value),
            sim_value: sim.map(|s| s.estimate),
            sim_stderr: sim.map(|s| s.stderr),
        })?;
    }
    wtr.flush()?;
    Ok(())
}
