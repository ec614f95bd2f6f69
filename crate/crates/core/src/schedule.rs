//! Cash-flow schedules and the bond-only success thresholds they induce.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Signed cash flows `c_0..c_k`; positive amounts are investments, negative
/// amounts withdrawals. Flow `c_i` happens at time `i`, the horizon is `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CashFlowSchedule {
    flows: Vec<f64>,
}

/// A schedule that breaks a structural requirement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleViolation {
    pub index: usize,
    pub reason: &'static str,
}

impl std::fmt::Display for ScheduleViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "flow {}: {}", self.index, self.reason)
    }
}

impl CashFlowSchedule {
    /// Build from explicit flows, rejecting anything [`validate_schedule`] rejects.
    pub fn new(flows: Vec<f64>) -> Result<Self> {
        let schedule = Self { flows };
        validate_schedule(&schedule).map_err(|v| Error::Validation(v.to_string()))?;
        Ok(schedule)
    }

    /// Build without validation, for callers that want the violation report.
    pub fn unchecked(flows: Vec<f64>) -> Self {
        Self { flows }
    }

    pub fn flows(&self) -> &[f64] {
        &self.flows
    }

    pub fn initial(&self) -> f64 {
        self.flows[0]
    }

    /// Number of rebalancing steps `k`.
    pub fn horizon(&self) -> usize {
        self.flows.len().saturating_sub(1)
    }

    /// Same schedule with `c_0` replaced.
    pub fn with_initial(&self, c0: f64) -> Result<Self> {
        let mut flows = self.flows.clone();
        flows[0] = c0;
        Self::new(flows)
    }

    /// Divide every flow by the magnitude of the first withdrawal, so that
    /// withdrawals come out as `-1`. Returns the scale that was divided out.
    pub fn normalized(&self) -> (Self, f64) {
        let scale = self
            .flows
            .iter()
            .find(|c| **c < 0.0)
            .map(|c| -c)
            .unwrap_or(1.0);
        let flows = self.flows.iter().map(|c| c / scale).collect();
        (Self { flows }, scale)
    }

    /// Pad with `fill` until the horizon reaches `k`.
    pub fn extended_to(&self, k: usize, fill: f64) -> Result<Self> {
        if self.horizon() > k {
            return Err(Error::Validation(format!(
                "schedule horizon {} exceeds the required horizon {k}",
                self.horizon()
            )));
        }
        let mut flows = self.flows.clone();
        flows.resize(k + 1, fill);
        Self::new(flows)
    }
}

/// `(c0, -1, ..., -1)` with `withdrawals` unit withdrawals.
pub fn build_lump_sum_schedule(c0: f64, withdrawals: usize) -> Result<CashFlowSchedule> {
    if !(c0 > 0.0 && c0.is_finite()) {
        return Err(Error::Validation(format!(
            "initial investment must be positive, got {c0}"
        )));
    }
    if withdrawals == 0 {
        return Err(Error::Validation("need at least one withdrawal".into()));
    }
    let mut flows = Vec::with_capacity(withdrawals + 1);
    flows.push(c0);
    flows.extend(std::iter::repeat_n(-1.0, withdrawals));
    CashFlowSchedule::new(flows)
}

/// `k1` equal investments of `x` followed by `k2` unit withdrawals; the
/// first withdrawal coincides with the year after the last investment, so the
/// horizon is `k1 + k2 - 1`.
pub fn build_dca_schedule(x: f64, k1: usize, k2: usize) -> Result<CashFlowSchedule> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::Validation(format!(
            "annual investment must be positive, got {x}"
        )));
    }
    if k1 == 0 || k2 == 0 {
        return Err(Error::Validation(format!(
            "need at least one investment and one withdrawal, got k1 = {k1}, k2 = {k2}"
        )));
    }
    let mut flows = Vec::with_capacity(k1 + k2);
    flows.extend(std::iter::repeat_n(x, k1));
    flows.extend(std::iter::repeat_n(-1.0, k2));
    CashFlowSchedule::new(flows)
}

/// `c_0 > 0`, and once a withdrawal happens every later flow is a withdrawal
/// too. The latter makes a failed (negative) wealth stay negative.
pub fn validate_schedule(s: &CashFlowSchedule) -> std::result::Result<(), ScheduleViolation> {
    let flows = s.flows();
    if flows.len() < 2 {
        return Err(ScheduleViolation {
            index: flows.len(),
            reason: "a schedule needs an initial flow and at least one more",
        });
    }
    if let Some(i) = flows.iter().position(|c| !c.is_finite()) {
        return Err(ScheduleViolation {
            index: i,
            reason: "flow is not finite",
        });
    }
    if flows[0] <= 0.0 {
        return Err(ScheduleViolation {
            index: 0,
            reason: "initial flow must be positive",
        });
    }
    let mut withdrawing = false;
    for (i, &c) in flows.iter().enumerate() {
        if withdrawing && c >= 0.0 {
            return Err(ScheduleViolation {
                index: i,
                reason: "a withdrawal must be followed only by withdrawals",
            });
        }
        withdrawing |= c < 0.0;
    }
    Ok(())
}

/// Minimum wealth `w_i` at each stage from which the bond alone completes
/// the rest of the schedule, ending at the disaster level `w_k = w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSequence {
    thresholds: Vec<f64>,
    disaster_level: f64,
    bond_rate: f64,
}

impl ThresholdSequence {
    pub fn get(&self, i: usize) -> f64 {
        self.thresholds[i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn horizon(&self) -> usize {
        self.thresholds.len() - 1
    }

    pub fn disaster_level(&self) -> f64 {
        self.disaster_level
    }

    pub fn bond_rate(&self) -> f64 {
        self.bond_rate
    }
}

/// Backward recursion `w_k = w`, `w_i = (w_{i+1} - c_{i+1}) / (1 + r)`.
///
/// Fails with [`Error::TriviallySatisfiable`] at the first (highest) stage
/// `i < k` whose threshold is not positive.
pub fn compute_thresholds(s: &CashFlowSchedule, w: f64, r: f64) -> Result<ThresholdSequence> {
    validate_schedule(s).map_err(|v| Error::Validation(v.to_string()))?;
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::Validation(format!("bond rate must be >= 0, got {r}")));
    }
    if !w.is_finite() {
        return Err(Error::Validation(format!("disaster level must be finite, got {w}")));
    }
    let k = s.horizon();
    let flows = s.flows();
    let mut thresholds = vec![0.0; k + 1];
    thresholds[k] = w;
    for i in (0..k).rev() {
        let wi = (thresholds[i + 1] - flows[i + 1]) / (1.0 + r);
        if wi <= 0.0 {
            return Err(Error::TriviallySatisfiable {
                index: i,
                threshold: wi,
            });
        }
        thresholds[i] = wi;
    }
    Ok(ThresholdSequence {
        thresholds,
        disaster_level: w,
        bond_rate: r,
    })
}

/// JSON description of a schedule: explicit flows or one of two shorthands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScheduleSpec {
    Flows { flows: Vec<f64> },
    LumpSum { lump_sum: LumpSumSpec },
    Dca { dca: DcaSpec },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LumpSumSpec {
    pub c0: f64,
    pub withdrawals: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DcaSpec {
    pub x: f64,
    pub k1: usize,
    pub k2: usize,
}

impl ScheduleSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("schedule json: {e}")))
    }

    pub fn build(&self) -> Result<CashFlowSchedule> {
        match self {
            ScheduleSpec::Flows { flows } => CashFlowSchedule::new(flows.clone()),
            ScheduleSpec::LumpSum { lump_sum } => {
                build_lump_sum_schedule(lump_sum.c0, lump_sum.withdrawals)
            }
            ScheduleSpec::Dca { dca } => build_dca_schedule(dca.x, dca.k1, dca.k2),
        }
    }
}
