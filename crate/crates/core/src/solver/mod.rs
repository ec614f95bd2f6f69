//! Backward induction for the maximal probability of completing a cash-flow
//! schedule, with and without mortality.

mod quadrature;
mod search;
mod surface;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use quadrature::candidate_value;
pub use search::{iterated_grid_search, refine_weight};
pub use surface::{StageRecord, SurfaceFile};

use crate::error::{Error, Result};
use crate::market::ReturnModel;
use crate::mortality::HazardSequence;
use crate::schedule::{CashFlowSchedule, ThresholdSequence};

pub const DEFAULT_GRID_RESOLUTION: usize = 300;
pub const MIN_GRID_RESOLUTION: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// `M`: each stage grid has `2M` nodes `m w_i / M`, `m = 1..=2M`.
    pub grid_resolution: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            grid_resolution: DEFAULT_GRID_RESOLUTION,
        }
    }
}

impl SolverConfig {
    pub fn new(grid_resolution: usize) -> Result<Self> {
        let c = Self { grid_resolution };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_resolution < MIN_GRID_RESOLUTION {
            return Err(Error::Validation(format!(
                "grid resolution must be at least {MIN_GRID_RESOLUTION}, got {}",
                self.grid_resolution
            )));
        }
        Ok(())
    }
}

/// Values of one stage on its grid `D_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageValues {
    pub index: usize,
    pub threshold: f64,
    pub resolution: usize,
    pub values: Vec<f64>,
}

impl StageValues {
    /// Grid node `j` (0-based), i.e. `(j + 1) w_i / M`.
    pub fn node(&self, j: usize) -> f64 {
        grid_node(self.threshold, self.resolution, j)
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.values.len()).map(|j| self.node(j)).collect()
    }

    /// Node spacing `w_i / M`.
    pub fn spacing(&self) -> f64 {
        self.threshold / self.resolution as f64
    }

    /// Largest `j` with `node(j) <= x`.
    pub fn floor_index(&self, x: f64) -> Option<usize> {
        floor_index(self.threshold, self.resolution, self.values.len(), x)
    }
}

/// Optimal stock weights of one stage on its grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StagePolicy {
    pub index: usize,
    pub threshold: f64,
    pub resolution: usize,
    pub weights: Vec<f64>,
}

impl StagePolicy {
    pub fn node(&self, j: usize) -> f64 {
        grid_node(self.threshold, self.resolution, j)
    }

    pub fn floor_index(&self, x: f64) -> Option<usize> {
        floor_index(self.threshold, self.resolution, self.weights.len(), x)
    }
}

fn grid_node(threshold: f64, resolution: usize, j: usize) -> f64 {
    (j + 1) as f64 * threshold / resolution as f64
}

fn floor_index(threshold: f64, resolution: usize, len: usize, x: f64) -> Option<usize> {
    if !(x >= grid_node(threshold, resolution, 0)) {
        return None;
    }
    let guess = (x / threshold * resolution as f64).floor() - 1.0;
    let mut j = if guess <= 0.0 {
        0
    } else {
        (guess as usize).min(len - 1)
    };
    while j + 1 < len && grid_node(threshold, resolution, j + 1) <= x {
        j += 1;
    }
    while j > 0 && grid_node(threshold, resolution, j) > x {
        j -= 1;
    }
    Some(j)
}

/// `v_i` (or the mortality-adjusted `v̄_i`) for stages `0..k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSurface {
    pub stages: Vec<StageValues>,
    pub disaster_level: f64,
    /// Per-stage death probabilities `p_i` for the mortality variant.
    pub hazards: Option<Vec<f64>>,
    pub c0: f64,
    pub v0_at_c0: f64,
    pub residual_survival: Option<f64>,
    pub lower_bound: Option<f64>,
}

impl ValueSurface {
    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    /// Interpolated value at stage `i`, wealth `x`: 1 from `w_i` on, linear
    /// between grid nodes, and below the first node the value of having only
    /// the death branch, `p_i 1{x >= w}`.
    pub fn value_at(&self, i: usize, x: f64) -> f64 {
        let stage = &self.stages[i];
        if x >= stage.threshold {
            return 1.0;
        }
        match stage.floor_index(x) {
            None => {
                let p = self.hazards.as_ref().map_or(0.0, |h| h[i]);
                if x >= self.disaster_level {
                    p
                } else {
                    0.0
                }
            }
            Some(j) if j + 1 >= stage.values.len() => stage.values[j],
            Some(j) => {
                let (x0, x1) = (stage.node(j), stage.node(j + 1));
                let t = (x - x0) / (x1 - x0);
                stage.values[j] + t * (stage.values[j + 1] - stage.values[j])
            }
        }
    }

    /// Largest decrease along any stage grid, and any value outside `[0, 1]`
    /// or below 1 at or above the threshold.
    pub fn check_invariants(&self, tol: f64) -> std::result::Result<(), String> {
        for s in &self.stages {
            for (j, &v) in s.values.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(format!("stage {} node {j}: value {v} outside [0, 1]", s.index));
                }
                if s.node(j) >= s.threshold && v != 1.0 {
                    return Err(format!("stage {} node {j}: value {v} above threshold", s.index));
                }
                if j > 0 && v < s.values[j - 1] - tol {
                    return Err(format!(
                        "stage {} decreases at node {j}: {} -> {v}",
                        s.index,
                        s.values[j - 1]
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicySurface {
    pub stages: Vec<StagePolicy>,
}

impl PolicySurface {
    pub fn horizon(&self) -> usize {
        self.stages.len()
    }
}

/// Stage `k - 1` values: `1 - F(w_{k-1}(1 + r)/x)` below the threshold, 1 at
/// and above it. Stock weight 1 below the threshold.
pub fn terminal_stage(
    thresholds: &ThresholdSequence,
    model: &ReturnModel,
    resolution: usize,
) -> Result<(StageValues, StagePolicy)> {
    terminal(thresholds, model, resolution, None)
}

fn terminal(
    thresholds: &ThresholdSequence,
    model: &ReturnModel,
    resolution: usize,
    death: Option<f64>,
) -> Result<(StageValues, StagePolicy)> {
    let k = thresholds.horizon();
    if k == 0 {
        return Err(Error::Validation("horizon must be at least 1".into()));
    }
    let wt = thresholds.get(k - 1);
    if !(wt > 0.0) {
        return Err(Error::TriviallySatisfiable {
            index: k - 1,
            threshold: wt,
        });
    }
    let gross = 1.0 + thresholds.bond_rate();
    let w = thresholds.disaster_level();
    let n = 2 * resolution;
    let (values, weights) = (0..n)
        .map(|j| {
            let x = grid_node(wt, resolution, j);
            if x >= wt {
                return (1.0, 0.0);
            }
            let stock = model.sf(wt * gross / x);
            let v = match death {
                None => stock,
                Some(p) => (1.0 - p) * stock + p * indicator(x >= w),
            };
            (v, 1.0)
        })
        .unzip();
    Ok((
        StageValues {
            index: k - 1,
            threshold: wt,
            resolution,
            values,
        },
        StagePolicy {
            index: k - 1,
            threshold: wt,
            resolution,
            weights,
        },
    ))
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Maximal success probabilities `v_i` and optimal weights for a fixed
/// horizon.
pub fn backward_induction(
    schedule: &CashFlowSchedule,
    thresholds: &ThresholdSequence,
    model: &ReturnModel,
    config: &SolverConfig,
) -> Result<(ValueSurface, PolicySurface)> {
    solve(schedule, thresholds, model, None, config)
}

/// Mortality-adjusted `v̄_i`: success is judged at death or at `t_k`,
/// whichever comes first; `hazards[i]` is the chance of dying in
/// `(t_i, t_{i+1}]` given survival to `t_i`.
pub fn backward_induction_mortality(
    schedule: &CashFlowSchedule,
    thresholds: &ThresholdSequence,
    model: &ReturnModel,
    hazards: &HazardSequence,
    config: &SolverConfig,
) -> Result<(ValueSurface, PolicySurface)> {
    if hazards.horizon() != schedule.horizon() {
        return Err(Error::Validation(format!(
            "hazard sequence has {} stages but the schedule horizon is {}",
            hazards.horizon(),
            schedule.horizon()
        )));
    }
    solve(schedule, thresholds, model, Some(hazards), config)
}

fn solve(
    schedule: &CashFlowSchedule,
    thresholds: &ThresholdSequence,
    model: &ReturnModel,
    hazards: Option<&HazardSequence>,
    config: &SolverConfig,
) -> Result<(ValueSurface, PolicySurface)> {
    config.validate()?;
    model.validate()?;
    let k = schedule.horizon();
    if thresholds.horizon() != k {
        return Err(Error::Validation(format!(
            "threshold horizon {} does not match schedule horizon {k}",
            thresholds.horizon()
        )));
    }
    if let Some((i, &wi)) = thresholds.as_slice()[..k]
        .iter()
        .enumerate()
        .rev()
        .find(|(_, w)| !(**w > 0.0))
    {
        return Err(Error::TriviallySatisfiable {
            index: i,
            threshold: wi,
        });
    }
    let m = config.grid_resolution;
    let flows = schedule.flows();
    let p = |i: usize| hazards.map(|h| h.get(i));

    let mut values = Vec::with_capacity(k);
    let mut weights = Vec::with_capacity(k);
    let (v_last, q_last) = terminal(thresholds, model, m, p(k - 1))?;
    values.push(v_last);
    weights.push(q_last);
    for i in (0..k - 1).rev() {
        let next = values.last().expect("stage i + 1 is computed");
        let (v, q) = inner_stage(i, thresholds, flows[i + 1], next, model, m, p(i));
        values.push(v);
        weights.push(q);
    }
    values.reverse();
    weights.reverse();

    let mut surface = ValueSurface {
        stages: values,
        disaster_level: thresholds.disaster_level(),
        hazards: hazards.map(|h| h.hazards().to_vec()),
        c0: schedule.initial(),
        v0_at_c0: 0.0,
        residual_survival: None,
        lower_bound: None,
    };
    surface.v0_at_c0 = surface.value_at(0, schedule.initial());
    if let Some(h) = hazards {
        let residual = h.residual_survival();
        surface.residual_survival = Some(residual);
        surface.lower_bound = Some(surface.v0_at_c0 - residual);
    }
    Ok((surface, PolicySurface { stages: weights }))
}

fn inner_stage(
    i: usize,
    thresholds: &ThresholdSequence,
    c_next: f64,
    next: &StageValues,
    model: &ReturnModel,
    resolution: usize,
    death: Option<f64>,
) -> (StageValues, StagePolicy) {
    let wi = thresholds.get(i);
    let w_next = next.threshold;
    let r = thresholds.bond_rate();
    let gross = 1.0 + r;
    let w = thresholds.disaster_level();

    let node = |j: usize| {
        let x = grid_node(wi, resolution, j);
        let theta = gross * x + c_next;
        if x >= wi || theta >= w_next {
            return (1.0, 0.0);
        }
        let bond = next.floor_index(theta).map_or(0.0, |y| next.values[y]);
        match death {
            None => {
                let (q, v) = iterated_grid_search(x, next, c_next, r, model);
                if bond < v {
                    (v, q)
                } else {
                    (bond, 0.0)
                }
            }
            Some(p) => {
                let at_death = p * indicator(x >= w);
                let proposal = (1.0 - p) * bond + at_death;
                if p == 1.0 {
                    return (proposal, 0.0);
                }
                let (q, cand) = iterated_grid_search(x, next, c_next, r, model);
                let v = (1.0 - p) * cand + at_death;
                if proposal < v {
                    (v, q)
                } else {
                    (proposal, 0.0)
                }
            }
        }
    };
    let (values, weights): (Vec<f64>, Vec<f64>) =
        (0..2 * resolution).into_par_iter().map(node).unzip();
    (
        StageValues {
            index: i,
            threshold: wi,
            resolution,
            values,
        },
        StagePolicy {
            index: i,
            threshold: wi,
            resolution,
            weights,
        },
    )
}
