//! Monte Carlo estimates of the probability of completing a schedule.
//!
//! Path `p` draws its returns from ChaCha8 stream `p` of the master seed, and
//! its death time from stream `p` of a salted seed, so results do not depend
//! on how paths are spread over threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::ReturnModel;
use crate::mortality::{
    interval_death_probabilities, sample_death_index, DeathDistribution, DeathIndex,
    HazardSequence,
};
use crate::policy::Policy;
use crate::schedule::CashFlowSchedule;

pub const DEFAULT_PATHS: usize = 100_000;
pub const DEFAULT_SEED: u64 = 1;

const DEATH_SALT: u64 = 0x9E37_79B9_7F4A_7C15;
/// Paths per work unit; fixed so that reductions happen in a fixed order.
const BLOCK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub seed: u64,
    /// Disaster level `w`.
    pub w: f64,
    /// Bond rate `r`.
    pub r: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: DEFAULT_PATHS,
            seed: DEFAULT_SEED,
            w: 0.0,
            r: 0.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Validation("need at least one path".into()));
        }
        if !(self.r >= 0.0 && self.r.is_finite()) {
            return Err(Error::Validation(format!("bond rate must be >= 0, got {}", self.r)));
        }
        if !self.w.is_finite() {
            return Err(Error::Validation(format!("disaster level must be finite, got {}", self.w)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub estimate: f64,
    pub stderr: f64,
    pub n: usize,
    pub seed: u64,
}

impl SimResult {
    fn from_count(successes: u64, config: &SimConfig) -> Self {
        let n = config.n as f64;
        let p = successes as f64 / n;
        Self {
            estimate: p,
            stderr: (p * (1.0 - p) / n).sqrt(),
            n: config.n,
            seed: config.seed,
        }
    }
}

fn return_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

fn death_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ DEATH_SALT);
    rng.set_stream(path as u64);
    rng
}

/// Wealth after `steps` rebalancing periods along one path.
fn run_path(
    flows: &[f64],
    steps: usize,
    policy: &Policy,
    model: &ReturnModel,
    gross: f64,
    rng: &mut ChaCha8Rng,
    mut visit: impl FnMut(usize, f64),
) -> f64 {
    let mut wealth = flows[0];
    visit(0, wealth);
    for (i, &c) in flows.iter().enumerate().take(steps + 1).skip(1) {
        let q = policy.weight(i - 1, wealth);
        let x = model.draw(rng);
        wealth = (q * x + (1.0 - q) * gross) * wealth + c;
        visit(i, wealth);
    }
    wealth
}

fn check_inputs(
    schedule: &CashFlowSchedule,
    policy: &Policy,
    model: &ReturnModel,
    config: &SimConfig,
) -> Result<()> {
    config.validate()?;
    model.validate()?;
    policy.check_horizon(schedule.horizon())
}

fn count_blocks(n: usize, per_path: impl Fn(usize) -> bool + Sync) -> u64 {
    let blocks: Vec<u64> = (0..n.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            (b * BLOCK..((b + 1) * BLOCK).min(n))
                .filter(|&p| per_path(p))
                .count() as u64
        })
        .collect();
    blocks.iter().sum()
}

/// Fraction of paths whose final wealth `W_k` reaches `w`.
pub fn simulate_success(
    schedule: &CashFlowSchedule,
    policy: &Policy,
    model: &ReturnModel,
    config: &SimConfig,
) -> Result<SimResult> {
    check_inputs(schedule, policy, model, config)?;
    let flows = schedule.flows();
    let k = schedule.horizon();
    let gross = 1.0 + config.r;
    let successes = count_blocks(config.n, |p| {
        let mut rng = return_rng(config.seed, p);
        run_path(flows, k, policy, model, gross, &mut rng, |_, _| {}) >= config.w
    });
    Ok(SimResult::from_count(successes, config))
}

/// Fraction of paths whose wealth, frozen at death (or at `t_k` for
/// survivors), reaches `w`.
pub fn simulate_success_mortality(
    schedule: &CashFlowSchedule,
    policy: &Policy,
    model: &ReturnModel,
    hazards: &HazardSequence,
    config: &SimConfig,
) -> Result<SimResult> {
    check_inputs(schedule, policy, model, config)?;
    let k = schedule.horizon();
    check_hazards(hazards, k)?;
    let flows = schedule.flows();
    let gross = 1.0 + config.r;
    let successes = count_blocks(config.n, |p| {
        let steps = match sample_death_index(hazards, &mut death_rng(config.seed, p)) {
            DeathIndex::Interval(i) => i,
            DeathIndex::Survivor => k,
        };
        let mut rng = return_rng(config.seed, p);
        run_path(flows, steps, policy, model, gross, &mut rng, |_, _| {}) >= config.w
    });
    Ok(SimResult::from_count(successes, config))
}

fn check_hazards(hazards: &HazardSequence, k: usize) -> Result<()> {
    if hazards.horizon() != k {
        return Err(Error::Validation(format!(
            "hazard sequence has {} stages but the schedule horizon is {k}",
            hazards.horizon()
        )));
    }
    Ok(())
}

/// Success split by death interval:
/// `P(W_{τ} >= w) = Σ_i P(W_i >= w) P(τ ∈ (t_i, t_{i+1}]) + P(W_k >= w) P(τ > t_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalDecomposition {
    /// `P(W_i >= w)` for `i = 0..=k`.
    pub success_at: Vec<f64>,
    pub death_interval: Vec<f64>,
    pub residual_survival: f64,
    pub total: f64,
    /// Standard error of `total` over the shared paths.
    pub stderr: f64,
    pub n: usize,
    pub seed: u64,
}

pub fn success_by_interval(
    schedule: &CashFlowSchedule,
    policy: &Policy,
    model: &ReturnModel,
    hazards: &HazardSequence,
    config: &SimConfig,
) -> Result<IntervalDecomposition> {
    check_inputs(schedule, policy, model, config)?;
    let k = schedule.horizon();
    check_hazards(hazards, k)?;
    let DeathDistribution { interval, residual } = interval_death_probabilities(hazards);
    let mut weight = interval.clone();
    weight.push(residual);

    let flows = schedule.flows();
    let gross = 1.0 + config.r;
    let n = config.n;
    let blocks: Vec<(Vec<u64>, f64, f64)> = (0..n.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut counts = vec![0u64; k + 1];
            let (mut sz, mut sz2) = (0.0, 0.0);
            for p in b * BLOCK..((b + 1) * BLOCK).min(n) {
                let mut rng = return_rng(config.seed, p);
                let mut z = 0.0;
                run_path(flows, k, policy, model, gross, &mut rng, |i, wealth| {
                    if wealth >= config.w {
                        counts[i] += 1;
                        z += weight[i];
                    }
                });
                sz += z;
                sz2 += z * z;
            }
            (counts, sz, sz2)
        })
        .collect();

    let mut counts = vec![0u64; k + 1];
    let (mut sz, mut sz2) = (0.0, 0.0);
    for (c, a, b) in &blocks {
        for (total, x) in counts.iter_mut().zip(c) {
            *total += x;
        }
        sz += a;
        sz2 += b;
    }
    let nf = n as f64;
    let total = sz / nf;
    let var = if n > 1 {
        ((sz2 - nf * total * total) / (nf - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(IntervalDecomposition {
        success_at: counts.iter().map(|&c| c as f64 / nf).collect(),
        death_interval: interval,
        residual_survival: residual,
        total,
        stderr: (var / nf).sqrt(),
        n,
        seed: config.seed,
    })
}
