//! Period life tables, per-stage hazards and death-time sampling.

use std::io::Read;
use std::path::Path;

use rand::Rng;
use serde::Deserialize;

use crate::error::{Error, Result};

/// Ages `0..MAX_AGE` must be present in every table; horizons stop at `MAX_AGE`.
pub const MAX_AGE: usize = 120;

/// US female period life table for 2017, ages 0–119 (see `data/README.md`).
pub const BUNDLED_FEMALE_2017: &str = include_str!("../data/us_female_period_2017.csv");

/// One-year death probabilities `d_j` by integer age `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct LifeTable {
    death_rate: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct LifeRow {
    age: usize,
    death_rate: f64,
}

impl LifeTable {
    pub fn from_rates(death_rate: Vec<f64>) -> Result<Self> {
        if death_rate.len() < MAX_AGE {
            return Err(Error::Format(format!(
                "life table must cover ages 0..={}, got {} ages",
                MAX_AGE - 1,
                death_rate.len()
            )));
        }
        if let Some((age, d)) = death_rate
            .iter()
            .enumerate()
            .find(|(_, d)| !(0.0..=1.0).contains(*d))
        {
            return Err(Error::Format(format!(
                "death rate at age {age} is outside [0, 1]: {d}"
            )));
        }
        Ok(Self { death_rate })
    }

    pub fn bundled() -> Self {
        load_life_table(BUNDLED_FEMALE_2017.as_bytes()).expect("bundled life table is valid")
    }

    pub fn rate(&self, age: usize) -> f64 {
        self.death_rate[age]
    }

    pub fn rates(&self) -> &[f64] {
        &self.death_rate
    }
}

/// Parse an `age,death_rate` CSV with ages ascending from 0.
pub fn load_life_table<R: Read>(reader: R) -> Result<LifeTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    for required in ["age", "death_rate"] {
        if !headers.iter().any(|h| h == required) {
            return Err(Error::Format(format!("missing column `{required}`")));
        }
    }
    let mut rates = Vec::new();
    for row in rdr.deserialize() {
        let row: LifeRow = row?;
        if row.age != rates.len() {
            return Err(Error::Format(format!(
                "ages must be contiguous from 0: expected {}, found {}",
                rates.len(),
                row.age
            )));
        }
        rates.push(row.death_rate);
    }
    LifeTable::from_rates(rates)
}

pub fn load_life_table_file(path: impl AsRef<Path>) -> Result<LifeTable> {
    load_life_table(std::fs::File::open(path)?)
}

/// Conditional death probabilities `p_i = d_{s+i}` for `i = 0..120-s`.
#[derive(Debug, Clone, PartialEq)]
pub struct HazardSequence {
    start_age: Option<usize>,
    hazards: Vec<f64>,
}

impl HazardSequence {
    /// Arbitrary hazards, not tied to a life table.
    pub fn from_hazards(hazards: Vec<f64>) -> Result<Self> {
        if hazards.is_empty() {
            return Err(Error::Validation("hazard sequence is empty".into()));
        }
        if let Some((i, p)) = hazards
            .iter()
            .enumerate()
            .find(|(_, p)| !(0.0..=1.0).contains(*p))
        {
            return Err(Error::Validation(format!("hazard {i} outside [0, 1]: {p}")));
        }
        Ok(Self {
            start_age: None,
            hazards,
        })
    }

    pub fn start_age(&self) -> Option<usize> {
        self.start_age
    }

    pub fn hazards(&self) -> &[f64] {
        &self.hazards
    }

    pub fn get(&self, i: usize) -> f64 {
        self.hazards[i]
    }

    pub fn horizon(&self) -> usize {
        self.hazards.len()
    }

    /// `P(tau > t_k)`: surviving every stage.
    pub fn residual_survival(&self) -> f64 {
        self.hazards.iter().map(|p| 1.0 - p).product()
    }
}

pub fn hazard_sequence(table: &LifeTable, start_age: usize) -> Result<HazardSequence> {
    if start_age >= MAX_AGE {
        return Err(Error::Validation(format!(
            "start age must be in 0..={}, got {start_age}",
            MAX_AGE - 1
        )));
    }
    Ok(HazardSequence {
        start_age: Some(start_age),
        hazards: table.death_rate[start_age..MAX_AGE].to_vec(),
    })
}

/// Distribution of the death interval.
#[derive(Debug, Clone, PartialEq)]
pub struct DeathDistribution {
    /// `P(tau in (t_i, t_{i+1}])` for `i = 0..k`.
    pub interval: Vec<f64>,
    /// `P(tau > t_k)`.
    pub residual: f64,
}

pub fn interval_death_probabilities(h: &HazardSequence) -> DeathDistribution {
    let mut alive = 1.0;
    let interval = h
        .hazards
        .iter()
        .map(|&p| {
            let die = alive * p;
            alive *= 1.0 - p;
            die
        })
        .collect();
    DeathDistribution {
        interval,
        residual: alive,
    }
}

/// Outcome of one death-time draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeathIndex {
    /// Death falls in `(t_i, t_{i+1}]`.
    Interval(usize),
    /// Survives past `t_k`.
    Survivor,
}

/// Sequential Bernoulli trials; the first success is the death interval.
/// Consumes exactly one uniform per trial performed.
pub fn sample_death_index<R: Rng + ?Sized>(h: &HazardSequence, rng: &mut R) -> DeathIndex {
    for (i, &p) in h.hazards.iter().enumerate() {
        let u: f64 = rng.random();
        if u < p {
            return DeathIndex::Interval(i);
        }
    }
    DeathIndex::Survivor
}
