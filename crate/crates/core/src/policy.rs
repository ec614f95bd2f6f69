//! Executable stock-weight policies.

use std::path::Path;

use crate::error::{Error, Result};
use crate::solver::{PolicySurface, SurfaceFile};

/// Maps `(stage i, wealth x)` to the stock weight held over `(t_i, t_{i+1}]`.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Constant(f64),
    Interpolated(PolicySurface),
}

pub fn constant_policy(q: f64) -> Result<Policy> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Validation(format!(
            "stock weight must be in [0, 1], got {q}"
        )));
    }
    Ok(Policy::Constant(q))
}

/// Linear interpolation of the solved weights: 1 for `x <= 0`, 0 for
/// `x >= w_i`, and in between linear on `{0} ∪ D_i` with weight 1 at 0.
pub fn interpolated_weight(surface: &PolicySurface, i: usize, x: f64) -> Result<f64> {
    if i >= surface.horizon() {
        return Err(Error::Validation(format!(
            "stage {i} out of range for a policy with {} stages",
            surface.horizon()
        )));
    }
    Ok(weight_at(surface, i, x))
}

fn weight_at(surface: &PolicySurface, i: usize, x: f64) -> f64 {
    let stage = &surface.stages[i];
    if x <= 0.0 {
        return 1.0;
    }
    if x >= stage.threshold {
        return 0.0;
    }
    let (x0, q0, x1, q1) = match stage.floor_index(x) {
        None => (0.0, 1.0, stage.node(0), stage.weights[0]),
        Some(j) if j + 1 >= stage.weights.len() => return stage.weights[j],
        Some(j) => (
            stage.node(j),
            stage.weights[j],
            stage.node(j + 1),
            stage.weights[j + 1],
        ),
    };
    q0 + (x - x0) / (x1 - x0) * (q1 - q0)
}

impl Policy {
    pub fn optimal(surface: PolicySurface) -> Self {
        Policy::Interpolated(surface)
    }

    pub fn from_surface_file(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Policy::Interpolated(SurfaceFile::load(path)?.policy_surface()))
    }

    /// Parse `constant:<q>` or `optimal:<surface-file>`.
    pub fn from_descriptor(desc: &str) -> Result<Self> {
        match desc.split_once(':') {
            Some(("constant", q)) => {
                let q: f64 = q
                    .trim()
                    .parse()
                    .map_err(|_| Error::Validation(format!("bad constant weight `{q}`")))?;
                constant_policy(q)
            }
            Some(("optimal", path)) => Self::from_surface_file(path),
            _ => Err(Error::Validation(format!(
                "policy must be `optimal:<file>` or `constant:<q>`, got `{desc}`"
            ))),
        }
    }

    /// Stages covered, `None` for a constant policy.
    pub fn horizon(&self) -> Option<usize> {
        match self {
            Policy::Constant(_) => None,
            Policy::Interpolated(s) => Some(s.horizon()),
        }
    }

    /// Stage must be below [`Policy::horizon`].
    pub fn weight(&self, i: usize, x: f64) -> f64 {
        match self {
            Policy::Constant(q) => *q,
            Policy::Interpolated(s) => weight_at(s, i, x),
        }
    }

    pub(crate) fn check_horizon(&self, k: usize) -> Result<()> {
        match self.horizon() {
            Some(h) if h < k => Err(Error::Validation(format!(
                "policy covers {h} stages but the schedule needs {k}"
            ))),
            _ => Ok(()),
        }
    }
}
