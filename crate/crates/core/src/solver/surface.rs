//! JSON form of a solved surface.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PolicySurface, StagePolicy, ValueSurface};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub i: usize,
    pub w: f64,
    pub grid: Vec<f64>,
    pub v: Vec<f64>,
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceFile {
    pub stages: Vec<StageRecord>,
    pub v0_at_c0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_survival: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower_bound: Option<f64>,
}

impl SurfaceFile {
    pub fn from_surfaces(values: &ValueSurface, policy: &PolicySurface) -> Self {
        let stages = values
            .stages
            .iter()
            .zip(&policy.stages)
            .map(|(v, q)| StageRecord {
                i: v.index,
                w: v.threshold,
                grid: v.nodes(),
                v: v.values.clone(),
                q: q.weights.clone(),
            })
            .collect();
        Self {
            stages,
            v0_at_c0: values.v0_at_c0,
            residual_survival: values.residual_survival,
            lower_bound: values.lower_bound,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: Self =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("surface json: {e}")))?;
        file.validate()?;
        Ok(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// Stages must be numbered `0..k` with grids `m w / M`, `m = 1..=2M`.
    fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::Format("surface has no stages".into()));
        }
        for (pos, s) in self.stages.iter().enumerate() {
            let bad = |what: &str| Error::Format(format!("surface stage {pos}: {what}"));
            if s.i != pos {
                return Err(bad("stage indices must run 0..k in order"));
            }
            if !(s.w > 0.0 && s.w.is_finite()) {
                return Err(bad("threshold must be positive"));
            }
            let n = s.grid.len();
            if n < 2 || n % 2 != 0 || s.v.len() != n || s.q.len() != n {
                return Err(bad("grid, v and q must share an even length"));
            }
            let m = n / 2;
            let off_grid = s.grid.iter().enumerate().any(|(j, y)| {
                let expected = super::grid_node(s.w, m, j);
                (y - expected).abs() > 1e-9 * expected.abs().max(1.0)
            });
            if off_grid {
                return Err(bad("grid nodes are not m w / M"));
            }
            if s.q.iter().any(|q| !(0.0..=1.0).contains(q)) {
                return Err(bad("stock weights must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn policy_surface(&self) -> PolicySurface {
        PolicySurface {
            stages: self
                .stages
                .iter()
                .map(|s| StagePolicy {
                    index: s.i,
                    threshold: s.w,
                    resolution: s.grid.len() / 2,
                    weights: s.q.clone(),
                })
                .collect(),
        }
    }
}
