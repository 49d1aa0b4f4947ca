//! Morris elementary-effects screening.
//!
//! Effects are divided by the signed step measured in unit-cube
//! coordinates, so parameter ranges enter only through the simulator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{DesignKind, DesignMatrix, Method, OutputMatrix, SensitivityResult};
use crate::stats::{mean, sample_variance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementaryEffects {
    /// One effect per valid trajectory, per parameter.
    pub per_param: Vec<Vec<f64>>,
    pub mu: Vec<f64>,
    pub mu_star: Vec<f64>,
    pub sigma: Vec<f64>,
    pub dgsm: Vec<f64>,
    pub dropped_trajectories: usize,
}

/// Combined measure `sqrt(mu*^2 + sigma^2)`.
pub fn dgsm(mu_star: f64, sigma: f64) -> f64 {
    mu_star.hypot(sigma)
}

pub fn elementary_effects(design: &DesignMatrix, out: &OutputMatrix, column: usize) -> Result<ElementaryEffects> {
    let r = match design.kind {
        DesignKind::MorrisOat { r, .. } => r,
        ref other => {
            return Err(Error::UnsupportedDesign(format!(
                "elementary effects need a Morris design, got {}",
                other.label()
            )))
        }
    };
    let k = design.ncols();
    if out.nrows() != design.nrows() || design.nrows() != r * (k + 1) {
        return Err(Error::Structural(format!(
            "{} output rows for a Morris design of {} rows ({r} trajectories)",
            out.nrows(),
            design.nrows()
        )));
    }
    let y = out.column(column)?;
    let mut per_param = vec![Vec::with_capacity(r); k];
    let mut dropped = 0;
    for t in 0..r {
        let rows = t * (k + 1)..(t + 1) * (k + 1);
        if rows.clone().any(|i| !out.valid[i]) {
            log::warn!("Morris trajectory {t} contains a masked run and is dropped");
            dropped += 1;
            continue;
        }
        let mut effects = vec![f64::NAN; k];
        for i in rows.start..rows.end - 1 {
            let (a, b) = (design.unit.row(i), design.unit.row(i + 1));
            let moved: Vec<usize> = (0..k).filter(|&j| a[j] != b[j]).collect();
            if moved.len() != 1 {
                return Err(Error::Structural(format!(
                    "rows {i} and {} differ in {} coordinates",
                    i + 1,
                    moved.len()
                )));
            }
            let p = moved[0];
            effects[p] = (y[i + 1] - y[i]) / (b[p] - a[p]);
        }
        if effects.iter().any(|e| e.is_nan()) {
            return Err(Error::Structural(format!(
                "trajectory {t} does not move every parameter exactly once"
            )));
        }
        for (p, e) in effects.into_iter().enumerate() {
            per_param[p].push(e);
        }
    }
    if per_param[0].is_empty() {
        return Err(Error::NoData("every Morris trajectory contains a masked run".into()));
    }
    let mu: Vec<f64> = per_param.iter().map(|e| mean(e)).collect();
    let mu_star: Vec<f64> = per_param
        .iter()
        .map(|e| e.iter().map(|v| v.abs()).sum::<f64>() / e.len() as f64)
        .collect();
    let sigma: Vec<f64> = per_param.iter().map(|e| sample_variance(e).sqrt()).collect();
    let dgsm = mu_star.iter().zip(&sigma).map(|(&m, &s)| dgsm(m, s)).collect();
    Ok(ElementaryEffects {
        per_param,
        mu,
        mu_star,
        sigma,
        dgsm,
        dropped_trajectories: dropped,
    })
}

impl ElementaryEffects {
    pub fn to_result(&self) -> Result<SensitivityResult> {
        Ok(SensitivityResult::new(Method::MorrisDgsm, self.dgsm.clone(), None)?
            .with_extra("mu", self.mu.clone())
            .with_extra("mu_star", self.mu_star.clone())
            .with_extra("sigma", self.sigma.clone()))
    }
}
