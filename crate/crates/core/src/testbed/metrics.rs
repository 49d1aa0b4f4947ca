use crate::error::{Error, Result};
use crate::stats::{mean, pearson, pop_variance};

fn check(sim: &[f64], obs: &[f64]) -> Result<()> {
    if sim.len() != obs.len() {
        return Err(Error::Structural(format!("{} simulated vs {} observed values", sim.len(), obs.len())));
    }
    if obs.len() < 2 {
        return Err(Error::InsufficientData("need at least two time steps".into()));
    }
    if pop_variance(obs) == 0.0 {
        return Err(Error::Degenerate("observed series is constant".into()));
    }
    Ok(())
}

/// Nash-Sutcliffe efficiency.
pub fn nse(sim: &[f64], obs: &[f64]) -> Result<f64> {
    check(sim, obs)?;
    let m = mean(obs);
    let num: f64 = sim.iter().zip(obs).map(|(s, o)| (s - o).powi(2)).sum();
    let den: f64 = obs.iter().map(|o| (o - m).powi(2)).sum();
    Ok(1.0 - num / den)
}

/// Kling-Gupta efficiency `1 - sqrt((r-1)^2 + (alpha-1)^2 + (beta-1)^2)`,
/// with `alpha` the ratio of standard deviations and `beta` of means.
pub fn kge(sim: &[f64], obs: &[f64]) -> Result<f64> {
    check(sim, obs)?;
    // a constant simulation has no defined correlation; treat it as r = 0
    let r = pearson(sim, obs).unwrap_or(0.0);
    let alpha = (pop_variance(sim) / pop_variance(obs)).sqrt();
    let mo = mean(obs);
    if mo == 0.0 {
        return Err(Error::Degenerate("observed mean is zero".into()));
    }
    let beta = mean(sim) / mo;
    Ok(1.0 - ((r - 1.0).powi(2) + (alpha - 1.0).powi(2) + (beta - 1.0).powi(2)).sqrt())
}
