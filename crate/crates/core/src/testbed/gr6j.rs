//! GR6J daily rainfall-runoff model: production store, two unit
//! hydrographs, routing store, exponential store and a direct branch.

use serde::{Deserialize, Serialize};

use super::forcing::Forcing;
use crate::error::{Error, Result};
use crate::space::{ParameterDef, ParameterSpace};

/// Default spin-up length in days.
pub const WARMUP_DAYS: usize = 365;

const BOUNDS: [(&str, f64, f64); 6] = [
    ("x1", 0.0, 1460.0),
    ("x2", -1.8, 2.51),
    ("x3", 0.99, 983.52),
    ("x4", 0.84, 19.56),
    ("x5", -2.0, 2.0),
    ("x6", 0.31, 262.43),
];

/// Daily output names, in `Gr6jDailyOutputs::values` order.
pub const OUTPUT_NAMES: [&str; 13] = [
    "Pn", "Ps", "AE", "Perc", "PR", "Q9", "Q1", "Rout", "Exp", "QRExp", "QR", "QD", "Qsim",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gr6jParams {
    /// Production store capacity (mm).
    pub x1: f64,
    /// Exchange coefficient.
    pub x2: f64,
    /// Routing store capacity (mm).
    pub x3: f64,
    /// Unit hydrograph time base (days).
    pub x4: f64,
    /// Exchange threshold.
    pub x5: f64,
    /// Exponential store depletion coefficient (mm).
    pub x6: f64,
}

impl Gr6jParams {
    pub fn new(x: &[f64]) -> Result<Self> {
        if x.len() != 6 {
            return Err(Error::Structural(format!("GR6J takes 6 parameters, got {}", x.len())));
        }
        for (v, (name, lo, hi)) in x.iter().zip(BOUNDS) {
            if !(v.is_finite() && *v >= lo && *v <= hi) {
                return Err(Error::Domain(format!("{name} = {v} outside [{lo}, {hi}]")));
            }
        }
        Ok(Self {
            x1: x[0],
            x2: x[1],
            x3: x[2],
            x4: x[3],
            x5: x[4],
            x6: x[5],
        })
    }

    /// The calibration ranges used for sampling.
    pub fn space() -> ParameterSpace {
        ParameterSpace::new(
            BOUNDS
                .iter()
                .map(|&(n, lo, hi)| ParameterDef::new(n, lo, hi).expect("static bounds"))
                .collect(),
        )
        .expect("static bounds")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gr6jState {
    pub s: f64,
    pub r1: f64,
    pub r2: f64,
    pub uh1: Vec<f64>,
    pub uh2: Vec<f64>,
}

impl Gr6jState {
    /// `s = 0.3 x1`, `r1 = 0.5 x3`, `r2 = 0` and empty hydrograph buffers.
    pub fn initial(p: &Gr6jParams) -> Self {
        Self {
            s: 0.3 * p.x1,
            r1: 0.5 * p.x3,
            r2: 0.0,
            uh1: vec![0.0; p.x4.ceil() as usize],
            uh2: vec![0.0; (2.0 * p.x4).ceil() as usize],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gr6jDailyOutputs {
    pub pn: f64,
    pub en: f64,
    pub ps: f64,
    pub es: f64,
    pub ae: f64,
    pub perc: f64,
    pub pr: f64,
    pub q9: f64,
    pub q1: f64,
    pub exch: f64,
    pub rout: f64,
    pub exp: f64,
    pub qrexp: f64,
    pub qr: f64,
    pub qd: f64,
    pub qsim: f64,
}

impl Gr6jDailyOutputs {
    pub fn values(&self) -> [f64; 13] {
        [
            self.pn, self.ps, self.ae, self.perc, self.pr, self.q9, self.q1, self.rout, self.exp, self.qrexp,
            self.qr, self.qd, self.qsim,
        ]
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        OUTPUT_NAMES.iter().position(|n| *n == name).map(|i| self.values()[i])
    }
}

fn sh1(t: f64, x4: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t < x4 {
        (t / x4).powf(2.5)
    } else {
        1.0
    }
}

fn sh2(t: f64, x4: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t < x4 {
        0.5 * (t / x4).powf(2.5)
    } else if t < 2.0 * x4 {
        1.0 - 0.5 * (2.0 - t / x4).powf(2.5)
    } else {
        1.0
    }
}

/// Unit hydrograph ordinates for UH1 (base `x4`) and UH2 (base `2 x4`).
pub fn uh_ordinates(x4: f64) -> (Vec<f64>, Vec<f64>) {
    let n1 = x4.ceil() as usize;
    let n2 = (2.0 * x4).ceil() as usize;
    let o1 = (1..=n1).map(|j| sh1(j as f64, x4) - sh1(j as f64 - 1.0, x4)).collect();
    let o2 = (1..=n2).map(|j| sh2(j as f64, x4) - sh2(j as f64 - 1.0, x4)).collect();
    (o1, o2)
}

fn convolve(buf: &mut [f64], ord: &[f64], input: f64) -> f64 {
    let n = buf.len();
    for k in 0..n - 1 {
        buf[k] = buf[k + 1] + ord[k] * input;
    }
    buf[n - 1] = ord[n - 1] * input;
    buf[0]
}

fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Routing store outflow for a store level `r` and capacity `x3`.
pub fn routing_outflow(r: f64, x3: f64) -> f64 {
    r * (1.0 - (1.0 + (r / x3).powi(4)).powf(-0.25))
}

/// Exponential store outflow for a level `r2` and coefficient `x6`.
pub fn exponential_outflow(r2: f64, x6: f64) -> f64 {
    x6 * softplus(r2 / x6)
}

/// One day. `ords` are the hydrograph ordinates from [`uh_ordinates`].
pub fn gr6j_step_with(state: &mut Gr6jState, p: f64, e: f64, params: &Gr6jParams, ords: &(Vec<f64>, Vec<f64>)) -> Gr6jDailyOutputs {
    let x1 = params.x1;
    let (pn, en) = ((p - e).max(0.0), (e - p).max(0.0));
    let (mut ps, mut es, mut perc) = (0.0, 0.0, 0.0);
    if x1 > 1e-9 {
        if pn > 0.0 {
            let t = (pn / x1).min(13.0).tanh();
            let sr = state.s / x1;
            ps = x1 * (1.0 - sr * sr) * t / (1.0 + sr * t);
            state.s += ps;
        }
        if en > 0.0 {
            let t = (en / x1).min(13.0).tanh();
            let sr = state.s / x1;
            es = state.s * (2.0 - sr) * t / (1.0 + (1.0 - sr) * t);
            state.s -= es;
        }
        state.s = state.s.clamp(0.0, x1);
        perc = state.s * (1.0 - (1.0 + (4.0 * state.s / (9.0 * x1)).powi(4)).powf(-0.25));
        state.s -= perc;
    } else {
        state.s = 0.0;
    }
    let ae = es + p.min(e);
    let pr = perc + (pn - ps);

    let q9 = convolve(&mut state.uh1, &ords.0, 0.9 * pr);
    let q1 = convolve(&mut state.uh2, &ords.1, 0.1 * pr);

    let f = params.x2 * (state.r1 / params.x3 - params.x5);
    state.r1 = (state.r1 + 0.6 * q9 + f).max(0.0);
    let qr = routing_outflow(state.r1, params.x3);
    state.r1 -= qr;

    state.r2 += 0.4 * q9 + f;
    let qrexp = exponential_outflow(state.r2, params.x6);
    state.r2 -= qrexp;

    // Direct branch in the standard GR form. A variant printed as
    // "Qd = Q1 - F if Q1+F>0 else 2Q1" does not conserve water and is not used.
    let qd = (q1 + f).max(0.0);
    Gr6jDailyOutputs {
        pn,
        en,
        ps,
        es,
        ae,
        perc,
        pr,
        q9,
        q1,
        exch: f,
        rout: state.r1,
        exp: state.r2,
        qrexp,
        qr,
        qd,
        qsim: qr + qrexp + qd,
    }
}

pub fn gr6j_step(state: &mut Gr6jState, p: f64, e: f64, params: &Gr6jParams) -> Gr6jDailyOutputs {
    gr6j_step_with(state, p, e, params, &uh_ordinates(params.x4))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gr6jSeries {
    pub days: Vec<Gr6jDailyOutputs>,
    /// Leading days that belong to the spin-up.
    pub warmup: usize,
}

impl Gr6jSeries {
    pub fn is_spinup(&self, day: usize) -> bool {
        day < self.warmup
    }

    /// Values of one named output from the first post-spin-up day on.
    pub fn series(&self, name: &str) -> Option<Vec<f64>> {
        let i = OUTPUT_NAMES.iter().position(|n| *n == name)?;
        Some(self.days[self.warmup..].iter().map(|d| d.values()[i]).collect())
    }
}

pub fn gr6j_run(params: &Gr6jParams, forcing: &Forcing, warmup: usize) -> Result<Gr6jSeries> {
    if forcing.len() <= warmup {
        return Err(Error::InsufficientData(format!(
            "{} forcing days do not exceed the {warmup}-day spin-up",
            forcing.len()
        )));
    }
    if let Some(i) = (0..forcing.len()).find(|&i| !(forcing.precip[i] >= 0.0 && forcing.pet[i] >= 0.0)) {
        return Err(Error::Domain(format!("negative or missing forcing on day {i}")));
    }
    let ords = uh_ordinates(params.x4);
    let mut state = Gr6jState::initial(params);
    let days = forcing
        .precip
        .iter()
        .zip(&forcing.pet)
        .map(|(&p, &e)| gr6j_step_with(&mut state, p, e, params, &ords))
        .collect();
    Ok(Gr6jSeries { days, warmup })
}
