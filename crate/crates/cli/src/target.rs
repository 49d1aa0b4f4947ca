use chrono::NaiveDate;
use rayon::prelude::*;

use sensa_core::adapter::run_batch;
use sensa_core::testbed::{eval_analytic, gr6j_run, kge, synthetic_forcing, Forcing, Gr6jParams, OUTPUT_NAMES};
use sensa_core::{DesignMatrix, Matrix, OutputMatrix};

use crate::config::{Study, Target};
use crate::error::CliError;

/// Evaluate the configured target on every design row.
pub fn evaluate(study: &Study, design: &DesignMatrix, jobs: Option<usize>) -> Result<OutputMatrix, CliError> {
    match &study.cfg.target {
        Target::Builtin { function } => {
            let y = eval_analytic(function, &design.unit)?;
            Ok(OutputMatrix::single("y", y)?)
        }
        Target::Gr6j { date, .. } => {
            let mut v = gr6j_dates(study, design, &[*date])?;
            Ok(v.remove(0))
        }
        Target::External { simulator } => {
            let mut spec = simulator.clone();
            if let Some(j) = jobs {
                spec.max_parallel = j;
            }
            Ok(run_batch(&spec, &study.space, design)?)
        }
    }
}

pub fn load_forcing(study: &Study) -> Result<Forcing, CliError> {
    let Target::Gr6j { forcing, synthetic, .. } = &study.cfg.target else {
        return Err(CliError::Config("target is not gr6j".into()));
    };
    match forcing {
        Some(p) => {
            let path = study.base.join(p);
            let f = std::fs::File::open(&path)
                .map_err(|e| CliError::Config(format!("cannot open forcing {}: {e}", path.display())))?;
            Ok(Forcing::read_csv(f)?)
        }
        None => Ok(synthetic_forcing(synthetic.start, synthetic.days, synthetic.seed)),
    }
}

/// Day index of `date`, which must fall after the spin-up.
pub fn day_index(forcing: &Forcing, date: NaiveDate, warmup: usize) -> Result<usize, CliError> {
    let i = forcing.index_of(date).ok_or_else(|| {
        CliError::Config(format!(
            "date {date} is outside the forcing period {} .. {}",
            forcing.dates[0],
            forcing.dates[forcing.len() - 1]
        ))
    })?;
    if i < warmup {
        return Err(CliError::Config(format!(
            "date {date} falls inside the {warmup}-day spin-up"
        )));
    }
    Ok(i)
}

/// GR6J outputs at each of `dates`, one matrix per date.
pub fn gr6j_dates(study: &Study, design: &DesignMatrix, dates: &[NaiveDate]) -> Result<Vec<OutputMatrix>, CliError> {
    let Target::Gr6j { warmup, kge: kge_opts, .. } = &study.cfg.target else {
        return Err(CliError::Config("time-varying analysis needs the gr6j target".into()));
    };
    let forcing = load_forcing(study)?;
    let idx: Vec<usize> = dates
        .iter()
        .map(|d| day_index(&forcing, *d, *warmup))
        .collect::<Result<_, _>>()?;
    let qsim = OUTPUT_NAMES.iter().position(|n| *n == "Qsim").unwrap();
    let window = match kge_opts {
        Some(k) => {
            let a = day_index(&forcing, k.start, *warmup)?;
            let b = day_index(&forcing, k.end, *warmup)?;
            if b <= a {
                return Err(CliError::Config("KGE window end must follow its start".into()));
            }
            let reference = Gr6jParams::new(&k.reference)?;
            let obs: Vec<f64> = gr6j_run(&reference, &forcing, *warmup)?.days[a..=b]
                .iter()
                .map(|d| d.values()[qsim])
                .collect();
            Some((a, b, obs))
        }
        None => None,
    };
    let mut names: Vec<String> = OUTPUT_NAMES.iter().map(|s| s.to_string()).collect();
    if window.is_some() {
        names.push("KGE".into());
    }
    let m = names.len();
    let rows: Vec<Vec<Vec<f64>>> = (0..design.nrows())
        .into_par_iter()
        .map(|i| -> Result<Vec<Vec<f64>>, CliError> {
            let p = Gr6jParams::new(design.mapped.row(i))?;
            let s = gr6j_run(&p, &forcing, *warmup)?;
            let k = match &window {
                Some((a, b, obs)) => {
                    let sim: Vec<f64> = s.days[*a..=*b].iter().map(|d| d.values()[qsim]).collect();
                    Some(kge(&sim, obs).unwrap_or(f64::NAN))
                }
                None => None,
            };
            Ok(idx
                .iter()
                .map(|&d| {
                    let mut v = s.days[d].values().to_vec();
                    v.extend(k);
                    v
                })
                .collect())
        })
        .collect::<Result<_, _>>()?;
    (0..dates.len())
        .map(|t| {
            let mut vals = Matrix::zeros(rows.len(), m);
            for (i, r) in rows.iter().enumerate() {
                vals.row_mut(i).copy_from_slice(&r[t]);
            }
            Ok(OutputMatrix::new(vals, names.clone())?)
        })
        .collect()
}
