use std::io::{Read, Write};

use chrono::{Datelike, NaiveDate};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::stream_rng;

/// Daily precipitation and potential evapotranspiration (mm/d).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forcing {
    pub dates: Vec<NaiveDate>,
    pub precip: Vec<f64>,
    pub pet: Vec<f64>,
}

#[derive(Deserialize, Serialize)]
struct Row {
    date: NaiveDate,
    precip_mm: f64,
    pet_mm: f64,
}

impl Forcing {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    /// Reads `date,precip_mm,pet_mm` with strictly consecutive days.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut f = Forcing {
            dates: Vec::new(),
            precip: Vec::new(),
            pet: Vec::new(),
        };
        for row in rdr.deserialize() {
            let row: Row = row?;
            if let Some(&last) = f.dates.last() {
                if last.succ_opt() != Some(row.date) {
                    return Err(Error::Structural(format!("forcing dates jump from {last} to {}", row.date)));
                }
            }
            if !(row.precip_mm >= 0.0 && row.pet_mm >= 0.0) {
                return Err(Error::Domain(format!("negative or missing forcing on {}", row.date)));
            }
            f.dates.push(row.date);
            f.precip.push(row.precip_mm);
            f.pet.push(row.pet_mm);
        }
        if f.is_empty() {
            return Err(Error::NoData("forcing file has no rows".into()));
        }
        Ok(f)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for i in 0..self.len() {
            w.serialize(Row {
                date: self.dates[i],
                precip_mm: self.precip[i],
                pet_mm: self.pet[i],
            })?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Seeded synthetic climate: a seasonal PET sinusoid and a storm process
/// with seasonal wet-day probability and exponential depths.
pub fn synthetic_forcing(start: NaiveDate, days: usize, seed: u64) -> Forcing {
    let mut rng = stream_rng(seed, 0);
    let mut dates = Vec::with_capacity(days);
    let mut precip = Vec::with_capacity(days);
    let mut pet = Vec::with_capacity(days);
    let mut d = start;
    for _ in 0..days {
        let phase = 2.0 * std::f64::consts::PI * (d.ordinal0() as f64 - 105.0) / 365.25;
        pet.push((2.2 + 1.8 * phase.sin()).max(0.05));
        let p_wet = 0.45 - 0.15 * phase.sin();
        let depth = if rng.random::<f64>() < p_wet {
            let u: f64 = rng.random();
            -6.0 * (1.0 - u).ln()
        } else {
            0.0
        };
        precip.push(depth);
        dates.push(d);
        d = d.succ_opt().expect("date in range");
    }
    Forcing { dates, precip, pet }
}
