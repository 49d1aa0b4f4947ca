//! Concordance between methods: ranking tables, Kendall's W and pairwise
//! correlation of scaled measures.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::space::{scale_to_unit_sum, Matrix, SensitivityResult};
use crate::stats::{average_ranks, pearson, spearman};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingTable {
    pub params: Vec<String>,
    pub methods: Vec<String>,
    /// K x M, each column sums to one.
    pub scaled: Matrix,
    /// K x M, rank 1 is the most important; ties share their average rank.
    pub ranks: Matrix,
}

fn rank_column(col: &[f64]) -> Vec<f64> {
    let neg: Vec<f64> = col.iter().map(|v| -v).collect();
    average_ranks(&neg)
}

impl RankingTable {
    /// Builds a table from per-method columns of nonnegative measures,
    /// rescaling each column to unit sum. An all-zero column stays zero.
    pub fn from_columns(params: Vec<String>, methods: Vec<String>, columns: &[Vec<f64>]) -> Result<Self> {
        let k = params.len();
        if columns.len() != methods.len() {
            return Err(Error::Structural("one column per method required".into()));
        }
        let mut scaled = Matrix::zeros(k, methods.len());
        let mut ranks = Matrix::zeros(k, methods.len());
        for (j, col) in columns.iter().enumerate() {
            if col.len() != k {
                return Err(Error::Structural(format!(
                    "method {} has {} values for {k} parameters",
                    methods[j],
                    col.len()
                )));
            }
            let s = match scale_to_unit_sum(col) {
                Ok(s) => s,
                Err(Error::Degenerate(_)) => vec![0.0; k],
                Err(e) => return Err(e),
            };
            for (i, (v, r)) in s.iter().zip(rank_column(&s)).enumerate() {
                scaled.set(i, j, *v);
                ranks.set(i, j, r);
            }
        }
        Ok(Self {
            params,
            methods,
            scaled,
            ranks,
        })
    }

    pub fn from_results(params: Vec<String>, results: &[SensitivityResult]) -> Result<Self> {
        let methods = results.iter().map(|r| r.method.to_string()).collect();
        let cols: Vec<Vec<f64>> = results.iter().map(|r| r.scaled.clone()).collect();
        Self::from_columns(params, methods, &cols)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.scaled.column(j)
    }

    /// CSV with a `param` column followed by one column per method.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.len() < 2 || &header[0] != "param" {
            return Err(Error::Structural("ranking table needs a `param` column and method columns".into()));
        }
        let methods: Vec<String> = header.iter().skip(1).map(String::from).collect();
        let mut params = Vec::new();
        let mut cols = vec![Vec::new(); methods.len()];
        for rec in rdr.records() {
            let rec = rec?;
            params.push(rec[0].to_string());
            for (j, col) in cols.iter_mut().enumerate() {
                let v: f64 = rec[j + 1]
                    .trim()
                    .parse()
                    .map_err(|_| Error::Structural(format!("bad number {:?} in ranking table", &rec[j + 1])))?;
                col.push(v);
            }
        }
        Self::from_columns(params, methods, &cols)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["param".to_string()];
        header.extend(self.methods.iter().cloned());
        w.write_record(&header)?;
        for (i, p) in self.params.iter().enumerate() {
            let mut rec = vec![p.clone()];
            rec.extend(self.scaled.row(i).iter().map(|v| format!("{v}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KendallW {
    pub w: f64,
    pub chi_sq: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Tie-corrected coefficient of concordance across the method columns,
/// `W = 12 S / (m^2 (n^3 - n) - m T)` with `T = sum (t^3 - t)` over tie
/// groups.
pub fn kendalls_w(table: &RankingTable) -> Result<KendallW> {
    let n = table.params.len();
    let m = table.methods.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("{n} items cannot be ranked")));
    }
    if m < 2 {
        return Err(Error::InsufficientData("concordance needs at least two methods".into()));
    }
    if n < 3 {
        log::warn!("chi-squared approximation is poor with fewer than three items");
    }
    let sums: Vec<f64> = (0..n).map(|i| table.ranks.row(i).iter().sum()).collect();
    let mean = m as f64 * (n as f64 + 1.0) / 2.0;
    let s: f64 = sums.iter().map(|r| (r - mean).powi(2)).sum();
    let mut ties = 0.0;
    for j in 0..m {
        let mut col = table.ranks.column(j);
        col.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < n {
            let mut e = i;
            while e + 1 < n && col[e + 1] == col[i] {
                e += 1;
            }
            let t = (e - i + 1) as f64;
            ties += t.powi(3) - t;
            i = e + 1;
        }
    }
    let (mf, nf) = (m as f64, n as f64);
    let denom = mf * mf * (nf.powi(3) - nf) - mf * ties;
    if denom <= 0.0 {
        return Err(Error::Degenerate("every method ties all items".into()));
    }
    let w = (12.0 * s / denom).clamp(0.0, 1.0);
    let dof = n - 1;
    let chi_sq = mf * (nf - 1.0) * w;
    let p_value = ChiSquared::new(dof as f64)
        .map(|d| d.sf(chi_sq))
        .map_err(|e| Error::Domain(e.to_string()))?;
    Ok(KendallW {
        w,
        chi_sq,
        dof,
        p_value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Correlation {
    #[default]
    Pearson,
    Spearman,
}

/// M x M correlations between method columns; `None` marks pairs where a
/// column has zero variance.
pub fn pairwise(table: &RankingTable, kind: Correlation) -> Result<Vec<Vec<Option<f64>>>> {
    let m = table.methods.len();
    if m < 2 {
        return Err(Error::InsufficientData("correlation needs at least two methods".into()));
    }
    let cols: Vec<Vec<f64>> = (0..m).map(|j| table.column(j)).collect();
    let f = match kind {
        Correlation::Pearson => pearson,
        Correlation::Spearman => spearman,
    };
    Ok((0..m)
        .map(|a| (0..m).map(|b| f(&cols[a], &cols[b]).map(|r| if a == b { 1.0 } else { r })).collect())
        .collect())
}

pub fn pairwise_pearson(table: &RankingTable) -> Result<Vec<Vec<Option<f64>>>> {
    pairwise(table, Correlation::Pearson)
}

pub fn pairwise_spearman(table: &RankingTable) -> Result<Vec<Vec<Option<f64>>>> {
    pairwise(table, Correlation::Spearman)
}
