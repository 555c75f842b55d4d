use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::experiments::{rate_regression, RateError};

/// One row of a convergence history. Squared quantities throughout.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub ndof: usize,
    pub eta2: f64,
    pub res2: f64,
    pub osc_space2: f64,
    pub osc_time2: f64,
    pub init2: f64,
    #[serde(rename = "errU")]
    pub err_u: Option<f64>,
    #[serde(rename = "errSigma")]
    pub err_sigma: Option<f64>,
    #[serde(rename = "errUhat")]
    pub err_uhat: Option<f64>,
    #[serde(rename = "errGamma0")]
    pub err_gamma0: Option<f64>,
    pub seconds: f64,
}

/// Selects a column of [`RunRecord`] for regression and plotting.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quantity {
    Eta2,
    Res2,
    ErrU,
    ErrSigma,
    ErrUhat,
    ErrGamma0,
}

impl Quantity {
    pub const ALL: [Quantity; 6] =
        [Quantity::Eta2, Quantity::Res2, Quantity::ErrU, Quantity::ErrSigma, Quantity::ErrUhat, Quantity::ErrGamma0];

    pub fn name(self) -> &'static str {
        match self {
            Quantity::Eta2 => "eta2",
            Quantity::Res2 => "res2",
            Quantity::ErrU => "errU",
            Quantity::ErrSigma => "errSigma",
            Quantity::ErrUhat => "errUhat",
            Quantity::ErrGamma0 => "errGamma0",
        }
    }

    pub fn get(self, r: &RunRecord) -> Option<f64> {
        match self {
            Quantity::Eta2 => Some(r.eta2),
            Quantity::Res2 => Some(r.res2),
            Quantity::ErrU => r.err_u,
            Quantity::ErrSigma => r.err_sigma,
            Quantity::ErrUhat => r.err_uhat,
            Quantity::ErrGamma0 => r.err_gamma0,
        }
    }

    /// `(ndof, value)` for every record carrying this quantity.
    pub fn series(self, records: &[RunRecord]) -> Vec<(f64, f64)> {
        records.iter().filter_map(|r| self.get(r).map(|v| (r.ndof as f64, v))).collect()
    }
}

/// Convergence rate of a quantity over a history (`-slope` in log-log).
pub fn rate(records: &[RunRecord], q: Quantity) -> Result<f64, RateError> {
    rate_regression(&q.series(records))
}

pub fn write_csv<W: io::Write>(records: &[RunRecord], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: io::Read>(input: R) -> Result<Vec<RunRecord>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}

pub fn write_csv_file(records: &[RunRecord], path: &Path) -> Result<(), csv::Error> {
    write_csv(records, std::fs::File::create(path)?)
}
