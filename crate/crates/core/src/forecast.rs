//! One-step-ahead forecast series shared by every model.

use std::io::Write;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRow {
    pub week: usize,
    pub actual: u64,
    pub point: Option<f64>,
    pub median: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl ForecastRow {
    pub fn missing(week: usize, actual: u64) -> Self {
        Self {
            week,
            actual,
            point: None,
            median: None,
            lower: None,
            upper: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSeries {
    pub model: String,
    pub rows: Vec<ForecastRow>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    week: usize,
    actual: u64,
    point: Option<f64>,
    lower: Option<f64>,
    upper: Option<f64>,
    model: &'a str,
}

impl ForecastSeries {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// First week with a defined point forecast.
    pub fn defined_from(&self) -> Option<usize> {
        self.rows.iter().find(|r| r.point.is_some()).map(|r| r.week)
    }

    pub fn actuals(&self) -> Vec<u64> {
        self.rows.iter().map(|r| r.actual).collect()
    }

    pub fn points(&self) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.point).collect()
    }

    /// CSV with columns `week,actual,point,lower,upper,model`; undefined
    /// values are empty fields.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        write_forecasts_csv(std::slice::from_ref(self), out)
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

/// Several forecasts in one long-format CSV, in the order given.
pub fn write_forecasts_csv<W: Write>(all: &[ForecastSeries], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if all.iter().all(|f| f.rows.is_empty()) {
        w.write_record(["week", "actual", "point", "lower", "upper", "model"])?;
    }
    for f in all {
        for r in &f.rows {
            w.serialize(CsvRow {
                week: r.week,
                actual: r.actual,
                point: r.point,
                lower: r.lower,
                upper: r.upper,
                model: &f.model,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}
