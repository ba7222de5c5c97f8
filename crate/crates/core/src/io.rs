//! CSV readers and writers shared by the library and the command line.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{ArhmmError, Result};
use crate::series::Series;
use crate::stats::HedgingErrorStats;

/// Dated univariate log-returns.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    pub dates: Vec<String>,
    pub values: Vec<f64>,
}

impl ReturnSeries {
    pub fn new(dates: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(ArhmmError::InvalidInput(
                "dates and returns differ in length".into(),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(ArhmmError::InvalidInput(format!(
                "return on {} is not finite",
                dates[i]
            )));
        }
        Ok(Self { dates, values })
    }

    /// Undated returns labelled `0, 1, ...`.
    pub fn undated(values: Vec<f64>) -> Result<Self> {
        Self::new((0..values.len()).map(|i| i.to_string()).collect(), values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn series(&self) -> Series {
        Series::univariate(self.values.clone())
    }

    pub fn position(&self, date: &str) -> Option<usize> {
        self.dates.iter().position(|d| d == date)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ReturnRow {
    date: String,
    logret: f64,
}

/// Reads `date,logret` rows.
pub fn read_returns<R: Read>(r: R) -> Result<ReturnSeries> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut dates = Vec::new();
    let mut values = Vec::new();
    for row in rdr.deserialize::<ReturnRow>() {
        let row = row?;
        dates.push(row.date);
        values.push(row.logret);
    }
    if values.is_empty() {
        return Err(ArhmmError::InvalidInput("returns file has no rows".into()));
    }
    ReturnSeries::new(dates, values)
}

pub fn write_returns<W: Write>(w: W, returns: &ReturnSeries) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for (date, &logret) in returns.dates.iter().zip(&returns.values) {
        wtr.serialize(ReturnRow {
            date: date.clone(),
            logret,
        })?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads `date` followed by one numeric column per dimension; column names are free.
pub fn read_observations<R: Read>(r: R) -> Result<(Vec<String>, Series)> {
    let mut rdr = csv::Reader::from_reader(r);
    let d = rdr.headers()?.len().saturating_sub(1);
    if d == 0 {
        return Err(ArhmmError::InvalidInput(
            "observations need a date column and at least one value column".into(),
        ));
    }
    let mut dates = Vec::new();
    let mut data = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let date = rec.get(0).unwrap_or_default().to_string();
        for k in 1..=d {
            let cell = rec.get(k).unwrap_or_default().trim();
            let v: f64 = cell
                .parse()
                .map_err(|_| ArhmmError::InvalidInput(format!("bad value '{cell}' on {date}")))?;
            if !v.is_finite() {
                return Err(ArhmmError::InvalidInput(format!(
                    "value on {date} is not finite"
                )));
            }
            data.push(v);
        }
        dates.push(date);
    }
    if dates.is_empty() {
        return Err(ArhmmError::InvalidInput(
            "observations file has no rows".into(),
        ));
    }
    Ok((dates, Series::new(d, data)?))
}

/// Writes `date,logret` for one dimension and `date,logret1,logret2,...` otherwise.
pub fn write_observations<W: Write>(w: W, dates: &[String], y: &Series) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let d = y.dim();
    let mut header = vec!["date".to_string()];
    if d == 1 {
        header.push("logret".into());
    } else {
        header.extend((1..=d).map(|k| format!("logret{k}")));
    }
    wtr.write_record(&header)?;
    for (t, date) in dates.iter().enumerate() {
        let mut rec = vec![date.clone()];
        rec.extend(y.row(t).iter().map(|v| format!("{v:?}")));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Filtered regime probabilities with the most probable regime, one row per date.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeProbabilities {
    pub dates: Vec<String>,
    pub probs: Vec<Vec<f64>>,
    pub most_probable: Vec<usize>,
}

/// Header `date,p0,...,p{l-1},regime`.
pub fn write_regime_probabilities<W: Write>(w: W, rp: &RegimeProbabilities) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let l = rp.probs.first().map_or(0, Vec::len);
    let mut header = vec!["date".to_string()];
    header.extend((0..l).map(|i| format!("p{i}")));
    header.push("regime".into());
    wtr.write_record(&header)?;
    for ((d, p), m) in rp.dates.iter().zip(&rp.probs).zip(&rp.most_probable) {
        let mut rec = vec![d.clone()];
        rec.extend(p.iter().map(|v| format!("{v:?}")));
        rec.push(m.to_string());
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_regime_probabilities<R: Read>(r: R) -> Result<RegimeProbabilities> {
    let mut rdr = csv::Reader::from_reader(r);
    let l = rdr.headers()?.len().saturating_sub(2);
    let mut out = RegimeProbabilities {
        dates: Vec::new(),
        probs: Vec::new(),
        most_probable: Vec::new(),
    };
    let bad = |c: &str| ArhmmError::InvalidInput(format!("bad cell '{c}' in regime probabilities"));
    for rec in rdr.records() {
        let rec = rec?;
        out.dates.push(rec.get(0).unwrap_or_default().to_string());
        let p = (1..=l)
            .map(|k| {
                let c = rec.get(k).unwrap_or_default();
                c.parse::<f64>().map_err(|_| bad(c))
            })
            .collect::<Result<Vec<_>>>()?;
        out.probs.push(p);
        let c = rec.get(l + 1).unwrap_or_default();
        out.most_probable.push(c.parse().map_err(|_| bad(c))?);
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct RegimeRow {
    date: String,
    regime: usize,
}

/// `date,regime` rows, regimes zero-based.
pub fn write_regimes<W: Write>(w: W, dates: &[String], regimes: &[usize]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for (date, &regime) in dates.iter().zip(regimes) {
        wtr.serialize(RegimeRow {
            date: date.clone(),
            regime,
        })?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_regimes<R: Read>(r: R) -> Result<(Vec<String>, Vec<usize>)> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut dates = Vec::new();
    let mut regimes = Vec::new();
    for row in rdr.deserialize::<RegimeRow>() {
        let row = row?;
        dates.push(row.date);
        regimes.push(row.regime);
    }
    Ok((dates, regimes))
}

/// Named numeric columns of equal length, written with a leading integer index column.
pub fn write_columns<W: Write>(w: W, index: &str, columns: &[(String, Vec<f64>)]) -> Result<()> {
    let rows = columns.first().map_or(0, |c| c.1.len());
    if columns.iter().any(|c| c.1.len() != rows) {
        return Err(ArhmmError::InvalidInput("columns differ in length".into()));
    }
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec![index.to_string()];
    header.extend(columns.iter().map(|c| c.0.clone()));
    wtr.write_record(&header)?;
    for k in 0..rows {
        let mut rec = vec![k.to_string()];
        rec.extend(columns.iter().map(|c| format!("{:?}", c.1[k])));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_columns<R: Read>(r: R) -> Result<Vec<(String, Vec<f64>)>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut cols: Vec<(String, Vec<f64>)> = rdr
        .headers()?
        .iter()
        .skip(1)
        .map(|h| (h.to_string(), Vec::new()))
        .collect();
    for rec in rdr.records() {
        let rec = rec?;
        for (k, (_, v)) in cols.iter_mut().enumerate() {
            let c = rec.get(k + 1).unwrap_or_default();
            v.push(
                c.parse()
                    .map_err(|_| ArhmmError::InvalidInput(format!("bad number '{c}'")))?,
            );
        }
    }
    Ok(cols)
}

/// Estimation summary written next to the fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub regimes: usize,
    pub dim: usize,
    pub observations: usize,
    pub log_lik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub restarts: usize,
    /// Same regime count with the autoregression removed.
    pub hmm_log_lik: f64,
    pub lrt_statistic: f64,
    pub lrt_df: usize,
    pub lrt_p_value: f64,
}

/// One row of the goodness-of-fit table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofRow {
    pub regimes: usize,
    pub s_n: f64,
    pub p_value: f64,
    pub n_boot: usize,
    pub dropped: usize,
}

/// Goodness-of-fit output: the last tested regime count up front, every tested count in
/// `table`, and the selected count when selecting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    pub s_n: f64,
    pub p_value: f64,
    pub table: Vec<GofRow>,
    pub selected: Option<usize>,
}

/// Row sets of the statistics tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatsLayout {
    /// Simulation study: mean, median, volatility, skewness, kurtosis, min, max, VaR 1%,
    /// VaR 99%, RMSE.
    Simulation,
    /// Market backtest: RMSE, Bias, VaR 1%, Median, VaR 99%.
    Backtest,
}

impl StatsLayout {
    pub fn rows(self) -> &'static [&'static str] {
        match self {
            StatsLayout::Simulation => &[
                "Mean",
                "Median",
                "Volatility",
                "Skewness",
                "Kurtosis",
                "Min",
                "Max",
                "VaR 1%",
                "VaR 99%",
                "RMSE",
            ],
            StatsLayout::Backtest => &["RMSE", "Bias", "VaR 1%", "Median", "VaR 99%"],
        }
    }
}

fn stat_value(s: &HedgingErrorStats, row: &str) -> f64 {
    match row {
        "Mean" => s.mean,
        "Median" => s.median,
        "Volatility" => s.volatility,
        "Skewness" => s.skewness,
        "Kurtosis" => s.kurtosis,
        "Min" => s.min,
        "Max" => s.max,
        "VaR 1%" => s.var01,
        "VaR 99%" => s.var99,
        "RMSE" => s.rmse,
        "Bias" => s.bias,
        _ => unreachable!("unknown row {row}"),
    }
}

fn set_stat(s: &mut HedgingErrorStats, row: &str, v: f64) -> Result<()> {
    match row {
        "Mean" => s.mean = v,
        "Median" => s.median = v,
        "Volatility" => s.volatility = v,
        "Skewness" => s.skewness = v,
        "Kurtosis" => s.kurtosis = v,
        "Min" => s.min = v,
        "Max" => s.max = v,
        "VaR 1%" => s.var01 = v,
        "VaR 99%" => s.var99 = v,
        "RMSE" => s.rmse = v,
        "Bias" => s.bias = v,
        other => {
            return Err(ArhmmError::InvalidInput(format!(
                "unknown statistic '{other}'"
            )))
        }
    }
    Ok(())
}

/// Writes one row per statistic and one column per strategy. Values use the shortest
/// representation that reads back exactly.
pub fn write_stats_table<W: Write>(
    w: W,
    layout: StatsLayout,
    columns: &[(String, HedgingErrorStats)],
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["statistic".to_string()];
    header.extend(columns.iter().map(|(n, _)| n.clone()));
    wtr.write_record(&header)?;
    for row in layout.rows() {
        let mut rec = vec![row.to_string()];
        rec.extend(
            columns
                .iter()
                .map(|(_, s)| format!("{:?}", stat_value(s, row))),
        );
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a table written by [`write_stats_table`]. Statistics absent from the file stay at
/// zero; `count` is not stored.
pub fn read_stats_table<R: Read>(r: R) -> Result<Vec<(String, HedgingErrorStats)>> {
    let mut rdr = csv::Reader::from_reader(r);
    let names: Vec<String> = rdr.headers()?.iter().skip(1).map(str::to_string).collect();
    let mut out: Vec<(String, HedgingErrorStats)> = names
        .into_iter()
        .map(|n| (n, HedgingErrorStats::default()))
        .collect();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec.get(0).unwrap_or_default().to_string();
        for (k, (_, st)) in out.iter_mut().enumerate() {
            let cell = rec
                .get(k + 1)
                .ok_or_else(|| ArhmmError::InvalidInput(format!("short row '{row}'")))?;
            let v: f64 = cell.trim().parse().map_err(|_| {
                ArhmmError::InvalidInput(format!("bad number '{cell}' in row '{row}'"))
            })?;
            set_stat(st, &row, v)?;
        }
    }
    Ok(out)
}
