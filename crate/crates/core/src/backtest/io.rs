//! Quote, trade and cumulative P&L files.

use std::io::{Read, Write};

use super::{OptionQuote, SkippedQuote, Strategy, TradeRecord};
use crate::error::{ArhmmError, Result};

/// Reads `date,kind,strike,maturity_days,mid,underlying_close` rows.
pub fn read_quotes<R: Read>(r: R) -> Result<Vec<OptionQuote>> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize()
        .map(|q| q.map_err(ArhmmError::from))
        .collect()
}

pub fn write_quotes<W: Write>(w: W, quotes: &[OptionQuote]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for q in quotes {
        wtr.serialize(q)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_trades<W: Write>(w: W, trades: &[TradeRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for t in trades {
        wtr.serialize(t)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_trades<R: Read>(r: R) -> Result<Vec<TradeRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize()
        .map(|t| t.map_err(ArhmmError::from))
        .collect()
}

/// `date,kind,strike,maturity_days,reason`; an empty list leaves the file empty, like the other record files.
pub fn write_skipped<W: Write>(w: W, skipped: &[SkippedQuote]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for s in skipped {
        wtr.serialize(s)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_skipped<R: Read>(r: R) -> Result<Vec<SkippedQuote>> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize()
        .map(|s| s.map_err(ArhmmError::from))
        .collect()
}

/// `date` then one cumulative P&L column per strategy, keyed by strategy name.
pub fn write_cumulative_pnl<W: Write>(
    w: W,
    dates: &[String],
    columns: &[(Strategy, Vec<f64>)],
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["date".to_string()];
    header.extend(columns.iter().map(|(s, _)| s.key().to_string()));
    wtr.write_record(&header)?;
    for (k, d) in dates.iter().enumerate() {
        let mut rec = vec![d.clone()];
        rec.extend(columns.iter().map(|(_, v)| format!("{:?}", v[k])));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_cumulative_pnl<R: Read>(r: R) -> Result<(Vec<String>, Vec<(Strategy, Vec<f64>)>)> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut columns: Vec<(Strategy, Vec<f64>)> = rdr
        .headers()?
        .iter()
        .skip(1)
        .map(|h| Ok((h.parse()?, Vec::new())))
        .collect::<Result<_>>()?;
    let mut dates = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        dates.push(rec.get(0).unwrap_or_default().to_string());
        for (k, (_, v)) in columns.iter_mut().enumerate() {
            let cell = rec.get(k + 1).unwrap_or_default();
            v.push(
                cell.parse()
                    .map_err(|_| ArhmmError::InvalidInput(format!("bad P&L value '{cell}'")))?,
            );
        }
    }
    Ok((dates, columns))
}
