//! CSV readers and writers for quotes, observable histories and curve
//! coefficients.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use sofr_core::calendar::{one_month_reference_period, three_month_reference_period, Date};
use sofr_core::calibration::{Quote, QuoteKind, QuoteSet};
use sofr_core::curve::{BasisFamily, BasisKind, ForwardCurve};

use crate::error::{CliError, CliResult};

/// CME price convention: `F = 1 - f / 100`.
pub fn price_to_rate(price: f64) -> f64 {
    1.0 - price / 100.0
}

/// One line of a quote file, before it is placed on a calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct QuoteRow {
    pub line: usize,
    pub date: Date,
    pub kind: QuoteKind,
    pub delivery: (i32, u32),
    pub bid_rate: f64,
    pub ask_rate: f64,
}

impl QuoteRow {
    /// Reference period `[start, end)` in calendar dates.
    pub fn period(&self) -> CliResult<(Date, Date)> {
        let (y, m) = self.delivery;
        Ok(match self.kind {
            QuoteKind::ThreeMonth => three_month_reference_period(y, m)?,
            QuoteKind::OneMonth => {
                let (first, last) = one_month_reference_period(y, m)?;
                (first, last.add_days(1))
            }
        })
    }
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| CliError::io(path, e))
}

fn parse_field<T: std::str::FromStr>(s: &str, what: &str, line: usize) -> CliResult<T>
where
    T::Err: std::fmt::Display,
{
    s.trim()
        .parse()
        .map_err(|e| CliError::Parse(format!("line {line}: bad {what} {s:?}: {e}")))
}

fn parse_delivery(s: &str, line: usize) -> CliResult<(i32, u32)> {
    let bad = || CliError::Parse(format!("line {line}: delivery month {s:?} is not YYYY-MM"));
    let (y, m) = s.trim().split_once('-').ok_or_else(bad)?;
    let y: i32 = y.parse().map_err(|_| bad())?;
    let m: u32 = m.parse().map_err(|_| bad())?;
    if !(1..=12).contains(&m) {
        return Err(bad());
    }
    Ok((y, m))
}

fn parse_kind(s: &str, line: usize) -> CliResult<QuoteKind> {
    match s.trim().to_ascii_uppercase().as_str() {
        "1M" => Ok(QuoteKind::OneMonth),
        "3M" => Ok(QuoteKind::ThreeMonth),
        _ => Err(CliError::Parse(format!(
            "line {line}: quote kind {s:?} is not 1M or 3M"
        ))),
    }
}

/// Read `date,kind,delivery,bid,ask` rows with prices in CME convention.
pub fn read_quotes<R: Read>(reader: R) -> CliResult<Vec<QuoteRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| CliError::Parse(format!("quote file has no {name:?} column")))
    };
    let (ic_date, ic_kind, ic_del, ic_bid, ic_ask) = (
        col("date")?,
        col("kind")?,
        col("delivery")?,
        col("bid")?,
        col("ask")?,
    );

    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let get = |c: usize| rec.get(c).unwrap_or("");
        let date: Date = get(ic_date)
            .parse()
            .map_err(|e| CliError::Parse(format!("line {line}: {e}")))?;
        let kind = parse_kind(get(ic_kind), line)?;
        let delivery = parse_delivery(get(ic_del), line)?;
        let bid: f64 = parse_field(get(ic_bid), "bid price", line)?;
        let ask: f64 = parse_field(get(ic_ask), "ask price", line)?;
        for (p, what) in [(bid, "bid"), (ask, "ask")] {
            if !(0.0..=200.0).contains(&p) {
                return Err(CliError::Domain(format!(
                    "line {line}: {what} price {p} outside [0, 200]"
                )));
            }
        }
        let (bid_rate, ask_rate) = (price_to_rate(bid), price_to_rate(ask));
        if bid_rate > ask_rate {
            return Err(CliError::Domain(format!(
                "line {line}: bid rate {bid_rate} above ask rate {ask_rate}"
            )));
        }
        rows.push(QuoteRow {
            line,
            date,
            kind,
            delivery,
            bid_rate,
            ask_rate,
        });
    }
    Ok(rows)
}

pub fn read_quotes_file(path: &Path) -> CliResult<Vec<QuoteRow>> {
    read_quotes(open(path)?)
}

/// A quote placed on the day-offset grid of its trade date.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacedQuote {
    pub row: QuoteRow,
    pub start: Date,
    pub end: Date,
    pub quote: Quote,
}

/// Quotes of one date that the basis can represent. Periods that already
/// started (partially fixed) or run past the last tenor are returned as
/// warnings instead.
pub fn place_quotes(
    rows: &[QuoteRow],
    date: Date,
    basis: &BasisFamily,
) -> CliResult<(Vec<PlacedQuote>, Vec<String>)> {
    let mut placed = Vec::new();
    let mut warnings = Vec::new();
    for row in rows.iter().filter(|r| r.date == date) {
        let (start, end) = row.period()?;
        let t0 = date.days_until(start);
        let t1 = date.days_until(end);
        if t0 < 0 {
            warnings.push(format!(
                "line {}: reference period started on {start}, skipped",
                row.line
            ));
            continue;
        }
        if t1 > basis.last_tenor() as i32 {
            warnings.push(format!(
                "line {}: reference period ends on {end}, past the last tenor, skipped",
                row.line
            ));
            continue;
        }
        placed.push(PlacedQuote {
            row: row.clone(),
            start,
            end,
            quote: Quote::new(t0 as u32, t1 as u32, row.kind, row.bid_rate, row.ask_rate),
        });
    }
    Ok((placed, warnings))
}

/// Daily histories keyed by column name. Blank cells are missing values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SeriesFile {
    pub columns: BTreeMap<String, Vec<(Date, f64)>>,
}

pub const SERIES_COLUMNS: [&str; 5] = ["SOFR", "L", "H", "I", "G"];

impl SeriesFile {
    pub fn get(&self, name: &str) -> &[(Date, f64)] {
        self.columns.get(name).map_or(&[], |v| v.as_slice())
    }

    /// Last observation on or before `date`.
    pub fn as_of(&self, name: &str, date: Date) -> Option<f64> {
        let s = self.get(name);
        let i = s.partition_point(|p| p.0 <= date);
        (i > 0).then(|| s[i - 1].1)
    }

    /// Exact observation on `date`.
    pub fn on(&self, name: &str, date: Date) -> Option<f64> {
        let s = self.get(name);
        s.binary_search_by_key(&date, |p| p.0).ok().map(|i| s[i].1)
    }
}

/// Read `date` plus any of `SOFR, L, H, I, G`. Rows must be in date order.
pub fn read_series<R: Read>(reader: R) -> CliResult<SeriesFile> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let ic_date = headers
        .iter()
        .position(|h| h.eq_ignore_ascii_case("date"))
        .ok_or_else(|| CliError::Parse("series file has no \"date\" column".into()))?;
    let cols: Vec<(usize, &str)> = SERIES_COLUMNS
        .iter()
        .filter_map(|&name| headers.iter().position(|h| h == name).map(|i| (i, name)))
        .collect();
    if cols.is_empty() {
        return Err(CliError::Parse(format!(
            "series file has none of the columns {SERIES_COLUMNS:?}"
        )));
    }
    let mut out = SeriesFile::default();
    let mut last: Option<Date> = None;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let date: Date = rec
            .get(ic_date)
            .unwrap_or("")
            .parse()
            .map_err(|e| CliError::Parse(format!("line {line}: {e}")))?;
        if last.is_some_and(|d| d >= date) {
            return Err(CliError::Domain(format!(
                "line {line}: dates must be increasing"
            )));
        }
        last = Some(date);
        for &(c, name) in &cols {
            let cell = rec.get(c).unwrap_or("");
            if cell.is_empty() {
                continue;
            }
            let v: f64 = parse_field(cell, name, line)?;
            if !v.is_finite() {
                return Err(CliError::Domain(format!(
                    "line {line}: {name} is not finite"
                )));
            }
            out.columns
                .entry(name.to_string())
                .or_default()
                .push((date, v));
        }
    }
    Ok(out)
}

pub fn read_series_file(path: &Path) -> CliResult<SeriesFile> {
    read_series(open(path)?)
}

/// Group quote rows by date into calibration inputs, attaching the day's
/// overnight fixing as anchor when the series has one.
pub fn quote_history(
    rows: &[QuoteRow],
    basis: &BasisFamily,
    series: Option<&SeriesFile>,
) -> CliResult<(Vec<QuoteSet>, Vec<String>)> {
    let mut dates: Vec<Date> = rows.iter().map(|r| r.date).collect();
    dates.sort();
    dates.dedup();
    let mut sets = Vec::with_capacity(dates.len());
    let mut warnings = Vec::new();
    for date in dates {
        let (placed, w) = place_quotes(rows, date, basis)?;
        warnings.extend(w.into_iter().map(|w| format!("{date}: {w}")));
        if placed.is_empty() {
            warnings.push(format!("{date}: no usable quotes, day skipped"));
            continue;
        }
        sets.push(QuoteSet {
            date,
            quotes: placed.into_iter().map(|p| p.quote).collect(),
            anchor_sofr: series.and_then(|s| s.on("SOFR", date)),
        });
    }
    Ok((sets, warnings))
}

fn kind_name(kind: BasisKind) -> &'static str {
    match kind {
        BasisKind::PiecewiseConstant => "piecewise_constant",
        BasisKind::PiecewiseLinear => "piecewise_linear",
    }
}

/// `basis,tenor,xi`, one row per coefficient. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_xi<W: Write>(w: W, curve: &ForwardCurve) -> CliResult<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["basis", "tenor", "xi"])?;
    let kind = kind_name(curve.basis().kind());
    for (t, x) in curve.basis().tenors().iter().zip(curve.coeffs()) {
        wtr.write_record([kind.to_string(), t.to_string(), x.to_string()])?;
    }
    wtr.flush().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(())
}

pub fn read_xi<R: Read>(reader: R) -> CliResult<ForwardCurve> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut kind: Option<BasisKind> = None;
    let mut tenors = Vec::new();
    let mut coeffs = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != 3 {
            return Err(CliError::Parse(format!(
                "line {line}: expected basis,tenor,xi"
            )));
        }
        let k = match &rec[0] {
            "piecewise_constant" => BasisKind::PiecewiseConstant,
            "piecewise_linear" => BasisKind::PiecewiseLinear,
            other => {
                return Err(CliError::Parse(format!(
                    "line {line}: unknown basis {other:?}"
                )))
            }
        };
        if kind.is_some_and(|p| p != k) {
            return Err(CliError::Parse(format!("line {line}: mixed basis kinds")));
        }
        kind = Some(k);
        tenors.push(parse_field::<u32>(&rec[1], "tenor", line)?);
        coeffs.push(parse_field::<f64>(&rec[2], "xi", line)?);
    }
    let kind = kind.ok_or_else(|| CliError::Parse("empty coefficient file".into()))?;
    Ok(ForwardCurve::new(BasisFamily::new(kind, tenors)?, coeffs)?)
}

pub fn read_xi_file(path: &Path) -> CliResult<ForwardCurve> {
    read_xi(open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cme_price_conversion() {
        assert!((price_to_rate(94.72) - 0.0528).abs() < 1e-15);
        assert_eq!(price_to_rate(100.0), 0.0);
    }

    #[test]
    fn quote_rows() {
        let text = "date,kind,delivery,bid,ask\n2024-08-28,3M,2024-12,94.80,94.78\n";
        let rows = read_quotes(text.as_bytes()).unwrap();
        assert_eq!(rows[0].kind, QuoteKind::ThreeMonth);
        assert_eq!(rows[0].delivery, (2024, 12));
        assert!(rows[0].bid_rate <= rows[0].ask_rate);

        let crossed = "date,kind,delivery,bid,ask\n2024-08-28,3M,2024-12,94.70,94.75\n";
        assert!(matches!(
            read_quotes(crossed.as_bytes()),
            Err(CliError::Domain(_))
        ));
        let range = "date,kind,delivery,bid,ask\n2024-08-28,3M,2024-12,250,94.75\n";
        assert!(matches!(
            read_quotes(range.as_bytes()),
            Err(CliError::Domain(_))
        ));
        let kind = "date,kind,delivery,bid,ask\n2024-08-28,6M,2024-12,94.8,94.75\n";
        assert!(matches!(
            read_quotes(kind.as_bytes()),
            Err(CliError::Parse(_))
        ));
        let date = "date,kind,delivery,bid,ask\n2024-02-30,3M,2024-12,94.8,94.75\n";
        assert!(matches!(
            read_quotes(date.as_bytes()),
            Err(CliError::Parse(_))
        ));
    }

    #[test]
    fn placement_skips_started_and_distant_periods() {
        let basis = sofr_core::reference::basis();
        let text = "date,kind,delivery,bid,ask\n\
                    2024-08-28,3M,2024-09,94.8,94.8\n\
                    2024-08-28,3M,2024-12,94.8,94.8\n\
                    2024-08-28,1M,2024-09,94.7,94.7\n\
                    2024-08-28,3M,2035-03,96,96\n";
        let rows = read_quotes(text.as_bytes()).unwrap();
        let date = "2024-08-28".parse().unwrap();
        let (placed, warnings) = place_quotes(&rows, date, &basis).unwrap();
        assert_eq!(placed.len(), 2);
        assert_eq!(warnings.len(), 2);
        let one_month = &placed[1].quote;
        assert_eq!((one_month.t0, one_month.t1), (4, 34));
    }

    #[test]
    fn series_with_gaps() {
        let text = "date,SOFR,L,I,G\n2024-01-31,5.31,,3.1,\n2024-02-29,,0.0525,,2.5\n";
        let s = read_series(text.as_bytes()).unwrap();
        assert_eq!(s.get("SOFR").len(), 1);
        assert_eq!(s.get("G").len(), 1);
        let d: Date = "2024-03-15".parse().unwrap();
        assert_eq!(s.as_of("L", d), Some(0.0525));
        assert_eq!(s.as_of("L", "2024-02-01".parse().unwrap()), None);
        assert!(read_series("date,SOFR\n2024-01-02,1\n2024-01-01,1\n".as_bytes()).is_err());
    }

    #[test]
    fn xi_round_trip() {
        let curve = sofr_core::reference::initial_curve();
        let mut buf = Vec::new();
        write_xi(&mut buf, &curve).unwrap();
        let back = read_xi(buf.as_slice()).unwrap();
        assert_eq!(back.coeffs(), curve.coeffs());
        assert_eq!(back.basis(), curve.basis());
    }
}
