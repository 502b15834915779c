//! Two-period observation ingestion and delta-table aggregation.
//!
//! Raw observations are rows of (business area, product line, region,
//! period, value). Aggregation groups them by (product line, region) and
//! subtracts the two period sums; contributions express each delta as a
//! signed share of the total absolute movement.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("missing column: {0}")]
    MissingColumn(String),
    #[error("bad decimal in row {row}, column {col}: {value:?}")]
    BadDecimal { row: usize, col: String, value: String },
    #[error("empty label in row {row}, column {col}")]
    EmptyLabel { row: usize, col: String },
    #[error("raw schema requires exactly 2 distinct periods, found {found}")]
    PeriodCountMismatch { found: usize },
    #[error("duplicate (product_line, region) key: ({product_line}, {region})")]
    DuplicateKey { product_line: String, region: String },
    #[error("unknown period label: {0}")]
    UnknownPeriod(String),
    #[error("cannot render an empty table")]
    EmptyTable,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// One raw observation: a value for a (product line, region) cell in one period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRow {
    pub business_area: String,
    pub product_line: String,
    pub region: String,
    pub period: String,
    pub value: f64,
}

/// A parsed set of raw observations with the periods seen in the data.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ObservationSet {
    pub rows: Vec<ObservationRow>,
    pub periods: BTreeSet<String>,
}

/// One aggregated delta cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub product_line: String,
    pub region: String,
    pub total_difference: f64,
    pub contribution_pct: f64,
}

/// The per-(product line, region) two-period difference table.
///
/// `net_total` is the signed sum of all deltas, `abs_total` the sum of their
/// magnitudes. Contributions are filled by [`compute_contributions`]; a
/// freshly aggregated table carries zeros there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaTable {
    pub rows: Vec<DeltaRow>,
    pub period_a: String,
    pub period_b: String,
    pub net_total: f64,
    pub abs_total: f64,
}

/// Rendering style for the prompt-ready table text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TableStyle {
    Markdown,
    AlignedText,
}

/// Which CSV schema a file follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemaMode {
    Raw,
    Preaggregated,
}

/// Result of [`load_observations`]: raw files parse into an
/// [`ObservationSet`], preaggregated files directly into a [`DeltaTable`].
#[derive(Debug, Clone, PartialEq)]
pub enum LoadedData {
    Raw(ObservationSet),
    Preaggregated(DeltaTable),
}

impl DeltaTable {
    /// Build a table from (product line, region, delta) triples, recomputing
    /// totals. Contributions are left at zero.
    pub fn from_deltas<I>(rows: I, period_a: &str, period_b: &str) -> Self
    where
        I: IntoIterator<Item = (String, String, f64)>,
    {
        let rows: Vec<DeltaRow> = rows
            .into_iter()
            .map(|(product_line, region, total_difference)| DeltaRow {
                product_line,
                region,
                total_difference,
                contribution_pct: 0.0,
            })
            .collect();
        let (net_total, abs_total) = totals(&rows);
        DeltaTable {
            rows,
            period_a: period_a.to_string(),
            period_b: period_b.to_string(),
            net_total,
            abs_total,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Look up a cell by exact (product line, region) labels.
    pub fn row(&self, product_line: &str, region: &str) -> Option<&DeltaRow> {
        self.rows
            .iter()
            .find(|r| r.product_line == product_line && r.region == region)
    }

    /// The distinct product lines, sorted.
    pub fn product_lines(&self) -> BTreeSet<String> {
        self.rows.iter().map(|r| r.product_line.clone()).collect()
    }

    /// The distinct regions, sorted.
    pub fn regions(&self) -> BTreeSet<String> {
        self.rows.iter().map(|r| r.region.clone()).collect()
    }
}

fn totals(rows: &[DeltaRow]) -> (f64, f64) {
    let net = rows.iter().map(|r| r.total_difference).sum();
    let abs = rows.iter().map(|r| r.total_difference.abs()).sum();
    (net, abs)
}

/// Strict decimal parse: optional leading '-', digits, optional '.' fraction.
/// Rejects exponents, thousands separators, and non-finite values.
fn parse_decimal(s: &str) -> Option<f64> {
    let t = s.trim();
    let unsigned = t.strip_prefix('-').unwrap_or(t);
    if unsigned.is_empty() {
        return None;
    }
    let mut parts = unsigned.splitn(2, '.');
    let int_part = parts.next()?;
    if int_part.is_empty() || !int_part.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if let Some(frac) = parts.next() {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
    }
    t.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize, LedgerError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| LedgerError::MissingColumn(name.to_string()))
}

fn required_label(
    record: &csv::StringRecord,
    idx: usize,
    row: usize,
    col: &str,
) -> Result<String, LedgerError> {
    let value = record.get(idx).unwrap_or("").trim().to_string();
    if value.is_empty() {
        return Err(LedgerError::EmptyLabel {
            row,
            col: col.to_string(),
        });
    }
    Ok(value)
}

fn required_decimal(
    record: &csv::StringRecord,
    idx: usize,
    row: usize,
    col: &str,
) -> Result<f64, LedgerError> {
    let raw = record.get(idx).unwrap_or("");
    parse_decimal(raw).ok_or_else(|| LedgerError::BadDecimal {
        row,
        col: col.to_string(),
        value: raw.to_string(),
    })
}

/// Load a CSV file in either the raw or the preaggregated schema.
///
/// Raw schema: `business_area,product_line,region,period,value`; the data
/// section must contain exactly two distinct period labels (an empty data
/// section is allowed). Preaggregated schema:
/// `product_line,region,total_difference` with an optional
/// `contribution_pct` column that is recomputed and overwritten on load.
pub fn load_observations(path: &Path, mode: SchemaMode) -> Result<LoadedData, LedgerError> {
    let file = std::fs::File::open(path)?;
    load_observations_from(file, mode)
}

/// Same as [`load_observations`] but over any reader.
pub fn load_observations_from<R: Read>(
    reader: R,
    mode: SchemaMode,
) -> Result<LoadedData, LedgerError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();

    match mode {
        SchemaMode::Raw => {
            let ba = column_index(&headers, "business_area")?;
            let pl = column_index(&headers, "product_line")?;
            let rg = column_index(&headers, "region")?;
            let pd = column_index(&headers, "period")?;
            let vl = column_index(&headers, "value")?;

            let mut rows = Vec::new();
            let mut periods = BTreeSet::new();
            for (i, record) in rdr.records().enumerate() {
                let record = record?;
                let row = i + 1;
                let obs = ObservationRow {
                    business_area: required_label(&record, ba, row, "business_area")?,
                    product_line: required_label(&record, pl, row, "product_line")?,
                    region: required_label(&record, rg, row, "region")?,
                    period: required_label(&record, pd, row, "period")?,
                    value: required_decimal(&record, vl, row, "value")?,
                };
                periods.insert(obs.period.clone());
                rows.push(obs);
            }
            if !rows.is_empty() && periods.len() != 2 {
                return Err(LedgerError::PeriodCountMismatch {
                    found: periods.len(),
                });
            }
            Ok(LoadedData::Raw(ObservationSet { rows, periods }))
        }
        SchemaMode::Preaggregated => {
            let pl = column_index(&headers, "product_line")?;
            let rg = column_index(&headers, "region")?;
            let td = column_index(&headers, "total_difference")?;

            let mut rows = Vec::new();
            let mut seen = BTreeSet::new();
            for (i, record) in rdr.records().enumerate() {
                let record = record?;
                let row = i + 1;
                let product_line = required_label(&record, pl, row, "product_line")?;
                let region = required_label(&record, rg, row, "region")?;
                let total_difference = required_decimal(&record, td, row, "total_difference")?;
                if !seen.insert((product_line.clone(), region.clone())) {
                    return Err(LedgerError::DuplicateKey {
                        product_line,
                        region,
                    });
                }
                rows.push((product_line, region, total_difference));
            }
            let table = DeltaTable::from_deltas(rows, "period_a", "period_b");
            Ok(LoadedData::Preaggregated(compute_contributions(table)))
        }
    }
}

/// Aggregate raw observations into a delta table for the two given periods.
///
/// A (product line, region) pair present in only one period contributes with
/// the missing side treated as zero. Rows come out sorted by
/// (product line, region); contributions are left at zero until
/// [`compute_contributions`].
pub fn compute_delta_table(
    obs: &ObservationSet,
    period_a: &str,
    period_b: &str,
) -> Result<DeltaTable, LedgerError> {
    for p in [period_a, period_b] {
        if !obs.periods.contains(p) {
            return Err(LedgerError::UnknownPeriod(p.to_string()));
        }
    }
    let mut deltas: BTreeMap<(String, String), f64> = BTreeMap::new();
    for row in &obs.rows {
        let sign = if row.period == period_b {
            1.0
        } else if row.period == period_a {
            -1.0
        } else {
            continue;
        };
        *deltas
            .entry((row.product_line.clone(), row.region.clone()))
            .or_insert(0.0) += sign * row.value;
    }
    Ok(DeltaTable::from_deltas(
        deltas.into_iter().map(|((pl, rg), d)| (pl, rg, d)),
        period_a,
        period_b,
    ))
}

/// Fill each row's contribution: 100 × delta / Σ|delta|, or all zeros when
/// the table has no absolute movement.
pub fn compute_contributions(table: DeltaTable) -> DeltaTable {
    let (net_total, abs_total) = totals(&table.rows);
    let rows = table
        .rows
        .into_iter()
        .map(|mut r| {
            r.contribution_pct = if abs_total > 0.0 {
                100.0 * r.total_difference / abs_total
            } else {
                0.0
            };
            r
        })
        .collect();
    DeltaTable {
        rows,
        net_total,
        abs_total,
        ..table
    }
}

fn format_value(v: f64) -> String {
    // Normalize -0.0 so renders never show a negative zero.
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:.2}")
}

const TABLE_HEADER: [&str; 4] = ["Product Line", "Region", "Total Difference", "Contribution (%)"];

/// Render the table as deterministic prompt-ready text: a header line plus
/// one line per row in (product line, region) order, decimals with exactly
/// two fraction digits.
pub fn render_prompt_table(table: &DeltaTable, style: TableStyle) -> Result<String, LedgerError> {
    if table.rows.is_empty() {
        return Err(LedgerError::EmptyTable);
    }
    let mut rows: Vec<&DeltaRow> = table.rows.iter().collect();
    rows.sort_by(|a, b| {
        (a.product_line.as_str(), a.region.as_str()).cmp(&(b.product_line.as_str(), b.region.as_str()))
    });

    let cells: Vec<[String; 4]> = rows
        .iter()
        .map(|r| {
            [
                r.product_line.clone(),
                r.region.clone(),
                format_value(r.total_difference),
                format_value(r.contribution_pct),
            ]
        })
        .collect();

    match style {
        TableStyle::Markdown => {
            let mut lines = vec![format!(
                "| {} | {} | {} | {} |",
                TABLE_HEADER[0], TABLE_HEADER[1], TABLE_HEADER[2], TABLE_HEADER[3]
            )];
            for c in &cells {
                lines.push(format!("| {} | {} | {} | {} |", c[0], c[1], c[2], c[3]));
            }
            Ok(lines.join("\n"))
        }
        TableStyle::AlignedText => {
            let mut widths = [0usize; 4];
            for (i, h) in TABLE_HEADER.iter().enumerate() {
                widths[i] = h.chars().count();
            }
            for c in cells.iter() {
                for i in 0..4 {
                    widths[i] = widths[i].max(c[i].chars().count());
                }
            }
            let fmt_line = |c: [&str; 4]| {
                // Text columns left-aligned, numeric columns right-aligned.
                format!(
                    "{:<w0$}  {:<w1$}  {:>w2$}  {:>w3$}",
                    c[0],
                    c[1],
                    c[2],
                    c[3],
                    w0 = widths[0],
                    w1 = widths[1],
                    w2 = widths[2],
                    w3 = widths[3]
                )
                .trim_end()
                .to_string()
            };
            let mut lines = vec![fmt_line([
                TABLE_HEADER[0],
                TABLE_HEADER[1],
                TABLE_HEADER[2],
                TABLE_HEADER[3],
            ])];
            for c in &cells {
                lines.push(fmt_line([&c[0], &c[1], &c[2], &c[3]]));
            }
            Ok(lines.join("\n"))
        }
    }
}

/// Write a table in the preaggregated CSV schema (full float precision).
pub fn write_preaggregated_csv<W: Write>(table: &DeltaTable, writer: W) -> Result<(), LedgerError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["product_line", "region", "total_difference", "contribution_pct"])?;
    for r in &table.rows {
        wtr.write_record([
            r.product_line.as_str(),
            r.region.as_str(),
            &r.total_difference.to_string(),
            &r.contribution_pct.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
