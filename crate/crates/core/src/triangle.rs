//! Reporting triangles of delayed counts.
//!
//! Delays are 1-based throughout: `d = 1` is the count reported in the week
//! of occurrence. Rows are stored 0-based (`row = t - 1`). A row's observed
//! cells always form a prefix whose length is fixed by the present day
//! (staircase censoring). In a collapsed triangle the remainder column
//! `D + 1` closes only once the whole maturity window has been reported.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CensoringSpec {
    /// Index of the present day, `T_now` (1-based time).
    pub present_day: usize,
    /// Number of individually modelled delays, `D`.
    pub delay_horizon: usize,
    /// Number of raw delay columns after which a total is treated as final.
    pub maturity: usize,
}

impl CensoringSpec {
    pub fn new(present_day: usize, delay_horizon: usize, maturity: usize) -> Result<Self> {
        let spec = Self {
            present_day,
            delay_horizon,
            maturity,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.delay_horizon < 1 {
            return Err(Error::Config("delay horizon must be at least 1".into()));
        }
        if self.delay_horizon > self.maturity {
            return Err(Error::Config(format!(
                "delay horizon {} exceeds maturity {}",
                self.delay_horizon, self.maturity
            )));
        }
        if self.present_day < 1 {
            return Err(Error::Config("present day must be at least 1".into()));
        }
        Ok(())
    }
}

/// Number of observed cells in row `t` (1-based) of a triangle with `width`
/// columns whose last column closes after `maturity` delay units.
pub fn observed_prefix_closing(t: usize, width: usize, maturity: usize, present_day: usize) -> usize {
    if t > present_day {
        return 0;
    }
    let k = present_day - t + 1;
    if k >= maturity {
        width
    } else {
        k.min(width - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportingTriangle {
    cells: Vec<Vec<u64>>,
    present_day: usize,
    /// Delay units spanned by a row; equals the width for raw triangles and
    /// the raw maturity for collapsed ones.
    maturity: usize,
    series_id: Option<String>,
}

impl ReportingTriangle {
    /// Builds a censored triangle from complete cell values. Cells outside the
    /// staircase are discarded (stored as zero and never exposed).
    pub fn censor(cells: Vec<Vec<u64>>, present_day: usize) -> Result<Self> {
        let width = cells.first().map(Vec::len).unwrap_or(0);
        Self::censor_with_maturity(cells, present_day, width)
    }

    /// As [`censor`](Self::censor), for a triangle whose last column collects
    /// every delay up to `maturity`.
    pub fn censor_with_maturity(
        mut cells: Vec<Vec<u64>>,
        present_day: usize,
        maturity: usize,
    ) -> Result<Self> {
        let width = cells.first().map(Vec::len).unwrap_or(0);
        if width == 0 {
            return Err(Error::Domain("triangle needs at least one delay column".into()));
        }
        if cells.iter().any(|r| r.len() != width) {
            return Err(Error::Domain("ragged triangle rows".into()));
        }
        // a collapsed triangle at D = maturity carries an empty remainder column
        if maturity + 1 < width {
            return Err(Error::Domain(format!(
                "maturity {maturity} is too small for {width} delay columns"
            )));
        }
        for (row, values) in cells.iter_mut().enumerate() {
            let k = observed_prefix_closing(row + 1, width, maturity, present_day);
            for v in values.iter_mut().skip(k) {
                *v = 0;
            }
        }
        Ok(Self {
            cells,
            present_day,
            maturity,
            series_id: None,
        })
    }

    pub fn with_series(mut self, id: impl Into<String>) -> Self {
        self.series_id = Some(id.into());
        self
    }

    pub fn series_id(&self) -> Option<&str> {
        self.series_id.as_deref()
    }

    pub fn n_rows(&self) -> usize {
        self.cells.len()
    }

    /// Number of delay columns (`D + 1` for a collapsed triangle).
    pub fn width(&self) -> usize {
        self.cells.first().map(Vec::len).unwrap_or(0)
    }

    /// `D`, the number of individually modelled delays.
    pub fn delay_horizon(&self) -> usize {
        self.width() - 1
    }

    pub fn present_day(&self) -> usize {
        self.present_day
    }

    pub fn maturity(&self) -> usize {
        self.maturity
    }

    /// Observed prefix length of a 0-based row.
    pub fn prefix_len(&self, row: usize) -> usize {
        observed_prefix_closing(row + 1, self.width(), self.maturity, self.present_day)
    }

    pub fn is_observed(&self, row: usize, d: usize) -> bool {
        d >= 1 && d <= self.prefix_len(row)
    }

    /// Cell value at 1-based delay `d`, or `None` when censored.
    pub fn cell(&self, row: usize, d: usize) -> Option<u64> {
        self.is_observed(row, d).then(|| self.cells[row][d - 1])
    }

    pub fn observed_cells(&self, row: usize) -> &[u64] {
        &self.cells[row][..self.prefix_len(row)]
    }

    pub fn prefix_sum(&self, row: usize) -> u64 {
        self.observed_cells(row).iter().sum()
    }

    pub fn is_complete(&self, row: usize) -> bool {
        self.prefix_len(row) == self.width()
    }

    /// The total of a fully observed row.
    pub fn total(&self, row: usize) -> Option<u64> {
        self.is_complete(row).then(|| self.prefix_sum(row))
    }

    pub fn observed_mask(&self) -> Vec<Vec<bool>> {
        (0..self.n_rows())
            .map(|r| (1..=self.width()).map(|d| self.is_observed(r, d)).collect())
            .collect()
    }

    /// Cells with censored entries as `None`.
    pub fn masked_cells(&self) -> Vec<Vec<Option<u64>>> {
        (0..self.n_rows())
            .map(|r| (1..=self.width()).map(|d| self.cell(r, d)).collect())
            .collect()
    }

    pub fn complete_rows(&self) -> Vec<usize> {
        (0..self.n_rows()).filter(|&r| self.is_complete(r)).collect()
    }

    pub fn incomplete_rows(&self) -> Vec<usize> {
        (0..self.n_rows()).filter(|&r| !self.is_complete(r)).collect()
    }

    /// Wide CSV: `time,d1,..,dK` with `NA` marking censored cells.
    pub fn write_wide_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["time".to_string()];
        header.extend((1..=self.width()).map(|d| format!("d{d}")));
        w.write_record(&header)?;
        for (row, values) in self.masked_cells().iter().enumerate() {
            let mut rec = vec![(row + 1).to_string()];
            rec.extend(values.iter().map(|v| match v {
                Some(x) => x.to_string(),
                None => "NA".to_string(),
            }));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<wide csv>", e))?;
        Ok(())
    }

    /// Reads the wide format written by [`write_wide_csv`](Self::write_wide_csv).
    /// The `NA` pattern must match the staircase implied by `present_day` and
    /// `maturity`.
    pub fn read_wide_csv<R: Read>(input: R, present_day: usize, maturity: usize) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut rows: Vec<Vec<Option<u64>>> = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i as u64 + 2;
            let values = rec
                .iter()
                .skip(1)
                .map(|s| {
                    let s = s.trim();
                    if s == "NA" {
                        Ok(None)
                    } else {
                        s.parse::<u64>().map(Some).map_err(|_| Error::Parse {
                            line,
                            message: format!("bad cell value {s:?}"),
                        })
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(values);
        }
        if rows.is_empty() {
            return Err(Error::NoRecords {
                path: "<wide csv>".into(),
            });
        }
        let cells: Vec<Vec<u64>> = rows
            .iter()
            .map(|r| r.iter().map(|v| v.unwrap_or(0)).collect())
            .collect();
        let tri = Self::censor_with_maturity(cells, present_day, maturity)?;
        for (r, values) in rows.iter().enumerate() {
            let k = tri.prefix_len(r);
            let matches = values
                .iter()
                .enumerate()
                .all(|(i, v)| v.is_some() == (i < k));
            if !matches {
                return Err(Error::Parse {
                    line: r as u64 + 2,
                    message: "censoring pattern does not match the staircase".into(),
                });
            }
        }
        Ok(tri)
    }

    /// Long CSV (`time_index,delay,count`) of the observed cells.
    pub fn write_long_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time_index", "delay", "count"])?;
        for row in 0..self.n_rows() {
            for (i, v) in self.observed_cells(row).iter().enumerate() {
                w.write_record(&[(row + 1).to_string(), (i + 1).to_string(), v.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io("<long csv>", e))?;
        Ok(())
    }
}

/// Column names of the long input format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub time: String,
    pub delay: String,
    pub count: String,
    pub series: Option<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            time: "time_index".into(),
            delay: "delay".into(),
            count: "count".into(),
            series: Some("series".into()),
        }
    }
}

struct LongRecord {
    line: u64,
    t: usize,
    d: usize,
    count: u64,
    series: Option<String>,
}

fn parse_int(field: &str, line: u64, name: &str) -> Result<i64> {
    let s = field.trim();
    s.parse::<i64>().map_err(|_| Error::Parse {
        line,
        message: format!("{name} {s:?} is not an integer"),
    })
}

fn read_long_records<R: Read>(input: R, schema: &CsvSchema) -> Result<Vec<LongRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Parse {
                line: 1,
                message: format!("missing column {name:?}"),
            })
    };
    let (ti, di, ci) = (col(&schema.time)?, col(&schema.delay)?, col(&schema.count)?);
    let si = schema
        .series
        .as_ref()
        .and_then(|s| headers.iter().position(|h| h.trim() == s));

    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i as u64 + 2;
        let get = |idx: usize| rec.get(idx).unwrap_or("");
        let t = parse_int(get(ti), line, "time_index")?;
        let d = parse_int(get(di), line, "delay")?;
        let c = parse_int(get(ci), line, "count")?;
        if t < 1 {
            return Err(Error::Parse {
                line,
                message: format!("time_index {t} < 1"),
            });
        }
        if d < 1 {
            return Err(Error::Parse {
                line,
                message: format!("delay {d} < 1 (delays are 1-based)"),
            });
        }
        if c < 0 {
            return Err(Error::Parse {
                line,
                message: format!("negative count {c}"),
            });
        }
        out.push(LongRecord {
            line,
            t: t as usize,
            d: d as usize,
            count: c as u64,
            series: si.map(|idx| get(idx).trim().to_string()),
        });
    }
    Ok(out)
}

fn assemble(records: &[&LongRecord], censoring: &CensoringSpec) -> Result<ReportingTriangle> {
    let max_t = records.iter().map(|r| r.t).max().unwrap_or(0);
    let max_d = records.iter().map(|r| r.d).max().unwrap_or(0);
    let n_rows = max_t.max(censoring.present_day);
    let width = max_d.max(censoring.maturity);
    let mut cells = vec![vec![0u64; width]; n_rows];
    let mut seen = vec![vec![false; width]; n_rows];
    for r in records {
        if seen[r.t - 1][r.d - 1] {
            return Err(Error::Parse {
                line: r.line,
                message: format!("duplicate record for time {} delay {}", r.t, r.d),
            });
        }
        if observed_prefix_closing(r.t, width, width, censoring.present_day) < r.d {
            return Err(Error::Parse {
                line: r.line,
                message: format!(
                    "time {} delay {} lies beyond present day {}",
                    r.t, r.d, censoring.present_day
                ),
            });
        }
        seen[r.t - 1][r.d - 1] = true;
        cells[r.t - 1][r.d - 1] = r.count;
    }
    ReportingTriangle::censor(cells, censoring.present_day)
}

/// Parses a single-series long CSV into a raw (uncollapsed) triangle. Absent
/// `(t, d)` pairs inside the observed staircase are zero counts.
pub fn parse_long_csv(
    path: impl AsRef<Path>,
    schema: &CsvSchema,
    censoring: &CensoringSpec,
) -> Result<ReportingTriangle> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_long_reader(file, schema, censoring).map_err(|e| match e {
        Error::NoRecords { .. } => Error::NoRecords {
            path: path.display().to_string(),
        },
        other => other,
    })
}

pub fn parse_long_reader<R: Read>(
    input: R,
    schema: &CsvSchema,
    censoring: &CensoringSpec,
) -> Result<ReportingTriangle> {
    let mut by_series = parse_long_reader_by_series(input, schema, censoring)?;
    if by_series.len() > 1 {
        return Err(Error::Domain(format!(
            "{} series present; use the per-series parser",
            by_series.len()
        )));
    }
    let (_, tri) = by_series.pop_first().expect("non-empty");
    Ok(tri)
}

/// Parses a long CSV holding several independent series.
pub fn parse_long_reader_by_series<R: Read>(
    input: R,
    schema: &CsvSchema,
    censoring: &CensoringSpec,
) -> Result<BTreeMap<String, ReportingTriangle>> {
    censoring.validate()?;
    let records = read_long_records(input, schema)?;
    if records.is_empty() {
        return Err(Error::NoRecords {
            path: "<input>".into(),
        });
    }
    let mut groups: BTreeMap<String, Vec<&LongRecord>> = BTreeMap::new();
    for r in &records {
        groups
            .entry(r.series.clone().unwrap_or_default())
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|(id, recs)| {
            let tri = assemble(&recs, censoring)?;
            let tri = if id.is_empty() { tri } else { tri.with_series(id.clone()) };
            Ok((id, tri))
        })
        .collect()
}

/// Collapses raw delays `D+1..=maturity` into a single remainder column. The
/// remainder is observed only when every constituent raw cell is.
pub fn collapse_remainder(
    raw: &ReportingTriangle,
    spec: &CensoringSpec,
) -> Result<ReportingTriangle> {
    spec.validate()?;
    let d = spec.delay_horizon;
    if raw.width() > spec.maturity {
        return Err(Error::Domain(format!(
            "raw triangle has {} delay columns but maturity is {}",
            raw.width(),
            spec.maturity
        )));
    }
    let collapsed: Vec<Vec<u64>> = raw
        .cells
        .iter()
        .map(|row| {
            let mut out: Vec<u64> = (0..d).map(|i| row.get(i).copied().unwrap_or(0)).collect();
            out.push(row.iter().skip(d).sum());
            out
        })
        .collect();
    let mut tri =
        ReportingTriangle::censor_with_maturity(collapsed, raw.present_day, spec.maturity)?;
    tri.series_id = raw.series_id.clone();
    Ok(tri)
}

/// Entry `(d, q)`: the `probs[q]` quantile, over fully observed rows with a
/// non-zero total, of the share of the total reported by delay `d + 1`.
pub fn cumulative_proportion_quantiles(
    tri: &ReportingTriangle,
    probs: &[f64],
) -> Result<Vec<Vec<f64>>> {
    if let Some(p) = probs.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(Error::Domain(format!("quantile level {p} outside (0, 1)")));
    }
    let complete = tri.complete_rows();
    if complete.is_empty() {
        return Err(Error::InsufficientData("no fully observed rows".into()));
    }
    let rows: Vec<&[u64]> = complete
        .iter()
        .map(|&r| tri.observed_cells(r))
        .filter(|cells| cells.iter().sum::<u64>() > 0)
        .collect();
    if rows.is_empty() {
        return Err(Error::InsufficientData(
            "all fully observed totals are zero".into(),
        ));
    }
    let width = tri.width();
    let mut out = Vec::with_capacity(width);
    for d in 1..=width {
        let mut props: Vec<f64> = rows
            .iter()
            .map(|cells| {
                let total: u64 = cells.iter().sum();
                cells[..d].iter().sum::<u64>() as f64 / total as f64
            })
            .collect();
        props.sort_by(f64::total_cmp);
        out.push(probs.iter().map(|&p| crate::stats::quantile_linear(&props, p)).collect());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DelaySelection {
    pub delay_horizon: usize,
    /// False when the threshold was never reached and the full width was
    /// returned instead.
    pub threshold_reached: bool,
}

/// Smallest delay whose `quantile`-level cumulative proportion reaches
/// `threshold`. Falls back to the triangle width (the maturity of a raw
/// triangle) with `threshold_reached = false`.
pub fn select_delay_horizon(
    tri: &ReportingTriangle,
    threshold: f64,
    quantile: f64,
) -> Result<DelaySelection> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Domain(format!("threshold {threshold} outside (0, 1)")));
    }
    let q = cumulative_proportion_quantiles(tri, &[quantile])?;
    // The last column always accounts for the whole total.
    let hit = q[..q.len() - 1].iter().position(|row| row[0] >= threshold);
    Ok(match hit {
        Some(i) => DelaySelection {
            delay_horizon: i + 1,
            threshold_reached: true,
        },
        None => {
            log::warn!("cumulative proportion never reaches {threshold}; using full width");
            DelaySelection {
                delay_horizon: tri.width(),
                threshold_reached: false,
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn censoring(present_day: usize, d: usize, maturity: usize) -> CensoringSpec {
        CensoringSpec::new(present_day, d, maturity).unwrap()
    }

    #[test]
    fn parses_small_long_csv() {
        let data = "time_index,delay,count\n1,1,5\n1,2,3\n2,1,7\n";
        let tri = parse_long_reader(data.as_bytes(), &CsvSchema::default(), &censoring(2, 1, 2))
            .unwrap();
        assert_eq!(tri.masked_cells(), vec![vec![Some(5), Some(3)], vec![Some(7), None]]);
        assert_eq!(tri.observed_mask(), vec![vec![true, true], vec![true, false]]);
        assert_eq!(tri.total(0), Some(8));
        assert_eq!(tri.total(1), None);
    }

    #[test]
    fn empty_file_has_no_records() {
        let err = parse_long_reader(
            "time_index,delay,count\n".as_bytes(),
            &CsvSchema::default(),
            &censoring(2, 1, 2),
        )
        .unwrap_err();
        assert!(err.to_string().contains("no records"), "{err}");
    }

    #[test]
    fn parse_errors_name_the_line() {
        let cases = [
            ("time_index,delay,count\n1,1,5\n1,2,-1\n", "line 3", "negative"),
            ("time_index,delay,count\n1,1,2.5\n", "line 2", "not an integer"),
            ("time_index,delay,count\n1,1,2\n1,1,3\n", "line 3", "duplicate"),
            ("time_index,delay,count\n1,0,2\n", "line 2", "delay 0 < 1"),
        ];
        for (csv, line, what) in cases {
            let err = parse_long_reader(csv.as_bytes(), &CsvSchema::default(), &censoring(3, 1, 2))
                .unwrap_err()
                .to_string();
            assert!(err.contains(line) && err.contains(what), "{err}");
        }
    }

    #[test]
    fn series_column_splits_triangles() {
        let data = "time_index,delay,count,series\n1,1,5,a\n1,1,2,b\n1,2,1,b\n";
        let by = parse_long_reader_by_series(
            data.as_bytes(),
            &CsvSchema::default(),
            &censoring(2, 1, 2),
        )
        .unwrap();
        assert_eq!(by.len(), 2);
        assert_eq!(by["b"].cell(0, 2), Some(1));
        assert_eq!(by["a"].series_id(), Some("a"));
        assert!(parse_long_reader(data.as_bytes(), &CsvSchema::default(), &censoring(2, 1, 2))
            .is_err());
    }

    #[test]
    fn collapse_sums_the_tail() {
        let raw = ReportingTriangle::censor(vec![vec![4, 3, 2, 1]], 10).unwrap();
        let c = collapse_remainder(&raw, &censoring(10, 2, 4)).unwrap();
        assert_eq!(c.observed_cells(0), &[4, 3, 3]);
        let zero = ReportingTriangle::censor(vec![vec![0; 4]], 10).unwrap();
        let c = collapse_remainder(&zero, &censoring(10, 2, 4)).unwrap();
        assert_eq!(c.observed_cells(0), &[0, 0, 0]);
        assert!(collapse_remainder(&raw, &CensoringSpec {
            present_day: 10,
            delay_horizon: 5,
            maturity: 4
        })
        .is_err());
    }

    #[test]
    fn collapse_at_maturity_appends_zero_remainder() {
        let full: Vec<Vec<u64>> = (0..6).map(|t| vec![t + 1, 2 * t, 3]).collect();
        let raw = ReportingTriangle::censor(full.clone(), 5).unwrap();
        let c = collapse_remainder(&raw, &censoring(5, 3, 3)).unwrap();
        for row in 0..6 {
            let k = raw.prefix_len(row);
            // direct summation oracle
            let expect: Vec<u64> = full[row][..k.min(3)].to_vec();
            assert_eq!(&c.observed_cells(row)[..k.min(3)], expect.as_slice());
            if raw.is_complete(row) {
                assert_eq!(c.cell(row, 4), Some(0));
            } else {
                assert_eq!(c.cell(row, 4), None);
            }
        }
    }

    #[test]
    fn remainder_closes_with_the_maturity_window() {
        let full = vec![vec![1u64; 6]; 10];
        let raw = ReportingTriangle::censor(full, 10).unwrap();
        let c = collapse_remainder(&raw, &censoring(10, 2, 6)).unwrap();
        // rows 1..=5 complete at maturity 6, row 6 has 5 raw cells only
        for row in 0..10 {
            assert_eq!(c.is_complete(row), raw.is_complete(row), "row {row}");
            if c.is_complete(row) {
                assert_eq!(c.total(row), raw.total(row));
            }
        }
        assert_eq!(c.prefix_len(5), 2);
        assert_eq!(c.prefix_len(8), 2);
        assert_eq!(c.prefix_len(9), 1);
    }

    #[test]
    fn wide_csv_round_trip() {
        let full: Vec<Vec<u64>> = (0..7).map(|t| vec![t, t + 1, 2, 9]).collect();
        let raw = ReportingTriangle::censor(full, 6).unwrap();
        let c = collapse_remainder(&raw, &censoring(6, 2, 4)).unwrap();
        let mut buf = Vec::new();
        c.write_wide_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("NA"));
        let back = ReportingTriangle::read_wide_csv(buf.as_slice(), 6, 4).unwrap();
        assert_eq!(back, c);
        assert!(ReportingTriangle::read_wide_csv(buf.as_slice(), 5, 4).is_err());
    }

    #[test]
    fn single_row_proportions() {
        let tri = ReportingTriangle::censor(vec![vec![8, 2]], 5).unwrap();
        let q = cumulative_proportion_quantiles(&tri, &[0.2, 0.5, 0.9]).unwrap();
        assert_eq!(q, vec![vec![0.8; 3], vec![1.0; 3]]);
    }

    fn halving_triangle(rows: usize, width: usize) -> ReportingTriangle {
        // row scaled by 2^(width-1): cells 2^(w-2), ..., 1, 1 → cumulative 1 - 2^-d
        let base: Vec<u64> = (0..width)
            .map(|d| if d + 1 < width { 1u64 << (width - 2 - d) } else { 1 })
            .collect();
        let full: Vec<Vec<u64>> = (0..rows).map(|r| base.iter().map(|c| c * (r as u64 + 1)).collect()).collect();
        ReportingTriangle::censor(full, rows + width).unwrap()
    }

    #[test]
    fn halving_rows_follow_closed_form() {
        let tri = halving_triangle(12, 8);
        let q = cumulative_proportion_quantiles(&tri, &[0.2, 0.4, 0.6, 0.8]).unwrap();
        for (d, row) in q.iter().enumerate().take(7) {
            let expect = 1.0 - 0.5f64.powi(d as i32 + 1);
            assert!(row.iter().all(|v| (v - expect).abs() < 1e-12), "{d}: {row:?}");
        }
        let sel = select_delay_horizon(&tri, 0.8, 0.2).unwrap();
        assert_eq!(sel.delay_horizon, 3);
        assert!(sel.threshold_reached);
    }

    #[test]
    fn selection_edge_cases() {
        let tri = ReportingTriangle::censor(vec![vec![7, 0, 0], vec![3, 0, 0]], 5).unwrap();
        assert_eq!(select_delay_horizon(&tri, 0.8, 0.2).unwrap().delay_horizon, 1);

        // never above 0.99 before the last column
        let tri = ReportingTriangle::censor(vec![vec![90, 5, 5]; 4], 10).unwrap();
        let q = cumulative_proportion_quantiles(&tri, &[0.5]).unwrap();
        assert!(q[1][0] < 0.99);
        let sel = select_delay_horizon(&tri, 0.999, 0.5).unwrap();
        assert_eq!(sel.delay_horizon, 3);
        assert!(!sel.threshold_reached);

        let none = ReportingTriangle::censor(vec![vec![1, 1]; 3], 1).unwrap();
        assert!(cumulative_proportion_quantiles(&none, &[0.5]).is_err());
        let zeros = ReportingTriangle::censor(vec![vec![0, 0]; 3], 9).unwrap();
        assert!(matches!(
            cumulative_proportion_quantiles(&zeros, &[0.5]),
            Err(Error::InsufficientData(_))
        ));
    }

    proptest::proptest! {
        #[test]
        fn advancing_present_day_never_unobserves(
            rows in 1usize..15, width in 1usize..6, extra in 0usize..4,
            p1 in 0usize..25, step in 0usize..6,
        ) {
            let maturity = width + extra;
            for row in 0..rows {
                let a = observed_prefix_closing(row + 1, width, maturity, p1);
                let b = observed_prefix_closing(row + 1, width, maturity, p1 + step);
                proptest::prop_assert!(a <= b);
            }
        }

        #[test]
        fn long_csv_round_trip(
            cells in proptest::collection::vec(proptest::collection::vec(0u64..50, 4), 1..12),
            present in 1usize..16,
        ) {
            let raw = ReportingTriangle::censor(cells, present).unwrap();
            let mut buf = Vec::new();
            raw.write_long_csv(&mut buf).unwrap();
            let spec = CensoringSpec { present_day: present, delay_horizon: 1, maturity: 4 };
            match parse_long_reader(buf.as_slice(), &CsvSchema::default(), &spec) {
                Ok(back) => {
                    // rows past the last observed row are not representable in long form
                    let n = back.n_rows().min(raw.n_rows());
                    for r in 0..n {
                        proptest::prop_assert_eq!(back.observed_cells(r), raw.observed_cells(r));
                    }
                    for r in n..raw.n_rows() {
                        proptest::prop_assert_eq!(raw.prefix_len(r), 0);
                    }
                }
                Err(Error::NoRecords { .. }) => {
                    proptest::prop_assert!((0..raw.n_rows()).all(|r| raw.prefix_len(r) == 0));
                }
                Err(e) => return Err(proptest::test_runner::TestCaseError::fail(e.to_string())),
            }
        }

        #[test]
        fn collapse_preserves_complete_row_sums(
            cells in proptest::collection::vec(proptest::collection::vec(0u64..100, 6), 1..10),
            present in 1usize..20, d in 1usize..6,
        ) {
            let raw = ReportingTriangle::censor(cells, present).unwrap();
            let c = collapse_remainder(&raw, &CensoringSpec { present_day: present, delay_horizon: d, maturity: 6 }).unwrap();
            for r in 0..raw.n_rows() {
                proptest::prop_assert_eq!(raw.total(r), c.total(r));
                let k = c.prefix_len(r);
                for i in 0..k {
                    proptest::prop_assert!(c.observed_cells(r)[i..].len() + i == k);
                }
            }
        }
    }
}
