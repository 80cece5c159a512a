//! Number formatting and CSV ingestion.
//!
//! Floats are written with 17 significant digits so that every value reads
//! back to the identical double.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::value::RawValue;

use crate::error::{Error, Result};
use crate::population::{FinitePopulation, ObservedData};

/// `x` in scientific notation with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// JSON number with 17 significant digits; `null` for non-finite values.
pub fn json_number(x: f64) -> Box<RawValue> {
    let text = if x.is_finite() { fmt17(x) } else { "null".to_string() };
    RawValue::from_string(text).expect("formatted float is valid JSON")
}

/// JSON formatter that writes every float through [`fmt17`].
#[derive(Clone, Copy, Debug, Default)]
pub struct Digits17;

impl serde_json::ser::Formatter for Digits17 {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        writer.write_all(fmt17(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

/// Single-line JSON with 17 significant digits for floats; non-finite
/// floats become `null`.
pub fn to_json17<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Digits17);
    value.serialize(&mut ser).map_err(|e| Error::InvalidInput(format!("cannot serialize: {e}")))?;
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

/// Columns read from a data file. Covariates are the `x1, x2, ...` columns in
/// numeric order; the other columns are optional.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    pub x: DMatrix<f64>,
    pub y: Option<Vec<f64>>,
    pub t: Option<Vec<bool>>,
    pub y1: Option<Vec<f64>>,
    pub y0: Option<Vec<f64>>,
}

impl CsvTable {
    pub fn observed(&self) -> Result<ObservedData> {
        let y = self.y.clone().ok_or_else(|| Error::Data("missing column `y`".into()))?;
        let t = self.t.clone().ok_or_else(|| Error::Data("missing column `t`".into()))?;
        ObservedData::new(self.x.clone(), y, t)
    }

    /// Ground-truth population from the `y1`, `y0` columns. The intercept
    /// flag is set when some covariate column is identically one.
    pub fn population(&self) -> Result<FinitePopulation> {
        let y1 = self.y1.clone().ok_or_else(|| Error::Data("missing column `y1`".into()))?;
        let y0 = self.y0.clone().ok_or_else(|| Error::Data("missing column `y0`".into()))?;
        let has_intercept = (0..self.x.ncols()).any(|j| self.x.column(j).iter().all(|&v| v == 1.0));
        FinitePopulation::new(self.x.clone(), y1, y0, has_intercept)
    }
}

fn parse_f64(s: &str, row: usize, col: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::Data(format!("row {row}, column `{col}`: cannot parse `{s}` as a number")))?;
    if !v.is_finite() {
        return Err(Error::Data(format!("row {row}, column `{col}`: non-finite value")));
    }
    Ok(v)
}

/// Reads a headed CSV with covariates `x1..xd` and any of `y, t, y1, y0`.
pub fn read_csv<R: Read>(reader: R) -> Result<CsvTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Data(format!("cannot read header: {e}")))?.clone();

    let mut xcols: Vec<(usize, usize)> = Vec::new();
    let (mut yc, mut tc, mut y1c, mut y0c) = (None, None, None, None);
    for (pos, h) in headers.iter().enumerate() {
        match h {
            "y" => yc = Some(pos),
            "t" => tc = Some(pos),
            "y1" => y1c = Some(pos),
            "y0" => y0c = Some(pos),
            _ => match h.strip_prefix('x').and_then(|k| k.parse::<usize>().ok()) {
                Some(k) if k >= 1 => xcols.push((k, pos)),
                _ => return Err(Error::Data(format!("unexpected column `{h}`"))),
            },
        }
    }
    xcols.sort_unstable();
    for (want, (k, _)) in xcols.iter().enumerate() {
        if *k != want + 1 {
            return Err(Error::Data(format!("covariate columns must be x1..xd without gaps (missing x{})", want + 1)));
        }
    }
    if xcols.is_empty() {
        return Err(Error::Data("no covariate columns `x1..xd`".into()));
    }

    let d = xcols.len();
    let mut xs = Vec::new();
    let (mut y, mut t, mut y1, mut y0) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Data(format!("row {}: {e}", row + 1)))?;
        let row = row + 1;
        for &(k, pos) in &xcols {
            xs.push(parse_f64(&rec[pos], row, &format!("x{k}"))?);
        }
        if let Some(p) = yc {
            y.push(parse_f64(&rec[p], row, "y")?);
        }
        if let Some(p) = tc {
            t.push(match rec[p].trim() {
                "1" => true,
                "0" => false,
                other => return Err(Error::Data(format!("row {row}, column `t`: expected 0 or 1, got `{other}`"))),
            });
        }
        if let Some(p) = y1c {
            y1.push(parse_f64(&rec[p], row, "y1")?);
        }
        if let Some(p) = y0c {
            y0.push(parse_f64(&rec[p], row, "y0")?);
        }
    }
    let n = xs.len() / d;
    if n == 0 {
        return Err(Error::Data("data file has no rows".into()));
    }
    Ok(CsvTable {
        x: DMatrix::from_row_slice(n, d, &xs),
        y: yc.map(|_| y),
        t: tc.map(|_| t),
        y1: y1c.map(|_| y1),
        y0: y0c.map(|_| y0),
    })
}
