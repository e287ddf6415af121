//! CSV encoding: `knot_index,time,x_1..x_d,is_jump,left_1..left_d`.
//!
//! Floats are written in Rust's shortest round-trip form, so reading a
//! written file reproduces the path bit for bit. The trailing `left_*`
//! columns may be omitted on input; jump knots then take the previous knot
//! value as their left limit.

use super::{CadlagPath, PathError, TimeGrid};
use std::io::{Read, Write};

fn csv_err(line: u64, message: impl Into<String>) -> PathError {
    PathError::Csv { line, message: message.into() }
}

impl CadlagPath {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), PathError> {
        let d = self.dim;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["knot_index".to_string(), "time".to_string()];
        header.extend((1..=d).map(|i| format!("x_{i}")));
        header.push("is_jump".into());
        header.extend((1..=d).map(|i| format!("left_{i}")));
        let io = |e: csv::Error| PathError::Invalid(e.to_string());
        w.write_record(&header).map_err(io)?;
        let mut row = Vec::with_capacity(header.len());
        for k in 0..self.grid.len() {
            row.clear();
            row.push(k.to_string());
            row.push(format!("{:?}", self.grid.knot(k)));
            row.extend(self.value(k).iter().map(|v| format!("{v:?}")));
            row.push(if self.jump[k] { "1" } else { "0" }.to_string());
            row.extend(self.left(k).iter().map(|v| format!("{v:?}")));
            w.write_record(&row).map_err(io)?;
        }
        w.flush().map_err(|e| PathError::Invalid(e.to_string()))
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory csv");
        String::from_utf8(buf).expect("utf8 csv")
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, PathError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let header = rdr.headers().map_err(|e| csv_err(1, e.to_string()))?.clone();
        let cols: Vec<&str> = header.iter().map(str::trim).collect();
        if cols.len() < 3 || cols[0] != "knot_index" || cols[1] != "time" {
            return Err(csv_err(1, "header must start with knot_index,time"));
        }
        let d = cols[2..].iter().take_while(|c| c.starts_with("x_")).count();
        for (i, c) in cols[2..2 + d].iter().enumerate() {
            if *c != format!("x_{}", i + 1) {
                return Err(csv_err(1, format!("unexpected column {c}")));
            }
        }
        if cols.get(2 + d) != Some(&"is_jump") {
            return Err(csv_err(1, "missing is_jump column"));
        }
        let rest = &cols[3 + d..];
        let has_left = match rest.len() {
            0 => false,
            n if n == d => {
                for (i, c) in rest.iter().enumerate() {
                    if *c != format!("left_{}", i + 1) {
                        return Err(csv_err(1, format!("unexpected column {c}")));
                    }
                }
                true
            }
            _ => return Err(csv_err(1, "left_* columns must match the x_* columns")),
        };
        let width = cols.len();
        let mut knots = Vec::new();
        let mut values = Vec::new();
        let mut left = Vec::new();
        let mut jump = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                csv_err(line, e.to_string())
            })?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            if rec.len() != width {
                return Err(csv_err(line, format!("expected {width} fields, found {}", rec.len())));
            }
            let num = |s: &str| -> Result<f64, PathError> {
                let v: f64 = s.trim().parse().map_err(|_| csv_err(line, format!("bad number {s:?}")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(csv_err(line, format!("non-finite number {s:?}")))
                }
            };
            let idx: usize = rec[0].trim().parse().map_err(|_| csv_err(line, "bad knot_index"))?;
            if idx != knots.len() {
                return Err(csv_err(line, format!("knot_index {idx} out of sequence")));
            }
            knots.push(num(&rec[1])?);
            for i in 0..d {
                values.push(num(&rec[2 + i])?);
            }
            let flag = match rec[2 + d].trim() {
                "0" => false,
                "1" => true,
                other => return Err(csv_err(line, format!("is_jump must be 0 or 1, got {other:?}"))),
            };
            jump.push(flag);
            if has_left {
                for i in 0..d {
                    left.push(num(&rec[3 + d + i])?);
                }
            } else {
                let k = knots.len() - 1;
                let src = if flag && k > 0 { k - 1 } else { k };
                for i in 0..d {
                    left.push(values[src * d + i]);
                }
            }
        }
        let grid = TimeGrid::new(knots).map_err(|e| csv_err(0, e.to_string()))?;
        CadlagPath::from_parts(grid, d, values, left, jump)
    }

    pub fn from_csv_str(s: &str) -> Result<Self, PathError> {
        Self::read_csv(s.as_bytes())
    }
}
