//! DIC curve CSV: `id,stage,eps_z_um,artifact_value,d_0,...,d_{M-1}`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{CurveStage, DicCurve};
use crate::error::{Error, Result};
use crate::profile::io::fmt_f64;

#[derive(Clone, Debug, PartialEq)]
pub struct DicRecord {
    pub id: String,
    pub eps_z: f64,
    pub curve: DicCurve,
}

pub fn save_curves(records: &[DicRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let m = records
        .first()
        .map(|r| r.curve.len())
        .ok_or_else(|| Error::InvalidData("no curves to write".into()))?;
    if records.iter().any(|r| r.curve.len() != m) {
        return Err(Error::InvalidData(
            "curves of different lengths cannot share one file".into(),
        ));
    }
    let io = |e| Error::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    let mut header = String::from("id,stage,eps_z_um,artifact_value");
    for k in 0..m {
        header.push_str(&format!(",d_{k}"));
    }
    writeln!(out, "{header}").map_err(io)?;
    for r in records {
        let artifact = r.curve.artifact_value.map(fmt_f64).unwrap_or_default();
        write!(
            out,
            "{},{},{},{}",
            r.id,
            r.curve.stage.as_str(),
            fmt_f64(r.eps_z),
            artifact
        )
        .map_err(io)?;
        for v in &r.curve.values {
            write!(out, ",{}", fmt_f64(*v)).map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn load_curves(path: impl AsRef<Path>) -> Result<Vec<DicRecord>> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let err = |row: usize, column: usize, message: String| Error::Parse {
        path: display.clone(),
        row,
        column,
        message,
    };
    let reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(Ok(h)) => h,
        Some(Err(e)) => return Err(Error::io(path, e)),
        None => return Err(err(1, 0, "missing header".into())),
    };
    let cols: Vec<&str> = header.trim_end().split(',').collect();
    let fixed = ["id", "stage", "eps_z_um", "artifact_value"];
    for (j, name) in fixed.iter().enumerate() {
        if cols.get(j) != Some(name) {
            return Err(err(1, j + 1, format!("missing header column `{name}`")));
        }
    }
    for (k, name) in cols[4..].iter().enumerate() {
        if *name != format!("d_{k}") {
            return Err(err(1, k + 5, format!("expected `d_{k}`, found `{name}`")));
        }
    }
    let m = cols.len() - 4;
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.trim_end().split(',').collect();
        if cells.len() != m + 4 {
            return Err(err(
                row,
                cells.len().min(m + 4) + 1,
                format!("ragged row: {} fields, header has {}", cells.len(), m + 4),
            ));
        }
        let num = |j: usize| {
            cells[j]
                .parse::<f64>()
                .map_err(|_| err(row, j + 1, format!("non-numeric value `{}`", cells[j])))
        };
        let stage = CurveStage::parse(cells[1])
            .ok_or_else(|| err(row, 2, format!("unknown stage `{}`", cells[1])))?;
        let artifact_value = if cells[3].is_empty() {
            None
        } else {
            Some(num(3)?)
        };
        let values = (4..m + 4).map(num).collect::<Result<Vec<_>>>()?;
        records.push(DicRecord {
            id: cells[0].to_string(),
            eps_z: num(2)?,
            curve: DicCurve {
                values,
                stage,
                artifact_value,
            },
        });
    }
    Ok(records)
}
