//! Profile CSV files.
//!
//! Header `id,label,spacing_um,h_0,...,h_{N-1}`, one profile per row. Micro
//! profile files carry an extra `component` column (after `spacing_um`) whose
//! value is `micro` or `macro`; each profile then spans two rows.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{MicroProfile, RoughnessProfile};
use crate::error::{Error, Result};

/// Scientific notation with 17 significant digits; parses back to the same bits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

struct Table {
    path: String,
    header: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
}

fn read_table(path: &Path) -> Result<Table> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(std::io::BufReader::new(file));
    let mut records = reader.records();
    let header = match records.next() {
        Some(Ok(r)) => r.iter().map(|s| s.trim().to_string()).collect::<Vec<_>>(),
        Some(Err(e)) => {
            return Err(Error::Parse {
                path: display,
                row: 1,
                column: 0,
                message: e.to_string(),
            })
        }
        None => {
            return Err(Error::Parse {
                path: display,
                row: 1,
                column: 0,
                message: "missing header".into(),
            })
        }
    };
    let mut rows = Vec::new();
    for (i, rec) in records.enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse {
            path: display.clone(),
            row: line,
            column: 0,
            message: e.to_string(),
        })?;
        if rec.len() == 1 && rec.get(0).is_some_and(|s| s.trim().is_empty()) {
            continue;
        }
        if rec.len() != header.len() {
            return Err(Error::Parse {
                path: display,
                row: line,
                column: rec.len().min(header.len()) + 1,
                message: format!(
                    "ragged row: {} fields, header has {}",
                    rec.len(),
                    header.len()
                ),
            });
        }
        rows.push((line, rec.iter().map(|s| s.trim().to_string()).collect()));
    }
    Ok(Table {
        path: display,
        header,
        rows,
    })
}

impl Table {
    fn err(&self, row: usize, column: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            row,
            column,
            message: message.into(),
        }
    }

    fn expect_header(&self, fixed: &[&str]) -> Result<usize> {
        for (j, name) in fixed.iter().enumerate() {
            if self.header.get(j).map(String::as_str) != Some(*name) {
                return Err(self.err(1, j + 1, format!("missing header column `{name}`")));
            }
        }
        let n = self.header.len() - fixed.len();
        for (k, name) in self.header[fixed.len()..].iter().enumerate() {
            if *name != format!("h_{k}") {
                return Err(self.err(
                    1,
                    fixed.len() + k + 1,
                    format!("expected header `h_{k}`, found `{name}`"),
                ));
            }
        }
        if n < 2 {
            return Err(self.err(1, fixed.len() + 1, "need at least two height columns"));
        }
        Ok(n)
    }

    fn number(&self, row: usize, column: usize, cell: &str) -> Result<f64> {
        cell.parse::<f64>()
            .map_err(|_| self.err(row, column + 1, format!("non-numeric value `{cell}`")))
    }

    fn label(&self, row: usize, cell: &str) -> Result<Option<usize>> {
        if cell.is_empty() {
            return Ok(None);
        }
        cell.parse::<usize>()
            .map(Some)
            .map_err(|_| self.err(row, 2, format!("invalid class label `{cell}`")))
    }
}

fn build_profile(
    table: &Table,
    line: usize,
    cells: &[String],
    offset: usize,
) -> Result<RoughnessProfile> {
    let label = table.label(line, &cells[1])?;
    let spacing = table.number(line, 2, &cells[2])?;
    let heights = cells[offset..]
        .iter()
        .enumerate()
        .map(|(k, c)| table.number(line, offset + k, c))
        .collect::<Result<Vec<_>>>()?;
    RoughnessProfile::new(cells[0].clone(), heights, spacing, label).map_err(|e| match e {
        Error::InvalidData(m) => table.err(line, 0, m),
        other => other,
    })
}

pub fn load_profiles(path: impl AsRef<Path>) -> Result<Vec<RoughnessProfile>> {
    let table = read_table(path.as_ref())?;
    table.expect_header(&["id", "label", "spacing_um"])?;
    table
        .rows
        .iter()
        .map(|(line, cells)| build_profile(&table, *line, cells, 3))
        .collect()
}

fn height_header(n: usize) -> impl Iterator<Item = String> {
    (0..n).map(|k| format!("h_{k}"))
}

fn check_uniform(lengths: impl Iterator<Item = usize>) -> Result<usize> {
    let mut n = None;
    for len in lengths {
        match n {
            None => n = Some(len),
            Some(m) if m != len => {
                return Err(Error::InvalidData(format!(
                    "profiles of different lengths ({m} and {len}) cannot share one file"
                )))
            }
            _ => {}
        }
    }
    n.ok_or_else(|| Error::InvalidData("no profiles to write".into()))
}

fn write_row(out: &mut impl Write, fields: &[String], heights: &[f64]) -> std::io::Result<()> {
    out.write_all(fields.join(",").as_bytes())?;
    for h in heights {
        out.write_all(b",")?;
        out.write_all(fmt_f64(*h).as_bytes())?;
    }
    out.write_all(b"\n")
}

fn label_cell(label: Option<usize>) -> String {
    label.map(|l| l.to_string()).unwrap_or_default()
}

fn check_id(id: &str) -> Result<()> {
    if id.contains([',', '"', '\n', '\r']) {
        return Err(Error::InvalidData(format!(
            "profile id `{id}` contains a CSV delimiter"
        )));
    }
    Ok(())
}

pub fn save_profiles(profiles: &[RoughnessProfile], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let n = check_uniform(profiles.iter().map(|p| p.heights.len()))?;
    let io = |e| Error::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    let header: Vec<String> = ["id", "label", "spacing_um"]
        .iter()
        .map(|s| s.to_string())
        .chain(height_header(n))
        .collect();
    writeln!(out, "{}", header.join(",")).map_err(io)?;
    for p in profiles {
        check_id(&p.id)?;
        let fields = [p.id.clone(), label_cell(p.label), fmt_f64(p.spacing)];
        write_row(&mut out, &fields, &p.heights).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn save_micro_profiles(profiles: &[MicroProfile], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let n = check_uniform(profiles.iter().map(|p| p.micro.heights.len()))?;
    let io = |e| Error::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    let header: Vec<String> = ["id", "label", "spacing_um", "component"]
        .iter()
        .map(|s| s.to_string())
        .chain(height_header(n))
        .collect();
    writeln!(out, "{}", header.join(",")).map_err(io)?;
    for p in profiles {
        let m = &p.micro;
        check_id(&m.id)?;
        let base = [m.id.clone(), label_cell(m.label), fmt_f64(m.spacing)];
        for (component, heights) in [("micro", &m.heights), ("macro", &p.macro_heights)] {
            let mut fields = base.to_vec();
            fields.push(component.to_string());
            write_row(&mut out, &fields, heights).map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

pub fn load_micro_profiles(path: impl AsRef<Path>) -> Result<Vec<MicroProfile>> {
    let table = read_table(path.as_ref())?;
    table.expect_header(&["id", "label", "spacing_um", "component"])?;
    let mut order = Vec::new();
    let mut parts: BTreeMap<String, (Option<RoughnessProfile>, Option<Vec<f64>>)> =
        BTreeMap::new();
    for (line, cells) in &table.rows {
        let p = build_profile(&table, *line, cells, 4)?;
        let slot = parts.entry(p.id.clone()).or_insert_with(|| {
            order.push(p.id.clone());
            (None, None)
        });
        match cells[3].as_str() {
            "micro" if slot.0.is_none() => slot.0 = Some(p),
            "macro" if slot.1.is_none() => slot.1 = Some(p.heights),
            "micro" | "macro" => {
                return Err(table.err(*line, 4, format!("duplicate component for `{}`", p.id)))
            }
            other => {
                return Err(table.err(*line, 4, format!("unknown component `{other}`")));
            }
        }
    }
    order
        .into_iter()
        .map(|id| match parts.remove(&id) {
            Some((Some(micro), Some(macro_heights))) => Ok(MicroProfile {
                micro,
                macro_heights,
            }),
            _ => Err(Error::InvalidData(format!(
                "profile `{id}` lacks its micro or macro row"
            ))),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::decompose;

    fn sample(n: usize) -> Vec<RoughnessProfile> {
        (0..3)
            .map(|j| {
                let h = (0..n)
                    .map(|i| ((i * 7 + j * 13) as f64 * 0.37).sin() * 3.3 + 1e-7 * i as f64)
                    .collect();
                RoughnessProfile::new(format!("p{j}"), h, 3.0, (j != 1).then_some(j + 1)).unwrap()
            })
            .collect()
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let profiles = sample(40);
        save_profiles(&profiles, &path).unwrap();
        let back = load_profiles(&path).unwrap();
        assert_eq!(back, profiles);
        // format keeps at least nine significant digits
        let text = std::fs::read_to_string(&path).unwrap();
        let first = text.lines().nth(1).unwrap().split(',').nth(3).unwrap();
        let mantissa = first.split('e').next().unwrap().replace(['.', '-'], "");
        assert!(mantissa.len() >= 9);
    }

    #[test]
    fn micro_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let micro: Vec<_> = sample(30)
            .iter()
            .map(|p| decompose(p, 20.0).unwrap())
            .collect();
        save_micro_profiles(&micro, &path).unwrap();
        assert_eq!(load_micro_profiles(&path).unwrap(), micro);
    }

    #[test]
    fn non_numeric_cell_names_its_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(
            &path,
            "id,label,spacing_um,h_0,h_1\na,1,3.0,0.5,1.5\nb,2,3.0,abc,1.0\n",
        )
        .unwrap();
        match load_profiles(&path) {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column), (3, 4)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ragged_and_headerless_files_fail() {
        let dir = tempfile::tempdir().unwrap();
        let ragged = dir.path().join("r.csv");
        std::fs::write(&ragged, "id,label,spacing_um,h_0,h_1\na,1,3.0,0.5\n").unwrap();
        assert!(matches!(
            load_profiles(&ragged),
            Err(Error::Parse { row: 2, .. })
        ));
        let headerless = dir.path().join("h.csv");
        std::fs::write(&headerless, "a,1,3.0,0.5,1.0\n").unwrap();
        assert!(matches!(
            load_profiles(&headerless),
            Err(Error::Parse { row: 1, .. })
        ));
        let empty = dir.path().join("e.csv");
        std::fs::write(&empty, "").unwrap();
        assert!(matches!(load_profiles(&empty), Err(Error::Parse { .. })));
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let err = load_profiles("/nonexistent/profiles.csv").unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn full_scale_file_loads_quickly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("big.csv");
        let profiles: Vec<_> = (0..1011)
            .map(|j| {
                let h = (0..1000).map(|i| ((i + j) as f64 * 0.013).sin()).collect();
                RoughnessProfile::new(format!("s{j}"), h, 3.0, Some(j % 12 + 1)).unwrap()
            })
            .collect();
        save_profiles(&profiles, &path).unwrap();
        let t = std::time::Instant::now();
        let back = load_profiles(&path).unwrap();
        assert!(t.elapsed().as_secs_f64() < 5.0);
        assert_eq!(back.len(), 1011);
    }
}
