//! CSV ingestion. Empty cells mark missing features.

use std::io::Read;
use std::path::Path;

use crate::error::{RermError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Vec<String>,
    /// Row-major features; missing cells hold `NaN`.
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    /// `missing[i][j]` is set when feature `j` of row `i` was empty.
    pub missing: Vec<Vec<bool>>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn has_missing(&self) -> bool {
        self.missing.iter().flatten().any(|&m| m)
    }
}

/// Load `target` and `features` from a CSV file with a header row. An empty
/// feature list selects every column except the target.
pub fn load_csv(path: impl AsRef<Path>, target: &str, features: &[String]) -> Result<Dataset> {
    read_csv(std::fs::File::open(path)?, target, features)
}

pub fn read_csv<R: Read>(reader: R, target: &str, features: &[String]) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(1, "", e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| csv_error(1, name, "column not found in header".into()))
    };
    let target_col = find(target)?;
    let names: Vec<String> = if features.is_empty() {
        header.iter().filter(|h| *h != target).cloned().collect()
    } else {
        features.to_vec()
    };
    let cols = names.iter().map(|f| find(f)).collect::<Result<Vec<_>>>()?;

    let mut data = Dataset {
        features: names,
        x: Vec::new(),
        y: Vec::new(),
        missing: Vec::new(),
    };
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            csv_error(line, "", e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != header.len() {
            return Err(csv_error(
                line,
                "",
                format!("expected {} fields as in the header, found {}", header.len(), record.len()),
            ));
        }
        let cell = |col: usize| -> Result<Option<f64>> {
            let s = &record[col];
            if s.is_empty() {
                return Ok(None);
            }
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(Some)
                .ok_or_else(|| csv_error(line, &header[col], format!("'{s}' is not a finite number")))
        };
        let y = cell(target_col)?.ok_or_else(|| csv_error(line, target, "target value is missing".into()))?;
        let mut row = Vec::with_capacity(cols.len());
        let mut mask = Vec::with_capacity(cols.len());
        for &c in &cols {
            let v = cell(c)?;
            row.push(v.unwrap_or(f64::NAN));
            mask.push(v.is_none());
        }
        data.x.push(row);
        data.y.push(y);
        data.missing.push(mask);
    }
    Ok(data)
}

fn csv_error(line: usize, column: &str, message: String) -> RermError {
    RermError::Csv {
        line,
        column: column.to_string(),
        message,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(s: &str, features: &[&str]) -> Result<Dataset> {
        let f: Vec<String> = features.iter().map(|s| s.to_string()).collect();
        read_csv(s.as_bytes(), "y", &f)
    }

    #[test]
    fn toy_file() {
        let d = read("a,y,b\n1,2,3\n4,5,6\n-1.5,0,1e2\n", &[]).unwrap();
        assert_eq!(d.features, vec!["a", "b"]);
        assert_eq!(d.x, vec![vec![1.0, 3.0], vec![4.0, 6.0], vec![-1.5, 100.0]]);
        assert_eq!(d.y, vec![2.0, 5.0, 0.0]);
        assert!(!d.has_missing());
        let d = read("a,y,b\n1,2,3\n", &["b", "a"]).unwrap();
        assert_eq!(d.x, vec![vec![3.0, 1.0]]);
    }

    #[test]
    fn empty_cell_sets_mask() {
        let d = read("a,b,y\n1,,3\n4,5,6\n", &[]).unwrap();
        assert_eq!(d.missing, vec![vec![false, true], vec![false, false]]);
        assert!(d.x[0][1].is_nan());
        assert_eq!(d.n(), 2);
    }

    #[test]
    fn errors_name_line_and_column() {
        match read("a,y\n1,2\n3,4,5\n", &[]) {
            Err(RermError::Csv { line: 3, .. }) => {}
            other => panic!("{other:?}"),
        }
        match read("a,y\n1,2\nx,4\n", &[]) {
            Err(RermError::Csv { line: 3, column, .. }) => assert_eq!(column, "a"),
            other => panic!("{other:?}"),
        }
        match read("a,y\n1,\n", &[]) {
            Err(RermError::Csv { line: 2, column, .. }) => assert_eq!(column, "y"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(read("a,b\n1,2\n", &[]), Err(RermError::Csv { line: 1, .. })));
        assert!(matches!(read("a,y\n1,2\n", &["c"]), Err(RermError::Csv { line: 1, .. })));
        assert!(read("a,y\n1,inf\n", &[]).is_err());
    }

    #[test]
    fn reads_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "x,y\n0.5,1\n").unwrap();
        let d = load_csv(&path, "y", &[]).unwrap();
        assert_eq!(d.x, vec![vec![0.5]]);
    }
}
