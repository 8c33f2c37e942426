//! CSV ingestion for the command line.

use std::io::Read;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::Dataset;

/// Numeric table read from a CSV file with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub headers: Vec<String>,
    /// Column-major values.
    pub columns: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidInput(format!("column {name:?} not found in header")))
    }
}

/// Parse a CSV whose every cell is a finite number. Rows are numbered from
/// 1 for the first data line.
pub fn read_csv<R: Read>(input: R) -> Result<CsvTable> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(Error::InvalidInput("missing header row".into()));
    }
    for (k, h) in headers.iter().enumerate() {
        if h.is_empty() {
            return Err(Error::InvalidInput(format!("column {} has an empty name", k + 1)));
        }
        if headers[..k].contains(h) {
            return Err(Error::InvalidInput(format!("column {h:?} appears twice in header")));
        }
    }
    let mut columns = vec![Vec::new(); headers.len()];
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::InvalidInput(format!("row {row}: {e}")))?;
        for (k, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                Error::InvalidInput(format!("row {row}, column {:?}: {cell:?} is not a number", headers[k]))
            })?;
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "row {row}, column {:?}: value is not finite",
                    headers[k]
                )));
            }
            columns[k].push(v);
        }
    }
    if columns[0].is_empty() {
        return Err(Error::InvalidInput("no data rows".into()));
    }
    Ok(CsvTable { headers, columns })
}

/// Dataset assembled from a table, with the per-group random-effects design
/// when random-effect columns were requested.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub data: Dataset,
    pub random_design: Option<Vec<DMatrix<f64>>>,
}

/// Response `response`; every other column except `group_col` is a feature.
/// With a group column, the random design of each group is an intercept
/// followed by the `random_cols` columns.
pub fn load_dataset(
    table: &CsvTable,
    response: &str,
    group_col: Option<&str>,
    random_cols: &[String],
) -> Result<LoadedData> {
    let yk = table.column_index(response)?;
    let gk = group_col.map(|g| table.column_index(g)).transpose()?;
    let feature_cols: Vec<usize> = (0..table.headers.len()).filter(|&k| k != yk && Some(k) != gk).collect();
    if feature_cols.is_empty() {
        return Err(Error::InvalidInput("no feature columns besides the response".into()));
    }
    let n = table.n_rows();
    let x = DMatrix::from_fn(n, feature_cols.len(), |i, j| table.columns[feature_cols[j]][i]);
    let y = DVector::from_column_slice(&table.columns[yk]);
    let names = feature_cols.iter().map(|&k| table.headers[k].clone()).collect();
    let mut data = Dataset::new(x, y, Some(names))?;

    let Some(gk) = gk else {
        if !random_cols.is_empty() {
            return Err(Error::InvalidInput("random-effect columns need a group column".into()));
        }
        return Ok(LoadedData {
            data,
            random_design: None,
        });
    };
    let mut labels = Vec::with_capacity(n);
    for (i, &v) in table.columns[gk].iter().enumerate() {
        if v.fract() != 0.0 || v.abs() > 9.0e15 {
            return Err(Error::InvalidInput(format!(
                "row {}, column {:?}: group label {v} is not an integer",
                i + 1,
                table.headers[gk]
            )));
        }
        labels.push(v as i64);
    }
    let random_idx = random_cols
        .iter()
        .map(|c| table.column_index(c))
        .collect::<Result<Vec<_>>>()?;
    let groups = Dataset::groups_from_labels(&labels);
    let design = groups
        .iter()
        .map(|rows| {
            DMatrix::from_fn(rows.len(), random_idx.len() + 1, |i, j| {
                if j == 0 {
                    1.0
                } else {
                    table.columns[random_idx[j - 1]][rows[i]]
                }
            })
        })
        .collect();
    data = data.with_groups(groups)?;
    Ok(LoadedData {
        data,
        random_design: Some(design),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(text: &str) -> Result<CsvTable> {
        read_csv(text.as_bytes())
    }

    #[test]
    fn reads_numbers() {
        let t = table("a,y,b\n1,2,3\n4,5,6\n").unwrap();
        assert_eq!(t.headers, vec!["a", "y", "b"]);
        assert_eq!(t.columns[2], vec![3.0, 6.0]);
        let d = load_dataset(&t, "y", None, &[]).unwrap();
        assert_eq!(d.data.feature_names(), ["a", "b"]);
        assert_eq!(d.data.y().as_slice(), &[2.0, 5.0]);
        assert_eq!(d.data.x()[(1, 1)], 6.0);
    }

    #[test]
    fn bad_cell_names_row_and_column() {
        let e = table("a,y\n1,2\n3,oops\n").unwrap_err().to_string();
        assert!(e.contains("row 2") && e.contains("\"y\""), "{e}");
        let e = table("a,y\n1,2\n3,NaN\n").unwrap_err().to_string();
        assert!(e.contains("row 2"), "{e}");
    }

    #[test]
    fn ragged_row_is_reported() {
        let e = table("a,y\n1,2\n3\n").unwrap_err().to_string();
        assert!(e.contains("row 2"), "{e}");
    }

    #[test]
    fn missing_response_names_column() {
        let t = table("a,b\n1,2\n").unwrap();
        let e = load_dataset(&t, "y", None, &[]).unwrap_err().to_string();
        assert!(e.contains("\"y\""), "{e}");
    }

    #[test]
    fn groups_and_random_design() {
        let t = table("g,x,y\n2,0.5,1\n1,1.5,2\n2,2.5,3\n").unwrap();
        let d = load_dataset(&t, "y", Some("g"), &["x".to_string()]).unwrap();
        assert_eq!(d.data.p(), 1);
        let groups = d.data.groups().unwrap();
        assert_eq!(groups.len(), 2);
        let z = d.random_design.unwrap();
        let g2 = groups.iter().position(|g| g.len() == 2).unwrap();
        assert_eq!(z[g2].shape(), (2, 2));
        assert_eq!(z[g2].column(1).as_slice(), &[0.5, 2.5]);
    }

    #[test]
    fn fractional_group_label_rejected() {
        let t = table("g,x,y\n1.5,0,1\n").unwrap();
        let e = load_dataset(&t, "y", Some("g"), &[]).unwrap_err().to_string();
        assert!(e.contains("row 1"), "{e}");
    }

    #[test]
    fn duplicate_header_rejected() {
        assert!(table("a,a\n1,2\n").is_err());
        assert!(table("a,y\n").is_err());
    }
}
