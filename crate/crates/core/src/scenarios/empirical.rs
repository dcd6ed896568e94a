use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{RngStream, SampleMatrix, Sampler, ScenarioError};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmpiricalConfig {
    pub path: PathBuf,
    #[serde(default)]
    pub header: bool,
}

/// Bootstrap sampler over the rows of a CSV file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "EmpiricalConfig", into = "EmpiricalConfig")]
pub struct EmpiricalModel {
    source: Option<EmpiricalConfig>,
    data: SampleMatrix,
}

impl TryFrom<EmpiricalConfig> for EmpiricalModel {
    type Error = ScenarioError;

    fn try_from(cfg: EmpiricalConfig) -> Result<Self, Self::Error> {
        EmpiricalModel::from_csv(&cfg.path, cfg.header)
    }
}

impl From<EmpiricalModel> for EmpiricalConfig {
    fn from(m: EmpiricalModel) -> Self {
        m.source.unwrap_or(EmpiricalConfig {
            path: PathBuf::new(),
            header: false,
        })
    }
}

impl EmpiricalModel {
    pub fn new(data: SampleMatrix) -> Result<Self, ScenarioError> {
        if data.is_empty() {
            return Err(ScenarioError::EmptyData);
        }
        Ok(EmpiricalModel { source: None, data })
    }

    pub fn from_csv(path: &Path, header: bool) -> Result<Self, ScenarioError> {
        let file = std::fs::File::open(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let data = read_csv_matrix(file, header)?;
        Ok(EmpiricalModel {
            source: Some(EmpiricalConfig {
                path: path.to_path_buf(),
                header,
            }),
            data,
        })
    }

    pub fn data(&self) -> &SampleMatrix {
        &self.data
    }
}

/// Parses comma-separated reals, one observation per row. Row and column
/// numbers in errors are 1-based and count the header line when present.
pub fn read_csv_matrix<R: std::io::Read>(
    reader: R,
    header: bool,
) -> Result<SampleMatrix, ScenarioError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(header)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let offset = if header { 2 } else { 1 };
    let mut matrix: Option<SampleMatrix> = None;
    let mut row_buf = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + offset;
        let record = record.map_err(|e| ScenarioError::Csv {
            row,
            column: 0,
            message: e.to_string(),
        })?;
        row_buf.clear();
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| ScenarioError::Csv {
                row,
                column: j + 1,
                message: format!("cannot parse {cell:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(ScenarioError::Csv {
                    row,
                    column: j + 1,
                    message: format!("non-finite value {cell:?}"),
                });
            }
            row_buf.push(v);
        }
        let m = matrix.get_or_insert_with(|| SampleMatrix::new(row_buf.len()));
        m.push_row(&row_buf).map_err(|_| ScenarioError::Csv {
            row,
            column: row_buf.len().min(m.dim()) + 1,
            message: format!("expected {} columns, found {}", m.dim(), row_buf.len()),
        })?;
    }
    match matrix {
        Some(m) if m.dim() > 0 => Ok(m),
        _ => Err(ScenarioError::EmptyData),
    }
}

impl Sampler for EmpiricalModel {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    #[inline]
    fn sample_into(&self, rng: &mut RngStream, out: &mut [f64]) {
        let i = rng.random_range(0..self.data.rows());
        out.copy_from_slice(self.data.row(i));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn single_row_is_always_drawn() {
        let f = write_tmp("0.5,-1.5\n");
        let m = EmpiricalModel::from_csv(f.path(), false).unwrap();
        let s = m.sample(&mut RngStream::new(1), 100);
        assert!(s.iter_rows().all(|r| r == [0.5, -1.5]));
    }

    #[test]
    fn two_rows_are_drawn_evenly() {
        let f = write_tmp("a,b\n1,1\n2,2\n");
        let m = EmpiricalModel::from_csv(f.path(), true).unwrap();
        let n = 100_000;
        let s = m.sample(&mut RngStream::new(2), n);
        let ones = s.iter_rows().filter(|r| r[0] == 1.0).count() as f64 / n as f64;
        assert!((ones - 0.5).abs() < 0.01);
    }

    #[test]
    fn malformed_cell_reports_location() {
        let f = write_tmp("1,2\n3,x\n");
        match EmpiricalModel::from_csv(f.path(), false) {
            Err(ScenarioError::Csv { row, column, .. }) => assert_eq!((row, column), (2, 2)),
            other => panic!("unexpected {other:?}"),
        }
        let f = write_tmp("h1,h2\n1,2\n3,nan\n");
        match EmpiricalModel::from_csv(f.path(), true) {
            Err(ScenarioError::Csv { row, column, .. }) => assert_eq!((row, column), (3, 2)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_rejected() {
        let f = write_tmp("");
        assert!(matches!(
            EmpiricalModel::from_csv(f.path(), false),
            Err(ScenarioError::EmptyData)
        ));
        let f = write_tmp("a,b\n");
        assert!(matches!(
            EmpiricalModel::from_csv(f.path(), true),
            Err(ScenarioError::EmptyData)
        ));
    }

    #[test]
    fn missing_file_is_an_io_error() {
        assert!(matches!(
            EmpiricalModel::from_csv(Path::new("/nonexistent/x.csv"), false),
            Err(ScenarioError::Io { .. })
        ));
    }
}
