//! Deterministic CSV tables.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use phrom::bench::ExperimentResult;
use phrom::integrate::Trajectory;
use phrom::rom::RomMethod;

/// One CSV field.
#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Real(f64),
    Int(usize),
    Text(String),
    Empty,
}

impl Field {
    fn render(&self) -> String {
        match self {
            Field::Real(v) => format_real(*v),
            Field::Int(v) => v.to_string(),
            Field::Text(s) => s.clone(),
            Field::Empty => String::new(),
        }
    }
}

/// Scientific notation with 17 significant digits; parses back to the same
/// binary double.
pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Field>>,
}

#[derive(Debug, thiserror::Error)]
#[error("cannot write '{path}': {reason}")]
pub struct WriteError {
    pub path: PathBuf,
    pub reason: String,
}

pub fn write_csv(table: &Table, path: &Path) -> Result<(), WriteError> {
    let fail = |reason: String| WriteError {
        path: path.to_path_buf(),
        reason,
    };
    if let Some(bad) = table.rows.iter().find(|r| r.len() != table.header.len()) {
        return Err(fail(format!(
            "row has {} fields, header has {}",
            bad.len(),
            table.header.len()
        )));
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| fail(e.to_string()))?;
    w.write_record(&table.header)
        .map_err(|e| fail(e.to_string()))?;
    for row in &table.rows {
        w.write_record(row.iter().map(Field::render))
            .map_err(|e| fail(e.to_string()))?;
    }
    w.flush().map_err(|e| fail(e.to_string()))
}

pub fn errors_table(res: &ExperimentResult) -> Table {
    let header = [
        "method",
        "r",
        "e_x_red",
        "e_x_proj",
        "e_x_lowerbound",
        "e_y",
    ];
    let rows = res
        .rows
        .iter()
        .map(|row| {
            let mut fields = vec![Field::Text(row.method.name().into()), Field::Int(row.r)];
            match &row.result {
                Ok(m) => fields.extend([
                    Field::Real(m.e_x_red),
                    Field::Real(m.e_x_proj),
                    m.e_x_lowerbound.map_or(Field::Empty, Field::Real),
                    Field::Real(m.e_y),
                ]),
                Err(_) => fields.extend(std::iter::repeat_n(Field::Empty, 4)),
            }
            fields
        })
        .collect();
    Table {
        header: header.iter().map(|s| s.to_string()).collect(),
        rows,
    }
}

pub fn failures_table(res: &ExperimentResult) -> Table {
    Table {
        header: vec!["method".into(), "r".into(), "error".into()],
        rows: res
            .failures()
            .map(|(row, e)| {
                vec![
                    Field::Text(row.method.name().into()),
                    Field::Int(row.r),
                    Field::Text(e.to_string()),
                ]
            })
            .collect(),
    }
}

/// FOM energy-balance error and every successful method at `energy_r`.
pub fn energy_table(res: &ExperimentResult, energy_r: usize) -> Table {
    let mut header = vec!["t".to_string(), "error_energy_fom".to_string()];
    let mut series: Vec<&[f64]> = vec![&res.fom_energy];
    for method in RomMethod::ALL {
        if let Some(m) = res.metrics(method, energy_r) {
            header.push(format!("error_energy_{}", method.name()));
            series.push(&m.energy_error);
        }
    }
    let grid = res.fom.grid;
    let rows = (0..grid.n_points())
        .map(|i| {
            let mut row = vec![Field::Real(grid.time(i))];
            row.extend(series.iter().map(|s| Field::Real(s[i])));
            row
        })
        .collect();
    Table { header, rows }
}

/// `t, y_1..y_m, H, x_1..x_N`.
pub fn trajectory_table(traj: &Trajectory, energy: &[f64]) -> Table {
    let (n, m) = (traj.states.nrows(), traj.outputs.nrows());
    let mut header = vec!["t".to_string()];
    header.extend((1..=m).map(|k| format!("y_{k}")));
    header.push("H".into());
    header.extend((1..=n).map(|k| format!("x_{k}")));
    let rows = (0..traj.states.ncols())
        .map(|i| {
            let mut row = vec![Field::Real(traj.grid.time(i))];
            row.extend(traj.outputs.column(i).iter().map(|&v| Field::Real(v)));
            row.push(Field::Real(energy[i]));
            row.extend(traj.states.column(i).iter().map(|&v| Field::Real(v)));
            row
        })
        .collect();
    Table { header, rows }
}

/// Dense matrix with columns `col_1..col_k`.
pub fn matrix_table(a: &DMatrix<f64>) -> Table {
    Table {
        header: (1..=a.ncols()).map(|k| format!("col_{k}")).collect(),
        rows: a
            .row_iter()
            .map(|r| r.iter().map(|&v| Field::Real(v)).collect())
            .collect(),
    }
}
