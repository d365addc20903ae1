//! Dataset export.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::run::{task_data, TaskData};
use crate::error::Result;
use crate::train::Samples;

fn write_rows(path: &Path, header: Vec<String>, rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    w.write_record(&header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| format!("{v:.16e}")))?;
    }
    w.flush()?;
    Ok(())
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn write_samples(path: &Path, s: &Samples) -> Result<()> {
    let n_in = s.inputs.first().map_or(0, Vec::len);
    let n_out = s.targets.first().map_or(0, Vec::len);
    let mut header = names("x", n_in);
    header.extend(names("y", n_out));
    write_rows(path, header, s.inputs.iter().zip(&s.targets).map(|(x, y)| [x.as_slice(), y].concat()))
}

/// Writes the task's data as CSV files into `dir`; returns the files.
///
/// Regression tasks give `train.csv` and `test.csv` (`x…`, `y…`). The
/// operator task gives `grid.csv` and `{train,test}_{g,u}.csv` with one
/// function per row. Physics-informed tasks give `collocation.csv`,
/// `boundary.csv` (`x…`, then targets with empty cells for free
/// components) and `test.csv`.
pub fn generate_data(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut out = |name: &str| {
        let p = dir.join(name);
        files.push(p.clone());
        p
    };
    match task_data(cfg)? {
        TaskData::Regression(split) => {
            write_samples(&out("train.csv"), &split.train)?;
            write_samples(&out("test.csv"), &split.test)?;
        }
        TaskData::Operator(op) => {
            write_rows(&out("grid.csv"), vec!["y".into()], op.grid.iter().map(|&y| vec![y]))?;
            let n = op.grid.len();
            for (name, rows, prefix) in [
                ("train_g.csv", &op.train_g, "g"),
                ("train_u.csv", &op.train_u, "u"),
                ("test_g.csv", &op.test_g, "g"),
                ("test_u.csv", &op.test_u, "u"),
            ] {
                write_rows(&out(name), names(prefix, n), rows.iter().cloned())?;
            }
        }
        TaskData::Pinn(p) => {
            let d = p.collocation.first().map_or(0, Vec::len);
            write_rows(&out("collocation.csv"), names("x", d), p.collocation.iter().cloned())?;
            let path = out("boundary.csv");
            let mut w = csv::Writer::from_writer(File::create(&path)?);
            let n_t = p.boundary.first().map_or(0, |b| b.1.len());
            let mut header = names("x", d);
            header.extend(names("y", n_t));
            w.write_record(&header)?;
            for (x, t) in &p.boundary {
                let mut rec: Vec<String> = x.iter().map(|v| format!("{v:.16e}")).collect();
                rec.extend(t.iter().map(|v| v.map_or(String::new(), |v| format!("{v:.16e}"))));
                w.write_record(&rec)?;
            }
            w.flush()?;
            write_samples(&out("test.csv"), &p.test)?;
        }
    }
    Ok(files)
}
