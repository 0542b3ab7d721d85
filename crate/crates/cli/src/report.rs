//! Merges run summaries into a kernel by training-size table.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::CliError;
use crate::summary::{Stats, Summary};

/// Accepts a bundle directory or a `summary.json` path.
pub fn load_summary(path: &Path) -> Result<Summary, CliError> {
    let file = if path.is_dir() {
        path.join("summary.json")
    } else {
        path.to_path_buf()
    };
    let text = std::fs::read_to_string(&file)
        .map_err(|e| CliError::Report(format!("{}: {e}", file.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Report(format!("{}: {e}", file.display())))
}

#[derive(Clone, Debug)]
pub struct Report {
    pub system: String,
    pub metric: String,
    pub sizes: Vec<usize>,
    /// Kernel name to one cell per size.
    pub rows: BTreeMap<String, Vec<Option<Stats>>>,
}

pub fn build(summaries: &[Summary]) -> Result<Report, CliError> {
    let first = summaries
        .first()
        .ok_or_else(|| CliError::Report("no bundles given".into()))?;
    for s in summaries {
        if s.system != first.system {
            return Err(CliError::Report(format!(
                "bundles mix systems `{}` and `{}`",
                first.system, s.system
            )));
        }
        if s.test_metric.name() != first.test_metric.name() {
            return Err(CliError::Report(format!(
                "bundles mix test metrics `{}` and `{}`",
                first.test_metric.name(),
                s.test_metric.name()
            )));
        }
    }
    let sizes: Vec<usize> = summaries
        .iter()
        .map(|s| s.n_train)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut rows: BTreeMap<String, Vec<Option<Stats>>> = BTreeMap::new();
    for s in summaries {
        let col = sizes.iter().position(|&n| n == s.n_train).unwrap();
        let row = rows
            .entry(s.kernel.as_str().to_string())
            .or_insert_with(|| vec![None; sizes.len()]);
        if row[col].is_some() {
            return Err(CliError::Report(format!(
                "two bundles for kernel {} at N = {}",
                s.kernel, s.n_train
            )));
        }
        row[col] = Some(s.test.clone());
    }
    Ok(Report {
        system: first.system.clone(),
        metric: first.test_metric.name().to_string(),
        sizes,
        rows,
    })
}

impl Report {
    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| CliError::Report(e.to_string());
        w.write_record([
            "system", "metric", "kernel", "n_train", "count", "mean", "std",
        ])
        .map_err(err)?;
        for (kernel, cells) in &self.rows {
            for (n, cell) in self.sizes.iter().zip(cells) {
                if let Some(st) = cell {
                    w.write_record([
                        self.system.clone(),
                        self.metric.clone(),
                        kernel.clone(),
                        n.to_string(),
                        st.count.to_string(),
                        st.mean.to_string(),
                        st.std.to_string(),
                    ])
                    .map_err(err)?;
                }
            }
        }
        let bytes = w
            .into_inner()
            .map_err(|e| CliError::Report(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    pub fn to_text(&self) -> String {
        let mut header = vec![format!("{} ({})", self.system, self.metric)];
        header.extend(self.sizes.iter().map(|n| format!("N = {n}")));
        let mut table = vec![header];
        for (kernel, cells) in &self.rows {
            let mut row = vec![kernel.clone()];
            row.extend(cells.iter().map(|c| {
                c.as_ref()
                    .map_or_else(|| "-".to_string(), Stats::table_cell)
            }));
            table.push(row);
        }
        let widths: Vec<usize> = (0..table[0].len())
            .map(|j| {
                table
                    .iter()
                    .map(|r| r[j].chars().count())
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        for (i, row) in table.iter().enumerate() {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(c, &w)| format!("{c:<w$}"))
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
            if i == 0 {
                let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
                let _ = writeln!(out, "{}", "-".repeat(total));
            }
        }
        out
    }

    /// Error-bar plot of mean score against N, one line per kernel.
    pub fn gnuplot(&self) -> String {
        let mut s = String::from(
            "# gnuplot -p report.gp\nset datafile separator ','\nset logscale x 2\nset xlabel 'N'\n",
        );
        let _ = writeln!(s, "set ylabel '{}'", self.metric);
        if self.metric != "vpt" {
            s.push_str("set logscale y\n");
        }
        let plots: Vec<String> = self
            .rows
            .keys()
            .map(|k| {
                format!(
                    "'report.csv' every ::1 using (strcol(3) eq '{k}' ? $4 : 1/0):6:7 with yerrorlines title '{k}'"
                )
            })
            .collect();
        let _ = writeln!(s, "plot {}", plots.join(", \\\n     "));
        s
    }
}

/// Writes `report.csv`, `report.txt` and optionally `report.gp` into `out`.
pub fn write(report: &Report, out: &Path, plot: bool) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out.display(), e))?;
    let mut files = vec![
        (out.join("report.csv"), report.to_csv()?),
        (out.join("report.txt"), report.to_text()),
    ];
    if plot {
        files.push((out.join("report.gp"), report.gnuplot()));
    }
    for (path, text) in &files {
        std::fs::write(path, text).map_err(|e| CliError::io(path.display(), e))?;
    }
    Ok(files.into_iter().map(|f| f.0).collect())
}
