//! Matplotlib script that renders the figure analogues from the CSVs.

use std::fs;
use std::path::{Path, PathBuf};

use super::RunError;

pub const SCRIPT_NAME: &str = "plot.py";
pub const FIGURE_FILES: [&str; 3] = ["fig1.csv", "fig2.csv", "fig3.csv"];

const HEADER: &str = r#"#!/usr/bin/env python3
"""Plots generated from the CSV tables next to this script."""
import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = Path(__file__).resolve().parent
COLORS = {0.0: "red", 5.0: "blue"}


def read(name):
    with open(HERE / name, newline="", encoding="utf-8") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def by_strength(rows, x, y):
    curves = defaultdict(lambda: ([], []))
    for row in rows:
        xs, ys = curves[row["f"]]
        xs.append(row[x])
        ys.append(row[y])
    return sorted(curves.items())

"#;

const FIG1: &str = r#"
rows = read("fig1.csv")
fig, ax = plt.subplots()
ax.plot([r["f"] for r in rows], [r["V"] for r in rows], "k.-")
ax.set_xlabel("f")
ax.set_ylabel("V(t = %g)" % rows[0]["t"])
ax.set_title("Fig. 1 analogue: evolution speed vs measurement strength")
fig.savefig(HERE / "fig1.png", dpi=150)
"#;

const FIG2: &str = r#"
fig, ax = plt.subplots()
for f, (xs, ys) in by_strength(read("fig2.csv"), "T", "V_bar"):
    ax.plot(xs, ys, color=COLORS.get(f), label="f = %g" % f)
ax.set_xlabel("T")
ax.set_ylabel("time-averaged speed")
ax.set_title("Fig. 2 analogue: average speed vs total time")
ax.legend()
fig.savefig(HERE / "fig2.png", dpi=150)
"#;

const FIG3: &str = r#"
fig, ax = plt.subplots()
for f, (xs, ys) in by_strength(read("fig3.csv"), "T", "S0"):
    ax.plot(xs, ys, color=COLORS.get(f), label="f = %g" % f)
ax.set_xlabel("T")
ax.set_ylabel("S0")
ax.set_title("Fig. 3 analogue: geodesic distance vs total time")
ax.legend()
fig.savefig(HERE / "fig3.png", dpi=150)
"#;

/// Script covering whichever figure tables are listed, or `None` if none are.
pub fn plot_script_for(files: &[&str]) -> Option<String> {
    let sections: Vec<&str> = FIGURE_FILES
        .iter()
        .zip([FIG1, FIG2, FIG3])
        .filter(|(name, _)| files.contains(name))
        .map(|(_, body)| body)
        .collect();
    if sections.is_empty() {
        return None;
    }
    Some(format!("{HEADER}{}", sections.concat()))
}

/// Writes `plot.py` into a results directory containing at least one
/// figure table.
pub fn emit_plot_script(dir: &Path) -> Result<PathBuf, RunError> {
    let present: Vec<&str> = FIGURE_FILES
        .iter()
        .copied()
        .filter(|name| dir.join(name).is_file())
        .collect();
    let script = plot_script_for(&present).ok_or_else(|| RunError::MissingResults {
        dir: dir.to_path_buf(),
        expected: FIGURE_FILES.iter().map(|s| s.to_string()).collect(),
    })?;
    let path = dir.join(SCRIPT_NAME);
    fs::write(&path, script).map_err(|e| RunError::Io { path: path.clone(), source: e })?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn script_only_covers_present_tables() {
        let script = plot_script_for(&["fig2.csv"]).unwrap();
        assert!(script.contains("fig2.csv"));
        assert!(!script.contains("fig1.csv"));
        assert!(script.contains("0.0: \"red\", 5.0: \"blue\""));
        assert!(plot_script_for(&["trajectory.csv"]).is_none());
    }
}
