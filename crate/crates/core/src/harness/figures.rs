use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::run::{ExperimentReport, ResolutionRow};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Figure {
    /// Naive scheme: sup error against h.
    F1a,
    /// Naive scheme: effective truncation at x₀.
    F1b,
    /// Norm of the auxiliary function w^h.
    F2,
    /// Two-step scheme: sup error.
    F3,
    /// Narrow centered derivative error.
    F4,
}

impl Figure {
    pub const ALL: [Figure; 5] = [Figure::F1a, Figure::F1b, Figure::F2, Figure::F3, Figure::F4];

    pub fn id(self) -> &'static str {
        match self {
            Figure::F1a => "1a",
            Figure::F1b => "1b",
            Figure::F2 => "2",
            Figure::F3 => "3",
            Figure::F4 => "4",
        }
    }

    fn series(self) -> (&'static str, fn(&ResolutionRow) -> Option<f64>) {
        match self {
            Figure::F1a | Figure::F3 => ("sup_error", |r| r.sup_error),
            Figure::F1b => ("effective_truncation", |r| r.effective_truncation),
            Figure::F2 => ("w_norm", |r| r.w_norm),
            Figure::F4 => ("gradient_error_narrow", |r| r.gradient_error_narrow),
        }
    }
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let id = s.trim_start_matches("fig").trim_start_matches('_');
        Figure::ALL
            .into_iter()
            .find(|f| f.id() == id)
            .ok_or_else(|| Error::InvalidInput(format!("unknown figure `{s}`")))
    }
}

/// `h,value` rows for one figure.
pub fn figure_csv(report: &ExperimentReport, figure: Figure) -> Result<String> {
    let (name, get) = figure.series();
    if report.rows.is_empty() {
        return invalid(format!("report has no rows; `{name}` is missing"));
    }
    let mut s = String::from("h,value\n");
    for r in &report.rows {
        let Some(v) = get(r) else {
            return invalid(format!("measurement `{name}` is absent at n = {}", r.n));
        };
        let _ = writeln!(s, "{},{}", r.h, v);
    }
    Ok(s)
}

/// Writes `fig_<id>.csv` into `dir` and returns its path.
pub fn emit_figure_data(report: &ExperimentReport, figure: Figure, dir: &Path) -> Result<PathBuf> {
    let text = figure_csv(report, figure)?;
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("fig_{}.csv", figure.id()));
    std::fs::write(&path, text)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::ExperimentConfig;
    use crate::harness::run::compute_report;

    #[test]
    fn ids_parse() {
        for f in Figure::ALL {
            assert_eq!(f.id().parse::<Figure>().unwrap(), f);
            assert_eq!(format!("fig{}", f.id()).parse::<Figure>().unwrap(), f);
        }
        assert!("fig5".parse::<Figure>().is_err());
    }

    #[test]
    fn missing_series_and_empty_reports_fail() {
        let mut cfg = ExperimentConfig::builtin("torus1d-w").unwrap();
        cfg.resolutions = vec![16, 64];
        let mut r = compute_report(&cfg).unwrap();
        let csv = figure_csv(&r, Figure::F2).unwrap();
        assert_eq!(csv.lines().next(), Some("h,value"));
        match figure_csv(&r, Figure::F3) {
            Err(Error::InvalidInput(m)) => assert!(m.contains("sup_error")),
            other => panic!("{other:?}"),
        }
        r.rows.clear();
        assert!(figure_csv(&r, Figure::F2).is_err());
    }

    #[test]
    fn writes_named_file() {
        let mut cfg = ExperimentConfig::builtin("torus1d-naive").unwrap();
        cfg.resolutions = vec![16, 64];
        let r = compute_report(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = emit_figure_data(&r, Figure::F1b, dir.path()).unwrap();
        assert!(path.ends_with("fig_1b.csv"));
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(!text.contains('\r'));
    }
}
