//! CSV and JSON artifacts of a run.

use std::fs;
use std::path::Path;

use super::manifest::Manifest;
use super::runner::CellResult;
use crate::error::Result;

/// Column order of `results.csv`.
pub const RESULT_COLUMNS: [&str; 12] = [
    "theorem",
    "seed",
    "gamma",
    "n",
    "k",
    "epsilon",
    "lhs",
    "rhs",
    "slack",
    "satisfied",
    "vacuous",
    "assumption_flags",
];

pub const ESTIMATE_COLUMNS: [&str; 6] = ["job", "theorem", "cell", "estimate", "truth", "abs_error"];

/// Twelve significant digits in scientific notation; `inf`, `-inf`, `nan`
/// for non-finite values.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.11e}")
    }
}

fn opt_float(x: Option<f64>) -> String {
    x.map(format_float).unwrap_or_default()
}

fn opt_int<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// `results.csv` contents, one row per report.
pub fn results_csv(cells: &[CellResult]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RESULT_COLUMNS)?;
    for cell in cells {
        for r in &cell.reports {
            w.write_record([
                r.theorem.clone(),
                opt_int(r.inputs.seed),
                opt_float(r.inputs.gamma),
                opt_int(r.inputs.n),
                opt_int(r.inputs.k),
                opt_float(r.inputs.epsilon),
                format_float(r.lhs),
                format_float(r.rhs),
                format_float(r.slack),
                r.satisfied.to_string(),
                r.vacuous.to_string(),
                r.assumption_flags.join(";"),
            ])?;
        }
    }
    w.into_inner().map_err(|e| crate::LabError::Io(e.to_string()))
}

/// `estimates.csv` contents: every estimated quantity next to its truth.
pub fn estimates_csv(cells: &[CellResult]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(ESTIMATE_COLUMNS)?;
    for cell in cells {
        let id = format!("{}.{}", cell.job, cell.cell);
        for r in &cell.reports {
            for e in &r.estimates {
                w.write_record([
                    id.clone(),
                    r.theorem.clone(),
                    e.cell.clone(),
                    format_float(e.estimate),
                    format_float(e.truth),
                    format_float(e.abs_error()),
                ])?;
            }
        }
    }
    w.into_inner().map_err(|e| crate::LabError::Io(e.to_string()))
}

/// Writes `results.csv`, `estimates.csv` and `manifest-echo.json` into `dir`.
pub fn write_artifacts(dir: &Path, manifest: &Manifest, cells: &[CellResult]) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("results.csv"), results_csv(cells)?)?;
    fs::write(dir.join("estimates.csv"), estimates_csv(cells)?)?;
    let mut echo = manifest.to_pretty_json()?;
    echo.push('\n');
    fs::write(dir.join("manifest-echo.json"), echo)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format() {
        assert_eq!(format_float(0.375), "3.75000000000e-1");
        assert_eq!(format_float(f64::INFINITY), "inf");
        assert_eq!(format_float(-0.0125), "-1.25000000000e-2");
        assert_eq!(opt_float(None), "");
    }
}
