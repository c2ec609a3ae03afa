//! CSV, JSON and SVG writers.

use std::io::Write;
use std::path::Path;

use pfconv_core::filter::FilterRun;
use pfconv_core::oracles::grid::GridStep;

use crate::study::{ConvergenceReport, ErrorCell};
use crate::svg;
use crate::LabError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Svg,
}

impl std::str::FromStr for Format {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self, LabError> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "svg" => Ok(Format::Svg),
            other => Err(LabError::Config(format!("unknown format {other:?}"))),
        }
    }
}

/// Shortest round-trip form in scientific notation.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}

/// `phi,N,t,mse,mse_stderr,l4,l4_stderr`, one row per cell.
pub fn write_cells_csv<W: Write>(cells: &[ErrorCell], out: W) -> Result<(), LabError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["phi", "N", "t", "mse", "mse_stderr", "l4", "l4_stderr"])?;
    for c in cells {
        w.write_record([
            c.phi.clone(),
            c.n.to_string(),
            c.t.to_string(),
            num(c.mse),
            num(c.mse_stderr),
            num(c.l4),
            num(c.l4_stderr),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn report_to_json(report: &ConvergenceReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serialises");
    s.push('\n');
    s
}

pub fn report_from_json(text: &str) -> Result<ConvergenceReport, LabError> {
    serde_json::from_str(text).map_err(|e| LabError::Io(format!("report json: {e}")))
}

/// Write `report` to `path`. The CSV holds the filtered table; the
/// resampled table goes next to it as `<stem>_resampled.csv`.
pub fn emit_report(report: &ConvergenceReport, format: Format, path: &Path) -> Result<(), LabError> {
    let io = |e: std::io::Error| LabError::Io(format!("{}: {e}", path.display()));
    match format {
        Format::Csv => {
            write_cells_csv(&report.filtered, std::fs::File::create(path).map_err(io)?)?;
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
            let sibling = path.with_file_name(format!("{stem}_resampled.csv"));
            write_cells_csv(&report.resampled, std::fs::File::create(&sibling).map_err(io)?)?;
        }
        Format::Json => std::fs::write(path, report_to_json(report)).map_err(io)?,
        Format::Svg => std::fs::write(path, svg::convergence_plot(report, report.config.study.fit_step)).map_err(io)?,
    }
    Ok(())
}

/// `t,phi,estimate,resampled_estimate,ess,log_mean_weight`.
pub fn write_filter_csv<W: Write>(run: &FilterRun, out: W) -> Result<(), LabError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "phi", "estimate", "resampled_estimate", "ess", "log_mean_weight"])?;
    for s in &run.steps {
        for (k, phi) in run.test_functions.iter().enumerate() {
            w.write_record([
                s.t.to_string(),
                phi.name(),
                num(s.estimates[k]),
                num(s.resampled_estimates[k]),
                num(s.ess),
                num(s.log_mean_weight),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `t,estimate_phi,grid_mean,grid_var` for the first registered test function.
pub fn write_grid_csv<W: Write>(steps: &[GridStep], out: W) -> Result<(), LabError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "estimate_phi", "grid_mean", "grid_var"])?;
    for s in steps {
        w.write_record([
            s.t.to_string(),
            num(s.estimates.first().copied().unwrap_or(f64::NAN)),
            num(s.mean),
            num(s.variance),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `t,x,density` at every cell of every step.
pub fn write_density_csv<W: Write>(steps: &[GridStep], out: W) -> Result<(), LabError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "x", "density"])?;
    for s in steps {
        for (x, v) in s.density.midpoints().zip(s.density.values()) {
            w.write_record([s.t.to_string(), num(x), num(*v)])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_tables_are_header_only() {
        let mut buf = Vec::new();
        write_cells_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "phi,N,t,mse,mse_stderr,l4,l4_stderr\n");

        let run = FilterRun {
            n: 10,
            test_functions: vec![pfconv_core::TestFunction::ExpNeg],
            steps: vec![],
            log_evidence: 0.0,
            full_clouds: vec![],
            thinned_clouds: vec![],
        };
        let mut buf = Vec::new();
        write_filter_csv(&run, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,phi,estimate,resampled_estimate,ess,log_mean_weight\n");
    }

    #[test]
    fn cells_csv_rows() {
        let cell = ErrorCell {
            phi: "exp_neg".into(),
            n: 128,
            t: 11,
            mse: 0.001,
            mse_stderr: 1e-4,
            l4: 2.5e-6,
            l4_stderr: 3e-7,
        };
        let mut buf = Vec::new();
        write_cells_csv(&[cell], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "exp_neg,128,11,1e-3,1e-4,2.5e-6,3e-7");
    }
}
