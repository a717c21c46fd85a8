//! `iadn plot`: re-render the miss-rate/FPPI plot from the curve CSVs of an
//! evaluation output directory. Produces the same bytes `eval` wrote.

use std::fs;
use std::path::{Path, PathBuf};

use iadn_core::evaluation::log_average;

use crate::svg::{render_curves, CurveSeries};
use crate::{CmdError, CmdResult};

#[derive(clap::Args)]
pub struct Args {
    /// Directory holding curve_all.csv, curve_day.csv, and curve_night.csv
    /// (as written by `iadn eval`).
    #[arg(long)]
    pub curves: PathBuf,
    /// Output SVG path.
    #[arg(long)]
    pub out: PathBuf,
}

fn read_curve(dir: &Path, name: &str) -> Result<CurveSeries, CmdError> {
    let path = dir.join(format!("curve_{name}.csv"));
    let text = fs::read_to_string(&path)
        .map_err(|e| CmdError::Runtime(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines();
    match lines.next() {
        Some("fppi,miss_rate") => {}
        other => {
            return Err(CmdError::Runtime(format!(
                "{}: expected header 'fppi,miss_rate', found {other:?}",
                path.display()
            )))
        }
    }
    let mut fppi = Vec::new();
    let mut miss_rate = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || CmdError::Runtime(format!("{}:{}: malformed row {line:?}", path.display(), i + 2));
        let (f, m) = line.split_once(',').ok_or_else(bad)?;
        let f: f64 = f.trim().parse().map_err(|_| bad())?;
        let m: f64 = m.trim().parse().map_err(|_| bad())?;
        if !(f.is_finite() && f > 0.0 && m.is_finite() && (0.0..=1.0).contains(&m)) {
            return Err(bad());
        }
        fppi.push(f);
        miss_rate.push(m);
    }
    if fppi.is_empty() {
        return Err(CmdError::Runtime(format!("{}: no data rows", path.display())));
    }
    let log_avg_mr = log_average(&miss_rate);
    Ok(CurveSeries { name: name.to_string(), fppi, miss_rate, log_avg_mr })
}

pub fn run(args: &Args) -> CmdResult {
    let series = ["all", "day", "night"]
        .iter()
        .map(|name| read_curve(&args.curves, name))
        .collect::<Result<Vec<_>, _>>()?;
    let svg = render_curves(&series);
    fs::write(&args.out, svg)
        .map_err(|e| CmdError::Runtime(format!("{}: {e}", args.out.display())))?;
    println!("plot written to {}", args.out.display());
    Ok(())
}
