use std::io::Write;

use super::sweep::SweepResult;
use crate::Result;

pub const CSV_HEADER: &str = "sweep_var,value,mse,crlb,bcrlb,trials,failures,mean_iters";

/// Shortest round-trip representation; infinities as `inf`/`-inf`.
fn num(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:e}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Writes all curves as one CSV table. Bound-only rows leave `mse` and
/// `mean_iters` empty.
pub fn write_csv<W: Write>(results: &[SweepResult], mut w: W) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for row in results.iter().flat_map(|r| &r.rows) {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            row.sweep_var,
            row.value,
            opt(row.mse),
            num(row.crlb),
            num(row.bcrlb),
            row.trials,
            row.failures,
            opt(row.mean_iters),
        )?;
    }
    Ok(())
}

/// Long-format plot data, one `(figure, series, x, y)` line per plotted value.
pub fn write_plot_data<W: Write>(figure: &str, results: &[SweepResult], mut w: W) -> Result<()> {
    writeln!(w, "figure,series,x,y")?;
    for res in results {
        for row in &res.rows {
            let values = [("mse", row.mse), ("crlb", Some(row.crlb)), ("bcrlb", Some(row.bcrlb))];
            for (name, v) in values {
                if let Some(v) = v {
                    writeln!(w, "{figure},{name}:{},{},{}", res.label, row.value, num(v))?;
                }
            }
        }
    }
    Ok(())
}
