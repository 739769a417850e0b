//! Comma-separated output tables.
//!
//! Numbers are written with 12 significant digits in the shortest of fixed
//! or exponent notation, so identical runs produce identical bytes.

use std::io::{self, Write};

use linecover::sim::{EnsembleCurve, RunRecord};

pub const SIG_DIGITS: usize = 12;

/// Formats `v` like C's `%.12g`.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{:.*e}", SIG_DIGITS - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent notation");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..SIG_DIGITS as i32).contains(&exp) {
        let decimals = (SIG_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_fraction(format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_fraction(mantissa.to_string()))
    }
}

fn trim_fraction(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn run_header(n: usize) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|i| format!("x_{i}")));
    cols.extend(["Q", "phi", "err_sq"].map(String::from));
    cols.join(",")
}

pub fn write_run_table<W: Write>(out: &mut W, record: &RunRecord) -> io::Result<()> {
    writeln!(out, "{}", run_header(record.config.n))?;
    for row in &record.rows {
        let mut line = row.t.to_string();
        for x in &row.positions {
            line.push(',');
            line.push_str(&fmt_num(*x));
        }
        for v in [row.q, row.phi, row.err_sq] {
            line.push(',');
            line.push_str(&fmt_num(v));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub const SWEEP_HEADER: &str = "t,mean_err,stderr,bound,slope_so_far";

/// Writes the ensemble table. `bound` and `slope` hold one optional value
/// per curve point; missing values leave the cell empty.
pub fn write_sweep_table<W: Write>(
    out: &mut W,
    curve: &EnsembleCurve,
    bound: &[Option<f64>],
    slope: &[Option<f64>],
) -> io::Result<()> {
    writeln!(out, "{SWEEP_HEADER}")?;
    let opt = |v: Option<f64>| v.map(fmt_num).unwrap_or_default();
    for ((p, b), s) in curve.points.iter().zip(bound).zip(slope) {
        writeln!(
            out,
            "{},{},{},{},{}",
            p.t,
            fmt_num(p.mean),
            fmt_num(p.stderr),
            opt(*b),
            opt(*s)
        )?;
    }
    Ok(())
}
