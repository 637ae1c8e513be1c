//! Trace CSV writer.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::harness::Trace;
use crate::SimError;

pub const CSV_COLUMNS: [&str; 17] = [
    "t",
    "x",
    "y",
    "psi_cmd",
    "psi_act",
    "u_cmd",
    "u_act",
    "u_tar",
    "v",
    "omega",
    "z",
    "x_e",
    "y_e",
    "J_opt",
    "kkt_residual",
    "iterations",
    "solve_time_s",
];

/// `printf("%.9g")` formatting.
pub fn format_g9(x: f64) -> String {
    const DIGITS: i32 = 9;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    // The exponent after rounding to DIGITS significant digits decides the style.
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..DIGITS).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn write_csv<W: Write>(tr: &Trace, mut out: W) -> io::Result<()> {
    writeln!(out, "{}", CSV_COLUMNS.join(","))?;
    for r in &tr.records {
        let cols = [
            r.t, r.x, r.y, r.psi_cmd, r.psi_act, r.u_cmd, r.u_act, r.u_tar, r.v, r.omega, r.z, r.x_e, r.y_e, r.j_opt,
            r.kkt_residual,
        ];
        let mut line: Vec<String> = cols.iter().map(|&c| format_g9(c)).collect();
        line.push(r.iterations.to_string());
        line.push(format_g9(r.solve_time));
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()
}

pub fn write_csv_file(tr: &Trace, path: &Path) -> Result<(), SimError> {
    let io_err = |source| SimError::Io { path: path.to_path_buf(), source };
    let file = File::create(path).map_err(io_err)?;
    write_csv(tr, BufWriter::new(file)).map_err(io_err)
}
