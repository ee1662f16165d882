use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const COLUMNS: [&str; 9] = [
    "variant",
    "environment",
    "seed",
    "mean_erle_db",
    "t20_s",
    "ss_misalign_db",
    "seg_snr_db",
    "seg_sir_db",
    "lsd_db",
];

/// One result row. `seed` is a string so summary rows can say `median`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub variant: String,
    pub environment: String,
    pub seed: String,
    pub mean_erle_db: f64,
    pub t20_s: f64,
    pub ss_misalign_db: f64,
    pub seg_snr_db: f64,
    pub seg_sir_db: f64,
    pub lsd_db: f64,
}

impl CsvRow {
    pub fn values(&self) -> [f64; 6] {
        [
            self.mean_erle_db,
            self.t20_s,
            self.ss_misalign_db,
            self.seg_snr_db,
            self.seg_sir_db,
            self.lsd_db,
        ]
    }
}

/// `%.6g`-style formatting: six significant digits, trailing zeros removed.
pub fn format_sig6(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    // round first so that e.g. 999999.5 picks the right exponent
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        let m = trim_zeros(mantissa.to_string());
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn render(rows: &[CsvRow]) -> String {
    let mut out = COLUMNS.join(",");
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{},{},{}", r.variant, r.environment, r.seed);
        for v in r.values() {
            out.push(',');
            out.push_str(&format_sig6(v));
        }
        out.push('\n');
    }
    out
}

pub fn write(path: &Path, rows: &[CsvRow]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            message: e.to_string(),
        })?;
    }
    std::fs::write(path, render(rows)).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Median of the finite values; NaN if there are none.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig6_matches_printf_g() {
        assert_eq!(format_sig6(1.23456789), "1.23457");
        assert_eq!(format_sig6(-20.0), "-20");
        assert_eq!(format_sig6(1234567.0), "1.23457e+06");
        assert_eq!(format_sig6(0.000123456789), "0.000123457");
        assert_eq!(format_sig6(1.5e-7), "1.5e-07");
        assert_eq!(format_sig6(f64::NAN), "nan");
        assert_eq!(format_sig6(0.0), "0");
        assert_eq!(format_sig6(999999.7), "1e+06");
    }

    #[test]
    fn median_ignores_nan() {
        assert_eq!(median(&[3.0, f64::NAN, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0]), 2.5);
        assert!(median(&[f64::NAN]).is_nan());
    }
}
