//! CSV output with nine significant digits, and reading it back.

use std::path::Path;

use crate::error::{Error, Result};

/// Nine significant digits, printed in the shortest form that parses back
/// to the same rounded value.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{v:.8e}").parse().expect("valid float text");
    let magnitude = rounded.abs();
    if magnitude != 0.0 && !(1e-4..1e9).contains(&magnitude) {
        format!("{rounded:e}")
    } else {
        format!("{rounded}")
    }
}

/// Value as it survives a write/read cycle.
pub fn round_sig9(v: f64) -> f64 {
    parse_num(&fmt_num(v)).expect("own output parses")
}

pub fn parse_num(s: &str) -> Result<f64> {
    match s.trim() {
        "nan" | "NaN" => Ok(f64::NAN),
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        t => t
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("not a number: {t:?}"))),
    }
}

pub fn write_csv<I>(path: impl AsRef<Path>, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Header and records of a CSV file.
pub fn read_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(str::to_owned).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|rec| rec.iter().map(str::to_owned).collect()))
        .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
    Ok((header, rows))
}

/// Parse a numeric CSV whose header must equal `expected`.
pub fn read_numeric_csv(path: impl AsRef<Path>, expected: &[&str]) -> Result<Vec<Vec<f64>>> {
    let (header, rows) = read_csv(path)?;
    if header != expected {
        return Err(Error::InvalidArgument(format!("unexpected CSV header {header:?}, wanted {expected:?}")));
    }
    rows.iter().map(|r| r.iter().map(|c| parse_num(c)).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_digits() {
        assert_eq!(fmt_num(0.1), "0.1");
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_num(123456789012.0), "1.23456789e11");
        assert_eq!(fmt_num(-2.5e-7), "-2.5e-7");
        assert_eq!(fmt_num(0.00025), "0.00025");
        assert_eq!(fmt_num(f64::NAN), "nan");
    }

    #[test]
    fn rounding_is_idempotent() {
        for v in [std::f64::consts::PI, 1e-300, -7.123456789123, 0.0] {
            let r = round_sig9(v);
            assert_eq!(round_sig9(r), r);
            assert!((r - v).abs() <= 5e-9 * v.abs());
        }
    }
}
