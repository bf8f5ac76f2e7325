//! Deterministic text formats: 17-significant-digit floats in CSV and JSON.
//!
//! Non-finite floats never appear as bare tokens; they are written as the
//! strings `"nan"`, `"inf"` and `"-inf"`.

use std::io;

use serde::Serialize;
use serde_json::ser::{Formatter, Serializer};

/// Float with 17 significant digits in scientific notation.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".to_owned()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_owned()
    } else {
        format!("{x:.16e}")
    }
}

/// serde_json formatter that writes every float through [`fmt_f64`].
#[derive(Clone, Copy, Debug, Default)]
pub struct FixedFloatFormatter;

impl FixedFloatFormatter {
    fn write_float<W: ?Sized + io::Write>(writer: &mut W, x: f64) -> io::Result<()> {
        if x.is_finite() {
            writer.write_all(fmt_f64(x).as_bytes())
        } else {
            write!(writer, "\"{}\"", fmt_f64(x))
        }
    }
}

impl Formatter for FixedFloatFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        Self::write_float(writer, value)
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        Self::write_float(writer, f64::from(value))
    }
}

/// `serialize_with` helper: finite floats as numbers, others as the strings
/// `"nan"`, `"inf"`, `"-inf"` (serde_json would otherwise emit `null`).
pub fn real<S: serde::Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else {
        s.serialize_str(&fmt_f64(*x))
    }
}

/// Same as [`real`] for optional floats.
pub fn opt_real<S: serde::Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(x) => real(x, s),
        None => s.serialize_none(),
    }
}

/// Compact JSON with fixed float formatting.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    let mut buf = Vec::new();
    let mut ser = Serializer::with_formatter(&mut buf, FixedFloatFormatter);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

/// Writes CSV rows of floats with a mandatory header, LF line endings.
pub fn write_csv<W: io::Write>(
    mut out: W,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<f64>>,
) -> io::Result<()> {
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(fmt_f64).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}
