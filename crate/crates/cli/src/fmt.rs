//! Deterministic rendering of numbers and JSON.
//!
//! Every float in every artifact goes through [`float`], and JSON files
//! are produced by [`to_json`], which routes `f64` serialization through
//! the same helper.  Artifacts carry no timestamps or environment state,
//! so identical inputs produce byte-identical files.

use std::io::Write;

use serde::Serialize;

/// Canonical float rendering: scientific notation, nine fractional
/// digits.
pub fn float(v: f64) -> String {
    format!("{v:.9e}")
}

/// Optional floats render as an empty CSV field when absent.
pub fn opt_float(v: Option<f64>) -> String {
    v.map(float).unwrap_or_default()
}

/// JSON formatter identical to the compact default except that finite
/// `f64` values use [`float`].  (Non-finite floats never reach the
/// formatter; they serialize as `null` upstream, and the library rejects
/// them long before output anyway.)
struct SciFormatter;

impl serde_json::ser::Formatter for SciFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + Write,
    {
        writer.write_all(float(value).as_bytes())
    }
}

/// Serializes a value to canonical JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SciFormatter);
    value.serialize(&mut ser).expect("in-memory JSON serialization cannot fail");
    let mut text = String::from_utf8(out).expect("serde_json emits UTF-8");
    text.push('\n');
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_use_nine_digit_scientific_notation() {
        assert_eq!(float(0.5), "5.000000000e-1");
        assert_eq!(float(1.0), "1.000000000e0");
        assert_eq!(float(-0.03125), "-3.125000000e-2");
    }

    #[test]
    fn json_floats_are_canonical() {
        #[derive(Serialize)]
        struct Probe {
            x: f64,
            n: Option<f64>,
            k: usize,
        }
        let text = to_json(&Probe { x: 0.25, n: None, k: 3 });
        assert_eq!(text, "{\"x\":2.500000000e-1,\"n\":null,\"k\":3}\n");
    }
}
