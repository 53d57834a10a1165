//! CSV and JSON output with round-trippable floats.

use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use super::config::OutputFormat;
use super::sweep::SweepRow;
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "alpha,n,distance,distance_ci,theorem1_rhs,prop1_measured,prop1_paper,prop1_corrected,\
prop2_measured,prop2_bound,lb_measured,lb_paper,lb_corrected,slope_contrib,wall_time_s";

/// 17 significant digits in scientific notation; `NaN`/`inf` spelled out.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "NaN".to_string()
    } else if v > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

/// Pretty JSON whose floats carry 17 significant digits.
struct PreciseFormatter(PrettyFormatter<'static>);

impl Formatter for PreciseFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(format!("{value:.16e}").as_bytes())
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, PreciseFormatter(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = to_json_string(value)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `json` by extension, CSV otherwise.
pub fn format_for_path(path: &Path) -> OutputFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("json") => OutputFormat::Json,
        _ => OutputFormat::Csv,
    }
}

pub fn write_csv<W: Write>(rows: &[SweepRow], mut out: W) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        let fields = [
            fmt_f64(r.alpha),
            r.n.to_string(),
            fmt_f64(r.distance),
            fmt_f64(r.distance_ci),
            fmt_f64(r.theorem1_rhs),
            fmt_f64(r.prop1_measured),
            fmt_f64(r.prop1_paper),
            fmt_f64(r.prop1_corrected),
            fmt_f64(r.prop2_measured),
            fmt_f64(r.prop2_bound),
            fmt_f64(r.lb_measured),
            fmt_f64(r.lb_paper),
            fmt_f64(r.lb_corrected),
            fmt_f64(r.slope_contrib),
            fmt_f64(r.wall_time_s),
        ];
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Writes rows as CSV or as a JSON array.
pub fn emit(rows: &[SweepRow], format: OutputFormat, path: &Path) -> Result<()> {
    match format {
        OutputFormat::Json => write_json(path, rows),
        OutputFormat::Csv => {
            let mut buf = Vec::new();
            write_csv(rows, &mut buf).expect("writing to memory");
            std::fs::write(path, buf).map_err(|e| Error::io(path, e))
        }
    }
}
