//! Byte-stable serialization: every float is written with 17 significant digits.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use serde::Serialize;
use serde_json::ser::{CompactFormatter, Formatter, PrettyFormatter};
use sha2::{Digest, Sha256};

/// `{:.16e}` round-trips every `f64`.
pub fn float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

struct Precise<F>(F);

impl<F: Formatter> Formatter for Precise<F> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(float(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_array(writer)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object(writer)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object_value(writer)
    }
}

fn serialize<T: Serialize, F: Formatter>(value: &T, formatter: F) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Precise(formatter));
    value.serialize(&mut ser).expect("in-memory serialization");
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    serialize(value, PrettyFormatter::new()) + "\n"
}

pub fn to_json_line<T: Serialize>(value: &T) -> String {
    serialize(value, CompactFormatter)
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), String> {
    std::fs::write(path, contents).map_err(|e| format!("{}: {e}", path.display()))
}

/// CSV metadata block: one `# key: value` line per entry of the JSON object.
pub fn metadata_lines(meta: &serde_json::Value) -> String {
    let mut out = String::new();
    if let Some(map) = meta.as_object() {
        for (k, v) in map {
            let text = match v {
                serde_json::Value::String(s) => s.clone(),
                other => to_json_line(other),
            };
            writeln!(out, "# {k}: {text}").unwrap();
        }
    }
    out
}

/// SHA-256 over the shape (two little-endian `u64`) and the row-major
/// little-endian bytes of the returns matrix.
pub fn fingerprint<'a>(rows: usize, cols: usize, values: impl Iterator<Item = &'a f64>) -> String {
    let mut h = Sha256::new();
    h.update((rows as u64).to_le_bytes());
    h.update((cols as u64).to_le_bytes());
    for v in values {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}
