use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::{Error, Result};

/// Every float is written with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Pretty-printing JSON formatter that writes f64 values via [`fmt_f64`].
struct FullPrecision<'a>(PrettyFormatter<'a>);

impl Formatter for FullPrecision<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(fmt_f64(value).as_bytes())
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

/// Pretty JSON with full-precision floats and a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FullPrecision(PrettyFormatter::new()));
    value.serialize(&mut ser).map_err(|e| Error::Io(e.to_string()))?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
}

/// Single-line JSON with full-precision floats.
pub fn to_json_line<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Compact17);
    value.serialize(&mut ser).map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
}

struct Compact17;

impl Formatter for Compact17 {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(fmt_f64(value).as_bytes())
    }
}

/// A CSV table whose first line names a versioned schema and whose second
/// line echoes the resolved configuration.
pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new<C: Serialize>(schema: &str, columns: &[&str], config: &C) -> Result<Self> {
        let mut text = format!("# schema: {schema} columns={}\n", columns.join(","));
        text.push_str(&format!("# config: {}\n", to_json_line(config)?));
        text.push_str(&columns.join(","));
        text.push('\n');
        Ok(Self { text, columns: columns.len() })
    }

    pub fn row(&mut self, cells: &[Cell]) {
        debug_assert_eq!(cells.len(), self.columns);
        let line: Vec<String> = cells.iter().map(Cell::render).collect();
        self.text.push_str(&line.join(","));
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

pub enum Cell {
    Int(usize),
    Float(f64),
    Text(String),
    Bool(bool),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => fmt_f64(*v),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }
}

/// Where a command's files go. With no `--out`, the primary output goes to
/// stdout and the companion JSON is skipped; otherwise the primary is written
/// to the given path and the companion next to it with a `.json` extension.
pub struct Sink {
    out: Option<PathBuf>,
}

impl Sink {
    pub fn new(out: Option<PathBuf>) -> Self {
        Self { out }
    }

    pub fn companion_path(&self) -> Option<PathBuf> {
        self.out.as_ref().map(|p| p.with_extension("json"))
    }

    pub fn write(&self, primary: &str, companion: Option<&str>) -> Result<()> {
        match &self.out {
            None => {
                let mut stdout = io::stdout().lock();
                stdout.write_all(primary.as_bytes())?;
                stdout.flush()?;
            }
            Some(path) => {
                write_file(path, primary)?;
                if let (Some(text), Some(side)) = (companion, self.companion_path()) {
                    if side == *path {
                        return Err(Error::Config(format!(
                            "--out {} would collide with its JSON companion; use another extension",
                            path.display()
                        )));
                    }
                    write_file(&side, text)?;
                }
            }
        }
        Ok(())
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_have_seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(-2.0), "-2.0000000000000000e0");
        let back: f64 = fmt_f64(std::f64::consts::PI).parse().unwrap();
        assert_eq!(back, std::f64::consts::PI);
    }

    #[test]
    fn json_uses_full_precision_and_round_trips() {
        let text = to_json(&serde_json::json!({"x": 0.1, "v": [1.5, 2], "n": f64::NAN})).unwrap();
        assert!(text.contains("1.0000000000000001e-1"));
        assert!(text.contains("\"n\": null"));
        let back: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(back["x"].as_f64(), Some(0.1));
        assert_eq!(back["v"][1].as_u64(), Some(2));
    }

    #[test]
    fn csv_layout() {
        let mut csv = Csv::new("demo/1", &["step", "loss"], &serde_json::json!({"a": 1})).unwrap();
        csv.row(&[Cell::Int(3), Cell::Float(0.25)]);
        let text = csv.into_string();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# schema: demo/1 columns=step,loss");
        assert_eq!(lines[1], "# config: {\"a\":1}");
        assert_eq!(lines[2], "step,loss");
        assert_eq!(lines[3], "3,2.5000000000000000e-1");
    }
}
