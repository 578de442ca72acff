//! CSV tables. Every table starts with a `# schema: <name>/<version>` line;
//! a column is never renamed or moved without bumping the version. Tables
//! are rendered in memory and written in one go, so a failing command never
//! leaves a partial file behind.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};

pub struct Table {
    schema: &'static str,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(schema: &'static str, header: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            schema,
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width for {}", self.schema);
        self.rows.push(row);
    }

    pub fn render(&self) -> Result<Vec<u8>> {
        let mut buf = format!("# schema: {}\n", self.schema).into_bytes();
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        drop(w);
        Ok(buf)
    }
}

/// Nine significant digits, trailing zeros dropped; scientific notation
/// outside `[1e-5, 1e15)`.
pub fn num(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let exp = v.abs().log10().floor() as i32;
    if !(-5..15).contains(&exp) {
        return format!("{v:.8e}");
    }
    let decimals = (8 - exp).max(0) as usize;
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn mbps(bits_per_second: f64) -> String {
    num(bits_per_second / 1e6)
}

/// Writes `bytes` to `path`, or to stdout when no path is given.
pub fn emit(bytes: &[u8], path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(num(136.2524479), "136.252448");
        assert_eq!(num(0.117647058823529), "0.117647059");
        assert_eq!(num(1.0), "1");
        assert_eq!(num(-2.5), "-2.5");
        assert_eq!(num(1000.0), "1000");
        assert_eq!(num(0.60899778104), "0.608997781");
        assert_eq!(num(2.7e-10), "2.70000000e-10");
        assert_eq!(num(0.0), "0");
    }

    #[test]
    fn renders_schema_line_first() {
        let mut t = Table::new("demo/1", ["a", "b"]);
        t.push(vec!["1".into(), "x,y".into()]);
        let text = String::from_utf8(t.render().unwrap()).unwrap();
        assert_eq!(text, "# schema: demo/1\na,b\n1,\"x,y\"\n");
    }
}
