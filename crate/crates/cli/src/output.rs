//! Table assembly and deterministic CSV/JSON emission.

use std::io::Write;
use std::path::Path;

use formidex_core::{Error, Result};

/// Column-oriented numeric table with comment lines before and after the
/// data block. CSV comments start with `#`.
#[derive(Debug, Default)]
pub struct Table {
    pub header_comments: Vec<String>,
    pub footer_comments: Vec<String>,
    pub columns: Vec<(String, Vec<f64>)>,
}

impl Table {
    pub fn push_column(&mut self, name: impl Into<String>, values: Vec<f64>) {
        self.columns.push((name.into(), values));
    }

    fn rows(&self) -> usize {
        self.columns.first().map(|(_, v)| v.len()).unwrap_or(0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for c in &self.header_comments {
            out.push_str("# ");
            out.push_str(c);
            out.push('\n');
        }
        let names: Vec<&str> = self.columns.iter().map(|(n, _)| n.as_str()).collect();
        out.push_str(&names.join(","));
        out.push('\n');
        for r in 0..self.rows() {
            let row: Vec<String> = self.columns.iter().map(|(_, v)| fmt_g(v[r])).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        for c in &self.footer_comments {
            out.push_str("# ");
            out.push_str(c);
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self, config_echo: serde_json::Value) -> String {
        let mut columns = serde_json::Map::new();
        for (name, vals) in &self.columns {
            columns.insert(
                name.clone(),
                serde_json::Value::Array(
                    vals.iter()
                        .map(|v| {
                            serde_json::Number::from_f64(*v)
                                .map(serde_json::Value::Number)
                                .unwrap_or(serde_json::Value::Null)
                        })
                        .collect(),
                ),
            );
        }
        let comments: Vec<serde_json::Value> = self
            .header_comments
            .iter()
            .chain(&self.footer_comments)
            .map(|c| serde_json::Value::String(c.clone()))
            .collect();
        let mut root = serde_json::Map::new();
        root.insert("config".into(), config_echo);
        root.insert("comments".into(), serde_json::Value::Array(comments));
        root.insert("columns".into(), serde_json::Value::Object(columns));
        let mut s = serde_json::to_string_pretty(&serde_json::Value::Object(root))
            .expect("static json structure");
        s.push('\n');
        s
    }
}

/// Format with 9 significant digits, plain decimal where reasonable,
/// scientific otherwise (printf %.9g style). Deterministic.
pub fn fmt_g(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.8e}", x);
    let (mant, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-4..9).contains(&exp) {
        let prec = (8 - exp).max(0) as usize;
        let t = format!("{:.*}", prec, x);
        let t = if t.contains('.') {
            t.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            t
        };
        if t == "-0" {
            "0".to_string()
        } else {
            t
        }
    } else {
        let m = if mant.contains('.') {
            mant.trim_end_matches('0').trim_end_matches('.')
        } else {
            mant
        };
        format!("{m}e{exp}")
    }
}

/// Write to `path` atomically (temp file in the same directory + rename),
/// or to stdout when no path is given.
pub fn write_output(path: Option<&Path>, content: &str) -> Result<()> {
    match path {
        None => {
            print!("{content}");
            Ok(())
        }
        Some(p) => {
            let dir = p.parent().filter(|d| !d.as_os_str().is_empty());
            let mut tmp = match dir {
                Some(d) => tempfile::NamedTempFile::new_in(d),
                None => tempfile::NamedTempFile::new_in("."),
            }
            .map_err(|e| Error::config(format!("output: cannot create temp file: {e}")))?;
            tmp.write_all(content.as_bytes())
                .map_err(|e| Error::config(format!("output: write failed: {e}")))?;
            tmp.persist(p)
                .map_err(|e| Error::config(format!("output: cannot move into place: {e}")))?;
            Ok(())
        }
    }
}
