//! Versioned plain-text container for numeric blocks.
//!
//! ```text
//! semfilt-model/1
//! d 192
//! h 100
//! block W1 192 100
//! 1.2345678901234567e-1 ...      (one line per row)
//! ```
//!
//! Values are written with 17 significant digits, which round-trips every
//! `f64` exactly.

use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Row-major values.
    pub values: Vec<f64>,
}

impl Block {
    pub fn expect_shape(&self, rows: usize, cols: usize) -> Result<()> {
        if self.rows != rows || self.cols != cols {
            return Err(Error::Shape {
                block: self.name.clone(),
                expected: rows * cols,
                found: self.rows * self.cols,
            });
        }
        Ok(())
    }

    pub fn expect_len(&self, len: usize) -> Result<()> {
        if self.values.len() != len {
            return Err(Error::Shape {
                block: self.name.clone(),
                expected: len,
                found: self.values.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TextDocument {
    format: String,
    headers: Vec<(String, String)>,
    blocks: Vec<Block>,
}

pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl TextDocument {
    pub fn new(format: &str) -> Self {
        Self {
            format: format.to_string(),
            ..Self::default()
        }
    }

    pub fn format(&self) -> &str {
        &self.format
    }

    pub fn header(&mut self, key: &str, value: impl Display) {
        self.headers.push((key.to_string(), value.to_string()));
    }

    pub fn header_f64(&mut self, key: &str, value: f64) {
        self.header(key, format_f64(value));
    }

    pub fn block(&mut self, name: &str, rows: usize, cols: usize, values: Vec<f64>) {
        debug_assert_eq!(rows * cols, values.len());
        self.blocks.push(Block {
            name: name.to_string(),
            rows,
            cols,
            values,
        });
    }

    pub fn expect_format(&self, format: &str) -> Result<()> {
        if self.format != format {
            return Err(Error::Version(format!(
                "expected `{format}`, found `{}`",
                self.format
            )));
        }
        Ok(())
    }

    pub fn get_str(&self, key: &str) -> Result<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Malformed(format!("missing header `{key}`")))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.get_str(key)?;
        raw.parse()
            .map_err(|_| Error::Malformed(format!("bad value `{raw}` for header `{key}`")))
    }

    /// A block whose declared shape is `rows x cols`.
    pub fn block_named(&self, name: &str) -> Result<&Block> {
        self.blocks
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| Error::Malformed(format!("missing block `{name}`")))
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.format);
        out.push('\n');
        for (k, v) in &self.headers {
            out.push_str(&format!("{k} {v}\n"));
        }
        for b in &self.blocks {
            out.push_str(&format!("block {} {} {}\n", b.name, b.rows, b.cols));
            for row in b.values.chunks(b.cols.max(1)) {
                let line: Vec<String> = row.iter().map(|&v| format_f64(v)).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().peekable();
        let format = match lines.next() {
            Some((_, l)) if !l.trim().is_empty() => l.trim().to_string(),
            _ => return Err(Error::Malformed("empty document".into())),
        };
        if !format.starts_with("semfilt-") {
            return Err(Error::Version(format!(
                "unrecognized format tag `{format}`"
            )));
        }
        let mut doc = TextDocument::new(&format);

        while let Some((no, line)) = lines.next() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap_or_default();
            if key != "block" {
                let value = parts.next().ok_or_else(|| {
                    Error::Malformed(format!("line {}: header without value", no + 1))
                })?;
                doc.headers.push((key.to_string(), value.to_string()));
                continue;
            }

            let (name, rows, cols) = match (parts.next(), parts.next(), parts.next()) {
                (Some(n), Some(r), Some(c)) => (
                    n.to_string(),
                    r.parse::<usize>()
                        .map_err(|_| Error::Malformed(format!("line {}: bad row count", no + 1)))?,
                    c.parse::<usize>().map_err(|_| {
                        Error::Malformed(format!("line {}: bad column count", no + 1))
                    })?,
                ),
                _ => {
                    return Err(Error::Malformed(format!(
                        "line {}: block needs a name, rows and cols",
                        no + 1
                    )))
                }
            };
            let mut values = Vec::with_capacity(rows * cols);
            let mut found_rows = 0;
            while let Some((_, next)) = lines.peek() {
                let next = next.trim();
                if next.starts_with("block ") {
                    break;
                }
                let (row_no, row) = lines.next().expect("peeked");
                if row.trim().is_empty() {
                    continue;
                }
                let before = values.len();
                for tok in row.split_whitespace() {
                    values.push(tok.parse::<f64>().map_err(|_| {
                        Error::Malformed(format!("line {}: bad number `{tok}`", row_no + 1))
                    })?);
                }
                if values.len() - before != cols {
                    return Err(Error::Shape {
                        block: name,
                        expected: cols,
                        found: values.len() - before,
                    });
                }
                found_rows += 1;
            }
            if found_rows != rows {
                return Err(Error::Shape {
                    block: name,
                    expected: rows * cols,
                    found: found_rows * cols,
                });
            }
            doc.blocks.push(Block {
                name,
                rows,
                cols,
                values,
            });
        }
        Ok(doc)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Writes to a sibling temporary file and renames it over `path`.
    pub fn write_atomic(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let write_err = |source| Error::Write {
            path: path.to_path_buf(),
            source,
        };
        let mut tmp_name = path
            .file_name()
            .map(|n| n.to_os_string())
            .unwrap_or_default();
        tmp_name.push(".tmp");
        let tmp = path.with_file_name(tmp_name);
        let mut file = fs::File::create(&tmp).map_err(write_err)?;
        file.write_all(self.render().as_bytes())
            .map_err(write_err)?;
        file.sync_all().map_err(write_err)?;
        drop(file);
        fs::rename(&tmp, path).map_err(write_err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_parse_round_trip() {
        let mut doc = TextDocument::new("semfilt-test/1");
        doc.header("k", 3);
        doc.header_f64("x", 0.1);
        doc.block("m", 2, 2, vec![0.1, -1e-300, f64::MAX, 1.0 / 3.0]);
        let back = TextDocument::parse(&doc.render()).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.get::<usize>("k").unwrap(), 3);
        assert_eq!(back.get::<f64>("x").unwrap(), 0.1);
    }

    #[test]
    fn row_count_mismatch_is_shape_error() {
        let text = "semfilt-test/1\nblock W 4 2\n1 2\n3 4\n5 6\n";
        assert!(matches!(
            TextDocument::parse(text),
            Err(Error::Shape { .. })
        ));
        let ragged = "semfilt-test/1\nblock W 2 2\n1 2\n3\n";
        assert!(matches!(
            TextDocument::parse(ragged),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn bad_inputs() {
        assert!(matches!(TextDocument::parse(""), Err(Error::Malformed(_))));
        assert!(matches!(
            TextDocument::parse("hello\n"),
            Err(Error::Version(_))
        ));
        assert!(matches!(
            TextDocument::parse("semfilt-test/1\nblock W 1 1\nabc\n"),
            Err(Error::Malformed(_))
        ));
        let doc = TextDocument::parse("semfilt-test/9\n").unwrap();
        assert!(matches!(
            doc.expect_format("semfilt-test/1"),
            Err(Error::Version(_))
        ));
    }
}
