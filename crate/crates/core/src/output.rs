//! Deterministic CSV and JSON serialization.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

/// A named output held in memory until it is written.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OutputFile {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct InventoryEntry {
    pub name: String,
    pub bytes: usize,
}

impl OutputFile {
    pub fn inventory(&self) -> InventoryEntry {
        InventoryEntry {
            name: self.name.clone(),
            bytes: self.bytes.len(),
        }
    }
}

/// 17 significant digits, so every value round-trips.
pub fn float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// CSV text with a header row, comma separators, and LF line endings. Cells
/// are never quoted; callers only pass numbers and identifiers.
#[derive(Clone, Debug)]
pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self {
            text,
            columns: header.len(),
        }
    }

    pub fn row<I, S>(&mut self, cells: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut n = 0;
        for (i, cell) in cells.into_iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            let cell = cell.as_ref();
            debug_assert!(!cell.contains([',', '\n', '"']));
            self.text.push_str(cell);
            n += 1;
        }
        assert_eq!(n, self.columns, "row width must match the header");
        self.text.push('\n');
    }

    pub fn rows(&self) -> usize {
        self.text.lines().count() - 1
    }

    pub fn into_file(self, name: &str) -> OutputFile {
        OutputFile {
            name: name.to_string(),
            bytes: self.text.into_bytes(),
        }
    }
}

/// Pretty JSON with a trailing newline.
pub fn json_file(name: &str, value: &impl Serialize) -> Result<OutputFile> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(OutputFile {
        name: name.to_string(),
        bytes: text.into_bytes(),
    })
}

/// Writes files in order, creating `dir` if needed.
pub fn write_files(dir: &Path, files: &[OutputFile]) -> Result<Vec<InventoryEntry>> {
    fs::create_dir_all(dir)?;
    files
        .iter()
        .map(|f| {
            fs::write(dir.join(&f.name), &f.bytes)?;
            Ok(f.inventory())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_keep_seventeen_digits() {
        assert_eq!(float(0.1), "1.0000000000000001e-1");
        assert_eq!(float(-2.0), "-2.0000000000000000e0");
        assert_eq!(float(f64::NAN), "NaN");
        let x = std::f64::consts::PI / 7.0;
        assert_eq!(float(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn csv_layout() {
        let mut csv = Csv::new(&["a", "b"]);
        csv.row(["1", "x"]);
        csv.row([float(0.5), "y".to_string()]);
        assert_eq!(csv.rows(), 2);
        let f = csv.into_file("t.csv");
        assert_eq!(
            String::from_utf8(f.bytes).unwrap(),
            "a,b\n1,x\n5.0000000000000000e-1,y\n"
        );
    }

    #[test]
    #[should_panic(expected = "row width")]
    fn csv_rejects_short_rows() {
        Csv::new(&["a", "b"]).row(["1"]);
    }
}
