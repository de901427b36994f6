//! CSV tables with the provenance comment line.

use sha2::{Digest, Sha256};

use crate::error::CliError;

/// A header row and string cells.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Column index by name.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

/// Shortest round-trip exponent form; non-finite values are spelled out.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:e}")
    }
}

/// First 16 hex digits of SHA-256.
pub fn params_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// `# fracbubble <version> seed=<seed> params=<hash>` followed by the table
/// with LF line endings.
pub fn render(table: &Table, seed: u64, hash: &str) -> Result<Vec<u8>, CliError> {
    let mut out = format!("# fracbubble {} seed={seed} params={hash}\n", env!("CARGO_PKG_VERSION")).into_bytes();
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    let body = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
    out.extend_from_slice(&body);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_layout() {
        let mut t = Table::new(["a", "b"]);
        t.push(vec![num(1.5), num(-2e-9)]);
        let text = String::from_utf8(render(&t, 7, "00ff").unwrap()).unwrap();
        let lines: Vec<&str> = text.split('\n').collect();
        assert!(lines[0].starts_with("# fracbubble ") && lines[0].ends_with("seed=7 params=00ff"));
        assert_eq!(lines[1], "a,b");
        assert_eq!(lines[2], "1.5e0,-2e-9");
        assert_eq!(lines[3], "");
        assert!(!text.contains('\r'));
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1.0 / 3.0, 6.02e23, -1e-300, 0.0] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(num(f64::NAN), "nan");
    }

    #[test]
    fn hash_is_stable_and_short() {
        assert_eq!(params_hash("x"), params_hash("x"));
        assert_ne!(params_hash("x"), params_hash("y"));
        assert_eq!(params_hash("").len(), 16);
        // SHA-256 of the empty string starts with e3b0c442
        assert!(params_hash("").starts_with("e3b0c442"));
    }
}
