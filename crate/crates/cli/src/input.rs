use std::path::Path;

use anyhow::{bail, Context, Result};

/// Parses comma-separated numeric rows. A first line with any non-numeric
/// cell is treated as a header and skipped. Rows must share one width.
pub fn parse_csv_str(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("line {}: malformed CSV", idx + 1))?;
        let line = record.position().map_or(idx as u64 + 1, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        let row = match parsed {
            Ok(row) => row,
            Err(_) if line == 1 => continue,
            Err(_) => {
                let bad = record.iter().find(|c| c.parse::<f64>().is_err()).unwrap_or("");
                bail!("line {line}: non-numeric cell {bad:?}");
            }
        };
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                bail!("line {line}: expected {} columns, found {}", first.len(), row.len());
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn parse_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_csv_str(&text).with_context(|| format!("parsing {}", path.display()))
}
