//! Versioned CSV and JSON writers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::CliError;

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    let io = |source| CliError::Io {
        path: path.to_owned(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    Ok(BufWriter::new(File::create(path).map_err(io)?))
}

/// Writes `# schema: <schema>` followed by a header row and one row per record.
pub fn write_csv<T: Serialize>(path: &Path, schema: &str, rows: &[T]) -> Result<(), CliError> {
    let mut w = create(path)?;
    writeln!(w, "# schema: {schema}").map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut csv = csv::Writer::from_writer(w);
    for row in rows {
        csv.serialize(row)?;
    }
    csv.flush().map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)
        .and_then(|_| w.flush())
        .map_err(|source| CliError::Io {
            path: path.to_owned(),
            source,
        })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|source| CliError::Io {
            path: path.to_owned(),
            source,
        })
}

/// Reads a CSV written by [`write_csv`], checking the schema line.
pub fn read_csv<T: serde::de::DeserializeOwned>(path: &Path, schema: &str) -> Result<Vec<T>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })?;
    let (first, rest) = text.split_once('\n').unwrap_or((&text, ""));
    let want = format!("# schema: {schema}");
    if first != want {
        return Err(CliError::Config(format!(
            "{}: expected `{want}`, found `{first}`",
            path.display()
        )));
    }
    let mut rdr = csv::Reader::from_reader(rest.as_bytes());
    Ok(rdr.deserialize().collect::<Result<Vec<T>, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Row {
        t: f64,
        iterations: Option<usize>,
        value: f64,
    }

    #[test]
    fn csv_round_trip_with_schema_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/x.csv");
        let rows = vec![
            Row { t: 0.5, iterations: Some(3), value: 1e-10 },
            Row { t: 1.0, iterations: None, value: 0.1 },
        ];
        write_csv(&path, "x/1", &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# schema: x/1\nt,iterations,value\n"));
        let back: Vec<Row> = read_csv(&path, "x/1").unwrap();
        assert_eq!(back, rows);
        assert!(read_csv::<Row>(&path, "x/2").is_err());
    }
}
