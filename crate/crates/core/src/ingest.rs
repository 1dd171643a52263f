//! CSV loading and writing.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{normalize_cell, NullTokens, Relation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsvDialect {
    pub delimiter: char,
    pub quote: char,
    pub has_header: bool,
}

impl Default for CsvDialect {
    fn default() -> Self {
        CsvDialect {
            delimiter: ',',
            quote: '"',
            has_header: true,
        }
    }
}

impl CsvDialect {
    fn bytes(&self) -> Result<(u8, u8)> {
        let byte = |c: char, what: &str| {
            u8::try_from(c)
                .ok()
                .filter(u8::is_ascii)
                .ok_or_else(|| Error::Dialect(format!("{what} {c:?} is not a single ASCII byte")))
        };
        let delimiter = byte(self.delimiter, "delimiter")?;
        let quote = byte(self.quote, "quote")?;
        if delimiter == quote {
            return Err(Error::Dialect("delimiter and quote character coincide".into()));
        }
        Ok((delimiter, quote))
    }
}

/// Loads a CSV file; the relation is named after the file stem.
pub fn load_relation(path: &Path, dialect: &CsvDialect, null_tokens: &NullTokens) -> Result<Relation> {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "relation".to_string());
    load_named(path, &name, dialect, null_tokens)
}

pub fn load_named(
    path: &Path,
    name: &str,
    dialect: &CsvDialect,
    null_tokens: &NullTokens,
) -> Result<Relation> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_relation(file, path, name, dialect, null_tokens)
}

/// Parses CSV from any reader. `origin` is only used in diagnostics.
pub fn read_relation<R: Read>(
    reader: R,
    origin: &Path,
    name: &str,
    dialect: &CsvDialect,
    null_tokens: &NullTokens,
) -> Result<Relation> {
    let (delimiter, quote) = dialect.bytes()?;
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .quote(quote)
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let csv_err = |source| Error::Csv {
        path: origin.to_path_buf(),
        source,
    };

    let mut records = rdr.records();
    let mut attributes: Option<Vec<String>> = None;
    if dialect.has_header {
        match records.next() {
            Some(header) => {
                let header = header.map_err(csv_err)?;
                attributes = Some(header.iter().map(|h| h.trim().to_string()).collect());
            }
            None => {
                return Relation::new(name, Vec::new(), Vec::new());
            }
        }
    }

    let mut tuples = Vec::new();
    for (row, record) in records.enumerate() {
        let record = record.map_err(csv_err)?;
        let expected = attributes
            .get_or_insert_with(|| (1..=record.len()).map(|i| format!("column_{i}")).collect())
            .len();
        if record.len() != expected {
            return Err(Error::RaggedRow {
                path: origin.to_path_buf(),
                row,
                line: record.position().map(|p| p.line()).unwrap_or(0),
                expected,
                found: record.len(),
            });
        }
        tuples.push(record.iter().map(|c| normalize_cell(c, null_tokens)).collect());
    }
    Relation::new(name, attributes.unwrap_or_default(), tuples)
}

/// Writes a relation as RFC 4180 CSV; nulls become empty fields.
pub fn write_relation(rel: &Relation, path: &Path, dialect: &CsvDialect) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_to(rel, file, path, dialect)
}

pub fn write_to<W: Write>(rel: &Relation, writer: W, origin: &Path, dialect: &CsvDialect) -> Result<()> {
    let (delimiter, quote) = dialect.bytes()?;
    let mut wtr = csv::WriterBuilder::new()
        .delimiter(delimiter)
        .quote(quote)
        .flexible(rel.arity() == 0)
        .from_writer(writer);
    let csv_err = |source| Error::Csv {
        path: origin.to_path_buf(),
        source,
    };
    if dialect.has_header {
        wtr.write_record(rel.attributes()).map_err(csv_err)?;
    }
    for tuple in rel.tuples() {
        wtr.write_record(tuple.iter().map(|c| c.as_deref().unwrap_or("")))
            .map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| Error::io(origin, e))
}

/// Serializes a relation to an in-memory CSV string.
pub fn to_csv_string(rel: &Relation, dialect: &CsvDialect) -> Result<String> {
    let mut buf = Vec::new();
    write_to(rel, &mut buf, Path::new("<memory>"), dialect)?;
    Ok(String::from_utf8(buf).expect("csv writer emits the UTF-8 it was given"))
}
