use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use super::pool::{AgentPool, Provenance, Value};
use super::schema::{Schema, SchemaDoc, VariableKind};
use crate::error::{Error, Result};

pub const PROVENANCE_COLUMN: &str = "provenance";

struct RawTable {
    header: Vec<String>,
    records: Vec<csv::StringRecord>,
}

fn read_raw<R: Read>(reader: R) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let records = rdr.records().collect::<Result<Vec<_>, _>>()?;
    Ok(RawTable { header, records })
}

fn check_header(header: &[String], schema: &Schema) -> Result<()> {
    let names: Vec<&str> = schema.variables.iter().map(|v| v.name.as_str()).collect();
    let got: Vec<&str> = header
        .iter()
        .map(String::as_str)
        .filter(|h| *h != PROVENANCE_COLUMN)
        .collect();
    if got != names {
        return Err(Error::SchemaMismatch(format!(
            "csv header {got:?} does not match schema variables {names:?}"
        )));
    }
    Ok(())
}

fn parse_rows(raw: &RawTable, schema: &Arc<Schema>) -> Result<Vec<Vec<Value>>> {
    check_header(&raw.header, schema)?;
    let n = schema.len();
    raw.records
        .iter()
        .enumerate()
        .map(|(r, rec)| {
            (0..n)
                .map(|i| {
                    let spec = &schema.variables[i];
                    let cell = rec.get(i).map(str::trim).unwrap_or("");
                    if cell.is_empty() {
                        return Err(Error::MissingValue {
                            variable: spec.name.clone(),
                            row: r,
                        });
                    }
                    if spec.kind.is_numerical() {
                        let x: f64 = cell.parse().map_err(|_| {
                            Error::SchemaMismatch(format!(
                                "row {r}: `{cell}` is not a number for `{}`",
                                spec.name
                            ))
                        })?;
                        super::schema::discretize(x, spec)?;
                        Ok(Value::Num(x))
                    } else {
                        spec.category_index(cell)
                            .map(Value::Cat)
                            .ok_or_else(|| Error::UnknownCategory {
                                variable: spec.name.clone(),
                                category: cell.to_string(),
                            })
                    }
                })
                .collect()
        })
        .collect()
}

pub fn read_pool<R: Read>(reader: R, schema: Arc<Schema>, provenance: Provenance) -> Result<AgentPool> {
    let raw = read_raw(reader)?;
    let rows = parse_rows(&raw, &schema)?;
    Ok(AgentPool {
        schema,
        rows,
        provenance,
    })
}

pub fn read_pool_file(path: &Path, schema: Arc<Schema>, provenance: Provenance) -> Result<AgentPool> {
    read_pool(std::fs::File::open(path)?, schema, provenance)
}

/// Reads a data CSV against a schema document, resolving bin counts from the data.
pub fn load_dataset<R: Read>(reader: R, doc: &SchemaDoc) -> Result<AgentPool> {
    let raw = read_raw(reader)?;
    let schema = doc.resolve(|i| {
        let name = &doc.variables[i].name;
        let col = raw
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::SchemaMismatch(format!("column `{name}` missing from csv")))?;
        raw.records
            .iter()
            .enumerate()
            .map(|(r, rec)| {
                let cell = rec.get(col).map(str::trim).unwrap_or("");
                if cell.is_empty() {
                    return Err(Error::MissingValue {
                        variable: name.clone(),
                        row: r,
                    });
                }
                cell.parse::<f64>()
                    .map_err(|_| Error::SchemaMismatch(format!("row {r}: `{cell}` is not a number for `{name}`")))
            })
            .collect()
    })?;
    let schema = Arc::new(schema);
    let rows = parse_rows(&raw, &schema)?;
    Ok(AgentPool {
        schema,
        rows,
        provenance: Provenance::Train,
    })
}

fn format_value(v: Value, kind: VariableKind, categories: &[String]) -> String {
    match v {
        Value::Cat(c) => categories[c].clone(),
        Value::Num(x) if kind == VariableKind::NumericalInt && x.fract() == 0.0 => format!("{}", x as i64),
        Value::Num(x) => format!("{x}"),
    }
}

/// Writes a pool with the schema's header; generated pools carry a provenance column.
pub fn write_pool<W: Write>(writer: W, pool: &AgentPool) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let tagged = pool.provenance == Provenance::Generated;
    let mut header: Vec<&str> = pool.schema.variables.iter().map(|v| v.name.as_str()).collect();
    if tagged {
        header.push(PROVENANCE_COLUMN);
    }
    w.write_record(&header)?;
    for row in &pool.rows {
        let mut rec: Vec<String> = row
            .iter()
            .zip(&pool.schema.variables)
            .map(|(v, spec)| format_value(*v, spec.kind, &spec.categories))
            .collect();
        if tagged {
            rec.push(pool.provenance.as_str().to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_pool_file(path: &Path, pool: &AgentPool) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_pool(f, pool)
}
