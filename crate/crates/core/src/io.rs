//! Plain-text formats: two-column CSV records and `key = value` config files.
//!
//! Spectrum CSV is a header row carrying the unit tags (`GHz,OD`) followed by
//! `x,y` rows. Time-series CSV adds a `# fs=<Hz>` comment ahead of the
//! header. Numbers are written with Rust's shortest round-trip formatting so
//! a file re-read reproduces the in-memory values bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::data::{Spectrum, TimeSeries};
use crate::error::{Error, Result};

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

/// `fs::write` with the path in the error.
pub fn write_text(path: &Path, text: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

/// `fs::read_to_string` with the path in the error.
pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

/// A parsed CSV table: `# key=value` comment metadata, header, numeric rows.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub meta: BTreeMap<String, String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, i: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[i]).collect()
    }
}

pub fn parse_table(reader: impl Read) -> Result<Table> {
    let mut table = Table::default();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some((k, v)) = comment.split_once('=') {
                table
                    .meta
                    .insert(k.trim().to_string(), v.trim().to_string());
            }
            continue;
        }
        if table.header.is_empty() {
            table.header = trimmed.split(',').map(|s| s.trim().to_string()).collect();
            continue;
        }
        let row = trimmed
            .split(',')
            .map(|s| {
                s.trim().parse::<f64>().map_err(|e| Error::Parse {
                    line: lineno,
                    msg: format!("`{}`: {e}", s.trim()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if row.len() != table.header.len() {
            return Err(Error::Parse {
                line: lineno,
                msg: format!(
                    "expected {} columns, found {}",
                    table.header.len(),
                    row.len()
                ),
            });
        }
        table.rows.push(row);
    }
    if table.header.is_empty() {
        return Err(Error::Parse {
            line: 0,
            msg: "missing header row".into(),
        });
    }
    Ok(table)
}

fn two_columns(table: &Table) -> Result<(String, String, Vec<f64>, Vec<f64>)> {
    if table.header.len() != 2 {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected 2 columns, header has {}", table.header.len()),
        });
    }
    Ok((
        table.header[0].clone(),
        table.header[1].clone(),
        table.column(0),
        table.column(1),
    ))
}

/// Column units and rows of a two-column file.
pub type Pairs = (String, String, Vec<(f64, f64)>);

/// Reads an unordered `(x, y)` pair list, e.g. I–V or current/field data.
pub fn read_pairs(path: impl AsRef<Path>) -> Result<Pairs> {
    let table = parse_table(open(path.as_ref())?)?;
    let (xu, yu, x, y) = two_columns(&table)?;
    Ok((xu, yu, x.into_iter().zip(y).collect()))
}

pub fn write_pairs(
    path: impl AsRef<Path>,
    x_unit: &str,
    y_unit: &str,
    pairs: &[(f64, f64)],
) -> Result<()> {
    let mut out = format!("{x_unit},{y_unit}\n");
    for (x, y) in pairs {
        writeln!(out, "{x},{y}").unwrap();
    }
    write_text(path.as_ref(), out)?;
    Ok(())
}

pub fn spectrum_to_csv(s: &Spectrum) -> String {
    let mut out = format!("{},{}\n", s.x_unit, s.y_unit);
    for (x, y) in s.iter() {
        writeln!(out, "{x},{y}").unwrap();
    }
    out
}

pub fn spectrum_from_csv(reader: impl Read) -> Result<Spectrum> {
    let table = parse_table(reader)?;
    let (xu, yu, x, y) = two_columns(&table)?;
    Spectrum::new(x, y, xu, yu)
}

pub fn write_spectrum(path: impl AsRef<Path>, s: &Spectrum) -> Result<()> {
    write_text(path.as_ref(), spectrum_to_csv(s))?;
    Ok(())
}

pub fn read_spectrum(path: impl AsRef<Path>) -> Result<Spectrum> {
    spectrum_from_csv(open(path.as_ref())?)
}

pub fn timeseries_to_csv(ts: &TimeSeries) -> String {
    let mut out = format!("# fs={}\n{},{}\n", ts.fs(), ts.t_unit, ts.y_unit);
    for (t, y) in ts.times().zip(ts.values()) {
        writeln!(out, "{t},{y}").unwrap();
    }
    out
}

/// Parses a time series. The declared `# fs=` must agree with the time column.
pub fn timeseries_from_csv(reader: impl Read) -> Result<TimeSeries> {
    let table = parse_table(reader)?;
    let (tu, yu, t, y) = two_columns(&table)?;
    let implied = TimeSeries::from_samples(&t, y, yu)?;
    let fs = match table.meta.get("fs") {
        Some(text) => {
            let declared: f64 = text.parse().map_err(|e| Error::Parse {
                line: 1,
                msg: format!("bad fs `{text}`: {e}"),
            })?;
            if (declared - implied.fs()).abs() > 1e-6 * declared {
                return Err(Error::NonUniformSampling(format!(
                    "declared fs={declared} but samples imply {}",
                    implied.fs()
                )));
            }
            declared
        }
        None => implied.fs(),
    };
    let y_unit = implied.y_unit.clone();
    let mut ts = TimeSeries::with_start(implied.t0(), fs, implied.into_values(), y_unit)?;
    ts.t_unit = tu;
    Ok(ts)
}

pub fn write_timeseries(path: impl AsRef<Path>, ts: &TimeSeries) -> Result<()> {
    write_text(path.as_ref(), timeseries_to_csv(ts))?;
    Ok(())
}

pub fn read_timeseries(path: impl AsRef<Path>) -> Result<TimeSeries> {
    timeseries_from_csv(open(path.as_ref())?)
}

/// Flat `key = value` configuration with `#` comments.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = match raw.split_once('#') {
                Some((before, _)) => before,
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: idx + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = k.trim();
            if key.is_empty() {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: "empty key".into(),
                });
            }
            entries.insert(key.to_string(), v.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&read_text(path.as_ref())?)
    }

    /// Entries from `other` replace entries with the same key.
    pub fn merge(&mut self, other: &Config) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.insert(key.into(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key)
            .map(|v| {
                v.parse::<f64>().map_err(|e| Error::Parse {
                    line: 0,
                    msg: format!("`{key}`: `{v}` is not a number ({e})"),
                })
            })
            .transpose()
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.get_f64(key)?.unwrap_or(default))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

/// Ordered `key = value` report, the machine-readable run summary.
#[derive(Debug, Clone, Default)]
pub struct Summary {
    lines: Vec<(String, String)>,
}

impl Summary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        self.lines.push((key.into(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.lines
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.lines {
            writeln!(out, "{k} = {v}").unwrap();
        }
        out
    }

    pub fn write(&self, mut w: impl Write) -> Result<()> {
        w.write_all(self.render().as_bytes())?;
        Ok(())
    }
}
