//! Text file formats.
//!
//! Series files are UTF-8, one sample per line, with `#` comment lines:
//!
//! ```text
//! # fiberlink 0.1.0
//! # config_hash: 3f2a...
//! # gate_s: 1
//! # nu0_hz: 194400000000000
//! # columns: mjd<TAB>y<TAB>valid
//! 58000.000000000000 1.2345678901234567e-16 1
//! ```
//!
//! Sidecar mask files use the columns `mjd<TAB>keep<TAB>reason_bitmask`.
//! Counter exports (`MJD  ch1_Hz ch2_Hz ...`, whitespace separated, with a
//! header line naming the channels) are read with [`read_counter`].

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::constants::{DEFAULT_NU0, SECONDS_PER_DAY};
use crate::error::{Error, Result};
use crate::postproc::BudgetEntry;
use crate::series::{FreqSeries, ValidityMask, INVALID};

pub const TOOL_VERSION: &str = concat!("fiberlink ", env!("CARGO_PKG_VERSION"));

/// Comment header written at the top of every output file.
#[derive(Debug, Clone, Default)]
pub struct Header {
    pub config_hash: String,
    pub columns: Vec<String>,
    pub notes: Vec<(String, String)>,
}

impl Header {
    pub fn new(config_hash: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            config_hash: config_hash.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            notes: Vec::new(),
        }
    }

    pub fn note(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.notes.push((key.into(), value.to_string()));
        self
    }

    pub fn write(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "# {TOOL_VERSION}")?;
        writeln!(w, "# config_hash: {}", self.config_hash)?;
        for (k, v) in &self.notes {
            writeln!(w, "# {k}: {v}")?;
        }
        writeln!(w, "# columns: {}", self.columns.join("<TAB>"))
    }
}

fn fmt_mjd(t: f64) -> String {
    format!("{t:.12}")
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:.16e}")
    }
}

/// Write samples `values`/`valid` on the timebase `(t0, gate)`.
pub fn write_columns(
    w: &mut impl Write,
    header: &Header,
    t0: f64,
    gate: f64,
    values: &[f64],
    valid: &[bool],
) -> std::io::Result<()> {
    header.write(w)?;
    for (i, (&v, &ok)) in values.iter().zip(valid).enumerate() {
        let t = t0 + i as f64 * gate / SECONDS_PER_DAY;
        writeln!(w, "{}\t{}\t{}", fmt_mjd(t), fmt_value(v), ok as u8)?;
    }
    Ok(())
}

pub fn write_series(path: &Path, s: &FreqSeries, config_hash: &str, value_column: &str) -> Result<()> {
    let header = Header::new(config_hash, &["mjd", value_column, "valid"])
        .note("gate_s", s.gate())
        .note("nu0_hz", s.nu0());
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_columns(&mut w, &header, s.t0(), s.gate(), s.y(), s.valid())?;
    w.flush()?;
    Ok(())
}

/// Raw three-column record before interpretation.
#[derive(Debug, Clone)]
pub struct Record {
    pub t0: f64,
    pub gate: f64,
    pub values: Vec<f64>,
    pub flags: Vec<u32>,
    pub extra: Vec<u32>,
    pub meta: BTreeMap<String, String>,
}

impl Record {
    pub fn nu0(&self) -> Option<f64> {
        self.meta.get("nu0_hz").and_then(|v| v.parse().ok())
    }

    pub fn into_series(self, nu0_override: Option<f64>) -> Result<FreqSeries> {
        let nu0 = nu0_override.or(self.nu0()).unwrap_or(DEFAULT_NU0);
        let valid: Vec<bool> = self.flags.iter().map(|&f| f != 0).collect();
        let values = self
            .values
            .iter()
            .zip(&valid)
            .map(|(&v, &ok)| if ok { v } else { INVALID })
            .collect();
        FreqSeries::from_parts(self.t0, self.gate, nu0, values, valid)
    }

    pub fn into_mask(self) -> Result<ValidityMask> {
        ValidityMask::new(self.t0, self.gate, self.flags.iter().map(|&f| f != 0).collect())
    }
}

/// Places rows on a uniform grid; rows missing from the grid become invalid.
struct GridBuilder {
    rows: Vec<(usize, f64, Vec<f64>)>,
}

impl GridBuilder {
    fn new() -> Self {
        Self { rows: Vec::new() }
    }

    fn push(&mut self, line: usize, mjd: f64, values: Vec<f64>) {
        self.rows.push((line, mjd, values));
    }

    /// Returns `(t0, gate, grid)` where `grid[i]` is the row at sample `i`.
    fn finish(self, gate_hint: Option<f64>) -> Result<(f64, f64, Vec<Option<Vec<f64>>>)> {
        let rows = self.rows;
        let first = rows.first().ok_or(Error::EmptySeries)?;
        let t0 = first.1;
        let gate = match gate_hint {
            Some(g) => g,
            None => {
                let mut steps: Vec<f64> = rows
                    .windows(2)
                    .map(|p| (p[1].1 - p[0].1) * SECONDS_PER_DAY)
                    .filter(|d| *d > 0.0)
                    .collect();
                if steps.is_empty() {
                    1.0
                } else {
                    steps.sort_by(f64::total_cmp);
                    // microsecond resolution is all MJD with 12 decimals carries
                    (steps[steps.len() / 2] * 1e6).round() / 1e6
                }
            }
        };
        if !(gate > 0.0) {
            return Err(Error::param("gate", format!("inferred gate {gate} s is not positive")));
        }
        let mut grid: Vec<Option<Vec<f64>>> = Vec::with_capacity(rows.len());
        for (line, mjd, values) in rows {
            let pos = (mjd - t0) * SECONDS_PER_DAY / gate;
            let k = pos.round();
            if k < 0.0 || (pos - k).abs() > 0.01 {
                return Err(Error::Parse {
                    line,
                    reason: format!("timestamp {mjd} is off the {gate} s sample grid"),
                });
            }
            let k = k as usize;
            if k < grid.len() {
                return Err(Error::Parse {
                    line,
                    reason: format!("timestamp {mjd} is not increasing"),
                });
            }
            grid.resize(k, None);
            grid.push(Some(values));
        }
        Ok((t0, gate, grid))
    }
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>().map_err(|e| Error::Parse {
        line,
        reason: format!("`{tok}`: {e}"),
    })
}

fn parse_u32(tok: &str, line: usize) -> Result<u32> {
    tok.parse::<u32>().map_err(|e| Error::Parse {
        line,
        reason: format!("`{tok}`: {e}"),
    })
}

/// Read a series or mask file. The second column is returned as `values`,
/// the third as `flags` and an optional fourth as `extra`.
pub fn read_record(r: impl Read) -> Result<Record> {
    let mut meta = BTreeMap::new();
    let mut builder = GridBuilder::new();
    let mut flags_by_row = Vec::new();
    for (idx, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some((k, v)) = comment.split_once(':') {
                meta.insert(k.trim().to_string(), v.trim().to_string());
            }
            continue;
        }
        let toks: Vec<&str> = trimmed.split_whitespace().collect();
        if toks.len() < 3 {
            return Err(Error::Parse {
                line: lineno,
                reason: format!("expected at least 3 columns, found {}", toks.len()),
            });
        }
        let mjd = parse_f64(toks[0], lineno)?;
        let value = parse_f64(toks[1], lineno)?;
        let flag = parse_u32(toks[2], lineno)?;
        let extra = match toks.get(3) {
            Some(t) => parse_u32(t, lineno)?,
            None => 0,
        };
        builder.push(lineno, mjd, vec![value]);
        flags_by_row.push((flag, extra));
    }
    let gate_hint = meta.get("gate_s").and_then(|g| g.parse::<f64>().ok());
    let (t0, gate, grid) = builder.finish(gate_hint)?;
    let mut values = Vec::with_capacity(grid.len());
    let mut flags = Vec::with_capacity(grid.len());
    let mut extra = Vec::with_capacity(grid.len());
    let mut rows = flags_by_row.into_iter();
    for cell in grid {
        match cell {
            Some(v) => {
                let (f, e) = rows.next().expect("one flag pair per row");
                values.push(v[0]);
                flags.push(f);
                extra.push(e);
            }
            None => {
                values.push(INVALID);
                flags.push(0);
                extra.push(0);
            }
        }
    }
    Ok(Record {
        t0,
        gate,
        values,
        flags,
        extra,
        meta,
    })
}

pub fn read_series(path: &Path, nu0_override: Option<f64>) -> Result<FreqSeries> {
    read_record(fs::File::open(path)?)?.into_series(nu0_override)
}

/// Write a sidecar selection file: `mjd keep reason_bitmask`.
pub fn write_mask(
    path: &Path,
    mask: &ValidityMask,
    reasons: &[u8],
    config_hash: &str,
) -> Result<()> {
    let header = Header::new(config_hash, &["mjd", "keep", "reason_bitmask"])
        .note("gate_s", mask.gate)
        .note("reason_bits", "1=coarse 2=mean 4=std 8=qf");
    let mut w = BufWriter::new(fs::File::create(path)?);
    header.write(&mut w)?;
    for (i, (&keep, &why)) in mask.bits.iter().zip(reasons).enumerate() {
        let t = mask.t0 + i as f64 * mask.gate / SECONDS_PER_DAY;
        writeln!(w, "{}\t{}\t{}", fmt_mjd(t), keep as u8, why)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a sidecar mask (`mjd keep reason`) or a series file, whose third
/// column is also a 0/1 flag.
pub fn read_mask(path: &Path) -> Result<ValidityMask> {
    let rec = read_record(fs::File::open(path)?)?;
    let is_mask = rec
        .meta
        .get("columns")
        .map(|c| c.contains("keep"))
        .unwrap_or(false);
    if is_mask {
        // second column is the keep flag
        let bits = rec.values.iter().zip(&rec.flags).map(|(&k, _)| k == 1.0).collect();
        ValidityMask::new(rec.t0, rec.gate, bits)
    } else {
        rec.into_mask()
    }
}

/// Counter export: columns of absolute frequencies in Hz per channel.
#[derive(Debug, Clone)]
pub struct CounterExport {
    pub t0: f64,
    pub gate: f64,
    pub channels: Vec<String>,
    /// `data[c][i]`: channel `c` at sample `i`; NaN where the row is missing.
    pub data: Vec<Vec<f64>>,
}

impl CounterExport {
    /// Deviation of one channel from `nominal_hz`, as fractional frequency at
    /// carrier `nu0`.
    pub fn channel_series(&self, name: &str, nominal_hz: f64, nu0: f64) -> Result<FreqSeries> {
        let c = self
            .channels
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::param("channel", format!("`{name}` not in {:?}", self.channels)))?;
        let valid: Vec<bool> = self.data[c].iter().map(|v| v.is_finite()).collect();
        let y = self.data[c]
            .iter()
            .map(|&f| if f.is_finite() { (f - nominal_hz) / nu0 } else { INVALID })
            .collect();
        FreqSeries::from_parts(self.t0, self.gate, nu0, y, valid)
    }
}

/// Read a dead-time-free counter export (`MJD ch1_Hz ch2_Hz ...`).
pub fn read_counter(r: impl Read) -> Result<CounterExport> {
    let mut channels: Option<Vec<String>> = None;
    let mut builder = GridBuilder::new();
    for (idx, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = trimmed.split_whitespace().collect();
        if channels.is_none() {
            if !toks[0].eq_ignore_ascii_case("mjd") {
                return Err(Error::Parse {
                    line: lineno,
                    reason: "expected a header line starting with `MJD`".into(),
                });
            }
            channels = Some(toks[1..].iter().map(|s| s.to_string()).collect());
            continue;
        }
        let n_ch = channels.as_ref().map(|c| c.len()).unwrap_or(0);
        if toks.len() != n_ch + 1 {
            return Err(Error::Parse {
                line: lineno,
                reason: format!("expected {} columns, found {}", n_ch + 1, toks.len()),
            });
        }
        let mjd = parse_f64(toks[0], lineno)?;
        let vals = toks[1..]
            .iter()
            .map(|t| parse_f64(t, lineno))
            .collect::<Result<Vec<_>>>()?;
        builder.push(lineno, mjd, vals);
    }
    let channels = channels.ok_or(Error::EmptySeries)?;
    let (t0, gate, grid) = builder.finish(None)?;
    let mut data = vec![Vec::with_capacity(grid.len()); channels.len()];
    for cell in grid {
        for (c, col) in data.iter_mut().enumerate() {
            col.push(cell.as_ref().map(|v| v[c]).unwrap_or(f64::NAN));
        }
    }
    Ok(CounterExport {
        t0,
        gate,
        channels,
        data,
    })
}

/// Read a budget table: one `label bias uncertainty` entry per line, label
/// possibly containing spaces. A leading `label ...` row is skipped.
pub fn read_budget(r: impl Read) -> Result<Vec<BudgetEntry>> {
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = trimmed.split_whitespace().collect();
        if out.is_empty() && toks[0].eq_ignore_ascii_case("label") {
            continue;
        }
        let bad = |reason: &str| Error::Parse {
            line: idx + 1,
            reason: reason.to_string(),
        };
        if toks.len() < 3 {
            return Err(bad("expected `label bias uncertainty`"));
        }
        let k = toks.len();
        let bias: f64 = toks[k - 2].parse().map_err(|_| bad("bias is not a number"))?;
        let uncertainty: f64 = toks[k - 1].parse().map_err(|_| bad("uncertainty is not a number"))?;
        if !(uncertainty >= 0.0) {
            return Err(bad("uncertainty must be >= 0"));
        }
        out.push(BudgetEntry {
            label: toks[..k - 2].join(" "),
            bias,
            uncertainty,
        });
    }
    Ok(out)
}
