//! Order-stream files: a CSV of rows plus a `.meta` key-value sidecar.
//!
//! CSV schema (header required):
//! `seq,side,action,is_mo,price,volume,best_bid,best_ask`
//! with 0/1 integers for the flags, currency units for prices, shares for
//! volume. The sidecar shares the CSV's basename with `.meta` appended and
//! holds `tick_size`, `min_volume_unit`, and `instrument`.

use std::io::Write;
use std::path::{Path, PathBuf};

use orderdomain::RawOrder;
use serde::Deserialize;

use crate::error::DataError;

pub const CSV_HEADER: &str = "seq,side,action,is_mo,price,volume,best_bid,best_ask";

/// Instrument-level constants shared by every row of a stream.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamMeta {
    pub tick_size: f64,
    pub min_volume_unit: f64,
    pub instrument: String,
}

/// Chronologically ordered raw orders with their pre-order best quotes.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderStream {
    pub meta: StreamMeta,
    seqs: Vec<u64>,
    rows: Vec<RawOrder>,
}

impl OrderStream {
    pub fn new(meta: StreamMeta, seqs: Vec<u64>, rows: Vec<RawOrder>) -> Result<Self, DataError> {
        assert_eq!(seqs.len(), rows.len(), "seq/row length mismatch");
        for (i, pair) in seqs.windows(2).enumerate() {
            if pair[1] <= pair[0] {
                return Err(DataError::SequenceOrder { row: i + 2 });
            }
        }
        for (i, row) in rows.iter().enumerate() {
            row.validate().map_err(|e| DataError::Row {
                row: i + 1,
                field: "order",
                detail: e.to_string(),
            })?;
        }
        Ok(OrderStream { meta, seqs, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[RawOrder] {
        &self.rows
    }

    pub fn seqs(&self) -> &[u64] {
        &self.seqs
    }

    /// Contiguous sub-stream `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> OrderStream {
        OrderStream {
            meta: self.meta.clone(),
            seqs: self.seqs[start..end].to_vec(),
            rows: self.rows[start..end].to_vec(),
        }
    }
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    seq: u64,
    side: u8,
    action: u8,
    is_mo: u8,
    price: f64,
    volume: f64,
    best_bid: f64,
    best_ask: f64,
}

fn meta_path(csv_path: &Path) -> PathBuf {
    let mut p = csv_path.as_os_str().to_owned();
    p.push(".meta");
    PathBuf::from(p)
}

fn parse_meta(path: &Path) -> Result<StreamMeta, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    let mut tick_size = None;
    let mut min_volume_unit = None;
    let mut instrument = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(DataError::Meta {
                path: path.display().to_string(),
                line: lineno + 1,
                detail: "expected key = value".to_string(),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        let bad = |detail: String| DataError::Meta {
            path: path.display().to_string(),
            line: lineno + 1,
            detail,
        };
        match key {
            "tick_size" => {
                tick_size = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?)
            }
            "min_volume_unit" => {
                min_volume_unit = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?)
            }
            "instrument" => instrument = Some(value.to_string()),
            other => return Err(bad(format!("unknown key {other:?}"))),
        }
    }
    let missing = |key: &str| DataError::Meta {
        path: path.display().to_string(),
        line: 0,
        detail: format!("missing key {key:?}"),
    };
    Ok(StreamMeta {
        tick_size: tick_size.ok_or_else(|| missing("tick_size"))?,
        min_volume_unit: min_volume_unit.ok_or_else(|| missing("min_volume_unit"))?,
        instrument: instrument.ok_or_else(|| missing("instrument"))?,
    })
}

/// Loads and fully validates a stream. Row numbers in errors count data rows
/// from 1 (the header is not a row).
pub fn load_orders(path: &Path) -> Result<OrderStream, DataError> {
    let meta = parse_meta(&meta_path(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| DataError::Header {
            expected: CSV_HEADER.to_string(),
            got: e.to_string(),
        })?;

    {
        let got = reader
            .headers()
            .map_err(|e| DataError::Header {
                expected: CSV_HEADER.to_string(),
                got: e.to_string(),
            })?
            .iter()
            .collect::<Vec<_>>()
            .join(",");
        if got != CSV_HEADER {
            return Err(DataError::Header {
                expected: CSV_HEADER.to_string(),
                got,
            });
        }
    }

    let mut seqs = Vec::new();
    let mut rows = Vec::new();
    for (i, record) in reader.deserialize::<CsvRow>().enumerate() {
        let rowno = i + 1;
        let rec = record.map_err(|e| DataError::Row {
            row: rowno,
            field: "record",
            detail: e.to_string(),
        })?;
        let raw = RawOrder {
            side: rec.side,
            action: rec.action,
            is_mo: rec.is_mo,
            price: rec.price,
            volume: rec.volume,
            best_bid: rec.best_bid,
            best_ask: rec.best_ask,
            tick_size: meta.tick_size,
            min_volume_unit: meta.min_volume_unit,
        };
        raw.validate().map_err(|e| DataError::Row {
            row: rowno,
            field: "order",
            detail: e.to_string(),
        })?;
        if let Some(&prev) = seqs.last() {
            if rec.seq <= prev {
                return Err(DataError::SequenceOrder { row: rowno });
            }
        }
        seqs.push(rec.seq);
        rows.push(raw);
    }
    if rows.is_empty() {
        return Err(DataError::EmptyStream {
            min: orderdomain::HISTORY_LEN + 1,
        });
    }
    Ok(OrderStream { meta, seqs, rows })
}

/// Writes the CSV and its `.meta` sidecar. Loading the result reproduces the
/// stream exactly.
pub fn save_orders(stream: &OrderStream, path: &Path) -> Result<(), DataError> {
    let mut out = String::with_capacity(stream.len() * 40);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (seq, row) in stream.seqs.iter().zip(&stream.rows) {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            seq, row.side, row.action, row.is_mo, row.price, row.volume, row.best_bid, row.best_ask
        ));
    }
    write_atomic(path, out.as_bytes())?;

    let meta = format!(
        "tick_size = {}\nmin_volume_unit = {}\ninstrument = {}\n",
        stream.meta.tick_size, stream.meta.min_volume_unit, stream.meta.instrument
    );
    write_atomic(&meta_path(path), meta.as_bytes())
}

/// Write via a temp file + rename so failed runs never leave partial output.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), DataError> {
    let tmp = path.with_extension("tmp.partial");
    {
        let mut f = std::fs::File::create(&tmp).map_err(|e| DataError::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| DataError::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| DataError::io(path, e))
}
