//! Parsing, serialization, partitioning and assembly of the four trace
//! tables.
//!
//! Two interchange formats are supported: CSV with a mandatory header row
//! and newline-delimited JSON. Both use the same field names and integer
//! enum codes. Absent optional fields are an empty CSV cell or an omitted
//! NDJSON key, never `0`.

use std::borrow::Cow;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::digest::{mix64, HashWriter};
use crate::error::IngestError;
use crate::model::{
    is_sentinel, CollectionEvent, CollectionType, EventType, InstanceEvent, InstanceType,
    MachineEvent, MachineEventType, Micros, Resources, UsageRecord, VerticalScaling,
    MICROS_PER_SECOND,
};

/// Longest span a usage record may cover.
pub const MAX_USAGE_SPAN: Micros = 300 * MICROS_PER_SECOND;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableKind {
    CollectionEvents,
    InstanceEvents,
    InstanceUsage,
    MachineEvents,
}

impl TableKind {
    pub const ALL: [TableKind; 4] = [
        TableKind::CollectionEvents,
        TableKind::InstanceEvents,
        TableKind::InstanceUsage,
        TableKind::MachineEvents,
    ];

    /// File stem used in fixture and input directories.
    pub fn file_stem(self) -> &'static str {
        match self {
            TableKind::CollectionEvents => "collection_events",
            TableKind::InstanceEvents => "instance_events",
            TableKind::InstanceUsage => "instance_usage",
            TableKind::MachineEvents => "machine_events",
        }
    }

    pub fn file_name(self, format: Format) -> String {
        format!("{}.{}", self.file_stem(), format.extension())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Ndjson,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Ndjson => "ndjson",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strictness {
    /// Any rejected line fails the parse.
    Strict,
    /// Rejected lines are logged and skipped.
    #[default]
    Permissive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestOptions {
    pub format: Format,
    pub strictness: Strictness,
    pub partition_count: usize,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            format: Format::Csv,
            strictness: Strictness::Permissive,
            partition_count: 1,
        }
    }
}

impl IngestOptions {
    pub fn new(format: Format, strictness: Strictness) -> Self {
        IngestOptions {
            format,
            strictness,
            ..Default::default()
        }
    }
}

/// One rejected input line; serialized as an NDJSON rejection-log entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct ParsedTable<R> {
    pub records: Vec<R>,
    pub rejections: Vec<Rejection>,
    /// Data lines seen, excluding the CSV header.
    pub lines: usize,
}

/// Scalar cell value used when encoding records.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    U(u64),
    I(i64),
    F(f64),
}

impl Cell {
    fn write_csv(&self, out: &mut String) {
        match *self {
            Cell::U(v) => write!(out, "{v}").unwrap(),
            Cell::I(v) => write!(out, "{v}").unwrap(),
            Cell::F(v) => write!(out, "{v}").unwrap(),
        }
    }

    fn write_json(&self, out: &mut String) {
        match *self {
            Cell::U(v) => write!(out, "{v}").unwrap(),
            Cell::I(v) => write!(out, "{v}").unwrap(),
            Cell::F(v) => {
                let n = serde_json::Number::from_f64(v).expect("finite resource value");
                write!(out, "{n}").unwrap()
            }
        }
    }
}

/// Decoded view of one input line, cells in [`TraceRecord::COLUMNS`] order.
pub struct Row<'a> {
    cells: Vec<Option<Cow<'a, str>>>,
}

impl<'a> Row<'a> {
    fn get(&self, idx: usize) -> Option<&str> {
        self.cells.get(idx).and_then(|c| c.as_deref())
    }
}

/// A record type stored in one of the four trace tables.
pub trait TraceRecord: Sized + Clone + Send + Sync {
    const KIND: TableKind;
    const COLUMNS: &'static [&'static str];

    fn decode(row: &Row<'_>) -> Result<Self, String>;
    fn encode(&self) -> Vec<Option<Cell>>;
    fn for_each_timestamp(&self, f: impl FnMut(Micros));
}

fn field<'r>(row: &'r Row<'_>, columns: &[&'static str], idx: usize) -> Result<&'r str, String> {
    row.get(idx)
        .ok_or_else(|| format!("missing field `{}`", columns[idx]))
}

fn parse_unsigned(s: &str, name: &str, what: &str) -> Result<u64, String> {
    let s = s.trim();
    match s.parse::<i128>() {
        Ok(v) if v < 0 => Err(format!("negative {what}: {name}={s}")),
        Ok(v) => u64::try_from(v).map_err(|_| format!("{what} out of range: {name}={s}")),
        Err(_) => Err(format!("invalid integer: {name}={s}")),
    }
}

fn parse_time(s: &str, name: &str) -> Result<Micros, String> {
    parse_unsigned(s, name, "timestamp")
}

fn parse_id(s: &str, name: &str) -> Result<u64, String> {
    parse_unsigned(s, name, "identifier")
}

fn parse_code<E>(s: &str, name: &str, from_code: fn(u64) -> Option<E>) -> Result<E, String> {
    let code = parse_unsigned(s, name, "enum code")?;
    from_code(code).ok_or_else(|| format!("enum out of range: {name}={code}"))
}

fn parse_i32(s: &str, name: &str) -> Result<i32, String> {
    s.trim()
        .parse::<i32>()
        .map_err(|_| format!("invalid integer: {name}={s}"))
}

fn parse_positive_u32(s: &str, name: &str) -> Result<u32, String> {
    let v = parse_unsigned(s, name, "value")?;
    match u32::try_from(v) {
        Ok(0) => Err(format!("must be positive: {name}=0")),
        Ok(v) => Ok(v),
        Err(_) => Err(format!("value out of range: {name}={v}")),
    }
}

fn parse_resource(s: &str, name: &str) -> Result<f64, String> {
    match s.trim().parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
        Ok(_) => Err(format!("invalid resource value: {name}={s}")),
        Err(_) => Err(format!("invalid number: {name}={s}")),
    }
}

fn opt<T>(
    row: &Row<'_>,
    idx: usize,
    columns: &[&'static str],
    parse: impl Fn(&str, &str) -> Result<T, String>,
) -> Result<Option<T>, String> {
    row.get(idx).map(|s| parse(s, columns[idx])).transpose()
}

fn u(v: u64) -> Option<Cell> {
    Some(Cell::U(v))
}

fn f(v: f64) -> Option<Cell> {
    Some(Cell::F(v))
}

impl TraceRecord for CollectionEvent {
    const KIND: TableKind = TableKind::CollectionEvents;
    const COLUMNS: &'static [&'static str] = &[
        "time",
        "collection_id",
        "event_type",
        "collection_type",
        "priority",
        "alloc_collection_id",
        "parent_collection_id",
        "max_per_machine",
        "max_per_switch",
        "vertical_scaling",
    ];

    fn decode(row: &Row<'_>) -> Result<Self, String> {
        let c = Self::COLUMNS;
        Ok(CollectionEvent {
            time: parse_time(field(row, c, 0)?, c[0])?,
            collection_id: parse_id(field(row, c, 1)?, c[1])?,
            event_type: parse_code(field(row, c, 2)?, c[2], EventType::from_code)?,
            collection_type: parse_code(field(row, c, 3)?, c[3], CollectionType::from_code)?,
            priority: parse_i32(field(row, c, 4)?, c[4])?,
            alloc_collection_id: opt(row, 5, c, parse_id)?,
            parent_collection_id: opt(row, 6, c, parse_id)?,
            max_per_machine: opt(row, 7, c, parse_positive_u32)?,
            max_per_switch: opt(row, 8, c, parse_positive_u32)?,
            vertical_scaling: parse_code(field(row, c, 9)?, c[9], VerticalScaling::from_code)?,
        })
    }

    fn encode(&self) -> Vec<Option<Cell>> {
        vec![
            u(self.time),
            u(self.collection_id),
            u(self.event_type.code() as u64),
            u(self.collection_type.code() as u64),
            Some(Cell::I(self.priority as i64)),
            self.alloc_collection_id.map(Cell::U),
            self.parent_collection_id.map(Cell::U),
            self.max_per_machine.map(|v| Cell::U(v as u64)),
            self.max_per_switch.map(|v| Cell::U(v as u64)),
            u(self.vertical_scaling.code() as u64),
        ]
    }

    fn for_each_timestamp(&self, mut f: impl FnMut(Micros)) {
        f(self.time)
    }
}

impl TraceRecord for InstanceEvent {
    const KIND: TableKind = TableKind::InstanceEvents;
    const COLUMNS: &'static [&'static str] = &[
        "time",
        "collection_id",
        "instance_index",
        "event_type",
        "instance_type",
        "machine_id",
        "priority",
        "alloc_collection_id",
        "resource_request_cpus",
        "resource_request_memory",
    ];

    fn decode(row: &Row<'_>) -> Result<Self, String> {
        let c = Self::COLUMNS;
        let index = parse_unsigned(field(row, c, 2)?, c[2], "instance index")?;
        Ok(InstanceEvent {
            time: parse_time(field(row, c, 0)?, c[0])?,
            collection_id: parse_id(field(row, c, 1)?, c[1])?,
            instance_index: u32::try_from(index)
                .map_err(|_| format!("instance index out of range: {index}"))?,
            event_type: parse_code(field(row, c, 3)?, c[3], EventType::from_code)?,
            instance_type: parse_code(field(row, c, 4)?, c[4], InstanceType::from_code)?,
            machine_id: opt(row, 5, c, parse_id)?,
            priority: parse_i32(field(row, c, 6)?, c[6])?,
            alloc_collection_id: opt(row, 7, c, parse_id)?,
            resource_request: Resources::new(
                parse_resource(field(row, c, 8)?, c[8])?,
                parse_resource(field(row, c, 9)?, c[9])?,
            ),
        })
    }

    fn encode(&self) -> Vec<Option<Cell>> {
        vec![
            u(self.time),
            u(self.collection_id),
            u(self.instance_index as u64),
            u(self.event_type.code() as u64),
            u(self.instance_type.code() as u64),
            self.machine_id.map(Cell::U),
            Some(Cell::I(self.priority as i64)),
            self.alloc_collection_id.map(Cell::U),
            f(self.resource_request.cpus),
            f(self.resource_request.memory),
        ]
    }

    fn for_each_timestamp(&self, mut f: impl FnMut(Micros)) {
        f(self.time)
    }
}

impl TraceRecord for UsageRecord {
    const KIND: TableKind = TableKind::InstanceUsage;
    const COLUMNS: &'static [&'static str] = &[
        "start_time",
        "end_time",
        "collection_id",
        "instance_index",
        "machine_id",
        "average_usage_cpus",
        "average_usage_memory",
    ];

    fn decode(row: &Row<'_>) -> Result<Self, String> {
        let c = Self::COLUMNS;
        let start_time = parse_time(field(row, c, 0)?, c[0])?;
        let end_time = parse_time(field(row, c, 1)?, c[1])?;
        if start_time >= end_time {
            return Err(format!("start_time {start_time} not before end_time {end_time}"));
        }
        if !is_sentinel(start_time) && !is_sentinel(end_time) && end_time - start_time > MAX_USAGE_SPAN
        {
            return Err(format!(
                "usage record spans {} us, longer than one 300 s window",
                end_time - start_time
            ));
        }
        let index = parse_unsigned(field(row, c, 3)?, c[3], "instance index")?;
        Ok(UsageRecord {
            start_time,
            end_time,
            collection_id: parse_id(field(row, c, 2)?, c[2])?,
            instance_index: u32::try_from(index)
                .map_err(|_| format!("instance index out of range: {index}"))?,
            machine_id: parse_id(field(row, c, 4)?, c[4])?,
            average_usage: Resources::new(
                parse_resource(field(row, c, 5)?, c[5])?,
                parse_resource(field(row, c, 6)?, c[6])?,
            ),
        })
    }

    fn encode(&self) -> Vec<Option<Cell>> {
        vec![
            u(self.start_time),
            u(self.end_time),
            u(self.collection_id),
            u(self.instance_index as u64),
            u(self.machine_id),
            f(self.average_usage.cpus),
            f(self.average_usage.memory),
        ]
    }

    fn for_each_timestamp(&self, mut f: impl FnMut(Micros)) {
        f(self.start_time);
        f(self.end_time);
    }
}

impl TraceRecord for MachineEvent {
    const KIND: TableKind = TableKind::MachineEvents;
    const COLUMNS: &'static [&'static str] = &[
        "time",
        "machine_id",
        "event_type",
        "capacity_cpus",
        "capacity_memory",
    ];

    fn decode(row: &Row<'_>) -> Result<Self, String> {
        let c = Self::COLUMNS;
        Ok(MachineEvent {
            time: parse_time(field(row, c, 0)?, c[0])?,
            machine_id: parse_id(field(row, c, 1)?, c[1])?,
            event_type: parse_code(field(row, c, 2)?, c[2], MachineEventType::from_code)?,
            capacity: Resources::new(
                parse_resource(field(row, c, 3)?, c[3])?,
                parse_resource(field(row, c, 4)?, c[4])?,
            ),
        })
    }

    fn encode(&self) -> Vec<Option<Cell>> {
        vec![
            u(self.time),
            u(self.machine_id),
            u(self.event_type.code() as u64),
            f(self.capacity.cpus),
            f(self.capacity.memory),
        ]
    }

    fn for_each_timestamp(&self, mut f: impl FnMut(Micros)) {
        f(self.time)
    }
}

fn table_name<R: TraceRecord>() -> &'static str {
    R::KIND.file_stem()
}

/// Parses one table from `reader`. Malformed lines are rejected with their
/// 1-based line number; in strict mode the first rejection is an error.
pub fn parse_records<R: TraceRecord, Rd: Read>(
    reader: Rd,
    options: &IngestOptions,
) -> Result<ParsedTable<R>, IngestError> {
    let mut table = match options.format {
        Format::Csv => parse_csv::<R, Rd>(reader, options.strictness)?,
        Format::Ndjson => parse_ndjson::<R, Rd>(reader, options.strictness)?,
    };
    table.records.shrink_to_fit();
    Ok(table)
}

fn reject<R: TraceRecord>(
    table: &mut ParsedTable<R>,
    strictness: Strictness,
    line: usize,
    reason: String,
) -> Result<(), IngestError> {
    if strictness == Strictness::Strict {
        return Err(IngestError::Rejected {
            table: table_name::<R>(),
            line,
            reason,
        });
    }
    table.rejections.push(Rejection { line, reason });
    Ok(())
}

fn parse_csv<R: TraceRecord, Rd: Read>(
    reader: Rd,
    strictness: Strictness,
) -> Result<ParsedTable<R>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut mapping = Vec::with_capacity(R::COLUMNS.len());
    for col in R::COLUMNS {
        match headers.iter().position(|h| h.trim() == *col) {
            Some(i) => mapping.push(i),
            None => {
                return Err(IngestError::MissingColumn {
                    table: table_name::<R>(),
                    column: col.to_string(),
                })
            }
        }
    }
    if strictness == Strictness::Strict {
        if let Some(unknown) = headers.iter().find(|h| !R::COLUMNS.contains(&h.trim())) {
            return Err(IngestError::UnknownColumn {
                table: table_name::<R>(),
                column: unknown.to_string(),
            });
        }
    }

    let mut table = ParsedTable {
        records: Vec::new(),
        rejections: Vec::new(),
        lines: 0,
    };
    let mut record = csv::StringRecord::new();
    loop {
        let line_hint = rdr.position().line() as usize;
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                table.lines += 1;
                let line = record
                    .position()
                    .map(|p| p.line() as usize)
                    .unwrap_or(line_hint);
                if record.len() != headers.len() {
                    let reason = format!(
                        "field count {} does not match header ({})",
                        record.len(),
                        headers.len()
                    );
                    reject(&mut table, strictness, line, reason)?;
                    continue;
                }
                let row = Row {
                    cells: mapping
                        .iter()
                        .map(|&i| {
                            record
                                .get(i)
                                .filter(|s| !s.is_empty())
                                .map(|s| Cow::Borrowed(s))
                        })
                        .collect(),
                };
                match R::decode(&row) {
                    Ok(r) => table.records.push(r),
                    Err(reason) => reject(&mut table, strictness, line, reason)?,
                }
            }
            Err(e) => {
                table.lines += 1;
                let line = e
                    .position()
                    .map(|p| p.line() as usize)
                    .unwrap_or(line_hint);
                if let csv::ErrorKind::Io(_) = e.kind() {
                    return Err(e.into());
                }
                reject(&mut table, strictness, line, e.to_string())?;
            }
        }
    }
    Ok(table)
}

fn json_cell(value: &serde_json::Value) -> Result<Option<Cow<'_, str>>, String> {
    match value {
        serde_json::Value::Null => Ok(None),
        serde_json::Value::Number(n) => Ok(Some(Cow::Owned(n.to_string()))),
        serde_json::Value::String(s) if s.is_empty() => Ok(None),
        serde_json::Value::String(s) => Ok(Some(Cow::Borrowed(s.as_str()))),
        other => Err(format!("non-scalar value {other}")),
    }
}

fn parse_ndjson<R: TraceRecord, Rd: Read>(
    reader: Rd,
    strictness: Strictness,
) -> Result<ParsedTable<R>, IngestError> {
    let mut table = ParsedTable {
        records: Vec::new(),
        rejections: Vec::new(),
        lines: 0,
    };
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        table.lines += 1;
        let decoded = (|| {
            if line.trim().is_empty() {
                return Err("empty line".to_string());
            }
            let value: serde_json::Value =
                serde_json::from_str(&line).map_err(|e| format!("invalid json: {e}"))?;
            let obj = value
                .as_object()
                .ok_or_else(|| "line is not a json object".to_string())?;
            if strictness == Strictness::Strict {
                if let Some(k) = obj.keys().find(|k| !R::COLUMNS.contains(&k.as_str())) {
                    return Err(format!("unknown field `{k}`"));
                }
            }
            let mut cells = Vec::with_capacity(R::COLUMNS.len());
            for col in R::COLUMNS {
                let cell = match obj.get(*col) {
                    None => None,
                    Some(v) => json_cell(v).map_err(|e| format!("field `{col}`: {e}"))?,
                };
                cells.push(cell);
            }
            R::decode(&Row { cells })
        })();
        match decoded {
            Ok(r) => table.records.push(r),
            Err(reason) => reject(&mut table, strictness, lineno, reason)?,
        }
    }
    Ok(table)
}

fn csv_line<R: TraceRecord>(record: &R, out: &mut String) {
    for (i, cell) in record.encode().iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        if let Some(c) = cell {
            c.write_csv(out);
        }
    }
    out.push('\n');
}

fn json_line<R: TraceRecord>(record: &R, out: &mut String) {
    out.push('{');
    let mut first = true;
    for (col, cell) in R::COLUMNS.iter().zip(record.encode()) {
        if let Some(c) = cell {
            if !first {
                out.push(',');
            }
            first = false;
            write!(out, "\"{col}\":").unwrap();
            c.write_json(out);
        }
    }
    out.push_str("}\n");
}

pub fn write_csv<R: TraceRecord, W: Write>(records: &[R], writer: W) -> io::Result<()> {
    let mut w = BufWriter::new(writer);
    w.write_all(R::COLUMNS.join(",").as_bytes())?;
    w.write_all(b"\n")?;
    let mut buf = String::with_capacity(128);
    for r in records {
        buf.clear();
        csv_line(r, &mut buf);
        w.write_all(buf.as_bytes())?;
    }
    w.flush()
}

pub fn write_ndjson<R: TraceRecord, W: Write>(records: &[R], writer: W) -> io::Result<()> {
    let mut w = BufWriter::new(writer);
    let mut buf = String::with_capacity(256);
    for r in records {
        buf.clear();
        json_line(r, &mut buf);
        w.write_all(buf.as_bytes())?;
    }
    w.flush()
}

pub fn write_records<R: TraceRecord, W: Write>(
    records: &[R],
    format: Format,
    writer: W,
) -> io::Result<()> {
    match format {
        Format::Csv => write_csv(records, writer),
        Format::Ndjson => write_ndjson(records, writer),
    }
}

/// Writes a rejection log as NDJSON `{"line":..,"reason":..}` entries.
pub fn write_rejection_log<W: Write>(rejections: &[Rejection], writer: W) -> io::Result<()> {
    let mut w = BufWriter::new(writer);
    for r in rejections {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// A parsed table of any of the four kinds.
#[derive(Debug, Clone)]
pub enum TableData {
    CollectionEvents(ParsedTable<CollectionEvent>),
    InstanceEvents(ParsedTable<InstanceEvent>),
    InstanceUsage(ParsedTable<UsageRecord>),
    MachineEvents(ParsedTable<MachineEvent>),
}

impl TableData {
    pub fn rejections(&self) -> &[Rejection] {
        match self {
            TableData::CollectionEvents(t) => &t.rejections,
            TableData::InstanceEvents(t) => &t.rejections,
            TableData::InstanceUsage(t) => &t.rejections,
            TableData::MachineEvents(t) => &t.rejections,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TableData::CollectionEvents(t) => t.records.len(),
            TableData::InstanceEvents(t) => t.records.len(),
            TableData::InstanceUsage(t) => t.records.len(),
            TableData::MachineEvents(t) => t.records.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Parses a table whose kind is only known at run time.
pub fn parse_table<Rd: Read>(
    kind: TableKind,
    reader: Rd,
    options: &IngestOptions,
) -> Result<TableData, IngestError> {
    Ok(match kind {
        TableKind::CollectionEvents => TableData::CollectionEvents(parse_records(reader, options)?),
        TableKind::InstanceEvents => TableData::InstanceEvents(parse_records(reader, options)?),
        TableKind::InstanceUsage => TableData::InstanceUsage(parse_records(reader, options)?),
        TableKind::MachineEvents => TableData::MachineEvents(parse_records(reader, options)?),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionKey {
    Collection,
    Machine,
}

impl PartitionKey {
    pub fn name(self) -> &'static str {
        match self {
            PartitionKey::Collection => "collection",
            PartitionKey::Machine => "machine",
        }
    }
}

/// Records that can be routed to a partition. Records lacking the key field
/// route as key 0.
pub trait Keyed {
    fn key(&self, key: PartitionKey) -> Option<u64>;
}

impl Keyed for CollectionEvent {
    fn key(&self, key: PartitionKey) -> Option<u64> {
        match key {
            PartitionKey::Collection => Some(self.collection_id),
            PartitionKey::Machine => None,
        }
    }
}

impl Keyed for InstanceEvent {
    fn key(&self, key: PartitionKey) -> Option<u64> {
        match key {
            PartitionKey::Collection => Some(self.collection_id),
            PartitionKey::Machine => self.machine_id,
        }
    }
}

impl Keyed for UsageRecord {
    fn key(&self, key: PartitionKey) -> Option<u64> {
        match key {
            PartitionKey::Collection => Some(self.collection_id),
            PartitionKey::Machine => Some(self.machine_id),
        }
    }
}

impl Keyed for MachineEvent {
    fn key(&self, key: PartitionKey) -> Option<u64> {
        match key {
            PartitionKey::Collection => None,
            PartitionKey::Machine => Some(self.machine_id),
        }
    }
}

/// Partition a key value lands in; depends only on `(key, n)`.
#[inline]
pub fn partition_of(key: u64, n: usize) -> usize {
    (mix64(key) % n as u64) as usize
}

/// Splits `records` into `n` groups by a stable hash of the key field.
/// Records sharing a key share a group; input order is kept within groups.
pub fn partition_by_key<'a, T: Keyed>(records: &'a [T], key: PartitionKey, n: usize) -> Vec<Vec<&'a T>> {
    assert!(n >= 1, "partition count must be positive");
    let mut groups: Vec<Vec<&T>> = (0..n).map(|_| Vec::new()).collect();
    if n == 1 {
        groups[0].extend(records.iter());
        return groups;
    }
    for r in records {
        groups[partition_of(r.key(key).unwrap_or(0), n)].push(r);
    }
    groups
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableCounts {
    pub collection_events: u64,
    pub instance_events: u64,
    pub instance_usage: u64,
    pub machine_events: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub sources: Vec<String>,
    pub record_counts: TableCounts,
    pub rejected_lines: u64,
}

/// The four parsed tables plus the trace time bounds.
#[derive(Debug)]
pub struct TraceBundle {
    pub collection_events: Vec<CollectionEvent>,
    pub instance_events: Vec<InstanceEvent>,
    pub usage: Vec<UsageRecord>,
    pub machine_events: Vec<MachineEvent>,
    pub trace_start: Micros,
    pub trace_end: Micros,
    pub provenance: Provenance,
    digest: OnceLock<String>,
}

impl Clone for TraceBundle {
    fn clone(&self) -> Self {
        TraceBundle {
            collection_events: self.collection_events.clone(),
            instance_events: self.instance_events.clone(),
            usage: self.usage.clone(),
            machine_events: self.machine_events.clone(),
            trace_start: self.trace_start,
            trace_end: self.trace_end,
            provenance: self.provenance.clone(),
            digest: self.digest.clone(),
        }
    }
}

impl TraceBundle {
    pub fn event_count(&self) -> usize {
        self.collection_events.len()
            + self.instance_events.len()
            + self.usage.len()
            + self.machine_events.len()
    }

    /// SHA-256 over the canonical CSV serialization of the four tables.
    pub fn digest(&self) -> &str {
        self.digest.get_or_init(|| {
            let mut h = HashWriter::new();
            write_csv(&self.collection_events, &mut h).expect("hashing cannot fail");
            write_csv(&self.instance_events, &mut h).expect("hashing cannot fail");
            write_csv(&self.usage, &mut h).expect("hashing cannot fail");
            write_csv(&self.machine_events, &mut h).expect("hashing cannot fail");
            h.finish_hex()
        })
    }

    /// Writes the four tables as `<stem>.<ext>` into `dir`.
    pub fn write_tables(&self, dir: &Path, format: Format) -> io::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut paths = Vec::with_capacity(4);
        for kind in TableKind::ALL {
            let path = dir.join(kind.file_name(format));
            let file = File::create(&path)?;
            match kind {
                TableKind::CollectionEvents => write_records(&self.collection_events, format, file)?,
                TableKind::InstanceEvents => write_records(&self.instance_events, format, file)?,
                TableKind::InstanceUsage => write_records(&self.usage, format, file)?,
                TableKind::MachineEvents => write_records(&self.machine_events, format, file)?,
            }
            paths.push(path);
        }
        Ok(paths)
    }
}

fn bounds<R: TraceRecord>(records: &[R], lo: &mut Option<Micros>, hi: &mut Option<Micros>) {
    for r in records {
        r.for_each_timestamp(|t| {
            if !is_sentinel(t) {
                *lo = Some(lo.map_or(t, |v| v.min(t)));
                *hi = Some(hi.map_or(t, |v| v.max(t)));
            }
        });
    }
}

/// Combines four parsed tables; the trace bounds are the min and max
/// non-sentinel timestamps across all of them.
pub fn assemble_bundle(
    collection_events: Vec<CollectionEvent>,
    instance_events: Vec<InstanceEvent>,
    usage: Vec<UsageRecord>,
    machine_events: Vec<MachineEvent>,
    mut provenance: Provenance,
) -> Result<TraceBundle, IngestError> {
    if collection_events.is_empty()
        && instance_events.is_empty()
        && usage.is_empty()
        && machine_events.is_empty()
    {
        return Err(IngestError::EmptyBundle);
    }
    let (mut lo, mut hi) = (None, None);
    bounds(&collection_events, &mut lo, &mut hi);
    bounds(&instance_events, &mut lo, &mut hi);
    bounds(&usage, &mut lo, &mut hi);
    bounds(&machine_events, &mut lo, &mut hi);
    let (start, end) = match (lo, hi) {
        (Some(s), Some(e)) => (s, e),
        _ => return Err(IngestError::EmptyBundle),
    };
    if start >= end {
        return Err(IngestError::DegenerateBounds { start, end });
    }
    provenance.record_counts = TableCounts {
        collection_events: collection_events.len() as u64,
        instance_events: instance_events.len() as u64,
        instance_usage: usage.len() as u64,
        machine_events: machine_events.len() as u64,
    };
    Ok(TraceBundle {
        collection_events,
        instance_events,
        usage,
        machine_events,
        trace_start: start,
        trace_end: end,
        provenance,
        digest: OnceLock::new(),
    })
}

/// Rejections gathered while loading a bundle, per table.
#[derive(Debug, Clone, Default)]
pub struct RejectionLog {
    pub entries: Vec<(TableKind, Vec<Rejection>)>,
}

impl RejectionLog {
    pub fn total(&self) -> usize {
        self.entries.iter().map(|(_, r)| r.len()).sum()
    }
}

fn open_table<R: TraceRecord>(
    dir: &Path,
    options: &IngestOptions,
) -> Result<(ParsedTable<R>, String), IngestError> {
    let path = dir.join(R::KIND.file_name(options.format));
    let file = File::open(&path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => IngestError::MissingFile(path.clone()),
        _ => IngestError::Io(e),
    })?;
    let table = parse_records::<R, _>(BufReader::with_capacity(1 << 16, file), options)?;
    Ok((table, path.display().to_string()))
}

/// Loads the four tables from `dir`, parsing them concurrently.
pub fn load_bundle(
    dir: &Path,
    options: &IngestOptions,
) -> Result<(TraceBundle, RejectionLog), IngestError> {
    // Fail on a missing file before doing any parsing work.
    for kind in TableKind::ALL {
        let path = dir.join(kind.file_name(options.format));
        if !path.is_file() {
            return Err(IngestError::MissingFile(path));
        }
    }
    let ((c, i), (u, m)) = rayon::join(
        || {
            rayon::join(
                || open_table::<CollectionEvent>(dir, options),
                || open_table::<InstanceEvent>(dir, options),
            )
        },
        || {
            rayon::join(
                || open_table::<UsageRecord>(dir, options),
                || open_table::<MachineEvent>(dir, options),
            )
        },
    );
    let (c, cp) = c?;
    let (i, ip) = i?;
    let (u, up) = u?;
    let (m, mp) = m?;
    let log = RejectionLog {
        entries: vec![
            (TableKind::CollectionEvents, c.rejections),
            (TableKind::InstanceEvents, i.rejections),
            (TableKind::InstanceUsage, u.rejections),
            (TableKind::MachineEvents, m.rejections),
        ],
    };
    let provenance = Provenance {
        sources: vec![cp, ip, up, mp],
        record_counts: TableCounts::default(),
        rejected_lines: log.total() as u64,
    };
    let bundle = assemble_bundle(c.records, i.records, u.records, m.records, provenance)?;
    Ok((bundle, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PriorityTier;

    fn strict(format: Format) -> IngestOptions {
        IngestOptions::new(format, Strictness::Strict)
    }

    fn permissive(format: Format) -> IngestOptions {
        IngestOptions::new(format, Strictness::Permissive)
    }

    #[test]
    fn ndjson_collection_event() {
        let line = r#"{"time":1000000,"collection_id":42,"event_type":0,"collection_type":0,"priority":120,"vertical_scaling":2}"#;
        let t = parse_records::<CollectionEvent, _>(line.as_bytes(), &strict(Format::Ndjson)).unwrap();
        assert_eq!(t.records.len(), 1);
        let e = t.records[0];
        assert_eq!(e.time, 1_000_000);
        assert_eq!(e.collection_id, 42);
        assert_eq!(e.event_type, EventType::Submit);
        assert_eq!(e.priority, 120);
        assert_eq!(
            crate::model::TierBoundaries::default().classify(e.priority),
            PriorityTier::Production
        );
        assert_eq!(e.vertical_scaling, VerticalScaling::UserConstrained);
        assert_eq!(e.alloc_collection_id, None);
        assert_eq!(e.max_per_machine, None);
    }

    const CE_HEADER: &str = "time,collection_id,event_type,collection_type,priority,alloc_collection_id,parent_collection_id,max_per_machine,max_per_switch,vertical_scaling\n";

    #[test]
    fn csv_enum_out_of_range_is_rejected() {
        let data = format!("{CE_HEADER}5,1,11,0,0,,,,,0\n7,2,6,0,0,,,,,0\n");
        let t = parse_records::<CollectionEvent, _>(data.as_bytes(), &permissive(Format::Csv)).unwrap();
        assert_eq!(t.records.len(), 1);
        assert_eq!(t.rejections.len(), 1);
        assert_eq!(t.rejections[0].line, 2);
        assert!(t.rejections[0].reason.contains("enum out of range"), "{:?}", t.rejections);
        assert_eq!(t.lines, 2);

        let err = parse_records::<CollectionEvent, _>(data.as_bytes(), &strict(Format::Csv)).unwrap_err();
        assert!(matches!(err, IngestError::Rejected { line: 2, .. }), "{err}");
    }

    #[test]
    fn csv_empty_with_header() {
        let t = parse_records::<CollectionEvent, _>(CE_HEADER.as_bytes(), &strict(Format::Csv)).unwrap();
        assert!(t.records.is_empty());
        assert!(t.rejections.is_empty());
        assert_eq!(t.lines, 0);
    }

    #[test]
    fn negative_timestamp_and_zero_max_per_machine() {
        let data = format!("{CE_HEADER}-5,1,0,0,0,,,,,0\n5,1,0,0,0,,,0,,0\n5,1,0,0,0,,,3,,0\n");
        let t = parse_records::<CollectionEvent, _>(data.as_bytes(), &permissive(Format::Csv)).unwrap();
        assert_eq!(t.records.len(), 1);
        assert!(t.rejections[0].reason.contains("negative timestamp"));
        assert!(t.rejections[1].reason.contains("must be positive"));
        assert_eq!(t.records[0].max_per_machine, Some(3));
    }

    #[test]
    fn unknown_column() {
        let data = format!("{}extra\n", CE_HEADER.trim_end().to_string() + ",");
        let err = parse_records::<CollectionEvent, _>(data.as_bytes(), &strict(Format::Csv)).unwrap_err();
        assert!(matches!(err, IngestError::UnknownColumn { .. }));
        let ok = parse_records::<CollectionEvent, _>(data.as_bytes(), &permissive(Format::Csv)).unwrap();
        assert_eq!(ok.lines, 0);

        let line = r#"{"time":1,"collection_id":1,"event_type":0,"collection_type":0,"priority":1,"vertical_scaling":0,"bogus":3}"#;
        assert!(parse_records::<CollectionEvent, _>(line.as_bytes(), &strict(Format::Ndjson)).is_err());
        let t = parse_records::<CollectionEvent, _>(line.as_bytes(), &permissive(Format::Ndjson)).unwrap();
        assert_eq!(t.records.len(), 1);
    }

    #[test]
    fn missing_header_column() {
        let data = "time,collection_id\n1,2\n";
        let err = parse_records::<CollectionEvent, _>(data.as_bytes(), &permissive(Format::Csv)).unwrap_err();
        assert!(matches!(err, IngestError::MissingColumn { .. }));
    }

    #[test]
    fn ndjson_bad_lines_are_accounted() {
        let data = "not json\n\n{\"time\":1}\n";
        let t = parse_records::<MachineEvent, _>(data.as_bytes(), &permissive(Format::Ndjson)).unwrap();
        assert_eq!(t.lines, 3);
        assert_eq!(t.rejections.len(), 3);
        assert_eq!(t.rejections.iter().map(|r| r.line).collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn usage_span_validation() {
        let header = "start_time,end_time,collection_id,instance_index,machine_id,average_usage_cpus,average_usage_memory\n";
        let data = format!("{header}10,5,1,0,1,0.1,0.1\n10,400000011,1,0,1,0.1,0.1\n10,300000010,1,0,1,0.1,0.1\n");
        let t = parse_records::<UsageRecord, _>(data.as_bytes(), &permissive(Format::Csv)).unwrap();
        assert_eq!(t.records.len(), 1);
        assert_eq!(t.rejections.len(), 2);
    }

    #[test]
    fn absent_optional_round_trips() {
        let ev = InstanceEvent {
            time: 9,
            collection_id: 3,
            instance_index: 0,
            event_type: EventType::Schedule,
            instance_type: InstanceType::Task,
            machine_id: None,
            priority: -1,
            alloc_collection_id: Some(0),
            resource_request: Resources::new(0.0, 1e-7),
        };
        for format in [Format::Csv, Format::Ndjson] {
            let mut buf = Vec::new();
            write_records(&[ev], format, &mut buf).unwrap();
            let t = parse_records::<InstanceEvent, _>(&buf[..], &strict(format)).unwrap();
            assert_eq!(t.records, vec![ev]);
        }
        let mut buf = Vec::new();
        write_ndjson(&[ev], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(!text.contains("machine_id"));
        assert!(text.contains("\"alloc_collection_id\":0"));
    }

    #[test]
    fn partitioning() {
        let events: Vec<MachineEvent> = (0..6)
            .map(|i| MachineEvent {
                time: i + 1,
                machine_id: i % 2,
                event_type: MachineEventType::Add,
                capacity: Resources::ZERO,
            })
            .collect();
        let groups = partition_by_key(&events, PartitionKey::Machine, 4);
        assert_eq!(groups.len(), 4);
        for id in 0..2 {
            let holders: Vec<_> = groups
                .iter()
                .enumerate()
                .filter(|(_, g)| g.iter().any(|e| e.machine_id == id))
                .collect();
            assert_eq!(holders.len(), 1);
            let (_, g) = holders[0];
            assert_eq!(g.iter().filter(|e| e.machine_id == id).count(), 3);
            // Input order is preserved.
            assert!(g.windows(2).all(|w| w[0].time < w[1].time));
        }
        let single = partition_by_key(&events, PartitionKey::Machine, 1);
        assert_eq!(single[0].iter().map(|e| **e).collect::<Vec<_>>(), events);
        assert_eq!(groups, partition_by_key(&events, PartitionKey::Machine, 4));
    }

    fn machine(time: Micros) -> MachineEvent {
        MachineEvent {
            time,
            machine_id: 1,
            event_type: MachineEventType::Add,
            capacity: Resources::new(1.0, 1.0),
        }
    }

    #[test]
    fn bundle_bounds() {
        let s = MICROS_PER_SECOND;
        let b = assemble_bundle(
            vec![],
            vec![],
            vec![],
            vec![machine(10 * s), machine(5 * s), machine(2 * 86_400 * s), machine(0)],
            Provenance::default(),
        )
        .unwrap();
        assert_eq!(b.trace_start, 5 * s);
        assert_eq!(b.trace_end, 2 * 86_400 * s);
        assert_eq!(b.provenance.record_counts.machine_events, 4);

        let err = assemble_bundle(vec![], vec![], vec![], vec![machine(0), machine(7 * s)], Provenance::default())
            .unwrap_err();
        assert!(matches!(err, IngestError::DegenerateBounds { .. }));
        let err = assemble_bundle(vec![], vec![], vec![], vec![], Provenance::default()).unwrap_err();
        assert!(matches!(err, IngestError::EmptyBundle));
    }

    #[test]
    fn rejection_log_format() {
        let mut buf = Vec::new();
        write_rejection_log(
            &[Rejection {
                line: 3,
                reason: "enum out of range".into(),
            }],
            &mut buf,
        )
        .unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "{\"line\":3,\"reason\":\"enum out of range\"}\n"
        );
    }
}
