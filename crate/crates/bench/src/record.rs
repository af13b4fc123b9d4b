use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::BenchError;

/// Column order of the run-record CSV. Changing it is a schema break.
pub const CSV_COLUMNS: [&str; 12] =
    ["scheduler", "chunk", "n1", "n2", "n3", "threads", "shots", "rep", "seconds", "tuned_chunk", "tuning_seconds", "host"];

/// One timed run of one experiment cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scheduler: String,
    /// Chunk used by the propagation loops.
    pub chunk: usize,
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub threads: usize,
    pub shots: usize,
    pub rep: usize,
    pub seconds: f64,
    pub tuned_chunk: Option<usize>,
    pub tuning_seconds: f64,
    pub host: String,
}

impl RunRecord {
    pub fn cell(&self) -> CellKey {
        CellKey {
            scheduler: self.scheduler.clone(),
            dims: [self.n1, self.n2, self.n3],
            threads: self.threads,
            shots: self.shots,
        }
    }
}

/// Identifies an experiment cell across runs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub scheduler: String,
    pub dims: [usize; 3],
    pub threads: usize,
    pub shots: usize,
}

impl std::fmt::Display for CellKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {}x{}x{} threads={} shots={}",
            self.scheduler, self.dims[0], self.dims[1], self.dims[2], self.threads, self.shots
        )
    }
}

fn check_header(headers: &csv::StringRecord) -> Result<(), BenchError> {
    if headers.iter().ne(CSV_COLUMNS.iter().copied()) {
        return Err(BenchError::Schema(format!(
            "expected columns `{}`, found `{}`",
            CSV_COLUMNS.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>, BenchError> {
    let mut rdr = csv::Reader::from_path(path)?;
    check_header(rdr.headers()?)?;
    rdr.deserialize().map(|r| r.map_err(BenchError::from)).collect()
}

/// Reads `path` if it exists, otherwise returns no records.
pub fn read_records_if_present(path: &Path) -> Result<Vec<RunRecord>, BenchError> {
    if path.exists() && std::fs::metadata(path)?.len() > 0 {
        read_records(path)
    } else {
        Ok(Vec::new())
    }
}

pub fn write_records<W: Write>(w: W, records: &[RunRecord]) -> Result<(), BenchError> {
    let mut wtr = csv::Writer::from_writer(w);
    if records.is_empty() {
        wtr.write_record(CSV_COLUMNS)?;
    }
    for r in records {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Appends records to a CSV file, writing the header when the file is new.
/// The file is flushed and synced before returning.
pub struct RecordSink {
    file: File,
    needs_header: bool,
}

impl RecordSink {
    pub fn open(path: &Path) -> Result<Self, BenchError> {
        let needs_header = !path.exists() || std::fs::metadata(path)?.len() == 0;
        if !needs_header {
            let mut rdr = csv::Reader::from_path(path)?;
            check_header(rdr.headers()?)?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| BenchError::Output(format!("{}: {e}", path.display())))?;
        Ok(Self { file, needs_header })
    }

    pub fn append(&mut self, record: &RunRecord) -> Result<(), BenchError> {
        let mut wtr = csv::WriterBuilder::new().has_headers(self.needs_header).from_writer(Vec::new());
        wtr.serialize(record)?;
        let bytes = wtr.into_inner().map_err(|e| BenchError::Output(e.to_string()))?;
        self.file.write_all(&bytes)?;
        self.file.sync_data()?;
        self.needs_header = false;
        Ok(())
    }
}

/// `<hostname>-<cores>c-<MHz>MHz`, the MHz part taken from the first
/// `cpu MHz` line of /proc/cpuinfo when available.
pub fn host_tag() -> String {
    let name = std::fs::read_to_string("/etc/hostname")
        .ok()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .or_else(|| std::env::var("HOSTNAME").ok())
        .unwrap_or_else(|| "unknown".into());
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let mhz = std::fs::read_to_string("/proc/cpuinfo").ok().and_then(|s| {
        s.lines()
            .find(|l| l.starts_with("cpu MHz"))
            .and_then(|l| l.split(':').nth(1))
            .and_then(|v| v.trim().parse::<f64>().ok())
    });
    match mhz {
        Some(m) => format!("{name}-{cores}c-{}MHz", m.round()),
        None => format!("{name}-{cores}c"),
    }
}
