use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use super::WorkloadError;
use crate::record::{parse_record, Record};

/// Lazy reader over a record file. Blank lines and `#` comments are skipped.
#[derive(Debug)]
pub struct Replay<R> {
    reader: R,
    path: String,
    line: usize,
    speed: f64,
    strict: bool,
    previous: Option<u64>,
    buf: String,
}

/// Opens `path` for replay. `speed` divides every timestamp (2.0 plays twice
/// as fast); 0 leaves timestamps untouched.
pub fn replay(path: impl AsRef<Path>, speed: f64) -> Result<Replay<BufReader<File>>, WorkloadError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let file = File::open(path).map_err(|source| WorkloadError::Io {
        path: display.clone(),
        source,
    })?;
    Replay::from_reader(BufReader::new(file), display, speed)
}

impl<R: BufRead> Replay<R> {
    pub fn from_reader(reader: R, name: impl Into<String>, speed: f64) -> Result<Self, WorkloadError> {
        if !(speed >= 0.0 && speed.is_finite()) {
            return Err(WorkloadError::Invalid(format!("replay speed must be finite and non-negative, got {speed}")));
        }
        Ok(Self {
            reader,
            path: name.into(),
            line: 0,
            speed,
            strict: false,
            previous: None,
            buf: String::new(),
        })
    }

    /// Fail on a timestamp smaller than its predecessor instead of passing
    /// it on for the engine to count as late.
    pub fn strict(mut self) -> Self {
        self.strict = true;
        self
    }

    fn rescale(&self, ts: u64) -> u64 {
        if self.speed == 0.0 || self.speed == 1.0 {
            ts
        } else {
            (ts as f64 / self.speed).round() as u64
        }
    }
}

impl<R: BufRead> Iterator for Replay<R> {
    type Item = Result<Record, WorkloadError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            self.line += 1;
            match self.reader.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(source) => {
                    return Some(Err(WorkloadError::Io {
                        path: self.path.clone(),
                        source,
                    }))
                }
            }
            let text = self.buf.trim_end_matches(['\n', '\r']);
            if text.trim().is_empty() || text.starts_with('#') {
                continue;
            }
            let mut record = match parse_record(text) {
                Ok(r) => r,
                Err(source) => {
                    return Some(Err(WorkloadError::Parse {
                        path: self.path.clone(),
                        line: self.line,
                        source,
                    }))
                }
            };
            record.timestamp = self.rescale(record.timestamp);
            if let Some(previous) = self.previous {
                if self.strict && record.timestamp < previous {
                    return Some(Err(WorkloadError::OutOfOrder {
                        path: self.path.clone(),
                        line: self.line,
                        timestamp: record.timestamp,
                        previous,
                    }));
                }
            }
            self.previous = Some(record.timestamp);
            return Some(Ok(record));
        }
    }
}

/// Reads a whole record file into memory.
pub fn read_records(path: impl AsRef<Path>, speed: f64) -> Result<Vec<Record>, WorkloadError> {
    replay(path, speed)?.collect()
}

/// Writes records in the ingestion format, one per line.
pub fn write_records<'a, W, I>(mut out: W, records: I) -> io::Result<u64>
where
    W: Write,
    I: IntoIterator<Item = &'a Record>,
{
    let mut n = 0;
    for r in records {
        writeln!(out, "{r}")?;
        n += 1;
    }
    out.flush()?;
    Ok(n)
}
