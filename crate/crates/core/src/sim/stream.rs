//! Line-delimited JSON command stream.
//!
//! One object per control step, e.g.
//! `{"t":0.01,"vehicle_vel":[...6],"manip_target":[...4],"status":"running"}`,
//! followed by a terminal record whose status is the run outcome.

use std::io::{self, BufRead, Write};

use crate::control::CommandRecord;

/// Writes command records, flushing each line. The first write error (for
/// example a closed pipe) silences the stream for the rest of the run.
pub struct CommandStream {
    out: Box<dyn Write + Send>,
    lines: usize,
    failure: Option<io::Error>,
}

impl CommandStream {
    pub fn new(out: Box<dyn Write + Send>) -> Self {
        Self {
            out,
            lines: 0,
            failure: None,
        }
    }

    pub fn stdout() -> Self {
        Self::new(Box::new(io::stdout()))
    }

    pub fn emit(&mut self, record: &CommandRecord) {
        if self.failure.is_some() {
            return;
        }
        let mut line = serde_json::to_string(record).expect("command records serialize");
        line.push('\n');
        let result = self
            .out
            .write_all(line.as_bytes())
            .and_then(|_| self.out.flush());
        match result {
            Ok(()) => self.lines += 1,
            Err(e) => self.failure = Some(e),
        }
    }

    pub fn lines_written(&self) -> usize {
        self.lines
    }

    pub fn failure(&self) -> Option<&io::Error> {
        self.failure.as_ref()
    }
}

/// Parses a stream written by [`CommandStream`]. Blank lines are skipped.
pub fn read_stream(reader: impl BufRead) -> io::Result<Vec<CommandRecord>> {
    let mut records = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| {
            io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", n + 1))
        })?;
        records.push(record);
    }
    Ok(records)
}
