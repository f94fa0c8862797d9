//! Line-delimited JSON event log for a run directory.
//!
//! Events carry no timestamps so that replaying a run reproduces the log.

use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde_json::{json, Value};

pub struct RunLog {
    out: BufWriter<File>,
}

impl RunLog {
    /// Opens `path` for appending.
    pub fn open(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { out: BufWriter::new(file) })
    }

    /// Writes `{"event": name, ...fields}`.
    pub fn event(&mut self, name: &str, fields: Value) -> io::Result<()> {
        let mut obj = json!({ "event": name });
        if let (Value::Object(dst), Value::Object(src)) = (&mut obj, fields) {
            dst.extend(src);
        }
        serde_json::to_writer(&mut self.out, &obj)?;
        self.out.write_all(b"\n")
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }
}

impl Drop for RunLog {
    fn drop(&mut self) {
        let _ = self.out.flush();
    }
}
