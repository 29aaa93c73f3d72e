use std::collections::VecDeque;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "episode,task,strategy,seed,reward,running_avg,wall_time_ms";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SEGMENTS_FILE: &str = "segments.csv";
const FLUSH_EVERY: usize = 1000;

/// One row per target-task episode. `episode` counts target-task episodes only (1-based).
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub episode: u64,
    pub task: &'static str,
    pub strategy: String,
    pub seed: u64,
    pub reward: f64,
    pub running_avg: f64,
    pub wall_time_ms: u64,
}

impl MetricsRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.episode, self.task, self.strategy, self.seed, self.reward, self.running_avg, self.wall_time_ms
        )
    }
}

/// Start and end state of one of Alice's self-play episodes.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentRow {
    pub episode: u64,
    pub seed: u64,
    pub strategy: String,
    pub s0: Vec<f64>,
    pub s_a: Vec<f64>,
}

pub fn segments_header(obs_dim: usize) -> String {
    let mut h = String::from("episode,seed,strategy");
    for i in 0..obs_dim {
        h.push_str(&format!(",s0_{i}"));
    }
    for i in 0..obs_dim {
        h.push_str(&format!(",sa_{i}"));
    }
    h
}

impl SegmentRow {
    pub fn to_csv_line(&self) -> String {
        let mut line = format!("{},{},{}", self.episode, self.seed, self.strategy);
        for v in self.s0.iter().chain(&self.s_a) {
            line.push(',');
            line.push_str(&v.to_string());
        }
        line
    }
}

/// Windowed mean of the most recent `window` values, maintained incrementally.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningAverage {
    window: usize,
    values: VecDeque<f64>,
    sum: f64,
}

impl RunningAverage {
    pub fn new(window: usize) -> Self {
        RunningAverage {
            window: window.max(1),
            values: VecDeque::new(),
            sum: 0.0,
        }
    }

    pub fn push(&mut self, v: f64) -> f64 {
        if self.values.len() == self.window {
            self.sum -= self.values.pop_front().unwrap_or(0.0);
        }
        self.values.push_back(v);
        self.sum += v;
        self.mean()
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.sum / self.values.len() as f64
        }
    }

    /// `(window contents, running sum)` for checkpoints.
    pub fn snapshot(&self) -> (Vec<f64>, f64) {
        (self.values.iter().copied().collect(), self.sum)
    }

    pub fn restore(window: usize, values: &[f64], sum: f64) -> Self {
        RunningAverage {
            window: window.max(1),
            values: values.iter().copied().collect(),
            sum,
        }
    }
}

/// Append-only line writer that flushes at least every 1000 rows.
pub struct CsvAppender {
    path: PathBuf,
    out: BufWriter<File>,
    pending: usize,
}

impl CsvAppender {
    /// Creates `path` with `header`, or truncates an existing file to its header
    /// plus the first `keep_rows` data rows and appends after them.
    pub fn open(path: &Path, header: &str, keep_rows: u64) -> Result<Self> {
        let mut kept = Vec::new();
        if keep_rows > 0 && path.exists() {
            let f = File::open(path).map_err(|e| Error::io(path, e))?;
            let mut lines = BufReader::new(f).lines();
            match lines.next() {
                Some(Ok(h)) if h == header => {}
                _ => {
                    return Err(Error::Csv {
                        path: path.into(),
                        message: "unexpected header while resuming".into(),
                    })
                }
            }
            for line in lines.take(keep_rows as usize) {
                kept.push(line.map_err(|e| Error::io(path, e))?);
            }
            if (kept.len() as u64) < keep_rows {
                return Err(Error::Csv {
                    path: path.into(),
                    message: format!("only {} of {} rows present while resuming", kept.len(), keep_rows),
                });
            }
        } else if keep_rows > 0 {
            return Err(Error::Csv {
                path: path.into(),
                message: "file missing while resuming".into(),
            });
        }
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let write = |out: &mut BufWriter<File>, s: &str| writeln!(out, "{s}").map_err(|e| Error::io(path, e));
        write(&mut out, header)?;
        for line in &kept {
            write(&mut out, line)?;
        }
        out.flush().map_err(|e| Error::io(path, e))?;
        Ok(CsvAppender {
            path: path.to_path_buf(),
            out,
            pending: 0,
        })
    }

    pub fn write_line(&mut self, line: &str) -> Result<()> {
        writeln!(self.out, "{line}").map_err(|e| Error::io(&self.path, e))?;
        self.pending += 1;
        if self.pending >= FLUSH_EVERY {
            self.flush()?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.pending = 0;
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
