use std::collections::HashMap;
use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::Simulator;
use crate::error::{Error, Result};

fn default_timeout() -> f64 {
    300.0
}

/// How to launch an external simulator and what it computes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalCommand {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
    pub design_bounds: Vec<(f64, f64)>,
    pub noise_dim: usize,
    pub metrics: Vec<String>,
    /// Seconds allowed per batch.
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
}

/// Child-process simulator speaking a CSV row protocol on stdin/stdout.
///
/// Input header `x1,..,xd1,xi1,..,xid2` then one `%.17g` row per sample;
/// output header `m1,..,mn` then one row per input row in the same order.
#[derive(Debug)]
pub struct ExternalSimulator {
    command: ExternalCommand,
    cache: Mutex<HashMap<Vec<u64>, Vec<f64>>>,
    use_cache: bool,
}

fn key(x: &[f64], xi: &[f64]) -> Vec<u64> {
    x.iter().chain(xi).map(|v| v.to_bits()).collect()
}

impl ExternalSimulator {
    pub fn new(command: ExternalCommand) -> Result<Self> {
        if command.metrics.is_empty() {
            return Err(Error::invalid("external simulator needs at least one metric"));
        }
        if !(command.timeout_s > 0.0) {
            return Err(Error::invalid("external simulator timeout must be positive"));
        }
        Ok(Self {
            command,
            cache: Mutex::new(HashMap::new()),
            use_cache: true,
        })
    }

    /// Disables the result cache so every call reaches the child process.
    pub fn without_cache(mut self) -> Self {
        self.use_cache = false;
        self
    }

    fn header(&self) -> String {
        let d1 = self.command.design_bounds.len();
        (1..=d1)
            .map(|i| format!("x{i}"))
            .chain((1..=self.command.noise_dim).map(|i| format!("xi{i}")))
            .collect::<Vec<_>>()
            .join(",")
    }

    fn run(&self, rows: &[(Vec<f64>, Vec<f64>)]) -> Result<Vec<Vec<f64>>> {
        let mut input = self.header();
        input.push('\n');
        for (x, xi) in rows {
            let cells: Vec<String> = x.iter().chain(xi).map(|v| format_g17(*v)).collect();
            input.push_str(&cells.join(","));
            input.push('\n');
        }
        let mut child = Command::new(&self.command.program)
            .args(&self.command.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Protocol(format!("cannot start '{}': {e}", self.command.program)))?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        let writer = std::thread::spawn(move || {
            // a child that exits early closes the pipe; that surfaces as a row-count error
            let _ = stdin.write_all(input.as_bytes());
        });
        let mut stdout = child.stdout.take().expect("piped stdout");
        let reader = std::thread::spawn(move || {
            let mut s = String::new();
            stdout.read_to_string(&mut s).map(|_| s)
        });
        let deadline = Instant::now() + Duration::from_secs_f64(self.command.timeout_s);
        let status = loop {
            if let Some(status) = child.try_wait()? {
                break status;
            }
            if Instant::now() >= deadline {
                let _ = child.kill();
                let _ = child.wait();
                return Err(Error::Protocol(format!(
                    "'{}' timed out after {} s",
                    self.command.program, self.command.timeout_s
                )));
            }
            std::thread::sleep(Duration::from_millis(5));
        };
        let _ = writer.join();
        let output = reader
            .join()
            .map_err(|_| Error::Protocol("stdout reader panicked".into()))??;
        if !status.success() {
            return Err(Error::Protocol(format!("'{}' exited with {status}", self.command.program)));
        }
        self.parse(&output, rows.len())
    }

    fn parse(&self, output: &str, expected: usize) -> Result<Vec<Vec<f64>>> {
        let mut lines = output.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Protocol("missing output header".into()))?;
        let width = self.command.metrics.len();
        if header.split(',').count() != width {
            return Err(Error::Protocol(format!(
                "output header has {} columns, expected {width}",
                header.split(',').count()
            )));
        }
        let mut rows = Vec::with_capacity(expected);
        for (row, line) in lines.enumerate() {
            let values: Vec<f64> = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Protocol(format!("row {row}: {e}")))?;
            if values.len() != width {
                return Err(Error::Protocol(format!("row {row}: {} columns, expected {width}", values.len())));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Protocol(format!("row {row}: non-finite value in '{line}'")));
            }
            rows.push(values);
        }
        if rows.len() != expected {
            return Err(Error::Protocol(format!("got {} rows, expected {expected}", rows.len())));
        }
        Ok(rows)
    }
}

/// 17 significant digits, enough for any f64 to round-trip.
pub(crate) fn format_g17(v: f64) -> String {
    format!("{v:.16e}")
}

impl Simulator for ExternalSimulator {
    fn design_bounds(&self) -> Vec<(f64, f64)> {
        self.command.design_bounds.clone()
    }

    fn noise_dim(&self) -> usize {
        self.command.noise_dim
    }

    fn metric_names(&self) -> Vec<String> {
        self.command.metrics.clone()
    }

    fn simulate(&self, x: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.simulate_batch(&[(x.to_vec(), xi.to_vec())])?;
        Ok(out.remove(0))
    }

    fn simulate_batch(&self, rows: &[(Vec<f64>, Vec<f64>)]) -> Result<Vec<Vec<f64>>> {
        let d1 = self.command.design_bounds.len();
        for (x, xi) in rows {
            super::check_dims(x, xi, d1, self.command.noise_dim)?;
        }
        if !self.use_cache {
            return self.run(rows);
        }
        let missing: Vec<(Vec<f64>, Vec<f64>)> = {
            let cache = self.cache.lock().expect("cache lock");
            let mut seen = std::collections::HashSet::new();
            rows.iter()
                .filter(|(x, xi)| {
                    let k = key(x, xi);
                    !cache.contains_key(&k) && seen.insert(k)
                })
                .cloned()
                .collect()
        };
        if !missing.is_empty() {
            let fresh = self.run(&missing)?;
            let mut cache = self.cache.lock().expect("cache lock");
            for ((x, xi), y) in missing.iter().zip(fresh) {
                cache.insert(key(x, xi), y);
            }
        }
        let cache = self.cache.lock().expect("cache lock");
        Ok(rows.iter().map(|(x, xi)| cache[&key(x, xi)].clone()).collect())
    }
}
