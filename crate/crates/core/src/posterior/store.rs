//! Multiplicity-compressed chain output and its on-disk format.
//!
//! Rejected proposals keep the chain in place, so long stretches of the raw
//! step sequence repeat the same parameter vector. The store keeps one record
//! per run of identical states; expanding the records reproduces the exact
//! step sequence.
//!
//! Text format: `#`-prefixed header lines, then one record per line as
//! `step_index_start,theta_1,..,theta_d,multiplicity,log_posterior`. Floats
//! are printed in shortest round-trip form, so a loaded store is bit-identical
//! to the saved one.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::model::ParameterVector;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: expected {expected} comma-separated fields, got {got}")]
    FieldCount { line: usize, expected: usize, got: usize },
    #[error("line {line}: {message}")]
    BadRecord { line: usize, message: String },
    #[error("store is empty")]
    Empty,
    #[error("multiplicities sum to {sum} but the header declares {declared} steps")]
    StepMismatch { sum: u64, declared: u64 },
    #[error("line {line}: record repeats the previous parameter vector; consecutive records must be distinct")]
    RepeatedTheta { line: usize },
}

/// One run of identical chain states.
#[derive(Debug, Clone, PartialEq)]
pub struct StoreRecord {
    /// Index (post-burn-in, 0-based) of the first step this record covers.
    pub step_start: u64,
    pub theta: ParameterVector,
    pub multiplicity: u64,
    /// Unnormalized log posterior at `theta`.
    pub log_posterior: f64,
}

/// Compressed record of a chain run.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStore {
    records: Vec<StoreRecord>,
    dims: usize,
    burn_in: u64,
    total_steps: u64,
    seed: Option<u64>,
}

impl SampleStore {
    pub fn records(&self) -> &[StoreRecord] {
        &self.records
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn burn_in(&self) -> u64 {
        self.burn_in
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// The raw step sequence: each record's parameter vector repeated
    /// `multiplicity` times, in order.
    pub fn expand(&self) -> impl Iterator<Item = &ParameterVector> + '_ {
        self.records
            .iter()
            .flat_map(|rec| std::iter::repeat(&rec.theta).take(rec.multiplicity as usize))
    }

    /// Per-coordinate expanded series, as needed by the mixing diagnostics.
    pub fn expanded_columns(&self) -> Vec<Vec<f64>> {
        let mut columns = vec![Vec::with_capacity(self.total_steps as usize); self.dims];
        for rec in &self.records {
            for (k, col) in columns.iter_mut().enumerate() {
                let v = rec.theta[k];
                col.extend(std::iter::repeat(v).take(rec.multiplicity as usize));
            }
        }
        columns
    }

    pub fn write_to(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "# sample store v1")?;
        match self.seed {
            Some(seed) => writeln!(
                w,
                "# dims={} burn_in={} total_steps={} seed={}",
                self.dims, self.burn_in, self.total_steps, seed
            )?,
            None => writeln!(
                w,
                "# dims={} burn_in={} total_steps={}",
                self.dims, self.burn_in, self.total_steps
            )?,
        }
        for rec in &self.records {
            write!(w, "{}", rec.step_start)?;
            for v in rec.theta.as_slice() {
                write!(w, ",{v}")?;
            }
            writeln!(w, ",{},{}", rec.multiplicity, rec.log_posterior)?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()
    }

    pub fn read_from(r: impl io::Read) -> Result<Self, StoreError> {
        let reader = BufReader::new(r);
        let mut header: Option<(usize, u64, u64, Option<u64>)> = None;
        let mut records: Vec<StoreRecord> = Vec::new();
        let mut dims: Option<usize> = None;
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(comment) = trimmed.strip_prefix('#') {
                if comment.contains("dims=") {
                    header = Some(parse_header(comment, line_no)?);
                }
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').collect();
            let d = match dims {
                Some(d) => d,
                None => {
                    let d = match header {
                        Some((d, ..)) => d,
                        // Without a header the layout fixes d as fields - 3.
                        None => fields.len().checked_sub(3).filter(|&d| d > 0).ok_or(
                            StoreError::FieldCount {
                                line: line_no,
                                expected: 4,
                                got: fields.len(),
                            },
                        )?,
                    };
                    dims = Some(d);
                    d
                }
            };
            if fields.len() != d + 3 {
                return Err(StoreError::FieldCount {
                    line: line_no,
                    expected: d + 3,
                    got: fields.len(),
                });
            }
            let parse_f = |s: &str| -> Result<f64, StoreError> {
                s.parse::<f64>().map_err(|e| StoreError::BadRecord {
                    line: line_no,
                    message: format!("{s:?}: {e}"),
                })
            };
            let parse_u = |s: &str| -> Result<u64, StoreError> {
                s.parse::<u64>().map_err(|e| StoreError::BadRecord {
                    line: line_no,
                    message: format!("{s:?}: {e}"),
                })
            };
            let step_start = parse_u(fields[0])?;
            let theta: Vec<f64> =
                fields[1..=d].iter().map(|s| parse_f(s)).collect::<Result<_, _>>()?;
            let multiplicity = parse_u(fields[d + 1])?;
            if multiplicity == 0 {
                return Err(StoreError::BadRecord {
                    line: line_no,
                    message: "multiplicity must be positive".into(),
                });
            }
            let log_posterior = parse_f(fields[d + 2])?;
            if let Some(last) = records.last() {
                if last.theta.as_slice() == theta.as_slice() {
                    return Err(StoreError::RepeatedTheta { line: line_no });
                }
                let expected_start = last.step_start + last.multiplicity;
                if step_start != expected_start {
                    return Err(StoreError::BadRecord {
                        line: line_no,
                        message: format!(
                            "step_index_start {step_start} does not follow previous record (expected {expected_start})"
                        ),
                    });
                }
            } else if step_start != 0 {
                return Err(StoreError::BadRecord {
                    line: line_no,
                    message: format!("first record must start at step 0, got {step_start}"),
                });
            }
            records.push(StoreRecord {
                step_start,
                theta: ParameterVector::new(theta),
                multiplicity,
                log_posterior,
            });
        }
        if records.is_empty() {
            return Err(StoreError::Empty);
        }
        let sum: u64 = records.iter().map(|r| r.multiplicity).sum();
        let (dims, burn_in, declared, seed) =
            header.unwrap_or((dims.unwrap(), 0, sum, None));
        if sum != declared {
            return Err(StoreError::StepMismatch { sum, declared });
        }
        Ok(Self { records, dims, burn_in, total_steps: sum, seed })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        Self::read_from(File::open(path)?)
    }
}

fn parse_header(
    comment: &str,
    line: usize,
) -> Result<(usize, u64, u64, Option<u64>), StoreError> {
    let mut dims = None;
    let mut burn_in = 0;
    let mut total = None;
    let mut seed = None;
    for part in comment.split_whitespace() {
        if let Some((key, value)) = part.split_once('=') {
            let bad = |e: std::num::ParseIntError| StoreError::BadRecord {
                line,
                message: format!("header field {key}: {e}"),
            };
            match key {
                "dims" => dims = Some(value.parse::<usize>().map_err(bad)?),
                "burn_in" => burn_in = value.parse::<u64>().map_err(bad)?,
                "total_steps" => total = Some(value.parse::<u64>().map_err(bad)?),
                "seed" => seed = Some(value.parse::<u64>().map_err(bad)?),
                _ => {}
            }
        }
    }
    match (dims, total) {
        (Some(d), Some(t)) => Ok((d, burn_in, t, seed)),
        _ => Err(StoreError::BadRecord {
            line,
            message: "header needs dims= and total_steps=".into(),
        }),
    }
}

/// Builds a [`SampleStore`] one step at a time, merging consecutive
/// identical states.
#[derive(Debug)]
pub struct StoreBuilder {
    records: Vec<StoreRecord>,
    dims: usize,
    burn_in: u64,
    total: u64,
    seed: Option<u64>,
}

impl StoreBuilder {
    pub fn new(dims: usize, burn_in: u64, seed: Option<u64>) -> Self {
        Self { records: Vec::new(), dims, burn_in, total: 0, seed }
    }

    pub fn push(&mut self, theta: &[f64], log_posterior: f64) {
        debug_assert_eq!(theta.len(), self.dims);
        if let Some(last) = self.records.last_mut() {
            if last.theta.as_slice() == theta {
                last.multiplicity += 1;
                self.total += 1;
                return;
            }
        }
        self.records.push(StoreRecord {
            step_start: self.total,
            theta: ParameterVector::new(theta.to_vec()),
            multiplicity: 1,
            log_posterior,
        });
        self.total += 1;
    }

    pub fn finish(self) -> SampleStore {
        SampleStore {
            records: self.records,
            dims: self.dims,
            burn_in: self.burn_in,
            total_steps: self.total,
            seed: self.seed,
        }
    }
}
