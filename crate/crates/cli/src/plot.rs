//! Plot-ready CSV tables aggregated from a results directory.
//!
//! Three table families, schemas documented in the README:
//! - `stopping_times.csv` — one row per verification outcome found.
//! - `error_rates.csv` — grouped over outcomes carrying a ground truth
//!   (synthetic studies): one row per (n, delta).
//! - `hist_p<k>.csv` / `pairs_p<i>_p<j>.csv` — multiplicity-weighted
//!   parameter histograms and 2-D pair counts per sample store found.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use postcheck_core::posterior::SampleStore;
use postcheck_core::smc::Decision;

use crate::commands::{CliError, VerifyReport};

const HIST_BINS: usize = 40;

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|source| CliError::Io { path: parent.display().to_string(), source })?;
    }
    fs::write(path, contents)
        .map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

/// Aggregate a results directory into plot-ready CSV tables; returns the
/// files written.
pub fn cmd_plot_data(results_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = fs::read_dir(results_dir)
        .map_err(|source| CliError::Io { path: results_dir.display().to_string(), source })?;

    let mut outcomes: Vec<(String, VerifyReport)> = Vec::new();
    let mut stores: Vec<(String, SampleStore)> = Vec::new();
    for entry in entries {
        let entry =
            entry.map_err(|source| CliError::Io { path: results_dir.display().to_string(), source })?;
        let path = entry.path();
        if !path.is_file() {
            continue;
        }
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => {
                if let Ok(text) = fs::read_to_string(&path) {
                    if let Ok(report) = serde_json::from_str::<VerifyReport>(&text) {
                        outcomes.push((name, report));
                    }
                }
            }
            Some("txt") => {
                if let Ok(store) = SampleStore::load(&path) {
                    stores.push((name, store));
                }
            }
            _ => {}
        }
    }

    if outcomes.is_empty() && stores.is_empty() {
        return Err(CliError::Stage {
            stage: "plot-data",
            message: format!("no outcome JSON or store files in {}", results_dir.display()),
        });
    }

    let mut written = Vec::new();

    if !outcomes.is_empty() {
        let mut table =
            String::from("source,property,mode,r,delta,epsilon,decision,n,S,p_hat,gamma_used,wall_time_s\n");
        for (source, report) in &outcomes {
            table.push_str(&format!(
                "{source},{},{:?},{},{},{},{:?},{},{},{},{},{}\n",
                report.property,
                report.mode,
                report.r,
                report.delta,
                report.epsilon,
                report.decision,
                report.n,
                report.successes,
                report.p_hat,
                report.gamma_used,
                report.wall_time_s,
            ));
        }
        let path = out_dir.join("stopping_times.csv");
        write_file(&path, &table)?;
        written.push(path);

        // Error rates against ground truth, grouped by (n, delta).
        let mut groups: BTreeMap<(u64, u64), (u64, u64)> = BTreeMap::new();
        for (_, report) in &outcomes {
            let Some(truth) = report.truth else { continue };
            let key = (report.n, (report.delta * 1e9).round() as u64);
            let group = groups.entry(key).or_insert((0, 0));
            group.1 += 1;
            if report.decision != Decision::Undecided && report.decision != truth {
                group.0 += 1;
            }
        }
        if !groups.is_empty() {
            let mut table = String::from("n,delta,replicates,errors,error_rate\n");
            for ((n, delta_key), (errors, total)) in groups {
                let delta = delta_key as f64 / 1e9;
                table.push_str(&format!(
                    "{n},{delta},{total},{errors},{}\n",
                    errors as f64 / total as f64
                ));
            }
            let path = out_dir.join("error_rates.csv");
            write_file(&path, &table)?;
            written.push(path);
        }
    }

    for (source, store) in &stores {
        let stem = source.trim_end_matches(".txt");
        let dims = store.dims();
        let total = store.total_steps() as f64;

        let mut ranges = Vec::with_capacity(dims);
        for k in 0..dims {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for rec in store.records() {
                lo = lo.min(rec.theta[k]);
                hi = hi.max(rec.theta[k]);
            }
            if !(hi > lo) {
                hi = lo + 1.0;
            }
            ranges.push((lo, hi));
        }
        let bin_of = |value: f64, (lo, hi): (f64, f64)| -> usize {
            (((value - lo) / (hi - lo) * HIST_BINS as f64) as usize).min(HIST_BINS - 1)
        };

        for k in 0..dims {
            let mut counts = vec![0u64; HIST_BINS];
            for rec in store.records() {
                counts[bin_of(rec.theta[k], ranges[k])] += rec.multiplicity;
            }
            let (lo, hi) = ranges[k];
            let width = (hi - lo) / HIST_BINS as f64;
            let mut table = String::from("bin_low,bin_high,count,density\n");
            for (b, &count) in counts.iter().enumerate() {
                let bin_lo = lo + b as f64 * width;
                table.push_str(&format!(
                    "{},{},{count},{}\n",
                    bin_lo,
                    bin_lo + width,
                    count as f64 / total / width
                ));
            }
            let path = out_dir.join(format!("{stem}_hist_p{}.csv", k + 1));
            write_file(&path, &table)?;
            written.push(path);
        }

        for i in 0..dims {
            for j in (i + 1)..dims {
                let mut counts = vec![0u64; HIST_BINS * HIST_BINS];
                for rec in store.records() {
                    let bi = bin_of(rec.theta[i], ranges[i]);
                    let bj = bin_of(rec.theta[j], ranges[j]);
                    counts[bi * HIST_BINS + bj] += rec.multiplicity;
                }
                let mut table = String::from("bin_i,bin_j,count\n");
                for bi in 0..HIST_BINS {
                    for bj in 0..HIST_BINS {
                        let count = counts[bi * HIST_BINS + bj];
                        if count > 0 {
                            table.push_str(&format!("{bi},{bj},{count}\n"));
                        }
                    }
                }
                let path = out_dir.join(format!("{stem}_pairs_p{}_p{}.csv", i + 1, j + 1));
                write_file(&path, &table)?;
                written.push(path);
            }
        }
    }

    Ok(written)
}
