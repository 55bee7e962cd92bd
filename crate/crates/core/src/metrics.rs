//! Frame-latency distribution and reliability.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::macsim::FrameRecord;

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    /// Fraction of all frames delivered within the deadline.
    pub reliability: f64,
    /// `(latency_s, cumulative fraction of all frames)`, one point per
    /// distinct latency. Late frames are included; frames never completed
    /// are not, so the last fraction is the completed share.
    pub latency_cdf: Vec<(f64, f64)>,
    pub frame_count: usize,
    pub delivered_count: usize,
    pub completed_count: usize,
    pub lost_count: usize,
    /// Over delivered frames.
    pub min_latency: Option<f64>,
    pub median_latency: Option<f64>,
    pub max_latency: Option<f64>,
    /// Sorted latencies of delivered frames.
    delivered_latencies: Vec<f64>,
}

impl RunSummary {
    /// Latency below which a fraction `q` of the delivered frames fall
    /// (nearest rank).
    pub fn delivered_quantile(&self, q: f64) -> Option<f64> {
        let v = &self.delivered_latencies;
        if v.is_empty() {
            return None;
        }
        let rank = (q.clamp(0.0, 1.0) * v.len() as f64).ceil() as usize;
        Some(v[rank.saturating_sub(1).min(v.len() - 1)])
    }

    /// CDF value at latency `x`.
    pub fn cdf_at(&self, x: f64) -> f64 {
        let i = self.latency_cdf.partition_point(|&(l, _)| l <= x);
        if i == 0 {
            0.0
        } else {
            self.latency_cdf[i - 1].1
        }
    }
}

pub fn summarize(records: &[FrameRecord]) -> Result<RunSummary> {
    if records.is_empty() {
        return Err(Error::InvalidInput("no frame records to summarize".into()));
    }
    let total = records.len();
    let mut completed: Vec<f64> = records.iter().filter_map(|r| r.latency()).collect();
    completed.sort_by(f64::total_cmp);
    let mut cdf: Vec<(f64, f64)> = Vec::new();
    for (i, &l) in completed.iter().enumerate() {
        let frac = (i + 1) as f64 / total as f64;
        match cdf.last_mut() {
            Some(last) if last.0 == l => last.1 = frac,
            _ => cdf.push((l, frac)),
        }
    }
    let mut delivered: Vec<f64> = records
        .iter()
        .filter(|r| r.delivered)
        .filter_map(|r| r.latency())
        .collect();
    delivered.sort_by(f64::total_cmp);
    let n = delivered.len();
    Ok(RunSummary {
        reliability: n as f64 / total as f64,
        latency_cdf: cdf,
        frame_count: total,
        delivered_count: n,
        completed_count: completed.len(),
        lost_count: total - n,
        min_latency: delivered.first().copied(),
        median_latency: (n > 0).then(|| delivered[(n - 1) / 2]),
        max_latency: delivered.last().copied(),
        delivered_latencies: delivered,
    })
}

fn opt_ms(v: Option<f64>) -> String {
    v.map(|s| format!("{:.6}", s * 1e3)).unwrap_or_else(|| "none".into())
}

/// Key-value summary. `echo` lines (run configuration) are written first as
/// `# key = value` comments.
pub fn format_summary(summary: &RunSummary, echo: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in echo {
        let _ = writeln!(out, "# {k} = {v}");
    }
    let _ = writeln!(out, "frames={}", summary.frame_count);
    let _ = writeln!(out, "delivered={}", summary.delivered_count);
    let _ = writeln!(out, "completed={}", summary.completed_count);
    let _ = writeln!(out, "lost={}", summary.lost_count);
    let _ = writeln!(out, "reliability={:.4}", summary.reliability);
    let _ = writeln!(out, "min_latency_ms={}", opt_ms(summary.min_latency));
    let _ = writeln!(out, "median_latency_ms={}", opt_ms(summary.median_latency));
    let _ = writeln!(out, "max_latency_ms={}", opt_ms(summary.max_latency));
    out
}

pub fn format_frames(records: &[FrameRecord]) -> String {
    let mut out = String::from("frame_id,created_s,completed_s,delivered\n");
    for r in records {
        let completed = r.completed.map(|c| format!("{c:.9}")).unwrap_or_default();
        let _ = writeln!(out, "{},{:.9},{},{}", r.frame_id, r.created, completed, r.delivered as u8);
    }
    out
}

pub fn format_cdf(summary: &RunSummary) -> String {
    let mut out = String::from("latency_ms,fraction\n");
    for (l, f) in &summary.latency_cdf {
        let _ = writeln!(out, "{:.6},{:.6}", l * 1e3, f);
    }
    out
}

/// Where a run's result files go.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputPaths {
    pub frames: PathBuf,
    pub cdf: PathBuf,
    pub summary: PathBuf,
}

impl OutputPaths {
    /// `frames.csv`, `cdf.csv` and `summary.txt` in `dir`.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let d = dir.as_ref();
        OutputPaths {
            frames: d.join("frames.csv"),
            cdf: d.join("cdf.csv"),
            summary: d.join("summary.txt"),
        }
    }
}

pub fn write_outputs(
    summary: &RunSummary,
    records: &[FrameRecord],
    paths: &OutputPaths,
    echo: &[(String, String)],
) -> Result<()> {
    std::fs::write(&paths.frames, format_frames(records))?;
    std::fs::write(&paths.cdf, format_cdf(summary))?;
    std::fs::write(&paths.summary, format_summary(summary, echo))?;
    Ok(())
}

/// Reads a per-frame CSV written by [`write_outputs`].
pub fn read_frames(path: impl AsRef<Path>) -> Result<Vec<FrameRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let line = row + 2;
        let bad = |what: &str| Error::Parse {
            line,
            message: format!("bad {what}"),
        };
        if record.len() != 4 {
            return Err(bad("column count"));
        }
        let completed = match &record[2] {
            "" => None,
            s => Some(s.parse::<f64>().map_err(|_| bad("completed_s"))?),
        };
        out.push(FrameRecord {
            frame_id: record[0].parse().map_err(|_| bad("frame_id"))?,
            created: record[1].parse().map_err(|_| bad("created_s"))?,
            completed,
            delivered: match &record[3] {
                "1" | "true" => true,
                "0" | "false" => false,
                _ => return Err(bad("delivered")),
            },
        });
    }
    Ok(out)
}
