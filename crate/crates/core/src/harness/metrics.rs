use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "episode,score,avg100,epsilon";

/// One row of training metrics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeRecord {
    /// 1-based episode number.
    pub episode: usize,
    /// Steps survived (raw reward sum, unshaped).
    pub score: f64,
    /// Mean score over the last `min(100, episode)` episodes.
    pub avg100: f64,
    pub epsilon: f64,
    /// Learning rate used by the tabular learner; not written to CSV.
    pub alpha: Option<f64>,
}

/// Mean of the trailing `min(100, len)` scores.
pub fn trailing_mean(scores: &[f64]) -> f64 {
    let window = &scores[scores.len().saturating_sub(100)..];
    if window.is_empty() {
        return 0.0;
    }
    window.iter().sum::<f64>() / window.len() as f64
}

/// Renders records as CSV. Floats use the shortest representation that
/// round-trips exactly.
pub fn render_metrics(records: &[EpisodeRecord]) -> String {
    let mut out = String::with_capacity(32 * (records.len() + 1));
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for r in records {
        writeln!(out, "{},{},{},{}", r.episode, r.score, r.avg100, r.epsilon)
            .expect("writing to a String");
    }
    out
}

pub fn write_metrics(records: &[EpisodeRecord], path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::EmptyMetrics);
    }
    fs::write(path, render_metrics(records)).map_err(|e| Error::io(path, e))
}

pub fn parse_metrics(text: &str) -> Result<Vec<EpisodeRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(METRICS_HEADER) => {}
        other => {
            return Err(Error::InvalidConfig(format!(
                "metrics header {other:?} != {METRICS_HEADER:?}"
            )))
        }
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split(',').collect();
            let bad = || Error::InvalidConfig(format!("malformed metrics row {}: {line:?}", i + 2));
            if fields.len() != 4 {
                return Err(bad());
            }
            Ok(EpisodeRecord {
                episode: fields[0].parse().map_err(|_| bad())?,
                score: fields[1].parse().map_err(|_| bad())?,
                avg100: fields[2].parse().map_err(|_| bad())?,
                epsilon: fields[3].parse().map_err(|_| bad())?,
                alpha: None,
            })
        })
        .collect()
}

pub fn read_metrics(path: &Path) -> Result<Vec<EpisodeRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_metrics(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn records(scores: &[f64]) -> Vec<EpisodeRecord> {
        let mut out = Vec::new();
        for (i, &s) in scores.iter().enumerate() {
            out.push(EpisodeRecord {
                episode: i + 1,
                score: s,
                avg100: trailing_mean(&scores[..=i]),
                epsilon: 0.995f64.powi(i as i32),
                alpha: None,
            });
        }
        out
    }

    #[test]
    fn three_records_four_lines() {
        let text = render_metrics(&records(&[10.0, 20.0, 200.0]));
        assert_eq!(text.lines().count(), 4);
        assert!(text.ends_with('\n'));
        assert!(!text.contains('\r'));
        assert_eq!(text.lines().next(), Some(METRICS_HEADER));
    }

    #[test]
    fn empty_records_create_no_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        assert!(matches!(write_metrics(&[], &path), Err(Error::EmptyMetrics)));
        assert!(!path.exists());
    }

    #[test]
    fn unwritable_path_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("missing").join("m.csv");
        assert!(matches!(
            write_metrics(&records(&[1.0]), &path),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn trailing_mean_window() {
        let scores: Vec<f64> = (1..=150).map(|v| v as f64).collect();
        assert_eq!(trailing_mean(&scores[..4]), 2.5);
        assert_eq!(trailing_mean(&scores), (51..=150).sum::<i32>() as f64 / 100.0);
    }

    proptest! {
        #[test]
        fn csv_round_trip(scores in prop::collection::vec(1u32..=200, 1..250)) {
            let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
            let recs = records(&scores);
            let parsed = parse_metrics(&render_metrics(&recs)).unwrap();
            prop_assert_eq!(parsed, recs);
        }
    }
}
