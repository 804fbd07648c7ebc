//! Line-delimited JSON metrics and classification scoring.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Appends one JSON object per line.
pub struct MetricsLog {
    path: PathBuf,
    file: File,
}

impl MetricsLog {
    pub fn open(path: &Path, truncate: bool) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .append(!truncate)
            .truncate(truncate)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn write<T: Serialize>(&mut self, record: &T) -> Result<()> {
        let line = serde_json::to_string(record)?;
        writeln!(self.file, "{line}").map_err(|e| Error::io(&self.path, e))?;
        self.file.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Parse every line of a metrics file.
pub fn read_metrics(path: &Path) -> Result<Vec<serde_json::Value>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub class: usize,
    pub name: String,
    pub count: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub samples: usize,
    pub top1: f64,
    /// Top-min(5, K).
    pub top5: f64,
    pub per_class: Vec<ClassAccuracy>,
}

/// Score rows of class probabilities (or logits) against labels.
pub fn score(scores: &[Vec<f64>], labels: &[usize], class_names: &[String]) -> Result<ClassificationMetrics> {
    ensure!(scores.len() == labels.len(), "{} score rows for {} labels", scores.len(), labels.len());
    ensure!(!scores.is_empty(), "nothing to score");
    let k = class_names.len();
    let mut per_class: Vec<ClassAccuracy> = class_names
        .iter()
        .enumerate()
        .map(|(c, n)| ClassAccuracy {
            class: c,
            name: n.clone(),
            count: 0,
            correct: 0,
            accuracy: 0.0,
        })
        .collect();
    let (mut top1, mut top5) = (0usize, 0usize);
    let kk = k.min(5);
    for (row, &label) in scores.iter().zip(labels) {
        ensure!(row.len() == k && label < k, "score row of {} for label {label} over {k} classes", row.len());
        // Rank of the true class: number of classes scoring strictly higher,
        // ties broken towards lower class index.
        let s = row[label];
        let rank = row
            .iter()
            .enumerate()
            .filter(|&(c, &v)| v > s || (v == s && c < label))
            .count();
        per_class[label].count += 1;
        if rank == 0 {
            top1 += 1;
            per_class[label].correct += 1;
        }
        if rank < kk {
            top5 += 1;
        }
    }
    for c in &mut per_class {
        c.accuracy = if c.count > 0 { c.correct as f64 / c.count as f64 } else { 0.0 };
    }
    let n = scores.len() as f64;
    Ok(ClassificationMetrics {
        samples: scores.len(),
        top1: top1 as f64 / n,
        top5: top5 as f64 / n,
        per_class,
    })
}

/// Fraction of the most frequent label.
pub fn majority_rate(labels: &[usize], num_classes: usize) -> f64 {
    let mut counts = vec![0usize; num_classes];
    for &l in labels {
        counts[l] += 1;
    }
    *counts.iter().max().unwrap_or(&0) as f64 / labels.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn top_k_and_weighted_per_class() {
        let scores = vec![
            vec![0.1, 0.7, 0.2],
            vec![0.5, 0.3, 0.2],
            vec![0.2, 0.3, 0.5],
            vec![0.6, 0.3, 0.1],
        ];
        let m = score(&scores, &[1, 1, 2, 2], &names(3)).unwrap();
        assert_eq!(m.top1, 0.5);
        assert_eq!(m.top5, 1.0);
        let weighted: f64 = m.per_class.iter().map(|c| c.accuracy * c.count as f64).sum::<f64>() / 4.0;
        assert_eq!(weighted, m.top1);
        assert!(m.top5 >= m.top1);
    }

    #[test]
    fn single_class_constant_predictor() {
        let m = score(&[vec![1.0], vec![1.0]], &[0, 0], &names(1)).unwrap();
        assert_eq!(m.top1, 1.0);
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        let mut log = MetricsLog::open(&p, true).unwrap();
        log.write(&serde_json::json!({"epoch": 1, "loss": 0.5})).unwrap();
        log.write(&serde_json::json!({"epoch": 2, "loss": 0.25})).unwrap();
        let rows = read_metrics(&p).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1]["loss"], 0.25);
        assert_eq!(majority_rate(&[0, 1, 1], 2), 2.0 / 3.0);
    }
}
