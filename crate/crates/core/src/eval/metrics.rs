//! Ranking and risk metrics over a node subset.

use std::path::Path;

use crate::error::{Error, Result};

fn labelled(scores: &[f64], novel: &[bool], subset: &[usize]) -> Result<(Vec<(f64, bool)>, usize, usize)> {
    let mut pairs = Vec::with_capacity(subset.len());
    for &v in subset {
        let (&s, &y) = scores
            .get(v)
            .zip(novel.get(v))
            .ok_or_else(|| Error::InvalidArgument(format!("node {v} has no score or label")))?;
        if s.is_nan() {
            return Err(Error::NonFinite(format!("score of node {v}")));
        }
        pairs.push((s, y));
    }
    let pos = pairs.iter().filter(|p| p.1).count();
    let neg = pairs.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidArgument(format!(
            "metric needs both classes, got {pos} novel and {neg} non-novel nodes"
        )));
    }
    Ok((pairs, pos, neg))
}

/// Area under the ROC curve: the probability that a random novel node
/// outranks a random non-novel one, ties counting one half. Computed from
/// midranks (Mann-Whitney U).
pub fn auroc(scores: &[f64], novel: &[bool], subset: &[usize]) -> Result<f64> {
    let (mut pairs, pos, neg) = labelled(scores, novel, subset)?;
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < pairs.len() {
        let j = i + pairs[i..].partition_point(|p| p.0 == pairs[i].0);
        // ranks i+1 ..= j share their mean
        let mid = (i + 1 + j) as f64 / 2.0;
        rank_sum += mid * pairs[i..j].iter().filter(|p| p.1).count() as f64;
        i = j;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Expected risk of soft scores, `(1 − α)·mean_{non-novel} f + α·mean_{novel} (1 − f)`,
/// with `α` the subset's share of novel nodes.
pub fn target_risk(scores: &[f64], novel: &[bool], subset: &[usize]) -> Result<f64> {
    risk_with(scores, novel, subset, |s| s)
}

/// Same risk after hard decisions `f >= threshold`.
pub fn thresholded_target_risk(scores: &[f64], novel: &[bool], subset: &[usize], threshold: f64) -> Result<f64> {
    risk_with(scores, novel, subset, |s| if s >= threshold { 1.0 } else { 0.0 })
}

fn risk_with(scores: &[f64], novel: &[bool], subset: &[usize], f: impl Fn(f64) -> f64) -> Result<f64> {
    let (pairs, pos, neg) = labelled(scores, novel, subset)?;
    let alpha = pos as f64 / pairs.len() as f64;
    let fp: f64 = pairs.iter().filter(|p| !p.1).map(|p| f(p.0)).sum::<f64>() / neg as f64;
    let fnr: f64 = pairs.iter().filter(|p| p.1).map(|p| 1.0 - f(p.0)).sum::<f64>() / pos as f64;
    Ok((1.0 - alpha) * fp + alpha * fnr)
}

/// Writes `node_id,score` rows.
pub fn write_scores(path: &Path, scores: &[f64]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["node_id", "score"])?;
    for (v, s) in scores.iter().enumerate() {
        w.write_record([v.to_string(), s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a scores file written by [`write_scores`]; every node in
/// `0..num_nodes` must appear exactly once.
pub fn read_scores(path: &Path, num_nodes: usize) -> Result<Vec<f64>> {
    let name = path.display().to_string();
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let col = |c: &str| {
        headers.iter().position(|h| h == c).ok_or_else(|| Error::MissingColumn {
            path: name.clone(),
            column: c.into(),
        })
    };
    let (id_col, score_col) = (col("node_id")?, col("score")?);
    let mut out = vec![f64::NAN; num_nodes];
    let mut seen = vec![false; num_nodes];
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let parse_err = |msg: String| Error::Parse {
            path: name.clone(),
            line,
            msg,
        };
        let v: usize = rec[id_col].trim().parse().map_err(|_| parse_err(format!("bad node id `{}`", &rec[id_col])))?;
        let s: f64 = rec[score_col].trim().parse().map_err(|_| parse_err(format!("bad score `{}`", &rec[score_col])))?;
        if v >= num_nodes || seen[v] {
            return Err(parse_err(format!("node id {v} out of range or repeated")));
        }
        seen[v] = true;
        out[v] = s;
    }
    if let Some(v) = seen.iter().position(|&s| !s) {
        return Err(Error::InvalidArgument(format!("{name}: no score for node {v}")));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn case(novel_scores: &[f64], other: &[f64]) -> (Vec<f64>, Vec<bool>, Vec<usize>) {
        let scores: Vec<f64> = novel_scores.iter().chain(other).copied().collect();
        let labels: Vec<bool> = (0..scores.len()).map(|i| i < novel_scores.len()).collect();
        let subset = (0..scores.len()).collect();
        (scores, labels, subset)
    }

    #[test]
    fn auroc_examples() {
        let (s, y, n) = case(&[0.9, 0.8], &[0.2, 0.1]);
        assert_eq!(auroc(&s, &y, &n).unwrap(), 1.0);
        let (s, y, n) = case(&[0.8, 0.3], &[0.5, 0.1]);
        assert_eq!(auroc(&s, &y, &n).unwrap(), 0.75);
        let (s, y, n) = case(&[0.4, 0.4], &[0.4, 0.4, 0.4]);
        assert_eq!(auroc(&s, &y, &n).unwrap(), 0.5);
        let (s, y, _) = case(&[0.4], &[0.4]);
        assert!(auroc(&s, &y, &[0]).is_err());
    }

    #[test]
    fn auroc_respects_subset() {
        let (s, y, _) = case(&[0.9, 0.1], &[0.5, 0.95]);
        assert_eq!(auroc(&s, &y, &[0, 2]).unwrap(), 1.0);
        assert_eq!(auroc(&s, &y, &[1, 3]).unwrap(), 0.0);
    }

    #[test]
    fn risk_examples() {
        let (_, y, n) = case(&[0.0, 0.0], &[0.0, 0.0]);
        assert_abs_diff_eq!(target_risk(&[1.0; 4], &y, &n).unwrap(), 0.5);
        assert_eq!(target_risk(&[1.0, 1.0, 0.0, 0.0], &y, &n).unwrap(), 0.0);
        let (_, y, n) = case(&[0.0], &[0.0, 0.0, 0.0]);
        assert_abs_diff_eq!(target_risk(&[0.5; 4], &y, &n).unwrap(), 0.5);
        assert_abs_diff_eq!(thresholded_target_risk(&[0.5; 4], &y, &n, 0.5).unwrap(), 0.75);
    }

    #[test]
    fn scores_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let scores = vec![0.25, 1.0 / 3.0, 0.0];
        write_scores(&p, &scores).unwrap();
        assert_eq!(read_scores(&p, 3).unwrap(), scores);
        assert!(read_scores(&p, 4).is_err());
        assert!(read_scores(&p, 2).is_err());
        std::fs::write(&p, "node_id,value\n0,1\n").unwrap();
        assert!(matches!(read_scores(&p, 1), Err(Error::MissingColumn { .. })));
        std::fs::write(&p, "node_id,score\n0,abc\n").unwrap();
        assert!(matches!(read_scores(&p, 1), Err(Error::Parse { line: 2, .. })));
    }
}
