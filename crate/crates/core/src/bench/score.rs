//! Scoring of estimate files against ground-truth files.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bench::data::{load_column, load_localizations, load_ratings};
use crate::bench::metrics::{match_sources, rmse, sysid_score};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusScore {
    pub radius_nm: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Per-frame F1 of two localization files, averaged over frames, for each radius.
///
/// Frames are numbered from 0 up to the largest frame index in either file.
pub fn score_f1_files(est: impl AsRef<Path>, truth: impl AsRef<Path>, radii_nm: &[f64]) -> Result<Vec<RadiusScore>> {
    let mut est = load_localizations(est, None)?;
    let mut truth = load_localizations(truth, None)?;
    let frames = est.len().max(truth.len());
    if frames == 0 {
        return Err(Error::Undefined("no localizations in either file".into()));
    }
    est.resize(frames, Vec::new());
    truth.resize(frames, Vec::new());
    Ok(radii_nm
        .iter()
        .map(|&radius_nm| {
            let scores: Vec<_> = est.iter().zip(&truth).map(|(e, t)| match_sources(e, t, radius_nm)).collect();
            let n = frames as f64;
            RadiusScore {
                radius_nm,
                precision: scores.iter().map(|s| s.precision).sum::<f64>() / n,
                recall: scores.iter().map(|s| s.recall).sum::<f64>() / n,
                f1: scores.iter().map(|s| s.f1).sum::<f64>() / n,
            }
        })
        .collect())
}

/// RMSE over every rating in `truth`; `est` must rate each of those pairs.
pub fn score_rmse_files(est: impl AsRef<Path>, truth: impl AsRef<Path>) -> Result<f64> {
    let est_path = est.as_ref();
    let predicted: BTreeMap<(usize, usize), f64> =
        load_ratings(est_path)?.into_iter().map(|r| ((r.user, r.item), r.rating)).collect();
    let truth = load_ratings(truth)?;
    let mut pred = Vec::with_capacity(truth.len());
    for r in &truth {
        match predicted.get(&(r.user, r.item)) {
            Some(p) => pred.push(*p),
            None => {
                return Err(Error::InvalidInput(format!(
                    "{} has no rating for ({}, {})",
                    est_path.display(),
                    r.user,
                    r.item
                )))
            }
        }
    }
    let actual: Vec<f64> = truth.iter().map(|r| r.rating).collect();
    rmse(&pred, &actual)
}

/// Holdout score of predictions against the `y` column of `truth`.
///
/// Predictions come from a `y_pred` (or `y`) column. When `est` also has a
/// `t` column, each prediction is compared with row `t` of `truth`;
/// otherwise both files must have the same length.
pub fn score_sysid_files(est: impl AsRef<Path>, truth: impl AsRef<Path>) -> Result<f64> {
    let est = est.as_ref();
    let pred = load_column(est, &["y_pred", "y"])?;
    let y = load_column(truth, &["y"])?;
    let actual = match load_column(est, &["t"]) {
        Ok(t) => t
            .iter()
            .map(|&ti| {
                let idx = ti as usize;
                if ti < 0.0 || ti.fract() != 0.0 || idx >= y.len() {
                    Err(Error::InvalidInput(format!("time index {ti} is not a row of the truth file")))
                } else {
                    Ok(y[idx])
                }
            })
            .collect::<Result<Vec<_>>>()?,
        Err(Error::Parse { .. }) => y,
        Err(e) => return Err(e),
    };
    sysid_score(&pred, &actual)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn f1_over_frames() {
        let dir = tempfile::tempdir().unwrap();
        let truth = write(&dir, "t.csv", "frame,x_nm,y_nm,intensity\n0,0,0,1\n0,100,0,1\n1,50,50,1\n");
        let est = write(&dir, "e.csv", "frame,x_nm,y_nm,intensity\n0,3,4,1\n1,50,52,1\n");
        let s = score_f1_files(&est, &truth, &[5.0]).unwrap();
        // Frame 0: P = 1, R = 1/2, F1 = 2/3; frame 1: F1 = 1.
        assert!((s[0].f1 - (2.0 / 3.0 + 1.0) / 2.0).abs() < 1e-12);
        assert!((s[0].recall - 0.75).abs() < 1e-12);
    }

    #[test]
    fn rmse_requires_every_pair() {
        let dir = tempfile::tempdir().unwrap();
        let truth = write(&dir, "t.csv", "user,item,rating\n0,0,4\n1,1,2\n");
        let est = write(&dir, "e.csv", "user,item,rating\n1,1,3\n0,0,4\n2,2,5\n");
        assert!((score_rmse_files(&est, &truth).unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
        let partial = write(&dir, "p.csv", "user,item,rating\n0,0,4\n");
        assert!(matches!(score_rmse_files(&partial, &truth), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn sysid_with_and_without_time_column() {
        let dir = tempfile::tempdir().unwrap();
        let truth = write(&dir, "io.csv", "u,y\n0,5\n0,1\n0,2\n0,3\n");
        let indexed = write(&dir, "p.csv", "t,y_pred,y\n2,2,2\n3,3,3\n");
        assert_eq!(score_sysid_files(&indexed, &truth).unwrap(), 100.0);
        let plain = write(&dir, "q.csv", "y_pred\n5\n1\n2\n3\n");
        assert_eq!(score_sysid_files(&plain, &truth).unwrap(), 100.0);
        let short = write(&dir, "r.csv", "y_pred\n5\n");
        assert!(score_sysid_files(&short, &truth).is_err());
    }
}
