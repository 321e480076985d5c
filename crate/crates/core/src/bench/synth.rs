//! Seeded synthetic datasets with known ground truth.
//!
//! Each generator returns the data in memory; the `write_*` functions also
//! lay it out on disk next to a ready-to-run `config.json`.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bench::data::{self, write_text, FrameStack, IOSequence, Localization, Rating};
use crate::bench::experiment::{
    ExperimentConfig, MatcompProblem, Problem, SolverSection, SuperresProblem, SysidProblem,
};
use crate::measure::{apply_forward, AtomicMeasure, ParameterPoint};
use crate::models::lti::LtiOracleParams;
use crate::models::{LtiModel, SuperresModel};
use crate::solver::Variant;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Twosource,
    Lowrank,
    Lti,
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "twosource" => Ok(DatasetKind::Twosource),
            "lowrank" => Ok(DatasetKind::Lowrank),
            "lti" => Ok(DatasetKind::Lti),
            other => Err(Error::InvalidInput(format!("unknown dataset kind {other:?}"))),
        }
    }
}

/// Noise standard deviation giving the requested signal-to-noise ratio in dB.
pub fn noise_sigma(signal: &[f64], snr_db: f64) -> f64 {
    let energy: f64 = signal.iter().map(|x| x * x).sum();
    (energy / (signal.len() as f64 * 10f64.powf(snr_db / 10.0))).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoSourceParams {
    pub frames: usize,
    pub grid: usize,
    pub pixel_size: f64,
    pub sigma_px: f64,
    pub separation_px: f64,
    pub snr_db: f64,
    pub intensity: f64,
}

impl Default for TwoSourceParams {
    fn default() -> Self {
        TwoSourceParams {
            frames: 50,
            grid: 64,
            pixel_size: 100.0,
            sigma_px: 1.0,
            separation_px: 1.5,
            snr_db: 20.0,
            intensity: 1000.0,
        }
    }
}

pub struct TwoSourceData {
    pub stack: FrameStack,
    pub truth: Vec<Vec<Localization>>,
    pub model: SuperresModel,
}

/// Pairs of equally bright sources at a fixed separation, random midpoint
/// in the central half of the field and random orientation, plus white
/// Gaussian noise at the requested SNR.
pub fn two_source(params: &TwoSourceParams, seed: u64) -> Result<TwoSourceData> {
    if params.frames == 0 || params.grid == 0 {
        return Err(Error::InvalidInput("frames and grid must be positive".into()));
    }
    let s = params.pixel_size;
    let model = SuperresModel::new(params.grid, params.grid, s, params.sigma_px * s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let extent = params.grid as f64 * s;
    let half = 0.5 * params.separation_px * s;
    let mut frames = Vec::with_capacity(params.frames);
    let mut truth = Vec::with_capacity(params.frames);
    for _ in 0..params.frames {
        let cx = rng.random_range(0.25 * extent..0.75 * extent);
        let cy = rng.random_range(0.25 * extent..0.75 * extent);
        let angle = rng.random_range(0.0..std::f64::consts::PI);
        let (dy, dx) = angle.sin_cos();
        let sources = vec![
            Localization { x: cx - half * dx, y: cy - half * dy, intensity: params.intensity },
            Localization { x: cx + half * dx, y: cy + half * dy, intensity: params.intensity },
        ];
        let mu = AtomicMeasure::from_parts(
            &[params.intensity, params.intensity],
            &sources.iter().map(|l| ParameterPoint(vec![l.x, l.y])).collect::<Vec<_>>(),
        )?;
        let clean = apply_forward(&model, &mu)?;
        let noise = Normal::new(0.0, noise_sigma(&clean, params.snr_db)).expect("finite noise level");
        frames.push(clean.iter().map(|c| c + noise.sample(&mut rng)).collect());
        truth.push(sources);
    }
    let stack = FrameStack { grid_w: params.grid, grid_h: params.grid, frames };
    Ok(TwoSourceData { stack, truth, model })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowRankParams {
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    pub observed_fraction: f64,
    /// Largest absolute deviation of a rating from the midpoint 3.
    pub amplitude: f64,
}

impl Default for LowRankParams {
    fn default() -> Self {
        LowRankParams { rows: 50, cols: 40, rank: 3, observed_fraction: 0.3, amplitude: 1.5 }
    }
}

pub struct LowRankData {
    pub train: Vec<Rating>,
    pub test: Vec<Rating>,
    /// Full rows x cols rating matrix, row-major.
    pub full: Vec<f64>,
}

/// Ratings `3 + X` for a random rank-`rank` matrix `X`; a uniformly random
/// subset of entries is observed and the rest form the test split.
pub fn low_rank(params: &LowRankParams, seed: u64) -> Result<LowRankData> {
    let (n, m, k) = (params.rows, params.cols, params.rank);
    if n == 0 || m == 0 || k == 0 {
        return Err(Error::InvalidInput("rows, cols and rank must be positive".into()));
    }
    if !(params.observed_fraction > 0.0 && params.observed_fraction < 1.0) {
        return Err(Error::InvalidInput("observed_fraction must lie in (0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u: Vec<f64> = (0..n * k).map(|_| StandardNormal.sample(&mut rng)).collect();
    let v: Vec<f64> = (0..m * k).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut x: Vec<f64> = (0..n * m)
        .map(|idx| {
            let (i, j) = (idx / m, idx % m);
            (0..k).map(|r| u[i * k + r] * v[j * k + r]).sum()
        })
        .collect();
    let peak = x.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
    if peak > 0.0 {
        x.iter_mut().for_each(|e| *e *= params.amplitude / peak);
    }
    let full: Vec<f64> = x.iter().map(|e| 3.0 + e).collect();

    let mut order: Vec<usize> = (0..n * m).collect();
    order.shuffle(&mut rng);
    let n_train = ((params.observed_fraction * (n * m) as f64).round() as usize).clamp(1, n * m - 1);
    let mut observed = order[..n_train].to_vec();
    let mut held = order[n_train..].to_vec();
    observed.sort_unstable();
    held.sort_unstable();
    let to_rating = |idx: usize| Rating { user: idx / m, item: idx % m, rating: full[idx] };
    Ok(LowRankData {
        train: observed.into_iter().map(to_rating).collect(),
        test: held.into_iter().map(to_rating).collect(),
        full,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LtiParams {
    pub horizon: usize,
    pub t_train: usize,
    pub noise_std: f64,
}

impl Default for LtiParams {
    fn default() -> Self {
        LtiParams { horizon: 400, t_train: 300, noise_std: 0.0 }
    }
}

pub struct LtiData {
    pub io: IOSequence,
    pub truth: AtomicMeasure,
}

/// Two stable second-order modes driven by white Gaussian input.
pub fn lti(params: &LtiParams, seed: u64) -> Result<LtiData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u: Vec<f64> = (0..params.horizon).map(|_| StandardNormal.sample(&mut rng)).collect();
    let model = LtiModel::new(u.clone())?;
    let mut atom = |r: (f64, f64), a: (f64, f64)| -> ParameterPoint {
        let x0 = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let radius = rng.random_range(r.0..r.1);
        let angle = rng.random_range(a.0..a.1);
        let b = [rng.random_range(0.3..1.0), rng.random_range(-1.0..1.0)];
        ParameterPoint(vec![x0[0], x0[1], radius, angle, b[0], b[1]])
    };
    let slow = atom((0.85, 0.95), (0.3, 1.2));
    let fast = atom((0.6, 0.8), (1.6, 2.8));
    let truth = AtomicMeasure::from_parts(&[1.0, 0.7], &[slow, fast])?;
    let clean = apply_forward(&model, &truth)?;
    let y = if params.noise_std > 0.0 {
        let noise = Normal::new(0.0, params.noise_std).map_err(|e| Error::InvalidInput(e.to_string()))?;
        clean.iter().map(|c| c + noise.sample(&mut rng)).collect()
    } else {
        clean
    };
    Ok(LtiData { io: IOSequence::new(u, y, params.t_train)?, truth })
}

fn write_config(dir: &Path, config: &ExperimentConfig) -> Result<PathBuf> {
    let path = dir.join("config.json");
    write_text(&path, &(config.to_json() + "\n"))?;
    Ok(path)
}

fn all_variants() -> Vec<Variant> {
    vec![Variant::Adcg, Variant::CgmM, Variant::Gf]
}

/// Writes `frames.csv`, `truth.csv` and `config.json` into `dir`.
pub fn write_two_source(dir: &Path, params: &TwoSourceParams, seed: u64) -> Result<PathBuf> {
    let d = two_source(params, seed)?;
    data::write_frames(dir.join("frames.csv"), &d.stack)?;
    data::write_localizations(dir.join("truth.csv"), &d.truth)?;
    let problem = SuperresProblem {
        frames: "frames.csv".into(),
        truth: Some("truth.csv".into()),
        pixel_size: params.pixel_size,
        sigma: params.sigma_px * params.pixel_size,
        lmo_grid_factor: 1,
        lmo_polish_steps: 100,
        radii_nm: crate::bench::experiment::DEFAULT_RADII_NM.to_vec(),
    };
    let config = ExperimentConfig {
        problem: Problem::Superres(problem),
        solver: SolverSection::new(vec![Variant::Adcg, Variant::CgmM]),
        output_dir: "results".into(),
        workers: None,
        seed,
    };
    write_config(dir, &config)
}

/// Writes `train.csv`, `test.csv` and `config.json` into `dir`.
pub fn write_low_rank(dir: &Path, params: &LowRankParams, seed: u64) -> Result<PathBuf> {
    let d = low_rank(params, seed)?;
    data::write_ratings(dir.join("train.csv"), &d.train)?;
    data::write_ratings(dir.join("test.csv"), &d.test)?;
    let mut solver = SolverSection::new(all_variants());
    // Nuclear norm of the centered target bounds the mass it needs.
    let ratings = data::RatingsData::new(params.rows, params.cols, d.train.clone(), d.test.clone())?;
    solver.tau = Some(nuclear_norm_bound(&d.full, ratings.train_mean, params.rows, params.cols));
    solver.max_outer_iters = 25;
    let config = ExperimentConfig {
        problem: Problem::Matcomp(MatcompProblem {
            train: "train.csv".into(),
            test: "test.csv".into(),
            rows: params.rows,
            cols: params.cols,
        }),
        solver,
        output_dir: "results".into(),
        workers: None,
        seed,
    };
    write_config(dir, &config)
}

/// 1.5 times the nuclear norm of the full matrix minus `mean`.
pub fn nuclear_norm_bound(full: &[f64], mean: f64, rows: usize, cols: usize) -> f64 {
    let centered = nalgebra::DMatrix::from_row_iterator(rows, cols, full.iter().map(|x| x - mean));
    1.5 * centered.singular_values().sum()
}

/// Writes `io.csv`, `truth.json` and `config.json` into `dir`.
pub fn write_lti(dir: &Path, params: &LtiParams, seed: u64) -> Result<PathBuf> {
    let d = lti(params, seed)?;
    data::write_io(dir.join("io.csv"), &d.io.u, &d.io.y)?;
    write_text(&dir.join("truth.json"), &(d.truth.to_json() + "\n"))?;
    let mut solver = SolverSection::new(all_variants());
    solver.tau = Some(1.5 * d.truth.total_mass());
    solver.max_outer_iters = 10;
    let config = ExperimentConfig {
        problem: Problem::Sysid(SysidProblem {
            io: "io.csv".into(),
            t_train: params.t_train,
            oracle: LtiOracleParams::default(),
        }),
        solver,
        output_dir: "results".into(),
        workers: None,
        seed,
    };
    write_config(dir, &config)
}

/// Writes a dataset of the given kind with default parameters.
pub fn generate(kind: DatasetKind, dir: &Path, seed: u64) -> Result<PathBuf> {
    match kind {
        DatasetKind::Twosource => write_two_source(dir, &TwoSourceParams::default(), seed),
        DatasetKind::Lowrank => write_low_rank(dir, &LowRankParams::default(), seed),
        DatasetKind::Lti => write_lti(dir, &LtiParams::default(), seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_level_matches_snr() {
        let signal = vec![3.0; 100];
        let s = noise_sigma(&signal, 20.0);
        assert!((s - 0.3).abs() < 1e-12);
    }

    #[test]
    fn two_source_geometry() {
        let p = TwoSourceParams { frames: 3, grid: 16, ..Default::default() };
        let d = two_source(&p, 1).unwrap();
        assert_eq!(d.stack.frames.len(), 3);
        for pair in &d.truth {
            let sep = ((pair[0].x - pair[1].x).powi(2) + (pair[0].y - pair[1].y).powi(2)).sqrt();
            assert!((sep - 150.0).abs() < 1e-9);
        }
        let again = two_source(&p, 1).unwrap();
        assert_eq!(again.stack, d.stack);
    }

    #[test]
    fn low_rank_split_partitions_entries() {
        let p = LowRankParams::default();
        let d = low_rank(&p, 4).unwrap();
        assert_eq!(d.train.len(), 600);
        assert_eq!(d.train.len() + d.test.len(), 2000);
        assert!(d.full.iter().all(|r| (1.5..=4.5 + 1e-12).contains(r)));
        let centered = nalgebra::DMatrix::from_row_iterator(50, 40, d.full.iter().map(|x| x - 3.0));
        let sv = centered.singular_values();
        assert!(sv.iter().filter(|s| **s > 1e-9 * sv.max()).count() == 3);
    }

    #[test]
    fn lti_output_matches_truth() {
        let d = lti(&LtiParams::default(), 2).unwrap();
        assert_eq!(d.io.u.len(), 400);
        assert_eq!(d.truth.len(), 2);
        assert!(d.io.y.iter().all(|y| y.is_finite()));
    }
}
