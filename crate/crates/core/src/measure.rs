//! Atomic measures over a parameter box and the forward operator.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::solver::ForwardModel;
use crate::{Error, Result};

/// A point in a model's parameter space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterPoint(pub Vec<f64>);

impl ParameterPoint {
    pub fn new(coords: Vec<f64>) -> Self {
        ParameterPoint(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl std::ops::Deref for ParameterPoint {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ParameterPoint {
    fn from(v: Vec<f64>) -> Self {
        ParameterPoint(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub w: f64,
    pub theta: ParameterPoint,
}

/// Finite nonnegative combination of point masses, stored in insertion order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AtomicMeasure {
    pub atoms: Vec<Atom>,
}

impl AtomicMeasure {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a measure from parallel weight and point lists.
    pub fn from_parts(weights: &[f64], points: &[ParameterPoint]) -> Result<Self> {
        if weights.len() != points.len() {
            return Err(Error::DimensionMismatch { expected: points.len(), got: weights.len() });
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0)) {
            return Err(Error::InvalidInput(format!("negative or non-finite weight {w}")));
        }
        let atoms = weights
            .iter()
            .zip(points)
            .map(|(&w, theta)| Atom { w, theta: theta.clone() })
            .collect();
        Ok(AtomicMeasure { atoms })
    }

    pub fn push(&mut self, w: f64, theta: ParameterPoint) {
        self.atoms.push(Atom { w, theta });
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.w).sum()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.w).collect()
    }

    pub fn points(&self) -> Vec<ParameterPoint> {
        self.atoms.iter().map(|a| a.theta.clone()).collect()
    }

    /// Multiset union: atoms of `other` appended after ours.
    pub fn union(&self, other: &AtomicMeasure) -> AtomicMeasure {
        let mut atoms = self.atoms.clone();
        atoms.extend(other.atoms.iter().cloned());
        AtomicMeasure { atoms }
    }

    pub fn scaled(&self, c: f64) -> AtomicMeasure {
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom { w: a.w * c, theta: a.theta.clone() })
            .collect();
        AtomicMeasure { atoms }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("measure serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidInput(format!("measure json: {e}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub y: Vec<f64>,
}

impl Observation {
    pub fn new(y: Vec<f64>) -> Self {
        Observation { y }
    }

    pub fn dim(&self) -> usize {
        self.y.len()
    }
}

/// `Phi mu = sum_i w_i psi(theta_i)`.
pub fn apply_forward(model: &dyn ForwardModel, mu: &AtomicMeasure) -> Result<Vec<f64>> {
    let mut out = vec![0.0; model.output_dim()];
    for atom in &mu.atoms {
        model.check_point(&atom.theta)?;
        let psi = model.psi(&atom.theta);
        for (o, p) in out.iter_mut().zip(&psi) {
            *o += atom.w * p;
        }
    }
    Ok(out)
}

/// `Phi mu - y`.
pub fn residual(model: &dyn ForwardModel, mu: &AtomicMeasure, obs: &Observation) -> Result<Vec<f64>> {
    if obs.dim() != model.output_dim() {
        return Err(Error::DimensionMismatch { expected: model.output_dim(), got: obs.dim() });
    }
    let mut r = apply_forward(model, mu)?;
    for (ri, yi) in r.iter_mut().zip(&obs.y) {
        *ri -= yi;
    }
    Ok(r)
}

/// d x m matrix whose columns are `psi(theta_i)`.
pub fn forward_matrix(model: &dyn ForwardModel, points: &[ParameterPoint]) -> DMatrix<f64> {
    let d = model.output_dim();
    let mut a = DMatrix::zeros(d, points.len());
    for (j, theta) in points.iter().enumerate() {
        let psi = model.psi(theta);
        a.column_mut(j).copy_from_slice(&psi);
    }
    a
}

/// Drops atoms whose weight is at most `tol`.
pub fn prune_zero_weights(mu: &AtomicMeasure, tol: f64) -> AtomicMeasure {
    AtomicMeasure { atoms: mu.atoms.iter().filter(|a| a.w > tol).cloned().collect() }
}

/// Merges atoms closer than `tol` in box-normalized coordinates, summing
/// their weights. The first occurrence keeps its position.
pub fn merge_duplicates(model: &dyn ForwardModel, mu: &AtomicMeasure, tol: f64) -> AtomicMeasure {
    let mut out: Vec<Atom> = Vec::with_capacity(mu.len());
    for atom in &mu.atoms {
        match out.iter_mut().find(|a| normalized_distance(model, &a.theta, &atom.theta) < tol) {
            Some(existing) => existing.w += atom.w,
            None => out.push(atom.clone()),
        }
    }
    AtomicMeasure { atoms: out }
}

/// Euclidean distance after mapping every coordinate of the box to [0, 1].
pub fn normalized_distance(model: &dyn ForwardModel, a: &[f64], b: &[f64]) -> f64 {
    let bounds = model.bounds();
    a.iter()
        .zip(b)
        .zip(bounds)
        .map(|((x, y), (lo, hi))| {
            let width = hi - lo;
            let scale = if width > 0.0 { width } else { 1.0 };
            ((x - y) / scale).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

/// Reduces the support to at most `d + 1` atoms without changing the
/// forward image or the total mass. The result reweights a subset of the
/// input atoms.
///
/// Each pass takes a null vector `gamma` of the stacked `(psi(theta_i); 1)`
/// matrix and moves the weights along `-gamma` until the first weight hits
/// zero (smallest ratio, lowest index on ties).
pub fn caratheodory_prune(model: &dyn ForwardModel, mu: &AtomicMeasure) -> Result<AtomicMeasure> {
    let d = model.output_dim();
    let mut atoms: Vec<Atom> = mu.atoms.iter().filter(|a| a.w > 0.0).cloned().collect();
    if let Some(a) = mu.atoms.iter().find(|a| !(a.w >= 0.0)) {
        return Err(Error::InvalidInput(format!("negative weight {}", a.w)));
    }
    if atoms.len() <= d + 1 {
        return Ok(AtomicMeasure { atoms });
    }
    let mut columns: Vec<Vec<f64>> = atoms.iter().map(|a| model.psi(&a.theta)).collect();

    while atoms.len() > d + 1 {
        let m = atoms.len();
        // Square m x m, rows d+1..m are zero padding so the full V is returned.
        let mut stacked = DMatrix::<f64>::zeros(m, m);
        for (j, col) in columns.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                stacked[(i, j)] = *v;
            }
            stacked[(d, j)] = 1.0;
        }
        let svd = stacked.clone().svd(false, true);
        let v_t = svd.v_t.as_ref().ok_or_else(|| Error::NullSpace("svd produced no V".into()))?;
        let (k_min, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (k, &s)| if s < acc.1 { (k, s) } else { acc });
        let mut gamma: Vec<f64> = v_t.row(k_min).iter().copied().collect();

        let s_max = svd.singular_values.max();
        let image = &stacked * nalgebra::DVector::from_column_slice(&gamma);
        if !(image.norm() <= 1e-8 * s_max.max(1.0)) {
            return Err(Error::NullSpace(format!("residual {:.3e}", image.norm())));
        }

        // Deterministic sign: largest-magnitude entry positive.
        let lead = gamma.iter().copied().fold(0.0_f64, |acc, g| if g.abs() > acc.abs() { g } else { acc });
        if lead < 0.0 {
            gamma.iter_mut().for_each(|g| *g = -*g);
        }

        let g_tol = 1e-12 * crate::util::norm_inf(&gamma);
        let mut best: Option<(usize, f64)> = None;
        for (i, (&g, atom)) in gamma.iter().zip(&atoms).enumerate() {
            if g > g_tol {
                let ratio = atom.w / g;
                if best.is_none_or(|(_, r)| ratio < r) {
                    best = Some((i, ratio));
                }
            }
        }
        let (hit, step) = best.ok_or_else(|| Error::NullSpace("direction has no positive entry".into()))?;

        for (atom, g) in atoms.iter_mut().zip(&gamma) {
            atom.w = (atom.w - step * g).max(0.0);
        }
        atoms[hit].w = 0.0;

        let keep: Vec<bool> = atoms.iter().map(|a| a.w > 0.0).collect();
        let mut it = keep.iter();
        atoms.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        columns.retain(|_| *it.next().unwrap());
    }
    Ok(AtomicMeasure { atoms })
}
