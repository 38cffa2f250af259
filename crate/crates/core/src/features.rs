//! Linear value-function approximation `J̃(θ) = Φθ`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::mdp::StationaryDist;

/// Smallest admissible singular value of `Φ`.
pub const RANK_TOL: f64 = 1e-10;

/// An `S × L` feature matrix whose row `i` is `φ(i)ᵀ`.
///
/// Invariants: `L ≤ S`, full column rank, and `‖φ(i)‖₂ ≤ 1` for every state.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    phi: DMatrix<f64>,
    // Row-major copy so φ(i) is a contiguous slice in the simulator.
    rows: Vec<f64>,
}

impl FeatureMap {
    pub fn new(phi: DMatrix<f64>) -> Result<Self> {
        let (s, l) = phi.shape();
        if l == 0 || s == 0 {
            return Err(Error::Features("feature matrix must be non-empty".into()));
        }
        if l > s {
            return Err(Error::Features(format!("L = {l} exceeds S = {s}")));
        }
        if !linalg::all_finite(phi.iter()) {
            return Err(Error::Features("non-finite feature entry".into()));
        }
        for i in 0..s {
            let n = phi.row(i).norm();
            if n > 1.0 + 1e-12 {
                return Err(Error::Features(format!("row {i} has norm {n} > 1")));
            }
        }
        if let Some(col) = dependent_column(&phi) {
            return Err(Error::Features(format!("column {col} is linearly dependent on earlier columns")));
        }
        let smin = linalg::singular_values_desc(&phi).last().copied().unwrap_or(0.0);
        if smin <= RANK_TOL {
            return Err(Error::Features(format!("smallest singular value {smin:.3e} too small")));
        }
        Ok(Self::wrap(phi))
    }

    fn wrap(phi: DMatrix<f64>) -> Self {
        let rows = (0..phi.nrows()).flat_map(|i| phi.row(i).iter().copied().collect::<Vec<_>>()).collect();
        Self { phi, rows }
    }

    /// `Φ = I`, exact (tabular) representation.
    pub fn identity(s: usize) -> Self {
        Self::wrap(DMatrix::identity(s, s))
    }

    /// One-hot state aggregation: state `i` maps to group `i mod L`.
    pub fn aggregation(s: usize, l: usize) -> Result<Self> {
        Self::new(DMatrix::from_fn(s, l, |i, j| if i % l == j { 1.0 } else { 0.0 }))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn num_states(&self) -> usize {
        self.phi.nrows()
    }

    pub fn num_features(&self) -> usize {
        self.phi.ncols()
    }

    /// `φ(i)` as a contiguous vector.
    pub fn row(&self, i: usize) -> DVector<f64> {
        DVector::from_column_slice(self.phi_row(i))
    }

    /// `φ(i)` as a slice.
    pub fn phi_row(&self, i: usize) -> &[f64] {
        let l = self.num_features();
        &self.rows[i * l..(i + 1) * l]
    }

    /// `J̃(θ) = Φθ`.
    pub fn value_estimate(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        if theta.len() != self.num_features() {
            return Err(Error::Dimension(format!(
                "theta has length {}, expected {}",
                theta.len(),
                self.num_features()
            )));
        }
        Ok(&self.phi * theta)
    }

    /// Gram matrix `ΦᵀDΦ`.
    pub fn gram(&self, d: &StationaryDist) -> DMatrix<f64> {
        let dphi = DMatrix::from_fn(self.num_states(), self.num_features(), |i, j| d.pi()[i] * self.phi[(i, j)]);
        self.phi.transpose() * dphi
    }

    /// Least-squares weights `(ΦᵀDΦ)⁻¹ΦᵀD x`.
    pub fn projection_weights(&self, d: &StationaryDist, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(x.len(), self.num_states(), "vector")?;
        check_len(d.len(), self.num_states(), "stationary distribution")?;
        let dx = x.component_mul(d.pi());
        linalg::solve(&self.gram(d), &(self.phi.transpose() * dx))
            .map_err(|e| Error::Numerical(format!("singular Gram matrix: {e}")))
    }

    /// `Πx = Φ(ΦᵀDΦ)⁻¹ΦᵀD x`, the D-orthogonal projection onto span(Φ).
    pub fn project(&self, d: &StationaryDist, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.phi * self.projection_weights(d, x)?)
    }
}

fn check_len(got: usize, want: usize, what: &str) -> Result<()> {
    if got != want {
        return Err(Error::Dimension(format!("{what} has length {got}, expected {want}")));
    }
    Ok(())
}

/// Index of the first column lying (numerically) in the span of the earlier
/// ones, by modified Gram–Schmidt.
fn dependent_column(m: &DMatrix<f64>) -> Option<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for j in 0..m.ncols() {
        let col = m.column(j).into_owned();
        let scale = col.norm();
        let mut r = col;
        for q in &basis {
            let c = q.dot(&r);
            r -= q * c;
        }
        let rn = r.norm();
        if scale == 0.0 || rn <= 1e-10 * scale.max(1.0) {
            return Some(j);
        }
        basis.push(r / rn);
    }
    None
}

/// Global rescaling by the largest row norm, so `maxᵢ‖φ(i)‖ = 1`.
pub fn normalize_features(raw: &DMatrix<f64>) -> Result<FeatureMap> {
    if raw.nrows() == 0 || raw.ncols() == 0 {
        return Err(Error::Features("feature matrix must be non-empty".into()));
    }
    if let Some(col) = dependent_column(raw) {
        return Err(Error::Features(format!("column {col} is linearly dependent on earlier columns")));
    }
    let max_norm = (0..raw.nrows()).map(|i| raw.row(i).norm()).fold(0.0, f64::max);
    let mut phi = raw / max_norm;
    // Pin the maximal row to exactly unit norm despite rounding in the division.
    for i in 0..phi.nrows() {
        let n = phi.row(i).norm();
        if n > 1.0 {
            let fixed = phi.row(i) / n;
            phi.set_row(i, &fixed);
        }
    }
    FeatureMap::new(phi)
}

/// `‖x‖_D = √(Σ π(i) x(i)²)`.
pub fn weighted_norm(x: &DVector<f64>, d: &StationaryDist) -> f64 {
    assert_eq!(x.len(), d.len(), "weighted_norm: dimension mismatch");
    linalg::weighted_norm_raw(x.as_slice(), d.pi().as_slice())
}
