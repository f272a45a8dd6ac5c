//! Bogoliubov map between the disjoint-chain modes `a` and the joint-chain
//! modes `c`:
//!
//! ```text
//! a_l = sum_k alpha[l,k] c_k + beta[l,k] c_k^dag
//! c_k = sum_l alpha[l,k] a_l - beta[l,k] a_l^dag
//! ```
//!
//! with `alpha = O * cosh(gamma)`, `beta = O * sinh(gamma)` (elementwise),
//! `O = diag(S_N, S_M) * S_{N+M}` the mode overlap and
//! `exp(gamma[l,k]) = sqrt(omega_l / omega'_k)`. Everything is real.

use nalgebra::{DMatrix, DVector};

use crate::error::{QuenchError, Result};
use crate::model::{sine_transform, FockExcitation, QuenchSpec};

/// Condition number of `alpha` above which the Gaussian vacuum relation is
/// considered meaningless.
pub const SINGULAR_ALPHA_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct BogoliubovMap {
    pub alpha: DMatrix<f64>,
    pub beta: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub overlap: DMatrix<f64>,
    /// Pre-quench frequencies (left chain modes, then right chain modes).
    pub disjoint_frequencies: Vec<f64>,
    /// Post-quench joint-chain frequencies.
    pub joint_frequencies: Vec<f64>,
    /// Number of left-chain modes (N).
    pub n_left: usize,
}

pub fn build_bogoliubov(spec: &QuenchSpec) -> BogoliubovMap {
    let (n, m, total) = (spec.n(), spec.m(), spec.joint_size());
    let mut disjoint_transform = DMatrix::zeros(total, total);
    disjoint_transform
        .view_mut((0, 0), (n, n))
        .copy_from(&sine_transform(n));
    disjoint_transform
        .view_mut((n, n), (m, m))
        .copy_from(&sine_transform(m));
    let overlap = disjoint_transform * sine_transform(total);

    BogoliubovMap::from_overlap(
        overlap,
        spec.disjoint_frequencies(),
        spec.joint_frequencies(),
        n,
    )
}

impl BogoliubovMap {
    /// Assemble the map from an orthogonal mode overlap and the two spectra.
    pub fn from_overlap(
        overlap: DMatrix<f64>,
        disjoint_frequencies: Vec<f64>,
        joint_frequencies: Vec<f64>,
        n_left: usize,
    ) -> Self {
        let size = overlap.nrows();
        let gamma = DMatrix::from_fn(size, size, |l, k| {
            0.5 * (disjoint_frequencies[l] / joint_frequencies[k]).ln()
        });
        let alpha = overlap.zip_map(&gamma, |o, g| o * g.cosh());
        let beta = overlap.zip_map(&gamma, |o, g| o * g.sinh());
        Self {
            alpha,
            beta,
            gamma,
            overlap,
            disjoint_frequencies,
            joint_frequencies,
            n_left,
        }
    }

    /// A map whose two mode bases coincide: `alpha = I`, `beta = 0`.
    pub fn identity(frequencies: Vec<f64>, n_left: usize) -> Self {
        let size = frequencies.len();
        Self::from_overlap(
            DMatrix::identity(size, size),
            frequencies.clone(),
            frequencies,
            n_left,
        )
    }

    pub fn size(&self) -> usize {
        self.alpha.nrows()
    }

    /// `(max|alpha alpha^T - beta beta^T - I|, max|alpha beta^T - beta alpha^T|)`.
    pub fn symplectic_defect(&self) -> (f64, f64) {
        let size = self.size();
        let a = &self.alpha;
        let b = &self.beta;
        let norm = a * a.transpose() - b * b.transpose() - DMatrix::<f64>::identity(size, size);
        let cross = a * b.transpose() - b * a.transpose();
        (norm.abs().max(), cross.abs().max())
    }

    /// Coefficients `(A, B)` of the inverse map `c = A a + B a^dag`.
    pub fn inverse_coefficients(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.alpha.transpose(), -self.beta.transpose())
    }

    /// Vacuum-polarization occupancy of each joint mode, `sum_l beta[l,k]^2`.
    pub fn vacuum_polarization(&self) -> Vec<f64> {
        self.beta
            .column_iter()
            .map(|col| col.norm_squared())
            .collect()
    }
}

/// Symmetric matrix `F` with `|0>_N (x) |0>_M ~ exp(-F_lk c_l^dag c_k^dag / 2)|0>_{N+M}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FMatrix {
    pub f: DMatrix<f64>,
}

impl FMatrix {
    pub fn symmetry_defect(&self) -> f64 {
        (&self.f - self.f.transpose()).abs().max()
    }

    pub fn spectral_radius(&self) -> f64 {
        let sym = (&self.f + self.f.transpose()) * 0.5;
        sym.symmetric_eigen().eigenvalues.amax()
    }

    /// `<0|0>` of the unnormalized Gaussian, `det(I - F^2)^(-1/2)`.
    pub fn vacuum_norm_squared(&self) -> f64 {
        let size = self.f.nrows();
        let sym = (&self.f + self.f.transpose()) * 0.5;
        let det = (DMatrix::<f64>::identity(size, size) - &sym * &sym).determinant();
        det.powf(-0.5)
    }
}

/// Solves `alpha F = beta`, which makes every `a_i` annihilate the Gaussian.
pub fn f_matrix(map: &BogoliubovMap) -> Result<FMatrix> {
    let singular = map.alpha.singular_values();
    let (smax, smin) = (singular.max(), singular.min());
    let condition = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if !(condition <= SINGULAR_ALPHA_CONDITION) {
        return Err(QuenchError::SingularAlpha { condition });
    }
    let f = map
        .alpha
        .clone()
        .lu()
        .solve(&map.beta)
        .ok_or(QuenchError::SingularAlpha { condition })?;
    let fm = FMatrix { f };
    let radius = fm.spectral_radius();
    if radius >= 1.0 {
        return Err(QuenchError::Consistency(format!(
            "F has spectral radius {radius} >= 1; the Gaussian is not normalizable"
        )));
    }
    Ok(fm)
}

/// The four quadratic correlators of a set of bosonic modes.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSet {
    /// `<c_l^dag c_k>`
    pub cdag_c: DMatrix<f64>,
    /// `<c_l c_k^dag>`
    pub c_cdag: DMatrix<f64>,
    /// `<c_l c_k>`
    pub c_c: DMatrix<f64>,
    /// `<c_l^dag c_k^dag>`
    pub cdag_cdag: DMatrix<f64>,
}

impl CorrelationSet {
    /// Correlators of a product Fock state in its own mode basis.
    pub fn fock(occupations: &[f64]) -> Self {
        let size = occupations.len();
        let n = DVector::from_column_slice(occupations);
        Self {
            cdag_c: DMatrix::from_diagonal(&n),
            c_cdag: DMatrix::from_diagonal(&n.add_scalar(1.0)),
            c_c: DMatrix::zeros(size, size),
            cdag_cdag: DMatrix::zeros(size, size),
        }
    }

    pub fn size(&self) -> usize {
        self.cdag_c.nrows()
    }

    /// `max|<c c^dag> - <c^dag c>^T - I|`.
    pub fn commutator_defect(&self) -> f64 {
        let size = self.size();
        (&self.c_cdag - self.cdag_c.transpose() - DMatrix::<f64>::identity(size, size))
            .abs()
            .max()
    }

    pub fn check_commutator(&self, tol: f64) -> Result<()> {
        let defect = self.commutator_defect();
        if defect.is_nan() || defect > tol {
            return Err(QuenchError::Consistency(format!(
                "correlation set violates [c, c^dag] = 1 by {defect:.3e}"
            )));
        }
        Ok(())
    }

    pub fn occupations(&self) -> Vec<f64> {
        self.cdag_c.diagonal().iter().copied().collect()
    }

    /// Correlators of `d = A e + B e^dag`, given those of `e`.
    pub fn transform(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Self {
        let (at, bt) = (a.transpose(), b.transpose());
        let sandwich = |x: &DMatrix<f64>, m: &DMatrix<f64>, y: &DMatrix<f64>| x * m * y;
        Self {
            cdag_c: sandwich(a, &self.cdag_c, &at)
                + sandwich(a, &self.cdag_cdag, &bt)
                + sandwich(b, &self.c_c, &at)
                + sandwich(b, &self.c_cdag, &bt),
            c_cdag: sandwich(a, &self.c_cdag, &at)
                + sandwich(a, &self.c_c, &bt)
                + sandwich(b, &self.cdag_cdag, &at)
                + sandwich(b, &self.cdag_c, &bt),
            c_c: sandwich(a, &self.c_c, &at)
                + sandwich(a, &self.c_cdag, &bt)
                + sandwich(b, &self.cdag_c, &at)
                + sandwich(b, &self.cdag_cdag, &bt),
            cdag_cdag: sandwich(a, &self.cdag_cdag, &at)
                + sandwich(a, &self.cdag_c, &bt)
                + sandwich(b, &self.c_cdag, &at)
                + sandwich(b, &self.c_c, &bt),
        }
    }

    pub fn max_abs_diff(&self, other: &CorrelationSet) -> f64 {
        [
            (&self.cdag_c - &other.cdag_c).abs().max(),
            (&self.c_cdag - &other.c_cdag).abs().max(),
            (&self.c_c - &other.c_c).abs().max(),
            (&self.cdag_cdag - &other.cdag_cdag).abs().max(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Joint-mode correlators in a disjoint-mode Fock state.
pub fn initial_correlations(map: &BogoliubovMap, state: &FockExcitation) -> CorrelationSet {
    let (a, b) = map.inverse_coefficients();
    CorrelationSet::fock(&state.as_f64()).transform(&a, &b)
}

/// Disjoint-mode correlators given joint-mode ones (the forward map).
pub fn disjoint_correlations(map: &BogoliubovMap, joint: &CorrelationSet) -> CorrelationSet {
    joint.transform(&map.alpha, &map.beta)
}
