//! Phase-space covariance matrices through the quench.
//!
//! Layout is `(x_1..x_K, p_1..p_K)`, so `sigma = [[sigma_xx, sigma_xp], [sigma_xp^T, sigma_pp]]`.
//! Fock states are not Gaussian; only their second moments are handled here.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{QuenchError, Result};
use crate::model::{sine_transform, QuenchSpec};
use crate::scaling::least_squares_slope;

/// Slack on the `nu >= hbar/2` uncertainty bound.
pub const UNCERTAINTY_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CovarianceBasis {
    DisjointModes,
    Configuration,
    JointModes,
}

impl std::fmt::Display for CovarianceBasis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            CovarianceBasis::DisjointModes => "disjoint-normal-modes",
            CovarianceBasis::Configuration => "configuration",
            CovarianceBasis::JointModes => "joint-normal-modes",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    pub sigma: DMatrix<f64>,
    pub basis: CovarianceBasis,
}

impl CovarianceMatrix {
    pub fn modes(&self) -> usize {
        self.sigma.nrows() / 2
    }

    pub fn symmetry_defect(&self) -> f64 {
        (&self.sigma - self.sigma.transpose()).abs().max()
    }

    pub fn xx(&self) -> DMatrix<f64> {
        let k = self.modes();
        self.sigma.view((0, 0), (k, k)).into_owned()
    }

    pub fn xp(&self) -> DMatrix<f64> {
        let k = self.modes();
        self.sigma.view((0, k), (k, k)).into_owned()
    }

    pub fn pp(&self) -> DMatrix<f64> {
        let k = self.modes();
        self.sigma.view((k, k), (k, k)).into_owned()
    }

    /// Largest off-diagonal magnitude of the full `2K x 2K` matrix.
    pub fn max_off_diagonal(&self) -> f64 {
        max_off_diagonal(&self.sigma)
    }

    fn expect(&self, basis: CovarianceBasis) -> Result<()> {
        if self.basis != basis {
            return Err(QuenchError::Basis {
                expected: basis.to_string(),
                found: self.basis.to_string(),
            });
        }
        Ok(())
    }
}

fn max_off_diagonal(sigma: &DMatrix<f64>) -> f64 {
    let mut max: f64 = 0.0;
    for j in 0..sigma.ncols() {
        for i in 0..sigma.nrows() {
            if i != j {
                max = max.max(sigma[(i, j)].abs());
            }
        }
    }
    max
}

/// Second moments of a disjoint-mode Fock state: diagonal, `sigma_xp = 0`.
pub fn initial_covariance(spec: &QuenchSpec) -> CovarianceMatrix {
    let size = spec.joint_size();
    let (mass, hbar) = (spec.mass(), spec.hbar());
    let w = spec.disjoint_frequencies();
    let n = spec.initial_state.as_f64();
    let mut sigma = DMatrix::zeros(2 * size, 2 * size);
    for i in 0..size {
        let level = (n[i] + 0.5) * hbar;
        sigma[(i, i)] = level / (mass * w[i]);
        sigma[(size + i, size + i)] = level * mass * w[i];
    }
    CovarianceMatrix {
        sigma,
        basis: CovarianceBasis::DisjointModes,
    }
}

/// `diag(R, R) sigma diag(R, R)^T`.
pub fn conjugate(sigma: &DMatrix<f64>, rotation: &DMatrix<f64>) -> DMatrix<f64> {
    let k = rotation.nrows();
    let mut big = DMatrix::zeros(2 * k, 2 * k);
    big.view_mut((0, 0), (k, k)).copy_from(rotation);
    big.view_mut((k, k), (k, k)).copy_from(rotation);
    &big * sigma * big.transpose()
}

fn disjoint_transform(spec: &QuenchSpec) -> DMatrix<f64> {
    let (n, m, total) = (spec.n(), spec.m(), spec.joint_size());
    let mut s = DMatrix::zeros(total, total);
    s.view_mut((0, 0), (n, n)).copy_from(&sine_transform(n));
    s.view_mut((n, n), (m, m)).copy_from(&sine_transform(m));
    s
}

fn check_size(cov: &CovarianceMatrix, spec: &QuenchSpec) -> Result<()> {
    if cov.modes() != spec.joint_size() || cov.sigma.ncols() != cov.sigma.nrows() {
        return Err(QuenchError::Consistency(format!(
            "covariance has {} modes, spec has {}",
            cov.modes(),
            spec.joint_size()
        )));
    }
    Ok(())
}

/// Disjoint normal modes to site coordinates, `sigma -> S sigma S` with
/// `S = diag(S_N, S_M, S_N, S_M)`.
pub fn to_configuration(cov: &CovarianceMatrix, spec: &QuenchSpec) -> Result<CovarianceMatrix> {
    cov.expect(CovarianceBasis::DisjointModes)?;
    check_size(cov, spec)?;
    Ok(CovarianceMatrix {
        sigma: conjugate(&cov.sigma, &disjoint_transform(spec)),
        basis: CovarianceBasis::Configuration,
    })
}

/// Inverse of [`to_configuration`]; the transform is its own inverse.
pub fn to_disjoint_modes(cov: &CovarianceMatrix, spec: &QuenchSpec) -> Result<CovarianceMatrix> {
    cov.expect(CovarianceBasis::Configuration)?;
    check_size(cov, spec)?;
    Ok(CovarianceMatrix {
        sigma: conjugate(&cov.sigma, &disjoint_transform(spec)),
        basis: CovarianceBasis::DisjointModes,
    })
}

/// Site coordinates to joint normal modes, conjugation by the `(N+M)` sine transform.
pub fn to_joint_modes(cov: &CovarianceMatrix, spec: &QuenchSpec) -> Result<CovarianceMatrix> {
    cov.expect(CovarianceBasis::Configuration)?;
    check_size(cov, spec)?;
    Ok(CovarianceMatrix {
        sigma: conjugate(&cov.sigma, &sine_transform(spec.joint_size())),
        basis: CovarianceBasis::JointModes,
    })
}

pub fn from_joint_modes(cov: &CovarianceMatrix, spec: &QuenchSpec) -> Result<CovarianceMatrix> {
    cov.expect(CovarianceBasis::JointModes)?;
    check_size(cov, spec)?;
    Ok(CovarianceMatrix {
        sigma: conjugate(&cov.sigma, &sine_transform(spec.joint_size())),
        basis: CovarianceBasis::Configuration,
    })
}

/// Phase-space propagator of the joint modes,
/// `x(t) = cos(wt) x + sin(wt)/(m w) p`, `p(t) = -m w sin(wt) x + cos(wt) p`.
pub fn propagator(spec: &QuenchSpec, t: f64) -> DMatrix<f64> {
    let w = spec.joint_frequencies();
    let k = w.len();
    let mass = spec.mass();
    let mut u = DMatrix::zeros(2 * k, 2 * k);
    for (i, &wi) in w.iter().enumerate() {
        let (s, c) = (wi * t).sin_cos();
        u[(i, i)] = c;
        u[(i, k + i)] = s / (mass * wi);
        u[(k + i, i)] = -mass * wi * s;
        u[(k + i, k + i)] = c;
    }
    u
}

/// `sigma(t) = U_t sigma U_t^T` in the joint-mode basis.
pub fn evolve_covariance(
    cov: &CovarianceMatrix,
    spec: &QuenchSpec,
    t: f64,
) -> Result<CovarianceMatrix> {
    cov.expect(CovarianceBasis::JointModes)?;
    check_size(cov, spec)?;
    let u = propagator(spec, t);
    Ok(CovarianceMatrix {
        sigma: &u * &cov.sigma * u.transpose(),
        basis: CovarianceBasis::JointModes,
    })
}

/// Closed-form entries of `U_t sigma U_t^T`, with `a = sigma_xx(0)`,
/// `b = sigma_xp(0)`, `a~ = sigma_pp(0)` and `mu_i = m w_i`:
///
/// ```text
/// xx_ij = C_i C_j a_ij + C_i S_j b_ij / mu_j + S_i C_j b_ji / mu_i + S_i S_j a~_ij / (mu_i mu_j)
/// xp_ij = -mu_j C_i S_j a_ij + C_i C_j b_ij - (mu_j / mu_i) S_i S_j b_ji + S_i C_j a~_ij / mu_i
/// pp_ij = mu_i mu_j S_i S_j a_ij - mu_i S_i C_j b_ij - mu_j C_i S_j b_ji + C_i C_j a~_ij
/// ```
pub fn evolve_entrywise(
    cov: &CovarianceMatrix,
    spec: &QuenchSpec,
    t: f64,
) -> Result<CovarianceMatrix> {
    cov.expect(CovarianceBasis::JointModes)?;
    check_size(cov, spec)?;
    let w = spec.joint_frequencies();
    Ok(CovarianceMatrix {
        sigma: entrywise(&cov.sigma, &w, spec.mass(), t),
        basis: CovarianceBasis::JointModes,
    })
}

fn entrywise(sigma: &DMatrix<f64>, w: &[f64], mass: f64, t: f64) -> DMatrix<f64> {
    let k = w.len();
    let mu: Vec<f64> = w.iter().map(|wi| mass * wi).collect();
    let (s, c): (Vec<f64>, Vec<f64>) = w.iter().map(|wi| (wi * t).sin_cos()).unzip();
    let mut out = DMatrix::zeros(2 * k, 2 * k);
    for j in 0..k {
        for i in 0..k {
            let a = sigma[(i, j)];
            let b_ij = sigma[(i, k + j)];
            let b_ji = sigma[(j, k + i)];
            let at = sigma[(k + i, k + j)];
            let xx = c[i] * c[j] * a
                + c[i] * s[j] * b_ij / mu[j]
                + s[i] * c[j] * b_ji / mu[i]
                + s[i] * s[j] * at / (mu[i] * mu[j]);
            let xp = -mu[j] * c[i] * s[j] * a + c[i] * c[j] * b_ij
                - mu[j] / mu[i] * s[i] * s[j] * b_ji
                + s[i] * c[j] * at / mu[i];
            let pp = mu[i] * mu[j] * s[i] * s[j] * a
                - mu[i] * s[i] * c[j] * b_ij
                - mu[j] * c[i] * s[j] * b_ji
                + c[i] * c[j] * at;
            out[(i, j)] = xx;
            out[(i, k + j)] = xp;
            out[(k + j, i)] = xp;
            out[(k + i, k + j)] = pp;
        }
    }
    out
}

/// Symplectic spectrum (ascending, one value per mode) via Cholesky:
/// the eigenvalues of `L^T Omega^T sigma Omega L` are the squares, each twice.
pub fn symplectic_eigenvalues(sigma: &DMatrix<f64>) -> Result<Vec<f64>> {
    let k = sigma.nrows() / 2;
    let sym = (sigma + sigma.transpose()) * 0.5;
    let chol = sym.cholesky().ok_or_else(|| {
        QuenchError::Consistency("covariance matrix is not positive definite".into())
    })?;
    let l = chol.l();
    let mut omega = DMatrix::zeros(2 * k, 2 * k);
    for i in 0..k {
        omega[(i, k + i)] = 1.0;
        omega[(k + i, i)] = -1.0;
    }
    let a = l.transpose() * &omega * l;
    let gram = a.transpose() * &a;
    let mut squares: Vec<f64> = gram.symmetric_eigen().eigenvalues.iter().copied().collect();
    squares.sort_by(|x, y| x.total_cmp(y));
    Ok(squares
        .chunks(2)
        .map(|pair| (0.5 * (pair[0] + pair[1])).max(0.0).sqrt())
        .collect())
}

/// Whether every symplectic eigenvalue clears `hbar/2` (less [`UNCERTAINTY_SLACK`]).
pub fn satisfies_uncertainty(cov: &CovarianceMatrix, hbar: f64) -> Result<bool> {
    let nu = symplectic_eigenvalues(&cov.sigma)?;
    Ok(nu.iter().all(|&v| v >= 0.5 * hbar - UNCERTAINTY_SLACK))
}

/// Mode occupations `(mu sigma_xx + sigma_pp / mu) / (2 hbar) - 1/2` with `mu = m w`.
pub fn mode_occupations(
    sigma: &DMatrix<f64>,
    frequencies: &[f64],
    mass: f64,
    hbar: f64,
) -> Vec<f64> {
    let k = frequencies.len();
    frequencies
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let mu = mass * w;
            (mu * sigma[(i, i)] + sigma[(k + i, k + i)] / mu) / (2.0 * hbar) - 0.5
        })
        .collect()
}

/// Fock-state covariance carried to the joint normal modes at `t = 0`.
pub fn joint_initial_covariance(spec: &QuenchSpec) -> Result<CovarianceMatrix> {
    let conf = to_configuration(&initial_covariance(spec), spec)?;
    to_joint_modes(&conf, spec)
}

/// Lazily evolved joint-mode covariance on the uniform grid `t_i = i dt`.
pub fn covariance_series(
    cov: &CovarianceMatrix,
    spec: &QuenchSpec,
    dt: f64,
) -> Result<impl Iterator<Item = (f64, DMatrix<f64>)>> {
    cov.expect(CovarianceBasis::JointModes)?;
    check_size(cov, spec)?;
    let w = spec.joint_frequencies();
    let mass = spec.mass();
    let sigma = cov.sigma.clone();
    Ok((0usize..).map(move |i| {
        let t = i as f64 * dt;
        (t, entrywise(&sigma, &w, mass, t))
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThermalFormConfig {
    /// Averaging windows `T`; each needs samples up to `2T`.
    pub windows: Vec<f64>,
    /// Off-diagonal time averages must stay below `residual_constant / T`.
    pub residual_constant: f64,
    /// Initial `|sigma_xp|` entries above this are flagged.
    pub xp_tolerance: f64,
}

impl Default for ThermalFormConfig {
    fn default() -> Self {
        Self {
            windows: vec![100.0, 200.0, 400.0, 800.0, 1600.0],
            residual_constant: 10.0,
            xp_tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThermalFormReport {
    pub windows: Vec<f64>,
    /// Largest off-diagonal time average over all windows in `[T, 2T]`.
    pub residuals: Vec<f64>,
    /// Least-squares slope of `ln residual` against `ln T`.
    pub decay_slope: f64,
    /// Largest off-diagonal entry of the average over the longest window.
    pub max_off_diagonal: f64,
    /// Occupations read off the diagonal of the longest-window average.
    pub occupations: Vec<f64>,
    /// Mode pairs `(i, j)` (1-based) with nonzero initial `sigma_xp`.
    pub xp_violations: Vec<(usize, usize)>,
    pub pass: bool,
}

/// Checks that the time-averaged covariance approaches a diagonal, GGE-like form.
///
/// `series` yields `(t, sigma(t))` on a uniform grid starting at 0 (see
/// [`covariance_series`]). Averages are plain Riemann means over the grid.
pub fn thermal_form_check<I>(
    series: I,
    frequencies: &[f64],
    mass: f64,
    hbar: f64,
    config: &ThermalFormConfig,
) -> Result<ThermalFormReport>
where
    I: IntoIterator<Item = (f64, DMatrix<f64>)>,
{
    let mut windows = config.windows.clone();
    windows.sort_by(|a, b| a.total_cmp(b));
    if windows.is_empty() || windows[0] <= 0.0 {
        return Err(QuenchError::InvalidSpec(
            "thermal check needs positive windows".into(),
        ));
    }
    let horizon = 2.0 * windows[windows.len() - 1];
    let longest = windows[windows.len() - 1];

    let mut iter = series.into_iter();
    let (t0, first) = iter
        .next()
        .ok_or_else(|| QuenchError::InvalidSpec("empty covariance series".into()))?;
    if t0 != 0.0 {
        return Err(QuenchError::InvalidSpec(
            "covariance series must start at t = 0".into(),
        ));
    }
    let k = first.nrows() / 2;
    let mut xp_violations = Vec::new();
    for i in 0..k {
        for j in 0..k {
            if first[(i, k + j)].abs() > config.xp_tolerance {
                xp_violations.push((i + 1, j + 1));
            }
        }
    }

    let mut sum = first;
    let mut count = 1usize;
    let mut residuals = vec![0.0f64; windows.len()];
    let mut longest_average: Option<DMatrix<f64>> = None;
    for (t, sigma) in iter {
        if t > horizon + 1e-9 {
            break;
        }
        sum += sigma;
        count += 1;
        let mut running: Option<f64> = None;
        for (w, res) in windows.iter().zip(residuals.iter_mut()) {
            if t >= *w - 1e-9 && t <= 2.0 * w + 1e-9 {
                let r = *running.get_or_insert_with(|| max_off_diagonal(&sum) / count as f64);
                *res = res.max(r);
            }
        }
        if longest_average.is_none() && t >= longest - 1e-9 {
            longest_average = Some(&sum / count as f64);
        }
    }
    let average = longest_average.ok_or_else(|| {
        QuenchError::InvalidSpec(format!("series ends before the longest window {longest}"))
    })?;

    let logs: Vec<(f64, f64)> = windows
        .iter()
        .zip(&residuals)
        .map(|(w, r)| (w.ln(), r.max(f64::MIN_POSITIVE).ln()))
        .collect();
    let decay_slope = least_squares_slope(&logs);
    let within_bound = windows
        .iter()
        .zip(&residuals)
        .all(|(w, r)| *r <= config.residual_constant / w);

    Ok(ThermalFormReport {
        max_off_diagonal: max_off_diagonal(&average),
        occupations: mode_occupations(&average, frequencies, mass, hbar),
        windows,
        residuals,
        decay_slope,
        pass: within_bound && xp_violations.is_empty(),
        xp_violations,
    })
}
