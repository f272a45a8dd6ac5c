//! Time evolution of the disjoint-mode occupations after the quench.
//!
//! In the Heisenberg picture `c_k(t) = c_k e^{-i w'_k t / hbar}`, so
//!
//! ```text
//! a_m(t) = sum_k alpha[m,k] e^{-i w'_k t/hbar} c_k + beta[m,k] e^{+i w'_k t/hbar} c_k^dag
//! ```
//!
//! and `<n_m(t)> = w_m(t)^dag G w_m(t)` with `w_m = (alpha[m,.] * phase, beta[m,.] * conj(phase))`
//! and `G = [[<c^dag c>, <c^dag c^dag>], [<c c>, <c c^dag>]]`. `G` is shared by all
//! modes and times, so each sample costs two dense products instead of the
//! quadruple sine sums.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::bogoliubov::{BogoliubovMap, CorrelationSet};
use crate::error::{QuenchError, Result};
use crate::model::QuenchSpec;

/// Occupations may dip below zero by at most this much from rounding.
pub const OCCUPATION_FLOOR: f64 = -1e-8;
/// Largest tolerated imaginary part of a computed occupation.
pub const IMAGINARY_RESIDUE_TOL: f64 = 1e-8;
const COMMUTATOR_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservableSeries {
    pub times: Vec<f64>,
    /// `n_expect[t][m]`
    pub n_expect: Vec<Vec<f64>>,
    pub e_left: Vec<f64>,
    pub e_right: Vec<f64>,
    /// `<H>` after the quench, constant in time.
    pub e_total_joint: f64,
    pub long_time_avg: Vec<f64>,
    pub max_imag_residue: f64,
    pub n_left: usize,
    pub disjoint_frequencies: Vec<f64>,
    pub hbar: f64,
}

impl ObservableSeries {
    pub fn modes(&self) -> usize {
        self.long_time_avg.len()
    }

    /// `(E_N, E_M)` evaluated on the long-time-average occupations.
    pub fn long_time_energies(&self) -> (f64, f64) {
        subsystem_energies(
            &self.long_time_avg,
            &self.disjoint_frequencies,
            self.n_left,
            self.hbar,
        )
    }

    /// Time series of a single mode occupation.
    pub fn mode(&self, m: usize) -> Vec<f64> {
        self.n_expect.iter().map(|n| n[m]).collect()
    }
}

pub fn subsystem_energies(
    occupations: &[f64],
    frequencies: &[f64],
    n_left: usize,
    hbar: f64,
) -> (f64, f64) {
    let energy = |range: std::ops::Range<usize>| -> f64 {
        range
            .map(|i| (occupations[i] + 0.5) * hbar * frequencies[i])
            .sum()
    };
    (energy(0..n_left), energy(n_left..occupations.len()))
}

/// Precomputed bilinear-form kernel for `<n_m(t)>`.
#[derive(Debug, Clone)]
pub struct OccupationKernel {
    alpha: DMatrix<f64>,
    beta: DMatrix<f64>,
    gram: DMatrix<f64>,
    joint_frequencies: Vec<f64>,
    hbar: f64,
}

impl OccupationKernel {
    pub fn new(map: &BogoliubovMap, corr: &CorrelationSet, hbar: f64) -> Result<Self> {
        let size = map.size();
        if corr.size() != size {
            return Err(QuenchError::Consistency(format!(
                "correlation set has {} modes, map has {}",
                corr.size(),
                size
            )));
        }
        corr.check_commutator(COMMUTATOR_TOL)?;
        let mut gram = DMatrix::zeros(2 * size, 2 * size);
        gram.view_mut((0, 0), (size, size)).copy_from(&corr.cdag_c);
        gram.view_mut((0, size), (size, size))
            .copy_from(&corr.cdag_cdag);
        gram.view_mut((size, 0), (size, size)).copy_from(&corr.c_c);
        gram.view_mut((size, size), (size, size))
            .copy_from(&corr.c_cdag);
        Ok(Self {
            alpha: map.alpha.clone(),
            beta: map.beta.clone(),
            gram,
            joint_frequencies: map.joint_frequencies.clone(),
            hbar,
        })
    }

    /// Complex `<n_m(t)>` for every disjoint mode.
    pub fn evaluate(&self, t: f64) -> Vec<Complex64> {
        let size = self.alpha.nrows();
        let (cos, sin): (Vec<f64>, Vec<f64>) = self
            .joint_frequencies
            .iter()
            .map(|w| {
                let energy = self.hbar * w;
                let phase = energy * t / self.hbar;
                (phase.cos(), phase.sin())
            })
            .unzip();
        // w = x + i y with phase e^{-i theta} on alpha and e^{+i theta} on beta
        let x = DMatrix::from_fn(size, 2 * size, |m, j| {
            if j < size {
                self.alpha[(m, j)] * cos[j]
            } else {
                self.beta[(m, j - size)] * cos[j - size]
            }
        });
        let y = DMatrix::from_fn(size, 2 * size, |m, j| {
            if j < size {
                -self.alpha[(m, j)] * sin[j]
            } else {
                self.beta[(m, j - size)] * sin[j - size]
            }
        });
        let gx = &x * &self.gram;
        let gy = &y * &self.gram;
        (0..size)
            .map(|m| {
                let re = gx.row(m).dot(&x.row(m)) + gy.row(m).dot(&y.row(m));
                // x^T G y - y^T G x, with the row form (xG)y - (yG)x
                let im = gx.row(m).dot(&y.row(m)) - gy.row(m).dot(&x.row(m));
                Complex64::new(re, im)
            })
            .collect()
    }

    /// Real occupations at `t`, with the largest imaginary residue.
    pub fn occupations(&self, t: f64) -> Result<(Vec<f64>, f64)> {
        let values = self.evaluate(t);
        let mut residue: f64 = 0.0;
        let mut out = Vec::with_capacity(values.len());
        for (m, v) in values.iter().enumerate() {
            residue = residue.max(v.im.abs());
            if v.im.abs() > IMAGINARY_RESIDUE_TOL * v.re.abs().max(1.0) {
                return Err(QuenchError::Consistency(format!(
                    "<n_{}({t})> has imaginary part {:.3e}",
                    m + 1,
                    v.im
                )));
            }
            if v.re < OCCUPATION_FLOOR {
                return Err(QuenchError::Consistency(format!(
                    "<n_{}({t})> = {:.3e} is negative",
                    m + 1,
                    v.re
                )));
            }
            out.push(v.re);
        }
        Ok((out, residue))
    }
}

pub fn evolve_occupations(
    spec: &QuenchSpec,
    map: &BogoliubovMap,
    corr: &CorrelationSet,
) -> Result<ObservableSeries> {
    if map.size() != spec.joint_size() || map.n_left != spec.n() {
        return Err(QuenchError::Consistency(format!(
            "map is for {} + {} modes, spec for {} + {}",
            map.n_left,
            map.size() - map.n_left,
            spec.n(),
            spec.m()
        )));
    }
    let hbar = spec.hbar();
    let kernel = OccupationKernel::new(map, corr, hbar)?;
    let times = spec.time_grid.times().to_vec();
    let samples = times
        .par_iter()
        .map(|&t| kernel.occupations(t))
        .collect::<Result<Vec<_>>>()?;

    let frequencies = &map.disjoint_frequencies;
    let n_left = spec.n();
    let mut n_expect = Vec::with_capacity(samples.len());
    let mut e_left = Vec::with_capacity(samples.len());
    let mut e_right = Vec::with_capacity(samples.len());
    let mut max_imag_residue: f64 = 0.0;
    for (n, residue) in samples {
        let (el, er) = subsystem_energies(&n, frequencies, n_left, hbar);
        e_left.push(el);
        e_right.push(er);
        n_expect.push(n);
        max_imag_residue = max_imag_residue.max(residue);
    }

    Ok(ObservableSeries {
        times,
        n_expect,
        e_left,
        e_right,
        e_total_joint: joint_energy(map, corr, hbar),
        long_time_avg: long_time_average(map, corr),
        max_imag_residue,
        n_left,
        disjoint_frequencies: frequencies.clone(),
        hbar,
    })
}

/// Diagonal-only limit of the occupation evolution.
pub fn long_time_average(map: &BogoliubovMap, corr: &CorrelationSet) -> Vec<f64> {
    let size = map.size();
    (0..size)
        .map(|m| {
            (0..size)
                .map(|k| {
                    map.alpha[(m, k)].powi(2) * corr.cdag_c[(k, k)]
                        + map.beta[(m, k)].powi(2) * corr.c_cdag[(k, k)]
                })
                .sum()
        })
        .collect()
}

/// `sum_k hbar w'_k (<c_k^dag c_k> + 1/2)`.
pub fn joint_energy(map: &BogoliubovMap, corr: &CorrelationSet, hbar: f64) -> f64 {
    map.joint_frequencies
        .iter()
        .enumerate()
        .map(|(k, w)| hbar * w * (corr.cdag_c[(k, k)] + 0.5))
        .sum()
}

/// Joint-mode correlators evolved to time `t`; complex in general.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolvedCorrelations {
    pub cdag_c: DMatrix<Complex64>,
    pub c_cdag: DMatrix<Complex64>,
    pub c_c: DMatrix<Complex64>,
    pub cdag_cdag: DMatrix<Complex64>,
}

impl EvolvedCorrelations {
    pub fn occupations(&self) -> Vec<f64> {
        self.cdag_c.diagonal().iter().map(|z| z.re).collect()
    }
}

pub fn evolve_correlations(
    corr: &CorrelationSet,
    joint_frequencies: &[f64],
    hbar: f64,
    t: f64,
) -> EvolvedCorrelations {
    let size = corr.size();
    let phase = |w: f64| {
        let energy = hbar * w;
        Complex64::from_polar(1.0, energy * t / hbar)
    };
    let w = joint_frequencies;
    let lift = |m: &DMatrix<f64>, f: &dyn Fn(usize, usize) -> Complex64| {
        DMatrix::from_fn(size, size, |l, k| f(l, k) * m[(l, k)])
    };
    EvolvedCorrelations {
        cdag_c: lift(&corr.cdag_c, &|l, k| phase(w[l] - w[k])),
        c_cdag: lift(&corr.c_cdag, &|l, k| phase(w[k] - w[l])),
        c_c: lift(&corr.c_c, &|l, k| phase(-(w[l] + w[k]))),
        cdag_cdag: lift(&corr.cdag_cdag, &|l, k| phase(w[l] + w[k])),
    }
}

/// Recurrence detection settings for the `E_M` fluctuation ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecurrenceConfig {
    pub threshold: f64,
    pub relaxation_skip: f64,
}

impl Default for RecurrenceConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            relaxation_skip: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluctuationSeries {
    pub times: Vec<f64>,
    /// `|E_M(t) - mean E_M| / |E_M(0) - mean E_M|`
    pub ratio: Vec<f64>,
    pub first_recurrence_time: Option<f64>,
    pub recurrence_threshold: f64,
    pub relaxation_skip: f64,
    pub e_right_mean: f64,
}

pub fn fluctuation_series(
    series: &ObservableSeries,
    config: RecurrenceConfig,
) -> Result<FluctuationSeries> {
    if !(config.threshold > 0.0 && config.threshold <= 1.0) {
        return Err(QuenchError::InvalidSpec(format!(
            "recurrence threshold must lie in (0, 1], got {}",
            config.threshold
        )));
    }
    if series.times.first() != Some(&0.0) {
        return Err(QuenchError::InvalidSpec(
            "series must start at t = 0".into(),
        ));
    }
    let (_, mean) = series.long_time_energies();
    let gap = (series.e_right[0] - mean).abs();
    if gap < 1e-12 {
        return Err(QuenchError::DegenerateInitial { gap });
    }
    let mut ratio: Vec<f64> = series
        .e_right
        .iter()
        .map(|e| (e - mean).abs() / gap)
        .collect();
    ratio[0] = 1.0;
    let first_recurrence_time = series
        .times
        .iter()
        .zip(&ratio)
        .find(|(&t, &r)| t > config.relaxation_skip && r >= config.threshold)
        .map(|(&t, _)| t);
    Ok(FluctuationSeries {
        times: series.times.clone(),
        ratio,
        first_recurrence_time,
        recurrence_threshold: config.threshold,
        relaxation_skip: config.relaxation_skip,
        e_right_mean: mean,
    })
}

/// Energy per site of each subsystem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerModeEnergy {
    pub times: Vec<f64>,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub left_average: f64,
    pub right_average: f64,
}

impl PerModeEnergy {
    pub fn average_gap(&self) -> f64 {
        (self.left_average - self.right_average).abs()
    }
}

pub fn per_mode_energy(series: &ObservableSeries, spec: &QuenchSpec) -> PerModeEnergy {
    let (n, m) = (spec.n() as f64, spec.m() as f64);
    let (left_mean, right_mean) = series.long_time_energies();
    PerModeEnergy {
        times: series.times.clone(),
        left: series.e_left.iter().map(|e| e / n).collect(),
        right: series.e_right.iter().map(|e| e / m).collect(),
        left_average: left_mean / n,
        right_average: right_mean / m,
    }
}

/// Uniform-grid time mean of every mode occupation over `[0, t_max]`.
pub fn time_mean_occupations(
    kernel: &OccupationKernel,
    t_max: f64,
    samples: usize,
) -> Result<Vec<f64>> {
    let dt = if samples > 1 {
        t_max / (samples - 1) as f64
    } else {
        0.0
    };
    let rows = (0..samples)
        .into_par_iter()
        .map(|i| kernel.occupations(i as f64 * dt).map(|(n, _)| n))
        .collect::<Result<Vec<_>>>()?;
    let size = rows.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; size];
    for row in &rows {
        for (acc, v) in mean.iter_mut().zip(row) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= samples as f64);
    Ok(mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bogoliubov::{build_bogoliubov, initial_correlations};
    use crate::model::{FockExcitation, TimeGrid};

    fn setup(
        n: usize,
        m: usize,
        state: FockExcitation,
    ) -> (QuenchSpec, BogoliubovMap, CorrelationSet) {
        let spec = QuenchSpec::standard(n, m, state)
            .unwrap()
            .with_time_grid(TimeGrid::uniform(200.0, 401).unwrap())
            .unwrap();
        let map = build_bogoliubov(&spec);
        let corr = initial_correlations(&map, &spec.initial_state);
        (spec, map, corr)
    }

    #[test]
    fn initial_time_reproduces_fock_state() {
        let state = FockExcitation::new(vec![0, 1, 2, 0, 0, 1, 0]);
        let (spec, map, corr) = setup(3, 4, state.clone());
        let series = evolve_occupations(&spec, &map, &corr).unwrap();
        for (n, expected) in series.n_expect[0].iter().zip(state.as_f64()) {
            assert!((n - expected).abs() < 1e-8);
        }
    }

    #[test]
    fn equal_chains_share_energy_in_vacuum() {
        let (spec, map, corr) = setup(4, 4, FockExcitation::vacuum(8));
        let series = evolve_occupations(&spec, &map, &corr).unwrap();
        for (l, r) in series.e_left.iter().zip(&series.e_right) {
            assert!((l - r).abs() < 1e-8);
        }
        let pm = per_mode_energy(&series, &spec);
        for (l, r) in pm.left.iter().zip(&pm.right) {
            assert!((l - r).abs() < 1e-8);
        }
    }

    #[test]
    fn identity_quench_stays_empty() {
        let freqs = QuenchSpec::vacuum(2, 3).unwrap().disjoint_frequencies();
        let map = BogoliubovMap::identity(freqs, 2);
        let corr = initial_correlations(&map, &FockExcitation::vacuum(5));
        assert!(long_time_average(&map, &corr).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn garbage_correlations_are_rejected() {
        let (spec, map, mut corr) = setup(2, 2, FockExcitation::vacuum(4));
        corr.c_cdag[(1, 1)] += 0.1;
        assert!(matches!(
            evolve_occupations(&spec, &map, &corr),
            Err(QuenchError::Consistency(_))
        ));
    }

    #[test]
    fn ratio_starts_at_one_and_stays_nonnegative() {
        let state = FockExcitation::excited(15, &[2, 3]).unwrap();
        let (spec, map, corr) = setup(5, 10, state);
        let series = evolve_occupations(&spec, &map, &corr).unwrap();
        let fl = fluctuation_series(&series, RecurrenceConfig::default()).unwrap();
        assert_eq!(fl.ratio[0], 1.0);
        assert!(fl.ratio.iter().all(|&r| r >= 0.0));
        if let Some(t) = fl.first_recurrence_time {
            assert!(t > 50.0);
            let idx = fl.times.iter().position(|&s| s == t).unwrap();
            assert!(fl.ratio[idx] >= 0.5);
            assert!(fl.times[..idx]
                .iter()
                .zip(&fl.ratio[..idx])
                .all(|(&s, &r)| s <= 50.0 || r < 0.5));
        }
    }

    #[test]
    fn equilibrium_start_is_degenerate() {
        let (spec, map, corr) = setup(2, 3, FockExcitation::vacuum(5));
        let mut series = evolve_occupations(&spec, &map, &corr).unwrap();
        let (_, mean) = series.long_time_energies();
        series.e_right[0] = mean;
        assert!(matches!(
            fluctuation_series(&series, RecurrenceConfig::default()),
            Err(QuenchError::DegenerateInitial { .. })
        ));
    }

    #[test]
    fn per_mode_averages_are_block_means() {
        let state = FockExcitation::excited(9, &[1]).unwrap();
        let (spec, map, corr) = setup(4, 5, state);
        let series = evolve_occupations(&spec, &map, &corr).unwrap();
        let pm = per_mode_energy(&series, &spec);
        let lta = long_time_average(&map, &corr);
        let w = &map.disjoint_frequencies;
        let left: f64 = (0..4).map(|i| (lta[i] + 0.5) * w[i]).sum::<f64>() / 4.0;
        let right: f64 = (4..9).map(|i| (lta[i] + 0.5) * w[i]).sum::<f64>() / 5.0;
        assert!((pm.left_average - left).abs() < 1e-14);
        assert!((pm.right_average - right).abs() < 1e-14);
    }

    #[test]
    fn joint_charges_do_not_drift() {
        let state = FockExcitation::excited(7, &[0, 4]).unwrap();
        let (_, map, corr) = setup(3, 4, state);
        let n0 = corr.occupations();
        for t in [0.0, 1.7, 93.0, 1e4] {
            let nt = evolve_correlations(&corr, &map.joint_frequencies, 1.0, t).occupations();
            for (a, b) in n0.iter().zip(&nt) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
