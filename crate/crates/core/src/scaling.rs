//! Size sweeps of the GGE deviation and subsystem energy balance.

use serde::Serialize;

use crate::bogoliubov::{build_bogoliubov, initial_correlations};
use crate::dynamics::{long_time_average, subsystem_energies};
use crate::error::{QuenchError, Result};
use crate::gge::deviation_delta_g;
use crate::model::{FockExcitation, QuenchSpec};

/// Ordinary least-squares slope of `y` against `x`.
pub fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Slope of `ln y` against `ln x`; non-positive values are rejected.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 || x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return None;
    }
    let pts: Vec<(f64, f64)> = x.iter().zip(y).map(|(a, b)| (a.ln(), b.ln())).collect();
    Some(least_squares_slope(&pts))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingPoint {
    pub n: usize,
    pub m: usize,
    pub lattice_size: usize,
    pub occupations: Vec<u32>,
    /// Mode average of the GGE deviation.
    pub mean_delta_g: f64,
    pub max_delta_g: f64,
    /// Total vacuum quanta per site, `sum_lk beta[l,k]^2 / (N+M)`.
    pub beta_density: f64,
    pub stimulated_density: f64,
    /// `|E_N / N - E_M / M|` on the long-time-average occupations.
    pub per_mode_energy_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub points: Vec<ScalingPoint>,
    /// Log-log slope of `mean_delta_g` against the lattice size.
    pub delta_g_slope: Option<f64>,
    pub beta_density_slope: Option<f64>,
    /// Relative change of `beta_density` between the two largest sizes.
    pub beta_density_top_change: Option<f64>,
    pub energy_gap_slope: Option<f64>,
}

pub fn scaling_point(n: usize, m: usize, state: &FockExcitation) -> Result<ScalingPoint> {
    let spec = QuenchSpec::standard(n, m, state.clone())?;
    let map = build_bogoliubov(&spec);
    let report = deviation_delta_g(&map, state)?;
    let size = report.delta_g.len() as f64;
    let corr = initial_correlations(&map, state);
    let avg = long_time_average(&map, &corr);
    let (el, er) = subsystem_energies(&avg, &map.disjoint_frequencies, n, spec.hbar());
    Ok(ScalingPoint {
        n,
        m,
        lattice_size: n + m,
        occupations: state.occupations().to_vec(),
        mean_delta_g: report.delta_g.iter().sum::<f64>() / size,
        max_delta_g: report.delta_g.iter().copied().fold(0.0, f64::max),
        beta_density: report.vacuum_term_per_site * size,
        stimulated_density: report.stimulated_term_per_site * size,
        per_mode_energy_gap: (el / n as f64 - er / m as f64).abs(),
    })
}

/// Runs [`scaling_point`] for every `(N, M, state)` entry, in order.
pub fn scaling_sweep(entries: &[(usize, usize, FockExcitation)]) -> Result<ScalingReport> {
    if entries.is_empty() {
        return Err(QuenchError::InvalidSpec("sweep list is empty".into()));
    }
    let points = entries
        .iter()
        .map(|(n, m, s)| scaling_point(*n, *m, s))
        .collect::<Result<Vec<_>>>()?;
    let sizes: Vec<f64> = points.iter().map(|p| p.lattice_size as f64).collect();
    let column = |f: fn(&ScalingPoint) -> f64| points.iter().map(f).collect::<Vec<f64>>();
    let density = column(|p| p.beta_density);
    let top = match density.len() {
        0 | 1 => None,
        k => Some(((density[k - 1] - density[k - 2]) / density[k - 2]).abs()),
    };
    Ok(ScalingReport {
        delta_g_slope: loglog_slope(&sizes, &column(|p| p.mean_delta_g)),
        beta_density_slope: loglog_slope(&sizes, &density),
        beta_density_top_change: top,
        energy_gap_slope: loglog_slope(&sizes, &column(|p| p.per_mode_energy_gap)),
        points,
    })
}
