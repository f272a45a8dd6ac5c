//! One preset, end to end: model, Bogoliubov map, then each requested analysis.

use quenchlab_core::bogoliubov::{build_bogoliubov, f_matrix, initial_correlations, BogoliubovMap};
use quenchlab_core::covariance::{
    covariance_series, evolve_entrywise, joint_initial_covariance, mode_occupations,
    satisfies_uncertainty, symplectic_eigenvalues, thermal_form_check, ThermalFormConfig,
};
use quenchlab_core::dynamics::{
    evolve_occupations, fluctuation_series, long_time_average, per_mode_energy, OccupationKernel,
    RecurrenceConfig,
};
use quenchlab_core::fock::{
    delocalization_count, expand_initial_state, oracle_correlators, oracle_correlators_with,
    oracle_occupation_series, TruncatedBasis,
};
use quenchlab_core::gge::{
    build_gge, conserved_charges, deviation_delta_g, gge_expectations, Lambda,
};
use quenchlab_core::model::{ChainSpec, FockExcitation, QuenchSpec};
use quenchlab_core::scaling::scaling_sweep;
use quenchlab_core::QuenchError;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{Analysis, ExperimentPreset};
use crate::error::CliError;
use crate::output::{fmt, numbered, OutputDir};

/// Largest joint chain the Fock oracle accepts.
pub const ORACLE_MAX_MODES: usize = 6;
pub const ORACLE_DEFAULT_CUTOFF: u8 = 8;
pub const ORACLE_DEFAULT_ORDER: usize = 14;
pub const DELOCALIZATION_DEFAULT_CUTOFF: u8 = 4;
pub const DELOCALIZATION_DEFAULT_ORDER: usize = 1;

#[derive(Debug, Clone, Default)]
pub struct RunFlags {
    pub dump_bogoliubov: bool,
    /// Overrides every preset's delocalization floor.
    pub floor: Option<f64>,
}

pub fn run_preset(
    preset: &ExperimentPreset,
    flags: &RunFlags,
    out: &mut OutputDir,
) -> Result<(), CliError> {
    let spec = &preset.spec;
    let map = build_bogoliubov(spec);
    if flags.dump_bogoliubov {
        out.matrix("alpha.csv", &map.alpha)?;
        out.matrix("beta.csv", &map.beta)?;
        out.matrix("f_matrix.csv", &f_matrix(&map)?.f)?;
    }
    for analysis in &preset.analyses {
        match analysis {
            Analysis::Dynamics => dynamics(preset, &map, out)?,
            Analysis::Gge => gge(spec, &map, out)?,
            Analysis::Covariance => covariance(preset, out)?,
            Analysis::FockOracle => fock_oracle(preset, &map, out)?,
            Analysis::Delocalization => delocalization(preset, flags, out)?,
            Analysis::Sweep => sweep(preset, out)?,
        }
    }
    Ok(())
}

fn time_rows<'a>(
    times: &'a [f64],
    columns: impl Fn(usize) -> Vec<f64> + 'a,
) -> impl Iterator<Item = Vec<String>> + 'a {
    times.iter().enumerate().map(move |(i, &t)| {
        std::iter::once(fmt(t))
            .chain(columns(i).into_iter().map(fmt))
            .collect()
    })
}

fn header(first: &[&str], modes: Option<(&str, usize)>, last: &[&str]) -> Vec<String> {
    let mut h: Vec<String> = first.iter().map(|s| s.to_string()).collect();
    if let Some((prefix, k)) = modes {
        h.extend(numbered(prefix, k));
    }
    h.extend(last.iter().map(|s| s.to_string()));
    h
}

fn dynamics(
    preset: &ExperimentPreset,
    map: &BogoliubovMap,
    out: &mut OutputDir,
) -> Result<(), CliError> {
    let spec = &preset.spec;
    let corr = initial_correlations(map, &spec.initial_state);
    let series = evolve_occupations(spec, map, &corr)?;
    let k = series.modes();
    out.csv(
        "dynamics.csv",
        &header(
            &["t"],
            Some(("n_", k)),
            &["E_N", "E_M", "E_N_plus_E_M", "E_total_joint"],
        ),
        time_rows(&series.times, |i| {
            let mut row = series.n_expect[i].clone();
            row.extend([
                series.e_left[i],
                series.e_right[i],
                series.e_left[i] + series.e_right[i],
                series.e_total_joint,
            ]);
            row
        }),
    )?;

    let per_site = per_mode_energy(&series, spec);
    out.csv(
        "per_mode_energy.csv",
        &header(&["t", "E_N_per_site", "E_M_per_site"], None, &[]),
        time_rows(&per_site.times, |i| {
            vec![per_site.left[i], per_site.right[i]]
        }),
    )?;

    let config = RecurrenceConfig {
        threshold: preset.options.recurrence_threshold,
        relaxation_skip: preset.options.relaxation_skip,
    };
    let fluctuation = match fluctuation_series(&series, config) {
        Ok(f) => {
            out.csv(
                "fluctuation.csv",
                &header(&["t", "ratio"], None, &[]),
                time_rows(&f.times, |i| vec![f.ratio[i]]),
            )?;
            json!({
                "first_recurrence_time": f.first_recurrence_time,
                "recurrence_threshold": f.recurrence_threshold,
                "relaxation_skip": f.relaxation_skip,
                "e_right_mean": f.e_right_mean,
            })
        }
        Err(QuenchError::DegenerateInitial { gap }) => json!({
            "skipped": "E_M starts at its long-time mean",
            "gap": gap,
        }),
        Err(e) => return Err(e.into()),
    };

    let (e_left_avg, e_right_avg) = series.long_time_energies();
    let charges = conserved_charges(map, &spec.initial_state);
    let gge_n = gge_expectations(map, &build_gge(&charges)?);
    out.json(
        "dynamics_summary.json",
        &json!({
            "modes": k,
            "samples": series.times.len(),
            "long_time_avg": series.long_time_avg,
            "gge_n": gge_n,
            "E_N_long_time": e_left_avg,
            "E_M_long_time": e_right_avg,
            "E_total_joint": series.e_total_joint,
            "max_imag_residue": series.max_imag_residue,
            "E_N_per_site_long_time": per_site.left_average,
            "E_M_per_site_long_time": per_site.right_average,
            "fluctuation": fluctuation,
        }),
    )
}

fn gge(spec: &QuenchSpec, map: &BogoliubovMap, out: &mut OutputDir) -> Result<(), CliError> {
    let corr = initial_correlations(map, &spec.initial_state);
    let charges = conserved_charges(map, &spec.initial_state);
    let ensemble = build_gge(&charges)?;
    let gge_n = gge_expectations(map, &ensemble);
    let long_time = long_time_average(map, &corr);
    let mismatch = gge_n
        .iter()
        .zip(&long_time)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let deviation = deviation_delta_g(map, &spec.initial_state)?;
    let lambdas: Vec<&Lambda> = ensemble.lambdas.iter().collect();
    out.json(
        "gge.json",
        &json!({
            "charges": ensemble.charges,
            "lambdas": lambdas,
            "gge_n": gge_n,
            "long_time_avg": long_time,
            "max_gge_vs_long_time": mismatch,
            "delta_g": deviation.delta_g,
            "vacuum_term_per_site": deviation.vacuum_term_per_site,
            "stimulated_term_per_site": deviation.stimulated_term_per_site,
            "normalization": deviation.normalization,
        }),
    )
}

fn covariance(preset: &ExperimentPreset, out: &mut OutputDir) -> Result<(), CliError> {
    let spec = &preset.spec;
    let joint = joint_initial_covariance(spec)?;
    let freqs = spec.joint_frequencies();
    let (mass, hbar) = (spec.mass(), spec.hbar());

    let snapshots = spec
        .time_grid
        .times()
        .par_iter()
        .map(|&t| evolve_entrywise(&joint, spec, t))
        .collect::<Result<Vec<_>, QuenchError>>()?;
    let k = freqs.len();
    out.csv(
        "covariance.csv",
        &header(&["t"], Some(("n_joint_", k)), &["max_off_diagonal"]),
        time_rows(spec.time_grid.times(), |i| {
            let mut row = mode_occupations(&snapshots[i].sigma, &freqs, mass, hbar);
            row.push(snapshots[i].max_off_diagonal());
            row
        }),
    )?;

    let mut config = ThermalFormConfig::default();
    if let Some(w) = &preset.options.windows {
        config.windows = w.clone();
    }
    let series = covariance_series(&joint, spec, preset.options.covariance_dt)?;
    let report = thermal_form_check(series, &freqs, mass, hbar, &config)?;
    let nu = symplectic_eigenvalues(&joint.sigma)?;
    out.json(
        "covariance.json",
        &json!({
            "basis": joint.basis.to_string(),
            "dt": preset.options.covariance_dt,
            "config": config,
            "thermal_form": report,
            "symplectic_eigenvalues": nu,
            "uncertainty_ok": satisfies_uncertainty(&joint, hbar)?,
            "note": "second moments only; Fock states are not Gaussian",
        }),
    )
}

fn fock_oracle(
    preset: &ExperimentPreset,
    map: &BogoliubovMap,
    out: &mut OutputDir,
) -> Result<(), CliError> {
    let spec = &preset.spec;
    let k = spec.joint_size();
    if k > ORACLE_MAX_MODES {
        return Err(CliError::Config(format!(
            "fock-oracle supports N + M <= {ORACLE_MAX_MODES}, got {k}"
        )));
    }
    let cutoff = preset.options.cutoff.unwrap_or(ORACLE_DEFAULT_CUTOFF);
    let order = preset.options.order.unwrap_or(ORACLE_DEFAULT_ORDER);
    let basis = TruncatedBasis::new(k, cutoff, preset.options.max_total)?;
    let f = f_matrix(map)?;
    let state = expand_initial_state(spec, map, &f, order, &basis)?;

    let times = spec.time_grid.times();
    let oracle = oracle_occupation_series(&state, map, spec.hbar(), times);
    let corr = initial_correlations(map, &spec.initial_state);
    let kernel = OccupationKernel::new(map, &corr, spec.hbar())?;
    let analytic = times
        .par_iter()
        .map(|&t| kernel.occupations(t).map(|(n, _)| n))
        .collect::<Result<Vec<_>, QuenchError>>()?;
    let max_diff = oracle
        .iter()
        .flatten()
        .zip(analytic.iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    out.csv(
        "fock_oracle.csv",
        &header(&["t"], Some(("n_", k)), &["max_abs_diff"]),
        time_rows(times, |i| {
            let mut row = oracle[i].clone();
            row.push(
                oracle[i]
                    .iter()
                    .zip(&analytic[i])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max),
            );
            row
        }),
    )?;

    let correlators = match oracle_correlators(&state) {
        Ok(c) => json!({ "max_abs_diff": c.max_abs_diff(&corr) }),
        Err(e @ QuenchError::CutoffExceeded(_)) => json!({
            "ladder_check": e.to_string(),
            "max_abs_diff_unchecked": oracle_correlators_with(&state, f64::INFINITY)?.max_abs_diff(&corr),
        }),
        Err(e) => return Err(e.into()),
    };
    out.json(
        "fock_oracle.json",
        &json!({
            "cutoff": cutoff,
            "order": order,
            "max_total": preset.options.max_total,
            "support": state.len(),
            "leakage": state.leakage,
            "projection_loss": state.projection_loss,
            "max_occupation_diff": max_diff,
            "correlators": correlators,
        }),
    )
}

#[derive(Serialize)]
struct DelocalizationRow {
    n: usize,
    m: usize,
    occupations: String,
    support: usize,
    count: usize,
    leakage: f64,
}

fn occupation_label(state: &FockExcitation) -> String {
    state
        .occupations()
        .iter()
        .map(u32::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

fn resized(
    spec: &QuenchSpec,
    n: usize,
    m: usize,
    state: FockExcitation,
) -> Result<QuenchSpec, QuenchError> {
    let chain = |size| ChainSpec::with_constants(size, spec.mass(), spec.omega0(), spec.hbar());
    QuenchSpec::new(chain(n)?, chain(m)?, state, spec.time_grid.clone())
}

fn delocalization(
    preset: &ExperimentPreset,
    flags: &RunFlags,
    out: &mut OutputDir,
) -> Result<(), CliError> {
    let floor = flags.floor.unwrap_or(preset.options.floor);
    if !(floor > 0.0) {
        return Err(CliError::Config(format!(
            "floor must be positive, got {floor}"
        )));
    }
    let cutoff = preset
        .options
        .cutoff
        .unwrap_or(DELOCALIZATION_DEFAULT_CUTOFF);
    let order = preset.options.order.unwrap_or(DELOCALIZATION_DEFAULT_ORDER);
    let entries: Vec<(usize, usize, FockExcitation)> = if preset.sweep.is_empty() {
        let s = &preset.spec;
        vec![(s.n(), s.m(), s.initial_state.clone())]
    } else {
        preset.sweep.clone()
    };
    let mut rows = Vec::with_capacity(entries.len());
    for (n, m, state) in entries {
        let spec = resized(&preset.spec, n, m, state.clone())?;
        let map = build_bogoliubov(&spec);
        let f = f_matrix(&map)?;
        let basis = TruncatedBasis::new(n + m, cutoff, preset.options.max_total)?;
        let expanded = expand_initial_state(&spec, &map, &f, order, &basis)?;
        rows.push(DelocalizationRow {
            n,
            m,
            occupations: occupation_label(&state),
            support: expanded.len(),
            count: delocalization_count(&expanded, floor),
            leakage: expanded.leakage,
        });
    }
    out.csv(
        "delocalization.csv",
        &header(
            &["N", "M", "occupations", "support", "count", "leakage"],
            None,
            &[],
        ),
        rows.iter().map(|r| {
            vec![
                r.n.to_string(),
                r.m.to_string(),
                r.occupations.clone(),
                r.support.to_string(),
                r.count.to_string(),
                fmt(r.leakage),
            ]
        }),
    )?;
    out.json(
        "delocalization.json",
        &json!({ "floor": floor, "cutoff": cutoff, "order": order, "rows": rows }),
    )
}

fn sweep(preset: &ExperimentPreset, out: &mut OutputDir) -> Result<(), CliError> {
    let report = scaling_sweep(&preset.sweep)?;
    out.csv(
        "sweep.csv",
        &header(
            &[
                "N",
                "M",
                "lattice_size",
                "mean_delta_g",
                "max_delta_g",
                "beta_density",
                "stimulated_density",
                "per_mode_energy_gap",
            ],
            None,
            &[],
        ),
        report.points.iter().map(|p| {
            vec![
                p.n.to_string(),
                p.m.to_string(),
                p.lattice_size.to_string(),
                fmt(p.mean_delta_g),
                fmt(p.max_delta_g),
                fmt(p.beta_density),
                fmt(p.stimulated_density),
                fmt(p.per_mode_energy_gap),
            ]
        }),
    )?;
    out.json("sweep.json", &report)
}
