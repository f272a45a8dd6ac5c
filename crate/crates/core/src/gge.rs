//! Generalized Gibbs Ensemble built from the conserved joint-mode occupations.
//!
//! The density matrix is never formed; the ensemble is fully described by the
//! charges `<n'_k>` and their multipliers `lambda_k = ln((1 + n'_k) / n'_k)`.

use serde::{Serialize, Serializer};

use crate::bogoliubov::BogoliubovMap;
use crate::error::{QuenchError, Result};
use crate::model::FockExcitation;

/// `<n'_k> = sum_l beta[l,k]^2 + sum_j (alpha[j,k]^2 + beta[j,k]^2) n_j`.
pub fn conserved_charges(map: &BogoliubovMap, state: &FockExcitation) -> Vec<f64> {
    let n = state.as_f64();
    let size = map.size();
    (0..size)
        .map(|k| {
            let vacuum: f64 = (0..size).map(|l| map.beta[(l, k)].powi(2)).sum();
            let stimulated: f64 = (0..size)
                .map(|j| (map.alpha[(j, k)].powi(2) + map.beta[(j, k)].powi(2)) * n[j])
                .sum();
            vacuum + stimulated
        })
        .collect()
}

/// Lagrange multiplier; `+inf` for an empty mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lambda(pub f64);

impl Lambda {
    pub fn from_charge(charge: f64) -> Self {
        if charge > 0.0 {
            Lambda((1.0 / charge).ln_1p())
        } else {
            Lambda(f64::INFINITY)
        }
    }

    pub fn is_infinite(&self) -> bool {
        self.0.is_infinite()
    }

    /// Bose occupation `1 / (e^lambda - 1)`.
    pub fn occupation(&self) -> f64 {
        if self.is_infinite() {
            0.0
        } else {
            1.0 / self.0.exp_m1()
        }
    }
}

impl Serialize for Lambda {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GgeEnsemble {
    pub charges: Vec<f64>,
    pub lambdas: Vec<Lambda>,
}

pub fn build_gge(charges: &[f64]) -> Result<GgeEnsemble> {
    if let Some((k, c)) = charges.iter().enumerate().find(|(_, c)| !(**c >= 0.0)) {
        return Err(QuenchError::Consistency(format!(
            "charge of joint mode {} is {c}; charges must be non-negative",
            k + 1
        )));
    }
    Ok(GgeEnsemble {
        charges: charges.to_vec(),
        lambdas: charges.iter().map(|&c| Lambda::from_charge(c)).collect(),
    })
}

/// Disjoint-mode occupations in the ensemble: only the diagonal
/// `<c^dag c>` and `<c c^dag>` survive.
pub fn gge_expectations(map: &BogoliubovMap, ens: &GgeEnsemble) -> Vec<f64> {
    let size = map.size();
    (0..size)
        .map(|m| {
            (0..size)
                .map(|k| {
                    let q = ens.charges[k];
                    map.alpha[(m, k)].powi(2) * q + map.beta[(m, k)].powi(2) * (q + 1.0)
                })
                .sum()
        })
        .collect()
}

/// Stimulated-emission correction relative to the vacuum-polarization term.
///
/// Both terms are divided by the total lattice size `N + M`; the ratio
/// `delta_g` does not depend on that choice, the per-site densities do.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationReport {
    pub delta_g: Vec<f64>,
    /// `sum_l beta[l,k]^2 / (N+M)` per joint mode.
    pub vacuum_density: Vec<f64>,
    /// `sum_j (alpha[j,k]^2 + beta[j,k]^2) n_j / (N+M)` per joint mode.
    pub stimulated_density: Vec<f64>,
    /// Mode average of `vacuum_density`: total vacuum quanta per site.
    pub vacuum_term_per_site: f64,
    /// Mode average of `stimulated_density`.
    pub stimulated_term_per_site: f64,
    pub lattice_size: usize,
    pub normalization: &'static str,
}

pub fn deviation_delta_g(map: &BogoliubovMap, state: &FockExcitation) -> Result<DeviationReport> {
    let size = map.size();
    let norm = size as f64;
    let n = state.as_f64();
    let mut delta_g = Vec::with_capacity(size);
    let mut vacuum_density = Vec::with_capacity(size);
    let mut stimulated_density = Vec::with_capacity(size);
    for k in 0..size {
        let vacuum: f64 = (0..size).map(|l| map.beta[(l, k)].powi(2)).sum::<f64>() / norm;
        let stimulated: f64 = (0..size)
            .map(|j| (map.alpha[(j, k)].powi(2) + map.beta[(j, k)].powi(2)) * n[j])
            .sum::<f64>()
            / norm;
        if vacuum == 0.0 {
            if stimulated == 0.0 && state.is_vacuum() {
                delta_g.push(0.0);
            } else {
                return Err(QuenchError::DivisionByZero { mode: k + 1 });
            }
        } else {
            delta_g.push(stimulated / vacuum);
        }
        vacuum_density.push(vacuum);
        stimulated_density.push(stimulated);
    }
    Ok(DeviationReport {
        delta_g,
        vacuum_term_per_site: vacuum_density.iter().sum::<f64>() / norm,
        stimulated_term_per_site: stimulated_density.iter().sum::<f64>() / norm,
        vacuum_density,
        stimulated_density,
        lattice_size: size,
        normalization: "total lattice size N+M",
    })
}
