//! Chains, quench definitions and fixed-end normal modes.
//!
//! Mode indices are 0-based in code; file formats and docs count from 1.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{QuenchError, Result};

/// A uniform harmonic chain with fixed ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub size: usize,
    pub mass: f64,
    pub omega0: f64,
    pub hbar: f64,
}

impl ChainSpec {
    /// Chain of `size` sites in natural units (m = omega0 = hbar = 1).
    pub fn new(size: usize) -> Result<Self> {
        Self::with_constants(size, 1.0, 1.0, 1.0)
    }

    pub fn with_constants(size: usize, mass: f64, omega0: f64, hbar: f64) -> Result<Self> {
        let chain = Self {
            size,
            mass,
            omega0,
            hbar,
        };
        chain.validate()?;
        Ok(chain)
    }

    pub fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(QuenchError::InvalidChain("size must be at least 1".into()));
        }
        for (name, v) in [
            ("mass", self.mass),
            ("omega0", self.omega0),
            ("hbar", self.hbar),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(QuenchError::InvalidChain(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }

    fn same_constants(&self, other: &ChainSpec) -> bool {
        self.mass == other.mass && self.omega0 == other.omega0 && self.hbar == other.hbar
    }
}

/// Occupations of the pre-quench (disjoint) normal modes: left chain modes
/// first, then right chain modes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FockExcitation(Vec<u32>);

impl FockExcitation {
    pub fn new(occupations: Vec<u32>) -> Self {
        Self(occupations)
    }

    pub fn vacuum(modes: usize) -> Self {
        Self(vec![0; modes])
    }

    /// Vacuum with one quantum in each listed mode (0-based, repeats allowed).
    pub fn excited(modes: usize, excited: &[usize]) -> Result<Self> {
        let mut occ = vec![0; modes];
        for &m in excited {
            if m >= modes {
                return Err(QuenchError::InvalidSpec(format!(
                    "mode {} out of range for {} modes",
                    m + 1,
                    modes
                )));
            }
            occ[m] += 1;
        }
        Ok(Self(occ))
    }

    pub fn occupations(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_vacuum(&self) -> bool {
        self.0.iter().all(|&n| n == 0)
    }

    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&n| n as f64).collect()
    }
}

/// Sample times for observables. Strictly increasing and starting at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid(Vec<f64>);

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        match times.first() {
            Some(0.0) => {}
            _ => {
                return Err(QuenchError::InvalidSpec(
                    "time grid must start at t = 0".into(),
                ))
            }
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(QuenchError::InvalidSpec(
                "time grid contains non-finite values".into(),
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(QuenchError::InvalidSpec(
                "time grid must be strictly increasing".into(),
            ));
        }
        Ok(Self(times))
    }

    /// `samples` equally spaced points on `[0, t_max]`, endpoints included.
    pub fn uniform(t_max: f64, samples: usize) -> Result<Self> {
        if samples == 0 {
            return Err(QuenchError::InvalidSpec(
                "time grid needs at least one sample".into(),
            ));
        }
        if samples == 1 {
            return Self::new(vec![0.0]);
        }
        if !(t_max.is_finite() && t_max > 0.0) {
            return Err(QuenchError::InvalidSpec(format!(
                "t_max must be positive, got {t_max}"
            )));
        }
        let dt = t_max / (samples - 1) as f64;
        Self::new((0..samples).map(|i| i as f64 * dt).collect())
    }

    pub fn times(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self((0..=2000).map(|i| i as f64).collect())
    }
}

/// Two chains of sizes N (left) and M (right) joined by a single bond at t = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuenchSpec {
    pub left: ChainSpec,
    pub right: ChainSpec,
    pub initial_state: FockExcitation,
    pub time_grid: TimeGrid,
}

impl QuenchSpec {
    pub fn new(
        left: ChainSpec,
        right: ChainSpec,
        initial_state: FockExcitation,
        time_grid: TimeGrid,
    ) -> Result<Self> {
        let spec = Self {
            left,
            right,
            initial_state,
            time_grid,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Unit-constant chains of sizes `n` and `m` with the default time grid.
    pub fn standard(n: usize, m: usize, initial_state: FockExcitation) -> Result<Self> {
        Self::new(
            ChainSpec::new(n)?,
            ChainSpec::new(m)?,
            initial_state,
            TimeGrid::default(),
        )
    }

    pub fn vacuum(n: usize, m: usize) -> Result<Self> {
        Self::standard(n, m, FockExcitation::vacuum(n + m))
    }

    pub fn with_state(&self, initial_state: FockExcitation) -> Result<Self> {
        Self::new(self.left, self.right, initial_state, self.time_grid.clone())
    }

    pub fn with_time_grid(&self, time_grid: TimeGrid) -> Result<Self> {
        Self::new(self.left, self.right, self.initial_state.clone(), time_grid)
    }

    pub fn validate(&self) -> Result<()> {
        self.left.validate()?;
        self.right.validate()?;
        if !self.left.same_constants(&self.right) {
            return Err(QuenchError::InvalidSpec(
                "left and right chains must share mass, omega0 and hbar".into(),
            ));
        }
        if self.initial_state.len() != self.joint_size() {
            return Err(QuenchError::InvalidSpec(format!(
                "initial state has {} occupations, expected N + M = {}",
                self.initial_state.len(),
                self.joint_size()
            )));
        }
        // re-check in case the grid was deserialized without going through TimeGrid::new
        TimeGrid::new(self.time_grid.times().to_vec())?;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.left.size
    }

    pub fn m(&self) -> usize {
        self.right.size
    }

    pub fn joint_size(&self) -> usize {
        self.left.size + self.right.size
    }

    pub fn mass(&self) -> f64 {
        self.left.mass
    }

    pub fn omega0(&self) -> f64 {
        self.left.omega0
    }

    pub fn hbar(&self) -> f64 {
        self.left.hbar
    }

    pub fn joint_chain(&self) -> ChainSpec {
        ChainSpec {
            size: self.joint_size(),
            ..self.left
        }
    }

    /// Frequencies of the disjoint modes, left chain then right chain.
    pub fn disjoint_frequencies(&self) -> Vec<f64> {
        let mut w = normal_modes(&self.left).frequencies;
        w.extend(normal_modes(&self.right).frequencies);
        w
    }

    pub fn joint_frequencies(&self) -> Vec<f64> {
        normal_modes(&self.joint_chain()).frequencies
    }
}

/// Frequencies and sine transform of a fixed-end chain.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalModeBasis {
    pub omega0: f64,
    pub frequencies: Vec<f64>,
    /// Symmetric orthogonal sine transform, `S[l, k] = sqrt(2/(K+1)) sin(pi l k / (K+1))`.
    pub transform: DMatrix<f64>,
}

impl NormalModeBasis {
    pub fn size(&self) -> usize {
        self.frequencies.len()
    }
}

pub fn mode_frequency(omega0: f64, k: usize, size: usize) -> f64 {
    2.0 * omega0 * (PI * k as f64 / (2.0 * (size + 1) as f64)).sin().abs()
}

/// The `K x K` discrete sine transform matrix.
pub fn sine_transform(size: usize) -> DMatrix<f64> {
    let norm = (2.0 / (size + 1) as f64).sqrt();
    let denom = (size + 1) as f64;
    DMatrix::from_fn(size, size, |i, j| {
        norm * (PI * ((i + 1) * (j + 1)) as f64 / denom).sin()
    })
}

pub fn normal_modes(chain: &ChainSpec) -> NormalModeBasis {
    let frequencies = (1..=chain.size)
        .map(|k| mode_frequency(chain.omega0, k, chain.size))
        .collect();
    NormalModeBasis {
        omega0: chain.omega0,
        frequencies,
        transform: sine_transform(chain.size),
    }
}

/// `|omega_k - omega_j|` through the sine-cosine product identity.
pub fn beat_frequencies(basis: &NormalModeBasis) -> DMatrix<f64> {
    let k_total = basis.size();
    let omega0 = basis.omega0;
    let denom = 4.0 * (k_total + 1) as f64;
    DMatrix::from_fn(k_total, k_total, |i, j| {
        let (k, l) = ((i + 1) as f64, (j + 1) as f64);
        4.0 * omega0 * ((PI * (k - l) / denom).sin() * (PI * (k + l) / denom).cos()).abs()
    })
}

/// Stiffness matrix of a fixed-end chain: `m omega0^2 tridiag(-1, 2, -1)`.
pub fn stiffness_matrix(chain: &ChainSpec) -> DMatrix<f64> {
    let k = chain.mass * chain.omega0 * chain.omega0;
    DMatrix::from_fn(chain.size, chain.size, |i, j| {
        if i == j {
            2.0 * k
        } else if i.abs_diff(j) == 1 {
            -k
        } else {
            0.0
        }
    })
}

/// Stiffness of the disjoint Hamiltonian plus the coupling bond, as a quadratic
/// form on the joint coordinates.
pub fn quenched_stiffness(spec: &QuenchSpec) -> DMatrix<f64> {
    let (n, total) = (spec.n(), spec.joint_size());
    let mut k = DMatrix::zeros(total, total);
    k.view_mut((0, 0), (n, n))
        .copy_from(&stiffness_matrix(&spec.left));
    k.view_mut((n, n), (spec.m(), spec.m()))
        .copy_from(&stiffness_matrix(&spec.right));
    // H_int = -m omega0^2 q_N q_{N+1}
    let coupling = spec.mass() * spec.omega0() * spec.omega0();
    k[(n - 1, n)] -= coupling;
    k[(n, n - 1)] -= coupling;
    k
}

/// Max entrywise difference between the quenched stiffness and that of the
/// joint chain. Zero for a valid spec.
pub fn joint_hamiltonian_check(spec: &QuenchSpec) -> f64 {
    let joint = stiffness_matrix(&spec.joint_chain());
    (quenched_stiffness(spec) - joint).abs().max()
}
