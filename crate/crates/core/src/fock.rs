//! Brute-force truncated Fock space of the joint modes.
//!
//! A pre-quench eigenstate is written as
//! `prod_i (a_i^dag)^{n_i} exp(-F_lk c_l^dag c_k^dag / 2)|0>` with
//! `a_i^dag = sum_k alpha[i,k] c_k^dag + beta[i,k] c_k`. The exponential is
//! expanded to a finite order and the result is projected on a
//! [`TruncatedBasis`] only at the very end.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, HashMap};
use std::hash::BuildHasherDefault;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::bogoliubov::{BogoliubovMap, CorrelationSet, FMatrix};
use crate::error::{QuenchError, Result};
use crate::model::{FockExcitation, QuenchSpec};

/// Default ceiling on the weight the basis projection may discard.
pub const DEFAULT_PROJECTION_TOLERANCE: f64 = 1e-3;
/// Default ceiling on amplitudes pushed outside the basis by a ladder operator.
pub const DEFAULT_LADDER_TOLERANCE: f64 = 1e-10;

pub type Occupation = Vec<u8>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruncatedBasis {
    pub modes: usize,
    pub cutoff: u8,
    pub max_total: Option<u32>,
}

impl TruncatedBasis {
    pub fn new(modes: usize, cutoff: u8, max_total: Option<u32>) -> Result<Self> {
        if modes == 0 {
            return Err(QuenchError::InvalidSpec(
                "basis needs at least one mode".into(),
            ));
        }
        Ok(Self {
            modes,
            cutoff,
            max_total,
        })
    }

    pub fn contains(&self, occ: &[u8]) -> bool {
        occ.len() == self.modes
            && occ.iter().all(|&n| n <= self.cutoff)
            && self
                .max_total
                .is_none_or(|cap| occ.iter().map(|&n| n as u32).sum::<u32>() <= cap)
    }

    /// All basis states in lexicographic order.
    pub fn states(&self) -> Vec<Occupation> {
        let mut out = Vec::new();
        let mut current = vec![0u8; self.modes];
        self.fill(0, 0, &mut current, &mut out);
        out
    }

    fn fill(&self, pos: usize, used: u32, current: &mut Occupation, out: &mut Vec<Occupation>) {
        if pos == self.modes {
            out.push(current.clone());
            return;
        }
        for n in 0..=self.cutoff {
            let total = used + n as u32;
            if self.max_total.is_some_and(|cap| total > cap) {
                break;
            }
            current[pos] = n;
            self.fill(pos + 1, total, current, out);
        }
        current[pos] = 0;
    }

    /// Number of basis states, counted without enumerating them.
    pub fn dimension(&self) -> u128 {
        let cap = self
            .max_total
            .unwrap_or(self.cutoff as u32 * self.modes as u32) as usize;
        // ways[s] = number of prefixes with total s
        let mut ways = vec![0u128; cap + 1];
        ways[0] = 1;
        for _ in 0..self.modes {
            let mut next = vec![0u128; cap + 1];
            for (s, &w) in ways.iter().enumerate() {
                if w == 0 {
                    continue;
                }
                for n in 0..=self.cutoff as usize {
                    if s + n > cap {
                        break;
                    }
                    next[s + n] += w;
                }
            }
            ways = next;
        }
        ways.iter().sum()
    }
}

/// Joint-mode amplitudes of a (projected, normalized) state.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpandedState {
    pub amplitudes: BTreeMap<Occupation, Complex64>,
    pub source: FockExcitation,
    pub truncation_order: usize,
    /// `1 - captured / exact` norm squared, counting both the finite expansion
    /// order and the basis projection.
    pub leakage: f64,
    /// Fraction of the expanded weight dropped by the basis projection.
    pub projection_loss: f64,
    pub basis: TruncatedBasis,
}

impl ExpandedState {
    /// A single joint-mode Fock state `|n>`.
    pub fn basis_state(occupations: &[u8], basis: TruncatedBasis) -> Result<Self> {
        if !basis.contains(occupations) {
            return Err(QuenchError::CutoffExceeded(format!(
                "{occupations:?} is outside the basis"
            )));
        }
        let mut amplitudes = BTreeMap::new();
        amplitudes.insert(occupations.to_vec(), Complex64::new(1.0, 0.0));
        Ok(Self {
            amplitudes,
            source: FockExcitation::vacuum(basis.modes),
            truncation_order: 0,
            leakage: 0.0,
            projection_loss: 0.0,
            basis,
        })
    }

    pub fn norm_squared(&self) -> f64 {
        self.amplitudes.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }
}

// Fixed hasher keeps accumulation order, and so rounding, identical across runs.
type Sparse = HashMap<Occupation, f64, BuildHasherDefault<DefaultHasher>>;

fn add(target: &mut Sparse, key: Occupation, value: f64) {
    *target.entry(key).or_insert(0.0) += value;
}

fn apply_pair_operator(state: &Sparse, coef: &[(usize, usize, f64)]) -> Sparse {
    let mut out = Sparse::with_capacity_and_hasher(state.len() * coef.len(), Default::default());
    for (occ, &amp) in state {
        for &(l, k, c) in coef {
            let mut next = occ.clone();
            let mut factor = c * amp;
            factor *= (next[l] as f64 + 1.0).sqrt();
            next[l] += 1;
            factor *= (next[k] as f64 + 1.0).sqrt();
            next[k] += 1;
            add(&mut out, next, factor);
        }
    }
    out
}

fn apply_creation(state: &Sparse, map: &BogoliubovMap, i: usize) -> Sparse {
    let size = map.size();
    let mut out = Sparse::with_capacity_and_hasher(state.len() * 2 * size, Default::default());
    for (occ, &amp) in state {
        for k in 0..size {
            let a = map.alpha[(i, k)];
            if a != 0.0 {
                let mut next = occ.clone();
                next[k] += 1;
                add(&mut out, next, a * amp * (occ[k] as f64 + 1.0).sqrt());
            }
            let b = map.beta[(i, k)];
            if b != 0.0 && occ[k] > 0 {
                let mut next = occ.clone();
                next[k] -= 1;
                add(&mut out, next, b * amp * (occ[k] as f64).sqrt());
            }
        }
    }
    out
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Expands the disjoint-mode eigenstate `spec.initial_state` in joint modes
/// with the default projection tolerance.
pub fn expand_initial_state(
    spec: &QuenchSpec,
    map: &BogoliubovMap,
    f: &FMatrix,
    order: usize,
    basis: &TruncatedBasis,
) -> Result<ExpandedState> {
    expand_initial_state_with(spec, map, f, order, basis, DEFAULT_PROJECTION_TOLERANCE)
}

pub fn expand_initial_state_with(
    spec: &QuenchSpec,
    map: &BogoliubovMap,
    f: &FMatrix,
    order: usize,
    basis: &TruncatedBasis,
    projection_tolerance: f64,
) -> Result<ExpandedState> {
    let size = spec.joint_size();
    if order == 0 {
        return Err(QuenchError::InvalidSpec(
            "expansion order must be at least 1".into(),
        ));
    }
    if map.size() != size || f.f.nrows() != size || basis.modes != size {
        return Err(QuenchError::Consistency(format!(
            "expansion needs {size} modes in map, F and basis"
        )));
    }
    let source = spec.initial_state.clone();
    let largest = 2 * order + source.total() as usize;
    if largest > u8::MAX as usize {
        return Err(QuenchError::InvalidSpec(format!(
            "expansion reaches {largest} quanta in one mode"
        )));
    }

    let mut coef = Vec::new();
    for l in 0..size {
        for k in l..size {
            let c = if l == k {
                -0.5 * f.f[(l, l)]
            } else {
                -f.f[(l, k)]
            };
            if c != 0.0 {
                coef.push((l, k, c));
            }
        }
    }

    let mut total = Sparse::default();
    let mut term = Sparse::default();
    term.insert(vec![0u8; size], 1.0);
    for (occ, amp) in &term {
        total.insert(occ.clone(), *amp);
    }
    for j in 1..=order {
        term = apply_pair_operator(&term, &coef);
        let scale = 1.0 / j as f64;
        for (occ, amp) in &term {
            add(&mut total, occ.clone(), amp * scale);
        }
        term.values_mut().for_each(|v| *v *= scale);
    }

    for (i, &n) in source.occupations().iter().enumerate() {
        for _ in 0..n {
            total = apply_creation(&total, map, i);
        }
    }

    let expanded: f64 = total.values().map(|a| a * a).sum();
    let mut amplitudes = BTreeMap::new();
    let mut captured = 0.0;
    for (occ, amp) in total {
        if amp != 0.0 && basis.contains(&occ) {
            captured += amp * amp;
            amplitudes.insert(occ, Complex64::new(amp, 0.0));
        }
    }
    let projection_loss = 1.0 - captured / expanded;
    if !(projection_loss <= projection_tolerance) {
        return Err(QuenchError::CutoffExceeded(format!(
            "projection on cutoff {} drops {projection_loss:.3e} of the weight (tolerance {projection_tolerance:.1e})",
            basis.cutoff
        )));
    }
    let exact = source
        .occupations()
        .iter()
        .map(|&n| factorial(n))
        .product::<f64>()
        * f.vacuum_norm_squared();
    let inv = captured.sqrt().recip();
    amplitudes.values_mut().for_each(|a| *a *= inv);

    Ok(ExpandedState {
        amplitudes,
        source,
        truncation_order: order,
        leakage: (1.0 - captured / exact).max(0.0),
        projection_loss,
        basis: basis.clone(),
    })
}

/// Number of amplitudes with `|amplitude| >= floor`.
pub fn delocalization_count(state: &ExpandedState, floor: f64) -> usize {
    state
        .amplitudes
        .values()
        .filter(|a| a.norm() >= floor)
        .count()
}

/// Free evolution under the joint Hamiltonian, diagonal in the joint-mode basis.
pub fn exact_evolve(state: &ExpandedState, spec: &QuenchSpec, t: f64) -> ExpandedState {
    let mut out = state.clone();
    apply_phases(
        &mut out.amplitudes,
        &spec.joint_frequencies(),
        spec.hbar(),
        t,
    );
    out
}

fn apply_phases(
    amplitudes: &mut BTreeMap<Occupation, Complex64>,
    freqs: &[f64],
    hbar: f64,
    t: f64,
) {
    for (occ, amp) in amplitudes.iter_mut() {
        let energy: f64 = occ
            .iter()
            .zip(freqs)
            .map(|(&n, w)| hbar * w * (n as f64 + 0.5))
            .sum();
        *amp *= Complex64::from_polar(1.0, -energy * t / hbar);
    }
}

/// Sparse matrix elements of every `c_k` and `c_k^dag` on the support of a state.
struct LadderTables {
    /// Union of the support and its images under one ladder step.
    targets: usize,
    /// `(source, target, factor)` per mode.
    lower: Vec<Vec<(usize, usize, f64)>>,
    raise: Vec<Vec<(usize, usize, f64)>>,
    /// Largest amplitude pushed above the cutoff by `c_k^dag`.
    escaped: f64,
}

impl LadderTables {
    fn new(state: &ExpandedState) -> Self {
        let modes = state.basis.modes;
        let mut index: HashMap<Occupation, usize> = HashMap::new();
        let mut lower = vec![Vec::new(); modes];
        let mut raise = vec![Vec::new(); modes];
        let mut escaped: f64 = 0.0;
        let slot = |occ: Occupation, index: &mut HashMap<Occupation, usize>| {
            let next = index.len();
            *index.entry(occ).or_insert(next)
        };
        for (src, (occ, amp)) in state.amplitudes.iter().enumerate() {
            for k in 0..modes {
                if occ[k] > 0 {
                    let mut down = occ.clone();
                    down[k] -= 1;
                    let dst = slot(down, &mut index);
                    lower[k].push((src, dst, (occ[k] as f64).sqrt()));
                }
                let mut up = occ.clone();
                up[k] += 1;
                if !state.basis.contains(&up) {
                    escaped = escaped.max(amp.norm() * (up[k] as f64).sqrt());
                }
                let dst = slot(up, &mut index);
                raise[k].push((src, dst, (occ[k] as f64 + 1.0).sqrt()));
            }
        }
        Self {
            targets: index.len(),
            lower,
            raise,
            escaped,
        }
    }

    fn apply(&self, table: &[(usize, usize, f64)], psi: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.targets];
        for &(src, dst, factor) in table {
            out[dst] += psi[src] * factor;
        }
        out
    }

    /// `a_m psi` for `a_m = sum_k alpha[m,k] c_k + beta[m,k] c_k^dag`.
    fn apply_disjoint(&self, map: &BogoliubovMap, m: usize, psi: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.targets];
        for k in 0..map.size() {
            let (a, b) = (map.alpha[(m, k)], map.beta[(m, k)]);
            for &(src, dst, factor) in &self.lower[k] {
                out[dst] += psi[src] * (a * factor);
            }
            for &(src, dst, factor) in &self.raise[k] {
                out[dst] += psi[src] * (b * factor);
            }
        }
        out
    }
}

fn inner(x: &[Complex64], y: &[Complex64]) -> Complex64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

fn squared_norm(x: &[Complex64]) -> f64 {
    x.iter().map(|a| a.norm_sqr()).sum()
}

/// `<n_m> = |a_m psi|^2` for every disjoint mode `m`.
pub fn oracle_occupations(state: &ExpandedState, map: &BogoliubovMap) -> Vec<f64> {
    let tables = LadderTables::new(state);
    let psi: Vec<Complex64> = state.amplitudes.values().copied().collect();
    (0..map.size())
        .map(|m| squared_norm(&tables.apply_disjoint(map, m, &psi)))
        .collect()
}

/// `<n_m(t)>` on a time grid by exact evolution of `state`, one row per time.
pub fn oracle_occupation_series(
    state: &ExpandedState,
    map: &BogoliubovMap,
    hbar: f64,
    times: &[f64],
) -> Vec<Vec<f64>> {
    let tables = LadderTables::new(state);
    let freqs = &map.joint_frequencies;
    times
        .par_iter()
        .map(|&t| {
            let mut amps = state.amplitudes.clone();
            apply_phases(&mut amps, freqs, hbar, t);
            let psi: Vec<Complex64> = amps.into_values().collect();
            (0..map.size())
                .map(|m| squared_norm(&tables.apply_disjoint(map, m, &psi)))
                .collect()
        })
        .collect()
}

/// Norms `|a_i psi|`; all vanish when `psi` is the disjoint vacuum.
pub fn constraint_residuals(state: &ExpandedState, map: &BogoliubovMap) -> Vec<f64> {
    oracle_occupations(state, map)
        .into_iter()
        .map(f64::sqrt)
        .collect()
}

/// Joint-mode correlators with the default ladder tolerance.
pub fn oracle_correlators(state: &ExpandedState) -> Result<CorrelationSet> {
    oracle_correlators_with(state, DEFAULT_LADDER_TOLERANCE)
}

/// Real parts of the four joint-mode correlators, by direct ladder action.
pub fn oracle_correlators_with(
    state: &ExpandedState,
    ladder_tolerance: f64,
) -> Result<CorrelationSet> {
    let tables = LadderTables::new(state);
    if tables.escaped > ladder_tolerance {
        return Err(QuenchError::CutoffExceeded(format!(
            "raising operator leaves cutoff {} with amplitude {:.3e} (tolerance {ladder_tolerance:.1e})",
            state.basis.cutoff, tables.escaped
        )));
    }
    let psi: Vec<Complex64> = state.amplitudes.values().copied().collect();
    let size = state.basis.modes;
    let down: Vec<Vec<Complex64>> = (0..size)
        .map(|k| tables.apply(&tables.lower[k], &psi))
        .collect();
    let up: Vec<Vec<Complex64>> = (0..size)
        .map(|k| tables.apply(&tables.raise[k], &psi))
        .collect();
    let build = |x: &[Vec<Complex64>], y: &[Vec<Complex64>]| {
        DMatrix::from_fn(size, size, |l, k| inner(&x[l], &y[k]).re)
    };
    Ok(CorrelationSet {
        cdag_c: build(&down, &down),
        c_cdag: build(&up, &up),
        c_c: build(&up, &down),
        cdag_cdag: build(&down, &up),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bogoliubov::{build_bogoliubov, f_matrix};

    fn setup(n: usize, m: usize, state: FockExcitation) -> (QuenchSpec, BogoliubovMap, FMatrix) {
        let spec = QuenchSpec::standard(n, m, state).unwrap();
        let map = build_bogoliubov(&spec);
        let f = f_matrix(&map).unwrap();
        (spec, map, f)
    }

    #[test]
    fn basis_enumeration_is_lexicographic_and_capped() {
        let basis = TruncatedBasis::new(3, 2, Some(3)).unwrap();
        let states = basis.states();
        assert!(states.windows(2).all(|w| w[0] < w[1]));
        assert!(states.iter().all(|s| basis.contains(s)));
        assert_eq!(states.len() as u128, basis.dimension());
        assert_eq!(states.first().unwrap(), &vec![0, 0, 0]);
        assert!(!basis.contains(&[2, 2, 0]));
        assert_eq!(TruncatedBasis::new(4, 8, None).unwrap().dimension(), 6561);
        assert_eq!(TruncatedBasis::new(2, 3, None).unwrap().states().len(), 16);
    }

    #[test]
    fn first_order_vacuum_has_pair_amplitudes() {
        let (spec, map, f) = setup(2, 2, FockExcitation::vacuum(4));
        let basis = TruncatedBasis::new(4, 4, None).unwrap();
        let state = expand_initial_state(&spec, &map, &f, 1, &basis).unwrap();
        let pairs = (0..4)
            .flat_map(|l| (l..4).map(move |k| (l, k)))
            .filter(|&(l, k)| f.f[(l, k)] != 0.0)
            .count();
        assert_eq!(state.len(), 1 + pairs);
        let norm = state.amplitudes[&vec![0, 0, 0, 0]].re.recip();
        let pair = state.amplitudes[&vec![1, 0, 1, 0]].re * norm;
        assert!((pair + f.f[(0, 2)]).abs() < 1e-14);
        let double = state.amplitudes[&vec![0, 2, 0, 0]].re * norm;
        assert!((double + f.f[(1, 1)] / 2f64.sqrt()).abs() < 1e-14);
        assert!((state.norm_squared() - 1.0).abs() < 1e-12);
        assert!(state.leakage > 0.0 && state.leakage < 1e-2);
    }

    #[test]
    fn high_order_vacuum_is_annihilated() {
        let (spec, map, f) = setup(2, 2, FockExcitation::vacuum(4));
        let basis = TruncatedBasis::new(4, 30, None).unwrap();
        let state = expand_initial_state(&spec, &map, &f, 14, &basis).unwrap();
        assert!(state.leakage < 1e-9, "{}", state.leakage);
        for r in constraint_residuals(&state, &map) {
            assert!(r < 1e-6, "{r}");
        }
    }

    #[test]
    fn low_cutoff_is_reported() {
        let (spec, map, f) = setup(2, 2, FockExcitation::excited(4, &[0]).unwrap());
        let basis = TruncatedBasis::new(4, 1, None).unwrap();
        let err = expand_initial_state(&spec, &map, &f, 4, &basis).unwrap_err();
        assert!(matches!(err, QuenchError::CutoffExceeded(_)));
    }

    #[test]
    fn counting_floor() {
        let basis = TruncatedBasis::new(3, 2, None).unwrap();
        let state = ExpandedState::basis_state(&[0, 1, 0], basis.clone()).unwrap();
        assert_eq!(delocalization_count(&state, 1e-12), 1);
        assert_eq!(delocalization_count(&state, 2.0), 0);
        let map = BogoliubovMap::identity(vec![1.0, 2.0, 3.0], 1);
        let f = f_matrix(&map).unwrap();
        let spec = QuenchSpec::vacuum(1, 2).unwrap();
        let vac = expand_initial_state(&spec, &map, &f, 3, &basis).unwrap();
        assert_eq!(delocalization_count(&vac, 1e-12), 1);
        assert!(ExpandedState::basis_state(&[3, 0, 0], basis).is_err());
    }

    #[test]
    fn evolution_is_a_phase() {
        let (spec, map, f) = setup(2, 3, FockExcitation::excited(5, &[1]).unwrap());
        let basis = TruncatedBasis::new(5, 6, Some(9)).unwrap();
        let state = expand_initial_state_with(&spec, &map, &f, 3, &basis, 1e-3).unwrap();
        assert_eq!(exact_evolve(&state, &spec, 0.0), state);
        let later = exact_evolve(&state, &spec, 37.25);
        assert!((later.norm_squared() - state.norm_squared()).abs() < 1e-14);
        for (a, b) in later.amplitudes.values().zip(state.amplitudes.values()) {
            assert!((a.norm() - b.norm()).abs() < 1e-15);
        }
    }

    #[test]
    fn correlators_of_basis_state() {
        let basis = TruncatedBasis::new(3, 4, None).unwrap();
        let state = ExpandedState::basis_state(&[2, 0, 1], basis).unwrap();
        let corr = oracle_correlators(&state).unwrap();
        for (a, b) in corr.occupations().iter().zip([2.0, 0.0, 1.0]) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(corr.commutator_defect() < 1e-12);
        assert_eq!(corr.c_c.abs().max(), 0.0);
    }

    #[test]
    fn ladder_escape_is_reported() {
        let basis = TruncatedBasis::new(2, 2, None).unwrap();
        let state = ExpandedState::basis_state(&[2, 0], basis).unwrap();
        assert!(matches!(
            oracle_correlators(&state),
            Err(QuenchError::CutoffExceeded(_))
        ));
        assert!(oracle_correlators_with(&state, f64::INFINITY).is_ok());
    }

    #[test]
    fn series_matches_pointwise_evaluation() {
        let (spec, map, f) = setup(2, 2, FockExcitation::excited(4, &[1]).unwrap());
        let basis = TruncatedBasis::new(4, 6, None).unwrap();
        let state = expand_initial_state_with(&spec, &map, &f, 6, &basis, 1e-3).unwrap();
        let times = [0.0, 1.5, 9.0];
        let series = oracle_occupation_series(&state, &map, 1.0, &times);
        for (t, row) in times.iter().zip(&series) {
            let direct = oracle_occupations(&exact_evolve(&state, &spec, *t), &map);
            for (a, b) in row.iter().zip(&direct) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
