use nalgebra::DMatrix;
use num_complex::Complex64;
use quenchlab_core::bogoliubov::{build_bogoliubov, f_matrix, initial_correlations};
use quenchlab_core::covariance::{
    evolve_covariance, from_joint_modes, initial_covariance, joint_initial_covariance,
    to_configuration,
};
use quenchlab_core::dynamics::{evolve_occupations, long_time_average, OccupationKernel};
use quenchlab_core::fock::{
    constraint_residuals, expand_initial_state, oracle_correlators, oracle_occupation_series,
    TruncatedBasis,
};
use quenchlab_core::gge::conserved_charges;
use quenchlab_core::model::{stiffness_matrix, ChainSpec, FockExcitation, QuenchSpec, TimeGrid};

fn spec(n: usize, m: usize, occ: Vec<u32>) -> QuenchSpec {
    QuenchSpec::standard(n, m, FockExcitation::new(occ)).unwrap()
}

/// Eigenpairs with ascending eigenvalues and a positive first component.
fn sorted_modes(k: &DMatrix<f64>, mass: f64) -> (Vec<f64>, DMatrix<f64>) {
    let eig = k.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..k.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let freqs = order
        .iter()
        .map(|&i| (eig.eigenvalues[i] / mass).sqrt())
        .collect();
    let mut vecs = DMatrix::zeros(k.nrows(), k.nrows());
    for (col, &i) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        if v[0] < 0.0 {
            v = -v;
        }
        vecs.set_column(col, &v);
    }
    (freqs, vecs)
}

#[test]
fn bogoliubov_matches_diagonalized_hamiltonians() {
    for (mass, omega0, hbar) in [(1.0, 1.0, 1.0), (2.5, 0.7, 0.3)] {
        let left = ChainSpec::with_constants(2, mass, omega0, hbar).unwrap();
        let right = ChainSpec::with_constants(2, mass, omega0, hbar).unwrap();
        let joint = ChainSpec::with_constants(4, mass, omega0, hbar).unwrap();
        let q =
            QuenchSpec::new(left, right, FockExcitation::vacuum(4), TimeGrid::default()).unwrap();
        let map = build_bogoliubov(&q);

        let (wl, ul) = sorted_modes(&stiffness_matrix(&left), mass);
        let (wr, ur) = sorted_modes(&stiffness_matrix(&right), mass);
        let (wj, uj) = sorted_modes(&stiffness_matrix(&joint), mass);
        let w: Vec<f64> = wl.iter().chain(&wr).copied().collect();
        let mut u = DMatrix::zeros(4, 4);
        u.view_mut((0, 0), (2, 2)).copy_from(&ul);
        u.view_mut((2, 2), (2, 2)).copy_from(&ur);
        let overlap = u.transpose() * &uj;

        // a_l = sqrt(m w_l / 2 hbar) (Q_l + i P_l / (m w_l)) with Q_l = sum_k O_lk Q'_k
        for l in 0..4 {
            for k in 0..4 {
                let r = (w[l] / wj[k]).sqrt();
                let alpha = overlap[(l, k)] * 0.5 * (r + 1.0 / r);
                let beta = overlap[(l, k)] * 0.5 * (r - 1.0 / r);
                assert!((map.alpha[(l, k)] - alpha).abs() < 1e-10);
                assert!((map.beta[(l, k)] - beta).abs() < 1e-10);
            }
        }
    }
}

/// `<n_m(t)>` as an explicit four-term double sum over joint modes.
fn quadruple_sum(q: &QuenchSpec, t: f64) -> Vec<f64> {
    let map = build_bogoliubov(q);
    let corr = initial_correlations(&map, &q.initial_state);
    let w = &map.joint_frequencies;
    let size = map.size();
    let phase = |x: f64| Complex64::from_polar(1.0, x * t / q.hbar());
    (0..size)
        .map(|m| {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..size {
                for l in 0..size {
                    let (ak, al) = (map.alpha[(m, k)], map.alpha[(m, l)]);
                    let (bk, bl) = (map.beta[(m, k)], map.beta[(m, l)]);
                    acc += phase(w[k] - w[l]) * (ak * al * corr.cdag_c[(k, l)]);
                    acc += phase(w[k] + w[l]) * (ak * bl * corr.cdag_cdag[(k, l)]);
                    acc += phase(-(w[k] + w[l])) * (bk * al * corr.c_c[(k, l)]);
                    acc += phase(-(w[k] - w[l])) * (bk * bl * corr.c_cdag[(k, l)]);
                }
            }
            assert!(acc.im.abs() < 1e-10);
            acc.re
        })
        .collect()
}

#[test]
fn kernel_matches_direct_sum() {
    for q in [
        spec(2, 3, vec![0, 1, 0, 0, 2]),
        spec(4, 4, vec![0, 0, 0, 1, 1, 0, 0, 0]),
        spec(3, 7, vec![0; 10]),
    ] {
        let map = build_bogoliubov(&q);
        let corr = initial_correlations(&map, &q.initial_state);
        let kernel = OccupationKernel::new(&map, &corr, q.hbar()).unwrap();
        for t in [0.0, 0.75, 13.0, 411.3] {
            let (fast, _) = kernel.occupations(t).unwrap();
            for (a, b) in fast.iter().zip(quadruple_sum(&q, t)) {
                assert!((a - b).abs() < 1e-10, "t={t}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn analytic_dynamics_matches_fock_oracle() {
    let q = spec(2, 2, vec![0, 1, 0, 0])
        .with_time_grid(TimeGrid::uniform(50.0, 201).unwrap())
        .unwrap();
    let map = build_bogoliubov(&q);
    let f = f_matrix(&map).unwrap();
    let basis = TruncatedBasis::new(4, 8, None).unwrap();
    let state = expand_initial_state(&q, &map, &f, 14, &basis).unwrap();
    let oracle = oracle_occupation_series(&state, &map, q.hbar(), q.time_grid.times());
    let corr = initial_correlations(&map, &q.initial_state);
    let series = evolve_occupations(&q, &map, &corr).unwrap();
    let mut worst: f64 = 0.0;
    for (a, b) in series.n_expect.iter().zip(&oracle) {
        for (x, y) in a.iter().zip(b) {
            worst = worst.max((x - y).abs());
        }
    }
    assert!(worst < 2e-3, "{worst}");
}

#[test]
fn oracle_convergence_from_cutoff_six_to_eight() {
    let q = spec(2, 2, vec![0, 1, 1, 0]);
    let map = build_bogoliubov(&q);
    let f = f_matrix(&map).unwrap();
    let times: Vec<f64> = (0..=50).map(f64::from).collect();
    let run = |cutoff| {
        let basis = TruncatedBasis::new(4, cutoff, None).unwrap();
        let state = expand_initial_state(&q, &map, &f, 14, &basis).unwrap();
        oracle_occupation_series(&state, &map, q.hbar(), &times)
    };
    let (six, eight, ten) = (run(6), run(8), run(10));
    let change = |a: &[Vec<f64>], b: &[Vec<f64>]| {
        a.iter()
            .zip(b)
            .flat_map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).abs()))
            .fold(0.0, f64::max)
    };
    // cutoff 6 is about 3.5e-3 away; from 8 on the steps shrink tenfold per two levels
    assert!(change(&six, &eight) < 5e-3);
    assert!(change(&eight, &ten) < 5e-4);
}

#[test]
fn correlators_match_fock_oracle_at_large_cutoff() {
    for occ in [vec![0, 0, 0, 0], vec![1, 0, 0, 0]] {
        let q = spec(2, 2, occ);
        let map = build_bogoliubov(&q);
        let f = f_matrix(&map).unwrap();
        let basis = TruncatedBasis::new(4, 30, None).unwrap();
        let state = expand_initial_state(&q, &map, &f, 14, &basis).unwrap();
        let oracle = oracle_correlators(&state).unwrap();
        let analytic = initial_correlations(&map, &q.initial_state);
        assert!(oracle.max_abs_diff(&analytic) < 1e-6);
        assert!(oracle.commutator_defect() < 1e-8);
        for (a, b) in conserved_charges(&map, &q.initial_state)
            .iter()
            .zip(oracle.occupations())
        {
            assert!((a - b).abs() < 1e-6);
        }
        if q.initial_state.is_vacuum() {
            assert!(constraint_residuals(&state, &map).iter().all(|&r| r < 1e-6));
        }
    }
}

#[test]
fn configuration_covariance_matches_mode_sums() {
    let q = spec(2, 2, vec![0; 4]);
    let conf = to_configuration(&initial_covariance(&q), &q).unwrap();
    // <q_i q_j> = sum_k S_ik S_jk hbar / (2 m w_k) within each chain
    let w = q.disjoint_frequencies();
    for i in 0..4 {
        for j in 0..4 {
            let (ci, cj) = (i / 2, j / 2);
            let expected = if ci != cj {
                0.0
            } else {
                let (a, b) = (i % 2 + 1, j % 2 + 1);
                (1..=2)
                    .map(|k| {
                        let s = |x: usize| {
                            (2.0f64 / 3.0).sqrt()
                                * (std::f64::consts::PI * (x * k) as f64 / 3.0).sin()
                        };
                        s(a) * s(b) * q.hbar() / (2.0 * q.mass() * w[2 * ci + k - 1])
                    })
                    .sum()
            };
            assert!((conf.sigma[(i, j)] - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn energy_identity_with_interaction_term() {
    let times: Vec<f64> = vec![0.0, 2.0, 17.5, 120.0];
    for (mass, omega0, hbar) in [(1.0, 1.0, 1.0), (1.7, 0.6, 0.25)] {
        let chain = |size| ChainSpec::with_constants(size, mass, omega0, hbar).unwrap();
        let q = QuenchSpec::new(
            chain(3),
            chain(5),
            FockExcitation::new(vec![0, 0, 1, 0, 0, 0, 2, 0]),
            TimeGrid::new(times.clone()).unwrap(),
        )
        .unwrap();
        let map = build_bogoliubov(&q);
        let corr = initial_correlations(&map, &q.initial_state);
        let series = evolve_occupations(&q, &map, &corr).unwrap();
        let joint = joint_initial_covariance(&q).unwrap();
        let bond = mass * omega0 * omega0;
        for (i, &t) in times.iter().enumerate() {
            let conf = from_joint_modes(&evolve_covariance(&joint, &q, t).unwrap(), &q).unwrap();
            let interaction = -bond * conf.sigma[(q.n() - 1, q.n())];
            let total = series.e_left[i] + series.e_right[i] + interaction;
            assert!(
                (total - series.e_total_joint).abs() < 1e-10,
                "hbar={hbar} t={t}"
            );
        }
    }
}

#[test]
fn covariance_occupations_match_long_time_average() {
    let q = spec(4, 6, vec![0; 10]);
    let map = build_bogoliubov(&q);
    let corr = initial_correlations(&map, &q.initial_state);
    let joint = joint_initial_covariance(&q).unwrap();
    let occ = quenchlab_core::covariance::mode_occupations(
        &joint.sigma,
        &q.joint_frequencies(),
        q.mass(),
        q.hbar(),
    );
    for (a, b) in occ.iter().zip(corr.occupations()) {
        assert!((a - b).abs() < 1e-10);
    }
    assert_eq!(long_time_average(&map, &corr).len(), 10);
}
