//! Cross-cutting invariants: catalog-wide structural identities, Monte
//! Carlo consistency of the samplers against closed forms, and agreement
//! between the analytic checkers and the transform oracle.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use psys_core::gaussian::{BasisCoeffs, ProcessModel};
use psys_core::grid::TimeGrid;
use psys_core::measures::{differentiate_poly, membership_e, BoxRegion, GaussianMeasure, Measure};
use psys_core::poly::Poly;
use psys_core::rng::stream_rng;
use psys_core::simulate::simulate_br;
use psys_core::stationarity::{check_exp_system, stationarize_drift};
use psys_core::stats::{ks_distance_sorted, two_sample_mean_p};
use psys_core::transform::{check_two_sided, conv_gaussian, fourier_identity_residual, GridDensity, MeasureKind};

/// Catalog representatives used by the sweep tests, with the number of
/// components.
fn catalog() -> Vec<(ProcessModel, usize)> {
    let bm = ProcessModel::brownian();
    let fbm6 = ProcessModel::fractional_brownian(0.6).unwrap();
    let fbm75 = ProcessModel::fractional_brownian(0.75).unwrap();
    let ou = ProcessModel::ornstein_uhlenbeck(1.0, 1.0).unwrap();
    let shifted = ProcessModel::shifted(ProcessModel::brownian(), 0.7);
    let stack = ProcessModel::stack(vec![ProcessModel::brownian(), ou.clone()]).unwrap();
    let mixed = ProcessModel::mix(
        DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]),
        stack.clone(),
    )
    .unwrap();
    let coeff = ProcessModel::gaussian_coefficient(vec![
        BasisCoeffs { t: 1.0, ..Default::default() },
        BasisCoeffs { one: 1.0, ..Default::default() },
    ])
    .unwrap();
    let drifted = ProcessModel::with_drift(
        ProcessModel::brownian(),
        vec![BasisCoeffs { abs_t: -0.5, ..Default::default() }],
    )
    .unwrap();
    vec![
        (bm, 1),
        (fbm6, 1),
        (fbm75, 1),
        (ou, 1),
        (shifted, 1),
        (stack, 2),
        (mixed, 2),
        (coeff, 2),
        (drifted, 1),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Block symmetry of the catalog: Sigma(t2, t1) = Sigma(t1, t2)^T
    /// exactly, for every model and time pair.
    #[test]
    fn block_symmetry_is_exact(
        idx in 0usize..9,
        t1 in -3.0f64..3.0,
        t2 in -3.0f64..3.0,
    ) {
        let (model, _) = catalog().swap_remove(idx);
        let a = model.cov(t1, t2);
        let b = model.cov(t2, t1);
        prop_assert_eq!(a.transpose(), b);
    }

    /// Box-mass additivity over axis splits, exactly up to float rounding.
    #[test]
    fn mass_additivity(
        lambda in -2.0f64..2.0,
        lo in -4.0f64..0.0,
        len_a in 0.1f64..3.0,
        len_b in 0.1f64..3.0,
    ) {
        let m = Measure::exponential(DVector::from_element(1, lambda), 1.0).unwrap();
        let mid = lo + len_a;
        let hi = mid + len_b;
        let whole = m.mass_on_box(&BoxRegion::new(vec![lo], vec![hi]).unwrap()).unwrap().value;
        let left = m.mass_on_box(&BoxRegion::new(vec![lo], vec![mid]).unwrap()).unwrap().value;
        let right = m.mass_on_box(&BoxRegion::new(vec![mid], vec![hi]).unwrap()).unwrap().value;
        prop_assert!((whole - (left + right)).abs() <= 1e-9 * (1.0 + whole.abs()));
    }

    /// Derivatives commute coefficientwise: d^beta d^gamma = d^(beta+gamma).
    #[test]
    fn poly_derivatives_commute(
        c1 in -3.0f64..3.0,
        c2 in -3.0f64..3.0,
        b1 in 0u32..3,
        b2 in 0u32..3,
        g1 in 0u32..3,
        g2 in 0u32..3,
    ) {
        let p = Poly::from_terms(2, [(vec![3, 2], c1), (vec![1, 4], c2), (vec![0, 0], 1.0)]);
        let a = differentiate_poly(&differentiate_poly(&p, &[b1, b2]), &[g1, g2]);
        let b = differentiate_poly(&p, &[b1 + g1, b2 + g2]);
        prop_assert_eq!(a, b);
    }

    /// membership_E is antisymmetric in the two Gaussians.
    #[test]
    fn membership_is_symmetric_up_to_sign(
        l1 in -2.0f64..2.0,
        l2 in -2.0f64..2.0,
        v1 in 0.1f64..3.0,
        v2 in 0.1f64..3.0,
        m1 in -1.0f64..1.0,
    ) {
        let lambda = DVector::from_vec(vec![l1, l2]);
        let s1 = GaussianMeasure::new(
            DVector::from_vec(vec![m1, 0.0]),
            DMatrix::from_row_slice(2, 2, &[v1, 0.0, 0.0, 1.0]),
        ).unwrap();
        let s2 = GaussianMeasure::new(
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, v2]),
        ).unwrap();
        let (_, r12) = membership_e(&lambda, &s1, &s2);
        let (_, r21) = membership_e(&lambda, &s2, &s1);
        prop_assert!((r12 + r21).abs() < 1e-12);
    }
}

/// Variogram equals the sample covariance of the increment within Monte
/// Carlo error, for every catalog model.
#[test]
fn variogram_matches_sampled_increments() {
    let (t1, t2) = (0.5, 1.75);
    for (i, (model, d)) in catalog().into_iter().enumerate() {
        let gamma = model.variogram(t1, t2);
        let n = 100_000;
        let paths = model.sample_paths(&[t1, t2], n, 1000 + i as u64).unwrap();
        // sample covariance of xi(t2) - xi(t1)
        let incs: Vec<DVector<f64>> = (0..n)
            .map(|r| {
                DVector::from_iterator(
                    d,
                    (0..d).map(|k| paths.value(r, 1, k) - paths.value(r, 0, k)),
                )
            })
            .collect();
        let mean = incs.iter().fold(DVector::zeros(d), |a, v| a + v) / n as f64;
        let mut cov = DMatrix::zeros(d, d);
        for v in &incs {
            let c = v - &mean;
            cov += &c * c.transpose();
        }
        cov /= (n - 1) as f64;
        let scale = gamma.abs().max().max(0.05);
        let err = (cov - &gamma).abs().max() / scale;
        assert!(err < 0.05, "model {i}: relative error {err}");
    }
}

/// exp(log_laplace_fidi) matches the empirical transform mean within
/// three standard errors on 1e6 paths for |u| <= 1.
#[test]
fn laplace_transform_matches_monte_carlo() {
    let model = stationarize_drift(&ProcessModel::brownian(), &DVector::from_element(1, 1.0))
        .unwrap();
    let times = [1.0, 2.0];
    let u = [DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)];
    let exact = model.log_laplace_fidi(&times, &u).exp();
    assert!((exact.ln() - 1.0).abs() < 1e-12, "hand value of the exponent is 1");

    let n = 1_000_000;
    let paths = model.sample_paths(&times, n, 2024).unwrap();
    let vals: Vec<f64> = paths
        .values
        .iter()
        .map(|v| (u[0][0] * v[0] + u[1][0] * v[1]).exp())
        .collect();
    let mean = vals.iter().sum::<f64>() / n as f64;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    let se = (var / n as f64).sqrt();
    assert!((mean - exact).abs() < 3.0 * se, "mc {mean} vs exact {exact} (se {se})");
}

/// Disjoint seeds give samples that pass a two-sample mean test.
#[test]
fn disjoint_seeds_are_independent() {
    let bm = ProcessModel::brownian();
    let a = bm.sample_paths(&[1.0], 10_000, 1).unwrap();
    let b = bm.sample_paths(&[1.0], 10_000, 2).unwrap();
    let xs: Vec<f64> = a.values.iter().map(|v| v[0]).collect();
    let ys: Vec<f64> = b.values.iter().map(|v| v[0]).collect();
    let p = two_sample_mean_p(&xs, &ys);
    assert!(p > 1e-3, "p = {p}");
}

/// check_exp_system at tol 1e-9 agrees with the transform residual at
/// threshold 1e-8 for every catalog model and a sweep of lambdas.
#[test]
fn analytic_checker_agrees_with_transform_residual() {
    let grid = TimeGrid::canonical();
    for (i, (model, d)) in catalog().into_iter().enumerate() {
        let lambdas: Vec<DVector<f64>> = match d {
            1 => vec![
                DVector::from_element(1, 0.0),
                DVector::from_element(1, 1.0),
                DVector::from_element(1, -0.5),
            ],
            _ => vec![
                DVector::zeros(d),
                DVector::from_vec(vec![1.0, 0.0]),
                DVector::from_vec(vec![0.5, 0.5]),
            ],
        };
        for lambda in lambdas {
            let analytic = check_exp_system(&model, &lambda, &grid, 1e-9).overall;
            let mut residual = 0.0f64;
            for &s in &grid.shifts {
                for (t1, t2) in grid.time_pairs() {
                    let r = fourier_identity_residual(
                        &model,
                        &MeasureKind::Exp(lambda.clone()),
                        &[t1, t2],
                        s,
                        100,
                        7 + i as u64,
                    );
                    residual = residual.max(r);
                }
            }
            assert_eq!(
                analytic,
                residual < 1e-8,
                "model {i}, lambda {lambda:?}: analytic {analytic}, residual {residual}"
            );
        }
    }
}

/// stationarize_drift followed by the checker passes for every centred
/// catalog model with wide-sense stationary increments.
#[test]
fn stationarized_models_pass() {
    let grid = TimeGrid::canonical();
    let wss: Vec<(ProcessModel, usize)> = vec![
        (ProcessModel::brownian(), 1),
        (ProcessModel::fractional_brownian(0.6).unwrap(), 1),
        (ProcessModel::fractional_brownian(0.75).unwrap(), 1),
        (ProcessModel::ornstein_uhlenbeck(1.0, 1.0).unwrap(), 1),
        (
            ProcessModel::stack(vec![
                ProcessModel::brownian(),
                ProcessModel::ornstein_uhlenbeck(1.0, 1.0).unwrap(),
            ])
            .unwrap(),
            2,
        ),
        (
            ProcessModel::mix(
                DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]),
                ProcessModel::stack(vec![
                    ProcessModel::brownian(),
                    ProcessModel::ornstein_uhlenbeck(1.0, 1.0).unwrap(),
                ])
                .unwrap(),
            )
            .unwrap(),
            2,
        ),
    ];
    for (i, (model, d)) in wss.into_iter().enumerate() {
        let lambda = DVector::from_iterator(d, (0..d).map(|k| if k == 0 { 1.0 } else { -0.5 }));
        let fixed = stationarize_drift(&model, &lambda).unwrap();
        let report = check_exp_system(&fixed, &lambda, &grid, 1e-10);
        assert!(report.overall, "model {i}: {}", report.to_json());
    }
}

/// Halving the grid step shrinks the two-sided residual of the ridge
/// counterexample by at least 3x, until the 1e-6 floor.
#[test]
fn two_sided_residual_refines_at_second_order() {
    let run = |step: f64| -> f64 {
        let pad = 8.0 + 2.0 * step;
        let f = GridDensity::tabulate(
            &[-2.0 - pad, -2.0 - pad],
            &[2.0 + pad, 2.0 + pad],
            step,
            |x| (x[0] + x[1]) * (x[0] + x[1]),
        )
        .unwrap();
        let s1 = GaussianMeasure::new(
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
        )
        .unwrap();
        let s2 = GaussianMeasure::new(
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]),
        )
        .unwrap();
        check_two_sided(&f, &s1, &s2).unwrap()
    };
    let coarse = run(0.1);
    let fine = run(0.05);
    assert!(
        fine <= coarse / 3.0 || fine < 1e-6,
        "coarse {coarse}, fine {fine}"
    );
}

/// Rescaled pointwise maxima of two independent Brown-Resnick runs have
/// the same unit Frechet margins as a single run.
#[test]
fn max_stability_smoke() {
    let model = stationarize_drift(&ProcessModel::brownian(), &DVector::from_element(1, 1.0))
        .unwrap();
    let n = 10_000;
    let a = simulate_br(&model, &[1.0], 0.01, 100_000, n, 31).unwrap();
    let b = simulate_br(&model, &[1.0], 0.01, 100_000, n, 32).unwrap();
    let mut xs: Vec<f64> = (0..n)
        .map(|r| 0.5 * a.value(r, 0, 0).max(b.value(r, 0, 0)))
        .collect();
    xs.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let ks = ks_distance_sorted(&xs, |z| (-1.0 / z).exp());
    assert!(ks < 0.03, "ks {ks}");
}

/// Convolving the cubic density with N(0, v) reproduces the moment
/// expansion a^3 + 3 a v on the valid interior.
#[test]
fn conv_oracle_matches_cubic_moments() {
    let f = GridDensity::tabulate(&[-12.0], &[12.0], 0.01, |x| x[0].powi(3)).unwrap();
    let sigma = GaussianMeasure::new(DVector::zeros(1), DMatrix::from_element(1, 1, 1.5)).unwrap();
    let conv = conv_gaussian(&f, &sigma).unwrap();
    let (l, r) = conv.margin[0];
    for i in (l..f.shape[0] - r).step_by(37) {
        let a = f.coord(0, i);
        let expect = a.powi(3) + 3.0 * a * 1.5;
        let got = conv.density.values[i];
        assert!(
            (got - expect).abs() / expect.abs().max(1.0) < 1e-3,
            "a {a}: {got} vs {expect}"
        );
    }
}

/// Substream draws do not depend on rayon scheduling.
#[test]
fn sampling_is_schedule_independent() {
    use rayon::ThreadPoolBuilder;
    let model = ProcessModel::stack(vec![
        ProcessModel::brownian(),
        ProcessModel::ornstein_uhlenbeck(0.5, 2.0).unwrap(),
    ])
    .unwrap();
    let run = |threads: usize| {
        ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| model.sample_paths(&[0.0, 1.0, 2.0], 500, 77).unwrap().values)
    };
    assert_eq!(run(1), run(4));
}

/// The Weyl-sequence substreams and ChaCha substreams never alias between
/// neighboring tags in practice: a smoke check on the first outputs.
#[test]
fn neighboring_streams_differ() {
    use rand::RngExt;
    let mut seen = std::collections::HashSet::new();
    for a in 0..50u64 {
        for b in 0..50u64 {
            let x: u64 = stream_rng(5, a, b).random();
            assert!(seen.insert(x), "collision at ({a}, {b})");
        }
    }
}
