//! Cross-module behavioural properties: integral algebra on arbitrary
//! paths, fold-plan partitioning, strict-history and held-out-purity audits
//! of every learner, generator determinism, and projection consistency at
//! scale.

use hazardlean_core::grid::{FoldPlan, SubjectPath, SurvivalSample, TimeGrid};
use hazardlean_core::integrate::stieltjes_integrate;
use hazardlean_core::nuisance::{
    fit_hazard_boosted, fit_hazard_pooled, fit_pi_grid_regression, fit_projection_ridge,
    oracle_nuisances_cox, BoostParams, BoostedRegressor, HazardBasis, HazardModel, OlsRegressor,
    PiModel,
};
use hazardlean_core::rng::subject_stream;
use hazardlean_core::simulate::{
    calibrate_beta1, simulate_acm_dataset, simulate_acm_dataset_with_streams,
    simulate_cox_dataset, simulate_cox_dataset_with_streams, AcmSetting, AcmSimConfig,
    CoxSimConfig, HistKernel,
};
use proptest::prelude::*;

// ---------------------------------------------------------------------------
// Fixtures
// ---------------------------------------------------------------------------

fn cox_config(n: usize, q: usize, seed: u64) -> CoxSimConfig {
    let provisional = CoxSimConfig::new(
        n,
        q,
        HistKernel::Constant,
        HistKernel::Constant,
        -1.0,
        0.0,
        1.0,
        seed,
    )
    .unwrap();
    let beta1 = calibrate_beta1::<f64>(&provisional).unwrap();
    CoxSimConfig::new(
        n,
        q,
        HistKernel::Constant,
        HistKernel::Constant,
        -1.0,
        0.0,
        beta1,
        seed,
    )
    .unwrap()
}

fn cox_sample(n: usize, q: usize, seed: u64) -> SurvivalSample<f64> {
    simulate_cox_dataset::<f64>(&cox_config(n, q, seed))
        .unwrap()
        .sample
}

fn subjects_equal(a: &SubjectPath<f64>, b: &SubjectPath<f64>) -> bool {
    if a.q() != b.q() || a.d() != b.d() {
        return false;
    }
    if a.event_index() != b.event_index() || a.delta() != b.delta() {
        return false;
    }
    if a.x() != b.x() {
        return false;
    }
    (0..a.q()).all(|i| a.z_row(i) == b.z_row(i))
}

// ---------------------------------------------------------------------------
// Integral algebra
// ---------------------------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn compensated_integral_is_linear_and_starts_at_zero(
        q in 4usize..24,
        raw in proptest::collection::vec(-5.0f64..5.0, 3 * 24),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        delta in any::<bool>(),
        eidx_raw in 0usize..24,
    ) {
        let grid: TimeGrid<f64> = TimeGrid::new(q).unwrap();
        let g1 = &raw[0..q];
        let g2 = &raw[q..2 * q];
        let hazard: Vec<f64> = raw[2 * q..3 * q].iter().map(|v| v.abs()).collect();
        let event_index = if delta { eidx_raw % q } else { q - 1 };
        let subject = SubjectPath::new(
            vec![0.0; q],
            vec![0.0; q],
            1,
            event_index,
            delta,
        )
        .unwrap();
        let out1 = stieltjes_integrate(g1, &subject, &hazard, &grid).unwrap();
        let out2 = stieltjes_integrate(g2, &subject, &hazard, &grid).unwrap();
        let mix: Vec<f64> = (0..q).map(|i| a * g1[i] + b * g2[i]).collect();
        let out_mix = stieltjes_integrate(&mix, &subject, &hazard, &grid).unwrap();
        prop_assert_eq!(out_mix[0], 0.0);
        for i in 0..q {
            let lin = a * out1[i] + b * out2[i];
            prop_assert!(
                (out_mix[i] - lin).abs() <= 1e-10,
                "index {}: {} vs {}",
                i,
                out_mix[i],
                lin
            );
        }
    }

    #[test]
    fn balanced_folds_partition_the_subjects(n in 1usize..60, k_raw in 1usize..12) {
        let k = k_raw.min(n);
        let plan = FoldPlan::balanced(n, k).unwrap();
        let mut owner = vec![usize::MAX; n];
        let mut sizes = Vec::new();
        for fold in 0..k {
            let eval = plan.fold_indices(fold);
            sizes.push(eval.len());
            for &j in &eval {
                prop_assert_eq!(owner[j], usize::MAX, "subject {} assigned twice", j);
                owner[j] = fold;
            }
            let train = plan.train_indices(fold);
            if k == 1 {
                // No-splitting mode: training and evaluation both cover
                // the full sample.
                prop_assert_eq!(train.len(), n);
            } else {
                prop_assert_eq!(train.len() + eval.len(), n);
                prop_assert!(train.iter().all(|j| !eval.contains(j)));
            }
        }
        prop_assert!(owner.iter().all(|&f| f != usize::MAX));
        let (lo, hi) = (
            *sizes.iter().min().unwrap(),
            *sizes.iter().max().unwrap(),
        );
        prop_assert!(hi - lo <= 1, "fold sizes {:?} unbalanced", sizes);
    }
}

// ---------------------------------------------------------------------------
// Strict-history audits: rewriting a subject's covariates and exposure
// after a cut index must leave every fitted evaluator's predictions at or
// before the cut unchanged, for all subjects and all cuts.
// ---------------------------------------------------------------------------

/// Rewrites covariates and exposure strictly after `cut`; the stopped-path
/// convention refreezes anything past the subject's event time.
fn perturb_after(subject: &SubjectPath<f64>, cut: usize) -> SubjectPath<f64> {
    let q = subject.q();
    let d = subject.d();
    let mut z = Vec::with_capacity(q * d);
    for i in 0..q {
        z.extend_from_slice(subject.z_row(i));
    }
    let mut x = subject.x().to_vec();
    for i in (cut + 1)..q {
        x[i] = -7.5 + 0.9 * i as f64;
        for r in 0..d {
            z[i * d + r] = 3.0 + 0.37 * i as f64 + r as f64;
        }
    }
    SubjectPath::new(z, x, d, subject.event_index(), subject.delta()).unwrap()
}

fn audit_pi(model: &dyn PiModel<f64>, sample: &SurvivalSample<f64>, label: &str) {
    for (j, s) in sample.subjects().iter().enumerate() {
        let base = model.pi_path(s);
        for cut in 0..s.q() {
            let perturbed = model.pi_path(&perturb_after(s, cut));
            for (i, (&p, &b)) in perturbed.iter().zip(&base).enumerate().take(cut + 1) {
                assert_eq!(
                    p, b,
                    "{label}: projection for subject {j} at index {i} read data after cut {cut}"
                );
            }
        }
    }
}

fn audit_hazard(model: &dyn HazardModel<f64>, sample: &SurvivalSample<f64>, label: &str) {
    for (j, s) in sample.subjects().iter().enumerate() {
        let base = model.hazard_path(s);
        for cut in 0..s.q() {
            let perturbed = model.hazard_path(&perturb_after(s, cut));
            for (i, (&p, &b)) in perturbed.iter().zip(&base).enumerate().take(cut + 1) {
                assert_eq!(
                    p, b,
                    "{label}: hazard for subject {j} at index {i} read data after cut {cut}"
                );
            }
        }
    }
}

#[test]
fn fitted_evaluators_never_read_past_the_current_index() {
    let sample = cox_sample(40, 16, 51);
    let train: Vec<usize> = (0..40).collect();

    let ridge = fit_projection_ridge(&sample, &train, 0.001).unwrap();
    audit_pi(&ridge, &sample, "ridge projection");

    let grid_ols = fit_pi_grid_regression(&sample, &train, &OlsRegressor, 10, true).unwrap();
    audit_pi(&grid_ols, &sample, "grid regression projection (least squares)");

    let grid_boost =
        fit_pi_grid_regression(&sample, &train, &BoostedRegressor::default(), 10, true).unwrap();
    audit_pi(&grid_boost, &sample, "grid regression projection (boosted)");

    let pooled_dict =
        fit_hazard_pooled(&sample, &train, HazardBasis::Dictionary, 1e-4).unwrap();
    audit_hazard(&pooled_dict, &sample, "pooled hazard (dictionary basis)");

    let pooled_hist =
        fit_hazard_pooled(&sample, &train, HazardBasis::Historical, 1e-4).unwrap();
    audit_hazard(&pooled_hist, &sample, "pooled hazard (historical basis)");

    let boosted = fit_hazard_boosted(
        &sample,
        &train,
        HazardBasis::Historical,
        BoostParams {
            depth: 2,
            rounds: 40,
            ..BoostParams::default()
        },
    )
    .unwrap();
    audit_hazard(&boosted, &sample, "boosted tree hazard");
}

// ---------------------------------------------------------------------------
// Held-out purity: corrupting subjects outside the training set must not
// move any prediction of the refitted learners.
// ---------------------------------------------------------------------------

#[test]
fn refits_ignore_corrupted_held_out_subjects() {
    let sample = cox_sample(40, 16, 907);
    let train: Vec<usize> = (0..20).collect();
    let q = sample.grid().q();
    let d = sample.d();

    let mut subjects = sample.subjects().to_vec();
    for (offset, slot) in subjects.iter_mut().enumerate().skip(20) {
        let s = &sample.subjects()[offset];
        let z: Vec<f64> = (0..q).flat_map(|i| s.z_row(i).to_vec()).collect();
        let x: Vec<f64> = (0..q).map(|i| 0.25 * i as f64 - 1.0).collect();
        *slot = SubjectPath::new(z, x, d, q - 1, false).unwrap();
    }
    let corrupted = SurvivalSample::new(sample.grid().clone(), subjects, d).unwrap();
    // A probe path evaluated under both fits; any fixed path works.
    let probe = sample.subjects()[25].clone();

    let r1 = fit_projection_ridge(&sample, &train, 0.001).unwrap();
    let r2 = fit_projection_ridge(&corrupted, &train, 0.001).unwrap();
    assert_eq!(r1.pi_path(&probe), r2.pi_path(&probe), "ridge projection");

    let g1 = fit_pi_grid_regression(&sample, &train, &OlsRegressor, 10, true).unwrap();
    let g2 = fit_pi_grid_regression(&corrupted, &train, &OlsRegressor, 10, true).unwrap();
    assert_eq!(g1.pi_path(&probe), g2.pi_path(&probe), "grid projection");

    let b1 =
        fit_pi_grid_regression(&sample, &train, &BoostedRegressor::default(), 10, true).unwrap();
    let b2 = fit_pi_grid_regression(&corrupted, &train, &BoostedRegressor::default(), 10, true)
        .unwrap();
    assert_eq!(b1.pi_path(&probe), b2.pi_path(&probe), "boosted grid projection");

    let h1 = fit_hazard_pooled(&sample, &train, HazardBasis::Dictionary, 1e-4).unwrap();
    let h2 = fit_hazard_pooled(&corrupted, &train, HazardBasis::Dictionary, 1e-4).unwrap();
    assert_eq!(h1.hazard_path(&probe), h2.hazard_path(&probe), "pooled hazard");

    let t1 = fit_hazard_boosted(&sample, &train, HazardBasis::Historical, BoostParams::default())
        .unwrap();
    let t2 =
        fit_hazard_boosted(&corrupted, &train, HazardBasis::Historical, BoostParams::default())
            .unwrap();
    assert_eq!(t1.hazard_path(&probe), t2.hazard_path(&probe), "boosted hazard");
}

// ---------------------------------------------------------------------------
// Generator determinism and stream relabelling
// ---------------------------------------------------------------------------

#[test]
fn generation_is_reproducible_and_streams_relabel_subjects() {
    let cfg = cox_config(30, 16, 4242);
    let a = simulate_cox_dataset::<f64>(&cfg).unwrap().sample;
    let b = simulate_cox_dataset::<f64>(&cfg).unwrap().sample;
    assert_eq!(a.n(), b.n());
    for (sa, sb) in a.subjects().iter().zip(b.subjects()) {
        assert!(subjects_equal(sa, sb), "reruns must be byte-identical");
    }

    let streams: Vec<u64> = (0..30).map(|j| subject_stream(0, j)).collect();
    let mut rotated = streams.clone();
    rotated.rotate_left(7);
    let (perm, _) = simulate_cox_dataset_with_streams::<f64>(&cfg, &rotated).unwrap();
    for j in 0..30 {
        assert!(
            subjects_equal(&perm.sample.subjects()[j], &a.subjects()[(j + 7) % 30]),
            "subject {j} must be the relabelled original"
        );
    }
}

#[test]
fn additive_generator_keeps_design_weights_under_stream_relabelling() {
    let cfg = AcmSimConfig::new(AcmSetting::Lin, 25, 4, 16, 99).unwrap();
    let base = simulate_acm_dataset::<f64>(&cfg).unwrap();
    let streams: Vec<u64> = (0..25).map(|j| subject_stream(0, j)).collect();
    let mut rotated = streams.clone();
    rotated.rotate_left(11);
    let perm = simulate_acm_dataset_with_streams::<f64>(&cfg, &rotated).unwrap();
    // The per-dataset response weights live on their own stream: relabelling
    // subjects must not move them.
    assert_eq!(base.meta.beta, perm.meta.beta);
    for j in 0..25 {
        assert!(
            subjects_equal(&perm.sample.subjects()[j], &base.sample.subjects()[(j + 11) % 25]),
            "subject {j} must be the relabelled original"
        );
    }
}

// ---------------------------------------------------------------------------
// Consistency at scale: the integrated at-risk error of the ridge
// projection against the closed-form projection of the constant-kernel
// design must shrink as the training size grows.
// ---------------------------------------------------------------------------

#[test]
fn ridge_projection_error_shrinks_with_training_size() {
    let q = 64;
    let eval_cfg = cox_config(400, q, 777);
    let eval = simulate_cox_dataset::<f64>(&eval_cfg).unwrap().sample;
    let oracle = oracle_nuisances_cox::<f64>(&cox_config(50, q, 777), 500).unwrap();
    let pi_star: Vec<Vec<f64>> = eval
        .subjects()
        .iter()
        .map(|s| oracle.pi_path(s))
        .collect();
    let step = eval.grid().step();

    // One training draw is noisy at the percent level, so estimate the
    // expected integrated error by averaging over independent draws.
    let replicates = 5u64;
    let mut previous = f64::INFINITY;
    for n in [250usize, 1000, 4000] {
        let mut total = 0.0;
        for rep in 0..replicates {
            let cfg = cox_config(n, q, 1000 + n as u64 + 17 * rep);
            let train_sample = simulate_cox_dataset::<f64>(&cfg).unwrap().sample;
            let idx: Vec<usize> = (0..n).collect();
            let fit = fit_projection_ridge(&train_sample, &idx, 0.001).unwrap();
            for (s, star) in eval.subjects().iter().zip(&pi_star) {
                let hat = fit.pi_path(s);
                for l in 0..q {
                    if s.at_risk(l) {
                        let diff = hat[l] - star[l];
                        total += diff * diff * step;
                    }
                }
            }
        }
        let a_n = total / (replicates as f64 * eval.n() as f64);
        eprintln!("integrated projection error at n = {n}: {a_n:.6}");
        assert!(
            a_n < previous,
            "integrated projection error must shrink: a_{n} = {a_n} vs previous {previous}"
        );
        previous = a_n;
    }
}
