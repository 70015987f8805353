//! Exactness oracle for integral-mode sampling.
//!
//! With a held input and no disturbance, the sample maps have closed forms
//! through the matrix exponential of an augmented system: stacking
//! `w' = x` under the plant makes `(x(Ts), \int x)` a linear function of
//! `(x(0), u)`. The experiment's quadrature must reproduce those values to
//! second order in its node spacing.

use etcsynth::dataset::{
    check_richness, run_experiment, DisturbanceSignal, ExperimentConfig, PlantModel, SampleMode,
};
use etcsynth::synthesis::{design_controller_noisefree, verify_closure};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn demo_plant() -> PlantModel {
    PlantModel::new(
        DMatrix::from_row_slice(2, 2, &[0.0, 0.0, -1.0, -2.0]),
        DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
    )
    .unwrap()
}

/// Exact one-interval maps for the augmented state `(x, \int x)` under a
/// held input: returns `(E, F)` with `[x(Ts); w(Ts)] = E [x0; 0] + F u`.
fn exact_interval_maps(plant: &PlantModel, ts: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = plant.n();
    let m = plant.m();
    let mut abar = DMatrix::zeros(2 * n, 2 * n);
    abar.view_mut((0, 0), (n, n)).copy_from(&plant.a);
    abar.view_mut((n, 0), (n, n))
        .copy_from(&DMatrix::identity(n, n));
    let mut bbar = DMatrix::zeros(2 * n, m);
    bbar.view_mut((0, 0), (n, m)).copy_from(&plant.b);

    // exp([[Abar, Bbar], [0, 0]] Ts) carries the held-input response in its
    // top-right block.
    let mut big = DMatrix::zeros(2 * n + m, 2 * n + m);
    big.view_mut((0, 0), (2 * n, 2 * n)).copy_from(&abar);
    big.view_mut((0, 2 * n), (2 * n, m)).copy_from(&bbar);
    let e_big = (big * ts).exp();
    let e = e_big.view((0, 0), (2 * n, 2 * n)).into();
    let f = e_big.view((0, 2 * n), (2 * n, m)).into();
    (e, f)
}

fn integral_record(
    quad_substeps: usize,
    seed: u64,
) -> (PlantModel, etcsynth::dataset::ExperimentRecord, ExperimentConfig) {
    let plant = demo_plant();
    let cfg = ExperimentConfig {
        mode: SampleMode::Integral,
        quad_substeps,
        ..ExperimentConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rec = run_experiment(&plant, &cfg, &DisturbanceSignal::zero(), &mut rng).unwrap();
    (plant, rec, cfg)
}

/// Frobenius error of the integrated-state block against the exact maps.
fn x0_block_error(
    plant: &PlantModel,
    rec: &etcsynth::dataset::ExperimentRecord,
    ts: f64,
) -> (f64, f64, f64) {
    let n = plant.n();
    let (e, f) = exact_interval_maps(plant, ts);
    let t_count = rec.data.t_count();
    let mut err_x0 = 0.0_f64;
    let mut err_x1 = 0.0_f64;
    let mut err_u0 = 0.0_f64;
    for k in 0..t_count {
        let u = rec.data.u0.column(k) / ts;
        let mut aug = DVector::zeros(2 * n);
        aug.rows_mut(0, n).copy_from(&rec.x_samples[k]);
        let exact = &e * aug + &f * DVector::from_column_slice(u.as_slice());
        let x_next = exact.rows(0, n);
        let w = exact.rows(n, n);
        err_x1 = err_x1.max(
            (DVector::from_column_slice(rec.data.x1.column(k).as_slice())
                - (x_next - &rec.x_samples[k]))
                .norm(),
        );
        err_x0 = err_x0
            .max((DVector::from_column_slice(rec.data.x0.column(k).as_slice()) - w).norm());
        err_u0 = err_u0.max(
            (DVector::from_column_slice(rec.data.u0.column(k).as_slice())
                - DVector::from_column_slice(u.as_slice()) * ts)
                .norm(),
        );
    }
    (err_x0, err_x1, err_u0)
}

#[test]
fn integral_samples_match_matrix_exponential_oracle() {
    let (plant, rec, cfg) = integral_record(64, 301);
    let (err_x0, err_x1, err_u0) = x0_block_error(&plant, &rec, cfg.ts);
    assert!(err_u0 < 1e-12, "input integrals off by {err_u0}");
    assert!(err_x1 < 1e-9, "state increments off by {err_x1}");
    assert!(err_x0 < 1e-6, "state integrals off by {err_x0}");

    // The defining relation of integral samples, exact up to quadrature:
    // x((k+1)Ts) - x(kTs) = A \int x + B \int u.
    let residual =
        (&rec.data.x1 - &plant.a * &rec.data.x0 - &plant.b * &rec.data.u0).norm();
    assert!(residual < 1e-5, "integral relation residual {residual}");
}

#[test]
fn quadrature_error_drops_at_second_order() {
    let (plant, coarse, cfg) = integral_record(8, 301);
    let (err_coarse, _, _) = x0_block_error(&plant, &coarse, cfg.ts);
    let (_, fine, _) = integral_record(16, 301);
    let (err_fine, _, _) = x0_block_error(&plant, &fine, cfg.ts);
    assert!(err_coarse > 0.0 && err_fine > 0.0);
    let ratio = err_coarse / err_fine;
    assert!(
        ratio > 3.5,
        "halving the node spacing only shrank the error by {ratio}"
    );
}

#[test]
fn integral_data_supports_the_design_pipeline() {
    let (plant, rec, _) = integral_record(64, 301);
    assert!(check_richness(&rec.data).pass);
    let cd = design_controller_noisefree(&rec.data).unwrap();
    for (name, r) in verify_closure(&cd, &rec.data) {
        assert!(r < 1e-8, "{name} residual {r}");
    }
    // The designed gain stabilizes the actual plant.
    let acl = &plant.a + &plant.b * &cd.k_gain;
    let worst = acl
        .complex_eigenvalues()
        .iter()
        .map(|c| c.re)
        .fold(f64::MIN, f64::max);
    assert!(worst < 0.0, "closed loop not stable (max real part {worst})");
}
