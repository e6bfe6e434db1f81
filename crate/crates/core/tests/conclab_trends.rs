use subspace_sketch::conclab::{
    run_pair_trial, sweep, sweep_with, ExperimentConfig, LemmaId, RunOptions, Spectrum,
};
use subspace_sketch::estimator::{calibrate_constants, plan_sketch_dimension, BindingConstraint};
use subspace_sketch::io::report_to_csv;
use subspace_sketch::rng::CounterRng;

fn thm2(ambient: usize, d: usize, n_grid: Vec<usize>, epsilon: f64, trials: usize) -> ExperimentConfig {
    ExperimentConfig {
        ambient,
        n_grid,
        d1: d,
        d2: d,
        spectrum: Spectrum::Haar,
        l_count: 2,
        epsilon,
        trials,
        master_seed: 2024,
        lemma: LemmaId::Thm2,
        tail_offset: 0.0,
    }
}

#[test]
fn mean_deviation_shrinks_along_doubling_grid() {
    let cfg = thm2(200, 2, vec![10, 20, 40, 80], 0.3, 10_000);
    let means: Vec<f64> = cfg
        .n_grid
        .iter()
        .map(|&n| {
            let devs: Vec<f64> = (0..cfg.trials)
                .map(|i| run_pair_trial(&cfg, n, i).unwrap())
                .filter(|r| !r.degenerate && !r.zero_slack)
                .map(|r| r.normalized_deviation)
                .collect();
            devs.iter().sum::<f64>() / devs.len() as f64
        })
        .collect();
    assert!(means.windows(2).all(|w| w[1] < w[0]), "{means:?}");
}

#[test]
fn sweep_bytes_independent_of_thread_count() {
    let mut cfg = thm2(120, 3, vec![12, 24, 48], 0.1, 400);
    cfg.lemma = LemmaId::Cor1;
    let one = report_to_csv(&sweep_with(&cfg, RunOptions { threads: Some(1) }).unwrap());
    let many = report_to_csv(&sweep_with(&cfg, RunOptions { threads: Some(6) }).unwrap());
    assert_eq!(one, many);
}

#[test]
fn calibration_from_a_real_sweep_decays() {
    let cal = calibrate_constants(&sweep(&thm2(512, 4, vec![16, 24, 32, 48], 0.1, 2000)).unwrap());
    assert!(cal.reliable, "{cal:?}");
    assert!(cal.c2_hat.unwrap() > 0.0);
    assert!(cal.fit_r2.unwrap() >= 0.9);
}

/// Calibrate on single pairs, plan for a set of `L`, then check the set
/// failure rate on an unseen seed.
#[test]
fn planned_dimension_meets_target_on_fresh_seeds() {
    let base = ExperimentConfig {
        ambient: 200,
        n_grid: vec![8, 12, 16, 20, 24, 28],
        d1: 2,
        d2: 2,
        spectrum: Spectrum::Haar,
        l_count: 2,
        epsilon: 0.3,
        trials: 4000,
        master_seed: 7,
        lemma: LemmaId::Thm1,
        tail_offset: 0.0,
    };
    let cal = calibrate_constants(&sweep(&base).unwrap());
    assert!(cal.reliable, "{cal:?}");

    for (l_count, target) in [(4, 0.1), (8, 0.02)] {
        let plan = plan_sketch_dimension(2, l_count, 0.3, target, &cal).unwrap();
        assert_eq!(plan.binding, BindingConstraint::UnionBound);
        let check = ExperimentConfig { n_grid: vec![plan.n], l_count, trials: 2000, master_seed: 99_999, ..base.clone() };
        let cell = sweep(&check).unwrap().cells[0].clone();
        assert!(cell.p_hat <= 2.0 * target, "L = {l_count}, n = {}: {} > 2 x {target}", plan.n, cell.p_hat);
    }
}

/// Reduced form of the line case: with `x = Phi u2_1` and `g = Phi u0` iid,
/// `aff = X / (X + Y)`, `X = (lam |x| + mu g1)^2 + mu^2 chi2(d-1)`,
/// `Y = mu^2 chi2(n-d)`.
fn line_case_reference(lambda: f64, d: usize, n: usize, samples: usize) -> (f64, f64) {
    let mu2 = 1.0 - lambda * lambda;
    let mut rng = CounterRng::new(77);
    let chi2 = |rng: &mut CounterRng, k: usize| (0..k).map(|_| rng.next_gaussian().powi(2)).sum::<f64>();
    let vals: Vec<f64> = (0..samples)
        .map(|_| {
            let r = chi2(&mut rng, n).sqrt();
            let x = (lambda * r + mu2.sqrt() * rng.next_gaussian()).powi(2) + mu2 * chi2(&mut rng, d - 1);
            x / (x + mu2 * chi2(&mut rng, n - d))
        })
        .collect();
    mean_and_se(&vals)
}

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let m = v.len() as f64;
    let mean = v.iter().sum::<f64>() / m;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

#[test]
fn line_case_mean_matches_finite_n_reference() {
    for (lambda, d, n) in [(0.5, 5, 100), (0.9, 3, 20)] {
        let cfg = ExperimentConfig {
            ambient: 300,
            n_grid: vec![],
            d1: 1,
            d2: d,
            spectrum: Spectrum::Prescribed { cosines: vec![lambda] },
            l_count: 2,
            epsilon: 0.3,
            trials: 0,
            master_seed: 31,
            lemma: LemmaId::Lemma4,
            tail_offset: 0.0,
        };
        let vals: Vec<f64> = (0..8000).map(|i| run_pair_trial(&cfg, n, i).unwrap().aff_y_sq).collect();
        let (mean, se) = mean_and_se(&vals);
        let (reference, rse) = line_case_reference(lambda, d, n, 200_000);
        let z = (mean - reference) / (se * se + rse * rse).sqrt();
        assert!(z.abs() <= 4.0, "lambda {lambda}, d {d}, n {n}: {mean} vs {reference}, z {z}");
    }
}
