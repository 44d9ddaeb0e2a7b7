use mee_core::empirical::{pair_counts, pair_stream};
use mee_core::estimator::{objective, relative_entropy_objective, run_2re, EstimatorConfig, Sequential, StopReason};
use mee_core::markov::stationary;
use mee_core::model::{HmmModel, ParameterDomain, SignalFamily, StateOrder};
use mee_core::simulate::{simulate, SimulationConfig};
use nalgebra::DMatrix;

fn example1() -> HmmModel {
    let mut domain = ParameterDomain::for_family(&SignalFamily::Poisson);
    domain.order = StateOrder::Descending;
    HmmModel::new(
        DMatrix::from_row_slice(2, 2, &[0.3, 0.7, 0.6, 0.4]),
        vec![vec![2.5], vec![0.5]],
        SignalFamily::Poisson,
        domain,
    )
    .unwrap()
}

fn example2() -> HmmModel {
    HmmModel::with_default_domain(
        DMatrix::from_row_slice(2, 2, &[0.2, 0.8, 0.7, 0.3]),
        vec![vec![0.0], vec![3.0]],
        SignalFamily::GaussianKnownVar { variance: 1.0 },
    )
    .unwrap()
}

fn draw(model: &HmmModel, n: usize, seed: u64) -> Vec<f64> {
    let mu = stationary(model.transition(), 1e-14, 100_000).unwrap().mu;
    simulate(&SimulationConfig { model: model.clone(), initial: mu, n, seed }).unwrap().signals
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn example1_descent_reaches_truth() {
    let truth = example1();
    let y = draw(&truth, 100_000, 20240601);
    let data = pair_counts(&y).unwrap();
    let start = truth.with_theta(&[0.5, 0.5, 3.0, 0.1]).unwrap();
    let cfg = EstimatorConfig { step_size: 0.05, max_iters: 10_000, record_every: 1000, ..Default::default() };
    let trace = run_2re(&data, &start, &cfg, &Sequential).unwrap();
    let err = max_abs_diff(trace.theta_hat.as_slice(), truth.theta().as_slice());
    assert!(err < 0.03, "theta_hat {:?}, error {err}", trace.theta_hat);
    assert_eq!(trace.nonmonotone_steps, 0);
    assert!(trace.records.iter().all(|r| r.relative_entropy.unwrap() > 0.0));
}

#[test]
fn example2_reproduction() {
    let truth = example2();
    let y = draw(&truth, 5000, 20240602);
    let data = pair_stream(&y).unwrap();
    let start = truth.with_theta(&[0.5, 0.5, 0.0, 1.0]).unwrap();
    let cfg = EstimatorConfig { step_size: 0.1, max_iters: 200, stop_tol: 0.0, ..Default::default() };
    let trace = run_2re(&data, &start, &cfg, &Sequential).unwrap();
    let err = max_abs_diff(trace.theta_hat.as_slice(), truth.theta().as_slice());
    assert!(err < 0.05, "theta_hat {:?}, error {err}", trace.theta_hat);
    assert_eq!(trace.iterations, 200);
    for w in trace.records.windows(2) {
        assert!(w[1].objective <= w[0].objective + 1e-12);
    }
}

#[test]
fn start_at_minimizer_terminates_quickly() {
    let truth = example1();
    let y = draw(&truth, 50_000, 99);
    let data = pair_counts(&y).unwrap();
    let tight = EstimatorConfig { step_size: 0.3, max_iters: 3000, stop_tol: 0.0, ..Default::default() };
    let first = run_2re(&data, &truth, &tight, &Sequential).unwrap();
    assert!(max_abs_diff(first.theta_hat.as_slice(), truth.theta().as_slice()) < 0.03);
    let again = run_2re(&data, &first.model_hat, &EstimatorConfig::default(), &Sequential).unwrap();
    assert_eq!(again.stop_reason, StopReason::GradientNorm);
    assert!(again.iterations <= 5, "{}", again.iterations);
    assert!(max_abs_diff(again.theta_hat.as_slice(), first.theta_hat.as_slice()) < 1e-8);
}

#[test]
fn relabelled_start_converges_to_same_estimate() {
    let truth = example1();
    let y = draw(&truth, 50_000, 123);
    let data = pair_counts(&y).unwrap();
    let cfg = EstimatorConfig { step_size: 0.05, line_search: true, max_iters: 5000, ..Default::default() };
    let a = run_2re(&data, &truth.with_theta(&[0.4, 0.5, 2.2, 0.7]).unwrap(), &cfg, &Sequential).unwrap();
    // Same start with the state labels swapped; the projection restores
    // the descending order before the first step.
    let b = run_2re(&data, &truth.with_theta(&[0.5, 0.4, 0.7, 2.2]).unwrap(), &cfg, &Sequential).unwrap();
    assert!(max_abs_diff(a.theta_hat.as_slice(), b.theta_hat.as_slice()) < 1e-4);
    assert!(a.model_hat.beta(0)[0] > a.model_hat.beta(1)[0]);
}

#[test]
fn objective_and_relative_entropy_share_minimizer_on_grid() {
    let truth = example1();
    let y = draw(&truth, 20_000, 7);
    let data = pair_counts(&y).unwrap();
    let mut best_obj = (f64::INFINITY, 0usize);
    let mut best_re = (f64::INFINITY, 0usize);
    let mut k = 0;
    for p12 in [0.6, 0.7, 0.8] {
        for b1 in [2.0, 2.5, 3.0] {
            let model = truth.with_theta(&[p12, 0.6, b1, 0.5]).unwrap();
            let o = objective(&model, &data, 30).unwrap();
            let r = relative_entropy_objective(&model, &data).unwrap();
            if o < best_obj.0 {
                best_obj = (o, k);
            }
            if r < best_re.0 {
                best_re = (r, k);
            }
            k += 1;
        }
    }
    assert_eq!(best_obj.1, best_re.1);
}
