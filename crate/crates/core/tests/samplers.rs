//! Statistical checks of the samplers against analytic moments and the
//! Gibbs reference sampler.

use std::f64::consts::PI;

use trunc_gauss::benchmark::{gen_compound_symmetric, gibbs_oracle, positive_orthant_case, run_benchmark};
use trunc_gauss::benchmark::{BenchOptions, CaseSpec};
use trunc_gauss::diagnostics::mean_and_se;
use trunc_gauss::harmonic::{propose_traced, whiten, HarmonicState};
use trunc_gauss::io::ProblemFile;
use trunc_gauss::rng::stream;
use trunc_gauss::zigzag::{refresh_momentum, zigzag_propose, ZigzagModel, ZigzagState};
use trunc_gauss::{
    sample, BoxConstraints, ChainResult, Constraints, GaussianSpec, LinearConstraints, Matrix, Method, MtnProblem,
    Need, SamplerConfig,
};

fn run(method: Method, problem: &mut MtnProblem, n: usize, seed: u64) -> ChainResult {
    let x0 = problem.default_initial().unwrap();
    let mut rng = stream(seed, method.name());
    sample(method, problem, &x0, n, 0.1, &SamplerConfig::default(), &mut rng).unwrap()
}

fn sample_cov(s: &Matrix) -> Matrix {
    let (n, d) = (s.rows(), s.cols());
    let means: Vec<f64> = (0..d).map(|j| s.column(j).iter().sum::<f64>() / n as f64).collect();
    Matrix::from_fn(d, d, |a, b| {
        (0..n).map(|i| (s[(i, a)] - means[a]) * (s[(i, b)] - means[b])).sum::<f64>() / (n as f64 - 1.0)
    })
}

/// Largest `|Δmean| / combined SE` between two chains over all coordinates.
fn max_z(a: &Matrix, b: &Matrix) -> f64 {
    (0..a.cols())
        .map(|j| {
            let (ma, sa) = mean_and_se(&a.column(j)).unwrap();
            let (mb, sb) = mean_and_se(&b.column(j)).unwrap();
            (ma - mb).abs() / (sa * sa + sb * sb).sqrt()
        })
        .fold(0.0, f64::max)
}

fn exchangeable_orthant(d: usize, rho: f64) -> MtnProblem {
    positive_orthant_case(gen_compound_symmetric(d, rho).unwrap(), vec![0.0; d]).unwrap()
}

fn gibbs_reference(problem: &mut MtnProblem, n: usize, seed: u64) -> Matrix {
    problem.prepare(&[Need::PrecisionMatrix]).unwrap();
    let x0 = problem.default_initial().unwrap();
    gibbs_oracle(problem, &x0, n, &mut stream(seed, "gibbs")).unwrap()
}

#[test]
fn harmonic_half_normal_mean() {
    let mut p = positive_orthant_case(Matrix::identity(1), vec![0.0]).unwrap();
    let chain = run(Method::Harmonic, &mut p, 50_000, 1);
    let (m, se) = mean_and_se(&chain.samples.column(0)).unwrap();
    assert!((m - (2.0 / PI).sqrt()).abs() < 3.0 * se, "{m} ± {se}");
    assert!(chain.samples.as_slice().iter().all(|&x| x >= 0.0));
}

#[test]
fn harmonic_unconstrained_covariance() {
    let cov = Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap();
    let g = GaussianSpec::with_covariance(vec![0.0; 2], cov.clone()).unwrap();
    let mut p = MtnProblem::new(g, Constraints::Box(BoxConstraints::unbounded(2))).unwrap();
    let chain = run(Method::Harmonic, &mut p, 100_000, 2);
    let c = sample_cov(&chain.samples);
    for a in 0..2 {
        for b in 0..2 {
            assert!((c[(a, b)] / cov[(a, b)] - 1.0).abs() < 0.05, "{c:?}");
        }
    }
}

#[test]
fn zigzag_unconstrained_identity_covariance() {
    let d = 10;
    let g = GaussianSpec::with_precision(vec![0.0; d], Matrix::identity(d)).unwrap();
    let mut p = MtnProblem::new(g, Constraints::Box(BoxConstraints::unbounded(d))).unwrap();
    let chain = run(Method::Zigzag, &mut p, 100_000, 3);
    let c = sample_cov(&chain.samples);
    for a in 0..d {
        for b in 0..d {
            let target = if a == b { 1.0 } else { 0.0 };
            assert!((c[(a, b)] - target).abs() < 0.05, "({a},{b}) = {}", c[(a, b)]);
        }
    }
}

#[test]
fn zigzag_half_normal_moments() {
    let mut p = positive_orthant_case(Matrix::identity(1), vec![0.0]).unwrap();
    let chain = run(Method::Zigzag, &mut p, 50_000, 4);
    let xs = chain.samples.column(0);
    let (m, se) = mean_and_se(&xs).unwrap();
    assert!((m - (2.0 / PI).sqrt()).abs() < 3.0 * se);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m).powi(2)).collect();
    let (v, se_v) = mean_and_se(&sq).unwrap();
    assert!((v - (1.0 - 2.0 / PI)).abs() < 3.0 * se_v);
}

#[test]
fn zigzag_bivariate_orthant_means() {
    // Standard normal on the orthant: each marginal is half normal.
    let mut p = positive_orthant_case(Matrix::identity(2), vec![0.0; 2]).unwrap();
    let chain = run(Method::Zigzag, &mut p, 50_000, 5);
    for j in 0..2 {
        let (m, se) = mean_and_se(&chain.samples.column(j)).unwrap();
        assert!((m - 0.797_884_560_8).abs() < 3.0 * se, "coord {j}: {m} ± {se}");
    }
}

#[test]
fn nuts_unconstrained_standard_normal() {
    let g = GaussianSpec::with_precision(vec![0.0], Matrix::identity(1)).unwrap();
    let mut p = MtnProblem::new(g, Constraints::Box(BoxConstraints::unbounded(1))).unwrap();
    let chain = run(Method::ZigzagNuts, &mut p, 50_000, 6);
    let xs = chain.samples.column(0);
    let (m, se) = mean_and_se(&xs).unwrap();
    assert!(m.abs() < 3.0 * se, "{m} ± {se}");
    let sq: Vec<f64> = xs.iter().map(|x| (x - m).powi(2)).collect();
    let (v, se_v) = mean_and_se(&sq).unwrap();
    assert!((v - 1.0).abs() < 3.0 * se_v, "{v} ± {se_v}");
}

#[test]
fn samplers_agree_with_gibbs_on_exchangeable_orthant() {
    let mut p = exchangeable_orthant(3, 0.5);
    let reference = gibbs_reference(&mut p, 100_000, 7);
    for method in [Method::Harmonic, Method::Zigzag, Method::ZigzagNuts] {
        let chain = run(method, &mut p, 30_000, 7);
        assert!(chain.samples.as_slice().iter().all(|&x| x >= 0.0));
        let z = max_z(&chain.samples, &reference);
        assert!(z < 3.0, "{method}: z = {z}");
    }
}

#[test]
fn zigzag_agrees_with_gibbs_in_two_dimensions() {
    let mut p = exchangeable_orthant(2, 0.5);
    let reference = gibbs_reference(&mut p, 100_000, 8);
    let chain = run(Method::Zigzag, &mut p, 30_000, 8);
    assert!(max_z(&chain.samples, &reference) < 3.0);
}

#[test]
fn harmonic_on_polytope_stays_feasible() {
    // Simplex-like region x ≥ 0, x1 + x2 + x3 ≤ 1 with a shifted mean.
    let f = Matrix::from_rows(&[
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [-1.0, -1.0, -1.0],
    ])
    .unwrap();
    let lin = LinearConstraints::new(f, vec![0.0, 0.0, 0.0, 1.0]).unwrap();
    let g = GaussianSpec::with_covariance(vec![0.5, -0.2, 0.1], gen_compound_symmetric(3, 0.3).unwrap()).unwrap();
    let mut p = MtnProblem::new(g, Constraints::Linear(lin.clone())).unwrap();
    let x0 = vec![0.2, 0.2, 0.2];
    let mut rng = stream(9, "polytope");
    let chain = sample(Method::Harmonic, &mut p, &x0, 5000, 0.1, &SamplerConfig::default(), &mut rng).unwrap();
    for i in 0..chain.samples.rows() {
        assert!(lin.slacks(chain.samples.row(i)).iter().all(|&s| s >= -1e-9));
    }
}

#[test]
fn bounce_positions_lie_on_walls() {
    let d = 6;
    let mut p = exchangeable_orthant(d, 0.6);
    p.prepare(&[Need::CholeskyOfGiven]).unwrap();
    let (white, cons) = whiten(&p).unwrap();
    let mut rng = stream(10, "walls");
    let mut y = white.whiten(&vec![0.5; d]).unwrap();
    let mut hits = 0;
    for _ in 0..300 {
        let v: Vec<f64> = (0..d).map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng)).collect();
        let state = HarmonicState::new(y, v);
        let (out, _) = propose_traced(&state, 1.3, &cons, 100_000, |b| {
            hits += 1;
            let slack = cons.slacks(&b.y)[b.row];
            assert!(slack.abs() <= 1e-9, "slack {slack} at row {}", b.row);
        })
        .unwrap();
        y = out.y;
    }
    assert!(hits > 0);
}

#[test]
fn zigzag_events_respect_bounds() {
    let d = 4;
    let b = BoxConstraints::new(vec![0.0, -1.0, f64::NEG_INFINITY, 0.5], vec![1.0, f64::INFINITY, 2.0, 0.7]).unwrap();
    let phi = trunc_gauss::linalg::invert_spd(&gen_compound_symmetric(d, 0.4).unwrap()).unwrap();
    let model = ZigzagModel::new(phi, vec![0.3; d], b.clone()).unwrap();
    let mut rng = stream(11, "zigzag-box");
    let mut x = vec![0.5, 0.0, 0.0, 0.6];
    for _ in 0..500 {
        let mut s = ZigzagState::new(&model, x, refresh_momentum(&mut rng, d));
        zigzag_propose(&mut s, &model, 2.0, 1_000_000, |st, _| assert!(b.contains(&st.x))).unwrap();
        assert!(b.contains(&s.x));
        x = s.x;
    }
}

#[test]
fn benchmark_cells_are_reproducible() {
    let cases = vec![CaseSpec::Lkj { d: 5, eta: 1.0 }.build(3).unwrap()];
    let opts = BenchOptions {
        seed: 11,
        target_ess: 50.0,
        ..Default::default()
    };
    let methods = [Method::Harmonic, Method::Zigzag];
    let a = run_benchmark(&cases, &methods, &opts);
    let b = run_benchmark(&cases, &methods, &BenchOptions { workers: 2, ..opts });
    for (x, y) in a.iter().zip(&b) {
        let (rx, ry) = (x.result.as_ref().unwrap(), y.result.as_ref().unwrap());
        assert_eq!(rx.samples, ry.samples);
        assert_eq!(rx.ess, ry.ess);
        assert_eq!(rx.n_iterations, ry.n_iterations);
    }
}

#[test]
fn orthant_case_round_trips_through_json() {
    let case = CaseSpec::Lkj { d: 4, eta: 1.0 }.build(5).unwrap();
    let file = ProblemFile::from_problem(&case.problem, None);
    let text = serde_json::to_string(&file).unwrap();
    let (back, _) = serde_json::from_str::<ProblemFile>(&text).unwrap().into_problem().unwrap();
    assert_eq!(back.gaussian().matrix(), case.problem.gaussian().matrix());
    assert_eq!(back.constraints().as_box(), case.problem.constraints().as_box());
}

#[test]
fn far_from_mass_orthant_still_samples() {
    let mut p = positive_orthant_case(Matrix::identity(2), vec![-5.0, -5.0]).unwrap();
    for method in [Method::Harmonic, Method::Zigzag] {
        let chain = run(method, &mut p, 2000, 12);
        assert!(chain.samples.as_slice().iter().all(|&x| x >= 0.0));
    }
}

/// Mean of N(0,1) restricted to [a, b] by composite Simpson quadrature.
fn quadrature_mean(a: f64, b: f64) -> f64 {
    let k = 20_000;
    let h = (b - a) / k as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..=k {
        let x = a + i as f64 * h;
        let w = if i == 0 || i == k { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        // Shift the exponent by a²/2 so the far-tail density stays representable.
        let dens = (-(x * x - a * a) / 2.0).exp();
        num += w * x * dens;
        den += w * dens;
    }
    num / den
}

#[test]
fn gibbs_far_tail_interval_matches_quadrature() {
    let g = GaussianSpec::with_covariance(vec![0.0], Matrix::identity(1)).unwrap();
    let b = BoxConstraints::new(vec![5.0], vec![6.0]).unwrap();
    let mut p = MtnProblem::new(g, Constraints::Box(b)).unwrap();
    let xs = gibbs_reference(&mut p, 20_000, 13).column(0);
    assert!(xs.iter().all(|&x| (5.0..=6.0).contains(&x)));
    let (m, se) = mean_and_se(&xs).unwrap();
    assert!((m - quadrature_mean(5.0, 6.0)).abs() < 3.0 * se, "{m} ± {se}");
}

#[test]
fn second_moments_agree_with_gibbs_on_random_problems() {
    use rand::Rng;
    let mut worst: f64 = 0.0;
    for k in 0..5u64 {
        let mut rng = stream(100 + k, "problem");
        let corr = trunc_gauss::benchmark::gen_lkj(3, 1.0, &mut rng).unwrap();
        let mean: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut p = positive_orthant_case(corr, mean).unwrap();
        let reference = gibbs_reference(&mut p, 60_000, k);
        for method in [Method::Harmonic, Method::Zigzag] {
            let chain = run(method, &mut p, 30_000, k);
            for j in 0..3 {
                let sq = |s: &Matrix| s.column(j).iter().map(|x| x * x).collect::<Vec<f64>>();
                let (ma, sa) = mean_and_se(&sq(&chain.samples)).unwrap();
                let (mb, sb) = mean_and_se(&sq(&reference)).unwrap();
                worst = worst.max((ma - mb).abs() / (sa * sa + sb * sb).sqrt());
            }
        }
    }
    assert!(worst < 3.0, "worst z = {worst}");
}
