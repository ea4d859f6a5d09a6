use smc_core::engine::Target;
use smc_core::models::{GaussianJointOracle, NonMarkovGauss, PolynomialObsModel, Schedule, TemperedGaussModel, TemperingMode, SyntheticExpModel};
use smc_core::rng::{tag, SeedStream};
use smc_core::special::norm_logpdf;

mod common;
use common::{kalman, mean, se};

fn model(beta: f64, d: usize, t: usize, seed: u64) -> NonMarkovGauss {
    let (_, y) = NonMarkovGauss::simulate(0.9, 1.0, beta, 1.0, d, t, &SeedStream::new(seed));
    NonMarkovGauss::new(0.9, 1.0, beta, 1.0, d, y).unwrap()
}

#[test]
fn first_step_density_by_hand() {
    let m = NonMarkovGauss::new(0.9, 1.0, 0.5, 1.0, 1, vec![0.0]).unwrap();
    let lg = m.log_gamma(&[0.0]);
    assert!((lg + (2.0 * std::f64::consts::PI).ln()).abs() < 1e-14);
}

#[test]
fn simulated_x1_variance() {
    let s = SeedStream::new(1);
    let x1: Vec<f64> = (0..100_000u32).map(|r| NonMarkovGauss::simulate(0.9, 1.0, 0.5, 1.0, 1, 1, &s.fork(tag::REPLICATE, r, 0)).0[0]).collect();
    let sq: Vec<f64> = x1.iter().map(|x| x * x).collect();
    assert!((mean(&sq) - 1.0).abs() <= 3.0 * se(&sq));
}

#[test]
fn degenerate_dynamics() {
    let (x, _) = NonMarkovGauss::simulate(0.9, 0.0, 0.5, 1.0, 1, 5, &SeedStream::new(3));
    assert!(x.iter().all(|v| *v == 0.0));
}

#[test]
fn joint_density_matches_oracle() {
    let m = model(0.5, 1, 8, 2);
    let o = GaussianJointOracle::new(&m).unwrap();
    // log p(x, y) = log p(y) + log p(x | y)
    let x = o.posterior_sample(&SeedStream::new(9));
    let cov = o.posterior_cov();
    let ch = cov.cholesky().unwrap();
    let resid: Vec<f64> = x.iter().zip(o.posterior_mean()).map(|(a, b)| a - b).collect();
    let lp = o.log_z_final() + ch.mvn_logpdf(&resid);
    assert!((lp - m.log_gamma(&x)).abs() < 1e-10);
}

#[test]
fn oracle_log_z_matches_kalman() {
    for beta in [0.0, 0.5, 0.99] {
        let m = model(beta, 2, 30, 5);
        let o = GaussianJointOracle::new(&m).unwrap();
        let (lz, means, vars) = kalman(&m);
        assert!((o.log_z_final() - lz).abs() < 1e-8, "beta {beta}");
        for j in 0..2 {
            let (mt, vt) = o.marginal(30, j);
            assert!((mt - means[j]).abs() < 1e-8 && (vt - vars[j]).abs() < 1e-8);
        }
    }
}

#[test]
fn oracle_scalar_cases() {
    let m = NonMarkovGauss::new(0.9, 2.0, 0.3, 0.5, 1, vec![1.3]).unwrap();
    let o = GaussianJointOracle::new(&m).unwrap();
    assert!((o.log_z_final() - norm_logpdf(1.3, 0.0, 2.5)).abs() < 1e-12);
    let (mu, v) = o.marginal(1, 0);
    assert!((mu - 1.3 * 2.0 / 2.5).abs() < 1e-12 && (v - 1.0 / 2.5).abs() < 1e-12);
    let z = NonMarkovGauss::new(0.9, 1.0, 0.5, 1.0, 1, vec![0.0; 6]).unwrap();
    assert!(GaussianJointOracle::new(&z).unwrap().posterior_mean().iter().all(|v| v.abs() < 1e-14));
    assert!(o.log_z(2).is_err());
}

#[test]
fn replicas_add() {
    let m = model(0.5, 2, 6, 8);
    let split = |j: usize| {
        let y: Vec<f64> = (1..=6).map(|t| m.obs(t)[j]).collect();
        GaussianJointOracle::new(&NonMarkovGauss::new(0.9, 1.0, 0.5, 1.0, 1, y).unwrap()).unwrap().log_z_final()
    };
    let both = GaussianJointOracle::new(&m).unwrap().log_z_final();
    assert!((both - split(0) - split(1)).abs() < 1e-10);
}

#[test]
fn oracle_samples_match_covariance() {
    let m = model(0.5, 1, 3, 4);
    let o = GaussianJointOracle::new(&m).unwrap();
    let s = SeedStream::new(6);
    let draws: Vec<Vec<f64>> = (0..100_000u32).map(|r| o.posterior_sample(&s.fork(tag::REPLICATE, r, 0))).collect();
    for a in 0..3 {
        for b in 0..3 {
            let prod: Vec<f64> = draws
                .iter()
                .map(|x| (x[a] - o.posterior_mean()[a]) * (x[b] - o.posterior_mean()[b]))
                .collect();
            assert!((mean(&prod) - o.posterior_cov()[(a, b)]).abs() <= 3.5 * se(&prod));
        }
    }
}

#[test]
fn tempered_conjugate_case() {
    let m = TemperedGaussModel::new(0.0, 1.0, 1.0, vec![1.0], TemperingMode::Likelihood, Schedule(vec![0.0, 1.0])).unwrap();
    let (mu, v, lz) = m.exact();
    assert!((mu - 0.5).abs() < 1e-15 && (v - 0.5).abs() < 1e-15);
    assert!((lz - norm_logpdf(1.0, 0.0, 2.0)).abs() < 1e-15);
    assert_eq!(m.log_lik_at(1, 0.3), 0.0);
    let g = Schedule::geometric(20, 1e-3);
    assert!(g.0.windows(2).all(|w| w[1] > w[0]));
    assert!(TemperedGaussModel::new(0.0, 1.0, 1.0, vec![1.0], TemperingMode::Likelihood, Schedule(vec![0.0, 0.5, 0.2, 1.0])).is_err());
}

#[test]
fn polynomial_quadrature_refinement() {
    for y in [0.0, 1.0, 3.0] {
        let m = PolynomialObsModel::new(y);
        let a = m.oracle_with(1 << 14).log_z;
        let b = m.oracle_with(1 << 16).log_z;
        assert!((a - b).abs() < 1e-8, "y {y}");
    }
    // far tail: log Z decreasing in |y|
    let z: Vec<f64> = [8.0, 12.0, 16.0, 20.0].iter().map(|y| PolynomialObsModel::new(*y).oracle().log_z).collect();
    assert!(z.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn polynomial_oracle_against_independent_simpson() {
    let m = PolynomialObsModel::new(0.0);
    let n = 40_000;
    let h = 20.0 / n as f64;
    let mut s = 0.0;
    for k in 0..=n {
        let x = -10.0 + k as f64 * h;
        let c = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
        s += c * m.log_joint(x).exp();
    }
    let z = s * h / 3.0;
    assert!((m.oracle().log_z - z.ln()).abs() < 1e-8);
}

#[test]
fn synthetic_log_z_brute_force() {
    // T = 2, closed-form subset sum against a 2-D grid
    let m = SyntheticExpModel::new(0.8, 1.0, 1.0, 0.5, vec![0.3, -0.2]);
    let lz = m.log_z().unwrap();
    let n = 800;
    let h = 16.0 / n as f64;
    let mut s = 0.0;
    for a in 0..=n {
        for b in 0..=n {
            let x = [-8.0 + a as f64 * h, -8.0 + b as f64 * h];
            let wa = if a == 0 || a == n { 0.5 } else { 1.0 };
            let wb = if b == 0 || b == n { 0.5 } else { 1.0 };
            s += wa * wb * m.log_gamma(&x).exp();
        }
    }
    assert!((lz - (s * h * h).ln()).abs() < 1e-6);
}
