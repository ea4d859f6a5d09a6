use smc_core::rng::{philox4x32, tag, Address, SeedStream};
use smc_core::special::{poisson_from_uniform, std_normal_cdf};
use smc_core::stats;

mod common;
use common::{mean, se};

#[test]
fn philox_known_answers() {
    assert_eq!(philox4x32([0; 4], [0; 2]), [0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8]);
    assert_eq!(philox4x32([u32::MAX; 4], [u32::MAX; 2]), [0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd]);
    assert_eq!(
        philox4x32([0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344], [0xa4093822, 0x299f31d0]),
        [0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1]
    );
}

#[test]
fn draws_are_pure_functions_of_address() {
    let s = SeedStream::new(7);
    let a = Address::new(tag::PROPOSE, 3, 4, 0);
    assert_eq!(s.uniform(a).to_bits(), SeedStream::new(7).uniform(a).to_bits());
    assert_ne!(s.uniform(a), s.uniform(Address::new(tag::PROPOSE, 3, 5, 0)));
    let mut d = s.draws(tag::PROPOSE, 3, 4);
    assert_eq!(d.uniform().to_bits(), s.uniform(a).to_bits());
    assert_eq!(d.position(), 1);
}

#[test]
fn uniforms_and_normals_have_the_right_law() {
    let s = SeedStream::new(11);
    let u: Vec<f64> = (0..20_000).map(|i| s.uniform(Address::new(tag::USER, 0, i, 0))).collect();
    assert!(u.iter().all(|v| *v > 0.0 && *v < 1.0));
    assert!(stats::ks_one_sample(&u, |x| x).1 > 1e-3);
    let z: Vec<f64> = (0..20_000).map(|i| s.normal(Address::new(tag::USER, 1, i, 0))).collect();
    assert!(stats::ks_one_sample(&z, std_normal_cdf).1 > 1e-3);
}

#[test]
fn forks_are_distinct_and_stable() {
    let s = SeedStream::new(1);
    let a = s.fork(tag::REPLICATE, 0, 0);
    let b = s.fork(tag::REPLICATE, 1, 0);
    assert_ne!(a.key(), b.key());
    assert_eq!(a, SeedStream::new(1).fork(tag::REPLICATE, 0, 0));
}

#[test]
fn crank_nicolson_correlation() {
    let base = SeedStream::new(3);
    let zero = base.crank_nicolson(0.0, &SeedStream::new(4));
    let hi = base.crank_nicolson(0.99, &SeedStream::new(4));
    let n = 100_000u32;
    let e: Vec<f64> = (0..n).map(|i| base.normal(Address::new(tag::USER, 0, i, 0))).collect();
    let e0: Vec<f64> = (0..n).map(|i| zero.normal(Address::new(tag::USER, 0, i, 0))).collect();
    let e9: Vec<f64> = (0..n).map(|i| hi.normal(Address::new(tag::USER, 0, i, 0))).collect();
    let prod0: Vec<f64> = e.iter().zip(&e0).map(|(a, b)| a * b).collect();
    assert!(mean(&prod0).abs() <= 3.0 * se(&prod0));
    let prod9: Vec<f64> = e.iter().zip(&e9).map(|(a, b)| a * b).collect();
    assert!((mean(&prod9) - 0.99).abs() <= 3.0 * se(&prod9));
    // marginal stays standard
    assert!(stats::ks_one_sample(&e9[..10_000], std_normal_cdf).1 > 1e-3);
    let u: Vec<f64> = (0..10_000).map(|i| hi.uniform(Address::new(tag::USER, 1, i, 0))).collect();
    assert!(stats::ks_one_sample(&u, |x| x).1 > 1e-3);
}

#[test]
fn poisson_inversion_mean() {
    let s = SeedStream::new(5);
    let k: Vec<f64> = (0..50_000).map(|i| poisson_from_uniform(2.0, s.uniform(Address::new(tag::USER, 0, i, 0))) as f64).collect();
    assert!((mean(&k) - 2.0).abs() <= 3.0 * se(&k));
    assert_eq!(poisson_from_uniform(2.0, 1e-9), 0);
}
