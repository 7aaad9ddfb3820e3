use std::sync::OnceLock;

use logfactor::protocol::{prepare, Experiment, Preparation, System, SystemConfig};
use logfactor::spectrum::is_prime;

const LARGEST: u64 = 31;

fn system(l: u32) -> &'static System {
    static THREE: OnceLock<System> = OnceLock::new();
    static FIVE: OnceLock<System> = OnceLock::new();
    let cell = if l == 3 { &THREE } else { &FIVE };
    // s-states up to index 31 - K.
    cell.get_or_init(|| System::build(&SystemConfig::new(l, 2 * LARGEST as usize)).unwrap())
}

fn every_prime_pair_factors(l: u32) {
    let sys = system(l);
    let k = sys.k() as u64;
    let primes: Vec<u64> = (k + 1..=LARGEST).filter(|&p| is_prime(p)).collect();
    let mut checked = 0;
    for (i, &q) in primes.iter().enumerate() {
        for &p in &primes[i..] {
            let n = p * q;
            let Preparation::Ready(cfg) = prepare(n, l).unwrap() else { panic!("{n} should be driven") };
            let exp = Experiment::new(sys, &cfg).unwrap();
            for seed in 0..3 {
                let r = exp.run(seed).unwrap();
                assert_eq!(r.factors, Some((p, q)), "L={l} N={n} seed={seed}");
                assert_eq!(r.factors.map(|(a, b)| a * b), Some(n));
            }
            checked += 1;
        }
    }
    assert_eq!(checked, primes.len() * (primes.len() + 1) / 2);
}

#[test]
fn prime_pairs_factor_with_l3() {
    every_prime_pair_factors(3);
}

#[test]
fn prime_pairs_factor_with_l5() {
    every_prime_pair_factors(5);
}

#[test]
fn small_factors_are_divided_out_first() {
    // 2 * 2 * 3 * 5 with K = 3 leaves 5 alone.
    match prepare(60, 5).unwrap() {
        Preparation::NothingToDo { removed, remainder, .. } => {
            assert_eq!((removed, remainder), (vec![2, 2, 3], 5));
        }
        other => panic!("{other:?}"),
    }
    // 2 * 7 * 11 with K = 2 drives 77.
    let Preparation::Ready(cfg) = prepare(154, 3).unwrap() else { panic!() };
    assert_eq!((cfg.n, cfg.predivided), (77, vec![2]));
}
