#![allow(dead_code)]

use permlab::markov::{full_killing_kernel, KillingRates, MarkovModel};
use permlab::SquareMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn m(rows: &[&[f64]]) -> SquareMatrix {
    SquareMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

/// Reversible birth-death chain on three states.
pub fn birth_death() -> MarkovModel {
    MarkovModel::new(m(&[&[0.5, 0.5, 0.0], &[0.25, 0.5, 0.25], &[0.0, 0.5, 0.5]])).unwrap()
}

/// 3-cycle with forward drift 0.8.
pub fn cycle3() -> MarkovModel {
    MarkovModel::cycle(3, 0.8).unwrap()
}

pub fn killing() -> KillingRates {
    KillingRates::new(vec![0.3, 0.1, 0.2]).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random irreducible transition matrix with all entries positive.
pub fn random_chain(n: usize, rng: &mut ChaCha8Rng) -> MarkovModel {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let r: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = r.iter().sum();
            r.iter().map(|x| x / s).collect()
        })
        .collect();
    MarkovModel::new(SquareMatrix::from_rows(&rows).unwrap()).unwrap()
}

/// Green kernel of a random chain with random killing.
pub fn random_markovian_kernel(n: usize, rng: &mut ChaCha8Rng) -> SquareMatrix {
    let model = random_chain(n, rng);
    let h: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    full_killing_kernel(&model.q, &KillingRates::new(h).unwrap()).unwrap().g
}

/// S + K with S symmetric positive definite and K skew.
pub fn random_pd_sym_part(n: usize, rng: &mut ChaCha8Rng) -> SquareMatrix {
    let b = SquareMatrix::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let s = b.mul(&b.transpose()).add(&SquareMatrix::identity(n).scale(0.1));
    let c = SquareMatrix::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
    s.add(&c.sub(&c.transpose()))
}
