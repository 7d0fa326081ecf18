//! Actively odd-parity pairing.
//!
//! Bob pairs each of his 1-bits with a distinct 0-bit, announces the pairs,
//! and Alice keeps a pair only if her two bits also have odd parity. A kept
//! pair yields one bit, the value of its first element. Errors survive only
//! in pairs where both positions are wrong.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Result};

/// Which part of the protocol produced a bit; bookkeeping only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BitTag {
    C,
    E,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BitBatch {
    pub alice: Vec<bool>,
    pub bob: Vec<bool>,
    pub tags: Vec<BitTag>,
}

impl BitBatch {
    pub fn new(alice: Vec<bool>, bob: Vec<bool>, tags: Vec<BitTag>) -> Result<Self> {
        if alice.len() != bob.len() || tags.len() != bob.len() {
            return Err(crate::error::Error::InvalidParameter {
                name: "batch",
                value: bob.len() as f64,
                reason: "alice, bob and tag sequences must have equal length",
            });
        }
        Ok(BitBatch { alice, bob, tags })
    }

    /// Sampled sifted key: Bob's bit is 0 with probability `zero_fraction`,
    /// Alice's differs with probability `err_given_zero` or `err_given_one`.
    pub fn sample(
        n: usize,
        zero_fraction: f64,
        err_given_zero: f64,
        err_given_one: f64,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut alice = Vec::with_capacity(n);
        let mut bob = Vec::with_capacity(n);
        let mut tags = Vec::with_capacity(n);
        for _ in 0..n {
            let b = !rng.random_bool(zero_fraction);
            let err = rng.random_bool(if b { err_given_one } else { err_given_zero });
            alice.push(b ^ err);
            bob.push(b);
            tags.push(if err { BitTag::E } else { BitTag::C });
        }
        BitBatch { alice, bob, tags }
    }

    pub fn len(&self) -> usize {
        self.bob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bob.is_empty()
    }

    pub fn bit_error_rate(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let errs = self
            .alice
            .iter()
            .zip(&self.bob)
            .filter(|(a, b)| a != b)
            .count();
        errs as f64 / self.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AoppStats {
    /// Surviving pairs per input bit.
    pub survival_fraction: f64,
    pub post_bit_error: f64,
    /// Phase-error bound after pairing; not observable from a sampled batch.
    pub post_phase_error: Option<f64>,
    /// Pairs formed per input bit; `min(#0, #1) / n`.
    pub pairing_fraction: f64,
    /// Number of surviving pairs behind the empirical rates.
    pub surviving_pairs: u64,
}

/// Run the pairing on a sampled batch.
pub fn aopp_pair_mc(batch: &BitBatch, seed: u64) -> AoppStats {
    let n = batch.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ones: Vec<usize> = (0..n).filter(|&i| batch.bob[i]).collect();
    let mut zeros: Vec<usize> = (0..n).filter(|&i| !batch.bob[i]).collect();
    ones.shuffle(&mut rng);
    zeros.shuffle(&mut rng);
    let pairs = ones.len().min(zeros.len());
    let mut kept = 0u64;
    let mut wrong = 0u64;
    for (&i, &k) in ones.iter().zip(&zeros) {
        if batch.alice[i] == batch.alice[k] {
            continue;
        }
        kept += 1;
        // the announced order of the pair is random
        let first = if rng.random_bool(0.5) { i } else { k };
        if batch.alice[first] != batch.bob[first] {
            wrong += 1;
        }
    }
    let nf = n.max(1) as f64;
    AoppStats {
        survival_fraction: kept as f64 / nf,
        post_bit_error: if kept == 0 {
            0.0
        } else {
            wrong as f64 / kept as f64
        },
        post_phase_error: None,
        pairing_fraction: pairs as f64 / nf,
        surviving_pairs: kept,
    }
}

/// Leading-order phase-error rate of a surviving pair. Stand-in for the
/// dedicated two-way analysis; every caller goes through this function.
pub fn post_pairing_phase_error(pre_phase_error: f64) -> f64 {
    let e = pre_phase_error.clamp(0.0, 0.5);
    (2.0 * e * (1.0 - e)).min(0.5)
}

/// Expected outcome of [`aopp_pair_mc`] when the error rate differs between
/// Bob's 0-bits and 1-bits.
pub fn aopp_asymptotic_split(
    zero_fraction: f64,
    err_given_zero: f64,
    err_given_one: f64,
    pre_phase_error: f64,
) -> Result<AoppStats> {
    check_probability("zero_fraction", zero_fraction)?;
    check_probability("err_given_zero", err_given_zero)?;
    check_probability("err_given_one", err_given_one)?;
    check_probability("pre_phase_error", pre_phase_error)?;
    let pairing = zero_fraction.min(1.0 - zero_fraction);
    let (e0, e1) = (err_given_zero, err_given_one);
    let both_wrong = e0 * e1;
    let odd = (1.0 - e0) * (1.0 - e1) + both_wrong;
    Ok(AoppStats {
        survival_fraction: pairing * odd,
        post_bit_error: if odd > 0.0 { both_wrong / odd } else { 0.0 },
        post_phase_error: Some(post_pairing_phase_error(pre_phase_error)),
        pairing_fraction: pairing,
        surviving_pairs: 0,
    })
}

/// Expected outcome of [`aopp_pair_mc`] for a class-independent error rate.
pub fn aopp_asymptotic(
    pre_bit_error: f64,
    zero_fraction: f64,
    pre_phase_error: f64,
) -> Result<AoppStats> {
    aopp_asymptotic_split(zero_fraction, pre_bit_error, pre_bit_error, pre_phase_error)
}

/// Draws `n` uniform bits independent of `bob`; used to model no correlation.
pub fn random_alice(bob: &[bool], seed: u64) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    bob.iter().map(|_| rng.random()).collect()
}
