//! Randomized-response bit flipping for Bloom filters.
//!
//! The flip probability `p` and the privacy budget `ε` are tied together by
//! `p = 1 / (1 + e^{ε / (2nk)})`, where `n` is the maximum number of q-grams
//! encoded for one record and `k` the number of hash functions.
//!
//! Two mechanisms are provided:
//!
//! * [`Mechanism::Blip`] inverts each bit independently with probability `p`.
//! * [`Mechanism::Rappor`] replaces each bit with probability `p` by a fair
//!   coin, i.e. sets it to 1 w.p. `p/2`, to 0 w.p. `p/2`, and keeps it otherwise.
//!
//! Randomness comes from a counter-based stream keyed by
//! `(seed, record index, bit index)`, so each decision is independent of every
//! other and runs are reproducible regardless of evaluation order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoding::{BloomFilter, EncodedDatabase};
use crate::error::{Error, Result};
use crate::seeds::{splitmix64, unit_f64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    #[default]
    Blip,
    Rappor,
    None,
}

/// `p = 1 / (1 + e^{ε/(2nk)})`.
pub fn flip_prob_from_epsilon(epsilon: f64, n: usize, k: usize) -> f64 {
    assert!(epsilon >= 0.0, "epsilon must be non-negative");
    assert!(n >= 1 && k >= 1, "n and k must be positive");
    1.0 / (1.0 + (epsilon / (2.0 * n as f64 * k as f64)).exp())
}

/// `ε = 2nk · ln((1 − p) / p)` for `0 < p ≤ 0.5`.
pub fn epsilon_from_flip_prob(p: f64, n: usize, k: usize) -> Result<f64> {
    if !(p > 0.0 && p <= 0.5) {
        return Err(Error::Config(format!("flip probability {p} outside (0, 0.5]")));
    }
    if n == 0 || k == 0 {
        return Err(Error::Config("n and k must be positive".into()));
    }
    Ok(2.0 * n as f64 * k as f64 * ((1.0 - p) / p).ln())
}

/// Resolved noise parameters: both `p` and `ε` are known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpParams {
    pub mechanism: Mechanism,
    pub p: f64,
    /// Privacy budget; infinite when `p == 0`.
    pub epsilon: f64,
    /// Maximum number of q-grams per record.
    pub n: usize,
    pub k: usize,
    pub noise_seed: u64,
}

impl DpParams {
    /// Parameters from a flip probability.
    pub fn from_p(mechanism: Mechanism, p: f64, n: usize, k: usize, noise_seed: u64) -> Result<Self> {
        if !(0.0..=0.5).contains(&p) {
            return Err(Error::Config(format!("flip probability {p} outside [0, 0.5]")));
        }
        if n == 0 || k == 0 {
            return Err(Error::Config("n and k must be positive".into()));
        }
        let epsilon = if p == 0.0 { f64::INFINITY } else { epsilon_from_flip_prob(p, n, k)? };
        Ok(DpParams { mechanism, p, epsilon, n, k, noise_seed })
    }

    /// Parameters from a privacy budget.
    pub fn from_epsilon(
        mechanism: Mechanism,
        epsilon: f64,
        n: usize,
        k: usize,
        noise_seed: u64,
    ) -> Result<Self> {
        if !(epsilon >= 0.0) {
            return Err(Error::Config(format!("epsilon {epsilon} must be >= 0")));
        }
        if n == 0 || k == 0 {
            return Err(Error::Config("n and k must be positive".into()));
        }
        let p = flip_prob_from_epsilon(epsilon, n, k);
        Ok(DpParams { mechanism, p, epsilon, n, k, noise_seed })
    }

    /// No perturbation.
    pub fn none(noise_seed: u64) -> Self {
        DpParams { mechanism: Mechanism::None, p: 0.0, epsilon: f64::INFINITY, n: 1, k: 1, noise_seed }
    }

    /// Same parameters with a different seed.
    pub fn with_seed(self, noise_seed: u64) -> Self {
        DpParams { noise_seed, ..self }
    }

    /// Effective flip probability (zero for [`Mechanism::None`]).
    pub fn effective_p(&self) -> f64 {
        match self.mechanism {
            Mechanism::None => 0.0,
            _ => self.p,
        }
    }
}

/// Counter-based uniform stream for one record.
#[derive(Debug, Clone, Copy)]
pub struct NoiseStream {
    key: u64,
}

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

impl NoiseStream {
    pub fn new(seed: u64, record_index: u64) -> Self {
        NoiseStream { key: splitmix64(seed ^ splitmix64(record_index)) }
    }

    /// Uniform draw in `[0, 1)` for bit `index`.
    #[inline]
    pub fn uniform(&self, index: usize) -> f64 {
        unit_f64(splitmix64(self.key.wrapping_add((index as u64).wrapping_mul(GAMMA))))
    }
}

/// Perturbs `bf` with the configured mechanism using `stream`.
pub fn add_dp_noise(bf: &BloomFilter, params: &DpParams, stream: NoiseStream) -> BloomFilter {
    let p = params.p;
    let mut out = bf.clone();
    match params.mechanism {
        Mechanism::None => {}
        _ if p == 0.0 => {}
        Mechanism::Blip => {
            for i in 0..bf.len() {
                if stream.uniform(i) < p {
                    out.assign(i, !bf.get(i));
                }
            }
        }
        Mechanism::Rappor => {
            let half = p / 2.0;
            for i in 0..bf.len() {
                let u = stream.uniform(i);
                if u < half {
                    out.set(i);
                } else if u < p {
                    out.clear(i);
                }
            }
        }
    }
    out
}

/// Perturbs every filter of `db`; entry `i` uses the stream for record index `i`.
pub fn perturb_database(db: &EncodedDatabase, params: &DpParams) -> EncodedDatabase {
    let entries = db
        .entries
        .par_iter()
        .enumerate()
        .map(|(i, (id, bf))| (id.clone(), add_dp_noise(bf, params, NoiseStream::new(params.noise_seed, i as u64))))
        .collect();
    EncodedDatabase { party_id: db.party_id.clone(), entries, fingerprint: db.fingerprint.clone() }
}

/// Expected popcount after perturbing a length-`l` filter with `m` set bits.
pub fn expected_popcount(mechanism: Mechanism, l: usize, m: usize, p: f64) -> f64 {
    let (l, m) = (l as f64, m as f64);
    match mechanism {
        Mechanism::None => m,
        Mechanism::Blip => m * (1.0 - p) + (l - m) * p,
        Mechanism::Rappor => m * (1.0 - p / 2.0) + (l - m) * (p / 2.0),
    }
}
