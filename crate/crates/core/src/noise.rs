//! Reproducible Wiener increments and uniform streams.
//!
//! Every stream is a ChaCha20 generator keyed by `(master_seed, domain)` and
//! positioned on stream `trajectory_index`, so any trajectory can be
//! regenerated on its own without replaying the others.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// Stream domains; distinct domains never share key material.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Wiener,
    Outcomes,
    Generators,
}

impl Domain {
    fn tag(self) -> u64 {
        match self {
            Domain::Wiener => 0x5749_454e_4552,
            Domain::Outcomes => 0x4f55_5443_4f4d,
            Domain::Generators => 0x4745_4e45_5241,
        }
    }
}

pub fn stream(master_seed: u64, trajectory_index: u64, domain: Domain) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.tag().to_le_bytes());
    let mut rng = ChaCha20Rng::from_seed(key);
    rng.set_stream(trajectory_index);
    rng
}

/// Gaussian increments `dw_k ~ N(0, dt)` for `n_steps` steps and `d` channels.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub seed: u64,
    pub trajectory_index: u64,
    pub dt: f64,
    pub n_steps: usize,
    pub d: usize,
    /// Row-major `[step][channel]`.
    pub increments: Vec<f64>,
}

impl NoisePath {
    pub fn from_increments(dt: f64, d: usize, increments: Vec<f64>) -> Result<Self> {
        validate(dt, 1, d)?;
        if increments.is_empty() || !increments.len().is_multiple_of(d) {
            return Err(Error::invalid("increment count must be a positive multiple of d"));
        }
        if increments.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("increments must be finite"));
        }
        Ok(NoisePath {
            seed: 0,
            trajectory_index: 0,
            dt,
            n_steps: increments.len() / d,
            d,
            increments,
        })
    }

    pub fn step(&self, i: usize) -> &[f64] {
        &self.increments[i * self.d..(i + 1) * self.d]
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    /// Sums consecutive blocks of `factor` increments (same Brownian path,
    /// coarser step).
    pub fn coarsen(&self, factor: usize) -> Result<NoisePath> {
        if factor == 0 || !self.n_steps.is_multiple_of(factor) {
            return Err(Error::invalid(format!(
                "factor {factor} does not divide {} steps",
                self.n_steps
            )));
        }
        let n = self.n_steps / factor;
        let mut inc = vec![0.0; n * self.d];
        for s in 0..self.n_steps {
            for k in 0..self.d {
                inc[(s / factor) * self.d + k] += self.increments[s * self.d + k];
            }
        }
        Ok(NoisePath {
            seed: self.seed,
            trajectory_index: self.trajectory_index,
            dt: self.dt * factor as f64,
            n_steps: n,
            d: self.d,
            increments: inc,
        })
    }
}

fn validate(dt: f64, n_steps: usize, d: usize) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    if n_steps == 0 {
        return Err(Error::invalid("n_steps must be at least 1"));
    }
    if d == 0 {
        return Err(Error::invalid("at least one channel is required"));
    }
    Ok(())
}

pub fn sample_noise_path(
    master_seed: u64,
    trajectory_index: u64,
    dt: f64,
    n_steps: usize,
    d: usize,
) -> Result<NoisePath> {
    validate(dt, n_steps, d)?;
    let mut rng = stream(master_seed, trajectory_index, Domain::Wiener);
    let sd = dt.sqrt();
    let increments = (0..n_steps * d)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            z * sd
        })
        .collect();
    Ok(NoisePath {
        seed: master_seed,
        trajectory_index,
        dt,
        n_steps,
        d,
        increments,
    })
}

/// Uniform variates in `[0, 1)` for discrete outcome sampling.
pub struct UniformStream {
    rng: ChaCha20Rng,
}

impl UniformStream {
    pub fn new(master_seed: u64, trajectory_index: u64) -> Self {
        UniformStream {
            rng: stream(master_seed, trajectory_index, Domain::Outcomes),
        }
    }

    pub fn next_f64(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paths_are_reproducible() {
        let a = sample_noise_path(7, 3, 1e-3, 100, 2).unwrap();
        let b = sample_noise_path(7, 3, 1e-3, 100, 2).unwrap();
        assert_eq!(a, b);
        let c = sample_noise_path(7, 4, 1e-3, 100, 2).unwrap();
        assert_ne!(a.increments, c.increments);
        // a prefix of a longer path is the shorter path
        let long = sample_noise_path(7, 3, 1e-3, 200, 2).unwrap();
        assert_eq!(&long.increments[..200], &a.increments[..]);
    }

    #[test]
    fn invalid_parameters() {
        assert!(sample_noise_path(0, 0, 0.0, 10, 1).is_err());
        assert!(sample_noise_path(0, 0, 1e-3, 0, 1).is_err());
        assert!(sample_noise_path(0, 0, 1e-3, 10, 0).is_err());
    }

    #[test]
    fn coarsening_preserves_totals() {
        let a = sample_noise_path(1, 0, 1e-3, 120, 1).unwrap();
        let c = a.coarsen(4).unwrap();
        assert_eq!(c.n_steps, 30);
        assert!((c.dt - 4e-3).abs() < 1e-18);
        let t1: f64 = a.increments.iter().sum();
        let t2: f64 = c.increments.iter().sum();
        assert!((t1 - t2).abs() < 1e-12);
        assert!(a.coarsen(7).is_err());
    }

    #[test]
    fn domains_are_separated() {
        let mut u = UniformStream::new(5, 0);
        let mut w = stream(5, 0, Domain::Wiener);
        let a: u64 = w.random();
        let first = u.next_f64();
        assert!((0.0..1.0).contains(&first));
        let mut w2 = stream(5, 0, Domain::Outcomes);
        let b: u64 = w2.random();
        assert_ne!(a, b);
    }
}
