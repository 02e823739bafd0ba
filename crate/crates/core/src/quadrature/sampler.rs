//! Random-walk Metropolis sampling of the equilibrium density `|ψ|²`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use super::reduce::pairwise_sum;
use super::with_workers;
use crate::error::{Error, Result};
use crate::states::WaveFunction;

const TUNE_ROUND: usize = 200;
const TARGET_ACCEPTANCE: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquilibriumSampler {
    pub seed: u64,
    /// Initial proposal width; defaults to the state's length scale.
    pub step: Option<f64>,
    pub burn_in: usize,
    pub thin: usize,
    pub chains: usize,
    /// Adjust the proposal width during burn-in.
    pub tune: bool,
    #[serde(skip)]
    pub workers: usize,
}

impl Default for EquilibriumSampler {
    fn default() -> Self {
        EquilibriumSampler {
            seed: 20240601,
            step: None,
            burn_in: 10_000,
            thin: 5,
            chains: 4,
            tune: true,
            workers: 0,
        }
    }
}

impl EquilibriumSampler {
    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 || self.chains == 0 {
            return Err(Error::InvalidParameter("mc.thin and mc.chains must be positive".into()));
        }
        if let Some(s) = self.step {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidParameter("mc.step must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Samples in chain order with per-chain diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleSet {
    pub positions: Vec<Vec<f64>>,
    /// Number of samples contributed by each chain, in order.
    pub chain_lengths: Vec<usize>,
    pub acceptance: Vec<f64>,
    pub step: Vec<f64>,
}

/// `n` positions distributed as `|ψ|²`; deterministic for a given seed.
pub fn sample_equilibrium(psi: &WaveFunction, n: usize, sampler: &EquilibriumSampler) -> Result<Vec<Vec<f64>>> {
    Ok(sample_detailed(psi, n, sampler)?.positions)
}

pub fn sample_detailed(psi: &WaveFunction, n: usize, sampler: &EquilibriumSampler) -> Result<SampleSet> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample count must be at least 1".into()));
    }
    sampler.validate()?;
    let chains = sampler.chains.min(n);
    let per = n.div_ceil(chains);
    let lengths: Vec<usize> = (0..chains).map(|c| per.min(n - (c * per).min(n))).collect();
    let runs = with_workers(sampler.workers, || {
        lengths
            .par_iter()
            .enumerate()
            .map(|(c, &len)| run_chain(psi, sampler, c as u64, len))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut set = SampleSet {
        positions: Vec::with_capacity(n),
        chain_lengths: lengths,
        acceptance: Vec::with_capacity(chains),
        step: Vec::with_capacity(chains),
    };
    for (pos, acc, step) in runs {
        set.positions.extend(pos);
        set.acceptance.push(acc);
        set.step.push(step);
    }
    Ok(set)
}

fn run_chain(psi: &WaveFunction, s: &EquilibriumSampler, chain: u64, len: usize) -> Result<(Vec<Vec<f64>>, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    rng.set_stream(chain);
    let dim = psi.dim();
    let log_density = |x: &[f64]| {
        let d = psi.density(x);
        if psi.at_node(x, d.sqrt()) {
            f64::NEG_INFINITY
        } else {
            d.ln()
        }
    };
    let length = 3.0 / psi.decay_rate();
    let spread = length + psi.reach();
    let mut x = vec![0.0; dim];
    let mut lx = f64::NEG_INFINITY;
    for _ in 0..100_000 {
        for v in x.iter_mut() {
            *v = spread * rng.sample::<f64, _>(StandardNormal);
        }
        lx = log_density(&x);
        if lx.is_finite() {
            break;
        }
    }
    if !lx.is_finite() {
        return Err(Error::Tuning { acceptance: 0.0 });
    }
    let mut step = s.step.unwrap_or(length);
    let mut y = vec![0.0; dim];
    let mut propose = |x: &mut Vec<f64>, lx: &mut f64, step: f64, rng: &mut ChaCha8Rng| -> bool {
        for (yi, xi) in y.iter_mut().zip(x.iter()) {
            *yi = xi + step * rng.sample::<f64, _>(StandardNormal);
        }
        let ly = log_density(&y);
        let u: f64 = rng.gen();
        if ly.is_finite() && u.ln() < ly - *lx {
            x.copy_from_slice(&y);
            *lx = ly;
            true
        } else {
            false
        }
    };

    let tune_steps = if s.tune { s.burn_in * 4 / 5 } else { 0 };
    let mut done = 0;
    while done + TUNE_ROUND <= tune_steps {
        let acc = (0..TUNE_ROUND)
            .filter(|_| propose(&mut x, &mut lx, step, &mut rng))
            .count() as f64
            / TUNE_ROUND as f64;
        step *= (2.0 * (acc - TARGET_ACCEPTANCE)).exp();
        done += TUNE_ROUND;
    }
    for _ in done..s.burn_in {
        propose(&mut x, &mut lx, step, &mut rng);
    }

    let mut out = Vec::with_capacity(len);
    let mut accepted = 0usize;
    for _ in 0..len {
        for _ in 0..s.thin {
            if propose(&mut x, &mut lx, step, &mut rng) {
                accepted += 1;
            }
        }
        out.push(x.clone());
    }
    let acceptance = accepted as f64 / (len * s.thin) as f64;
    if !(0.2..=0.8).contains(&acceptance) {
        return Err(Error::Tuning { acceptance });
    }
    Ok((out, acceptance, step))
}

/// Mean and batch-means standard error of a correlated series.
pub fn batch_mean(values: &[f64], batches: usize) -> (f64, f64) {
    let n = values.len();
    let mean = pairwise_sum(values) / n as f64;
    let b = batches.min(n).max(2);
    let size = n / b;
    if size == 0 {
        return (mean, f64::NAN);
    }
    let means: Vec<f64> = (0..b)
        .map(|i| pairwise_sum(&values[i * size..(i + 1) * size]) / size as f64)
        .collect();
    let m = pairwise_sum(&means) / b as f64;
    let var = means.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (b - 1) as f64;
    (mean, (var / b as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{make_state, StateSpec};

    #[test]
    fn deterministic_for_seed() {
        let psi = make_state(&StateSpec::ho1d(0)).unwrap();
        let s = EquilibriumSampler {
            burn_in: 1000,
            ..Default::default()
        };
        let a = sample_equilibrium(&psi, 500, &s).unwrap();
        let b = sample_equilibrium(&psi, 500, &EquilibriumSampler { workers: 2, ..s.clone() }).unwrap();
        assert_eq!(a, b);
        let c = sample_equilibrium(&psi, 500, &EquilibriumSampler { seed: 7, ..s }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn chains_use_distinct_streams() {
        let psi = make_state(&StateSpec::ho1d(0)).unwrap();
        let s = EquilibriumSampler {
            burn_in: 1000,
            chains: 2,
            ..Default::default()
        };
        let set = sample_detailed(&psi, 100, &s).unwrap();
        assert_eq!(set.chain_lengths, vec![50, 50]);
        assert_ne!(set.positions[..50], set.positions[50..]);
    }

    #[test]
    fn ground_state_moments() {
        let psi = make_state(&StateSpec::ho1d(0)).unwrap();
        let xs = sample_equilibrium(&psi, 100_000, &EquilibriumSampler::default()).unwrap();
        let n = xs.len() as f64;
        let mean = xs.iter().map(|x| x[0]).sum::<f64>() / n;
        let var = xs.iter().map(|x| (x[0] - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.01, "{mean}");
        assert!((var - 0.5).abs() < 0.01, "{var}");
    }

    #[test]
    fn batch_means() {
        let v: Vec<f64> = (0..1000).map(|i| (i % 2) as f64).collect();
        let (m, se) = batch_mean(&v, 10);
        assert_eq!(m, 0.5);
        assert_eq!(se, 0.0);
    }
}
