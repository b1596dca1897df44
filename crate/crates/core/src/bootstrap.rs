//! Rademacher multiplier bootstrap for sup-t simultaneous bands.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub replications: usize,
    /// Coverage level, e.g. 0.95.
    pub level: f64,
    pub seed: u64,
    #[serde(default)]
    pub execution: Execution,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions {
            replications: 999,
            level: 0.95,
            seed: 0,
            execution: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimultaneousBand {
    /// Sup-t critical value.
    pub critical_value: f64,
    /// Pointwise standard errors used for studentization.
    pub se: Vec<f64>,
    /// `critical_value * se` per parameter.
    pub half_widths: Vec<f64>,
}

/// Random stream for replication `b`: the master seed picks the key and the
/// replication index picks the ChaCha stream, so draws do not depend on how
/// replications are scheduled across threads.
pub fn replication_rng(seed: u64, b: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(b);
    rng
}

/// Sup-t band from per-unit influence vectors, one per parameter, each of
/// length `N` and scaled so that `se = sqrt(mean(psi^2) / N)`.
///
/// Each replication draws Rademacher weights `v_i` and records
/// `max_p |sum_i v_i psi_ip| / (N se_p)`; the critical value is the
/// `level` quantile of that maximum.
pub fn multiplier_bootstrap(influence: &[&[f64]], opts: &BootstrapOptions) -> Result<SimultaneousBand> {
    if influence.is_empty() {
        return Err(Error::DegenerateInfluence("no parameters".into()));
    }
    if opts.replications < 200 {
        return Err(Error::InvalidArgument(format!(
            "bootstrap needs at least 200 replications, got {}",
            opts.replications
        )));
    }
    if !(opts.level > 0.0 && opts.level < 1.0) {
        return Err(Error::InvalidArgument("level must lie in (0, 1)".into()));
    }
    let n = influence[0].len();
    if n == 0 || influence.iter().any(|v| v.len() != n) {
        return Err(Error::Dimension("influence vectors must share one non-zero length".into()));
    }
    let nf = n as f64;
    let se: Vec<f64> = influence
        .iter()
        .map(|v| (v.iter().map(|x| x * x).sum::<f64>() / nf / nf).sqrt())
        .collect();
    let active: Vec<usize> = (0..se.len()).filter(|&p| se[p] > 0.0 && se[p].is_finite()).collect();
    if active.is_empty() {
        return Err(Error::DegenerateInfluence("every influence vector is zero".into()));
    }

    // Unit-major copy of the active columns for cache-friendly accumulation.
    let k = active.len();
    let mut scaled = vec![0.0; n * k];
    for (j, &p) in active.iter().enumerate() {
        for i in 0..n {
            scaled[i * k + j] = influence[p][i] / (nf * se[p]);
        }
    }

    let mut stats = par::map_range(opts.execution, opts.replications, |b| {
        let mut rng = replication_rng(opts.seed, b as u64);
        let mut acc = vec![0.0; k];
        for i in 0..n {
            let row = &scaled[i * k..(i + 1) * k];
            if rng.random::<bool>() {
                acc.iter_mut().zip(row).for_each(|(a, r)| *a += r);
            } else {
                acc.iter_mut().zip(row).for_each(|(a, r)| *a -= r);
            }
        }
        acc.iter().fold(0.0f64, |m, a| m.max(a.abs()))
    });
    stats.sort_by(f64::total_cmp);
    let idx = ((opts.level * opts.replications as f64).ceil() as usize).clamp(1, opts.replications) - 1;
    let critical_value = stats[idx];
    Ok(SimultaneousBand {
        critical_value,
        half_widths: se.iter().map(|s| s * critical_value).collect(),
        se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn opts(b: usize) -> BootstrapOptions {
        BootstrapOptions {
            replications: b,
            level: 0.95,
            seed: 42,
            execution: Execution::Parallel,
        }
    }

    #[test]
    fn single_parameter_is_close_to_normal_quantile() {
        let psi = gaussian(2000, 1);
        let band = multiplier_bootstrap(&[&psi], &opts(5000)).unwrap();
        assert!((band.critical_value - 1.96).abs() < 0.1, "{}", band.critical_value);
    }

    #[test]
    fn duplicated_parameter_has_same_critical_value() {
        let psi = gaussian(500, 2);
        let one = multiplier_bootstrap(&[&psi], &opts(2000)).unwrap();
        let two = multiplier_bootstrap(&[&psi, &psi], &opts(2000)).unwrap();
        assert_eq!(one.critical_value, two.critical_value);
    }

    #[test]
    fn deterministic_across_execution_modes() {
        let a = gaussian(300, 3);
        let b = gaussian(300, 4);
        let par = multiplier_bootstrap(&[&a, &b], &opts(1000)).unwrap();
        let mut o = opts(1000);
        o.execution = Execution::Sequential;
        let seq = multiplier_bootstrap(&[&a, &b], &o).unwrap();
        assert_eq!(par, seq);
    }

    #[test]
    fn degenerate_and_invalid_inputs() {
        let z = vec![0.0; 10];
        assert!(matches!(
            multiplier_bootstrap(&[&z], &opts(500)),
            Err(Error::DegenerateInfluence(_))
        ));
        let psi = gaussian(10, 5);
        assert!(multiplier_bootstrap(&[&psi], &opts(100)).is_err());
        let short = gaussian(9, 6);
        assert!(multiplier_bootstrap(&[&psi, &short], &opts(500)).is_err());
    }
}
