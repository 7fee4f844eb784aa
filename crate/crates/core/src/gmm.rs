//! Diagonal Gaussian mixture over full action-observation vectors, and
//! conditional-expectation imputation of unperformed observations.
//!
//! Likelihood work is done in the log domain throughout; component variances
//! are floored so responsibilities stay well defined.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::io::{read_json, write_json};
use crate::error::{Error, Result};
use crate::util::log_sum_exp;

pub const VARIANCE_FLOOR: f64 = 1e-4;
pub const DEFAULT_COMPONENTS: usize = 5;
const MAX_ITERS: usize = 200;
const LL_TOL: f64 = 1e-6;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalGmm {
    /// Component weights, summing to one.
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    /// Per-dimension variances, each at least [`VARIANCE_FLOOR`].
    pub variances: Vec<Vec<f64>>,
}

/// Fit result carrying convergence diagnostics.
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub model: DiagonalGmm,
    /// Total log-likelihood after each EM iteration.
    pub log_likelihoods: Vec<f64>,
    /// Number of variance entries clamped to the floor (collapse warnings).
    pub floored_entries: usize,
}

/// Log-density of `x` under component `i`, restricted to dimensions where
/// `mask` is true (all dimensions when `mask` is `None`).
fn component_log_pdf(gmm: &DiagonalGmm, i: usize, x: &[f64], mask: Option<&[bool]>) -> f64 {
    let mut ll = 0.0;
    for d in 0..x.len() {
        if let Some(m) = mask {
            if !m[d] {
                continue;
            }
        }
        let var = gmm.variances[i][d];
        let diff = x[d] - gmm.means[i][d];
        ll -= 0.5 * (LN_2PI + var.ln() + diff * diff / var);
    }
    ll
}

impl DiagonalGmm {
    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    /// Log-density of a full observation vector.
    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        let terms: Vec<f64> = (0..self.num_components())
            .map(|i| self.weights[i].ln() + component_log_pdf(self, i, x, None))
            .collect();
        log_sum_exp(&terms)
    }

    /// Posterior component responsibilities given the observed block:
    /// `w'_i ∝ w_i * N(x_p | mu_ip, Sigma_ip)`. With nothing observed the
    /// prior weights are returned.
    pub fn responsibilities(&self, observed: &[bool], values: &[f64]) -> Result<Vec<f64>> {
        self.check_mask(observed, values)?;
        if observed.iter().all(|&o| !o) {
            return Ok(self.weights.clone());
        }
        let logs: Vec<f64> = (0..self.num_components())
            .map(|i| self.weights[i].ln() + component_log_pdf(self, i, values, Some(observed)))
            .collect();
        let z = log_sum_exp(&logs);
        Ok(logs.into_iter().map(|l| (l - z).exp()).collect())
    }

    /// Conditional expectation of the unobserved block:
    /// `<x_u> = sum_i w'_i mu_iu`. Returns one value per unobserved
    /// dimension in ascending index order; all-observed masks yield an
    /// empty result. Values are clamped to `[0, 1]` since observations are
    /// detection probabilities.
    pub fn impute(&self, observed: &[bool], values: &[f64]) -> Result<Vec<f64>> {
        let resp = self.responsibilities(observed, values)?;
        let mut out = Vec::new();
        for d in 0..self.dim() {
            if observed[d] {
                continue;
            }
            let mean: f64 = resp
                .iter()
                .zip(&self.means)
                .map(|(r, mu)| r * mu[d])
                .sum();
            out.push(mean.clamp(0.0, 1.0));
        }
        Ok(out)
    }

    /// Convenience form of [`DiagonalGmm::impute`]: returns the full-length
    /// vector with observed entries passed through.
    pub fn complete(&self, observed: &[bool], values: &[f64]) -> Result<Vec<f64>> {
        let imputed = self.impute(observed, values)?;
        let mut it = imputed.into_iter();
        Ok(observed
            .iter()
            .zip(values)
            .map(|(&o, &v)| if o { v } else { it.next().unwrap() })
            .collect())
    }

    fn check_mask(&self, observed: &[bool], values: &[f64]) -> Result<()> {
        if observed.len() != self.dim() {
            return Err(Error::Dimension {
                context: "gmm observation mask",
                expected: self.dim(),
                got: observed.len(),
            });
        }
        if values.len() != self.dim() {
            return Err(Error::Dimension {
                context: "gmm observation values",
                expected: self.dim(),
                got: values.len(),
            });
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let gmm: DiagonalGmm = read_json(path.as_ref())?;
        let k = gmm.num_components();
        if k == 0 || gmm.means.len() != k || gmm.variances.len() != k {
            return Err(Error::parse(path.as_ref(), "malformed mixture model"));
        }
        Ok(gmm)
    }
}

/// Squared Euclidean distance.
fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++-style seeding: the first mean is a uniformly drawn row, each
/// subsequent mean is drawn proportionally to squared distance from the
/// nearest already-chosen mean.
fn seed_means(data: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(k);
    means.push(data[rng.random_range(0..data.len())].clone());
    let mut d2: Vec<f64> = data.iter().map(|x| dist2(x, &means[0])).collect();
    while means.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            // All points coincide with chosen means; fall back to uniform.
            data[rng.random_range(0..data.len())].clone()
        } else {
            let mut target = rng.random::<f64>() * total;
            let mut idx = data.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    idx = i;
                    break;
                }
                target -= w;
            }
            data[idx].clone()
        };
        for (i, x) in data.iter().enumerate() {
            d2[i] = d2[i].min(dist2(x, &next));
        }
        means.push(next);
    }
    means
}

/// Fits a diagonal GMM by EM. Runs until the total log-likelihood improves
/// by less than `1e-6` or 200 iterations. Collapsed variances are clamped to
/// [`VARIANCE_FLOOR`] and counted in the returned diagnostics.
pub fn fit_gmm(data: &[Vec<f64>], n_components: usize, seed: u64) -> Result<GmmFit> {
    if data.is_empty() {
        return Err(Error::Training("cannot fit a mixture to no data".into()));
    }
    if n_components == 0 {
        return Err(Error::Training("n_components must be positive".into()));
    }
    if data.len() < n_components {
        return Err(Error::Training(format!(
            "{} rows cannot support {} components",
            data.len(),
            n_components
        )));
    }
    let dim = data[0].len();
    if dim == 0 || data.iter().any(|x| x.len() != dim) {
        return Err(Error::Training("inconsistent data dimensions".into()));
    }

    let n = data.len() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Initial parameters: k-means++ means, uniform weights, data variance.
    let mut data_var = vec![0.0; dim];
    let mut data_mean = vec![0.0; dim];
    for x in data {
        for (m, &v) in data_mean.iter_mut().zip(x) {
            *m += v / n;
        }
    }
    for x in data {
        for d in 0..dim {
            let diff = x[d] - data_mean[d];
            data_var[d] += diff * diff / n;
        }
    }
    data_var
        .iter_mut()
        .for_each(|v| *v = v.max(VARIANCE_FLOOR));

    let mut gmm = DiagonalGmm {
        weights: vec![1.0 / n_components as f64; n_components],
        means: seed_means(data, n_components, &mut rng),
        variances: vec![data_var; n_components],
    };

    let mut log_likelihoods = Vec::new();
    let mut floored_entries = 0usize;
    let mut resp = vec![vec![0.0; n_components]; data.len()];

    for _ in 0..MAX_ITERS {
        // E step.
        let mut total_ll = 0.0;
        for (x, r) in data.iter().zip(resp.iter_mut()) {
            let logs: Vec<f64> = (0..n_components)
                .map(|i| gmm.weights[i].ln() + component_log_pdf(&gmm, i, x, None))
                .collect();
            let z = log_sum_exp(&logs);
            total_ll += z;
            for (ri, &l) in r.iter_mut().zip(&logs) {
                *ri = (l - z).exp();
            }
        }

        // M step.
        for i in 0..n_components {
            let nk: f64 = resp.iter().map(|r| r[i]).sum();
            if nk <= f64::MIN_POSITIVE {
                // Empty component: keep its parameters, floor the weight.
                gmm.weights[i] = f64::MIN_POSITIVE;
                continue;
            }
            gmm.weights[i] = nk / n;
            let mut mean = vec![0.0; dim];
            for (x, r) in data.iter().zip(&resp) {
                for (m, &v) in mean.iter_mut().zip(x) {
                    *m += r[i] * v / nk;
                }
            }
            let mut var = vec![0.0; dim];
            for (x, r) in data.iter().zip(&resp) {
                for d in 0..dim {
                    let diff = x[d] - mean[d];
                    var[d] += r[i] * diff * diff / nk;
                }
            }
            for v in &mut var {
                if *v < VARIANCE_FLOOR {
                    *v = VARIANCE_FLOOR;
                    floored_entries += 1;
                }
            }
            gmm.means[i] = mean;
            gmm.variances[i] = var;
        }
        let wsum: f64 = gmm.weights.iter().sum();
        gmm.weights.iter_mut().for_each(|w| *w /= wsum);

        let converged = log_likelihoods
            .last()
            .is_some_and(|&prev: &f64| (total_ll - prev).abs() < LL_TOL);
        log_likelihoods.push(total_ll);
        if converged {
            break;
        }
    }

    if floored_entries > 0 {
        log::warn!("gmm fit clamped {floored_entries} variance entries to the floor");
    }
    Ok(GmmFit {
        model: gmm,
        log_likelihoods,
        floored_entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn two_cluster_data(seed: u64, n_per: usize) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c0 = vec![0.15, 0.2, 0.25];
        let c1 = vec![0.8, 0.75, 0.7];
        let noise = Normal::new(0.0, 0.02).unwrap();
        let mut data = Vec::new();
        for _ in 0..n_per {
            data.push(c0.iter().map(|m| m + noise.sample(&mut rng)).collect());
        }
        for _ in 0..n_per {
            data.push(c1.iter().map(|m| m + noise.sample(&mut rng)).collect());
        }
        (data, c0, c1)
    }

    #[test]
    fn single_component_recovers_sample_moments() {
        let (data, _, _) = two_cluster_data(3, 40);
        let fit = fit_gmm(&data, 1, 0).unwrap();
        let n = data.len() as f64;
        for d in 0..3 {
            let mean: f64 = data.iter().map(|x| x[d]).sum::<f64>() / n;
            let var: f64 = data.iter().map(|x| (x[d] - mean) * (x[d] - mean)).sum::<f64>() / n;
            assert!((fit.model.means[0][d] - mean).abs() < 1e-9);
            assert!((fit.model.variances[0][d] - var.max(VARIANCE_FLOOR)).abs() < 1e-9);
        }
        assert!((fit.model.weights[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_separated_clusters_recover_centers() {
        let (data, c0, c1) = two_cluster_data(17, 60);
        let fit = fit_gmm(&data, 2, 5).unwrap();
        let m = &fit.model.means;
        // Match components to clusters by the first coordinate.
        let (lo, hi) = if m[0][0] < m[1][0] { (0, 1) } else { (1, 0) };
        for d in 0..3 {
            assert!((m[lo][d] - c0[d]).abs() < 0.05, "dim {d}");
            assert!((m[hi][d] - c1[d]).abs() < 0.05, "dim {d}");
        }
    }

    #[test]
    fn em_log_likelihood_is_monotone() {
        let (data, _, _) = two_cluster_data(9, 50);
        let fit = fit_gmm(&data, 3, 11).unwrap();
        for pair in fit.log_likelihoods.windows(2) {
            assert!(
                pair[1] >= pair[0] - 1e-9,
                "log-likelihood decreased: {} -> {}",
                pair[0],
                pair[1]
            );
        }
    }

    #[test]
    fn empty_data_is_an_error() {
        assert!(fit_gmm(&[], 1, 0).is_err());
        let rows = vec![vec![0.1], vec![0.2]];
        assert!(fit_gmm(&rows, 3, 0).is_err());
    }

    fn toy_gmm() -> DiagonalGmm {
        DiagonalGmm {
            weights: vec![0.4, 0.6],
            means: vec![vec![0.2, 0.3, 0.8], vec![0.7, 0.6, 0.1]],
            variances: vec![vec![0.01, 0.02, 0.03], vec![0.02, 0.01, 0.04]],
        }
    }

    #[test]
    fn single_component_imputes_its_mean_unconditionally() {
        let gmm = DiagonalGmm {
            weights: vec![1.0],
            means: vec![vec![0.3, 0.9]],
            variances: vec![vec![0.01, 0.01]],
        };
        for values in [[0.123, 0.0], [0.9, 0.0]] {
            let out = gmm.impute(&[true, false], &values).unwrap();
            assert_eq!(out.len(), 1);
            assert!((out[0] - 0.9).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_observed_blocks_leave_weights_untouched() {
        let gmm = DiagonalGmm {
            weights: vec![0.3, 0.7],
            means: vec![vec![0.5, 0.2], vec![0.5, 0.9]],
            variances: vec![vec![0.02, 0.01], vec![0.02, 0.03]],
        };
        let resp = gmm.responsibilities(&[true, false], &[0.4, 0.0]).unwrap();
        assert!((resp[0] - 0.3).abs() < 1e-12);
        assert!((resp[1] - 0.7).abs() < 1e-12);
        let out = gmm.impute(&[true, false], &[0.4, 0.0]).unwrap();
        assert!((out[0] - (0.3 * 0.2 + 0.7 * 0.9)).abs() < 1e-12);
    }

    #[test]
    fn no_observation_yields_marginal_mean() {
        let gmm = toy_gmm();
        let out = gmm.impute(&[false, false, false], &[0.0; 3]).unwrap();
        for d in 0..3 {
            let marginal = 0.4 * gmm.means[0][d] + 0.6 * gmm.means[1][d];
            assert!((out[d] - marginal).abs() < 1e-12);
        }
    }

    #[test]
    fn all_observed_returns_empty() {
        let gmm = toy_gmm();
        let out = gmm.impute(&[true, true, true], &[0.2, 0.3, 0.8]).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn responsibilities_form_a_probability_vector() {
        let gmm = toy_gmm();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let values: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
            let mask: Vec<bool> = (0..3).map(|_| rng.random_bool(0.5)).collect();
            let resp = gmm.responsibilities(&mask, &values).unwrap();
            assert!(resp.iter().all(|&r| r >= 0.0));
            assert!((resp.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn point_on_a_separated_component_mean_gets_that_component() {
        let gmm = DiagonalGmm {
            weights: vec![0.5, 0.5],
            means: vec![vec![0.05, 0.1], vec![0.95, 0.9]],
            variances: vec![vec![1e-4, 1e-4], vec![1e-4, 1e-4]],
        };
        let out = gmm.impute(&[true, false], &[0.05, 0.0]).unwrap();
        assert!((out[0] - 0.1).abs() < 1e-9);
        let out = gmm.impute(&[true, false], &[0.95, 0.0]).unwrap();
        assert!((out[0] - 0.9).abs() < 1e-9);
    }

    #[test]
    fn imputation_is_permutation_equivariant() {
        let gmm = toy_gmm();
        let perm = [2usize, 0, 1];
        let permuted = DiagonalGmm {
            weights: gmm.weights.clone(),
            means: gmm
                .means
                .iter()
                .map(|m| perm.iter().map(|&p| m[p]).collect())
                .collect(),
            variances: gmm
                .variances
                .iter()
                .map(|v| perm.iter().map(|&p| v[p]).collect())
                .collect(),
        };
        let mask = [true, false, false];
        let values = [0.0, 0.0, 0.75];
        let p_mask: Vec<bool> = perm.iter().map(|&p| mask[p]).collect();
        let p_values: Vec<f64> = perm.iter().map(|&p| values[p]).collect();

        let full = gmm.complete(&mask, &values).unwrap();
        let p_full = permuted.complete(&p_mask, &p_values).unwrap();
        for (d, &p) in perm.iter().enumerate() {
            assert!((p_full[d] - full[p]).abs() < 1e-12);
        }
    }
}
