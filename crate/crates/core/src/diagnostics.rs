//! Goodness-of-fit and ensemble-structure summaries.
//!
//! * ISI mean/variance, observed versus model-implied, each with bootstrap SEs.
//! * Pearson correlation of per-trial spike counts with permutation p-values.
//! * PP points: pooled ISIs mapped through the fitted first-passage CDF.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MsprError, Result};
use crate::estimator::{resample_indices, trial_counts, FitResult, FitStatus, Welford};
use crate::model::pair_indices;
use crate::rng::{substream, Domain};
use crate::simulator::SpikeDataset;
use crate::skellam::{fp_moments, FirstPassage, SkellamRatePair};

pub const DEFAULT_PERMUTATIONS: usize = 10_000;
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsiMoments {
    pub mean: f64,
    pub variance: f64,
    pub mean_se: Option<f64>,
    pub variance_se: Option<f64>,
}

/// Differences between consecutive spikes, pooled over trials. Intervals
/// never span trials and the stretch before a trial's first spike is not an
/// ISI.
pub fn pooled_isis<S: AsRef<[f64]>>(trains: &[S]) -> Vec<f64> {
    trains
        .iter()
        .flat_map(|t| t.as_ref().windows(2).map(|w| w[1] - w[0]))
        .collect()
}

fn mean_var(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.len() < 2 {
        return None;
    }
    let mut w = Welford::default();
    xs.iter().for_each(|&x| w.push(x));
    let sd = w.sd()?;
    Some((w.mean(), sd * sd))
}

/// Pooled ISI mean and variance per neuron with trial-bootstrap SEs.
/// Neurons with fewer than two ISIs are `None`.
pub fn isi_moments_observed(
    data: &SpikeDataset,
    replicates: usize,
    seed: u64,
) -> Vec<Option<IsiMoments>> {
    let p = data.n_neurons();
    let point: Vec<Option<(f64, f64)>> = (0..p)
        .map(|i| mean_var(&pooled_isis(&data.neuron_trains(i))))
        .collect();

    let reps: Vec<Vec<Option<(f64, f64)>>> = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(seed, Domain::IsiBootstrap, b as u64);
            let d = data.resample(&resample_indices(data.n_trials(), &mut rng));
            (0..p)
                .map(|i| mean_var(&pooled_isis(&d.neuron_trains(i))))
                .collect()
        })
        .collect();

    point
        .into_iter()
        .enumerate()
        .map(|(i, pt)| {
            let (mean, variance) = pt?;
            let (mut wm, mut wv) = (Welford::default(), Welford::default());
            for (m, v) in reps.iter().filter_map(|r| r[i]) {
                wm.push(m);
                wv.push(v);
            }
            Some(IsiMoments {
                mean,
                variance,
                mean_se: wm.sd(),
                variance_se: wv.sd(),
            })
        })
        .collect()
}

/// Model-implied ISI mean and variance per neuron, with SEs from the fit's
/// bootstrap replicates when present. Neurons whose fitted law is defective
/// (`up <= down`) or that had no spikes are `None`.
pub fn isi_moments_model(fit: &FitResult) -> Vec<Option<IsiMoments>> {
    fit.neurons
        .iter()
        .enumerate()
        .map(|(i, n)| {
            if n.status == FitStatus::NoSpikes {
                return None;
            }
            let (mean, variance) = fp_moments(n.rates().ok()?).ok()?;
            let (mean_se, variance_se) = match &fit.bootstrap {
                Some(b) => {
                    let (mut wm, mut wv) = (Welford::default(), Welford::default());
                    for rep in &b.replicates {
                        let moments =
                            SkellamRatePair::new(rep.up[i], rep.down[i]).and_then(fp_moments);
                        if let Ok((m, v)) = moments {
                            wm.push(m);
                            wv.push(v);
                        }
                    }
                    (wm.sd(), wv.sd())
                }
                None => (None, None),
            };
            Some(IsiMoments {
                mean,
                variance,
                mean_se,
                variance_se,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountCorrelations {
    /// Pearson correlations; `None` where a neuron's counts have zero variance.
    pub correlation: Vec<Vec<Option<f64>>>,
    /// Two-sided permutation p-values; `None` on the diagonal and wherever the
    /// correlation is undefined.
    pub p_values: Vec<Vec<Option<f64>>>,
    pub permutations: usize,
}

fn standardize(xs: &[f64]) -> Option<Vec<f64>> {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    if !(ss > 0.0) {
        return None;
    }
    let scale = ss.sqrt();
    Some(xs.iter().map(|x| (x - mean) / scale).collect())
}

/// Pearson correlations of per-trial counts and permutation p-values.
///
/// For each pair, one neuron's trial labels are shuffled; the same
/// permutation sequence (drawn from `seed`) is used for every pair and the
/// shuffled member of a pair is chosen from the count data alone, so the
/// output does not depend on how neurons are labelled. The p-value is
/// `(1 + #{|r_perm| >= |r_obs|}) / (n_perm + 1)`.
pub fn count_correlations(
    data: &SpikeDataset,
    n_perm: usize,
    seed: u64,
) -> Result<CountCorrelations> {
    let n = data.n_trials();
    if n < 3 {
        return Err(MsprError::InsufficientData(format!(
            "need ≥ 3 trials for count correlations, got {n}"
        )));
    }
    if n_perm == 0 {
        return Err(MsprError::domain("permutation count must be positive"));
    }
    let counts = trial_counts(data);
    let p = data.n_neurons();
    let columns: Vec<Vec<u64>> = (0..p)
        .map(|i| counts.iter().map(|r| r[i]).collect())
        .collect();
    let z: Vec<Option<Vec<f64>>> = columns
        .iter()
        .map(|c| standardize(&c.iter().map(|&x| x as f64).collect::<Vec<_>>()))
        .collect();

    let mut correlation = vec![vec![None; p]; p];
    let mut p_values = vec![vec![None; p]; p];
    for i in 0..p {
        if z[i].is_some() {
            correlation[i][i] = Some(1.0);
        }
    }

    // (fixed, shuffled, observed r) for every pair with a defined correlation
    let tests: Vec<(usize, usize, usize, usize, f64)> = pair_indices(p)
        .into_iter()
        .filter_map(|(i, j)| {
            let (zi, zj) = (z[i].as_ref()?, z[j].as_ref()?);
            let r: f64 = zi
                .iter()
                .zip(zj)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                .clamp(-1.0, 1.0);
            let (fixed, shuffled) = if columns[i] <= columns[j] {
                (i, j)
            } else {
                (j, i)
            };
            Some((i, j, fixed, shuffled, r))
        })
        .collect();

    let exceed: Vec<usize> = (0..n_perm)
        .into_par_iter()
        .map(|k| {
            let mut rng = substream(seed, Domain::Permutation, k as u64);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            tests
                .iter()
                .map(|&(_, _, a, b, r)| {
                    let za = z[a].as_ref().expect("defined");
                    let zb = z[b].as_ref().expect("defined");
                    let rp: f64 = perm.iter().enumerate().map(|(t, &s)| za[t] * zb[s]).sum();
                    usize::from(rp.abs() >= r.abs() * (1.0 - 1e-12))
                })
                .collect::<Vec<usize>>()
        })
        .reduce(
            || vec![0; tests.len()],
            |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect(),
        );

    for (&(i, j, _, _, r), &hits) in tests.iter().zip(&exceed) {
        let pv = (1 + hits) as f64 / (n_perm + 1) as f64;
        correlation[i][j] = Some(r);
        correlation[j][i] = Some(r);
        p_values[i][j] = Some(pv);
        p_values[j][i] = Some(pv);
    }
    Ok(CountCorrelations {
        correlation,
        p_values,
        permutations: n_perm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpPoint {
    /// Fitted CDF of the ISI, normalised by the hitting probability.
    pub model: f64,
    /// Plotting position `(k - 0.5) / m`.
    pub empirical: f64,
}

/// PP points for neuron `i`: sorted pooled ISIs through the fitted
/// first-passage CDF against uniform plotting positions.
pub fn pp_points(data: &SpikeDataset, fit: &FitResult, i: usize) -> Result<Vec<PpPoint>> {
    if i >= data.n_neurons() {
        return Err(MsprError::IndexOutOfRange {
            index: i,
            len: data.n_neurons(),
        });
    }
    let mut isis = pooled_isis(&data.neuron_trains(i));
    if isis.is_empty() {
        return Err(MsprError::InsufficientData(format!(
            "neuron {i} has no ISIs"
        )));
    }
    isis.sort_by(f64::total_cmp);
    let fp = FirstPassage::new(fit.marginal_rates(i)?)?;
    let mass = fp.hitting_probability();
    let m = isis.len() as f64;
    Ok(fp
        .cdf_sorted(&isis)
        .into_iter()
        .enumerate()
        .map(|(k, c)| PpPoint {
            model: (c / mass).clamp(0.0, 1.0),
            empirical: (k as f64 + 0.5) / m,
        })
        .collect())
}

/// Largest `|model - empirical|` over the points.
pub fn pp_max_deviation(points: &[PpPoint]) -> f64 {
    points
        .iter()
        .map(|p| (p.model - p.empirical).abs())
        .fold(0.0, f64::max)
}

/// Asymptotic 99% Kolmogorov–Smirnov band half-width for `m` points, widened
/// by the `0.5 / m` offset of midpoint plotting positions.
pub fn ks_band_99(m: usize) -> f64 {
    1.627_6 / (m as f64).sqrt() + 0.5 / m as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsOptions {
    pub isi_replicates: usize,
    pub permutations: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for DiagnosticsOptions {
    fn default() -> Self {
        Self {
            isi_replicates: crate::estimator::DEFAULT_BOOTSTRAP_REPLICATES,
            permutations: DEFAULT_PERMUTATIONS,
            alpha: DEFAULT_ALPHA,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub alpha: f64,
    pub observed_isi: Vec<Option<IsiMoments>>,
    pub model_isi: Vec<Option<IsiMoments>>,
    pub correlations: CountCorrelations,
    /// `p < alpha`, false where undefined.
    pub significant: Vec<Vec<bool>>,
    /// Per neuron; empty for neurons without ISIs.
    pub pp: Vec<Vec<PpPoint>>,
    pub pp_max_deviation: Vec<Option<f64>>,
}

pub fn diagnose(
    data: &SpikeDataset,
    fit: &FitResult,
    opts: &DiagnosticsOptions,
) -> Result<DiagnosticsReport> {
    if fit.n_neurons != data.n_neurons() {
        return Err(MsprError::InvalidData(format!(
            "fit has {} neurons but data has {}",
            fit.n_neurons,
            data.n_neurons()
        )));
    }
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(MsprError::Config(format!(
            "alpha must lie in (0, 1), got {}",
            opts.alpha
        )));
    }
    let correlations = count_correlations(data, opts.permutations, opts.seed)?;
    let significant = correlations
        .p_values
        .iter()
        .map(|row| {
            row.iter()
                .map(|pv| pv.is_some_and(|v| v < opts.alpha))
                .collect()
        })
        .collect();
    let mut pp = Vec::with_capacity(data.n_neurons());
    for i in 0..data.n_neurons() {
        let usable = fit.neurons[i].status != FitStatus::NoSpikes;
        let has_isi = data.neuron_trains(i).iter().any(|t| t.len() >= 2);
        pp.push(if usable && has_isi {
            pp_points(data, fit, i)?
        } else {
            Vec::new()
        });
    }
    let pp_max_deviation = pp
        .iter()
        .map(|pts| (!pts.is_empty()).then(|| pp_max_deviation(pts)))
        .collect();
    Ok(DiagnosticsReport {
        alpha: opts.alpha,
        observed_isi: isi_moments_observed(data, opts.isi_replicates, opts.seed),
        model_isi: isi_moments_model(fit),
        correlations,
        significant,
        pp,
        pp_max_deviation,
    })
}
