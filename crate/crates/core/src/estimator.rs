//! Two-stage estimation from multi-trial spike data.
//!
//! 1. Shared-component rates from the sample covariance of per-trial spike
//!    counts: `gamma_ij = |cov_ij| / (2 T)`, with the sign of the covariance
//!    kept as the coupling sign product.
//! 2. Per-neuron maximum likelihood for the marginal rates `(up, down)` with
//!    the plug-in `g_i = sum_j gamma_ij` as a lower bound on both, so that the
//!    recovered private rates `up - g_i`, `down - g_i` stay non-negative.
//!
//! Standard errors come from resampling whole trials.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics;
use crate::error::{MsprError, Result};
use crate::model::{pair_indices, MsprParams, SignMatrix};
use crate::optim::{self, BfgsOptions};
use crate::rng::{substream, Domain};
use crate::simulator::SpikeDataset;
use crate::skellam::{FirstPassage, SkellamRatePair};

/// Lower margin between the up rate and its bound, keeping the first-passage
/// density defined on the boundary.
pub const UP_RATE_MARGIN: f64 = 1e-8;

/// Default number of bootstrap replicates.
pub const DEFAULT_BOOTSTRAP_REPLICATES: usize = 200;

/// Per-trial spike counts, `n_trials x p`.
pub fn trial_counts(data: &SpikeDataset) -> Vec<Vec<u64>> {
    data.trials()
        .iter()
        .map(|t| t.iter().map(|train| train.len() as u64).collect())
        .collect()
}

/// Unbiased (`n - 1` denominator) sample covariance of the columns.
pub fn sample_covariance(counts: &[Vec<u64>]) -> Vec<Vec<f64>> {
    let n = counts.len();
    let p = counts.first().map_or(0, Vec::len);
    let mean: Vec<f64> = (0..p)
        .map(|i| counts.iter().map(|r| r[i] as f64).sum::<f64>() / n as f64)
        .collect();
    let mut cov = vec![vec![0.0; p]; p];
    for i in 0..p {
        for j in i..p {
            let s: f64 = counts
                .iter()
                .map(|r| (r[i] as f64 - mean[i]) * (r[j] as f64 - mean[j]))
                .sum();
            cov[i][j] = s / (n as f64 - 1.0);
            cov[j][i] = cov[i][j];
        }
    }
    cov
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate {
    /// `|cov_ij| / (2 T)`, zero diagonal.
    pub gamma: Vec<Vec<f64>>,
    /// `sign(cov_ij)`, zero diagonal.
    pub sign: Vec<Vec<i8>>,
    /// Sample covariance of per-trial counts.
    pub covariance: Vec<Vec<f64>>,
}

/// Method-of-moments shared-rate estimates from count covariances.
pub fn mom_gamma(data: &SpikeDataset) -> Result<MomentEstimate> {
    if data.n_trials() < 2 {
        return Err(MsprError::InsufficientData(format!(
            "need ≥ 2 trials to estimate count covariances, got {}",
            data.n_trials()
        )));
    }
    let covariance = sample_covariance(&trial_counts(data));
    let p = data.n_neurons();
    let t = data.duration();
    let mut gamma = vec![vec![0.0; p]; p];
    let mut sign = vec![vec![0i8; p]; p];
    for i in 0..p {
        for j in 0..p {
            if i == j {
                continue;
            }
            let c = covariance[i][j];
            gamma[i][j] = c.abs() / (2.0 * t);
            sign[i][j] = if c > 0.0 {
                1
            } else if c < 0.0 {
                -1
            } else {
                0
            };
        }
    }
    Ok(MomentEstimate {
        gamma,
        sign,
        covariance,
    })
}

/// One neuron's observations, reduced to what the marginal likelihood needs.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalSample {
    /// Completed intervals; each trial's first interval is measured from the
    /// trial start, where the process sits in its reset state.
    pub intervals: Vec<f64>,
    /// Per trial, time from the last spike (or trial start) to the end.
    pub censored: Vec<f64>,
    pub n_spikes: usize,
    pub n_trials: usize,
    pub duration: f64,
}

impl MarginalSample {
    pub fn from_trains<S: AsRef<[f64]>>(trains: &[S], duration: f64) -> Self {
        let mut intervals = Vec::new();
        let mut censored = Vec::with_capacity(trains.len());
        let mut n_spikes = 0;
        for train in trains {
            let train = train.as_ref();
            let mut prev = 0.0;
            for &t in train {
                intervals.push(t - prev);
                prev = t;
            }
            n_spikes += train.len();
            censored.push(duration - prev);
        }
        Self {
            intervals,
            censored,
            n_spikes,
            n_trials: trains.len(),
            duration,
        }
    }

    pub fn loglik(&self, fp: &FirstPassage) -> f64 {
        let dens: f64 = self.intervals.iter().map(|&d| fp.ln_density(d)).sum();
        if dens == f64::NEG_INFINITY || dens.is_nan() {
            return f64::NEG_INFINITY;
        }
        dens + fp.ln_survival_many(&self.censored).into_iter().sum::<f64>()
    }

    fn n_terms(&self) -> usize {
        self.intervals.len() + self.censored.len()
    }
}

/// Marginal log-likelihood of one neuron's trains: first-passage densities of
/// every interval plus the survival of each trial's final, censored interval.
pub fn marginal_loglik<S: AsRef<[f64]>>(
    trains: &[S],
    duration: f64,
    rates: SkellamRatePair,
) -> Result<f64> {
    if !(duration > 0.0) {
        return Err(MsprError::domain(format!(
            "duration must be positive, got {duration}"
        )));
    }
    let fp = FirstPassage::new(rates)?;
    Ok(MarginalSample::from_trains(trains, duration).loglik(&fp))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    NotConverged,
    /// No spikes in any trial; the up rate is pinned to its lower bound.
    NoSpikes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronFit {
    /// Marginal up rate.
    pub up: f64,
    /// Marginal down rate.
    pub down: f64,
    pub base_up: f64,
    pub base_down: f64,
    /// Plug-in `sum_j gamma_ij` used as the lower bound.
    pub shared_rate_sum: f64,
    pub status: FitStatus,
    pub iterations: usize,
    pub loglik: f64,
    pub gradient_norm: f64,
    /// `up <= down`: the fitted first-passage law is defective and model ISI
    /// moments do not exist.
    pub defective: bool,
}

impl NeuronFit {
    pub fn rates(&self) -> Result<SkellamRatePair> {
        SkellamRatePair::new(self.up, self.down)
    }
}

fn initial_rates(sample: &MarginalSample) -> (f64, f64) {
    let n = sample.intervals.len();
    let count_rate =
        (sample.n_spikes as f64 / (sample.n_trials as f64 * sample.duration)).max(1e-6);
    if n < 2 {
        return (2.0 * count_rate, count_rate);
    }
    let mean = sample.intervals.iter().sum::<f64>() / n as f64;
    let var = sample
        .intervals
        .iter()
        .map(|d| (d - mean).powi(2))
        .sum::<f64>()
        / (n as f64 - 1.0);
    let diff = 1.0 / mean;
    let sum = (var / mean.powi(3)).max(diff * 1.001);
    (0.5 * (sum + diff), 0.5 * (sum - diff))
}

/// Maximises the marginal likelihood of one neuron over
/// `up >= g + UP_RATE_MARGIN`, `down >= g` using
/// `up = g + margin + exp(u)`, `down = g + exp(v)`.
pub fn fit_marginal(sample: &MarginalSample, g: f64) -> Result<NeuronFit> {
    if !(g >= 0.0) || !g.is_finite() {
        return Err(MsprError::domain(format!(
            "shared rate sum must be non-negative, got {g}"
        )));
    }
    let lower_up = g + UP_RATE_MARGIN;
    let finish = |up: f64, down: f64, status, iterations, gradient_norm| -> Result<NeuronFit> {
        let fp = FirstPassage::new(SkellamRatePair::new(up, down)?)?;
        Ok(NeuronFit {
            up,
            down,
            base_up: up - g,
            base_down: down - g,
            shared_rate_sum: g,
            status,
            iterations,
            loglik: sample.loglik(&fp),
            gradient_norm,
            defective: up <= down,
        })
    };
    if sample.n_spikes == 0 {
        return finish(lower_up, g, FitStatus::NoSpikes, 0, 0.0);
    }

    let n_terms = sample.n_terms() as f64;
    let objective = |z: &[f64]| -> f64 {
        let up = lower_up + z[0].exp();
        let down = g + z[1].exp();
        if !up.is_finite() || !down.is_finite() {
            return f64::NAN;
        }
        let fp = FirstPassage::from_rates_unchecked(up, down);
        let ll = sample.loglik(&fp);
        if ll.is_finite() {
            -ll / n_terms
        } else {
            f64::NAN
        }
    };

    // Moment-matched start projected into the box (keeping its drift), plus
    // a coarse grid of excess rates; the best of these seeds the optimizer.
    let (up0, down0) = initial_rates(sample);
    let drift = (up0 - down0).max(1e-6);
    let excess_down = (down0 - g).max(0.01 * drift);
    let excess_up = (up0 - lower_up).max(excess_down + drift);
    let mut starts = vec![[excess_up.ln(), excess_down.ln()]];
    for a in [0.05, 0.3, 1.0, 3.0, 10.0] {
        for b in [0.01, 0.3, 1.0, 3.0, 10.0] {
            starts.push([(a * drift).ln(), (b * drift).ln()]);
        }
    }
    let start = starts
        .iter()
        .map(|z| (objective(z), *z))
        .filter(|(f, _)| f.is_finite())
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map_or(starts[0], |(_, z)| z);
    let m = optim::minimize(objective, &start, &BfgsOptions::default());
    let status = if m.converged {
        FitStatus::Converged
    } else {
        FitStatus::NotConverged
    };
    finish(
        lower_up + m.x[0].exp(),
        g + m.x[1].exp(),
        status,
        m.iterations,
        m.gradient_norm,
    )
}

/// Profile fit of every neuron given the plug-in row sums `g_i`.
pub fn profile_fit(data: &SpikeDataset, row_sums: &[f64]) -> Result<Vec<NeuronFit>> {
    if row_sums.len() != data.n_neurons() {
        return Err(MsprError::domain(format!(
            "{} row sums for {} neurons",
            row_sums.len(),
            data.n_neurons()
        )));
    }
    (0..data.n_neurons())
        .into_par_iter()
        .map(|i| {
            let sample = MarginalSample::from_trains(&data.neuron_trains(i), data.duration());
            fit_marginal(&sample, row_sums[i])
        })
        .collect()
}

/// Zeroes shared rates whose count correlation is not significant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaThreshold {
    pub alpha: f64,
    pub permutations: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub threshold: Option<GammaThreshold>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFit {
    pub i: usize,
    pub j: usize,
    pub gamma: f64,
    /// `a_ij * a_ji` estimate: sign of the count covariance.
    pub sign: i8,
    pub covariance: f64,
    /// Permutation p-value, present when thresholding was applied.
    pub p_value: Option<f64>,
}

/// All estimated quantities flattened in a fixed order; also used for
/// standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub up: Vec<f64>,
    pub down: Vec<f64>,
    pub base_up: Vec<f64>,
    pub base_down: Vec<f64>,
    /// Pair order `(0,1), (0,2), ..., (p-2,p-1)`.
    pub gamma: Vec<f64>,
}

impl ParameterVector {
    fn flatten(&self) -> Vec<f64> {
        [
            &self.up,
            &self.down,
            &self.base_up,
            &self.base_down,
            &self.gamma,
        ]
        .into_iter()
        .flatten()
        .copied()
        .collect()
    }

    fn unflatten(values: &[f64], p: usize) -> Self {
        let take = |k: usize| values[k * p..(k + 1) * p].to_vec();
        Self {
            up: take(0),
            down: take(1),
            base_up: take(2),
            base_down: take(3),
            gamma: values[4 * p..].to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub requested: usize,
    pub failed: usize,
    pub seed: u64,
    /// Successful replicates in replicate order.
    pub replicates: Vec<ParameterVector>,
    pub se: ParameterVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub n_neurons: usize,
    pub n_trials: usize,
    pub duration: f64,
    /// Denominator of the count covariance.
    pub covariance_denominator: String,
    pub neurons: Vec<NeuronFit>,
    pub pairs: Vec<PairFit>,
    /// Canonical signs: `a_ij = 1` for `i < j`, `a_ji` = estimated sign product.
    pub signs: SignMatrix,
    pub bootstrap: Option<BootstrapSummary>,
}

impl FitResult {
    pub fn estimates(&self) -> ParameterVector {
        ParameterVector {
            up: self.neurons.iter().map(|n| n.up).collect(),
            down: self.neurons.iter().map(|n| n.down).collect(),
            base_up: self.neurons.iter().map(|n| n.base_up).collect(),
            base_down: self.neurons.iter().map(|n| n.base_down).collect(),
            gamma: self.pairs.iter().map(|p| p.gamma).collect(),
        }
    }

    pub fn gamma_matrix(&self) -> Vec<Vec<f64>> {
        let mut g = vec![vec![0.0; self.n_neurons]; self.n_neurons];
        for pair in &self.pairs {
            g[pair.i][pair.j] = pair.gamma;
            g[pair.j][pair.i] = pair.gamma;
        }
        g
    }

    pub fn marginal_rates(&self, i: usize) -> Result<SkellamRatePair> {
        self.neurons
            .get(i)
            .ok_or(MsprError::IndexOutOfRange {
                index: i,
                len: self.n_neurons,
            })?
            .rates()
    }

    /// The fitted model, with canonical signs.
    pub fn to_params(&self) -> Result<MsprParams> {
        MsprParams::new(
            self.neurons.iter().map(|n| n.base_up.max(0.0)).collect(),
            self.neurons.iter().map(|n| n.base_down.max(0.0)).collect(),
            self.gamma_matrix(),
            self.signs.clone(),
        )
    }

    /// True when every neuron with spikes converged.
    pub fn all_converged(&self) -> bool {
        self.neurons
            .iter()
            .all(|n| n.status != FitStatus::NotConverged)
    }
}

/// Moment estimates of shared rates followed by per-neuron profile fits.
pub fn fit(data: &SpikeDataset, opts: &FitOptions) -> Result<FitResult> {
    let moments = mom_gamma(data)?;
    let p = data.n_neurons();
    let mut pairs: Vec<PairFit> = pair_indices(p)
        .into_iter()
        .map(|(i, j)| PairFit {
            i,
            j,
            gamma: moments.gamma[i][j],
            sign: moments.sign[i][j],
            covariance: moments.covariance[i][j],
            p_value: None,
        })
        .collect();

    if let Some(th) = opts.threshold {
        let corr = diagnostics::count_correlations(data, th.permutations, th.seed)?;
        for pair in &mut pairs {
            let pv = corr.p_values[pair.i][pair.j];
            pair.p_value = pv;
            if pv.is_none_or(|v| v >= th.alpha) {
                pair.gamma = 0.0;
                pair.sign = 0;
            }
        }
    }

    let mut row_sums = vec![0.0; p];
    let mut products = vec![vec![0i8; p]; p];
    for pair in &pairs {
        row_sums[pair.i] += pair.gamma;
        row_sums[pair.j] += pair.gamma;
        products[pair.i][pair.j] = pair.sign;
        products[pair.j][pair.i] = pair.sign;
    }
    let neurons = profile_fit(data, &row_sums)?;
    Ok(FitResult {
        n_neurons: p,
        n_trials: data.n_trials(),
        duration: data.duration(),
        covariance_denominator: "n-1".to_string(),
        neurons,
        pairs,
        signs: SignMatrix::canonical(&products),
        bootstrap: None,
    })
}

/// Running mean/variance; exact zero spread for identical inputs.
#[derive(Debug, Clone, Default)]
pub(crate) struct Welford {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub(crate) fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub(crate) fn mean(&self) -> f64 {
        self.mean
    }

    pub(crate) fn sd(&self) -> Option<f64> {
        (self.n >= 2).then(|| (self.m2 / (self.n as f64 - 1.0)).max(0.0).sqrt())
    }
}

pub(crate) fn resample_indices<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

/// Trial-bootstrap standard errors: `replicates` full refits on trials drawn
/// with replacement. Replicates that error or leave a neuron unconverged are
/// excluded and counted; more than 20% failures is an error.
pub fn bootstrap(
    data: &SpikeDataset,
    replicates: usize,
    seed: u64,
    opts: &FitOptions,
) -> Result<BootstrapSummary> {
    if replicates < 2 {
        return Err(MsprError::domain(format!(
            "need ≥ 2 bootstrap replicates, got {replicates}"
        )));
    }
    if data.n_trials() < 2 {
        return Err(MsprError::InsufficientData(format!(
            "need ≥ 2 trials to bootstrap, got {}",
            data.n_trials()
        )));
    }
    let outcomes: Vec<Option<ParameterVector>> = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(seed, Domain::Bootstrap, b as u64);
            let idx = resample_indices(data.n_trials(), &mut rng);
            match fit(&data.resample(&idx), opts) {
                Ok(f) if f.all_converged() => Some(f.estimates()),
                _ => None,
            }
        })
        .collect();
    let failed = outcomes.iter().filter(|o| o.is_none()).count();
    if failed * 5 > replicates {
        return Err(MsprError::BootstrapFailure {
            failed,
            total: replicates,
        });
    }
    let ok: Vec<ParameterVector> = outcomes.into_iter().flatten().collect();
    let p = data.n_neurons();
    let flat: Vec<Vec<f64>> = ok.iter().map(ParameterVector::flatten).collect();
    let width = flat[0].len();
    let se: Vec<f64> = (0..width)
        .map(|k| {
            let mut w = Welford::default();
            flat.iter().for_each(|row| w.push(row[k]));
            w.sd().unwrap_or(f64::NAN)
        })
        .collect();
    Ok(BootstrapSummary {
        requested: replicates,
        failed,
        seed,
        se: ParameterVector::unflatten(&se, p),
        replicates: ok,
    })
}

/// [`fit`] with bootstrap standard errors attached.
pub fn fit_with_bootstrap(
    data: &SpikeDataset,
    replicates: usize,
    seed: u64,
    opts: &FitOptions,
) -> Result<FitResult> {
    let mut result = fit(data, opts)?;
    result.bootstrap = Some(bootstrap(data, replicates, seed, opts)?);
    Ok(result)
}
