//! Exact event-driven simulation of coupled Skellam processes with resetting.
//!
//! All jump streams are homogeneous Poisson processes, so the superposition is
//! simulated exactly: exponential waiting times at the total rate, then a
//! categorical choice of the stream that fired. Each neuron's state starts at
//! 0; reaching +1 records a spike at that instant and resets the state to 0.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_distr::Exp;
use rayon::prelude::*;

use crate::error::{MsprError, Result};
use crate::model::MsprParams;
use crate::rng::{substream, Domain};

/// Multi-trial spike trains with a common trial duration.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeDataset {
    duration: f64,
    n_neurons: usize,
    /// `trials[r][i]` holds neuron `i`'s spike times in trial `r`.
    trials: Vec<Vec<Vec<f64>>>,
}

impl SpikeDataset {
    pub fn new(duration: f64, n_neurons: usize, trials: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if !(duration > 0.0) || !duration.is_finite() {
            return Err(MsprError::InvalidData(format!(
                "trial duration must be positive and finite, got {duration}"
            )));
        }
        if n_neurons == 0 {
            return Err(MsprError::InvalidData(
                "at least one neuron is required".into(),
            ));
        }
        if trials.is_empty() {
            return Err(MsprError::InvalidData(
                "at least one trial is required".into(),
            ));
        }
        for (r, trial) in trials.iter().enumerate() {
            if trial.len() != n_neurons {
                return Err(MsprError::InvalidData(format!(
                    "trial {r} has {} trains, expected {n_neurons}",
                    trial.len()
                )));
            }
            for (i, train) in trial.iter().enumerate() {
                if let Some(&t) = train.iter().find(|&&t| !(t > 0.0 && t <= duration)) {
                    return Err(MsprError::InvalidData(format!(
                        "trial {r}, neuron {i}: spike time {t} outside (0, {duration}]"
                    )));
                }
                if train.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(MsprError::InvalidData(format!(
                        "trial {r}, neuron {i}: spike times not strictly increasing"
                    )));
                }
            }
        }
        Ok(Self {
            duration,
            n_neurons,
            trials,
        })
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn n_neurons(&self) -> usize {
        self.n_neurons
    }

    pub fn n_trials(&self) -> usize {
        self.trials.len()
    }

    pub fn trials(&self) -> &[Vec<Vec<f64>>] {
        &self.trials
    }

    pub fn train(&self, trial: usize, neuron: usize) -> &[f64] {
        &self.trials[trial][neuron]
    }

    /// Neuron `i`'s train in every trial.
    pub fn neuron_trains(&self, i: usize) -> Vec<&[f64]> {
        self.trials.iter().map(|t| t[i].as_slice()).collect()
    }

    /// Dataset built from the given trials, in the given order (repeats allowed).
    pub fn resample(&self, trial_indices: &[usize]) -> SpikeDataset {
        SpikeDataset {
            duration: self.duration,
            n_neurons: self.n_neurons,
            trials: trial_indices
                .iter()
                .map(|&r| self.trials[r].clone())
                .collect(),
        }
    }

    /// Dataset restricted to (or relabelled by) the given neurons.
    pub fn select_neurons(&self, neurons: &[usize]) -> SpikeDataset {
        SpikeDataset {
            duration: self.duration,
            n_neurons: neurons.len(),
            trials: self
                .trials
                .iter()
                .map(|t| neurons.iter().map(|&i| t[i].clone()).collect())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    PrivateUp(usize),
    PrivateDown(usize),
    /// Adds `a_ij` to `i` and `a_ji` to `j`.
    SharedUp(usize, usize),
    /// Adds `-a_ij` to `i` and `-a_ji` to `j`.
    SharedDown(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamInfo {
    pub kind: StreamKind,
    pub rate: f64,
}

/// One jump seen by one neuron.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEvent {
    pub time: f64,
    pub increment: i8,
    /// Index into [`LatentTrace::streams`].
    pub stream: usize,
    /// The jump took the state to +1, producing a spike and a reset.
    pub reset: bool,
}

/// Per-neuron record of every latent jump in a trial.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTrace {
    pub streams: Vec<StreamInfo>,
    pub events: Vec<Vec<TraceEvent>>,
}

impl LatentTrace {
    /// Unreset latent path `S_i` after each event.
    pub fn latent_path(&self, i: usize) -> Vec<i64> {
        self.events[i]
            .iter()
            .scan(0i64, |s, e| {
                *s += i64::from(e.increment);
                Some(*s)
            })
            .collect()
    }

    /// Latent value `S_i(T)` at the end of the trial.
    pub fn latent_value(&self, i: usize) -> i64 {
        self.events[i].iter().map(|e| i64::from(e.increment)).sum()
    }

    /// Reset path after each event: latent path minus resets so far.
    pub fn reset_path(&self, i: usize) -> Vec<i64> {
        let mut resets = 0i64;
        self.latent_path(i)
            .into_iter()
            .zip(&self.events[i])
            .map(|(s, e)| {
                if e.reset {
                    resets += 1;
                }
                s - resets
            })
            .collect()
    }

    pub fn reset_count(&self, i: usize) -> usize {
        self.events[i].iter().filter(|e| e.reset).count()
    }

    /// Number of records (new running maxima at or above 1) of the unreset
    /// latent path.
    pub fn record_count(&self, i: usize) -> usize {
        self.latent_path(i).into_iter().max().unwrap_or(0).max(0) as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub spikes: Vec<Vec<f64>>,
    pub trace: Option<LatentTrace>,
}

struct Streams {
    info: Vec<StreamInfo>,
    /// Affected neurons and increments; shared streams touch two neurons.
    effects: Vec<Vec<(usize, i8)>>,
    total_rate: f64,
}

fn build_streams(params: &MsprParams) -> Streams {
    let p = params.n_neurons();
    let mut info = Vec::new();
    let mut effects = Vec::new();
    let mut push = |kind, rate: f64, eff: Vec<(usize, i8)>| {
        if rate > 0.0 {
            info.push(StreamInfo { kind, rate });
            effects.push(eff);
        }
    };
    for i in 0..p {
        push(StreamKind::PrivateUp(i), params.base_up[i], vec![(i, 1)]);
        push(
            StreamKind::PrivateDown(i),
            params.base_down[i],
            vec![(i, -1)],
        );
    }
    for i in 0..p {
        for j in (i + 1)..p {
            let (a, b) = (params.signs.get(i, j), params.signs.get(j, i));
            if a == 0 {
                continue;
            }
            let g = params.gamma[i][j];
            push(StreamKind::SharedUp(i, j), g, vec![(i, a), (j, b)]);
            push(StreamKind::SharedDown(i, j), g, vec![(i, -a), (j, -b)]);
        }
    }
    let total_rate = info.iter().map(|s| s.rate).sum();
    Streams {
        info,
        effects,
        total_rate,
    }
}

fn check_duration(duration: f64) -> Result<()> {
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(MsprError::domain(format!(
            "trial duration must be positive and finite, got {duration}"
        )));
    }
    Ok(())
}

/// Simulates one trial on `(0, duration]`.
pub fn simulate_trial<R: Rng + ?Sized>(
    params: &MsprParams,
    duration: f64,
    rng: &mut R,
    record_trace: bool,
) -> Result<Trial> {
    params.validate().map_err(MsprError::InvalidParams)?;
    check_duration(duration)?;
    let streams = build_streams(params);
    Ok(run_trial(
        &streams,
        params.n_neurons(),
        duration,
        rng,
        record_trace,
    ))
}

fn run_trial<R: Rng + ?Sized>(
    streams: &Streams,
    p: usize,
    duration: f64,
    rng: &mut R,
    record_trace: bool,
) -> Trial {
    let waiting = Exp::new(streams.total_rate).expect("total rate is positive for valid params");
    let chooser =
        WeightedIndex::new(streams.info.iter().map(|s| s.rate)).expect("positive weights");
    let mut state = vec![0i64; p];
    let mut spikes = vec![Vec::new(); p];
    let mut events = vec![Vec::new(); if record_trace { p } else { 0 }];
    let mut t = 0.0;
    loop {
        t += waiting.sample(rng);
        if t > duration {
            break;
        }
        let stream = chooser.sample(rng);
        for &(i, inc) in &streams.effects[stream] {
            state[i] += i64::from(inc);
            let reset = state[i] == 1;
            if reset {
                spikes[i].push(t);
                state[i] = 0;
            }
            if record_trace {
                events[i].push(TraceEvent {
                    time: t,
                    increment: inc,
                    stream,
                    reset,
                });
            }
        }
    }
    Trial {
        spikes,
        trace: record_trace.then(|| LatentTrace {
            streams: streams.info.clone(),
            events,
        }),
    }
}

/// `n_trials` independent trials, trial `r` drawn from substream `(seed, r)`.
/// Output is identical for identical inputs regardless of thread count.
pub fn simulate_dataset(
    params: &MsprParams,
    duration: f64,
    n_trials: usize,
    seed: u64,
) -> Result<SpikeDataset> {
    let trials = simulate_trials(params, duration, n_trials, seed, false)?;
    SpikeDataset::new(
        duration,
        params.n_neurons(),
        trials.into_iter().map(|t| t.spikes).collect(),
    )
}

/// Like [`simulate_dataset`] but returns the per-trial output, optionally
/// with latent traces. Trials match `simulate_dataset` for the same seed.
pub fn simulate_trials(
    params: &MsprParams,
    duration: f64,
    n_trials: usize,
    seed: u64,
    record_trace: bool,
) -> Result<Vec<Trial>> {
    params.validate().map_err(MsprError::InvalidParams)?;
    check_duration(duration)?;
    if n_trials == 0 {
        return Err(MsprError::domain("at least one trial is required"));
    }
    let streams = build_streams(params);
    let p = params.n_neurons();
    Ok((0..n_trials)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(seed, Domain::Trial, r as u64);
            run_trial(&streams, p, duration, &mut rng, record_trace)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SignMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn reference() -> MsprParams {
        MsprParams::with_pair_rates(
            vec![15.0, 20.0, 10.0],
            vec![10.0, 15.0, 7.0],
            &[5.0, 15.0, 10.0],
        )
        .unwrap()
    }

    #[test]
    fn dataset_validation() {
        assert!(SpikeDataset::new(1.0, 1, vec![vec![vec![0.5, 1.0]]]).is_ok());
        assert!(SpikeDataset::new(1.0, 1, vec![vec![vec![0.0]]]).is_err());
        assert!(SpikeDataset::new(1.0, 1, vec![vec![vec![1.5]]]).is_err());
        assert!(SpikeDataset::new(1.0, 1, vec![vec![vec![0.5, 0.5]]]).is_err());
        assert!(SpikeDataset::new(1.0, 2, vec![vec![vec![0.5]]]).is_err());
        assert!(SpikeDataset::new(1.0, 1, vec![]).is_err());
        assert!(SpikeDataset::new(0.0, 1, vec![vec![vec![]]]).is_err());
    }

    #[test]
    fn pure_up_neuron_spikes_on_every_event() {
        let p = MsprParams::independent(vec![8.0], vec![0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let trial = simulate_trial(&p, 50.0, &mut rng, true).unwrap();
        let trace = trial.trace.unwrap();
        assert_eq!(trial.spikes[0].len(), trace.events[0].len());
        assert!(trace.events[0].iter().all(|e| e.reset && e.increment == 1));
    }

    #[test]
    fn poisson_count_mean() {
        let p = MsprParams::independent(vec![5.0], vec![0.0]).unwrap();
        let data = simulate_dataset(&p, 10.0, 400, 9).unwrap();
        let mean = data.trials().iter().map(|t| t[0].len() as f64).sum::<f64>() / 400.0;
        // Poisson(50) mean, sd of the average is sqrt(50/400)
        assert!(
            (mean - 50.0).abs() < 3.0 * (50.0f64 / 400.0).sqrt(),
            "{mean}"
        );
    }

    #[test]
    fn trace_invariants() {
        let mut p = reference();
        p.signs = SignMatrix::from_rows(vec![vec![0, 1, -1], vec![1, 0, 1], vec![1, -1, 0]]);
        let trials = simulate_trials(&p, 10.0, 20, 4, true).unwrap();
        for trial in trials {
            let trace = trial.trace.unwrap();
            for i in 0..3 {
                assert_eq!(trace.reset_count(i), trial.spikes[i].len());
                assert_eq!(trace.record_count(i), trial.spikes[i].len());
                assert!(trace.reset_path(i).into_iter().all(|s| s <= 0));
                let resets: Vec<f64> = trace.events[i]
                    .iter()
                    .filter(|e| e.reset)
                    .map(|e| e.time)
                    .collect();
                assert_eq!(resets, trial.spikes[i]);
            }
        }
    }

    #[test]
    fn shared_events_hit_both_neurons_at_once() {
        let p = MsprParams::new(
            vec![0.0, 0.0],
            vec![0.0, 0.0],
            vec![vec![0.0, 4.0], vec![4.0, 0.0]],
            SignMatrix::from_rows(vec![vec![0, 1], vec![1, 0]]),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let trial = simulate_trial(&p, 20.0, &mut rng, false).unwrap();
        // identical latent paths give identical spike trains
        assert_eq!(trial.spikes[0], trial.spikes[1]);
        assert!(!trial.spikes[0].is_empty());
    }

    #[test]
    fn determinism_and_independence_of_seeds() {
        let p = reference();
        let a = simulate_dataset(&p, 10.0, 5, 1).unwrap();
        let b = simulate_dataset(&p, 10.0, 5, 1).unwrap();
        let c = simulate_dataset(&p, 10.0, 5, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let one = simulate_dataset(&p, 10.0, 1, 1).unwrap();
        assert_eq!(one.n_trials(), 1);
        assert_eq!(one.trials()[0], a.trials()[0]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = reference();
        assert!(simulate_dataset(&p, 0.0, 5, 1).is_err());
        assert!(simulate_dataset(&p, f64::NAN, 5, 1).is_err());
        assert!(simulate_dataset(&p, 1.0, 0, 1).is_err());
        let mut bad = reference();
        bad.base_up[0] = -1.0;
        assert!(matches!(
            simulate_dataset(&bad, 1.0, 1, 1),
            Err(MsprError::InvalidParams(_))
        ));
    }
}
