//! Skellam distribution and first-passage primitives.
//!
//! A Skellam process `S(t) = N_up(t) - N_down(t)` is the difference of two
//! independent Poisson processes. Its value at time `t` follows a Skellam
//! distribution with means `(up * t, down * t)`. Since the process only moves
//! up in unit steps, the first time it reaches level 1 from 0 has density
//!
//! ```text
//! f(t) = P(S(t) = 1) / t
//!      = exp(-(up + down) t) * sqrt(up / down) * I_1(2 t sqrt(up * down)) / t
//! ```
//!
//! (hitting-time theorem for upward skip-free processes). Every Bessel value is
//! handled in its exponentially scaled form `exp(-x) I_n(x)` so that large
//! `rate * time` products never overflow.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::error::{MsprError, Result};
use crate::quadrature;

/// Up/down jump rates (events per second) of a Skellam process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkellamRatePair {
    up: f64,
    down: f64,
}

impl SkellamRatePair {
    pub fn new(up: f64, down: f64) -> Result<Self> {
        if !up.is_finite() || !down.is_finite() || up < 0.0 || down < 0.0 {
            return Err(MsprError::domain(format!(
                "rates must be finite and non-negative, got ({up}, {down})"
            )));
        }
        if up + down <= 0.0 {
            return Err(MsprError::domain("at least one rate must be positive"));
        }
        Ok(Self { up, down })
    }

    pub fn up(&self) -> f64 {
        self.up
    }

    pub fn down(&self) -> f64 {
        self.down
    }
}

fn check_arg(name: &str, x: f64) -> Result<()> {
    if !x.is_finite() || x < 0.0 {
        return Err(MsprError::domain(format!(
            "{name} must be finite and non-negative, got {x}"
        )));
    }
    Ok(())
}

/// Exponentially scaled modified Bessel function of the first kind,
/// `exp(-x) * I_n(x)`.
pub fn bessel_i_scaled(n: u32, x: f64) -> Result<f64> {
    check_arg("x", x)?;
    Ok(ln_bessel_i_scaled(n, x).exp())
}

/// Natural log of `exp(-x) * I_n(x)`; `-inf` where the value is zero.
pub(crate) fn ln_bessel_i_scaled(n: u32, x: f64) -> f64 {
    if x == 0.0 {
        return if n == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let nf = f64::from(n);
    if x <= 25.0 {
        ln_series(n, x)
    } else if x >= 30.0 && x >= 0.5 * nf * nf {
        asymptotic(n, x).ln()
    } else {
        miller(n, x).ln()
    }
}

fn ln_series(n: u32, x: f64) -> f64 {
    let q = 0.25 * x * x;
    let n = u64::from(n);
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1u64;
    loop {
        term *= q / ((k * (k + n)) as f64);
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
        k += 1;
    }
    n as f64 * (0.5 * x).ln() - ln_factorial(n) - x + sum.ln()
}

/// Hankel expansion for large argument.
fn asymptotic(n: u32, x: f64) -> f64 {
    let mu = 4.0 * f64::from(n) * f64::from(n);
    let mut term = 1.0f64;
    let mut sum = 1.0;
    for k in 1..200u32 {
        let odd = f64::from(2 * k - 1);
        let next = -term * (mu - odd * odd) / (8.0 * f64::from(k) * x);
        if next.abs() > term.abs() && k > 1 {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum / (2.0 * std::f64::consts::PI * x).sqrt()
}

/// Backward recurrence normalised with `exp(-x) [I_0 + 2 sum_k I_k] = 1`.
fn miller(n: u32, x: f64) -> f64 {
    let nf = f64::from(n);
    let start = ((nf * nf + 80.0 * x).sqrt().ceil() as u32 + 20).max(n + 20);
    let mut above = 0.0f64;
    let mut current = 1e-280f64;
    let mut sum = 0.0;
    let mut result = 0.0;
    for k in (1..=start).rev() {
        if k == n {
            result = current;
        }
        sum += 2.0 * current;
        let below = above + 2.0 * f64::from(k) / x * current;
        above = current;
        current = below;
        if current > 1e250 {
            above *= 1e-250;
            current *= 1e-250;
            sum *= 1e-250;
            result *= 1e-250;
        }
    }
    // `current` now holds the (unnormalised) order-0 term
    sum += current;
    if n == 0 {
        result = current;
    }
    result / sum
}

fn poisson_ln_pmf(k: u64, mean: f64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    k as f64 * mean.ln() - mean - ln_factorial(k)
}

/// `P(N_1 - N_2 = k)` for independent `N_1 ~ Poisson(mu1)`, `N_2 ~ Poisson(mu2)`.
pub fn skellam_pmf(k: i64, mu1: f64, mu2: f64) -> Result<f64> {
    check_arg("mu1", mu1)?;
    check_arg("mu2", mu2)?;
    Ok(skellam_ln_pmf(k, mu1, mu2).exp())
}

pub(crate) fn skellam_ln_pmf(k: i64, mu1: f64, mu2: f64) -> f64 {
    if mu2 == 0.0 {
        return if k < 0 {
            f64::NEG_INFINITY
        } else {
            poisson_ln_pmf(k as u64, mu1)
        };
    }
    if mu1 == 0.0 {
        return if k > 0 {
            f64::NEG_INFINITY
        } else {
            poisson_ln_pmf(k.unsigned_abs(), mu2)
        };
    }
    let (s1, s2) = (mu1.sqrt(), mu2.sqrt());
    let x = 2.0 * s1 * s2;
    let order = u32::try_from(k.unsigned_abs()).unwrap_or(u32::MAX);
    -(s1 - s2) * (s1 - s2) + 0.5 * k as f64 * (mu1.ln() - mu2.ln()) + ln_bessel_i_scaled(order, x)
}

/// Draws `S(t) = N_up(t) - N_down(t)`.
pub fn skellam_sample<R: Rng + ?Sized>(rates: SkellamRatePair, t: f64, rng: &mut R) -> Result<i64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(MsprError::domain(format!(
            "duration must be positive, got {t}"
        )));
    }
    let draw = |mean: f64, rng: &mut R| -> Result<i64> {
        if mean == 0.0 {
            return Ok(0);
        }
        let dist = Poisson::new(mean).map_err(|e| MsprError::domain(e.to_string()))?;
        Ok(dist.sample(rng) as i64)
    };
    let up = draw(rates.up * t, rng)?;
    let down = draw(rates.down * t, rng)?;
    Ok(up - down)
}

/// Law of the first time a Skellam process started at 0 reaches level 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstPassage {
    up: f64,
    down: f64,
}

impl FirstPassage {
    pub fn new(rates: SkellamRatePair) -> Result<Self> {
        if rates.up <= 0.0 {
            return Err(MsprError::domain(
                "level 1 is unreachable when the up rate is zero",
            ));
        }
        Ok(Self {
            up: rates.up,
            down: rates.down,
        })
    }

    /// Caller guarantees `up > 0`, `down >= 0`, both finite.
    pub(crate) fn from_rates_unchecked(up: f64, down: f64) -> Self {
        debug_assert!(up > 0.0 && down >= 0.0);
        Self { up, down }
    }

    pub fn rates(&self) -> SkellamRatePair {
        SkellamRatePair {
            up: self.up,
            down: self.down,
        }
    }

    /// Probability that level 1 is ever reached: `min(1, up / down)`.
    pub fn hitting_probability(&self) -> f64 {
        if self.down <= self.up {
            1.0
        } else {
            self.up / self.down
        }
    }

    pub fn ln_density(&self, t: f64) -> f64 {
        if !(t > 0.0) {
            return f64::NEG_INFINITY;
        }
        if t.is_infinite() {
            return f64::NEG_INFINITY;
        }
        if self.down == 0.0 {
            return self.up.ln() - self.up * t;
        }
        let (su, sd) = (self.up.sqrt(), self.down.sqrt());
        let x = 2.0 * t * su * sd;
        -t.ln() - t * (su - sd) * (su - sd) + (su.ln() - sd.ln()) + ln_bessel_i_scaled(1, x)
    }

    pub fn density(&self, t: f64) -> f64 {
        self.ln_density(t).exp()
    }

    fn time_scale(&self) -> f64 {
        1.0 / (self.up + self.down)
    }

    /// Integral of the density over `[a, b]`, `b` possibly infinite. Works
    /// outward from `a` in chunks of doubling width so that mass near `a` is
    /// resolved regardless of how long the interval is.
    fn mass_between(&self, a: f64, b: f64) -> f64 {
        if !(b > a) {
            return 0.0;
        }
        let mut total = 0.0;
        let mut lo = a;
        let mut width = self.time_scale();
        let mut negligible = 0;
        for _ in 0..2000 {
            let hi = (lo + width).min(b);
            let piece = quadrature::integrate(|t| self.density(t), lo, hi, 1e-300, 1e-13).value;
            total += piece;
            if hi >= b {
                break;
            }
            if piece <= 1e-17 * total {
                negligible += 1;
                if negligible >= 2 {
                    break;
                }
            } else {
                negligible = 0;
            }
            lo = hi;
            width *= 2.0;
        }
        total
    }

    /// `P(T <= t)`; tends to the hitting probability as `t -> inf`.
    pub fn cdf(&self, t: f64) -> f64 {
        if !(t > 0.0) {
            return 0.0;
        }
        let mass = self.hitting_probability();
        if t.is_infinite() {
            return mass;
        }
        self.mass_between(0.0, t).clamp(0.0, mass)
    }

    /// `P(T > t)`, including the never-hit mass of a defective law. Computed
    /// from the upper tail so small survival probabilities keep their
    /// relative accuracy.
    pub fn survival(&self, t: f64) -> f64 {
        if !(t > 0.0) {
            return 1.0;
        }
        let defect = 1.0 - self.hitting_probability();
        if t.is_infinite() {
            return defect;
        }
        (defect + self.mass_between(t, f64::INFINITY)).clamp(0.0, 1.0)
    }

    /// `cdf` at every point of an ascending slice, integrating piecewise.
    pub fn cdf_sorted(&self, ts: &[f64]) -> Vec<f64> {
        debug_assert!(ts.windows(2).all(|w| w[0] <= w[1]));
        let mass = self.hitting_probability();
        let mut acc = 0.0;
        let mut prev = 0.0;
        ts.iter()
            .map(|&t| {
                if t > prev {
                    acc += self.mass_between(prev, t);
                    prev = t;
                }
                if t > 0.0 {
                    acc.clamp(0.0, mass)
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// `ln survival` at every point of `ts` (any order), accumulating the
    /// upper tail from the largest point downward.
    pub fn ln_survival_many(&self, ts: &[f64]) -> Vec<f64> {
        let mut order: Vec<usize> = (0..ts.len()).collect();
        order.sort_by(|&a, &b| ts[b].total_cmp(&ts[a]));
        let defect = 1.0 - self.hitting_probability();
        let mut out = vec![0.0; ts.len()];
        let mut tail = 0.0;
        let mut prev = f64::INFINITY;
        for idx in order {
            let t = ts[idx];
            if t <= 0.0 {
                out[idx] = 0.0;
                continue;
            }
            if t < prev {
                tail += self.mass_between(t, prev);
                prev = t;
            }
            out[idx] = (defect + tail).min(1.0).ln();
        }
        out
    }
}

fn first_passage_checked(t: f64, rates: SkellamRatePair) -> Result<FirstPassage> {
    if !(t > 0.0) || t.is_nan() {
        return Err(MsprError::domain(format!("time must be positive, got {t}")));
    }
    FirstPassage::new(rates)
}

/// Density of the first passage from 0 to level 1.
pub fn fp_density(t: f64, rates: SkellamRatePair) -> Result<f64> {
    Ok(first_passage_checked(t, rates)?.density(t))
}

/// Distribution function of the first passage from 0 to level 1; accepts
/// `t = inf`.
pub fn fp_cdf(t: f64, rates: SkellamRatePair) -> Result<f64> {
    Ok(first_passage_checked(t, rates)?.cdf(t))
}

/// Mean and variance of the first-passage time; finite only for `up > down`.
pub fn fp_moments(rates: SkellamRatePair) -> Result<(f64, f64)> {
    let drift = rates.up - rates.down;
    if !(drift > 0.0) {
        return Err(MsprError::domain(format!(
            "first-passage moments are undefined for up rate {} <= down rate {}",
            rates.up, rates.down
        )));
    }
    Ok((1.0 / drift, (rates.up + rates.down) / drift.powi(3)))
}
