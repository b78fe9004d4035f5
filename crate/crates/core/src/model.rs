//! Model parameters and the quantities they imply directly.
//!
//! The latent value of neuron `i` is
//!
//! ```text
//! S_i(t) = Y_i(t) + sum_{j != i} a_ij Y_ij(t)
//! ```
//!
//! with `Y_i ~ Skellam(base_up[i] t, base_down[i] t)` private to neuron `i` and
//! `Y_ij ~ Skellam(gamma_ij t, gamma_ij t)` shared by the pair `{i, j}`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{MsprError, Result};
use crate::skellam::SkellamRatePair;

/// Coupling signs `a_ij in {-1, 0, 1}` with zero diagonal and
/// `a_ij = 0 <=> a_ji = 0`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SignMatrix(Vec<Vec<i8>>);

impl SignMatrix {
    pub fn from_rows(rows: Vec<Vec<i8>>) -> Self {
        SignMatrix(rows)
    }

    pub fn zeros(p: usize) -> Self {
        SignMatrix(vec![vec![0; p]; p])
    }

    /// Canonical form for pairwise sign products: `a_ij = +1` for `i < j` and
    /// `a_ji = s_ij` wherever `s_ij != 0`.
    pub fn canonical(products: &[Vec<i8>]) -> Self {
        let p = products.len();
        let mut rows = vec![vec![0i8; p]; p];
        for i in 0..p {
            for j in (i + 1)..p {
                let s = products[i][j].signum();
                if s != 0 {
                    rows[i][j] = 1;
                    rows[j][i] = s;
                }
            }
        }
        SignMatrix(rows)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, i: usize, j: usize) -> i8 {
        self.0[i][j]
    }

    /// `a_ij * a_ji`: +1 positive coupling, -1 negative, 0 none.
    pub fn product(&self, i: usize, j: usize) -> i8 {
        self.0[i][j] * self.0[j][i]
    }

    pub fn rows(&self) -> &[Vec<i8>] {
        &self.0
    }
}

/// A single invariant breach found by [`MsprParams::validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Full parameterization of a `p`-neuron model. Rates are events per second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsprParams {
    /// Private up rates `lambda_{i1}`.
    pub base_up: Vec<f64>,
    /// Private down rates `lambda_{i2}`.
    pub base_down: Vec<f64>,
    /// Symmetric shared-component rates `gamma_ij`, zero diagonal.
    pub gamma: Vec<Vec<f64>>,
    pub signs: SignMatrix,
}

impl MsprParams {
    /// Builds and validates.
    pub fn new(
        base_up: Vec<f64>,
        base_down: Vec<f64>,
        gamma: Vec<Vec<f64>>,
        signs: SignMatrix,
    ) -> Result<Self> {
        let params = Self {
            base_up,
            base_down,
            gamma,
            signs,
        };
        params.validate().map_err(MsprError::InvalidParams)?;
        Ok(params)
    }

    /// Independent neurons with the given private rates.
    pub fn independent(base_up: Vec<f64>, base_down: Vec<f64>) -> Result<Self> {
        let p = base_up.len();
        Self::new(
            base_up,
            base_down,
            vec![vec![0.0; p]; p],
            SignMatrix::zeros(p),
        )
    }

    /// Builds from pair-indexed shared rates in the order
    /// `(0,1), (0,2), ..., (p-2,p-1)` with all couplings positive
    /// (`a_ij = a_ji = 1` wherever the rate is nonzero).
    pub fn with_pair_rates(
        base_up: Vec<f64>,
        base_down: Vec<f64>,
        pair_rates: &[f64],
    ) -> Result<Self> {
        let p = base_up.len();
        let pairs = pair_indices(p);
        if pair_rates.len() != pairs.len() {
            return Err(MsprError::Config(format!(
                "expected {} pair rates for {p} neurons, got {}",
                pairs.len(),
                pair_rates.len()
            )));
        }
        let mut gamma = vec![vec![0.0; p]; p];
        let mut signs = vec![vec![0i8; p]; p];
        for (&(i, j), &g) in pairs.iter().zip(pair_rates) {
            gamma[i][j] = g;
            gamma[j][i] = g;
            if g > 0.0 {
                signs[i][j] = 1;
                signs[j][i] = 1;
            }
        }
        Self::new(base_up, base_down, gamma, SignMatrix(signs))
    }

    pub fn n_neurons(&self) -> usize {
        self.base_up.len()
    }

    /// Checks every structural invariant and reports all violations at once.
    pub fn validate(&self) -> std::result::Result<(), Vec<Violation>> {
        let mut v = Vec::new();
        let p = self.base_up.len();
        if p == 0 {
            v.push(Violation::new("base_up", "at least one neuron is required"));
        }
        if self.base_down.len() != p {
            v.push(Violation::new(
                "base_down",
                format!("length {} does not match {p} neurons", self.base_down.len()),
            ));
        }
        let gamma_ok = self.gamma.len() == p && self.gamma.iter().all(|r| r.len() == p);
        if !gamma_ok {
            v.push(Violation::new("gamma", format!("must be a {p}x{p} matrix")));
        }
        let signs_ok = self.signs.0.len() == p && self.signs.0.iter().all(|r| r.len() == p);
        if !signs_ok {
            v.push(Violation::new("signs", format!("must be a {p}x{p} matrix")));
        }
        for (name, rates) in [("base_up", &self.base_up), ("base_down", &self.base_down)] {
            for (i, &r) in rates.iter().enumerate() {
                if !r.is_finite() || r < 0.0 {
                    v.push(Violation::new(
                        format!("{name}[{i}]"),
                        format!("rate must be finite and non-negative, got {r}"),
                    ));
                }
            }
        }
        if !gamma_ok || !signs_ok || self.base_down.len() != p {
            return if v.is_empty() { Ok(()) } else { Err(v) };
        }
        for i in 0..p {
            if self.gamma[i][i] != 0.0 {
                v.push(Violation::new(
                    format!("gamma[{i}][{i}]"),
                    "diagonal must be zero",
                ));
            }
            if self.signs.0[i][i] != 0 {
                v.push(Violation::new(
                    format!("signs[{i}][{i}]"),
                    "diagonal must be zero",
                ));
            }
            for j in 0..p {
                let a = self.signs.0[i][j];
                if !(-1..=1).contains(&a) {
                    v.push(Violation::new(
                        format!("signs[{i}][{j}]"),
                        format!("must be -1, 0 or 1, got {a}"),
                    ));
                }
                if j <= i {
                    continue;
                }
                let g = self.gamma[i][j];
                if !g.is_finite() || g < 0.0 {
                    v.push(Violation::new(
                        format!("gamma[{i}][{j}]"),
                        format!("rate must be finite and non-negative, got {g}"),
                    ));
                }
                if g != self.gamma[j][i] {
                    v.push(Violation::new(
                        format!("gamma[{i}][{j}]"),
                        format!("not symmetric: {g} vs {}", self.gamma[j][i]),
                    ));
                }
                let b = self.signs.0[j][i];
                if (a == 0) != (b == 0) {
                    v.push(Violation::new(
                        format!("signs[{i}][{j}]"),
                        format!("a_ij = {a} and a_ji = {b} must be zero together"),
                    ));
                }
                if (g > 0.0) != (a != 0) {
                    v.push(Violation::new(
                        format!("gamma[{i}][{j}]"),
                        format!("shared rate {g} inconsistent with coupling sign {a}"),
                    ));
                }
            }
        }
        if v.is_empty() {
            for i in 0..p {
                let shared = self.shared_rate_sum(i);
                let (up, down) = (self.base_up[i] + shared, self.base_down[i] + shared);
                if !(up > 0.0) {
                    v.push(Violation::new(
                        format!("neuron {i}"),
                        format!("marginal up rate must be positive, got {up}"),
                    ));
                }
                if !(up + down > 0.0) {
                    v.push(Violation::new(
                        format!("neuron {i}"),
                        "marginal rates are all zero",
                    ));
                }
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(v)
        }
    }

    fn shared_rate_sum(&self, i: usize) -> f64 {
        (0..self.n_neurons())
            .filter(|&j| j != i && self.signs.0[i][j] != 0)
            .map(|j| self.gamma[i][j])
            .sum()
    }

    /// Up/down rates of neuron `i`'s own latent process after absorbing the
    /// shared components it participates in.
    pub fn marginal_rates(&self, i: usize) -> Result<SkellamRatePair> {
        let p = self.n_neurons();
        if i >= p {
            return Err(MsprError::IndexOutOfRange { index: i, len: p });
        }
        let shared = self.shared_rate_sum(i);
        SkellamRatePair::new(self.base_up[i] + shared, self.base_down[i] + shared)
    }

    /// Model covariance of the latent values `S_i(t)`, `S_j(t)`:
    /// `2 a_ij a_ji gamma_ij t`.
    pub fn count_covariance(&self, i: usize, j: usize, t: f64) -> Result<f64> {
        let p = self.n_neurons();
        for idx in [i, j] {
            if idx >= p {
                return Err(MsprError::IndexOutOfRange { index: idx, len: p });
            }
        }
        if i == j {
            return Err(MsprError::domain(
                "covariance requires two distinct neurons",
            ));
        }
        if !(t > 0.0) || !t.is_finite() {
            return Err(MsprError::domain(format!(
                "duration must be positive, got {t}"
            )));
        }
        let s = f64::from(self.signs.product(i, j));
        Ok(2.0 * s * self.gamma[i][j] * t)
    }
}

/// Unordered pairs `(i, j)`, `i < j`, in row-major order.
pub fn pair_indices(p: usize) -> Vec<(usize, usize)> {
    (0..p)
        .flat_map(|i| ((i + 1)..p).map(move |j| (i, j)))
        .collect()
}
