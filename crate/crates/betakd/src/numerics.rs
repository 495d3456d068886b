//! Numerically robust primitives over logit and probability vectors.
//!
//! Everything here is a pure function on immutable inputs, in natural log
//! and double precision. Softmax goes through a max-shifted log-sum-exp so
//! it stays finite for any finite logits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability floor applied before any log of a probability.
pub const PROB_FLOOR: f64 = 1e-12;

/// A token position's pre-softmax scores. Length >= 2, all entries finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidLogits(format!(
                "length {} < 2",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidLogits(format!("non-finite entry {bad}")));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// A point on the probability simplex: entries in [0, 1] summing to 1
/// within 1e-9.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidProbs(format!(
                "length {} < 2",
                values.len()
            )));
        }
        if let Some(bad) = values
            .iter()
            .find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(Error::InvalidProbs(format!("entry {bad} outside [0, 1]")));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidProbs(format!("sum {sum} != 1")));
        }
        Ok(Self(values))
    }

    /// Constructor for values already guaranteed valid (softmax output).
    pub(crate) fn new_unchecked(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Softmax temperature; strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Temperature(f64);

impl Temperature {
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || value <= 0.0 {
            return Err(Error::InvalidTemperature(value));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for Temperature {
    fn default() -> Self {
        Self(1.0)
    }
}

impl TryFrom<f64> for Temperature {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Temperature> for f64 {
    fn from(t: Temperature) -> f64 {
        t.0
    }
}

/// log sum exp via max shift: finite for any finite input.
pub fn log_sum_exp(z: &LogitVector) -> f64 {
    log_sum_exp_slice(z.as_slice())
}

pub(crate) fn log_sum_exp_slice(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = z.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Temperature-scaled softmax: p_k = exp(z_k / tau - lse(z / tau)).
pub fn softmax(z: &LogitVector, tau: Temperature) -> ProbVector {
    ProbVector::new_unchecked(softmax_slice(z.as_slice(), tau.value()))
}

pub(crate) fn softmax_slice(z: &[f64], tau: f64) -> Vec<f64> {
    let scaled: Vec<f64> = z.iter().map(|&v| v / tau).collect();
    let lse = log_sum_exp_slice(&scaled);
    scaled.iter().map(|&v| (v - lse).exp()).collect()
}

/// Stable log-probabilities: z / tau - lse(z / tau).
pub fn log_softmax(z: &LogitVector, tau: Temperature) -> Vec<f64> {
    log_softmax_slice(z.as_slice(), tau.value())
}

pub(crate) fn log_softmax_slice(z: &[f64], tau: f64) -> Vec<f64> {
    let scaled: Vec<f64> = z.iter().map(|&v| v / tau).collect();
    let lse = log_sum_exp_slice(&scaled);
    scaled.iter().map(|&v| v - lse).collect()
}

/// Shannon entropy in nats, with the convention 0 ln 0 = 0.
pub fn entropy(p: &ProbVector) -> f64 {
    entropy_slice(p.as_slice())
}

pub(crate) fn entropy_slice(p: &[f64]) -> f64 {
    -p.iter()
        .map(|&v| if v > 0.0 { v * v.ln() } else { 0.0 })
        .sum::<f64>()
}

/// Floor entries at `eps`, then renormalize to sum 1.
pub fn clamp_prob(p: &ProbVector, eps: f64) -> Result<ProbVector> {
    if eps <= 0.0 || eps > 1e-6 {
        return Err(Error::InvalidProbs(format!(
            "clamp eps {eps} outside (0, 1e-6]"
        )));
    }
    Ok(ProbVector::new_unchecked(clamp_prob_slice(
        p.as_slice(),
        eps,
    )))
}

pub(crate) fn clamp_prob_slice(p: &[f64], eps: f64) -> Vec<f64> {
    let floored: Vec<f64> = p.iter().map(|&v| v.max(eps)).collect();
    let sum: f64 = floored.iter().sum();
    floored.iter().map(|&v| v / sum).collect()
}

/// softplus(x) = ln(1 + e^x), computed without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Inverse of softplus on (0, inf): x = ln(e^y - 1).
pub fn softplus_inv(y: f64) -> f64 {
    // ln(e^y - 1) = y + ln(1 - e^-y); the second form is stable for large y.
    y + (-(-y).exp()).ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN_2: f64 = std::f64::consts::LN_2;

    fn logits(v: &[f64]) -> LogitVector {
        LogitVector::new(v.to_vec()).unwrap()
    }

    fn tau(v: f64) -> Temperature {
        Temperature::new(v).unwrap()
    }

    #[test]
    fn lse_symmetric_pair() {
        assert!((log_sum_exp(&logits(&[0.0, 0.0])) - LN_2).abs() < 1e-15);
    }

    #[test]
    fn lse_max_shift_survives_large_inputs() {
        let v = log_sum_exp(&logits(&[1000.0, 1000.0]));
        assert!((v - (1000.0 + LN_2)).abs() < 1e-12);
    }

    #[test]
    fn lse_matches_high_precision_value() {
        // 3 + ln(1 + e^-2 + e^-5) evaluated at 40 digits.
        let expected = 3.132845233727575553771811439872184841421_f64;
        assert!((log_sum_exp(&logits(&[3.0, 1.0, -2.0])) - expected).abs() < 1e-14);
    }

    #[test]
    fn softmax_uniform() {
        let p = softmax(&logits(&[0.0, 0.0, 0.0]), tau(1.0));
        for &v in p.as_slice() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_temperature_rescale_identity() {
        let a = softmax(&logits(&[2.0, 0.0]), tau(2.0));
        let b = softmax(&logits(&[1.0, 0.0]), tau(1.0));
        let e = std::f64::consts::E;
        assert!((a.as_slice()[0] - e / (e + 1.0)).abs() < 1e-15);
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_matches_high_precision_values() {
        let p = softmax(&logits(&[1.0, 2.0, 3.0]), tau(1.0));
        let expected = [
            0.09003057317038045799802210148449179786793_f64,
            0.2447284710547976524729596183407627971993_f64,
            0.6652409557748218895290182801747454049328_f64,
        ];
        for (got, want) in p.as_slice().iter().zip(expected) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn log_softmax_pair() {
        let ls = log_softmax(&logits(&[0.0, 0.0]), tau(1.0));
        assert!((ls[0] + LN_2).abs() < 1e-15);
        assert!((ls[1] + LN_2).abs() < 1e-15);
    }

    #[test]
    fn log_softmax_stable_for_wide_gap() {
        let ls = log_softmax(&logits(&[50.0, 0.0]), tau(1.0));
        assert!(ls[1].is_finite());
        assert!((ls[1] + 50.0).abs() < 1e-9);
    }

    #[test]
    fn log_softmax_consistent_with_softmax() {
        let z = logits(&[0.3, -1.4, 2.2, 0.9]);
        let ls = log_softmax(&z, tau(0.5));
        let p = softmax(&z, tau(0.5));
        for (l, q) in ls.iter().zip(p.as_slice()) {
            assert!((l.exp() - q).abs() < 1e-12);
        }
    }

    #[test]
    fn entropy_uniform_is_ln_v() {
        let p = ProbVector::new(vec![0.25; 4]).unwrap();
        assert!((entropy(&p) - 4.0_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn entropy_one_hot_is_zero() {
        let p = ProbVector::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(entropy(&p), 0.0);
    }

    #[test]
    fn entropy_matches_high_precision_value() {
        let p = ProbVector::new(vec![0.7, 0.2, 0.1]).unwrap();
        let expected = 0.80181855254333730856079810998250308324_f64;
        assert!((entropy(&p) - expected).abs() < 1e-14);
    }

    #[test]
    fn clamp_prob_floors_and_renormalizes() {
        let p = ProbVector::new(vec![1.0, 0.0]).unwrap();
        let c = clamp_prob(&p, 1e-12).unwrap();
        assert!(c.as_slice()[1] > 0.0);
        assert!((c.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn clamp_prob_is_identity_on_interior_vectors() {
        let p = ProbVector::new(vec![0.3, 0.3, 0.4]).unwrap();
        let c = clamp_prob(&p, 1e-9).unwrap();
        for (a, b) in p.as_slice().iter().zip(c.as_slice()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn clamp_prob_invariant_on_one_hot() {
        let p = ProbVector::new(vec![0.0, 0.0, 1.0]).unwrap();
        let c = clamp_prob(&p, 1e-9).unwrap();
        let floor = 1e-9 / (1.0 + 2e-9);
        assert!(c.as_slice().iter().all(|&v| v >= floor * (1.0 - 1e-12)));
        assert!((c.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn clamp_prob_rejects_bad_eps() {
        let p = ProbVector::new(vec![0.5, 0.5]).unwrap();
        assert!(clamp_prob(&p, 0.0).is_err());
        assert!(clamp_prob(&p, 1e-3).is_err());
    }

    #[test]
    fn softplus_round_trip_and_values() {
        assert!((softplus(0.0) - LN_2).abs() < 1e-15);
        assert!((softplus(3.0) - 3.048587351573742058758925919854689997942).abs() < 1e-14);
        assert!((sigmoid(3.0) - 0.9525741268224332191211518482282477986138).abs() < 1e-14);
        for &y in &[0.01, 0.5, 1.0, 4.0, 30.0] {
            assert!((softplus(softplus_inv(y)) - y).abs() < 1e-10 * y.max(1.0));
        }
        // Large inputs must not overflow.
        assert!((softplus(800.0) - 800.0).abs() < 1e-9);
        assert!(softplus(-800.0) >= 0.0);
    }

    #[test]
    fn invalid_constructions_are_rejected() {
        assert!(LogitVector::new(vec![1.0]).is_err());
        assert!(LogitVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(ProbVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbVector::new(vec![-0.1, 1.1]).is_err());
        assert!(Temperature::new(0.0).is_err());
        assert!(Temperature::new(-1.0).is_err());
    }
}
