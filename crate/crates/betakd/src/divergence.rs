//! The divergence-loss zoo: every supported energy `l(a_s; a_t)` between
//! teacher and student activations, with analytic gradients with respect to
//! the student activation.
//!
//! Probability-space losses go through temperature-scaled softmax of both
//! logit vectors, clamp the probabilities at `PROB_FLOOR`, compute the loss
//! and its gradient in probability space, then pull the gradient back through
//! the softmax Jacobian. Logit-space losses (`mse_logits`, `cosine_logits`)
//! act on the raw logits and ignore temperatures. Gradients are closed-form
//! Jacobian-vector products; the finite-difference oracle lives in the tests.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    clamp_prob_slice, log_softmax_slice, softmax_slice, LogitVector, ProbVector, Temperature,
    PROB_FLOOR,
};

/// Default mixture weight for the skew KL variants.
pub const DEFAULT_SKEW_LAMBDA: f64 = 0.1;

/// Norm floor below which cosine distance is considered degenerate.
const COSINE_NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceKind {
    Fkl,
    Rkl,
    SkewFkl,
    SkewRkl,
    Js,
    Tvd,
    MseLogits,
    MseProbs,
    CosineLogits,
    CosineProbs,
    FeatureCosine,
    FeatureMse,
}

impl DivergenceKind {
    pub const ALL: [DivergenceKind; 12] = [
        DivergenceKind::Fkl,
        DivergenceKind::Rkl,
        DivergenceKind::SkewFkl,
        DivergenceKind::SkewRkl,
        DivergenceKind::Js,
        DivergenceKind::Tvd,
        DivergenceKind::MseLogits,
        DivergenceKind::MseProbs,
        DivergenceKind::CosineLogits,
        DivergenceKind::CosineProbs,
        DivergenceKind::FeatureCosine,
        DivergenceKind::FeatureMse,
    ];

    /// The ten logit/probability-level kinds used in the two-loss sweeps.
    pub const TOKEN_KINDS: [DivergenceKind; 10] = [
        DivergenceKind::Fkl,
        DivergenceKind::Rkl,
        DivergenceKind::SkewFkl,
        DivergenceKind::SkewRkl,
        DivergenceKind::Js,
        DivergenceKind::Tvd,
        DivergenceKind::MseLogits,
        DivergenceKind::MseProbs,
        DivergenceKind::CosineLogits,
        DivergenceKind::CosineProbs,
    ];

    pub fn is_skew(self) -> bool {
        matches!(self, DivergenceKind::SkewFkl | DivergenceKind::SkewRkl)
    }

    pub fn is_feature(self) -> bool {
        matches!(
            self,
            DivergenceKind::FeatureCosine | DivergenceKind::FeatureMse
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            DivergenceKind::Fkl => "fkl",
            DivergenceKind::Rkl => "rkl",
            DivergenceKind::SkewFkl => "skew_fkl",
            DivergenceKind::SkewRkl => "skew_rkl",
            DivergenceKind::Js => "js",
            DivergenceKind::Tvd => "tvd",
            DivergenceKind::MseLogits => "mse_logits",
            DivergenceKind::MseProbs => "mse_probs",
            DivergenceKind::CosineLogits => "cosine_logits",
            DivergenceKind::CosineProbs => "cosine_probs",
            DivergenceKind::FeatureCosine => "feature_cosine",
            DivergenceKind::FeatureMse => "feature_mse",
        }
    }
}

impl std::str::FromStr for DivergenceKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        DivergenceKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidSpec(format!("unknown divergence kind `{s}`")))
    }
}

/// Which energy to use, where, and with which parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceSpec {
    pub kind: DivergenceKind,
    /// Mixture weight in [0, 1]; present iff `kind` is a skew variant.
    pub skew_lambda: Option<f64>,
    pub teacher_temp: Temperature,
    pub student_temp: Temperature,
}

impl DivergenceSpec {
    pub fn new(kind: DivergenceKind) -> Self {
        Self {
            kind,
            skew_lambda: if kind.is_skew() {
                Some(DEFAULT_SKEW_LAMBDA)
            } else {
                None
            },
            teacher_temp: Temperature::default(),
            student_temp: Temperature::default(),
        }
    }

    pub fn with_skew_lambda(mut self, lambda: f64) -> Self {
        self.skew_lambda = Some(lambda);
        self
    }

    pub fn with_temps(mut self, teacher: Temperature, student: Temperature) -> Self {
        self.teacher_temp = teacher;
        self.student_temp = student;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind.is_skew(), self.skew_lambda) {
            (true, Some(l)) if (0.0..=1.0).contains(&l) => Ok(()),
            (true, Some(l)) => Err(Error::InvalidSpec(format!(
                "skew_lambda {l} outside [0, 1]"
            ))),
            (true, None) => Err(Error::InvalidSpec(
                "skew kind requires skew_lambda".to_string(),
            )),
            (false, Some(_)) => Err(Error::InvalidSpec(format!(
                "skew_lambda set but kind is {}",
                self.kind.name()
            ))),
            (false, None) => Ok(()),
        }
    }
}

/// A scalar loss and its gradient with respect to the student activation
/// that produced it (logits, probabilities via logits, or features).
#[derive(Debug, Clone)]
pub struct LossResult {
    pub value: f64,
    pub grad: Vec<f64>,
}

impl LossResult {
    fn zero(len: usize) -> Self {
        Self {
            value: 0.0,
            grad: vec![0.0; len],
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Pull a probability-space gradient back to student logits:
/// dL/dz = (q * (g - <q, g>)) / tau.
fn softmax_vjp(q: &[f64], g: &[f64], tau: f64) -> Vec<f64> {
    let qg = dot(q, g);
    q.iter()
        .zip(g)
        .map(|(&qk, &gk)| qk * (gk - qg) / tau)
        .collect()
}

/// Probability-space value and dL/dq for one divergence kind.
/// `p` is the (clamped) teacher distribution, `q` the (clamped) student one.
fn prob_space_loss(kind: DivergenceKind, lambda: Option<f64>, p: &[f64], q: &[f64]) -> (f64, Vec<f64>) {
    let v = p.len();
    match kind {
        DivergenceKind::Fkl => {
            let value = p
                .iter()
                .zip(q)
                .map(|(&pk, &qk)| if pk > 0.0 { pk * (pk.ln() - qk.ln()) } else { 0.0 })
                .sum();
            let grad = p.iter().zip(q).map(|(&pk, &qk)| -pk / qk).collect();
            (value, grad)
        }
        DivergenceKind::Rkl => {
            let value = q
                .iter()
                .zip(p)
                .map(|(&qk, &pk)| if qk > 0.0 { qk * (qk.ln() - pk.ln()) } else { 0.0 })
                .sum();
            let grad = q
                .iter()
                .zip(p)
                .map(|(&qk, &pk)| (qk.ln() - pk.ln()) + 1.0)
                .collect();
            (value, grad)
        }
        DivergenceKind::SkewFkl => {
            // KL(p || m) with m = lambda p + (1 - lambda) q.
            let l = lambda.expect("validated");
            let m: Vec<f64> = p
                .iter()
                .zip(q)
                .map(|(&pk, &qk)| l * pk + (1.0 - l) * qk)
                .collect();
            let value = p
                .iter()
                .zip(&m)
                .map(|(&pk, &mk)| if pk > 0.0 { pk * (pk.ln() - mk.ln()) } else { 0.0 })
                .sum();
            let grad = p
                .iter()
                .zip(&m)
                .map(|(&pk, &mk)| -(1.0 - l) * pk / mk)
                .collect();
            (value, grad)
        }
        DivergenceKind::SkewRkl => {
            // KL(q || m) with m = lambda q + (1 - lambda) p.
            let l = lambda.expect("validated");
            let m: Vec<f64> = q
                .iter()
                .zip(p)
                .map(|(&qk, &pk)| l * qk + (1.0 - l) * pk)
                .collect();
            let value = q
                .iter()
                .zip(&m)
                .map(|(&qk, &mk)| if qk > 0.0 { qk * (qk.ln() - mk.ln()) } else { 0.0 })
                .sum();
            let grad = q
                .iter()
                .zip(&m)
                .map(|(&qk, &mk)| (qk.ln() - mk.ln()) + 1.0 - l * qk / mk)
                .collect();
            (value, grad)
        }
        DivergenceKind::Js => {
            let m: Vec<f64> = p.iter().zip(q).map(|(&pk, &qk)| 0.5 * (pk + qk)).collect();
            let kl_pm: f64 = p
                .iter()
                .zip(&m)
                .map(|(&pk, &mk)| if pk > 0.0 { pk * (pk.ln() - mk.ln()) } else { 0.0 })
                .sum();
            let kl_qm: f64 = q
                .iter()
                .zip(&m)
                .map(|(&qk, &mk)| if qk > 0.0 { qk * (qk.ln() - mk.ln()) } else { 0.0 })
                .sum();
            let grad = q
                .iter()
                .zip(&m)
                .map(|(&qk, &mk)| 0.5 * (qk.ln() - mk.ln()))
                .collect();
            (0.5 * kl_pm + 0.5 * kl_qm, grad)
        }
        DivergenceKind::Tvd => {
            let value = 0.5
                * p.iter()
                    .zip(q)
                    .map(|(&pk, &qk)| (pk - qk).abs())
                    .sum::<f64>();
            // Subgradient 0 at ties keeps gradients bounded.
            let grad = p
                .iter()
                .zip(q)
                .map(|(&pk, &qk)| {
                    let d = qk - pk;
                    if d == 0.0 {
                        0.0
                    } else {
                        0.5 * d.signum()
                    }
                })
                .collect();
            (value, grad)
        }
        DivergenceKind::MseProbs => {
            let value = p
                .iter()
                .zip(q)
                .map(|(&pk, &qk)| (qk - pk) * (qk - pk))
                .sum::<f64>()
                / v as f64;
            let grad = p
                .iter()
                .zip(q)
                .map(|(&pk, &qk)| 2.0 * (qk - pk) / v as f64)
                .collect();
            (value, grad)
        }
        DivergenceKind::CosineProbs => {
            let (value, grad) = cosine_distance(p, q);
            (value, grad)
        }
        _ => unreachable!("logit/feature kinds handled by their own paths"),
    }
}

/// 1 - <a, b> / (|a| |b|) and its gradient with respect to `b`.
/// Callers guarantee both norms exceed `COSINE_NORM_FLOOR`.
fn cosine_distance(a: &[f64], b: &[f64]) -> (f64, Vec<f64>) {
    let na = norm(a);
    let nb = norm(b);
    let ab = dot(a, b);
    let cos = ab / (na * nb);
    let grad = a
        .iter()
        .zip(b)
        .map(|(&ak, &bk)| -(ak / (na * nb) - ab * bk / (na * nb * nb * nb)))
        .collect();
    (1.0 - cos, grad)
}

/// Per-token loss between one teacher and one student logit vector.
/// The gradient is with respect to the student logits.
pub fn token_loss(
    spec: &DivergenceSpec,
    teacher: &LogitVector,
    student: &LogitVector,
) -> Result<LossResult> {
    spec.validate()?;
    if teacher.len() != student.len() {
        return Err(Error::LengthMismatch {
            teacher: teacher.len(),
            student: student.len(),
        });
    }
    token_loss_unchecked(spec, teacher.as_slice(), student.as_slice())
}

/// Internal hot path: assumes spec validated and lengths equal.
pub(crate) fn token_loss_unchecked(
    spec: &DivergenceSpec,
    teacher: &[f64],
    student: &[f64],
) -> Result<LossResult> {
    let v = teacher.len();
    match spec.kind {
        DivergenceKind::MseLogits => {
            let value = teacher
                .iter()
                .zip(student)
                .map(|(&t, &s)| (s - t) * (s - t))
                .sum::<f64>()
                / v as f64;
            let grad = teacher
                .iter()
                .zip(student)
                .map(|(&t, &s)| 2.0 * (s - t) / v as f64)
                .collect();
            Ok(LossResult { value, grad })
        }
        DivergenceKind::CosineLogits => {
            if norm(teacher) < COSINE_NORM_FLOOR || norm(student) < COSINE_NORM_FLOOR {
                return Err(Error::ZeroVector);
            }
            let (value, grad) = cosine_distance(teacher, student);
            Ok(LossResult { value, grad })
        }
        DivergenceKind::FeatureCosine | DivergenceKind::FeatureMse => Err(Error::InvalidSpec(
            format!("{} applies to features, not token logits", spec.kind.name()),
        )),
        kind => {
            let tau_t = spec.teacher_temp.value();
            let tau_s = spec.student_temp.value();
            let p = clamp_prob_slice(&softmax_slice(teacher, tau_t), PROB_FLOOR);
            let q = clamp_prob_slice(&softmax_slice(student, tau_s), PROB_FLOOR);
            let (value, grad_q) = prob_space_loss(kind, spec.skew_lambda, &p, &q);
            let grad = softmax_vjp(&q, &grad_q, tau_s);
            Ok(LossResult { value, grad })
        }
    }
}

/// Feature-level loss between projected teacher and student feature vectors.
/// The gradient is with respect to the student features.
pub fn feature_loss(kind: DivergenceKind, f_t: &[f64], f_s: &[f64]) -> Result<LossResult> {
    if f_t.len() != f_s.len() {
        return Err(Error::DimensionMismatch {
            expected: f_t.len(),
            got: f_s.len(),
        });
    }
    let d = f_t.len();
    match kind {
        DivergenceKind::FeatureMse => {
            let value = f_t
                .iter()
                .zip(f_s)
                .map(|(&t, &s)| (s - t) * (s - t))
                .sum::<f64>()
                / d as f64;
            let grad = f_t
                .iter()
                .zip(f_s)
                .map(|(&t, &s)| 2.0 * (s - t) / d as f64)
                .collect();
            Ok(LossResult { value, grad })
        }
        DivergenceKind::FeatureCosine => {
            if norm(f_t) < COSINE_NORM_FLOOR || norm(f_s) < COSINE_NORM_FLOOR {
                return Err(Error::ZeroVector);
            }
            let (value, grad) = cosine_distance(f_t, f_s);
            Ok(LossResult { value, grad })
        }
        other => Err(Error::InvalidSpec(format!(
            "{} is not a feature-level kind",
            other.name()
        ))),
    }
}

/// Mean per-token loss over a sequence of aligned logit pairs. The gradient
/// is the concatenation of per-token gradients, each scaled by 1 / L.
pub fn sequence_loss(
    spec: &DivergenceSpec,
    teacher: &[LogitVector],
    student: &[LogitVector],
) -> Result<LossResult> {
    spec.validate()?;
    if teacher.len() != student.len() || teacher.is_empty() {
        return Err(Error::LengthMismatch {
            teacher: teacher.len(),
            student: student.len(),
        });
    }
    let l = teacher.len() as f64;
    let v = teacher[0].len();
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(teacher.len() * v);
    for (zt, zs) in teacher.iter().zip(student) {
        if zt.len() != v || zs.len() != v {
            return Err(Error::ShapeMismatch(
                "ragged logit sequence".to_string(),
            ));
        }
        let tok = token_loss_unchecked(spec, zt.as_slice(), zs.as_slice())?;
        value += tok.value / l;
        grad.extend(tok.grad.iter().map(|g| g / l));
    }
    Ok(LossResult { value, grad })
}

/// Mean hard-label cross-entropy over a sequence, with the gradient with
/// respect to the student logits: per token (q - e_y) / (tau_s * L).
pub fn cross_entropy(
    student: &[LogitVector],
    targets: &[usize],
    tau_s: Temperature,
) -> Result<LossResult> {
    if student.len() != targets.len() || student.is_empty() {
        return Err(Error::LengthMismatch {
            teacher: targets.len(),
            student: student.len(),
        });
    }
    let l = student.len() as f64;
    let tau = tau_s.value();
    let v = student[0].len();
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(student.len() * v);
    for (zs, &y) in student.iter().zip(targets) {
        if y >= zs.len() {
            return Err(Error::TokenOutOfRange {
                token: y,
                vocab: zs.len(),
            });
        }
        let logp = log_softmax_slice(zs.as_slice(), tau);
        value += -logp[y] / l;
        let base = grad.len();
        grad.extend(logp.iter().map(|lp| lp.exp() / (tau * l)));
        grad[base + y] -= 1.0 / (tau * l);
    }
    Ok(LossResult { value, grad })
}

/// One evaluated point of a loss surface over the 2-simplex.
#[derive(Debug, Clone, Copy)]
pub struct SurfacePoint {
    /// Barycentric coordinates of the student distribution.
    pub b: [f64; 3],
    pub loss: f64,
}

/// Evaluate a loss over a triangular barycentric grid of student
/// distributions against a fixed teacher anchor (vocabulary size 3).
/// Grid points are (i, j, k) / grid_n with i + j + k = grid_n, giving
/// (n + 1)(n + 2) / 2 points.
pub fn simplex_surface(
    spec: &DivergenceSpec,
    anchor: &ProbVector,
    grid_n: usize,
) -> Result<Vec<SurfacePoint>> {
    spec.validate()?;
    if anchor.len() != 3 {
        return Err(Error::InvalidProbs(format!(
            "surface anchor must have length 3, got {}",
            anchor.len()
        )));
    }
    if grid_n < 2 {
        return Err(Error::InvalidSpec(format!("grid_n {grid_n} < 2")));
    }
    let z_t = centered_log_probs(anchor.as_slice());
    let n = grid_n as f64;
    let mut out = Vec::with_capacity((grid_n + 1) * (grid_n + 2) / 2);
    for i in 0..=grid_n {
        for j in 0..=(grid_n - i) {
            let k = grid_n - i - j;
            let b = [i as f64 / n, j as f64 / n, k as f64 / n];
            let z_s = centered_log_probs(&b);
            let loss = token_loss_unchecked(spec, &z_t, &z_s)?.value;
            out.push(SurfacePoint { b, loss });
        }
    }
    Ok(out)
}

/// Mean-centered log of a clamped probability vector: the canonical logits
/// whose softmax reproduces the distribution.
fn centered_log_probs(p: &[f64]) -> Vec<f64> {
    let c = clamp_prob_slice(p, PROB_FLOOR);
    let logs: Vec<f64> = c.iter().map(|&v| v.ln()).collect();
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    logs.iter().map(|&v| v - mean).collect()
}
