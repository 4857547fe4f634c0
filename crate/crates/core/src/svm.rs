//! Linear-kernel soft-margin SVM trained by dual coordinate descent.
//!
//! The binary solver minimizes
//!
//! ```text
//! 1/2 ‖w‖² + C Σᵢ ℓ(yᵢ wᵀxᵢ)
//! ```
//!
//! with `ℓ(m) = max(0, 1 - m)` (L1 hinge, the default) or its square, by
//! cyclic coordinate ascent on the box-constrained dual with a fresh seeded
//! permutation every epoch. The bias is learned as the weight of a constant
//! feature of value 1 and is therefore regularized like any other weight.
//!
//! Multiclass problems are decomposed one-vs-rest. Classes are kept in
//! lexicographic order; with exactly two classes a single binary problem is
//! solved with the lexicographically larger class as the positive side.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::linalg::dot;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HingeLoss {
    /// `max(0, 1 - m)`
    L1,
    /// `max(0, 1 - m)²`
    Squared,
}

impl std::str::FromStr for HingeLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(HingeLoss::L1),
            "squared" => Ok(HingeLoss::Squared),
            other => Err(Error::InvalidParameter(format!(
                "unknown hinge loss `{other}`"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    pub c: f64,
    /// Stopping threshold on the spread of projected gradients in one epoch.
    pub tol: f64,
    /// Maximum number of epochs.
    pub max_iter: usize,
    pub seed: u64,
    pub fit_bias: bool,
    pub loss: HingeLoss,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            tol: 1e-4,
            max_iter: 1000,
            seed: 0,
            fit_bias: true,
            loss: HingeLoss::L1,
        }
    }
}

impl SvmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "C must be positive, got {}",
                self.c
            )));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "tolerance must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub iterations: usize,
    pub converged: bool,
    /// Spread between the largest and smallest projected gradient in the last epoch.
    pub pg_violation: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub duality_gap: f64,
}

/// Objective values sampled at the end of one epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochTrace {
    pub primal: f64,
    pub dual: f64,
}

/// Trained linear classifier.
///
/// Binary models hold one weight vector scoring `classes[1]` against
/// `classes[0]`; multiclass models hold one vector per class. When
/// `fit_bias` is set each vector carries the bias as its last entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub classes: Vec<String>,
    pub dim: usize,
    pub fit_bias: bool,
    pub params: SvmParams,
    pub weights: Vec<Vec<f64>>,
    pub train_stats: Vec<TrainStats>,
}

/// Final dual variables and weights of one binary problem.
#[derive(Clone, Debug, PartialEq)]
pub struct BinarySolution {
    pub weights: Vec<f64>,
    pub alpha: Vec<f64>,
    pub stats: TrainStats,
}

struct Problem<'a> {
    x: &'a [Vec<f64>],
    dim: usize,
    fit_bias: bool,
}

impl Problem<'_> {
    #[inline]
    fn dot(&self, w: &[f64], i: usize) -> f64 {
        let s = dot(&w[..self.dim], &self.x[i]);
        if self.fit_bias {
            s + w[self.dim]
        } else {
            s
        }
    }

    #[inline]
    fn add(&self, w: &mut [f64], i: usize, scale: f64) {
        for (wj, xj) in w[..self.dim].iter_mut().zip(&self.x[i]) {
            *wj += scale * xj;
        }
        if self.fit_bias {
            w[self.dim] += scale;
        }
    }

    fn sq_norm(&self, i: usize) -> f64 {
        dot(&self.x[i], &self.x[i]) + if self.fit_bias { 1.0 } else { 0.0 }
    }
}

/// Primal objective of `w` on the (optionally bias-augmented) data.
pub fn primal_objective(
    x: &[Vec<f64>],
    y: &[f64],
    w: &[f64],
    c: f64,
    fit_bias: bool,
    loss: HingeLoss,
) -> f64 {
    let dim = w.len() - usize::from(fit_bias);
    let p = Problem { x, dim, fit_bias };
    let mut total = 0.0;
    for (i, yi) in y.iter().enumerate() {
        let slack = (1.0 - yi * p.dot(w, i)).max(0.0);
        total += match loss {
            HingeLoss::L1 => slack,
            HingeLoss::Squared => slack * slack,
        };
    }
    0.5 * dot(w, w) + c * total
}

fn dual_objective(alpha: &[f64], w: &[f64], c: f64, loss: HingeLoss) -> f64 {
    let sum: f64 = alpha.iter().sum();
    let base = sum - 0.5 * dot(w, w);
    match loss {
        HingeLoss::L1 => base,
        HingeLoss::Squared => base - alpha.iter().map(|a| a * a).sum::<f64>() / (4.0 * c),
    }
}

fn check_features(x: &[Vec<f64>]) -> Result<usize> {
    let dim = x
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::Empty("no training instances".into()))?;
    for (i, row) in x.iter().enumerate() {
        if row.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                found: row.len(),
            });
        }
        if !row.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("training instance {i}")));
        }
    }
    Ok(dim)
}

/// Solves one binary problem with labels `y ∈ {-1, +1}`.
///
/// When `trace` is given it receives the primal and dual objectives after
/// every epoch.
pub fn solve_binary(
    x: &[Vec<f64>],
    y: &[f64],
    params: &SvmParams,
    mut trace: Option<&mut Vec<EpochTrace>>,
) -> Result<BinarySolution> {
    params.validate()?;
    let dim = check_features(x)?;
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            found: y.len(),
        });
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::InvalidParameter(
            "binary labels must be +1 or -1".into(),
        ));
    }
    if y.iter().all(|&v| v == y[0]) {
        return Err(Error::SingleClass(
            if y[0] > 0.0 { "+1" } else { "-1" }.into(),
        ));
    }

    let p = Problem {
        x,
        dim,
        fit_bias: params.fit_bias,
    };
    let n = x.len();
    let (diag, upper) = match params.loss {
        HingeLoss::L1 => (0.0, params.c),
        HingeLoss::Squared => (0.5 / params.c, f64::INFINITY),
    };
    let qd: Vec<f64> = (0..n).map(|i| p.sq_norm(i) + diag).collect();

    let mut w = vec![0.0; dim + usize::from(params.fit_bias)];
    let mut alpha = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    // Shrinking: a bounded coordinate whose gradient lies outside the last
    // epoch's projected-gradient range is set aside until the active set
    // converges, then everything is re-checked.
    let mut active = n;
    let mut pg_max_old = f64::INFINITY;
    let mut pg_min_old = f64::NEG_INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    let mut violation = f64::INFINITY;
    while iterations < params.max_iter {
        order[..active].shuffle(&mut rng);
        let mut pg_max = f64::NEG_INFINITY;
        let mut pg_min = f64::INFINITY;
        let mut s = 0;
        while s < active {
            let i = order[s];
            let g = y[i] * p.dot(&w, i) - 1.0 + diag * alpha[i];
            let pg = if alpha[i] == 0.0 {
                if g > pg_max_old {
                    active -= 1;
                    order.swap(s, active);
                    continue;
                }
                g.min(0.0)
            } else if alpha[i] == upper {
                if g < pg_min_old {
                    active -= 1;
                    order.swap(s, active);
                    continue;
                }
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg.abs() > 1e-12 {
                let old = alpha[i];
                alpha[i] = if qd[i] > 0.0 {
                    (old - g / qd[i]).clamp(0.0, upper)
                } else {
                    // Zero instance without bias: the gradient is constant -1.
                    upper
                };
                let delta = alpha[i] - old;
                if delta != 0.0 && qd[i] > 0.0 {
                    p.add(&mut w, i, delta * y[i]);
                }
            }
            s += 1;
        }
        iterations += 1;
        violation = pg_max - pg_min;
        if let Some(t) = trace.as_deref_mut() {
            t.push(EpochTrace {
                primal: primal_objective(x, y, &w, params.c, params.fit_bias, params.loss),
                dual: dual_objective(&alpha, &w, params.c, params.loss),
            });
        }
        if violation <= params.tol {
            if active == n {
                converged = true;
                break;
            }
            active = n;
            pg_max_old = f64::INFINITY;
            pg_min_old = f64::NEG_INFINITY;
            continue;
        }
        pg_max_old = if pg_max <= 0.0 { f64::INFINITY } else { pg_max };
        pg_min_old = if pg_min >= 0.0 {
            f64::NEG_INFINITY
        } else {
            pg_min
        };
    }
    if !converged {
        log::warn!(
            "dual coordinate descent reached {} epochs (violation {:.3e} > tol {:.1e})",
            params.max_iter,
            violation,
            params.tol
        );
    }
    if !w.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical("SVM weights became non-finite".into()));
    }

    let primal = primal_objective(x, y, &w, params.c, params.fit_bias, params.loss);
    let dual = dual_objective(&alpha, &w, params.c, params.loss);
    Ok(BinarySolution {
        weights: w,
        alpha,
        stats: TrainStats {
            iterations,
            converged,
            pg_violation: violation,
            primal_objective: primal,
            dual_objective: dual,
            duality_gap: primal - dual,
        },
    })
}

/// Binary training with labels `+1` / `-1`; the model's classes are
/// `["-1", "+1"]`.
pub fn train_binary(x: &[Vec<f64>], labels: &[i8], params: &SvmParams) -> Result<SvmModel> {
    let positive: Vec<bool> = labels
        .iter()
        .map(|&l| match l {
            1 => Ok(true),
            -1 => Ok(false),
            other => Err(Error::InvalidParameter(format!(
                "binary labels must be +1 or -1, got {other}"
            ))),
        })
        .collect::<Result<_>>()?;
    train_binary_classes(x, &positive, "-1", "+1", params)
}

/// Binary training with named classes; `is_positive[i]` marks `positive`.
pub fn train_binary_classes(
    x: &[Vec<f64>],
    is_positive: &[bool],
    negative: &str,
    positive: &str,
    params: &SvmParams,
) -> Result<SvmModel> {
    let y: Vec<f64> = is_positive
        .iter()
        .map(|&p| if p { 1.0 } else { -1.0 })
        .collect();
    let solution = solve_binary(x, &y, params, None).map_err(|e| match e {
        Error::SingleClass(_) => {
            Error::SingleClass(if is_positive[0] { positive } else { negative }.to_owned())
        }
        other => other,
    })?;
    Ok(SvmModel {
        classes: vec![negative.to_owned(), positive.to_owned()],
        dim: x[0].len(),
        fit_bias: params.fit_bias,
        params: *params,
        weights: vec![solution.weights],
        train_stats: vec![solution.stats],
    })
}

/// One-vs-rest training over the distinct labels.
pub fn train_multiclass<S: AsRef<str>>(
    x: &[Vec<f64>],
    labels: &[S],
    params: &SvmParams,
) -> Result<SvmModel> {
    let mut classes: Vec<String> = labels.iter().map(|l| l.as_ref().to_owned()).collect();
    classes.sort();
    classes.dedup();
    train_multiclass_with_classes(x, labels, &classes, params)
}

/// One-vs-rest training over an explicit class list, which is sorted
/// before use. Every class must occur in `labels` and every label must be a
/// listed class.
pub fn train_multiclass_with_classes<S: AsRef<str>>(
    x: &[Vec<f64>],
    labels: &[S],
    classes: &[String],
    params: &SvmParams,
) -> Result<SvmModel> {
    params.validate()?;
    check_features(x)?;
    if x.len() != labels.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            found: labels.len(),
        });
    }
    let mut classes = classes.to_vec();
    classes.sort();
    classes.dedup();
    let index: Vec<usize> = labels
        .iter()
        .map(|l| {
            classes
                .binary_search_by(|c| c.as_str().cmp(l.as_ref()))
                .map_err(|_| Error::InvalidParameter(format!("unlisted label `{}`", l.as_ref())))
        })
        .collect::<Result<_>>()?;
    let mut counts = vec![0usize; classes.len()];
    index.iter().for_each(|&k| counts[k] += 1);
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass(classes[k].clone()));
    }
    match classes.len() {
        0 => return Err(Error::Empty("no classes".into())),
        1 => return Err(Error::SingleClass(classes[0].clone())),
        2 => {
            let is_pos: Vec<bool> = index.iter().map(|&k| k == 1).collect();
            return train_binary_classes(x, &is_pos, &classes[0], &classes[1], params);
        }
        _ => {}
    }

    let solutions: Vec<BinarySolution> = (0..classes.len())
        .into_par_iter()
        .map(|k| {
            let y: Vec<f64> = index
                .iter()
                .map(|&c| if c == k { 1.0 } else { -1.0 })
                .collect();
            solve_binary(x, &y, params, None)
        })
        .collect::<Result<_>>()?;
    let (weights, train_stats) = solutions.into_iter().map(|s| (s.weights, s.stats)).unzip();
    Ok(SvmModel {
        classes,
        dim: x[0].len(),
        fit_bias: params.fit_bias,
        params: *params,
        weights,
        train_stats,
    })
}

impl SvmModel {
    pub fn is_binary(&self) -> bool {
        self.weights.len() == 1
    }

    fn score(&self, w: &[f64], x: &[f64]) -> f64 {
        let s = dot(&w[..self.dim], x);
        if self.fit_bias {
            s + w[self.dim]
        } else {
            s
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Raw scores `wₖᵀx (+ bₖ)`: one per class, or a single signed score
    /// for binary models (positive favours `classes[1]`).
    pub fn decision(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.weights.iter().map(|w| self.score(w, x)).collect())
    }

    /// Scores aligned with `classes`; binary models yield `[-s, s]`.
    pub fn decision_per_class(&self, x: &[f64]) -> Result<Vec<f64>> {
        let scores = self.decision(x)?;
        Ok(if self.is_binary() {
            vec![-scores[0], scores[0]]
        } else {
            scores
        })
    }

    /// Highest-scoring class; ties go to the earlier class.
    pub fn predict(&self, x: &[f64]) -> Result<&str> {
        let scores = self.decision(x)?;
        let k = if self.is_binary() {
            usize::from(scores[0] > 0.0)
        } else {
            let mut best = 0;
            for (k, &s) in scores.iter().enumerate().skip(1) {
                if s > scores[best] {
                    best = k;
                }
            }
            best
        };
        Ok(&self.classes[k])
    }

    fn validate(&self) -> Result<()> {
        let width = self.dim + usize::from(self.fit_bias);
        let expected = if self.classes.len() == 2 {
            1
        } else {
            self.classes.len()
        };
        if self.classes.len() < 2 || self.weights.len() != expected {
            return Err(Error::InvalidParameter(format!(
                "model has {} classes but {} weight vectors",
                self.classes.len(),
                self.weights.len()
            )));
        }
        for w in &self.weights {
            if w.len() != width {
                return Err(Error::Dimension {
                    expected: width,
                    found: w.len(),
                });
            }
            if !w.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite("model weights".into()));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: SvmModel = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        io::save_json(path, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let model: SvmModel = io::load_json(path)?;
        model.validate()?;
        Ok(model)
    }
}
