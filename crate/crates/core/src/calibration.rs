//! Monotone score→probability calibrators and the Z miscalibration
//! diagnostic.
//!
//! Calibrators are fitted on a held-out balanced set of (score, label)
//! pairs and applied to every score the samplers consume. Outputs are
//! clamped into [ε, 1−ε] so downstream odds ratios stay finite.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Discriminator;
use crate::numeric::{clamp_prob, logit, sigmoid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibratorKind {
    Identity,
    Logistic,
    Isotonic,
    Beta,
}

impl std::str::FromStr for CalibratorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(CalibratorKind::Identity),
            "logistic" => Ok(CalibratorKind::Logistic),
            "isotonic" => Ok(CalibratorKind::Isotonic),
            "beta" => Ok(CalibratorKind::Beta),
            other => Err(Error::InvalidParameter(format!(
                "unknown calibrator `{other}` (expected identity|logistic|isotonic|beta)"
            ))),
        }
    }
}

/// Fitted monotone map from a raw discriminator score to a probability.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Calibrator {
    Identity,
    /// sigmoid(a·s̃ + b) where s̃ is logit(score) for probability-type
    /// scores and the raw score otherwise.
    Logistic { a: f64, b: f64, input_logit: bool },
    /// Piecewise-linear interpolation of PAVA breakpoints, extended
    /// constantly beyond the fitted range.
    Isotonic { xs: Vec<f64>, ys: Vec<f64> },
    /// sigmoid(a·ln s − b·ln(1−s) + c) with a, b ≥ 0. Raw scores are
    /// squashed through a sigmoid before fitting/applying.
    Beta { a: f64, b: f64, c: f64, input_raw: bool },
}

impl Calibrator {
    pub fn apply(&self, score: f64) -> f64 {
        let p = match self {
            Calibrator::Identity => score,
            Calibrator::Logistic { a, b, input_logit } => {
                let s = if *input_logit { logit(clamp_prob(score)) } else { score };
                sigmoid(a * s + b)
            }
            Calibrator::Isotonic { xs, ys } => interp_monotone(xs, ys, score),
            Calibrator::Beta { a, b, c, input_raw } => {
                let s = clamp_prob(if *input_raw { sigmoid(score) } else { score });
                sigmoid(a * s.ln() - b * (1.0 - s).ln() + c)
            }
        };
        clamp_prob(p)
    }
}

fn interp_monotone(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    let i = xs.partition_point(|&xi| xi <= x);
    let (x0, x1) = (xs[i - 1], xs[i]);
    let (y0, y1) = (ys[i - 1], ys[i]);
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Balanced held-out (score, label) set for calibrator fitting.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CalibrationSet {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
    pub scores_are_probabilities: bool,
}

/// Score an even mix of real (label 1) and fake (label 0) points,
/// shuffling row order with the caller's stream.
pub fn make_calibration_set<R: Rng + ?Sized>(
    real: &[Vec<f64>],
    fake: &[Vec<f64>],
    d: &Discriminator,
    rng: &mut R,
) -> Result<CalibrationSet> {
    if real.len() != fake.len() {
        return Err(Error::InvalidParameter(format!(
            "calibration set must be balanced: {} real vs {} fake",
            real.len(),
            fake.len()
        )));
    }
    if real.is_empty() {
        return Err(Error::InvalidParameter("calibration set is empty".into()));
    }
    let mut scores: Vec<f64> = d.score_batch(real);
    scores.extend(d.score_batch(fake));
    let mut labels: Vec<u8> = vec![1; real.len()];
    labels.extend(vec![0; fake.len()]);
    for i in (1..scores.len()).rev() {
        let j = rng.gen_range(0..=i);
        scores.swap(i, j);
        labels.swap(i, j);
    }
    Ok(CalibrationSet {
        scores,
        labels,
        scores_are_probabilities: d.is_probability(),
    })
}

/// Fit the requested calibrator on a calibration set.
pub fn fit_calibrator(kind: CalibratorKind, cs: &CalibrationSet) -> Result<Calibrator> {
    if cs.scores.len() != cs.labels.len() || cs.scores.is_empty() {
        return Err(Error::InvalidParameter("malformed calibration set".into()));
    }
    match kind {
        CalibratorKind::Identity => Ok(Calibrator::Identity),
        CalibratorKind::Isotonic => fit_isotonic(cs),
        CalibratorKind::Logistic => fit_logistic(cs),
        CalibratorKind::Beta => fit_beta(cs),
    }
}

fn all_identical(scores: &[f64]) -> bool {
    scores.windows(2).all(|w| w[0] == w[1])
}

/// Weighted pool-adjacent-violators on (score, label) pairs sorted by
/// score, with tied scores pre-pooled.
fn fit_isotonic(cs: &CalibrationSet) -> Result<Calibrator> {
    let mut idx: Vec<usize> = (0..cs.scores.len()).collect();
    idx.sort_by(|&a, &b| cs.scores[a].total_cmp(&cs.scores[b]));

    // pool ties
    let mut xs: Vec<f64> = Vec::new();
    let mut sums: Vec<f64> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for &i in &idx {
        let s = cs.scores[i];
        let y = cs.labels[i] as f64;
        if xs.last() == Some(&s) {
            *sums.last_mut().unwrap() += y;
            *weights.last_mut().unwrap() += 1.0;
        } else {
            xs.push(s);
            sums.push(y);
            weights.push(1.0);
        }
    }

    // PAVA over blocks (value = block mean, merged while decreasing)
    struct Block {
        sum: f64,
        w: f64,
        last: usize, // index into xs of the block's last point
    }
    let mut blocks: Vec<Block> = Vec::new();
    for i in 0..xs.len() {
        blocks.push(Block { sum: sums[i], w: weights[i], last: i });
        while blocks.len() >= 2 {
            let n = blocks.len();
            let a = &blocks[n - 2];
            let b = &blocks[n - 1];
            if a.sum / a.w <= b.sum / b.w {
                break;
            }
            let b = blocks.pop().unwrap();
            let a = blocks.last_mut().unwrap();
            a.sum += b.sum;
            a.w += b.w;
            a.last = b.last;
        }
    }
    let mut ys = vec![0.0; xs.len()];
    let mut start = 0;
    for b in &blocks {
        let v = b.sum / b.w;
        for y in ys[start..=b.last].iter_mut() {
            *y = v;
        }
        start = b.last + 1;
    }
    Ok(Calibrator::Isotonic { xs, ys })
}

fn fit_logistic(cs: &CalibrationSet) -> Result<Calibrator> {
    if all_identical(&cs.scores) {
        return Err(Error::Degenerate(
            "all calibration scores identical; parametric fit undefined".into(),
        ));
    }
    let input_logit = cs.scores_are_probabilities;
    let feats: Vec<f64> = cs
        .scores
        .iter()
        .map(|&s| if input_logit { logit(clamp_prob(s)) } else { s })
        .collect();
    let ys: Vec<f64> = cs.labels.iter().map(|&y| y as f64).collect();
    let theta = newton_logistic(&[feats], &ys, 100, 1e-10)?;
    // monotone non-decreasing output requires a >= 0
    Ok(Calibrator::Logistic {
        a: theta[0].max(0.0),
        b: theta[1],
        input_logit,
    })
}

fn fit_beta(cs: &CalibrationSet) -> Result<Calibrator> {
    if all_identical(&cs.scores) {
        return Err(Error::Degenerate(
            "all calibration scores identical; parametric fit undefined".into(),
        ));
    }
    let input_raw = !cs.scores_are_probabilities;
    let probs: Vec<f64> = cs
        .scores
        .iter()
        .map(|&s| clamp_prob(if input_raw { sigmoid(s) } else { s }))
        .collect();
    let f1: Vec<f64> = probs.iter().map(|&p| p.ln()).collect();
    let f2: Vec<f64> = probs.iter().map(|&p| -(1.0 - p).ln()).collect();
    let ys: Vec<f64> = cs.labels.iter().map(|&y| y as f64).collect();
    let theta = newton_logistic(&[f1, f2], &ys, 100, 1e-10)?;
    // non-negativity keeps the map monotone; enforced by clipping
    Ok(Calibrator::Beta {
        a: theta[0].max(0.0),
        b: theta[1].max(0.0),
        c: theta[2],
        input_raw,
    })
}

/// Damped Newton for logistic regression with an implicit intercept as
/// the final coefficient. `features` is one slice per non-intercept
/// feature. Returns coefficients, intercept last.
fn newton_logistic(features: &[Vec<f64>], ys: &[f64], max_iter: usize, tol: f64) -> Result<Vec<f64>> {
    let n = ys.len();
    let k = features.len() + 1;
    let feat = |i: usize, j: usize| -> f64 {
        if j < features.len() {
            features[j][i]
        } else {
            1.0
        }
    };
    let nll = |theta: &[f64]| -> f64 {
        let mut total = 0.0;
        for (i, &y) in ys.iter().enumerate() {
            let z: f64 = (0..k).map(|j| theta[j] * feat(i, j)).sum();
            let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
            total += softplus - y * z;
        }
        total / n as f64
    };

    let mut theta = vec![0.0; k];
    let mut cur = nll(&theta);
    for _ in 0..max_iter {
        // gradient and Hessian of the mean NLL
        let mut g = vec![0.0; k];
        let mut h = vec![0.0; k * k];
        for (i, &y) in ys.iter().enumerate() {
            let z: f64 = (0..k).map(|j| theta[j] * feat(i, j)).sum();
            let p = sigmoid(z);
            let r = p - y;
            let w = (p * (1.0 - p)).max(1e-12);
            for a in 0..k {
                g[a] += r * feat(i, a);
                for b in 0..k {
                    h[a * k + b] += w * feat(i, a) * feat(i, b);
                }
            }
        }
        for v in g.iter_mut() {
            *v /= n as f64;
        }
        for v in h.iter_mut() {
            *v /= n as f64;
        }
        // light ridge so separable data cannot make the solve singular
        for a in 0..k {
            h[a * k + a] += 1e-10;
        }
        let step = solve_dense(&mut h, &g, k)?;
        if g.iter().map(|v| v * v).sum::<f64>().sqrt() < tol {
            break;
        }
        // damping: halve until the objective does not increase
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..50 {
            let cand: Vec<f64> = theta
                .iter()
                .zip(&step)
                .map(|(t, s)| t - scale * s)
                .collect();
            let cand_nll = nll(&cand);
            if cand_nll <= cur + 1e-15 {
                theta = cand;
                cur = cand_nll;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(theta)
}

/// Gaussian elimination with partial pivoting; `a` is k×k row-major.
fn solve_dense(a: &mut [f64], b: &[f64], k: usize) -> Result<Vec<f64>> {
    let mut x = b.to_vec();
    for col in 0..k {
        let piv = (col..k)
            .max_by(|&i, &j| a[i * k + col].abs().total_cmp(&a[j * k + col].abs()))
            .unwrap();
        if a[piv * k + col].abs() < 1e-300 {
            return Err(Error::Degenerate("singular Hessian in calibrator fit".into()));
        }
        if piv != col {
            for j in 0..k {
                a.swap(col * k + j, piv * k + j);
            }
            x.swap(col, piv);
        }
        for row in col + 1..k {
            let f = a[row * k + col] / a[col * k + col];
            for j in col..k {
                a[row * k + j] -= f * a[col * k + j];
            }
            x[row] -= f * x[col];
        }
    }
    for col in (0..k).rev() {
        for j in col + 1..k {
            x[col] -= a[col * k + j] * x[j];
        }
        x[col] /= a[col * k + col];
    }
    Ok(x)
}

/// Z = Σ(y_i − p_i) / sqrt(Σ p_i(1−p_i)). Near zero for a calibrated
/// classifier; |Z| > 2 rejects calibration.
pub fn z_statistic(probs: &[f64], labels: &[u8]) -> Result<f64> {
    if probs.len() != labels.len() || probs.is_empty() {
        return Err(Error::InvalidParameter(
            "probs and labels must be equal-length and non-empty".into(),
        ));
    }
    let num: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| y as f64 - p)
        .sum();
    let var: f64 = probs.iter().map(|&p| p * (1.0 - p)).sum();
    if var <= 0.0 {
        return Err(Error::Degenerate("zero variance in Z statistic".into()));
    }
    Ok(num / var.sqrt())
}
