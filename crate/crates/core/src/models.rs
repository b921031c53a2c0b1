//! Generator and discriminator abstractions consumed by the samplers.
//!
//! Samplers only see a black-box sample source and a black-box score
//! function. Analytic variants keep their underlying mixtures around so
//! oracle identities can be checked exactly.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::calibration::Calibrator;
use crate::error::{Error, Result};
use crate::mixtures::{make_grid25, GaussianMixture};
use crate::mlp::MlpNet;
use crate::numeric::sigmoid;

/// Black-box sample source. The `Mixture` variant is analytic: its density
/// is known exactly, which is what oracle discriminators require.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Generator {
    Mixture(GaussianMixture),
    /// Grid mixture with some modes dropped plus "bridge" mass along grid
    /// edges between adjacent modes. Not analytic.
    GridBridge {
        modes: GaussianMixture,
        bridge_weight: f64,
        edges: Vec<(Vec<f64>, Vec<f64>)>,
        sigma: f64,
    },
}

impl Generator {
    pub fn dim(&self) -> usize {
        match self {
            Generator::Mixture(m) => m.dim(),
            Generator::GridBridge { modes, .. } => modes.dim(),
        }
    }

    /// Exact log-density when the generator is analytic.
    pub fn logpdf(&self, x: &[f64]) -> Option<f64> {
        match self {
            Generator::Mixture(m) => m.logpdf(x).ok(),
            Generator::GridBridge { .. } => None,
        }
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Generator::Mixture(m) => m.sample_one(rng),
            Generator::GridBridge {
                modes,
                bridge_weight,
                edges,
                sigma,
            } => {
                if rng.gen::<f64>() < *bridge_weight {
                    let (a, b) = &edges[rng.gen_range(0..edges.len())];
                    // middle of the segment only, so bridge points stay far
                    // from both endpoint modes even after noise
                    let t = rng.gen_range(0.25..0.75);
                    a.iter()
                        .zip(b)
                        .map(|(&ai, &bi)| {
                            ai + t * (bi - ai) + sigma * rng.sample::<f64, _>(StandardNormal)
                        })
                        .collect()
                } else {
                    modes.sample_one(rng)
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }
}

/// Black-box score function. `Oracle` and `Warped` are analytic test
/// fixtures; `Mlp` is a learned discriminator; `Calibrated` composes any
/// of them with a fitted score→probability map.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Discriminator {
    Oracle {
        p_data: GaussianMixture,
        p_gen: GaussianMixture,
    },
    Warped {
        base: Box<Discriminator>,
        a: f64,
        b: f64,
    },
    Mlp(MlpNet),
    Calibrated {
        base: Box<Discriminator>,
        calibrator: Calibrator,
    },
}

impl Discriminator {
    /// Whether scores already live in (0, 1).
    pub fn is_probability(&self) -> bool {
        match self {
            Discriminator::Oracle { .. } | Discriminator::Mlp(_) => true,
            Discriminator::Warped { base, .. } => base.is_probability(),
            Discriminator::Calibrated { .. } => true,
        }
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        match self {
            Discriminator::Oracle { p_data, p_gen } => {
                let ld = p_data.logpdf(x).expect("dimension checked at construction");
                let lg = p_gen.logpdf(x).expect("dimension checked at construction");
                // keep far-tail scores representably inside (0, 1)
                crate::numeric::clamp_prob(sigmoid(ld - lg))
            }
            Discriminator::Warped { base, a, b } => {
                let s = base.score(x);
                sigmoid(a * crate::numeric::logit(s) + b)
            }
            Discriminator::Mlp(net) => net.forward(x).expect("dimension checked at construction"),
            Discriminator::Calibrated { base, calibrator } => calibrator.apply(base.score(x)),
        }
    }

    /// Score many points at once. The MLP path runs batched matrix
    /// products, which dominates the cost of chain sampling.
    pub fn score_batch(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        match self {
            Discriminator::Mlp(net) => net.forward_batch(xs).expect("dimension checked"),
            Discriminator::Warped { base, a, b } => base
                .score_batch(xs)
                .into_iter()
                .map(|s| sigmoid(a * crate::numeric::logit(s) + b))
                .collect(),
            Discriminator::Calibrated { base, calibrator } => base
                .score_batch(xs)
                .into_iter()
                .map(|s| calibrator.apply(s))
                .collect(),
            _ => xs.iter().map(|x| self.score(x)).collect(),
        }
    }
}

/// The optimal discriminator for a known data/generator density pair:
/// score(x) = p_data(x) / (p_data(x) + p_g(x)), computed stably from
/// log-densities.
pub fn oracle_discriminator(
    p_data: &GaussianMixture,
    p_gen: &GaussianMixture,
) -> Result<Discriminator> {
    if p_data.dim() != p_gen.dim() {
        return Err(Error::DimensionMismatch {
            expected: p_data.dim(),
            got: p_gen.dim(),
        });
    }
    Ok(Discriminator::Oracle {
        p_data: p_data.clone(),
        p_gen: p_gen.clone(),
    })
}

/// Miscalibrate a probability discriminator with a logit-affine warp:
/// score'(x) = sigmoid(a · logit(score(x)) + b). Preserves ranking for
/// a > 0, so AUC is unchanged while calibration breaks.
pub fn warp_discriminator(d: &Discriminator, a: f64, b: f64) -> Result<Discriminator> {
    if !d.is_probability() {
        return Err(Error::InvalidParameter(
            "warp requires a probability-output discriminator".into(),
        ));
    }
    if a == 0.0 {
        return Err(Error::InvalidParameter("warp slope a must be nonzero".into()));
    }
    Ok(Discriminator::Warped {
        base: Box::new(d.clone()),
        a,
        b,
    })
}

/// Synthetic stand-in for a trained generator on the 25-Gaussian grid:
/// drops the given modes (renormalizing) and optionally mixes in
/// `bridge_weight` of mass spread along the edges between adjacent grid
/// positions (including edges incident to dropped modes).
pub fn imperfect_grid_generator(drop: &[usize], bridge_weight: f64) -> Result<Generator> {
    if !(0.0..1.0).contains(&bridge_weight) {
        return Err(Error::InvalidParameter(format!(
            "bridge_weight must be in [0,1), got {bridge_weight}"
        )));
    }
    let grid = make_grid25();
    let mut dropped = [false; 25];
    for &i in drop {
        if i >= 25 {
            return Err(Error::InvalidParameter(format!(
                "mode index {i} out of range 0..25"
            )));
        }
        dropped[i] = true;
    }
    let kept: Vec<usize> = (0..25).filter(|&i| !dropped[i]).collect();
    if kept.is_empty() {
        return Err(Error::InvalidParameter("cannot drop all 25 modes".into()));
    }
    let components: Vec<_> = kept
        .iter()
        .map(|&i| grid.components()[i].clone())
        .collect();
    let w = 1.0 / kept.len() as f64;
    let modes = GaussianMixture::new(components, vec![w; kept.len()])?;

    if bridge_weight == 0.0 {
        return Ok(Generator::Mixture(modes));
    }

    // horizontal and vertical grid edges between adjacent modes; dropped
    // modes keep their incident edges, mimicking spurious links from the
    // generator into regions whose mode it has lost
    let mut edges = Vec::new();
    for iy in 0..5usize {
        for ix in 0..5usize {
            let i = iy * 5 + ix;
            for (jx, jy) in [(ix + 1, iy), (ix, iy + 1)] {
                if jx >= 5 || jy >= 5 {
                    continue;
                }
                let j = jy * 5 + jx;
                edges.push((
                    grid.components()[i].mean.clone(),
                    grid.components()[j].mean.clone(),
                ));
            }
        }
    }
    Ok(Generator::GridBridge {
        modes,
        bridge_weight,
        edges,
        sigma: 0.05,
    })
}
