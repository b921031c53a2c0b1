//! Mode-recovery metrics for mixture benchmarks plus the statistical
//! tests the acceptance checks rely on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixtures::GaussianMixture;

/// Per-sample nearest-mode categorization. A sample belongs to its
/// nearest mixture mean if the L2 distance is within four of that
/// component's standard deviations, otherwise it is unassigned.
#[derive(Clone, Debug)]
pub struct ModeAssignment {
    /// One entry per sample: Some(mode index) or None for unassigned.
    pub assignments: Vec<Option<usize>>,
    pub counts: Vec<usize>,
    pub unassigned: usize,
}

impl ModeAssignment {
    pub fn total(&self) -> usize {
        self.assignments.len()
    }
}

/// Summary row emitted per (experiment, selector, k, seed).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricsReport {
    pub high_quality_rate: f64,
    pub mode_jsd: f64,
    pub within_mode_std: f64,
    pub acceptance_rate: f64,
    pub restart_rate: f64,
    pub z_value: f64,
}

/// Nearest-mean assignment with a 4σ quality cutoff; ties go to the
/// lowest mode index.
pub fn assign_modes(samples: &[Vec<f64>], m: &GaussianMixture) -> Result<ModeAssignment> {
    let d = m.dim();
    let mut assignments = Vec::with_capacity(samples.len());
    let mut counts = vec![0usize; m.n_components()];
    let mut unassigned = 0usize;
    for x in samples {
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
        let mut best = 0usize;
        let mut best_sq = f64::INFINITY;
        for (i, c) in m.components().iter().enumerate() {
            let sq: f64 = x
                .iter()
                .zip(&c.mean)
                .map(|(xi, mi)| (xi - mi) * (xi - mi))
                .sum();
            if sq < best_sq {
                best_sq = sq;
                best = i;
            }
        }
        let sigma = m.components()[best].sigma;
        if best_sq.sqrt() <= 4.0 * sigma {
            counts[best] += 1;
            assignments.push(Some(best));
        } else {
            unassigned += 1;
            assignments.push(None);
        }
    }
    Ok(ModeAssignment {
        assignments,
        counts,
        unassigned,
    })
}

/// Fraction of samples within 4σ of some mixture mean.
pub fn high_quality_rate(a: &ModeAssignment) -> Result<f64> {
    if a.total() == 0 {
        return Err(Error::InvalidParameter("empty sample set".into()));
    }
    Ok(1.0 - a.unassigned as f64 / a.total() as f64)
}

fn kl_to_mid(p: &[f64], mid: &[f64]) -> f64 {
    p.iter()
        .zip(mid)
        .map(|(&pi, &mi)| if pi > 0.0 { pi * (pi / mi).ln() } else { 0.0 })
        .sum()
}

/// Jensen-Shannon divergence (nats) between two categorical histograms.
pub fn jsd(p: &[f64], q: &[f64]) -> f64 {
    let mid: Vec<f64> = p.iter().zip(q).map(|(&a, &b)| 0.5 * (a + b)).collect();
    0.5 * kl_to_mid(p, &mid) + 0.5 * kl_to_mid(q, &mid)
}

/// JSD between the empirical nearest-mode distribution (modes plus an
/// unassigned category) and the uniform distribution over true modes.
pub fn mode_jsd(a: &ModeAssignment) -> f64 {
    let n = a.total() as f64;
    let n_modes = a.counts.len();
    let mut emp: Vec<f64> = a.counts.iter().map(|&c| c as f64 / n).collect();
    emp.push(a.unassigned as f64 / n);
    let mut reference = vec![1.0 / n_modes as f64; n_modes];
    reference.push(0.0);
    jsd(&emp, &reference)
}

/// Count-weighted average, over modes with at least two samples, of the
/// √d-normalized radial deviation sqrt(Σ‖x−μ‖² / (count·d)). An exact
/// isotropic Gaussian mode yields ≈ σ.
pub fn within_mode_std(
    samples: &[Vec<f64>],
    a: &ModeAssignment,
    m: &GaussianMixture,
) -> Result<f64> {
    if a.total() != samples.len() {
        return Err(Error::InvalidParameter(
            "assignment does not match sample count".into(),
        ));
    }
    let d = m.dim() as f64;
    let mut sq_sums = vec![0.0; m.n_components()];
    for (x, assign) in samples.iter().zip(&a.assignments) {
        if let Some(i) = assign {
            let mu = &m.components()[*i].mean;
            sq_sums[*i] += x
                .iter()
                .zip(mu)
                .map(|(xi, mi)| (xi - mi) * (xi - mi))
                .sum::<f64>();
        }
    }
    let mut weighted = 0.0;
    let mut weight = 0usize;
    for (i, &count) in a.counts.iter().enumerate() {
        if count >= 2 {
            let rms = (sq_sums[i] / (count as f64 * d)).sqrt();
            weighted += rms * count as f64;
            weight += count;
        }
    }
    if weight == 0 {
        return Err(Error::Degenerate(
            "no mode has at least two assigned samples".into(),
        ));
    }
    Ok(weighted / weight as f64)
}

/// Classical two-sample Kolmogorov-Smirnov statistic and its asymptotic
/// p-value (Kolmogorov series truncated at 100 terms).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidParameter("KS inputs must be non-empty".into()));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut stat: f64 = 0.0;
    while i < sa.len() && j < sb.len() {
        let v = sa[i].min(sb[j]);
        while i < sa.len() && sa[i] <= v {
            i += 1;
        }
        while j < sb.len() && sb[j] <= v {
            j += 1;
        }
        stat = stat.max((i as f64 / na - j as f64 / nb).abs());
    }
    let lambda = stat * (na * nb / (na + nb)).sqrt();
    Ok((stat, kolmogorov_survival(lambda)))
}

/// P(K > λ) = 2 Σ_{k≥1} (−1)^{k−1} exp(−2 k² λ²), truncated at 100 terms.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100u32 {
        let term = (-2.0 * (k as f64).powi(2) * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Per-coordinate KS with Bonferroni combination; returns the max
/// statistic and min(1, d · min_p).
pub fn ks_two_sample_nd(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidParameter("KS inputs must be non-empty".into()));
    }
    let d = a[0].len();
    let mut max_stat: f64 = 0.0;
    let mut min_p: f64 = 1.0;
    for coord in 0..d {
        let ca: Vec<f64> = a.iter().map(|x| x[coord]).collect();
        let cb: Vec<f64> = b.iter().map(|x| x[coord]).collect();
        let (stat, p) = ks_two_sample(&ca, &cb)?;
        max_stat = max_stat.max(stat);
        min_p = min_p.min(p);
    }
    Ok((max_stat, (min_p * d as f64).min(1.0)))
}

/// Rank-based AUC of positive vs negative scores (ties counted half).
pub fn auc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::InvalidParameter("AUC inputs must be non-empty".into()));
    }
    let mut wins = 0.0;
    for &p in pos {
        for &n in neg {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (pos.len() as f64 * neg.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixtures::{make_grid25, GaussianMixture};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn assignment_basics() {
        let m = make_grid25();
        let samples = vec![
            vec![0.0, 0.0],                    // exactly at a mean
            vec![0.21 / f64::sqrt(2.0) + 0.0, 0.21 / f64::sqrt(2.0)], // 0.21 away
            vec![0.1, 0.0],                    // 2σ away, assigned
        ];
        let a = assign_modes(&samples, &m).unwrap();
        assert_eq!(a.assignments[0], Some(12)); // center of the grid
        assert_eq!(a.assignments[1], None);
        assert_eq!(a.assignments[2], Some(12));
        assert_eq!(a.counts.iter().sum::<usize>() + a.unassigned, 3);
    }

    #[test]
    fn assignment_tie_breaks_to_lowest_index() {
        let m = make_grid25();
        // equidistant between modes 0 (-2,-2) and 1 (-1,-2)
        let a = assign_modes(&[vec![-1.5, -2.0]], &m).unwrap();
        // 0.5 away: beyond 4σ=0.2, so unassigned; use a closer tie instead
        assert_eq!(a.assignments[0], None);
        let m4 = crate::mixtures::make_univariate4(None).unwrap();
        // equidistant (1.0) between means -1 and 1, within 4σ=2
        let a = assign_modes(&[vec![0.0]], &m4).unwrap();
        assert_eq!(a.assignments[0], Some(1));
    }

    #[test]
    fn assignment_translation_equivariant() {
        let m = make_grid25();
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let samples = m.sample(500, &mut rng);
        let a1 = assign_modes(&samples, &m).unwrap();
        let shift = [13.5, -2.25];
        let shifted: Vec<Vec<f64>> = samples
            .iter()
            .map(|x| vec![x[0] + shift[0], x[1] + shift[1]])
            .collect();
        let m_shift = GaussianMixture::new(
            m.components()
                .iter()
                .map(|c| crate::mixtures::Component {
                    mean: vec![c.mean[0] + shift[0], c.mean[1] + shift[1]],
                    sigma: c.sigma,
                })
                .collect(),
            m.weights().to_vec(),
        )
        .unwrap();
        let a2 = assign_modes(&shifted, &m_shift).unwrap();
        assert_eq!(a1.assignments, a2.assignments);
    }

    #[test]
    fn hq_rate_extremes() {
        let m = make_grid25();
        let at_means: Vec<Vec<f64>> = m.components().iter().map(|c| c.mean.clone()).collect();
        let a = assign_modes(&at_means, &m).unwrap();
        assert_eq!(high_quality_rate(&a).unwrap(), 1.0);

        let far = vec![vec![10.0, 10.0]; 5];
        let a = assign_modes(&far, &m).unwrap();
        assert_eq!(high_quality_rate(&a).unwrap(), 0.0);

        let empty = assign_modes(&[], &m).unwrap();
        assert!(high_quality_rate(&empty).is_err());
    }

    #[test]
    fn hq_rate_of_true_grid_samples() {
        let m = make_grid25();
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let samples = m.sample(10_000, &mut rng);
        let a = assign_modes(&samples, &m).unwrap();
        assert!(high_quality_rate(&a).unwrap() >= 0.999);
    }

    #[test]
    fn mode_jsd_extremes() {
        let m = make_grid25();
        // perfectly uniform
        let mut samples = Vec::new();
        for c in m.components() {
            for _ in 0..4 {
                samples.push(c.mean.clone());
            }
        }
        let a = assign_modes(&samples, &m).unwrap();
        assert!(mode_jsd(&a).abs() < 1e-12);

        // all mass in one mode: verified against the direct 26-term sum
        let one = vec![vec![0.0, 0.0]; 100];
        let a = assign_modes(&one, &m).unwrap();
        let mut emp = vec![0.0; 26];
        emp[12] = 1.0;
        let mut reference = vec![1.0 / 25.0; 25];
        reference.push(0.0);
        let direct = jsd(&emp, &reference);
        assert!((mode_jsd(&a) - direct).abs() < 1e-15);
        assert!(direct > 0.0 && direct < std::f64::consts::LN_2);

        // all unassigned: disjoint supports give ln 2
        let far = vec![vec![10.0, 10.0]; 100];
        let a = assign_modes(&far, &m).unwrap();
        assert!((mode_jsd(&a) - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn jsd_symmetric_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        for _ in 0..100 {
            let n = rng.gen_range(2..10);
            let mut p: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let mut q: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let (ps, qs) = (p.iter().sum::<f64>(), q.iter().sum::<f64>());
            p.iter_mut().for_each(|v| *v /= ps);
            q.iter_mut().for_each(|v| *v /= qs);
            let ab = jsd(&p, &q);
            let ba = jsd(&q, &p);
            assert!((ab - ba).abs() < 1e-12);
            assert!((0.0..=std::f64::consts::LN_2 + 1e-12).contains(&ab));
        }
    }

    #[test]
    fn within_mode_std_recovers_sigma() {
        let m = make_grid25();
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let samples = m.sample(100_000, &mut rng);
        let a = assign_modes(&samples, &m).unwrap();
        let s = within_mode_std(&samples, &a, &m).unwrap();
        assert!((s - 0.05).abs() < 0.003, "within-mode std {s}");
    }

    #[test]
    fn within_mode_std_hand_cases() {
        let m = make_grid25();
        // two samples exactly at a mean
        let samples = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        let a = assign_modes(&samples, &m).unwrap();
        assert_eq!(within_mode_std(&samples, &a, &m).unwrap(), 0.0);

        // one mode with samples at mean ± (0.05, 0):
        // sqrt((0.0025 + 0.0025) / (2 · 2)) = 0.05/√2
        let samples = vec![vec![0.05, 0.0], vec![-0.05, 0.0]];
        let a = assign_modes(&samples, &m).unwrap();
        let s = within_mode_std(&samples, &a, &m).unwrap();
        assert!((s - 0.05 / f64::sqrt(2.0)).abs() < 1e-12);

        // no assigned samples
        let far = vec![vec![9.0, 9.0]];
        let a = assign_modes(&far, &m).unwrap();
        assert!(within_mode_std(&far, &a, &m).is_err());
    }

    #[test]
    fn ks_trivial_cases() {
        let a: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        let (stat, p) = ks_two_sample(&a, &a).unwrap();
        assert_eq!(stat, 0.0);
        assert_eq!(p, 1.0);

        let b: Vec<f64> = a.iter().map(|x| x + 10.0).collect();
        let (stat, p) = ks_two_sample(&a, &b).unwrap();
        assert_eq!(stat, 1.0);
        assert!(p < 1e-10);
    }

    #[test]
    fn ks_null_distribution() {
        let mut pass = 0;
        let trials = 500;
        for t in 0..trials {
            let mut rng = ChaCha8Rng::seed_from_u64(9000 + t);
            let a: Vec<f64> = (0..5000)
                .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect();
            let b: Vec<f64> = (0..5000)
                .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect();
            let (_, p) = ks_two_sample(&a, &b).unwrap();
            if p > 0.01 {
                pass += 1;
            }
        }
        assert!(pass * 100 >= trials * 98, "{pass}/{trials} above 0.01");
    }

    #[test]
    fn auc_basics() {
        assert_eq!(auc(&[1.0, 0.9], &[0.1, 0.2]).unwrap(), 1.0);
        assert_eq!(auc(&[0.5], &[0.5]).unwrap(), 0.5);
        assert!(auc(&[], &[0.5]).is_err());
    }
}
