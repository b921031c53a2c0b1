//! Discriminator-driven sample selectors: the Metropolis-Hastings
//! independence sampler over generator draws, and the rejection-sampling
//! baseline with a pilot-estimated envelope.
//!
//! Both see the generator and discriminator only as black boxes. Because
//! the proposal ignores the chain state, each chain pre-draws its K
//! proposals and scores them in one batch; acceptance then replays the
//! scores sequentially. Scores are computed once per state.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Discriminator, Generator};
use crate::numeric::clamp_prob;

const MAX_RESTARTS: usize = 100;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MhConfig {
    /// Chain length (number of MH iterations per emitted sample).
    pub k: usize,
    /// Replace a never-accepting chain's real start with a generator draw.
    pub restart_on_no_accept: bool,
    pub seed: u64,
    /// Record a per-step (score, alpha, accepted) trace.
    pub collect_trace: bool,
    /// Chain states to snapshot, as 1-based step counts (ascending).
    /// A rejected step snapshots the unchanged state, so the marginals
    /// include repeats.
    pub record_steps: Vec<usize>,
}

impl Default for MhConfig {
    fn default() -> Self {
        MhConfig {
            k: 640,
            restart_on_no_accept: true,
            seed: 0,
            collect_trace: false,
            record_steps: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    pub d_current: f64,
    pub d_proposal: f64,
    pub alpha: f64,
    pub accepted: bool,
}

/// One chain's output and its accept/reject bookkeeping.
#[derive(Clone, Debug)]
pub struct ChainResult {
    pub output: Vec<f64>,
    pub accepted_steps: usize,
    pub first_accept_index: Option<usize>,
    pub restarted: bool,
    /// Generator draws consumed, including restart re-initializations.
    pub draws_used: usize,
    pub trace: Option<Vec<TraceStep>>,
    /// States snapshotted at the configured record_steps (final pass only).
    pub recorded: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DrsConfig {
    pub n_pilot: usize,
    /// Logit shift; 0 selects the plain capped-ratio acceptance rule.
    pub gamma: f64,
    pub max_draws: usize,
    pub seed: u64,
}

impl Default for DrsConfig {
    fn default() -> Self {
        DrsConfig {
            n_pilot: 10_000,
            gamma: 0.0,
            max_draws: 1_000_000,
            seed: 0,
        }
    }
}

/// Acceptance probability from the two discriminator scores:
/// min(1, (1/d_current − 1) / (1/d_proposal − 1)). Inputs are clamped
/// into [ε, 1−ε] so the ratio is always finite.
pub fn mh_accept_prob(d_current: f64, d_proposal: f64) -> f64 {
    let dc = clamp_prob(d_current);
    let dp = clamp_prob(d_proposal);
    let odds_inv_cur = (1.0 - dc) / dc;
    let odds_inv_prop = (1.0 - dp) / dp;
    (odds_inv_cur / odds_inv_prop).min(1.0)
}

struct PassOutcome {
    state: Vec<f64>,
    accepted_steps: usize,
    first_accept_index: Option<usize>,
    recorded: Vec<Vec<f64>>,
}

/// One K-step pass of the independence sampler from a given start state.
fn run_pass<R: Rng + ?Sized>(
    g: &Generator,
    d: &Discriminator,
    x0: Vec<f64>,
    k: usize,
    rng: &mut R,
    trace: Option<&mut Vec<TraceStep>>,
    record_steps: &[usize],
) -> PassOutcome {
    let proposals = g.sample(k, rng);
    let scores = d.score_batch(&proposals);
    let mut d_current = d.score(&x0);
    let mut state = x0;
    let mut accepted_steps = 0;
    let mut first_accept_index = None;
    let mut recorded = Vec::with_capacity(record_steps.len());
    let mut trace = trace;
    for step in 0..k {
        let d_prop = scores[step];
        let alpha = mh_accept_prob(d_current, d_prop);
        let u: f64 = rng.gen();
        let accepted = u <= alpha;
        if let Some(t) = trace.as_deref_mut() {
            t.push(TraceStep {
                step,
                d_current,
                d_proposal: d_prop,
                alpha,
                accepted,
            });
        }
        if accepted {
            state = proposals[step].clone();
            d_current = d_prop;
            accepted_steps += 1;
            first_accept_index.get_or_insert(step);
        }
        if record_steps.contains(&(step + 1)) {
            recorded.push(state.clone());
        }
    }
    PassOutcome {
        state,
        accepted_steps,
        first_accept_index,
        recorded,
    }
}

/// Run one independence-sampler chain initialized at a real data point.
///
/// If no proposal is accepted in K steps and restarts are enabled, the
/// chain is re-run from a fresh generator draw (so the real point is
/// never emitted), repeating until some proposal is accepted or the
/// restart budget is exhausted.
pub fn mh_chain<R: Rng + ?Sized>(
    g: &Generator,
    d: &Discriminator,
    x0: &[f64],
    cfg: &MhConfig,
    rng: &mut R,
) -> Result<ChainResult> {
    if cfg.k == 0 {
        return Err(Error::InvalidParameter("chain length K must be >= 1".into()));
    }
    let mut trace_buf = cfg.collect_trace.then(Vec::new);
    let mut draws_used = cfg.k;
    let first = run_pass(g, d, x0.to_vec(), cfg.k, rng, trace_buf.as_mut(), &cfg.record_steps);
    if first.accepted_steps > 0 || !cfg.restart_on_no_accept {
        return Ok(ChainResult {
            output: first.state,
            accepted_steps: first.accepted_steps,
            first_accept_index: first.first_accept_index,
            restarted: false,
            draws_used,
            trace: trace_buf,
            recorded: first.recorded,
        });
    }
    for restart in 1..=MAX_RESTARTS {
        let synthetic = g.sample_one(rng);
        draws_used += 1 + cfg.k;
        let pass = run_pass(g, d, synthetic, cfg.k, rng, trace_buf.as_mut(), &cfg.record_steps);
        if pass.accepted_steps > 0 {
            return Ok(ChainResult {
                output: pass.state,
                accepted_steps: pass.accepted_steps,
                first_accept_index: pass.first_accept_index,
                restarted: true,
                draws_used,
                trace: trace_buf,
                recorded: pass.recorded,
            });
        }
        let _ = restart;
    }
    Err(Error::RestartBudgetExhausted {
        restarts: MAX_RESTARTS,
        proposals_seen: draws_used,
    })
}

/// Aggregate statistics over a batch of independent chains.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleStats {
    pub acceptance_rate: f64,
    pub restart_rate: f64,
    pub total_draws: usize,
}

/// Produce n iid samples, one independent chain per sample. Chain i uses
/// the counter-based substream (seed, i), so outputs are deterministic
/// and order-insensitive.
pub fn mh_sample_iid(
    g: &Generator,
    d: &Discriminator,
    real_data: &[Vec<f64>],
    n: usize,
    cfg: &MhConfig,
) -> Result<(Vec<ChainResult>, SampleStats)> {
    if real_data.is_empty() {
        return Err(Error::InvalidParameter("real_data must be non-empty".into()));
    }
    let mut chains = Vec::with_capacity(n);
    let mut accepted = 0usize;
    let mut restarted = 0usize;
    let mut total_draws = 0usize;
    for i in 0..n {
        let mut rng = substream(cfg.seed, i as u64);
        let x0 = &real_data[rng.gen_range(0..real_data.len())];
        let chain = mh_chain(g, d, x0, cfg, &mut rng)?;
        accepted += chain.accepted_steps;
        restarted += chain.restarted as usize;
        total_draws += chain.draws_used;
        chains.push(chain);
    }
    let steps = (n * cfg.k).max(1);
    let stats = SampleStats {
        acceptance_rate: accepted as f64 / steps as f64,
        restart_rate: if n == 0 { 0.0 } else { restarted as f64 / n as f64 },
        total_draws,
    };
    Ok((chains, stats))
}

/// Counter-based per-chain random substream.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Estimate the rejection-sampling envelope: max of D/(1−D) over pilot
/// generator draws.
pub fn drs_estimate_max<R: Rng + ?Sized>(
    g: &Generator,
    d: &Discriminator,
    n_pilot: usize,
    rng: &mut R,
) -> Result<f64> {
    if n_pilot == 0 {
        return Err(Error::InvalidParameter("n_pilot must be >= 1".into()));
    }
    let pilots = g.sample(n_pilot, rng);
    let m_hat = d
        .score_batch(&pilots)
        .into_iter()
        .map(|s| {
            let s = clamp_prob(s);
            s / (1.0 - s)
        })
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(m_hat)
}

/// Rejection-sample one point from the generator. With gamma = 0 the
/// acceptance probability is the capped ratio r(x)/M̂; otherwise it is
/// sigmoid(ln r(x) − ln M̂ − gamma).
pub fn drs_sample<R: Rng + ?Sized>(
    g: &Generator,
    d: &Discriminator,
    m_hat: f64,
    gamma: f64,
    cfg: &DrsConfig,
    rng: &mut R,
) -> Result<(Vec<f64>, usize)> {
    if !m_hat.is_finite() || m_hat <= 0.0 {
        return Err(Error::InvalidParameter(format!("M̂ must be positive, got {m_hat}")));
    }
    for draw in 1..=cfg.max_draws {
        let x = g.sample_one(rng);
        let s = clamp_prob(d.score(&x));
        let r = s / (1.0 - s);
        let accept_prob = if gamma == 0.0 {
            (r / m_hat).min(1.0)
        } else {
            crate::numeric::sigmoid(r.ln() - m_hat.ln() - gamma)
        };
        if rng.gen::<f64>() < accept_prob {
            return Ok((x, draw));
        }
    }
    Err(Error::MaxDrawsExceeded {
        max_draws: cfg.max_draws,
    })
}

/// n rejection-sampled points from one shared substream. Proposals are
/// drawn and scored in blocks so a learned discriminator runs batched;
/// the acceptance scan still consumes draws strictly in order, so the
/// result is deterministic in (seed, n).
pub fn drs_sample_iid(
    g: &Generator,
    d: &Discriminator,
    m_hat: f64,
    n: usize,
    cfg: &DrsConfig,
) -> Result<(Vec<Vec<f64>>, SampleStats)> {
    if !m_hat.is_finite() || m_hat <= 0.0 {
        return Err(Error::InvalidParameter(format!("M̂ must be positive, got {m_hat}")));
    }
    const BLOCK: usize = 1024;
    let mut rng = substream(cfg.seed, 0);
    let mut outputs = Vec::with_capacity(n);
    let mut total_draws = 0usize;
    let mut since_accept = 0usize;
    while outputs.len() < n {
        let proposals = g.sample(BLOCK, &mut rng);
        let scores = d.score_batch(&proposals);
        for (x, s) in proposals.into_iter().zip(scores) {
            if outputs.len() == n {
                break;
            }
            total_draws += 1;
            since_accept += 1;
            let s = clamp_prob(s);
            let r = s / (1.0 - s);
            let accept_prob = if cfg.gamma == 0.0 {
                (r / m_hat).min(1.0)
            } else {
                crate::numeric::sigmoid(r.ln() - m_hat.ln() - cfg.gamma)
            };
            if rng.gen::<f64>() < accept_prob {
                outputs.push(x);
                since_accept = 0;
            } else if since_accept >= cfg.max_draws {
                return Err(Error::MaxDrawsExceeded {
                    max_draws: cfg.max_draws,
                });
            }
        }
    }
    let stats = SampleStats {
        acceptance_rate: if total_draws == 0 { 0.0 } else { n as f64 / total_draws as f64 },
        restart_rate: 0.0,
        total_draws,
    };
    Ok((outputs, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixtures::{make_grid25, make_univariate4, Component, GaussianMixture};
    use crate::models::oracle_discriminator;
    use crate::numeric::PROB_EPS;

    fn single(mean: f64, sigma: f64) -> GaussianMixture {
        GaussianMixture::new(vec![Component { mean: vec![mean], sigma }], vec![1.0]).unwrap()
    }

    #[test]
    fn accept_prob_arithmetic() {
        assert_eq!(mh_accept_prob(0.37, 0.37), 1.0);
        let a = mh_accept_prob(2.0 / 3.0, 0.5);
        assert!((a - 0.5).abs() < 1e-12, "alpha {a}");
        assert_eq!(mh_accept_prob(0.5, 2.0 / 3.0), 1.0);
    }

    #[test]
    fn accept_prob_monotonicity() {
        let grid: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
        for w in grid.windows(2) {
            // increasing in d_proposal
            let lo = mh_accept_prob(0.9, w[0]);
            let hi = mh_accept_prob(0.9, w[1]);
            assert!(hi >= lo);
            if hi < 1.0 {
                assert!(hi > lo);
            }
            // decreasing in d_current
            let lo = mh_accept_prob(w[1], 0.05);
            let hi = mh_accept_prob(w[0], 0.05);
            assert!(hi >= lo);
            if hi < 1.0 {
                assert!(hi > lo);
            }
        }
    }

    #[test]
    fn constant_discriminator_accepts_everything() {
        let m = make_grid25();
        let d = oracle_discriminator(&m, &m).unwrap(); // D ≡ 0.5
        let g = Generator::Mixture(m.clone());
        let cfg = MhConfig { k: 50, collect_trace: true, ..MhConfig::default() };
        let mut rng = substream(3, 0);
        let x0 = m.sample_one(&mut rng);
        let res = mh_chain(&g, &d, &x0, &cfg, &mut rng).unwrap();
        assert_eq!(res.accepted_steps, 50);
        assert_eq!(res.first_accept_index, Some(0));
        assert!(!res.restarted);
        let trace = res.trace.unwrap();
        assert!(trace.iter().all(|t| t.alpha == 1.0 && t.accepted));
    }

    #[test]
    fn k1_dominant_proposal_is_taken() {
        // proposals score near 1 while x0 scores 0.5: alpha ≈ 1
        let p_data = single(0.0, 0.5);
        let p_gen = single(5.0, 0.5);
        // chains propose from p_data (where oracle ≈ 1), start at x0 = 5
        let d = oracle_discriminator(&p_data, &p_gen).unwrap();
        let g = Generator::Mixture(p_data.clone());
        let cfg = MhConfig { k: 1, ..MhConfig::default() };
        let mut taken = 0;
        let trials = 2000;
        for i in 0..trials {
            let mut rng = substream(17, i);
            let res = mh_chain(&g, &d, &[5.0], &cfg, &mut rng).unwrap();
            if res.accepted_steps == 1 {
                taken += 1;
            }
        }
        assert!(taken * 1000 >= trials * 999, "{taken}/{trials}");
    }

    #[test]
    fn hopeless_real_start_restarts_with_synthetic() {
        // every generator sample scores ~eps, the real start scores ~1-eps
        let p_data = single(0.0, 0.01);
        let p_gen = single(100.0, 0.01);
        let d = oracle_discriminator(&p_data, &p_gen).unwrap();
        let g = Generator::Mixture(p_gen.clone());
        let cfg = MhConfig { k: 64, collect_trace: true, ..MhConfig::default() };
        let mut rng = substream(23, 0);
        let res = mh_chain(&g, &d, &[0.0], &cfg, &mut rng).unwrap();
        assert!(res.restarted);
        assert!(res.output[0] > 50.0, "output {:?} should be synthetic", res.output);
        let trace = res.trace.unwrap();
        // pre-restart pass: alpha pinned near zero by the clamp
        assert!(trace[..64].iter().all(|t| !t.accepted));
        assert!(trace[..64].iter().all(|t| t.alpha < 1e-9), "clamp bounds alpha near eps^2");
        let _ = PROB_EPS;
        // post-restart: same-score proposals accept with alpha = 1
        assert!(trace[64..].iter().any(|t| t.accepted && (t.alpha - 1.0).abs() < 1e-9));
    }

    #[test]
    fn no_restart_flag_keeps_real_sample() {
        let p_data = single(0.0, 0.01);
        let p_gen = single(100.0, 0.01);
        let d = oracle_discriminator(&p_data, &p_gen).unwrap();
        let g = Generator::Mixture(p_gen);
        let cfg = MhConfig {
            k: 16,
            restart_on_no_accept: false,
            ..MhConfig::default()
        };
        let mut rng = substream(29, 0);
        let res = mh_chain(&g, &d, &[0.0], &cfg, &mut rng).unwrap();
        assert!(!res.restarted);
        assert_eq!(res.output, vec![0.0]);
        assert_eq!(res.accepted_steps, 0);
    }

    #[test]
    fn iid_outputs_match_generator_under_flat_scores() {
        let m = make_univariate4(None).unwrap();
        let d = oracle_discriminator(&m, &m).unwrap(); // D ≡ 0.5
        let g = Generator::Mixture(m.clone());
        let cfg = MhConfig { k: 10, seed: 91, ..MhConfig::default() };
        let real = {
            let mut rng = substream(92, 0);
            m.sample(100, &mut rng)
        };
        let (chains, stats) = mh_sample_iid(&g, &d, &real, 1000, &cfg).unwrap();
        assert!((stats.acceptance_rate - 1.0).abs() < 1e-12);
        let outputs: Vec<f64> = chains.iter().map(|c| c.output[0]).collect();
        let fresh: Vec<f64> = {
            let mut rng = substream(93, 0);
            m.sample(1000, &mut rng).into_iter().map(|x| x[0]).collect()
        };
        let (_, p) = crate::metrics::ks_two_sample(&outputs, &fresh).unwrap();
        assert!(p > 0.01, "p = {p}");
    }

    #[test]
    fn iid_sampling_is_deterministic() {
        let m = make_univariate4(None).unwrap();
        let gmix = make_univariate4(Some(3)).unwrap();
        let d = oracle_discriminator(&m, &gmix).unwrap();
        let g = Generator::Mixture(gmix.clone());
        let cfg = MhConfig { k: 20, seed: 5, ..MhConfig::default() };
        let real = {
            let mut rng = substream(6, 0);
            m.sample(50, &mut rng)
        };
        let (a, _) = mh_sample_iid(&g, &d, &real, 0, &cfg).unwrap();
        assert!(a.is_empty());
        let (b, _) = mh_sample_iid(&g, &d, &real, 200, &cfg).unwrap();
        let (c, _) = mh_sample_iid(&g, &d, &real, 200, &cfg).unwrap();
        for (x, y) in b.iter().zip(&c) {
            assert_eq!(x.output, y.output);
        }
    }

    #[test]
    fn drs_envelope_estimation() {
        let m = make_grid25();
        let d = oracle_discriminator(&m, &m).unwrap();
        let g = Generator::Mixture(m.clone());
        let mut rng = substream(7, 0);
        let m_hat = drs_estimate_max(&g, &d, 100, &mut rng).unwrap();
        assert!((m_hat - 1.0).abs() < 1e-12);
        assert!(drs_estimate_max(&g, &d, 0, &mut rng).is_err());
    }

    #[test]
    fn drs_envelope_grows_with_pilot_count() {
        let data = make_univariate4(None).unwrap();
        let gmix = make_univariate4(Some(3)).unwrap();
        let d = oracle_discriminator(&data, &gmix).unwrap();
        let g = Generator::Mixture(gmix);
        // larger pilot sets drawn from the same stream are supersets of
        // smaller ones, so each seed's M̂ must be non-decreasing in n_pilot
        let mut any_strict = false;
        for s in 0..20u64 {
            let mut prev = 0.0;
            for n_pilot in [100usize, 1000, 10_000] {
                let mut rng = substream(1000 + s, 0);
                let m = drs_estimate_max(&g, &d, n_pilot, &mut rng).unwrap();
                assert!(m >= prev, "M̂ {m} shrank at n_pilot={n_pilot} (seed {s})");
                if m > prev {
                    any_strict = true;
                }
                prev = m;
            }
        }
        assert!(any_strict);
    }

    #[test]
    fn drs_flat_scores_accept_first_draw() {
        let m = make_grid25();
        let d = oracle_discriminator(&m, &m).unwrap();
        let g = Generator::Mixture(m.clone());
        let cfg = DrsConfig::default();
        let mut rng = substream(8, 0);
        let (_, draws) = drs_sample(&g, &d, 1.0, 0.0, &cfg, &mut rng).unwrap();
        assert_eq!(draws, 1);
    }

    #[test]
    fn drs_huge_gamma_exhausts_draws() {
        let m = make_grid25();
        let d = oracle_discriminator(&m, &m).unwrap();
        let g = Generator::Mixture(m.clone());
        let cfg = DrsConfig { max_draws: 200, ..DrsConfig::default() };
        let mut rng = substream(9, 0);
        let res = drs_sample(&g, &d, 1.0, 60.0, &cfg, &mut rng);
        assert!(matches!(res, Err(Error::MaxDrawsExceeded { .. })));
    }

    #[test]
    fn acceptance_rate_tracks_score_overlap() {
        // wider generator noise => more score overlap => lower AUC =>
        // higher MH acceptance rate
        let data = make_univariate4(None).unwrap();
        let near = GaussianMixture::new(
            vec![
                Component { mean: vec![-3.2], sigma: 0.6 },
                Component { mean: vec![-0.8], sigma: 0.6 },
                Component { mean: vec![1.2], sigma: 0.6 },
                Component { mean: vec![2.8], sigma: 0.6 },
            ],
            vec![0.25; 4],
        )
        .unwrap();
        let far = GaussianMixture::new(
            vec![
                Component { mean: vec![-4.5], sigma: 0.25 },
                Component { mean: vec![-1.5], sigma: 0.25 },
                Component { mean: vec![1.5], sigma: 0.25 },
                Component { mean: vec![4.5], sigma: 0.25 },
            ],
            vec![0.25; 4],
        )
        .unwrap();
        let mut rates = Vec::new();
        let mut aucs = Vec::new();
        for gmix in [near, far] {
            let d = oracle_discriminator(&data, &gmix).unwrap();
            let g = Generator::Mixture(gmix.clone());
            let mut rng = substream(77, 0);
            let real = data.sample(500, &mut rng);
            let fake = gmix.sample(2000, &mut rng);
            let pos: Vec<f64> = real.iter().map(|x| d.score(x)).collect();
            let neg: Vec<f64> = fake.iter().map(|x| d.score(x)).collect();
            aucs.push(crate::metrics::auc(&pos, &neg).unwrap());
            let cfg = MhConfig { k: 100, seed: 78, ..MhConfig::default() };
            let (_, stats) = mh_sample_iid(&g, &d, &real, 500, &cfg).unwrap();
            rates.push(stats.acceptance_rate);
        }
        assert!(aucs[0] < 0.90 && aucs[1] > 0.93, "aucs {aucs:?}");
        assert!(
            rates[0] > rates[1],
            "low-AUC setup should accept more: {rates:?} (aucs {aucs:?})"
        );
    }
}
