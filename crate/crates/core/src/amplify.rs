//! Majority-vote amplification over `k` independent verifier runs.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::qcore::fmt_f64;
use crate::seeding::trial_rng;

pub const STANDARD_KS: [usize; 4] = [16, 81, 256, 625];
pub const STANDARD_EPSILONS: [f64; 4] = [0.05, 0.1, 0.25, 1.0 / 3.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplifyParams {
    k: usize,
    epsilon: f64,
}

impl AmplifyParams {
    pub fn new(k: usize, epsilon: f64) -> Result<Self> {
        if k < 1 {
            return Err(Error::arg("k must be at least 1"));
        }
        if !(epsilon > 0.0 && epsilon <= 1.0 / 3.0 + 1e-15) {
            return Err(Error::arg(format!(
                "epsilon must lie in (0, 1/3], got {epsilon}"
            )));
        }
        Ok(AmplifyParams { k, epsilon })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `1 − ε − k^{−1/4}`.
    pub fn threshold_fraction(&self) -> f64 {
        1.0 - self.epsilon - (self.k as f64).powf(-0.25)
    }

    /// `k(1 − ε) − k^{3/4}`, snapped to an integer when within rounding noise.
    pub fn threshold_count(&self) -> Result<f64> {
        if self.threshold_fraction() <= 0.0 {
            return Err(Error::Regime(format!(
                "threshold fraction 1-eps-k^(-1/4) is not positive for k={}, eps={}",
                self.k, self.epsilon
            )));
        }
        Ok(fractional_threshold(self.k, self.epsilon))
    }

    /// Largest accept count that still rejects.
    pub fn max_rejecting_count(&self) -> Result<usize> {
        Ok(self.threshold_count()?.floor() as usize)
    }

    /// Minimum number of accepting copies for an overall accept.
    pub fn required_accepts(&self) -> Result<usize> {
        Ok(self.max_rejecting_count()? + 1)
    }

    /// Accept iff strictly more than the fractional threshold accept.
    pub fn accepts(&self, accept_count: usize) -> Result<bool> {
        Ok(accept_count as f64 > self.threshold_count()?)
    }
}

/// `k(1 − ε) − k^{3/4}` without the positivity check, snapped to an integer
/// when within rounding noise of one.
pub fn fractional_threshold(k: usize, epsilon: f64) -> f64 {
    let k = k as f64;
    let x = k * (1.0 - epsilon) - k.powf(0.75);
    let r = x.round();
    if (x - r).abs() <= 1e-12 * x.abs().max(1.0) {
        r
    } else {
        x
    }
}

/// `⌈k(1 − ε − k^{−1/4})⌉`.
pub fn majority_threshold(p: &AmplifyParams) -> Result<usize> {
    Ok(p.threshold_count()?.ceil() as usize)
}

fn ln_factorials(k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(k + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..=k {
        acc += (i as f64).ln();
        out.push(acc);
    }
    out
}

/// `P(Binomial(k, s) ≤ upto)` summed in log space.
pub fn binomial_cdf(k: usize, s: f64, upto: usize) -> f64 {
    if upto >= k {
        return 1.0;
    }
    if s <= 0.0 {
        return 1.0;
    }
    if s >= 1.0 {
        return 0.0;
    }
    let lf = ln_factorials(k);
    let (ls, lq) = (s.ln(), (-s).ln_1p());
    let log_pmf = |j: usize| lf[k] - lf[j] - lf[k - j] + j as f64 * ls + (k - j) as f64 * lq;
    let log_sum = |range: std::ops::RangeInclusive<usize>| {
        let logs: Vec<f64> = range.map(log_pmf).collect();
        let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        m + logs.iter().map(|l| (l - m).exp()).sum::<f64>().ln()
    };
    // sum whichever tail is the smaller one
    if (upto as f64) < k as f64 * s {
        log_sum(0..=upto).exp().min(1.0)
    } else {
        (1.0 - log_sum(upto + 1..=k).exp()).max(0.0)
    }
}

/// Probability that the vote rejects when each copy accepts independently
/// with probability `single_accept`.
pub fn exact_reject_prob(p: &AmplifyParams, single_accept: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&single_accept) {
        return Err(Error::arg(format!(
            "acceptance probability {single_accept} outside [0,1]"
        )));
    }
    Ok(binomial_cdf(p.k, single_accept, p.max_rejecting_count()?))
}

/// Binary relative entropy `D(p‖q)` in bits; `+∞` when `q` is 0 or 1 and `p` differs.
pub fn kl_divergence(p: f64, q: f64) -> f64 {
    fn term(a: f64, b: f64) -> f64 {
        if a == 0.0 {
            0.0
        } else if b == 0.0 {
            f64::INFINITY
        } else {
            a * (a / b).log2()
        }
    }
    term(p, q) + term(1.0 - p, 1.0 - q)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailBound {
    pub threshold_l: usize,
    pub exact_reject: f64,
    pub kl_bound: f64,
    pub sqrt_k_bound: f64,
}

/// Exact rejection at `single_accept = 1 − ε` together with the Chernoff-type
/// bound `(l+1)·2^{−k·D(l/k ‖ 1−ε)}` and `2^{−√k/ln 2}`.
pub fn tail_bounds(p: &AmplifyParams) -> Result<TailBound> {
    let l = majority_threshold(p)?;
    let k = p.k as f64;
    let center = 1.0 - p.epsilon;
    if l as f64 / k >= center {
        return Err(Error::Regime(format!(
            "threshold {l}/{} is not below 1-eps={center}",
            p.k
        )));
    }
    let kl = kl_divergence(l as f64 / k, center);
    let kl_bound = ((l as f64 + 1.0) * (-k * kl).exp2()).min(1.0);
    let sqrt_k_bound = (-k.sqrt() / std::f64::consts::LN_2).exp2();
    Ok(TailBound {
        threshold_l: l,
        exact_reject: exact_reject_prob(p, center)?,
        kl_bound,
        sqrt_k_bound,
    })
}

/// Rejection probability of one uniformly chosen copy out of a product of
/// always-accepted and never-accepted states: the bad fraction, for every `k`.
pub fn naive_restriction_reject(good_fraction: f64, bad_fraction: f64) -> Result<f64> {
    let ok = |x: f64| (0.0..=1.0).contains(&x);
    if !ok(good_fraction) || !ok(bad_fraction) || (good_fraction + bad_fraction - 1.0).abs() > 1e-12
    {
        return Err(Error::arg("fractions must lie in [0,1] and sum to 1"));
    }
    Ok(bad_fraction)
}

/// Monte Carlo estimate of the rejection probability and its standard error.
/// Trial `i` draws from its own stream, so the result is independent of
/// thread scheduling.
pub fn monte_carlo_reject(
    p: &AmplifyParams,
    single_accept: f64,
    shots: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    if shots == 0 {
        return Err(Error::arg("Monte Carlo needs at least one shot"));
    }
    let need = p.required_accepts()?;
    let k = p.k;
    let rejects: u64 = (0..shots)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, i);
            let accepts = (0..k).filter(|_| rng.gen::<f64>() < single_accept).count();
            u64::from(accepts < need)
        })
        .sum();
    let est = rejects as f64 / shots as f64;
    Ok((est, (est * (1.0 - est) / shots as f64).sqrt()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub k: usize,
    pub epsilon: f64,
    pub bound: TailBound,
    pub mc: Option<(f64, f64)>,
    pub seed: u64,
}

pub const CSV_HEADER: &str =
    "k,epsilon,l,exact_reject,kl_bound,sqrt_k_bound,mc_estimate,mc_stderr,seed";

impl SweepRow {
    pub fn to_csv(&self) -> String {
        let (mc, se) = match self.mc {
            Some((e, s)) => (fmt_f64(e), fmt_f64(s)),
            None => (String::new(), String::new()),
        };
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.k,
            fmt_f64(self.epsilon),
            self.bound.threshold_l,
            fmt_f64(self.bound.exact_reject),
            fmt_f64(self.bound.kl_bound),
            fmt_f64(self.bound.sqrt_k_bound),
            mc,
            se,
            self.seed
        )
    }
}

/// Evaluates every `(k, ε)` pair in order; `mc_shots > 0` adds a Monte Carlo
/// column at `single_accept = 1 − ε`, each pair seeded from `seed` and its position.
pub fn sweep(ks: &[usize], epsilons: &[f64], mc_shots: u64, seed: u64) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &k in ks {
        for &eps in epsilons {
            let p = AmplifyParams::new(k, eps)?;
            let bound = tail_bounds(&p)?;
            let row_seed =
                crate::seeding::derive_seed(seed, &format!("amplify/{k}/{}", fmt_f64(eps)));
            let mc = if mc_shots > 0 {
                Some(monte_carlo_reject(&p, 1.0 - eps, mc_shots, row_seed)?)
            } else {
                None
            };
            rows.push(SweepRow {
                k,
                epsilon: eps,
                bound,
                mc,
                seed: row_seed,
            });
        }
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::{tensor_product, DensityMatrix, PureState};
    use proptest::prelude::*;

    const TINY: f64 = 1e-9;

    /// Rejection probability by enumerating all `2^k` outcome strings.
    fn enumerate_reject(p: &AmplifyParams, s: f64) -> f64 {
        let x = p.threshold_count().unwrap();
        (0u32..1 << p.k())
            .filter(|m| (m.count_ones() as f64) <= x)
            .map(|m| {
                let a = m.count_ones() as i32;
                s.powi(a) * (1.0 - s).powi(p.k() as i32 - a)
            })
            .sum()
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(
            majority_threshold(&AmplifyParams::new(16, TINY).unwrap()).unwrap(),
            8
        );
        assert_eq!(
            majority_threshold(&AmplifyParams::new(81, 1.0 / 3.0).unwrap()).unwrap(),
            27
        );
        assert_eq!(
            majority_threshold(&AmplifyParams::new(16, 0.1).unwrap()).unwrap(),
            7
        );
        assert!(AmplifyParams::new(1, 0.25)
            .unwrap()
            .threshold_count()
            .is_err());
        assert!(AmplifyParams::new(16, 0.5).is_err());
        assert!(AmplifyParams::new(0, 0.1).is_err());
    }

    #[test]
    fn ties_reject() {
        // k=81, ε=1/3: threshold is exactly 27 accepts
        let p = AmplifyParams::new(81, 1.0 / 3.0).unwrap();
        assert!(!p.accepts(27).unwrap());
        assert!(p.accepts(28).unwrap());
        assert_eq!(p.required_accepts().unwrap(), 28);
    }

    #[test]
    fn exact_reject_examples() {
        let p = AmplifyParams::new(16, 0.1).unwrap();
        assert_eq!(exact_reject_prob(&p, 1.0).unwrap(), 0.0);
        assert_eq!(exact_reject_prob(&p, 0.0).unwrap(), 1.0);
        let p2 = AmplifyParams::new(2, TINY).unwrap();
        assert!((exact_reject_prob(&p2, 0.5).unwrap() - 0.25).abs() < 1e-15);
        assert!(exact_reject_prob(&p, 1.5).is_err());
    }

    #[test]
    fn exact_reject_matches_enumeration() {
        for k in [2, 5, 9, 16] {
            for eps in [TINY, 0.05, 0.2, 1.0 / 3.0] {
                let p = AmplifyParams::new(k, eps).unwrap();
                if p.threshold_fraction() <= 0.0 {
                    continue;
                }
                for s in [0.1, 0.5, 0.77, 1.0 - eps] {
                    let a = exact_reject_prob(&p, s).unwrap();
                    let b = enumerate_reject(&p, s);
                    assert!((a - b).abs() < 1e-13, "k={k} eps={eps} s={s}");
                }
            }
        }
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_divergence(0.3, 0.3), 0.0);
        let direct = 0.5 * 1.0 + 0.5 * (2.0f64 / 3.0).log2();
        assert!((kl_divergence(0.5, 0.25) - direct).abs() < 1e-15);
        assert!((kl_divergence(0.5, 0.25) - 0.207_519).abs() < 1e-6);
        assert_eq!(kl_divergence(1.0, 0.5), 1.0);
        assert!((kl_divergence(0.0, 0.25) + (0.75f64).log2()).abs() < 1e-15);
        assert_eq!(kl_divergence(0.5, 0.0), f64::INFINITY);
        assert_eq!(kl_divergence(0.5, 1.0), f64::INFINITY);
    }

    #[test]
    fn tail_bound_grid() {
        for k in STANDARD_KS {
            for eps in STANDARD_EPSILONS {
                let p = AmplifyParams::new(k, eps).unwrap();
                let b = tail_bounds(&p).unwrap();
                assert!(b.exact_reject <= b.kl_bound + 1e-12);
                assert!(b.exact_reject <= b.sqrt_k_bound * (b.threshold_l as f64 + 1.0));
                for v in [b.exact_reject, b.kl_bound, b.sqrt_k_bound] {
                    assert!((0.0..=1.0).contains(&v));
                }
            }
        }
        // exponent ordering at k=256, ε=0.1
        let p = AmplifyParams::new(256, 0.1).unwrap();
        let l = majority_threshold(&p).unwrap() as f64;
        assert!(-256.0 * kl_divergence(l / 256.0, 0.9) <= -16.0 / std::f64::consts::LN_2);
    }

    #[test]
    fn exact_reject_decreases_along_fourth_powers() {
        for eps in STANDARD_EPSILONS {
            let vals: Vec<f64> = STANDARD_KS
                .iter()
                .map(|&k| {
                    tail_bounds(&AmplifyParams::new(k, eps).unwrap())
                        .unwrap()
                        .exact_reject
                })
                .collect();
            assert!(vals.windows(2).all(|w| w[1] < w[0]), "eps={eps}: {vals:?}");
        }
    }

    #[test]
    fn large_k_stays_finite() {
        let p = AmplifyParams::new(4096, 0.25).unwrap();
        let b = tail_bounds(&p).unwrap();
        assert!(b.exact_reject > 0.0 && b.exact_reject < 1e-20);
        assert!(b.exact_reject <= b.kl_bound);
    }

    #[test]
    fn naive_restriction() {
        assert!(
            (naive_restriction_reject(2.0 / 3.0, 1.0 / 3.0).unwrap() - 1.0 / 3.0).abs() < 1e-15
        );
        assert_eq!(naive_restriction_reject(1.0, 0.0).unwrap(), 0.0);
        assert!((naive_restriction_reject(0.9, 0.1).unwrap() - 0.1).abs() < 1e-15);
        assert!(naive_restriction_reject(0.5, 0.2).is_err());
    }

    #[test]
    fn naive_restriction_from_product_states() {
        // accepted copies are |1⟩, rejected copies |0⟩; average the single-copy marginals
        let good = PureState::basis(1, 1).unwrap().to_density();
        let bad = PureState::basis(1, 0).unwrap().to_density();
        for (k, n_bad) in [(3usize, 1usize), (6, 2)] {
            let mut joint: Option<DensityMatrix> = None;
            for i in 0..k {
                let part = if i < k - n_bad { &good } else { &bad };
                joint = Some(match joint {
                    None => part.clone(),
                    Some(j) => tensor_product(&j, part).unwrap(),
                });
            }
            let joint = joint.unwrap();
            let reject: f64 = (0..k)
                .map(|i| joint.partial_trace(&[i]).unwrap().matrix()[(0, 0)].re / k as f64)
                .sum();
            let frac = n_bad as f64 / k as f64;
            assert!((reject - naive_restriction_reject(1.0 - frac, frac).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn monte_carlo_agrees_with_exact() {
        for (k, eps, s) in [(16, 0.1, 0.8), (81, 1.0 / 3.0, 0.45), (16, 0.25, 0.75)] {
            let p = AmplifyParams::new(k, eps).unwrap();
            let exact = exact_reject_prob(&p, s).unwrap();
            let (est, _) = monte_carlo_reject(&p, s, 100_000, 17).unwrap();
            let se = (exact * (1.0 - exact) / 1e5).sqrt();
            assert!(
                (est - exact).abs() <= 3.0 * se + 1e-12,
                "k={k} exact={exact} est={est}"
            );
        }
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let p = AmplifyParams::new(16, 0.1).unwrap();
        assert_eq!(
            monte_carlo_reject(&p, 0.7, 5000, 3).unwrap(),
            monte_carlo_reject(&p, 0.7, 5000, 3).unwrap()
        );
    }

    #[test]
    fn sweep_csv_shape() {
        let rows = sweep(&STANDARD_KS, &STANDARD_EPSILONS, 0, 1).unwrap();
        let csv = sweep_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 17);
        assert!(lines[1..].iter().all(|l| l.split(',').count() == 9));
    }

    proptest! {
        #[test]
        fn reject_monotone_in_acceptance(k in 2usize..200, eps in 0.01f64..0.3333, s1 in 0.0f64..1.0, s2 in 0.0f64..1.0) {
            let p = AmplifyParams::new(k, eps).unwrap();
            prop_assume!(p.threshold_fraction() > 0.0);
            let (lo, hi) = if s1 < s2 { (s1, s2) } else { (s2, s1) };
            prop_assert!(exact_reject_prob(&p, hi).unwrap() <= exact_reject_prob(&p, lo).unwrap() + 1e-14);
        }

        #[test]
        fn kl_quadratic_lower_bound(p in 0.001f64..0.999, q in 0.001f64..0.999) {
            let kl = kl_divergence(p, q);
            prop_assert!(kl >= 0.0);
            prop_assert!(kl >= 2.0 / std::f64::consts::LN_2 * (p - q).powi(2) - 1e-12);
        }

        #[test]
        fn chernoff_dominance(k in 2usize..2000, eps in 0.01f64..0.3333) {
            let p = AmplifyParams::new(k, eps).unwrap();
            prop_assume!(p.threshold_fraction() > 0.0);
            let b = tail_bounds(&p).unwrap();
            prop_assert!(b.exact_reject <= b.kl_bound + 1e-12);
            prop_assert!(b.exact_reject <= b.sqrt_k_bound * (b.threshold_l as f64 + 1.0) + 1e-12);
        }
    }
}
