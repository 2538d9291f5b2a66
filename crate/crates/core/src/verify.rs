//! Statistical checks of the distributional facts the library relies on.
//!
//! Every check produces a [`TestReport`] whose `passed` flag is
//! `p_value ≥ alpha`. Reports are deterministic for a fixed seed; rerunning
//! with fresh seeds ("recalibrate") should reject a true null hypothesis at
//! a rate close to `alpha`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, DiscreteCDF, Poisson};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::geometry::BoundedBox;
use crate::linalg::laplace_kernel;
use crate::mondrian::{cuts_1d, sample_mondrian, sample_trees};
use crate::rng::RngStream;

pub const DEFAULT_ALPHA: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    pub statistic: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub passed: bool,
    pub n_samples: usize,
}

impl TestReport {
    pub fn new(name: impl Into<String>, statistic: f64, p_value: f64, alpha: f64, n_samples: usize) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        Self {
            name: name.into(),
            statistic,
            p_value,
            alpha,
            passed: p_value >= alpha,
            n_samples,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// Pearson chi-square statistic and p-value for observed against expected
/// counts over the same buckets.
pub fn chi_square(observed: &[f64], expected: &[f64]) -> Result<(f64, f64)> {
    if observed.len() != expected.len() {
        return Err(Error::DimensionMismatch {
            expected: expected.len(),
            got: observed.len(),
        });
    }
    if observed.len() < 2 {
        return Ok((0.0, 1.0));
    }
    let stat: f64 = observed
        .iter()
        .zip(expected)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    let dist = ChiSquared::new((observed.len() - 1) as f64).expect("positive degrees of freedom");
    Ok((stat, dist.sf(stat)))
}

/// Chi-square goodness of fit of nonnegative counts to `Poisson(rate)`.
/// Buckets are formed from 0 upward and closed once their expected count
/// reaches 5; the final bucket is the upper tail and is folded into its
/// neighbour if it falls short.
pub fn poisson_gof(counts: &[u64], rate: f64, alpha: f64) -> Result<TestReport> {
    const MIN_EXPECTED: f64 = 5.0;
    check_alpha(alpha)?;
    if counts.len() < 500 {
        return Err(Error::InsufficientSamples {
            needed: 500,
            got: counts.len(),
        });
    }
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::InvalidRate(rate));
    }
    let n = counts.len() as f64;
    let dist = Poisson::new(rate).expect("valid rate");
    // (upper bound k inclusive, expected)
    let mut buckets: Vec<(u64, f64)> = Vec::new();
    let mut acc = 0.0;
    let mut k = 0u64;
    loop {
        acc += n * dist.pmf(k);
        let tail = n * dist.sf(k);
        if acc >= MIN_EXPECTED {
            buckets.push((k, acc));
            acc = 0.0;
        }
        if tail < MIN_EXPECTED {
            break;
        }
        k += 1;
    }
    let tail = n - buckets.iter().map(|b| b.1).sum::<f64>();
    match buckets.last_mut() {
        Some(last) if tail < MIN_EXPECTED => last.1 += tail,
        _ => buckets.push((k, tail)),
    }
    let last = buckets.len() - 1;
    let mut observed = vec![0.0; buckets.len()];
    for &c in counts {
        let b = buckets.partition_point(|&(hi, _)| hi < c).min(last);
        observed[b] += 1.0;
    }
    let expected: Vec<f64> = buckets.iter().map(|b| b.1).collect();
    let (stat, p) = chi_square(&observed, &expected)?;
    Ok(TestReport::new(format!("poisson_gof(rate={rate})"), stat, p, alpha, counts.len()))
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    let s = n_eff.sqrt();
    kolmogorov_sf((s + 0.12 + 0.11 / s) * d)
}

/// One-sample Kolmogorov–Smirnov statistic and p-value against `cdf`.
pub fn ks_one_sample<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::EmptyData);
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Ok((d, ks_p_value(d, n)))
}

/// Two-sample Kolmogorov–Smirnov statistic and p-value. Tied values are
/// stepped over together.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyData);
    }
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < xa.len() && j < xb.len() {
        let v = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= v {
            i += 1;
        }
        while j < xb.len() && xb[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok((d, ks_p_value(d, na * nb / (na + nb))))
}

fn exp_cdf(rate: f64) -> impl Fn(f64) -> f64 {
    move |x| if x <= 0.0 { 0.0 } else { -(-rate * x).exp_m1() }
}

/// KS test of `samples` against `Exp(rate)`.
pub fn exponential_fit(samples: &[f64], rate: f64, alpha: f64) -> Result<TestReport> {
    check_alpha(alpha)?;
    let (d, p) = ks_one_sample(samples, exp_cdf(rate))?;
    Ok(TestReport::new(format!("exponential_fit(rate={rate})"), d, p, alpha, samples.len()))
}

/// KS test of `samples` against the uniform distribution on `[a, b]`.
pub fn uniform_fit(samples: &[f64], a: f64, b: f64, alpha: f64) -> Result<TestReport> {
    check_alpha(alpha)?;
    let (d, p) = ks_one_sample(samples, |x| ((x - a) / (b - a)).clamp(0.0, 1.0))?;
    Ok(TestReport::new(format!("uniform_fit([{a}, {b}])"), d, p, alpha, samples.len()))
}

/// Two-sample KS test.
pub fn two_sample_fit(name: &str, a: &[f64], b: &[f64], alpha: f64) -> Result<TestReport> {
    check_alpha(alpha)?;
    let (d, p) = ks_two_sample(a, b)?;
    Ok(TestReport::new(name, d, p, alpha, a.len() + b.len()))
}

/// Outcome of [`clock_race`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClockRace {
    pub report: TestReport,
    pub winner_freq: Vec<f64>,
    pub min_mean: f64,
    pub winner_p_value: f64,
    pub min_p_value: f64,
}

/// Race independent `Exp(rates[n])` clocks `trials` times. The winner
/// counts are tested against `rates[n] / Σ rates` by chi-square and the
/// winning times against `Exp(Σ rates)` by KS; the report's p-value is the
/// smaller of the two.
pub fn clock_race(rates: &[f64], trials: usize, alpha: f64, rng: &mut RngStream) -> Result<ClockRace> {
    check_alpha(alpha)?;
    if rates.len() < 2 {
        return Err(Error::InvalidArgument("need at least two clocks".into()));
    }
    if let Some(&r) = rates.iter().find(|&&r| !(r > 0.0) || !r.is_finite()) {
        return Err(Error::InvalidRate(r));
    }
    if trials < 10_000 {
        return Err(Error::InsufficientSamples {
            needed: 10_000,
            got: trials,
        });
    }
    let total: f64 = rates.iter().sum();
    let mut wins = vec![0.0; rates.len()];
    let mut minima = Vec::with_capacity(trials);
    for _ in 0..trials {
        let mut best = (f64::INFINITY, 0);
        for (n, &r) in rates.iter().enumerate() {
            let t = rng.exp(r)?;
            if t < best.0 {
                best = (t, n);
            }
        }
        wins[best.1] += 1.0;
        minima.push(best.0);
    }
    let expected: Vec<f64> = rates.iter().map(|r| trials as f64 * r / total).collect();
    let (chi, p_win) = chi_square(&wins, &expected)?;
    let (_, p_min) = ks_one_sample(&minima, exp_cdf(total))?;
    let n = trials as f64;
    Ok(ClockRace {
        report: TestReport::new(format!("clock_race({rates:?})"), chi, p_win.min(p_min), alpha, trials),
        winner_freq: wins.iter().map(|w| w / n).collect(),
        min_mean: minima.iter().sum::<f64>() / n,
        winner_p_value: p_win,
        min_p_value: p_min,
    })
}

/// KS test that the residuals `z − t` of the samples exceeding `t` are
/// `Exp(rate)` distributed.
pub fn residual_memoryless_samples(samples: &[f64], rate: f64, t: f64, alpha: f64) -> Result<TestReport> {
    check_alpha(alpha)?;
    let residuals: Vec<f64> = samples.iter().filter(|&&z| z > t).map(|z| z - t).collect();
    if residuals.len() < 1000 {
        return Err(Error::InsufficientSamples {
            needed: 1000,
            got: residuals.len(),
        });
    }
    let (d, p) = ks_one_sample(&residuals, exp_cdf(rate))?;
    Ok(TestReport::new(
        format!("residual_memoryless(rate={rate}, t={t})"),
        d,
        p,
        alpha,
        residuals.len(),
    ))
}

/// Draw `trials` `Exp(rate)` samples and test their residual lifetime past
/// `t`.
pub fn residual_memoryless(rate: f64, t: f64, trials: usize, alpha: f64, rng: &mut RngStream) -> Result<TestReport> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("threshold must be nonnegative, got {t}")));
    }
    let samples = (0..trials).map(|_| rng.exp(rate)).collect::<Result<Vec<f64>>>()?;
    residual_memoryless_samples(&samples, rate, t, alpha)
}

/// Mondrian estimates of the Laplace kernel: for each pair, the fraction of
/// `n_trees` trees with lifetime 1, sampled on the pair's bounding box in
/// coordinates scaled by `lifetimes`, that keep both points in one cell.
pub fn kernel_mc_estimates(pairs: &[(Vec<f64>, Vec<f64>)], n_trees: usize, lifetimes: &[f64], seed: u64) -> Result<Vec<f64>> {
    pairs
        .par_iter()
        .enumerate()
        .map(|(p, (a, b))| {
            if a.len() != lifetimes.len() || b.len() != lifetimes.len() {
                return Err(Error::DimensionMismatch {
                    expected: lifetimes.len(),
                    got: a.len().min(b.len()),
                });
            }
            let lo: Vec<f64> = (0..a.len()).map(|d| lifetimes[d] * a[d].min(b[d])).collect();
            let hi: Vec<f64> = (0..a.len()).map(|d| lifetimes[d] * a[d].max(b[d])).collect();
            let bbox = BoundedBox::new(lo, hi)?;
            if bbox.linear_dimension() == 0.0 {
                return Ok(1.0);
            }
            // a tree on the pair's own box separates them iff it has a cut
            let trees = sample_trees(&bbox, 1.0, n_trees, seed, &format!("kernel-mc-{p}"))?;
            let together = trees.iter().filter(|t| t.num_cuts() == 0).count();
            Ok(together as f64 / n_trees as f64)
        })
        .collect()
}

/// Largest deviation, in binomial standard errors, between the Mondrian
/// kernel estimate and the exact Laplace kernel over `pairs`. Pairs whose
/// exact value is 0 or 1 contribute 0 when the estimate agrees.
pub fn kernel_mc_report(pairs: &[(Vec<f64>, Vec<f64>)], n_trees: usize, lifetimes: &[f64], seed: u64) -> Result<f64> {
    if n_trees < 30 {
        return Err(Error::InsufficientSamples {
            needed: 30,
            got: n_trees,
        });
    }
    let estimates = kernel_mc_estimates(pairs, n_trees, lifetimes, seed)?;
    let mut worst: f64 = 0.0;
    for ((a, b), est) in pairs.iter().zip(estimates) {
        let exact = laplace_kernel(a, b, lifetimes);
        let se = (exact * (1.0 - exact) / n_trees as f64).sqrt();
        let dev = if se > 0.0 {
            (est - exact).abs() / se
        } else if est == exact {
            0.0
        } else {
            f64::INFINITY
        };
        worst = worst.max(dev);
    }
    Ok(worst)
}

/// Names accepted by [`run_suite`].
pub const SUITES: &[&str] = &["process", "clocks", "kernel", "all"];

/// Run a named suite of checks with streams derived from `seed`.
pub fn run_suite(name: &str, seed: u64, alpha: f64) -> Result<Vec<TestReport>> {
    check_alpha(alpha)?;
    let mut reports = Vec::new();
    let all = name == "all";
    if !SUITES.contains(&name) {
        return Err(Error::InvalidArgument(format!(
            "unknown suite {name:?}; expected one of {}",
            SUITES.join(", ")
        )));
    }
    if all || name == "process" {
        let unit = BoundedBox::unit(1);
        let counts = (0..10_000u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = RngStream::derive(seed, "verify-mondrian-1d", i);
                Ok(sample_mondrian(&unit, 2.0, &mut rng)?.num_cuts() as u64)
            })
            .collect::<Result<Vec<u64>>>()?;
        reports.push(poisson_gof(&counts, 2.0, alpha)?.renamed("mondrian_1d_cut_counts"));
        let mut rng = RngStream::derive(seed, "verify-cuts-1d", 0);
        let mut counts = Vec::with_capacity(10_000);
        let mut locs = Vec::new();
        for _ in 0..10_000 {
            let c = cuts_1d(0.0, 2.0, 1.0, &mut rng)?;
            counts.push(c.len() as u64);
            locs.extend(c);
        }
        reports.push(poisson_gof(&counts, 2.0, alpha)?.renamed("cuts_1d_counts"));
        reports.push(uniform_fit(&locs, 0.0, 2.0, alpha)?.renamed("cuts_1d_locations"));
    }
    if all || name == "clocks" {
        let mut rng = RngStream::derive(seed, "verify-clocks", 0);
        reports.push(clock_race(&[1.0, 3.0], 100_000, alpha, &mut rng)?.report);
        let mut rng = RngStream::derive(seed, "verify-memoryless", 0);
        reports.push(residual_memoryless(2.0, 0.5, 20_000, alpha, &mut rng)?);
    }
    if all || name == "kernel" {
        let mut rng = RngStream::derive(seed, "verify-kernel-pairs", 0);
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..20)
            .map(|_| {
                let a = (0..2).map(|_| rng.uniform()).collect();
                let b = (0..2).map(|_| rng.uniform()).collect();
                (a, b)
            })
            .collect();
        let dev = kernel_mc_report(&pairs, 1000, &[1.0, 1.0], seed)?;
        // Bonferroni over 20 pairs turns the SE bound into a p-value bound
        let p = (20.0 * erfc(dev / std::f64::consts::SQRT_2)).min(1.0);
        reports.push(TestReport::new("kernel_mc_max_deviation", dev, p, alpha, pairs.len()));
    }
    Ok(reports)
}

impl TestReport {
    fn renamed(mut self, name: &str) -> Self {
        self.name = name.into();
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Poisson as PoissonDist};

    fn poisson_counts(rate: f64, n: usize, rng: &mut RngStream) -> Vec<u64> {
        let d = PoissonDist::new(rate).unwrap();
        (0..n).map(|_| d.sample(rng) as u64).collect()
    }

    #[test]
    fn poisson_gof_is_calibrated() {
        let passes = (0..100)
            .filter(|&i| {
                let mut rng = RngStream::derive(1, "meta", i);
                poisson_gof(&poisson_counts(2.0, 10_000, &mut rng), 2.0, 0.01).unwrap().passed
            })
            .count();
        assert!(passes >= 98, "{passes}/100");
    }

    #[test]
    fn poisson_gof_rejects_impossible_counts() {
        let r = poisson_gof(&vec![0; 1000], 5.0, 0.01).unwrap();
        assert!(!r.passed);
        assert!(poisson_gof(&[1; 10], 1.0, 0.01).is_err());
    }

    #[test]
    fn poisson_gof_rejects_wrong_rate() {
        let mut rng = RngStream::new(2, 0);
        assert!(!poisson_gof(&poisson_counts(2.3, 10_000, &mut rng), 2.0, 0.01).unwrap().passed);
    }

    #[test]
    fn kolmogorov_tail_values() {
        // reference values of the Kolmogorov survival function
        assert!((kolmogorov_sf(1.0) - 0.26999967).abs() < 1e-6);
        assert!((kolmogorov_sf(1.36) - 0.04939).abs() < 1e-4);
        assert!((kolmogorov_sf(1.63) - 0.00981).abs() < 1e-4);
    }

    #[test]
    fn two_sample_handles_ties() {
        let a = [1.0, 1.0, 2.0, 2.0];
        let (d, _) = ks_two_sample(&a, &a).unwrap();
        assert_eq!(d, 0.0);
        let (d, _) = ks_two_sample(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(d, 1.0);
    }

    #[test]
    fn symmetric_clocks_split_evenly() {
        let mut rng = RngStream::new(3, 0);
        let r = clock_race(&[1.0, 1.0], 20_000, 0.01, &mut rng).unwrap();
        let se = (0.25f64 / 20_000.0).sqrt();
        assert!((r.winner_freq[0] - 0.5).abs() < 3.0 * se);
    }

    #[test]
    fn clock_winner_frequency() {
        let mut rng = RngStream::new(4, 0);
        let r = clock_race(&[1.0, 3.0], 100_000, 0.01, &mut rng).unwrap();
        let se = (0.75f64 * 0.25 / 100_000.0).sqrt();
        assert!((r.winner_freq[1] - 0.75).abs() < 3.0 * se);
        assert!(r.report.passed);
    }

    #[test]
    fn clock_minimum_mean() {
        let mut rng = RngStream::new(5, 0);
        let r = clock_race(&[2.0, 3.0], 50_000, 0.01, &mut rng).unwrap();
        // Exp(5) has mean and standard deviation 0.2
        assert!((r.min_mean - 0.2).abs() < 3.0 * 0.2 / (50_000f64).sqrt());
    }

    #[test]
    fn clock_race_rejects_bad_input() {
        let mut rng = RngStream::new(0, 0);
        assert!(clock_race(&[1.0], 10_000, 0.01, &mut rng).is_err());
        assert!(matches!(clock_race(&[1.0, 0.0], 10_000, 0.01, &mut rng), Err(Error::InvalidRate(_))));
        assert!(clock_race(&[1.0, 1.0], 100, 0.01, &mut rng).is_err());
    }

    #[test]
    fn memoryless_at_zero_is_plain_fit() {
        let mut rng = RngStream::new(6, 0);
        let samples: Vec<f64> = (0..5000).map(|_| rng.exp(1.0).unwrap()).collect();
        let a = residual_memoryless_samples(&samples, 1.0, 0.0, 0.01).unwrap();
        let b = exponential_fit(&samples, 1.0, 0.01).unwrap();
        assert_eq!(a.statistic, b.statistic);
    }

    #[test]
    fn memoryless_residuals_pass() {
        let mut rng = RngStream::new(7, 0);
        assert!(residual_memoryless(2.0, 0.5, 20_000, 0.01, &mut rng).unwrap().passed);
    }

    #[test]
    fn shifted_uniform_residuals_fail() {
        let mut rng = RngStream::new(8, 0);
        let samples: Vec<f64> = (0..20_000).map(|_| 0.5 + rng.uniform()).collect();
        assert!(!residual_memoryless_samples(&samples, 2.0, 0.5, 0.01).unwrap().passed);
    }

    #[test]
    fn memoryless_needs_survivors() {
        let mut rng = RngStream::new(9, 0);
        assert!(matches!(
            residual_memoryless(1.0, 10.0, 1000, 0.01, &mut rng),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn kernel_report_trivial_pairs() {
        let same = vec![(vec![0.3, 0.4], vec![0.3, 0.4])];
        assert_eq!(kernel_mc_report(&same, 50, &[1.0, 1.0], 0).unwrap(), 0.0);
        let apart = vec![(vec![0.0, 0.0], vec![1.0, 2.0])];
        assert_eq!(kernel_mc_report(&apart, 50, &[0.0, 0.0], 0).unwrap(), 0.0);
        assert!(kernel_mc_report(&same, 10, &[1.0, 1.0], 0).is_err());
    }

    #[test]
    fn kernel_report_random_pairs() {
        let runs = 20;
        let good = (0..runs)
            .filter(|&s| {
                let mut rng = RngStream::new(s, 1);
                let pairs: Vec<_> = (0..20)
                    .map(|_| (vec![rng.uniform(), rng.uniform()], vec![rng.uniform(), rng.uniform()]))
                    .collect();
                kernel_mc_report(&pairs, 1000, &[1.0, 1.0], s).unwrap() <= 4.0
            })
            .count();
        assert!(good as f64 >= 0.95 * runs as f64);
    }

    #[test]
    fn calibration_under_null() {
        // rejection rate at alpha = 0.05 over 300 null data sets
        let alpha = 0.05;
        let rejected = (0..300u64)
            .into_par_iter()
            .filter(|&i| {
                let mut rng = RngStream::derive(10, "calibration", i);
                let counts = poisson_counts(1.5, 600, &mut rng);
                !poisson_gof(&counts, 1.5, alpha).unwrap().passed
            })
            .count();
        let rate = rejected as f64 / 300.0;
        assert!(rate > alpha / 3.0 && rate < 3.0 * alpha, "{rate}");

        let rejected = (0..300u64)
            .into_par_iter()
            .filter(|&i| {
                let mut rng = RngStream::derive(11, "calibration", i);
                !residual_memoryless(1.0, 0.3, 2000, alpha, &mut rng).unwrap().passed
            })
            .count();
        let rate = rejected as f64 / 300.0;
        assert!(rate > alpha / 3.0 && rate < 3.0 * alpha, "{rate}");

        let rejected = (0..300u64)
            .into_par_iter()
            .filter(|&i| {
                let mut rng = RngStream::derive(12, "calibration", i);
                !clock_race(&[1.0, 2.0], 10_000, alpha, &mut rng).unwrap().report.passed
            })
            .count();
        // the report combines two tests, so its null rejection rate is up to 2α
        let rate = rejected as f64 / 300.0;
        assert!(rate > alpha / 3.0 && rate < 3.0 * alpha, "{rate}");
    }

    #[test]
    fn suites_are_deterministic() {
        let a = run_suite("clocks", 42, 0.01).unwrap();
        let b = run_suite("clocks", 42, 0.01).unwrap();
        assert_eq!(a, b);
        assert!(run_suite("nope", 0, 0.01).is_err());
    }
}
