//! Monte Carlo random-walk sampling, the normalized CLT statistic, and
//! martingale diagnostics for quasi-harmonic functions.
//!
//! Sampling is counter-based: one ChaCha8 stream per `(seed, sample index)`
//! pair, so results are bit-identical regardless of thread count or
//! scheduling. Step increments are drawn by inverse CDF over the exact
//! rational weights of the step measure.
//!
//! The statistic under test is `Y_n = (d(z_n, e) - n l) / sqrt(n)` with the
//! exact drift increment supplied as the centering `l`; the harness reports
//! the Kolmogorov-Smirnov distance to the fitted and to a reference normal
//! law. For the `F_2` SRW the reference variance is 3/4: away from the
//! identity the word length moves by +1 with probability 3/4 and -1 with
//! probability 1/4, so the increment variance is E X^2 - (1/2)^2 = 3/4.

use crate::boundary::{CylinderFunction, TreeBoundary};
use crate::error::{Error, Result};
use crate::group::{FreeWord, GroupDescriptor, GroupElement, LatticePoint, WordMetric};
use crate::measure::{quasi_harmonic_profile, FiniteMeasure, KahanSum, DEFAULT_SUPPORT_CAP};
use crate::numfmt;
use crate::Rational;
use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use std::collections::HashMap;

/// Exact binomial coefficient (shared by the lattice-walk test oracles).
pub fn binomial_big(n: u32, k: u32) -> BigInt {
    if k > n {
        return BigInt::from(0);
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

/// Inverse-CDF sampler over the exact weights of a finite measure.
pub struct WalkSampler {
    descriptor: GroupDescriptor,
    atoms: Vec<GroupElement>,
    cumulative: Vec<u128>,
    denom: u128,
}

impl WalkSampler {
    pub fn new(mu: &FiniteMeasure) -> Self {
        let sorted = mu.atoms_sorted();
        let mut atoms = Vec::with_capacity(sorted.len());
        let mut cumulative = Vec::with_capacity(sorted.len());
        let mut acc = 0u128;
        for (g, num) in sorted {
            acc += num;
            atoms.push(g);
            cumulative.push(acc);
        }
        WalkSampler {
            descriptor: mu.descriptor(),
            atoms,
            cumulative,
            denom: mu.denom(),
        }
    }

    pub fn atoms(&self) -> &[GroupElement] {
        &self.atoms
    }

    /// RNG stream for a given sample index; fixed by `(seed, index)` alone.
    pub fn rng(seed: u64, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        rng
    }

    #[inline]
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> usize {
        let r = rng.gen_range(0..self.denom);
        self.cumulative.partition_point(|&c| c <= r)
    }
}

/// A sampled trajectory `z_0 = e, z_k = z_{k-1} w_k`.
#[derive(Debug, Clone)]
pub struct WalkSample {
    pub seed: u64,
    pub index: u64,
    /// Indices into the sampler's atom list, one per step.
    pub steps: Vec<u32>,
    pub endpoint: GroupElement,
    pub final_norm: u64,
}

impl WalkSample {
    /// Recomputes the endpoint from the increments (the defining invariant).
    pub fn recompute_endpoint(
        &self,
        descriptor: &GroupDescriptor,
        atoms: &[GroupElement],
    ) -> Result<GroupElement> {
        let mut z = descriptor.identity();
        for &i in &self.steps {
            z = descriptor.multiply(&z, &atoms[i as usize])?;
        }
        Ok(z)
    }
}

/// In-place walk state, to keep the hot loop allocation-free.
enum WalkerState {
    Free(FreeWord),
    Lattice(Vec<i64>),
}

impl WalkerState {
    fn new(descriptor: &GroupDescriptor) -> Self {
        match descriptor {
            GroupDescriptor::FreeGroup { .. } => WalkerState::Free(FreeWord::identity()),
            GroupDescriptor::IntegerLattice { dim } => {
                WalkerState::Lattice(vec![0; *dim as usize])
            }
        }
    }

    #[inline]
    fn apply(&mut self, g: &GroupElement) {
        match (self, g) {
            (WalkerState::Free(w), GroupElement::Free(s)) => {
                for &l in s.letters() {
                    w.push_reduce(l);
                }
            }
            (WalkerState::Lattice(c), GroupElement::Lattice(p)) => {
                for (a, b) in c.iter_mut().zip(p.coords()) {
                    *a += b;
                }
            }
            _ => unreachable!("sampler atoms match the descriptor"),
        }
    }

    fn norm(&self) -> u64 {
        match self {
            WalkerState::Free(w) => w.len() as u64,
            WalkerState::Lattice(c) => c.iter().map(|a| a.unsigned_abs()).sum(),
        }
    }

    fn into_element(self) -> GroupElement {
        match self {
            WalkerState::Free(w) => GroupElement::Free(w),
            WalkerState::Lattice(c) => GroupElement::Lattice(LatticePoint::new(&c)),
        }
    }
}

/// Samples one trajectory of `n` steps, deterministic in `(seed, index)`.
pub fn sample_walk(mu: &FiniteMeasure, n: u32, seed: u64, index: u64) -> WalkSample {
    let sampler = WalkSampler::new(mu);
    sample_walk_with(&sampler, n, seed, index)
}

pub fn sample_walk_with(sampler: &WalkSampler, n: u32, seed: u64, index: u64) -> WalkSample {
    let mut rng = WalkSampler::rng(seed, index);
    let mut state = WalkerState::new(&sampler.descriptor);
    let mut steps = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let i = sampler.draw(&mut rng);
        steps.push(i as u32);
        state.apply(&sampler.atoms[i]);
    }
    let final_norm = state.norm();
    WalkSample {
        seed,
        index,
        steps,
        endpoint: state.into_element(),
        final_norm,
    }
}

/// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
pub fn ks_distance(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).expect("finite statistics"));
    let n = samples.len() as f64;
    let mut d = 0.0f64;
    for (i, &y) in samples.iter().enumerate() {
        let f = cdf(y);
        d = d.max((f - i as f64 / n).abs());
        d = d.max(((i as f64 + 1.0) / n - f).abs());
    }
    d
}

/// Result of [`clt_experiment`].
#[derive(Debug, Clone)]
pub struct CltReport {
    pub n: u32,
    pub samples: usize,
    pub seed: u64,
    /// Centering used in `Y_n` (exact drift increment, as f64).
    pub ell: f64,
    pub mean_y: f64,
    pub sigma2_hat: f64,
    /// KS distance to `Normal(0, sigma2_hat)`.
    pub ks_fitted: f64,
    /// KS distance to `Normal(0, sigma2_reference)` when a reference is set.
    pub ks_reference: Option<f64>,
    pub sigma2_reference: Option<f64>,
    /// `(seed index, final length, Y_n)` per sample, in index order.
    pub per_sample: Vec<(u64, u64, f64)>,
    /// Fixed-width histogram of `Y_n` over `[-4s, 4s]`, `s = sqrt(ref or fitted)`.
    pub histogram: Vec<(f64, u64)>,
}

impl CltReport {
    pub fn per_sample_csv(&self) -> String {
        let mut out = String::from("seed_index,length,Yn\n");
        for (i, len, y) in &self.per_sample {
            out.push_str(&format!("{},{},{}\n", i, len, numfmt::sig9(*y)));
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "n": self.n,
            "samples": self.samples,
            "seed": self.seed,
            "ell": numfmt::sig9(self.ell),
            "mean_y": numfmt::sig9(self.mean_y),
            "sigma2_hat": numfmt::sig9(self.sigma2_hat),
            "ks_fitted": numfmt::sig9(self.ks_fitted),
            "ks_reference": self.ks_reference.map(numfmt::sig9),
            "sigma2_reference": self.sigma2_reference.map(numfmt::sig9),
            "histogram": self.histogram.iter()
                .map(|(left, c)| serde_json::json!([numfmt::sig9(*left), c]))
                .collect::<Vec<_>>(),
        })
    }
}

/// Runs the CLT experiment: samples `Y_n = (d(z_n,e) - n l)/sqrt(n)` and
/// compares against normal laws. `ell` should be the exact drift increment
/// from the convolution algebra, not a Monte Carlo estimate.
pub fn clt_experiment(
    mu: &FiniteMeasure,
    metric: &WordMetric,
    n: u32,
    samples: usize,
    seed: u64,
    ell: &Rational,
    sigma2_reference: Option<f64>,
) -> Result<CltReport> {
    if samples < 100 {
        return Err(Error::TooFewSamples {
            min: 100,
            got: samples,
        });
    }
    let sampler = WalkSampler::new(mu);
    let descriptor = mu.descriptor();
    let ell_f = numfmt::to_f64(ell);
    let sqrt_n = (n as f64).sqrt();
    let per_sample: Vec<(u64, u64, f64)> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = WalkSampler::rng(seed, i);
            let mut state = WalkerState::new(&descriptor);
            for _ in 0..n {
                let a = sampler.draw(&mut rng);
                state.apply(&sampler.atoms[a]);
            }
            let len = match metric {
                WordMetric::Standard => state.norm(),
                custom => {
                    let z = match &state {
                        WalkerState::Free(w) => GroupElement::Free(w.clone()),
                        WalkerState::Lattice(c) => GroupElement::Lattice(LatticePoint::new(c)),
                    };
                    custom.norm(&descriptor, &z).expect("norm within caps")
                }
            };
            let y = (len as f64 - n as f64 * ell_f) / sqrt_n;
            (i, len, y)
        })
        .collect();

    let mut ys: Vec<f64> = per_sample.iter().map(|t| t.2).collect();
    let mut mean = KahanSum::new();
    for &y in &ys {
        mean.add(y);
    }
    let mean_y = mean.total() / ys.len() as f64;
    let mut var = KahanSum::new();
    for &y in &ys {
        var.add((y - mean_y) * (y - mean_y));
    }
    let sigma2_hat = var.total() / (ys.len() - 1) as f64;

    let fitted = Normal::new(0.0, sigma2_hat.sqrt().max(1e-300)).expect("positive sd");
    let ks_fitted = ks_distance(&mut ys, |y| fitted.cdf(y));
    let ks_reference = sigma2_reference.map(|s2| {
        let reference = Normal::new(0.0, s2.sqrt()).expect("positive sd");
        ks_distance(&mut ys, |y| reference.cdf(y))
    });

    // histogram over [-4s, 4s] with 32 bins
    let s = sigma2_reference.unwrap_or(sigma2_hat).sqrt();
    let bins = 32usize;
    let width = 8.0 * s / bins as f64;
    let mut histogram: Vec<(f64, u64)> = (0..bins)
        .map(|b| (-4.0 * s + b as f64 * width, 0u64))
        .collect();
    for &(_, _, y) in &per_sample {
        let idx = ((y + 4.0 * s) / width).floor();
        if idx >= 0.0 && (idx as usize) < bins {
            histogram[idx as usize].1 += 1;
        }
    }

    Ok(CltReport {
        n,
        samples,
        seed,
        ell: ell_f,
        mean_y,
        sigma2_hat,
        ks_fitted,
        ks_reference,
        sigma2_reference,
        per_sample,
        histogram,
    })
}

/// Evaluation rules for (quasi-)harmonic functions along trajectories.
pub enum QuasiHarmonicFunction {
    /// `g -> d(g, e)` for the standard metric.
    WordLength,
    /// The homomorphism `g -> sum of coordinates` on a lattice.
    CoordinateSum,
    Constant(f64),
    /// `g -> d(g,e) + P u(g)`: word length corrected by a Poisson transform.
    BoundaryCorrected {
        boundary: TreeBoundary,
        u: CylinderFunction,
    },
    /// The Cesàro profile `u_N` from the convolution algebra (memoized;
    /// desk-scale parameters only).
    Cesaro { horizon: u32 },
}

impl QuasiHarmonicFunction {
    pub fn eval(
        &self,
        descriptor: &GroupDescriptor,
        mu: &FiniteMeasure,
        g: &GroupElement,
        cache: &mut HashMap<GroupElement, f64>,
    ) -> Result<f64> {
        if let Some(v) = cache.get(g) {
            return Ok(*v);
        }
        let v = match self {
            QuasiHarmonicFunction::WordLength => descriptor.word_length(g)? as f64,
            QuasiHarmonicFunction::CoordinateSum => {
                g.as_lattice()?.coords().iter().sum::<i64>() as f64
            }
            QuasiHarmonicFunction::Constant(c) => *c,
            QuasiHarmonicFunction::BoundaryCorrected { boundary, u } => {
                let w = g.as_free()?;
                let p = boundary.poisson_transform(u, w)?;
                descriptor.word_length(g)? as f64 + numfmt::to_f64(&p)
            }
            QuasiHarmonicFunction::Cesaro { horizon } => {
                let profile = quasi_harmonic_profile(
                    mu,
                    &WordMetric::Standard,
                    g,
                    *horizon,
                    0,
                    DEFAULT_SUPPORT_CAP,
                )?;
                numfmt::to_f64(&profile.value)
            }
        };
        cache.insert(g.clone(), v);
        Ok(v)
    }
}

#[derive(Debug, Clone)]
pub struct BinDiagnostic {
    /// Range of `d(z_k, e)` covered by this bin.
    pub norm_range: (u64, u64),
    pub count: u64,
    pub mean_increment: f64,
    pub standard_error: f64,
}

/// Result of [`martingale_check`].
#[derive(Debug, Clone)]
pub struct MartingaleDiagnostics {
    pub precheck_radius: u32,
    /// Conditional increment means by coarse bins of the current norm; a
    /// martingale has every bin mean within a few standard errors of zero.
    pub bins: Vec<BinDiagnostic>,
    /// All bins within `3 se` of zero.
    pub conditional_pass: bool,
    /// Mean over samples of `(1/n) Σ (Δφ - l)^2`.
    pub quadratic_variation: f64,
    /// Max-increment statistic `ψ_m = max_j |Δφ_j - l| / sqrt(m)` at a
    /// ladder of horizons.
    pub psi_ladder: Vec<(u32, f64)>,
    /// Steps skipped because the walk sat on an excluded point.
    pub skipped_steps: u64,
}

#[derive(Debug, Clone)]
pub struct MartingaleOptions {
    /// Exclude increments from excluded points (e.g. the identity for the
    /// word length, which is only quasi-harmonic away from `e`).
    pub exclude: Vec<GroupElement>,
    pub precheck_radius: u32,
    pub bin_width: u64,
}

impl Default for MartingaleOptions {
    fn default() -> Self {
        MartingaleOptions {
            exclude: Vec::new(),
            precheck_radius: 5,
            bin_width: 8,
        }
    }
}

/// Verifies right quasi-harmonicity of `phi` on a ball (up to 1e-9), then
/// samples trajectories and reports martingale diagnostics for
/// `M_k = phi(z_k) - k l`.
pub fn martingale_check(
    phi: &QuasiHarmonicFunction,
    mu: &FiniteMeasure,
    ell: f64,
    n: u32,
    samples: usize,
    seed: u64,
    options: MartingaleOptions,
) -> Result<MartingaleDiagnostics> {
    let descriptor = mu.descriptor();
    let mut cache: HashMap<GroupElement, f64> = HashMap::new();

    // pre-check: ∫ phi(g s) dmu(s) - phi(g) = ell on the ball, minus the
    // excluded points
    let atoms = mu.atoms_sorted();
    for g in descriptor.ball(options.precheck_radius)? {
        if options.exclude.contains(&g) {
            continue;
        }
        let base = phi.eval(&descriptor, mu, &g, &mut cache)?;
        let mut avg = KahanSum::new();
        for (s, _) in &atoms {
            let gs = descriptor.multiply(&g, s)?;
            let w = numfmt::to_f64(&mu.weight(s));
            avg.add(w * phi.eval(&descriptor, mu, &gs, &mut cache)?);
        }
        let found = avg.total() - base;
        if (found - ell).abs() > 1e-9 {
            return Err(Error::QuasiHarmonicityViolated {
                witness: g.to_string(),
                found,
                expected: ell,
            });
        }
    }

    // trajectory diagnostics
    let sampler = WalkSampler::new(mu);
    let mut bin_sums: HashMap<u64, (u64, KahanSum, KahanSum)> = HashMap::new();
    let mut qv_total = KahanSum::new();
    let mut skipped = 0u64;
    let ladder: Vec<u32> = [n / 4, n / 2, n]
        .into_iter()
        .filter(|&m| m >= 1)
        .collect();
    let mut psi_sums: Vec<KahanSum> = ladder.iter().map(|_| KahanSum::new()).collect();

    for i in 0..samples as u64 {
        let mut rng = WalkSampler::rng(seed, i);
        let mut z = descriptor.identity();
        let mut phi_z = phi.eval(&descriptor, mu, &z, &mut cache)?;
        let mut qv = KahanSum::new();
        let mut max_dev = 0.0f64;
        let mut used_steps = 0u64;
        for k in 0..n {
            let a = sampler.draw(&mut rng);
            let next = descriptor.multiply(&z, &sampler.atoms[a])?;
            let phi_next = phi.eval(&descriptor, mu, &next, &mut cache)?;
            if options.exclude.contains(&z) {
                skipped += 1;
            } else {
                let inc = phi_next - phi_z - ell;
                let norm = descriptor.word_length(&z)?;
                let bin = norm / options.bin_width;
                let entry = bin_sums
                    .entry(bin)
                    .or_insert_with(|| (0, KahanSum::new(), KahanSum::new()));
                entry.0 += 1;
                entry.1.add(inc);
                entry.2.add(inc * inc);
                qv.add(inc * inc);
                max_dev = max_dev.max(inc.abs());
                used_steps += 1;
            }
            for (li, &m) in ladder.iter().enumerate() {
                if k + 1 == m {
                    psi_sums[li].add(max_dev / (m as f64).sqrt());
                }
            }
            z = next;
            phi_z = phi_next;
        }
        if used_steps > 0 {
            qv_total.add(qv.total() / used_steps as f64);
        }
    }

    let mut bins: Vec<BinDiagnostic> = bin_sums
        .into_iter()
        .map(|(bin, (count, sum, sumsq))| {
            let mean = sum.total() / count as f64;
            let var = (sumsq.total() / count as f64 - mean * mean).max(0.0);
            BinDiagnostic {
                norm_range: (bin * options.bin_width, (bin + 1) * options.bin_width - 1),
                count,
                mean_increment: mean,
                standard_error: (var / count as f64).sqrt(),
            }
        })
        .collect();
    bins.sort_by_key(|b| b.norm_range.0);
    // bins with a handful of hits have meaningless standard errors
    let conditional_pass = bins
        .iter()
        .filter(|b| b.count >= 30)
        .all(|b| b.mean_increment.abs() <= 3.0 * b.standard_error.max(1e-12));

    Ok(MartingaleDiagnostics {
        precheck_radius: options.precheck_radius,
        bins,
        conditional_pass,
        quadratic_variation: qv_total.total() / samples as f64,
        psi_ladder: ladder
            .iter()
            .zip(psi_sums)
            .map(|(&m, s)| (m, s.total() / samples as f64))
            .collect(),
        skipped_steps: skipped,
    })
}

/// Trend of `|(a_n - n l)/sqrt(n)|` over the computed range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeglectTrend {
    /// The normalized deviation shrinks: the CLT reduction applies.
    Vanishing,
    /// The normalized deviation stalls or grows: outside the regime.
    NotVanishing,
}

/// Result of [`neglect_check`]: the sequence `(a_n - n l)/sqrt(n)`.
#[derive(Debug, Clone)]
pub struct NeglectReport {
    pub n_max: u32,
    pub ell: Rational,
    /// Exact deviations `a_n - n l`.
    pub deviations: Vec<Rational>,
    /// `(a_n - n l) / sqrt(n)` as floats.
    pub normalized: Vec<f64>,
    pub trend: NeglectTrend,
}

impl NeglectReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,deviation,normalized\n");
        for i in 0..self.deviations.len() {
            out.push_str(&format!(
                "{},{},{}\n",
                i + 1,
                numfmt::rational(&self.deviations[i]),
                numfmt::sig9(self.normalized[i]),
            ));
        }
        out
    }
}

/// Computes `(a_n - n l)/sqrt(n)` from the exact drift table and flags
/// whether it tends to zero over the window.
pub fn neglect_check(
    mu: &FiniteMeasure,
    metric: &WordMetric,
    n_max: u32,
    ell: &Rational,
    support_cap: usize,
) -> Result<NeglectReport> {
    let drift = crate::measure::drift_report(mu, metric, n_max, support_cap)?;
    let deviations: Vec<Rational> = drift
        .a
        .iter()
        .enumerate()
        .map(|(i, a)| a - ell * Rational::from(BigInt::from(i as u64 + 1)))
        .collect();
    let normalized: Vec<f64> = deviations
        .iter()
        .enumerate()
        .map(|(i, d)| numfmt::to_f64(d) / ((i + 1) as f64).sqrt())
        .collect();
    // compare the mean |value| over the first and last thirds
    let third = (normalized.len() / 3).max(1);
    let head: f64 =
        normalized[..third].iter().map(|v| v.abs()).sum::<f64>() / third as f64;
    let tail: f64 = normalized[normalized.len() - third..]
        .iter()
        .map(|v| v.abs())
        .sum::<f64>()
        / third as f64;
    let trend = if tail < 0.8 * head || tail < 1e-9 {
        NeglectTrend::Vanishing
    } else {
        NeglectTrend::NotVanishing
    };
    Ok(NeglectReport {
        n_max,
        ell: ell.clone(),
        deviations,
        normalized,
        trend,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::ChiSquared;

    fn f2() -> GroupDescriptor {
        GroupDescriptor::free(2)
    }

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn zero_step_walk_is_identity() {
        let mu = FiniteMeasure::srw(f2());
        let s = sample_walk(&mu, 0, 1, 0);
        assert_eq!(s.endpoint, f2().identity());
        assert_eq!(s.final_norm, 0);
    }

    #[test]
    fn endpoint_recomputable_from_increments() {
        let mu = FiniteMeasure::srw(f2());
        let sampler = WalkSampler::new(&mu);
        for i in 0..50u64 {
            let s = sample_walk_with(&sampler, 64, 9, i);
            let z = s.recompute_endpoint(&f2(), sampler.atoms()).unwrap();
            assert_eq!(z, s.endpoint);
        }
    }

    #[test]
    fn sampling_is_reproducible_and_stream_separated() {
        let mu = FiniteMeasure::srw(f2());
        let a = sample_walk(&mu, 100, 42, 7);
        let b = sample_walk(&mu, 100, 42, 7);
        assert_eq!(a.steps, b.steps);
        let c = sample_walk(&mu, 100, 42, 8);
        assert_ne!(a.steps, c.steps);
    }

    #[test]
    fn empirical_mean_matches_exact_drift() {
        // F2 SRW: empirical mean of |z_n| within 4 sigma/sqrt(samples) of a_n
        let mu = FiniteMeasure::srw(f2());
        let drift = crate::measure::drift_report(
            &mu,
            &WordMetric::Standard,
            12,
            DEFAULT_SUPPORT_CAP,
        )
        .unwrap();
        let sampler = WalkSampler::new(&mu);
        let samples = 10_000u64;
        for n in [6u32, 12] {
            let mut total = 0u64;
            for i in 0..samples {
                total += sample_walk_with(&sampler, n, 1234, i).final_norm;
            }
            let mean = total as f64 / samples as f64;
            let exact = numfmt::to_f64(drift.a_n(n));
            // increment sd is at most 1 per step, so sd(|z_n|) <= sqrt(n)
            let slack = 4.0 * (n as f64).sqrt() / (samples as f64).sqrt();
            assert!((mean - exact).abs() <= slack, "n = {n}: {mean} vs {exact}");
        }
    }

    #[test]
    fn chi_square_against_exact_law_on_z() {
        // distribution of z_10 matches the exact binomial law at the 1% level
        let z = GroupDescriptor::lattice(1);
        let mu = FiniteMeasure::srw(z);
        let exact = mu.convolution_power(10).unwrap();
        let sampler = WalkSampler::new(&mu);
        let samples = 20_000u64;
        let mut counts: HashMap<GroupElement, u64> = HashMap::new();
        for i in 0..samples {
            let s = sample_walk_with(&sampler, 10, 2024, i);
            *counts.entry(s.endpoint).or_insert(0) += 1;
        }
        let mut chi2 = 0.0;
        let mut df = 0i64;
        for (g, num) in exact.atoms_sorted() {
            let expected = samples as f64 * num as f64 / exact.denom() as f64;
            let observed = counts.get(&g).copied().unwrap_or(0) as f64;
            chi2 += (observed - expected) * (observed - expected) / expected;
            df += 1;
        }
        let dist = ChiSquared::new((df - 1) as f64).unwrap();
        let critical = dist.inverse_cdf(0.99);
        assert!(chi2 <= critical, "chi2 = {chi2}, critical = {critical}");
    }

    #[test]
    fn clt_report_f2() {
        let mu = FiniteMeasure::srw(f2());
        let report = clt_experiment(
            &mu,
            &WordMetric::Standard,
            400,
            4000,
            0xc17,
            &q(1, 2),
            Some(0.75),
        )
        .unwrap();
        // sample mean of Y_n within 4 sigma / sqrt(samples)
        assert!(report.mean_y.abs() <= 4.0 * 0.75f64.sqrt() / (4000f64).sqrt());
        assert!(report.sigma2_hat > 0.6 && report.sigma2_hat < 0.9);
        assert!(report.ks_reference.unwrap() <= 0.06);
        assert!(report.ks_fitted <= 0.06);
    }

    #[test]
    fn clt_requires_samples() {
        let mu = FiniteMeasure::srw(f2());
        assert!(matches!(
            clt_experiment(&mu, &WordMetric::Standard, 10, 50, 1, &q(1, 2), None),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn ks_decreases_from_n100_to_n400() {
        let mu = FiniteMeasure::srw(f2());
        let ks = |n: u32| {
            clt_experiment(
                &mu,
                &WordMetric::Standard,
                n,
                6000,
                0xf00d,
                &q(1, 2),
                Some(0.75),
            )
            .unwrap()
            .ks_reference
            .unwrap()
        };
        let (k100, k400) = (ks(100), ks(400));
        assert!(k400 < k100, "KS should improve: {k100} -> {k400}");
    }

    #[test]
    fn zero_drift_lattice_case_fails_clt_against_gaussian() {
        // |z_n|/sqrt(n) converges to a reflected normal, so Y_n with ell = 0
        // is nonnegative and the KS distance to any centered Gaussian stays
        // large; the harness must report that honestly.
        let z = GroupDescriptor::lattice(1);
        let mu = FiniteMeasure::srw(z);
        let report = clt_experiment(
            &mu,
            &WordMetric::Standard,
            100,
            2000,
            0xabc,
            &Rational::zero(),
            Some(1.0),
        )
        .unwrap();
        assert!(report.ks_reference.unwrap() > 0.25);
    }

    #[test]
    fn martingale_word_length_requires_exclusion() {
        // without excluding e the pre-check names the violating element
        let mu = FiniteMeasure::srw(f2());
        let err = martingale_check(
            &QuasiHarmonicFunction::WordLength,
            &mu,
            0.5,
            50,
            200,
            5,
            MartingaleOptions::default(),
        )
        .unwrap_err();
        match err {
            Error::QuasiHarmonicityViolated { witness, .. } => assert_eq!(witness, "e"),
            other => panic!("expected quasi-harmonicity violation, got {other:?}"),
        }
    }

    #[test]
    fn martingale_word_length_excluding_identity() {
        let mu = FiniteMeasure::srw(f2());
        let diag = martingale_check(
            &QuasiHarmonicFunction::WordLength,
            &mu,
            0.5,
            200,
            2000,
            1,
            MartingaleOptions {
                exclude: vec![f2().identity()],
                ..MartingaleOptions::default()
            },
        )
        .unwrap();
        assert!(diag.conditional_pass);
        // quadratic variation of the +-1 increment chain: 3/4
        assert!((diag.quadratic_variation - 0.75).abs() < 0.02);
        // psi ladder decreases towards 0; bounded by max增 3/2 / sqrt(n)
        let psi: Vec<f64> = diag.psi_ladder.iter().map(|p| p.1).collect();
        assert!(psi.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        for (m, v) in &diag.psi_ladder {
            assert!(*v <= 1.5 / (*m as f64).sqrt() + 1e-12);
        }
    }

    #[test]
    fn martingale_homomorphism_on_z2() {
        // coordinate sum on Z^2 is exactly harmonic with ell = 0 and
        // quadratic variation E|step increment|^2 = 1
        let z2 = GroupDescriptor::lattice(2);
        let mu = FiniteMeasure::srw(z2);
        let diag = martingale_check(
            &QuasiHarmonicFunction::CoordinateSum,
            &mu,
            0.0,
            100,
            2000,
            7,
            MartingaleOptions::default(),
        )
        .unwrap();
        assert!(diag.conditional_pass);
        assert!((diag.quadratic_variation - 1.0).abs() < 0.05);
    }

    #[test]
    fn martingale_constant_function() {
        let mu = FiniteMeasure::srw(f2());
        let diag = martingale_check(
            &QuasiHarmonicFunction::Constant(3.0),
            &mu,
            0.0,
            50,
            200,
            8,
            MartingaleOptions::default(),
        )
        .unwrap();
        assert_eq!(diag.quadratic_variation, 0.0);
        assert!(diag.psi_ladder.iter().all(|p| p.1 == 0.0));
    }

    #[test]
    fn neglect_f2_vanishes() {
        // a_n - n/2 stays within (0, 1], so the ratio <= 1/sqrt(n)
        let mu = FiniteMeasure::srw(f2());
        let report =
            neglect_check(&mu, &WordMetric::Standard, 12, &q(1, 2), DEFAULT_SUPPORT_CAP).unwrap();
        for (i, d) in report.deviations.iter().enumerate() {
            assert!(d > &Rational::zero() && d <= &Rational::one(), "n = {}", i + 1);
        }
        assert_eq!(report.trend, NeglectTrend::Vanishing);
        // n = 1 exact value: (a_1 - l)/1 = 1/2
        assert!((report.normalized[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn neglect_zero_drift_fails_honestly() {
        // Z SRW with ell = 0: a_n/sqrt(n) -> sqrt(2/pi), not zero
        let z = GroupDescriptor::lattice(1);
        let mu = FiniteMeasure::srw(z);
        let report =
            neglect_check(&mu, &WordMetric::Standard, 40, &Rational::zero(), DEFAULT_SUPPORT_CAP)
                .unwrap();
        assert_eq!(report.trend, NeglectTrend::NotVanishing);
        let last = *report.normalized.last().unwrap();
        assert!((last - (2.0 / std::f64::consts::PI).sqrt()).abs() < 0.05);
    }

    #[test]
    fn boundary_correction_shifts_right_increments_by_the_coboundary() {
        // The mechanism behind phi_u = phi + P u: since P intertwines right
        // averaging with Q (∫ P u(g s) dmu(s) = P(Q u)(g)), the right
        // increment of P u equals -P(u - Q u), exactly. This is the identity
        // that turns a cohomological solution into a right quasi-harmonic
        // correction.
        let b = TreeBoundary::new(2);
        let mu = FiniteMeasure::srw(f2());
        let u = CylinderFunction::indicator(&b, &crate::group::FreeWord::from_letters(&[2]))
            .add_constant(&q(-1, 4));
        let qu = crate::besov::transfer_operator(&b, &u, &mu, 1).unwrap();
        let coboundary = u.sub(&qu, &b).unwrap();
        for g in f2().ball(2).unwrap() {
            let g = g.as_free().unwrap();
            let mut avg = Rational::zero();
            for (s, _) in mu.atoms_sorted() {
                let gs = g.mul(s.as_free().unwrap());
                avg += mu.weight(&s) * b.poisson_transform(&u, &gs).unwrap();
            }
            let increment = avg - b.poisson_transform(&u, g).unwrap();
            let expected = -b.poisson_transform(&coboundary, g).unwrap();
            assert_eq!(increment, expected, "g = {g}");
        }
        // the evaluation rule itself is usable along trajectories
        let mut cache = HashMap::new();
        let phi = QuasiHarmonicFunction::BoundaryCorrected { boundary: b, u };
        let v = phi
            .eval(&f2(), &mu, &f2().parse_element("ab").unwrap(), &mut cache)
            .unwrap();
        assert!(v.is_finite());
    }
}
