//! Exact convolution algebra of finitely supported probability measures,
//! with drift, entropy, volume growth and the Cesàro quasi-harmonic
//! construction.
//!
//! A measure stores one shared denominator and per-atom integer numerators,
//! so convolution is pure integer arithmetic: no rounding ever occurs, and
//! every convolution power sums to exactly 1. Numerators never exceed the
//! denominator, so as long as the product of denominators fits in 128 bits
//! (it does at desk scale after gcd normalization) the arithmetic is exact;
//! otherwise the operation fails loudly with [`Error::WeightOverflow`].
//!
//! Both the per-`n` ratio `a_n / n` and the increment `a_n - a_{n-1}` of
//! `a_n = ∫ d(g,e) dμ^{*n}` are reported; increments converge far faster and
//! are the estimator of record here.

use crate::error::{Error, Result};
use crate::group::{GroupDescriptor, GroupElement, WordMetric};
use crate::numfmt;
use crate::Rational;
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, Zero};
use std::collections::{HashMap, HashSet};

/// Default cap on the support size a convolution is allowed to produce.
pub const DEFAULT_SUPPORT_CAP: usize = 20_000_000;

/// A finitely supported probability measure with exact rational weights.
#[derive(Clone, PartialEq)]
pub struct FiniteMeasure {
    descriptor: GroupDescriptor,
    denom: u128,
    atoms: HashMap<GroupElement, u128>,
}

impl FiniteMeasure {
    /// Builds a measure from `(element, numerator, denominator)` triples.
    /// Weights must be positive and sum to exactly 1.
    pub fn from_weights(
        descriptor: GroupDescriptor,
        weights: &[(GroupElement, u128, u128)],
    ) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::NotAProbability);
        }
        let mut denom: u128 = 1;
        for (g, num, den) in weights {
            if !descriptor.contains(g) {
                return Err(Error::DescriptorMismatch);
            }
            if *den == 0 || *num == 0 {
                return Err(Error::NotAProbability);
            }
            denom = checked_lcm(denom, *den).ok_or(Error::WeightOverflow)?;
        }
        let mut atoms: HashMap<GroupElement, u128> = HashMap::with_capacity(weights.len());
        for (g, num, den) in weights {
            let scaled = num.checked_mul(denom / den).ok_or(Error::WeightOverflow)?;
            *atoms.entry(g.clone()).or_insert(0) += scaled;
        }
        let total: u128 = atoms.values().copied().sum();
        if total != denom {
            return Err(Error::NotAProbability);
        }
        let mut m = FiniteMeasure {
            descriptor,
            denom,
            atoms,
        };
        m.normalize();
        Ok(m)
    }

    /// Point mass at `g`.
    pub fn dirac(descriptor: GroupDescriptor, g: GroupElement) -> Result<Self> {
        Self::from_weights(descriptor, &[(g, 1, 1)])
    }

    /// Simple random walk: uniform on the standard symmetric generators.
    pub fn srw(descriptor: GroupDescriptor) -> Self {
        let gens = descriptor.generators();
        let k = gens.len() as u128;
        let weights: Vec<_> = gens.into_iter().map(|g| (g, 1, k)).collect();
        Self::from_weights(descriptor, &weights).expect("generators are valid atoms")
    }

    /// Uniform measure on an explicit finite set (e.g. a sphere).
    pub fn uniform_on(descriptor: GroupDescriptor, elements: &[GroupElement]) -> Result<Self> {
        let k = elements.len() as u128;
        let weights: Vec<_> = elements.iter().map(|g| (g.clone(), 1, k)).collect();
        Self::from_weights(descriptor, &weights)
    }

    pub fn descriptor(&self) -> GroupDescriptor {
        self.descriptor
    }

    pub fn support_size(&self) -> usize {
        self.atoms.len()
    }

    pub fn support(&self) -> impl Iterator<Item = &GroupElement> {
        self.atoms.keys()
    }

    pub fn denom(&self) -> u128 {
        self.denom
    }

    /// Integer numerator of the atom at `g` over [`Self::denom`] (0 if absent).
    pub fn numerator(&self, g: &GroupElement) -> u128 {
        self.atoms.get(g).copied().unwrap_or(0)
    }

    /// Exact weight of `g`.
    pub fn weight(&self, g: &GroupElement) -> Rational {
        Rational::new(BigInt::from(self.numerator(g)), BigInt::from(self.denom))
    }

    /// Atoms sorted in the canonical element order, for deterministic output.
    pub fn atoms_sorted(&self) -> Vec<(GroupElement, u128)> {
        let mut v: Vec<_> = self.atoms.iter().map(|(g, w)| (g.clone(), *w)).collect();
        v.sort_by(|a, b| a.0.canonical_cmp(&b.0));
        v
    }

    /// Raw iteration over `(atom, numerator)` pairs (unspecified order).
    pub fn iter(&self) -> impl Iterator<Item = (&GroupElement, u128)> {
        self.atoms.iter().map(|(g, w)| (g, *w))
    }

    /// Largest word length in the support (standard metric).
    pub fn max_support_norm(&self) -> u64 {
        self.atoms
            .keys()
            .map(|g| self.descriptor.word_length(g).expect("validated atoms"))
            .max()
            .unwrap_or(0)
    }

    fn normalize(&mut self) {
        let mut g = self.denom;
        for num in self.atoms.values() {
            g = g.gcd(num);
            if g == 1 {
                return;
            }
        }
        self.denom /= g;
        for num in self.atoms.values_mut() {
            *num /= g;
        }
    }

    /// Exact convolution `(μ∗ν)(g) = Σ_h μ(h)·ν(h^-1 g)`, computed as
    /// `Σ_{h,k} μ(h)ν(k) δ_{hk}`.
    pub fn convolve(&self, other: &FiniteMeasure) -> Result<FiniteMeasure> {
        self.convolve_capped(other, DEFAULT_SUPPORT_CAP)
    }

    pub fn convolve_capped(
        &self,
        other: &FiniteMeasure,
        support_cap: usize,
    ) -> Result<FiniteMeasure> {
        if self.descriptor != other.descriptor {
            return Err(Error::DescriptorMismatch);
        }
        let denom = self
            .denom
            .checked_mul(other.denom)
            .ok_or(Error::WeightOverflow)?;
        let mut atoms: HashMap<GroupElement, u128> =
            HashMap::with_capacity(self.atoms.len().max(other.atoms.len()) * 2);
        for (h, wh) in &self.atoms {
            for (k, wk) in &other.atoms {
                let g = self.descriptor.multiply(h, k)?;
                *atoms.entry(g).or_insert(0) += wh * wk;
            }
            if atoms.len() > support_cap {
                return Err(Error::CapExceeded {
                    what: "convolution support",
                    needed: atoms.len() as u128,
                    limit: support_cap as u128,
                });
            }
        }
        let mut m = FiniteMeasure {
            descriptor: self.descriptor,
            denom,
            atoms,
        };
        m.normalize();
        debug_assert_eq!(m.atoms.values().copied().sum::<u128>(), m.denom);
        Ok(m)
    }

    /// `n`-th convolution power by binary exponentiation.
    pub fn convolution_power(&self, n: u32) -> Result<FiniteMeasure> {
        self.convolution_power_capped(n, DEFAULT_SUPPORT_CAP)
    }

    pub fn convolution_power_capped(&self, n: u32, support_cap: usize) -> Result<FiniteMeasure> {
        let mut result = FiniteMeasure::dirac(self.descriptor, self.descriptor.identity())?;
        let mut base = self.clone();
        let mut k = n;
        loop {
            if k & 1 == 1 {
                result = result.convolve_capped(&base, support_cap)?;
            }
            k >>= 1;
            if k == 0 {
                break;
            }
            base = base.convolve_capped(&base, support_cap)?;
        }
        Ok(result)
    }

    /// Streams `μ^{*0}, μ^{*1}, ..., μ^{*n_max}` to `visit` without keeping
    /// more than one power alive.
    pub fn for_each_power(
        &self,
        n_max: u32,
        support_cap: usize,
        mut visit: impl FnMut(u32, &FiniteMeasure) -> Result<()>,
    ) -> Result<()> {
        let mut current = FiniteMeasure::dirac(self.descriptor, self.descriptor.identity())?;
        visit(0, &current)?;
        for n in 1..=n_max {
            current = current.convolve_capped(self, support_cap)?;
            visit(n, &current)?;
        }
        Ok(())
    }

    /// The reversed measure `μ̌(g) = μ(g^-1)`.
    pub fn reverse(&self) -> FiniteMeasure {
        let atoms = self
            .atoms
            .iter()
            .map(|(g, w)| (self.descriptor.inverse(g).expect("validated atoms"), *w))
            .collect();
        FiniteMeasure {
            descriptor: self.descriptor,
            denom: self.denom,
            atoms,
        }
    }

    /// `μ = μ̌`?
    pub fn is_symmetric(&self) -> bool {
        *self == self.reverse()
    }

    /// Exact convex combination `Σ c_i μ_i` with rational coefficients
    /// `c_i = c_num_i / c_den_i` summing to 1.
    pub fn mix(parts: &[(u128, u128, &FiniteMeasure)]) -> Result<FiniteMeasure> {
        let descriptor = parts.first().ok_or(Error::NotAProbability)?.2.descriptor;
        let mut denom: u128 = 1;
        for (_, c_den, m) in parts {
            if m.descriptor != descriptor {
                return Err(Error::DescriptorMismatch);
            }
            let d = c_den.checked_mul(m.denom).ok_or(Error::WeightOverflow)?;
            denom = checked_lcm(denom, d).ok_or(Error::WeightOverflow)?;
        }
        let mut atoms: HashMap<GroupElement, u128> = HashMap::new();
        for (c_num, c_den, m) in parts {
            let scale = c_num
                .checked_mul(denom / (c_den * m.denom))
                .ok_or(Error::WeightOverflow)?;
            for (g, w) in &m.atoms {
                *atoms.entry(g.clone()).or_insert(0) += w * scale;
            }
        }
        let total: u128 = atoms.values().copied().sum();
        if total != denom {
            return Err(Error::NotAProbability);
        }
        let mut m = FiniteMeasure {
            descriptor,
            denom,
            atoms,
        };
        m.normalize();
        Ok(m)
    }

    /// Exact expectation `∫ d(g,e) dμ(g)` of the norm.
    pub fn expected_norm(&self, metric: &WordMetric) -> Result<Rational> {
        let mut num = BigInt::zero();
        for (g, w) in &self.atoms {
            let d = metric.norm(&self.descriptor, g)?;
            num += BigInt::from(*w) * BigInt::from(d);
        }
        Ok(Rational::new(num, BigInt::from(self.denom)))
    }

    /// Shannon entropy `−Σ w log w` in nats, from the exact weights.
    pub fn entropy(&self) -> f64 {
        // H = ln(denom) - (1/denom) Σ num·ln(num), compensated summation
        let mut sum = KahanSum::new();
        for w in self.atoms.values() {
            let x = *w as f64;
            sum.add(x * x.ln());
        }
        let d = self.denom as f64;
        d.ln() - sum.total() / d
    }

    /// Does the support generate the group as a semigroup? Verified by
    /// covering the ball of radius `radius` with `⋃_{n<=cap} supp μ^{*n}`.
    /// A finite cap can certify generation but never refute it.
    pub fn generates_semigroup(&self, radius: u32, step_cap: u32) -> Result<GenerationCheck> {
        let ball: HashSet<GroupElement> = self.descriptor.ball(radius)?.into_iter().collect();
        let mut covered: HashSet<GroupElement> = HashSet::new();
        let mut status = GenerationStatus::Inconclusive;
        self.for_each_power(step_cap, DEFAULT_SUPPORT_CAP, |n, power| {
            if n == 0 || !matches!(status, GenerationStatus::Inconclusive) {
                return Ok(());
            }
            covered.extend(power.support().filter(|g| ball.contains(*g)).cloned());
            if covered.len() == ball.len() {
                status = GenerationStatus::Generates { steps: n };
            }
            Ok(())
        })?;
        Ok(GenerationCheck {
            radius,
            step_cap,
            status,
        })
    }

    /// Parses the measure file format: one `<element> <num>/<den>` per line,
    /// `#` starts a comment.
    pub fn parse(descriptor: GroupDescriptor, text: &str) -> Result<Self> {
        let mut weights = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (elem, frac) = line.split_once(char::is_whitespace).ok_or_else(|| {
                Error::Parse(format!("line {}: expected `<element> <num>/<den>`", idx + 1))
            })?;
            let g = descriptor.parse_element(elem)?;
            let (num, den) = frac.trim().split_once('/').unwrap_or((frac.trim(), "1"));
            let num: u128 = num
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: bad numerator: {e}", idx + 1)))?;
            let den: u128 = den
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: bad denominator: {e}", idx + 1)))?;
            weights.push((g, num, den));
        }
        Self::from_weights(descriptor, &weights)
    }

    /// Renders the measure in the same file format, canonically ordered.
    pub fn to_file_format(&self) -> String {
        let mut out = String::new();
        for (g, num) in self.atoms_sorted() {
            let q = Rational::new(BigInt::from(num), BigInt::from(self.denom));
            out.push_str(&format!("{} {}\n", g, numfmt::rational(&q)));
        }
        out
    }
}

impl std::fmt::Debug for FiniteMeasure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "FiniteMeasure({} atoms / denom {} on {})",
            self.atoms.len(),
            self.denom,
            self.descriptor
        )
    }
}

fn checked_lcm(a: u128, b: u128) -> Option<u128> {
    (a / a.gcd(&b)).checked_mul(b)
}

/// Compensated (Kahan) summation for long sums.
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        KahanSum {
            sum: 0.0,
            carry: 0.0,
        }
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum
    }
}

impl Default for KahanSum {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenerationStatus {
    Generates { steps: u32 },
    /// The cap was reached before the ball was covered; this is *not* a
    /// refutation.
    Inconclusive,
}

#[derive(Debug, Clone)]
pub struct GenerationCheck {
    pub radius: u32,
    pub step_cap: u32,
    pub status: GenerationStatus,
}

/// Exact drift data `a_n = ∫ d(g,e) dμ^{*n}(g)` for `n = 1..=n_max`.
#[derive(Debug, Clone)]
pub struct DriftReport {
    pub n_max: u32,
    /// `a_n` for `n = 1..=n_max`.
    pub a: Vec<Rational>,
    /// `a_n / n`.
    pub ratios: Vec<Rational>,
    /// `a_n - a_{n-1}` with `a_0 = 0`.
    pub increments: Vec<Rational>,
    /// Fekete upper bound `min_n a_n / n` for the drift.
    pub fekete_bound: Rational,
    /// The estimator of record: the last increment `a_N - a_{N-1}`.
    pub increment_estimate: Rational,
    /// Exact subadditivity `a_{m+n} <= a_m + a_n` over the computed range.
    pub subadditive: bool,
}

impl DriftReport {
    pub fn a_n(&self, n: u32) -> &Rational {
        &self.a[(n - 1) as usize]
    }

    /// CSV rows `n,a_n,a_n_over_n,increment`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,a_n,a_n_over_n,increment\n");
        for i in 0..self.a.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                i + 1,
                numfmt::rational(&self.a[i]),
                numfmt::rational(&self.ratios[i]),
                numfmt::rational(&self.increments[i]),
            ));
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "n_max": self.n_max,
            "a_n": self.a.iter().map(numfmt::rational).collect::<Vec<_>>(),
            "ratios": self.ratios.iter().map(numfmt::rational).collect::<Vec<_>>(),
            "increments": self.increments.iter().map(numfmt::rational).collect::<Vec<_>>(),
            "fekete_bound": numfmt::rational(&self.fekete_bound),
            "increment_estimate": numfmt::rational(&self.increment_estimate),
            "subadditive": self.subadditive,
        })
    }
}

/// Computes the exact drift table of `(μ, d)` up to `n_max`.
pub fn drift_report(
    mu: &FiniteMeasure,
    metric: &WordMetric,
    n_max: u32,
    support_cap: usize,
) -> Result<DriftReport> {
    assert!(n_max >= 1);
    let mut a: Vec<Rational> = Vec::with_capacity(n_max as usize);
    mu.for_each_power(n_max, support_cap, |n, power| {
        if n >= 1 {
            a.push(power.expected_norm(metric)?);
        }
        Ok(())
    })?;
    let ratios: Vec<Rational> = a
        .iter()
        .enumerate()
        .map(|(i, v)| v / Rational::from(BigInt::from(i as u64 + 1)))
        .collect();
    let mut increments = Vec::with_capacity(a.len());
    let mut prev = Rational::zero();
    for v in &a {
        increments.push(v - &prev);
        prev = v.clone();
    }
    let fekete_bound = ratios.iter().min().expect("n_max >= 1").clone();
    let mut subadditive = true;
    for m in 1..=a.len() {
        for n in 1..=a.len().saturating_sub(m) {
            if a[m + n - 1] > &a[m - 1] + &a[n - 1] {
                subadditive = false;
            }
        }
    }
    Ok(DriftReport {
        n_max,
        increment_estimate: increments.last().expect("n_max >= 1").clone(),
        a,
        ratios,
        increments,
        fekete_bound,
        subadditive,
    })
}

/// Entropy and volume-growth data for `n = 1..=n_max`.
#[derive(Debug, Clone)]
pub struct EntropyReport {
    pub n_max: u32,
    /// Shannon entropy `H_n = H(μ^{*n})` in nats.
    pub h: Vec<f64>,
    /// `H_n - H_{n-1}` with `H_0 = 0`.
    pub h_increments: Vec<f64>,
    /// `ln |S^n|` for the standard generating set.
    pub volume_log: Vec<f64>,
    /// `ln |S^n| / n`.
    pub volume_ratios: Vec<f64>,
    /// `ln |S^n| - ln |S^{n-1}|`.
    pub volume_increments: Vec<f64>,
    /// Estimator of record for the Avez entropy: `H_N - H_{N-1}`.
    pub entropy_estimate: f64,
    /// Estimator of record for the exponential growth rate.
    pub growth_estimate: f64,
}

impl EntropyReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,H_n,H_increment,log_Sn,log_Sn_over_n\n");
        for i in 0..self.h.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                i + 1,
                numfmt::sig9(self.h[i]),
                numfmt::sig9(self.h_increments[i]),
                numfmt::sig9(self.volume_log[i]),
                numfmt::sig9(self.volume_ratios[i]),
            ));
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "n_max": self.n_max,
            "h": self.h.iter().copied().map(numfmt::sig9).collect::<Vec<_>>(),
            "h_increments": self.h_increments.iter().copied().map(numfmt::sig9).collect::<Vec<_>>(),
            "volume_ratios": self.volume_ratios.iter().copied().map(numfmt::sig9).collect::<Vec<_>>(),
            "entropy_estimate": numfmt::sig9(self.entropy_estimate),
            "growth_estimate": numfmt::sig9(self.growth_estimate),
        })
    }
}

/// Computes entropies of convolution powers and volume growth of the
/// standard generating set.
pub fn entropy_report(mu: &FiniteMeasure, n_max: u32, support_cap: usize) -> Result<EntropyReport> {
    assert!(n_max >= 1);
    let mut h = Vec::with_capacity(n_max as usize);
    mu.for_each_power(n_max, support_cap, |n, power| {
        if n >= 1 {
            h.push(power.entropy());
        }
        Ok(())
    })?;
    let mut h_increments = Vec::with_capacity(h.len());
    let mut prev = 0.0;
    for &v in &h {
        h_increments.push(v - prev);
        prev = v;
    }
    let d = mu.descriptor();
    let volume_log: Vec<f64> = (1..=n_max)
        .map(|n| (d.product_set_size(n) as f64).ln())
        .collect();
    let volume_ratios: Vec<f64> = volume_log
        .iter()
        .enumerate()
        .map(|(i, v)| v / (i as f64 + 1.0))
        .collect();
    let mut volume_increments = Vec::with_capacity(volume_log.len());
    let mut prev = 0.0;
    for &v in &volume_log {
        volume_increments.push(v - prev);
        prev = v;
    }
    Ok(EntropyReport {
        n_max,
        entropy_estimate: *h_increments.last().expect("n_max >= 1"),
        growth_estimate: *volume_increments.last().expect("n_max >= 1"),
        h,
        h_increments,
        volume_log,
        volume_ratios,
        volume_increments,
    })
}

/// The three estimators of the inequality `h <= v * l` evaluated at `n_max`.
#[derive(Debug, Clone)]
pub struct FundamentalInequalityReport {
    pub n_max: u32,
    /// Drift increment estimate (exact rational).
    pub drift_estimate: Rational,
    pub entropy_estimate: f64,
    pub growth_estimate: f64,
    /// `v̂ * l̂`.
    pub rhs: f64,
    pub tolerance: f64,
    /// `ĥ <= v̂·l̂ + tolerance`.
    pub holds: bool,
}

impl FundamentalInequalityReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "n_max": self.n_max,
            "drift_estimate": numfmt::rational(&self.drift_estimate),
            "entropy_estimate": numfmt::sig9(self.entropy_estimate),
            "growth_estimate": numfmt::sig9(self.growth_estimate),
            "rhs": numfmt::sig9(self.rhs),
            "tolerance": numfmt::sig9(self.tolerance),
            "holds": self.holds,
        })
    }
}

/// Checks `ĥ <= v̂·l̂ + tol` with all quantities as increment estimators at
/// `n = n_max`. Report-only: `holds` records the verdict.
pub fn fundamental_inequality(
    mu: &FiniteMeasure,
    metric: &WordMetric,
    n_max: u32,
    tolerance: f64,
    support_cap: usize,
) -> Result<FundamentalInequalityReport> {
    let drift = drift_report(mu, metric, n_max, support_cap)?;
    let entropy = entropy_report(mu, n_max, support_cap)?;
    let l_hat = numfmt::to_f64(&drift.increment_estimate);
    let rhs = entropy.growth_estimate * l_hat;
    Ok(FundamentalInequalityReport {
        n_max,
        drift_estimate: drift.increment_estimate,
        entropy_estimate: entropy.entropy_estimate,
        growth_estimate: entropy.growth_estimate,
        rhs,
        tolerance,
        holds: entropy.entropy_estimate <= rhs + tolerance,
    })
}

/// Finite-`N` stage of the Cesàro construction of a left quasi-μ-harmonic
/// function:
/// `u_N(g) = (1/N) Σ_{k<N} ∫ (d(g,x) − d(x,e)) dμ^{*k}(x)`, exact.
#[derive(Debug, Clone)]
pub struct QuasiHarmonicProfile {
    pub n: u32,
    /// `u_N(g)`.
    pub value: Rational,
    /// Left-Lipschitz witness `max_{s ∈ B_m} |u_N(s·g) − u_N(s)|`.
    pub lipschitz_witness: Rational,
    /// `|∫ u_N(s·g) dμ̌(s) − u_N(g) − l̂|` against the drift increment `l̂`.
    pub harmonic_residual: Rational,
    /// The drift increment used in the residual.
    pub drift_estimate: Rational,
}

impl QuasiHarmonicProfile {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "n": self.n,
            "value": numfmt::rational(&self.value),
            "lipschitz_witness": numfmt::rational(&self.lipschitz_witness),
            "harmonic_residual": numfmt::rational(&self.harmonic_residual),
            "drift_estimate": numfmt::rational(&self.drift_estimate),
        })
    }
}

/// Evaluates the Cesàro profile at `g`, with a left-Lipschitz witness over
/// the ball `B_m` and the quasi-harmonicity residual.
pub fn quasi_harmonic_profile(
    mu: &FiniteMeasure,
    metric: &WordMetric,
    g: &GroupElement,
    n: u32,
    lipschitz_ball_radius: u32,
    support_cap: usize,
) -> Result<QuasiHarmonicProfile> {
    assert!(n >= 1);
    let d = mu.descriptor();
    if !d.contains(g) {
        return Err(Error::DescriptorMismatch);
    }
    // Evaluation points: g, then s·g for s in supp(μ̌), then the Lipschitz
    // ball and its g-translates.
    let mut points: Vec<GroupElement> = vec![g.clone()];
    let mu_rev = mu.reverse();
    let rev_atoms = mu_rev.atoms_sorted();
    for (s, _) in &rev_atoms {
        points.push(d.multiply(s, g)?);
    }
    let ball = d.ball(lipschitz_ball_radius)?;
    for s in &ball {
        points.push(s.clone());
        points.push(d.multiply(s, g)?);
    }

    // u_N at each point, accumulated exactly power by power.
    let mut totals: Vec<Rational> = vec![Rational::zero(); points.len()];
    let mut a_prev = Rational::zero();
    let mut a_last = Rational::zero();
    mu.for_each_power(n, support_cap, |k, power| {
        if k < n {
            // Σ_x w(x)·(d(p,x) − d(x,e)) for every point p
            let mut nums: Vec<BigInt> = vec![BigInt::zero(); points.len()];
            for (x, w) in power.iter() {
                let base = metric.norm(&d, x)? as i128;
                let wi = BigInt::from(w);
                for (pi, p) in points.iter().enumerate() {
                    let dist = metric.distance(&d, p, x)? as i128;
                    nums[pi] += &wi * BigInt::from(dist - base);
                }
            }
            for (pi, num) in nums.into_iter().enumerate() {
                totals[pi] += Rational::new(num, BigInt::from(power.denom()));
            }
        }
        // track a_{n-1}, a_n for the drift increment
        if k == n - 1 {
            a_prev = power.expected_norm(metric)?;
        }
        if k == n {
            a_last = power.expected_norm(metric)?;
        }
        Ok(())
    })?;
    let n_big = Rational::from(BigInt::from(n));
    let u: Vec<Rational> = totals.into_iter().map(|t| t / &n_big).collect();

    let value = u[0].clone();
    let mut avg = Rational::zero();
    for (i, (s, _)) in rev_atoms.iter().enumerate() {
        avg += u[1 + i].clone() * mu_rev.weight(s);
    }
    let drift_estimate = a_last - a_prev;
    let harmonic_residual = (avg - &value - &drift_estimate).abs();

    let mut lipschitz_witness = Rational::zero();
    let off = 1 + rev_atoms.len();
    for bi in 0..ball.len() {
        let diff = (&u[off + 2 * bi + 1] - &u[off + 2 * bi]).abs();
        if diff > lipschitz_witness {
            lipschitz_witness = diff;
        }
    }

    Ok(QuasiHarmonicProfile {
        n,
        value,
        lipschitz_witness,
        harmonic_residual,
        drift_estimate,
    })
}
