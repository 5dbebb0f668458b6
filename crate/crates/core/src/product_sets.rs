//! Product-set combinatorics at desk scale: sphere densities and largeness,
//! the sphere-measure recursion, difference sets, right-thickness
//! certificates, and the Khintchine-Folner covering statement on `Z`.
//!
//! Asymptotic statements are handled through finite windows. A window can
//! *certify* (a translate was found, a density bound was met) but never
//! refute, so searches report `Inconclusive` instead of a false negative.
//! Invariant means enter only through their finite Cesàro approximants
//! `lambda_m = (1/m) Σ sigma_n`, whose harmonicity defect is bounded
//! explicitly via the recursion `sigma_n * sigma_1 = (3/4) sigma_{n+1} +
//! (1/4) sigma_{n-1}`: telescoping leaves only the four boundary terms
//! `-1/4 sigma_0 + 3/4 sigma_1 + 1/4 sigma_m - 3/4 sigma_{m+1}`, so the
//! defect is at most `2 |phi|_inf / m`.

use crate::error::{Error, Result};
use crate::group::{FreeWord, GroupDescriptor, GroupElement};
use crate::measure::FiniteMeasure;
use crate::numfmt;
use crate::Rational;
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use std::collections::BTreeSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

/// A decidable subset of the group, with membership computable on any
/// element without enumeration.
#[derive(Clone, Debug)]
pub enum SetSpec {
    /// Elements of even or odd word length.
    Parity(Parity),
    /// Union of radius intervals `[lo, hi]` (inclusive).
    AnnulusUnion(Vec<(u32, u32)>),
    /// An explicit finite set.
    Explicit(BTreeSet<GroupElement>),
    /// Bernoulli(p) membership, decided by a seeded hash of the element.
    RandomDensity { p: f64, seed: u64 },
    /// All elements whose reduced word starts with `w` (free groups only).
    PrefixCone(FreeWord),
}

impl SetSpec {
    pub fn contains(&self, descriptor: &GroupDescriptor, g: &GroupElement) -> Result<bool> {
        Ok(match self {
            SetSpec::Parity(p) => {
                let len = descriptor.word_length(g)?;
                (len % 2 == 0) == (*p == Parity::Even)
            }
            SetSpec::AnnulusUnion(intervals) => {
                let len = descriptor.word_length(g)? as u32;
                intervals.iter().any(|&(lo, hi)| lo <= len && len <= hi)
            }
            SetSpec::Explicit(set) => set.contains(g),
            SetSpec::RandomDensity { p, seed } => {
                let h = element_hash(*seed, g);
                (h as f64) < *p * (u64::MAX as f64)
            }
            SetSpec::PrefixCone(w) => {
                let gw = g.as_free()?;
                w.is_prefix_of(gw)
            }
        })
    }

    /// Exact `|A ∩ S_n|` in closed form where the spec allows it.
    fn sphere_count_closed(&self, descriptor: &GroupDescriptor, n: u32) -> Option<u128> {
        match self {
            SetSpec::Parity(p) => {
                let in_set = (n % 2 == 0) == (*p == Parity::Even);
                Some(if in_set { descriptor.sphere_size(n) } else { 0 })
            }
            SetSpec::AnnulusUnion(intervals) => {
                let in_set = intervals.iter().any(|&(lo, hi)| lo <= n && n <= hi);
                Some(if in_set { descriptor.sphere_size(n) } else { 0 })
            }
            SetSpec::PrefixCone(w) => match descriptor {
                GroupDescriptor::FreeGroup { rank } => {
                    let k = w.len() as u32;
                    Some(match n.cmp(&k) {
                        std::cmp::Ordering::Less => 0,
                        _ => (2 * *rank as u128 - 1).pow(n - k).min(u128::MAX),
                    })
                }
                _ => None,
            },
            _ => None,
        }
    }

    /// Exact `|A ∩ S_n|`, by closed form or by enumeration under the cap.
    pub fn sphere_count(&self, descriptor: &GroupDescriptor, n: u32, cap: u128) -> Result<u128> {
        if let Some(c) = self.sphere_count_closed(descriptor, n) {
            return Ok(c);
        }
        let mut count = 0u128;
        for g in descriptor.sphere_capped(n, cap)? {
            if self.contains(descriptor, &g)? {
                count += 1;
            }
        }
        Ok(count)
    }

    /// Parses the textual syntax: `parity:even`, `annuli:2-3,8-9`,
    /// `cone:ab`, `random:0.3:7`, `explicit:@file` or `explicit:a,ab,B`.
    pub fn parse(descriptor: &GroupDescriptor, text: &str) -> Result<SetSpec> {
        let (kind, rest) = text.split_once(':').unwrap_or((text, ""));
        match kind {
            "parity" => match rest {
                "even" => Ok(SetSpec::Parity(Parity::Even)),
                "odd" => Ok(SetSpec::Parity(Parity::Odd)),
                _ => Err(Error::Parse(format!("parity must be even|odd, got {rest:?}"))),
            },
            "annuli" => {
                let intervals = rest
                    .split(',')
                    .map(|part| {
                        let (lo, hi) = part.split_once('-').unwrap_or((part, part));
                        let lo: u32 = lo
                            .trim()
                            .parse()
                            .map_err(|e| Error::Parse(format!("bad radius {lo:?}: {e}")))?;
                        let hi: u32 = hi
                            .trim()
                            .parse()
                            .map_err(|e| Error::Parse(format!("bad radius {hi:?}: {e}")))?;
                        Ok((lo, hi))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(SetSpec::AnnulusUnion(intervals))
            }
            "cone" => {
                let g = descriptor.parse_element(rest)?;
                Ok(SetSpec::PrefixCone(g.as_free()?.clone()))
            }
            "random" => {
                let (p, seed) = rest
                    .split_once(':')
                    .ok_or_else(|| Error::Parse("random:<p>:<seed>".into()))?;
                Ok(SetSpec::RandomDensity {
                    p: p.parse()
                        .map_err(|e| Error::Parse(format!("bad density {p:?}: {e}")))?,
                    seed: seed
                        .parse()
                        .map_err(|e| Error::Parse(format!("bad seed {seed:?}: {e}")))?,
                })
            }
            "explicit" => {
                let body = if let Some(path) = rest.strip_prefix('@') {
                    std::fs::read_to_string(path)?
                } else {
                    rest.replace(',', " ")
                };
                let set = body
                    .split_whitespace()
                    .map(|tok| descriptor.parse_element(tok))
                    .collect::<Result<BTreeSet<_>>>()?;
                Ok(SetSpec::Explicit(set))
            }
            _ => Err(Error::Parse(format!("unknown set spec {text:?}"))),
        }
    }
}

impl std::fmt::Display for SetSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SetSpec::Parity(Parity::Even) => write!(f, "parity:even"),
            SetSpec::Parity(Parity::Odd) => write!(f, "parity:odd"),
            SetSpec::AnnulusUnion(iv) => {
                write!(f, "annuli:")?;
                for (i, (lo, hi)) in iv.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{lo}-{hi}")?;
                }
                Ok(())
            }
            SetSpec::Explicit(set) => {
                write!(f, "explicit:")?;
                for (i, g) in set.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{g}")?;
                }
                Ok(())
            }
            SetSpec::RandomDensity { p, seed } => write!(f, "random:{p}:{seed}"),
            SetSpec::PrefixCone(w) => write!(f, "cone:{w}"),
        }
    }
}

/// Deterministic element hash (splitmix64 over the element encoding).
fn element_hash(seed: u64, g: &GroupElement) -> u64 {
    let mut state = seed ^ 0x9e3779b97f4a7c15;
    let mut mix = |v: u64| {
        state ^= v;
        state = state.wrapping_mul(0xbf58476d1ce4e5b9);
        state ^= state >> 27;
        state = state.wrapping_mul(0x94d049bb133111eb);
        state ^= state >> 31;
    };
    match g {
        GroupElement::Free(w) => {
            for &l in w.letters() {
                mix(l as i64 as u64);
            }
            mix(w.len() as u64 | 1 << 63);
        }
        GroupElement::Lattice(p) => {
            for &c in p.coords() {
                mix(c as u64);
            }
            mix(p.dim() as u64 | 1 << 62);
        }
    }
    state
}

/// Per-sphere densities `|A ∩ S_n| / |S_n|`, their Cesàro mean, and the
/// ball densities `|A ∩ B_n| / |B_n|`.
#[derive(Debug, Clone)]
pub struct DensityReport {
    pub m: u32,
    pub sphere_densities: Vec<Rational>,
    pub cesaro_mean: Rational,
    pub ball_densities: Vec<Rational>,
}

impl DensityReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,sphere_density,ball_density\n");
        for i in 0..self.sphere_densities.len() {
            out.push_str(&format!(
                "{},{},{}\n",
                i + 1,
                numfmt::rational(&self.sphere_densities[i]),
                numfmt::rational(&self.ball_densities[i]),
            ));
        }
        out
    }
}

/// Exact sphere densities of `A` for `n = 1..=m` and their Cesàro average.
pub fn sphere_density(
    descriptor: &GroupDescriptor,
    spec: &SetSpec,
    m: u32,
    cap: u128,
) -> Result<DensityReport> {
    assert!(m >= 1);
    let mut sphere_densities = Vec::with_capacity(m as usize);
    let mut ball_densities = Vec::with_capacity(m as usize);
    let mut hits_in_ball: u128 = if spec.contains(descriptor, &descriptor.identity())? {
        1
    } else {
        0
    };
    let mut ball: u128 = 1;
    for n in 1..=m {
        let hits = spec.sphere_count(descriptor, n, cap)?;
        let size = descriptor.sphere_size(n);
        sphere_densities.push(Rational::new(BigInt::from(hits), BigInt::from(size)));
        hits_in_ball += hits;
        ball += size;
        ball_densities.push(Rational::new(BigInt::from(hits_in_ball), BigInt::from(ball)));
    }
    let cesaro_mean =
        sphere_densities.iter().sum::<Rational>() / Rational::from(BigInt::from(m));
    Ok(DensityReport {
        m,
        sphere_densities,
        cesaro_mean,
        ball_densities,
    })
}

/// The uniform probability measure on the sphere `S_n` (with `sigma_0`
/// the point mass at the identity).
pub fn sphere_measure(descriptor: &GroupDescriptor, n: u32) -> Result<FiniteMeasure> {
    if n == 0 {
        return FiniteMeasure::dirac(*descriptor, descriptor.identity());
    }
    FiniteMeasure::uniform_on(*descriptor, &descriptor.sphere(n)?)
}

/// Verifies the exact recursion
/// `sigma_n * sigma_1 = (3/4) sigma_{n+1} + (1/4) sigma_{n-1}` on `F_2`,
/// atom by atom.
pub fn recursion_check(n: u32) -> Result<bool> {
    assert!(n >= 1);
    let d = GroupDescriptor::free(2);
    let sn = sphere_measure(&d, n)?;
    let s1 = sphere_measure(&d, 1)?;
    let lhs = sn.convolve(&s1)?;
    let rhs = FiniteMeasure::mix(&[
        (3, 4, &sphere_measure(&d, n + 1)?),
        (1, 4, &sphere_measure(&d, n - 1)?),
    ])?;
    Ok(lhs == rhs)
}

/// Window-truncated difference set
/// `{g h^-1 : g, h ∈ A ∩ B_K} ∩ B_K`, exact by brute force.
pub fn difference_set(
    descriptor: &GroupDescriptor,
    spec: &SetSpec,
    window: u32,
    cap: u128,
) -> Result<BTreeSet<GroupElement>> {
    let mut members = Vec::new();
    for g in descriptor.ball_capped(window, cap)? {
        if spec.contains(descriptor, &g)? {
            members.push(g);
        }
    }
    let window_norm = window as u64;
    let chunks: Vec<BTreeSet<GroupElement>> = members
        .par_chunks(256.max(members.len() / 64 + 1))
        .map(|chunk| {
            let mut out = BTreeSet::new();
            for g in chunk {
                for h in &members {
                    let d = descriptor
                        .multiply(g, &descriptor.inverse(h).expect("validated"))
                        .expect("validated");
                    if descriptor.word_length(&d).expect("validated") <= window_norm {
                        out.insert(d);
                    }
                }
            }
            out
        })
        .collect();
    let mut out = BTreeSet::new();
    for c in chunks {
        out.extend(c);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ThicknessStatus {
    /// A translate of `B_k` inside the set was found for the requested `k`.
    Certified,
    /// The window was exhausted; thickness is unbounded, so this is not a
    /// refutation.
    Inconclusive,
}

/// Result of [`thickness_certificate`]: per-`k` witnesses `g` with
/// `B_k g ⊆ T`, searched over `g ∈ B_{K-k}` in canonical order.
#[derive(Debug, Clone)]
pub struct ThicknessReport {
    pub window: u32,
    pub requested: u32,
    /// `(k, witness)` for `k = 0..=requested`.
    pub witnesses: Vec<(u32, Option<GroupElement>)>,
    /// Largest `k` with a witness.
    pub k_star: Option<u32>,
    pub status: ThicknessStatus,
}

/// Searches for right translates of balls inside `T`: every finite set is
/// contained in some `B_k`, so ball translates witness right thickness.
pub fn thickness_certificate(
    descriptor: &GroupDescriptor,
    spec: &SetSpec,
    k: u32,
    window: u32,
    cap: u128,
) -> Result<ThicknessReport> {
    assert!(k < window);
    let mut witnesses = Vec::new();
    let mut k_star = None;
    for kk in 0..=k {
        let ball = descriptor.ball_capped(kk, cap)?;
        let mut found = None;
        'search: for g in descriptor.ball_capped(window - kk, cap)? {
            for x in &ball {
                let xg = descriptor.multiply(x, &g)?;
                if !spec.contains(descriptor, &xg)? {
                    continue 'search;
                }
            }
            found = Some(g);
            break;
        }
        if found.is_some() {
            k_star = Some(kk);
        }
        witnesses.push((kk, found));
    }
    let status = if witnesses.last().is_some_and(|(_, w)| w.is_some()) {
        ThicknessStatus::Certified
    } else {
        ThicknessStatus::Inconclusive
    };
    Ok(ThicknessReport {
        window,
        requested: k,
        witnesses,
        k_star,
        status,
    })
}

/// A periodic subset of `Z`: a union of residue classes mod `modulus`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeriodicZSet {
    pub modulus: u64,
    pub residues: BTreeSet<u64>,
}

impl PeriodicZSet {
    pub fn new(modulus: u64, residues: impl IntoIterator<Item = u64>) -> Self {
        assert!(modulus >= 1);
        PeriodicZSet {
            modulus,
            residues: residues.into_iter().map(|r| r % modulus).collect(),
        }
    }

    pub fn contains(&self, x: i64) -> bool {
        self.residues.contains(&(x.rem_euclid(self.modulus as i64) as u64))
    }

    /// The difference set `A - A`, again periodic with the same modulus.
    pub fn difference(&self) -> PeriodicZSet {
        let m = self.modulus as i64;
        let mut residues = BTreeSet::new();
        for &a in &self.residues {
            for &b in &self.residues {
                residues.insert((a as i64 - b as i64).rem_euclid(m) as u64);
            }
        }
        PeriodicZSet {
            modulus: self.modulus,
            residues,
        }
    }

    /// Parses `"2z"`, `"3z+1"`.
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim().to_ascii_lowercase();
        let (m, r) = t
            .split_once('z')
            .ok_or_else(|| Error::Parse(format!("expected <m>z[+r], got {text:?}")))?;
        let modulus: u64 = m
            .parse()
            .map_err(|e| Error::Parse(format!("bad modulus {m:?}: {e}")))?;
        let residue: u64 = if r.is_empty() {
            0
        } else {
            let r = r
                .strip_prefix('+')
                .ok_or_else(|| Error::Parse(format!("expected +r suffix in {text:?}")))?;
            r.parse()
                .map_err(|e| Error::Parse(format!("bad residue {r:?}: {e}")))?
        };
        Ok(PeriodicZSet::new(modulus, [residue]))
    }
}

/// Intersection of periodic sets, over the lcm of the moduli.
pub fn intersect_periodic(sets: &[PeriodicZSet]) -> PeriodicZSet {
    assert!(!sets.is_empty());
    let modulus = sets.iter().fold(1u64, |acc, s| acc.lcm(&s.modulus));
    let residues = (0..modulus)
        .filter(|&r| sets.iter().all(|s| s.contains(r as i64)))
        .collect();
    PeriodicZSet { modulus, residues }
}

/// Result of [`folner_khintchine_z`].
#[derive(Debug, Clone)]
pub struct FolnerReport {
    /// The common difference-set intersection `D = ⋂ (A_i - A_i)`.
    pub intersection: PeriodicZSet,
    /// Finite `F` with `F + D = Z`, smallest found.
    pub f: Vec<i64>,
    /// Verified over a fundamental domain.
    pub verified: bool,
}

/// Finds a finite `F ⊆ [-bound, bound]` with `F + ⋂(A_i - A_i) = Z`,
/// verified over a fundamental domain. Greedy cover first, then exhaustive
/// improvement for small periods.
pub fn folner_khintchine_z(sets: &[PeriodicZSet], bound: i64) -> Result<FolnerReport> {
    if sets.is_empty() {
        return Err(Error::Parse("need at least one periodic set".into()));
    }
    let diffs: Vec<PeriodicZSet> = sets.iter().map(|s| s.difference()).collect();
    let inter = intersect_periodic(&diffs);
    let p = inter.modulus;
    // candidate shifts, deduplicated mod p, smallest |f| representative first
    let mut candidates: Vec<i64> = Vec::new();
    let mut seen = BTreeSet::new();
    let mut order: Vec<i64> = (-bound..=bound).collect();
    order.sort_by_key(|f| (f.abs(), *f));
    for f in order {
        if seen.insert(f.rem_euclid(p as i64)) {
            candidates.push(f);
        }
    }
    let covers = |f: i64| -> BTreeSet<u64> {
        inter
            .residues
            .iter()
            .map(|&d| ((f + d as i64).rem_euclid(p as i64)) as u64)
            .collect()
    };
    // greedy cover of Z/p
    let mut uncovered: BTreeSet<u64> = (0..p).collect();
    let mut greedy: Vec<i64> = Vec::new();
    while !uncovered.is_empty() {
        let best = candidates
            .iter()
            .filter(|f| !greedy.contains(f))
            .max_by_key(|&&f| covers(f).intersection(&uncovered).count())
            .copied();
        let Some(f) = best else { break };
        let gain = covers(f).intersection(&uncovered).count();
        if gain == 0 {
            break;
        }
        for r in covers(f) {
            uncovered.remove(&r);
        }
        greedy.push(f);
    }
    if !uncovered.is_empty() {
        return Ok(FolnerReport {
            intersection: inter,
            f: greedy,
            verified: false,
        });
    }
    // exhaustive improvement for small instances
    let mut best = greedy.clone();
    if p <= 24 && candidates.len() <= 24 {
        for size in 1..best.len() {
            if let Some(f) = exhaustive_cover(&candidates, &covers, p, size) {
                best = f;
                break;
            }
        }
    }
    best.sort_unstable();
    // final verification over a fundamental domain
    let verified = (0..p as i64).all(|x| {
        best.iter()
            .any(|&f| inter.contains(x - f))
    });
    Ok(FolnerReport {
        intersection: inter,
        f: best,
        verified,
    })
}

fn exhaustive_cover(
    candidates: &[i64],
    covers: &impl Fn(i64) -> BTreeSet<u64>,
    p: u64,
    size: usize,
) -> Option<Vec<i64>> {
    let mut chosen = Vec::with_capacity(size);
    fn rec(
        candidates: &[i64],
        covers: &impl Fn(i64) -> BTreeSet<u64>,
        p: u64,
        size: usize,
        start: usize,
        chosen: &mut Vec<i64>,
    ) -> Option<Vec<i64>> {
        if chosen.len() == size {
            let mut covered = BTreeSet::new();
            for &f in chosen.iter() {
                covered.extend(covers(f));
            }
            return (covered.len() as u64 == p).then(|| chosen.clone());
        }
        for i in start..candidates.len() {
            chosen.push(candidates[i]);
            if let Some(hit) = rec(candidates, covers, p, size, i + 1, chosen) {
                return Some(hit);
            }
            chosen.pop();
        }
        None
    }
    rec(candidates, covers, p, size, 0, &mut chosen)
}

/// Result of [`cesaro_mean_harmonicity`].
#[derive(Debug, Clone)]
pub struct CesaroHarmonicityReport {
    pub m: u32,
    /// `lambda_m(phi) = (1/m) Σ_{n=1}^m sigma_n(phi)`.
    pub lambda: Rational,
    /// `(1/m) Σ_n (sigma_1 * sigma_n)(phi)`: the sigma_1-translated mean.
    pub translated: Rational,
    /// `|lambda - translated|`, exact.
    pub defect: Rational,
    /// Telescoping bound `2 |phi|_inf / m`.
    pub bound: Rational,
}

/// Measures how far the Cesàro approximant `lambda_m` is from being left
/// `sigma_1`-harmonic, exactly, together with the telescoping bound.
pub fn cesaro_mean_harmonicity(
    phi: &dyn Fn(&GroupElement) -> Rational,
    sup_norm: &Rational,
    m: u32,
    cap: u128,
) -> Result<CesaroHarmonicityReport> {
    assert!(m >= 1);
    let d = GroupDescriptor::free(2);
    let integrate = |mu: &FiniteMeasure| -> Rational {
        mu.atoms_sorted()
            .into_iter()
            .map(|(g, _)| mu.weight(&g) * phi(&g))
            .sum()
    };
    let s1 = sphere_measure(&d, 1)?;
    let mut lambda = Rational::zero();
    let mut translated = Rational::zero();
    for n in 1..=m {
        if d.sphere_size(n) > cap {
            return Err(Error::CapExceeded {
                what: "sphere enumeration",
                needed: d.sphere_size(n),
                limit: cap,
            });
        }
        let sn = sphere_measure(&d, n)?;
        lambda += integrate(&sn);
        translated += integrate(&s1.convolve(&sn)?);
    }
    let m_rat = Rational::from(BigInt::from(m));
    lambda /= &m_rat;
    translated /= &m_rat;
    let defect = (&lambda - &translated).abs();
    let bound = Rational::from(BigInt::from(2)) * sup_norm / &m_rat;
    Ok(CesaroHarmonicityReport {
        m,
        lambda,
        translated,
        defect,
        bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f2() -> GroupDescriptor {
        GroupDescriptor::free(2)
    }

    fn el(s: &str) -> GroupElement {
        f2().parse_element(s).unwrap()
    }

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(BigInt::from(n), BigInt::from(d))
    }

    const CAP: u128 = 10_000_000;

    #[test]
    fn parity_densities_alternate() {
        let report = sphere_density(&f2(), &SetSpec::Parity(Parity::Even), 10, CAP).unwrap();
        for (i, d) in report.sphere_densities.iter().enumerate() {
            let n = i + 1;
            if n % 2 == 0 {
                assert!(d.is_one());
            } else {
                assert!(d.is_zero());
            }
        }
        // Cesàro mean -> 1/2
        assert_eq!(report.cesaro_mean, q(1, 2));
    }

    #[test]
    fn full_set_density_one() {
        let report = sphere_density(&f2(), &SetSpec::AnnulusUnion(vec![(0, 100)]), 8, CAP).unwrap();
        assert!(report.sphere_densities.iter().all(|d| d.is_one()));
        assert!(report.ball_densities.iter().all(|d| d.is_one()));
    }

    #[test]
    fn sparse_annuli_upper_ball_density() {
        // A = union of B_{r+1} \ B_r over r = 2, 4, 8, 16, 32: at the
        // endpoints n = r+1 the ball density exceeds 2/3
        let spec = SetSpec::AnnulusUnion(vec![(3, 3), (5, 5), (9, 9), (17, 17), (33, 33)]);
        let report = sphere_density(&f2(), &spec, 64, CAP).unwrap();
        for n in [3u32, 5, 9, 17, 33] {
            let density = &report.ball_densities[(n - 1) as usize];
            assert!(
                density > &q(2, 3),
                "ball density at n = {n}: {}",
                numfmt::rational(density)
            );
        }
        // while the Cesàro sphere average stays small (the set is sparse in
        // the large sense)
        assert!(report.cesaro_mean < q(1, 10));
    }

    #[test]
    fn random_density_concentrates() {
        let spec = SetSpec::RandomDensity { p: 0.3, seed: 9 };
        let report = sphere_density(&f2(), &spec, 8, CAP).unwrap();
        let last = numfmt::to_f64(&report.sphere_densities[7]);
        assert!((last - 0.3).abs() < 0.02, "density {last}");
        // membership is deterministic
        let a = spec.contains(&f2(), &el("abAB")).unwrap();
        let b = spec.contains(&f2(), &el("abAB")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn complement_density() {
        // density of the complement = 1 - density, per sphere
        let even = sphere_density(&f2(), &SetSpec::Parity(Parity::Even), 9, CAP).unwrap();
        let odd = sphere_density(&f2(), &SetSpec::Parity(Parity::Odd), 9, CAP).unwrap();
        for i in 0..9 {
            assert_eq!(
                &even.sphere_densities[i] + &odd.sphere_densities[i],
                Rational::one()
            );
        }
    }

    #[test]
    fn sphere_recursion_exact() {
        for n in 1..=8u32 {
            assert!(recursion_check(n).unwrap(), "n = {n}");
        }
    }

    #[test]
    fn sphere_measures_commute() {
        // sigma_1 * sigma_n = sigma_n * sigma_1 (radial measures commute)
        let d = f2();
        for n in 1..=5u32 {
            let sn = sphere_measure(&d, n).unwrap();
            let s1 = sphere_measure(&d, 1).unwrap();
            assert_eq!(sn.convolve(&s1).unwrap(), s1.convolve(&sn).unwrap());
        }
    }

    #[test]
    fn difference_set_of_even_parity() {
        // brute force within B_6; contains e, closed under inversion, and
        // equals the even-length elements of B_6 (x = x e^-1 with e even)
        let d = f2();
        let diff = difference_set(&d, &SetSpec::Parity(Parity::Even), 6, CAP).unwrap();
        assert!(diff.contains(&d.identity()));
        for g in &diff {
            assert_eq!(d.word_length(g).unwrap() % 2, 0);
            assert!(diff.contains(&d.inverse(g).unwrap()));
        }
        let expected: BTreeSet<GroupElement> = d
            .ball(6)
            .unwrap()
            .into_iter()
            .filter(|g| d.word_length(g).unwrap() % 2 == 0)
            .collect();
        assert_eq!(diff, expected);
    }

    #[test]
    fn difference_set_singleton_and_cone() {
        let d = f2();
        let mut single = BTreeSet::new();
        single.insert(d.identity());
        let diff = difference_set(&d, &SetSpec::Explicit(single.clone()), 4, CAP).unwrap();
        assert_eq!(diff, single);

        let cone = SetSpec::PrefixCone(el("a").as_free().unwrap().clone());
        let diff = difference_set(&d, &cone, 4, CAP).unwrap();
        assert!(diff.contains(&d.identity()));
        for g in &diff {
            assert!(diff.contains(&d.inverse(g).unwrap()));
        }
    }

    #[test]
    fn thickness_of_everything() {
        let d = f2();
        let report = thickness_certificate(&d, &SetSpec::AnnulusUnion(vec![(0, 99)]), 4, 6, CAP)
            .unwrap();
        assert_eq!(report.status, ThicknessStatus::Certified);
        // the identity witnesses every k
        for (_, w) in &report.witnesses {
            assert_eq!(w.as_ref(), Some(&d.identity()));
        }
    }

    #[test]
    fn thickness_of_translated_even_differences() {
        // T = F (A A^-1) with A = even parity, F = {e, a}: within B_8 this
        // covers everything B_7 and the even part of S_8, so B_6 g ⊆ T
        // certifies at k = 6 (g = e)
        let d = f2();
        let diff = difference_set(&d, &SetSpec::Parity(Parity::Even), 8, CAP).unwrap();
        let mut t = BTreeSet::new();
        let a = el("a");
        for x in &diff {
            t.insert(x.clone());
            let ax = d.multiply(&a, x).unwrap();
            if d.word_length(&ax).unwrap() <= 8 {
                t.insert(ax);
            }
        }
        let report =
            thickness_certificate(&d, &SetSpec::Explicit(t), 6, 8, CAP).unwrap();
        assert_eq!(report.status, ThicknessStatus::Certified);
        assert_eq!(report.k_star, Some(6));
    }

    #[test]
    fn cone_is_not_thick() {
        // no right translate of B_1 fits inside a prefix cone: the report
        // must say inconclusive (never "false")
        let d = f2();
        let cone = SetSpec::PrefixCone(el("a").as_free().unwrap().clone());
        let report = thickness_certificate(&d, &cone, 2, 5, CAP).unwrap();
        assert_eq!(report.status, ThicknessStatus::Inconclusive);
        // k = 0 is witnessed (any element of the cone), k >= 1 is not
        assert_eq!(report.k_star, Some(0));
        assert!(report.witnesses[1].1.is_none());
    }

    #[test]
    fn folner_single_even_set() {
        let a = PeriodicZSet::new(2, [0]);
        let report = folner_khintchine_z(&[a], 6).unwrap();
        assert!(report.verified);
        assert_eq!(report.intersection.modulus, 2);
        assert_eq!(report.f.len(), 2); // {0, 1} up to shifts
    }

    #[test]
    fn folner_crt_pair() {
        // A1 = 2Z, A2 = 3Z: intersection of differences is 6Z, F covers
        // all residues mod 6
        let report =
            folner_khintchine_z(&[PeriodicZSet::new(2, [0]), PeriodicZSet::new(3, [0])], 8)
                .unwrap();
        assert!(report.verified);
        assert_eq!(report.intersection.modulus, 6);
        assert_eq!(report.intersection.residues.len(), 1);
        assert_eq!(report.f.len(), 6);
        // F + 6Z = Z over a period
        for x in 0..6i64 {
            assert!(report.f.iter().any(|&f| report.intersection.contains(x - f)));
        }
    }

    #[test]
    fn folner_whole_line() {
        let a = PeriodicZSet::new(1, [0]);
        let report = folner_khintchine_z(&[a], 3).unwrap();
        assert!(report.verified);
        assert_eq!(report.f, vec![0]);
    }

    #[test]
    fn folner_shifted_progression() {
        // A = 3Z + 1: A - A = 3Z, same covering problem as 3Z
        let a = PeriodicZSet::parse("3z+1").unwrap();
        let report = folner_khintchine_z(&[a], 5).unwrap();
        assert!(report.verified);
        assert_eq!(report.f.len(), 3);
    }

    #[test]
    fn cesaro_harmonicity_constant() {
        let report =
            cesaro_mean_harmonicity(&|_| Rational::one(), &Rational::one(), 6, CAP).unwrap();
        assert!(report.defect.is_zero());
    }

    #[test]
    fn cesaro_harmonicity_parity_indicator() {
        let d = f2();
        let phi = move |g: &GroupElement| {
            if d.word_length(g).unwrap() % 2 == 0 {
                Rational::one()
            } else {
                Rational::zero()
            }
        };
        for m in 2..=8u32 {
            let report = cesaro_mean_harmonicity(&phi, &Rational::one(), m, CAP).unwrap();
            assert!(report.defect <= report.bound, "m = {m}");
            // exact defect: 1/m for odd m, 0 for even m
            let expect = if m % 2 == 1 {
                q(1, m as i64)
            } else {
                Rational::zero()
            };
            assert_eq!(report.defect, expect, "m = {m}");
        }
    }

    #[test]
    fn cesaro_harmonicity_ball_indicator() {
        let d = f2();
        let phi = move |g: &GroupElement| {
            if d.word_length(g).unwrap() <= 3 {
                Rational::one()
            } else {
                Rational::zero()
            }
        };
        // defect = (1/2)/m for m > 3 (only the sigma_0/sigma_1 boundary
        // terms survive), so it decreases monotonically beyond m = 6
        let mut prev: Option<Rational> = None;
        for m in 6..=9u32 {
            let report = cesaro_mean_harmonicity(&phi, &Rational::one(), m, CAP).unwrap();
            assert!(report.defect <= report.bound);
            assert_eq!(report.defect, q(1, 2 * m as i64));
            if let Some(p) = prev {
                assert!(report.defect < p);
            }
            prev = Some(report.defect.clone());
        }
    }

    #[test]
    fn setspec_parse_round_trip() {
        let d = f2();
        for s in [
            "parity:even",
            "parity:odd",
            "annuli:2-3,8-9",
            "cone:ab",
            "random:0.3:7",
            "explicit:a,ab,B",
        ] {
            let spec = SetSpec::parse(&d, s).unwrap();
            let printed = spec.to_string();
            let reparsed = SetSpec::parse(&d, &printed).unwrap();
            assert_eq!(printed, reparsed.to_string());
        }
        assert!(SetSpec::parse(&d, "bogus:1").is_err());
    }

    #[test]
    fn closed_form_sphere_counts_match_enumeration() {
        let d = f2();
        let specs = [
            SetSpec::Parity(Parity::Odd),
            SetSpec::AnnulusUnion(vec![(2, 4), (6, 6)]),
            SetSpec::PrefixCone(el("ab").as_free().unwrap().clone()),
        ];
        for spec in &specs {
            for n in 0..=7u32 {
                let closed = spec.sphere_count(&d, n, CAP).unwrap();
                let brute = d
                    .sphere(n)
                    .unwrap()
                    .iter()
                    .filter(|g| spec.contains(&d, g).unwrap())
                    .count() as u128;
                assert_eq!(closed, brute, "{spec} at n = {n}");
            }
        }
    }
}
