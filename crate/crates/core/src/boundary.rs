//! An exact model of the Poisson boundary of `(F_r, SRW)`.
//!
//! The boundary of the free group `F_r` is the space of infinite reduced
//! words. The harmonic measure `m` of the simple random walk assigns every
//! cylinder `cyl(w)` (boundary points extending the reduced prefix `w`) the
//! weight
//!
//! ```text
//! m(cyl(w)) = (1/2r) * (1/(2r-1))^(|w|-1)
//! ```
//!
//! so depth-`k` cylinders partition the boundary into `2r(2r-1)^(k-1)` sets
//! of equal measure. Everything here is cylinder arithmetic over exact
//! rationals: the group action on boundary sets, the Radon-Nikodym cocycle
//! and its closed form, the Poisson transform, SAT certificates, the
//! canonical semi-metric, and the rank of the Radon-Nikodym span.
//!
//! Conventions (fixed once, verified against the closed form by tests):
//! [`TreeBoundary::act`] is the genuine left action `A -> {g.xi : xi in A}`,
//! and the cocycle is the density of the translated measure
//! `(g.m)(A) = m(g^-1 A)`, so that on a deep cylinder
//! `sigma(g, cyl(w)) = m(g^-1 cyl(w)) / m(cyl(w))`, which reproduces
//! `(2r-1)^(2(g|xi) - |g|)` with `(g|xi)` the Gromov product (longest common
//! prefix of `g` and `xi`). The cocycle identity then reads
//! `sigma(g1 g2, xi) = sigma(g1, xi) * sigma(g2, g1^-1 xi)`.

use crate::error::{Error, Result};
use crate::group::{free_sphere, letter_at_rank, letter_rank, FreeWord, GroupDescriptor, Letter};
use crate::measure::FiniteMeasure;
use crate::numfmt;
use crate::Rational;
use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use std::collections::BTreeSet;

/// Default cap on how many cylinders a refinement may materialize.
pub const DEFAULT_REFINEMENT_CAP: usize = 2_000_000;

/// The boundary of `F_r` with the SRW harmonic measure. Requires `r >= 2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TreeBoundary {
    rank: u8,
}

impl TreeBoundary {
    pub fn new(rank: u8) -> Self {
        assert!(
            (2..=26).contains(&rank),
            "tree boundary needs free rank >= 2"
        );
        TreeBoundary { rank }
    }

    pub fn rank(&self) -> u8 {
        self.rank
    }

    pub fn descriptor(&self) -> GroupDescriptor {
        GroupDescriptor::free(self.rank)
    }

    fn q(&self) -> u64 {
        2 * self.rank as u64 - 1
    }

    /// Number of cylinders at a given depth: `2r (2r-1)^(k-1)`.
    pub fn cylinder_count(&self, depth: u32) -> u128 {
        assert!(depth >= 1);
        2 * self.rank as u128 * (self.q() as u128).pow(depth - 1)
    }

    /// `m(cyl(w))`, exact.
    pub fn cylinder_measure(&self, w: &FreeWord) -> Rational {
        assert!(!w.is_empty(), "cylinders have nonempty prefixes");
        self.measure_at_depth(w.len() as u32)
    }

    /// Measure of any single cylinder at `depth`.
    pub fn measure_at_depth(&self, depth: u32) -> Rational {
        Rational::new(
            BigInt::one(),
            BigInt::from(2 * self.rank as u64) * BigInt::from(self.q()).pow(depth - 1),
        )
    }

    /// All depth-`k` cylinder prefixes in canonical (lexicographic) order.
    pub fn cylinders(&self, depth: u32) -> Vec<FreeWord> {
        assert!(depth >= 1);
        free_sphere(self.rank, depth)
    }

    /// Index of a depth-`k` cylinder in [`Self::cylinders`] order.
    pub fn cylinder_index(&self, w: &FreeWord) -> usize {
        let letters = w.letters();
        assert!(!letters.is_empty());
        let q = self.q() as usize;
        let k = letters.len();
        let mut idx = letter_rank(letters[0]);
        for i in 1..k {
            idx = idx * q + successor_rank(letters[i - 1], letters[i]);
        }
        idx
    }

    /// Cylinder prefix at a given index and depth (inverse of
    /// [`Self::cylinder_index`]).
    pub fn cylinder_at(&self, depth: u32, index: usize) -> FreeWord {
        let q = self.q() as usize;
        let k = depth as usize;
        let mut digits = vec![0usize; k];
        let mut rem = index;
        for i in (1..k).rev() {
            digits[i] = rem % q;
            rem /= q;
        }
        digits[0] = rem;
        let mut letters: Vec<Letter> = Vec::with_capacity(k);
        letters.push(letter_at_rank(digits[0]));
        for i in 1..k {
            letters.push(successor_at_rank(letters[i - 1], digits[i]));
        }
        FreeWord::from_letters(&letters)
    }

    /// Image cylinder of `g . cyl(w)`; needs `|w| > |g|` so that at least one
    /// letter of `w` survives the cancellation.
    pub fn act_cylinder(&self, g: &FreeWord, w: &FreeWord) -> Result<FreeWord> {
        if w.len() <= g.len() {
            return Err(Error::DepthTooShallow {
                needed: g.len() as u32,
                have: w.len() as u32,
            });
        }
        Ok(g.mul(w))
    }

    /// Left action on a boundary set, refining first if the set is too
    /// shallow for `g`.
    pub fn act(&self, g: &FreeWord, set: &BoundarySet, cap: usize) -> Result<BoundarySet> {
        let needed = g.len() as u32 + 1;
        let base = if set.depth < needed {
            set.refine(self, needed, cap)?
        } else {
            set.clone()
        };
        let mut images: Vec<FreeWord> = Vec::with_capacity(base.cylinders.len());
        let mut max_depth = 0u32;
        for w in &base.cylinders {
            let img = self.act_cylinder(g, w)?;
            max_depth = max_depth.max(img.len() as u32);
            images.push(img);
        }
        // bring the (pairwise disjoint) image cylinders to a common depth
        let mut out = BTreeSet::new();
        let mut count = 0usize;
        for img in images {
            let extra = max_depth - img.len() as u32;
            count += (self.q() as usize).pow(extra);
            if count > cap {
                return Err(Error::CapExceeded {
                    what: "boundary set refinement",
                    needed: count as u128,
                    limit: cap as u128,
                });
            }
            extend_word(self.rank, &img, extra, &mut out);
        }
        Ok(BoundarySet {
            depth: max_depth,
            cylinders: out,
        })
    }

    /// Radon-Nikodym cocycle evaluated on a cylinder:
    /// `sigma(g, .)|cyl(w) = m(g^-1 cyl(w)) / m(cyl(w))`, exact.
    /// Requires `|w| > |g|` (the cocycle is constant on such cylinders).
    pub fn rn_derivative(&self, g: &FreeWord, w: &FreeWord) -> Result<Rational> {
        let preimage = self.act_cylinder(&g.inverse(), w)?;
        Ok(self.cylinder_measure(&preimage) / self.cylinder_measure(w))
    }

    /// The closed form `(2r-1)^(2(g|w) - |g|)`, for cross-checking.
    pub fn rn_closed_form(&self, g: &FreeWord, w: &FreeWord) -> Rational {
        let lcp = g.common_prefix_len(w) as i64;
        let e = 2 * lcp - g.len() as i64;
        power_rational(self.q(), e)
    }

    /// Verifies the multiplicative cocycle identity
    /// `sigma(g1 g2, xi) = sigma(g1, xi) * sigma(g2, g1^-1 xi)` exactly on
    /// every depth-`k` cylinder. `k` must exceed `|g1| + |g2|`.
    pub fn cocycle_identity_check(&self, g1: &FreeWord, g2: &FreeWord, depth: u32) -> Result<bool> {
        if depth as usize <= g1.len() + g2.len() {
            return Err(Error::DepthTooShallow {
                needed: (g1.len() + g2.len()) as u32,
                have: depth,
            });
        }
        let g12 = g1.mul(g2);
        for w in self.cylinders(depth) {
            let lhs = self.rn_derivative(&g12, &w)?;
            let translated = self.act_cylinder(&g1.inverse(), &w)?;
            let rhs = self.rn_derivative(g1, &w)? * self.rn_derivative(g2, &translated)?;
            if lhs != rhs {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Verifies `∫ sigma(g, .) dμ^{*n}(g) = 1` exactly on every depth-`k`
    /// cylinder, for the SRW measure. `k` must exceed `n`.
    pub fn harmonicity_check(&self, n: u32, depth: u32) -> Result<bool> {
        if depth <= n {
            return Err(Error::DepthTooShallow {
                needed: n,
                have: depth,
            });
        }
        let mu = FiniteMeasure::srw(self.descriptor());
        let power = mu.convolution_power(n)?;
        let atoms: Vec<(FreeWord, Rational)> = power
            .atoms_sorted()
            .into_iter()
            .map(|(g, _)| {
                let wt = power.weight(&g);
                (g.as_free().expect("free descriptor").clone(), wt)
            })
            .collect();
        for w in self.cylinders(depth) {
            let mut total = Rational::zero();
            for (g, wt) in &atoms {
                total += wt * self.rn_derivative(g, &w)?;
            }
            if !total.is_one() {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Canonical semi-metric `rho(g) = ess sup |log sigma(g, .)|`, computed
    /// by scanning all cylinders of depth `|g| + 1`.
    pub fn canonical_semimetric(&self, g: &FreeWord) -> f64 {
        if g.is_empty() {
            return 0.0;
        }
        let depth = g.len() as u32 + 1;
        let lnq = (self.q() as f64).ln();
        let mut best = 0.0f64;
        for w in self.cylinders(depth) {
            let lcp = g.common_prefix_len(&w) as i64;
            let e = (2 * lcp - g.len() as i64).abs() as f64 * lnq;
            if e > best {
                best = e;
            }
        }
        best
    }

    /// Poisson transform `P phi(g) = ∫ phi(g^-1 xi) dm(xi)`, exact.
    pub fn poisson_transform(&self, phi: &CylinderFunction, g: &FreeWord) -> Result<Rational> {
        let needed = g.len() as u32 + 1;
        let phi = if phi.depth < needed {
            phi.refine(self, needed)?
        } else {
            phi.clone()
        };
        // phi(g^-1 xi) integrates to sum of phi(w) * m(g cyl(w))
        let mut total = Rational::zero();
        for (w, value) in phi.iter_words(self) {
            if value.is_zero() {
                continue;
            }
            let img = self.act_cylinder(g, &w)?;
            total += value * self.cylinder_measure(&img);
        }
        Ok(total)
    }

    /// SAT certificate: a group element pushing `cyl(w)` to measure at least
    /// `1 - (1/2r)(1/(2r-1))^(n-1)`.
    ///
    /// The translator is `g_n = s^n w^-1` where `s` is the first generator
    /// letter that differs from the last letter of `w` and from its inverse;
    /// `w^-1` maps `cyl(w)` onto the complement of one letter cylinder and
    /// `s^n` then shrinks that complement's image complement geometrically.
    pub fn sat_certificate(&self, w: &FreeWord, n: u32) -> Result<SatCertificate> {
        assert!(!w.is_empty());
        let last = *w.letters().last().expect("nonempty");
        let s = (0..2 * self.rank as usize)
            .map(letter_at_rank)
            .find(|&l| l != last && l != -last)
            .expect("rank >= 2 leaves a free letter");
        let mut letters = vec![s; n as usize];
        letters.extend(w.inverse().letters());
        let translator = FreeWord::from_letters(&letters);
        let set = BoundarySet::cylinder(w.clone());
        let image = self.act(&translator, &set, DEFAULT_REFINEMENT_CAP)?;
        let measure = image.measure(self);
        let bound = Rational::one()
            - Rational::new(
                BigInt::one(),
                BigInt::from(2 * self.rank as u64),
            ) * power_rational(self.q(), 1 - n as i64);
        Ok(SatCertificate {
            translator,
            measure,
            bound,
        })
    }

    /// Rank over the rationals of `{sigma(g, .) : g in B_R}` viewed as
    /// vectors over depth-`k` cylinders, against the full dimension
    /// `2r(2r-1)^(k-1)`. Uses fraction-free (Bareiss) elimination.
    pub fn rn_span_rank(&self, radius: u32, depth: u32) -> Result<RankReport> {
        if depth <= radius {
            return Err(Error::DepthTooShallow {
                needed: radius,
                have: depth,
            });
        }
        let ball = self.descriptor().ball(radius)?;
        let cylinders = self.cylinders(depth);
        // scale row g by (2r-1)^{|g|}: entries (2r-1)^{2 lcp(g, w)}, integers
        let q = BigInt::from(self.q());
        let matrix: Vec<Vec<BigInt>> = ball
            .iter()
            .map(|g| {
                let g = g.as_free().expect("free descriptor");
                cylinders
                    .iter()
                    .map(|w| q.pow(2 * g.common_prefix_len(w) as u32))
                    .collect()
            })
            .collect();
        let rank = bareiss_rank(matrix);
        Ok(RankReport {
            radius,
            depth,
            rank,
            dimension: self.cylinder_count(depth),
        })
    }

    /// CSV table `g,cylinder,num,den` of the cocycle over a ball and depth.
    pub fn rn_table_csv(&self, radius: u32, depth: u32) -> Result<String> {
        let mut out = String::from("g,cylinder,num,den\n");
        for g in self.descriptor().ball(radius)? {
            let g = g.as_free()?;
            for w in self.cylinders(depth) {
                let sigma = self.rn_derivative(g, &w)?;
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    g,
                    w,
                    sigma.numer(),
                    sigma.denom()
                ));
            }
        }
        Ok(out)
    }
}

fn extend_word(rank: u8, w: &FreeWord, extra: u32, out: &mut BTreeSet<FreeWord>) {
    if extra == 0 {
        out.insert(w.clone());
        return;
    }
    let last = *w.letters().last().expect("cylinder prefixes are nonempty");
    for r in 0..2 * rank as usize {
        let l = letter_at_rank(r);
        if l == -last {
            continue;
        }
        let mut child = w.clone();
        child.push_reduce(l);
        extend_word(rank, &child, extra - 1, out);
    }
}

/// Position of `cur` among the `2r-1` letters allowed after `prev`.
fn successor_rank(prev: Letter, cur: Letter) -> usize {
    debug_assert!(cur != -prev);
    let r = letter_rank(cur);
    let skip = letter_rank(-prev);
    if r > skip {
        r - 1
    } else {
        r
    }
}

fn successor_at_rank(prev: Letter, rank_pos: usize) -> Letter {
    let skip = letter_rank(-prev);
    let r = if rank_pos >= skip {
        rank_pos + 1
    } else {
        rank_pos
    };
    letter_at_rank(r)
}

/// `(q)^e` as an exact rational, for integer exponents of either sign.
fn power_rational(q: u64, e: i64) -> Rational {
    let p = BigInt::from(q).pow(e.unsigned_abs() as u32);
    if e >= 0 {
        Rational::from(p)
    } else {
        Rational::new(BigInt::one(), p)
    }
}

/// A finite disjoint union of cylinders at a common depth.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundarySet {
    depth: u32,
    cylinders: BTreeSet<FreeWord>,
}

impl BoundarySet {
    /// The set consisting of a single cylinder.
    pub fn cylinder(w: FreeWord) -> Self {
        assert!(!w.is_empty());
        let depth = w.len() as u32;
        let mut cylinders = BTreeSet::new();
        cylinders.insert(w);
        BoundarySet { depth, cylinders }
    }

    /// A union of cylinders, all of the same depth.
    pub fn union(words: impl IntoIterator<Item = FreeWord>) -> Result<Self> {
        let cylinders: BTreeSet<FreeWord> = words.into_iter().collect();
        let mut depths = cylinders.iter().map(|w| w.len() as u32);
        let depth = depths
            .next()
            .ok_or_else(|| Error::InvalidElement("empty boundary set".into()))?;
        if depths.any(|d| d != depth) {
            return Err(Error::InvalidElement(
                "boundary set cylinders must share a depth".into(),
            ));
        }
        Ok(BoundarySet { depth, cylinders })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.cylinders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cylinders.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &FreeWord> {
        self.cylinders.iter()
    }

    pub fn contains(&self, w: &FreeWord) -> bool {
        self.cylinders.contains(w)
    }

    /// Exact measure: count times the per-cylinder measure at this depth.
    pub fn measure(&self, boundary: &TreeBoundary) -> Rational {
        Rational::from(BigInt::from(self.cylinders.len() as u64))
            * boundary.measure_at_depth(self.depth)
    }

    /// Refines every cylinder to `depth`, preserving the set.
    pub fn refine(&self, boundary: &TreeBoundary, depth: u32, cap: usize) -> Result<Self> {
        assert!(depth >= self.depth);
        let extra = depth - self.depth;
        let factor = (boundary.q() as u128).pow(extra);
        let needed = self.cylinders.len() as u128 * factor;
        if needed > cap as u128 {
            return Err(Error::CapExceeded {
                what: "boundary set refinement",
                needed,
                limit: cap as u128,
            });
        }
        let mut out = BTreeSet::new();
        for w in &self.cylinders {
            extend_word(boundary.rank, w, extra, &mut out);
        }
        Ok(BoundarySet {
            depth,
            cylinders: out,
        })
    }
}

/// Result of [`TreeBoundary::sat_certificate`].
#[derive(Debug, Clone)]
pub struct SatCertificate {
    pub translator: FreeWord,
    pub measure: Rational,
    pub bound: Rational,
}

impl SatCertificate {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "translator": self.translator.to_string(),
            "measure": numfmt::rational(&self.measure),
            "bound": numfmt::rational(&self.bound),
            "satisfied": self.measure >= self.bound,
        })
    }
}

/// Result of [`TreeBoundary::rn_span_rank`].
#[derive(Debug, Clone)]
pub struct RankReport {
    pub radius: u32,
    pub depth: u32,
    pub rank: usize,
    /// Full dimension `2r(2r-1)^(k-1)` of depth-`k` step functions.
    pub dimension: u128,
}

/// Fraction-free Gaussian elimination rank over the integers.
fn bareiss_rank(mut m: Vec<Vec<BigInt>>) -> usize {
    let rows = m.len();
    if rows == 0 {
        return 0;
    }
    let cols = m[0].len();
    let mut rank = 0usize;
    let mut row = 0usize;
    let mut prev = BigInt::one();
    for col in 0..cols {
        let Some(p) = (row..rows).find(|&i| !m[i][col].is_zero()) else {
            continue;
        };
        m.swap(row, p);
        for i in row + 1..rows {
            for j in col + 1..cols {
                m[i][j] = (&m[row][col] * &m[i][j] - &m[i][col] * &m[row][j]) / &prev;
            }
            m[i][col] = BigInt::zero();
        }
        prev = m[row][col].clone();
        rank += 1;
        row += 1;
        if row == rows {
            break;
        }
    }
    rank
}

/// A depth-`k` step function on the boundary: one rational value per
/// depth-`k` cylinder, indexed in canonical cylinder order. The computable
/// stand-in for `L^inf(B, m)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CylinderFunction {
    rank: u8,
    depth: u32,
    values: Vec<Rational>,
}

impl CylinderFunction {
    pub fn constant(boundary: &TreeBoundary, depth: u32, value: Rational) -> Self {
        let n = boundary.cylinder_count(depth) as usize;
        CylinderFunction {
            rank: boundary.rank,
            depth,
            values: vec![value; n],
        }
    }

    /// Indicator of a single cylinder, at the cylinder's own depth.
    pub fn indicator(boundary: &TreeBoundary, w: &FreeWord) -> Self {
        let depth = w.len() as u32;
        let mut f = Self::constant(boundary, depth, Rational::zero());
        f.values[boundary.cylinder_index(w)] = Rational::one();
        f
    }

    /// Builds a function from a rule on depth-`k` prefixes.
    pub fn from_fn(
        boundary: &TreeBoundary,
        depth: u32,
        mut f: impl FnMut(&FreeWord) -> Rational,
    ) -> Self {
        let values = boundary.cylinders(depth).iter().map(|w| f(w)).collect();
        CylinderFunction {
            rank: boundary.rank,
            depth,
            values,
        }
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn values(&self) -> &[Rational] {
        &self.values
    }

    /// Value on the cylinder containing any word extending the depth; the
    /// argument must be at least as long as the depth.
    pub fn value_at(&self, boundary: &TreeBoundary, w: &FreeWord) -> Result<&Rational> {
        if w.len() < self.depth as usize {
            return Err(Error::DepthTooShallow {
                needed: self.depth,
                have: w.len() as u32,
            });
        }
        let prefix = w.prefix(self.depth as usize);
        Ok(&self.values[boundary.cylinder_index(&prefix)])
    }

    /// Pairs `(cylinder word, value)` in canonical order.
    pub fn iter_words<'a>(
        &'a self,
        boundary: &TreeBoundary,
    ) -> impl Iterator<Item = (FreeWord, &'a Rational)> + 'a {
        boundary
            .cylinders(self.depth)
            .into_iter()
            .zip(self.values.iter())
    }

    /// Represents the same function at a finer depth. All integrals against
    /// `m` are preserved exactly.
    pub fn refine(&self, boundary: &TreeBoundary, depth: u32) -> Result<Self> {
        assert!(depth >= self.depth);
        let n = boundary.cylinder_count(depth);
        if n > DEFAULT_REFINEMENT_CAP as u128 {
            return Err(Error::CapExceeded {
                what: "cylinder function refinement",
                needed: n,
                limit: DEFAULT_REFINEMENT_CAP as u128,
            });
        }
        let q = boundary.q() as usize;
        let factor = q.pow(depth - self.depth);
        let mut values = Vec::with_capacity(self.values.len() * factor);
        for v in &self.values {
            for _ in 0..factor {
                values.push(v.clone());
            }
        }
        Ok(CylinderFunction {
            rank: self.rank,
            depth,
            values,
        })
    }

    /// `∫ phi dm`, exact.
    pub fn integral(&self, boundary: &TreeBoundary) -> Rational {
        let m = boundary.measure_at_depth(self.depth);
        let sum: Rational = self.values.iter().sum();
        sum * m
    }

    /// `max |phi|`.
    pub fn sup_norm(&self) -> Rational {
        self.values
            .iter()
            .map(|v| v.abs())
            .max()
            .unwrap_or_else(Rational::zero)
    }

    pub fn add(&self, other: &CylinderFunction, boundary: &TreeBoundary) -> Result<Self> {
        self.zip_with(other, boundary, |a, b| a + b)
    }

    pub fn sub(&self, other: &CylinderFunction, boundary: &TreeBoundary) -> Result<Self> {
        self.zip_with(other, boundary, |a, b| a - b)
    }

    fn zip_with(
        &self,
        other: &CylinderFunction,
        boundary: &TreeBoundary,
        f: impl Fn(&Rational, &Rational) -> Rational,
    ) -> Result<Self> {
        let depth = self.depth.max(other.depth);
        let a = self.refine(boundary, depth)?;
        let b = other.refine(boundary, depth)?;
        Ok(CylinderFunction {
            rank: self.rank,
            depth,
            values: a.values.iter().zip(b.values.iter()).map(|(x, y)| f(x, y)).collect(),
        })
    }

    pub fn scale(&self, c: &Rational) -> Self {
        CylinderFunction {
            rank: self.rank,
            depth: self.depth,
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn add_constant(&self, c: &Rational) -> Self {
        CylinderFunction {
            rank: self.rank,
            depth: self.depth,
            values: self.values.iter().map(|v| v + c).collect(),
        }
    }
}
