//! Group elements, free reduction, word metrics and ball/sphere enumeration
//! for free groups `F_r` and integer lattices `Z^d`.
//!
//! Free-group elements are stored as packed arrays of signed generator
//! letters, reduced eagerly at construction, so equality and hashing are
//! structural. Letter `+k` is the k-th generator, `-k` its inverse
//! (1-indexed). The canonical letter order is `a < a^-1 < b < b^-1 < ...`,
//! which fixes a deterministic enumeration order for spheres and balls.
//!
//! Text encoding: generators are lowercase letters `a, b, c, ...`, inverses
//! the corresponding uppercase letters, and `e` denotes the identity.
//! Lattice points print as comma-separated integers in parentheses, e.g.
//! `(2,-1)`.

use crate::error::{Error, Result};
use crate::Rational;
use num_bigint::BigInt;
use smallvec::SmallVec;
use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

/// Writes Debug through Display; reduced words read better unescaped.
macro_rules! fmt_debug_via_display {
    () => {
        fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            fmt::Display::fmt(self, f)
        }
    };
}

/// Signed generator letter of a free group: `+k` = generator k, `-k` = its
/// inverse (1-indexed). Zero is never a valid letter.
pub type Letter = i8;

/// Rank position of a letter in the canonical order `a < A < b < B < ...`.
#[inline]
pub fn letter_rank(l: Letter) -> usize {
    debug_assert!(l != 0);
    (l.unsigned_abs() as usize - 1) * 2 + usize::from(l < 0)
}

/// Letter at a given rank position, inverse of [`letter_rank`].
#[inline]
pub fn letter_at_rank(rank: usize) -> Letter {
    let gen = (rank / 2 + 1) as i8;
    if rank % 2 == 0 {
        gen
    } else {
        -gen
    }
}

/// A reduced word in a free group.
///
/// The invariant `w[i+1] != -w[i]` holds at all times; constructors reduce
/// eagerly. The empty word is the identity.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct FreeWord(SmallVec<[Letter; 16]>);

impl FreeWord {
    pub fn identity() -> Self {
        FreeWord(SmallVec::new())
    }

    /// Builds a word from raw letters, performing free reduction.
    pub fn from_letters(letters: &[Letter]) -> Self {
        let mut w = FreeWord(SmallVec::with_capacity(letters.len()));
        for &l in letters {
            w.push_reduce(l);
        }
        w
    }

    /// Appends one letter on the right, cancelling if it inverts the last.
    #[inline]
    pub fn push_reduce(&mut self, l: Letter) {
        debug_assert!(l != 0);
        if self.0.last() == Some(&-l) {
            self.0.pop();
        } else {
            self.0.push(l);
        }
    }

    #[inline]
    pub fn letters(&self) -> &[Letter] {
        &self.0
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Group multiplication with free reduction at the seam.
    pub fn mul(&self, rhs: &FreeWord) -> FreeWord {
        let mut out = self.clone();
        for &l in rhs.letters() {
            out.push_reduce(l);
        }
        out
    }

    pub fn inverse(&self) -> FreeWord {
        FreeWord(self.0.iter().rev().map(|&l| -l).collect())
    }

    /// Length of the longest common prefix of two reduced words.
    pub fn common_prefix_len(&self, other: &FreeWord) -> usize {
        self.0
            .iter()
            .zip(other.0.iter())
            .take_while(|(a, b)| a == b)
            .count()
    }

    /// True if `self` is a prefix of `other`.
    pub fn is_prefix_of(&self, other: &FreeWord) -> bool {
        self.len() <= other.len() && self.common_prefix_len(other) == self.len()
    }

    /// The first `n` letters as a word (must be within length).
    pub fn prefix(&self, n: usize) -> FreeWord {
        FreeWord(SmallVec::from_slice(&self.0[..n]))
    }

    /// Canonical order: shortlex with the letter order `a < A < b < B < ...`.
    pub fn shortlex_cmp(&self, other: &FreeWord) -> std::cmp::Ordering {
        self.len().cmp(&other.len()).then_with(|| {
            self.0
                .iter()
                .map(|&l| letter_rank(l))
                .cmp(other.0.iter().map(|&l| letter_rank(l)))
        })
    }
}

impl PartialOrd for FreeWord {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for FreeWord {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.shortlex_cmp(other)
    }
}

impl fmt::Display for FreeWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return write!(f, "e");
        }
        for &l in self.letters() {
            let c = (b'a' + (l.unsigned_abs() - 1)) as char;
            if l > 0 {
                write!(f, "{c}")?;
            } else {
                write!(f, "{}", c.to_ascii_uppercase())?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for FreeWord {
    fmt_debug_via_display!();
}

/// A point of the integer lattice `Z^d`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct LatticePoint(SmallVec<[i64; 4]>);

impl LatticePoint {
    pub fn new(coords: &[i64]) -> Self {
        LatticePoint(SmallVec::from_slice(coords))
    }

    pub fn zero(dim: usize) -> Self {
        LatticePoint(smallvec::smallvec![0; dim])
    }

    #[inline]
    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn add(&self, rhs: &LatticePoint) -> LatticePoint {
        LatticePoint(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }

    pub fn neg(&self) -> LatticePoint {
        LatticePoint(self.0.iter().map(|a| -a).collect())
    }

    pub fn l1_norm(&self) -> u64 {
        self.0.iter().map(|a| a.unsigned_abs()).sum()
    }
}

impl fmt::Display for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Debug for LatticePoint {
    fmt_debug_via_display!();
}

/// An element of one of the supported groups: the state of a random walk.
#[derive(Clone, PartialEq, Eq, Hash)]
pub enum GroupElement {
    Free(FreeWord),
    Lattice(LatticePoint),
}

impl GroupElement {
    pub fn free(letters: &[Letter]) -> Self {
        GroupElement::Free(FreeWord::from_letters(letters))
    }

    pub fn lattice(coords: &[i64]) -> Self {
        GroupElement::Lattice(LatticePoint::new(coords))
    }

    pub fn as_free(&self) -> Result<&FreeWord> {
        match self {
            GroupElement::Free(w) => Ok(w),
            GroupElement::Lattice(_) => Err(Error::UnsupportedDescriptor("free group")),
        }
    }

    pub fn as_lattice(&self) -> Result<&LatticePoint> {
        match self {
            GroupElement::Lattice(p) => Ok(p),
            GroupElement::Free(_) => Err(Error::UnsupportedDescriptor("integer lattice")),
        }
    }

    /// Deterministic total order used when emitting measures and reports:
    /// shortlex for free words, (norm, coordinates) for lattice points.
    /// Also exposed as the `Ord` instance.
    pub fn canonical_cmp(&self, other: &GroupElement) -> std::cmp::Ordering {
        use std::cmp::Ordering;
        match (self, other) {
            (GroupElement::Free(a), GroupElement::Free(b)) => a.shortlex_cmp(b),
            (GroupElement::Lattice(a), GroupElement::Lattice(b)) => a
                .l1_norm()
                .cmp(&b.l1_norm())
                .then_with(|| a.coords().cmp(b.coords())),
            (GroupElement::Free(_), GroupElement::Lattice(_)) => Ordering::Less,
            (GroupElement::Lattice(_), GroupElement::Free(_)) => Ordering::Greater,
        }
    }
}

impl PartialOrd for GroupElement {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for GroupElement {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.canonical_cmp(other)
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupElement::Free(w) => w.fmt(f),
            GroupElement::Lattice(p) => p.fmt(f),
        }
    }
}

impl fmt::Debug for GroupElement {
    fmt_debug_via_display!();
}

/// Default cap on the number of elements materialized by a single sphere or
/// ball enumeration.
pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000_000;

/// Which group we are working in, together with its standard symmetric
/// generating set (2r letters for `F_r`, 2d unit vectors for `Z^d`).
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum GroupDescriptor {
    FreeGroup { rank: u8 },
    IntegerLattice { dim: u8 },
}

impl GroupDescriptor {
    pub fn free(rank: u8) -> Self {
        assert!(rank >= 1 && rank <= 26, "free rank must be in 1..=26");
        GroupDescriptor::FreeGroup { rank }
    }

    pub fn lattice(dim: u8) -> Self {
        assert!(dim >= 1, "lattice dimension must be >= 1");
        GroupDescriptor::IntegerLattice { dim }
    }

    pub fn identity(&self) -> GroupElement {
        match self {
            GroupDescriptor::FreeGroup { .. } => GroupElement::Free(FreeWord::identity()),
            GroupDescriptor::IntegerLattice { dim } => {
                GroupElement::Lattice(LatticePoint::zero(*dim as usize))
            }
        }
    }

    /// The standard symmetric generating set, in canonical order.
    ///
    /// Free groups: `a, a^-1, b, b^-1, ...`. Lattices: `+e1, -e1, +e2, ...`.
    pub fn generators(&self) -> Vec<GroupElement> {
        match self {
            GroupDescriptor::FreeGroup { rank } => (0..2 * *rank as usize)
                .map(|r| GroupElement::Free(FreeWord::from_letters(&[letter_at_rank(r)])))
                .collect(),
            GroupDescriptor::IntegerLattice { dim } => {
                let d = *dim as usize;
                let mut out = Vec::with_capacity(2 * d);
                for i in 0..d {
                    for s in [1i64, -1] {
                        let mut c = vec![0i64; d];
                        c[i] = s;
                        out.push(GroupElement::lattice(&c));
                    }
                }
                out
            }
        }
    }

    /// True if the element is structurally valid for this descriptor.
    pub fn contains(&self, g: &GroupElement) -> bool {
        match (self, g) {
            (GroupDescriptor::FreeGroup { rank }, GroupElement::Free(w)) => {
                w.letters().iter().all(|l| l.unsigned_abs() <= *rank)
            }
            (GroupDescriptor::IntegerLattice { dim }, GroupElement::Lattice(p)) => {
                p.dim() == *dim as usize
            }
            _ => false,
        }
    }

    fn check(&self, g: &GroupElement) -> Result<()> {
        if self.contains(g) {
            Ok(())
        } else {
            Err(Error::DescriptorMismatch)
        }
    }

    /// Group multiplication; canonical reduced form for free groups.
    pub fn multiply(&self, g: &GroupElement, h: &GroupElement) -> Result<GroupElement> {
        self.check(g)?;
        self.check(h)?;
        Ok(match (g, h) {
            (GroupElement::Free(a), GroupElement::Free(b)) => GroupElement::Free(a.mul(b)),
            (GroupElement::Lattice(a), GroupElement::Lattice(b)) => {
                GroupElement::Lattice(a.add(b))
            }
            _ => unreachable!("checked above"),
        })
    }

    pub fn inverse(&self, g: &GroupElement) -> Result<GroupElement> {
        self.check(g)?;
        Ok(match g {
            GroupElement::Free(w) => GroupElement::Free(w.inverse()),
            GroupElement::Lattice(p) => GroupElement::Lattice(p.neg()),
        })
    }

    /// Word length with respect to the standard generating set: reduced word
    /// length for free groups, the l1 norm for lattices.
    pub fn word_length(&self, g: &GroupElement) -> Result<u64> {
        self.check(g)?;
        Ok(match g {
            GroupElement::Free(w) => w.len() as u64,
            GroupElement::Lattice(p) => p.l1_norm(),
        })
    }

    /// Exact size of the sphere of radius `n` (closed form, no enumeration).
    pub fn sphere_size(&self, n: u32) -> u128 {
        match self {
            GroupDescriptor::FreeGroup { rank } => {
                let r = *rank as u128;
                match n {
                    0 => 1,
                    _ => 2 * r * (2 * r - 1).pow(n - 1),
                }
            }
            GroupDescriptor::IntegerLattice { dim } => {
                let d = *dim as u32;
                if n == 0 {
                    return 1;
                }
                // choose k nonzero coordinates, signs, and a composition of n
                let mut total: u128 = 0;
                for k in 1..=d.min(n) {
                    total += binomial(d, k) * binomial(n - 1, k - 1) * (1u128 << k);
                }
                total
            }
        }
    }

    /// Exact size of the ball of radius `n`.
    pub fn ball_size(&self, n: u32) -> u128 {
        (0..=n).map(|k| self.sphere_size(k)).sum()
    }

    /// Exact size of the n-fold product set `S^n` of the standard generators.
    ///
    /// Since `S` is symmetric and every multiplication flips word-length
    /// parity, `S^n` is exactly the set of elements of length `<= n` with
    /// length congruent to `n` mod 2.
    pub fn product_set_size(&self, n: u32) -> u128 {
        (0..=n)
            .filter(|k| k % 2 == n % 2)
            .map(|k| self.sphere_size(k))
            .sum()
    }

    /// Exact enumeration of the sphere of radius `n`, in canonical order.
    ///
    /// Free groups: depth-first lexicographic over letters. Lattices:
    /// lexicographic by coordinate vector.
    pub fn sphere(&self, n: u32) -> Result<Vec<GroupElement>> {
        self.sphere_capped(n, DEFAULT_ENUMERATION_CAP)
    }

    pub fn sphere_capped(&self, n: u32, cap: u128) -> Result<Vec<GroupElement>> {
        let size = self.sphere_size(n);
        if size > cap {
            return Err(Error::CapExceeded {
                what: "sphere enumeration",
                needed: size,
                limit: cap,
            });
        }
        Ok(match self {
            GroupDescriptor::FreeGroup { rank } => free_sphere(*rank, n)
                .into_iter()
                .map(GroupElement::Free)
                .collect(),
            GroupDescriptor::IntegerLattice { dim } => {
                let mut out = Vec::with_capacity(size as usize);
                let mut coords = vec![0i64; *dim as usize];
                lattice_sphere_rec(*dim as usize, 0, n as i64, &mut coords, &mut out);
                out
            }
        })
    }

    /// Ball of radius `n`: spheres of increasing radius, each in canonical
    /// order.
    pub fn ball(&self, n: u32) -> Result<Vec<GroupElement>> {
        self.ball_capped(n, DEFAULT_ENUMERATION_CAP)
    }

    pub fn ball_capped(&self, n: u32, cap: u128) -> Result<Vec<GroupElement>> {
        let size = self.ball_size(n);
        if size > cap {
            return Err(Error::CapExceeded {
                what: "ball enumeration",
                needed: size,
                limit: cap,
            });
        }
        let mut out = Vec::with_capacity(size as usize);
        for k in 0..=n {
            out.extend(self.sphere_capped(k, cap)?);
        }
        Ok(out)
    }

    /// Gromov product `(g|h) = (|g| + |h| - |g^-1 h|) / 2` at the identity,
    /// with respect to the standard word metric. Free groups only; there it
    /// equals the longest-common-prefix length of the reduced words.
    pub fn gromov_product(&self, g: &GroupElement, h: &GroupElement) -> Result<Rational> {
        if !matches!(self, GroupDescriptor::FreeGroup { .. }) {
            return Err(Error::UnsupportedDescriptor("free group"));
        }
        self.check(g)?;
        self.check(h)?;
        let (gw, hw) = (g.as_free()?, h.as_free()?);
        let cross = gw.inverse().mul(hw).len();
        let num = BigInt::from(gw.len() + hw.len()) - BigInt::from(cross);
        Ok(Rational::new(num, BigInt::from(2)))
    }

    /// Parses the textual element encoding (`"abA"`, `"e"`, `"(2,-1)"`).
    pub fn parse_element(&self, s: &str) -> Result<GroupElement> {
        let s = s.trim();
        let g = match self {
            GroupDescriptor::FreeGroup { rank } => {
                if s == "e" {
                    return Ok(self.identity());
                }
                let mut letters = Vec::with_capacity(s.len());
                for c in s.chars() {
                    let l: Letter = if c.is_ascii_lowercase() {
                        (c as u8 - b'a' + 1) as i8
                    } else if c.is_ascii_uppercase() {
                        -(((c as u8 - b'A') + 1) as i8)
                    } else {
                        return Err(Error::Parse(format!("bad letter {c:?} in word {s:?}")));
                    };
                    if l.unsigned_abs() > *rank {
                        return Err(Error::Parse(format!(
                            "letter {c:?} outside rank {rank} in {s:?}"
                        )));
                    }
                    letters.push(l);
                }
                GroupElement::free(&letters)
            }
            GroupDescriptor::IntegerLattice { dim } => {
                let inner = s
                    .strip_prefix('(')
                    .and_then(|t| t.strip_suffix(')'))
                    .ok_or_else(|| Error::Parse(format!("expected (c1,...,cd), got {s:?}")))?;
                let coords: Vec<i64> = inner
                    .split(',')
                    .map(|t| {
                        t.trim()
                            .parse::<i64>()
                            .map_err(|e| Error::Parse(format!("bad coordinate {t:?}: {e}")))
                    })
                    .collect::<Result<_>>()?;
                if coords.len() != *dim as usize {
                    return Err(Error::Parse(format!(
                        "expected {dim} coordinates, got {}",
                        coords.len()
                    )));
                }
                GroupElement::lattice(&coords)
            }
        };
        Ok(g)
    }
}

impl fmt::Display for GroupDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupDescriptor::FreeGroup { rank } => write!(f, "free:{rank}"),
            GroupDescriptor::IntegerLattice { dim } => write!(f, "lattice:{dim}"),
        }
    }
}

impl std::str::FromStr for GroupDescriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, num) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("expected free:<r> or lattice:<d>, got {s:?}")))?;
        let n: u8 = num
            .parse()
            .map_err(|e| Error::Parse(format!("bad descriptor parameter {num:?}: {e}")))?;
        match kind {
            "free" if (1..=26).contains(&n) => Ok(GroupDescriptor::free(n)),
            "lattice" if n >= 1 => Ok(GroupDescriptor::lattice(n)),
            _ => Err(Error::Parse(format!("unknown descriptor {s:?}"))),
        }
    }
}

/// All reduced words of exact length `n`, depth-first lexicographic.
pub(crate) fn free_sphere(rank: u8, n: u32) -> Vec<FreeWord> {
    let mut out = Vec::new();
    let mut stack: Vec<Letter> = Vec::with_capacity(n as usize);
    free_sphere_rec(rank, n as usize, &mut stack, &mut out);
    out
}

fn free_sphere_rec(rank: u8, n: usize, stack: &mut Vec<Letter>, out: &mut Vec<FreeWord>) {
    if stack.len() == n {
        out.push(FreeWord(SmallVec::from_slice(stack)));
        return;
    }
    for r in 0..2 * rank as usize {
        let l = letter_at_rank(r);
        if stack.last() == Some(&-l) {
            continue;
        }
        stack.push(l);
        free_sphere_rec(rank, n, stack, out);
        stack.pop();
    }
}

fn lattice_sphere_rec(
    dim: usize,
    idx: usize,
    remaining: i64,
    coords: &mut Vec<i64>,
    out: &mut Vec<GroupElement>,
) {
    if idx == dim - 1 {
        // last coordinate absorbs the remaining norm, both signs
        if remaining == 0 {
            coords[idx] = 0;
            out.push(GroupElement::lattice(coords));
        } else {
            for v in [-remaining, remaining] {
                coords[idx] = v;
                out.push(GroupElement::lattice(coords));
            }
        }
        return;
    }
    for v in -remaining..=remaining {
        coords[idx] = v;
        lattice_sphere_rec(dim, idx + 1, remaining - v.abs(), coords, out);
    }
    coords[idx] = 0;
}

fn binomial(n: u32, k: u32) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Default BFS radius for word lengths over non-standard generating sets.
pub const DEFAULT_BFS_RADIUS: u32 = 12;

/// A left-invariant word metric.
///
/// `Standard` is the word metric of the descriptor's standard generators and
/// is evaluated in closed form. `Custom` holds an arbitrary finite symmetric
/// generating set and measures distance by breadth-first search in the
/// Cayley graph, up to a radius cap.
#[derive(Clone)]
pub enum WordMetric {
    Standard,
    Custom {
        generators: Vec<GroupElement>,
        radius_cap: u32,
    },
}

impl WordMetric {
    /// Builds a custom metric, verifying that the generating set is
    /// symmetric (closed under inverses).
    pub fn custom(
        descriptor: &GroupDescriptor,
        generators: Vec<GroupElement>,
        radius_cap: u32,
    ) -> Result<Self> {
        let set: HashSet<&GroupElement> = generators.iter().collect();
        for g in &generators {
            let inv = descriptor.inverse(g)?;
            if !set.contains(&inv) {
                return Err(Error::InvalidElement(format!(
                    "generating set not symmetric: missing inverse of {g}"
                )));
            }
        }
        Ok(WordMetric::Custom {
            generators,
            radius_cap,
        })
    }

    /// Distance from the identity to `g`.
    pub fn norm(&self, descriptor: &GroupDescriptor, g: &GroupElement) -> Result<u64> {
        match self {
            WordMetric::Standard => descriptor.word_length(g),
            WordMetric::Custom {
                generators,
                radius_cap,
            } => {
                let e = descriptor.identity();
                if *g == e {
                    return Ok(0);
                }
                let mut seen: HashSet<GroupElement> = HashSet::new();
                let mut queue: VecDeque<(GroupElement, u64)> = VecDeque::new();
                seen.insert(e.clone());
                queue.push_back((e, 0));
                while let Some((x, d)) = queue.pop_front() {
                    if d as u32 >= *radius_cap {
                        continue;
                    }
                    for s in generators {
                        let y = descriptor.multiply(&x, s)?;
                        if y == *g {
                            return Ok(d + 1);
                        }
                        if seen.insert(y.clone()) {
                            queue.push_back((y, d + 1));
                        }
                    }
                }
                Err(Error::RadiusExceeded {
                    radius: *radius_cap,
                })
            }
        }
    }

    /// Distance between two elements, by left invariance.
    pub fn distance(
        &self,
        descriptor: &GroupDescriptor,
        g: &GroupElement,
        h: &GroupElement,
    ) -> Result<u64> {
        let d = descriptor.multiply(&descriptor.inverse(g)?, h)?;
        self.norm(descriptor, &d)
    }
}

/// BFS distance table from the identity out to `radius`, for tests and
/// desk-scale cross-checks of the closed-form word length.
pub fn bfs_distances(
    descriptor: &GroupDescriptor,
    generators: &[GroupElement],
    radius: u32,
) -> Result<HashMap<GroupElement, u64>> {
    let mut dist = HashMap::new();
    let e = descriptor.identity();
    dist.insert(e.clone(), 0u64);
    let mut frontier = vec![e];
    for d in 0..radius as u64 {
        let mut next = Vec::new();
        for x in &frontier {
            for s in generators {
                let y = descriptor.multiply(x, s)?;
                if !dist.contains_key(&y) {
                    dist.insert(y.clone(), d + 1);
                    next.push(y);
                }
            }
        }
        frontier = next;
    }
    Ok(dist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn f2() -> GroupDescriptor {
        GroupDescriptor::free(2)
    }

    fn w(s: &str) -> GroupElement {
        f2().parse_element(s).unwrap()
    }

    #[test]
    fn multiplication_reduces() {
        // (a b) (b^-1 a) = a a
        let g = f2().multiply(&w("ab"), &w("Ba")).unwrap();
        assert_eq!(g, w("aa"));
        // g g^-1 = e
        let g = w("abAB");
        let prod = f2().multiply(&g, &f2().inverse(&g).unwrap()).unwrap();
        assert_eq!(prod, f2().identity());
    }

    #[test]
    fn lattice_addition() {
        let d = GroupDescriptor::lattice(2);
        let g = d
            .multiply(&GroupElement::lattice(&[1, 0]), &GroupElement::lattice(&[0, -3]))
            .unwrap();
        assert_eq!(g, GroupElement::lattice(&[1, -3]));
    }

    #[test]
    fn descriptor_mismatch_is_an_error() {
        let err = f2().multiply(&w("a"), &GroupElement::lattice(&[1])).unwrap_err();
        assert!(matches!(err, Error::DescriptorMismatch));
    }

    #[test]
    fn word_length_standard() {
        assert_eq!(f2().word_length(&w("abA")).unwrap(), 3);
        let d = GroupDescriptor::lattice(2);
        assert_eq!(d.word_length(&GroupElement::lattice(&[2, -1])).unwrap(), 3);
    }

    #[test]
    fn word_length_custom_generators() {
        // S = {a, a^-1, b, b^-1, ab, (ab)^-1}: |ab|_S = 1
        let gens = vec![w("a"), w("A"), w("b"), w("B"), w("ab"), w("BA")];
        let m = WordMetric::custom(&f2(), gens, 6).unwrap();
        assert_eq!(m.norm(&f2(), &w("ab")).unwrap(), 1);
        assert_eq!(m.norm(&f2(), &w("abb")).unwrap(), 2);
        // asymmetric set rejected
        let bad = WordMetric::custom(&f2(), vec![w("a")], 4);
        assert!(bad.is_err());
    }

    #[test]
    fn sphere_sizes_f2() {
        let d = f2();
        assert_eq!(d.sphere_size(0), 1);
        assert_eq!(d.sphere_size(1), 4);
        for n in 1..=10u32 {
            assert_eq!(d.sphere_size(n), 4 * 3u128.pow(n - 1));
        }
        // |B_n| = 2*3^n - 1, checked by enumeration up to 10
        for n in 0..=10u32 {
            assert_eq!(d.ball_size(n), 2 * 3u128.pow(n) - 1);
        }
        for n in 0..=8u32 {
            assert_eq!(d.sphere(n).unwrap().len() as u128, d.sphere_size(n));
        }
    }

    #[test]
    fn sphere_enumeration_deterministic_and_reduced() {
        let d = f2();
        let s1 = d.sphere(1).unwrap();
        assert_eq!(
            s1.iter().map(|g| g.to_string()).collect::<Vec<_>>(),
            vec!["a", "A", "b", "B"]
        );
        let s3 = d.sphere(3).unwrap();
        assert_eq!(s3.len(), 36);
        // deterministic lexicographic order, first and last entries pinned
        assert_eq!(s3.first().unwrap().to_string(), "aaa");
        assert_eq!(s3.last().unwrap().to_string(), "BBB");
        // all reduced
        for g in &s3 {
            let letters = g.as_free().unwrap().letters();
            assert!(letters.windows(2).all(|p| p[1] != -p[0]));
        }
    }

    #[test]
    fn lattice_spheres() {
        let z1 = GroupDescriptor::lattice(1);
        let s2 = z1.sphere(2).unwrap();
        assert_eq!(
            s2,
            vec![GroupElement::lattice(&[-2]), GroupElement::lattice(&[2])]
        );
        let z2 = GroupDescriptor::lattice(2);
        // |S_n| in Z^2 is 4n for n >= 1
        for n in 1..=20u32 {
            assert_eq!(z2.sphere_size(n), 4 * n as u128);
        }
        let s3 = z2.sphere(3).unwrap();
        assert_eq!(s3.len(), 12);
        assert!(s3.iter().all(|g| z2.word_length(g).unwrap() == 3));
    }

    #[test]
    fn product_set_sizes_match_bfs() {
        // S^n = parity class of the ball; cross-check against actual products
        let d = f2();
        let gens = d.generators();
        let mut current: HashSet<GroupElement> = gens.iter().cloned().collect();
        for n in 1..=6u32 {
            assert_eq!(current.len() as u128, d.product_set_size(n), "n = {n}");
            if n < 6 {
                let mut next = HashSet::new();
                for x in &current {
                    for s in &gens {
                        next.insert(d.multiply(x, s).unwrap());
                    }
                }
                current = next;
            }
        }
    }

    #[test]
    fn gromov_product_examples() {
        let d = f2();
        let r = |n: i64| Rational::from(BigInt::from(n));
        // (ab, aB) -> 1, common prefix "a"; formula (2+2-2)/2 = 1
        assert_eq!(d.gromov_product(&w("ab"), &w("aB")).unwrap(), r(1));
        // (g, g) = |g|
        assert_eq!(d.gromov_product(&w("abA"), &w("abA")).unwrap(), r(3));
        // (a, a^-1) = 0
        assert_eq!(d.gromov_product(&w("a"), &w("A")).unwrap(), r(0));
    }

    #[test]
    fn gromov_product_equals_common_prefix() {
        // formula route vs longest-common-prefix route
        let d = f2();
        for g in d.ball(4).unwrap() {
            for h in d.ball(3).unwrap() {
                let lcp = g
                    .as_free()
                    .unwrap()
                    .common_prefix_len(h.as_free().unwrap());
                assert_eq!(
                    d.gromov_product(&g, &h).unwrap(),
                    Rational::from(BigInt::from(lcp as i64))
                );
            }
        }
    }

    #[test]
    fn element_text_round_trip() {
        let d = f2();
        for s in ["e", "a", "aB", "abAB"] {
            assert_eq!(d.parse_element(s).unwrap().to_string(), s);
        }
        let z = GroupDescriptor::lattice(3);
        assert_eq!(z.parse_element("(1,-2,0)").unwrap().to_string(), "(1,-2,0)");
        assert!(d.parse_element("a1").is_err());
        assert!(z.parse_element("(1,2)").is_err());
    }

    #[test]
    fn descriptor_text_round_trip() {
        for s in ["free:2", "lattice:3"] {
            let d: GroupDescriptor = s.parse().unwrap();
            assert_eq!(d.to_string(), s);
        }
        assert!("free:0".parse::<GroupDescriptor>().is_err());
    }

    #[test]
    fn enumeration_cap() {
        let err = f2().sphere_capped(9, 1000).unwrap_err();
        assert!(matches!(err, Error::CapExceeded { .. }));
    }

    #[test]
    fn custom_metric_radius_exceeded() {
        let gens = f2().generators();
        let m = WordMetric::custom(&f2(), gens, 2).unwrap();
        assert!(matches!(
            m.norm(&f2(), &w("aaa")),
            Err(Error::RadiusExceeded { .. })
        ));
    }

    proptest! {
        #[test]
        fn reduction_is_idempotent(letters in proptest::collection::vec(-2i8..=2, 0..40)) {
            let letters: Vec<Letter> = letters.into_iter().filter(|&l| l != 0).collect();
            let once = FreeWord::from_letters(&letters);
            let twice = FreeWord::from_letters(once.letters());
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn multiplication_is_associative(
            a in proptest::collection::vec(-2i8..=2, 0..12),
            b in proptest::collection::vec(-2i8..=2, 0..12),
            c in proptest::collection::vec(-2i8..=2, 0..12),
        ) {
            let f = |v: Vec<i8>| FreeWord::from_letters(&v.into_iter().filter(|&l| l != 0).collect::<Vec<_>>());
            let (a, b, c) = (f(a), f(b), f(c));
            prop_assert_eq!(a.mul(&b).mul(&c), a.mul(&b.mul(&c)));
        }

        #[test]
        fn word_length_subadditive(
            a in proptest::collection::vec(-2i8..=2, 0..16),
            b in proptest::collection::vec(-2i8..=2, 0..16),
        ) {
            let f = |v: Vec<i8>| FreeWord::from_letters(&v.into_iter().filter(|&l| l != 0).collect::<Vec<_>>());
            let (a, b) = (f(a), f(b));
            prop_assert!(a.mul(&b).len() <= a.len() + b.len());
        }

        #[test]
        fn gromov_product_bounds(
            a in proptest::collection::vec(-2i8..=2, 0..10),
            b in proptest::collection::vec(-2i8..=2, 0..10),
        ) {
            let f = |v: Vec<i8>| GroupElement::Free(FreeWord::from_letters(&v.into_iter().filter(|&l| l != 0).collect::<Vec<_>>()));
            let (g, h) = (f(a), f(b));
            let d = GroupDescriptor::free(2);
            let p = d.gromov_product(&g, &h).unwrap();
            let min_len = d.word_length(&g).unwrap().min(d.word_length(&h).unwrap());
            prop_assert!(p >= Rational::from(BigInt::from(0)));
            prop_assert!(p <= Rational::from(BigInt::from(min_len)));
        }
    }

    #[test]
    fn left_invariance_sampled() {
        let d = f2();
        let m = WordMetric::Standard;
        for h in d.ball(3).unwrap() {
            for g in d.ball(2).unwrap() {
                let hg = d.multiply(&h, &g).unwrap();
                let he = h.clone();
                assert_eq!(
                    m.distance(&d, &hg, &he).unwrap(),
                    m.distance(&d, &g, &d.identity()).unwrap()
                );
            }
        }
    }
}
