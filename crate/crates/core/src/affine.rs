//! Affine isometric actions on finite-dimensional real inner-product
//! spaces: energy minimization, left-Lipschitz right harmonic functions,
//! and the fixed-vector check for averaged orthogonal representations.
//!
//! An action assigns each generator `s` an orthogonal part `pi(s)` and a
//! translation `b(s)`; on words the translation part extends by the cocycle
//! rule `b(gh) = b(g) + pi(g) b(h)`. Minimizing the energy
//! `E(x) = ∫ |alpha(s) x - x|^2 dmu(s)` over a symmetric measure amounts to
//! the linear system `(I - Σ mu(s) pi(s)) x = Σ mu(s) b(s)`; a minimizer
//! `x_o` makes the orbit map `g -> alpha(g) x_o` right mu-harmonic, and any
//! linear functional of it gives a left-Lipschitz right mu-harmonic
//! function `f(g) = <y, alpha(g) x_o>`.
//!
//! Everything is plain dense linear algebra; tolerances are layered one
//! decade apart: orthogonality 1e-12, linear-solve residual 1e-10,
//! harmonicity 1e-9.

use crate::error::{Error, Result};
use crate::group::{GroupDescriptor, GroupElement};
use crate::measure::FiniteMeasure;
use crate::numfmt;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ORTHOGONALITY_TOL: f64 = 1e-12;
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-10;
pub const HARMONICITY_TOL: f64 = 1e-9;

/// An affine isometric action of a free group or lattice on `R^dim`.
#[derive(Clone, Debug)]
pub struct AffineIsometricAction {
    descriptor: GroupDescriptor,
    dim: usize,
    /// `(pi(s), b(s))` for each positive generator, in generator order.
    parts: Vec<(DMatrix<f64>, DVector<f64>)>,
}

impl AffineIsometricAction {
    /// Builds an action from per-generator orthogonal parts and
    /// translations. Orthogonality is enforced to 1e-12; lattice actions
    /// additionally require commuting generators.
    pub fn new(
        descriptor: GroupDescriptor,
        parts: Vec<(DMatrix<f64>, DVector<f64>)>,
    ) -> Result<Self> {
        let expected = descriptor.generators().len() / 2;
        if parts.len() != expected {
            return Err(Error::InvalidElement(format!(
                "expected {expected} generator parts, got {}",
                parts.len()
            )));
        }
        let dim = parts
            .first()
            .map(|(m, _)| m.nrows())
            .ok_or_else(|| Error::InvalidElement("action needs at least one generator".into()))?;
        for (m, v) in &parts {
            if m.nrows() != dim || m.ncols() != dim || v.len() != dim {
                return Err(Error::InvalidElement("inconsistent dimensions".into()));
            }
            let defect = (m.transpose() * m - DMatrix::<f64>::identity(dim, dim)).abs().max();
            if defect > ORTHOGONALITY_TOL {
                return Err(Error::NotOrthogonal {
                    tol: ORTHOGONALITY_TOL,
                });
            }
        }
        let action = AffineIsometricAction {
            descriptor,
            dim,
            parts,
        };
        if matches!(descriptor, GroupDescriptor::IntegerLattice { .. }) {
            // lattice relations: generators must commute as affine maps
            for i in 0..action.parts.len() {
                for j in i + 1..action.parts.len() {
                    let (pi, bi) = &action.parts[i];
                    let (pj, bj) = &action.parts[j];
                    let comm = (pi * pj - pj * pi).abs().max();
                    let tcomm = (pi * bj + bi - (pj * bi + bj)).abs().max();
                    if comm > 1e-10 || tcomm > 1e-10 {
                        return Err(Error::InvalidElement(
                            "lattice action generators must commute".into(),
                        ));
                    }
                }
            }
        }
        Ok(action)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn descriptor(&self) -> GroupDescriptor {
        self.descriptor
    }

    /// `(pi(g), b(g))` by the cocycle rule along the word.
    pub fn orbit_map(&self, g: &GroupElement) -> Result<(DMatrix<f64>, DVector<f64>)> {
        if !self.descriptor.contains(g) {
            return Err(Error::DescriptorMismatch);
        }
        let mut pi = DMatrix::<f64>::identity(self.dim, self.dim);
        let mut b = DVector::<f64>::zeros(self.dim);
        let apply = |pi_s: &DMatrix<f64>, b_s: &DVector<f64>, pi: &mut DMatrix<f64>, b: &mut DVector<f64>| {
            *b += &*pi * b_s;
            *pi *= pi_s;
        };
        match g {
            GroupElement::Free(w) => {
                for &l in w.letters() {
                    let (pi_s, b_s) = self.letter_part(l);
                    apply(&pi_s, &b_s, &mut pi, &mut b);
                }
            }
            GroupElement::Lattice(p) => {
                for (i, &c) in p.coords().iter().enumerate() {
                    let l = (i + 1) as i8;
                    let (pi_s, b_s) = self.letter_part(if c >= 0 { l } else { -l });
                    for _ in 0..c.unsigned_abs() {
                        apply(&pi_s, &b_s, &mut pi, &mut b);
                    }
                }
            }
        }
        Ok((pi, b))
    }

    /// `(pi(s), b(s))` for a signed generator letter; the inverse part is
    /// `(pi^T, -pi^T b)`.
    fn letter_part(&self, l: i8) -> (DMatrix<f64>, DVector<f64>) {
        let (pi, b) = &self.parts[(l.unsigned_abs() - 1) as usize];
        if l > 0 {
            (pi.clone(), b.clone())
        } else {
            let pit = pi.transpose();
            let nb = -(&pit * b);
            (pit, nb)
        }
    }

    /// `alpha(g) x = pi(g) x + b(g)`.
    pub fn evaluate(&self, g: &GroupElement, x: &DVector<f64>) -> Result<DVector<f64>> {
        let (pi, b) = self.orbit_map(g)?;
        Ok(pi * x + b)
    }

    /// Energy `E(x) = ∫ |alpha(s) x - x|^2 dmu(s)`.
    pub fn energy(&self, mu: &FiniteMeasure, x: &DVector<f64>) -> Result<f64> {
        let mut total = 0.0;
        for (g, _) in mu.atoms_sorted() {
            let w = numfmt::to_f64(&mu.weight(&g));
            let moved = self.evaluate(&g, x)?;
            total += w * (moved - x).norm_squared();
        }
        Ok(total)
    }

    /// The displacement average `∫ (x - alpha(s) x) dmu(s)`; the gradient of
    /// E at `x` is 4 times this (for symmetric mu).
    pub fn displacement(&self, mu: &FiniteMeasure, x: &DVector<f64>) -> Result<DVector<f64>> {
        let mut acc = DVector::<f64>::zeros(self.dim);
        for (g, _) in mu.atoms_sorted() {
            let w = numfmt::to_f64(&mu.weight(&g));
            acc += w * (x - self.evaluate(&g, x)?);
        }
        Ok(acc)
    }

    /// Parses the action file format: first line the dimension, then for
    /// each generator `dim` rows of the matrix followed by one row for the
    /// translation vector. `#` starts a comment.
    pub fn parse(descriptor: GroupDescriptor, text: &str) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            rows.push(
                line.split_whitespace()
                    .map(|t| {
                        t.parse::<f64>()
                            .map_err(|e| Error::Parse(format!("bad number {t:?}: {e}")))
                    })
                    .collect::<Result<_>>()?,
            );
        }
        let header = rows
            .first()
            .ok_or_else(|| Error::Parse("empty action file".into()))?;
        if header.len() != 1 {
            return Err(Error::Parse("first line must be the dimension".into()));
        }
        let dim = header[0] as usize;
        let gens = descriptor.generators().len() / 2;
        let per_gen = dim + 1;
        if rows.len() != 1 + gens * per_gen {
            return Err(Error::Parse(format!(
                "expected {} data rows for {} generators in dimension {}, got {}",
                gens * per_gen,
                gens,
                dim,
                rows.len() - 1
            )));
        }
        let mut parts = Vec::with_capacity(gens);
        for gi in 0..gens {
            let base = 1 + gi * per_gen;
            let mut flat = Vec::with_capacity(dim * dim);
            for r in 0..dim {
                let row = &rows[base + r];
                if row.len() != dim {
                    return Err(Error::Parse(format!("matrix row with {} entries", row.len())));
                }
                flat.extend_from_slice(row);
            }
            let vec_row = &rows[base + dim];
            if vec_row.len() != dim {
                return Err(Error::Parse(format!("vector row with {} entries", vec_row.len())));
            }
            parts.push((
                DMatrix::from_row_slice(dim, dim, &flat),
                DVector::from_row_slice(vec_row),
            ));
        }
        Self::new(descriptor, parts)
    }

    pub fn to_file_format(&self) -> String {
        let mut out = format!("{}\n", self.dim);
        for (m, v) in &self.parts {
            for r in 0..self.dim {
                let row: Vec<String> = (0..self.dim).map(|c| format!("{:.17}", m[(r, c)])).collect();
                out.push_str(&row.join(" "));
                out.push('\n');
            }
            let row: Vec<String> = (0..self.dim).map(|c| format!("{:.17}", v[c])).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolutionStatus {
    /// The system was invertible and solved to the residual tolerance.
    Unique,
    /// Singular system; minimum-norm least-squares solution returned.
    LeastSquares,
}

/// Result of [`minimize_energy`].
#[derive(Clone, Debug)]
pub struct EnergySolution {
    pub minimizer: DVector<f64>,
    /// `∫ (x_o - alpha(s) x_o) dmu(s)`; zero at an exact critical point.
    pub residual: DVector<f64>,
    pub residual_norm: f64,
    pub status: SolutionStatus,
}

impl EnergySolution {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "minimizer": self.minimizer.iter().copied().map(numfmt::sig9).collect::<Vec<_>>(),
            "residual_norm": numfmt::sig9(self.residual_norm),
            "status": format!("{:?}", self.status),
        })
    }
}

/// Minimizes the energy over a symmetric measure: solves
/// `(I - Σ mu(s) pi(s)) x = Σ mu(s) b(s)`, falling back to the
/// minimum-norm least-squares solution when the averaged rotation has
/// fixed vectors.
pub fn minimize_energy(
    action: &AffineIsometricAction,
    mu: &FiniteMeasure,
) -> Result<EnergySolution> {
    if mu.descriptor() != action.descriptor() {
        return Err(Error::DescriptorMismatch);
    }
    if !mu.is_symmetric() {
        return Err(Error::NotSymmetric);
    }
    let dim = action.dim();
    let mut avg_pi = DMatrix::<f64>::zeros(dim, dim);
    let mut avg_b = DVector::<f64>::zeros(dim);
    for (g, _) in mu.atoms_sorted() {
        let w = numfmt::to_f64(&mu.weight(&g));
        let (pi, b) = action.orbit_map(&g)?;
        avg_pi += w * pi;
        avg_b += w * b;
    }
    let a = DMatrix::<f64>::identity(dim, dim) - avg_pi;
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let invertible = smin > 1e-10 * smax.max(1.0);
    let x = svd
        .solve(&avg_b, 1e-12 * smax.max(1.0))
        .map_err(|e| Error::InvalidElement(format!("svd solve failed: {e}")))?;
    let residual = action.displacement(mu, &x)?;
    let residual_norm = residual.norm();
    Ok(EnergySolution {
        minimizer: x,
        residual,
        residual_norm,
        status: if invertible {
            SolutionStatus::Unique
        } else {
            SolutionStatus::LeastSquares
        },
    })
}

/// Checks the closed-form gradient `d/dt E(x+tv)|_0 = 4 <v, displacement>`
/// by central differences at seeded random points and directions. Returns
/// `(finite difference, closed form, relative error)` per trial.
pub fn gradient_identity_check(
    action: &AffineIsometricAction,
    mu: &FiniteMeasure,
    trials: u32,
    seed: u64,
) -> Result<Vec<(f64, f64, f64)>> {
    if !mu.is_symmetric() {
        return Err(Error::NotSymmetric);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = action.dim();
    let mut out = Vec::with_capacity(trials as usize);
    for _ in 0..trials {
        let x = DVector::from_fn(dim, |_, _| rng.gen_range(-2.0..2.0));
        let mut v = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
        if v.norm() < 1e-6 {
            v[0] += 1.0;
        }
        v /= v.norm();
        let t = 1e-5;
        let fd = (action.energy(mu, &(&x + t * &v))? - action.energy(mu, &(&x - t * &v))?)
            / (2.0 * t);
        let closed = 4.0 * v.dot(&action.displacement(mu, &x)?);
        let scale = fd.abs().max(closed.abs()).max(1e-9);
        out.push((fd, closed, (fd - closed).abs() / scale));
    }
    Ok(out)
}

/// A verified right mu-harmonic function `f(g) = <y, alpha(g) x_o>`.
#[derive(Clone, Debug)]
pub struct HarmonicFunctionReport {
    pub y: DVector<f64>,
    pub x_o: DVector<f64>,
    /// Max over the verification ball of `|∫ f(gs) dmu(s) - f(g)|`.
    pub max_harmonicity_residual: f64,
    pub verification_radius: u32,
    /// Sampled check of `|f(sg) - f(s)| <= |y| (2|x_o| + |b(g)|)`.
    pub lipschitz_ok: bool,
    /// `max_{B_n} |f|` for `n = 0..=probe_radius`: the unboundedness probe
    /// (growth is reported, never claimed as a theorem).
    pub growth_probe: Vec<f64>,
}

impl HarmonicFunctionReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "max_harmonicity_residual": numfmt::sig9(self.max_harmonicity_residual),
            "verification_radius": self.verification_radius,
            "lipschitz_ok": self.lipschitz_ok,
            "growth_probe": self.growth_probe.iter().copied().map(numfmt::sig9).collect::<Vec<_>>(),
        })
    }
}

/// Builds `f(g) = <y, alpha(g) x_o>` from an energy minimizer and verifies
/// right harmonicity on a ball, the left-Lipschitz bound on samples, and
/// probes growth over balls.
pub fn harmonic_function(
    action: &AffineIsometricAction,
    mu: &FiniteMeasure,
    solution: &EnergySolution,
    y: DVector<f64>,
    verification_radius: u32,
    probe_radius: u32,
) -> Result<HarmonicFunctionReport> {
    if solution.residual_norm > SOLVE_RESIDUAL_TOL {
        return Err(Error::HarmonicityViolated {
            witness: "x_o".into(),
            residual: solution.residual_norm,
        });
    }
    let d = action.descriptor();
    let x_o = &solution.minimizer;
    let f = |g: &GroupElement| -> Result<f64> { Ok(y.dot(&action.evaluate(g, x_o)?)) };
    let atoms = mu.atoms_sorted();
    let mut max_residual = 0.0f64;
    for g in d.ball(verification_radius)? {
        let mut avg = 0.0;
        for (s, _) in &atoms {
            let gs = d.multiply(&g, s)?;
            avg += numfmt::to_f64(&mu.weight(s)) * f(&gs)?;
        }
        let residual = (avg - f(&g)?).abs();
        if residual > max_residual {
            max_residual = residual;
        }
        if residual > HARMONICITY_TOL {
            return Err(Error::HarmonicityViolated {
                witness: g.to_string(),
                residual,
            });
        }
    }
    // left-Lipschitz bound on sampled pairs
    let mut lipschitz_ok = true;
    let sample = d.ball(2.min(verification_radius))?;
    for g in &sample {
        let (_, b_g) = action.orbit_map(g)?;
        let bound = y.norm() * (2.0 * x_o.norm() + b_g.norm()) + 1e-9;
        for s in &sample {
            let sg = d.multiply(s, g)?;
            if (f(&sg)? - f(s)?).abs() > bound {
                lipschitz_ok = false;
            }
        }
    }
    let mut growth_probe = Vec::with_capacity(probe_radius as usize + 1);
    for n in 0..=probe_radius {
        let mut m = 0.0f64;
        for g in d.sphere(n)? {
            m = m.max(f(&g)?.abs());
        }
        growth_probe.push(m);
    }
    Ok(HarmonicFunctionReport {
        y,
        x_o: x_o.clone(),
        max_harmonicity_residual: max_residual,
        verification_radius,
        lipschitz_ok,
        growth_probe,
    })
}

/// An orthogonal representation: one orthogonal matrix per generator.
#[derive(Clone, Debug)]
pub struct OrthogonalRepresentation {
    descriptor: GroupDescriptor,
    dim: usize,
    mats: Vec<DMatrix<f64>>,
}

impl OrthogonalRepresentation {
    pub fn new(descriptor: GroupDescriptor, mats: Vec<DMatrix<f64>>) -> Result<Self> {
        let parts = mats
            .iter()
            .map(|m| (m.clone(), DVector::zeros(m.nrows())))
            .collect();
        // reuse the affine validation (orthogonality, commutation)
        let action = AffineIsometricAction::new(descriptor, parts)?;
        Ok(OrthogonalRepresentation {
            descriptor,
            dim: action.dim(),
            mats,
        })
    }

    pub fn matrix(&self, g: &GroupElement) -> Result<DMatrix<f64>> {
        let parts = self
            .mats
            .iter()
            .map(|m| (m.clone(), DVector::zeros(self.dim)))
            .collect();
        let action = AffineIsometricAction::new(self.descriptor, parts)?;
        Ok(action.orbit_map(g)?.0)
    }
}

/// Result of [`fixed_vector_check`].
#[derive(Clone, Debug)]
pub struct FixedVectorReport {
    /// Orthonormal basis of the eigenvalue-1 space of `Σ mu(s) pi(s)`.
    pub averaged_fixed_basis: Vec<DVector<f64>>,
    /// Dimension of `⋂_s ker(pi(s) - I)`.
    pub joint_fixed_dim: usize,
    /// Basis vectors of the averaged fixed space that some generator moves
    /// (none expected: strict convexity forces them fixed).
    pub violations: Vec<(usize, usize, f64)>,
    pub dims_agree: bool,
}

impl FixedVectorReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "averaged_fixed_dim": self.averaged_fixed_basis.len(),
            "joint_fixed_dim": self.joint_fixed_dim,
            "dims_agree": self.dims_agree,
            "violations": self.violations.len(),
        })
    }
}

/// Computes the fixed space of the averaged operator `Σ mu(s) pi(s)` and
/// verifies every basis vector is fixed by each generator individually
/// (the strict-convexity lemma at matrix scale).
pub fn fixed_vector_check(
    rep: &OrthogonalRepresentation,
    mu: &FiniteMeasure,
) -> Result<FixedVectorReport> {
    if mu.descriptor() != rep.descriptor {
        return Err(Error::DescriptorMismatch);
    }
    // the support must generate (as a semigroup) for the lemma to apply
    let gen_check = mu.generates_semigroup(1, 6)?;
    if !matches!(
        gen_check.status,
        crate::measure::GenerationStatus::Generates { .. }
    ) {
        return Err(Error::InvalidElement(
            "support of mu must generate the group".into(),
        ));
    }
    let dim = rep.dim;
    let mut averaged = DMatrix::<f64>::zeros(dim, dim);
    for (g, _) in mu.atoms_sorted() {
        averaged += numfmt::to_f64(&mu.weight(&g)) * rep.matrix(&g)?;
    }
    let tol = 1e-10;
    let basis = null_space(&(averaged - DMatrix::<f64>::identity(dim, dim)), tol);

    // joint fixed space of the generators
    let gens: Vec<DMatrix<f64>> = rep.mats.clone();
    let mut stacked = DMatrix::<f64>::zeros(dim * gens.len(), dim);
    for (i, m) in gens.iter().enumerate() {
        stacked
            .view_mut((i * dim, 0), (dim, dim))
            .copy_from(&(m - DMatrix::<f64>::identity(dim, dim)));
    }
    let joint = null_space(&stacked, tol);

    let mut violations = Vec::new();
    for (bi, v) in basis.iter().enumerate() {
        for (gi, m) in gens.iter().enumerate() {
            let moved = (m * v - v).norm();
            if moved > tol {
                violations.push((bi, gi, moved));
            }
        }
    }
    Ok(FixedVectorReport {
        dims_agree: basis.len() == joint.len(),
        averaged_fixed_basis: basis,
        joint_fixed_dim: joint.len(),
        violations,
    })
}

/// Orthonormal basis of the (numerical) null space of `m`, via the
/// eigen-decomposition of `m^T m` (robust for tall stacked matrices too).
/// Candidates from the eigen step are confirmed against `|m v| <= tol`.
fn null_space(m: &DMatrix<f64>, tol: f64) -> Vec<DVector<f64>> {
    let cols = m.ncols();
    let sym = m.transpose() * m;
    let scale = sym.diagonal().amax().max(1.0);
    let eig = nalgebra::SymmetricEigen::new(sym);
    let mut basis = Vec::new();
    for i in 0..cols {
        if eig.eigenvalues[i].abs() <= 1e-13 * scale {
            let v = eig.eigenvectors.column(i).into_owned();
            if (m * &v).norm() <= tol * scale.sqrt() {
                basis.push(v);
            }
        }
    }
    basis
}

/// Rotation by `angle` about `axis` in dimension 3 (Rodrigues formula).
pub fn rotation3(axis: &DVector<f64>, angle: f64) -> DMatrix<f64> {
    let u = axis / axis.norm();
    let (s, c) = angle.sin_cos();
    let mut k = DMatrix::<f64>::zeros(3, 3);
    k[(0, 1)] = -u[2];
    k[(0, 2)] = u[1];
    k[(1, 0)] = u[2];
    k[(1, 2)] = -u[0];
    k[(2, 0)] = -u[1];
    k[(2, 1)] = u[0];
    DMatrix::<f64>::identity(3, 3) + s * &k + (1.0 - c) * (&k * &k)
}

/// Seeded random rotation and translation in dimension 3, for experiments.
pub fn random_rotation_part(rng: &mut ChaCha8Rng) -> (DMatrix<f64>, DVector<f64>) {
    let axis = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0f64));
    let axis = if axis.norm() < 1e-9 {
        DVector::from_row_slice(&[1.0, 0.0, 0.0])
    } else {
        axis
    };
    let angle = rng.gen_range(0.1..3.0);
    let b = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
    (rotation3(&axis, angle), b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f2() -> GroupDescriptor {
        GroupDescriptor::free(2)
    }

    fn z1() -> GroupDescriptor {
        GroupDescriptor::lattice(1)
    }

    fn translation_action_z() -> AffineIsometricAction {
        AffineIsometricAction::new(
            z1(),
            vec![(
                DMatrix::<f64>::identity(1, 1),
                DVector::from_row_slice(&[1.0]),
            )],
        )
        .unwrap()
    }

    fn random_f2_action(seed: u64) -> AffineIsometricAction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AffineIsometricAction::new(
            f2(),
            vec![random_rotation_part(&mut rng), random_rotation_part(&mut rng)],
        )
        .unwrap()
    }

    #[test]
    fn identity_acts_trivially() {
        let action = random_f2_action(1);
        let x = DVector::from_row_slice(&[1.0, -2.0, 0.5]);
        let y = action.evaluate(&f2().identity(), &x).unwrap();
        assert!((y - x).norm() < 1e-15);
    }

    #[test]
    fn translation_action_on_z() {
        let action = translation_action_z();
        let x = DVector::from_row_slice(&[2.5]);
        for n in [-3i64, 0, 1, 7] {
            let y = action
                .evaluate(&GroupElement::lattice(&[n]), &x)
                .unwrap();
            assert!((y[0] - (2.5 + n as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn composition_matches_word_order() {
        let action = random_f2_action(2);
        let d = f2();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let ball = d.ball(3).unwrap();
        for _ in 0..100 {
            let g = &ball[rng.gen_range(0..ball.len())];
            let h = &ball[rng.gen_range(0..ball.len())];
            let x = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
            let gh = d.multiply(g, h).unwrap();
            let via_word = action.evaluate(&gh, &x).unwrap();
            let via_composition = action
                .evaluate(g, &action.evaluate(h, &x).unwrap())
                .unwrap();
            assert!((via_word - via_composition).norm() < 1e-10);
        }
    }

    #[test]
    fn cocycle_rule_holds_numerically() {
        let action = random_f2_action(3);
        let d = f2();
        for g in d.ball(2).unwrap() {
            for h in d.ball(2).unwrap() {
                let (pi_g, b_g) = action.orbit_map(&g).unwrap();
                let (_, b_h) = action.orbit_map(&h).unwrap();
                let (_, b_gh) = action.orbit_map(&d.multiply(&g, &h).unwrap()).unwrap();
                assert!((&b_g + &pi_g * &b_h - b_gh).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn orthogonality_is_enforced() {
        let bad = AffineIsometricAction::new(
            z1(),
            vec![(
                DMatrix::from_row_slice(1, 1, &[1.1]),
                DVector::from_row_slice(&[0.0]),
            )],
        );
        assert!(matches!(bad, Err(Error::NotOrthogonal { .. })));
    }

    #[test]
    fn minimize_energy_translation_is_degenerate() {
        // pi = 1, symmetric mu: system 0 = 0, every x solves; least squares
        // picks 0 with zero residual
        let action = translation_action_z();
        let mu = FiniteMeasure::srw(z1());
        let sol = minimize_energy(&action, &mu).unwrap();
        assert_eq!(sol.status, SolutionStatus::LeastSquares);
        assert!(sol.residual_norm <= 1e-12);
    }

    #[test]
    fn minimize_energy_rotation_unique() {
        // rotation by 1 rad in the plane with translation: unique fixed
        // point of the averaged system, residual at machine scale
        let angle: f64 = 1.0;
        let rot = DMatrix::from_row_slice(
            2,
            2,
            &[angle.cos(), -angle.sin(), angle.sin(), angle.cos()],
        );
        let action = AffineIsometricAction::new(
            z1(),
            vec![(rot, DVector::from_row_slice(&[1.0, 0.0]))],
        )
        .unwrap();
        let mu = FiniteMeasure::srw(z1());
        let sol = minimize_energy(&action, &mu).unwrap();
        assert_eq!(sol.status, SolutionStatus::Unique);
        assert!(sol.residual_norm <= 1e-12);
        // oracle: direct 2x2 solve of (I - avg pi) x = avg b
        let (pi_p, b_p) = action.orbit_map(&GroupElement::lattice(&[1])).unwrap();
        let (pi_m, b_m) = action.orbit_map(&GroupElement::lattice(&[-1])).unwrap();
        let a = DMatrix::<f64>::identity(2, 2) - 0.5 * (pi_p + pi_m);
        let rhs = 0.5 * (b_p + b_m);
        let x = a.lu().solve(&rhs).unwrap();
        assert!((x - &sol.minimizer).norm() < 1e-10);
    }

    #[test]
    fn minimize_energy_f2_rotations() {
        let action = random_f2_action(4);
        let mu = FiniteMeasure::srw(f2());
        let sol = minimize_energy(&action, &mu).unwrap();
        assert!(sol.residual_norm <= 1e-10, "residual {}", sol.residual_norm);
        // the minimizer is a genuine local minimum: energy rises nearby
        let e0 = action.energy(&mu, &sol.minimizer).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..10 {
            let v = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
            let e1 = action
                .energy(&mu, &(&sol.minimizer + 0.1 * v))
                .unwrap();
            assert!(e1 >= e0 - 1e-12);
        }
    }

    #[test]
    fn minimize_energy_requires_symmetry() {
        let action = translation_action_z();
        let skew = FiniteMeasure::dirac(z1(), GroupElement::lattice(&[1])).unwrap();
        assert!(matches!(
            minimize_energy(&action, &skew),
            Err(Error::NotSymmetric)
        ));
    }

    #[test]
    fn gradient_identity() {
        let action = random_f2_action(5);
        let mu = FiniteMeasure::srw(f2());
        for (fd, closed, rel) in gradient_identity_check(&action, &mu, 10, 123).unwrap() {
            assert!(rel <= 1e-6, "fd {fd} vs closed {closed} (rel {rel})");
        }
    }

    #[test]
    fn harmonic_function_translation() {
        // f(n) = n on Z: homomorphism, right harmonic for symmetric mu
        let action = translation_action_z();
        let mu = FiniteMeasure::srw(z1());
        let sol = minimize_energy(&action, &mu).unwrap();
        let report = harmonic_function(
            &action,
            &mu,
            &sol,
            DVector::from_row_slice(&[1.0]),
            5,
            6,
        )
        .unwrap();
        assert!(report.max_harmonicity_residual <= 1e-12);
        assert!(report.lipschitz_ok);
        // growth probe: |f| over B_n grows linearly (x_o = 0, f(n) = n)
        for (n, v) in report.growth_probe.iter().enumerate() {
            assert!((v - n as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn harmonic_function_f2_rotations() {
        let action = random_f2_action(6);
        let mu = FiniteMeasure::srw(f2());
        let sol = minimize_energy(&action, &mu).unwrap();
        let report = harmonic_function(
            &action,
            &mu,
            &sol,
            DVector::from_row_slice(&[1.0, 0.0, 0.0]),
            5,
            4,
        )
        .unwrap();
        assert!(report.max_harmonicity_residual <= 1e-9);
        assert!(report.lipschitz_ok);
    }

    #[test]
    fn orthogonal_direction_gives_constant() {
        // y orthogonal to the orbit span: f is constant
        let action = AffineIsometricAction::new(
            z1(),
            vec![(
                DMatrix::<f64>::identity(2, 2),
                DVector::from_row_slice(&[1.0, 0.0]),
            )],
        )
        .unwrap();
        let mu = FiniteMeasure::srw(z1());
        let sol = minimize_energy(&action, &mu).unwrap();
        let report = harmonic_function(
            &action,
            &mu,
            &sol,
            DVector::from_row_slice(&[0.0, 1.0]),
            4,
            5,
        )
        .unwrap();
        // orbit moves only the first coordinate; f == <y, x_o> everywhere
        let c = report.growth_probe[0];
        for v in &report.growth_probe {
            assert!((v - c).abs() < 1e-12);
        }
    }

    #[test]
    fn fixed_vector_trivial_representation() {
        let rep = OrthogonalRepresentation::new(
            f2(),
            vec![DMatrix::<f64>::identity(3, 3), DMatrix::<f64>::identity(3, 3)],
        )
        .unwrap();
        let mu = FiniteMeasure::srw(f2());
        let report = fixed_vector_check(&rep, &mu).unwrap();
        assert_eq!(report.averaged_fixed_basis.len(), 3);
        assert_eq!(report.joint_fixed_dim, 3);
        assert!(report.violations.is_empty());
        assert!(report.dims_agree);
    }

    #[test]
    fn fixed_vector_shared_axis() {
        // two rotations about the same axis: fixed space is exactly the
        // axis, and both generators fix it
        let axis = DVector::from_row_slice(&[0.0, 0.0, 1.0]);
        let rep = OrthogonalRepresentation::new(
            f2(),
            vec![rotation3(&axis, 0.9), rotation3(&axis, 2.2)],
        )
        .unwrap();
        let mu = FiniteMeasure::srw(f2());
        let report = fixed_vector_check(&rep, &mu).unwrap();
        assert_eq!(report.averaged_fixed_basis.len(), 1);
        assert_eq!(report.joint_fixed_dim, 1);
        assert!(report.violations.is_empty());
        assert!(report.dims_agree);
        let v = &report.averaged_fixed_basis[0];
        assert!((v.normalize().dot(&axis)).abs() > 1.0 - 1e-10);
    }

    #[test]
    fn fixed_vector_generic_rotations() {
        // rotations about different axes: no common fixed vector
        let rep = OrthogonalRepresentation::new(
            f2(),
            vec![
                rotation3(&DVector::from_row_slice(&[0.0, 0.0, 1.0]), 0.8),
                rotation3(&DVector::from_row_slice(&[0.0, 1.0, 0.0]), 1.3),
            ],
        )
        .unwrap();
        let mu = FiniteMeasure::srw(f2());
        let report = fixed_vector_check(&rep, &mu).unwrap();
        assert_eq!(report.averaged_fixed_basis.len(), 0);
        assert_eq!(report.joint_fixed_dim, 0);
        assert!(report.dims_agree);
    }

    #[test]
    fn action_file_round_trip() {
        let action = random_f2_action(7);
        let text = action.to_file_format();
        let parsed = AffineIsometricAction::parse(f2(), &text).unwrap();
        let x = DVector::from_row_slice(&[0.3, -1.0, 2.0]);
        for g in f2().ball(2).unwrap() {
            let a = action.evaluate(&g, &x).unwrap();
            let b = parsed.evaluate(&g, &x).unwrap();
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn lattice_action_must_commute() {
        // two planar rotations commute; a rotation and a reflection do not
        let rot = |a: f64| {
            DMatrix::from_row_slice(2, 2, &[a.cos(), -a.sin(), a.sin(), a.cos()])
        };
        let ok = AffineIsometricAction::new(
            GroupDescriptor::lattice(2),
            vec![
                (rot(0.5), DVector::zeros(2)),
                (rot(1.0), DVector::zeros(2)),
            ],
        );
        assert!(ok.is_ok());
        let reflection = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let bad = AffineIsometricAction::new(
            GroupDescriptor::lattice(2),
            vec![
                (rot(0.5), DVector::zeros(2)),
                (reflection, DVector::zeros(2)),
            ],
        );
        assert!(bad.is_err());
    }
}
