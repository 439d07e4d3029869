//! Frame analysis for systems of twisted translates: frame bounds from the
//! bracket, the brute-force translate Gramian, fiber Gram and dual Gram
//! matrices, Parseval-izing a generator, orthogonal decomposition of a
//! finite generator family, and the frame operator with its inverse.
//!
//! Parseval generators are constructed by a fixpoint: normalize the fibers,
//! map back to a box function, re-transform, repeat. Mapping back and forth
//! projects onto the fields attainable from box samples, so the iteration
//! alternates between the unit-fiber constraint and the attainable set and
//! converges linearly whenever the two nearly intersect.

use nalgebra::{DMatrix, DVector};
use ndarray::{s, Array2};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grids::{inner, GridSpec, SampledFunction};
use crate::twist::{translate_clipped, LatticePoint};
use crate::zak::{bracket, inverse_zak, zak_transform, ZakField};

/// Finite ordered family of generators on one grid.
#[derive(Debug, Clone)]
pub struct GeneratorSet {
    generators: Vec<SampledFunction>,
}

impl GeneratorSet {
    pub fn new(generators: Vec<SampledFunction>) -> Result<Self> {
        let first = generators
            .first()
            .ok_or_else(|| Error::InvalidGrid("generator set is empty".into()))?;
        let spec = first.spec();
        for g in &generators {
            if g.spec() != spec {
                return Err(Error::GridMismatch(format!(
                    "generator '{}' uses a different grid",
                    g.label()
                )));
            }
        }
        for (i, g) in generators.iter().enumerate() {
            for h in generators.iter().skip(i + 1) {
                if g.label() == h.label() {
                    return Err(Error::InvalidGrid(format!(
                        "duplicate generator label '{}'",
                        g.label()
                    )));
                }
            }
        }
        Ok(GeneratorSet { generators })
    }

    pub fn single(generator: SampledFunction) -> Self {
        GeneratorSet {
            generators: vec![generator],
        }
    }

    pub fn spec(&self) -> GridSpec {
        self.generators[0].spec()
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    pub fn get(&self, i: usize) -> &SampledFunction {
        &self.generators[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &SampledFunction> {
        self.generators.iter()
    }

    pub fn labels(&self) -> Vec<&str> {
        self.generators.iter().map(|g| g.label()).collect()
    }
}

/// Frame diagnostics for one generator or family.
#[derive(Debug, Clone)]
pub struct FrameReport {
    pub label: String,
    pub lower: f64,
    pub upper: f64,
    pub lower_estimate: Option<f64>,
    pub upper_estimate: Option<f64>,
    pub is_frame: bool,
    pub is_parseval: bool,
    pub omega_fraction: f64,
    pub kmax: Option<usize>,
}

pub const PARSEVAL_TOL: f64 = 1e-6;
pub const DEFAULT_EPS_RANK: f64 = 1e-8;

/// Frame bounds of a single generator read off the bracket over its support.
pub fn frame_bounds_single(phi: &SampledFunction, eps: f64) -> Result<FrameReport> {
    if phi.norm() == 0.0 {
        return Err(Error::ZeroFunction(format!(
            "frame bounds need a nonzero generator, got '{}'",
            phi.label()
        )));
    }
    let br = bracket(phi, phi)?;
    let (lower, upper) = br
        .range_on_omega()
        .ok_or_else(|| Error::ZeroFunction(format!("empty bracket support for '{}'", phi.label())))?;
    let is_frame = lower > eps;
    let is_parseval = is_frame && (lower - 1.0).abs() <= PARSEVAL_TOL && (upper - 1.0).abs() <= PARSEVAL_TOL;
    Ok(FrameReport {
        label: phi.label().to_string(),
        lower,
        upper,
        lower_estimate: None,
        upper_estimate: None,
        is_frame,
        is_parseval,
        omega_fraction: br.omega_fraction(),
        kmax: None,
    })
}

pub(crate) fn hermitian_eigen(m: &DMatrix<Complex64>) -> (DVector<f64>, DMatrix<Complex64>) {
    let se = m.clone().symmetric_eigen();
    (se.eigenvalues, se.eigenvectors)
}

/// Brute-force oracle: assemble the Gram matrix of all twisted translates
/// `|k|, |l| <= kmax` of every generator through plain inner products and
/// return its extreme nonzero eigenvalues.
pub fn truncated_gram_translates(gens: &GeneratorSet, kmax: usize) -> Result<(f64, f64)> {
    assert!(kmax >= 1, "kmax must be positive");
    let km = kmax as i64;
    let mut translates = Vec::new();
    for g in gens.iter() {
        for k in -km..=km {
            for l in -km..=km {
                translates.push(translate_clipped(g, LatticePoint::new(k, l)));
            }
        }
    }
    let d = translates.len();
    let pairs: Vec<(usize, usize)> = (0..d)
        .flat_map(|i| (i..d).map(move |j| (i, j)))
        .collect();
    let entries: Vec<(usize, usize, Complex64)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let v = inner(&translates[i], &translates[j]).expect("same spec");
            (i, j, v)
        })
        .collect();
    let mut gram = DMatrix::<Complex64>::zeros(d, d);
    for (i, j, v) in entries {
        gram[(i, j)] = v;
        gram[(j, i)] = v.conj();
    }
    let (eigs, _) = hermitian_eigen(&gram);
    let max_eig = eigs.iter().cloned().fold(0.0f64, f64::max);
    if max_eig <= 0.0 {
        return Ok((0.0, 0.0));
    }
    let threshold = DEFAULT_EPS_RANK * max_eig;
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for &e in eigs.iter() {
        if e > threshold {
            lo = lo.min(e);
            hi = hi.max(e);
        }
    }
    Ok((lo, hi))
}

/// Options for the unit-fiber fixpoint used by `parsevalize` and `decompose`.
#[derive(Debug, Clone, Copy)]
pub struct FixpointOptions {
    /// Fibers whose seed norm falls below `zero_threshold` times the input
    /// scale are zeroed instead of normalized.
    pub zero_threshold: f64,
    /// Stop once fiber norms, off-support norms and cross inner products
    /// deviate by at most this much.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FixpointOptions {
    fn default() -> Self {
        FixpointOptions {
            zero_threshold: 1e-4,
            tol: 1e-11,
            max_iter: 160,
        }
    }
}

struct FixpointOutcome {
    function: SampledFunction,
    field: ZakField,
    deviation: f64,
    iterations: usize,
}

/// Convergence diagnostics of the unit-fiber fixpoint for one generator.
#[derive(Debug, Clone, Copy)]
pub struct FixpointDiagnostics {
    /// Worst constraint deviation of the returned function's fibers.
    pub deviation: f64,
    pub iterations: usize,
}

/// Drive `seed` to a field with unit fibers on `active`, zero fibers off it,
/// and fiber-orthogonal to every `prior` field, subject to being the
/// transform of a box function.
fn unit_fiber_fixpoint(
    seed: &ZakField,
    active: &Array2<bool>,
    prior: &[ZakField],
    label: &str,
    opts: FixpointOptions,
) -> FixpointOutcome {
    let spec = seed.spec();
    let (m, p) = (spec.torus_samples(), spec.periods());
    let mut v = seed.clone();
    let mut best_dev = f64::INFINITY;
    let mut psi = SampledFunction::zero(spec, label);
    let mut field = ZakField::zeros(spec, label);
    for it in 0..opts.max_iter {
        for w in prior {
            v.project_out(w);
        }
        for a in 0..m {
            for b in 0..p {
                let norm = v.fiber_norm(a, b);
                let mut fiber = v.values_mut().slice_mut(s![a, b, ..]);
                if active[[a, b]] && norm > 1e-13 {
                    let inv = 1.0 / norm;
                    for x in fiber.iter_mut() {
                        *x *= inv;
                    }
                } else if !active[[a, b]] {
                    fiber.fill(Complex64::new(0.0, 0.0));
                }
            }
        }
        let candidate = inverse_zak(&v);
        let recomputed = zak_transform(&candidate);

        let mut dev = 0.0f64;
        for a in 0..m {
            for b in 0..p {
                let norm = recomputed.fiber_norm(a, b);
                if active[[a, b]] {
                    dev = dev.max((norm - 1.0).abs());
                } else {
                    dev = dev.max(norm);
                }
            }
        }
        for w in prior {
            let cross = recomputed.fiber_inner_field(w);
            for c in cross.iter() {
                dev = dev.max(c.norm());
            }
        }
        if dev < best_dev {
            best_dev = dev;
            psi = candidate;
            field = recomputed.clone();
        }
        v = recomputed;
        if dev <= opts.tol {
            return FixpointOutcome {
                function: psi,
                field,
                deviation: dev,
                iterations: it + 1,
            };
        }
    }
    FixpointOutcome {
        function: psi,
        field,
        deviation: best_dev,
        iterations: opts.max_iter,
    }
}

fn active_mask(remainder: &ZakField, scale: f64, zero_threshold: f64) -> Array2<bool> {
    let spec = remainder.spec();
    let (m, p) = (spec.torus_samples(), spec.periods());
    Array2::from_shape_fn((m, p), |(a, b)| {
        remainder.fiber_norm(a, b) > zero_threshold * scale
    })
}

fn max_fiber_norm(z: &ZakField) -> f64 {
    let spec = z.spec();
    let mut hi = 0.0f64;
    for a in 0..spec.torus_samples() {
        for b in 0..spec.periods() {
            hi = hi.max(z.fiber_norm(a, b));
        }
    }
    hi
}

/// Parseval-ize a generator: the output spans the same principal twisted
/// shift-invariant space and its bracket is the indicator of the support.
pub fn parsevalize(phi: &SampledFunction) -> Result<SampledFunction> {
    parsevalize_with(phi, FixpointOptions::default())
}

pub fn parsevalize_with(phi: &SampledFunction, opts: FixpointOptions) -> Result<SampledFunction> {
    Ok(parsevalize_with_details(phi, opts)?.0)
}

pub fn parsevalize_with_details(
    phi: &SampledFunction,
    opts: FixpointOptions,
) -> Result<(SampledFunction, FixpointDiagnostics)> {
    if phi.norm() == 0.0 {
        return Err(Error::ZeroFunction(format!(
            "cannot parsevalize the zero function '{}'",
            phi.label()
        )));
    }
    let z = zak_transform(phi);
    let scale = max_fiber_norm(&z);
    let active = active_mask(&z, scale, opts.zero_threshold);
    let label = format!("parseval[{}]", phi.label());
    let outcome = unit_fiber_fixpoint(&z, &active, &[], &label, opts);
    let mut out = outcome.function;
    out.set_label(label);
    Ok((
        out,
        FixpointDiagnostics {
            deviation: outcome.deviation,
            iterations: outcome.iterations,
        },
    ))
}

/// Orthogonal Parseval decomposition of a finite generator family by
/// fiber-wise Gram-Schmidt. Generators whose remainder vanishes (up to the
/// zero threshold) produce zero outputs; the family sizes always match.
pub fn decompose(gens: &GeneratorSet) -> Result<GeneratorSet> {
    decompose_with(gens, FixpointOptions::default())
}

pub fn decompose_with(gens: &GeneratorSet, opts: FixpointOptions) -> Result<GeneratorSet> {
    Ok(decompose_with_details(gens, opts)?.0)
}

pub fn decompose_with_details(
    gens: &GeneratorSet,
    opts: FixpointOptions,
) -> Result<(GeneratorSet, Vec<FixpointDiagnostics>)> {
    let spec = gens.spec();
    let mut prior: Vec<ZakField> = Vec::new();
    let mut outputs = Vec::new();
    let mut details = Vec::new();
    for (i, phi) in gens.iter().enumerate() {
        let label = format!("parseval{}[{}]", i, phi.label());
        if phi.norm() == 0.0 {
            outputs.push(SampledFunction::zero(spec, label));
            details.push(FixpointDiagnostics {
                deviation: 0.0,
                iterations: 0,
            });
            continue;
        }
        let z = zak_transform(phi);
        let scale = max_fiber_norm(&z);
        let mut remainder = z;
        for w in &prior {
            remainder.project_out(w);
        }
        let active = active_mask(&remainder, scale, opts.zero_threshold);
        if active.iter().all(|&x| !x) {
            outputs.push(SampledFunction::zero(spec, label));
            details.push(FixpointDiagnostics {
                deviation: 0.0,
                iterations: 0,
            });
            continue;
        }
        let outcome = unit_fiber_fixpoint(&remainder, &active, &prior, &label, opts);
        let mut psi = outcome.function;
        psi.set_label(label);
        prior.push(outcome.field);
        outputs.push(psi);
        details.push(FixpointDiagnostics {
            deviation: outcome.deviation,
            iterations: outcome.iterations,
        });
    }
    Ok((GeneratorSet::new(outputs)?, details))
}

/// Residual of expanding `z` in the fiber span of `family` (least squares
/// per fiber, pseudo-inverse threshold `eps_rank`), as an absolute field
/// norm. Divide by the source norm for the relative membership residual.
pub fn span_residual(z: &ZakField, family: &[ZakField], eps_rank: f64) -> f64 {
    let spec = z.spec();
    let (m, p) = (spec.torus_samples(), spec.periods());
    let s_len = family.len();
    let mut diff2 = 0.0f64;
    for a in 0..m {
        for b in 0..p {
            let mut gram = DMatrix::<Complex64>::zeros(s_len, s_len);
            for si in 0..s_len {
                for ti in 0..s_len {
                    gram[(si, ti)] = family[ti].fiber_inner(&family[si], a, b);
                }
            }
            let rhs = DVector::<Complex64>::from_iterator(
                s_len,
                (0..s_len).map(|si| z.fiber_inner(&family[si], a, b)),
            );
            let (eigs, vecs) = hermitian_eigen(&gram);
            let max_eig = eigs.iter().cloned().fold(0.0f64, f64::max);
            let threshold = eps_rank * max_eig;
            // coefficients = G^+ rhs
            let mut coeffs = DVector::<Complex64>::zeros(s_len);
            if max_eig > 0.0 {
                let proj = vecs.adjoint() * &rhs;
                let mut scaled = proj;
                for si in 0..s_len {
                    scaled[si] = if eigs[si] > threshold {
                        scaled[si] / Complex64::new(eigs[si], 0.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    };
                }
                coeffs = &vecs * scaled;
            }
            let zf = z.values().slice(s![a, b, ..]);
            let q = spec.len();
            for c in 0..q {
                let mut rec = Complex64::new(0.0, 0.0);
                for (si, fam) in family.iter().enumerate() {
                    rec += coeffs[si] * fam.values()[[a, b, c]];
                }
                diff2 += (zf[c] - rec).norm_sqr();
            }
        }
    }
    (diff2 * spec.zak_weight()).sqrt()
}

/// Fiber Gram matrices of a generator family, with the dual Gram kept in
/// factored form through the stored fiber vectors.
#[derive(Clone)]
pub struct FiberGram {
    spec: GridSpec,
    zaks: Vec<ZakField>,
    mats: Vec<DMatrix<Complex64>>,
}

impl FiberGram {
    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn family(&self) -> &[ZakField] {
        &self.zaks
    }

    pub fn size(&self) -> usize {
        self.zaks.len()
    }

    fn index(&self, a: usize, b: usize) -> usize {
        a * self.spec.periods() + b
    }

    pub fn gram(&self, a: usize, b: usize) -> &DMatrix<Complex64> {
        &self.mats[self.index(a, b)]
    }

    /// Extreme nonzero eigenvalues of the fiber Gramians over the torus.
    /// These are the fiber-side frame bounds of the family.
    pub fn frame_bounds(&self, eps_rank: f64) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        let mut any = false;
        let global_max = self
            .mats
            .iter()
            .map(|g| {
                g.diagonal()
                    .iter()
                    .map(|d| d.re)
                    .fold(0.0f64, f64::max)
            })
            .fold(0.0f64, f64::max);
        if global_max <= 0.0 {
            return (0.0, 0.0);
        }
        for g in &self.mats {
            let (eigs, _) = hermitian_eigen(g);
            let fiber_max = eigs.iter().cloned().fold(0.0f64, f64::max);
            if fiber_max <= DEFAULT_EPS_RANK * global_max {
                continue; // fiber entirely outside the support
            }
            for &e in eigs.iter() {
                if e > eps_rank * fiber_max {
                    lo = lo.min(e);
                    hi = hi.max(e);
                    any = true;
                }
            }
        }
        if any {
            (lo, hi)
        } else {
            (0.0, 0.0)
        }
    }

    /// Apply the dual Gramian fiber-wise: `v -> sum_s <v, z_s> z_s`.
    pub fn dual_apply(&self, z: &ZakField) -> ZakField {
        let spec = self.spec;
        let mut out = ZakField::zeros(spec, format!("dualgram[{}]", z.source_label()));
        for a in 0..spec.torus_samples() {
            for b in 0..spec.periods() {
                for zs in &self.zaks {
                    let c = z.fiber_inner(zs, a, b);
                    let src = zs.values().slice(s![a, b, ..]);
                    let mut dst = out.values_mut().slice_mut(s![a, b, ..]);
                    for (d, x) in dst.iter_mut().zip(src.iter()) {
                        *d += c * x;
                    }
                }
            }
        }
        out
    }

    /// Apply the pseudo-inverse of the dual Gramian fiber-wise, restricted
    /// to the range of the synthesis map: `v -> H (G^+)^2 H* v`.
    pub fn dual_pinv_apply(&self, z: &ZakField, eps_rank: f64) -> ZakField {
        let spec = self.spec;
        let s_len = self.zaks.len();
        let mut out = ZakField::zeros(spec, format!("dualgraminv[{}]", z.source_label()));
        for a in 0..spec.torus_samples() {
            for b in 0..spec.periods() {
                let gram = self.gram(a, b);
                let rhs = DVector::<Complex64>::from_iterator(
                    s_len,
                    (0..s_len).map(|si| z.fiber_inner(&self.zaks[si], a, b)),
                );
                let (eigs, vecs) = hermitian_eigen(gram);
                let max_eig = eigs.iter().cloned().fold(0.0f64, f64::max);
                if max_eig <= 0.0 {
                    continue;
                }
                let threshold = eps_rank * max_eig;
                let proj = vecs.adjoint() * rhs;
                let mut scaled = proj;
                for si in 0..s_len {
                    scaled[si] = if eigs[si] > threshold {
                        scaled[si] / Complex64::new(eigs[si] * eigs[si], 0.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    };
                }
                let coeffs = &vecs * scaled;
                let mut dst = out.values_mut().slice_mut(s![a, b, ..]);
                for (si, zs) in self.zaks.iter().enumerate() {
                    let src = zs.values().slice(s![a, b, ..]);
                    for (d, x) in dst.iter_mut().zip(src.iter()) {
                        *d += coeffs[si] * x;
                    }
                }
            }
        }
        out
    }
}

/// Build the fiber Gram structure of a generator family.
pub fn fiber_gram(gens: &GeneratorSet) -> FiberGram {
    let spec = gens.spec();
    let zaks: Vec<ZakField> = gens.iter().map(zak_transform).collect();
    let s_len = zaks.len();
    let (m, p) = (spec.torus_samples(), spec.periods());
    let mats: Vec<DMatrix<Complex64>> = (0..m * p)
        .into_par_iter()
        .map(|fi| {
            let (a, b) = (fi / p, fi % p);
            DMatrix::from_fn(s_len, s_len, |si, ti| zaks[ti].fiber_inner(&zaks[si], a, b))
        })
        .collect();
    FiberGram { spec, zaks, mats }
}

/// Truncated frame operator `S f = sum_{|k|,|l| <= kmax, s} <f, T_{(k,l)}
/// phi_s> T_{(k,l)} phi_s`.
pub fn frame_operator_apply(
    gens: &GeneratorSet,
    f: &SampledFunction,
    kmax: usize,
) -> Result<SampledFunction> {
    let spec = gens.spec();
    let km = kmax as i64;
    let mut shifts = Vec::new();
    for k in -km..=km {
        for l in -km..=km {
            shifts.push(LatticePoint::new(k, l));
        }
    }
    let partials: Vec<Result<Array2<Complex64>>> = gens
        .iter()
        .flat_map(|g| shifts.iter().map(move |&p| (g, p)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(g, p)| {
            let t = translate_clipped(g, p);
            let c = inner(f, &t)?;
            Ok(t.values().mapv(|v| v * c))
        })
        .collect();
    let q = spec.len();
    let mut acc = Array2::<Complex64>::zeros((q, q));
    for part in partials {
        acc += &part?;
    }
    SampledFunction::new(spec, acc, format!("S[{}]", f.label()))
}

/// Options for the inverse frame operator.
#[derive(Debug, Clone, Copy)]
pub struct InverseFrameOptions {
    /// Lower frame bound below which the family is rejected.
    pub frame_eps: f64,
    /// Relative pseudo-inverse rank threshold per fiber.
    pub eps_rank: f64,
    /// Largest allowed relative membership residual of the argument.
    pub membership_tol: f64,
}

impl Default for InverseFrameOptions {
    fn default() -> Self {
        InverseFrameOptions {
            frame_eps: 1e-6,
            eps_rank: DEFAULT_EPS_RANK,
            membership_tol: 1e-4,
        }
    }
}

/// Inverse frame operator through the fiber-wise pseudo-inverse of the dual
/// Gramian. Requires the family to satisfy the frame condition and the
/// argument to lie in the generated space.
pub fn inverse_frame_operator_apply(
    gens: &GeneratorSet,
    f: &SampledFunction,
    opts: InverseFrameOptions,
) -> Result<SampledFunction> {
    let fg = fiber_gram(gens);
    inverse_frame_operator_with_gram(&fg, f, opts)
}

pub fn inverse_frame_operator_with_gram(
    fg: &FiberGram,
    f: &SampledFunction,
    opts: InverseFrameOptions,
) -> Result<SampledFunction> {
    let (lo, _) = fg.frame_bounds(opts.eps_rank);
    if lo <= opts.frame_eps {
        return Err(Error::NotAFrame(format!(
            "fiber frame lower bound {lo:.3e} <= {:.3e}",
            opts.frame_eps
        )));
    }
    let nf = f.norm();
    if nf == 0.0 {
        return Err(Error::ZeroFunction("inverse frame operator of 0".into()));
    }
    let zf = zak_transform(f);
    let res = span_residual(&zf, fg.family(), opts.eps_rank) / nf;
    if res > opts.membership_tol {
        return Err(Error::MembershipFailure(format!(
            "'{}' has membership residual {res:.3e} > {:.3e}",
            f.label(),
            opts.membership_tol
        )));
    }
    let out = fg.dual_pinv_apply(&zf, opts.eps_rank);
    let mut g = inverse_zak(&out);
    g.set_label(format!("Sinv[{}]", f.label()));
    Ok(g)
}
