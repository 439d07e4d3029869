//! Weyl-Zak transform, its inverse, the twist covariance law, and the
//! bracket map with its support set.
//!
//! The transform periodizes the Weyl kernel over `P = 2L` integer shifts of
//! the first kernel axis and takes a length-`P` DFT in the shift index:
//! `Z f(xi_a, xi'_b, eta_c) = sum_m K_f(m + xi_a, eta_c) exp(-2 pi i m b/P)`.
//! Because `M = N`, the points `m + xi_a` all lie on the kernel grid and the
//! transform needs no interpolation. Fibers are the `eta` vectors indexed by
//! one torus point `(xi_a, xi'_b)`.

use ndarray::{s, Array2, Array3};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grids::{check_same_spec, GridSpec, SampledFunction};
use crate::twist::{half_phase, twisted_translate, LatticePoint};
use crate::weyl::{weyl_inverse, weyl_kernel, KernelField};

/// Discretized Zak field with axes `(xi: M, xi': P, eta: 2LN)` and
/// quadrature weights `1/M`, `1/P`, `1/N`.
#[derive(Debug, Clone)]
pub struct ZakField {
    spec: GridSpec,
    values: Array3<Complex64>,
    source_label: String,
}

impl ZakField {
    pub fn new(spec: GridSpec, values: Array3<Complex64>, source_label: impl Into<String>) -> Result<Self> {
        let want = (spec.torus_samples(), spec.periods(), spec.len());
        if values.dim() != want {
            return Err(Error::InvalidGrid(format!(
                "zak field is {:?}, grid wants {:?}",
                values.dim(),
                want
            )));
        }
        Ok(ZakField {
            spec,
            values,
            source_label: source_label.into(),
        })
    }

    pub fn zeros(spec: GridSpec, source_label: impl Into<String>) -> Self {
        ZakField {
            spec,
            values: Array3::zeros((spec.torus_samples(), spec.periods(), spec.len())),
            source_label: source_label.into(),
        }
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn values(&self) -> &Array3<Complex64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array3<Complex64> {
        &mut self.values
    }

    pub fn source_label(&self) -> &str {
        &self.source_label
    }

    /// Total L2 norm; equals the source function norm up to quadrature error.
    pub fn norm(&self) -> f64 {
        let s: f64 = self.values.iter().map(|v| v.norm_sqr()).sum();
        (s * self.spec.zak_weight()).sqrt()
    }

    /// Fiber inner product `<self(a,b), other(a,b)>` with weight `1/N`.
    pub fn fiber_inner(&self, other: &ZakField, a: usize, b: usize) -> Complex64 {
        let fa = self.values.slice(s![a, b, ..]);
        let fb = other.values.slice(s![a, b, ..]);
        let mut acc = Complex64::new(0.0, 0.0);
        for (x, y) in fa.iter().zip(fb.iter()) {
            acc += x * y.conj();
        }
        acc * self.spec.dx()
    }

    pub fn fiber_norm(&self, a: usize, b: usize) -> f64 {
        let fa = self.values.slice(s![a, b, ..]);
        let s: f64 = fa.iter().map(|v| v.norm_sqr()).sum();
        (s * self.spec.dx()).sqrt()
    }

    /// All fiber inner products against `other` as a torus array.
    pub fn fiber_inner_field(&self, other: &ZakField) -> Array2<Complex64> {
        let (m, p) = (self.spec.torus_samples(), self.spec.periods());
        Array2::from_shape_fn((m, p), |(a, b)| self.fiber_inner(other, a, b))
    }

    /// Subtract the fiber-wise projection onto `other` (any fiber profile).
    pub fn project_out(&mut self, other: &ZakField) {
        let (m, p) = (self.spec.torus_samples(), self.spec.periods());
        for a in 0..m {
            for b in 0..p {
                let denom = other.fiber_norm(a, b);
                if denom == 0.0 {
                    continue;
                }
                let coeff = self.fiber_inner(other, a, b) / (denom * denom);
                let ov = other.values.slice(s![a, b, ..]).to_owned();
                let mut sv = self.values.slice_mut(s![a, b, ..]);
                for (x, o) in sv.iter_mut().zip(ov.iter()) {
                    *x -= coeff * o;
                }
            }
        }
    }

    /// Multiply each fiber by the scalar torus function `m(a, b)`.
    pub fn scale_fibers(&mut self, scalars: &Array2<Complex64>) {
        let (m, p) = (self.spec.torus_samples(), self.spec.periods());
        for a in 0..m {
            for b in 0..p {
                let c = scalars[[a, b]];
                for x in self.values.slice_mut(s![a, b, ..]).iter_mut() {
                    *x *= c;
                }
            }
        }
    }

    pub fn add_scaled(&mut self, c: Complex64, other: &ZakField) {
        self.values.zip_mut_with(&other.values, |x, y| *x += c * y);
    }

    pub fn sub_norm(&self, other: &ZakField) -> f64 {
        let mut s = 0.0f64;
        for (x, y) in self.values.iter().zip(other.values.iter()) {
            s += (x - y).norm_sqr();
        }
        (s * self.spec.zak_weight()).sqrt()
    }
}

fn fft_plans(p: usize) -> (Arc<dyn rustfft::Fft<f64>>, Arc<dyn rustfft::Fft<f64>>) {
    let mut planner = FftPlanner::<f64>::new();
    (planner.plan_fft_forward(p), planner.plan_fft_inverse(p))
}

/// Forward Zak transform. The `m` window is `-L..L`, realized as a
/// length-`P` DFT over the periodized kernel rows; the window offset
/// contributes the exact alternating sign `(-1)^b` since `P = 2L`.
pub fn zak_transform(f: &SampledFunction) -> ZakField {
    let kernel = weyl_kernel(f);
    zak_of_kernel(&kernel)
}

pub fn zak_of_kernel(kernel: &KernelField) -> ZakField {
    let spec = kernel.spec();
    let (m, p, q) = (spec.torus_samples(), spec.periods(), spec.len());
    let n = spec.samples() as usize;
    let fwd = fft_plans(p).0;
    let kv = kernel.values();

    let mut values = Array3::<Complex64>::zeros((m, p, q));
    values
        .outer_iter_mut()
        .into_par_iter()
        .enumerate()
        .for_each(|(a, mut plane)| {
            let mut buf = vec![Complex64::new(0.0, 0.0); p];
            for c in 0..q {
                for (mu, slot) in buf.iter_mut().enumerate() {
                    *slot = kv[[a + mu * n, c]];
                }
                fwd.process(&mut buf);
                for (b, v) in buf.iter().enumerate() {
                    plane[[b, c]] = if b % 2 == 0 { *v } else { -*v };
                }
            }
        });
    ZakField {
        spec,
        values,
        source_label: kernel.source_label().to_string(),
    }
}

/// Inverse Zak transform: inverse DFT over `xi'` recovers the periodized
/// kernel, then the kernel inversion recovers the function. This is the
/// minimum-norm inverse; composing forward after inverse projects onto the
/// attainable fields.
pub fn inverse_zak(field: &ZakField) -> SampledFunction {
    let kernel = kernel_of_zak(field);
    let mut f = weyl_inverse(&kernel);
    f.set_label(format!("izak[{}]", field.source_label()));
    f
}

pub fn kernel_of_zak(field: &ZakField) -> KernelField {
    let spec = field.spec();
    let (m, p, q) = (spec.torus_samples(), spec.periods(), spec.len());
    let n = spec.samples() as usize;
    let inv = fft_plans(p).1;

    let mut kv = Array2::<Complex64>::zeros((q, q));
    // Rows a, a+N, a+2N, ... of the kernel come from plane a of the field.
    let planes: Vec<Array2<Complex64>> = (0..m)
        .into_par_iter()
        .map(|a| {
            let mut rows = Array2::<Complex64>::zeros((p, q));
            let mut buf = vec![Complex64::new(0.0, 0.0); p];
            for c in 0..q {
                for (b, slot) in buf.iter_mut().enumerate() {
                    let v = field.values[[a, b, c]];
                    *slot = if b % 2 == 0 { v } else { -v };
                }
                inv.process(&mut buf);
                for (mu, v) in buf.iter().enumerate() {
                    rows[[mu, c]] = *v / p as f64;
                }
            }
            rows
        })
        .collect();
    for (a, rows) in planes.iter().enumerate() {
        for mu in 0..p {
            kv.row_mut(a + mu * n).assign(&rows.row(mu));
        }
    }
    KernelField::new(spec, kv, field.source_label().to_string())
}

/// Relative residual of the covariance law
/// `Z(T_{(k,l)} f) = exp(2 pi i (k xi + l xi')) exp(i pi k l) Z f`.
pub fn zak_twist_residual(f: &SampledFunction, p: LatticePoint) -> Result<f64> {
    let z0 = zak_transform(f);
    let z1 = zak_transform(&twisted_translate(f, p)?);
    let spec = f.spec();
    let (m, pp) = (spec.torus_samples(), spec.periods());

    let mut diff2 = 0.0f64;
    let mut ref2 = 0.0f64;
    for a in 0..m {
        for b in 0..pp {
            let theta = 2.0 * (p.k as f64 * spec.xi(a) + p.l as f64 * spec.xi_prime(b))
                + (p.k * p.l) as f64;
            let phase = half_phase(theta);
            let f0 = z0.values.slice(s![a, b, ..]);
            let f1 = z1.values.slice(s![a, b, ..]);
            for (x1, x0) in f1.iter().zip(f0.iter()) {
                diff2 += (x1 - phase * x0).norm_sqr();
                ref2 += x0.norm_sqr();
            }
        }
    }
    if ref2 == 0.0 {
        return Ok(0.0);
    }
    Ok((diff2 / ref2).sqrt())
}

/// Bracket values on the torus grid with the support mask.
#[derive(Debug, Clone)]
pub struct BracketField {
    spec: GridSpec,
    values: Array2<Complex64>,
    eps_support: f64,
    omega_mask: Array2<bool>,
}

impl BracketField {
    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn values(&self) -> &Array2<Complex64> {
        &self.values
    }

    /// Relative support threshold in use.
    pub fn eps_support(&self) -> f64 {
        self.eps_support
    }

    pub fn omega_mask(&self) -> &Array2<bool> {
        &self.omega_mask
    }

    pub fn omega_fraction(&self) -> f64 {
        let total = self.omega_mask.len();
        let on = self.omega_mask.iter().filter(|&&b| b).count();
        on as f64 / total as f64
    }

    /// L1 norm over the torus, weight `1/(M P)`.
    pub fn l1_norm(&self) -> f64 {
        let s: f64 = self.values.iter().map(|v| v.norm()).sum();
        s * self.spec.torus_weight()
    }

    /// Torus integral of the values.
    pub fn integral(&self) -> Complex64 {
        let s: Complex64 = self.values.iter().sum();
        s * self.spec.torus_weight()
    }

    /// Min and max of the real part over the support mask; `None` if the
    /// mask is empty.
    pub fn range_on_omega(&self) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut seen = false;
        for (v, &m) in self.values.iter().zip(self.omega_mask.iter()) {
            if m {
                seen = true;
                lo = lo.min(v.re);
                hi = hi.max(v.re);
            }
        }
        seen.then_some((lo, hi))
    }
}

pub const DEFAULT_EPS_SUPPORT: f64 = 1e-8;

/// Bracket map `[f, g](xi, xi') = int Z f conj(Z g) d eta` with the default
/// relative support threshold.
pub fn bracket(f: &SampledFunction, g: &SampledFunction) -> Result<BracketField> {
    bracket_with_eps(f, g, DEFAULT_EPS_SUPPORT)
}

pub fn bracket_with_eps(
    f: &SampledFunction,
    g: &SampledFunction,
    eps_support: f64,
) -> Result<BracketField> {
    check_same_spec(f, g)?;
    let zf = zak_transform(f);
    let zg = zak_transform(g);
    Ok(bracket_of_fields(&zf, &zg, eps_support))
}

pub fn bracket_of_fields(zf: &ZakField, zg: &ZakField, eps_support: f64) -> BracketField {
    let spec = zf.spec();
    let values = zf.fiber_inner_field(zg);
    let max_abs = values.iter().map(|v| v.norm()).fold(0.0f64, f64::max);
    let threshold = eps_support * max_abs;
    let omega_mask = values.mapv(|v| v.norm() > threshold);
    BracketField {
        spec,
        values,
        eps_support,
        omega_mask,
    }
}

/// Test membership of `f` in the principal twisted shift-invariant space of
/// `phi`: returns the relative residual of `Z f = r Z phi` with
/// `r = [f, phi]/[phi, phi]` on the support of `phi`, together with `r`.
pub fn membership_residual(
    f: &SampledFunction,
    phi: &SampledFunction,
) -> Result<(f64, Array2<Complex64>)> {
    check_same_spec(f, phi)?;
    let nf = f.norm();
    if nf == 0.0 {
        return Err(Error::ZeroFunction(format!(
            "membership test needs a nonzero function, got '{}'",
            f.label()
        )));
    }
    let zf = zak_transform(f);
    let zp = zak_transform(phi);
    Ok(membership_residual_fields(&zf, &zp, nf))
}

pub fn membership_residual_fields(
    zf: &ZakField,
    zp: &ZakField,
    f_norm: f64,
) -> (f64, Array2<Complex64>) {
    let spec = zf.spec();
    let (m, p) = (spec.torus_samples(), spec.periods());
    let br_fp = zf.fiber_inner_field(zp);
    let br_pp = zp.fiber_inner_field(zp);
    let max_abs = br_pp.iter().map(|v| v.norm()).fold(0.0f64, f64::max);
    let threshold = DEFAULT_EPS_SUPPORT * max_abs;

    let mut r = Array2::<Complex64>::zeros((m, p));
    let mut diff2 = 0.0f64;
    for a in 0..m {
        for b in 0..p {
            let denom = br_pp[[a, b]].re;
            let coeff = if denom.abs() > threshold {
                br_fp[[a, b]] / denom
            } else {
                Complex64::new(0.0, 0.0)
            };
            r[[a, b]] = coeff;
            let ff = zf.values().slice(s![a, b, ..]);
            let pf = zp.values().slice(s![a, b, ..]);
            for (x, y) in ff.iter().zip(pf.iter()) {
                diff2 += (x - coeff * y).norm_sqr();
            }
        }
    }
    let residual = (diff2 * spec.zak_weight()).sqrt() / f_norm;
    (residual, r)
}
