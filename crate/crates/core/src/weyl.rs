//! Discretized Weyl integral kernel `K_f(xi, eta) = sum_x f(x, eta-xi)
//! exp(i pi x (xi+eta)) dx` on the shared box grid, with the
//! Hilbert-Schmidt norm (Plancherel) and the covariance law under twisted
//! translation.
//!
//! Both kernel axes reuse the real grid, so `eta - xi` is always an exact
//! grid value; differences that leave the box contribute zero. The direct
//! summation is cubic in the axis length and is the reference path; rows
//! are computed in parallel.

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::Result;
use crate::grids::{GridSpec, SampledFunction};
use crate::twist::{half_phase, twisted_translate, LatticePoint};

/// Discretized kernel on the `(xi, eta)` grid.
#[derive(Debug, Clone)]
pub struct KernelField {
    spec: GridSpec,
    values: Array2<Complex64>,
    source_label: String,
}

impl KernelField {
    pub fn new(spec: GridSpec, values: Array2<Complex64>, source_label: impl Into<String>) -> Self {
        KernelField {
            spec,
            values,
            source_label: source_label.into(),
        }
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn values(&self) -> &Array2<Complex64> {
        &self.values
    }

    pub fn source_label(&self) -> &str {
        &self.source_label
    }
}

/// Phase table `tab[t][j] = exp(sign * i pi x_j (t/N - offset))` stored row
/// major so inner sums over `j` stay contiguous.
fn phase_table(spec: GridSpec, t_len: usize, offset: f64, sign: f64) -> Vec<Complex64> {
    let q = spec.len();
    let n = spec.samples() as f64;
    let mut tab = vec![Complex64::new(0.0, 0.0); t_len * q];
    tab.par_chunks_mut(q).enumerate().for_each(|(t, row)| {
        let s = t as f64 / n - offset;
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = half_phase(sign * spec.coord(j) * s);
        }
    });
    tab
}

/// Forward kernel transform.
pub fn weyl_kernel(f: &SampledFunction) -> KernelField {
    let spec = f.spec();
    let q = spec.len();
    let ln = (spec.half_width() * spec.samples()) as usize;
    let inv_n = spec.dx();
    let lf = spec.half_width() as f64;

    // xi_a + eta_b = -2L + (a+b)/N
    let tab = phase_table(spec, 2 * q - 1, 2.0 * lf, 1.0);
    // Column-contiguous copy of f so the j-sum walks memory linearly.
    let ft = f.values().t().to_owned();
    let ft = ft.as_standard_layout().to_owned();

    let mut values = Array2::<Complex64>::zeros((q, q));
    values
        .outer_iter_mut()
        .into_par_iter()
        .enumerate()
        .for_each(|(a, mut row)| {
            for b in 0..q {
                let col = b as i64 - a as i64 + ln as i64;
                if col < 0 || col >= q as i64 {
                    continue;
                }
                let fcol = ft.row(col as usize);
                let ph = &tab[(a + b) * q..(a + b + 1) * q];
                let mut acc = Complex64::new(0.0, 0.0);
                for (v, p) in fcol.iter().zip(ph.iter()) {
                    acc += v * p;
                }
                row[b] = acc * inv_n;
            }
        });
    KernelField::new(spec, values, f.label())
}

/// Hilbert-Schmidt norm of a kernel, quadrature weight `(1/N)^2`.
pub fn hs_norm(kernel: &KernelField) -> f64 {
    let s: f64 = kernel.values.iter().map(|v| v.norm_sqr()).sum();
    (s * kernel.spec.quad_weight()).sqrt()
}

/// Reconstruct the function from its kernel: the substitution `y = eta - xi`
/// followed by the inverse Fourier sum over `xi`. Minimum-norm inverse of
/// `weyl_kernel` on the box.
pub fn weyl_inverse(kernel: &KernelField) -> SampledFunction {
    let spec = kernel.spec();
    let q = spec.len();
    let ln = (spec.half_width() * spec.samples()) as usize;
    let inv_n = spec.dx();
    let lf = spec.half_width() as f64;

    // 2 xi_a + y_k = -3L + (2a+k)/N
    let tab = phase_table(spec, 3 * q - 2, 3.0 * lf, -1.0);
    let kv = kernel.values();

    // Build the transpose (columns of f contiguous), flip at the end.
    let mut out_t = Array2::<Complex64>::zeros((q, q));
    out_t
        .outer_iter_mut()
        .into_par_iter()
        .enumerate()
        .for_each(|(k, mut col)| {
            for a in 0..q {
                let b = a as i64 + k as i64 - ln as i64;
                if b < 0 || b >= q as i64 {
                    continue;
                }
                let kval = kv[[a, b as usize]];
                if kval == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let ph = &tab[(2 * a + k) * q..(2 * a + k + 1) * q];
                for (slot, p) in col.iter_mut().zip(ph.iter()) {
                    *slot += kval * p;
                }
            }
            for slot in col.iter_mut() {
                *slot *= inv_n;
            }
        });
    let values = out_t.t().to_owned();
    SampledFunction::new(spec, values, format!("inv[{}]", kernel.source_label()))
        .expect("kernel grid is valid")
}

/// Relative residual of the kernel covariance law
/// `K_{T_{(k,l)} f}(xi, eta) = exp(i pi (2 xi + l) k) K_f(xi + l, eta)`.
pub fn kernel_twist_residual(f: &SampledFunction, p: LatticePoint) -> Result<f64> {
    let spec = f.spec();
    let q = spec.len();
    let lhs = weyl_kernel(&twisted_translate(f, p)?);
    let base = weyl_kernel(f);

    let shift = p.l * spec.samples() as i64;
    let mut diff2 = 0.0f64;
    let mut ref2 = 0.0f64;
    for a in 0..q {
        let phase = half_phase((2.0 * spec.coord(a) + p.l as f64) * p.k as f64);
        let src_row = a as i64 + shift;
        for b in 0..q {
            let rhs = if src_row >= 0 && src_row < q as i64 {
                phase * base.values[[src_row as usize, b]]
            } else {
                Complex64::new(0.0, 0.0)
            };
            diff2 += (lhs.values[[a, b]] - rhs).norm_sqr();
        }
    }
    for v in base.values.iter() {
        ref2 += v.norm_sqr();
    }
    if ref2 == 0.0 {
        return Ok(0.0);
    }
    Ok((diff2 / ref2).sqrt())
}
