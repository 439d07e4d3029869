//! Test corpus and seeded random probe functions.
//!
//! Probes are kept well inside the box so truncated lattice sums converge:
//! random smooth functions mix a few modulated bumps with centers in
//! `[-2, 2]^2` and widths in `[0.8, 1.4]`; members of a twisted
//! shift-invariant space combine translates with `|k|, |l| <= 2`.

use num_complex::Complex64;
use rand::Rng;

use crate::error::Result;
use crate::grids::{make_gaussian, make_hermite, make_modulated, GridSpec, SampledFunction};
use crate::twist::{translate_clipped, LatticePoint};

/// Ten smooth, decaying functions exercising widths, centers, Hermite
/// orders and modulations.
pub fn standard_corpus(spec: GridSpec) -> Vec<SampledFunction> {
    vec![
        make_gaussian(spec, (0.0, 0.0), 1.0).unwrap(),
        make_gaussian(spec, (0.0, 0.0), 2.0).unwrap(),
        make_gaussian(spec, (0.0, 0.0), 0.75).unwrap(),
        make_gaussian(spec, (1.0, -1.0), 1.0).unwrap(),
        make_gaussian(spec, (-0.5, 0.5), 1.25).unwrap(),
        make_hermite(spec, 1, (0.0, 0.0)).unwrap(),
        make_hermite(spec, 2, (0.0, 0.0)).unwrap(),
        make_hermite(spec, 3, (0.5, -0.5)).unwrap(),
        make_modulated(&make_gaussian(spec, (0.0, 0.0), 1.0).unwrap(), 1.0, 0.0),
        make_modulated(&make_gaussian(spec, (0.5, 0.0), 1.2).unwrap(), 1.0, -1.0),
    ]
}

fn random_unit(rng: &mut impl Rng) -> Complex64 {
    let re: f64 = rng.gen_range(-1.0..1.0);
    let im: f64 = rng.gen_range(-1.0..1.0);
    Complex64::new(re, im)
}

/// Random smooth interior function: a mixture of two or three modulated
/// Gaussian bumps, normalized to unit norm.
pub fn random_smooth(spec: GridSpec, rng: &mut impl Rng) -> SampledFunction {
    let bumps = rng.gen_range(2..=3);
    let mut f = SampledFunction::zero(spec, "random");
    for _ in 0..bumps {
        let cx = rng.gen_range(-2.0..2.0);
        let cy = rng.gen_range(-2.0..2.0);
        let w = rng.gen_range(0.8..1.4);
        let px = rng.gen_range(-2i64..=2) as f64;
        let py = rng.gen_range(-2i64..=2) as f64;
        let bump = make_modulated(&make_gaussian(spec, (cx, cy), w).unwrap(), px, py);
        f.add_scaled_in_place(random_unit(rng), &bump).unwrap();
    }
    let n = f.norm();
    if n > 0.0 {
        f = f.scaled(Complex64::new(1.0 / n, 0.0));
    }
    f.set_label("random".to_string());
    f
}

/// Random member of the span of twisted translates of the given functions,
/// using shifts `|k|, |l| <= rmax`. Unit norm.
pub fn random_member(
    basis: &[SampledFunction],
    rmax: i64,
    rng: &mut impl Rng,
) -> Result<SampledFunction> {
    let spec = basis[0].spec();
    let mut f = SampledFunction::zero(spec, "member");
    for g in basis {
        for k in -rmax..=rmax {
            for l in -rmax..=rmax {
                if rng.gen_bool(0.5) {
                    continue;
                }
                let t = translate_clipped(g, LatticePoint::new(k, l));
                f.add_scaled_in_place(random_unit(rng), &t)?;
            }
        }
    }
    let n = f.norm();
    if n > 0.0 {
        f = f.scaled(Complex64::new(1.0 / n, 0.0));
    } else {
        // all coin flips skipped; fall back to the first basis function
        f = basis[0].clone();
        let n2 = f.norm();
        if n2 > 0.0 {
            f = f.scaled(Complex64::new(1.0 / n2, 0.0));
        }
    }
    f.set_label("member".to_string());
    Ok(f)
}

/// Random member of the fiber span of the given Zak fields: each field is
/// multiplied by a random trigonometric polynomial of the given degree and
/// the sum is mapped back to a function. Membership is exact at the field
/// level, so these probes carry no translate-clipping junk.
pub fn random_span_member(
    fields: &[crate::zak::ZakField],
    degree: i64,
    rng: &mut impl Rng,
) -> SampledFunction {
    use ndarray::Array2;
    let spec = fields[0].spec();
    let (m, p) = (spec.torus_samples(), spec.periods());
    let mut total = crate::zak::ZakField::zeros(spec, "span-member");
    for field in fields {
        let mut coeffs = Vec::new();
        for k in -degree..=degree {
            for l in -degree..=degree {
                coeffs.push((k, l, random_unit(rng)));
            }
        }
        let scalars = Array2::from_shape_fn((m, p), |(a, b)| {
            let mut acc = Complex64::new(0.0, 0.0);
            for &(k, l, c) in &coeffs {
                let arg = 2.0
                    * std::f64::consts::PI
                    * (k as f64 * spec.xi(a) + l as f64 * spec.xi_prime(b));
                acc += c * Complex64::new(arg.cos(), arg.sin());
            }
            acc
        });
        let mut part = field.clone();
        part.scale_fibers(&scalars);
        total.add_scaled(Complex64::new(1.0, 0.0), &part);
    }
    let mut f = crate::zak::inverse_zak(&total);
    let n = f.norm();
    if n > 0.0 {
        f = f.scaled(Complex64::new(1.0 / n, 0.0));
    }
    f.set_label("span-member".to_string());
    f
}
