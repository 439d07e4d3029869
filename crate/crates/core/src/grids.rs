//! Uniform grids on the truncation box, quadrature, and the built-in
//! generator functions.
//!
//! Functions live on `[-L, L)^2` sampled with spacing `1/N`, so grid points
//! along each axis are `x_j = -L + j/N` for `j = 0..2LN-1`. The torus
//! variables use `M = N` samples for the first torus axis (so torus points
//! embed exactly into the real grid) and `P = 2L` samples for the second.
//! Quadrature is the plain Riemann sum with weight `(1/N)^2`.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Grid geometry shared by every sampled object.
///
/// `n` is the dimension parameter of the ambient space `R^{2n}`; only
/// `n = 1` (functions of two real variables) is implemented. `half_width`
/// is the box half-width `L`, `samples` the number of samples per unit
/// length `N` (a power of two). The derived torus resolutions are `M = N`
/// and `P = 2L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridSpec {
    n: usize,
    half_width: u32,
    samples: u32,
}

impl GridSpec {
    pub fn new(n: usize, half_width: u32, samples: u32) -> Result<Self> {
        if n != 1 {
            return Err(Error::Unsupported(format!(
                "dimension parameter n = {n}; this implementation supports n = 1"
            )));
        }
        if half_width < 2 {
            return Err(Error::InvalidGrid(format!(
                "half width L = {half_width}, need L >= 2"
            )));
        }
        if samples < 2 || !samples.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "samples per unit N = {samples}, need a power of two >= 2"
            )));
        }
        Ok(GridSpec {
            n,
            half_width,
            samples,
        })
    }

    /// Default desk-scale grid: `n = 1`, `L = 8`, `N = 16`.
    pub fn default_spec() -> Self {
        GridSpec::new(1, 8, 16).expect("default grid is valid")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Box half-width `L`.
    pub fn half_width(&self) -> u32 {
        self.half_width
    }

    /// Samples per unit length `N`.
    pub fn samples(&self) -> u32 {
        self.samples
    }

    /// Points per real axis, `2LN`.
    pub fn len(&self) -> usize {
        (2 * self.half_width * self.samples) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Torus samples for the first torus axis, `M = N`.
    pub fn torus_samples(&self) -> usize {
        self.samples as usize
    }

    /// Retained integer periods and samples of the second torus axis, `P = 2L`.
    pub fn periods(&self) -> usize {
        (2 * self.half_width) as usize
    }

    /// Grid coordinate `x_j = -L + j/N`.
    pub fn coord(&self, j: usize) -> f64 {
        -(self.half_width as f64) + j as f64 / self.samples as f64
    }

    /// First torus coordinate `xi_a = a/M`.
    pub fn xi(&self, a: usize) -> f64 {
        a as f64 / self.torus_samples() as f64
    }

    /// Second torus coordinate `xi'_b = b/P`.
    pub fn xi_prime(&self, b: usize) -> f64 {
        b as f64 / self.periods() as f64
    }

    /// Grid spacing `1/N`.
    pub fn dx(&self) -> f64 {
        1.0 / self.samples as f64
    }

    /// Riemann weight for one 2D sample, `(1/N)^2`.
    pub fn quad_weight(&self) -> f64 {
        self.dx() * self.dx()
    }

    /// Quadrature weight of one fiber sample of a Zak field, `1/(M P N)`.
    pub fn zak_weight(&self) -> f64 {
        1.0 / (self.torus_samples() as f64 * self.periods() as f64 * self.samples as f64)
    }

    /// Weight of one torus cell, `1/(M P)`.
    pub fn torus_weight(&self) -> f64 {
        1.0 / (self.torus_samples() as f64 * self.periods() as f64)
    }
}

/// Complex samples of a function on the box grid, with a free-text label.
#[derive(Debug, Clone)]
pub struct SampledFunction {
    spec: GridSpec,
    values: Array2<Complex64>,
    label: String,
}

impl SampledFunction {
    pub fn new(spec: GridSpec, values: Array2<Complex64>, label: impl Into<String>) -> Result<Self> {
        let q = spec.len();
        if values.dim() != (q, q) {
            return Err(Error::InvalidGrid(format!(
                "value array is {:?}, grid wants ({q}, {q})",
                values.dim()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidGrid("non-finite sample value".into()));
        }
        Ok(SampledFunction {
            spec,
            values,
            label: label.into(),
        })
    }

    pub fn zero(spec: GridSpec, label: impl Into<String>) -> Self {
        let q = spec.len();
        SampledFunction {
            spec,
            values: Array2::zeros((q, q)),
            label: label.into(),
        }
    }

    /// Build from a pointwise map on grid coordinates.
    pub fn from_fn(
        spec: GridSpec,
        label: impl Into<String>,
        f: impl Fn(f64, f64) -> Complex64,
    ) -> Self {
        let q = spec.len();
        let values = Array2::from_shape_fn((q, q), |(j, m)| f(spec.coord(j), spec.coord(m)));
        SampledFunction {
            spec,
            values,
            label: label.into(),
        }
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn values(&self) -> &Array2<Complex64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array2<Complex64> {
        &mut self.values
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn set_label(&mut self, label: impl Into<String>) {
        self.label = label.into();
    }

    pub fn norm(&self) -> f64 {
        let s: f64 = self.values.iter().map(|v| v.norm_sqr()).sum();
        (s * self.spec.quad_weight()).sqrt()
    }

    pub fn scaled(&self, c: Complex64) -> SampledFunction {
        SampledFunction {
            spec: self.spec,
            values: self.values.mapv(|v| v * c),
            label: self.label.clone(),
        }
    }

    pub fn add(&self, other: &SampledFunction) -> Result<SampledFunction> {
        check_same_spec(self, other)?;
        Ok(SampledFunction {
            spec: self.spec,
            values: &self.values + &other.values,
            label: self.label.clone(),
        })
    }

    pub fn sub(&self, other: &SampledFunction) -> Result<SampledFunction> {
        check_same_spec(self, other)?;
        Ok(SampledFunction {
            spec: self.spec,
            values: &self.values - &other.values,
            label: self.label.clone(),
        })
    }

    pub fn add_scaled_in_place(&mut self, c: Complex64, other: &SampledFunction) -> Result<()> {
        check_same_spec(self, other)?;
        self.values.zip_mut_with(&other.values, |a, b| *a += c * b);
        Ok(())
    }
}

pub(crate) fn check_same_spec(f: &SampledFunction, g: &SampledFunction) -> Result<()> {
    if f.spec != g.spec {
        return Err(Error::GridMismatch(format!(
            "'{}' and '{}' live on different grids",
            f.label(),
            g.label()
        )));
    }
    Ok(())
}

/// L2 inner product by Riemann quadrature, conjugate-linear in `g`.
pub fn inner(f: &SampledFunction, g: &SampledFunction) -> Result<Complex64> {
    check_same_spec(f, g)?;
    let mut acc = Complex64::new(0.0, 0.0);
    for (a, b) in f.values.iter().zip(g.values.iter()) {
        acc += a * b.conj();
    }
    Ok(acc * f.spec.quad_weight())
}

pub fn norm(f: &SampledFunction) -> f64 {
    f.norm()
}

/// Relative Gaussian mass outside the box, bounded per half-plane by
/// `int_a^inf exp(-2 pi t^2/w^2) dt <= exp(-2 pi a^2/w^2) * w^2/(4 pi a)`.
fn gaussian_tail_bound(spec: GridSpec, center: (f64, f64), width: f64) -> f64 {
    let lf = spec.half_width() as f64;
    let total_1d = width / std::f64::consts::SQRT_2;
    let mut rel = 0.0;
    for c in [center.0, center.1] {
        for a in [lf - c, lf + c] {
            if a <= 0.0 {
                return f64::INFINITY;
            }
            let tail = (-2.0 * std::f64::consts::PI * a * a / (width * width)).exp() * width
                * width
                / (4.0 * std::f64::consts::PI * a);
            rel += tail / total_1d;
        }
    }
    rel
}

const GAUSSIAN_TAIL_TOL: f64 = 1e-12;

/// Centered squared-exponential bump `exp(-pi((x-cx)^2+(y-cy)^2)/w^2)`.
pub fn make_gaussian(spec: GridSpec, center: (f64, f64), width: f64) -> Result<SampledFunction> {
    if width <= 0.0 || !width.is_finite() {
        return Err(Error::Truncation(format!("width {width} must be positive")));
    }
    let tail = gaussian_tail_bound(spec, center, width);
    if tail > GAUSSIAN_TAIL_TOL {
        return Err(Error::Truncation(format!(
            "gaussian(center=({}, {}), width={width}) has tail mass bound {tail:.3e} > {GAUSSIAN_TAIL_TOL:.0e}",
            center.0, center.1
        )));
    }
    let label = format!("gaussian({},{},{})", center.0, center.1, width);
    Ok(SampledFunction::from_fn(spec, label, |x, y| {
        let dx = x - center.0;
        let dy = y - center.1;
        Complex64::new(
            (-std::f64::consts::PI * (dx * dx + dy * dy) / (width * width)).exp(),
            0.0,
        )
    }))
}

/// Orthonormal 1D Hermite function `h_k` adapted to the `exp(-pi x^2)` weight.
fn hermite_1d(k: u32, x: f64) -> f64 {
    let t = (2.0 * std::f64::consts::PI).sqrt() * x;
    let mut prev = 0.0f64;
    // h_0 before the (2 pi)^(1/4) grid normalization: pi^(-1/4) exp(-t^2/2)
    let mut cur = std::f64::consts::PI.powf(-0.25) * (-0.5 * t * t).exp();
    for j in 1..=k {
        let next = (2.0 / j as f64).sqrt() * t * cur - ((j as f64 - 1.0) / j as f64).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    (2.0 * std::f64::consts::PI).powf(0.25) * cur
}

/// Separable Hermite generator `h_k(x-cx) h_0(y-cy)`, unit L2 norm.
pub fn make_hermite(spec: GridSpec, k: u32, center: (f64, f64)) -> Result<SampledFunction> {
    // Tail of h_k is polynomial times the unit Gaussian tail; the k <= 8
    // range used here stays far below the bound for any interior center.
    if k > 8 {
        return Err(Error::Unsupported(format!("hermite order {k} > 8")));
    }
    let tail = gaussian_tail_bound(spec, center, 1.2 + 0.2 * k as f64);
    if tail > GAUSSIAN_TAIL_TOL {
        return Err(Error::Truncation(format!(
            "hermite({k}) at ({}, {}) has tail mass bound {tail:.3e}",
            center.0, center.1
        )));
    }
    let label = format!("hermite({k},{},{})", center.0, center.1);
    Ok(SampledFunction::from_fn(spec, label, |x, y| {
        Complex64::new(hermite_1d(k, x - center.0) * hermite_1d(0, y - center.1), 0.0)
    }))
}

/// Indicator of the half-open rectangle `[a, b) x [c, d)`.
pub fn make_indicator(spec: GridSpec, a: f64, b: f64, c: f64, d: f64) -> Result<SampledFunction> {
    let lf = spec.half_width() as f64;
    if a >= b || c >= d {
        return Err(Error::InvalidGrid(format!(
            "empty indicator rectangle [{a},{b}) x [{c},{d})"
        )));
    }
    if a < -lf || b > lf || c < -lf || d > lf {
        return Err(Error::Truncation(format!(
            "indicator [{a},{b}) x [{c},{d}) leaves the box [-{lf},{lf})^2"
        )));
    }
    let label = format!("indicator({a},{b},{c},{d})");
    Ok(SampledFunction::from_fn(spec, label, |x, y| {
        if x >= a && x < b && y >= c && y < d {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    }))
}

/// Multiply a base generator by the plane wave `exp(2 pi i (px x + py y))`.
pub fn make_modulated(base: &SampledFunction, px: f64, py: f64) -> SampledFunction {
    let spec = base.spec();
    let q = spec.len();
    let values = Array2::from_shape_fn((q, q), |(j, m)| {
        let phase = 2.0 * std::f64::consts::PI * (px * spec.coord(j) + py * spec.coord(m));
        base.values()[[j, m]] * Complex64::new(phase.cos(), phase.sin())
    });
    let label = format!("modulated({},{px},{py})", base.label());
    SampledFunction {
        spec,
        values,
        label,
    }
}

/// Parse a generator expression: `gaussian(cx,cy,w)`, `hermite(k,cx,cy)`,
/// `indicator(a,b,c,d)`, or `modulated(base,px,py)` with a nested base.
pub fn parse_generator(spec: GridSpec, expr: &str) -> Result<SampledFunction> {
    let expr = expr.trim();
    let open = expr
        .find('(')
        .ok_or_else(|| Error::Parse(format!("expected '(' in generator '{expr}'")))?;
    if !expr.ends_with(')') {
        return Err(Error::Parse(format!("expected ')' at end of '{expr}'")));
    }
    let name = expr[..open].trim();
    let body = &expr[open + 1..expr.len() - 1];
    let args = split_args(body)?;
    let num = |s: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::Parse(format!("bad number '{s}' in '{expr}'")))
    };
    match name {
        "gaussian" => {
            if args.len() != 3 {
                return Err(Error::Parse(format!("gaussian wants 3 args, got '{expr}'")));
            }
            make_gaussian(spec, (num(args[0])?, num(args[1])?), num(args[2])?)
        }
        "hermite" => {
            if args.len() != 3 {
                return Err(Error::Parse(format!("hermite wants 3 args, got '{expr}'")));
            }
            let k = num(args[0])?;
            if k < 0.0 || k.fract() != 0.0 {
                return Err(Error::Parse(format!("hermite order must be a nonnegative integer in '{expr}'")));
            }
            make_hermite(spec, k as u32, (num(args[1])?, num(args[2])?))
        }
        "indicator" => {
            if args.len() != 4 {
                return Err(Error::Parse(format!("indicator wants 4 args, got '{expr}'")));
            }
            make_indicator(spec, num(args[0])?, num(args[1])?, num(args[2])?, num(args[3])?)
        }
        "modulated" => {
            if args.len() != 3 {
                return Err(Error::Parse(format!("modulated wants 3 args, got '{expr}'")));
            }
            let base = parse_generator(spec, args[0])?;
            Ok(make_modulated(&base, num(args[1])?, num(args[2])?))
        }
        other => Err(Error::Parse(format!("unknown generator '{other}'"))),
    }
}

/// Split a comma-separated argument list, respecting nested parentheses.
fn split_args(body: &str) -> Result<Vec<&str>> {
    let mut args = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    for (i, ch) in body.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => {
                depth = depth
                    .checked_sub(1)
                    .ok_or_else(|| Error::Parse(format!("unbalanced ')' in '{body}'")))?;
            }
            ',' if depth == 0 => {
                args.push(&body[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(Error::Parse(format!("unbalanced '(' in '{body}'")));
    }
    args.push(&body[start..]);
    Ok(args)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_spec() -> GridSpec {
        GridSpec::default_spec()
    }

    #[test]
    fn gaussian_peak_is_one() {
        let spec = default_spec();
        let f = make_gaussian(spec, (0.0, 0.0), 1.0).unwrap();
        // origin is index LN on each axis
        let j0 = (spec.half_width() * spec.samples()) as usize;
        assert_eq!(f.values()[[j0, j0]], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn gaussian_norm_matches_closed_form() {
        let spec = default_spec();
        let f = make_gaussian(spec, (0.0, 0.0), 1.0).unwrap();
        // ||f||^2 = int exp(-2 pi (x^2+y^2)) = 1/2
        let n2 = inner(&f, &f).unwrap().re;
        assert!((n2 - 0.5).abs() <= 1e-10, "norm^2 = {n2}");
    }

    #[test]
    fn gaussian_outside_box_rejected() {
        let spec = default_spec();
        let err = make_gaussian(spec, (9.0, 0.0), 1.0).unwrap_err();
        assert!(matches!(err, Error::Truncation(_)));
    }

    #[test]
    fn wide_gaussian_rejected() {
        let spec = default_spec();
        assert!(make_gaussian(spec, (0.0, 0.0), 6.0).is_err());
    }

    #[test]
    fn inner_conjugate_symmetric_and_linear() {
        let spec = default_spec();
        let f = make_gaussian(spec, (0.5, -0.25), 1.0).unwrap();
        let g = make_modulated(&make_gaussian(spec, (-1.0, 0.5), 1.25).unwrap(), 1.0, -1.0);
        let fg = inner(&f, &g).unwrap();
        let gf = inner(&g, &f).unwrap();
        assert!((fg - gf.conj()).norm() <= 1e-14 * fg.norm().max(1.0));

        let c = Complex64::new(0.3, -1.7);
        let lhs = inner(&f.scaled(c), &g).unwrap();
        assert!((lhs - c * fg).norm() <= 1e-14 * lhs.norm().max(1.0));
    }

    #[test]
    fn inner_with_zero_is_zero() {
        let spec = default_spec();
        let f = make_gaussian(spec, (0.0, 0.0), 1.0).unwrap();
        let z = SampledFunction::zero(spec, "0");
        assert_eq!(inner(&f, &z).unwrap(), Complex64::new(0.0, 0.0));
        assert_eq!(z.norm(), 0.0);
    }

    #[test]
    fn norm_is_homogeneous() {
        let spec = default_spec();
        let f = make_gaussian(spec, (0.0, 0.0), 1.0).unwrap();
        let c = Complex64::new(-2.0, 1.0);
        let lhs = f.scaled(c).norm();
        assert!((lhs - c.norm() * f.norm()).abs() <= 1e-14 * lhs);
    }

    #[test]
    fn gaussian_norm_stable_under_refinement() {
        let coarse = GridSpec::new(1, 8, 16).unwrap();
        let fine = GridSpec::new(1, 8, 32).unwrap();
        let a = make_gaussian(coarse, (0.0, 0.0), 1.0).unwrap().norm();
        let b = make_gaussian(fine, (0.0, 0.0), 1.0).unwrap().norm();
        assert!((a - b).abs() <= 1e-10, "norms {a} vs {b}");
    }

    #[test]
    fn hermites_are_orthonormal() {
        let spec = default_spec();
        let h1 = make_hermite(spec, 1, (0.0, 0.0)).unwrap();
        let h2 = make_hermite(spec, 2, (0.0, 0.0)).unwrap();
        assert!((h1.norm() - 1.0).abs() <= 1e-10);
        assert!((h2.norm() - 1.0).abs() <= 1e-10);
        assert!(inner(&h1, &h2).unwrap().norm() <= 1e-10);
    }

    #[test]
    fn grid_mismatch_detected() {
        let f = make_gaussian(GridSpec::new(1, 8, 16).unwrap(), (0.0, 0.0), 1.0).unwrap();
        let g = make_gaussian(GridSpec::new(1, 8, 32).unwrap(), (0.0, 0.0), 1.0).unwrap();
        assert!(matches!(inner(&f, &g), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn parse_generator_accepts_nested_expressions() {
        let spec = default_spec();
        let f = parse_generator(spec, "modulated(gaussian(0,0,1), 1, -1)").unwrap();
        let g = make_modulated(&make_gaussian(spec, (0.0, 0.0), 1.0).unwrap(), 1.0, -1.0);
        let d = f.sub(&g).unwrap().norm();
        assert!(d <= 1e-15);
        assert!(parse_generator(spec, "gaussian(0,0)").is_err());
        assert!(parse_generator(spec, "blob(1,2,3)").is_err());
        assert!(parse_generator(spec, "hermite(1.5,0,0)").is_err());
    }

    #[test]
    fn indicator_inside_box_only() {
        let spec = default_spec();
        let f = make_indicator(spec, -1.0, 1.0, -1.0, 1.0).unwrap();
        assert!((f.norm() - 2.0).abs() <= 1e-12); // area 4, norm 2
        assert!(make_indicator(spec, -9.0, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(GridSpec::new(2, 8, 16).is_err());
        assert!(GridSpec::new(1, 1, 16).is_err());
        assert!(GridSpec::new(1, 8, 12).is_err());
    }
}
