//! Property-based invariants on a small grid (`L = 2`, `N = 4`), where one
//! transform costs microseconds: quadrature algebra, the composition
//! cocycle, bracket sesquilinearity, Zak linearity and the binary
//! round trips.

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use proptest::prelude::*;

use twistframe::grids::{inner, make_gaussian, make_modulated, GridSpec, SampledFunction};
use twistframe::twist::{compose_phase, LatticePoint};
use twistframe::zak::{bracket, zak_transform, ZakField};

fn small_spec() -> GridSpec {
    GridSpec::new(1, 2, 4).unwrap()
}

fn complex_strategy() -> impl Strategy<Value = Complex64> {
    (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(re, im)| Complex64::new(re, im))
}

fn function_strategy() -> impl Strategy<Value = SampledFunction> {
    let q = small_spec().len();
    proptest::collection::vec(complex_strategy(), q * q).prop_map(move |vals| {
        let arr = Array2::from_shape_vec((q, q), vals).unwrap();
        SampledFunction::new(small_spec(), arr, "random").unwrap()
    })
}

/// Smooth decaying functions inside the small box.
fn smooth_strategy() -> impl Strategy<Value = SampledFunction> {
    (
        -0.4f64..0.4,
        -0.4f64..0.4,
        0.3f64..0.5,
        -1i64..=1,
        -1i64..=1,
        complex_strategy(),
    )
        .prop_map(|(cx, cy, w, px, py, c)| {
            let g = make_gaussian(small_spec(), (cx, cy), w).unwrap();
            make_modulated(&g, px as f64, py as f64).scaled(c + Complex64::new(1.5, 0.0))
        })
}

fn lattice_strategy() -> impl Strategy<Value = LatticePoint> {
    (-3i64..=3, -3i64..=3).prop_map(|(k, l)| LatticePoint::new(k, l))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn inner_is_sesquilinear_and_conjugate_symmetric(
        f in function_strategy(),
        g in function_strategy(),
        h in function_strategy(),
        a in complex_strategy(),
        b in complex_strategy(),
    ) {
        let fg = inner(&f, &g).unwrap();
        let gf = inner(&g, &f).unwrap();
        prop_assert!((fg - gf.conj()).norm() <= 1e-14 * (1.0 + fg.norm()));

        let mut combo = f.scaled(a);
        combo.add_scaled_in_place(b, &g).unwrap();
        let lhs = inner(&combo, &h).unwrap();
        let rhs = a * inner(&f, &h).unwrap() + b * inner(&g, &h).unwrap();
        prop_assert!((lhs - rhs).norm() <= 1e-13 * (1.0 + rhs.norm()));
    }

    #[test]
    fn compose_phase_is_a_sign_cocycle(
        p in lattice_strategy(),
        q in lattice_strategy(),
        r in lattice_strategy(),
    ) {
        let one = Complex64::new(1.0, 0.0);
        let minus = Complex64::new(-1.0, 0.0);
        let c_pq = compose_phase(p, q);
        prop_assert!(c_pq == one || c_pq == minus);
        // associativity of the twisted product:
        // c(p,q) c(p+q, r) = c(q, r) c(p, q+r)
        let lhs = c_pq * compose_phase(p + q, r);
        let rhs = compose_phase(q, r) * compose_phase(p, q + r);
        prop_assert_eq!(lhs, rhs);
        // antisymmetry up to the sign structure: c(p,q) = conj(c(q,p))
        prop_assert_eq!(c_pq, compose_phase(q, p).conj());
    }

    #[test]
    fn bracket_is_sesquilinear_and_conjugate_symmetric(
        f in smooth_strategy(),
        g in smooth_strategy(),
        a in complex_strategy(),
    ) {
        let fg = bracket(&f, &g).unwrap();
        let gf = bracket(&g, &f).unwrap();
        for (x, y) in fg.values().iter().zip(gf.values().iter()) {
            prop_assert!((x - y.conj()).norm() <= 1e-13);
        }
        let fa = f.scaled(a);
        let fg_scaled = bracket(&fa, &g).unwrap();
        for (x, y) in fg_scaled.values().iter().zip(fg.values().iter()) {
            prop_assert!((x - a * y).norm() <= 1e-13 * (1.0 + y.norm()));
        }
        // self-bracket stays real and nonnegative
        let ff = bracket(&f, &f).unwrap();
        for v in ff.values().iter() {
            prop_assert!(v.re >= -1e-12 && v.im.abs() <= 1e-12);
        }
    }

    #[test]
    fn zak_transform_is_linear(
        f in smooth_strategy(),
        g in smooth_strategy(),
        a in complex_strategy(),
    ) {
        let mut combo = f.scaled(a);
        combo.add_scaled_in_place(Complex64::new(1.0, 0.0), &g).unwrap();
        let lhs = zak_transform(&combo);
        let zf = zak_transform(&f);
        let zg = zak_transform(&g);
        let mut rhs = zg;
        rhs.add_scaled(a, &zf);
        prop_assert!(lhs.sub_norm(&rhs) <= 1e-12 * (1.0 + rhs.norm()));
    }

    #[test]
    fn binary_dumps_round_trip(
        f in function_strategy(),
        zvals in proptest::collection::vec(complex_strategy(), 4 * 4 * 16),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let spec = small_spec();

        let path = dir.path().join("f.twsf");
        twistframe::io::write_function_binary(&f, &path).unwrap();
        let back = twistframe::io::read_function_binary(spec, &path).unwrap();
        prop_assert_eq!(f.values(), back.values());

        let arr = Array3::from_shape_vec((4, 4, 16), zvals).unwrap();
        let z = ZakField::new(spec, arr, "z").unwrap();
        let zpath = dir.path().join("z.twzf");
        twistframe::io::write_zak_binary(&z, &zpath).unwrap();
        let zback = twistframe::io::read_zak_binary(spec, &zpath).unwrap();
        prop_assert_eq!(z.values(), zback.values());
    }
}
