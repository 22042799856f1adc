use std::sync::Arc;

use nonlocal_transport::kernel::{build_series, taylor_coefficient, Kernel, KernelSpec};
use nonlocal_transport::mellin::{h_symbol, re_h_expansion};
use nonlocal_transport::operator::{blowup_functional, GaussianMixture, VelocityOperator};
use nonlocal_transport::solver::{make_initial_bump, Preset};
use nonlocal_transport::{RadialField, RadialGrid};
use proptest::prelude::*;

fn mixture() -> impl Strategy<Value = GaussianMixture> {
    prop::collection::vec((-1.0..1.0f64, 0.5..4.0f64), 1..4)
        .prop_map(|terms| GaussianMixture { terms })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn coefficients_positive_and_decreasing(d in 1i64..=7, alpha in 0.05..1.95f64, n in 0i64..400) {
        let s = KernelSpec::new(d, alpha).unwrap();
        let a = taylor_coefficient(s, n).unwrap();
        let b = taylor_coefficient(s, n + 1).unwrap();
        prop_assert!(a > 0.0 && b > 0.0);
        prop_assert!(b < a);
    }

    #[test]
    fn kernel_reflection(d in 2i64..=5, alpha in 0.1..1.9f64, r in 0.05..0.95f64) {
        let k = Kernel::new(KernelSpec::new(d, alpha).unwrap()).unwrap();
        let inside = k.eval(r).unwrap();
        let outside = k.eval_quadrature(1.0 / r).unwrap();
        let lhs = r.powf(d as f64 - 2.0 + alpha) * inside;
        prop_assert!((outside - lhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn kernel_fast_path_matches_reference(d in 1i64..=4, alpha in 0.1..1.9f64, r in 0.01..3.0f64) {
        prop_assume!((r - 1.0).abs() > 1e-3);
        let k = Kernel::with_table(KernelSpec::new(d, alpha).unwrap()).unwrap();
        let exact = k.eval(r).unwrap();
        prop_assert!((k.eval_fast(r) - exact).abs() <= 1e-9 * (1.0 + exact.abs()));
    }

    #[test]
    fn symbol_real_part_is_even_and_matches_expansion(
        d in 1i64..=5, alpha in 0.1..1.9f64, frac in -0.9..0.9f64, lambda in 0.0..200.0f64
    ) {
        let delta = frac * alpha.min(2.0 - alpha);
        let s = KernelSpec::new(d, alpha).unwrap();
        let c = build_series(s, 1e-16).unwrap();
        let h = h_symbol(s, delta, lambda, &c).unwrap();
        let hm = h_symbol(s, delta, -lambda, &c).unwrap();
        prop_assert!((h - hm.conj()).norm() <= 1e-10 * h.norm());
        let re = re_h_expansion(s, delta, lambda, &c).unwrap();
        prop_assert!((h.re - re).abs() <= 1e-9 * re.abs());
        prop_assert!(h.re > 0.0);
    }

    #[test]
    fn interpolant_stays_in_cell_range(values in prop::collection::vec(-5.0..5.0f64, 4..40), t in 0.0..1.0f64) {
        let n = values.len();
        let grid = Arc::new(RadialGrid::uniform(n - 1, 1.0).unwrap());
        let f = RadialField::new(grid.clone(), values.clone()).unwrap();
        for k in 0..n - 1 {
            let r = grid.nodes()[k] + t * (grid.nodes()[k + 1] - grid.nodes()[k]);
            let v = f.value(r);
            let (lo, hi) = (values[k].min(values[k + 1]), values[k].max(values[k + 1]));
            prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
    }

    #[test]
    fn functional_bounded_by_gradient(height in 0.1..5.0f64, radius in 0.2..1.0f64, delta in 0.05..0.95f64) {
        let grid = Arc::new(RadialGrid::uniform(300, 1.25).unwrap());
        let u = make_initial_bump(height, radius, grid).unwrap();
        let i = blowup_functional(&u, delta, radius).unwrap();
        prop_assert!(i.origin_is_max);
        let bound = radius.powf(1.0 - delta) / (1.0 - delta) * u.gradient_sup().0;
        prop_assert!(i.value > 0.0 && i.value <= bound);
        let scaled = blowup_functional(&u.scaled(3.0), delta, radius).unwrap().value;
        prop_assert!((scaled - 3.0 * i.value).abs() <= 1e-12 * scaled);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    // the limited slopes make T nonlinear in the samples but positively and
    // negatively homogeneous
    #[test]
    fn velocity_is_homogeneous(d in 1i64..=3, alpha in 0.3..1.7f64, f in mixture(), c in -3.0..3.0f64) {
        let grid = Arc::new(RadialGrid::uniform(80, 8.0).unwrap());
        let op = VelocityOperator::new(KernelSpec::new(d, alpha).unwrap(), grid.clone()).unwrap();
        let fu = f.sample(grid.clone()).unwrap();
        let (vf, vs) = (op.velocity(&fu).unwrap(), op.velocity(&fu.scaled(c)).unwrap());
        let scale = c.abs() * vf.max_abs() + 1e-300;
        for k in 0..grid.len() {
            prop_assert!((vs.values()[k] - c * vf.values()[k]).abs() <= 1e-12 * scale);
        }
        prop_assert_eq!(vs.values()[0], 0.0);
    }

    #[test]
    fn step_keeps_range_origin_and_support(
        d in 1i64..=3, alpha in 0.3..1.7f64, height in 0.2..2.0f64, radius in 0.3..1.0f64, frac in 0.1..1.0f64
    ) {
        let mut sc = Preset::Blowup.scenario(Some(d), Some(alpha)).unwrap();
        sc.grid_m = 60;
        sc.profile = nonlocal_transport::solver::InitialProfile::Bump { height, radius };
        let p = sc.prepare().unwrap();
        let v = p.solver.operator().velocity(&p.initial).unwrap();
        let dt = frac * p.solver.cfl_limit(&v);
        let out = p.solver.step(&p.initial, dt).unwrap().field;
        prop_assert!(out.max() <= p.initial.max());
        prop_assert!(out.min() >= p.initial.min());
        prop_assert_eq!(out.origin_value(), p.initial.origin_value());
        let eps = 1e-12 * height;
        let widest = p.solver.grid().nodes().windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        prop_assert!(out.support_radius(eps) <= p.initial.support_radius(eps) + widest);
    }
}
