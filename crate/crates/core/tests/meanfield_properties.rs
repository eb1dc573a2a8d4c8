use chaoslab_core::density::{Evaluable, FnDensity, Grid};
use chaoslab_core::kernel::{newtonian_pair_kernel, GaussianBump, Kernel};
use chaoslab_core::meanfield::{flow_map, GaussianClosedFormField, NewtonianGridField};
use chaoslab_core::metrics::{weighted_lipschitz_norm, WeightedNormOptions};
use chaoslab_core::phase::PhasePoint;
use chaoslab_core::rng::GaussianProduct;
use chaoslab_core::vlasov::{picard_vlasov_solve, pushforward_density, PicardSettings};
use proptest::prelude::*;

fn field(mean: f64, sigma: f64) -> GaussianClosedFormField<1> {
    GaussianClosedFormField {
        bump: GaussianBump::unit(),
        mean: [mean],
        sigma,
        t_start: 0.0,
        t_end: 1.0,
    }
}

fn lipschitz() -> f64 {
    Kernel::<1>::lipschitz(&newtonian_pair_kernel::<1, _>(GaussianBump::unit()).unwrap())
}

/// L1 distance of two 1-D normals by midpoint quadrature on a wide interval.
fn normal_l1(m1: f64, s1: f64, m2: f64, s2: f64) -> f64 {
    let pdf = |x: f64, m: f64, s: f64| (-(x - m) * (x - m) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
    let (lo, hi, n) = (-15.0, 15.0, 60_000);
    let h = (hi - lo) / n as f64;
    (0..n)
        .map(|i| {
            let x = lo + (i as f64 + 0.5) * h;
            (pdf(x, m1, s1) - pdf(x, m2, s2)).abs()
        })
        .sum::<f64>()
        * h
}

fn point() -> impl Strategy<Value = PhasePoint<1>> {
    (-4.0f64..4.0, -4.0f64..4.0).prop_map(|(q, p)| PhasePoint::new([q], [p]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn effective_flow_lipschitz_envelope(x in point(), y in point(), s in 0.0f64..0.5, span in 0.0f64..0.5) {
        prop_assume!(x.distance(&y) > 1e-9);
        let f = field(0.3, 0.8);
        let t = s + span;
        let fx = flow_map(&f, &x, s, t, 1e-3).unwrap();
        let fy = flow_map(&f, &y, s, t, 1e-3).unwrap();
        let bound = (lipschitz() * span).exp() * x.distance(&y);
        prop_assert!(fx.distance(&fy) <= 1.05 * bound);
    }

    #[test]
    fn effective_flow_growth_envelope(x in point(), span in 0.0f64..0.5) {
        let f = field(-0.5, 1.2);
        let y = flow_map(&f, &x, 0.5, 0.5 - span, 1e-3).unwrap();
        prop_assert!(1.0 + y.norm() <= 1.05 * (lipschitz() * span).exp() * (1.0 + x.norm()));
    }

    #[test]
    fn effective_flow_density_sensitivity(
        x in point(),
        span in 0.01f64..0.5,
        m2 in -1.0f64..1.0,
        s2 in 0.5f64..1.5,
    ) {
        // phase-space densities share the momentum marginal, so their L1 gap is the spatial one
        let (m1, s1) = (0.0, 1.0);
        let gap = normal_l1(m1, s1, m2, s2);
        let a = flow_map(&field(m1, s1), &x, 0.0, span, 1e-3).unwrap();
        let b = flow_map(&field(m2, s2), &x, 0.0, span, 1e-3).unwrap();
        let l = lipschitz();
        let bound = (l * span).exp() * l * 2.0 * (1.0 + x.norm()) * span * gap;
        prop_assert!(a.distance(&b) <= 1.1 * bound, "{} vs {}", a.distance(&b), bound);
    }
}

#[test]
fn composed_densities_are_continuous_in_the_field() {
    let h0 = GaussianProduct { mean: vec![0.4, -0.2], std: vec![0.8, 1.0] };
    let norm = weighted_lipschitz_norm(&h0, &WeightedNormOptions { resolution: 800, ..Default::default() }).value;
    let c = 1024.0 * std::f64::consts::PI.powi(3);
    let l = lipschitz();
    let t = 0.5;
    let (fa, fb) = (field(0.0, 1.0), field(0.6, 0.8));
    let gap = normal_l1(0.0, 1.0, 0.6, 0.8);
    let grid = Grid::cube(2, -7.0, 7.0, 120).unwrap();
    let mut buf = [0.0; 2];
    let mut foot = [0.0; 2];
    let mut diff = 0.0;
    for i in 0..grid.cells() {
        grid.center(i, &mut buf);
        let x = PhasePoint::<1>::from_coords(&buf);
        flow_map(&fa, &x, t, 0.0, 1e-2).unwrap().write_coords(&mut foot);
        let va = h0.eval(&foot);
        flow_map(&fb, &x, t, 0.0, 1e-2).unwrap().write_coords(&mut foot);
        diff += (va - h0.eval(&foot)).abs();
    }
    diff *= grid.cell_volume();
    let bound = c * norm * (l * t).exp() * l * t * gap;
    assert!(diff > 0.0 && diff <= bound, "{diff} vs {bound}");
}

#[test]
fn converged_picard_curve_is_a_fixed_point() {
    let k = newtonian_pair_kernel::<1, _>(GaussianBump::unit()).unwrap();
    let f0 = GaussianProduct::isotropic(2, 1.0);
    let template = Grid::cube(2, -6.0, 6.0, 40).unwrap();
    let settings = PicardSettings::new(0.5, 0.05, 1e-4, 12);
    let sol = picard_vlasov_solve::<1, _>(&f0, &template, &k, &settings).unwrap();
    let field = NewtonianGridField::<1>::for_kernel(&k, &sol.density).unwrap();
    let mut change = 0.0f64;
    for (t, slice) in sol.density.times.iter().zip(&sol.density.slices) {
        let next = pushforward_density(&f0, &template, &field, *t, settings.dt, settings.margin).unwrap();
        let cur = slice.as_grid().unwrap();
        let d: f64 = cur.values.iter().zip(&next.grid.values).map(|(a, b)| (a - b).abs()).sum::<f64>()
            * cur.cell_volume();
        change = change.max(d);
    }
    assert!(change < 2.0 * settings.tol, "{change}");
}

#[test]
fn pushforward_of_a_tilted_density_stays_normalized() {
    let f0 = FnDensity {
        dim: 2,
        f: |x: &[f64]| (-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp() * (1.0 + 0.5 * (x[0] - x[1]).tanh()) / (2.0 * std::f64::consts::PI),
    };
    let template = Grid::cube(2, -7.0, 7.0, 64).unwrap();
    let f = field(0.0, 1.0);
    for t in [0.0, 0.25, 1.0] {
        let pf = pushforward_density(&f0, &template, &f, t, 0.05, 0.0).unwrap();
        assert!((pf.grid.mass() - 1.0).abs() < 1e-9);
        assert!(pf.defect.abs() < 1e-3, "{}", pf.defect);
    }
}
