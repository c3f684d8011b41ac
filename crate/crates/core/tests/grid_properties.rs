use proptest::prelude::*;
use tvreg::grid::{convolve, convolve_adjoint, divergence, gradient, inner};
use tvreg::{BoundaryRule, Field, Kernel, VectorField};

fn field(max: usize) -> impl Strategy<Value = Field<f64>> {
    (1..=max, 1..=max).prop_flat_map(|(w, h)| {
        prop::collection::vec(-1.0f64..1.0, w * h).prop_map(move |v| Field::new(w, h, v).unwrap())
    })
}

fn field_pair(max: usize) -> impl Strategy<Value = (Field<f64>, Field<f64>, Field<f64>)> {
    (1..=max, 1..=max).prop_flat_map(|(w, h)| {
        let v = || prop::collection::vec(-1.0f64..1.0, w * h);
        (v(), v(), v()).prop_map(move |(a, b, c)| {
            (Field::new(w, h, a).unwrap(), Field::new(w, h, b).unwrap(), Field::new(w, h, c).unwrap())
        })
    })
}

fn kernel() -> impl Strategy<Value = Kernel<f64>> {
    (0..=2usize, 0..=2usize).prop_flat_map(|(rx, ry)| {
        let (w, h) = (2 * rx + 1, 2 * ry + 1);
        prop::collection::vec(-1.0f64..1.0, w * h).prop_map(move |v| Kernel::new(w, h, v).unwrap())
    })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn gradient_divergence_adjoint((f, pu, pv) in field_pair(16)) {
        let p = VectorField::new(pu, pv).unwrap();
        let lhs = gradient(&f).inner(&p).unwrap();
        let rhs = -inner(&f, &divergence(&p)).unwrap();
        prop_assert!(rel(lhs, rhs) < 1e-12, "{lhs} vs {rhs}");
    }

    #[test]
    fn convolution_adjoint((f, g, _) in field_pair(16), h in kernel()) {
        let r = BoundaryRule::Replicate;
        let lhs = inner(&convolve(&f, &h, r), &g).unwrap();
        let rhs = inner(&f, &convolve_adjoint(&g, &h, r)).unwrap();
        prop_assert!(rel(lhs, rhs) < 1e-12, "{lhs} vs {rhs}");
    }

    #[test]
    fn convolution_is_linear((f, g, _) in field_pair(12), h in kernel(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let r = BoundaryRule::Replicate;
        let lhs = convolve(&f.scale(a).add(&g.scale(b)), &h, r);
        let rhs = convolve(&f, &h, r).scale(a).add(&convolve(&g, &h, r).scale(b));
        for (x, y) in lhs.values().iter().zip(rhs.values()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_convolution_is_bitwise_identity(f in field(16), size in prop::sample::select(vec![1usize, 3, 5])) {
        let d = Kernel::centered_delta(size).unwrap();
        prop_assert_eq!(convolve(&f, &d, BoundaryRule::Replicate), f);
    }

    #[test]
    fn constants_have_zero_gradient(w in 1..16usize, h in 1..16usize, c in -5.0f64..5.0) {
        let g = gradient(&Field::constant(w, h, c));
        prop_assert!(g.u.values().iter().chain(g.v.values()).all(|&x| x == 0.0));
        let d = divergence(&VectorField::<f64>::zeros(w, h));
        prop_assert!(d.values().iter().all(|&x| x == 0.0));
    }
}
