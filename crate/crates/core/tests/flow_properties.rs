use proptest::prelude::*;
use tvreg::fixtures::flow_texture;
use tvreg::flow::{apply_l_an, diffusion_tensor, estimate_flow, flow_an, flow_tv, DiffusionTensorField};
use tvreg::grid::{gradient, inner};
use tvreg::{Field, FlowVariant, FramePair, SolverConfig, VectorField};

fn field(w: usize, h: usize) -> impl Strategy<Value = Field<f64>> {
    prop::collection::vec(-1.0f64..1.0, w * h).prop_map(move |v| Field::new(w, h, v).unwrap())
}

fn params(variant: FlowVariant) -> tvreg::FlowParams {
    let mut p = tvreg::FlowParams::new(0.002, 0.01, variant, 1, 1);
    p.solver = SolverConfig::new(1e-9, 100, 1e-12, 4000).unwrap();
    p
}

fn max_abs(a: &Field<f64>, b: &Field<f64>) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn shifted_pair(w: usize, h: usize, dx: f64, profile: impl Fn(f64, f64) -> f64) -> FramePair<f64> {
    let f1 = Field::from_fn(w, h, |i, j| profile(i as f64, j as f64));
    let f2 = Field::from_fn(w, h, |i, j| profile(i as f64 - dx, j as f64));
    FramePair::new(f1, f2).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn tensor_has_unit_trace_and_eigenvalues_in_open_unit_interval(gx in field(6, 6), gy in field(6, 6), eps in 1e-3f64..1.0) {
        let t: DiffusionTensorField<f64> = diffusion_tensor(&VectorField::new(gx, gy).unwrap(), eps).unwrap();
        for k in 0..36 {
            let (a, b, c) = (t.a.values()[k], t.b.values()[k], t.c.values()[k]);
            prop_assert!((a + c - 1.0).abs() < 1e-12);
            let disc = ((a - c) * (a - c) / 4.0 + b * b).sqrt();
            let (lo, hi) = ((a + c) / 2.0 - disc, (a + c) / 2.0 + disc);
            prop_assert!(lo > 0.0 && hi < 1.0, "eigenvalues {lo}, {hi}");
        }
    }

    #[test]
    fn an_operator_is_linear_symmetric_and_kills_constants(f in field(7, 6), v in field(7, 6), w in field(7, 6), s in -2.0f64..2.0) {
        let t = diffusion_tensor(&gradient(&f), 0.1).unwrap();
        let lv = apply_l_an(&v, &t).unwrap();
        let lw = apply_l_an(&w, &t).unwrap();
        let (a, b) = (inner(&v, &lw).unwrap(), inner(&w, &lv).unwrap());
        prop_assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
        let comb = apply_l_an(&v.scale(s).add(&w), &t).unwrap();
        prop_assert!(max_abs(&comb, &lv.scale(s).add(&lw)) < 1e-12);
        let k = apply_l_an(&Field::constant(7, 6, s), &t).unwrap();
        prop_assert!(k.values().iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn flow_ignores_a_constant_added_to_both_frames(c in -0.5f64..0.5, tv in any::<bool>()) {
        let variant = if tv { FlowVariant::Tv } else { FlowVariant::An };
        let pair = shifted_pair(16, 16, 0.5, flow_texture);
        let lifted = FramePair::new(pair.f1.map(|v| v + c), pair.f2.map(|v| v + c)).unwrap();
        let (w, _) = estimate_flow(&pair, &params(variant)).unwrap();
        let (wc, _) = estimate_flow(&lifted, &params(variant)).unwrap();
        prop_assert!(max_abs(&w.u, &wc.u) < 1e-6 && max_abs(&w.v, &wc.v) < 1e-6);
    }
}

#[test]
fn flow_of_column_profile_is_flip_equivariant() {
    let profile = |x: f64, _: f64| 0.4 + 0.2 * (x / 3.0).sin() + 0.1 * (x / 1.7).cos();
    let pair = shifted_pair(20, 8, 0.6, profile);
    let flipped = FramePair::new(pair.f1.flip_horizontal(), pair.f2.flip_horizontal()).unwrap();
    for variant in [FlowVariant::An, FlowVariant::Tv] {
        let (w, _) = estimate_flow(&pair, &params(variant)).unwrap();
        let (wf, _) = estimate_flow(&flipped, &params(variant)).unwrap();
        let negated = w.u.flip_horizontal().scale(-1.0);
        assert!(max_abs(&wf.u, &negated) < 1e-6, "{variant:?}: {}", max_abs(&wf.u, &negated));
        assert!(max_abs(&wf.v, &w.v.flip_horizontal()) < 1e-6, "{variant:?}");
    }
}

#[test]
fn variants_agree_on_globally_constant_motion() {
    let n = 24;
    let pair = shifted_pair(n, n, 0.4, flow_texture);
    let (wa, _) = flow_an(&pair, &params(FlowVariant::An)).unwrap();
    let (wt, _) = flow_tv(&pair, &params(FlowVariant::Tv)).unwrap();
    let interior = |f: &Field<f64>| Field::from_fn(n - 12, n - 12, |i, j| f.get(i + 6, j + 6));
    let du = max_abs(&interior(&wa.u), &interior(&wt.u));
    let dv = max_abs(&interior(&wa.v), &interior(&wt.v));
    assert!(du < 0.1 && dv < 0.1, "du={du} dv={dv}");
    let mean = interior(&wt.u).mean();
    assert!((mean - 0.4).abs() < 0.05, "mean u {mean}");
}
