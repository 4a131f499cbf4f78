mod common;

use common::{example_system, Setup};
use ddrhc::consistency::{ConsistencySet, DataDictionary, Provenance, SystemPair, Triple};
use ddrhc::controller::{solve_dual, solve_primal_vertex, verify_certificate, ControllerContext, DecisionKind};
use ddrhc::polytope::HPolytope;
use ddrhc::simulator::NoiseMode;
use ddrhc::Error;
use nalgebra::{dvector, DVector};
use proptest::prelude::*;
use std::sync::OnceLock;

struct Fixture {
    setup: Setup,
    x_i: HPolytope,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let setup = Setup::example1();
        let x_i = setup.invariant().set;
        Fixture { setup, x_i }
    })
}

fn state() -> impl Strategy<Value = DVector<f64>> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b)| dvector![a, b])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn dual_and_vertex_routes_agree(x in state()) {
        let f = fixture();
        prop_assume!(f.x_i.contains_point(&x, 0.0));
        let ctx = ControllerContext::new(&f.x_i, &f.setup.u_set, Some(f.setup.noise.clone()), f.setup.consistency.clone()).unwrap();
        let dual = solve_dual(&ctx, &x).unwrap();
        let primal = solve_primal_vertex(&ctx, &x, &f.setup.systems).unwrap();
        prop_assert!((dual.bound - primal.bound).abs() <= 1e-6);
        prop_assert!(verify_certificate(&dual, &ctx, &x));
        prop_assert!(f.setup.u_set.contains_point(&dual.u, 1e-9));
    }

    /// The returned input bounds the next gauge for every vertex plant and noise vertex.
    #[test]
    fn bound_holds_for_every_vertex_plant(x in state()) {
        let f = fixture();
        prop_assume!(f.x_i.contains_point(&x, 0.0));
        let ctx = ControllerContext::new(&f.x_i, &f.setup.u_set, Some(f.setup.noise.clone()), f.setup.consistency.clone()).unwrap();
        let d = solve_dual(&ctx, &x).unwrap();
        for sys in &f.setup.systems {
            for v in f.setup.noise.vertices().vertices() {
                let next = sys.step(&x, &d.u) + v;
                prop_assert!(f.x_i.gauge(&next).unwrap() <= d.bound + 1e-6);
            }
        }
    }

    /// Without noise the contraction ratio is scale free as long as inputs are unconstrained.
    #[test]
    fn noise_free_lambda_is_homogeneous(x in state(), alpha in 0.5..2.0f64) {
        let f = fixture();
        prop_assume!(x.amax() > 0.05);
        let wide = HPolytope::inf_ball(1, 100.0);
        let ctx = ControllerContext::new(&f.x_i, &wide, None, f.setup.consistency.clone()).unwrap();
        let a = solve_dual(&ctx, &x).unwrap().lambda;
        let b = solve_dual(&ctx, &(&x * alpha)).unwrap().lambda;
        prop_assert!((a - b).abs() <= 1e-6 * (1.0 + a));
    }

    /// A plant that produced the data always lies in the consistency set.
    #[test]
    fn generating_plant_is_consistent(seed in 0u64..200, eps in 0.01..0.2f64) {
        let plant = ddrhc::simulator::TruePlant::new(example_system(), eps, NoiseMode::UniformIid).unwrap();
        let data = ddrhc::simulator::gen_training_data(&plant, 8, &HPolytope::unit_box(2), &HPolytope::unit_box(1), seed).unwrap();
        let cs = ConsistencySet::build(&data, &ddrhc::consistency::noise_shape_for_bound(2, eps).unwrap()).unwrap();
        prop_assert!(cs.membership(&example_system()).unwrap());
        prop_assert!(cs.residual(&example_system()).unwrap() <= 1.0 + 1e-12);
    }
}

#[test]
fn update_only_adds_rows() {
    let f = fixture();
    let t = Triple {
        x: dvector![0.3, -0.2],
        u: dvector![0.1],
        x_next: example_system().step(&dvector![0.3, -0.2], &dvector![0.1]),
        tag: Provenance::Execution,
    };
    let next = f.setup.consistency.update(&t).unwrap();
    assert_eq!(next.num_rows(), f.setup.consistency.num_rows() + 4);
    assert!(f.setup.consistency.as_polytope().contains(&next.as_polytope()).unwrap().holds);
    assert!(next.membership(&example_system()).unwrap());
}

#[test]
fn vertices_collapse_onto_the_plant_as_noise_vanishes() {
    let mut previous = f64::INFINITY;
    for eps in [1e-2, 1e-4, 1e-6, 1e-9] {
        let setup = Setup::new(eps, NoiseMode::UniformIid);
        let truth = example_system().to_coefficients();
        let spread = setup
            .systems
            .iter()
            .map(|s| (s.to_coefficients() - &truth).amax())
            .fold(0.0, f64::max);
        assert!(spread <= previous, "spread {spread} grew at ε = {eps}");
        assert!(spread <= 1e3 * eps, "spread {spread} at ε = {eps}");
        previous = spread;
    }
}

#[test]
fn contradictory_data_invalidates_the_model() {
    let mut data = DataDictionary::new(1, 1);
    for (x, u, xn) in [(1.0, 0.0, 0.5), (1.0, 0.0, 0.9), (0.0, 1.0, 1.0)] {
        data.push(Triple {
            x: dvector![x],
            u: dvector![u],
            x_next: dvector![xn],
            tag: Provenance::Training,
        })
        .unwrap();
    }
    let shape = ddrhc::consistency::noise_shape_for_bound(1, 0.1).unwrap();
    let cs = ConsistencySet::build(&data, &shape).unwrap();
    assert!(cs.is_empty().unwrap());
    let r = ControllerContext::new(&HPolytope::unit_box(1), &HPolytope::unit_box(1), None, cs);
    assert!(matches!(r, Err(Error::ModelInvalidated)));
}

#[test]
fn rank_deficient_data_reported() {
    let mut data = DataDictionary::new(2, 1);
    for k in 0..4 {
        let x = dvector![k as f64 * 0.1, 0.0];
        data.push(Triple {
            x: x.clone(),
            u: dvector![0.0],
            x_next: example_system().step(&x, &dvector![0.0]),
            tag: Provenance::Training,
        })
        .unwrap();
    }
    let cs = ConsistencySet::build(&data, &ddrhc::consistency::noise_shape_for_bound(2, 0.1).unwrap()).unwrap();
    assert!(!cs.check_rank());
    assert!(matches!(cs.system_vertices(), Err(Error::RankDeficient)));
}

#[test]
fn origin_uses_the_absolute_bound() {
    let f = fixture();
    let ctx = ControllerContext::new(&f.x_i, &f.setup.u_set, Some(f.setup.noise.clone()), f.setup.consistency.clone()).unwrap();
    let d = solve_dual(&ctx, &dvector![0.0, 0.0]).unwrap();
    assert_eq!(d.kind, DecisionKind::NearOrigin);
    assert!(d.lambda.is_infinite());
    assert!(d.bound > 0.0 && d.bound < 1.0);
}

#[test]
fn coefficient_round_trip() {
    let s = SystemPair::new(nalgebra::dmatrix![1.0, 2.0; 3.0, 4.0], nalgebra::dmatrix![5.0; 6.0]).unwrap();
    let z = s.to_coefficients();
    assert_eq!(z.as_slice(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    assert_eq!(SystemPair::from_coefficients(&z, 2, 1).unwrap(), s);
}

#[test]
fn zero_state_and_input_add_no_rows() {
    let f = fixture();
    let at_rest = |x_next: DVector<f64>| Triple {
        x: dvector![0.0, 0.0],
        u: dvector![0.0],
        x_next,
        tag: Provenance::Execution,
    };
    let same = f.setup.consistency.update(&at_rest(dvector![0.01, -0.02])).unwrap();
    assert_eq!(same.num_rows(), f.setup.consistency.num_rows());
    assert!(matches!(f.setup.consistency.update(&at_rest(dvector![0.5, 0.0])), Err(Error::ModelInvalidated)));
}
