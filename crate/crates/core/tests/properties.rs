use std::sync::Arc;

use erprior::grid::{kl_divergence, pushforward_density, tv_distance};
use erprior::information::{expected_information, penalty_missing_info};
use erprior::models::{GaussianLocationModel, TwoPointModel};
use erprior::transform::{Diffeomorphism, Exp, Log};
use erprior::{Grid, GridDensity};
use proptest::prelude::*;

const J: usize = 24;

fn grid() -> Arc<Grid> {
    Arc::new(Grid::uniform(0.0, 2.0, J).unwrap())
}

fn positive_density() -> impl Strategy<Value = GridDensity> {
    prop::collection::vec(0.05f64..5.0, J).prop_map(|v| GridDensity::normalized(grid(), v).unwrap())
}

fn any_density() -> impl Strategy<Value = GridDensity> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..5.0], J)
        .prop_filter("needs some mass", |v| v.iter().any(|&x| x > 0.0))
        .prop_map(|v| GridDensity::normalized(grid(), v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kl_is_nonnegative(p in any_density(), q in positive_density()) {
        prop_assert!(kl_divergence(&p, &q).unwrap() >= -1e-12);
        prop_assert!(kl_divergence(&q, &q).unwrap().abs() < 1e-12);
    }

    #[test]
    fn tv_is_a_metric(p in any_density(), q in any_density(), r in any_density()) {
        let pq = tv_distance(&p, &q).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&pq));
        prop_assert_eq!(pq, tv_distance(&q, &p).unwrap());
        prop_assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
        let pr = tv_distance(&p, &r).unwrap();
        let rq = tv_distance(&r, &q).unwrap();
        prop_assert!(pq <= pr + rq + 1e-12);
    }

    #[test]
    fn pushforward_round_trip(p in positive_density()) {
        let there = pushforward_density(&p, &Exp).unwrap();
        let back = pushforward_density(&there.density, &Log).unwrap();
        for (a, b) in back.density.grid().nodes().iter().zip(p.grid().nodes()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in back.density.values().iter().zip(p.values()) {
            prop_assert!((a - b).abs() <= 1e-9 * b.max(1.0));
        }
        // w/φ' gives the exact image density up to the trapezoid error
        prop_assert!((there.raw_mass - 1.0).abs() < 0.05);
        prop_assert!(Exp.forward(0.0) == there.density.grid().nodes()[0]);
    }

    #[test]
    fn missing_info_is_convex(p in positive_density(), q in positive_density(), t in 0.05f64..0.95) {
        let reference = GridDensity::uniform(grid());
        let mid = p.mix(&q, 1.0 - t).unwrap();
        let lhs = penalty_missing_info(&mid, &reference).unwrap();
        let rhs = (1.0 - t) * penalty_missing_info(&p, &reference).unwrap()
            + t * penalty_missing_info(&q, &reference).unwrap();
        prop_assert!(lhs <= rhs + 1e-12);
    }

    #[test]
    fn expected_information_is_concave(p in positive_density(), q in positive_density(), t in 0.05f64..0.95) {
        let model = GaussianLocationModel::new(0.5).unwrap();
        let mid = p.mix(&q, 1.0 - t).unwrap();
        let lhs = expected_information(&model, &mid).raw;
        let rhs = (1.0 - t) * expected_information(&model, &p).raw
            + t * expected_information(&model, &q).raw;
        prop_assert!(lhs >= rhs - 1e-9);
    }

    #[test]
    fn two_point_information_is_concave(a in 0.0f64..1.0, b in 0.0f64..1.0, t in 0.0f64..1.0) {
        let model = TwoPointModel::new([2.0, 4.0], [1.0, 1.0]).unwrap();
        let info = |pi1: f64| expected_information(&model, &model.prior(pi1).unwrap()).raw;
        let mid = (1.0 - t) * a + t * b;
        prop_assert!(info(mid) >= (1.0 - t) * info(a) + t * info(b) - 1e-9);
        prop_assert!(info(a) <= std::f64::consts::LN_2 + 1e-12);
    }
}
