use nowcast::ensemble::{
    combine, equal_weights, parse_weights, solve_constrained, solve_ridge, write_weights, EnsembleDesign,
    LambdaRule, Method,
};
use nowcast::gsq::{decode, encode};
use nowcast::metrics::mse;
use nowcast::{Dims, GridSequence, Transform};
use proptest::prelude::*;

fn sequence(max_side: usize) -> impl Strategy<Value = GridSequence> {
    (1..4usize, 1..=max_side, 1..=max_side, 1..3usize).prop_flat_map(|(t, h, w, c)| {
        prop::collection::vec(0.0f32..=1.0, t * h * w * c)
            .prop_map(move |data| GridSequence::from_data(Dims::new(t, h, w, c), data).unwrap())
    })
}

fn square_pair() -> impl Strategy<Value = (GridSequence, GridSequence)> {
    (1..3usize, 1..6usize, 1..3usize).prop_flat_map(|(t, s, c)| {
        let n = t * s * s * c;
        (
            prop::collection::vec(0.0f32..=1.0, n),
            prop::collection::vec(0.0f32..=1.0, n),
        )
            .prop_map(move |(a, b)| {
                let d = Dims::new(t, s, s, c);
                (GridSequence::from_data(d, a).unwrap(), GridSequence::from_data(d, b).unwrap())
            })
    })
}

/// `p` member value vectors and a target, all of length `n`.
fn members(p: usize, n: usize) -> impl Strategy<Value = (Vec<Vec<f32>>, Vec<f32>)> {
    (
        prop::collection::vec(prop::collection::vec(0.0f32..=1.0, n), p),
        prop::collection::vec(0.0f32..=1.0, n),
    )
}

proptest! {
    #[test]
    fn gsq_round_trip(s in sequence(6)) {
        let back = decode(&encode(&s)).unwrap();
        prop_assert_eq!(back.dims(), s.dims());
        prop_assert_eq!(back.data(), s.data());
    }

    #[test]
    fn gsq_truncation_is_rejected(s in sequence(4), cut in 1usize..8) {
        let bytes = encode(&s);
        let keep = bytes.len().saturating_sub(cut);
        prop_assert!(decode(&bytes[..keep]).is_err());
    }

    #[test]
    fn transforms_preserve_mse((a, b) in square_pair()) {
        let base = mse(&a, &b, None).unwrap();
        for t in Transform::ALL {
            let m = mse(&a.augment(t).unwrap(), &b.augment(t).unwrap(), None).unwrap();
            prop_assert!((m - base).abs() <= 1e-12 * base.max(1.0), "{}: {} vs {}", t.as_str(), m, base);
        }
    }

    #[test]
    fn rotations_compose((a, _) in square_pair()) {
        let r = a.augment(Transform::Rot90).unwrap().augment(Transform::Rot270).unwrap();
        prop_assert_eq!(&r, &a);
        let r = a.augment(Transform::Rot180).unwrap().augment(Transform::Rot180).unwrap();
        prop_assert_eq!(&r, &a);
        let m = a.augment(Transform::MirrorH).unwrap().augment(Transform::MirrorV).unwrap();
        prop_assert_eq!(m, a.augment(Transform::Rot180).unwrap());
    }

    #[test]
    fn design_merge_matches_single_pass((xs, y) in members(3, 24), split in 1usize..23) {
        let refs: Vec<&[f32]> = xs.iter().map(|x| x.as_slice()).collect();
        let mut whole = EnsembleDesign::new(3);
        whole.accumulate_values(&refs, &y).unwrap();

        let head: Vec<&[f32]> = xs.iter().map(|x| &x[..split]).collect();
        let tail: Vec<&[f32]> = xs.iter().map(|x| &x[split..]).collect();
        let mut a = EnsembleDesign::new(3);
        a.accumulate_values(&head, &y[..split]).unwrap();
        let mut b = EnsembleDesign::new(3);
        b.accumulate_values(&tail, &y[split..]).unwrap();
        a.merge(&b).unwrap();

        prop_assert_eq!(a.count(), whole.count());
        for (u, v) in a.gram().iter().zip(whole.gram()).chain(a.rhs().iter().zip(whole.rhs())) {
            prop_assert!((u - v).abs() <= 1e-12 * v.abs().max(1.0));
        }
    }

    #[test]
    fn constrained_weights_sum_to_one((xs, y) in members(4, 40)) {
        let refs: Vec<&[f32]> = xs.iter().map(|x| x.as_slice()).collect();
        let mut d = EnsembleDesign::new(4);
        d.accumulate_values(&refs, &y).unwrap();
        let w = solve_constrained(&d, LambdaRule::default()).unwrap();
        prop_assert!((w.sum() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn ridge_beats_equal_weights_on_its_design((xs, y) in members(3, 60)) {
        let refs: Vec<&[f32]> = xs.iter().map(|x| x.as_slice()).collect();
        let mut d = EnsembleDesign::new(3);
        d.accumulate_values(&refs, &y).unwrap();
        let ridge = solve_ridge(&d, LambdaRule::Absolute(0.0)).unwrap();
        let eq = equal_weights(3).unwrap();
        prop_assert!(d.mse_of(&ridge.weights).unwrap() <= d.mse_of(&eq.weights).unwrap() + 1e-9);
    }

    #[test]
    fn weights_file_round_trip(ws in prop::collection::vec(-2.0f64..2.0, 1..6), lambda in 0.0f64..1.0) {
        let names: Vec<String> = (0..ws.len()).map(|i| format!("m{i}")).collect();
        let w = nowcast::ensemble::WeightVector { weights: ws, method: Method::Ridge, lambda, mu: None };
        let (n2, w2) = parse_weights(&write_weights(&names, &w).unwrap()).unwrap();
        prop_assert_eq!(n2, names);
        prop_assert_eq!(w2, w);
    }

    #[test]
    fn equal_combination_is_clipped_mean((a, b) in square_pair()) {
        let eq = equal_weights(2).unwrap();
        let c = combine(&[&a, &b], &eq.weights).unwrap();
        for ((x, y), z) in a.data().iter().zip(b.data()).zip(c.data()) {
            prop_assert!((0.5 * (*x as f64) + 0.5 * (*y as f64) - *z as f64).abs() <= 1e-6);
        }
    }
}
