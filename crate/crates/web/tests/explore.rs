use nowcast_web::explore::{ensemble_fit, field_strip, routing, FieldParams};

#[test]
fn strip_has_one_column_per_frame() {
    let img = field_strip(&FieldParams::default()).unwrap();
    assert_eq!(img.width, 8 * 32 + 7);
    assert_eq!(img.height, 32);
    let rain = field_strip(&FieldParams {
        show_rain: true,
        contour: true,
        ..FieldParams::default()
    })
    .unwrap();
    assert_ne!(img.pixels, rain.pixels);
}

#[test]
fn calibrated_routing_is_even() {
    let r = routing(3, 100, 0.9, 0.0).unwrap();
    assert_eq!(r.dry + r.wet, 100);
    assert_eq!(r.dry, 50);
    let all_wet = routing(3, 100, 0.9, 1e-9).unwrap();
    assert_eq!(all_wet.dry, 0);
}

#[test]
fn ensemble_fit_orders_errors() {
    let f = ensemble_fit(1, &[0.05, -0.1, 0.0], &[0.2, 0.1, 0.3], 1e-4, 2000).unwrap();
    let mean_member = f.member_mse.iter().sum::<f64>() / 3.0;
    assert!(f.ensemble_mse[0] <= mean_member);
    assert!(f.ensemble_mse[1] <= f.ensemble_mse[2] + 1e-6);
    assert!((f.constrained.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    assert!(ensemble_fit(1, &[0.0], &[], 1e-4, 10).is_err());
}
