mod common;

#[test]
fn orbital_positions_repeat_after_one_period() {
    common::orbital_periodicity(256).unwrap();
}

#[test]
fn floyd_warshall_equals_dijkstra_on_random_graphs() {
    common::floyd_warshall_matches_dijkstra(100).unwrap();
}

#[test]
fn trace_files_round_trip() {
    common::trace_round_trip(256).unwrap();
}

#[test]
fn reorder_guard_keeps_route_epochs_in_order() {
    common::reorder_guard(256).unwrap();
}

#[test]
fn lag_of_shifted_copy_is_recovered_exactly() {
    common::lag_recovery(256).unwrap();
}

#[test]
fn background_flows_fit_their_distributions() {
    let fits = common::background_flow_fit().unwrap();
    assert_eq!(fits.len(), 6);
}

#[test]
fn ks_p_value_is_calibrated() {
    let p = common::ks_p_value(1.63 / 100.0, 10_000);
    assert!((p - 0.01).abs() < 0.001, "{p}");
    assert!(common::ks_p_value(0.0, 100) > 0.999);
}
