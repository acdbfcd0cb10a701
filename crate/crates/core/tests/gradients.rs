mod common;

use common::gradcheck::*;
use ctxdst::encoders::Variant;
use ctxdst::model::Tracker;

#[test]
fn global_only_full_model_gradients() {
    let tracker = Tracker::new(model_config(Variant::GlobalOnly, true, true), ontology(), 11).unwrap();
    let n = check_model(tracker, 2);
    assert!(n > 1000);
}

#[test]
fn full_gle_model_gradients() {
    let tracker = Tracker::new(model_config(Variant::FullGle, true, true), ontology(), 12).unwrap();
    check_model(tracker, 2);
}

#[test]
fn baseline_and_per_slot_combination_gradients() {
    let tracker = Tracker::new(model_config(Variant::GlobalOnly, false, false), ontology(), 13).unwrap();
    check_model(tracker, 1);
    let mut cfg = model_config(Variant::GlobalOnly, true, false);
    cfg.per_slot_combination = true;
    check_model(Tracker::new(cfg, ontology(), 14).unwrap(), 2);
}
