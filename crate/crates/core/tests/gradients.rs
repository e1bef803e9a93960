//! Finite-difference checks of every layer's analytic gradients.

mod support;

use support::gradients::LAYERS;

const CONFIGS: u64 = 20;
const TOLERANCE: f64 = 1e-4;

fn check_layer(name: &str) {
    let (_, f) = LAYERS.iter().find(|l| l.0 == name).unwrap();
    for c in 0..CONFIGS {
        let check = f(c);
        assert!(
            check.max_error() < TOLERANCE,
            "{} config {}: error {:e} in {:?}",
            name,
            c,
            check.max_error(),
            check.worst()
        );
    }
}

#[test]
fn embedding() {
    check_layer("embedding");
}

#[test]
fn mlp() {
    check_layer("mlp");
}

#[test]
fn bilstm() {
    check_layer("bilstm");
}

#[test]
fn char_encoder() {
    check_layer("char encoder");
}

#[test]
fn biaffine() {
    check_layer("biaffine");
}

#[test]
fn label_biaffine() {
    check_layer("label biaffine");
}

#[test]
fn cross_entropy() {
    check_layer("cross entropy");
}

#[test]
fn stacked_network() {
    check_layer("stacked");
}
