#[path = "support/gradcheck.rs"]
mod gradcheck;

use gradcheck::{conv, layer_report, member_report, small_conv_net, Report};
use wbc_core::ensemble::MemberId;
use wbc_core::nn::LayerSpec;

fn check(name: &str, report: Report) {
    assert!(report.passes(), "{name}: {report:?}");
}

#[test]
fn conv2d_same_padding() {
    check("conv", layer_report(&[2, 5, 5], &[conv(3, 3, 1, 1)], false));
}

#[test]
fn conv2d_strided_valid() {
    check("conv strided", layer_report(&[3, 7, 6], &[conv(2, 3, 2, 0)], false));
}

#[test]
fn maxpool_disjoint_and_overlapping() {
    let disjoint = LayerSpec::MaxPool2d { window: 2, stride: 2 };
    check("pool 2/2", layer_report(&[2, 6, 6], &[disjoint], false));
    let overlapping = LayerSpec::MaxPool2d { window: 3, stride: 2 };
    check("pool 3/2", layer_report(&[2, 7, 7], &[overlapping], false));
}

#[test]
fn relu() {
    check("relu", layer_report(&[3, 4, 4], &[LayerSpec::Relu], false));
}

#[test]
fn dense_flattening_and_two_by_two() {
    check("dense", layer_report(&[2, 3, 3], &[LayerSpec::Dense { units: 5 }], false));
    check("dense 2→2", layer_report(&[2], &[LayerSpec::Dense { units: 2 }], false));
}

#[test]
fn dropout_with_fixed_mask() {
    check("dropout", layer_report(&[4, 3, 3], &[LayerSpec::Dropout { rate: 0.3 }], false));
}

#[test]
fn softmax_and_cross_entropy() {
    check("softmax", layer_report(&[6], &[LayerSpec::Softmax], false));
    check(
        "softmax+ce",
        layer_report(&[5], &[LayerSpec::Dense { units: 5 }, LayerSpec::Softmax], true),
    );
}

#[test]
fn small_conv_net_end_to_end() {
    check("conv net", layer_report(&[2, 6, 6], &small_conv_net(), true));
}

#[test]
fn ensemble_member_graphs() {
    for id in MemberId::ALL {
        check(&format!("member {id}"), member_report(id));
    }
}
