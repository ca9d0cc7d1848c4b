mod common;

use scproof::config::asset_root;

#[test]
fn fill_is_idempotent_and_keeps_model_anchors() {
    common::properties::fill_idempotence(256, &asset_root().join("templates")).unwrap();
}
