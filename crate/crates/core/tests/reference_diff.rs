//! The reference-diff oracle itself: what it lets through and what it flags.

mod common;

use common::{data, reference};

fn reference_src() -> String {
    std::fs::read_to_string(data("reference/ComplexFallbackTest.sol")).unwrap()
}

#[test]
fn identical_source_has_no_changes() {
    assert_eq!(reference::changed_tokens(&reference_src(), &reference_src()), 0);
}

#[test]
fn renames_messages_and_sender_arrangement_are_allowed() {
    let edited = reference_src()
        .replace("_contractUnderTest", "_target")
        .replace("The transaction should work", "should work")
        .replace(
            "vm.deal(address(this), 1 ether);",
            "address s = makeAddr(\"s\");\n        vm.deal(s, 1 ether);\n        vm.prank(s);",
        )
        .replace("Test,KontrolCheats", "Test");
    assert_eq!(reference::disallowed_changes(&edited, &reference_src()), Vec::<String>::new());
}

#[test]
fn amounts_and_structure_are_flagged() {
    let more_ether = reference_src().replace("transfer(1 ether)", "transfer(2 ether)");
    assert_eq!(reference::disallowed_changes(&more_ether, &reference_src()), ["-1", "+2"]);
    let no_revert = reference_src().replace("vm.expectRevert();", "");
    assert!(!reference::disallowed_changes(&no_revert, &reference_src()).is_empty());
    let stray_comma = reference_src().replace("(bool success,)", "(bool success)");
    assert_eq!(reference::disallowed_changes(&stray_comma, &reference_src()), ["-,"]);
}

#[test]
fn method_names_ignore_comments() {
    let names = reference::method_names(&format!("// function ghost() {{}}\n{}", reference_src()));
    assert_eq!(names, ["setUp", "test_proveTransferWorks", "test_proveTransferDoesNotWorkWithLimitedGas"]);
}
