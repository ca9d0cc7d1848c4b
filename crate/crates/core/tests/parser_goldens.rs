mod common;

use common::goldens;

fn assert_clean((n, bad): (usize, Vec<String>)) {
    assert!(n > 0, "no golden cases found");
    assert!(bad.is_empty(), "{}", bad.join("\n"));
}

#[test]
fn forge_reports_match_labels() {
    assert_clean(goldens::check_forge());
}

#[test]
fn kontrol_logs_match_labels() {
    assert_clean(goldens::check_kontrol());
}

#[test]
fn stubbed_normalization_agrees_with_regex_parser() {
    assert_clean(goldens::check_normalization());
}

#[test]
fn kontrol_counterexample_proves_access_control_defect() {
    use scproof::config::asset_root;
    use scproof::detectors::DefectKind;
    use scproof::runner::{parse_kontrol_log, BackendKind, ExecutionResult};
    use scproof::template::TemplateRegistry;
    use scproof::verdict::{interpret, Confidence, VerdictKind, VerdictTables};

    let raw = std::fs::read_to_string(common::data("golden/kontrol/access_control_failed.log")).unwrap();
    let template = TemplateRegistry::load(&asset_root().join("templates")).unwrap();
    let template = template.get(DefectKind::AccessControl).unwrap();
    let expected: Vec<String> = template.expected_test_methods.iter().map(|m| m.name.clone()).collect();
    let mut result = ExecutionResult {
        backend: BackendKind::Kontrol,
        per_test: parse_kontrol_log(&raw),
        raw_log_path: Default::default(),
        wall_time_secs: 0.0,
        exit_status: 1,
        unknown_methods: vec![],
    };
    result.reconcile(&expected, "not reported by backend");
    assert!(result.unknown_methods.is_empty());

    let tables = VerdictTables::load(&asset_root().join("verdicts")).unwrap();
    let v = interpret(tables.get(&template.verdict_table_id).unwrap(), &result, &template.roles());
    assert_eq!((v.verdict, v.confidence), (VerdictKind::ProvenVulnerable, Confidence::High), "{}", v.note);
}
