use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use regex::Regex;

use super::{persist_log, BackendKind, ExecutionResult, RunnerError, TestOutcome, TestStatus};
use crate::process;

fn patterns() -> &'static [Regex; 2] {
    static RE: OnceLock<[Regex; 2]> = OnceLock::new();
    RE.get_or_init(|| {
        [
            // PROOF PASSED ✨ test%Suite.test_x():0
            Regex::new(r"PROOF\s+(PASSED|FAILED)\W*?\s+(?:\S*?[%.])?([A-Za-z_$][\w$]*)(?:\([^)]*\))?(?::\d+)?(?:\s|$)")
                .expect("valid regex"),
            // PROOF Suite.test_x FAILED
            Regex::new(r"PROOF\s+(?:\S*?[%.])?([A-Za-z_$][\w$]*)(?:\([^)]*\))?(?::\d+)?\s+(PASSED|FAILED)\b")
                .expect("valid regex"),
        ]
    })
}

fn status(word: &str) -> TestStatus {
    if word == "PASSED" {
        TestStatus::Pass
    } else {
        TestStatus::Fail
    }
}

/// Outcomes from proof summary lines. A later line for the same method wins.
pub fn parse_kontrol_log(raw: &str) -> BTreeMap<String, TestOutcome> {
    let [passed_first, name_first] = patterns();
    let mut out = BTreeMap::new();
    for line in raw.lines() {
        let hit = passed_first
            .captures(line)
            .map(|c| (c[2].to_string(), status(&c[1])))
            .or_else(|| name_first.captures(line).map(|c| (c[1].to_string(), status(&c[2]))));
        if let Some((name, st)) = hit {
            let outcome = match st {
                TestStatus::Fail => TestOutcome::with_detail(st, "counterexample found"),
                _ => TestOutcome::new(st),
            };
            out.insert(name, outcome);
        }
    }
    out
}

/// `kontrol build` then `kontrol prove --match-test <Suite>.<method>` for
/// each expected method. Unparseable output is returned as an error so the
/// caller can try normalization.
pub fn run_kontrol(
    kontrol: &Path,
    project_dir: &Path,
    test_contract: &str,
    expected: &[String],
    timeout: Duration,
) -> Result<ExecutionResult, RunnerError> {
    let exe = process::locate(kontrol).ok_or_else(|| RunnerError::BackendNotFound(kontrol.display().to_string()))?;
    let started = Instant::now();
    let build = process::run(&exe, &["build"], Some(project_dir), None, timeout)
        .map_err(|_| RunnerError::BackendNotFound(exe.display().to_string()))?;
    let mut log = build.combined();
    let mut result = ExecutionResult {
        backend: BackendKind::Kontrol,
        per_test: BTreeMap::new(),
        raw_log_path: Default::default(),
        wall_time_secs: 0.0,
        exit_status: build.status.unwrap_or(-1),
        unknown_methods: Vec::new(),
    };
    let finish = |mut r: ExecutionResult, log: &[u8], detail: &str| -> Result<ExecutionResult, RunnerError> {
        r.raw_log_path = persist_log(project_dir, "kontrol.log", log)?;
        r.wall_time_secs = started.elapsed().as_secs_f64();
        r.reconcile(expected, detail);
        Ok(r)
    };
    if build.timed_out {
        return finish(result, &log, "build timeout");
    }
    if build.status != Some(0) {
        return finish(result, &log, "build failed");
    }

    let matches: Vec<String> = expected.iter().map(|m| format!("{test_contract}.{m}")).collect();
    let mut args = vec!["prove"];
    for m in &matches {
        args.push("--match-test");
        args.push(m);
    }
    let remaining = timeout.saturating_sub(started.elapsed()).max(Duration::from_secs(1));
    let prove = process::run(&exe, &args, Some(project_dir), None, remaining)
        .map_err(|_| RunnerError::BackendNotFound(exe.display().to_string()))?;
    log.extend_from_slice(&prove.combined());
    result.exit_status = prove.status.unwrap_or(-1);
    result.per_test = parse_kontrol_log(&String::from_utf8_lossy(&prove.combined()));
    if prove.timed_out {
        return finish(result, &log, "proof-timeout");
    }
    if result.per_test.is_empty() {
        let log_path = persist_log(project_dir, "kontrol.log", &log)?;
        return Err(RunnerError::OutputUnparseable { log_path, exit_status: result.exit_status });
    }
    finish(result, &log, "not reported by backend")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_phrasings() {
        let log = "\
✨ PROOF PASSED ✨ test%OwnedTest.test_accessControl(address):0
PROOF test_other FAILED
❌ PROOF FAILED ❌ test%XTest.test_third():0
";
        let m = parse_kontrol_log(log);
        assert_eq!(m["test_accessControl"].status, TestStatus::Pass);
        assert_eq!(m["test_other"].status, TestStatus::Fail);
        assert_eq!(m["test_third"].status, TestStatus::Fail);
        assert_eq!(m.len(), 3);
    }

    #[test]
    fn unrelated_lines_ignored() {
        assert!(parse_kontrol_log("Building...\nPROOF results pending\n").is_empty());
    }

    #[cfg(unix)]
    #[test]
    fn fake_kontrol() {
        use std::os::unix::fs::PermissionsExt;
        let dir = tempfile::tempdir().unwrap();
        let fake = dir.path().join("kontrol");
        std::fs::write(
            &fake,
            "#!/bin/sh\nif [ \"$1\" = build ]; then echo built; exit 0; fi\necho \"args: $*\"\necho '❌ PROOF FAILED ❌ test%CTest.test_accessControl(address):0'\nexit 1\n",
        )
        .unwrap();
        std::fs::set_permissions(&fake, std::fs::Permissions::from_mode(0o755)).unwrap();
        let expected = vec!["test_accessControl".to_string()];
        let r = run_kontrol(&fake, dir.path(), "CTest", &expected, Duration::from_secs(10)).unwrap();
        assert_eq!(r.per_test["test_accessControl"].status, TestStatus::Fail);
        let log = std::fs::read_to_string(&r.raw_log_path).unwrap();
        assert!(log.starts_with("built\nargs: prove --match-test CTest.test_accessControl\n"));

        std::fs::write(&fake, "#!/bin/sh\nif [ \"$1\" = build ]; then exit 0; fi\necho 'something else'\n").unwrap();
        assert!(matches!(
            run_kontrol(&fake, dir.path(), "CTest", &expected, Duration::from_secs(10)),
            Err(RunnerError::OutputUnparseable { .. })
        ));

        std::fs::write(&fake, "#!/bin/sh\nif [ \"$1\" = build ]; then echo 'Error: nope'; exit 2; fi\n").unwrap();
        let r = run_kontrol(&fake, dir.path(), "CTest", &expected, Duration::from_secs(10)).unwrap();
        assert_eq!(r.per_test["test_accessControl"], TestOutcome::with_detail(TestStatus::Error, "build failed"));
    }
}
