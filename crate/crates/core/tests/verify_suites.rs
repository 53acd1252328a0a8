use mcsim::verify::{run_suites, Fault, Suite};

#[test]
fn all_suites_pass_for_several_seeds() {
    for seed in [0, 1, 42] {
        let report = run_suites(&Suite::ALL, seed, None);
        assert!(report.passed(), "{}", report.to_csv());
    }
}

#[test]
fn report_is_reproducible() {
    let a = run_suites(&Suite::ALL, 7, None).to_csv();
    let b = run_suites(&Suite::ALL, 7, None).to_csv();
    assert_eq!(a, b);
}

#[test]
fn injected_fault_fails_only_its_suite() {
    let report = run_suites(&Suite::ALL, 5, Some(Fault::DispenserTree));
    assert!(!report.suite_passed(Suite::Dispenser));
    for s in Suite::ALL.into_iter().filter(|&s| s != Suite::Dispenser) {
        assert!(report.suite_passed(s), "{s} failed");
    }
}
