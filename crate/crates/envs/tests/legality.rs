mod support;

use promst_envs::EnvKind;

#[test]
fn every_environment_rejects_illegal_transitions() {
    for kind in EnvKind::ALL {
        let stats = support::legality::audit(kind, 10_000, 11).unwrap_or_else(|e| panic!("{e}"));
        assert_eq!(stats.cases, 10_000);
        assert!(stats.accepted > 0 && stats.rejected > 0, "{kind}: {stats:?}");
    }
}
