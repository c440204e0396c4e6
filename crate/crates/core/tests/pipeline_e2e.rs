use metasynth::corpus::read_corpus;
use metasynth::fixtures::{fixture_config, write_fixture_tree};
use metasynth::model::FinalStatus;
use metasynth::pipeline::{Pipeline, StopPoints};

#[test]
fn fixture_run_completes() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src");
    let out = dir.path().join("out");
    write_fixture_tree(&src, 1).unwrap();
    let report = Pipeline::from_config(fixture_config(&src, &out))
        .unwrap()
        .run(&StopPoints::default())
        .unwrap();
    let c = &report.counts;
    assert_eq!(c.anchors, 4);
    assert_eq!(c.drafts, 40);
    assert_eq!(c.validated + c.hitl, c.drafts);

    let validated = read_corpus(&out.join("validated_triplets.jsonl")).unwrap();
    let hitl = read_corpus(&out.join("hitl_triplets.jsonl")).unwrap();
    assert_eq!(validated.len(), c.validated);
    assert!(validated.iter().all(|t| t.final_status == FinalStatus::AutoAccepted && t.critic_verdict.passed));
    assert!(hitl.iter().all(|t| t.final_status == FinalStatus::HitlPending && !t.critic_verdict.passed));
    assert!(hitl.iter().all(|t| t.critic_verdict.iteration_count == 3));
    for f in ["index.json", "performance_anchors.json", "validation_report.json", "pipeline_report.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
}
