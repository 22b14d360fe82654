use rdff::construct::{
    expand_representation, hypercube_lower_bound_instance, min_exception_free_size, MinSize,
};
use rdff::fixtures;
use rdff::harness::bounds::BoundParams;
use rdff::harness::{run_trial, sweep, verify_bounds, SweepFile, TrialReport, TrialSpec};
use rdff::learner::{per_rule_mistake_bound, total_mistake_bound};
use rdff::streams::{lower_bound_stream, pair_index};
use rdff::{validate_instance, ExampleId, ExceptionStrategy, Label, Literal};

#[test]
fn closed_form_bounds() {
    assert_eq!(total_mistake_bound(2, 0, 0), 6);
    assert_eq!(total_mistake_bound(8, 5, 5), 13 * (6 * 7 + 7));
    assert_eq!(per_rule_mistake_bound(2, 0, 0), 2);
    assert_eq!(per_rule_mistake_bound(4, 2, 1), 9);
    for m in [4, 6, 8] {
        assert_eq!(total_mistake_bound(m, 0, 0), (m * (m + 1)) as u64);
    }
}

#[test]
fn canonical_trace() {
    let inst = fixtures::two_blocks();
    let stream: Vec<ExampleId> = [0, 2, 1, 3, 0, 2].map(ExampleId).to_vec();
    let trial = run_trial(
        &inst,
        &stream,
        &TrialSpec::adversarial(&inst, ExceptionStrategy::SharedFeature, 0),
    )
    .unwrap();
    let tags: Vec<&str> = trial.transcript.iter().map(|r| r.delta.as_str()).collect();
    assert_eq!(tags, ["none", "create", "refine", "none", "none", "none"]);
    let matched: Vec<&str> = trial
        .transcript
        .iter()
        .map(|r| r.matched.as_str())
        .collect();
    assert_eq!(matched, ["init", "default", "r0", "r0", "default", "r0"]);
    let r = &trial.report;
    assert_eq!((r.mistakes, r.rules_created, r.rules_deleted), (2, 1, 0));
    assert_eq!(r.bound("thm3").unwrap().margin, 4.0);
    assert!(trial.transcript.iter().skip(3).all(|row| row.correct));
}

#[test]
fn transcript_rows_serialize_with_stable_keys() {
    let inst = fixtures::two_blocks();
    let stream: Vec<ExampleId> = [0, 2].map(ExampleId).to_vec();
    let trial = run_trial(
        &inst,
        &stream,
        &TrialSpec::adversarial(&inst, ExceptionStrategy::SharedFeature, 0),
    )
    .unwrap();
    let line = serde_json::to_string(&trial.transcript[1]).unwrap();
    assert_eq!(
        line,
        r#"{"t":1,"example":2,"matched":"default","predicted":0,"explanation":0,"correct":false,"feedback":{"label":1,"feature":0,"polarity":false},"case":"none","delta":"create","audit":null}"#
    );
}

#[test]
fn lower_bound_family_structure() {
    assert_eq!(pair_index(0, 1, 4), 0);
    assert_eq!(pair_index(0, 3, 4), 2);
    assert_eq!(pair_index(2, 3, 4), 5);
    for seed in 0..20 {
        let lb = lower_bound_stream(5, seed).unwrap();
        let inst = &lb.instance;
        assert!(validate_instance(inst).ok());
        assert_eq!(inst.d, 20);
        assert_eq!(lb.stream.len(), 10);
        for (p, &(i, j)) in lb.pairs.iter().enumerate() {
            let home = if lb.hidden[p] { i } else { j };
            assert_eq!(inst.label_of(ExampleId(p)), Label(home as u16));
            let sep = inst
                .representation
                .separator(rdff::ComponentId(i), rdff::ComponentId(j))
                .unwrap();
            assert_eq!(sep, Literal::positive(2 * p + usize::from(lb.hidden[p])));
        }
    }
}

#[test]
fn lower_bound_m4_mean_mistakes() {
    let seeds = 500;
    let mut total = 0;
    for seed in 0..seeds {
        let lb = lower_bound_stream(4, seed).unwrap();
        let spec = TrialSpec::adversarial(&lb.instance, ExceptionStrategy::SharedFeature, seed);
        let r = run_trial(&lb.instance, &lb.stream, &spec).unwrap().report;
        assert!(r.mistakes <= 20);
        total += r.mistakes;
    }
    assert!(total as f64 / seeds as f64 >= 0.75);
}

#[test]
fn hypercube_needs_d_plus_one() {
    for d in [2, 3] {
        let inst = hypercube_lower_bound_instance(d).unwrap();
        assert_eq!((inst.m(), inst.exceptions.len()), (1, 1));
        let expanded = expand_representation(&inst).unwrap();
        assert_eq!(expanded.m(), d + 1);
        assert!(validate_instance(&expanded).ok());
        assert_eq!(
            min_exception_free_size(&inst, d, u64::MAX).unwrap(),
            MinSize::ExceedsMax
        );
        assert_eq!(
            min_exception_free_size(&inst, d + 1, u64::MAX).unwrap(),
            MinSize::Exact(d + 1)
        );
    }
}

#[test]
fn verify_bounds_boundaries() {
    let report = TrialReport {
        params: BoundParams::Adversarial { m: 3, k: 1, s: 1 },
        mistakes: total_mistake_bound(3, 1, 1),
        rules_created: 4,
        ..TrialReport::default()
    };
    let checks = verify_bounds(&report);
    let thm3 = checks.iter().find(|c| c.name == "thm3").unwrap();
    assert!(thm3.pass);
    assert_eq!(thm3.margin, 0.0);
    let lemma4 = checks.iter().find(|c| c.name == "lemma4").unwrap();
    assert!(lemma4.pass);
    assert_eq!(lemma4.margin, 0.0);

    let over = TrialReport {
        mistakes: report.mistakes + 1,
        rules_created: 5,
        ..report
    };
    assert!(verify_bounds(&over)
        .iter()
        .filter(|c| c.name != "lemma5")
        .all(|c| !c.pass));
}

#[test]
fn single_experiment_sweep_matches_the_trial() {
    let file = SweepFile::from_json(
        r#"{
            "id": "one",
            "instance": {"kind": "lower-bound", "m": 4},
            "learner": {"kind": "robust"},
            "stream": {"mode": "lower-bound"},
            "sweep": {"seeds": [7]}
        }"#,
    )
    .unwrap();
    let result = sweep(&file).unwrap();
    let record = &result.report.trials[0];
    let report = record.report.as_ref().unwrap();
    let summary = result.report.summary("one").unwrap();
    assert_eq!(summary.trials, 1);
    assert_eq!(summary.mistakes.mean, report.mistakes as f64);
    assert_eq!(summary.mistakes.max, report.mistakes as f64);
    assert_eq!(summary.all_invariants_pass_rate, 1.0);

    let planned = rdff::harness::plan_trial(&file.experiments[0], 7, false).unwrap();
    let direct = run_trial(&planned.instance, &planned.stream, &planned.spec).unwrap();
    assert_eq!(&direct.report, report);
}
