//! Acceptance checks. Runs as a plain binary and prints one line per
//! criterion; exits non-zero when any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use dkg_norms::agent::{parse_reply, Backend, RemoteChatConfig, ScriptedBackend};
use dkg_norms::corpus::{bundled_corpus_dir, load_corpus, oracle_label, Corpus};
use dkg_norms::evalharness::{
    paired_stats, per_class_prf, run_experiment, save_records, summarize, write_report,
    ExperimentConfig, RunRecord,
};
use dkg_norms::grid::{describe_grid, parse_grid, render_grid, Position};
use dkg_norms::instruction::parse_instruction;
use dkg_norms::norms::{classify, infer_response, InstructionType, NormLabel};
use dkg_norms::planner::{analyze_gem, brute_force_required_keys, AgentAction};
use dkg_norms::prompting::Condition;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

/// Overall pass flag and one line per sub-check.
type Outcome = (bool, Vec<String>);

fn fixture(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name);
    fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn p(r: usize, c: usize) -> Position {
    Position::new(r, c)
}

fn close(actual: f64, expected: f64, tol: f64) -> bool {
    (actual - expected).abs() <= tol
}

/// Collects notes and failures for one criterion.
#[derive(Default)]
struct Check {
    lines: Vec<String>,
    failed: bool,
}

impl Check {
    fn expect(&mut self, ok: bool, what: impl Into<String>) {
        self.failed |= !ok;
        self.lines.push(format!("{} {}", if ok { "ok  " } else { "FAIL" }, what.into()));
    }

    fn done(self) -> Outcome {
        (!self.failed, self.lines)
    }
}

fn oracle_records(corpus: &Corpus, conditions: Vec<Condition>) -> Vec<RunRecord> {
    let cfg = ExperimentConfig {
        conditions,
        parallelism: 4,
        ..ExperimentConfig::default()
    };
    run_experiment(corpus, &cfg, &Backend::OracleBacked)
}

fn planner_equivalence(corpus: &Corpus) -> Outcome {
    let mut c = Check::default();
    let start = Instant::now();
    let mut compared = 0;
    let mut mismatches = Vec::new();
    for (id, g) in &corpus.grids {
        for gem in g.gems() {
            let a = analyze_gem(g, g.human(), gem);
            let planner = a.is_reachable().then_some(a.required_keys);
            let exhaustive = brute_force_required_keys(g, g.human(), gem);
            compared += 1;
            if planner != exhaustive {
                mismatches.push(format!("{id} gem {gem}: {planner:?} vs {exhaustive:?}"));
            }
        }
    }
    let elapsed = start.elapsed();
    c.expect(
        mismatches.is_empty(),
        format!("{compared} gems compared, {} mismatches {mismatches:?}", mismatches.len()),
    );
    c.expect(elapsed < Duration::from_secs(10), format!("took {elapsed:.2?} (limit 10 s)"));
    c.done()
}

fn appendix_exemplars(corpus: &Corpus) -> Outcome {
    let mut c = Check::default();
    let g = parse_grid(&fixture("appendix_matrix.txt")).expect("appendix grid parses");
    let bundled = &corpus.grids["appendix-1"];
    c.expect(render_grid(&g) == render_grid(bundled), "bundled appendix grid equals printed grid");

    let red = parse_instruction("Pick up the red key.");
    let (label, _) = classify(&g, &red).unwrap();
    let red = infer_response(&g, &red, label).unwrap();
    c.expect(
        red.label == NormLabel::QuantityViolation,
        format!("\"Pick up the red key.\" -> {:?}", red.label),
    );
    let plan = red.plan.clone().unwrap_or_default();
    let pickups: Vec<Position> = plan.pickups().collect();
    let passes = plan.actions.iter().filter(|a| matches!(a, AgentAction::PassKeys(_))).count();
    let unlocks = plan.unlocks().count();
    c.expect(
        pickups == vec![p(0, 0), p(1, 0)] && passes == 1 && unlocks == 0,
        format!("plan pickups {pickups:?}, {passes} handover, {unlocks} unlocks"),
    );

    let green = parse_instruction("Can you get the green key?");
    let (label, _) = classify(&g, &green).unwrap();
    let r = infer_response(&g, &green, label).unwrap();
    c.expect(
        label == NormLabel::QualityViolation && r.options.len() == 3,
        format!("\"Can you get the green key?\" -> {label:?} with {} options", r.options.len()),
    );

    let (label, _) = classify(&g, &parse_instruction("Can you dance?")).unwrap();
    c.expect(
        label == NormLabel::RelationViolation,
        format!("\"Can you dance?\" -> {label:?}"),
    );
    c.done()
}

fn corpus_consistency(corpus: &Corpus, oracle: &[RunRecord]) -> Outcome {
    let mut c = Check::default();
    let agree = corpus
        .entries
        .iter()
        .filter(|e| oracle_label(e, &corpus.grids[&e.grid_id]).ok() == Some(e.gold.gold_label))
        .count();
    c.expect(
        agree == corpus.entries.len() && agree == 55,
        format!("oracle labels agree on {agree}/{} entries", corpus.entries.len()),
    );
    let report = summarize(oracle);
    let options = report.conditions.first().and_then(|m| m.options_acc);
    c.expect(options == Some(1.0), format!("options accuracy {options:?}"));
    let counts = corpus.type_counts();
    let expected = BTreeMap::from([
        (InstructionType::Clear, 20),
        (InstructionType::Incomplete, 5),
        (InstructionType::Invalid, 11),
        (InstructionType::Irrelevant, 6),
        (InstructionType::Ambiguous, 13),
    ]);
    c.expect(counts == expected, format!("instruction types {counts:?}"));
    c.done()
}

fn grid_round_trip() -> Outcome {
    let mut c = Check::default();
    let matrix = fixture("appendix_matrix.txt");
    let g = parse_grid(&matrix).expect("appendix grid parses");
    c.expect(g.render_matrix() == matrix.trim_end(), "matrix form re-renders byte for byte");
    let again = parse_grid(&render_grid(&g)).expect("rendered grid parses");
    c.expect(again == g, "character form parses back to the same grid");
    let description = fixture("appendix_description.txt");
    let ours = describe_grid(&g);
    c.expect(ours == description.trim_end(), "object listing matches the printed listing");
    c.expect(ours.contains("Total Walls: 32"), "listing reports Total Walls: 32");
    c.done()
}

fn reply_fixtures() -> Outcome {
    let mut c = Check::default();
    let cases = [
        (
            "fig4a_reply.txt",
            Condition::WithNorms,
            Some(NormLabel::QuantityViolation),
            vec![p(4, 8), p(1, 1), p(1, 3)],
        ),
        (
            "fig4b_reply.txt",
            Condition::WithoutNorms,
            None,
            vec![p(4, 8), p(6, 8), p(1, 1), p(8, 4), p(9, 4)],
        ),
        (
            "fig5a_reply.txt",
            Condition::WithNorms,
            Some(NormLabel::NoViolation),
            vec![p(0, 5), p(2, 1)],
        ),
        (
            "fig5b_reply.txt",
            Condition::WithoutNorms,
            None,
            vec![p(0, 5), p(2, 1), p(3, 8), p(3, 9), p(3, 8)],
        ),
    ];
    for (name, condition, label, coords) in cases {
        let parsed = parse_reply(&fixture(name), condition);
        c.expect(
            parsed.parse_ok && parsed.norm_label == label && parsed.coords == coords,
            format!("{name}: label {:?}, coords {:?}", parsed.norm_label, parsed.coords),
        );
    }
    c.done()
}

fn metrics_engine(oracle: &[RunRecord]) -> Outcome {
    let mut c = Check::default();
    let report = summarize(oracle);
    let task = report.conditions.first().and_then(|m| m.task);
    c.expect(task == Some(1.0), format!("perfect predictions: task accuracy {task:?}"));
    let perfect = report
        .per_class
        .values()
        .all(|m| m.precision == 1.0 && m.recall == 1.0 && m.f1 == 1.0);
    c.expect(
        perfect && report.per_class.len() == 5,
        format!("perfect predictions: all {} classes at P=R=F1=1", report.per_class.len()),
    );

    let mut pairs = Vec::new();
    let mut push = |gold: NormLabel, pred: NormLabel, n: usize| {
        pairs.extend(std::iter::repeat_n((gold, Some(pred)), n));
    };
    push(NormLabel::NoViolation, NormLabel::NoViolation, 17);
    push(NormLabel::NoViolation, NormLabel::QuantityViolation, 3);
    push(NormLabel::QuantityViolation, NormLabel::QuantityViolation, 5);
    push(NormLabel::QualityViolation, NormLabel::QualityViolation, 11);
    push(NormLabel::RelationViolation, NormLabel::RelationViolation, 6);
    push(NormLabel::MannerViolation, NormLabel::MannerViolation, 13);
    let prf = per_class_prf(&pairs);
    let qp = prf[&NormLabel::QuantityViolation].precision;
    let nr = prf[&NormLabel::NoViolation].recall;
    c.expect(close(qp, 0.63, 0.01), format!("confusion fixture: Quantity precision {qp:.3} (0.63 +/- 0.01)"));
    c.expect(close(nr, 0.85, 0.01), format!("confusion fixture: No Violation recall {nr:.3} (0.85 +/- 0.01)"));
    c.done()
}

fn statistics() -> Outcome {
    let mut c = Check::default();
    let config = Config {
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    let vectors = prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 2..80);
    let identity = runner.run(&vectors, |pairs| {
        let s = paired_stats(&pairs).unwrap();
        prop_assert!((s.d - s.t / (s.n as f64).sqrt()).abs() <= 1e-9);
        Ok(())
    });
    c.expect(identity.is_ok(), format!("d = t/sqrt(n) on random vectors: {identity:?}"));

    let hand: Vec<(f64, f64)> = [1.0, 2.0, 3.0, 4.0].iter().map(|&d| (d, 0.0)).collect();
    let s = paired_stats(&hand).unwrap();
    c.expect(
        close(s.t, 5.477, 0.001) && s.df == 3,
        format!("diffs [1,2,3,4]: t = {:.3} (expected 5.477 +/- 0.001), df = {}", s.t, s.df),
    );

    let mut engineered = vec![(1.0, 0.0); 17];
    engineered.extend(vec![(1.0, 1.0); 30]);
    engineered.extend(vec![(0.5, 0.5); 8]);
    let s = paired_stats(&engineered).unwrap();
    c.expect(
        s.n == 55 && close(s.t, 4.92, 0.01) && close(s.d, 0.66, 0.01) && s.p < 0.001,
        format!("engineered n=55: t = {:.3}, d = {:.3}, p = {:.2e}", s.t, s.d, s.p),
    );
    c.done()
}

fn scripted_pipeline(corpus: &Corpus) -> Outcome {
    let mut c = Check::default();
    let mut script = ScriptedBackend::new();
    for r in oracle_records(corpus, Condition::BOTH.to_vec()) {
        script.insert_digest(r.prompt_digest.clone(), r.raw_reply.clone());
    }
    let backend = Backend::scripted(script);
    let cfg = ExperimentConfig {
        parallelism: 4,
        ..ExperimentConfig::default()
    };
    let dir = tempfile::tempdir().expect("temp dir");
    let mut outputs = Vec::new();
    for run in 0..2 {
        let records = run_experiment(corpus, &cfg, &backend);
        let failed = records.iter().filter(|r| r.failed.is_some()).count();
        c.expect(
            records.len() == 110 && failed == 0,
            format!("run {run}: {} records, {failed} failed", records.len()),
        );
        let path = dir.path().join(format!("records-{run}.jsonl"));
        save_records(&path, &records).expect("records saved");
        let doc = write_report(&records);
        outputs.push((fs::read(&path).unwrap(), doc.text, doc.csv));
    }
    c.expect(outputs[0] == outputs[1], "records, report and CSV are byte-identical across runs");
    let text = &outputs[0].1;
    let complete = ["Task", "Options", "Mean Length", "Mean Options", "Relevance", "Clarity"]
        .iter()
        .all(|column| text.contains(column))
        && Condition::BOTH.iter().all(|c| text.contains(c.title()));
    c.expect(complete, "report has both condition rows and every column");

    std::env::set_var("DKG_ACCEPTANCE_KEY", "acceptance-token");
    let reply = "Norm: No Violation. The instruction is clear.\nResponse: Sure, I will collect the key and pass it to you.";
    let server = common::serve(move |_| (200, common::chat_body(reply)));
    let remote = Backend::remote(RemoteChatConfig {
        endpoint: server.url.clone(),
        api_key_env: "DKG_ACCEPTANCE_KEY".into(),
        max_retries: 0,
        timeout: Duration::from_secs(10),
        ..RemoteChatConfig::default()
    });
    let records = run_experiment(corpus, &cfg, &remote);
    let failed = records.iter().filter(|r| r.failed.is_some()).count();
    let doc = write_report(&records);
    c.expect(
        failed == 0 && server.hits() == records.len() && !doc.text.is_empty(),
        format!("remote backend smoke run: {} requests, {failed} failed", server.hits()),
    );
    c.done()
}

fn main() {
    let start = Instant::now();
    let corpus = load_corpus(&bundled_corpus_dir()).expect("bundled corpus loads");
    let oracle = oracle_records(&corpus, vec![Condition::WithNorms]);

    let mut results: Vec<(u8, &str, Outcome)> = vec![
        (1, "planner matches exhaustive door search", planner_equivalence(&corpus)),
        (2, "appendix exemplars reproduced", appendix_exemplars(&corpus)),
        (3, "corpus consistent with the oracle", corpus_consistency(&corpus, &oracle)),
        (4, "grid round-trip", grid_round_trip()),
        (5, "reply parser on printed responses", reply_fixtures()),
        (6, "metrics engine", metrics_engine(&oracle)),
        (7, "paired statistics", statistics()),
        (8, "scripted end-to-end run", scripted_pipeline(&corpus)),
    ];
    let elapsed = start.elapsed();
    let mut timing = Check::default();
    timing.expect(elapsed < Duration::from_secs(60), format!("{elapsed:.2?} (limit 60 s)"));
    results.push((9, "acceptance run time", timing.done()));

    let mut failed = 0;
    for (n, name, (ok, lines)) in &results {
        if !ok {
            failed += 1;
        }
        let status = if *ok { "PASS" } else { "FAIL" };
        println!("criterion {n}: {status} {name}");
        for line in lines {
            println!("    {line}");
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
