//! One line per acceptance criterion. Criteria that need the real review
//! corpus or pretrained vectors read their locations from
//! `OPSPAM_CORPUS` and `OPSPAM_GLOVE100` and report BLOCKED when unset.

mod common;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use common::{all_small_docs, brute_force_nb, direct_tfidf, pair_count_auc, to_matrix};
use opspam::config::{ModelKind, RunConfig};
use opspam::corpus;
use opspam::features::{self, Analyzer};
use opspam::linear;
use opspam::metrics;
use opspam::neural::gradcheck;
use opspam::neural::Architecture;
use opspam::pipeline;
use opspam::reproduce::{self, Comparison, Status};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

enum Outcome {
    Pass(String),
    Fail(String),
    Blocked(String),
}

fn env_path(name: &str) -> Option<PathBuf> {
    std::env::var_os(name).map(PathBuf::from).filter(|p| p.exists())
}

fn bands_line(cmp: &Comparison, key: &str) -> (bool, String) {
    let row = cmp.row(key).expect("row present");
    let ok = row.bands.iter().all(|b| b.passed);
    let parts: Vec<String> = row
        .bands
        .iter()
        .map(|b| format!("{} {:.4} in [{:.4}, {:.4}]", b.metric, b.value, b.low, b.high))
        .collect();
    (ok, format!("{}: {}", row.label, parts.join(", ")))
}

fn run_table(table: u8, rows: Option<&[&str]>, glove100: Option<PathBuf>) -> Result<Comparison, Outcome> {
    let root = env_path("OPSPAM_CORPUS")
        .ok_or_else(|| Outcome::Blocked("set OPSPAM_CORPUS to the review corpus root".into()))?;
    let mut base = RunConfig::default();
    base.corpus.root = Some(root);
    let mut embeddings = BTreeMap::new();
    if let Some(p) = glove100 {
        embeddings.insert("glove100".to_string(), p);
    }
    let opts = reproduce::Options {
        base,
        embeddings,
        seeds: None,
        rows: rows.map(|r| r.iter().map(|s| s.to_string()).collect()),
        allow_fixture: false,
    };
    reproduce::reproduce(table, &opts).map_err(|e| Outcome::Fail(e.to_string()))
}

fn criterion_1(t1: &Result<Comparison, Outcome>) -> Outcome {
    let cmp = match t1 {
        Ok(c) => c,
        Err(Outcome::Blocked(m)) => return Outcome::Blocked(m.clone()),
        Err(Outcome::Fail(m) | Outcome::Pass(m)) => return Outcome::Fail(m.clone()),
    };
    let (ok, detail) = bands_line(cmp, "mnb");
    let secs = cmp.row("mnb").unwrap().seconds;
    let detail = format!("{detail}, {secs:.1} s over 5 seeds (< 60 s)");
    if ok && secs < reproduce::TABLE1_MNB_BUDGET_SECS {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn criterion_2(t1: &Result<Comparison, Outcome>) -> Outcome {
    let cmp = match t1 {
        Ok(c) => c,
        Err(Outcome::Blocked(m)) => return Outcome::Blocked(m.clone()),
        Err(Outcome::Fail(m) | Outcome::Pass(m)) => return Outcome::Fail(m.clone()),
    };
    let order = cmp.check("ordering").unwrap();
    let svm = cmp.check("svm-pattern").unwrap();
    let detail = format!("{}; svm {}", order.detail, svm.detail);
    match (order.status, svm.status) {
        (Status::Pass, Status::Pass) => Outcome::Pass(detail),
        (Status::Pass, Status::Deviation) => Outcome::Pass(format!("{detail} (documented deviation)")),
        _ => Outcome::Fail(detail),
    }
}

fn criterion_3() -> Outcome {
    let cmp = match run_table(3, Some(&["mnb-ngram", "lr-char"]), None) {
        Ok(c) => c,
        Err(o) => return o,
    };
    let (a, da) = bands_line(&cmp, "mnb-ngram");
    let (b, db) = bands_line(&cmp, "lr-char");
    let detail = format!("{da}; {db}");
    if a && b {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn criterion_4() -> Outcome {
    let Some(glove) = env_path("OPSPAM_GLOVE100") else {
        return Outcome::Blocked("set OPSPAM_GLOVE100 to a 100-d GloVe text file".into());
    };
    let cmp = match run_table(2, Some(&["lstm", "bilstm-attn"]), Some(glove)) {
        Ok(c) => c,
        Err(o) => return o,
    };
    let (bands_ok, bands) = bands_line(&cmp, "bilstm-attn");
    let wins = cmp.check("attention-beats-lstm").unwrap();
    let runtime = cmp.check("runtime").unwrap();
    let detail = format!("{bands}; attention beats lstm in {}; {}", wins.detail, runtime.detail);
    if bands_ok && wins.status == Status::Pass && runtime.status == Status::Pass {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut ok = true;
    for arch in Architecture::ALL {
        let p = match gradcheck::small_problem(arch, 4, 6, 7) {
            Ok(p) => p,
            Err(e) => return Outcome::Fail(e.to_string()),
        };
        match gradcheck::check_gradients(
            &p.spec,
            &p.params,
            &p.table,
            &p.batch,
            gradcheck::DEFAULT_EPSILON,
            gradcheck::DEFAULT_TOLERANCE,
            false,
        ) {
            Ok(r) => {
                ok &= r.passed;
                parts.push(format!("{} {:.1e}", arch.name(), r.max_rel_error));
            }
            Err(e) => return Outcome::Fail(e.to_string()),
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 120.0;
    let detail = format!("max rel err {} (<= 1e-3, eps 1e-4), {secs:.1} s (< 120 s)", parts.join(", "));
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn quiet(cases: u32) -> Config {
    Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    }
}

fn criterion_6() -> Outcome {
    let mut runner = TestRunner::new(quiet(500));
    let words = prop::sample::select(vec!["a", "b", "c", "d", "e"]);
    let tfidf = runner.run(
        &(
            prop::collection::vec(prop::collection::vec(words, 0..8), 1..=5),
            prop::collection::vec(prop::sample::select(vec!["a", "c", "e", "z"]), 0..8),
        ),
        |(docs, query)| {
            let docs: Vec<Vec<String>> =
                docs.into_iter().map(|d| d.into_iter().map(String::from).collect()).collect();
            prop_assume!(docs.iter().any(|d| !d.is_empty()));
            let query: Vec<String> = query.into_iter().map(String::from).collect();
            let vocab = features::fit_vocabulary(&docs, Analyzer::Word, None).unwrap();
            let row = features::transform_tfidf(std::slice::from_ref(&query), &vocab).rows[0]
                .to_dense(vocab.len());
            for (term, want) in direct_tfidf(&docs, &query) {
                prop_assert!((row[vocab.index_of(&term).unwrap()] - want).abs() <= 1e-12);
            }
            Ok(())
        },
    );

    let mut runner = TestRunner::new(quiet(300));
    let mnb = runner.run(
        &(
            prop::collection::vec(prop::array::uniform3(0u32..=2), 2..8),
            prop::collection::vec(0u8..=1, 8),
        ),
        |(train, labels)| {
            let mut y = labels[..train.len()].to_vec();
            y[0] = 0;
            y[1] = 1;
            let model = linear::mnb_fit(&to_matrix(&train), &y, 1.0).unwrap();
            let docs = all_small_docs();
            let (got, _) = model.predict(&to_matrix(&docs)).unwrap();
            for (doc, g) in docs.iter().zip(got) {
                let s = model.log_scores(&to_matrix(&[*doc]).rows[0]);
                if (s[1] - s[0]).abs() > 1e-9 {
                    prop_assert_eq!(g, brute_force_nb(&train, &y, 1.0, doc));
                }
            }
            Ok(())
        },
    );

    let mut runner = TestRunner::new(quiet(1000));
    let auc = runner.run(
        &prop::collection::vec((0u8..=1, prop::sample::select(vec![-1.0, 0.0, 0.5, 2.0])), 2..=10),
        |data| {
            let (y, s): (Vec<u8>, Vec<f64>) = data.into_iter().unzip();
            prop_assume!(y.contains(&0) && y.contains(&1));
            let got = metrics::roc_auc(&y, &s).unwrap();
            prop_assert!((got - pair_count_auc(&y, &s)).abs() < 1e-12);
            Ok(())
        },
    );
    match (tfidf, mnb, auc) {
        (Ok(()), Ok(()), Ok(())) => Outcome::Pass(
            "tf-idf = direct formula to 1e-12 (500 corpora of <= 5 docs); mnb = brute-force Bayes (300 instances x 27 docs); roc_auc = pair counting (1000 cases)".into(),
        ),
        (a, b, c) => Outcome::Fail(format!("tfidf {a:?}; mnb {b:?}; auc {c:?}")),
    }
}

fn criterion_7() -> Outcome {
    let rows = [
        ("MultinomialNB", 0.9325, 0.8601, 0.8948),
        ("SGD", 0.8913, 0.8497, 0.8700),
        ("Logistic Regression", 0.8691, 0.8601, 0.8645),
        ("SVM", 0.525, 0.9792, 0.6835),
    ];
    let round4 = |v: f64| (v * 1e4).round() / 1e4;
    let mut notes = Vec::new();
    for (name, p, r, f1) in rows {
        let got = round4(metrics::f1_from(p, r));
        if (got - f1).abs() > 1e-9 {
            notes.push(format!("{name} recomputes to {got:.4} vs printed {f1:.4}"));
        }
    }
    let mnb = round4(metrics::f1_from(0.9325, 0.8601));
    let detail = format!(
        "MNB F1 from P=0.9325 R=0.8601 is {mnb:.4} (printed 0.8948){}",
        if notes.is_empty() { String::new() } else { format!("; other rows: {}", notes.join(", ")) }
    );
    if (mnb - 0.8948).abs() < 1e-9 {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("corpus");
    corpus::make_fixture(20, 5, &root).unwrap();
    let emb = dir.path().join("emb.txt");
    corpus::write_fixture_embeddings(&emb, 8, 5).unwrap();
    let kinds = [
        ModelKind::Mnb,
        ModelKind::Logreg,
        ModelKind::Svm,
        ModelKind::Neural(Architecture::BiLstmAttention),
        ModelKind::Neural(Architecture::RecurrentCnn),
    ];
    for kind in kinds {
        let mut files: Vec<Vec<Vec<u8>>> = Vec::new();
        for run in 0..2 {
            let mut cfg = RunConfig::default();
            cfg.corpus.root = Some(root.clone());
            cfg.model.kind = kind;
            cfg.embeddings.path = Some(emb.clone());
            cfg.train.epochs = 2;
            cfg.neural.hidden_dim = 6;
            cfg.neural.dropout = 0.3;
            let out = match pipeline::train_and_evaluate(&cfg) {
                Ok(o) => o,
                Err(e) => return Outcome::Fail(format!("{}: {e}", kind.name())),
            };
            let paths = pipeline::write_outputs(&out, &dir.path().join(format!("{}-{run}", kind.name()))).unwrap();
            let mut bytes = vec![std::fs::read(paths.model).unwrap(), std::fs::read(paths.report).unwrap()];
            if let Some(h) = paths.history {
                bytes.push(std::fs::read(h).unwrap());
            }
            files.push(bytes);
        }
        if files[0] != files[1] {
            return Outcome::Fail(format!("{} outputs differ between identical runs", kind.name()));
        }
    }
    Outcome::Pass("model, report and history files byte-identical across repeated runs (mnb, logreg, svm, bilstm-attn, rcnn)".into())
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    corpus::make_fixture(100, 42, dir.path()).unwrap();
    let mut cfg = RunConfig::default();
    cfg.corpus.root = Some(dir.path().to_path_buf());
    let out = match pipeline::train_and_evaluate(&cfg) {
        Ok(o) => o,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let secs = start.elapsed().as_secs_f64();
    let detail = format!(
        "{} + {} accuracy {:.4} (> 0.9) on {} held-out reviews, {secs:.2} s (< 10 s)",
        out.report.model, out.report.features, out.report.accuracy, out.report.n_samples
    );
    if out.report.accuracy > 0.9 && secs < 10.0 {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn main() -> ExitCode {
    let mut failed = false;
    let mut report = |n: u8, name: &str, o: Outcome| {
        let (tag, detail) = match o {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed = true;
                ("FAIL", d)
            }
            Outcome::Blocked(d) => ("BLOCKED (not evaluated)", d),
        };
        println!("criterion {n} [{name}]: {tag}: {detail}");
    };
    let t1 = run_table(1, None, None);
    report(1, "table 1 naive Bayes bands", criterion_1(&t1));
    report(2, "table 1 ordering and SVM pattern", criterion_2(&t1));
    report(3, "table 3 bands", criterion_3());
    report(4, "table 2 attention substitute", criterion_4());
    report(5, "gradient check", criterion_5());
    report(6, "oracle equivalences", criterion_6());
    report(7, "F1 self-consistency", criterion_7());
    report(8, "determinism", criterion_8());
    report(9, "fixture pipeline", criterion_9());
    if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
