use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use nomina::cli::{fit, Fitted, Kind, ModelFile};
use nomina::corpus::{split, synth_corpus};
use nomina::encoder::{encode, Vocabulary};
use nomina::neural::TrainConfig;

fn nomina(args: &[&str], stdin: Option<&str>) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_nomina"))
        .args(args)
        .env("RUST_LOG", "warn")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut pipe = child.stdin.take().unwrap();
    pipe.write_all(stdin.unwrap_or("").as_bytes()).unwrap();
    drop(pipe);
    child.wait_with_output().unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn write_synth(dir: &Path, n: usize) -> String {
    let path = dir.join("synth.csv");
    let out = nomina(
        &["synth", "--count", &n.to_string(), "--seed", "7", "--out", path.to_str().unwrap()],
        None,
    );
    assert!(out.status.success(), "{}", text(&out.stderr));
    path.to_str().unwrap().to_string()
}

fn train(data: &str, kind: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--data", data, "--model", kind, "--seed", "7", "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    nomina(&args, None)
}

#[test]
fn logistic_pipeline_is_accurate_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_synth(dir.path(), 2000);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let r = train(&data, "logistic", out, &[]);
        assert!(r.status.success(), "{}", text(&r.stderr));
        assert!(text(&r.stdout).starts_with("model,dataset,accuracy,recall,precision,f1\nlogistic,test,"));
    }
    for f in ["model.nomina", "report.csv", "confusion.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let report = std::fs::read_to_string(a.join("report.csv")).unwrap();
    let accuracy: f64 = report.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert!(accuracy >= 0.98, "{accuracy}");

    // confusion totals equal the test part (20% of 2000)
    let cm = std::fs::read_to_string(a.join("confusion.csv")).unwrap();
    let total: u64 = cm.lines().nth(1).unwrap().split(',').map(|v| v.parse::<u64>().unwrap()).sum();
    assert_eq!(total, 400);

    // evaluation reproduces the training report
    let model = a.join("model.nomina");
    let ev_dir = dir.path().join("ev");
    let ev = nomina(
        &[
            "evaluate",
            "--data",
            &data,
            "--seed",
            "7",
            "--model-file",
            model.to_str().unwrap(),
            "--out",
            ev_dir.to_str().unwrap(),
        ],
        None,
    );
    assert!(ev.status.success(), "{}", text(&ev.stderr));
    assert_eq!(std::fs::read(ev_dir.join("report.csv")).unwrap(), report.as_bytes());

    // a different seed would evaluate on a different test part
    let bad = nomina(
        &["evaluate", "--data", &data, "--seed", "8", "--model-file", model.to_str().unwrap(), "--out", ev_dir.to_str().unwrap()],
        None,
    );
    assert_eq!(bad.status.code(), Some(2));
    assert!(text(&bad.stderr).starts_with("error: kind=SeedMismatch message="));

    // prediction follows the final-letter rule and is deterministic
    let p1 = nomina(&["predict", "--model-file", model.to_str().unwrap(), "LUCIANA", "BOTIROK"], None);
    let p2 = nomina(&["predict", "--model-file", model.to_str().unwrap()], Some("LUCIANA\nBOTIROK\n"));
    assert!(p1.status.success());
    assert_eq!(p1.stdout, p2.stdout);
    let lines: Vec<String> = text(&p1.stdout).lines().map(str::to_string).collect();
    assert!(lines[0].starts_with("LUCIANA,") && lines[0].ends_with(",0"), "{lines:?}");
    assert!(lines[1].ends_with(",1"), "{lines:?}");

    // unmappable names yield an error line and exit code 1
    let p = nomina(&["predict", "--model-file", model.to_str().unwrap(), "ANA", "R2D2"], None);
    assert_eq!(p.status.code(), Some(1));
    let out = text(&p.stdout);
    assert!(out.lines().nth(1).unwrap().starts_with("R2D2,error,"), "{out}");

    // empty input stream: no output, success
    let p = nomina(&["predict", "--model-file", model.to_str().unwrap()], Some(""));
    assert_eq!(p.status.code(), Some(0));
    assert!(p.stdout.is_empty());
}

#[test]
fn neural_train_writes_history() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_synth(dir.path(), 400);
    let out = dir.path().join("rnn");
    let r = train(&data, "rnn", &out, &["--epochs", "3", "--batch-size", "32"]);
    assert!(r.status.success(), "{}", text(&r.stderr));
    let h = std::fs::read_to_string(out.join("history.csv")).unwrap();
    assert_eq!(h.lines().next().unwrap(), "epoch,train_loss,val_loss,train_acc,val_acc");
    assert_eq!(h.lines().count(), 4);
}

#[test]
fn fatal_errors_use_exit_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_synth(dir.path(), 100);
    let r = train(&data, "svm", &dir.path().join("x"), &[]);
    assert_eq!(r.status.code(), Some(2));
    assert!(text(&r.stderr).starts_with("error: kind=UnknownKind"));

    let missing = train("/nonexistent.csv", "logistic", &dir.path().join("x"), &[]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(text(&missing.stderr).starts_with("error: kind=IoError"));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "name,gender\nANA,0\n").unwrap();
    let r = train(bad.to_str().unwrap(), "logistic", &dir.path().join("x"), &[]);
    assert_eq!(r.status.code(), Some(2));
    assert!(text(&r.stderr).starts_with("error: kind=SchemaError"), "{}", text(&r.stderr));

    let junk = dir.path().join("junk.nomina");
    std::fs::write(&junk, "nomina-model\nversion 1\nchecksum 00\n---\nkind x\n").unwrap();
    let r = nomina(&["predict", "--model-file", junk.to_str().unwrap(), "ANA"], None);
    assert_eq!(r.status.code(), Some(2));
    assert!(text(&r.stderr).starts_with("error: kind=CorruptFile"));
}

#[test]
fn every_kind_round_trips_bit_exactly() {
    let corpus = synth_corpus(120, 3);
    let parts = split(&corpus, 3).unwrap();
    let config = TrainConfig {
        max_epochs: 2,
        batch_size: 16,
        seed: 3,
        ..TrainConfig::default()
    };
    let vocab = Vocabulary::standard();
    let probes: Vec<_> = ["ANA", "JOAO", "ÇA", "MARIACONCEIÇAODASILVA", "Z"]
        .iter()
        .map(|n| encode(n, &vocab).unwrap())
        .collect();
    for kind in Kind::ALL {
        let (model, _) = fit(kind, &parts, &config).unwrap();
        let file = model.to_file(3, corpus.source_digest(), 0.0);
        let bytes = file.to_bytes().unwrap();
        let loaded = Fitted::from_file(&ModelFile::from_bytes(&bytes).unwrap()).unwrap();
        let a = model.predict_proba(&probes);
        let b = loaded.predict_proba(&probes);
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            "{kind}"
        );
        assert!(a.iter().all(|p| (0.0..=1.0).contains(p)), "{kind}");
        let again = loaded.to_file(3, corpus.source_digest(), 0.0).to_bytes().unwrap();
        assert_eq!(again, bytes, "{kind}");
        let cut = &bytes[..bytes.len() * 2 / 3];
        assert!(matches!(ModelFile::from_bytes(cut), Err(nomina::Error::CorruptFile(_))), "{kind}");
    }
}
