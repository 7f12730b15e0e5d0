//! Saved models for every kind with their recorded predictions. Set
//! `NOMINA_BLESS=1` to regenerate the fixtures.

use std::path::PathBuf;

use nomina::cli::{fit, Fitted, Kind, ModelFile};
use nomina::corpus::{split, synth_corpus};
use nomina::encoder::{encode, Vocabulary};
use nomina::neural::TrainConfig;

const PROBES: [&str; 6] = ["ANA", "JOAO", "LUCIANA", "BOTIROK", "ÇA", "MARIACONCEIÇAODASILVA"];

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/models")
}

fn predictions(model: &Fitted) -> String {
    let vocab = Vocabulary::standard();
    let names: Vec<_> = PROBES.iter().map(|n| encode(n, &vocab).unwrap()).collect();
    model
        .predict_proba(&names)
        .iter()
        .zip(PROBES)
        .map(|(p, n)| format!("{n},{p:.17e}\n"))
        .collect()
}

#[test]
fn golden_models_predict_recorded_outputs() {
    let dir = fixture_dir();
    if std::env::var_os("NOMINA_BLESS").is_some() {
        std::fs::create_dir_all(&dir).unwrap();
        let corpus = synth_corpus(150, 11);
        let parts = split(&corpus, 11).unwrap();
        let config = TrainConfig {
            max_epochs: 2,
            batch_size: 32,
            seed: 11,
            ..TrainConfig::default()
        };
        for kind in Kind::ALL {
            let (model, _) = fit(kind, &parts, &config).unwrap();
            model
                .to_file(11, corpus.source_digest(), 0.0)
                .save(&dir.join(format!("{kind}.nomina")))
                .unwrap();
            std::fs::write(dir.join(format!("{kind}.expected")), predictions(&model)).unwrap();
        }
    }
    for kind in Kind::ALL {
        let file = ModelFile::load(&dir.join(format!("{kind}.nomina"))).unwrap();
        let model = Fitted::from_file(&file).unwrap();
        assert_eq!(model.kind(), kind);
        let expected = std::fs::read_to_string(dir.join(format!("{kind}.expected"))).unwrap();
        assert_eq!(predictions(&model), expected, "{kind}");
    }
}
