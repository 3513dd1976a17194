//! Library-level pipeline checks: event routing, checkpoint reload fidelity,
//! and hand-computable evaluation fixtures.

use std::collections::BTreeMap;

use obctr_core::baselines::{OnlineLdaConfig, PaIConfig, SgdPmfConfig};
use obctr_core::checkpoint::{self, Checkpoint};
use obctr_core::eval::rmse;
use obctr_core::ingest::{split_stream, Corpus, Vocabulary};
use obctr_core::model::{HyperParams, RatingEvent};
use obctr_core::run::{test_rmse, train_stream, AlgoConfig, Model, TrainOptions};
use obctr_core::synth::{generate_synthetic, SynthConfig};

fn quiet() -> TrainOptions {
    TrainOptions {
        eval_every: 0,
        progress_every: 0,
        ..TrainOptions::default()
    }
}

// Events whose items are missing from the corpus go to the rejected stream
// for text-requiring algorithms and are processed normally by factor-only
// ones.
#[test]
fn events_without_documents_are_routed_by_algorithm() {
    let mut hp = HyperParams::new(2);
    hp.sigma_r2 = 0.25;
    let data = generate_synthetic(
        &hp,
        &SynthConfig {
            users: 10,
            items: 8,
            docs_len: 10,
            vocab_size: 15,
            ratings_count: 120,
            heldout_docs: 0,
            seed: 6,
        },
    )
    .unwrap();
    // Drop half the documents from the corpus.
    let mut docs = data.corpus.docs.clone();
    docs.retain(|&id, _| id < 4);
    let gutted = Corpus::from_token_docs(data.corpus.vocabulary.clone(), docs);
    let split = split_stream(&data.events, 1).unwrap();
    let missing = split
        .train
        .iter()
        .filter(|ev| ev.item_id >= 4)
        .count() as u64;
    assert!(missing > 0);

    let cases: Vec<(AlgoConfig, u64)> = vec![
        (
            AlgoConfig::Obctr {
                hp: hp.clone(),
                pmf_only_fallback: false,
                inner_iters: 1,
            },
            missing,
        ),
        (
            AlgoConfig::OnlineLda {
                cfg: OnlineLdaConfig::new(2, 1, 1),
            },
            missing,
        ),
        (
            AlgoConfig::PaI {
                cfg: PaIConfig::new(2, 0.1),
            },
            0,
        ),
        (
            AlgoConfig::SgdPmf {
                cfg: SgdPmfConfig::new(2, 0.05),
            },
            0,
        ),
    ];
    for (config, expected_rejected) in cases {
        let outcome = train_stream(&config, &gutted, &split, 3, &quiet(), None).unwrap();
        assert_eq!(
            outcome.rejected_events,
            expected_rejected,
            "algorithm {}",
            config.kind()
        );
    }

    // The engine-level fallback turns rejections into factor-only updates.
    let fallback = AlgoConfig::Obctr {
        hp,
        pmf_only_fallback: true,
        inner_iters: 1,
    };
    let outcome = train_stream(&fallback, &gutted, &split, 3, &quiet(), None).unwrap();
    assert_eq!(outcome.rejected_events, 0);
}

// A checkpoint of an untrained engine predicts zero everywhere, so its RMSE
// on any event set is the root mean square rating.
#[test]
fn fresh_checkpoint_rmse_matches_hand_computation() {
    let vocabulary = Vocabulary::from_ordered_words(vec!["alpha".into(), "beta".into()]);
    let mut docs = BTreeMap::new();
    docs.insert(1u64, vec![0usize, 1]);
    let corpus = Corpus::from_token_docs(vocabulary, docs);
    let config = AlgoConfig::Obctr {
        hp: HyperParams::new(2),
        pmf_only_fallback: false,
        inner_iters: 1,
    };
    let model = Model::build(&config, &corpus, 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fresh.json");
    checkpoint::save(&path, &Checkpoint::new(config, corpus, model, 0)).unwrap();
    let loaded = checkpoint::load(&path).unwrap();

    let events: Vec<RatingEvent> = [1.0, -2.0, 0.5]
        .iter()
        .enumerate()
        .map(|(i, &r)| RatingEvent {
            user_id: i as u64,
            item_id: 1,
            rating: r,
            order_key: i as u64,
        })
        .collect();
    let got = test_rmse(&loaded.model, &events, &loaded.corpus).unwrap();
    let expected = ((1.0 + 4.0 + 0.25) / 3.0f64).sqrt();
    assert_eq!(got.to_bits(), expected.to_bits());
    // Same number through the plain metric path.
    let pairs: Vec<(f64, f64)> = events.iter().map(|e| (0.0, e.rating)).collect();
    assert_eq!(rmse(&pairs).unwrap().to_bits(), expected.to_bits());
}

// Reloaded checkpoints predict identically to the in-memory model for every
// algorithm.
#[test]
fn reloaded_models_predict_identically() {
    let mut hp = HyperParams::new(3);
    hp.sigma_r2 = 0.25;
    let data = generate_synthetic(
        &hp,
        &SynthConfig {
            users: 12,
            items: 9,
            docs_len: 12,
            vocab_size: 18,
            ratings_count: 150,
            heldout_docs: 0,
            seed: 8,
        },
    )
    .unwrap();
    let split = split_stream(&data.events, 2).unwrap();
    let configs = vec![
        AlgoConfig::Obctr {
            hp: hp.clone(),
            pmf_only_fallback: false,
            inner_iters: 1,
        },
        AlgoConfig::Octr {
            cfg: obctr_core::baselines::OctrConfig::new(OnlineLdaConfig::new(3, 1, 1), 0.1),
        },
        AlgoConfig::PaI {
            cfg: PaIConfig::new(3, 0.2),
        },
        AlgoConfig::SgdPmf {
            cfg: SgdPmfConfig::new(3, 0.1),
        },
    ];
    let dir = tempfile::tempdir().unwrap();
    for config in configs {
        let outcome = train_stream(&config, &data.corpus, &split, 4, &quiet(), None).unwrap();
        let before = test_rmse(&outcome.model, &split.test, &data.corpus).unwrap();
        let path = dir.path().join(format!("{}.json", config.kind()));
        checkpoint::save(
            &path,
            &Checkpoint::new(config.clone(), data.corpus.clone(), outcome.model, 4),
        )
        .unwrap();
        let loaded = checkpoint::load(&path).unwrap();
        let after = test_rmse(&loaded.model, &split.test, &loaded.corpus).unwrap();
        assert_eq!(
            before.to_bits(),
            after.to_bits(),
            "algorithm {}",
            config.kind()
        );
    }
}
