use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vrid::dataset::{SetId, ShapeExpansion};
use vrid::fusion::{
    build_fusion_head, fusion_input, train_head, FusionMode, MatchDecision, ReadingCache,
    TrainConfig, TwoStreamModel, FUSION_INPUT_LEN,
};
use vrid::nn::Sequential;
use vrid::ocr::{build_ocr_descriptor, OcrDescriptor, PlateReading};
use vrid::pairgen::PairSample;
use vrid::pipeline::pair_pools;
use vrid::shape::{ShapeDescriptor, EMBEDDING_LEN};
use vrid::synth::{generate, SynthSpec};
use vrid::Tensor;

/// Matching pairs look like identical vehicles (near-zero descriptors);
/// non-matching ones carry a clear offset on a random subset of inputs.
fn toy_pairs(n: usize, seed: u64) -> Vec<(Tensor<f32>, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let matching = i % 2 == 0;
            let data = (0..FUSION_INPUT_LEN)
                .map(|_| {
                    let base: f32 = rng.gen_range(0.0..0.05);
                    if matching || rng.gen_bool(0.7) {
                        base
                    } else {
                        base + rng.gen_range(0.2..1.0)
                    }
                })
                .collect();
            (
                Tensor::from_vec(&[FUSION_INPUT_LEN], data).unwrap(),
                matching,
            )
        })
        .collect()
}

fn accuracy(head: &Sequential<f32>, data: &[(Tensor<f32>, bool)]) -> f64 {
    let correct = data
        .iter()
        .filter(|(x, y)| {
            MatchDecision::from_logits(head.forward(x).unwrap().data()).is_match() == *y
        })
        .count();
    correct as f64 / data.len() as f64
}

fn head_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-4,
        batch_size: 16,
        epochs,
        seed: 4,
        augment: false,
        max_negative_ratio: 1.0,
    }
}

#[test]
fn head_separates_a_toy_problem() {
    let mut head = build_fusion_head::<f32>(1);
    let train = toy_pairs(256, 1);
    let test = toy_pairs(200, 2);
    train_head(&mut head, &train, &head_config(5)).unwrap();
    let acc = accuracy(&head, &test);
    assert!(acc >= 0.99, "held-out accuracy {acc}");
}

#[test]
fn head_loss_decreases() {
    let mut head = build_fusion_head::<f32>(2);
    let history = train_head(&mut head, &toy_pairs(256, 3), &head_config(4)).unwrap();
    assert!(history.windows(2).all(|w| w[1] < w[0]), "{history:?}");
}

#[test]
fn identical_inputs_favor_a_match() {
    let mut head = build_fusion_head::<f32>(3);
    train_head(&mut head, &toy_pairs(256, 5), &head_config(3)).unwrap();
    let r = PlateReading::from_text("ABC1234", &[0.9; 7]).unwrap();
    let p = build_ocr_descriptor::<f32>(&r, &r).unwrap();
    assert!(p.similarity_block().iter().all(|v| *v == 0.0));
    // The toy pairs carry no plate reading, so only the difference terms are kept.
    let x = fusion_input(
        &ShapeDescriptor::zeros(EMBEDDING_LEN),
        &OcrDescriptor::from_values(vec![0.0; 35]).unwrap(),
    )
    .unwrap();
    let d = MatchDecision::from_logits(head.forward(&x).unwrap().data());
    assert!(d.p_match > d.p_nonmatch, "{d:?}");
}

fn tiny_pools() -> (BTreeMap<SetId, Vec<PairSample<f32>>>, ReadingCache) {
    let synth = generate(&SynthSpec {
        vehicles_per_camera: 5,
        seed: 8,
        ..SynthSpec::default()
    })
    .unwrap();
    let corpus = synth.corpus().unwrap();
    let sets = [SetId(1), SetId(2)];
    let pools =
        pair_pools::<f32>(&corpus, &synth, &sets, Some(1), &ShapeExpansion::default()).unwrap();
    let mut readings = ReadingCache::new();
    for (_, samples) in pools.values() {
        for s in samples {
            for plate in [&s.plate_a, &s.plate_b] {
                let text = &synth.vehicle(&plate.source.vehicle_id).unwrap().plate;
                readings.insert(
                    plate.source.clone(),
                    PlateReading::from_text(text, &[0.9; 7]).unwrap(),
                );
            }
        }
    }
    (
        pools.into_iter().map(|(k, (_, s))| (k, s)).collect(),
        readings,
    )
}

#[test]
fn fusion_training_leaves_ocr_weights_untouched() {
    let (pools, readings) = tiny_pools();
    let mut model = TwoStreamModel::<f32>::new(5, FusionMode::TwoStream);
    let before: Vec<Vec<u32>> = model
        .ocr
        .net
        .params()
        .iter()
        .map(|(_, t)| t.data().iter().map(|v| v.to_bits()).collect())
        .collect();
    let shape_before = model.shape.params()[0].1.clone();
    let cfg = TrainConfig {
        batch_size: 4,
        epochs: 1,
        ..head_config(1)
    };
    model
        .train(&pools[&SetId(1)], &pools[&SetId(2)], &readings, &cfg)
        .unwrap();
    let after: Vec<Vec<u32>> = model
        .ocr
        .net
        .params()
        .iter()
        .map(|(_, t)| t.data().iter().map(|v| v.to_bits()).collect())
        .collect();
    assert_eq!(before, after);
    assert_ne!(
        &shape_before,
        model.shape.params()[0].1,
        "shape stream should train"
    );
}

#[test]
fn checkpoint_round_trip_preserves_decisions() {
    let (pools, readings) = tiny_pools();
    let model = TwoStreamModel::<f32>::new(6, FusionMode::ShapeOnly);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let meta = BTreeMap::from([("note".to_string(), "test".to_string())]);
    model.save(&path, &meta).unwrap();
    let loaded = TwoStreamModel::<f32>::load(&path).unwrap();
    assert_eq!(loaded.mode, FusionMode::ShapeOnly);
    let pairs = &pools[&SetId(1)];
    let a = model.predict_many(pairs, &readings).unwrap();
    let b = loaded.predict_many(pairs, &readings).unwrap();
    assert_eq!(a, b);
}
