use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::graphio::synth::CsbmSpec;
use crate::graphio::{build_hop_sets, permute, GraphDataset, Permutation};
use crate::numcore::Tensor;

fn graph(n: usize, edges: &[(usize, usize)], features: Tensor) -> GraphDataset {
    let mut train = vec![false; n];
    train[0] = true;
    GraphDataset::new(
        edges.iter().copied(),
        features,
        (0..n).map(|v| v % 2).collect(),
        2,
        [train, vec![false; n], vec![false; n]],
    )
    .unwrap()
}

fn pairs_of(g: &GraphDataset, max_hop: usize) -> PairIndex {
    PairIndex::new(&build_hop_sets(g, max_hop).unwrap(), false)
}

fn small_cfg(variant: Variant) -> GibConfig {
    let base = match variant {
        Variant::Bern => GibConfig::gib_bern(),
        Variant::GatBaseline => GibConfig::gat_baseline(),
        _ => GibConfig::gib_cat(),
    };
    GibConfig {
        variant,
        hidden: 3,
        heads: 2,
        mixture_components: 4,
        ..base
    }
}

#[test]
fn init_is_deterministic_and_shaped() {
    let cfg = GibConfig::gib_cat();
    let a = init_params(&cfg, 1433, 7, 5).unwrap();
    let b = init_params(&cfg, 1433, 7, 5).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.layers[0].w[0].shape(), &[1433, 16]);
    assert_eq!(a.layers[1].w[0].shape(), &[64, 16]);
    assert_eq!(a.layers[0].a[0].shape(), &[2, 32]);
    assert_eq!(a.w_out.shape(), &[64, 7]);
    assert_eq!(a.mixtures.len(), 1);
    let w = a.mixtures[0].weights();
    assert_eq!(w.len(), 100);
    assert!(w.iter().all(|&x| (x - 0.01).abs() < 1e-15));
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(a.mixtures[0]
        .stddevs()
        .data()
        .iter()
        .all(|&s| (s - 1.0).abs() < 1e-12));
    assert_ne!(a, init_params(&cfg, 1433, 7, 6).unwrap());
}

#[test]
fn config_validation() {
    assert!(GibConfig::gib_cat().validate().is_ok());
    assert!(GibConfig::gib_bern().validate().is_ok());
    assert!(GibConfig::gat_baseline().validate().is_ok());
    let bad = GibConfig {
        s_a: vec![1],
        ..GibConfig::gib_cat()
    };
    assert!(matches!(
        bad.validate(),
        Err(GibError::Config { field: "s_a", .. })
    ));
    let bad = GibConfig {
        s_x: vec![],
        ..GibConfig::gib_cat()
    };
    assert!(matches!(
        bad.validate(),
        Err(GibError::Config { field: "s_x", .. })
    ));
    for bad in [
        GibConfig {
            k: 0,
            ..GibConfig::gib_cat()
        },
        GibConfig {
            max_hop: 0,
            ..GibConfig::gib_cat()
        },
        GibConfig {
            alpha: 1.0,
            ..GibConfig::gib_cat()
        },
        GibConfig {
            gumbel_temperature: 0.0,
            ..GibConfig::gib_cat()
        },
        GibConfig {
            beta1: -1.0,
            ..GibConfig::gib_cat()
        },
        GibConfig {
            s_x: vec![3],
            ..GibConfig::gib_cat()
        },
    ] {
        assert!(bad.validate().is_err(), "{bad:?}");
    }
}

#[test]
fn config_json_round_trip() {
    let cfg = GibConfig {
        eval_mode: EvalMode::Stochastic { samples: 4 },
        ..GibConfig::gib_bern()
    };
    let text = serde_json::to_string(&cfg).unwrap();
    assert_eq!(serde_json::from_str::<GibConfig>(&text).unwrap(), cfg);
    let partial: GibConfig = serde_json::from_str(r#"{"variant":"bern","k":2}"#).unwrap();
    assert_eq!(partial.variant, Variant::Bern);
    assert_eq!(partial.k, 2);
}

#[test]
fn attention_logit_examples() {
    let g = graph(2, &[(0, 1)], Tensor::zeros(&[2, 1]));
    let pairs = pairs_of(&g, 1);
    let z = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
    let a = Tensor::from_rows(&[vec![1.0, 0.0, 0.0, 1.0]]).unwrap();
    let l = attention_logits(&z, &pairs, &a).unwrap();
    // pair order: (v=0, u=1), (v=1, u=0)
    assert_eq!(l[0], 5.0);
    assert_eq!(l[1], 3.0 + 2.0);
    let zero = attention_logits(&z, &pairs, &Tensor::zeros(&[1, 4])).unwrap();
    assert!(zero.iter().all(|&x| x == 0.0));
    assert!(attention_logits(&z, &pairs, &Tensor::zeros(&[1, 3])).is_err());
}

#[test]
fn identical_features_give_constant_logits_per_center() {
    let g = graph(4, &[(0, 1), (0, 2), (0, 3), (1, 2)], Tensor::zeros(&[4, 1]));
    let pairs = pairs_of(&g, 2);
    let z = Tensor::from_rows(&vec![vec![0.3, -1.2]; 4]).unwrap();
    let a = Tensor::from_rows(&[vec![0.5, 1.0, -2.0, 0.7], vec![1.5, -1.0, 0.2, 0.1]]).unwrap();
    let l = attention_logits(&z, &pairs, &a).unwrap();
    for s in 0..pairs.segments.count() {
        let r = pairs.segments.range(s);
        for e in r.clone() {
            assert_eq!(l[e], l[r.start]);
        }
    }
}

#[test]
fn forced_choice_gets_weight_k() {
    let g = graph(3, &[(0, 1), (1, 2)], Tensor::zeros(&[3, 1]));
    let pairs = pairs_of(&g, 1);
    let logits = Tensor::new(vec![pairs.len(), 1], vec![0.3, -0.7, 1.1, 2.0]).unwrap();
    for mode in [
        SampleMode::Train,
        SampleMode::EvalHard,
        SampleMode::EvalExpect,
    ] {
        let (w, _) =
            neighbor_sample_cat(&logits, &pairs, 3, 0.5, mode, &mut Noise::new(1)).unwrap();
        // node 0 and node 2 each have a single candidate
        assert!((w.data()[0] - 3.0).abs() < 1e-12, "{mode:?}");
        assert!((w.data()[3] - 3.0).abs() < 1e-12, "{mode:?}");
    }
}

#[test]
fn uniform_expectation() {
    let edges: Vec<_> = (1..5).map(|u| (0, u)).collect();
    let g = graph(5, &edges, Tensor::zeros(&[5, 1]));
    let pairs = pairs_of(&g, 1);
    let logits = Tensor::zeros(&[pairs.len(), 1]);
    let (w, phi) = neighbor_sample_cat(
        &logits,
        &pairs,
        2,
        1.0,
        SampleMode::EvalExpect,
        &mut Noise::new(0),
    )
    .unwrap();
    for e in pairs.segments.range(0) {
        assert!((w.data()[e] - 0.5).abs() < 1e-15);
        assert!((phi.data()[e] - 0.25).abs() < 1e-15);
    }
}

#[test]
fn hard_categorical_mean_multiplicity() {
    let g = graph(3, &[(0, 1), (0, 2)], Tensor::zeros(&[3, 1]));
    let pairs = pairs_of(&g, 1);
    let logits = Tensor::new(
        vec![pairs.len(), 1],
        vec![0.9f64.ln(), 0.1f64.ln(), 0.0, 0.0],
    )
    .unwrap();
    let mut noise = Noise::new(42);
    let trials = 100_000;
    let mut total = 0.0;
    for _ in 0..trials {
        let (w, _) =
            neighbor_sample_cat(&logits, &pairs, 3, 1.0, SampleMode::EvalHard, &mut noise).unwrap();
        assert_eq!(w.data()[0] + w.data()[1], 3.0);
        total += w.data()[0];
    }
    let mean = total / trials as f64;
    assert!((mean - 2.7).abs() < 0.02, "{mean}");
}

#[test]
fn bernoulli_examples() {
    let zero = Tensor::zeros(&[1, 1]);
    let (w, phi) =
        neighbor_sample_bern(&zero, 0.5, SampleMode::EvalExpect, &mut Noise::new(0)).unwrap();
    assert_eq!(w.data()[0], 0.5);
    assert_eq!(phi.data()[0], 0.5);

    let sure = Tensor::full(&[1, 1], 20.0);
    let mut noise = Noise::new(3);
    let kept = (0..100_000)
        .filter(|_| {
            neighbor_sample_bern(&sure, 0.5, SampleMode::EvalHard, &mut noise)
                .unwrap()
                .0
                .data()[0]
                == 1.0
        })
        .count();
    assert!(kept as f64 >= 0.9999 * 100_000.0, "{kept}");

    let logits = Tensor::new(
        vec![1000, 1],
        (0..1000).map(|i| (i as f64 - 500.0) / 250.0).collect(),
    )
    .unwrap();
    let (w, _) =
        neighbor_sample_bern(&logits, 1e-4, SampleMode::Train, &mut Noise::new(8)).unwrap();
    let binary = w
        .data()
        .iter()
        .filter(|&&x| !(1e-6..=1.0 - 1e-6).contains(&x))
        .count();
    assert!(binary >= 995, "{binary}");
}

#[test]
fn non_finite_logits_rejected() {
    let g = graph(2, &[(0, 1)], Tensor::zeros(&[2, 1]));
    let pairs = pairs_of(&g, 1);
    let bad = Tensor::new(vec![2, 1], vec![f64::NAN, 0.0]).unwrap();
    assert!(matches!(
        neighbor_sample_cat(
            &bad,
            &pairs,
            1,
            1.0,
            SampleMode::EvalExpect,
            &mut Noise::new(0)
        ),
        Err(GibError::NonFinite { index: 0, .. })
    ));
    assert!(neighbor_sample_bern(&bad, 1.0, SampleMode::Train, &mut Noise::new(0)).is_err());
}

fn toy_input(cfg: &GibConfig) -> (GraphDataset, ModelInput) {
    let x = Tensor::from_rows(&[
        vec![1.0, 0.0, 0.5],
        vec![0.0, 1.0, 0.5],
        vec![1.0, 1.0, 0.0],
        vec![0.2, 0.4, 0.9],
        vec![0.7, 0.1, 0.3],
    ])
    .unwrap();
    let g = graph(5, &[(0, 1), (1, 2), (2, 3)], x);
    let input = ModelInput::new(&g, cfg).unwrap();
    (g, input)
}

#[test]
fn deterministic_layer_outputs_mean_and_isolated_node() {
    for variant in [Variant::Cat, Variant::Bern, Variant::GatBaseline] {
        let cfg = small_cfg(variant);
        let (_, input) = toy_input(&cfg);
        let params = init_params(&cfg, 3, 2, 11).unwrap();
        let trace = model_forward(
            &input,
            &params,
            &cfg,
            Mode::Deterministic,
            &mut Noise::new(0),
        )
        .unwrap();
        for l in &trace.layers {
            assert_eq!(l.z, l.mu);
            assert!(l.sigma2.data().iter().all(|&s| s > 0.0));
            if cfg.include_self {
                continue;
            }
            // node 4 is isolated
            assert!(l.mu.row(4).iter().all(|&x| x == 0.0));
            for &s in l.sigma2.row(4) {
                assert!((s - (2f64.ln() + 1e-8)).abs() < 1e-15);
            }
        }
        if !cfg.include_self {
            assert!(trace.logits.row(4).iter().all(|&x| x == 0.0));
        }
    }
}

#[test]
fn symmetric_nodes_match() {
    // star center 0 with leaves 1 and 2 carrying identical features
    let x = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
    let g = graph(3, &[(0, 1), (0, 2)], x);
    let cfg = small_cfg(Variant::Cat);
    let input = ModelInput::new(&g, &cfg).unwrap();
    let params = init_params(&cfg, 2, 2, 4).unwrap();
    let t = model_forward(
        &input,
        &params,
        &cfg,
        Mode::Deterministic,
        &mut Noise::new(0),
    )
    .unwrap();
    for l in &t.layers {
        assert_eq!(l.mu.row(1), l.mu.row(2));
        assert_eq!(l.sigma2.row(1), l.sigma2.row(2));
    }
}

#[test]
fn single_node_graph_has_zero_logits() {
    let g = graph(1, &[], Tensor::from_rows(&[vec![2.0, -1.0]]).unwrap());
    let cfg = GibConfig {
        layers: 1,
        s_a: vec![1],
        s_x: vec![1],
        ..small_cfg(Variant::Cat)
    };
    let input = ModelInput::new(&g, &cfg).unwrap();
    let params = init_params(&cfg, 2, 2, 0).unwrap();
    let t = model_forward(
        &input,
        &params,
        &cfg,
        Mode::Deterministic,
        &mut Noise::new(0),
    )
    .unwrap();
    assert_eq!(t.logits.data(), &[0.0, 0.0]);
}

#[test]
fn train_mode_invariants_and_determinism() {
    let cfg = small_cfg(Variant::Cat);
    let (_, input) = toy_input(&cfg);
    let params = init_params(&cfg, 3, 2, 2).unwrap();
    let a = model_forward(&input, &params, &cfg, Mode::Train, &mut Noise::new(9)).unwrap();
    let b = model_forward(&input, &params, &cfg, Mode::Train, &mut Noise::new(9)).unwrap();
    assert_eq!(a, b);
    for l in &a.layers {
        for s in 0..input.pairs.segments.count() {
            let r = input.pairs.segments.range(s);
            if r.is_empty() {
                continue;
            }
            for h in 0..cfg.heads {
                let total: f64 = r.clone().map(|e| l.weights.at(e, h)).sum();
                assert!((total - cfg.k as f64).abs() < 1e-9);
                let p: f64 = r.clone().map(|e| l.phi.at(e, h)).sum();
                assert!((p - 1.0).abs() < 1e-12);
            }
        }
        assert!(l.z.all_finite() && l.sigma2.data().iter().all(|&s| s > 0.0));
    }
    let hard = model_forward(&input, &params, &cfg, Mode::Stochastic, &mut Noise::new(1)).unwrap();
    for l in &hard.layers {
        for s in 0..input.pairs.segments.count() {
            let r = input.pairs.segments.range(s);
            if !r.is_empty() {
                let total: f64 = r.map(|e| l.weights.at(e, 0)).sum();
                assert_eq!(total, cfg.k as f64);
            }
        }
    }
}

#[test]
fn bernoulli_phi_in_open_interval() {
    let cfg = small_cfg(Variant::Bern);
    let (_, input) = toy_input(&cfg);
    let params = init_params(&cfg, 3, 2, 2).unwrap();
    let t = model_forward(&input, &params, &cfg, Mode::Train, &mut Noise::new(3)).unwrap();
    for l in &t.layers {
        assert!(l.phi.data().iter().all(|&p| p > 0.0 && p < 1.0));
    }
}

#[test]
fn predict_examples() {
    let l = Tensor::from_rows(&[
        vec![0.0, 0.0, 1.0],
        vec![1.0, 1.0, 0.0],
        vec![3.0, 5.0, 4.0],
    ])
    .unwrap();
    assert_eq!(predict(&l), vec![2, 0, 1]);
    let shifted = l.map(|x| x + 17.5);
    assert_eq!(predict(&shifted), predict(&l));
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_cfg(Variant::Bern);
    let params = init_params(&cfg, 3, 2, 21).unwrap();
    let path = dir.path().join("ckpt").join("model.json");
    save_checkpoint(
        &path,
        &params,
        &cfg,
        21,
        serde_json::json!({"best_val": 0.5}),
    )
    .unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back.params, params);
    assert_eq!(back.manifest.config, cfg);
    assert_eq!(back.manifest.meta["best_val"], 0.5);
    std::fs::write(data_path(&path), [0u8; 8]).unwrap();
    assert!(matches!(
        load_checkpoint(&path),
        Err(GibError::Checkpoint(_))
    ));
}

#[test]
fn include_self_adds_center_to_first_pool() {
    let g = graph(3, &[(0, 2)], Tensor::zeros(&[3, 1]));
    let hops = build_hop_sets(&g, 2).unwrap();
    let p = PairIndex::new(&hops, true);
    let pool0: Vec<usize> = p.segments.range(0).map(|e| p.candidate[e]).collect();
    assert_eq!(pool0, vec![0, 2]);
    let pool1: Vec<usize> = p.segments.range(2).map(|e| p.candidate[e]).collect();
    assert_eq!(pool1, vec![1]);
}

fn equivariance_gap(variant: Variant, seed: u64) -> f64 {
    let g = CsbmSpec {
        features: 12,
        topic_words: 3,
        words_per_node: 4,
        train_per_class: 2,
        val: 5,
        test: 5,
        ..CsbmSpec::cora_like(30, seed)
    }
    .generate()
    .unwrap();
    let cfg = small_cfg(variant);
    let params = init_params(&cfg, g.num_features(), g.num_classes(), seed).unwrap();
    let input = ModelInput::new(&g, &cfg).unwrap();
    let base = logits(
        &input,
        &params,
        &cfg,
        Mode::Deterministic,
        &mut Noise::new(0),
    )
    .unwrap();
    let p = Permutation::random(30, &mut ChaCha8Rng::seed_from_u64(seed + 1000));
    let pg = permute(&g, &p).unwrap();
    let pinput = ModelInput::new(&pg, &cfg).unwrap();
    let moved = logits(
        &pinput,
        &params,
        &cfg,
        Mode::Deterministic,
        &mut Noise::new(0),
    )
    .unwrap();
    let expect = p.permute_rows(&base).unwrap();
    moved.max_abs_diff(&expect)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn deterministic_forward_is_permutation_equivariant(seed in 0u64..500) {
        for v in [Variant::Cat, Variant::Bern, Variant::GatBaseline] {
            prop_assert!(equivariance_gap(v, seed) < 1e-8);
        }
    }
}
