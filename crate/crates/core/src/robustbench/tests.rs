use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::gibnn::{init_params, GibConfig, ModelInput};
use crate::graphio::synth::{two_communities, CsbmSpec};
use crate::graphio::{GraphDataset, Split};
use crate::numcore::Tensor;
use crate::train::{evaluate, fit, OptimConfig, Schedule};

fn one_hot_rows(n: usize, f: usize) -> GraphDataset {
    let mut x = vec![0.0; n * f];
    for v in 0..n {
        x[v * f + v % f] = 1.0;
    }
    let labels: Vec<usize> = (0..n).map(|v| v % 2).collect();
    let train = (0..n).map(|v| v < 4).collect();
    let test = (0..n).map(|v| v >= 4).collect();
    GraphDataset::new(
        (0..n - 1).map(|v| (v, v + 1)),
        Tensor::new(vec![n, f], x).unwrap(),
        labels,
        2,
        [train, vec![false; n], test],
    )
    .unwrap()
}

fn settings(epochs: usize) -> ProtocolSettings {
    ProtocolSettings {
        epochs,
        optim: OptimConfig::default(),
        targets: TargetCounts {
            hi: 1,
            lo: 1,
            rand: 1,
        },
        workers: 1,
    }
}

#[test]
fn feature_scale_matches_two_pass() {
    assert_eq!(feature_scale(&one_hot_rows(10, 4)), 1.0);
    let g = CsbmSpec::cora_like(200, 1).generate().unwrap();
    let g = g
        .with_features(g.features().map(|x| x * 3.0 - 0.5))
        .unwrap();
    let x = g.features();
    let mut maxima = Vec::new();
    for v in 0..x.leading() {
        let mut m = f64::NEG_INFINITY;
        for &e in x.row(v) {
            if e > m {
                m = e;
            }
        }
        maxima.push(m);
    }
    let expect = maxima.iter().sum::<f64>() / maxima.len() as f64;
    assert_eq!(feature_scale(&g), expect);
}

#[test]
fn feature_noise_has_the_requested_spread() {
    let g = one_hot_rows(100, 1000);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let same = feature_noise_attack(&g, 0.0, &mut rng).unwrap();
    assert_eq!(same, g);
    let noisy = feature_noise_attack(&g, 0.5, &mut rng).unwrap();
    let d: Vec<f64> = noisy
        .features()
        .data()
        .iter()
        .zip(g.features().data())
        .map(|(a, b)| a - b)
        .collect();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / d.len() as f64).sqrt();
    assert!((sd - 0.5).abs() < 0.005, "{sd}");
    assert_eq!(noisy.edges(), g.edges());
    assert_eq!(noisy.labels(), g.labels());
    assert_eq!(noisy.splits(), g.splits());
    assert!(feature_noise_attack(&g, -1.0, &mut rng).is_err());
}

#[test]
fn structural_attack_adds_cross_class_edges() {
    let g = two_communities(6, 0).unwrap();
    let target = 2;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = proxy_structural_attack(&g, target, 1, &mut rng).unwrap();
    assert_eq!(h.degree(target), g.degree(target) + 1);
    assert_eq!(h.num_edges(), g.num_edges() + 1);
    assert_eq!(h.features(), g.features());
    assert_eq!(h.labels(), g.labels());
    assert_eq!(h.splits(), g.splits());

    let h4 = proxy_structural_attack(&g, target, 4, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let added: Vec<usize> = h4
        .neighbors(target)
        .iter()
        .copied()
        .filter(|&u| !g.has_edge(target, u))
        .collect();
    assert_eq!(added.len(), 4);
    assert!(added.iter().all(|&u| g.labels()[u] != g.labels()[target]));
    // smaller budgets are prefixes of the same draw
    let h2 = proxy_structural_attack(&g, target, 2, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    assert!(h2
        .neighbors(target)
        .iter()
        .all(|u| h4.neighbors(target).contains(u)));
    assert!(h
        .neighbors(target)
        .iter()
        .all(|u| h2.neighbors(target).contains(u)));

    let again = proxy_structural_attack(&g, target, 4, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    assert_eq!(again.edges(), h4.edges());

    let err = proxy_structural_attack(&g, target, 7, &mut rng).unwrap_err();
    assert!(
        matches!(err, RobustError::InsufficientEligible { available: 6, .. }),
        "{err}"
    );
    assert!(proxy_structural_attack(&g, target, 0, &mut rng).is_err());
}

#[test]
fn target_ranking_and_ties() {
    let m = [0.5, 2.0, -1.0, 0.1, 3.0, 0.7];
    let test = [0, 1, 2, 3, 4, 5];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let t = pick_targets(
        &m,
        &test,
        TargetCounts {
            hi: 1,
            lo: 1,
            rand: 0,
        },
        &mut rng,
    )
    .unwrap();
    assert_eq!(t, vec![4, 3]);
    assert!(m[t[0]] >= m[t[1]]);

    let flat = [1.0; 8];
    let ids: Vec<usize> = (0..8).collect();
    let t = pick_targets(
        &flat,
        &ids,
        TargetCounts {
            hi: 2,
            lo: 2,
            rand: 0,
        },
        &mut rng,
    )
    .unwrap();
    assert_eq!(t, vec![0, 1, 2, 3]);

    let t = pick_targets(
        &m,
        &test,
        TargetCounts {
            hi: 2,
            lo: 1,
            rand: 3,
        },
        &mut rng,
    )
    .unwrap();
    let mut sorted = t.clone();
    sorted.sort_unstable();
    sorted.dedup();
    assert_eq!(sorted.len(), 6);

    let err = pick_targets(
        &m,
        &test,
        TargetCounts {
            hi: 3,
            lo: 3,
            rand: 0,
        },
        &mut rng,
    );
    assert!(matches!(
        err,
        Err(RobustError::InsufficientCorrect {
            needed: 6,
            available: 5
        })
    ));
}

#[test]
fn targets_ignore_class_relabeling() {
    let g = CsbmSpec::cora_like(400, 2).generate().unwrap();
    let cfg = GibConfig::gib_cat();
    let input = ModelInput::new(&g, &cfg).unwrap();
    let params = init_params(&cfg, g.num_features(), g.num_classes(), 1).unwrap();
    let counts = TargetCounts::default();
    let a = select_targets(
        &params,
        &g,
        &input,
        &cfg,
        counts,
        &mut ChaCha8Rng::seed_from_u64(5),
    )
    .unwrap();
    assert_eq!(a.len(), 40);

    let k = g.num_classes();
    let sigma: Vec<usize> = (0..k).map(|c| (c + 3) % k).collect();
    let labels: Vec<usize> = g.labels().iter().map(|&y| sigma[y]).collect();
    let h = GraphDataset::from_split_ids(
        g.edges().to_vec(),
        g.features().clone(),
        labels,
        k,
        &g.splits(),
    )
    .unwrap();
    let mut permuted = params.clone();
    let w = &params.w_out;
    let rows = w.leading();
    let mut data = vec![0.0; rows * k];
    for r in 0..rows {
        for c in 0..k {
            data[r * k + sigma[c]] = w.at(r, c);
        }
    }
    permuted.w_out = Tensor::new(vec![rows, k], data).unwrap();
    let b = select_targets(
        &permuted,
        &h,
        &input,
        &cfg,
        counts,
        &mut ChaCha8Rng::seed_from_u64(5),
    )
    .unwrap();
    assert_eq!(a, b);
}

#[test]
fn zero_noise_protocol_matches_clean_training() {
    let g = two_communities(6, 1).unwrap();
    let cfg = GibConfig::gib_bern();
    let models = [ModelSpec {
        name: "bern".into(),
        config: cfg.clone(),
    }];
    let spec = AttackSpec::feature_noise(0.0, AttackMode::Evasive, 2, 4);
    let r = run_protocol(&g, &models, &spec, &[3], &settings(12)).unwrap();
    let input = ModelInput::new(&g, &cfg).unwrap();
    let st = fit(
        &g,
        &input,
        &cfg,
        &Schedule::new(12, cfg.beta1, cfg.beta2).unwrap(),
        &OptimConfig::default(),
        3,
        None,
    )
    .unwrap();
    let clean = evaluate(
        &st.best_params,
        &input,
        &cfg,
        g.labels(),
        g.mask(Split::Test),
    )
    .unwrap();
    assert_eq!(r.outcomes.len(), 2);
    assert!(r.outcomes.iter().all(|o| o.accuracy == clean));
    let row = r
        .row("bern", AttackKind::FeatureNoise, AttackMode::Evasive, 0.0)
        .unwrap();
    assert_eq!((row.mean, row.std, row.n), (clean, 0.0, 2));
}

#[test]
fn protocol_shape_and_worker_independence() {
    let g = two_communities(6, 2).unwrap();
    let models = [
        ModelSpec {
            name: "gat".into(),
            config: GibConfig::gat_baseline(),
        },
        ModelSpec {
            name: "cat".into(),
            config: GibConfig::gib_cat(),
        },
    ];
    let specs = [
        AttackSpec::feature_noise(1.0, AttackMode::Evasive, 5, 0),
        AttackSpec::add_edges(1, AttackMode::Evasive, 0),
        AttackSpec::add_edges(2, AttackMode::Evasive, 0),
        AttackSpec::add_edges(1, AttackMode::Poisoning, 0),
    ];
    let seeds = [0, 1, 2, 3, 4];
    let one = run_sweep(&g, &models, &specs, &seeds, &settings(8)).unwrap();
    let many = run_sweep(
        &g,
        &models,
        &specs,
        &seeds,
        &ProtocolSettings {
            workers: 3,
            ..settings(8)
        },
    )
    .unwrap();
    assert_eq!(one, many);

    for m in ["gat", "cat"] {
        let noise = one
            .row(m, AttackKind::FeatureNoise, AttackMode::Evasive, 1.0)
            .unwrap();
        assert_eq!(noise.n, 25);
        assert!((0.0..=1.0).contains(&noise.mean));
        for (mode, budget) in [
            (AttackMode::Evasive, 0.0),
            (AttackMode::Evasive, 2.0),
            (AttackMode::Poisoning, 0.0),
        ] {
            assert_eq!(one.row(m, AttackKind::AddEdges, mode, budget).unwrap().n, 5);
        }
    }
    let structural = one
        .outcomes
        .iter()
        .filter(|o| o.kind == AttackKind::AddEdges);
    assert!(structural.clone().all(|o| o.targets.len() == 3));

    let mut csv = Vec::new();
    one.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(
        text.starts_with("model,kind,mode,param,mean,std,n\n"),
        "{text}"
    );
    assert_eq!(text.lines().count(), 1 + one.rows.len());
    let back: RobustReport = serde_json::from_str(&one.to_json()).unwrap();
    assert_eq!(back, one);
}

#[test]
fn specs_are_validated() {
    let g = two_communities(4, 0).unwrap();
    let models = [ModelSpec {
        name: "gat".into(),
        config: GibConfig::gat_baseline(),
    }];
    let zero = AttackSpec::feature_noise(0.5, AttackMode::Evasive, 0, 0);
    let err = run_protocol(&g, &models, &zero, &[0], &settings(4)).unwrap_err();
    assert!(matches!(
        err,
        RobustError::Spec {
            field: "trials",
            ..
        }
    ));
    let neg = AttackSpec::feature_noise(-0.5, AttackMode::Evasive, 1, 0);
    assert!(run_protocol(&g, &models, &neg, &[0], &settings(4)).is_err());
    let none = AttackSpec::add_edges(0, AttackMode::Evasive, 0);
    assert!(run_protocol(&g, &models, &none, &[0], &settings(4)).is_err());
    let fine = AttackSpec::add_edges(1, AttackMode::Evasive, 0);
    assert!(run_protocol(&g, &models, &fine, &[], &settings(4)).is_err());
    let json = r#"{"kind":"add_edges","budget":2,"mode":"poisoning","trials":3,"seed":9}"#;
    let spec: AttackSpec = serde_json::from_str(json).unwrap();
    assert_eq!(spec.param(), 2.0);
    assert!(serde_json::from_str::<AttackSpec>(
        r#"{"kind":"add_edges","mode":"evasive","bogus":1}"#
    )
    .is_err());
}

#[test]
fn accuracy_falls_with_noise_ratio() {
    let g = CsbmSpec::cora_like(300, 4).generate().unwrap();
    let models = [ModelSpec {
        name: "gat".into(),
        config: GibConfig::gat_baseline(),
    }];
    let lambdas = [0.0, 0.5, 1.0, 1.5];
    let specs: Vec<AttackSpec> = lambdas
        .iter()
        .map(|&l| AttackSpec::feature_noise(l, AttackMode::Evasive, 5, 11))
        .collect();
    let r = run_sweep(&g, &models, &specs, &[0, 1, 2, 3, 4], &settings(60)).unwrap();
    let means: Vec<f64> = lambdas
        .iter()
        .map(|&l| {
            r.row("gat", AttackKind::FeatureNoise, AttackMode::Evasive, l)
                .unwrap()
                .mean
        })
        .collect();
    assert!(means.windows(2).all(|w| w[1] <= w[0]), "{means:?}");
    assert!(means[3] < means[0] - 0.05, "{means:?}");
}
