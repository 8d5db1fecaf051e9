use gib_core::gibnn::{load_checkpoint, save_checkpoint, GibConfig, ModelInput};
use gib_core::graphio::synth::CsbmSpec;
use gib_core::graphio::{GraphDataset, Split};
use gib_core::train::{evaluate, evaluate_logits, fit, OptimConfig, Schedule};

#[test]
fn dataset_train_checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let g = CsbmSpec::cora_like(200, 8).generate().unwrap();
    g.save(dir.path().join("data")).unwrap();
    let g2 = GraphDataset::load(dir.path().join("data")).unwrap();
    assert_eq!(g2.num_nodes(), g.num_nodes());
    assert_eq!(g2.edges(), g.edges());
    assert_eq!(g2.features(), g.features());
    assert_eq!(g2.labels(), g.labels());
    assert_eq!(g2.splits(), g.splits());

    for cfg in [GibConfig::gib_cat(), GibConfig::gib_bern()] {
        let input = ModelInput::new(&g2, &cfg).unwrap();
        let s = Schedule::new(30, cfg.beta1, cfg.beta2).unwrap();
        let st = fit(&g2, &input, &cfg, &s, &OptimConfig::default(), 2, None).unwrap();
        let val = evaluate(
            &st.best_params,
            &input,
            &cfg,
            g2.labels(),
            g2.mask(Split::Val),
        )
        .unwrap();
        assert_eq!(val, st.best_val);
        assert!(st.history[st.best_epoch].train_acc > 1.0 / 7.0);

        let path = dir.path().join(format!("{:?}.json", cfg.variant));
        save_checkpoint(
            &path,
            &st.best_params,
            &cfg,
            2,
            serde_json::json!({"best_val": val}),
        )
        .unwrap();
        let ck = load_checkpoint(&path).unwrap();
        assert_eq!(ck.params, st.best_params);
        assert_eq!(ck.manifest.config, cfg);
        let a = evaluate_logits(&st.best_params, &input, &cfg, 0).unwrap();
        let b = evaluate_logits(&ck.params, &input, &ck.manifest.config, 0).unwrap();
        assert_eq!(a, b);
    }
}
