use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::bounds::ce_on;
use crate::gibnn::{forward_on, init_params, GibConfig, Mode, ModelInput, Noise};
use crate::graphio::synth::two_communities;
use crate::graphio::{GraphDataset, Split};
use crate::numcore::{Tape, Tensor};

fn toy() -> GraphDataset {
    two_communities(5, 3).unwrap()
}

fn quiet(mut cfg: GibConfig) -> GibConfig {
    cfg.dropout = 0.0;
    cfg.attention_dropout = 0.0;
    cfg
}

#[test]
fn beta_schedule_examples() {
    let s = Schedule::new(2000, 0.01, 0.02).unwrap();
    assert_eq!(beta_at(&s, 100), (0.0, 0.0));
    assert_eq!(beta_at(&s, 499), (0.0, 0.0));
    assert_eq!(beta_at(&s, 500), (0.0, 0.0));
    assert_eq!(beta_at(&s, 750).0, 0.005);
    assert_eq!(beta_at(&s, 1000), (0.01, 0.02));
    assert_eq!(beta_at(&s, 1500), (0.01, 0.02));
    assert_eq!(beta_at(&s, 1999), (0.01, 0.02));
}

#[test]
fn beta_schedule_is_monotone_with_floor_boundaries() {
    for e in 4..60 {
        let s = Schedule::new(e, 0.3, 0.7).unwrap();
        assert_eq!(s.boundaries(), (e / 4, e / 2));
        let mut prev = (0.0, 0.0);
        for epoch in 0..e {
            let b = beta_at(&s, epoch);
            assert!(b.0 >= prev.0 && b.1 >= prev.1, "E={e} epoch={epoch}");
            if epoch < e / 4 {
                assert_eq!(b, (0.0, 0.0));
            }
            if epoch >= e / 2 {
                assert_eq!(b, (0.3, 0.7));
            }
            prev = b;
        }
    }
    assert!(matches!(
        Schedule::new(3, 0.1, 0.1),
        Err(TrainError::ShortSchedule(3))
    ));
}

#[test]
fn adam_first_step_moves_by_lr() {
    let mut p = Tensor::vector(vec![0.0]);
    let g = Tensor::vector(vec![1.0]);
    let mut st = AdamState::new(&[&p]);
    let cfg = OptimConfig {
        lr: 0.01,
        weight_decay: 0.0,
    };
    adam_step(&mut [&mut p], &[g], &mut st, &cfg, &[true], 0).unwrap();
    // m̂ = 1, v̂ = 1
    let expect = -0.01 / (1.0 + 1e-8);
    assert!((p.data()[0] - expect).abs() < 1e-15);
    assert!((p.data()[0] + 0.01).abs() < 1e-9);
    assert_eq!(st.step, 1);
}

#[test]
fn adam_zero_gradient_is_a_fixed_point() {
    let mut p = Tensor::vector(vec![0.5, -2.0, 3.0]);
    let before = p.clone();
    let mut st = AdamState::new(&[&p]);
    let cfg = OptimConfig {
        lr: 0.01,
        weight_decay: 0.0,
    };
    for epoch in 0..5 {
        adam_step(
            &mut [&mut p],
            &[Tensor::zeros(&[3])],
            &mut st,
            &cfg,
            &[true],
            epoch,
        )
        .unwrap();
    }
    assert_eq!(p, before);
}

#[test]
fn adam_decay_is_decoupled_and_masked() {
    let cfg = OptimConfig {
        lr: 0.1,
        weight_decay: 0.5,
    };
    let mut a = Tensor::vector(vec![2.0]);
    let mut b = Tensor::vector(vec![2.0]);
    let mut st = AdamState::new(&[&a, &b]);
    let zero = Tensor::zeros(&[1]);
    adam_step(
        &mut [&mut a, &mut b],
        &[zero.clone(), zero],
        &mut st,
        &cfg,
        &[true, false],
        0,
    )
    .unwrap();
    assert!((a.data()[0] - (2.0 - 0.1 * 0.5 * 2.0)).abs() < 1e-15);
    assert_eq!(b.data()[0], 2.0);
}

#[test]
fn adam_rejects_bad_gradients() {
    let mut p = Tensor::vector(vec![0.0, 0.0]);
    let mut st = AdamState::new(&[&p]);
    let cfg = OptimConfig::default();
    let wrong = adam_step(
        &mut [&mut p],
        &[Tensor::zeros(&[3])],
        &mut st,
        &cfg,
        &[true],
        0,
    );
    assert!(matches!(
        wrong,
        Err(TrainError::GradientShape { index: 0, .. })
    ));
    let nan = adam_step(
        &mut [&mut p],
        &[Tensor::vector(vec![0.0, f64::NAN])],
        &mut st,
        &cfg,
        &[true],
        7,
    );
    assert!(matches!(
        nan,
        Err(TrainError::NonFiniteGradient { epoch: 7, param: 0 })
    ));
    assert_eq!(st.step, 0);
}

#[test]
fn accuracy_edge_cases() {
    assert_eq!(accuracy(&[0, 1], &[0, 1], &[true, true]), Some(1.0));
    assert_eq!(accuracy(&[0, 1], &[0, 1], &[false, false]), None);
    let one = accuracy(&[1, 1], &[0, 1], &[true, false]).unwrap();
    assert!(one == 0.0 || one == 1.0);

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let k = 7;
    let n = 50_000;
    let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
    let acc = accuracy(&pred, &labels, &vec![true; n]).unwrap();
    // binomial sd is about 0.0016
    assert!((acc - 1.0 / k as f64).abs() < 0.01, "{acc}");
}

#[test]
fn evaluate_rejects_empty_mask() {
    let g = toy();
    let cfg = GibConfig::gat_baseline();
    let input = ModelInput::new(&g, &cfg).unwrap();
    let params = init_params(&cfg, g.num_features(), 2, 0).unwrap();
    let err = evaluate(&params, &input, &cfg, g.labels(), &[false; 10]);
    assert!(matches!(err, Err(TrainError::EmptyMask)));
    let acc = evaluate(&params, &input, &cfg, g.labels(), g.mask(Split::Test)).unwrap();
    assert!((0.0..=1.0).contains(&acc));
}

#[test]
fn separable_toy_is_fit_within_200_epochs() {
    let g = toy();
    for cfg in [
        GibConfig::gat_baseline(),
        GibConfig::gib_cat(),
        GibConfig::gib_bern(),
    ] {
        let input = ModelInput::new(&g, &cfg).unwrap();
        let s = Schedule::new(200, cfg.beta1, cfg.beta2).unwrap();
        let st = fit(&g, &input, &cfg, &s, &OptimConfig::default(), 0, None).unwrap();
        let hit = st.history.iter().position(|r| r.train_acc == 1.0);
        assert!(
            hit.is_some(),
            "{:?} never fit the training nodes",
            cfg.variant
        );
        let acc = evaluate(
            &st.best_params,
            &input,
            &cfg,
            g.labels(),
            g.mask(Split::Train),
        )
        .unwrap();
        assert_eq!(acc, 1.0, "{:?}", cfg.variant);
    }
}

#[test]
fn fit_is_reproducible_and_keeps_the_best_snapshot() {
    let g = toy();
    let cfg = GibConfig::gib_cat();
    let input = ModelInput::new(&g, &cfg).unwrap();
    let s = Schedule::new(40, cfg.beta1, cfg.beta2).unwrap();
    let mut log = Vec::new();
    let a = fit(
        &g,
        &input,
        &cfg,
        &s,
        &OptimConfig::default(),
        9,
        Some(&mut log),
    )
    .unwrap();
    let b = fit(&g, &input, &cfg, &s, &OptimConfig::default(), 9, None).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.epoch, 40);
    assert_eq!(a.adam.m.len(), a.params.tensors().len());
    for (m, p) in a.adam.m.iter().zip(a.params.tensors()) {
        assert_eq!(m.shape(), p.shape());
    }

    let best = a
        .history
        .iter()
        .map(|r| r.val_acc)
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(a.best_val, best);
    let first = a.history.iter().position(|r| r.val_acc == best).unwrap();
    assert_eq!(a.best_epoch, first);
    let again = evaluate(&a.best_params, &input, &cfg, g.labels(), g.mask(Split::Val)).unwrap();
    assert_eq!(again, best);

    let lines: Vec<EpochRecord> = String::from_utf8(log)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines, a.history);
}

#[test]
fn different_seeds_differ() {
    let g = toy();
    let cfg = GibConfig::gib_bern();
    let input = ModelInput::new(&g, &cfg).unwrap();
    let s = Schedule::new(8, cfg.beta1, cfg.beta2).unwrap();
    let a = fit(&g, &input, &cfg, &s, &OptimConfig::default(), 1, None).unwrap();
    let b = fit(&g, &input, &cfg, &s, &OptimConfig::default(), 2, None).unwrap();
    assert_ne!(a.params, b.params);
}

/// Plain cross-entropy training written against the model directly.
fn pure_ce_trajectory(
    g: &GraphDataset,
    cfg: &GibConfig,
    epochs: usize,
    seed: u64,
) -> Vec<(f64, Vec<Tensor>)> {
    let input = ModelInput::new(g, cfg).unwrap();
    let mut params = init_params(cfg, g.num_features(), g.num_classes(), seed).unwrap();
    let decay = params.decay_mask();
    let mut adam = AdamState::new(&params.tensors());
    let mut noise = Noise::new(noise_seed(seed));
    let mut out = Vec::new();
    for epoch in 0..epochs {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let fwd = forward_on(&mut tape, &bound, &input, cfg, Mode::Train, &mut noise).unwrap();
        let ce = ce_on(&mut tape, fwd.logits, g.labels(), g.mask(Split::Train)).unwrap();
        let grads = tape.backward(ce).unwrap();
        let gs: Vec<Tensor> = bound
            .vars()
            .into_iter()
            .zip(params.tensors())
            .map(|(v, p)| grads.get_or_zeros(v, p))
            .collect();
        let loss = tape.value(ce).item();
        drop(tape);
        adam_step(
            &mut params.tensors_mut(),
            &gs,
            &mut adam,
            &OptimConfig::default(),
            &decay,
            epoch,
        )
        .unwrap();
        out.push((loss, params.tensors().into_iter().cloned().collect()));
    }
    out
}

#[test]
fn zero_betas_reduce_to_cross_entropy_training() {
    let g = toy();
    let epochs = 30;
    for cfg in [
        GibConfig::gat_baseline(),
        GibConfig::gib_cat(),
        GibConfig::gib_bern(),
    ] {
        let input = ModelInput::new(&g, &cfg).unwrap();
        let s = Schedule::new(epochs, 0.0, 0.0).unwrap();
        let st = fit(&g, &input, &cfg, &s, &OptimConfig::default(), 5, None).unwrap();
        let oracle = pure_ce_trajectory(&g, &cfg, epochs, 5);
        for (rec, (loss, _)) in st.history.iter().zip(&oracle) {
            assert_eq!(
                rec.loss.total.to_bits(),
                loss.to_bits(),
                "{:?}",
                cfg.variant
            );
            assert_eq!(rec.loss.ce.to_bits(), loss.to_bits());
        }
        let last: Vec<Tensor> = st.params.tensors().into_iter().cloned().collect();
        assert_eq!(last, oracle.last().unwrap().1, "{:?}", cfg.variant);
    }
}

#[test]
fn baseline_loss_decreases_over_every_50_epoch_window() {
    let g = toy();
    let cfg = quiet(GibConfig::gat_baseline());
    let input = ModelInput::new(&g, &cfg).unwrap();
    let s = Schedule::new(300, 0.0, 0.0).unwrap();
    let st = fit(&g, &input, &cfg, &s, &OptimConfig::default(), 0, None).unwrap();
    let loss: Vec<f64> = st.history.iter().map(|r| r.loss.total).collect();
    for t in 0..loss.len() - 50 {
        assert!(
            loss[t + 50] <= loss[t],
            "epoch {t}: {} -> {}",
            loss[t],
            loss[t + 50]
        );
    }
}

#[test]
fn overflowing_features_abort() {
    let g = toy();
    let g = g.with_features(g.features().map(|x| x * 1e300)).unwrap();
    let cfg = GibConfig::gib_cat();
    let input = ModelInput::new(&g, &cfg).unwrap();
    let s = Schedule::new(4, cfg.beta1, cfg.beta2).unwrap();
    let err = fit(&g, &input, &cfg, &s, &OptimConfig::default(), 0, None).unwrap_err();
    assert!(
        err.to_string().contains("non-finite") || err.to_string().contains("not finite"),
        "{err}"
    );
}
