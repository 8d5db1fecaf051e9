use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::synth::{two_communities, CsbmSpec};
use super::*;
use crate::numcore::Tensor;

fn plain(n: usize, edges: &[(usize, usize)]) -> GraphDataset {
    let mut train = vec![false; n];
    train[0] = true;
    GraphDataset::new(
        edges.iter().copied(),
        Tensor::from_rows(&(0..n).map(|i| vec![i as f64, 1.0]).collect::<Vec<_>>()).unwrap(),
        (0..n).map(|i| i % 2).collect(),
        2,
        [train, vec![false; n], vec![false; n]],
    )
    .unwrap()
}

fn floyd_warshall(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for &(u, v) in edges {
        if u != v {
            d[u][v] = 1;
            d[v][u] = 1;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

#[test]
fn path_hop_sets() {
    // 1-2-3 relabeled to 0-1-2
    let g = plain(3, &[(0, 1), (1, 2)]);
    let h = build_hop_sets(&g, 2).unwrap();
    assert_eq!(h.get(0, 1), &[1]);
    assert_eq!(h.get(0, 2), &[2]);
    assert_eq!(h.get(1, 1), &[0, 2]);
    assert!(h.get(1, 2).is_empty());
}

#[test]
fn isolated_node_has_empty_shells() {
    let g = plain(3, &[(0, 1)]);
    let h = build_hop_sets(&g, 3).unwrap();
    for t in 1..=3 {
        assert!(h.get(2, t).is_empty());
    }
}

#[test]
fn complete_graph_k4() {
    let edges: Vec<_> = (0..4)
        .flat_map(|u| (u + 1..4).map(move |v| (u, v)))
        .collect();
    let g = plain(4, &edges);
    let h = build_hop_sets(&g, 2).unwrap();
    for v in 0..4 {
        assert_eq!(h.get(v, 1).len(), 3);
        assert!(h.get(v, 2).is_empty());
    }
}

#[test]
fn zero_hop_rejected() {
    let g = plain(2, &[(0, 1)]);
    assert!(matches!(build_hop_sets(&g, 0), Err(GraphError::ZeroMaxHop)));
}

#[test]
fn edges_are_normalized() {
    let g = plain(3, &[(1, 0), (0, 1), (2, 1), (1, 2), (1, 2)]);
    assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
    assert_eq!(g.neighbors(1), &[0, 2]);
}

#[test]
fn invariants_rejected() {
    let x = Tensor::zeros(&[2, 1]);
    let t = vec![true, false];
    let f = vec![false; 2];
    let err = GraphDataset::new(
        [(0, 0)],
        x.clone(),
        vec![0, 1],
        2,
        [t.clone(), f.clone(), f.clone()],
    );
    assert!(matches!(err, Err(GraphError::SelfLoop { node: 0 })));
    let err = GraphDataset::new(
        [(0, 1)],
        x.clone(),
        vec![0, 2],
        2,
        [t.clone(), f.clone(), f.clone()],
    );
    assert!(matches!(
        err,
        Err(GraphError::LabelOutOfRange {
            node: 1,
            label: 2,
            ..
        })
    ));
    let err = GraphDataset::new(
        [(0, 1)],
        x.clone(),
        vec![0, 1],
        2,
        [t.clone(), t.clone(), f.clone()],
    );
    assert!(matches!(err, Err(GraphError::OverlappingMasks { node: 0 })));
    let err = GraphDataset::new(
        [(0, 1)],
        x.clone(),
        vec![0, 1],
        2,
        [f.clone(), f.clone(), f.clone()],
    );
    assert!(matches!(err, Err(GraphError::EmptyTrainMask)));
    let err = GraphDataset::new([(0, 5)], x, vec![0, 1], 2, [t, f.clone(), f]);
    assert!(matches!(
        err,
        Err(GraphError::NodeOutOfRange { node: 5, n: 2 })
    ));
}

#[test]
fn swap_on_path() {
    let g = plain(3, &[(0, 1), (1, 2)]);
    let p = Permutation::new(vec![1, 0, 2]).unwrap();
    let h = permute(&g, &p).unwrap();
    assert_eq!(h.edges(), &[(0, 1), (0, 2)]);
    assert_eq!(h.features().row(0), g.features().row(1));
    assert_eq!(h.labels()[1], g.labels()[0]);
    assert!(h.mask(Split::Train)[1]);
}

#[test]
fn identity_and_round_trip() {
    let g = two_communities(6, 3).unwrap();
    assert_eq!(permute(&g, &Permutation::identity(12)).unwrap(), g);
    let p = Permutation::random(12, &mut ChaCha8Rng::seed_from_u64(9));
    let back = permute(&permute(&g, &p).unwrap(), &p.inverse()).unwrap();
    assert_eq!(back, g);
}

#[test]
fn permutation_validation() {
    assert!(Permutation::new(vec![0, 0]).is_err());
    assert!(Permutation::new(vec![0, 2]).is_err());
    let g = plain(3, &[(0, 1)]);
    assert!(permute(&g, &Permutation::identity(2)).is_err());
}

#[test]
fn two_node_toy_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join(EDGES_FILE), "1\t0\n").unwrap();
    std::fs::write(dir.path().join(FEATURES_FILE), "0.5\t1\n-2\t3e-1\n").unwrap();
    std::fs::write(dir.path().join(LABELS_FILE), "0\n1\n").unwrap();
    std::fs::write(
        dir.path().join(SPLITS_FILE),
        r#"{"train":[0],"val":[1],"test":[]}"#,
    )
    .unwrap();
    let g = GraphDataset::load(dir.path()).unwrap();
    assert_eq!(g.num_nodes(), 2);
    assert_eq!(g.num_edges(), 1);
    assert_eq!(g.num_classes(), 2);
    assert_eq!(g.features().at(1, 1), 0.3);
}

#[test]
fn load_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        GraphDataset::load(dir.path()),
        Err(GraphError::MissingFile(_))
    ));
    std::fs::write(dir.path().join(EDGES_FILE), "0\t1\n").unwrap();
    std::fs::write(dir.path().join(FEATURES_FILE), "1\t2\n3\n").unwrap();
    std::fs::write(dir.path().join(LABELS_FILE), "0\n1\n").unwrap();
    std::fs::write(
        dir.path().join(SPLITS_FILE),
        r#"{"train":[0],"val":[0],"test":[]}"#,
    )
    .unwrap();
    assert!(matches!(
        GraphDataset::load(dir.path()),
        Err(GraphError::RaggedFeatures {
            line: 2,
            expected: 2,
            got: 1
        })
    ));
    std::fs::write(dir.path().join(FEATURES_FILE), "1\t2\n3\t4\n").unwrap();
    assert!(matches!(
        GraphDataset::load(dir.path()),
        Err(GraphError::OverlappingMasks { node: 0 })
    ));
    std::fs::write(
        dir.path().join(SPLITS_FILE),
        r#"{"train":[0],"val":[1],"test":[],"num_classes":1}"#,
    )
    .unwrap();
    assert!(matches!(
        GraphDataset::load(dir.path()),
        Err(GraphError::LabelOutOfRange { node: 1, .. })
    ));
    std::fs::write(dir.path().join(EDGES_FILE), "0\t0\n").unwrap();
    std::fs::write(
        dir.path().join(SPLITS_FILE),
        r#"{"train":[0],"val":[1],"test":[]}"#,
    )
    .unwrap();
    assert!(matches!(
        GraphDataset::load(dir.path()),
        Err(GraphError::SelfLoop { node: 0 })
    ));
}

#[test]
fn save_load_idempotent() {
    let g = CsbmSpec::cora_like(300, 1).generate().unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    g.save(a.path()).unwrap();
    let g1 = GraphDataset::load(a.path()).unwrap();
    assert_eq!(g1, g);
    g1.save(b.path()).unwrap();
    for f in [EDGES_FILE, FEATURES_FILE, LABELS_FILE, SPLITS_FILE] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap()
        );
    }
}

#[test]
fn cora_like_statistics() {
    let g = CsbmSpec::cora_like(2708, 0).generate().unwrap();
    assert_eq!(g.num_classes(), 7);
    assert_eq!(g.split_ids(Split::Train).len(), 140);
    assert_eq!(g.split_ids(Split::Val).len(), 500);
    assert_eq!(g.split_ids(Split::Test).len(), 1000);
    let same = g
        .edges()
        .iter()
        .filter(|&&(u, v)| g.labels()[u] == g.labels()[v])
        .count() as f64
        / g.num_edges() as f64;
    assert!((same - 0.81).abs() < 0.05, "homophily {same}");
    let deg = 2.0 * g.num_edges() as f64 / 2708.0;
    assert!((deg - 3.9).abs() < 0.2, "degree {deg}");
    assert_eq!(g, CsbmSpec::cora_like(2708, 0).generate().unwrap());
}

fn arb_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2usize..50).prop_flat_map(|n| {
        (
            Just(n),
            proptest::collection::vec((0..n, 0..n), 0..(2 * n))
                .prop_map(|es| es.into_iter().filter(|(u, v)| u != v).collect::<Vec<_>>()),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hop_sets_match_floyd_warshall((n, edges) in arb_graph(), max_hop in 1usize..5) {
        let g = plain(n, &edges);
        let h = build_hop_sets(&g, max_hop).unwrap();
        let d = floyd_warshall(n, &edges);
        for v in 0..n {
            for t in 1..=max_hop {
                let expect: Vec<usize> = (0..n).filter(|&u| d[v][u] == t).collect();
                prop_assert_eq!(h.get(v, t), expect.as_slice());
            }
            prop_assert_eq!(h.get(v, 1), g.neighbors(v));
        }
    }

    #[test]
    fn hop_sets_commute_with_permutation((n, edges) in arb_graph(), seed in 0u64..1000) {
        let g = plain(n, &edges);
        let p = Permutation::random(n, &mut ChaCha8Rng::seed_from_u64(seed));
        let direct = build_hop_sets(&permute(&g, &p).unwrap(), 2).unwrap();
        let relabeled = build_hop_sets(&g, 2).unwrap().relabel(&p).unwrap();
        prop_assert_eq!(direct, relabeled);
    }
}
