//! Built-in oracle suite: gradient, closed-form, bound and symmetry checks.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bounds::{
    aib_bern, aib_cat, mi_bruteforce, nwj_bound_eval, total_loss_on, xib, BoundError, ToyJoint,
};
use crate::gibnn::{
    forward_on, init_params, logits, model_forward, BoundParams, GibConfig, GibError, Mode,
    ModelInput, Noise, RegReduction, Variant,
};
use crate::graphio::synth::CsbmSpec;
use crate::graphio::{build_hop_sets, permute, GraphDataset, Permutation, Split};
use crate::numcore::{finite_diff_check, Segments, Tensor};

/// Six nodes, three classes, a cycle with one chord.
pub fn six_node_graph() -> GraphDataset {
    let x = Tensor::from_rows(&[
        vec![1.0, 0.0, 0.3],
        vec![0.2, 1.0, 0.0],
        vec![0.0, 0.4, 1.0],
        vec![0.7, 0.0, 0.5],
        vec![0.0, 0.9, 0.1],
        vec![0.5, 0.5, 0.5],
    ])
    .expect("rectangular rows");
    GraphDataset::new(
        [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5), (1, 4)],
        x,
        vec![0, 1, 2, 0, 1, 2],
        3,
        [
            vec![true, true, true, false, false, false],
            vec![false, false, false, true, false, false],
            vec![false, false, false, false, true, true],
        ],
    )
    .expect("valid toy graph")
}

/// Two layers, two heads, every loss term active.
pub fn gradcheck_config(variant: Variant) -> GibConfig {
    let base = match variant {
        Variant::Bern => GibConfig::gib_bern(),
        Variant::GatBaseline => GibConfig::gat_baseline(),
        _ => GibConfig::gib_cat(),
    };
    GibConfig {
        variant,
        layers: 2,
        heads: 2,
        hidden: 2,
        mixture_components: 3,
        s_a: vec![1, 2],
        s_x: vec![1],
        reg_reduction: RegReduction::Sum,
        ..base
    }
}

/// Max relative error between tape gradients of the full training loss and
/// central differences, with all sampling noise fixed by reseeding.
pub fn full_loss_gradcheck(variant: Variant, noise_seed: u64) -> Result<f64, BoundError> {
    let g = six_node_graph();
    let cfg = gradcheck_config(variant);
    let input = ModelInput::new(&g, &cfg)?;
    let params = init_params(&cfg, g.num_features(), g.num_classes(), 7)?;
    let layout = params.clone();
    let tensors: Vec<Tensor> = params.tensors().into_iter().cloned().collect();
    let mask = g.mask(Split::Train).to_vec();
    finite_diff_check(&tensors, 1e-6, |tape, leaves| {
        let bound = BoundParams::from_vars(&layout, leaves)?;
        let mut noise = Noise::new(noise_seed);
        let fwd = forward_on(tape, &bound, &input, &cfg, Mode::Train, &mut noise)?;
        let loss = total_loss_on(
            tape,
            &fwd,
            &bound,
            &input,
            g.labels(),
            &mask,
            &cfg,
            0.3,
            0.2,
            None,
        )?;
        Ok::<_, BoundError>(loss.total)
    })
}

/// Largest deviation of the KL estimators from hand-evaluated closed forms.
pub fn kl_closed_forms() -> Result<f64, BoundError> {
    let mut worst = 0f64;
    let seg = Segments::from_lengths([2]);
    let cat = aib_cat(&Tensor::new(vec![2, 1], vec![0.7, 0.3])?, &seg)?;
    worst = worst.max((cat - (0.7 * 1.4f64.ln() + 0.3 * 0.6f64.ln())).abs());
    worst = worst.max(aib_cat(&Tensor::new(vec![2, 1], vec![0.5, 0.5])?, &seg)?.abs());
    let bern = aib_bern(&Tensor::vector(vec![0.8]), 0.5)?.value;
    worst = worst.max((bern - (0.8 * 1.6f64.ln() + 0.2 * 0.4f64.ln())).abs());
    worst = worst.max(aib_bern(&Tensor::vector(vec![0.5, 0.5]), 0.5)?.value.abs());
    let one = |x: f64| Tensor::from_rows(&[vec![x]]).expect("1x1");
    let x = xib(
        &one(0.0),
        &one(0.0),
        &one(1.0),
        &[1.0],
        &one(0.0),
        &one(2.0),
    )?;
    worst = worst.max((x - 0.5 * 4f64.ln()).abs());
    Ok(worst)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct XibSanity {
    /// Mean of the single-sample estimate over the short run.
    pub mean: f64,
    pub stderr: f64,
    /// Long-run Monte-Carlo estimate of the same expectation (the KL).
    pub reference: f64,
    pub reference_stderr: f64,
}

impl XibSanity {
    /// Gap between the two estimates in units of their combined standard error.
    pub fn z_score(&self) -> f64 {
        (self.mean - self.reference).abs() / self.stderr.hypot(self.reference_stderr)
    }
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Resamples `Z ~ N(mu, sigma2)` for the first layer of a fixed tiny model
/// and averages the feature term, `short` draws against `long` draws.
pub fn xib_sanity(short: usize, long: usize, seed: u64) -> Result<XibSanity, BoundError> {
    let g = six_node_graph();
    let cfg = gradcheck_config(Variant::Cat);
    let input = ModelInput::new(&g, &cfg)?;
    let params = init_params(&cfg, g.num_features(), g.num_classes(), 7)?;
    let trace = model_forward(&input, &params, &cfg, Mode::Train, &mut Noise::new(5))?;
    let layer = &trace.layers[0];
    let mix = params
        .mixtures
        .iter()
        .find(|m| m.layer == 1)
        .ok_or_else(|| BoundError::InvalidTable("tiny model has no first-layer mixture".into()))?;
    let (weights, stddevs) = (mix.weights(), mix.stddevs());
    let sd = layer.sigma2.map(f64::sqrt);
    let mut noise = Noise::new(seed);
    let mut draw = |count: usize| -> Result<Vec<f64>, BoundError> {
        (0..count)
            .map(|_| {
                let eps = noise.normal(layer.mu.shape());
                let z = Tensor::new(
                    layer.mu.shape().to_vec(),
                    layer
                        .mu
                        .data()
                        .iter()
                        .zip(sd.data())
                        .zip(eps.data())
                        .map(|((m, s), e)| m + s * e)
                        .collect(),
                )?;
                xib(&z, &layer.mu, &layer.sigma2, &weights, &mix.means, &stddevs)
            })
            .collect()
    };
    let (mean, stderr) = mean_and_stderr(&draw(short)?);
    let (reference, reference_stderr) = mean_and_stderr(&draw(long)?);
    Ok(XibSanity {
        mean,
        stderr,
        reference,
        reference_stderr,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NwjSweep {
    /// Largest `bound - I` over random variational tables.
    pub max_excess: f64,
    /// Largest `|bound - I|` at the true conditional and marginal.
    pub max_optimum_gap: f64,
}

fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n)
        .map(|_| -rng.random::<f64>().max(1e-300).ln())
        .collect();
    let s: f64 = raw.iter().sum();
    let mut p: Vec<f64> = raw.iter().map(|x| x / s).collect();
    p[0] += 1.0 - p.iter().sum::<f64>();
    p
}

/// Random 3×3 joints, each probed with random variational tables and with the
/// optimal ones.
pub fn nwj_sweep(joints: usize, probes: usize, seed: u64) -> Result<NwjSweep, BoundError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = NwjSweep {
        max_excess: f64::NEG_INFINITY,
        max_optimum_gap: 0.0,
    };
    for _ in 0..joints {
        let flat = random_simplex(&mut rng, 9);
        let joint = ToyJoint::new(flat.chunks(3).map(<[f64]>::to_vec).collect())?;
        let mi = mi_bruteforce(&joint);
        for _ in 0..probes {
            let q1: Vec<Vec<f64>> = (0..3).map(|_| random_simplex(&mut rng, 3)).collect();
            let q2 = random_simplex(&mut rng, 3);
            out.max_excess = out.max_excess.max(nwj_bound_eval(&joint, &q1, &q2)? - mi);
        }
        let opt = nwj_bound_eval(&joint, &joint.conditional_y_given_z(), &joint.marginal_y())?;
        out.max_optimum_gap = out.max_optimum_gap.max((opt - mi).abs());
    }
    Ok(out)
}

/// A small Cora-like graph for symmetry checks.
pub fn symmetry_graph(n: usize, seed: u64) -> Result<GraphDataset, GibError> {
    Ok(CsbmSpec {
        features: 16,
        topic_words: 2,
        words_per_node: 4,
        train_per_class: 1,
        val: 5,
        test: 10,
        ..CsbmSpec::cora_like(n, seed)
    }
    .generate()?)
}

/// Max abs gap between deterministic logits on permuted graphs and the
/// relabeled logits of the original graph.
pub fn permutation_equivariance(
    cfg: &GibConfig,
    n: usize,
    perms: usize,
    seed: u64,
) -> Result<f64, GibError> {
    let g = symmetry_graph(n, seed)?;
    let params = init_params(cfg, g.num_features(), g.num_classes(), seed)?;
    let base = logits(
        &ModelInput::new(&g, cfg)?,
        &params,
        cfg,
        Mode::Deterministic,
        &mut Noise::new(0),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut worst = 0f64;
    for _ in 0..perms {
        let p = Permutation::random(n, &mut rng);
        let pg = permute(&g, &p)?;
        let moved = logits(
            &ModelInput::new(&pg, cfg)?,
            &params,
            cfg,
            Mode::Deterministic,
            &mut Noise::new(0),
        )?;
        worst = worst.max(moved.max_abs_diff(&p.permute_rows(&base)?));
    }
    Ok(worst)
}

/// Number of `(graph, v, t)` shells that disagree with all-pairs shortest paths.
pub fn hop_sets_vs_floyd_warshall(graphs: usize, seed: u64) -> Result<usize, GibError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0;
    for _ in 0..graphs {
        let n = rng.random_range(2..=50);
        let m = rng.random_range(0..2 * n);
        let edges: Vec<(usize, usize)> = (0..m)
            .map(|_| (rng.random_range(0..n), rng.random_range(0..n)))
            .filter(|(u, v)| u != v)
            .collect();
        let mut train = vec![false; n];
        train[0] = true;
        let g = GraphDataset::new(
            edges.iter().copied(),
            Tensor::zeros(&[n, 1]),
            vec![0; n],
            1,
            [train, vec![false; n], vec![false; n]],
        )?;
        let inf = usize::MAX / 4;
        let mut d = vec![vec![inf; n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            row[i] = 0;
        }
        for &(u, v) in &edges {
            d[u][v] = 1;
            d[v][u] = 1;
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    d[i][j] = d[i][j].min(d[i][k] + d[k][j]);
                }
            }
        }
        let max_hop = 4;
        let hops = build_hop_sets(&g, max_hop)?;
        for v in 0..n {
            for t in 1..=max_hop {
                let expect: Vec<usize> = (0..n).filter(|&u| d[v][u] == t).collect();
                if hops.get(v, t) != expect.as_slice() {
                    mismatches += 1;
                }
            }
        }
    }
    Ok(mismatches)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: &str, outcome: Result<(bool, String), String>) {
        let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
        self.checks.push(CheckResult {
            name: name.into(),
            passed,
            detail,
        });
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            writeln!(f, "{tag} {}: {}", c.name, c.detail)?;
        }
        let passed = self.checks.iter().filter(|c| c.passed).count();
        writeln!(f, "{passed}/{} checks passed", self.checks.len())
    }
}

pub fn run_verify() -> VerifyReport {
    let mut r = VerifyReport::default();
    for (name, variant) in [
        ("gradient gib-cat", Variant::Cat),
        ("gradient gib-bern", Variant::Bern),
    ] {
        r.push(
            name,
            full_loss_gradcheck(variant, 11)
                .map(|e| (e < 1e-4, format!("max relative error {e:.3e} (limit 1e-4)")))
                .map_err(|e| e.to_string()),
        );
    }
    r.push(
        "kl closed forms",
        kl_closed_forms()
            .map(|e| (e < 1e-10, format!("max abs error {e:.3e} (limit 1e-10)")))
            .map_err(|e| e.to_string()),
    );
    r.push(
        "xib expectation",
        xib_sanity(10_000, 1_000_000, 17)
            .map(|x| {
                (
                    x.mean >= -0.05 && x.z_score() <= 2.0,
                    format!(
                        "mean {:.4} (se {:.4}) vs reference {:.4} (se {:.4})",
                        x.mean, x.stderr, x.reference, x.reference_stderr
                    ),
                )
            })
            .map_err(|e| e.to_string()),
    );
    r.push(
        "nwj bound",
        nwj_sweep(100, 100, 1)
            .map(|s| {
                (
                    s.max_excess <= 1e-12 && s.max_optimum_gap <= 1e-9,
                    format!(
                        "max excess over I {:.3e}, max gap at optimum {:.3e}",
                        s.max_excess, s.max_optimum_gap
                    ),
                )
            })
            .map_err(|e| e.to_string()),
    );
    for (name, cfg) in [
        ("permutation gib-cat", GibConfig::gib_cat()),
        ("permutation gib-bern", GibConfig::gib_bern()),
    ] {
        r.push(
            name,
            permutation_equivariance(&cfg, 30, 20, 3)
                .map(|d| {
                    (
                        d < 1e-8,
                        format!("max abs logit gap {d:.3e} over 20 permutations"),
                    )
                })
                .map_err(|e| e.to_string()),
        );
    }
    r.push(
        "hop sets",
        hop_sets_vs_floyd_warshall(40, 5)
            .map(|m| {
                (
                    m == 0,
                    format!("{m} mismatched shells over 40 random graphs"),
                )
            })
            .map_err(|e| e.to_string()),
    );
    r
}
