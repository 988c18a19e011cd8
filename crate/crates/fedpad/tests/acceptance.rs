//! End-to-end acceptance suite. One test per criterion; each prints a
//! `criterion N: PASS` line (visible with `--nocapture`) and enforces its
//! own wall-clock budget. Run with `cargo test --test acceptance`.

use std::f64::consts::LN_2;
use std::sync::Arc;
use std::time::Instant;

use indexmap::IndexMap;
use fedpad::autodiff::{
    forward_stack, loss_cls, loss_depth, loss_diff, loss_rec, Graph, Layer, LayerKind, Optimizer,
    OptimizerKind,
};
use fedpad::config::ExperimentConfig;
use fedpad::datagen::{generate_family, FamilyConfig};
use fedpad::federation::{
    aggregate, batch_tensors, data_center_update_fedgpad, run_rounds, AggregationMode,
    ClientModel, DataCenter, ModelUpdate, ReadAudit, Server,
};
use fedpad::harness;
use fedpad::metrics::{auc_pair_counting, eer, far_frr, hter, roc_auc, ScoreSet, Source};
use fedpad::model::{
    build_disentangled, build_monolithic, total_local_loss, LossFlags, ModelConfig,
};
use fedpad::params::{ParameterSet, Partition};
use fedpad::tensor::{Dist, Rng, Tensor};

fn report(n: u32, label: &str, detail: String, started: Instant, budget_secs: f64) {
    let secs = started.elapsed().as_secs_f64();
    println!("criterion {n} ({label}): PASS — {detail} ({secs:.1}s, budget {budget_secs:.0}s)");
    assert!(
        secs < budget_secs,
        "criterion {n} exceeded its {budget_secs}s budget: {secs:.1}s"
    );
}

// ---------------------------------------------------------------- criterion 1

/// Scalar objective: forward the stack on `x`, square and sum the output.
fn stack_scalar(layers: &[Layer], params: &ParameterSet, x: &Tensor) -> f64 {
    let mut g = Graph::new();
    let xn = g.leaf(x.clone());
    let mut leaves = IndexMap::new();
    let out = forward_stack(&mut g, layers, params, &mut leaves, xn).unwrap();
    let sq = g.square(out).unwrap();
    let s = g.sum_all(sq).unwrap();
    g.value(s).item()
}

fn rel_err(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs());
    if denom < 1e-8 {
        0.0
    } else {
        (a - b).abs() / denom
    }
}

/// Check reverse-mode gradients of the squared-sum objective against central
/// finite differences, for both the input and every parameter entry.
fn grad_check_stack(layers: &[Layer], params: &ParameterSet, x: &Tensor) -> usize {
    const H: f64 = 1e-5;
    let mut g = Graph::new();
    let xn = g.leaf(x.clone());
    let mut leaves = IndexMap::new();
    let out = forward_stack(&mut g, layers, params, &mut leaves, xn).unwrap();
    let sq = g.square(out).unwrap();
    let s = g.sum_all(sq).unwrap();
    let node_grads = g.backward(s).unwrap();
    let param_grads = g.param_grads(&node_grads);

    let mut checked = 0usize;
    // Input gradient.
    let gx = node_grads[xn.0].clone().expect("input gradient");
    for i in 0..x.len() {
        let mut lo = x.data().to_vec();
        let mut hi = lo.clone();
        lo[i] -= H;
        hi[i] += H;
        let shape = x.shape().to_vec();
        let f_lo = stack_scalar(layers, params, &Tensor::new(shape.clone(), lo).unwrap());
        let f_hi = stack_scalar(layers, params, &Tensor::new(shape, hi).unwrap());
        let fd = (f_hi - f_lo) / (2.0 * H);
        assert!(
            rel_err(gx.data()[i], fd) < 1e-5,
            "input grad [{i}]: ad {} vs fd {fd}",
            gx.data()[i]
        );
        checked += 1;
    }
    // Parameter gradients.
    for name in params.names() {
        let base = params.get(&name).unwrap().clone();
        let ad = match param_grads.get(&name) {
            Some(t) => t.clone(),
            None => Tensor::zeros(base.shape()),
        };
        for i in 0..base.len() {
            let mut work = params.clone();
            let mut lo = base.data().to_vec();
            let mut hi = lo.clone();
            lo[i] -= H;
            hi[i] += H;
            work.set(&name, Tensor::new(base.shape().to_vec(), lo).unwrap())
                .unwrap();
            let f_lo = stack_scalar(layers, &work, x);
            work.set(&name, Tensor::new(base.shape().to_vec(), hi).unwrap())
                .unwrap();
            let f_hi = stack_scalar(layers, &work, x);
            let fd = (f_hi - f_lo) / (2.0 * H);
            assert!(
                rel_err(ad.data()[i], fd) < 1e-5,
                "{name}[{i}]: ad {} vs fd {fd}",
                ad.data()[i]
            );
            checked += 1;
        }
    }
    checked
}

/// Draw an input with entries bounded away from 0 so ReLU kinks cannot sit
/// inside the finite-difference interval.
fn kink_safe(rng: &mut Rng, shape: &[usize]) -> Tensor {
    let raw = rng.draw(Dist::Uniform { lo: 0.05, hi: 1.0 }, shape).unwrap();
    let signs = rng.draw(Dist::Uniform { lo: -1.0, hi: 1.0 }, shape).unwrap();
    let data = raw
        .data()
        .iter()
        .zip(signs.data())
        .map(|(&m, &s)| if s < 0.0 { -m } else { m })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// One scalar loss value and its gradients w.r.t. the listed leaf tensors.
fn loss_case(
    build: &dyn Fn(&mut Graph, &[fedpad::autodiff::NodeId]) -> fedpad::autodiff::NodeId,
    inputs: &[Tensor],
) -> (f64, Vec<Tensor>) {
    let mut g = Graph::new();
    let nodes: Vec<_> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let loss = build(&mut g, &nodes);
    let value = g.value(loss).item();
    let grads = g.backward(loss).unwrap();
    let per_input = nodes
        .iter()
        .zip(inputs)
        .map(|(n, t)| grads[n.0].clone().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();
    (value, per_input)
}

fn grad_check_loss(
    build: &dyn Fn(&mut Graph, &[fedpad::autodiff::NodeId]) -> fedpad::autodiff::NodeId,
    inputs: &[Tensor],
) -> usize {
    const H: f64 = 1e-5;
    let (_, ad) = loss_case(build, inputs);
    let mut checked = 0usize;
    for (k, t) in inputs.iter().enumerate() {
        for i in 0..t.len() {
            let perturb = |delta: f64| {
                let mut all: Vec<Tensor> = inputs.to_vec();
                let mut data = t.data().to_vec();
                data[i] += delta;
                all[k] = Tensor::new(t.shape().to_vec(), data).unwrap();
                loss_case(build, &all).0
            };
            let fd = (perturb(H) - perturb(-H)) / (2.0 * H);
            assert!(
                rel_err(ad[k].data()[i], fd) < 1e-5,
                "loss input {k}[{i}]: ad {} vs fd {fd}",
                ad[k].data()[i]
            );
            checked += 1;
        }
    }
    checked
}

#[test]
fn criterion_1_gradients_match_finite_differences() {
    let start = Instant::now();
    let rng = Rng::new(41, 0);
    let mut cases = 0usize;
    let mut coords = 0usize;

    // Every layer kind, four random instances each.
    for case in 0..4u64 {
        let mut case_rng = rng.substream(case);
        let kinds: Vec<(Layer, Vec<usize>)> = vec![
            (
                Layer::new(LayerKind::Dense { input: 4, output: 3 }, "t.dense"),
                vec![2, 4],
            ),
            (
                Layer::new(LayerKind::Conv3x3 { in_ch: 2, out_ch: 2 }, "t.conv"),
                vec![1, 4, 4, 2],
            ),
            (Layer::new(LayerKind::AvgPool2x2, ""), vec![1, 4, 4, 2]),
            (Layer::new(LayerKind::Relu, ""), vec![2, 5]),
            (Layer::new(LayerKind::Sigmoid, ""), vec![2, 5]),
            (Layer::new(LayerKind::Flatten, ""), vec![2, 3, 2, 1]),
            (Layer::new(LayerKind::Upsample2x, ""), vec![1, 2, 2, 2]),
            (
                Layer::new(LayerKind::Reshape { h: 2, w: 2, c: 2 }, ""),
                vec![2, 8],
            ),
        ];
        for (layer, in_shape) in kinds {
            let mut params = ParameterSet::new();
            layer
                .init_params(&mut params, Partition::Invariant, &mut case_rng)
                .unwrap();
            assert!(params.total_values() <= 200, "instance too large");
            let x = kink_safe(&mut case_rng, &in_shape);
            coords += grad_check_stack(&[layer], &params, &x);
            cases += 1;
        }
    }

    // The four losses, five random instances each. Classification
    // probabilities come from a sigmoid so perturbations stay in (0,1).
    for case in 0..5u64 {
        let mut case_rng = rng.substream(0x1000 + case);
        let n = 3 + (case as usize % 3);

        let labels_raw = case_rng
            .draw(Dist::Uniform { lo: 0.0, hi: 1.0 }, &[n])
            .unwrap();
        let labels = labels_raw.map("round", |v| if v > 0.5 { 1.0 } else { 0.0 }).unwrap();
        let pre = case_rng.draw(Dist::Normal { mean: 0.0, std: 2.0 }, &[n]).unwrap();
        coords += grad_check_loss(
            &|g, nodes| {
                let p = g.sigmoid(nodes[0]).unwrap();
                loss_cls(g, p, &labels).unwrap()
            },
            &[pre],
        );
        cases += 1;

        let pred = case_rng.draw(Dist::Normal { mean: 0.0, std: 1.0 }, &[n, 4]).unwrap();
        let target = case_rng.draw(Dist::Uniform { lo: 0.0, hi: 1.0 }, &[n, 4]).unwrap();
        coords += grad_check_loss(
            &|g, nodes| loss_depth(g, nodes[0], nodes[1]).unwrap(),
            &[pred, target],
        );
        cases += 1;

        let recon = case_rng.draw(Dist::Normal { mean: 0.5, std: 0.5 }, &[n, 2, 2, 2]).unwrap();
        let x = case_rng.draw(Dist::Uniform { lo: 0.0, hi: 1.0 }, &[n, 2, 2, 2]).unwrap();
        coords += grad_check_loss(
            &|g, nodes| loss_rec(g, nodes[0], nodes[1]).unwrap(),
            &[recon, x],
        );
        cases += 1;

        let zi = case_rng.draw(Dist::Normal { mean: 0.0, std: 1.0 }, &[n, 5]).unwrap();
        let zs = case_rng.draw(Dist::Normal { mean: 0.0, std: 1.0 }, &[n, 5]).unwrap();
        coords += grad_check_loss(
            &|g, nodes| loss_diff(g, nodes[0], nodes[1]).unwrap(),
            &[zi, zs],
        );
        cases += 1;
    }

    assert!(cases >= 50, "only {cases} gradient cases");
    report(
        1,
        "gradient suite",
        format!("{cases} cases, {coords} coordinates, all within 1e-5 of central differences"),
        start,
        30.0,
    );
}

// ---------------------------------------------------------------- criterion 2

fn random_update(dc: u64, names: &[(&str, Vec<usize>)], rng: &mut Rng) -> ModelUpdate {
    let mut params = ParameterSet::new();
    for (name, shape) in names {
        let t = rng.draw(Dist::Normal { mean: 0.0, std: 1.0 }, shape).unwrap();
        params.insert(name, t, Partition::Invariant).unwrap();
    }
    ModelUpdate {
        data_center: dc,
        round: 0,
        params,
    }
}

#[test]
fn criterion_2_aggregation_is_the_arithmetic_mean() {
    let start = Instant::now();
    let names: Vec<(&str, Vec<usize>)> = vec![("a.w", vec![3, 2]), ("a.b", vec![2]), ("b.w", vec![4])];
    let mut rng = Rng::new(42, 0);
    for k in [1usize, 2, 3, 5] {
        let updates: Vec<ModelUpdate> = (0..k)
            .map(|i| random_update(i as u64, &names, &mut rng))
            .collect();
        let agg = aggregate(&updates).unwrap();
        for (name, shape) in &names {
            let len: usize = shape.iter().product();
            let mut mean = vec![0.0f64; len];
            for u in &updates {
                for (m, &v) in mean.iter_mut().zip(u.params.get(name).unwrap().data()) {
                    *m += v / k as f64;
                }
            }
            for (a, m) in agg.get(name).unwrap().data().iter().zip(&mean) {
                assert!((a - m).abs() < 1e-12, "K={k} {name}: {a} vs {m}");
            }
        }

        // Permutation invariance must be exact (bit-identical).
        let mut reversed = updates.clone();
        reversed.reverse();
        let agg_rev = aggregate(&reversed).unwrap();
        for (name, _) in &names {
            assert_eq!(agg.get(name).unwrap().data(), agg_rev.get(name).unwrap().data());
        }

        // K identical updates leave parameters unchanged.
        let identical: Vec<ModelUpdate> = (0..k)
            .map(|i| ModelUpdate {
                data_center: i as u64,
                round: 0,
                params: updates[0].params.clone(),
            })
            .collect();
        let agg_id = aggregate(&identical).unwrap();
        for (name, _) in &names {
            for (a, b) in agg_id
                .get(name)
                .unwrap()
                .data()
                .iter()
                .zip(updates[0].params.get(name).unwrap().data())
            {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
    report(
        2,
        "aggregation algebra",
        "K in {1,2,3,5}: mean within 1e-12, permutation-exact, idempotent on identical updates"
            .to_string(),
        start,
        1.0,
    );
}

// ---------------------------------------------------------------- criterion 3

#[test]
fn criterion_3_single_client_federation_equals_centralized_training() {
    let start = Instant::now();
    let family = FamilyConfig::default();
    let rng = Rng::new(7, 0);
    let (train, _) = generate_family(1, 16, &family, &rng).unwrap();
    let mut init_rng = Rng::new(7, 1);
    let model = build_monolithic(&ModelConfig::default(), &mut init_rng).unwrap();
    let rounds = 6u64;
    let full_batch = train[0].len();

    let make_dc = || {
        DataCenter::new(
            0,
            train[0].clone(),
            ClientModel::Monolithic(model.clone()),
            Optimizer::new(OptimizerKind::Sgd { lr: 0.01 }),
            1,
            full_batch,
            &rng,
            LossFlags::default(),
        )
        .unwrap()
    };

    let mut server = Server::new(&model.params, AggregationMode::Full);
    let mut dcs = vec![make_dc()];
    run_rounds(&mut server, &mut dcs, rounds, false).unwrap();

    let mut central = make_dc();
    central.train_centralized(rounds).unwrap();

    let federated = &server.global;
    let direct = central.model.params();
    assert_eq!(federated.names(), direct.names());
    let mut worst = 0.0f64;
    for name in federated.names() {
        for (a, b) in federated
            .get(&name)
            .unwrap()
            .data()
            .iter()
            .zip(direct.get(&name).unwrap().data())
        {
            worst = worst.max((a - b).abs());
            assert!((a - b).abs() < 1e-9, "{name}: {a} vs {b}");
        }
    }
    report(
        3,
        "single-client equivalence",
        format!("{rounds} rounds vs {rounds} centralized epochs, max |Δ| = {worst:.3e}"),
        start,
        60.0,
    );
}

// ---------------------------------------------------------------- criterion 4

#[test]
fn criterion_4_partition_and_privacy_invariants() {
    let start = Instant::now();
    let family = FamilyConfig::default();
    let rng = Rng::new(11, 0);
    let (train, _) = generate_family(3, 12, &family, &rng).unwrap();
    let mut init_rng = Rng::new(11, 1);
    let model = build_disentangled(&ModelConfig::default(), &mut init_rng).unwrap();
    let invariant_names = model.params.filter(Partition::Invariant).names();

    let audit = Arc::new(ReadAudit::default());
    let mut dcs: Vec<DataCenter> = train
        .iter()
        .enumerate()
        .map(|(k, ds)| {
            DataCenter::new(
                k as u64,
                ds.clone(),
                ClientModel::Disentangled(model.clone()),
                Optimizer::new(OptimizerKind::adam(0.002)),
                1,
                4,
                &rng,
                LossFlags::default(),
            )
            .unwrap()
            .with_audit(audit.clone())
        })
        .collect();

    // Inspect one serialized update per data center before running rounds.
    let broadcast = model.params.filter(Partition::Invariant);
    for dc in dcs.iter_mut() {
        let (update, _) = data_center_update_fedgpad(dc, &broadcast, 0).unwrap();
        assert_eq!(
            update.params.names(),
            invariant_names,
            "update key set must be exactly the invariant partition"
        );
        for name in update.params.names() {
            assert!(
                name.starts_with("ei.") || name.starts_with("c.") || name.starts_with("dep."),
                "unexpected family in update: {name}"
            );
        }
        let bytes = update.encode();
        for needle in [&b"es."[..], &b"dec."[..]] {
            assert!(
                !bytes.windows(needle.len()).any(|w| w == needle),
                "wire bytes leak a specific-partition name"
            );
        }
        let decoded = ModelUpdate::decode(&bytes).unwrap();
        assert_eq!(decoded.params.names(), invariant_names);
    }

    let mut server = Server::new(&model.params, AggregationMode::InvariantOnly);
    run_rounds(&mut server, &mut dcs, 2, false).unwrap();

    // Every recorded dataset read must pair data center k with domain k.
    let events = audit.events();
    assert!(!events.is_empty(), "audit recorded nothing");
    for (dc_id, domain) in &events {
        assert_eq!(dc_id, domain, "data center {dc_id} read domain {domain}");
    }
    // The deployed artifact carries extractor + classifier heads only.
    for name in server.user_download().names() {
        assert!(name.starts_with("ei.") || name.starts_with("c."));
    }
    report(
        4,
        "partition/privacy",
        format!(
            "updates carry exactly {} invariant entries; {} audited reads all intra-domain",
            invariant_names.len(),
            events.len()
        ),
        start,
        60.0,
    );
}

// ---------------------------------------------------------------- criterion 5

/// Independent Mann-Whitney oracle: count real-over-spoof pairs, ties 1/2.
fn pair_counting_oracle(scores: &[(f64, u8)]) -> f64 {
    let mut wins = 0.0f64;
    let mut pairs = 0.0f64;
    for &(sr, lr) in scores {
        if lr != 1 {
            continue;
        }
        for &(ss, ls) in scores {
            if ls != 0 {
                continue;
            }
            pairs += 1.0;
            if sr > ss {
                wins += 1.0;
            } else if sr == ss {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Exhaustive operating-point sweep: evaluate FAR/FRR at every realizable
/// threshold and return (far + frr) / 2 at the minimum |far - frr|.
fn eer_exhaustive(set: &ScoreSet) -> f64 {
    let mut thresholds: Vec<f64> = Vec::new();
    let mut sorted: Vec<f64> = set.scores().iter().map(|&(s, _)| s).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted.dedup();
    thresholds.push(sorted[0] - 1.0);
    for w in sorted.windows(2) {
        thresholds.push((w[0] + w[1]) / 2.0);
    }
    thresholds.push(sorted[sorted.len() - 1]);
    let mut best = (f64::INFINITY, 0.0);
    for t in thresholds {
        let (far, frr) = far_frr(set, t).unwrap();
        let gap = (far - frr).abs();
        if gap < best.0 {
            best = (gap, (far + frr) / 2.0);
        }
    }
    best.1
}

#[test]
fn criterion_5_metric_oracles() {
    let start = Instant::now();
    let rng = Rng::new(99, 0);
    let mut max_eer_gap = 0.0f64;
    for case in 0..200u64 {
        let mut case_rng = rng.substream(case);
        let n = 2 + (case_rng.next_f64() * 998.0) as usize;
        let quantize = case % 2 == 0; // half the sets get heavy ties
        let mut scores = Vec::with_capacity(n);
        for i in 0..n {
            let raw = case_rng.next_f64() * 4.0 - 2.0;
            let s = if quantize { (raw * 4.0).round() / 4.0 } else { raw };
            // Force both labels to be present.
            let l = if i == 0 {
                0
            } else if i == 1 {
                1
            } else {
                (case_rng.next_f64() > 0.5) as u8
            };
            scores.push((s, l));
        }
        let set = ScoreSet::new(scores.clone(), Source::User).unwrap();
        let (_, auc) = roc_auc(&set).unwrap();
        let oracle = pair_counting_oracle(&scores);
        assert_eq!(auc, oracle, "case {case}: AUC {auc} != pair counting {oracle}");
        assert_eq!(auc, auc_pair_counting(&set).unwrap());

        if quantize {
            // The sample-count EER tolerance below is only meaningful when
            // operating points move one sample at a time. Heavily tied sets
            // jump many samples per threshold, so no realizable operating
            // point need sit near the crossing; they are exercised for the
            // exact-AUC property above instead.
            continue;
        }
        let (nr, ns) = scores.iter().fold((0usize, 0usize), |(r, s), &(_, l)| {
            if l == 1 {
                (r + 1, s)
            } else {
                (r, s + 1)
            }
        });
        let tol = 1.0 / (2.0 * nr.min(ns) as f64);
        let (e, _) = eer(&set).unwrap();
        let exhaustive = eer_exhaustive(&set);
        max_eer_gap = max_eer_gap.max((e - exhaustive).abs());
        assert!(
            (e - exhaustive).abs() <= tol,
            "case {case}: eer {e} vs exhaustive {exhaustive}, tol {tol}"
        );

        // Self-consistency: scoring a pool against itself operates at its
        // own equal-error point.
        if case % 4 == 1 {
            let h = hter(&set, &set).unwrap();
            assert!(
                (h - e).abs() <= tol,
                "case {case}: hter(user=dev) {h} vs eer {e}"
            );
        }
    }
    report(
        5,
        "metric oracles",
        format!("200 score sets: AUC exact, max |EER − exhaustive| = {max_eer_gap:.3e}"),
        start,
        30.0,
    );
}

// ---------------------------------------------------------------- criterion 6

#[test]
fn criterion_6_single_domain_disentanglement() {
    let start = Instant::now();
    let family = FamilyConfig::default();
    let rng = Rng::new(1, 0);
    let (train, _) = generate_family(1, 100, &family, &rng).unwrap();
    let mut init_rng = Rng::new(1, 1);
    let model = build_disentangled(&ModelConfig::default(), &mut init_rng).unwrap();

    // Initial loss values on the whole domain, before any training.
    let indices: Vec<usize> = (0..train[0].len()).collect();
    let (x, y, depth) = batch_tensors(&train[0], &indices).unwrap();
    let mut g = Graph::new();
    let xn = g.leaf(x);
    let out = model.forward(&mut g, xn).unwrap();
    let dt = g.leaf(depth);
    let (_, initial) = total_local_loss(&mut g, &out, xn, &y, dt, LossFlags::default()).unwrap();
    assert!(initial.diff > 0.0, "degenerate initial orthogonality loss");

    let mut dc = DataCenter::new(
        0,
        train[0].clone(),
        ClientModel::Disentangled(model),
        Optimizer::new(OptimizerKind::adam(0.002)),
        1,
        8,
        &rng,
        LossFlags::default(),
    )
    .unwrap();
    let history = dc.train_centralized(60).unwrap();
    let last = history.last().unwrap();
    assert!(
        last.diff < 0.1 * initial.diff,
        "loss_diff {} did not fall below 10% of initial {}",
        last.diff,
        initial.diff
    );
    assert!(
        last.cls < LN_2,
        "loss_cls {} is not below ln 2 = {LN_2}",
        last.cls
    );
    report(
        6,
        "disentanglement behavior",
        format!(
            "loss_diff {:.3e} -> {:.3e} ({:.2}% of initial), loss_cls {:.3}",
            initial.diff,
            last.diff,
            100.0 * last.diff / initial.diff,
            last.cls
        ),
        start,
        300.0,
    );
}

// ---------------------------------------------------------------- criteria 7-9

fn experiment(mode: &str, seed: u64, n_domains: usize, rounds: u64, ablate: bool, extra: &str) -> ExperimentConfig {
    let losses = if ablate {
        "[losses]\ndiff = false\nrec = false\ndep = false\n"
    } else {
        ""
    };
    let text = format!(
        r#"
            mode = "{mode}"
            rounds = {rounds}
            seed = {seed}
            {extra}
            {losses}
            [optimizer.adam]
            lr = 0.002
            [data.synthetic]
            n_domains = {n_domains}
            per_domain = 100
        "#
    );
    ExperimentConfig::from_toml_str(&text).unwrap()
}

fn mean_auc(mode: &str, n_domains: usize, rounds: u64, ablate: bool, extra: &str) -> f64 {
    let mut total = 0.0;
    for seed in 1..=5u64 {
        let cfg = experiment(mode, seed, n_domains, rounds, ablate, extra);
        total += harness::run(&cfg).unwrap().report.auc;
    }
    total / 5.0
}

#[test]
fn criterion_7_directional_generalization() {
    let start = Instant::now();
    let fedgpad = mean_auc("fedgpad", 3, 200, false, "");
    let fedpad = mean_auc("fedpad", 3, 200, false, "");
    let ablated = mean_auc("fedgpad", 3, 200, true, "");
    let singles: Vec<f64> = (0..3)
        .map(|d| mean_auc("single", 3, 200, false, &format!("single_train_domain = {d}")))
        .collect();
    let best_single = singles.iter().cloned().fold(f64::MIN, f64::max);

    assert!(
        fedgpad >= fedpad + 0.02,
        "fedgpad {fedgpad:.4} is not >= fedpad {fedpad:.4} + 0.02"
    );
    assert!(
        fedpad >= best_single,
        "fedpad {fedpad:.4} is below best single {best_single:.4}"
    );
    assert!(
        ablated < fedgpad,
        "ablated {ablated:.4} is not below full fedgpad {fedgpad:.4}"
    );
    report(
        7,
        "directional generalization",
        format!(
            "5-seed AUC: fedgpad {fedgpad:.4} >= fedpad {fedpad:.4} + 0.02 >= best single {best_single:.4}; ablated {ablated:.4} < full"
        ),
        start,
        1200.0,
    );
}

#[test]
fn criterion_8_more_data_centers_help() {
    let start = Instant::now();
    let mut detail = String::new();
    for mode in ["fedpad", "fedgpad"] {
        let k2 = mean_auc(mode, 2, 280, false, "");
        let k4 = mean_auc(mode, 4, 280, false, "");
        assert!(
            k4 >= k2,
            "{mode}: K=4 AUC {k4:.4} is below K=2 AUC {k2:.4}"
        );
        detail.push_str(&format!("{mode}: K=4 {k4:.4} >= K=2 {k2:.4}; "));
    }
    report(8, "more data centers", detail, start, 1200.0);
}

#[test]
fn criterion_9_determinism() {
    let start = Instant::now();
    let base = experiment("fedgpad", 3, 3, 6, false, "");
    let mut concurrent = base.clone();
    concurrent.parallel = true;

    let tmp = tempfile::tempdir().unwrap();
    let mut csvs = Vec::new();
    for (i, cfg) in [&base, &base, &concurrent].into_iter().enumerate() {
        let mut cfg = cfg.clone();
        cfg.out_dir = tmp.path().join(format!("run{i}"));
        let record = harness::run(&cfg).unwrap();
        let dir = harness::write_artifacts(&cfg, &record).unwrap();
        csvs.push(std::fs::read(dir.join("summary.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1], "rerun produced a different summary.csv");
    assert_eq!(
        csvs[0], csvs[2],
        "concurrent execution produced a different summary.csv"
    );
    report(
        9,
        "determinism",
        format!("summary.csv byte-identical across rerun and sequential vs concurrent ({} bytes)", csvs[0].len()),
        start,
        300.0,
    );
}
