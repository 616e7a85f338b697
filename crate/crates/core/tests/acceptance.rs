//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs without the libtest harness so the lines are never captured
//! and the timing criterion does not compete with parallel tests.

use std::collections::VecDeque;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use diffgraph_core::certify::{certify, TOLERANCE};
use diffgraph_core::diffusion::{build_schedule, q_sample, q_step, DiffusionConfig, Noise};
use diffgraph_core::encoder::{propagate_relation, propagate_relation_traced, EncoderConfig};
use diffgraph_core::harness::{
    load_dataset, run, run_ablation_on, run_noise_robustness_on, DataSource, Dataset, RunConfig,
    Variant,
};
use diffgraph_core::hetgraph::{
    normalize, HeteroGraph, LabelSet, NodeType, Relation, SyntheticSpec,
};
use diffgraph_core::numerics::{gaussian_like, DenseMatrix, Rng, TwoLayer};
use diffgraph_core::tasks::{
    bpr_loss, ce_loss, class_metrics, rank_metrics, AucValue, RankQuery, TripletBatch,
};

type Check = Result<String, String>;
/// Name, runtime budget in seconds, and the check itself.
type Criterion = (&'static str, u64, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("schedule algebra", 1, schedule_algebra),
        ("forward-process equivalence", 30, forward_equivalence),
        ("gradient certification", 60, gradient_certification),
        ("loss anchors", 1, loss_anchors),
        ("metric oracles", 10, metric_oracles),
        ("encoder invariants", 5, encoder_invariants),
        ("end-to-end learning", 300, end_to_end_learning),
        ("noise-robustness harness", 600, noise_robustness),
        ("determinism and scaling", 300, determinism_and_scaling),
    ];
    let mut failed = 0;
    for (k, (name, budget, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome =
            catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > Duration::from_secs(budget) => {
                Err(format!("{detail}; exceeded the {budget} s budget"))
            }
            other => other,
        };
        let (verdict, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        failed += usize::from(outcome.is_err());
        println!(
            "criterion {} ({name}): {verdict} [{:.2} s] {detail}",
            k + 1,
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} of 9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn schedule_algebra() -> Check {
    let mut rng = Rng::new(1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let steps = 1 + rng.below(250);
        let b_max = 0.5 + 0.4999 * rng.uniform();
        let b_min = b_max * (0.01 + 0.98 * rng.uniform());
        let cfg = DiffusionConfig {
            steps,
            b_max,
            b_min,
            inference_steps: 1,
            ..DiffusionConfig::default()
        };
        let s = build_schedule(&cfg).map_err(|e| e.to_string())?;
        for t in 1..=steps {
            // Independent linspace oracle for b_t.
            let b_t = if steps == 1 {
                b_max
            } else {
                b_max + (t - 1) as f64 * (b_min - b_max) / (steps - 1) as f64
            };
            worst = worst.max((s.alpha_bar(t) - b_t).abs());
            let beta = s.beta(t);
            ensure(beta > 0.0 && beta < 1.0, || {
                format!("beta_{t} = {beta} for T={steps}")
            })?;
            ensure(s.alpha_bar(t) < s.alpha_bar(t - 1), || {
                format!("alpha-bar not decreasing at t={t}")
            })?;
        }
    }
    ensure(worst <= 1e-12, || {
        format!("max |alpha-bar - b| = {worst:e}")
    })?;
    Ok(format!(
        "100 schedules, max |alpha-bar_t - b_t| = {worst:.1e}"
    ))
}

fn forward_equivalence() -> Check {
    let (d, trials) = (8, 10_000);
    let cfg = DiffusionConfig {
        steps: 10,
        b_max: 0.95,
        b_min: 0.5,
        inference_steps: 1,
        ..DiffusionConfig::default()
    };
    let s = build_schedule(&cfg).map_err(|e| e.to_string())?;
    let mut rng = Rng::new(2);
    let h0_row = gaussian_like(&mut rng, 1, d).unwrap();
    let h0 = DenseMatrix::from_fn(trials, d, |_, c| h0_row[(0, c)]);
    let mut details = Vec::new();
    for t in [2, 3, 5] {
        let mut rec = h0.clone();
        for step in 1..=t {
            rec = q_step(&rec, step, &s, Noise::Sample(&mut rng)).map_err(|e| e.to_string())?;
        }
        let closed = q_sample(&h0, t, &s, Noise::Sample(&mut rng)).map_err(|e| e.to_string())?;
        // Residuals around the shared mean sqrt(alpha-bar_t)·h0, pooled over
        // the d independent, equal-variance coordinates.
        let keep = s.alpha_bar(t).sqrt();
        let stats = |x: &DenseMatrix| {
            let r: Vec<f64> = (0..trials * d)
                .map(|i| x.as_slice()[i] - keep * h0.as_slice()[i])
                .collect();
            let n = r.len() as f64;
            let mean = r.iter().sum::<f64>() / n;
            let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (mean, var, n)
        };
        let ((m1, v1, n), (m2, v2, _)) = (stats(&rec), stats(&closed));
        let mean_sigma = (v1 / n + v2 / n).sqrt();
        let var_sigma = (2.0 * v1 * v1 / (n - 1.0) + 2.0 * v2 * v2 / (n - 1.0)).sqrt();
        let (zm, zv) = ((m1 - m2).abs() / mean_sigma, (v1 - v2).abs() / var_sigma);
        ensure(zm <= 3.0, || {
            format!("t={t}: means differ by {zm:.2} sigma")
        })?;
        ensure(zv <= 3.0, || {
            format!("t={t}: variances differ by {zv:.2} sigma")
        })?;
        details.push(format!(
            "t={t} z_mean={zm:.2} z_var={zv:.2} var={v2:.4} (1-abar={:.4})",
            1.0 - s.alpha_bar(t)
        ));
    }
    Ok(details.join(", "))
}

fn gradient_certification() -> Check {
    let results = certify(2024, 10).map_err(|e| e.to_string())?;
    let worst = results.iter().map(|r| r.worst).fold(0.0, f64::max);
    for r in &results {
        ensure(r.passed(), || {
            format!("{}: error {:.2e} > {TOLERANCE:e}", r.name, r.worst)
        })?;
    }
    let names: Vec<&str> = results.iter().map(|r| r.name).collect();
    Ok(format!(
        "{} probes x 10 points, worst error {worst:.2e} ({})",
        results.len(),
        names.join(", ")
    ))
}

fn loss_anchors() -> Check {
    let ln2 = std::f64::consts::LN_2;
    let batch = TripletBatch::new(vec![(0, 3, 4), (1, 4, 5), (2, 5, 3)]);
    let zeros = bpr_loss(&DenseMatrix::zeros(6, 4), &batch)
        .map_err(|e| e.to_string())?
        .loss;
    ensure((zeros - ln2).abs() <= 1e-9, || {
        format!("BPR at zero scores = {zeros}")
    })?;
    // Equal but nonzero scores: positive and negative rows coincide.
    let mut rng = Rng::new(4);
    let mut e = gaussian_like(&mut rng, 6, 4).unwrap();
    for c in 0..4 {
        e[(4, c)] = e[(3, c)];
        e[(5, c)] = e[(3, c)];
    }
    let equal = bpr_loss(&e, &batch).map_err(|e| e.to_string())?.loss;
    ensure((equal - ln2).abs() <= 1e-9, || {
        format!("BPR at equal scores = {equal}")
    })?;

    for classes in 2..=6 {
        let emb = gaussian_like(&mut rng, 7, 4).unwrap();
        let labels = LabelSet::new(0, (0..7).map(|v| (v, v % classes)).collect(), classes).unwrap();
        let loss = ce_loss(&emb, &TwoLayer::zeros(4, 5, classes), &labels)
            .map_err(|e| e.to_string())?
            .loss;
        let want = (classes as f64).ln();
        ensure((loss - want).abs() <= 1e-9, || {
            format!("CE with {classes} classes = {loss}, want {want}")
        })?;
    }

    let two = |b_max: f64, b_min: f64| {
        build_schedule(&DiffusionConfig {
            steps: 2,
            b_max,
            b_min,
            inference_steps: 1,
            ..DiffusionConfig::default()
        })
        .unwrap()
        .loss_weight(2)
    };
    // 0.99 and 0.98 are not binary fractions; the computed weight is the
    // exact value for the nearest doubles, a few ulps from 25.
    let w = two(0.99, 0.98);
    ensure((w - 25.0).abs() <= 1e-12, || {
        format!("weight(2) for (0.99, 0.98) = {w}")
    })?;
    // With dyadic endpoints every operation is exact: SNR 3 and 1.
    let exact = two(0.75, 0.5);
    ensure(exact == 1.0, || {
        format!("weight(2) for (0.75, 0.5) = {exact}, want exactly 1")
    })?;
    Ok(format!("BPR {zeros:.12}, CE ln C for C=2..6, weight(2) = {w} (|w-25| = {:.1e}), dyadic weight exact", (w - 25.0).abs()))
}

/// Position of `truth` after sorting unmasked candidates by score
/// descending, then id ascending.
fn oracle_rank(scores: &[f64], excluded: &[usize], truth: usize) -> usize {
    let mut cands: Vec<usize> = (0..scores.len())
        .filter(|j| !excluded.contains(j))
        .collect();
    cands.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    cands.iter().position(|&j| j == truth).unwrap() + 1
}

fn oracle_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let (mut wins, mut pairs) = (0.0, 0usize);
    for (i, &pi) in positive.iter().enumerate() {
        for (j, &pj) in positive.iter().enumerate() {
            if pi && !pj {
                pairs += 1;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    (pairs > 0).then(|| wins / pairs as f64)
}

fn metric_oracles() -> Check {
    let mut rng = Rng::new(5);
    let mut rank_cases = 0;
    for users in 1..=5 {
        for items in 2..=10 {
            for _ in 0..40 {
                // Small integer scores force ties.
                let queries: Vec<RankQuery> = (0..users)
                    .map(|_| {
                        let scores: Vec<f64> = (0..items).map(|_| rng.below(4) as f64).collect();
                        let truth = rng.below(items);
                        let excluded = (0..items)
                            .filter(|&j| j != truth && rng.bernoulli(0.3))
                            .collect();
                        RankQuery {
                            scores,
                            excluded,
                            truth,
                        }
                    })
                    .collect();
                for k in 1..=items {
                    let got = rank_metrics(&queries, k).map_err(|e| e.to_string())?;
                    let ranks: Vec<usize> = queries
                        .iter()
                        .map(|q| oracle_rank(&q.scores, &q.excluded, q.truth))
                        .collect();
                    let n = users as f64;
                    let recall = ranks
                        .iter()
                        .map(|&r| if r <= k { 1.0 } else { 0.0 })
                        .sum::<f64>()
                        / n;
                    let ndcg = ranks
                        .iter()
                        .map(|&r| {
                            if r <= k {
                                1.0 / ((r + 1) as f64).log2()
                            } else {
                                0.0
                            }
                        })
                        .sum::<f64>()
                        / n;
                    ensure(got.recall == recall && got.ndcg == ndcg, || {
                        format!(
                            "{users}x{items} K={k}: got ({}, {}), oracle ({recall}, {ndcg})",
                            got.recall, got.ndcg
                        )
                    })?;
                    rank_cases += 1;
                }
            }
        }
    }

    let mut class_cases = 0;
    for n in 1..=20 {
        for classes in 2..=4 {
            for _ in 0..40 {
                let scores = DenseMatrix::from_fn(n, classes, |_, _| rng.below(3) as f64);
                let labels: Vec<usize> = (0..n).map(|_| rng.below(classes)).collect();
                let got = class_metrics(&scores, &labels).map_err(|e| e.to_string())?;
                let predicted: Vec<usize> = (0..n)
                    .map(|r| {
                        let row = scores.row(r);
                        (0..classes).fold(0, |best, c| if row[c] > row[best] { c } else { best })
                    })
                    .collect();
                let mut f1s = Vec::new();
                let (mut tp_all, mut fp_all, mut fn_all) = (0, 0, 0);
                for c in 0..classes {
                    let tp = (0..n)
                        .filter(|&i| predicted[i] == c && labels[i] == c)
                        .count();
                    let fp = (0..n)
                        .filter(|&i| predicted[i] == c && labels[i] != c)
                        .count();
                    let fnn = (0..n)
                        .filter(|&i| predicted[i] != c && labels[i] == c)
                        .count();
                    (tp_all, fp_all, fn_all) = (tp_all + tp, fp_all + fp, fn_all + fnn);
                    if tp + fp + fnn > 0 {
                        f1s.push(2.0 * tp as f64 / (2 * tp + fp + fnn) as f64);
                    }
                }
                let micro = 2.0 * tp_all as f64 / (2 * tp_all + fp_all + fn_all) as f64;
                let macro_f1 = f1s.iter().sum::<f64>() / f1s.len() as f64;
                let present: Vec<usize> = (0..classes).filter(|c| labels.contains(c)).collect();
                let auc = if present.len() < 2 {
                    None
                } else if classes == 2 {
                    let col: Vec<f64> = (0..n).map(|r| scores[(r, 1)]).collect();
                    oracle_auc(&col, &labels.iter().map(|&y| y == 1).collect::<Vec<_>>())
                } else {
                    let per: Vec<f64> = present
                        .iter()
                        .map(|&c| {
                            let col: Vec<f64> = (0..n).map(|r| scores[(r, c)]).collect();
                            oracle_auc(&col, &labels.iter().map(|&y| y == c).collect::<Vec<_>>())
                                .unwrap()
                        })
                        .collect();
                    Some(per.iter().sum::<f64>() / per.len() as f64)
                };
                let got_auc = match got.auc {
                    AucValue::Value(v) => Some(v),
                    AucValue::Undefined => None,
                };
                ensure(
                    got.micro_f1 == micro && got.macro_f1 == macro_f1 && got_auc == auc,
                    || {
                        format!(
                            "n={n} C={classes}: got {got:?}, oracle ({micro}, {macro_f1}, {auc:?})"
                        )
                    },
                )?;
                class_cases += 1;
            }
        }
    }
    Ok(format!(
        "{rank_cases} ranking instances, {class_cases} classification instances, all exact"
    ))
}

fn random_graph(n: usize, perm: Option<&[usize]>, edges: &[(usize, usize)]) -> HeteroGraph {
    let map = |v: usize| perm.map_or(v, |p| p[v]);
    HeteroGraph::new(
        vec![NodeType {
            name: "n".into(),
            count: n,
        }],
        vec![Relation::new(
            "r",
            0,
            0,
            edges.iter().map(|&(a, b)| (map(a), map(b))).collect(),
            None,
        )
        .unwrap()],
        "r",
    )
    .unwrap()
}

fn hop_distances(n: usize, edges: &[(usize, usize)], from: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; n];
    dist[from] = Some(0);
    let mut queue = VecDeque::from([from]);
    while let Some(v) = queue.pop_front() {
        for &(a, b) in edges {
            for (x, y) in [(a, b), (b, a)] {
                if x == v && dist[y].is_none() {
                    dist[y] = Some(dist[v].unwrap() + 1);
                    queue.push_back(y);
                }
            }
        }
    }
    dist
}

fn encoder_invariants() -> Check {
    let n = 10;
    let mut rng = Rng::new(6);
    let (mut checked_rows, mut far_rows) = (0, 0);
    for graph in 0..20 {
        let edges: Vec<(usize, usize)> = (0..n)
            .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
            .filter(|_| rng.bernoulli(0.2))
            .collect();
        let cfg = EncoderConfig {
            layers: 1 + rng.below(3),
            dim: 4,
            ..EncoderConfig::default()
        };
        let g = random_graph(n, None, &edges);
        let adj = normalize(&g, "r").unwrap();
        let e0 = gaussian_like(&mut rng, n, cfg.dim).unwrap();
        let (out, trace) = propagate_relation_traced(&adj, &e0, &cfg).map_err(|e| e.to_string())?;

        for (l, layer) in trace.layers().iter().enumerate() {
            for r in 0..n {
                let norm = layer.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    ensure((norm - 1.0).abs() <= 1e-9, || {
                        format!("graph {graph} layer {} row {r}: norm {norm}", l + 1)
                    })?;
                    checked_rows += 1;
                }
            }
        }

        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let gp = random_graph(n, Some(&perm), &edges);
        let mut e0p = DenseMatrix::zeros(n, cfg.dim);
        for (v, &pv) in perm.iter().enumerate() {
            e0p.row_mut(pv).copy_from_slice(e0.row(v));
        }
        let outp = propagate_relation(&normalize(&gp, "r").unwrap(), &e0p, &cfg)
            .map_err(|e| e.to_string())?;
        for (v, &pv) in perm.iter().enumerate() {
            let diff = out
                .row(v)
                .iter()
                .zip(outp.row(pv))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            ensure(diff <= 1e-12, || {
                format!("graph {graph}: permutation changes node {v} by {diff:e}")
            })?;
        }

        let v = rng.below(n);
        let mut e0v = e0.clone();
        e0v.row_mut(v)
            .copy_from_slice(gaussian_like(&mut rng, 1, cfg.dim).unwrap().row(0));
        let outv = propagate_relation(&adj, &e0v, &cfg).map_err(|e| e.to_string())?;
        for (u, dist) in hop_distances(n, &edges, v).into_iter().enumerate() {
            if dist.is_none_or(|d| d > cfg.layers) {
                ensure(out.row(u) == outv.row(u), || {
                    format!(
                        "graph {graph}: node {u} beyond {} hops of {v} changed",
                        cfg.layers
                    )
                })?;
                far_rows += 1;
            }
        }
    }
    Ok(format!("20 graphs: {checked_rows} unit-norm rows, permutation equivariant, {far_rows} out-of-range rows untouched"))
}

/// Shared by criteria 7 and 8: the seeded default synthetic dataset with
/// learning rate and noise scale taken from the tuning grids.
fn acceptance_config(seed: u64, variant: Variant) -> RunConfig {
    RunConfig {
        seed,
        variant,
        lr: 1e-2,
        epochs: 30,
        data: DataSource::Synthetic(SyntheticSpec::default()),
        diffusion: DiffusionConfig {
            per_row_t: true,
            ..DiffusionConfig::from_noise_scale(1e-3, 100, 5)
        },
        ..RunConfig::default()
    }
}

fn end_to_end_learning() -> Check {
    let ds = load_dataset(&acceptance_config(0, Variant::Full)).map_err(|e| e.to_string())?;
    let (mut full, mut hidden) = (Vec::new(), Vec::new());
    for seed in 0..5 {
        let (_, r) =
            run(&acceptance_config(seed, Variant::Full), &ds).map_err(|e| e.to_string())?;
        let (first, last) = (r.loss_trace[0].total, r.loss_trace[29].total);
        ensure(r.loss_trace.len() == 30 && last < first, || {
            format!("seed {seed}: joint loss {first} -> {last}")
        })?;
        full.push(r.metric("recall@20").unwrap());
        let (_, h) =
            run(&acceptance_config(seed, Variant::NoAuxiliary), &ds).map_err(|e| e.to_string())?;
        hidden.push(h.metric("recall@20").unwrap());
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mf, mh) = (mean(&full), mean(&hidden));
    ensure(mf >= mh, || {
        format!("mean Recall@20 full {mf:.4} < -H {mh:.4}")
    })?;
    Ok(format!("joint loss falls on all 5 seeds; mean Recall@20 full {mf:.4} >= -H {mh:.4} (full {full:?}, -H {hidden:?})"))
}

fn noise_robustness() -> Check {
    let ratios = [0.0, 0.1, 0.3, 0.5];
    let ds: Dataset =
        load_dataset(&acceptance_config(0, Variant::Full)).map_err(|e| e.to_string())?;
    let mut means = Vec::new();
    for variant in [Variant::Full, Variant::NoDiffusion] {
        let (mut total, mut recall, mut ndcg) = (0.0, 0.0, 0.0);
        for seed in 0..5 {
            let table = run_noise_robustness_on(&acceptance_config(seed, variant), &ds, &ratios)
                .map_err(|e| e.to_string())?;
            for row in &table.rows {
                ensure(row.retention[0] == [Some(100.0), Some(100.0)], || {
                    format!(
                        "{variant} seed {seed} {}: ratio-0 retention {:?}",
                        row.relation, row.retention[0]
                    )
                })?;
                ensure(row.retention.len() == ratios.len(), || {
                    "missing ratio column".into()
                })?;
            }
            let text = table.render();
            let lines: Vec<&str> = text.lines().collect();
            ensure(lines.len() == 2 + table.rows.len(), || {
                format!("table has {} lines", lines.len())
            })?;
            ensure(
                lines.iter().all(|l| l.matches('|').count() == ratios.len()),
                || "ragged table".into(),
            )?;
            ensure(
                table
                    .rows
                    .iter()
                    .zip(&lines[2..])
                    .all(|(r, l)| l.starts_with(&r.relation)),
                || "row order".into(),
            )?;
            if seed == 0 {
                println!("retention table, {variant}, seed 0:\n{text}");
            }
            total += table.mean_retention(0.3).ok_or("undefined retention")? / 5.0;
            recall += table
                .metric_retention(0.3, 0)
                .ok_or("undefined retention")?
                / 5.0;
            ndcg += table
                .metric_retention(0.3, 1)
                .ok_or("undefined retention")?
                / 5.0;
        }
        means.push((variant, total, recall, ndcg));
    }
    let detail = means
        .iter()
        .map(|(v, t, r, n)| format!("{v}: {t:.2}% (recall {r:.2}%, ndcg {n:.2}%)"))
        .collect::<Vec<_>>()
        .join("; ");
    ensure(means[0].1 >= means[1].1, || {
        format!("mean retention at 30% noise: {detail}")
    })?;
    Ok(format!(
        "ratio 0 retains exactly 100%; mean retention at 30% noise {detail}"
    ))
}

fn determinism_and_scaling() -> Check {
    let small = RunConfig {
        seed: 3,
        epochs: 4,
        lr: 1e-2,
        data: DataSource::Synthetic(SyntheticSpec {
            n_users: 60,
            n_items: 40,
            density: 0.1,
            ..SyntheticSpec::default()
        }),
        ..RunConfig::default()
    };
    let ds = load_dataset(&small).map_err(|e| e.to_string())?;
    let (p1, r1) = run(&small, &ds).map_err(|e| e.to_string())?;
    let (p2, r2) = run(&small, &ds).map_err(|e| e.to_string())?;
    ensure(p1 == p2, || {
        "parameters differ between identical runs".into()
    })?;
    let (j1, j2) = (
        r1.without_timing().to_json().unwrap(),
        r2.without_timing().to_json().unwrap(),
    );
    ensure(j1 == j2, || "reports differ between identical runs".into())?;
    let a1 = run_ablation_on(&small, &ds).map_err(|e| e.to_string())?;
    let a2 = run_ablation_on(&small, &ds).map_err(|e| e.to_string())?;
    let strip = |a: &diffgraph_core::harness::AblationResult| {
        a.reports
            .iter()
            .map(|r| r.without_timing().to_json().unwrap())
            .collect::<Vec<_>>()
    };
    ensure(strip(&a1) == strip(&a2), || {
        "threaded ablation runs differ".into()
    })?;

    let scaled = |density: f64| RunConfig {
        epochs: 5,
        data: DataSource::Synthetic(SyntheticSpec {
            n_users: 2000,
            n_items: 1000,
            density,
            ..SyntheticSpec::default()
        }),
        ..RunConfig::default()
    };
    let edges = |cfg: &RunConfig| -> Result<usize, String> {
        Ok(load_dataset(cfg)
            .map_err(|e| e.to_string())?
            .graph
            .relations()
            .iter()
            .map(|r| r.len())
            .sum())
    };
    let (base, doubled) = (scaled(0.004), scaled(0.008));
    let (e1, e2) = (edges(&base)?, edges(&doubled)?);
    let edge_ratio = e2 as f64 / e1 as f64;
    ensure((1.8..=2.2).contains(&edge_ratio), || {
        format!("edge counts {e1} -> {e2} are not doubled")
    })?;
    // Median epoch time per run, best of three alternating repetitions.
    let median = |cfg: &RunConfig| -> Result<f64, String> {
        let (_, r) = diffgraph_core::harness::train(cfg).map_err(|e| e.to_string())?;
        let mut t = r.timing.epoch_seconds.clone();
        t.sort_by(f64::total_cmp);
        Ok(t[t.len() / 2])
    };
    let (mut t1, mut t2) = (f64::INFINITY, f64::INFINITY);
    for _ in 0..3 {
        t1 = t1.min(median(&base)?);
        t2 = t2.min(median(&doubled)?);
    }
    let ratio = t2 / t1;
    ensure(ratio <= 2.5, || {
        format!("epoch time {t1:.4} s -> {t2:.4} s, ratio {ratio:.2} > 2.5")
    })?;
    Ok(format!(
        "identical runs and threaded ablations bit-identical; edges {e1} -> {e2}, epoch {:.1} ms -> {:.1} ms (x{ratio:.2})",
        t1 * 1e3,
        t2 * 1e3
    ))
}
