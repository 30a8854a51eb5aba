//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use ndarray::Array2;
use serinv_core::adapter::{
    adapt_store, batch_centroids, forward_batch, init_adapter, load_checkpoint, loss_and_grads, normalize_rows,
    save_checkpoint, train, vicreg_loss, vicreg_loss_with_centroids, AdapterConfig, AdapterError, AdapterParams,
    Checkpoint, Mode, OptimizerState,
};
use serinv_core::encoder::{encode_corpus, ToyEncoder, ToyEncoderConfig};
use serinv_core::eval::{
    bh_fdr_adjust, evaluate_run, rank_documents, variation_stats, wilcoxon_signed_rank, EvalOptions, MetricsReport,
};
use serinv_core::format::{FormatId, RENDERABLE};
use serinv_core::geometry::{semantic_recovery_check, verify_centroid_optimality};
use serinv_core::rng::SplitMix64;
use serinv_core::serialize::{serialize, serialize_all};
use serinv_core::store::{export_store, import_store, EmbeddingStore, StoreBuilder, StoreError, StoreMetadata};
use serinv_core::table::{derive_queries, gen_synthetic_corpus, SyntheticSpec, Table};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn within(elapsed: Duration, limit: Duration) -> Outcome {
    ensure!(elapsed < limit, "took {elapsed:.2?}, limit {limit:?}");
    Ok(format!("{elapsed:.2?}"))
}

fn rand_vec(d: usize, rng: &mut SplitMix64, scale: f64) -> Vec<f64> {
    (0..d).map(|_| rng.uniform(-scale, scale)).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    v.iter().map(|x| x / n).collect()
}

fn centroid_optimality() -> Outcome {
    let t0 = Instant::now();
    let mut rng = SplitMix64::new(1);
    let mut worst = f64::INFINITY;
    for set in 0..200 {
        let n = 2 + rng.below_usize(19);
        let d = 2 + rng.below_usize(63);
        let views: Vec<Vec<f64>> = (0..n).map(|_| rand_vec(d, &mut rng, 1.0)).collect();
        let cands: Vec<Vec<f64>> = (0..100).map(|_| rand_vec(d, &mut rng, 1.5)).collect();
        let r = verify_centroid_optimality(&views, &cands).map_err(|e| e.to_string())?;
        ensure!(r.success, "view set {set}: a candidate beat the centroid");
        for j in &r.candidate_objectives {
            worst = worst.min(j - r.centroid_objective);
        }
    }
    ensure!(worst >= -1e-9, "smallest gap {worst:e}");
    let t = within(t0.elapsed(), Duration::from_secs(5))?;
    Ok(format!("20000 candidates, smallest J gap {worst:.3e}, {t}"))
}

fn semantic_recovery() -> Outcome {
    let t0 = Instant::now();
    let mut rng = SplitMix64::new(2);
    let mut max_err = 0.0f64;
    for _ in 0..500 {
        let n = 2 + rng.below_usize(19);
        let d = 2 + rng.below_usize(63);
        let mu = rand_vec(d, &mut rng, 1.0);
        let mut deltas: Vec<Vec<f64>> = (0..n).map(|_| rand_vec(d, &mut rng, 0.5)).collect();
        let mean_delta: Vec<f64> = (0..d)
            .map(|j| deltas.iter().map(|v| v[j]).sum::<f64>() / n as f64)
            .collect();
        let got = semantic_recovery_check(&mu, &deltas).map_err(|e| e.to_string())?;
        max_err = max_err.max((got - norm(&mean_delta)).abs());

        // centred deltas: the last one cancels the rest exactly
        for v in deltas.iter_mut() {
            v.iter_mut().for_each(|x| *x = (*x * 8.0).round() / 8.0);
        }
        let last: Vec<f64> = (0..d)
            .map(|j| -deltas[..n - 1].iter().map(|v| v[j]).sum::<f64>())
            .collect();
        deltas[n - 1] = last;
        let mu_dyadic: Vec<f64> = mu.iter().map(|x| (x * 8.0).round() / 8.0).collect();
        let zero = semantic_recovery_check(&mu_dyadic, &deltas).map_err(|e| e.to_string())?;
        ensure!(zero == 0.0, "centred deltas gave {zero:e}");
    }
    ensure!(max_err <= 1e-10, "max error {max_err:e}");
    let t = within(t0.elapsed(), Duration::from_secs(1))?;
    Ok(format!(
        "500 sets, max error {max_err:.1e}, centred sets exact zero, {t}"
    ))
}

fn frozen_loss(
    p: &AdapterParams,
    x: &Array2<f64>,
    labels: &[usize],
    c: &Array2<f64>,
    seed: u64,
    cfg: &AdapterConfig,
) -> f64 {
    let cache = forward_batch(p, x.view(), Mode::Train { dropout_seed: seed }).unwrap();
    let (z, _) = normalize_rows(cache.y.view()).unwrap();
    let (e, _) = normalize_rows(x.view()).unwrap();
    vicreg_loss_with_centroids(z.view(), e.view(), labels, c.view(), cfg)
        .unwrap()
        .breakdown
        .total
}

fn gradient_check() -> Outcome {
    let t0 = Instant::now();
    let mut rng = SplitMix64::new(3);
    let h = 1e-5;
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    for instance in 0..50u64 {
        let d = 4 + rng.below_usize(5);
        let r = 2 + rng.below_usize(3);
        let cfg = AdapterConfig {
            dimension: d,
            bottleneck: r,
            alpha: rng.uniform(0.01, 0.05),
            ..Default::default()
        };
        let mut p = init_adapter(&cfg).map_err(|e| e.to_string())?;
        for s in p.weights.slices_mut() {
            s.iter_mut().for_each(|v| *v = rng.uniform(-0.8, 0.8));
        }
        p.weights.ln_gain.mapv_inplace(|g| 1.0 + 0.5 * g);

        // three tables with 2-3 views each; dims 0 and 1 barely move so the
        // variance floor binds there
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for table in 0..3 {
            for _ in 0..2 + rng.below_usize(2) {
                let mut v: Vec<f64> = (0..d).map(|_| rng.uniform(-1.0, 1.0)).collect();
                v[0] = 2.0 + rng.uniform(-0.01, 0.01);
                v[1] = -2.0 + rng.uniform(-0.01, 0.01);
                rows.extend(v);
                labels.push(table);
            }
        }
        let x = Array2::from_shape_vec((labels.len(), d), rows).unwrap();
        let cache = forward_batch(&p, x.view(), Mode::Train { dropout_seed: instance }).map_err(|e| e.to_string())?;
        let (loss, grads) = loss_and_grads(&p, &cache, x.view(), &labels, &cfg).map_err(|e| e.to_string())?;
        ensure!(
            loss.inv > 0.0 && loss.var > 0.0 && loss.cov > 0.0 && loss.id > 0.0,
            "instance {instance}: inactive term in {loss:?}"
        );
        let (z, _) = normalize_rows(cache.y.view()).unwrap();
        let c = batch_centroids(z.view(), &labels);
        let analytic: Vec<Vec<f64>> = grads.slices().iter().map(|s| s.to_vec()).collect();
        for (slot, a_slot) in analytic.iter().enumerate() {
            for (k, &a) in a_slot.iter().enumerate() {
                let mut plus = p.clone();
                plus.weights.slices_mut()[slot][k] += h;
                let mut minus = p.clone();
                minus.weights.slices_mut()[slot][k] -= h;
                let fd = (frozen_loss(&plus, &x, &labels, &c, instance, &cfg)
                    - frozen_loss(&minus, &x, &labels, &c, instance, &cfg))
                    / (2.0 * h);
                let scale = a.abs().max(fd.abs());
                ensure!(
                    (a - fd).abs() <= 1e-4 * scale + 1e-7,
                    "instance {instance} tensor {slot} entry {k}: analytic {a} fd {fd}"
                );
                if scale > 1e-3 {
                    worst = worst.max((a - fd).abs() / scale);
                }
                checked += 1;
            }
        }
    }
    let t = within(t0.elapsed(), Duration::from_secs(60))?;
    Ok(format!("{checked} partials, worst relative error {worst:.1e}, {t}"))
}

fn loss_goldens() -> Outcome {
    let cfg = AdapterConfig {
        dimension: 2,
        bottleneck: 1,
        ..Default::default()
    };
    let run = |z: &[f64], labels: &[usize]| {
        let m = Array2::from_shape_vec((labels.len(), 2), z.to_vec()).unwrap();
        vicreg_loss(m.view(), m.view(), labels, &cfg).unwrap()
    };
    let inv = run(&[1.0, 0.0, 0.0, 1.0], &[0, 0]).inv;
    let var = run(&[0.6, 0.8, 0.6, 0.8, 0.6, 0.8], &[0, 1, 2]).var;
    let cov = run(&[1.0, 1.0, -1.0, -1.0], &[0, 1]).cov;
    let id = run(&[0.6, 0.8, -0.8, 0.6], &[0, 1]).id;
    for (name, got, want) in [
        ("inv", inv, 0.5),
        ("var", var, 0.0016),
        ("cov", cov, 4.0),
        ("id", id, 0.0),
    ] {
        ensure!((got - want).abs() <= 1e-9, "L_{name} = {got}, expected {want}");
    }
    Ok(format!("inv {inv}, var {var}, cov {cov}, id {id}"))
}

fn serializer_goldens() -> Outcome {
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let t = Table::new("ref", s(&["c1", "c2"]), vec![s(&["a", "b"]), s(&["c", "d"])]).map_err(|e| e.to_string())?;
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/ref_2x2");
    let views = serialize_all(&t, 2).map_err(|e| e.to_string())?;
    ensure!(views.len() == 17, "{} views", views.len());
    for (view, f) in views.iter().zip(RENDERABLE) {
        let want = std::fs::read_to_string(dir.join(format!("{}.txt", f.as_str()))).map_err(|e| e.to_string())?;
        ensure!(
            view.format == f && view.text == want,
            "{f} differs from its golden file"
        );
    }
    let quoted = [
        (FormatId::Pipe, "c1 | c2 | a | b | c | d"),
        (FormatId::Tsv, "c1\tc2\na\tb\nc\td"),
        (
            FormatId::Ddl,
            "CREATE TABLE Table (c1 TEXT, c2 TEXT); INSERT INTO Table VALUES ('a','b'); INSERT INTO Table VALUES ('c','d');",
        ),
        (
            FormatId::Token,
            "<Header, 0, 0> c1 <Header, 0, 1> c2 <CellValue, 1, 0> a <CellValue, 1, 1> b <CellValue, 2, 0> c <CellValue, 2, 1> d",
        ),
    ];
    for (f, want) in quoted {
        let got = serialize(&t, f, 2).map_err(|e| e.to_string())?.text;
        ensure!(got == want, "{f}: got {got:?}");
    }
    Ok("17 golden files and 4 quoted templates byte-exact".into())
}

fn published_variation() -> Outcome {
    let r1 = [
        0.25, 0.17, 0.24, 0.24, 0.25, 0.09, 0.22, 0.15, 0.15, 0.14, 0.10, 0.18, 0.17, 0.20, 0.14, 0.10, 0.14,
    ];
    let v = variation_stats(&r1).map_err(|e| e.to_string())?;
    ensure!(v.min == 0.09 && v.max == 0.25, "min {} max {}", v.min, v.max);
    ensure!((v.range - 0.16).abs() < 1e-12, "range {}", v.range);
    ensure!((v.std - 0.052).abs() <= 0.002, "std {}", v.std);
    Ok(format!(
        "min {} max {} range {:.2} std {:.4}",
        v.min, v.max, v.range, v.std
    ))
}

struct Pilot {
    base: MetricsReport,
    adapted: MetricsReport,
    base_mixed: MetricsReport,
    adapted_mixed: MetricsReport,
    base_store: EmbeddingStore,
    adapted_store: EmbeddingStore,
    gamma: f64,
    elapsed: Duration,
}

fn pilot() -> &'static Pilot {
    static PILOT: OnceLock<Pilot> = OnceLock::new();
    PILOT.get_or_init(|| {
        let t0 = Instant::now();
        let corpus = gen_synthetic_corpus(&SyntheticSpec {
            n_tables: 200,
            rows: (3, 8),
            cols: (2, 5),
            vocab_size: 500,
            seed: 7,
        })
        .unwrap();
        let queries = derive_queries(&corpus, 2, 11).unwrap();
        let enc_cfg = ToyEncoderConfig::default();
        let enc = ToyEncoder::new(enc_cfg.clone()).unwrap();
        let qv: Vec<Vec<f64>> = queries.iter().map(|q| enc.encode(&q.text).unwrap()).collect();
        let base_store = encode_corpus(&corpus, &RENDERABLE, 7, &enc_cfg).unwrap();
        let mixed_store = encode_corpus(&corpus, &[FormatId::Mixed], 7, &enc_cfg).unwrap();

        let cfg = AdapterConfig {
            dimension: enc_cfg.dimension,
            steps: 2000,
            batch_size: 64,
            ..Default::default()
        };
        let outcome = train(&base_store, &cfg).unwrap();
        let adapted_store = adapt_store(&outcome.params, &base_store).unwrap();
        let adapted_mixed_store = adapt_store(&outcome.params, &mixed_store).unwrap();

        let formats: Vec<String> = RENDERABLE.iter().map(|f| f.as_str().to_string()).collect();
        let mixed = vec![FormatId::Mixed.as_str().to_string()];
        let opts = EvalOptions::default();
        let base = evaluate_run(&queries, &qv, &base_store, &formats, &opts, None).unwrap();
        let adapted = evaluate_run(&queries, &qv, &adapted_store, &formats, &opts, Some(&base)).unwrap();
        let base_mixed = evaluate_run(&queries, &qv, &mixed_store, &mixed, &opts, None).unwrap();
        let adapted_mixed =
            evaluate_run(&queries, &qv, &adapted_mixed_store, &mixed, &opts, Some(&base_mixed)).unwrap();
        Pilot {
            base,
            adapted,
            base_mixed,
            adapted_mixed,
            base_store,
            adapted_store,
            gamma: cfg.gamma,
            elapsed: t0.elapsed(),
        }
    })
}

/// Per table: the mean of its L2-normalized views and every view's distance to it.
fn spread(store: &EmbeddingStore) -> (Vec<Vec<f64>>, f64) {
    let mut cents = Vec::new();
    let mut total = 0.0;
    let mut count = 0usize;
    for views in store.views_by_table().values() {
        let z: Vec<Vec<f64>> = views.iter().map(|(_, v)| unit(v)).collect();
        let d = z[0].len();
        let c: Vec<f64> = (0..d)
            .map(|j| z.iter().map(|v| v[j]).sum::<f64>() / z.len() as f64)
            .collect();
        total += z.iter().map(|v| dist(v, &c)).sum::<f64>();
        count += z.len();
        cents.push(c);
    }
    (cents, total / count as f64)
}

fn min_pairwise(cents: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..cents.len() {
        for j in i + 1..cents.len() {
            best = best.min(dist(&cents[i], &cents[j]));
        }
    }
    best
}

fn recall1(r: &MetricsReport, f: &str) -> f64 {
    r.format(f).and_then(|m| m.recall_at(1)).expect("recall@1 present")
}

fn invariance_experiment() -> Outcome {
    let p = pilot();
    let before = p.base.variation.ok_or("no base variation")?;
    let after = p.adapted.variation.ok_or("no adapted variation")?;
    ensure!(
        after.std <= before.std,
        "(a) Recall@1 std rose {:.4} -> {:.4}",
        before.std,
        after.std
    );

    let (c0, intra0) = spread(&p.base_store);
    let (c1, intra1) = spread(&p.adapted_store);
    let (inter0, inter1) = (min_pairwise(&c0), min_pairwise(&c1));
    let intra_drop = 1.0 - intra1 / intra0;
    let inter_drop = 1.0 - inter1 / inter0;
    ensure!(
        intra_drop >= 0.30,
        "(b) intra distance dropped only {:.1}%",
        100.0 * intra_drop
    );
    ensure!(
        inter_drop < 0.10,
        "(b) inter distance dropped {:.1}%",
        100.0 * inter_drop
    );

    let mut order: Vec<(usize, f64)> = RENDERABLE
        .iter()
        .enumerate()
        .map(|(i, f)| (i, recall1(&p.base, f.as_str())))
        .collect();
    order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let mut bottom = Vec::new();
    for &(i, _) in &order[..3] {
        let f = RENDERABLE[i].as_str();
        let delta = p.adapted.log_rank_of(f).ok_or("missing log-rank")?;
        ensure!(delta >= 0.0, "(c) {f} mean log-rank delta {delta:.4}");
        bottom.push(format!("{f} {delta:+.3}"));
    }
    let t = within(p.elapsed, Duration::from_secs(600))?;
    Ok(format!(
        "R@1 std {:.3} -> {:.3}; intra {intra0:.3} -> {intra1:.3} ({:.0}%); inter {inter0:.3} -> {inter1:.3} ({:+.0}%); bottom-3 [{}]; pilot {t}",
        before.std,
        after.std,
        -100.0 * intra_drop,
        -100.0 * inter_drop,
        bottom.join(", ")
    ))
}

fn mixed_robustness() -> Outcome {
    let p = pilot();
    let mixed = FormatId::Mixed.as_str();
    let base = recall1(&p.base_mixed, mixed);
    let adapted = recall1(&p.adapted_mixed, mixed);
    let (best_f, best) = RENDERABLE
        .iter()
        .map(|f| (f.as_str(), recall1(&p.base, f.as_str())))
        .fold(("", f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    ensure!(
        base < best,
        "mixed base R@1 {base:.3} not below best single {best_f} {best:.3}"
    );
    ensure!(adapted - base >= 0.0, "mixed R@1 fell {base:.3} -> {adapted:.3}");
    Ok(format!(
        "mixed R@1 {base:.3} -> {adapted:.3}; best single {best_f} {best:.3}"
    ))
}

fn statistics_oracles() -> Outcome {
    let w = wilcoxon_signed_rank(&[1.0, 2.0, 3.0], &[0.0; 3]).map_err(|e| e.to_string())?;
    ensure!((w.p_value - 0.25).abs() < 1e-15, "Wilcoxon p {}", w.p_value);
    let adj = bh_fdr_adjust(&[0.01, 0.02, 0.03, 0.04]).map_err(|e| e.to_string())?;
    ensure!(adj.iter().all(|q| (q - 0.04).abs() < 1e-15), "BH {adj:?}");

    let mut rng = SplitMix64::new(9);
    for instance in 0..1000 {
        let d = 2 + rng.below_usize(6);
        let n = 1 + rng.below_usize(30);
        // coarse grid values make ties common
        let grid = |rng: &mut SplitMix64| (0..d).map(|_| rng.below(5) as f64 - 2.0).collect::<Vec<f64>>();
        let mut q = grid(&mut rng);
        if q.iter().all(|x| *x == 0.0) {
            q[0] = 1.0;
        }
        let docs: Vec<(String, Vec<f64>)> = (0..n)
            .map(|i| {
                let mut v = grid(&mut rng);
                if v.iter().all(|x| *x == 0.0) {
                    v[d - 1] = 1.0;
                }
                (format!("t{:03}", rng.below(1000) * 100 + i as u64), v)
            })
            .collect();
        let refs: Vec<(&str, &[f64])> = docs.iter().map(|(id, v)| (id.as_str(), v.as_slice())).collect();
        let got: Vec<&str> = rank_documents(&q, &refs)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|(id, _)| id)
            .collect();
        // brute force: a document's position is the number of documents
        // strictly better (higher cosine, or equal cosine and smaller id)
        let cos = |v: &[f64]| {
            let dot: f64 = q.iter().zip(v).map(|(a, b)| a * b).sum();
            dot / (norm(&q) * norm(v))
        };
        let mut want = vec![""; n];
        for (id, v) in &docs {
            let s = cos(v);
            let better = docs
                .iter()
                .filter(|(o, w)| cos(w) > s || (cos(w) == s && o < id))
                .count();
            want[better] = id;
        }
        ensure!(got == want, "ranking instance {instance} differs");
    }
    Ok("Wilcoxon p 0.25, BH [0.04 x4], 1000 rankings match brute force".into())
}

fn random_store(rng: &mut SplitMix64) -> EmbeddingStore {
    let d = 1 + rng.below_usize(40);
    let meta = StoreMetadata {
        corpus: format!("c{}", rng.below(100)),
        encoder: "toy".into(),
        params: format!("dimension={d}"),
    };
    let mut b = StoreBuilder::new(d, meta);
    let n_tables = 1 + rng.below_usize(6);
    for t in 0..n_tables {
        for f in &RENDERABLE {
            if rng.below(3) == 0 {
                continue;
            }
            let mut v = rand_vec(d, rng, 3.0);
            v[0] = v[0].abs() + 0.1;
            b.insert(f.as_str(), &format!("t{t}"), v).unwrap();
        }
    }
    b.seal()
}

fn round_trips() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = SplitMix64::new(10);
    for i in 0..50 {
        let store = random_store(&mut rng);
        let path = dir.path().join(format!("s{i}.emb"));
        export_store(&store, &path).map_err(|e| e.to_string())?;
        let back = import_store(&path).map_err(|e| e.to_string())?;
        ensure!(back == store.quantized(), "store {i} changed in round trip");
    }
    let bytes = random_store(&mut rng).to_bytes().map_err(|e| e.to_string())?;
    let mut bad = bytes.clone();
    bad[0] = b'X';
    ensure!(
        matches!(EmbeddingStore::from_bytes(&bad), Err(StoreError::BadMagic(_))),
        "corrupted store magic not reported"
    );
    for cut in [3, 10, bytes.len() - 1] {
        ensure!(
            EmbeddingStore::from_bytes(&bytes[..cut]) == Err(StoreError::TruncatedFile),
            "store truncated at {cut} not reported"
        );
    }

    let q = |x: f64| f64::from(x as f32);
    for i in 0..20 {
        let cfg = AdapterConfig {
            dimension: 2 + rng.below_usize(20),
            bottleneck: 1 + rng.below_usize(10),
            alpha: rng.uniform(0.0, 0.5),
            dropout: rng.uniform(0.0, 0.5),
            seed: i,
            ..Default::default()
        };
        let mut p = init_adapter(&cfg).map_err(|e| e.to_string())?;
        for s in p.weights.slices_mut() {
            s.iter_mut().for_each(|v| *v = rng.uniform(-2.0, 2.0));
        }
        let mut opt = OptimizerState::new(cfg.dimension, cfg.bottleneck);
        for s in opt.m.slices_mut().into_iter().chain(opt.v.slices_mut()) {
            s.iter_mut().for_each(|v| *v = rng.uniform(0.0, 1.0));
        }
        opt.step = rng.below(100_000);
        let path = dir.path().join(format!("a{i}.ckpt"));
        let with_opt = rng.below(2) == 0;
        save_checkpoint(&p, with_opt.then_some(&opt), &path).map_err(|e| e.to_string())?;
        let Checkpoint { params, opt: back_opt } =
            load_checkpoint(&path, Some(cfg.dimension)).map_err(|e| e.to_string())?;
        ensure!(
            params.alpha == q(p.alpha) && params.dropout == q(p.dropout),
            "checkpoint {i}: scalars changed"
        );
        for (a, b) in params.weights.slices().iter().zip(p.weights.slices()) {
            ensure!(
                a.iter().zip(b).all(|(x, y)| *x == q(*y)),
                "checkpoint {i}: weights changed"
            );
        }
        match (with_opt, back_opt) {
            (true, Some(o)) => {
                ensure!(o.step == opt.step, "checkpoint {i}: step changed");
                let pairs =
                    o.m.slices()
                        .into_iter()
                        .chain(o.v.slices())
                        .zip(opt.m.slices().into_iter().chain(opt.v.slices()));
                for (a, b) in pairs {
                    ensure!(
                        a.iter().zip(b).all(|(x, y)| *x == q(*y)),
                        "checkpoint {i}: moments changed"
                    );
                }
            }
            (false, None) => {}
            _ => return Err(format!("checkpoint {i}: optimizer presence changed")),
        }
    }
    let p = init_adapter(&AdapterConfig {
        dimension: 6,
        bottleneck: 3,
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    let bytes = Checkpoint { params: p, opt: None }.to_bytes();
    let mut bad = bytes.clone();
    bad[1] = 0;
    ensure!(
        matches!(Checkpoint::from_bytes(&bad, None), Err(AdapterError::BadMagic)),
        "corrupted checkpoint magic not reported"
    );
    for cut in [2, 12, bytes.len() - 1] {
        ensure!(
            matches!(
                Checkpoint::from_bytes(&bytes[..cut], None),
                Err(AdapterError::TruncatedFile)
            ),
            "checkpoint truncated at {cut} not reported"
        );
    }
    Ok("50 stores and 20 checkpoints identical at f32; magic and truncation errors named".into())
}

/// Post-training properties of the pilot beyond the numbered criteria.
fn non_collapse() -> Outcome {
    let p = pilot();
    let z: Vec<Vec<f64>> = p.adapted_store.iter().map(|(_, _, v)| unit(v)).collect();
    let n = z.len() as f64;
    let d = z[0].len();
    let mut min_std = f64::INFINITY;
    for j in 0..d {
        let mean = z.iter().map(|v| v[j]).sum::<f64>() / n;
        let var = z.iter().map(|v| (v[j] - mean) * (v[j] - mean)).sum::<f64>() / n;
        min_std = min_std.min(var.sqrt());
    }
    ensure!(min_std >= p.gamma / 2.0, "smallest per-dimension std {min_std:.4}");
    Ok(format!("smallest per-dimension std {min_std:.4} >= {}", p.gamma / 2.0))
}

fn formats_move_toward_centroid() -> Outcome {
    let p = pilot();
    let per_format = |store: &EmbeddingStore| -> Vec<f64> {
        let by_table = store.views_by_table();
        RENDERABLE
            .iter()
            .map(|f| {
                let mut s = 0.0;
                for views in by_table.values() {
                    let z: Vec<Vec<f64>> = views.iter().map(|(_, v)| unit(v)).collect();
                    let c: Vec<f64> = (0..z[0].len())
                        .map(|j| z.iter().map(|v| v[j]).sum::<f64>() / z.len() as f64)
                        .collect();
                    let (_, v) = views
                        .iter()
                        .find(|(g, _)| *g == f.as_str())
                        .expect("every format present");
                    s += dist(&unit(v), &c);
                }
                s / by_table.len() as f64
            })
            .collect()
    };
    let before = per_format(&p.base_store);
    let after = per_format(&p.adapted_store);
    let mut worst = ("", 0.0f64);
    for ((f, b), a) in RENDERABLE.iter().zip(&before).zip(&after) {
        ensure!(a < b, "{f} moved away from the centroid: {b:.4} -> {a:.4}");
        worst = if a / b > worst.1 { (f.as_str(), a / b) } else { worst };
    }
    Ok(format!(
        "all 17 formats closer; least improved {} at {:.0}% of base",
        worst.0,
        100.0 * worst.1
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("criterion 1 centroid least squares", centroid_optimality),
        ("criterion 2 semantic recovery", semantic_recovery),
        ("criterion 3 gradient check", gradient_check),
        ("criterion 4 loss goldens", loss_goldens),
        ("criterion 5 serializer goldens", serializer_goldens),
        ("criterion 6 published variation", published_variation),
        ("criterion 7 controlled invariance", invariance_experiment),
        ("criterion 8 mixed-format robustness", mixed_robustness),
        ("criterion 9 statistics oracles", statistics_oracles),
        ("criterion 10 round trips", round_trips),
        ("property non-collapse", non_collapse),
        ("property per-format contraction", formats_move_toward_centroid),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} checks failed");
        std::process::exit(1);
    }
    println!("all checks passed");
}
