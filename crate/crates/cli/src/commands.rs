use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serinv_core::adapter::{self, load_checkpoint, save_checkpoint, AdapterConfig};
use serinv_core::encoder::{encode_corpus, ToyEncoder, ToyEncoderConfig};
use serinv_core::eval::{evaluate_run, EvalOptions, MetricsReport};
use serinv_core::format::{FormatId, RENDERABLE};
use serinv_core::geometry::shift_decompose;
use serinv_core::store::{export_store, import_store, ingest_text_vectors, EmbeddingStore};
use serinv_core::table::{
    derive_queries, gen_synthetic_corpus, load_corpus, parse_queries, write_corpus_string, write_queries_string, Query,
    SyntheticSpec,
};

use crate::config::{List, Settings};
use crate::error::CliError;
use crate::{AdaptArgs, EncodeArgs, EvalArgs, GenArgs, ImportArgs, ShiftArgs, TrainArgs};

pub struct Context {
    pub run_dir: PathBuf,
    pub settings: Settings,
    pub seed: u64,
}

impl Context {
    fn path(&self, rel: &str) -> PathBuf {
        self.run_dir.join(rel)
    }

    fn store_path(&self, name: &str) -> PathBuf {
        self.run_dir.join("stores").join(format!("{name}.emb"))
    }

    fn checkpoint_path(&self) -> PathBuf {
        self.path("ckpt/adapter.ckpt")
    }

    fn load_store(&self, name: &str) -> Result<EmbeddingStore, CliError> {
        let path = self.store_path(name);
        import_store(&path).map_err(|e| with_path(e.into(), &path))
    }

    fn save_store(&self, name: &str, store: &EmbeddingStore) -> Result<PathBuf, CliError> {
        let path = self.store_path(name);
        ensure_parent(&path)?;
        export_store(store, &path)?;
        Ok(path)
    }
}

fn with_path(e: CliError, path: &Path) -> CliError {
    let prefix = |m: String| format!("{}: {m}", path.display());
    match e {
        CliError::Usage(m) => CliError::Usage(prefix(m)),
        CliError::Data(m) => CliError::Data(prefix(m)),
        CliError::Numeric(m) => CliError::Numeric(prefix(m)),
    }
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    ensure_parent(path)?;
    std::fs::write(path, text)?;
    Ok(())
}

fn parse_format(name: &str) -> Result<FormatId, CliError> {
    name.parse()
        .map_err(|e: serinv_core::format::FormatError| CliError::Usage(e.to_string()))
}

pub fn gen(ctx: &Context, a: GenArgs) -> Result<(), CliError> {
    let s = &ctx.settings;
    let spec = SyntheticSpec {
        n_tables: s.get_or("n-tables", a.n_tables, 200)?,
        rows: (
            s.get_or("rows-min", a.rows_min, 3)?,
            s.get_or("rows-max", a.rows_max, 8)?,
        ),
        cols: (
            s.get_or("cols-min", a.cols_min, 2)?,
            s.get_or("cols-max", a.cols_max, 5)?,
        ),
        vocab_size: s.get_or("vocab-size", a.vocab_size, 500)?,
        seed: ctx.seed,
    };
    let per_table = s.get_or("per-table", a.per_table, 2)?;
    let query_seed = s.get_or("query-seed", a.query_seed, ctx.seed)?;
    let corpus = gen_synthetic_corpus(&spec)?;
    let queries = if corpus.is_empty() {
        Vec::new()
    } else {
        derive_queries(&corpus, per_table, query_seed)?
    };
    write_file(&ctx.path("corpus.txt"), &write_corpus_string(&corpus)?)?;
    write_file(&ctx.path("queries.txt"), &write_queries_string(&queries))?;
    println!(
        "wrote {} tables and {} queries to {}",
        corpus.len(),
        queries.len(),
        ctx.run_dir.display()
    );
    Ok(())
}

fn encoder_config(s: &Settings, a: &EncodeArgs) -> Result<ToyEncoderConfig, CliError> {
    let d = ToyEncoderConfig::default();
    Ok(ToyEncoderConfig {
        bucket_count: s.get_or("bucket-count", a.bucket_count, d.bucket_count)?,
        dimension: s.get_or("dimension", a.dimension, d.dimension)?,
        projection_seed: s.get_or("projection-seed", a.projection_seed, d.projection_seed)?,
        lowercase: s.get_or("lowercase", a.lowercase, d.lowercase)?,
    })
}

pub fn encode(ctx: &Context, a: EncodeArgs) -> Result<(), CliError> {
    let s = &ctx.settings;
    let corpus_path = s.get_or("corpus", a.corpus.clone(), ctx.path("corpus.txt"))?;
    let names = s.get_or("formats", a.formats.clone(), List(vec!["all".to_string()]))?.0;
    let mut formats = Vec::new();
    for n in &names {
        if n == "all" {
            formats.extend(RENDERABLE);
            continue;
        }
        let f = parse_format(n)?;
        if f.is_centroid() {
            return Err(CliError::Usage(format!("{f} is computed from a store, not encoded")));
        }
        formats.push(f);
    }
    let default_name = if formats == [FormatId::Mixed] { "mixed" } else { "base" };
    let name = s.get_or("name", a.name.clone(), default_name.to_string())?;
    let cfg = encoder_config(s, &a)?;
    let corpus = load_corpus(&corpus_path).map_err(|e| with_path(e.into(), &corpus_path))?;
    let store = encode_corpus(&corpus, &formats, ctx.seed, &cfg)?;
    let path = ctx.save_store(&name, &store)?;
    println!(
        "wrote {} vectors (d={}) to {}",
        store.len(),
        store.dimension(),
        path.display()
    );
    Ok(())
}

fn adapter_config(ctx: &Context, a: &TrainArgs, dimension: usize) -> Result<AdapterConfig, CliError> {
    let s = &ctx.settings;
    let d = AdapterConfig::default();
    if let Some(want) = s.get("dimension", a.dimension)? {
        if want != dimension {
            return Err(CliError::Data(format!(
                "store dimension {dimension}, --dimension {want}"
            )));
        }
    }
    let cfg = AdapterConfig {
        dimension,
        bottleneck: s.get_or("bottleneck", a.bottleneck, d.bottleneck)?,
        alpha: s.get_or("alpha", a.alpha, d.alpha)?,
        dropout: s.get_or("dropout", a.dropout, d.dropout)?,
        use_bias: s.get_or("use-bias", a.use_bias, d.use_bias)?,
        gamma: s.get_or("gamma", a.gamma, d.gamma)?,
        lambda_inv: s.get_or("lambda-inv", a.lambda_inv, d.lambda_inv)?,
        lambda_var: s.get_or("lambda-var", a.lambda_var, d.lambda_var)?,
        lambda_cov: s.get_or("lambda-cov", a.lambda_cov, d.lambda_cov)?,
        lambda_id: s.get_or("lambda-id", a.lambda_id, d.lambda_id)?,
        lr: s.get_or("lr", a.lr, d.lr)?,
        weight_decay: s.get_or("weight-decay", a.weight_decay, d.weight_decay)?,
        steps: s.get_or("steps", a.steps, d.steps)?,
        batch_size: s.get_or("batch-size", a.batch_size, d.batch_size)?,
        grad_clip_norm: s.get_or("grad-clip-norm", a.grad_clip_norm, d.grad_clip_norm)?,
        log_every: s.get_or("log-every", a.log_every, d.log_every)?,
        ckpt_every: s.get_or("ckpt-every", a.ckpt_every, d.ckpt_every)?,
        max_views: s.get("max-views", a.max_views)?,
        hidden_mult: s.get_or("hidden-mult", a.hidden_mult, d.hidden_mult)?,
        seed: ctx.seed,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn train(ctx: &Context, a: TrainArgs) -> Result<(), CliError> {
    let name = ctx.settings.get_or("store", a.store.clone(), "base".to_string())?;
    let store = ctx.load_store(&name)?;
    let cfg = adapter_config(ctx, &a, store.dimension())?;
    let ckpt = ctx.checkpoint_path();
    ensure_parent(&ckpt)?;
    let outcome = adapter::train_with_hook(&store, &cfg, |_, p, opt| save_checkpoint(p, Some(opt), &ckpt))?;
    save_checkpoint(&outcome.params, Some(&outcome.opt), &ckpt)?;
    write_file(&ctx.path("train_log.csv"), &outcome.log_csv())?;
    if let Some(last) = outcome.log.last() {
        println!(
            "step {}: total {:.6} inv {:.6} var {:.6} cov {:.6} id {:.6}",
            last.step, last.loss.total, last.loss.inv, last.loss.var, last.loss.cov, last.loss.id
        );
    }
    println!("trained {} steps; checkpoint {}", cfg.steps, ckpt.display());
    Ok(())
}

pub fn adapt(ctx: &Context, a: AdaptArgs) -> Result<(), CliError> {
    let s = &ctx.settings;
    let name = s.get_or("store", a.store, "base".to_string())?;
    let ckpt = s.get_or("checkpoint", a.checkpoint, ctx.checkpoint_path())?;
    let out = s.get_or("out", a.out, format!("{name}-adapted"))?;
    let store = ctx.load_store(&name)?;
    let params = load_checkpoint(&ckpt, Some(store.dimension()))
        .map_err(|e| with_path(e.into(), &ckpt))?
        .params;
    let adapted = adapter::adapt_store(&params, &store)?;
    let path = ctx.save_store(&out, &adapted)?;
    println!("wrote {} adapted vectors to {}", adapted.len(), path.display());
    Ok(())
}

/// Recovers the toy encoder settings recorded in a store's metadata.
fn toy_config_from_params(params: &str) -> Option<ToyEncoderConfig> {
    let kv: BTreeMap<&str, &str> = params.split(',').filter_map(|p| p.split_once('=')).collect();
    Some(ToyEncoderConfig {
        bucket_count: kv.get("buckets")?.parse().ok()?,
        dimension: kv.get("dim")?.parse().ok()?,
        projection_seed: kv.get("projection_seed")?.parse().ok()?,
        lowercase: kv.get("lowercase")?.parse().ok()?,
    })
}

fn query_vectors(store: &EmbeddingStore, queries: &[Query], file: Option<&Path>) -> Result<Vec<Vec<f64>>, CliError> {
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| with_path(e.into(), path))?;
        let mut by_id = BTreeMap::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let mut parts = line.split('\t');
            let id = parts.next().unwrap_or_default();
            let v = parts
                .map(|p| p.trim().parse::<f64>())
                .collect::<Result<Vec<f64>, _>>()
                .map_err(|_| CliError::Data(format!("{}: line {}: bad number", path.display(), i + 1)))?;
            if v.iter().any(|x| !x.is_finite()) {
                return Err(CliError::Numeric(format!(
                    "{}: line {}: non-finite value",
                    path.display(),
                    i + 1
                )));
            }
            by_id.insert(id.to_string(), v);
        }
        return queries
            .iter()
            .map(|q| {
                by_id
                    .remove(&q.id)
                    .ok_or_else(|| CliError::Data(format!("no vector for query {}", q.id)))
            })
            .collect();
    }
    if store.metadata.encoder != "toy" {
        return Err(CliError::Usage(format!(
            "store encoder is {:?}; pass --query-vectors",
            store.metadata.encoder
        )));
    }
    let cfg = toy_config_from_params(&store.metadata.params)
        .ok_or_else(|| CliError::Data(format!("unreadable encoder params {:?}", store.metadata.params)))?;
    let enc = ToyEncoder::new(cfg)?;
    queries.iter().map(|q| Ok(enc.encode(&q.text)?)).collect()
}

pub fn eval(ctx: &Context, a: EvalArgs) -> Result<(), CliError> {
    let s = &ctx.settings;
    let name = s.get_or("store", a.store, "base".to_string())?;
    let queries_path = s.get_or("queries", a.queries, ctx.path("queries.txt"))?;
    let qv_path = s.get::<PathBuf>("query-vectors", a.query_vectors)?;
    let checkpoint = s.get::<PathBuf>("checkpoint", a.checkpoint)?;
    let baseline_name = s.get::<String>("baseline", a.baseline)?;
    let defaults = EvalOptions::default();
    let opts = EvalOptions {
        k_list: s.get_or("k-list", a.k_list, List(defaults.k_list))?.0,
        pca_tables: s.get_or("pca-tables", a.pca_tables, defaults.pca_tables)?,
    };
    let out_dir = s.get_or("out", a.out, ctx.path("reports"))?;

    let base = ctx.load_store(&name)?;
    let text = std::fs::read_to_string(&queries_path).map_err(|e| with_path(e.into(), &queries_path))?;
    let queries = parse_queries(&text).map_err(|e| with_path(e.into(), &queries_path))?;
    if queries.is_empty() {
        return Err(CliError::Data(format!("{}: no queries", queries_path.display())));
    }
    let qv = query_vectors(&base, &queries, qv_path.as_deref())?;
    let formats = match s.get::<List<String>>("formats", a.formats)? {
        Some(List(f)) => {
            for n in &f {
                parse_format(n)?;
            }
            f
        }
        None => base.formats(),
    };

    let baseline_report = match &baseline_name {
        Some(b) => Some(evaluate_run(&queries, &qv, &ctx.load_store(b)?, &formats, &opts, None)?),
        None if checkpoint.is_some() => Some(evaluate_run(&queries, &qv, &base, &formats, &opts, None)?),
        None => None,
    };
    let store = match &checkpoint {
        Some(path) => {
            let params = load_checkpoint(path, Some(base.dimension()))
                .map_err(|e| with_path(e.into(), path))?
                .params;
            adapter::adapt_store(&params, &base)?
        }
        None => base,
    };
    let report = evaluate_run(&queries, &qv, &store, &formats, &opts, baseline_report.as_ref())?;
    report.write_csvs(&out_dir)?;
    print_summary(&report);
    println!("reports written to {}", out_dir.display());
    Ok(())
}

fn print_summary(report: &MetricsReport) {
    for fm in &report.formats {
        let recalls: Vec<String> = fm.recall.iter().map(|(k, r)| format!("R@{k} {r:.3}")).collect();
        let delta = report
            .log_rank_of(&fm.format)
            .map(|d| format!("  dlogrank {d:+.4}"))
            .unwrap_or_default();
        println!(
            "{:<20} {}  mean rank {:.2}{delta}",
            fm.format,
            recalls.join("  "),
            fm.mean_rank
        );
    }
    if let Some(v) = report.variation {
        println!(
            "R@1 across formats: std {:.4} min {:.3} max {:.3} range {:.3}",
            v.std, v.min, v.max, v.range
        );
    }
}

pub fn shift(ctx: &Context, a: ShiftArgs) -> Result<(), CliError> {
    let s = &ctx.settings;
    let name = s.get_or("store", a.store, "base".to_string())?;
    let reference = parse_format(&s.get_or("reference", a.reference, "centroid_all".to_string())?)?;
    let store = ctx.load_store(&name)?;
    let decomposition = shift_decompose(&store, reference)?;
    let path = ctx.path("reports/shift.csv");
    write_file(&path, &decomposition.to_csv())?;
    println!(
        "wrote {} format rows to {}",
        decomposition.formats.len(),
        path.display()
    );
    Ok(())
}

pub fn import(ctx: &Context, a: ImportArgs) -> Result<(), CliError> {
    let s = &ctx.settings;
    let input = s
        .get::<PathBuf>("input", a.input)?
        .ok_or_else(|| CliError::Usage("import needs --input".into()))?;
    let name = s.get_or("name", a.name, "imported".to_string())?;
    let corpus = s.get_or("corpus-name", a.corpus_name, "external".to_string())?;
    let encoder = s.get_or("encoder-name", a.encoder_name, "external".to_string())?;
    let text = std::fs::read_to_string(&input).map_err(|e| with_path(e.into(), &input))?;
    let store = ingest_text_vectors(&text, &corpus, &encoder).map_err(|e| with_path(e.into(), &input))?;
    let path = ctx.save_store(&name, &store)?;
    println!(
        "imported {} vectors (d={}) to {}",
        store.len(),
        store.dimension(),
        path.display()
    );
    Ok(())
}
