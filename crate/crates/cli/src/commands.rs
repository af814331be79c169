use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use polarprobe::acts::{read_acts, write_acts, ActivationRecord, ActsFile};
use polarprobe::analysis::{
    self, alignment_matrix, eval_probe, pca_projection, probe_errors, qa_correlation, run_baselines, steering_vector,
    write_steering, BaselineInputs, Condition, EvalReport, LogitRecord, QaObservation,
};
use polarprobe::gen::{build_dataset, read_jsonl, split_graphs, write_jsonl, GraphEntry, Split};
use polarprobe::io::atomic_write;
use polarprobe::planted::{plant_embeddings, random_embeddings, PlantedLayout, PlantedSpace};
use polarprobe::probe::{read_checkpoint, train, write_checkpoint, CheckpointHeader, PolarProbe, ProbeData};
use polarprobe::rng::stream;
use polarprobe::schema::DomainSchema;
use polarprobe::text::{render_qa, QaSample, QueryTarget, TokenVocabulary};
use rand::seq::SliceRandom;
use serde::Serialize;

use crate::config::{invalid, read_text, EmbedKind, Layout, RunConfig};

const EMBED_STREAM: u64 = 0x656d_6264;
const QA_STREAM: u64 = 0x7161;
const INIT_STREAM: u64 = 0x696e_6974;

pub struct Ctx {
    pub cfg: RunConfig,
    pub seed: u64,
    pub layout: Layout,
}

impl Ctx {
    pub fn new(cfg: RunConfig, seed: u64, out: &Path) -> Ctx {
        let layout = Layout::new(&cfg, out);
        Ctx { cfg, seed, layout }
    }

    fn schema(&self) -> Result<DomainSchema> {
        match &self.cfg.dataset.schema {
            Some(p) => {
                let s = DomainSchema::from_json(&read_text(p)?).with_context(|| format!("schema {}", p.display()))?;
                if s.domain != self.cfg.dataset.domain {
                    bail!(invalid(format!(
                        "dataset.schema is for {} but dataset.domain is {}",
                        s.domain, self.cfg.dataset.domain
                    )));
                }
                Ok(s)
            }
            None => Ok(DomainSchema::builtin(self.cfg.dataset.domain)),
        }
    }

    fn dataset(&self, split: Split) -> Result<Vec<GraphEntry>> {
        let path = self.layout.dataset(split);
        let records = read_jsonl(&read_text(&path)?).with_context(|| format!("parsing {}", path.display()))?;
        Ok(split_graphs(records)?)
    }

    fn acts(&self, split: Split) -> Result<ActsFile> {
        let path = self.layout.acts(split);
        read_acts(&path).with_context(|| format!("reading {}", path.display()))
    }

    fn probe_data(&self, split: Split, schema: &DomainSchema) -> Result<ProbeData> {
        let entries = self.dataset(split)?;
        if entries.is_empty() {
            return Ok(ProbeData::assemble(&[], &HashMap::new(), schema)?);
        }
        let acts = self.acts(split)?;
        Ok(ProbeData::assemble(&entries, &acts.by_sample_id(), schema)?)
    }

    fn probe(&self) -> Result<(PolarProbe, CheckpointHeader)> {
        let p = &self.layout.probe;
        read_checkpoint(p).with_context(|| format!("reading probe {}", p.display()))
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    atomic_write(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

fn csv_string<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn gen(ctx: &Ctx) -> Result<()> {
    let schema = ctx.schema()?;
    let vocab = match &ctx.cfg.dataset.vocab {
        Some(p) => Some(TokenVocabulary::from_lines(&read_text(p)?)),
        None => None,
    };
    let spec = ctx.cfg.dataset.spec(ctx.seed);
    let ds = build_dataset(&spec, &schema, vocab.as_ref())?;
    for split in Split::ALL {
        write_text(&ctx.layout.dataset(split), &write_jsonl(ds.records(Some(split)))?)?;
    }
    write_text(&ctx.layout.data_dir.join("spec.json"), &serde_json::to_string_pretty(&spec)?)?;
    eprintln!(
        "generated {} graphs ({} / {} / {} described samples) in {}",
        ds.graphs.len(),
        ds.sample_count(Split::Train),
        ds.sample_count(Split::Validation),
        ds.sample_count(Split::Test),
        ctx.layout.data_dir.display()
    );
    Ok(())
}

pub fn embed_synthetic(ctx: &Ctx) -> Result<()> {
    let e = &ctx.cfg.embed;
    let splits: Vec<(Split, Vec<GraphEntry>)> =
        Split::ALL.iter().map(|&s| Ok((s, ctx.dataset(s)?))).collect::<Result<_>>()?;
    let Some(first) = splits.iter().flat_map(|(_, g)| g.first()).next() else {
        bail!(invalid("dataset is empty; run gen first"));
    };
    let domain = first.graph.domain();
    let space = match e.kind {
        EmbedKind::Planted => {
            if !domain.is_euclidean() {
                bail!(invalid(format!("planted embeddings need a grid domain, dataset is {domain}")));
            }
            let k_star = domain.grid_dims().unwrap_or(1);
            Some(PlantedSpace::random(e.d, k_star, e.noise_sigma, &mut stream(ctx.seed, &[EMBED_STREAM]))?)
        }
        EmbedKind::Random => None,
    };
    let mut extra = serde_json::Map::new();
    extra.insert("kind".into(), serde_json::to_value(format!("{:?}", e.kind).to_lowercase())?);
    extra.insert("noise_sigma".into(), e.noise_sigma.into());
    extra.insert("domain".into(), domain.as_str().into());
    for (split, graphs) in &splits {
        let mut records: Vec<ActivationRecord> = Vec::new();
        for (gi, entry) in graphs.iter().enumerate() {
            let mut rng = stream(ctx.seed, &[EMBED_STREAM, *split as u64 + 1, gi as u64]);
            let layout = match &space {
                Some(s) => Some(PlantedLayout::for_graph(&entry.graph, s)?),
                None => None,
            };
            for s in &entry.samples {
                records.push(match &layout {
                    Some(l) => plant_embeddings(&s.sample_id, e.layer, &entry.graph, l, &mut rng)?,
                    None => random_embeddings(&s.sample_id, e.layer, &entry.graph, e.d, &mut rng)?,
                });
            }
        }
        let path = ctx.layout.acts(*split);
        write_acts(&path, &e.model, e.layer, e.d, &records, extra.clone())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    eprintln!("wrote activations to {}", ctx.layout.acts_dir.display());
    Ok(())
}

pub fn cmd_train(ctx: &Ctx) -> Result<()> {
    let schema = ctx.schema()?;
    let cfg = ctx.cfg.train.resolve(ctx.seed)?;
    let train_data = ctx.probe_data(Split::Train, &schema)?;
    let val_data = ctx.probe_data(Split::Validation, &schema)?;
    if train_data.sample_count() == 0 {
        bail!(invalid("no training samples; run gen and embed-synthetic first"));
    }
    let k = cfg.rank.min(train_data.d);
    if k < cfg.rank {
        eprintln!("train.rank {} exceeds activation width {}; using rank {k}", cfg.rank, train_data.d);
    }
    let mut init_rng = stream(cfg.seed, &[INIT_STREAM]);
    let init = if cfg.freeze_probe {
        PolarProbe::truncated_identity(k, train_data.d, train_data.t(), &mut init_rng)?
    } else {
        PolarProbe::init(k, train_data.d, train_data.t(), &mut init_rng)?
    };
    let outcome = train(init, &train_data, Some(&val_data), &cfg)?;
    let layer = ctx.cfg.train.layer.unwrap_or(ctx.cfg.embed.layer);
    let mut saved = cfg.clone();
    saved.rank = k;
    write_checkpoint(&ctx.layout.probe, &outcome.probe, schema.domain, layer, &saved, &train_data.relation_types)?;
    write_text(&ctx.layout.out.join("history.csv"), &csv_string(&outcome.history)?)?;
    if let Some(last) = outcome.history.last() {
        eprintln!(
            "trained rank-{k} probe: train L_s {:.4}, L_a {:.4}; validation existence rho {:.4}",
            last.train_structural, last.train_angular, last.val_existence_rho
        );
    }
    Ok(())
}

fn test_condition(header: &CheckpointHeader, entries: &[GraphEntry], label: &str) -> Condition {
    Condition {
        label: label.to_string(),
        domain: header.domain,
        split: Split::Test,
        ood: entries.first().map(|g| g.ood).unwrap_or_default(),
        layer: header.layer,
        rank: header.k,
    }
}

pub fn cmd_eval(ctx: &Ctx) -> Result<Vec<EvalReport>> {
    let schema = ctx.schema()?;
    let (probe, header) = ctx.probe()?;
    let entries = ctx.dataset(Split::Test)?;
    let test_data = ctx.probe_data(Split::Test, &schema)?;
    if !test_data.missing.is_empty() {
        eprintln!("{} test samples have no activations and were skipped", test_data.missing.len());
    }
    let options = ctx.cfg.eval.options();
    let condition = test_condition(&header, &entries, "probe");
    let mut reports = vec![eval_probe(&probe, &test_data, condition.clone(), &options)?];
    if ctx.cfg.eval.baselines {
        let train_data = ctx.probe_data(Split::Train, &schema)?;
        let val_data = ctx.probe_data(Split::Validation, &schema)?;
        let mut cfg = header.config.clone();
        cfg.rank = header.k;
        reports.extend(run_baselines(&BaselineInputs {
            train: &train_data,
            validation: Some(&val_data),
            test: &test_data,
            config: &cfg,
            condition,
            options,
        })?);
    }
    let mut jsonl = String::new();
    for r in &reports {
        jsonl.push_str(&r.to_json_line()?);
        eprintln!(
            "{}: existence rho {:.4} ± {:.4}, type rho {:.4} ± {:.4} over {} graphs",
            r.condition.label,
            r.existence_mean,
            r.existence_se,
            r.type_mean,
            r.type_se,
            r.graphs.len()
        );
    }
    write_text(&ctx.layout.out.join("eval.jsonl"), &jsonl)?;
    let mut csv = Vec::new();
    EvalReport::write_csv(&reports, &mut csv)?;
    write_text(&ctx.layout.out.join("eval.csv"), &String::from_utf8(csv)?)?;
    Ok(reports)
}

pub fn cmd_align(ctx: &Ctx) -> Result<()> {
    let paths = &ctx.cfg.align.probes;
    if paths.is_empty() {
        bail!(invalid("align.probes lists no checkpoints"));
    }
    let probes: Vec<PolarProbe> = paths
        .iter()
        .map(|p| read_checkpoint(p).map(|(probe, _)| probe).with_context(|| format!("reading {}", p.display())))
        .collect::<Result<_>>()?;
    let matrix = alignment_matrix(&probes)?;
    let names: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["probe".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    for (name, row) in names.iter().zip(&matrix) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    write_text(&ctx.layout.out.join("alignment.csv"), &String::from_utf8(w.into_inner()?)?)?;
    Ok(())
}

fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' }).collect()
}

pub fn cmd_steer_export(ctx: &Ctx) -> Result<()> {
    let (probe, header) = ctx.probe()?;
    let s = &ctx.cfg.steer;
    let relations = if s.relations.is_empty() { header.relation_types.clone() } else { s.relations.clone() };
    for rel in &relations {
        for &sign in &s.signs {
            let v = steering_vector(&probe, &header.relation_types, rel, sign, &s.alpha_grid, header.layer)
                .map_err(|e| match e {
                    polarprobe::Error::Config(m) => invalid(m),
                    other => other.into(),
                })?;
            let name = format!("{}_{}.plrs", slug(rel), if sign > 0 { "pos" } else { "neg" });
            write_steering(&ctx.layout.out.join("steer").join(name), &v)?;
        }
    }
    Ok(())
}

/// Up to `per_description` unambiguous questions per test description.
pub fn build_qa(entries: &[GraphEntry], schema: &DomainSchema, per_description: usize, seed: u64) -> Vec<QaSample> {
    let mut out = Vec::new();
    for (gi, entry) in entries.iter().enumerate() {
        let mut rng = stream(seed, &[QA_STREAM, gi as u64]);
        for desc in &entry.samples {
            let mut candidates: Vec<QaSample> = entry
                .graph
                .edges()
                .iter()
                .flat_map(|&e| [QueryTarget::Source, QueryTarget::Destination].map(|t| (e, t)))
                .filter_map(|(e, t)| render_qa(desc, &entry.graph, e, t, schema, entry.ood.relations).ok())
                .collect();
            candidates.shuffle(&mut rng);
            out.extend(candidates.into_iter().take(per_description));
        }
    }
    out
}

#[derive(Serialize)]
struct QaReport {
    matched: usize,
    unmatched: usize,
    type_error: Option<analysis::QaCorrelation>,
    existence_error: analysis::QaCorrelation,
}

pub fn cmd_qa(ctx: &Ctx) -> Result<()> {
    let schema = ctx.schema()?;
    let entries = ctx.dataset(Split::Test)?;
    let items = build_qa(&entries, &schema, ctx.cfg.qa.per_description, ctx.seed);
    let mut jsonl = String::new();
    for q in &items {
        jsonl.push_str(&serde_json::to_string(q)?);
        jsonl.push('\n');
    }
    write_text(&ctx.layout.out.join("qa.jsonl"), &jsonl)?;
    eprintln!("wrote {} QA items", items.len());
    let Some(logits_path) = &ctx.cfg.qa.logits else {
        return Ok(());
    };
    let logits: HashMap<String, f64> = read_text(logits_path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str::<LogitRecord>(l).map(|r| (r.qa_id, r.logit)))
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("parsing {}", logits_path.display()))?;
    let (probe, _) = ctx.probe()?;
    let data = ctx.probe_data(Split::Test, &schema)?;
    let samples: HashMap<&str, (usize, usize)> = data
        .graphs
        .iter()
        .enumerate()
        .flat_map(|(g, pg)| pg.samples.iter().enumerate().map(move |(s, ps)| (ps.sample_id.as_str(), (g, s))))
        .collect();
    let mut type_obs = Vec::new();
    let mut exist_obs = Vec::new();
    let mut unmatched = 0;
    for q in &items {
        let (Some(&logit), Some(&(g, s))) = (logits.get(&q.qa_id), samples.get(q.sample_id.as_str())) else {
            unmatched += 1;
            continue;
        };
        let pg = &data.graphs[g];
        let out = probe.forward_matrix(&pg.samples[s].h);
        let errs = probe_errors(&out, &pg.target, q.queried_edge);
        exist_obs.push(QaObservation {
            graph_id: q.graph_id.clone(),
            error: errs.existence_error,
            logit,
        });
        if let Some(t) = errs.type_error {
            type_obs.push(QaObservation {
                graph_id: q.graph_id.clone(),
                error: t,
                logit,
            });
        }
    }
    let perms = ctx.cfg.qa.permutations;
    let report = QaReport {
        matched: exist_obs.len(),
        unmatched,
        type_error: if type_obs.is_empty() {
            None
        } else {
            Some(qa_correlation(&type_obs, perms, &mut stream(ctx.seed, &[QA_STREAM, 1 << 32]))?)
        },
        existence_error: qa_correlation(&exist_obs, perms, &mut stream(ctx.seed, &[QA_STREAM, 2 << 32]))?,
    };
    write_text(&ctx.layout.out.join("qa_correlation.json"), &serde_json::to_string_pretty(&report)?)?;
    Ok(())
}

pub fn cmd_pca(ctx: &Ctx) -> Result<()> {
    let (probe, _) = ctx.probe()?;
    let entries = ctx.dataset(Split::Test)?;
    let entry = match &ctx.cfg.pca.graph_id {
        Some(id) => entries
            .iter()
            .find(|g| &g.graph_id == id)
            .ok_or_else(|| invalid(format!("pca.graph_id {id:?} is not in the test split")))?,
        None => entries.first().ok_or_else(|| invalid("test split is empty"))?,
    };
    let acts = ctx.acts(Split::Test)?;
    let samples: Vec<(String, nalgebra::DMatrix<f64>)> = entry
        .samples
        .iter()
        .filter_map(|s| acts.get(&s.sample_id))
        .take(ctx.cfg.pca.descriptions)
        .map(|r| (r.sample_id.clone(), polarprobe::probe::activation_matrix(r)))
        .collect();
    let proj = pca_projection(&probe, &entry.graph, &samples)?;
    write_text(&ctx.layout.out.join("pca_points.csv"), &proj.points_csv()?)?;
    write_text(&ctx.layout.out.join("pca_centroids.csv"), &proj.centroids_csv()?)?;
    write_text(&ctx.layout.out.join("pca_edges.csv"), &proj.edges_csv()?)?;
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    run: String,
    domain: String,
    n_entities: usize,
    noise_sigma: f64,
    rank: usize,
    existence_mean: f64,
    existence_se: f64,
    type_mean: f64,
    type_se: f64,
}

/// gen, embed-synthetic, train and eval for every point of the sweep grid.
pub fn cmd_pipeline(ctx: &Ctx) -> Result<()> {
    let sw = &ctx.cfg.sweep;
    let base = &ctx.cfg;
    let domains = if sw.domain.is_empty() { vec![base.dataset.domain] } else { sw.domain.clone() };
    let sigmas = if sw.noise_sigma.is_empty() { vec![base.embed.noise_sigma] } else { sw.noise_sigma.clone() };
    let ranks: Vec<Option<usize>> = if sw.rank.is_empty() { vec![None] } else { sw.rank.iter().map(|&r| Some(r)).collect() };
    let sizes: Vec<Option<usize>> =
        if sw.n_entities.is_empty() { vec![None] } else { sw.n_entities.iter().map(|&n| Some(n)).collect() };
    let single = domains.len() * sigmas.len() * ranks.len() * sizes.len() == 1
        && sw.domain.is_empty()
        && sw.noise_sigma.is_empty()
        && sw.rank.is_empty()
        && sw.n_entities.is_empty();

    let mut runs: Vec<(String, RunConfig)> = Vec::new();
    for &domain in &domains {
        for &n in &sizes {
            for &sigma in &sigmas {
                for &rank in &ranks {
                    let mut cfg = base.clone();
                    if domain != base.dataset.domain {
                        cfg.dataset.domain = domain;
                        cfg.dataset.schema = None;
                        cfg.dataset.n_entities = None;
                    }
                    if n.is_some() {
                        cfg.dataset.n_entities = n;
                    }
                    cfg.embed.noise_sigma = sigma;
                    if rank.is_some() {
                        cfg.train.rank = rank;
                    }
                    cfg.paths = Default::default();
                    let n_eff = cfg.dataset.spec(ctx.seed).n_entities;
                    let k_eff = cfg.train.resolve(ctx.seed)?.rank;
                    let name = format!("{domain}_n{n_eff}_s{sigma}_k{k_eff}");
                    runs.push((name, cfg));
                }
            }
        }
    }

    use rayon::prelude::*;
    let results: Vec<Result<SweepRow>> = runs
        .par_iter()
        .map(|(name, cfg)| {
            let dir: PathBuf = if single { ctx.layout.out.clone() } else { ctx.layout.out.join("runs").join(name) };
            let run = Ctx::new(cfg.clone(), ctx.seed, &dir);
            gen(&run)?;
            embed_synthetic(&run)?;
            cmd_train(&run)?;
            let reports = cmd_eval(&run)?;
            let r = &reports[0];
            Ok(SweepRow {
                run: name.clone(),
                domain: cfg.dataset.domain.to_string(),
                n_entities: cfg.dataset.spec(ctx.seed).n_entities,
                noise_sigma: cfg.embed.noise_sigma,
                rank: r.condition.rank,
                existence_mean: r.existence_mean,
                existence_se: r.existence_se,
                type_mean: r.type_mean,
                type_se: r.type_se,
            })
        })
        .collect();
    let rows: Vec<SweepRow> = results.into_iter().collect::<Result<_>>()?;
    write_text(&ctx.layout.out.join("sweep.csv"), &csv_string(&rows)?)?;
    Ok(())
}
