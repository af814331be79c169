use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{sample_family_tree, sample_grid_graph, sample_metro_map, MAX_ATTEMPTS};
use crate::error::{Error, Result};
use crate::graph::{validate_graph, Domain, RelationalGraph};
use crate::rng::{stream, StreamRng};
use crate::schema::DomainSchema;
use crate::text::{render_description, DescribedSample, RenderOptions, TokenVocabulary};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    fn tag(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSize {
    pub graphs: usize,
    pub descriptions: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct OodFlags {
    pub entities: bool,
    pub relations: bool,
    pub no_prompt: bool,
}

impl OodFlags {
    pub fn any(&self) -> bool {
        self.entities || self.relations || self.no_prompt
    }
}

/// What to generate. OOD flags apply to the test split only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub domain: Domain,
    pub n_entities: usize,
    /// Metro only.
    #[serde(default = "default_lines")]
    pub n_lines: usize,
    pub train: SplitSize,
    pub validation: SplitSize,
    pub test: SplitSize,
    pub seed: u64,
    #[serde(default)]
    pub ood: OodFlags,
}

fn default_lines() -> usize {
    2
}

impl DatasetSpec {
    /// 30×20 train, 50×20 validation, 50×30 test.
    pub fn new(domain: Domain, seed: u64) -> Self {
        DatasetSpec {
            domain,
            n_entities: Self::default_entities(domain),
            n_lines: default_lines(),
            train: SplitSize {
                graphs: 30,
                descriptions: 20,
            },
            validation: SplitSize {
                graphs: 50,
                descriptions: 20,
            },
            test: SplitSize {
                graphs: 50,
                descriptions: 30,
            },
            seed,
            ood: OodFlags::default(),
        }
    }

    pub fn default_entities(domain: Domain) -> usize {
        match domain {
            Domain::Ordinality | Domain::Spatial | Domain::Thematic => 5,
            Domain::Family | Domain::Metro => 6,
        }
    }

    pub fn size(&self, split: Split) -> SplitSize {
        match split {
            Split::Train => self.train,
            Split::Validation => self.validation,
            Split::Test => self.test,
        }
    }

    pub fn ood_for(&self, split: Split) -> OodFlags {
        if split == Split::Test {
            self.ood
        } else {
            OodFlags::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphEntry {
    pub graph_id: String,
    pub split: Split,
    pub ood: OodFlags,
    pub graph: RelationalGraph,
    pub samples: Vec<DescribedSample>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub domain: Domain,
    pub graphs: Vec<GraphEntry>,
}

/// One JSONL line: a described sample with its graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub graph_id: String,
    pub split: Split,
    pub domain: Domain,
    pub graph: RelationalGraph,
    pub description: String,
    pub probed_tokens: Vec<String>,
    pub ood: OodFlags,
    pub sample_id: String,
}

impl Dataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &GraphEntry> {
        self.graphs.iter().filter(move |g| g.split == split)
    }

    pub fn records(&self, split: Option<Split>) -> impl Iterator<Item = SampleRecord> + '_ {
        self.graphs
            .iter()
            .filter(move |g| split.is_none_or(|s| g.split == s))
            .flat_map(|g| {
                g.samples.iter().map(move |s| SampleRecord {
                    graph_id: g.graph_id.clone(),
                    split: g.split,
                    domain: g.graph.domain(),
                    graph: g.graph.clone(),
                    description: s.full_text.clone(),
                    probed_tokens: s.probed_tokens.clone(),
                    ood: g.ood,
                    sample_id: s.sample_id.clone(),
                })
            })
    }

    pub fn sample_count(&self, split: Split) -> usize {
        self.split(split).map(|g| g.samples.len()).sum()
    }

    pub fn from_records(records: Vec<SampleRecord>) -> Result<Dataset> {
        let graphs = split_graphs(records)?;
        let domain = graphs
            .first()
            .map(|g| g.graph.domain())
            .ok_or_else(|| Error::Config("empty dataset".into()))?;
        Ok(Dataset { domain, graphs })
    }
}

pub fn write_jsonl(records: impl IntoIterator<Item = SampleRecord>) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(&r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn read_jsonl(text: &str) -> Result<Vec<SampleRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Groups consecutive-or-not records by graph id, keeping first-seen order.
pub fn split_graphs(records: Vec<SampleRecord>) -> Result<Vec<GraphEntry>> {
    let mut out: Vec<GraphEntry> = Vec::new();
    let mut index = std::collections::HashMap::new();
    for r in records {
        let sample = DescribedSample {
            sample_id: r.sample_id,
            graph_id: r.graph_id.clone(),
            full_text: r.description,
            probed_tokens: r.probed_tokens,
            relation_order: Vec::new(),
            flips: Vec::new(),
        };
        match index.get(&(r.split, r.graph_id.clone())) {
            Some(&i) => {
                let entry: &mut GraphEntry = &mut out[i];
                if entry.graph != r.graph {
                    return Err(Error::Config(format!("graph {} differs between its samples", r.graph_id)));
                }
                entry.samples.push(sample);
            }
            None => {
                index.insert((r.split, r.graph_id.clone()), out.len());
                out.push(GraphEntry {
                    graph_id: r.graph_id,
                    split: r.split,
                    ood: r.ood,
                    graph: r.graph,
                    samples: vec![sample],
                });
            }
        }
    }
    Ok(out)
}

fn sample_graph(spec: &DatasetSpec, schema: &DomainSchema, ood_entities: bool, rng: &mut StreamRng) -> Result<RelationalGraph> {
    let n = spec.n_entities;
    match spec.domain {
        Domain::Ordinality | Domain::Spatial | Domain::Thematic => {
            let dims = spec.domain.grid_dims().expect("grid domain");
            Ok(sample_grid_graph(schema, ood_entities, n, dims, rng)?.graph)
        }
        Domain::Family => sample_family_tree(schema, ood_entities, n, rng),
        Domain::Metro => sample_metro_map(schema, ood_entities, spec.n_lines, n, rng),
    }
}

/// Generates every split. Graph `i` of a split draws from its own stream
/// `(seed, split, i)`; labeled duplicates of any earlier graph in the
/// dataset are resampled.
pub fn build_dataset(spec: &DatasetSpec, schema: &DomainSchema, vocab: Option<&TokenVocabulary>) -> Result<Dataset> {
    if schema.domain != spec.domain {
        return Err(Error::Config(format!(
            "schema is for {} but the dataset asks for {}",
            schema.domain, spec.domain
        )));
    }
    if spec.n_entities > schema.entity_pool.len() {
        return Err(Error::PoolExhausted {
            requested: spec.n_entities,
            available: schema.entity_pool.len(),
        });
    }
    let mut seen = HashSet::new();
    let mut graphs = Vec::new();
    for split in Split::ALL {
        let size = spec.size(split);
        let ood = spec.ood_for(split);
        for index in 0..size.graphs {
            let wrap = |e: Error| Error::Generation {
                seed: spec.seed,
                split: split.to_string(),
                index,
                source: Box::new(e),
            };
            let mut rng = stream(spec.seed, &[split.tag(), index as u64, 0]);
            let mut attempts = 0;
            let graph = loop {
                attempts += 1;
                if attempts > MAX_ATTEMPTS {
                    return Err(wrap(Error::SamplingFailed {
                        what: "a graph distinct from all earlier ones".into(),
                        attempts: MAX_ATTEMPTS,
                    }));
                }
                let g = sample_graph(spec, schema, ood.entities, &mut rng).map_err(wrap)?;
                let report = validate_graph(&g, schema);
                if !report.is_valid() {
                    return Err(wrap(Error::InvalidGraph(format!("{:?}", report.violations))));
                }
                if seen.insert(g.labeled_key()) {
                    break g;
                }
            };
            let graph_id = format!("{split}-{index:03}");
            let mut text_rng = stream(spec.seed, &[split.tag(), index as u64, 1]);
            let opts = RenderOptions {
                no_prompt: ood.no_prompt,
                ood_relations: ood.relations,
                vocab,
            };
            let samples = (0..size.descriptions)
                .map(|k| {
                    let sample_id = format!("{graph_id}/{k:02}");
                    render_description(&graph_id, &sample_id, &graph, schema, &mut text_rng, &opts)
                })
                .collect::<Result<Vec<_>>>()
                .map_err(wrap)?;
            graphs.push(GraphEntry {
                graph_id,
                split,
                ood,
                graph,
                samples,
            });
        }
    }
    Ok(Dataset {
        domain: spec.domain,
        graphs,
    })
}
