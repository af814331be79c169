//! Natural-language rendering of graphs: shuffled relation sentences with a
//! domain prompt and a fixed-order entity post-prompt, plus QA queries.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Edge, RelationalGraph};
use crate::schema::DomainSchema;

/// Token strings of a model vocabulary, one per line.
#[derive(Clone, Debug, Default)]
pub struct TokenVocabulary {
    tokens: HashSet<String>,
}

impl TokenVocabulary {
    pub fn from_lines(text: &str) -> Self {
        TokenVocabulary {
            tokens: text.lines().filter(|l| !l.is_empty()).map(str::to_owned).collect(),
        }
    }

    /// Entities are probed after a space in the post-prompt, so the check
    /// looks for the space-prefixed surface (raw, GPT-2 `Ġ` or SentencePiece
    /// `▁` spelling).
    pub fn is_single_token(&self, entity: &str) -> bool {
        [" ", "\u{120}", "\u{2581}"]
            .iter()
            .any(|prefix| self.tokens.contains(&format!("{prefix}{entity}")))
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RenderOptions<'a> {
    pub no_prompt: bool,
    pub ood_relations: bool,
    pub vocab: Option<&'a TokenVocabulary>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescribedSample {
    pub sample_id: String,
    pub graph_id: String,
    pub full_text: String,
    /// Entity surfaces in canonical entity order.
    pub probed_tokens: Vec<String>,
    /// `relation_order[k]` is the edge index described by sentence `k`.
    /// Not persisted in dataset JSONL.
    #[serde(default)]
    pub relation_order: Vec<usize>,
    /// Per edge index: rendered with the inverse surface form.
    #[serde(default)]
    pub flips: Vec<bool>,
}

/// "a", "a and b", "a, b, and c"
pub fn join_entities(names: &[String]) -> String {
    match names {
        [] => String::new(),
        [a] => a.clone(),
        [a, b] => format!("{a} and {b}"),
        [init @ .., last] => format!("{}, and {last}", init.join(", ")),
    }
}

pub fn render_sentence(
    graph: &RelationalGraph,
    schema: &DomainSchema,
    edge: Edge,
    flipped: bool,
    ood_relations: bool,
) -> Result<String> {
    let rel = &graph.relation_types()[edge.rel];
    let spec = schema
        .relation(rel, ood_relations)
        .ok_or_else(|| Error::Render(format!("schema has no relation {rel:?}")))?;
    let (surface, subject) = if flipped {
        (&spec.inverse, edge.dst)
    } else {
        (&spec.forward, edge.src)
    };
    let subject = &graph.entities()[subject];
    let template = surface
        .template(schema.gender_of(subject))
        .ok_or_else(|| Error::Render(format!("no gender known for {subject:?}")))?;
    Ok(format!(
        "{}.",
        template
            .replace("{src}", &graph.entities()[edge.src])
            .replace("{dst}", &graph.entities()[edge.dst])
    ))
}

pub fn render_prompt(graph: &RelationalGraph, schema: &DomainSchema, ood_relations: bool) -> String {
    let lines: Vec<String> = (0..graph.t()).map(|i| ((b'A' + i as u8) as char).to_string()).collect();
    schema
        .prompt(ood_relations)
        .replace("{entities}", &graph.entities().join(", "))
        .replace("{lines}", &lines.join(", "))
}

pub fn render_post_prompt(graph: &RelationalGraph, schema: &DomainSchema) -> String {
    schema
        .post_prompt_template
        .replace("{entities}", &join_entities(graph.entities()))
}

/// Describes every edge once, in a uniformly shuffled order, each flipped to
/// its inverse surface form with probability 1/2, then appends the entity
/// post-prompt. The prompt flag does not affect RNG consumption.
pub fn render_description<R: Rng + ?Sized>(
    graph_id: &str,
    sample_id: &str,
    graph: &RelationalGraph,
    schema: &DomainSchema,
    rng: &mut R,
    opts: &RenderOptions<'_>,
) -> Result<DescribedSample> {
    if let Some(vocab) = opts.vocab {
        if let Some(bad) = graph.entities().iter().find(|e| !vocab.is_single_token(e)) {
            return Err(Error::NotSingleToken(bad.clone()));
        }
    }
    let mut order: Vec<usize> = (0..graph.edges().len()).collect();
    order.shuffle(rng);
    let flips: Vec<bool> = (0..order.len()).map(|_| rng.random_bool(0.5)).collect();
    let sentences = order
        .iter()
        .map(|&e| render_sentence(graph, schema, graph.edges()[e], flips[e], opts.ood_relations))
        .collect::<Result<Vec<_>>>()?;
    let body = sentences.join(" ");
    let post = render_post_prompt(graph, schema);
    let full_text = if opts.no_prompt {
        format!("{body}\n{post}")
    } else {
        format!("{}\n{body}\n{post}", render_prompt(graph, schema, opts.ood_relations))
    };
    Ok(DescribedSample {
        sample_id: sample_id.to_owned(),
        graph_id: graph_id.to_owned(),
        full_text,
        probed_tokens: graph.entities().to_vec(),
        relation_order: order,
        flips,
    })
}

/// Which endpoint of the queried edge the question asks for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryTarget {
    Source,
    Destination,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaSample {
    /// `{sample_id}/{edge index}{s|d}`, unique per question.
    pub qa_id: String,
    pub graph_id: String,
    /// The description the question is appended to.
    pub sample_id: String,
    pub full_text: String,
    pub question: String,
    pub queried_edge: Edge,
    pub target: QueryTarget,
    pub correct_token: String,
}

/// Appends a question about `edge` to a rendered description. The answer
/// must be the unique entity satisfying the query.
pub fn render_qa(
    description: &DescribedSample,
    graph: &RelationalGraph,
    edge: Edge,
    target: QueryTarget,
    schema: &DomainSchema,
    ood_relations: bool,
) -> Result<QaSample> {
    let Some(edge_index) = graph.edges().iter().position(|e| *e == edge) else {
        return Err(Error::QuerySkipped(format!("{edge:?} is not an edge of the graph")));
    };
    let rel = &graph.relation_types()[edge.rel];
    let spec = schema
        .relation(rel, ood_relations)
        .ok_or_else(|| Error::QuerySkipped(format!("unknown relation {rel:?}")))?;
    let (template, answer) = match target {
        QueryTarget::Source => (spec.ask_src.as_ref(), edge.src),
        QueryTarget::Destination => (spec.ask_dst.as_ref(), edge.dst),
    };
    let template = template.ok_or_else(|| Error::QuerySkipped(format!("no {target:?} question for {rel:?}")))?;
    let answers = graph
        .edges()
        .iter()
        .filter(|e| e.rel == edge.rel)
        .filter(|e| match target {
            QueryTarget::Source => e.dst == edge.dst,
            QueryTarget::Destination => e.src == edge.src,
        })
        .count();
    if answers != 1 {
        return Err(Error::QuerySkipped(format!("ambiguous: {answers} entities answer the query")));
    }
    let question = template
        .replace("{src}", &graph.entities()[edge.src])
        .replace("{dst}", &graph.entities()[edge.dst]);
    let side = match target {
        QueryTarget::Source => 's',
        QueryTarget::Destination => 'd',
    };
    Ok(QaSample {
        qa_id: format!("{}/{edge_index}{side}", description.sample_id),
        graph_id: description.graph_id.clone(),
        sample_id: description.sample_id.clone(),
        full_text: format!("{}\n{question}", description.full_text),
        question,
        queried_edge: edge,
        target,
        correct_token: graph.entities()[answer].clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Domain;
    use crate::rng::stream;

    fn gt(edges: &[[usize; 3]], ents: &[&str]) -> RelationalGraph {
        RelationalGraph::new(
            Domain::Ordinality,
            ents.iter().map(|s| s.to_string()).collect(),
            vec!["greater than".into()],
            edges.iter().map(|&e| e.into()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn forward_and_flipped_sentences() {
        let schema = DomainSchema::builtin(Domain::Ordinality);
        let g = gt(&[[0, 1, 0]], &["x", "z"]);
        let e = g.edges()[0];
        assert_eq!(render_sentence(&g, &schema, e, false, false).unwrap(), "x is greater than z.");
        assert_eq!(render_sentence(&g, &schema, e, true, false).unwrap(), "z is less than x.");
    }

    #[test]
    fn single_edge_renders_one_sentence() {
        let schema = DomainSchema::builtin(Domain::Ordinality);
        let g = gt(&[[0, 1, 0]], &["x", "z"]);
        for seed in 0..10 {
            let s = render_description("g", "s", &g, &schema, &mut stream(seed, &[]), &RenderOptions::default()).unwrap();
            let body = s.full_text.lines().rev().nth(1).unwrap();
            assert_eq!(body.matches('.').count(), 1);
            assert!(s.full_text.ends_with("What are x and z?"));
        }
    }

    #[test]
    fn family_surfaces_follow_gender() {
        let schema = DomainSchema::builtin(Domain::Family);
        let g = RelationalGraph::new(
            Domain::Family,
            vec!["James".into(), "Amelia".into(), "Grace".into()],
            vec!["mom of".into(), "dad of".into(), "sibling of".into()],
            vec![Edge::new(1, 0, 0), Edge::new(1, 2, 0), Edge::new(0, 2, 2)],
        )
        .unwrap();
        let r = |e: usize, flip| render_sentence(&g, &schema, g.edges()[e], flip, false).unwrap();
        assert_eq!(r(0, false), "Amelia is the mom of James.");
        assert_eq!(r(0, true), "James is the son of Amelia.");
        assert_eq!(r(1, true), "Grace is the daughter of Amelia.");
        assert_eq!(r(2, false), "James is the brother of Grace.");
        assert_eq!(r(2, true), "Grace is the sister of James.");
        let ood = render_sentence(&g, &schema, g.edges()[0], true, true).unwrap();
        assert_eq!(ood, "James is the offspring of Amelia.");
    }

    #[test]
    fn post_prompt_lists_entities_in_order() {
        let schema = DomainSchema::builtin(Domain::Family);
        let g = RelationalGraph::new(
            Domain::Family,
            vec!["James".into(), "Joseph".into(), "Amelia".into()],
            vec!["mom of".into(), "dad of".into(), "sibling of".into()],
            vec![Edge::new(2, 0, 0), Edge::new(2, 1, 0), Edge::new(0, 1, 2)],
        )
        .unwrap();
        assert_eq!(render_post_prompt(&g, &schema), "Who are James, Joseph, and Amelia?");
    }

    #[test]
    fn vocabulary_check_names_the_entity() {
        let schema = DomainSchema::builtin(Domain::Ordinality);
        let g = gt(&[[0, 1, 0]], &["x", "z"]);
        let vocab = TokenVocabulary::from_lines("\u{120}x\nz\n");
        let opts = RenderOptions {
            vocab: Some(&vocab),
            ..Default::default()
        };
        match render_description("g", "s", &g, &schema, &mut stream(0, &[]), &opts) {
            Err(Error::NotSingleToken(e)) => assert_eq!(e, "z"),
            other => panic!("expected single-token error, got {other:?}"),
        }
        let vocab = TokenVocabulary::from_lines(" x\n\u{2581}z\n");
        let opts = RenderOptions {
            vocab: Some(&vocab),
            ..Default::default()
        };
        assert!(render_description("g", "s", &g, &schema, &mut stream(0, &[]), &opts).is_ok());
    }

    #[test]
    fn qa_answers_and_direction() {
        let schema = DomainSchema::builtin(Domain::Ordinality);
        let g = gt(&[[0, 1, 0]], &["x", "y"]);
        let d = render_description("g", "s", &g, &schema, &mut stream(0, &[]), &RenderOptions::default()).unwrap();
        let e = g.edges()[0];
        let q = render_qa(&d, &g, e, QueryTarget::Source, &schema, false).unwrap();
        assert_eq!(q.question, "Which variable is immediately greater than y?");
        assert_eq!(q.correct_token, "x");
        let q = render_qa(&d, &g, e, QueryTarget::Destination, &schema, false).unwrap();
        assert_eq!(q.correct_token, "y");
        assert!(q.full_text.ends_with("Which variable is immediately less than x?"));
    }

    #[test]
    fn ambiguous_query_is_skipped() {
        let schema = DomainSchema::builtin(Domain::Family);
        let g = RelationalGraph::new(
            Domain::Family,
            vec!["James".into(), "Amelia".into(), "Grace".into()],
            vec!["mom of".into(), "dad of".into(), "sibling of".into()],
            vec![Edge::new(1, 0, 0), Edge::new(1, 2, 0), Edge::new(0, 2, 2)],
        )
        .unwrap();
        let d = render_description("g", "s", &g, &schema, &mut stream(0, &[]), &RenderOptions::default()).unwrap();
        let e = g.edges()[0];
        assert!(render_qa(&d, &g, e, QueryTarget::Source, &schema, false).is_ok());
        assert!(matches!(
            render_qa(&d, &g, e, QueryTarget::Destination, &schema, false),
            Err(Error::QuerySkipped(_))
        ));
        assert!(render_qa(&d, &g, g.edges()[2], QueryTarget::Source, &schema, false).is_err());
    }

    #[test]
    fn join_entities_forms() {
        let v = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert_eq!(join_entities(&v(&["a"])), "a");
        assert_eq!(join_entities(&v(&["a", "b"])), "a and b");
        assert_eq!(join_entities(&v(&["a", "b", "c"])), "a, b, and c");
    }
}
