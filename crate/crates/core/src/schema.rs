//! Per-domain vocabulary: entity pools, relation surface forms, prompts.
//!
//! The five built-in schemas ship as JSON data files; user schemas (other
//! languages, other surface forms) load through [`DomainSchema::from_json`].

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Domain, RelationalGraph};

pub const POOL_SIZE: usize = 13;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
}

/// A sentence template with `{src}` and `{dst}` slots. Gendered templates
/// are keyed on the gender of the sentence subject.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Surface {
    Plain(String),
    Gendered { male: String, female: String },
}

impl Surface {
    pub fn template(&self, subject: Option<Gender>) -> Option<&str> {
        match (self, subject) {
            (Surface::Plain(s), _) => Some(s),
            (Surface::Gendered { male, .. }, Some(Gender::Male)) => Some(male),
            (Surface::Gendered { female, .. }, Some(Gender::Female)) => Some(female),
            (Surface::Gendered { .. }, None) => None,
        }
    }

    fn templates(&self) -> Vec<&str> {
        match self {
            Surface::Plain(s) => vec![s],
            Surface::Gendered { male, female } => vec![male, female],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationRole {
    Parent,
    Sibling,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationSpec {
    /// Canonical relation-type name, shared by the ID and OOD variants.
    pub name: String,
    pub directional: bool,
    /// Renders edge `(src, dst)` with `src` as subject.
    pub forward: Surface,
    /// Renders the same edge with `dst` as subject.
    pub inverse: Surface,
    /// Question whose answer is the edge source.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ask_src: Option<String>,
    /// Question whose answer is the edge destination.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ask_dst: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<RelationRole>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub src_gender: Option<Gender>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSchema {
    pub domain: Domain,
    pub entity_pool: Vec<String>,
    pub entity_pool_ood: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity_genders: Option<Vec<Gender>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity_genders_ood: Option<Vec<Gender>>,
    pub relation_specs: Vec<RelationSpec>,
    pub relation_specs_ood: Vec<RelationSpec>,
    pub prompt_template: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_template_ood: Option<String>,
    pub post_prompt_template: String,
}

impl DomainSchema {
    pub fn builtin(domain: Domain) -> DomainSchema {
        let text = match domain {
            Domain::Ordinality => include_str!("../data/ordinality.json"),
            Domain::Spatial => include_str!("../data/spatial.json"),
            Domain::Thematic => include_str!("../data/thematic.json"),
            Domain::Family => include_str!("../data/family.json"),
            Domain::Metro => include_str!("../data/metro.json"),
        };
        // Built-in data is covered by tests; a failure here is a packaging bug.
        DomainSchema::from_json(text).expect("built-in schema is valid")
    }

    pub fn from_json(text: &str) -> Result<DomainSchema> {
        let schema: DomainSchema = serde_json::from_str(text)?;
        schema.check()?;
        Ok(schema)
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSchema(format!("{}: {m}", self.domain)));
        for (label, pool) in [("entity_pool", &self.entity_pool), ("entity_pool_ood", &self.entity_pool_ood)] {
            if pool.len() != POOL_SIZE {
                return bad(format!("{label} has {} names, expected {POOL_SIZE}", pool.len()));
            }
            if pool.iter().collect::<HashSet<_>>().len() != pool.len() {
                return bad(format!("{label} has duplicate names"));
            }
        }
        let id: HashSet<_> = self.entity_pool.iter().collect();
        if let Some(name) = self.entity_pool_ood.iter().find(|n| id.contains(n)) {
            return bad(format!("{name:?} appears in both pools"));
        }
        for (genders, pool) in [
            (&self.entity_genders, &self.entity_pool),
            (&self.entity_genders_ood, &self.entity_pool_ood),
        ] {
            if let Some(g) = genders {
                if g.len() != pool.len() {
                    return bad("gender list length differs from its pool".into());
                }
            }
        }
        let names = |specs: &[RelationSpec]| specs.iter().map(|s| s.name.clone()).collect::<Vec<_>>();
        if names(&self.relation_specs) != names(&self.relation_specs_ood) {
            return bad("ID and OOD relation specs must list the same relation names".into());
        }
        for spec in self.relation_specs.iter().chain(&self.relation_specs_ood) {
            for tpl in spec.forward.templates().into_iter().chain(spec.inverse.templates()) {
                if !tpl.contains("{src}") || !tpl.contains("{dst}") {
                    return bad(format!("template {tpl:?} of {:?} lacks a {{src}}/{{dst}} slot", spec.name));
                }
            }
        }
        if !self.post_prompt_template.contains("{entities}") {
            return bad("post-prompt template lacks an {entities} slot".into());
        }
        Ok(())
    }

    pub fn pool(&self, ood: bool) -> &[String] {
        if ood {
            &self.entity_pool_ood
        } else {
            &self.entity_pool
        }
    }

    pub fn genders(&self, ood: bool) -> Option<&[Gender]> {
        if ood {
            self.entity_genders_ood.as_deref()
        } else {
            self.entity_genders.as_deref()
        }
    }

    pub fn relation_specs(&self, ood: bool) -> &[RelationSpec] {
        if ood {
            &self.relation_specs_ood
        } else {
            &self.relation_specs
        }
    }

    pub fn prompt(&self, ood_relations: bool) -> &str {
        match (&self.prompt_template_ood, ood_relations) {
            (Some(p), true) => p,
            _ => &self.prompt_template,
        }
    }

    /// Gender of an entity from either pool.
    pub fn gender_of(&self, name: &str) -> Option<Gender> {
        [false, true].into_iter().find_map(|ood| {
            let idx = self.pool(ood).iter().position(|n| n == name)?;
            self.genders(ood).map(|g| g[idx])
        })
    }

    pub fn relation(&self, name: &str, ood: bool) -> Option<&RelationSpec> {
        self.relation_specs(ood).iter().find(|s| s.name == name)
    }

    /// Indices of the graph's relation types that carry a prototype
    /// direction. Unknown relation names count as directional.
    pub fn directional_types(&self, graph: &RelationalGraph) -> Vec<usize> {
        graph
            .relation_types()
            .iter()
            .enumerate()
            .filter(|(_, name)| self.relation(name, false).is_none_or(|s| s.directional))
            .map(|(i, _)| i)
            .collect()
    }
}
