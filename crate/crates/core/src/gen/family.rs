use rand::seq::IndexedRandom;
use rand::Rng;

use super::MAX_ATTEMPTS;
use crate::error::{Error, Result};
use crate::graph::{Edge, RelationalGraph};
use crate::schema::{DomainSchema, Gender, RelationRole};

/// Parentage spans at most this many generations of parent links.
const MAX_GENERATIONS: i32 = 2;

struct Person {
    pool_idx: usize,
    gender: Gender,
    level: i32,
    group: usize,
}

/// Children sharing one parent set (possibly empty).
#[derive(Default)]
struct SiblingGroup {
    parents: Vec<usize>,
    members: Vec<usize>,
}

#[derive(Clone, Copy)]
enum Move {
    Child,
    Parent,
    Sibling,
}

struct Tree {
    people: Vec<Person>,
    groups: Vec<SiblingGroup>,
    used: Vec<bool>,
}

impl Tree {
    fn level_span_ok(&self, level: i32) -> bool {
        let lo = self.people.iter().map(|p| p.level).min().unwrap_or(level).min(level);
        let hi = self.people.iter().map(|p| p.level).max().unwrap_or(level).max(level);
        hi - lo <= MAX_GENERATIONS
    }

    fn free_name<R: Rng + ?Sized>(&self, genders: &[Gender], want: Option<Gender>, rng: &mut R) -> Option<usize> {
        let free: Vec<usize> = (0..genders.len())
            .filter(|&i| !self.used[i] && want.is_none_or(|g| genders[i] == g))
            .collect();
        free.choose(rng).copied()
    }

    fn add_person(&mut self, pool_idx: usize, gender: Gender, level: i32, group: usize) -> usize {
        self.used[pool_idx] = true;
        let id = self.people.len();
        self.people.push(Person {
            pool_idx,
            gender,
            level,
            group,
        });
        self.groups[group].members.push(id);
        id
    }

    /// One growth step; `false` when the drawn move is infeasible.
    fn try_grow<R: Rng + ?Sized>(&mut self, genders: &[Gender], rng: &mut R) -> bool {
        let anchor = rng.random_range(0..self.people.len());
        let mv = *[Move::Child, Move::Parent, Move::Sibling].choose(rng).unwrap();
        match mv {
            Move::Child => {
                let level = self.people[anchor].level + 1;
                if !self.level_span_ok(level) {
                    return false;
                }
                // Join a sibling group the anchor already parents, or start a
                // single-parent one.
                let mut options: Vec<Option<usize>> = self
                    .groups
                    .iter()
                    .enumerate()
                    .filter(|(_, g)| g.parents.contains(&anchor))
                    .map(|(i, _)| Some(i))
                    .collect();
                if !options.iter().flatten().any(|&g| self.groups[g].parents.len() == 1) {
                    options.push(None);
                }
                let choice = *options.choose(rng).unwrap();
                let Some(idx) = self.free_name(genders, None, rng) else {
                    return false;
                };
                let group = choice.unwrap_or_else(|| {
                    self.groups.push(SiblingGroup {
                        parents: vec![anchor],
                        members: Vec::new(),
                    });
                    self.groups.len() - 1
                });
                self.add_person(idx, genders[idx], level, group);
                true
            }
            Move::Parent => {
                let group = self.people[anchor].group;
                let level = self.people[anchor].level - 1;
                let want = match self.groups[group].parents[..] {
                    [] => None,
                    [p] => Some(match self.people[p].gender {
                        Gender::Male => Gender::Female,
                        Gender::Female => Gender::Male,
                    }),
                    _ => return false,
                };
                if !self.level_span_ok(level) {
                    return false;
                }
                let Some(idx) = self.free_name(genders, want, rng) else {
                    return false;
                };
                self.groups.push(SiblingGroup::default());
                let own = self.groups.len() - 1;
                let id = self.add_person(idx, genders[idx], level, own);
                self.groups[group].parents.push(id);
                true
            }
            Move::Sibling => {
                let Some(idx) = self.free_name(genders, None, rng) else {
                    return false;
                };
                let (group, level) = (self.people[anchor].group, self.people[anchor].level);
                self.add_person(idx, genders[idx], level, group);
                true
            }
        }
    }
}

/// Samples a connected family tree of `n` people.
///
/// Starts from one person and grows by attaching a child, a parent or a
/// sibling to a random member. Siblings share their full parent set, each
/// child has at most one mom and one dad, parentage spans at most two
/// generations, and every pair of co-children gets a sibling edge. Gender
/// is fixed by the name pool.
pub fn sample_family_tree<R: Rng + ?Sized>(
    schema: &DomainSchema,
    ood_entities: bool,
    n: usize,
    rng: &mut R,
) -> Result<RelationalGraph> {
    if !(3..=13).contains(&n) {
        return Err(Error::Config(format!("family trees need 3..=13 people, got {n}")));
    }
    let pool = schema.pool(ood_entities);
    let genders = schema
        .genders(ood_entities)
        .ok_or_else(|| Error::InvalidSchema("family schema needs entity genders".into()))?;
    let specs = schema.relation_specs(false);
    let find = |role: RelationRole, gender: Option<Gender>| {
        specs
            .iter()
            .position(|s| s.role == Some(role) && (gender.is_none() || s.src_gender == gender))
            .ok_or_else(|| Error::InvalidSchema(format!("family schema lacks a {role:?} relation")))
    };
    let mom = find(RelationRole::Parent, Some(Gender::Female))?;
    let dad = find(RelationRole::Parent, Some(Gender::Male))?;
    let sibling = find(RelationRole::Sibling, None)?;

    let mut tree = Tree {
        people: Vec::new(),
        groups: vec![SiblingGroup::default()],
        used: vec![false; pool.len()],
    };
    let first = rng.random_range(0..pool.len());
    tree.add_person(first, genders[first], 0, 0);
    let mut attempts = 0;
    while tree.people.len() < n {
        attempts += 1;
        if attempts > MAX_ATTEMPTS {
            return Err(Error::SamplingFailed {
                what: format!("family tree of {n} people"),
                attempts: MAX_ATTEMPTS,
            });
        }
        tree.try_grow(genders, rng);
    }

    // Canonical order: pool order.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&p| tree.people[p].pool_idx);
    let mut canon = vec![0; n];
    for (c, &p) in order.iter().enumerate() {
        canon[p] = c;
    }
    let mut edges = Vec::new();
    for g in &tree.groups {
        for &p in &g.parents {
            let rel = match tree.people[p].gender {
                Gender::Female => mom,
                Gender::Male => dad,
            };
            for &m in &g.members {
                edges.push(Edge::new(canon[p], canon[m], rel));
            }
        }
        for (i, &a) in g.members.iter().enumerate() {
            for &b in &g.members[i + 1..] {
                let (a, b) = (canon[a].min(canon[b]), canon[a].max(canon[b]));
                edges.push(Edge::new(a, b, sibling));
            }
        }
    }
    edges.sort();
    RelationalGraph::new(
        schema.domain,
        order.iter().map(|&p| pool[tree.people[p].pool_idx].clone()).collect(),
        specs.iter().map(|s| s.name.clone()).collect(),
        edges,
    )
}
