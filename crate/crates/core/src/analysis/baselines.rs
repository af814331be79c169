//! Chance-level and reduced-capacity controls.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::eval::{eval_probe, Condition, EvalOptions, EvalReport};
use crate::error::Result;
use crate::probe::{train, PolarProbe, ProbeData, TrainConfig};
use crate::rng::stream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Control {
    /// Standard Gaussian activations, full training.
    RandomActivations,
    /// `B` frozen at the truncated identity; only prototypes train.
    IdentityProbe,
    /// Every graph paired with another graph's activations.
    ShuffledLabels,
}

impl Control {
    pub const ALL: [Control; 3] = [Control::RandomActivations, Control::IdentityProbe, Control::ShuffledLabels];

    pub fn as_str(self) -> &'static str {
        match self {
            Control::RandomActivations => "random-activations",
            Control::IdentityProbe => "identity-probe",
            Control::ShuffledLabels => "shuffled-labels",
        }
    }
}

/// Replaces every activation matrix with i.i.d. standard Gaussian entries,
/// rounded through `f32` like stored activations.
pub fn randomize_activations<R: Rng + ?Sized>(data: &ProbeData, rng: &mut R) -> ProbeData {
    let mut out = data.clone();
    for g in &mut out.graphs {
        for s in &mut g.samples {
            let (n, d) = s.h.shape();
            s.h = DMatrix::from_fn(n, d, |_, _| {
                let x: f64 = StandardNormal.sample(rng);
                x as f32 as f64
            });
        }
    }
    out
}

/// Hands each graph the descriptions of a different graph with the same
/// entity count (a random derangement within each size class). Size
/// classes holding a single graph are left unchanged.
pub fn shuffle_labels<R: Rng + ?Sized>(data: &ProbeData, rng: &mut R) -> ProbeData {
    let mut classes: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, g) in data.graphs.iter().enumerate() {
        classes.entry(g.target.n).or_default().push(i);
    }
    let mut source: Vec<usize> = (0..data.graphs.len()).collect();
    for members in classes.values() {
        if members.len() < 2 {
            continue;
        }
        let mut perm = members.clone();
        // Sattolo's algorithm yields a single cycle, hence no fixed point.
        for i in (1..perm.len()).rev() {
            let j = rng.random_range(0..i);
            perm.swap(i, j);
        }
        for (k, &g) in members.iter().enumerate() {
            source[g] = perm[k];
        }
    }
    let mut out = data.clone();
    for (g, &src) in source.iter().enumerate() {
        out.graphs[g].samples = data.graphs[src].samples.clone();
    }
    out
}

pub struct BaselineInputs<'a> {
    pub train: &'a ProbeData,
    pub validation: Option<&'a ProbeData>,
    pub test: &'a ProbeData,
    pub config: &'a TrainConfig,
    pub condition: Condition,
    pub options: EvalOptions,
}

/// Trains and evaluates one control. Streams are derived from the
/// training seed, so controls are reproducible and independent.
pub fn run_control(control: Control, inputs: &BaselineInputs) -> Result<EvalReport> {
    let cfg = inputs.config;
    let tag = control as u64;
    let mut rng = stream(cfg.seed, &[0xba5e, tag]);
    let (train_data, val_data, test_data) = match control {
        Control::RandomActivations => (
            randomize_activations(inputs.train, &mut rng),
            inputs.validation.map(|v| randomize_activations(v, &mut rng)),
            randomize_activations(inputs.test, &mut rng),
        ),
        Control::ShuffledLabels => (
            shuffle_labels(inputs.train, &mut rng),
            inputs.validation.map(|v| shuffle_labels(v, &mut rng)),
            shuffle_labels(inputs.test, &mut rng),
        ),
        Control::IdentityProbe => (inputs.train.clone(), inputs.validation.cloned(), inputs.test.clone()),
    };
    let k = cfg.rank.min(train_data.d);
    let t = train_data.t();
    let mut init_rng = stream(cfg.seed, &[0x1417, tag]);
    let (init, run_cfg) = match control {
        Control::IdentityProbe => (
            PolarProbe::truncated_identity(k, train_data.d, t, &mut init_rng)?,
            TrainConfig {
                freeze_probe: true,
                ..cfg.clone()
            },
        ),
        _ => (PolarProbe::init(k, train_data.d, t, &mut init_rng)?, cfg.clone()),
    };
    let outcome = train(init, &train_data, val_data.as_ref(), &run_cfg)?;
    let mut condition = inputs.condition.clone();
    condition.label = format!("{}:{}", inputs.condition.label, control.as_str());
    condition.rank = k;
    eval_probe(&outcome.probe, &test_data, condition, &inputs.options)
}

pub fn run_baselines(inputs: &BaselineInputs) -> Result<Vec<EvalReport>> {
    Control::ALL.iter().map(|&c| run_control(c, inputs)).collect()
}
