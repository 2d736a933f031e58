//! Experiment configuration: JSON merged over per-system defaults.
//!
//! A config file names the system kind; every field it leaves out is taken
//! from [`ExperimentConfig::default_for`]. Unknown keys are rejected and
//! errors carry the dotted path of the offending field.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::actuation::{min_width, ActuatorDesign};
use crate::error::{Result, StsoError};
use crate::optimizer::{AdamHyper, CostSpec, GradientMode, LearningRates, Region, TrainConfig, TrainerState};
use crate::policy::{Architecture, Policy};
use crate::rng::{Purpose, StreamKey};
use crate::systems::{build_system, Dynamics, SystemConfig, SystemKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Network {
    Mlp { hidden: Vec<usize> },
    /// Components are stacked as input channels.
    Cnn { filters: [usize; 2], kernel: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    Xavier,
    Zeros,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub network: Network,
    pub init: Init,
    /// Start the output layer at zero so the initial policy is exactly zero.
    pub zero_output_layer: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuatorSpec {
    pub count: usize,
    /// Uniform initial placement range per axis, in domain coordinates.
    pub init_range: Vec<[f64; 2]>,
    /// Initial footprint width σ.
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSpec {
    pub iterations: u64,
    pub rollouts: usize,
    pub rates: LearningRates,
    pub gradient_mode: GradientMode,
    pub max_diverged_fraction: f64,
    pub adam: AdamHyper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Run directory; `--out` takes precedence.
    pub dir: Option<String>,
    /// Checkpoint every this many iterations (0 disables periodic ones).
    pub checkpoint_every: u64,
    /// Rollouts in the final evaluation ensembles.
    pub evaluation_rollouts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub system: SystemConfig,
    pub cost: CostSpec,
    pub policy: PolicySpec,
    pub actuators: ActuatorSpec,
    pub optimizer: OptimizerSpec,
    pub seed: u64,
    pub output: OutputSpec,
    /// Dotted paths whose values come from the published experiments.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub paper_values: Vec<String>,
}

/// Short names accepted by `--override`.
pub const OVERRIDE_ALIASES: [(&str, &str); 9] = [
    ("K", "optimizer.iterations"),
    ("R", "optimizer.rollouts"),
    ("J", "system.points"),
    ("T", "system.horizon"),
    ("dt", "system.dt"),
    ("rho", "system.rho"),
    ("N", "actuators.count"),
    ("mode", "optimizer.gradient_mode"),
    ("seed", "seed"),
];

fn region(lower: &[f64], upper: &[f64], target: f64, weight: f64, component: usize) -> Region {
    Region { lower: lower.to_vec(), upper: upper.to_vec(), target, weight, component }
}

impl ExperimentConfig {
    pub fn default_for(kind: SystemKind) -> Self {
        let system = SystemConfig::default_for(kind);
        let a = system.extent[0];
        let mlp = |hidden: &[usize]| PolicySpec {
            network: Network::Mlp { hidden: hidden.to_vec() },
            init: Init::Xavier,
            zero_output_layer: true,
        };
        let middle = vec![[0.4 * a, 0.6 * a]];
        let (regions, policy, actuators, iterations, rollouts) = match kind {
            SystemKind::Heat1d => (
                vec![region(&[0.2], &[0.3], 1.0, 0.01, 0), region(&[0.7], &[0.8], 1.0, 0.01, 0)],
                mlp(&[32, 32]),
                ActuatorSpec { count: 3, init_range: middle, width: 0.1 },
                3000,
                200,
            ),
            SystemKind::Burgers1d => (
                vec![
                    region(&[0.15], &[0.25], 1.0, 0.01, 0),
                    region(&[0.45], &[0.55], 1.0, 0.01, 0),
                    region(&[0.75], &[0.85], 1.0, 0.01, 0),
                ],
                mlp(&[32, 32]),
                ActuatorSpec { count: 4, init_range: middle, width: 0.1 },
                3000,
                200,
            ),
            SystemKind::Nagumo1d => (
                vec![region(&[0.6 * a], &[a], 0.0, 0.01, 0)],
                mlp(&[32, 32]),
                ActuatorSpec { count: 3, init_range: middle, width: 0.1 * a },
                2000,
                100,
            ),
            SystemKind::EulerBernoulli1d => (
                vec![region(&[0.0], &[a], 0.0, 1.0, 0)],
                mlp(&[64, 64]),
                ActuatorSpec { count: 3, init_range: middle, width: 0.1 },
                3500,
                100,
            ),
            SystemKind::Heat2d => {
                let b = |x: f64, y: f64, t: f64| region(&[x, y], &[x + 0.2, y + 0.2], t, 0.01, 0);
                (
                    vec![b(0.1, 0.1, 1.0), b(0.7, 0.1, 1.0), b(0.1, 0.7, 1.0), b(0.7, 0.7, 1.0), b(0.4, 0.4, 0.5)],
                    PolicySpec { network: Network::Cnn { filters: [8, 16], kernel: 3 }, init: Init::Xavier, zero_output_layer: false },
                    ActuatorSpec { count: 5, init_range: vec![[0.0, 1.0], [0.0, 1.0]], width: 0.1 },
                    5000,
                    100,
                )
            }
            SystemKind::SoftLimb2d => {
                let (w, h) = (system.extent[0], system.extent[1]);
                (
                    vec![region(&[w, 0.0], &[w, h], 0.0, 0.01, 0), region(&[w, 0.0], &[w, h], 1.0, 0.01, 1)],
                    PolicySpec { network: Network::Cnn { filters: [8, 16], kernel: 3 }, init: Init::Xavier, zero_output_layer: true },
                    ActuatorSpec { count: 10, init_range: vec![[0.0, w], [0.0, h]], width: 1.0 },
                    4000,
                    50,
                )
            }
        };
        ExperimentConfig {
            name: kind.name().to_string(),
            system,
            cost: CostSpec { regions },
            policy,
            actuators,
            optimizer: OptimizerSpec {
                iterations,
                rollouts,
                rates: LearningRates::default(),
                gradient_mode: GradientMode::default(),
                max_diverged_fraction: 0.2,
                adam: AdamHyper::default(),
            },
            seed: 0,
            output: OutputSpec { dir: None, checkpoint_every: 100, evaluation_rollouts: 20 },
            paper_values: Vec::new(),
        }
    }

    /// Parse a JSON document, apply `key=value` overrides and fill defaults.
    pub fn from_json_str(text: &str, overrides: &[String]) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| StsoError::config("<root>", e.to_string()))?;
        Self::from_value(value, overrides)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| StsoError::config("<file>", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text, overrides)
    }

    pub fn from_value(mut value: Value, overrides: &[String]) -> Result<Self> {
        if !value.is_object() {
            return Err(StsoError::config("<root>", "expected a JSON object"));
        }
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let kind_value = value
            .get("system")
            .ok_or_else(|| StsoError::config("system", "missing field"))?
            .get("kind")
            .ok_or_else(|| StsoError::config("system.kind", "missing field"))?
            .clone();
        let kind: SystemKind =
            serde_json::from_value(kind_value).map_err(|e| StsoError::config("system.kind", e.to_string()))?;
        let mut merged = serde_json::to_value(Self::default_for(kind)).expect("defaults serialize");
        merge(&mut merged, value);
        let cfg: Self = serde_path_to_error::deserialize(merged).map_err(|e| {
            let path = e.path().to_string();
            StsoError::config(path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, path: &str, msg: &str| if ok { Ok(()) } else { Err(StsoError::config(path, msg)) };
        self.system.validate()?;
        let grid = self.system.grid()?;
        let components = build_system(&self.system)?.channel_names().len();
        self.cost.compile(&grid, components)?;
        check(self.actuators.count > 0, "actuators.count", "need at least one actuator")?;
        check(self.actuators.width > 0.0 && self.actuators.width.is_finite(), "actuators.width", "must be positive")?;
        check(self.actuators.init_range.len() == grid.dim(), "actuators.init_range", "need one range per axis")?;
        for (axis, [lo, hi]) in self.actuators.init_range.iter().enumerate() {
            check(
                lo <= hi && *lo >= 0.0 && *hi <= grid.extent(axis),
                &format!("actuators.init_range[{axis}]"),
                "range must lie inside the domain",
            )?;
        }
        check(self.optimizer.rollouts > 0, "optimizer.rollouts", "need at least one rollout")?;
        let r = &self.optimizer.rates;
        for (name, v) in [("policy", r.policy), ("placement", r.placement), ("width", r.width)] {
            check(v >= 0.0 && v.is_finite(), &format!("optimizer.rates.{name}"), "must be finite and nonnegative")?;
        }
        let f = self.optimizer.max_diverged_fraction;
        check((0.0..=1.0).contains(&f), "optimizer.max_diverged_fraction", "must lie in [0, 1]")?;
        let h = &self.optimizer.adam;
        check((0.0..1.0).contains(&h.beta1), "optimizer.adam.beta1", "must lie in [0, 1)")?;
        check((0.0..1.0).contains(&h.beta2), "optimizer.adam.beta2", "must lie in [0, 1)")?;
        check(h.epsilon > 0.0, "optimizer.adam.epsilon", "must be positive")?;
        check(self.output.evaluation_rollouts > 0, "output.evaluation_rollouts", "need at least one rollout")?;
        match &self.policy.network {
            Network::Mlp { hidden } => check(!hidden.contains(&0), "policy.network.hidden", "sizes must be positive")?,
            Network::Cnn { filters, kernel } => {
                check(grid.dim() == 2, "policy.network", "convolutional policies need a 2D grid")?;
                check(filters[0] > 0 && filters[1] > 0, "policy.network.filters", "must be positive")?;
                check(kernel % 2 == 1, "policy.network.kernel", "must be odd")?;
            }
        }
        Ok(())
    }

    pub fn build_system(&self) -> Result<Box<dyn Dynamics>> {
        build_system(&self.system)
    }

    pub fn architecture(&self) -> Result<Architecture> {
        let grid = self.system.grid()?;
        let channels = build_system(&self.system)?.channel_names().len();
        Ok(match &self.policy.network {
            Network::Mlp { hidden } => Architecture::mlp(grid.node_count() * channels, hidden, self.actuators.count),
            Network::Cnn { filters, kernel } => Architecture::Cnn {
                channels,
                height: grid.points(1),
                width: grid.points(0),
                filters: *filters,
                kernel: *kernel,
                outputs: self.actuators.count,
            },
        })
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            iterations: self.optimizer.iterations,
            rollouts: self.optimizer.rollouts,
            rates: self.optimizer.rates,
            adam: self.optimizer.adam,
            mode: self.optimizer.gradient_mode,
            seed: self.seed,
            max_diverged_fraction: self.optimizer.max_diverged_fraction,
        }
    }

    /// Policy and actuators at iteration zero, drawn from the seed.
    pub fn initial_state(&self) -> Result<TrainerState> {
        let arch = self.architecture()?;
        let policy = match self.policy.init {
            Init::Zeros => Policy::zeros(arch)?,
            Init::Xavier => {
                let mut rng = StreamKey::new(self.seed, Purpose::PolicyInit).rng();
                Policy::xavier(arch, self.policy.zero_output_layer, &mut rng)?
            }
        };
        let grid = self.system.grid()?;
        let mut rng = StreamKey::new(self.seed, Purpose::ActuatorInit).rng();
        let width = self.actuators.width.max(min_width(&grid));
        let design = ActuatorDesign::random(&grid, self.actuators.count, &self.actuators.init_range, width, &mut rng)?;
        Ok(TrainerState::new(policy, design, grid.dim(), &self.train_config()))
    }

    /// Every leaf path of the resolved config, tagged with where its value
    /// came from: `paper`, `override` or `artifact-default`.
    pub fn provenance(&self, overrides: &[String]) -> Result<Vec<(String, &'static str)>> {
        let value = serde_json::to_value(self)?;
        let mut leaves = Vec::new();
        collect_leaves(&value, String::new(), &mut leaves);
        let overridden: BTreeSet<String> =
            overrides.iter().filter_map(|o| o.split_once('=')).map(|(k, _)| resolve_alias(k.trim()).to_string()).collect();
        let paper: BTreeSet<&str> = self.paper_values.iter().map(String::as_str).collect();
        Ok(leaves
            .into_iter()
            .filter(|p| !p.starts_with("paper_values"))
            .map(|p| {
                let tag = if overridden.iter().any(|o| covers(o, &p)) {
                    "override"
                } else if paper.iter().any(|o| covers(o, &p)) {
                    "paper"
                } else {
                    "artifact-default"
                };
                (p, tag)
            })
            .collect())
    }
}

/// True when `prefix` names `path` or one of its ancestors.
fn covers(prefix: &str, path: &str) -> bool {
    path == prefix || path.strip_prefix(prefix).is_some_and(|rest| rest.starts_with('.') || rest.starts_with('['))
}

fn collect_leaves(v: &Value, path: String, out: &mut Vec<String>) {
    match v {
        Value::Object(m) => {
            for (k, child) in m {
                let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                collect_leaves(child, p, out);
            }
        }
        Value::Array(a) if a.iter().any(|x| x.is_object()) => {
            for (i, child) in a.iter().enumerate() {
                collect_leaves(child, format!("{path}[{i}]"), out);
            }
        }
        _ => out.push(path),
    }
}

pub fn resolve_alias(key: &str) -> &str {
    OVERRIDE_ALIASES.iter().find(|(k, _)| *k == key).map_or(key, |(_, p)| p)
}

/// Set a dotted path inside a JSON document. The value is parsed as JSON
/// and taken as a string when that fails.
pub fn apply_override(doc: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| StsoError::config(spec, "override must look like key=value"))?;
    let path = resolve_alias(key.trim());
    if path.is_empty() || path.split('.').any(str::is_empty) {
        return Err(StsoError::config(spec, "empty override key"));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    let mut node = doc;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| StsoError::config(parts[..i].join("."), "cannot override inside a non-object"))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    Ok(())
}

/// Deep-merge `patch` into `base`. Objects merge key by key unless the
/// patch carries a different `type`/`kind` tag, in which case it replaces
/// the base wholesale; everything else replaces.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() && same_tag(slot, &v) => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, p) => *slot = p,
    }
}

fn same_tag(a: &Value, b: &Value) -> bool {
    ["type", "kind"].iter().all(|t| match (a.get(t), b.get(t)) {
        (Some(x), Some(y)) => x == y,
        _ => true,
    })
}
