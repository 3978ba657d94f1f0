//! Network description and simulation plan, read from TOML.
//!
//! ```toml
//! [gas]                      # defaults for every pipe
//! gas_constant = 518.3
//! temperature = 283.15
//! compressibility = 0.0
//!
//! [[nodes]]
//! id = "S"
//! kind = "source"            # source | sink | junction
//! profile = [[0.0, 6.0e6]]   # (time [s], value): pressure [Pa] or demand [kg/s]
//!
//! [[pipes]]
//! id = "P1"
//! from = "S"
//! to = "J1"
//! length = 40000.0
//! diameter = 0.8
//! friction = 0.01
//!
//! [simulation]
//! horizon = 14400.0
//! windows = 4
//!
//! [simulation.refinement]
//! tol = 1e-4
//! ```
//!
//! Profiles are interpolated linearly and held constant outside their range.
//! A sink withdraws its demand through its single pipe; sources fix pressure.

use std::collections::{HashMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cost::CostParams;
use crate::error::{Error, Result};
use crate::error_model::StrategyConfig;
use crate::hierarchy::{PipeConfig, STANDARD_GRAVITY};
use crate::level::ModelLevel;
use crate::strategies::Strategy;

/// Piecewise-linear time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct Profile {
    points: Vec<[f64; 2]>,
}

impl Profile {
    pub fn constant(value: f64) -> Self {
        Profile {
            points: vec![[0.0, value]],
        }
    }

    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::config(
                "profile needs at least one (time, value) pair",
            ));
        }
        if points
            .iter()
            .any(|p| !p[0].is_finite() || !p[1].is_finite())
        {
            return Err(Error::config("profile entries must be finite"));
        }
        if points.windows(2).any(|w| !(w[1][0] > w[0][0])) {
            return Err(Error::config("profile times must be strictly increasing"));
        }
        Ok(Profile { points })
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn at(&self, t: f64) -> f64 {
        let p = &self.points;
        let k = p.partition_point(|q| q[0] <= t);
        if k == 0 {
            return p[0][1];
        }
        if k == p.len() {
            return p[k - 1][1];
        }
        let ([t0, v0], [t1, v1]) = (p[k - 1], p[k]);
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    fn min(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p[1])
            .fold(f64::INFINITY, f64::min)
    }
}

impl TryFrom<Vec<[f64; 2]>> for Profile {
    type Error = Error;
    fn try_from(points: Vec<[f64; 2]>) -> Result<Self> {
        Profile::new(points)
    }
}

impl From<Profile> for Vec<[f64; 2]> {
    fn from(p: Profile) -> Self {
        p.points
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    /// Prescribed pressure [Pa].
    Source,
    /// Prescribed withdrawal [kg/s].
    Sink,
    /// Pressure continuity and mass balance.
    Junction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<Profile>,
}

/// Gas properties shared by all pipes unless a pipe overrides them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GasDefaults {
    pub gas_constant: f64,
    pub temperature: f64,
    pub compressibility: f64,
    pub gravity: f64,
}

impl Default for GasDefaults {
    fn default() -> Self {
        GasDefaults {
            gas_constant: 518.3,
            temperature: 283.15,
            compressibility: 0.0,
            gravity: STANDARD_GRAVITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipeSpec {
    pub id: String,
    pub from: String,
    pub to: String,
    pub length: f64,
    pub diameter: f64,
    pub friction: f64,
    #[serde(default)]
    pub slope: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gas_constant: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compressibility: Option<f64>,
    /// Initial model, overriding the plan.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelLevel>,
    /// Initial spatial nodes, overriding the plan.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_x: Option<u64>,
    /// Initial time steps per window, overriding the plan.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_t: Option<u64>,
}

/// Quantity whose error the adaptive loop controls.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetFunctional {
    /// Time-integrated mass withdrawn at sinks [kg].
    #[default]
    SinkOutflow,
    /// Time-integrated mass injected at sources [kg].
    SourceInflow,
    /// Time-integrated sum of sink pressures [Pa s].
    SinkPressure,
}

impl TargetFunctional {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "sink_outflow" => Some(TargetFunctional::SinkOutflow),
            "source_inflow" => Some(TargetFunctional::SourceInflow),
            "sink_pressure" => Some(TargetFunctional::SinkPressure),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            TargetFunctional::SinkOutflow => "sink_outflow",
            TargetFunctional::SourceInflow => "source_inflow",
            TargetFunctional::SinkPressure => "sink_pressure",
        }
    }
}

/// How a run is windowed, initialised and refined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationPlan {
    /// Simulated time [s].
    pub horizon: f64,
    /// Number of equal windows.
    pub windows: usize,
    /// Initial model of every pipe.
    pub model: ModelLevel,
    /// Initial spatial nodes per pipe.
    pub n_x: u64,
    /// Initial time steps per pipe and window.
    pub n_t: u64,
    pub strategy: Strategy,
    pub functional: TargetFunctional,
    /// Coarsening keeps the predicted error below this share of `tol`.
    pub coarsening_headroom: f64,
    /// Simulations per window before giving up.
    pub max_passes: usize,
    pub reference_space_factor: u64,
    pub reference_time_factor: u64,
    /// Relative tolerance, kappa, phi and the remaining refinement constants.
    /// `target_value` is replaced by the functional of each window.
    pub refinement: StrategyConfig,
    pub cost: CostParams,
}

impl Default for SimulationPlan {
    fn default() -> Self {
        SimulationPlan {
            horizon: 14_400.0,
            windows: 4,
            model: ModelLevel::Algebraic,
            n_x: 5,
            n_t: 4,
            strategy: Strategy::MaximalError,
            functional: TargetFunctional::default(),
            coarsening_headroom: 0.5,
            max_passes: 8,
            reference_space_factor: 8,
            reference_time_factor: 8,
            refinement: StrategyConfig::default(),
            cost: CostParams::default(),
        }
    }
}

impl SimulationPlan {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::config("horizon must be positive"));
        }
        if self.windows < 1 {
            return Err(Error::config("at least one window is required"));
        }
        if self.n_x < 2 || self.n_t < 1 {
            return Err(Error::config(
                "meshes need at least two nodes and one time step",
            ));
        }
        if !(self.coarsening_headroom > 0.0 && self.coarsening_headroom < 1.0) {
            return Err(Error::config("coarsening_headroom must lie in (0, 1)"));
        }
        if self.max_passes < 1 {
            return Err(Error::config("max_passes must be positive"));
        }
        if self.reference_space_factor < 1 || self.reference_time_factor < 1 {
            return Err(Error::config(
                "reference refinement factors must be positive",
            ));
        }
        self.refinement.validate()?;
        self.cost.validate()
    }

    pub fn window_length(&self) -> f64 {
        self.horizon / self.windows as f64
    }

    pub fn window_bounds(&self, index: usize) -> (f64, f64) {
        let len = self.window_length();
        let end = if index + 1 == self.windows {
            self.horizon
        } else {
            len * (index + 1) as f64
        };
        (len * index as f64, end)
    }
}

/// Where a pipe end is attached.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndKind {
    Source,
    Sink,
    /// Index into the junction unknowns.
    Junction(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pipe {
    pub id: String,
    pub from: usize,
    pub to: usize,
    pub config: PipeConfig,
    pub initial_model: ModelLevel,
    pub initial_n_x: u64,
    pub initial_n_t: u64,
}

/// Validated network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    pub nodes: Vec<Node>,
    pub pipes: Vec<Pipe>,
    /// Node index of each junction unknown.
    pub junctions: Vec<usize>,
    junction_of: Vec<Option<usize>>,
}

impl NetworkTopology {
    pub fn node_kind(&self, node: usize) -> NodeKind {
        self.nodes[node].kind
    }

    pub fn end_kind(&self, node: usize) -> EndKind {
        match self.nodes[node].kind {
            NodeKind::Source => EndKind::Source,
            NodeKind::Sink => EndKind::Sink,
            NodeKind::Junction => {
                EndKind::Junction(self.junction_of[node].expect("junction index"))
            }
        }
    }

    /// Node value at `t`: pressure for sources, demand for sinks, 0 for junctions.
    pub fn node_value(&self, node: usize, t: f64) -> f64 {
        self.nodes[node].profile.as_ref().map_or(0.0, |p| p.at(t))
    }

    pub fn sources(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].kind == NodeKind::Source)
    }

    fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        let mut degree = vec![0usize; n];
        let mut adjacency = vec![Vec::new(); n];
        for p in &self.pipes {
            p.config
                .validate()
                .map_err(|e| Error::config(format!("pipe {}: {}", p.id, e.root())))?;
            if p.from == p.to {
                return Err(Error::config(format!(
                    "pipe {} connects node {} to itself",
                    p.id, self.nodes[p.from].id
                )));
            }
            if p.initial_n_x < 2 || p.initial_n_t < 1 {
                return Err(Error::config(format!(
                    "pipe {}: mesh needs two nodes and one step",
                    p.id
                )));
            }
            degree[p.from] += 1;
            degree[p.to] += 1;
            adjacency[p.from].push(p.to);
            adjacency[p.to].push(p.from);
        }
        let min_nt = self.pipes.iter().map(|p| p.initial_n_t).min().unwrap_or(1);
        if let Some(p) = self.pipes.iter().find(|p| p.initial_n_t % min_nt != 0) {
            return Err(Error::config(format!(
                "pipe {}: n_t = {} is not a multiple of the coarsest n_t = {min_nt}",
                p.id, p.initial_n_t
            )));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            match node.kind {
                NodeKind::Source => {
                    let profile = node.profile.as_ref().ok_or_else(|| {
                        Error::config(format!("source {} needs a pressure profile", node.id))
                    })?;
                    if !(profile.min() > 0.0) {
                        return Err(Error::config(format!(
                            "source {} pressure must be positive",
                            node.id
                        )));
                    }
                }
                NodeKind::Sink => {
                    if node.profile.is_none() {
                        return Err(Error::config(format!(
                            "sink {} needs a demand profile",
                            node.id
                        )));
                    }
                    if degree[i] != 1 {
                        return Err(Error::config(format!(
                            "sink {} must be attached to exactly one pipe, found {}",
                            node.id, degree[i]
                        )));
                    }
                }
                NodeKind::Junction => {
                    if node.profile.is_some() {
                        return Err(Error::config(format!(
                            "junction {} takes no profile",
                            node.id
                        )));
                    }
                }
            }
            if degree[i] == 0 {
                return Err(Error::config(format!("node {} has no pipes", node.id)));
            }
        }
        if self.pipes.is_empty() {
            return Err(Error::config("network has no pipes"));
        }
        let Some(start) = self.sources().next() else {
            return Err(Error::config("network needs at least one source"));
        };
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(v) = queue.pop_front() {
            for &w in &adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::config(format!(
                "node {} is not connected to the network",
                self.nodes[i].id
            )));
        }
        Ok(())
    }
}

/// Topology, gas data and plan as read from a network file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    #[serde(default)]
    pub gas: GasDefaults,
    pub nodes: Vec<Node>,
    pub pipes: Vec<PipeSpec>,
    #[serde(default)]
    pub simulation: SimulationPlan,
}

impl NetworkFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Resolves names and defaults and checks the network invariants.
    pub fn topology(&self) -> Result<NetworkTopology> {
        let mut index = HashMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if index.insert(n.id.as_str(), i).is_some() {
                return Err(Error::config(format!("duplicate node id {}", n.id)));
            }
        }
        let mut pipe_ids = HashMap::new();
        let mut pipes = Vec::with_capacity(self.pipes.len());
        for p in &self.pipes {
            if pipe_ids.insert(p.id.as_str(), ()).is_some() {
                return Err(Error::config(format!("duplicate pipe id {}", p.id)));
            }
            let lookup = |name: &str| {
                index.get(name).copied().ok_or_else(|| {
                    Error::config(format!("pipe {} refers to unknown node {name}", p.id))
                })
            };
            pipes.push(Pipe {
                id: p.id.clone(),
                from: lookup(&p.from)?,
                to: lookup(&p.to)?,
                config: PipeConfig {
                    length: p.length,
                    diameter: p.diameter,
                    friction: p.friction,
                    slope: p.slope,
                    gravity: self.gas.gravity,
                    gas_constant: p.gas_constant.unwrap_or(self.gas.gas_constant),
                    temperature: p.temperature.unwrap_or(self.gas.temperature),
                    compressibility: p.compressibility.unwrap_or(self.gas.compressibility),
                },
                initial_model: p.model.unwrap_or(self.simulation.model),
                initial_n_x: p.n_x.unwrap_or(self.simulation.n_x),
                initial_n_t: p.n_t.unwrap_or(self.simulation.n_t),
            });
        }
        let mut junction_of = vec![None; self.nodes.len()];
        let mut junctions = Vec::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if n.kind == NodeKind::Junction {
                junction_of[i] = Some(junctions.len());
                junctions.push(i);
            }
        }
        let topo = NetworkTopology {
            nodes: self.nodes.clone(),
            pipes,
            junctions,
            junction_of,
        };
        topo.validate()?;
        Ok(topo)
    }
}
