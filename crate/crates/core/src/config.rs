//! JSON experiment configuration.
//!
//! Bit strings are ASCII `"0"`/`"1"` strings. File paths are resolved
//! relative to the directory holding the config file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::bits::Bits;
use crate::cosmos::{double_bits, gen_phi, Cosmos, SubstrateSet};
use crate::error::{Error, Result};
use crate::experiments::{AgentTimeline, Coarsen, Scenario, ScenarioPair, Thresholds, UtilitySpec};
use crate::weights::MindState;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineSection {
    pub depth_cap: usize,
    pub step_cap: u64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CosmosSection {
    pub rule: u32,
    pub seed_row: Bits,
    pub steps: usize,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SubstrateSpec {
    /// Inline list of states.
    Members(Vec<MindState>),
    /// Distinct block-width windows of φ.
    Windows { stride: usize },
    /// Every member of another set with each bit doubled.
    Doubled(String),
    /// One state per non-empty line.
    File(PathBuf),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub tele: Vec<ScenarioPair>,
    pub stay: Vec<ScenarioPair>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimelineSpec {
    pub agent_id: String,
    pub states: Vec<MindState>,
}

#[derive(Clone, Debug, Deserialize)]
pub struct UtilitySection {
    pub states: Vec<MindState>,
    #[serde(flatten)]
    pub spec: UtilitySpec,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolutionSection {
    pub a: MindState,
    pub b: MindState,
    pub c: MindState,
    pub coarsen: Coarsen,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub s: String,
    pub r: String,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriangleSection {
    pub r: String,
    pub s: String,
    #[serde(default)]
    pub g: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GfitSection {
    pub set: String,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NidSection {
    pub states: Vec<MindState>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub machine: MachineSection,
    #[serde(default)]
    pub cosmos: Option<CosmosSection>,
    pub block_width: usize,
    pub n_max: usize,
    #[serde(default)]
    pub substrates: BTreeMap<String, SubstrateSpec>,
    #[serde(default)]
    pub scenarios: Option<ScenarioSection>,
    #[serde(default)]
    pub timelines: Vec<TimelineSpec>,
    #[serde(default)]
    pub allow_shared_states: bool,
    #[serde(default)]
    pub utility: Option<UtilitySection>,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub resolution: Option<ResolutionSection>,
    #[serde(default)]
    pub simulation: Option<SimulationSection>,
    #[serde(default)]
    pub triangle: Option<TriangleSection>,
    #[serde(default)]
    pub gfit: Option<GfitSection>,
    #[serde(default)]
    pub nid: Option<NidSection>,
}

impl ExperimentConfig {
    /// Parses JSON, reporting the offending field path and position.
    pub fn parse(bytes: &[u8], origin: &Path) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_slice(bytes);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let inner = e.inner();
            Error::ConfigSchema {
                path: format!("{}: {}", origin.display(), e.path()),
                line: inner.line(),
                column: inner.column(),
                message: inner.to_string(),
            }
        })
    }
}

/// A parsed config with its derived objects resolved.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub bytes: Vec<u8>,
    pub base_dir: PathBuf,
    pub cosmos: Option<Cosmos>,
    pub substrates: BTreeMap<String, SubstrateSet>,
}

pub fn load(path: &Path) -> Result<Resolved> {
    let bytes = fs::read(path)?;
    let config = ExperimentConfig::parse(&bytes, path)?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    resolve(config, bytes, base_dir)
}

pub fn resolve(config: ExperimentConfig, bytes: Vec<u8>, base_dir: PathBuf) -> Result<Resolved> {
    if config.block_width == 0 || config.n_max == 0 {
        return Err(Error::Config("block_width and n_max must be positive".into()));
    }
    let cosmos = match &config.cosmos {
        Some(c) => Some(gen_phi(c.rule, &c.seed_row, c.steps).map_err(|e| Error::Config(format!("cosmos: {e}")))?),
        None => None,
    };
    let mut substrates = BTreeMap::new();
    for name in config.substrates.keys() {
        resolve_substrate(
            &config,
            cosmos.as_ref(),
            &base_dir,
            name,
            &mut substrates,
            &mut Vec::new(),
        )?;
    }
    let r = Resolved {
        config,
        bytes,
        base_dir,
        cosmos,
        substrates,
    };
    r.check_widths()?;
    Ok(r)
}

fn resolve_substrate(
    config: &ExperimentConfig,
    cosmos: Option<&Cosmos>,
    base_dir: &Path,
    name: &str,
    done: &mut BTreeMap<String, SubstrateSet>,
    stack: &mut Vec<String>,
) -> Result<SubstrateSet> {
    if let Some(s) = done.get(name) {
        return Ok(s.clone());
    }
    if stack.iter().any(|n| n == name) {
        return Err(Error::Config(format!("substrate {name} refers to itself")));
    }
    let spec = config
        .substrates
        .get(name)
        .ok_or_else(|| Error::Config(format!("undefined substrate {name}")))?;
    let wrap = |e: Error| Error::Config(format!("substrate {name}: {e}"));
    let set = match spec {
        SubstrateSpec::Members(m) => SubstrateSet::new(name, m.clone()).map_err(wrap)?,
        SubstrateSpec::Windows { stride } => {
            let c = cosmos.ok_or_else(|| Error::Config(format!("substrate {name} needs a cosmos section")))?;
            SubstrateSet::new(name, c.windows(config.block_width, *stride).map_err(wrap)?).map_err(wrap)?
        }
        SubstrateSpec::Doubled(of) => {
            stack.push(name.to_string());
            let base = resolve_substrate(config, cosmos, base_dir, of, done, stack)?;
            stack.pop();
            base.map(name, double_bits).map_err(wrap)?
        }
        SubstrateSpec::File(p) => {
            let text = fs::read_to_string(base_dir.join(p))?;
            let members = text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::parse)
                .collect::<Result<Vec<MindState>>>()
                .map_err(wrap)?;
            SubstrateSet::new(name, members).map_err(wrap)?
        }
    };
    done.insert(name.to_string(), set.clone());
    Ok(set)
}

impl Resolved {
    pub fn substrate(&self, name: &str) -> Result<&SubstrateSet> {
        self.substrates
            .get(name)
            .ok_or_else(|| Error::Config(format!("undefined substrate {name}")))
    }

    pub fn scenarios(&self) -> Result<(Scenario, Scenario)> {
        let s = self
            .config
            .scenarios
            .as_ref()
            .ok_or_else(|| Error::Config("missing scenarios section".into()))?;
        let wrap = |e: Error| Error::Config(format!("scenarios: {e}"));
        Ok((
            Scenario::new("tele", s.tele.clone()).map_err(wrap)?,
            Scenario::new("stay", s.stay.clone()).map_err(wrap)?,
        ))
    }

    pub fn timelines(&self) -> Result<Vec<AgentTimeline>> {
        self.config
            .timelines
            .iter()
            .map(|t| AgentTimeline::new(t.agent_id.clone(), t.states.clone()))
            .collect::<Result<_>>()
            .map_err(|e| Error::Config(format!("timelines: {e}")))
    }

    fn check_widths(&self) -> Result<()> {
        let w = self.config.block_width;
        let mut states: Vec<(&str, &MindState)> = Vec::new();
        for (name, set) in &self.substrates {
            states.extend(set.members.iter().map(|m| (name.as_str(), m)));
        }
        if let Some(s) = &self.config.scenarios {
            for p in s.tele.iter().chain(&s.stay) {
                states.push(("scenarios", &p.a));
                states.push(("scenarios", &p.b));
            }
        }
        for t in &self.config.timelines {
            states.extend(t.states.iter().map(|m| ("timelines", m)));
        }
        if let Some(u) = &self.config.utility {
            states.extend(u.states.iter().map(|m| ("utility", m)));
            if let UtilitySpec::LookupTable { .. } = u.spec {
                u.spec
                    .check_total(w)
                    .map_err(|e| Error::Config(format!("utility: {e}")))?;
            }
        }
        if let Some(r) = &self.config.resolution {
            states.extend([&r.a, &r.b, &r.c].map(|m| ("resolution", m)));
            if !w.is_multiple_of(2) {
                return Err(Error::Config(format!("resolution needs an even block_width, got {w}")));
            }
        }
        if let Some(n) = &self.config.nid {
            states.extend(n.states.iter().map(|m| ("nid", m)));
        }
        if let Some((section, bad)) = states.into_iter().find(|(_, m)| m.width() != w) {
            return Err(Error::Config(format!(
                "{section}: state {bad} has width {}, block_width is {w}",
                bad.width()
            )));
        }
        Ok(())
    }
}
