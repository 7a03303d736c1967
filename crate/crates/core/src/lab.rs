//! Runs configured experiments and assembles machine-readable reports.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::Resolved;
use crate::cosmos::{fit_g, simulation_ratio, triangle_check};
use crate::dyadic::Dyadic;
use crate::error::{Error, Result};
use crate::experiments::{a_z, ethics_verdict, resolution_check, teleport_ratio, v_hat};
use crate::family::RunSetFamily;
use crate::machine::MACHINE_VERSION;
use crate::weights::{mutual_info, nid, rank_agreement, weight_report, MindState, SequenceModel};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    Teleport,
    Simulation,
    Ethics,
    Resolution,
    Triangle,
    Gfit,
    Utility,
    Nid,
    Pipeline,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 9] = [
        ExperimentKind::Teleport,
        ExperimentKind::Simulation,
        ExperimentKind::Ethics,
        ExperimentKind::Resolution,
        ExperimentKind::Triangle,
        ExperimentKind::Gfit,
        ExperimentKind::Utility,
        ExperimentKind::Nid,
        ExperimentKind::Pipeline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Teleport => "teleport",
            ExperimentKind::Simulation => "simulation",
            ExperimentKind::Ethics => "ethics",
            ExperimentKind::Resolution => "resolution",
            ExperimentKind::Triangle => "triangle",
            ExperimentKind::Gfit => "gfit",
            ExperimentKind::Utility => "utility",
            ExperimentKind::Nid => "nid",
            ExperimentKind::Pipeline => "pipeline",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown experiment kind {s}"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Caps {
    pub depth_cap: usize,
    pub step_cap: u64,
    pub block_width: usize,
    pub n_max: usize,
    /// γ mass beyond n_max, from the unconditional RunSet.
    pub gamma_tail: Dyadic,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub kind: String,
    pub tool_version: &'static str,
    pub machine_version: &'static str,
    pub inputs_digest: String,
    pub caps: Caps,
    pub values: Value,
    pub diagnostics: Value,
}

impl Report {
    /// Pretty JSON with a trailing newline; keys are sorted, so output is a
    /// deterministic function of the values.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

/// Short machine-readable label for an error.
pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidBits { .. } => "invalid_bits",
        Error::InvalidMachineConfig(_) => "invalid_machine_config",
        Error::RecordCeiling { .. } => "record_ceiling",
        Error::VersionMismatch { .. } => "version_mismatch",
        Error::CacheCorrupt(_) => "cache_corrupt",
        Error::CacheMismatch(_) => "cache_mismatch",
        Error::Domain(_) => "domain",
        Error::UnsupportedSubject { .. } => "unsupported_subject",
        Error::WidthMismatch { .. } => "width_mismatch",
        Error::ZeroEvidence(_) => "zero_evidence",
        Error::ZeroDenominator(_) => "zero_denominator",
        Error::ZeroWeight(_) => "zero_weight",
        Error::Infeasible(_) => "infeasible",
        Error::Degenerate(_) => "degenerate",
        Error::ConfigSchema { .. } => "config_schema",
        Error::Config(_) => "config",
        Error::Io(_) => "io",
    }
}

/// True for errors that describe a degenerate numeric outcome rather than
/// bad input or a broken environment.
pub fn is_degenerate(e: &Error) -> bool {
    matches!(
        e,
        Error::ZeroEvidence(_)
            | Error::ZeroDenominator(_)
            | Error::ZeroWeight(_)
            | Error::Infeasible(_)
            | Error::Degenerate(_)
            | Error::UnsupportedSubject { .. }
    )
}

fn error_value(e: &Error) -> Value {
    json!({ "error": { "kind": error_kind(e), "message": e.to_string() } })
}

pub struct Lab {
    resolved: Resolved,
    family: RunSetFamily,
}

impl Lab {
    pub fn new(resolved: Resolved, family: RunSetFamily) -> Result<Self> {
        let m = &resolved.config.machine;
        if family.depth_cap() != m.depth_cap || family.step_cap() != m.step_cap {
            return Err(Error::Config("RunSet family caps differ from the config".into()));
        }
        Ok(Lab { resolved, family })
    }

    pub fn resolved(&self) -> &Resolved {
        &self.resolved
    }

    fn width(&self) -> usize {
        self.resolved.config.block_width
    }

    fn n_max(&self) -> usize {
        self.resolved.config.n_max
    }

    fn section<'a, T>(&self, s: &'a Option<T>, name: &str) -> Result<&'a T> {
        s.as_ref()
            .ok_or_else(|| Error::Config(format!("missing {name} section")))
    }

    fn phi_runs(&self) -> Result<std::sync::Arc<crate::enumerate::RunSet>> {
        let cosmos = self
            .resolved
            .cosmos
            .as_ref()
            .ok_or_else(|| Error::Config("missing cosmos section".into()))?;
        self.family.get(&cosmos.phi)
    }

    pub fn run(&self, kind: ExperimentKind) -> Result<Report> {
        let rs = self.family.unconditional()?;
        let model = SequenceModel::new(&rs, self.width(), self.n_max())?;
        let (values, diagnostics) = match kind {
            ExperimentKind::Pipeline => self.pipeline()?,
            k => self.single(k)?,
        };
        Ok(Report {
            kind: kind.name().to_string(),
            tool_version: TOOL_VERSION,
            machine_version: MACHINE_VERSION,
            inputs_digest: hex_digest(&self.resolved.bytes),
            caps: Caps {
                depth_cap: rs.depth_cap(),
                step_cap: rs.step_cap(),
                block_width: self.width(),
                n_max: self.n_max(),
                gamma_tail: model.gamma_tail(),
            },
            values,
            diagnostics,
        })
    }

    fn single(&self, kind: ExperimentKind) -> Result<(Value, Value)> {
        let cfg = &self.resolved.config;
        let rs = self.family.unconditional()?;
        let n_max = self.n_max();
        Ok(match kind {
            ExperimentKind::Teleport => {
                let (tele, stay) = self.resolved.scenarios()?;
                let r = teleport_ratio(&rs, &tele, &stay, n_max)?;
                (
                    json!({ "ratio": r.ratio, "tele_expectation": r.tele_expectation,
                            "stay_expectation": r.stay_expectation, "band": r.band, "band_text": r.band_text }),
                    json!({ "tele_pairs": r.tele_pairs, "stay_pairs": r.stay_pairs,
                            "excluded_tele": r.excluded_tele, "excluded_stay": r.excluded_stay }),
                )
            }
            ExperimentKind::Simulation => {
                let sec = self.section(&cfg.simulation, "simulation")?;
                let (s, r) = (self.resolved.substrate(&sec.s)?, self.resolved.substrate(&sec.r)?);
                let rep = simulation_ratio(&*self.phi_runs()?, s, r)?;
                (
                    json!({ "ratio": rep.ratio, "p_sim": rep.p_sim, "sdf_s": rep.sdf_s.value, "sdf_r": rep.sdf_r.value }),
                    json!({ "sdf_s": rep.sdf_s, "sdf_r": rep.sdf_r, "s_members": s.len(), "r_members": r.len() }),
                )
            }
            ExperimentKind::Ethics => {
                let tl = self.resolved.timelines()?;
                let r = a_z(&rs, &tl, n_max, cfg.allow_shared_states)?;
                let verdict = ethics_verdict(r.geomean_form, cfg.thresholds)?;
                (
                    json!({ "product_form": r.product_form, "geomean_form": r.geomean_form,
                            "verdict": verdict, "thresholds": cfg.thresholds }),
                    json!({ "terms": r.terms, "defined_terms": r.defined_terms, "excluded_terms": r.excluded_terms }),
                )
            }
            ExperimentKind::Resolution => {
                let sec = self.section(&cfg.resolution, "resolution")?;
                let r = resolution_check(&rs, &sec.a, &sec.b, &sec.c, sec.coarsen, n_max)?;
                (
                    json!({ "hi_ratio": r.hi_ratio, "lo_ratio": r.lo_ratio, "log2_deviation": r.log2_deviation }),
                    json!({ "coarse": r.coarse, "coarsen": r.coarsen }),
                )
            }
            ExperimentKind::Triangle => {
                let sec = self.section(&cfg.triangle, "triangle")?;
                let (r, s) = (self.resolved.substrate(&sec.r)?, self.resolved.substrate(&sec.s)?);
                let t = triangle_check(&rs, &*self.phi_runs()?, r, s, n_max, sec.g)?;
                (
                    json!({ "lhs": t.lhs, "bound_ratio": t.bound_ratio, "g": t.g, "within_bound": t.within_bound }),
                    json!({ "pairs": t.pairs, "excluded_pairs": t.excluded_pairs, "sdf_r": t.sdf_r, "sdf_s": t.sdf_s }),
                )
            }
            ExperimentKind::Gfit => {
                let sec = self.section(&cfg.gfit, "gfit")?;
                let a = self.resolved.substrate(&sec.set)?;
                let g = fit_g(&rs, &*self.phi_runs()?, a, n_max)?;
                (to_value(&g), json!({ "set": sec.set }))
            }
            ExperimentKind::Utility => {
                let sec = self.section(&cfg.utility, "utility")?;
                let mut rows = serde_json::Map::new();
                let mut failed = 0;
                for a in &sec.states {
                    let v = match v_hat(&rs, a, &sec.spec, n_max) {
                        Ok(v) => to_value(&v),
                        Err(e) if is_degenerate(&e) => {
                            failed += 1;
                            error_value(&e)
                        }
                        Err(e) => return Err(e),
                    };
                    rows.insert(a.to_string(), v);
                }
                if failed == sec.states.len() {
                    return Err(Error::Degenerate("V̂ is undefined for every listed state".into()));
                }
                (Value::Object(rows), json!({ "undefined": failed, "utility": sec.spec }))
            }
            ExperimentKind::Nid => {
                let sec = self.section(&cfg.nid, "nid")?;
                self.nid_tables(&sec.states)?
            }
            ExperimentKind::Pipeline => unreachable!("handled by pipeline()"),
        })
    }

    fn nid_tables(&self, states: &[MindState]) -> Result<(Value, Value)> {
        let cell = |r: Result<f64>| -> Result<Value> {
            match r {
                Ok(v) => Ok(json!(v)),
                Err(e) if is_degenerate(&e) => Ok(Value::Null),
                Err(e) => Err(e),
            }
        };
        let (mut nid_rows, mut mi_rows, mut weights) = (Vec::new(), Vec::new(), Vec::new());
        for a in states {
            let (mut nr, mut mr) = (Vec::new(), Vec::new());
            for b in states {
                nr.push(cell(nid(&self.family, a, b))?);
                mr.push(cell(mutual_info(&self.family, a, b))?);
                weights.push(match weight_report(&self.family, a, b, self.n_max()) {
                    Ok(w) => to_value(&w),
                    Err(e) if is_degenerate(&e) => json!({ "a": a, "b": b, "error": error_kind(&e) }),
                    Err(e) => return Err(e),
                });
            }
            nid_rows.push(Value::Array(nr));
            mi_rows.push(Value::Array(mr));
        }
        let agreement = match states.first() {
            Some(a) => match rank_agreement(&self.family, a, states, self.n_max()) {
                Ok(r) => to_value(&r),
                Err(e) if is_degenerate(&e) => error_value(&e),
                Err(e) => return Err(e),
            },
            None => Value::Null,
        };
        Ok((
            json!({ "states": states, "nid": nid_rows, "mutual_info": mi_rows }),
            json!({ "weights": weights, "rank_agreement": agreement }),
        ))
    }

    /// Every section the config supports, each recorded as its value or as
    /// the error that prevented it.
    fn pipeline(&self) -> Result<(Value, Value)> {
        let cfg = &self.resolved.config;
        let mut values = serde_json::Map::new();
        let mut diagnostics = serde_json::Map::new();
        if let Some(c) = &self.resolved.cosmos {
            values.insert(
                "cosmos".into(),
                json!({ "rule": c.rule, "seed_row": c.seed_row, "steps": c.steps, "phi": c.phi }),
            );
            let rs_phi = self.phi_runs()?;
            let mut sdfs = serde_json::Map::new();
            for (name, set) in &self.resolved.substrates {
                sdfs.insert(name.clone(), to_value(&crate::cosmos::sdf(&rs_phi, set)));
            }
            values.insert("sdf".into(), Value::Object(sdfs));
        }
        let subs: serde_json::Map<String, Value> = self
            .resolved
            .substrates
            .iter()
            .map(|(k, v)| (k.clone(), to_value(&v.members)))
            .collect();
        diagnostics.insert("substrates".into(), Value::Object(subs));

        let mut sections: Vec<ExperimentKind> = Vec::new();
        if cfg.scenarios.is_some() {
            sections.push(ExperimentKind::Teleport);
        }
        if cfg.simulation.is_some() {
            sections.push(ExperimentKind::Simulation);
        }
        if !cfg.timelines.is_empty() {
            sections.push(ExperimentKind::Ethics);
        }
        if cfg.resolution.is_some() {
            sections.push(ExperimentKind::Resolution);
        }
        if cfg.triangle.is_some() {
            sections.push(ExperimentKind::Triangle);
        }
        if cfg.gfit.is_some() {
            sections.push(ExperimentKind::Gfit);
        }
        if cfg.utility.is_some() {
            sections.push(ExperimentKind::Utility);
        }
        if cfg.nid.is_some() {
            sections.push(ExperimentKind::Nid);
        }
        for k in sections {
            match self.single(k) {
                Ok((v, d)) => {
                    values.insert(k.name().into(), v);
                    diagnostics.insert(k.name().into(), d);
                }
                Err(e) if is_degenerate(&e) => {
                    values.insert(k.name().into(), error_value(&e));
                }
                Err(e) => return Err(e),
            }
        }
        Ok((Value::Object(values), Value::Object(diagnostics)))
    }
}
