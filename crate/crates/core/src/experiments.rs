//! Decision procedures on top of the weights: expected utility, the
//! teleport ratio, the egoism/utilitarianism statistic A_Z, and the
//! resolution check.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::enumerate::RunSet;
use crate::error::{Error, Result};
use crate::weights::{MindState, Posterior, SequenceModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UtilitySpec {
    PopcountFraction,
    ConstantOne,
    LookupTable { table: BTreeMap<MindState, f64> },
}

impl UtilitySpec {
    pub fn lookup_table(table: BTreeMap<MindState, f64>) -> Result<Self> {
        if let Some((k, v)) = table.iter().find(|(_, v)| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("utility of {k} is {v}, outside [-1, 1]")));
        }
        Ok(UtilitySpec::LookupTable { table })
    }

    /// Checks a lookup table covers every state of the given width.
    pub fn check_total(&self, width: usize) -> Result<()> {
        if let UtilitySpec::LookupTable { table } = self {
            for v in table.values() {
                if !(-1.0..=1.0).contains(v) {
                    return Err(Error::Domain(format!("utility {v} outside [-1, 1]")));
                }
            }
            if let Some(missing) = MindState::universe(width).into_iter().find(|s| !table.contains_key(s)) {
                return Err(Error::Domain(format!("utility table has no entry for {missing}")));
            }
        }
        Ok(())
    }

    pub fn eval(&self, s: &MindState) -> Result<f64> {
        match self {
            UtilitySpec::PopcountFraction => Ok(s.bits().count_ones() as f64 / s.width() as f64),
            UtilitySpec::ConstantOne => Ok(1.0),
            UtilitySpec::LookupTable { table } => table
                .get(s)
                .copied()
                .ok_or_else(|| Error::Domain(format!("utility table has no entry for {s}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VHat {
    /// Σ_b ŵ(b|a)·u(b).
    pub weight_sum: f64,
    /// E_ρ[Σ_j γ_j u(σ_j)] summed run by run.
    pub direct: f64,
}

fn v_hat_weight_sum(post: &Posterior<'_, '_>, u: &UtilitySpec) -> Result<f64> {
    let mut total = 0.0;
    for (b, num) in post.weight_numerators() {
        total += num.ratio(&post.evidence()) * u.eval(&b)?;
    }
    Ok(total)
}

fn v_hat_direct(model: &SequenceModel<'_>, post: &Posterior<'_, '_>, u: &UtilitySpec) -> Result<f64> {
    let mut total = 0.0;
    for (view, _, w) in post.runs() {
        let mut inner = 0.0;
        for (j, blk) in view.blocks.iter().take(model.n_max()).enumerate() {
            inner += model.gamma(j + 1).to_f64() * u.eval(blk)?;
        }
        total += w * inner;
    }
    Ok(total)
}

/// V̂(a) computed in both summation orders.
pub fn v_hat(rs: &RunSet, a: &MindState, u: &UtilitySpec, n_max: usize) -> Result<VHat> {
    let model = SequenceModel::new(rs, a.width(), n_max)?;
    let post = model.posterior(a)?;
    Ok(VHat {
        weight_sum: v_hat_weight_sum(&post, u)?,
        direct: v_hat_direct(&model, &post, u)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioPair {
    pub a: MindState,
    pub b: MindState,
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Scenario {
    pub label: String,
    pub pairs: Vec<ScenarioPair>,
}

impl Scenario {
    pub fn new(label: impl Into<String>, pairs: Vec<ScenarioPair>) -> Result<Self> {
        let label = label.into();
        if pairs.is_empty() {
            return Err(Error::Domain(format!("scenario {label} has no pairs")));
        }
        if pairs.iter().any(|p| p.p < 0.0 || !p.p.is_finite()) {
            return Err(Error::Domain(format!(
                "scenario {label} has a negative or non-finite probability"
            )));
        }
        let total: f64 = pairs.iter().map(|p| p.p).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "scenario {label} probabilities sum to {total}, not 1"
            )));
        }
        Ok(Scenario { label, pairs })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairWeight {
    pub a: MindState,
    pub b: MindState,
    pub p: f64,
    /// `None` when P̂(σ_N = a) = 0; such pairs contribute nothing.
    pub weight: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TeleportBand {
    /// Ratio near or above one: the move keeps most of the weight of staying.
    NearOne,
    /// Ratio near zero: the move loses almost all of it.
    NearZero,
    Intermediate,
}

impl TeleportBand {
    pub const LOW: f64 = 0.1;
    pub const HIGH: f64 = 0.5;

    pub fn classify(ratio: f64) -> Self {
        if ratio < Self::LOW {
            TeleportBand::NearZero
        } else if ratio >= Self::HIGH {
            TeleportBand::NearOne
        } else {
            TeleportBand::Intermediate
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            TeleportBand::NearOne => "ratio near one or above: teleporting looks acceptable",
            TeleportBand::NearZero => "ratio near zero: teleporting should be avoided",
            TeleportBand::Intermediate => "ratio between the bands: no clear reading",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TeleportReport {
    pub ratio: f64,
    pub tele_expectation: f64,
    pub stay_expectation: f64,
    pub band: TeleportBand,
    pub band_text: &'static str,
    pub tele_pairs: Vec<PairWeight>,
    pub stay_pairs: Vec<PairWeight>,
    pub excluded_tele: usize,
    pub excluded_stay: usize,
}

fn scenario_weights(model: &SequenceModel<'_>, s: &Scenario) -> Result<(f64, Vec<PairWeight>, usize)> {
    let mut expectation = 0.0;
    let mut excluded = 0;
    let mut rows = Vec::with_capacity(s.pairs.len());
    for pair in &s.pairs {
        model.check_width(&pair.a)?;
        model.check_width(&pair.b)?;
        let weight = match model.posterior(&pair.a) {
            Ok(post) => Some(post.weight(&pair.b)),
            Err(Error::ZeroEvidence(_)) => None,
            Err(e) => return Err(e),
        };
        match weight {
            Some(w) => expectation += pair.p * w,
            None => excluded += 1,
        }
        rows.push(PairWeight {
            a: pair.a.clone(),
            b: pair.b.clone(),
            p: pair.p,
            weight,
        });
    }
    Ok((expectation, rows, excluded))
}

/// E_Tele[ŵ(B|A)] / E_Stay[ŵ(B|A)].
pub fn teleport_ratio(rs: &RunSet, tele: &Scenario, stay: &Scenario, n_max: usize) -> Result<TeleportReport> {
    let width = tele.pairs[0].a.width();
    let model = SequenceModel::new(rs, width, n_max)?;
    let (te, tele_pairs, excluded_tele) = scenario_weights(&model, tele)?;
    let (se, stay_pairs, excluded_stay) = scenario_weights(&model, stay)?;
    if se == 0.0 {
        return Err(Error::ZeroDenominator(format!(
            "expected weight under {} is 0",
            stay.label
        )));
    }
    let ratio = te / se;
    let band = TeleportBand::classify(ratio);
    Ok(TeleportReport {
        ratio,
        tele_expectation: te,
        stay_expectation: se,
        band,
        band_text: band.describe(),
        tele_pairs,
        stay_pairs,
        excluded_tele,
        excluded_stay,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentTimeline {
    pub agent_id: String,
    pub states: Vec<MindState>,
}

impl AgentTimeline {
    pub fn new(agent_id: impl Into<String>, states: Vec<MindState>) -> Result<Self> {
        let agent_id = agent_id.into();
        let Some(first) = states.first() else {
            return Err(Error::Domain(format!("timeline {agent_id} is empty")));
        };
        let w = first.width();
        if let Some(bad) = states.iter().find(|s| s.width() != w) {
            return Err(Error::WidthMismatch {
                expected: w,
                found: bad.width(),
            });
        }
        Ok(AgentTimeline { agent_id, states })
    }
}

/// Errors if two agents share a mind-state.
pub fn check_disjoint(timelines: &[AgentTimeline]) -> Result<()> {
    let mut owner: BTreeMap<&MindState, &str> = BTreeMap::new();
    for t in timelines {
        for s in t.states.iter().collect::<BTreeSet<_>>() {
            if let Some(other) = owner.insert(s, &t.agent_id) {
                return Err(Error::Domain(format!(
                    "state {s} appears in timelines {other} and {}",
                    t.agent_id
                )));
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AzTerm {
    pub agent: String,
    pub t: usize,
    /// AM over β ≠ α, δ > 0 of ŵ(β_{T+δ} | α_T).
    pub num: Option<f64>,
    /// AM over δ > 0 of ŵ(α_{T+δ} | α_T).
    pub den: Option<f64>,
    pub zero_evidence: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AzReport {
    pub product_form: f64,
    pub geomean_form: f64,
    pub terms: Vec<AzTerm>,
    pub defined_terms: usize,
    pub excluded_terms: usize,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// A_Z over agent timelines. Shared states between agents are rejected
/// unless `allow_shared` is set.
pub fn a_z(rs: &RunSet, timelines: &[AgentTimeline], n_max: usize, allow_shared: bool) -> Result<AzReport> {
    if timelines.len() < 2 {
        return Err(Error::Domain("A_Z needs at least two timelines".into()));
    }
    if !allow_shared {
        check_disjoint(timelines)?;
    }
    let width = timelines[0].states[0].width();
    let model = SequenceModel::new(rs, width, n_max)?;
    let mut terms = Vec::new();
    for (ai, alpha) in timelines.iter().enumerate() {
        for (t, a) in alpha.states.iter().enumerate() {
            model.check_width(a)?;
            let post = match model.posterior(a) {
                Ok(p) => p,
                Err(Error::ZeroEvidence(_)) => {
                    terms.push(AzTerm {
                        agent: alpha.agent_id.clone(),
                        t,
                        num: None,
                        den: None,
                        zero_evidence: true,
                    });
                    continue;
                }
                Err(e) => return Err(e),
            };
            let mut cross = Vec::new();
            for (bi, beta) in timelines.iter().enumerate() {
                if bi != ai {
                    cross.extend(beta.states.iter().skip(t + 1).map(|b| post.weight(b)));
                }
            }
            let own: Vec<f64> = alpha.states.iter().skip(t + 1).map(|b| post.weight(b)).collect();
            terms.push(AzTerm {
                agent: alpha.agent_id.clone(),
                t,
                num: mean(&cross),
                den: mean(&own),
                zero_evidence: false,
            });
        }
    }
    let ratios: Vec<f64> = terms
        .iter()
        .filter_map(|t| match (t.num, t.den) {
            (Some(n), Some(d)) if d > 0.0 => Some(n / d),
            _ => None,
        })
        .collect();
    if ratios.is_empty() {
        return Err(Error::Degenerate(
            "no A_Z term has both a cross-agent and an own-future weight".into(),
        ));
    }
    let product_form = ratios.iter().product();
    let geomean_form = if ratios.contains(&0.0) {
        0.0
    } else {
        (ratios.iter().map(|r| r.log2()).sum::<f64>() / ratios.len() as f64).exp2()
    };
    Ok(AzReport {
        product_form,
        geomean_form,
        defined_terms: ratios.len(),
        excluded_terms: terms.len() - ratios.len(),
        terms,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    EgoismLeaning,
    Indeterminate,
    UtilitarianLeaning,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub low: f64,
    pub high: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { low: 0.1, high: 0.5 }
    }
}

pub fn ethics_verdict(geomean_form: f64, th: Thresholds) -> Result<Verdict> {
    if !(0.0 <= th.low && th.low < th.high) {
        return Err(Error::Domain(format!(
            "thresholds need 0 <= low < high, got {} and {}",
            th.low, th.high
        )));
    }
    Ok(if geomean_form < th.low {
        Verdict::EgoismLeaning
    } else if geomean_form > th.high {
        Verdict::UtilitarianLeaning
    } else {
        Verdict::Indeterminate
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coarsen {
    /// Keep the bits at even positions.
    EvenSubsample,
    /// XOR of each adjacent pair.
    PairwiseXor,
}

impl Coarsen {
    pub fn apply(self, s: &MindState) -> Result<MindState> {
        if !s.width().is_multiple_of(2) {
            return Err(Error::Domain(format!(
                "coarsening needs an even width, got {}",
                s.width()
            )));
        }
        let b = s.bits().as_slice();
        let bits = match self {
            Coarsen::EvenSubsample => b.iter().step_by(2).copied().collect(),
            Coarsen::PairwiseXor => b.chunks(2).map(|p| p[0] ^ p[1]).collect(),
        };
        MindState::new(bits)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolutionReport {
    pub hi_ratio: f64,
    pub lo_ratio: f64,
    pub log2_deviation: f64,
    pub coarse: [MindState; 3],
    pub coarsen: Coarsen,
}

fn nonzero_weight(model: &SequenceModel<'_>, b: &MindState, a: &MindState, name: &str) -> Result<f64> {
    let w = match model.weight_definitional(a, b) {
        Ok(w) => w,
        Err(Error::ZeroEvidence(_)) => 0.0,
        Err(e) => return Err(e),
    };
    if w == 0.0 {
        return Err(Error::ZeroWeight(format!(
            "{name} = ŵ({b}|{a}) at width {}",
            model.width()
        )));
    }
    Ok(w)
}

/// Compares ŵ(c|a)/ŵ(b|a) at width ℓ with the same ratio after coarsening
/// all three states to width ℓ/2.
pub fn resolution_check(
    rs: &RunSet,
    a: &MindState,
    b: &MindState,
    c: &MindState,
    coarsen: Coarsen,
    n_max: usize,
) -> Result<ResolutionReport> {
    let hi = SequenceModel::new(rs, a.width(), n_max)?;
    hi.check_width(b)?;
    hi.check_width(c)?;
    let (a2, b2, c2) = (coarsen.apply(a)?, coarsen.apply(b)?, coarsen.apply(c)?);
    let lo = SequenceModel::new(rs, a2.width(), n_max)?;
    let hi_ratio = nonzero_weight(&hi, c, a, "hi c")? / nonzero_weight(&hi, b, a, "hi b")?;
    let lo_ratio = nonzero_weight(&lo, &c2, &a2, "lo c")? / nonzero_weight(&lo, &b2, &a2, "lo b")?;
    Ok(ResolutionReport {
        hi_ratio,
        lo_ratio,
        log2_deviation: (hi_ratio.log2() - lo_ratio.log2()).abs(),
        coarse: [a2, b2, c2],
        coarsen,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enumerate::explore;
    use crate::machine::MachineConfig;
    use crate::weights::state;

    fn rs12() -> RunSet {
        explore(&MachineConfig::unconditional(12, 200).unwrap()).unwrap()
    }

    #[test]
    fn utility_specs() {
        assert_eq!(UtilitySpec::PopcountFraction.eval(&state("0110")).unwrap(), 0.5);
        let t: BTreeMap<_, _> = [(state("0"), 0.5)].into();
        let u = UtilitySpec::lookup_table(t).unwrap();
        assert!(u.check_total(1).is_err());
        assert!(UtilitySpec::lookup_table([(state("0"), 1.5)].into()).is_err());
    }

    #[test]
    fn v_hat_orders_agree() {
        let rs = rs12();
        let zero = UtilitySpec::lookup_table(MindState::universe(2).into_iter().map(|s| (s, 0.0)).collect()).unwrap();
        for a in MindState::universe(2) {
            let Ok(v) = v_hat(&rs, &a, &UtilitySpec::PopcountFraction, 6) else {
                continue;
            };
            assert!((v.weight_sum - v.direct).abs() < 1e-9);
            assert_eq!(v_hat(&rs, &a, &zero, 6).unwrap().weight_sum, 0.0);
            let ones = v_hat(&rs, &a, &UtilitySpec::ConstantOne, 6).unwrap();
            let model = SequenceModel::new(&rs, 2, 6).unwrap();
            assert!(ones.direct <= model.gamma_mass().to_f64() + 1e-12);
        }
    }

    fn scenario(label: &str, pairs: &[(&str, &str, f64)]) -> Scenario {
        Scenario::new(
            label,
            pairs
                .iter()
                .map(|(a, b, p)| ScenarioPair {
                    a: state(a),
                    b: state(b),
                    p: *p,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn teleport_identity_and_zero() {
        let rs = rs12();
        let s = scenario("stay", &[("00", "00", 0.5), ("01", "00", 0.5)]);
        let r = teleport_ratio(&rs, &s, &s, 6).unwrap();
        assert_eq!(r.ratio, 1.0);
        assert_eq!(r.band, TeleportBand::NearOne);
        assert!(Scenario::new("bad", vec![]).is_err());
        assert_eq!(TeleportBand::classify(0.0), TeleportBand::NearZero);
        assert_eq!(TeleportBand::classify(0.3), TeleportBand::Intermediate);
    }

    #[test]
    fn a_z_mirrored_timelines() {
        let rs = rs12();
        // Width 1 so that a follow-up block fits inside twelve program bits.
        let states = vec![state("0"), state("1"), state("0")];
        let tl = [
            AgentTimeline::new("x", states.clone()).unwrap(),
            AgentTimeline::new("y", states).unwrap(),
        ];
        assert!(a_z(&rs, &tl, 6, false).is_err());
        let r = a_z(&rs, &tl, 6, true).unwrap();
        assert_eq!(r.product_form, 1.0);
        assert_eq!(r.geomean_form, 1.0);
        assert!(r.defined_terms > 0);
    }

    #[test]
    fn verdicts() {
        let d = Thresholds::default();
        assert_eq!(ethics_verdict(1.0, d).unwrap(), Verdict::UtilitarianLeaning);
        assert_eq!(ethics_verdict(0.0, d).unwrap(), Verdict::EgoismLeaning);
        assert_eq!(ethics_verdict(0.3, d).unwrap(), Verdict::Indeterminate);
        assert!(ethics_verdict(0.3, Thresholds { low: 0.5, high: 0.1 }).is_err());
    }

    #[test]
    fn coarsening() {
        assert_eq!(Coarsen::EvenSubsample.apply(&state("01")).unwrap(), state("0"));
        assert_eq!(Coarsen::EvenSubsample.apply(&state("1011")).unwrap(), state("11"));
        assert_eq!(Coarsen::PairwiseXor.apply(&state("1011")).unwrap(), state("10"));
        assert!(Coarsen::PairwiseXor.apply(&state("101")).is_err());
    }

    #[test]
    fn resolution_b_equals_c() {
        let rs = rs12();
        let r = resolution_check(&rs, &state("00"), &state("00"), &state("00"), Coarsen::EvenSubsample, 6).unwrap();
        assert_eq!((r.hi_ratio, r.lo_ratio, r.log2_deviation), (1.0, 1.0, 0.0));
        let err = resolution_check(&rs, &state("00"), &state("00"), &state("11"), Coarsen::PairwiseXor, 1);
        if let Err(e) = err {
            assert!(matches!(e, Error::ZeroWeight(_)), "{e}");
        }
    }
}
