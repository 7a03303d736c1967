//! A toy deterministic universe and the substrate formulas built on it.
//!
//! φ is the space-time diagram of an elementary cellular automaton with a
//! cyclic boundary, flattened row by row (seed row first). Conditioning on φ
//! means building a RunSet with φ on the aux tape.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::bits::Bits;
use crate::dyadic::Dyadic;
use crate::enumerate::RunSet;
use crate::error::{Error, Result};
use crate::prior;
use crate::weights::{MindState, SequenceModel};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Cosmos {
    pub rule: u8,
    pub seed_row: Bits,
    pub steps: usize,
    pub phi: Bits,
}

/// One update of an elementary CA row with cyclic boundary.
pub fn ca_step(rule: u8, row: &Bits) -> Bits {
    let w = row.len();
    let cell = |i: usize| row.get(i % w).unwrap_or(false) as u8;
    (0..w)
        .map(|i| {
            let idx = cell(i + w - 1) << 2 | cell(i) << 1 | cell(i + 1);
            (rule >> idx) & 1 == 1
        })
        .collect()
}

pub fn gen_phi(rule: u32, seed_row: &Bits, steps: usize) -> Result<Cosmos> {
    let rule = u8::try_from(rule).map_err(|_| Error::Domain(format!("CA rule {rule} is outside 0..=255")))?;
    if seed_row.len() < 3 {
        return Err(Error::Domain(format!(
            "seed row needs at least 3 cells, got {}",
            seed_row.len()
        )));
    }
    let mut phi = seed_row.clone();
    let mut row = seed_row.clone();
    for _ in 0..steps {
        row = ca_step(rule, &row);
        phi = phi.concat(&row);
    }
    Ok(Cosmos {
        rule,
        seed_row: seed_row.clone(),
        steps,
        phi,
    })
}

impl Cosmos {
    pub fn width(&self) -> usize {
        self.seed_row.len()
    }

    /// Row `t`, with the seed as row 0.
    pub fn row(&self, t: usize) -> Option<Bits> {
        (t <= self.steps).then(|| self.phi.slice(t * self.width(), (t + 1) * self.width()))
    }

    /// Distinct width-`w` windows of φ, taken every `stride` bits, in order of
    /// first occurrence.
    pub fn windows(&self, w: usize, stride: usize) -> Result<Vec<MindState>> {
        if w == 0 || stride == 0 || w > self.phi.len() {
            return Err(Error::Domain(format!(
                "cannot cut width-{w} windows with stride {stride} from {} bits",
                self.phi.len()
            )));
        }
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for start in (0..=self.phi.len() - w).step_by(stride) {
            let s = MindState::new(self.phi.slice(start, start + w))?;
            if seen.insert(s.clone()) {
                out.push(s);
            }
        }
        Ok(out)
    }
}

/// Each bit written twice, cut back to the original width: `abcd` ↦ `aabb`.
pub fn double_bits(s: &MindState) -> MindState {
    let w = s.width();
    let doubled: Bits = s.bits().iter().flat_map(|b| [b, b]).take(w).collect();
    MindState::new(doubled).expect("width is preserved")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SubstrateSet {
    pub label: String,
    pub members: Vec<MindState>,
}

impl SubstrateSet {
    pub fn new(label: impl Into<String>, members: Vec<MindState>) -> Result<Self> {
        let label = label.into();
        let Some(first) = members.first() else {
            return Err(Error::Domain(format!("substrate set {label} is empty")));
        };
        let w = first.width();
        if let Some(bad) = members.iter().find(|m| m.width() != w) {
            return Err(Error::WidthMismatch {
                expected: w,
                found: bad.width(),
            });
        }
        Ok(SubstrateSet { label, members })
    }

    pub fn width(&self) -> usize {
        self.members[0].width()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Distinct transformed members, in order of first occurrence.
    pub fn map(&self, label: impl Into<String>, f: impl Fn(&MindState) -> MindState) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let members = self.members.iter().map(f).filter(|m| seen.insert(m.clone())).collect();
        SubstrateSet::new(label, members)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Sdf {
    pub value: f64,
    /// Σ_a m̂(a|φ), exact.
    pub sum: Dyadic,
    pub members: usize,
    pub all_zero: bool,
}

/// AM over members of m̂(a|φ).
pub fn sdf(rs_phi: &RunSet, z: &SubstrateSet) -> Sdf {
    let sum: Dyadic = z
        .members
        .iter()
        .map(|a| prior::m_cond_hat(rs_phi, a.bits()).value)
        .sum();
    Sdf {
        value: sum.to_f64() / z.len() as f64,
        sum,
        members: z.len(),
        all_zero: sum.is_zero(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulationReport {
    pub ratio: f64,
    pub p_sim: f64,
    pub sdf_s: Sdf,
    pub sdf_r: Sdf,
}

/// |S|·sdf(S) / |R|·sdf(R), which is Σ_S m̂(·|φ) / Σ_R m̂(·|φ).
pub fn simulation_ratio(rs_phi: &RunSet, s: &SubstrateSet, r: &SubstrateSet) -> Result<SimulationReport> {
    let (sdf_s, sdf_r) = (sdf(rs_phi, s), sdf(rs_phi, r));
    if sdf_r.all_zero {
        return Err(Error::ZeroDenominator(format!("|R|·sdf(R) = 0 for {}", r.label)));
    }
    let ratio = sdf_s.sum.ratio(&sdf_r.sum);
    Ok(SimulationReport {
        ratio,
        p_sim: ratio / (1.0 + ratio),
        sdf_s,
        sdf_r,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GFit {
    pub g: f64,
    pub log2_g: f64,
    pub residual_gsd: f64,
    pub points: usize,
}

/// Least squares in the log2 domain for `lhs ≈ g·rhs`, given `(log2 lhs,
/// log2 rhs)` pairs.
pub fn fit_g_log2(points: &[(f64, f64)]) -> Result<GFit> {
    if points.is_empty() {
        return Err(Error::Degenerate("no points to fit g".into()));
    }
    if points.iter().any(|(l, r)| !l.is_finite() || !r.is_finite()) {
        return Err(Error::Infeasible("fit_g needs positive values on both sides".into()));
    }
    let n = points.len() as f64;
    let residuals: Vec<f64> = points.iter().map(|(l, r)| l - r).collect();
    let log2_g = residuals.iter().sum::<f64>() / n;
    let var = residuals.iter().map(|d| (d - log2_g).powi(2)).sum::<f64>() / n;
    Ok(GFit {
        g: log2_g.exp2(),
        log2_g,
        residual_gsd: var.sqrt().exp2(),
        points: points.len(),
    })
}

/// Fits P̂(σ_N = a) ≈ g·M̂(φ)·m̂(a|φ) over `a ∈ A`.
pub fn fit_g(rs: &RunSet, rs_phi: &RunSet, a_set: &SubstrateSet, n_max: usize) -> Result<GFit> {
    let phi = rs_phi.config().aux_tape();
    let big_m = prior::big_m_hat(rs, phi).value;
    if big_m.is_zero() {
        return Err(Error::Infeasible(format!(
            "M̂(φ) = 0 for |φ| = {} at depth {}",
            phi.len(),
            rs.depth_cap()
        )));
    }
    let model = SequenceModel::new(rs, a_set.width(), n_max)?;
    let mut points = Vec::with_capacity(a_set.len());
    for a in &a_set.members {
        let lhs = model.evidence(a)?.value;
        let cond = prior::m_cond_hat(rs_phi, a.bits()).value;
        if lhs.is_zero() || cond.is_zero() {
            return Err(Error::Infeasible(format!("zero estimate on one side for {a}")));
        }
        points.push((lhs.log2(), big_m.log2() + cond.log2()));
    }
    fit_g_log2(&points)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TriangleReport {
    /// AM over (a ∈ R, b ∈ S) of ŵ(a|b), over pairs with nonzero evidence.
    pub lhs: f64,
    /// `None` when sdf(R) = 0.
    pub bound_ratio: Option<f64>,
    pub g: Option<f64>,
    /// `bound_ratio < g`, when both are known.
    pub within_bound: Option<bool>,
    pub pairs: usize,
    pub excluded_pairs: usize,
    pub sdf_r: Sdf,
    pub sdf_s: Sdf,
}

pub fn triangle_check(
    rs: &RunSet,
    rs_phi: &RunSet,
    r: &SubstrateSet,
    s: &SubstrateSet,
    n_max: usize,
    g: Option<f64>,
) -> Result<TriangleReport> {
    let model = SequenceModel::new(rs, r.width(), n_max)?;
    let mut total = 0.0;
    let (mut pairs, mut excluded) = (0, 0);
    for b in &s.members {
        match model.posterior(b) {
            Ok(post) => {
                for a in &r.members {
                    model.check_width(a)?;
                    total += post.weight(a);
                    pairs += 1;
                }
            }
            Err(Error::ZeroEvidence(_)) => excluded += r.len(),
            Err(e) => return Err(e),
        }
    }
    if pairs == 0 {
        return Err(Error::Degenerate("every (a, b) pair has zero evidence".into()));
    }
    let lhs = total / pairs as f64;
    let (sdf_r, sdf_s) = (sdf(rs_phi, r), sdf(rs_phi, s));
    let bound_ratio = (!sdf_r.all_zero).then(|| lhs * sdf_s.value / sdf_r.value);
    Ok(TriangleReport {
        lhs,
        bound_ratio,
        g,
        within_bound: bound_ratio.zip(g).map(|(b, g)| b < g),
        pairs,
        excluded_pairs: excluded,
        sdf_r,
        sdf_s,
    })
}
