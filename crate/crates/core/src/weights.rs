//! Mind-state sequences, the random tape position, and weights.
//!
//! The monotone output of every run is cut into consecutive blocks of a
//! fixed width ℓ; block `n` (1-based) is the run's `n`-th mind-state. The
//! tape position `N` has prior m̂_nat, and the same values serve as the
//! horizon discount γ_n. Everything is truncated at an explicit `n_max`, and
//! the γ mass beyond it is reported rather than ignored.
//!
//! Two kinds of mass appear below:
//!
//! * node credit: `2^-c` at the tree node where an event (a block completing)
//!   happens, counted once per node;
//! * leaf mass: `2^-|prefix|` of a finished run.
//!
//! Because the leaves below any node tile its subtree, summing leaf masses
//! over runs with a given block equals summing node credits. Posterior
//! weights are per run and use leaf masses; `p_sigma_n` and the chain form of
//! the weight use node credits. Tests check that both routes agree exactly.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bits::Bits;
use crate::dyadic::Dyadic;
use crate::enumerate::{RunRecord, RunSet};
use crate::error::{Error, Result};
use crate::family::RunSetFamily;
use crate::prior::{self, DiscreteTable};

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "Bits", into = "Bits")]
pub struct MindState(Bits);

impl MindState {
    pub fn new(bits: Bits) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::Domain("a mind-state needs at least one bit".into()));
        }
        Ok(MindState(bits))
    }

    pub fn width(&self) -> usize {
        self.0.len()
    }

    pub fn bits(&self) -> &Bits {
        &self.0
    }

    /// All `2^width` states in increasing order.
    pub fn universe(width: usize) -> Vec<MindState> {
        (0..1u64 << width)
            .map(|v| MindState(Bits::from_uint(v, width)))
            .collect()
    }
}

impl TryFrom<Bits> for MindState {
    type Error = Error;

    fn try_from(b: Bits) -> Result<Self> {
        MindState::new(b)
    }
}

impl From<MindState> for Bits {
    fn from(m: MindState) -> Bits {
        m.0
    }
}

impl FromStr for MindState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MindState::new(s.parse()?)
    }
}

impl fmt::Display for MindState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

impl fmt::Debug for MindState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(&self.0, f)
    }
}

/// Shorthand for tests: panics on malformed input.
pub fn state(s: &str) -> MindState {
    s.parse().expect("mind-state literal")
}

/// A run seen as a sequence of mind-states.
#[derive(Clone, Debug)]
pub struct SequenceView<'a> {
    pub run: &'a RunRecord,
    pub blocks: Vec<MindState>,
    /// Consumed bits when each block's last bit was emitted.
    pub block_credits: Vec<u32>,
}

impl<'a> SequenceView<'a> {
    pub fn new(run: &'a RunRecord, width: usize) -> Self {
        let blocks: Vec<MindState> = run.output.blocks(width).map(MindState).collect();
        let block_credits = (1..=blocks.len())
            .map(|i| run.emission_profile[i * width - 1])
            .collect();
        SequenceView {
            run,
            blocks,
            block_credits,
        }
    }

    /// Block `n`, 1-based.
    pub fn block(&self, n: usize) -> Option<&MindState> {
        n.checked_sub(1).and_then(|i| self.blocks.get(i))
    }

    /// Tree node at which block `n` was completed.
    fn node(&self, n: usize) -> &'a [bool] {
        &self.run.consumed_prefix.as_slice()[..self.block_credits[n - 1] as usize]
    }
}

/// P̂(σ_N = a) truncated at `n_max`, with the γ mass left out by truncation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Evidence {
    pub value: Dyadic,
    pub tail_bound: Dyadic,
}

/// Blocked view of a RunSet at one width and truncation level.
pub struct SequenceModel<'a> {
    rs: &'a RunSet,
    width: usize,
    n_max: usize,
    gamma: Vec<Dyadic>,
    views: Vec<SequenceView<'a>>,
}

impl<'a> SequenceModel<'a> {
    pub fn new(rs: &'a RunSet, width: usize, n_max: usize) -> Result<Self> {
        if width == 0 {
            return Err(Error::Domain("block width must be >= 1".into()));
        }
        if n_max == 0 {
            return Err(Error::Domain("n_max must be >= 1".into()));
        }
        let table = DiscreteTable::new(rs);
        let gamma = (1..=n_max as u64).map(|n| table.natural(n)).collect();
        let views = rs.records().iter().map(|r| SequenceView::new(r, width)).collect();
        Ok(SequenceModel {
            rs,
            width,
            n_max,
            gamma,
            views,
        })
    }

    pub fn run_set(&self) -> &'a RunSet {
        self.rs
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn views(&self) -> &[SequenceView<'a>] {
        &self.views
    }

    /// γ_n = m̂_nat(n) for `1 <= n <= n_max`, zero otherwise.
    pub fn gamma(&self, n: usize) -> Dyadic {
        n.checked_sub(1)
            .and_then(|i| self.gamma.get(i))
            .copied()
            .unwrap_or(Dyadic::ZERO)
    }

    /// Σ_{n <= n_max} γ_n.
    pub fn gamma_mass(&self) -> Dyadic {
        self.gamma.iter().sum()
    }

    /// Upper bound on Σ_{n > n_max} γ_n.
    pub fn gamma_tail(&self) -> Dyadic {
        Dyadic::ONE.checked_sub(&self.gamma_mass()).unwrap_or(Dyadic::ZERO)
    }

    pub fn check_width(&self, s: &MindState) -> Result<()> {
        if s.width() != self.width {
            return Err(Error::WidthMismatch {
                expected: self.width,
                found: s.width(),
            });
        }
        Ok(())
    }

    /// P̂(σ_n = a): node credit where block `n` completes and equals `a`.
    pub fn p_sigma_n(&self, n: usize, a: &MindState) -> Result<Dyadic> {
        self.check_width(a)?;
        if n == 0 {
            return Err(Error::Domain("block index is 1-based".into()));
        }
        let mut nodes: HashSet<&[bool]> = HashSet::new();
        let mut total = Dyadic::ZERO;
        for v in &self.views {
            if v.block(n) == Some(a) {
                let node = v.node(n);
                if nodes.insert(node) {
                    total += Dyadic::pow2_neg(node.len() as u32);
                }
            }
        }
        Ok(total)
    }

    /// P̂(σ_N = a) = Σ_{n <= n_max} m̂_nat(n) · P̂(σ_n = a).
    pub fn evidence(&self, a: &MindState) -> Result<Evidence> {
        let mut value = Dyadic::ZERO;
        for n in 1..=self.n_max {
            let g = self.gamma(n);
            if !g.is_zero() {
                value += g * self.p_sigma_n(n, a)?;
            }
        }
        Ok(Evidence {
            value,
            tail_bound: self.gamma_tail(),
        })
    }

    /// Posterior over runs given σ_N = a.
    pub fn posterior(&self, a: &MindState) -> Result<Posterior<'_, 'a>> {
        let evidence = self.evidence(a)?.value;
        if evidence.is_zero() {
            return Err(Error::ZeroEvidence(a.bits().clone()));
        }
        let mut numerators = Vec::new();
        for (idx, v) in self.views.iter().enumerate() {
            let hits: Dyadic = v
                .blocks
                .iter()
                .take(self.n_max)
                .enumerate()
                .filter(|(_, blk)| *blk == a)
                .map(|(i, _)| self.gamma(i + 1))
                .sum();
            if !hits.is_zero() {
                numerators.push((idx, hits * v.run.mass()));
            }
        }
        Ok(Posterior {
            model: self,
            state: a.clone(),
            evidence,
            numerators,
        })
    }

    /// ŵ(b|a) = E_ρ[Σ_j γ_j [σ_j = b]] under the posterior for `a`.
    pub fn weight_definitional(&self, a: &MindState, b: &MindState) -> Result<f64> {
        self.check_width(b)?;
        Ok(self.posterior(a)?.weight(b))
    }
}

/// Runs weighted by P(σ = x* | σ_N = a); the exact numerators are kept so
/// callers can compare before the final division.
pub struct Posterior<'m, 'a> {
    model: &'m SequenceModel<'a>,
    state: MindState,
    evidence: Dyadic,
    numerators: Vec<(usize, Dyadic)>,
}

impl<'m, 'a> Posterior<'m, 'a> {
    pub fn state(&self) -> &MindState {
        &self.state
    }

    pub fn evidence(&self) -> Dyadic {
        self.evidence
    }

    /// Σ of unnormalized run weights; equals the evidence exactly.
    pub fn numerator_total(&self) -> Dyadic {
        self.numerators.iter().map(|(_, d)| *d).sum()
    }

    /// Runs with non-zero posterior weight, with exact numerators and the
    /// normalized weight.
    pub fn runs(&self) -> impl Iterator<Item = (&'m SequenceView<'a>, Dyadic, f64)> + '_ {
        self.numerators
            .iter()
            .map(|(i, d)| (&self.model.views[*i], *d, d.ratio(&self.evidence)))
    }

    fn discounted_hits(&self, v: &SequenceView<'_>, b: &MindState) -> Dyadic {
        v.blocks
            .iter()
            .take(self.model.n_max)
            .enumerate()
            .filter(|(_, blk)| *blk == b)
            .map(|(j, _)| self.model.gamma(j + 1))
            .sum()
    }

    /// Exact numerator of ŵ(b|a), before dividing by the evidence.
    pub fn weight_numerator(&self, b: &MindState) -> Dyadic {
        self.numerators
            .iter()
            .map(|(i, d)| *d * self.discounted_hits(&self.model.views[*i], b))
            .sum()
    }

    pub fn weight(&self, b: &MindState) -> f64 {
        self.weight_numerator(b).ratio(&self.evidence)
    }

    /// Exact weight numerators for every state occurring among the first
    /// `n_max` blocks of a posterior run.
    pub fn weight_numerators(&self) -> BTreeMap<MindState, Dyadic> {
        let mut out: BTreeMap<MindState, Dyadic> = BTreeMap::new();
        for (i, d) in &self.numerators {
            for (j, blk) in self.model.views[*i].blocks.iter().take(self.model.n_max).enumerate() {
                *out.entry(blk.clone()).or_default() += *d * self.model.gamma(j + 1);
            }
        }
        out
    }
}

pub fn p_sigma_n(rs: &RunSet, n: usize, a: &MindState) -> Result<Dyadic> {
    SequenceModel::new(rs, a.width(), n.max(1))?.p_sigma_n(n, a)
}

pub fn p_sigma_big_n(rs: &RunSet, a: &MindState, n_max: usize) -> Result<Evidence> {
    SequenceModel::new(rs, a.width(), n_max)?.evidence(a)
}

#[derive(Clone, Debug)]
pub struct PosteriorRun<'a> {
    pub view: SequenceView<'a>,
    pub numerator: Dyadic,
    pub weight: f64,
}

pub fn posterior_runs<'a>(rs: &'a RunSet, a: &MindState, n_max: usize) -> Result<Vec<PosteriorRun<'a>>> {
    let model = SequenceModel::new(rs, a.width(), n_max)?;
    let post = model.posterior(a)?;
    Ok(post
        .runs()
        .map(|(v, numerator, weight)| PosteriorRun {
            view: v.clone(),
            numerator,
            weight,
        })
        .collect())
}

pub fn weight_definitional(rs: &RunSet, a: &MindState, b: &MindState, n_max: usize) -> Result<f64> {
    SequenceModel::new(rs, a.width(), n_max)?.weight_definitional(a, b)
}

/// Exact numerator and denominator of the weight written as a sum over
/// sequences of M̂-credit times Σ_{i,j} m̂(i) m̂(j) [x_i = a][x_j = b].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChainForm {
    pub numerator: Dyadic,
    pub evidence: Dyadic,
}

impl ChainForm {
    pub fn value(&self) -> f64 {
        self.numerator.ratio(&self.evidence)
    }
}

/// Computes the weight through joint block events credited at tree nodes,
/// without going through per-run posteriors.
pub fn weight_chain(rs: &RunSet, a: &MindState, b: &MindState, n_max: usize) -> Result<ChainForm> {
    let w = a.width();
    if b.width() != w {
        return Err(Error::WidthMismatch {
            expected: w,
            found: b.width(),
        });
    }
    let gamma: Vec<Dyadic> = (1..=n_max as u64)
        .map(|n| prior::m_nat_hat(rs, n).map(|e| e.value))
        .collect::<Result<_>>()?;
    let block_is =
        |out: &Bits, i: usize, s: &MindState| out.len() >= i * w && out.slice((i - 1) * w, i * w) == *s.bits();

    let mut evidence = Dyadic::ZERO;
    for i in 1..=n_max {
        let mut seen: BTreeSet<&[bool]> = BTreeSet::new();
        let mut mass = Dyadic::ZERO;
        for r in rs.records() {
            if block_is(&r.output, i, a) {
                let c = r.emission_profile[i * w - 1] as usize;
                if seen.insert(&r.consumed_prefix.as_slice()[..c]) {
                    mass += Dyadic::pow2_neg(c as u32);
                }
            }
        }
        evidence += gamma[i - 1] * mass;
    }

    let mut numerator = Dyadic::ZERO;
    for i in 1..=n_max {
        for j in 1..=n_max {
            let g = gamma[i - 1] * gamma[j - 1];
            if g.is_zero() {
                continue;
            }
            let mut seen: BTreeSet<&[bool]> = BTreeSet::new();
            let mut joint = Dyadic::ZERO;
            for r in rs.records() {
                if block_is(&r.output, i, a) && block_is(&r.output, j, b) {
                    let c = r.emission_profile[i * w - 1].max(r.emission_profile[j * w - 1]) as usize;
                    if seen.insert(&r.consumed_prefix.as_slice()[..c]) {
                        joint += Dyadic::pow2_neg(c as u32);
                    }
                }
            }
            numerator += g * joint;
        }
    }
    Ok(ChainForm { numerator, evidence })
}

/// m̂(a ++ b) / m̂(a).
pub fn weight_fast(rs: &RunSet, a: &MindState, b: &MindState) -> Result<f64> {
    let pair = prior::m_pair_hat(rs, a.bits(), b.bits(), a.width())?.value;
    let single = prior::m_hat(rs, a.bits()).value;
    if single.is_zero() {
        return Err(Error::ZeroDenominator(format!("m̂(\"{a}\") = 0")));
    }
    Ok(pair.ratio(&single))
}

/// m̂(b | a), read from a RunSet whose aux tape is `a`.
pub fn weight_cond(rs_a: &RunSet, b: &MindState) -> f64 {
    prior::m_cond_hat(rs_a, b.bits()).value.to_f64()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightReport {
    pub a: MindState,
    pub b: MindState,
    pub definitional: f64,
    /// `None` when m̂(a) = 0.
    pub fast_ratio: Option<f64>,
    pub conditional: f64,
    pub depth_cap: usize,
    pub step_cap: u64,
    pub n_max: usize,
    pub gamma_tail: Dyadic,
}

pub fn weight_report(family: &RunSetFamily, a: &MindState, b: &MindState, n_max: usize) -> Result<WeightReport> {
    let rs = family.unconditional()?;
    let model = SequenceModel::new(&rs, a.width(), n_max)?;
    let definitional = model.weight_definitional(a, b)?;
    let fast_ratio = match weight_fast(&rs, a, b) {
        Ok(v) => Some(v),
        Err(Error::ZeroDenominator(_)) => None,
        Err(e) => return Err(e),
    };
    let conditional = weight_cond(&*family.get(a.bits())?, b);
    Ok(WeightReport {
        a: a.clone(),
        b: b.clone(),
        definitional,
        fast_ratio,
        conditional,
        depth_cap: rs.depth_cap(),
        step_cap: rs.step_cap(),
        n_max,
        gamma_tail: model.gamma_tail(),
    })
}

/// K̂(x | y) from the family member with aux tape `y`.
fn k_cond(family: &RunSetFamily, x: &MindState, y: &MindState) -> Result<f64> {
    prior::k_hat(&*family.get(y.bits())?, x.bits())
}

/// max{K̂(a|b), K̂(b|a)} / max{K̂(a), K̂(b)}.
pub fn nid(family: &RunSetFamily, a: &MindState, b: &MindState) -> Result<f64> {
    let rs = family.unconditional()?;
    let ka = prior::k_hat(&rs, a.bits())?;
    let kb = prior::k_hat(&rs, b.bits())?;
    let ka_b = k_cond(family, a, b)?;
    let kb_a = k_cond(family, b, a)?;
    let den = ka.max(kb);
    if den <= 0.0 {
        return Err(Error::ZeroDenominator("max{K̂(a), K̂(b)} = 0".into()));
    }
    Ok(ka_b.max(kb_a) / den)
}

/// K̂(a) − K̂(a|b); may come out negative at small caps.
pub fn mutual_info(family: &RunSetFamily, a: &MindState, b: &MindState) -> Result<f64> {
    let rs = family.unconditional()?;
    Ok(prior::k_hat(&rs, a.bits())? - k_cond(family, a, b)?)
}

/// Spearman rank correlation with average ranks for ties. `None` for fewer
/// than two points or a constant input.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut k = 0;
        while k < idx.len() {
            let mut end = k;
            while end + 1 < idx.len() && v[idx[end + 1]] == v[idx[k]] {
                end += 1;
            }
            let avg = (k + end) as f64 / 2.0 + 1.0;
            for &i in &idx[k..=end] {
                r[i] = avg;
            }
            k = end + 1;
        }
        r
    }
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankAgreement {
    pub points: usize,
    pub definitional_vs_fast: Option<f64>,
    pub definitional_vs_conditional: Option<f64>,
    pub fast_vs_conditional: Option<f64>,
}

/// Rank agreement of the three estimators over a family of `b` for fixed
/// `a`. Points where the fast ratio is undefined are dropped.
pub fn rank_agreement(family: &RunSetFamily, a: &MindState, bs: &[MindState], n_max: usize) -> Result<RankAgreement> {
    let (mut d, mut f, mut c) = (Vec::new(), Vec::new(), Vec::new());
    for b in bs {
        let r = weight_report(family, a, b, n_max)?;
        if let Some(fast) = r.fast_ratio {
            d.push(r.definitional);
            f.push(fast);
            c.push(r.conditional);
        }
    }
    Ok(RankAgreement {
        points: d.len(),
        definitional_vs_fast: spearman(&d, &f),
        definitional_vs_conditional: spearman(&d, &c),
        fast_vs_conditional: spearman(&f, &c),
    })
}
