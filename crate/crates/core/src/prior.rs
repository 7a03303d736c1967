//! Lower-bound estimates of the discrete, monotone, conditional and
//! natural-number priors, read off a [`RunSet`].
//!
//! All values are exact dyadic sums over enumerated programs, so they can
//! only grow as the caps are raised.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::Serialize;

use crate::bits::Bits;
use crate::dyadic::Dyadic;
use crate::enumerate::RunSet;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    Discrete,
    Monotone,
    Conditional,
    Natural,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(untagged)]
pub enum Subject {
    Bits(Bits),
    Natural(u64),
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subject::Bits(b) => write!(f, "\"{b}\""),
            Subject::Natural(n) => write!(f, "n={n}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PriorEstimate {
    pub value: Dyadic,
    pub kind: PriorKind,
    pub depth_cap: usize,
    pub step_cap: u64,
    pub subject: Subject,
}

impl PriorEstimate {
    fn new(rs: &RunSet, kind: PriorKind, subject: Subject, value: Dyadic) -> Self {
        PriorEstimate {
            value,
            kind,
            depth_cap: rs.depth_cap(),
            step_cap: rs.step_cap(),
            subject,
        }
    }
}

fn halting_mass(rs: &RunSet, x: &Bits) -> Dyadic {
    rs.halted().filter(|r| r.output == *x).map(|r| r.mass()).sum()
}

/// m̂(x): mass of halting programs whose output is exactly `x`.
pub fn m_hat(rs: &RunSet, x: &Bits) -> PriorEstimate {
    PriorEstimate::new(rs, PriorKind::Discrete, Subject::Bits(x.clone()), halting_mass(rs, x))
}

/// m̂(x | y) for the aux tape `y` the RunSet was built with.
pub fn m_cond_hat(rs_y: &RunSet, x: &Bits) -> PriorEstimate {
    PriorEstimate::new(
        rs_y,
        PriorKind::Conditional,
        Subject::Bits(x.clone()),
        halting_mass(rs_y, x),
    )
}

/// M̂(x): credits `2^-c` once per tree node at which the `|x|`-th output
/// bit has just been emitted and the output so far equals `x`, where `c` is
/// the number of program bits consumed at that moment.
pub fn big_m_hat(rs: &RunSet, x: &Bits) -> PriorEstimate {
    PriorEstimate::new(rs, PriorKind::Monotone, Subject::Bits(x.clone()), monotone_mass(rs, x))
}

pub(crate) fn monotone_mass(rs: &RunSet, x: &Bits) -> Dyadic {
    if x.is_empty() {
        return Dyadic::ONE;
    }
    let k = x.len();
    let mut nodes: HashSet<&[bool]> = HashSet::new();
    let mut total = Dyadic::ZERO;
    for r in rs.records() {
        if r.output.len() < k || !r.output.as_slice().starts_with(x.as_slice()) {
            continue;
        }
        let c = r.emission_profile[k - 1] as usize;
        if nodes.insert(&r.consumed_prefix.as_slice()[..c]) {
            total += Dyadic::pow2_neg(c as u32);
        }
    }
    total
}

/// m̂ of the natural number `n` through the bijective binary encoding.
pub fn m_nat_hat(rs: &RunSet, n: u64) -> Result<PriorEstimate> {
    let x = Bits::from_natural(n).ok_or_else(|| Error::Domain(format!("natural prior needs n >= 1, got {n}")))?;
    Ok(PriorEstimate::new(
        rs,
        PriorKind::Natural,
        Subject::Natural(n),
        halting_mass(rs, &x),
    ))
}

/// K̂(x) = -log2 m̂(x).
pub fn k_hat(rs: &RunSet, x: &Bits) -> Result<f64> {
    let m = halting_mass(rs, x);
    if m.is_zero() {
        return Err(Error::UnsupportedSubject {
            subject: format!("\"{x}\" (aux \"{}\")", rs.config().aux_tape()),
        });
    }
    Ok(-m.log2())
}

/// m̂ of the fixed-width pair encoding `a ++ b`.
pub fn m_pair_hat(rs: &RunSet, a: &Bits, b: &Bits, width: usize) -> Result<PriorEstimate> {
    for s in [a, b] {
        if s.len() != width {
            return Err(Error::WidthMismatch {
                expected: width,
                found: s.len(),
            });
        }
    }
    let ab = a.concat(b);
    Ok(PriorEstimate::new(
        rs,
        PriorKind::Discrete,
        Subject::Bits(ab.clone()),
        halting_mass(rs, &ab),
    ))
}

/// Discrete prior for every output seen, built in one pass.
#[derive(Clone, Debug, Default)]
pub struct DiscreteTable {
    by_output: BTreeMap<Bits, Dyadic>,
}

impl DiscreteTable {
    pub fn new(rs: &RunSet) -> Self {
        let mut by_output: BTreeMap<Bits, Dyadic> = BTreeMap::new();
        for r in rs.halted() {
            *by_output.entry(r.output.clone()).or_default() += r.mass();
        }
        DiscreteTable { by_output }
    }

    pub fn get(&self, x: &Bits) -> Dyadic {
        self.by_output.get(x).copied().unwrap_or(Dyadic::ZERO)
    }

    /// m̂_nat(n); zero for `n = 0`.
    pub fn natural(&self, n: u64) -> Dyadic {
        Bits::from_natural(n).map(|x| self.get(&x)).unwrap_or(Dyadic::ZERO)
    }

    /// Σ_x m̂(x).
    pub fn total(&self) -> Dyadic {
        self.by_output.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Bits, &Dyadic)> {
        self.by_output.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::bits;
    use crate::enumerate::{explore, explore_naive};
    use crate::machine::MachineConfig;

    fn rs(depth: usize, steps: u64) -> RunSet {
        explore(&MachineConfig::unconditional(depth, steps).unwrap()).unwrap()
    }

    #[test]
    fn empty_string_discrete_values() {
        // Frozen from explore_naive at the same caps.
        assert_eq!(
            m_hat(
                &explore_naive(&MachineConfig::unconditional(3, 10).unwrap()).unwrap(),
                &bits("")
            )
            .value,
            Dyadic::new(1, 3)
        );
        assert_eq!(m_hat(&rs(3, 10), &bits("")).value, Dyadic::new(1, 3));
        assert_eq!(m_hat(&rs(6, 10), &bits("")).value, Dyadic::new(3, 4));
        assert_eq!(k_hat(&rs(3, 10), &bits("")).unwrap(), 3.0);
    }

    #[test]
    fn monotone_root_is_one() {
        assert_eq!(big_m_hat(&rs(6, 10), &bits("")).value, Dyadic::ONE);
    }

    #[test]
    fn monotone_zero_at_depth_six() {
        // Oracle: naive enumeration, counting each crediting node by hand.
        let naive = explore_naive(&MachineConfig::unconditional(6, 10).unwrap()).unwrap();
        let mut nodes = std::collections::BTreeSet::new();
        for r in naive.records() {
            if r.output.get(0) == Some(false) {
                nodes.insert(r.consumed_prefix.prefix(r.emission_profile[0] as usize));
            }
        }
        let expected: Dyadic = nodes.iter().map(|p| Dyadic::pow2_neg(p.len() as u32)).sum();
        let got = big_m_hat(&rs(6, 10), &bits("0")).value;
        assert_eq!(got, expected);
        assert!(got >= Dyadic::pow2_neg(6));
        // OUT first (1/8), or a neutral opcode then OUT (LEFT, RIGHT, AUX: 3/64).
        assert_eq!(got, Dyadic::new(11, 6));
    }

    #[test]
    fn conditional_copy_program() {
        let c = MachineConfig::new(9, 10, bits("1")).unwrap();
        let rs_y = explore(&c).unwrap();
        let v = m_cond_hat(&rs_y, &bits("1")).value;
        assert!(v >= Dyadic::pow2_neg(9));
        assert!(rs_y.halted().any(|r| r.consumed_prefix == bits("111100000")));
        // Empty aux is the unconditional machine.
        let plain = rs(9, 10);
        assert_eq!(m_cond_hat(&plain, &bits("01")).value, m_hat(&plain, &bits("01")).value);
    }

    #[test]
    fn natural_encoding() {
        let r = rs(9, 50);
        assert_eq!(m_nat_hat(&r, 1).unwrap().value, m_hat(&r, &bits("")).value);
        assert_eq!(m_nat_hat(&r, 2).unwrap().value, m_hat(&r, &bits("0")).value);
        assert!(matches!(m_nat_hat(&r, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn k_hat_errors_on_zero() {
        let r = rs(3, 10);
        assert!(matches!(k_hat(&r, &bits("1")), Err(Error::UnsupportedSubject { .. })));
    }

    #[test]
    fn pair_prior() {
        let r = rs(6, 10);
        let p = m_pair_hat(&r, &bits("0"), &bits("0"), 1).unwrap();
        let naive = explore_naive(&MachineConfig::unconditional(6, 10).unwrap()).unwrap();
        let expected: Dyadic = naive
            .halted()
            .filter(|r| r.output == bits("00"))
            .map(|r| r.mass())
            .sum();
        assert_eq!(p.value, expected);
        assert!(matches!(
            m_pair_hat(&r, &bits("0"), &bits("01"), 1),
            Err(Error::WidthMismatch { .. })
        ));
    }

    #[test]
    fn table_matches_direct_sums() {
        let r = rs(12, 50);
        let t = DiscreteTable::new(&r);
        for (x, v) in t.iter() {
            assert_eq!(*v, m_hat(&r, x).value);
        }
        assert!(t.total() <= Dyadic::ONE);
    }
}
