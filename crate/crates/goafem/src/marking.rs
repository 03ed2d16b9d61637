//! Dörfler bulk marking and the rule combining primal and dual marks.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::IndicatorField;
use crate::mesh::ElemId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    #[default]
    Union,
    MinCardinality,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Union => "union",
            Strategy::MinCardinality => "min-cardinality",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarkingConfig {
    pub theta: f64,
    pub bins: usize,
    pub strategy: Strategy,
}

impl Default for MarkingConfig {
    fn default() -> Self {
        MarkingConfig {
            theta: 0.5,
            bins: 30,
            strategy: Strategy::Union,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarkingError {
    #[error("theta must lie in (0, 1], got {0}")]
    Theta(f64),
    #[error("bin count must be positive")]
    Bins,
    #[error("marked sets come from different mesh revisions ({0} vs {1})")]
    RevisionMismatch(u64, u64),
    #[error("empty indicator field")]
    Empty,
}

impl MarkingConfig {
    pub fn validate(&self) -> Result<(), MarkingError> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(MarkingError::Theta(self.theta));
        }
        if self.bins == 0 {
            return Err(MarkingError::Bins);
        }
        Ok(())
    }
}

/// Marked elements, sorted by id, tagged with the mesh revision they refer to.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MarkedSet {
    pub elements: Vec<ElemId>,
    pub revision: u64,
}

impl MarkedSet {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn contains(&self, e: ElemId) -> bool {
        self.elements.binary_search(&e).is_ok()
    }
}

/// Achieved bulk ratio `Σ_marked η² / Σ η²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DorflerCheck {
    pub ratio: f64,
    pub passed: bool,
}

fn in_order_sums(field: &IndicatorField, marked: &[bool]) -> (f64, f64) {
    let mut total = 0.0;
    let mut part = 0.0;
    for (i, v) in field.values.iter().enumerate() {
        let s = v * v;
        total += s;
        if marked[i] {
            part += s;
        }
    }
    (part, total)
}

fn check_flags(field: &IndicatorField, flags: &[bool], theta: f64) -> DorflerCheck {
    let (part, total) = in_order_sums(field, flags);
    if total == 0.0 {
        return DorflerCheck { ratio: 1.0, passed: true };
    }
    DorflerCheck {
        ratio: part / total,
        passed: part >= theta * theta * total,
    }
}

/// Checks `Σ_marked η² ≥ θ² Σ η²`; elements absent from the field are ignored.
pub fn verify_dorfler(field: &IndicatorField, marked: &[ElemId], theta: f64) -> DorflerCheck {
    let mut sorted = marked.to_vec();
    sorted.sort_unstable();
    let flags: Vec<bool> = field.leaves.iter().map(|e| sorted.binary_search(e).is_ok()).collect();
    check_flags(field, &flags, theta)
}

/// Dörfler set with at most twice the minimal cardinality, in linear time.
///
/// Squared indicators are grouped into factor-2 bins below the maximum;
/// whole bins are taken from the top and the last bin is scanned in
/// ascending element id. Values below `max · 2^{-bins}` are sorted only if
/// they are needed.
pub fn dorfler_mark(field: &IndicatorField, cfg: &MarkingConfig) -> Result<MarkedSet, MarkingError> {
    cfg.validate()?;
    if field.is_empty() {
        return Err(MarkingError::Empty);
    }
    let sq = field.squares();
    let max = sq.iter().copied().fold(0.0, f64::max);
    let mut out = MarkedSet {
        elements: Vec::new(),
        revision: field.revision,
    };
    if max == 0.0 {
        return Ok(out);
    }
    let total: f64 = sq.iter().sum();
    let target = cfg.theta * cfg.theta * total;

    // leaf positions are in ascending element id, so pushes keep id order
    let nb = cfg.bins;
    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); nb + 1];
    for (i, &s) in sq.iter().enumerate() {
        if s == 0.0 {
            continue;
        }
        let k = (max / s).log2().floor();
        let k = if k.is_finite() && k < nb as f64 { k as usize } else { nb };
        bins[k.min(nb)].push(i);
    }
    if let Some(last) = bins.last_mut() {
        last.sort_by(|&a, &b| sq[b].total_cmp(&sq[a]).then(a.cmp(&b)));
    }

    let mut flags = vec![false; sq.len()];
    let mut acc = 0.0;
    'outer: for bin in &bins {
        let bin_sum: f64 = bin.iter().map(|&i| sq[i]).sum();
        if acc + bin_sum < target {
            for &i in bin {
                flags[i] = true;
            }
            acc += bin_sum;
            continue;
        }
        for &i in bin {
            flags[i] = true;
            acc += sq[i];
            if acc >= target {
                break 'outer;
            }
        }
    }
    // summation order differs from the check; top up with the largest leftovers
    if !check_flags(field, &flags, cfg.theta).passed {
        let mut rest: Vec<usize> = (0..sq.len()).filter(|&i| !flags[i] && sq[i] > 0.0).collect();
        rest.sort_by(|&a, &b| sq[b].total_cmp(&sq[a]).then(a.cmp(&b)));
        for i in rest {
            flags[i] = true;
            if check_flags(field, &flags, cfg.theta).passed {
                break;
            }
        }
    }
    out.elements = flags
        .iter()
        .zip(&field.leaves)
        .filter(|(f, _)| **f)
        .map(|(_, &e)| e)
        .collect();
    out.elements.sort_unstable();
    Ok(out)
}

/// Size of the smallest Dörfler set: the shortest prefix of the sorted squares.
pub fn minimal_cardinality(field: &IndicatorField, theta: f64) -> usize {
    let mut sq = field.squares();
    let total: f64 = sq.iter().sum();
    if total == 0.0 {
        return 0;
    }
    sq.sort_by(|a, b| b.total_cmp(a));
    let target = theta * theta * total;
    let mut acc = 0.0;
    for (k, s) in sq.iter().enumerate() {
        acc += s;
        if acc >= target {
            return k + 1;
        }
    }
    sq.len()
}

pub fn union_mark(mp: &MarkedSet, md: &MarkedSet) -> Result<MarkedSet, MarkingError> {
    if mp.revision != md.revision {
        return Err(MarkingError::RevisionMismatch(mp.revision, md.revision));
    }
    let mut elements: Vec<ElemId> = mp.elements.iter().chain(&md.elements).copied().collect();
    elements.sort_unstable();
    elements.dedup();
    Ok(MarkedSet {
        elements,
        revision: mp.revision,
    })
}

/// Applies the configured strategy; `MinCardinality` keeps the smaller set
/// (the primal one on ties).
pub fn combine(mp: &MarkedSet, md: &MarkedSet, strategy: Strategy) -> Result<MarkedSet, MarkingError> {
    match strategy {
        Strategy::Union => union_mark(mp, md),
        Strategy::MinCardinality => {
            if mp.revision != md.revision {
                return Err(MarkingError::RevisionMismatch(mp.revision, md.revision));
            }
            Ok(if md.len() < mp.len() { md.clone() } else { mp.clone() })
        }
    }
}
