//! Uncertainty-set algebra and candidate-space partitioning.
//!
//! Sets are either canonical unions of disjoint closed intervals or label
//! subsets of a discrete candidate space. All stored intervals are closed;
//! set difference keeps the endpoint it would otherwise open, so boundary
//! points (a measure-zero set) are resolved toward membership.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A closed interval `[lo, hi]`; `lo == hi` is a single point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::domain(format!("invalid interval [{lo}, {hi}]")));
        }
        Ok(Interval { lo, hi })
    }

    pub fn contains(&self, y: f64) -> bool {
        self.lo <= y && y <= self.hi
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }
}

/// The space of candidate values the merged set is drawn from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum CandidateSpace {
    /// A finite bounding interval of the real line.
    Continuous { lo: f64, hi: f64 },
    /// A finite ordered label set.
    Discrete { labels: Vec<String> },
}

impl CandidateSpace {
    pub fn continuous(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::domain(format!("invalid candidate space [{lo}, {hi}]")));
        }
        Ok(CandidateSpace::Continuous { lo, hi })
    }

    pub fn discrete<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::domain("discrete candidate space must be nonempty"));
        }
        let mut seen = labels.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != labels.len() {
            return Err(Error::domain("duplicate labels in candidate space"));
        }
        Ok(CandidateSpace::Discrete { labels })
    }

    pub fn measure(&self) -> f64 {
        match self {
            CandidateSpace::Continuous { lo, hi } => hi - lo,
            CandidateSpace::Discrete { labels } => labels.len() as f64,
        }
    }
}

/// A finite union of disjoint closed intervals, or a label subset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum UncertaintySet {
    Intervals(Vec<Interval>),
    Labels(Vec<String>),
}

impl UncertaintySet {
    pub fn empty_like(space: &CandidateSpace) -> Self {
        match space {
            CandidateSpace::Continuous { .. } => UncertaintySet::Intervals(Vec::new()),
            CandidateSpace::Discrete { .. } => UncertaintySet::Labels(Vec::new()),
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            UncertaintySet::Intervals(v) => v.is_empty(),
            UncertaintySet::Labels(v) => v.is_empty(),
        }
    }

    pub fn contains_point(&self, y: f64) -> bool {
        match self {
            UncertaintySet::Intervals(v) => v.iter().any(|iv| iv.contains(y)),
            UncertaintySet::Labels(_) => false,
        }
    }

    pub fn contains_label(&self, label: &str) -> bool {
        match self {
            UncertaintySet::Labels(v) => v.iter().any(|l| l == label),
            UncertaintySet::Intervals(_) => false,
        }
    }

    /// Total Lebesgue length (intervals) or label count.
    pub fn measure(&self) -> f64 {
        match self {
            UncertaintySet::Intervals(v) => v.iter().map(Interval::len).sum(),
            UncertaintySet::Labels(v) => v.len() as f64,
        }
    }
}

/// Sort, merge overlapping or touching intervals, and drop nothing else.
/// Idempotent; the result satisfies `hi_i < lo_{i+1}` strictly.
pub fn canonicalize(intervals: &[Interval]) -> UncertaintySet {
    let mut sorted: Vec<Interval> = intervals.to_vec();
    sorted.sort_by(|a, b| a.lo.partial_cmp(&b.lo).unwrap());
    let mut out: Vec<Interval> = Vec::with_capacity(sorted.len());
    for iv in sorted {
        match out.last_mut() {
            Some(last) if iv.lo <= last.hi => {
                if iv.hi > last.hi {
                    last.hi = iv.hi;
                }
            }
            _ => out.push(iv),
        }
    }
    UncertaintySet::Intervals(out)
}

fn canonical_labels(labels: &[String]) -> Vec<String> {
    let mut v = labels.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

/// Canonical set intersection.
pub fn intersect(a: &UncertaintySet, b: &UncertaintySet) -> Result<UncertaintySet> {
    match (a, b) {
        (UncertaintySet::Intervals(xs), UncertaintySet::Intervals(ys)) => {
            let mut out = Vec::new();
            let (mut i, mut j) = (0, 0);
            while i < xs.len() && j < ys.len() {
                let lo = xs[i].lo.max(ys[j].lo);
                let hi = xs[i].hi.min(ys[j].hi);
                if lo <= hi {
                    out.push(Interval { lo, hi });
                }
                if xs[i].hi < ys[j].hi {
                    i += 1;
                } else {
                    j += 1;
                }
            }
            Ok(canonicalize(&out))
        }
        (UncertaintySet::Labels(xs), UncertaintySet::Labels(ys)) => {
            let keep: Vec<String> = xs.iter().filter(|l| ys.contains(l)).cloned().collect();
            Ok(UncertaintySet::Labels(canonical_labels(&keep)))
        }
        _ => Err(Error::KindMismatch("intersect on mixed set kinds".into())),
    }
}

/// Canonical set difference `a \ b`. Removing a closed interval keeps the
/// shared endpoints in the result (closed-interval boundary convention).
pub fn difference(a: &UncertaintySet, b: &UncertaintySet) -> Result<UncertaintySet> {
    match (a, b) {
        (UncertaintySet::Intervals(xs), UncertaintySet::Intervals(ys)) => {
            let mut pieces: Vec<Interval> = Vec::new();
            for x in xs {
                let mut rest = vec![*x];
                for y in ys {
                    let mut next = Vec::new();
                    for r in rest {
                        if y.hi < r.lo || y.lo > r.hi {
                            next.push(r);
                            continue;
                        }
                        if y.lo > r.lo {
                            next.push(Interval { lo: r.lo, hi: y.lo.min(r.hi) });
                        }
                        if y.hi < r.hi {
                            next.push(Interval { lo: y.hi.max(r.lo), hi: r.hi });
                        }
                    }
                    rest = next;
                }
                pieces.extend(rest);
            }
            Ok(canonicalize(&pieces))
        }
        (UncertaintySet::Labels(xs), UncertaintySet::Labels(ys)) => {
            let keep: Vec<String> = xs.iter().filter(|l| !ys.contains(l)).cloned().collect();
            Ok(UncertaintySet::Labels(canonical_labels(&keep)))
        }
        _ => Err(Error::KindMismatch("difference on mixed set kinds".into())),
    }
}

/// Canonical set union.
pub fn union(a: &UncertaintySet, b: &UncertaintySet) -> Result<UncertaintySet> {
    match (a, b) {
        (UncertaintySet::Intervals(xs), UncertaintySet::Intervals(ys)) => {
            let mut all = xs.clone();
            all.extend_from_slice(ys);
            Ok(canonicalize(&all))
        }
        (UncertaintySet::Labels(xs), UncertaintySet::Labels(ys)) => {
            let mut all = xs.clone();
            all.extend_from_slice(ys);
            Ok(UncertaintySet::Labels(canonical_labels(&all)))
        }
        _ => Err(Error::KindMismatch("union on mixed set kinds".into())),
    }
}

/// One study's uncertainty set together with its control level.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StudyInput {
    pub set: UncertaintySet,
    pub alpha: f64,
}

impl StudyInput {
    pub fn new(set: UncertaintySet, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::domain(format!("control level must be in (0,1), got {alpha}")));
        }
        Ok(StudyInput { set, alpha })
    }
}

/// A candidate point, real or labelled.
#[derive(Clone, Debug, PartialEq)]
pub enum Point {
    Real(f64),
    Label(String),
}

/// A region of the candidate space on which membership in every study set
/// is constant, together with that membership signature.
#[derive(Clone, Debug)]
pub struct PartitionCell {
    pub region: UncertaintySet,
    /// `signature[l]` is true iff the region lies inside study `l`'s set.
    pub signature: Vec<bool>,
    pub representative: Point,
}

fn membership_signature_real(y: f64, studies: &[StudyInput]) -> Vec<bool> {
    studies.iter().map(|s| s.set.contains_point(y)).collect()
}

fn validate_studies(space: &CandidateSpace, studies: &[StudyInput]) -> Result<()> {
    if studies.is_empty() {
        return Err(Error::validation("at least one study is required"));
    }
    for (l, s) in studies.iter().enumerate() {
        match (space, &s.set) {
            (CandidateSpace::Continuous { lo, hi }, UncertaintySet::Intervals(ivs)) => {
                for iv in ivs {
                    if iv.lo < *lo || iv.hi > *hi {
                        return Err(Error::validation(format!(
                            "study {l} interval [{}, {}] escapes candidate space [{lo}, {hi}]",
                            iv.lo, iv.hi
                        )));
                    }
                }
            }
            (CandidateSpace::Discrete { labels }, UncertaintySet::Labels(ls)) => {
                for label in ls {
                    if !labels.contains(label) {
                        return Err(Error::validation(format!(
                            "study {l} label {label:?} not in candidate space"
                        )));
                    }
                }
            }
            _ => {
                return Err(Error::KindMismatch(format!(
                    "study {l} set kind does not match candidate space"
                )))
            }
        }
    }
    Ok(())
}

/// Refine the candidate space into cells of constant membership signature.
///
/// For continuous spaces the cells are the intervals between consecutive
/// study-set endpoints, with a degenerate point cell inserted wherever a
/// breakpoint's own signature differs from both neighbours (isolated point
/// sets). For discrete spaces, labels are grouped by identical signature.
pub fn build_partition(
    space: &CandidateSpace,
    studies: &[StudyInput],
) -> Result<Vec<PartitionCell>> {
    validate_studies(space, studies)?;
    match space {
        CandidateSpace::Continuous { lo, hi } => {
            let mut breaks = vec![*lo, *hi];
            for s in studies {
                if let UncertaintySet::Intervals(ivs) = &s.set {
                    for iv in ivs {
                        breaks.push(iv.lo);
                        breaks.push(iv.hi);
                    }
                }
            }
            breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
            breaks.dedup();

            let n = breaks.len();
            let mut interior: Vec<PartitionCell> = Vec::with_capacity(n - 1);
            for w in breaks.windows(2) {
                let mid = 0.5 * (w[0] + w[1]);
                let signature = membership_signature_real(mid, studies);
                interior.push(PartitionCell {
                    region: UncertaintySet::Intervals(vec![Interval { lo: w[0], hi: w[1] }]),
                    signature,
                    representative: Point::Real(mid),
                });
            }

            let mut cells: Vec<PartitionCell> = Vec::with_capacity(interior.len());
            for (i, &b) in breaks.iter().enumerate() {
                let sig_b = membership_signature_real(b, studies);
                let differs_left = i == 0 || interior[i - 1].signature != sig_b;
                let differs_right = i == n - 1 || interior[i].signature != sig_b;
                if differs_left && differs_right {
                    cells.push(PartitionCell {
                        region: UncertaintySet::Intervals(vec![Interval { lo: b, hi: b }]),
                        signature: sig_b,
                        representative: Point::Real(b),
                    });
                }
                if i < n - 1 {
                    cells.push(interior[i].clone());
                }
            }
            Ok(cells)
        }
        CandidateSpace::Discrete { labels } => {
            let mut cells: Vec<PartitionCell> = Vec::new();
            for label in labels {
                let signature: Vec<bool> =
                    studies.iter().map(|s| s.set.contains_label(label)).collect();
                match cells.iter_mut().find(|c| c.signature == signature) {
                    Some(cell) => {
                        if let UncertaintySet::Labels(ls) = &mut cell.region {
                            ls.push(label.clone());
                        }
                    }
                    None => cells.push(PartitionCell {
                        region: UncertaintySet::Labels(vec![label.clone()]),
                        signature,
                        representative: Point::Label(label.clone()),
                    }),
                }
            }
            Ok(cells)
        }
    }
}
