//! The merge engine: synthetic statistics per candidate or per partition
//! cell, aggregation, and test inversion into a merged set.
//!
//! Synthetic draws are keyed by `(seed, cell index, study)`, so running the
//! finite-space merge on the cell representatives of a continuous instance
//! reproduces the continuous merge decision for decision.

use std::time::Instant;

use crate::aggregate::{Aggregator, StatKind, Validity};
use crate::numerics::RngStream;
use crate::sets::{
    build_partition, canonicalize, CandidateSpace, PartitionCell, Point, StudyInput,
    UncertaintySet,
};
use crate::synthetic::{synth_e, synth_p};
use crate::{Error, Result};

/// Purpose tags for substream derivation.
pub(crate) const PURPOSE_SYNTH: u64 = 1;
pub(crate) const PURPOSE_MC: u64 = 2;

/// Configuration for one merge run.
#[derive(Clone, Debug)]
pub struct MergeConfig {
    pub aggregator: Aggregator,
    /// Target control level of the merged set.
    pub alpha: f64,
    /// E-mode threshold adjustment; the merged set keeps cells with
    /// aggregated e-value strictly below `tau / alpha`.
    pub tau: f64,
    pub seed: u64,
    /// Caller's assertion that the studies are independent; required to use
    /// independence-only aggregation rules.
    pub independent: bool,
}

impl MergeConfig {
    pub fn new(aggregator: Aggregator, alpha: f64, seed: u64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::domain(format!("target level must be in (0,1), got {alpha}")));
        }
        Ok(MergeConfig { aggregator, alpha, tau: 1.0, seed, independent: false })
    }

    pub fn with_tau(mut self, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::domain(format!("tau must be in (0,1], got {tau}")));
        }
        self.tau = tau;
        Ok(self)
    }

    pub fn assert_independent(mut self) -> Self {
        self.independent = true;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.aggregator.validity() == Validity::IndependentOnly && !self.independent {
            return Err(Error::validation(
                "this aggregation rule is valid only under independence; \
                 assert independence explicitly to use it",
            ));
        }
        Ok(())
    }
}

/// Per-cell record of the merge decision.
#[derive(Clone, Debug)]
pub struct CellDecision {
    pub region: UncertaintySet,
    pub signature: Vec<bool>,
    pub representative: Point,
    /// The per-study synthetic statistics that entered the aggregation.
    pub stats: Vec<f64>,
    pub aggregated: f64,
    pub kept: bool,
}

/// Result of one merge run.
#[derive(Clone, Debug)]
pub struct MergeReport {
    pub merged: UncertaintySet,
    pub cells: Vec<CellDecision>,
    pub config: MergeConfig,
    pub wall_time_secs: f64,
}

fn decide_cells(
    cells: &[PartitionCell],
    studies: &[StudyInput],
    config: &MergeConfig,
) -> Result<Vec<CellDecision>> {
    config.validate()?;
    let kind = config.aggregator.stat_kind();
    let mut out = Vec::with_capacity(cells.len());
    for (cell_idx, cell) in cells.iter().enumerate() {
        let mut stats = Vec::with_capacity(studies.len());
        for (study_idx, study) in studies.iter().enumerate() {
            let member = cell.signature[study_idx];
            let stat = match kind {
                StatKind::PValue => {
                    let mut rng = RngStream::derive(
                        config.seed,
                        &[PURPOSE_SYNTH, cell_idx as u64, study_idx as u64],
                    );
                    synth_p(member, study.alpha, &mut rng)?
                }
                StatKind::EValue => synth_e(member, study.alpha)?,
            };
            stats.push(stat);
        }
        let mut mc_rng = RngStream::derive(config.seed, &[PURPOSE_MC, cell_idx as u64]);
        let aggregated = config.aggregator.combine(&stats, &mut mc_rng)?;
        let kept = match kind {
            StatKind::PValue => aggregated > config.alpha,
            StatKind::EValue => e_strictly_below(aggregated, config.tau / config.alpha),
        };
        out.push(CellDecision {
            region: cell.region.clone(),
            signature: cell.signature.clone(),
            representative: cell.representative.clone(),
            stats,
            aggregated,
            kept,
        });
    }
    Ok(out)
}

/// The strict e-mode comparison `aggregated < threshold`, robust to float
/// rounding at exact rational ties (e.g. the e-mean with exactly half the
/// studies covering equals `tau / alpha` in real arithmetic, but lands one
/// ulp to either side in floats). Genuine gaps between attainable e-values
/// and the threshold are many orders of magnitude wider than the guard.
pub(crate) fn e_strictly_below(aggregated: f64, threshold: f64) -> bool {
    aggregated < threshold * (1.0 - 1e-9)
}

fn assemble(cells: Vec<CellDecision>, config: &MergeConfig, start: Instant) -> Result<MergeReport> {
    let kept: Vec<&UncertaintySet> = cells.iter().filter(|c| c.kept).map(|c| &c.region).collect();
    let merged = match kept.first() {
        None => {
            // Empty merged set; pick the representation from any cell.
            match cells.first().map(|c| &c.region) {
                Some(UncertaintySet::Labels(_)) | None => UncertaintySet::Labels(Vec::new()),
                Some(UncertaintySet::Intervals(_)) => UncertaintySet::Intervals(Vec::new()),
            }
        }
        Some(UncertaintySet::Intervals(_)) => {
            let mut all = Vec::new();
            for s in &kept {
                if let UncertaintySet::Intervals(v) = s {
                    all.extend_from_slice(v);
                }
            }
            canonicalize(&all)
        }
        Some(UncertaintySet::Labels(_)) => {
            let mut all = Vec::new();
            for s in &kept {
                if let UncertaintySet::Labels(v) = s {
                    all.extend_from_slice(v);
                }
            }
            all.sort_unstable();
            all.dedup();
            UncertaintySet::Labels(all)
        }
    };
    Ok(MergeReport {
        merged,
        cells,
        config: config.clone(),
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// Merge over a finite candidate space, one decision per label.
///
/// Synthetic draws are keyed by label position, matching the cell indexing
/// of [`merge_continuous`] when the labels are cell representatives.
pub fn merge_finite(
    space: &CandidateSpace,
    studies: &[StudyInput],
    config: &MergeConfig,
) -> Result<MergeReport> {
    let start = Instant::now();
    let labels = match space {
        CandidateSpace::Discrete { labels } => labels,
        CandidateSpace::Continuous { .. } => {
            return Err(Error::validation("merge_finite requires a discrete candidate space"))
        }
    };
    // One pseudo-cell per label, in label order.
    let cells: Vec<PartitionCell> = labels
        .iter()
        .map(|label| {
            let signature = studies.iter().map(|s| s.set.contains_label(label)).collect();
            PartitionCell {
                region: UncertaintySet::Labels(vec![label.clone()]),
                signature,
                representative: Point::Label(label.clone()),
            }
        })
        .collect();
    for (l, s) in studies.iter().enumerate() {
        if let UncertaintySet::Intervals(_) = s.set {
            return Err(Error::KindMismatch(format!(
                "study {l} has an interval set in a discrete space"
            )));
        }
    }
    let decisions = decide_cells(&cells, studies, config)?;
    assemble(decisions, config, start)
}

/// Merge over a continuous candidate space via the membership partition.
pub fn merge_continuous(
    space: &CandidateSpace,
    studies: &[StudyInput],
    config: &MergeConfig,
) -> Result<MergeReport> {
    let start = Instant::now();
    if !matches!(space, CandidateSpace::Continuous { .. }) {
        return Err(Error::validation("merge_continuous requires a continuous candidate space"));
    }
    let cells = build_partition(space, studies)?;
    let decisions = decide_cells(&cells, studies, config)?;
    assemble(decisions, config, start)
}

/// Merge with whichever algorithm matches the space kind.
pub fn merge(
    space: &CandidateSpace,
    studies: &[StudyInput],
    config: &MergeConfig,
) -> Result<MergeReport> {
    match space {
        CandidateSpace::Continuous { .. } => merge_continuous(space, studies, config),
        CandidateSpace::Discrete { .. } => merge_finite(space, studies, config),
    }
}

/// The strict-majority vote set: candidates covered by strictly more than
/// `threshold` of the studies. With the default threshold 1/2 this equals
/// the e-mean merge at tau = 1/2 when all control levels are equal.
pub fn majority_vote(
    space: &CandidateSpace,
    studies: &[StudyInput],
    threshold: f64,
) -> Result<UncertaintySet> {
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::domain(format!("vote threshold must be in [0,1), got {threshold}")));
    }
    let cells = match space {
        CandidateSpace::Continuous { .. } => build_partition(space, studies)?,
        CandidateSpace::Discrete { .. } => build_partition(space, studies)?,
    };
    let l = studies.len() as f64;
    let mut merged = UncertaintySet::empty_like(space);
    for cell in &cells {
        let frac = cell.signature.iter().filter(|&&b| b).count() as f64 / l;
        if frac > threshold {
            merged = crate::sets::union(&merged, &cell.region)?;
        }
    }
    Ok(merged)
}
