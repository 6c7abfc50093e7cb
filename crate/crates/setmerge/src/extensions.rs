//! Beyond miscoverage: risk-controlled set merging and multiple-testing
//! rejection-set synthesis.
//!
//! The risk half generalizes the synthetic statistics from the miscoverage
//! indicator to any bounded loss; the multiple-testing half turns a study's
//! rejection set into per-hypothesis synthetic p/e-values.

use std::sync::Arc;

use crate::aggregate::{Aggregator, StatKind, Validity};
use crate::merge::{CellDecision, MergeReport, PURPOSE_MC, PURPOSE_SYNTH};
use crate::numerics::RngStream;
use crate::sets::{build_partition, CandidateSpace, PartitionCell, Point, UncertaintySet};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Risk control
// ---------------------------------------------------------------------------

/// A bounded loss over (set, candidate) pairs, zero when the candidate
/// belongs to the set.
///
/// The loss is evaluated pointwise at partition-cell representatives, so it
/// must depend on the candidate only through set membership (both named
/// instances do). Set-level losses that average over a composite target,
/// like the missing rate, are recovered by averaging the pointwise loss —
/// see [`missing_rate`].
/// A pointwise loss function over (candidate set, candidate).
pub type LossFn = Arc<dyn Fn(&UncertaintySet, &Point) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct LossSpec {
    pub bound: f64,
    loss: LossFn,
}

impl std::fmt::Debug for LossSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LossSpec").field("bound", &self.bound).finish()
    }
}

impl LossSpec {
    pub fn new<F>(bound: f64, loss: F) -> Result<Self>
    where
        F: Fn(&UncertaintySet, &Point) -> f64 + Send + Sync + 'static,
    {
        if !(bound > 0.0 && bound.is_finite()) {
            return Err(Error::domain(format!("loss bound must be positive, got {bound}")));
        }
        Ok(LossSpec { bound, loss: Arc::new(loss) })
    }

    pub fn eval(&self, set: &UncertaintySet, candidate: &Point) -> Result<f64> {
        let v = (self.loss)(set, candidate);
        if !(0.0..=self.bound).contains(&v) {
            return Err(Error::domain(format!(
                "loss value {v} outside [0, {}]",
                self.bound
            )));
        }
        Ok(v)
    }

    /// The 0/1 miscoverage loss: 1 when the candidate falls outside the set.
    pub fn miscoverage() -> Self {
        LossSpec {
            bound: 1.0,
            loss: Arc::new(|set, p| if point_in_set(set, p) { 0.0 } else { 1.0 }),
        }
    }

    /// Pointwise form of the missing-rate loss (multi-label targets). For a
    /// single candidate label this is the miscoverage indicator; the
    /// set-level missing rate is its average over the target's labels.
    pub fn missing_rate_pointwise() -> Self {
        Self::miscoverage()
    }
}

fn point_in_set(set: &UncertaintySet, p: &Point) -> bool {
    match p {
        Point::Real(x) => set.contains_point(*x),
        Point::Label(s) => set.contains_label(s),
    }
}

/// The missing rate of `set` against a multi-label target: the fraction of
/// the target's labels that the set fails to include.
pub fn missing_rate(set: &UncertaintySet, target: &[String]) -> Result<f64> {
    if target.is_empty() {
        return Err(Error::domain("missing rate needs a nonempty target"));
    }
    let missed = target.iter().filter(|l| !set.contains_label(l)).count();
    Ok(missed as f64 / target.len() as f64)
}

/// One study in the risk setting: a set controlling a bounded loss at level
/// `beta`, plus the threshold `tau_ell` used by the p-value variant.
#[derive(Clone, Debug)]
pub struct RiskStudyInput {
    pub set: UncertaintySet,
    pub beta: f64,
    pub tau_ell: f64,
}

impl RiskStudyInput {
    /// Uses the neutral default threshold `(beta + bound) / 2`.
    pub fn new(set: UncertaintySet, beta: f64, bound: f64) -> Result<Self> {
        Self::with_tau(set, beta, (beta + bound) / 2.0, bound)
    }

    /// `tau_ell` may equal `bound`; at that endpoint the p-value variant
    /// coincides exactly with the plain miscoverage construction.
    pub fn with_tau(set: UncertaintySet, beta: f64, tau_ell: f64, bound: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < bound) {
            return Err(Error::domain(format!("beta must be in (0, {bound}), got {beta}")));
        }
        if !(tau_ell > beta && tau_ell <= bound) {
            return Err(Error::domain(format!(
                "tau_ell must be in (beta, bound] = ({beta}, {bound}], got {tau_ell}"
            )));
        }
        Ok(RiskStudyInput { set, beta, tau_ell })
    }
}

/// Synthetic p-value for a bounded loss: Unif(0, beta/tau) when the realized
/// loss reaches the threshold `tau_ell`, Unif(beta/tau, 1) otherwise.
pub fn synth_p_risk(
    loss_value: f64,
    beta: f64,
    tau_ell: f64,
    bound: f64,
    rng: &mut RngStream,
) -> Result<f64> {
    if !(beta > 0.0 && beta < tau_ell && tau_ell <= bound) {
        return Err(Error::domain(format!(
            "need 0 < beta < tau_ell <= bound, got beta={beta} tau_ell={tau_ell} bound={bound}"
        )));
    }
    if !(0.0..=bound).contains(&loss_value) {
        return Err(Error::domain(format!("loss value {loss_value} outside [0, {bound}]")));
    }
    let split = beta / tau_ell;
    if loss_value >= tau_ell {
        rng.uniform(0.0, split)
    } else {
        rng.uniform(split, 1.0)
    }
}

/// Synthetic e-value for a bounded loss: realized loss over the risk level.
pub fn synth_e_risk(loss_value: f64, beta: f64) -> Result<f64> {
    if beta.is_nan() || beta <= 0.0 {
        return Err(Error::domain(format!("beta must be positive, got {beta}")));
    }
    if loss_value < 0.0 {
        return Err(Error::domain(format!("loss value {loss_value} is negative")));
    }
    Ok(loss_value / beta)
}

/// Configuration for a risk-controlled merge.
#[derive(Clone, Debug)]
pub struct RiskMergeConfig {
    pub aggregator: Aggregator,
    /// Target risk level of the merged set.
    pub beta: f64,
    /// E-mode threshold adjustment (keep when the aggregate is strictly
    /// below `tau * bound / beta`); 1 by default.
    pub tau: f64,
    pub seed: u64,
    pub independent: bool,
}

impl RiskMergeConfig {
    pub fn new(aggregator: Aggregator, beta: f64, seed: u64) -> Self {
        RiskMergeConfig { aggregator, beta, tau: 1.0, seed, independent: false }
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
}

/// Merge risk-controlling sets by test inversion: keep a candidate when the
/// aggregated synthetic p-value exceeds `beta/bound`, or the aggregated
/// e-value falls strictly below `tau * bound / beta`.
///
/// With the miscoverage loss (bound 1) and `tau_ell = 1` this reproduces the
/// plain merge bit for bit under a shared seed.
pub fn merge_risk(
    space: &CandidateSpace,
    studies: &[RiskStudyInput],
    loss: &LossSpec,
    config: &RiskMergeConfig,
) -> Result<MergeReport> {
    let start = std::time::Instant::now();
    if studies.is_empty() {
        return Err(Error::validation("no studies supplied"));
    }
    if !(config.beta > 0.0 && config.beta < loss.bound) {
        return Err(Error::domain(format!(
            "target beta must be in (0, {}), got {}",
            loss.bound, config.beta
        )));
    }
    if config.aggregator.validity() == Validity::IndependentOnly && !config.independent {
        return Err(Error::validation(
            "this aggregation rule is valid only under independence; \
             assert independence explicitly to use it",
        ));
    }

    // Same cell construction and substream keying as the plain merge.
    let cells: Vec<PartitionCell> = match space {
        CandidateSpace::Discrete { labels } => labels
            .iter()
            .map(|label| {
                let signature =
                    studies.iter().map(|s| s.set.contains_label(label)).collect();
                PartitionCell {
                    region: UncertaintySet::Labels(vec![label.clone()]),
                    signature,
                    representative: Point::Label(label.clone()),
                }
            })
            .collect(),
        CandidateSpace::Continuous { .. } => {
            let plain: Vec<crate::sets::StudyInput> = studies
                .iter()
                .map(|s| crate::sets::StudyInput::new(s.set.clone(), s.beta.min(0.5)))
                .collect::<Result<_>>()?;
            build_partition(space, &plain)?
        }
    };

    let kind = config.aggregator.stat_kind();
    let mut decisions = Vec::with_capacity(cells.len());
    for (cell_idx, cell) in cells.iter().enumerate() {
        let mut stats = Vec::with_capacity(studies.len());
        for (study_idx, study) in studies.iter().enumerate() {
            let loss_value = loss.eval(&study.set, &cell.representative)?;
            let stat = match kind {
                StatKind::PValue => {
                    let mut rng = RngStream::derive(
                        config.seed,
                        &[PURPOSE_SYNTH, cell_idx as u64, study_idx as u64],
                    );
                    synth_p_risk(loss_value, study.beta, study.tau_ell, loss.bound, &mut rng)?
                }
                StatKind::EValue => synth_e_risk(loss_value, study.beta)?,
            };
            stats.push(stat);
        }
        let mut mc_rng = RngStream::derive(config.seed, &[PURPOSE_MC, cell_idx as u64]);
        let aggregated = config.aggregator.combine(&stats, &mut mc_rng)?;
        let kept = match kind {
            StatKind::PValue => aggregated > config.beta / loss.bound,
            StatKind::EValue => {
                crate::merge::e_strictly_below(aggregated, config.tau * loss.bound / config.beta)
            }
        };
        decisions.push(CellDecision {
            region: cell.region.clone(),
            signature: cell.signature.clone(),
            representative: cell.representative.clone(),
            stats,
            aggregated,
            kept,
        });
    }

    let kept_regions: Vec<UncertaintySet> =
        decisions.iter().filter(|d| d.kept).map(|d| d.region.clone()).collect();
    let merged = match space {
        CandidateSpace::Continuous { .. } => {
            let mut all = Vec::new();
            for r in &kept_regions {
                if let UncertaintySet::Intervals(v) = r {
                    all.extend_from_slice(v);
                }
            }
            crate::sets::canonicalize(&all)
        }
        CandidateSpace::Discrete { .. } => {
            let mut all = Vec::new();
            for r in &kept_regions {
                if let UncertaintySet::Labels(v) = r {
                    all.extend_from_slice(v);
                }
            }
            all.sort_unstable();
            all.dedup();
            UncertaintySet::Labels(all)
        }
    };

    // Echo through the plain-merge report shape; alpha slot carries beta.
    let echo = crate::merge::MergeConfig {
        aggregator: config.aggregator.clone(),
        alpha: config.beta,
        tau: config.tau,
        seed: config.seed,
        independent: config.independent,
    };
    Ok(MergeReport {
        merged,
        cells: decisions,
        config: echo,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

// ---------------------------------------------------------------------------
// Multiple testing
// ---------------------------------------------------------------------------

/// A study's rejection set over `m` hypotheses, with its FDR level.
/// Hypothesis indices are zero-based.
#[derive(Clone, Debug)]
pub struct RejectionSetInput {
    pub m: usize,
    pub rejected: Vec<usize>,
    pub alpha: f64,
}

impl RejectionSetInput {
    pub fn new(m: usize, mut rejected: Vec<usize>, alpha: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::domain("need at least one hypothesis"));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::domain(format!("alpha must be in (0,1), got {alpha}")));
        }
        rejected.sort_unstable();
        rejected.dedup();
        if rejected.last().is_some_and(|&i| i >= m) {
            return Err(Error::domain("rejected index out of range"));
        }
        Ok(RejectionSetInput { m, rejected, alpha })
    }

    fn is_rejected(&self, i: usize) -> bool {
        self.rejected.binary_search(&i).is_ok()
    }
}

/// How a non-rejected hypothesis's synthetic p-value is generated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MtVariant {
    /// Uniform on the upper tail (alpha |R| / m, 1).
    UnifTail,
    /// Point mass at 1 (valid in aggregate for any FDR-controlling study).
    PointMassOne,
}

/// Synthetic p-value for hypothesis `i` from a rejection set: small uniform
/// below `alpha |R| / m` when rejected, otherwise the variant's tail value.
pub fn synth_p_mt(
    i: usize,
    rej: &RejectionSetInput,
    variant: MtVariant,
    rng: &mut RngStream,
) -> Result<f64> {
    if i >= rej.m {
        return Err(Error::domain(format!("hypothesis index {i} out of range (m={})", rej.m)));
    }
    let split = rej.alpha * rej.rejected.len() as f64 / rej.m as f64;
    if rej.is_rejected(i) {
        rng.uniform(0.0, split)
    } else {
        match variant {
            MtVariant::UnifTail => rng.uniform(split, 1.0),
            MtVariant::PointMassOne => Ok(1.0),
        }
    }
}

/// Synthetic e-value for hypothesis `i`: `m / (alpha |R|)` when rejected,
/// 0 otherwise (all zero when the rejection set is empty).
pub fn synth_e_mt(i: usize, rej: &RejectionSetInput) -> Result<f64> {
    if i >= rej.m {
        return Err(Error::domain(format!("hypothesis index {i} out of range (m={})", rej.m)));
    }
    if rej.rejected.is_empty() || !rej.is_rejected(i) {
        return Ok(0.0);
    }
    Ok(rej.m as f64 / (rej.alpha * rej.rejected.len() as f64))
}

/// The Benjamini–Hochberg step-up procedure; returns the zero-based indices
/// of rejected hypotheses.
pub fn bh_procedure(pvalues: &[f64], alpha: f64) -> Result<Vec<usize>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha must be in (0,1), got {alpha}")));
    }
    for &p in pvalues {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain(format!("p-value {p} outside [0,1]")));
        }
    }
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]));
    let mut cutoff = None;
    for (rank, &idx) in order.iter().enumerate() {
        if pvalues[idx] * m as f64 <= alpha * (rank + 1) as f64 {
            cutoff = Some(pvalues[idx]);
        }
    }
    let Some(cut) = cutoff else { return Ok(Vec::new()) };
    let mut rejected: Vec<usize> = (0..m).filter(|&i| pvalues[i] <= cut).collect();
    rejected.sort_unstable();
    Ok(rejected)
}
