//! JSON request handling for `merge` and `mt-synth`.

use serde::Deserialize;
use serde_json::{json, Value};

use setmerge::aggregate::{Aggregator, StatKind};
use setmerge::extensions::{synth_e_mt, synth_p_mt, MtVariant, RejectionSetInput};
use setmerge::merge::{merge, MergeConfig, MergeReport};
use setmerge::numerics::RngStream;
use setmerge::sets::{CandidateSpace, Interval, Point, StudyInput, UncertaintySet};

use crate::{write_output, CliError, CliResult};

/// A `merge` request document.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MergeRequestFile {
    space: SpaceSpec,
    studies: Vec<StudySpec>,
    method: String,
    alpha: f64,
    #[serde(default)]
    tau: Option<f64>,
    #[serde(default)]
    mode: Option<String>,
    seed: u64,
    #[serde(default)]
    independent: Option<bool>,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum SpaceSpec {
    Continuous { lo: f64, hi: f64 },
    Discrete { labels: Vec<String> },
}

/// One study: exactly one of `intervals` or `labels`, matching the space.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StudySpec {
    alpha: f64,
    #[serde(default)]
    intervals: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    labels: Option<Vec<String>>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &str) -> CliResult<T> {
    let body = std::fs::read_to_string(path)?;
    serde_json::from_str(&body).map_err(|e| {
        CliError::Parse(format!("{path}: line {}, column {}: {e}", e.line(), e.column()))
    })
}

fn build_study(spec: &StudySpec, space: &CandidateSpace) -> CliResult<StudyInput> {
    let set = match (&spec.intervals, &spec.labels, space) {
        (Some(ivs), None, CandidateSpace::Continuous { .. }) => {
            let parsed: Result<Vec<Interval>, _> =
                ivs.iter().map(|&[lo, hi]| Interval::new(lo, hi)).collect();
            UncertaintySet::Intervals(parsed?)
        }
        (None, Some(labels), CandidateSpace::Discrete { .. }) => {
            UncertaintySet::Labels(labels.clone())
        }
        _ => {
            return Err(CliError::Validation(
                "each study needs exactly one of \"intervals\" (continuous space) \
                 or \"labels\" (discrete space)"
                    .into(),
            ))
        }
    };
    Ok(StudyInput::new(set, spec.alpha)?)
}

fn set_to_json(set: &UncertaintySet) -> Value {
    match set {
        UncertaintySet::Intervals(v) => {
            json!({ "intervals": v.iter().map(|i| [i.lo, i.hi]).collect::<Vec<_>>() })
        }
        UncertaintySet::Labels(v) => json!({ "labels": v }),
    }
}

fn point_to_json(point: &Point) -> Value {
    match point {
        Point::Real(y) => json!(y),
        Point::Label(s) => json!(s),
    }
}

fn report_to_json(report: &MergeReport, method: &str) -> Value {
    json!({
        "merged": set_to_json(&report.merged),
        "measure": report.merged.measure(),
        "cells": report.cells.iter().map(|c| json!({
            "region": set_to_json(&c.region),
            "signature": c.signature,
            "representative": point_to_json(&c.representative),
            "stats": c.stats,
            "aggregated": c.aggregated,
            "kept": c.kept,
        })).collect::<Vec<_>>(),
        "config": {
            "method": method,
            "alpha": report.config.alpha,
            "tau": report.config.tau,
            "seed": report.config.seed,
            "independent": report.config.independent,
        },
    })
}

pub fn cmd_merge(
    input: &str,
    out: Option<&str>,
    seed: Option<u64>,
    alpha: Option<f64>,
    tau: Option<f64>,
) -> CliResult<()> {
    let req: MergeRequestFile = read_json(input)?;
    let space = match &req.space {
        SpaceSpec::Continuous { lo, hi } => CandidateSpace::continuous(*lo, *hi)?,
        SpaceSpec::Discrete { labels } => CandidateSpace::discrete(labels.clone())?,
    };
    if req.studies.is_empty() {
        return Err(CliError::Validation("at least one study is required".into()));
    }
    let studies: Vec<StudyInput> =
        req.studies.iter().map(|s| build_study(s, &space)).collect::<CliResult<_>>()?;
    let aggregator = Aggregator::from_id(&req.method, studies.len())?;
    if let Some(mode) = &req.mode {
        let expected = match aggregator.stat_kind() {
            StatKind::PValue => "p",
            StatKind::EValue => "e",
        };
        if mode != expected {
            return Err(CliError::Validation(format!(
                "method {:?} aggregates {expected}-values, request says mode {mode:?}",
                req.method
            )));
        }
    }
    let mut config =
        MergeConfig::new(aggregator, alpha.unwrap_or(req.alpha), seed.unwrap_or(req.seed))?;
    if let Some(tau) = tau.or(req.tau) {
        config = config.with_tau(tau)?;
    }
    if req.independent == Some(true) {
        config = config.assert_independent();
    }
    let report = merge(&space, &studies, &config)?;
    let body = serde_json::to_string_pretty(&report_to_json(&report, &req.method))
        .expect("report serializes");
    write_output(out, &format!("{body}\n"))
}

/// An `mt-synth` request document.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MtRequestFile {
    m: usize,
    studies: Vec<MtStudySpec>,
    variant: String,
    seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MtStudySpec {
    alpha: f64,
    rejected: Vec<usize>,
}

pub fn cmd_mt_synth(input: &str, out: Option<&str>) -> CliResult<()> {
    let req: MtRequestFile = read_json(input)?;
    let variant = match req.variant.as_str() {
        "unif-tail" | "UnifTail" => MtVariant::UnifTail,
        "point-mass-one" | "PointMassOne" => MtVariant::PointMassOne,
        other => {
            return Err(CliError::Validation(format!("unknown mt variant {other:?}")))
        }
    };
    let mut p = Vec::with_capacity(req.studies.len());
    let mut e = Vec::with_capacity(req.studies.len());
    for (si, study) in req.studies.iter().enumerate() {
        let rej = RejectionSetInput::new(req.m, study.rejected.clone(), study.alpha)?;
        let mut rng = RngStream::derive(req.seed, &[si as u64]);
        let mut p_row = Vec::with_capacity(req.m);
        let mut e_row = Vec::with_capacity(req.m);
        for i in 0..req.m {
            p_row.push(synth_p_mt(i, &rej, variant, &mut rng)?);
            e_row.push(synth_e_mt(i, &rej)?);
        }
        p.push(p_row);
        e.push(e_row);
    }
    let body = serde_json::to_string_pretty(&json!({
        "m": req.m,
        "variant": req.variant,
        "p": p,
        "e": e,
    }))
    .expect("matrix serializes");
    write_output(out, &format!("{body}\n"))
}
