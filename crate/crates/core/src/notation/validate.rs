use serde::{Deserialize, Serialize};

use super::{
    has_routing_flexibility, parse_triplet_spanned, ConstraintTag, NotationError, ObjectiveSpec,
    ProblemTriplet, SetupKind, EXCLUSIVE_PAIRS,
};
use crate::objectives::MetricId;

/// Byte range into the triplet text a violation refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

/// A consistency rule broken by a triplet or instance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: String,
    pub message: String,
    pub span: Option<Span>,
}

impl Violation {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        Violation {
            code: code.to_string(),
            message: message.into(),
            span: None,
        }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.span {
            Some(s) => write!(f, "[{}] {} (at {}..{})", self.code, self.message, s.start, s.end),
            None => write!(f, "[{}] {}", self.code, self.message),
        }
    }
}

/// Where a violation should point when the triplet came from text.
enum Anchor {
    Alpha,
    Tag(ConstraintTag),
    Gamma,
}

fn check(t: &ProblemTriplet) -> Vec<(Violation, Anchor)> {
    let mut out = Vec::new();
    let has = |tag| t.beta.contains(&tag);

    if t.alpha.count == Some(0) {
        out.push((
            Violation::new("setup-count", "machine count must be at least 1"),
            Anchor::Alpha,
        ));
    }
    if has(ConstraintTag::Prmu) && t.alpha.kind != SetupKind::Fm {
        out.push((
            Violation::new(
                "prmu-requires-flow-shop",
                format!("prmu applies to Fm only, not {}", t.alpha.kind.token()),
            ),
            Anchor::Tag(ConstraintTag::Prmu),
        ));
    }
    if has(ConstraintTag::BlockIn) && !has_routing_flexibility(t) {
        out.push((
            Violation::new(
                "block_in-requires-routing-flexibility",
                format!(
                    "block_in needs a setup with routing flexibility, {} has none",
                    t.alpha.kind.token()
                ),
            ),
            Anchor::Tag(ConstraintTag::BlockIn),
        ));
    }
    if (has(ConstraintTag::DmdJ) || has(ConstraintTag::DmdJS)) && has(ConstraintTag::RjS) {
        out.push((
            Violation::new(
                "dmd-excludes-stochastic-release",
                "with demand, release dates are chosen by the system and cannot be stochastic",
            ),
            Anchor::Tag(ConstraintTag::RjS),
        ));
    }
    for (a, b) in EXCLUSIVE_PAIRS {
        if has(a) && has(b) {
            out.push((
                Violation::new(
                    "mutually-exclusive-tags",
                    format!("{} and {} cannot both be present", a.token(), b.token()),
                ),
                Anchor::Tag(b),
            ));
        }
    }
    let fleets: Vec<u32> = t
        .beta
        .iter()
        .filter_map(|b| match b {
            ConstraintTag::TrN(n) => Some(*n),
            _ => None,
        })
        .collect();
    if fleets.len() > 1 || (!fleets.is_empty() && has(ConstraintTag::TrInf)) {
        out.push((
            Violation::new(
                "mutually-exclusive-tags",
                "at most one transport tag may be present",
            ),
            Anchor::Tag(ConstraintTag::TrInf),
        ));
    }
    for n in &fleets {
        if *n == 0 {
            out.push((
                Violation::new("transport-fleet-size", "tr(n) requires n >= 1"),
                Anchor::Tag(ConstraintTag::TrN(0)),
            ));
        }
    }

    let terms = t.gamma.terms();
    if terms
        .iter()
        .any(|m| m.metric == MetricId::UtilizationTransport)
        && fleets.is_empty()
        && !has(ConstraintTag::TrInf)
    {
        out.push((
            Violation::new(
                "transport-utilization-requires-transport",
                "Utl_tr needs tr(n) or tr(inf) in the constraint set",
            ),
            Anchor::Gamma,
        ));
    }
    for m in &terms {
        if !m.metric.admits(m.aggregation) {
            out.push((
                Violation::new(
                    "aggregation-not-admitted",
                    format!(
                        "{} cannot be aggregated with {}",
                        m.metric.symbol(),
                        m.aggregation.token()
                    ),
                ),
                Anchor::Gamma,
            ));
        }
    }
    match &t.gamma {
        ObjectiveSpec::Scalarized(ws) => {
            if ws.is_empty()
                || ws.iter().any(|(w, _)| !w.is_finite())
                || ws.iter().all(|(w, _)| *w == 0.0)
            {
                out.push((
                    Violation::new(
                        "scalarization-weights",
                        "weights must be finite with at least one nonzero",
                    ),
                    Anchor::Gamma,
                ));
            }
        }
        ObjectiveSpec::ParetoSet(ts) if ts.len() < 2 => {
            out.push((
                Violation::new("pareto-arity", "a pareto objective needs at least two metrics"),
                Anchor::Gamma,
            ));
        }
        _ => {}
    }
    out.sort_by(|a, b| a.0.code.cmp(&b.0.code).then(a.0.message.cmp(&b.0.message)));
    out
}

/// All consistency violations of a structured triplet (empty when consistent).
pub fn validate(t: &ProblemTriplet) -> Vec<Violation> {
    check(t).into_iter().map(|(v, _)| v).collect()
}

/// Parse then validate, attaching source spans to each violation.
pub fn validate_text(text: &str) -> Result<Vec<Violation>, NotationError> {
    let spanned = parse_triplet_spanned(text)?;
    let to_span = |(s, e): (usize, usize)| Some(Span { start: s, end: e });
    Ok(check(&spanned.triplet)
        .into_iter()
        .map(|(mut v, anchor)| {
            v.span = match anchor {
                Anchor::Alpha => to_span(spanned.alpha_span),
                Anchor::Gamma => to_span(spanned.gamma_span),
                Anchor::Tag(tag) => spanned
                    .beta_spans
                    .iter()
                    .find(|(t, _)| t.kind_key() == tag.kind_key())
                    .and_then(|(_, s)| to_span(*s)),
            };
            v
        })
        .collect())
}
