//! Machine-readable α|β|γ problem classification.
//!
//! A [`ProblemTriplet`] names the machine setup ([`SetupClass`]), the set of
//! additional constraints ([`ConstraintTag`]) and the optimization target
//! ([`ObjectiveSpec`]). The textual form is documented in
//! `docs/triplet-grammar.md`; [`parse_triplet`] and [`render_triplet`] convert
//! between the two and round-trip exactly.

mod grammar;
mod lattice;
mod validate;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::objectives::MetricId;

pub use grammar::{parse_objective, parse_triplet, parse_triplet_spanned, render_triplet, SpannedTriplet};
pub use lattice::{has_routing_flexibility, subsumes};
pub use validate::{validate, validate_text, Span, Violation};

/// Machine setup families, ordered as in the setup hierarchy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SetupKind {
    /// Single machine, written `1`.
    Single,
    Pm,
    Qm,
    Rm,
    Fm,
    Jm,
    /// Partially ordered job shop.
    POm,
    Om,
    FFc,
    FJc,
    FPOc,
}

impl SetupKind {
    pub const ALL: [SetupKind; 11] = [
        SetupKind::Single,
        SetupKind::Pm,
        SetupKind::Qm,
        SetupKind::Rm,
        SetupKind::Fm,
        SetupKind::Jm,
        SetupKind::POm,
        SetupKind::Om,
        SetupKind::FFc,
        SetupKind::FJc,
        SetupKind::FPOc,
    ];

    pub fn token(self) -> &'static str {
        match self {
            SetupKind::Single => "1",
            SetupKind::Pm => "Pm",
            SetupKind::Qm => "Qm",
            SetupKind::Rm => "Rm",
            SetupKind::Fm => "Fm",
            SetupKind::Jm => "Jm",
            SetupKind::POm => "POm",
            SetupKind::Om => "Om",
            SetupKind::FFc => "FFc",
            SetupKind::FJc => "FJc",
            SetupKind::FPOc => "FPOc",
        }
    }

    pub fn from_token(s: &str) -> Option<SetupKind> {
        SetupKind::ALL.iter().copied().find(|k| k.token() == s)
    }

    /// Shop classes have multi-operation jobs; the rest are single-stage.
    pub fn is_shop(self) -> bool {
        !matches!(
            self,
            SetupKind::Single | SetupKind::Pm | SetupKind::Qm | SetupKind::Rm
        )
    }

    /// Work-centers may hold more than one machine.
    pub fn is_flexible(self) -> bool {
        matches!(self, SetupKind::FFc | SetupKind::FJc | SetupKind::FPOc)
    }
}

/// The α field: a setup family plus an optional machine/work-center count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SetupClass {
    pub kind: SetupKind,
    pub count: Option<u32>,
}

impl SetupClass {
    pub fn new(kind: SetupKind) -> Self {
        SetupClass { kind, count: None }
    }

    pub fn with_count(kind: SetupKind, count: u32) -> Self {
        SetupClass {
            kind,
            count: Some(count),
        }
    }

    /// Machine count; the single machine class implies 1.
    pub fn effective_count(&self) -> Option<u32> {
        match self.kind {
            SetupKind::Single => Some(1),
            _ => self.count,
        }
    }
}

/// The β constraint tags. `TrN` carries the transport fleet size.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConstraintTag {
    BlockIn,
    BlockOut,
    Recrc,
    Vnops,
    Fmls,
    Sjk,
    Sjki,
    Mi,
    MiO,
    Batch,
    Dbatch,
    Fres,
    Rj,
    RjS,
    Brkdwn,
    BrkdwnS,
    DmdJ,
    DmdJS,
    PjiS,
    TrInf,
    TrN(u32),
    Nwt,
    Prmp,
    Prmu,
    Prec,
}

/// Pairs of tags that may not appear together in one β set.
pub const EXCLUSIVE_PAIRS: [(ConstraintTag, ConstraintTag); 4] = [
    (ConstraintTag::Rj, ConstraintTag::RjS),
    (ConstraintTag::Brkdwn, ConstraintTag::BrkdwnS),
    (ConstraintTag::DmdJ, ConstraintTag::DmdJS),
    (ConstraintTag::Batch, ConstraintTag::Dbatch),
];

impl ConstraintTag {
    pub const SIMPLE: [ConstraintTag; 24] = [
        ConstraintTag::BlockIn,
        ConstraintTag::BlockOut,
        ConstraintTag::Recrc,
        ConstraintTag::Vnops,
        ConstraintTag::Fmls,
        ConstraintTag::Sjk,
        ConstraintTag::Sjki,
        ConstraintTag::Mi,
        ConstraintTag::MiO,
        ConstraintTag::Batch,
        ConstraintTag::Dbatch,
        ConstraintTag::Fres,
        ConstraintTag::Rj,
        ConstraintTag::RjS,
        ConstraintTag::Brkdwn,
        ConstraintTag::BrkdwnS,
        ConstraintTag::DmdJ,
        ConstraintTag::DmdJS,
        ConstraintTag::PjiS,
        ConstraintTag::TrInf,
        ConstraintTag::Nwt,
        ConstraintTag::Prmp,
        ConstraintTag::Prmu,
        ConstraintTag::Prec,
    ];

    /// Canonical ASCII token. `TrN` renders with its parameter.
    pub fn token(&self) -> String {
        let s = match self {
            ConstraintTag::BlockIn => "block_in",
            ConstraintTag::BlockOut => "block_out",
            ConstraintTag::Recrc => "recrc",
            ConstraintTag::Vnops => "vnops",
            ConstraintTag::Fmls => "fmls",
            ConstraintTag::Sjk => "S_jk",
            ConstraintTag::Sjki => "S_jki",
            ConstraintTag::Mi => "M_i",
            ConstraintTag::MiO => "M_i^o",
            ConstraintTag::Batch => "batch",
            ConstraintTag::Dbatch => "dbatch",
            ConstraintTag::Fres => "fres",
            ConstraintTag::Rj => "r_j",
            ConstraintTag::RjS => "r_j^s",
            ConstraintTag::Brkdwn => "brkdwn",
            ConstraintTag::BrkdwnS => "brkdwn^s",
            ConstraintTag::DmdJ => "dmd_j",
            ConstraintTag::DmdJS => "dmd_j^s",
            ConstraintTag::PjiS => "p_ji^s",
            ConstraintTag::TrInf => "tr(inf)",
            ConstraintTag::TrN(n) => return format!("tr({n})"),
            ConstraintTag::Nwt => "nwt",
            ConstraintTag::Prmp => "prmp",
            ConstraintTag::Prmu => "prmu",
            ConstraintTag::Prec => "prec",
        };
        s.to_string()
    }

    /// Tag identity ignoring parameters, used for duplicate detection.
    pub fn kind_key(&self) -> u8 {
        match self {
            ConstraintTag::TrN(_) => 200,
            other => ConstraintTag::SIMPLE
                .iter()
                .position(|t| t == other)
                .map(|p| p as u8)
                .unwrap_or(255),
        }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(
            self,
            ConstraintTag::RjS | ConstraintTag::BrkdwnS | ConstraintTag::DmdJS | ConstraintTag::PjiS
        )
    }
}

/// How per-entity metric values are reduced to one number.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    Ave,
    Max,
    Sum,
    Count,
}

impl Aggregation {
    pub const ALL: [Aggregation; 4] = [
        Aggregation::Ave,
        Aggregation::Max,
        Aggregation::Sum,
        Aggregation::Count,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Aggregation::Ave => "ave",
            Aggregation::Max => "max",
            Aggregation::Sum => "sum",
            Aggregation::Count => "count",
        }
    }

    pub fn from_token(s: &str) -> Option<Aggregation> {
        Aggregation::ALL.iter().copied().find(|a| a.token() == s)
    }
}

/// A metric together with its aggregation, e.g. `T_ave` or `sum_T_j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MetricTerm {
    pub metric: MetricId,
    pub aggregation: Aggregation,
}

impl MetricTerm {
    pub fn new(metric: MetricId, aggregation: Aggregation) -> Self {
        MetricTerm {
            metric,
            aggregation,
        }
    }
}

/// The γ field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ObjectiveSpec {
    Single(MetricTerm),
    Scalarized(Vec<(f64, MetricTerm)>),
    ParetoSet(Vec<MetricTerm>),
}

impl ObjectiveSpec {
    pub fn single(metric: MetricId, aggregation: Aggregation) -> Self {
        ObjectiveSpec::Single(MetricTerm::new(metric, aggregation))
    }

    pub fn makespan() -> Self {
        ObjectiveSpec::single(MetricId::Makespan, Aggregation::Max)
    }

    /// Every metric term referenced by the objective.
    pub fn terms(&self) -> Vec<MetricTerm> {
        match self {
            ObjectiveSpec::Single(t) => vec![*t],
            ObjectiveSpec::Scalarized(ws) => ws.iter().map(|(_, t)| *t).collect(),
            ObjectiveSpec::ParetoSet(ts) => ts.clone(),
        }
    }
}

/// A full α|β|γ classification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ProblemTriplet {
    pub alpha: SetupClass,
    pub beta: BTreeSet<ConstraintTag>,
    pub gamma: ObjectiveSpec,
}

impl ProblemTriplet {
    pub fn new(
        alpha: SetupClass,
        beta: impl IntoIterator<Item = ConstraintTag>,
        gamma: ObjectiveSpec,
    ) -> Self {
        ProblemTriplet {
            alpha,
            beta: beta.into_iter().collect(),
            gamma,
        }
    }

    pub fn has(&self, tag: ConstraintTag) -> bool {
        self.beta.contains(&tag)
    }

    /// Fleet size when `tr(n)` is present.
    pub fn fleet_size(&self) -> Option<u32> {
        self.beta.iter().find_map(|t| match t {
            ConstraintTag::TrN(n) => Some(*n),
            _ => None,
        })
    }
}

impl fmt::Display for ObjectiveSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&grammar::render_gamma(self))
    }
}

impl std::str::FromStr for ObjectiveSpec {
    type Err = NotationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_objective(s)
    }
}

impl fmt::Display for ProblemTriplet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_triplet(self))
    }
}

impl std::str::FromStr for ProblemTriplet {
    type Err = NotationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_triplet(s)
    }
}

impl TryFrom<String> for ProblemTriplet {
    type Error = NotationError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        parse_triplet(&value)
    }
}

impl From<ProblemTriplet> for String {
    fn from(t: ProblemTriplet) -> String {
        render_triplet(&t)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NotationError {
    #[error("syntax error at {position}: expected {}, found {found:?}", expected.join(" | "))]
    Syntax {
        position: usize,
        expected: Vec<String>,
        found: String,
    },
    #[error("unknown machine setup {token:?} at {position}")]
    UnknownSetup { token: String, position: usize },
    #[error("unknown constraint {token:?} at {position}")]
    UnknownConstraint { token: String, position: usize },
    #[error("unknown objective metric {token:?} at {position}")]
    UnknownMetric { token: String, position: usize },
    #[error("constraint {token:?} at {position} appears more than once")]
    DuplicateConstraint { token: String, position: usize },
    #[error("constraints {first} and {second} are mutually exclusive")]
    MutuallyExclusive { first: String, second: String },
}
