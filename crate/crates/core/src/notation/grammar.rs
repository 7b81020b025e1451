use std::collections::BTreeSet;

use super::{
    Aggregation, ConstraintTag, MetricTerm, NotationError, ObjectiveSpec, ProblemTriplet,
    SetupClass, SetupKind, EXCLUSIVE_PAIRS,
};
use crate::objectives::MetricId;

/// A parsed triplet plus the byte spans of its β tokens, for diagnostics.
#[derive(Clone, Debug)]
pub struct SpannedTriplet {
    pub triplet: ProblemTriplet,
    pub alpha_span: (usize, usize),
    pub beta_spans: Vec<(ConstraintTag, (usize, usize))>,
    pub gamma_span: (usize, usize),
}

pub fn parse_triplet(text: &str) -> Result<ProblemTriplet, NotationError> {
    parse_triplet_spanned(text).map(|s| s.triplet)
}

pub fn parse_triplet_spanned(text: &str) -> Result<SpannedTriplet, NotationError> {
    let bars: Vec<usize> = text.match_indices('|').map(|(i, _)| i).collect();
    if bars.len() != 2 {
        let position = if bars.len() > 2 { bars[2] } else { text.len() };
        return Err(NotationError::Syntax {
            position,
            expected: vec![if bars.len() > 2 {
                "end of input".into()
            } else {
                "'|'".into()
            }],
            found: text.get(position..).unwrap_or("").chars().take(8).collect(),
        });
    }
    let alpha_span = (0, bars[0]);
    let beta_span = (bars[0] + 1, bars[1]);
    let gamma_span = (bars[1] + 1, text.len());

    let alpha = parse_alpha(text, alpha_span)?;
    let beta_spans = parse_beta(text, beta_span)?;
    let gamma = parse_gamma(text, gamma_span)?;

    let beta: BTreeSet<ConstraintTag> = beta_spans.iter().map(|(t, _)| *t).collect();
    Ok(SpannedTriplet {
        triplet: ProblemTriplet { alpha, beta, gamma },
        alpha_span: trim_span(text, alpha_span),
        beta_spans,
        gamma_span: trim_span(text, gamma_span),
    })
}

/// Parse a γ field on its own, e.g. `sum_T_j` or `pareto(C_max,T_ave)`.
pub fn parse_objective(text: &str) -> Result<ObjectiveSpec, NotationError> {
    parse_gamma(text, (0, text.len()))
}

pub fn render_triplet(t: &ProblemTriplet) -> String {
    let alpha = match t.alpha.count {
        Some(c) if t.alpha.kind != SetupKind::Single => format!("{}({c})", t.alpha.kind.token()),
        _ => t.alpha.kind.token().to_string(),
    };
    let beta: Vec<String> = t.beta.iter().map(|b| b.token()).collect();
    format!("{alpha}|{}|{}", beta.join(","), render_gamma(&t.gamma))
}

pub(crate) fn render_gamma(g: &ObjectiveSpec) -> String {
    match g {
        ObjectiveSpec::Single(term) => render_term(term),
        ObjectiveSpec::Scalarized(ws) => ws
            .iter()
            .map(|(w, term)| format!("{w}*{}", render_term(term)))
            .collect::<Vec<_>>()
            .join("+"),
        ObjectiveSpec::ParetoSet(ts) => format!(
            "pareto({})",
            ts.iter().map(render_term).collect::<Vec<_>>().join(",")
        ),
    }
}

pub(crate) fn render_term(term: &MetricTerm) -> String {
    let sym = term.metric.symbol();
    if term.metric == MetricId::Makespan {
        return "C_max".into();
    }
    if term.metric.is_job_metric() {
        match term.aggregation {
            Aggregation::Sum | Aggregation::Count => {
                format!("{}_{sym}_j", term.aggregation.token())
            }
            agg => format!("{sym}_{}", agg.token()),
        }
    } else {
        format!("{sym}_{}", term.aggregation.token())
    }
}

fn trim_span(text: &str, (s, e): (usize, usize)) -> (usize, usize) {
    let slice = &text[s..e];
    let lead = slice.len() - slice.trim_start().len();
    let trail = slice.len() - slice.trim_end().len();
    if lead == slice.len() {
        return (s, s);
    }
    (s + lead, e - trail)
}

fn parse_alpha(text: &str, span: (usize, usize)) -> Result<SetupClass, NotationError> {
    let (s, e) = trim_span(text, span);
    let tok = &text[s..e];
    if tok.is_empty() {
        return Err(NotationError::Syntax {
            position: s,
            expected: vec!["machine setup".into()],
            found: String::new(),
        });
    }
    let (name, count) = split_param(tok, s)?;
    let kind = SetupKind::from_token(name).ok_or_else(|| NotationError::UnknownSetup {
        token: name.to_string(),
        position: s,
    })?;
    let count = match count {
        None => None,
        Some((p, pos)) => {
            if kind == SetupKind::Single {
                return Err(NotationError::Syntax {
                    position: pos,
                    expected: vec!["'|'".into()],
                    found: "(".into(),
                });
            }
            Some(parse_positive(p, pos)?)
        }
    };
    Ok(SetupClass { kind, count })
}

/// Split `name(param)` into its parts; `pos` of the parameter is returned for errors.
fn split_param(tok: &str, base: usize) -> Result<(&str, Option<(&str, usize)>), NotationError> {
    match tok.find('(') {
        None => Ok((tok, None)),
        Some(open) => {
            if !tok.ends_with(')') {
                return Err(NotationError::Syntax {
                    position: base + tok.len(),
                    expected: vec!["')'".into()],
                    found: String::new(),
                });
            }
            Ok((
                &tok[..open],
                Some((&tok[open + 1..tok.len() - 1], base + open + 1)),
            ))
        }
    }
}

fn parse_positive(p: &str, pos: usize) -> Result<u32, NotationError> {
    match p.trim().parse::<u32>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err(NotationError::Syntax {
            position: pos,
            expected: vec!["positive integer".into()],
            found: p.to_string(),
        }),
    }
}

fn parse_beta(
    text: &str,
    span: (usize, usize),
) -> Result<Vec<(ConstraintTag, (usize, usize))>, NotationError> {
    let (s, e) = trim_span(text, span);
    if s == e {
        return Ok(Vec::new());
    }
    let mut out: Vec<(ConstraintTag, (usize, usize))> = Vec::new();
    let mut start = s;
    for piece in text[s..e].split(',') {
        let piece_span = trim_span(text, (start, start + piece.len()));
        start += piece.len() + 1;
        let tok = &text[piece_span.0..piece_span.1];
        if tok.is_empty() {
            return Err(NotationError::Syntax {
                position: piece_span.0,
                expected: vec!["constraint".into()],
                found: ",".into(),
            });
        }
        let tag = parse_tag(tok, piece_span.0)?;
        if out.iter().any(|(t, _)| t.kind_key() == tag.kind_key()) {
            return Err(NotationError::DuplicateConstraint {
                token: tok.to_string(),
                position: piece_span.0,
            });
        }
        out.push((tag, piece_span));
    }
    for (a, b) in EXCLUSIVE_PAIRS {
        if out.iter().any(|(t, _)| *t == a) && out.iter().any(|(t, _)| *t == b) {
            return Err(NotationError::MutuallyExclusive {
                first: a.token(),
                second: b.token(),
            });
        }
    }
    let has_inf = out.iter().any(|(t, _)| *t == ConstraintTag::TrInf);
    let has_n = out.iter().any(|(t, _)| matches!(t, ConstraintTag::TrN(_)));
    if has_inf && has_n {
        return Err(NotationError::MutuallyExclusive {
            first: "tr(inf)".into(),
            second: "tr(n)".into(),
        });
    }
    Ok(out)
}

fn parse_tag(tok: &str, pos: usize) -> Result<ConstraintTag, NotationError> {
    if let Some(tag) = ConstraintTag::SIMPLE.iter().find(|t| t.token() == tok) {
        return Ok(*tag);
    }
    if let Some(inner) = tok.strip_prefix("tr(").and_then(|r| r.strip_suffix(')')) {
        let inner = inner.trim();
        if inner == "inf" || inner == "∞" {
            return Ok(ConstraintTag::TrInf);
        }
        return parse_positive(inner, pos + 3).map(ConstraintTag::TrN);
    }
    Err(NotationError::UnknownConstraint {
        token: tok.to_string(),
        position: pos,
    })
}

fn parse_gamma(text: &str, span: (usize, usize)) -> Result<ObjectiveSpec, NotationError> {
    let (s, e) = trim_span(text, span);
    let body = &text[s..e];
    if body.is_empty() {
        return Err(NotationError::Syntax {
            position: s,
            expected: vec!["objective".into()],
            found: String::new(),
        });
    }
    if let Some(inner) = body.strip_prefix("pareto(") {
        let Some(inner) = inner.strip_suffix(')') else {
            return Err(NotationError::Syntax {
                position: e,
                expected: vec!["')'".into()],
                found: String::new(),
            });
        };
        let mut terms = Vec::new();
        let mut at = s + "pareto(".len();
        for piece in inner.split(',') {
            let (ps, pe) = trim_span(text, (at, at + piece.len()));
            terms.push(parse_metric(&text[ps..pe], ps)?);
            at += piece.len() + 1;
        }
        return Ok(ObjectiveSpec::ParetoSet(terms));
    }

    let mut scanner = Scanner {
        text,
        pos: s,
        end: e,
    };
    let mut terms: Vec<(Option<f64>, MetricTerm)> = Vec::new();
    loop {
        scanner.skip_ws();
        let weight = scanner.number()?;
        if weight.is_some() {
            scanner.skip_ws();
            scanner.expect('*')?;
            scanner.skip_ws();
        }
        let (ident, at) = scanner.ident()?;
        terms.push((weight, parse_metric(ident, at)?));
        scanner.skip_ws();
        if scanner.at_end() {
            break;
        }
        scanner.expect('+')?;
    }
    if terms.len() == 1 && terms[0].0.is_none() {
        return Ok(ObjectiveSpec::Single(terms[0].1));
    }
    Ok(ObjectiveSpec::Scalarized(
        terms
            .into_iter()
            .map(|(w, t)| (w.unwrap_or(1.0), t))
            .collect(),
    ))
}

struct Scanner<'a> {
    text: &'a str,
    pos: usize,
    end: usize,
}

impl<'a> Scanner<'a> {
    fn rest(&self) -> &'a str {
        &self.text[self.pos..self.end]
    }

    fn at_end(&self) -> bool {
        self.pos >= self.end
    }

    fn skip_ws(&mut self) {
        let r = self.rest();
        self.pos += r.len() - r.trim_start().len();
    }

    fn expect(&mut self, c: char) -> Result<(), NotationError> {
        if self.rest().starts_with(c) {
            self.pos += c.len_utf8();
            Ok(())
        } else {
            Err(NotationError::Syntax {
                position: self.pos,
                expected: vec![format!("'{c}'")],
                found: self.rest().chars().take(8).collect(),
            })
        }
    }

    /// A weight literal: optional sign, digits, optional fraction and exponent.
    fn number(&mut self) -> Result<Option<f64>, NotationError> {
        let r = self.rest().as_bytes();
        let mut i = 0;
        if i < r.len() && (r[i] == b'-' || r[i] == b'+') {
            i += 1;
        }
        let digits_start = i;
        while i < r.len() && (r[i].is_ascii_digit() || r[i] == b'.') {
            i += 1;
        }
        if i == digits_start {
            if i > 0 {
                return Err(NotationError::Syntax {
                    position: self.pos + i,
                    expected: vec!["number".into()],
                    found: self.rest()[i..].chars().take(8).collect(),
                });
            }
            return Ok(None);
        }
        if i < r.len() && (r[i] == b'e' || r[i] == b'E') {
            let mut j = i + 1;
            if j < r.len() && (r[j] == b'-' || r[j] == b'+') {
                j += 1;
            }
            let exp_digits = j;
            while j < r.len() && r[j].is_ascii_digit() {
                j += 1;
            }
            if j > exp_digits {
                i = j;
            }
        }
        let lit = &self.rest()[..i];
        // `1` alone could be a metric-less single-machine token; only a
        // following '*' makes it a weight.
        let after = self.rest()[i..].trim_start();
        if !after.starts_with('*') {
            return Err(NotationError::Syntax {
                position: self.pos + i,
                expected: vec!["'*'".into()],
                found: after.chars().take(8).collect(),
            });
        }
        let v: f64 = lit.parse().map_err(|_| NotationError::Syntax {
            position: self.pos,
            expected: vec!["number".into()],
            found: lit.to_string(),
        })?;
        self.pos += i;
        Ok(Some(v))
    }

    fn ident(&mut self) -> Result<(&'a str, usize), NotationError> {
        let r = self.rest();
        let len = r
            .char_indices()
            .find(|(_, c)| !(c.is_ascii_alphanumeric() || *c == '_' || *c == '^'))
            .map(|(i, _)| i)
            .unwrap_or(r.len());
        if len == 0 {
            return Err(NotationError::Syntax {
                position: self.pos,
                expected: vec!["metric".into()],
                found: r.chars().take(8).collect(),
            });
        }
        let at = self.pos;
        self.pos += len;
        Ok((&r[..len], at))
    }
}

/// Decode one metric token such as `C_max`, `T_ave`, `sum_T_j` or `Utl_tr`.
fn parse_metric(tok: &str, pos: usize) -> Result<MetricTerm, NotationError> {
    let unknown = || NotationError::UnknownMetric {
        token: tok.to_string(),
        position: pos,
    };
    if tok == "C_max" {
        return Ok(MetricTerm::new(MetricId::Makespan, Aggregation::Max));
    }
    // Prefixed job form: <agg>_<SYM>_j
    for agg in Aggregation::ALL {
        if let Some(rest) = tok.strip_prefix(agg.token()).and_then(|r| r.strip_prefix('_')) {
            if let Some(sym) = rest.strip_suffix("_j") {
                if let Some(m) = MetricId::from_symbol(sym).filter(|m| m.is_job_metric()) {
                    return Ok(MetricTerm::new(m, agg));
                }
            }
        }
    }
    // Bare job form: <SYM>_j defaults to the average.
    if let Some(sym) = tok.strip_suffix("_j") {
        if let Some(m) = MetricId::from_symbol(sym).filter(|m| m.is_job_metric()) {
            return Ok(MetricTerm::new(m, Aggregation::Ave));
        }
    }
    // Suffixed form: <SYM>_<agg>, longest symbol first.
    let mut symbols: Vec<MetricId> = MetricId::ALL.to_vec();
    symbols.sort_by_key(|m| std::cmp::Reverse(m.symbol().len()));
    for m in symbols {
        if let Some(rest) = tok.strip_prefix(m.symbol()) {
            if rest.is_empty() && !m.is_job_metric() && m != MetricId::Makespan {
                return Ok(MetricTerm::new(m, m.default_aggregation()));
            }
            if let Some(agg) = rest.strip_prefix('_').and_then(Aggregation::from_token) {
                if m.admits(agg) {
                    return Ok(MetricTerm::new(m, agg));
                }
                return Err(unknown());
            }
        }
    }
    Err(unknown())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tags(t: &ProblemTriplet) -> Vec<ConstraintTag> {
        t.beta.iter().copied().collect()
    }

    #[test]
    fn classic_job_shop() {
        let t = parse_triplet("Jm||C_max").unwrap();
        assert_eq!(t.alpha, SetupClass::new(SetupKind::Jm));
        assert!(t.beta.is_empty());
        assert_eq!(t.gamma, ObjectiveSpec::makespan());
        assert_eq!(render_triplet(&t), "Jm||C_max");
    }

    #[test]
    fn objective_alone() {
        let g = parse_objective(" sum_T_j ").unwrap();
        assert_eq!(g, ObjectiveSpec::single(MetricId::Tardiness, Aggregation::Sum));
        assert_eq!(g.to_string(), "sum_T_j");
        assert!(parse_objective("").is_err());
    }

    #[test]
    fn flexible_with_stochastic_breakdowns() {
        let t = parse_triplet("FJc|S_jki,brkdwn^s|T_ave").unwrap();
        assert_eq!(t.alpha.kind, SetupKind::FJc);
        assert_eq!(tags(&t), vec![ConstraintTag::Sjki, ConstraintTag::BrkdwnS]);
        assert_eq!(
            t.gamma,
            ObjectiveSpec::single(MetricId::Tardiness, Aggregation::Ave)
        );
    }

    #[test]
    fn scalarized_gamma_with_fleet() {
        let t = parse_triplet("Pm|r_j^s,tr(3)|0.5*C_max+0.5*Utl_ave").unwrap();
        assert_eq!(tags(&t), vec![ConstraintTag::RjS, ConstraintTag::TrN(3)]);
        assert_eq!(
            t.gamma,
            ObjectiveSpec::Scalarized(vec![
                (0.5, MetricTerm::new(MetricId::Makespan, Aggregation::Max)),
                (
                    0.5,
                    MetricTerm::new(MetricId::UtilizationMachine, Aggregation::Ave)
                ),
            ])
        );
        assert_eq!(parse_triplet(&render_triplet(&t)).unwrap(), t);
    }

    #[test]
    fn render_examples() {
        let t = ProblemTriplet::new(
            SetupClass::new(SetupKind::Om),
            [ConstraintTag::PjiS],
            ObjectiveSpec::single(MetricId::Flow, Aggregation::Ave),
        );
        assert_eq!(render_triplet(&t), "Om|p_ji^s|F_ave");
        let t = ProblemTriplet::new(
            SetupClass::new(SetupKind::FPOc),
            [ConstraintTag::Vnops],
            ObjectiveSpec::single(MetricId::Tardiness, Aggregation::Sum),
        );
        assert_eq!(render_triplet(&t), "FPOc|vnops|sum_T_j");
        assert_eq!(parse_triplet("FPOc|vnops|sum_T_j").unwrap(), t);
    }

    #[test]
    fn counts_and_aliases() {
        let t = parse_triplet("FJc(4)|tr(inf)|max_T_j").unwrap();
        assert_eq!(t.alpha, SetupClass::with_count(SetupKind::FJc, 4));
        assert!(t.has(ConstraintTag::TrInf));
        assert_eq!(render_triplet(&t), "FJc(4)|tr(inf)|T_max");
        let t = parse_triplet("1 | | T_j").unwrap();
        assert_eq!(t.alpha.kind, SetupKind::Single);
        assert_eq!(
            t.gamma,
            ObjectiveSpec::single(MetricId::Tardiness, Aggregation::Ave)
        );
        let t = parse_triplet("Jm|tr(2)|Utl_tr").unwrap();
        assert_eq!(
            t.gamma,
            ObjectiveSpec::single(MetricId::UtilizationTransport, Aggregation::Ave)
        );
        let t = parse_triplet("Jm||pareto(C_max, Utl_ave)").unwrap();
        assert_eq!(render_triplet(&t), "Jm||pareto(C_max,Utl_ave)");
    }

    #[test]
    fn errors() {
        assert!(matches!(
            parse_triplet("Jm|C_max"),
            Err(NotationError::Syntax { .. })
        ));
        assert!(matches!(
            parse_triplet("Xm||C_max"),
            Err(NotationError::UnknownSetup { .. })
        ));
        assert!(matches!(
            parse_triplet("Jm|warp|C_max"),
            Err(NotationError::UnknownConstraint { position: 3, .. })
        ));
        assert!(matches!(
            parse_triplet("Jm||Q_ave"),
            Err(NotationError::UnknownMetric { .. })
        ));
        assert!(matches!(
            parse_triplet("Jm|r_j,r_j^s|C_max"),
            Err(NotationError::MutuallyExclusive { .. })
        ));
        assert!(matches!(
            parse_triplet("Jm|tr(inf),tr(2)|C_max"),
            Err(NotationError::MutuallyExclusive { .. })
        ));
        assert!(matches!(
            parse_triplet("Jm|tr(0)|C_max"),
            Err(NotationError::Syntax { .. })
        ));
        assert!(matches!(
            parse_triplet("Jm|prmu,prmu|C_max"),
            Err(NotationError::DuplicateConstraint { .. })
        ));
        assert!(matches!(
            parse_triplet("Jm||0.5*"),
            Err(NotationError::Syntax { .. })
        ));
        assert!(matches!(
            parse_triplet("Jm||C_sum"),
            Err(NotationError::UnknownMetric { .. })
        ));
    }

    #[test]
    fn weights_keep_full_precision() {
        let t = parse_triplet("Jm||0.1*C_max+-2.5e-3*sum_T_j+1e+2*U_ave").unwrap();
        let ObjectiveSpec::Scalarized(ws) = &t.gamma else {
            panic!()
        };
        assert_eq!(ws[1].0, -2.5e-3);
        assert_eq!(ws[2].0, 100.0);
        assert_eq!(parse_triplet(&render_triplet(&t)).unwrap(), t);
    }
}
