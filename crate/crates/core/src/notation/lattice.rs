use super::{ProblemTriplet, SetupClass, SetupKind};

/// Direct generalization edges of the setup hierarchy, general → specific.
const EDGES: [(SetupKind, SetupKind); 11] = [
    (SetupKind::Pm, SetupKind::Single),
    (SetupKind::Qm, SetupKind::Pm),
    (SetupKind::Rm, SetupKind::Qm),
    (SetupKind::Jm, SetupKind::Fm),
    (SetupKind::POm, SetupKind::Jm),
    (SetupKind::Om, SetupKind::POm),
    (SetupKind::FFc, SetupKind::Fm),
    (SetupKind::FJc, SetupKind::Jm),
    (SetupKind::FJc, SetupKind::FFc),
    (SetupKind::FPOc, SetupKind::POm),
    (SetupKind::FPOc, SetupKind::FJc),
];

/// True iff `specific` is reachable from `general` by descending the hierarchy.
/// Reflexive; machine counts are ignored.
pub fn subsumes(general: SetupClass, specific: SetupClass) -> bool {
    kind_subsumes(general.kind, specific.kind)
}

pub(crate) fn kind_subsumes(general: SetupKind, specific: SetupKind) -> bool {
    if general == specific {
        return true;
    }
    let mut stack = vec![general];
    let mut seen = Vec::new();
    while let Some(k) = stack.pop() {
        if seen.contains(&k) {
            continue;
        }
        seen.push(k);
        for (g, s) in EDGES {
            if g == k {
                if s == specific {
                    return true;
                }
                stack.push(s);
            }
        }
    }
    false
}

/// Whether the problem requires routing decisions in addition to sequencing.
pub fn has_routing_flexibility(t: &ProblemTriplet) -> bool {
    matches!(
        t.alpha.kind,
        SetupKind::Pm
            | SetupKind::Qm
            | SetupKind::Rm
            | SetupKind::FFc
            | SetupKind::FJc
            | SetupKind::Om
            | SetupKind::POm
            | SetupKind::FPOc
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::notation::parse_triplet;

    fn c(k: SetupKind) -> SetupClass {
        SetupClass::new(k)
    }

    #[test]
    fn examples() {
        assert!(subsumes(c(SetupKind::Rm), c(SetupKind::Single)));
        assert!(!subsumes(c(SetupKind::Fm), c(SetupKind::Jm)));
        assert!(subsumes(c(SetupKind::FPOc), c(SetupKind::Fm)));
        assert!(subsumes(c(SetupKind::Om), c(SetupKind::Fm)));
        assert!(!subsumes(c(SetupKind::FPOc), c(SetupKind::Om)));
        assert!(!subsumes(c(SetupKind::Rm), c(SetupKind::Fm)));
    }

    // Exhaustive over every ordered triple of classes.
    #[test]
    fn partial_order() {
        let all = SetupKind::ALL;
        for &a in &all {
            assert!(kind_subsumes(a, a));
            for &b in &all {
                if a != b && kind_subsumes(a, b) {
                    assert!(!kind_subsumes(b, a), "{a:?} and {b:?} subsume each other");
                }
                for &d in &all {
                    if kind_subsumes(a, b) && kind_subsumes(b, d) {
                        assert!(kind_subsumes(a, d));
                    }
                }
            }
        }
    }

    #[test]
    fn routing_flexibility() {
        assert!(!has_routing_flexibility(&parse_triplet("Jm||C_max").unwrap()));
        assert!(has_routing_flexibility(&parse_triplet("Om||C_max").unwrap()));
        assert!(!has_routing_flexibility(&parse_triplet("1||C_max").unwrap()));
        assert!(has_routing_flexibility(&parse_triplet("FJc||C_max").unwrap()));
        assert!(!has_routing_flexibility(&parse_triplet("Fm||C_max").unwrap()));
    }
}
