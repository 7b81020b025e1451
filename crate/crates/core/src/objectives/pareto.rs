use serde::{Deserialize, Serialize};

use super::ObjectiveError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[serde(alias = "min")]
    Minimize,
    #[serde(alias = "max")]
    Maximize,
}

/// `a` dominates `b`: no worse in every dimension and strictly better in one.
pub fn dominates(a: &[f64], b: &[f64], directions: &[Direction]) -> bool {
    let mut strictly = false;
    for ((x, y), d) in a.iter().zip(b).zip(directions) {
        let (better, worse) = match d {
            Direction::Minimize => (x < y, x > y),
            Direction::Maximize => (x > y, x < y),
        };
        if worse {
            return false;
        }
        strictly |= better;
    }
    strictly
}

/// Indices of the non-dominated points, in input order.
pub fn pareto_front(
    points: &[Vec<f64>],
    directions: &[Direction],
) -> Result<Vec<usize>, ObjectiveError> {
    for (index, p) in points.iter().enumerate() {
        if p.len() != directions.len() {
            return Err(ObjectiveError::DimensionMismatch {
                index,
                expected: directions.len(),
                found: p.len(),
            });
        }
    }
    // Sort by the first objective so a point can only be dominated by an
    // earlier one (or an exact tie on that coordinate).
    let mut order: Vec<usize> = (0..points.len()).collect();
    if !directions.is_empty() {
        order.sort_by(|&a, &b| {
            let (x, y) = (points[a][0], points[b][0]);
            let ord = match directions[0] {
                Direction::Minimize => x.total_cmp(&y),
                Direction::Maximize => y.total_cmp(&x),
            };
            ord.then(a.cmp(&b))
        });
    }
    let mut front: Vec<usize> = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        let first = points[i].first().copied();
        let dominated = order[..pos]
            .iter()
            .chain(order[pos + 1..].iter().take_while(|&&k| points[k].first().copied() == first))
            .any(|&k| dominates(&points[k], &points[i], directions));
        if !dominated {
            front.push(i);
        }
    }
    front.sort_unstable();
    Ok(front)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MIN2: [Direction; 2] = [Direction::Minimize, Direction::Minimize];

    #[test]
    fn examples() {
        assert_eq!(pareto_front(&[vec![1.0, 1.0], vec![2.0, 2.0]], &MIN2).unwrap(), vec![0]);
        assert_eq!(
            pareto_front(&[vec![1.0, 2.0], vec![2.0, 1.0]], &MIN2).unwrap(),
            vec![0, 1]
        );
        assert!(matches!(
            pareto_front(&[vec![1.0, 2.0], vec![2.0]], &MIN2),
            Err(ObjectiveError::DimensionMismatch { index: 1, .. })
        ));
        // identical points do not dominate each other
        assert_eq!(
            pareto_front(&[vec![1.0, 1.0], vec![1.0, 1.0]], &MIN2).unwrap(),
            vec![0, 1]
        );
        let mixed = [Direction::Minimize, Direction::Maximize];
        assert_eq!(
            pareto_front(&[vec![10.0, 0.6], vec![10.0, 0.5], vec![9.0, 0.4]], &mixed).unwrap(),
            vec![0, 2]
        );
    }

    fn brute_force(points: &[Vec<f64>], dirs: &[Direction]) -> Vec<usize> {
        (0..points.len())
            .filter(|&i| !(0..points.len()).any(|k| k != i && dominates(&points[k], &points[i], dirs)))
            .collect()
    }

    proptest! {
        #[test]
        fn matches_pairwise_check(
            pts in prop::collection::vec(prop::collection::vec(0u8..6, 3), 0..100),
            maximize_second in any::<bool>(),
        ) {
            let points: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().map(|v| *v as f64).collect()).collect();
            let dirs = [
                Direction::Minimize,
                if maximize_second { Direction::Maximize } else { Direction::Minimize },
                Direction::Minimize,
            ];
            prop_assert_eq!(pareto_front(&points, &dirs).unwrap(), brute_force(&points, &dirs));
        }
    }
}
