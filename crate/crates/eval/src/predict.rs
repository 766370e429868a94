//! One-step link prediction from fitted dynamics.

use graphseq_core::{Adjacency, DynamicsParams, Error as CoreError, Membership};

use crate::error::Result;

/// Symmetric `n x n` edge probabilities with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    n: usize,
    data: Vec<f64>,
}

impl ScoreMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Scores and outcomes over all pairs `i < j` of `target`.
    pub fn pair_scores(&self, target: &Adjacency) -> (Vec<f64>, Vec<bool>) {
        let n = self.n;
        let mut scores = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        let mut labels = Vec::with_capacity(scores.capacity());
        for i in 0..n {
            for j in (i + 1)..n {
                scores.push(self.get(i, j));
                labels.push(target.has_edge(i, j));
            }
        }
        (scores, labels)
    }
}

/// `P(A^t_ij = 1 | A^{t-1}_ij)` under the fitted parameters: `h` where the
/// previous edge exists, `f` otherwise. Time-varying parameters use their
/// last transition.
pub fn predict_links(a_prev: &Adjacency, g: &Membership, params: &DynamicsParams) -> Result<ScoreMatrix> {
    let n = a_prev.n();
    if g.n() != n {
        return Err(CoreError::DimensionMismatch {
            what: "membership vs adjacency size",
            expected: n,
            found: g.n(),
        }
        .into());
    }
    if params.k() != g.k() {
        return Err(CoreError::DimensionMismatch {
            what: "parameter block dimension",
            expected: g.k(),
            found: params.k(),
        }
        .into());
    }
    params.validate()?;
    let step = match params {
        DynamicsParams::General { steps, .. } if steps.is_empty() => {
            return Err(CoreError::InvalidDynamics("no transitions to predict with".into()).into())
        }
        DynamicsParams::General { steps, .. } => steps.len() - 1,
        _ => 0,
    };
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let (f, h) = params.transition(step, g.index(i), g.index(j));
            let p = if a_prev.has_edge(i, j) { h } else { f };
            data[i * n + j] = p;
            data[j * n + i] = p;
        }
    }
    Ok(ScoreMatrix { n, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use graphseq_core::BlockMatrix;

    fn setup() -> (Adjacency, Membership) {
        let a = Adjacency::from_edges(4, &[(0, 1), (1, 2)]).unwrap();
        (a, Membership::new(vec![1, 1, 2, 2], 2).unwrap())
    }

    #[test]
    fn type2_extremes() {
        let (a, g) = setup();
        let w = BlockMatrix::from_rows(&[&[0.6, 0.1], &[0.1, 0.3]]).unwrap();
        let copy = predict_links(&a, &g, &DynamicsParams::type2(w.clone(), 1.0).unwrap()).unwrap();
        let fresh = predict_links(&a, &g, &DynamicsParams::type2(w.clone(), 0.0).unwrap()).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i == j { 0.0 } else { a.get(i, j) as f64 };
                assert_eq!(copy.get(i, j), expected);
                if i != j {
                    assert_eq!(fresh.get(i, j), w.get(g.index(i), g.index(j)));
                }
            }
        }
    }

    #[test]
    fn type1_rates() {
        let (a, g) = setup();
        let d = DynamicsParams::type1(BlockMatrix::constant(2, 0.3).unwrap(), BlockMatrix::constant(2, 0.6).unwrap()).unwrap();
        let s = predict_links(&a, &g, &d).unwrap();
        assert!((s.get(0, 2) - 0.18).abs() < 1e-15);
        assert!((s.get(0, 1) - 0.4).abs() < 1e-15);
        assert_eq!(s.get(1, 0), s.get(0, 1));
        let (scores, labels) = s.pair_scores(&a);
        assert_eq!(scores.len(), 6);
        assert_eq!(labels.iter().filter(|&&l| l).count(), 2);
    }
}
