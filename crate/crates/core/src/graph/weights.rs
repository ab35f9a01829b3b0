use nalgebra::{DMatrix, DVector};

use super::{Digraph, GraphError};

/// Default lower bound on every positive mixing weight.
pub const DEFAULT_FLOOR: f64 = 1e-3;

/// Default tolerance on row and column sums.
pub const DEFAULT_TOL: f64 = 1e-12;

/// A nonnegative doubly stochastic mixing matrix. Entry `(i, j)` is the weight
/// agent `i` puts on the value received from agent `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMatrix {
    entries: DMatrix<f64>,
    floor: f64,
}

impl WeightMatrix {
    /// Validates nonnegativity, the floor on positive entries, a positive
    /// diagonal, and double stochasticity within [`DEFAULT_TOL`].
    pub fn new(entries: DMatrix<f64>, floor: f64) -> Result<Self, GraphError> {
        if !entries.is_square() || entries.nrows() == 0 {
            return Err(GraphError::InvalidWeights(format!(
                "matrix must be square and nonempty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if !(floor > 0.0 && floor < 1.0) {
            return Err(GraphError::InvalidWeights(format!("floor {floor} outside (0, 1)")));
        }
        let n = entries.nrows();
        for (i, j) in (0..n).flat_map(|i| (0..n).map(move |j| (i, j))) {
            let w = entries[(i, j)];
            if !w.is_finite() || w < 0.0 {
                return Err(GraphError::InvalidWeights(format!("w[{i}][{j}] = {w} is not a nonnegative real")));
            }
            if w > 0.0 && w < floor {
                return Err(GraphError::InvalidWeights(format!("w[{i}][{j}] = {w} is below the floor {floor}")));
            }
            if i == j && w == 0.0 {
                return Err(GraphError::InvalidWeights(format!("diagonal entry w[{i}][{i}] is zero")));
            }
        }
        if !verify_doubly_stochastic(&entries, None, DEFAULT_TOL) {
            return Err(GraphError::InvalidWeights(
                "row or column sums differ from 1 by more than 1e-12".into(),
            ));
        }
        Ok(Self { entries, floor })
    }

    pub fn identity(agents: usize) -> Self {
        Self {
            entries: DMatrix::identity(agents, agents),
            floor: DEFAULT_FLOOR,
        }
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn agent_count(&self) -> usize {
        self.entries.nrows()
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    /// `w_ij > 0` exactly when `j` is an in-neighbor of `i` or `j == i`.
    pub fn matches_support(&self, snapshot: &Digraph) -> bool {
        support_matches(&self.entries, snapshot)
    }

    /// `out_i = Σ_j w_ij v_j`.
    pub fn mix(&self, values: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let n = self.agent_count();
        assert_eq!(values.len(), n, "one value per agent");
        (0..n).map(|i| self.mix_row(i, values)).collect()
    }

    pub fn mix_row(&self, i: usize, values: &[DVector<f64>]) -> DVector<f64> {
        let mut acc = DVector::zeros(values[0].len());
        for (j, v) in values.iter().enumerate() {
            let w = self.entries[(i, j)];
            if w != 0.0 {
                acc.axpy(w, v, 1.0);
            }
        }
        acc
    }
}

fn support_matches(w: &DMatrix<f64>, snapshot: &Digraph) -> bool {
    let n = w.nrows();
    if snapshot.agent_count() != n {
        return false;
    }
    (0..n).all(|i| {
        (0..n).all(|j| {
            let linked = i == j || snapshot.has_edge(j, i);
            (w[(i, j)] > 0.0) == linked
        })
    })
}

/// True iff every entry is nonnegative, every row and column sums to one within
/// `tol`, and (when `support` is given) the positive pattern matches it.
pub fn verify_doubly_stochastic(w: &DMatrix<f64>, support: Option<&Digraph>, tol: f64) -> bool {
    if !w.is_square() || w.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return false;
    }
    let rows_ok = w.row_iter().all(|r| (r.sum() - 1.0).abs() <= tol);
    let cols_ok = w.column_iter().all(|c| (c.sum() - 1.0).abs() <= tol);
    rows_ok && cols_ok && support.map_or(true, |s| support_matches(w, s))
}

/// Metropolis weights on the undirected version of `snapshot`:
/// `w_ij = 1 / (1 + max(d_i, d_j))` for neighbors and `w_ii = 1 − Σ_{j≠i} w_ij`.
///
/// With `symmetric = true` the caller asserts the snapshot is already
/// undirected, and an asymmetric edge set is an error. Otherwise the edges are
/// symmetrized first.
pub fn metropolis_weights(snapshot: &Digraph, symmetric: bool) -> Result<WeightMatrix, GraphError> {
    if symmetric && !snapshot.is_symmetric() {
        return Err(GraphError::NotSymmetric);
    }
    let sym = snapshot.symmetrized();
    let n = sym.agent_count();
    let deg = sym.undirected_degrees();
    let mut w = DMatrix::zeros(n, n);
    for (j, i) in sym.edges() {
        w[(i, j)] = 1.0 / (1.0 + deg[i].max(deg[j]) as f64);
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| w[(i, j)]).sum();
        w[(i, i)] = 1.0 - off;
    }
    WeightMatrix::new(w, DEFAULT_FLOOR)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_of_three() {
        let w = metropolis_weights(&Digraph::path(3).unwrap(), true).unwrap();
        let expect = [[2.0 / 3.0, 1.0 / 3.0, 0.0], [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], [0.0, 1.0 / 3.0, 2.0 / 3.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((w.get(i, j) - expect[i][j]).abs() < 1e-15);
            }
            // direct summation
            let row: f64 = (0..3).map(|j| w.get(i, j)).sum();
            let col: f64 = (0..3).map(|j| w.get(j, i)).sum();
            assert!((row - 1.0).abs() < 1e-15 && (col - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn single_agent_is_identity() {
        let w = metropolis_weights(&Digraph::empty(1).unwrap(), true).unwrap();
        assert_eq!(w.entries(), &DMatrix::identity(1, 1));
    }

    #[test]
    fn complete_graph_is_uniform() {
        let w = metropolis_weights(&Digraph::complete(4).unwrap(), true).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((w.get(i, j) - 0.25).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn asymmetric_snapshot_with_symmetric_flag_is_rejected() {
        let g = Digraph::directed_ring(4).unwrap();
        assert!(matches!(metropolis_weights(&g, true), Err(GraphError::NotSymmetric)));
        let w = metropolis_weights(&g, false).unwrap();
        assert!(w.matches_support(&g.symmetrized()));
    }

    #[test]
    fn identity_verifies() {
        assert!(verify_doubly_stochastic(&DMatrix::identity(5, 5), None, 1e-12));
    }

    #[test]
    fn column_violation_is_detected() {
        // Rows sum to one, column 0 sums to 1.1.
        let w: DMatrix<f64> = DMatrix::from_row_slice(2, 2, &[0.6, 0.4, 0.5, 0.5]);
        assert!((w.column(0).sum() - 1.1).abs() < 1e-15);
        assert!(!verify_doubly_stochastic(&w, None, 1e-12));
    }

    #[test]
    fn support_mismatch_is_detected() {
        let g = Digraph::path(3).unwrap();
        let w = metropolis_weights(&Digraph::complete(3).unwrap(), true).unwrap();
        assert!(!verify_doubly_stochastic(w.entries(), Some(&g), 1e-12));
    }

    #[test]
    fn floor_is_enforced() {
        let w = DMatrix::from_row_slice(2, 2, &[1.0 - 1e-4, 1e-4, 1e-4, 1.0 - 1e-4]);
        assert!(WeightMatrix::new(w, DEFAULT_FLOOR).is_err());
    }

    #[test]
    fn mix_uses_rows() {
        let w = metropolis_weights(&Digraph::path(3).unwrap(), true).unwrap();
        let v: Vec<_> = (0..3).map(|i| DVector::from_element(1, i as f64)).collect();
        let out = w.mix(&v);
        assert!((out[0][0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((out[1][0] - 1.0).abs() < 1e-15);
    }
}
