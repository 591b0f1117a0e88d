//! Exact transport LP oracle: the transportation simplex (MODI method)
//! started from the north-west corner basis.

use crate::error::OtError;
use crate::matrix::Matrix;
use crate::problem::TransportProblem;

/// Default size cap for [`lp_exact`].
pub const LP_EXACT_MAX_CELLS: usize = 400;

/// Consecutive degenerate pivots after which pricing switches to Bland's rule.
const BLAND_AFTER: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub objective: f64,
    pub plan: Matrix,
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
    pub pivots: usize,
}

/// Exact optimum of a desk-scale instance (at most 400 cells).
pub fn lp_exact(problem: &TransportProblem) -> Result<LpSolution, OtError> {
    lp_exact_with_limit(problem, LP_EXACT_MAX_CELLS)
}

/// [`lp_exact`] with a caller-chosen cell limit.
pub fn lp_exact_with_limit(problem: &TransportProblem, max_cells: usize) -> Result<LpSolution, OtError> {
    let (m, n) = (problem.m(), problem.n());
    if m * n > max_cells {
        return Err(OtError::TooLarge { cells: m * n, limit: max_cells });
    }
    let mut simplex = Simplex::north_west(problem);
    let pivots = simplex.run()?;
    let (mu, nu) = simplex.duals();
    let objective = problem.cost().dot(&simplex.x);
    Ok(LpSolution { objective, plan: simplex.x, mu, nu, pivots })
}

struct Simplex<'a> {
    cost: &'a Matrix,
    m: usize,
    n: usize,
    x: Matrix,
    basic: Vec<bool>,
    eps: f64,
}

impl<'a> Simplex<'a> {
    fn north_west(problem: &'a TransportProblem) -> Self {
        let (m, n) = (problem.m(), problem.n());
        let mut supply = problem.p().to_vec();
        let mut demand = problem.q().to_vec();
        let mut x = Matrix::zeros(m, n);
        let mut basic = vec![false; m * n];
        let (mut i, mut j) = (0, 0);
        loop {
            let amount = supply[i].min(demand[j]);
            x.set(i, j, amount);
            basic[j * m + i] = true;
            supply[i] -= amount;
            demand[j] -= amount;
            if i == m - 1 && j == n - 1 {
                break;
            }
            if i == m - 1 {
                j += 1;
            } else if j == n - 1 || supply[i] <= demand[j] {
                i += 1;
            } else {
                j += 1;
            }
        }
        let scale = problem.cost().max_abs().max(1.0);
        Self { cost: problem.cost(), m, n, x, basic, eps: 1e-12 * scale }
    }

    /// Potentials with `u_i + v_j = c_ij` on the basis tree, `u_0 = 0`.
    fn duals(&self) -> (Vec<f64>, Vec<f64>) {
        let (m, n) = (self.m, self.n);
        let mut u = vec![f64::NAN; m];
        let mut v = vec![f64::NAN; n];
        u[0] = 0.0;
        let mut stack = vec![Node::Row(0)];
        while let Some(node) = stack.pop() {
            match node {
                Node::Row(i) => {
                    for j in 0..n {
                        if self.basic[j * m + i] && v[j].is_nan() {
                            v[j] = self.cost.get(i, j) - u[i];
                            stack.push(Node::Col(j));
                        }
                    }
                }
                Node::Col(j) => {
                    for i in 0..m {
                        if self.basic[j * m + i] && u[i].is_nan() {
                            u[i] = self.cost.get(i, j) - v[j];
                            stack.push(Node::Row(i));
                        }
                    }
                }
            }
        }
        debug_assert!(u.iter().chain(&v).all(|x| x.is_finite()), "basis is not a spanning tree");
        (u, v)
    }

    fn run(&mut self) -> Result<usize, OtError> {
        let limit = 100_000 + 200 * self.m * self.n;
        let mut degenerate_streak = 0;
        for pivots in 0..limit {
            let (u, v) = self.duals();
            let bland = degenerate_streak >= BLAND_AFTER;
            let Some((ei, ej)) = self.entering(&u, &v, bland) else {
                return Ok(pivots);
            };
            let cycle = self.cycle(ei, ej);
            // cells at odd positions along the path lose mass
            let mut theta = f64::INFINITY;
            let mut leaving = None;
            for (k, &(i, j)) in cycle.iter().enumerate() {
                if k % 2 == 0 {
                    let val = self.x.get(i, j);
                    let better = val < theta
                        || (bland && val == theta && leaving.is_some_and(|(li, lj)| (j, i) < (lj, li)));
                    if better {
                        theta = val;
                        leaving = Some((i, j));
                    }
                }
            }
            let (li, lj) = leaving.expect("cycle has a decreasing cell");
            for (k, &(i, j)) in cycle.iter().enumerate() {
                let val = self.x.get(i, j);
                self.x.set(i, j, if k % 2 == 0 { val - theta } else { val + theta });
            }
            self.x.set(ei, ej, theta);
            self.x.set(li, lj, 0.0);
            self.basic[ej * self.m + ei] = true;
            self.basic[lj * self.m + li] = false;
            degenerate_streak = if theta <= 0.0 { degenerate_streak + 1 } else { 0 };
        }
        Err(OtError::InvalidConfig("transportation simplex did not terminate".into()))
    }

    fn entering(&self, u: &[f64], v: &[f64], bland: bool) -> Option<(usize, usize)> {
        let mut best = None;
        let mut best_val = -self.eps;
        for j in 0..self.n {
            for i in 0..self.m {
                if self.basic[j * self.m + i] {
                    continue;
                }
                let reduced = self.cost.get(i, j) - u[i] - v[j];
                if reduced < best_val {
                    if bland {
                        return Some((i, j));
                    }
                    best_val = reduced;
                    best = Some((i, j));
                }
            }
        }
        best
    }

    /// Basic cells on the tree path from column `ej` to row `ei`, in order.
    fn cycle(&self, ei: usize, ej: usize) -> Vec<(usize, usize)> {
        let (m, n) = (self.m, self.n);
        // node ids: rows 0..m, columns m..m+n
        let mut parent: Vec<Option<usize>> = vec![None; m + n];
        let mut seen = vec![false; m + n];
        let start = m + ej;
        seen[start] = true;
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(node) = queue.pop_front() {
            if node == ei {
                break;
            }
            let neighbours: Vec<usize> = if node < m {
                (0..n).filter(|&j| self.basic[j * m + node]).map(|j| m + j).collect()
            } else {
                let j = node - m;
                (0..m).filter(|&i| self.basic[j * m + i]).collect()
            };
            for next in neighbours {
                if !seen[next] {
                    seen[next] = true;
                    parent[next] = Some(node);
                    queue.push_back(next);
                }
            }
        }
        let mut path = Vec::new();
        let mut node = ei;
        while let Some(prev) = parent[node] {
            let cell = if node < m { (node, prev - m) } else { (prev, node - m) };
            path.push(cell);
            node = prev;
        }
        path.reverse();
        path
    }
}

enum Node {
    Row(usize),
    Col(usize),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::optimality_violations;

    #[test]
    fn two_by_two_hand_reduction() {
        let cost = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        let prob = TransportProblem::new(cost, vec![0.7, 0.3], vec![0.4, 0.6]).unwrap();
        let sol = lp_exact(&prob).unwrap();
        // 1.1 - 2 min(0.7, 0.4)
        assert!((sol.objective - 0.3).abs() < 1e-15);
        let viol = optimality_violations(&prob, &sol.plan, &sol.mu, &sol.nu).unwrap();
        assert!(viol.max() < 1e-12);
    }

    #[test]
    fn zero_cost() {
        let prob = TransportProblem::uniform(Matrix::zeros(3, 4)).unwrap();
        assert_eq!(lp_exact(&prob).unwrap().objective, 0.0);
    }

    #[test]
    fn zero_diagonal_cost_uses_diagonal() {
        let p = vec![0.2, 0.5, 0.3];
        let cost = Matrix::from_fn(3, 3, |i, j| if i == j { 0.0 } else { 1.0 + (i + j) as f64 });
        let prob = TransportProblem::new(cost, p.clone(), p.clone()).unwrap();
        let sol = lp_exact(&prob).unwrap();
        assert_eq!(sol.objective, 0.0);
        let diag = Matrix::from_fn(3, 3, |i, j| if i == j { p[i] } else { 0.0 });
        assert!(sol.plan.max_abs_diff(&diag) < 1e-15);
    }

    #[test]
    fn too_large_rejected() {
        let prob = TransportProblem::uniform(Matrix::zeros(21, 20)).unwrap();
        assert!(matches!(lp_exact(&prob), Err(OtError::TooLarge { cells: 420, limit: 400 })));
        assert!(lp_exact_with_limit(&prob, 420).is_ok());
    }

    #[test]
    fn single_cell() {
        let prob = TransportProblem::new(Matrix::filled(1, 1, 0.4), vec![1.0], vec![1.0]).unwrap();
        let sol = lp_exact(&prob).unwrap();
        assert_eq!(sol.objective, 0.4);
        assert_eq!(sol.mu[0] + sol.nu[0], 0.4);
    }
}
