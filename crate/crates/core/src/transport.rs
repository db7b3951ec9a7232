//! Exact discrete optimal transport (the Hitchcock transportation problem).
//!
//! Transportation simplex over a spanning-tree basis: north-west corner start,
//! MODI potentials for pricing, cycle pivots along the tree. Pricing is
//! Dantzig's most-negative rule and falls back to Bland's rule after a run of
//! degenerate pivots, which rules out cycling.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Optimal plan and its cost.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan<T> {
    pub cost: T,
    /// Basic cells `(row, col, flow)`; cells not listed carry zero flow.
    pub flows: Vec<(usize, usize, T)>,
    pub pivots: usize,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Node {
    Row(usize),
    Col(usize),
}

struct Basis<T> {
    m: usize,
    n: usize,
    cells: Vec<(usize, usize)>,
    flow: Vec<T>,
}

impl<T: Scalar> Basis<T> {
    fn north_west(supply: &[T], demand: &[T]) -> Self {
        let (m, n) = (supply.len(), demand.len());
        let mut a = supply.to_vec();
        let mut b = demand.to_vec();
        let mut cells = Vec::with_capacity(m + n - 1);
        let mut flow = Vec::with_capacity(m + n - 1);
        let (mut i, mut j) = (0, 0);
        loop {
            let x = a[i].min(b[j]).max(T::zero());
            cells.push((i, j));
            flow.push(x);
            a[i] -= x;
            b[j] -= x;
            if i == m - 1 && j == n - 1 {
                break;
            }
            let move_down = if i == m - 1 {
                false
            } else if j == n - 1 {
                true
            } else {
                a[i] <= b[j]
            };
            if move_down {
                i += 1;
            } else {
                j += 1;
            }
        }
        debug_assert_eq!(cells.len(), m + n - 1);
        Basis { m, n, cells, flow }
    }

    fn adjacency(&self) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
        let mut rows = vec![Vec::new(); self.m];
        let mut cols = vec![Vec::new(); self.n];
        for (k, &(i, j)) in self.cells.iter().enumerate() {
            rows[i].push(k);
            cols[j].push(k);
        }
        (rows, cols)
    }

    fn potentials(&self, cost: &[T], rows: &[Vec<usize>], cols: &[Vec<usize>]) -> (Vec<T>, Vec<T>) {
        let mut u = vec![T::nan(); self.m];
        let mut v = vec![T::nan(); self.n];
        u[0] = T::zero();
        let mut queue = VecDeque::from([Node::Row(0)]);
        while let Some(node) = queue.pop_front() {
            match node {
                Node::Row(i) => {
                    for &k in &rows[i] {
                        let j = self.cells[k].1;
                        if v[j].is_nan() {
                            v[j] = cost[i * self.n + j] - u[i];
                            queue.push_back(Node::Col(j));
                        }
                    }
                }
                Node::Col(j) => {
                    for &k in &cols[j] {
                        let i = self.cells[k].0;
                        if u[i].is_nan() {
                            u[i] = cost[i * self.n + j] - v[j];
                            queue.push_back(Node::Row(i));
                        }
                    }
                }
            }
        }
        (u, v)
    }

    /// Basic cells on the tree path from row `from` to column `to`, in order.
    fn tree_path(
        &self,
        from: usize,
        to: usize,
        rows: &[Vec<usize>],
        cols: &[Vec<usize>],
    ) -> Vec<usize> {
        // parent edge for each visited node, indexed rows then columns
        let mut via = vec![usize::MAX; self.m + self.n];
        let mut visited = vec![false; self.m + self.n];
        visited[from] = true;
        let mut queue = VecDeque::from([Node::Row(from)]);
        while let Some(node) = queue.pop_front() {
            match node {
                Node::Row(i) => {
                    for &k in &rows[i] {
                        let slot = self.m + self.cells[k].1;
                        if !visited[slot] {
                            visited[slot] = true;
                            via[slot] = k;
                            if self.cells[k].1 == to {
                                queue.clear();
                                break;
                            }
                            queue.push_back(Node::Col(self.cells[k].1));
                        }
                    }
                }
                Node::Col(j) => {
                    for &k in &cols[j] {
                        let slot = self.cells[k].0;
                        if !visited[slot] {
                            visited[slot] = true;
                            via[slot] = k;
                            queue.push_back(Node::Row(self.cells[k].0));
                        }
                    }
                }
            }
        }
        let mut path = Vec::new();
        let mut node = Node::Col(to);
        loop {
            let slot = match node {
                Node::Row(i) => i,
                Node::Col(j) => self.m + j,
            };
            if node == Node::Row(from) {
                break;
            }
            let k = via[slot];
            path.push(k);
            let (i, j) = self.cells[k];
            node = match node {
                Node::Col(_) => Node::Row(i),
                Node::Row(_) => Node::Col(j),
            };
        }
        path.reverse();
        path
    }
}

/// Solves `min Σ T_ij C_ij` over plans with row sums `supply` and column sums
/// `demand`. `cost` is row-major `supply.len() x demand.len()`. Totals must
/// agree up to rounding.
pub fn solve<T: Scalar>(supply: &[T], demand: &[T], cost: &[T]) -> Result<TransportPlan<T>> {
    let (m, n) = (supply.len(), demand.len());
    if m == 0 || n == 0 || cost.len() != m * n {
        return Err(Error::InvalidInput(format!(
            "transport problem with {m} sources, {n} sinks and {} costs",
            cost.len()
        )));
    }
    let total_a: T = supply.iter().copied().sum();
    let total_b: T = demand.iter().copied().sum();
    let scale = total_a.abs().max(total_b.abs()).max(T::one());
    if (total_a - total_b).abs() > T::lit(1e-6) * scale {
        return Err(Error::InvalidInput(
            "supply and demand totals differ".into(),
        ));
    }

    let cost_scale = cost.iter().fold(T::one(), |acc, &c| acc.max(c.abs()));
    let eps = T::epsilon() * T::lit(64.0) * cost_scale;
    let mut basis = Basis::north_west(supply, demand);
    let max_pivots = 50 * (m * n) + 1000;
    let mut pivots = 0usize;
    let mut degenerate_run = 0usize;
    let mut in_basis = vec![false; m * n];
    for &(i, j) in &basis.cells {
        in_basis[i * n + j] = true;
    }

    loop {
        let (rows, cols) = basis.adjacency();
        let (u, v) = basis.potentials(cost, &rows, &cols);
        let bland = degenerate_run > m + n;
        let mut entering: Option<(usize, usize)> = None;
        let mut best = -eps;
        'scan: for i in 0..m {
            for j in 0..n {
                if in_basis[i * n + j] {
                    continue;
                }
                let reduced = cost[i * n + j] - u[i] - v[j];
                if reduced < best {
                    entering = Some((i, j));
                    if bland {
                        break 'scan;
                    }
                    best = reduced;
                }
            }
        }
        let Some((ei, ej)) = entering else { break };

        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::Solver(format!(
                "transportation simplex exceeded {max_pivots} pivots"
            )));
        }

        // path edges alternate -, +, -, ... starting next to the entering cell
        let path = basis.tree_path(ei, ej, &rows, &cols);
        let mut theta = T::infinity();
        let mut leaving = usize::MAX;
        for (pos, &k) in path.iter().enumerate() {
            if pos % 2 == 0 {
                let (i, j) = basis.cells[k];
                let f = basis.flow[k];
                let better = f < theta
                    || (f == theta && {
                        let (li, lj) = basis.cells[leaving];
                        i * n + j < li * n + lj
                    });
                if better {
                    theta = f;
                    leaving = k;
                }
            }
        }
        degenerate_run = if theta > T::zero() {
            0
        } else {
            degenerate_run + 1
        };
        for (pos, &k) in path.iter().enumerate() {
            if pos % 2 == 0 {
                basis.flow[k] -= theta;
            } else {
                basis.flow[k] += theta;
            }
        }
        let (li, lj) = basis.cells[leaving];
        in_basis[li * n + lj] = false;
        in_basis[ei * n + ej] = true;
        basis.cells[leaving] = (ei, ej);
        basis.flow[leaving] = theta;
    }

    let flows: Vec<(usize, usize, T)> = basis
        .cells
        .iter()
        .zip(&basis.flow)
        .map(|(&(i, j), &f)| (i, j, f.max(T::zero())))
        .collect();
    let cost_value = flows
        .iter()
        .fold(T::zero(), |acc, &(i, j, f)| acc + f * cost[i * n + j]);
    Ok(TransportPlan {
        cost: cost_value,
        flows,
        pivots,
    })
}
