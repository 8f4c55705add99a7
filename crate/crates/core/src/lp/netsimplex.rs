//! Network simplex for the bipartite transportation problem.
//!
//! Works on compacted instances: `n` supply nodes with strictly positive
//! supplies, `m` demand nodes with strictly positive demands, and a sparse
//! arc list sorted by (source, target). Initialization runs the
//! northwest-corner rule along the active staircase; staircase cells missing
//! from the arc list are patched with big-M artificial arcs, so restricted
//! supports start from the same deterministic basis. Entering arcs follow
//! the configured pricing rule with Bland's rule as an anti-cycling fallback
//! after a run of degenerate pivots; ties break toward the lowest arc index
//! on both the entering and the leaving side.

use super::{PivotRule, SolveOptions};
use crate::util::stable_sum;

const NONE: u32 = u32::MAX;

pub(crate) struct TransportInstance {
    pub supplies: Vec<f64>,
    pub demands: Vec<f64>,
    /// Real arcs sorted lexicographically by (src, dst).
    pub arc_src: Vec<u32>,
    pub arc_dst: Vec<u32>,
    pub arc_cost: Vec<f64>,
}

pub(crate) struct TransportSolution {
    /// Flow per real arc, same order as the instance arc list.
    pub flow: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub pivots: usize,
    /// Mass left on artificial arcs; positive means the support is infeasible.
    pub artificial_mass: f64,
    pub objective: f64,
    pub hit_pivot_limit: bool,
}

struct Solver<'a> {
    n: usize,
    m: usize,
    real_count: usize,
    arc_src: Vec<u32>,
    arc_dst: Vec<u32>,
    cost: Vec<f64>,
    flow: Vec<f64>,
    in_tree: Vec<bool>,
    row_start: Vec<usize>,
    parent: Vec<u32>,
    pred: Vec<u32>,
    depth: Vec<u64>,
    children: Vec<Vec<u32>>,
    root: u32,
    pos_in_parent: Vec<u32>,
    potential: Vec<f64>,
    opts: &'a SolveOptions,
    cursor: usize,
    block_size: usize,
    dantzig: bool,
    bland: bool,
    degenerate_streak: usize,
    pivots: usize,
    stat_cycle_len: u64,
    stat_subtree: u64,
    stat_scanned: u64,
}

impl<'a> Solver<'a> {
    fn node_of_col(&self, j: u32) -> u32 {
        self.n as u32 + j
    }

    fn reduced_cost(&self, arc: usize) -> f64 {
        let s = self.arc_src[arc] as usize;
        let t = self.n + self.arc_dst[arc] as usize;
        self.cost[arc] - self.potential[s] + self.potential[t]
    }

    fn attach(&mut self, node: u32, par: u32, arc: u32) {
        self.parent[node as usize] = par;
        self.pred[node as usize] = arc;
        self.pos_in_parent[node as usize] = self.children[par as usize].len() as u32;
        self.children[par as usize].push(node);
    }

    fn detach(&mut self, node: u32) {
        let par = self.parent[node as usize];
        let pos = self.pos_in_parent[node as usize] as usize;
        let list = &mut self.children[par as usize];
        list.swap_remove(pos);
        if pos < list.len() {
            let moved = list[pos];
            self.pos_in_parent[moved as usize] = pos as u32;
        }
    }

    fn find_real_arc(&self, i: u32, j: u32) -> Option<usize> {
        let lo = self.row_start[i as usize];
        let hi = self.row_start[i as usize + 1];
        let slice = &self.arc_dst[lo..hi];
        slice.binary_search(&j).ok().map(|k| lo + k)
    }

    /// Northwest-corner start over the staircase; missing cells get big-M
    /// artificial arcs so the initial basis is always a spanning tree.
    fn initialize(&mut self, supplies: &[f64], demands: &[f64], big_m: f64) {
        let n = self.n;
        let m = self.m;
        let mut a = supplies.to_vec();
        let mut b = demands.to_vec();
        let mut i = 0usize;
        let mut j = 0usize;

        let x0 = a[0].min(b[0]);
        a[0] -= x0;
        b[0] -= x0;
        let arc0 = self.basis_arc(0, 0, big_m);
        self.flow[arc0] = x0;
        self.in_tree[arc0] = true;
        // root is row node 0; attach col 0 beneath it
        let col0 = self.node_of_col(0);
        self.attach(col0, 0, arc0 as u32);
        self.depth[col0 as usize] = 1;
        self.potential[col0 as usize] = self.potential[0] - self.cost[arc0];

        while !(i + 1 == n && j + 1 == m) {
            let advance_row = if j + 1 == m {
                true
            } else if i + 1 == n {
                false
            } else {
                a[i] <= b[j]
            };
            if advance_row {
                i += 1;
            } else {
                j += 1;
            }
            let x = a[i].min(b[j]);
            a[i] -= x;
            b[j] -= x;
            let arc = self.basis_arc(i as u32, j as u32, big_m);
            self.flow[arc] = x;
            self.in_tree[arc] = true;
            if advance_row {
                // new row node hangs beneath the current column
                let col = self.node_of_col(j as u32);
                self.attach(i as u32, col, arc as u32);
                self.depth[i] = self.depth[col as usize] + 1;
                self.potential[i] = self.potential[col as usize] + self.cost[arc];
            } else {
                let col = self.node_of_col(j as u32);
                self.attach(col, i as u32, arc as u32);
                self.depth[col as usize] = self.depth[i] + 1;
                self.potential[col as usize] = self.potential[i] - self.cost[arc];
            }
        }
    }

    fn basis_arc(&mut self, i: u32, j: u32, big_m: f64) -> usize {
        match self.find_real_arc(i, j) {
            Some(a) => a,
            None => {
                self.arc_src.push(i);
                self.arc_dst.push(j);
                self.cost.push(big_m);
                self.flow.push(0.0);
                self.in_tree.push(false);
                self.arc_src.len() - 1
            }
        }
    }

    fn find_entering(&mut self) -> Option<(usize, f64)> {
        let tol = self.opts.tolerance;
        let count = self.arc_src.len();
        if self.bland {
            for a in 0..count {
                if self.in_tree[a] {
                    continue;
                }
                let rc = self.reduced_cost(a);
                if rc < -tol {
                    return Some((a, rc));
                }
            }
            return None;
        }
        if self.dantzig {
            let mut best: Option<(usize, f64)> = None;
            for a in 0..count {
                if self.in_tree[a] {
                    continue;
                }
                let rc = self.reduced_cost(a);
                if rc < -tol && best.map_or(true, |(_, b)| rc < b) {
                    best = Some((a, rc));
                }
            }
            return best;
        }
        // block search: deterministic cursor, best candidate within the
        // first block that contains one
        let mut scanned = 0usize;
        let mut pos = self.cursor;
        while scanned < count {
            let len = self.block_size.min(count - scanned);
            let mut best: Option<(usize, f64)> = None;
            self.stat_scanned += len as u64;
            for _ in 0..len {
                let a = pos;
                pos += 1;
                if pos == count {
                    pos = 0;
                }
                if self.in_tree[a] {
                    continue;
                }
                let rc = self.reduced_cost(a);
                if rc < -tol && best.map_or(true, |(b, brc)| rc < brc || (rc == brc && a < b)) {
                    best = Some((a, rc));
                }
            }
            scanned += len;
            if best.is_some() {
                self.cursor = pos;
                return best;
            }
        }
        None
    }

    fn pivot(&mut self, entering: usize, rc: f64) {
        let s_node = self.arc_src[entering] as u32;
        let t_node = self.node_of_col(self.arc_dst[entering]);

        // climb to the least common ancestor collecting (arc, deeper node)
        let mut path_s: Vec<(u32, u32)> = Vec::new();
        let mut path_t: Vec<(u32, u32)> = Vec::new();
        let mut x = s_node;
        let mut y = t_node;
        while x != y {
            if self.depth[x as usize] >= self.depth[y as usize] {
                path_s.push((self.pred[x as usize], x));
                x = self.parent[x as usize];
            } else {
                path_t.push((self.pred[y as usize], y));
                y = self.parent[y as usize];
            }
        }

        // rotation order: entering (+), then t-side up, then s-side down;
        // arcs at even rotation positions carry -theta
        let total = path_t.len() + path_s.len();
        self.stat_cycle_len += total as u64;
        let arc_at = |k: usize| -> (u32, u32, bool) {
            // returns (arc, deeper node, on_s_side)
            if k < path_t.len() {
                let (a, d) = path_t[k];
                (a, d, false)
            } else {
                let (a, d) = path_s[total - 1 - k];
                (a, d, true)
            }
        };

        let mut theta = f64::INFINITY;
        let mut leaving: Option<(u32, u32, bool)> = None;
        for k in (0..total).step_by(2) {
            let (arc, deeper, on_s) = arc_at(k);
            let f = self.flow[arc as usize];
            if f < theta
                || (f == theta && leaving.map_or(true, |(l, _, _)| arc < l))
            {
                theta = f;
                leaving = Some((arc, deeper, on_s));
            }
        }
        let (leave_arc, leave_deeper, leave_on_s) =
            leaving.expect("cycle always has a decreasing arc");

        // apply the flow change around the cycle
        if theta > 0.0 {
            self.flow[entering] += theta;
            for k in 0..total {
                let (arc, _, _) = arc_at(k);
                if k % 2 == 0 {
                    self.flow[arc as usize] -= theta;
                } else {
                    self.flow[arc as usize] += theta;
                }
            }
            self.degenerate_streak = 0;
            self.bland = false;
        } else {
            self.degenerate_streak += 1;
            if self.degenerate_streak > self.opts.degenerate_limit {
                self.bland = true;
            }
        }

        // the leaving arc cuts the tree into the component under its child
        // node `q` and the component holding the current root; re-hang
        // whichever side is smaller, re-rooting the tree when the root side
        // moves
        let alpha = if leave_on_s { s_node } else { t_node };
        let beta = if leave_on_s { t_node } else { s_node };
        let q = leave_deeper;

        let total_nodes = (self.n + self.m) as u64;
        let cut_size = self.subtree_size_capped(q, total_nodes / 2);

        self.in_tree[leave_arc as usize] = false;
        self.in_tree[entering] = true;

        if 2 * cut_size <= total_nodes {
            // re-hang the cut component at the entering endpoint inside it
            self.detach(q);
            self.parent[q as usize] = NONE;
            self.pred[q as usize] = NONE;
            self.reverse_chain(alpha, q);
            self.attach(alpha, beta, entering as u32);
            let delta = if leave_on_s { rc } else { -rc };
            self.refresh_subtree(alpha, delta);
        } else {
            // the cut component is the larger side: make it the main tree
            // rooted at `q` and re-hang the old root's side instead
            self.detach(q);
            self.parent[q as usize] = NONE;
            self.pred[q as usize] = NONE;
            let old_root = self.root;
            self.root = q;
            self.reverse_chain(beta, old_root);
            self.attach(beta, alpha, entering as u32);
            let delta = if leave_on_s { -rc } else { rc };
            self.refresh_subtree(beta, delta);
        }

        self.pivots += 1;
    }

    /// Reverse parent pointers along the path `from -> .. -> top`, making
    /// `from` the top of that chain. `from == top` is a no-op.
    fn reverse_chain(&mut self, from: u32, top: u32) {
        let mut chain = vec![from];
        let mut w = from;
        while w != top {
            w = self.parent[w as usize];
            chain.push(w);
        }
        let chain_arcs: Vec<u32> = chain[..chain.len() - 1]
            .iter()
            .map(|z| self.pred[*z as usize])
            .collect();
        for z in &chain[..chain.len() - 1] {
            self.detach(*z);
        }
        for s in 0..chain.len() - 1 {
            self.attach(chain[s + 1], chain[s], chain_arcs[s]);
        }
    }

    /// Nodes in the subtree under `v`, stopping early beyond `cap`.
    fn subtree_size_capped(&self, v: u32, cap: u64) -> u64 {
        let mut count = 0u64;
        let mut stack = vec![v];
        while let Some(w) = stack.pop() {
            count += 1;
            if count > cap {
                return count;
            }
            stack.extend_from_slice(&self.children[w as usize]);
        }
        count
    }

    /// Recompute depths and shift potentials across the subtree under
    /// `start` after it has been re-attached.
    fn refresh_subtree(&mut self, start: u32, delta: f64) {
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            self.stat_subtree += 1;
            let p = self.parent[v as usize];
            self.depth[v as usize] = self.depth[p as usize] + 1;
            self.potential[v as usize] += delta;
            stack.extend_from_slice(&self.children[v as usize]);
        }
    }
}

pub(crate) fn solve_transport(
    inst: TransportInstance,
    opts: &SolveOptions,
) -> TransportSolution {
    let n = inst.supplies.len();
    let m = inst.demands.len();
    let real_count = inst.arc_src.len();
    debug_assert!(n > 0 && m > 0);

    let max_cost = inst
        .arc_cost
        .iter()
        .fold(0.0f64, |acc, c| acc.max(c.abs()));
    let big_m = 2.0 * (n + m + 1) as f64 * max_cost.max(1.0) + 1.0;

    let mut row_start = vec![0usize; n + 1];
    for &s in &inst.arc_src {
        row_start[s as usize + 1] += 1;
    }
    for i in 0..n {
        row_start[i + 1] += row_start[i];
    }

    let nodes = n + m;
    let arc_count = real_count;
    let (dantzig, block_size) = match opts.pivot_rule {
        PivotRule::Dantzig => (true, 0),
        PivotRule::Block(b) => (false, b.max(8)),
        PivotRule::Auto => {
            if arc_count > 4096 {
                (false, (arc_count as f64).sqrt().ceil() as usize)
            } else {
                (true, 0)
            }
        }
    };

    let mut solver = Solver {
        n,
        m,
        real_count,
        arc_src: inst.arc_src,
        arc_dst: inst.arc_dst,
        cost: inst.arc_cost,
        flow: vec![0.0; real_count],
        in_tree: vec![false; real_count],
        row_start,
        parent: vec![NONE; nodes],
        pred: vec![NONE; nodes],
        depth: vec![0u64; nodes],
        children: vec![Vec::new(); nodes],
        root: 0,
        pos_in_parent: vec![0; nodes],
        potential: vec![0.0; nodes],
        opts,
        cursor: 0,
        block_size,
        dantzig,
        bland: false,
        degenerate_streak: 0,
        pivots: 0,
        stat_cycle_len: 0,
        stat_subtree: 0,
        stat_scanned: 0,
    };

    solver.initialize(&inst.supplies, &inst.demands, big_m);

    let max_pivots = if opts.max_pivots == 0 {
        10_000 + 400 * nodes
    } else {
        opts.max_pivots
    };

    let mut hit_limit = false;
    while let Some((arc, rc)) = solver.find_entering() {
        if solver.pivots >= max_pivots {
            hit_limit = true;
            break;
        }
        solver.pivot(arc, rc);
    }

    if std::env::var("OTMS_DEBUG").is_ok() {
        eprintln!(
            "netsimplex: nodes {} arcs {} pivots {} cycle_len {} subtree {} scanned {}",
            nodes, arc_count, solver.pivots, solver.stat_cycle_len, solver.stat_subtree,
            solver.stat_scanned
        );
    }
    let artificial_mass = stable_sum(
        solver.flow[solver.real_count..].iter().copied(),
    );
    let objective = stable_sum(
        (0..solver.real_count).map(|a| solver.cost[a] * solver.flow[a]),
    );
    let u: Vec<f64> = (0..n).map(|i| solver.potential[i]).collect();
    let v: Vec<f64> = (0..m).map(|j| -solver.potential[n + j]).collect();
    let mut flow = solver.flow;
    flow.truncate(solver.real_count);

    TransportSolution {
        flow,
        u,
        v,
        pivots: solver.pivots,
        artificial_mass,
        objective,
        hit_pivot_limit: hit_limit,
    }
}
