//! Two-phase revised simplex for sparse equality-form LPs.
//!
//! `min c'x  s.t.  A x = b, x >= 0` with `b >= 0`. The basis inverse is kept
//! as an LU factorization plus a product-form eta file, refactorized on a
//! fixed cadence. Phase one drives unit-cost artificials out of the basis;
//! rows whose artificial cannot be pivoted out are redundant and stay inert.
//! Used for the joint barycenter program, which couples several
//! transportation blocks through shared marginal variables and therefore
//! does not fit the bipartite network solver.

use crate::util::stable_sum;
use crate::{Error, Result};

pub(crate) struct LpCol {
    /// (row, coefficient), rows strictly increasing.
    pub entries: Vec<(u32, f64)>,
    pub cost: f64,
}

pub(crate) struct SparseLp {
    pub rows: usize,
    pub cols: Vec<LpCol>,
    pub rhs: Vec<f64>,
}

pub(crate) struct LpSolution {
    pub x: Vec<f64>,
    /// Row duals from the final basis.
    pub duals: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

const PIVOT_TOL: f64 = 1e-9;
const RC_TOL: f64 = 1e-9;
const SINGULAR_TOL: f64 = 1e-11;
const REFACTOR_EVERY: usize = 100;
const DEGENERATE_LIMIT: usize = 400;

struct Lu {
    size: usize,
    lcols: Vec<Vec<(u32, f64)>>,
    ucols: Vec<Vec<(u32, f64)>>,
    udiag: Vec<f64>,
    prow: Vec<u32>,
}

impl Lu {
    /// `x := B^-1 x`; input in row space, output indexed by basis position.
    fn ftran(&self, x: &mut [f64]) -> Vec<f64> {
        for k in 0..self.size {
            let val = x[self.prow[k] as usize];
            if val != 0.0 {
                for &(r, v) in &self.lcols[k] {
                    x[r as usize] -= v * val;
                }
            }
        }
        let mut z: Vec<f64> = (0..self.size).map(|k| x[self.prow[k] as usize]).collect();
        for k in (0..self.size).rev() {
            let y = z[k] / self.udiag[k];
            z[k] = y;
            if y != 0.0 {
                for &(t, v) in &self.ucols[k] {
                    z[t as usize] -= v * y;
                }
            }
        }
        z
    }

    /// Solve `B' y = c`; input indexed by basis position, output in row space.
    fn btran(&self, c: &[f64], y: &mut [f64]) {
        let mut w = vec![0.0; self.size];
        for k in 0..self.size {
            let mut acc = c[k];
            for &(t, v) in &self.ucols[k] {
                acc -= v * w[t as usize];
            }
            w[k] = acc / self.udiag[k];
        }
        for v in y.iter_mut() {
            *v = 0.0;
        }
        for k in (0..self.size).rev() {
            let mut acc = w[k];
            for &(r, v) in &self.lcols[k] {
                acc -= v * y[r as usize];
            }
            y[self.prow[k] as usize] = acc;
        }
    }
}

struct Eta {
    r: usize,
    /// Entering column in position space, pivot position excluded.
    d: Vec<(u32, f64)>,
    dr: f64,
}

struct Simplex<'a> {
    lp: &'a SparseLp,
    rows: usize,
    ncols: usize,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    x_b: Vec<f64>,
    lu: Lu,
    etas: Vec<Eta>,
    pivots: usize,
    degenerate_streak: usize,
    bland: bool,
    scratch: Vec<f64>,
}

impl<'a> Simplex<'a> {
    fn col_entries(&self, id: usize) -> &[(u32, f64)] {
        debug_assert!(id < self.ncols);
        &self.lp.cols[id].entries
    }

    fn is_artificial(&self, id: usize) -> bool {
        id >= self.ncols
    }

    fn refactor(&mut self) -> Result<()> {
        let m = self.rows;
        let mut lcols = Vec::with_capacity(m);
        let mut ucols = Vec::with_capacity(m);
        let mut udiag = Vec::with_capacity(m);
        let mut prow = vec![u32::MAX; m];
        let mut pinv = vec![u32::MAX; m];
        let mut work = vec![0.0f64; m];
        let mut touched: Vec<u32> = Vec::new();
        let mut heap = std::collections::BinaryHeap::new();
        let mut queued = vec![false; m];

        for k in 0..m {
            // scatter basis column k
            let id = self.basis[k];
            if self.is_artificial(id) {
                let r = id - self.ncols;
                work[r] = 1.0;
                touched.push(r as u32);
                if pinv[r] != u32::MAX {
                    heap.push(std::cmp::Reverse(pinv[r]));
                    queued[pinv[r] as usize] = true;
                }
            } else {
                for &(r, v) in self.col_entries(id) {
                    work[r as usize] = v;
                    touched.push(r);
                    let p = pinv[r as usize];
                    if p != u32::MAX {
                        heap.push(std::cmp::Reverse(p));
                        queued[p as usize] = true;
                    }
                }
            }
            // eliminate against already-pivoted positions in increasing order
            let mut uents: Vec<(u32, f64)> = Vec::new();
            while let Some(std::cmp::Reverse(t)) = heap.pop() {
                queued[t as usize] = false;
                let alpha = work[prow[t as usize] as usize];
                if alpha == 0.0 {
                    continue;
                }
                uents.push((t, alpha));
                for &(r, v) in &lcols[t as usize] {
                    let w = &mut work[r as usize];
                    if *w == 0.0 {
                        touched.push(r);
                        let p = pinv[r as usize];
                        if p != u32::MAX && !queued[p as usize] {
                            heap.push(std::cmp::Reverse(p));
                            queued[p as usize] = true;
                        }
                    }
                    *w -= v * alpha;
                }
            }
            // pivot: largest remaining entry, lowest row on ties
            let mut best_row = u32::MAX;
            let mut best_val = 0.0f64;
            for &r in &touched {
                if pinv[r as usize] == u32::MAX {
                    let a = work[r as usize].abs();
                    if a > best_val || (a == best_val && r < best_row) {
                        best_val = a;
                        best_row = r;
                    }
                }
            }
            if best_val < SINGULAR_TOL {
                return Err(Error::SingularBasis);
            }
            let piv = work[best_row as usize];
            let mut lents: Vec<(u32, f64)> = Vec::new();
            for &r in &touched {
                if pinv[r as usize] == u32::MAX && r != best_row {
                    let v = work[r as usize];
                    if v != 0.0 {
                        lents.push((r, v / piv));
                    }
                }
            }
            lents.sort_unstable_by_key(|(r, _)| *r);
            prow[k] = best_row;
            pinv[best_row as usize] = k as u32;
            udiag.push(piv);
            lcols.push(lents);
            ucols.push(uents);
            for &r in &touched {
                work[r as usize] = 0.0;
            }
            touched.clear();
        }

        self.lu = Lu {
            size: m,
            lcols,
            ucols,
            udiag,
            prow,
        };
        self.etas.clear();
        // refresh basic values from scratch
        let mut b = self.lp.rhs.clone();
        self.x_b = self.lu.ftran(&mut b);
        Ok(())
    }

    /// `B^-1 a` for an arbitrary column, through LU and the eta file.
    fn ftran_col(&mut self, id: usize) -> Vec<f64> {
        let mut buf = std::mem::take(&mut self.scratch);
        buf.iter_mut().for_each(|v| *v = 0.0);
        if self.is_artificial(id) {
            buf[id - self.ncols] = 1.0;
        } else {
            for &(r, v) in self.col_entries(id) {
                buf[r as usize] = v;
            }
        }
        let mut d = self.lu.ftran(&mut buf);
        self.scratch = buf;
        for eta in &self.etas {
            let xr = d[eta.r];
            if xr != 0.0 {
                let t = xr / eta.dr;
                d[eta.r] = t;
                for &(i, v) in &eta.d {
                    d[i as usize] -= v * t;
                }
            }
        }
        d
    }

    /// Row duals for the given basis costs.
    fn btran_costs(&self, costs: &dyn Fn(usize) -> f64) -> Vec<f64> {
        let mut c: Vec<f64> = (0..self.rows).map(|k| costs(self.basis[k])).collect();
        for eta in self.etas.iter().rev() {
            let mut acc = c[eta.r];
            for &(i, v) in &eta.d {
                acc -= v * c[i as usize];
            }
            c[eta.r] = acc / eta.dr;
        }
        let mut y = vec![0.0; self.rows];
        self.lu.btran(&c, &mut y);
        y
    }

    fn reduced_cost(&self, id: usize, y: &[f64], costs: &dyn Fn(usize) -> f64) -> f64 {
        let mut rc = costs(id);
        for &(r, v) in self.col_entries(id) {
            rc -= v * y[r as usize];
        }
        rc
    }

    fn find_entering(&self, y: &[f64], costs: &dyn Fn(usize) -> f64) -> Option<(usize, f64)> {
        if self.bland {
            for id in 0..self.ncols {
                if self.in_basis[id] {
                    continue;
                }
                let rc = self.reduced_cost(id, y, costs);
                if rc < -RC_TOL {
                    return Some((id, rc));
                }
            }
            return None;
        }
        let mut best: Option<(usize, f64)> = None;
        for id in 0..self.ncols {
            if self.in_basis[id] {
                continue;
            }
            let rc = self.reduced_cost(id, y, costs);
            if rc < -RC_TOL && best.map_or(true, |(_, b)| rc < b) {
                best = Some((id, rc));
            }
        }
        best
    }

    /// Returns false when the LP is unbounded in the entering direction.
    fn pivot(&mut self, entering: usize) -> Result<bool> {
        let d = self.ftran_col(entering);
        // ratio test: tightest bound wins; among near-ties prefer the
        // largest pivot element for stability, then the lowest position
        let mut theta = f64::INFINITY;
        for (i, &di) in d.iter().enumerate() {
            if di > PIVOT_TOL {
                let ratio = self.x_b[i] / di;
                if ratio < theta {
                    theta = ratio;
                }
            }
        }
        if !theta.is_finite() {
            return Ok(false);
        }
        let bound = theta + 1e-12 * theta.abs().max(1.0);
        let mut leave: Option<usize> = None;
        let mut leave_piv = 0.0f64;
        for (i, &di) in d.iter().enumerate() {
            if di > PIVOT_TOL && self.x_b[i] / di <= bound {
                if di > leave_piv {
                    leave_piv = di;
                    leave = Some(i);
                }
            }
        }
        let r = leave.expect("ratio test found a bound");
        let theta = self.x_b[r] / d[r];

        for (i, &di) in d.iter().enumerate() {
            if di != 0.0 {
                self.x_b[i] -= theta * di;
            }
        }
        self.x_b[r] = theta;

        let old = self.basis[r];
        if old < self.ncols {
            self.in_basis[old] = false;
        }
        if entering < self.ncols {
            self.in_basis[entering] = true;
        }
        self.basis[r] = entering;

        let sparse: Vec<(u32, f64)> = d
            .iter()
            .enumerate()
            .filter(|(i, v)| *i != r && **v != 0.0)
            .map(|(i, v)| (i as u32, *v))
            .collect();
        self.etas.push(Eta {
            r,
            d: sparse,
            dr: d[r],
        });
        self.pivots += 1;

        if theta <= 1e-13 {
            self.degenerate_streak += 1;
            if self.degenerate_streak > DEGENERATE_LIMIT {
                self.bland = true;
            }
        } else {
            self.degenerate_streak = 0;
            self.bland = false;
        }

        if self.etas.len() >= REFACTOR_EVERY {
            self.refactor()?;
        }
        Ok(true)
    }

    fn run_phase(&mut self, costs: &dyn Fn(usize) -> f64, max_pivots: usize) -> Result<()> {
        loop {
            if self.pivots > max_pivots {
                return Err(Error::PivotLimit {
                    limit: max_pivots,
                    best: None,
                });
            }
            let y = self.btran_costs(costs);
            let Some((entering, _rc)) = self.find_entering(&y, costs) else {
                return Ok(());
            };
            if !self.pivot(entering)? {
                return Err(Error::InvalidArg(
                    "linear program is unbounded".to_string(),
                ));
            }
        }
    }
}

pub(crate) fn solve_lp(lp: &SparseLp) -> Result<LpSolution> {
    let rows = lp.rows;
    let ncols = lp.cols.len();
    debug_assert!(lp.rhs.iter().all(|b| *b >= 0.0), "rhs must be nonnegative");

    let mut s = Simplex {
        lp,
        rows,
        ncols,
        basis: (0..rows).map(|r| ncols + r).collect(),
        in_basis: vec![false; ncols],
        x_b: lp.rhs.clone(),
        lu: Lu {
            size: 0,
            lcols: Vec::new(),
            ucols: Vec::new(),
            udiag: Vec::new(),
            prow: Vec::new(),
        },
        etas: Vec::new(),
        pivots: 0,
        degenerate_streak: 0,
        bland: false,
        scratch: vec![0.0; rows],
    };
    s.refactor()?;

    let max_pivots = 50_000 + 30 * (rows + ncols);

    // phase 1: minimize the artificial mass
    let ncols_ph = ncols;
    let phase1 = move |id: usize| if id >= ncols_ph { 1.0 } else { 0.0 };
    s.run_phase(&phase1, max_pivots)?;
    let residual = stable_sum(
        (0..rows)
            .filter(|k| s.basis[*k] >= ncols)
            .map(|k| s.x_b[k]),
    );
    if residual > 1e-7 {
        return Err(Error::LpInfeasible(residual));
    }

    // pivot remaining artificials out where the row is not redundant
    s.refactor()?;
    for r in 0..rows {
        if s.basis[r] < ncols {
            continue;
        }
        let mut e = vec![0.0; rows];
        e[r] = 1.0;
        let mut yr = vec![0.0; rows];
        // row r of B^-1: solve B' y = e_r
        s.lu.btran(&e, &mut yr);
        let mut found = None;
        for id in 0..ncols {
            if s.in_basis[id] {
                continue;
            }
            let mut alpha = 0.0;
            for &(row, v) in &lp.cols[id].entries {
                alpha += v * yr[row as usize];
            }
            if alpha.abs() > 1e-7 {
                found = Some(id);
                break;
            }
        }
        if let Some(id) = found {
            let d = s.ftran_col(id);
            let old = s.basis[r];
            debug_assert!(old >= ncols);
            s.basis[r] = id;
            s.in_basis[id] = true;
            let sparse: Vec<(u32, f64)> = d
                .iter()
                .enumerate()
                .filter(|(i, v)| *i != r && **v != 0.0)
                .map(|(i, v)| (i as u32, *v))
                .collect();
            s.etas.push(Eta { r, d: sparse, dr: d[r] });
            s.pivots += 1;
            if s.etas.len() >= REFACTOR_EVERY {
                s.refactor()?;
            }
        }
        // otherwise the row is redundant; the artificial stays at zero
    }

    // phase 2: the real objective; artificials may not re-enter
    s.refactor()?;
    let cols_ref = &lp.cols;
    let phase2 = move |id: usize| {
        if id >= ncols_ph {
            0.0
        } else {
            cols_ref[id].cost
        }
    };
    s.bland = false;
    s.degenerate_streak = 0;
    s.run_phase(&phase2, max_pivots)?;

    let mut x = vec![0.0; ncols];
    for (k, &id) in s.basis.iter().enumerate() {
        if id < ncols {
            x[id] = s.x_b[k].max(0.0);
        }
    }
    let duals = s.btran_costs(&phase2);
    let objective = stable_sum((0..ncols).map(|j| lp.cols[j].cost * x[j]));
    Ok(LpSolution {
        x,
        duals,
        objective,
        pivots: s.pivots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(entries: Vec<(u32, f64)>, cost: f64) -> LpCol {
        LpCol { entries, cost }
    }

    /// min x + 2y s.t. x + y = 1 -> x = 1.
    #[test]
    fn tiny_lp() {
        let lp = SparseLp {
            rows: 1,
            cols: vec![col(vec![(0, 1.0)], 1.0), col(vec![(0, 1.0)], 2.0)],
            rhs: vec![1.0],
        };
        let sol = solve_lp(&lp).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-12);
        assert!(sol.x[1].abs() < 1e-12);
        assert!((sol.objective - 1.0).abs() < 1e-12);
    }

    /// 2x2 transportation written as a general LP; optimum is the diagonal.
    #[test]
    fn small_transport_as_lp() {
        // rows: supply a, supply b, demand c, demand d
        let mk = |i: u32, j: u32, c: f64| col(vec![(i, 1.0), (j, 1.0)], c);
        let lp = SparseLp {
            rows: 4,
            cols: vec![
                mk(0, 2, 0.0), // a->c
                mk(0, 3, 1.0), // a->d
                mk(1, 2, 1.0), // b->c
                mk(1, 3, 0.0), // b->d
            ],
            rhs: vec![0.5, 0.5, 0.5, 0.5],
        };
        let sol = solve_lp(&lp).unwrap();
        assert!(sol.objective.abs() < 1e-12);
        assert!((sol.x[0] - 0.5).abs() < 1e-12);
        assert!((sol.x[3] - 0.5).abs() < 1e-12);
    }

    /// Redundant row: duplicated constraint keeps a zero artificial basic.
    #[test]
    fn redundant_rows_are_tolerated() {
        let lp = SparseLp {
            rows: 2,
            cols: vec![
                col(vec![(0, 1.0), (1, 1.0)], 1.0),
                col(vec![(0, 1.0), (1, 1.0)], 3.0),
            ],
            rhs: vec![1.0, 1.0],
        };
        let sol = solve_lp(&lp).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-10);
        assert!((sol.objective - 1.0).abs() < 1e-10);
    }

    #[test]
    fn infeasible_lp_detected() {
        // x = 1 and x = 2 with the same variable
        let lp = SparseLp {
            rows: 2,
            cols: vec![col(vec![(0, 1.0), (1, 1.0)], 1.0)],
            rhs: vec![1.0, 2.0],
        };
        assert!(matches!(solve_lp(&lp), Err(Error::LpInfeasible(_))));
    }

    /// Random dense-ish LPs against brute force over basis subsets.
    #[test]
    fn matches_enumeration_on_small_instances() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _case in 0..20 {
            let rows = 3;
            let ncols = 6;
            let mut cols = Vec::new();
            for _ in 0..ncols {
                let entries: Vec<(u32, f64)> = (0..rows as u32)
                    .filter_map(|r| {
                        if rng.gen_bool(0.8) {
                            Some((r, rng.gen_range(0.1..2.0)))
                        } else {
                            None
                        }
                    })
                    .collect();
                cols.push(col(entries, rng.gen_range(0.0..5.0)));
            }
            let rhs: Vec<f64> = (0..rows).map(|_| rng.gen_range(0.5..2.0)).collect();
            let lp = SparseLp { rows, cols, rhs };

            // brute force: all column triples forming a feasible basis
            let mut best = f64::INFINITY;
            for a in 0..ncols {
                for b in (a + 1)..ncols {
                    for c in (b + 1)..ncols {
                        let mut mat = [[0.0f64; 3]; 3];
                        for (k, id) in [a, b, c].into_iter().enumerate() {
                            for &(r, v) in &lp.cols[id].entries {
                                mat[r as usize][k] = v;
                            }
                        }
                        let det = mat[0][0] * (mat[1][1] * mat[2][2] - mat[1][2] * mat[2][1])
                            - mat[0][1] * (mat[1][0] * mat[2][2] - mat[1][2] * mat[2][0])
                            + mat[0][2] * (mat[1][0] * mat[2][1] - mat[1][1] * mat[2][0]);
                        if det.abs() < 1e-9 {
                            continue;
                        }
                        // Cramer
                        let solve1 = |ci: usize| {
                            let mut m2 = mat;
                            for r in 0..3 {
                                m2[r][ci] = lp.rhs[r];
                            }
                            (m2[0][0] * (m2[1][1] * m2[2][2] - m2[1][2] * m2[2][1])
                                - m2[0][1] * (m2[1][0] * m2[2][2] - m2[1][2] * m2[2][0])
                                + m2[0][2] * (m2[1][0] * m2[2][1] - m2[1][1] * m2[2][0]))
                                / det
                        };
                        let xs = [solve1(0), solve1(1), solve1(2)];
                        if xs.iter().all(|v| *v >= -1e-10) {
                            let obj = xs[0] * lp.cols[a].cost
                                + xs[1] * lp.cols[b].cost
                                + xs[2] * lp.cols[c].cost;
                            best = best.min(obj);
                        }
                    }
                }
            }
            match solve_lp(&lp) {
                Ok(sol) => {
                    assert!(best.is_finite(), "enumeration found no vertex but LP solved");
                    assert!(
                        (sol.objective - best).abs() < 1e-8,
                        "objective {} vs enumeration {}",
                        sol.objective,
                        best
                    );
                }
                Err(Error::LpInfeasible(_)) => {
                    assert!(!best.is_finite());
                }
                Err(e) => panic!("unexpected error {e:?}"),
            }
        }
    }
}
