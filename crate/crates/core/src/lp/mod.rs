//! Exact solvers for the transportation linear program and its variants.
//!
//! All solves return optimal basic solutions with dual potentials, so
//! optimality can be certified after the fact: reduced costs
//! `c_ij - u_i - v_j` are nonnegative over the admitted pairs and vanish on
//! the support. Zero-weight cells never enter the LP; their dual entries are
//! reported as zero.

mod barycenter;
mod netsimplex;
mod simplex;

pub use barycenter::{solve_barycenter, BarycenterSolution};


use crate::grid::Grid;
use crate::measure::{CostSpec, DiscreteMeasure};
use crate::util::stable_sum;
use crate::{Error, Result};

/// Entering-arc selection strategy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PivotRule {
    /// Most negative reduced cost over all arcs, lowest index on ties.
    Dantzig,
    /// Most negative reduced cost within a rotating block of the given size.
    Block(usize),
    /// Dantzig below 100k arcs, block search with size sqrt(#arcs) above.
    Auto,
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    /// Entering threshold on reduced costs.
    pub tolerance: f64,
    /// Hard pivot cap; 0 picks `10_000 + 400 * (n + m)`.
    pub max_pivots: usize,
    /// Consecutive degenerate pivots before Bland's rule engages.
    pub degenerate_limit: usize,
    pub pivot_rule: PivotRule,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tolerance: 1e-9,
            max_pivots: 0,
            degenerate_limit: 10_000,
            pivot_rule: PivotRule::Auto,
        }
    }
}

/// One positive entry of a transport plan.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanEntry {
    pub source: u32,
    pub target: u32,
    pub mass: f64,
}

/// Dual potentials, one per source and target cell (zero on inactive cells).
#[derive(Clone, Debug)]
pub struct PlanDuals {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// Sparse optimal transport plan with its objective and dual certificate.
#[derive(Clone, Debug)]
pub struct Plan {
    pub entries: Vec<PlanEntry>,
    pub objective: f64,
    pub duals: Option<PlanDuals>,
    pub n: usize,
    pub m: usize,
    /// Marginals hold with inequality only (partial transport).
    pub partial: bool,
    pub transported_mass: f64,
    pub pivots: usize,
}

impl Plan {
    pub fn support_len(&self) -> usize {
        self.entries.len()
    }

    /// Row sums indexed by source cell.
    pub fn row_sums(&self) -> Vec<f64> {
        let mut r = vec![0.0; self.n];
        for e in &self.entries {
            r[e.source as usize] += e.mass;
        }
        r
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.m];
        for e in &self.entries {
            c[e.target as usize] += e.mass;
        }
        c
    }
}

/// Admitted (source, target) index pairs for a restricted solve.
#[derive(Clone, Debug, PartialEq)]
pub struct SupportSet {
    pairs: Vec<(u32, u32)>,
    pub level: u32,
}

impl SupportSet {
    pub fn new(mut pairs: Vec<(u32, u32)>, level: u32) -> Self {
        pairs.sort_unstable();
        pairs.dedup();
        SupportSet { pairs, level }
    }

    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, pair: (u32, u32)) -> bool {
        self.pairs.binary_search(&pair).is_ok()
    }

    pub fn is_subset_of(&self, other: &SupportSet) -> bool {
        let mut it = other.pairs.iter();
        'outer: for p in &self.pairs {
            for q in it.by_ref() {
                match q.cmp(p) {
                    std::cmp::Ordering::Less => continue,
                    std::cmp::Ordering::Equal => continue 'outer,
                    std::cmp::Ordering::Greater => return false,
                }
            }
            return false;
        }
        true
    }

    /// Merge two supports at the same level.
    pub fn union(&self, other: &SupportSet) -> SupportSet {
        let mut pairs = Vec::with_capacity(self.len() + other.len());
        pairs.extend_from_slice(&self.pairs);
        pairs.extend_from_slice(&other.pairs);
        SupportSet::new(pairs, self.level)
    }

    /// Drop pairs touching zero-mass cells.
    pub fn retain_positive(&mut self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) {
        self.pairs.retain(|(i, j)| {
            mu.weights[*i as usize] > 0.0 && nu.weights[*j as usize] > 0.0
        });
    }
}

/// Prescribed transported mass for partial transport.
#[derive(Clone, Copy, Debug)]
pub struct PartialSpec {
    pub transported_mass: f64,
}

struct Compact {
    rows: Vec<u32>,
    cols: Vec<u32>,
    row_of: Vec<u32>,
    col_of: Vec<u32>,
}

const UNMAPPED: u32 = u32::MAX;

fn compact(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Compact {
    let rows = mu.positive_cells();
    let cols = nu.positive_cells();
    let mut row_of = vec![UNMAPPED; mu.len()];
    for (c, &orig) in rows.iter().enumerate() {
        row_of[orig as usize] = c as u32;
    }
    let mut col_of = vec![UNMAPPED; nu.len()];
    for (c, &orig) in cols.iter().enumerate() {
        col_of[orig as usize] = c as u32;
    }
    Compact {
        rows,
        cols,
        row_of,
        col_of,
    }
}

fn arc_cost(cost: &CostSpec, gx: &Grid, gy: &Grid, i: u32, j: u32) -> f64 {
    cost.eval(gx.center(i as usize), gy.center(j as usize))
}

fn check_balance(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<()> {
    let a = mu.total_mass();
    let b = nu.total_mass();
    if (a - b).abs() > 1e-12 {
        return Err(Error::Unbalanced(a, b));
    }
    if mu.positive_cells().is_empty() || nu.positive_cells().is_empty() {
        return Err(Error::ZeroMass);
    }
    Ok(())
}

fn solve_balanced(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: &CostSpec,
    support: Option<&SupportSet>,
    opts: &SolveOptions,
) -> Result<Plan> {
    check_balance(mu, nu)?;
    let cpt = compact(mu, nu);
    let gx = &mu.grid;
    let gy = &nu.grid;

    let mut arc_src = Vec::new();
    let mut arc_dst = Vec::new();
    let mut arc_cost_v = Vec::new();
    match support {
        None => {
            arc_src.reserve(cpt.rows.len() * cpt.cols.len());
            arc_dst.reserve(cpt.rows.len() * cpt.cols.len());
            arc_cost_v.reserve(cpt.rows.len() * cpt.cols.len());
            for (ci, &oi) in cpt.rows.iter().enumerate() {
                for (cj, &oj) in cpt.cols.iter().enumerate() {
                    arc_src.push(ci as u32);
                    arc_dst.push(cj as u32);
                    arc_cost_v.push(arc_cost(cost, gx, gy, oi, oj));
                }
            }
        }
        Some(sup) => {
            if sup.is_empty() {
                return Err(Error::InfeasibleSupport);
            }
            for &(oi, oj) in sup.pairs() {
                let ci = cpt.row_of[oi as usize];
                let cj = cpt.col_of[oj as usize];
                if ci == UNMAPPED || cj == UNMAPPED {
                    continue;
                }
                arc_src.push(ci);
                arc_dst.push(cj);
                arc_cost_v.push(arc_cost(cost, gx, gy, oi, oj));
            }
            if arc_src.is_empty() {
                return Err(Error::InfeasibleSupport);
            }
        }
    }

    let supplies: Vec<f64> = cpt.rows.iter().map(|&i| mu.weights[i as usize]).collect();
    let demands: Vec<f64> = cpt.cols.iter().map(|&j| nu.weights[j as usize]).collect();
    let sol = netsimplex::solve_transport(
        netsimplex::TransportInstance {
            supplies,
            demands,
            arc_src: arc_src.clone(),
            arc_dst: arc_dst.clone(),
            arc_cost: arc_cost_v,
        },
        opts,
    );

    let mut entries = Vec::new();
    for (a, &f) in sol.flow.iter().enumerate() {
        if f > 0.0 {
            entries.push(PlanEntry {
                source: cpt.rows[arc_src[a] as usize],
                target: cpt.cols[arc_dst[a] as usize],
                mass: f,
            });
        }
    }
    let mut u = vec![0.0; mu.len()];
    for (c, &orig) in cpt.rows.iter().enumerate() {
        u[orig as usize] = sol.u[c];
    }
    let mut v = vec![0.0; nu.len()];
    for (c, &orig) in cpt.cols.iter().enumerate() {
        v[orig as usize] = sol.v[c];
    }
    let transported = stable_sum(entries.iter().map(|e| e.mass));
    let plan = Plan {
        entries,
        objective: sol.objective,
        duals: Some(PlanDuals { u, v }),
        n: mu.len(),
        m: nu.len(),
        partial: false,
        transported_mass: transported,
        pivots: sol.pivots,
    };

    if sol.artificial_mass > 1e-10 {
        return Err(Error::InfeasibleSupport);
    }
    if sol.hit_pivot_limit {
        let limit = if opts.max_pivots == 0 {
            10_000 + 400 * (mu.len() + nu.len())
        } else {
            opts.max_pivots
        };
        return Err(Error::PivotLimit {
            limit,
            best: Some(Box::new(plan)),
        });
    }
    Ok(plan)
}

/// Optimal plan of the full transportation LP between balanced measures.
pub fn solve_full(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: &CostSpec,
    opts: &SolveOptions,
) -> Result<Plan> {
    solve_balanced(mu, nu, cost, None, opts)
}

/// Optimal plan of the LP restricted to the admitted support pairs.
/// Returns `InfeasibleSupport` when no flow can route all mass through
/// the support, so callers can enlarge it and retry.
pub fn solve_sparse(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: &CostSpec,
    support: &SupportSet,
    opts: &SolveOptions,
) -> Result<Plan> {
    solve_balanced(mu, nu, cost, Some(support), opts)
}

/// Partial transport: move exactly `spec.transported_mass`, with row sums
/// at most `mu` and column sums at most `nu`. Reduced to a balanced problem
/// with one dummy source and one dummy target.
pub fn solve_partial(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: &CostSpec,
    spec: PartialSpec,
    support: Option<&SupportSet>,
    opts: &SolveOptions,
) -> Result<Plan> {
    let tot_mu = mu.total_mass();
    let tot_nu = nu.total_mass();
    let max_mass = tot_mu.min(tot_nu);
    let m_req = spec.transported_mass;
    if !(m_req > 0.0) || m_req > max_mass + 1e-12 {
        return Err(Error::MassOutOfRange {
            mass: m_req,
            max: max_mass,
        });
    }
    let m_eff = m_req.min(max_mass);

    let cpt = compact(mu, nu);
    let gx = &mu.grid;
    let gy = &nu.grid;
    let nr = cpt.rows.len();
    let nc = cpt.cols.len();

    let slack_supply = (tot_nu - m_eff).max(0.0);
    let slack_demand = (tot_mu - m_eff).max(0.0);
    let dummy_src = if slack_supply > 1e-15 { Some(nr as u32) } else { None };
    let dummy_tgt = if slack_demand > 1e-15 { Some(nc as u32) } else { None };

    let mut arc_src = Vec::new();
    let mut arc_dst = Vec::new();
    let mut costs = Vec::new();
    let mut max_real_cost = 0.0f64;

    // real rows: admitted real arcs in order, then the dummy-target arc
    for (ci, &oi) in cpt.rows.iter().enumerate() {
        match support {
            None => {
                for (cj, &oj) in cpt.cols.iter().enumerate() {
                    let c = arc_cost(cost, gx, gy, oi, oj);
                    max_real_cost = max_real_cost.max(c.abs());
                    arc_src.push(ci as u32);
                    arc_dst.push(cj as u32);
                    costs.push(c);
                }
            }
            Some(sup) => {
                // support pairs are sorted, so each row's pairs are contiguous
                let lo = sup.pairs().partition_point(|p| p.0 < oi);
                let hi = sup.pairs().partition_point(|p| p.0 <= oi);
                for &(_, oj) in &sup.pairs()[lo..hi] {
                    let cj = cpt.col_of[oj as usize];
                    if cj == UNMAPPED {
                        continue;
                    }
                    let c = arc_cost(cost, gx, gy, oi, oj);
                    max_real_cost = max_real_cost.max(c.abs());
                    arc_src.push(ci as u32);
                    arc_dst.push(cj);
                    costs.push(c);
                }
            }
        }
        if let Some(dt) = dummy_tgt {
            arc_src.push(ci as u32);
            arc_dst.push(dt);
            costs.push(0.0);
        }
    }
    if let Some(ds) = dummy_src {
        for cj in 0..nc {
            arc_src.push(ds);
            arc_dst.push(cj as u32);
            costs.push(0.0);
        }
        if let Some(dt) = dummy_tgt {
            // prohibitive: dummy-to-dummy flow would shrink the transported mass
            let n_all = nr + nc + 2;
            arc_src.push(ds);
            arc_dst.push(dt);
            costs.push(2.0 * n_all as f64 * max_real_cost.max(1.0) + 1.0);
        }
    }

    let mut supplies: Vec<f64> = cpt.rows.iter().map(|&i| mu.weights[i as usize]).collect();
    if dummy_src.is_some() {
        supplies.push(slack_supply);
    }
    let mut demands: Vec<f64> = cpt.cols.iter().map(|&j| nu.weights[j as usize]).collect();
    if dummy_tgt.is_some() {
        demands.push(slack_demand);
    }

    let sol = netsimplex::solve_transport(
        netsimplex::TransportInstance {
            supplies,
            demands,
            arc_src: arc_src.clone(),
            arc_dst: arc_dst.clone(),
            arc_cost: costs.clone(),
        },
        opts,
    );
    if sol.artificial_mass > 1e-10 {
        return Err(Error::InfeasibleSupport);
    }

    let mut entries = Vec::new();
    let mut objective_terms = Vec::new();
    for (a, &f) in sol.flow.iter().enumerate() {
        let si = arc_src[a] as usize;
        let tj = arc_dst[a] as usize;
        if si < nr && tj < nc && f > 0.0 {
            entries.push(PlanEntry {
                source: cpt.rows[si],
                target: cpt.cols[tj],
                mass: f,
            });
            objective_terms.push(costs[a] * f);
        }
    }
    let objective = stable_sum(objective_terms.into_iter());
    let transported = stable_sum(entries.iter().map(|e| e.mass));

    let mut u = vec![0.0; mu.len()];
    for (c, &orig) in cpt.rows.iter().enumerate() {
        u[orig as usize] = sol.u[c];
    }
    let mut v = vec![0.0; nu.len()];
    for (c, &orig) in cpt.cols.iter().enumerate() {
        v[orig as usize] = sol.v[c];
    }

    let plan = Plan {
        entries,
        objective,
        duals: Some(PlanDuals { u, v }),
        n: mu.len(),
        m: nu.len(),
        partial: true,
        transported_mass: transported,
        pivots: sol.pivots,
    };
    if sol.hit_pivot_limit {
        let limit = if opts.max_pivots == 0 {
            10_000 + 400 * (nr + nc + 2)
        } else {
            opts.max_pivots
        };
        return Err(Error::PivotLimit {
            limit,
            best: Some(Box::new(plan)),
        });
    }
    Ok(plan)
}

/// Residuals and certificate quality of a solved plan.
#[derive(Clone, Debug)]
pub struct OptimalityReport {
    pub max_row_residual: f64,
    pub max_col_residual: f64,
    pub mass_residual: f64,
    /// `max(0, -min reduced cost)` over the checked pairs.
    pub dual_infeasibility: f64,
    /// `max |reduced cost|` over plan entries.
    pub max_cs_violation: f64,
    pub support_size: usize,
    /// Primal minus dual objective (balanced plans only).
    pub duality_gap: Option<f64>,
}

/// Check feasibility residuals, dual feasibility, and complementary
/// slackness of a plan against its measures. With a support set the dual
/// check runs over exactly those pairs, otherwise over all active pairs.
pub fn verify_optimality(
    plan: &Plan,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: &CostSpec,
    support: Option<&SupportSet>,
) -> Result<OptimalityReport> {
    let duals = plan.duals.as_ref().ok_or(Error::MissingDuals)?;
    let gx = &mu.grid;
    let gy = &nu.grid;

    let rows = plan.row_sums();
    let cols = plan.col_sums();
    let mut max_row = 0.0f64;
    for i in 0..plan.n {
        let diff = rows[i] - mu.weights[i];
        let r = if plan.partial { diff.max(0.0) } else { diff.abs() };
        max_row = max_row.max(r);
    }
    let mut max_col = 0.0f64;
    for j in 0..plan.m {
        let diff = cols[j] - nu.weights[j];
        let r = if plan.partial { diff.max(0.0) } else { diff.abs() };
        max_col = max_col.max(r);
    }
    let mass_residual = if plan.partial {
        (stable_sum(plan.entries.iter().map(|e| e.mass)) - plan.transported_mass).abs()
    } else {
        (plan.transported_mass - mu.total_mass()).abs()
    };

    let rc = |i: u32, j: u32| {
        arc_cost(cost, gx, gy, i, j) - duals.u[i as usize] - duals.v[j as usize]
    };
    let mut min_rc = f64::INFINITY;
    match support {
        Some(sup) => {
            for &(i, j) in sup.pairs() {
                if mu.weights[i as usize] > 0.0 && nu.weights[j as usize] > 0.0 {
                    min_rc = min_rc.min(rc(i, j));
                }
            }
        }
        None => {
            for i in mu.positive_cells() {
                for j in nu.positive_cells() {
                    min_rc = min_rc.min(rc(i, j));
                }
            }
        }
    }
    let dual_infeasibility = (-min_rc).max(0.0);
    let max_cs_violation = plan
        .entries
        .iter()
        .map(|e| rc(e.source, e.target).abs())
        .fold(0.0f64, f64::max);

    let duality_gap = if plan.partial {
        None
    } else {
        let dual_obj = stable_sum(
            (0..plan.n)
                .map(|i| duals.u[i] * mu.weights[i])
                .chain((0..plan.m).map(|j| duals.v[j] * nu.weights[j])),
        );
        Some(plan.objective - dual_obj)
    };

    Ok(OptimalityReport {
        max_row_residual: max_row,
        max_col_residual: max_col,
        mass_residual,
        dual_infeasibility,
        max_cs_violation,
        support_size: plan.entries.len(),
        duality_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{full_mask, BBox, Grid};
    use std::sync::Arc;

    fn line_grid(n: usize) -> Arc<Grid> {
        Grid::build(
            full_mask(),
            &BBox::new(vec![0.0], vec![n as f64]),
            1.0,
            "line",
        )
        .unwrap()
    }

    fn measure_on(grid: Arc<Grid>, weights: Vec<f64>) -> DiscreteMeasure {
        DiscreteMeasure::from_weights(grid, weights).unwrap()
    }

    #[test]
    fn single_dirac_pair() {
        let g = line_grid(1);
        let mu = measure_on(g.clone(), vec![1.0]);
        let nu = measure_on(g, vec![1.0]);
        let cost = CostSpec::power(2.0).unwrap();
        let plan = solve_full(&mu, &nu, &cost, &SolveOptions::default()).unwrap();
        assert_eq!(plan.entries.len(), 1);
        assert_eq!(plan.entries[0].mass, 1.0);
        assert_eq!(plan.objective, 0.0);
    }

    #[test]
    fn two_point_identity_has_zero_cost() {
        let g = line_grid(2);
        let mu = measure_on(g.clone(), vec![0.5, 0.5]);
        let nu = measure_on(g, vec![0.5, 0.5]);
        let cost = CostSpec::power(2.0).unwrap();
        let plan = solve_full(&mu, &nu, &cost, &SolveOptions::default()).unwrap();
        assert_eq!(plan.objective, 0.0);
        let entries: Vec<(u32, u32)> =
            plan.entries.iter().map(|e| (e.source, e.target)).collect();
        assert_eq!(entries, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn unbalanced_masses_rejected() {
        let g = line_grid(2);
        let mut mu = measure_on(g.clone(), vec![0.5, 0.5]);
        let nu = measure_on(g, vec![0.5, 0.5]);
        mu.weights[0] = 0.6; // break normalization
        let cost = CostSpec::power(2.0).unwrap();
        assert!(matches!(
            solve_full(&mu, &nu, &cost, &SolveOptions::default()),
            Err(Error::Unbalanced(..))
        ));
    }

    #[test]
    fn sparse_full_support_matches_full_solve() {
        let g = line_grid(4);
        let mu = measure_on(g.clone(), vec![0.1, 0.2, 0.3, 0.4]);
        let nu = measure_on(g, vec![0.4, 0.3, 0.2, 0.1]);
        let cost = CostSpec::power(2.0).unwrap();
        let opts = SolveOptions::default();
        let full = solve_full(&mu, &nu, &cost, &opts).unwrap();
        let mut pairs = Vec::new();
        for i in 0..4 {
            for j in 0..4 {
                pairs.push((i, j));
            }
        }
        let sparse = solve_sparse(&mu, &nu, &cost, &SupportSet::new(pairs, 0), &opts).unwrap();
        assert!((full.objective - sparse.objective).abs() < 1e-10);
    }

    #[test]
    fn diagonal_support_forces_identity() {
        let g = line_grid(2);
        let mu = measure_on(g.clone(), vec![0.5, 0.5]);
        let nu = measure_on(g, vec![0.5, 0.5]);
        let cost = CostSpec::power(1.0).unwrap();
        let sup = SupportSet::new(vec![(0, 0), (1, 1)], 0);
        let plan = solve_sparse(&mu, &nu, &cost, &sup, &SolveOptions::default()).unwrap();
        assert_eq!(plan.entries.len(), 2);
        assert!((plan.entries[0].mass - 0.5).abs() < 1e-15);
        assert!((plan.entries[1].mass - 0.5).abs() < 1e-15);
    }

    #[test]
    fn missing_row_support_is_infeasible() {
        let g = line_grid(2);
        let mu = measure_on(g.clone(), vec![0.5, 0.5]);
        let nu = measure_on(g, vec![0.5, 0.5]);
        let cost = CostSpec::power(1.0).unwrap();
        // no pair touches row 1
        let sup = SupportSet::new(vec![(0, 0), (0, 1)], 0);
        assert!(matches!(
            solve_sparse(&mu, &nu, &cost, &sup, &SolveOptions::default()),
            Err(Error::InfeasibleSupport)
        ));
    }

    #[test]
    fn partial_with_full_mass_matches_balanced() {
        let g = line_grid(3);
        let mu = measure_on(g.clone(), vec![0.2, 0.5, 0.3]);
        let nu = measure_on(g.clone(), vec![0.3, 0.3, 0.4]);
        let cost = CostSpec::power(2.0).unwrap();
        let opts = SolveOptions::default();
        let full = solve_full(&mu, &nu, &cost, &opts).unwrap();
        let part = solve_partial(
            &mu,
            &nu,
            &cost,
            PartialSpec {
                transported_mass: 1.0,
            },
            None,
            &opts,
        )
        .unwrap();
        assert!((full.objective - part.objective).abs() < 1e-8);
        assert!((part.transported_mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn partial_free_mass_moves_at_zero_cost() {
        let g = line_grid(2);
        let mu = measure_on(g.clone(), vec![0.6, 0.4]);
        let nu = measure_on(g, vec![0.5, 0.5]);
        let cost = CostSpec::power(2.0).unwrap();
        let plan = solve_partial(
            &mu,
            &nu,
            &cost,
            PartialSpec {
                transported_mass: 0.5,
            },
            None,
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(plan.objective.abs() < 1e-12);
        assert!((plan.transported_mass - 0.5).abs() < 1e-12);
        assert!(plan.partial);
    }

    #[test]
    fn partial_mass_out_of_range_rejected() {
        let g = line_grid(2);
        let mu = measure_on(g.clone(), vec![0.5, 0.5]);
        let nu = measure_on(g, vec![0.5, 0.5]);
        let cost = CostSpec::power(2.0).unwrap();
        for bad in [0.0, -0.1, 1.5] {
            assert!(matches!(
                solve_partial(
                    &mu,
                    &nu,
                    &cost,
                    PartialSpec {
                        transported_mass: bad
                    },
                    None,
                    &SolveOptions::default()
                ),
                Err(Error::MassOutOfRange { .. })
            ));
        }
    }

    #[test]
    fn verify_reports_clean_certificate() {
        let g = line_grid(3);
        let mu = measure_on(g.clone(), vec![0.2, 0.3, 0.5]);
        let nu = measure_on(g, vec![0.4, 0.4, 0.2]);
        let cost = CostSpec::power(2.0).unwrap();
        let plan = solve_full(&mu, &nu, &cost, &SolveOptions::default()).unwrap();
        let rep = verify_optimality(&plan, &mu, &nu, &cost, None).unwrap();
        assert!(rep.max_row_residual <= 1e-8);
        assert!(rep.max_col_residual <= 1e-8);
        assert!(rep.dual_infeasibility <= 1e-8);
        assert!(rep.max_cs_violation <= 1e-8);
        assert!(rep.duality_gap.unwrap().abs() <= 1e-9);
    }

    #[test]
    fn verify_detects_perturbed_mass() {
        let g = line_grid(3);
        let mu = measure_on(g.clone(), vec![0.2, 0.3, 0.5]);
        let nu = measure_on(g, vec![0.4, 0.4, 0.2]);
        let cost = CostSpec::power(2.0).unwrap();
        let mut plan = solve_full(&mu, &nu, &cost, &SolveOptions::default()).unwrap();
        plan.entries[0].mass += 1e-3;
        let rep = verify_optimality(&plan, &mu, &nu, &cost, None).unwrap();
        assert!((rep.max_row_residual - 1e-3).abs() < 1e-9);
    }

    #[test]
    fn verify_without_duals_errors() {
        let g = line_grid(2);
        let mu = measure_on(g.clone(), vec![0.5, 0.5]);
        let nu = measure_on(g, vec![0.5, 0.5]);
        let cost = CostSpec::power(2.0).unwrap();
        let mut plan = solve_full(&mu, &nu, &cost, &SolveOptions::default()).unwrap();
        plan.duals = None;
        assert!(matches!(
            verify_optimality(&plan, &mu, &nu, &cost, None),
            Err(Error::MissingDuals)
        ));
    }

    #[test]
    fn basic_solution_support_bound() {
        let g = line_grid(5);
        let mu = measure_on(g.clone(), vec![0.1, 0.15, 0.2, 0.25, 0.3]);
        let nu = measure_on(g, vec![0.3, 0.25, 0.2, 0.15, 0.1]);
        let cost = CostSpec::power(1.5).unwrap();
        let plan = solve_full(&mu, &nu, &cost, &SolveOptions::default()).unwrap();
        assert!(plan.entries.len() <= 5 + 5 - 1);
    }

    #[test]
    fn deterministic_resolve() {
        let g = line_grid(6);
        let w1 = vec![0.1, 0.1, 0.2, 0.2, 0.15, 0.25];
        let w2 = vec![0.25, 0.15, 0.2, 0.2, 0.1, 0.1];
        let mu = measure_on(g.clone(), w1);
        let nu = measure_on(g, w2);
        let cost = CostSpec::power(3.0).unwrap();
        let a = solve_full(&mu, &nu, &cost, &SolveOptions::default()).unwrap();
        let b = solve_full(&mu, &nu, &cost, &SolveOptions::default()).unwrap();
        assert_eq!(a.entries, b.entries);
        assert_eq!(a.objective, b.objective);
    }
}
