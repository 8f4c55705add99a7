//! Joint linear program for Wasserstein barycenters.
//!
//! Variables are one coupling per input measure plus the barycenter weights
//! themselves: for every measure `k` the barycenter-side marginal of the
//! coupling equals the unknown weights and the other marginal equals the
//! input, while the objective sums the weighted transport costs. Couplings
//! may be restricted to admitted support pairs, and barycenter candidates to
//! the cells those supports agree on.

use std::sync::Arc;

use super::simplex::{solve_lp, LpCol, SparseLp};
use super::{Plan, PlanDuals, PlanEntry, SupportSet};
use crate::grid::Grid;
use crate::measure::{CostSpec, DiscreteMeasure};
use crate::util::stable_sum;
use crate::{Error, Result};

pub struct BarycenterSolution {
    pub rho: DiscreteMeasure,
    pub couplings: Vec<Plan>,
    pub joint_objective: f64,
    pub pivots: usize,
    /// Barycenter cells that were admitted as candidates.
    pub active_cells: Vec<u32>,
}

/// Solve the joint barycenter LP. `weights` are nonnegative with positive
/// sum (normalized internally); `couplings_support` restricts each coupling
/// to admitted (barycenter cell, measure cell) pairs, and when present the
/// candidate barycenter cells are the cells admitted by every support.
pub fn solve_barycenter(
    measures: &[DiscreteMeasure],
    weights: &[f64],
    cost: &CostSpec,
    support_grid: Arc<Grid>,
    couplings_support: Option<&[SupportSet]>,
) -> Result<BarycenterSolution> {
    if measures.len() < 2 {
        return Err(Error::InvalidArg(
            "barycenter needs at least two measures".to_string(),
        ));
    }
    if weights.len() != measures.len() {
        return Err(Error::InvalidArg(format!(
            "{} weights for {} measures",
            weights.len(),
            measures.len()
        )));
    }
    if weights.iter().any(|w| *w < 0.0) {
        return Err(Error::InvalidArg("negative barycenter weight".to_string()));
    }
    let wsum = stable_sum(weights.iter().copied());
    if wsum <= 0.0 {
        return Err(Error::InvalidArg("all barycenter weights are zero".to_string()));
    }
    let lambdas: Vec<f64> = weights.iter().map(|w| w / wsum).collect();
    if let Some(sups) = couplings_support {
        if sups.len() != measures.len() {
            return Err(Error::InvalidArg(
                "one coupling support per measure required".to_string(),
            ));
        }
    }

    let kk = measures.len();
    let nx = support_grid.len();

    // candidate barycenter cells
    let active: Vec<u32> = match couplings_support {
        None => (0..nx as u32).collect(),
        Some(sups) => {
            let mut counts = vec![0u32; nx];
            for sup in sups {
                let mut seen = vec![false; nx];
                for &(x, _) in sup.pairs() {
                    if !seen[x as usize] {
                        seen[x as usize] = true;
                        counts[x as usize] += 1;
                    }
                }
            }
            (0..nx as u32)
                .filter(|x| counts[*x as usize] == kk as u32)
                .collect()
        }
    };
    if active.is_empty() {
        return Err(Error::InfeasibleSupport);
    }
    let mut active_rank = vec![u32::MAX; nx];
    for (r, &x) in active.iter().enumerate() {
        active_rank[x as usize] = r as u32;
    }
    let na = active.len();

    // per-measure positive cells
    let pos: Vec<Vec<u32>> = measures.iter().map(|m| m.positive_cells()).collect();
    let mut pos_rank: Vec<Vec<u32>> = Vec::with_capacity(kk);
    for (k, m) in measures.iter().enumerate() {
        let mut rank = vec![u32::MAX; m.len()];
        for (r, &j) in pos[k].iter().enumerate() {
            rank[j as usize] = r as u32;
        }
        pos_rank.push(rank);
    }

    // row layout: K blocks of barycenter-marginal rows, then the input
    // marginal rows per measure, then the total-mass row
    let mut marg_base = vec![0usize; kk];
    for k in 0..kk {
        marg_base[k] = k * na;
    }
    let mut input_base = vec![0usize; kk];
    let mut acc = kk * na;
    for k in 0..kk {
        input_base[k] = acc;
        acc += pos[k].len();
    }
    let total_row = acc;
    let rows = acc + 1;

    let mut cols: Vec<LpCol> = Vec::new();
    let mut col_meta: Vec<(usize, u32, u32)> = Vec::new(); // (measure, x, j) per coupling column
    for k in 0..kk {
        let grid_k = &measures[k].grid;
        let push_pair = |x: u32, j: u32, cols: &mut Vec<LpCol>, meta: &mut Vec<(usize, u32, u32)>| {
            let ar = active_rank[x as usize];
            let jr = pos_rank[k][j as usize];
            if ar == u32::MAX || jr == u32::MAX {
                return;
            }
            let c = cost.eval(support_grid.center(x as usize), grid_k.center(j as usize));
            cols.push(LpCol {
                entries: vec![
                    ((marg_base[k] + ar as usize) as u32, 1.0),
                    ((input_base[k] + jr as usize) as u32, 1.0),
                ],
                cost: lambdas[k] * c,
            });
            meta.push((k, x, j));
        };
        match couplings_support {
            None => {
                for &x in &active {
                    for &j in &pos[k] {
                        push_pair(x, j, &mut cols, &mut col_meta);
                    }
                }
            }
            Some(sups) => {
                for &(x, j) in sups[k].pairs() {
                    push_pair(x, j, &mut cols, &mut col_meta);
                }
            }
        }
    }
    let coupling_cols = cols.len();
    for (r, &x) in active.iter().enumerate() {
        let mut entries: Vec<(u32, f64)> = (0..kk)
            .map(|k| ((marg_base[k] + r) as u32, -1.0))
            .collect();
        entries.push((total_row as u32, 1.0));
        let _ = x;
        cols.push(LpCol { entries, cost: 0.0 });
    }

    let mut rhs = vec![0.0; rows];
    for k in 0..kk {
        for (r, &j) in pos[k].iter().enumerate() {
            rhs[input_base[k] + r] = measures[k].weights[j as usize];
        }
    }
    rhs[total_row] = 1.0;

    let lp = SparseLp { rows, cols, rhs };
    let sol = solve_lp(&lp)?;

    // barycenter weights over the full support grid
    let mut rho_w = vec![0.0; nx];
    for (r, &x) in active.iter().enumerate() {
        rho_w[x as usize] = sol.x[coupling_cols + r].max(0.0);
    }
    let rho = DiscreteMeasure::from_weights(support_grid.clone(), rho_w)?;

    // one plan per measure
    let mut entry_lists: Vec<Vec<PlanEntry>> = vec![Vec::new(); kk];
    for (c, &(k, x, j)) in col_meta.iter().enumerate() {
        let f = sol.x[c];
        if f > 0.0 {
            entry_lists[k].push(PlanEntry {
                source: x,
                target: j,
                mass: f,
            });
        }
    }
    let mut couplings = Vec::with_capacity(kk);
    for (k, mut entries) in entry_lists.into_iter().enumerate() {
        entries.sort_unstable_by_key(|e| (e.source, e.target));
        let grid_k = &measures[k].grid;
        let objective = stable_sum(entries.iter().map(|e| {
            cost.eval(
                support_grid.center(e.source as usize),
                grid_k.center(e.target as usize),
            ) * e.mass
        }));
        let duals = if lambdas[k] > 0.0 {
            let mut u = vec![0.0; nx];
            for (r, &x) in active.iter().enumerate() {
                u[x as usize] = sol.duals[marg_base[k] + r] / lambdas[k];
            }
            let mut v = vec![0.0; measures[k].len()];
            for (r, &j) in pos[k].iter().enumerate() {
                v[j as usize] = sol.duals[input_base[k] + r] / lambdas[k];
            }
            Some(PlanDuals { u, v })
        } else {
            None
        };
        let transported = stable_sum(entries.iter().map(|e| e.mass));
        couplings.push(Plan {
            entries,
            objective,
            duals,
            n: nx,
            m: measures[k].len(),
            partial: false,
            transported_mass: transported,
            pivots: 0,
        });
    }

    Ok(BarycenterSolution {
        rho,
        couplings,
        joint_objective: sol.objective,
        pivots: sol.pivots,
        active_cells: active,
    })
}
