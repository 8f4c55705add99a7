//! Coarse-to-fine solve driver.
//!
//! Level zero solves the full LP on coarse grids. Each following level
//! extracts the plan support, grows it by spatial neighborhoods, refines the
//! grids by a factor of two, maps the grown support onto child cells, and
//! re-solves the restricted LP on freshly discretized measures. If a solved
//! support reaches the boundary of the admitted set, or the restriction is
//! infeasible, the level re-solves with a larger growth radius.

use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::grid::{ChildMap, Grid};
use crate::lp::{
    self, PartialSpec, Plan, SolveOptions, SupportSet,
};
use crate::measure::{CostSpec, DensitySpec, DiscreteMeasure};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct MultiscaleConfig {
    /// Cells per axis of the coarsest grid (along the longest extent).
    pub coarse_n: u32,
    /// Number of refinement levels below the coarse solve.
    pub levels: u32,
    /// Chebyshev radius of the support growth step.
    pub dilation_radius: u32,
    /// Extra growth passes at the same radius.
    pub dilation_repeats: u32,
    /// Re-solves with a larger radius before a level gives up.
    pub max_retries: u32,
    pub solve: SolveOptions,
}

impl Default for MultiscaleConfig {
    fn default() -> Self {
        MultiscaleConfig {
            coarse_n: 16,
            levels: 0,
            dilation_radius: 1,
            dilation_repeats: 0,
            max_retries: 3,
            solve: SolveOptions::default(),
        }
    }
}

/// Per-level record of a multiscale run.
#[derive(Clone, Debug)]
pub struct LevelTrace {
    pub level: u32,
    /// Source cells (for barycenters: candidate cells).
    pub n: usize,
    /// Target cells (for barycenters: summed over measures).
    pub m: usize,
    /// Admitted LP variables at this level.
    pub support_size: usize,
    pub objective: f64,
    pub iterations: usize,
    pub wall_time: Duration,
    pub boundary_touch: bool,
    pub retries: u32,
    pub dilation_radius_used: u32,
}

/// Index pairs carrying positive plan mass.
pub fn extract_support(plan: &Plan, level: u32) -> SupportSet {
    SupportSet::new(
        plan.entries.iter().map(|e| (e.source, e.target)).collect(),
        level,
    )
}

fn grow_pairs(
    support: &SupportSet,
    grid_x: &Grid,
    grid_y: &Grid,
    radius: u32,
    mu: Option<&DiscreteMeasure>,
    nu: Option<&DiscreteMeasure>,
) -> SupportSet {
    let nbr_x = grid_x.neighbor_table(radius);
    let nbr_y = grid_y.neighbor_table(radius);
    let keep = |m: Option<&DiscreteMeasure>, c: u32| m.map_or(true, |m| m.weights[c as usize] > 0.0);
    let mut pairs = Vec::with_capacity(support.len() * 4);
    for &(i, j) in support.pairs() {
        for &i2 in &nbr_x[i as usize] {
            if !keep(mu, i2) {
                continue;
            }
            for &j2 in &nbr_y[j as usize] {
                if keep(nu, j2) {
                    pairs.push((i2, j2));
                }
            }
        }
    }
    SupportSet::new(pairs, support.level)
}

/// Grow the support by the product of spatial neighborhoods, keeping only
/// pairs between positive-mass cells.
pub fn dilate(
    support: &SupportSet,
    grid_x: &Grid,
    grid_y: &Grid,
    radius: u32,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> SupportSet {
    grow_pairs(support, grid_x, grid_y, radius, Some(mu), Some(nu))
}

/// Coupling-support growth for barycenters: the barycenter side is free to
/// move into any candidate cell, the input side stays on positive mass.
fn dilate_barycentric(
    support: &SupportSet,
    support_grid: &Grid,
    grid_y: &Grid,
    radius: u32,
    nu: &DiscreteMeasure,
) -> SupportSet {
    grow_pairs(support, support_grid, grid_y, radius, None, Some(nu))
}

/// Map coarse support pairs onto all pairs of their child cells.
pub fn lift_support(support: &SupportSet, child_x: &ChildMap, child_y: &ChildMap) -> SupportSet {
    let mut pairs = Vec::with_capacity(support.len() * 16);
    for &(i, j) in support.pairs() {
        for &ci in child_x.children(i as usize) {
            for &cj in child_y.children(j as usize) {
                pairs.push((ci, cj));
            }
        }
    }
    SupportSet::new(pairs, child_x.parent_level() + 1)
}

/// Pairs of `candidates` outside `admitted` whose reduced cost under the
/// plan's duals is negative, i.e. pairs that would improve the plan if they
/// were admitted. An empty result certifies the plan as optimal over
/// `admitted` extended by the candidates.
fn improving_pairs(
    plan: &Plan,
    admitted: &SupportSet,
    candidates: &SupportSet,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: &CostSpec,
) -> SupportSet {
    let duals = plan.duals.as_ref().expect("solver always attaches duals");
    let gx = &mu.grid;
    let gy = &nu.grid;
    let mut bad = Vec::new();
    for &(i, j) in candidates.pairs() {
        if admitted.contains((i, j)) {
            continue;
        }
        let rc = cost.eval(gx.center(i as usize), gy.center(j as usize))
            - duals.u[i as usize]
            - duals.v[j as usize];
        if rc < -1e-9 {
            bad.push((i, j));
        }
    }
    SupportSet::new(bad, admitted.level)
}

/// Plan-support pairs with an eligible neighbor pair outside the admitted
/// set (the support entries on the boundary of the admitted set). A `None`
/// measure leaves that side unrestricted.
fn touching_pairs(
    plan: &Plan,
    admitted: &SupportSet,
    grid_x: &Grid,
    grid_y: &Grid,
    mu: Option<&DiscreteMeasure>,
    nu: Option<&DiscreteMeasure>,
) -> SupportSet {
    let nbr_x = grid_x.neighbor_table(1);
    let nbr_y = grid_y.neighbor_table(1);
    let keep = |m: Option<&DiscreteMeasure>, c: u32| m.map_or(true, |m| m.weights[c as usize] > 0.0);
    let mut touching = Vec::new();
    'entries: for e in &plan.entries {
        for &i2 in &nbr_x[e.source as usize] {
            if !keep(mu, i2) {
                continue;
            }
            for &j2 in &nbr_y[e.target as usize] {
                if keep(nu, j2) && !admitted.contains((i2, j2)) {
                    touching.push((e.source, e.target));
                    continue 'entries;
                }
            }
        }
    }
    SupportSet::new(touching, admitted.level)
}

/// Everything a transport run produces at the finest level.
pub struct TransportArtifacts {
    pub plan: Plan,
    pub source_grid: Arc<Grid>,
    pub target_grid: Arc<Grid>,
    pub mu: DiscreteMeasure,
    pub nu: DiscreteMeasure,
    pub traces: Vec<LevelTrace>,
}

fn coarse_spacing(source: &DensitySpec, config: &MultiscaleConfig) -> f64 {
    source.bbox.max_extent() / config.coarse_n as f64
}

/// Coarse-to-fine solve of the balanced problem, or of partial transport
/// when `mass` prescribes the transported fraction.
pub fn multiscale_transport(
    source: &DensitySpec,
    target: &DensitySpec,
    cost: &CostSpec,
    mass: Option<f64>,
    config: &MultiscaleConfig,
) -> Result<TransportArtifacts> {
    let h0 = coarse_spacing(source, config);
    let mut gx = source.build_grid(h0)?;
    let mut gy = target.build_grid(h0)?;
    let mut mu = source.discretize(gx.clone())?;
    let mut nu = target.discretize(gy.clone())?;

    let solve_level = |mu: &DiscreteMeasure,
                       nu: &DiscreteMeasure,
                       support: Option<&SupportSet>|
     -> Result<Plan> {
        match mass {
            None => match support {
                None => lp::solve_full(mu, nu, cost, &config.solve),
                Some(sup) => lp::solve_sparse(mu, nu, cost, sup, &config.solve),
            },
            Some(m) => lp::solve_partial(
                mu,
                nu,
                cost,
                PartialSpec {
                    transported_mass: m,
                },
                support,
                &config.solve,
            ),
        }
    };

    let mut traces = Vec::new();
    let t0 = Instant::now();
    let mut plan = solve_level(&mu, &nu, None)?;
    traces.push(LevelTrace {
        level: 0,
        n: gx.len(),
        m: gy.len(),
        support_size: mu.positive_cells().len() * nu.positive_cells().len(),
        objective: plan.objective,
        iterations: plan.pivots,
        wall_time: t0.elapsed(),
        boundary_touch: false,
        retries: 0,
        dilation_radius_used: 0,
    });

    for level in 1..=config.levels {
        let coarse_support = extract_support(&plan, level - 1);
        let (gx2, cx) = gx.refine()?;
        let (gy2, cy) = gy.refine()?;
        let mu2 = source.discretize(gx2.clone())?;
        let nu2 = target.discretize(gy2.clone())?;

        let t = Instant::now();
        let radius = config.dilation_radius;
        let mut retries = 0u32;
        let mut admitted = {
            let mut l = lift_support(&coarse_support, &cx, &cy);
            l.retain_positive(&mu2, &nu2);
            for _ in 0..(1 + config.dilation_repeats) {
                l = dilate(&l, &gx2, &gy2, radius, &mu2, &nu2);
            }
            l
        };
        if admitted.is_empty() {
            return Err(Error::Multiscale {
                level,
                retries,
                reason: "lifted support is empty".to_string(),
                traces,
            });
        }
        let outcome = loop {
            match solve_level(&mu2, &nu2, Some(&admitted)) {
                Ok(p) => {
                    // grow a one-cell margin around the solved support and
                    // certify via reduced costs that none of the added pairs
                    // would improve the plan
                    let sup = extract_support(&p, level);
                    let margin = dilate(&sup, &gx2, &gy2, 1, &mu2, &nu2);
                    let violations =
                        improving_pairs(&p, &admitted, &margin, &mu2, &nu2, cost);
                    if violations.is_empty() {
                        break (p, admitted, retries > 0);
                    }
                    if retries >= config.max_retries {
                        return Err(Error::Multiscale {
                            level,
                            retries,
                            reason: "support kept escaping the admitted set".to_string(),
                            traces,
                        });
                    }
                    retries += 1;
                    let patch = dilate(&violations, &gx2, &gy2, radius + retries, &mu2, &nu2);
                    admitted = admitted.union(&margin).union(&patch);
                }
                Err(Error::InfeasibleSupport) if retries < config.max_retries => {
                    retries += 1;
                    admitted = dilate(&admitted, &gx2, &gy2, radius, &mu2, &nu2);
                }
                Err(Error::InfeasibleSupport) => {
                    return Err(Error::Multiscale {
                        level,
                        retries,
                        reason: "restricted problem stayed infeasible".to_string(),
                        traces,
                    });
                }
                Err(e) => return Err(e),
            }
        };
        let (p, admitted, touch) = outcome;
        traces.push(LevelTrace {
            level,
            n: gx2.len(),
            m: gy2.len(),
            support_size: admitted.len(),
            objective: p.objective,
            iterations: p.pivots,
            wall_time: t.elapsed(),
            boundary_touch: touch,
            retries,
            dilation_radius_used: radius + retries,
        });
        plan = p;
        gx = gx2;
        gy = gy2;
        mu = mu2;
        nu = nu2;
    }

    Ok(TransportArtifacts {
        plan,
        source_grid: gx,
        target_grid: gy,
        mu,
        nu,
        traces,
    })
}

/// Everything a barycenter run produces at the finest level.
pub struct BarycenterArtifacts {
    pub rho: DiscreteMeasure,
    pub support_grid: Arc<Grid>,
    pub couplings: Vec<Plan>,
    pub input_grids: Vec<Arc<Grid>>,
    pub input_measures: Vec<DiscreteMeasure>,
    pub joint_objective: f64,
    pub traces: Vec<LevelTrace>,
}

/// Coarse-to-fine barycenter: the support grid spans the union of the input
/// boxes; couplings and barycenter candidates are grown, lifted, and
/// re-solved level by level.
pub fn multiscale_barycenter(
    inputs: &[DensitySpec],
    weights: &[f64],
    cost: &CostSpec,
    support_bbox: Option<crate::grid::BBox>,
    config: &MultiscaleConfig,
) -> Result<BarycenterArtifacts> {
    if inputs.len() < 2 {
        return Err(Error::InvalidArg(
            "barycenter needs at least two measures".to_string(),
        ));
    }
    let bbox = match support_bbox {
        Some(b) => b,
        None => {
            let mut b = inputs[0].bbox.clone();
            for d in &inputs[1..] {
                b = b.union(&d.bbox);
            }
            b
        }
    };
    let support_spec = DensitySpec::uniform("barycenter_support", bbox, crate::grid::full_mask());
    let h0 = support_spec.bbox.max_extent() / config.coarse_n as f64;

    let mut gs = support_spec.build_grid(h0)?;
    let mut grids: Vec<Arc<Grid>> = inputs
        .iter()
        .map(|d| d.build_grid(h0))
        .collect::<Result<_>>()?;
    let mut measures: Vec<DiscreteMeasure> = inputs
        .iter()
        .zip(&grids)
        .map(|(d, g)| d.discretize(g.clone()))
        .collect::<Result<_>>()?;

    let kk = inputs.len();
    let mut traces = Vec::new();
    let t0 = Instant::now();
    let mut sol = lp::solve_barycenter(&measures, weights, cost, gs.clone(), None)?;
    traces.push(LevelTrace {
        level: 0,
        n: gs.len(),
        m: measures.iter().map(|m| m.len()).sum(),
        support_size: measures
            .iter()
            .map(|m| m.positive_cells().len() * gs.len())
            .sum::<usize>()
            + gs.len(),
        objective: sol.joint_objective,
        iterations: sol.pivots,
        wall_time: t0.elapsed(),
        boundary_touch: false,
        retries: 0,
        dilation_radius_used: 0,
    });

    for level in 1..=config.levels {
        let coarse_rho = sol.rho.clone();
        let coarse_sups: Vec<SupportSet> = sol
            .couplings
            .iter()
            .map(|p| extract_support(p, level - 1))
            .collect();

        let (gs2, cs) = gs.refine()?;
        let mut fine_pairs: Vec<(Arc<Grid>, ChildMap)> = Vec::with_capacity(kk);
        for g in &grids {
            fine_pairs.push(g.refine()?);
        }
        let fine_grids: Vec<Arc<Grid>> = fine_pairs.iter().map(|(g, _)| g.clone()).collect();
        let child_maps: Vec<ChildMap> = fine_pairs.into_iter().map(|(_, c)| c).collect();
        let fine_measures: Vec<DiscreteMeasure> = inputs
            .iter()
            .zip(&fine_grids)
            .map(|(d, g)| d.discretize(g.clone()))
            .collect::<Result<_>>()?;

        let t = Instant::now();
        let radius = config.dilation_radius;
        let mut retries = 0u32;
        // lift each coupling onto child pairs, then grow at the fine level
        let mut admitted: Vec<SupportSet> = Vec::with_capacity(kk);
        for k in 0..kk {
            let _ = &coarse_rho;
            let mut adm = lift_support(&coarse_sups[k], &cs, &child_maps[k]);
            let pairs: Vec<(u32, u32)> = adm
                .pairs()
                .iter()
                .copied()
                .filter(|(_, j)| fine_measures[k].weights[*j as usize] > 0.0)
                .collect();
            adm = SupportSet::new(pairs, level);
            for _ in 0..(1 + config.dilation_repeats) {
                adm = dilate_barycentric(&adm, &gs2, &fine_grids[k], radius, &fine_measures[k]);
            }
            admitted.push(adm);
        }
        loop {
            match lp::solve_barycenter(&fine_measures, weights, cost, gs2.clone(), Some(&admitted))
            {
                Ok(s2) => {
                    let mut touched_any = false;
                    if retries < config.max_retries {
                        for k in 0..kk {
                            let touching = touching_pairs(
                                &s2.couplings[k],
                                &admitted[k],
                                &gs2,
                                &fine_grids[k],
                                None,
                                Some(&fine_measures[k]),
                            );
                            if !touching.is_empty() {
                                touched_any = true;
                                let patch = dilate_barycentric(
                                    &touching,
                                    &gs2,
                                    &fine_grids[k],
                                    radius + retries + 1,
                                    &fine_measures[k],
                                );
                                admitted[k] = admitted[k].union(&patch);
                            }
                        }
                    } else {
                        for k in 0..kk {
                            if !touching_pairs(
                                &s2.couplings[k],
                                &admitted[k],
                                &gs2,
                                &fine_grids[k],
                                None,
                                Some(&fine_measures[k]),
                            )
                            .is_empty()
                            {
                                return Err(Error::Multiscale {
                                    level,
                                    retries,
                                    reason: "coupling support touches the admitted boundary"
                                        .to_string(),
                                    traces,
                                });
                            }
                        }
                    }
                    if touched_any {
                        retries += 1;
                        continue;
                    }
                    traces.push(LevelTrace {
                        level,
                        n: s2.active_cells.len(),
                        m: fine_measures.iter().map(|m| m.len()).sum(),
                        support_size: admitted.iter().map(|s| s.len()).sum::<usize>()
                            + s2.active_cells.len(),
                        objective: s2.joint_objective,
                        iterations: s2.pivots,
                        wall_time: t.elapsed(),
                        boundary_touch: retries > 0,
                        retries,
                        dilation_radius_used: radius + retries,
                    });
                    sol = s2;
                    break;
                }
                Err(Error::InfeasibleSupport) | Err(Error::LpInfeasible(_))
                    if retries < config.max_retries =>
                {
                    retries += 1;
                    for k in 0..kk {
                        admitted[k] = dilate_barycentric(
                            &admitted[k],
                            &gs2,
                            &fine_grids[k],
                            radius,
                            &fine_measures[k],
                        );
                    }
                }
                Err(Error::InfeasibleSupport) | Err(Error::LpInfeasible(_)) => {
                    return Err(Error::Multiscale {
                        level,
                        retries,
                        reason: "restricted barycenter program stayed infeasible".to_string(),
                        traces,
                    });
                }
                Err(e) => return Err(e),
            }
        }
        gs = gs2;
        grids = fine_grids;
        measures = fine_measures;
    }

    Ok(BarycenterArtifacts {
        rho: sol.rho,
        support_grid: gs,
        couplings: sol.couplings,
        input_grids: grids,
        input_measures: measures,
        joint_objective: sol.joint_objective,
        traces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{full_mask, BBox};
    use crate::lp::PlanEntry;
    use crate::measure::preset;

    fn toy_plan(entries: Vec<(u32, u32, f64)>, n: usize, m: usize) -> Plan {
        let entries: Vec<PlanEntry> = entries
            .into_iter()
            .map(|(source, target, mass)| PlanEntry {
                source,
                target,
                mass,
            })
            .collect();
        Plan {
            entries,
            objective: 0.0,
            duals: None,
            n,
            m,
            partial: false,
            transported_mass: 1.0,
            pivots: 0,
        }
    }

    #[test]
    fn extract_support_examples() {
        let p = toy_plan(vec![(0, 0, 0.25), (1, 1, 0.25), (2, 2, 0.25), (3, 3, 0.25)], 4, 4);
        let s = extract_support(&p, 0);
        assert_eq!(s.pairs(), &[(0, 0), (1, 1), (2, 2), (3, 3)]);
        let single = toy_plan(vec![(2, 1, 1.0)], 4, 4);
        assert_eq!(extract_support(&single, 0).len(), 1);
    }

    #[test]
    fn dilate_empty_support_is_empty() {
        let spec = preset("uniform_square").unwrap();
        let g = spec.build_grid(0.25).unwrap();
        let m = spec.discretize(g.clone()).unwrap();
        let s = SupportSet::new(vec![], 0);
        let d = dilate(&s, &g, &g, 1, &m, &m);
        assert!(d.is_empty());
    }

    #[test]
    fn dilate_interior_pair_gives_81() {
        let spec = preset("uniform_square").unwrap();
        let g = spec.build_grid(0.1).unwrap(); // 10x10
        let m = spec.discretize(g.clone()).unwrap();
        let mid = g.index_of(&[5, 5]).unwrap();
        let s = SupportSet::new(vec![(mid, mid)], 0);
        let d = dilate(&s, &g, &g, 1, &m, &m);
        assert_eq!(d.len(), 81);
    }

    /// Diagonal support on a 5-cell chain, radius 1: the grown set is the
    /// set of pairs within Chebyshev distance one of some diagonal pair.
    /// A direct enumeration gives 19 pairs.
    #[test]
    fn dilate_diagonal_chain_matches_enumeration() {
        let spec = DensitySpec::uniform(
            "chain5",
            BBox::new(vec![0.0], vec![5.0]),
            full_mask(),
        );
        let g = spec.build_grid(1.0).unwrap();
        let m = spec.discretize(g.clone()).unwrap();
        let s = SupportSet::new((0..5).map(|i| (i, i)).collect(), 0);
        let d = dilate(&s, &g, &g, 1, &m, &m);
        // oracle: direct set enumeration
        let mut expected = std::collections::BTreeSet::new();
        for i in 0i64..5 {
            for a in -1i64..=1 {
                for b in -1i64..=1 {
                    let p = i + a;
                    let q = i + b;
                    if (0..5).contains(&p) && (0..5).contains(&q) {
                        expected.insert((p as u32, q as u32));
                    }
                }
            }
        }
        assert_eq!(d.len(), expected.len());
        assert_eq!(expected.len(), 19);
        for pair in d.pairs() {
            assert!(expected.contains(pair));
        }
    }

    #[test]
    fn lift_interior_pair_counts() {
        // 2-d: one interior coarse pair lifts to 16 fine pairs
        let spec = preset("uniform_square").unwrap();
        let g = spec.build_grid(0.25).unwrap();
        let (_, cm) = g.refine().unwrap();
        let s = SupportSet::new(vec![(5, 10)], 0);
        let lifted = lift_support(&s, &cm, &cm);
        assert_eq!(lifted.len(), 16);
        // 1-d: one pair lifts to 4
        let line = DensitySpec::uniform("line", BBox::new(vec![0.0], vec![2.0]), full_mask());
        let lg = line.build_grid(1.0).unwrap();
        let (_, lcm) = lg.refine().unwrap();
        let s1 = SupportSet::new(vec![(0, 1)], 0);
        assert_eq!(lift_support(&s1, &lcm, &lcm).len(), 4);
    }

    #[test]
    fn lift_pacman_counts_match_child_products() {
        let spec = preset("pacman").unwrap();
        let g = spec.build_grid(2.0 / 8.0).unwrap();
        let (_, cm) = g.refine().unwrap();
        let n = g.len() as u32;
        let pairs: Vec<(u32, u32)> = (0..n).map(|i| (i, (n - 1 - i))).collect();
        let s = SupportSet::new(pairs.clone(), 0);
        let lifted = lift_support(&s, &cm, &cm);
        let expected: usize = pairs
            .iter()
            .map(|(i, j)| cm.children(*i as usize).len() * cm.children(*j as usize).len())
            .sum();
        assert_eq!(lifted.len(), expected);
    }

    #[test]
    fn zero_levels_equals_full_solve() {
        let src = preset("uniform_square").unwrap();
        let tgt = preset("uniform_diamond").unwrap();
        let cost = CostSpec::power(2.0).unwrap();
        let config = MultiscaleConfig {
            coarse_n: 8,
            levels: 0,
            ..Default::default()
        };
        let art = multiscale_transport(&src, &tgt, &cost, None, &config).unwrap();
        let mu = src.discretize(src.build_grid(1.0 / 8.0).unwrap()).unwrap();
        let nu = tgt.discretize(tgt.build_grid(1.0 / 8.0).unwrap()).unwrap();
        let full = lp::solve_full(&mu, &nu, &cost, &SolveOptions::default()).unwrap();
        assert_eq!(art.plan.objective, full.objective);
        assert_eq!(art.traces.len(), 1);
    }

    #[test]
    fn identity_transport_is_free_at_every_level() {
        let src = preset("uniform_square").unwrap();
        let cost = CostSpec::power(2.0).unwrap();
        let config = MultiscaleConfig {
            coarse_n: 8,
            levels: 2,
            ..Default::default()
        };
        let art = multiscale_transport(&src, &src, &cost, None, &config).unwrap();
        for tr in &art.traces {
            assert!(tr.objective.abs() < 1e-12, "level {}: {}", tr.level, tr.objective);
        }
        // supports stay near the diagonal: every entry maps a cell to itself
        for e in &art.plan.entries {
            assert_eq!(e.source, e.target);
        }
    }

    #[test]
    fn square_to_diamond_one_level_matches_full() {
        let src = preset("uniform_square").unwrap();
        let tgt = preset("uniform_diamond").unwrap();
        let cost = CostSpec::power(2.0).unwrap();
        let config = MultiscaleConfig {
            coarse_n: 8,
            levels: 1,
            ..Default::default()
        };
        let art = multiscale_transport(&src, &tgt, &cost, None, &config).unwrap();
        let h = 1.0 / 16.0;
        let mu = src.discretize(src.build_grid(h).unwrap()).unwrap();
        let nu = tgt.discretize(tgt.build_grid(h).unwrap()).unwrap();
        let full = lp::solve_full(&mu, &nu, &cost, &SolveOptions::default()).unwrap();
        let rel = (art.plan.objective - full.objective).abs() / full.objective.abs();
        assert!(rel < 1e-6, "relative gap {rel}");
        // plan support is contained in the admitted set by construction
        assert!(art.traces[1].support_size >= art.plan.entries.len());
    }
}
