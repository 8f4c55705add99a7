//! From plans to maps, point clouds, and rasters.

use crate::grid::{BBox, Grid};
use crate::lp::Plan;
use crate::measure::{osc_dq, osc_q, DiscreteMeasure};
use crate::util::stable_sum;
use crate::{Error, Result};

/// Single-valued transport map obtained by collapsing each plan row to the
/// mass-weighted mean of its targets.
#[derive(Clone, Debug)]
pub struct TransportMap {
    pub dim: usize,
    /// Source cell indices with positive mass, ascending.
    pub sources: Vec<u32>,
    /// Source locations, `dim` entries per source.
    pub xs: Vec<f64>,
    /// Projected target locations, `dim` entries per source.
    pub ys: Vec<f64>,
    pub masses: Vec<f64>,
}

impl TransportMap {
    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn source(&self, i: usize) -> &[f64] {
        &self.xs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.ys[i * self.dim..(i + 1) * self.dim]
    }

    pub fn total_mass(&self) -> f64 {
        stable_sum(self.masses.iter().copied())
    }
}

/// Weighted Dirac cloud.
#[derive(Clone, Debug)]
pub struct PointCloud {
    pub dim: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn total_mass(&self) -> f64 {
        stable_sum(self.weights.iter().copied())
    }

    pub fn bbox(&self) -> BBox {
        let d = self.dim;
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for i in 0..self.len() {
            for a in 0..d {
                let v = self.points[i * d + a];
                min[a] = min[a].min(v);
                max[a] = max[a].max(v);
            }
        }
        for a in 0..d {
            if max[a] - min[a] < 1e-12 {
                min[a] -= 0.5;
                max[a] += 0.5;
            }
        }
        BBox::new(min, max)
    }
}

/// Rasterized nonnegative density with unit integral.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterDensity {
    pub dims: Vec<usize>,
    pub bbox: BBox,
    /// Row-major values (last axis fastest).
    pub values: Vec<f64>,
}

impl RasterDensity {
    pub fn pixel_volume(&self) -> f64 {
        (0..self.dims.len())
            .map(|a| self.bbox.extent(a) / self.dims[a] as f64)
            .product()
    }

    pub fn integral(&self) -> f64 {
        stable_sum(self.values.iter().copied()) * self.pixel_volume()
    }
}

/// Collapse each source row of the plan to the Euclidean barycenter of its
/// targets. The first marginal of the result equals the source measure.
pub fn barycentric_project(
    plan: &Plan,
    mu: &DiscreteMeasure,
    target_grid: &Grid,
) -> Result<TransportMap> {
    let dim = mu.grid.dim();
    assert_eq!(dim, target_grid.dim());
    let n = mu.len();
    let mut row_mass = vec![0.0f64; n];
    let mut row_sum = vec![0.0f64; n * dim];
    for e in &plan.entries {
        let i = e.source as usize;
        row_mass[i] += e.mass;
        let y = target_grid.center(e.target as usize);
        for a in 0..dim {
            row_sum[i * dim + a] += e.mass * y[a];
        }
    }
    let mut sources = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut masses = Vec::new();
    for i in 0..n {
        let w = mu.weights[i];
        if w <= 0.0 {
            continue;
        }
        if row_mass[i] <= 0.0 {
            return Err(Error::InvalidArg(format!(
                "source cell {i} has positive mass but the plan routes nothing from it"
            )));
        }
        sources.push(i as u32);
        xs.extend_from_slice(mu.grid.center(i));
        for a in 0..dim {
            ys.push(row_sum[i * dim + a] / row_mass[i]);
        }
        masses.push(w);
    }
    Ok(TransportMap {
        dim,
        sources,
        xs,
        ys,
        masses,
    })
}

/// Push the source measure through the map: a Dirac at each projected
/// target holding the source cell's mass.
pub fn pushforward(map: &TransportMap) -> PointCloud {
    PointCloud {
        dim: map.dim,
        points: map.ys.clone(),
        weights: map.masses.clone(),
    }
}

/// Unnormalized Gaussian splat of the cloud onto a raster; kernels are
/// truncated at four standard deviations.
pub(crate) fn splat(
    cloud: &PointCloud,
    sigma: f64,
    dims: &[usize],
    bbox: &BBox,
) -> RasterDensity {
    let d = cloud.dim;
    assert_eq!(dims.len(), d);
    let px: Vec<f64> = (0..d).map(|a| bbox.extent(a) / dims[a] as f64).collect();
    let strides: Vec<usize> = {
        let mut s = vec![1usize; d];
        for a in (0..d.saturating_sub(1)).rev() {
            s[a] = s[a + 1] * dims[a + 1];
        }
        s
    };
    let total: usize = dims.iter().product();
    let mut values = vec![0.0f64; total];
    let cutoff = 4.0 * sigma;
    let cutoff_sq = cutoff * cutoff;
    let inv2s2 = 1.0 / (2.0 * sigma * sigma);

    let mut lo = vec![0i64; d];
    let mut hi = vec![0i64; d];
    let mut idx = vec![0i64; d];
    for p in 0..cloud.len() {
        let w = cloud.weights[p];
        if w == 0.0 {
            continue;
        }
        let pt = cloud.point(p);
        let mut empty = false;
        for a in 0..d {
            let l = ((pt[a] - cutoff - bbox.min[a]) / px[a]).floor() as i64;
            let h = ((pt[a] + cutoff - bbox.min[a]) / px[a]).ceil() as i64;
            lo[a] = l.max(0);
            hi[a] = h.min(dims[a] as i64 - 1);
            if lo[a] > hi[a] {
                empty = true;
                break;
            }
        }
        if empty {
            continue;
        }
        idx.copy_from_slice(&lo);
        'cells: loop {
            let mut d2 = 0.0;
            let mut flat = 0usize;
            for a in 0..d {
                let c = bbox.min[a] + (idx[a] as f64 + 0.5) * px[a];
                let diff = c - pt[a];
                d2 += diff * diff;
                flat += idx[a] as usize * strides[a];
            }
            if d2 <= cutoff_sq {
                values[flat] += w * (-d2 * inv2s2).exp();
            }
            let mut a = d;
            loop {
                if a == 0 {
                    break 'cells;
                }
                a -= 1;
                idx[a] += 1;
                if idx[a] <= hi[a] {
                    break;
                }
                idx[a] = lo[a];
            }
        }
    }
    RasterDensity {
        dims: dims.to_vec(),
        bbox: bbox.clone(),
        values,
    }
}

/// Replace every Dirac with an isotropic Gaussian of deviation `sigma`,
/// truncated at `4 sigma`, and renormalize the raster to unit integral.
/// Without an explicit box the raster covers the cloud padded by the cutoff.
pub fn smooth(
    cloud: &PointCloud,
    sigma: f64,
    dims: &[usize],
    bbox: Option<&BBox>,
) -> Result<RasterDensity> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArg(format!("sigma must be positive, got {sigma}")));
    }
    let owned;
    let bx = match bbox {
        Some(b) => b,
        None => {
            owned = cloud.bbox().padded(4.0 * sigma);
            &owned
        }
    };
    let mut raster = splat(cloud, sigma, dims, bx);
    let integral = raster.integral();
    if integral <= 0.0 {
        return Err(Error::ZeroMass);
    }
    for v in &mut raster.values {
        *v /= integral;
    }
    Ok(raster)
}

/// Validation cases with known optimal quadratic-cost maps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnalyticCase {
    /// Oscillatory density to the uniform square, both on `[-1/2, 1/2]^2`.
    Ex33,
    /// Uniform unit disc split into two half discs shifted apart by one.
    SplitCircle,
}

impl AnalyticCase {
    pub fn parse(name: &str) -> Result<Option<Self>> {
        match name {
            "ex33" => Ok(Some(AnalyticCase::Ex33)),
            "split_circle" => Ok(Some(AnalyticCase::SplitCircle)),
            "none" => Ok(None),
            _ => Err(Error::InvalidArg(format!("unknown validation case `{name}`"))),
        }
    }
}

/// Exact optimal map value for the analytic cases.
pub fn analytic_map(case: AnalyticCase, x: &[f64]) -> Vec<f64> {
    match case {
        AnalyticCase::Ex33 => vec![
            x[0] + 4.0 * osc_dq(x[0]) * osc_q(x[1]),
            x[1] + 4.0 * osc_q(x[0]) * osc_dq(x[1]),
        ],
        AnalyticCase::SplitCircle => {
            let s = if x[0] > 0.0 {
                0.5
            } else if x[0] < 0.0 {
                -0.5
            } else {
                0.0
            };
            vec![x[0] + s, x[1]]
        }
    }
}

/// Maximum and mass-weighted L2 deviation of the map from a reference.
pub fn error_metrics(map: &TransportMap, exact: &dyn Fn(&[f64]) -> Vec<f64>) -> (f64, f64) {
    let mut max_err = 0.0f64;
    let mut terms = Vec::with_capacity(map.len());
    for i in 0..map.len() {
        let t = exact(map.source(i));
        let e2 = crate::util::dist_sq(map.target(i), &t);
        max_err = max_err.max(e2.sqrt());
        terms.push(map.masses[i] * e2);
    }
    (max_err, stable_sum(terms.into_iter()).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{full_mask, BBox, Grid};
    use crate::lp::{Plan, PlanEntry};
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

    fn plan_from(entries: Vec<(u32, u32, f64)>, n: usize, m: usize) -> Plan {
        let entries: Vec<PlanEntry> = entries
            .into_iter()
            .map(|(source, target, mass)| PlanEntry {
                source,
                target,
                mass,
            })
            .collect();
        let transported = entries.iter().map(|e| e.mass).sum();
        Plan {
            entries,
            objective: 0.0,
            duals: None,
            n,
            m,
            partial: false,
            transported_mass: transported,
            pivots: 0,
        }
    }

    #[test]
    fn permutation_plan_projects_to_itself() {
        let g = line_grid(3);
        let mu = DiscreteMeasure::from_weights(g.clone(), vec![0.3, 0.3, 0.4]).unwrap();
        let plan = plan_from(vec![(0, 2, 0.3), (1, 0, 0.3), (2, 1, 0.4)], 3, 3);
        let map = barycentric_project(&plan, &mu, &g).unwrap();
        for (i, t) in [2usize, 0, 1].into_iter().enumerate() {
            assert!((map.target(i)[0] - g.center(t)[0]).abs() < 1e-12);
        }
        // projecting the induced single-target rows again changes nothing
        let again = barycentric_project(&plan, &mu, &g).unwrap();
        assert_eq!(map.ys, again.ys);
    }

    #[test]
    fn split_row_lands_at_midpoint() {
        // source dirac at 1.5 splits equally to targets 0.5 and 2.5
        let g = line_grid(3);
        let mut w = vec![0.0; 3];
        w[1] = 1.0;
        let mu = DiscreteMeasure::from_weights(g.clone(), w).unwrap();
        let plan = plan_from(vec![(1, 0, 0.5), (1, 2, 0.5)], 3, 3);
        let map = barycentric_project(&plan, &mu, &g).unwrap();
        assert_eq!(map.len(), 1);
        assert!((map.target(0)[0] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn positive_source_with_no_flow_is_an_error() {
        let g = line_grid(2);
        let mu = DiscreteMeasure::from_weights(g.clone(), vec![0.5, 0.5]).unwrap();
        let plan = plan_from(vec![(0, 0, 0.5)], 2, 2);
        assert!(barycentric_project(&plan, &mu, &g).is_err());
    }

    #[test]
    fn pushforward_of_identity_is_source() {
        let g = line_grid(4);
        let w = vec![0.1, 0.2, 0.3, 0.4];
        let mu = DiscreteMeasure::from_weights(g.clone(), w.clone()).unwrap();
        let plan = plan_from(
            (0..4).map(|i| (i as u32, i as u32, w[i])).collect(),
            4,
            4,
        );
        let map = barycentric_project(&plan, &mu, &g).unwrap();
        let cloud = pushforward(&map);
        assert!((cloud.total_mass() - 1.0).abs() < 1e-12);
        for i in 0..4 {
            assert!((cloud.point(i)[0] - g.center(i)[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn single_dirac_smooths_to_centered_bump() {
        let cloud = PointCloud {
            dim: 2,
            points: vec![0.0, 0.0],
            weights: vec![1.0],
        };
        let bbox = BBox::rect(-1.0, 1.0, -1.0, 1.0);
        let r = smooth(&cloud, 0.2, &[33, 33], Some(&bbox)).unwrap();
        assert!((r.integral() - 1.0).abs() < 1e-9);
        let (mx, _) = r
            .values
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, v)| {
                if *v > acc.1 {
                    (i, *v)
                } else {
                    acc
                }
            });
        assert_eq!(mx, 16 * 33 + 16); // center pixel
    }

    #[test]
    fn distant_diracs_split_mass_evenly() {
        let cloud = PointCloud {
            dim: 2,
            points: vec![-5.0, 0.0, 5.0, 0.0],
            weights: vec![0.5, 0.5],
        };
        let sigma = 0.25;
        let bbox = BBox::rect(-7.0, 7.0, -2.0, 2.0);
        let r = smooth(&cloud, sigma, &[140, 40], Some(&bbox)).unwrap();
        // mass in the left half-plane
        let mut left = 0.0;
        for i in 0..140 {
            for j in 0..40 {
                let x = -7.0 + (i as f64 + 0.5) * 0.1;
                if x < 0.0 {
                    left += r.values[i * 40 + j];
                }
            }
        }
        left *= r.pixel_volume();
        assert!((left - 0.5).abs() < 1e-6, "left mass {left}");
    }

    #[test]
    fn uniform_cloud_smooths_flat_in_the_interior() {
        // uniform cloud on an 80x80 lattice over the unit square
        let h = 1.0 / 80.0;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for i in 0..80 {
            for j in 0..80 {
                points.push((i as f64 + 0.5) * h);
                points.push((j as f64 + 0.5) * h);
                weights.push(1.0 / 6400.0);
            }
        }
        let cloud = PointCloud {
            dim: 2,
            points,
            weights,
        };
        let sigma = 6.0 * h;
        let bbox = BBox::rect(0.0, 1.0, 0.0, 1.0);
        let r = smooth(&cloud, sigma, &[64, 64], Some(&bbox)).unwrap();
        let margin = 4.0 * sigma;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..64 {
            for j in 0..64 {
                let x = (i as f64 + 0.5) / 64.0;
                let y = (j as f64 + 0.5) / 64.0;
                if x > margin && x < 1.0 - margin && y > margin && y < 1.0 - margin {
                    let v = r.values[i * 64 + j];
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
        }
        assert!(
            (hi - lo) / hi < 0.01,
            "interior variation {} exceeds 1%",
            (hi - lo) / hi
        );
    }

    #[test]
    fn splat_is_linear_before_normalization() {
        let bbox = BBox::rect(-1.0, 1.0, -1.0, 1.0);
        let a = PointCloud {
            dim: 2,
            points: vec![-0.3, 0.1],
            weights: vec![1.0],
        };
        let b = PointCloud {
            dim: 2,
            points: vec![0.4, -0.2],
            weights: vec![1.0],
        };
        let both = PointCloud {
            dim: 2,
            points: vec![-0.3, 0.1, 0.4, -0.2],
            weights: vec![2.0, 3.0],
        };
        let ra = splat(&a, 0.15, &[25, 25], &bbox);
        let rb = splat(&b, 0.15, &[25, 25], &bbox);
        let rc = splat(&both, 0.15, &[25, 25], &bbox);
        for i in 0..rc.values.len() {
            let lin = 2.0 * ra.values[i] + 3.0 * rb.values[i];
            assert!((rc.values[i] - lin).abs() < 1e-12);
        }
    }

    #[test]
    fn analytic_maps_fix_their_stationary_points() {
        // dq vanishes at multiples of 1/8 and at +-1/2
        for x in [(-0.25, 0.375), (0.0, 0.0), (0.5, -0.125)] {
            let t = analytic_map(AnalyticCase::Ex33, &[x.0, x.1]);
            assert!((t[0] - x.0).abs() < 1e-15);
            assert!((t[1] - x.1).abs() < 1e-15);
        }
        let t = analytic_map(AnalyticCase::SplitCircle, &[0.3, -0.2]);
        assert_eq!(t, vec![0.8, -0.2]);
    }

    #[test]
    fn error_metric_examples() {
        let map = TransportMap {
            dim: 1,
            sources: vec![0],
            xs: vec![0.0],
            ys: vec![0.25],
            masses: vec![1.0],
        };
        let (mx, l2) = error_metrics(&map, &|x| vec![x[0] + 0.25]);
        assert_eq!((mx, l2), (0.0, 0.0));
        let (mx, l2) = error_metrics(&map, &|x| vec![x[0] + 0.26]);
        assert!((mx - 0.01).abs() < 1e-12);
        assert!((l2 - 0.01).abs() < 1e-12);
    }
}
