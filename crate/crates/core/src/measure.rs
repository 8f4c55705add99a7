//! Discrete measures, cost functions, and the built-in density presets.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{full_mask, BBox, DensityFn, Grid, MaskFn};
use crate::util::stable_sum;
use crate::{Error, Result};

/// Weighted Dirac sum on a grid. Weights are nonnegative and normalized to
/// total mass one; cells outside the support keep an explicit zero weight.
#[derive(Clone, Debug)]
pub struct DiscreteMeasure {
    pub grid: Arc<Grid>,
    pub weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Midpoint-rule discretization: `w_i = density(x_i) * h^d`, normalized
    /// so the weights sum to one.
    pub fn discretize(density: &dyn Fn(&[f64]) -> f64, grid: Arc<Grid>) -> Result<Self> {
        let vol = grid.cell_volume();
        let mut weights = Vec::with_capacity(grid.len());
        for i in 0..grid.len() {
            let c = grid.center(i);
            let v = density(c);
            if v < 0.0 || !v.is_finite() {
                return Err(Error::NegativeDensity {
                    point: c.to_vec(),
                    value: v,
                });
            }
            weights.push(v * vol);
        }
        let total = stable_sum(weights.iter().copied());
        if total <= 0.0 {
            return Err(Error::ZeroMass);
        }
        for w in &mut weights {
            *w /= total;
        }
        Ok(DiscreteMeasure { grid, weights })
    }

    /// Build directly from weights (normalizes; rejects negatives).
    pub fn from_weights(grid: Arc<Grid>, weights: Vec<f64>) -> Result<Self> {
        assert_eq!(weights.len(), grid.len());
        if let Some((i, &w)) = weights.iter().enumerate().find(|(_, w)| **w < 0.0) {
            return Err(Error::NegativeDensity {
                point: grid.center(i).to_vec(),
                value: w,
            });
        }
        let total = stable_sum(weights.iter().copied());
        if total <= 0.0 {
            return Err(Error::ZeroMass);
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(DiscreteMeasure { grid, weights })
    }

    pub fn total_mass(&self) -> f64 {
        stable_sum(self.weights.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Indices of cells carrying positive mass.
    pub fn positive_cells(&self) -> Vec<u32> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(i, _)| i as u32)
            .collect()
    }
}

/// Transport cost `c(x, y)`.
#[derive(Clone)]
pub enum CostSpec {
    /// `|x - y|^p` with the Euclidean norm, `p > 0`.
    Power(f64),
    /// User-supplied continuous cost.
    Custom(Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for CostSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CostSpec::Power(p) => write!(f, "Power({p})"),
            CostSpec::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl CostSpec {
    pub fn power(p: f64) -> Result<Self> {
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::InvalidArg(format!(
                "cost exponent must be positive, got {p}"
            )));
        }
        Ok(CostSpec::Power(p))
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            CostSpec::Power(p) => {
                let d2 = crate::util::dist_sq(x, y);
                if *p == 2.0 {
                    d2
                } else if *p == 1.0 {
                    d2.sqrt()
                } else if d2 == 0.0 {
                    0.0
                } else {
                    d2.powf(p / 2.0)
                }
            }
            CostSpec::Custom(f) => f(x, y),
        }
    }
}

/// A named domain: bounding box, indicator mask, and unnormalized density.
#[derive(Clone)]
pub struct DensitySpec {
    pub name: String,
    pub bbox: BBox,
    pub mask: MaskFn,
    pub density: DensityFn,
}

impl std::fmt::Debug for DensitySpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DensitySpec")
            .field("name", &self.name)
            .field("bbox", &self.bbox)
            .finish()
    }
}

impl DensitySpec {
    pub fn new(name: impl Into<String>, bbox: BBox, mask: MaskFn, density: DensityFn) -> Self {
        DensitySpec {
            name: name.into(),
            bbox,
            mask,
            density,
        }
    }

    /// Uniform density on an arbitrary mask.
    pub fn uniform(name: impl Into<String>, bbox: BBox, mask: MaskFn) -> Self {
        DensitySpec::new(name, bbox, mask, Arc::new(|_: &[f64]| 1.0))
    }

    pub fn build_grid(&self, h: f64) -> Result<Arc<Grid>> {
        Grid::build(self.mask.clone(), &self.bbox, h, self.name.clone())
    }

    pub fn discretize(&self, grid: Arc<Grid>) -> Result<DiscreteMeasure> {
        let d = self.density.clone();
        DiscreteMeasure::discretize(&move |p: &[f64]| d(p), grid)
    }
}

// --- oscillatory test density ------------------------------------------

/// Base profile of the oscillatory density; also used by the analytic map.
pub(crate) fn osc_q(z: f64) -> f64 {
    (-(1.0 / (8.0 * PI)) * z * z + 1.0 / (256.0 * PI.powi(3)) + 1.0 / (32.0 * PI))
        * (8.0 * PI * z).cos()
        + (1.0 / (32.0 * PI * PI)) * z * (8.0 * PI * z).sin()
}

pub(crate) fn osc_dq(z: f64) -> f64 {
    (z * z - 0.25) * (8.0 * PI * z).sin()
}

pub(crate) fn osc_ddq(z: f64) -> f64 {
    2.0 * z * (8.0 * PI * z).sin() + 8.0 * PI * (z * z - 0.25) * (8.0 * PI * z).cos()
}

/// Oscillatory source density on `[-1/2, 1/2]^2`; the matching target is the
/// uniform density on the same square and the optimal quadratic-cost map is
/// available in closed form for validation.
pub(crate) fn osc_density(x: f64, y: f64) -> f64 {
    1.0 + 4.0 * (osc_ddq(x) * osc_q(y) + osc_q(x) * osc_ddq(y))
        + 16.0 * (osc_q(x) * osc_q(y) * osc_ddq(x) * osc_ddq(y) - osc_dq(x).powi(2) * osc_dq(y).powi(2))
}

// --- presets -------------------------------------------------------------

/// Parsed preset name plus shape parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum Preset {
    UniformSquare { cx: f64, cy: f64, half: f64 },
    UniformDiamond { r: f64 },
    Disc { cx: f64, cy: f64, r: f64 },
    Pacman { r: f64 },
    NonconvexFrame,
    SuperellipseRing,
    Ex33Source,
    SplitCircle,
    StripedRectangle,
    Superellipse85,
    AnnulusSector { k: u32, inner: f64, outer: f64, arc: f64 },
    ParabolaLens { up: bool, gap: f64 },
    Random { seed: u64, dim: usize },
}

fn params_of(spec: &str) -> Result<(&str, Vec<(String, f64)>)> {
    match spec.split_once(':') {
        None => Ok((spec, Vec::new())),
        Some((name, rest)) => {
            let mut kv = Vec::new();
            for part in rest.split(',').filter(|s| !s.is_empty()) {
                let (k, v) = part.split_once('=').ok_or_else(|| {
                    Error::InvalidArg(format!("preset parameter `{part}` is not key=value"))
                })?;
                let val: f64 = v.parse().map_err(|_| {
                    Error::InvalidArg(format!("preset parameter `{part}` has a non-numeric value"))
                })?;
                kv.push((k.trim().to_string(), val));
            }
            Ok((name, kv))
        }
    }
}

fn get(kv: &[(String, f64)], key: &str, default: f64) -> f64 {
    kv.iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| *v)
        .unwrap_or(default)
}

impl Preset {
    /// Parse `name` or `name:key=value,key=value`.
    pub fn parse(spec: &str) -> Result<Preset> {
        let (name, kv) = params_of(spec)?;
        let p = match name {
            "uniform_square" => Preset::UniformSquare {
                cx: get(&kv, "cx", 0.0),
                cy: get(&kv, "cy", 0.0),
                half: get(&kv, "half", 0.5),
            },
            "uniform_diamond" => Preset::UniformDiamond {
                r: get(&kv, "r", 1.0),
            },
            "disc" | "circle" => Preset::Disc {
                cx: get(&kv, "cx", 0.0),
                cy: get(&kv, "cy", 0.0),
                r: get(&kv, "r", 1.0),
            },
            "pacman" => Preset::Pacman {
                r: get(&kv, "r", 1.0),
            },
            "nonconvex_frame" => Preset::NonconvexFrame,
            "superellipse_ring" => Preset::SuperellipseRing,
            "ex33_source" => Preset::Ex33Source,
            "split_circle" => Preset::SplitCircle,
            "striped_rectangle" => Preset::StripedRectangle,
            "superellipse_85" => Preset::Superellipse85,
            "annulus_sector" => Preset::AnnulusSector {
                k: get(&kv, "k", 0.0) as u32,
                inner: get(&kv, "inner", 0.375),
                outer: get(&kv, "outer", 0.875),
                arc: get(&kv, "arc", 2.0 / 3.0),
            },
            "parabola_up" => Preset::ParabolaLens {
                up: true,
                gap: get(&kv, "gap", 0.5),
            },
            "parabola_down" => Preset::ParabolaLens {
                up: false,
                gap: get(&kv, "gap", 0.5),
            },
            "random" => Preset::Random {
                seed: get(&kv, "seed", 0.0) as u64,
                dim: get(&kv, "d", 2.0) as usize,
            },
            _ => return Err(Error::UnknownPreset(spec.to_string())),
        };
        Ok(p)
    }

    pub fn density_spec(&self) -> DensitySpec {
        match self.clone() {
            Preset::UniformSquare { cx, cy, half } => DensitySpec::uniform(
                format!("uniform_square[{cx},{cy},{half}]"),
                BBox::rect(cx - half, cx + half, cy - half, cy + half),
                full_mask(),
            ),
            Preset::UniformDiamond { r } => DensitySpec::uniform(
                format!("uniform_diamond[{r}]"),
                BBox::rect(-r, r, -r, r),
                Arc::new(move |p: &[f64]| p[0].abs() + p[1].abs() <= r),
            ),
            Preset::Disc { cx, cy, r } => DensitySpec::uniform(
                format!("disc[{cx},{cy},{r}]"),
                BBox::rect(cx - r, cx + r, cy - r, cy + r),
                Arc::new(move |p: &[f64]| {
                    let dx = p[0] - cx;
                    let dy = p[1] - cy;
                    dx * dx + dy * dy <= r * r
                }),
            ),
            Preset::Pacman { r } => DensitySpec::uniform(
                format!("pacman[{r}]"),
                BBox::rect(-r, r, -r, r),
                Arc::new(move |p: &[f64]| {
                    p[0] * p[0] + p[1] * p[1] <= r * r
                        && !(p[1].atan2(p[0]).abs() < PI / 4.0)
                }),
            ),
            Preset::NonconvexFrame => DensitySpec::uniform(
                "nonconvex_frame",
                BBox::rect(-1.0, 1.0, -1.0, 1.0),
                Arc::new(|p: &[f64]| {
                    let ax = p[0].abs();
                    let ay = p[1].abs();
                    ax <= 1.0 && ay <= 1.0
                        && ax.max(ay) > 0.4          // medium square removed from the center
                        && !(ax > 0.6 && ay > 0.6) // small squares removed from the corners
                }),
            ),
            Preset::SuperellipseRing => DensitySpec::uniform(
                "superellipse_ring",
                BBox::rect(-1.0, 1.0, -1.0, 1.0),
                Arc::new(|p: &[f64]| {
                    p[0].abs().powf(0.8) + p[1].abs().powf(0.8) <= 1.0
                        && p[0].abs() + p[1].abs() > 9.0 / 25.0
                }),
            ),
            Preset::Ex33Source => DensitySpec::new(
                "ex33_source",
                BBox::rect(-0.5, 0.5, -0.5, 0.5),
                full_mask(),
                Arc::new(|p: &[f64]| osc_density(p[0], p[1])),
            ),
            Preset::SplitCircle => DensitySpec::uniform(
                "split_circle",
                BBox::rect(-1.5, 1.5, -1.0, 1.0),
                Arc::new(|p: &[f64]| {
                    let s = if p[0] > 0.0 { 0.5 } else { -0.5 };
                    let dx = p[0] - s;
                    p[0].abs() >= 0.5 && dx * dx + p[1] * p[1] <= 1.0
                }),
            ),
            Preset::StripedRectangle => DensitySpec::new(
                "striped_rectangle",
                BBox::rect(-1.0, 1.0, -0.5, 0.5),
                full_mask(),
                Arc::new(|p: &[f64]| {
                    let mut v = 1.0;
                    if p[0].abs() >= 0.75 && p[1].abs() <= 0.5 {
                        v += 1.0;
                    }
                    if p[0].abs() >= 0.75 && p[1].abs() <= 0.25 {
                        v += 1.0;
                    }
                    v
                }),
            ),
            Preset::Superellipse85 => DensitySpec::uniform(
                "superellipse_85",
                BBox::rect(-1.0, 1.0, -1.0, 1.0),
                Arc::new(|p: &[f64]| p[0].abs().powf(1.6) + p[1].abs().powf(1.6) <= 1.0),
            ),
            Preset::AnnulusSector { k, inner, outer, arc } => {
                let start = k as f64 * 2.0 * PI / 3.0;
                let width = arc * 2.0 * PI / 3.0;
                DensitySpec::uniform(
                    format!("annulus_sector[{k}]"),
                    BBox::rect(-1.0, 1.0, -1.0, 1.0),
                    Arc::new(move |p: &[f64]| {
                        let r2 = p[0] * p[0] + p[1] * p[1];
                        if r2 < inner * inner || r2 > outer * outer {
                            return false;
                        }
                        let mut th = p[1].atan2(p[0]);
                        if th < 0.0 {
                            th += 2.0 * PI;
                        }
                        let mut rel = th - start;
                        if rel < 0.0 {
                            rel += 2.0 * PI;
                        }
                        rel <= width
                    }),
                )
            }
            Preset::ParabolaLens { up, gap } => {
                let g = gap / 2.0;
                if up {
                    DensitySpec::uniform(
                        format!("parabola_up[{gap}]"),
                        BBox::rect(-1.0, 1.0, g, g + 1.0),
                        Arc::new(move |p: &[f64]| {
                            let t = p[1] - g;
                            p[0] * p[0] <= t && t <= 1.0
                        }),
                    )
                } else {
                    DensitySpec::uniform(
                        format!("parabola_down[{gap}]"),
                        BBox::rect(-1.0, 1.0, -g - 1.0, -g),
                        Arc::new(move |p: &[f64]| {
                            let t = -g - p[1];
                            p[0] * p[0] <= t && t <= 1.0
                        }),
                    )
                }
            }
            Preset::Random { seed, dim } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut bumps = Vec::new();
                for _ in 0..3 {
                    let c: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.1..0.9)).collect();
                    let s: f64 = rng.gen_range(0.08..0.3);
                    let a: f64 = rng.gen_range(0.5..1.5);
                    bumps.push((c, s, a));
                }
                DensitySpec::new(
                    format!("random[{seed},{dim}d]"),
                    BBox::new(vec![0.0; dim], vec![1.0; dim]),
                    full_mask(),
                    Arc::new(move |p: &[f64]| {
                        let mut v = 0.25;
                        for (c, s, a) in &bumps {
                            let d2 = crate::util::dist_sq(p, c);
                            v += a * (-d2 / (2.0 * s * s)).exp();
                        }
                        v
                    }),
                )
            }
        }
    }
}

/// Parse and instantiate a preset in one step.
pub fn preset(spec: &str) -> Result<DensitySpec> {
    Ok(Preset::parse(spec)?.density_spec())
}
