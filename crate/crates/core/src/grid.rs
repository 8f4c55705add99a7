//! Cartesian cell-center grids over masked domains.
//!
//! A grid at level `k` holds the centers of the cells of an axis-aligned
//! lattice with spacing `h0 / 2^k` whose center passes the domain mask.
//! Centers sit at `(index + 1/2) * h` relative to the bounding-box corner,
//! so refining a cell splits its hypercube evenly into `2^d` children whose
//! centers land on the next level's lattice.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::{Error, Result};

/// Domain indicator sampled at cell centers.
pub type MaskFn = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;
/// Nonnegative density evaluated at cell centers.
pub type DensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Axis-aligned bounding box.
#[derive(Clone, Debug, PartialEq)]
pub struct BBox {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl BBox {
    pub fn new(min: Vec<f64>, max: Vec<f64>) -> Self {
        assert_eq!(min.len(), max.len());
        assert!(
            min.iter().zip(&max).all(|(a, b)| a < b),
            "degenerate bounding box"
        );
        BBox { min, max }
    }

    /// Two-dimensional box `[x0, x1] x [y0, y1]`.
    pub fn rect(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        BBox::new(vec![x0, y0], vec![x1, y1])
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.max[axis] - self.min[axis]
    }

    pub fn max_extent(&self) -> f64 {
        (0..self.dim())
            .map(|a| self.extent(a))
            .fold(0.0, f64::max)
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.min.iter().zip(&self.max))
            .all(|(x, (lo, hi))| *x >= *lo && *x <= *hi)
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox::new(
            self.min
                .iter()
                .zip(&other.min)
                .map(|(a, b)| a.min(*b))
                .collect(),
            self.max
                .iter()
                .zip(&other.max)
                .map(|(a, b)| a.max(*b))
                .collect(),
        )
    }

    /// Expand every side by `pad`.
    pub fn padded(&self, pad: f64) -> BBox {
        BBox::new(
            self.min.iter().map(|a| a - pad).collect(),
            self.max.iter().map(|a| a + pad).collect(),
        )
    }
}

/// Immutable cell-center grid over a masked domain.
pub struct Grid {
    dim: usize,
    spacing: f64,
    level: u32,
    bbox: BBox,
    axis_cells: Vec<i64>,
    strides: Vec<u64>,
    /// Lattice multi-indices, `dim` entries per cell, lexicographic order.
    lattice: Vec<i64>,
    /// Cell centers, `dim` entries per cell, same order as `lattice`.
    centers: Vec<f64>,
    lookup: HashMap<u64, u32>,
    mask: MaskFn,
    mask_id: String,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("dim", &self.dim)
            .field("spacing", &self.spacing)
            .field("level", &self.level)
            .field("cells", &self.len())
            .field("mask_id", &self.mask_id)
            .finish()
    }
}

/// Parent/child correspondence produced by one refinement step.
#[derive(Clone, Debug)]
pub struct ChildMap {
    parent_level: u32,
    children: Vec<Vec<u32>>,
    parent_of: Vec<u32>,
}

impl ChildMap {
    pub fn parent_level(&self) -> u32 {
        self.parent_level
    }

    pub fn children(&self, coarse: usize) -> &[u32] {
        &self.children[coarse]
    }

    pub fn parent_of(&self, fine: usize) -> u32 {
        self.parent_of[fine]
    }

    pub fn fine_len(&self) -> usize {
        self.parent_of.len()
    }
}

fn cells_per_axis(extent: f64, h: f64) -> i64 {
    let ratio = extent / h;
    let rounded = ratio.round();
    let n = if (ratio - rounded).abs() < 1e-9 {
        rounded
    } else {
        ratio.ceil()
    };
    (n as i64).max(1)
}

impl Grid {
    /// Collect all lattice cells of spacing `h` inside `bbox` whose center
    /// passes `mask`, in lexicographic order of the multi-index.
    pub fn build(mask: MaskFn, bbox: &BBox, h: f64, mask_id: impl Into<String>) -> Result<Arc<Grid>> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidArg(format!("grid spacing must be positive, got {h}")));
        }
        let dim = bbox.dim();
        let axis_cells: Vec<i64> = (0..dim).map(|a| cells_per_axis(bbox.extent(a), h)).collect();
        Self::assemble(mask, bbox.clone(), h, 0, axis_cells, mask_id.into(), |_idx| true)
    }

    fn assemble(
        mask: MaskFn,
        bbox: BBox,
        h: f64,
        level: u32,
        axis_cells: Vec<i64>,
        mask_id: String,
        admit: impl Fn(&[i64]) -> bool,
    ) -> Result<Arc<Grid>> {
        let dim = bbox.dim();
        let mut strides = vec![1u64; dim];
        for a in (0..dim.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * axis_cells[a + 1] as u64;
        }
        let mut lattice = Vec::new();
        let mut centers = Vec::new();
        let mut idx = vec![0i64; dim];
        let mut center = vec![0.0f64; dim];
        'outer: loop {
            for a in 0..dim {
                center[a] = bbox.min[a] + (idx[a] as f64 + 0.5) * h;
            }
            if admit(&idx) && (mask)(&center) {
                lattice.extend_from_slice(&idx);
                centers.extend_from_slice(&center);
            }
            // odometer over the lattice, last axis fastest
            let mut a = dim;
            loop {
                if a == 0 {
                    break 'outer;
                }
                a -= 1;
                idx[a] += 1;
                if idx[a] < axis_cells[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
        if lattice.is_empty() {
            return Err(Error::EmptyDomain);
        }
        let n = lattice.len() / dim;
        let mut lookup = HashMap::with_capacity(n);
        for i in 0..n {
            let code: u64 = (0..dim)
                .map(|a| lattice[i * dim + a] as u64 * strides[a])
                .sum();
            lookup.insert(code, i as u32);
        }
        Ok(Arc::new(Grid {
            dim,
            spacing: h,
            level,
            bbox,
            axis_cells,
            strides,
            lattice,
            centers,
            lookup,
            mask,
            mask_id,
        }))
    }

    /// Halve the spacing: each cell's hypercube splits into `2^d` equal
    /// hypercubes and the masked subset of their centers becomes the new
    /// cells. Returns the fine grid and the parent/child correspondence.
    pub fn refine(&self) -> Result<(Arc<Grid>, ChildMap)> {
        let dim = self.dim;
        let h2 = self.spacing / 2.0;
        let fine_axis: Vec<i64> = self.axis_cells.iter().map(|n| n * 2).collect();
        let mut fine_strides = vec![1u64; dim];
        for a in (0..dim.saturating_sub(1)).rev() {
            fine_strides[a] = fine_strides[a + 1] * fine_axis[a + 1] as u64;
        }
        // candidates: (lex code, child multi-index, parent cell)
        let mut cands: Vec<(u64, Vec<i64>, u32)> = Vec::with_capacity(self.len() << dim);
        let mut child = vec![0i64; dim];
        let mut center = vec![0.0f64; dim];
        for parent in 0..self.len() {
            let base = &self.lattice[parent * dim..(parent + 1) * dim];
            for bits in 0..(1usize << dim) {
                for a in 0..dim {
                    child[a] = 2 * base[a] + ((bits >> (dim - 1 - a)) & 1) as i64;
                    center[a] = self.bbox.min[a] + (child[a] as f64 + 0.5) * h2;
                }
                if (self.mask)(&center) {
                    let code: u64 = (0..dim).map(|a| child[a] as u64 * fine_strides[a]).sum();
                    cands.push((code, child.clone(), parent as u32));
                }
            }
        }
        if cands.is_empty() {
            return Err(Error::EmptyDomain);
        }
        cands.sort_unstable_by_key(|(code, _, _)| *code);
        let n = cands.len();
        let mut lattice = Vec::with_capacity(n * dim);
        let mut centers = Vec::with_capacity(n * dim);
        let mut lookup = HashMap::with_capacity(n);
        let mut children = vec![Vec::new(); self.len()];
        let mut parent_of = Vec::with_capacity(n);
        for (i, (code, child, parent)) in cands.iter().enumerate() {
            lattice.extend_from_slice(child);
            for a in 0..dim {
                centers.push(self.bbox.min[a] + (child[a] as f64 + 0.5) * h2);
            }
            lookup.insert(*code, i as u32);
            children[*parent as usize].push(i as u32);
            parent_of.push(*parent);
        }
        let fine = Arc::new(Grid {
            dim,
            spacing: h2,
            level: self.level + 1,
            bbox: self.bbox.clone(),
            axis_cells: fine_axis,
            strides: fine_strides,
            lattice,
            centers,
            lookup,
            mask: self.mask.clone(),
            mask_id: self.mask_id.clone(),
        });
        let map = ChildMap {
            parent_level: self.level,
            children,
            parent_of,
        };
        Ok((fine, map))
    }

    /// Indices of all cells within Chebyshev distance `radius * h` of the
    /// given cell, the cell itself included.
    pub fn neighbors(&self, index: usize, radius: u32) -> Result<Vec<u32>> {
        if index >= self.len() {
            return Err(Error::InvalidIndex {
                index,
                size: self.len(),
            });
        }
        let dim = self.dim;
        let r = radius as i64;
        let base = &self.lattice[index * dim..(index + 1) * dim];
        let mut out = Vec::new();
        let mut off = vec![-r; dim];
        let mut idx = vec![0i64; dim];
        'outer: loop {
            let mut ok = true;
            for a in 0..dim {
                idx[a] = base[a] + off[a];
                if idx[a] < 0 || idx[a] >= self.axis_cells[a] {
                    ok = false;
                    break;
                }
            }
            if ok {
                if let Some(i) = self.index_of(&idx) {
                    out.push(i);
                }
            }
            let mut a = dim;
            loop {
                if a == 0 {
                    break 'outer;
                }
                a -= 1;
                off[a] += 1;
                if off[a] <= r {
                    break;
                }
                off[a] = -r;
            }
        }
        Ok(out)
    }

    /// Neighbor lists for every cell at the given radius.
    pub fn neighbor_table(&self, radius: u32) -> Vec<Vec<u32>> {
        (0..self.len())
            .map(|i| self.neighbors(i, radius).expect("index in range"))
            .collect()
    }

    pub fn index_of(&self, lattice_idx: &[i64]) -> Option<u32> {
        debug_assert_eq!(lattice_idx.len(), self.dim);
        for a in 0..self.dim {
            if lattice_idx[a] < 0 || lattice_idx[a] >= self.axis_cells[a] {
                return None;
            }
        }
        let code: u64 = (0..self.dim)
            .map(|a| lattice_idx[a] as u64 * self.strides[a])
            .sum();
        self.lookup.get(&code).copied()
    }

    pub fn len(&self) -> usize {
        self.centers.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn bbox(&self) -> &BBox {
        &self.bbox
    }

    pub fn axis_cells(&self) -> &[i64] {
        &self.axis_cells
    }

    pub fn mask_id(&self) -> &str {
        &self.mask_id
    }

    pub fn mask(&self) -> &MaskFn {
        &self.mask
    }

    pub fn center(&self, index: usize) -> &[f64] {
        &self.centers[index * self.dim..(index + 1) * self.dim]
    }

    pub fn lattice_index(&self, index: usize) -> &[i64] {
        &self.lattice[index * self.dim..(index + 1) * self.dim]
    }

    /// Cell volume `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }
}

/// Mask admitting the whole bounding box.
pub fn full_mask() -> MaskFn {
    Arc::new(|_: &[f64]| true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_square(h: f64) -> Arc<Grid> {
        Grid::build(full_mask(), &BBox::rect(0.0, 1.0, 0.0, 1.0), h, "unit-square").unwrap()
    }

    #[test]
    fn full_box_half_spacing_has_four_centers() {
        let g = unit_square(0.5);
        assert_eq!(g.len(), 4);
        let centers: Vec<Vec<f64>> = (0..4).map(|i| g.center(i).to_vec()).collect();
        assert_eq!(
            centers,
            vec![
                vec![0.25, 0.25],
                vec![0.25, 0.75],
                vec![0.75, 0.25],
                vec![0.75, 0.75]
            ]
        );
    }

    #[test]
    fn unit_diameter_disc_coarse_cell_is_origin() {
        let mask: MaskFn = Arc::new(|p: &[f64]| p[0] * p[0] + p[1] * p[1] <= 0.25);
        let g = Grid::build(mask, &BBox::rect(-0.5, 0.5, -0.5, 0.5), 1.0, "disc").unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.center(0), &[0.0, 0.0]);
    }

    fn pacman_mask() -> MaskFn {
        Arc::new(|p: &[f64]| {
            p[0] * p[0] + p[1] * p[1] <= 1.0
                && !(p[1].atan2(p[0]).abs() < std::f64::consts::FRAC_PI_4)
        })
    }

    /// Independent scan: count lattice centers passing the mask directly.
    fn scan_count(h: f64) -> usize {
        let n = (2.0 / h).round() as i64;
        let mask = pacman_mask();
        let mut count = 0;
        for i in 0..n {
            for j in 0..n {
                let p = [-1.0 + (i as f64 + 0.5) * h, -1.0 + (j as f64 + 0.5) * h];
                if (mask)(&p) {
                    count += 1;
                }
            }
        }
        count
    }

    #[test]
    fn pacman_count_matches_direct_scan() {
        let h = 2.0 / 64.0;
        let g = Grid::build(pacman_mask(), &BBox::rect(-1.0, 1.0, -1.0, 1.0), h, "pacman").unwrap();
        assert_eq!(g.len(), scan_count(h));
    }

    #[test]
    fn refine_one_cell_interval() {
        let g = Grid::build(full_mask(), &BBox::new(vec![0.0], vec![1.0]), 1.0, "interval").unwrap();
        let (fine, map) = g.refine().unwrap();
        assert_eq!(fine.len(), 2);
        assert_eq!(fine.center(0), &[0.25]);
        assert_eq!(fine.center(1), &[0.75]);
        assert_eq!(map.children(0), &[0, 1]);
    }

    #[test]
    fn refine_full_square_gives_four_children_each() {
        let g = unit_square(0.5);
        let (fine, map) = g.refine().unwrap();
        assert_eq!(fine.len(), 16);
        for i in 0..4 {
            assert_eq!(map.children(i).len(), 4);
        }
    }

    /// Scan oracle for refinement: fine cells are exactly the masked
    /// children of coarse masked cells, counted without the Grid machinery.
    #[test]
    fn pacman_refine_matches_child_scan() {
        let h: f64 = 2.0 / 64.0;
        let mask = pacman_mask();
        let n = (2.0 / h).round() as i64;
        let mut expected = 0;
        for i in 0..n {
            for j in 0..n {
                let p = [-1.0 + (i as f64 + 0.5) * h, -1.0 + (j as f64 + 0.5) * h];
                if !(mask)(&p) {
                    continue;
                }
                for di in [-0.25, 0.25] {
                    for dj in [-0.25, 0.25] {
                        let c = [p[0] + di * h, p[1] + dj * h];
                        if (mask)(&c) {
                            expected += 1;
                        }
                    }
                }
            }
        }
        let g = Grid::build(pacman_mask(), &BBox::rect(-1.0, 1.0, -1.0, 1.0), h, "pacman").unwrap();
        let (fine, map) = g.refine().unwrap();
        assert_eq!(fine.len(), expected);
        let total: usize = (0..g.len()).map(|i| map.children(i).len()).sum();
        assert_eq!(total, expected);
    }

    #[test]
    fn refine_then_parent_lookup_is_identity() {
        let h = 2.0 / 16.0;
        let g = Grid::build(pacman_mask(), &BBox::rect(-1.0, 1.0, -1.0, 1.0), h, "pacman").unwrap();
        let (_, map) = g.refine().unwrap();
        for parent in 0..g.len() {
            for &c in map.children(parent) {
                assert_eq!(map.parent_of(c as usize) as usize, parent);
            }
        }
    }

    #[test]
    fn neighbor_counts_on_full_grid() {
        let g = Grid::build(full_mask(), &BBox::rect(0.0, 5.0, 0.0, 5.0), 1.0, "box5").unwrap();
        // interior cell
        let mid = g.index_of(&[2, 2]).unwrap() as usize;
        assert_eq!(g.neighbors(mid, 1).unwrap().len(), 9);
        // corner cell
        let corner = g.index_of(&[0, 0]).unwrap() as usize;
        assert_eq!(g.neighbors(corner, 1).unwrap().len(), 4);
        // radius 2 from the center covers the whole 5x5 grid
        assert_eq!(g.neighbors(mid, 2).unwrap().len(), 25);
        // radius 0 is the singleton
        assert_eq!(g.neighbors(mid, 0).unwrap(), vec![mid as u32]);
    }

    #[test]
    fn neighbors_rejects_bad_index() {
        let g = unit_square(0.5);
        assert!(matches!(
            g.neighbors(99, 1),
            Err(Error::InvalidIndex { .. })
        ));
    }

    #[test]
    fn build_is_deterministic() {
        let a = unit_square(0.125);
        let b = unit_square(0.125);
        assert_eq!(a.centers, b.centers);
        assert_eq!(a.lattice, b.lattice);
    }

    #[test]
    fn empty_mask_is_an_error() {
        let mask: MaskFn = Arc::new(|_: &[f64]| false);
        assert!(matches!(
            Grid::build(mask, &BBox::rect(0.0, 1.0, 0.0, 1.0), 0.25, "nothing"),
            Err(Error::EmptyDomain)
        ));
    }

    proptest! {
        /// j in N(i, r) iff i in N(j, r), on random masks.
        #[test]
        fn neighbors_symmetric(bits in proptest::collection::vec(any::<bool>(), 16), radius in 0u32..3) {
            let grid_bits = bits.clone();
            let mask: MaskFn = Arc::new(move |p: &[f64]| {
                let i = (p[0] * 4.0).floor().clamp(0.0, 3.0) as usize;
                let j = (p[1] * 4.0).floor().clamp(0.0, 3.0) as usize;
                grid_bits[i * 4 + j]
            });
            let Ok(g) = Grid::build(mask, &BBox::rect(0.0, 1.0, 0.0, 1.0), 0.25, "random-bits") else {
                return Ok(());
            };
            for i in 0..g.len() {
                for &j in &g.neighbors(i, radius).unwrap() {
                    let back = g.neighbors(j as usize, radius).unwrap();
                    prop_assert!(back.contains(&(i as u32)));
                }
            }
        }

        /// Children tile the parent cell: volumes sum to h^d.
        #[test]
        fn child_volumes_tile_parent(seed in 0u64..1000) {
            let r = 0.5 + (seed % 7) as f64 / 16.0;
            let mask: MaskFn = Arc::new(move |p: &[f64]| p[0]*p[0] + p[1]*p[1] <= r*r);
            let g = Grid::build(mask, &BBox::rect(-1.0, 1.0, -1.0, 1.0), 0.25, "disc").unwrap();
            let (fine, map) = g.refine().unwrap();
            for parent in 0..g.len() {
                let k = map.children(parent).len();
                prop_assert!(k <= 4);
                // interior parents keep all children
                let c = g.center(parent);
                let rad = (c[0]*c[0] + c[1]*c[1]).sqrt();
                if rad + 0.25 < r {
                    prop_assert_eq!(k, 4);
                    let vol: f64 = k as f64 * fine.cell_volume();
                    prop_assert!((vol - g.cell_volume()).abs() < 1e-12);
                }
            }
        }
    }
}
