//! Regular 1-, 2- or 3-D voxel grids with an activity mask and first-order
//! (4- / 6-) neighbourhoods with truncated boundaries.

use crate::error::{Error, Result};

const NONE: u32 = u32::MAX;

/// Grid geometry plus the neighbour structure of its active sites.
///
/// Sites are addressed two ways: by *grid index* (raster order, last axis
/// fastest) and by *active index* (position among active sites in raster
/// order). All per-voxel data in this crate is stored by active index.
#[derive(Clone, Debug)]
pub struct Lattice {
    dims: Vec<usize>,
    mask: Vec<bool>,
    active: Vec<u32>,
    grid_to_active: Vec<u32>,
    nbr_start: Vec<u32>,
    nbrs: Vec<u32>,
    color: Vec<u8>,
    color_sites: [Vec<u32>; 2],
}

impl PartialEq for Lattice {
    fn eq(&self, other: &Self) -> bool {
        self.dims == other.dims && self.mask == other.mask
    }
}

impl Lattice {
    /// Fully active grid.
    pub fn grid(dims: &[usize]) -> Result<Self> {
        let n = dims.iter().product();
        Self::with_mask(dims, vec![true; n])
    }

    pub fn with_mask(dims: &[usize], mask: Vec<bool>) -> Result<Self> {
        if dims.is_empty() || dims.len() > 3 || dims.contains(&0) {
            return Err(Error::InvalidConfig(format!("lattice dims must be 1-3 positive extents, got {dims:?}")));
        }
        let n: usize = dims.iter().product();
        if mask.len() != n {
            return Err(Error::LengthMismatch(mask.len(), n));
        }
        if n >= NONE as usize {
            return Err(Error::InvalidConfig("lattice too large".into()));
        }

        let mut active = Vec::new();
        let mut grid_to_active = vec![NONE; n];
        for (g, &on) in mask.iter().enumerate() {
            if on {
                grid_to_active[g] = active.len() as u32;
                active.push(g as u32);
            }
        }

        let strides = strides(dims);
        let mut nbr_start = Vec::with_capacity(active.len() + 1);
        let mut nbrs = Vec::with_capacity(active.len() * 2 * dims.len());
        let mut color = Vec::with_capacity(active.len());
        let mut color_sites = [Vec::new(), Vec::new()];
        for (a, &g) in active.iter().enumerate() {
            nbr_start.push(nbrs.len() as u32);
            let c = coords_of(g as usize, dims);
            for axis in 0..dims.len() {
                if c[axis] > 0 {
                    let u = grid_to_active[g as usize - strides[axis]];
                    if u != NONE {
                        nbrs.push(u);
                    }
                }
                if c[axis] + 1 < dims[axis] {
                    let u = grid_to_active[g as usize + strides[axis]];
                    if u != NONE {
                        nbrs.push(u);
                    }
                }
            }
            let parity = (c.iter().sum::<usize>() % 2) as u8;
            color.push(parity);
            color_sites[parity as usize].push(a as u32);
        }
        nbr_start.push(nbrs.len() as u32);

        Ok(Self { dims: dims.to_vec(), mask, active, grid_to_active, nbr_start, nbrs, color, color_sites })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ndims(&self) -> usize {
        self.dims.len()
    }

    /// Total number of grid sites, active or not.
    pub fn grid_len(&self) -> usize {
        self.mask.len()
    }

    /// Number of active sites.
    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn is_fully_active(&self) -> bool {
        self.active.len() == self.mask.len()
    }

    pub fn active_index(&self, grid: usize) -> Option<usize> {
        match self.grid_to_active.get(grid) {
            Some(&a) if a != NONE => Some(a as usize),
            _ => None,
        }
    }

    pub fn grid_index(&self, active: usize) -> usize {
        self.active[active] as usize
    }

    /// Grid index of a coordinate tuple, if inside the grid.
    pub fn grid_index_of(&self, coords: &[usize]) -> Option<usize> {
        if coords.len() != self.dims.len() || coords.iter().zip(&self.dims).any(|(c, d)| c >= d) {
            return None;
        }
        Some(coords.iter().zip(strides(&self.dims)).map(|(c, s)| c * s).sum())
    }

    /// Coordinates of an active site, padded with zeros to three axes.
    pub fn coords(&self, active: usize) -> [usize; 3] {
        coords_of(self.active[active] as usize, &self.dims)
    }

    /// Neighbours of active site `a`, as active indices.
    #[inline]
    pub fn active_neighbors(&self, a: usize) -> &[u32] {
        &self.nbrs[self.nbr_start[a] as usize..self.nbr_start[a + 1] as usize]
    }

    /// Neighbours of grid site `v`, as grid indices.
    pub fn neighbors(&self, v: usize) -> Result<Vec<usize>> {
        let a = self.active_index(v).ok_or(Error::InactiveSite(v))?;
        Ok(self.active_neighbors(a).iter().map(|&u| self.active[u as usize] as usize).collect())
    }

    /// Undirected edges between active sites, each listed once as `(u, v)`
    /// with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.len()).flat_map(move |a| {
            self.active_neighbors(a).iter().filter(move |&&u| (u as usize) > a).map(move |&u| (a, u as usize))
        })
    }

    pub fn edge_count(&self) -> usize {
        self.nbrs.len() / 2
    }

    /// Two-colouring by coordinate parity; no two neighbours share a colour.
    pub fn color(&self, a: usize) -> u8 {
        self.color[a]
    }

    pub fn sites_of_color(&self, c: u8) -> &[u32] {
        &self.color_sites[c as usize]
    }

    /// Squared Euclidean distance between two active sites.
    pub fn dist_sq(&self, a: usize, b: usize) -> usize {
        let (ca, cb) = (self.coords(a), self.coords(b));
        ca.iter().zip(&cb).map(|(x, y)| x.abs_diff(*y).pow(2)).sum()
    }
}

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

fn coords_of(mut g: usize, dims: &[usize]) -> [usize; 3] {
    let mut c = [0; 3];
    for axis in (0..dims.len()).rev() {
        c[axis] = g % dims[axis];
        g /= dims[axis];
    }
    c
}
