//! Periodic triangulations of the flat 2-torus minus disks around the link
//! points, region windows, and point location.
//!
//! The background is a uniform grid of squares split into two triangles. Around
//! each link point a square block of grid cells is replaced by a structured
//! O-grid: rays from the hole circle to the block-boundary grid nodes, with
//! geometrically graded layers. Each quadrilateral is split along its shorter
//! diagonal. For `eps = 0` the block is only inserted when core refinement is
//! requested, in which case the O-grid continues inward through 2:1 coarsening
//! rings to a centre vertex.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use thiserror::Error;

use crate::geometry::{min_image, wrap_coord, Link, LinkComponent, ManifoldModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("meshing is two-dimensional; reduce 3-D problems to transverse slices first")]
    NotPlanar,
    #[error("mesh size {h} must be positive and at most period/16 = {limit}")]
    BadMeshSize { h: f64, limit: f64 },
    #[error("hole radius {eps} must lie in [0, {bound})")]
    BadRadius { eps: f64, bound: f64 },
    #[error("hole blocks around components {0} and {1} overlap")]
    BlocksOverlap(usize, usize),
    #[error("hole block of {cells} cells does not fit a period of {available} cells; h too coarse for eps")]
    BlockTooLarge { cells: usize, available: usize },
    #[error("empty window")]
    EmptyWindow,
    #[error("invalid window: {0}")]
    BadWindow(String),
    #[error("mesh invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, MeshError>;

/// Ordered vertex cycle on the circle bounding one hole.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryLoop {
    pub component: usize,
    pub center: [f64; 2],
    pub radius: f64,
    pub vertices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    /// `None` for planar meshes (no identifications).
    periods: Option<[f64; 2]>,
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    /// Lattice shift of each triangle corner: the corner sits at
    /// `vertices[v] + shift * period`.
    shifts: Vec<[[i32; 2]; 3]>,
    boundary_loops: Vec<BoundaryLoop>,
    h: f64,
    epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshOptions {
    /// Lower bound on the half-width of each hole block, in grid cells.
    pub min_block_half_cells: usize,
    /// For `eps = 0`: refine towards each link point down to this spacing.
    pub core_spacing: Option<f64>,
}

impl Default for MeshOptions {
    fn default() -> Self {
        Self {
            min_block_half_cells: 4,
            core_spacing: None,
        }
    }
}

/// Mesh of `M \ T(eps)` with background size `h`.
pub fn build_mesh(model: &ManifoldModel, link: &Link, eps: f64, h: f64) -> Result<Mesh> {
    build_mesh_with(model, link, eps, h, &MeshOptions::default())
}

pub fn build_mesh_with(
    model: &ManifoldModel,
    link: &Link,
    eps: f64,
    h: f64,
    opts: &MeshOptions,
) -> Result<Mesh> {
    if model.dimension() != 2 || link.dimension() != 2 {
        return Err(MeshError::NotPlanar);
    }
    let p = [model.periods()[0], model.periods()[1]];
    let limit = p[0].min(p[1]) / 16.0;
    if !(h > 0.0 && h <= limit) {
        return Err(MeshError::BadMeshSize { h, limit });
    }
    if !(eps >= 0.0 && eps < link.radius_bound()) {
        return Err(MeshError::BadRadius {
            eps,
            bound: link.radius_bound(),
        });
    }
    let nx = (p[0] / h).ceil() as usize;
    let ny = (p[1] / h).ceil() as usize;
    let dx = p[0] / nx as f64;
    let dy = p[1] / ny as f64;
    let mut b = Builder::new(p, nx, ny, dx, dy);

    let refine = eps > 0.0 || opts.core_spacing.is_some();
    let mut blocks = Vec::new();
    if refine {
        let cell = dx.min(dy);
        let inner = if eps > 0.0 {
            eps
        } else {
            opts.core_spacing.unwrap_or(cell / 4.0)
        };
        let mut m = opts
            .min_block_half_cells
            .max(4)
            .max((1.5 * eps / cell + 1.0).ceil() as usize);
        if eps == 0.0 {
            // coarsening halves the ray count, so keep 8m a power of two
            m = m.next_power_of_two();
        }
        let available = nx.min(ny);
        if 2 * m + 2 > available {
            return Err(MeshError::BlockTooLarge {
                cells: 2 * m,
                available,
            });
        }
        for (k, comp) in link.components().iter().enumerate() {
            let LinkComponent::Point { position } = *comp else {
                return Err(MeshError::NotPlanar);
            };
            let ic = (position[0] / dx).round() as i64;
            let jc = (position[1] / dy).round() as i64;
            blocks.push(Block {
                component: k,
                center: position,
                ic,
                jc,
                m: m as i64,
                inner,
            });
        }
        for a in 0..blocks.len() {
            for c in a + 1..blocks.len() {
                let di = periodic_index_gap(blocks[a].ic, blocks[c].ic, nx as i64);
                let dj = periodic_index_gap(blocks[a].jc, blocks[c].jc, ny as i64);
                let need = 2 * blocks[a].m + 1;
                if di < need && dj < need {
                    return Err(MeshError::BlocksOverlap(blocks[a].component, blocks[c].component));
                }
            }
        }
    }
    for blk in &blocks {
        b.mark_block(blk);
    }
    b.background_triangles();
    for blk in &blocks {
        let core = if eps > 0.0 { None } else { opts.core_spacing };
        b.block_triangles(blk, eps > 0.0, core);
    }
    Ok(b.finish(h, eps))
}

fn periodic_index_gap(a: i64, b: i64, n: i64) -> i64 {
    let d = (a - b).rem_euclid(n);
    d.min(n - d)
}

struct Block {
    component: usize,
    center: [f64; 2],
    ic: i64,
    jc: i64,
    m: i64,
    /// Radius of the innermost O-grid ring.
    inner: f64,
}

struct Builder {
    p: [f64; 2],
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
    cell_blocked: Vec<bool>,
    node_removed: Vec<bool>,
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    shifts: Vec<[[i32; 2]; 3]>,
    loops: Vec<BoundaryLoop>,
}

impl Builder {
    fn new(p: [f64; 2], nx: usize, ny: usize, dx: f64, dy: f64) -> Self {
        let mut vertices = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                vertices.push([i as f64 * dx, j as f64 * dy]);
            }
        }
        Self {
            p,
            nx,
            ny,
            dx,
            dy,
            cell_blocked: vec![false; nx * ny],
            node_removed: vec![false; nx * ny],
            vertices,
            triangles: Vec::new(),
            shifts: Vec::new(),
            loops: Vec::new(),
        }
    }

    /// Grid node id and lattice shift for unwrapped indices.
    fn node(&self, i: i64, j: i64) -> (usize, [i32; 2]) {
        let (nx, ny) = (self.nx as i64, self.ny as i64);
        let (wi, wj) = (i.rem_euclid(nx), j.rem_euclid(ny));
        (
            (wj * nx + wi) as usize,
            [i.div_euclid(nx) as i32, j.div_euclid(ny) as i32],
        )
    }

    fn mark_block(&mut self, blk: &Block) {
        let m = blk.m;
        for j in blk.jc - m..blk.jc + m {
            for i in blk.ic - m..blk.ic + m {
                let (id, _) = self.node(i, j);
                self.cell_blocked[id] = true;
            }
        }
        for j in blk.jc - m + 1..blk.jc + m {
            for i in blk.ic - m + 1..blk.ic + m {
                let (id, _) = self.node(i, j);
                self.node_removed[id] = true;
            }
        }
    }

    fn background_triangles(&mut self) {
        for j in 0..self.ny as i64 {
            for i in 0..self.nx as i64 {
                let (cell, _) = self.node(i, j);
                if self.cell_blocked[cell] {
                    continue;
                }
                let n00 = self.node(i, j);
                let n10 = self.node(i + 1, j);
                let n11 = self.node(i + 1, j + 1);
                let n01 = self.node(i, j + 1);
                self.push([n00, n10, n11]);
                self.push([n00, n11, n01]);
            }
        }
    }

    fn push(&mut self, corners: [(usize, [i32; 2]); 3]) {
        self.triangles.push([corners[0].0, corners[1].0, corners[2].0]);
        self.shifts.push([corners[0].1, corners[1].1, corners[2].1]);
    }

    /// Adds a vertex given by its unwrapped position.
    fn add_vertex(&mut self, x: [f64; 2]) -> (usize, [i32; 2]) {
        let w = [wrap_coord(x[0], self.p[0]), wrap_coord(x[1], self.p[1])];
        let s = [
            ((x[0] - w[0]) / self.p[0]).round() as i32,
            ((x[1] - w[1]) / self.p[1]).round() as i32,
        ];
        self.vertices.push(w);
        (self.vertices.len() - 1, s)
    }

    fn position(&self, v: (usize, [i32; 2])) -> [f64; 2] {
        let x = self.vertices[v.0];
        [
            x[0] + v.1[0] as f64 * self.p[0],
            x[1] + v.1[1] as f64 * self.p[1],
        ]
    }

    /// Splits quad `a b c d` (counter-clockwise) along its shorter diagonal.
    fn push_quad(&mut self, q: [(usize, [i32; 2]); 4]) {
        let x: Vec<[f64; 2]> = q.iter().map(|&v| self.position(v)).collect();
        let d02 = dist(x[0], x[2]);
        let d13 = dist(x[1], x[3]);
        if d02 <= d13 {
            self.push([q[0], q[1], q[2]]);
            self.push([q[0], q[2], q[3]]);
        } else {
            self.push([q[0], q[1], q[3]]);
            self.push([q[1], q[2], q[3]]);
        }
    }

    fn block_triangles(&mut self, blk: &Block, hole: bool, core: Option<f64>) {
        let m = blk.m;
        let c = blk.center;
        // unwrapped centre consistent with the block's grid indices
        let cu = [
            c[0] + self.p[0] * ((blk.ic as f64 * self.dx - c[0]) / self.p[0]).round(),
            c[1] + self.p[1] * ((blk.jc as f64 * self.dy - c[1]) / self.p[1]).round(),
        ];
        // block-boundary nodes, counter-clockwise from the middle of the right side
        let mut ring: Vec<(i64, i64)> = Vec::with_capacity(8 * m as usize);
        for t in 0..=m {
            ring.push((blk.ic + m, blk.jc + t));
        }
        for t in 1..=2 * m {
            ring.push((blk.ic + m - t, blk.jc + m));
        }
        for t in 1..=2 * m {
            ring.push((blk.ic - m, blk.jc + m - t));
        }
        for t in 1..=2 * m {
            ring.push((blk.ic - m + t, blk.jc - m));
        }
        for t in 1..m {
            ring.push((blk.ic + m, blk.jc - m + t));
        }
        let nr = ring.len();
        let outer: Vec<(usize, [i32; 2])> = ring.iter().map(|&(i, j)| self.node(i, j)).collect();
        let outer_pos: Vec<[f64; 2]> = ring
            .iter()
            .map(|&(i, j)| [i as f64 * self.dx, j as f64 * self.dy])
            .collect();
        let dtheta = 2.0 * PI / nr as f64;
        let phi0 = (outer_pos[0][1] - cu[1]).atan2(outer_pos[0][0] - cu[0]);
        let alpha: Vec<f64> = (0..nr).map(|k| phi0 + k as f64 * dtheta).collect();
        let phi: Vec<f64> = (0..nr)
            .map(|k| {
                let raw = (outer_pos[k][1] - cu[1]).atan2(outer_pos[k][0] - cu[0]);
                alpha[k] + min_image(raw - alpha[k], 2.0 * PI)
            })
            .collect();
        let dist_out: Vec<f64> = outer_pos.iter().map(|&x| dist(x, cu)).collect();
        let mean_out = dist_out.iter().sum::<f64>() / nr as f64;
        let layers = (((mean_out / blk.inner).ln() / (1.0 + dtheta).ln()).round() as usize).max(2);

        // layers 0..layers-1 are new vertices; layer `layers` is the block boundary
        let mut grid: Vec<Vec<(usize, [i32; 2])>> = Vec::with_capacity(layers + 1);
        for l in 0..layers {
            let t = l as f64 / layers as f64;
            let w = t * t;
            let row = (0..nr)
                .map(|k| {
                    let ang = (1.0 - w) * alpha[k] + w * phi[k];
                    let r = blk.inner * (dist_out[k] / blk.inner).powf(t);
                    self.add_vertex([cu[0] + r * ang.cos(), cu[1] + r * ang.sin()])
                })
                .collect();
            grid.push(row);
        }
        grid.push(outer);
        for l in 0..layers {
            for k in 0..nr {
                let k1 = (k + 1) % nr;
                self.push_quad([grid[l][k], grid[l + 1][k], grid[l + 1][k1], grid[l][k1]]);
            }
        }
        if hole {
            self.loops.push(BoundaryLoop {
                component: blk.component,
                center: blk.center,
                radius: blk.inner,
                vertices: grid[0].iter().map(|v| v.0).collect(),
            });
        } else if let Some(spacing) = core {
            self.core(cu, phi0, blk.inner, grid[0].clone(), spacing);
        }
    }

    /// Fills the disk inside the innermost O-grid ring, halving the vertex
    /// count ring by ring down to eight and closing with a centre fan.
    fn core(&mut self, cu: [f64; 2], phi0: f64, mut radius: f64, mut ring: Vec<(usize, [i32; 2])>, spacing: f64) {
        let mut count = ring.len();
        let ring_at = |b: &mut Builder, count: usize, radius: f64| -> Vec<(usize, [i32; 2])> {
            (0..count)
                .map(|k| {
                    let a = phi0 + 2.0 * PI * k as f64 / count as f64;
                    b.add_vertex([cu[0] + radius * a.cos(), cu[1] + radius * a.sin()])
                })
                .collect()
        };
        loop {
            // shrink at constant count while the spacing exceeds the target
            let dth = 2.0 * PI / count as f64;
            while radius * dth > spacing * 1.05 {
                let r_in = radius * (1.0 - dth).max(0.5);
                let inner = ring_at(self, count, r_in);
                for k in 0..count {
                    let k1 = (k + 1) % count;
                    self.push_quad([inner[k], ring[k], ring[k1], inner[k1]]);
                }
                ring = inner;
                radius = r_in;
            }
            if count <= 8 {
                break;
            }
            // 2:1 coarsening band
            let half = count / 2;
            let r_in = radius * (1.0 - PI / half as f64);
            let inner = ring_at(self, half, r_in);
            for k in 0..half {
                let k1 = (k + 1) % half;
                let (a0, a1) = (inner[k], inner[k1]);
                let (o0, o1, o2) = (ring[2 * k], ring[2 * k + 1], ring[(2 * k + 2) % count]);
                self.push([a0, o0, o1]);
                self.push([a0, o1, a1]);
                self.push([a1, o1, o2]);
            }
            ring = inner;
            radius = r_in;
            count = half;
        }
        let centre = self.add_vertex(cu);
        for k in 0..count {
            let k1 = (k + 1) % count;
            self.push([centre, ring[k], ring[k1]]);
        }
    }

    fn finish(self, h: f64, eps: f64) -> Mesh {
        // drop grid nodes swallowed by blocks and renumber
        let nv = self.vertices.len();
        let mut new_id = vec![usize::MAX; nv];
        let mut vertices = Vec::with_capacity(nv);
        for (v, x) in self.vertices.iter().enumerate() {
            let removed = v < self.node_removed.len() && self.node_removed[v];
            if !removed {
                new_id[v] = vertices.len();
                vertices.push(*x);
            }
        }
        let triangles = self
            .triangles
            .iter()
            .map(|t| [new_id[t[0]], new_id[t[1]], new_id[t[2]]])
            .collect();
        let boundary_loops = self
            .loops
            .into_iter()
            .map(|mut l| {
                for v in &mut l.vertices {
                    *v = new_id[*v];
                }
                l
            })
            .collect();
        Mesh {
            periods: Some(self.p),
            vertices,
            triangles,
            shifts: self.shifts,
            boundary_loops,
            h,
            epsilon: eps,
        }
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn signed_area(x: &[[f64; 2]; 3]) -> f64 {
    0.5 * ((x[1][0] - x[0][0]) * (x[2][1] - x[0][1]) - (x[2][0] - x[0][0]) * (x[1][1] - x[0][1]))
}

impl Mesh {
    /// Planar log-polar annulus `eps <= |x - center| <= r0` with staggered
    /// rings of constant vertex count `max(8, ceil(2 pi eps / h))`.
    pub fn annulus(center: [f64; 2], eps: f64, r0: f64, h: f64) -> Result<Mesh> {
        if !(eps > 0.0 && r0 > eps) {
            return Err(MeshError::BadRadius { eps, bound: r0 });
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(MeshError::BadMeshSize { h, limit: eps });
        }
        let n = ((2.0 * PI * eps / h).ceil() as usize).max(8);
        let dth = 2.0 * PI / n as f64;
        let layers = ((r0 / eps).ln() / (1.0 + dth).ln()).ceil().max(1.0) as usize;
        let mut vertices = Vec::with_capacity(n * (layers + 1));
        for i in 0..=layers {
            let r = if i == layers {
                r0
            } else {
                eps * (r0 / eps).powf(i as f64 / layers as f64)
            };
            let off = if i % 2 == 1 { 0.5 } else { 0.0 };
            for k in 0..n {
                let a = (k as f64 + off) * dth;
                vertices.push([center[0] + r * a.cos(), center[1] + r * a.sin()]);
            }
        }
        let id = |i: usize, k: usize| i * n + k % n;
        let mut triangles = Vec::with_capacity(2 * n * layers);
        for i in 0..layers {
            for k in 0..n {
                let pair = if i % 2 == 0 {
                    // outer ring offset by half a step
                    [
                        [id(i, k), id(i, k + 1), id(i + 1, k)],
                        [id(i, k + 1), id(i + 1, k + 1), id(i + 1, k)],
                    ]
                } else {
                    [
                        [id(i, k), id(i + 1, k + 1), id(i + 1, k)],
                        [id(i, k), id(i, k + 1), id(i + 1, k + 1)],
                    ]
                };
                for mut t in pair {
                    let x = [vertices[t[0]], vertices[t[1]], vertices[t[2]]];
                    if signed_area(&x) < 0.0 {
                        t.swap(1, 2);
                    }
                    triangles.push(t);
                }
            }
        }
        let nt = triangles.len();
        Ok(Mesh {
            periods: None,
            vertices,
            triangles,
            shifts: vec![[[0; 2]; 3]; nt],
            boundary_loops: vec![
                BoundaryLoop {
                    component: 0,
                    center,
                    radius: eps,
                    vertices: (0..n).collect(),
                },
                BoundaryLoop {
                    component: 0,
                    center,
                    radius: r0,
                    vertices: (layers * n..(layers + 1) * n).collect(),
                },
            ],
            h,
            epsilon: eps,
        })
    }

    pub fn periods(&self) -> Option<[f64; 2]> {
        self.periods
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_loops(&self) -> &[BoundaryLoop] {
        &self.boundary_loops
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Geometrically consistent corner positions of triangle `t`.
    pub fn corners(&self, t: usize) -> [[f64; 2]; 3] {
        let tri = self.triangles[t];
        let s = self.shifts[t];
        let p = self.periods.unwrap_or([0.0, 0.0]);
        std::array::from_fn(|k| {
            let x = self.vertices[tri[k]];
            [x[0] + s[k][0] as f64 * p[0], x[1] + s[k][1] as f64 * p[1]]
        })
    }

    pub fn area(&self, t: usize) -> f64 {
        signed_area(&self.corners(t))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.area(t)).sum()
    }

    /// Barycentre of triangle `t`, wrapped into the chart.
    pub fn barycenter(&self, t: usize) -> [f64; 2] {
        let c = self.corners(t);
        let b = [(c[0][0] + c[1][0] + c[2][0]) / 3.0, (c[0][1] + c[1][1] + c[2][1]) / 3.0];
        self.wrap(b)
    }

    pub fn wrap(&self, x: [f64; 2]) -> [f64; 2] {
        match self.periods {
            Some(p) => [wrap_coord(x[0], p[0]), wrap_coord(x[1], p[1])],
            None => x,
        }
    }

    fn edge_counts(&self) -> HashMap<(usize, usize), usize> {
        let mut edges = HashMap::with_capacity(3 * self.triangles.len() / 2 + 16);
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        edges
    }

    pub fn num_edges(&self) -> usize {
        self.edge_counts().len()
    }

    /// `V - E + F`.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.num_edges() as i64 + self.triangles.len() as i64
    }

    /// Smallest interior angle over all triangles, in degrees.
    pub fn min_angle_deg(&self) -> f64 {
        let mut worst = 180.0f64;
        for t in 0..self.triangles.len() {
            let x = self.corners(t);
            for k in 0..3 {
                let a = x[k];
                let b = x[(k + 1) % 3];
                let c = x[(k + 2) % 3];
                let u = [b[0] - a[0], b[1] - a[1]];
                let v = [c[0] - a[0], c[1] - a[1]];
                let cos = (u[0] * v[0] + u[1] * v[1]) / (u[0].hypot(u[1]) * v[0].hypot(v[1]));
                worst = worst.min(cos.clamp(-1.0, 1.0).acos().to_degrees());
            }
        }
        worst
    }

    /// Vertices lying on some boundary loop.
    pub fn boundary_flags(&self) -> Vec<bool> {
        let mut flags = vec![false; self.vertices.len()];
        for l in &self.boundary_loops {
            for &v in &l.vertices {
                flags[v] = true;
            }
        }
        flags
    }

    /// Checks conformity, orientation, angle quality and hole geometry.
    pub fn check_invariants(&self, min_angle_deg: f64) -> Result<()> {
        let on_boundary = self.boundary_flags();
        for (&(a, b), &count) in &self.edge_counts() {
            let boundary_edge = on_boundary[a] && on_boundary[b];
            match count {
                2 => {}
                1 if boundary_edge => {}
                _ => {
                    return Err(MeshError::Invariant(format!(
                        "edge ({a}, {b}) is shared by {count} triangles"
                    )))
                }
            }
        }
        for t in 0..self.triangles.len() {
            if self.area(t) <= 0.0 {
                return Err(MeshError::Invariant(format!("triangle {t} has non-positive area")));
            }
        }
        let angle = self.min_angle_deg();
        if angle < min_angle_deg {
            return Err(MeshError::Invariant(format!("minimum angle {angle:.2} deg")));
        }
        for l in &self.boundary_loops {
            for &v in &l.vertices {
                let x = self.vertices[v];
                let d = match self.periods {
                    Some(p) => min_image(x[0] - l.center[0], p[0]).hypot(min_image(x[1] - l.center[1], p[1])),
                    None => dist(x, l.center),
                };
                if (d - l.radius).abs() > 1e-10 {
                    return Err(MeshError::Invariant(format!(
                        "boundary vertex {v} at distance {d} from its centre, expected {}",
                        l.radius
                    )));
                }
            }
        }
        Ok(())
    }

    /// Plain-text dump with `VERTICES`, `TRIANGLES` and `BOUNDARY` sections.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("VERTICES\n");
        for (i, x) in self.vertices.iter().enumerate() {
            let _ = writeln!(s, "{i} {:.17e} {:.17e}", x[0], x[1]);
        }
        s.push_str("TRIANGLES\n");
        for t in &self.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        s.push_str("BOUNDARY\n");
        for (id, l) in self.boundary_loops.iter().enumerate() {
            let list: Vec<String> = l.vertices.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{id} {}", list.join(" "));
        }
        s
    }
}

/// The measurement set `V`.
#[derive(Debug, Clone, PartialEq)]
pub enum RegionWindow {
    Whole,
    /// `inner <= dist(x, S_component) <= outer`.
    Annulus {
        component: usize,
        inner: f64,
        outer: f64,
    },
    /// Periodic box `lo <= x <= hi` (taken modulo the periods).
    Box { lo: [f64; 2], hi: [f64; 2] },
}

impl RegionWindow {
    pub fn validate(&self, link: &Link) -> Result<()> {
        match *self {
            RegionWindow::Whole => Ok(()),
            RegionWindow::Annulus {
                component,
                inner,
                outer,
            } => {
                if component >= link.len() {
                    return Err(MeshError::BadWindow(format!("no component {component}")));
                }
                if !(inner >= 0.0 && outer > inner) {
                    return Err(MeshError::EmptyWindow);
                }
                Ok(())
            }
            RegionWindow::Box { lo, hi } => {
                let p = link.model().periods();
                for a in 0..2 {
                    if !(hi[a] > lo[a]) {
                        return Err(MeshError::EmptyWindow);
                    }
                    if hi[a] - lo[a] > p[a] {
                        return Err(MeshError::BadWindow("box wider than the period".into()));
                    }
                    if !(lo[a].is_finite() && lo[a] >= 0.0 && lo[a] < p[a]) {
                        return Err(MeshError::BadWindow("box corner outside the chart".into()));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn contains(&self, link: &Link, x: &[f64]) -> bool {
        match *self {
            RegionWindow::Whole => true,
            RegionWindow::Annulus {
                component,
                inner,
                outer,
            } => {
                let d = link.distance_to(component, x);
                d >= inner && d <= outer
            }
            RegionWindow::Box { lo, hi } => {
                let p = link.model().periods();
                (0..2).all(|a| wrap_coord(x[a] - lo[a], p[a]) <= hi[a] - lo[a])
            }
        }
    }

    /// Smallest distance from the window to the link (lower bound).
    pub fn distance_to_link(&self, link: &Link) -> f64 {
        match *self {
            RegionWindow::Whole => 0.0,
            RegionWindow::Annulus { component, inner, outer } => {
                // other components may be closer; bound by the gap as well
                let mut d = inner;
                for (j, c) in link.components().iter().enumerate() {
                    if j != component {
                        if let LinkComponent::Point { position } = *c {
                            d = d.min(link.distance_to(component, &position) - outer);
                        }
                    }
                }
                d.max(0.0)
            }
            RegionWindow::Box { lo, hi } => {
                let p = link.model().periods();
                link.components()
                    .iter()
                    .map(|c| {
                        let LinkComponent::Point { position } = *c else {
                            return 0.0;
                        };
                        let mut d2 = 0.0;
                        for a in 0..2 {
                            let t = wrap_coord(position[a] - lo[a], p[a]);
                            let w = hi[a] - lo[a];
                            let gap = if t <= w { 0.0 } else { (t - w).min(p[a] - t) };
                            d2 += gap * gap;
                        }
                        d2.sqrt()
                    })
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Exact area of the window, when it lies in the meshed region.
    pub fn area(&self, link: &Link) -> f64 {
        match *self {
            RegionWindow::Whole => link.model().volume(),
            RegionWindow::Annulus { inner, outer, .. } => PI * (outer * outer - inner * inner),
            RegionWindow::Box { lo, hi } => (hi[0] - lo[0]) * (hi[1] - lo[1]),
        }
    }
}

/// Triangles whose barycentres lie in the window.
pub fn restrict(mesh: &Mesh, link: &Link, window: &RegionWindow) -> Result<Vec<usize>> {
    window.validate(link)?;
    let out: Vec<usize> = (0..mesh.num_triangles())
        .filter(|&t| window.contains(link, &mesh.barycenter(t)))
        .collect();
    if out.is_empty() {
        return Err(MeshError::EmptyWindow);
    }
    Ok(out)
}

/// Bucket grid over the chart for locating points in a periodic mesh.
#[derive(Debug, Clone)]
pub struct PointLocator {
    periods: [f64; 2],
    nb: [usize; 2],
    buckets: Vec<Vec<usize>>,
}

impl PointLocator {
    pub fn new(mesh: &Mesh) -> Self {
        let p = mesh.periods.unwrap_or_else(|| {
            let mut hi = [0.0f64; 2];
            for x in &mesh.vertices {
                hi[0] = hi[0].max(x[0].abs());
                hi[1] = hi[1].max(x[1].abs());
            }
            [hi[0] * 2.0 + 1.0, hi[1] * 2.0 + 1.0]
        });
        let nb = [
            ((p[0] / mesh.h).ceil() as usize).clamp(1, 4096),
            ((p[1] / mesh.h).ceil() as usize).clamp(1, 4096),
        ];
        let mut buckets = vec![Vec::new(); nb[0] * nb[1]];
        for t in 0..mesh.num_triangles() {
            let c = mesh.corners(t);
            let lo = [
                c.iter().map(|x| x[0]).fold(f64::INFINITY, f64::min),
                c.iter().map(|x| x[1]).fold(f64::INFINITY, f64::min),
            ];
            let hi = [
                c.iter().map(|x| x[0]).fold(f64::NEG_INFINITY, f64::max),
                c.iter().map(|x| x[1]).fold(f64::NEG_INFINITY, f64::max),
            ];
            let b0 = [
                (lo[0] / p[0] * nb[0] as f64).floor() as i64,
                (lo[1] / p[1] * nb[1] as f64).floor() as i64,
            ];
            let b1 = [
                (hi[0] / p[0] * nb[0] as f64).floor() as i64,
                (hi[1] / p[1] * nb[1] as f64).floor() as i64,
            ];
            for bj in b0[1]..=b1[1] {
                for bi in b0[0]..=b1[0] {
                    let wi = bi.rem_euclid(nb[0] as i64) as usize;
                    let wj = bj.rem_euclid(nb[1] as i64) as usize;
                    let cell = &mut buckets[wj * nb[0] + wi];
                    if cell.last() != Some(&t) {
                        cell.push(t);
                    }
                }
            }
        }
        Self {
            periods: p,
            nb,
            buckets,
        }
    }

    /// Containing triangle and barycentric coordinates of `x`.
    pub fn locate(&self, mesh: &Mesh, x: [f64; 2]) -> Option<(usize, [f64; 3])> {
        let p = self.periods;
        let w = [wrap_coord(x[0], p[0]), wrap_coord(x[1], p[1])];
        let bi = ((w[0] / p[0] * self.nb[0] as f64) as usize).min(self.nb[0] - 1);
        let bj = ((w[1] / p[1] * self.nb[1] as f64) as usize).min(self.nb[1] - 1);
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &t in &self.buckets[bj * self.nb[0] + bi] {
            let c = mesh.corners(t);
            let centroid = [(c[0][0] + c[1][0] + c[2][0]) / 3.0, (c[0][1] + c[1][1] + c[2][1]) / 3.0];
            let q = if mesh.periods.is_some() {
                [
                    w[0] + p[0] * ((centroid[0] - w[0]) / p[0]).round(),
                    w[1] + p[1] * ((centroid[1] - w[1]) / p[1]).round(),
                ]
            } else {
                x
            };
            let bary = barycentric(&c, q);
            let worst = bary.iter().copied().fold(f64::INFINITY, f64::min);
            if best.as_ref().is_none_or(|b| worst > b.2) {
                best = Some((t, bary, worst));
            }
        }
        best.filter(|b| b.2 >= -1e-9).map(|b| (b.0, b.1))
    }
}

pub fn barycentric(c: &[[f64; 2]; 3], q: [f64; 2]) -> [f64; 3] {
    let det = (c[1][0] - c[0][0]) * (c[2][1] - c[0][1]) - (c[2][0] - c[0][0]) * (c[1][1] - c[0][1]);
    let l1 = ((q[0] - c[0][0]) * (c[2][1] - c[0][1]) - (c[2][0] - c[0][0]) * (q[1] - c[0][1])) / det;
    let l2 = ((c[1][0] - c[0][0]) * (q[1] - c[0][1]) - (q[0] - c[0][0]) * (c[1][1] - c[0][1])) / det;
    [1.0 - l1 - l2, l1, l2]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2() -> ManifoldModel {
        ManifoldModel::standard(2).unwrap()
    }

    fn one_point() -> Link {
        Link::single_point(&t2(), [PI, PI]).unwrap()
    }

    fn two_points() -> Link {
        Link::new(
            &t2(),
            vec![
                LinkComponent::Point { position: [1.0, 1.0] },
                LinkComponent::Point { position: [4.0, 4.5] },
            ],
            None,
        )
        .unwrap()
    }

    #[test]
    fn euler_characteristics() {
        let m = build_mesh(&t2(), &one_point(), 0.0, 0.2).unwrap();
        assert_eq!(m.euler_characteristic(), 0);
        m.check_invariants(20.0).unwrap();
        let m = build_mesh(&t2(), &one_point(), 0.1, 0.2).unwrap();
        assert_eq!(m.euler_characteristic(), -1);
        m.check_invariants(20.0).unwrap();
        let m = build_mesh(&t2(), &two_points(), 0.1, 0.2).unwrap();
        assert_eq!(m.euler_characteristic(), -2);
        m.check_invariants(20.0).unwrap();
        assert_eq!(m.boundary_loops().len(), 2);
    }

    #[test]
    fn quality_over_a_range_of_radii() {
        let link = one_point();
        for h in [0.1, 0.05, 0.025] {
            for eps in [0.0125, 0.025, 0.05, 0.1, 0.2, 0.4] {
                let m = build_mesh(&t2(), &link, eps, h).unwrap();
                m.check_invariants(20.0)
                    .unwrap_or_else(|e| panic!("h={h} eps={eps}: {e}"));
                assert_eq!(m.euler_characteristic(), -1);
                // the hole circle is resolved regardless of the background size
                let l = &m.boundary_loops()[0];
                let spacing = 2.0 * PI * eps / l.vertices.len() as f64;
                assert!(spacing <= eps / 4.0);
            }
        }
    }

    #[test]
    fn core_refinement() {
        let link = one_point();
        let opts = MeshOptions {
            core_spacing: Some(0.002),
            ..MeshOptions::default()
        };
        let m = build_mesh_with(&t2(), &link, 0.0, 0.05, &opts).unwrap();
        m.check_invariants(20.0).unwrap();
        assert_eq!(m.euler_characteristic(), 0);
        assert!((m.total_area() - 4.0 * PI * PI).abs() < 1e-9);
        // the link point is a vertex
        assert!(m.vertices().iter().any(|x| dist(*x, [PI, PI]) < 1e-12));
    }

    #[test]
    fn seam_crossing_holes() {
        let link = Link::new(
            &t2(),
            vec![LinkComponent::Point { position: [0.01, 2.0 * PI - 0.02] }],
            None,
        )
        .unwrap();
        let m = build_mesh(&t2(), &link, 0.1, 0.05).unwrap();
        m.check_invariants(20.0).unwrap();
        let want = 4.0 * PI * PI - PI * 0.01;
        assert!((m.total_area() - want).abs() < 2e-3);
    }

    #[test]
    fn area_converges_at_second_order() {
        let link = one_point();
        let eps = 0.4;
        let exact = 4.0 * PI * PI - PI * eps * eps;
        let errs: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&h| (build_mesh(&t2(), &link, eps, h).unwrap().total_area() - exact).abs())
            .collect();
        let rate = (errs[0] / errs[2]).log2() / 2.0;
        assert!(rate > 1.5, "{errs:?}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let link = one_point();
        assert!(matches!(build_mesh(&t2(), &link, 0.1, 0.5), Err(MeshError::BadMeshSize { .. })));
        assert!(matches!(build_mesh(&t2(), &link, 1.0, 0.1), Err(MeshError::BadRadius { .. })));
        let close = Link::new(
            &t2(),
            vec![
                LinkComponent::Point { position: [1.0, 1.0] },
                LinkComponent::Point { position: [1.3, 1.0] },
            ],
            None,
        )
        .unwrap();
        assert!(matches!(
            build_mesh(&t2(), &close, 0.1, 0.05),
            Err(MeshError::BlocksOverlap(0, 1))
        ));
        let t3 = ManifoldModel::standard(3).unwrap();
        assert!(matches!(build_mesh(&t3, &link, 0.1, 0.1), Err(MeshError::NotPlanar)));
    }

    #[test]
    fn reproducible_connectivity() {
        let a = build_mesh(&t2(), &two_points(), 0.05, 0.1).unwrap();
        let b = build_mesh(&t2(), &two_points(), 0.05, 0.1).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        let text = a.to_text();
        assert!(text.starts_with("VERTICES\n0 "));
        assert!(text.contains("\nTRIANGLES\n") && text.contains("\nBOUNDARY\n0 "));
    }

    #[test]
    fn windows() {
        let link = one_point();
        let m = build_mesh(&t2(), &link, 0.0, 0.05).unwrap();
        assert_eq!(restrict(&m, &link, &RegionWindow::Whole).unwrap().len(), m.num_triangles());
        let bad = RegionWindow::Annulus { component: 0, inner: 0.5, outer: 0.4 };
        assert_eq!(restrict(&m, &link, &bad), Err(MeshError::EmptyWindow));
        for w in [
            RegionWindow::Annulus { component: 0, inner: 0.5, outer: 1.5 },
            RegionWindow::Box { lo: [4.4, 2.6], hi: [5.6, 3.7] },
            RegionWindow::Box { lo: [5.0, 5.0], hi: [7.5, 7.0] },
        ] {
            let tris = restrict(&m, &link, &w).unwrap();
            let area: f64 = tris.iter().map(|&t| m.area(t)).sum();
            let want = w.area(&link);
            assert!((area - want).abs() <= 0.02 * want, "{w:?}: {area} vs {want}");
        }
        let b = RegionWindow::Box { lo: [4.4, 2.6], hi: [5.6, 3.7] };
        assert!((b.distance_to_link(&link) - (4.4 - PI)).abs() < 1e-12);
    }

    #[test]
    fn locator_finds_vertices_and_interior_points() {
        let link = two_points();
        let m = build_mesh(&t2(), &link, 0.1, 0.1).unwrap();
        let loc = PointLocator::new(&m);
        for (v, x) in m.vertices().iter().enumerate().step_by(37) {
            let (t, bary) = loc.locate(&m, *x).unwrap();
            let k = m.triangles()[t].iter().position(|&u| u == v).unwrap();
            assert!((bary[k] - 1.0).abs() < 1e-9);
        }
        for t in (0..m.num_triangles()).step_by(53) {
            let b = m.barycenter(t);
            let (found, bary) = loc.locate(&m, b).unwrap();
            assert_eq!(found, t);
            assert!(bary.iter().all(|&l| (l - 1.0 / 3.0).abs() < 1e-9));
        }
        // inside a hole
        assert!(loc.locate(&m, [1.0, 1.0]).is_none());
    }

    #[test]
    fn annulus_mesh() {
        let m = Mesh::annulus([0.0, 0.0], 0.05, 0.5, 0.05 / 8.0).unwrap();
        m.check_invariants(20.0).unwrap();
        assert_eq!(m.euler_characteristic(), 0);
        let exact = PI * (0.25 - 0.0025);
        // inscribed polygons lose (2 pi / n)^2 / 6 of the area
        assert!((m.total_area() - exact).abs() < 5e-3 * exact);
    }
}
