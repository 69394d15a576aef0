//! Cross-section discretization.
//!
//! The cross-section omega is discretized with Dirichlet boundary conditions
//! and the transverse operators are assembled as sparse matrices sharing the
//! grid's index map:
//!
//! * `laplacian_t` — the Dirichlet Laplacian -Delta_t, assembled from the
//!   gradient form so it is symmetric positive definite by construction;
//! * `dphi` — the angular derivative d_phi = x1 d2 - x2 d1.
//!
//! Rectangles, ellipses and polygons use a uniform square lattice with the
//! 5-point stencil (boundary nodes eliminated). A disk centered on the
//! rotation axis is special-cased onto a polar tensor grid: there the discrete
//! operator commutes exactly with the angular shift, so rotational-symmetry
//! cancellations (d_phi of a radial function, the coupling function of a disk)
//! hold at machine precision instead of at stencil accuracy.
//!
//! All matrices act on weight-embedded vectors: a grid function u is
//! represented by u~ = W^{1/2} u with W the diagonal of cell areas, so plain
//! l2 norms and dot products realize the L2(omega) geometry. On the Cartesian
//! lattice W = h^2 I and the convention is invisible.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sparse::CsrMatrix;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("shape has empty or degenerate interior: {0}")]
    DegenerateShape(String),
    #[error("no usable interior grid ({0} nodes, need at least 9); decrease the spacing")]
    EmptyGrid(usize),
}

/// Bounded cross-section shape, positioned relative to the rotation axis at
/// the origin. Rectangles and ellipses are centered at `offset`; polygon
/// vertices are given in absolute coordinates and then shifted by `offset`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CrossSectionShape {
    Rectangle { width: f64, height: f64, #[serde(default)] offset: [f64; 2] },
    Ellipse { a: f64, b: f64, #[serde(default)] offset: [f64; 2] },
    Polygon { vertices: Vec<[f64; 2]>, #[serde(default)] offset: [f64; 2] },
}

impl CrossSectionShape {
    pub fn rectangle(width: f64, height: f64) -> Self {
        CrossSectionShape::Rectangle { width, height, offset: [0.0, 0.0] }
    }

    pub fn ellipse(a: f64, b: f64) -> Self {
        CrossSectionShape::Ellipse { a, b, offset: [0.0, 0.0] }
    }

    pub fn offset(&self) -> [f64; 2] {
        match self {
            CrossSectionShape::Rectangle { offset, .. }
            | CrossSectionShape::Ellipse { offset, .. }
            | CrossSectionShape::Polygon { offset, .. } => *offset,
        }
    }

    /// A disk whose center sits exactly on the rotation axis. Twisting acts
    /// trivially on such a cross-section; callers warn about it.
    pub fn is_centered_disk(&self) -> bool {
        matches!(self, CrossSectionShape::Ellipse { a, b, offset }
            if a == b && offset[0] == 0.0 && offset[1] == 0.0)
    }

    fn validate(&self) -> Result<(), GeometryError> {
        match self {
            CrossSectionShape::Rectangle { width, height, .. } => {
                if !(width.is_finite() && height.is_finite()) || *width <= 0.0 || *height <= 0.0 {
                    return Err(GeometryError::DegenerateShape(format!(
                        "rectangle {width} x {height}"
                    )));
                }
            }
            CrossSectionShape::Ellipse { a, b, .. } => {
                if !(a.is_finite() && b.is_finite()) || *a <= 0.0 || *b <= 0.0 {
                    return Err(GeometryError::DegenerateShape(format!("ellipse {a} x {b}")));
                }
            }
            CrossSectionShape::Polygon { vertices, .. } => {
                if vertices.len() < 3 {
                    return Err(GeometryError::DegenerateShape(
                        "polygon needs at least 3 vertices".into(),
                    ));
                }
                if polygon_area(vertices).abs() < 1e-300 {
                    return Err(GeometryError::DegenerateShape("polygon has zero area".into()));
                }
                if !polygon_is_simple(vertices) {
                    return Err(GeometryError::DegenerateShape(
                        "polygon is self-intersecting".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    fn bbox(&self) -> ([f64; 2], [f64; 2]) {
        match self {
            CrossSectionShape::Rectangle { width, height, offset } => (
                [offset[0] - width / 2.0, offset[1] - height / 2.0],
                [offset[0] + width / 2.0, offset[1] + height / 2.0],
            ),
            CrossSectionShape::Ellipse { a, b, offset } => {
                ([offset[0] - a, offset[1] - b], [offset[0] + a, offset[1] + b])
            }
            CrossSectionShape::Polygon { vertices, offset } => {
                let mut lo = [f64::INFINITY; 2];
                let mut hi = [f64::NEG_INFINITY; 2];
                for v in vertices {
                    for d in 0..2 {
                        lo[d] = lo[d].min(v[d] + offset[d]);
                        hi[d] = hi[d].max(v[d] + offset[d]);
                    }
                }
                (lo, hi)
            }
        }
    }

    /// Strict interior membership.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        match self {
            CrossSectionShape::Rectangle { width, height, offset } => {
                (p[0] - offset[0]).abs() < width / 2.0 && (p[1] - offset[1]).abs() < height / 2.0
            }
            CrossSectionShape::Ellipse { a, b, offset } => {
                let u = (p[0] - offset[0]) / a;
                let v = (p[1] - offset[1]) / b;
                u * u + v * v < 1.0
            }
            CrossSectionShape::Polygon { vertices, offset } => {
                let q = [p[0] - offset[0], p[1] - offset[1]];
                point_in_polygon(q, vertices)
            }
        }
    }

    /// sup over omega of |x_t|^2.
    pub fn moment_bound(&self) -> f64 {
        match self {
            CrossSectionShape::Rectangle { width, height, offset } => {
                let mut m: f64 = 0.0;
                for sx in [-0.5, 0.5] {
                    for sy in [-0.5, 0.5] {
                        let x = offset[0] + sx * width;
                        let y = offset[1] + sy * height;
                        m = m.max(x * x + y * y);
                    }
                }
                m
            }
            CrossSectionShape::Ellipse { a, b, offset } => {
                let n = 4096;
                let mut m: f64 = 0.0;
                for i in 0..n {
                    let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                    let x = offset[0] + a * t.cos();
                    let y = offset[1] + b * t.sin();
                    m = m.max(x * x + y * y);
                }
                m
            }
            CrossSectionShape::Polygon { vertices, offset } => vertices
                .iter()
                .map(|v| {
                    let x = v[0] + offset[0];
                    let y = v[1] + offset[1];
                    x * x + y * y
                })
                .fold(0.0, f64::max),
        }
    }
}

fn polygon_area(vertices: &[[f64; 2]]) -> f64 {
    let n = vertices.len();
    let mut a = 0.0;
    for i in 0..n {
        let p = vertices[i];
        let q = vertices[(i + 1) % n];
        a += p[0] * q[1] - q[0] * p[1];
    }
    a / 2.0
}

fn segments_intersect(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    (d1 * d2 < 0.0) && (d3 * d4 < 0.0)
}

fn polygon_is_simple(vertices: &[[f64; 2]]) -> bool {
    let n = vertices.len();
    for i in 0..n {
        for j in i + 1..n {
            // skip adjacent edges (they share a vertex)
            if j == i || (j + 1) % n == i || (i + 1) % n == j {
                continue;
            }
            if segments_intersect(
                vertices[i],
                vertices[(i + 1) % n],
                vertices[j],
                vertices[(j + 1) % n],
            ) {
                return false;
            }
        }
    }
    true
}

fn point_in_polygon(p: [f64; 2], vertices: &[[f64; 2]]) -> bool {
    let n = vertices.len();
    let mut inside = false;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x_cross = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

/// Grid topology, carrying what the stencil assembly needs.
#[derive(Debug, Clone)]
pub enum GridKind {
    /// Square lattice anchored at the shape's bounding box corner.
    Cartesian {
        cells: Vec<(i64, i64)>,
        lookup: BTreeMap<(i64, i64), usize>,
        origin: [f64; 2],
    },
    /// Polar tensor grid for an exactly centered disk.
    Polar { n_r: usize, n_theta: usize, hr: f64, dtheta: f64 },
}

/// Discretized cross-section: interior nodes, quadrature weights and the
/// coordinate <-> row bijection.
#[derive(Debug, Clone)]
pub struct CrossSectionGrid {
    pub spacing: f64,
    pub nodes: Vec<[f64; 2]>,
    /// Cell areas; the L2(omega) inner product is sum w_i u_i conj(v_i).
    pub weights: Vec<f64>,
    pub kind: GridKind,
    shape: CrossSectionShape,
}

impl CrossSectionGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self) -> &CrossSectionShape {
        &self.shape
    }

    /// Row index of the node at the given coordinates, if present.
    pub fn node_index(&self, p: [f64; 2]) -> Option<usize> {
        match &self.kind {
            GridKind::Cartesian { lookup, origin, .. } => {
                let i = ((p[0] - origin[0]) / self.spacing).round() as i64;
                let j = ((p[1] - origin[1]) / self.spacing).round() as i64;
                lookup.get(&(i, j)).copied()
            }
            GridKind::Polar { .. } => self
                .nodes
                .iter()
                .position(|q| (q[0] - p[0]).hypot(q[1] - p[1]) < 1e-12),
        }
    }

    /// Coordinate list, one `x1 x2 weight` line per node.
    pub fn dump(&self) -> String {
        let mut s = format!("# twistgap grid v1 nodes={} spacing={:.16e}\n", self.len(), self.spacing);
        for (p, w) in self.nodes.iter().zip(&self.weights) {
            s.push_str(&format!("{:.16e} {:.16e} {:.16e}\n", p[0], p[1], w));
        }
        s
    }
}

/// Discretize the cross-section with spacing `h`. Nodes lie strictly inside
/// the shape; ordering is lexicographic by (x2, x1) on the lattice (ring-major
/// on the polar grid), so rebuilt grids are byte-identical.
pub fn build_grid(shape: &CrossSectionShape, h: f64) -> Result<CrossSectionGrid, GeometryError> {
    shape.validate()?;
    if !(h.is_finite() && h > 0.0) {
        return Err(GeometryError::DegenerateShape(format!("spacing {h}")));
    }

    if let CrossSectionShape::Ellipse { a, .. } = shape {
        if shape.is_centered_disk() {
            return build_polar_grid(shape, *a, h);
        }
    }

    let (lo, hi) = shape.bbox();
    let ni = ((hi[0] - lo[0]) / h).ceil() as i64 + 1;
    let nj = ((hi[1] - lo[1]) / h).ceil() as i64 + 1;

    let mut cells = Vec::new();
    for j in 0..=nj {
        for i in 0..=ni {
            let p = [lo[0] + i as f64 * h, lo[1] + j as f64 * h];
            if shape.contains(p) {
                cells.push((i, j));
            }
        }
    }
    if cells.len() < 9 {
        return Err(GeometryError::EmptyGrid(cells.len()));
    }

    let lookup: BTreeMap<(i64, i64), usize> =
        cells.iter().enumerate().map(|(r, &c)| (c, r)).collect();
    let nodes: Vec<[f64; 2]> = cells
        .iter()
        .map(|&(i, j)| [lo[0] + i as f64 * h, lo[1] + j as f64 * h])
        .collect();
    let weights = vec![h * h; nodes.len()];

    Ok(CrossSectionGrid {
        spacing: h,
        nodes,
        weights,
        kind: GridKind::Cartesian { cells, lookup, origin: lo },
        shape: shape.clone(),
    })
}

fn build_polar_grid(
    shape: &CrossSectionShape,
    radius: f64,
    h: f64,
) -> Result<CrossSectionGrid, GeometryError> {
    let n_r = ((radius / h).round() as usize).max(1);
    let hr = radius / n_r as f64;
    let n_theta = (2 * ((std::f64::consts::PI * radius / h).ceil() as usize)).max(8);
    let dtheta = 2.0 * std::f64::consts::PI / n_theta as f64;

    if n_r * n_theta < 9 {
        return Err(GeometryError::EmptyGrid(n_r * n_theta));
    }

    let mut nodes = Vec::with_capacity(n_r * n_theta);
    let mut weights = Vec::with_capacity(n_r * n_theta);
    for i in 0..n_r {
        let r = (i as f64 + 0.5) * hr;
        for j in 0..n_theta {
            let t = j as f64 * dtheta;
            nodes.push([r * t.cos(), r * t.sin()]);
            weights.push(r * hr * dtheta);
        }
    }

    Ok(CrossSectionGrid {
        spacing: h,
        nodes,
        weights,
        kind: GridKind::Polar { n_r, n_theta, hr, dtheta },
        shape: shape.clone(),
    })
}

/// Transverse differential operators on a grid, in the weight-embedded
/// convention (see the module docs).
#[derive(Debug, Clone)]
pub struct TransverseOperators {
    /// -Delta_t with Dirichlet conditions; symmetric positive definite.
    pub laplacian_t: CsrMatrix,
    /// d_phi = x1 d2 - x2 d1; antisymmetric up to boundary truncation.
    pub dphi: CsrMatrix,
    /// sup over omega of |x_t|^2.
    pub moment_bound: f64,
    pub grid: CrossSectionGrid,
}

impl TransverseOperators {
    pub fn n_nodes(&self) -> usize {
        self.grid.len()
    }
}

pub fn assemble_transverse(grid: &CrossSectionGrid) -> TransverseOperators {
    match &grid.kind {
        GridKind::Cartesian { cells, lookup, .. } => {
            assemble_cartesian(grid, cells, lookup)
        }
        GridKind::Polar { n_r, n_theta, hr, dtheta } => {
            assemble_polar(grid, *n_r, *n_theta, *hr, *dtheta)
        }
    }
}

fn assemble_cartesian(
    grid: &CrossSectionGrid,
    cells: &[(i64, i64)],
    lookup: &BTreeMap<(i64, i64), usize>,
) -> TransverseOperators {
    let h = grid.spacing;
    let n = grid.len();
    let inv_h2 = 1.0 / (h * h);

    let mut lap = Vec::with_capacity(5 * n);
    for (row, &(i, j)) in cells.iter().enumerate() {
        let mut diag = 0.0;
        for (di, dj) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
            diag += inv_h2;
            if let Some(&col) = lookup.get(&(i + di, j + dj)) {
                lap.push((row, col, -inv_h2));
            }
            // missing neighbor: Dirichlet wall, diagonal contribution only
        }
        lap.push((row, row, diag));
    }
    let laplacian_t = CsrMatrix::from_triplets(n, n, &lap);

    // dphi = x1 d2 - x2 d1; central differences, one-sided second-order at
    // boundary-adjacent nodes, first-order if only one neighbor exists.
    let mut dphi = Vec::new();
    for (row, &(i, j)) in cells.iter().enumerate() {
        let [x1, x2] = grid.nodes[row];
        // (coef, axis): d2 weighted by +x1, d1 weighted by -x2
        for (coef, (di, dj)) in [(x1, (0i64, 1i64)), (-x2, (1i64, 0i64))] {
            if coef == 0.0 {
                continue;
            }
            let plus = lookup.get(&(i + di, j + dj)).copied();
            let minus = lookup.get(&(i - di, j - dj)).copied();
            let plus2 = lookup.get(&(i + 2 * di, j + 2 * dj)).copied();
            let minus2 = lookup.get(&(i - 2 * di, j - 2 * dj)).copied();
            match (plus, minus) {
                (Some(p), Some(m)) => {
                    dphi.push((row, p, coef / (2.0 * h)));
                    dphi.push((row, m, -coef / (2.0 * h)));
                }
                (Some(p), None) => match plus2 {
                    Some(p2) => {
                        dphi.push((row, row, -1.5 * coef / h));
                        dphi.push((row, p, 2.0 * coef / h));
                        dphi.push((row, p2, -0.5 * coef / h));
                    }
                    None => {
                        dphi.push((row, row, -coef / h));
                        dphi.push((row, p, coef / h));
                    }
                },
                (None, Some(m)) => match minus2 {
                    Some(m2) => {
                        dphi.push((row, row, 1.5 * coef / h));
                        dphi.push((row, m, -2.0 * coef / h));
                        dphi.push((row, m2, 0.5 * coef / h));
                    }
                    None => {
                        dphi.push((row, row, coef / h));
                        dphi.push((row, m, -coef / h));
                    }
                },
                (None, None) => {}
            }
        }
    }
    let dphi = CsrMatrix::from_triplets(n, n, &dphi);

    TransverseOperators {
        laplacian_t,
        dphi,
        moment_bound: grid.shape.moment_bound(),
        grid: grid.clone(),
    }
}

fn assemble_polar(
    grid: &CrossSectionGrid,
    n_r: usize,
    n_theta: usize,
    hr: f64,
    dtheta: f64,
) -> TransverseOperators {
    let n = grid.len();
    let idx = |i: usize, j: usize| i * n_theta + (j % n_theta);

    // Dirichlet form on physical values: sum over faces of coef * (u_a - u_b)^2,
    // then embed with W^{-1/2} K W^{-1/2}.
    let sqrt_w: Vec<f64> = grid.weights.iter().map(|w| w.sqrt()).collect();
    let mut k = Vec::new();
    let add_face = |a: usize, b: usize, coef: f64, k: &mut Vec<(usize, usize, f64)>| {
        k.push((a, a, coef / (sqrt_w[a] * sqrt_w[a])));
        k.push((b, b, coef / (sqrt_w[b] * sqrt_w[b])));
        k.push((a, b, -coef / (sqrt_w[a] * sqrt_w[b])));
        k.push((b, a, -coef / (sqrt_w[a] * sqrt_w[b])));
    };
    for i in 0..n_r {
        let r_mid = (i as f64 + 0.5) * hr;
        for j in 0..n_theta {
            // radial face to the next ring (or the Dirichlet wall)
            if i + 1 < n_r {
                let coef = (i as f64 + 1.0) * hr * dtheta / hr;
                add_face(idx(i, j), idx(i + 1, j), coef, &mut k);
            } else {
                // wall at r = radius, half a radial step away
                let radius = n_r as f64 * hr;
                let coef = radius * dtheta / (hr / 2.0);
                let a = idx(i, j);
                k.push((a, a, coef / (sqrt_w[a] * sqrt_w[a])));
            }
            // angular face to the next sector
            let coef = hr / (r_mid * dtheta);
            add_face(idx(i, j), idx(i, j + 1), coef, &mut k);
        }
    }
    let laplacian_t = CsrMatrix::from_triplets(n, n, &k);

    // dphi = d/dtheta, periodic central difference; weights are
    // theta-independent so the embedding leaves it untouched.
    let mut d = Vec::new();
    for i in 0..n_r {
        for j in 0..n_theta {
            let row = idx(i, j);
            d.push((row, idx(i, j + 1), 1.0 / (2.0 * dtheta)));
            d.push((row, idx(i, j + n_theta - 1), -1.0 / (2.0 * dtheta)));
        }
    }
    let dphi = CsrMatrix::from_triplets(n, n, &d);

    TransverseOperators {
        laplacian_t,
        dphi,
        moment_bound: grid.shape.moment_bound(),
        grid: grid.clone(),
    }
}
