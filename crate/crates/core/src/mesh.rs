//! Structured triangular meshes of a rectangle `[0, lx] x [0, ly]`.
//!
//! Nodes are numbered row by row, `k = iy * (nx + 1) + ix`. Every cell is split
//! along the diagonal running from its lower-left to its upper-right corner,
//! giving two counterclockwise triangles.

use serde::{Deserialize, Serialize};

use crate::{Error, Point, Result};

/// Boundary condition attached to a side of the rectangle (or a node).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryKind {
    Dirichlet,
    Neumann,
    Robin,
}

/// Tag carried by each node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeTag {
    Interior,
    Dirichlet,
    Neumann,
    Robin,
}

impl From<BoundaryKind> for NodeTag {
    fn from(kind: BoundaryKind) -> Self {
        match kind {
            BoundaryKind::Dirichlet => NodeTag::Dirichlet,
            BoundaryKind::Neumann => NodeTag::Neumann,
            BoundaryKind::Robin => NodeTag::Robin,
        }
    }
}

impl NodeTag {
    fn priority(self) -> u8 {
        match self {
            NodeTag::Interior => 0,
            NodeTag::Neumann => 1,
            NodeTag::Robin => 2,
            NodeTag::Dirichlet => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NodeTag::Interior => "interior",
            NodeTag::Dirichlet => "dirichlet",
            NodeTag::Neumann => "neumann",
            NodeTag::Robin => "robin",
        }
    }
}

/// Sides of the rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// `x = 0`
    Left,
    /// `x = lx`
    Right,
    /// `y = 0`
    Bottom,
    /// `y = ly`
    Top,
}

/// One boundary condition per side of the rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryLayout {
    pub left: BoundaryKind,
    pub right: BoundaryKind,
    pub bottom: BoundaryKind,
    pub top: BoundaryKind,
}

impl BoundaryLayout {
    pub fn uniform(kind: BoundaryKind) -> Self {
        Self { left: kind, right: kind, bottom: kind, top: kind }
    }

    pub fn all_dirichlet() -> Self {
        Self::uniform(BoundaryKind::Dirichlet)
    }

    pub fn all_neumann() -> Self {
        Self::uniform(BoundaryKind::Neumann)
    }

    /// Dirichlet inflow at `x = 0`, homogeneous Neumann on the other sides.
    pub fn dirichlet_left() -> Self {
        Self { left: BoundaryKind::Dirichlet, ..Self::all_neumann() }
    }

    /// Dirichlet on `x = 0` and `x = lx`, Neumann on the horizontal sides.
    pub fn dirichlet_left_right() -> Self {
        Self {
            left: BoundaryKind::Dirichlet,
            right: BoundaryKind::Dirichlet,
            ..Self::all_neumann()
        }
    }

    pub fn side(&self, side: Side) -> BoundaryKind {
        match side {
            Side::Left => self.left,
            Side::Right => self.right,
            Side::Bottom => self.bottom,
            Side::Top => self.top,
        }
    }
}

/// A boundary edge between two nodes, on a given side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub side: Side,
    pub kind: BoundaryKind,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    lx: f64,
    ly: f64,
    nx: usize,
    ny: usize,
    nodes: Vec<Point>,
    elements: Vec<[usize; 3]>,
    tags: Vec<NodeTag>,
    boundary_edges: Vec<BoundaryEdge>,
    layout: BoundaryLayout,
}

impl Mesh {
    pub fn rectangle(lx: f64, ly: f64, nx: usize, ny: usize, layout: BoundaryLayout) -> Result<Self> {
        build_rectangle_mesh(lx, ly, nx, ny, layout)
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }

    pub fn ly(&self) -> f64 {
        self.ly
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn layout(&self) -> BoundaryLayout {
        self.layout
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn node(&self, k: usize) -> Point {
        self.nodes[k]
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    pub fn tags(&self) -> &[NodeTag] {
        &self.tags
    }

    pub fn tag(&self, k: usize) -> NodeTag {
        self.tags[k]
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    /// Index of the node at grid position `(ix, iy)`.
    pub fn node_index(&self, ix: usize, iy: usize) -> usize {
        iy * (self.nx + 1) + ix
    }

    /// Grid position `(ix, iy)` of node `k`.
    pub fn grid_position(&self, k: usize) -> (usize, usize) {
        (k % (self.nx + 1), k / (self.nx + 1))
    }

    /// The distinct x-coordinates of the grid lines.
    pub fn grid_x(&self) -> Vec<f64> {
        (0..=self.nx).map(|i| self.nodes[i][0]).collect()
    }

    /// The distinct y-coordinates of the grid lines.
    pub fn grid_y(&self) -> Vec<f64> {
        (0..=self.ny).map(|j| self.nodes[self.node_index(0, j)][1]).collect()
    }

    pub fn vertices(&self, e: usize) -> [Point; 3] {
        let [a, b, c] = self.elements[e];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    pub fn signed_area(&self, e: usize) -> f64 {
        triangle_signed_area(&self.vertices(e))
    }

    pub fn centroid(&self, e: usize) -> Point {
        let v = self.vertices(e);
        [(v[0][0] + v[1][0] + v[2][0]) / 3.0, (v[0][1] + v[1][1] + v[2][1]) / 3.0]
    }

    /// Longest edge of element `e`.
    pub fn element_diameter(&self, e: usize) -> f64 {
        let v = self.vertices(e);
        (0..3).map(|i| dist(v[i], v[(i + 1) % 3])).fold(0.0, f64::max)
    }

    /// Maximal edge length over all elements.
    pub fn h(&self) -> f64 {
        mesh_h(self)
    }

    pub fn dirichlet_nodes(&self) -> Vec<usize> {
        self.tags
            .iter()
            .enumerate()
            .filter(|(_, t)| **t == NodeTag::Dirichlet)
            .map(|(k, _)| k)
            .collect()
    }

    /// Sides of the rectangle a node lies on (up to two at corners).
    fn sides_of(&self, ix: usize, iy: usize) -> impl Iterator<Item = Side> {
        let mut sides = Vec::with_capacity(2);
        if ix == 0 {
            sides.push(Side::Left);
        }
        if ix == self.nx {
            sides.push(Side::Right);
        }
        if iy == 0 {
            sides.push(Side::Bottom);
        }
        if iy == self.ny {
            sides.push(Side::Top);
        }
        sides.into_iter()
    }
}

pub fn triangle_signed_area(v: &[Point; 3]) -> f64 {
    0.5 * ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]))
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Builds the structured triangulation of `[0, lx] x [0, ly]` with `nx * ny`
/// cells. Corner nodes take the strongest tag of their two sides, with
/// Dirichlet beating Robin beating Neumann.
pub fn build_rectangle_mesh(
    lx: f64,
    ly: f64,
    nx: usize,
    ny: usize,
    layout: BoundaryLayout,
) -> Result<Mesh> {
    if !(lx > 0.0 && lx.is_finite() && ly > 0.0 && ly.is_finite()) {
        return Err(Error::invalid(format!("domain sides must be positive, got {lx} x {ly}")));
    }
    if nx == 0 || ny == 0 {
        return Err(Error::invalid(format!("subdivisions must be at least 1, got {nx} x {ny}")));
    }

    let hx = lx / nx as f64;
    let hy = ly / ny as f64;
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for iy in 0..=ny {
        // Pin the last coordinate so boundary nodes sit exactly on the side.
        let y = if iy == ny { ly } else { iy as f64 * hy };
        for ix in 0..=nx {
            let x = if ix == nx { lx } else { ix as f64 * hx };
            nodes.push([x, y]);
        }
    }

    let idx = |ix: usize, iy: usize| iy * (nx + 1) + ix;
    let mut elements = Vec::with_capacity(2 * nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            let a = idx(ix, iy);
            let b = idx(ix + 1, iy);
            let c = idx(ix + 1, iy + 1);
            let d = idx(ix, iy + 1);
            elements.push([a, b, c]);
            elements.push([a, c, d]);
        }
    }

    let mut mesh = Mesh {
        lx,
        ly,
        nx,
        ny,
        nodes,
        elements,
        tags: Vec::new(),
        boundary_edges: Vec::new(),
        layout,
    };

    let mut tags = vec![NodeTag::Interior; mesh.nodes.len()];
    for (k, tag) in tags.iter_mut().enumerate() {
        let (ix, iy) = mesh.grid_position(k);
        for side in mesh.sides_of(ix, iy) {
            let candidate = NodeTag::from(layout.side(side));
            if candidate.priority() > tag.priority() {
                *tag = candidate;
            }
        }
    }
    mesh.tags = tags;

    let mut edges = Vec::with_capacity(2 * (nx + ny));
    for ix in 0..nx {
        edges.push(BoundaryEdge { nodes: [idx(ix, 0), idx(ix + 1, 0)], side: Side::Bottom, kind: layout.bottom });
        edges.push(BoundaryEdge { nodes: [idx(ix + 1, ny), idx(ix, ny)], side: Side::Top, kind: layout.top });
    }
    for iy in 0..ny {
        edges.push(BoundaryEdge { nodes: [idx(0, iy + 1), idx(0, iy)], side: Side::Left, kind: layout.left });
        edges.push(BoundaryEdge { nodes: [idx(nx, iy), idx(nx, iy + 1)], side: Side::Right, kind: layout.right });
    }
    mesh.boundary_edges = edges;

    Ok(mesh)
}

/// Maximal edge length over all elements.
pub fn mesh_h(mesh: &Mesh) -> f64 {
    (0..mesh.num_elements()).map(|e| mesh.element_diameter(e)).fold(0.0, f64::max)
}
