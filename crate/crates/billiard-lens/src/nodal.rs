//! Nodal sets, nodal domains, nesting trees and critical points of sampled planar fields.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field2;
use crate::grid::{FieldGrid, GridSpec};

/// Contour points must satisfy |bilinear field| <= this times the field scale.
pub const CONTOUR_TOLERANCE: f64 = 1e-9;
/// Newton stops once |grad u| <= this times the field scale.
pub const GRADIENT_TOLERANCE: f64 = 1e-10;
/// Critical points with |det H| below this times scale^2 are degenerate.
pub const DEGENERACY_TOLERANCE: f64 = 1e-8;

const NEWTON_STEPS: usize = 50;
const DUPLICATE_RADIUS: f64 = 1e-6;

/// One polyline of the nodal set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    pub points: Vec<[f64; 2]>,
    pub closed: bool,
}

impl Contour {
    /// Shoelace area enclosed by a closed contour.
    pub fn enclosed_area(&self) -> Option<f64> {
        if !self.closed {
            return None;
        }
        let n = self.points.len();
        let twice: f64 = (0..n)
            .map(|k| {
                let (p, q) = (self.points[k], self.points[(k + 1) % n]);
                p[0] * q[1] - q[0] * p[1]
            })
            .sum();
        Some(0.5 * twice.abs())
    }

    /// Even-odd ray test against the closed polyline.
    pub fn contains(&self, z: [f64; 2]) -> bool {
        let n = self.points.len();
        let mut inside = false;
        for k in 0..n {
            let (p, q) = (self.points[k], self.points[(k + 1) % n]);
            if (p[1] > z[1]) != (q[1] > z[1]) {
                let x = p[0] + (z[1] - p[1]) / (q[1] - p[1]) * (q[0] - p[0]);
                if z[0] < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Mean distance of the vertices from `center`.
    pub fn mean_radius(&self, center: [f64; 2]) -> f64 {
        let s: f64 = self.points.iter().map(|p| (p[0] - center[0]).hypot(p[1] - center[1])).sum();
        s / self.points.len() as f64
    }
}

/// Nodal set, domain labels and their adjacency for one sampled field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodalAnalysis {
    pub grid: FieldGrid,
    pub contours: Vec<Contour>,
    /// Domain label of every node, in grid order.
    pub labels: Vec<usize>,
    pub domain_count: usize,
    /// +1 or -1 per domain.
    pub domain_signs: Vec<i8>,
    /// Sorted labels of the domains bordering each contour.
    pub contour_domains: Vec<Vec<usize>>,
    /// Whether each domain reaches the window edge.
    pub touches_edge: Vec<bool>,
}

fn positive(v: f64) -> bool {
    v >= 0.0
}

/// Bilinear saddle value of a cell with corners a, b, c, d in counterclockwise order.
fn saddle_value(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let den = a + c - b - d;
    if den.abs() <= 1e-300 {
        0.25 * (a + b + c + d)
    } else {
        (a * c - b * d) / den
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.0[hi] = lo;
        }
    }
}

struct Planar<'a> {
    grid: &'a FieldGrid,
    nx: usize,
    ny: usize,
}

impl Planar<'_> {
    fn node(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    fn value(&self, i: usize, j: usize) -> f64 {
        self.grid.values[self.node(i, j)]
    }

    fn position(&self, i: usize, j: usize) -> [f64; 2] {
        let s = &self.grid.spec;
        [s.origin[0] + i as f64 * s.step[0], s.origin[1] + j as f64 * s.step[1]]
    }

    fn horizontal(&self, i: usize, j: usize) -> usize {
        j * (self.nx - 1) + i
    }

    fn vertical(&self, i: usize, j: usize) -> usize {
        (self.nx - 1) * self.ny + j * self.nx + i
    }

    fn edge_count(&self) -> usize {
        (self.nx - 1) * self.ny + self.nx * (self.ny - 1)
    }

    /// The two end nodes of an edge.
    fn edge_nodes(&self, e: usize) -> ((usize, usize), (usize, usize)) {
        let h = (self.nx - 1) * self.ny;
        if e < h {
            let (i, j) = (e % (self.nx - 1), e / (self.nx - 1));
            ((i, j), (i + 1, j))
        } else {
            let r = e - h;
            let (i, j) = (r % self.nx, r / self.nx);
            ((i, j), (i, j + 1))
        }
    }

    /// Linear zero of the field along a sign-changing edge.
    fn crossing(&self, e: usize) -> [f64; 2] {
        let ((i0, j0), (i1, j1)) = self.edge_nodes(e);
        let (v0, v1) = (self.value(i0, j0), self.value(i1, j1));
        let t = v0 / (v0 - v1);
        let (p, q) = (self.position(i0, j0), self.position(i1, j1));
        [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
    }
}

fn planar(grid: &FieldGrid) -> Result<Planar<'_>> {
    if grid.spec.dim() != 2 || grid.spec.counts.iter().any(|&n| n < 2) {
        return Err(Error::Invalid("nodal extraction needs a planar grid with at least 2x2 nodes".into()));
    }
    if grid.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("grid holds non-finite values".into()));
    }
    if grid.values.iter().all(|&v| v == 0.0) {
        return Err(Error::Degenerate("the field vanishes on the whole grid".into()));
    }
    Ok(Planar { grid, nx: grid.spec.counts[0], ny: grid.spec.counts[1] })
}

/// Marching squares with the asymptotic decider for saddle cells, plus 4-connected sign-domain labels.
///
/// Near a nodal crossing the two rules can disagree; nesting trees then report the contour as degenerate.
pub fn extract_nodal(grid: &FieldGrid) -> Result<NodalAnalysis> {
    let g = planar(grid)?;
    let (nx, ny) = (g.nx, g.ny);
    let mut links: Vec<Vec<usize>> = vec![Vec::new(); g.edge_count()];
    let mut uf = UnionFind((0..nx * ny).collect());
    for j in 0..ny {
        for i in 0..nx {
            let s = positive(g.value(i, j));
            if i + 1 < nx && positive(g.value(i + 1, j)) == s {
                uf.union(g.node(i, j), g.node(i + 1, j));
            }
            if j + 1 < ny && positive(g.value(i, j + 1)) == s {
                uf.union(g.node(i, j), g.node(i, j + 1));
            }
        }
    }
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            let vals = corners.map(|(a, b)| g.value(a, b));
            let signs = vals.map(positive);
            // edges in order bottom, right, top, left: edge k joins corner k and k+1
            let edges = [g.horizontal(i, j), g.vertical(i + 1, j), g.horizontal(i, j + 1), g.vertical(i, j)];
            let cut: Vec<usize> = (0..4).filter(|&k| signs[k] != signs[(k + 1) % 4]).collect();
            let mut join = |a: usize, b: usize| {
                links[edges[a]].push(edges[b]);
                links[edges[b]].push(edges[a]);
            };
            match cut.len() {
                0 => {}
                2 => join(cut[0], cut[1]),
                _ => {
                    let s = positive(saddle_value(vals[0], vals[1], vals[2], vals[3]));
                    if s == signs[0] {
                        // corners 0 and 2 connect through the centre; cut off corners 1 and 3
                        join(0, 1);
                        join(2, 3);
                    } else {
                        join(3, 0);
                        join(1, 2);
                    }
                }
            }
        }
    }

    let mut root_label: Vec<Option<usize>> = vec![None; nx * ny];
    let mut labels = vec![0; nx * ny];
    let mut domain_signs = Vec::new();
    let mut touches_edge = Vec::new();
    #[allow(clippy::needless_range_loop)]
    for n in 0..nx * ny {
        let r = uf.find(n);
        let label = *root_label[r].get_or_insert_with(|| {
            domain_signs.push(if positive(grid.values[n]) { 1 } else { -1 });
            touches_edge.push(false);
            domain_signs.len() - 1
        });
        labels[n] = label;
        let (i, j) = (n % nx, n / nx);
        if i == 0 || j == 0 || i == nx - 1 || j == ny - 1 {
            touches_edge[label] = true;
        }
    }

    let mut visited = vec![false; links.len()];
    let mut contours = Vec::new();
    let mut contour_domains = Vec::new();
    let mut trace = |start: usize, closed: bool, visited: &mut Vec<bool>| {
        let mut path = vec![start];
        visited[start] = true;
        let mut cur = start;
        while let Some(&next) = links[cur].iter().find(|&&e| !visited[e]) {
            visited[next] = true;
            path.push(next);
            cur = next;
        }
        let mut doms = BTreeSet::new();
        for &e in &path {
            let ((i0, j0), (i1, j1)) = g.edge_nodes(e);
            doms.insert(labels[g.node(i0, j0)]);
            doms.insert(labels[g.node(i1, j1)]);
        }
        contours.push(Contour { points: path.iter().map(|&e| g.crossing(e)).collect(), closed });
        contour_domains.push(doms.into_iter().collect::<Vec<_>>());
    };
    for e in 0..links.len() {
        if links[e].len() == 1 && !visited[e] {
            trace(e, false, &mut visited);
        }
    }
    for e in 0..links.len() {
        if links[e].len() == 2 && !visited[e] {
            trace(e, true, &mut visited);
        }
    }

    Ok(NodalAnalysis {
        grid: grid.clone(),
        domain_count: domain_signs.len(),
        contours,
        labels,
        domain_signs,
        contour_domains,
        touches_edge,
    })
}

/// Number of nodal domains of a sampled field.
pub fn count_nodal_domains(grid: &FieldGrid) -> Result<usize> {
    Ok(extract_nodal(grid)?.domain_count)
}

/// Bilinear interpolant of a planar grid.
pub fn bilinear(grid: &FieldGrid, z: [f64; 2]) -> f64 {
    let s = &grid.spec;
    let (nx, ny) = (s.counts[0], s.counts[1]);
    let fx = ((z[0] - s.origin[0]) / s.step[0]).clamp(0.0, (nx - 1) as f64);
    let fy = ((z[1] - s.origin[1]) / s.step[1]).clamp(0.0, (ny - 1) as f64);
    let (i, j) = ((fx.floor() as usize).min(nx - 2), (fy.floor() as usize).min(ny - 2));
    let (tx, ty) = (fx - i as f64, fy - j as f64);
    let v = |a: usize, b: usize| grid.values[b * nx + a];
    (1.0 - ty) * ((1.0 - tx) * v(i, j) + tx * v(i + 1, j)) + ty * ((1.0 - tx) * v(i, j + 1) + tx * v(i + 1, j + 1))
}

/// Rooted tree compared through a canonical form with sorted child subtrees.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RootedTree {
    pub children: Vec<RootedTree>,
}

impl RootedTree {
    pub fn leaf() -> Self {
        Self { children: Vec::new() }
    }

    /// Path on `vertices` vertices rooted at an end.
    pub fn path(vertices: usize) -> Self {
        let mut t = Self::leaf();
        for _ in 1..vertices.max(1) {
            t = Self { children: vec![t] };
        }
        t
    }

    pub fn vertex_count(&self) -> usize {
        1 + self.children.iter().map(Self::vertex_count).sum::<usize>()
    }

    /// Parenthesis encoding of the canonical form.
    pub fn code(&self) -> String {
        let mut kids: Vec<String> = self.children.iter().map(Self::code).collect();
        kids.sort();
        format!("({})", kids.concat())
    }

    /// Same tree with children ordered by their codes.
    pub fn canonical(&self) -> Self {
        let mut kids: Vec<(String, RootedTree)> = self.children.iter().map(|c| (c.code(), c.canonical())).collect();
        kids.sort_by(|a, b| a.0.cmp(&b.0));
        Self { children: kids.into_iter().map(|(_, t)| t).collect() }
    }

    pub fn isomorphic(&self, other: &Self) -> bool {
        self.code() == other.code()
    }
}

/// Nesting tree with its JSON shape {"root": {"children": [...]}}.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NestingTree {
    pub root: RootedTree,
}

impl NodalAnalysis {
    fn node_position(&self, n: usize) -> [f64; 2] {
        let s = &self.grid.spec;
        let nx = s.counts[0];
        [s.origin[0] + (n % nx) as f64 * s.step[0], s.origin[1] + (n / nx) as f64 * s.step[1]]
    }

    /// Field scale used by the contour residual contract.
    pub fn scale(&self) -> f64 {
        self.grid.max_abs()
    }

    /// Largest |bilinear field| over contour points, relative to the field scale.
    pub fn contour_residual(&self) -> f64 {
        let worst = self
            .contours
            .iter()
            .flat_map(|c| &c.points)
            .map(|&p| bilinear(&self.grid, p).abs())
            .fold(0.0, f64::max);
        worst / self.scale()
    }

    /// Newton projection of every contour point onto the zero set of `field` along its gradient.
    /// Returns the largest relative |field| after polishing.
    pub fn polish(&mut self, field: &dyn Field2, steps: usize) -> f64 {
        let scale = self.scale();
        let mut worst: f64 = 0.0;
        for c in &mut self.contours {
            for p in &mut c.points {
                for _ in 0..steps {
                    let j = field.jet(*p);
                    let g2 = j.grad[0] * j.grad[0] + j.grad[1] * j.grad[1];
                    if g2 == 0.0 || j.value.abs() <= 1e-15 * scale {
                        break;
                    }
                    p[0] -= j.value * j.grad[0] / g2;
                    p[1] -= j.value * j.grad[1] / g2;
                }
                worst = worst.max(field.jet(*p).value.abs() / scale);
            }
        }
        worst
    }

    /// Indices of closed contours.
    pub fn closed_contours(&self) -> Vec<usize> {
        (0..self.contours.len()).filter(|&k| self.contours[k].closed).collect()
    }

    /// Smallest |node value|; perturbations below it cannot change any node sign.
    pub fn sign_margin(&self) -> f64 {
        self.grid.values.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min)
    }

    /// Nesting tree of the domains inside a closed contour.
    pub fn nesting_tree(&self, component: usize) -> Result<NestingTree> {
        let c = self
            .contours
            .get(component)
            .ok_or_else(|| Error::Invalid(format!("no contour with index {component}")))?;
        if !c.closed {
            return Err(Error::Invalid(format!("contour {component} is open")));
        }
        let mut interior = BTreeSet::new();
        for n in 0..self.labels.len() {
            if c.contains(self.node_position(n)) {
                interior.insert(self.labels[n]);
            }
        }
        let roots: Vec<usize> =
            self.contour_domains[component].iter().copied().filter(|d| interior.contains(d)).collect();
        let [root] = roots[..] else {
            return Err(Error::Degenerate(format!("contour {component} does not bound exactly one inner domain")));
        };
        let mut edges: Vec<(usize, usize)> = Vec::new();
        for (k, doms) in self.contour_domains.iter().enumerate() {
            if k == component || !doms.iter().all(|d| interior.contains(d)) {
                continue;
            }
            if let [a, b] = doms[..] {
                edges.push((a, b));
            } else {
                return Err(Error::Degenerate(format!("contour {k} borders {} domains", doms.len())));
            }
        }
        if edges.len() + 1 != interior.len() {
            return Err(Error::Degenerate("nesting graph is not a tree".into()));
        }
        let mut seen = BTreeSet::from([root]);
        let tree = grow(root, &edges, &mut seen);
        if seen.len() != interior.len() {
            return Err(Error::Degenerate("nesting graph is disconnected".into()));
        }
        Ok(NestingTree { root: tree.canonical() })
    }

    /// Closed contour of least area enclosing `z`.
    pub fn innermost_around(&self, z: [f64; 2]) -> Option<usize> {
        self.closed_contours()
            .into_iter()
            .filter(|&k| self.contours[k].contains(z))
            .min_by(|&a, &b| {
                let (x, y) = (self.contours[a].enclosed_area(), self.contours[b].enclosed_area());
                x.partial_cmp(&y).unwrap_or(std::cmp::Ordering::Equal)
            })
    }

    /// Closed contour of greatest area enclosing `z`.
    pub fn outermost_around(&self, z: [f64; 2]) -> Option<usize> {
        self.closed_contours()
            .into_iter()
            .filter(|&k| self.contours[k].contains(z))
            .max_by(|&a, &b| {
                let (x, y) = (self.contours[a].enclosed_area(), self.contours[b].enclosed_area());
                x.partial_cmp(&y).unwrap_or(std::cmp::Ordering::Equal)
            })
    }
}

fn grow(v: usize, edges: &[(usize, usize)], seen: &mut BTreeSet<usize>) -> RootedTree {
    let mut children = Vec::new();
    for &(a, b) in edges {
        let w = if a == v { b } else if b == v { a } else { continue };
        if seen.insert(w) {
            children.push(grow(w, edges, seen));
        }
    }
    RootedTree { children }
}

/// Hessian-sign class of a critical point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriticalKind {
    Maximum,
    Minimum,
    Saddle,
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub point: [f64; 2],
    pub value: f64,
    pub hessian_det: f64,
    pub kind: CriticalKind,
}

/// Converged critical points and the number of seeds whose Newton iteration failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalScan {
    pub points: Vec<CriticalPoint>,
    pub dropped_seeds: usize,
}

/// Newton iteration on the gradient from grid-local extrema of `field` sampled on `window`.
pub fn find_critical_points(field: &dyn Field2, window: &GridSpec) -> Result<CriticalScan> {
    if window.dim() != 2 || window.counts.iter().any(|&n| n < 3) {
        return Err(Error::Invalid("critical point search needs a planar grid with at least 3x3 nodes".into()));
    }
    let grid = FieldGrid::from_fn(window.clone(), Default::default(), |z| field.jet([z[0], z[1]]).value);
    let scale = grid.max_abs();
    if scale == 0.0 {
        return Err(Error::Degenerate("the field vanishes on the whole grid".into()));
    }
    let (nx, ny) = (window.counts[0], window.counts[1]);
    let lo = [window.origin[0], window.origin[1]];
    let hi = [lo[0] + (nx - 1) as f64 * window.step[0], lo[1] + (ny - 1) as f64 * window.step[1]];
    let mut points: Vec<CriticalPoint> = Vec::new();
    let mut dropped = 0;
    for j in 1..ny - 1 {
        for i in 1..nx - 1 {
            let v = grid.at2(i, j);
            let nb = [(0, 1), (1, 0), (2, 1), (1, 2), (0, 0), (2, 0), (0, 2), (2, 2)].map(|(a, b)| grid.at2(i + a - 1, j + b - 1));
            let is_max = nb.iter().all(|&w| v >= w);
            let is_min = nb.iter().all(|&w| v <= w);
            if !(is_max || is_min) {
                continue;
            }
            let seed = [lo[0] + i as f64 * window.step[0], lo[1] + j as f64 * window.step[1]];
            let Some(p) = newton_critical(field, seed, scale) else {
                dropped += 1;
                continue;
            };
            let inside = p[0] >= lo[0] && p[0] <= hi[0] && p[1] >= lo[1] && p[1] <= hi[1];
            if !inside {
                dropped += 1;
                continue;
            }
            if points.iter().any(|q| (q.point[0] - p[0]).hypot(q.point[1] - p[1]) <= DUPLICATE_RADIUS) {
                continue;
            }
            let jet = field.jet(p);
            let [hxx, hxy, hyy] = jet.hess;
            let det = hxx * hyy - hxy * hxy;
            let kind = if det.abs() < DEGENERACY_TOLERANCE * scale * scale {
                CriticalKind::Degenerate
            } else if det < 0.0 {
                CriticalKind::Saddle
            } else if hxx < 0.0 {
                CriticalKind::Maximum
            } else {
                CriticalKind::Minimum
            };
            points.push(CriticalPoint { point: p, value: jet.value, hessian_det: det, kind });
        }
    }
    points.sort_by(|a, b| a.point.partial_cmp(&b.point).unwrap_or(std::cmp::Ordering::Equal));
    Ok(CriticalScan { points, dropped_seeds: dropped })
}

/// Newton steps on grad u with a pseudo-inverse Hessian; None when it fails to converge.
fn newton_critical(field: &dyn Field2, seed: [f64; 2], scale: f64) -> Option<[f64; 2]> {
    let mut p = seed;
    for _ in 0..NEWTON_STEPS {
        let j = field.jet(p);
        let g = j.grad;
        if g[0].hypot(g[1]) <= GRADIENT_TOLERANCE * scale {
            return Some(p);
        }
        let [a, b, c] = j.hess;
        // symmetric 2x2 eigen-decomposition
        let mean = 0.5 * (a + c);
        let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
        let eig = [mean + rad, mean - rad];
        let (p0, p1) = ([b, eig[0] - a], [eig[0] - c, b]);
        let pick = if p0[0].hypot(p0[1]) >= p1[0].hypot(p1[1]) { p0 } else { p1 };
        let norm = pick[0].hypot(pick[1]);
        let v0 = if norm > 0.0 { [pick[0] / norm, pick[1] / norm] } else { [1.0, 0.0] };
        let v1 = [-v0[1], v0[0]];
        let cutoff = 1e-12 * eig[0].abs().max(eig[1].abs()).max(1e-300);
        let mut step = [0.0; 2];
        for (lam, v) in eig.iter().zip([v0, v1]) {
            if lam.abs() > cutoff {
                let coef = (g[0] * v[0] + g[1] * v[1]) / lam;
                step[0] -= coef * v[0];
                step[1] -= coef * v[1];
            }
        }
        if step == [0.0, 0.0] || !step[0].is_finite() || !step[1].is_finite() {
            return None;
        }
        p = [p[0] + step[0], p[1] + step[1]];
    }
    None
}
