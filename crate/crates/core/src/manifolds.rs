//! Invariant manifolds and transport lobes on the section.
//!
//! Manifolds are read off the descriptor field as ridges of its gradient
//! magnitude: the forward part yields stable manifolds, the backward part
//! unstable ones. Ridges are thresholded at a quantile, thinned by
//! non-maximum suppression across the local gradient direction and chained
//! into ordered polylines.
//!
//! The lobes are the regions inside the unstable manifold of the upper saddle
//! that are cut off by the stable manifolds of the top and bottom periodic
//! orbits. On the section the unstable manifold is a closed curve and the two
//! well stable manifolds are the edges of the strip of trajectories that turn
//! back out of the entrance channel.

use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::descriptors::{FieldMeta, FieldPart, LdField, NodeStatus};
use crate::numerics::pairwise_sum;
use crate::ManifoldError;

pub type Point = (f64, f64);

pub const DEFAULT_QUANTILE: f64 = 0.97;
pub const MIN_CURVE_NODES: usize = 10;
pub const ARC_SAMPLES: usize = 512;

/// Central-difference gradient magnitude of one part of the field, in
/// section units. Inaccessible nodes are `NaN`; next to them (and on the
/// grid edge) one-sided differences are used.
pub fn gradient_magnitude(field: &LdField, part: FieldPart) -> Array2<f64> {
    let values = field.part(part);
    let usable = field.status.mapv(|s| s != NodeStatus::Inaccessible);
    gradient_magnitude_of(values, &usable, field.section().dy(), field.section().dpy())
}

/// Gradient magnitude of an arbitrary masked grid with spacings `dy` along
/// columns and `dpy` along rows.
pub fn gradient_magnitude_of(values: &Array2<f64>, usable: &Array2<bool>, dy: f64, dpy: f64) -> Array2<f64> {
    let (gy, gp) = gradient_components(values, usable, dy, dpy);
    let mut out = Array2::from_elem(values.dim(), f64::NAN);
    for ((idx, o), u) in out.indexed_iter_mut().zip(usable.iter()) {
        if *u {
            *o = gy[idx].hypot(gp[idx]);
        }
    }
    out
}

fn gradient_components(values: &Array2<f64>, usable: &Array2<bool>, dy: f64, dpy: f64) -> (Array2<f64>, Array2<f64>) {
    let (n_p, n_y) = values.dim();
    let mut gy = Array2::zeros((n_p, n_y));
    let mut gp = Array2::zeros((n_p, n_y));
    let ok = |i: isize, j: isize| -> bool {
        i >= 0 && j >= 0 && (i as usize) < n_p && (j as usize) < n_y && usable[[i as usize, j as usize]]
    };
    for i in 0..n_p {
        for j in 0..n_y {
            if !usable[[i, j]] {
                continue;
            }
            let (ii, jj) = (i as isize, j as isize);
            let v = values[[i, j]];
            gy[[i, j]] = match (ok(ii, jj - 1), ok(ii, jj + 1)) {
                (true, true) => (values[[i, j + 1]] - values[[i, j - 1]]) / (2.0 * dy),
                (false, true) => (values[[i, j + 1]] - v) / dy,
                (true, false) => (v - values[[i, j - 1]]) / dy,
                (false, false) => 0.0,
            };
            gp[[i, j]] = match (ok(ii - 1, jj), ok(ii + 1, jj)) {
                (true, true) => (values[[i + 1, j]] - values[[i - 1, j]]) / (2.0 * dpy),
                (false, true) => (values[[i + 1, j]] - v) / dpy,
                (true, false) => (v - values[[i - 1, j]]) / dpy,
                (false, false) => 0.0,
            };
        }
    }
    (gy, gp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifoldKind {
    Stable,
    Unstable,
}

impl ManifoldKind {
    pub fn part(self) -> FieldPart {
        match self {
            ManifoldKind::Stable => FieldPart::Forward,
            ManifoldKind::Unstable => FieldPart::Backward,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ManifoldKind::Stable => "stable",
            ManifoldKind::Unstable => "unstable",
        }
    }
}

/// An ordered polyline of ridge nodes in section coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldCurve {
    pub kind: ManifoldKind,
    pub points: Vec<Point>,
    /// Grid indices `(i_p, i_y)` of the points.
    pub nodes: Vec<(usize, usize)>,
    /// The last point neighbours the first.
    pub closed: bool,
    pub source: FieldMeta,
}

impl ManifoldCurve {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn arc_length(&self) -> f64 {
        polyline_length(&self.points)
    }
}

/// Settings of the ridge extraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RidgeConfig {
    pub quantile: f64,
    pub min_nodes: usize,
}

impl Default for RidgeConfig {
    fn default() -> Self {
        Self {
            quantile: DEFAULT_QUANTILE,
            min_nodes: MIN_CURVE_NODES,
        }
    }
}

/// Extraction result with the thresholds used and diagnostics for empty sets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifoldSet {
    pub stable: Vec<ManifoldCurve>,
    pub unstable: Vec<ManifoldCurve>,
    pub stable_threshold: f64,
    pub unstable_threshold: f64,
    pub diagnostics: Vec<String>,
}

impl ManifoldSet {
    pub fn all(&self) -> impl Iterator<Item = &ManifoldCurve> {
        self.stable.iter().chain(self.unstable.iter())
    }
}

/// Stable curves from the forward part, unstable curves from the backward
/// part.
pub fn extract_manifolds(field: &LdField, quantile: f64) -> Result<ManifoldSet, ManifoldError> {
    extract_manifolds_with(
        field,
        &RidgeConfig {
            quantile,
            ..RidgeConfig::default()
        },
    )
}

pub fn extract_manifolds_with(field: &LdField, cfg: &RidgeConfig) -> Result<ManifoldSet, ManifoldError> {
    if !(cfg.quantile > 0.0 && cfg.quantile < 1.0) {
        return Err(ManifoldError::InvalidInput(format!(
            "quantile must lie in (0, 1), got {}",
            cfg.quantile
        )));
    }
    let mut diagnostics = Vec::new();
    let mut run = |kind: ManifoldKind| {
        let ridges = ridge_curves(field, kind.part(), cfg);
        let curves: Vec<ManifoldCurve> = ridges
            .curves
            .into_iter()
            .map(|c| ManifoldCurve {
                kind,
                points: c.nodes.iter().map(|&(i, j)| field.coords(i, j)).collect(),
                nodes: c.nodes,
                closed: c.closed,
                source: field.meta,
            })
            .collect();
        if curves.is_empty() {
            diagnostics.push(format!(
                "no {} ridge of at least {} nodes above the {} quantile (threshold {:e})",
                kind.as_str(),
                cfg.min_nodes,
                cfg.quantile,
                ridges.threshold
            ));
        }
        (curves, ridges.threshold)
    };
    let (stable, stable_threshold) = run(ManifoldKind::Stable);
    let (unstable, unstable_threshold) = run(ManifoldKind::Unstable);
    Ok(ManifoldSet {
        stable,
        unstable,
        stable_threshold,
        unstable_threshold,
        diagnostics,
    })
}

pub(crate) struct GridCurve {
    pub nodes: Vec<(usize, usize)>,
    pub closed: bool,
}

pub(crate) struct Ridges {
    pub curves: Vec<GridCurve>,
    pub threshold: f64,
}

/// Value below which a fraction `q` of the finite entries lie (nearest rank).
pub fn quantile_of(values: &Array2<f64>, q: f64) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

pub(crate) fn ridge_curves(field: &LdField, part: FieldPart, cfg: &RidgeConfig) -> Ridges {
    let values = field.part(part);
    let usable = field.status.mapv(|s| s != NodeStatus::Inaccessible);
    ridge_curves_of(values, &usable, field.section().dy(), field.section().dpy(), cfg)
}

pub(crate) fn ridge_curves_of(
    values: &Array2<f64>,
    usable: &Array2<bool>,
    dy: f64,
    dpy: f64,
    cfg: &RidgeConfig,
) -> Ridges {
    let (gy, gp) = gradient_components(values, usable, dy, dpy);
    let mag = gradient_magnitude_of(values, usable, dy, dpy);
    let threshold = quantile_of(&mag, cfg.quantile);
    let (n_p, n_y) = mag.dim();
    let at = |i: isize, j: isize| -> f64 {
        if i < 0 || j < 0 || i as usize >= n_p || j as usize >= n_y {
            return f64::NEG_INFINITY;
        }
        let v = mag[[i as usize, j as usize]];
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };

    // Non-maximum suppression across the gradient direction, measured in
    // grid cells and quantised to the eight neighbours.
    let mut ridge = Array2::from_elem((n_p, n_y), false);
    if threshold.is_finite() {
        for i in 0..n_p {
            for j in 0..n_y {
                let g = mag[[i, j]];
                if !(g > threshold) {
                    continue;
                }
                let (cy, cp) = (gy[[i, j]] * dy, gp[[i, j]] * dpy);
                let angle = cp.atan2(cy).rem_euclid(std::f64::consts::PI);
                let sector = ((angle / (std::f64::consts::PI / 4.0)).round() as usize) % 4;
                let (di, dj) = match sector {
                    0 => (0, 1),
                    1 => (1, 1),
                    2 => (1, 0),
                    _ => (1, -1),
                };
                let (ii, jj) = (i as isize, j as isize);
                if g >= at(ii + di, jj + dj) && g >= at(ii - di, jj - dj) {
                    ridge[[i, j]] = true;
                }
            }
        }
    }

    Ridges {
        curves: chain_ridges(&ridge, cfg.min_nodes),
        threshold,
    }
}

/// Zhang-Suen thinning to one-node-wide ridges.
fn thin(mask: &mut Array2<bool>) {
    let (n_p, n_y) = mask.dim();
    let get = |m: &Array2<bool>, i: isize, j: isize| -> bool {
        i >= 0 && j >= 0 && (i as usize) < n_p && (j as usize) < n_y && m[[i as usize, j as usize]]
    };
    loop {
        let mut changed = false;
        for step in 0..2 {
            let mut remove = Vec::new();
            for i in 0..n_p {
                for j in 0..n_y {
                    if !mask[[i, j]] {
                        continue;
                    }
                    let (a, b) = (i as isize, j as isize);
                    // Clockwise from north.
                    let p = [
                        get(mask, a - 1, b),
                        get(mask, a - 1, b + 1),
                        get(mask, a, b + 1),
                        get(mask, a + 1, b + 1),
                        get(mask, a + 1, b),
                        get(mask, a + 1, b - 1),
                        get(mask, a, b - 1),
                        get(mask, a - 1, b - 1),
                    ];
                    let count = p.iter().filter(|&&x| x).count();
                    if !(2..=6).contains(&count) {
                        continue;
                    }
                    let transitions = (0..8).filter(|&k| !p[k] && p[(k + 1) % 8]).count();
                    if transitions != 1 {
                        continue;
                    }
                    let (n, e, s, w) = (p[0], p[2], p[4], p[6]);
                    let ok = if step == 0 {
                        !(n && e && s) && !(e && s && w)
                    } else {
                        !(n && e && w) && !(n && s && w)
                    };
                    if ok {
                        remove.push((i, j));
                    }
                }
            }
            changed |= !remove.is_empty();
            for (i, j) in remove {
                mask[[i, j]] = false;
            }
        }
        if !changed {
            break;
        }
    }
}

type Pix = (usize, usize);

/// Ridge adjacency: 4-neighbours, plus diagonal neighbours not already
/// reachable through a shared 4-neighbour.
fn ridge_neighbours(mask: &Array2<bool>, p: Pix) -> Vec<Pix> {
    let (n_p, n_y) = mask.dim();
    let on = |i: isize, j: isize| {
        i >= 0 && j >= 0 && (i as usize) < n_p && (j as usize) < n_y && mask[[i as usize, j as usize]]
    };
    let (i, j) = (p.0 as isize, p.1 as isize);
    let mut out = Vec::with_capacity(4);
    for (di, dj) in [(0, 1), (1, 0), (0, -1), (-1, 0)] {
        if on(i + di, j + dj) {
            out.push(((i + di) as usize, (j + dj) as usize));
        }
    }
    for (di, dj) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
        if on(i + di, j + dj) && !on(i + di, j) && !on(i, j + dj) {
            out.push(((i + di) as usize, (j + dj) as usize));
        }
    }
    out
}

struct Segment {
    pix: Vec<Pix>,
    /// End vertices; `None` for a cycle without junctions.
    ends: Option<(Pix, Pix)>,
    alive: bool,
}

/// Orders the nodes of a ridge mask into polylines.
///
/// The mask is thinned and split into segments between junctions and
/// endpoints. Short spurs are pruned, then segments meeting at a junction
/// are joined along the straightest continuation.
pub(crate) fn chain_ridges(ridge: &Array2<bool>, min_nodes: usize) -> Vec<GridCurve> {
    let mut mask = ridge.clone();
    thin(&mut mask);
    let (n_p, n_y) = mask.dim();
    let degree = |p: Pix| ridge_neighbours(&mask, p).len();
    let is_vertex = |p: Pix| degree(p) != 2;

    let mut visited = Array2::from_elem((n_p, n_y), false);
    let mut segments: Vec<Segment> = Vec::new();
    let mut direct = std::collections::HashSet::new();
    for i in 0..n_p {
        for j in 0..n_y {
            let v = (i, j);
            if !mask[[i, j]] || !is_vertex(v) {
                continue;
            }
            visited[[i, j]] = true;
            let nbrs = ridge_neighbours(&mask, v);
            if nbrs.is_empty() {
                segments.push(Segment {
                    pix: vec![v],
                    ends: Some((v, v)),
                    alive: true,
                });
            }
            for n in nbrs {
                if is_vertex(n) {
                    if direct.insert((v.min(n), v.max(n))) {
                        segments.push(Segment {
                            pix: vec![v, n],
                            ends: Some((v, n)),
                            alive: true,
                        });
                    }
                    continue;
                }
                if visited[[n.0, n.1]] {
                    continue;
                }
                let mut pix = vec![v, n];
                visited[[n.0, n.1]] = true;
                let (mut prev, mut cur) = (v, n);
                let end = loop {
                    let next = ridge_neighbours(&mask, cur).into_iter().find(|&q| q != prev);
                    let Some(next) = next else { break cur };
                    pix.push(next);
                    if is_vertex(next) {
                        break next;
                    }
                    if visited[[next.0, next.1]] {
                        break next;
                    }
                    visited[[next.0, next.1]] = true;
                    prev = cur;
                    cur = next;
                };
                segments.push(Segment {
                    pix,
                    ends: Some((v, end)),
                    alive: true,
                });
            }
        }
    }
    // Closed loops without junctions.
    for i in 0..n_p {
        for j in 0..n_y {
            if !mask[[i, j]] || visited[[i, j]] {
                continue;
            }
            let mut pix = vec![(i, j)];
            visited[[i, j]] = true;
            let mut cur = (i, j);
            while let Some(q) = ridge_neighbours(&mask, cur).into_iter().find(|&q| !visited[[q.0, q.1]]) {
                visited[[q.0, q.1]] = true;
                pix.push(q);
                cur = q;
            }
            segments.push(Segment {
                pix,
                ends: None,
                alive: true,
            });
        }
    }

    // Iteratively prune short spurs hanging off junctions.
    let end_degree = |segments: &[Segment]| {
        let mut deg = std::collections::HashMap::<Pix, usize>::new();
        for s in segments.iter().filter(|s| s.alive) {
            if let Some((a, b)) = s.ends {
                *deg.entry(a).or_default() += 1;
                *deg.entry(b).or_default() += 1;
            }
        }
        deg
    };
    loop {
        let deg = end_degree(&segments);
        let mut removed = false;
        for s in segments.iter_mut().filter(|s| s.alive) {
            let Some((a, b)) = s.ends else { continue };
            let (da, db) = (deg[&a], deg[&b]);
            let spur = (da == 1) != (db == 1) && da.max(db) >= 3;
            if spur && s.pix.len() < min_nodes {
                s.alive = false;
                removed = true;
            }
        }
        if !removed {
            break;
        }
    }

    // Pair segment ends at each vertex along the straightest continuation.
    let direction = |s: &Segment, at_start: bool| -> (f64, f64) {
        let k = (s.pix.len() - 1).min(6);
        let (a, b) = if at_start {
            (s.pix[0], s.pix[k])
        } else {
            let n = s.pix.len();
            (s.pix[n - 1], s.pix[n - 1 - k])
        };
        let d = (b.0 as f64 - a.0 as f64, b.1 as f64 - a.1 as f64);
        let len = d.0.hypot(d.1).max(1e-12);
        (d.0 / len, d.1 / len)
    };
    let mut at_vertex = std::collections::BTreeMap::<Pix, Vec<(usize, bool)>>::new();
    for (k, s) in segments.iter().enumerate().filter(|(_, s)| s.alive) {
        if let Some((a, b)) = s.ends {
            if s.pix.len() > 1 {
                at_vertex.entry(a).or_default().push((k, true));
                at_vertex.entry(b).or_default().push((k, false));
            }
        }
    }
    let mut link = std::collections::HashMap::<(usize, bool), (usize, bool)>::new();
    for ends in at_vertex.values() {
        if ends.len() < 2 {
            continue;
        }
        let mut pairs = Vec::new();
        for x in 0..ends.len() {
            for y in (x + 1)..ends.len() {
                if ends[x].0 == ends[y].0 {
                    continue;
                }
                let (u, v) = (
                    direction(&segments[ends[x].0], ends[x].1),
                    direction(&segments[ends[y].0], ends[y].1),
                );
                let cos = u.0 * v.0 + u.1 * v.1;
                if ends.len() == 2 || cos < -0.5 {
                    pairs.push((cos, x, y));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut used = vec![false; ends.len()];
        for (_, x, y) in pairs {
            if used[x] || used[y] {
                continue;
            }
            used[x] = true;
            used[y] = true;
            link.insert(ends[x], ends[y]);
            link.insert(ends[y], ends[x]);
        }
    }

    // Walk the pairing into chains: open ones first, then cycles.
    let mut used = vec![false; segments.len()];
    let mut curves = Vec::new();
    let emit = |pix: Vec<Pix>, closed: bool, curves: &mut Vec<GridCurve>| {
        if pix.len() >= min_nodes {
            let (a, b) = (pix[0], *pix.last().expect("non-empty"));
            let closed = closed || (pix.len() > 3 && a.0.abs_diff(b.0) <= 1 && a.1.abs_diff(b.1) <= 1);
            curves.push(GridCurve { nodes: pix, closed });
        }
    };
    let follow = |start: (usize, bool), used: &mut Vec<bool>| -> (Vec<Pix>, bool) {
        let mut pix: Vec<Pix> = Vec::new();
        let mut end = start;
        loop {
            let (k, at_start) = end;
            if used[k] {
                return (pix, true);
            }
            used[k] = true;
            let mut piece = segments[k].pix.clone();
            if !at_start {
                piece.reverse();
            }
            if pix.last() == piece.first() {
                piece.remove(0);
            }
            pix.extend(piece);
            match link.get(&(k, !at_start)) {
                Some(&next) => end = next,
                None => return (pix, false),
            }
        }
    };
    for k in 0..segments.len() {
        if !segments[k].alive || used[k] || segments[k].ends.is_none() {
            continue;
        }
        for at_start in [true, false] {
            if !used[k] && !link.contains_key(&(k, at_start)) {
                let (pix, closed) = follow((k, at_start), &mut used);
                emit(pix, closed, &mut curves);
            }
        }
    }
    for k in 0..segments.len() {
        if !segments[k].alive || used[k] {
            continue;
        }
        if segments[k].ends.is_none() {
            used[k] = true;
            emit(segments[k].pix.clone(), true, &mut curves);
        } else {
            let (mut pix, _) = follow((k, true), &mut used);
            if pix.len() > 1 && pix.first() == pix.last() {
                pix.pop();
            }
            emit(pix, true, &mut curves);
        }
    }
    curves
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

pub fn polyline_length(points: &[Point]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1))
        .sum()
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Proper or touching intersection of segments `p1p2` and `q1q2`, returned
/// as the parameters `(s, t)` along each segment.
pub fn segment_intersection(p1: Point, p2: Point, q1: Point, q2: Point) -> Option<(f64, f64)> {
    let r = (p2.0 - p1.0, p2.1 - p1.1);
    let s = (q2.0 - q1.0, q2.1 - q1.1);
    let denom = r.0 * s.1 - r.1 * s.0;
    if denom == 0.0 {
        return None;
    }
    let qp = (q1.0 - p1.0, q1.1 - p1.1);
    let t = (qp.0 * s.1 - qp.1 * s.0) / denom;
    let u = (qp.0 * r.1 - qp.1 * r.0) / denom;
    if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
        Some((t, u))
    } else {
        None
    }
}

fn segments_touch(a1: Point, a2: Point, b1: Point, b2: Point) -> bool {
    let d1 = cross(b1, b2, a1);
    let d2 = cross(b1, b2, a2);
    let d3 = cross(a1, a2, b1);
    let d4 = cross(a1, a2, b2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    let on = |p: Point, q: Point, r: Point, d: f64| {
        d == 0.0 && r.0 >= p.0.min(q.0) && r.0 <= p.0.max(q.0) && r.1 >= p.1.min(q.1) && r.1 <= p.1.max(q.1)
    };
    on(b1, b2, a1, d1) || on(b1, b2, a2, d2) || on(a1, a2, b1, d3) || on(a1, a2, b2, d4)
}

/// First pair of non-adjacent edges of the closed polygon that touch.
pub fn find_self_intersection(poly: &[Point]) -> Option<(usize, usize)> {
    let n = poly.len();
    if n < 4 {
        return None;
    }
    // Bounding boxes prune most pairs.
    let boxes: Vec<(f64, f64, f64, f64)> = (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            (a.0.min(b.0), a.0.max(b.0), a.1.min(b.1), a.1.max(b.1))
        })
        .collect();
    for i in 0..n {
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (bi, bj) = (boxes[i], boxes[j]);
            if bi.1 < bj.0 || bj.1 < bi.0 || bi.3 < bj.2 || bj.3 < bi.2 {
                continue;
            }
            if segments_touch(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]) {
                return Some((i, j));
            }
        }
    }
    None
}

/// Signed shoelace area (positive for counter-clockwise vertex order).
pub fn signed_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    let terms: Vec<f64> = (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .collect();
    0.5 * pairwise_sum(&terms)
}

/// Absolute shoelace area of a simple closed polygon. The closing edge is
/// implied; a repeated first vertex at the end is accepted.
pub fn polygon_area(boundary: &[Point]) -> Result<f64, ManifoldError> {
    let poly = strip_closing_vertex(boundary);
    if poly.len() < 3 {
        return Err(ManifoldError::TooFewVertices(poly.len()));
    }
    if let Some((i, j)) = find_self_intersection(poly) {
        return Err(ManifoldError::SelfIntersecting(i, j));
    }
    Ok(signed_area(poly).abs())
}

fn strip_closing_vertex(poly: &[Point]) -> &[Point] {
    match (poly.first(), poly.last()) {
        (Some(a), Some(b)) if poly.len() > 1 && a == b => &poly[..poly.len() - 1],
        _ => poly,
    }
}

pub fn centroid(poly: &[Point]) -> Point {
    let poly = strip_closing_vertex(poly);
    let a = signed_area(poly);
    let n = poly.len();
    if a == 0.0 {
        let m = n.max(1) as f64;
        return (
            poly.iter().map(|p| p.0).sum::<f64>() / m,
            poly.iter().map(|p| p.1).sum::<f64>() / m,
        );
    }
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        let w = p.0 * q.1 - q.0 * p.1;
        cx += (p.0 + q.0) * w;
        cy += (p.1 + q.1) * w;
    }
    (cx / (6.0 * a), cy / (6.0 * a))
}

/// Even-odd point-in-polygon test.
pub fn contains(poly: &[Point], p: Point) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.1 > p.1) != (b.1 > p.1) && p.0 < (b.0 - a.0) * (p.1 - a.1) / (b.1 - a.1) + a.0 {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Resamples an open polyline to `n` points equally spaced in arc length,
/// keeping both endpoints.
pub fn resample(points: &[Point], n: usize) -> Vec<Point> {
    if points.len() < 2 || n < 2 {
        return points.to_vec();
    }
    let mut cum = Vec::with_capacity(points.len());
    cum.push(0.0);
    for w in points.windows(2) {
        let last = *cum.last().expect("non-empty");
        cum.push(last + (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1));
    }
    let total = *cum.last().expect("non-empty");
    if total == 0.0 {
        return vec![points[0]; n];
    }
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for k in 0..n {
        if k + 1 == n {
            out.push(*points.last().expect("non-empty"));
            break;
        }
        let s = total * k as f64 / (n - 1) as f64;
        while seg + 2 < cum.len() && cum[seg + 1] < s {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let t = if len > 0.0 { (s - cum[seg]) / len } else { 0.0 };
        let (a, b) = (points[seg], points[seg + 1]);
        out.push((a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)));
    }
    out
}

// ---------------------------------------------------------------------------
// Lobes
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LobeLabel {
    Top,
    Bottom,
}

impl LobeLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            LobeLabel::Top => "top",
            LobeLabel::Bottom => "bottom",
        }
    }
}

/// A region of the section bounded by one unstable and one stable arc.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LobeRegion {
    pub label: LobeLabel,
    /// Closed boundary, unstable arc first, without a repeated vertex.
    pub boundary: Vec<Point>,
    pub area: f64,
    /// Heteroclinic points delimiting the lobe.
    pub intersections: Vec<Point>,
    pub present: bool,
    pub diagnostic: Option<String>,
}

impl LobeRegion {
    fn absent(label: LobeLabel, why: String) -> Self {
        Self {
            label,
            boundary: Vec::new(),
            area: 0.0,
            intersections: Vec::new(),
            present: false,
            diagnostic: Some(why),
        }
    }

    pub fn centroid(&self) -> Option<Point> {
        (self.present && self.boundary.len() >= 3).then(|| centroid(&self.boundary))
    }
}

/// Settings of the lobe construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LobeConfig {
    /// Curve endpoints closer than this many grid cells are joined.
    pub link_gap_cells: f64,
    /// Samples per boundary arc before the shoelace sum.
    pub arc_samples: usize,
    /// An unstable chain whose end gap is at most this fraction of its node
    /// count still counts as closed. Ridges fade where the loop runs along
    /// the rim of an escape basin.
    pub close_fraction: f64,
}

impl Default for LobeConfig {
    fn default() -> Self {
        Self {
            link_gap_cells: 4.0,
            arc_samples: ARC_SAMPLES,
            close_fraction: 0.05,
        }
    }
}

/// Both lobes plus the diagnostics of the construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LobePair {
    pub top: LobeRegion,
    pub bottom: LobeRegion,
    /// The closed unstable curve of the upper saddle.
    pub unstable_loop: Vec<Point>,
    /// Stable chords crossing the loop interior, as used for the split.
    pub chords: Vec<Vec<Point>>,
    pub intersection_count: usize,
    pub diagnostics: Vec<String>,
}

impl LobePair {
    pub fn get(&self, label: LobeLabel) -> &LobeRegion {
        match label {
            LobeLabel::Top => &self.top,
            LobeLabel::Bottom => &self.bottom,
        }
    }
}

/// Polyline in "cell units" so that gaps are measured isotropically.
fn cell_metric(field: &LdField) -> (f64, f64) {
    (field.section().dy(), field.section().dpy())
}

fn cell_dist(a: Point, b: Point, m: (f64, f64)) -> f64 {
    ((a.0 - b.0) / m.0).hypot((a.1 - b.1) / m.1)
}

/// Greedily joins polylines whose endpoints lie within `gap` cells,
/// longest first.
fn link_curves(curves: &[Vec<Point>], gap: f64, m: (f64, f64)) -> Vec<Vec<Point>> {
    let mut pool: Vec<Vec<Point>> = curves.to_vec();
    pool.sort_by_key(|c| std::cmp::Reverse(c.len()));
    let mut out = Vec::new();
    while !pool.is_empty() {
        let mut chain = pool.remove(0);
        loop {
            let head = chain[0];
            let tail = *chain.last().expect("non-empty");
            if chain.len() > 3 && cell_dist(head, tail, m) <= 1.5 {
                break;
            }
            let mut best: Option<(usize, bool, bool, f64)> = None;
            for (k, c) in pool.iter().enumerate() {
                let (a, b) = (c[0], *c.last().expect("non-empty"));
                for (at_tail, end, rev) in [(true, a, false), (true, b, true), (false, b, false), (false, a, true)] {
                    let from = if at_tail { tail } else { head };
                    let d = cell_dist(from, end, m);
                    if d <= gap && best.is_none_or(|x| d < x.3) {
                        best = Some((k, at_tail, rev, d));
                    }
                }
            }
            let Some((k, at_tail, rev, _)) = best else { break };
            let mut piece = pool.remove(k);
            if rev {
                piece.reverse();
            }
            if at_tail {
                chain.extend(piece);
            } else {
                piece.extend(chain);
                chain = piece;
            }
        }
        out.push(chain);
    }
    out
}

/// Position on the closed loop: segment index plus parameter, and the point.
#[derive(Debug, Clone, Copy)]
struct LoopPoint {
    pos: f64,
    point: Point,
}

/// Closest point of the closed loop to `q`, in grid-cell units.
fn nearest_on_loop(loop_pts: &[Point], q: Point, m: (f64, f64)) -> LoopPoint {
    let n = loop_pts.len();
    let mut best = (
        f64::INFINITY,
        LoopPoint {
            pos: 0.0,
            point: loop_pts[0],
        },
    );
    for i in 0..n {
        let (p1, p2) = (loop_pts[i], loop_pts[(i + 1) % n]);
        let (dx, dy) = ((p2.0 - p1.0) / m.0, (p2.1 - p1.1) / m.1);
        let (wx, wy) = ((q.0 - p1.0) / m.0, (q.1 - p1.1) / m.1);
        let len2 = dx * dx + dy * dy;
        let t = if len2 > 0.0 {
            ((wx * dx + wy * dy) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let d = (wx - t * dx).hypot(wy - t * dy);
        if d < best.0 {
            let point = (p1.0 + t * (p2.0 - p1.0), p1.1 + t * (p2.1 - p1.1));
            best = (
                d,
                LoopPoint {
                    pos: i as f64 + t,
                    point,
                },
            );
        }
    }
    best.1
}

/// Outside gaps of at most this many nodes between inside runs are treated
/// as the curve grazing the loop, not leaving it.
const GRAZE_NODES: usize = 2;

/// Pieces of `curve` that enter the loop and leave it again. Each piece runs
/// from its entry point on the loop through the interior nodes to its exit
/// point. Ridges are traced on the same grid as the loop and often share
/// nodes with it, so entries and exits come from the inside/outside status
/// of the nodes rather than from exact segment intersections.
type ChordPiece = (Vec<Point>, LoopPoint, LoopPoint);

fn loop_chords(loop_pts: &[Point], curve: &[Point], m: (f64, f64)) -> (Vec<ChordPiece>, usize) {
    let n = curve.len();
    let mut inside: Vec<bool> = curve.iter().map(|&q| contains(loop_pts, q)).collect();
    // Fill short outside gaps between inside nodes.
    let mut k = 0;
    while k < n {
        if inside[k] {
            k += 1;
            continue;
        }
        let start = k;
        while k < n && !inside[k] {
            k += 1;
        }
        if start > 0 && k < n && k - start <= GRAZE_NODES {
            inside[start..k].iter_mut().for_each(|v| *v = true);
        }
    }
    let mut out = Vec::new();
    let mut transitions = 0;
    let mut k = 0;
    while k < n {
        if !inside[k] {
            k += 1;
            continue;
        }
        let a = k;
        while k < n && inside[k] {
            k += 1;
        }
        let b = k - 1;
        transitions += usize::from(a > 0) + usize::from(b + 1 < n);
        if a == 0 || b + 1 == n || b - a + 1 < 3 {
            continue;
        }
        let mid = |p: Point, q: Point| (0.5 * (p.0 + q.0), 0.5 * (p.1 + q.1));
        let entry = nearest_on_loop(loop_pts, mid(curve[a - 1], curve[a]), m);
        let exit = nearest_on_loop(loop_pts, mid(curve[b], curve[b + 1]), m);
        let mut piece = vec![entry.point];
        piece.extend_from_slice(&curve[a..=b]);
        piece.push(exit.point);
        out.push((piece, entry, exit));
    }
    (out, transitions)
}

/// Arc of the closed loop from position `a` forward (increasing index,
/// wrapping) to position `b`.
fn loop_arc(loop_pts: &[Point], a: f64, b: f64) -> Vec<Point> {
    let n = loop_pts.len();
    let at = |pos: f64| {
        let i = pos.floor() as usize % n;
        let t = pos - pos.floor();
        let (p, q) = (loop_pts[i], loop_pts[(i + 1) % n]);
        (p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1))
    };
    let end = if b > a { b } else { b + n as f64 };
    let mut out = vec![at(a)];
    let mut k = a.floor() as usize + 1;
    while (k as f64) < end {
        out.push(loop_pts[k % n]);
        k += 1;
    }
    out.push(at(end % n as f64));
    out
}

/// A stable chord through the loop and the two regions it cuts off.
#[derive(Debug, Clone)]
struct Chord {
    points: Vec<Point>,
    /// Boundary of the side with the larger centroid `y`, then the other.
    upper: Vec<Point>,
    lower: Vec<Point>,
    ends: (Point, Point),
    upper_area: f64,
}

/// Builds the lobes from extracted curves.
///
/// The unstable curves are joined into the largest closed loop around the
/// accessible region's centre: the section trace of the unstable manifold
/// of the upper saddle. Stable curves that cross it twice give chords that
/// split its interior. The strip of lowest forward descriptor between
/// neighbouring chords holds the trajectories turning back to the entrance
/// channel; its two edges are the well stable manifolds, and each edge
/// together with the unstable arc on its far side bounds a lobe. The top
/// lobe is the one on the side of larger `y`.
pub fn identify_lobes(
    stable: &[ManifoldCurve],
    unstable: &[ManifoldCurve],
    field: &LdField,
) -> Result<LobePair, ManifoldError> {
    identify_lobes_with(stable, unstable, field, &LobeConfig::default())
}

pub fn identify_lobes_with(
    stable: &[ManifoldCurve],
    unstable: &[ManifoldCurve],
    field: &LdField,
    cfg: &LobeConfig,
) -> Result<LobePair, ManifoldError> {
    if stable.is_empty() || unstable.is_empty() {
        return Err(ManifoldError::InvalidInput(
            "lobe construction needs both stable and unstable curves".into(),
        ));
    }
    let m = cell_metric(field);
    let mut diagnostics = Vec::new();
    let absent_pair = |why: String, diagnostics: Vec<String>| LobePair {
        top: LobeRegion::absent(LobeLabel::Top, why.clone()),
        bottom: LobeRegion::absent(LobeLabel::Bottom, why),
        unstable_loop: Vec::new(),
        chords: Vec::new(),
        intersection_count: 0,
        diagnostics,
    };

    // Centre of the accessible part of the section.
    let (n_p, n_y) = field.status.dim();
    let (mut cy, mut cp, mut cnt) = (0.0, 0.0, 0usize);
    for i in 0..n_p {
        for j in 0..n_y {
            if field.status[[i, j]] != NodeStatus::Inaccessible {
                let (y, p) = field.coords(i, j);
                cy += y;
                cp += p;
                cnt += 1;
            }
        }
    }
    let centre = (cy / cnt.max(1) as f64, cp / cnt.max(1) as f64);

    let pieces: Vec<Vec<Point>> = unstable.iter().map(|c| c.points.clone()).collect();
    let loops = link_curves(&pieces, cfg.link_gap_cells, m);
    let end_gap = |c: &Vec<Point>| cell_dist(c[0], *c.last().expect("non-empty"), m);
    let loop_pts = loops
        .into_iter()
        .filter(|c| c.len() >= 3 && end_gap(c) <= cfg.link_gap_cells.max(cfg.close_fraction * c.len() as f64))
        .filter(|c| contains(c, centre))
        .max_by(|a, b| signed_area(a).abs().total_cmp(&signed_area(b).abs()));
    if let Some(c) = &loop_pts {
        let gap = end_gap(c);
        if gap > cfg.link_gap_cells {
            diagnostics.push(format!("unstable loop closed across a gap of {gap:.1} cells"));
        }
    }
    let Some(mut loop_pts) = loop_pts else {
        let why = "no closed unstable curve encloses the section centre".to_string();
        diagnostics.push(why.clone());
        return Ok(absent_pair(why, diagnostics));
    };
    if loop_pts.first() == loop_pts.last() {
        loop_pts.pop();
    }
    if signed_area(&loop_pts) < 0.0 {
        loop_pts.reverse();
    }

    let stable_pieces: Vec<Vec<Point>> = stable.iter().map(|c| c.points.clone()).collect();
    let stable_chains = link_curves(&stable_pieces, cfg.link_gap_cells, m);

    let mut chords = Vec::new();
    let mut intersection_count = 0;
    for curve in &stable_chains {
        if curve.len() < 2 {
            continue;
        }
        let (pieces, transitions) = loop_chords(&loop_pts, curve, m);
        intersection_count += transitions;
        for (piece, a, b) in pieces {
            // Closing arcs: loop from b back to a in either direction.
            let mut side1 = piece.clone();
            let arc1 = loop_arc(&loop_pts, b.pos, a.pos);
            side1.extend(arc1.iter().skip(1).take(arc1.len().saturating_sub(2)));
            let mut side2 = piece.clone();
            let arc2 = {
                let mut r = loop_arc(&loop_pts, a.pos, b.pos);
                r.reverse();
                r
            };
            side2.extend(arc2.iter().skip(1).take(arc2.len().saturating_sub(2)));
            let (c1, c2) = (centroid(&side1), centroid(&side2));
            let (upper, lower) = if c1.0 >= c2.0 { (side1, side2) } else { (side2, side1) };
            let upper_area = signed_area(&upper).abs();
            chords.push(Chord {
                points: piece,
                upper,
                lower,
                ends: (a.point, b.point),
                upper_area,
            });
        }
    }

    if chords.is_empty() {
        let why = format!("fewer than 2 heteroclinic intersections ({intersection_count} found)");
        diagnostics.push(why.clone());
        let mut pair = absent_pair(why, diagnostics);
        pair.unstable_loop = loop_pts;
        pair.intersection_count = intersection_count;
        return Ok(pair);
    }

    // Order chords from the top side downwards and find the strip of lowest
    // mean forward descriptor between neighbours.
    chords.sort_by(|a, b| a.upper_area.total_cmp(&b.upper_area));
    chords.dedup_by(|a, b| (a.upper_area - b.upper_area).abs() < 1e-12);
    let nodes_in_loop: Vec<(Point, f64)> = {
        let mut v = Vec::new();
        for i in 0..n_p {
            for j in 0..n_y {
                if field.status[[i, j]] == NodeStatus::Inaccessible {
                    continue;
                }
                let p = field.coords(i, j);
                if contains(&loop_pts, p) {
                    v.push((p, field.forward[[i, j]]));
                }
            }
        }
        v
    };
    let upper_stats: Vec<(f64, usize)> = chords
        .iter()
        .map(|ch| {
            let vals: Vec<f64> = nodes_in_loop
                .iter()
                .filter(|(p, _)| contains(&ch.upper, *p))
                .map(|(_, v)| *v)
                .collect();
            (pairwise_sum(&vals), vals.len())
        })
        .collect();
    let total_stats = {
        let vals: Vec<f64> = nodes_in_loop.iter().map(|(_, v)| *v).collect();
        (pairwise_sum(&vals), vals.len())
    };

    // Strips: above the first chord, between neighbours, below the last.
    let mut best: Option<(usize, f64)> = None;
    for k in 1..chords.len() {
        let (s_hi, n_hi) = upper_stats[k - 1];
        let (s_lo, n_lo) = upper_stats[k];
        if n_lo <= n_hi {
            continue;
        }
        let mean = (s_lo - s_hi) / (n_lo - n_hi) as f64;
        if best.is_none_or(|b| mean < b.1) {
            best = Some((k, mean));
        }
    }
    let (top_chord, bottom_chord) = match best {
        Some((k, mean)) => {
            let outside_mean = {
                let (s_hi, n_hi) = upper_stats[k - 1];
                let (s_lo, n_lo) = upper_stats[k];
                let rest = total_stats.1 - (n_lo - n_hi);
                (total_stats.0 - (s_lo - s_hi)) / rest.max(1) as f64
            };
            if mean < outside_mean {
                (k - 1, k)
            } else {
                diagnostics.push("no low-descriptor strip found; splitting at the median chord".into());
                let k = chords.len() / 2;
                (k, k)
            }
        }
        None => (0, 0),
    };

    let make = |label: LobeLabel, ch: &Chord| -> LobeRegion {
        let boundary_raw = match label {
            LobeLabel::Top => &ch.upper,
            LobeLabel::Bottom => &ch.lower,
        };
        let chord_len = ch.points.len();
        let stable_arc = &boundary_raw[..chord_len];
        let mut unstable_arc: Vec<Point> = vec![*stable_arc.last().expect("non-empty")];
        unstable_arc.extend_from_slice(&boundary_raw[chord_len..]);
        unstable_arc.push(stable_arc[0]);
        let su = resample(&unstable_arc, cfg.arc_samples);
        let ss = resample(stable_arc, cfg.arc_samples);
        // Unstable arc first, then the stable arc without the shared ends.
        let mut boundary = su;
        boundary.extend(ss.iter().skip(1).take(ss.len().saturating_sub(2)));
        match polygon_area(&boundary) {
            Ok(area) => LobeRegion {
                label,
                boundary,
                area,
                intersections: vec![ch.ends.0, ch.ends.1],
                present: true,
                diagnostic: None,
            },
            Err(e) => {
                // Fall back to the raw grid polygon, whose edges follow the ridge nodes.
                let area = signed_area(boundary_raw).abs();
                LobeRegion {
                    label,
                    boundary,
                    area,
                    intersections: vec![ch.ends.0, ch.ends.1],
                    present: true,
                    diagnostic: Some(format!("resampled boundary rejected ({e}); raw polygon area used")),
                }
            }
        }
    };
    let top = make(LobeLabel::Top, &chords[top_chord]);
    let bottom = make(LobeLabel::Bottom, &chords[bottom_chord]);
    Ok(LobePair {
        top,
        bottom,
        unstable_loop: loop_pts,
        chords: chords.into_iter().map(|c| c.points).collect(),
        intersection_count,
        diagnostics,
    })
}

/// Writes curves as CSV: `kind,curve,index,y,p_y`.
pub fn write_curves_csv<W: Write>(curves: &[ManifoldCurve], mut w: W) -> Result<(), ManifoldError> {
    writeln!(w, "kind,curve,index,y,p_y")?;
    for (k, c) in curves.iter().enumerate() {
        for (i, p) in c.points.iter().enumerate() {
            writeln!(w, "{},{},{},{},{}", c.kind.as_str(), k, i, p.0, p.1)?;
        }
    }
    Ok(())
}

/// Writes lobe boundaries as CSV: `label,index,y,p_y`.
pub fn write_lobes_csv<W: Write>(lobes: &LobePair, mut w: W) -> Result<(), ManifoldError> {
    writeln!(w, "label,index,y,p_y")?;
    for lobe in [&lobes.top, &lobes.bottom] {
        for (i, p) in lobe.boundary.iter().enumerate() {
            writeln!(w, "{},{},{},{}", lobe.label.as_str(), i, p.0, p.1)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptors::SectionSpec;
    use crate::SystemParams;
    use proptest::prelude::*;

    fn meta(n: usize) -> FieldMeta {
        FieldMeta {
            section: SectionSpec::default()
                .with_grid(n, n)
                .with_ranges((-1.0, 1.0), (-1.0, 1.0)),
            params: SystemParams::new(0.0),
            tau: 8.0,
            p_exponent: 0.5,
            step: 1e-3,
            escape_radius: 10.0,
        }
    }

    /// A circular unstable ridge of radius `r` cut by a stable ridge along `p = slope * y`.
    fn disc_field(n: usize, r: f64, slope: f64) -> LdField {
        let m = meta(n);
        let ys = m.section.ys();
        let ps = m.section.pys();
        let f = Array2::from_shape_fn((n, n), |(i, j)| (ps[i] - slope * ys[j]).abs().sqrt());
        let b = Array2::from_shape_fn((n, n), |(i, j)| (ys[j].hypot(ps[i]) - r).abs().sqrt());
        let status = Array2::from_elem((n, n), NodeStatus::Complete);
        LdField::from_parts(m, f, b, status).unwrap()
    }

    #[test]
    fn square_and_triangle() {
        let sq = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
        assert_eq!(polygon_area(&sq).unwrap(), 1.0);
        let tri = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)];
        assert_eq!(polygon_area(&tri).unwrap(), 0.5);
        let mut rev = tri;
        rev.reverse();
        assert_eq!(polygon_area(&rev).unwrap(), 0.5);
        let closed = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (0.0, 0.0)];
        assert_eq!(polygon_area(&closed).unwrap(), 0.5);
    }

    #[test]
    fn polygon_errors() {
        let bow = [(0.0, 0.0), (1.0, 1.0), (1.0, 0.0), (0.0, 1.0)];
        assert!(matches!(polygon_area(&bow), Err(ManifoldError::SelfIntersecting(_, _))));
        assert!(matches!(
            polygon_area(&[(0.0, 0.0), (1.0, 0.0)]),
            Err(ManifoldError::TooFewVertices(2))
        ));
    }

    #[test]
    fn resample_keeps_ends_and_spacing() {
        let line = [(0.0, 0.0), (1.0, 0.0), (1.0, 2.0)];
        let r = resample(&line, 7);
        assert_eq!(r.len(), 7);
        assert_eq!(r[0], (0.0, 0.0));
        assert_eq!(r[6], (1.0, 2.0));
        assert!((r[3].0 - 1.0).abs() < 1e-12 && (r[3].1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn chain_orders_a_line_and_prunes_spurs() {
        let mut m = Array2::from_elem((20, 40), false);
        for j in 2..38 {
            m[[10, j]] = true;
        }
        for i in 11..13 {
            m[[i, 20]] = true;
        }
        let curves = chain_ridges(&m, 10);
        assert_eq!(curves.len(), 1);
        let c = &curves[0];
        assert_eq!(c.nodes.len(), 36);
        assert!(!c.closed);
        assert!(c.nodes.windows(2).all(|w| w[0].1.abs_diff(w[1].1) == 1));
    }

    #[test]
    fn chain_closes_rings() {
        let n = 61;
        let m = Array2::from_shape_fn((n, n), |(i, j)| {
            let r = (i as f64 - 30.0).hypot(j as f64 - 30.0);
            (r - 20.0).abs() < 0.5
        });
        let curves = chain_ridges(&m, 10);
        assert_eq!(curves.len(), 1);
        assert!(curves[0].closed);
        let pts: Vec<Point> = curves[0].nodes.iter().map(|&(i, j)| (j as f64, i as f64)).collect();
        let area = polygon_area(&pts).unwrap();
        let exact = std::f64::consts::PI * 400.0;
        assert!((area - exact).abs() / exact < 0.05, "{area}");
    }

    #[test]
    fn ridge_nodes_exceed_threshold() {
        let f = disc_field(121, 0.6, 0.3);
        let set = extract_manifolds(&f, 0.97).unwrap();
        assert!(!set.stable.is_empty() && !set.unstable.is_empty());
        for (curves, part, thr) in [
            (&set.stable, FieldPart::Forward, set.stable_threshold),
            (&set.unstable, FieldPart::Backward, set.unstable_threshold),
        ] {
            let g = gradient_magnitude(&f, part);
            for c in curves {
                assert!(c.nodes.iter().all(|&(i, j)| g[[i, j]] > thr));
            }
        }
    }

    #[test]
    fn synthetic_disc_splits_into_halves() {
        let f = disc_field(161, 0.6, -0.3);
        let set = extract_manifolds(&f, 0.97).unwrap();
        let lobes = identify_lobes(&set.stable, &set.unstable, &f).unwrap();
        assert!(lobes.top.present && lobes.bottom.present);
        assert!(lobes.intersection_count >= 2);
        let half = std::f64::consts::PI * 0.36 / 2.0;
        for lobe in [&lobes.top, &lobes.bottom] {
            assert!((lobe.area - half).abs() / half < 0.03, "{}", lobe.area);
        }
        assert!(lobes.top.centroid().unwrap().0 > 0.0);
        assert!(lobes.bottom.centroid().unwrap().0 < 0.0);
    }

    #[test]
    fn faded_ring_segment_is_bridged() {
        let mut f = disc_field(161, 0.6, -0.3);
        let (ys, ps) = (f.meta.section.ys(), f.meta.section.pys());
        for ((i, j), v) in f.backward.indexed_iter_mut() {
            let t = ps[i].atan2(ys[j]);
            if (1.2..1.4).contains(&t) {
                *v = 0.3;
            }
        }
        f.total = &f.forward + &f.backward;
        let set = extract_manifolds(&f, 0.97).unwrap();
        let lobes = identify_lobes(&set.stable, &set.unstable, &f).unwrap();
        assert!(lobes.top.present && lobes.bottom.present, "{:?}", lobes.diagnostics);
        assert!(lobes.diagnostics.iter().any(|d| d.contains("gap")));
        let half = std::f64::consts::PI * 0.36 / 2.0;
        for lobe in [&lobes.top, &lobes.bottom] {
            assert!((lobe.area - half).abs() / half < 0.05, "{}", lobe.area);
        }
    }

    #[test]
    fn missing_crossings_leave_lobes_absent() {
        // The stable ridge runs outside the ring.
        let n = 121;
        let m = meta(n);
        let ys = m.section.ys();
        let ps = m.section.pys();
        let f = Array2::from_shape_fn((n, n), |(i, _)| (ps[i] - 0.8).abs().sqrt());
        let b = Array2::from_shape_fn((n, n), |(i, j)| (ys[j].hypot(ps[i]) - 0.5).abs().sqrt());
        let field = LdField::from_parts(m, f, b, Array2::from_elem((n, n), NodeStatus::Complete)).unwrap();
        let set = extract_manifolds(&field, 0.97).unwrap();
        let lobes = identify_lobes(&set.stable, &set.unstable, &field).unwrap();
        assert!(!lobes.top.present && !lobes.bottom.present);
        assert_eq!(lobes.top.area, 0.0);
        assert!(lobes.top.diagnostic.is_some());
    }

    #[test]
    fn invalid_quantile_rejected() {
        let f = disc_field(21, 0.5, 0.0);
        assert!(extract_manifolds(&f, 1.0).is_err());
        assert!(extract_manifolds(&f, 0.0).is_err());
    }

    #[test]
    fn csv_headers() {
        let f = disc_field(121, 0.6, 0.3);
        let set = extract_manifolds(&f, 0.97).unwrap();
        let mut buf = Vec::new();
        write_curves_csv(&set.stable, &mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("kind,curve,index,y,p_y\nstable,0,0,"));
    }

    fn star(n: usize, radii: &[f64]) -> Vec<Point> {
        (0..n)
            .map(|k| {
                let t = std::f64::consts::TAU * k as f64 / n as f64;
                let r = radii[k % radii.len()];
                (r * t.cos(), r * t.sin())
            })
            .collect()
    }

    proptest! {
        #[test]
        fn area_invariant_under_rotation_and_reversal(
            radii in prop::collection::vec(0.2f64..2.0, 3..12),
            n in 3usize..40,
            shift in 0usize..40,
        ) {
            let poly = star(n, &radii);
            let a = polygon_area(&poly).unwrap();
            let mut rotated = poly.clone();
            rotated.rotate_left(shift % n);
            let mut reversed = poly.clone();
            reversed.reverse();
            prop_assert!((polygon_area(&rotated).unwrap() - a).abs() <= 1e-12 * a.max(1.0));
            prop_assert!((polygon_area(&reversed).unwrap() - a).abs() <= 1e-12 * a.max(1.0));
        }
    }
}
