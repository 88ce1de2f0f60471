//! Reference computations written independently of the library, used to
//! check its results.

#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::BinaryHeap;

pub type P2 = [f64; 2];

fn sub(a: P2, b: P2) -> P2 {
    [a[0] - b[0], a[1] - b[1]]
}

fn dot(a: P2, b: P2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Corners of a rectangle with center `c`, rotation `pitch` and full
/// extents `w` by `h`, counterclockwise.
pub fn rectangle(c: P2, pitch: f64, w: f64, h: f64) -> Vec<P2> {
    let (s, co) = pitch.sin_cos();
    [(0.5, 0.5), (-0.5, 0.5), (-0.5, -0.5), (0.5, -0.5)]
        .iter()
        .map(|&(a, b)| {
            let (x, z) = (a * w, b * h);
            [c[0] + co * x - s * z, c[1] + s * x + co * z]
        })
        .collect()
}

/// Axis-aligned rectangle from its corner extents.
pub fn aabb(lo: P2, hi: P2) -> Vec<P2> {
    vec![[hi[0], hi[1]], [lo[0], hi[1]], [lo[0], lo[1]], [hi[0], lo[1]]]
}

fn point_segment(p: P2, a: P2, b: P2) -> f64 {
    let ab = sub(b, a);
    let t = (dot(sub(p, a), ab) / dot(ab, ab).max(1e-300)).clamp(0.0, 1.0);
    let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
    dot(sub(p, q), sub(p, q)).sqrt()
}

/// Smallest overlap of the projections over all edge normals; negative
/// when some axis separates the polygons.
fn sat_overlap(a: &[P2], b: &[P2]) -> f64 {
    let mut best = f64::INFINITY;
    for poly in [a, b] {
        for i in 0..poly.len() {
            let e = sub(poly[(i + 1) % poly.len()], poly[i]);
            let len = dot(e, e).sqrt();
            let n = [e[1] / len, -e[0] / len];
            let proj = |p: &[P2]| {
                p.iter().map(|v| dot(*v, n)).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
            };
            let (alo, ahi) = proj(a);
            let (blo, bhi) = proj(b);
            best = best.min(ahi.min(bhi) - alo.max(blo));
        }
    }
    best
}

/// Signed distance between two convex polygons: the gap when disjoint,
/// minus the penetration depth when they overlap.
pub fn polygon_distance(a: &[P2], b: &[P2]) -> f64 {
    let overlap = sat_overlap(a, b);
    if overlap >= 0.0 {
        return -overlap;
    }
    let mut d = f64::INFINITY;
    for (p, q) in [(a, b), (b, a)] {
        for v in p {
            for i in 0..q.len() {
                d = d.min(point_segment(*v, q[i], q[(i + 1) % q.len()]));
            }
        }
    }
    d
}

/// Window parts as polygons centered on the plane `x_obs`: the sill from
/// the ground and the lintel from the top of the opening to the ceiling.
pub fn window_polygons(x_obs: f64, thickness: f64, sill: f64, opening: f64, ceiling: f64) -> [Vec<P2>; 2] {
    let (x0, x1) = (x_obs - 0.5 * thickness, x_obs + 0.5 * thickness);
    [aabb([x0, 0.0], [x1, sill]), aabb([x0, sill + opening], [x1, ceiling])]
}

pub fn window_distance(window: &[Vec<P2>; 2], poly: &[P2]) -> f64 {
    window.iter().map(|w| polygon_distance(poly, w)).fold(f64::INFINITY, f64::min)
}

/// Single-source shortest path on an 8-connected grid. Diagonal moves need
/// both side cells free. Returns step-count cost in cell units.
pub fn dijkstra(nx: usize, ny: usize, blocked: &[bool], s: (usize, usize), t: (usize, usize)) -> Option<f64> {
    let idx = |i: usize, j: usize| j * nx + i;
    let free = |i: isize, j: isize| i >= 0 && j >= 0 && (i as usize) < nx && (j as usize) < ny && !blocked[idx(i as usize, j as usize)];
    let mut dist = vec![f64::INFINITY; nx * ny];
    let mut done = vec![false; nx * ny];
    let mut heap = BinaryHeap::new();
    dist[idx(s.0, s.1)] = 0.0;
    heap.push(Reverse(Entry(0.0, s.0, s.1)));
    while let Some(Reverse(Entry(_, i, j))) = heap.pop() {
        if std::mem::replace(&mut done[idx(i, j)], true) {
            continue;
        }
        if (i, j) == t {
            return Some(dist[idx(i, j)]);
        }
        for di in -1isize..=1 {
            for dj in -1isize..=1 {
                if di == 0 && dj == 0 {
                    continue;
                }
                let (ii, jj) = (i as isize + di, j as isize + dj);
                if !free(ii, jj) {
                    continue;
                }
                if di != 0 && dj != 0 && !(free(i as isize + di, j as isize) && free(i as isize, j as isize + dj)) {
                    continue;
                }
                let step = if di != 0 && dj != 0 { 2f64.sqrt() } else { 1.0 };
                let nd = dist[idx(i, j)] + step;
                let k = idx(ii as usize, jj as usize);
                if nd < dist[k] {
                    dist[k] = nd;
                    heap.push(Reverse(Entry(nd, ii as usize, jj as usize)));
                }
            }
        }
    }
    None
}

struct Entry(f64, usize, usize);

impl PartialEq for Entry {
    fn eq(&self, o: &Self) -> bool {
        self.0 == o.0
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for Entry {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&o.0)
    }
}

/// Cells whose center lies within `radius` of an occupied cell center.
pub fn inflate_brute(nx: usize, ny: usize, occupied: &[bool], resolution: f64, radius: f64) -> Vec<bool> {
    let mut out = vec![false; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            out[j * nx + i] = occupied_within(nx, ny, occupied, resolution, (i, j), radius);
        }
    }
    out
}

pub fn occupied_within(nx: usize, ny: usize, occupied: &[bool], resolution: f64, (i, j): (usize, usize), radius: f64) -> bool {
    (0..ny).any(|jj| {
        (0..nx).any(|ii| {
            occupied[jj * nx + ii] && {
                let d = ((ii as f64 - i as f64).powi(2) + (jj as f64 - j as f64).powi(2)).sqrt() * resolution;
                d <= radius + 1e-9
            }
        })
    })
}

/// Classic fourth-order Runge–Kutta step.
pub fn rk4_step<const N: usize>(f: &dyn Fn(f64, &[f64; N]) -> [f64; N], t: f64, x: &[f64; N], h: f64) -> [f64; N] {
    let add = |a: &[f64; N], b: &[f64; N], s: f64| -> [f64; N] { std::array::from_fn(|i| a[i] + s * b[i]) };
    let k1 = f(t, x);
    let k2 = f(t + 0.5 * h, &add(x, &k1, 0.5 * h));
    let k3 = f(t + 0.5 * h, &add(x, &k2, 0.5 * h));
    let k4 = f(t + h, &add(x, &k3, h));
    std::array::from_fn(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

/// Whether a sequence of mode names reads
/// `Walking (Standing Jumping Standing Walking)*`, optionally stopping
/// part-way through the last group.
pub fn mode_grammar(modes: &[&str]) -> bool {
    const CYCLE: [&str; 4] = ["Standing", "Jumping", "Standing", "Walking"];
    match modes.split_first() {
        Some((&"Walking", rest)) => rest.iter().enumerate().all(|(k, m)| *m == CYCLE[k % 4]),
        _ => false,
    }
}
