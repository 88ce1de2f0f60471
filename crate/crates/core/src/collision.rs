//! Convex geometry for obstacle avoidance.
//!
//! The robot is enclosed in a pitched rectangle whose width and height are
//! decision variables; the six key points must be convex combinations of its
//! corners. Clearance to a convex obstacle `{y : A y ≤ b}` is expressed
//! through dual variables `(λ, μ)`: any feasible pair certifies
//! `dist(box, obstacle) ≥ −lᵀμ + (A P − b)ᵀλ` by weak duality. A brute-force
//! polygon distance serves as the independent check.

use nalgebra::{Matrix2, Vector2};
use thiserror::Error;

use crate::ad::{LocalFn, Scalar};
use crate::nlp::{Nlp, NlpError, SolveOptions};

/// Slack turning strict inequalities into closed ones.
pub const EPS_STRICT: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CollisionError {
    #[error("all key points coincide")]
    DegenerateKeypoints,
    #[error("malformed polygon: {0}")]
    MalformedPolygon(String),
    #[error("invalid obstacle: {0}")]
    InvalidObstacle(String),
    #[error("dual solve failed: {0}")]
    Solver(#[from] NlpError),
}

/// `{y ∈ R² : a_k · y ≤ b_k}` with unit normals.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexRegion {
    pub normals: Vec<Vector2<f64>>,
    pub offsets: Vec<f64>,
}

impl ConvexRegion {
    /// Normalizes each row to unit length.
    pub fn from_halfplanes(normals: Vec<Vector2<f64>>, offsets: Vec<f64>) -> Self {
        assert_eq!(normals.len(), offsets.len());
        let (normals, offsets) = normals
            .into_iter()
            .zip(offsets)
            .map(|(a, b)| {
                let n = a.norm();
                (a / n, b / n)
            })
            .unzip();
        Self { normals, offsets }
    }

    /// Axis-aligned rectangle; rows ordered `+x, +z, −x, −z`.
    pub fn rectangle(center: Vector2<f64>, half: Vector2<f64>) -> Self {
        Self {
            normals: vec![
                Vector2::new(1.0, 0.0),
                Vector2::new(0.0, 1.0),
                Vector2::new(-1.0, 0.0),
                Vector2::new(0.0, -1.0),
            ],
            offsets: vec![
                center.x + half.x,
                center.y + half.y,
                half.x - center.x,
                half.y - center.y,
            ],
        }
    }

    pub fn rows(&self) -> usize {
        self.normals.len()
    }

    pub fn contains(&self, y: &Vector2<f64>, tol: f64) -> bool {
        self.normals.iter().zip(&self.offsets).all(|(a, &b)| a.dot(y) <= b + tol)
    }

    /// Vertices in counterclockwise order, from consecutive face
    /// intersections (rows must be sorted by normal angle).
    pub fn vertices(&self) -> Vec<Vector2<f64>> {
        let k = self.rows();
        (0..k)
            .map(|i| {
                let (a, b) = (self.normals[i], self.normals[(i + 1) % k]);
                let m = Matrix2::new(a.x, a.y, b.x, b.y);
                m.lu().solve(&Vector2::new(self.offsets[i], self.offsets[(i + 1) % k])).unwrap_or_default()
            })
            .collect()
    }

    /// Axis-aligned extent `(min, max)` of the vertices.
    pub fn extent(&self) -> (Vector2<f64>, Vector2<f64>) {
        let v = self.vertices();
        let lo = v.iter().fold(Vector2::repeat(f64::INFINITY), |a, p| a.inf(p));
        let hi = v.iter().fold(Vector2::repeat(f64::NEG_INFINITY), |a, p| a.sup(p));
        (lo, hi)
    }
}

/// Pitched rectangle `{P + R(θ) z : L z ≤ l}` with `L` rows `+x, +z, −x, −z`
/// and `l = (w/2, h/2, w/2, h/2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub center: Vector2<f64>,
    pub pitch: f64,
    pub width: f64,
    pub height: f64,
}

pub const BOX_NORMALS: [[f64; 2]; 4] = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];

/// Corner directions in units of `(w/2, h/2)`, counterclockwise.
pub const CORNERS: [[f64; 2]; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];

impl BoundingBox {
    pub fn rotation(&self) -> Matrix2<f64> {
        let (s, c) = self.pitch.sin_cos();
        Matrix2::new(c, -s, s, c)
    }

    pub fn l_vector(&self) -> [f64; 4] {
        let (hw, hh) = (0.5 * self.width, 0.5 * self.height);
        [hw, hh, hw, hh]
    }

    pub fn vertices(&self) -> [Vector2<f64>; 4] {
        let r = self.rotation();
        CORNERS.map(|c| self.center + r * Vector2::new(c[0] * 0.5 * self.width, c[1] * 0.5 * self.height))
    }

    /// The box as a world-frame half-plane region.
    pub fn region(&self) -> ConvexRegion {
        let r = self.rotation();
        let l = self.l_vector();
        let normals: Vec<Vector2<f64>> = BOX_NORMALS.iter().map(|n| r * Vector2::new(n[0], n[1])).collect();
        let offsets = normals.iter().zip(l).map(|(n, li)| li + n.dot(&self.center)).collect();
        ConvexRegion { normals, offsets }
    }

    /// Bilinear corner weights of a point, each row summing to one; all
    /// weights are nonnegative when the point lies inside the box.
    pub fn corner_weights(&self, p: &Vector2<f64>) -> [f64; 4] {
        let local = self.rotation().transpose() * (p - self.center);
        let s = local.x / self.width + 0.5;
        let t = local.y / self.height + 0.5;
        [(1.0 - s) * (1.0 - t), s * (1.0 - t), s * t, (1.0 - s) * t]
    }
}

/// Window: a ground sill and an overhead lintel sharing the plane `x_obs`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowObstacle {
    pub lower: ConvexRegion,
    pub upper: ConvexRegion,
    pub x_obs: f64,
    pub opening_height: f64,
}

impl WindowObstacle {
    /// Sill of the given height from the ground, lintel from
    /// `sill + opening` up to `ceiling`, both `thickness` deep around `x_obs`.
    pub fn new(x_obs: f64, thickness: f64, sill: f64, opening: f64, ceiling: f64) -> Result<Self, CollisionError> {
        if !(thickness > 0.0) {
            return Err(CollisionError::InvalidObstacle("thickness must be positive".into()));
        }
        if !(opening > 0.0) {
            return Err(CollisionError::InvalidObstacle("opening height must be positive".into()));
        }
        if !(sill >= 0.0) || !(ceiling > sill + opening) {
            return Err(CollisionError::InvalidObstacle("need 0 <= sill and sill + opening < ceiling".into()));
        }
        // a zero-height sill is represented by a sliver just below the ground
        let sill_bottom = if sill > 0.0 { 0.0 } else { -0.01 };
        let sill_top = if sill > 0.0 { sill } else { 0.0 };
        let lower = ConvexRegion::rectangle(
            Vector2::new(x_obs, 0.5 * (sill_top + sill_bottom)),
            Vector2::new(0.5 * thickness, 0.5 * (sill_top - sill_bottom)),
        );
        let top = sill + opening;
        let upper = ConvexRegion::rectangle(
            Vector2::new(x_obs, 0.5 * (top + ceiling)),
            Vector2::new(0.5 * thickness, 0.5 * (ceiling - top)),
        );
        Ok(Self { lower, upper, x_obs, opening_height: opening })
    }

    pub fn parts(&self) -> [&ConvexRegion; 2] {
        [&self.lower, &self.upper]
    }

    pub fn sill_height(&self) -> f64 {
        self.lower.extent().1.y.max(0.0)
    }

    /// Oracle clearance of a box to both window parts.
    pub fn clearance(&self, b: &BoundingBox) -> f64 {
        let poly = b.vertices();
        self.parts()
            .iter()
            .map(|r| signed_distance_oracle(&poly, &r.vertices()).unwrap_or(0.0))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DualVariables {
    pub lambda: [f64; 4],
    pub mu: [f64; 4],
}

// ---------------------------------------------------------------------------
// Key-point bounding box
// ---------------------------------------------------------------------------

/// Residuals `p_i − P − R(θ) Σ_j γ_ij c_j(w, h)` (12 rows) followed by
/// `Σ_j γ_ij − 1` (6 rows), with `P` the mean of the key points.
pub fn keypoint_box_residual<S: Scalar>(kp: &[[S; 2]; 6], theta: S, w: S, h: S, gamma: &[S], out: &mut [S]) {
    let (s, c) = (theta.sin(), theta.cos());
    let mut center = [S::zero(); 2];
    for p in kp {
        center[0] += p[0];
        center[1] += p[1];
    }
    center[0] = center[0] / 6.0;
    center[1] = center[1] / 6.0;
    let hw = w * 0.5;
    let hh = h * 0.5;
    for i in 0..6 {
        let g = &gamma[4 * i..4 * i + 4];
        let mut lx = S::zero();
        let mut lz = S::zero();
        let mut sum = S::zero();
        for j in 0..4 {
            lx += g[j] * CORNERS[j][0];
            lz += g[j] * CORNERS[j][1];
            sum += g[j];
        }
        let lx = lx * hw;
        let lz = lz * hh;
        out[2 * i] = kp[i][0] - center[0] - (c * lx - s * lz);
        out[2 * i + 1] = kp[i][1] - center[1] - (s * lx + c * lz);
        out[12 + i] = sum - 1.0;
    }
}

/// Box of given key points: center and the keypoint-membership constraint
/// over `(w, h, γ)`.
#[derive(Debug, Clone)]
pub struct KeypointBox {
    pub center: Vector2<f64>,
    pub pitch: f64,
    pub constraint: KeypointBoxSet,
}

/// Constraint block over inputs `[w, h, γ_00 … γ_53]` for fixed key points.
#[derive(Debug, Clone)]
pub struct KeypointBoxSet {
    pub keypoints: [[f64; 2]; 6],
    pub pitch: f64,
}

impl LocalFn for KeypointBoxSet {
    fn n_in(&self) -> usize {
        26
    }
    fn n_out(&self) -> usize {
        18
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let kp = self.keypoints.map(|p| [S::cst(p[0]), S::cst(p[1])]);
        keypoint_box_residual(&kp, S::cst(self.pitch), x[0], x[1], &x[2..], out);
    }
}

pub fn bounding_box_from_keypoints(kp: &[Vector2<f64>; 6], pitch: f64) -> Result<KeypointBox, CollisionError> {
    let center = kp.iter().fold(Vector2::zeros(), |a, p| a + p) / 6.0;
    if kp.iter().all(|p| (p - kp[0]).norm() == 0.0) {
        return Err(CollisionError::DegenerateKeypoints);
    }
    Ok(KeypointBox {
        center,
        pitch,
        constraint: KeypointBoxSet { keypoints: kp.map(|p| [p.x, p.y]), pitch },
    })
}

/// Smallest box centered at the key-point mean at the given pitch: extents
/// of the points in the pitched frame, symmetric about the center.
pub fn minimal_box(kp: &[Vector2<f64>; 6], pitch: f64) -> BoundingBox {
    let center = kp.iter().fold(Vector2::zeros(), |a, p| a + p) / 6.0;
    let (s, c) = pitch.sin_cos();
    let (mut hw, mut hh) = (0.0f64, 0.0f64);
    for p in kp {
        let d = p - center;
        hw = hw.max((c * d.x + s * d.y).abs());
        hh = hh.max((-s * d.x + c * d.y).abs());
    }
    BoundingBox { center, pitch, width: 2.0 * hw, height: 2.0 * hh }
}

/// Solves `min w² + h²` over the key-point membership set.
pub fn solve_minimal_box(kp: &[Vector2<f64>; 6], pitch: f64) -> Result<BoundingBox, CollisionError> {
    let kb = bounding_box_from_keypoints(kp, pitch)?;
    let mut nlp = Nlp::new();
    let w = nlp.add_var(0.0, f64::INFINITY, 1.0, 0);
    let h = nlp.add_var(0.0, f64::INFINITY, 1.0, 0);
    let mut vars = vec![w, h];
    for _ in 0..24 {
        vars.push(nlp.add_var(0.0, f64::INFINITY, 0.25, 0));
    }
    nlp.add_quadratic(w, 1.0, 0.0);
    nlp.add_quadratic(h, 1.0, 0.0);
    nlp.add_constraint(vars, kb.constraint, vec![0.0; 18], vec![0.0; 18], "keypoint_box", 0);
    let sol = nlp.solve(&SolveOptions { tol: 1e-10, ..Default::default() })?;
    Ok(BoundingBox { center: kb.center, pitch, width: sol.x[w], height: sol.x[h] })
}

// ---------------------------------------------------------------------------
// Dual avoidance
// ---------------------------------------------------------------------------

/// Rows `[g1, g2x, g2z, g3]` with
/// `g1 = −lᵀμ + (A P − b)ᵀλ`, `g2 = Lᵀμ + Rᵀ Aᵀ λ`, `g3 = ‖Aᵀλ‖²`.
pub fn dual_residual<S: Scalar>(
    obs: &ConvexRegion,
    center: [S; 2],
    theta: S,
    w: S,
    h: S,
    lambda: &[S],
    mu: &[S],
    out: &mut [S],
) {
    let mut g1 = -((mu[0] + mu[2]) * w * 0.5 + (mu[1] + mu[3]) * h * 0.5);
    let mut ax = S::zero();
    let mut az = S::zero();
    for (k, (a, &b)) in obs.normals.iter().zip(&obs.offsets).enumerate() {
        g1 += lambda[k] * ((center[0] * a.x + center[1] * a.y) - b);
        ax += lambda[k] * a.x;
        az += lambda[k] * a.y;
    }
    let (s, c) = (theta.sin(), theta.cos());
    out[0] = g1;
    out[1] = mu[0] - mu[2] + c * ax + s * az;
    out[2] = mu[1] - mu[3] - s * ax + c * az;
    out[3] = ax * ax + az * az;
}

/// The avoidance constraint set for one box and one obstacle, over inputs
/// `[P_x, P_z, θ, w, h, λ_0 … λ_{k−1}, μ_0 … μ_3]`.
#[derive(Debug, Clone)]
pub struct DualAvoidance {
    pub obstacle: ConvexRegion,
    pub d_min: f64,
}

impl DualAvoidance {
    pub fn new(obstacle: ConvexRegion, d_min: f64) -> Self {
        assert!(d_min >= 0.0, "d_min must be nonnegative");
        Self { obstacle, d_min }
    }

    pub fn lower(&self) -> Vec<f64> {
        vec![self.d_min + EPS_STRICT, 0.0, 0.0, f64::NEG_INFINITY]
    }

    pub fn upper(&self) -> Vec<f64> {
        vec![f64::INFINITY, 0.0, 0.0, (1.0 - EPS_STRICT).powi(2)]
    }

    pub fn input(&self, b: &BoundingBox, d: &DualVariables) -> Vec<f64> {
        let mut x = vec![b.center.x, b.center.y, b.pitch, b.width, b.height];
        x.extend_from_slice(&d.lambda[..self.obstacle.rows()]);
        x.extend_from_slice(&d.mu);
        x
    }

    /// Largest violation of the set at a candidate point (negative λ or μ
    /// count as violations).
    pub fn violation(&self, b: &BoundingBox, d: &DualVariables) -> f64 {
        let x = self.input(b, d);
        let mut out = [0.0; 4];
        LocalFn::eval(self, &x, &mut out);
        let (lo, hi) = (self.lower(), self.upper());
        let mut v: f64 = 0.0;
        for r in 0..4 {
            v = v.max(lo[r] - out[r]).max(out[r] - hi[r]);
        }
        for &l in d.lambda.iter().chain(d.mu.iter()) {
            v = v.max(-l);
        }
        v
    }
}

impl LocalFn for DualAvoidance {
    fn n_in(&self) -> usize {
        5 + self.obstacle.rows() + 4
    }
    fn n_out(&self) -> usize {
        4
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let k = self.obstacle.rows();
        dual_residual(&self.obstacle, [x[0], x[1]], x[2], x[3], x[4], &x[5..5 + k], &x[5 + k..9 + k], out);
    }
}

/// Closed-form dual witness built from the closest points of the box and the
/// obstacle, scaled by `scale ∈ (0, 1]`. Its objective equals
/// `scale · distance` for separated sets.
pub fn dual_witness(b: &BoundingBox, obs: &ConvexRegion, scale: f64) -> Option<DualVariables> {
    let (dist, pa, pb) = closest_points(&b.vertices(), &obs.vertices()).ok()?;
    if dist <= 0.0 {
        return None;
    }
    let n = (pa - pb) / dist;
    // faces of the obstacle active at its closest point
    let active: Vec<usize> = (0..obs.rows())
        .filter(|&k| (obs.normals[k].dot(&pb) - obs.offsets[k]).abs() <= 1e-9 * (1.0 + pb.norm()))
        .collect();
    let mut lambda = [0.0; 4];
    match active.as_slice() {
        [k] => lambda[*k] = 1.0,
        [i, j, ..] => {
            let m = Matrix2::from_columns(&[obs.normals[*i], obs.normals[*j]]);
            let sol = m.lu().solve(&n)?;
            lambda[*i] = sol.x.max(0.0);
            lambda[*j] = sol.y.max(0.0);
        }
        [] => return None,
    }
    let a: Vector2<f64> = (0..obs.rows()).map(|k| obs.normals[k] * lambda[k]).sum();
    let d = -(b.rotation().transpose() * a);
    let mu = [d.x.max(0.0), d.y.max(0.0), (-d.x).max(0.0), (-d.y).max(0.0)];
    Some(DualVariables { lambda: lambda.map(|v| v * scale), mu: mu.map(|v| v * scale) })
}

/// Maximizes the dual objective `−lᵀμ + (A P − b)ᵀλ` over the constraint set
/// (with `‖Aᵀλ‖ ≤ 1`) by a generic NLP solve from a cold start.
pub fn max_dual_distance(b: &BoundingBox, obs: &ConvexRegion) -> Result<(f64, DualVariables), CollisionError> {
    let k = obs.rows();
    let mut nlp = Nlp::new();
    let mut vars = Vec::new();
    for v in [b.center.x, b.center.y, b.pitch, b.width, b.height] {
        vars.push(nlp.add_var(v, v, v, 0));
    }
    let mut duals = Vec::new();
    for _ in 0..k + 4 {
        let v = nlp.add_var(0.0, f64::INFINITY, 0.05, 0);
        vars.push(v);
        duals.push(v);
    }
    let block = DualAvoidance::new(obs.clone(), 0.0);
    let obj = DualObjective { obs: obs.clone() };
    nlp.add_objective(vars.clone(), obj);
    nlp.add_constraint(
        vars,
        block,
        vec![f64::NEG_INFINITY, 0.0, 0.0, f64::NEG_INFINITY],
        vec![f64::INFINITY, 0.0, 0.0, 1.0],
        "dual",
        0,
    );
    let sol = nlp.solve(&SolveOptions { tol: 1e-10, ..Default::default() })?;
    let mut dv = DualVariables::default();
    for j in 0..k {
        dv.lambda[j] = sol.x[duals[j]];
    }
    for j in 0..4 {
        dv.mu[j] = sol.x[duals[k + j]];
    }
    Ok((-sol.objective, dv))
}

struct DualObjective {
    obs: ConvexRegion,
}

impl LocalFn for DualObjective {
    fn n_in(&self) -> usize {
        5 + self.obs.rows() + 4
    }
    fn n_out(&self) -> usize {
        1
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let k = self.obs.rows();
        let mut r = [S::zero(); 4];
        dual_residual(&self.obs, [x[0], x[1]], x[2], x[3], x[4], &x[5..5 + k], &x[5 + k..9 + k], &mut r);
        out[0] = -r[0];
    }
}

// ---------------------------------------------------------------------------
// Brute-force distance oracle
// ---------------------------------------------------------------------------

fn cross(a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

fn check_polygon(p: &[Vector2<f64>]) -> Result<(), CollisionError> {
    if p.len() < 3 {
        return Err(CollisionError::MalformedPolygon(format!("{} vertices", p.len())));
    }
    if p.iter().any(|v| !v.x.is_finite() || !v.y.is_finite()) {
        return Err(CollisionError::MalformedPolygon("non-finite vertex".into()));
    }
    let n = p.len();
    let mut sign = 0.0;
    for i in 0..n {
        let e1 = p[(i + 1) % n] - p[i];
        let e2 = p[(i + 2) % n] - p[(i + 1) % n];
        let c = cross(e1, e2);
        if c.abs() <= 1e-14 * (e1.norm() * e2.norm()).max(1e-300) {
            continue;
        }
        if sign == 0.0 {
            sign = c.signum();
        } else if c.signum() != sign {
            return Err(CollisionError::MalformedPolygon("not convex or not consistently ordered".into()));
        }
    }
    if sign == 0.0 {
        return Err(CollisionError::MalformedPolygon("zero area".into()));
    }
    Ok(())
}

fn point_segment(p: Vector2<f64>, a: Vector2<f64>, b: Vector2<f64>) -> (f64, Vector2<f64>) {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    let q = a + ab * t;
    ((p - q).norm(), q)
}

fn inside(p: Vector2<f64>, poly: &[Vector2<f64>]) -> bool {
    let n = poly.len();
    let mut sign = 0.0;
    for i in 0..n {
        let c = cross(poly[(i + 1) % n] - poly[i], p - poly[i]);
        if c == 0.0 {
            continue;
        }
        if sign == 0.0 {
            sign = c.signum();
        } else if c.signum() != sign {
            return false;
        }
    }
    true
}

fn segments_cross(a: Vector2<f64>, b: Vector2<f64>, c: Vector2<f64>, d: Vector2<f64>) -> bool {
    let d1 = cross(b - a, c - a);
    let d2 = cross(b - a, d - a);
    let d3 = cross(d - c, a - c);
    let d4 = cross(d - c, b - c);
    d1 * d2 <= 0.0 && d3 * d4 <= 0.0 && !(d1 == 0.0 && d2 == 0.0)
}

/// Distance and a closest pair `(on a, on b)`; zero distance when the
/// polygons intersect.
pub fn closest_points(
    a: &[Vector2<f64>],
    b: &[Vector2<f64>],
) -> Result<(f64, Vector2<f64>, Vector2<f64>), CollisionError> {
    check_polygon(a)?;
    check_polygon(b)?;
    if a.iter().any(|&p| inside(p, b)) || b.iter().any(|&p| inside(p, a)) {
        return Ok((0.0, a[0], a[0]));
    }
    let (na, nb) = (a.len(), b.len());
    for i in 0..na {
        for j in 0..nb {
            if segments_cross(a[i], a[(i + 1) % na], b[j], b[(j + 1) % nb]) {
                return Ok((0.0, a[i], a[i]));
            }
        }
    }
    let mut best = (f64::INFINITY, a[0], b[0]);
    for &p in a {
        for j in 0..nb {
            let (d, q) = point_segment(p, b[j], b[(j + 1) % nb]);
            if d < best.0 {
                best = (d, p, q);
            }
        }
    }
    for &p in b {
        for i in 0..na {
            let (d, q) = point_segment(p, a[i], a[(i + 1) % na]);
            if d < best.0 {
                best = (d, q, p);
            }
        }
    }
    Ok(best)
}

/// Euclidean separation of two convex polygons (0 if they intersect).
pub fn signed_distance_oracle(a: &[Vector2<f64>], b: &[Vector2<f64>]) -> Result<f64, CollisionError> {
    closest_points(a, b).map(|r| r.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square(c: Vector2<f64>, half: f64) -> Vec<Vector2<f64>> {
        ConvexRegion::rectangle(c, Vector2::repeat(half)).vertices()
    }

    fn random_box(rng: &mut ChaCha8Rng) -> BoundingBox {
        BoundingBox {
            center: Vector2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            pitch: rng.random_range(-1.5..1.5),
            width: rng.random_range(0.1..0.8),
            height: rng.random_range(0.1..0.8),
        }
    }

    fn random_rect(rng: &mut ChaCha8Rng) -> ConvexRegion {
        ConvexRegion::rectangle(
            Vector2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)),
            Vector2::new(rng.random_range(0.05..0.6), rng.random_range(0.05..0.6)),
        )
    }

    #[test]
    fn oracle_basic_cases() {
        let a = square(Vector2::zeros(), 0.5);
        let b = square(Vector2::new(3.0, 0.0), 0.5);
        assert!((signed_distance_oracle(&a, &b).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(signed_distance_oracle(&a, &a).unwrap(), 0.0);
        let bad = vec![Vector2::zeros(), Vector2::new(1.0, 0.0)];
        assert!(matches!(signed_distance_oracle(&bad, &a), Err(CollisionError::MalformedPolygon(_))));
        let bowtie = vec![
            Vector2::new(0.0, 0.0),
            Vector2::new(1.0, 1.0),
            Vector2::new(1.0, 0.0),
            Vector2::new(0.0, 1.0),
        ];
        assert!(signed_distance_oracle(&bowtie, &a).is_err());
    }

    #[test]
    fn rectangle_vertices_are_ccw_and_inside() {
        let r = ConvexRegion::rectangle(Vector2::new(1.0, 2.0), Vector2::new(0.3, 0.1));
        let v = r.vertices();
        assert_eq!(v.len(), 4);
        for p in &v {
            assert!(r.contains(p, 1e-12));
        }
        assert!((v[0] - Vector2::new(1.3, 2.1)).norm() < 1e-12);
    }

    #[test]
    fn box_vertices_satisfy_their_own_description() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let b = random_box(&mut rng);
            let r = b.rotation();
            assert!((r.determinant() - 1.0).abs() < 1e-12);
            let l = b.l_vector();
            for v in b.vertices() {
                let z = r.transpose() * (v - b.center);
                for (k, n) in BOX_NORMALS.iter().enumerate() {
                    assert!((n[0] * z.x + n[1] * z.y).abs() <= l[k] + 1e-10);
                }
            }
        }
    }

    #[test]
    fn exact_rectangle_keypoints() {
        let kp = [
            Vector2::new(-0.2, -0.15),
            Vector2::new(0.2, -0.15),
            Vector2::new(0.2, 0.15),
            Vector2::new(-0.2, 0.15),
            Vector2::new(0.0, 0.15),
            Vector2::new(0.0, -0.15),
        ];
        let kb = bounding_box_from_keypoints(&kp, 0.0).unwrap();
        assert!(kb.center.norm() < 1e-15);
        let b = BoundingBox { center: kb.center, pitch: 0.0, width: 0.4, height: 0.3 };
        let mut x = vec![0.4, 0.3];
        for p in &kp {
            x.extend(b.corner_weights(p));
        }
        let mut out = [0.0; 18];
        LocalFn::eval(&kb.constraint, &x, &mut out);
        assert!(out.iter().all(|v| v.abs() < 1e-12));
        assert!(x[2..].iter().all(|&g| g >= -1e-12));
        let same = [Vector2::new(0.3, 0.3); 6];
        assert_eq!(bounding_box_from_keypoints(&same, 0.0).unwrap_err(), CollisionError::DegenerateKeypoints);
    }

    #[test]
    fn minimal_box_solve_matches_rotated_extents() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let kp: [Vector2<f64>; 6] =
                std::array::from_fn(|_| Vector2::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)));
            let pitch = rng.random_range(-0.7..0.7);
            let solved = solve_minimal_box(&kp, pitch).unwrap();
            let oracle = minimal_box(&kp, pitch);
            assert!((solved.width - oracle.width).abs() < 1e-6, "{} vs {}", solved.width, oracle.width);
            assert!((solved.height - oracle.height).abs() < 1e-6);
            let mean = kp.iter().fold(Vector2::zeros(), |a, p| a + p) / 6.0;
            assert!((solved.center - mean).norm() < 1e-15);
        }
    }

    #[test]
    fn corner_weights_are_convex_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let b = random_box(&mut rng);
            let z = Vector2::new(rng.random_range(-0.5..0.5) * b.width, rng.random_range(-0.5..0.5) * b.height);
            let p = b.center + b.rotation() * z;
            let g = b.corner_weights(&p);
            assert!((g.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            assert!(g.iter().all(|&v| v >= -1e-9));
            let r = b.rotation();
            let rebuilt: Vector2<f64> = (0..4)
                .map(|j| r * Vector2::new(CORNERS[j][0] * 0.5 * b.width, CORNERS[j][1] * 0.5 * b.height) * g[j])
                .sum::<Vector2<f64>>()
                + b.center;
            assert!((rebuilt - p).norm() < 1e-12);
        }
    }

    #[test]
    fn separating_hyperplane_witness() {
        let b = BoundingBox { center: Vector2::zeros(), pitch: 0.0, width: 1.0, height: 1.0 };
        let obs = ConvexRegion::rectangle(Vector2::new(3.0, 0.0), Vector2::repeat(0.5));
        let set = DualAvoidance::new(obs.clone(), 0.5);
        // the plane x = 1.75 leaves 1.25 on either side; the certificate is the distance 2
        let w = dual_witness(&b, &obs, 1.0 - 2.0 * EPS_STRICT).unwrap();
        assert!(set.violation(&b, &w) <= 0.0);
        assert_eq!(w.lambda, [0.0, 0.0, 1.0 - 2.0 * EPS_STRICT, 0.0]);
    }

    #[test]
    fn overlapping_box_admits_no_witness() {
        let b = BoundingBox { center: Vector2::new(2.8, 0.0), pitch: 0.3, width: 1.0, height: 1.0 };
        let obs = ConvexRegion::rectangle(Vector2::new(3.0, 0.0), Vector2::repeat(0.5));
        assert!(dual_witness(&b, &obs, 1.0).is_none());
        let (best, _) = max_dual_distance(&b, &obs).unwrap();
        assert!(best <= 1e-7, "{best}");
        assert!(best < EPS_STRICT);
    }

    #[test]
    fn touching_box_is_boundary_feasible() {
        let b = BoundingBox { center: Vector2::new(2.0, 0.0), pitch: 0.0, width: 1.0, height: 1.0 };
        let obs = ConvexRegion::rectangle(Vector2::new(3.0, 0.0), Vector2::repeat(0.5));
        let set = DualAvoidance::new(obs, 0.0);
        let d = DualVariables { lambda: [0.0, 0.0, 1.0, 0.0], mu: [1.0, 0.0, 0.0, 0.0] };
        let v = set.violation(&b, &d);
        assert!(v > 0.0 && v <= 2.0 * EPS_STRICT + 1e-15, "{v}");
    }

    #[test]
    fn max_dual_matches_oracle_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut checked = 0;
        while checked < 40 {
            let b = random_box(&mut rng);
            let obs = random_rect(&mut rng);
            let d = signed_distance_oracle(&b.vertices(), &obs.vertices()).unwrap();
            if d <= 0.0 {
                continue;
            }
            let (best, _) = max_dual_distance(&b, &obs).unwrap();
            assert!((best - d).abs() <= 1e-5, "dual {best} vs oracle {d}");
            checked += 1;
        }
    }

    #[test]
    fn witness_objective_equals_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let b = random_box(&mut rng);
            let obs = random_rect(&mut rng);
            let d = signed_distance_oracle(&b.vertices(), &obs.vertices()).unwrap();
            if d <= 1e-3 {
                continue;
            }
            let w = dual_witness(&b, &obs, 1.0).unwrap();
            let set = DualAvoidance::new(obs.clone(), 0.0);
            let mut out = [0.0; 4];
            LocalFn::eval(&set, &set.input(&b, &w), &mut out);
            assert!((out[0] - d).abs() < 1e-9, "{} vs {d}", out[0]);
            assert!(out[1].abs() < 1e-12 && out[2].abs() < 1e-12);
            assert!(out[3] <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn window_parts_are_disjoint() {
        let w = WindowObstacle::new(0.5, 0.05, 0.13, 0.7, 1.5).unwrap();
        let d = signed_distance_oracle(&w.lower.vertices(), &w.upper.vertices()).unwrap();
        assert!((d - 0.7).abs() < 1e-12);
        assert!((w.sill_height() - 0.13).abs() < 1e-15);
        assert!(WindowObstacle::new(0.5, 0.05, 0.13, -0.1, 1.5).is_err());
    }
}
