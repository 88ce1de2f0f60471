//! Constraint blocks of the jump transcription.

use crate::ad::{LocalFn, Scalar};
use crate::collision::{dual_residual, keypoint_box_residual, ConvexRegion};
use crate::model::{self, Leg, ModelParams, NQ};

fn arr7<S: Scalar>(x: &[S]) -> [S; NQ] {
    std::array::from_fn(|i| x[i])
}

/// Angles and joint velocities enter nonlinearly; base translation does not.
const CURVED_Q: [usize; 5] = [2, 3, 4, 5, 6];

/// Manipulator equation `D(q) a + C(q, v) v + G(q) − B u − Jᵀ(q) T` over
/// inputs `[q, v, a, u, T]`; zero exactly when `a = f(q, v, u, T)`.
pub struct Dynamics {
    pub params: ModelParams,
    curved: Vec<usize>,
}

impl Dynamics {
    pub fn new(params: ModelParams) -> Self {
        let mut curved: Vec<usize> = CURVED_Q.to_vec();
        curved.extend(CURVED_Q.iter().map(|i| i + 7));
        curved.extend(14..21);
        curved.extend(25..29);
        Self { params, curved }
    }
}

impl LocalFn for Dynamics {
    fn n_in(&self) -> usize {
        29
    }
    fn n_out(&self) -> usize {
        7
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let q = arr7(&x[0..7]);
        let v = arr7(&x[7..14]);
        let u = [x[21], x[22], x[23], x[24]];
        let t = [x[25], x[26], x[27], x[28]];
        let a = arr7(&x[14..21]);
        out[..NQ].copy_from_slice(&model::inverse_dynamics_residual(&self.params, &q, &v, &a, &u, &t));
    }
    fn curved_inputs(&self) -> Option<&[usize]> {
        Some(&self.curved)
    }
}

/// Foot velocity `J(q) v` over inputs `[q, v]`.
pub struct FootVelocity {
    pub params: ModelParams,
    pub leg: Leg,
    curved: Vec<usize>,
}

impl FootVelocity {
    pub fn new(params: ModelParams, leg: Leg) -> Self {
        let mut curved: Vec<usize> = CURVED_Q.to_vec();
        curved.extend(CURVED_Q.iter().map(|i| i + 7));
        Self { params, leg, curved }
    }
}

impl LocalFn for FootVelocity {
    fn n_in(&self) -> usize {
        14
    }
    fn n_out(&self) -> usize {
        2
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let v = model::foot_velocity(&self.params, self.leg, &arr7(&x[..7]), &arr7(&x[7..14]));
        out[0] = v[0];
        out[1] = v[1];
    }
    fn curved_inputs(&self) -> Option<&[usize]> {
        Some(&self.curved)
    }
}

/// One foot coordinate (`axis` 0 = x, 1 = z) over inputs `q`, plus a
/// trailing offset variable when `with_offset`.
pub struct FootCoord {
    pub params: ModelParams,
    pub leg: Leg,
    pub axis: usize,
    pub with_offset: bool,
}

impl LocalFn for FootCoord {
    fn n_in(&self) -> usize {
        if self.with_offset {
            8
        } else {
            7
        }
    }
    fn n_out(&self) -> usize {
        1
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let p = model::foot_position(&self.params, self.leg, &x[..7]);
        out[0] = if self.with_offset { p[self.axis] + x[7] } else { p[self.axis] };
    }
    fn curved_inputs(&self) -> Option<&[usize]> {
        Some(&CURVED_Q)
    }
}

/// Trapezoidal defect `y₁ − y₀ − T/(2N) (d₀ + d₁)` over `[y₀, y₁, d₀, d₁, T]`.
pub struct Defect {
    pub inv_nodes: f64,
}

impl LocalFn for Defect {
    fn n_in(&self) -> usize {
        5
    }
    fn n_out(&self) -> usize {
        1
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let h = x[4] * (0.5 * self.inv_nodes);
        out[0] = x[1] - x[0] - h * (x[2] + x[3]);
    }
    fn curved_inputs(&self) -> Option<&[usize]> {
        Some(&[2, 3, 4])
    }
}

/// Key-point membership in the node's box over `[q, w, h, γ]`.
pub struct KeypointBox {
    pub params: ModelParams,
}

impl LocalFn for KeypointBox {
    fn n_in(&self) -> usize {
        7 + 2 + 24
    }
    fn n_out(&self) -> usize {
        18
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let kp = model::key_points_generic(&self.params, &x[..7]);
        keypoint_box_residual(&kp, x[2], x[7], x[8], &x[9..33], out);
    }
    fn curved_inputs(&self) -> Option<&[usize]> {
        const C: [usize; 31] = [
            2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22, 23, 24, 25, 26, 27, 28, 29,
            30, 31, 32,
        ];
        Some(&C)
    }
}

/// Dual clearance rows for one obstacle over `[q, w, h, λ, μ]`, with the box
/// center taken as the mean of the key points.
pub struct NodeDual {
    pub params: ModelParams,
    pub obstacle: ConvexRegion,
    curved: Vec<usize>,
}

impl NodeDual {
    pub fn new(params: ModelParams, obstacle: ConvexRegion) -> Self {
        // the base position multiplies λ through the box center
        let curved: Vec<usize> = (0..9 + obstacle.rows() + 4).collect();
        Self { params, obstacle, curved }
    }
}

impl LocalFn for NodeDual {
    fn n_in(&self) -> usize {
        9 + self.obstacle.rows() + 4
    }
    fn n_out(&self) -> usize {
        4
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let kp = model::key_points_generic(&self.params, &x[..7]);
        let mut c = [S::zero(); 2];
        for p in &kp {
            c[0] += p[0];
            c[1] += p[1];
        }
        let c = [c[0] / 6.0, c[1] / 6.0];
        let k = self.obstacle.rows();
        dual_residual(&self.obstacle, c, x[2], x[7], x[8], &x[9..9 + k], &x[9 + k..13 + k], out);
    }
    fn curved_inputs(&self) -> Option<&[usize]> {
        Some(&self.curved)
    }
}

/// `Σ_ij M_ij (x_i − r_i)(x_j − r_j)` for a dense symmetric weight matrix.
pub struct QuadForm {
    pub weights: Vec<f64>,
    pub target: Vec<f64>,
}

impl LocalFn for QuadForm {
    fn n_in(&self) -> usize {
        self.target.len()
    }
    fn n_out(&self) -> usize {
        1
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let n = self.target.len();
        let mut acc = S::zero();
        for i in 0..n {
            let di = x[i] - self.target[i];
            for j in 0..n {
                let w = self.weights[i * n + j];
                if w != 0.0 {
                    acc += di * (x[j] - self.target[j]) * w;
                }
            }
        }
        out[0] = acc;
    }
}
