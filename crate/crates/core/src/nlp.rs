//! Sparse nonlinear programming with a primal-dual interior point method.
//!
//! Problems are assembled from small constraint and objective blocks, each a
//! [`LocalFn`] over a handful of variables, so first and second derivatives
//! come from forward-mode AD. The solver follows the usual filter line-search
//! barrier scheme: slack variables for two-sided rows, a monotone barrier
//! update, inertia-corrected Newton steps and a feasibility restoration
//! fallback. Linear algebra uses the envelope `LDLᵀ` of [`crate::sparse`]
//! on a stage ordering supplied by the caller.

use std::sync::Arc;
use std::time::Instant;

use thiserror::Error;

use crate::ad::{self, LocalFn, Scalar};
use crate::sparse::{Envelope, Ldl};

/// Object-safe view of a [`LocalFn`].
pub trait Block: Send + Sync {
    fn n_in(&self) -> usize;
    fn n_out(&self) -> usize;
    fn eval(&self, x: &[f64], out: &mut [f64]);
    fn jacobian(&self, x: &[f64], jac: &mut [f64]);
    fn hessian(&self, x: &[f64], w: &[f64], hess: &mut [f64]);
    fn curved(&self) -> Vec<usize>;
}

impl<F: LocalFn + Send + Sync> Block for F {
    fn n_in(&self) -> usize {
        LocalFn::n_in(self)
    }
    fn n_out(&self) -> usize {
        LocalFn::n_out(self)
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        LocalFn::eval(self, x, out)
    }
    fn jacobian(&self, x: &[f64], jac: &mut [f64]) {
        ad::jacobian(self, x, jac)
    }
    fn hessian(&self, x: &[f64], w: &[f64], hess: &mut [f64]) {
        ad::weighted_hessian(self, x, w, hess)
    }
    fn curved(&self) -> Vec<usize> {
        match self.curved_inputs() {
            Some(c) => c.to_vec(),
            None => (0..LocalFn::n_in(self)).collect(),
        }
    }
}

/// Wraps a closure-free linear function `Σ a_i x_i`.
pub struct Linear(pub Vec<f64>);

impl LocalFn for Linear {
    fn n_in(&self) -> usize {
        self.0.len()
    }
    fn n_out(&self) -> usize {
        1
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let mut acc = S::zero();
        for (xi, &a) in x.iter().zip(&self.0) {
            acc += *xi * a;
        }
        out[0] = acc;
    }
    fn curved_inputs(&self) -> Option<&[usize]> {
        Some(&[])
    }
}

struct ConBlock {
    vars: Vec<usize>,
    f: Arc<dyn Block>,
    row0: usize,
    label: &'static str,
    tag: usize,
}

struct ObjBlock {
    vars: Vec<usize>,
    f: Arc<dyn Block>,
}

/// Stage key for variables shared by the whole horizon; they are ordered last.
pub const GLOBAL_STAGE: u64 = u64::MAX;

#[derive(Default)]
pub struct Nlp {
    lower: Vec<f64>,
    upper: Vec<f64>,
    start: Vec<f64>,
    stage: Vec<u64>,
    row_lo: Vec<f64>,
    row_hi: Vec<f64>,
    cons: Vec<ConBlock>,
    objs: Vec<ObjBlock>,
    quad: Vec<(usize, f64, f64)>,
    lin: Vec<(usize, f64)>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NlpError {
    #[error("problem appears infeasible: constraint violation {violation:.3e} at `{worst}` after {iterations} iterations")]
    Infeasible { violation: f64, worst: String, iterations: usize },
    #[error("iteration limit reached ({iterations}); violation {violation:.3e}, dual infeasibility {dual:.3e}")]
    MaxIterations { iterations: usize, violation: f64, dual: f64 },
    #[error("time limit reached after {iterations} iterations")]
    TimeLimit { iterations: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub constr_viol_tol: f64,
    pub acceptable_tol: f64,
    pub acceptable_iter: usize,
    pub mu_init: f64,
    pub max_wall_seconds: f64,
    pub verbose: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iter: 3000,
            tol: 1e-8,
            constr_viol_tol: 1e-9,
            acceptable_tol: 1e-6,
            acceptable_iter: 10,
            mu_init: 0.1,
            max_wall_seconds: f64::INFINITY,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Acceptable,
}

#[derive(Debug, Clone)]
pub struct NlpSolution {
    pub x: Vec<f64>,
    /// Multipliers of the constraint rows (unscaled, `L = f + yᵀc`).
    pub y: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub max_violation: f64,
    pub dual_infeasibility: f64,
    pub status: SolveStatus,
}

impl Nlp {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_vars(&self) -> usize {
        self.lower.len()
    }

    pub fn n_rows(&self) -> usize {
        self.row_lo.len()
    }

    pub fn add_var(&mut self, lo: f64, hi: f64, start: f64, stage: u64) -> usize {
        assert!(lo <= hi, "variable bounds out of order: [{lo}, {hi}]");
        self.lower.push(lo);
        self.upper.push(hi);
        self.start.push(start);
        self.stage.push(stage);
        self.lower.len() - 1
    }

    pub fn set_start(&mut self, var: usize, v: f64) {
        self.start[var] = v;
    }

    pub fn start(&self) -> &[f64] {
        &self.start
    }

    pub fn bounds(&self, var: usize) -> (f64, f64) {
        (self.lower[var], self.upper[var])
    }

    pub fn set_bounds(&mut self, var: usize, lo: f64, hi: f64) {
        self.lower[var] = lo;
        self.upper[var] = hi;
    }

    /// Adds rows `lo ≤ f(x[vars]) ≤ hi`; returns the first row index.
    pub fn add_constraint<F: LocalFn + Send + Sync + 'static>(
        &mut self,
        vars: Vec<usize>,
        f: F,
        lo: Vec<f64>,
        hi: Vec<f64>,
        label: &'static str,
        tag: usize,
    ) -> usize {
        self.add_constraint_arc(vars, Arc::new(f), lo, hi, label, tag)
    }

    pub fn add_constraint_arc(
        &mut self,
        vars: Vec<usize>,
        f: Arc<dyn Block>,
        lo: Vec<f64>,
        hi: Vec<f64>,
        label: &'static str,
        tag: usize,
    ) -> usize {
        assert_eq!(vars.len(), f.n_in());
        assert_eq!(lo.len(), f.n_out());
        assert_eq!(hi.len(), f.n_out());
        let row0 = self.row_lo.len();
        self.row_lo.extend(lo);
        self.row_hi.extend(hi);
        self.cons.push(ConBlock { vars, f, row0, label, tag });
        row0
    }

    pub fn add_objective<F: LocalFn + Send + Sync + 'static>(&mut self, vars: Vec<usize>, f: F) {
        assert_eq!(vars.len(), f.n_in());
        assert_eq!(LocalFn::n_out(&f), 1);
        self.objs.push(ObjBlock { vars, f: Arc::new(f) });
    }

    /// Adds `weight · (x[var] − target)²`.
    pub fn add_quadratic(&mut self, var: usize, weight: f64, target: f64) {
        if weight != 0.0 {
            self.quad.push((var, weight, target));
        }
    }

    pub fn add_linear(&mut self, var: usize, coef: f64) {
        if coef != 0.0 {
            self.lin.push((var, coef));
        }
    }

    /// Label and tag of the block that owns `row`.
    pub fn row_label(&self, row: usize) -> (&'static str, usize) {
        let b = self.block_of_row(row);
        (b.label, b.tag)
    }

    fn block_of_row(&self, row: usize) -> &ConBlock {
        let k = self.cons.partition_point(|b| b.row0 <= row) - 1;
        &self.cons[k]
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut f = 0.0;
        for &(v, w, t) in &self.quad {
            f += w * (x[v] - t) * (x[v] - t);
        }
        for &(v, a) in &self.lin {
            f += a * x[v];
        }
        let mut local = Vec::new();
        let mut out = [0.0];
        for b in &self.objs {
            gather(&b.vars, x, &mut local);
            b.f.eval(&local, &mut out);
            f += out[0];
        }
        f
    }

    pub fn gradient(&self, x: &[f64], g: &mut [f64]) {
        g.iter_mut().for_each(|v| *v = 0.0);
        for &(v, w, t) in &self.quad {
            g[v] += 2.0 * w * (x[v] - t);
        }
        for &(v, a) in &self.lin {
            g[v] += a;
        }
        let mut local = Vec::new();
        let mut jac = Vec::new();
        for b in &self.objs {
            gather(&b.vars, x, &mut local);
            jac.resize(b.vars.len(), 0.0);
            b.f.jacobian(&local, &mut jac);
            for (k, &v) in b.vars.iter().enumerate() {
                g[v] += jac[k];
            }
        }
    }

    pub fn constraints(&self, x: &[f64], c: &mut [f64]) {
        let mut local = Vec::new();
        for b in &self.cons {
            gather(&b.vars, x, &mut local);
            let n = b.f.n_out();
            b.f.eval(&local, &mut c[b.row0..b.row0 + n]);
        }
    }

    /// Constraint Jacobian as `(row, var, value)` triplets (duplicates add).
    pub fn jacobian_triplets(&self, x: &[f64]) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        let mut local = Vec::new();
        let mut jac = Vec::new();
        for b in &self.cons {
            gather(&b.vars, x, &mut local);
            let (ni, no) = (b.f.n_in(), b.f.n_out());
            jac.resize(ni * no, 0.0);
            b.f.jacobian(&local, &mut jac);
            for r in 0..no {
                for (k, &v) in b.vars.iter().enumerate() {
                    let val = jac[r * ni + k];
                    if val != 0.0 {
                        out.push((b.row0 + r, v, val));
                    }
                }
            }
        }
        out
    }

    /// Largest bound violation of rows and variables, with the worst row.
    pub fn violation(&self, x: &[f64]) -> (f64, Option<usize>) {
        let mut c = vec![0.0; self.n_rows()];
        self.constraints(x, &mut c);
        let mut worst = (0.0, None);
        for (r, &v) in c.iter().enumerate() {
            let e = (self.row_lo[r] - v).max(v - self.row_hi[r]).max(0.0);
            if e > worst.0 || e.is_nan() {
                worst = (e, Some(r));
            }
        }
        for (i, &v) in x.iter().enumerate() {
            let e = (self.lower[i] - v).max(v - self.upper[i]).max(0.0);
            if e > worst.0 {
                worst = (e, None);
            }
        }
        worst
    }

    pub fn row_bounds(&self, row: usize) -> (f64, f64) {
        (self.row_lo[row], self.row_hi[row])
    }

    pub fn solve(&self, opts: &SolveOptions) -> Result<NlpSolution, NlpError> {
        Solver::new(self, opts).run()
    }
}

fn gather(vars: &[usize], x: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.extend(vars.iter().map(|&v| x[v]));
}

// ---------------------------------------------------------------------------
// Interior point solver
// ---------------------------------------------------------------------------

const KAPPA_1: f64 = 1e-2;
const KAPPA_2: f64 = 1e-2;
const KAPPA_SIGMA: f64 = 1e10;
const KAPPA_EPS: f64 = 10.0;
const KAPPA_MU: f64 = 0.2;
const THETA_MU: f64 = 1.5;
const KAPPA_D: f64 = 1e-5;
const GAMMA_THETA: f64 = 1e-5;
const GAMMA_PHI: f64 = 1e-8;
const ETA_PHI: f64 = 1e-8;
const S_PHI: f64 = 2.3;
const S_THETA: f64 = 1.1;
const DELTA_SWITCH: f64 = 1.0;
const SCALE_MAX_GRAD: f64 = 100.0;
const STATIC_REG: f64 = 1e-9;
const S_MAX: f64 = 100.0;

/// One term of the Lagrangian Hessian: a block whose local dense Hessian is
/// scattered into the KKT matrix.
struct HessTarget {
    /// Positions in the KKT matrix of the block's curved inputs, `usize::MAX`
    /// for fixed variables.
    pos: Vec<usize>,
    curved: Vec<usize>,
}

struct Solver<'a> {
    nlp: &'a Nlp,
    opts: &'a SolveOptions,
    /// free variable index → global index
    free: Vec<usize>,
    /// global index → free index
    free_of: Vec<Option<usize>>,
    n: usize,
    m: usize,
    pos_var: Vec<usize>,
    pos_row: Vec<usize>,
    var_pos: Vec<bool>,
    first: Vec<usize>,
    row_scale: Vec<f64>,
    obj_scale: f64,
    eq: Vec<bool>,
    xl: Vec<f64>,
    xu: Vec<f64>,
    sl: Vec<f64>,
    su: Vec<f64>,
    con_hess: Vec<HessTarget>,
    obj_hess: Vec<HessTarget>,
    full_x: Vec<f64>,
}

#[derive(Clone)]
struct Iterate {
    x: Vec<f64>,
    s: Vec<f64>,
    y: Vec<f64>,
    zl: Vec<f64>,
    zu: Vec<f64>,
    vl: Vec<f64>,
    vu: Vec<f64>,
}

struct Evals {
    f: f64,
    grad: Vec<f64>,
    c: Vec<f64>,
    /// Jacobian values in the order of `jac_entries`.
    jac: Vec<f64>,
    jac_entries: Vec<(usize, usize)>,
}

struct Direction {
    dx: Vec<f64>,
    ds: Vec<f64>,
    dy: Vec<f64>,
}

impl<'a> Solver<'a> {
    fn new(nlp: &'a Nlp, opts: &'a SolveOptions) -> Self {
        let nv = nlp.n_vars();
        let m = nlp.n_rows();
        let mut free = Vec::new();
        let mut free_of = vec![None; nv];
        for i in 0..nv {
            if nlp.lower[i] < nlp.upper[i] {
                free_of[i] = Some(free.len());
                free.push(i);
            }
        }
        let n = free.len();

        // stage ordering of the KKT unknowns
        let mut row_stage = vec![0u64; m];
        for b in &nlp.cons {
            let mut st = 0u64;
            let mut any = false;
            for &v in &b.vars {
                if free_of[v].is_some() && nlp.stage[v] != GLOBAL_STAGE {
                    st = st.max(nlp.stage[v]);
                    any = true;
                }
            }
            let st = if any { st } else { GLOBAL_STAGE };
            for r in 0..b.f.n_out() {
                row_stage[b.row0 + r] = st;
            }
        }
        let mut keys: Vec<(u64, u8, usize)> = Vec::with_capacity(n + m);
        for (k, &v) in free.iter().enumerate() {
            keys.push((nlp.stage[v], 0, k));
        }
        for (r, &st) in row_stage.iter().enumerate() {
            keys.push((st, 1, r));
        }
        keys.sort_unstable();
        let mut pos_var = vec![0; n];
        let mut pos_row = vec![0; m];
        let mut var_pos = vec![false; n + m];
        for (p, &(_, kind, k)) in keys.iter().enumerate() {
            if kind == 0 {
                pos_var[k] = p;
                var_pos[p] = true;
            } else {
                pos_row[k] = p;
            }
        }

        let mut first: Vec<usize> = (0..n + m).collect();
        let mut link = |a: usize, b: usize| {
            let (hi, lo) = if a > b { (a, b) } else { (b, a) };
            if first[hi] > lo {
                first[hi] = lo;
            }
        };
        let pos_of = |v: usize| free_of[v].map(|k| pos_var[k]);
        let mut con_hess = Vec::with_capacity(nlp.cons.len());
        for b in &nlp.cons {
            for r in 0..b.f.n_out() {
                let pr = pos_row[b.row0 + r];
                for &v in &b.vars {
                    if let Some(pv) = pos_of(v) {
                        link(pr, pv);
                    }
                }
            }
            let curved = b.f.curved();
            let pos: Vec<usize> = b.vars.iter().map(|&v| pos_of(v).unwrap_or(usize::MAX)).collect();
            for (a, &i) in curved.iter().enumerate() {
                for &j in &curved[..=a] {
                    if pos[i] != usize::MAX && pos[j] != usize::MAX {
                        link(pos[i], pos[j]);
                    }
                }
            }
            con_hess.push(HessTarget { pos, curved });
        }
        let mut obj_hess = Vec::with_capacity(nlp.objs.len());
        for b in &nlp.objs {
            let curved = b.f.curved();
            let pos: Vec<usize> = b.vars.iter().map(|&v| pos_of(v).unwrap_or(usize::MAX)).collect();
            for (a, &i) in curved.iter().enumerate() {
                for &j in &curved[..=a] {
                    if pos[i] != usize::MAX && pos[j] != usize::MAX {
                        link(pos[i], pos[j]);
                    }
                }
            }
            obj_hess.push(HessTarget { pos, curved });
        }

        let eq: Vec<bool> = (0..m).map(|r| nlp.row_lo[r] == nlp.row_hi[r]).collect();
        let xl = free.iter().map(|&v| nlp.lower[v]).collect();
        let xu = free.iter().map(|&v| nlp.upper[v]).collect();
        let mut full_x = nlp.start.clone();
        for i in 0..nv {
            if free_of[i].is_none() {
                full_x[i] = nlp.lower[i];
            }
        }
        Self {
            nlp,
            opts,
            free,
            free_of,
            n,
            m,
            pos_var,
            pos_row,
            var_pos,
            first,
            row_scale: vec![1.0; m],
            obj_scale: 1.0,
            eq,
            xl,
            xu,
            sl: Vec::new(),
            su: Vec::new(),
            con_hess,
            obj_hess,
            full_x,
        }
    }

    fn set_x(&mut self, x: &[f64]) {
        for (k, &v) in self.free.iter().enumerate() {
            self.full_x[v] = x[k];
        }
    }

    fn eval_fc(&mut self, x: &[f64]) -> (f64, Vec<f64>) {
        self.set_x(x);
        let f = self.nlp.objective(&self.full_x) * self.obj_scale;
        let mut c = vec![0.0; self.m];
        self.nlp.constraints(&self.full_x, &mut c);
        for r in 0..self.m {
            c[r] *= self.row_scale[r];
        }
        (f, c)
    }

    fn eval_all(&mut self, x: &[f64]) -> Evals {
        let (f, c) = self.eval_fc(x);
        let mut g_full = vec![0.0; self.nlp.n_vars()];
        self.nlp.gradient(&self.full_x, &mut g_full);
        let grad: Vec<f64> = self.free.iter().map(|&v| g_full[v] * self.obj_scale).collect();
        let trip = self.nlp.jacobian_triplets(&self.full_x);
        let mut jac = Vec::with_capacity(trip.len());
        let mut jac_entries = Vec::with_capacity(trip.len());
        for (r, v, val) in trip {
            if let Some(k) = self.free_of[v] {
                jac.push(val * self.row_scale[r]);
                jac_entries.push((r, k));
            }
        }
        Evals { f, grad, c, jac, jac_entries }
    }

    fn compute_scaling(&mut self, x: &[f64]) {
        let e = self.eval_all(x);
        let gmax = e.grad.iter().fold(0.0f64, |a, &g| a.max(g.abs()));
        self.obj_scale = if gmax > SCALE_MAX_GRAD { SCALE_MAX_GRAD / gmax } else { 1.0 };
        let mut rmax = vec![0.0f64; self.m];
        for (&(r, _), &v) in e.jac_entries.iter().zip(&e.jac) {
            rmax[r] = rmax[r].max(v.abs());
        }
        for r in 0..self.m {
            self.row_scale[r] = if rmax[r] > SCALE_MAX_GRAD { SCALE_MAX_GRAD / rmax[r] } else { 1.0 };
        }
        self.sl = (0..self.m).map(|r| self.nlp.row_lo[r] * self.row_scale[r]).collect();
        self.su = (0..self.m).map(|r| self.nlp.row_hi[r] * self.row_scale[r]).collect();
    }

    fn hessian_into(&mut self, x: &[f64], y: &[f64], kkt: &mut Envelope) {
        self.set_x(x);
        let full_x = &self.full_x;
        for &(v, w, _) in &self.nlp.quad {
            if let Some(k) = self.free_of[v] {
                let p = self.pos_var[k];
                kkt.add(p, p, 2.0 * w * self.obj_scale);
            }
        }
        let mut local = Vec::new();
        let mut hess = Vec::new();
        let mut w = Vec::new();
        for (b, t) in self.nlp.cons.iter().zip(&self.con_hess) {
            if t.curved.is_empty() {
                continue;
            }
            let no = b.f.n_out();
            w.clear();
            w.extend((0..no).map(|r| y[b.row0 + r] * self.row_scale[b.row0 + r]));
            if w.iter().all(|&v| v == 0.0) {
                continue;
            }
            gather(&b.vars, full_x, &mut local);
            let ni = b.f.n_in();
            hess.resize(ni * ni, 0.0);
            b.f.hessian(&local, &w, &mut hess);
            scatter_hessian(t, &hess, ni, kkt);
        }
        for (b, t) in self.nlp.objs.iter().zip(&self.obj_hess) {
            if t.curved.is_empty() {
                continue;
            }
            gather(&b.vars, full_x, &mut local);
            let ni = b.f.n_in();
            hess.resize(ni * ni, 0.0);
            b.f.hessian(&local, &[self.obj_scale], &mut hess);
            scatter_hessian(t, &hess, ni, kkt);
        }
    }

    fn push_into_bounds(&self, v: f64, lo: f64, hi: f64) -> f64 {
        let mut v = v;
        if lo.is_finite() && hi.is_finite() {
            let pl = (KAPPA_1 * lo.abs().max(1.0)).min(KAPPA_2 * (hi - lo));
            let pu = (KAPPA_1 * hi.abs().max(1.0)).min(KAPPA_2 * (hi - lo));
            v = v.max(lo + pl).min(hi - pu);
        } else if lo.is_finite() {
            v = v.max(lo + KAPPA_1 * lo.abs().max(1.0));
        } else if hi.is_finite() {
            v = v.min(hi - KAPPA_1 * hi.abs().max(1.0));
        }
        v
    }

    fn run(mut self) -> Result<NlpSolution, NlpError> {
        let t0 = Instant::now();
        let opts = self.opts;
        let (n, m) = (self.n, self.m);
        let mut x: Vec<f64> = self.free.iter().map(|&v| self.nlp.start[v]).collect();
        for k in 0..n {
            x[k] = self.push_into_bounds(x[k], self.xl[k], self.xu[k]);
        }
        self.compute_scaling(&x);
        let (_, c0) = self.eval_fc(&x);
        let mut s = vec![0.0; m];
        for r in 0..m {
            s[r] = if self.eq[r] { self.sl[r] } else { self.push_into_bounds(c0[r], self.sl[r], self.su[r]) };
        }
        let ones_x = |b: &[f64]| b.iter().map(|v| if v.is_finite() { 1.0 } else { 0.0 }).collect::<Vec<f64>>();
        let mut it = Iterate {
            zl: ones_x(&self.xl),
            zu: ones_x(&self.xu),
            vl: (0..m).map(|r| if !self.eq[r] && self.sl[r].is_finite() { 1.0 } else { 0.0 }).collect(),
            vu: (0..m).map(|r| if !self.eq[r] && self.su[r].is_finite() { 1.0 } else { 0.0 }).collect(),
            x,
            s,
            y: vec![0.0; m],
        };
        let mut mu = opts.mu_init;
        let mut ev = self.eval_all(&it.x);
        if let Some(y) = self.least_squares_multipliers(&it, &ev) {
            it.y = y;
        }

        let mut filter: Vec<(f64, f64)> = Vec::new();
        let theta0 = self.theta(&ev.c, &it.s);
        let mut theta_max = 1e4 * theta0.max(1.0);
        let mut theta_min = 1e-4 * theta0.max(1.0);
        let mut delta_w_last = 0.0;
        let mut acceptable_count = 0;
        let mut restoration_fails = 0;
        let mut last_step = (0.0, 0.0, ' ');

        for iter in 0..opts.max_iter {
            if t0.elapsed().as_secs_f64() > opts.max_wall_seconds {
                return Err(NlpError::TimeLimit { iterations: iter });
            }
            let (dual_inf, primal_inf, _) = self.errors(&it, &ev, 0.0);
            let e0 = self.overall_error(&it, &ev, 0.0);
            let unscaled_viol = self.unscaled_violation(&ev.c, &it.s);
            if opts.verbose {
                eprintln!(
                    "{iter:4} f={:+.6e} pr={:.2e} du={:.2e} mu={:.1e} E={:.2e} a={:.1e}{} dw={:.0e}",
                    ev.f / self.obj_scale,
                    primal_inf,
                    dual_inf,
                    mu,
                    e0,
                    last_step.0,
                    last_step.2,
                    last_step.1
                );
            }
            if e0 <= opts.tol && unscaled_viol <= opts.constr_viol_tol {
                return Ok(self.finish(&it, &ev, iter, SolveStatus::Optimal));
            }
            if e0 <= opts.acceptable_tol && unscaled_viol <= opts.constr_viol_tol {
                acceptable_count += 1;
                if acceptable_count >= opts.acceptable_iter {
                    return Ok(self.finish(&it, &ev, iter, SolveStatus::Acceptable));
                }
            } else {
                acceptable_count = 0;
            }

            // barrier update
            let mut mu_changed = false;
            while self.overall_error(&it, &ev, mu) <= KAPPA_EPS * mu && mu > opts.tol / 10.0 {
                mu = (opts.tol / 10.0).max((KAPPA_MU * mu).min(mu.powf(THETA_MU)));
                mu_changed = true;
            }
            if mu_changed {
                filter.clear();
            }
            let tau = (1.0 - mu).max(0.99);

            // Newton step with inertia correction
            let mut base = Envelope::new(self.first.clone());
            self.hessian_into(&it.x, &it.y, &mut base);
            for (&(r, k), &v) in ev.jac_entries.iter().zip(&ev.jac) {
                base.add(self.pos_row[r], self.pos_var[k], v);
            }
            let (ldl, kkt, delta_w) = self.factor_with_correction(&base, &it, delta_w_last)?;
            if delta_w > 0.0 {
                delta_w_last = delta_w;
            }
            let rhs = self.rhs(&it, &ev, mu, None);
            let dir = self.solve_direction(&ldl, &kkt, &it, &ev, mu, delta_w, &rhs);

            let alpha_max = self.max_step(&it, &dir, tau);
            let (phi, dphi) = self.barrier(&it, &ev, mu, &dir);
            let theta = self.theta(&ev.c, &it.s);

            // backtracking filter line search
            let mut alpha = alpha_max;
            let mut accepted: Option<(Iterate, Evals)> = None;
            let alpha_min = {
                let mut a = GAMMA_THETA;
                if dphi < 0.0 {
                    a = a.min(GAMMA_PHI * theta / -dphi);
                    if theta <= theta_min {
                        a = a.min(DELTA_SWITCH * theta.powf(S_THETA) / (-dphi).powf(S_PHI));
                    }
                }
                0.05 * a
            };
            let mut first_trial = true;
            while alpha >= alpha_min.min(1e-14).max(1e-16) || first_trial {
                let trial = self.step_primal(&it, &dir, alpha);
                let (ft, ct) = self.eval_fc(&trial.x);
                let theta_t = self.theta(&ct, &trial.s);
                let phi_t = self.barrier_value(&trial, ft, mu);
                let verdict = self.acceptable(theta, phi, dphi, alpha, theta_t, phi_t, &filter, theta_max, theta_min);
                if let Some(augment) = verdict {
                    if augment {
                        filter.push(((1.0 - GAMMA_THETA) * theta, phi - GAMMA_PHI * theta));
                    }
                    accepted = Some((trial, Evals { f: ft, grad: Vec::new(), c: ct, jac: Vec::new(), jac_entries: Vec::new() }));
                    break;
                }
                if first_trial && theta_t >= theta {
                    // second order correction
                    let soc_c: Vec<f64> = (0..m)
                        .map(|r| alpha * (ev.c[r] - it.s[r]) + (ct[r] - trial.s[r]))
                        .collect();
                    let rhs_soc = self.rhs(&it, &ev, mu, Some(&soc_c));
                    let dsoc = self.solve_direction(&ldl, &kkt, &it, &ev, mu, delta_w, &rhs_soc);
                    let a_soc = self.max_step(&it, &dsoc, tau);
                    let trial2 = self.step_primal(&it, &dsoc, a_soc);
                    let (f2, c2) = self.eval_fc(&trial2.x);
                    let th2 = self.theta(&c2, &trial2.s);
                    let ph2 = self.barrier_value(&trial2, f2, mu);
                    if let Some(augment) =
                        self.acceptable(theta, phi, dphi, alpha, th2, ph2, &filter, theta_max, theta_min)
                    {
                        if augment {
                            filter.push(((1.0 - GAMMA_THETA) * theta, phi - GAMMA_PHI * theta));
                        }
                        alpha = a_soc;
                        accepted = Some((trial2, Evals { f: f2, grad: Vec::new(), c: c2, jac: Vec::new(), jac_entries: Vec::new() }));
                        break;
                    }
                }
                first_trial = false;
                alpha *= 0.5;
                if alpha < alpha_min {
                    break;
                }
            }

            match accepted {
                Some((trial, _)) => {
                    last_step = (alpha, delta_w, if first_trial { ' ' } else { 'b' });
                    let alpha_z = self.max_dual_step(&it, &dir, mu, tau);
                    let dy_alpha = alpha;
                    let mut next = trial;
                    for r in 0..m {
                        next.y[r] = it.y[r] + dy_alpha * dir.dy[r];
                    }
                    self.update_bound_duals(&it, &mut next, &dir, mu, alpha_z);
                    it = next;
                    ev = self.eval_all(&it.x);
                    restoration_fails = 0;
                }
                None => {
                    last_step = (0.0, delta_w, 'r');
                    // feasibility restoration
                    match self.restore(&mut it, mu, &filter, tau) {
                        Some(e) => {
                            ev = e;
                            if let Some(y) = self.least_squares_multipliers(&it, &ev) {
                                it.y = y;
                            } else {
                                it.y.iter_mut().for_each(|v| *v = 0.0);
                            }
                            filter.clear();
                            let th = self.theta(&ev.c, &it.s);
                            theta_max = theta_max.max(1e4 * th.max(1.0));
                            theta_min = theta_min.min(1e-4 * th.max(1.0));
                            restoration_fails = 0;
                        }
                        None => {
                            restoration_fails += 1;
                            let viol = self.unscaled_violation(&ev.c, &it.s);
                            if viol > opts.constr_viol_tol.max(1e-6) || restoration_fails > 3 {
                                return Err(self.infeasible(&it, &ev, iter));
                            }
                            // feasible but stuck: take the full step anyway
                            let trial = self.step_primal(&it, &dir, alpha_max.min(1e-3));
                            let alpha_z = self.max_dual_step(&it, &dir, mu, tau);
                            let mut next = trial;
                            self.update_bound_duals(&it, &mut next, &dir, mu, alpha_z);
                            it = next;
                            ev = self.eval_all(&it.x);
                            filter.clear();
                        }
                    }
                }
            }
        }
        let (dual, _, _) = self.errors(&it, &ev, 0.0);
        Err(NlpError::MaxIterations {
            iterations: opts.max_iter,
            violation: self.unscaled_violation(&ev.c, &it.s),
            dual,
        })
    }

    fn infeasible(&mut self, it: &Iterate, ev: &Evals, iter: usize) -> NlpError {
        let mut worst = (0.0, 0);
        for r in 0..self.m {
            let e = (ev.c[r] - it.s[r]).abs() / self.row_scale[r];
            if e > worst.0 {
                worst = (e, r);
            }
        }
        let (label, tag) = self.nlp.row_label(worst.1.min(self.m.saturating_sub(1)));
        NlpError::Infeasible { violation: worst.0, worst: format!("{label}[{tag}]"), iterations: iter }
    }

    fn finish(&mut self, it: &Iterate, ev: &Evals, iter: usize, status: SolveStatus) -> NlpSolution {
        self.set_x(&it.x);
        let x = self.full_x.clone();
        let y: Vec<f64> = (0..self.m).map(|r| it.y[r] * self.row_scale[r] / self.obj_scale).collect();
        let (dual, _, _) = self.errors(it, ev, 0.0);
        NlpSolution {
            objective: self.nlp.objective(&x),
            max_violation: self.nlp.violation(&x).0,
            x,
            y,
            iterations: iter,
            dual_infeasibility: dual,
            status,
        }
    }

    fn theta(&self, c: &[f64], s: &[f64]) -> f64 {
        c.iter().zip(s).map(|(a, b)| (a - b).abs()).sum()
    }

    fn unscaled_violation(&self, c: &[f64], s: &[f64]) -> f64 {
        (0..self.m).map(|r| (c[r] - s[r]).abs() / self.row_scale[r]).fold(0.0, f64::max)
    }

    /// (dual infeasibility, primal infeasibility, complementarity) scaled as
    /// in the overall optimality error.
    fn errors(&self, it: &Iterate, ev: &Evals, mu: f64) -> (f64, f64, f64) {
        let (n, m) = (self.n, self.m);
        let mut rx = ev.grad.clone();
        for (&(r, k), &v) in ev.jac_entries.iter().zip(&ev.jac) {
            rx[k] += v * it.y[r];
        }
        let mut dual: f64 = 0.0;
        for k in 0..n {
            dual = dual.max((rx[k] - it.zl[k] + it.zu[k]).abs());
        }
        for r in 0..m {
            if !self.eq[r] {
                dual = dual.max((-it.y[r] - it.vl[r] + it.vu[r]).abs());
            }
        }
        let primal = (0..m).map(|r| (ev.c[r] - it.s[r]).abs()).fold(0.0, f64::max);
        let mut compl: f64 = 0.0;
        let mut zsum = 0.0;
        let mut nz = 0usize;
        for k in 0..n {
            if self.xl[k].is_finite() {
                compl = compl.max(((it.x[k] - self.xl[k]) * it.zl[k] - mu).abs());
                zsum += it.zl[k];
                nz += 1;
            }
            if self.xu[k].is_finite() {
                compl = compl.max(((self.xu[k] - it.x[k]) * it.zu[k] - mu).abs());
                zsum += it.zu[k];
                nz += 1;
            }
        }
        for r in 0..m {
            if self.eq[r] {
                continue;
            }
            if self.sl[r].is_finite() {
                compl = compl.max(((it.s[r] - self.sl[r]) * it.vl[r] - mu).abs());
                zsum += it.vl[r];
                nz += 1;
            }
            if self.su[r].is_finite() {
                compl = compl.max(((self.su[r] - it.s[r]) * it.vu[r] - mu).abs());
                zsum += it.vu[r];
                nz += 1;
            }
        }
        let ysum: f64 = it.y.iter().map(|v| v.abs()).sum();
        let sd = (S_MAX.max((ysum + zsum) / ((m + nz).max(1) as f64))) / S_MAX;
        let sc = (S_MAX.max(zsum / (nz.max(1) as f64))) / S_MAX;
        (dual / sd, primal, compl / sc)
    }

    fn overall_error(&self, it: &Iterate, ev: &Evals, mu: f64) -> f64 {
        let (d, p, c) = self.errors(it, ev, mu);
        d.max(p).max(c)
    }

    fn factor_with_correction(
        &self,
        base: &Envelope,
        it: &Iterate,
        delta_w_last: f64,
    ) -> Result<(Ldl, Envelope, f64), NlpError> {
        let mut delta_w = 0.0;
        let mut delta_c = 0.0;
        for attempt in 0..40 {
            let kkt = self.assemble_diag(base, it, delta_w, delta_c);
            if let Some(ldl) = kkt.factor() {
                let (p, q, z) = ldl.inertia();
                if p == self.n && q == self.m && z == 0 {
                    return Ok((ldl, kkt, delta_w));
                }
                if q < self.m && p > self.n && delta_c == 0.0 && attempt == 0 {
                    // rank deficient constraints show up as missing negative pivots
                    delta_c = 1e-8;
                }
            } else if delta_c == 0.0 {
                delta_c = 1e-8;
            }
            delta_w = if delta_w == 0.0 {
                if delta_w_last == 0.0 {
                    1e-4
                } else {
                    (delta_w_last / 3.0).max(1e-20)
                }
            } else if delta_w_last == 0.0 {
                delta_w * 100.0
            } else {
                delta_w * 8.0
            };
            if delta_w > 1e40 {
                break;
            }
        }
        Err(NlpError::Numerical("KKT inertia correction failed".into()))
    }

    fn sigma_x(&self, it: &Iterate, k: usize) -> f64 {
        let mut s = 0.0;
        if self.xl[k].is_finite() {
            s += it.zl[k] / (it.x[k] - self.xl[k]);
        }
        if self.xu[k].is_finite() {
            s += it.zu[k] / (self.xu[k] - it.x[k]);
        }
        s
    }

    fn sigma_s(&self, it: &Iterate, r: usize) -> f64 {
        let mut s = 0.0;
        if self.sl[r].is_finite() {
            s += it.vl[r] / (it.s[r] - self.sl[r]);
        }
        if self.su[r].is_finite() {
            s += it.vu[r] / (self.su[r] - it.s[r]);
        }
        s
    }

    fn row_diag(&self, it: &Iterate, r: usize, delta_w: f64, delta_c: f64) -> f64 {
        if self.eq[r] {
            -delta_c
        } else {
            -(delta_c + 1.0 / (self.sigma_s(it, r) + delta_w))
        }
    }

    fn assemble_diag(&self, base: &Envelope, it: &Iterate, delta_w: f64, delta_c: f64) -> Envelope {
        let mut kkt = base.clone();
        for k in 0..self.n {
            let p = self.pos_var[k];
            kkt.add(p, p, self.sigma_x(it, k) + delta_w + STATIC_REG);
        }
        for r in 0..self.m {
            let p = self.pos_row[r];
            kkt.add(p, p, self.row_diag(it, r, delta_w, delta_c) - STATIC_REG);
        }
        kkt
    }

    /// Right-hand side in KKT ordering plus the slack residuals needed to
    /// recover `ds`. `soc` replaces the constraint residual.
    fn rhs(&self, it: &Iterate, ev: &Evals, mu: f64, soc: Option<&[f64]>) -> (Vec<f64>, Vec<f64>) {
        let (n, m) = (self.n, self.m);
        let mut gx = ev.grad.clone();
        for (&(r, k), &v) in ev.jac_entries.iter().zip(&ev.jac) {
            gx[k] += v * it.y[r];
        }
        let mut b = vec![0.0; n + m];
        for k in 0..n {
            let mut g = gx[k];
            let (lo, hi) = (self.xl[k], self.xu[k]);
            if lo.is_finite() {
                g -= mu / (it.x[k] - lo);
                if !hi.is_finite() {
                    g += KAPPA_D * mu;
                }
            }
            if hi.is_finite() {
                g += mu / (hi - it.x[k]);
                if !lo.is_finite() {
                    g -= KAPPA_D * mu;
                }
            }
            b[self.pos_var[k]] = -g;
        }
        let mut rs = vec![0.0; m];
        for r in 0..m {
            let cr = match soc {
                Some(c) => c[r],
                None => ev.c[r] - it.s[r],
            };
            if self.eq[r] {
                b[self.pos_row[r]] = -cr;
            } else {
                let mut g = -it.y[r];
                let (lo, hi) = (self.sl[r], self.su[r]);
                if lo.is_finite() {
                    g -= mu / (it.s[r] - lo);
                    if !hi.is_finite() {
                        g += KAPPA_D * mu;
                    }
                }
                if hi.is_finite() {
                    g += mu / (hi - it.s[r]);
                    if !lo.is_finite() {
                        g -= KAPPA_D * mu;
                    }
                }
                rs[r] = g;
                b[self.pos_row[r]] = -cr;
            }
        }
        (b, rs)
    }

    #[allow(clippy::too_many_arguments)]
    fn solve_direction(
        &self,
        ldl: &Ldl,
        kkt: &Envelope,
        it: &Iterate,
        _ev: &Evals,
        _mu: f64,
        delta_w: f64,
        rhs: &(Vec<f64>, Vec<f64>),
    ) -> Direction {
        let (n, m) = (self.n, self.m);
        let (b0, rs) = rhs;
        let mut b = b0.clone();
        for r in 0..m {
            if !self.eq[r] {
                let ds_den = self.sigma_s(it, r) + delta_w;
                b[self.pos_row[r]] -= rs[r] / ds_den;
            }
        }
        // the system without static regularization is refined against
        let mut sol = b.clone();
        ldl.solve_in_place(&mut sol);
        let mut res = vec![0.0; n + m];
        for _ in 0..5 {
            kkt.mul(&sol, &mut res);
            let mut rmax: f64 = 0.0;
            let mut bmax: f64 = 0.0;
            for i in 0..n + m {
                let reg = if self.var_pos[i] { STATIC_REG } else { -STATIC_REG };
                res[i] = b[i] - (res[i] - reg * sol[i]);
                rmax = rmax.max(res[i].abs());
                bmax = bmax.max(b[i].abs());
            }
            if rmax <= 1e-14 * bmax.max(1.0) {
                break;
            }
            ldl.solve_in_place(&mut res);
            for i in 0..n + m {
                sol[i] += res[i];
            }
        }
        let dx: Vec<f64> = (0..n).map(|k| sol[self.pos_var[k]]).collect();
        let dy: Vec<f64> = (0..m).map(|r| sol[self.pos_row[r]]).collect();
        let ds: Vec<f64> = (0..m)
            .map(|r| if self.eq[r] { 0.0 } else { (dy[r] - rs[r]) / (self.sigma_s(it, r) + delta_w) })
            .collect();
        Direction { dx, ds, dy }
    }

    fn max_step(&self, it: &Iterate, d: &Direction, tau: f64) -> f64 {
        let mut a: f64 = 1.0;
        for k in 0..self.n {
            let dx = d.dx[k];
            if dx < 0.0 && self.xl[k].is_finite() {
                a = a.min(-tau * (it.x[k] - self.xl[k]) / dx);
            }
            if dx > 0.0 && self.xu[k].is_finite() {
                a = a.min(tau * (self.xu[k] - it.x[k]) / dx);
            }
        }
        for r in 0..self.m {
            if self.eq[r] {
                continue;
            }
            let ds = d.ds[r];
            if ds < 0.0 && self.sl[r].is_finite() {
                a = a.min(-tau * (it.s[r] - self.sl[r]) / ds);
            }
            if ds > 0.0 && self.su[r].is_finite() {
                a = a.min(tau * (self.su[r] - it.s[r]) / ds);
            }
        }
        a
    }

    fn bound_dual_dirs(&self, it: &Iterate, d: &Direction, mu: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let (n, m) = (self.n, self.m);
        let mut dzl = vec![0.0; n];
        let mut dzu = vec![0.0; n];
        for k in 0..n {
            if self.xl[k].is_finite() {
                let g = it.x[k] - self.xl[k];
                dzl[k] = mu / g - it.zl[k] - it.zl[k] / g * d.dx[k];
            }
            if self.xu[k].is_finite() {
                let g = self.xu[k] - it.x[k];
                dzu[k] = mu / g - it.zu[k] + it.zu[k] / g * d.dx[k];
            }
        }
        let mut dvl = vec![0.0; m];
        let mut dvu = vec![0.0; m];
        for r in 0..m {
            if self.eq[r] {
                continue;
            }
            if self.sl[r].is_finite() {
                let g = it.s[r] - self.sl[r];
                dvl[r] = mu / g - it.vl[r] - it.vl[r] / g * d.ds[r];
            }
            if self.su[r].is_finite() {
                let g = self.su[r] - it.s[r];
                dvu[r] = mu / g - it.vu[r] + it.vu[r] / g * d.ds[r];
            }
        }
        (dzl, dzu, dvl, dvu)
    }

    fn max_dual_step(&self, it: &Iterate, d: &Direction, mu: f64, tau: f64) -> f64 {
        let (dzl, dzu, dvl, dvu) = self.bound_dual_dirs(it, d, mu);
        let mut a: f64 = 1.0;
        let mut lim = |z: f64, dz: f64| {
            if dz < 0.0 && z > 0.0 {
                a = a.min(-tau * z / dz);
            }
        };
        for k in 0..self.n {
            lim(it.zl[k], dzl[k]);
            lim(it.zu[k], dzu[k]);
        }
        for r in 0..self.m {
            lim(it.vl[r], dvl[r]);
            lim(it.vu[r], dvu[r]);
        }
        a
    }

    fn update_bound_duals(&self, it: &Iterate, next: &mut Iterate, d: &Direction, mu: f64, alpha_z: f64) {
        let (dzl, dzu, dvl, dvu) = self.bound_dual_dirs(it, d, mu);
        let clamp = |z: f64, gap: f64| {
            let lo = mu / (KAPPA_SIGMA * gap);
            let hi = KAPPA_SIGMA * mu / gap;
            z.max(lo).min(hi)
        };
        for k in 0..self.n {
            if self.xl[k].is_finite() {
                next.zl[k] = clamp(it.zl[k] + alpha_z * dzl[k], next.x[k] - self.xl[k]);
            }
            if self.xu[k].is_finite() {
                next.zu[k] = clamp(it.zu[k] + alpha_z * dzu[k], self.xu[k] - next.x[k]);
            }
        }
        for r in 0..self.m {
            if self.eq[r] {
                continue;
            }
            if self.sl[r].is_finite() {
                next.vl[r] = clamp(it.vl[r] + alpha_z * dvl[r], next.s[r] - self.sl[r]);
            }
            if self.su[r].is_finite() {
                next.vu[r] = clamp(it.vu[r] + alpha_z * dvu[r], self.su[r] - next.s[r]);
            }
        }
    }

    fn step_primal(&self, it: &Iterate, d: &Direction, alpha: f64) -> Iterate {
        let mut t = it.clone();
        for k in 0..self.n {
            t.x[k] += alpha * d.dx[k];
        }
        for r in 0..self.m {
            if !self.eq[r] {
                t.s[r] += alpha * d.ds[r];
            }
        }
        t
    }

    fn barrier_value(&self, it: &Iterate, f: f64, mu: f64) -> f64 {
        let mut phi = f;
        for k in 0..self.n {
            let (lo, hi) = (self.xl[k], self.xu[k]);
            if lo.is_finite() {
                phi -= mu * (it.x[k] - lo).ln();
                if !hi.is_finite() {
                    phi += KAPPA_D * mu * (it.x[k] - lo);
                }
            }
            if hi.is_finite() {
                phi -= mu * (hi - it.x[k]).ln();
                if !lo.is_finite() {
                    phi += KAPPA_D * mu * (hi - it.x[k]);
                }
            }
        }
        for r in 0..self.m {
            if self.eq[r] {
                continue;
            }
            let (lo, hi) = (self.sl[r], self.su[r]);
            if lo.is_finite() {
                phi -= mu * (it.s[r] - lo).ln();
                if !hi.is_finite() {
                    phi += KAPPA_D * mu * (it.s[r] - lo);
                }
            }
            if hi.is_finite() {
                phi -= mu * (hi - it.s[r]).ln();
                if !lo.is_finite() {
                    phi += KAPPA_D * mu * (hi - it.s[r]);
                }
            }
        }
        if phi.is_nan() {
            f64::INFINITY
        } else {
            phi
        }
    }

    /// Barrier value and its directional derivative along `d`.
    fn barrier(&self, it: &Iterate, ev: &Evals, mu: f64, d: &Direction) -> (f64, f64) {
        let phi = self.barrier_value(it, ev.f, mu);
        let mut dphi = 0.0;
        for k in 0..self.n {
            let mut g = ev.grad[k];
            let (lo, hi) = (self.xl[k], self.xu[k]);
            if lo.is_finite() {
                g -= mu / (it.x[k] - lo);
                if !hi.is_finite() {
                    g += KAPPA_D * mu;
                }
            }
            if hi.is_finite() {
                g += mu / (hi - it.x[k]);
                if !lo.is_finite() {
                    g -= KAPPA_D * mu;
                }
            }
            dphi += g * d.dx[k];
        }
        for r in 0..self.m {
            if self.eq[r] {
                continue;
            }
            let mut g = 0.0;
            let (lo, hi) = (self.sl[r], self.su[r]);
            if lo.is_finite() {
                g -= mu / (it.s[r] - lo);
                if !hi.is_finite() {
                    g += KAPPA_D * mu;
                }
            }
            if hi.is_finite() {
                g += mu / (hi - it.s[r]);
                if !lo.is_finite() {
                    g -= KAPPA_D * mu;
                }
            }
            dphi += g * d.ds[r];
        }
        (phi, dphi)
    }

    /// `Some(augment_filter)` when the trial point is accepted.
    #[allow(clippy::too_many_arguments)]
    fn acceptable(
        &self,
        theta: f64,
        phi: f64,
        dphi: f64,
        alpha: f64,
        theta_t: f64,
        phi_t: f64,
        filter: &[(f64, f64)],
        theta_max: f64,
        theta_min: f64,
    ) -> Option<bool> {
        if !theta_t.is_finite() || !phi_t.is_finite() || theta_t > theta_max {
            return None;
        }
        if filter.iter().any(|&(ft, fp)| theta_t >= ft && phi_t >= fp) {
            return None;
        }
        let switching = dphi < 0.0 && alpha * (-dphi).powf(S_PHI) > DELTA_SWITCH * theta.powf(S_THETA);
        if theta <= theta_min && switching {
            if phi_t <= phi + ETA_PHI * alpha * dphi {
                return Some(false);
            }
            return None;
        }
        if theta_t <= (1.0 - GAMMA_THETA) * theta || phi_t <= phi - GAMMA_PHI * theta {
            return Some(true);
        }
        None
    }

    fn least_squares_multipliers(&mut self, it: &Iterate, ev: &Evals) -> Option<Vec<f64>> {
        let (n, m) = (self.n, self.m);
        if m == 0 {
            return Some(Vec::new());
        }
        let mut kkt = Envelope::new(self.first.clone());
        for (&(r, k), &v) in ev.jac_entries.iter().zip(&ev.jac) {
            kkt.add(self.pos_row[r], self.pos_var[k], v);
        }
        for k in 0..n {
            let p = self.pos_var[k];
            kkt.add(p, p, 1.0);
        }
        for r in 0..m {
            let p = self.pos_row[r];
            kkt.add(p, p, -1e-8);
        }
        let ldl = kkt.factor()?;
        let mut b = vec![0.0; n + m];
        for k in 0..n {
            b[self.pos_var[k]] = -(ev.grad[k] - it.zl[k] + it.zu[k]);
        }
        ldl.solve_in_place(&mut b);
        let y: Vec<f64> = (0..m).map(|r| b[self.pos_row[r]]).collect();
        let ymax = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if ymax > 1e3 || !ymax.is_finite() {
            None
        } else {
            Some(y)
        }
    }

    /// Minimizes the constraint violation from the current point with
    /// proximal Gauss–Newton steps until the filter accepts the result.
    fn restore(&mut self, it: &mut Iterate, mu: f64, filter: &[(f64, f64)], tau: f64) -> Option<Evals> {
        let (n, m) = (self.n, self.m);
        let mut ev = self.eval_all(&it.x);
        let theta_start = self.theta(&ev.c, &it.s);
        let mut cur = it.clone();
        cur.y.iter_mut().for_each(|v| *v = 0.0);
        let mut theta = theta_start;
        let mu_r = mu.max(theta_start.min(1e-2) / (n + m).max(1) as f64).max(1e-10);
        for _ in 0..100 {
            let zeta = mu_r.sqrt();
            let mut base = Envelope::new(self.first.clone());
            for (&(r, k), &v) in ev.jac_entries.iter().zip(&ev.jac) {
                base.add(self.pos_row[r], self.pos_var[k], v);
            }
            for k in 0..n {
                let p = self.pos_var[k];
                base.add(p, p, zeta);
            }
            let kkt = self.assemble_diag(&base, &cur, 0.0, 1e-10);
            let ldl = kkt.factor()?;
            let zero = Evals {
                f: 0.0,
                grad: vec![0.0; n],
                c: ev.c.clone(),
                jac: ev.jac.clone(),
                jac_entries: ev.jac_entries.clone(),
            };
            let rhs = self.rhs(&cur, &zero, mu_r, None);
            let dir = self.solve_direction(&ldl, &kkt, &cur, &zero, mu_r, 0.0, &rhs);
            let amax = self.max_step(&cur, &dir, tau);
            let mut alpha = amax;
            let mut moved = false;
            while alpha > 1e-10 {
                let trial = self.step_primal(&cur, &dir, alpha);
                let (_, ct) = self.eval_fc(&trial.x);
                let th = self.theta(&ct, &trial.s);
                if th.is_finite() && th <= (1.0 - 1e-4 * alpha) * theta {
                    let alpha_z = self.max_dual_step(&cur, &dir, mu_r, tau);
                    let mut next = trial;
                    self.update_bound_duals(&cur, &mut next, &dir, mu_r, alpha_z);
                    cur = next;
                    theta = th;
                    moved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !moved {
                return None;
            }
            ev = self.eval_all(&cur.x);
            let phi_t = self.barrier_value(&cur, ev.f, mu);
            let in_filter = filter.iter().any(|&(ft, fp)| theta >= ft && phi_t >= fp);
            if theta <= 0.9 * theta_start && !in_filter {
                *it = cur;
                return Some(ev);
            }
        }
        None
    }
}

fn scatter_hessian(t: &HessTarget, hess: &[f64], ni: usize, kkt: &mut Envelope) {
    for (a, &i) in t.curved.iter().enumerate() {
        let pi = t.pos[i];
        if pi == usize::MAX {
            continue;
        }
        for &j in &t.curved[..=a] {
            let pj = t.pos[j];
            if pj == usize::MAX {
                continue;
            }
            let (r, c) = if i >= j { (i, j) } else { (j, i) };
            let v = hess[r * ni + c];
            if v != 0.0 {
                kkt.add(pi, pj, v);
            }
        }
    }
}
