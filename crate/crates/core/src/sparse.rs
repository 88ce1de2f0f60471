//! Symmetric envelope (profile) matrices with a pivot-free `LDLᵀ`.
//!
//! Row `i` stores the lower-triangle entries from its first nonzero column
//! up to the diagonal. With a banded-plus-border ordering the factor has no
//! fill outside the envelope, which keeps the KKT systems of trajectory
//! problems cheap without a general sparse ordering.

#[derive(Debug, Clone)]
pub struct Envelope {
    first: Vec<usize>,
    start: Vec<usize>,
    vals: Vec<f64>,
}

impl Envelope {
    /// `first[i] ≤ i` is the first stored column of row `i`.
    pub fn new(first: Vec<usize>) -> Self {
        let mut start = Vec::with_capacity(first.len() + 1);
        let mut acc = 0;
        for (i, &f) in first.iter().enumerate() {
            assert!(f <= i, "envelope row {i} starts after its diagonal");
            start.push(acc);
            acc += i - f + 1;
        }
        start.push(acc);
        Self { first, start, vals: vec![0.0; acc] }
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn first(&self, i: usize) -> usize {
        self.first[i]
    }

    pub fn clear(&mut self) {
        self.vals.iter_mut().for_each(|v| *v = 0.0);
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(c >= self.first[r], "entry ({r},{c}) outside envelope");
        self.start[r] + c - self.first[r]
    }

    /// Adds `v` to the symmetric pair `(i, j)`, `(j, i)`.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.vals[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if c < self.first[r] {
            0.0
        } else {
            self.vals[self.idx(r, c)]
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.vals[self.start[i]..self.start[i + 1]]
    }

    /// `y = A x`.
    pub fn mul(&self, x: &[f64], y: &mut [f64]) {
        let n = self.dim();
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            let f = self.first[i];
            let row = self.row(i);
            let (off, diag) = row.split_at(row.len() - 1);
            let mut acc = diag[0] * x[i];
            for (k, &a) in off.iter().enumerate() {
                acc += a * x[f + k];
                y[f + k] += a * x[i];
            }
            y[i] += acc;
        }
    }

    /// Pivot-free `LDLᵀ`. Returns `None` on a zero or non-finite pivot.
    pub fn factor(&self) -> Option<Ldl> {
        let n = self.dim();
        let mut l = self.vals.clone();
        let mut d = vec![0.0; n];
        let mut w = Vec::new();
        for i in 0..n {
            let fi = self.first[i];
            let (si, len) = (self.start[i], i - fi);
            // l[si..si+len] holds A_ij; turn it into w_ij = L_ij d_j in place
            for jj in 0..len {
                let j = fi + jj;
                let fj = self.first[j];
                let k0 = fi.max(fj);
                if k0 < j {
                    let sj = self.start[j];
                    let a = &l[si + (k0 - fi)..si + jj];
                    let b = &l[sj + (k0 - fj)..sj + (j - fj)];
                    let s = dot(a, b);
                    l[si + jj] -= s;
                }
            }
            w.clear();
            w.extend_from_slice(&l[si..si + len]);
            let mut diag = l[si + len];
            for jj in 0..len {
                let lij = w[jj] / d[fi + jj];
                diag -= w[jj] * lij;
                l[si + jj] = lij;
            }
            if diag == 0.0 || !diag.is_finite() {
                return None;
            }
            d[i] = diag;
            l[si + len] = 1.0;
        }
        Some(Ldl { first: self.first.clone(), start: self.start.clone(), l, d })
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}

#[derive(Debug, Clone)]
pub struct Ldl {
    first: Vec<usize>,
    start: Vec<usize>,
    l: Vec<f64>,
    d: Vec<f64>,
}

impl Ldl {
    /// Numbers of positive, negative and zero pivots.
    pub fn inertia(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for &v in &self.d {
            if v > 0.0 {
                c.0 += 1;
            } else if v < 0.0 {
                c.1 += 1;
            } else {
                c.2 += 1;
            }
        }
        c
    }

    pub fn pivots(&self) -> &[f64] {
        &self.d
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.d.len();
        for i in 0..n {
            let f = self.first[i];
            let row = &self.l[self.start[i]..self.start[i + 1] - 1];
            x[i] -= dot(row, &x[f..i]);
        }
        for i in 0..n {
            x[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let f = self.first[i];
            let xi = x[i];
            let row = &self.l[self.start[i]..self.start[i + 1] - 1];
            for (k, &v) in row.iter().enumerate() {
                x[f + k] -= v * xi;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_envelope(rng: &mut ChaCha8Rng, n: usize, band: usize) -> Envelope {
        let first: Vec<usize> = (0..n).map(|i| i.saturating_sub(rng.random_range(0..=band))).collect();
        let mut e = Envelope::new(first.clone());
        for i in 0..n {
            for j in first[i]..i {
                e.add(i, j, rng.random_range(-1.0..1.0));
            }
            e.add(i, i, rng.random_range(-1.0..1.0) + if i % 3 == 0 { -4.0 } else { 4.0 });
        }
        e
    }

    fn dense(e: &Envelope) -> DMatrix<f64> {
        let n = e.dim();
        DMatrix::from_fn(n, n, |i, j| e.get(i, j))
    }

    #[test]
    fn solve_matches_dense_lu() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let e = random_envelope(&mut rng, 40, 6);
            let a = dense(&e);
            let b: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut x = b.clone();
            e.factor().unwrap().solve_in_place(&mut x);
            let oracle = a.lu().solve(&nalgebra::DVector::from_vec(b)).unwrap();
            for i in 0..40 {
                assert!((x[i] - oracle[i]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn inertia_matches_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let e = random_envelope(&mut rng, 30, 5);
            let eig = dense(&e).symmetric_eigenvalues();
            let pos = eig.iter().filter(|&&v| v > 0.0).count();
            let (p, m, z) = e.factor().unwrap().inertia();
            assert_eq!((p, m, z), (pos, 30 - pos, 0));
        }
    }

    #[test]
    fn multiply_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let e = random_envelope(&mut rng, 25, 8);
        let x: Vec<f64> = (0..25).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut y = vec![0.0; 25];
        e.mul(&x, &mut y);
        let oracle = dense(&e) * nalgebra::DVector::from_vec(x);
        for i in 0..25 {
            assert!((y[i] - oracle[i]).abs() < 1e-12);
        }
    }
}
