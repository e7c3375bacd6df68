//! Selected eigenpairs of a real symmetric tridiagonal matrix by Sturm
//! bisection followed by inverse iteration.

use crate::error::{Error, Result};

/// Symmetric tridiagonal matrix: `diag[i]` on the diagonal and `off[i]`
/// coupling rows `i` and `i + 1`.
#[derive(Debug, Clone)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || off.len() + 1 != diag.len() {
            return Err(Error::invalid(format!(
                "tridiagonal shape mismatch: {} diagonal, {} off-diagonal entries",
                diag.len(),
                off.len()
            )));
        }
        Ok(SymTridiagonal { diag, off })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 } + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// Number of eigenvalues strictly below `x`.
    fn count_below(&self, x: f64, pivmin: f64) -> usize {
        let mut count = 0;
        let mut q = self.diag[0] - x;
        if q.abs() < pivmin {
            q = -pivmin;
        }
        if q < 0.0 {
            count += 1;
        }
        for i in 1..self.len() {
            let e = self.off[i - 1];
            q = self.diag[i] - x - e * e / q;
            if q.abs() < pivmin {
                q = -pivmin;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// The `k`-th smallest eigenvalue (0-based) by bisection.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        let (mut lo, mut hi) = self.gershgorin();
        let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
        let pivmin = f64::MIN_POSITIVE.max(f64::EPSILON * f64::EPSILON * scale);
        lo -= f64::EPSILON * scale;
        hi += f64::EPSILON * scale;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid, pivmin) > k {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 2.0 * f64::EPSILON * mid.abs().max(f64::MIN_POSITIVE) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// Eigenvector for an (accurately known) eigenvalue by inverse iteration.
    pub fn eigenvector(&self, lambda: f64) -> Result<Vec<f64>> {
        let n = self.len();
        if n == 1 {
            return Ok(vec![1.0]);
        }
        let norm = self
            .diag
            .iter()
            .map(|d| d.abs())
            .chain(self.off.iter().map(|e| e.abs()))
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let lu = ShiftedLu::factor(self, lambda, f64::EPSILON * norm);
        // deterministic, non-symmetric start vector so that odd and even
        // eigenvectors both have a component
        let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.618_033_988_75).fract()).collect();
        for _ in 0..4 {
            lu.solve(&mut x);
            let s = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !s.is_finite() || s == 0.0 {
                return Err(Error::numerical(format!("inverse iteration diverged at eigenvalue {lambda}")));
            }
            x.iter_mut().for_each(|v| *v /= s);
        }
        Ok(x)
    }
}

/// LU factorization of `T - shift*I` with partial pivoting; U has two
/// superdiagonals.
struct ShiftedLu {
    u0: Vec<f64>,
    u1: Vec<f64>,
    u2: Vec<f64>,
    mult: Vec<f64>,
    swapped: Vec<bool>,
}

impl ShiftedLu {
    fn factor(t: &SymTridiagonal, shift: f64, tiny: f64) -> Self {
        let n = t.len();
        let mut u0 = vec![0.0; n];
        let mut u1 = vec![0.0; n];
        let mut u2 = vec![0.0; n];
        let mut mult = vec![0.0; n.saturating_sub(1)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        // current working row i: (cur0, cur1, cur2) at columns i, i+1, i+2
        let mut cur0 = t.diag[0] - shift;
        let mut cur1 = if n > 1 { t.off[0] } else { 0.0 };
        let mut cur2 = 0.0;
        for i in 0..n - 1 {
            let a = t.off[i];
            let b = t.diag[i + 1] - shift;
            let c = if i + 2 < n { t.off[i + 1] } else { 0.0 };
            if a.abs() > cur0.abs() {
                let m = cur0 / a;
                u0[i] = a;
                u1[i] = b;
                u2[i] = c;
                mult[i] = m;
                swapped[i] = true;
                cur0 = cur1 - m * b;
                cur1 = cur2 - m * c;
            } else {
                if cur0 == 0.0 {
                    cur0 = tiny;
                }
                let m = a / cur0;
                u0[i] = cur0;
                u1[i] = cur1;
                u2[i] = cur2;
                mult[i] = m;
                cur0 = b - m * cur1;
                cur1 = c - m * cur2;
            }
            cur2 = 0.0;
        }
        u0[n - 1] = if cur0 == 0.0 { tiny } else { cur0 };
        for v in &mut u0 {
            if v.abs() < tiny {
                *v = tiny.copysign(*v);
            }
        }
        ShiftedLu {
            u0,
            u1,
            u2,
            mult,
            swapped,
        }
    }

    fn solve(&self, x: &mut [f64]) {
        let n = x.len();
        for i in 0..n - 1 {
            if self.swapped[i] {
                x.swap(i, i + 1);
            }
            x[i + 1] -= self.mult[i] * x[i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            if i + 1 < n {
                s -= self.u1[i] * x[i + 1];
            }
            if i + 2 < n {
                s -= self.u2[i] * x[i + 2];
            }
            x[i] = s / self.u0[i];
        }
    }
}

/// The `count` largest eigenpairs, in descending eigenvalue order.
///
/// Vectors are re-orthogonalized against their predecessors.
pub fn largest_eigenpairs(t: &SymTridiagonal, count: usize) -> Result<Vec<(f64, Vec<f64>)>> {
    let n = t.len();
    if count > n {
        return Err(Error::invalid(format!("requested {count} eigenpairs of a {n}x{n} matrix")));
    }
    let mut out: Vec<(f64, Vec<f64>)> = Vec::with_capacity(count);
    for k in 0..count {
        let lambda = t.eigenvalue(n - 1 - k);
        let mut v = t.eigenvector(lambda)?;
        for _ in 0..2 {
            for (_, prev) in &out {
                let dot: f64 = v.iter().zip(prev).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(prev).for_each(|(a, b)| *a -= dot * b);
            }
            let s = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if s == 0.0 || !s.is_finite() {
                return Err(Error::numerical(format!("eigenvector {k} collapsed during re-orthogonalization")));
            }
            v.iter_mut().for_each(|a| *a /= s);
        }
        out.push((lambda, v));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_eigen(t: &SymTridiagonal) -> (Vec<f64>, nalgebra::DMatrix<f64>) {
        let n = t.len();
        let mut m = nalgebra::DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = t.diag[i];
            if i + 1 < n {
                m[(i, i + 1)] = t.off[i];
                m[(i + 1, i)] = t.off[i];
            }
        }
        let e = m.symmetric_eigen();
        (e.eigenvalues.iter().copied().collect(), e.eigenvectors)
    }

    #[test]
    fn two_by_two() {
        let t = SymTridiagonal::new(vec![0.0, 0.0], vec![0.5]).unwrap();
        let pairs = largest_eigenpairs(&t, 2).unwrap();
        assert!((pairs[0].0 - 0.5).abs() < 1e-15);
        assert!((pairs[1].0 + 0.5).abs() < 1e-15);
        let v = &pairs[0].1;
        let s = v[0].signum();
        assert!((s * v[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-14);
        assert!((s * v[1] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-14);
    }

    #[test]
    fn matches_dense_solver_on_random_matrices() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for n in [1usize, 3, 7, 40] {
            let diag: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let off: Vec<f64> = (0..n.saturating_sub(1)).map(|_| rng.random_range(0.1..3.0)).collect();
            let t = SymTridiagonal::new(diag, off).unwrap();
            let (vals, vecs) = dense_eigen(&t);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
            let pairs = largest_eigenpairs(&t, n).unwrap();
            for (k, (lambda, v)) in pairs.iter().enumerate() {
                let j = order[k];
                assert!((lambda - vals[j]).abs() < 1e-12 * (1.0 + vals[j].abs()), "n={n} k={k}");
                let col = vecs.column(j);
                let dot: f64 = v.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
                assert!((dot.abs() - 1.0).abs() < 1e-10, "n={n} k={k} dot={dot}");
            }
        }
    }
}
