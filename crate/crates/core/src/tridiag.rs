//! Symmetric tridiagonal eigenproblems: Sturm-sequence bisection for the
//! eigenvalues in a window, inverse iteration for the vectors.

use rayon::prelude::*;

#[derive(Clone, Debug)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    /// Off-diagonal, `off[i]` couples rows `i` and `i + 1`.
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert_eq!(off.len() + 1, diag.len().max(1), "off-diagonal length must be n - 1");
        SymTridiagonal { diag, off }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn is_symmetric(&self) -> bool {
        // stored symmetric by construction
        true
    }

    /// Gershgorin enclosure of the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 }
                + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    pub fn norm_bound(&self) -> f64 {
        let (lo, hi) = self.gershgorin();
        lo.abs().max(hi.abs())
    }

    /// Number of eigenvalues strictly below `lambda`.
    pub fn count_below(&self, lambda: f64) -> usize {
        let tiny = f64::MIN_POSITIVE.sqrt() * self.norm_hint();
        let mut count = 0;
        let mut q = 0.0;
        for i in 0..self.len() {
            q = if i == 0 {
                self.diag[0] - lambda
            } else {
                self.diag[i] - lambda - self.off[i - 1] * self.off[i - 1] / q
            };
            if q.abs() < tiny {
                q = -tiny;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn norm_hint(&self) -> f64 {
        self.diag.iter().fold(1.0_f64, |a, d| a.max(d.abs()))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * x[i];
                if i > 0 {
                    s += self.off[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    s += self.off[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    /// All eigenvalues in `[lo, hi)`, ascending.
    pub fn eigenvalues_in(&self, lo: f64, hi: f64) -> Vec<f64> {
        let first = self.count_below(lo);
        let last = self.count_below(hi);
        (first..last).into_par_iter().map(|k| self.kth_eigenvalue(k, lo, hi)).collect()
    }

    /// Bisection for the `k`-th (0-based) eigenvalue known to lie in `[lo, hi)`.
    fn kth_eigenvalue(&self, k: usize, mut lo: f64, mut hi: f64) -> f64 {
        let eps = f64::EPSILON;
        let floor = eps * self.norm_hint();
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= 2.0 * eps * lo.abs().max(hi.abs()) + floor || mid == lo || mid == hi {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Unit eigenvector for an eigenvalue obtained from [`eigenvalues_in`](Self::eigenvalues_in).
    pub fn eigenvector(&self, lambda: f64) -> Vec<f64> {
        self.inverse_iteration(lambda, &[])
    }

    fn inverse_iteration(&self, lambda: f64, against: &[&[f64]]) -> Vec<f64> {
        let n = self.len();
        let lu = TridiagLu::factor(self, lambda);
        // deterministic, non-degenerate start vector
        let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 0.618_033_988_7).sin()).collect();
        for _ in 0..4 {
            lu.solve(&mut x);
            for v in against {
                let p: f64 = x.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
                x.iter_mut().zip(v.iter()).for_each(|(a, b)| *a -= p * b);
            }
            let nrm = x.iter().map(|a| a * a).sum::<f64>().sqrt();
            x.iter_mut().for_each(|a| *a /= nrm);
        }
        x
    }

    /// Eigenpairs in `[lo, hi)`. Vectors belonging to numerically degenerate
    /// eigenvalues are re-orthogonalised against each other.
    pub fn eigenpairs_in(&self, lo: f64, hi: f64) -> Vec<(f64, Vec<f64>)> {
        let values = self.eigenvalues_in(lo, hi);
        let cluster_tol = 1e-9 * self.norm_bound().max(1.0);
        // split into clusters of (nearly) coincident eigenvalues
        let mut clusters: Vec<Vec<f64>> = Vec::new();
        for &v in &values {
            match clusters.last_mut() {
                Some(c) if v - *c.last().unwrap() < cluster_tol => c.push(v),
                _ => clusters.push(vec![v]),
            }
        }
        clusters
            .into_par_iter()
            .flat_map_iter(|cluster| {
                let mut out: Vec<(f64, Vec<f64>)> = Vec::with_capacity(cluster.len());
                for (j, &lam) in cluster.iter().enumerate() {
                    // separate coincident shifts slightly so the factorisations differ
                    let shift = lam + j as f64 * cluster_tol * 1e-3;
                    let prev: Vec<&[f64]> = out.iter().map(|(_, v)| v.as_slice()).collect();
                    let v = self.inverse_iteration(shift, &prev);
                    out.push((lam, v));
                }
                out
            })
            .collect()
    }
}

/// LU factorisation of `T - lambda I` with partial pivoting.
struct TridiagLu {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagLu {
    fn factor(t: &SymTridiagonal, lambda: f64) -> Self {
        let n = t.len();
        let mut d: Vec<f64> = t.diag.iter().map(|x| x - lambda).collect();
        let mut dl = t.off.clone();
        let mut du = t.off.clone();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] != 0.0 {
                    let fact = dl[i] / d[i];
                    dl[i] = fact;
                    d[i + 1] -= fact * du[i];
                }
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] *= -fact;
                }
                swapped[i] = true;
            }
        }
        // exact singularity at a converged eigenvalue: nudge the pivot
        let tiny = f64::EPSILON * t.norm_hint();
        for p in d.iter_mut() {
            if p.abs() < tiny {
                *p = if *p < 0.0 { -tiny } else { tiny };
            }
        }
        TridiagLu { dl, d, du, du2, swapped }
    }

    fn solve(&self, b: &mut [f64]) {
        let n = b.len();
        for i in 0..n.saturating_sub(1) {
            if !self.swapped[i] {
                b[i + 1] -= self.dl[i] * b[i];
            } else {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - self.dl[i] * b[i];
            }
        }
        b[n - 1] /= self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
        // guard against overflow in the first iterations
        let m = b.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
        if m > 1e150 {
            b.iter_mut().for_each(|x| *x /= m);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn laplacian(n: usize) -> SymTridiagonal {
        SymTridiagonal::new(vec![2.0; n], vec![-1.0; n - 1])
    }

    #[test]
    fn discrete_laplacian_spectrum() {
        let n = 50;
        let t = laplacian(n);
        let vals = t.eigenvalues_in(-1.0, 5.0);
        assert_eq!(vals.len(), n);
        for (k, v) in vals.iter().enumerate() {
            let exact = 2.0 - 2.0 * (PI * (k + 1) as f64 / (n + 1) as f64).cos();
            assert!((v - exact).abs() < 1e-13, "{k}: {v} vs {exact}");
        }
    }

    #[test]
    fn eigenvectors_satisfy_residual_and_orthogonality() {
        let n = 200;
        let diag: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
        let off: Vec<f64> = (0..n - 1).map(|i| 1.0 + 0.1 * (i as f64).cos()).collect();
        let t = SymTridiagonal::new(diag, off);
        let (lo, hi) = t.gershgorin();
        let pairs = t.eigenpairs_in(lo - 1.0, hi + 1.0);
        assert_eq!(pairs.len(), n);
        for (lam, v) in &pairs {
            let tv = t.matvec(v);
            let r = tv.iter().zip(v).map(|(a, b)| (a - lam * b).powi(2)).sum::<f64>().sqrt();
            assert!(r < 1e-10, "residual {r}");
        }
        for i in 0..n {
            for j in 0..i {
                let d: f64 = pairs[i].1.iter().zip(&pairs[j].1).map(|(a, b)| a * b).sum();
                assert!(d.abs() < 1e-9, "overlap {i},{j}: {d}");
            }
        }
    }

    #[test]
    fn degenerate_blocks_stay_orthogonal() {
        // two decoupled copies of the same chain give exact doublets
        let n = 20;
        let mut diag = vec![2.0; 2 * n];
        diag.iter_mut().enumerate().for_each(|(i, d)| *d += 0.01 * (i % n) as f64);
        let mut off = vec![-1.0; 2 * n - 1];
        off[n - 1] = 0.0;
        let t = SymTridiagonal::new(diag, off);
        let pairs = t.eigenpairs_in(-1.0, 5.0);
        assert_eq!(pairs.len(), 2 * n);
        for i in 0..2 * n {
            for j in 0..i {
                let d: f64 = pairs[i].1.iter().zip(&pairs[j].1).map(|(a, b)| a * b).sum();
                assert!(d.abs() < 1e-9, "overlap {i},{j}: {d}");
            }
        }
    }

    #[test]
    fn window_counts() {
        let t = laplacian(10);
        assert_eq!(t.count_below(-0.1), 0);
        assert_eq!(t.count_below(4.1), 10);
        assert_eq!(t.eigenvalues_in(0.0, 2.0).len(), 5);
    }
}
