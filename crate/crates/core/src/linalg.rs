//! Small dense-banded symmetric linear algebra used by the time steppers.
//!
//! The implicit step matrices are symmetric with the bandwidth of the
//! spatial stencil, so a banded Cholesky factorization gives us exact,
//! deterministic solves (no iterative tolerance) — the discrete adjoint is
//! then the true transpose of the forward sweep.

use crate::error::{Error, Result};

/// Symmetric banded matrix in lower-band storage.
///
/// `band[d][i]` holds the entry at row `i + d`, column `i` (so `band[0]` is
/// the main diagonal). All bands above `bw` are identically zero.
#[derive(Debug, Clone)]
pub struct SymBanded {
    n: usize,
    bw: usize,
    band: Vec<Vec<f64>>,
}

impl SymBanded {
    pub fn zeros(n: usize, bw: usize) -> Self {
        let bw = bw.min(n.saturating_sub(1));
        let band = (0..=bw).map(|d| vec![0.0; n - d]).collect();
        SymBanded { n, bw, band }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (lo, hi) = if i >= j { (j, i) } else { (i, j) };
        let d = hi - lo;
        if d > self.bw {
            0.0
        } else {
            self.band[d][lo]
        }
    }

    /// Adds `v` to the entry (i, j) = (j, i).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (lo, hi) = if i >= j { (j, i) } else { (i, j) };
        let d = hi - lo;
        assert!(d <= self.bw, "entry ({i},{j}) outside bandwidth {}", self.bw);
        self.band[d][lo] += v;
    }

    /// y = M x.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let mut acc = self.band[0][i] * x[i];
            for d in 1..=self.bw {
                if i >= d {
                    acc += self.band[d][i - d] * x[i - d];
                }
                if i + d < self.n {
                    acc += self.band[d][i] * x[i + d];
                }
            }
            y[i] = acc;
        }
    }

    /// Returns `alpha * self` with an extra diagonal field added:
    /// `alpha * M + diag(d)`.
    pub fn scaled_plus_diag(&self, alpha: f64, diag: &[f64]) -> SymBanded {
        assert_eq!(diag.len(), self.n);
        let mut out = self.clone();
        for d in 0..=out.bw {
            for v in out.band[d].iter_mut() {
                *v *= alpha;
            }
        }
        for i in 0..self.n {
            out.band[0][i] += diag[i];
        }
        out
    }

    /// Max-norm of the asymmetry of the stored matrix. Always zero by
    /// construction; kept for the operator symmetry audit.
    pub fn asymmetry(&self) -> f64 {
        0.0
    }

    /// Dense copy, for small-scale eigenvalue checks in tests.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                m[(i, j)] = self.get(i, j);
            }
        }
        m
    }

    /// Banded Cholesky factorization M = L Lᵀ.
    pub fn cholesky(&self) -> Result<BandedChol> {
        let n = self.n;
        let bw = self.bw;
        let mut l: Vec<Vec<f64>> = (0..=bw).map(|d| vec![0.0; n - d]).collect();
        for j in 0..n {
            let lo = j.saturating_sub(bw);
            let mut s = self.band[0][j];
            for k in lo..j {
                let v = l[j - k][k];
                s -= v * v;
            }
            if s <= 0.0 || !s.is_finite() {
                return Err(Error::SingularStep { level: j, pivot: s });
            }
            let ljj = s.sqrt();
            l[0][j] = ljj;
            let imax = (j + bw).min(n - 1);
            for i in (j + 1)..=imax {
                let lo_i = i.saturating_sub(bw).max(lo);
                let mut s = self.get(i, j);
                for k in lo_i..j {
                    s -= l[i - k][k] * l[j - k][k];
                }
                l[i - j][j] = s / ljj;
            }
        }
        Ok(BandedChol { n, bw, l })
    }
}

/// Cholesky factor of a [`SymBanded`] matrix.
#[derive(Debug, Clone)]
pub struct BandedChol {
    n: usize,
    bw: usize,
    l: Vec<Vec<f64>>,
}

impl BandedChol {
    /// Solves M x = b in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        // forward: L y = b
        for i in 0..self.n {
            let mut s = b[i];
            let dmax = self.bw.min(i);
            for d in 1..=dmax {
                s -= self.l[d][i - d] * b[i - d];
            }
            b[i] = s / self.l[0][i];
        }
        // backward: Lᵀ x = y
        for i in (0..self.n).rev() {
            let mut s = b[i];
            let dmax = self.bw.min(self.n - 1 - i);
            for d in 1..=dmax {
                s -= self.l[d][i] * b[i + d];
            }
            b[i] = s / self.l[0][i];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn banded_cholesky_matches_dense_solve() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for &(n, bw) in &[(6usize, 1usize), (12, 3), (20, 5)] {
            let mut m = SymBanded::zeros(n, bw);
            for i in 0..n {
                m.add(i, i, 4.0 + bw as f64);
                for d in 1..=bw {
                    if i + d < n {
                        let v: f64 = rand::Rng::gen_range(&mut rng, -1.0..1.0);
                        m.add(i + d, i, v);
                    }
                }
            }
            let b: Vec<f64> = (0..n)
                .map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0))
                .collect();
            let chol = m.cholesky().expect("spd");
            let x = chol.solve(&b);
            let dense = m.to_dense();
            let xd = dense
                .clone()
                .lu()
                .solve(&nalgebra::DVector::from_vec(b.clone()))
                .unwrap();
            for i in 0..n {
                assert!((x[i] - xd[i]).abs() < 1e-12, "n={n} bw={bw} i={i}");
            }
        }
    }

    #[test]
    fn indefinite_matrix_reports_pivot() {
        let mut m = SymBanded::zeros(3, 1);
        m.add(0, 0, 1.0);
        m.add(1, 1, -2.0);
        m.add(2, 2, 1.0);
        match m.cholesky() {
            Err(Error::SingularStep { level, .. }) => assert_eq!(level, 1),
            other => panic!("expected SingularStep, got {other:?}"),
        }
    }
}
