//! Banded matrices with LU factorisation and partial pivoting.

use crate::error::{Error, Result};

/// Square band matrix with `kl` sub- and `ku` super-diagonals.
///
/// Row `i` stores columns `i - kl ..= i + ku + kl`; the extra `kl` columns
/// hold fill-in from row interchanges.
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandedMatrix {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let off = j as isize - i as isize + self.kl as isize;
        (j < self.n && off >= 0 && (off as usize) < self.width)
            .then(|| i * self.width + off as usize)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |k| self.data[k])
    }

    /// Adds `v` at `(i, j)`, which must lie inside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            j + self.kl >= i && j <= i + self.ku,
            "entry ({i}, {j}) outside band ({}, {})",
            self.kl,
            self.ku
        );
        let k = self.slot(i, j).expect("in band");
        self.data[k] += v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku + self.kl).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    pub fn factor(mut self) -> Result<BandedLu> {
        let n = self.n;
        let mut pivots = vec![0usize; n];
        let mut multipliers = vec![0.0; n * self.kl];
        for k in 0..n {
            let last = (k + self.kl).min(n - 1);
            let (p, best) = (k..=last)
                .map(|i| (i, self.get(i, k).abs()))
                .fold((k, -1.0), |acc, c| if c.1 > acc.1 { c } else { acc });
            if !(best > 0.0) || !best.is_finite() {
                return Err(Error::SolverDiverged {
                    iterations: 0,
                    residual: f64::NAN,
                });
            }
            pivots[k] = p;
            let right = (k + self.ku + self.kl).min(n - 1);
            if p != k {
                for j in k..=right {
                    let (a, b) = (self.slot(k, j).unwrap(), self.slot(p, j));
                    let vb = b.map_or(0.0, |b| self.data[b]);
                    let va = self.data[a];
                    self.data[a] = vb;
                    if let Some(b) = b {
                        self.data[b] = va;
                    } else {
                        debug_assert_eq!(va, 0.0);
                    }
                }
            }
            let pivot = self.get(k, k);
            for i in (k + 1)..=last {
                let m = self.get(i, k) / pivot;
                multipliers[k * self.kl + (i - k - 1)] = m;
                if m == 0.0 {
                    continue;
                }
                let si = self.slot(i, k).unwrap();
                self.data[si] = 0.0;
                for j in (k + 1)..=right {
                    let ukj = self.get(k, j);
                    if ukj != 0.0 {
                        let s = self.slot(i, j).expect("fill-in within band");
                        self.data[s] -= m * ukj;
                    }
                }
            }
        }
        Ok(BandedLu {
            u: self,
            pivots,
            multipliers,
        })
    }
}

/// `P A = L U` of a [`BandedMatrix`].
#[derive(Debug, Clone)]
pub struct BandedLu {
    u: BandedMatrix,
    pivots: Vec<usize>,
    multipliers: Vec<f64>,
}

impl BandedLu {
    pub fn size(&self) -> usize {
        self.u.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, kl) = (self.u.n, self.u.kl);
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.pivots[k]);
            let last = (k + kl).min(n - 1);
            for i in (k + 1)..=last {
                x[i] -= self.multipliers[k * kl + (i - k - 1)] * x[k];
            }
        }
        for k in (0..n).rev() {
            let right = (k + self.u.ku + kl).min(n - 1);
            let s: f64 = ((k + 1)..=right).map(|j| self.u.get(k, j) * x[j]).sum();
            x[k] = (x[k] - s) / self.u.get(k, k);
        }
        x
    }
}
