use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// LU factorisation without pivoting of a square matrix with `kl` sub- and
/// `ku` super-diagonals, stored row by row in a dense band.
#[derive(Debug, Clone)]
pub struct BandedLu<T> {
    n: usize,
    kl: usize,
    ku: usize,
    band: Vec<T>,
}

impl<T: Scalar> BandedLu<T> {
    /// Zero matrix of order `n`.
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self {
            n,
            kl,
            ku,
            band: vec![T::zero(); n * (kl + ku + 1)],
        }
    }

    pub fn order(&self) -> usize {
        self.n
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.ku, "({i}, {j}) outside band");
        i * (self.kl + self.ku + 1) + (j + self.kl - i)
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        if j + self.kl < i || j > i + self.ku {
            T::zero()
        } else {
            self.band[self.slot(i, j)]
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: T) {
        let s = self.slot(i, j);
        self.band[s] = self.band[s] + v;
    }

    /// In-place Doolittle factorisation. A pivot below `1e-300` in magnitude,
    /// or not finite, is reported with its row.
    pub fn factor(mut self) -> Result<Self> {
        let n = self.n;
        for j in 0..n {
            let pivot = self.band[self.slot(j, j)];
            if !pivot.is_finite() || pivot.abs() < T::min_positive_value() {
                return Err(Error::BadStencil { row: j });
            }
            for i in j + 1..(j + self.kl + 1).min(n) {
                let sij = self.slot(i, j);
                let l = self.band[sij] / pivot;
                self.band[sij] = l;
                if l == T::zero() {
                    continue;
                }
                for m in j + 1..(j + self.ku + 1).min(n) {
                    let sim = self.slot(i, m);
                    let sjm = self.slot(j, m);
                    self.band[sim] = self.band[sim] - l * self.band[sjm];
                }
            }
        }
        Ok(self)
    }

    /// Solves `A x = b` in place with a factored matrix.
    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        for i in 0..n {
            let lo = i.saturating_sub(self.kl);
            let mut acc = b[i];
            for j in lo..i {
                acc = acc - self.band[self.slot(i, j)] * b[j];
            }
            b[i] = acc;
        }
        for i in (0..n).rev() {
            let hi = (i + self.ku + 1).min(n);
            let mut acc = b[i];
            for j in i + 1..hi {
                acc = acc - self.band[self.slot(i, j)] * b[j];
            }
            b[i] = acc / self.band[self.slot(i, i)];
        }
    }
}
