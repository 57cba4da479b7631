//! Exact rational matrices for certified rank and kernel computations.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

/// Dense row-major matrix over the rationals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QMatrix {
    rows: usize,
    cols: usize,
    data: Vec<BigRational>,
}

impl QMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![BigRational::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, BigRational::one());
        }
        m
    }

    pub fn from_i64(rows: usize, cols: usize, values: &[i64]) -> Self {
        assert_eq!(values.len(), rows * cols);
        Self {
            rows,
            cols,
            data: values
                .iter()
                .map(|&v| BigRational::from_integer(BigInt::from(v)))
                .collect(),
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> BigRational) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &BigRational {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: BigRational) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[BigRational] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_f64(&self) -> faer::Mat<f64> {
        use num_traits::ToPrimitive;
        faer::Mat::from_fn(self.rows, self.cols, |i, j| self.get(i, j).to_f64().unwrap_or(f64::NAN))
    }

    pub fn matmul(&self, other: &QMatrix) -> QMatrix {
        assert_eq!(self.cols, other.rows, "inner dimensions");
        let mut out = QMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for t in 0..self.cols {
                let a = self.get(i, t);
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let b = other.get(t, j);
                    if !b.is_zero() {
                        let idx = i * out.cols + j;
                        out.data[idx] += a * b;
                    }
                }
            }
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(Zero::is_zero)
    }

    /// Each row scaled by the lcm of its denominators, giving integer rows
    /// with the same row space.
    fn integer_rows(&self) -> Vec<Vec<BigInt>> {
        (0..self.rows)
            .map(|i| {
                let row = self.row(i);
                let lcm = row.iter().fold(BigInt::one(), |acc, v| acc.lcm(v.denom()));
                row.iter().map(|v| v.numer() * (&lcm / v.denom())).collect()
            })
            .collect()
    }

    /// Exact rank by fraction-free (Bareiss) elimination.
    pub fn rank(&self) -> usize {
        let mut a = self.integer_rows();
        let (rows, cols) = (self.rows, self.cols);
        let mut prev = BigInt::one();
        let mut r = 0;
        for c in 0..cols {
            if r == rows {
                break;
            }
            let Some(p) = (r..rows).find(|&i| !a[i][c].is_zero()) else {
                continue;
            };
            a.swap(r, p);
            let (head, tail) = a.split_at_mut(r + 1);
            let pivot_row = &head[r];
            let pivot = pivot_row[c].clone();
            for row in tail.iter_mut() {
                let lead = row[c].clone();
                for j in c + 1..cols {
                    let v = &pivot * &row[j] - &lead * &pivot_row[j];
                    debug_assert!((&v % &prev).is_zero());
                    row[j] = v / &prev;
                }
                row[c] = BigInt::zero();
            }
            prev = pivot;
            r += 1;
        }
        r
    }

    /// Reduced row echelon form; returns the pivot columns.
    pub fn rref_in_place(&mut self) -> Vec<usize> {
        let (rows, cols) = (self.rows, self.cols);
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..cols {
            if r == rows {
                break;
            }
            let Some(p) = (r..rows).find(|&i| !self.get(i, c).is_zero()) else {
                continue;
            };
            if p != r {
                for j in 0..cols {
                    self.data.swap(p * cols + j, r * cols + j);
                }
            }
            let inv = self.get(r, c).recip();
            for j in c..cols {
                let v = self.get(r, j) * &inv;
                self.set(r, j, v);
            }
            for i in 0..rows {
                if i == r || self.get(i, c).is_zero() {
                    continue;
                }
                let f = self.get(i, c).clone();
                for j in c..cols {
                    if self.get(r, j).is_zero() {
                        continue;
                    }
                    let v = self.get(i, j) - &f * self.get(r, j);
                    self.set(i, j, v);
                }
            }
            pivots.push(c);
            r += 1;
        }
        pivots
    }

    /// Kernel basis as columns of a `cols x nullity` matrix. Each basis vector
    /// is scaled to a primitive integer vector.
    pub fn kernel(&self) -> QMatrix {
        let mut work = self.clone();
        let pivots = work.rref_in_place();
        let free: Vec<usize> = (0..self.cols).filter(|c| !pivots.contains(c)).collect();
        let mut out = QMatrix::zeros(self.cols, free.len());
        for (k, &f) in free.iter().enumerate() {
            let mut v = vec![BigRational::zero(); self.cols];
            v[f] = BigRational::one();
            for (r, &pc) in pivots.iter().enumerate() {
                v[pc] = -work.get(r, f).clone();
            }
            let lcm = v.iter().fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
            let ints: Vec<BigInt> = v.iter().map(|x| x.numer() * (&lcm / x.denom())).collect();
            let g = ints.iter().fold(BigInt::zero(), |acc, x| acc.gcd(x));
            for (i, x) in ints.into_iter().enumerate() {
                let x = if g.is_zero() { x } else { x / &g };
                out.set(i, k, BigRational::from_integer(x));
            }
        }
        out
    }

    pub fn max_abs_numer_bits(&self) -> u64 {
        self.data.iter().map(|v| v.numer().abs().bits()).max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_singular_matrix() {
        let m = QMatrix::from_i64(3, 3, &[1, 2, 3, 4, 5, 6, 7, 8, 9]);
        assert_eq!(m.rank(), 2);
    }

    #[test]
    fn rank_skips_zero_columns() {
        let m = QMatrix::from_i64(2, 3, &[0, 1, 2, 0, 2, 5]);
        assert_eq!(m.rank(), 2);
    }

    #[test]
    fn kernel_annihilates() {
        let m = QMatrix::from_i64(2, 4, &[1, 2, 3, 4, 2, 4, 6, 9]);
        let k = m.kernel();
        assert_eq!(k.ncols(), 2);
        assert!(m.matmul(&k).is_zero());
        assert_eq!(k.rank(), 2);
    }

    #[test]
    fn rank_of_rational_entries() {
        let half = BigRational::new(1.into(), 2.into());
        let m = QMatrix::from_fn(2, 2, |i, j| if i == j { half.clone() } else { BigRational::zero() });
        assert_eq!(m.rank(), 2);
    }
}
