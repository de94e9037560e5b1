//! Dense matrices over Z2.

use serde::{Serialize, Serializer};

#[derive(Clone, PartialEq, Eq)]
pub struct Mat2 {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for Mat2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "Mat2 {}x{}", self.rows, self.cols)?;
        for r in 0..self.rows {
            let s: String = (0..self.cols).map(|c| if self.get(r, c) { '1' } else { '.' }).collect();
            writeln!(f, "  {s}")?;
        }
        Ok(())
    }
}

impl Serialize for Mat2 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<u8>> = (0..self.rows).map(|r| self.row(r)).collect();
        rows.serialize(s)
    }
}

impl Mat2 {
    pub fn zeros(rows: usize, cols: usize) -> Mat2 {
        Mat2 { rows, cols, data: vec![0; rows * cols] }
    }

    pub fn identity(n: usize) -> Mat2 {
        let mut m = Mat2::zeros(n, n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Mat2 {
        let cols = rows.first().map_or(0, Vec::len);
        let mut m = Mat2::zeros(rows.len(), cols);
        for (r, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), cols, "ragged rows");
            for (c, v) in row.iter().enumerate() {
                m.set(r, c, v & 1 == 1);
            }
        }
        m
    }

    /// Matrix whose columns are the given vectors (all of length `rows`).
    pub fn from_cols(rows: usize, cols: &[Vec<u8>]) -> Mat2 {
        let mut m = Mat2::zeros(rows, cols.len());
        for (c, v) in cols.iter().enumerate() {
            for (r, x) in v.iter().enumerate() {
                m.set(r, c, x & 1 == 1);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r * self.cols + c] == 1
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.data[r * self.cols + c] = v as u8;
    }

    pub fn flip(&mut self, r: usize, c: usize) {
        self.data[r * self.cols + c] ^= 1;
    }

    pub fn row(&self, r: usize) -> Vec<u8> {
        self.data[r * self.cols..(r + 1) * self.cols].to_vec()
    }

    pub fn col(&self, c: usize) -> Vec<u8> {
        (0..self.rows).map(|r| self.data[r * self.cols + c]).collect()
    }

    pub fn mul(&self, o: &Mat2) -> Mat2 {
        assert_eq!(self.cols, o.rows, "shape mismatch");
        let mut m = Mat2::zeros(self.rows, o.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                if self.get(r, k) {
                    for c in 0..o.cols {
                        m.data[r * o.cols + c] ^= o.data[k * o.cols + c];
                    }
                }
            }
        }
        m
    }

    pub fn add(&self, o: &Mat2) -> Mat2 {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols), "shape mismatch");
        Mat2 { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&o.data).map(|(a, b)| a ^ b).collect() }
    }

    pub fn mul_vec(&self, v: &[u8]) -> Vec<u8> {
        assert_eq!(v.len(), self.cols, "shape mismatch");
        (0..self.rows)
            .map(|r| (0..self.cols).fold(0u8, |acc, c| acc ^ (self.data[r * self.cols + c] & v[c])))
            .collect()
    }

    pub fn transpose(&self) -> Mat2 {
        let mut m = Mat2::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                m.set(c, r, self.get(r, c));
            }
        }
        m
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|x| *x == 0)
    }

    /// Nonzero entries as (row, col), row-major.
    pub fn support(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for r in 0..self.rows {
            for c in 0..self.cols {
                if self.get(r, c) {
                    out.push((r, c));
                }
            }
        }
        out
    }

    pub fn rank(&self) -> usize {
        rank_of(self.data.chunks(self.cols.max(1)).take(self.rows).map(<[u8]>::to_vec).collect())
    }

    /// Basis of {v : self v = 0}, one vector per free column of the reduced form.
    pub fn kernel(&self) -> Vec<Vec<u8>> {
        let (red, pivots) = rref(self);
        let mut basis = Vec::new();
        for free in (0..self.cols).filter(|c| !pivots.contains(c)) {
            let mut v = vec![0u8; self.cols];
            v[free] = 1;
            for (r, &p) in pivots.iter().enumerate() {
                v[p] = red.data[r * self.cols + free];
            }
            basis.push(v);
        }
        basis
    }

    /// Some x with self x = b, if one exists.
    pub fn solve(&self, b: &[u8]) -> Option<Vec<u8>> {
        assert_eq!(b.len(), self.rows, "shape mismatch");
        let mut aug = Mat2::zeros(self.rows, self.cols + 1);
        for r in 0..self.rows {
            for c in 0..self.cols {
                aug.set(r, c, self.get(r, c));
            }
            aug.set(r, self.cols, b[r] == 1);
        }
        let (red, pivots) = rref(&aug);
        if pivots.contains(&self.cols) {
            return None;
        }
        let mut x = vec![0u8; self.cols];
        for (r, &p) in pivots.iter().enumerate() {
            x[p] = red.data[r * aug.cols + self.cols];
        }
        Some(x)
    }
}

fn rank_of(mut rows: Vec<Vec<u8>>) -> usize {
    let cols = rows.first().map_or(0, Vec::len);
    let mut rank = 0;
    for c in 0..cols {
        if let Some(p) = (rank..rows.len()).find(|&r| rows[r][c] == 1) {
            rows.swap(rank, p);
            let pivot = rows[rank].clone();
            for (r, row) in rows.iter_mut().enumerate() {
                if r != rank && row[c] == 1 {
                    row.iter_mut().zip(&pivot).for_each(|(a, b)| *a ^= b);
                }
            }
            rank += 1;
        }
    }
    rank
}

/// Reduced row echelon form and pivot columns.
fn rref(m: &Mat2) -> (Mat2, Vec<usize>) {
    let mut a = m.clone();
    let mut pivots = Vec::new();
    let w = a.cols;
    for c in 0..w {
        let r0 = pivots.len();
        let Some(p) = (r0..a.rows).find(|&r| a.get(r, c)) else { continue };
        if p != r0 {
            for k in 0..w {
                a.data.swap(p * w + k, r0 * w + k);
            }
        }
        for r in 0..a.rows {
            if r != r0 && a.get(r, c) {
                for k in 0..w {
                    a.data[r * w + k] ^= a.data[r0 * w + k];
                }
            }
        }
        pivots.push(c);
    }
    (a, pivots)
}
