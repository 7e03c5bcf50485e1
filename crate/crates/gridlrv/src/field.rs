//! Grid geometry and field storage.
//!
//! A [`Field`] holds p-variate real observations on a q-dimensional
//! rectangular grid in one flat buffer. The canonical linearization is
//! lexicographic by coordinate with the channel index innermost, so a
//! file round-trip is bit-exact and independent of platform.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};

use crate::error::{Error, Result};

/// Integer lag vector j indexing an autocovariance.
pub type Lag = Vec<i64>;

/// Dense p-variate random-field sample on a q-dimensional grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    shape: Vec<usize>,
    p: usize,
    data: Vec<f64>,
}

impl Field {
    /// Builds a field, validating dimensions and finiteness.
    pub fn from_parts(shape: Vec<usize>, p: usize, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::invalid(format!(
                "grid shape must have positive extents, got {shape:?}"
            )));
        }
        if p == 0 {
            return Err(Error::invalid("value dimension p must be positive"));
        }
        let sites: usize = shape.iter().product();
        if data.len() != sites * p {
            return Err(Error::ShapeMismatch(format!(
                "data length {} != p * prod(shape) = {}",
                data.len(),
                sites * p
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("field data contains NaN or Inf"));
        }
        Ok(Field { shape, p, data })
    }

    pub fn zeros(shape: Vec<usize>, p: usize) -> Result<Self> {
        let sites: usize = shape.iter().product();
        Self::from_parts(shape, p, vec![0.0; sites * p])
    }

    pub fn q(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn num_sites(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Site strides in the flat layout (channel stride is 1).
    pub fn site_strides(&self) -> Vec<usize> {
        site_strides(&self.shape)
    }

    /// Value at a multi-index site and channel.
    pub fn value(&self, site: &[usize], channel: usize) -> f64 {
        debug_assert_eq!(site.len(), self.q());
        let strides = self.site_strides();
        let flat: usize = site.iter().zip(&strides).map(|(i, s)| i * s).sum();
        self.data[flat * self.p + channel]
    }

    /// Extracts the block of shape `b` whose lowest corner sits at `origin`.
    pub fn block(&self, origin: &[usize], b: &[usize]) -> Result<Field> {
        if origin.len() != self.q() || b.len() != self.q() {
            return Err(Error::ShapeMismatch(format!(
                "block origin/shape rank must be {}",
                self.q()
            )));
        }
        for k in 0..self.q() {
            if origin[k] + b[k] > self.shape[k] {
                return Err(Error::invalid(format!(
                    "block at {origin:?} with shape {b:?} exceeds grid {:?}",
                    self.shape
                )));
            }
        }
        let p = self.p;
        let strides = self.site_strides();
        let sites: usize = b.iter().product();
        let mut data = Vec::with_capacity(sites * p);
        let mut idx = vec![0usize; self.q()];
        loop {
            let flat: usize = idx
                .iter()
                .zip(origin)
                .zip(&strides)
                .map(|((i, o), s)| (i + o) * s)
                .sum();
            data.extend_from_slice(&self.data[flat * p..flat * p + p]);
            if !advance(&mut idx, b) {
                break;
            }
        }
        Field::from_parts(b.to_vec(), p, data)
    }

    /// Returns a copy with every value shifted by `-reference` per site
    /// (broadcast scalar) or per entry (full-size field).
    pub fn centered_at(&self, reference: &Reference) -> Result<Field> {
        let mut data = self.data.clone();
        match reference {
            Reference::Scalar(c) => {
                for v in &mut data {
                    *v -= c;
                }
            }
            Reference::Field(r) => {
                if r.shape != self.shape || r.p != self.p {
                    return Err(Error::ShapeMismatch(
                        "reference field dimensions differ from the observed field".into(),
                    ));
                }
                for (v, rv) in data.iter_mut().zip(&r.data) {
                    *v -= rv;
                }
            }
        }
        Field::from_parts(self.shape.clone(), self.p, data)
    }
}

/// Reference input for centering and partial sums: a constant or a
/// same-shaped field.
#[derive(Clone, Debug)]
pub enum Reference {
    Scalar(f64),
    Field(Field),
}

pub(crate) fn site_strides(shape: &[usize]) -> Vec<usize> {
    let q = shape.len();
    let mut strides = vec![1usize; q];
    for k in (0..q.saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * shape[k + 1];
    }
    strides
}

/// Odometer step through a multi-index box; returns false after the
/// last index.
pub(crate) fn advance(idx: &mut [usize], extents: &[usize]) -> bool {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < extents[k] {
            return true;
        }
        idx[k] = 0;
    }
    false
}

/// Number of site pairs (i, i+j) with both ends inside the grid:
/// the product of max(n_k - |j_k|, 0).
pub fn overlap_count(shape: &[usize], lag: &[i64]) -> u64 {
    debug_assert_eq!(shape.len(), lag.len());
    let mut count: u64 = 1;
    for (&n, &j) in shape.iter().zip(lag) {
        let w = n as i64 - j.abs();
        if w <= 0 {
            return 0;
        }
        count *= w as u64;
    }
    count
}

/// All lags j with |j_k| <= m_k componentwise, in lexicographic order.
pub fn lag_box(m: &[usize]) -> Vec<Lag> {
    let q = m.len();
    let extents: Vec<usize> = m.iter().map(|&mk| 2 * mk + 1).collect();
    let total: usize = extents.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; q];
    loop {
        out.push(
            idx.iter()
                .zip(m)
                .map(|(&i, &mk)| i as i64 - mk as i64)
                .collect(),
        );
        if !advance(&mut idx, &extents) {
            break;
        }
    }
    out
}

/// All lags on the max-norm shell max_k |j_k| = k; for k=0 the zero lag.
pub fn ring_lags(k: usize, q: usize) -> Vec<Lag> {
    lag_box(&vec![k; q])
        .into_iter()
        .filter(|j| j.iter().map(|v| v.abs()).max().unwrap_or(0) == k as i64)
        .collect()
}

/// Dense p x p real matrix: autocovariances and variance estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct CovMatrix {
    p: usize,
    a: Vec<f64>,
}

impl CovMatrix {
    pub fn zeros(p: usize) -> Self {
        CovMatrix {
            p,
            a: vec![0.0; p * p],
        }
    }

    pub fn from_vec(p: usize, a: Vec<f64>) -> Result<Self> {
        if a.len() != p * p {
            return Err(Error::ShapeMismatch(format!(
                "matrix buffer length {} != p*p = {}",
                a.len(),
                p * p
            )));
        }
        Ok(CovMatrix { p, a })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.a[r * self.p + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.a[r * self.p + c] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.a
    }

    /// For univariate fields the 1x1 matrix as a plain scalar.
    pub fn scalar(&self) -> f64 {
        debug_assert_eq!(self.p, 1);
        self.a[0]
    }

    pub fn transpose(&self) -> CovMatrix {
        let mut t = CovMatrix::zeros(self.p);
        for r in 0..self.p {
            for c in 0..self.p {
                t.a[c * self.p + r] = self.a[r * self.p + c];
            }
        }
        t
    }

    /// self += coef * other, entrywise.
    pub fn scaled_add(&mut self, coef: f64, other: &CovMatrix) {
        debug_assert_eq!(self.p, other.p);
        for (s, o) in self.a.iter_mut().zip(&other.a) {
            *s += coef * o;
        }
    }

    /// Largest absolute entry.
    pub fn max_norm(&self) -> f64 {
        self.a.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Square root of the sum of squared entries.
    pub fn frobenius_norm(&self) -> f64 {
        self.a.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

const MAGIC: &[u8; 8] = b"GRDFLD01";

impl Field {
    /// Writes the CSV form: first line carries q, the shape extents,
    /// and p as integers; then one row of p values per grid point in
    /// canonical order, 17 significant digits.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        let mut head: Vec<String> = vec![self.q().to_string()];
        head.extend(self.shape.iter().map(|n| n.to_string()));
        head.push(self.p.to_string());
        writeln!(w, "{}", head.join(","))?;
        for row in self.data.chunks(self.p) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        let head = lines
            .next()
            .ok_or_else(|| Error::Parse {
                line: 1,
                msg: "empty file".into(),
            })?
            .map_err(Error::Io)?;
        let ints: Vec<usize> = head
            .split(',')
            .map(|t| {
                t.trim().parse::<usize>().map_err(|_| Error::Parse {
                    line: 1,
                    msg: format!("expected integer, got '{t}'"),
                })
            })
            .collect::<Result<_>>()?;
        if ints.len() < 3 {
            return Err(Error::Parse {
                line: 1,
                msg: "header must list q, shape extents, p".into(),
            });
        }
        let q = ints[0];
        if ints.len() != q + 2 {
            return Err(Error::Parse {
                line: 1,
                msg: format!("header lists {} extents, expected q={q}", ints.len() - 2),
            });
        }
        let shape = ints[1..1 + q].to_vec();
        let p = ints[q + 1];
        let sites: usize = shape.iter().product();
        let mut data = Vec::with_capacity(sites * p);
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(Error::Io)?;
            if line.trim().is_empty() {
                continue;
            }
            for t in line.split(',') {
                let v = t.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line: lineno + 2,
                    msg: format!("expected real, got '{t}'"),
                })?;
                data.push(v);
            }
        }
        Field::from_parts(shape, p, data)
    }

    /// Raw little-endian container: 8-byte magic, q, shape, p as u64,
    /// then the data as 64-bit floats.
    pub fn write_binary<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        w.write_all(MAGIC)?;
        w.write_all(&(self.q() as u64).to_le_bytes())?;
        for &n in &self.shape {
            w.write_all(&(n as u64).to_le_bytes())?;
        }
        w.write_all(&(self.p as u64).to_le_bytes())?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Parse {
                line: 0,
                msg: "bad magic: not a field container".into(),
            });
        }
        let mut u64buf = [0u8; 8];
        let mut read_u64 = |r: &mut R| -> Result<u64> {
            r.read_exact(&mut u64buf)?;
            Ok(u64::from_le_bytes(u64buf))
        };
        let q = read_u64(&mut r)? as usize;
        if q == 0 || q > 64 {
            return Err(Error::Parse {
                line: 0,
                msg: format!("implausible rank q={q}"),
            });
        }
        let mut shape = Vec::with_capacity(q);
        for _ in 0..q {
            shape.push(read_u64(&mut r)? as usize);
        }
        let p = read_u64(&mut r)? as usize;
        let sites: usize = shape.iter().product();
        let mut data = vec![0.0f64; sites * p];
        let mut f64buf = [0u8; 8];
        for v in &mut data {
            r.read_exact(&mut f64buf)?;
            *v = f64::from_le_bytes(f64buf);
        }
        Field::from_parts(shape, p, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlap_counts_match_enumeration() {
        assert_eq!(overlap_count(&[30, 40], &[0, 0]), 1200);
        assert_eq!(overlap_count(&[30, 40], &[2, -3]), 28 * 37);
        assert_eq!(overlap_count(&[5, 5], &[5, 0]), 0);
    }

    #[test]
    fn overlap_symmetric_in_lag_sign() {
        let shape = [7, 9, 4];
        for lag in lag_box(&[3, 3, 3]) {
            let neg: Vec<i64> = lag.iter().map(|v| -v).collect();
            assert_eq!(overlap_count(&shape, &lag), overlap_count(&shape, &neg));
        }
    }

    #[test]
    fn lag_box_counts_and_order() {
        assert_eq!(lag_box(&[0, 0]), vec![vec![0, 0]]);
        assert_eq!(lag_box(&[1, 1]).len(), 9);
        let b = lag_box(&[2, 3]);
        assert_eq!(b.len(), 35);
        let mut sorted = b.clone();
        sorted.sort();
        assert_eq!(b, sorted);
        assert_eq!(b.first().unwrap(), &vec![-2, -3]);
        assert_eq!(b.last().unwrap(), &vec![2, 3]);
    }

    #[test]
    fn ring_lag_counts_match_enumeration() {
        assert_eq!(ring_lags(0, 2), vec![vec![0, 0]]);
        assert_eq!(ring_lags(1, 2).len(), 8);
        assert_eq!(ring_lags(2, 3).len(), 98);
    }

    #[test]
    fn rings_partition_the_box() {
        let mut all: Vec<Lag> = (0..=3).flat_map(|k| ring_lags(k, 2)).collect();
        all.sort();
        let mut expect = lag_box(&[3, 3]);
        expect.sort();
        assert_eq!(all, expect);
    }

    #[test]
    fn matrix_norms() {
        let z = CovMatrix::zeros(2);
        assert_eq!(z.max_norm(), 0.0);
        assert_eq!(z.frobenius_norm(), 0.0);
        let m = CovMatrix::from_vec(2, vec![1.0, -3.0, 2.0, 0.5]).unwrap();
        assert_eq!(m.max_norm(), 3.0);
        let f = CovMatrix::from_vec(2, vec![3.0, 4.0, 0.0, 0.0]).unwrap();
        assert_eq!(f.frobenius_norm(), 5.0);
        let mut id = CovMatrix::zeros(3);
        for i in 0..3 {
            id.set(i, i, 1.0);
        }
        assert_eq!(id.max_norm(), 1.0);
        assert!((id.frobenius_norm() - 3.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_finite_data() {
        assert!(Field::from_parts(vec![2], 1, vec![0.0, f64::NAN]).is_err());
    }

    #[test]
    fn block_extraction_matches_values() {
        let data: Vec<f64> = (0..12).map(|v| v as f64).collect();
        let f = Field::from_parts(vec![3, 4], 1, data).unwrap();
        let b = f.block(&[1, 1], &[2, 2]).unwrap();
        assert_eq!(b.data(), &[5.0, 6.0, 9.0, 10.0]);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let f = Field::from_parts(vec![2, 3], 2, (0..12).map(|v| (v as f64).exp()).collect())
            .unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let g = Field::read_csv(&buf[..]).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let f = Field::from_parts(vec![4, 2, 3], 1, (0..24).map(|v| 1.0 / (v + 1) as f64).collect())
            .unwrap();
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        let g = Field::read_binary(&buf[..]).unwrap();
        assert_eq!(f, g);
    }
}
