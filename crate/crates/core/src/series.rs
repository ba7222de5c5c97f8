use crate::error::{ArhmmError, Result};

/// A multivariate time series stored row-major: `n` observations of dimension `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    d: usize,
    data: Vec<f64>,
}

impl Series {
    pub fn new(d: usize, data: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(ArhmmError::InvalidInput(
                "series dimension must be >= 1".into(),
            ));
        }
        if !data.len().is_multiple_of(d) {
            return Err(ArhmmError::InvalidInput(format!(
                "data length {} is not a multiple of d={}",
                data.len(),
                d
            )));
        }
        Ok(Self { d, data })
    }

    pub fn univariate(values: Vec<f64>) -> Self {
        Self { d: 1, data: values }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map(|r| r.len()).unwrap_or(1);
        let mut data = Vec::with_capacity(rows.len() * d);
        for (t, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(ArhmmError::InvalidInput(format!(
                    "row {t} has length {} but d={d}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Series::new(d, data)
    }

    pub fn with_capacity(d: usize, n: usize) -> Self {
        Self {
            d,
            data: Vec::with_capacity(n * d),
        }
    }

    pub fn push(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.d, "row dimension mismatch");
        self.data.extend_from_slice(row);
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.d..(t + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Column `q` as an owned vector.
    pub fn column(&self, q: usize) -> Vec<f64> {
        self.rows().map(|r| r[q]).collect()
    }

    pub fn slice(&self, start: usize, end: usize) -> Series {
        Series {
            d: self.d,
            data: self.data[start * self.d..end * self.d].to_vec(),
        }
    }

    pub fn scaled(&self, c: f64) -> Series {
        Series {
            d: self.d,
            data: self.data.iter().map(|x| x * c).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}
