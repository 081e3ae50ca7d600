use super::DiffError;

/// Dense row-major array of `f64`.
///
/// Rank 0 is a scalar, rank 1 a vector, rank 2 a matrix. Nothing broadcasts
/// implicitly; the row-wise ops (`add_row`, `mul_row`, `sum_rows`) spell out
/// the one broadcast pattern the models need.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Checked constructor: rejects length mismatches and non-finite entries.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, DiffError> {
        let t = Self::from_parts(shape, data)?;
        if let Some(index) = t.data.iter().position(|x| !x.is_finite()) {
            return Err(DiffError::NonFinite { index });
        }
        Ok(t)
    }

    /// Like [`Tensor::new`] but lets NaN and infinities through. Op results are
    /// built this way so a blow-up surfaces in the loss instead of a panic.
    pub fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, DiffError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(DiffError::Length {
                shape,
                len: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn scalar(x: f64) -> Self {
        Self {
            shape: vec![],
            data: vec![x],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, DiffError> {
        Self::from_parts(vec![rows, cols], data)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1 && self.shape.iter().all(|&d| d == 1)
    }

    /// The single value of a scalar-shaped tensor.
    pub fn item(&self) -> Result<f64, DiffError> {
        if self.is_scalar() {
            Ok(self.data[0])
        } else {
            Err(DiffError::NotScalar {
                shape: self.shape.clone(),
            })
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Rows and columns, viewing a vector as a single row.
    pub(crate) fn as_matrix(&self, op: &'static str) -> Result<(usize, usize), DiffError> {
        match self.shape.as_slice() {
            [n] => Ok((1, *n)),
            [r, c] => Ok((*r, *c)),
            _ => Err(DiffError::Rank {
                op,
                expected: "1 or 2",
                shape: self.shape.clone(),
            }),
        }
    }

    fn rank2(&self, op: &'static str) -> Result<(usize, usize), DiffError> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            _ => Err(DiffError::Rank {
                op,
                expected: "2",
                shape: self.shape.clone(),
            }),
        }
    }

    fn same_shape(&self, other: &Tensor, op: &'static str) -> Result<(), DiffError> {
        if self.shape != other.shape {
            return Err(DiffError::ShapeMismatch {
                op,
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        Ok(())
    }

    pub(crate) fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub(crate) fn zip(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor, DiffError> {
        self.same_shape(other, op)?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub(crate) fn accumulate(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor, DiffError> {
        self.zip(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor, DiffError> {
        self.zip(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor, DiffError> {
        self.zip(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Tensor {
        self.map(|x| c * x)
    }

    /// `s * x` where `s` is a scalar tensor.
    pub fn scalar_mul(s: &Tensor, x: &Tensor) -> Result<Tensor, DiffError> {
        Ok(x.scale(s.item()?))
    }

    /// `a · b` for `a: [m×k]`, `b: [k×n]`.
    pub fn matmul(&self, b: &Tensor) -> Result<Tensor, DiffError> {
        let (m, k) = self.rank2("matmul")?;
        let (k2, n) = b.rank2("matmul")?;
        if k != k2 {
            return Err(DiffError::ShapeMismatch {
                op: "matmul",
                lhs: self.shape.clone(),
                rhs: b.shape.clone(),
            });
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &self.data[i * k..(i + 1) * k];
            let dst = &mut out[i * n..(i + 1) * n];
            for (l, &a) in row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let brow = &b.data[l * n..(l + 1) * n];
                for (o, &bv) in dst.iter_mut().zip(brow) {
                    *o += a * bv;
                }
            }
        }
        Ok(Tensor {
            shape: vec![m, n],
            data: out,
        })
    }

    /// `a · bᵀ` for `a: [m×k]`, `b: [n×k]`.
    pub fn matmul_t(&self, b: &Tensor) -> Result<Tensor, DiffError> {
        let (m, k) = self.rank2("matmul_t")?;
        let (n, k2) = b.rank2("matmul_t")?;
        if k != k2 {
            return Err(DiffError::ShapeMismatch {
                op: "matmul_t",
                lhs: self.shape.clone(),
                rhs: b.shape.clone(),
            });
        }
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            let row = &self.data[i * k..(i + 1) * k];
            for j in 0..n {
                let brow = &b.data[j * k..(j + 1) * k];
                out.push(row.iter().zip(brow).map(|(a, b)| a * b).sum());
            }
        }
        Ok(Tensor {
            shape: vec![m, n],
            data: out,
        })
    }

    /// `aᵀ · b` for `a: [m×k]`, `b: [m×n]`.
    pub fn t_matmul(&self, b: &Tensor) -> Result<Tensor, DiffError> {
        let (m, k) = self.rank2("t_matmul")?;
        let (m2, n) = b.rank2("t_matmul")?;
        if m != m2 {
            return Err(DiffError::ShapeMismatch {
                op: "t_matmul",
                lhs: self.shape.clone(),
                rhs: b.shape.clone(),
            });
        }
        let mut out = vec![0.0; k * n];
        for i in 0..m {
            let arow = &self.data[i * k..(i + 1) * k];
            let brow = &b.data[i * n..(i + 1) * n];
            for (l, &a) in arow.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &bv) in out[l * n..(l + 1) * n].iter_mut().zip(brow) {
                    *o += a * bv;
                }
            }
        }
        Ok(Tensor {
            shape: vec![k, n],
            data: out,
        })
    }

    fn check_row(&self, r: &Tensor, op: &'static str) -> Result<(usize, usize), DiffError> {
        let (m, n) = self.rank2(op)?;
        if r.shape != [n] {
            return Err(DiffError::ShapeMismatch {
                op,
                lhs: self.shape.clone(),
                rhs: r.shape.clone(),
            });
        }
        Ok((m, n))
    }

    /// Adds the vector `r: [n]` to every row of `self: [m×n]`.
    pub fn add_row(&self, r: &Tensor) -> Result<Tensor, DiffError> {
        let (_, n) = self.check_row(r, "add_row")?;
        let mut out = self.clone();
        for row in out.data.chunks_mut(n) {
            for (o, b) in row.iter_mut().zip(&r.data) {
                *o += b;
            }
        }
        Ok(out)
    }

    /// Scales column `j` of `self: [m×n]` by `r[j]`.
    pub fn mul_row(&self, r: &Tensor) -> Result<Tensor, DiffError> {
        let (_, n) = self.check_row(r, "mul_row")?;
        let mut out = self.clone();
        for row in out.data.chunks_mut(n) {
            for (o, b) in row.iter_mut().zip(&r.data) {
                *o *= b;
            }
        }
        Ok(out)
    }

    /// Column sums of `[m×n]`, giving `[n]`.
    pub fn sum_rows(&self) -> Result<Tensor, DiffError> {
        let (_, n) = self.rank2("sum_rows")?;
        let mut out = vec![0.0; n];
        for row in self.data.chunks(n) {
            for (o, x) in out.iter_mut().zip(row) {
                *o += x;
            }
        }
        Ok(Tensor::vector(out))
    }

    pub fn sum(&self) -> Tensor {
        Tensor::scalar(self.data.iter().sum())
    }

    pub fn mean(&self) -> Tensor {
        Tensor::scalar(self.data.iter().sum::<f64>() / self.data.len() as f64)
    }

    pub fn atan2(y: &Tensor, x: &Tensor) -> Result<Tensor, DiffError> {
        y.zip(x, "atan2", f64::atan2)
    }

    /// Concatenates along the last axis. All parts must share rank and row count.
    pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor, DiffError> {
        let first = parts.first().ok_or(DiffError::Empty { op: "concat" })?;
        let rank = first.shape.len();
        let (m, _) = first.as_matrix("concat")?;
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let (pm, pn) = p.as_matrix("concat")?;
            if p.shape.len() != rank || pm != m {
                return Err(DiffError::ShapeMismatch {
                    op: "concat",
                    lhs: first.shape.clone(),
                    rhs: p.shape.clone(),
                });
            }
            widths.push(pn);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(m * total);
        for i in 0..m {
            for (p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&p.data[i * w..(i + 1) * w]);
            }
        }
        let shape = if rank == 1 { vec![total] } else { vec![m, total] };
        Ok(Tensor { shape, data })
    }

    /// Columns `start..end` along the last axis.
    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Tensor, DiffError> {
        let (m, n) = self.as_matrix("slice")?;
        if start > end || end > n {
            return Err(DiffError::SliceRange { start, end, len: n });
        }
        let w = end - start;
        let mut data = Vec::with_capacity(m * w);
        for i in 0..m {
            data.extend_from_slice(&self.data[i * n + start..i * n + end]);
        }
        let shape = if self.shape.len() == 1 { vec![w] } else { vec![m, w] };
        Ok(Tensor { shape, data })
    }

    /// Row `i` of a matrix as a vector.
    pub fn row(&self, i: usize) -> Result<Tensor, DiffError> {
        let (m, n) = self.rank2("row")?;
        if i >= m {
            return Err(DiffError::SliceRange {
                start: i,
                end: i + 1,
                len: m,
            });
        }
        Ok(Tensor::vector(self.data[i * n..(i + 1) * n].to_vec()))
    }
}
