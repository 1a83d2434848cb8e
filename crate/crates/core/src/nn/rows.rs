use super::Scalar;

/// Random-access input rows for training and prediction.
pub trait InputRows<T: Scalar> {
    fn n_rows(&self) -> usize;
    fn row_len(&self, i: usize) -> usize;
    /// Append row `i` to `dst`.
    fn append_row(&self, i: usize, dst: &mut Vec<T>);
    fn all_finite(&self) -> bool;
}

impl<T: Scalar, V: AsRef<[T]>> InputRows<T> for [V] {
    fn n_rows(&self) -> usize {
        self.len()
    }

    fn row_len(&self, i: usize) -> usize {
        self[i].as_ref().len()
    }

    fn append_row(&self, i: usize, dst: &mut Vec<T>) {
        dst.extend_from_slice(self[i].as_ref());
    }

    fn all_finite(&self) -> bool {
        self.iter().all(|r| r.as_ref().iter().all(|v| v.is_finite()))
    }
}

impl<T: Scalar, V: AsRef<[T]>> InputRows<T> for Vec<V> {
    fn n_rows(&self) -> usize {
        self.len()
    }

    fn row_len(&self, i: usize) -> usize {
        self[i].as_ref().len()
    }

    fn append_row(&self, i: usize, dst: &mut Vec<T>) {
        dst.extend_from_slice(self[i].as_ref());
    }

    fn all_finite(&self) -> bool {
        self.as_slice().all_finite()
    }
}

/// Fixed-width rows of intensities in `[0, 1]` quantized to 8 bits, a
/// quarter of the memory of `f32` rows. Values decode as `q / 255`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ByteRows {
    width: usize,
    data: Vec<u8>,
}

impl ByteRows {
    pub fn new(width: usize) -> Self {
        ByteRows { width, data: Vec::new() }
    }

    pub fn with_capacity(width: usize, rows: usize) -> Self {
        ByteRows { width, data: Vec::with_capacity(width * rows) }
    }

    /// Values are clamped to `[0, 1]` and rounded to the nearest level.
    ///
    /// # Panics
    /// If `row.len()` differs from the row width.
    pub fn push(&mut self, row: &[f32]) {
        assert_eq!(row.len(), self.width, "row width");
        self.data.extend(row.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.width).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.data[i * self.width..(i + 1) * self.width]
    }
}

impl<T: Scalar> InputRows<T> for ByteRows {
    fn n_rows(&self) -> usize {
        self.len()
    }

    fn row_len(&self, _: usize) -> usize {
        self.width
    }

    fn append_row(&self, i: usize, dst: &mut Vec<T>) {
        dst.extend(self.row(i).iter().map(|&q| T::from_f64(f64::from(q) / 255.0)));
    }

    fn all_finite(&self) -> bool {
        true
    }
}
