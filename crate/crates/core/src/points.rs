/// A set of points in `R^d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Points {
    dim: usize,
    coords: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1, "points need at least one coordinate");
        Self { dim, coords: Vec::new() }
    }

    /// Builds a point set from row-major coordinates.
    ///
    /// Panics if `coords.len()` is not a multiple of `dim`.
    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Self {
        assert!(dim >= 1, "points need at least one coordinate");
        assert_eq!(coords.len() % dim, 0, "coordinate count not a multiple of dim");
        Self { dim, coords }
    }

    pub fn from_rows<R: AsRef<[f64]>>(dim: usize, rows: impl IntoIterator<Item = R>) -> Self {
        let mut pts = Self::new(dim);
        for r in rows {
            pts.push(r.as_ref());
        }
        pts
    }

    pub fn push(&mut self, x: &[f64]) {
        assert_eq!(x.len(), self.dim, "point dimension mismatch");
        self.coords.extend_from_slice(x);
    }

    pub fn extend(&mut self, other: &Points) {
        assert_eq!(other.dim, self.dim, "point dimension mismatch");
        self.coords.extend_from_slice(&other.coords);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.coords[j * self.dim..(j + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.coords
    }
}
