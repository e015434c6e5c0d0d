use crate::error::{Error, Result};

/// How the two ends of the domain are closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryKind {
    Periodic,
    Inflow,
}

/// A 1D partition `x_{1/2} < x_{3/2} < ... < x_{N+1/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh1D {
    edges: Vec<f64>,
    widths: Vec<f64>,
    boundary: BoundaryKind,
}

impl Mesh1D {
    pub fn from_edges(edges: Vec<f64>, boundary: BoundaryKind) -> Result<Self> {
        if edges.len() < 3 {
            return Err(Error::InvalidMesh(format!(
                "need at least 2 cells, got {}",
                edges.len().saturating_sub(1)
            )));
        }
        if edges.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMesh("non-finite edge coordinate".into()));
        }
        let widths: Vec<f64> = edges.windows(2).map(|w| w[1] - w[0]).collect();
        if let Some(i) = widths.iter().position(|&h| h <= 0.0) {
            return Err(Error::InvalidMesh(format!(
                "edges not strictly increasing at cell {i}"
            )));
        }
        Ok(Mesh1D {
            edges,
            widths,
            boundary,
        })
    }

    /// `n` equal cells on `[a, b]`.
    pub fn uniform(a: f64, b: f64, n: usize, boundary: BoundaryKind) -> Result<Self> {
        Self::piecewise(&[(a, b, n)], boundary)
    }

    /// Concatenation of uniform segments `(start, end, cells)`; segments must abut.
    pub fn piecewise(segments: &[(f64, f64, usize)], boundary: BoundaryKind) -> Result<Self> {
        let mut edges: Vec<f64> = Vec::new();
        for (s, &(a, b, n)) in segments.iter().enumerate() {
            if n == 0 || !(b > a) {
                return Err(Error::InvalidMesh(format!("bad segment {s}: [{a}, {b}] x {n}")));
            }
            if let Some(&last) = edges.last() {
                if (last - a).abs() > 1e-12 * (1.0 + a.abs()) {
                    return Err(Error::InvalidMesh(format!("segment {s} does not start at {last}")));
                }
                edges.pop();
            }
            let h = (b - a) / n as f64;
            edges.extend((0..n).map(|i| a + i as f64 * h));
            edges.push(b);
        }
        Self::from_edges(edges, boundary)
    }

    pub fn cells(&self) -> usize {
        self.widths.len()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn width(&self, i: usize) -> f64 {
        self.widths[i]
    }

    pub fn center(&self, i: usize) -> f64 {
        0.5 * (self.edges[i] + self.edges[i + 1])
    }

    pub fn h_max(&self) -> f64 {
        self.widths.iter().cloned().fold(0.0, f64::max)
    }

    pub fn h_min(&self) -> f64 {
        self.widths.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn left(&self) -> f64 {
        self.edges[0]
    }

    pub fn right(&self) -> f64 {
        *self.edges.last().unwrap()
    }

    pub fn boundary(&self) -> BoundaryKind {
        self.boundary
    }

    pub fn is_periodic(&self) -> bool {
        self.boundary == BoundaryKind::Periodic
    }

    /// Physical coordinate of reference point `xi ∈ [-1, 1]` in cell `i`.
    #[inline]
    pub fn map(&self, i: usize, xi: f64) -> f64 {
        self.center(i) + 0.5 * self.widths[i] * xi
    }

    /// Cell containing `x` (the right-most cell for points on an interior edge
    /// is the one to the right; the domain end maps to the last cell).
    pub fn locate(&self, x: f64) -> Option<usize> {
        if x < self.left() || x > self.right() {
            return None;
        }
        let i = self.edges.partition_point(|&e| e <= x);
        Some(i.saturating_sub(1).min(self.cells() - 1))
    }
}
