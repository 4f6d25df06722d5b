use nalgebra::DVector;

use crate::ambient::Geometry;
use crate::error::{Error, Result};

/// An immutable set of observations in a common ambient geometry.
///
/// Points are stored row-major in one contiguous buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    geometry: Geometry,
    data: Vec<f64>,
}

impl PointCloud {
    /// Build a cloud from a row-major buffer. Hypersphere points must have unit
    /// norm within `1e-9`.
    pub fn from_flat(geometry: Geometry, data: Vec<f64>) -> Result<Self> {
        let dim = geometry.ambient_dim();
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::invalid(format!(
                "buffer of length {} is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("non-finite coordinate"));
        }
        if let Geometry::Hypersphere(_) = geometry {
            for (i, row) in data.chunks_exact(dim).enumerate() {
                let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
                if (n - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid(format!(
                        "point {i} has norm {n}, expected a unit vector"
                    )));
                }
            }
        }
        Ok(Self { geometry, data })
    }

    pub fn from_points(geometry: Geometry, points: &[DVector<f64>]) -> Result<Self> {
        let dim = geometry.ambient_dim();
        let mut data = Vec::with_capacity(points.len() * dim);
        for p in points {
            geometry.check_dim(p.len())?;
            data.extend_from_slice(p.as_slice());
        }
        Self::from_flat(geometry, data)
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn dim(&self) -> usize {
        self.geometry.ambient_dim()
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn point_vec(&self, i: usize) -> DVector<f64> {
        DVector::from_row_slice(self.point(i))
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim())
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Center and half-diagonal of the axis-aligned bounding box.
    pub fn bounding_ball(&self) -> (DVector<f64>, f64) {
        let d = self.dim();
        if self.is_empty() {
            return (DVector::zeros(d), 0.0);
        }
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for p in self.points() {
            for k in 0..d {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let center = DVector::from_iterator(d, lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)));
        let radius = lo
            .iter()
            .zip(&hi)
            .map(|(a, b)| 0.25 * (b - a) * (b - a))
            .sum::<f64>()
            .sqrt();
        (center, radius)
    }

    /// Plain coordinate-wise mean.
    pub fn centroid(&self) -> DVector<f64> {
        let d = self.dim();
        let mut c = DVector::zeros(d);
        for p in self.points() {
            for k in 0..d {
                c[k] += p[k];
            }
        }
        if !self.is_empty() {
            c /= self.len() as f64;
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_ragged_buffer() {
        assert!(PointCloud::from_flat(Geometry::Euclidean(3), vec![1.0; 4]).is_err());
    }

    #[test]
    fn rejects_off_sphere_point() {
        let err = PointCloud::from_flat(Geometry::Hypersphere(2), vec![0.0, 0.0, 1.1]);
        assert!(err.is_err());
        assert!(PointCloud::from_flat(Geometry::Hypersphere(2), vec![0.0, 0.0, 1.0]).is_ok());
    }

    #[test]
    fn bounding_ball_of_unit_square() {
        let c = PointCloud::from_flat(Geometry::Euclidean(2), vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let (center, r) = c.bounding_ball();
        assert_eq!(center.as_slice(), &[0.5, 0.5]);
        assert!((r - 0.5f64.sqrt()).abs() < 1e-15);
    }
}
