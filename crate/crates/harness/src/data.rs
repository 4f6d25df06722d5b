//! Loading observations from files or generators.

use std::path::Path;

use nalgebra::DVector;
use subflow::io::{parse_csv, parse_ply};
use subflow::{Error, PointCloud, Result};

use crate::config::{DataSource, FileFormat};
use crate::generators::{gen_bumpy_sphere, gen_s_surface, gen_sphere_cloud, gen_sphere_curve_dataset_with};

/// Read a point cloud from a CSV or ASCII PLY file.
pub fn load_cloud(path: &Path, format: FileFormat, sphere: bool) -> Result<PointCloud> {
    let text = std::fs::read_to_string(path)?;
    let raw = match format {
        FileFormat::Csv => parse_csv(&text)?,
        FileFormat::Ply => parse_ply(&text)?,
    };
    raw.into_cloud(sphere)
}

/// Ground truth attached to synthetic data.
#[derive(Clone, Debug)]
pub enum Truth {
    None,
    /// Points on the unit sphere centered at the origin.
    UnitSphere,
    /// Profile parameter of every S-surface observation.
    SProfile(Vec<f64>),
    /// Noise-free curve points of a sphere-curve dataset.
    SphereCurve(Vec<DVector<f64>>),
    BumpySphere,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub cloud: PointCloud,
    pub truth: Truth,
}

/// Materialize a data source; generators are seeded with `seed`.
pub fn load_data(source: &DataSource, seed: u64) -> Result<Dataset> {
    Ok(match source {
        DataSource::SphereCloud { n, k_true, d, sigma } => Dataset {
            cloud: gen_sphere_cloud(*n, *k_true, *d, *sigma, seed)?,
            truth: Truth::UnitSphere,
        },
        DataSource::SSurface { n, sigma, d } => {
            let s = gen_s_surface(*n, *sigma, *d, seed)?;
            Dataset {
                cloud: s.cloud,
                truth: Truth::SProfile(s.profile),
            }
        }
        DataSource::SphereCurves { n, variance } => {
            let s = gen_sphere_curve_dataset_with(seed, *n, *variance)?;
            Dataset {
                cloud: s.cloud,
                truth: Truth::SphereCurve(s.curve),
            }
        }
        DataSource::BumpySphere { n, sigma } => Dataset {
            cloud: gen_bumpy_sphere(*n, *sigma, seed)?,
            truth: Truth::BumpySphere,
        },
        DataSource::File { path, format, sphere } => {
            let format = format.unwrap_or_else(|| FileFormat::from_path(path));
            Dataset {
                cloud: load_cloud(path, format, *sphere)?,
                truth: Truth::None,
            }
        }
    })
}

/// Seed of replicate `r`, so replicates are independent but reproducible.
pub fn replicate_seed(seed: u64, r: usize) -> u64 {
    seed.wrapping_add(r as u64)
}

pub(crate) fn empty_cloud() -> Error {
    Error::InvalidArgument("empty point cloud".into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_ply_files_load() {
        let dir = std::env::temp_dir().join(format!("subflow-data-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let csv = dir.join("a.csv");
        std::fs::write(&csv, "x,y,z\n1,0,0\n0,1,0\n0,0,1\n").unwrap();
        let c = load_cloud(&csv, FileFormat::from_path(&csv), true).unwrap();
        assert_eq!((c.len(), c.dim()), (3, 3));
        let ply = dir.join("b.ply");
        std::fs::write(
            &ply,
            "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 2 3\n4 5 6\n",
        )
        .unwrap();
        let c = load_cloud(&ply, FileFormat::from_path(&ply), false).unwrap();
        assert_eq!(c.point(1), &[4.0, 5.0, 6.0]);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn missing_file_is_io_error() {
        let e = load_cloud(Path::new("/nonexistent/cloud.csv"), FileFormat::Csv, false).unwrap_err();
        assert!(matches!(e, Error::Io(_)));
    }
}
