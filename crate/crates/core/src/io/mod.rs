//! Text and binary formats for point clouds and submanifold point sets.

mod cache;
mod points;

pub use cache::{decode_submanifold, encode_submanifold, write_submanifold_csv, CACHE_MAGIC, CACHE_VERSION};
pub use points::{parse_csv, parse_ply, write_csv, RawPoints};
