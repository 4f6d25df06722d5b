use std::io::Write;

use crate::ambient::Geometry;
use crate::cloud::PointCloud;
use crate::error::{Error, Result};

/// Parsed coordinates before a geometry is attached.
#[derive(Clone, Debug, PartialEq)]
pub struct RawPoints {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl RawPoints {
    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Euclidean cloud in `R^dim`, or sphere cloud in `S^{dim-1}`.
    pub fn into_cloud(self, sphere: bool) -> Result<PointCloud> {
        let geom = if sphere {
            if self.dim < 2 {
                return Err(Error::invalid("sphere clouds need at least two coordinates"));
            }
            Geometry::Hypersphere(self.dim - 1)
        } else {
            Geometry::Euclidean(self.dim)
        };
        PointCloud::from_flat(geom, self.data)
    }
}

fn parse_real(field: &str, location: impl Fn() -> String) -> Result<f64> {
    let x: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::parse(location(), format!("not a number: {:?}", field.trim())))?;
    if !x.is_finite() {
        return Err(Error::parse(location(), "non-finite value"));
    }
    Ok(x)
}

/// One point per row, comma-separated reals. A first row that does not parse
/// as numbers is treated as a header. Rows are 1-based in error locations.
pub fn parse_csv(text: &str) -> Result<RawPoints> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut dim = 0;
    let mut data = Vec::new();
    let mut first = true;
    for (n, rec) in reader.records().enumerate() {
        let row = n + 1;
        let rec = rec.map_err(|e| Error::parse(format!("row {row}"), e.to_string()))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if first {
            first = false;
            if rec.iter().any(|f| f.parse::<f64>().is_err()) {
                continue;
            }
        }
        if dim == 0 {
            dim = rec.len();
        } else if rec.len() != dim {
            return Err(Error::parse(
                format!("row {row}"),
                format!("expected {dim} fields, found {}", rec.len()),
            ));
        }
        for (c, f) in rec.iter().enumerate() {
            data.push(parse_real(f, || format!("row {row}, column {}", c + 1))?);
        }
    }
    if dim == 0 {
        return Err(Error::parse("input", "no data rows"));
    }
    Ok(RawPoints { dim, data })
}

/// ASCII PLY; returns the `x`, `y`, `z` vertex properties and ignores the rest.
pub fn parse_ply(text: &str) -> Result<RawPoints> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(Error::parse("line 1", "missing 'ply' magic")),
    }
    let mut vertices: Option<usize> = None;
    let mut props: Vec<String> = Vec::new();
    let mut in_vertex = false;
    let mut ascii = false;
    let mut header_done = false;
    for (ln, line) in lines.by_ref() {
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => {
                ascii = tok.next() == Some("ascii");
                if !ascii {
                    return Err(Error::parse(format!("line {ln}"), "only ASCII PLY is supported"));
                }
            }
            Some("comment") | Some("obj_info") | None => {}
            Some("element") => {
                let name = tok.next();
                let count = tok.next().and_then(|c| c.parse::<usize>().ok());
                in_vertex = name == Some("vertex");
                if in_vertex {
                    if vertices.is_some() {
                        return Err(Error::parse(format!("line {ln}"), "duplicate vertex element"));
                    }
                    vertices = Some(count.ok_or_else(|| Error::parse(format!("line {ln}"), "bad vertex count"))?);
                } else if count.is_none() {
                    return Err(Error::parse(format!("line {ln}"), "bad element count"));
                } else if vertices.is_none() {
                    return Err(Error::parse(format!("line {ln}"), "vertex element must come first"));
                }
            }
            Some("property") => {
                if in_vertex {
                    let parts: Vec<&str> = tok.collect();
                    if parts.first() == Some(&"list") || parts.len() != 2 {
                        return Err(Error::parse(format!("line {ln}"), "unsupported vertex property"));
                    }
                    props.push(parts[1].to_string());
                }
            }
            Some("end_header") => {
                header_done = true;
                break;
            }
            Some(other) => {
                return Err(Error::parse(format!("line {ln}"), format!("unknown header keyword {other:?}")));
            }
        }
    }
    if !header_done {
        return Err(Error::parse("header", "missing end_header"));
    }
    if !ascii {
        return Err(Error::parse("header", "missing format line"));
    }
    let count = vertices.ok_or_else(|| Error::parse("header", "no vertex element"))?;
    let cols: Vec<usize> = ["x", "y", "z"]
        .iter()
        .map(|name| {
            props
                .iter()
                .position(|p| p == name)
                .ok_or_else(|| Error::parse("header", format!("missing vertex property {name}")))
        })
        .collect::<Result<_>>()?;
    let mut data = Vec::with_capacity(count.min(1 << 20) * 3);
    let mut seen = 0;
    for (ln, line) in lines {
        if seen == count {
            break;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != props.len() {
            return Err(Error::parse(
                format!("line {ln}"),
                format!("expected {} values, found {}", props.len(), fields.len()),
            ));
        }
        for &c in &cols {
            data.push(parse_real(fields[c], || format!("line {ln}"))?);
        }
        seen += 1;
    }
    if seen != count {
        return Err(Error::parse("body", format!("expected {count} vertices, found {seen}")));
    }
    Ok(RawPoints { dim: 3, data })
}

/// Write one point per row with full round-trip precision.
pub fn write_csv<W: Write>(cloud: &PointCloud, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in cloud.points() {
        w.write_record(p.iter().map(|x| format!("{x:?}")))
            .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::invalid(format!("csv: {other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip() {
        let c = PointCloud::from_flat(Geometry::Euclidean(2), vec![0.1, -2.0, 1e-17, 3.5, 7.0, 0.3333333333333333]).unwrap();
        let mut buf = Vec::new();
        write_csv(&c, &mut buf).unwrap();
        let back = parse_csv(std::str::from_utf8(&buf).unwrap()).unwrap().into_cloud(false).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn csv_header_is_skipped() {
        let raw = parse_csv("x,y,z\n1,2,3\n4,5,6\n").unwrap();
        assert_eq!(raw.dim, 3);
        assert_eq!(raw.data, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn malformed_row_reports_row() {
        match parse_csv("1,2\n3,abc\n").unwrap_err() {
            Error::Parse { location, .. } => assert_eq!(location, "row 2, column 2"),
            e => panic!("{e}"),
        }
        match parse_csv("1,2\n3\n").unwrap_err() {
            Error::Parse { location, .. } => assert_eq!(location, "row 2"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn ply_vertices() {
        let text = "ply\nformat ascii 1.0\ncomment test\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n1 2 3 255\n4 5 6 0\n3 0 1 1\n";
        let raw = parse_ply(text).unwrap();
        assert_eq!(raw.data, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn ply_errors() {
        assert!(parse_ply("ply\nformat binary_little_endian 1.0\nend_header\n").is_err());
        assert!(parse_ply("ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 2 3\n").is_err());
    }
}
