use std::io::Write;

use nalgebra::{DMatrix, DVector};

use super::points::csv_io;
use crate::ambient::Geometry;
use crate::error::{Error, Result};
use crate::submanifold::{PrincipalSubmanifold, SubmanifoldPoint, TruncatedGeodesic};

pub const CACHE_MAGIC: [u8; 4] = *b"SFSM";
pub const CACHE_VERSION: u16 = 1;

/// CSV with columns `i, j, arclen, x0.., c0..`.
pub fn write_submanifold_csv<W: Write>(sub: &PrincipalSubmanifold, out: W) -> Result<()> {
    let n = sub.geometry.ambient_dim();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["i".to_string(), "j".to_string(), "arclen".to_string()];
    header.extend((0..n).map(|c| format!("x{c}")));
    header.extend((0..sub.k).map(|c| format!("c{c}")));
    w.write_record(&header).map_err(csv_io)?;
    for sp in &sub.points {
        let mut rec = vec![sp.i.to_string(), sp.j.to_string(), format!("{:?}", sp.arclen)];
        rec.extend(sp.point.iter().map(|x| format!("{x:?}")));
        rec.extend(sp.chart.iter().map(|x| format!("{x:?}")));
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

struct Enc(Vec<u8>);

impl Enc {
    fn u8(&mut self, x: u8) {
        self.0.push(x);
    }
    fn u32(&mut self, x: usize) {
        self.0.extend_from_slice(&(x as u32).to_le_bytes());
    }
    fn f64(&mut self, x: f64) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
    fn floats<'a>(&mut self, xs: impl IntoIterator<Item = &'a f64>) {
        for &x in xs {
            self.f64(x);
        }
    }
}

/// Compact little-endian encoding of a submanifold.
pub fn encode_submanifold(sub: &PrincipalSubmanifold) -> Vec<u8> {
    let mut e = Enc(Vec::new());
    e.0.extend_from_slice(&CACHE_MAGIC);
    e.0.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    let (kind, dim) = match sub.geometry {
        Geometry::Euclidean(d) => (0, d),
        Geometry::Hypersphere(d) => (1, d),
    };
    e.u8(kind);
    e.u32(dim);
    e.u32(sub.k);
    e.f64(sub.r);
    e.f64(sub.delta);
    e.floats(sub.mu.iter());
    e.floats(sub.frame_mu.iter());
    e.u32(sub.coefficients.len());
    for c in &sub.coefficients {
        e.floats(c.iter());
    }
    e.u32(sub.points.len());
    for sp in &sub.points {
        e.u32(sp.i);
        e.u32(sp.j);
        e.f64(sp.arclen);
        e.floats(sp.point.iter());
        e.floats(sp.chart.iter());
    }
    e.u32(sub.truncated.len());
    for t in &sub.truncated {
        e.u32(t.i);
        e.u32(t.reason.len());
        e.0.extend_from_slice(t.reason.as_bytes());
    }
    e.0
}

struct Dec<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Dec<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::parse(format!("byte {}", self.pos), "unexpected end of input"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
    fn f64(&mut self) -> Result<f64> {
        let at = self.pos;
        let x = f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        if !x.is_finite() {
            return Err(Error::parse(format!("byte {at}"), "non-finite value"));
        }
        Ok(x)
    }
    /// Fails early when `count * width` bytes cannot be present.
    fn reserve(&self, count: usize, width: usize) -> Result<()> {
        match count.checked_mul(width) {
            Some(n) if n <= self.buf.len() - self.pos => Ok(()),
            _ => Err(Error::parse(format!("byte {}", self.pos), format!("count {count} exceeds input"))),
        }
    }
    fn vector(&mut self, n: usize) -> Result<DVector<f64>> {
        self.reserve(n, 8)?;
        let mut v = DVector::zeros(n);
        for x in v.iter_mut() {
            *x = self.f64()?;
        }
        Ok(v)
    }
}

/// Inverse of [`encode_submanifold`].
pub fn decode_submanifold(bytes: &[u8]) -> Result<PrincipalSubmanifold> {
    let mut d = Dec { buf: bytes, pos: 0 };
    if d.take(4)? != CACHE_MAGIC {
        return Err(Error::parse("byte 0", "bad magic"));
    }
    let version = d.u16()?;
    if version != CACHE_VERSION {
        return Err(Error::parse("byte 4", format!("unsupported version {version}")));
    }
    let geometry = match (d.u8()?, d.u32()?) {
        (_, 0) => return Err(Error::parse("byte 7", "zero dimension")),
        (0, n) => Geometry::Euclidean(n),
        (1, n) => Geometry::Hypersphere(n),
        (kind, _) => return Err(Error::parse("byte 6", format!("unknown geometry kind {kind}"))),
    };
    let n = geometry.ambient_dim();
    let k = d.u32()?;
    if k == 0 || k > geometry.intrinsic_dim() {
        return Err(Error::parse("byte 11", format!("rank {k} out of range")));
    }
    let r = d.f64()?;
    let delta = d.f64()?;
    if !(r > 0.0 && delta > 0.0) {
        return Err(Error::parse("byte 15", "radius and step must be positive"));
    }
    let mu = d.vector(n)?;
    d.reserve(n, 8 * k)?;
    let frame_mu = DMatrix::from_column_slice(n, k, d.vector(n * k)?.as_slice());
    let nc = d.u32()?;
    d.reserve(nc, 8 * k)?;
    let coefficients = (0..nc).map(|_| d.vector(k)).collect::<Result<Vec<_>>>()?;
    let np = d.u32()?;
    d.reserve(np, 16 + 8 * (n + k))?;
    let mut points = Vec::with_capacity(np);
    for _ in 0..np {
        let i = d.u32()?;
        let j = d.u32()?;
        let arclen = d.f64()?;
        let point = d.vector(n)?;
        let chart = d.vector(k)?;
        points.push(SubmanifoldPoint { i, j, arclen, point, chart });
    }
    let nt = d.u32()?;
    d.reserve(nt, 8)?;
    let mut truncated = Vec::with_capacity(nt);
    for _ in 0..nt {
        let i = d.u32()?;
        let len = d.u32()?;
        let at = d.pos;
        let reason = std::str::from_utf8(d.take(len)?)
            .map_err(|_| Error::parse(format!("byte {at}"), "invalid UTF-8"))?
            .to_string();
        truncated.push(TruncatedGeodesic { i, reason });
    }
    if d.pos != bytes.len() {
        return Err(Error::parse(format!("byte {}", d.pos), "trailing bytes"));
    }
    Ok(PrincipalSubmanifold {
        geometry,
        mu,
        r,
        k,
        delta,
        frame_mu,
        coefficients,
        points,
        truncated,
    })
}
