//! Point clouds. ASCII: one `x y z` per line (spaces or commas), `#`
//! comments. Binary: the 16-byte magic, a little-endian u64 count, then
//! `count` triples of little-endian f64.

use std::io::{BufWriter, Write};
use std::path::Path;

use teleop_core::desktop::PointCloud;
use teleop_core::Vec3;

use super::FormatError;

pub const CLOUD_MAGIC: &[u8; 16] = b"TELEOP-CLOUD-V1\n";

pub fn read_cloud(path: &Path) -> Result<PointCloud, FormatError> {
    let bytes = std::fs::read(path).map_err(|e| FormatError::io(path, e))?;
    let points = if bytes.starts_with(CLOUD_MAGIC) { parse_binary(&bytes, path)? } else { parse_ascii(&bytes, path)? };
    PointCloud::new(points).map_err(|e| FormatError::invalid(path, e.to_string()))
}

fn parse_binary(bytes: &[u8], path: &Path) -> Result<Vec<Vec3>, FormatError> {
    let body = &bytes[CLOUD_MAGIC.len()..];
    if body.len() < 8 {
        return Err(FormatError::invalid(path, "binary cloud truncated before the point count"));
    }
    let n = u64::from_le_bytes(body[..8].try_into().unwrap()) as usize;
    let data = &body[8..];
    if Some(data.len()) != n.checked_mul(24) {
        return Err(FormatError::invalid(
            path,
            format!("binary cloud declares {n} points but carries {} bytes of data", data.len()),
        ));
    }
    Ok(data
        .chunks_exact(24)
        .map(|c| {
            let f = |i: usize| f64::from_le_bytes(c[i * 8..i * 8 + 8].try_into().unwrap());
            Vec3::new(f(0), f(1), f(2))
        })
        .collect())
}

fn parse_ascii(bytes: &[u8], path: &Path) -> Result<Vec<Vec3>, FormatError> {
    let text = std::str::from_utf8(bytes).map_err(|_| FormatError::invalid(path, "cloud is neither binary nor UTF-8"))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let vals: Result<Vec<f64>, _> =
            line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).map(str::parse).collect();
        match vals {
            Ok(v) if v.len() == 3 => out.push(Vec3::new(v[0], v[1], v[2])),
            _ => return Err(FormatError::invalid(path, format!("line {}: expected three numbers", i + 1))),
        }
    }
    Ok(out)
}

pub fn write_cloud_binary(path: &Path, cloud: &PointCloud) -> Result<(), FormatError> {
    let io = |e| FormatError::io(path, e);
    let mut w = BufWriter::new(std::fs::File::create(path).map_err(io)?);
    w.write_all(CLOUD_MAGIC).map_err(io)?;
    w.write_all(&(cloud.len() as u64).to_le_bytes()).map_err(io)?;
    for p in &cloud.points {
        for v in p.to_array() {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn write_cloud_ascii(path: &Path, cloud: &PointCloud) -> Result<(), FormatError> {
    let io = |e| FormatError::io(path, e);
    let mut w = BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for p in &cloud.points {
        writeln!(w, "{} {} {}", p.x, p.y, p.z).map_err(io)?;
    }
    w.flush().map_err(io)
}
