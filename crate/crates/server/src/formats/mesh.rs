//! Detected desktop as TOML: plane, outline in plane coordinates and
//! triangles.

use std::path::Path;

use serde::{Deserialize, Serialize};
use teleop_core::scene::{DesktopMesh, Plane};
use teleop_core::{Vec2, Vec3};

use super::{parse_toml, read_text, FormatError};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeshDoc {
    normal: [f64; 3],
    offset: f64,
    boundary: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    /// Informational; recomputed on load.
    #[serde(default)]
    area: f64,
}

pub fn mesh_to_toml(mesh: &DesktopMesh) -> String {
    let doc = MeshDoc {
        normal: mesh.plane.normal.to_array(),
        offset: mesh.plane.offset,
        boundary: mesh.boundary.iter().map(|v| [v.x, v.y]).collect(),
        triangles: mesh.triangles.clone(),
        area: mesh.area(),
    };
    toml::to_string(&doc).expect("mesh serializes")
}

pub fn load_mesh(path: &Path) -> Result<DesktopMesh, FormatError> {
    let doc: MeshDoc = parse_toml(&read_text(path)?, path)?;
    let plane = Plane::new(Vec3::from(doc.normal), doc.offset)
        .ok_or_else(|| FormatError::invalid(path, "desktop normal is zero"))?;
    let mesh = DesktopMesh {
        plane,
        boundary: doc.boundary.iter().map(|b| Vec2::new(b[0], b[1])).collect(),
        triangles: doc.triangles,
    };
    mesh.validate().map_err(|source| FormatError::Scene { path: path.into(), source })?;
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use teleop_core::desktop::make_mesh;

    #[test]
    fn round_trip() {
        let b = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(1.0, 0.5), Vec2::new(0.3, 0.9)];
        let mesh = make_mesh(&b, Plane::horizontal(0.75)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("desk.toml");
        std::fs::write(&p, mesh_to_toml(&mesh)).unwrap();
        assert_eq!(load_mesh(&p).unwrap(), mesh);
    }

    #[test]
    fn bad_triangles_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("desk.toml");
        std::fs::write(&p, "normal = [0, 0, 1]\noffset = 0.0\nboundary = [[0, 0], [1, 0], [0, 1]]\ntriangles = [[0, 1, 5]]\n")
            .unwrap();
        assert!(load_mesh(&p).unwrap_err().to_string().contains("out of range"));
    }
}
