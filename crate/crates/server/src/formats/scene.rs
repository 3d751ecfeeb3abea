//! Scene files.
//!
//! ```toml
//! arm_start = [0.0, 0.26, 3.14, -2.27, 0.0, 0.96, 1.57]
//!
//! [desktop]                 # inline plane and outline ...
//! normal = [0.0, 0.0, 1.0]
//! offset = 0.0
//! boundary = [[-0.2, -0.6], [1.0, -0.6], [1.0, 0.6], [-0.2, 0.6]]
//! # cloud = "table.cloud"   # ... or detect it from a point cloud
//! # mesh = "desk.toml"      # ... or load a detected mesh
//!
//! [[catalog]]
//! model_id = "cube"
//! half_extents = [0.03, 0.03, 0.03]
//! mass = 0.1
//! grasp_width = 0.06
//!
//! [[instances]]
//! instance_id = "a"
//! model_id = "cube"
//! pose = [0.4, 0.0, 0.03, 1.0, 0.0, 0.0, 0.0]   # px py pz qw qx qy qz
//! ```
//!
//! Relative `cloud` and `mesh` paths resolve against the scene file.

use std::path::{Path, PathBuf};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use teleop_core::desktop::{detect_desktop, make_mesh, DetectParams, PointCloud};
use teleop_core::kinematics::{JointState, DOF};
use teleop_core::scene::{DesktopMesh, Plane};
use teleop_core::{ObjectInstance, ObjectModel, Pose, Quat, SceneState, Vec2, Vec3};

use super::{cloud::read_cloud, mesh::load_mesh, parse_toml, read_text, FormatError};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDoc {
    arm_start: [f64; DOF],
    desktop: DesktopDoc,
    #[serde(default)]
    catalog: Vec<ModelDoc>,
    #[serde(default)]
    instances: Vec<InstanceDoc>,
}

#[derive(Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DesktopDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    normal: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    offset: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    boundary: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cloud: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mesh: Option<PathBuf>,
    /// RANSAC seed for `cloud`.
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    model_id: String,
    half_extents: [f64; 3],
    mass: f64,
    grasp_width: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDoc {
    instance_id: String,
    model_id: String,
    pose: [f64; 7],
}

#[derive(Debug)]
pub struct LoadedScene {
    pub scene: SceneState,
    /// Cloud the desktop was detected from, kept for the detection service.
    pub cloud: Option<PointCloud>,
}

pub fn load_scene(path: &Path, seed: u64) -> Result<LoadedScene, FormatError> {
    parse_scene(&read_text(path)?, path, seed)
}

/// `path` names the source in diagnostics and anchors relative references.
pub fn parse_scene(text: &str, path: &Path, seed: u64) -> Result<LoadedScene, FormatError> {
    let doc: SceneDoc = parse_toml(text, path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let d = &doc.desktop;
    let inline = d.normal.is_some() || d.offset.is_some() || d.boundary.is_some();
    let mut cloud = None;
    let desktop = match (inline, &d.cloud, &d.mesh) {
        (true, None, None) => {
            let (Some(n), Some(off), Some(b)) = (d.normal, d.offset, &d.boundary) else {
                return Err(FormatError::invalid(path, "desktop: inline form needs normal, offset and boundary"));
            };
            let plane = Plane::new(Vec3::from(n), off).ok_or_else(|| FormatError::invalid(path, "desktop: zero normal"))?;
            let outline: Vec<Vec2> = b.iter().map(|p| Vec2::new(p[0], p[1])).collect();
            make_mesh(&outline, plane).map_err(|e| FormatError::invalid(path, format!("desktop: {e}")))?
        }
        (false, Some(c), None) => {
            let c = base.join(c);
            let pc = read_cloud(&c)?;
            let mut rng = ChaCha8Rng::seed_from_u64(d.seed.unwrap_or(seed));
            let mesh = detect_desktop(&pc, &DetectParams::default(), &mut rng)
                .map_err(|source| FormatError::Detect { path: c.clone(), source })?;
            cloud = Some(pc);
            mesh
        }
        (false, None, Some(m)) => load_mesh(&base.join(m))?,
        _ => return Err(FormatError::invalid(path, "desktop: give exactly one of the inline plane, `cloud` or `mesh`")),
    };

    let mut catalog = Vec::with_capacity(doc.catalog.len());
    for m in &doc.catalog {
        let model = ObjectModel::new(m.model_id.clone(), Vec3::from(m.half_extents), m.mass, m.grasp_width)
            .map_err(|source| FormatError::Scene { path: path.into(), source })?;
        catalog.push(model);
    }
    let mut objects = Vec::with_capacity(doc.instances.len());
    for i in &doc.instances {
        let p = i.pose;
        let pose = Pose::new(Vec3::new(p[0], p[1], p[2]), Quat::new_unchecked(p[3], p[4], p[5], p[6])).map_err(|e| {
            FormatError::invalid(path, format!("instance '{}': {e}", i.instance_id))
        })?;
        objects.push(ObjectInstance::new(i.instance_id.clone(), i.model_id.clone(), pose));
    }
    let joints = JointState::at_rest(doc.arm_start, 0.0);
    let scene = SceneState::new(catalog, desktop, objects, joints)
        .map_err(|source| FormatError::Scene { path: path.into(), source })?;
    Ok(LoadedScene { scene, cloud })
}

/// Inline-desktop form of a scene; ghosts, held flags and time are not
/// part of the file.
pub fn scene_to_toml(scene: &SceneState) -> String {
    let desk: &DesktopMesh = &scene.desktop;
    let doc = SceneDoc {
        arm_start: scene.joints.angles,
        desktop: DesktopDoc {
            normal: Some(desk.plane.normal.to_array()),
            offset: Some(desk.plane.offset),
            boundary: Some(desk.boundary.iter().map(|v| [v.x, v.y]).collect()),
            ..Default::default()
        },
        catalog: scene
            .catalog
            .iter()
            .map(|m| ModelDoc {
                model_id: m.model_id.clone(),
                half_extents: m.half_extents.to_array(),
                mass: m.mass,
                grasp_width: m.grasp_width,
            })
            .collect(),
        instances: scene
            .objects
            .iter()
            .map(|o| InstanceDoc {
                instance_id: o.instance_id.clone(),
                model_id: o.model_id.clone(),
                pose: o.actual_pose.to_array(),
            })
            .collect(),
    };
    toml::to_string(&doc).expect("scene serializes")
}

pub fn save_scene(path: &Path, scene: &SceneState) -> Result<(), FormatError> {
    std::fs::write(path, scene_to_toml(scene)).map_err(|e| FormatError::io(path, e))
}
