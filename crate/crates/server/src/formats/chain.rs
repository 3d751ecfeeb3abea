//! Kinematic chain files: seven `[[joints]]` records and a `[tool]` frame.
//!
//! ```toml
//! [tool]
//! position = [0.0, 0.0, -0.181525]
//! rpy = [3.141592653589793, 0.0, 0.0]
//!
//! [[joints]]
//! name = "joint_1"
//! displacement = [0.0, 0.0, 0.15643]
//! rpy = [3.141592653589793, 0.0, 0.0]
//! axis = [0.0, 0.0, 1.0]
//! lower = -6.283185307179586
//! upper = 6.283185307179586
//! max_velocity = 0.8
//! max_acceleration = 2.0
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use teleop_core::kinematics::{JointSpec, KinematicChain, DOF};
use teleop_core::{Pose, Quat, Vec3};

use super::{parse_toml, read_text, FormatError};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainDoc {
    tool: FrameDoc,
    joints: Vec<JointDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameDoc {
    position: [f64; 3],
    rpy: [f64; 3],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    displacement: [f64; 3],
    rpy: [f64; 3],
    axis: [f64; 3],
    lower: f64,
    upper: f64,
    max_velocity: f64,
    max_acceleration: f64,
}

pub fn load_chain(path: &Path) -> Result<KinematicChain, FormatError> {
    parse_chain(&read_text(path)?, path)
}

pub fn parse_chain(text: &str, path: &Path) -> Result<KinematicChain, FormatError> {
    let doc: ChainDoc = parse_toml(text, path)?;
    if doc.joints.len() != DOF {
        return Err(FormatError::invalid(path, format!("expected {DOF} joints, found {}", doc.joints.len())));
    }
    let rot = |r: [f64; 3]| Quat::from_rpy(r[0], r[1], r[2]);
    let joints: Vec<JointSpec> = doc
        .joints
        .iter()
        .map(|j| JointSpec {
            displacement: Vec3::from(j.displacement),
            rotation: rot(j.rpy),
            axis: Vec3::from(j.axis),
            lower: j.lower,
            upper: j.upper,
            max_velocity: j.max_velocity,
            max_acceleration: j.max_acceleration,
        })
        .collect();
    let chain = KinematicChain {
        joints: joints.try_into().expect("length checked"),
        tool: Pose { position: Vec3::from(doc.tool.position), orientation: rot(doc.tool.rpy) },
    };
    chain.validate().map_err(|e| FormatError::invalid(path, e.to_string()))?;
    Ok(chain)
}

/// Writes a chain whose fixed rotations are pure roll-pitch-yaw.
pub fn write_chain(chain: &KinematicChain) -> String {
    let rpy = |q: Quat| {
        let m = q.to_matrix();
        [m[2][1].atan2(m[2][2]), (-m[2][0]).clamp(-1.0, 1.0).asin(), m[1][0].atan2(m[0][0])]
    };
    let doc = ChainDoc {
        tool: FrameDoc { position: chain.tool.position.to_array(), rpy: rpy(chain.tool.orientation) },
        joints: chain
            .joints
            .iter()
            .enumerate()
            .map(|(i, j)| JointDoc {
                name: Some(format!("joint_{}", i + 1)),
                displacement: j.displacement.to_array(),
                rpy: rpy(j.rotation),
                axis: j.axis.to_array(),
                lower: j.lower,
                upper: j.upper,
                max_velocity: j.max_velocity,
                max_acceleration: j.max_acceleration,
            })
            .collect(),
    };
    toml::to_string(&doc).expect("chain serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_gen3_file_matches_builtin() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config/gen3.toml");
        assert_eq!(load_chain(&path).unwrap(), KinematicChain::kinova_gen3());
    }

    #[test]
    fn written_chain_reloads() {
        let chain = KinematicChain::kinova_gen3();
        let back = parse_chain(&write_chain(&chain), Path::new("mem")).unwrap();
        for (a, b) in back.joints.iter().zip(chain.joints.iter()) {
            assert_eq!(a.displacement, b.displacement);
            assert!(a.rotation.angle_to(b.rotation) < 1e-12);
        }
        assert!(back.tool.orientation.angle_to(chain.tool.orientation) < 1e-12);
    }

    #[test]
    fn wrong_joint_count() {
        let text = write_chain(&KinematicChain::kinova_gen3());
        let cut = text.rfind("[[joints]]").unwrap();
        let e = parse_chain(&text[..cut], Path::new("arm.toml")).unwrap_err().to_string();
        assert!(e.contains("expected 7 joints, found 6"), "{e}");
    }
}
