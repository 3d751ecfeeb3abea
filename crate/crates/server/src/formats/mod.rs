//! On-disk formats: scene and chain files (TOML), point clouds (ASCII or
//! binary) and detected desktop meshes (TOML).

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub mod chain;
pub mod cloud;
pub mod mesh;
pub mod scene;

pub use chain::{load_chain, parse_chain, write_chain};
pub use cloud::{read_cloud, write_cloud_ascii, write_cloud_binary, CLOUD_MAGIC};
pub use mesh::{load_mesh, mesh_to_toml};
pub use scene::{load_scene, parse_scene, save_scene, scene_to_toml, LoadedScene};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    /// Syntax or schema error; the message carries line, column and field.
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Scene { path: PathBuf, source: teleop_core::scene::SceneError },
    #[error("{}: desktop detection failed: {source}", path.display())]
    Detect { path: PathBuf, source: teleop_core::desktop::DetectError },
    #[error("{}: {message}", path.display())]
    Invalid { path: PathBuf, message: String },
}

impl FormatError {
    pub(crate) fn invalid(path: &Path, message: impl Into<String>) -> Self {
        FormatError::Invalid { path: path.into(), message: message.into() }
    }

    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        FormatError::Io { path: path.into(), source }
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String, FormatError> {
    std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))
}

pub(crate) fn parse_toml<T: serde::de::DeserializeOwned>(text: &str, path: &Path) -> Result<T, FormatError> {
    toml::from_str(text).map_err(|e| FormatError::Parse { path: path.into(), message: e.to_string().trim_end().into() })
}
