//! Scene server for task-centric teleoperation: wire protocol, topic
//! publication, services over the simulation core, file formats, metrics,
//! session replay and the evaluation harness.

pub mod client;
pub mod eval;
pub mod formats;
pub mod hub;
pub mod messages;
pub mod metrics;
pub mod protocol;
pub mod replay;
pub mod server;
pub mod world;

pub use client::{Client, ClientError};
pub use protocol::{Frame, FrameKind};
pub use server::{serve, ServeOptions, ServerHandle};
pub use world::{ClockMode, WorldConfig};
