#![allow(dead_code)]

use std::path::PathBuf;
use std::time::Duration;

use teleop_server::formats::load_scene;
use teleop_server::protocol::Frame;
use teleop_server::{serve, Client, ClockMode, ServeOptions, ServerHandle, WorldConfig};

pub fn repo(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

pub fn start(scene: &str, config: WorldConfig) -> ServerHandle {
    let loaded = load_scene(&repo(scene), config.seed).unwrap();
    serve(loaded.scene, loaded.cloud, config, "127.0.0.1:0", ServeOptions::default()).unwrap()
}

pub fn sim(scene: &str) -> (ServerHandle, Client) {
    let server = start(scene, WorldConfig { clock: ClockMode::Simulated, ..Default::default() });
    let client = Client::connect(server.local_addr()).unwrap();
    (server, client)
}

/// Topic frames named `name` received until `timeout` passes without one.
pub fn collect(client: &mut Client, name: &str, timeout: Duration) -> Vec<Frame> {
    let mut out = Vec::new();
    while let Some(f) = client.next_topic(timeout).unwrap() {
        if f.name == name {
            out.push(f);
        }
    }
    out
}
