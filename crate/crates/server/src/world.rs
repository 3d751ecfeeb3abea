//! The scene owner. One thread holds the live `SceneState` and applies every
//! mutation in the order commands arrive; connections read snapshots.

use std::path::PathBuf;
use std::sync::mpsc::{Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::Value;
use teleop_core::desktop::{detect_desktop, DetectParams, PointCloud};
use teleop_core::executor::{
    execute_task, grasp_service, release_service, EeController, ExecutorConfig, MoveOutcome, TargetQueue, TaskRequest,
};
use teleop_core::scene::SceneSnapshot;
use teleop_core::settle::{settle, SettleError};
use teleop_core::{Pose, SceneState};

use crate::hub::{Body, Hub};
use crate::messages::{self as msg, services, topics};
use crate::metrics::{record_metrics, Event, MetricsLog};
use crate::protocol::{encode_body, Frame};
use crate::replay::SessionLog;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClockMode {
    /// Time advances only through `AdvanceClock` and executed motions.
    Simulated,
    /// Time follows the wall clock.
    Wall,
}

#[derive(Clone, Debug)]
pub struct WorldConfig {
    pub executor: ExecutorConfig,
    pub detect: DetectParams,
    pub seed: u64,
    pub clock: ClockMode,
    pub object_rate: f64,
    pub metrics: Option<PathBuf>,
    /// Session log for `replay`.
    pub record: Option<PathBuf>,
    /// Where the detection cloud came from, noted in session logs.
    pub cloud_path: Option<PathBuf>,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            executor: ExecutorConfig::default(),
            detect: DetectParams::default(),
            seed: 0,
            clock: ClockMode::Simulated,
            object_rate: 10.0,
            metrics: None,
            record: None,
            cloud_path: None,
        }
    }
}

pub enum Command {
    Request { frame: Frame, reply: Sender<Body> },
    /// A client publication (only `target_pose` is accepted).
    Publish { frame: Frame, reply: Sender<Body> },
    /// Wall-clock heartbeat.
    Tick,
    Shutdown,
}

/// Latest published state, readable without the world thread.
pub struct Shared {
    snapshot: Mutex<SceneSnapshot>,
    config: ExecutorConfig,
}

impl Shared {
    pub fn scene(&self) -> SceneSnapshot {
        self.snapshot.lock().unwrap().clone()
    }

    pub fn config(&self) -> &ExecutorConfig {
        &self.config
    }

    fn store(&self, scene: &SceneState) {
        *self.snapshot.lock().unwrap() = scene.snapshot();
    }
}

/// Publication schedule in simulation time.
struct Publisher {
    joint_period: f64,
    object_period: f64,
    next_joint: f64,
    next_objects: f64,
}

impl Publisher {
    fn poll(&mut self, hub: &Hub, shared: &Shared, scene: &SceneState) {
        let now = scene.sim_time + 1e-9;
        if now < self.next_joint && now < self.next_objects {
            return;
        }
        if now >= self.next_joint {
            hub.publish(topics::JOINT_STATES, &msg::JointStates::of(scene));
            while self.next_joint <= now {
                self.next_joint += self.joint_period;
            }
        }
        if now >= self.next_objects {
            hub.publish(topics::OBJECT_POSES, &msg::ObjectPoses::of(scene));
            while self.next_objects <= now {
                self.next_objects += self.object_period;
            }
        }
        shared.store(scene);
    }
}

/// Maps simulation time onto the wall clock.
struct Pacer {
    origin: Instant,
    sim_origin: f64,
}

impl Pacer {
    fn now_sim(&self) -> f64 {
        self.sim_origin + self.origin.elapsed().as_secs_f64()
    }

    fn wait_until(&self, sim_time: f64) {
        let ahead = sim_time - self.now_sim();
        if ahead > 0.0 {
            std::thread::sleep(Duration::from_secs_f64(ahead));
        }
    }
}

pub struct World {
    scene: SceneState,
    initial: SceneState,
    config: WorldConfig,
    cloud: Option<PointCloud>,
    queue: TargetQueue,
    ee: EeController,
    hub: Arc<Hub>,
    shared: Arc<Shared>,
    events: Vec<Event>,
    publisher: Publisher,
    pacer: Option<Pacer>,
    metrics: Option<MetricsLog>,
    log: Option<SessionLog>,
    clock_target: f64,
    blocked: bool,
}

type Reply = Result<Value, String>;

fn ok<T: Serialize>(v: &T) -> Reply {
    serde_json::to_value(v).map_err(|e| e.to_string())
}

impl World {
    pub fn new(scene: SceneState, cloud: Option<PointCloud>, config: WorldConfig, hub: Arc<Hub>) -> std::io::Result<Self> {
        let shared = Arc::new(Shared { snapshot: Mutex::new(scene.snapshot()), config: config.executor.clone() });
        let metrics = config.metrics.as_deref().map(MetricsLog::open).transpose()?;
        let mut log = config.record.as_deref().map(SessionLog::create).transpose()?;
        if let Some(l) = log.as_mut() {
            l.header(&scene, &config)?;
        }
        let pacer = (config.clock == ClockMode::Wall).then(|| Pacer { origin: Instant::now(), sim_origin: scene.sim_time });
        let publisher = Publisher {
            joint_period: 1.0 / config.executor.joint_rate,
            object_period: 1.0 / config.object_rate,
            next_joint: scene.sim_time,
            next_objects: scene.sim_time,
        };
        Ok(World {
            initial: scene.clone(),
            scene,
            config,
            cloud,
            queue: TargetQueue::default(),
            ee: EeController::new(),
            hub,
            shared,
            events: Vec::new(),
            publisher,
            pacer,
            metrics,
            log,
            clock_target: 0.0,
            blocked: false,
        })
    }

    pub fn shared(&self) -> Arc<Shared> {
        self.shared.clone()
    }

    pub fn scene(&self) -> &SceneState {
        &self.scene
    }

    /// Keeps wall-clock rules but stops sleeping; used by replay.
    pub fn disable_pacing(&mut self) {
        self.pacer = None;
    }

    pub fn run(mut self, rx: Receiver<Command>, tick_pending: Option<Arc<std::sync::atomic::AtomicBool>>) {
        info!("world running at t = {:.3}", self.scene.sim_time);
        self.publisher.poll(&self.hub, &self.shared, &self.scene);
        while let Ok(cmd) = rx.recv() {
            if matches!(cmd, Command::Tick) {
                if let Some(p) = &tick_pending {
                    p.store(false, std::sync::atomic::Ordering::Release);
                }
            }
            if !self.handle(cmd) {
                break;
            }
        }
        info!("world stopped at t = {:.3}", self.scene.sim_time);
    }

    /// Applies one command. Returns false on shutdown.
    pub fn handle(&mut self, cmd: Command) -> bool {
        match cmd {
            Command::Request { frame, reply } => {
                if let Some(l) = self.log.as_mut() {
                    l.request(&frame);
                }
                let result = self.service(&frame);
                let out = match result {
                    Ok(v) => Frame::response(&frame.name, frame.id, &v),
                    Err(m) => Frame::error(&frame.name, frame.id, m),
                };
                if let Some(l) = self.log.as_mut() {
                    l.reply(&out);
                }
                self.shared.store(&self.scene);
                let _ = reply.send(Arc::new(encode_body(&out)));
            }
            Command::Publish { frame, reply } => {
                if let Some(l) = self.log.as_mut() {
                    l.publish(&frame);
                }
                if let Err(m) = self.publish(&frame) {
                    let _ = reply.send(Arc::new(encode_body(&Frame::error(&frame.name, frame.id, m))));
                }
            }
            Command::Tick => {
                let Some(p) = &self.pacer else { return true };
                let due = p.now_sim();
                let dt = 1.0 / self.config.executor.joint_rate;
                let mut n = 0;
                while self.scene.sim_time + dt <= due + 1e-9 {
                    self.ee_tick();
                    n += 1;
                }
                if n > 0 {
                    if let Some(l) = self.log.as_mut() {
                        l.ticks(n);
                    }
                }
            }
            Command::Shutdown => return false,
        }
        true
    }

    /// Runs `n` control ticks regardless of the clock mode.
    pub fn step(&mut self, n: usize) {
        for _ in 0..n {
            self.ee_tick();
        }
    }

    fn ee_tick(&mut self) {
        let tick = self.ee.tick(&mut self.scene, &self.config.executor, &mut self.queue);
        if let Some(c) = tick.collision {
            if self.blocked {
                debug!("still blocked by '{}'", c.with);
            } else {
                warn!("streamed motion blocked: collision with '{}' ({:.4} m)", c.with, c.depth);
            }
            self.blocked = true;
            self.events.push(Event::Collision { t: self.scene.sim_time });
        } else if tick.moved {
            self.blocked = false;
        }
        if let Some(e) = tick.ik_failure {
            debug!("target skipped: {e}");
        }
        self.publisher.poll(&self.hub, &self.shared, &self.scene);
    }

    fn publish(&mut self, frame: &Frame) -> Result<(), String> {
        if frame.name != topics::TARGET_POSE {
            return Err(format!("topic '{}' cannot be published by clients", frame.name));
        }
        let pose: Pose = frame.payload_as().map_err(|e| e.to_string())?;
        self.queue.push(pose);
        self.events.push(Event::TargetPose { t: self.scene.sim_time });
        self.hub.publish(topics::TARGET_POSE, &pose);
        Ok(())
    }

    fn service(&mut self, frame: &Frame) -> Reply {
        let t = self.scene.sim_time;
        let exec = &self.config.executor;
        // split borrows for the motion observer
        let (hub, shared, publisher, pacer) = (&self.hub, &self.shared, &mut self.publisher, &self.pacer);
        let mut observer = |s: &SceneState| {
            if let Some(p) = pacer {
                p.wait_until(s.sim_time);
            }
            publisher.poll(hub, shared, s);
        };
        match frame.name.as_str() {
            services::EXECUTE_TASK => {
                let req: TaskRequest = frame.payload_as().map_err(|e| e.to_string())?;
                self.ee.stop();
                self.queue.clear();
                let report = execute_task(&mut self.scene, exec, &req, &mut observer).map_err(|e| e.to_string())?;
                self.events.push(Event::ExecuteClick { t });
                if report.moves.iter().any(|m| m.outcome == MoveOutcome::Collision) {
                    self.events.push(Event::Collision { t: report.end_time });
                }
                self.events.push(Event::ExecutionFinished { t: report.end_time, success: report.success });
                info!(
                    "task of {} moves: {} in {:.2} s",
                    req.moves.len(),
                    if report.success { "success" } else { "failure" },
                    report.end_time - report.start_time
                );
                ok(&report)
            }
            services::GRASP => ok(&grasp_service(&mut self.scene, exec, &mut observer)),
            services::RELEASE => {
                let r = release_service(&mut self.scene, exec, &mut observer);
                if let Some(Err(SettleError::InvalidRelease { .. })) = &r.settle {
                    self.events.push(Event::Collision { t });
                }
                ok(&msg::ReleaseResponse::from(r))
            }
            services::DESKTOP_DETECTION => {
                let req: msg::DetectRequest = frame.payload_as().map_err(|e| e.to_string())?;
                let cloud = self.cloud.as_ref().ok_or("no point cloud configured")?;
                let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
                let mesh = detect_desktop(cloud, &self.config.detect, &mut rng).map_err(|e| e.to_string())?;
                if req.apply {
                    let old = std::mem::replace(&mut self.scene.desktop, mesh.clone());
                    if let Err(e) = self.scene.validate() {
                        self.scene.desktop = old;
                        return Err(format!("detected desktop rejected: {e}"));
                    }
                }
                ok(&msg::DetectResponse {
                    normal: mesh.plane.normal,
                    offset: mesh.plane.offset,
                    area: mesh.area(),
                    points: cloud.len(),
                    applied: req.apply,
                    mesh,
                })
            }
            services::RESET_SCENE => {
                self.scene = self.initial.clone();
                self.scene.sim_time = t;
                self.scene.joints.timestamp = t;
                self.ee = EeController::new();
                self.queue.clear();
                self.events.clear();
                ok(&msg::ClockState { sim_time: t })
            }
            services::SET_GHOST_POSE => {
                let req: msg::InstancePose = frame.payload_as().map_err(|e| e.to_string())?;
                self.scene.set_ghost_pose(&req.instance_id, req.pose).map_err(|e| e.to_string())?;
                self.events.push(Event::GhostGrab { t });
                ok(self.scene.instance(&req.instance_id).expect("just set"))
            }
            services::RESET_GHOSTS => {
                self.scene.reset_ghosts();
                ok(&msg::Empty {})
            }
            services::ADVANCE_CLOCK => {
                if self.config.clock == ClockMode::Wall {
                    return Err("the clock follows wall time".into());
                }
                let req: msg::AdvanceClock = frame.payload_as().map_err(|e| e.to_string())?;
                if !(req.seconds >= 0.0 && req.seconds <= 3600.0) {
                    return Err("seconds must lie in [0, 3600]".into());
                }
                // fractional periods carry over to the next request
                self.clock_target = self.clock_target.max(t) + req.seconds;
                let dt = 1.0 / exec.joint_rate;
                while self.scene.sim_time + dt <= self.clock_target + 1e-9 {
                    self.ee_tick();
                }
                ok(&msg::ClockState { sim_time: self.scene.sim_time })
            }
            services::END_SESSION => {
                let req: msg::EndSession = frame.payload_as().map_err(|e| e.to_string())?;
                self.events.push(Event::TaskComplete { t });
                let rec = record_metrics(&req.task, &self.events).ok_or("no interaction recorded in this session")?;
                self.events.clear();
                if let Some(m) = self.metrics.as_mut() {
                    m.append(&rec).map_err(|e| format!("metrics log: {e}"))?;
                }
                info!("{} {}: {:?}", rec.task, rec.mode, rec.outcome);
                ok(&rec)
            }
            _ => read_service(frame, &self.scene, exec).unwrap_or_else(|| Err(unknown(frame))),
        }
    }
}

pub(crate) fn unknown(frame: &Frame) -> String {
    format!("unknown service '{}'", frame.name)
}

/// Services answered from a snapshot. `None` for any other name.
pub fn read_service(frame: &Frame, scene: &SceneState, config: &ExecutorConfig) -> Option<Reply> {
    Some(match frame.name.as_str() {
        services::GET_SCENE => ok(scene),
        services::SETTLE_PREVIEW => (|| {
            let req: msg::InstancePose = frame.payload_as().map_err(|e| e.to_string())?;
            let r = settle(scene, &req.instance_id, &req.pose, &config.settle).map_err(|e| e.to_string())?;
            ok(&msg::SettlePreview::from(r))
        })(),
        _ => return None,
    })
}
