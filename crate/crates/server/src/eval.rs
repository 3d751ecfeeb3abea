//! Scripted evaluation. Each run starts a fresh simulated-clock server,
//! drives it over TCP with a scripted operator in one control mode, then
//! checks the final scene against the fixture's goals.

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use teleop_core::executor::{ExecutionReport, GraspReport, MoveRequest, TaskRequest};
use teleop_core::kinematics::{forward_kinematics, KinematicChain};
use teleop_core::settle::Support;
use teleop_core::{Pose, Quat, SceneState, Vec3};

use crate::client::{Client, ClientError};
use crate::formats::{load_scene, parse_toml, read_text, FormatError};
use crate::messages::{self as msg, services, topics};
use crate::metrics::{MetricsRecord, Mode, Outcome};
use crate::server::{serve, ServeOptions};
use crate::world::{ClockMode, WorldConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    /// Up to a safe altitude, across, and down.
    #[default]
    UpOverDown,
    /// Straight across just above the release height.
    Direct,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct FixtureDoc {
    label: String,
    scene: PathBuf,
    #[serde(default = "default_tolerance")]
    tolerance: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    modes: Option<Vec<Mode>>,
    #[serde(default)]
    ee_route: Route,
    #[serde(default = "yes")]
    expect_success: bool,
    goals: Vec<GoalDoc>,
}

fn default_tolerance() -> f64 {
    0.01
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct GoalDoc {
    instance_id: String,
    pose: [f64; 7],
    #[serde(default)]
    support: Option<Support>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Goal {
    pub instance_id: String,
    pub pose: Pose,
    /// Required support of the final resting pose.
    pub support: Option<Support>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fixture {
    /// File stem.
    pub name: String,
    pub label: String,
    pub scene: PathBuf,
    pub tolerance: f64,
    pub seed: u64,
    pub modes: Vec<Mode>,
    pub ee_route: Route,
    pub expect_success: bool,
    pub goals: Vec<Goal>,
}

pub fn load_fixture(path: &Path) -> Result<Fixture, FormatError> {
    let doc: FixtureDoc = parse_toml(&read_text(path)?, path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut goals = Vec::new();
    for g in doc.goals {
        let p = g.pose;
        let pose = Pose::new(Vec3::new(p[0], p[1], p[2]), Quat::new_unchecked(p[3], p[4], p[5], p[6]))
            .map_err(|e| FormatError::invalid(path, format!("goal '{}': {e}", g.instance_id)))?;
        if !pose.is_upright(1e-6) {
            return Err(FormatError::invalid(path, format!("goal '{}' is not upright", g.instance_id)));
        }
        goals.push(Goal { instance_id: g.instance_id, pose, support: g.support });
    }
    if goals.is_empty() {
        return Err(FormatError::invalid(path, "fixture has no goals"));
    }
    Ok(Fixture {
        name: path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        label: doc.label,
        scene: base.join(doc.scene),
        tolerance: doc.tolerance,
        seed: doc.seed,
        modes: doc.modes.unwrap_or_else(|| vec![Mode::Hsi, Mode::Ee]),
        ee_route: doc.ee_route,
        expect_success: doc.expect_success,
        goals,
    })
}

/// Every `*.toml` in `dir`, sorted by file name.
pub fn load_fixtures(dir: &Path) -> Result<Vec<Fixture>, FormatError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| FormatError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    paths.sort();
    paths.iter().map(|p| load_fixture(p)).collect()
}

/// Timing and motion parameters of the scripted operators.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorConfig {
    /// Pause before the first action and between objects, s.
    pub think_time: f64,
    /// Ghost drag speed, m/s.
    pub drag_speed: f64,
    /// Ghost pose updates per second while dragging.
    pub drag_rate: f64,
    /// Pause after execution before declaring the task done, s.
    pub observe_time: f64,
    /// Streamed tool speed, m/s.
    pub ee_speed: f64,
    /// Streamed target rate, Hz.
    pub ee_rate: f64,
    /// Streamed yaw rate, rad/s.
    pub ee_turn_rate: f64,
    /// Approach height above an object's top, m.
    pub hover: f64,
    /// Release height above the goal, m.
    pub release_gap: f64,
    /// Tool position error treated as arrived, m.
    pub arrive_tolerance: f64,
    /// Longest wait for the arm to arrive, s.
    pub arrive_timeout: f64,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        OperatorConfig {
            think_time: 1.0,
            drag_speed: 0.25,
            drag_rate: 10.0,
            observe_time: 0.5,
            ee_speed: 0.1,
            ee_rate: 20.0,
            ee_turn_rate: 0.5,
            hover: 0.1,
            release_gap: 0.005,
            arrive_tolerance: 0.002,
            arrive_timeout: 3.0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("{0}")]
    Script(String),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GoalCheck {
    pub instance_id: String,
    pub error: f64,
    pub support: Option<Support>,
    pub ok: bool,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub fixture: String,
    pub mode: Mode,
    pub record: MetricsRecord,
    pub checks: Vec<GoalCheck>,
    /// Metrics outcome is success and every goal is met.
    pub success: bool,
    pub expected: bool,
    pub final_scene: SceneState,
    pub execution: Option<ExecutionReport>,
}

pub fn run_fixture(fixture: &Fixture, mode: Mode, op: &OperatorConfig) -> Result<RunResult, EvalError> {
    let loaded = load_scene(&fixture.scene, fixture.seed)?;
    let config = WorldConfig { seed: fixture.seed, clock: ClockMode::Simulated, ..Default::default() };
    let chain = config.executor.chain.clone();
    let server = serve(loaded.scene, loaded.cloud, config, "127.0.0.1:0", ServeOptions::default())?;
    let mut client = Client::connect(server.local_addr())?;
    let mut run = Operator { client: &mut client, chain, op, execution: None };
    let record = match mode {
        Mode::Hsi => run.hsi(fixture)?,
        Mode::Ee => run.ee(fixture)?,
    };
    let execution = run.execution.take();
    let scene: SceneState = client.call(services::GET_SCENE, &msg::Empty {})?;
    let checks = verify(&mut client, &scene, fixture)?;
    drop(client);
    server.shutdown();
    let success = record.outcome == Outcome::Success && checks.iter().all(|c| c.ok);
    Ok(RunResult {
        fixture: fixture.name.clone(),
        mode,
        record,
        checks,
        success,
        expected: success == fixture.expect_success,
        final_scene: scene,
        execution,
    })
}

fn verify(client: &mut Client, scene: &SceneState, fixture: &Fixture) -> Result<Vec<GoalCheck>, EvalError> {
    let mut out = Vec::new();
    for g in &fixture.goals {
        let obj = scene
            .instance(&g.instance_id)
            .ok_or_else(|| EvalError::Script(format!("goal names unknown instance '{}'", g.instance_id)))?;
        let error = obj.actual_pose.position.distance(g.pose.position);
        let support = client
            .call::<_, msg::SettlePreview>(
                services::SETTLE_PREVIEW,
                &msg::InstancePose { instance_id: g.instance_id.clone(), pose: obj.actual_pose },
            )
            .ok()
            .map(|p| p.support);
        let support_ok = g.support.as_ref().is_none_or(|want| support.as_ref() == Some(want));
        out.push(GoalCheck {
            instance_id: g.instance_id.clone(),
            error,
            support,
            ok: error <= fixture.tolerance && support_ok && !obj.held,
        });
    }
    Ok(out)
}

struct Operator<'a> {
    client: &'a mut Client,
    chain: KinematicChain,
    op: &'a OperatorConfig,
    execution: Option<ExecutionReport>,
}

impl Operator<'_> {
    fn wait(&mut self, seconds: f64) -> Result<(), EvalError> {
        self.client.call_value(services::ADVANCE_CLOCK, &msg::AdvanceClock { seconds })?;
        Ok(())
    }

    fn scene(&mut self) -> Result<SceneState, EvalError> {
        Ok(self.client.call(services::GET_SCENE, &msg::Empty {})?)
    }

    fn end(&mut self, label: &str) -> Result<MetricsRecord, EvalError> {
        Ok(self.client.call(services::END_SESSION, &msg::EndSession { task: label.into() })?)
    }

    /// Drags each ghost to its goal, previews the landing, then executes
    /// all moves at once.
    fn hsi(&mut self, fixture: &Fixture) -> Result<MetricsRecord, EvalError> {
        let scene = self.scene()?;
        let mut moves = Vec::new();
        self.wait(self.op.think_time)?;
        for g in &fixture.goals {
            let start = scene
                .instance(&g.instance_id)
                .ok_or_else(|| EvalError::Script(format!("unknown instance '{}'", g.instance_id)))?
                .actual_pose;
            let lifted = Pose { position: start.position + Vec3::new(0.0, 0.0, 0.05), ..start };
            let dropped = Pose { position: g.pose.position + Vec3::new(0.0, 0.0, 0.05), ..g.pose };
            let steps = ((lifted.position.distance(dropped.position) / self.op.drag_speed) * self.op.drag_rate).ceil().max(1.0) as usize;
            for k in 0..=steps {
                let s = k as f64 / steps as f64;
                let pose = Pose {
                    position: lifted.position + (dropped.position - lifted.position) * s,
                    orientation: lifted.orientation.slerp(dropped.orientation, s),
                };
                self.ghost(&g.instance_id, pose)?;
                self.wait(1.0 / self.op.drag_rate)?;
            }
            let preview: msg::SettlePreview = self.client.call(
                services::SETTLE_PREVIEW,
                &msg::InstancePose { instance_id: g.instance_id.clone(), pose: dropped },
            )?;
            self.ghost(&g.instance_id, preview.final_pose)?;
            moves.push(MoveRequest { instance_id: g.instance_id.clone(), initial_pose: start, target_pose: preview.final_pose });
            self.wait(self.op.think_time)?;
        }
        let report: ExecutionReport = self.client.call(services::EXECUTE_TASK, &TaskRequest { moves })?;
        self.execution = Some(report);
        self.wait(self.op.observe_time)?;
        self.end(&fixture.label)
    }

    fn ghost(&mut self, id: &str, pose: Pose) -> Result<(), EvalError> {
        self.client.call_value(services::SET_GHOST_POSE, &msg::InstancePose { instance_id: id.into(), pose })?;
        Ok(())
    }

    fn tool(&mut self) -> Result<Pose, EvalError> {
        let mut latest = None;
        for f in self.client.drain_topics()? {
            if f.name == topics::JOINT_STATES {
                latest = Some(f);
            }
        }
        let angles = match latest {
            Some(f) => f.payload_as::<msg::JointStates>().ok().and_then(|j| j.angles()),
            None => None,
        };
        let angles = match angles {
            Some(a) => a,
            None => self.scene()?.joints.angles,
        };
        Ok(forward_kinematics(&self.chain, &angles))
    }

    /// Streams poses from the current tool pose through `waypoints`, then
    /// waits for the arm to arrive. Returns false if it never does.
    fn stream(&mut self, waypoints: &[Pose]) -> Result<bool, EvalError> {
        let dt = 1.0 / self.op.ee_rate;
        let mut from = self.tool()?;
        for to in waypoints {
            let d = from.position.distance(to.position);
            let turn = from.orientation.angle_to(to.orientation);
            let steps = (d / (self.op.ee_speed * dt)).max(turn / (self.op.ee_turn_rate * dt)).ceil().max(1.0) as usize;
            for k in 1..=steps {
                let s = k as f64 / steps as f64;
                let pose = Pose {
                    position: from.position + (to.position - from.position) * s,
                    orientation: from.orientation.slerp(to.orientation, s),
                };
                self.client.publish(topics::TARGET_POSE, &pose)?;
                self.wait(dt)?;
            }
            from = *to;
        }
        let Some(goal) = waypoints.last() else { return Ok(true) };
        let mut waited = 0.0;
        loop {
            if self.tool()?.position.distance(goal.position) <= self.op.arrive_tolerance {
                return Ok(true);
            }
            if waited >= self.op.arrive_timeout {
                return Ok(false);
            }
            self.client.publish(topics::TARGET_POSE, goal)?;
            self.wait(dt)?;
            waited += dt;
        }
    }

    /// Streams the tool to each object, grasps, carries it to its goal and
    /// releases.
    fn ee(&mut self, fixture: &Fixture) -> Result<MetricsRecord, EvalError> {
        self.client.subscribe(topics::JOINT_STATES)?;
        self.wait(self.op.think_time)?;
        'goals: for g in &fixture.goals {
            let scene = self.scene()?;
            let obj = scene
                .instance(&g.instance_id)
                .ok_or_else(|| EvalError::Script(format!("unknown instance '{}'", g.instance_id)))?
                .clone();
            let hz = scene.model_of(&obj).half_extents.z;
            let highest = scene.objects.iter().map(|o| o.actual_pose.position.z + scene.model_of(o).half_extents.z).fold(0.0, f64::max);
            let grasp = teleop_core::kinematics::top_down_pose(&obj.actual_pose, hz, 0.0);
            let above = |p: &Pose, h: f64| Pose { position: p.position + Vec3::new(0.0, 0.0, h), ..*p };
            let pick_hover = above(&grasp, self.op.hover);
            let here = self.tool()?;
            let safe = here.position.z.max(pick_hover.position.z).max(highest + self.op.hover + 0.1);
            let route = [
                Pose { position: Vec3::new(here.position.x, here.position.y, safe), ..here },
                Pose { position: Vec3::new(pick_hover.position.x, pick_hover.position.y, safe), ..pick_hover },
                pick_hover,
                grasp,
            ];
            if !self.stream(&route)? {
                break 'goals;
            }
            let grasped: GraspReport = self.client.call(services::GRASP, &msg::Empty {})?;
            if !grasped.success {
                break 'goals;
            }
            // where the tool must be for the object to sit at the goal
            let tool = self.tool()?;
            let held = self.scene()?.instance(&g.instance_id).map(|o| o.actual_pose).unwrap_or(obj.actual_pose);
            let offset = tool.inverse().compose(&held);
            let place = above(&g.pose.upright().compose(&offset.inverse()), self.op.release_gap);
            let ok = match fixture.ee_route {
                Route::UpOverDown => {
                    let place_hover = above(&place, self.op.hover);
                    let carry = safe.max(place_hover.position.z);
                    let lift = above(&grasp, carry - grasp.position.z);
                    self.stream(&[
                        lift,
                        Pose { position: Vec3::new(place.position.x, place.position.y, carry), ..place },
                        place_hover,
                        place,
                    ])?
                }
                Route::Direct => {
                    let lift = Pose { position: Vec3::new(grasp.position.x, grasp.position.y, place.position.z.max(grasp.position.z) + 0.02), ..grasp };
                    let across = Pose { position: Vec3::new(place.position.x, place.position.y, lift.position.z), ..place };
                    self.stream(&[lift, across, place])?
                }
            };
            let release: msg::ReleaseResponse = self.client.call(services::RELEASE, &msg::Empty {})?;
            if !ok || release.error.is_some() {
                break 'goals;
            }
            let back = above(&self.tool()?, self.op.hover);
            if !self.stream(&[back])? {
                break 'goals;
            }
            self.wait(self.op.think_time)?;
        }
        self.end(&fixture.label)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub task: String,
    pub mode: Mode,
    pub runs: usize,
    pub success_rate: f64,
    pub completion_mean: f64,
    pub completion_min: f64,
    pub completion_max: f64,
    pub interaction_mean: f64,
    pub interaction_min: f64,
    pub interaction_max: f64,
}

/// Per task and mode statistics, sorted by task then mode.
pub fn summarize(records: &[(MetricsRecord, bool)]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, Mode), Vec<(&MetricsRecord, bool)>> = BTreeMap::new();
    for (r, ok) in records {
        groups.entry((r.task.clone(), r.mode)).or_default().push((r, *ok));
    }
    groups
        .into_iter()
        .map(|((task, mode), rs)| {
            let n = rs.len() as f64;
            let stats = |f: fn(&MetricsRecord) -> f64| {
                let v: Vec<f64> = rs.iter().map(|(r, _)| f(r)).collect();
                (v.iter().sum::<f64>() / n, v.iter().copied().fold(f64::INFINITY, f64::min), v.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            };
            let (cm, cmin, cmax) = stats(|r| r.completion_time);
            let (im, imin, imax) = stats(|r| r.interaction_time);
            SummaryRow {
                task,
                mode,
                runs: rs.len(),
                success_rate: rs.iter().filter(|(_, ok)| *ok).count() as f64 / n,
                completion_mean: cm,
                completion_min: cmin,
                completion_max: cmax,
                interaction_mean: im,
                interaction_min: imin,
                interaction_max: imax,
            }
        })
        .collect()
}

/// Writes the summary table to `out` and bar-chart data beside it
/// (`<stem>.bars.csv`: one row per task, mode and measure).
pub fn write_report(out: &Path, rows: &[SummaryRow]) -> Result<PathBuf, EvalError> {
    let mut w = csv::Writer::from_path(out).map_err(csv_err)?;
    if rows.is_empty() {
        w.write_record([
            "task",
            "mode",
            "runs",
            "success_rate",
            "completion_mean",
            "completion_min",
            "completion_max",
            "interaction_mean",
            "interaction_min",
            "interaction_max",
        ])
        .map_err(csv_err)?;
    }
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
    let bars = out.with_file_name(format!("{stem}.bars.csv"));
    let mut b = csv::Writer::from_path(&bars).map_err(csv_err)?;
    b.write_record(["task", "mode", "measure", "value"]).map_err(csv_err)?;
    for r in rows {
        let mode = r.mode.to_string();
        for (m, v) in [
            ("completion_time", r.completion_mean),
            ("interaction_time", r.interaction_mean),
            ("success_rate", r.success_rate),
        ] {
            b.write_record([r.task.as_str(), mode.as_str(), m, &v.to_string()]).map_err(csv_err)?;
        }
    }
    b.flush()?;
    Ok(bars)
}

fn csv_err(e: csv::Error) -> EvalError {
    EvalError::Io(io::Error::other(e.to_string()))
}
