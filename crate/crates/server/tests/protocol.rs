use proptest::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use teleop_core::executor::{MoveRequest, TaskRequest};
use teleop_core::settle::Support;
use teleop_core::{Pose, Quat, Vec3};
use teleop_server::messages::{self as msg};
use teleop_server::metrics::{MetricsRecord, Mode, Outcome};
use teleop_server::protocol::{decode, encode, read_body, ProtocolError};
use teleop_server::{Frame, FrameKind};

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-10.0..10.0f64, Just(0.0), Just(-0.0), Just(1e-300), Just(f64::MAX), Just(f64::MIN_POSITIVE)]
}

fn pose() -> impl Strategy<Value = Pose> {
    (prop::array::uniform3(-2.0..2.0f64), prop::array::uniform4(-1.0..1.0f64))
        .prop_filter_map("degenerate", |(p, q)| Pose::new(Vec3::from(p), Quat::new_unchecked(q[0], q[1], q[2], q[3])).ok())
}

fn ident() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9_\\-é ]{0,12}"
}

fn json() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::Bool),
        any::<i64>().prop_map(Value::from),
        finite().prop_map(Value::from),
        "\\PC{0,10}".prop_map(Value::from),
    ];
    leaf.prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..4).prop_map(Value::Array),
            prop::collection::btree_map("[a-z]{1,6}", inner, 0..4).prop_map(|m| Value::Object(m.into_iter().collect())),
        ]
    })
}

#[derive(Debug, Clone)]
enum Payload {
    Pose(Pose),
    Task(TaskRequest),
    Joints(msg::JointStates),
    Objects(msg::ObjectPoses),
    Preview(msg::SettlePreview),
    Record(MetricsRecord),
    Raw(Value),
}

fn payload() -> impl Strategy<Value = Payload> {
    prop_oneof![
        pose().prop_map(Payload::Pose),
        prop::collection::vec((ident(), pose(), pose()), 0..4).prop_map(|m| Payload::Task(TaskRequest {
            moves: m.into_iter().map(|(instance_id, initial_pose, target_pose)| MoveRequest { instance_id, initial_pose, target_pose }).collect()
        })),
        (finite(), prop::array::uniform7(finite()), prop::array::uniform7(finite()), 0.0..0.085f64).prop_map(|(stamp, p, v, g)| {
            Payload::Joints(msg::JointStates {
                stamp,
                name: msg::JOINT_NAMES.iter().map(|s| s.to_string()).collect(),
                position: p.to_vec(),
                velocity: v.to_vec(),
                gripper_aperture: g,
            })
        }),
        (finite(), prop::collection::vec((ident(), ident(), pose()), 0..5)).prop_map(|(stamp, o)| Payload::Objects(msg::ObjectPoses {
            stamp,
            objects: o.into_iter().map(|(instance_id, model_id, pose)| msg::ObjectPose { instance_id, model_id, pose }).collect()
        })),
        (pose(), prop::option::of(ident()), any::<bool>()).prop_map(|(final_pose, on, stable)| Payload::Preview(msg::SettlePreview {
            final_pose,
            support: on.map_or(Support::Desktop, Support::OnObject),
            stable
        })),
        (ident(), any::<bool>(), 0.0..100.0f64, 0.0..100.0f64, any::<bool>()).prop_map(|(task, hsi, a, b, ok)| Payload::Record(MetricsRecord {
            task,
            mode: if hsi { Mode::Hsi } else { Mode::Ee },
            completion_time: a.max(b),
            interaction_time: a.min(b),
            outcome: if ok { Outcome::Success } else { Outcome::Failure },
        })),
        json().prop_map(Payload::Raw),
    ]
}

fn kind() -> impl Strategy<Value = FrameKind> {
    prop_oneof![Just(FrameKind::Topic), Just(FrameKind::Request), Just(FrameKind::Response), Just(FrameKind::Error)]
}

fn typed_round_trip<T: Serialize + DeserializeOwned + PartialEq + std::fmt::Debug>(kind: FrameKind, name: &str, id: u64, v: &T) {
    let f = match kind {
        FrameKind::Topic => Frame::topic(name, v),
        FrameKind::Request => Frame::request(name, id, v),
        FrameKind::Response => Frame::response(name, Some(id), v),
        FrameKind::Error => Frame { kind, name: name.into(), id: Some(id), payload: serde_json::to_value(v).unwrap() },
    };
    let bytes = encode(&f);
    let back = decode(&bytes).unwrap();
    assert_eq!(back, f);
    assert_eq!(encode(&back), bytes);
    // raw values are compared as frames; `payload_as` reads null as {}
    if !matches!(serde_json::to_value(v).unwrap(), Value::Null) {
        assert_eq!(&back.payload_as::<T>().unwrap(), v);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn encode_then_decode_is_identity(kind in kind(), name in ident(), id in any::<u64>(), p in payload()) {
        match &p {
            Payload::Pose(v) => typed_round_trip(kind, &name, id, v),
            Payload::Task(v) => typed_round_trip(kind, &name, id, v),
            Payload::Joints(v) => typed_round_trip(kind, &name, id, v),
            Payload::Objects(v) => typed_round_trip(kind, &name, id, v),
            Payload::Preview(v) => typed_round_trip(kind, &name, id, v),
            Payload::Record(v) => typed_round_trip(kind, &name, id, v),
            Payload::Raw(v) => typed_round_trip(kind, &name, id, v),
        }
    }

    #[test]
    fn a_stream_of_frames_reads_back_in_order(frames in prop::collection::vec((ident(), json()), 0..8)) {
        let frames: Vec<Frame> = frames.iter().map(|(n, v)| Frame::topic(n, v)).collect();
        let stream: Vec<u8> = frames.iter().flat_map(encode).collect();
        let mut r = stream.as_slice();
        for f in &frames {
            let body = read_body(&mut r).unwrap().unwrap();
            prop_assert_eq!(&teleop_server::protocol::decode_body(&body).unwrap(), f);
        }
        prop_assert!(read_body(&mut r).unwrap().is_none());
    }

    #[test]
    fn cut_streams_are_truncation_errors(v in json(), cut in 1usize..64) {
        let bytes = encode(&Frame::topic("t", &v));
        let cut = cut.min(bytes.len() - 1);
        let mut r = &bytes[..cut];
        prop_assert!(matches!(read_body(&mut r), Err(ProtocolError::Truncated)));
    }
}

#[test]
fn topic_frames_carry_no_id_on_the_wire() {
    let body = &encode(&Frame::topic("target_pose", &Pose::IDENTITY))[4..];
    let v: Value = serde_json::from_slice(body).unwrap();
    assert!(v.get("id").is_none());
    assert_eq!(v["payload"]["orientation"], serde_json::json!([1.0, 0.0, 0.0, 0.0]));
}
