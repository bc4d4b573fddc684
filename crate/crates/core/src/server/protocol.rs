//! JSON text messages exchanged over the WebSocket, one object per message,
//! discriminated by `"type"`. Poses travel as `{"p":[x,y,z],"q":[w,x,y,z]}`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::kinematics::HandFrame;
use crate::se3::Pose;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMsg {
    HandFrame {
        t: f64,
        wrist: Pose,
        tips: [Pose; 5],
        curl: [f64; 5],
    },
    SelectSite {
        site: String,
    },
    Reset,
    RecordStart,
    RecordStop,
}

impl ClientMsg {
    pub fn hand(t: f64, hand: &HandFrame) -> Self {
        ClientMsg::HandFrame {
            t,
            wrist: hand.wrist,
            tips: hand.fingertips,
            curl: hand.curl,
        }
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("message serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMsg {
    Hello {
        model_hash: String,
        rate_hz: f64,
    },
    State(StateMsg),
    Error {
        code: ErrorCode,
        detail: String,
    },
}

impl ServerMsg {
    pub fn error(code: ErrorCode, detail: impl Into<String>) -> Self {
        ServerMsg::Error {
            code,
            detail: detail.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("message serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMsg {
    pub tick: u64,
    pub t: f64,
    pub q: Vec<f64>,
    pub bodies: BTreeMap<String, Pose>,
    pub sites: BTreeMap<String, Pose>,
    pub engaged: bool,
    pub recording: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Malformed,
    UnknownSite,
    NotRecording,
    AlreadyRecording,
    NonFiniteState,
    InvalidHandFrame,
}
