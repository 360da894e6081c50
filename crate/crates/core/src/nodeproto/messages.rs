use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bbox::BBox;

pub const PROTOCOL: &str = "occlane-node/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Detect,
    Inpaint,
    Segment,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Detect => "detect",
            Role::Inpaint => "inpaint",
            Role::Segment => "segment",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "detect" => Ok(Role::Detect),
            "inpaint" => Ok(Role::Inpaint),
            "segment" => Ok(Role::Segment),
            other => Err(format!(
                "unknown role {other:?} (expected detect, inpaint or segment)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRequest {
    pub id: u64,
    pub role: Role,
    pub inputs: BTreeMap<String, String>,
    pub scratch_dir: String,
    #[serde(default)]
    pub params: serde_json::Map<String, serde_json::Value>,
}

/// Every line on the wire is one of these, tagged by `type`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Message {
    Hello {
        protocol: String,
        role: Role,
    },
    Ready {
        protocol: String,
        role: Role,
    },
    Request(NodeRequest),
    Response {
        id: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        outputs: Option<BTreeMap<String, String>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        boxes: Option<Vec<BBox>>,
    },
    Error {
        id: Option<u64>,
        message: String,
    },
    Shutdown,
}

impl Message {
    /// One line of compact JSON, newline-terminated.
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("messages always serialize");
        s.push('\n');
        s
    }

    pub fn parse(line: &str) -> Result<Self, String> {
        serde_json::from_str(line.trim_end_matches(['\r', '\n']))
            .map_err(|e| format!("{e}: {line:?}"))
    }
}

/// What a successful call produced.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeReply {
    Outputs(BTreeMap<String, String>),
    Boxes(Vec<BBox>),
}
