//! Reference node: the serving side of the protocol with a few fixed
//! behaviours, some of them deliberately broken for exercising the client.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::messages::{Message, NodeRequest, Role, PROTOCOL};
use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::inpaint::inpaint_oracle;
use crate::io;
use crate::raster::RasterMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Behavior {
    /// segment: mask = luma ≥ 128.
    Identity,
    /// inpaint: hole pixels from `params.clear`; detect: `params.gt_boxes`.
    Oracle,
    /// detect: `params.boxes`.
    Constant,
    /// Answers the handshake announcing a different role.
    WrongRole,
    /// Never answers requests.
    Hang,
    /// Answers requests with a line that is not JSON.
    Garbage,
    /// Answers every request with an error message.
    Fail,
    /// Never exits on its own once asked to shut down.
    Stubborn,
}

impl FromStr for Behavior {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "identity" => Behavior::Identity,
            "oracle" => Behavior::Oracle,
            "constant" => Behavior::Constant,
            "wrong-role" => Behavior::WrongRole,
            "hang" => Behavior::Hang,
            "garbage" => Behavior::Garbage,
            "fail" => Behavior::Fail,
            "stubborn" => Behavior::Stubborn,
            other => return Err(format!("unknown behavior {other:?}")),
        })
    }
}

/// Handles requests from `input` until shutdown or end of input. Returns an
/// error only when the handshake is refused or the output breaks.
pub fn serve<R: BufRead, W: Write>(
    role: Role,
    behavior: Behavior,
    input: R,
    mut output: W,
) -> Result<()> {
    let mut lines = input.lines();
    let mut raw = |text: &str| -> Result<()> {
        output
            .write_all(text.as_bytes())
            .and_then(|_| output.flush())
            .map_err(|e| Error::Protocol(format!("writing to parent: {e}")))
    };
    macro_rules! send {
        ($msg:expr) => {
            raw(&$msg.to_line())
        };
    }

    let first = loop {
        match lines.next() {
            Some(Ok(l)) if l.trim().is_empty() => continue,
            Some(Ok(l)) => break l,
            _ => return Ok(()),
        }
    };
    match Message::parse(&first) {
        Ok(Message::Hello {
            protocol,
            role: asked,
        }) if protocol == PROTOCOL && asked == role => {}
        Ok(Message::Hello {
            protocol,
            role: asked,
        }) => {
            let message = format!(
                "this node serves {role} over {PROTOCOL}; asked for {asked} over {protocol}"
            );
            send!(Message::Error {
                id: None,
                message: message.clone()
            })?;
            return Err(Error::Protocol(message));
        }
        _ => {
            let message = format!("expected hello, got {first:?}");
            send!(Message::Error {
                id: None,
                message: message.clone()
            })?;
            return Err(Error::Protocol(message));
        }
    }
    let announced = match (behavior, role) {
        (Behavior::WrongRole, Role::Inpaint) => Role::Segment,
        (Behavior::WrongRole, _) => Role::Inpaint,
        _ => role,
    };
    send!(Message::Ready {
        protocol: PROTOCOL.into(),
        role: announced
    })?;

    for line in lines {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        let req = match Message::parse(&line) {
            Ok(Message::Shutdown) if behavior == Behavior::Stubborn => loop {
                std::thread::sleep(std::time::Duration::from_secs(3600));
            },
            Ok(Message::Shutdown) => return Ok(()),
            Ok(Message::Request(r)) => r,
            Ok(other) => {
                send!(Message::Error {
                    id: None,
                    message: format!("unexpected message {other:?}")
                })?;
                continue;
            }
            Err(e) => {
                send!(Message::Error {
                    id: None,
                    message: format!("malformed request: {e}")
                })?;
                continue;
            }
        };
        match behavior {
            Behavior::Hang => continue,
            Behavior::Garbage => {
                raw(&format!("this is not json (request {})\n", req.id))?;
                continue;
            }
            Behavior::Fail => {
                send!(Message::Error {
                    id: Some(req.id),
                    message: "configured to fail".into()
                })?;
                continue;
            }
            _ => {}
        }
        let reply = if req.role != role {
            Err(Error::Protocol(format!(
                "request for role {} sent to a {role} node",
                req.role
            )))
        } else {
            handle(role, behavior, &req)
        };
        match reply {
            Ok(msg) => send!(msg)?,
            Err(e) => send!(Message::Error {
                id: Some(req.id),
                message: e.to_string()
            })?,
        }
    }
    Ok(())
}

fn input_path(req: &NodeRequest, name: &str) -> Result<PathBuf> {
    req.inputs
        .get(name)
        .map(PathBuf::from)
        .ok_or_else(|| Error::Protocol(format!("request lacks input {name:?}")))
}

fn param_path(req: &NodeRequest, name: &str) -> Result<PathBuf> {
    req.params
        .get(name)
        .and_then(|v| v.as_str())
        .map(PathBuf::from)
        .ok_or_else(|| Error::Protocol(format!("request lacks string param {name:?}")))
}

fn param_boxes(req: &NodeRequest, name: &str) -> Result<Vec<BBox>> {
    let v = req
        .params
        .get(name)
        .cloned()
        .ok_or_else(|| Error::Protocol(format!("request lacks param {name:?}")))?;
    Ok(serde_json::from_value(v)?)
}

fn out_path(req: &NodeRequest, name: &str) -> PathBuf {
    Path::new(&req.scratch_dir).join(format!("resp{:06}_{name}.png", req.id))
}

fn handle(role: Role, behavior: Behavior, req: &NodeRequest) -> Result<Message> {
    let outputs = |k: &str, p: &Path| Message::Response {
        id: req.id,
        outputs: Some(BTreeMap::from([(k.to_string(), p.display().to_string())])),
        boxes: None,
    };
    match (role, behavior) {
        (Role::Segment, Behavior::Identity) => {
            let img = io::load_image(input_path(req, "image")?)?;
            let data = img
                .luma()
                .iter()
                .map(|&l| if l.round() >= 128.0 { 255 } else { 0 })
                .collect();
            let mask = RasterMask::from_vec(img.width(), img.height(), data)?;
            let p = out_path(req, "mask");
            io::save_mask(&mask, &p)?;
            Ok(outputs("mask", &p))
        }
        (Role::Inpaint, Behavior::Oracle) => {
            let img = io::load_image(input_path(req, "image")?)?;
            let hole = io::load_mask(input_path(req, "mask")?)?;
            let clear = io::load_image(param_path(req, "clear")?)?;
            let p = out_path(req, "image");
            io::save_image(&inpaint_oracle(&img, &hole, &clear)?, &p)?;
            Ok(outputs("image", &p))
        }
        (Role::Detect, Behavior::Oracle | Behavior::Constant) => {
            let key = if behavior == Behavior::Oracle {
                "gt_boxes"
            } else {
                "boxes"
            };
            Ok(Message::Response {
                id: req.id,
                outputs: None,
                boxes: Some(param_boxes(req, key)?),
            })
        }
        (Role::Detect, Behavior::Stubborn | Behavior::WrongRole) => Ok(Message::Response {
            id: req.id,
            outputs: None,
            boxes: Some(Vec::new()),
        }),
        _ => Err(Error::Params(format!(
            "behavior {behavior:?} is not defined for role {role}"
        ))),
    }
}
