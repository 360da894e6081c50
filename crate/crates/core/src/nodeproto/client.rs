use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, ExitStatus, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::{Duration, Instant};

use super::messages::{Message, NodeReply, NodeRequest, Role, PROTOCOL};
use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::io;
use crate::raster::{RasterImage, RasterMask};

/// Environment variable that overrides where session scratch directories go.
pub const SCRATCH_ENV: &str = "OCCLANE_SCRATCH";

#[derive(Debug, Clone, PartialEq)]
pub struct NodeOptions {
    pub handshake_timeout: Duration,
    pub call_timeout: Duration,
    pub shutdown_timeout: Duration,
    pub keep_scratch: bool,
    /// Parent of the session scratch directory; `OCCLANE_SCRATCH` wins over
    /// it, and the system temp dir is the fallback.
    pub scratch_root: Option<PathBuf>,
}

impl Default for NodeOptions {
    fn default() -> Self {
        NodeOptions {
            handshake_timeout: Duration::from_secs(10),
            call_timeout: Duration::from_secs(30),
            shutdown_timeout: Duration::from_secs(5),
            keep_scratch: false,
            scratch_root: None,
        }
    }
}

impl NodeOptions {
    pub fn resolved_scratch_root(&self) -> PathBuf {
        if let Some(env) = std::env::var_os(SCRATCH_ENV).filter(|v| !v.is_empty()) {
            return PathBuf::from(env);
        }
        self.scratch_root
            .clone()
            .unwrap_or_else(|| std::env::temp_dir().join("occlane-scratch"))
    }
}

enum Event {
    Line(String),
    Eof,
    Failed(String),
}

/// A running node process. Calls are strictly serial; a handle that timed
/// out or desynchronised is poisoned and refuses further calls.
pub struct NodeHandle {
    role: Role,
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<Event>,
    next_id: u64,
    poisoned: bool,
    closed: bool,
    exit: Option<ExitStatus>,
    scratch: PathBuf,
    opts: NodeOptions,
}

static SESSION: AtomicU64 = AtomicU64::new(0);

/// Starts `command` (program followed by arguments) and completes the
/// hello/ready handshake for `role`.
pub fn spawn_node(command: &[String], role: Role, opts: &NodeOptions) -> Result<NodeHandle> {
    let (program, args) = command
        .split_first()
        .ok_or_else(|| Error::Protocol("empty node command".into()))?;
    let scratch = opts.resolved_scratch_root().join(format!(
        "session-{}-{}",
        std::process::id(),
        SESSION.fetch_add(1, Ordering::Relaxed)
    ));
    std::fs::create_dir_all(&scratch).map_err(|e| Error::io(&scratch, e))?;

    let mut child = match Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
    {
        Ok(c) => c,
        Err(e) => {
            let _ = std::fs::remove_dir_all(&scratch);
            return Err(Error::Protocol(format!(
                "cannot start node {program:?}: {e}"
            )));
        }
    };
    let stdout = child.stdout.take().expect("piped stdout");
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let mut reader = BufReader::new(stdout);
        loop {
            let mut line = String::new();
            let ev = match reader.read_line(&mut line) {
                Ok(0) => Event::Eof,
                Ok(_) => Event::Line(line),
                Err(e) => Event::Failed(e.to_string()),
            };
            let done = !matches!(ev, Event::Line(_));
            if tx.send(ev).is_err() || done {
                break;
            }
        }
    });

    let mut handle = NodeHandle {
        role,
        stdin: child.stdin.take(),
        child,
        lines: rx,
        next_id: 1,
        poisoned: false,
        closed: false,
        exit: None,
        scratch,
        opts: opts.clone(),
    };
    if let Err(e) = handle.handshake() {
        handle.kill();
        return Err(e);
    }
    Ok(handle)
}

impl NodeHandle {
    pub fn role(&self) -> Role {
        self.role
    }

    pub fn scratch_dir(&self) -> &Path {
        &self.scratch
    }

    pub fn is_poisoned(&self) -> bool {
        self.poisoned
    }

    fn send(&mut self, msg: &Message) -> Result<()> {
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| Error::Protocol("node stdin already closed".into()))?;
        stdin
            .write_all(msg.to_line().as_bytes())
            .and_then(|_| stdin.flush())
            .map_err(|e| Error::Protocol(format!("node closed its input: {e}")))
    }

    /// Next non-blank line, or a timeout.
    fn recv(&mut self, deadline: Instant, budget: Duration) -> Result<Message> {
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            match self.lines.recv_timeout(left) {
                Ok(Event::Line(line)) if line.trim().is_empty() => continue,
                Ok(Event::Line(line)) => {
                    return Message::parse(&line)
                        .map_err(|e| Error::Protocol(format!("malformed line from node: {e}")))
                }
                Ok(Event::Eof) | Err(RecvTimeoutError::Disconnected) => {
                    return Err(Error::Protocol("node exited or closed its output".into()))
                }
                Ok(Event::Failed(e)) => {
                    return Err(Error::Protocol(format!("reading node output: {e}")))
                }
                Err(RecvTimeoutError::Timeout) => return Err(Error::NodeTimeout(budget)),
            }
        }
    }

    fn handshake(&mut self) -> Result<()> {
        self.send(&Message::Hello {
            protocol: PROTOCOL.into(),
            role: self.role,
        })?;
        let budget = self.opts.handshake_timeout;
        match self.recv(Instant::now() + budget, budget)? {
            Message::Ready { protocol, role } if protocol == PROTOCOL && role == self.role => {
                Ok(())
            }
            Message::Ready { protocol, role } => Err(Error::Protocol(format!(
                "handshake mismatch: asked for {} over {PROTOCOL}, node is {role} over {protocol}",
                self.role
            ))),
            Message::Error { message, .. } => Err(Error::Protocol(format!(
                "node refused handshake: {message}"
            ))),
            other => Err(Error::Protocol(format!("expected ready, got {other:?}"))),
        }
    }

    fn poison(&mut self) {
        self.poisoned = true;
        self.kill();
    }

    fn kill(&mut self) {
        self.stdin = None;
        let _ = self.child.kill();
        if let Ok(status) = self.child.wait() {
            self.exit = Some(status);
        }
    }

    /// Sends one request and waits for its reply. An error response is
    /// returned as `Err` but leaves the handle usable; timeouts and protocol
    /// violations poison it.
    pub fn call(
        &mut self,
        inputs: BTreeMap<String, String>,
        params: serde_json::Map<String, serde_json::Value>,
    ) -> Result<NodeReply> {
        if self.poisoned || self.closed {
            return Err(Error::NodePoisoned);
        }
        let id = self.next_id;
        self.next_id += 1;
        for (name, path) in &inputs {
            if !Path::new(path).exists() {
                return Err(Error::Protocol(format!(
                    "input {name:?} does not exist: {path}"
                )));
            }
        }
        let req = NodeRequest {
            id,
            role: self.role,
            inputs,
            scratch_dir: self.scratch.display().to_string(),
            params,
        };
        let budget = self.opts.call_timeout;
        let result = self
            .send(&Message::Request(req))
            .and_then(|_| self.recv(Instant::now() + budget, budget));
        let msg = match result {
            Ok(m) => m,
            Err(e) => {
                self.poison();
                return Err(e);
            }
        };
        match msg {
            Message::Response {
                id: rid,
                outputs,
                boxes,
            } if rid == id => match (outputs, boxes) {
                (Some(o), None) => Ok(NodeReply::Outputs(o)),
                (None, Some(b)) => Ok(NodeReply::Boxes(b)),
                _ => {
                    self.poison();
                    Err(Error::Protocol(format!(
                        "response {id} must carry exactly one of outputs/boxes"
                    )))
                }
            },
            Message::Error {
                id: Some(rid),
                message,
            } if rid == id => Err(Error::Protocol(format!(
                "node failed request {id}: {message}"
            ))),
            other => {
                self.poison();
                Err(Error::Protocol(format!(
                    "expected reply to request {id}, got {other:?}"
                )))
            }
        }
    }

    fn request_path(&self, id_hint: u64, name: &str) -> PathBuf {
        self.scratch.join(format!("req{id_hint:06}_{name}.png"))
    }

    fn output_path(outputs: &BTreeMap<String, String>, key: &str) -> Result<PathBuf> {
        outputs
            .get(key)
            .map(PathBuf::from)
            .ok_or_else(|| Error::Protocol(format!("response lacks output {key:?}")))
    }

    fn expect_outputs(reply: NodeReply) -> Result<BTreeMap<String, String>> {
        match reply {
            NodeReply::Outputs(o) => Ok(o),
            NodeReply::Boxes(_) => Err(Error::Protocol("expected output files, got boxes".into())),
        }
    }

    pub fn segment(
        &mut self,
        image: &RasterImage,
        params: serde_json::Map<String, serde_json::Value>,
    ) -> Result<RasterMask> {
        let path = self.request_path(self.next_id, "image");
        io::save_image(image, &path)?;
        let reply = self.call(
            BTreeMap::from([("image".to_string(), path.display().to_string())]),
            params,
        )?;
        let out = Self::output_path(&Self::expect_outputs(reply)?, "mask")?;
        let mask = io::load_mask(&out)?;
        image.same_size(&mask)?;
        Ok(mask)
    }

    pub fn inpaint(
        &mut self,
        image: &RasterImage,
        hole: &RasterMask,
        params: serde_json::Map<String, serde_json::Value>,
    ) -> Result<RasterImage> {
        let img_path = self.request_path(self.next_id, "image");
        let mask_path = self.request_path(self.next_id, "mask");
        io::save_image(image, &img_path)?;
        io::save_mask(hole, &mask_path)?;
        let inputs = BTreeMap::from([
            ("image".to_string(), img_path.display().to_string()),
            ("mask".to_string(), mask_path.display().to_string()),
        ]);
        let reply = self.call(inputs, params)?;
        let out = Self::output_path(&Self::expect_outputs(reply)?, "image")?;
        let filled = io::load_image(&out)?;
        image.same_size(&filled)?;
        Ok(filled)
    }

    pub fn detect(
        &mut self,
        image: &RasterImage,
        params: serde_json::Map<String, serde_json::Value>,
    ) -> Result<Vec<BBox>> {
        let path = self.request_path(self.next_id, "image");
        io::save_image(image, &path)?;
        match self.call(
            BTreeMap::from([("image".to_string(), path.display().to_string())]),
            params,
        )? {
            NodeReply::Boxes(b) => Ok(b),
            NodeReply::Outputs(_) => {
                Err(Error::Protocol("expected boxes, got output files".into()))
            }
        }
    }

    /// Polite shutdown, a bounded wait, then a kill. Safe to call repeatedly;
    /// returns the exit status when one was observed.
    pub fn shutdown(&mut self) -> Option<ExitStatus> {
        if !self.closed {
            self.closed = true;
            if self.exit.is_none() {
                let _ = self.send(&Message::Shutdown);
                self.stdin = None;
                let deadline = Instant::now() + self.opts.shutdown_timeout;
                loop {
                    match self.child.try_wait() {
                        Ok(Some(status)) => {
                            self.exit = Some(status);
                            break;
                        }
                        Ok(None) if Instant::now() < deadline => {
                            std::thread::sleep(Duration::from_millis(10))
                        }
                        _ => {
                            self.kill();
                            break;
                        }
                    }
                }
            }
            if !self.opts.keep_scratch {
                let _ = std::fs::remove_dir_all(&self.scratch);
            }
        }
        self.exit
    }
}

impl Drop for NodeHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}
