//! Reference node process for the occlane-node/1 protocol.
//!
//! Usage: `occlane-refnode --role <detect|inpaint|segment> [--behavior <name>]`

use std::io::{stdin, stdout};
use std::process::ExitCode;

use occlane_core::nodeproto::{serve, Behavior, Role};

fn main() -> ExitCode {
    let mut role: Option<Role> = None;
    let mut behavior: Option<Behavior> = None;
    let mut args = std::env::args().skip(1);
    while let Some(flag) = args.next() {
        let value = args.next();
        let parsed = match (flag.as_str(), value) {
            ("--role", Some(v)) => v.parse().map(|r| role = Some(r)),
            ("--behavior", Some(v)) => v.parse().map(|b| behavior = Some(b)),
            (f, _) => Err(format!("unexpected argument {f:?}")),
        };
        if let Err(e) = parsed {
            eprintln!("occlane-refnode: {e}");
            return ExitCode::from(2);
        }
    }
    let Some(role) = role else {
        eprintln!("occlane-refnode: --role is required");
        return ExitCode::from(2);
    };
    let behavior = behavior.unwrap_or(match role {
        Role::Segment => Behavior::Identity,
        Role::Inpaint | Role::Detect => Behavior::Oracle,
    });
    match serve(role, behavior, stdin().lock(), stdout().lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("occlane-refnode: {e}");
            ExitCode::FAILURE
        }
    }
}
