//! Newline-delimited JSON env server. One request per line, one response per
//! line; see `docs/wire-protocol.md`.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Env, EnvAction, FeatureId, MdpError, StepResult};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum Command {
    Reset {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Step {
        action: EnvAction,
    },
    Spec,
    Close,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Request {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol_version: Option<u32>,
    #[serde(flatten)]
    pub command: Command,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub breakdown: String,
    pub triplet: String,
    pub n_jobs: usize,
    pub n_machines: usize,
    pub max_ops: usize,
    pub n_vehicles: usize,
    /// `(name, width)` per configured feature, in vector order.
    pub features: Vec<(String, usize)>,
    pub raw: bool,
    pub action: super::ActionSpec,
    pub direct_actions: usize,
    pub reward: super::RewardSpec,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub kind: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub protocol_version: u32,
    #[serde(flatten, default, skip_serializing_if = "Option::is_none")]
    pub step: Option<StepResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<EnvSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub closed: bool,
}

impl Response {
    fn empty() -> Self {
        Response {
            protocol_version: PROTOCOL_VERSION,
            step: None,
            spec: None,
            error: None,
            closed: false,
        }
    }

    fn error(kind: &str, message: impl Into<String>) -> Self {
        Response {
            error: Some(ErrorBody {
                kind: kind.into(),
                message: message.into(),
            }),
            ..Response::empty()
        }
    }
}

fn mdp_error(e: MdpError) -> Response {
    let kind = match &e {
        MdpError::Illegal { .. } => "illegal_action",
        MdpError::Done => "episode_done",
        MdpError::NotReset => "not_reset",
        _ => "env_error",
    };
    Response::error(kind, e.to_string())
}

pub fn env_spec(env: &Env) -> EnvSpec {
    let inst = env.instance();
    let (n, m) = (inst.n_jobs(), inst.n_machines());
    EnvSpec {
        breakdown: env.config().breakdown.name().into(),
        triplet: inst.triplet.to_string(),
        n_jobs: n,
        n_machines: m,
        max_ops: inst.max_ops(),
        n_vehicles: inst.transport.fleet_size(),
        features: env
            .config()
            .obs
            .features
            .iter()
            .map(|f: &FeatureId| (f.name().to_string(), f.width(n, m)))
            .collect(),
        raw: env.config().obs.raw,
        action: env.config().action.clone(),
        direct_actions: env.direct_action_count(),
        reward: env.config().reward.clone(),
        seed: env.seed(),
    }
}

/// Answer one request line.
pub fn handle_line(env: &mut Env, line: &str) -> Response {
    let req: Request = match serde_json::from_str(line) {
        Ok(r) => r,
        Err(e) => return Response::error("bad_request", e.to_string()),
    };
    if let Some(v) = req.protocol_version {
        if v != PROTOCOL_VERSION {
            return Response::error(
                "protocol_mismatch",
                format!("server speaks protocol {PROTOCOL_VERSION}, client sent {v}"),
            );
        }
    }
    match req.command {
        Command::Reset { seed } => {
            if let Some(s) = seed {
                env.set_seed(s);
            }
            match env.reset() {
                Ok(r) => Response {
                    step: Some(r),
                    ..Response::empty()
                },
                Err(e) => mdp_error(e),
            }
        }
        Command::Step { action } => match env.step(&action) {
            Ok(r) => Response {
                step: Some(r),
                ..Response::empty()
            },
            Err(e) => mdp_error(e),
        },
        Command::Spec => Response {
            spec: Some(env_spec(env)),
            ..Response::empty()
        },
        Command::Close => Response {
            closed: true,
            ..Response::empty()
        },
    }
}

/// Serve requests until `close` or end of input.
pub fn serve<R: BufRead, W: Write>(env: &mut Env, input: R, mut output: W) -> io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = handle_line(env, &line);
        serde_json::to_writer(&mut output, &resp)?;
        output.write_all(b"\n")?;
        output.flush()?;
        if resp.closed {
            break;
        }
    }
    Ok(())
}
