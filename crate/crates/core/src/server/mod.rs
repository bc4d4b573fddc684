//! Live session loop: hand frames in, kinematic state out, episodes
//! recorded on request.
//!
//! [`Session`] is the single-threaded correctness model: messages and
//! ticks are applied in order and everything is a pure function of that
//! order, so [`run_trace`] replays a timestamped message trace
//! deterministically. [`serve`] puts one session behind each WebSocket
//! connection and paces ticks with the wall clock.

mod live;
mod protocol;
mod session;

pub use live::{serve, write_episode, ServeOptions, ServeSummary};
pub use protocol::{ClientMsg, ErrorCode, ServerMsg, StateMsg};
pub use session::{
    Attachment, ConfigError, Session, SessionState, TickConfig, MAX_DECIMATION, MIN_DECIMATION,
};

/// A client message stamped with its arrival time (s).
#[derive(Debug, Clone, PartialEq)]
pub struct TimedMsg {
    pub t: f64,
    pub msg: ClientMsg,
}

impl TimedMsg {
    /// Hand frames carry their own timestamp; other messages need one.
    pub fn new(t: f64, msg: ClientMsg) -> Self {
        Self { t, msg }
    }
}

/// Virtual-time driver: before each message, run every tick due by its
/// timestamp; finally tick through `end_t`. Returns all outbound messages.
pub fn run_trace(session: &mut Session, trace: &[TimedMsg], end_t: f64) -> Vec<ServerMsg> {
    let mut out = Vec::new();
    for m in trace {
        out.extend(session.advance_to(m.t));
        out.extend(session.handle_message(&m.msg));
    }
    out.extend(session.advance_to(end_t));
    out
}
