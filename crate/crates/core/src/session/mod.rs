//! Session-typed channels built from one-shot channels.
//!
//! Every step of a protocol uses a fresh one-shot channel. Sending a value
//! also sends the peer's endpoint for the rest of the session, so each
//! endpoint is used exactly once and the protocol advances by returning a
//! new endpoint.
//!
//! Endpoints are consumed by value; reuse does not compile:
//!
//! ```compile_fail
//! use priority_sesh::session::{new, send, SessionType, Value, ValueKind};
//! let (a, _b) = new(&SessionType::send(ValueKind::Int, SessionType::UnitEnd));
//! let _ = send(Value::Int(1), a);
//! let _ = send(Value::Int(2), a); // use of moved value
//! ```

mod types;
mod value;

use std::fmt;

use thiserror::Error;

pub use types::{RecPair, SessionType, ValueKind};
pub use value::Value;

use crate::oneshot::{new1, new_sync1, OneShotReceiver, OneShotSender, RecvError, SyncPoint};
use crate::priority::Priority;
use crate::runtime::{self, BlockSite, LiveToken};

/// Failures of session operations.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SessionError {
    /// The peer cancelled its endpoint, explicitly or by dropping it.
    #[error("cancelled: peer abandoned the session")]
    Cancelled,
    /// The deadlock watchdog aborted the run.
    #[error("aborted by deadlock watchdog")]
    Aborted,
    /// The operation does not match the endpoint's protocol.
    #[error("protocol violation: {0}")]
    Protocol(String),
}

impl From<RecvError> for SessionError {
    fn from(e: RecvError) -> Self {
        match e {
            RecvError::Cancelled => SessionError::Cancelled,
            RecvError::Aborted => SessionError::Aborted,
        }
    }
}

type Message = (Value, Endpoint);

enum Carrier {
    Send(OneShotSender<Message>),
    Recv(OneShotReceiver<Message>),
    End(SyncPoint),
    Unit,
}

/// One side of a session, positioned at `protocol`.
pub struct Endpoint {
    protocol: SessionType,
    carrier: Carrier,
    _live: LiveToken,
}

impl Endpoint {
    /// The protocol still to be followed, head unfolded.
    pub fn protocol(&self) -> &SessionType {
        &self.protocol
    }
}

impl fmt::Debug for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Endpoint({})", self.protocol)
    }
}

fn endpoint(protocol: SessionType, carrier: Carrier) -> Endpoint {
    Endpoint { protocol, carrier, _live: LiveToken::acquire() }
}

/// The result of an offer: our endpoint for the branch the peer selected.
#[derive(Debug)]
pub enum Branch {
    Left(Endpoint),
    Right(Endpoint),
}

fn violation(op: &str, e: &Endpoint) -> SessionError {
    SessionError::Protocol(format!("cannot {op} on endpoint at {}", e.protocol))
}

fn site(op: &'static str, priority: Option<u64>) -> BlockSite {
    BlockSite::new(op, priority.map(Priority::At))
}

/// Creates a channel: one endpoint following `s`, the other its dual.
pub fn new(s: &SessionType) -> (Endpoint, Endpoint) {
    let here = s.unfold();
    let there = here.dual();
    match &here {
        SessionType::Send { .. } => {
            let (tx, rx) = new1();
            (endpoint(here, Carrier::Send(tx)), endpoint(there, Carrier::Recv(rx)))
        }
        SessionType::Recv { .. } => {
            let (tx, rx) = new1();
            (endpoint(here, Carrier::Recv(rx)), endpoint(there, Carrier::Send(tx)))
        }
        SessionType::End { .. } => {
            let (a, b) = new_sync1();
            (endpoint(here, Carrier::End(a)), endpoint(there, Carrier::End(b)))
        }
        SessionType::UnitEnd => (endpoint(here, Carrier::Unit), endpoint(there, Carrier::Unit)),
        SessionType::Named { .. } => unreachable!("unfold removes named heads"),
    }
}

/// Sends `v` and returns the endpoint for the rest of the session. Never
/// blocks; if the peer has cancelled, the value is discarded.
pub fn send(v: Value, e: Endpoint) -> Result<Endpoint, SessionError> {
    let (payload, cont) = match &e.protocol {
        SessionType::Send { payload, cont, .. } => (payload, cont),
        _ => return Err(violation("send", &e)),
    };
    if !v.conforms(payload) {
        return Err(SessionError::Protocol(format!("value {v} does not conform to {payload}")));
    }
    let (here, there) = new(cont);
    match e.carrier {
        Carrier::Send(tx) => tx.send((v, there)),
        _ => unreachable!("send head always carries a sender"),
    }
    Ok(here)
}

fn recv_inner(e: Endpoint, op: &'static str) -> Result<(Value, Endpoint), SessionError> {
    let priority = match &e.protocol {
        SessionType::Recv { priority, .. } => *priority,
        _ => return Err(violation(op, &e)),
    };
    match e.carrier {
        Carrier::Recv(rx) => Ok(rx.recv_at(site(op, priority))?),
        _ => unreachable!("recv head always carries a receiver"),
    }
}

/// Blocks for the next value and the endpoint for the rest of the session.
pub fn recv(e: Endpoint) -> Result<(Value, Endpoint), SessionError> {
    recv_inner(e, "recv")
}

/// Synchronously ends the session together with the peer.
pub fn close(e: Endpoint) -> Result<(), SessionError> {
    let priority = match &e.protocol {
        SessionType::End { priority } => *priority,
        _ => return Err(violation("close", &e)),
    };
    match e.carrier {
        Carrier::End(point) => Ok(point.sync_at(site("close", priority))?),
        _ => unreachable!("end head always carries a sync point"),
    }
}

/// Abandons an endpoint. The peer's next receive or close fails; its sends
/// still succeed.
pub fn cancel(e: Endpoint) {
    drop(e)
}

fn select(e: Endpoint, left: bool) -> Result<Endpoint, SessionError> {
    let op = if left { "select_left" } else { "select_right" };
    let branch = match &e.protocol {
        SessionType::Send { payload: ValueKind::Sum(l, r), .. } => match if left { &**l } else { &**r } {
            ValueKind::Chan(peer) => peer.dual(),
            _ => return Err(violation(op, &e)),
        },
        _ => return Err(violation(op, &e)),
    };
    let (here, there) = new(&branch);
    let tagged = if left { Value::left(Value::Chan(there)) } else { Value::right(Value::Chan(there)) };
    let _unit_end = send(tagged, e)?;
    Ok(here)
}

/// Picks the left branch of a choice.
pub fn select_left(e: Endpoint) -> Result<Endpoint, SessionError> {
    select(e, true)
}

/// Picks the right branch of a choice.
pub fn select_right(e: Endpoint) -> Result<Endpoint, SessionError> {
    select(e, false)
}

/// Waits for the peer's choice.
pub fn offer(e: Endpoint) -> Result<Branch, SessionError> {
    let (v, _unit_end) = recv_inner(e, "offer")?;
    match v {
        Value::Left(inner) => match *inner {
            Value::Chan(ep) => Ok(Branch::Left(ep)),
            other => Err(SessionError::Protocol(format!("offer received {other}"))),
        },
        Value::Right(inner) => match *inner {
            Value::Chan(ep) => Ok(Branch::Right(ep)),
            other => Err(SessionError::Protocol(format!("offer received {other}"))),
        },
        other => Err(SessionError::Protocol(format!("offer received {other}"))),
    }
}

/// Waits for the peer's choice and hands the selected branch to `handler`.
pub fn offer_either<R>(e: Endpoint, handler: impl FnOnce(Branch) -> R) -> Result<R, SessionError> {
    offer(e).map(handler)
}

/// Runs `body` on a new thread. If the body panics, the endpoints it holds
/// are dropped during unwinding and their peers observe cancellation.
pub fn fork(body: impl FnOnce() + Send + 'static) {
    runtime::spawn_thread(body)
}

/// Creates a channel, hands one endpoint to `k1` on a new thread, and runs
/// `k2` on the other in the calling thread.
///
/// Programs that only create channels this way form a tree of processes.
pub fn connect<R>(k1: impl FnOnce(Endpoint) + Send + 'static, k2: impl FnOnce(Endpoint) -> R, s: &SessionType) -> R {
    let (a, b) = new(s);
    fork(move || k1(a));
    k2(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::thread;
    use std::time::Duration;

    fn int_then(cont: SessionType) -> SessionType {
        SessionType::send(ValueKind::Int, cont)
    }

    #[test]
    fn send_then_recv_round_trip() {
        let (a, b) = new(&int_then(SessionType::UnitEnd));
        let _ = send(Value::Int(7), a).unwrap();
        let (v, rest) = recv(b).unwrap();
        assert_eq!(v, Value::Int(7));
        assert_eq!(rest.protocol(), &SessionType::UnitEnd);
    }

    #[test]
    fn unit_end_send_recovers_one_shot() {
        let (a, _b) = new(&SessionType::send(ValueKind::Unit, SessionType::UnitEnd));
        let rest = send(Value::Unit, a).unwrap();
        assert_eq!(rest.protocol(), &SessionType::UnitEnd);
    }

    #[test]
    fn new_unit_end_is_inert() {
        let (a, b) = new(&SessionType::UnitEnd);
        drop(a);
        drop(b);
    }

    #[test]
    fn close_both_sides() {
        let (a, b) = new(&SessionType::end());
        let h = thread::spawn(move || close(a));
        close(b).unwrap();
        h.join().unwrap().unwrap();
    }

    #[test]
    fn close_against_cancel_fails() {
        let (a, b) = new(&SessionType::end());
        cancel(a);
        assert_eq!(close(b), Err(SessionError::Cancelled));
    }

    #[test]
    fn recv_after_cancel_fails_send_succeeds() {
        let (a, b) = new(&int_then(SessionType::end()));
        cancel(a);
        assert_eq!(recv(b).unwrap_err(), SessionError::Cancelled);

        let (a, b) = new(&int_then(SessionType::end()));
        cancel(b);
        let rest = send(Value::Int(1), a).unwrap();
        assert_eq!(close(rest), Err(SessionError::Cancelled));
    }

    #[test]
    fn wrong_head_and_payload_are_rejected() {
        let (a, b) = new(&int_then(SessionType::UnitEnd));
        assert!(matches!(recv(a), Err(SessionError::Protocol(_))));
        assert!(matches!(close(b), Err(SessionError::Protocol(_))));
        let (a, _b) = new(&int_then(SessionType::UnitEnd));
        assert!(matches!(send(Value::Unit, a), Err(SessionError::Protocol(_))));
    }

    #[test]
    fn choice_round_trip() {
        let s = SessionType::select(int_then(SessionType::UnitEnd), SessionType::end());
        for left in [true, false] {
            let (a, b) = new(&s);
            let h = thread::spawn(move || {
                if left {
                    let k = select_left(a).unwrap();
                    send(Value::Int(5), k).unwrap();
                } else {
                    close(select_right(a).unwrap()).unwrap();
                }
            });
            let got = offer_either(b, |br| match br {
                Branch::Left(k) => recv(k).unwrap().0,
                Branch::Right(k) => {
                    close(k).unwrap();
                    Value::Unit
                }
            })
            .unwrap();
            h.join().unwrap();
            assert_eq!(got, if left { Value::Int(5) } else { Value::Unit });
        }
    }

    #[test]
    fn select_then_cancel_continuation_fails_peer() {
        let s = SessionType::select(int_then(SessionType::UnitEnd), SessionType::end());
        let (a, b) = new(&s);
        cancel(select_left(a).unwrap());
        match offer(b).unwrap() {
            Branch::Left(k) => assert_eq!(recv(k).unwrap_err(), SessionError::Cancelled),
            Branch::Right(_) => panic!("wrong branch"),
        }
    }

    #[test]
    fn delegation() {
        let inner = int_then(SessionType::UnitEnd);
        let outer = SessionType::send(ValueKind::chan(inner.clone()), SessionType::UnitEnd);
        let (i1, i2) = new(&inner);
        let (o1, o2) = new(&outer);
        send(Value::Chan(i1), o1).unwrap();
        let (v, _) = recv(o2).unwrap();
        send(Value::Int(9), v.into_chan().unwrap()).unwrap();
        assert_eq!(recv(i2).unwrap().0, Value::Int(9));
    }

    #[test]
    fn forked_crash_cancels() {
        let (a, b) = new(&int_then(SessionType::UnitEnd));
        fork(move || {
            let _a = a;
            panic!("crash mid-protocol");
        });
        assert_eq!(recv(b).unwrap_err(), SessionError::Cancelled);
    }

    #[test]
    fn blocked_receiver_woken_by_cancel() {
        let (a, b) = new(&int_then(SessionType::UnitEnd));
        let h = thread::spawn(move || recv(b).map(|(v, _)| v));
        thread::sleep(Duration::from_millis(20));
        cancel(a);
        assert_eq!(h.join().unwrap(), Err(SessionError::Cancelled));
    }

    #[test]
    fn connect_with_cancel_and_recv() {
        let r = connect(cancel, |e| recv(e).map(|(v, _)| v), &int_then(SessionType::UnitEnd));
        assert_eq!(r, Err(SessionError::Cancelled));
    }
}
