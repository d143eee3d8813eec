//! Priority-graded session computations.
//!
//! A [`Sesh`] is a deferred computation together with the [`Bounds`] of the
//! communication it performs. Composition with [`bind`] checks that the
//! first computation finishes strictly before the second starts; if every
//! composition in a program passes, running it cannot deadlock.
//!
//! Bounds are values rather than types, so a continuation must declare its
//! bounds when it is bound. The declaration is checked against the
//! computation the continuation actually builds before any of its
//! communication happens.

use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;
use thiserror::Error;

use crate::priority::{seq_bounds, Bounds, Priority, SequenceError};
use crate::runtime::{self, panic_message, DeadlockReport, Outcome, Runtime};
use crate::session::{self, Branch, Endpoint, SessionError, SessionType, Value};

/// Errors raised while building or running a graded computation.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SeshError {
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    /// A continuation built a computation whose bounds differ from the ones
    /// it declared.
    #[error("continuation declared bounds {declared} but produced {actual}")]
    BoundsMismatch { declared: Bounds, actual: Bounds },
    #[error("cannot weaken {from} to {to}: the new window must contain the old one")]
    Weaken { from: Bounds, to: Bounds },
    /// The endpoint's protocol cannot be used by the requested operation.
    #[error("protocol: {0}")]
    Protocol(String),
    #[error(transparent)]
    Session(#[from] SessionError),
}

impl SeshError {
    /// `true` for failures caused by a peer abandoning its endpoint.
    pub fn is_cancellation(&self) -> bool {
        matches!(self, SeshError::Session(SessionError::Cancelled))
    }
}

type Body<R> = Box<dyn FnOnce() -> Result<R, SeshError> + Send>;

/// A deferred computation that communicates within `bounds`.
pub struct Sesh<R> {
    bounds: Bounds,
    body: Body<R>,
}

impl<R: Send + 'static> Sesh<R> {
    fn from_fn(bounds: Bounds, body: impl FnOnce() -> Result<R, SeshError> + Send + 'static) -> Self {
        Sesh { bounds, body: Box::new(body) }
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    fn run(self) -> Result<R, SeshError> {
        (self.body)()
    }

    /// Post-composes a pure function; bounds are unchanged.
    pub fn map<S: Send + 'static>(self, f: impl FnOnce(R) -> S + Send + 'static) -> Sesh<S> {
        let body = self.body;
        Sesh::from_fn(self.bounds, move || body().map(f))
    }

    /// Post-composes a pure function that may fail; bounds are unchanged.
    pub fn try_map<S: Send + 'static>(self, f: impl FnOnce(R) -> Result<S, SeshError> + Send + 'static) -> Sesh<S> {
        let body = self.body;
        Sesh::from_fn(self.bounds, move || body().and_then(f))
    }
}

impl<R> std::fmt::Debug for Sesh<R> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Sesh{}", self.bounds)
    }
}

/// A computation that performs no communication.
pub fn ireturn<R: Send + 'static>(v: R) -> Sesh<R> {
    Sesh::from_fn(Bounds::PURE, move || Ok(v))
}

fn continue_with<A, B>(
    k: impl FnOnce(A) -> Result<Sesh<B>, SeshError> + Send + 'static,
    a: A,
    declared: Bounds,
) -> Result<B, SeshError>
where
    B: Send + 'static,
{
    let next = k(a)?;
    if next.bounds != declared {
        return Err(SeshError::BoundsMismatch { declared, actual: next.bounds });
    }
    next.run()
}

/// Sequences `m` before the continuation `k`, which must build a
/// computation with bounds exactly `declared`.
///
/// Fails immediately unless `m.bounds().upper < declared.lower`.
pub fn bind<A, B>(
    m: Sesh<A>,
    declared: Bounds,
    k: impl FnOnce(A) -> Result<Sesh<B>, SeshError> + Send + 'static,
) -> Result<Sesh<B>, SeshError>
where
    A: Send + 'static,
    B: Send + 'static,
{
    let bounds = seq_bounds(m.bounds, declared)?;
    Ok(bind_with(m, bounds, declared, k))
}

/// Like [`bind`] but without the ordering check. Used to run programs whose
/// priorities were deliberately not checked.
pub fn bind_unchecked<A, B>(
    m: Sesh<A>,
    declared: Bounds,
    k: impl FnOnce(A) -> Result<Sesh<B>, SeshError> + Send + 'static,
) -> Sesh<B>
where
    A: Send + 'static,
    B: Send + 'static,
{
    let bounds = m.bounds.union(&declared);
    bind_with(m, bounds, declared, k)
}

fn bind_with<A, B>(
    m: Sesh<A>,
    bounds: Bounds,
    declared: Bounds,
    k: impl FnOnce(A) -> Result<Sesh<B>, SeshError> + Send + 'static,
) -> Sesh<B>
where
    A: Send + 'static,
    B: Send + 'static,
{
    Sesh::from_fn(bounds, move || {
        let a = m.run()?;
        continue_with(k, a, declared)
    })
}

/// Loosens the bounds of `m`. The new window must contain the old one.
pub fn weaken<R: Send + 'static>(m: Sesh<R>, to: Bounds) -> Result<Sesh<R>, SeshError> {
    if !to.contains(&m.bounds) {
        return Err(SeshError::Weaken { from: m.bounds, to });
    }
    Ok(Sesh { bounds: to, body: m.body })
}

fn check_graded(s: &SessionType) -> Result<(), SeshError> {
    if s.is_recursive() {
        return Err(SeshError::Protocol(format!("recursive protocol {s} cannot be used with priorities")));
    }
    if s.priorities().iter().any(Option::is_none) {
        return Err(SeshError::Protocol(format!("protocol {s} lacks priorities")));
    }
    Ok(())
}

/// Creates a channel. Pure.
pub fn g_new(s: &SessionType) -> Result<Sesh<(Endpoint, Endpoint)>, SeshError> {
    check_graded(s)?;
    let s = s.clone();
    Ok(Sesh::from_fn(Bounds::PURE, move || Ok(session::new(&s))))
}

/// Runs `m` on a new thread. Pure: the child's bounds do not constrain the
/// parent.
///
/// Cancellation in the child only ends the child. Any other failure is
/// reported by [`run_sesh`] once all threads have finished.
pub fn g_fork(m: Sesh<()>) -> Sesh<()> {
    Sesh::from_fn(Bounds::PURE, move || {
        session::fork(move || {
            if let Err(e) = m.run() {
                if !matches!(e, SeshError::Session(SessionError::Cancelled | SessionError::Aborted)) {
                    std::panic::resume_unwind(Box::new(e));
                }
            }
        });
        Ok(())
    })
}

/// Cancels an endpoint. Pure.
pub fn g_cancel(e: Endpoint) -> Sesh<()> {
    Sesh::from_fn(Bounds::PURE, move || {
        session::cancel(e);
        Ok(())
    })
}

fn head(e: &Endpoint, op: &str, ok: impl Fn(&SessionType) -> bool) -> Result<u64, SeshError> {
    let s = e.protocol();
    match s.head_priority() {
        Some(o) if ok(s) => Ok(o),
        _ => Err(SeshError::Protocol(format!("cannot {op} on endpoint at {s}"))),
    }
}

fn is_send(s: &SessionType) -> bool {
    matches!(s, SessionType::Send { .. })
}

fn is_recv(s: &SessionType) -> bool {
    matches!(s, SessionType::Recv { .. })
}

/// Sends at the priority of the endpoint's head.
pub fn g_send(v: Value, e: Endpoint) -> Result<Sesh<Endpoint>, SeshError> {
    let o = head(&e, "send", is_send)?;
    Ok(Sesh::from_fn(Bounds::exact(o), move || Ok(session::send(v, e)?)))
}

/// Receives at the priority of the endpoint's head.
pub fn g_recv(e: Endpoint) -> Result<Sesh<(Value, Endpoint)>, SeshError> {
    let o = head(&e, "recv", is_recv)?;
    Ok(Sesh::from_fn(Bounds::exact(o), move || Ok(session::recv(e)?)))
}

/// Closes at the priority of the endpoint's head.
pub fn g_close(e: Endpoint) -> Result<Sesh<()>, SeshError> {
    let o = head(&e, "close", |s| matches!(s, SessionType::End { .. }))?;
    Ok(Sesh::from_fn(Bounds::exact(o), move || Ok(session::close(e)?)))
}

pub fn g_select_left(e: Endpoint) -> Result<Sesh<Endpoint>, SeshError> {
    let o = head(&e, "select", is_send)?;
    Ok(Sesh::from_fn(Bounds::exact(o), move || Ok(session::select_left(e)?)))
}

pub fn g_select_right(e: Endpoint) -> Result<Sesh<Endpoint>, SeshError> {
    let o = head(&e, "select", is_send)?;
    Ok(Sesh::from_fn(Bounds::exact(o), move || Ok(session::select_right(e)?)))
}

/// Offers a choice at priority `o`; the handler's computation must have
/// bounds exactly `declared`, and `o < declared.lower` is required.
pub fn g_offer_either<R: Send + 'static>(
    e: Endpoint,
    declared: Bounds,
    handler: impl FnOnce(Branch) -> Result<Sesh<R>, SeshError> + Send + 'static,
) -> Result<Sesh<R>, SeshError> {
    let o = head(&e, "offer", is_recv)?;
    let bounds = seq_bounds(Bounds::exact(o), declared)?;
    Ok(Sesh::from_fn(bounds, move || {
        let branch = session::offer(e)?;
        continue_with(handler, branch, declared)
    }))
}

/// How [`run_sesh`] detects deadlocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DeadlockPolicy {
    /// Abort as soon as every thread is blocked.
    pub precise: bool,
    /// Abort when the run takes longer than this.
    pub timeout: Duration,
}

impl Default for DeadlockPolicy {
    fn default() -> Self {
        DeadlockPolicy { precise: true, timeout: Duration::from_secs(5) }
    }
}

/// Why [`run_sesh`] did not produce a result.
#[derive(Debug, Error)]
pub enum RunError {
    #[error("deadlock detected\n{0}")]
    Deadlock(DeadlockReport),
    #[error(transparent)]
    Failed(SeshError),
    #[error("thread panicked: {0}")]
    Panicked(String),
    /// Endpoints created during the run were still alive at its end.
    #[error("{0} endpoint(s) escaped the session run")]
    Escaped(isize),
    #[error("run_sesh called from inside a running session")]
    Nested,
}

/// How long aborted threads get to wind down after a deadlock.
const DRAIN: Duration = Duration::from_secs(1);

/// Executes `m` and every thread it forks.
pub fn run_sesh<R: Send + 'static>(m: Sesh<R>, policy: DeadlockPolicy) -> Result<R, RunError> {
    if runtime::current().is_some() {
        return Err(RunError::Nested);
    }
    let rt = Runtime::new(policy.precise);
    let slot: Arc<Mutex<Option<Result<R, SeshError>>>> = Arc::new(Mutex::new(None));
    let root_slot = Arc::clone(&slot);
    rt.spawn(move || {
        let r = m.run();
        *root_slot.lock() = Some(r);
    });
    if let Outcome::Deadlock(report) = rt.wait(policy.timeout) {
        rt.abort();
        rt.wait_exit(DRAIN);
        return Err(RunError::Deadlock(report));
    }
    rt.wait_exit(DRAIN);
    let root = slot.lock().take();
    let panic = rt.take_panic();
    let result = match root {
        Some(Ok(v)) => v,
        Some(Err(e)) => return Err(RunError::Failed(e)),
        None => {
            let msg = panic.as_deref().map(panic_message).unwrap_or_default();
            return Err(RunError::Panicked(msg));
        }
    };
    if let Some(payload) = panic {
        return Err(match payload.downcast::<SeshError>() {
            Ok(e) => RunError::Failed(*e),
            Err(p) => RunError::Panicked(panic_message(&*p)),
        });
    }
    let live = rt.live_endpoints();
    if live > 0 {
        drop(result);
        return Err(RunError::Escaped(live));
    }
    Ok(result)
}

/// The bounds of an action at priority `o`.
pub fn at(o: u64) -> Bounds {
    Bounds::exact(o)
}

/// Bounds `[p, q]` for natural priorities.
pub fn window(p: u64, q: u64) -> Bounds {
    Bounds::new(Priority::At(p), Priority::At(q))
}
