//! Thread bookkeeping for the deadlock watchdog.
//!
//! Every thread started under [`crate::graded::run_sesh`] belongs to a
//! [`Runtime`]. The runtime counts runnable threads and keeps a registry of
//! blocked receives. A thread is moved from runnable to blocked by the
//! receiver itself, and moved back by whoever wakes it, while that party still
//! holds the cell lock. When the runnable count reaches zero while blocked
//! receives remain, no thread can ever make progress again.
//!
//! Lock order is always cell, then runtime. The supervisor never holds the
//! runtime lock while calling a waker.

use std::any::Any;
use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicIsize, AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex};

use crate::priority::Priority;

/// What a blocked thread is waiting for, for diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockSite {
    pub op: &'static str,
    pub priority: Option<Priority>,
}

impl BlockSite {
    pub const fn new(op: &'static str, priority: Option<Priority>) -> Self {
        BlockSite { op, priority }
    }
}

/// One line of a deadlock report.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockedThread {
    pub thread: usize,
    pub op: &'static str,
    pub priority: Option<Priority>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeadlockCause {
    /// No thread was runnable while some were blocked.
    AllBlocked,
    /// The wall-clock backstop expired first.
    Timeout,
}

/// The threads found blocked when the watchdog fired, ordered by thread id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeadlockReport {
    pub cause: DeadlockCause,
    pub blocked: Vec<BlockedThread>,
}

impl fmt::Display for DeadlockReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, b) in self.blocked.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "thread {} blocked on {} at priority ", b.thread, b.op)?;
            match b.priority {
                Some(p) => write!(f, "{p}")?,
                None => f.write_str("?")?,
            }
        }
        Ok(())
    }
}

struct Blocked {
    thread: usize,
    site: BlockSite,
    waker: Arc<dyn Fn() + Send + Sync>,
}

#[derive(Default)]
struct State {
    runnable: usize,
    blocked: BTreeMap<u64, Blocked>,
    threads: usize,
    deadlocked: bool,
    panic: Option<Box<dyn Any + Send>>,
}

pub(crate) enum Outcome {
    Finished,
    Deadlock(DeadlockReport),
}

pub(crate) struct Runtime {
    state: Mutex<State>,
    changed: Condvar,
    next_thread: AtomicUsize,
    next_token: AtomicU64,
    live_endpoints: AtomicIsize,
    aborted: AtomicBool,
    precise: bool,
}

thread_local! {
    static CURRENT: RefCell<Option<(Arc<Runtime>, usize)>> = const { RefCell::new(None) };
}

/// The runtime and thread id of the calling thread, if it runs under one.
pub(crate) fn current() -> Option<(Arc<Runtime>, usize)> {
    CURRENT.with(|c| c.borrow().clone())
}

/// Starts `body` on a new thread: under the current runtime if there is one,
/// otherwise as a plain detached thread.
pub(crate) fn spawn_thread<F>(body: F)
where
    F: FnOnce() + Send + 'static,
{
    match current() {
        Some((rt, _)) => {
            rt.spawn(body);
        }
        None => {
            std::thread::spawn(body);
        }
    }
}

struct ExitGuard(Arc<Runtime>);

impl Drop for ExitGuard {
    fn drop(&mut self) {
        let mut st = self.0.state.lock();
        st.runnable -= 1;
        st.threads -= 1;
        self.0.check(&mut st);
        self.0.changed.notify_all();
    }
}

impl Runtime {
    pub(crate) fn new(precise: bool) -> Arc<Runtime> {
        Arc::new(Runtime {
            state: Mutex::new(State::default()),
            changed: Condvar::new(),
            next_thread: AtomicUsize::new(0),
            next_token: AtomicU64::new(0),
            live_endpoints: AtomicIsize::new(0),
            aborted: AtomicBool::new(false),
            precise,
        })
    }

    pub(crate) fn spawn<F>(self: &Arc<Self>, body: F) -> usize
    where
        F: FnOnce() + Send + 'static,
    {
        let id = self.next_thread.fetch_add(1, Ordering::SeqCst);
        {
            let mut st = self.state.lock();
            st.runnable += 1;
            st.threads += 1;
        }
        let rt = Arc::clone(self);
        std::thread::Builder::new()
            .name(format!("sesh-{id}"))
            .spawn(move || {
                let _exit = ExitGuard(Arc::clone(&rt));
                CURRENT.with(|c| *c.borrow_mut() = Some((Arc::clone(&rt), id)));
                if let Err(payload) = catch_unwind(AssertUnwindSafe(body)) {
                    rt.record_panic(payload);
                }
                CURRENT.with(|c| *c.borrow_mut() = None);
            })
            .expect("failed to spawn thread");
        id
    }

    /// Keeps the first unwinding payload seen in any thread.
    fn record_panic(&self, payload: Box<dyn Any + Send>) {
        let mut st = self.state.lock();
        if st.panic.is_none() {
            st.panic = Some(payload);
        }
    }

    pub(crate) fn take_panic(&self) -> Option<Box<dyn Any + Send>> {
        self.state.lock().panic.take()
    }

    /// Marks `thread` as blocked at `site`. The returned token must be handed
    /// to [`Runtime::unblock`] by the party that wakes the thread.
    pub(crate) fn block(&self, thread: usize, site: BlockSite, waker: Arc<dyn Fn() + Send + Sync>) -> u64 {
        let token = self.next_token.fetch_add(1, Ordering::SeqCst);
        let mut st = self.state.lock();
        st.runnable -= 1;
        st.blocked.insert(token, Blocked { thread, site, waker });
        self.check(&mut st);
        token
    }

    pub(crate) fn unblock(&self, token: u64) {
        let mut st = self.state.lock();
        if st.blocked.remove(&token).is_some() {
            st.runnable += 1;
        }
    }

    pub(crate) fn is_aborted(&self) -> bool {
        self.aborted.load(Ordering::SeqCst)
    }

    fn check(&self, st: &mut State) {
        if st.runnable == 0 {
            if !st.blocked.is_empty() && self.precise {
                st.deadlocked = true;
            }
            self.changed.notify_all();
        }
    }

    fn report(st: &State, cause: DeadlockCause) -> DeadlockReport {
        let mut blocked: Vec<BlockedThread> = st
            .blocked
            .values()
            .map(|b| BlockedThread { thread: b.thread, op: b.site.op, priority: b.site.priority })
            .collect();
        blocked.sort_by_key(|b| b.thread);
        DeadlockReport { cause, blocked }
    }

    /// Waits until every thread has exited, or the watchdog fires.
    pub(crate) fn wait(&self, timeout: Duration) -> Outcome {
        let deadline = Instant::now() + timeout;
        let mut st = self.state.lock();
        loop {
            if st.deadlocked {
                return Outcome::Deadlock(Self::report(&st, DeadlockCause::AllBlocked));
            }
            if st.runnable == 0 && st.blocked.is_empty() {
                return Outcome::Finished;
            }
            if self.changed.wait_until(&mut st, deadline).timed_out() {
                if st.runnable == 0 && st.blocked.is_empty() {
                    return Outcome::Finished;
                }
                return Outcome::Deadlock(Self::report(&st, DeadlockCause::Timeout));
            }
        }
    }

    /// Waits until every thread has exited, regardless of blocking.
    pub(crate) fn wait_exit(&self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        let mut st = self.state.lock();
        while st.threads > 0 {
            if self.changed.wait_until(&mut st, deadline).timed_out() {
                return st.threads == 0;
            }
        }
        true
    }

    /// Wakes every blocked thread; their receives fail from now on.
    pub(crate) fn abort(&self) {
        self.aborted.store(true, Ordering::SeqCst);
        let wakers: Vec<_> = self.state.lock().blocked.values().map(|b| Arc::clone(&b.waker)).collect();
        for wake in wakers {
            wake();
        }
    }

    pub(crate) fn live_endpoints(&self) -> isize {
        self.live_endpoints.load(Ordering::SeqCst)
    }
}

/// Counts an endpoint as live in the runtime it was created under.
/// Renders an unwinding payload.
pub(crate) fn panic_message(payload: &(dyn Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "thread panicked".to_string()
    }
}

pub(crate) struct LiveToken(Option<Arc<Runtime>>);

impl LiveToken {
    pub(crate) fn acquire() -> Self {
        LiveToken(current().map(|(rt, _)| {
            rt.live_endpoints.fetch_add(1, Ordering::SeqCst);
            rt
        }))
    }
}

impl Drop for LiveToken {
    fn drop(&mut self) {
        if let Some(rt) = &self.0 {
            rt.live_endpoints.fetch_sub(1, Ordering::SeqCst);
        }
    }
}

impl fmt::Debug for LiveToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("LiveToken")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_rendering() {
        let r = DeadlockReport {
            cause: DeadlockCause::AllBlocked,
            blocked: vec![
                BlockedThread { thread: 0, op: "recv", priority: Some(Priority::At(1)) },
                BlockedThread { thread: 1, op: "close", priority: None },
            ],
        };
        assert_eq!(r.to_string(), "thread 0 blocked on recv at priority 1\nthread 1 blocked on close at priority ?");
    }

    #[test]
    fn finishes_when_all_threads_exit() {
        let rt = Runtime::new(true);
        for _ in 0..4 {
            rt.spawn(|| std::thread::sleep(Duration::from_millis(5)));
        }
        assert!(matches!(rt.wait(Duration::from_secs(5)), Outcome::Finished));
    }

    #[test]
    fn panics_are_recorded_and_counted() {
        let rt = Runtime::new(true);
        rt.spawn(|| panic!("boom"));
        assert!(matches!(rt.wait(Duration::from_secs(5)), Outcome::Finished));
        let payload = rt.take_panic().unwrap();
        assert_eq!(panic_message(&*payload), "boom");
        assert!(rt.wait_exit(Duration::from_secs(1)));
    }
}
