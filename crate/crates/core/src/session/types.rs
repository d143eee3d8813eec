//! Protocol descriptions and the values that may travel over them.

use std::fmt;
use std::sync::{Arc, OnceLock};

/// A binary session protocol, seen from one endpoint.
///
/// `priority` is `None` for ungraded protocols and `Some(o)` when the
/// protocol is used by the graded layer.
#[derive(Clone, PartialEq, Eq)]
pub enum SessionType {
    Send {
        priority: Option<u64>,
        payload: ValueKind,
        cont: Box<SessionType>,
    },
    Recv {
        priority: Option<u64>,
        payload: ValueKind,
        cont: Box<SessionType>,
    },
    /// Synchronous end: both sides must `close`.
    End {
        priority: Option<u64>,
    },
    /// Asynchronous end: nothing to do, dropping is silent.
    UnitEnd,
    /// A reference to one side of a pair of mutually dual recursive
    /// definitions.
    Named {
        pair: Arc<RecPair>,
        side: usize,
    },
}

/// Two mutually dual recursive protocol definitions.
///
/// The definitions refer back to the pair, so the `Arc` cycle is never
/// reclaimed. Recursive protocols are expected to be defined once and
/// shared.
pub struct RecPair {
    names: [String; 2],
    bodies: [OnceLock<SessionType>; 2],
}

impl PartialEq for RecPair {
    fn eq(&self, other: &Self) -> bool {
        std::ptr::eq(self, other)
    }
}

impl Eq for RecPair {}

/// Describes which values a protocol step carries.
#[derive(Clone, PartialEq, Eq)]
pub enum ValueKind {
    Unit,
    Int,
    Str,
    Void,
    Pair(Box<ValueKind>, Box<ValueKind>),
    Sum(Box<ValueKind>, Box<ValueKind>),
    /// An endpoint following the given protocol (delegation).
    Chan(Box<SessionType>),
    /// Host values identified only by a tag, such as closures.
    Opaque(String),
}

impl ValueKind {
    pub fn pair(a: ValueKind, b: ValueKind) -> Self {
        ValueKind::Pair(Box::new(a), Box::new(b))
    }

    pub fn sum(a: ValueKind, b: ValueKind) -> Self {
        ValueKind::Sum(Box::new(a), Box::new(b))
    }

    pub fn chan(s: SessionType) -> Self {
        ValueKind::Chan(Box::new(s))
    }
}

impl SessionType {
    pub fn send(payload: ValueKind, cont: SessionType) -> Self {
        SessionType::Send { priority: None, payload, cont: Box::new(cont) }
    }

    pub fn recv(payload: ValueKind, cont: SessionType) -> Self {
        SessionType::Recv { priority: None, payload, cont: Box::new(cont) }
    }

    pub fn end() -> Self {
        SessionType::End { priority: None }
    }

    pub fn send_at(o: u64, payload: ValueKind, cont: SessionType) -> Self {
        SessionType::Send { priority: Some(o), payload, cont: Box::new(cont) }
    }

    pub fn recv_at(o: u64, payload: ValueKind, cont: SessionType) -> Self {
        SessionType::Recv { priority: Some(o), payload, cont: Box::new(cont) }
    }

    pub fn end_at(o: u64) -> Self {
        SessionType::End { priority: Some(o) }
    }

    /// Internal choice: send the peer's side of whichever branch is picked.
    pub fn select(s1: SessionType, s2: SessionType) -> Self {
        Self::select_with(None, s1, s2)
    }

    /// External choice: receive our side of the branch the peer picked.
    pub fn offer(s1: SessionType, s2: SessionType) -> Self {
        Self::offer_with(None, s1, s2)
    }

    pub fn select_at(o: u64, s1: SessionType, s2: SessionType) -> Self {
        Self::select_with(Some(o), s1, s2)
    }

    pub fn offer_at(o: u64, s1: SessionType, s2: SessionType) -> Self {
        Self::offer_with(Some(o), s1, s2)
    }

    fn select_with(priority: Option<u64>, s1: SessionType, s2: SessionType) -> Self {
        SessionType::Send {
            priority,
            payload: ValueKind::sum(ValueKind::chan(s1.dual()), ValueKind::chan(s2.dual())),
            cont: Box::new(SessionType::UnitEnd),
        }
    }

    fn offer_with(priority: Option<u64>, s1: SessionType, s2: SessionType) -> Self {
        SessionType::Recv {
            priority,
            payload: ValueKind::sum(ValueKind::chan(s1), ValueKind::chan(s2)),
            cont: Box::new(SessionType::UnitEnd),
        }
    }

    /// Defines a recursive protocol named `name`, whose dual is named
    /// `dual_name`. The closure receives a reference to the protocol being
    /// defined and returns its body.
    pub fn recursive(
        name: impl Into<String>,
        dual_name: impl Into<String>,
        body: impl FnOnce(SessionType) -> SessionType,
    ) -> SessionType {
        let pair =
            Arc::new(RecPair { names: [name.into(), dual_name.into()], bodies: [OnceLock::new(), OnceLock::new()] });
        let me = SessionType::Named { pair: Arc::clone(&pair), side: 0 };
        let def = body(me.clone());
        let dual_def = def.dual();
        let _ = pair.bodies[0].set(def);
        let _ = pair.bodies[1].set(dual_def);
        me
    }

    /// The mirror protocol: sends become receives and vice versa.
    pub fn dual(&self) -> SessionType {
        match self {
            SessionType::Send { priority, payload, cont } => {
                SessionType::Recv { priority: *priority, payload: payload.clone(), cont: Box::new(cont.dual()) }
            }
            SessionType::Recv { priority, payload, cont } => {
                SessionType::Send { priority: *priority, payload: payload.clone(), cont: Box::new(cont.dual()) }
            }
            SessionType::End { priority } => SessionType::End { priority: *priority },
            SessionType::UnitEnd => SessionType::UnitEnd,
            SessionType::Named { pair, side } => SessionType::Named { pair: Arc::clone(pair), side: 1 - side },
        }
    }

    /// Replaces named references at the head by their definitions.
    pub fn unfold(&self) -> SessionType {
        let mut cur = self.clone();
        while let SessionType::Named { pair, side } = &cur {
            cur = pair.bodies[*side].get().expect("recursive protocol used before its definition is complete").clone();
        }
        cur
    }

    /// The priority on the head action, if any.
    pub fn head_priority(&self) -> Option<u64> {
        match self.unfold() {
            SessionType::Send { priority, .. } | SessionType::Recv { priority, .. } | SessionType::End { priority } => {
                priority
            }
            _ => None,
        }
    }

    /// Priorities in pre-order, including those of delegated protocols.
    pub fn priorities(&self) -> Vec<Option<u64>> {
        let mut out = Vec::new();
        self.collect_priorities(&mut out);
        out
    }

    fn collect_priorities(&self, out: &mut Vec<Option<u64>>) {
        match self {
            SessionType::Send { priority, payload, cont } | SessionType::Recv { priority, payload, cont } => {
                out.push(*priority);
                payload.collect_priorities(out);
                cont.collect_priorities(out);
            }
            SessionType::End { priority } => out.push(*priority),
            SessionType::UnitEnd | SessionType::Named { .. } => {}
        }
    }

    /// `true` if a recursive reference occurs anywhere inside.
    pub fn is_recursive(&self) -> bool {
        match self {
            SessionType::Send { payload, cont, .. } | SessionType::Recv { payload, cont, .. } => {
                payload.is_recursive() || cont.is_recursive()
            }
            SessionType::Named { .. } => true,
            SessionType::End { .. } | SessionType::UnitEnd => false,
        }
    }
}

impl ValueKind {
    fn collect_priorities(&self, out: &mut Vec<Option<u64>>) {
        match self {
            ValueKind::Pair(a, b) | ValueKind::Sum(a, b) => {
                a.collect_priorities(out);
                b.collect_priorities(out);
            }
            ValueKind::Chan(s) => s.collect_priorities(out),
            _ => {}
        }
    }

    fn is_recursive(&self) -> bool {
        match self {
            ValueKind::Pair(a, b) | ValueKind::Sum(a, b) => a.is_recursive() || b.is_recursive(),
            ValueKind::Chan(s) => s.is_recursive(),
            _ => false,
        }
    }
}

fn write_prio(f: &mut fmt::Formatter<'_>, p: &Option<u64>) -> fmt::Result {
    match p {
        Some(o) => write!(f, "{o} "),
        None => Ok(()),
    }
}

impl fmt::Display for SessionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SessionType::Send { priority, payload, cont } => {
                f.write_str("!")?;
                write_prio(f, priority)?;
                write!(f, "{payload}.{cont}")
            }
            SessionType::Recv { priority, payload, cont } => {
                f.write_str("?")?;
                write_prio(f, priority)?;
                write!(f, "{payload}.{cont}")
            }
            SessionType::End { priority: Some(o) } => write!(f, "end {o}"),
            SessionType::End { priority: None } => f.write_str("end"),
            SessionType::UnitEnd => f.write_str("unit"),
            SessionType::Named { pair, side } => f.write_str(&pair.names[*side]),
        }
    }
}

impl fmt::Debug for SessionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueKind::Unit => f.write_str("Unit"),
            ValueKind::Int => f.write_str("Int"),
            ValueKind::Str => f.write_str("String"),
            ValueKind::Void => f.write_str("Void"),
            ValueKind::Pair(a, b) => write!(f, "({a} * {b})"),
            ValueKind::Sum(a, b) => write!(f, "({a} + {b})"),
            ValueKind::Chan(s) => write!(f, "({s})"),
            ValueKind::Opaque(k) => f.write_str(k),
        }
    }
}

impl fmt::Debug for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}
