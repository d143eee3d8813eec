//! Abstract syntax of Priority GV.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::priority::Bounds;
use crate::session::{SessionType, ValueKind};

/// A 1-based source position.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// Types, including session types with concrete priorities.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum PgvType {
    Send(u64, Box<PgvType>, Box<PgvType>),
    Recv(u64, Box<PgvType>, Box<PgvType>),
    End(u64),
    Prod(Box<PgvType>, Box<PgvType>),
    Sum(Box<PgvType>, Box<PgvType>),
    Unit,
    Void,
    Int,
    Str,
    /// A linear function that communicates within the given bounds when
    /// applied.
    Arrow(Bounds, Box<PgvType>, Box<PgvType>),
}

/// Dualising something that is not a session type.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{0} is not a session type")]
pub struct NotSession(pub PgvType);

impl PgvType {
    pub fn send(o: u64, t: PgvType, s: PgvType) -> Self {
        PgvType::Send(o, Box::new(t), Box::new(s))
    }

    pub fn recv(o: u64, t: PgvType, s: PgvType) -> Self {
        PgvType::Recv(o, Box::new(t), Box::new(s))
    }

    pub fn prod(a: PgvType, b: PgvType) -> Self {
        PgvType::Prod(Box::new(a), Box::new(b))
    }

    pub fn sum(a: PgvType, b: PgvType) -> Self {
        PgvType::Sum(Box::new(a), Box::new(b))
    }

    pub fn arrow(b: Bounds, dom: PgvType, cod: PgvType) -> Self {
        PgvType::Arrow(b, Box::new(dom), Box::new(cod))
    }

    pub fn is_session(&self) -> bool {
        matches!(self, PgvType::Send(..) | PgvType::Recv(..) | PgvType::End(_))
    }

    /// The dual session type.
    pub fn dual(&self) -> Result<PgvType, NotSession> {
        match self {
            PgvType::Send(o, t, s) => Ok(PgvType::Recv(*o, t.clone(), Box::new(s.dual()?))),
            PgvType::Recv(o, t, s) => Ok(PgvType::Send(*o, t.clone(), Box::new(s.dual()?))),
            PgvType::End(o) => Ok(PgvType::End(*o)),
            other => Err(NotSession(other.clone())),
        }
    }

    /// Priorities of a session type in order, payloads included.
    pub fn priorities(&self) -> Vec<u64> {
        let mut out = Vec::new();
        self.collect_priorities(&mut out);
        out
    }

    fn collect_priorities(&self, out: &mut Vec<u64>) {
        match self {
            PgvType::Send(o, t, s) | PgvType::Recv(o, t, s) => {
                out.push(*o);
                t.collect_priorities(out);
                s.collect_priorities(out);
            }
            PgvType::End(o) => out.push(*o),
            PgvType::Prod(a, b) | PgvType::Sum(a, b) | PgvType::Arrow(_, a, b) => {
                a.collect_priorities(out);
                b.collect_priorities(out);
            }
            _ => {}
        }
    }

    /// The runtime protocol of a session type.
    pub fn to_session(&self) -> Result<SessionType, NotSession> {
        match self {
            PgvType::Send(o, t, s) => Ok(SessionType::send_at(*o, t.value_kind(), s.to_session()?)),
            PgvType::Recv(o, t, s) => Ok(SessionType::recv_at(*o, t.value_kind(), s.to_session()?)),
            PgvType::End(o) => Ok(SessionType::end_at(*o)),
            other => Err(NotSession(other.clone())),
        }
    }

    /// Which runtime values inhabit this type.
    pub fn value_kind(&self) -> ValueKind {
        match self {
            PgvType::Unit => ValueKind::Unit,
            PgvType::Void => ValueKind::Void,
            PgvType::Int => ValueKind::Int,
            PgvType::Str => ValueKind::Str,
            PgvType::Prod(a, b) => ValueKind::pair(a.value_kind(), b.value_kind()),
            PgvType::Sum(a, b) => ValueKind::sum(a.value_kind(), b.value_kind()),
            PgvType::Arrow(..) => ValueKind::Opaque(FN_KIND.to_string()),
            s => ValueKind::chan(s.to_session().expect("session type")),
        }
    }
}

/// The opaque kind tag of function values.
pub const FN_KIND: &str = "fn";

// Precedence levels: arrow < sum < product < atom.
fn fmt_type(t: &PgvType, level: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let parens = match t {
        PgvType::Arrow(..) => level > 0,
        PgvType::Sum(..) => level > 1,
        PgvType::Prod(..) => level > 2,
        _ => false,
    };
    if parens {
        f.write_str("(")?;
    }
    match t {
        PgvType::Arrow(b, a, c) => {
            fmt_type(a, 1, f)?;
            write!(f, " -[{},{}]-> ", b.lower, b.upper)?;
            fmt_type(c, 0, f)?;
        }
        PgvType::Sum(a, b) => {
            fmt_type(a, 2, f)?;
            f.write_str(" + ")?;
            fmt_type(b, 1, f)?;
        }
        PgvType::Prod(a, b) => {
            fmt_type(a, 3, f)?;
            f.write_str(" * ")?;
            fmt_type(b, 2, f)?;
        }
        PgvType::Send(o, p, s) => {
            write!(f, "!{o} ")?;
            fmt_type(p, 0, f)?;
            f.write_str(".")?;
            fmt_type(s, 3, f)?;
        }
        PgvType::Recv(o, p, s) => {
            write!(f, "?{o} ")?;
            fmt_type(p, 0, f)?;
            f.write_str(".")?;
            fmt_type(s, 3, f)?;
        }
        PgvType::End(o) => write!(f, "end {o}")?,
        PgvType::Unit => f.write_str("Unit")?,
        PgvType::Void => f.write_str("Void")?,
        PgvType::Int => f.write_str("Int")?,
        PgvType::Str => f.write_str("String")?,
    }
    if parens {
        f.write_str(")")?;
    }
    Ok(())
}

impl fmt::Display for PgvType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_type(self, 0, f)
    }
}

/// Concurrency primitives.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ConstK {
    /// Creates a channel of the annotated session type.
    New(PgvType),
    Fork,
    Send,
    Recv,
    Close,
    Cancel,
}

impl ConstK {
    pub fn name(&self) -> &'static str {
        match self {
            ConstK::New(_) => "new",
            ConstK::Fork => "fork",
            ConstK::Send => "send",
            ConstK::Recv => "recv",
            ConstK::Close => "close",
            ConstK::Cancel => "cancel",
        }
    }
}

impl fmt::Display for ConstK {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstK::New(s) => write!(f, "new[{s}]"),
            other => f.write_str(other.name()),
        }
    }
}

/// A term with the position where it starts.
#[derive(Clone, Debug)]
pub struct Term {
    pub kind: TermKind,
    pub span: Span,
}

/// Terms compare by structure; positions are ignored.
impl PartialEq for Term {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl Eq for Term {}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TermKind {
    Var(String),
    Lam(String, PgvType, Box<Term>),
    App(Box<Term>, Box<Term>),
    Unit,
    LetUnit(Box<Term>, Box<Term>),
    Pair(Box<Term>, Box<Term>),
    LetPair(String, String, Box<Term>, Box<Term>),
    Inl(Box<Term>),
    Inr(Box<Term>),
    Case(Box<Term>, String, Box<Term>, String, Box<Term>),
    Absurd(Box<Term>),
    Const(ConstK),
    IntLit(i64),
    StrLit(String),
    Add(Box<Term>, Box<Term>),
    Mul(Box<Term>, Box<Term>),
}

impl Term {
    pub fn new(kind: TermKind, span: Span) -> Self {
        Term { kind, span }
    }

    /// A term without a meaningful position, for programmatic construction.
    pub fn synth(kind: TermKind) -> Self {
        Term { kind, span: Span::default() }
    }

    /// Variables occurring free.
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
        fn under(t: &Term, names: &[&String], bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
            let n = bound.len();
            bound.extend(names.iter().map(|s| (*s).clone()));
            t.collect_free(bound, out);
            bound.truncate(n);
        }
        match &self.kind {
            TermKind::Var(x) => {
                if !bound.contains(x) {
                    out.insert(x.clone());
                }
            }
            TermKind::Lam(x, _, body) => under(body, &[x], bound, out),
            TermKind::App(a, b)
            | TermKind::LetUnit(a, b)
            | TermKind::Pair(a, b)
            | TermKind::Add(a, b)
            | TermKind::Mul(a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            TermKind::LetPair(x, y, m, n) => {
                m.collect_free(bound, out);
                under(n, &[x, y], bound, out);
            }
            TermKind::Inl(m) | TermKind::Inr(m) | TermKind::Absurd(m) => m.collect_free(bound, out),
            TermKind::Case(l, x, m, y, n) => {
                l.collect_free(bound, out);
                under(m, &[x], bound, out);
                under(n, &[y], bound, out);
            }
            TermKind::Unit | TermKind::Const(_) | TermKind::IntLit(_) | TermKind::StrLit(_) => {}
        }
    }
}

/// Strips the suffix added when a binder is renamed apart.
pub fn source_name(name: &str) -> &str {
    match name.find('#') {
        Some(i) => &name[..i],
        None => name,
    }
}

// Precedence levels for printing terms: 0 binders and lets, 1 addition,
// 2 multiplication, 3 prefix injections, 4 application, 5 atoms.
fn term_level(t: &Term) -> u8 {
    match &t.kind {
        TermKind::Lam(..) | TermKind::LetUnit(..) | TermKind::LetPair(..) | TermKind::Case(..) => 0,
        TermKind::Add(..) => 1,
        TermKind::Mul(..) => 2,
        TermKind::Inl(_) | TermKind::Inr(_) | TermKind::Absurd(_) => 3,
        TermKind::App(..) => 4,
        _ => 5,
    }
}

fn fmt_term(t: &Term, level: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let parens = term_level(t) < level;
    if parens {
        f.write_str("(")?;
    }
    match &t.kind {
        TermKind::Var(x) => f.write_str(x)?,
        TermKind::Lam(x, ty, body) => {
            write!(f, "\\{x}:{ty}. ")?;
            fmt_term(body, 0, f)?;
        }
        TermKind::App(a, b) => {
            fmt_term(a, 4, f)?;
            f.write_str(" ")?;
            fmt_term(b, 5, f)?;
        }
        TermKind::Unit => f.write_str("()")?,
        TermKind::LetUnit(m, n) => {
            f.write_str("let () = ")?;
            fmt_term(m, 0, f)?;
            f.write_str(" in ")?;
            fmt_term(n, 0, f)?;
        }
        TermKind::Pair(a, b) => {
            f.write_str("(")?;
            fmt_term(a, 0, f)?;
            f.write_str(", ")?;
            fmt_term(b, 0, f)?;
            f.write_str(")")?;
        }
        TermKind::LetPair(x, y, m, n) => {
            write!(f, "let ({x}, {y}) = ")?;
            fmt_term(m, 0, f)?;
            f.write_str(" in ")?;
            fmt_term(n, 0, f)?;
        }
        TermKind::Inl(m) => {
            f.write_str("inl ")?;
            fmt_term(m, 3, f)?;
        }
        TermKind::Inr(m) => {
            f.write_str("inr ")?;
            fmt_term(m, 3, f)?;
        }
        TermKind::Absurd(m) => {
            f.write_str("absurd ")?;
            fmt_term(m, 3, f)?;
        }
        TermKind::Case(l, x, m, y, n) => {
            f.write_str("case ")?;
            fmt_term(l, 0, f)?;
            write!(f, " of {{ inl {x} -> ")?;
            fmt_term(m, 0, f)?;
            write!(f, "; inr {y} -> ")?;
            fmt_term(n, 0, f)?;
            f.write_str(" }")?;
        }
        TermKind::Const(k) => write!(f, "{k}")?,
        TermKind::IntLit(n) => write!(f, "{n}")?,
        TermKind::StrLit(s) => write!(f, "{s:?}")?,
        TermKind::Add(a, b) => {
            fmt_term(a, 1, f)?;
            f.write_str(" + ")?;
            fmt_term(b, 2, f)?;
        }
        TermKind::Mul(a, b) => {
            fmt_term(a, 2, f)?;
            f.write_str(" * ")?;
            fmt_term(b, 3, f)?;
        }
    }
    if parens {
        f.write_str(")")?;
    }
    Ok(())
}

/// Prints concrete syntax that parses back to the same term.
impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_term(self, 0, f)
    }
}
