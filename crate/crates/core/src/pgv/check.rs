//! Algorithmic linear typechecking with priorities.
//!
//! A term is checked against a context of linear bindings, each of which
//! must be consumed exactly once. The checker computes the type of a term and
//! the bounds `[p, q]` of its communication, and enforces that sequenced
//! subterms are ordered: the first must finish (`q`) strictly before the
//! second starts (`p'`).
//!
//! Types flow mostly bottom-up. Expected types are passed down where they
//! are known, which is how `inl`, `inr` and `absurd` get their missing
//! summand, and how payloads of `send` learn their type from the channel.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use super::syntax::{source_name, ConstK, PgvType, Span, Term, TermKind};
use crate::priority::{seq_bounds, Bounds, Priority};

/// Typing failures. Each carries the position of the offending term.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("LinearityError at {span}: {message}")]
    Linearity { span: Span, message: String },
    #[error("PriorityError at {span}: {rule} requires {first} < {second}")]
    Priority { span: Span, rule: &'static str, first: Priority, second: Priority },
    #[error("MismatchError at {span}: expected {expected}, found {found}")]
    Mismatch { span: Span, expected: String, found: String },
    #[error("KindError at {span}: {message}")]
    Kind { span: Span, message: String },
    #[error("InstantiationError at {span}: {message}")]
    Instantiation { span: Span, message: String },
    #[error("UnboundError at {span}: unbound variable {name}")]
    Unbound { span: Span, name: String },
}

impl TypeError {
    /// The variant name, as printed in diagnostics.
    pub fn variant(&self) -> &'static str {
        match self {
            TypeError::Linearity { .. } => "LinearityError",
            TypeError::Priority { .. } => "PriorityError",
            TypeError::Mismatch { .. } => "MismatchError",
            TypeError::Kind { .. } => "KindError",
            TypeError::Instantiation { .. } => "InstantiationError",
            TypeError::Unbound { .. } => "UnboundError",
        }
    }

    pub fn span(&self) -> Span {
        match self {
            TypeError::Linearity { span, .. }
            | TypeError::Priority { span, .. }
            | TypeError::Mismatch { span, .. }
            | TypeError::Kind { span, .. }
            | TypeError::Instantiation { span, .. }
            | TypeError::Unbound { span, .. } => *span,
        }
    }
}

/// A constant at a specific instance of its schema.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Prim {
    pub k: ConstK,
    /// Bounds on the constant's arrow: pure for `new`, `fork` and `cancel`,
    /// `[o,o]` for the communicating constants.
    pub arrow: Bounds,
}

/// A term annotated with its type, bounds and free variables.
#[derive(Debug)]
pub struct Typed {
    pub kind: TypedKind,
    pub ty: PgvType,
    pub bounds: Bounds,
    pub span: Span,
    pub free: BTreeSet<String>,
}

#[derive(Debug)]
pub enum TypedKind {
    Var(String),
    Lam(String, Arc<Typed>),
    App(Arc<Typed>, Arc<Typed>),
    /// A constant applied to its argument.
    ConstApp(Prim, Arc<Typed>),
    /// A constant used as a first-class function.
    Const(Prim),
    Unit,
    Int(i64),
    Str(String),
    LetUnit(Arc<Typed>, Arc<Typed>),
    Pair(Arc<Typed>, Arc<Typed>),
    LetPair(String, String, Arc<Typed>, Arc<Typed>),
    Inl(Arc<Typed>),
    Inr(Arc<Typed>),
    Case(Arc<Typed>, String, Arc<Typed>, String, Arc<Typed>),
    Absurd(Arc<Typed>),
    Add(Arc<Typed>, Arc<Typed>),
    Mul(Arc<Typed>, Arc<Typed>),
}

impl Typed {
    /// Calls `f` on every node in evaluation order.
    pub fn visit(&self, f: &mut impl FnMut(&Typed)) {
        f(self);
        match &self.kind {
            TypedKind::Lam(_, b) | TypedKind::ConstApp(_, b) => b.visit(f),
            TypedKind::App(a, b)
            | TypedKind::LetUnit(a, b)
            | TypedKind::Pair(a, b)
            | TypedKind::LetPair(_, _, a, b)
            | TypedKind::Add(a, b)
            | TypedKind::Mul(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            TypedKind::Inl(m) | TypedKind::Inr(m) | TypedKind::Absurd(m) => m.visit(f),
            TypedKind::Case(l, _, m, _, n) => {
                l.visit(f);
                m.visit(f);
                n.visit(f);
            }
            _ => {}
        }
    }
}

impl fmt::Display for Typed {
    /// The judgement summary: `<type> [p,q]`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.ty, self.bounds)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CheckOptions {
    /// When false, ordering violations are collected instead of failing.
    /// Linearity and types are always enforced.
    pub enforce_priorities: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions { enforce_priorities: true }
    }
}

/// The result of a successful check.
#[derive(Debug)]
pub struct Checked {
    pub typed: Arc<Typed>,
    /// Ordering violations found while priorities were not enforced.
    pub violations: Vec<TypeError>,
}

struct Entry {
    name: String,
    ty: PgvType,
    used: bool,
}

struct Checker {
    ctx: Vec<Entry>,
    opts: CheckOptions,
    violations: Vec<TypeError>,
}

type CResult = Result<Typed, TypeError>;

fn mismatch(span: Span, expected: impl fmt::Display, found: impl fmt::Display) -> TypeError {
    TypeError::Mismatch { span, expected: expected.to_string(), found: found.to_string() }
}

/// Checks a closed term with priorities enforced.
pub fn typecheck(t: &Term) -> Result<Arc<Typed>, TypeError> {
    typecheck_with(t, &[], CheckOptions::default()).map(|c| c.typed)
}

/// Checks `t` in a context of linear bindings, all of which must be used.
pub fn typecheck_with(t: &Term, ctx: &[(String, PgvType)], opts: CheckOptions) -> Result<Checked, TypeError> {
    let mut c = Checker {
        ctx: ctx.iter().map(|(n, ty)| Entry { name: n.clone(), ty: ty.clone(), used: false }).collect(),
        opts,
        violations: Vec::new(),
    };
    let typed = c.check(t, None)?;
    if let Some(e) = c.ctx.iter().find(|e| !e.used) {
        return Err(TypeError::Linearity {
            span: t.span,
            message: format!("variable {} is never used", source_name(&e.name)),
        });
    }
    Ok(Checked { typed: Arc::new(typed), violations: c.violations })
}

fn node(kind: TypedKind, ty: PgvType, bounds: Bounds, t: &Term) -> Typed {
    Typed { kind, ty, bounds, span: t.span, free: t.free_vars() }
}

impl Checker {
    /// Requires `a < b`, recording or failing per the options.
    fn order(&mut self, span: Span, rule: &'static str, a: Priority, b: Priority) -> Result<(), TypeError> {
        if a.lt(b) {
            return Ok(());
        }
        let err = TypeError::Priority { span, rule, first: a, second: b };
        if self.opts.enforce_priorities {
            Err(err)
        } else {
            self.violations.push(err);
            Ok(())
        }
    }

    /// Bounds of `first` then `second`, checking their order under `rule`.
    fn seq(&mut self, span: Span, rule: &'static str, first: Bounds, second: Bounds) -> Result<Bounds, TypeError> {
        self.order(span, rule, first.upper, second.lower)?;
        Ok(seq_bounds(first, second).unwrap_or_else(|_| first.union(&second)))
    }

    fn bind<R>(
        &mut self,
        binders: &[(&String, &PgvType)],
        span: Span,
        body: impl FnOnce(&mut Self) -> Result<R, TypeError>,
    ) -> Result<R, TypeError> {
        let depth = self.ctx.len();
        for (n, ty) in binders {
            self.ctx.push(Entry { name: (*n).clone(), ty: (*ty).clone(), used: false });
        }
        let r = body(self)?;
        for e in self.ctx.drain(depth..) {
            if !e.used {
                return Err(TypeError::Linearity {
                    span,
                    message: format!("variable {} is never used", source_name(&e.name)),
                });
            }
        }
        Ok(r)
    }

    fn expect_type(&self, t: &Term, expected: Option<&PgvType>, found: &PgvType) -> Result<(), TypeError> {
        match expected {
            Some(e) if e != found => Err(mismatch(t.span, e, found)),
            _ => Ok(()),
        }
    }

    fn check(&mut self, t: &Term, expected: Option<&PgvType>) -> CResult {
        let typed = self.synth(t, expected)?;
        self.expect_type(t, expected, &typed.ty)?;
        Ok(typed)
    }

    fn synth(&mut self, t: &Term, expected: Option<&PgvType>) -> CResult {
        match &t.kind {
            TermKind::Var(x) => {
                let Some(entry) = self.ctx.iter_mut().rev().find(|e| &e.name == x) else {
                    return Err(TypeError::Unbound { span: t.span, name: source_name(x).to_string() });
                };
                if entry.used {
                    return Err(TypeError::Linearity {
                        span: t.span,
                        message: format!("variable {} is used more than once", source_name(x)),
                    });
                }
                entry.used = true;
                let ty = entry.ty.clone();
                Ok(node(TypedKind::Var(x.clone()), ty, Bounds::PURE, t))
            }
            TermKind::Lam(x, dom, body) => {
                let cod_hint = match expected {
                    Some(PgvType::Arrow(_, d, c)) if **d == *dom => Some((**c).clone()),
                    _ => None,
                };
                let body = self.bind(&[(x, dom)], t.span, |c| c.check(body, cod_hint.as_ref()))?;
                let ty = PgvType::arrow(body.bounds, dom.clone(), body.ty.clone());
                Ok(node(TypedKind::Lam(x.clone(), Arc::new(body)), ty, Bounds::PURE, t))
            }
            TermKind::App(f, arg) => match &f.kind {
                TermKind::Const(k) => self.const_app(t, k, arg),
                _ => self.app(t, f, arg),
            },
            TermKind::Const(k) => self.bare_const(t, k, expected),
            TermKind::Unit => Ok(node(TypedKind::Unit, PgvType::Unit, Bounds::PURE, t)),
            TermKind::IntLit(n) => Ok(node(TypedKind::Int(*n), PgvType::Int, Bounds::PURE, t)),
            TermKind::StrLit(s) => Ok(node(TypedKind::Str(s.clone()), PgvType::Str, Bounds::PURE, t)),
            TermKind::LetUnit(m, n) => {
                let m = self.check(m, Some(&PgvType::Unit))?;
                let n = self.check(n, expected)?;
                let b = self.seq(t.span, "T-LetUnit", m.bounds, n.bounds)?;
                let ty = n.ty.clone();
                Ok(node(TypedKind::LetUnit(Arc::new(m), Arc::new(n)), ty, b, t))
            }
            TermKind::Pair(a, b) => {
                let (ha, hb) = match expected {
                    Some(PgvType::Prod(x, y)) => (Some((**x).clone()), Some((**y).clone())),
                    _ => (None, None),
                };
                let a = self.check(a, ha.as_ref())?;
                let b = self.check(b, hb.as_ref())?;
                self.pair(t, a, b)
            }
            TermKind::LetPair(x, y, m, n) => {
                let m = self.check(m, None)?;
                let PgvType::Prod(tx, ty) = &m.ty else {
                    return Err(mismatch(m.span, "a product type", &m.ty));
                };
                let (tx, ty) = ((**tx).clone(), (**ty).clone());
                let n = self.bind(&[(x, &tx), (y, &ty)], t.span, |c| c.check(n, expected))?;
                let b = self.seq(t.span, "T-LetPair", m.bounds, n.bounds)?;
                let rty = n.ty.clone();
                Ok(node(TypedKind::LetPair(x.clone(), y.clone(), Arc::new(m), Arc::new(n)), rty, b, t))
            }
            TermKind::Inl(m) | TermKind::Inr(m) => {
                let left = matches!(t.kind, TermKind::Inl(_));
                let Some(PgvType::Sum(l, r)) = expected else {
                    return Err(TypeError::Instantiation {
                        span: t.span,
                        message: format!(
                            "cannot determine the sum type of {}; use it where a sum type is expected",
                            if left { "inl" } else { "inr" }
                        ),
                    });
                };
                let m = self.check(m, Some(if left { l } else { r }))?;
                let b = m.bounds;
                let kind = if left { TypedKind::Inl(Arc::new(m)) } else { TypedKind::Inr(Arc::new(m)) };
                Ok(node(kind, PgvType::sum((**l).clone(), (**r).clone()), b, t))
            }
            TermKind::Absurd(m) => {
                let Some(target) = expected else {
                    return Err(TypeError::Instantiation {
                        span: t.span,
                        message: "cannot determine the result type of absurd".into(),
                    });
                };
                let m = self.check(m, Some(&PgvType::Void))?;
                let b = m.bounds;
                Ok(node(TypedKind::Absurd(Arc::new(m)), target.clone(), b, t))
            }
            TermKind::Case(l, x, m, y, n) => self.case(t, l, (x, m), (y, n), expected),
            TermKind::Add(a, b) | TermKind::Mul(a, b) => {
                let a = self.check(a, Some(&PgvType::Int))?;
                let b = self.check(b, Some(&PgvType::Int))?;
                let rule = if matches!(t.kind, TermKind::Add(..)) { "T-Add" } else { "T-Mul" };
                let bounds = self.seq(t.span, rule, a.bounds, b.bounds)?;
                let kind = if rule == "T-Add" {
                    TypedKind::Add(Arc::new(a), Arc::new(b))
                } else {
                    TypedKind::Mul(Arc::new(a), Arc::new(b))
                };
                Ok(node(kind, PgvType::Int, bounds, t))
            }
        }
    }

    fn pair(&mut self, t: &Term, a: Typed, b: Typed) -> CResult {
        let bounds = self.seq(t.span, "T-Pair", a.bounds, b.bounds)?;
        let ty = PgvType::prod(a.ty.clone(), b.ty.clone());
        Ok(node(TypedKind::Pair(Arc::new(a), Arc::new(b)), ty, bounds, t))
    }

    /// Bounds of applying a function with bounds `fb` and arrow bounds `ab`
    /// to an argument with bounds `xb`.
    ///
    /// The function is evaluated first, then the argument, then the body,
    /// so the function must also finish before the body starts.
    fn app_bounds(&mut self, span: Span, fb: Bounds, xb: Bounds, ab: Bounds) -> Result<Bounds, TypeError> {
        self.order(span, "T-App", fb.upper, xb.lower)?;
        self.order(span, "T-App", xb.upper, ab.lower)?;
        self.order(span, "T-App", fb.upper, ab.lower)?;
        Ok(fb.union(&xb).union(&ab))
    }

    fn app(&mut self, t: &Term, f: &Term, arg: &Term) -> CResult {
        let f = self.check(f, None)?;
        let PgvType::Arrow(ab, dom, cod) = &f.ty else {
            return Err(mismatch(f.span, "a function type", &f.ty));
        };
        let (ab, dom, cod) = (*ab, (**dom).clone(), (**cod).clone());
        let x = self.check(arg, Some(&dom))?;
        let bounds = self.app_bounds(t.span, f.bounds, x.bounds, ab)?;
        Ok(node(TypedKind::App(Arc::new(f), Arc::new(x)), cod, bounds, t))
    }

    /// Instantiates the schema of `k` at argument type `arg`, giving the
    /// result type and the arrow's bounds.
    fn instantiate(&self, span: Span, k: &ConstK, arg: &PgvType) -> Result<(PgvType, Bounds), TypeError> {
        let bad = |what: &str| mismatch(span, format!("{what} for {}", k.name()), arg);
        match k {
            ConstK::New(s) => {
                if *arg != PgvType::Unit {
                    return Err(bad("Unit"));
                }
                let d = s.dual().map_err(|e| TypeError::Kind { span, message: e.to_string() })?;
                Ok((PgvType::prod(s.clone(), d), Bounds::PURE))
            }
            ConstK::Fork => match arg {
                PgvType::Arrow(_, d, c) if **d == PgvType::Unit && **c == PgvType::Unit => {
                    Ok((PgvType::Unit, Bounds::PURE))
                }
                _ => Err(bad("a Unit to Unit function")),
            },
            ConstK::Cancel => {
                if !arg.is_session() {
                    return Err(TypeError::Kind {
                        span,
                        message: format!("cancel expects a session type, found {arg}"),
                    });
                }
                Ok((PgvType::Unit, Bounds::PURE))
            }
            ConstK::Send => match arg {
                PgvType::Prod(v, ch) => match &**ch {
                    PgvType::Send(o, p, s) if p == v => Ok(((**s).clone(), Bounds::exact(*o))),
                    PgvType::Send(_, p, _) => Err(mismatch(span, &**p, &**v)),
                    _ => Err(bad("a payload paired with a sending channel")),
                },
                _ => Err(bad("a payload paired with a sending channel")),
            },
            ConstK::Recv => match arg {
                PgvType::Recv(o, p, s) => Ok((PgvType::prod((**p).clone(), (**s).clone()), Bounds::exact(*o))),
                _ => Err(bad("a receiving channel")),
            },
            ConstK::Close => match arg {
                PgvType::End(o) => Ok((PgvType::Unit, Bounds::exact(*o))),
                _ => Err(bad("an end channel")),
            },
        }
    }

    fn const_app(&mut self, t: &Term, k: &ConstK, arg: &Term) -> CResult {
        if let ConstK::New(s) = k {
            if !s.is_session() {
                return Err(TypeError::Kind {
                    span: t.span,
                    message: format!("new expects a session type, found {s}"),
                });
            }
        }
        let x = match (k, &arg.kind) {
            // Check the channel first so that the payload knows its type.
            (ConstK::Send, TermKind::Pair(v, ch)) => {
                let ch = self.check(ch, None)?;
                let hint = match &ch.ty {
                    PgvType::Send(_, p, _) => Some((**p).clone()),
                    _ => None,
                };
                let v = self.check(v, hint.as_ref())?;
                self.pair(arg, v, ch)?
            }
            (ConstK::New(_), _) => self.check(arg, Some(&PgvType::Unit))?,
            _ => self.check(arg, None)?,
        };
        let (ty, arrow) = self.instantiate(t.span, k, &x.ty)?;
        let bounds = self.app_bounds(t.span, Bounds::PURE, x.bounds, arrow)?;
        let prim = Prim { k: k.clone(), arrow };
        Ok(node(TypedKind::ConstApp(prim, Arc::new(x)), ty, bounds, t))
    }

    fn bare_const(&mut self, t: &Term, k: &ConstK, expected: Option<&PgvType>) -> CResult {
        let dom = match (k, expected) {
            (ConstK::New(_), _) => PgvType::Unit,
            (_, Some(PgvType::Arrow(_, d, _))) => (**d).clone(),
            _ => {
                return Err(TypeError::Instantiation {
                    span: t.span,
                    message: format!("cannot instantiate {}: apply it, or use it where its type is known", k.name()),
                })
            }
        };
        if let ConstK::New(s) = k {
            if !s.is_session() {
                return Err(TypeError::Kind {
                    span: t.span,
                    message: format!("new expects a session type, found {s}"),
                });
            }
        }
        let (cod, arrow) = self.instantiate(t.span, k, &dom)?;
        let ty = PgvType::arrow(arrow, dom, cod);
        Ok(node(TypedKind::Const(Prim { k: k.clone(), arrow }), ty, Bounds::PURE, t))
    }

    fn used_flags(&self) -> Vec<bool> {
        self.ctx.iter().map(|e| e.used).collect()
    }

    fn restore_flags(&mut self, flags: &[bool]) {
        for (e, f) in self.ctx.iter_mut().zip(flags) {
            e.used = *f;
        }
    }

    fn case(
        &mut self,
        t: &Term,
        l: &Term,
        (x, m): (&String, &Term),
        (y, n): (&String, &Term),
        expected: Option<&PgvType>,
    ) -> CResult {
        let l = self.check(l, None)?;
        let PgvType::Sum(tl, tr) = &l.ty else {
            return Err(mismatch(l.span, "a sum type", &l.ty));
        };
        let (tl, tr) = ((**tl).clone(), (**tr).clone());
        let before = self.used_flags();
        let m = self.bind(&[(x, &tl)], m.span, |c| c.check(m, expected))?;
        let after_m = self.used_flags();
        self.restore_flags(&before);
        let n = self.bind(&[(y, &tr)], n.span, |c| c.check(n, Some(expected.unwrap_or(&m.ty))))?;
        let after_n = self.used_flags();
        if after_m != after_n {
            let differs: Vec<&str> = self
                .ctx
                .iter()
                .zip(after_m.iter().zip(&after_n))
                .filter(|(_, (a, b))| a != b)
                .map(|(e, _)| source_name(&e.name))
                .collect();
            return Err(TypeError::Linearity {
                span: t.span,
                message: format!("case branches use different variables: {}", differs.join(", ")),
            });
        }
        if m.ty != n.ty {
            return Err(mismatch(n.span, &m.ty, &n.ty));
        }
        let branches = m.bounds.union(&n.bounds);
        let bounds = self.seq(t.span, "T-CaseSum", l.bounds, branches)?;
        let ty = m.ty.clone();
        Ok(node(TypedKind::Case(Arc::new(l), x.clone(), Arc::new(m), y.clone(), Arc::new(n)), ty, bounds, t))
    }
}
