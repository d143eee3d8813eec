//! Concrete syntax.
//!
//! ```text
//! type  := stype | "Unit" | "Void" | "Int" | "String" | "(" type ")"
//!        | type "*" type | type "+" type | type "-[" prio "," prio "]->" type
//! stype := "!" nat type "." stype | "?" nat type "." stype | "end" nat
//! prio  := "bot" | "top" | nat
//! term  := "\" ident ":" type "." term
//!        | "let" "()" "=" term "in" term
//!        | "let" "(" ident "," ident ")" "=" term "in" term
//!        | "case" term "of" "{" "inl" ident "->" term ";" "inr" ident "->" term "}"
//!        | term "+" term | term "*" term
//!        | "inl" term | "inr" term | "absurd" term
//!        | term term
//!        | ident | nat | string | "()" | "(" term ")" | "(" term "," term ")"
//!        | "new" "[" stype "]" | "fork" | "send" | "recv" | "close" | "cancel"
//! ```
//!
//! Arrows associate to the right and bind loosest, then `+`, then `*`. In
//! terms, `*` binds tighter than `+`, both associate to the left, and
//! application binds tighter than either. `inl`, `inr` and `absurd` take an
//! application as their argument. A lambda, `let` or `case` may appear as
//! the last argument of an application. Comments run from `--` to the end of
//! the line.
//!
//! Parsing renames shadowed binders apart, so every binder in the result has
//! a distinct name.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use super::syntax::{ConstK, PgvType, Span, Term, TermKind};
use crate::priority::{Bounds, Priority};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("ParseError at {span}: {message}")]
pub struct ParseError {
    pub span: Span,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Nat(u64),
    Str(String),
    Sym(&'static str),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Nat(n) => format!("`{n}`"),
            Tok::Str(s) => format!("{s:?}"),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

const SYMBOLS: [&str; 19] =
    ["->", "\\", "λ", ":", ".", "(", ")", ",", "=", "{", "}", ";", "-", "[", "]", "!", "?", "+", "*"];

const KEYWORDS: [&str; 20] = [
    "let", "in", "inl", "inr", "case", "of", "absurd", "new", "fork", "send", "recv", "close", "cancel", "end", "bot",
    "top", "Unit", "Void", "Int", "String",
];

fn lex(src: &str) -> Result<Vec<(Tok, Span)>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let err = |line, col, message: String| ParseError { span: Span { line, col }, message };
    while i < chars.len() {
        let c = chars[i];
        let span = Span { line, col };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '-' && chars.get(i + 1) == Some(&'-') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            let n = text.parse().map_err(|_| err(line, col, format!("number {text} is too large")))?;
            col += i - start;
            out.push((Tok::Nat(n), span));
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '\'') {
                i += 1;
            }
            col += i - start;
            out.push((Tok::Ident(chars[start..i].iter().collect()), span));
            continue;
        }
        if c == '"' {
            let mut s = String::new();
            i += 1;
            col += 1;
            loop {
                match chars.get(i) {
                    None | Some('\n') => return Err(err(span.line, span.col, "unterminated string".into())),
                    Some('"') => {
                        i += 1;
                        col += 1;
                        break;
                    }
                    Some('\\') => {
                        let esc = match chars.get(i + 1) {
                            Some('n') => '\n',
                            Some('t') => '\t',
                            Some('"') => '"',
                            Some('\\') => '\\',
                            _ => return Err(err(line, col, "invalid escape in string".into())),
                        };
                        s.push(esc);
                        i += 2;
                        col += 2;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                        col += 1;
                    }
                }
            }
            out.push((Tok::Str(s), span));
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            Some(sym) => {
                let n = sym.chars().count();
                i += n;
                col += n;
                out.push((Tok::Sym(if *sym == "λ" { "\\" } else { sym }), span));
            }
            None => return Err(err(line, col, format!("unexpected character {c:?}"))),
        }
    }
    out.push((Tok::Eof, Span { line, col }));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, Span)>,
    pos: usize,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].0
    }

    fn span(&self) -> Span {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn fail<T>(&self, expected: &str) -> PResult<T> {
        Err(ParseError { span: self.span(), message: format!("expected {expected}, found {}", self.peek().describe()) })
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == k)
    }

    fn expect_sym(&mut self, s: &str) -> PResult<()> {
        if self.is_sym(s) {
            self.bump();
            Ok(())
        } else {
            self.fail(&format!("`{s}`"))
        }
    }

    fn expect_kw(&mut self, k: &str) -> PResult<()> {
        if self.is_kw(k) {
            self.bump();
            Ok(())
        } else {
            self.fail(&format!("`{k}`"))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(x) if !KEYWORDS.contains(&x.as_str()) => {
                self.bump();
                Ok(x)
            }
            _ => self.fail("an identifier"),
        }
    }

    fn nat(&mut self) -> PResult<u64> {
        match *self.peek() {
            Tok::Nat(n) => {
                self.bump();
                Ok(n)
            }
            _ => self.fail("a natural number"),
        }
    }

    fn prio(&mut self) -> PResult<Priority> {
        if self.is_kw("bot") {
            self.bump();
            Ok(Priority::Bot)
        } else if self.is_kw("top") {
            self.bump();
            Ok(Priority::Top)
        } else {
            Ok(Priority::At(self.nat()?))
        }
    }

    // ---- types ----

    fn ty(&mut self) -> PResult<PgvType> {
        let dom = self.sum_ty()?;
        if self.is_sym("-") && matches!(self.peek_at(1), Tok::Sym("[")) {
            self.bump();
            self.bump();
            let p = self.prio()?;
            self.expect_sym(",")?;
            let q = self.prio()?;
            self.expect_sym("]")?;
            self.expect_sym("->")?;
            let cod = self.ty()?;
            return Ok(PgvType::arrow(Bounds::new(p, q), dom, cod));
        }
        Ok(dom)
    }

    fn sum_ty(&mut self) -> PResult<PgvType> {
        let a = self.prod_ty()?;
        if self.is_sym("+") {
            self.bump();
            return Ok(PgvType::sum(a, self.sum_ty()?));
        }
        Ok(a)
    }

    fn prod_ty(&mut self) -> PResult<PgvType> {
        let a = self.atom_ty()?;
        if self.is_sym("*") {
            self.bump();
            return Ok(PgvType::prod(a, self.prod_ty()?));
        }
        Ok(a)
    }

    fn atom_ty(&mut self) -> PResult<PgvType> {
        if self.is_sym("(") {
            self.bump();
            let t = self.ty()?;
            self.expect_sym(")")?;
            return Ok(t);
        }
        if self.is_sym("!") || self.is_sym("?") || self.is_kw("end") {
            return self.session_ty();
        }
        let t = match self.peek() {
            Tok::Ident(k) if k == "Unit" => PgvType::Unit,
            Tok::Ident(k) if k == "Void" => PgvType::Void,
            Tok::Ident(k) if k == "Int" => PgvType::Int,
            Tok::Ident(k) if k == "String" => PgvType::Str,
            _ => return self.fail("a type"),
        };
        self.bump();
        Ok(t)
    }

    fn session_ty(&mut self) -> PResult<PgvType> {
        if self.is_kw("end") {
            self.bump();
            return Ok(PgvType::End(self.nat()?));
        }
        let sending = self.is_sym("!");
        if !sending && !self.is_sym("?") {
            return self.fail("a session type");
        }
        self.bump();
        let o = self.nat()?;
        let payload = self.ty()?;
        self.expect_sym(".")?;
        let at = self.span();
        let cont = self.atom_ty()?;
        if !cont.is_session() {
            return Err(ParseError { span: at, message: format!("expected a session type after `.`, found {cont}") });
        }
        Ok(if sending { PgvType::send(o, payload, cont) } else { PgvType::recv(o, payload, cont) })
    }

    // ---- terms ----

    fn term(&mut self) -> PResult<Term> {
        let span = self.span();
        if self.is_sym("\\") {
            self.bump();
            let x = self.ident()?;
            self.expect_sym(":")?;
            let ty = self.ty()?;
            self.expect_sym(".")?;
            let body = self.term()?;
            return Ok(Term::new(TermKind::Lam(x, ty, Box::new(body)), span));
        }
        if self.is_kw("let") {
            self.bump();
            self.expect_sym("(")?;
            if self.is_sym(")") {
                self.bump();
                self.expect_sym("=")?;
                let m = self.term()?;
                self.expect_kw("in")?;
                let n = self.term()?;
                return Ok(Term::new(TermKind::LetUnit(Box::new(m), Box::new(n)), span));
            }
            let x = self.ident()?;
            self.expect_sym(",")?;
            let y = self.ident()?;
            self.expect_sym(")")?;
            self.expect_sym("=")?;
            let m = self.term()?;
            self.expect_kw("in")?;
            let n = self.term()?;
            return Ok(Term::new(TermKind::LetPair(x, y, Box::new(m), Box::new(n)), span));
        }
        if self.is_kw("case") {
            self.bump();
            let l = self.term()?;
            self.expect_kw("of")?;
            self.expect_sym("{")?;
            self.expect_kw("inl")?;
            let x = self.ident()?;
            self.expect_sym("->")?;
            let m = self.term()?;
            self.expect_sym(";")?;
            self.expect_kw("inr")?;
            let y = self.ident()?;
            self.expect_sym("->")?;
            let n = self.term()?;
            self.expect_sym("}")?;
            return Ok(Term::new(TermKind::Case(Box::new(l), x, Box::new(m), y, Box::new(n)), span));
        }
        self.add_term()
    }

    fn add_term(&mut self) -> PResult<Term> {
        let mut lhs = self.mul_term()?;
        while self.is_sym("+") {
            self.bump();
            let rhs = self.mul_term()?;
            let span = lhs.span;
            lhs = Term::new(TermKind::Add(Box::new(lhs), Box::new(rhs)), span);
        }
        Ok(lhs)
    }

    fn mul_term(&mut self) -> PResult<Term> {
        let mut lhs = self.app_term()?;
        while self.is_sym("*") {
            self.bump();
            let rhs = self.app_term()?;
            let span = lhs.span;
            lhs = Term::new(TermKind::Mul(Box::new(lhs), Box::new(rhs)), span);
        }
        Ok(lhs)
    }

    fn starts_binder(&self) -> bool {
        self.is_sym("\\") || self.is_kw("let") || self.is_kw("case")
    }

    fn starts_atom(&self) -> bool {
        match self.peek() {
            Tok::Nat(_) | Tok::Str(_) => true,
            Tok::Sym(s) => *s == "(",
            Tok::Ident(k) => {
                !KEYWORDS.contains(&k.as_str())
                    || matches!(k.as_str(), "new" | "fork" | "send" | "recv" | "close" | "cancel")
            }
            Tok::Eof => false,
        }
    }

    fn app_term(&mut self) -> PResult<Term> {
        let span = self.span();
        for (kw, wrap) in
            [("inl", TermKind::Inl as fn(Box<Term>) -> TermKind), ("inr", TermKind::Inr), ("absurd", TermKind::Absurd)]
        {
            if self.is_kw(kw) {
                self.bump();
                let arg = if self.starts_binder() { self.term()? } else { self.app_term()? };
                return Ok(Term::new(wrap(Box::new(arg)), span));
            }
        }
        let mut f = self.atom()?;
        loop {
            if self.starts_atom() {
                let arg = self.atom()?;
                f = Term::new(TermKind::App(Box::new(f), Box::new(arg)), span);
            } else if self.starts_binder() {
                let arg = self.term()?;
                return Ok(Term::new(TermKind::App(Box::new(f), Box::new(arg)), span));
            } else {
                return Ok(f);
            }
        }
    }

    fn atom(&mut self) -> PResult<Term> {
        let span = self.span();
        let kind = match self.peek().clone() {
            Tok::Nat(n) => {
                self.bump();
                let n =
                    i64::try_from(n).map_err(|_| ParseError { span, message: format!("integer {n} is too large") })?;
                TermKind::IntLit(n)
            }
            Tok::Str(s) => {
                self.bump();
                TermKind::StrLit(s)
            }
            Tok::Sym("(") => {
                self.bump();
                if self.is_sym(")") {
                    self.bump();
                    TermKind::Unit
                } else {
                    let a = self.term()?;
                    if self.is_sym(",") {
                        self.bump();
                        let b = self.term()?;
                        self.expect_sym(")")?;
                        TermKind::Pair(Box::new(a), Box::new(b))
                    } else {
                        self.expect_sym(")")?;
                        return Ok(Term::new(a.kind, span));
                    }
                }
            }
            Tok::Ident(k) => match k.as_str() {
                "new" => {
                    self.bump();
                    self.expect_sym("[")?;
                    let at = self.span();
                    let s = self.ty()?;
                    if !s.is_session() {
                        return Err(ParseError { span: at, message: format!("new expects a session type, found {s}") });
                    }
                    self.expect_sym("]")?;
                    TermKind::Const(ConstK::New(s))
                }
                "fork" | "send" | "recv" | "close" | "cancel" => {
                    self.bump();
                    TermKind::Const(match k.as_str() {
                        "fork" => ConstK::Fork,
                        "send" => ConstK::Send,
                        "recv" => ConstK::Recv,
                        "close" => ConstK::Close,
                        _ => ConstK::Cancel,
                    })
                }
                _ => TermKind::Var(self.ident()?),
            },
            _ => return self.fail("a term"),
        };
        Ok(Term::new(kind, span))
    }
}

/// Parses a closed or open term and renames its binders apart.
pub fn parse(src: &str) -> Result<Term, ParseError> {
    let mut p = Parser { toks: lex(src)?, pos: 0 };
    let t = p.term()?;
    if !matches!(p.peek(), Tok::Eof) {
        return p.fail("end of input");
    }
    Ok(freshen(t))
}

/// Parses a type.
pub fn parse_type(src: &str) -> Result<PgvType, ParseError> {
    let mut p = Parser { toks: lex(src)?, pos: 0 };
    let t = p.ty()?;
    if !matches!(p.peek(), Tok::Eof) {
        return p.fail("end of input");
    }
    Ok(t)
}

/// Renames binders so that each binder name occurs once. The first binder
/// of a name keeps it; later ones get a `#n` suffix.
pub fn freshen(t: Term) -> Term {
    let mut seen: HashSet<String> = t.free_vars().into_iter().collect();
    let mut counter = 0usize;
    rename(t, &mut HashMap::new(), &mut seen, &mut counter)
}

fn bind_name(
    x: String,
    scope: &mut HashMap<String, String>,
    seen: &mut HashSet<String>,
    counter: &mut usize,
) -> (String, Option<String>) {
    let fresh = if seen.insert(x.clone()) {
        x.clone()
    } else {
        loop {
            *counter += 1;
            let candidate = format!("{x}#{counter}");
            if seen.insert(candidate.clone()) {
                break candidate;
            }
        }
    };
    let prev = scope.insert(x, fresh.clone());
    (fresh, prev)
}

fn unbind(x: &str, prev: Option<String>, scope: &mut HashMap<String, String>) {
    match prev {
        Some(p) => scope.insert(x.to_string(), p),
        None => scope.remove(x),
    };
}

fn rename(t: Term, scope: &mut HashMap<String, String>, seen: &mut HashSet<String>, counter: &mut usize) -> Term {
    let span = t.span;
    let mut go = |t: Box<Term>, scope: &mut HashMap<String, String>| Box::new(rename(*t, scope, seen, counter));
    let kind = match t.kind {
        TermKind::Var(x) => TermKind::Var(scope.get(&x).cloned().unwrap_or(x)),
        TermKind::Lam(x, ty, body) => {
            let mut fresh = |x: String, scope: &mut HashMap<String, String>| bind_name(x, scope, seen, counter);
            let (nx, prev) = fresh(x.clone(), scope);
            let body = Box::new(rename(*body, scope, seen, counter));
            unbind(&x, prev, scope);
            TermKind::Lam(nx, ty, body)
        }
        TermKind::App(a, b) => {
            let a = go(a, scope);
            TermKind::App(a, go(b, scope))
        }
        TermKind::LetUnit(a, b) => {
            let a = go(a, scope);
            TermKind::LetUnit(a, go(b, scope))
        }
        TermKind::Pair(a, b) => {
            let a = go(a, scope);
            TermKind::Pair(a, go(b, scope))
        }
        TermKind::Add(a, b) => {
            let a = go(a, scope);
            TermKind::Add(a, go(b, scope))
        }
        TermKind::Mul(a, b) => {
            let a = go(a, scope);
            TermKind::Mul(a, go(b, scope))
        }
        TermKind::Inl(m) => TermKind::Inl(go(m, scope)),
        TermKind::Inr(m) => TermKind::Inr(go(m, scope)),
        TermKind::Absurd(m) => TermKind::Absurd(go(m, scope)),
        TermKind::LetPair(x, y, m, n) => {
            let m = Box::new(rename(*m, scope, seen, counter));
            let (nx, px) = bind_name(x.clone(), scope, seen, counter);
            let (ny, py) = bind_name(y.clone(), scope, seen, counter);
            let n = Box::new(rename(*n, scope, seen, counter));
            unbind(&y, py, scope);
            unbind(&x, px, scope);
            TermKind::LetPair(nx, ny, m, n)
        }
        TermKind::Case(l, x, m, y, n) => {
            let l = Box::new(rename(*l, scope, seen, counter));
            let (nx, px) = bind_name(x.clone(), scope, seen, counter);
            let m = Box::new(rename(*m, scope, seen, counter));
            unbind(&x, px, scope);
            let (ny, py) = bind_name(y.clone(), scope, seen, counter);
            let n = Box::new(rename(*n, scope, seen, counter));
            unbind(&y, py, scope);
            TermKind::Case(l, nx, m, ny, n)
        }
        other => other,
    };
    Term::new(kind, span)
}
