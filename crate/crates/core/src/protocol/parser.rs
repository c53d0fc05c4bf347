use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use super::ast::*;
use super::lexer::{parse_error, tokenize, Tok, Token};
use crate::engine::{ObservableSpec, Party};
use crate::error::Result;
use crate::linalg::{re, ComplexMatrix, StateVector, C64, ONE, ZERO};

struct Cursor<'a> {
    toks: &'a [Token],
    i: usize,
    end: crate::protocol::ast::Pos,
}

impl<'a> Cursor<'a> {
    fn new(toks: &'a [Token], end: Pos) -> Self {
        Self { toks, i: 0, end }
    }

    fn peek(&self) -> Option<&'a Token> {
        self.toks.get(self.i)
    }

    fn peek_tok(&self) -> Option<&'a Tok> {
        self.peek().map(|t| &t.tok)
    }

    fn pos(&self) -> Pos {
        self.peek().map_or(self.end, |t| t.pos)
    }

    fn at_end(&self) -> bool {
        self.i >= self.toks.len()
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(parse_error(self.pos(), message))
    }

    fn describe(&self) -> String {
        match self.peek_tok() {
            None => "end of statement".into(),
            Some(Tok::Ident(s)) => format!("`{s}`"),
            Some(Tok::Number(x)) => format!("number {x}"),
            Some(Tok::Ket(l, _)) => format!("ket |{l}>"),
            Some(Tok::Sym(s)) => format!("`{s}`"),
            Some(Tok::Newline) => "end of line".into(),
        }
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if matches!(self.peek_tok(), Some(Tok::Sym(t)) if *t == s) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.err(format!("expected `{s}`, found {}", self.describe()))
        }
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if matches!(self.peek_tok(), Some(Tok::Ident(t)) if t == kw) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<()> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            self.err(format!("expected `{kw}`, found {}", self.describe()))
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, Pos)> {
        match self.peek() {
            Some(Token { tok: Tok::Ident(s), pos }) => {
                self.i += 1;
                Ok((s.clone(), *pos))
            }
            _ => self.err(format!("expected {what}, found {}", self.describe())),
        }
    }

    /// Identifier or integer, used for outcome labels.
    fn label(&mut self) -> Result<(String, Pos)> {
        match self.peek() {
            Some(Token { tok: Tok::Ident(s), pos }) => {
                self.i += 1;
                Ok((s.clone(), *pos))
            }
            Some(Token { tok: Tok::Number(x), pos }) if x.fract() == 0.0 && *x >= 0.0 => {
                self.i += 1;
                Ok((format!("{}", *x as u64), *pos))
            }
            _ => self.err(format!("expected a label, found {}", self.describe())),
        }
    }

    fn integer(&mut self, what: &str) -> Result<usize> {
        match self.peek_tok() {
            Some(Tok::Number(x)) if x.fract() == 0.0 && *x >= 0.0 => {
                self.i += 1;
                Ok(*x as usize)
            }
            _ => self.err(format!("expected {what}, found {}", self.describe())),
        }
    }

    fn party(&mut self) -> Result<Party> {
        let pos = self.pos();
        let (name, _) = self.ident("a party (A or B)")?;
        match name.parse::<Party>() {
            Ok(Party::Channel) | Err(_) => Err(parse_error(pos, format!("unknown party `{name}`; use A or B"))),
            Ok(p) => Ok(p),
        }
    }

    fn ident_list(&mut self, what: &str) -> Result<Vec<(String, Pos)>> {
        let mut out = vec![self.ident(what)?];
        while self.eat_sym(",") {
            out.push(self.ident(what)?);
        }
        Ok(out)
    }

    fn label_list(&mut self) -> Result<Vec<(String, Pos)>> {
        let mut out = vec![self.label()?];
        while self.eat_sym(",") {
            out.push(self.label()?);
        }
        Ok(out)
    }

    fn finish(&self) -> Result<()> {
        if self.at_end() {
            Ok(())
        } else {
            self.err(format!("unexpected {} at end of statement", self.describe()))
        }
    }

    // ---- complex expressions ----

    fn expr(&mut self) -> Result<C64> {
        let mut acc = self.term()?;
        loop {
            if self.eat_sym("+") {
                acc += self.term()?;
            } else if self.eat_sym("-") {
                acc -= self.term()?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<C64> {
        let mut acc = self.unary()?;
        loop {
            if self.eat_sym("*") {
                acc *= self.unary()?;
            } else if self.eat_sym("/") {
                let pos = self.pos();
                let d = self.unary()?;
                if d == ZERO {
                    return Err(parse_error(pos, "division by zero"));
                }
                acc /= d;
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary(&mut self) -> Result<C64> {
        if self.eat_sym("-") {
            return Ok(-self.unary()?);
        }
        if self.eat_sym("+") {
            return self.unary();
        }
        let base = self.primary()?;
        if self.eat_sym("^") {
            let e = self.unary()?;
            return Ok(base.powc(e));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<C64> {
        let pos = self.pos();
        match self.peek_tok() {
            Some(Tok::Number(x)) => {
                let x = *x;
                self.i += 1;
                Ok(re(x))
            }
            Some(Tok::Sym("(")) => {
                self.i += 1;
                let v = self.expr()?;
                self.expect_sym(")")?;
                Ok(v)
            }
            Some(Tok::Ident(name)) => {
                let name = name.clone();
                self.i += 1;
                match name.as_str() {
                    "i" => Ok(C64::new(0.0, 1.0)),
                    "pi" => Ok(re(PI)),
                    "sqrt" | "exp" | "sin" | "cos" | "conj" => {
                        self.expect_sym("(")?;
                        let a = self.expr()?;
                        self.expect_sym(")")?;
                        Ok(match name.as_str() {
                            "sqrt" => a.sqrt(),
                            "exp" => a.exp(),
                            "sin" => a.sin(),
                            "cos" => a.cos(),
                            _ => a.conj(),
                        })
                    }
                    other => Err(parse_error(pos, format!("unknown identifier `{other}` in expression"))),
                }
            }
            _ => self.err(format!("expected a number, found {}", self.describe())),
        }
    }

    fn vector(&mut self) -> Result<Vec<C64>> {
        self.expect_sym("[")?;
        let mut out = vec![self.expr()?];
        while self.eat_sym(",") {
            out.push(self.expr()?);
        }
        self.expect_sym("]")?;
        Ok(out)
    }

    fn matrix(&mut self) -> Result<ComplexMatrix> {
        let pos = self.pos();
        self.expect_sym("[")?;
        let mut rows = vec![self.vector()?];
        while self.eat_sym(",") {
            rows.push(self.vector()?);
        }
        self.expect_sym("]")?;
        ComplexMatrix::from_rows(&rows).map_err(|e| parse_error(pos, e.to_string()))
    }
}

/// Splits the token stream into statements at newlines and `;`.
fn statements(tokens: &[Token]) -> Vec<&[Token]> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, t) in tokens.iter().enumerate() {
        if matches!(t.tok, Tok::Newline | Tok::Sym(";")) {
            if i > start {
                out.push(&tokens[start..i]);
            }
            start = i + 1;
        }
    }
    out
}

pub(crate) fn builtin_unitary(name: &str) -> Option<ComplexMatrix> {
    let i = C64::new(0.0, 1.0);
    let h = re(FRAC_1_SQRT_2);
    let rows = match name {
        "I" => vec![vec![ONE, ZERO], vec![ZERO, ONE]],
        "X" => vec![vec![ZERO, ONE], vec![ONE, ZERO]],
        "Y" => vec![vec![ZERO, -i], vec![i, ZERO]],
        "Z" => vec![vec![ONE, ZERO], vec![ZERO, -ONE]],
        "H" => vec![vec![h, h], vec![h, -h]],
        "S" => vec![vec![ONE, ZERO], vec![ZERO, i]],
        _ => return None,
    };
    Some(ComplexMatrix::from_rows(&rows).expect("square builtin"))
}

pub(crate) fn builtin_observable(name: &str) -> Option<ObservableSpec> {
    match name {
        "sx" => Some(ObservableSpec::pauli_x()),
        "sy" => Some(ObservableSpec::pauli_y()),
        "sz" => Some(ObservableSpec::pauli_z()),
        _ => None,
    }
}

pub(crate) fn builtin_state(name: &str) -> Option<StateVector> {
    match name {
        "bell" => {
            let h = re(FRAC_1_SQRT_2);
            Some(StateVector::new(vec![2, 2], vec![h, ZERO, ZERO, h]).expect("normalized"))
        }
        _ => None,
    }
}

fn ket_state(label: &str, dim: Option<usize>) -> Option<StateVector> {
    let h = re(FRAC_1_SQRT_2);
    let ih = C64::new(0.0, FRAC_1_SQRT_2);
    let two = |a: C64, b: C64| StateVector::new(vec![2], vec![a, b]).ok();
    match (label, dim) {
        ("+", None) => two(h, h),
        ("-", None) => two(h, -h),
        ("+i", None) => two(h, ih),
        ("-i", None) => two(h, -ih),
        _ => {
            let k: usize = label.parse().ok()?;
            StateVector::ket(dim.unwrap_or(2), k).ok()
        }
    }
}

/// Record written by a choose or case arm, with its label union.
type Written = (String, Pos, Vec<String>);

struct Parser {
    script: ProtocolScript,
    owners: BTreeMap<String, Party>,
    classical_seen: Option<Pos>,
    rounds_seen: bool,
}

/// Parses protocol source text into a checked [`ProtocolScript`].
pub fn parse(text: &str) -> Result<ProtocolScript> {
    let tokens = tokenize(text)?;
    let mut p = Parser {
        script: ProtocolScript {
            rounds: 1,
            decls: Declarations::default(),
            quantum: Vec::new(),
            classical: Vec::new(),
            records: BTreeMap::new(),
            subsystems: BTreeMap::new(),
            messages: BTreeMap::new(),
            purified: BTreeSet::new(),
            notes: Vec::new(),
        },
        owners: BTreeMap::new(),
        classical_seen: None,
        rounds_seen: false,
    };
    let end = tokens.last().map(|t| t.pos).unwrap_or_default();
    for stmt in statements(&tokens) {
        let mut c = Cursor::new(stmt, end_of(stmt, end));
        p.statement(&mut c)?;
    }
    Ok(p.script)
}

fn end_of(stmt: &[Token], fallback: Pos) -> Pos {
    stmt.last().map_or(fallback, |t| Pos {
        line: t.pos.line,
        column: t.pos.column + 1,
    })
}

impl Parser {
    fn statement(&mut self, c: &mut Cursor) -> Result<()> {
        let pos = c.pos();
        let mut guard = Guard::Always;
        if c.eat_keyword("if") {
            let kind = if c.eat_keyword("committed") {
                0
            } else if c.eat_keyword("revealed") {
                1
            } else {
                return c.err("expected `committed` or `revealed` after `if`");
            };
            let bit_pos = c.pos();
            let bit = c.integer("a bit (0 or 1)")?;
            if bit > 1 {
                return Err(parse_error(bit_pos, "a bit must be 0 or 1"));
            }
            c.expect_sym(":")?;
            guard = if kind == 0 {
                Guard::Committed(bit as u8)
            } else {
                Guard::Revealed(bit as u8)
            };
        }
        let kw_pos = c.pos();
        let (kw, _) = c.ident("a statement keyword")?;
        let guarded = guard != Guard::Always;
        match kw.as_str() {
            "rounds" | "observable" | "unitary" | "state" | "table" | "prepare" | "send" if guarded => {
                return Err(parse_error(pos, format!("`{kw}` cannot be guarded")));
            }
            "rounds" => {
                if self.rounds_seen || !self.script.quantum.is_empty() {
                    return Err(parse_error(kw_pos, "`rounds` must appear once, before any step"));
                }
                let n_pos = c.pos();
                let n = c.integer("a round count")?;
                if n == 0 {
                    return Err(parse_error(n_pos, "at least one round is required"));
                }
                self.script.rounds = n;
                self.rounds_seen = true;
            }
            "observable" => self.observable_decl(c)?,
            "unitary" => self.unitary_decl(c)?,
            "state" => self.state_decl(c)?,
            "table" => self.table_decl(c)?,
            "prepare" | "send" | "measure" | "apply" | "choose" | "case" => {
                if let Some(cpos) = self.classical_seen {
                    return Err(parse_error(
                        kw_pos,
                        format!("quantum step `{kw}` after the classical phase began at {cpos}"),
                    ));
                }
                let step = match kw.as_str() {
                    "prepare" => self.prepare(c)?,
                    "send" => self.send(c)?,
                    "measure" => self.measure(c, kw_pos)?,
                    "apply" => self.apply(c)?,
                    "choose" => self.choose(c, kw_pos)?,
                    _ => self.case(c, kw_pos)?,
                };
                if matches!(guard, Guard::Revealed(_)) {
                    return Err(parse_error(pos, "quantum steps cannot depend on the revealed bit"));
                }
                self.script.quantum.push(QStep { pos: kw_pos, guard, step });
            }
            "announce" | "reveal" | "verify" => {
                self.classical_seen.get_or_insert(kw_pos);
                let step = match kw.as_str() {
                    "announce" => self.announce(c)?,
                    "reveal" => {
                        let ppos = c.pos();
                        let party = c.party()?;
                        if party != Party::Alice {
                            return Err(parse_error(ppos, "only Alice reveals a commitment"));
                        }
                        ClassicalStep::Reveal { party }
                    }
                    _ => self.verify(c)?,
                };
                self.script.classical.push(CStep { pos: kw_pos, guard, step });
            }
            other => return Err(parse_error(kw_pos, format!("unknown statement `{other}`"))),
        }
        c.finish()
    }

    fn fresh_decl(&self, name: &str, pos: Pos) -> Result<()> {
        let d = &self.script.decls;
        if d.observables.contains_key(name)
            || d.unitaries.contains_key(name)
            || d.states.contains_key(name)
            || d.tables.contains_key(name)
        {
            return Err(parse_error(pos, format!("`{name}` is already declared")));
        }
        Ok(())
    }

    fn observable_decl(&mut self, c: &mut Cursor) -> Result<()> {
        let (name, pos) = c.ident("an observable name")?;
        self.fresh_decl(&name, pos)?;
        c.expect_sym("=")?;
        let vpos = c.pos();
        let obs = if c.eat_keyword("pauli_x") {
            ObservableSpec::pauli_x()
        } else if c.eat_keyword("pauli_y") {
            ObservableSpec::pauli_y()
        } else if c.eat_keyword("pauli_z") {
            ObservableSpec::pauli_z()
        } else if c.eat_keyword("computational") {
            let labels = self.bare_labels(c)?;
            let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
            ObservableSpec::computational(name.clone(), &refs).map_err(|e| parse_error(vpos, e.to_string()))?
        } else if c.eat_keyword("basis") {
            let m = c.matrix()?;
            c.expect_keyword("labels")?;
            let labels = self.bare_labels(c)?;
            ObservableSpec::new(name.clone(), m, labels).map_err(|e| parse_error(vpos, e.to_string()))?
        } else {
            return c.err("expected pauli_x, pauli_y, pauli_z, computational or basis");
        };
        self.script.decls.observables.insert(name.clone(), obs.with_label(name));
        Ok(())
    }

    fn bare_labels(&mut self, c: &mut Cursor) -> Result<Vec<String>> {
        let mut labels = Vec::new();
        while !c.at_end() {
            labels.push(c.label()?.0);
            c.eat_sym(",");
        }
        if labels.is_empty() {
            return c.err("expected outcome labels");
        }
        Ok(labels)
    }

    fn unitary_decl(&mut self, c: &mut Cursor) -> Result<()> {
        let (name, pos) = c.ident("a unitary name")?;
        self.fresh_decl(&name, pos)?;
        c.expect_sym("=")?;
        let vpos = c.pos();
        let m = if let Some(Tok::Ident(alias)) = c.peek_tok() {
            let alias = alias.clone();
            c.i += 1;
            self.lookup_unitary(&alias, vpos)?
        } else {
            c.matrix()?
        };
        if !m.is_unitary(crate::engine::UNITARY_TOL) {
            return Err(parse_error(vpos, format!("`{name}` is not unitary")));
        }
        self.script.decls.unitaries.insert(name, m);
        Ok(())
    }

    fn state_decl(&mut self, c: &mut Cursor) -> Result<()> {
        let (name, pos) = c.ident("a state name")?;
        self.fresh_decl(&name, pos)?;
        c.expect_sym("=")?;
        let vpos = c.pos();
        let amps = c.vector()?;
        let dims = if c.eat_keyword("dims") {
            let mut d = vec![c.integer("a dimension")?];
            while c.eat_sym(",") {
                d.push(c.integer("a dimension")?);
            }
            d
        } else {
            vec![amps.len()]
        };
        let state = StateVector::new(dims, amps).map_err(|e| parse_error(vpos, e.to_string()))?;
        self.script.decls.states.insert(name, state);
        Ok(())
    }

    fn table_decl(&mut self, c: &mut Cursor) -> Result<()> {
        let (name, pos) = c.ident("a table name")?;
        self.fresh_decl(&name, pos)?;
        c.expect_sym("=")?;
        c.expect_sym("{")?;
        let mut entries = BTreeMap::new();
        loop {
            let (k, kpos) = c.label()?;
            c.expect_sym(":")?;
            let (v, _) = c.label()?;
            if entries.insert(k.clone(), v).is_some() {
                return Err(parse_error(kpos, format!("duplicate table key `{k}`")));
            }
            if !c.eat_sym(",") {
                break;
            }
        }
        c.expect_sym("}")?;
        self.script.decls.tables.insert(name, entries);
        Ok(())
    }

    fn lookup_unitary(&mut self, name: &str, pos: Pos) -> Result<ComplexMatrix> {
        if let Some(u) = self.script.decls.unitaries.get(name) {
            return Ok(u.clone());
        }
        if let Some(u) = builtin_unitary(name) {
            self.script.decls.unitaries.insert(name.to_string(), u.clone());
            return Ok(u);
        }
        Err(parse_error(pos, format!("unknown unitary `{name}`")))
    }

    fn lookup_observable(&mut self, name: &str, pos: Pos) -> Result<ObservableSpec> {
        if let Some(o) = self.script.decls.observables.get(name) {
            return Ok(o.clone());
        }
        if let Some(o) = builtin_observable(name) {
            self.script.decls.observables.insert(name.to_string(), o.clone());
            return Ok(o);
        }
        Err(parse_error(pos, format!("unknown observable `{name}`")))
    }

    fn targets(&self, c: &mut Cursor, party: Party) -> Result<(Vec<String>, usize)> {
        let list = c.ident_list("a subsystem")?;
        let mut dim = 1;
        let mut names = Vec::new();
        for (name, pos) in list {
            let Some(d) = self.script.subsystems.get(&name) else {
                return Err(parse_error(pos, format!("unknown subsystem `{name}`")));
            };
            if names.contains(&name) {
                return Err(parse_error(pos, format!("subsystem `{name}` listed twice")));
            }
            let owner = self.owners[&name];
            if owner != party {
                return Err(parse_error(
                    pos,
                    format!("{party} does not hold `{name}` here (held by {owner})"),
                ));
            }
            dim *= d;
            names.push(name);
        }
        Ok((names, dim))
    }

    fn prepare(&mut self, c: &mut Cursor) -> Result<QuantumStep> {
        let party = c.party()?;
        let list = c.ident_list("a subsystem")?;
        for (name, pos) in &list {
            if self.script.subsystems.contains_key(name) {
                return Err(parse_error(*pos, format!("subsystem `{name}` already exists")));
            }
        }
        let spos = c.pos();
        let (state, source) = match c.peek_tok() {
            Some(Tok::Ident(name)) => {
                let name = name.clone();
                c.i += 1;
                let s = match self.script.decls.states.get(&name) {
                    Some(s) => s.clone(),
                    None => match builtin_state(&name) {
                        Some(s) => {
                            self.script.decls.states.insert(name.clone(), s.clone());
                            s
                        }
                        None => return Err(parse_error(spos, format!("unknown state `{name}`"))),
                    },
                };
                (s, name)
            }
            Some(Tok::Ket(..)) => {
                let mut state = StateVector::scalar();
                let mut text = String::new();
                while let Some(Tok::Ket(label, dim)) = c.peek_tok() {
                    let kpos = c.pos();
                    let k = ket_state(label, *dim)
                        .ok_or_else(|| parse_error(kpos, format!("unknown ket |{label}>")))?;
                    text.push_str(&format!("|{label}>"));
                    if let Some(d) = dim {
                        text.push_str(&format!("_{d}"));
                    }
                    state = state.tensor(&k).map_err(|e| parse_error(kpos, e.to_string()))?;
                    c.i += 1;
                }
                (state, text)
            }
            _ => return c.err(format!("expected a state, found {}", c.describe())),
        };
        if state.dims().len() != list.len() {
            return Err(parse_error(
                spos,
                format!("state has {} factors but {} subsystems are listed", state.dims().len(), list.len()),
            ));
        }
        for ((name, _), &d) in list.iter().zip(state.dims()) {
            self.script.subsystems.insert(name.clone(), d);
            self.owners.insert(name.clone(), party);
        }
        Ok(QuantumStep::Prepare {
            party,
            subsystems: list.into_iter().map(|(n, _)| n).collect(),
            state,
            source,
        })
    }

    fn send(&mut self, c: &mut Cursor) -> Result<QuantumStep> {
        let (name, pos) = c.ident("a subsystem")?;
        let Some(&owner) = self.owners.get(&name) else {
            return Err(parse_error(pos, format!("unknown subsystem `{name}`")));
        };
        let fpos = c.pos();
        let from = c.party()?;
        let to = c.party()?;
        if owner != from {
            return Err(parse_error(fpos, format!("{from} cannot send `{name}`: it is held by {owner}")));
        }
        self.owners.insert(name.clone(), to);
        Ok(QuantumStep::Send { subsystem: name, from, to })
    }

    fn define_record(&mut self, name: &str, pos: Pos, party: Party, labels: &[String]) -> Result<()> {
        if self.script.records.contains_key(name) {
            return Err(parse_error(pos, format!("record `{name}` is already defined")));
        }
        self.script.records.insert(
            name.to_string(),
            RecordInfo {
                party,
                labels: labels.to_vec(),
                source: RecordSource::Classical,
                defined_at: pos,
            },
        );
        Ok(())
    }

    fn measure(&mut self, c: &mut Cursor, pos: Pos) -> Result<QuantumStep> {
        let party = c.party()?;
        let (op, labels) = self.measure_op(c, party)?;
        let ArmOp::Measure { observable, targets, record } = op else { unreachable!() };
        self.define_record(&record, pos, party, &labels)?;
        Ok(QuantumStep::Measure { party, observable, targets, record })
    }

    /// `OBS targets -> record`; returns the op and the outcome labels.
    fn measure_op(&mut self, c: &mut Cursor, party: Party) -> Result<(ArmOp, Vec<String>)> {
        let (obs_name, opos) = c.ident("an observable")?;
        let obs = self.lookup_observable(&obs_name, opos)?;
        let tpos = c.pos();
        let (targets, dim) = self.targets(c, party)?;
        if dim != obs.dim() {
            return Err(parse_error(
                tpos,
                format!("observable `{obs_name}` has dimension {} but the targets have dimension {dim}", obs.dim()),
            ));
        }
        c.expect_sym("->")?;
        let (record, _) = c.ident("a record name")?;
        let labels = obs.outcomes().iter().map(|s| s.to_string()).collect();
        Ok((
            ArmOp::Measure {
                observable: obs_name,
                targets,
                record,
            },
            labels,
        ))
    }

    fn apply_op(&mut self, c: &mut Cursor, party: Party) -> Result<ArmOp> {
        let (name, upos) = c.ident("a unitary")?;
        let u = self.lookup_unitary(&name, upos)?;
        let tpos = c.pos();
        let (targets, dim) = self.targets(c, party)?;
        if u.rows() != dim {
            return Err(parse_error(
                tpos,
                format!("unitary `{name}` has dimension {} but the targets have dimension {dim}", u.rows()),
            ));
        }
        Ok(ArmOp::Apply { unitary: name, targets })
    }

    fn apply(&mut self, c: &mut Cursor) -> Result<QuantumStep> {
        let party = c.party()?;
        let ArmOp::Apply { unitary, targets } = self.apply_op(c, party)? else { unreachable!() };
        Ok(QuantumStep::Apply { party, unitary, targets })
    }

    /// `{ key: op | key: op }`; returns arms plus the records they write with
    /// their label unions.
    fn arms(&mut self, c: &mut Cursor, party: Party, key_len: usize) -> Result<(Vec<Arm>, Vec<Written>)> {
        c.expect_sym("{")?;
        let mut arms = Vec::new();
        let mut written: Vec<Written> = Vec::new();
        loop {
            let kpos = c.pos();
            let key: Vec<String> = c.label_list()?.into_iter().map(|(k, _)| k).collect();
            if key.len() != key_len {
                return Err(parse_error(kpos, format!("arm key has {} labels, expected {key_len}", key.len())));
            }
            if arms.iter().any(|a: &Arm| a.key == key) {
                return Err(parse_error(kpos, format!("duplicate arm `{}`", key.join(","))));
            }
            c.expect_sym(":")?;
            let opos = c.pos();
            let op = if c.eat_keyword("measure") {
                let (op, labels) = self.measure_op(c, party)?;
                let rec = op.record().unwrap().to_string();
                match written.iter_mut().find(|(r, _, _)| *r == rec) {
                    Some((_, _, ls)) => {
                        for l in labels {
                            if !ls.contains(&l) {
                                ls.push(l);
                            }
                        }
                    }
                    None => written.push((rec, opos, labels)),
                }
                op
            } else if c.eat_keyword("apply") {
                self.apply_op(c, party)?
            } else if c.eat_keyword("skip") {
                ArmOp::Skip
            } else {
                return c.err(format!("expected measure, apply or skip, found {}", c.describe()));
            };
            arms.push(Arm { key, op });
            if !c.eat_sym("|") {
                break;
            }
        }
        c.expect_sym("}")?;
        Ok((arms, written))
    }

    fn choose(&mut self, c: &mut Cursor, pos: Pos) -> Result<QuantumStep> {
        let party = c.party()?;
        let (record, rpos) = c.ident("a record name")?;
        let mut weights = None;
        if c.eat_keyword("weights") {
            let wpos = c.pos();
            let w: Vec<f64> = c.vector()?.into_iter().map(|z| z.re).collect();
            weights = Some((w, wpos));
        }
        let (arms, written) = self.arms(c, party, 1)?;
        let weights = match weights {
            Some((w, wpos)) => {
                if w.len() != arms.len() {
                    return Err(parse_error(wpos, format!("{} weights for {} arms", w.len(), arms.len())));
                }
                let sum: f64 = w.iter().sum();
                if w.iter().any(|x| *x < 0.0) || (sum - 1.0).abs() > 1e-9 {
                    return Err(parse_error(wpos, format!("weights must be nonnegative and sum to 1 (sum {sum})")));
                }
                // renormalize literal rounding such as 0.333...
                w.iter().map(|x| x / sum).collect()
            }
            None => vec![1.0 / arms.len() as f64; arms.len()],
        };
        let labels: Vec<String> = arms.iter().map(|a| a.key[0].clone()).collect();
        self.define_record(&record, rpos, party, &labels)?;
        for (rec, rpos, labels) in written {
            if rec == record {
                return Err(parse_error(rpos, format!("record `{rec}` is already defined")));
            }
            self.define_record(&rec, rpos, party, &labels)?;
        }
        let _ = pos;
        Ok(QuantumStep::Choose { party, record, weights, arms })
    }

    fn case(&mut self, c: &mut Cursor, _pos: Pos) -> Result<QuantumStep> {
        let party = c.party()?;
        let controls = c.ident_list("a record")?;
        for (rec, rpos) in &controls {
            match self.script.records.get(rec) {
                None => return Err(parse_error(*rpos, format!("unknown record `{rec}`"))),
                Some(info) if info.party != party => {
                    return Err(parse_error(*rpos, format!("record `{rec}` belongs to {}", info.party)))
                }
                _ => {}
            }
        }
        let (arms, written) = self.arms(c, party, controls.len())?;
        for arm in &arms {
            for (k, (rec, _)) in arm.key.iter().zip(&controls) {
                if k != "_" && !self.script.records[rec].labels.contains(k) {
                    return Err(parse_error(
                        _pos,
                        format!("record `{rec}` never takes the value `{k}`"),
                    ));
                }
            }
        }
        for (rec, rpos, labels) in written {
            self.define_record(&rec, rpos, party, &labels)?;
        }
        Ok(QuantumStep::Case {
            party,
            controls: controls.into_iter().map(|(r, _)| r).collect(),
            arms,
        })
    }

    fn cond(&mut self, c: &mut Cursor, party: Party) -> Result<Cond> {
        let (rec, rpos) = c.ident("a record")?;
        let Some(info) = self.script.records.get(&rec) else {
            return Err(parse_error(rpos, format!("unknown record `{rec}`")));
        };
        if info.party != party {
            return Err(parse_error(rpos, format!("{party} cannot read record `{rec}` held by {}", info.party)));
        }
        let labels = info.labels.clone();
        let check = |l: &(String, Pos)| -> Result<String> {
            if labels.contains(&l.0) {
                Ok(l.0.clone())
            } else {
                Err(parse_error(l.1, format!("record `{rec}` never takes the value `{}`", l.0)))
            }
        };
        if c.eat_sym("==") {
            let l = c.label()?;
            Ok(Cond::Eq(rec.clone(), check(&l)?))
        } else if c.eat_sym("!=") {
            let l = c.label()?;
            Ok(Cond::Ne(rec.clone(), check(&l)?))
        } else if c.eat_keyword("in") {
            c.expect_sym("{")?;
            let ls = c.label_list()?;
            c.expect_sym("}")?;
            Ok(Cond::In(rec.clone(), ls.iter().map(check).collect::<Result<_>>()?))
        } else {
            c.err(format!("expected `==`, `!=` or `in`, found {}", c.describe()))
        }
    }

    fn set_expr(&mut self, c: &mut Cursor, party: Party) -> Result<SetExpr> {
        let mut acc = self.set_term(c, party)?;
        while c.eat_sym("-") {
            let rhs = self.set_term(c, party)?;
            acc = SetExpr::Minus(Box::new(acc), Box::new(rhs));
        }
        Ok(acc)
    }

    fn set_term(&mut self, c: &mut Cursor, party: Party) -> Result<SetExpr> {
        let mut base = if c.eat_sym("(") {
            let s = self.set_expr(c, party)?;
            c.expect_sym(")")?;
            s
        } else {
            let (name, pos) = c.ident("a set (rounds or a message)")?;
            if name == "rounds" {
                SetExpr::Rounds
            } else {
                match self.script.messages.get(&name) {
                    Some(m) if m.kind == MessageKind::Set => SetExpr::Message(name),
                    Some(_) => return Err(parse_error(pos, format!("message `{name}` is not a set of rounds"))),
                    None => return Err(parse_error(pos, format!("unknown message `{name}`"))),
                }
            }
        };
        while c.eat_keyword("where") {
            let cond = self.cond(c, party)?;
            base = SetExpr::Where(Box::new(base), cond);
        }
        Ok(base)
    }

    fn announce(&mut self, c: &mut Cursor) -> Result<ClassicalStep> {
        let party = c.party()?;
        let (name, npos) = c.ident("a message name")?;
        if self.script.messages.contains_key(&name) && !self.alternative_definition(&name, party) {
            return Err(parse_error(npos, format!("message `{name}` is already announced")));
        }
        c.expect_sym("=")?;
        let set = self.set_expr(c, party)?;
        let (payload, kind) = if c.eat_sym("->") {
            let (table, tpos) = c.ident("a table")?;
            if !self.script.decls.tables.contains_key(&table) {
                return Err(parse_error(tpos, format!("unknown table `{table}`")));
            }
            c.expect_sym("(")?;
            let (record, rpos) = c.ident("a record")?;
            c.expect_sym(")")?;
            match self.script.records.get(&record) {
                None => return Err(parse_error(rpos, format!("unknown record `{record}`"))),
                Some(info) if info.party != party => {
                    return Err(parse_error(rpos, format!("{party} cannot read record `{record}` held by {}", info.party)))
                }
                _ => {}
            }
            (Payload::Lookup { set, table, record }, MessageKind::Lookup)
        } else {
            (Payload::Set(set), MessageKind::Set)
        };
        if let Some(prev) = self.script.messages.get(&name) {
            if prev.kind != kind {
                return Err(parse_error(npos, format!("message `{name}` is announced with two different kinds")));
            }
        }
        self.script.messages.insert(name.clone(), MessageInfo { party, kind });
        Ok(ClassicalStep::Announce { party, name, payload })
    }

    /// A message may be announced once per guarded alternative (for example
    /// once under `if committed 0` and once under `if committed 1`).
    fn alternative_definition(&self, name: &str, party: Party) -> bool {
        self.script.messages.get(name).is_some_and(|m| m.party == party)
    }

    fn verify(&mut self, c: &mut Cursor) -> Result<ClassicalStep> {
        let party = c.party()?;
        let (message, mpos) = c.ident("a message")?;
        match self.script.messages.get(&message) {
            Some(m) if m.kind == MessageKind::Lookup => {}
            Some(_) => return Err(parse_error(mpos, format!("message `{message}` carries no per-round values"))),
            None => return Err(parse_error(mpos, format!("unknown message `{message}`"))),
        }
        c.expect_keyword("matches")?;
        let (record, rpos) = c.ident("a record")?;
        match self.script.records.get(&record) {
            None => return Err(parse_error(rpos, format!("unknown record `{record}`"))),
            Some(info) if info.party != party => {
                return Err(parse_error(rpos, format!("{party} cannot read record `{record}` held by {}", info.party)))
            }
            _ => {}
        }
        c.expect_keyword("over")?;
        let over = self.set_expr(c, party)?;
        Ok(ClassicalStep::Verify { party, message, record, over })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn minimal_script() {
        let s = parse("prepare A q0 |0>; send q0 A B").unwrap();
        assert_eq!(s.quantum.len(), 2);
        assert_eq!(s.subsystems["q0"], 2);
    }

    #[test]
    fn measure_on_unowned_subsystem() {
        let err = parse("prepare A q |0>\nsend q A B\nmeasure A sz q -> r").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, column: 14, .. }), "{err}");
    }

    #[test]
    fn send_by_non_owner() {
        let err = parse("prepare A q |0>\nsend q B A").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn dimension_mismatch_in_literal() {
        let err = parse("unitary U = [[1, 0], [0, 1]]\nprepare A a,b bell\napply A U a,b").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, column: 11, .. }), "{err}");
        let err = parse("unitary U = [[1, 1], [0, 1]]").unwrap_err();
        assert!(err.to_string().contains("not unitary"));
    }

    #[test]
    fn undeclared_names() {
        assert!(parse("prepare A q |0>\nmeasure A foo q -> r").is_err());
        assert!(parse("prepare A q psi").is_err());
        assert!(parse("announce A m = bogus").is_err());
    }

    #[test]
    fn record_defined_twice() {
        let err = parse("prepare A q,r |0>|0>\nmeasure A sz q -> m\nmeasure A sz r -> m").unwrap_err();
        assert!(err.to_string().contains("already defined"));
    }

    #[test]
    fn expressions_in_literals() {
        let s = parse("state psi = [cos(pi/8), exp(i*pi/4)*sin(pi/8)]\nprepare A q psi").unwrap();
        let amps = s.decls.states["psi"].amplitudes().to_vec();
        assert!((amps[0].re - (PI / 8.0).cos()).abs() < 1e-15);
        assert!((amps[1].im - (PI / 4.0).sin() * (PI / 8.0).sin()).abs() < 1e-15);
    }

    #[test]
    fn choose_records_and_weights() {
        let src = "prepare A c |0>\nsend c A B\nchoose B k weights [1/3, 2/3] { x: measure sx c -> m | z: measure sz c -> m }";
        let s = parse(src).unwrap();
        assert_eq!(s.records["k"].labels, vec!["x", "z"]);
        assert_eq!(s.records["m"].labels, vec!["up", "down"]);
        let QuantumStep::Choose { weights, .. } = &s.quantum[2].step else { panic!() };
        assert!((weights[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn quantum_after_classical_rejected() {
        let src = "prepare A q |0>\nmeasure A sz q -> r\nannounce A s = rounds where r == up\nmeasure A sx q -> t";
        let err = parse(src).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }));
    }

    #[test]
    fn announce_cannot_read_other_records() {
        let src = "prepare A q |0>\nsend q A B\nmeasure B sz q -> r\nannounce A s = rounds where r == up";
        let err = parse(src).unwrap_err();
        assert!(err.to_string().contains("cannot read"));
    }

    #[test]
    fn multiline_matrix() {
        let src = "unitary U = [\n  [0, 1],\n  [1, 0]\n]\nprepare A q |0>\napply A U q";
        assert!(parse(src).is_ok());
    }
}
