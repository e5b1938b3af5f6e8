//! Textual µDD language.
//!
//! ```text
//! counters load.causes_walk, load.pde$_miss;   // optional, fixes counter order
//!
//! switch ("STLB Status") {
//!   case Hit: done;
//!   case Miss:
//!     walk: counter load.causes_walk;
//!     switch ("PDE$ Status") {
//!       case Hit:
//!       case Miss: counter load.pde$_miss;
//!     }
//! }
//! order walk -> retire;
//! retire: action "retire µop";
//! ```
//!
//! Statements run in sequence and the end of the program is an implicit
//! `done`. An empty case falls through to the statement after the switch.
//! Names made only of letters, digits, `_`, `.` and `$` may be written bare;
//! anything else is double-quoted. The first statement is the entry node.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::mudd::{CausalityEdge, CounterNamespace, HappensBefore, MuDD, MuddError, Node, NodeKind};

/// Source text plus where it came from, for diagnostics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DslSource {
    pub text: String,
    pub origin: String,
}

impl DslSource {
    pub fn new(text: impl Into<String>, origin: impl Into<String>) -> Self {
        DslSource {
            text: text.into(),
            origin: origin.into(),
        }
    }

    pub fn inline(text: impl Into<String>) -> Self {
        Self::new(text, "<inline>")
    }

    pub fn read(path: &Path) -> std::io::Result<Self> {
        Ok(Self::new(std::fs::read_to_string(path)?, path.display().to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Position {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Syntax,
    UnknownCounter,
    DuplicateLabel,
    EmptySwitch,
    UnreachableStatement,
    DuplicateCase,
    UnknownLabel,
    Model,
}

impl ErrorKind {
    fn tag(self) -> &'static str {
        match self {
            ErrorKind::Syntax => "syntax",
            ErrorKind::UnknownCounter => "unknown-counter",
            ErrorKind::DuplicateLabel => "duplicate-label",
            ErrorKind::EmptySwitch => "empty-switch",
            ErrorKind::UnreachableStatement => "unreachable",
            ErrorKind::DuplicateCase => "duplicate-case",
            ErrorKind::UnknownLabel => "unknown-label",
            ErrorKind::Model => "model",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub kind: ErrorKind,
    pub position: Position,
    pub message: String,
}

/// Every error found in one source, in source order.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{}", format_diagnostics(&self.origin, &self.errors))]
pub struct Diagnostics {
    pub origin: String,
    pub errors: Vec<Diagnostic>,
}

/// One line per error: `origin:line:col: error[kind]: message`.
pub fn format_diagnostics(origin: &str, errors: &[Diagnostic]) -> String {
    let mut sorted: Vec<&Diagnostic> = errors.iter().collect();
    sorted.sort_by_key(|d| d.position);
    sorted
        .iter()
        .map(|d| format!("{origin}:{}: error[{}]: {}", d.position, d.kind.tag(), d.message))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Word(String),
    Quoted(String),
    Semi,
    Colon,
    Comma,
    Arrow,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Word(w) => write!(f, "`{w}`"),
            Tok::Quoted(s) => write!(f, "\"{s}\""),
            Tok::Semi => write!(f, "`;`"),
            Tok::Colon => write!(f, "`:`"),
            Tok::Comma => write!(f, "`,`"),
            Tok::Arrow => write!(f, "`->`"),
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::LBrace => write!(f, "`{{`"),
            Tok::RBrace => write!(f, "`}}`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '$')
}

const KEYWORDS: &[&str] = &["action", "counter", "counters", "done", "switch", "case", "order"];

const UNSUPPORTED: &[&str] = &[
    "while", "for", "loop", "do", "if", "else", "goto", "fn", "function", "let", "var", "const", "return", "break",
    "continue", "default",
];

fn lex(text: &str, errors: &mut Vec<Diagnostic>) -> Vec<(Tok, Position)> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    macro_rules! bump {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }
    while i < chars.len() {
        let c = chars[i];
        let pos = Position { line, column: col };
        if c.is_whitespace() {
            bump!();
        } else if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                bump!();
            }
        } else if c == '/' && chars.get(i + 1) == Some(&'*') {
            bump!();
            bump!();
            loop {
                if i >= chars.len() {
                    errors.push(Diagnostic {
                        kind: ErrorKind::Syntax,
                        position: pos,
                        message: "unterminated block comment".into(),
                    });
                    break;
                }
                if chars[i] == '*' && chars.get(i + 1) == Some(&'/') {
                    bump!();
                    bump!();
                    break;
                }
                bump!();
            }
        } else if c == '"' {
            bump!();
            let mut s = String::new();
            let mut closed = false;
            while i < chars.len() && chars[i] != '\n' {
                if chars[i] == '"' {
                    bump!();
                    closed = true;
                    break;
                }
                if chars[i] == '\\' && matches!(chars.get(i + 1), Some('"') | Some('\\')) {
                    bump!();
                }
                s.push(chars[i]);
                bump!();
            }
            if !closed {
                errors.push(Diagnostic {
                    kind: ErrorKind::Syntax,
                    position: pos,
                    message: "unterminated string".into(),
                });
            }
            out.push((Tok::Quoted(s), pos));
        } else if c == '-' && chars.get(i + 1) == Some(&'>') {
            bump!();
            bump!();
            out.push((Tok::Arrow, pos));
        } else if is_word_char(c) {
            let mut w = String::new();
            while i < chars.len() && is_word_char(chars[i]) {
                w.push(chars[i]);
                bump!();
            }
            out.push((Tok::Word(w), pos));
        } else {
            let tok = match c {
                ';' => Some(Tok::Semi),
                ':' => Some(Tok::Colon),
                ',' => Some(Tok::Comma),
                '(' => Some(Tok::LParen),
                ')' => Some(Tok::RParen),
                '{' => Some(Tok::LBrace),
                '}' => Some(Tok::RBrace),
                _ => None,
            };
            match tok {
                Some(t) => out.push((t, pos)),
                None => errors.push(Diagnostic {
                    kind: ErrorKind::Syntax,
                    position: pos,
                    message: format!("unexpected character `{c}`"),
                }),
            }
            bump!();
        }
    }
    out.push((Tok::Eof, Position { line, column: col }));
    out
}

#[derive(Debug, Clone)]
struct Name {
    text: String,
    pos: Position,
}

#[derive(Debug, Clone)]
enum StmtKind {
    Action(Name),
    Counter(Name),
    Done,
    Switch { property: Name, cases: Vec<Case> },
    Order { from: Name, to: Name },
    Counters(Vec<Name>),
}

#[derive(Debug, Clone)]
struct Stmt {
    label: Option<Name>,
    kind: StmtKind,
    pos: Position,
}

#[derive(Debug, Clone)]
struct Case {
    value: Name,
    body: Vec<Stmt>,
}

struct Parser {
    toks: Vec<(Tok, Position)>,
    at: usize,
    errors: Vec<Diagnostic>,
}

type PResult<T> = Result<T, ()>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.at + k).min(self.toks.len() - 1)].0
    }

    fn pos(&self) -> Position {
        self.toks[self.at].1
    }

    fn advance(&mut self) -> (Tok, Position) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn error<T>(&mut self, pos: Position, message: String) -> PResult<T> {
        self.errors.push(Diagnostic {
            kind: ErrorKind::Syntax,
            position: pos,
            message,
        });
        Err(())
    }

    fn expect(&mut self, tok: Tok, context: &str) -> PResult<Position> {
        if *self.peek() == tok {
            Ok(self.advance().1)
        } else {
            let (found, pos) = (self.peek().clone(), self.pos());
            self.error(pos, format!("expected {tok} {context}, found {found}"))
        }
    }

    fn name(&mut self, what: &str) -> PResult<Name> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Word(w) if KEYWORDS.contains(&w.as_str()) => {
                self.error(pos, format!("expected {what}, found keyword `{w}` (quote it to use it as a name)"))
            }
            Tok::Word(w) | Tok::Quoted(w) => {
                self.advance();
                Ok(Name { text: w, pos })
            }
            other => self.error(pos, format!("expected {what}, found {other}")),
        }
    }

    /// Skips to just past the next `;`, or up to a `}` / `case`.
    fn recover(&mut self) {
        loop {
            match self.peek() {
                Tok::Eof | Tok::RBrace => return,
                Tok::Word(w) if w == "case" => return,
                Tok::Semi => {
                    self.advance();
                    return;
                }
                _ => {
                    self.advance();
                }
            }
        }
    }

    fn block(&mut self, top_level: bool) -> Vec<Stmt> {
        let mut stmts = Vec::new();
        loop {
            match self.peek() {
                Tok::Eof => return stmts,
                Tok::RBrace if !top_level => return stmts,
                Tok::Word(w) if w == "case" && !top_level => return stmts,
                _ => {}
            }
            let before = self.at;
            match self.statement() {
                Ok(s) => stmts.push(s),
                Err(()) => {
                    self.recover();
                    if self.at == before {
                        // stray `}` or `case` at top level
                        self.advance();
                    }
                }
            }
        }
    }

    fn statement(&mut self) -> PResult<Stmt> {
        let mut label = None;
        if let (Tok::Word(_) | Tok::Quoted(_), Tok::Colon) = (self.peek(), self.peek_at(1)) {
            let is_keyword = matches!(self.peek(), Tok::Word(w) if KEYWORDS.contains(&w.as_str()));
            if !is_keyword {
                label = Some(self.name("label")?);
                self.advance();
            }
        }
        let pos = self.pos();
        let word = match self.peek().clone() {
            Tok::Word(w) => w,
            other => return self.error(pos, format!("expected a statement, found {other}")),
        };
        if UNSUPPORTED.contains(&word.as_str()) {
            return self.error(
                pos,
                format!("`{word}` is not supported: the language has no loops, functions, conditionals or variables"),
            );
        }
        let kind = match word.as_str() {
            "action" => {
                self.advance();
                let n = self.name("an action name")?;
                self.expect(Tok::Semi, "after action")?;
                StmtKind::Action(n)
            }
            "counter" => {
                self.advance();
                let n = self.name("a counter name")?;
                self.expect(Tok::Semi, "after counter")?;
                StmtKind::Counter(n)
            }
            "done" => {
                self.advance();
                self.expect(Tok::Semi, "after `done`")?;
                StmtKind::Done
            }
            "switch" => {
                self.advance();
                self.expect(Tok::LParen, "after `switch`")?;
                let property = self.name("a property name")?;
                self.expect(Tok::RParen, "after the switch property")?;
                self.expect(Tok::LBrace, "to open the switch body")?;
                let mut cases = Vec::new();
                loop {
                    match self.peek().clone() {
                        Tok::RBrace => {
                            self.advance();
                            break;
                        }
                        Tok::Word(w) if w == "case" => {
                            self.advance();
                            let value = match self.name("a case value") {
                                Ok(v) => v,
                                Err(()) => {
                                    self.recover();
                                    continue;
                                }
                            };
                            if self.expect(Tok::Colon, "after the case value").is_err() {
                                self.recover();
                            }
                            let body = self.block(false);
                            cases.push(Case { value, body });
                        }
                        Tok::Eof => {
                            let p = self.pos();
                            return self.error(p, "unterminated switch: expected `}`".into());
                        }
                        other => {
                            let p = self.pos();
                            let _: PResult<()> = self.error(p, format!("expected `case` or `}}`, found {other}"));
                            self.recover();
                            if matches!(self.peek(), Tok::Semi) {
                                self.advance();
                            }
                        }
                    }
                }
                StmtKind::Switch { property, cases }
            }
            "order" => {
                self.advance();
                let from = self.name("a label")?;
                self.expect(Tok::Arrow, "between ordered labels")?;
                let to = self.name("a label")?;
                self.expect(Tok::Semi, "after order")?;
                StmtKind::Order { from, to }
            }
            "counters" => {
                self.advance();
                let mut names = vec![self.name("a counter name")?];
                while *self.peek() == Tok::Comma {
                    self.advance();
                    names.push(self.name("a counter name")?);
                }
                self.expect(Tok::Semi, "after the counter list")?;
                StmtKind::Counters(names)
            }
            _ => {
                return self.error(
                    pos,
                    format!("unknown statement `{word}` (expected action, counter, done, switch, order or counters)"),
                )
            }
        };
        if let Some(l) = &label {
            if matches!(kind, StmtKind::Order { .. } | StmtKind::Counters(_)) {
                return self.error(l.pos, "only node statements can be labeled".into());
            }
        }
        Ok(Stmt { label, kind, pos })
    }
}

/// An open exit: a node whose next causality edge is not yet known.
#[derive(Debug, Clone)]
struct Exit {
    from: usize,
    value: Option<String>,
    // position of the case among its switch's cases
    rank: usize,
}

struct Compiler<'a> {
    nodes: Vec<Node>,
    edges: Vec<(CausalityEdge, usize)>,
    labels: HashMap<String, usize>,
    orders: Vec<(Name, Name)>,
    namespace: Option<&'a CounterNamespace>,
    inferred: Vec<String>,
    counter_uses: Vec<Name>,
    errors: Vec<Diagnostic>,
}

impl Compiler<'_> {
    fn err(&mut self, kind: ErrorKind, position: Position, message: String) {
        self.errors.push(Diagnostic { kind, position, message });
    }

    fn add_node(&mut self, kind: NodeKind, label: &Option<Name>, exits: &[Exit]) -> usize {
        let id = self.nodes.len();
        let node = match label {
            Some(l) => {
                if self.labels.insert(l.text.clone(), id).is_some() {
                    self.err(ErrorKind::DuplicateLabel, l.pos, format!("label `{}` is defined twice", l.text));
                }
                Node::labeled(kind, l.text.clone())
            }
            None => Node::new(kind),
        };
        self.nodes.push(node);
        for e in exits {
            let edge = CausalityEdge {
                from: e.from,
                to: id,
                value: e.value.clone(),
            };
            self.edges.push((edge, e.rank));
        }
        id
    }

    /// Compiles a block fed by `exits`. Returns the block's open exits and
    /// whether the block was entered at all (reachable).
    fn block(&mut self, stmts: &[Stmt], mut exits: Vec<Exit>, mut entry: Option<&mut Option<usize>>) -> Vec<Exit> {
        let mut terminated_at: Option<Position> = None;
        for s in stmts {
            if matches!(s.kind, StmtKind::Order { .. } | StmtKind::Counters(_)) {
                match &s.kind {
                    StmtKind::Order { from, to } => self.orders.push((from.clone(), to.clone())),
                    StmtKind::Counters(names) => {
                        for n in names {
                            self.declare_counter(n);
                        }
                    }
                    _ => unreachable!(),
                }
                continue;
            }
            if let Some(done_pos) = terminated_at {
                self.err(
                    ErrorKind::UnreachableStatement,
                    s.pos,
                    format!("statement can never run: every path ends before it (at {done_pos})"),
                );
                continue;
            }
            let first = self.nodes.len();
            exits = match &s.kind {
                StmtKind::Action(n) => {
                    let id = self.add_node(NodeKind::Event { name: n.text.clone() }, &s.label, &exits);
                    vec![Exit { from: id, value: None, rank: 0 }]
                }
                StmtKind::Counter(n) => {
                    self.counter_uses.push(n.clone());
                    let id = self.add_node(NodeKind::Counter { name: n.text.clone() }, &s.label, &exits);
                    vec![Exit { from: id, value: None, rank: 0 }]
                }
                StmtKind::Done => {
                    self.add_node(NodeKind::Done, &s.label, &exits);
                    Vec::new()
                }
                StmtKind::Switch { property, cases } => {
                    let id = self.add_node(
                        NodeKind::Decision {
                            property: property.text.clone(),
                        },
                        &s.label,
                        &exits,
                    );
                    if cases.is_empty() {
                        self.err(
                            ErrorKind::EmptySwitch,
                            s.pos,
                            format!("switch on `{}` has no cases", property.text),
                        );
                    }
                    let mut seen: Vec<&str> = Vec::new();
                    let mut out = Vec::new();
                    for (rank, case) in cases.iter().enumerate() {
                        if seen.contains(&case.value.text.as_str()) {
                            self.err(
                                ErrorKind::DuplicateCase,
                                case.value.pos,
                                format!("case `{}` appears twice in switch on `{}`", case.value.text, property.text),
                            );
                            continue;
                        }
                        seen.push(&case.value.text);
                        let start = vec![Exit {
                            from: id,
                            value: Some(case.value.text.clone()),
                            rank,
                        }];
                        out.extend(self.block(&case.body, start, None));
                    }
                    out
                }
                StmtKind::Order { .. } | StmtKind::Counters(_) => unreachable!(),
            };
            if let Some(slot) = entry.as_deref_mut() {
                if slot.is_none() {
                    *slot = Some(first);
                }
            }
            if exits.is_empty() {
                terminated_at = Some(s.pos);
            }
        }
        exits
    }

    fn declare_counter(&mut self, n: &Name) {
        match self.namespace {
            Some(ns) if !ns.contains(&n.text) => self.err(
                ErrorKind::UnknownCounter,
                n.pos,
                format!("counter `{}` is not in the namespace", n.text),
            ),
            Some(_) => {}
            None => {
                if self.inferred.contains(&n.text) {
                    self.err(
                        ErrorKind::Syntax,
                        n.pos,
                        format!("counter `{}` is declared twice", n.text),
                    );
                } else {
                    self.inferred.push(n.text.clone());
                }
            }
        }
    }
}

fn has_counter_declaration(stmts: &[Stmt]) -> bool {
    stmts.iter().any(|s| matches!(s.kind, StmtKind::Counters(_)))
}

/// Parses `src` into a diagram. With `ns`, every counter must belong to it
/// and it becomes the diagram's namespace; otherwise the namespace is the
/// `counters` declaration, or the counters in order of first appearance.
pub fn parse(src: &DslSource, ns: Option<&CounterNamespace>) -> Result<MuDD, Diagnostics> {
    let mut errors = Vec::new();
    let toks = lex(&src.text, &mut errors);
    let mut parser = Parser { toks, at: 0, errors };
    let program = parser.block(true);
    let mut errors = parser.errors;

    let declared = has_counter_declaration(&program);
    let mut c = Compiler {
        nodes: Vec::new(),
        edges: Vec::new(),
        labels: HashMap::new(),
        orders: Vec::new(),
        namespace: ns,
        inferred: Vec::new(),
        counter_uses: Vec::new(),
        errors: Vec::new(),
    };
    let mut entry = None;
    let exits = c.block(&program, Vec::new(), Some(&mut entry));
    if entry.is_none() || !exits.is_empty() {
        let id = c.add_node(NodeKind::Done, &None, &exits);
        entry.get_or_insert(id);
    }

    for n in std::mem::take(&mut c.counter_uses) {
        let known = match ns {
            Some(ns) => ns.contains(&n.text),
            None if declared => c.inferred.contains(&n.text),
            None => {
                if !c.inferred.contains(&n.text) {
                    c.inferred.push(n.text.clone());
                }
                true
            }
        };
        if !known {
            c.err(
                ErrorKind::UnknownCounter,
                n.pos,
                format!("counter `{}` is not in the namespace", n.text),
            );
        }
    }

    let mut happens_before = Vec::new();
    for (from, to) in std::mem::take(&mut c.orders) {
        let mut resolve = |n: &Name| match c.labels.get(&n.text) {
            Some(&id) => Some(id),
            None => {
                c.errors.push(Diagnostic {
                    kind: ErrorKind::UnknownLabel,
                    position: n.pos,
                    message: format!("no statement is labeled `{}`", n.text),
                });
                None
            }
        };
        if let (Some(a), Some(b)) = (resolve(&from), resolve(&to)) {
            happens_before.push(HappensBefore { from: a, to: b });
        }
    }

    errors.extend(c.errors);
    if !errors.is_empty() {
        errors.sort_by_key(|d| d.position);
        return Err(Diagnostics {
            origin: src.origin.clone(),
            errors,
        });
    }

    let namespace = match ns {
        Some(ns) => ns.clone(),
        None => CounterNamespace::new(c.inferred).expect("inferred names are distinct"),
    };
    // branches leave a decision in case order, whenever their targets were created
    let mut edges = c.edges;
    edges.sort_by_key(|(e, rank)| (e.from, *rank));
    let edges = edges.into_iter().map(|(e, _)| e).collect();
    MuDD::new(namespace, c.nodes, edges, happens_before, entry.expect("entry set"))
        .map_err(|e: MuddError| Diagnostics {
            origin: src.origin.clone(),
            errors: vec![Diagnostic {
                kind: ErrorKind::Model,
                position: Position { line: 1, column: 1 },
                message: e.to_string(),
            }],
        })
}

/// Reads and parses a `.mudd` file.
pub fn parse_file(path: &Path, ns: Option<&CounterNamespace>) -> Result<MuDD, Diagnostics> {
    let src = DslSource::read(path).map_err(|e| Diagnostics {
        origin: path.display().to_string(),
        errors: vec![Diagnostic {
            kind: ErrorKind::Syntax,
            position: Position { line: 1, column: 1 },
            message: format!("cannot read file: {e}"),
        }],
    })?;
    parse(&src, ns)
}

fn quote(name: &str) -> String {
    let bare = !name.is_empty()
        && name.chars().all(is_word_char)
        && !KEYWORDS.contains(&name)
        && !UNSUPPORTED.contains(&name);
    if bare {
        name.to_string()
    } else {
        format!("\"{}\"", name.replace('\\', "\\\\").replace('"', "\\\""))
    }
}

struct Printer<'a> {
    model: &'a MuDD,
    topo_rank: Vec<usize>,
    labeled: Vec<bool>,
    hb_labels: BTreeMap<usize, String>,
    out: String,
}

impl Printer<'_> {
    fn label_of(&mut self, id: usize) -> Option<String> {
        if self.labeled[id] {
            return None;
        }
        let label = self.hb_labels.get(&id).cloned()?;
        self.labeled[id] = true;
        Some(label)
    }

    /// Every path from `from` reaches `target` or a done node.
    fn funnels(&self, from: usize, target: usize, memo: &mut HashMap<usize, bool>) -> bool {
        if from == target {
            return true;
        }
        if let Some(&v) = memo.get(&from) {
            return v;
        }
        let v = match self.model.node(from).kind {
            NodeKind::Done => true,
            _ => self
                .model
                .successors(from)
                .iter()
                .all(|(s, _)| self.funnels(*s, target, memo)),
        };
        memo.insert(from, v);
        v
    }

    /// Nearest non-done node that all branches of `decision` meet at (paths
    /// ending early count as meeting anywhere).
    fn join_of(&self, decision: usize) -> Option<usize> {
        let mut reachable = vec![false; self.model.nodes().len()];
        let mut stack = vec![decision];
        while let Some(n) = stack.pop() {
            for (s, _) in self.model.successors(n) {
                if !reachable[*s] {
                    reachable[*s] = true;
                    stack.push(*s);
                }
            }
        }
        let mut candidates: Vec<usize> = (0..reachable.len())
            .filter(|&n| reachable[n] && !matches!(self.model.node(n).kind, NodeKind::Done))
            .collect();
        candidates.sort_by_key(|&n| self.topo_rank[n]);
        candidates.into_iter().find(|&j| {
            let mut memo = HashMap::new();
            self.model
                .successors(decision)
                .iter()
                .all(|(s, _)| self.funnels(*s, j, &mut memo))
        })
    }

    fn line(&mut self, depth: usize, label: Option<String>, body: &str) {
        for _ in 0..depth {
            self.out.push_str("  ");
        }
        if let Some(l) = label {
            self.out.push_str(&quote(&l));
            self.out.push_str(": ");
        }
        self.out.push_str(body);
        self.out.push('\n');
    }

    fn sequence(&mut self, mut node: usize, stop: Option<usize>, depth: usize) {
        loop {
            if Some(node) == stop {
                return;
            }
            let label = self.label_of(node);
            match &self.model.node(node).kind {
                NodeKind::Event { name } => {
                    let text = format!("action {};", quote(name));
                    self.line(depth, label, &text);
                }
                NodeKind::Counter { name } => {
                    let text = format!("counter {};", quote(name));
                    self.line(depth, label, &text);
                }
                NodeKind::Done => {
                    self.line(depth, label, "done;");
                    return;
                }
                NodeKind::Decision { property } => {
                    let text = format!("switch ({}) {{", quote(property));
                    self.line(depth, label, &text);
                    let join = self.join_of(node);
                    for (succ, value) in self.model.successors(node).to_vec() {
                        let value = value.expect("decision edges are labeled");
                        self.line(depth + 1, None, &format!("case {}:", quote(&value)));
                        self.sequence(succ, join, depth + 2);
                    }
                    self.line(depth, None, "}");
                    match join {
                        Some(j) => {
                            node = j;
                            continue;
                        }
                        None => return,
                    }
                }
            }
            node = self.model.successors(node)[0].0;
        }
    }
}

fn topological_rank(model: &MuDD) -> Vec<usize> {
    let n = model.nodes().len();
    let mut indegree = vec![0usize; n];
    for id in 0..n {
        for (s, _) in model.successors(id) {
            indegree[*s] += 1;
        }
    }
    let mut ready: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).rev().collect();
    let mut rank = vec![0; n];
    let mut next = 0;
    while let Some(id) = ready.pop() {
        rank[id] = next;
        next += 1;
        for (s, _) in model.successors(id).iter().rev() {
            indegree[*s] -= 1;
            if indegree[*s] == 0 {
                ready.push(*s);
            }
        }
    }
    rank
}

/// Renders a diagram as source text that parses back to a diagram with the
/// same µpaths and signatures. Shared tails that do not rejoin cleanly are
/// printed once per branch; labels are kept on the first copy.
pub fn to_source(model: &MuDD) -> String {
    let mut hb_labels = BTreeMap::new();
    let mut used: Vec<String> = Vec::new();
    for hb in model.happens_before() {
        for id in [hb.from, hb.to] {
            if hb_labels.contains_key(&id) {
                continue;
            }
            let base = model.node(id).label.clone().unwrap_or_else(|| format!("n{id}"));
            let mut name = base.clone();
            let mut k = 1;
            while used.contains(&name) {
                name = format!("{base}_{k}");
                k += 1;
            }
            used.push(name.clone());
            hb_labels.insert(id, name);
        }
    }
    let mut p = Printer {
        model,
        topo_rank: topological_rank(model),
        labeled: vec![false; model.nodes().len()],
        hb_labels,
        out: String::new(),
    };
    if !model.namespace().is_empty() {
        let names: Vec<String> = model.namespace().names().iter().map(|n| quote(n)).collect();
        p.out.push_str(&format!("counters {};\n", names.join(", ")));
    }
    p.sequence(model.entry(), None, 0);
    for hb in model.happens_before() {
        let line = format!("order {} -> {};", quote(&p.hb_labels[&hb.from]), quote(&p.hb_labels[&hb.to]));
        p.line(0, None, &line);
    }
    p.out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mudd::{enumerate_mupaths, signatures_of_model, DEFAULT_PATH_CAP};
    use proptest::prelude::*;

    const FIG5: &str = r#"
        counters load.causes_walk, load.pde$_miss;
        switch ("STLB Status") {
          case Hit: done;
          case Miss:
            counter load.causes_walk;
            switch ("PDE$ Status") {
              case Hit:
              case Miss: counter load.pde$_miss;
            }
        }
    "#;

    fn parse_ok(text: &str) -> MuDD {
        parse(&DslSource::inline(text), None).unwrap_or_else(|e| panic!("{e}"))
    }

    fn parse_err(text: &str) -> Vec<Diagnostic> {
        parse(&DslSource::inline(text), None).unwrap_err().errors
    }

    fn path_set(model: &MuDD) -> Vec<(Vec<(String, String)>, Vec<u64>)> {
        let paths = enumerate_mupaths(model, DEFAULT_PATH_CAP).unwrap();
        let sigs = signatures_of_model(model, DEFAULT_PATH_CAP).unwrap();
        let mut out: Vec<_> = paths
            .into_iter()
            .zip(sigs)
            .map(|(p, s)| {
                let mut a = p.assignment;
                a.sort();
                (a, s.counts)
            })
            .collect();
        out.sort();
        out
    }

    #[test]
    fn stlb_pde_source() {
        let m = parse_ok(FIG5);
        assert_eq!(enumerate_mupaths(&m, 100).unwrap().len(), 3);
        assert_eq!(m.namespace().names(), ["load.causes_walk", "load.pde$_miss"]);
        let sigs: Vec<Vec<u64>> = signatures_of_model(&m, 100).unwrap().into_iter().map(|s| s.counts).collect();
        assert_eq!(sigs, vec![vec![0, 0], vec![1, 0], vec![1, 1]]);
    }

    #[test]
    fn single_done() {
        let m = parse_ok("done;");
        assert_eq!(m.nodes().len(), 1);
        let paths = enumerate_mupaths(&m, 10).unwrap();
        assert_eq!(paths.len(), 1);
        assert!(m.namespace().is_empty());
        let m = parse_ok("// nothing\n");
        assert_eq!(enumerate_mupaths(&m, 10).unwrap().len(), 1);
    }

    #[test]
    fn reused_property_follows_assignment() {
        let m = parse_ok(
            "switch (mode) { case a: counter x; case b: counter y; }
             switch (mode) { case a: counter z; case b: action nothing; }",
        );
        let paths = path_set(&m);
        assert_eq!(paths.len(), 2);
        assert_eq!(paths[0].1, vec![1, 0, 1]);
        assert_eq!(paths[1].1, vec![0, 1, 0]);
    }

    #[test]
    fn nested_reuse_yields_two_paths() {
        let m = parse_ok("switch (p) { case x: switch (p) { case x: counter a; case y: counter b; } case y: done; }");
        assert_eq!(enumerate_mupaths(&m, 10).unwrap().len(), 2);
    }

    #[test]
    fn inferred_namespace_order() {
        let m = parse_ok("counter b; counter a; counter b;");
        assert_eq!(m.namespace().names(), ["b", "a"]);
        assert_eq!(signatures_of_model(&m, 10).unwrap()[0].counts, vec![2, 1]);
    }

    #[test]
    fn happens_before_by_label() {
        let m = parse_ok("first: action issue; second: counter c; order first -> second;");
        assert_eq!(m.happens_before(), &[HappensBefore { from: 0, to: 1 }]);
        assert_eq!(m.node(0).label.as_deref(), Some("first"));
    }

    #[test]
    fn syntax_error_position() {
        let errs = parse_err("action a;\ncounter c;\naction  b\n");
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].kind, ErrorKind::Syntax);
        assert_eq!(errs[0].position, Position { line: 4, column: 1 });
        let text = format_diagnostics("m.mudd", &errs);
        assert!(text.contains("m.mudd:4:1"), "{text}");

        let errs = parse_err("action a;\naction b;\nswitch x) {}");
        assert_eq!(errs[0].position, Position { line: 3, column: 8 });
        assert!(format_diagnostics("f", &errs).contains("3:8"));
    }

    #[test]
    fn unknown_counter_is_named() {
        let ns = CounterNamespace::new(["load.causes_walk"]).unwrap();
        let err = parse(&DslSource::inline("counter load.bogus;"), Some(&ns)).unwrap_err();
        assert_eq!(err.errors[0].kind, ErrorKind::UnknownCounter);
        assert!(err.to_string().contains("load.bogus"));

        let errs = parse_err("counters a; counter b;");
        assert_eq!(errs[0].kind, ErrorKind::UnknownCounter);
    }

    #[test]
    fn semantic_errors() {
        let kinds = |t: &str| parse_err(t).into_iter().map(|d| d.kind).collect::<Vec<_>>();
        assert_eq!(kinds("switch (p) { }"), vec![ErrorKind::EmptySwitch]);
        assert_eq!(kinds("done; action a;"), vec![ErrorKind::UnreachableStatement]);
        assert_eq!(
            kinds("switch (p) { case a: done; case b: done; } counter c;"),
            vec![ErrorKind::UnreachableStatement]
        );
        assert_eq!(kinds("l: action a; l: action b;"), vec![ErrorKind::DuplicateLabel]);
        assert_eq!(kinds("switch (p) { case a: case a: }"), vec![ErrorKind::DuplicateCase]);
        assert_eq!(kinds("action a; order a -> b;"), vec![ErrorKind::UnknownLabel, ErrorKind::UnknownLabel]);
    }

    #[test]
    fn unsupported_constructs_are_syntax_errors() {
        for text in [
            "while (x) { action a; }",
            "fn f() { }",
            "let x = 1;",
            "for (i) { }",
            "if (x) { }",
        ] {
            let errs = parse_err(text);
            assert!(errs.iter().all(|e| e.kind == ErrorKind::Syntax), "{text}");
            assert!(!errs.is_empty());
        }
    }

    #[test]
    fn all_errors_reported_in_order() {
        let errs = parse_err("action ;\ncounter ;\nswitch (p) { case a: done; case a: }\n");
        let lines: Vec<usize> = errs.iter().map(|e| e.position.line).collect();
        assert_eq!(lines, vec![1, 2, 3]);
        let text = format_diagnostics("src", &errs);
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().next().unwrap().starts_with("src:1:"));
    }

    #[test]
    fn round_trip_stlb_pde() {
        let m = parse_ok(FIG5);
        let text = to_source(&m);
        let back = parse_ok(&text);
        assert_eq!(path_set(&m), path_set(&back));
        assert_eq!(m.namespace(), back.namespace());
    }

    #[test]
    fn quoting() {
        assert_eq!(quote("load.pde$_miss"), "load.pde$_miss");
        assert_eq!(quote("STLB Status"), "\"STLB Status\"");
        assert_eq!(quote("done"), "\"done\"");
        let m = parse_ok(r#"action "say \"hi\""; counter "done";"#);
        assert!(matches!(&m.node(0).kind, NodeKind::Event { name } if name == "say \"hi\""));
        let back = parse_ok(&to_source(&m));
        assert_eq!(path_set(&m), path_set(&back));
    }

    fn program() -> impl Strategy<Value = String> {
        let leaf = prop_oneof![
            (0..3usize).prop_map(|i| format!("counter c{i};")),
            (0..3usize).prop_map(|i| format!("action e{i};")),
        ];
        let stmt = leaf.prop_recursive(3, 24, 3, |inner| {
            (
                0..3usize,
                prop::collection::vec(prop::collection::vec(inner, 0..3), 1..3),
                any::<bool>(),
            )
                .prop_map(|(p, cases, end)| {
                    let mut s = format!("switch (p{p}) {{");
                    let last = cases.len() - 1;
                    for (k, body) in cases.iter().enumerate() {
                        s.push_str(&format!(" case v{k}: {}", body.join(" ")));
                        if end && k == last {
                            s.push_str(" done;");
                        }
                    }
                    s.push_str(" }");
                    s
                })
        });
        prop::collection::vec(stmt, 0..4).prop_map(|v| v.join("\n"))
    }

    proptest! {
        #[test]
        fn pretty_print_round_trip(text in program()) {
            let parsed = parse(&DslSource::inline(text), None);
            prop_assume!(parsed.is_ok());
            let m = parsed.unwrap();
            // reused properties may leave an assigned value without a branch
            prop_assume!(enumerate_mupaths(&m, DEFAULT_PATH_CAP).is_ok());
            let printed = to_source(&m);
            let back = parse(&DslSource::inline(printed.clone()), None)
                .unwrap_or_else(|e| panic!("{e}\n{printed}"));
            prop_assert_eq!(path_set(&m), path_set(&back));
            prop_assert_eq!(m.namespace(), back.namespace());
        }
    }
}
