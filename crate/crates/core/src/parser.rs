//! Concrete text syntax for three-sorted formulas: parser and canonical
//! serializer.
//!
//! A source file is a declaration block followed by one formula.
//! Comments run from `#` to end of line.
//!
//! ```text
//! file     := decl* formula
//! decl     := sort name (',' name)* ';'
//!           | sort NAME '[' INT ']' '[' INT ']' ';'        (matrix)
//! sort     := 'vf' | 'rf' | 'vg'
//! formula  := ('exists' | 'forall') sort NAME (',' NAME)* '.' formula
//!           | implies
//! implies  := or ('->' implies)?                            (right-assoc)
//! or       := and ('or' and)*
//! and      := neg ('and' neg)*
//! neg      := 'not' neg | atom
//! atom     := 'true' | 'false' | INT '|' term | term cmp term | '(' formula ')'
//! cmp      := '=' | '!=' | '<=' | '<' | '>=' | '>'
//! term     := product (('+' | '-') product)*
//! product  := unary ('*' unary)*
//! unary    := '-' unary | primary
//! primary  := INT | INT '/' INT | '+' 'inf' | 'pi' ('^' '-'? INT)?
//!           | 'ord' '(' term ')' | 'ac' '(' term ')' | 'ac_lift' '(' term ')'
//!           | NAME ('[' INT ']' '[' INT ']')? | '(' term ')'
//! ```
//!
//! Numeric literals take the sort demanded by the surrounding atom (a
//! rational `a/b` is a valued-field or residue constant; an unconstrained
//! atom defaults to the value group). A matrix declaration `vf X[2][2];`
//! introduces the scalar entries `X[1][1], …, X[2][2]` (1-based), and
//! `ord(X)` denotes the entrywise minimum valuation: a comparison against a
//! scalar right-hand side expands into the equivalent conjunction or
//! disjunction over entries. `ac_lift(t)` is the identity on residue terms
//! and the angular component on valued-field terms; it is erased at parse
//! time. Keywords (`vf`, `ord`, `inf`, …) are reserved and cannot name
//! variables.
//!
//! Serialization is canonical: declarations are emitted for the free
//! variables, sorted; operators are printed with minimal parentheses that
//! still reproduce the exact tree shape, so `parse(serialize(f))`
//! structurally equals `f` whenever all variable names are identifiers or
//! `base[i][j]` entry patterns and every field-sorted atom mentions a
//! variable, `pi`, `ord` or `ac` (otherwise literals re-type as value-group
//! constants).

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed};

use crate::ast::{CmpOp, Formula, Sort, Term};
use crate::error::Error;
use crate::Result;

const RESERVED: &[&str] = &[
    "vf", "rf", "vg", "exists", "forall", "not", "and", "or", "true", "false", "ord", "ac",
    "ac_lift", "pi", "inf",
];

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(u64),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Dot,
    Plus,
    Minus,
    Star,
    Slash,
    Pipe,
    Caret,
    Arrow,
    Eq,
    Ne,
    Le,
    Lt,
    Ge,
    Gt,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(n) => format!("`{n}`"),
            Tok::Eof => "end of input".to_string(),
            other => format!(
                "`{}`",
                match other {
                    Tok::LParen => "(",
                    Tok::RParen => ")",
                    Tok::LBracket => "[",
                    Tok::RBracket => "]",
                    Tok::Comma => ",",
                    Tok::Semi => ";",
                    Tok::Dot => ".",
                    Tok::Plus => "+",
                    Tok::Minus => "-",
                    Tok::Star => "*",
                    Tok::Slash => "/",
                    Tok::Pipe => "|",
                    Tok::Caret => "^",
                    Tok::Arrow => "->",
                    Tok::Eq => "=",
                    Tok::Ne => "!=",
                    Tok::Le => "<=",
                    Tok::Lt => "<",
                    Tok::Ge => ">=",
                    Tok::Gt => ">",
                    _ => unreachable!(),
                }
            ),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Span {
    line: usize,
    col: usize,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Lexer { chars: text.chars().peekable(), line: 1, col: 1 }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn tokenize(mut self) -> Result<Vec<(Tok, Span)>> {
        let mut out = Vec::new();
        loop {
            while let Some(&c) = self.chars.peek() {
                if c == '#' {
                    while let Some(&d) = self.chars.peek() {
                        if d == '\n' {
                            break;
                        }
                        self.bump();
                    }
                } else if c.is_whitespace() {
                    self.bump();
                } else {
                    break;
                }
            }
            let span = Span { line: self.line, col: self.col };
            let c = match self.chars.peek() {
                None => {
                    out.push((Tok::Eof, span));
                    return Ok(out);
                }
                Some(&c) => c,
            };
            let tok = if c.is_ascii_digit() {
                let mut value: u64 = 0;
                while let Some(&d) = self.chars.peek() {
                    if !d.is_ascii_digit() {
                        break;
                    }
                    self.bump();
                    value = value
                        .checked_mul(10)
                        .and_then(|v| v.checked_add((d as u8 - b'0') as u64))
                        .ok_or_else(|| {
                            Error::parse(span.line, span.col, "integer literal overflows")
                        })?;
                }
                Tok::Int(value)
            } else if c.is_ascii_alphabetic() || c == '_' {
                let mut name = String::new();
                while let Some(&d) = self.chars.peek() {
                    if d.is_ascii_alphanumeric() || d == '_' {
                        name.push(d);
                        self.bump();
                    } else {
                        break;
                    }
                }
                Tok::Ident(name)
            } else {
                self.bump();
                match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    ',' => Tok::Comma,
                    ';' => Tok::Semi,
                    '.' => Tok::Dot,
                    '+' => Tok::Plus,
                    '*' => Tok::Star,
                    '/' => Tok::Slash,
                    '|' => Tok::Pipe,
                    '^' => Tok::Caret,
                    '-' => {
                        if self.chars.peek() == Some(&'>') {
                            self.bump();
                            Tok::Arrow
                        } else {
                            Tok::Minus
                        }
                    }
                    '=' => Tok::Eq,
                    '!' => {
                        if self.chars.peek() == Some(&'=') {
                            self.bump();
                            Tok::Ne
                        } else {
                            return Err(Error::parse(span.line, span.col, "expected `!=`"));
                        }
                    }
                    '<' => {
                        if self.chars.peek() == Some(&'=') {
                            self.bump();
                            Tok::Le
                        } else {
                            Tok::Lt
                        }
                    }
                    '>' => {
                        if self.chars.peek() == Some(&'=') {
                            self.bump();
                            Tok::Ge
                        } else {
                            Tok::Gt
                        }
                    }
                    other => {
                        return Err(Error::parse(
                            span.line,
                            span.col,
                            format!("unexpected character `{other}`"),
                        ));
                    }
                }
            };
            out.push((tok, span));
        }
    }
}

/// Declared variable kinds.
#[derive(Debug, Clone)]
enum Decl {
    Scalar(Sort),
    Matrix { sort: Sort, rows: u32, cols: u32 },
}

/// Untyped term produced by the grammar, typed once the atom's sort is known.
#[derive(Debug, Clone)]
enum PTerm {
    Var(String, Span),
    /// Bare matrix identifier; only legal directly under `ord`.
    MatrixVar(String, Span),
    Int(i64, Span),
    Rat(BigRational, Span),
    PlusInf(Span),
    PiPow(i64, Span),
    Add(Box<PTerm>, Box<PTerm>),
    Sub(Box<PTerm>, Box<PTerm>),
    Mul(Box<PTerm>, Box<PTerm>),
    Neg(Box<PTerm>),
    Ord(Box<PTerm>, Span),
    Ac(Box<PTerm>, Span),
    AcLift(Box<PTerm>, Span),
}

struct Parser {
    toks: Vec<(Tok, Span)>,
    pos: usize,
    decls: BTreeMap<String, Decl>,
    scopes: Vec<(String, Sort)>,
}

fn err_at(span: Span, message: impl Into<String>) -> Error {
    Error::parse(span.line, span.col, message)
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek2(&self) -> &Tok {
        let i = (self.pos + 1).min(self.toks.len() - 1);
        &self.toks[i].0
    }

    fn span(&self) -> Span {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, Span) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok) -> Result<Span> {
        if *self.peek() == tok {
            Ok(self.bump().1)
        } else {
            Err(err_at(
                self.span(),
                format!("expected {}, found {}", tok.describe(), self.peek().describe()),
            ))
        }
    }

    fn ident(&mut self) -> Result<(String, Span)> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                let span = self.bump().1;
                Ok((name, span))
            }
            other => Err(err_at(
                self.span(),
                format!("expected identifier, found {}", other.describe()),
            )),
        }
    }

    fn sort_keyword(&mut self) -> Result<Sort> {
        let (name, span) = self.ident()?;
        match name.as_str() {
            "vf" => Ok(Sort::ValuedField),
            "rf" => Ok(Sort::ResidueField),
            "vg" => Ok(Sort::ValueGroup),
            other => Err(err_at(span, format!("expected sort keyword `vf`/`rf`/`vg`, found `{other}`"))),
        }
    }

    fn int_literal(&mut self) -> Result<(u64, Span)> {
        match *self.peek() {
            Tok::Int(n) => {
                let span = self.bump().1;
                Ok((n, span))
            }
            _ => Err(err_at(
                self.span(),
                format!("expected integer, found {}", self.peek().describe()),
            )),
        }
    }

    fn declare(&mut self, name: String, decl: Decl, span: Span) -> Result<()> {
        if RESERVED.contains(&name.as_str()) {
            return Err(err_at(span, format!("`{name}` is a reserved word")));
        }
        if self.decls.contains_key(&name) {
            return Err(err_at(span, format!("variable `{name}` declared twice")));
        }
        self.decls.insert(name, decl);
        Ok(())
    }

    fn parse_decls(&mut self) -> Result<()> {
        while let Tok::Ident(word) = self.peek() {
            let sort = match word.as_str() {
                "vf" => Sort::ValuedField,
                "rf" => Sort::ResidueField,
                "vg" => Sort::ValueGroup,
                _ => break,
            };
            self.bump();
            loop {
                let (name, span) = self.ident()?;
                if *self.peek() == Tok::LBracket {
                    self.expect(Tok::LBracket)?;
                    let (rows, rspan) = self.int_literal()?;
                    self.expect(Tok::RBracket)?;
                    self.expect(Tok::LBracket)?;
                    let (cols, cspan) = self.int_literal()?;
                    self.expect(Tok::RBracket)?;
                    if rows == 0 || rows > 16 {
                        return Err(err_at(rspan, "matrix dimension must be in 1..=16"));
                    }
                    if cols == 0 || cols > 16 {
                        return Err(err_at(cspan, "matrix dimension must be in 1..=16"));
                    }
                    self.declare(
                        name.clone(),
                        Decl::Matrix { sort, rows: rows as u32, cols: cols as u32 },
                        span,
                    )?;
                    // Entry names are ordinary scalars of the matrix sort.
                    for i in 1..=rows {
                        for j in 1..=cols {
                            self.decls
                                .insert(format!("{name}[{i}][{j}]"), Decl::Scalar(sort));
                        }
                    }
                } else {
                    self.declare(name.clone(), Decl::Scalar(sort), span)?;
                }
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
            self.expect(Tok::Semi)?;
        }
        Ok(())
    }

    /// Innermost binding wins; falls back to the declaration block.
    fn lookup(&self, name: &str) -> Option<Decl> {
        for (n, s) in self.scopes.iter().rev() {
            if n == name {
                return Some(Decl::Scalar(*s));
            }
        }
        self.decls.get(name).cloned()
    }

    fn parse_formula(&mut self) -> Result<Formula> {
        if let Tok::Ident(word) = self.peek() {
            if word == "exists" || word == "forall" {
                let is_exists = word == "exists";
                self.bump();
                let sort = self.sort_keyword()?;
                let mut names = Vec::new();
                loop {
                    let (name, span) = self.ident()?;
                    if RESERVED.contains(&name.as_str()) {
                        return Err(err_at(span, format!("`{name}` is a reserved word")));
                    }
                    names.push(name);
                    if *self.peek() == Tok::Comma {
                        self.bump();
                    } else {
                        break;
                    }
                }
                self.expect(Tok::Dot)?;
                for n in &names {
                    self.scopes.push((n.clone(), sort));
                }
                let body = self.parse_formula()?;
                for _ in &names {
                    self.scopes.pop();
                }
                let mut out = body;
                for n in names.into_iter().rev() {
                    out = if is_exists {
                        Formula::Exists(n, sort, Box::new(out))
                    } else {
                        Formula::Forall(n, sort, Box::new(out))
                    };
                }
                return Ok(out);
            }
        }
        self.parse_implies()
    }

    fn parse_implies(&mut self) -> Result<Formula> {
        let lhs = self.parse_or()?;
        if *self.peek() == Tok::Arrow {
            self.bump();
            let rhs = self.parse_formula()?;
            Ok(Formula::Implies(Box::new(lhs), Box::new(rhs)))
        } else {
            Ok(lhs)
        }
    }

    fn parse_or(&mut self) -> Result<Formula> {
        let mut lhs = self.parse_and()?;
        while matches!(self.peek(), Tok::Ident(w) if w == "or") {
            self.bump();
            let rhs = self.parse_and()?;
            lhs = Formula::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_and(&mut self) -> Result<Formula> {
        let mut lhs = self.parse_neg()?;
        while matches!(self.peek(), Tok::Ident(w) if w == "and") {
            self.bump();
            let rhs = self.parse_neg()?;
            lhs = Formula::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_neg(&mut self) -> Result<Formula> {
        if matches!(self.peek(), Tok::Ident(w) if w == "not") {
            self.bump();
            let inner = self.parse_neg()?;
            return Ok(Formula::Not(Box::new(inner)));
        }
        self.parse_atom()
    }

    fn parse_atom(&mut self) -> Result<Formula> {
        match self.peek().clone() {
            Tok::Ident(w) if w == "true" => {
                self.bump();
                return Ok(Formula::True);
            }
            Tok::Ident(w) if w == "false" => {
                self.bump();
                return Ok(Formula::False);
            }
            Tok::Ident(w) if w == "exists" || w == "forall" => {
                // Quantifiers sit at formula level; reaching one here means
                // it appeared under a propositional operator unparenthesised.
                return Err(err_at(
                    self.span(),
                    "quantifier must be parenthesised in this position",
                ));
            }
            Tok::Int(k) if *self.peek2() == Tok::Pipe => {
                let (_, kspan) = self.bump();
                self.bump(); // `|`
                if k == 0 {
                    return Err(err_at(kspan, "divisibility modulus must be positive"));
                }
                let t = self.parse_term()?;
                let typed = self.build_term(&t, Sort::ValueGroup)?;
                let atom = Formula::Divides(k, typed);
                self.validate_atom(&atom, kspan)?;
                return Ok(atom);
            }
            Tok::LParen => {
                // Either a parenthesised formula or a parenthesised term on
                // the left of a comparison; try the formula first.
                let save = self.pos;
                self.bump();
                match self.parse_formula() {
                    Ok(f) => {
                        if *self.peek() == Tok::RParen {
                            self.bump();
                            return Ok(f);
                        }
                        self.pos = save;
                    }
                    Err(_) => self.pos = save,
                }
                return self.parse_comparison();
            }
            _ => {}
        }
        self.parse_comparison()
    }

    fn parse_comparison(&mut self) -> Result<Formula> {
        let start = self.span();
        let lhs = self.parse_term()?;
        let op = match self.peek() {
            Tok::Eq => CmpOp::Eq,
            Tok::Ne => CmpOp::Ne,
            Tok::Le => CmpOp::Le,
            Tok::Lt => CmpOp::Lt,
            Tok::Ge => CmpOp::Ge,
            Tok::Gt => CmpOp::Gt,
            other => {
                return Err(err_at(
                    self.span(),
                    format!("expected comparison operator, found {}", other.describe()),
                ));
            }
        };
        self.bump();
        let rhs = self.parse_term()?;
        self.finish_comparison(op, lhs, rhs, start)
    }

    fn finish_comparison(
        &mut self,
        op: CmpOp,
        lhs: PTerm,
        rhs: PTerm,
        start: Span,
    ) -> Result<Formula> {
        let lhs_matrix = matches!(&lhs, PTerm::Ord(inner, _) if matches!(**inner, PTerm::MatrixVar(..)));
        let rhs_matrix = matches!(&rhs, PTerm::Ord(inner, _) if matches!(**inner, PTerm::MatrixVar(..)));
        if lhs_matrix && rhs_matrix {
            return Err(err_at(
                start,
                "entrywise-minimum `ord` may appear on only one side of a comparison",
            ));
        }
        if lhs_matrix {
            return self.expand_matrix_ord(op, &lhs, &rhs);
        }
        if rhs_matrix {
            return self.expand_matrix_ord(op.flip(), &rhs, &lhs);
        }
        let anchor_l = self.anchor(&lhs)?;
        let anchor_r = self.anchor(&rhs)?;
        let sort = match (anchor_l, anchor_r) {
            (Some(a), Some(b)) if a != b => {
                return Err(err_at(
                    start,
                    format!("comparison mixes sorts {a} and {b}"),
                ));
            }
            (Some(a), _) => a,
            (None, Some(b)) => b,
            (None, None) => Sort::ValueGroup,
        };
        let l = self.build_term(&lhs, sort)?;
        let r = self.build_term(&rhs, sort)?;
        let atom = Formula::Cmp(op, l, r);
        self.validate_atom(&atom, start)?;
        Ok(atom)
    }

    /// `ord(X) op t` for a matrix `X`: the entrywise minimum valuation.
    /// `min >= t` and `min > t` distribute as conjunctions, `min <= t` and
    /// `min < t` as disjunctions, and equality combines both bounds.
    fn expand_matrix_ord(&mut self, op: CmpOp, mat: &PTerm, scalar: &PTerm) -> Result<Formula> {
        let (name, span) = match mat {
            PTerm::Ord(inner, span) => match &**inner {
                PTerm::MatrixVar(name, _) => (name.clone(), *span),
                _ => unreachable!(),
            },
            _ => unreachable!(),
        };
        let (sort, rows, cols) = match self.lookup(&name) {
            Some(Decl::Matrix { sort, rows, cols }) => (sort, rows, cols),
            _ => return Err(err_at(span, format!("`{name}` is not a matrix variable"))),
        };
        if sort != Sort::ValuedField {
            return Err(err_at(span, "`ord` needs a valued-field matrix"));
        }
        let bound = self.build_term(scalar, Sort::ValueGroup)?;
        let entry_ord = |i: u32, j: u32| {
            Term::Ord(Box::new(Term::Var(
                format!("{name}[{i}][{j}]"),
                Sort::ValuedField,
            )))
        };
        let all = |op: CmpOp, bound: &Term| {
            Formula::conj((1..=rows).flat_map(|i| {
                let bound = bound.clone();
                (1..=cols).map(move |j| Formula::Cmp(op, entry_ord(i, j), bound.clone()))
            }))
        };
        let any = |op: CmpOp, bound: &Term| {
            Formula::disj((1..=rows).flat_map(|i| {
                let bound = bound.clone();
                (1..=cols).map(move |j| Formula::Cmp(op, entry_ord(i, j), bound.clone()))
            }))
        };
        let f = match op {
            CmpOp::Ge => all(CmpOp::Ge, &bound),
            CmpOp::Gt => all(CmpOp::Gt, &bound),
            CmpOp::Le => any(CmpOp::Le, &bound),
            CmpOp::Lt => any(CmpOp::Lt, &bound),
            CmpOp::Eq => Formula::And(
                Box::new(all(CmpOp::Ge, &bound)),
                Box::new(any(CmpOp::Le, &bound)),
            ),
            CmpOp::Ne => Formula::Or(
                Box::new(any(CmpOp::Lt, &bound)),
                Box::new(all(CmpOp::Gt, &bound)),
            ),
        };
        self.validate_atom(&f, span)?;
        Ok(f)
    }

    /// Sort demanded by the structure of the term, if any.
    fn anchor(&self, t: &PTerm) -> Result<Option<Sort>> {
        Ok(match t {
            PTerm::Var(name, span) => match self.lookup(name) {
                Some(Decl::Scalar(s)) => Some(s),
                Some(Decl::Matrix { .. }) => {
                    return Err(err_at(
                        *span,
                        format!("matrix variable `{name}` needs entry access `{name}[i][j]`"),
                    ));
                }
                None => {
                    return Err(err_at(*span, format!("undeclared variable `{name}`")));
                }
            },
            PTerm::MatrixVar(name, span) => {
                return Err(err_at(
                    *span,
                    format!("matrix variable `{name}` needs entry access `{name}[i][j]`"),
                ));
            }
            PTerm::Int(..) | PTerm::Rat(..) => None,
            PTerm::PlusInf(_) => Some(Sort::ValueGroup),
            PTerm::PiPow(..) => Some(Sort::ValuedField),
            PTerm::Ord(..) => Some(Sort::ValueGroup),
            PTerm::Ac(..) | PTerm::AcLift(..) => Some(Sort::ResidueField),
            PTerm::Add(a, b) | PTerm::Sub(a, b) | PTerm::Mul(a, b) => {
                match self.anchor(a)? {
                    Some(s) => Some(s),
                    None => self.anchor(b)?,
                }
            }
            PTerm::Neg(a) => self.anchor(a)?,
        })
    }

    fn build_term(&self, t: &PTerm, sort: Sort) -> Result<Term> {
        Ok(match t {
            PTerm::Var(name, span) => match self.lookup(name) {
                Some(Decl::Scalar(s)) => {
                    if s != sort {
                        return Err(err_at(
                            *span,
                            format!("variable `{name}` has sort {s}, expected {sort}"),
                        ));
                    }
                    Term::Var(name.clone(), s)
                }
                Some(Decl::Matrix { .. }) => {
                    return Err(err_at(
                        *span,
                        format!("matrix variable `{name}` needs entry access `{name}[i][j]`"),
                    ));
                }
                None => return Err(err_at(*span, format!("undeclared variable `{name}`"))),
            },
            PTerm::MatrixVar(name, span) => {
                return Err(err_at(
                    *span,
                    format!("matrix variable `{name}` is only meaningful under `ord`"),
                ));
            }
            PTerm::Int(n, span) => match sort {
                Sort::ValueGroup => Term::Int(*n),
                Sort::ValuedField => Term::Rat(BigRational::from(BigInt::from(*n))),
                Sort::ResidueField => Term::Residue(BigRational::from(BigInt::from(*n))),
                #[allow(unreachable_patterns)]
                _ => return Err(err_at(*span, "unexpected literal")),
            },
            PTerm::Rat(r, span) => match sort {
                Sort::ValuedField => Term::Rat(r.clone()),
                Sort::ResidueField => Term::Residue(r.clone()),
                Sort::ValueGroup => {
                    return Err(err_at(*span, "rational constant in a value-group term"));
                }
            },
            PTerm::PlusInf(span) => {
                if sort != Sort::ValueGroup {
                    return Err(err_at(*span, "`+inf` is a value-group constant"));
                }
                Term::PlusInf
            }
            PTerm::PiPow(k, span) => {
                if sort != Sort::ValuedField {
                    return Err(err_at(*span, "`pi` is a valued-field constant"));
                }
                Term::PiPow(*k)
            }
            PTerm::Add(a, b) => Term::Add(
                Box::new(self.build_term(a, sort)?),
                Box::new(self.build_term(b, sort)?),
            ),
            PTerm::Sub(a, b) => Term::Sub(
                Box::new(self.build_term(a, sort)?),
                Box::new(self.build_term(b, sort)?),
            ),
            PTerm::Mul(a, b) => Term::Mul(
                Box::new(self.build_term(a, sort)?),
                Box::new(self.build_term(b, sort)?),
            ),
            PTerm::Neg(a) => Term::Neg(Box::new(self.build_term(a, sort)?)),
            PTerm::Ord(a, span) => {
                if sort != Sort::ValueGroup {
                    return Err(err_at(*span, "`ord` yields a value-group term"));
                }
                Term::Ord(Box::new(self.build_term(a, Sort::ValuedField)?))
            }
            PTerm::Ac(a, span) => {
                if sort != Sort::ResidueField {
                    return Err(err_at(*span, "`ac` yields a residue-field term"));
                }
                Term::Ac(Box::new(self.build_term(a, Sort::ValuedField)?))
            }
            PTerm::AcLift(a, span) => {
                if sort != Sort::ResidueField {
                    return Err(err_at(*span, "`ac_lift` yields a residue-field term"));
                }
                match self.anchor(a)? {
                    Some(Sort::ResidueField) => self.build_term(a, Sort::ResidueField)?,
                    _ => Term::Ac(Box::new(self.build_term(a, Sort::ValuedField)?)),
                }
            }
        })
    }

    fn validate_atom(&self, atom: &Formula, span: Span) -> Result<()> {
        atom.check().map_err(|e| err_at(span, e.to_string()))
    }

    fn parse_term(&mut self) -> Result<PTerm> {
        let mut lhs = self.parse_product()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    let rhs = self.parse_product()?;
                    lhs = PTerm::Add(Box::new(lhs), Box::new(rhs));
                }
                Tok::Minus => {
                    self.bump();
                    let rhs = self.parse_product()?;
                    lhs = PTerm::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn parse_product(&mut self) -> Result<PTerm> {
        let mut lhs = self.parse_unary()?;
        while *self.peek() == Tok::Star {
            self.bump();
            let rhs = self.parse_unary()?;
            lhs = PTerm::Mul(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_unary(&mut self) -> Result<PTerm> {
        if *self.peek() == Tok::Minus {
            self.bump();
            // A minus folds into an immediately following numeric literal,
            // so `-3` is the constant -3; a parenthesised literal keeps its
            // explicit negation node.
            if matches!(self.peek(), Tok::Int(_)) {
                return self.parse_number(true);
            }
            let inner = self.parse_unary()?;
            return Ok(PTerm::Neg(Box::new(inner)));
        }
        self.parse_primary()
    }

    fn parse_number(&mut self, negative: bool) -> Result<PTerm> {
        let (n, span) = self.int_literal()?;
        if *self.peek() == Tok::Slash {
            self.bump();
            let (den, dspan) = self.int_literal()?;
            if den == 0 {
                return Err(err_at(dspan, "zero denominator"));
            }
            let mut r = BigRational::new(BigInt::from(n), BigInt::from(den));
            if negative {
                r = -r;
            }
            return Ok(PTerm::Rat(r, span));
        }
        let v = if negative {
            if n > i64::MAX as u64 + 1 {
                return Err(err_at(span, "integer literal overflows"));
            }
            (n as i128).checked_neg().unwrap() as i64
        } else {
            i64::try_from(n).map_err(|_| err_at(span, "integer literal overflows"))?
        };
        Ok(PTerm::Int(v, span))
    }

    fn parse_primary(&mut self) -> Result<PTerm> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Int(_) => self.parse_number(false),
            Tok::Plus => {
                self.bump();
                match self.peek().clone() {
                    Tok::Ident(w) if w == "inf" => {
                        self.bump();
                        Ok(PTerm::PlusInf(span))
                    }
                    other => Err(err_at(
                        self.span(),
                        format!("expected `inf` after `+`, found {}", other.describe()),
                    )),
                }
            }
            Tok::LParen => {
                self.bump();
                let t = self.parse_term()?;
                self.expect(Tok::RParen)?;
                Ok(t)
            }
            Tok::Ident(word) => match word.as_str() {
                "pi" => {
                    self.bump();
                    if *self.peek() == Tok::Caret {
                        self.bump();
                        let neg = if *self.peek() == Tok::Minus {
                            self.bump();
                            true
                        } else {
                            false
                        };
                        let (mag, mspan) = self.int_literal()?;
                        let k = i64::try_from(mag)
                            .map_err(|_| err_at(mspan, "exponent overflows"))?;
                        Ok(PTerm::PiPow(if neg { -k } else { k }, span))
                    } else {
                        Ok(PTerm::PiPow(1, span))
                    }
                }
                "ord" => {
                    self.bump();
                    self.expect(Tok::LParen)?;
                    let t = self.parse_term()?;
                    self.expect(Tok::RParen)?;
                    Ok(PTerm::Ord(Box::new(t), span))
                }
                "ac" => {
                    self.bump();
                    self.expect(Tok::LParen)?;
                    let t = self.parse_term()?;
                    self.expect(Tok::RParen)?;
                    Ok(PTerm::Ac(Box::new(t), span))
                }
                "ac_lift" => {
                    self.bump();
                    self.expect(Tok::LParen)?;
                    let t = self.parse_term()?;
                    self.expect(Tok::RParen)?;
                    Ok(PTerm::AcLift(Box::new(t), span))
                }
                _ if RESERVED.contains(&word.as_str()) => Err(err_at(
                    span,
                    format!("`{word}` is a reserved word"),
                )),
                _ => {
                    self.bump();
                    if *self.peek() == Tok::LBracket {
                        self.expect(Tok::LBracket)?;
                        let (i, ispan) = self.int_literal()?;
                        self.expect(Tok::RBracket)?;
                        self.expect(Tok::LBracket)?;
                        let (j, jspan) = self.int_literal()?;
                        self.expect(Tok::RBracket)?;
                        match self.lookup(&word) {
                            Some(Decl::Matrix { sort: _, rows, cols }) => {
                                if i == 0 || i > rows as u64 {
                                    return Err(err_at(
                                        ispan,
                                        format!("row index {i} out of range 1..={rows}"),
                                    ));
                                }
                                if j == 0 || j > cols as u64 {
                                    return Err(err_at(
                                        jspan,
                                        format!("column index {j} out of range 1..={cols}"),
                                    ));
                                }
                                Ok(PTerm::Var(format!("{word}[{i}][{j}]"), span))
                            }
                            Some(Decl::Scalar(_)) => Err(err_at(
                                span,
                                format!("`{word}` is scalar; entry access needs a matrix declaration"),
                            )),
                            None => Err(err_at(span, format!("undeclared variable `{word}`"))),
                        }
                    } else {
                        match self.lookup(&word) {
                            Some(Decl::Matrix { .. }) => Ok(PTerm::MatrixVar(word, span)),
                            Some(Decl::Scalar(_)) => Ok(PTerm::Var(word, span)),
                            None => Err(err_at(span, format!("undeclared variable `{word}`"))),
                        }
                    }
                }
            },
            other => Err(err_at(
                span,
                format!("expected a term, found {}", other.describe()),
            )),
        }
    }
}

/// Parses a declaration block followed by one formula.
pub fn parse(text: &str) -> Result<Formula> {
    let toks = Lexer::new(text).tokenize()?;
    let mut p = Parser { toks, pos: 0, decls: BTreeMap::new(), scopes: Vec::new() };
    p.parse_decls()?;
    let f = p.parse_formula()?;
    if *p.peek() != Tok::Eof {
        return Err(err_at(
            p.span(),
            format!("unexpected trailing input: {}", p.peek().describe()),
        ));
    }
    Ok(f)
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

fn entry_pattern(name: &str) -> Option<(&str, u32, u32)> {
    let open = name.find('[')?;
    let base = &name[..open];
    if base.is_empty() || !base.chars().next().unwrap().is_ascii_alphabetic() && !base.starts_with('_') {
        return None;
    }
    if !base.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return None;
    }
    let rest = &name[open..];
    let mut parts = Vec::new();
    let mut cur = rest;
    for _ in 0..2 {
        if !cur.starts_with('[') {
            return None;
        }
        let close = cur.find(']')?;
        let digits = &cur[1..close];
        if digits.is_empty() || !digits.chars().all(|c| c.is_ascii_digit()) {
            return None;
        }
        parts.push(digits.parse::<u32>().ok()?);
        cur = &cur[close + 1..];
    }
    if !cur.is_empty() {
        return None;
    }
    let (i, j) = (parts[0], parts[1]);
    if i == 0 || j == 0 || i > 16 || j > 16 {
        return None;
    }
    Some((base, i, j))
}

/// Serializes only the formula body (no declarations), canonically.
pub fn serialize_body(f: &Formula) -> String {
    let mut out = String::new();
    fmt_formula(f, 0, &mut out);
    out
}

/// Canonical serialization: declarations for the free variables, then the
/// body. `parse(serialize(f))` structurally equals `f` for well-sorted
/// formulas whose variable names are identifiers or `base[i][j]` patterns.
pub fn serialize(f: &Formula) -> String {
    let mut out = String::new();
    let free = f.free_variables();
    for sort in [Sort::ValuedField, Sort::ResidueField, Sort::ValueGroup] {
        let mut scalars: Vec<&str> = Vec::new();
        let mut matrices: BTreeMap<&str, (u32, u32)> = BTreeMap::new();
        for (name, s) in &free {
            if *s != sort {
                continue;
            }
            match entry_pattern(name) {
                Some((base, i, j)) => {
                    let e = matrices.entry(base).or_insert((0, 0));
                    e.0 = e.0.max(i);
                    e.1 = e.1.max(j);
                }
                None => scalars.push(name),
            }
        }
        for (base, (rows, cols)) in &matrices {
            out.push_str(&format!("{} {}[{}][{}];\n", sort.keyword(), base, rows, cols));
        }
        if !scalars.is_empty() {
            out.push_str(&format!("{} {};\n", sort.keyword(), scalars.join(", ")));
        }
    }
    out.push_str(&serialize_body(f));
    out.push('\n');
    out
}

// Formula precedence levels: quantifiers 0, `->` 1, `or` 2, `and` 3,
// `not` 4, atoms 5. Terms: `+`/`-` 1, `*` 2, unary `-` 3, primaries 4.

fn fmt_formula(f: &Formula, min_prec: u8, out: &mut String) {
    let prec = match f {
        Formula::Exists(..) | Formula::Forall(..) => 0,
        Formula::Implies(..) => 1,
        Formula::Or(..) => 2,
        Formula::And(..) => 3,
        Formula::Not(..) => 4,
        _ => 5,
    };
    let parens = prec < min_prec;
    if parens {
        out.push('(');
    }
    match f {
        Formula::True => out.push_str("true"),
        Formula::False => out.push_str("false"),
        Formula::Cmp(op, a, b) => {
            fmt_term(a, 0, out);
            out.push(' ');
            out.push_str(op.symbol());
            out.push(' ');
            fmt_term(b, 0, out);
        }
        Formula::Divides(k, t) => {
            out.push_str(&k.to_string());
            out.push_str(" | ");
            fmt_term(t, 0, out);
        }
        Formula::Not(a) => {
            out.push_str("not ");
            fmt_formula(a, 4, out);
        }
        Formula::And(a, b) => {
            fmt_formula(a, 3, out);
            out.push_str(" and ");
            fmt_formula(b, 4, out);
        }
        Formula::Or(a, b) => {
            fmt_formula(a, 2, out);
            out.push_str(" or ");
            fmt_formula(b, 3, out);
        }
        Formula::Implies(a, b) => {
            fmt_formula(a, 2, out);
            out.push_str(" -> ");
            fmt_formula(b, 1, out);
        }
        Formula::Exists(n, s, body) => {
            out.push_str("exists ");
            out.push_str(s.keyword());
            out.push(' ');
            out.push_str(n);
            out.push_str(". ");
            fmt_formula(body, 0, out);
        }
        Formula::Forall(n, s, body) => {
            out.push_str("forall ");
            out.push_str(s.keyword());
            out.push(' ');
            out.push_str(n);
            out.push_str(". ");
            fmt_formula(body, 0, out);
        }
    }
    if parens {
        out.push(')');
    }
}

fn rat_str(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

fn fmt_term(t: &Term, min_prec: u8, out: &mut String) {
    let prec = match t {
        Term::Add(..) | Term::Sub(..) => 1,
        Term::Mul(..) => 2,
        Term::Neg(..) => 3,
        Term::Int(n) if *n < 0 => 3,
        Term::Rat(r) | Term::Residue(r) if r.is_negative() => 3,
        _ => 4,
    };
    let parens = prec < min_prec;
    if parens {
        out.push('(');
    }
    match t {
        Term::Var(name, _) => out.push_str(name),
        Term::Int(n) => out.push_str(&n.to_string()),
        Term::PlusInf => out.push_str("+inf"),
        Term::Rat(r) | Term::Residue(r) => out.push_str(&rat_str(r)),
        Term::PiPow(1) => out.push_str("pi"),
        Term::PiPow(k) => out.push_str(&format!("pi^{k}")),
        Term::Add(a, b) => {
            fmt_term(a, 1, out);
            out.push_str(" + ");
            fmt_term(b, 2, out);
        }
        Term::Sub(a, b) => {
            fmt_term(a, 1, out);
            out.push_str(" - ");
            fmt_term(b, 2, out);
        }
        Term::Mul(a, b) => {
            fmt_term(a, 2, out);
            out.push_str(" * ");
            fmt_term(b, 3, out);
        }
        Term::Neg(a) => {
            out.push('-');
            // Parenthesise literals so the minus is not folded back in.
            match **a {
                Term::Int(n) if n >= 0 => {
                    out.push('(');
                    fmt_term(a, 0, out);
                    out.push(')');
                }
                Term::Rat(ref r) | Term::Residue(ref r) if !r.is_negative() => {
                    out.push('(');
                    fmt_term(a, 0, out);
                    out.push(')');
                }
                _ => fmt_term(a, 4, out),
            }
        }
        Term::Ord(a) => {
            out.push_str("ord(");
            fmt_term(a, 0, out);
            out.push(')');
        }
        Term::Ac(a) => {
            out.push_str("ac(");
            fmt_term(a, 0, out);
            out.push(')');
        }
    }
    if parens {
        out.push(')');
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip(text: &str) -> Formula {
        let f = parse(text).unwrap();
        let s = serialize(&f);
        let g = parse(&s).unwrap_or_else(|e| panic!("reparse of {s:?} failed: {e}"));
        assert_eq!(f, g, "round-trip mismatch for input {text:?}, serialized {s:?}");
        f
    }

    #[test]
    fn ord_comparison_example() {
        let f = roundtrip("vf x; vg m; ord(x) >= m");
        assert_eq!(
            f,
            Formula::ge(
                Term::var("x", Sort::ValuedField).ord(),
                Term::var("m", Sort::ValueGroup),
            )
        );
    }

    #[test]
    fn residue_square_example() {
        let f = roundtrip("rf u; exists rf xi. ac_lift(u) = xi*xi");
        let xi = Term::var("xi", Sort::ResidueField);
        assert_eq!(
            f,
            Formula::exists(
                "xi",
                Sort::ResidueField,
                Formula::eq(Term::var("u", Sort::ResidueField), xi.clone().mul(xi)),
            )
        );
    }

    #[test]
    fn ord_plus_inf_example() {
        let f = roundtrip("vf x; ord(x) = +inf");
        assert_eq!(
            f,
            Formula::eq(Term::var("x", Sort::ValuedField).ord(), Term::PlusInf)
        );
    }

    #[test]
    fn ac_lift_on_valued_field_is_ac() {
        let f = parse("vf x; ac_lift(x) = 1").unwrap();
        assert_eq!(
            f,
            Formula::eq(
                Term::var("x", Sort::ValuedField).ac(),
                Term::Residue(BigRational::from(BigInt::from(1))),
            )
        );
    }

    #[test]
    fn literals_take_sort_from_context() {
        let f = parse("rf u; u = 3").unwrap();
        assert_eq!(
            f,
            Formula::eq(
                Term::var("u", Sort::ResidueField),
                Term::Residue(BigRational::from(BigInt::from(3))),
            )
        );
        let f = parse("vf x; x = 1/2").unwrap();
        assert_eq!(
            f,
            Formula::eq(
                Term::var("x", Sort::ValuedField),
                Term::Rat(BigRational::new(BigInt::from(1), BigInt::from(2))),
            )
        );
        assert!(parse("vg m; m = 1/2").is_err());
    }

    #[test]
    fn divisibility_atom() {
        let f = roundtrip("vg m; 2 | m + 1");
        assert_eq!(
            f,
            Formula::divides(2, Term::var("m", Sort::ValueGroup).add(Term::int(1)))
        );
    }

    #[test]
    fn precedence_and_binds_tighter_than_or() {
        let f = parse("vg m; m = 1 or m = 2 and m <= 3").unwrap();
        match f {
            Formula::Or(_, rhs) => assert!(matches!(*rhs, Formula::And(..))),
            other => panic!("expected Or at top, got {other:?}"),
        }
    }

    #[test]
    fn implies_is_right_associative() {
        let f = parse("vg m; m = 1 -> m = 2 -> m = 3").unwrap();
        match f {
            Formula::Implies(_, rhs) => assert!(matches!(*rhs, Formula::Implies(..))),
            other => panic!("expected Implies at top, got {other:?}"),
        }
    }

    #[test]
    fn multi_binder_sugar() {
        let f = parse("exists vg a, b. a <= b").unwrap();
        match &f {
            Formula::Exists(n1, _, body) => {
                assert_eq!(n1, "a");
                assert!(matches!(&**body, Formula::Exists(n2, _, _) if n2 == "b"));
            }
            other => panic!("expected nested Exists, got {other:?}"),
        }
    }

    #[test]
    fn matrix_declaration_and_entry_access() {
        let f = roundtrip("vf X[2][2]; ord(X[2][1]) >= 0");
        assert_eq!(
            f,
            Formula::ge(Term::var("X[2][1]", Sort::ValuedField).ord(), Term::int(0))
        );
        assert!(parse("vf X[2][2]; ord(X[3][1]) >= 0").is_err());
    }

    #[test]
    fn matrix_ord_expands_to_entrywise_minimum() {
        let f = parse("vf X[2][2]; vg m; ord(X) >= m").unwrap();
        // min >= m is a conjunction over the four entries.
        let mut count = 0;
        let mut stack = vec![&f];
        while let Some(g) = stack.pop() {
            match g {
                Formula::And(a, b) => {
                    stack.push(a);
                    stack.push(b);
                }
                Formula::Cmp(CmpOp::Ge, _, _) => count += 1,
                other => panic!("unexpected node {other:?}"),
            }
        }
        assert_eq!(count, 4);

        let eq = parse("vf X[2][2]; ord(X) = 0").unwrap();
        assert!(matches!(eq, Formula::And(..)));
        let le = parse("vf X[2][2]; ord(X) <= 5").unwrap();
        assert!(matches!(le, Formula::Or(..)));
        // Flipped orientation reaches the same expansion.
        let flipped = parse("vf X[2][2]; vg m; m <= ord(X)").unwrap();
        let direct = parse("vf X[2][2]; vg m; ord(X) >= m").unwrap();
        assert_eq!(flipped, direct);
    }

    #[test]
    fn errors_carry_position() {
        match parse("vg m;\n m = undecl") {
            Err(Error::Parse { line, col, message }) => {
                assert_eq!(line, 2);
                assert!(col > 1);
                assert!(message.contains("undecl"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn sort_mismatch_rejected() {
        assert!(parse("vf x; vg m; x = m").is_err());
        assert!(parse("rf u; u <= 3").is_err());
        assert!(parse("vg m; pi = pi").is_ok());
        assert!(parse("vg m; m + +inf >= 0").is_err());
    }

    #[test]
    fn comments_and_whitespace() {
        let f = parse("# heading\nvg m; # decl\nm >= 0 # trailing").unwrap();
        assert_eq!(f, Formula::ge(Term::var("m", Sort::ValueGroup), Term::int(0)));
    }

    #[test]
    fn parenthesised_term_versus_formula() {
        let f = parse("vg m; (m + 1) <= 2").unwrap();
        assert_eq!(
            f,
            Formula::le(Term::var("m", Sort::ValueGroup).add(Term::int(1)), Term::int(2))
        );
        let g = parse("vg m; ((m <= 2))").unwrap();
        assert_eq!(g, Formula::le(Term::var("m", Sort::ValueGroup), Term::int(2)));
    }

    #[test]
    fn negative_literal_folding() {
        let f = roundtrip("vg m; m = -3");
        assert_eq!(f, Formula::eq(Term::var("m", Sort::ValueGroup), Term::int(-3)));
        // A programmatic Neg around a literal survives via parentheses.
        let g = Formula::eq(Term::var("m", Sort::ValueGroup), Term::int(3).neg());
        let s = serialize(&g);
        assert_eq!(parse(&s).unwrap(), g);
    }

    #[test]
    fn shadowing_resolves_to_innermost_binder() {
        let f = parse("vg m; exists rf m. m = 0").unwrap();
        match f {
            Formula::Exists(_, Sort::ResidueField, body) => match *body {
                Formula::Cmp(CmpOp::Eq, Term::Var(_, Sort::ResidueField), _) => {}
                other => panic!("inner var should be residue-sorted, got {other:?}"),
            },
            other => panic!("expected Exists, got {other:?}"),
        }
    }

    #[test]
    fn undeclared_and_reserved_rejected() {
        assert!(parse("vg m; n >= 0").is_err());
        assert!(parse("vg ord; ord >= 0").is_err());
        assert!(parse("exists vg pi. pi >= 0").is_err());
    }

    #[test]
    fn pi_powers() {
        let f = roundtrip("vf x; x = pi^2");
        assert_eq!(f, Formula::eq(Term::var("x", Sort::ValuedField), Term::PiPow(2)));
        let g = parse("vf x; x = pi^-1").unwrap();
        assert_eq!(g, Formula::eq(Term::var("x", Sort::ValuedField), Term::PiPow(-1)));
        let h = parse("vf x; x = pi").unwrap();
        assert_eq!(h, Formula::eq(Term::var("x", Sort::ValuedField), Term::PiPow(1)));
    }

    #[test]
    fn serializer_groups_matrix_entries() {
        let f = Formula::ge(
            Term::var("Y[2][2]", Sort::ValuedField).ord(),
            Term::int(0),
        );
        let s = serialize(&f);
        assert!(s.contains("vf Y[2][2];"), "got {s}");
        assert_eq!(parse(&s).unwrap(), f);
    }

    #[test]
    fn trailing_input_rejected() {
        assert!(parse("vg m; m >= 0 m").is_err());
    }

    #[test]
    fn quantifier_under_connective_needs_parens() {
        assert!(parse("vg m; m >= 0 and exists vg k. k = m").is_err());
        assert!(parse("vg m; m >= 0 and (exists vg k. k = m)").is_ok());
    }
}
