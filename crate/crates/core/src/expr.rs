//! Propositional expression trees over feature names.
//!
//! Two textual dialects share one recursive-descent parser:
//!
//! * the formula grammar used by the presence-condition and fault files
//!   (`!`, `&&`, `||`, parentheses, `1`, `0` and feature names);
//! * the argument of `#if`/`#elif`, which additionally understands
//!   `defined X`, `defined(X)` and integer literals, and rejects anything
//!   non-Boolean (comparisons, arithmetic, function-like macros).

use std::fmt;

use crate::error::{Error, Result};
use crate::logic::{FeatureId, Literal, PresenceCondition};
use crate::transform;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Const(bool),
    Var(String),
    Not(Box<Expr>),
    And(Vec<Expr>),
    Or(Vec<Expr>),
}

impl Expr {
    pub fn var(name: impl Into<String>) -> Self {
        Expr::Var(name.into())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(inner: Expr) -> Self {
        match inner {
            Expr::Const(b) => Expr::Const(!b),
            Expr::Not(e) => *e,
            e => Expr::Not(Box::new(e)),
        }
    }

    /// Flattening conjunction; drops `true` operands.
    pub fn and(operands: impl IntoIterator<Item = Expr>) -> Self {
        Self::junction(operands, true)
    }

    /// Flattening disjunction; drops `false` operands.
    pub fn or(operands: impl IntoIterator<Item = Expr>) -> Self {
        Self::junction(operands, false)
    }

    fn junction(operands: impl IntoIterator<Item = Expr>, is_and: bool) -> Self {
        let mut flat = Vec::new();
        for op in operands {
            match op {
                Expr::Const(b) if b == is_and => {}
                Expr::Const(b) => return Expr::Const(b),
                Expr::And(inner) if is_and => flat.extend(inner),
                Expr::Or(inner) if !is_and => flat.extend(inner),
                other => flat.push(other),
            }
        }
        match flat.len() {
            0 => Expr::Const(is_and),
            1 => flat.pop().unwrap(),
            _ if is_and => Expr::And(flat),
            _ => Expr::Or(flat),
        }
    }

    pub fn is_true(&self) -> bool {
        matches!(self, Expr::Const(true))
    }

    /// Parses the formula grammar.
    pub fn parse(text: &str) -> Result<Expr> {
        let tokens = tokenize(text, Dialect::Formula).map_err(|m| Error::parse(text, m))?;
        Parser::new(tokens)
            .parse_all()
            .map_err(|m| Error::parse(text, m))
    }

    /// Parses the argument of an `#if`/`#elif` directive. `None` when the
    /// condition is not a Boolean combination of macro names.
    pub fn parse_cpp(text: &str) -> Option<Expr> {
        let tokens = tokenize(text, Dialect::Cpp).ok()?;
        Parser::new(tokens).parse_all().ok()
    }

    pub fn eval(&self, value: &dyn Fn(&str) -> bool) -> bool {
        match self {
            Expr::Const(b) => *b,
            Expr::Var(name) => value(name),
            Expr::Not(e) => !e.eval(value),
            Expr::And(es) => es.iter().all(|e| e.eval(value)),
            Expr::Or(es) => es.iter().any(|e| e.eval(value)),
        }
    }

    /// Feature names in order of first appearance.
    pub fn atoms(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(name) => {
                if !out.contains(&name.as_str()) {
                    out.push(name);
                }
            }
            Expr::Not(e) => e.collect_atoms(out),
            Expr::And(es) | Expr::Or(es) => es.iter().for_each(|e| e.collect_atoms(out)),
        }
    }

    /// Top-level conjuncts (a non-conjunction is its own single conjunct).
    pub fn conjuncts(&self) -> &[Expr] {
        match self {
            Expr::And(es) => es,
            other => std::slice::from_ref(other),
        }
    }

    /// Converts to DNF by recursive distribution over the tree.
    pub fn to_dnf(
        &self,
        resolve: &dyn Fn(&str) -> Option<FeatureId>,
        cap: usize,
    ) -> Result<PresenceCondition> {
        self.dnf(true, resolve, cap)
    }

    fn dnf(
        &self,
        positive: bool,
        resolve: &dyn Fn(&str) -> Option<FeatureId>,
        cap: usize,
    ) -> Result<PresenceCondition> {
        match self {
            Expr::Const(b) => Ok(if *b == positive {
                PresenceCondition::tautology()
            } else {
                PresenceCondition::contradiction()
            }),
            Expr::Var(name) => {
                let feature =
                    resolve(name).ok_or_else(|| Error::UnknownFeatures(vec![name.clone()]))?;
                Ok(PresenceCondition::literal(Literal::new(feature, positive)))
            }
            Expr::Not(e) => e.dnf(!positive, resolve, cap),
            Expr::And(es) | Expr::Or(es) => {
                let conjunctive = matches!(self, Expr::And(_)) == positive;
                let parts = es
                    .iter()
                    .map(|e| e.dnf(positive, resolve, cap))
                    .collect::<Result<Vec<_>>>()?;
                if conjunctive {
                    transform::conjoin_capped(&parts, cap)
                } else {
                    transform::disjoin_capped(&parts, cap)
                }
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(true) => f.write_str("1"),
            Expr::Const(false) => f.write_str("0"),
            Expr::Var(name) => f.write_str(name),
            Expr::Not(e) => match **e {
                Expr::And(_) | Expr::Or(_) => write!(f, "!({e})"),
                _ => write!(f, "!{e}"),
            },
            Expr::And(es) | Expr::Or(es) => {
                let sep = if matches!(self, Expr::And(_)) {
                    " && "
                } else {
                    " || "
                };
                for (i, e) in es.iter().enumerate() {
                    if i > 0 {
                        f.write_str(sep)?;
                    }
                    match e {
                        Expr::And(_) | Expr::Or(_) => write!(f, "({e})")?,
                        _ => write!(f, "{e}")?,
                    }
                }
                Ok(())
            }
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Dialect {
    Formula,
    Cpp,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Token {
    Not,
    And,
    Or,
    Open,
    Close,
    Const(bool),
    Atom(String),
    Defined,
}

fn is_formula_name_char(c: char) -> bool {
    !c.is_whitespace() && !matches!(c, '!' | '&' | '|' | '(' | ')')
}

fn tokenize(text: &str, dialect: Dialect) -> std::result::Result<Vec<Token>, String> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let next = chars.get(i + 1).copied();
        match (c, next) {
            ('&', Some('&')) => {
                tokens.push(Token::And);
                i += 2;
            }
            ('|', Some('|')) => {
                tokens.push(Token::Or);
                i += 2;
            }
            ('!', n) if n != Some('=') => {
                tokens.push(Token::Not);
                i += 1;
            }
            ('(', _) => {
                tokens.push(Token::Open);
                i += 1;
            }
            (')', _) => {
                tokens.push(Token::Close);
                i += 1;
            }
            _ => match dialect {
                Dialect::Formula => {
                    let start = i;
                    while i < chars.len() && is_formula_name_char(chars[i]) {
                        i += 1;
                    }
                    if start == i {
                        return Err(format!("unexpected character {c:?}"));
                    }
                    let word: String = chars[start..i].iter().collect();
                    tokens.push(match word.as_str() {
                        "1" => Token::Const(true),
                        "0" => Token::Const(false),
                        _ => Token::Atom(word),
                    });
                }
                Dialect::Cpp => {
                    if c.is_ascii_alphabetic() || c == '_' {
                        let start = i;
                        while i < chars.len()
                            && (chars[i].is_ascii_alphanumeric() || chars[i] == '_')
                        {
                            i += 1;
                        }
                        let word: String = chars[start..i].iter().collect();
                        // function-like macro invocation
                        let mut j = i;
                        while j < chars.len() && chars[j].is_whitespace() {
                            j += 1;
                        }
                        if word != "defined" && chars.get(j) == Some(&'(') {
                            return Err(format!("function-like macro {word}"));
                        }
                        tokens.push(match word.as_str() {
                            "defined" => Token::Defined,
                            "true" => Token::Const(true),
                            "false" => Token::Const(false),
                            _ => Token::Atom(word),
                        });
                    } else if c.is_ascii_digit() {
                        let start = i;
                        while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                            i += 1;
                        }
                        let word: String = chars[start..i].iter().collect();
                        tokens.push(Token::Const(parse_c_integer(&word)? != 0));
                    } else {
                        return Err(format!("non-Boolean operator {c:?}"));
                    }
                }
            },
        }
    }
    Ok(tokens)
}

fn parse_c_integer(word: &str) -> std::result::Result<u64, String> {
    let digits = word.trim_end_matches(['u', 'U', 'l', 'L']);
    let parsed = if let Some(hex) = digits
        .strip_prefix("0x")
        .or_else(|| digits.strip_prefix("0X"))
    {
        u64::from_str_radix(hex, 16)
    } else if digits.len() > 1 && digits.starts_with('0') {
        u64::from_str_radix(&digits[1..], 8)
    } else {
        digits.parse()
    };
    parsed.map_err(|_| format!("bad integer literal {word}"))
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn new(tokens: Vec<Token>) -> Self {
        Parser { tokens, pos: 0 }
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn parse_all(mut self) -> std::result::Result<Expr, String> {
        if self.tokens.is_empty() {
            return Err("empty condition".into());
        }
        let e = self.disjunction()?;
        match self.peek() {
            None => Ok(e),
            Some(t) => Err(format!("unexpected token {t:?}")),
        }
    }

    fn disjunction(&mut self) -> std::result::Result<Expr, String> {
        let mut ops = vec![self.conjunction()?];
        while self.peek() == Some(&Token::Or) {
            self.pos += 1;
            ops.push(self.conjunction()?);
        }
        Ok(if ops.len() == 1 {
            ops.pop().unwrap()
        } else {
            Expr::or(ops)
        })
    }

    fn conjunction(&mut self) -> std::result::Result<Expr, String> {
        let mut ops = vec![self.unary()?];
        while self.peek() == Some(&Token::And) {
            self.pos += 1;
            ops.push(self.unary()?);
        }
        Ok(if ops.len() == 1 {
            ops.pop().unwrap()
        } else {
            Expr::and(ops)
        })
    }

    fn unary(&mut self) -> std::result::Result<Expr, String> {
        match self.bump() {
            Some(Token::Not) => Ok(Expr::not(self.unary()?)),
            Some(Token::Open) => {
                let e = self.disjunction()?;
                match self.bump() {
                    Some(Token::Close) => Ok(e),
                    _ => Err("missing ')'".into()),
                }
            }
            Some(Token::Const(b)) => Ok(Expr::Const(b)),
            Some(Token::Atom(name)) => Ok(Expr::Var(name)),
            Some(Token::Defined) => match self.bump() {
                Some(Token::Atom(name)) => Ok(Expr::Var(name)),
                Some(Token::Open) => match (self.bump(), self.bump()) {
                    (Some(Token::Atom(name)), Some(Token::Close)) => Ok(Expr::Var(name)),
                    _ => Err("malformed defined(...)".into()),
                },
                _ => Err("malformed defined".into()),
            },
            Some(t) => Err(format!("unexpected token {t:?}")),
            None => Err("unexpected end of condition".into()),
        }
    }
}
