//! Hand-written lexer and recursive descent parser.
//!
//! ```text
//! program   = { component NEWLINE }
//! component = ident "=" expr
//! expr      = term { ("+" | "-") term }
//! term      = factor { ("*" | "/") factor }
//! factor    = [ "-" ] atom
//! atom      = number | ident | call | "(" expr ")"
//! call      = fname "(" arg { "," arg } ")"
//! ```
//!
//! The first argument of `where` is `expr relop expr`; comparisons are not
//! accepted anywhere else.

use std::collections::HashSet;

use super::ast::{BinOp, CmpOp, Component, Expr, ExprKind, Func, RewardProgram, Span};
use super::error::RewardLangError;

pub const MAX_SOURCE_BYTES: usize = 64 * 1024;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
    Comma,
    Assign,
    Cmp(CmpOp),
    Newline,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Number(_) => "number".to_string(),
            Tok::Ident(name) => format!("identifier '{name}'"),
            Tok::Plus => "'+'".to_string(),
            Tok::Minus => "'-'".to_string(),
            Tok::Star => "'*'".to_string(),
            Tok::Slash => "'/'".to_string(),
            Tok::LParen => "'('".to_string(),
            Tok::RParen => "')'".to_string(),
            Tok::Comma => "','".to_string(),
            Tok::Assign => "'='".to_string(),
            Tok::Cmp(op) => format!("'{}'", op.symbol()),
            Tok::Newline => "end of line".to_string(),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    span: Span,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: u32,
    column: u32,
}

impl<'a> Lexer<'a> {
    fn new(source: &'a str) -> Self {
        Self {
            chars: source.chars().peekable(),
            line: 1,
            column: 1,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn span(&self) -> Span {
        Span::new(self.line, self.column)
    }

    fn tokenize(mut self) -> Result<Vec<Token>, RewardLangError> {
        let mut out = Vec::new();
        loop {
            let span = self.span();
            let Some(&c) = self.chars.peek() else {
                out.push(Token { tok: Tok::Eof, span });
                return Ok(out);
            };
            let tok = match c {
                ' ' | '\t' | '\r' => {
                    self.bump();
                    continue;
                }
                '#' => {
                    while matches!(self.chars.peek(), Some(&c) if c != '\n') {
                        self.bump();
                    }
                    continue;
                }
                '\n' => {
                    self.bump();
                    Tok::Newline
                }
                '0'..='9' => self.number(span)?,
                'a'..='z' | '_' => {
                    let mut name = String::new();
                    while let Some(&c) = self.chars.peek() {
                        if c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' {
                            name.push(c);
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    Tok::Ident(name)
                }
                '+' => self.single(Tok::Plus),
                '-' => self.single(Tok::Minus),
                '*' => self.single(Tok::Star),
                '/' => self.single(Tok::Slash),
                '(' => self.single(Tok::LParen),
                ')' => self.single(Tok::RParen),
                ',' => self.single(Tok::Comma),
                '<' | '>' | '=' => {
                    self.bump();
                    let eq = self.chars.peek() == Some(&'=');
                    if eq {
                        self.bump();
                    }
                    match (c, eq) {
                        ('<', false) => Tok::Cmp(CmpOp::Lt),
                        ('<', true) => Tok::Cmp(CmpOp::Le),
                        ('>', false) => Tok::Cmp(CmpOp::Gt),
                        ('>', true) => Tok::Cmp(CmpOp::Ge),
                        ('=', false) => Tok::Assign,
                        _ => Tok::Cmp(CmpOp::Eq),
                    }
                }
                other => {
                    return Err(RewardLangError::parse(
                        span,
                        format!("unexpected character '{other}'"),
                    ))
                }
            };
            out.push(Token { tok, span });
        }
    }

    fn single(&mut self, tok: Tok) -> Tok {
        self.bump();
        tok
    }

    fn digits(&mut self, text: &mut String) -> usize {
        let mut n = 0;
        while let Some(&c) = self.chars.peek() {
            if !c.is_ascii_digit() {
                break;
            }
            text.push(c);
            self.bump();
            n += 1;
        }
        n
    }

    fn number(&mut self, span: Span) -> Result<Tok, RewardLangError> {
        let mut text = String::new();
        self.digits(&mut text);
        if self.chars.peek() == Some(&'.') {
            text.push('.');
            self.bump();
            if self.digits(&mut text) == 0 {
                return Err(RewardLangError::parse(
                    self.span(),
                    "expected digits after decimal point",
                ));
            }
        }
        if matches!(self.chars.peek(), Some('e') | Some('E')) {
            text.push('e');
            self.bump();
            if let Some(&sign @ ('+' | '-')) = self.chars.peek() {
                text.push(sign);
                self.bump();
            }
            if self.digits(&mut text) == 0 {
                return Err(RewardLangError::parse(
                    self.span(),
                    "expected digits in exponent",
                ));
            }
        }
        let value: f64 = text
            .parse()
            .map_err(|_| RewardLangError::parse(span, format!("invalid number '{text}'")))?;
        if !value.is_finite() {
            return Err(RewardLangError::parse(
                span,
                format!("number '{text}' is out of range"),
            ));
        }
        Ok(Tok::Number(value))
    }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn advance(&mut self) -> Token {
        let tok = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        tok
    }

    fn unexpected(&self, expected: &str) -> RewardLangError {
        let token = self.peek();
        match token.tok {
            Tok::Cmp(_) => RewardLangError::parse(
                token.span,
                "comparisons are only allowed as the first argument of where(cond, a, b)",
            ),
            _ => RewardLangError::parse(
                token.span,
                format!("expected {expected}, found {}", token.tok.describe()),
            ),
        }
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> Result<Token, RewardLangError> {
        if self.peek().tok == tok {
            Ok(self.advance())
        } else {
            Err(self.unexpected(expected))
        }
    }

    fn program(&mut self, source: &str) -> Result<RewardProgram, RewardLangError> {
        let mut components = Vec::new();
        let mut seen = HashSet::new();
        loop {
            while self.peek().tok == Tok::Newline {
                self.advance();
            }
            if self.peek().tok == Tok::Eof {
                break;
            }
            let component = self.component()?;
            if !seen.insert(component.name.clone()) {
                return Err(RewardLangError::parse(
                    component.span,
                    format!("duplicate component '{}'", component.name),
                ));
            }
            components.push(component);
            match self.peek().tok {
                Tok::Newline | Tok::Eof => {}
                _ => return Err(self.unexpected("end of line")),
            }
        }
        if components.is_empty() {
            return Err(RewardLangError::parse(
                self.peek().span,
                "program must declare at least one component",
            ));
        }
        if components.iter().all(|c| c.name == super::ast::TOTAL_COMPONENT) {
            return Err(RewardLangError::parse(
                components[0].span,
                "program must declare at least one component besides 'total'",
            ));
        }
        Ok(RewardProgram {
            components,
            source: source.to_string(),
        })
    }

    fn component(&mut self) -> Result<Component, RewardLangError> {
        let token = self.peek().clone();
        let Tok::Ident(name) = token.tok else {
            return Err(self.unexpected("component name"));
        };
        if Func::from_name(&name).is_some() {
            return Err(RewardLangError::parse(
                token.span,
                format!("'{name}' is a built-in function and cannot name a component"),
            ));
        }
        self.advance();
        self.expect(Tok::Assign, "'='")?;
        let body = self.expr()?;
        Ok(Component {
            name,
            span: token.span,
            body,
        })
    }

    fn expr(&mut self) -> Result<Expr, RewardLangError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().tok {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.term()?;
            let span = lhs.span;
            lhs = Expr::new(
                ExprKind::Binary {
                    op,
                    lhs: Box::new(lhs),
                    rhs: Box::new(rhs),
                },
                span,
            );
        }
    }

    fn term(&mut self) -> Result<Expr, RewardLangError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek().tok {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.factor()?;
            let span = lhs.span;
            lhs = Expr::new(
                ExprKind::Binary {
                    op,
                    lhs: Box::new(lhs),
                    rhs: Box::new(rhs),
                },
                span,
            );
        }
    }

    fn factor(&mut self) -> Result<Expr, RewardLangError> {
        if self.peek().tok == Tok::Minus {
            let span = self.advance().span;
            let inner = self.atom()?;
            return Ok(Expr::new(ExprKind::Neg(Box::new(inner)), span));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, RewardLangError> {
        let token = self.peek().clone();
        match token.tok {
            Tok::Number(value) => {
                self.advance();
                Ok(Expr::new(ExprKind::Number(value), token.span))
            }
            Tok::Ident(name) => {
                self.advance();
                match Func::from_name(&name) {
                    Some(func) => self.call(func, token.span),
                    None if self.peek().tok == Tok::LParen => Err(RewardLangError::parse(
                        token.span,
                        format!("unknown function '{name}'"),
                    )),
                    None => Ok(Expr::new(ExprKind::Ident(name), token.span)),
                }
            }
            Tok::LParen => {
                self.advance();
                let inner = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(inner)
            }
            _ => Err(RewardLangError::parse(token.span, "expected expression")),
        }
    }

    fn call(&mut self, func: Func, span: Span) -> Result<Expr, RewardLangError> {
        if self.peek().tok != Tok::LParen {
            return Err(RewardLangError::parse(
                span,
                format!("built-in function '{}' must be called with arguments", func.name()),
            ));
        }
        self.advance();
        let mut args = Vec::new();
        if self.peek().tok != Tok::RParen {
            loop {
                let arg = if func == Func::Where && args.is_empty() {
                    self.condition()?
                } else {
                    self.expr()?
                };
                args.push(arg);
                if self.peek().tok == Tok::Comma {
                    self.advance();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, "',' or ')'")?;
        if args.len() != func.arity() {
            let plural = if func.arity() == 1 { "" } else { "s" };
            return Err(RewardLangError::arity(
                span,
                format!(
                    "function '{}' expects {} argument{plural}, got {}",
                    func.name(),
                    func.arity(),
                    args.len()
                ),
            ));
        }
        Ok(Expr::new(ExprKind::Call { func, args }, span))
    }

    fn condition(&mut self) -> Result<Expr, RewardLangError> {
        let lhs = self.expr()?;
        let Tok::Cmp(op) = self.peek().tok else {
            return Err(RewardLangError::parse(
                self.peek().span,
                format!(
                    "expected comparison operator (<, <=, >, >=, ==) in where() condition, found {}",
                    self.peek().tok.describe()
                ),
            ));
        };
        self.advance();
        let rhs = self.expr()?;
        let span = lhs.span;
        Ok(Expr::new(
            ExprKind::Compare {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            },
            span,
        ))
    }
}

/// Parses reward-language source. Identifier resolution happens later in
/// [`super::validate_program`].
pub fn parse_program(source: &str) -> Result<RewardProgram, RewardLangError> {
    if source.len() > MAX_SOURCE_BYTES {
        return Err(RewardLangError::parse(
            Span::new(1, 1),
            format!("source is {} bytes; the limit is {MAX_SOURCE_BYTES}", source.len()),
        ));
    }
    let tokens = Lexer::new(source).tokenize()?;
    Parser { tokens, pos: 0 }.program(source)
}
