use std::fmt;

use super::{BinOp, Expr, Func, Layout};

/// Parse failure; `pos` is a 1-based character column (end of input is len+1).
#[derive(Clone, Debug, PartialEq)]
pub struct ParseError {
    pub pos: usize,
    pub msg: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "syntax error at position {}: {}", self.pos, self.msg)
    }
}

impl std::error::Error for ParseError {}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    End,
}

struct Lexer {
    toks: Vec<(Tok, usize)>,
}

fn lex(src: &str) -> Result<Lexer, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let pos = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            // exponent only when followed by a digit (keeps `2*e1` unambiguous)
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v = s.parse::<f64>().map_err(|_| ParseError { pos, msg: format!("bad number `{s}`") })?;
            toks.push((Tok::Num(v), pos));
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            if chars[i - 1] == '_' && i < chars.len() && chars[i] == '{' {
                while i < chars.len() && chars[i] != '}' {
                    i += 1;
                }
                if i == chars.len() {
                    return Err(ParseError { pos: i + 1, msg: "unclosed `{`".into() });
                }
                i += 1;
            }
            let s: String = chars[start..i].iter().filter(|c| !c.is_whitespace()).collect();
            toks.push((Tok::Ident(s), pos));
        } else if "+-*/^(),".contains(c) {
            toks.push((Tok::Op(c), pos));
            i += 1;
        } else {
            return Err(ParseError { pos, msg: format!("unexpected character `{c}`") });
        }
    }
    toks.push((Tok::End, chars.len() + 1));
    Ok(Lexer { toks })
}

struct Parser<'a> {
    lx: Lexer,
    at: usize,
    layout: &'a Layout,
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.lx.toks[self.at].0
    }

    fn pos(&self) -> usize {
        self.lx.toks[self.at].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.lx.toks[self.at].0.clone();
        if t != Tok::End {
            self.at += 1;
        }
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError { pos: self.pos(), msg: msg.into() })
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if *self.peek() == Tok::Op(c) {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected `{c}`"))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Op('-') {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn int_exponent(&mut self) -> Result<i32, ParseError> {
        let paren = *self.peek() == Tok::Op('(');
        if paren {
            self.bump();
        }
        let neg = *self.peek() == Tok::Op('-');
        if neg {
            self.bump();
        }
        let k = match self.peek() {
            Tok::Num(v) if v.fract() == 0.0 && *v <= i32::MAX as f64 => *v as i32,
            _ => return self.err("exponent must be an integer literal"),
        };
        self.bump();
        if paren {
            self.expect(')')?;
        }
        Ok(if neg { -k } else { k })
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if *self.peek() == Tok::Op('^') {
            self.bump();
            let k = self.int_exponent()?;
            return Ok(Expr::Pow(Box::new(base), k));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let pos = self.pos();
        match self.bump() {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::Op('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if *self.peek() == Tok::Op('(') {
                    let Some(f) = Func::from_name(&name) else {
                        return Err(ParseError { pos, msg: format!("unknown function `{name}`") });
                    };
                    self.bump();
                    let arg = self.expr()?;
                    if *self.peek() == Tok::Op(',') {
                        return self.err(format!("`{name}` takes exactly one argument"));
                    }
                    self.expect(')')?;
                    return Ok(Expr::Call(f, Box::new(arg)));
                }
                if name == "pi" {
                    return Ok(Expr::Num(std::f64::consts::PI));
                }
                if Func::from_name(&name).is_some() {
                    return Err(ParseError { pos, msg: format!("`{name}` takes exactly one argument") });
                }
                match self.layout.index(&name) {
                    Some(i) => Ok(Expr::Var(i)),
                    None => Err(ParseError { pos, msg: format!("unknown identifier `{name}`") }),
                }
            }
            Tok::End => Err(ParseError { pos, msg: "unexpected end of input".into() }),
            Tok::Op(c) => Err(ParseError { pos, msg: format!("unexpected `{c}`") }),
        }
    }
}

/// Parse `src` with variables resolved against `layout`.
pub fn parse(src: &str, layout: &Layout) -> Result<Expr, ParseError> {
    let lx = lex(src)?;
    let mut p = Parser { lx, at: 0, layout };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return p.err("trailing input");
    }
    Ok(e)
}
