//! Small arithmetic expression evaluator for configuration fields.
//!
//! Boundary data, initial temperature, and source terms are given in run
//! configurations as strings over the variables x, y, t, for example
//! `"0.5*exp(-(x-1)^2) * max(0, 1-t)"`. Expressions are parsed once with
//! the shunting-yard algorithm into postfix code and evaluated with a
//! value stack, so per-point evaluation costs no allocation.
//!
//! Supported: literals, + − * / ^ (right associative), unary minus,
//! parentheses, the functions sin cos tan exp log sqrt abs (one argument)
//! and min max (two arguments), and the constants pi and e.

use crate::{Error, Result};

/// One-argument builtin functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func1 {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
}

impl Func1 {
    fn apply(self, v: f64) -> f64 {
        match self {
            Func1::Sin => v.sin(),
            Func1::Cos => v.cos(),
            Func1::Tan => v.tan(),
            Func1::Exp => v.exp(),
            Func1::Log => v.ln(),
            Func1::Sqrt => v.sqrt(),
            Func1::Abs => v.abs(),
        }
    }
}

/// Two-argument builtin functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func2 {
    Min,
    Max,
}

impl Func2 {
    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            Func2::Min => a.min(b),
            Func2::Max => a.max(b),
        }
    }
}

/// Postfix instruction.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Instr {
    Push(f64),
    /// Variable slot: 0 = x, 1 = y, 2 = t.
    Var(u8),
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Neg,
    Call1(Func1),
    Call2(Func2),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

fn tokenize(src: &str) -> Result<Vec<Tok>> {
    let bytes = src.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '(' => {
                toks.push(Tok::LParen);
                i += 1;
            }
            ')' => {
                toks.push(Tok::RParen);
                i += 1;
            }
            ',' => {
                toks.push(Tok::Comma);
                i += 1;
            }
            '+' | '-' | '*' | '/' | '^' => {
                toks.push(Tok::Op(c));
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && matches!(bytes[i] as char, '0'..='9' | '.') {
                    i += 1;
                }
                // exponent part, e.g. 1.5e-3
                if i < bytes.len() && matches!(bytes[i] as char, 'e' | 'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && matches!(bytes[j] as char, '+' | '-') {
                        j += 1;
                    }
                    if j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &src[start..i];
                let value: f64 = text
                    .parse()
                    .map_err(|_| Error::Expr(format!("invalid number '{text}' in '{src}'")))?;
                toks.push(Tok::Num(value));
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len()
                    && matches!(bytes[i] as char, 'a'..='z' | 'A'..='Z' | '0'..='9' | '_')
                {
                    i += 1;
                }
                toks.push(Tok::Ident(src[start..i].to_string()));
            }
            other => {
                return Err(Error::Expr(format!(
                    "unexpected character '{other}' in '{src}'"
                )))
            }
        }
    }
    Ok(toks)
}

/// Pending operator on the shunting-yard stack.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Pending {
    Infix(char),
    Prefix,
    Call1(Func1),
    Call2(Func2),
    LParen,
}

fn precedence(op: char) -> u8 {
    match op {
        '+' | '-' => 1,
        '*' | '/' => 2,
        '^' => 4,
        _ => 0,
    }
}

fn emit(pending: Pending, code: &mut Vec<Instr>) {
    match pending {
        Pending::Infix('+') => code.push(Instr::Add),
        Pending::Infix('-') => code.push(Instr::Sub),
        Pending::Infix('*') => code.push(Instr::Mul),
        Pending::Infix('/') => code.push(Instr::Div),
        Pending::Infix('^') => code.push(Instr::Pow),
        Pending::Infix(op) => unreachable!("unknown infix operator {op}"),
        Pending::Prefix => code.push(Instr::Neg),
        Pending::Call1(f) => code.push(Instr::Call1(f)),
        Pending::Call2(f) => code.push(Instr::Call2(f)),
        Pending::LParen => unreachable!("parenthesis is never emitted"),
    }
}

/// Compiled expression over the variables x, y, t.
#[derive(Debug, Clone)]
pub struct Expr {
    code: Vec<Instr>,
    source: String,
}

impl Expr {
    /// Parses `src` into postfix code, rejecting malformed input.
    pub fn parse(src: &str) -> Result<Expr> {
        let toks = tokenize(src)?;
        if toks.is_empty() {
            return Err(Error::Expr("empty expression".to_string()));
        }
        let mut code: Vec<Instr> = Vec::new();
        let mut stack: Vec<Pending> = Vec::new();
        // true when the previous token completed a value (number, variable,
        // closing parenthesis), so the next '-' is a binary operator
        let mut have_value = false;
        let mut iter = toks.iter().peekable();
        while let Some(tok) = iter.next() {
            match tok {
                Tok::Num(v) => {
                    code.push(Instr::Push(*v));
                    have_value = true;
                }
                Tok::Ident(name) => {
                    let is_call = matches!(iter.peek(), Some(Tok::LParen));
                    if is_call {
                        let pending = match name.as_str() {
                            "sin" => Pending::Call1(Func1::Sin),
                            "cos" => Pending::Call1(Func1::Cos),
                            "tan" => Pending::Call1(Func1::Tan),
                            "exp" => Pending::Call1(Func1::Exp),
                            "log" => Pending::Call1(Func1::Log),
                            "sqrt" => Pending::Call1(Func1::Sqrt),
                            "abs" => Pending::Call1(Func1::Abs),
                            "min" => Pending::Call2(Func2::Min),
                            "max" => Pending::Call2(Func2::Max),
                            other => {
                                return Err(Error::Expr(format!(
                                    "unknown function '{other}' in '{src}'"
                                )))
                            }
                        };
                        stack.push(pending);
                        iter.next();
                        stack.push(Pending::LParen);
                        have_value = false;
                    } else {
                        match name.as_str() {
                            "x" => code.push(Instr::Var(0)),
                            "y" => code.push(Instr::Var(1)),
                            "t" => code.push(Instr::Var(2)),
                            "pi" => code.push(Instr::Push(std::f64::consts::PI)),
                            "e" => code.push(Instr::Push(std::f64::consts::E)),
                            other => {
                                return Err(Error::Expr(format!(
                                    "unknown name '{other}' in '{src}' \
                                     (variables are x, y, t; constants pi, e)"
                                )))
                            }
                        }
                        have_value = true;
                    }
                }
                Tok::Op(op) => {
                    if !have_value {
                        match op {
                            '-' => {
                                stack.push(Pending::Prefix);
                                continue;
                            }
                            '+' => continue, // unary plus is a no-op
                            _ => {
                                return Err(Error::Expr(format!(
                                    "operator '{op}' needs a left operand in '{src}'"
                                )))
                            }
                        }
                    }
                    let prec = precedence(*op);
                    let right_assoc = *op == '^';
                    while let Some(&top) = stack.last() {
                        let pop = match top {
                            Pending::Infix(t) => {
                                let tp = precedence(t);
                                tp > prec || (tp == prec && !right_assoc)
                            }
                            // prefix minus binds tighter than * and /, looser than ^
                            Pending::Prefix => prec < 4,
                            _ => false,
                        };
                        if !pop {
                            break;
                        }
                        emit(stack.pop().expect("stack top checked"), &mut code);
                    }
                    stack.push(Pending::Infix(*op));
                    have_value = false;
                }
                Tok::LParen => {
                    if have_value {
                        return Err(Error::Expr(format!(
                            "missing operator before '(' in '{src}'"
                        )));
                    }
                    stack.push(Pending::LParen);
                }
                Tok::Comma => {
                    if !have_value {
                        return Err(Error::Expr(format!(
                            "missing value before ',' in '{src}'"
                        )));
                    }
                    loop {
                        match stack.last() {
                            Some(Pending::LParen) => break,
                            Some(_) => emit(stack.pop().expect("non-empty"), &mut code),
                            None => {
                                return Err(Error::Expr(format!(
                                    "',' outside a function call in '{src}'"
                                )))
                            }
                        }
                    }
                    have_value = false;
                }
                Tok::RParen => {
                    loop {
                        match stack.pop() {
                            Some(Pending::LParen) => break,
                            Some(other) => emit(other, &mut code),
                            None => {
                                return Err(Error::Expr(format!(
                                    "unbalanced ')' in '{src}'"
                                )))
                            }
                        }
                    }
                    if matches!(stack.last(), Some(Pending::Call1(_) | Pending::Call2(_))) {
                        emit(stack.pop().expect("call checked"), &mut code);
                    }
                    have_value = true;
                }
            }
        }
        while let Some(top) = stack.pop() {
            if top == Pending::LParen {
                return Err(Error::Expr(format!("unbalanced '(' in '{src}'")));
            }
            emit(top, &mut code);
        }
        // simulate the value stack: catches wrong arity and dangling operators
        let mut depth: isize = 0;
        for instr in &code {
            let (takes, gives) = match instr {
                Instr::Push(_) | Instr::Var(_) => (0, 1),
                Instr::Neg | Instr::Call1(_) => (1, 1),
                Instr::Add | Instr::Sub | Instr::Mul | Instr::Div | Instr::Pow
                | Instr::Call2(_) => (2, 1),
            };
            depth -= takes;
            if depth < 0 {
                return Err(Error::Expr(format!("missing operand in '{src}'")));
            }
            depth += gives;
        }
        if depth != 1 {
            return Err(Error::Expr(format!(
                "expression '{src}' does not reduce to a single value \
                 (check function argument counts)"
            )));
        }
        Ok(Expr { code, source: src.to_string() })
    }

    /// Evaluates at a point in space-time.
    pub fn eval(&self, x: f64, y: f64, t: f64) -> f64 {
        let mut stack = [0.0f64; 32];
        let mut top = 0usize;
        for instr in &self.code {
            match instr {
                Instr::Push(v) => {
                    stack[top] = *v;
                    top += 1;
                }
                Instr::Var(slot) => {
                    stack[top] = match slot {
                        0 => x,
                        1 => y,
                        _ => t,
                    };
                    top += 1;
                }
                Instr::Neg => stack[top - 1] = -stack[top - 1],
                Instr::Call1(f) => stack[top - 1] = f.apply(stack[top - 1]),
                Instr::Add => {
                    top -= 1;
                    stack[top - 1] += stack[top];
                }
                Instr::Sub => {
                    top -= 1;
                    stack[top - 1] -= stack[top];
                }
                Instr::Mul => {
                    top -= 1;
                    stack[top - 1] *= stack[top];
                }
                Instr::Div => {
                    top -= 1;
                    stack[top - 1] /= stack[top];
                }
                Instr::Pow => {
                    top -= 1;
                    stack[top - 1] = stack[top - 1].powf(stack[top]);
                }
                Instr::Call2(f) => {
                    top -= 1;
                    stack[top - 1] = f.apply(stack[top - 1], stack[top]);
                }
            }
        }
        stack[0]
    }

    /// The original text the expression was parsed from.
    pub fn source(&self) -> &str {
        &self.source
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(src: &str, x: f64, y: f64, t: f64) -> f64 {
        Expr::parse(src).unwrap().eval(x, y, t)
    }

    #[test]
    fn literals_and_precedence() {
        assert_eq!(eval("2+3*4", 0.0, 0.0, 0.0), 14.0, "multiplication binds tighter");
        assert_eq!(eval("2+3*4^2", 0.0, 0.0, 0.0), 50.0, "power binds tightest");
        assert_eq!(eval("2^3^2", 0.0, 0.0, 0.0), 512.0, "power is right associative");
        assert_eq!(eval("(2+3)*4", 0.0, 0.0, 0.0), 20.0, "parentheses override");
        assert_eq!(eval("1.5e-3", 0.0, 0.0, 0.0), 1.5e-3, "scientific notation");
        assert_eq!(eval("7/2/2", 0.0, 0.0, 0.0), 1.75, "division is left associative");
    }

    #[test]
    fn unary_minus() {
        assert_eq!(eval("-3", 0.0, 0.0, 0.0), -3.0, "leading minus");
        assert_eq!(eval("-x^2", 3.0, 0.0, 0.0), -9.0, "minus binds looser than power");
        assert_eq!(eval("2^-2", 0.0, 0.0, 0.0), 0.25, "minus in exponent");
        assert_eq!(eval("4--3", 0.0, 0.0, 0.0), 7.0, "double minus");
        assert_eq!(eval("-x*3", 2.0, 0.0, 0.0), -6.0, "minus distributes over product");
        assert_eq!(eval("5-+2", 0.0, 0.0, 0.0), 3.0, "unary plus is a no-op");
    }

    #[test]
    fn variables_and_constants() {
        assert_eq!(eval("x + 2*y - t", 1.0, 2.0, 3.0), 2.0, "variable lookup");
        assert!((eval("pi", 0.0, 0.0, 0.0) - std::f64::consts::PI).abs() < 1e-15);
        assert!((eval("e", 0.0, 0.0, 0.0) - std::f64::consts::E).abs() < 1e-15);
    }

    #[test]
    fn functions() {
        assert!((eval("sin(pi/2)", 0.0, 0.0, 0.0) - 1.0).abs() < 1e-15, "sin");
        assert!((eval("exp(log(5))", 0.0, 0.0, 0.0) - 5.0).abs() < 1e-12, "exp of log");
        assert!((eval("sqrt(x^2+y^2)", 3.0, 4.0, 0.0) - 5.0).abs() < 1e-12, "norm");
        assert_eq!(eval("abs(-7)", 0.0, 0.0, 0.0), 7.0, "abs");
        assert_eq!(eval("min(2, t)", 0.0, 0.0, 5.0), 2.0, "min");
        assert_eq!(eval("max(0, 1-t)", 0.0, 0.0, 0.25), 0.75, "max");
        assert!(
            (eval("0.5*exp(-(x-1)^2)*max(0,1-t)", 1.0, 0.0, 0.5) - 0.25).abs() < 1e-15,
            "composite beam-like profile"
        );
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        for bad in [
            "",
            "2+",
            "*3",
            "(2+3",
            "2+3)",
            "sin()",
            "sin(1,2)",
            "min(1)",
            "foo(2)",
            "z+1",
            "2 3",
            "1..5",
            "min(1,,2)",
            "3,4",
        ] {
            assert!(
                Expr::parse(bad).is_err(),
                "expected parse failure for '{bad}'"
            );
        }
    }

    #[test]
    fn source_round_trip() {
        let e = Expr::parse("x + 1").unwrap();
        assert_eq!(e.source(), "x + 1", "source text preserved");
    }
}
