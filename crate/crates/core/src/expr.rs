//! Arithmetic expressions over `x1..xn` for analytic test fields.
//! Vector values are written as comma-separated component lists, e.g.
//! `x1^2, sin(x2)`.

use crate::error::{AbvError, Result};

#[derive(Debug, Clone)]
enum Node {
    Const(f64),
    Var(usize),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Neg(Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Sin(Box<Node>),
    Cos(Box<Node>),
    Exp(Box<Node>),
    Log(Box<Node>),
    Abs(Box<Node>),
    Sqrt(Box<Node>),
}

impl Node {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Node::Const(c) => *c,
            Node::Var(i) => x[*i],
            Node::Add(a, b) => a.eval(x) + b.eval(x),
            Node::Sub(a, b) => a.eval(x) - b.eval(x),
            Node::Mul(a, b) => a.eval(x) * b.eval(x),
            Node::Div(a, b) => a.eval(x) / b.eval(x),
            Node::Neg(a) => -a.eval(x),
            Node::Pow(a, b) => a.eval(x).powf(b.eval(x)),
            Node::Sin(a) => a.eval(x).sin(),
            Node::Cos(a) => a.eval(x).cos(),
            Node::Exp(a) => a.eval(x).exp(),
            Node::Log(a) => a.eval(x).ln(),
            Node::Abs(a) => a.eval(x).abs(),
            Node::Sqrt(a) => a.eval(x).sqrt(),
        }
    }

    fn max_var(&self) -> usize {
        match self {
            Node::Const(_) => 0,
            Node::Var(i) => i + 1,
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
                a.max_var().max(b.max_var())
            }
            Node::Neg(a)
            | Node::Sin(a)
            | Node::Cos(a)
            | Node::Exp(a)
            | Node::Log(a)
            | Node::Abs(a)
            | Node::Sqrt(a) => a.max_var(),
        }
    }
}

/// A parsed, componentwise field expression `R^n → R^m`.
#[derive(Debug, Clone)]
pub struct FieldExpression {
    components: Vec<Node>,
    source: String,
}

impl FieldExpression {
    /// Parses a comma-separated list of component expressions.
    pub fn parse(src: &str) -> Result<Self> {
        let mut parser = Parser {
            chars: src.chars().collect(),
            pos: 0,
        };
        let mut components = Vec::new();
        loop {
            let node = parser.expr()?;
            components.push(node);
            parser.skip_ws();
            if parser.peek() == Some(',') {
                parser.pos += 1;
            } else {
                break;
            }
        }
        parser.skip_ws();
        if parser.pos < parser.chars.len() {
            return Err(AbvError::InvalidInput(format!(
                "unexpected input at offset {} in expression '{}'",
                parser.pos, src
            )));
        }
        Ok(FieldExpression {
            components,
            source: src.to_string(),
        })
    }

    pub fn components(&self) -> usize {
        self.components.len()
    }

    /// Highest variable index referenced (1-based count).
    pub fn max_var(&self) -> usize {
        self.components.iter().map(|c| c.max_var()).max().unwrap_or(0)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.components.iter().map(|c| c.eval(x)).collect()
    }

    /// Checks usability on an `n`-dimensional domain.
    pub fn validate_dim(&self, n: usize) -> Result<()> {
        if self.max_var() > n {
            return Err(AbvError::InvalidInput(format!(
                "expression '{}' references x{} but the domain has dimension {}",
                self.source,
                self.max_var(),
                n
            )));
        }
        Ok(())
    }
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut node = self.term()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some('+') => {
                    self.pos += 1;
                    node = Node::Add(Box::new(node), Box::new(self.term()?));
                }
                Some('-') => {
                    self.pos += 1;
                    node = Node::Sub(Box::new(node), Box::new(self.term()?));
                }
                _ => return Ok(node),
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut node = self.unary()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some('*') => {
                    self.pos += 1;
                    node = Node::Mul(Box::new(node), Box::new(self.unary()?));
                }
                Some('/') => {
                    self.pos += 1;
                    node = Node::Div(Box::new(node), Box::new(self.unary()?));
                }
                _ => return Ok(node),
            }
        }
    }

    fn unary(&mut self) -> Result<Node> {
        self.skip_ws();
        match self.peek() {
            Some('-') => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        self.skip_ws();
        if self.peek() == Some('^') {
            self.pos += 1;
            let exponent = self.unary()?;
            Ok(Node::Pow(Box::new(base), Box::new(exponent)))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Node> {
        self.skip_ws();
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let node = self.expr()?;
                self.skip_ws();
                if self.peek() != Some(')') {
                    return Err(AbvError::InvalidInput(format!(
                        "missing ')' at offset {}",
                        self.pos
                    )));
                }
                self.pos += 1;
                Ok(node)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            other => Err(AbvError::InvalidInput(format!(
                "unexpected character {other:?} at offset {}",
                self.pos
            ))),
        }
    }

    fn number(&mut self) -> Result<Node> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit() || c == '.') {
            self.pos += 1;
        }
        // scientific notation
        if matches!(self.peek(), Some('e') | Some('E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some('+') | Some('-')) {
                self.pos += 1;
            }
            if matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                    self.pos += 1;
                }
            } else {
                self.pos = mark;
            }
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        text.parse::<f64>()
            .map(Node::Const)
            .map_err(|_| AbvError::InvalidInput(format!("bad number '{text}' at offset {start}")))
    }

    fn ident(&mut self) -> Result<Node> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
            self.pos += 1;
        }
        let name: String = self.chars[start..self.pos].iter().collect();
        if let Some(rest) = name.strip_prefix('x') {
            if let Ok(i) = rest.parse::<usize>() {
                if i >= 1 {
                    return Ok(Node::Var(i - 1));
                }
            }
        }
        match name.as_str() {
            "pi" => return Ok(Node::Const(std::f64::consts::PI)),
            "e" => return Ok(Node::Const(std::f64::consts::E)),
            _ => {}
        }
        self.skip_ws();
        if self.peek() != Some('(') {
            return Err(AbvError::InvalidInput(format!(
                "unknown identifier '{name}' at offset {start}"
            )));
        }
        self.pos += 1;
        let arg = self.expr()?;
        let mut args = vec![arg];
        self.skip_ws();
        while self.peek() == Some(',') && name == "pow" && args.len() < 2 {
            self.pos += 1;
            args.push(self.expr()?);
            self.skip_ws();
        }
        if self.peek() != Some(')') {
            return Err(AbvError::InvalidInput(format!(
                "missing ')' after arguments of '{name}'"
            )));
        }
        self.pos += 1;
        let one = |mut v: Vec<Node>| Box::new(v.remove(0));
        Ok(match name.as_str() {
            "sin" => Node::Sin(one(args)),
            "cos" => Node::Cos(one(args)),
            "exp" => Node::Exp(one(args)),
            "log" => Node::Log(one(args)),
            "abs" => Node::Abs(one(args)),
            "sqrt" => Node::Sqrt(one(args)),
            "pow" => {
                if args.len() != 2 {
                    return Err(AbvError::InvalidInput("pow takes two arguments".into()));
                }
                let b = Box::new(args.remove(0));
                let e = Box::new(args.remove(0));
                Node::Pow(b, e)
            }
            _ => {
                return Err(AbvError::InvalidInput(format!(
                    "unknown function '{name}' at offset {start}"
                )))
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_polynomial() {
        let f = FieldExpression::parse("x1^2 - 2*x2 + 1").unwrap();
        assert_eq!(f.components(), 1);
        assert_eq!(f.eval(&[3.0, 0.5]), vec![9.0 - 1.0 + 1.0]);
    }

    #[test]
    fn vector_components_and_functions() {
        let f = FieldExpression::parse("sin(pi*x1), cos(x2) * exp(0)").unwrap();
        assert_eq!(f.components(), 2);
        let v = f.eval(&[0.5, 0.0]);
        assert!((v[0] - 1.0).abs() < 1e-15);
        assert!((v[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pow_and_abs_and_precedence() {
        let f = FieldExpression::parse("pow(abs(-2), 3) + 2*3^2").unwrap();
        assert_eq!(f.eval(&[])[0], 8.0 + 18.0);
        let g = FieldExpression::parse("-x1^2").unwrap();
        assert_eq!(g.eval(&[2.0])[0], -4.0);
    }

    #[test]
    fn dimension_validation() {
        let f = FieldExpression::parse("x3 + 1").unwrap();
        assert!(f.validate_dim(2).is_err());
        assert!(f.validate_dim(3).is_ok());
    }

    #[test]
    fn rejects_garbage() {
        assert!(FieldExpression::parse("x1 +").is_err());
        assert!(FieldExpression::parse("foo(x1)").is_err());
        assert!(FieldExpression::parse("(x1").is_err());
        assert!(FieldExpression::parse("x1 x2").is_err());
    }

    #[test]
    fn scientific_numbers() {
        let f = FieldExpression::parse("1e-3 + 2.5E2").unwrap();
        assert!((f.eval(&[])[0] - 250.001).abs() < 1e-12);
    }
}
