//! Line-oriented parser for the dynamics DSL.
//!
//! ```text
//! states 2
//! inputs 1
//! box 1 -2 2
//! box 2 -2 2
//! f1 = x1
//! f2 = -x1 + 5*x2
//! g11 = 1
//! h = 9 - x1^2 - x2^2
//! unbounded_inputs
//! ```

use super::expr::{Expr, Func};
use super::SafetyProblem;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(&'static str),
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    col: usize,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        column,
        message: message.into(),
    }
}

fn tokenize(text: &str, line: usize) -> Result<Vec<Token>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c == '#' {
            break;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
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
            let v: f64 = s
                .parse()
                .map_err(|_| syntax(line, col, format!("malformed number `{s}`")))?;
            if !v.is_finite() {
                return Err(syntax(line, col, format!("number `{s}` is out of range")));
            }
            out.push(Token { tok: Tok::Num(v), col });
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                col,
            });
            continue;
        }
        let sym = match c {
            '+' => "+",
            '-' => "-",
            '*' => "*",
            '/' => "/",
            '^' => "^",
            '(' => "(",
            ')' => ")",
            '=' => "=",
            '<' if chars.get(i + 1) == Some(&'=') => {
                i += 1;
                "<="
            }
            other => return Err(syntax(line, col, format!("unexpected character `{other}`"))),
        };
        i += 1;
        out.push(Token { tok: Tok::Sym(sym), col });
    }
    Ok(out)
}

struct Scope<'a> {
    n: usize,
    names: &'a [String],
}

impl Scope<'_> {
    fn resolve(&self, name: &str, line: usize, col: usize) -> Result<Expr> {
        if name == "pi" {
            return Ok(Expr::Const(std::f64::consts::PI));
        }
        if let Some(k) = self.names.iter().position(|s| s == name) {
            return Ok(Expr::Var(k));
        }
        if let Some(rest) = name.strip_prefix('x') {
            if let Ok(k) = rest.parse::<usize>() {
                if k == 0 || k > self.n {
                    return Err(Error::InvalidProblem(format!(
                        "line {line}, column {col}: `{name}` is outside the {} declared states",
                        self.n
                    )));
                }
                return Ok(Expr::Var(k - 1));
            }
        }
        Err(Error::UnknownIdentifier {
            name: name.to_string(),
            line,
            column: col,
        })
    }
}

struct ExprParser<'a> {
    toks: &'a [Token],
    pos: usize,
    line: usize,
    end_col: usize,
    scope: &'a Scope<'a>,
}

impl<'a> ExprParser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |t| t.col)
    }

    fn eat(&mut self, sym: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(s)) if *s == sym) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn err_here(&self, what: &str) -> Error {
        match self.toks.get(self.pos) {
            Some(t) => syntax(self.line, t.col, format!("{what}, found {}", describe(&t.tok))),
            None => syntax(self.line, self.end_col, format!("{what}, found end of line")),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat("+") {
                lhs = lhs + self.term()?;
            } else if self.eat("-") {
                lhs = lhs - self.term()?;
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat("*") {
                lhs = lhs * self.unary()?;
            } else if self.eat("/") {
                lhs = lhs / self.unary()?;
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat("-") {
            // A literal directly after `-` is a negative constant unless it
            // is the base of a power.
            if let Some(Tok::Num(v)) = self.peek() {
                let next_is_pow = matches!(
                    self.toks.get(self.pos + 1).map(|t| &t.tok),
                    Some(Tok::Sym("^"))
                );
                if !next_is_pow {
                    let v = *v;
                    self.pos += 1;
                    return Ok(Expr::Const(-v));
                }
            }
            return Ok(-self.unary()?);
        }
        if self.eat("+") {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if !self.eat("^") {
            return Ok(base);
        }
        let neg = self.eat("-");
        match self.peek() {
            Some(Tok::Num(v)) if v.fract() == 0.0 && *v <= i32::MAX as f64 => {
                let k = *v as i32;
                self.pos += 1;
                Ok(base.pow(if neg { -k } else { k }))
            }
            _ => Err(self.err_here("expected an integer exponent")),
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        let col = self.col();
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Const(v))
            }
            Some(Tok::Sym("(")) => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(")") {
                    return Err(self.err_here("expected `)`"));
                }
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if let Some(func) = Func::from_name(&name) {
                    if !self.eat("(") {
                        return Err(self.err_here(&format!("expected `(` after `{name}`")));
                    }
                    let arg = self.expr()?;
                    if !self.eat(")") {
                        return Err(self.err_here("expected `)`"));
                    }
                    return Ok(Expr::call(func, arg));
                }
                self.scope.resolve(&name, self.line, col)
            }
            _ => Err(self.err_here("expected an operand")),
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(v) => format!("number `{v}`"),
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Sym(s) => format!("`{s}`"),
    }
}

fn parse_expr(toks: &[Token], line: usize, end_col: usize, scope: &Scope) -> Result<Expr> {
    let mut p = ExprParser {
        toks,
        pos: 0,
        line,
        end_col,
        scope,
    };
    let e = p.expr()?;
    if p.pos < toks.len() {
        return Err(p.err_here("unexpected trailing input"));
    }
    Ok(e)
}

/// Reads a signed numeric literal at `toks[*i]`.
fn number(toks: &[Token], i: &mut usize, line: usize, end_col: usize) -> Result<f64> {
    let mut sign = 1.0;
    if matches!(toks.get(*i).map(|t| &t.tok), Some(Tok::Sym("-"))) {
        sign = -1.0;
        *i += 1;
    }
    match toks.get(*i) {
        Some(Token { tok: Tok::Num(v), .. }) => {
            *i += 1;
            Ok(sign * v)
        }
        Some(t) => Err(syntax(line, t.col, format!("expected a number, found {}", describe(&t.tok)))),
        None => Err(syntax(line, end_col, "expected a number, found end of line")),
    }
}

fn count(toks: &[Token], i: &mut usize, line: usize, end_col: usize) -> Result<usize> {
    let col = toks.get(*i).map_or(end_col, |t| t.col);
    let v = number(toks, i, line, end_col)?;
    if v < 0.0 || v.fract() != 0.0 {
        return Err(syntax(line, col, format!("expected a non-negative integer, found `{v}`")));
    }
    Ok(v as usize)
}

fn expect_end(toks: &[Token], i: usize, line: usize) -> Result<()> {
    match toks.get(i) {
        None => Ok(()),
        Some(t) => Err(syntax(line, t.col, format!("unexpected {}", describe(&t.tok)))),
    }
}

fn dup(line: usize, what: &str) -> Error {
    Error::InvalidProblem(format!("line {line}: `{what}` defined twice"))
}

/// Parses one expression over the states of `prob`.
pub fn parse_state_expr(text: &str, prob: &SafetyProblem) -> Result<Expr> {
    let toks = tokenize(text, 1)?;
    if toks.is_empty() {
        return Err(syntax(1, 1, "empty expression"));
    }
    let names: Vec<String> = (0..prob.n).map(|k| prob.state_name(k)).collect();
    let scope = Scope { n: prob.n, names: &names };
    parse_expr(&toks, 1, text.chars().count() + 1, &scope)
}

/// Parses a problem description.
pub fn parse(source: &str) -> Result<SafetyProblem> {
    let lines: Vec<(usize, Vec<Token>, usize)> = source
        .lines()
        .enumerate()
        .map(|(k, text)| Ok((k + 1, tokenize(text, k + 1)?, text.chars().count() + 1)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|(_, t, _)| !t.is_empty())
        .collect();

    // Declarations first, so statements may appear in any order.
    let mut n = None;
    let mut m = None;
    let mut names: Vec<String> = Vec::new();
    for (line, toks, end) in &lines {
        let (line, end) = (*line, *end);
        let Tok::Ident(head) = &toks[0].tok else {
            continue;
        };
        let mut i = 1;
        match head.as_str() {
            "states" => {
                if n.replace(count(toks, &mut i, line, end)?).is_some() {
                    return Err(dup(line, "states"));
                }
                expect_end(toks, i, line)?;
            }
            "inputs" => {
                if m.replace(count(toks, &mut i, line, end)?).is_some() {
                    return Err(dup(line, "inputs"));
                }
                expect_end(toks, i, line)?;
            }
            "names" => {
                for t in &toks[1..] {
                    match &t.tok {
                        Tok::Ident(s) if Func::from_name(s).is_none() && s != "pi" => names.push(s.clone()),
                        other => return Err(syntax(line, t.col, format!("invalid state name {}", describe(other)))),
                    }
                }
            }
            _ => {}
        }
    }
    let n = n.ok_or_else(|| Error::InvalidProblem("missing `states` declaration".into()))?;
    let m = m.unwrap_or(0);
    if n == 0 {
        return Err(Error::InvalidProblem("`states` must be positive".into()));
    }
    if !names.is_empty() && names.len() != n {
        return Err(Error::InvalidProblem(format!(
            "`names` lists {} names for {n} states",
            names.len()
        )));
    }
    let scope = Scope { n, names: &names };

    let mut f: Vec<Option<Expr>> = vec![None; n];
    let mut g: Vec<Vec<Option<Expr>>> = vec![vec![None; m]; n];
    let mut h = None;
    let mut state_box: Vec<Option<(f64, f64)>> = vec![None; n];
    let mut initial: Vec<Option<(f64, f64)>> = vec![None; n];
    let mut input_a = Vec::new();
    let mut input_c = Vec::new();
    let mut unbounded = false;

    for (line, toks, end) in &lines {
        let (line, end) = (*line, *end);
        let head_tok = &toks[0];
        let Tok::Ident(head) = &head_tok.tok else {
            return Err(syntax(line, head_tok.col, format!("unexpected {}", describe(&head_tok.tok))));
        };
        let mut i = 1;
        match head.as_str() {
            "states" | "inputs" | "names" => {}
            "box" | "initial" => {
                let kcol = toks.get(1).map_or(end, |t| t.col);
                let k = count(toks, &mut i, line, end)?;
                let lo = number(toks, &mut i, line, end)?;
                let hi = number(toks, &mut i, line, end)?;
                expect_end(toks, i, line)?;
                if k == 0 || k > n {
                    return Err(Error::InvalidProblem(format!(
                        "line {line}, column {kcol}: axis {k} is outside the {n} declared states"
                    )));
                }
                let slot = if head == "box" { &mut state_box[k - 1] } else { &mut initial[k - 1] };
                if slot.replace((lo, hi)).is_some() {
                    return Err(dup(line, &format!("{head} {k}")));
                }
            }
            "unbounded_inputs" => {
                expect_end(toks, i, line)?;
                unbounded = true;
            }
            "input_constraint" => {
                let mut row = Vec::with_capacity(m);
                for _ in 0..m {
                    row.push(number(toks, &mut i, line, end)?);
                }
                match toks.get(i) {
                    Some(Token { tok: Tok::Sym("<="), .. }) => i += 1,
                    Some(t) => return Err(syntax(line, t.col, format!("expected `<=`, found {}", describe(&t.tok)))),
                    None => return Err(syntax(line, end, "expected `<=`, found end of line")),
                }
                let c = number(toks, &mut i, line, end)?;
                expect_end(toks, i, line)?;
                input_a.push(row);
                input_c.push(c);
            }
            _ => {
                let target = assignment_target(head, n, m, line, head_tok.col)?;
                match toks.get(1) {
                    Some(Token { tok: Tok::Sym("="), .. }) => {}
                    Some(t) => return Err(syntax(line, t.col, format!("expected `=`, found {}", describe(&t.tok)))),
                    None => return Err(syntax(line, end, "expected `=`, found end of line")),
                }
                let e = parse_expr(&toks[2..], line, end, &scope)?;
                let slot = match target {
                    Target::F(k) => &mut f[k],
                    Target::G(k, j) => &mut g[k][j],
                    Target::H => &mut h,
                };
                if slot.replace(e).is_some() {
                    return Err(dup(line, head));
                }
            }
        }
    }

    let f = f
        .into_iter()
        .enumerate()
        .map(|(k, e)| e.ok_or_else(|| Error::InvalidProblem(format!("`f{}` is not defined", k + 1))))
        .collect::<Result<Vec<_>>>()?;
    let g = g
        .into_iter()
        .map(|row| row.into_iter().map(|e| e.unwrap_or(Expr::Const(0.0))).collect())
        .collect();
    let h = h.ok_or_else(|| Error::InvalidProblem("`h` is not defined".into()))?;
    let state_box = state_box
        .into_iter()
        .enumerate()
        .map(|(k, b)| b.ok_or_else(|| Error::InvalidProblem(format!("`box {}` is not declared", k + 1))))
        .collect::<Result<Vec<_>>>()?;
    let initial_set = if initial.iter().all(Option::is_none) {
        None
    } else {
        Some(
            initial
                .into_iter()
                .enumerate()
                .map(|(k, b)| b.ok_or_else(|| Error::InvalidProblem(format!("`initial {}` is not declared", k + 1))))
                .collect::<Result<Vec<_>>>()?,
        )
    };
    if m > 0 && !unbounded && input_a.is_empty() {
        return Err(Error::InvalidProblem(
            "inputs declared without `input_constraint` rows or `unbounded_inputs`".into(),
        ));
    }
    let mut prob = SafetyProblem::new(n, m, f, g, h, input_a, input_c, unbounded, state_box)?;
    prob.state_names = names;
    prob.initial_set = initial_set;
    Ok(prob)
}

enum Target {
    F(usize),
    G(usize, usize),
    H,
}

fn assignment_target(head: &str, n: usize, m: usize, line: usize, col: usize) -> Result<Target> {
    let out_of_range = |what: &str| {
        Error::InvalidProblem(format!(
            "line {line}, column {col}: `{what}` does not fit {n} states and {m} inputs"
        ))
    };
    if head == "h" {
        return Ok(Target::H);
    }
    if let Some(rest) = head.strip_prefix('f') {
        if let Ok(k) = rest.parse::<usize>() {
            if k == 0 || k > n {
                return Err(out_of_range(head));
            }
            return Ok(Target::F(k - 1));
        }
    }
    if let Some(rest) = head.strip_prefix('g') {
        let parsed = if let Some((a, b)) = rest.split_once('_') {
            a.parse::<usize>().ok().zip(b.parse::<usize>().ok())
        } else if rest.len() == 2 && rest.chars().all(|c| c.is_ascii_digit()) {
            let d: Vec<usize> = rest.chars().map(|c| c as usize - '0' as usize).collect();
            Some((d[0], d[1]))
        } else {
            None
        };
        if let Some((k, j)) = parsed {
            if k == 0 || k > n || j == 0 || j > m {
                return Err(out_of_range(head));
            }
            return Ok(Target::G(k - 1, j - 1));
        }
    }
    Err(syntax(line, col, format!("unknown statement `{head}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = "\
states 2
inputs 1
box 1 -2 2
box 2 -2 2
f1 = x1
f2 = -x1 + 5*x2   # linear
g11 = 1
h = 9 - x1^2 - x2^2
unbounded_inputs
";

    #[test]
    fn parses_linear_example() {
        let p = parse(EXAMPLE).unwrap();
        assert_eq!((p.n, p.m), (2, 1));
        assert_eq!(p.eval_f(&[1.0, 1.0]).unwrap().as_slice(), &[1.0, 4.0]);
        assert!(p.unbounded_input);
        assert_eq!(p.eval_h(&[1.0, 2.0]).unwrap(), 4.0);
    }

    #[test]
    fn trailing_operator_is_a_syntax_error() {
        let src = "states 3\nbox 1 0 1\nbox 2 0 1\nbox 3 0 1\nf1 = x3 +\n";
        match parse(src) {
            Err(Error::Syntax { line, column, .. }) => assert_eq!((line, column), (5, 10)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_identifier_reports_position() {
        let src = "states 1\nbox 1 0 1\nf1 = 2*y\nh = 1\n";
        match parse(src) {
            Err(Error::UnknownIdentifier { name, line, column }) => {
                assert_eq!((name.as_str(), line, column), ("y", 3, 8))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn variable_beyond_declared_states_is_inconsistent() {
        let src = "states 1\nbox 1 0 1\nf1 = x2\nh = 1\n";
        assert!(matches!(parse(src), Err(Error::InvalidProblem(_))));
        let src = "states 1\ninputs 1\nbox 1 0 1\nf1 = 0\ng12 = 1\nh = 1\nunbounded_inputs\n";
        assert!(matches!(parse(src), Err(Error::InvalidProblem(_))));
    }

    #[test]
    fn missing_pieces_are_rejected() {
        assert!(parse("box 1 0 1\nf1 = 0\nh = 1\n").is_err());
        assert!(parse("states 1\nbox 1 0 1\nh = 1\n").is_err());
        assert!(parse("states 1\nbox 1 0 1\nf1 = 0\n").is_err());
        assert!(parse("states 1\nf1 = 0\nh = 1\n").is_err());
        assert!(parse("states 1\ninputs 1\nbox 1 0 1\nf1 = 0\nh = 1\n").is_err());
        assert!(parse("states 1\nbox 1 1 0\nf1 = 0\nh = 1\n").is_err());
    }

    #[test]
    fn input_constraints_and_names() {
        let src = "\
states 2
inputs 2
names p v
box 1 -1 1
box 2 -1 1
f1 = v
f2 = -sin(p) + pi*0
g2_1 = 1
g22 = 0.5
h = 1 - abs(p)
input_constraint 1 0 <= 2
input_constraint -1 0 <= 2.5e0
";
        let p = parse(src).unwrap();
        assert_eq!(p.input_a, vec![vec![1.0, 0.0], vec![-1.0, 0.0]]);
        assert_eq!(p.input_c, vec![2.0, 2.5]);
        assert_eq!(p.eval_f(&[0.0, 3.0]).unwrap().as_slice(), &[3.0, 0.0]);
        assert_eq!(p.eval_g(&[0.0, 0.0]).unwrap()[(1, 1)], 0.5);
        assert_eq!(p.state_names, ["p", "v"]);
    }

    #[test]
    fn state_expressions() {
        let prob = parse("states 3\ninputs 0\nnames a b psi\nbox 1 -1 1\nbox 2 -1 1\nbox 3 -1 1\nf1 = 0\nf2 = 0\nf3 = 0\nh = 1\n").unwrap();
        let e = parse_state_expr("2*a - psi^2 + x2", &prob).unwrap();
        assert_eq!(e.eval(&[1.0, 3.0, 2.0]).unwrap(), 1.0);
        assert!(matches!(parse_state_expr("q", &prob), Err(Error::UnknownIdentifier { .. })));
        assert!(parse_state_expr("  ", &prob).is_err());
    }

    #[test]
    fn unary_minus_binds_looser_than_power() {
        let src = "states 1\nbox 1 -1 1\nf1 = -2^2 + -x1^2\nh = -(3)\n";
        let p = parse(src).unwrap();
        assert_eq!(p.f[0].eval(&[3.0]).unwrap(), -13.0);
        assert_eq!(p.h, -Expr::Const(3.0));
    }
}
