//! Control-affine systems `ẋ = f(x) + g(x)u` with a safe set `{h ≥ 0}`,
//! an input polytope `{u : Au ≤ c}` and a state box.

mod builtins;
pub mod expr;
mod parser;

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::interval::Interval;
use crate::{Error, Result};

pub use builtins::{builtin, builtin_source, BUILTIN_SYSTEMS};
pub use expr::{Expr, Func};
pub use parser::{parse, parse_state_expr};

#[derive(Clone, Debug, PartialEq)]
pub struct SafetyProblem {
    pub n: usize,
    pub m: usize,
    pub f: Vec<Expr>,
    /// `n` rows of `m` entries.
    pub g: Vec<Vec<Expr>>,
    pub h: Expr,
    pub input_a: Vec<Vec<f64>>,
    pub input_c: Vec<f64>,
    pub unbounded_input: bool,
    pub state_box: Vec<(f64, f64)>,
    /// Optional display names of the state variables.
    pub state_names: Vec<String>,
    /// Initial-set metadata; unused by verification.
    pub initial_set: Option<Vec<(f64, f64)>>,
}

impl SafetyProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        m: usize,
        f: Vec<Expr>,
        g: Vec<Vec<Expr>>,
        h: Expr,
        input_a: Vec<Vec<f64>>,
        input_c: Vec<f64>,
        unbounded_input: bool,
        state_box: Vec<(f64, f64)>,
    ) -> Result<Self> {
        let p = Self {
            n,
            m,
            f,
            g,
            h,
            input_a,
            input_c,
            unbounded_input,
            state_box,
            state_names: Vec::new(),
            initial_set: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidProblem(msg));
        if self.n == 0 {
            return bad("state dimension must be positive".into());
        }
        if self.f.len() != self.n {
            return bad(format!("f has {} entries for {} states", self.f.len(), self.n));
        }
        if self.g.len() != self.n || self.g.iter().any(|r| r.len() != self.m) {
            return bad(format!("g must be {}x{}", self.n, self.m));
        }
        let exprs = self.f.iter().chain(self.g.iter().flatten()).chain(std::iter::once(&self.h));
        for e in exprs {
            if let Some(k) = e.max_var() {
                if k >= self.n {
                    return bad(format!("`{e}` uses x{} beyond {} states", k + 1, self.n));
                }
            }
        }
        if self.state_box.len() != self.n {
            return bad(format!("state box has {} axes for {} states", self.state_box.len(), self.n));
        }
        for (k, &(lo, hi)) in self.state_box.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return bad(format!("state box axis {} is empty or unbounded: [{lo}, {hi}]", k + 1));
            }
        }
        if self.unbounded_input && !self.input_a.is_empty() {
            return bad("unbounded inputs cannot carry input constraints".into());
        }
        if self.input_a.len() != self.input_c.len() {
            return bad("input constraint rows and offsets differ in count".into());
        }
        for row in &self.input_a {
            if row.len() != self.m || row.iter().any(|v| !v.is_finite()) {
                return bad(format!("input constraint row must have {} finite entries", self.m));
            }
        }
        if self.input_c.iter().any(|v| !v.is_finite()) {
            return bad("input constraint offsets must be finite".into());
        }
        if !self.state_names.is_empty() && self.state_names.len() != self.n {
            return bad("state names do not match the state dimension".into());
        }
        Ok(())
    }

    /// Number of input constraint rows `p`.
    pub fn num_input_rows(&self) -> usize {
        self.input_a.len()
    }

    pub fn state_name(&self, k: usize) -> String {
        self.state_names
            .get(k)
            .cloned()
            .unwrap_or_else(|| format!("x{}", k + 1))
    }

    /// Index of a state addressed by display name or `x<k>`.
    pub fn state_index(&self, name: &str) -> Option<usize> {
        if let Some(k) = self.state_names.iter().position(|s| s == name) {
            return Some(k);
        }
        let k: usize = name.strip_prefix('x')?.parse().ok()?;
        (1..=self.n).contains(&k).then(|| k - 1)
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: x.len() });
        }
        Ok(())
    }

    pub fn eval_f(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.check(x)?;
        let v = self.f.iter().map(|e| e.eval(x)).collect::<Result<Vec<_>>>()?;
        Ok(DVector::from_vec(v))
    }

    pub fn eval_g(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check(x)?;
        let mut out = DMatrix::zeros(self.n, self.m);
        for (i, row) in self.g.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                out[(i, j)] = e.eval(x)?;
            }
        }
        Ok(out)
    }

    pub fn eval_h(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        self.h.eval(x)
    }

    pub fn f_interval(&self, cube: &[Interval]) -> Result<Vec<Interval>> {
        self.f.iter().map(|e| e.eval_interval(cube)).collect()
    }

    pub fn g_interval(&self, cube: &[Interval]) -> Result<Vec<Vec<Interval>>> {
        self.g
            .iter()
            .map(|row| row.iter().map(|e| e.eval_interval(cube)).collect())
            .collect()
    }

    pub fn h_interval(&self, cube: &[Interval]) -> Result<Interval> {
        self.h.eval_interval(cube)
    }

    /// `G` when every entry of `g` is constant.
    pub fn constant_g(&self) -> Option<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.n, self.m);
        for (i, row) in self.g.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                out[(i, j)] = e.as_constant()?;
            }
        }
        Some(out)
    }

    /// `(F, f0)` with `f(x) = F x + f0` when `f` is affine.
    pub fn affine_f(&self) -> Option<(DMatrix<f64>, DVector<f64>)> {
        let mut mat = DMatrix::zeros(self.n, self.n);
        let mut off = DVector::zeros(self.n);
        for (i, e) in self.f.iter().enumerate() {
            let (coeffs, c) = e.affine(self.n)?;
            for (j, v) in coeffs.into_iter().enumerate() {
                mat[(i, j)] = v;
            }
            off[i] = c;
        }
        Some((mat, off))
    }

    pub fn box_intervals(&self) -> Vec<Interval> {
        self.state_box.iter().map(|&(lo, hi)| Interval::new(lo, hi)).collect()
    }

    pub fn in_box(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.state_box)
            .all(|(v, &(lo, hi))| lo <= *v && *v <= hi)
    }

    /// Renders the problem back into the DSL.
    pub fn unparse(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "states {}", self.n);
        let _ = writeln!(s, "inputs {}", self.m);
        if !self.state_names.is_empty() {
            let _ = writeln!(s, "names {}", self.state_names.join(" "));
        }
        for (k, &(lo, hi)) in self.state_box.iter().enumerate() {
            let _ = writeln!(s, "box {} {} {}", k + 1, Expr::Const(lo), Expr::Const(hi));
        }
        if let Some(init) = &self.initial_set {
            for (k, &(lo, hi)) in init.iter().enumerate() {
                let _ = writeln!(s, "initial {} {} {}", k + 1, Expr::Const(lo), Expr::Const(hi));
            }
        }
        for (k, e) in self.f.iter().enumerate() {
            let _ = writeln!(s, "f{} = {e}", k + 1);
        }
        for (i, row) in self.g.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                if *e != Expr::Const(0.0) {
                    let _ = writeln!(s, "g{}_{} = {e}", i + 1, j + 1);
                }
            }
        }
        let _ = writeln!(s, "h = {}", self.h);
        if self.unbounded_input {
            let _ = writeln!(s, "unbounded_inputs");
        }
        for (row, c) in self.input_a.iter().zip(&self.input_c) {
            let coeffs: Vec<String> = row.iter().map(|v| Expr::Const(*v).to_string()).collect();
            let _ = writeln!(s, "input_constraint {} <= {}", coeffs.join(" "), Expr::Const(*c));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_g_detection() {
        let p = builtin("example32").unwrap();
        assert_eq!(p.constant_g().unwrap().as_slice(), &[1.0, 0.0]);
        let oa = builtin("obstacle").unwrap();
        assert_eq!(oa.constant_g().unwrap().as_slice(), &[0.0, 0.0, 1.0]);
        let mut q = p.clone();
        q.g[0][0] = Expr::call(Func::Sin, Expr::var(0));
        assert!(q.constant_g().is_none());
    }

    #[test]
    fn affine_f_detection() {
        let (a, c) = builtin("example32").unwrap().affine_f().unwrap();
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 5.0]));
        assert_eq!(c.as_slice(), &[0.0, 0.0]);
        assert!(builtin("darboux").unwrap().affine_f().is_none());
    }

    #[test]
    fn unparse_reparses_to_equal_problem() {
        for name in BUILTIN_SYSTEMS {
            let p = builtin(name).unwrap();
            let text = p.unparse();
            let q = parse(&text).unwrap_or_else(|e| panic!("{name}: {e}\n{text}"));
            assert_eq!(p, q, "{name}");
            assert_eq!(q.unparse(), text);
        }
    }

    #[test]
    fn state_lookup_by_name() {
        let oa = builtin("obstacle").unwrap();
        assert_eq!(oa.state_index("psi"), Some(2));
        assert_eq!(oa.state_index("x2"), Some(1));
        assert_eq!(oa.state_index("x4"), None);
    }
}
