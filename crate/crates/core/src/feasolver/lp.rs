//! Dense two-phase simplex with Farkas certificates for infeasible programs.

use crate::{Error, Result};

/// Default primal feasibility tolerance.
pub const LP_FEAS_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-10;
const COST_TOL: f64 = 1e-10;
const MAX_PIVOTS: usize = 200_000;
/// Consecutive degenerate pivots before switching to Bland's rule.
const DEGENERATE_SWITCH: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

/// `coeffs · x  cmp  rhs`
#[derive(Clone, Debug, PartialEq)]
pub struct LinearConstraint {
    pub coeffs: Vec<f64>,
    pub cmp: Cmp,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs: f64 = self.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
        match self.cmp {
            Cmp::Le => (lhs - self.rhs).max(0.0),
            Cmp::Ge => (self.rhs - lhs).max(0.0),
            Cmp::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// Minimize `objective · x` subject to linear rows and variable bounds.
/// Bounds default to free; infinite bounds mean "absent".
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram {
    pub num_vars: usize,
    pub objective: Option<Vec<f64>>,
    pub constraints: Vec<LinearConstraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            objective: None,
            constraints: Vec::new(),
            lower: vec![f64::NEG_INFINITY; num_vars],
            upper: vec![f64::INFINITY; num_vars],
        }
    }

    pub fn minimize(&mut self, c: Vec<f64>) -> &mut Self {
        assert_eq!(c.len(), self.num_vars);
        self.objective = Some(c);
        self
    }

    pub fn maximize(&mut self, c: Vec<f64>) -> &mut Self {
        self.minimize(c.into_iter().map(|v| -v).collect())
    }

    pub fn add(&mut self, coeffs: Vec<f64>, cmp: Cmp, rhs: f64) -> &mut Self {
        assert_eq!(coeffs.len(), self.num_vars);
        self.constraints.push(LinearConstraint { coeffs, cmp, rhs });
        self
    }

    pub fn add_le(&mut self, coeffs: Vec<f64>, rhs: f64) -> &mut Self {
        self.add(coeffs, Cmp::Le, rhs)
    }

    pub fn add_ge(&mut self, coeffs: Vec<f64>, rhs: f64) -> &mut Self {
        self.add(coeffs, Cmp::Ge, rhs)
    }

    pub fn add_eq(&mut self, coeffs: Vec<f64>, rhs: f64) -> &mut Self {
        self.add(coeffs, Cmp::Eq, rhs)
    }

    pub fn bound(&mut self, j: usize, lo: f64, hi: f64) -> &mut Self {
        self.lower[j] = lo;
        self.upper[j] = hi;
        self
    }

    /// Largest violation of any row or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.constraints.iter().map(|c| c.violation(x));
        let bounds = x
            .iter()
            .enumerate()
            .map(|(j, &v)| (self.lower[j] - v).max(v - self.upper[j]).max(0.0));
        rows.chain(bounds).fold(0.0, f64::max)
    }

    fn validate(&self) -> Result<()> {
        let finite = |v: &f64| v.is_finite();
        let ok = self.lower.len() == self.num_vars
            && self.upper.len() == self.num_vars
            && self.constraints.iter().all(|c| {
                c.coeffs.len() == self.num_vars && c.coeffs.iter().all(finite) && c.rhs.is_finite()
            })
            && self.objective.as_ref().map_or(true, |c| c.len() == self.num_vars && c.iter().all(finite))
            && self.lower.iter().all(|v| !v.is_nan() && *v != f64::INFINITY)
            && self.upper.iter().all(|v| !v.is_nan() && *v != f64::NEG_INFINITY);
        if !ok {
            return Err(Error::InvalidProblem("malformed linear program".into()));
        }
        Ok(())
    }
}

/// Proof of infeasibility. Every row is read in `≤` orientation (`Ge` rows
/// negated); `rows[i] ≥ 0` except for `Eq` rows, which are free. `lower[j]`
/// multiplies `-x_j ≤ -lo_j` and `upper[j]` multiplies `x_j ≤ hi_j`. The
/// weighted sum has zero coefficients and a negative right-hand side.
#[derive(Clone, Debug, PartialEq)]
pub struct FarkasCertificate {
    pub rows: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl FarkasCertificate {
    /// Coefficient residual and right-hand side of the combined inequality.
    pub fn combine(&self, lp: &LinearProgram) -> (Vec<f64>, f64) {
        let mut coeff = vec![0.0; lp.num_vars];
        let mut rhs = 0.0;
        for (c, &y) in lp.constraints.iter().zip(&self.rows) {
            let o = if c.cmp == Cmp::Ge { -1.0 } else { 1.0 };
            for (k, a) in coeff.iter_mut().zip(&c.coeffs) {
                *k += o * y * a;
            }
            rhs += o * y * c.rhs;
        }
        for j in 0..lp.num_vars {
            if self.lower[j] != 0.0 {
                coeff[j] -= self.lower[j];
                rhs -= self.lower[j] * lp.lower[j];
            }
            if self.upper[j] != 0.0 {
                coeff[j] += self.upper[j];
                rhs += self.upper[j] * lp.upper[j];
            }
        }
        (coeff, rhs)
    }

    /// Re-checks the certificate by direct arithmetic.
    pub fn verify(&self, lp: &LinearProgram) -> bool {
        if self.rows.len() != lp.constraints.len()
            || self.lower.len() != lp.num_vars
            || self.upper.len() != lp.num_vars
        {
            return false;
        }
        let signs_ok = lp
            .constraints
            .iter()
            .zip(&self.rows)
            .all(|(c, &y)| c.cmp == Cmp::Eq || y >= 0.0)
            && self.lower.iter().zip(&lp.lower).all(|(&l, b)| l >= 0.0 && (l == 0.0 || b.is_finite()))
            && self.upper.iter().zip(&lp.upper).all(|(&u, b)| u >= 0.0 && (u == 0.0 || b.is_finite()));
        if !signs_ok {
            return false;
        }
        let (coeff, rhs) = self.combine(lp);
        let mut weight = 0.0f64;
        for (c, &y) in lp.constraints.iter().zip(&self.rows) {
            let amax = c.coeffs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            weight += y.abs() * amax.max(c.rhs.abs());
        }
        weight += self.lower.iter().sum::<f64>() + self.upper.iter().sum::<f64>();
        let scale = weight.max(1e-300);
        let resid = coeff.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        resid <= 1e-9 * scale && rhs < -1e-10 * scale
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible(FarkasCertificate),
    Unbounded,
}

impl LpOutcome {
    pub fn is_feasible(&self) -> bool {
        !matches!(self, LpOutcome::Infeasible(_))
    }

    pub fn point(&self) -> Option<&[f64]> {
        match self {
            LpOutcome::Optimal { x, .. } => Some(x),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum VarMap {
    /// `x = lo + x'`
    Shift(f64),
    /// `x = hi - x'`
    Mirror(f64),
    /// `x = x⁺ - x⁻`
    Split,
}

#[derive(Clone, Copy, Debug)]
enum RowSource {
    User(usize),
    Upper(usize),
}

struct StdRow {
    coeffs: Vec<f64>,
    rhs: f64,
    eq: bool,
    source: RowSource,
    /// Multiplier converting a standardized dual into the `≤`-oriented row's.
    factor: f64,
}

/// Solves `lp` by the two-phase simplex method.
pub fn lp_solve(lp: &LinearProgram) -> Result<LpOutcome> {
    solve(lp, true)
}

fn solve(lp: &LinearProgram, certificate_fallback: bool) -> Result<LpOutcome> {
    lp.validate()?;
    let n = lp.num_vars;

    let mut maps = Vec::with_capacity(n);
    let mut col_of = Vec::with_capacity(n);
    let mut ncols = 0;
    for j in 0..n {
        col_of.push(ncols);
        let (lo, hi) = (lp.lower[j], lp.upper[j]);
        if lo > hi {
            let mut cert = zero_cert(lp);
            cert.lower[j] = 1.0;
            cert.upper[j] = 1.0;
            return Ok(LpOutcome::Infeasible(cert));
        }
        if lo.is_finite() {
            maps.push(VarMap::Shift(lo));
            ncols += 1;
        } else if hi.is_finite() {
            maps.push(VarMap::Mirror(hi));
            ncols += 1;
        } else {
            maps.push(VarMap::Split);
            ncols += 2;
        }
    }

    // Rows in x'-space, `≤`-oriented or equality.
    let mut rows: Vec<StdRow> = Vec::new();
    let mut push_row = |coeffs_x: &[f64], rhs_x: f64, eq: bool, source: RowSource, orient: f64| -> Option<FarkasCertificate> {
        let mut coeffs = vec![0.0; ncols];
        let mut rhs = rhs_x;
        for j in 0..n {
            let a = coeffs_x[j];
            if a == 0.0 {
                continue;
            }
            match maps[j] {
                VarMap::Shift(lo) => {
                    coeffs[col_of[j]] = a;
                    rhs -= a * lo;
                }
                VarMap::Mirror(hi) => {
                    coeffs[col_of[j]] = -a;
                    rhs -= a * hi;
                }
                VarMap::Split => {
                    coeffs[col_of[j]] = a;
                    coeffs[col_of[j] + 1] = -a;
                }
            }
        }
        let scale = coeffs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            let violated = if eq { rhs.abs() > LP_FEAS_TOL } else { rhs < -LP_FEAS_TOL };
            if violated {
                if let RowSource::User(i) = source {
                    let mut cert = zero_cert(lp);
                    cert.rows[i] = if eq { -rhs.signum() } else { 1.0 };
                    return Some(cert);
                }
            }
            return None;
        }
        for v in coeffs.iter_mut() {
            *v /= scale;
        }
        rhs /= scale;
        let mut factor = orient / scale;
        if rhs < 0.0 {
            for v in coeffs.iter_mut() {
                *v = -*v;
            }
            rhs = -rhs;
            factor = -factor;
        }
        rows.push(StdRow { coeffs, rhs, eq, source, factor });
        None
    };
    for (i, c) in lp.constraints.iter().enumerate() {
        let (coeffs, rhs, orient): (Vec<f64>, f64, f64) = match c.cmp {
            Cmp::Le | Cmp::Eq => (c.coeffs.clone(), c.rhs, 1.0),
            Cmp::Ge => (c.coeffs.iter().map(|v| -v).collect(), -c.rhs, 1.0),
        };
        if let Some(cert) = push_row(&coeffs, rhs, c.cmp == Cmp::Eq, RowSource::User(i), orient) {
            return Ok(LpOutcome::Infeasible(cert));
        }
    }
    for j in 0..n {
        if lp.lower[j].is_finite() && lp.upper[j].is_finite() {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            push_row(&e, lp.upper[j], false, RowSource::Upper(j), 1.0);
        }
    }

    let m = rows.len();
    // Column layout: structural | one slack per inequality row | artificials.
    let mut slack_col = vec![None; m];
    let mut next = ncols;
    for (i, r) in rows.iter().enumerate() {
        if !r.eq {
            slack_col[i] = Some(next);
            next += 1;
        }
    }
    let mut art_col = vec![None; m];
    for (i, r) in rows.iter().enumerate() {
        // A `≤` row whose right-hand side stayed non-negative starts on its slack.
        let slack_basic = !r.eq && r.factor > 0.0;
        if !slack_basic {
            art_col[i] = Some(next);
            next += 1;
        }
    }
    let total = next;
    let first_art = art_col.iter().flatten().copied().min().unwrap_or(total);

    let mut t = Tableau::new(m, total);
    for (i, r) in rows.iter().enumerate() {
        t.a[i][..ncols].copy_from_slice(&r.coeffs);
        if let Some(s) = slack_col[i] {
            // The sign flip turned `≤` into `≥`, so the slack becomes a surplus.
            t.a[i][s] = if r.factor > 0.0 { 1.0 } else { -1.0 };
        }
        if let Some(a) = art_col[i] {
            t.a[i][a] = 1.0;
        }
        t.a[i][total] = r.rhs;
        t.basis[i] = art_col[i].or(slack_col[i]).expect("every row has a basic column");
    }

    // Phase I: minimize the sum of artificials.
    let mut cost1 = vec![0.0; total];
    for a in art_col.iter().flatten() {
        cost1[*a] = 1.0;
    }
    t.set_objective(&cost1);
    t.run(&|_| true)?;
    let infeas: f64 = (0..m)
        .filter(|&i| t.basis[i] >= first_art)
        .map(|i| t.a[i][total])
        .sum();
    let bscale = rows.iter().fold(1.0f64, |s, r| s.max(r.rhs));
    if infeas > LP_FEAS_TOL * bscale {
        // Dual of the identity column of each row: π_i = c_k - rc_k.
        let y: Vec<f64> = (0..m)
            .map(|i| {
                let k = art_col[i].or(slack_col[i]).unwrap();
                -(cost1[k] - t.obj[k])
            })
            .collect();
        let cert = map_certificate(lp, &rows, &y, &maps);
        if cert.verify(lp) || !certificate_fallback {
            return Ok(LpOutcome::Infeasible(cert));
        }
        return certificate_by_lp(lp);
    }

    let Some(objective) = &lp.objective else {
        return Ok(LpOutcome::Optimal {
            x: t.extract(&maps, &col_of, n),
            value: 0.0,
        });
    };

    // Drive artificials out of the basis, dropping redundant rows.
    let mut i = 0;
    while i < t.rows() {
        if t.basis[i] >= first_art {
            let pivot = (0..first_art)
                .filter(|&k| t.a[i][k].abs() > 1e-9)
                .max_by(|&p, &q| t.a[i][p].abs().total_cmp(&t.a[i][q].abs()));
            match pivot {
                Some(k) => t.pivot(i, k),
                None => {
                    t.remove_row(i);
                    continue;
                }
            }
        }
        i += 1;
    }

    let mut cost2 = vec![0.0; total];
    for j in 0..n {
        let c = objective[j];
        match maps[j] {
            VarMap::Shift(_) => cost2[col_of[j]] = c,
            VarMap::Mirror(_) => cost2[col_of[j]] = -c,
            VarMap::Split => {
                cost2[col_of[j]] = c;
                cost2[col_of[j] + 1] = -c;
            }
        }
    }
    t.set_objective(&cost2);
    if !t.run(&|k| k < first_art)? {
        return Ok(LpOutcome::Unbounded);
    }
    let x = t.extract(&maps, &col_of, n);
    let value = objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpOutcome::Optimal { x, value })
}

fn zero_cert(lp: &LinearProgram) -> FarkasCertificate {
    FarkasCertificate {
        rows: vec![0.0; lp.constraints.len()],
        lower: vec![0.0; lp.num_vars],
        upper: vec![0.0; lp.num_vars],
    }
}

fn map_certificate(
    lp: &LinearProgram,
    rows: &[StdRow],
    y: &[f64],
    maps: &[VarMap],
) -> FarkasCertificate {
    let mut cert = zero_cert(lp);
    for (r, &yi) in rows.iter().zip(y) {
        let w = yi * r.factor;
        match r.source {
            RowSource::User(i) => {
                cert.rows[i] = if lp.constraints[i].cmp == Cmp::Eq { w } else { w.max(0.0) };
            }
            RowSource::Upper(j) => cert.upper[j] += w.max(0.0),
        }
    }
    // Remaining coefficient on each variable is absorbed by a bound row.
    let (coeff, _) = cert.combine(lp);
    for j in 0..lp.num_vars {
        let d = coeff[j];
        match maps[j] {
            VarMap::Shift(_) if d > 0.0 => cert.lower[j] += d,
            VarMap::Shift(_) if lp.upper[j].is_finite() => cert.upper[j] += -d,
            VarMap::Mirror(_) if d < 0.0 => cert.upper[j] += -d,
            _ => {}
        }
    }
    cert
}

/// Finds a certificate directly: a point of the dual cone normalized to a
/// right-hand side of -1.
fn certificate_by_lp(lp: &LinearProgram) -> Result<LpOutcome> {
    let nr = lp.constraints.len();
    let n = lp.num_vars;
    let lo_idx: Vec<usize> = (0..n).filter(|&j| lp.lower[j].is_finite()).collect();
    let hi_idx: Vec<usize> = (0..n).filter(|&j| lp.upper[j].is_finite()).collect();
    let nv = nr + lo_idx.len() + hi_idx.len();
    let mut aux = LinearProgram::new(nv);
    for (i, c) in lp.constraints.iter().enumerate() {
        if c.cmp != Cmp::Eq {
            aux.lower[i] = 0.0;
        }
    }
    for k in nr..nv {
        aux.lower[k] = 0.0;
    }
    for j in 0..n {
        let mut row = vec![0.0; nv];
        for (i, c) in lp.constraints.iter().enumerate() {
            let o = if c.cmp == Cmp::Ge { -1.0 } else { 1.0 };
            row[i] = o * c.coeffs[j];
        }
        if let Some(p) = lo_idx.iter().position(|&q| q == j) {
            row[nr + p] = -1.0;
        }
        if let Some(p) = hi_idx.iter().position(|&q| q == j) {
            row[nr + lo_idx.len() + p] = 1.0;
        }
        aux.add_eq(row, 0.0);
    }
    let mut rhs_row = vec![0.0; nv];
    for (i, c) in lp.constraints.iter().enumerate() {
        let o = if c.cmp == Cmp::Ge { -1.0 } else { 1.0 };
        rhs_row[i] = o * c.rhs;
    }
    for (p, &j) in lo_idx.iter().enumerate() {
        rhs_row[nr + p] = -lp.lower[j];
    }
    for (p, &j) in hi_idx.iter().enumerate() {
        rhs_row[nr + lo_idx.len() + p] = lp.upper[j];
    }
    aux.add_eq(rhs_row, -1.0);
    let cost = (0..nv)
        .map(|k| if k < nr && lp.constraints[k].cmp == Cmp::Eq { 0.0 } else { 1.0 })
        .collect();
    aux.minimize(cost);
    let LpOutcome::Optimal { x: w, .. } = solve(&aux, false)? else {
        return Err(Error::InvalidProblem(
            "simplex reported infeasibility without a verifiable certificate".into(),
        ));
    };
    let mut cert = zero_cert(lp);
    cert.rows.copy_from_slice(&w[..nr]);
    for (p, &j) in lo_idx.iter().enumerate() {
        cert.lower[j] = w[nr + p].max(0.0);
    }
    for (p, &j) in hi_idx.iter().enumerate() {
        cert.upper[j] = w[nr + lo_idx.len() + p].max(0.0);
    }
    for (c, y) in lp.constraints.iter().zip(cert.rows.iter_mut()) {
        if c.cmp != Cmp::Eq {
            *y = y.max(0.0);
        }
    }
    if cert.verify(lp) {
        Ok(LpOutcome::Infeasible(cert))
    } else {
        Err(Error::InvalidProblem(
            "simplex reported infeasibility without a verifiable certificate".into(),
        ))
    }
}

struct Tableau {
    a: Vec<Vec<f64>>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn new(rows: usize, cols: usize) -> Self {
        Self {
            a: vec![vec![0.0; cols + 1]; rows],
            obj: vec![0.0; cols + 1],
            basis: vec![0; rows],
            cols,
        }
    }

    fn rows(&self) -> usize {
        self.a.len()
    }

    fn remove_row(&mut self, i: usize) {
        self.a.remove(i);
        self.basis.remove(i);
    }

    /// Loads reduced costs `c - c_Bᵀ B⁻¹ A` for cost vector `c`.
    fn set_objective(&mut self, cost: &[f64]) {
        self.obj[..self.cols].copy_from_slice(cost);
        self.obj[self.cols] = 0.0;
        for i in 0..self.a.len() {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for k in 0..=self.cols {
                    self.obj[k] -= cb * self.a[i][k];
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.a[r][c];
        for v in self.a[r].iter_mut() {
            *v /= p;
        }
        self.a[r][c] = 1.0;
        let prow = self.a[r].clone();
        for (i, row) in self.a.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&prow) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        let f = self.obj[c];
        if f != 0.0 {
            for (v, pv) in self.obj.iter_mut().zip(&prow) {
                *v -= f * pv;
            }
            self.obj[c] = 0.0;
        }
        self.basis[r] = c;
    }

    /// Runs primal simplex; `false` when the objective is unbounded.
    fn run(&mut self, allowed: &dyn Fn(usize) -> bool) -> Result<bool> {
        let mut bland = false;
        let mut degenerate = 0;
        for _ in 0..MAX_PIVOTS {
            let entering = if bland {
                (0..self.cols).find(|&k| allowed(k) && self.obj[k] < -COST_TOL)
            } else {
                (0..self.cols)
                    .filter(|&k| allowed(k) && self.obj[k] < -COST_TOL)
                    .min_by(|&p, &q| self.obj[p].total_cmp(&self.obj[q]))
            };
            let Some(c) = entering else {
                return Ok(true);
            };
            let mut best: Option<(usize, f64)> = None;
            for i in 0..self.a.len() {
                let v = self.a[i][c];
                if v > PIVOT_TOL {
                    let ratio = self.a[i][self.cols].max(0.0) / v;
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - 1e-12 * br.abs().max(1.0)
                                || (ratio <= br + 1e-12 * br.abs().max(1.0) && self.basis[i] < self.basis[bi])
                            {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            let Some((r, ratio)) = best else {
                return Ok(false);
            };
            if ratio <= 1e-12 {
                degenerate += 1;
                if degenerate > DEGENERATE_SWITCH {
                    bland = true;
                }
            } else {
                degenerate = 0;
            }
            self.pivot(r, c);
        }
        Err(Error::InvalidProblem("simplex pivot limit reached".into()))
    }

    fn extract(&self, maps: &[VarMap], col_of: &[usize], n: usize) -> Vec<f64> {
        let mut val = vec![0.0; self.cols];
        for (i, &b) in self.basis.iter().enumerate() {
            val[b] = self.a[i][self.cols].max(0.0);
        }
        (0..n)
            .map(|j| match maps[j] {
                VarMap::Shift(lo) => lo + val[col_of[j]],
                VarMap::Mirror(hi) => hi - val[col_of[j]],
                VarMap::Split => val[col_of[j]] - val[col_of[j] + 1],
            })
            .collect()
    }
}
