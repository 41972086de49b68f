//! CNF data model, DIMACS IO, random 3-SAT generation and a small complete
//! solver used to filter generated instances.

use std::fmt;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum CnfError {
    #[error("line {line}: malformed header `{text}`")]
    MalformedHeader { line: usize, text: String },
    #[error("missing `p cnf` header")]
    MissingHeader,
    #[error("line {line}: clause data before header")]
    ClauseBeforeHeader { line: usize },
    #[error("line {line}: invalid token `{token}`")]
    InvalidToken { line: usize, token: String },
    #[error("variable {var} exceeds declared count {num_vars}")]
    VariableOutOfRange { var: u32, num_vars: u32 },
    #[error("header declares {declared} clauses, found {found}")]
    ClauseCountMismatch { declared: usize, found: usize },
    #[error("last clause is missing its terminating 0")]
    UnterminatedClause,
    #[error("empty clause")]
    EmptyClause,
    #[error("random 3-SAT needs at least 3 variables, got {0}")]
    TooFewVariables(u32),
    #[error("clause-to-variable ratio must be positive and finite, got {0}")]
    InvalidRatio(f64),
}

/// A literal over a 1-based variable index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Lit {
    var: u32,
    negated: bool,
}

impl Lit {
    pub fn new(var: u32, negated: bool) -> Self {
        assert!(var >= 1, "variables are 1-based");
        Lit { var, negated }
    }

    pub fn pos(var: u32) -> Self {
        Lit::new(var, false)
    }

    pub fn neg(var: u32) -> Self {
        Lit::new(var, true)
    }

    /// From a signed DIMACS integer. Panics on 0.
    pub fn from_dimacs(v: i64) -> Self {
        Lit::new(v.unsigned_abs() as u32, v < 0)
    }

    pub fn var(self) -> u32 {
        self.var
    }

    pub fn is_negated(self) -> bool {
        self.negated
    }

    /// Dense 0-based code: `2 * (var - 1) + negated`.
    pub fn code(self) -> usize {
        2 * (self.var as usize - 1) + self.negated as usize
    }

    pub fn to_dimacs(self) -> i64 {
        if self.negated {
            -(self.var as i64)
        } else {
            self.var as i64
        }
    }

    /// Truth value of the literal under `value` for its variable.
    pub fn eval(self, value: bool) -> bool {
        value != self.negated
    }
}

impl std::ops::Not for Lit {
    type Output = Lit;
    fn not(self) -> Lit {
        Lit {
            var: self.var,
            negated: !self.negated,
        }
    }
}

impl fmt::Display for Lit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_dimacs())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Clause {
    lits: Vec<Lit>,
}

impl Clause {
    /// Builds a clause, dropping repeated literals while keeping first-occurrence order.
    pub fn new(lits: Vec<Lit>) -> Result<Self, CnfError> {
        if lits.is_empty() {
            return Err(CnfError::EmptyClause);
        }
        let mut out: Vec<Lit> = Vec::with_capacity(lits.len());
        for l in lits {
            if !out.contains(&l) {
                out.push(l);
            }
        }
        Ok(Clause { lits: out })
    }

    pub fn lits(&self) -> &[Lit] {
        &self.lits
    }

    pub fn len(&self) -> usize {
        self.lits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lits.is_empty()
    }

    /// Contains both `x` and `¬x` for some variable.
    pub fn is_tautology(&self) -> bool {
        self.lits.iter().any(|&l| self.lits.contains(&!l))
    }

    /// At most one positive literal.
    pub fn is_horn(&self) -> bool {
        self.lits.iter().filter(|l| !l.is_negated()).count() <= 1
    }

    pub fn is_satisfied_by(&self, a: &Assignment) -> bool {
        self.lits.iter().any(|&l| a.lit_value(l))
    }
}

/// Optional provenance carried alongside a formula.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FormulaMeta {
    pub id: Option<String>,
    pub seed: Option<u64>,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Formula {
    num_vars: u32,
    clauses: Vec<Clause>,
    tautologies: Vec<usize>,
    pub meta: FormulaMeta,
}

impl Formula {
    pub fn new(num_vars: u32, clauses: Vec<Clause>) -> Result<Self, CnfError> {
        for c in &clauses {
            for l in c.lits() {
                if l.var() > num_vars {
                    return Err(CnfError::VariableOutOfRange {
                        var: l.var(),
                        num_vars,
                    });
                }
            }
        }
        let tautologies = clauses
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_tautology())
            .map(|(i, _)| i)
            .collect();
        Ok(Formula {
            num_vars,
            clauses,
            tautologies,
            meta: FormulaMeta::default(),
        })
    }

    /// Convenience constructor from signed DIMACS literals.
    pub fn from_dimacs_clauses(num_vars: u32, clauses: &[&[i64]]) -> Result<Self, CnfError> {
        let clauses = clauses
            .iter()
            .map(|c| Clause::new(c.iter().map(|&v| Lit::from_dimacs(v)).collect()))
            .collect::<Result<Vec<_>, _>>()?;
        Formula::new(num_vars, clauses)
    }

    pub fn with_meta(mut self, meta: FormulaMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn num_vars(&self) -> u32 {
        self.num_vars
    }

    pub fn num_clauses(&self) -> usize {
        self.clauses.len()
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    /// Indices of clauses containing a complementary pair.
    pub fn tautologies(&self) -> &[usize] {
        &self.tautologies
    }

    pub fn ratio(&self) -> f64 {
        if self.num_vars == 0 {
            0.0
        } else {
            self.clauses.len() as f64 / self.num_vars as f64
        }
    }

    pub fn id(&self) -> String {
        self.meta.id.clone().unwrap_or_else(|| "anonymous".into())
    }

    pub fn evaluate(&self, a: &Assignment) -> bool {
        self.clauses.iter().all(|c| c.is_satisfied_by(a))
    }

    pub fn count_unsatisfied(&self, a: &Assignment) -> usize {
        self.clauses.iter().filter(|c| !c.is_satisfied_by(a)).count()
    }

    /// Occurrence lists indexed by [`Lit::code`].
    pub fn occurrences(&self) -> Vec<Vec<u32>> {
        let mut occ = vec![Vec::new(); 2 * self.num_vars as usize];
        for (ci, c) in self.clauses.iter().enumerate() {
            for l in c.lits() {
                occ[l.code()].push(ci as u32);
            }
        }
        occ
    }

    /// Applies a variable permutation: variable `v` becomes `perm[v - 1]`.
    pub fn rename(&self, perm: &[u32]) -> Formula {
        let clauses = self
            .clauses
            .iter()
            .map(|c| Clause {
                lits: c
                    .lits()
                    .iter()
                    .map(|l| Lit::new(perm[l.var() as usize - 1], l.is_negated()))
                    .collect(),
            })
            .collect();
        Formula {
            num_vars: self.num_vars,
            clauses,
            tautologies: self.tautologies.clone(),
            meta: self.meta.clone(),
        }
    }
}

/// Truth assignment indexed by variable (1-based access through [`Assignment::value`]).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment(pub Vec<bool>);

impl Assignment {
    pub fn value(&self, var: u32) -> bool {
        self.0[var as usize - 1]
    }

    pub fn lit_value(&self, l: Lit) -> bool {
        l.eval(self.value(l.var()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SatVerdict {
    Satisfiable(Assignment),
    Unsatisfiable,
    /// Node budget exhausted.
    Unknown,
}

impl SatVerdict {
    pub fn is_sat(&self) -> bool {
        matches!(self, SatVerdict::Satisfiable(_))
    }

    pub fn label(&self) -> &'static str {
        match self {
            SatVerdict::Satisfiable(_) => "sat",
            SatVerdict::Unsatisfiable => "unsat",
            SatVerdict::Unknown => "unknown",
        }
    }
}

// ---------------------------------------------------------------------------
// DIMACS
// ---------------------------------------------------------------------------

pub fn parse_dimacs(text: &str) -> Result<Formula, CnfError> {
    let mut header: Option<(u32, usize)> = None;
    let mut meta = FormulaMeta::default();
    let mut clauses = Vec::new();
    let mut current: Vec<Lit> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('c') {
            if rest.is_empty() || rest.starts_with(char::is_whitespace) {
                parse_meta_comment(rest, &mut meta);
                continue;
            }
        }
        if line.starts_with('%') {
            // SATLIB trailer
            break;
        }
        if line.starts_with('p') {
            if header.is_some() {
                return Err(CnfError::MalformedHeader {
                    line: line_no,
                    text: line.into(),
                });
            }
            header = Some(parse_header(line, line_no)?);
            continue;
        }
        let Some((num_vars, _)) = header else {
            return Err(CnfError::ClauseBeforeHeader { line: line_no });
        };
        for tok in line.split_whitespace() {
            let v: i64 = tok.parse().map_err(|_| CnfError::InvalidToken {
                line: line_no,
                token: tok.into(),
            })?;
            if v == 0 {
                let lits = std::mem::take(&mut current);
                clauses.push(Clause::new(lits)?);
            } else {
                let var = v.unsigned_abs();
                if var > num_vars as u64 {
                    return Err(CnfError::VariableOutOfRange {
                        var: var.min(u32::MAX as u64) as u32,
                        num_vars,
                    });
                }
                current.push(Lit::from_dimacs(v));
            }
        }
    }

    let (num_vars, declared) = header.ok_or(CnfError::MissingHeader)?;
    if !current.is_empty() {
        return Err(CnfError::UnterminatedClause);
    }
    if clauses.len() != declared {
        return Err(CnfError::ClauseCountMismatch {
            declared,
            found: clauses.len(),
        });
    }
    Ok(Formula::new(num_vars, clauses)?.with_meta(meta))
}

fn parse_header(line: &str, line_no: usize) -> Result<(u32, usize), CnfError> {
    let bad = || CnfError::MalformedHeader {
        line: line_no,
        text: line.into(),
    };
    let parts: Vec<&str> = line.split_whitespace().collect();
    if parts.len() != 4 || parts[0] != "p" || parts[1] != "cnf" {
        return Err(bad());
    }
    let vars = parts[2].parse().map_err(|_| bad())?;
    let clauses = parts[3].parse().map_err(|_| bad())?;
    Ok((vars, clauses))
}

fn parse_meta_comment(rest: &str, meta: &mut FormulaMeta) {
    for kv in rest.split_whitespace() {
        if let Some((k, v)) = kv.split_once('=') {
            match k {
                "id" => meta.id = Some(v.to_string()),
                "seed" => meta.seed = v.parse().ok().or(meta.seed),
                "ratio" => meta.ratio = v.parse().ok().or(meta.ratio),
                _ => {}
            }
        }
    }
}

pub fn write_dimacs(f: &Formula) -> String {
    let mut out = String::new();
    if let Some(id) = &f.meta.id {
        let _ = writeln!(out, "c id={id}");
    }
    match (f.meta.seed, f.meta.ratio) {
        (Some(s), Some(r)) => {
            let _ = writeln!(out, "c seed={s} ratio={r}");
        }
        (Some(s), None) => {
            let _ = writeln!(out, "c seed={s}");
        }
        (None, Some(r)) => {
            let _ = writeln!(out, "c ratio={r}");
        }
        (None, None) => {}
    }
    let _ = writeln!(out, "p cnf {} {}", f.num_vars, f.clauses.len());
    for c in &f.clauses {
        for l in c.lits() {
            let _ = write!(out, "{} ", l.to_dimacs());
        }
        out.push_str("0\n");
    }
    out
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

/// Number of clauses for `n` variables at clause-to-variable `ratio`.
pub fn clause_count(n: u32, ratio: f64) -> usize {
    // absorb representation error such as 4.1 * 100 = 409.99999999999994
    (ratio * n as f64 + 1e-9).floor() as usize
}

/// Uniform random 3-SAT: each clause draws three distinct variables (repeats
/// are resampled) and negates each independently with probability 1/2.
pub fn generate_random_3sat(n: u32, ratio: f64, seed: u64) -> Result<Formula, CnfError> {
    if n < 3 {
        return Err(CnfError::TooFewVariables(n));
    }
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(CnfError::InvalidRatio(ratio));
    }
    let m = clause_count(n, ratio);
    let mut rng = rng::stream(seed, 0);
    let mut clauses = Vec::with_capacity(m);
    for _ in 0..m {
        let vars = loop {
            let a = rng.random_range(1..=n);
            let b = rng.random_range(1..=n);
            let c = rng.random_range(1..=n);
            if a != b && a != c && b != c {
                break [a, b, c];
            }
        };
        let lits = vars.iter().map(|&v| Lit::new(v, rng.random_bool(0.5))).collect();
        clauses.push(Clause { lits });
    }
    let meta = FormulaMeta {
        id: Some(format!("n{n}-r{ratio}-s{seed}")),
        seed: Some(seed),
        ratio: Some(ratio),
    };
    Ok(Formula::new(n, clauses)?.with_meta(meta))
}

// ---------------------------------------------------------------------------
// DPLL
// ---------------------------------------------------------------------------

/// Propagation engine shared by DPLL, simplification and search-space probing.
/// Clause state is tracked with true/false literal counters and undone from a trail.
pub(crate) struct Engine<'f> {
    f: &'f Formula,
    occ: Vec<Vec<u32>>,
    value: Vec<Option<bool>>,
    trail: Vec<u32>,
    n_true: Vec<u32>,
    n_false: Vec<u32>,
    live_occ: Vec<u32>,
    unsat_live: usize,
}

impl<'f> Engine<'f> {
    pub(crate) fn new(f: &'f Formula) -> Self {
        let occ = f.occurrences();
        let live_occ = occ.iter().map(|o| o.len() as u32).collect();
        Engine {
            f,
            occ,
            value: vec![None; f.num_vars() as usize],
            trail: Vec::new(),
            n_true: vec![0; f.num_clauses()],
            n_false: vec![0; f.num_clauses()],
            live_occ,
            unsat_live: f.num_clauses(),
        }
    }

    fn lit_value(&self, l: Lit) -> Option<bool> {
        self.value[l.var() as usize - 1].map(|v| l.eval(v))
    }

    pub(crate) fn is_assigned(&self, var: u32) -> bool {
        self.value[var as usize - 1].is_some()
    }

    pub(crate) fn trail_len(&self) -> usize {
        self.trail.len()
    }

    pub(crate) fn all_satisfied(&self) -> bool {
        self.unsat_live == 0
    }

    /// Makes `l` true. Returns false on an immediate conflict (some clause lost
    /// its last literal). Counters stay consistent either way.
    pub(crate) fn assign(&mut self, l: Lit, queue: &mut Vec<u32>) -> bool {
        debug_assert!(!self.is_assigned(l.var()));
        self.value[l.var() as usize - 1] = Some(!l.is_negated());
        self.trail.push(l.code() as u32);
        let mut ok = true;
        for i in 0..self.occ[l.code()].len() {
            let ci = self.occ[l.code()][i] as usize;
            self.n_true[ci] += 1;
            if self.n_true[ci] == 1 {
                self.unsat_live -= 1;
                for cl in self.f.clauses[ci].lits() {
                    self.live_occ[cl.code()] -= 1;
                }
            }
        }
        let nl = (!l).code();
        for i in 0..self.occ[nl].len() {
            let ci = self.occ[nl][i] as usize;
            self.n_false[ci] += 1;
            if self.n_true[ci] == 0 {
                let len = self.f.clauses[ci].len() as u32;
                if self.n_false[ci] == len {
                    ok = false;
                } else if self.n_false[ci] + 1 == len {
                    queue.push(ci as u32);
                }
            }
        }
        ok
    }

    pub(crate) fn undo_to(&mut self, len: usize) {
        while self.trail.len() > len {
            let code = self.trail.pop().unwrap() as usize;
            let l = Lit::new((code / 2) as u32 + 1, code % 2 == 1);
            for i in 0..self.occ[l.code()].len() {
                let ci = self.occ[l.code()][i] as usize;
                self.n_true[ci] -= 1;
                if self.n_true[ci] == 0 {
                    self.unsat_live += 1;
                    for cl in self.f.clauses[ci].lits() {
                        self.live_occ[cl.code()] += 1;
                    }
                }
            }
            let nl = (!l).code();
            for i in 0..self.occ[nl].len() {
                let ci = self.occ[nl][i] as usize;
                self.n_false[ci] -= 1;
            }
            self.value[l.var() as usize - 1] = None;
        }
    }

    /// Unit propagation to fixpoint. Returns false on conflict.
    pub(crate) fn propagate(&mut self, queue: &mut Vec<u32>) -> bool {
        while let Some(ci) = queue.pop() {
            let ci = ci as usize;
            if self.n_true[ci] > 0 {
                continue;
            }
            let unit = self.f.clauses[ci]
                .lits()
                .iter()
                .copied()
                .find(|&l| self.lit_value(l).is_none());
            match unit {
                None => {
                    queue.clear();
                    return false;
                }
                Some(l) => {
                    if !self.assign(l, queue) {
                        queue.clear();
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Queues every currently unit (or empty) clause.
    pub(crate) fn seed_units(&self, queue: &mut Vec<u32>) {
        for (ci, c) in self.f.clauses.iter().enumerate() {
            if self.n_true[ci] == 0 && self.n_false[ci] + 1 >= c.len() as u32 {
                queue.push(ci as u32);
            }
        }
    }

    /// Assigns every pure literal among unassigned variables. Returns whether
    /// anything was assigned.
    fn assign_pure(&mut self, queue: &mut Vec<u32>) -> bool {
        let mut any = false;
        for v in 1..=self.f.num_vars() {
            if self.is_assigned(v) {
                continue;
            }
            let p = self.live_occ[Lit::pos(v).code()];
            let n = self.live_occ[Lit::neg(v).code()];
            let pure = match (p > 0, n > 0) {
                (true, false) => Lit::pos(v),
                (false, true) => Lit::neg(v),
                _ => continue,
            };
            any = true;
            // a pure literal only satisfies clauses; it can never conflict
            let ok = self.assign(pure, queue);
            debug_assert!(ok);
        }
        any
    }

    /// Unit propagation and pure-literal elimination to a joint fixpoint.
    pub(crate) fn reduce(&mut self, queue: &mut Vec<u32>) -> bool {
        loop {
            if !self.propagate(queue) {
                return false;
            }
            if !self.assign_pure(queue) {
                return true;
            }
        }
    }

    /// Most frequent variable in the shortest unsatisfied clauses, with its
    /// majority polarity there.
    fn branch_literal(&self) -> Option<Lit> {
        let mut shortest = u32::MAX;
        for (ci, c) in self.f.clauses.iter().enumerate() {
            if self.n_true[ci] == 0 {
                shortest = shortest.min(c.len() as u32 - self.n_false[ci]);
            }
        }
        if shortest == u32::MAX {
            return None;
        }
        let mut counts = vec![0u32; 2 * self.f.num_vars() as usize];
        for (ci, c) in self.f.clauses.iter().enumerate() {
            if self.n_true[ci] == 0 && c.len() as u32 - self.n_false[ci] == shortest {
                for &l in c.lits() {
                    if self.lit_value(l).is_none() {
                        counts[l.code()] += 1;
                    }
                }
            }
        }
        let mut best: Option<(u32, Lit)> = None;
        for v in 1..=self.f.num_vars() {
            let (p, n) = (counts[Lit::pos(v).code()], counts[Lit::neg(v).code()]);
            let total = p + n;
            if total > 0 && best.is_none_or(|(b, _)| total > b) {
                let l = if p >= n { Lit::pos(v) } else { Lit::neg(v) };
                best = Some((total, l));
            }
        }
        best.map(|(_, l)| l)
    }

    pub(crate) fn unassigned_vars(&self) -> Vec<u32> {
        (1..=self.f.num_vars())
            .filter(|&v| !self.is_assigned(v))
            .collect()
    }

    pub(crate) fn has_unsatisfied_clause_with(&self, var: u32) -> bool {
        self.live_occ[Lit::pos(var).code()] + self.live_occ[Lit::neg(var).code()] > 0
    }

    fn model(&self) -> Assignment {
        Assignment(self.value.iter().map(|v| v.unwrap_or(false)).collect())
    }

    fn residual(&self) -> (Formula, usize) {
        let mut clauses = Vec::new();
        for (ci, c) in self.f.clauses.iter().enumerate() {
            if self.n_true[ci] == 0 {
                let lits: Vec<Lit> = c
                    .lits()
                    .iter()
                    .copied()
                    .filter(|&l| self.lit_value(l).is_none())
                    .collect();
                clauses.push(Clause { lits });
            }
        }
        let removed = self.f.num_clauses() - clauses.len();
        let f = Formula::new(self.f.num_vars(), clauses)
            .expect("residual clauses reuse existing variables")
            .with_meta(self.f.meta.clone());
        (f, removed)
    }
}

/// DPLL with unit propagation and pure-literal elimination at every node.
/// `node_budget` bounds the number of branching decisions.
pub fn dpll_satisfiable(f: &Formula, node_budget: u64) -> SatVerdict {
    let mut e = Engine::new(f);
    let mut queue = Vec::new();
    e.seed_units(&mut queue);

    // (trail length before the decision, decision literal, second branch tried)
    let mut stack: Vec<(usize, Lit, bool)> = Vec::new();
    let mut nodes = 0u64;
    let mut ok = e.reduce(&mut queue);
    loop {
        if !ok {
            loop {
                queue.clear();
                let Some((len, lit, flipped)) = stack.pop() else {
                    return SatVerdict::Unsatisfiable;
                };
                e.undo_to(len);
                if !flipped {
                    stack.push((len, !lit, true));
                    ok = e.assign(!lit, &mut queue) && e.reduce(&mut queue);
                    break;
                }
            }
            continue;
        }
        if e.all_satisfied() {
            let model = e.model();
            debug_assert!(f.evaluate(&model));
            return SatVerdict::Satisfiable(model);
        }
        let Some(lit) = e.branch_literal() else {
            return SatVerdict::Satisfiable(e.model());
        };
        if nodes >= node_budget {
            return SatVerdict::Unknown;
        }
        nodes += 1;
        stack.push((e.trail_len(), lit, false));
        ok = e.assign(lit, &mut queue) && e.reduce(&mut queue);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Simplified {
    Reduced {
        formula: Formula,
        /// Variables fixed by propagation or purity.
        removed_vars: usize,
        removed_clauses: usize,
    },
    /// Propagation derived the empty clause.
    Conflict,
}

impl Simplified {
    /// `(variables still occurring, clauses remaining)`; a conflict counts as one empty clause.
    pub fn size(&self) -> (usize, usize) {
        match self {
            Simplified::Reduced { formula, .. } => {
                let mut seen = vec![false; formula.num_vars() as usize];
                for c in formula.clauses() {
                    for l in c.lits() {
                        seen[l.var() as usize - 1] = true;
                    }
                }
                (seen.iter().filter(|&&s| s).count(), formula.num_clauses())
            }
            Simplified::Conflict => (0, 1),
        }
    }
}

/// Fixpoint of unit propagation and pure-literal elimination.
pub fn simplify(f: &Formula) -> Simplified {
    let mut e = Engine::new(f);
    let mut queue = Vec::new();
    e.seed_units(&mut queue);
    if !e.reduce(&mut queue) {
        return Simplified::Conflict;
    }
    let removed_vars = e.trail_len();
    let (formula, removed_clauses) = e.residual();
    Simplified::Reduced {
        formula,
        removed_vars,
        removed_clauses,
    }
}

/// One random DPLL probe: branch on random unassigned variables with random
/// polarity under propagation until conflict or satisfaction. Returns the
/// number of decisions made.
pub(crate) fn random_probe_depth<R: Rng>(f: &Formula, rng: &mut R) -> usize {
    let mut e = Engine::new(f);
    let mut queue = Vec::new();
    e.seed_units(&mut queue);
    if !e.reduce(&mut queue) {
        return 0;
    }
    let mut depth = 0;
    loop {
        if e.all_satisfied() {
            return depth;
        }
        let free: Vec<u32> = e
            .unassigned_vars()
            .into_iter()
            .filter(|&v| e.has_unsatisfied_clause_with(v))
            .collect();
        if free.is_empty() {
            return depth;
        }
        let v = free[rng.random_range(0..free.len())];
        let l = Lit::new(v, rng.random_bool(0.5));
        depth += 1;
        if !(e.assign(l, &mut queue) && e.reduce(&mut queue)) {
            return depth;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(n: u32, cs: &[&[i64]]) -> Formula {
        Formula::from_dimacs_clauses(n, cs).unwrap()
    }

    fn brute_force_sat(f: &Formula) -> bool {
        let n = f.num_vars();
        (0u64..1 << n).any(|bits| {
            let a = Assignment((0..n).map(|i| bits >> i & 1 == 1).collect());
            f.evaluate(&a)
        })
    }

    #[test]
    fn parse_examples() {
        let g = parse_dimacs("p cnf 2 2\n1 2 0\n-1 2 0\n").unwrap();
        assert_eq!(g, f(2, &[&[1, 2], &[-1, 2]]));
        let g = parse_dimacs("c comment\np cnf 1 1\n1 0\n").unwrap();
        assert_eq!(g, f(1, &[&[1]]));
        assert_eq!(
            parse_dimacs("p cnf 1 2\n1 0\n"),
            Err(CnfError::ClauseCountMismatch {
                declared: 2,
                found: 1
            })
        );
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            parse_dimacs("p cnf x 1\n1 0\n"),
            Err(CnfError::MalformedHeader { .. })
        ));
        assert!(matches!(
            parse_dimacs("p dnf 1 1\n1 0\n"),
            Err(CnfError::MalformedHeader { .. })
        ));
        assert_eq!(
            parse_dimacs("p cnf 1 1\n1 2 0\n"),
            Err(CnfError::VariableOutOfRange {
                var: 2,
                num_vars: 1
            })
        );
        assert_eq!(
            parse_dimacs("p cnf 2 1\n1 2\n"),
            Err(CnfError::UnterminatedClause)
        );
        assert_eq!(parse_dimacs("1 0\n"), Err(CnfError::ClauseBeforeHeader { line: 1 }));
        assert_eq!(parse_dimacs(""), Err(CnfError::MissingHeader));
        assert!(matches!(
            parse_dimacs("p cnf 1 1\n1 a 0\n"),
            Err(CnfError::InvalidToken { .. })
        ));
    }

    #[test]
    fn parse_dedups_and_flags_tautologies() {
        let g = parse_dimacs("p cnf 2 2\n1 1 2 0\n1 -1 0\n").unwrap();
        assert_eq!(g.clauses()[0].lits(), &[Lit::pos(1), Lit::pos(2)]);
        assert_eq!(g.tautologies(), &[1]);
    }

    #[test]
    fn clauses_may_span_lines() {
        let g = parse_dimacs("p cnf 3 1\n1 2\n3 0\n").unwrap();
        assert_eq!(g.clauses()[0].len(), 3);
    }

    #[test]
    fn write_examples() {
        assert_eq!(write_dimacs(&f(1, &[&[1]])), "p cnf 1 1\n1 0\n");
        assert_eq!(write_dimacs(&f(2, &[&[-1, 2]])), "p cnf 2 1\n-1 2 0\n");
    }

    #[test]
    fn round_trip_generated() {
        let g = generate_random_3sat(100, 4.26, 7).unwrap();
        assert_eq!(parse_dimacs(&write_dimacs(&g)).unwrap(), g);
    }

    #[test]
    fn generator_counts() {
        let g = generate_random_3sat(100, 4.26, 7).unwrap();
        assert_eq!(g.num_clauses(), 426);
        for c in g.clauses() {
            let vs: Vec<u32> = c.lits().iter().map(|l| l.var()).collect();
            assert_eq!(vs.len(), 3);
            assert!(vs[0] != vs[1] && vs[0] != vs[2] && vs[1] != vs[2]);
        }
        assert_eq!(generate_random_3sat(1500, 4.27, 1).unwrap().num_clauses(), 6405);
        assert_eq!(generate_random_3sat(100, 4.26, 7).unwrap(), g);
        assert_ne!(generate_random_3sat(100, 4.26, 8).unwrap(), g);
        assert_eq!(
            generate_random_3sat(2, 4.0, 1),
            Err(CnfError::TooFewVariables(2))
        );
    }

    #[test]
    fn dpll_examples() {
        assert_eq!(dpll_satisfiable(&f(1, &[&[1], &[-1]]), 100), SatVerdict::Unsatisfiable);
        match dpll_satisfiable(&f(2, &[&[1, 2], &[-1, 2]]), 100) {
            SatVerdict::Satisfiable(a) => assert!(a.value(2)),
            v => panic!("{v:?}"),
        }
        let hard = generate_random_3sat(120, 4.3, 3).unwrap();
        assert_eq!(dpll_satisfiable(&hard, 1), SatVerdict::Unknown);
    }

    #[test]
    fn dpll_agrees_with_truth_table() {
        for seed in 0..300 {
            let n = 3 + (seed % 10) as u32;
            let ratio = 3.0 + (seed % 7) as f64 * 0.5;
            let g = generate_random_3sat(n, ratio, seed).unwrap();
            let verdict = dpll_satisfiable(&g, u64::MAX);
            assert_eq!(verdict.is_sat(), brute_force_sat(&g), "seed {seed}");
            if let SatVerdict::Satisfiable(a) = verdict {
                assert!(g.evaluate(&a));
            }
        }
    }

    #[test]
    fn simplify_examples() {
        let s = simplify(&f(2, &[&[1], &[1, 2]]));
        assert_eq!(s.size().1, 0);
        let s = simplify(&f(3, &[&[1, 2, 3]]));
        assert_eq!(s.size().1, 0);
        assert_eq!(simplify(&f(3, &[&[1], &[-1], &[2, 3]])), Simplified::Conflict);
    }

    #[test]
    fn simplify_preserves_satisfiability() {
        for seed in 0..200 {
            let n = 4 + (seed % 9) as u32;
            let g = generate_random_3sat(n, 4.5, 1000 + seed).unwrap();
            let before = dpll_satisfiable(&g, u64::MAX).is_sat();
            let after = match simplify(&g) {
                Simplified::Conflict => false,
                Simplified::Reduced { formula, .. } => {
                    dpll_satisfiable(&formula, u64::MAX).is_sat()
                }
            };
            assert_eq!(before, after, "seed {seed}");
        }
    }

    #[test]
    fn simplify_reports_removed_counts() {
        // x1 unit, forces x2 via (¬x1 ∨ x2); (x3 ∨ x4 ∨ ¬x2) shrinks to (x3 ∨ x4), both then pure
        let s = simplify(&f(4, &[&[1], &[-1, 2], &[3, 4, -2], &[-3, -4, 1]]));
        match s {
            Simplified::Reduced {
                removed_clauses, ..
            } => assert_eq!(removed_clauses, 4),
            Simplified::Conflict => panic!(),
        }
    }
}
