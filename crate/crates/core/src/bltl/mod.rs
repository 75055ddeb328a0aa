//! Bounded linear temporal logic over finite trajectories.
//!
//! Formulas are built from banded atomic propositions `[L <= name <= U]`,
//! boolean connectives and the time-bounded temporal operators `F`, `G` and
//! `U`. Time bounds are absolute (same unit as the trajectory grid): a bound
//! `T` at grid index `i` quantifies over indices `j >= i` whose time offset
//! `time[j] - time[i]` is at most `T`, truncated at the grid horizon.

mod parse;

pub use parse::{parse, ParseError};

use std::fmt;

use crate::model::Trajectory;

/// Formula syntax tree. Atoms reference trajectory state variables by index
/// and carry the resolved name for display.
#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    True,
    False,
    Atom { var: usize, name: String, low: f64, high: f64 },
    Not(Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Until { bound: f64, lhs: Box<Formula>, rhs: Box<Formula> },
    Finally { bound: f64, inner: Box<Formula> },
    Globally { bound: f64, inner: Box<Formula> },
}

impl Formula {
    pub fn atom(var: usize, name: impl Into<String>, low: f64, high: f64) -> Self {
        Formula::Atom { var, name: name.into(), low, high }
    }

    pub fn not(inner: Formula) -> Self {
        Formula::Not(Box::new(inner))
    }

    pub fn or(lhs: Formula, rhs: Formula) -> Self {
        Formula::Or(Box::new(lhs), Box::new(rhs))
    }

    pub fn and(lhs: Formula, rhs: Formula) -> Self {
        Formula::And(Box::new(lhs), Box::new(rhs))
    }

    pub fn until(bound: f64, lhs: Formula, rhs: Formula) -> Self {
        Formula::Until { bound, lhs: Box::new(lhs), rhs: Box::new(rhs) }
    }

    pub fn finally(bound: f64, inner: Formula) -> Self {
        Formula::Finally { bound, inner: Box::new(inner) }
    }

    pub fn globally(bound: f64, inner: Formula) -> Self {
        Formula::Globally { bound, inner: Box::new(inner) }
    }

    /// Rewrite the derived operators into the `{Not, Or, Until}` core:
    /// `And(a,b) = !((!a)|(!b))`, `F(T,p) = true U<=T p`,
    /// `G(T,p) = !(F(T,!p))`. Evaluation results are identical.
    pub fn normalize(&self) -> Formula {
        match self {
            Formula::True => Formula::True,
            Formula::False => Formula::False,
            Formula::Atom { var, name, low, high } => {
                Formula::Atom { var: *var, name: name.clone(), low: *low, high: *high }
            }
            Formula::Not(inner) => Formula::not(inner.normalize()),
            Formula::Or(a, b) => Formula::or(a.normalize(), b.normalize()),
            Formula::And(a, b) => Formula::not(Formula::or(
                Formula::not(a.normalize()),
                Formula::not(b.normalize()),
            )),
            Formula::Until { bound, lhs, rhs } => {
                Formula::until(*bound, lhs.normalize(), rhs.normalize())
            }
            Formula::Finally { bound, inner } => {
                Formula::until(*bound, Formula::True, inner.normalize())
            }
            Formula::Globally { bound, inner } => Formula::not(Formula::until(
                *bound,
                Formula::True,
                Formula::not(inner.normalize()),
            )),
        }
    }

    /// Largest state index any atom references, if the formula has atoms.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Formula::True | Formula::False => None,
            Formula::Atom { var, .. } => Some(*var),
            Formula::Not(a) | Formula::Finally { inner: a, .. } | Formula::Globally { inner: a, .. } => {
                a.max_var()
            }
            Formula::Or(a, b) | Formula::And(a, b) => a.max_var().max(b.max_var()),
            Formula::Until { lhs, rhs, .. } => lhs.max_var().max(rhs.max_var()),
        }
    }
}

// Precedence levels for printing: higher binds tighter.
fn precedence(phi: &Formula) -> u8 {
    match phi {
        Formula::True | Formula::False | Formula::Atom { .. } => 5,
        Formula::Not(_) | Formula::Finally { .. } | Formula::Globally { .. } => 4,
        Formula::Until { .. } => 3,
        Formula::And(..) => 2,
        Formula::Or(..) => 1,
    }
}

fn fmt_prec(phi: &Formula, min_prec: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let prec = precedence(phi);
    let parens = prec < min_prec;
    if parens {
        write!(f, "(")?;
    }
    match phi {
        Formula::True => write!(f, "true")?,
        Formula::False => write!(f, "false")?,
        Formula::Atom { name, low, high, .. } => write!(f, "[{low} <= {name} <= {high}]")?,
        Formula::Not(inner) => {
            write!(f, "!")?;
            fmt_prec(inner, 5, f)?;
        }
        Formula::Or(a, b) => {
            fmt_prec(a, 1, f)?;
            write!(f, " | ")?;
            fmt_prec(b, 2, f)?;
        }
        Formula::And(a, b) => {
            fmt_prec(a, 2, f)?;
            write!(f, " & ")?;
            fmt_prec(b, 3, f)?;
        }
        Formula::Until { bound, lhs, rhs } => {
            fmt_prec(lhs, 4, f)?;
            write!(f, " U<={bound} ")?;
            fmt_prec(rhs, 4, f)?;
        }
        Formula::Finally { bound, inner } => {
            write!(f, "F<={bound} (")?;
            fmt_prec(inner, 0, f)?;
            write!(f, ")")?;
        }
        Formula::Globally { bound, inner } => {
            write!(f, "G<={bound} (")?;
            fmt_prec(inner, 0, f)?;
            write!(f, ")")?;
        }
    }
    if parens {
        write!(f, ")")?;
    }
    Ok(())
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_prec(self, 0, f)
    }
}

/// Satisfaction of every subformula at every grid index, computed bottom-up.
/// Worst case O(|phi| * len^2) from the temporal window scans.
fn sat_table(phi: &Formula, traj: &Trajectory) -> Vec<bool> {
    let len = traj.grid().len();
    let times = traj.grid().times();
    match phi {
        Formula::True => vec![true; len],
        Formula::False => vec![false; len],
        Formula::Atom { var, low, high, .. } => (0..len)
            .map(|i| {
                let v = traj.value(i, *var);
                *low <= v && v <= *high
            })
            .collect(),
        Formula::Not(inner) => sat_table(inner, traj).into_iter().map(|b| !b).collect(),
        Formula::Or(a, b) => {
            let ta = sat_table(a, traj);
            let tb = sat_table(b, traj);
            ta.into_iter().zip(tb).map(|(x, y)| x || y).collect()
        }
        Formula::And(a, b) => {
            let ta = sat_table(a, traj);
            let tb = sat_table(b, traj);
            ta.into_iter().zip(tb).map(|(x, y)| x && y).collect()
        }
        Formula::Until { bound, lhs, rhs } => {
            let tl = sat_table(lhs, traj);
            let tr = sat_table(rhs, traj);
            (0..len)
                .map(|i| {
                    for j in i..len {
                        if times[j] - times[i] > *bound {
                            break;
                        }
                        if tr[j] {
                            return true;
                        }
                        if !tl[j] {
                            break;
                        }
                    }
                    false
                })
                .collect()
        }
        Formula::Finally { bound, inner } => {
            let ti = sat_table(inner, traj);
            (0..len)
                .map(|i| {
                    (i..len)
                        .take_while(|&j| times[j] - times[i] <= *bound)
                        .any(|j| ti[j])
                })
                .collect()
        }
        Formula::Globally { bound, inner } => {
            let ti = sat_table(inner, traj);
            (0..len)
                .map(|i| {
                    (i..len)
                        .take_while(|&j| times[j] - times[i] <= *bound)
                        .all(|j| ti[j])
                })
                .collect()
        }
    }
}

/// Evaluate the formula at a grid index.
///
/// Panics if `at_index` is out of range or an atom references a state the
/// trajectory does not have.
pub fn eval(phi: &Formula, traj: &Trajectory, at_index: usize) -> bool {
    assert!(at_index < traj.grid().len(), "index {at_index} outside the grid");
    sat_table(phi, traj)[at_index]
}

/// Satisfaction of the whole trajectory: evaluation at the initial index.
pub fn satisfies(phi: &Formula, traj: &Trajectory) -> bool {
    eval(phi, traj, 0)
}

#[cfg(test)]
mod tests;
