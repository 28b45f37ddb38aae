//! Exhaustive Countdown search.
//!
//! Every expression tree over a multiset is reachable by repeatedly replacing
//! two pool entries with their combination, so the search walks unordered
//! pairs `(i, j)` with `i < j` and tries `a+b`, `a*b`, `a-b`, `b-a`, `a/b`,
//! `b/a`. Commutative operators are tried once per pair. The first witness
//! in this enumeration order is returned.

use super::expr::{apply, EvalMode, Expression, Op};
use super::verify::{CountdownProblem, MAX_OPERANDS};

#[derive(Clone)]
struct Entry {
    value: i64,
    expr: Expression,
}

/// Returns a witness expression, or `None` if no expression using every
/// number exactly once reaches the target under `mode`.
pub fn solve(problem: &CountdownProblem, mode: EvalMode) -> Option<Expression> {
    debug_assert!(problem.numbers().len() <= MAX_OPERANDS);
    let target = i64::try_from(problem.target()).ok()?;
    let pool: Vec<Entry> = problem
        .numbers()
        .iter()
        .map(|&n| {
            Some(Entry {
                value: i64::try_from(n).ok()?,
                expr: Expression::Num(n),
            })
        })
        .collect::<Option<_>>()?;
    search(&pool, target, mode)
}

fn search(pool: &[Entry], target: i64, mode: EvalMode) -> Option<Expression> {
    if pool.len() == 1 {
        return (pool[0].value == target).then(|| pool[0].expr.clone());
    }
    for i in 0..pool.len() {
        for j in (i + 1)..pool.len() {
            let rest: Vec<Entry> = pool
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != i && k != j)
                .map(|(_, e)| e.clone())
                .collect();
            let (a, b) = (&pool[i], &pool[j]);
            let candidates = [
                (Op::Add, a, b),
                (Op::Mul, a, b),
                (Op::Sub, a, b),
                (Op::Sub, b, a),
                (Op::Div, a, b),
                (Op::Div, b, a),
            ];
            for (op, l, r) in candidates {
                let Ok(value) = apply(op, l.value, r.value) else {
                    continue;
                };
                if mode.strict && value < 0 {
                    continue;
                }
                let mut next = Vec::with_capacity(rest.len() + 1);
                next.push(Entry {
                    value,
                    expr: Expression::binary(op, l.expr.clone(), r.expr.clone()),
                });
                next.extend(rest.iter().cloned());
                if let Some(found) = search(&next, target, mode) {
                    return Some(found);
                }
            }
        }
    }
    None
}
