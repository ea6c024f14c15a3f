//! Common-subexpression extraction into numbered temporaries.

use std::collections::{HashMap, HashSet};

use super::discretize::StencilEquation;
use super::expr::Expr;

/// Repeatedly extract the largest non-leaf subtree occurring at least twice
/// (ties broken by first occurrence) into a temporary, then order the
/// temporaries so each is defined before use and renumber them `0..n`.
pub fn apply_cse(eq: &StencilEquation) -> StencilEquation {
    let mut next_id = eq
        .temporaries
        .iter()
        .map(|(i, _)| i + 1)
        .max()
        .unwrap_or(0);
    let mut temps: Vec<(usize, Expr)> = eq.temporaries.clone();
    let mut rhs = eq.rhs.clone();

    loop {
        let best = {
            let mut seen: HashMap<&Expr, (usize, usize)> = HashMap::new();
            let mut order = 0usize;
            for body in temps.iter().map(|(_, e)| e).chain(std::iter::once(&rhs)) {
                body.walk(&mut |e| {
                    if e.is_leaf() {
                        return;
                    }
                    let entry = seen.entry(e).or_insert((0, order));
                    entry.0 += 1;
                    order += 1;
                });
            }
            seen.into_iter()
                .filter(|(_, (count, _))| *count >= 2)
                .map(|(e, (_, first))| (e.size(), first, e.clone()))
                .min_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)))
                .map(|(_, _, e)| e)
        };
        let Some(target) = best else { break };
        let id = next_id;
        next_id += 1;
        let temp = Expr::Temp(id);
        for (_, def) in temps.iter_mut() {
            *def = def.substitute(&target, &temp);
        }
        rhs = rhs.substitute(&target, &temp);
        temps.push((id, target));
    }

    let (temps, rhs) = order_and_renumber(temps, rhs);
    StencilEquation {
        lhs: eq.lhs.clone(),
        rhs,
        temporaries: temps,
    }
}

fn temp_refs(e: &Expr) -> Vec<usize> {
    let mut out = Vec::new();
    e.walk(&mut |n| {
        if let Expr::Temp(i) = n {
            out.push(*i);
        }
    });
    out
}

fn order_and_renumber(temps: Vec<(usize, Expr)>, rhs: Expr) -> (Vec<(usize, Expr)>, Expr) {
    // Depth-first from the uses, in order of first appearance.
    let defs: HashMap<usize, Expr> = temps.iter().cloned().collect();
    let mut done = HashSet::new();
    let mut order = Vec::new();
    fn visit(
        id: usize,
        defs: &HashMap<usize, Expr>,
        done: &mut HashSet<usize>,
        order: &mut Vec<usize>,
    ) {
        if !done.insert(id) {
            return;
        }
        if let Some(def) = defs.get(&id) {
            for dep in temp_refs(def) {
                visit(dep, defs, done, order);
            }
        }
        order.push(id);
    }
    for id in temp_refs(&rhs) {
        visit(id, &defs, &mut done, &mut order);
    }
    for (id, _) in &temps {
        visit(*id, &defs, &mut done, &mut order);
    }
    let remap: HashMap<usize, usize> = order.iter().enumerate().map(|(new, &old)| (old, new)).collect();
    let rename = |e: &Expr| {
        e.transform(&mut |n| match n {
            Expr::Temp(i) => Expr::Temp(remap[&i]),
            other => other,
        })
    };
    let temps = order
        .iter()
        .map(|old| (remap[old], rename(&defs[old])))
        .collect();
    (temps, rename(&rhs))
}

/// Inline every temporary back into the right-hand side.
pub fn inline_temporaries(eq: &StencilEquation) -> Expr {
    let mut rhs = eq.rhs.clone();
    for (id, def) in eq.temporaries.iter().rev() {
        rhs = rhs.substitute(&Expr::Temp(*id), def);
    }
    rhs
}
