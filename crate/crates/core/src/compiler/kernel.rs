use std::collections::HashMap;

use crate::error::SymbolicsError;
use crate::symbolics::{rational_to_f64, Access, Expr, Field, MathFn, Symbol};

use super::iet::LoweredEq;

/// A field read at fixed relative time and aligned offsets.
#[derive(Clone, Debug, PartialEq)]
pub struct Slot {
    pub field: usize,
    pub time: i32,
    pub offsets: Vec<i32>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Operand {
    Reg(usize),
    Val(f64),
    Mem(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Op {
    Add(Operand, Operand),
    Mul(Operand, Operand),
    Neg(Operand),
    Recip(Operand),
    Call(MathFn, Operand),
    Copy(Operand),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Instr {
    pub dst: usize,
    pub op: Op,
}

/// Bytecode evaluating one equation over a contiguous row of the innermost
/// axis. Sums and products fold left to right, matching `Expr::eval`.
#[derive(Clone, Debug)]
pub struct RowKernel {
    pub name: String,
    pub lhs_field: usize,
    pub lhs_time: i32,
    pub lhs_offsets: Vec<i32>,
    pub slots: Vec<Slot>,
    pub code: Vec<Instr>,
    pub result: usize,
    pub nregs: usize,
}

struct Builder<'a> {
    field_index: &'a dyn Fn(&Field) -> usize,
    invariants: &'a [f64],
    symbols: &'a dyn Fn(&Symbol) -> Option<f64>,
    slots: Vec<Slot>,
    slot_ids: HashMap<Access, usize>,
    code: Vec<Instr>,
    nregs: usize,
    free: Vec<usize>,
    pinned: HashMap<usize, usize>,
}

impl Builder<'_> {
    fn alloc(&mut self) -> usize {
        self.free.pop().unwrap_or_else(|| {
            self.nregs += 1;
            self.nregs - 1
        })
    }

    fn release(&mut self, o: Operand) {
        if let Operand::Reg(r) = o {
            if !self.pinned.values().any(|&p| p == r) {
                self.free.push(r);
            }
        }
    }

    fn emit(&mut self, op: Op, inputs: &[Operand]) -> Operand {
        let dst = self.alloc();
        for &o in inputs {
            self.release(o);
        }
        self.code.push(Instr { dst, op });
        Operand::Reg(dst)
    }

    fn compile(&mut self, e: &Expr) -> Result<Operand, SymbolicsError> {
        Ok(match e {
            Expr::Num(r) => Operand::Val(rational_to_f64(r)),
            Expr::Sym(s) => Operand::Val((self.symbols)(s).ok_or_else(|| SymbolicsError::UnboundSymbol(s.to_string()))?),
            Expr::Temp(i) if *i < self.invariants.len() => Operand::Val(self.invariants[*i]),
            Expr::Temp(i) => Operand::Reg(*self.pinned.get(i).expect("temporary defined before use")),
            Expr::Access(a) => {
                let next = self.slots.len();
                let id = *self.slot_ids.entry(a.clone()).or_insert(next);
                if id == next {
                    self.slots.push(Slot {
                        field: (self.field_index)(&a.field),
                        time: a.time,
                        offsets: a.offsets.clone(),
                    });
                }
                Operand::Mem(id)
            }
            Expr::Add(v) | Expr::Mul(v) => {
                let is_add = matches!(e, Expr::Add(_));
                let mut it = v.iter();
                let mut acc = match it.next() {
                    Some(c) => self.compile(c)?,
                    None => Operand::Val(if is_add { 0.0 } else { 1.0 }),
                };
                for c in it {
                    let rhs = self.compile(c)?;
                    let op = if is_add { Op::Add(acc, rhs) } else { Op::Mul(acc, rhs) };
                    acc = self.emit(op, &[acc, rhs]);
                }
                acc
            }
            Expr::Neg(c) => {
                let o = self.compile(c)?;
                self.emit(Op::Neg(o), &[o])
            }
            Expr::Recip(c) => {
                let o = self.compile(c)?;
                self.emit(Op::Recip(o), &[o])
            }
            Expr::Call(m, c) => {
                let o = self.compile(c)?;
                self.emit(Op::Call(*m, o), &[o])
            }
            Expr::Deriv(_) => return Err(SymbolicsError::UndiscretizedDerivative),
        })
    }

    fn materialize(&mut self, o: Operand) -> usize {
        match o {
            Operand::Reg(r) if !self.pinned.values().any(|&p| p == r) => r,
            other => match self.emit(Op::Copy(other), &[]) {
                Operand::Reg(r) => r,
                _ => unreachable!(),
            },
        }
    }
}

impl RowKernel {
    pub fn build(
        name: &str,
        eq: &LoweredEq,
        field_index: &dyn Fn(&Field) -> usize,
        invariants: &[f64],
        symbols: &dyn Fn(&Symbol) -> Option<f64>,
    ) -> Result<Self, SymbolicsError> {
        let mut b = Builder {
            field_index,
            invariants,
            symbols,
            slots: Vec::new(),
            slot_ids: HashMap::new(),
            code: Vec::new(),
            nregs: 0,
            free: Vec::new(),
            pinned: HashMap::new(),
        };
        for (id, def) in &eq.temps {
            let o = b.compile(def)?;
            let r = b.materialize(o);
            b.pinned.insert(*id, r);
        }
        let o = b.compile(&eq.rhs)?;
        let result = b.materialize(o);
        Ok(Self {
            name: name.to_string(),
            lhs_field: field_index(&eq.lhs.field),
            lhs_time: eq.lhs.time,
            lhs_offsets: eq.lhs.offsets.clone(),
            slots: b.slots,
            code: b.code,
            result,
            nregs: b.nregs,
        })
    }

    /// `(field, time)` pairs read.
    pub fn reads(&self) -> Vec<(usize, i32)> {
        let mut out: Vec<(usize, i32)> = Vec::new();
        for s in &self.slots {
            if !out.contains(&(s.field, s.time)) {
                out.push((s.field, s.time));
            }
        }
        out
    }

    /// Evaluate one point with scalar loads; used to cross-check the row
    /// interpreter.
    pub fn eval_point(&self, load: &dyn Fn(&Slot) -> f64) -> f64 {
        let mut regs = vec![0.0; self.nregs];
        let get = |regs: &[f64], o: Operand| match o {
            Operand::Reg(r) => regs[r],
            Operand::Val(v) => v,
            Operand::Mem(m) => load(&self.slots[m]),
        };
        for ins in &self.code {
            let v = match ins.op {
                Op::Add(a, b) => get(&regs, a) + get(&regs, b),
                Op::Mul(a, b) => get(&regs, a) * get(&regs, b),
                Op::Neg(a) => -get(&regs, a),
                Op::Recip(a) => 1.0 / get(&regs, a),
                Op::Call(m, a) => m.apply(get(&regs, a)),
                Op::Copy(a) => get(&regs, a),
            };
            regs[ins.dst] = v;
        }
        regs[self.result]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolics::{EvalEnv, GridSpec};

    struct Env;
    impl EvalEnv for Env {
        fn access(&self, a: &Access) -> f64 {
            1.0 + a.offsets[0] as f64 * 0.3 - a.offsets[1] as f64 * 0.7 + a.time as f64
        }
        fn symbol(&self, s: &Symbol) -> Option<f64> {
            match s {
                Symbol::Dt => Some(0.1),
                _ => Some(0.5),
            }
        }
    }

    #[test]
    fn bytecode_matches_tree_evaluation() {
        let g = GridSpec::unit(&[4, 4]).unwrap();
        let u = Field::time_function("u", &g, 2, 1).unwrap();
        let a = u.access(0, &[1, 0]);
        let b = u.access(0, &[0, -1]);
        let rhs = Expr::Add(vec![
            Expr::Mul(vec![Expr::dt(), a.clone(), Expr::Temp(0)]),
            Expr::Neg(Box::new(b.clone())),
            Expr::Call(MathFn::Cos, Box::new(a.clone())),
            Expr::Recip(Box::new(Expr::Add(vec![b.clone(), Expr::int(3)]))),
        ]);
        let eq = LoweredEq {
            lhs: u.forward_access(),
            temps: vec![(0, Expr::Mul(vec![Expr::rational(-3, 2), b.clone()]))],
            rhs: rhs.clone(),
        };
        let k = RowKernel::build("t", &eq, &|_| 0, &[], &|s| Env.symbol(s)).unwrap();
        let got = k.eval_point(&|s| {
            1.0 + s.offsets[0] as f64 * 0.3 - s.offsets[1] as f64 * 0.7 + s.time as f64
        });
        let t0 = eq.temps[0].1.eval(&Env).unwrap();
        struct WithTemp(f64);
        impl EvalEnv for WithTemp {
            fn access(&self, a: &Access) -> f64 {
                Env.access(a)
            }
            fn symbol(&self, s: &Symbol) -> Option<f64> {
                Env.symbol(s)
            }
            fn temp(&self, _: usize) -> f64 {
                self.0
            }
        }
        let want = rhs.eval(&WithTemp(t0)).unwrap();
        assert_eq!(got.to_bits(), want.to_bits());
    }
}
