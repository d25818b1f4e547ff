//! Dense factors over discrete (or discretized) variables.
//!
//! Variables are identified by `usize` handles; tables are row-major with the
//! last variable in `vars` varying fastest.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Entries below this are floored before raising to a negative power.
pub const ZERO_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub vars: Vec<usize>,
    pub card: Vec<usize>,
    pub table: Vec<f64>,
}

fn strides(card: &[usize]) -> Vec<usize> {
    let mut s = vec![0; card.len()];
    let mut acc = 1;
    for i in (0..card.len()).rev() {
        s[i] = acc;
        acc *= card[i];
    }
    s
}

/// Iterates multi-indices in row-major order while tracking one linear offset
/// into each of several source layouts.
struct Walker {
    card: Vec<usize>,
    idx: Vec<usize>,
    /// Per source, per output axis stride (0 when the source lacks the axis).
    st: Vec<Vec<usize>>,
    pos: Vec<usize>,
}

impl Walker {
    fn new(card: &[usize], st: Vec<Vec<usize>>) -> Walker {
        let n = st.len();
        Walker { card: card.to_vec(), idx: vec![0; card.len()], st, pos: vec![0; n] }
    }

    /// Advance to the next multi-index; returns false after the last one.
    fn step(&mut self) -> bool {
        for ax in (0..self.card.len()).rev() {
            self.idx[ax] += 1;
            for (p, s) in self.pos.iter_mut().zip(&self.st) {
                *p += s[ax];
            }
            if self.idx[ax] < self.card[ax] {
                return true;
            }
            for (p, s) in self.pos.iter_mut().zip(&self.st) {
                *p -= s[ax] * self.card[ax];
            }
            self.idx[ax] = 0;
        }
        false
    }
}

/// Calls `f(row_offset, source_offsets)` once per run of the last axis, where
/// `row_offset` indexes the dense layout of `card`.
fn for_rows(card: &[usize], st: Vec<Vec<usize>>, mut f: impl FnMut(usize, &[usize])) {
    let n = card.len();
    if n == 0 {
        f(0, &vec![0; st.len()]);
        return;
    }
    let len = card[n - 1];
    let outer: Vec<Vec<usize>> = st.iter().map(|s| s[..n - 1].to_vec()).collect();
    let mut w = Walker::new(&card[..n - 1], outer);
    let mut row = 0;
    loop {
        f(row, &w.pos);
        row += len;
        if !w.step() {
            break;
        }
    }
}

fn aligned_strides(out_vars: &[usize], vars: &[usize], card: &[usize]) -> Vec<usize> {
    let s = strides(card);
    out_vars.iter().map(|v| vars.iter().position(|x| x == v).map(|i| s[i]).unwrap_or(0)).collect()
}

impl Factor {
    pub fn new(vars: Vec<usize>, card: Vec<usize>, table: Vec<f64>) -> Result<Factor> {
        if vars.len() != card.len() {
            return Err(Error::InvalidParameter("factor vars and card differ in length".into()));
        }
        for i in 0..vars.len() {
            if vars[i + 1..].contains(&vars[i]) {
                return Err(Error::InvalidParameter("factor has a repeated variable".into()));
            }
        }
        let size: usize = card.iter().product();
        if table.len() != size {
            return Err(Error::InvalidParameter("factor table length does not match cardinalities".into()));
        }
        if table.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidParameter("factor entries must be finite and nonnegative".into()));
        }
        Ok(Factor { vars, card, table })
    }

    pub fn ones(vars: Vec<usize>, card: Vec<usize>) -> Factor {
        let n = card.iter().product();
        Factor { vars, card, table: vec![1.0; n] }
    }

    /// The multiplicative identity over the empty scope.
    pub fn unit() -> Factor {
        Factor { vars: Vec::new(), card: Vec::new(), table: vec![1.0] }
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.table.iter().sum()
    }

    pub fn card_of(&self, v: usize) -> Option<usize> {
        self.vars.iter().position(|x| *x == v).map(|i| self.card[i])
    }

    fn union_scope(&self, other: &Factor) -> Result<(Vec<usize>, Vec<usize>)> {
        let mut vars = self.vars.clone();
        let mut card = self.card.clone();
        for (v, c) in other.vars.iter().zip(&other.card) {
            match self.card_of(*v) {
                Some(k) if k != *c => return Err(Error::ScopeMismatch(alloc::format!("variable {v}"))),
                Some(_) => {}
                None => {
                    vars.push(*v);
                    card.push(*c);
                }
            }
        }
        Ok((vars, card))
    }

    fn combine(&self, other: &Factor, op: impl Fn(f64, f64) -> f64) -> Result<Factor> {
        let (vars, card) = self.union_scope(other)?;
        let size: usize = card.iter().product();
        let sa = aligned_strides(&vars, &self.vars, &self.card);
        let sb = aligned_strides(&vars, &other.vars, &other.card);
        let mut table = vec![0.0; size];
        let n = card.len();
        let (la, lb) = if n == 0 { (0, 0) } else { (sa[n - 1], sb[n - 1]) };
        let len = if n == 0 { 1 } else { card[n - 1] };
        for_rows(&card, vec![sa, sb], |row, pos| {
            for k in 0..len {
                table[row + k] = op(self.table[pos[0] + k * la], other.table[pos[1] + k * lb]);
            }
        });
        Ok(Factor { vars, card, table })
    }

    pub fn multiply(&self, other: &Factor) -> Result<Factor> {
        self.combine(other, |a, b| a * b)
    }

    /// Cellwise division with 0/0 = 0.
    pub fn divide(&self, other: &Factor) -> Result<Factor> {
        self.combine(other, |a, b| if b == 0.0 { 0.0 } else { a / b })
    }

    /// Multiplies `other` (whose scope must be contained in ours) into self.
    pub fn multiply_in(&mut self, other: &Factor) -> Result<()> {
        for (v, c) in other.vars.iter().zip(&other.card) {
            match self.card_of(*v) {
                Some(k) if k == *c => {}
                _ => return Err(Error::ScopeMismatch(alloc::format!("variable {v}"))),
            }
        }
        let sb = aligned_strides(&self.vars, &other.vars, &other.card);
        let n = self.card.len();
        let (len, lb) = if n == 0 { (1, 0) } else { (self.card[n - 1], sb[n - 1]) };
        let table = &mut self.table;
        for_rows(&self.card, vec![sb], |row, pos| {
            let src = &other.table[pos[0]..];
            let dst = &mut table[row..row + len];
            if lb == 1 {
                dst.iter_mut().zip(src).for_each(|(d, s)| *d *= s);
            } else {
                let x = src[0];
                if lb == 0 {
                    dst.iter_mut().for_each(|d| *d *= x);
                } else {
                    for (k, d) in dst.iter_mut().enumerate() {
                        *d *= src[k * lb];
                    }
                }
            }
        });
        Ok(())
    }

    /// Sums out every variable not in `keep`; result scope follows `keep` order
    /// restricted to our scope.
    pub fn marginalize(&self, keep: &[usize]) -> Result<Factor> {
        for v in keep {
            if self.card_of(*v).is_none() {
                return Err(Error::ScopeMismatch(alloc::format!("variable {v} not in scope")));
            }
        }
        let vars: Vec<usize> = keep.to_vec();
        let card: Vec<usize> = vars.iter().map(|v| self.card_of(*v).unwrap()).collect();
        let size: usize = card.iter().product();
        let mut table = vec![0.0; size];
        let so = aligned_strides(&self.vars, &vars, &card);
        let n = self.card.len();
        let (len, lo) = if n == 0 { (1, 0) } else { (self.card[n - 1], so[n - 1]) };
        for_rows(&self.card, vec![so], |row, pos| {
            let src = &self.table[row..row + len];
            if lo == 0 {
                table[pos[0]] += src.iter().sum::<f64>();
            } else {
                for (k, x) in src.iter().enumerate() {
                    table[pos[0] + k * lo] += x;
                }
            }
        });
        Ok(Factor { vars, card, table })
    }

    /// Max-marginal onto `keep`.
    pub fn max_marginalize(&self, keep: &[usize]) -> Result<Factor> {
        let mut m = self.marginalize(keep)?;
        m.table.iter_mut().for_each(|x| *x = 0.0);
        let so = aligned_strides(&self.vars, &m.vars, &m.card);
        let mut w = Walker::new(&self.card, vec![so]);
        let mut i = 0;
        loop {
            let p = w.pos[0];
            if self.table[i] > m.table[p] {
                m.table[p] = self.table[i];
            }
            i += 1;
            if !w.step() {
                break;
            }
        }
        Ok(m)
    }

    pub fn sum_out(&self, v: usize) -> Result<Factor> {
        let keep: Vec<usize> = self.vars.iter().copied().filter(|x| *x != v).collect();
        if keep.len() == self.vars.len() {
            return Err(Error::ScopeMismatch(alloc::format!("variable {v} not in scope")));
        }
        self.marginalize(&keep)
    }

    pub fn normalize(&self) -> Result<Factor> {
        let s = self.sum();
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::InconsistentEvidence);
        }
        Ok(self.scale(1.0 / s))
    }

    pub fn scale(&self, k: f64) -> Factor {
        Factor { vars: self.vars.clone(), card: self.card.clone(), table: self.table.iter().map(|x| x * k).collect() }
    }

    /// Rescales so the largest entry is 1; no-op on all-zero tables.
    pub fn max_normalize(&mut self) {
        let m = self.table.iter().cloned().fold(0.0, f64::max);
        if m > 0.0 {
            self.table.iter_mut().for_each(|x| *x /= m);
        }
    }

    /// Cellwise power. Negative exponents floor entries at `ZERO_FLOOR`.
    pub fn power(&self, c: f64) -> Factor {
        let table = if c == 1.0 {
            self.table.clone()
        } else if c < 0.0 {
            self.table.iter().map(|x| crate::math::powf(x.max(ZERO_FLOOR), c)).collect()
        } else {
            self.table.iter().map(|x| crate::math::powf(*x, c)).collect()
        };
        Factor { vars: self.vars.clone(), card: self.card.clone(), table }
    }

    /// Zeroes every entry whose `var` state differs from `state`, keeping the
    /// scope; soft likelihoods use `multiply` with a single-variable factor.
    pub fn reduce_evidence(&self, var: usize, state: usize) -> Result<Factor> {
        let ax = self.vars.iter().position(|x| *x == var).ok_or_else(|| Error::ScopeMismatch(alloc::format!("variable {var} not in scope")))?;
        if state >= self.card[ax] {
            return Err(Error::InvalidParameter(alloc::format!("state {state} out of range for variable {var}")));
        }
        let s = strides(&self.card);
        let mut out = self.clone();
        for (i, x) in out.table.iter_mut().enumerate() {
            if (i / s[ax]) % self.card[ax] != state {
                *x = 0.0;
            }
        }
        Ok(out)
    }

    /// Drops `var` from scope by fixing it at `state`.
    pub fn slice(&self, var: usize, state: usize) -> Result<Factor> {
        let keep: Vec<usize> = self.vars.iter().copied().filter(|x| *x != var).collect();
        self.reduce_evidence(var, state)?.marginalize(&keep)
    }

    /// Reorders the scope to `order`, which must be a permutation of `vars`.
    pub fn permute(&self, order: &[usize]) -> Result<Factor> {
        if order.len() != self.vars.len() {
            return Err(Error::ScopeMismatch("permutation length".into()));
        }
        self.marginalize(order)
    }

    /// Value at a full assignment given in scope order.
    pub fn get(&self, states: &[usize]) -> f64 {
        let s = strides(&self.card);
        self.table[states.iter().zip(&s).map(|(a, b)| a * b).sum::<usize>()]
    }

    /// Largest absolute cellwise difference after aligning scopes.
    pub fn max_abs_diff(&self, other: &Factor) -> Result<f64> {
        let o = other.permute(&self.vars)?;
        Ok(self.table.iter().zip(&o.table).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(vars: &[usize], card: &[usize], t: &[f64]) -> Factor {
        Factor::new(vars.to_vec(), card.to_vec(), t.to_vec()).unwrap()
    }

    #[test]
    fn multiply_aligns_scopes() {
        let a = f(&[0, 1], &[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let b = f(&[1, 2], &[2, 3], &[1.0, 10.0, 100.0, 2.0, 20.0, 200.0]);
        let c = a.multiply(&b).unwrap();
        assert_eq!(c.vars, vec![0, 1, 2]);
        // a(0=1,1=1)=4, b(1=1,2=2)=200
        assert_eq!(c.get(&[1, 1, 2]), 800.0);
        assert_eq!(c.get(&[0, 0, 1]), 10.0);
    }

    #[test]
    fn identity_and_mismatch() {
        let a = f(&[3, 1], &[2, 3], &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        assert_eq!(a.multiply(&Factor::ones(vec![1], vec![3])).unwrap(), a);
        assert!(a.multiply(&Factor::ones(vec![1], vec![2])).is_err());
    }

    #[test]
    fn marginalize_reorders() {
        let a = f(&[0, 1], &[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(a.marginalize(&[1]).unwrap().table, vec![5.0, 7.0, 9.0]);
        let p = a.marginalize(&[1, 0]).unwrap();
        assert_eq!(p.table, vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        assert_eq!(a.marginalize(&[]).unwrap().table, vec![21.0]);
    }

    #[test]
    fn divide_zero_over_zero() {
        let a = f(&[0], &[3], &[0.0, 2.0, 3.0]);
        let d = a.divide(&a).unwrap();
        assert_eq!(d.table, vec![0.0, 1.0, 1.0]);
    }

    #[test]
    fn normalize_all_zero_fails() {
        assert_eq!(f(&[0], &[2], &[0.0, 0.0]).normalize(), Err(Error::InconsistentEvidence));
    }

    #[test]
    fn power_of_uniform_stays_uniform() {
        let u = f(&[0, 1], &[2, 2], &[0.25; 4]);
        for c in [-2.0, -1.0, 0.5, 3.0] {
            let p = u.power(c).normalize().unwrap();
            assert!(p.table.iter().all(|x| (x - 0.25).abs() < 1e-15));
        }
        assert_eq!(u.power(1.0), u);
    }

    #[test]
    fn evidence_and_slice() {
        let a = f(&[0, 1], &[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(a.reduce_evidence(0, 1).unwrap().table, vec![0.0, 0.0, 3.0, 4.0]);
        assert_eq!(a.slice(1, 0).unwrap().table, vec![1.0, 3.0]);
    }
}
