//! Dense table factors over network variables, used by the graph transforms.

use crate::network::{BeliefNetwork, Cpt, VarId};

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Factor {
    vars: Vec<VarId>,
    cards: Vec<usize>,
    /// Row-major, last variable fastest.
    table: Vec<f64>,
}

impl Factor {
    /// The CPT as a factor over `parents..., child`; the flat table is shared
    /// layout-for-layout with [`Cpt`].
    pub(crate) fn from_cpt(net: &BeliefNetwork, cpt: &Cpt) -> Self {
        let mut vars = cpt.parents().to_vec();
        vars.push(cpt.child());
        let cards = vars.iter().map(|&v| net.card(v)).collect();
        let table = cpt.rows().flatten().copied().collect();
        Factor { vars, cards, table }
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![0; self.vars.len()];
        let mut acc = 1;
        for i in (0..self.vars.len()).rev() {
            s[i] = acc;
            acc *= self.cards[i];
        }
        s
    }

    fn card_of(&self, v: VarId) -> Option<usize> {
        self.vars.iter().position(|&x| x == v).map(|i| self.cards[i])
    }

    /// Evaluates the factor for every configuration of `vars` (which must
    /// include all of this factor's variables), row-major.
    fn expand(&self, vars: &[VarId], cards: &[usize]) -> Vec<f64> {
        let own = self.strides();
        // stride of each target variable in this factor's table (0 if absent)
        let map: Vec<usize> = vars
            .iter()
            .map(|v| {
                self.vars
                    .iter()
                    .position(|x| x == v)
                    .map_or(0, |i| own[i])
            })
            .collect();
        let size: usize = cards.iter().product();
        let mut out = Vec::with_capacity(size);
        let mut digits = vec![0usize; vars.len()];
        for _ in 0..size {
            let idx: usize = digits.iter().zip(&map).map(|(d, s)| d * s).sum();
            out.push(self.table[idx]);
            for k in (0..digits.len()).rev() {
                digits[k] += 1;
                if digits[k] < cards[k] {
                    break;
                }
                digits[k] = 0;
            }
        }
        out
    }

    pub(crate) fn product(&self, other: &Factor) -> Factor {
        let mut vars = self.vars.clone();
        let mut cards = self.cards.clone();
        for (v, c) in other.vars.iter().zip(&other.cards) {
            if !vars.contains(v) {
                vars.push(*v);
                cards.push(*c);
            }
        }
        let a = self.expand(&vars, &cards);
        let b = other.expand(&vars, &cards);
        Factor {
            vars,
            cards,
            table: a.iter().zip(&b).map(|(x, y)| x * y).collect(),
        }
    }

    pub(crate) fn sum_out(&self, v: VarId) -> Factor {
        let pos = self.vars.iter().position(|&x| x == v).expect("variable in factor");
        let strides = self.strides();
        let (stride, card) = (strides[pos], self.cards[pos]);
        let mut vars = self.vars.clone();
        let mut cards = self.cards.clone();
        vars.remove(pos);
        cards.remove(pos);
        let size: usize = cards.iter().product();
        let mut table = vec![0.0; size];
        // indices split as (outer, v, inner)
        let inner = stride;
        for (i, out) in table.iter_mut().enumerate() {
            let (hi, lo) = (i / inner, i % inner);
            let base = hi * inner * card + lo;
            *out = (0..card).map(|k| self.table[base + k * stride]).sum();
        }
        Factor { vars, cards, table }
    }

    /// Same factor with its variables reordered.
    pub(crate) fn reorder(&self, vars: &[VarId]) -> Factor {
        let cards: Vec<usize> = vars
            .iter()
            .map(|&v| self.card_of(v).expect("reorder keeps the variable set"))
            .collect();
        assert_eq!(vars.len(), self.vars.len());
        Factor {
            vars: vars.to_vec(),
            table: self.expand(vars, &cards),
            cards,
        }
    }

    /// Interprets the factor as a CPT for its last variable: one row per
    /// configuration of the leading variables. Rows with zero mass become
    /// uniform.
    pub(crate) fn into_rows(self) -> (Vec<VarId>, Vec<Vec<f64>>) {
        let card = *self.cards.last().expect("nonempty factor");
        let rows = self
            .table
            .chunks(card)
            .map(|row| {
                let z: f64 = row.iter().sum();
                if z > 0.0 {
                    row.iter().map(|p| p / z).collect()
                } else {
                    vec![1.0 / card as f64; card]
                }
            })
            .collect();
        let mut vars = self.vars;
        vars.pop();
        (vars, rows)
    }
}
