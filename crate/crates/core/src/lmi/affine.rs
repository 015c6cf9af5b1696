//! Sparse affine maps `x ↦ F0 + Σ x_j F_j` into symmetric matrices, and a
//! builder that accumulates terms of the form `s·(L X Rᵀ + R Xᵀ Lᵀ)`.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::layout::{Layout, Var};
use crate::error::{Error, Result};

/// Upper-triangle entry `(row, col, value)` with `row ≤ col`.
pub type Entry = (usize, usize, f64);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineSymMap {
    pub dim: usize,
    pub constant: Vec<Entry>,
    /// `(variable index, upper-triangle entries of F_j)`, sorted by index.
    pub terms: Vec<(usize, Vec<Entry>)>,
}

fn fill_sym(m: &mut DMatrix<f64>, entries: &[Entry], scale: f64) {
    for &(r, c, v) in entries {
        m[(r, c)] += scale * v;
        if r != c {
            m[(c, r)] += scale * v;
        }
    }
}

impl AffineSymMap {
    pub fn zero(dim: usize) -> Self {
        AffineSymMap {
            dim,
            constant: vec![],
            terms: vec![],
        }
    }

    pub fn constant_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        fill_sym(&mut m, &self.constant, 1.0);
        m
    }

    pub fn coefficient(&self, var: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        if let Ok(pos) = self.terms.binary_search_by_key(&var, |t| t.0) {
            fill_sym(&mut m, &self.terms[pos].1, 1.0);
        }
        m
    }

    pub fn evaluate(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = self.constant_matrix();
        for (j, entries) in &self.terms {
            let xj = x[*j];
            if xj != 0.0 {
                fill_sym(&mut m, entries, xj);
            }
        }
        m
    }

    pub fn scaled(&self, s: f64) -> AffineSymMap {
        let scale = |es: &Vec<Entry>| es.iter().map(|&(r, c, v)| (r, c, s * v)).collect();
        AffineSymMap {
            dim: self.dim,
            constant: scale(&self.constant),
            terms: self.terms.iter().map(|(j, es)| (*j, scale(es))).collect(),
        }
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        self.terms.last().map(|t| t.0)
    }

    /// `self + other`, dimensions must agree.
    pub fn add(&self, other: &AffineSymMap) -> Result<AffineSymMap> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch(format!(
                "cannot add {0}x{0} and {1}x{1} maps",
                self.dim, other.dim
            )));
        }
        let mut acc = Accumulator::default();
        for src in [self, other] {
            for &(r, c, v) in &src.constant {
                acc.add_constant(r, c, v);
            }
            for (j, entries) in &src.terms {
                for &(r, c, v) in entries {
                    acc.add_var(*j, r, c, v);
                }
            }
        }
        Ok(acc.finish(self.dim))
    }

    /// Checks ordering, bounds, and the upper-triangle convention.
    pub fn validate(&self, num_vars: usize) -> Result<()> {
        let bad = |what: &str| Err(Error::Format(format!("{what} in a {0}x{0} map", self.dim)));
        let ok = |e: &Entry| e.0 <= e.1 && e.1 < self.dim && e.2.is_finite();
        if !self.constant.iter().all(ok) {
            return bad("constant entry out of range or below the diagonal");
        }
        let mut last = None;
        for (j, entries) in &self.terms {
            if *j >= num_vars || last.is_some_and(|l| l >= *j) {
                return bad("variable index out of range or unsorted");
            }
            last = Some(*j);
            if !entries.iter().all(ok) {
                return bad("coefficient entry out of range or below the diagonal");
            }
        }
        Ok(())
    }
}

#[derive(Default)]
struct Accumulator {
    constant: HashMap<(usize, usize), f64>,
    vars: HashMap<usize, HashMap<(usize, usize), f64>>,
}

fn sorted(map: HashMap<(usize, usize), f64>) -> Vec<Entry> {
    let mut v: Vec<Entry> = map
        .into_iter()
        .filter(|(_, v)| *v != 0.0)
        .map(|((r, c), v)| (r, c, v))
        .collect();
    v.sort_by_key(|a| (a.0, a.1));
    v
}

impl Accumulator {
    fn add_constant(&mut self, r: usize, c: usize, v: f64) {
        *self.constant.entry((r.min(c), r.max(c))).or_insert(0.0) += v;
    }

    fn add_var(&mut self, j: usize, r: usize, c: usize, v: f64) {
        *self
            .vars
            .entry(j)
            .or_default()
            .entry((r.min(c), r.max(c)))
            .or_insert(0.0) += v;
    }

    fn finish(self, dim: usize) -> AffineSymMap {
        let mut terms: Vec<(usize, Vec<Entry>)> = self
            .vars
            .into_iter()
            .map(|(j, m)| (j, sorted(m)))
            .filter(|(_, e)| !e.is_empty())
            .collect();
        terms.sort_by_key(|t| t.0);
        AffineSymMap {
            dim,
            constant: sorted(self.constant),
            terms,
        }
    }
}

fn sparse_columns(m: &DMatrix<f64>) -> Vec<Vec<(usize, f64)>> {
    (0..m.ncols())
        .map(|j| {
            m.column(j)
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (i, *v))
                .collect()
        })
        .collect()
}

/// Accumulates terms into an [`AffineSymMap`] over a [`Layout`].
pub struct MapBuilder<'a> {
    layout: &'a Layout,
    dim: usize,
    acc: Accumulator,
}

impl<'a> MapBuilder<'a> {
    pub fn new(layout: &'a Layout, dim: usize) -> Self {
        MapBuilder {
            layout,
            dim,
            acc: Accumulator::default(),
        }
    }

    /// `scale·(L X Rᵀ + R Xᵀ Lᵀ)` for the decision matrix `X = var`.
    pub fn sym(&mut self, scale: f64, l: &DMatrix<f64>, var: Var, r: &DMatrix<f64>) {
        if scale == 0.0 {
            return;
        }
        let s = var.size(self.layout.n);
        assert!(
            l.nrows() == self.dim && r.nrows() == self.dim && l.ncols() == s && r.ncols() == s,
            "term shape does not match {} ({}x{})",
            var.name(),
            s,
            s
        );
        let lc = sparse_columns(l);
        let rc = sparse_columns(r);
        for (idx, positions) in self.layout.entries(var) {
            for (i, j) in positions {
                for &(a, ua) in &lc[i] {
                    for &(b, vb) in &rc[j] {
                        let w = if a == b { 2.0 } else { 1.0 };
                        self.acc.add_var(idx, a, b, scale * w * ua * vb);
                    }
                }
            }
        }
    }

    /// `scale·L X Lᵀ`.
    pub fn quad(&mut self, scale: f64, l: &DMatrix<f64>, var: Var) {
        self.sym(0.5 * scale, l, var, l);
    }

    /// Adds `scale·M` for a constant symmetric `M`.
    pub fn constant(&mut self, scale: f64, m: &DMatrix<f64>) {
        for r in 0..self.dim {
            for c in r..self.dim {
                let v = 0.5 * (m[(r, c)] + m[(c, r)]);
                if v != 0.0 {
                    self.acc.add_constant(r, c, scale * v);
                }
            }
        }
    }

    pub fn finish(self) -> AffineSymMap {
        self.acc.finish(self.dim)
    }
}
