//! Decision-variable layout: which slice of the flat vector holds which
//! matrix, and how matrix entries map to vector entries.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Var {
    P,
    Q,
    U1,
    U2,
    U3,
    Z1,
    Z2,
    Z3,
    Z4,
    N1,
    N2,
    M1,
    M2,
    D1,
    D2,
    R1,
    R2,
    S1,
    S2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    /// Symmetric, stored as the upper triangle row by row.
    Symmetric,
    Diagonal,
    /// Unstructured, stored row by row.
    Full,
}

impl Var {
    pub const ALL: [Var; 19] = [
        Var::P,
        Var::Q,
        Var::U1,
        Var::U2,
        Var::U3,
        Var::Z1,
        Var::Z2,
        Var::Z3,
        Var::Z4,
        Var::N1,
        Var::N2,
        Var::M1,
        Var::M2,
        Var::D1,
        Var::D2,
        Var::R1,
        Var::R2,
        Var::S1,
        Var::S2,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn kind(self) -> VarKind {
        match self {
            Var::D1 | Var::D2 | Var::R1 | Var::R2 => VarKind::Diagonal,
            Var::S1 | Var::S2 => VarKind::Full,
            _ => VarKind::Symmetric,
        }
    }

    /// Side length for state dimension `n`.
    pub fn size(self, n: usize) -> usize {
        match self {
            Var::P => 3 * n,
            Var::Q => 2 * n,
            Var::S1 => 4 * n,
            _ => n,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Var::P => "P",
            Var::Q => "Q",
            Var::U1 => "U1",
            Var::U2 => "U2",
            Var::U3 => "U3",
            Var::Z1 => "Z1",
            Var::Z2 => "Z2",
            Var::Z3 => "Z3",
            Var::Z4 => "Z4",
            Var::N1 => "N1",
            Var::N2 => "N2",
            Var::M1 => "M1",
            Var::M2 => "M2",
            Var::D1 => "D1",
            Var::D2 => "D2",
            Var::R1 => "R1",
            Var::R2 => "R2",
            Var::S1 => "S1",
            Var::S2 => "S2",
        }
    }

    fn count(self, n: usize) -> usize {
        let s = self.size(n);
        match self.kind() {
            VarKind::Symmetric => s * (s + 1) / 2,
            VarKind::Diagonal => s,
            VarKind::Full => s * s,
        }
    }
}

/// Number of scalar decision variables for state dimension `n`.
pub fn count_variables(n: usize) -> usize {
    Var::ALL.iter().map(|v| v.count(n)).sum()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub n: usize,
    offsets: Vec<usize>,
    total: usize,
}

impl Layout {
    pub fn new(n: usize) -> Self {
        let mut offsets = Vec::with_capacity(Var::ALL.len());
        let mut acc = 0;
        for v in Var::ALL {
            offsets.push(acc);
            acc += v.count(n);
        }
        Layout {
            n,
            offsets,
            total: acc,
        }
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn offset(&self, v: Var) -> usize {
        self.offsets[v.index()]
    }

    /// `(flat index, positions)` for every scalar of `v`; a symmetric
    /// off-diagonal scalar occupies both `(i, j)` and `(j, i)`.
    pub fn entries(&self, v: Var) -> Vec<(usize, Vec<(usize, usize)>)> {
        let s = v.size(self.n);
        let base = self.offset(v);
        let mut out = Vec::with_capacity(v.count(self.n));
        match v.kind() {
            VarKind::Symmetric => {
                for i in 0..s {
                    for j in i..s {
                        let pos = if i == j {
                            vec![(i, i)]
                        } else {
                            vec![(i, j), (j, i)]
                        };
                        out.push((base + out.len(), pos));
                    }
                }
            }
            VarKind::Diagonal => {
                for i in 0..s {
                    out.push((base + i, vec![(i, i)]));
                }
            }
            VarKind::Full => {
                for i in 0..s {
                    for j in 0..s {
                        out.push((base + out.len(), vec![(i, j)]));
                    }
                }
            }
        }
        out
    }

    /// Which variable owns a flat index.
    pub fn owner(&self, idx: usize) -> Option<Var> {
        if idx >= self.total {
            return None;
        }
        let pos = self.offsets.partition_point(|&o| o <= idx);
        Some(Var::ALL[pos - 1])
    }
}

/// The decision matrices in structured form.
#[derive(Clone, Debug, PartialEq)]
pub struct LmiVariables {
    pub n: usize,
    mats: Vec<DMatrix<f64>>,
}

impl LmiVariables {
    pub fn zeros(n: usize) -> Self {
        LmiVariables {
            n,
            mats: Var::ALL
                .iter()
                .map(|v| DMatrix::zeros(v.size(n), v.size(n)))
                .collect(),
        }
    }

    pub fn get(&self, v: Var) -> &DMatrix<f64> {
        &self.mats[v.index()]
    }

    /// Sets a matrix; symmetric and diagonal kinds must already have that
    /// structure.
    pub fn set(&mut self, v: Var, m: DMatrix<f64>) -> Result<()> {
        let s = v.size(self.n);
        if m.nrows() != s || m.ncols() != s {
            return Err(Error::DimensionMismatch(format!(
                "{} must be {s}x{s}",
                v.name()
            )));
        }
        match v.kind() {
            VarKind::Symmetric => {
                if crate::linalg::asymmetry(&m) > 1e-12 * (1.0 + m.amax()) {
                    return Err(Error::NonSymmetric(v.name().into()));
                }
            }
            VarKind::Diagonal => {
                let off = (0..s)
                    .flat_map(|i| (0..s).map(move |j| (i, j)))
                    .any(|(i, j)| i != j && m[(i, j)] != 0.0);
                if off {
                    return Err(Error::Precondition(format!(
                        "{} must be diagonal",
                        v.name()
                    )));
                }
            }
            VarKind::Full => {}
        }
        self.mats[v.index()] = m;
        Ok(())
    }

    pub fn unflatten(layout: &Layout, x: &[f64]) -> Result<Self> {
        if x.len() != layout.len() {
            return Err(Error::DimensionMismatch(format!(
                "decision vector has length {}, layout needs {}",
                x.len(),
                layout.len()
            )));
        }
        let mut out = LmiVariables::zeros(layout.n);
        for v in Var::ALL {
            let m = &mut out.mats[v.index()];
            for (idx, pos) in layout.entries(v) {
                for (i, j) in pos {
                    m[(i, j)] = x[idx];
                }
            }
        }
        Ok(out)
    }

    pub fn flatten(&self, layout: &Layout) -> Vec<f64> {
        let mut x = vec![0.0; layout.len()];
        for v in Var::ALL {
            let m = self.get(v);
            for (idx, pos) in layout.entries(v) {
                let (i, j) = pos[0];
                x[idx] = m[(i, j)];
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn counts() {
        assert_eq!(count_variables(1), 41);
        assert_eq!(count_variables(2), 140);
        assert_eq!(count_variables(4), 512);
        for n in 1..10 {
            assert_eq!(count_variables(n), 29 * n * n + 12 * n);
            assert_eq!(Layout::new(n).len(), count_variables(n));
        }
    }

    #[test]
    fn owner_lookup() {
        let l = Layout::new(2);
        assert_eq!(l.owner(0), Some(Var::P));
        assert_eq!(l.owner(l.offset(Var::S2)), Some(Var::S2));
        assert_eq!(l.owner(l.offset(Var::D1) - 1), Some(Var::M2));
        assert_eq!(l.owner(l.len()), None);
    }

    proptest! {
        #[test]
        fn flatten_round_trip(n in 1usize..5, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let layout = Layout::new(n);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..layout.len()).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let vars = LmiVariables::unflatten(&layout, &x).unwrap();
            prop_assert_eq!(vars.flatten(&layout), x);
            for v in Var::ALL {
                if v.kind() == VarKind::Symmetric {
                    prop_assert_eq!(crate::linalg::asymmetry(vars.get(v)), 0.0);
                }
            }
        }
    }
}
