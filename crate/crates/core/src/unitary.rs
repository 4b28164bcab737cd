//! Linear-optical-network unitaries.
//!
//! Three constructors are provided: the 2×2 beam splitter
//! `[[a, b], [−e^{iφ} b*, e^{iφ} a*]]`, staggered brick-wall networks of such
//! splitters, and Haar-random `N×N` unitaries. All matrices are dense.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::C64;

/// Tolerance for the unitarity check `max |U U† − I| < UNITARY_TOL`.
pub const UNITARY_TOL: f64 = 1e-12;

/// Dense square unitary matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryMatrix {
    m: DMatrix<C64>,
}

impl UnitaryMatrix {
    /// Wraps `m` after checking that it is square, non-empty and unitary.
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() == 0 || m.nrows() != m.ncols() {
            return param_err(format!(
                "unitary must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            ));
        }
        let u = Self { m };
        let dev = u.unitarity_deviation();
        if dev.is_nan() || dev >= UNITARY_TOL {
            return param_err(format!("matrix is not unitary: max |UU†−I| = {dev:e}"));
        }
        Ok(u)
    }

    /// Builds from row-major entries.
    pub fn from_rows(dim: usize, entries: &[C64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return param_err(format!(
                "expected {} entries for dim {dim}, got {}",
                dim * dim,
                entries.len()
            ));
        }
        Self::new(DMatrix::from_row_slice(dim, dim, entries))
    }

    pub fn identity(dim: usize) -> Self {
        assert!(dim >= 1, "unitary dimension must be positive");
        Self {
            m: DMatrix::identity(dim, dim),
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.m[(row, col)]
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    /// Row-major copy of the entries.
    pub fn to_row_major(&self) -> Vec<C64> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push(self.m[(i, j)]);
            }
        }
        out
    }

    /// `max_ij |(U U†)_ij − δ_ij|`.
    pub fn unitarity_deviation(&self) -> f64 {
        let prod = &self.m * self.m.adjoint();
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j {
                    C64::new(1.0, 0.0)
                } else {
                    C64::new(0.0, 0.0)
                };
                worst = worst.max((prod[(i, j)] - target).norm());
            }
        }
        worst
    }

    /// `Σ_{j ∈ cols} |U_ij|²`.
    pub fn row_weight(&self, row: usize, cols: std::ops::Range<usize>) -> f64 {
        cols.map(|j| self.m[(row, j)].norm_sqr()).sum()
    }

    pub fn to_json(&self) -> UnitaryJson {
        UnitaryJson {
            dim: self.dim(),
            entries: self.to_row_major().iter().map(|z| [z.re, z.im]).collect(),
        }
    }

    pub fn from_json(json: &UnitaryJson) -> Result<Self> {
        let entries: Vec<C64> = json
            .entries
            .iter()
            .map(|&[re, im]| C64::new(re, im))
            .collect();
        Self::from_rows(json.dim, &entries)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_json())?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let json: UnitaryJson = serde_json::from_str(s)?;
        Self::from_json(&json)
    }
}

/// On-disk form: `{"dim": N, "entries": [[re, im], ...]}`, row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitaryJson {
    pub dim: usize,
    pub entries: Vec<[f64; 2]>,
}

/// Parameters of a 2×2 mixing element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamSplitterParams {
    pub a: C64,
    pub b: C64,
    pub phi: f64,
}

impl BeamSplitterParams {
    pub fn new(a: C64, b: C64, phi: f64) -> Result<Self> {
        let norm = a.norm_sqr() + b.norm_sqr();
        if norm.is_nan() || (norm - 1.0).abs() >= UNITARY_TOL {
            return param_err(format!("beam splitter requires |a|²+|b|² = 1, got {norm}"));
        }
        Ok(Self { a, b, phi })
    }

    /// The balanced splitter `a = b = 1/√2, φ = π`, whose rows are the
    /// symmetric and antisymmetric combinations.
    pub fn balanced() -> Self {
        let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self {
            a: h,
            b: h,
            phi: std::f64::consts::PI,
        }
    }

    /// Recovers the parameters of an arbitrary 2×2 unitary. Every element of
    /// U(2) fits the form: the second row is the unit vector orthogonal to
    /// the first, up to the phase `e^{iφ} = det U`.
    pub fn from_unitary(u: &UnitaryMatrix) -> Result<Self> {
        if u.dim() != 2 {
            return param_err(format!("expected a 2x2 unitary, got dim {}", u.dim()));
        }
        let det = u.get(0, 0) * u.get(1, 1) - u.get(0, 1) * u.get(1, 0);
        Self::new(u.get(0, 0), u.get(0, 1), det.arg())
    }

    fn entries(&self) -> [[C64; 2]; 2] {
        let phase = C64::from_polar(1.0, self.phi);
        [
            [self.a, self.b],
            [-phase * self.b.conj(), phase * self.a.conj()],
        ]
    }
}

pub fn beamsplitter_unitary(params: &BeamSplitterParams) -> Result<UnitaryMatrix> {
    let p = BeamSplitterParams::new(params.a, params.b, params.phi)?;
    let e = p.entries();
    UnitaryMatrix::from_rows(2, &[e[0][0], e[0][1], e[1][0], e[1][1]])
}

/// Haar-random `n×n` unitary: complex Ginibre matrix, QR factorization, and
/// each column of `Q` rescaled by the phase of the matching diagonal entry
/// of `R`.
pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> UnitaryMatrix {
    assert!(n >= 1, "unitary dimension must be positive");
    let s = std::f64::consts::FRAC_1_SQRT_2;
    // column-major fill order is part of the seed contract
    let z = DMatrix::from_fn(n, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * s, im * s)
    });
    let qr = z.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        let d = r[(j, j)];
        let norm = d.norm();
        let phase = if norm > 0.0 {
            d / norm
        } else {
            C64::new(1.0, 0.0)
        };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    UnitaryMatrix { m: q }
}

/// One mixing element of a brick-wall network, acting on modes `top` and
/// `top + 1` in layer `layer`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrickGate {
    pub layer: usize,
    pub top: usize,
    pub params: BeamSplitterParams,
}

/// Staggered network of `depth` layers. Layer `ℓ` holds gates on mode pairs
/// `(j, j+1)` with `j ≡ ℓ (mod 2)`, so layer 0 pairs (0,1), (2,3), ….
#[derive(Debug, Clone, PartialEq)]
pub struct BrickwallSpec {
    pub n_modes: usize,
    pub depth: usize,
    pub gates: Vec<BrickGate>,
}

impl BrickwallSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_modes == 0 {
            return param_err("brick-wall network needs at least one mode");
        }
        let mut used = vec![usize::MAX; self.n_modes];
        for g in &self.gates {
            if g.layer >= self.depth {
                return param_err(format!(
                    "gate layer {} outside depth {}",
                    g.layer, self.depth
                ));
            }
            if g.top + 1 >= self.n_modes {
                return param_err(format!(
                    "gate top mode {} out of range for {} modes",
                    g.top, self.n_modes
                ));
            }
            if g.top % 2 != g.layer % 2 {
                return param_err(format!(
                    "gate on ({}, {}) has wrong parity for layer {}",
                    g.top,
                    g.top + 1,
                    g.layer
                ));
            }
            for m in [g.top, g.top + 1] {
                if used[m] == g.layer {
                    return param_err(format!(
                        "overlapping gates on mode {m} in layer {}",
                        g.layer
                    ));
                }
                used[m] = g.layer;
            }
        }
        Ok(())
    }
}

/// Brick-wall network with every gate drawn from the 2×2 Haar measure.
pub fn sample_haar_brickwall<R: Rng + ?Sized>(
    n_modes: usize,
    depth: usize,
    rng: &mut R,
) -> Result<BrickwallSpec> {
    if n_modes == 0 {
        return param_err("brick-wall network needs at least one mode");
    }
    if depth >= 1 && n_modes < 2 {
        return param_err(format!(
            "depth {depth} requires at least 2 modes, got {n_modes}"
        ));
    }
    let mut gates = Vec::new();
    for layer in 0..depth {
        let mut top = layer % 2;
        while top + 1 < n_modes {
            let u = haar_unitary(2, rng);
            let params = BeamSplitterParams::from_unitary(&u)?;
            gates.push(BrickGate { layer, top, params });
            top += 2;
        }
    }
    Ok(BrickwallSpec {
        n_modes,
        depth,
        gates,
    })
}

/// Network unitary: layer matrices multiplied with later layers on the left.
/// Entries farther than `depth` from the diagonal are exactly zero.
pub fn compose_brickwall(spec: &BrickwallSpec) -> Result<UnitaryMatrix> {
    spec.validate()?;
    let n = spec.n_modes;
    let mut m = DMatrix::<C64>::identity(n, n);
    let mut order: Vec<&BrickGate> = spec.gates.iter().collect();
    order.sort_by_key(|g| g.layer);
    for g in order {
        let e = g.params.entries();
        let (r0, r1) = (g.top, g.top + 1);
        for c in 0..n {
            let x = m[(r0, c)];
            let y = m[(r1, c)];
            m[(r0, c)] = e[0][0] * x + e[0][1] * y;
            m[(r1, c)] = e[1][0] * x + e[1][1] * y;
        }
    }
    let u = UnitaryMatrix { m };
    let dev = u.unitarity_deviation();
    if dev.is_nan() || dev >= UNITARY_TOL {
        return Err(Error::Consistency(format!(
            "composed network not unitary: {dev:e}"
        )));
    }
    Ok(u)
}
