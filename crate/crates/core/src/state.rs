//! Pure states of the emitter chain restricted to one excitation sector.
//!
//! Jump dynamics lower the excitation number by exactly one per click and the
//! no-click evolution only rescales sector eigenstates, so a trajectory state
//! always lives in a single sector of dimension `C(N, e)`. Amplitudes are
//! indexed by the colex rank of the excitation bitmask (see [`crate::basis`]).
//!
//! Entropies are in nats. The Schmidt matrix of a sector state across a
//! boundary cut is block diagonal in the number of excitations on the left
//! block, so entropies are computed block by block.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::basis::{self, binomial, MAX_SITES};
use crate::error::{param_err, Error, Result};
use crate::unitary::UnitaryMatrix;
use crate::C64;

/// Normalization tolerance kept after every public operation.
pub const NORM_TOL: f64 = 1e-10;
/// Schmidt weights below this are dropped from entropy sums.
pub const SCHMIDT_CUTOFF: f64 = 1e-12;
/// Negative jump weights above `-WEIGHT_CLIP` are rounding noise.
pub const WEIGHT_CLIP: f64 = 1e-12;

/// Normalized pure state with `n_excited` excitations on `n_sites` emitters.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorState {
    n_sites: usize,
    n_excited: usize,
    amps: Vec<C64>,
}

/// Boundary block `A = {0, …, l-1}` against the rest of the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Bipartition {
    l: usize,
}

impl Bipartition {
    pub fn new(l: usize, n_sites: usize) -> Result<Self> {
        if l == 0 || l >= n_sites {
            return param_err(format!(
                "cut size must satisfy 1 <= l <= N-1, got l={l} for N={n_sites}"
            ));
        }
        Ok(Self { l })
    }

    #[inline]
    pub fn block_size(&self) -> usize {
        self.l
    }
}

pub fn initial_state(n_sites: usize, n_excited: usize) -> Result<SectorState> {
    SectorState::initial(n_sites, n_excited)
}

impl SectorState {
    /// First `n_excited` sites excited, the rest in the ground state.
    pub fn initial(n_sites: usize, n_excited: usize) -> Result<Self> {
        check_sites(n_sites)?;
        if n_excited > n_sites {
            return param_err(format!("n_excited={n_excited} exceeds n_sites={n_sites}"));
        }
        let mut amps = vec![C64::new(0.0, 0.0); binomial(n_sites, n_excited)];
        // the low block of set bits has colex rank 0
        amps[0] = C64::new(1.0, 0.0);
        Ok(Self {
            n_sites,
            n_excited,
            amps,
        })
    }

    /// Wraps explicit amplitudes, normalizing them. Fails on a zero vector or
    /// a length that does not match the sector.
    pub fn from_amplitudes(n_sites: usize, n_excited: usize, amps: Vec<C64>) -> Result<Self> {
        check_sites(n_sites)?;
        if n_excited > n_sites {
            return param_err(format!("n_excited={n_excited} exceeds n_sites={n_sites}"));
        }
        if amps.len() != binomial(n_sites, n_excited) {
            return param_err(format!(
                "sector C({n_sites},{n_excited}) has dimension {}, got {} amplitudes",
                binomial(n_sites, n_excited),
                amps.len()
            ));
        }
        let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !norm.is_finite() || norm <= 0.0 {
            return param_err("amplitude vector has zero or non-finite norm");
        }
        let amps = amps.into_iter().map(|z| z / norm).collect();
        Ok(Self {
            n_sites,
            n_excited,
            amps,
        })
    }

    /// Builds a state from `(bitmask, amplitude)` pairs; the masks must all
    /// carry `n_excited` set bits.
    pub fn from_basis_terms(
        n_sites: usize,
        n_excited: usize,
        terms: &[(u64, C64)],
    ) -> Result<Self> {
        check_sites(n_sites)?;
        let mut amps = vec![C64::new(0.0, 0.0); binomial(n_sites, n_excited)];
        for &(mask, z) in terms {
            if mask.count_ones() as usize != n_excited || mask >> n_sites != 0 {
                return param_err(format!(
                    "mask {mask:#b} is not in sector C({n_sites},{n_excited})"
                ));
            }
            amps[basis::rank(mask)] += z;
        }
        Self::from_amplitudes(n_sites, n_excited, amps)
    }

    #[inline]
    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    #[inline]
    pub fn n_excited(&self) -> usize {
        self.n_excited
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    /// Amplitude of the basis string `mask`; zero outside the sector.
    pub fn amplitude(&self, mask: u64) -> C64 {
        if mask.count_ones() as usize != self.n_excited || mask >> self.n_sites != 0 {
            return C64::new(0.0, 0.0);
        }
        self.amps[basis::rank(mask)]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `⟨σ⁺_j σ⁻_j⟩` for every site.
    pub fn site_excitations(&self) -> Vec<f64> {
        let masks = basis::masks(self.n_sites, self.n_excited);
        let mut out = vec![0.0; self.n_sites];
        for (mask, z) in masks.iter().zip(&self.amps) {
            let p = z.norm_sqr();
            let mut m = *mask;
            while m != 0 {
                out[m.trailing_zeros() as usize] += p;
                m &= m - 1;
            }
        }
        out
    }

    /// The same state on the mirrored chain (site `j` ↦ `N-1-j`).
    pub fn reversed(&self) -> Self {
        let masks = basis::masks(self.n_sites, self.n_excited);
        let mut amps = vec![C64::new(0.0, 0.0); self.amps.len()];
        for (mask, z) in masks.iter().zip(&self.amps) {
            let rev = mask.reverse_bits() >> (64 - self.n_sites);
            amps[basis::rank(rev)] = *z;
        }
        Self {
            n_sites: self.n_sites,
            n_excited: self.n_excited,
            amps,
        }
    }

    /// Embedding into the full `2^N` space, indexed by bitmask.
    pub fn to_dense(&self) -> Result<Vec<C64>> {
        if self.n_sites > 24 {
            return Err(Error::SizeLimit(format!(
                "dense embedding of {} sites",
                self.n_sites
            )));
        }
        let mut out = vec![C64::new(0.0, 0.0); 1 << self.n_sites];
        for (mask, z) in basis::masks(self.n_sites, self.n_excited)
            .iter()
            .zip(&self.amps)
        {
            out[*mask as usize] = *z;
        }
        Ok(out)
    }

    /// Debug dump: `{n_sites, n_excited, amplitudes: [[mask, re, im], ...]}`.
    pub fn to_debug_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Dump {
            n_sites: usize,
            n_excited: usize,
            amplitudes: Vec<(u64, f64, f64)>,
        }
        let amplitudes = basis::masks(self.n_sites, self.n_excited)
            .into_iter()
            .zip(&self.amps)
            .map(|(m, z)| (m, z.re, z.im))
            .collect();
        Ok(serde_json::to_string(&Dump {
            n_sites: self.n_sites,
            n_excited: self.n_excited,
            amplitudes,
        })?)
    }

    /// Click weights `w_i = ⟨ψ|c_i† c_i|ψ⟩` with `c_i = Σ_j U_ij σ⁻_j`.
    pub fn jump_weights(&self, u: &UnitaryMatrix) -> Result<Vec<f64>> {
        DecayImages::new(self)?.weights(u)
    }

    /// Normalized `c_i|ψ⟩`, one sector lower.
    pub fn apply_jump(&self, u: &UnitaryMatrix, detector: usize) -> Result<SectorState> {
        if detector >= self.n_sites {
            return param_err(format!(
                "detector {detector} out of range for {} sites",
                self.n_sites
            ));
        }
        let images = DecayImages::new(self)?;
        let weights = images.weights(u)?;
        images.jump(u, detector, weights[detector])
    }

    /// Von Neumann entropy (nats) of the block `{0, …, l-1}`.
    pub fn entanglement_entropy(&self, cut: Bipartition) -> Result<f64> {
        if cut.l == 0 || cut.l >= self.n_sites {
            return param_err(format!("cut l={} invalid for N={}", cut.l, self.n_sites));
        }
        let layout = sector_layout(self.n_sites, self.n_excited);
        Ok(cut_entropy(&self.amps, &layout.cuts[cut.l - 1]))
    }

    /// Entropies for every cut `l = 1, …, N-1`.
    pub fn entropy_profile(&self) -> Vec<f64> {
        if self.n_sites < 2 {
            return Vec::new();
        }
        let layout = sector_layout(self.n_sites, self.n_excited);
        layout
            .cuts
            .iter()
            .map(|c| cut_entropy(&self.amps, c))
            .collect()
    }

    /// Reduced density matrix of the first `l` sites, indexed by the bitmask
    /// of the block (dimension `2^l`).
    pub fn reduced_density_matrix(&self, l: usize) -> Result<DMatrix<C64>> {
        if l == 0 || l >= self.n_sites {
            return param_err(format!("cut l={l} invalid for N={}", self.n_sites));
        }
        if l > 12 {
            return Err(Error::SizeLimit(format!(
                "dense reduced state of {l} sites"
            )));
        }
        let layout = sector_layout(self.n_sites, self.n_excited);
        let cut = &layout.cuts[l - 1];
        let mut rho = DMatrix::<C64>::zeros(1 << l, 1 << l);
        for (b, block) in cut.blocks.iter().enumerate() {
            let m = block_matrix(&self.amps, cut, b);
            let g = &m * m.adjoint();
            let row_masks = basis::masks(l, block.left_weight);
            for (r, &ra) in row_masks.iter().enumerate() {
                for (c, &ca) in row_masks.iter().enumerate() {
                    rho[(ra as usize, ca as usize)] += g[(r, c)];
                }
            }
        }
        Ok(rho)
    }
}

fn check_sites(n_sites: usize) -> Result<()> {
    if n_sites == 0 || n_sites > MAX_SITES {
        return param_err(format!("n_sites must be in 1..={MAX_SITES}, got {n_sites}"));
    }
    Ok(())
}

/// The local decay images `φ_j = σ⁻_j |ψ⟩` of a state, all living one sector
/// lower. A mixed jump is `c_i|ψ⟩ = Σ_j U_ij φ_j`.
pub(crate) struct DecayImages {
    n_sites: usize,
    n_excited: usize,
    images: Vec<Vec<C64>>,
}

impl DecayImages {
    pub(crate) fn new(state: &SectorState) -> Result<Self> {
        if state.n_excited == 0 {
            return Err(Error::NoExcitations);
        }
        let n = state.n_sites;
        let e = state.n_excited;
        let target_dim = binomial(n, e - 1);
        let mut images = vec![vec![C64::new(0.0, 0.0); target_dim]; n];
        let mut pos = [0usize; MAX_SITES];
        for (src_rank, &mask) in basis::masks(n, e).iter().enumerate() {
            let z = state.amps[src_rank];
            if z == C64::new(0.0, 0.0) {
                continue;
            }
            let mut m = mask;
            let mut t = 0;
            while m != 0 {
                pos[t] = m.trailing_zeros() as usize;
                t += 1;
                m &= m - 1;
            }
            // Dropping bit s lowers the colex index of every higher bit by one.
            // Partial suffix sums may be negative, hence the wrapping arithmetic.
            let mut suffix = 0usize;
            for s in (0..e).rev() {
                let p = pos[s];
                let without = src_rank
                    .wrapping_sub(binomial(p, s + 1))
                    .wrapping_sub(suffix);
                images[p][without] = z;
                suffix = suffix
                    .wrapping_add(binomial(p, s + 1))
                    .wrapping_sub(binomial(p, s));
            }
        }
        Ok(Self {
            n_sites: n,
            n_excited: e,
            images,
        })
    }

    /// `w_i = Σ_{j,j'} conj(U_ij) G_{jj'} U_ij'` with `G_{jj'} = ⟨φ_j|φ_j'⟩`.
    pub(crate) fn weights(&self, u: &UnitaryMatrix) -> Result<Vec<f64>> {
        let n = self.n_sites;
        if u.dim() != n {
            return param_err(format!(
                "unitary dim {} does not match {} sites",
                u.dim(),
                n
            ));
        }
        let mut gram = vec![C64::new(0.0, 0.0); n * n];
        for j in 0..n {
            for k in j..n {
                let g: C64 = self.images[j]
                    .iter()
                    .zip(&self.images[k])
                    .map(|(a, b)| a.conj() * b)
                    .sum();
                gram[j * n + k] = g;
                gram[k * n + j] = g.conj();
            }
        }
        let mut weights = Vec::with_capacity(n);
        for i in 0..n {
            let mut w = C64::new(0.0, 0.0);
            for j in 0..n {
                let mut row = C64::new(0.0, 0.0);
                for k in 0..n {
                    row += gram[j * n + k] * u.get(i, k);
                }
                w += u.get(i, j).conj() * row;
            }
            let w = w.re;
            if w < -WEIGHT_CLIP {
                return Err(Error::Consistency(format!(
                    "negative jump weight {w:e} for detector {i}"
                )));
            }
            weights.push(w.max(0.0));
        }
        Ok(weights)
    }

    pub(crate) fn jump(
        &self,
        u: &UnitaryMatrix,
        detector: usize,
        weight: f64,
    ) -> Result<SectorState> {
        if detector >= self.n_sites {
            return param_err(format!(
                "detector {detector} out of range for {} sites",
                self.n_sites
            ));
        }
        if weight.is_nan() || weight <= WEIGHT_CLIP {
            return Err(Error::ImpossibleJump { detector, weight });
        }
        let dim = self.images[0].len();
        let mut out = vec![C64::new(0.0, 0.0); dim];
        for (j, img) in self.images.iter().enumerate() {
            let c = u.get(detector, j);
            if c == C64::new(0.0, 0.0) {
                continue;
            }
            for (o, x) in out.iter_mut().zip(img) {
                *o += c * x;
            }
        }
        let norm = out.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm.is_nan() || norm <= 0.0 {
            return Err(Error::ImpossibleJump { detector, weight });
        }
        for z in &mut out {
            *z /= norm;
        }
        Ok(SectorState {
            n_sites: self.n_sites,
            n_excited: self.n_excited - 1,
            amps: out,
        })
    }
}

/// Where each basis vector of a sector lands in the block-diagonal Schmidt
/// matrix of one cut.
struct CutLayout {
    block_of: Vec<u16>,
    row_of: Vec<u32>,
    col_of: Vec<u32>,
    blocks: Vec<BlockShape>,
}

struct BlockShape {
    left_weight: usize,
    rows: usize,
    cols: usize,
}

struct SectorLayout {
    cuts: Vec<CutLayout>,
}

type LayoutCache = RwLock<HashMap<(usize, usize), Arc<SectorLayout>>>;

fn sector_layout(n: usize, e: usize) -> Arc<SectorLayout> {
    static CACHE: OnceLock<LayoutCache> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(l) = cache.read().expect("layout cache poisoned").get(&(n, e)) {
        return Arc::clone(l);
    }
    let built = Arc::new(build_layout(n, e));
    let mut w = cache.write().expect("layout cache poisoned");
    Arc::clone(w.entry((n, e)).or_insert(built))
}

fn build_layout(n: usize, e: usize) -> SectorLayout {
    let masks = basis::masks(n, e);
    let mut cuts = Vec::with_capacity(n.saturating_sub(1));
    for l in 1..n {
        let low = (1u64 << l) - 1;
        let a_min = e.saturating_sub(n - l);
        let a_max = e.min(l);
        let mut block_index = vec![u16::MAX; l + 1];
        let mut blocks = Vec::new();
        for (a, slot) in block_index
            .iter_mut()
            .enumerate()
            .take(a_max + 1)
            .skip(a_min)
        {
            *slot = blocks.len() as u16;
            blocks.push(BlockShape {
                left_weight: a,
                rows: binomial(l, a),
                cols: binomial(n - l, e - a),
            });
        }
        let mut block_of = Vec::with_capacity(masks.len());
        let mut row_of = Vec::with_capacity(masks.len());
        let mut col_of = Vec::with_capacity(masks.len());
        for &m in &masks {
            let left = m & low;
            block_of.push(block_index[left.count_ones() as usize]);
            row_of.push(basis::rank(left) as u32);
            col_of.push(basis::rank(m >> l) as u32);
        }
        cuts.push(CutLayout {
            block_of,
            row_of,
            col_of,
            blocks,
        });
    }
    SectorLayout { cuts }
}

fn block_matrix(amps: &[C64], cut: &CutLayout, b: usize) -> DMatrix<C64> {
    let shape = &cut.blocks[b];
    let mut m = DMatrix::<C64>::zeros(shape.rows, shape.cols);
    for (idx, z) in amps.iter().enumerate() {
        if cut.block_of[idx] as usize == b {
            m[(cut.row_of[idx] as usize, cut.col_of[idx] as usize)] = *z;
        }
    }
    m
}

fn cut_entropy(amps: &[C64], cut: &CutLayout) -> f64 {
    let mut entries: Vec<Vec<(u32, u32, C64)>> = vec![Vec::new(); cut.blocks.len()];
    for (idx, z) in amps.iter().enumerate() {
        if z.norm_sqr() > 0.0 {
            entries[cut.block_of[idx] as usize].push((cut.row_of[idx], cut.col_of[idx], *z));
        }
    }
    // Weights relative to the total, so a product state gives exactly p = 1.
    let weights: Vec<f64> = entries
        .iter()
        .map(|b| b.iter().map(|(_, _, z)| z.norm_sqr()).sum())
        .collect();
    let total: f64 = weights.iter().sum();
    let mut s = 0.0;
    for (block, weight) in entries.iter().zip(weights) {
        let weight = weight / total;
        if weight < SCHMIDT_CUTOFF {
            continue;
        }
        let m = compact_block(block);
        if m.nrows() == 1 || m.ncols() == 1 {
            s -= weight * weight.ln();
            continue;
        }
        for p in schmidt_weights(m) {
            let p = p / total;
            if p >= SCHMIDT_CUTOFF {
                s -= p * p.ln();
            }
        }
    }
    s.max(0.0)
}

// Drops all-zero rows and columns; the nonzero singular values are unchanged.
fn compact_block(entries: &[(u32, u32, C64)]) -> DMatrix<C64> {
    let mut rows: Vec<u32> = entries.iter().map(|e| e.0).collect();
    let mut cols: Vec<u32> = entries.iter().map(|e| e.1).collect();
    rows.sort_unstable();
    rows.dedup();
    cols.sort_unstable();
    cols.dedup();
    let mut m = DMatrix::<C64>::zeros(rows.len(), cols.len());
    for &(r, c, z) in entries {
        let i = rows.binary_search(&r).expect("row present");
        let j = cols.binary_search(&c).expect("column present");
        m[(i, j)] = z;
    }
    m
}

const SVD_MAX_ITER: usize = 10_000;

fn schmidt_weights(m: DMatrix<C64>) -> Vec<f64> {
    if let Some(svd) = m.clone().try_svd(false, false, f64::EPSILON, SVD_MAX_ITER) {
        return svd.singular_values.iter().map(|sv| sv * sv).collect();
    }
    log::debug!(
        "SVD did not converge on a {}x{} block, using Gram eigenvalues",
        m.nrows(),
        m.ncols()
    );
    let gram = if m.nrows() <= m.ncols() {
        &m * m.adjoint()
    } else {
        m.adjoint() * &m
    };
    gram.symmetric_eigenvalues()
        .iter()
        .map(|&p| p.max(0.0))
        .collect()
}

/// Binary entropy `-p ln p - (1-p) ln(1-p)` with `0 ln 0 = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |x: f64| if x <= 0.0 { 0.0 } else { -x * x.ln() };
    term(p) + term(1.0 - p)
}
