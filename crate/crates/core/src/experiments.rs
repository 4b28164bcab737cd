//! Trajectory ensembles and the statistics computed from them.
//!
//! All ensemble functions take a master seed; trajectory `i` uses the stream
//! from [`crate::ensemble::trajectory_seed`]. With a Haar or brick-wall
//! source, every trajectory first draws its own network unitary from that
//! stream and then samples its clicks, so the averages run over networks and
//! click records together. A fixed source reuses one unitary for all
//! trajectories.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use crate::ensemble::{fold_trajectories, Merge};
use crate::error::{param_err, Error, Result};
use crate::oracle::exact_distribution;
use crate::state::{binary_entropy, SCHMIDT_CUTOFF};
use crate::stats::{
    expected_total_variation, shannon_entropy, total_variation, von_neumann_entropy, Moments,
};
use crate::trajectory::{clicks_to_counts, walk_trajectory, ClickSequence, OutcomeCounts};
use crate::unitary::{compose_brickwall, haar_unitary, sample_haar_brickwall, UnitaryMatrix};
use crate::C64;

/// Where the network unitary of each trajectory comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum UnitarySource {
    /// One unitary shared by every trajectory.
    Fixed(UnitaryMatrix),
    /// A fresh `N×N` Haar unitary per trajectory.
    Haar,
    /// A fresh Haar brick-wall network of the given depth per trajectory.
    Brickwall { depth: usize },
}

impl UnitarySource {
    pub fn sample<'a, R: Rng + ?Sized>(
        &'a self,
        n: usize,
        rng: &mut R,
    ) -> Result<Cow<'a, UnitaryMatrix>> {
        match self {
            UnitarySource::Fixed(u) => {
                if u.dim() != n {
                    return param_err(format!("fixed unitary has dim {}, expected {n}", u.dim()));
                }
                Ok(Cow::Borrowed(u))
            }
            UnitarySource::Haar => Ok(Cow::Owned(haar_unitary(n, rng))),
            UnitarySource::Brickwall { depth } => Ok(Cow::Owned(compose_brickwall(
                &sample_haar_brickwall(n, *depth, rng)?,
            )?)),
        }
    }

    /// Column value used in scaling tables.
    pub fn depth_label(&self) -> String {
        match self {
            UnitarySource::Fixed(_) => "fixed".into(),
            UnitarySource::Haar => "haar".into(),
            UnitarySource::Brickwall { depth } => depth.to_string(),
        }
    }
}

/// Mean trajectory entropy for every click count `k = 0..=M` and cut
/// `l = 1..N-1`, in nats.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyGrid {
    pub n_sites: usize,
    pub n_excited: usize,
    /// `values[k][l - 1]`
    pub values: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    pub n_samples: u64,
}

impl EntropyGrid {
    pub fn mean(&self, k: usize, l: usize) -> f64 {
        self.values[k][l - 1]
    }

    pub fn stderr(&self, k: usize, l: usize) -> f64 {
        self.stderr[k][l - 1]
    }

    /// CSV with header `k,l,mean,stderr`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["k", "l", "mean", "stderr"])?;
        for k in 0..=self.n_excited {
            for l in 1..self.n_sites {
                out.write_record([
                    k.to_string(),
                    l.to_string(),
                    self.mean(k, l).to_string(),
                    self.stderr(k, l).to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

struct GridAcc {
    cuts: usize,
    cells: Vec<Moments>,
}

impl Merge for GridAcc {
    fn merge(&mut self, other: Self) {
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            a.merge(b);
        }
    }
}

fn check_ensemble(n_sites: usize, n_excited: usize, n_samples: usize) -> Result<()> {
    if n_excited > n_sites {
        return param_err(format!("n_excited={n_excited} exceeds n_sites={n_sites}"));
    }
    if n_samples == 0 {
        return param_err("need at least one sample");
    }
    Ok(())
}

pub fn averaged_entropy_grid(
    n_sites: usize,
    n_excited: usize,
    source: &UnitarySource,
    n_samples: usize,
    master_seed: u64,
) -> Result<EntropyGrid> {
    check_ensemble(n_sites, n_excited, n_samples)?;
    if n_sites < 2 {
        return param_err("entropy grid needs at least two sites");
    }
    let cuts = n_sites - 1;
    let rows = n_excited + 1;
    let acc = fold_trajectories(
        n_samples,
        master_seed,
        || GridAcc {
            cuts,
            cells: vec![Moments::default(); rows * cuts],
        },
        |acc, _, rng| {
            let u = source.sample(n_sites, rng)?;
            walk_trajectory(n_sites, n_excited, &u, rng, |k, state, _| {
                for (l0, s) in state.entropy_profile().into_iter().enumerate() {
                    acc.cells[k * acc.cuts + l0].push(s);
                }
                Ok(())
            })?;
            Ok(())
        },
    )?;
    let values = (0..rows)
        .map(|k| {
            (0..cuts)
                .map(|l0| acc.cells[k * cuts + l0].mean())
                .collect()
        })
        .collect();
    let stderr = (0..rows)
        .map(|k| {
            (0..cuts)
                .map(|l0| acc.cells[k * cuts + l0].stderr())
                .collect()
        })
        .collect();
    Ok(EntropyGrid {
        n_sites,
        n_excited,
        values,
        stderr,
        n_samples: n_samples as u64,
    })
}

/// Location and value of the largest grid entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntropyMax {
    pub value: f64,
    pub k: usize,
    pub l: usize,
    pub stderr: f64,
}

/// Arg-max over the grid; ties go to the smallest `k`, then smallest `l`.
pub fn max_averaged_entropy(grid: &EntropyGrid) -> EntropyMax {
    let mut best = EntropyMax {
        value: f64::NEG_INFINITY,
        k: 0,
        l: 1,
        stderr: 0.0,
    };
    for k in 0..=grid.n_excited {
        for l in 1..grid.n_sites {
            let v = grid.mean(k, l);
            if v > best.value {
                best = EntropyMax {
                    value: v,
                    k,
                    l,
                    stderr: grid.stderr(k, l),
                };
            }
        }
    }
    best
}

/// Click count of maximal entropy for each cut `l = 1..N-1` (smallest `k` on
/// ties).
pub fn k_max_per_cut(grid: &EntropyGrid) -> Vec<usize> {
    (1..grid.n_sites)
        .map(|l| {
            let mut best_k = 0;
            for k in 1..=grid.n_excited {
                if grid.mean(k, l) > grid.mean(best_k, l) {
                    best_k = k;
                }
            }
            best_k
        })
        .collect()
}

/// Haar-averaged single-click bound `h(l/N)` in nats.
pub fn entropy_bound(l: usize, n: usize) -> f64 {
    binary_entropy(l as f64 / n as f64)
}

/// Grid cells where `S̄(l, k) > k·h(l/N) + sigmas·s.e.`, as
/// `(k, l, excess)`. The multi-click bound is an empirical observation, so
/// callers treat hits as warnings.
pub fn multi_click_bound_excess(grid: &EntropyGrid, sigmas: f64) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for k in 1..=grid.n_excited {
        for l in 1..grid.n_sites {
            let limit = k as f64 * entropy_bound(l, grid.n_sites) + sigmas * grid.stderr(k, l);
            let excess = grid.mean(k, l) - limit;
            if excess > 0.0 {
                out.push((k, l, excess));
            }
        }
    }
    out
}

/// Trajectory-averaged `⟨σ⁺_j σ⁻_j⟩` after `k` clicks, per site.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcitationProfile {
    pub k: usize,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_samples: u64,
}

struct SiteAcc(Vec<Moments>);

impl Merge for SiteAcc {
    fn merge(&mut self, other: Self) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.merge(b);
        }
    }
}

pub fn averaged_site_excitations(
    n_sites: usize,
    n_excited: usize,
    source: &UnitarySource,
    k: usize,
    n_samples: usize,
    master_seed: u64,
) -> Result<ExcitationProfile> {
    check_ensemble(n_sites, n_excited, n_samples)?;
    if k > n_excited {
        return param_err(format!("k={k} exceeds {n_excited} excitations"));
    }
    let acc = fold_trajectories(
        n_samples,
        master_seed,
        || SiteAcc(vec![Moments::default(); n_sites]),
        |acc, _, rng| {
            let u = source.sample(n_sites, rng)?;
            walk_trajectory(n_sites, n_excited, &u, rng, |step, state, _| {
                if step == k {
                    for (m, p) in acc.0.iter_mut().zip(state.site_excitations()) {
                        m.push(p);
                    }
                }
                Ok(())
            })?;
            Ok(())
        },
    )?;
    Ok(ExcitationProfile {
        k,
        mean: acc.0.iter().map(Moments::mean).collect(),
        stderr: acc.0.iter().map(Moments::stderr).collect(),
        n_samples: n_samples as u64,
    })
}

/// Empirical outcome frequencies against exact boson-sampling probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionReport {
    pub outcomes: Vec<OutcomeCounts>,
    pub exact: Vec<f64>,
    pub empirical: Vec<f64>,
    pub tvd: f64,
    pub n_samples: u64,
}

impl DistributionReport {
    /// Binomial standard error of each empirical frequency, from the exact
    /// probability.
    pub fn stderr(&self) -> Vec<f64> {
        let n = self.n_samples as f64;
        self.exact
            .iter()
            .map(|&p| (p * (1.0 - p).max(0.0) / n).sqrt())
            .collect()
    }

    /// Large-sample expected TVD for this sample size.
    pub fn expected_tvd(&self) -> f64 {
        expected_total_variation(&self.exact, self.n_samples)
    }

    /// CSV with header `outcome,exact,empirical,stderr`; the outcome column
    /// lists the per-detector counts separated by spaces.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["outcome", "exact", "empirical", "stderr"])?;
        for (i, se) in self.stderr().into_iter().enumerate() {
            out.write_record([
                self.outcomes[i].to_string(),
                self.exact[i].to_string(),
                self.empirical[i].to_string(),
                se.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

struct Histogram(Vec<u64>);

impl Merge for Histogram {
    fn merge(&mut self, other: Self) {
        for (a, b) in self.0.iter_mut().zip(other.0) {
            *a += b;
        }
    }
}

pub fn distribution_comparison(
    n_sites: usize,
    n_excited: usize,
    u: &UnitaryMatrix,
    n_samples: usize,
    master_seed: u64,
) -> Result<DistributionReport> {
    check_ensemble(n_sites, n_excited, n_samples)?;
    if u.dim() != n_sites {
        return param_err(format!(
            "unitary dim {} does not match {n_sites} sites",
            u.dim()
        ));
    }
    let exact_pairs = exact_distribution(u, n_excited)?;
    let index: HashMap<&OutcomeCounts, usize> = exact_pairs
        .iter()
        .enumerate()
        .map(|(i, (o, _))| (o, i))
        .collect();
    let hist = fold_trajectories(
        n_samples,
        master_seed,
        || Histogram(vec![0; exact_pairs.len()]),
        |acc, _, rng| {
            let clicks = walk_trajectory(n_sites, n_excited, u, rng, |_, _, _| Ok(()))?;
            let counts = clicks_to_counts(&clicks, n_sites)?;
            let i = index.get(&counts).ok_or_else(|| {
                Error::Consistency(format!("sampled outcome {counts} not enumerated"))
            })?;
            acc.0[*i] += 1;
            Ok(())
        },
    )?;
    let n = n_samples as f64;
    let empirical: Vec<f64> = hist.0.iter().map(|&c| c as f64 / n).collect();
    let (outcomes, exact): (Vec<_>, Vec<_>) = exact_pairs.into_iter().unzip();
    let tvd = total_variation(&exact, &empirical);
    Ok(DistributionReport {
        outcomes,
        exact,
        empirical,
        tvd,
        n_samples: n_samples as u64,
    })
}

/// The three entropies of the trajectory mixture after `k` clicks for the
/// block of the first `l` sites, all in nats.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixtureEntropyReport {
    pub k: usize,
    pub l: usize,
    pub n_samples: u64,
    /// `S̄`: mean entropy of the individual trajectory states.
    pub mean_trajectory_entropy: f64,
    pub mean_trajectory_entropy_stderr: f64,
    /// `S(ρ̄_l)`: entropy of the trajectory-averaged reduced state.
    pub averaged_state_entropy: f64,
    /// `H(λ)`: plug-in Shannon entropy of the click-sequence histogram.
    pub shannon_mixture_entropy: f64,
    pub distinct_sequences: usize,
    /// Miller–Madow estimate `(K-1)/(2n)` of the downward bias of the plug-in
    /// Shannon entropy.
    pub shannon_bias: f64,
    /// Slack allowed on both inequalities: three standard errors of `S̄` plus
    /// the plug-in biases of `H(λ)` and of `S(ρ̄_l)` (`(2^l - 1)/(2n)`).
    pub tolerance: f64,
}

impl MixtureEntropyReport {
    /// `S̄ ≤ S(ρ̄_l)` within tolerance.
    pub fn lower_bound_holds(&self) -> bool {
        self.mean_trajectory_entropy <= self.averaged_state_entropy + self.tolerance
    }

    /// `S(ρ̄_l) ≤ S̄ + H(λ)` within tolerance.
    pub fn upper_bound_holds(&self) -> bool {
        self.averaged_state_entropy
            <= self.mean_trajectory_entropy + self.shannon_mixture_entropy + self.tolerance
    }

    pub fn sandwich_holds(&self) -> bool {
        self.lower_bound_holds() && self.upper_bound_holds()
    }
}

struct MixtureAcc {
    entropy: Moments,
    rho: DMatrix<C64>,
    sequences: BTreeMap<ClickSequence, u64>,
}

impl Merge for MixtureAcc {
    fn merge(&mut self, other: Self) {
        self.entropy.merge(&other.entropy);
        self.rho += other.rho;
        for (s, c) in other.sequences {
            *self.sequences.entry(s).or_insert(0) += c;
        }
    }
}

/// Largest block accepted by [`mixture_entropy_report`].
pub const MIXTURE_MAX_BLOCK: usize = 12;

/// Estimates `S̄`, `S(ρ̄_l)` and `H(λ)` after `k` clicks under one fixed
/// network `u`. The mixture labels are the distinct click sequences of
/// length `k`; with a fixed network each label determines the state.
pub fn mixture_entropy_report(
    n_sites: usize,
    n_excited: usize,
    u: &UnitaryMatrix,
    k: usize,
    l: usize,
    n_samples: usize,
    master_seed: u64,
) -> Result<MixtureEntropyReport> {
    check_ensemble(n_sites, n_excited, n_samples)?;
    if k > n_excited {
        return param_err(format!("k={k} exceeds {n_excited} excitations"));
    }
    if l == 0 || l >= n_sites {
        return param_err(format!("cut l={l} invalid for N={n_sites}"));
    }
    if l > MIXTURE_MAX_BLOCK {
        return Err(Error::SizeLimit(format!(
            "averaged reduced state of {l} sites exceeds {MIXTURE_MAX_BLOCK}"
        )));
    }
    if u.dim() != n_sites {
        return param_err(format!(
            "unitary dim {} does not match {n_sites} sites",
            u.dim()
        ));
    }
    let dim = 1usize << l;
    let acc = fold_trajectories(
        n_samples,
        master_seed,
        || MixtureAcc {
            entropy: Moments::default(),
            rho: DMatrix::zeros(dim, dim),
            sequences: BTreeMap::new(),
        },
        |acc, _, rng| {
            walk_trajectory(n_sites, n_excited, u, rng, |step, state, clicks| {
                if step == k {
                    let rho = state.reduced_density_matrix(l)?;
                    acc.entropy.push(von_neumann_entropy(&rho, SCHMIDT_CUTOFF));
                    acc.rho += rho;
                    *acc.sequences
                        .entry(ClickSequence::from(clicks.to_vec()))
                        .or_insert(0) += 1;
                }
                Ok(())
            })?;
            Ok(())
        },
    )?;
    let n = n_samples as f64;
    let rho_bar = acc.rho / C64::new(n, 0.0);
    let averaged_state_entropy = von_neumann_entropy(&rho_bar, SCHMIDT_CUTOFF);
    let distinct = acc.sequences.len();
    let shannon = shannon_entropy(acc.sequences.values().copied());
    let shannon_bias = (distinct.saturating_sub(1)) as f64 / (2.0 * n);
    let state_bias = (dim - 1) as f64 / (2.0 * n);
    let tolerance = 3.0 * acc.entropy.stderr() + shannon_bias + state_bias;
    Ok(MixtureEntropyReport {
        k,
        l,
        n_samples: n_samples as u64,
        mean_trajectory_entropy: acc.entropy.mean(),
        mean_trajectory_entropy_stderr: acc.entropy.stderr(),
        averaged_state_entropy,
        shannon_mixture_entropy: shannon,
        distinct_sequences: distinct,
        shannon_bias,
        tolerance,
    })
}

/// One configuration of a scaling sweep (`N = M`).
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub n_sites: usize,
    pub source: UnitarySource,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub n_sites: usize,
    pub depth: String,
    pub s_max: f64,
    pub k_max: usize,
    pub l_max: usize,
    pub stderr: f64,
}

/// Maximal averaged entropy for each configuration, every point using
/// `master_seed`.
pub fn scaling_sweep(
    points: &[SweepPoint],
    n_samples: usize,
    master_seed: u64,
) -> Result<Vec<ScalingRow>> {
    points
        .iter()
        .map(|p| {
            let grid =
                averaged_entropy_grid(p.n_sites, p.n_sites, &p.source, n_samples, master_seed)?;
            let best = max_averaged_entropy(&grid);
            log::info!(
                "N={} D={} S_max={:.4} (k={}, l={})",
                p.n_sites,
                p.source.depth_label(),
                best.value,
                best.k,
                best.l
            );
            Ok(ScalingRow {
                n_sites: p.n_sites,
                depth: p.source.depth_label(),
                s_max: best.value,
                k_max: best.k,
                l_max: best.l,
                stderr: best.stderr,
            })
        })
        .collect()
}

/// CSV with header `N,D,S_max,k_max,l_max,stderr`.
pub fn write_scaling_csv<W: Write>(rows: &[ScalingRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["N", "D", "S_max", "k_max", "l_max", "stderr"])?;
    for r in rows {
        out.write_record([
            r.n_sites.to_string(),
            r.depth.clone(),
            r.s_max.to_string(),
            r.k_max.to_string(),
            r.l_max.to_string(),
            r.stderr.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unitary::{beamsplitter_unitary, BeamSplitterParams};
    use std::f64::consts::LN_2;

    fn balanced() -> UnitaryMatrix {
        beamsplitter_unitary(&BeamSplitterParams::balanced()).unwrap()
    }

    #[test]
    fn identity_grid_is_zero() {
        let g = averaged_entropy_grid(
            4,
            3,
            &UnitarySource::Fixed(UnitaryMatrix::identity(4)),
            50,
            1,
        )
        .unwrap();
        assert!(g.values.iter().flatten().all(|&v| v == 0.0));
        assert_eq!(
            max_averaged_entropy(&g),
            EntropyMax {
                value: 0.0,
                k: 0,
                l: 1,
                stderr: 0.0
            }
        );
    }

    #[test]
    fn balanced_splitter_grid() {
        let g = averaged_entropy_grid(2, 2, &UnitarySource::Fixed(balanced()), 100, 3).unwrap();
        assert_eq!(g.mean(0, 1), 0.0);
        assert!((g.mean(1, 1) - LN_2).abs() < 1e-12);
        assert_eq!(g.mean(2, 1), 0.0);
        let best = max_averaged_entropy(&g);
        assert_eq!((best.k, best.l), (1, 1));
        assert!((best.value - LN_2).abs() < 1e-12);
    }

    #[test]
    fn bounds() {
        assert!((entropy_bound(5, 10) - LN_2).abs() < 1e-15);
        assert_eq!(entropy_bound(10, 10), 0.0);
        assert!((entropy_bound(2, 10) - 0.500402423538188).abs() < 1e-12);
    }

    #[test]
    fn identity_distribution_is_a_point_mass() {
        let r = distribution_comparison(3, 3, &UnitaryMatrix::identity(3), 200, 4).unwrap();
        let i = r
            .outcomes
            .iter()
            .position(|o| o.as_slice() == [1, 1, 1])
            .unwrap();
        assert!((r.exact[i] - 1.0).abs() < 1e-12);
        assert_eq!(r.empirical[i], 1.0);
        assert!(r.tvd < 1e-12);
    }

    #[test]
    fn zero_clicks_mixture_is_pure() {
        let u = UnitaryMatrix::identity(4);
        let r = mixture_entropy_report(4, 4, &u, 0, 2, 100, 1).unwrap();
        assert_eq!(r.mean_trajectory_entropy, 0.0);
        assert!(r.averaged_state_entropy.abs() < 1e-12);
        assert_eq!(r.shannon_mixture_entropy, 0.0);
    }

    #[test]
    fn identity_mixture_is_classical() {
        let u = UnitaryMatrix::identity(4);
        let r = mixture_entropy_report(4, 4, &u, 2, 2, 2000, 2).unwrap();
        assert_eq!(r.mean_trajectory_entropy, 0.0);
        assert!(r.averaged_state_entropy > 0.0);
        assert!(r.shannon_mixture_entropy >= r.averaged_state_entropy);
        assert!(r.sandwich_holds());
    }

    #[test]
    fn mixture_rejects_large_blocks() {
        let u = UnitaryMatrix::identity(14);
        assert!(matches!(
            mixture_entropy_report(14, 2, &u, 1, 13, 1, 0),
            Err(Error::SizeLimit(_))
        ));
    }

    #[test]
    fn grid_csv_layout() {
        let g = averaged_entropy_grid(2, 2, &UnitarySource::Fixed(balanced()), 10, 3).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "k,l,mean,stderr");
        assert_eq!(lines.len(), 4);
    }
}
