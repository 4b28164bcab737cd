//! Click-ordered trajectories.
//!
//! The evolution is indexed by the number of registered clicks rather than by
//! time. Between clicks the effective Hamiltonian is proportional to the
//! excitation number, so after renormalization it leaves a sector state
//! untouched; only the jumps need to be applied. Physical waiting times can
//! be attached afterwards with [`attach_waiting_times`].

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::state::{Bipartition, DecayImages, SectorState};
use crate::unitary::UnitaryMatrix;

/// Random stream used for every trajectory.
pub type TrajectoryRng = ChaCha8Rng;

/// Ordered detector indices of registered clicks (0-based).
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClickSequence(Vec<usize>);

impl ClickSequence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, detector: usize) {
        self.0.push(detector);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn to_counts(&self, n_detectors: usize) -> Result<OutcomeCounts> {
        clicks_to_counts(self, n_detectors)
    }
}

impl From<Vec<usize>> for ClickSequence {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

/// Clicks per detector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OutcomeCounts(Vec<usize>);

impl OutcomeCounts {
    pub fn zeros(n_detectors: usize) -> Self {
        Self(vec![0; n_detectors])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }
}

impl From<Vec<usize>> for OutcomeCounts {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

impl std::fmt::Display for OutcomeCounts {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|c| c.to_string()).collect();
        write!(f, "{}", parts.join(" "))
    }
}

pub fn clicks_to_counts(clicks: &ClickSequence, n_detectors: usize) -> Result<OutcomeCounts> {
    let mut counts = vec![0; n_detectors];
    for &d in clicks.as_slice() {
        if d >= n_detectors {
            return param_err(format!(
                "detector index {d} out of range for {n_detectors} detectors"
            ));
        }
        counts[d] += 1;
    }
    Ok(OutcomeCounts(counts))
}

/// One sampled trajectory. `entropies[k]` is the entropy at the recorded cut
/// after `k` clicks; waiting times are in units of `1/γ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub clicks: ClickSequence,
    pub entropies: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waiting_times: Option<Vec<f64>>,
}

impl TrajectoryRecord {
    /// Appends the record as one JSON line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(&mut w, self)?;
        w.write_all(b"\n")?;
        Ok(())
    }
}

/// Inverse-CDF draw of an index with probability `weights[i] / Σ weights`.
pub fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<usize> {
    let total: f64 = weights.iter().sum();
    if !total.is_finite() || total <= 0.0 {
        return Err(Error::Consistency(format!("click weights sum to {total}")));
    }
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = i;
            acc += w;
            if target < acc {
                return Ok(i);
            }
        }
    }
    // rounding left target >= acc
    Ok(last_positive)
}

/// Draws the next detector to click from the state's jump weights.
pub fn sample_next_click<R: Rng + ?Sized>(
    state: &SectorState,
    u: &UnitaryMatrix,
    rng: &mut R,
) -> Result<usize> {
    let w = state.jump_weights(u)?;
    sample_index(&w, rng)
}

/// Samples all `n_excited` clicks from the initial state, calling
/// `visit(k, state, clicks)` on the state after the first `k` clicks for
/// `k = 0..=n_excited`.
pub fn walk_trajectory<R, F>(
    n_sites: usize,
    n_excited: usize,
    u: &UnitaryMatrix,
    rng: &mut R,
    mut visit: F,
) -> Result<ClickSequence>
where
    R: Rng + ?Sized,
    F: FnMut(usize, &SectorState, &[usize]) -> Result<()>,
{
    if u.dim() != n_sites {
        return param_err(format!(
            "unitary dim {} does not match {n_sites} sites",
            u.dim()
        ));
    }
    let mut state = SectorState::initial(n_sites, n_excited)?;
    let mut clicks = ClickSequence::new();
    visit(0, &state, clicks.as_slice())?;
    for k in 1..=n_excited {
        let images = DecayImages::new(&state)?;
        let w = images.weights(u)?;
        let d = sample_index(&w, rng)?;
        state = images.jump(u, d, w[d])?;
        clicks.push(d);
        visit(k, &state, clicks.as_slice())?;
    }
    Ok(clicks)
}

/// Trajectory record with the entropy at `cut` before and after every click,
/// drawing randomness from `rng`.
pub fn run_trajectory_with_rng<R: Rng + ?Sized>(
    n_sites: usize,
    n_excited: usize,
    u: &UnitaryMatrix,
    cut: Bipartition,
    seed: u64,
    rng: &mut R,
) -> Result<TrajectoryRecord> {
    let mut entropies = Vec::with_capacity(n_excited + 1);
    let clicks = walk_trajectory(n_sites, n_excited, u, rng, |_, s, _| {
        entropies.push(s.entanglement_entropy(cut)?);
        Ok(())
    })?;
    Ok(TrajectoryRecord {
        seed,
        clicks,
        entropies,
        waiting_times: None,
    })
}

pub fn run_trajectory(
    n_sites: usize,
    n_excited: usize,
    u: &UnitaryMatrix,
    cut: Bipartition,
    seed: u64,
) -> Result<TrajectoryRecord> {
    let mut rng = TrajectoryRng::seed_from_u64(seed);
    run_trajectory_with_rng(n_sites, n_excited, u, cut, seed, &mut rng)
}

/// Waiting time before click `k` is exponential with rate `M - k` (the total
/// click rate of a sector state with `M - k` excitations, in units of `γ`).
pub fn attach_waiting_times<R: Rng + ?Sized>(
    mut record: TrajectoryRecord,
    n_excited_initial: usize,
    rng: &mut R,
) -> Result<TrajectoryRecord> {
    if record.waiting_times.is_some() {
        return Err(Error::RecordState("waiting times already attached".into()));
    }
    if record.clicks.len() > n_excited_initial {
        return param_err(format!(
            "{} clicks recorded but only {n_excited_initial} excitations",
            record.clicks.len()
        ));
    }
    let mut times = Vec::with_capacity(record.clicks.len());
    for k in 0..record.clicks.len() {
        let rate = (n_excited_initial - k) as f64;
        let exp = Exp::new(rate).map_err(|e| Error::Parameter(e.to_string()))?;
        times.push(exp.sample(rng));
    }
    record.waiting_times = Some(times);
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::binary_entropy;
    use crate::unitary::{beamsplitter_unitary, haar_unitary, BeamSplitterParams};

    #[test]
    fn counts_from_clicks() {
        let c = clicks_to_counts(&ClickSequence::from(vec![0, 2, 0]), 3).unwrap();
        assert_eq!(c.as_slice(), &[2, 0, 1]);
        assert_eq!(
            clicks_to_counts(&ClickSequence::new(), 3)
                .unwrap()
                .as_slice(),
            &[0, 0, 0]
        );
        assert_eq!(
            clicks_to_counts(&ClickSequence::from(vec![1, 1, 1, 1]), 2)
                .unwrap()
                .as_slice(),
            &[0, 4]
        );
        assert!(clicks_to_counts(&ClickSequence::from(vec![3]), 3).is_err());
    }

    #[test]
    fn bell_state_always_clicks_symmetric() {
        let u = beamsplitter_unitary(&BeamSplitterParams::balanced()).unwrap();
        let s = SectorState::initial(2, 2)
            .unwrap()
            .apply_jump(&u, 0)
            .unwrap();
        let mut rng = TrajectoryRng::seed_from_u64(0);
        for _ in 0..200 {
            assert_eq!(sample_next_click(&s, &u, &mut rng).unwrap(), 0);
        }
    }

    #[test]
    fn balanced_splitter_never_splits() {
        let u = beamsplitter_unitary(&BeamSplitterParams::balanced()).unwrap();
        let cut = Bipartition::new(1, 2).unwrap();
        let mut first_zero = 0;
        for seed in 0..400 {
            let r = run_trajectory(2, 2, &u, cut, seed).unwrap();
            let c = r.clicks.as_slice();
            assert_eq!(c[0], c[1]);
            if c[0] == 0 {
                first_zero += 1;
            }
            assert!((r.entropies[1] - std::f64::consts::LN_2).abs() < 1e-12);
        }
        // binomial(400, 1/2): 4 s.e. = 40
        assert!((first_zero as i64 - 200).abs() < 40);
    }

    #[test]
    fn identity_network_never_entangles() {
        let u = UnitaryMatrix::identity(5);
        let r = run_trajectory(5, 5, &u, Bipartition::new(2, 5).unwrap(), 3).unwrap();
        assert_eq!(r.entropies.len(), 6);
        assert!(r.entropies.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn first_click_entropy_closed_form() {
        let u = haar_unitary(4, &mut TrajectoryRng::seed_from_u64(77));
        let r = run_trajectory(4, 4, &u, Bipartition::new(2, 4).unwrap(), 5).unwrap();
        let m1 = r.clicks.as_slice()[0];
        assert!((r.entropies[1] - binary_entropy(u.row_weight(m1, 0..2))).abs() < 1e-10);
        assert_eq!(*r.entropies.last().unwrap(), 0.0);
    }

    #[test]
    fn trajectories_are_reproducible() {
        let u = haar_unitary(5, &mut TrajectoryRng::seed_from_u64(1));
        let cut = Bipartition::new(2, 5).unwrap();
        assert_eq!(
            run_trajectory(5, 3, &u, cut, 42).unwrap(),
            run_trajectory(5, 3, &u, cut, 42).unwrap()
        );
    }

    #[test]
    fn waiting_times() {
        let mut rng = TrajectoryRng::seed_from_u64(5);
        let empty = TrajectoryRecord {
            seed: 0,
            clicks: ClickSequence::new(),
            entropies: vec![0.0],
            waiting_times: None,
        };
        let r = attach_waiting_times(empty, 0, &mut rng).unwrap();
        assert_eq!(r.waiting_times.as_deref(), Some(&[][..]));
        assert!(matches!(
            attach_waiting_times(r, 0, &mut rng),
            Err(Error::RecordState(_))
        ));

        // M=1: exponential(1), mean 1, s.e. 1/sqrt(n)
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let rec = TrajectoryRecord {
                seed: 0,
                clicks: ClickSequence::from(vec![0]),
                entropies: vec![0.0, 0.0],
                waiting_times: None,
            };
            let t = attach_waiting_times(rec, 1, &mut rng)
                .unwrap()
                .waiting_times
                .unwrap();
            assert!(t[0] >= 0.0);
            sum += t[0];
        }
        let mean = sum / n as f64;
        assert!((mean - 1.0).abs() < 3.0 / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn total_decay_time_m3() {
        // E[T] = 1/3 + 1/2 + 1, Var[T] = 1/9 + 1/4 + 1
        let mut rng = TrajectoryRng::seed_from_u64(6);
        let n = 50_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let rec = TrajectoryRecord {
                seed: 0,
                clicks: ClickSequence::from(vec![0, 1, 2]),
                entropies: vec![0.0; 4],
                waiting_times: None,
            };
            sum += attach_waiting_times(rec, 3, &mut rng)
                .unwrap()
                .waiting_times
                .unwrap()
                .iter()
                .sum::<f64>();
        }
        let se = ((1.0 / 9.0 + 0.25 + 1.0) / n as f64).sqrt();
        let expected = 1.0 / 3.0 + 0.5 + 1.0;
        assert!((sum / n as f64 - expected).abs() < 4.0 * se);
    }

    #[test]
    fn jsonl_format() {
        let rec = TrajectoryRecord {
            seed: 9,
            clicks: ClickSequence::from(vec![1, 0]),
            entropies: vec![0.0, 0.5, 0.0],
            waiting_times: None,
        };
        let mut buf = Vec::new();
        rec.write_jsonl(&mut buf).unwrap();
        let line = String::from_utf8(buf).unwrap();
        assert_eq!(
            line,
            "{\"seed\":9,\"clicks\":[1,0],\"entropies\":[0.0,0.5,0.0]}\n"
        );
        let back: TrajectoryRecord = serde_json::from_str(line.trim()).unwrap();
        assert_eq!(back, rec);
    }
}
