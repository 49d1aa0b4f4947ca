//! Space-filling designs for each method: maximin Latin hypercubes,
//! Morris one-at-a-time trajectories, Sobol' A/B/AB block matrices and
//! VARS star samples.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{DesignKind, DesignMatrix, Matrix, ParameterSpace, StarPoint};
use crate::stats::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LhsConfig {
    pub n: usize,
    pub seed: u64,
    /// Swap budget for the maximin pass, in units of `n` swaps.
    #[serde(default)]
    pub maximin_sweeps: usize,
}

impl LhsConfig {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            seed,
            maximin_sweeps: 0,
        }
    }
}

/// Plain LHS on the unit cube: one point per stratum `[j/n, (j+1)/n)` in
/// every column.
pub fn lhs_unit<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Matrix {
    let mut m = Matrix::zeros(n, k);
    let mut perm: Vec<usize> = (0..n).collect();
    for j in 0..k {
        perm.shuffle(rng);
        for (i, &stratum) in perm.iter().enumerate() {
            let u: f64 = rng.random();
            m.set(i, j, (stratum as f64 + u) / n as f64);
        }
    }
    m
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Smallest pairwise distance between rows (infinite for fewer than two rows).
pub fn min_pairwise_distance(m: &Matrix) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..m.nrows() {
        for j in i + 1..m.nrows() {
            best = best.min(sq_dist(m.row(i), m.row(j)));
        }
    }
    best.sqrt()
}

struct MaximinState {
    d2: Vec<f64>,
    n: usize,
    min: f64,
    pair: (usize, usize),
}

impl MaximinState {
    fn new(m: &Matrix) -> Self {
        let n = m.nrows();
        let mut d2 = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = sq_dist(m.row(i), m.row(j));
                d2[i * n + j] = d;
                d2[j * n + i] = d;
            }
        }
        let mut s = Self {
            d2,
            n,
            min: f64::INFINITY,
            pair: (0, 0),
        };
        s.refresh_min();
        s
    }

    fn refresh_min(&mut self) {
        self.min = f64::INFINITY;
        for i in 0..self.n {
            for j in i + 1..self.n {
                if self.d2[i * self.n + j] < self.min {
                    self.min = self.d2[i * self.n + j];
                    self.pair = (i, j);
                }
            }
        }
    }

    fn min_excluding(&self, a: usize, b: usize) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.n {
            if i == a || i == b {
                continue;
            }
            for j in i + 1..self.n {
                if j != a && j != b {
                    best = best.min(self.d2[i * self.n + j]);
                }
            }
        }
        best
    }
}

/// Column-wise swap search that only ever accepts a swap when the minimum
/// pairwise distance strictly grows. One row of each swap is drawn from the
/// current closest pair, since any other swap cannot raise the minimum.
fn maximin_improve<R: Rng + ?Sized>(m: &mut Matrix, budget: usize, rng: &mut R) {
    let (n, k) = (m.nrows(), m.ncols());
    if n < 3 || k == 0 {
        return;
    }
    let mut st = MaximinState::new(m);
    let mut new_a = vec![0.0; n];
    let mut new_b = vec![0.0; n];
    for _ in 0..budget {
        let col = rng.random_range(0..k);
        let a = if rng.random::<bool>() { st.pair.0 } else { st.pair.1 };
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let (va, vb) = (m.get(a, col), m.get(b, col));
        // candidate distances for rows a and b after swapping column `col`
        let mut cand_min = f64::INFINITY;
        for t in 0..n {
            if t == a || t == b {
                continue;
            }
            let xt = m.get(t, col);
            let da = st.d2[a * n + t] - (va - xt).powi(2) + (vb - xt).powi(2);
            let db = st.d2[b * n + t] - (vb - xt).powi(2) + (va - xt).powi(2);
            new_a[t] = da;
            new_b[t] = db;
            cand_min = cand_min.min(da).min(db);
        }
        cand_min = cand_min.min(st.d2[a * n + b]);
        if cand_min <= st.min {
            continue;
        }
        let rest = st.min_excluding(a, b);
        if rest.min(cand_min) <= st.min {
            continue;
        }
        m.set(a, col, vb);
        m.set(b, col, va);
        // recompute exactly for the two touched rows to avoid drift
        for t in 0..n {
            if t == a || t == b {
                continue;
            }
            let da = sq_dist(m.row(a), m.row(t));
            let db = sq_dist(m.row(b), m.row(t));
            st.d2[a * n + t] = da;
            st.d2[t * n + a] = da;
            st.d2[b * n + t] = db;
            st.d2[t * n + b] = db;
        }
        st.refresh_min();
    }
}

fn lhs_unit_maximin(n: usize, k: usize, sweeps: usize, seed: u64) -> Matrix {
    let mut rng = stream_rng(seed, 0);
    let mut m = lhs_unit(n, k, &mut rng);
    if sweeps > 0 {
        maximin_improve(&mut m, sweeps * n, &mut rng);
    }
    m
}

pub fn lhs_maximin(space: &ParameterSpace, cfg: &LhsConfig) -> Result<DesignMatrix> {
    if cfg.n == 0 {
        return Err(Error::Config("LHS size must be at least 1".into()));
    }
    let unit = lhs_unit_maximin(cfg.n, space.len(), cfg.maximin_sweeps, cfg.seed);
    DesignMatrix::new(
        space,
        unit,
        DesignKind::Lhs {
            approximate: false,
            oversample: None,
            sweeps: cfg.maximin_sweeps,
        },
        cfg.seed,
    )
}

/// First `take` rows of a seeded oversample of size `cfg.n`; later batches
/// can be pulled from the same oversample with [`append_batch`].
pub fn lhs_oversample(space: &ParameterSpace, cfg: &LhsConfig, take: usize) -> Result<DesignMatrix> {
    if take == 0 || take > cfg.n {
        return Err(Error::Config(format!(
            "cannot take {take} rows from an oversample of {}",
            cfg.n
        )));
    }
    let full = lhs_unit_maximin(cfg.n, space.len(), cfg.maximin_sweeps, cfg.seed);
    let idx: Vec<usize> = (0..take).collect();
    DesignMatrix::new(
        space,
        full.select_rows(&idx),
        DesignKind::Lhs {
            approximate: false,
            oversample: Some(cfg.n),
            sweeps: cfg.maximin_sweeps,
        },
        cfg.seed,
    )
}

/// Grow an LHS design by `extra.n` rows. Designs cut from a larger seeded
/// oversample are extended from that oversample, so the existing rows are
/// reproduced exactly; anything else gets an independent batch appended and
/// is flagged as approximately stratified.
pub fn append_batch(space: &ParameterSpace, existing: &DesignMatrix, extra: &LhsConfig) -> Result<DesignMatrix> {
    let (oversample, sweeps) = match &existing.kind {
        DesignKind::Lhs { oversample, sweeps, .. } => (*oversample, *sweeps),
        other => {
            return Err(Error::UnsupportedDesign(format!(
                "runs cannot be appended to a {} design; it must be generated in one go",
                other.label()
            )))
        }
    };
    let n_old = existing.nrows();
    let n_new = n_old + extra.n;
    if let Some(total) = oversample {
        if n_new <= total {
            let cfg = LhsConfig {
                n: total,
                seed: existing.seed,
                maximin_sweeps: sweeps,
            };
            let grown = lhs_oversample(space, &cfg, n_new)?;
            let idx: Vec<usize> = (0..n_old).collect();
            if grown.unit.select_rows(&idx) == existing.unit {
                return Ok(grown);
            }
            log::warn!("existing rows do not match the recorded oversample; concatenating instead");
        }
    }
    let batch = lhs_maximin(space, extra)?;
    let unit = existing.unit.vstack(&batch.unit)?;
    DesignMatrix::new(
        space,
        unit,
        DesignKind::Lhs {
            approximate: true,
            oversample: None,
            sweeps,
        },
        existing.seed,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MorrisDesignConfig {
    pub r: usize,
    pub levels: usize,
    /// Step in unit-cube units; `levels / (2 (levels - 1))` when absent.
    #[serde(default)]
    pub delta: Option<f64>,
}

impl MorrisDesignConfig {
    pub fn new(r: usize, levels: usize) -> Self {
        Self { r, levels, delta: None }
    }

    pub fn delta(&self) -> f64 {
        self.delta
            .unwrap_or(self.levels as f64 / (2.0 * (self.levels as f64 - 1.0)))
    }

    /// Delta expressed in grid steps.
    fn grid_steps(&self) -> Result<usize> {
        if self.r == 0 {
            return Err(Error::Config("Morris design needs r >= 1".into()));
        }
        if self.levels < 2 || self.levels % 2 != 0 {
            return Err(Error::Config(format!(
                "Morris levels must be even and >= 2, got {}",
                self.levels
            )));
        }
        let delta = self.delta();
        let steps = delta * (self.levels - 1) as f64;
        if !(delta > 0.0 && delta < 1.0 + 1e-12) || (steps - steps.round()).abs() > 1e-9 || steps.round() < 1.0 {
            return Err(Error::Config(format!(
                "delta {delta} is not a multiple of the grid spacing 1/{}",
                self.levels - 1
            )));
        }
        Ok(steps.round() as usize)
    }
}

/// `r` trajectories of `K + 1` rows; each step moves one parameter by
/// ±delta on the `{0, 1/(p-1), ..., 1}` grid and every parameter moves once.
pub fn morris_oat(space: &ParameterSpace, cfg: &MorrisDesignConfig, seed: u64) -> Result<DesignMatrix> {
    let steps = cfg.grid_steps()?;
    let top = cfg.levels - 1;
    let k = space.len();
    let feasible: Vec<usize> = (0..cfg.levels)
        .filter(|&j| j + steps <= top || j >= steps)
        .collect();
    if feasible.is_empty() {
        return Err(Error::Config("delta leaves no feasible grid level".into()));
    }
    let mut rng = stream_rng(seed, 1);
    let mut unit = Matrix::zeros(cfg.r * (k + 1), k);
    let mut order: Vec<usize> = (0..k).collect();
    for t in 0..cfg.r {
        let mut level: Vec<usize> = (0..k).map(|_| feasible[rng.random_range(0..feasible.len())]).collect();
        order.shuffle(&mut rng);
        let base = t * (k + 1);
        for (j, &l) in level.iter().enumerate() {
            unit.set(base, j, l as f64 / top as f64);
        }
        for (s, &p) in order.iter().enumerate() {
            let up = level[p] + steps <= top;
            let down = level[p] >= steps;
            let go_up = match (up, down) {
                (true, true) => rng.random::<bool>(),
                (u, _) => u,
            };
            level[p] = if go_up { level[p] + steps } else { level[p] - steps };
            let row = base + s + 1;
            for (j, &l) in level.iter().enumerate() {
                unit.set(row, j, l as f64 / top as f64);
            }
        }
    }
    DesignMatrix::new(
        space,
        unit,
        DesignKind::MorrisOat {
            r: cfg.r,
            levels: cfg.levels,
            delta: cfg.delta(),
        },
        seed,
    )
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockSampler {
    /// Owen-scrambled Sobol' sequence over 2K dimensions, split into A | B.
    #[default]
    Qrn,
    /// Two independent Latin hypercubes.
    Lhs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SobolBlockConfig {
    pub base_n: usize,
    #[serde(default)]
    pub sampler: BlockSampler,
}

impl SobolBlockConfig {
    pub fn new(base_n: usize) -> Self {
        Self {
            base_n,
            sampler: BlockSampler::default(),
        }
    }
}

/// Largest base size the scrambled sequence supports.
pub const MAX_QRN_BASE: usize = 1 << 16;

/// Rows laid out as `[A; B; AB_1; ...; AB_K]`, `AB_k` being `A` with column
/// `k` taken from `B`.
pub fn sobol_blocks(space: &ParameterSpace, cfg: &SobolBlockConfig, seed: u64) -> Result<DesignMatrix> {
    let (n, k) = (cfg.base_n, space.len());
    if n < 2 {
        return Err(Error::Config("Sobol' base size must be at least 2".into()));
    }
    let (a, b) = match cfg.sampler {
        BlockSampler::Lhs => {
            let a = lhs_unit(n, k, &mut stream_rng(seed, 2));
            let b = lhs_unit(n, k, &mut stream_rng(seed, 3));
            (a, b)
        }
        BlockSampler::Qrn => {
            if n > MAX_QRN_BASE {
                return Err(Error::Config(format!(
                    "quasi-random blocks support base sizes up to {MAX_QRN_BASE}"
                )));
            }
            if 2 * k > sobol_burley::NUM_DIMENSIONS as usize {
                return Err(Error::Config("too many parameters for the quasi-random sampler".into()));
            }
            let qseed = (seed ^ (seed >> 32)) as u32;
            let mut a = Matrix::zeros(n, k);
            let mut b = Matrix::zeros(n, k);
            for i in 0..n {
                for j in 0..k {
                    a.set(i, j, sobol_burley::sample(i as u32, j as u32, qseed) as f64);
                    b.set(i, j, sobol_burley::sample(i as u32, (k + j) as u32, qseed) as f64);
                }
            }
            (a, b)
        }
    };
    let mut unit = Matrix::zeros(n * (k + 2), k);
    for i in 0..n {
        unit.row_mut(i).copy_from_slice(a.row(i));
        unit.row_mut(n + i).copy_from_slice(b.row(i));
        for c in 0..k {
            let r = (2 + c) * n + i;
            unit.row_mut(r).copy_from_slice(a.row(i));
            unit.set(r, c, b.get(i, c));
        }
    }
    DesignMatrix::new(space, unit, DesignKind::SobolBlocks { base_n: n }, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarsStarConfig {
    pub centers: usize,
    #[serde(default = "default_h")]
    pub h: f64,
}

fn default_h() -> f64 {
    0.1
}

impl VarsStarConfig {
    pub fn new(centers: usize) -> Self {
        Self { centers, h: 0.1 }
    }

    /// Number of grid intervals `1/h`.
    pub fn intervals(&self) -> Result<usize> {
        if !(self.h > 0.0 && self.h <= 0.5) {
            return Err(Error::Config(format!("h must be in (0, 0.5], got {}", self.h)));
        }
        let m = 1.0 / self.h;
        if (m - m.round()).abs() > 1e-9 {
            return Err(Error::Config(format!("1/h must be an integer, got 1/{}", self.h)));
        }
        Ok(m.round() as usize)
    }
}

/// Star samples: each LHS-drawn centre (snapped to the h-grid) followed by
/// its K cross-sections, each holding every other grid point along one axis.
pub fn vars_stars(space: &ParameterSpace, cfg: &VarsStarConfig, seed: u64) -> Result<DesignMatrix> {
    let m = cfg.intervals()?;
    if cfg.centers == 0 {
        return Err(Error::Config("VARS needs at least one star centre".into()));
    }
    let k = space.len();
    let centres = lhs_unit(cfg.centers, k, &mut stream_rng(seed, 4));
    let mut rows = Vec::with_capacity(cfg.centers * (1 + k * m));
    let mut points = Vec::with_capacity(rows.capacity());
    for s in 0..cfg.centers {
        let grid: Vec<usize> = centres.row(s).iter().map(|u| (u * m as f64).round() as usize).collect();
        let centre: Vec<f64> = grid.iter().map(|&g| g as f64 / m as f64).collect();
        rows.push(centre.clone());
        points.push(StarPoint { star: s, dim: None, grid: 0 });
        for d in 0..k {
            for g in 0..=m {
                if g == grid[d] {
                    continue;
                }
                let mut r = centre.clone();
                r[d] = g as f64 / m as f64;
                rows.push(r);
                points.push(StarPoint { star: s, dim: Some(d), grid: g });
            }
        }
    }
    DesignMatrix::new(
        space,
        Matrix::from_rows(&rows)?,
        DesignKind::VarsStars {
            centers: cfg.centers,
            h: cfg.h,
            points,
        },
        seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn strata_ok(m: &Matrix) -> bool {
        let n = m.nrows();
        (0..m.ncols()).all(|j| {
            let mut seen = vec![false; n];
            for i in 0..n {
                let s = (m.get(i, j) * n as f64).floor() as usize;
                if s >= n || seen[s] {
                    return false;
                }
                seen[s] = true;
            }
            true
        })
    }

    #[test]
    fn lhs_one_point_per_quartile() {
        let space = ParameterSpace::unit(2).unwrap();
        let d = lhs_maximin(&space, &LhsConfig::new(4, 3)).unwrap();
        assert!(strata_ok(&d.unit));
        let single = lhs_maximin(&space, &LhsConfig::new(1, 3)).unwrap();
        assert_eq!(single.nrows(), 1);
        assert!(single.unit.row(0).iter().all(|&u| (0.0..1.0).contains(&u)));
    }

    #[test]
    fn maximin_never_worse() {
        let space = ParameterSpace::unit(5).unwrap();
        let plain = lhs_maximin(&space, &LhsConfig::new(100, 11)).unwrap();
        let opt = lhs_maximin(
            &space,
            &LhsConfig {
                n: 100,
                seed: 11,
                maximin_sweeps: 50,
            },
        )
        .unwrap();
        assert!(strata_ok(&opt.unit));
        let (a, b) = (min_pairwise_distance(&plain.unit), min_pairwise_distance(&opt.unit));
        assert!(b >= a, "{b} < {a}");
        assert!(b > a, "maximin pass made no progress");
    }

    #[test]
    fn morris_structure() {
        let space = ParameterSpace::unit(3).unwrap();
        let cfg = MorrisDesignConfig::new(10, 4);
        assert!((cfg.delta() - 2.0 / 3.0).abs() < 1e-15);
        let d = morris_oat(&space, &cfg, 5).unwrap();
        assert_eq!(d.nrows(), 40);
        for t in 0..10 {
            let mut moved = [0usize; 3];
            for s in 0..3 {
                let (a, b) = (d.unit.row(t * 4 + s), d.unit.row(t * 4 + s + 1));
                let diffs: Vec<usize> = (0..3).filter(|&j| a[j] != b[j]).collect();
                assert_eq!(diffs.len(), 1);
                assert!(((a[diffs[0]] - b[diffs[0]]).abs() - 2.0 / 3.0).abs() < 1e-12);
                moved[diffs[0]] += 1;
            }
            assert_eq!(moved, [1, 1, 1]);
        }
        for &u in d.unit.as_slice() {
            let g = u * 3.0;
            assert!((g - g.round()).abs() < 1e-12);
        }
    }

    #[test]
    fn morris_rejects_off_grid_delta() {
        let space = ParameterSpace::unit(2).unwrap();
        let cfg = MorrisDesignConfig {
            r: 2,
            levels: 4,
            delta: Some(0.5),
        };
        assert!(matches!(morris_oat(&space, &cfg, 0), Err(Error::Config(_))));
        assert!(morris_oat(&space, &MorrisDesignConfig::new(2, 5), 0).is_err());
    }

    #[test]
    fn sobol_block_sizes_and_layout() {
        let space = ParameterSpace::unit(6).unwrap();
        let d = sobol_blocks(&space, &SobolBlockConfig::new(10000), 1).unwrap();
        assert_eq!(d.nrows(), 80000);

        // full 16-row layout for K = 2, base 4
        let space = ParameterSpace::unit(2).unwrap();
        for sampler in [BlockSampler::Qrn, BlockSampler::Lhs] {
            let d = sobol_blocks(&space, &SobolBlockConfig { base_n: 4, sampler }, 9).unwrap();
            assert_eq!(d.nrows(), 16);
            let u = &d.unit;
            for i in 0..4 {
                let (a, b) = (u.row(i), u.row(4 + i));
                assert_eq!(u.row(8 + i), &[b[0], a[1]]);
                assert_eq!(u.row(12 + i), &[a[0], b[1]]);
            }
        }
    }

    #[test]
    fn vars_star_counts() {
        let space = ParameterSpace::unit(1).unwrap();
        let d = vars_stars(&space, &VarsStarConfig { centers: 1, h: 0.5 }, 2).unwrap();
        assert_eq!(d.nrows(), 3);
        let mut vals: Vec<f64> = d.unit.column(0);
        vals.sort_by(f64::total_cmp);
        assert_eq!(vals, vec![0.0, 0.5, 1.0]);

        let space = ParameterSpace::unit(13).unwrap();
        let d = vars_stars(&space, &VarsStarConfig::new(50), 2).unwrap();
        assert_eq!(d.nrows(), 50 * (1 + 13 * 10));
        let DesignKind::VarsStars { points, .. } = &d.kind else { panic!() };
        let mut centre = 0;
        for (i, p) in points.iter().enumerate() {
            match p.dim {
                None => centre = i,
                Some(dim) => {
                    let diff: Vec<usize> =
                        (0..13).filter(|&j| d.unit.get(i, j) != d.unit.get(centre, j)).collect();
                    assert_eq!(diff, vec![dim]);
                }
            }
        }
        assert!(vars_stars(&space, &VarsStarConfig { centers: 2, h: 0.3 }, 0).is_err());
    }

    #[test]
    fn append_batches() {
        let space = ParameterSpace::unit(3).unwrap();
        let over = LhsConfig::new(1000, 17);
        let n1 = lhs_oversample(&space, &over, 100).unwrap();
        let n2 = append_batch(&space, &n1, &LhsConfig::new(100, 18)).unwrap();
        assert_eq!(n2.nrows(), 200);
        assert_eq!(n2.unit.select_rows(&(0..100).collect::<Vec<_>>()), n1.unit);
        assert!(matches!(n2.kind, DesignKind::Lhs { approximate: false, .. }));

        let plain = lhs_maximin(&space, &LhsConfig::new(100, 1)).unwrap();
        let cat = append_batch(&space, &plain, &LhsConfig::new(100, 2)).unwrap();
        assert_eq!(cat.nrows(), 200);
        assert!(matches!(cat.kind, DesignKind::Lhs { approximate: true, .. }));

        let morris = morris_oat(&space, &MorrisDesignConfig::new(5, 4), 0).unwrap();
        assert!(matches!(
            append_batch(&space, &morris, &LhsConfig::new(10, 0)),
            Err(Error::UnsupportedDesign(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn designs_are_deterministic(seed in any::<u64>(), k in 1usize..5) {
            let space = ParameterSpace::unit(k).unwrap();
            let cfg = LhsConfig { n: 20, seed, maximin_sweeps: 2 };
            prop_assert_eq!(lhs_maximin(&space, &cfg).unwrap(), lhs_maximin(&space, &cfg).unwrap());
            let m = MorrisDesignConfig::new(4, 6);
            prop_assert_eq!(morris_oat(&space, &m, seed).unwrap(), morris_oat(&space, &m, seed).unwrap());
            let s = SobolBlockConfig::new(8);
            prop_assert_eq!(sobol_blocks(&space, &s, seed).unwrap(), sobol_blocks(&space, &s, seed).unwrap());
        }

        #[test]
        fn lhs_marginals_are_stratified(seed in any::<u64>(), n in 1usize..60, k in 1usize..4) {
            let space = ParameterSpace::unit(k).unwrap();
            let d = lhs_maximin(&space, &LhsConfig::new(n, seed)).unwrap();
            prop_assert!(strata_ok(&d.unit));
        }
    }
}
