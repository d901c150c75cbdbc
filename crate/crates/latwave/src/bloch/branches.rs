//! Critical multiplier branches `λ_α(ξ)` near 1.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::{critical_count, monodromy, symbol_generator, BlochError};
use crate::linalg::{eig_dense, CMat, CVec, EigenPair};
use crate::model::SystemSpec;
use crate::profile::WaveProfile;

/// Multipliers closer to 1 than this at `ξ = 0` form the critical cluster.
const CLUSTER: f64 = 1e-2;
const MIN_OVERLAP: f64 = 0.7;
const MAX_HALVINGS: usize = 10;

#[derive(Clone, Debug, Serialize)]
pub struct SpectralBranch {
    pub xi: Vec<f64>,
    pub values: Vec<Complex64>,
    #[serde(skip)]
    pub vectors: Vec<CVec>,
    /// `ω Log λ / (iξ)`; NaN at `ξ = 0`.
    pub velocities: Vec<Complex64>,
    /// Smallest eigenvector overlap accepted while following the branch.
    pub min_overlap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BranchSet {
    pub branches: Vec<SpectralBranch>,
    pub radius: f64,
    pub expected: usize,
    pub halvings: usize,
    pub liouville_max: f64,
    pub omega: f64,
}

impl BranchSet {
    /// `max_m |λ_α(−ξ_m) − conj λ_ᾱ(ξ_m)|` minimized over pairings `α ↦ ᾱ`, on grid points present with both signs.
    pub fn conjugation_defect(&self) -> f64 {
        let Some(b0) = self.branches.first() else { return 0.0 };
        let n = self.branches.len();
        let mut worst = 0.0f64;
        for (i, &x) in b0.xi.iter().enumerate() {
            if x <= 0.0 {
                continue;
            }
            let Some(j) = b0.xi.iter().position(|&y| (y + x).abs() <= 1e-14 * x.abs()) else { continue };
            let best = permutations(n)
                .iter()
                .map(|p| {
                    (0..n)
                        .map(|a| (self.branches[a].values[j] - self.branches[p[a]].values[i].conj()).norm())
                        .fold(0.0, f64::max)
                })
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(best);
        }
        worst
    }
}

pub fn branches_csv(set: &BranchSet) -> String {
    let mut out = String::from("xi");
    for a in 0..set.branches.len() {
        out.push_str(&format!(",re_lambda_{a},im_lambda_{a}"));
    }
    out.push('\n');
    if let Some(b0) = set.branches.first() {
        for m in 0..b0.xi.len() {
            out.push_str(&format!("{:?}", b0.xi[m]));
            for b in &set.branches {
                out.push_str(&format!(",{:?},{:?}", b.values[m].re, b.values[m].im));
            }
            out.push('\n');
        }
    }
    out
}

/// Eigenvalues of `s0` within [`CLUSTER`] of 1, and the radius halfway to the nearest other multiplier.
pub fn critical_cluster(s0: &CMat) -> Result<(usize, f64), BlochError> {
    let mut dist: Vec<f64> = eig_dense(s0)?.iter().map(|p| (p.value - 1.0).norm()).collect();
    dist.sort_by(f64::total_cmp);
    let count = dist.iter().filter(|&&d| d < CLUSTER).count();
    let radius = dist.get(count).map_or(0.5, |d| 0.5 * d);
    Ok((count, radius))
}

/// Default `ε₀` for a wave.
pub fn auto_radius(sys: &SystemSpec, u: &WaveProfile, tol: f64) -> Result<f64, BlochError> {
    let m = monodromy(&symbol_generator(sys, u, 0.0)?, tol)?;
    Ok(critical_cluster(&m.s0)?.1)
}

struct Point {
    xi: f64,
    pairs: Vec<EigenPair>,
}

fn critical_pairs(sys: &SystemSpec, u: &WaveProfile, xi: f64, radius: f64, expected: usize, tol: f64) -> Result<(Point, f64), BlochError> {
    let m = monodromy(&symbol_generator(sys, u, xi)?, tol)?;
    let pairs: Vec<EigenPair> = eig_dense(&m.s0)?.into_iter().filter(|p| (p.value - 1.0).norm() < radius).collect();
    if pairs.len() != expected {
        return Err(BlochError::BranchCountMismatch { xi, expected, found: pairs.len(), radius });
    }
    Ok((Point { xi, pairs }, m.liouville_defect))
}

fn velocity(lambda: Complex64, xi: f64, omega: f64) -> Complex64 {
    if xi == 0.0 {
        return Complex64::new(f64::NAN, f64::NAN);
    }
    lambda.ln() * omega / Complex64::new(0.0, xi)
}

pub(crate) fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Branch state along one side of the grid.
struct Track {
    xi: Vec<f64>,
    /// Per point, per branch.
    pairs: Vec<Vec<EigenPair>>,
    min_overlap: Vec<f64>,
}

impl Track {
    fn predicted(&self, a: usize, xi: f64, omega: f64) -> Complex64 {
        let m = self.xi.len();
        let v = |i: usize| velocity(self.pairs[i][a].value, self.xi[i], omega);
        if m >= 2 {
            let (x0, x1) = (self.xi[m - 2], self.xi[m - 1]);
            let (v0, v1) = (v(m - 2), v(m - 1));
            v1 + (v1 - v0) * ((xi - x1) / (x1 - x0))
        } else {
            v(m - 1)
        }
    }

    /// Best assignment of `pt` to the current branches by predicted velocity, with its smallest eigenvector overlap.
    fn assign(&self, pt: &Point, omega: f64) -> (Vec<usize>, f64) {
        let n = pt.pairs.len();
        let last = self.pairs.last().expect("track started");
        let pred: Vec<Complex64> = (0..n).map(|a| self.predicted(a, pt.xi, omega)).collect();
        let vel: Vec<Complex64> = pt.pairs.iter().map(|p| velocity(p.value, pt.xi, omega)).collect();
        let perm = permutations(n)
            .into_iter()
            .min_by(|p, q| {
                let c = |p: &Vec<usize>| (0..n).map(|a| (vel[p[a]] - pred[a]).norm()).sum::<f64>();
                c(p).total_cmp(&c(q))
            })
            .expect("nonempty");
        let overlap = (0..n).map(|a| last[a].vector.dotc(&pt.pairs[perm[a]].vector).norm()).fold(1.0, f64::min);
        (perm, overlap)
    }

    fn push(&mut self, pt: Point, perm: &[usize], overlap: f64) {
        let mut slots: Vec<Option<EigenPair>> = pt.pairs.into_iter().map(Some).collect();
        self.pairs.push(perm.iter().map(|&i| slots[i].take().expect("permutation")).collect());
        self.xi.push(pt.xi);
        self.min_overlap.push(overlap);
    }
}

struct Ctx<'a> {
    sys: &'a SystemSpec,
    u: &'a WaveProfile,
    radius: f64,
    expected: usize,
    tol: f64,
}

/// Follows one side of the grid outward from the smallest `|ξ|`, halving steps where overlaps drop.
fn follow(ctx: &Ctx, side: Vec<Point>, halvings: &mut usize, liouville: &mut f64) -> Result<Track, BlochError> {
    let omega = ctx.u.omega;
    let mut iter = side.into_iter();
    let Some(first) = iter.next() else {
        return Ok(Track { xi: Vec::new(), pairs: Vec::new(), min_overlap: Vec::new() });
    };
    let mut order: Vec<usize> = (0..first.pairs.len()).collect();
    let v: Vec<Complex64> = first.pairs.iter().map(|p| velocity(p.value, first.xi, omega)).collect();
    order.sort_by(|&a, &b| v[a].re.total_cmp(&v[b].re));
    let mut track = Track { xi: Vec::new(), pairs: Vec::new(), min_overlap: Vec::new() };
    track.push(first, &order, 1.0);
    for pt in iter {
        // Pending points, innermost last; bisection midpoints steer the prediction and are dropped from the output.
        let mut pending = vec![pt];
        while let Some(target) = pending.pop() {
            let (perm, overlap) = track.assign(&target, omega);
            if overlap >= MIN_OVERLAP {
                track.push(target, &perm, overlap);
                continue;
            }
            if pending.len() == MAX_HALVINGS {
                return Err(BlochError::MatchingAmbiguity { xi: target.xi, overlap });
            }
            *halvings += 1;
            let mid = 0.5 * (track.xi.last().expect("started") + target.xi);
            let (mp, lv) = critical_pairs(ctx.sys, ctx.u, mid, ctx.radius, ctx.expected, ctx.tol)?;
            *liouville = liouville.max(lv);
            pending.push(target);
            pending.push(mp);
        }
    }
    Ok(track)
}

/// Multiplier branches of `S_ξ` in `B(1, ε₀)` over `grid`; `radius = None` selects ε₀ automatically.
pub fn track_branches(
    sys: &SystemSpec,
    u: &WaveProfile,
    grid: &[f64],
    radius: Option<f64>,
    tol: f64,
) -> Result<BranchSet, BlochError> {
    track_branches_counted(sys, u, grid, radius, critical_count(sys), tol)
}

/// As [`track_branches`] with an explicit number of branches, for waves whose unit multiplier carries
/// extra multiplicity beyond the modulation count.
pub fn track_branches_counted(
    sys: &SystemSpec,
    u: &WaveProfile,
    grid: &[f64],
    radius: Option<f64>,
    expected: usize,
    tol: f64,
) -> Result<BranchSet, BlochError> {
    if grid.is_empty() {
        return Err(BlochError::EmptyGrid);
    }
    let radius = match radius {
        Some(r) => r,
        None => auto_radius(sys, u, tol)?,
    };
    let mut xs = grid.to_vec();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let ctx = Ctx { sys, u, radius, expected, tol };
    let computed: Vec<(Point, f64)> = xs
        .par_iter()
        .map(|&x| critical_pairs(sys, u, x, radius, expected, tol))
        .collect::<Result<_, _>>()?;
    let mut liouville = computed.iter().map(|c| c.1).fold(0.0, f64::max);
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    let mut zero = None;
    for (p, _) in computed {
        if p.xi > 0.0 {
            pos.push(p);
        } else if p.xi < 0.0 {
            neg.push(p);
        } else {
            zero = Some(p);
        }
    }
    neg.reverse();
    let mut halvings = 0;
    let tp = follow(&ctx, pos, &mut halvings, &mut liouville)?;
    let tn = follow(&ctx, neg, &mut halvings, &mut liouville)?;
    let omega = u.omega;
    // Pair the two sides by continuity of the velocity through ξ = 0.
    let pairing: Vec<usize> = if tp.xi.is_empty() || tn.xi.is_empty() {
        (0..expected).collect()
    } else {
        let vp: Vec<Complex64> = tp.pairs[0].iter().map(|p| velocity(p.value, tp.xi[0], omega)).collect();
        let vn: Vec<Complex64> = tn.pairs[0].iter().map(|p| velocity(p.value, tn.xi[0], omega)).collect();
        permutations(expected)
            .into_iter()
            .min_by(|p, q| {
                let c = |p: &Vec<usize>| (0..expected).map(|a| (vn[p[a]] - vp[a]).norm()).sum::<f64>();
                c(p).total_cmp(&c(q))
            })
            .expect("nonempty")
    };
    let keep = |x: f64| xs.contains(&x);
    let mut branches = Vec::with_capacity(expected);
    for a in 0..expected {
        let mut pts: Vec<(f64, EigenPair, f64)> = Vec::new();
        for (i, &x) in tn.xi.iter().enumerate() {
            if keep(x) {
                pts.push((x, tn.pairs[i][pairing[a]].clone(), tn.min_overlap[i]));
            }
        }
        if let Some(z) = &zero {
            pts.push((0.0, z.pairs[a].clone(), 1.0));
        }
        for (i, &x) in tp.xi.iter().enumerate() {
            if keep(x) {
                pts.push((x, tp.pairs[i][a].clone(), tp.min_overlap[i]));
            }
        }
        pts.sort_by(|p, q| p.0.total_cmp(&q.0));
        branches.push(SpectralBranch {
            xi: pts.iter().map(|p| p.0).collect(),
            values: pts.iter().map(|p| p.1.value).collect(),
            velocities: pts.iter().map(|p| velocity(p.1.value, p.0, omega)).collect(),
            min_overlap: pts.iter().map(|p| p.2).fold(1.0, f64::min),
            vectors: pts.into_iter().map(|p| p.1.vector).collect(),
        });
    }
    Ok(BranchSet { branches, radius, expected, halvings, liouville_max: liouville, omega })
}
