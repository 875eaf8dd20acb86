//! Formula-free dimension estimators: covering numbers, the localized
//! covering statistic psi and its exponent Psi, and greedy centred packings
//! with the exponent test. These never consult the pressure formula, so
//! they serve as independent cross-checks of the symbolic dimension.

use crate::error::{MoranError, Result};
use crate::geometry::{
    limit_point, slice_in_ball, word_hull, ExtremeSide, Hull, TIE_TOL,
};
use crate::ifs_core::{dist, Point, ValidatedSpec, Word};

/// Default margin by which packing centers stay inside the host ball.
pub const DEFAULT_PACKING_MARGIN: f64 = 0.01;

/// Relative shrink applied to nearest-neighbour packing radii so that
/// tangent balls become strictly disjoint.
const PACKING_SHRINK: f64 = 1.0 - 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoverSide {
    Lower,
    Upper,
}

#[derive(Clone, Debug)]
pub struct CoverWitness {
    pub x: Point,
    pub big_r: f64,
    pub r: f64,
    pub count: usize,
    pub side: CoverSide,
}

#[derive(Clone, Debug)]
pub struct CoverNumber {
    pub lower: CoverWitness,
    pub upper: CoverWitness,
    /// Balls of radius r needed to cover one enumerated hull; the upper
    /// count already includes this factor.
    pub conversion: usize,
}

/// Certified limit-set samples inside a ball: the extreme coding points of
/// every slice cylinder near x, deduplicated and sorted.
fn sample_points_in_ball(
    spec: &ValidatedSpec,
    slice_scale: f64,
    x: &Point,
    reach: f64,
    cap: usize,
) -> Result<Vec<(Point, f64)>> {
    let words = slice_in_ball(spec, slice_scale.min(1.0), x, reach, cap)?;
    let target_err = (TIE_TOL * slice_scale).min(1e-15);
    let mut pts: Vec<(Point, f64)> = Vec::with_capacity(2 * words.len());
    for w in &words {
        for side in [ExtremeSide::First, ExtremeSide::Last] {
            let p = limit_point(spec, w, side, target_err)?;
            pts.push((p.point, p.error_radius));
        }
    }
    pts.sort_by(|a, b| {
        a.0[0]
            .total_cmp(&b.0[0])
            .then(a.0[1].total_cmp(&b.0[1]))
    });
    pts.dedup_by(|a, b| a.0 == b.0);
    Ok(pts)
}

/// Bracket N_r(B(x,R) ∩ K), the least number of closed r-balls covering the
/// part of the limit set within distance R of x.
///
/// Upper: hulls of T(2r / diam X) meeting the closed ball, each coverable
/// by one r-ball (so `conversion` is 1 unless the ambient set is wider than
/// a unit ball, in which case the per-hull ball count is recorded and
/// multiplied in). Lower: a greedy separated subset of certified limit-set
/// points — k points pairwise more than 2r apart inside the ball force at
/// least k covering balls.
pub fn covering_number(
    spec: &ValidatedSpec,
    x: &Point,
    big_r: f64,
    r: f64,
    cap: usize,
) -> Result<CoverNumber> {
    if !(r > 0.0 && r <= big_r && big_r <= 1.0) {
        return Err(MoranError::InvalidParameter(format!(
            "need 0 < r <= R <= 1, got r={r}, R={big_r}"
        )));
    }
    let dim = spec.dimension;
    let diam = spec.ambient.diameter(dim);
    // scale at which every hull has diameter at most 2r
    let hull_scale = (2.0 * r / diam).min(1.0);
    let conversion = 1usize; // one r-ball per hull at this scale
    let upper_count = if hull_scale >= 1.0 {
        1 // the root hull alone
    } else {
        let words = slice_in_ball(spec, hull_scale, x, big_r, cap)?;
        let mut count = 0usize;
        for w in &words {
            if word_hull(spec, w)?.dist_to_point(dim, x) <= big_r {
                count += 1;
            }
        }
        count.max(1)
    };

    // greedy separated set from certified points
    let pts = sample_points_in_ball(spec, r.min(big_r).min(0.999), x, big_r, cap)?;
    let mut chosen: Vec<(Point, f64)> = Vec::new();
    let mut max_err = 0.0f64;
    for (p, e) in &pts {
        if dist(dim, p, x) > big_r - e {
            continue; // containment not certified
        }
        // candidates are sorted by x, so in dimension 1 only the most
        // recently chosen point can be too close; the worst error radius
        // seen so far keeps the distance test certified
        let ok = if dim == 1 {
            chosen
                .last()
                .map(|(q, _)| dist(dim, p, q) > 2.0 * r + 2.0 * (e + max_err))
                .unwrap_or(true)
        } else {
            chosen
                .iter()
                .all(|(q, qe)| dist(dim, p, q) > 2.0 * r + 2.0 * (e + qe))
        };
        if ok {
            chosen.push((*p, *e));
            max_err = max_err.max(*e);
        }
    }
    let lower_count = chosen.len();
    Ok(CoverNumber {
        lower: CoverWitness {
            x: *x,
            big_r,
            r,
            count: lower_count,
            side: CoverSide::Lower,
        },
        upper: CoverWitness {
            x: *x,
            big_r,
            r,
            count: upper_count * conversion,
            side: CoverSide::Upper,
        },
        conversion,
    })
}

#[derive(Clone, Debug)]
pub struct PsiSample {
    pub r: f64,
    pub delta: f64,
    pub psi_lo: usize,
    pub psi_hi: usize,
    pub big_psi_lo: f64,
    pub big_psi_hi: f64,
    pub caveat: Option<String>,
}

/// Knobs for the psi and packing estimators.
#[derive(Clone, Copy, Debug)]
pub struct EstimatorBudget {
    pub slice_cap: usize,
    pub center_cap: usize,
}

impl Default for EstimatorBudget {
    fn default() -> Self {
        EstimatorBudget {
            slice_cap: 2_000_000,
            center_cap: 64,
        }
    }
}

fn max_hull_cluster(dim: usize, hulls: &[Hull], radius: f64) -> Result<usize> {
    let n = hulls.len();
    if dim == 1 {
        let mut los: Vec<f64> = hulls.iter().map(|h| h.lo[0]).collect();
        let mut his: Vec<f64> = hulls.iter().map(|h| h.hi[0]).collect();
        los.sort_by(f64::total_cmp);
        his.sort_by(f64::total_cmp);
        let mut best = 0usize;
        for h in hulls {
            let too_right = n - los.partition_point(|&a| a <= h.hi[0] + radius);
            let too_left = his.partition_point(|&b| b < h.lo[0] - radius);
            best = best.max(n - too_right - too_left);
        }
        Ok(best)
    } else {
        if n > 30_000 {
            return Err(MoranError::BudgetExceeded {
                used: n,
                cap: 30_000,
            });
        }
        let mut best = 0usize;
        for h0 in hulls {
            best = best.max(
                hulls
                    .iter()
                    .filter(|h| h0.dist_to_hull(dim, h) <= radius)
                    .count(),
            );
        }
        Ok(best)
    }
}

/// Bracket psi(r, delta) = sup over x in X of N_{r delta}(B(x,r) ∩ K), and
/// the exponent Psi = log psi / log(1/delta).
///
/// The upper bound maximizes the hull-cluster count over base cylinders:
/// every ball B(x,r) that meets k fine hulls keeps them pairwise within
/// hull distance 2r of one another. The lower bound takes the sup of
/// certified covering lower bounds over sampled centers (cylinder extreme
/// points, evenly subsampled under the center budget with a caveat).
pub fn psi(
    spec: &ValidatedSpec,
    r: f64,
    delta: f64,
    budget: &EstimatorBudget,
) -> Result<PsiSample> {
    if !(r > 0.0 && r <= 1.0 && delta > 0.0 && delta < 1.0) {
        return Err(MoranError::InvalidParameter(format!(
            "need r in (0,1] and delta in (0,1), got r={r}, delta={delta}"
        )));
    }
    let dim = spec.dimension;
    let diam = spec.ambient.diameter(dim);
    let fine_scale = (2.0 * r * delta / diam).min(0.999_999);
    let fine = spec.scale_slice(fine_scale, budget.slice_cap)?;
    let hulls: Vec<Hull> = fine
        .words
        .iter()
        .map(|w| word_hull(spec, w))
        .collect::<Result<_>>()?;
    let psi_hi = max_hull_cluster(dim, &hulls, 2.0 * r)?.max(1);

    // sample centers: extreme points of the coarse slice, subsampled
    let coarse: Vec<Word> = if r >= 1.0 {
        vec![Word::root()]
    } else {
        spec.scale_slice(r, budget.slice_cap)?.words
    };
    let mut caveat = None;
    let stride = coarse.len().div_ceil(budget.center_cap).max(1);
    if stride > 1 {
        caveat = Some(format!(
            "center sampling strided 1/{stride}: psi lower bound may be loose"
        ));
    }
    let mut psi_lo = 0usize;
    let target_err = (TIE_TOL * r).min(1e-15);
    for w in coarse.iter().step_by(stride) {
        for side in [ExtremeSide::First, ExtremeSide::Last] {
            let c = limit_point(spec, w, side, target_err)?;
            let cov = covering_number(spec, &c.point, r.min(1.0), r * delta, budget.slice_cap)?;
            psi_lo = psi_lo.max(cov.lower.count);
        }
    }
    let log_inv_delta = (1.0 / delta).ln();
    Ok(PsiSample {
        r,
        delta,
        psi_lo,
        psi_hi,
        big_psi_lo: (psi_lo.max(1) as f64).ln() / log_inv_delta,
        big_psi_hi: (psi_hi as f64).ln() / log_inv_delta,
        caveat,
    })
}

#[derive(Clone, Debug)]
pub struct EmpiricalAssouad {
    pub lo: f64,
    pub hi: f64,
    pub samples: Vec<PsiSample>,
    pub caveat: String,
}

/// Evaluate Psi over the schedules and report the bracket at the smallest
/// delta: [max_r Psi_lo, max_r Psi_hi]. This is a finite truncation of
/// lim_{delta->0} sup_r Psi(r, delta), so it is an estimate, not a
/// certificate — the caveat says so.
pub fn empirical_assouad(
    spec: &ValidatedSpec,
    r_schedule: &[f64],
    delta_schedule: &[f64],
    budget: &EstimatorBudget,
) -> Result<EmpiricalAssouad> {
    if r_schedule.is_empty() || delta_schedule.is_empty() {
        return Err(MoranError::InvalidParameter(
            "schedules must be non-empty".into(),
        ));
    }
    let delta_min = delta_schedule
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let mut samples = Vec::new();
    let mut lo = 0.0f64;
    let mut hi = 0.0f64;
    for &r in r_schedule {
        for &d in delta_schedule {
            let s = psi(spec, r, d, budget)?;
            if d == delta_min {
                lo = lo.max(s.big_psi_lo);
                hi = hi.max(s.big_psi_hi);
            }
            samples.push(s);
        }
    }
    Ok(EmpiricalAssouad {
        lo,
        hi,
        samples,
        caveat: format!(
            "finite truncation at delta={delta_min:.3e}; asymptotic limits not certified"
        ),
    })
}

#[derive(Clone, Debug)]
pub struct PackingRecord {
    pub x: Point,
    pub big_r: f64,
    /// (center, radius) pairs; pairwise disjoint and inside B(x, R).
    pub balls: Vec<(Point, f64)>,
    /// Result of the independent pairwise check.
    pub verified: bool,
}

impl PackingRecord {
    pub fn alpha_sum(&self, alpha: f64) -> f64 {
        self.balls.iter().map(|&(_, r)| r.powf(alpha)).sum()
    }
}

/// Build a centred packing of B(x,R) from depth-`depth` cylinder centers.
///
/// Every center inside B(x, R(1-margin)) is kept (coincident ones merged);
/// each ball's radius is the min of its cylinder scale, the room left to
/// the boundary of B(x,R), and just under half the distance to its nearest
/// selected neighbour. The record is re-verified with an O(k^2) check.
pub fn greedy_packing(
    spec: &ValidatedSpec,
    x: &Point,
    big_r: f64,
    depth: usize,
    margin: f64,
    cap: usize,
) -> Result<PackingRecord> {
    if !(big_r > 0.0 && big_r <= 1.0) {
        return Err(MoranError::InvalidParameter(format!(
            "need 0 < R <= 1, got {big_r}"
        )));
    }
    let dim = spec.dimension;
    let diam = spec.ambient.diameter(dim);
    // enumerate all words of the requested depth
    let mut words = vec![Word::root()];
    for _ in 0..depth {
        let mut next = Vec::new();
        for w in &words {
            let level = spec.level(w.depth() + 1)?;
            for j in 0..level.len() {
                next.push(spec.child_word(w, j)?);
                if next.len() > cap {
                    return Err(MoranError::BudgetExceeded {
                        used: next.len(),
                        cap,
                    });
                }
            }
        }
        words = next;
    }
    // candidate = (center of the cylinder hull, cylinder extent, dist to x);
    // the extent cap rho * diam X is the full cylinder diameter, so deep
    // interior balls reach their natural size while boundary balls stay
    // clipped by the host — exactly the asymmetry the exponent test reads
    let mut cands: Vec<(Point, f64, f64)> = Vec::new();
    for w in &words {
        let h = word_hull(spec, w)?;
        let c = h.center();
        let d = dist(dim, &c, x);
        if d <= big_r * (1.0 - margin) {
            cands.push((c, w.rho() * diam, d));
        }
    }
    // order by decreasing cylinder size, then position, and merge coincident
    cands.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then(a.0[0].total_cmp(&b.0[0]))
            .then(a.0[1].total_cmp(&b.0[1]))
    });
    let mut selected: Vec<(Point, f64, f64)> = Vec::new();
    for c in &cands {
        if selected
            .iter()
            .all(|s| dist(dim, &s.0, &c.0) > 1e-15)
        {
            selected.push(*c);
        }
    }
    let mut balls: Vec<(Point, f64)> = Vec::new();
    for (i, &(c, rho_r, d)) in selected.iter().enumerate() {
        let mut nn = f64::INFINITY;
        for (j, s) in selected.iter().enumerate() {
            if i != j {
                nn = nn.min(dist(dim, &c, &s.0));
            }
        }
        let radius = rho_r.min(big_r - d).min(PACKING_SHRINK * nn / 2.0);
        if radius > 0.0 {
            balls.push((c, radius));
        }
    }
    // independent validity check
    let mut verified = true;
    for (i, &(c1, r1)) in balls.iter().enumerate() {
        if dist(dim, &c1, x) + r1 > big_r + TIE_TOL {
            verified = false;
        }
        for &(c2, r2) in balls.iter().skip(i + 1) {
            if dist(dim, &c1, &c2) < r1 + r2 {
                verified = false;
            }
        }
    }
    Ok(PackingRecord {
        x: *x,
        big_r,
        balls,
        verified,
    })
}

/// Max over packings of sum r_i^alpha / R^alpha. Bounded in alpha above the
/// Assouad dimension, divergent along some sequence below it; this routine
/// only reports the statistic.
pub fn packing_exponent_test(alpha: f64, packings: &[PackingRecord]) -> f64 {
    packings
        .iter()
        .map(|p| p.alpha_sum(alpha) / p.big_r.powf(alpha))
        .fold(0.0, f64::max)
}
