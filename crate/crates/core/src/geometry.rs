//! Geometric realization of cylinders: composed maps, hulls, neighbourhood
//! counts, branching counts, and the separation/regularity checkers.
//!
//! Membership of a point in the limit set is only semi-decidable from finite
//! data, so every geometric count is reported as a certified interval:
//! uppers come from hull over-approximation, lowers from explicit witness
//! points that provably lie in the limit set up to a tracked error radius.

use std::cmp::Ordering;

use crate::error::{MoranError, Result};
use crate::ifs_core::{
    dist, mat_mul, mat_vec, AmbientSet, LevelStructure, Mat, Point, ValidatedSpec, Word,
    MAT_IDENTITY,
};

/// Symmetric slack for boundary-contact decisions, applied wherever closed
/// balls can touch cylinders exactly at a point.
pub const TIE_TOL: f64 = 1e-12;

/// The composed map of a word, S_{1,j_1} following ... following S_{n,j_n}.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineComposite {
    /// Product of the contraction ratios along the word.
    pub scale: f64,
    /// Full linear part (orthogonal times scale).
    pub linear: Mat,
    pub offset: Point,
}

impl AffineComposite {
    pub fn identity() -> Self {
        AffineComposite {
            scale: 1.0,
            linear: MAT_IDENTITY,
            offset: [0.0, 0.0],
        }
    }

    pub fn apply(&self, x: &Point) -> Point {
        let v = mat_vec(&self.linear, x);
        [v[0] + self.offset[0], v[1] + self.offset[1]]
    }
}

/// Compose the maps selected by a word, outermost (level 1) first.
pub fn composite(spec: &ValidatedSpec, word: &Word) -> Result<AffineComposite> {
    let mut acc = AffineComposite::identity();
    for (i, &j) in word.indices().iter().enumerate() {
        let map = &spec.level(i + 1)?.maps[j as usize];
        // acc := acc ∘ S, i.e. x ↦ acc(S(x))
        let mut s_lin = map.orthogonal;
        for row in &mut s_lin {
            row[0] *= map.ratio;
            row[1] *= map.ratio;
        }
        let linear = mat_mul(&acc.linear, &s_lin);
        let offset = acc.apply(&map.translation);
        acc = AffineComposite {
            scale: acc.scale * map.ratio,
            linear,
            offset,
        };
    }
    Ok(acc)
}

/// Axis-aligned bounding box of a cylinder S_w(X).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hull {
    pub lo: Point,
    pub hi: Point,
}

impl Hull {
    pub fn center(&self) -> Point {
        [
            (self.lo[0] + self.hi[0]) / 2.0,
            (self.lo[1] + self.hi[1]) / 2.0,
        ]
    }

    pub fn dist_to_point(&self, dim: usize, x: &Point) -> f64 {
        let mut acc = 0.0f64;
        for d in 0..dim {
            let g = (self.lo[d] - x[d]).max(x[d] - self.hi[d]).max(0.0);
            acc += g * g;
        }
        acc.sqrt()
    }

    pub fn dist_to_hull(&self, dim: usize, other: &Hull) -> f64 {
        let mut acc = 0.0f64;
        for d in 0..dim {
            let g = (self.lo[d] - other.hi[d])
                .max(other.lo[d] - self.hi[d])
                .max(0.0);
            acc += g * g;
        }
        acc.sqrt()
    }
}

/// Bounding box of the image of the ambient set under a composite.
pub fn hull_of(spec: &ValidatedSpec, comp: &AffineComposite) -> Hull {
    match &spec.ambient {
        AmbientSet::Box { lo, hi } => {
            let c = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
            let h = [(hi[0] - lo[0]) / 2.0, (hi[1] - lo[1]) / 2.0];
            let ic = comp.apply(&c);
            let hx = comp.linear[0][0].abs() * h[0] + comp.linear[0][1].abs() * h[1];
            let hy = comp.linear[1][0].abs() * h[0] + comp.linear[1][1].abs() * h[1];
            Hull {
                lo: [ic[0] - hx, ic[1] - hy],
                hi: [ic[0] + hx, ic[1] + hy],
            }
        }
        AmbientSet::Ball { center, radius } => {
            let ic = comp.apply(center);
            let r = comp.scale * radius;
            Hull {
                lo: [ic[0] - r, ic[1] - r],
                hi: [ic[0] + r, ic[1] + r],
            }
        }
    }
}

pub fn word_hull(spec: &ValidatedSpec, word: &Word) -> Result<Hull> {
    Ok(hull_of(spec, &composite(spec, word)?))
}

/// Which endpoint of the symbol range an extension repeats.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExtremeSide {
    First,
    Last,
}

/// A point of the limit set inside a cylinder, up to `error_radius`.
#[derive(Clone, Copy, Debug)]
pub struct CodingPoint {
    pub point: Point,
    pub error_radius: f64,
}

/// Image of the ambient center under the word extended by a fixed number of
/// repeated-first-index levels. The error radius is the scale of the
/// extended word times the circumradius of X; with depth 0 this is just the
/// hull center of the word itself.
pub fn coding_point(
    spec: &ValidatedSpec,
    word: &Word,
    depth_extension: usize,
) -> Result<CodingPoint> {
    let mut w = word.clone();
    for _ in 0..depth_extension {
        match spec.child_word(&w, 0) {
            Ok(c) => w = c,
            Err(MoranError::LevelBudget { .. }) => break,
            Err(e) => return Err(e),
        }
    }
    let comp = composite(spec, &w)?;
    Ok(CodingPoint {
        point: comp.apply(&spec.ambient.center()),
        error_radius: comp.scale * spec.ambient.circumradius(spec.dimension),
    })
}

/// Drive a repeated-extreme-index extension until the residual scale is at
/// most `target_error` (in absolute units), yielding a near-exact point of
/// the limit set inside the cylinder: the leftmost or rightmost coding
/// point of the word. Generator specs may run out of levels first, in which
/// case the reported error radius is honest but larger.
pub fn limit_point(
    spec: &ValidatedSpec,
    word: &Word,
    side: ExtremeSide,
    target_error: f64,
) -> Result<CodingPoint> {
    let circ = spec.ambient.circumradius(spec.dimension);
    let mut w = word.clone();
    for _ in 0..4096 {
        if w.rho() * circ <= target_error {
            break;
        }
        let level = match spec.level(w.depth() + 1) {
            Ok(l) => l,
            Err(MoranError::LevelBudget { .. }) => break,
            Err(e) => return Err(e),
        };
        let j = match side {
            ExtremeSide::First => 0,
            ExtremeSide::Last => level.len() - 1,
        };
        w = spec.child_word(&w, j)?;
    }
    let comp = composite(spec, &w)?;
    Ok(CodingPoint {
        point: comp.apply(&spec.ambient.center()),
        error_radius: comp.scale * circ,
    })
}

/// Enumerate the members of T(r) whose hull comes within `reach` of x.
/// Subtrees are pruned on hull distance, which is sound because invariance
/// nests every descendant hull inside its ancestor's.
pub fn slice_in_ball(
    spec: &ValidatedSpec,
    r: f64,
    x: &Point,
    reach: f64,
    cap: usize,
) -> Result<Vec<Word>> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(MoranError::InvalidParameter(format!(
            "slice scale must be in (0,1], got {r}"
        )));
    }
    let dim = spec.dimension;
    let mut out: Vec<Word> = Vec::new();
    let mut stack = vec![Word::root()];
    let mut visited = 0usize;
    while let Some(w) = stack.pop() {
        let level = spec.level(w.depth() + 1)?;
        for j in 0..level.len() {
            let c = spec.child_word(&w, j)?;
            visited += 1;
            if visited > cap.saturating_mul(8).max(cap) {
                return Err(MoranError::BudgetExceeded { used: visited, cap });
            }
            if word_hull(spec, &c)?.dist_to_point(dim, x) > reach {
                continue;
            }
            if c.scale_le(r) {
                out.push(c);
                if out.len() > cap {
                    return Err(MoranError::BudgetExceeded {
                        used: out.len(),
                        cap,
                    });
                }
            } else {
                stack.push(c);
            }
        }
    }
    out.sort_by(|a, b| a.indices().cmp(b.indices()));
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct NeighbourhoodCount {
    pub lower: usize,
    pub upper: usize,
    pub x: Point,
    pub r: f64,
    pub refinement_depth: usize,
}

/// Bracket the number of T(r) cylinders whose limit-set part meets the
/// closed ball B(x, r).
///
/// Upper: cylinders whose hull meets the closed ball. Lower: cylinders
/// containing a certified limit-set point within distance r of x; the
/// certificate descends `refinement_depth` levels (pruned on hulls), then
/// takes extreme coding points with near-zero residual error. Boundary
/// contact is decided up to the documented tie tolerance.
pub fn neighbourhood_count(
    spec: &ValidatedSpec,
    x: &Point,
    r: f64,
    refinement_depth: usize,
    cap: usize,
) -> Result<NeighbourhoodCount> {
    let dim = spec.dimension;
    let candidates = slice_in_ball(spec, r, x, r + TIE_TOL, cap)?;
    let mut upper = 0usize;
    let mut lower = 0usize;
    let target_err = (TIE_TOL * r).min(1e-15);
    for q in &candidates {
        if word_hull(spec, q)?.dist_to_point(dim, x) > r {
            continue;
        }
        upper += 1;
        // refine below q, pruning branches that cannot reach the ball
        let mut witnessed = false;
        let mut stack = vec![q.clone()];
        let mut nodes = 0usize;
        'refine: while let Some(w) = stack.pop() {
            nodes += 1;
            if nodes > cap {
                return Err(MoranError::BudgetExceeded { used: nodes, cap });
            }
            if w.depth() >= q.depth() + refinement_depth || spec.level(w.depth() + 1).is_err() {
                for side in [ExtremeSide::First, ExtremeSide::Last] {
                    let p = limit_point(spec, &w, side, target_err)?;
                    if dist(dim, &p.point, x) <= r - p.error_radius + TIE_TOL {
                        witnessed = true;
                        break 'refine;
                    }
                }
                continue;
            }
            let level = spec.level(w.depth() + 1)?;
            for j in 0..level.len() {
                let c = spec.child_word(&w, j)?;
                if word_hull(spec, &c)?.dist_to_point(dim, x) <= r + TIE_TOL {
                    stack.push(c);
                }
            }
        }
        if witnessed {
            lower += 1;
        }
    }
    Ok(NeighbourhoodCount {
        lower,
        upper,
        x: *x,
        r,
        refinement_depth,
    })
}

/// Knobs for the sup-over-x neighbourhood search.
#[derive(Clone, Copy, Debug)]
pub struct MaxNbhdStrategy {
    /// Max sample centers drawn from cylinder extreme points.
    pub center_cap: usize,
    /// Slice enumeration budget.
    pub slice_cap: usize,
    /// Skip the (more expensive) lower-bound sampling.
    pub upper_only: bool,
}

impl Default for MaxNbhdStrategy {
    fn default() -> Self {
        MaxNbhdStrategy {
            center_cap: 4096,
            slice_cap: 400_000,
            upper_only: false,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct MaxNbhd {
    pub r: f64,
    pub m_lower: usize,
    pub m_upper: usize,
}

/// Bracket M(r), the sup over limit-set points x of the neighbourhood count.
///
/// Upper: every x lies in the hull of the slice cylinder containing it, so
/// M(r) is at most the max over base cylinders Q0 of the number of slice
/// cylinders within hull distance r of Q0. Lower: evaluate certified counts
/// at sampled limit-set points (each cylinder's leftmost and rightmost
/// coding points).
pub fn max_neighbourhood(
    spec: &ValidatedSpec,
    r: f64,
    strategy: &MaxNbhdStrategy,
) -> Result<MaxNbhd> {
    let dim = spec.dimension;
    let slice = spec.scale_slice(r, strategy.slice_cap)?;
    let words = &slice.words;
    let n = words.len();
    let hulls: Vec<Hull> = words
        .iter()
        .map(|w| word_hull(spec, w))
        .collect::<Result<_>>()?;

    let m_upper = if dim == 1 {
        // sorted endpoint arrays turn each base-cylinder count into two
        // binary searches
        let mut los: Vec<f64> = hulls.iter().map(|h| h.lo[0]).collect();
        let mut his: Vec<f64> = hulls.iter().map(|h| h.hi[0]).collect();
        los.sort_by(f64::total_cmp);
        his.sort_by(f64::total_cmp);
        let mut best = 0usize;
        for h in &hulls {
            let too_right = n - los.partition_point(|&a| a <= h.hi[0] + r);
            let too_left = his.partition_point(|&b| b < h.lo[0] - r);
            best = best.max(n - too_right - too_left);
        }
        best
    } else {
        if n > 30_000 {
            return Err(MoranError::BudgetExceeded {
                used: n,
                cap: 30_000,
            });
        }
        let mut best = 0usize;
        for h0 in &hulls {
            let count = hulls
                .iter()
                .filter(|h| h0.dist_to_hull(dim, h) <= r)
                .count();
            best = best.max(count);
        }
        best
    };

    let mut m_lower = 0usize;
    if !strategy.upper_only {
        // certified limit-set points, two per cylinder (subsampled evenly)
        let stride = (2 * n).div_ceil(strategy.center_cap).max(1);
        let target_err = (TIE_TOL * r).min(1e-15);
        let mut points: Vec<CodingPoint> = Vec::new();
        for w in words {
            for side in [ExtremeSide::First, ExtremeSide::Last] {
                points.push(limit_point(spec, w, side, target_err)?);
            }
        }
        // map each point back to the cylinder index that owns it
        let owners: Vec<usize> = (0..n).flat_map(|i| [i, i]).collect();
        let centers: Vec<usize> = (0..points.len()).step_by(stride).collect();
        if dim == 1 {
            let mut order: Vec<usize> = (0..points.len()).collect();
            order.sort_by(|&a, &b| points[a].point[0].total_cmp(&points[b].point[0]));
            let xs: Vec<f64> = order.iter().map(|&i| points[i].point[0]).collect();
            for &ci in &centers {
                let c = &points[ci];
                let x = c.point;
                let reach = r + TIE_TOL;
                let a = xs.partition_point(|&p| p < x[0] - reach);
                let b = xs.partition_point(|&p| p <= x[0] + reach);
                let mut hit = vec![false; n];
                let mut count = 0usize;
                for &oi in &order[a..b] {
                    let p = &points[oi];
                    let slack = r - p.error_radius - c.error_radius + TIE_TOL;
                    if dist(dim, &p.point, &x) <= slack && !hit[owners[oi]] {
                        hit[owners[oi]] = true;
                        count += 1;
                    }
                }
                m_lower = m_lower.max(count);
            }
        } else {
            for &ci in &centers {
                let c = &points[ci];
                let mut hit = vec![false; n];
                let mut count = 0usize;
                for (oi, p) in points.iter().enumerate() {
                    let slack = r - p.error_radius - c.error_radius + TIE_TOL;
                    if dist(dim, &p.point, &c.point) <= slack && !hit[owners[oi]] {
                        hit[owners[oi]] = true;
                        count += 1;
                    }
                }
                m_lower = m_lower.max(count);
            }
        }
    }
    Ok(MaxNbhd {
        r,
        m_lower,
        m_upper,
    })
}

fn prefix_range(words: &[Word], prefix: &[u32]) -> (usize, usize) {
    let cmp = |w: &Word| -> Ordering {
        let wi = w.indices();
        let k = prefix.len().min(wi.len());
        wi[..k]
            .cmp(&prefix[..k])
            .then(if wi.len() >= prefix.len() {
                Ordering::Equal
            } else {
                Ordering::Less
            })
    };
    let lo = words.partition_point(|w| cmp(w) == Ordering::Less);
    let hi = words.partition_point(|w| cmp(w) != Ordering::Greater);
    (lo, hi)
}

/// The geometric offspring count beta(r): the max over parents of slice
/// cylinders of the number of slice cylinders contained in that parent.
/// Containment among cylinders is prefix extension, so this is purely
/// symbolic and exact.
pub fn branching_count(spec: &ValidatedSpec, r: f64, cap: usize) -> Result<usize> {
    let slice = spec.scale_slice(r, cap)?;
    let words = &slice.words;
    let mut best = 0usize;
    let mut i = 0usize;
    while i < words.len() {
        let depth = words[i].depth();
        let parent: Vec<u32> = words[i].indices()[..depth - 1].to_vec();
        let (lo, hi) = prefix_range(words, &parent);
        best = best.max(hi - lo);
        // skip past everything sharing this parent (contiguous in lex order)
        i = i.max(hi).max(i + 1);
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OscStatus {
    Pass,
    Fail,
    Unknown,
}

#[derive(Clone, Debug)]
pub struct OscWitness {
    pub level: usize,
    pub first: usize,
    pub second: usize,
    /// Overlap interval for d=1 (lo, hi); penetration depth estimate for d=2.
    pub overlap: (f64, f64),
}

#[derive(Clone, Debug)]
pub struct OscReport {
    pub status: OscStatus,
    pub witness: Option<OscWitness>,
    pub levels_checked: usize,
    pub note: String,
}

/// Oriented box for the separating-axis test in the plane.
struct Obb {
    center: Point,
    axes: [Point; 2],
    half: [f64; 2],
}

fn obb_separated(a: &Obb, b: &Obb) -> f64 {
    // most-separating axis: positive = gap, negative = penetration
    let mut best = f64::NEG_INFINITY;
    for axis in a.axes.iter().chain(b.axes.iter()) {
        let d = (b.center[0] - a.center[0]) * axis[0] + (b.center[1] - a.center[1]) * axis[1];
        let ra = a.half[0] * (a.axes[0][0] * axis[0] + a.axes[0][1] * axis[1]).abs()
            + a.half[1] * (a.axes[1][0] * axis[0] + a.axes[1][1] * axis[1]).abs();
        let rb = b.half[0] * (b.axes[0][0] * axis[0] + b.axes[0][1] * axis[1]).abs()
            + b.half[1] * (b.axes[1][0] * axis[0] + b.axes[1][1] * axis[1]).abs();
        best = best.max(d.abs() - ra - rb);
    }
    best
}

/// Open set condition with respect to the interior of the ambient set:
/// within each level, images of the interior must be pairwise disjoint.
/// Exact interval arithmetic in dimension 1; separating-axis test with a
/// symmetric 1e-12 band (reported as `unknown`) in dimension 2.
pub fn check_osc(spec: &ValidatedSpec, max_level: Option<usize>) -> Result<OscReport> {
    let dim = spec.dimension;
    let levels = max_level
        .unwrap_or(spec.fundamental_domain())
        .min(spec.max_level().unwrap_or(usize::MAX));
    let mut saw_unknown = false;
    for n in 1..=levels {
        let level = spec.level(n)?;
        if dim == 1 {
            let (a, b) = match &spec.ambient {
                AmbientSet::Box { lo, hi } => (lo[0], hi[0]),
                AmbientSet::Ball { center, radius } => (center[0] - radius, center[0] + radius),
            };
            let mut imgs: Vec<(f64, f64, usize)> = level
                .maps
                .iter()
                .enumerate()
                .map(|(j, m)| {
                    let p = m.apply(&[a, 0.0])[0];
                    let q = m.apply(&[b, 0.0])[0];
                    (p.min(q), p.max(q), j)
                })
                .collect();
            imgs.sort_by(|u, v| u.0.total_cmp(&v.0));
            for w in imgs.windows(2) {
                if w[1].0 < w[0].1 {
                    return Ok(OscReport {
                        status: OscStatus::Fail,
                        witness: Some(OscWitness {
                            level: n,
                            first: w[0].2,
                            second: w[1].2,
                            overlap: (w[1].0, w[0].1),
                        }),
                        levels_checked: n,
                        note: "open image intervals overlap".into(),
                    });
                }
            }
        } else {
            let (c, h) = match &spec.ambient {
                AmbientSet::Box { lo, hi } => (
                    [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0],
                    [(hi[0] - lo[0]) / 2.0, (hi[1] - lo[1]) / 2.0],
                ),
                AmbientSet::Ball { .. } => {
                    return Ok(OscReport {
                        status: OscStatus::Unknown,
                        witness: None,
                        levels_checked: 0,
                        note: "planar OSC check requires a box ambient set".into(),
                    })
                }
            };
            let obbs: Vec<Obb> = level
                .maps
                .iter()
                .map(|m| Obb {
                    center: m.apply(&c),
                    axes: [
                        [m.orthogonal[0][0], m.orthogonal[1][0]],
                        [m.orthogonal[0][1], m.orthogonal[1][1]],
                    ],
                    half: [m.ratio * h[0], m.ratio * h[1]],
                })
                .collect();
            for i in 0..obbs.len() {
                for j in (i + 1)..obbs.len() {
                    let sep = obb_separated(&obbs[i], &obbs[j]);
                    if sep < -TIE_TOL {
                        return Ok(OscReport {
                            status: OscStatus::Fail,
                            witness: Some(OscWitness {
                                level: n,
                                first: i,
                                second: j,
                                overlap: (sep, 0.0),
                            }),
                            levels_checked: n,
                            note: "image boxes interpenetrate".into(),
                        });
                    }
                    if sep <= TIE_TOL {
                        saw_unknown = true;
                    }
                }
            }
        }
    }
    Ok(OscReport {
        status: if saw_unknown {
            OscStatus::Unknown
        } else {
            OscStatus::Pass
        },
        witness: None,
        levels_checked: levels,
        note: if saw_unknown {
            "near-touching images within tie tolerance".into()
        } else {
            String::new()
        },
    })
}

/// Certified lower bound on the cone constant of the interior of X:
/// inf over x in X and r in (0,1) of r^{-d} Leb(B(x,r) ∩ X°).
pub fn cone_constant(spec: &ValidatedSpec) -> Option<f64> {
    let dim = spec.dimension;
    match &spec.ambient {
        AmbientSet::Box { lo, hi } => {
            if dim == 1 {
                let len = hi[0] - lo[0];
                if len > 0.0 {
                    Some(len.min(1.0))
                } else {
                    None
                }
            } else {
                let side = (hi[0] - lo[0]).min(hi[1] - lo[1]);
                if side > 0.0 {
                    Some(std::f64::consts::FRAC_PI_4 * side.min(1.0) * side.min(1.0))
                } else {
                    None
                }
            }
        }
        AmbientSet::Ball { radius, .. } => {
            if *radius <= 0.0 {
                None
            } else if dim == 1 {
                Some((2.0 * radius).min(1.0))
            } else {
                Some(std::f64::consts::PI / 8.0 * radius.min(1.0) * radius.min(1.0))
            }
        }
    }
}

/// Which sufficient condition certified the bounded neighbourhood property.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BncClause {
    /// OSC + cone condition + bounded branching.
    ConeBranching,
    /// OSC + homogeneous levels + bounded branching.
    HomogeneousBranching,
    /// OSC + contraction ratios uniformly bounded below.
    RatioLowerBound,
}

pub use crate::pressure::BncStatus;

#[derive(Clone, Debug)]
pub struct BncReport {
    pub flag: BncStatus,
    /// Every sufficient condition that was verified (possibly several).
    pub clauses: Vec<BncClause>,
    /// Explicit neighbourhood bound when verified.
    pub bound: Option<f64>,
    pub r_min: f64,
    /// Empirical branching along the schedule.
    pub branching: Vec<(f64, usize)>,
    pub notes: Vec<String>,
}

/// Whether the branching count stays bounded along the whole sequence, and
/// a certified bound when it does. Periodic tails always qualify: ratios on
/// the fundamental domain are bounded below, capping the depth spread of
/// any slice below a common parent.
fn branching_status(spec: &ValidatedSpec) -> (Option<bool>, Option<f64>) {
    match &spec.structure {
        LevelStructure::Periodic { .. } => {
            let r_min = spec.min_ratio();
            let r_max = spec.max_ratio();
            let j_max = (1..=spec.fundamental_domain())
                .map(|n| spec.level(n).map(|l| l.len()).unwrap_or(0))
                .max()
                .unwrap_or(0) as f64;
            // a slice member sits at most 1 + ln(r_min)/ln(r_max) levels
            // below the common parent
            let depth = 1.0 + (r_min.ln() / r_max.ln()).floor();
            (Some(true), Some(j_max.powf(depth)))
        }
        LevelStructure::Finite { certificate, .. } => (certificate.branching_bounded, None),
    }
}

/// Explicit neighbourhood bound for the uniformly-bounded-ratio clause:
/// r_min^{-d} (2 diam X)^d vol(B(0,1)) / vol(X°).
fn ratio_clause_bound(spec: &ValidatedSpec, r_min: f64) -> Option<f64> {
    let d = spec.dimension;
    let diam = spec.ambient.diameter(d);
    let (unit_ball, interior) = match &spec.ambient {
        AmbientSet::Box { lo, hi } => {
            let vol = if d == 1 {
                hi[0] - lo[0]
            } else {
                (hi[0] - lo[0]) * (hi[1] - lo[1])
            };
            (if d == 1 { 2.0 } else { std::f64::consts::PI }, vol)
        }
        AmbientSet::Ball { radius, .. } => {
            let vol = if d == 1 {
                2.0 * radius
            } else {
                std::f64::consts::PI * radius * radius
            };
            (if d == 1 { 2.0 } else { std::f64::consts::PI }, vol)
        }
    };
    if interior <= 0.0 || r_min <= 0.0 {
        return None;
    }
    Some(r_min.powi(-(d as i32)) * (2.0 * diam).powi(d as i32) * unit_ball / interior)
}

/// Decide the bounded neighbourhood condition from the known sufficient
/// criteria, falsifying first where the structure is known to rule it out.
pub fn bnc_verdict(
    spec: &ValidatedSpec,
    r_schedule: &[f64],
    slice_cap: usize,
) -> Result<BncReport> {
    let osc = check_osc(spec, None)?;
    let mut notes = Vec::new();
    let mut branching = Vec::new();
    for &r in r_schedule {
        match branching_count(spec, r, slice_cap) {
            Ok(b) => branching.push((r, b)),
            Err(MoranError::BudgetExceeded { .. }) => {
                notes.push(format!("branching at r={r:.3e} skipped (budget)"));
            }
            Err(MoranError::LevelBudget { .. }) => {
                notes.push(format!("branching at r={r:.3e} needs unmaterialized levels"));
            }
            Err(e) => return Err(e),
        }
    }
    let (b_status, b_bound) = branching_status(spec);

    // ratio lower bound only counts when it holds along the whole sequence
    let r_min_certified = match &spec.structure {
        LevelStructure::Periodic { .. } => true,
        LevelStructure::Finite { certificate, .. } => {
            certificate.rmin_positive == Some(true)
        }
    };
    let r_min = spec.min_ratio();

    if b_status == Some(false) {
        notes.push("branching is certified unbounded, which the bounded neighbourhood condition cannot survive".into());
        return Ok(BncReport {
            flag: BncStatus::Falsified,
            clauses: vec![],
            bound: None,
            r_min,
            branching,
            notes,
        });
    }

    let mut clauses = Vec::new();
    let mut bound = None;
    if osc.status == OscStatus::Pass {
        if r_min_certified && r_min > 0.0 {
            clauses.push(BncClause::RatioLowerBound);
            bound = ratio_clause_bound(spec, r_min);
        }
        if b_status == Some(true) {
            if cone_constant(spec).is_some() {
                clauses.push(BncClause::ConeBranching);
            }
            if spec.homogeneous() {
                clauses.push(BncClause::HomogeneousBranching);
            }
            if bound.is_none() {
                bound = b_bound;
                if b_bound.is_some() {
                    notes.push("bound reported is the certified branching bound".into());
                }
            }
        }
    } else {
        notes.push("open set condition not verified; sufficient criteria unavailable".into());
    }

    let flag = if clauses.is_empty() {
        if branching.len() >= 2 {
            let first = branching.first().unwrap().1;
            let last = branching.last().unwrap().1;
            if last >= 4 * first.max(1) {
                notes.push(format!(
                    "empirical branching grows from {first} to {last} along the schedule"
                ));
            }
        }
        BncStatus::Unknown
    } else {
        BncStatus::Verified
    };
    Ok(BncReport {
        flag,
        clauses,
        bound,
        r_min,
        branching,
        notes,
    })
}

/// Everything the condition checker knows about one spec.
#[derive(Clone, Debug)]
pub struct ConditionReport {
    pub osc: OscReport,
    pub cone_constant: Option<f64>,
    pub r_min: f64,
    pub branching: Vec<(f64, usize)>,
    pub bnc: BncReport,
}

/// Default geometric schedule r = 2^{-k}, k = 1..=k_max.
pub fn geometric_schedule(k_max: usize) -> Vec<f64> {
    (1..=k_max).map(|k| 2.0f64.powi(-(k as i32))).collect()
}

pub fn condition_report(
    spec: &ValidatedSpec,
    r_schedule: &[f64],
    slice_cap: usize,
) -> Result<ConditionReport> {
    let bnc = bnc_verdict(spec, r_schedule, slice_cap)?;
    Ok(ConditionReport {
        osc: check_osc(spec, None)?,
        cone_constant: cone_constant(spec),
        r_min: spec.min_ratio(),
        branching: bnc.branching.clone(),
        bnc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ifs_core::{
        cantor_spec, validate_spec, AmbientSet, IFSSpec, LevelSystem, Similarity, Tail,
        ValidatedSpec,
    };

    fn cantor() -> ValidatedSpec {
        validate_spec(&cantor_spec()).unwrap()
    }

    #[test]
    fn composite_examples() {
        let spec = cantor();
        // second map at level 1, first map at level 2: x -> x/9 + 2/3
        let w = spec.word_from_indices(&[1, 0]).unwrap();
        let c = composite(&spec, &w).unwrap();
        assert!((c.apply(&[0.0, 0.0])[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((c.apply(&[1.0, 0.0])[0] - (1.0 / 9.0 + 2.0 / 3.0)).abs() < 1e-15);
        assert_eq!(c.scale, 1.0 / 9.0);

        let id = composite(&spec, &Word::root()).unwrap();
        assert_eq!(id, AffineComposite::identity());

        let w = spec.word_from_indices(&[0, 0, 0]).unwrap();
        let c = composite(&spec, &w).unwrap();
        assert!((c.apply(&[1.0, 0.0])[0] - 1.0 / 27.0).abs() < 1e-15);
        assert_eq!(c.apply(&[0.0, 0.0])[0], 0.0);
    }

    #[test]
    fn coding_point_examples() {
        let spec = cantor();
        let w = spec.word_from_indices(&[1]).unwrap();
        let cp = coding_point(&spec, &w, 20).unwrap();
        assert!((cp.point[0] - 2.0 / 3.0).abs() <= 3.0f64.powi(-21));
        assert!(cp.error_radius <= 0.5 * 3.0f64.powi(-21));

        let w = spec.word_from_indices(&[0, 0, 0, 0]).unwrap();
        let cp = coding_point(&spec, &w, 30).unwrap();
        assert!(cp.point[0].abs() < 1e-15);

        let w = spec.word_from_indices(&[1]).unwrap();
        let cp = coding_point(&spec, &w, 0).unwrap();
        assert!((cp.point[0] - 5.0 / 6.0).abs() < 1e-15); // hull center
        assert!((cp.error_radius - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn limit_points_are_cylinder_extremes() {
        let spec = cantor();
        let w = spec.word_from_indices(&[1]).unwrap();
        let left = limit_point(&spec, &w, ExtremeSide::First, 1e-15).unwrap();
        let right = limit_point(&spec, &w, ExtremeSide::Last, 1e-15).unwrap();
        assert!((left.point[0] - 2.0 / 3.0).abs() < 1e-13);
        assert!((right.point[0] - 1.0).abs() < 1e-13);
    }

    #[test]
    fn nbhd_count_examples() {
        let spec = cantor();
        let c = neighbourhood_count(&spec, &[0.0, 0.0], 1.0 / 3.0, 8, 100_000).unwrap();
        assert_eq!((c.lower, c.upper), (1, 1));

        let c = neighbourhood_count(&spec, &[1.0 / 3.0, 0.0], 1.0 / 3.0, 8, 100_000).unwrap();
        assert_eq!((c.lower, c.upper), (2, 2));

        let c = neighbourhood_count(&spec, &[0.0, 0.0], 1.0 / 9.0, 8, 100_000).unwrap();
        assert_eq!((c.lower, c.upper), (1, 1));
    }

    #[test]
    fn nbhd_sandwich_under_refinement() {
        let spec = cantor();
        let shallow = neighbourhood_count(&spec, &[0.51, 0.0], 0.07, 2, 200_000).unwrap();
        let deep = neighbourhood_count(&spec, &[0.51, 0.0], 0.07, 10, 200_000).unwrap();
        assert!(shallow.lower <= deep.lower);
        assert!(deep.lower <= deep.upper);
        assert_eq!(shallow.upper, deep.upper);
    }

    #[test]
    fn max_nbhd_cantor() {
        let spec = cantor();
        let s = MaxNbhdStrategy::default();
        let m = max_neighbourhood(&spec, 1.0 / 3.0, &s).unwrap();
        assert_eq!((m.m_lower, m.m_upper), (2, 2));
        let m = max_neighbourhood(&spec, 1.0 / 9.0, &s).unwrap();
        assert_eq!((m.m_lower, m.m_upper), (2, 2));
    }

    #[test]
    fn branching_cantor_and_homogeneous() {
        let spec = cantor();
        for r in [0.5, 1.0 / 3.0, 0.1, 0.04] {
            assert_eq!(branching_count(&spec, r, 100_000).unwrap(), 2);
        }
        let raw = IFSSpec {
            dimension: 1,
            ambient: AmbientSet::unit_interval(),
            prefix: vec![],
            tail: Tail::Periodic(vec![LevelSystem::new(
                (0..4)
                    .map(|j| Similarity::interval(0.2, j as f64 * 0.25, false))
                    .collect(),
            )]),
        };
        let spec = validate_spec(&raw).unwrap();
        assert_eq!(branching_count(&spec, 0.1, 100_000).unwrap(), 4);
    }

    #[test]
    fn branching_inhomogeneous_enumeration() {
        // ratios {1/2, 1/16}: T(1/4) = {11, 12, 2}; the root parents all
        // three, so beta = 3 (verified by the brute slice below)
        let raw = IFSSpec {
            dimension: 1,
            ambient: AmbientSet::unit_interval(),
            prefix: vec![],
            tail: Tail::Periodic(vec![LevelSystem::new(vec![
                Similarity::interval(0.5, 0.0, false),
                Similarity::interval(1.0 / 16.0, 15.0 / 16.0, false),
            ])]),
        };
        let spec = validate_spec(&raw).unwrap();
        let slice = spec.scale_slice(0.25, 1000).unwrap();
        let expected: Vec<Vec<u32>> = vec![vec![0, 0], vec![0, 1], vec![1]];
        let got: Vec<Vec<u32>> = slice.words.iter().map(|w| w.indices().to_vec()).collect();
        assert_eq!(got, expected);
        assert_eq!(branching_count(&spec, 0.25, 1000).unwrap(), 3);
    }

    #[test]
    fn osc_pass_and_fail() {
        let spec = cantor();
        let rep = check_osc(&spec, None).unwrap();
        assert_eq!(rep.status, OscStatus::Pass);

        // {x/2, x/2 + 1/4}: open images (0,1/2) and (1/4,3/4) overlap
        let raw = IFSSpec {
            dimension: 1,
            ambient: AmbientSet::unit_interval(),
            prefix: vec![],
            tail: Tail::Periodic(vec![LevelSystem::new(vec![
                Similarity::interval(0.5, 0.0, false),
                Similarity::interval(0.5, 0.25, false),
            ])]),
        };
        let spec = validate_spec(&raw).unwrap();
        let rep = check_osc(&spec, None).unwrap();
        assert_eq!(rep.status, OscStatus::Fail);
        let w = rep.witness.unwrap();
        assert!((w.overlap.0 - 0.25).abs() < 1e-15);
        assert!((w.overlap.1 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn osc_planar() {
        // four corner maps of ratio 0.4 on the unit square: disjoint
        let maps: Vec<Similarity> = [(0.0, 0.0), (0.6, 0.0), (0.0, 0.6), (0.6, 0.6)]
            .iter()
            .map(|&(x, y)| Similarity::planar(0.4, 0.0, [x, y]))
            .collect();
        let raw = IFSSpec {
            dimension: 2,
            ambient: AmbientSet::Box {
                lo: [0.0, 0.0],
                hi: [1.0, 1.0],
            },
            prefix: vec![],
            tail: Tail::Periodic(vec![LevelSystem::new(maps)]),
        };
        let spec = validate_spec(&raw).unwrap();
        assert_eq!(check_osc(&spec, None).unwrap().status, OscStatus::Pass);

        // overlapping pair
        let maps = vec![
            Similarity::planar(0.5, 0.0, [0.0, 0.0]),
            Similarity::planar(0.5, 0.0, [0.25, 0.0]),
        ];
        let raw = IFSSpec {
            dimension: 2,
            ambient: AmbientSet::Box {
                lo: [0.0, 0.0],
                hi: [1.0, 1.0],
            },
            prefix: vec![],
            tail: Tail::Periodic(vec![LevelSystem::new(maps)]),
        };
        let spec = validate_spec(&raw).unwrap();
        assert_eq!(check_osc(&spec, None).unwrap().status, OscStatus::Fail);
    }

    #[test]
    fn cone_values() {
        let spec = cantor();
        assert_eq!(cone_constant(&spec), Some(1.0));
        let raw = IFSSpec {
            dimension: 2,
            ambient: AmbientSet::Box {
                lo: [0.0, 0.0],
                hi: [1.0, 1.0],
            },
            prefix: vec![],
            tail: Tail::Periodic(vec![LevelSystem::new(vec![
                Similarity::planar(0.4, 0.0, [0.0, 0.0]),
                Similarity::planar(0.4, 0.0, [0.6, 0.6]),
            ])]),
        };
        let spec = validate_spec(&raw).unwrap();
        assert!((cone_constant(&spec).unwrap() - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
    }

    #[test]
    fn bnc_cantor_verified_all_clauses() {
        let spec = cantor();
        let rep = bnc_verdict(&spec, &geometric_schedule(8), 200_000).unwrap();
        assert_eq!(rep.flag, BncStatus::Verified);
        assert!(rep.clauses.contains(&BncClause::RatioLowerBound));
        assert!(rep.clauses.contains(&BncClause::HomogeneousBranching));
        assert!(rep.clauses.contains(&BncClause::ConeBranching));
        assert!((rep.r_min - 1.0 / 3.0).abs() < 1e-15);
        let bound = rep.bound.unwrap();
        // bounded branching implies every empirical count stays below
        for &(_, b) in &rep.branching {
            assert!((b as f64) <= bound);
        }
    }

    #[test]
    fn bnc_osc_failure_is_unknown() {
        let raw = IFSSpec {
            dimension: 1,
            ambient: AmbientSet::unit_interval(),
            prefix: vec![],
            tail: Tail::Periodic(vec![LevelSystem::new(vec![
                Similarity::interval(0.5, 0.0, false),
                Similarity::interval(0.5, 0.25, false),
            ])]),
        };
        let spec = validate_spec(&raw).unwrap();
        let rep = bnc_verdict(&spec, &geometric_schedule(6), 200_000).unwrap();
        assert_eq!(rep.flag, BncStatus::Unknown);
        assert!(rep.clauses.is_empty());
    }
}
