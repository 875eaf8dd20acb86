//! Programmatic generators for the two counterexample families, the
//! two-ratio similarity-dimension solver, Cantor endpoint sets, and the
//! weak-tangent lower-bound witness.
//!
//! Both generators target the unit interval. The "unbounded" family keeps
//! every per-level dimension at most a chosen epsilon while the local
//! neighbourhood counts grow slower than a prescribed divergent profile;
//! the "arbitrary values" family is homogeneous with all pressure zeros
//! equal to s while the set itself looks t-dimensional at tangent scales.

use crate::error::{MoranError, Result};
use crate::geometry::{composite, limit_point, max_neighbourhood, ExtremeSide, MaxNbhdStrategy};
use crate::ifs_core::{
    AmbientSet, GeneratorCertificate, GeneratorMeta, GeneratorSpec, IFSSpec, LevelStructure,
    LevelSystem, Similarity, Tail, ValidatedSpec, Word,
};

/// The divergent profile f for the unbounded example; f(r) -> infinity as
/// r -> 0.
#[derive(Clone, Debug, PartialEq)]
pub enum ScalingFunction {
    /// f(r) = log(1/r).
    Log,
    /// f(r) = r^{-p} for 0 < p < 1.
    Power(f64),
}

impl ScalingFunction {
    /// Largest r with f(r') >= y for all r' <= r.
    fn inverse(&self, y: f64) -> f64 {
        match self {
            ScalingFunction::Log => (-y).exp(),
            ScalingFunction::Power(p) => y.powf(-1.0 / p),
        }
    }
}

#[derive(Clone, Debug)]
pub struct UnboundedExampleParams {
    pub eps: f64,
    pub f: ScalingFunction,
    /// Construction rounds to attempt beyond the initial block.
    pub depth: usize,
    /// Cap on materialized levels.
    pub level_budget: usize,
}

#[derive(Clone, Debug)]
pub enum KSequence {
    /// k_n = n.
    Linear,
    Table(Vec<u64>),
}

#[derive(Clone, Debug)]
pub struct ArbitraryValuesParams {
    pub s: f64,
    pub t: f64,
    pub k: KSequence,
    pub level_budget: usize,
}

/// One construction round of the unbounded example.
#[derive(Clone, Debug)]
pub struct UnboundedRound {
    /// Round index k.
    pub k: usize,
    /// Empirical neighbourhood constant of the periodic repeat of the
    /// current prefix.
    pub neighbourhood_bound: usize,
    /// Scale below which the divergence profile clears the next constant.
    pub r_next: f64,
    /// Repetitions of the current prefix in the next block.
    pub reps: usize,
    /// Tuple entries after the round.
    pub entries: usize,
}

#[derive(Clone, Debug)]
pub struct UnboundedMeta {
    pub eps: f64,
    /// Tuple sizes in order (each entry ell contributes ell-1 levels).
    pub ell_seq: Vec<usize>,
    /// Entry counts m_k at the end of each completed block.
    pub block_entries: Vec<usize>,
    pub schedule: Vec<UnboundedRound>,
    pub blocks_completed: usize,
    pub truncated: bool,
    /// Largest per-level similarity dimension actually realized.
    pub max_level_dimension: f64,
}

#[derive(Clone, Debug)]
pub struct ArbitraryBlock {
    pub n: usize,
    pub k_n: u64,
    pub m_n: usize,
    /// 1-based materialized level index.
    pub level: usize,
}

#[derive(Clone, Debug)]
pub struct ArbitraryMeta {
    pub s: f64,
    pub t: f64,
    pub r1: f64,
    pub r2: f64,
    pub blocks: Vec<ArbitraryBlock>,
    pub truncated: bool,
}

/// The unique s > 0 with r1^s + r2^s = 1, by bisection on the strictly
/// decreasing left side.
pub fn similarity_two_ratio(r1: f64, r2: f64, tol: f64) -> Result<f64> {
    if !(r1 > 0.0 && r1 < 1.0 && r2 > 0.0 && r2 < 1.0 && tol > 0.0) {
        return Err(MoranError::InvalidParameter(format!(
            "need r1, r2 in (0,1) and tol > 0, got ({r1}, {r2}, {tol})"
        )));
    }
    let g = |s: f64| r1.powf(s) + r2.powf(s);
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    while g(hi) > 1.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(MoranError::BracketFailure);
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if g(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// All 2^n left endpoints at level n of the Cantor system
/// {x -> r2 x, x -> r2 x + (1 - r2)}, sorted.
pub fn cantor_endpoints(n: usize, r2: f64) -> Vec<f64> {
    let mut pts = vec![0.0f64];
    for _ in 0..n {
        let mut next = Vec::with_capacity(2 * pts.len());
        for &y in &pts {
            next.push(r2 * y);
            next.push(r2 * y + (1.0 - r2));
        }
        pts = next;
    }
    pts.sort_by(f64::total_cmp);
    pts
}

fn unit_interval_ambient() -> AmbientSet {
    AmbientSet::unit_interval()
}

/// The tuple of two-map levels for a given ell: level j has left ratio
/// (1 - j/ell)/(1 - (j-1)/ell) so the left-branch products telescope to
/// 1 - j/ell, and right ratio solved so the per-level similarity dimension
/// is exactly eps (capped at feasibility). Returns the levels and the
/// worst per-level dimension realized.
fn unbounded_tuple(ell: usize, eps: f64) -> Result<(Vec<LevelSystem>, f64)> {
    let mut levels = Vec::with_capacity(ell - 1);
    let mut worst_s = 0.0f64;
    for j in 1..=(ell - 1) {
        let (jf, ellf) = (j as f64, ell as f64);
        let r1 = (1.0 - jf / ellf) / (1.0 - (jf - 1.0) / ellf);
        let mut r2 = (1.0 - r1.powf(eps)).powf(1.0 / eps);
        if r1 + r2 >= 1.0 {
            // epsilon infeasible at this ratio; take the largest admissible
            // right branch instead (its dimension is then strictly below eps)
            r2 = (1.0 - r1) * (1.0 - 1e-9);
        }
        worst_s = worst_s.max(similarity_two_ratio(r1, r2, 1e-13)?);
        levels.push(LevelSystem::new(vec![
            Similarity::interval(r1, 0.0, false),
            Similarity::interval(r2, r1, false),
        ]));
    }
    Ok((levels, worst_s))
}

fn expand_ell_seq(ell_seq: &[usize], eps: f64, cap: usize) -> Result<Vec<LevelSystem>> {
    let mut out = Vec::new();
    for &ell in ell_seq {
        let (levels, _) = unbounded_tuple(ell, eps)?;
        for l in levels {
            out.push(l);
            if out.len() >= cap {
                return Ok(out);
            }
        }
    }
    Ok(out)
}

/// Empirical neighbourhood constant of the periodic repeat of a level
/// block: max certified upper count over a geometric scale grid.
fn neighbourhood_constant(levels: &[LevelSystem]) -> Result<usize> {
    let spec = ValidatedSpec::from_parts(
        1,
        unit_interval_ambient(),
        levels.to_vec(),
        LevelStructure::Periodic {
            prefix_len: 0,
            period: levels.len(),
        },
    )?;
    let strategy = MaxNbhdStrategy {
        upper_only: true,
        ..MaxNbhdStrategy::default()
    };
    let mut best = 1usize;
    for i in 1..=8 {
        let r = 2.0f64.powi(-i);
        best = best.max(max_neighbourhood(&spec, r, &strategy)?.m_upper);
    }
    Ok(best)
}

fn build_unbounded(
    p: &UnboundedExampleParams,
) -> Result<(Vec<LevelSystem>, GeneratorCertificate, UnboundedMeta)> {
    if !(p.eps > 0.0 && p.eps < 1.0) {
        return Err(MoranError::InvalidParameter(format!(
            "eps must lie in (0,1), got {}",
            p.eps
        )));
    }
    if let ScalingFunction::Power(q) = p.f {
        if !(q > 0.0 && q < 1.0) {
            return Err(MoranError::InvalidParameter(format!(
                "power exponent must lie in (0,1), got {q}"
            )));
        }
    }
    if p.level_budget == 0 {
        return Err(MoranError::InvalidParameter("level budget must be >= 1".into()));
    }
    let entry_cap = p.level_budget.saturating_mul(4).max(16);
    let mut max_s = 0.0f64;

    // initial block: all-2 entries until prefix cylinders shrink below r_1
    let (seed_levels, seed_s) = unbounded_tuple(2, p.eps)?;
    max_s = max_s.max(seed_s);
    let n1 = neighbourhood_constant(&seed_levels)?;
    let r1 = self::ScalingFunction::inverse(&p.f, 4.0 * n1 as f64).min(0.5);
    let q = seed_levels[0].max_ratio();
    let m1 = 1 + (r1.ln() / q.ln()).ceil().max(1.0) as usize;
    let mut ell_seq: Vec<usize> = vec![2; m1.min(entry_cap)];
    let mut schedule = vec![UnboundedRound {
        k: 0,
        neighbourhood_bound: n1,
        r_next: r1,
        reps: m1,
        entries: ell_seq.len(),
    }];
    let mut block_entries = vec![ell_seq.len()];
    let mut truncated = m1 > entry_cap;
    let mut blocks_completed = usize::from(levels_of(&ell_seq) <= p.level_budget);
    let mut r_prev = r1;

    for k in 1..=p.depth {
        if truncated || levels_of(&ell_seq) > p.level_budget {
            truncated = true;
            break;
        }
        let levels = expand_ell_seq(&ell_seq, p.eps, p.level_budget + 1)?;
        let nk = neighbourhood_constant(&levels)?;
        let r_next = r_prev.min(self::ScalingFunction::inverse(
            &p.f,
            nk as f64 * 2.0f64.powi(k as i32 + 1),
        ));
        let log_rho: f64 = levels.iter().map(|l| l.max_ratio().ln()).sum();
        let reps = ((r_next.ln() / log_rho).ceil().max(1.0)) as usize;
        let mut next: Vec<usize> = Vec::new();
        'fill: for _ in 0..reps {
            for &e in &ell_seq {
                next.push(e);
                if next.len() >= entry_cap {
                    truncated = true;
                    break 'fill;
                }
            }
        }
        next.push(k + 2);
        schedule.push(UnboundedRound {
            k,
            neighbourhood_bound: nk,
            r_next,
            reps,
            entries: next.len(),
        });
        ell_seq = next;
        block_entries.push(ell_seq.len());
        if !truncated && levels_of(&ell_seq) <= p.level_budget {
            blocks_completed = k + 1;
        } else {
            truncated = true;
        }
        r_prev = r_next;
    }

    let levels = expand_ell_seq(&ell_seq, p.eps, p.level_budget)?;
    if levels_of(&ell_seq) > levels.len() {
        truncated = true;
    }
    for &ell in &ell_seq {
        let (_, s) = unbounded_tuple(ell, p.eps)?;
        max_s = max_s.max(s);
    }
    let meta = UnboundedMeta {
        eps: p.eps,
        ell_seq,
        block_entries,
        schedule,
        blocks_completed,
        truncated,
        max_level_dimension: max_s,
    };
    let certificate = GeneratorCertificate {
        contracting: true,
        rmin_positive: Some(false),
        branching_bounded: Some(false),
        homogeneous: false,
        note: "per-level dimension <= eps; tuple sizes diverge, so ratios are \
               not bounded below and branching is unbounded"
            .into(),
    };
    Ok((levels, certificate, meta))
}

fn levels_of(ell_seq: &[usize]) -> usize {
    ell_seq.iter().map(|&l| l - 1).sum()
}

fn build_arbitrary(
    p: &ArbitraryValuesParams,
) -> Result<(Vec<LevelSystem>, GeneratorCertificate, ArbitraryMeta)> {
    if !(p.s > 0.0 && p.s <= p.t && p.t <= 1.0) {
        return Err(MoranError::InvalidParameter(format!(
            "need 0 < s <= t <= 1, got s={}, t={}",
            p.s, p.t
        )));
    }
    if p.level_budget == 0 {
        return Err(MoranError::InvalidParameter("level budget must be >= 1".into()));
    }
    let r1 = 2.0f64.powf(-1.0 / p.s);
    let r2 = 2.0f64.powf(-1.0 / p.t);
    // per-level map-count safety: 2^m maps materialize real memory
    const M_CAP: usize = 21;
    let mut levels = Vec::new();
    let mut blocks = Vec::new();
    let mut truncated = false;
    let mut n = 0usize;
    let mut table_done = false;
    while levels.len() < p.level_budget && !table_done {
        n += 1;
        let k_n = match &p.k {
            KSequence::Linear => n as u64,
            KSequence::Table(t) => {
                if n > t.len() {
                    table_done = true;
                    continue;
                }
                t[n - 1]
            }
        };
        if k_n < 2 {
            continue; // no m >= 1 with 2^m <= k_n
        }
        let m_n = (63 - k_n.leading_zeros() as usize).min(M_CAP);
        if (1u64 << m_n) > k_n {
            return Err(MoranError::InvalidParameter("floor log2 broke".into()));
        }
        let ratio = r1.powi(m_n as i32);
        let maps: Vec<Similarity> = cantor_endpoints(m_n, r2)
            .into_iter()
            .map(|y| Similarity::interval(ratio, y, false))
            .collect();
        levels.push(LevelSystem::new(maps));
        blocks.push(ArbitraryBlock {
            n,
            k_n,
            m_n,
            level: levels.len(),
        });
        if levels.len() >= p.level_budget {
            truncated = matches!(&p.k, KSequence::Linear)
                || matches!(&p.k, KSequence::Table(t) if n < t.len());
        }
    }
    if levels.is_empty() {
        return Err(MoranError::InvalidParameter(
            "no block admits a level: every k_n < 2".into(),
        ));
    }
    let unbounded_m = matches!(&p.k, KSequence::Linear);
    let certificate = GeneratorCertificate {
        contracting: true,
        rmin_positive: if unbounded_m { Some(false) } else { None },
        branching_bounded: if unbounded_m { Some(false) } else { None },
        homogeneous: true,
        note: if unbounded_m {
            "map counts 2^{m_n} diverge along k_n = n".into()
        } else {
            "finite table: limit behaviour of branching/ratios not certified".into()
        },
    };
    let meta = ArbitraryMeta {
        s: p.s,
        t: p.t,
        r1,
        r2,
        blocks,
        truncated,
    };
    Ok((levels, certificate, meta))
}

/// Output of a generator: materialized levels plus the certificate about
/// the infinite sequence they truncate.
pub struct GeneratorOutput {
    pub levels: Vec<LevelSystem>,
    pub certificate: GeneratorCertificate,
    pub meta: GeneratorMeta,
}

/// Materialize a generator tail. Both families are built on the unit
/// interval in dimension 1.
pub fn resolve_generator(g: &GeneratorSpec, spec: &IFSSpec) -> Result<GeneratorOutput> {
    if spec.dimension != 1 {
        return Err(MoranError::InvalidParameter(
            "generators are defined on the unit interval (dimension 1)".into(),
        ));
    }
    match &spec.ambient {
        AmbientSet::Box { lo, hi } if lo[0] == 0.0 && hi[0] == 1.0 => {}
        _ => {
            return Err(MoranError::InvalidParameter(
                "generators require the ambient set [0, 1]".into(),
            ))
        }
    }
    match g {
        GeneratorSpec::Unbounded(p) => {
            let (levels, certificate, meta) = build_unbounded(p)?;
            Ok(GeneratorOutput {
                levels,
                certificate,
                meta: GeneratorMeta::Unbounded(meta),
            })
        }
        GeneratorSpec::ArbitraryValues(p) => {
            let (levels, certificate, meta) = build_arbitrary(p)?;
            Ok(GeneratorOutput {
                levels,
                certificate,
                meta: GeneratorMeta::Arbitrary(meta),
            })
        }
    }
}

/// Convenience constructors for the raw (unvalidated) generator specs.
pub fn unbounded_example_spec(p: UnboundedExampleParams) -> IFSSpec {
    IFSSpec {
        dimension: 1,
        ambient: unit_interval_ambient(),
        prefix: vec![],
        tail: Tail::Generator(GeneratorSpec::Unbounded(p)),
    }
}

pub fn arbitrary_values_spec(p: ArbitraryValuesParams) -> IFSSpec {
    IFSSpec {
        dimension: 1,
        ambient: unit_interval_ambient(),
        prefix: vec![],
        tail: Tail::Generator(GeneratorSpec::ArbitraryValues(p)),
    }
}

#[derive(Clone, Debug)]
pub struct TangentWitness {
    /// One-sided Hausdorff distance from the target set to the rescaled
    /// limit-set sample.
    pub p_h: f64,
    /// Worst sampling error in rescaled coordinates.
    pub sample_error: f64,
    pub target_size: usize,
    pub sample_size: usize,
}

/// Rescale the cylinder of `prefix` to unit size and measure how well the
/// rescaled limit set approximates `target` from one side: the max over
/// target points of the distance to the nearest certified sample point.
///
/// Samples are extreme coding points of sub-cylinders refined until their
/// relative scale drops below `refine_scale` (or materialized levels run
/// out). Witnesses carry sampling-error bars only; the asymptotic limit
/// cannot be certified from finite data.
pub fn tangent_witness(
    spec: &ValidatedSpec,
    target: &[f64],
    prefix: &Word,
    refine_scale: f64,
    cap: usize,
) -> Result<TangentWitness> {
    if spec.dimension != 1 {
        return Err(MoranError::UnsupportedDimension(spec.dimension));
    }
    if !(refine_scale > 0.0 && refine_scale < 1.0) {
        return Err(MoranError::InvalidParameter(
            "refine_scale must lie in (0,1)".into(),
        ));
    }
    let comp = composite(spec, prefix)?;
    let a = comp.linear[0][0];
    let b = comp.offset[0];
    if a == 0.0 {
        return Err(MoranError::InvalidParameter("degenerate prefix".into()));
    }
    let mut samples: Vec<f64> = Vec::new();
    let mut sample_error = 0.0f64;
    let mut stack = vec![prefix.clone()];
    let mut nodes = 0usize;
    let target_err = 1e-15;
    while let Some(w) = stack.pop() {
        nodes += 1;
        if nodes > cap {
            return Err(MoranError::BudgetExceeded { used: nodes, cap });
        }
        let relative = w.rho() / prefix.rho();
        let has_next = spec.level(w.depth() + 1).is_ok();
        if relative <= refine_scale || !has_next {
            for side in [ExtremeSide::First, ExtremeSide::Last] {
                let p = limit_point(spec, &w, side, target_err)?;
                samples.push((p.point[0] - b) / a);
                sample_error = sample_error.max(p.error_radius / a.abs());
            }
            continue;
        }
        let level = spec.level(w.depth() + 1)?;
        for j in 0..level.len() {
            stack.push(spec.child_word(&w, j)?);
        }
    }
    samples.sort_by(f64::total_cmp);
    let mut p_h = 0.0f64;
    for &t in target {
        let i = samples.partition_point(|&s| s < t);
        let mut best = f64::INFINITY;
        if i < samples.len() {
            best = best.min((samples[i] - t).abs());
        }
        if i > 0 {
            best = best.min((samples[i - 1] - t).abs());
        }
        p_h = p_h.max(best);
    }
    Ok(TangentWitness {
        p_h,
        sample_error,
        target_size: target.len(),
        sample_size: samples.len(),
    })
}
