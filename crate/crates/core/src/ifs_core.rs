//! Non-autonomous IFS specifications, validation, and the cylinder tree.
//!
//! A specification is a sequence of levels, each a finite family of
//! contracting similarities. Infinite sequences are representable either as
//! an explicit prefix followed by a periodic tail, or as a named generator
//! from [`crate::examples`] that materializes a finite number of levels
//! together with a certificate for the limit behaviour.

use crate::error::{MoranError, Result};
use crate::examples;

/// Default cap on the number of words a single slice enumeration may produce.
pub const DEFAULT_SLICE_CAP: usize = 10_000_000;

/// Entrywise tolerance for the orthogonality check of a map's linear part.
pub const ORTHOGONALITY_TOL: f64 = 1e-12;

/// Tolerance for the ambient invariance check S(X) subset of X.
pub const INVARIANCE_TOL: f64 = 1e-9;

/// Points are stored with two coordinates; for dimension 1 the second is 0.
pub type Point = [f64; 2];

/// Row-major 2x2 matrix; for dimension 1 only the (0,0) entry matters.
pub type Mat = [[f64; 2]; 2];

pub const MAT_IDENTITY: Mat = [[1.0, 0.0], [0.0, 1.0]];

pub fn mat_mul(a: &Mat, b: &Mat) -> Mat {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

pub fn mat_vec(a: &Mat, v: &Point) -> Point {
    [
        a[0][0] * v[0] + a[0][1] * v[1],
        a[1][0] * v[0] + a[1][1] * v[1],
    ]
}

pub fn dist(dim: usize, a: &Point, b: &Point) -> f64 {
    if dim == 1 {
        (a[0] - b[0]).abs()
    } else {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
    }
}

/// One contracting similarity x -> ratio * O x + translation.
#[derive(Clone, Debug, PartialEq)]
pub struct Similarity {
    pub ratio: f64,
    pub orthogonal: Mat,
    pub translation: Point,
}

impl Similarity {
    /// A map on the line: x -> ratio * (+-x) + translation.
    pub fn interval(ratio: f64, translation: f64, reflect: bool) -> Self {
        let s = if reflect { -1.0 } else { 1.0 };
        Similarity {
            ratio,
            orthogonal: [[s, 0.0], [0.0, 1.0]],
            translation: [translation, 0.0],
        }
    }

    /// A planar map: rotation by `rotation_degrees`, then scale and translate.
    pub fn planar(ratio: f64, rotation_degrees: f64, translation: Point) -> Self {
        let a = rotation_degrees.to_radians();
        let (s, c) = a.sin_cos();
        Similarity {
            ratio,
            orthogonal: [[c, -s], [s, c]],
            translation,
        }
    }

    pub fn apply(&self, x: &Point) -> Point {
        let v = mat_vec(&self.orthogonal, x);
        [
            self.ratio * v[0] + self.translation[0],
            self.ratio * v[1] + self.translation[1],
        ]
    }

    /// Max entrywise deviation of O^T O from the identity, over the top-left
    /// dim x dim block.
    pub fn orthogonality_defect(&self, dim: usize) -> f64 {
        let o = &self.orthogonal;
        let mut worst = 0.0f64;
        for i in 0..dim {
            for j in 0..dim {
                let dot = o[0][i] * o[0][j] + o[1][i] * o[1][j];
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }
}

/// The family of maps at one level of the sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelSystem {
    pub maps: Vec<Similarity>,
}

impl LevelSystem {
    pub fn new(maps: Vec<Similarity>) -> Self {
        LevelSystem { maps }
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn max_ratio(&self) -> f64 {
        self.maps.iter().map(|m| m.ratio).fold(0.0, f64::max)
    }

    pub fn min_ratio(&self) -> f64 {
        self.maps.iter().map(|m| m.ratio).fold(f64::INFINITY, f64::min)
    }

    /// Returns the common ratio when every map in the level has exactly the
    /// same contraction ratio.
    pub fn homogeneous_ratio(&self) -> Option<f64> {
        let r = self.maps.first()?.ratio;
        if self.maps.iter().all(|m| m.ratio == r) {
            Some(r)
        } else {
            None
        }
    }
}

/// The invariant compact set X.
#[derive(Clone, Debug, PartialEq)]
pub enum AmbientSet {
    Box { lo: Point, hi: Point },
    Ball { center: Point, radius: f64 },
}

impl AmbientSet {
    pub fn unit_interval() -> Self {
        AmbientSet::Box {
            lo: [0.0, 0.0],
            hi: [1.0, 0.0],
        }
    }

    pub fn center(&self) -> Point {
        match self {
            AmbientSet::Box { lo, hi } => [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0],
            AmbientSet::Ball { center, .. } => *center,
        }
    }

    /// Radius of the smallest ball around `center()` containing X.
    pub fn circumradius(&self, dim: usize) -> f64 {
        match self {
            AmbientSet::Box { lo, hi } => {
                let hx = (hi[0] - lo[0]) / 2.0;
                let hy = (hi[1] - lo[1]) / 2.0;
                if dim == 1 {
                    hx
                } else {
                    (hx * hx + hy * hy).sqrt()
                }
            }
            AmbientSet::Ball { radius, .. } => *radius,
        }
    }

    pub fn diameter(&self, dim: usize) -> f64 {
        2.0 * self.circumradius(dim)
    }

    /// Corner points (extreme points for boxes; axis extremes for balls).
    pub fn extreme_points(&self, dim: usize) -> Vec<Point> {
        match self {
            AmbientSet::Box { lo, hi } => {
                if dim == 1 {
                    vec![[lo[0], 0.0], [hi[0], 0.0]]
                } else {
                    vec![
                        [lo[0], lo[1]],
                        [lo[0], hi[1]],
                        [hi[0], lo[1]],
                        [hi[0], hi[1]],
                    ]
                }
            }
            AmbientSet::Ball { center, radius } => {
                if dim == 1 {
                    vec![[center[0] - radius, 0.0], [center[0] + radius, 0.0]]
                } else {
                    vec![
                        [center[0] - radius, center[1]],
                        [center[0] + radius, center[1]],
                        [center[0], center[1] - radius],
                        [center[0], center[1] + radius],
                    ]
                }
            }
        }
    }

    /// Signed excess of a point outside X (0 when inside).
    pub fn outside_excess(&self, dim: usize, p: &Point) -> f64 {
        match self {
            AmbientSet::Box { lo, hi } => {
                let mut e = 0.0f64;
                for d in 0..dim {
                    e = e.max(lo[d] - p[d]).max(p[d] - hi[d]);
                }
                e
            }
            AmbientSet::Ball { center, radius } => (dist(dim, p, center) - radius).max(0.0),
        }
    }

    /// How far the image S(X) sticks out of X; 0 means invariant.
    pub fn invariance_excess(&self, dim: usize, map: &Similarity) -> f64 {
        match self {
            AmbientSet::Box { .. } => self
                .extreme_points(dim)
                .iter()
                .map(|p| self.outside_excess(dim, &map.apply(p)))
                .fold(0.0, f64::max),
            AmbientSet::Ball { center, radius } => {
                // image is a ball of radius ratio*radius around S(center)
                let c2 = map.apply(center);
                (dist(dim, &c2, center) + map.ratio * radius - radius).max(0.0)
            }
        }
    }
}

/// Parameters for the two named generators; constructed in `examples`.
#[derive(Clone, Debug)]
pub enum GeneratorSpec {
    Unbounded(examples::UnboundedExampleParams),
    ArbitraryValues(examples::ArbitraryValuesParams),
}

/// How the sequence continues after the explicit prefix.
#[derive(Clone, Debug)]
pub enum Tail {
    Periodic(Vec<LevelSystem>),
    Generator(GeneratorSpec),
}

/// A presentable non-autonomous IFS specification, prior to validation.
#[derive(Clone, Debug)]
pub struct IFSSpec {
    pub dimension: usize,
    pub ambient: AmbientSet,
    pub prefix: Vec<LevelSystem>,
    pub tail: Tail,
}

/// Limit-behaviour facts a generator certifies about the infinite sequence
/// its finite materialization truncates.
#[derive(Clone, Debug)]
pub struct GeneratorCertificate {
    /// Sup of cylinder ratios at level n tends to 0 (the non-degeneracy
    /// condition every spec must satisfy).
    pub contracting: bool,
    /// Whether contraction ratios stay bounded away from 0 along the full
    /// infinite sequence; None when the generator cannot certify either way.
    pub rmin_positive: Option<bool>,
    /// Whether the geometric offspring count stays bounded; None = unknown.
    pub branching_bounded: Option<bool>,
    /// All levels homogeneous along the full sequence.
    pub homogeneous: bool,
    pub note: String,
}

/// Provenance details emitted by a generator.
#[derive(Clone, Debug)]
pub enum GeneratorMeta {
    Unbounded(examples::UnboundedMeta),
    Arbitrary(examples::ArbitraryMeta),
}

/// How `level(n)` resolves beyond the materialized vector.
#[derive(Clone, Debug)]
pub enum LevelStructure {
    /// `levels` holds the prefix followed by one full period.
    Periodic { prefix_len: usize, period: usize },
    /// `levels` is all we have; requests beyond it are errors.
    Finite {
        certificate: GeneratorCertificate,
        meta: GeneratorMeta,
    },
}

/// A spec whose invariants have been checked; all operations take this.
#[derive(Clone, Debug)]
pub struct ValidatedSpec {
    pub dimension: usize,
    pub ambient: AmbientSet,
    levels: Vec<LevelSystem>,
    pub structure: LevelStructure,
}

/// A finite index string identifying a cylinder, with its cached ratio
/// product in both linear and log scale.
#[derive(Clone, Debug, PartialEq)]
pub struct Word {
    indices: Vec<u32>,
    rho: f64,
    log_rho: f64,
}

impl Word {
    pub fn root() -> Self {
        Word {
            indices: Vec::new(),
            rho: 1.0,
            log_rho: 0.0,
        }
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn depth(&self) -> usize {
        self.indices.len()
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn log_rho(&self) -> f64 {
        self.log_rho
    }

    /// True when rho(self) <= r, resolved in log scale if rho underflowed.
    pub fn scale_le(&self, r: f64) -> bool {
        if self.rho > 0.0 {
            self.rho <= r
        } else {
            self.log_rho <= r.ln()
        }
    }
}

/// The stratification T(r): all cylinders with rho(Q) <= r < rho(parent).
#[derive(Clone, Debug)]
pub struct ScaleSlice {
    pub scale: f64,
    pub words: Vec<Word>,
}

impl ValidatedSpec {
    /// Assemble a validated spec directly from materialized levels. Intended
    /// for in-crate construction of scratch systems (generators, tests);
    /// runs the same invariant checks as `validate_spec`.
    pub fn from_parts(
        dimension: usize,
        ambient: AmbientSet,
        levels: Vec<LevelSystem>,
        structure: LevelStructure,
    ) -> Result<Self> {
        let spec = ValidatedSpec {
            dimension,
            ambient,
            levels,
            structure,
        };
        spec.check_invariants()?;
        Ok(spec)
    }

    fn check_invariants(&self) -> Result<()> {
        if self.dimension == 0 || self.dimension > 2 {
            return Err(MoranError::UnsupportedDimension(self.dimension));
        }
        if let LevelStructure::Periodic { prefix_len, period } = self.structure {
            if period == 0 || self.levels.len() != prefix_len + period {
                return Err(MoranError::InvalidParameter(
                    "periodic structure does not match materialized levels".into(),
                ));
            }
        }
        if self.levels.is_empty() {
            return Err(MoranError::InvalidParameter(
                "spec has no materialized levels".into(),
            ));
        }
        for (li, level) in self.levels.iter().enumerate() {
            if level.len() < 2 {
                return Err(MoranError::TooFewMaps {
                    level: li + 1,
                    count: level.len(),
                });
            }
            for (mi, map) in level.maps.iter().enumerate() {
                if !(map.ratio > 0.0 && map.ratio < 1.0) {
                    return Err(MoranError::NonContracting {
                        level: li + 1,
                        index: mi,
                        ratio: map.ratio,
                    });
                }
                let defect = map.orthogonality_defect(self.dimension);
                if defect > ORTHOGONALITY_TOL {
                    return Err(MoranError::NotOrthogonal {
                        level: li + 1,
                        index: mi,
                        defect,
                    });
                }
                let excess = self.ambient.invariance_excess(self.dimension, map);
                if excess > INVARIANCE_TOL {
                    return Err(MoranError::NotInvariant {
                        level: li + 1,
                        index: mi,
                        excess,
                    });
                }
            }
        }
        if let LevelStructure::Finite { certificate, .. } = &self.structure {
            if !certificate.contracting {
                return Err(MoranError::InvalidParameter(
                    "generator does not certify vanishing cylinder ratios".into(),
                ));
            }
        }
        Ok(())
    }

    /// The level system at 1-based position n.
    pub fn level(&self, n: usize) -> Result<&LevelSystem> {
        if n == 0 {
            return Err(MoranError::InvalidParameter("level index must be >= 1".into()));
        }
        match self.structure {
            LevelStructure::Periodic { prefix_len, period } => {
                if n <= prefix_len {
                    Ok(&self.levels[n - 1])
                } else {
                    Ok(&self.levels[prefix_len + (n - prefix_len - 1) % period])
                }
            }
            LevelStructure::Finite { .. } => {
                self.levels.get(n - 1).ok_or(MoranError::LevelBudget {
                    requested: n,
                    available: self.levels.len(),
                })
            }
        }
    }

    /// Number of materialized levels; for periodic tails this is the
    /// fundamental domain, for generators everything there is.
    pub fn materialized_len(&self) -> usize {
        self.levels.len()
    }

    /// None for periodic tails (levels defined for all n).
    pub fn max_level(&self) -> Option<usize> {
        match self.structure {
            LevelStructure::Periodic { .. } => None,
            LevelStructure::Finite { .. } => Some(self.levels.len()),
        }
    }

    /// Smallest window of levels that determines every level system:
    /// prefix + one period, or the full materialization.
    pub fn fundamental_domain(&self) -> usize {
        self.levels.len()
    }

    pub fn min_ratio(&self) -> f64 {
        self.levels
            .iter()
            .map(|l| l.min_ratio())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_ratio(&self) -> f64 {
        self.levels.iter().map(|l| l.max_ratio()).fold(0.0, f64::max)
    }

    /// Every materialized level homogeneous (exact ratio equality), and the
    /// generator certificate agrees when there is one.
    pub fn homogeneous(&self) -> bool {
        let materialized = self
            .levels
            .iter()
            .all(|l| l.homogeneous_ratio().is_some());
        match &self.structure {
            LevelStructure::Periodic { .. } => materialized,
            LevelStructure::Finite { certificate, .. } => materialized && certificate.homogeneous,
        }
    }

    pub fn generator_certificate(&self) -> Option<&GeneratorCertificate> {
        match &self.structure {
            LevelStructure::Finite { certificate, .. } => Some(certificate),
            LevelStructure::Periodic { .. } => None,
        }
    }

    pub fn generator_meta(&self) -> Option<&GeneratorMeta> {
        match &self.structure {
            LevelStructure::Finite { meta, .. } => Some(meta),
            LevelStructure::Periodic { .. } => None,
        }
    }

    /// Child word Q.j; rho multiplies left to right so that parent/child
    /// products agree bit for bit with a fresh left-to-right evaluation.
    pub fn child_word(&self, w: &Word, j: usize) -> Result<Word> {
        let level = self.level(w.depth() + 1)?;
        let map = level.maps.get(j).ok_or_else(|| {
            MoranError::InvalidParameter(format!(
                "index {} out of range at level {}",
                j,
                w.depth() + 1
            ))
        })?;
        let mut indices = w.indices.clone();
        indices.push(j as u32);
        Ok(Word {
            indices,
            rho: w.rho * map.ratio,
            log_rho: w.log_rho + map.ratio.ln(),
        })
    }

    /// Rebuild a word (and its cached rho) from raw indices.
    pub fn word_from_indices(&self, indices: &[u32]) -> Result<Word> {
        let mut w = Word::root();
        for &j in indices {
            w = self.child_word(&w, j as usize)?;
        }
        Ok(w)
    }

    pub fn parent_word(&self, w: &Word) -> Result<Option<Word>> {
        if w.depth() == 0 {
            return Ok(None);
        }
        Ok(Some(
            self.word_from_indices(&w.indices[..w.depth() - 1])?,
        ))
    }

    /// Enumerate T(r): descend while rho > r, emit on crossing. Output is
    /// lexicographically sorted so parallel or stack orderings cannot leak
    /// into results.
    pub fn scale_slice(&self, r: f64, cap: usize) -> Result<ScaleSlice> {
        if !(r > 0.0 && r < 1.0) {
            return Err(MoranError::InvalidParameter(format!(
                "slice scale must be in (0,1), got {r}"
            )));
        }
        let mut out: Vec<Word> = Vec::new();
        let mut stack = vec![Word::root()];
        while let Some(w) = stack.pop() {
            let level = self.level(w.depth() + 1)?;
            for j in 0..level.len() {
                let c = self.child_word(&w, j)?;
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
        out.sort_by(|a, b| a.indices.cmp(&b.indices));
        Ok(ScaleSlice {
            scale: r,
            words: out,
        })
    }

    /// Sup over the window of the worst m-step ratio product starting at
    /// level n (product of per-level maxima, which equals the max over all
    /// m-step index windows).
    pub fn local_contraction_profile(
        &self,
        m: usize,
        n_window: std::ops::RangeInclusive<usize>,
    ) -> Result<f64> {
        if m == 0 {
            return Err(MoranError::InvalidParameter("window length must be >= 1".into()));
        }
        let mut worst = 0.0f64;
        for n in n_window {
            let mut prod = 1.0;
            for k in 0..m {
                prod *= self.level(n + k)?.max_ratio();
            }
            worst = worst.max(prod);
        }
        Ok(worst)
    }
}

/// Check all declared invariants of a raw spec and materialize its levels.
pub fn validate_spec(spec: &IFSSpec) -> Result<ValidatedSpec> {
    let (levels, structure) = match &spec.tail {
        Tail::Periodic(period_levels) => {
            if period_levels.is_empty() {
                return Err(MoranError::InvalidParameter(
                    "periodic tail must contain at least one level".into(),
                ));
            }
            let mut levels = spec.prefix.clone();
            levels.extend(period_levels.iter().cloned());
            (
                levels,
                LevelStructure::Periodic {
                    prefix_len: spec.prefix.len(),
                    period: period_levels.len(),
                },
            )
        }
        Tail::Generator(g) => {
            let out = examples::resolve_generator(g, spec)?;
            let mut levels = spec.prefix.clone();
            levels.extend(out.levels);
            (
                levels,
                LevelStructure::Finite {
                    certificate: out.certificate,
                    meta: out.meta,
                },
            )
        }
    };
    ValidatedSpec::from_parts(spec.dimension, spec.ambient.clone(), levels, structure)
}

/// The classical middle-thirds Cantor system on [0,1], as an autonomous spec.
pub fn cantor_spec() -> IFSSpec {
    IFSSpec {
        dimension: 1,
        ambient: AmbientSet::unit_interval(),
        prefix: vec![],
        tail: Tail::Periodic(vec![LevelSystem::new(vec![
            Similarity::interval(1.0 / 3.0, 0.0, false),
            Similarity::interval(1.0 / 3.0, 2.0 / 3.0, false),
        ])]),
    }
}
