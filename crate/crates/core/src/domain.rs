//! Points, finite index sets, test-set generators and the set file format.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::Stream;

/// A finite real vector, the truncation of an element of ℓ².
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Validation("a point needs at least one coordinate".into()));
        }
        if let Some(i) = coords.iter().position(|x| !x.is_finite()) {
            return Err(Error::Validation(format!(
                "coordinate {i} is not finite ({})",
                coords[i]
            )));
        }
        Ok(Point(coords))
    }

    pub fn zeros(dim: usize) -> Self {
        Point(vec![0.0; dim.max(1)])
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }

    /// Coordinatewise `self - other`.
    pub fn sub(&self, other: &Point) -> Point {
        Point(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn add(&self, other: &Point) -> Point {
        Point(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn scale(&self, c: f64) -> Point {
        Point(self.0.iter().map(|x| c * x).collect())
    }

    pub fn norm2(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn norm1(&self) -> f64 {
        self.0.iter().map(|x| x.abs()).sum()
    }

    pub fn dist2(&self, other: &Point) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn dot(&self, xi: &[f64]) -> f64 {
        self.0.iter().zip(xi).map(|(a, b)| a * b).sum()
    }

    /// Indices of the nonzero coordinates.
    pub fn support(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, x)| **x != 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    /// Bit pattern used for exact duplicate detection; `-0.0` and `0.0` agree.
    pub(crate) fn key(&self) -> Vec<u64> {
        self.0
            .iter()
            .map(|&x| if x == 0.0 { 0 } else { x.to_bits() })
            .collect()
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let coords = Vec::<f64>::deserialize(d)?;
        Point::new(coords).map_err(serde::de::Error::custom)
    }
}

/// The driving law of a canonical process.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProcessKind {
    Bernoulli,
    Gaussian,
}

impl fmt::Display for ProcessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProcessKind::Bernoulli => f.write_str("bernoulli"),
            ProcessKind::Gaussian => f.write_str("gaussian"),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(pub u64);

/// A named, nonempty collection of distinct points of a common dimension.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FiniteSet {
    name: String,
    dim: usize,
    points: Vec<Point>,
}

#[derive(Deserialize)]
struct SetFile {
    name: String,
    dim: usize,
    points: Vec<Vec<f64>>,
}

impl FiniteSet {
    pub fn new(name: impl Into<String>, points: Vec<Point>) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(Error::Validation("a set needs at least one point".into()));
        };
        let dim = first.dim();
        let mut seen = HashSet::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            if p.dim() != dim {
                return Err(Error::Validation(format!(
                    "point {i} has dimension {} but the set has dimension {dim}",
                    p.dim()
                )));
            }
            if !seen.insert(p.key()) {
                return Err(Error::Validation(format!("point {i} duplicates an earlier point")));
            }
        }
        Ok(FiniteSet {
            name: name.into(),
            dim,
            points,
        })
    }

    pub fn from_coords(name: impl Into<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let points = rows.into_iter().map(Point::new).collect::<Result<Vec<_>>>()?;
        Self::new(name, points)
    }

    /// Builds a set from possibly repeated points, keeping first occurrences.
    /// Returns the set and, for every input point, its index in the set.
    pub fn dedup(name: impl Into<String>, points: Vec<Point>) -> Result<(Self, Vec<usize>)> {
        let mut index_of = std::collections::HashMap::new();
        let mut kept = Vec::new();
        let mut map = Vec::with_capacity(points.len());
        for p in points {
            let next = kept.len();
            let idx = *index_of.entry(p.key()).or_insert(next);
            if idx == next {
                kept.push(p);
            }
            map.push(idx);
        }
        Ok((Self::new(name, kept)?, map))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &Point {
        &self.points[i]
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// `c·F` for `c ≠ 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if c == 0.0 || !c.is_finite() {
            return Err(Error::param("scale", "must be finite and nonzero"));
        }
        Ok(FiniteSet {
            name: format!("{}*{c}", self.name),
            dim: self.dim,
            points: self.points.iter().map(|p| p.scale(c)).collect(),
        })
    }

    pub fn contains_zero(&self) -> bool {
        self.points.iter().any(Point::is_zero)
    }

    /// `F ∪ {0}`, with the zero vector prepended when it is absent.
    pub fn with_zero(&self) -> Self {
        if self.contains_zero() {
            return self.clone();
        }
        let mut points = Vec::with_capacity(self.len() + 1);
        points.push(Point::zeros(self.dim));
        points.extend(self.points.iter().cloned());
        FiniteSet {
            name: format!("{}+0", self.name),
            dim: self.dim,
            points,
        }
    }

    /// Canonical JSON text of the set file.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sets always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SetFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            reason: e.to_string(),
        })?;
        let set = Self::from_coords(file.name, file.points)?;
        if set.dim != file.dim {
            return Err(Error::Validation(format!(
                "declared dim {} but points have dimension {}",
                file.dim, set.dim
            )));
        }
        Ok(set)
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn content_hash(&self) -> String {
        sha256_hex(self.to_json().as_bytes())
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn load_set(path: impl AsRef<Path>) -> Result<FiniteSet> {
    FiniteSet::from_json(&std::fs::read_to_string(path)?)
}

pub fn save_set(set: &FiniteSet, path: impl AsRef<Path>) -> Result<()> {
    let mut text = set.to_json();
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Returns `F - t₀` where `t₀` is the first point, so the result contains 0.
pub fn center_at_zero(set: &FiniteSet) -> FiniteSet {
    let origin = set.points[0].clone();
    FiniteSet {
        name: format!("{}-centered", set.name),
        dim: set.dim,
        points: set.points.iter().map(|p| p.sub(&origin)).collect(),
    }
}

/// Families of generated test sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SetKind {
    /// Uniform points on the sphere of radius `params[0]` (default 1).
    #[value(name = "random_sphere", alias = "sphere")]
    RandomSphere,
    /// The first `count` standard basis vectors.
    #[value(name = "simplex_vertices", alias = "simplex")]
    SimplexVertices,
    /// Points on the ellipsoid with semi-axes `(i+1)^(-params[0])` (default exponent 1).
    #[value(name = "ellipsoid_sample", alias = "ellipsoid")]
    EllipsoidSample,
    /// Distinct vertices of `{-1, 1}^dim`.
    #[value(name = "cube_vertices", alias = "cube")]
    CubeVertices,
    /// Point `k` supported on coordinates `[k·b, (k+1)·b)`; `params = [b, density]`.
    #[value(name = "disjoint_blocks", alias = "blocks")]
    DisjointBlocks,
}

impl fmt::Display for SetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SetKind::RandomSphere => "random_sphere",
            SetKind::SimplexVertices => "simplex_vertices",
            SetKind::EllipsoidSample => "ellipsoid_sample",
            SetKind::CubeVertices => "cube_vertices",
            SetKind::DisjointBlocks => "disjoint_blocks",
        };
        f.write_str(s)
    }
}

/// Deterministic generator of test sets.
pub fn generate_set(
    kind: SetKind,
    dim: usize,
    count: usize,
    seed: Seed,
    params: &[f64],
) -> Result<FiniteSet> {
    if dim == 0 {
        return Err(Error::param("dim", "must be at least 1"));
    }
    if count == 0 {
        return Err(Error::param("count", "must be at least 1"));
    }
    let mut stream = Stream::new(seed, &format!("gen/{kind}"), 0);
    let rows: Vec<Vec<f64>> = match kind {
        SetKind::RandomSphere => {
            let radius = params.first().copied().unwrap_or(1.0);
            if !(radius.is_finite() && radius > 0.0) {
                return Err(Error::param("params", "radius must be positive"));
            }
            (0..count)
                .map(|_| sphere_point(&mut stream, dim).into_iter().map(|x| radius * x).collect())
                .collect()
        }
        SetKind::SimplexVertices => {
            if count > dim {
                return Err(Error::param("count", format!("simplex has only {dim} vertices")));
            }
            (0..count)
                .map(|k| {
                    let mut v = vec![0.0; dim];
                    v[k] = 1.0;
                    v
                })
                .collect()
        }
        SetKind::EllipsoidSample => {
            let decay = params.first().copied().unwrap_or(1.0);
            if !decay.is_finite() {
                return Err(Error::param("params", "decay exponent must be finite"));
            }
            (0..count)
                .map(|_| {
                    sphere_point(&mut stream, dim)
                        .into_iter()
                        .enumerate()
                        .map(|(i, x)| x * ((i + 1) as f64).powf(-decay))
                        .collect()
                })
                .collect()
        }
        SetKind::CubeVertices => cube_vertices(&mut stream, dim, count)?,
        SetKind::DisjointBlocks => {
            let block = params.first().copied().unwrap_or(1.0);
            if !(block >= 1.0 && block.fract() == 0.0) {
                return Err(Error::param("params", "block length must be a positive integer"));
            }
            let block = block as usize;
            if block.saturating_mul(count) > dim {
                return Err(Error::param(
                    "count",
                    format!("{count} blocks of length {block} do not fit in dimension {dim}"),
                ));
            }
            let density = params.get(1).copied().unwrap_or(1.0);
            if !(density > 0.0 && density <= 1.0) {
                return Err(Error::param("params", "density must lie in (0, 1]"));
            }
            (0..count)
                .map(|k| {
                    let mut v = vec![0.0; dim];
                    let forced = k * block + stream.below(block as u64) as usize;
                    for (i, slot) in v.iter_mut().enumerate().skip(k * block).take(block) {
                        if i == forced || stream.uniform() < density {
                            let mut x = 0.0;
                            while x == 0.0 {
                                x = stream.normal();
                            }
                            *slot = x;
                        }
                    }
                    v
                })
                .collect()
        }
    };
    FiniteSet::from_coords(format!("{kind}-d{dim}-n{count}-s{}", seed.0), rows)
}

fn sphere_point(stream: &mut Stream, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| stream.normal()).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn cube_vertices(stream: &mut Stream, dim: usize, count: usize) -> Result<Vec<Vec<f64>>> {
    let to_vertex = |mask: u64| -> Vec<f64> {
        (0..dim)
            .map(|i| if mask >> i & 1 == 1 { -1.0 } else { 1.0 })
            .collect()
    };
    if dim < 64 {
        let total = 1u64 << dim;
        if count as u64 > total {
            return Err(Error::param("count", format!("the {dim}-cube has only {total} vertices")));
        }
        if count as u64 == total {
            return Ok((0..total).map(to_vertex).collect());
        }
        if dim <= 20 {
            // partial Fisher–Yates over all masks
            let mut masks: Vec<u64> = (0..total).collect();
            for i in 0..count {
                let j = i + stream.below(total - i as u64) as usize;
                masks.swap(i, j);
            }
            return Ok(masks[..count].iter().map(|&m| to_vertex(m)).collect());
        }
    }
    let mut seen = HashSet::new();
    let mut rows = Vec::with_capacity(count);
    while rows.len() < count {
        let v: Vec<f64> = (0..dim).map(|_| stream.sign()).collect();
        let key: Vec<bool> = v.iter().map(|&x| x > 0.0).collect();
        if seen.insert(key) {
            rows.push(v);
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coords(set: &FiniteSet) -> Vec<Vec<f64>> {
        set.points().iter().map(|p| p.coords().to_vec()).collect()
    }

    #[test]
    fn simplex_is_standard_basis() {
        let s = generate_set(SetKind::SimplexVertices, 3, 3, Seed(42), &[]).unwrap();
        assert_eq!(
            coords(&s),
            vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]
        );
    }

    #[test]
    fn full_square_vertices() {
        let s = generate_set(SetKind::CubeVertices, 2, 4, Seed(0), &[]).unwrap();
        let mut got = coords(&s);
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(
            got,
            vec![vec![-1.0, -1.0], vec![-1.0, 1.0], vec![1.0, -1.0], vec![1.0, 1.0]]
        );
    }

    #[test]
    fn disjoint_blocks_have_disjoint_supports() {
        let s = generate_set(SetKind::DisjointBlocks, 6, 2, Seed(7), &[3.0]).unwrap();
        let a = s.point(0).support();
        let b = s.point(1).support();
        assert!(!a.is_empty() && !b.is_empty());
        assert!(a.iter().all(|i| *i < 3));
        assert!(b.iter().all(|i| (3..6).contains(i)));

        let sparse = generate_set(SetKind::DisjointBlocks, 64, 8, Seed(3), &[8.0, 0.4]).unwrap();
        for i in 0..8 {
            for j in i + 1..8 {
                let si = sparse.point(i).support();
                assert!(sparse.point(j).support().iter().all(|k| !si.contains(k)));
            }
        }
    }

    #[test]
    fn generator_is_pure() {
        for kind in [
            SetKind::RandomSphere,
            SetKind::EllipsoidSample,
            SetKind::CubeVertices,
            SetKind::DisjointBlocks,
        ] {
            let a = generate_set(kind, 8, 4, Seed(11), &[2.0]).unwrap();
            let b = generate_set(kind, 8, 4, Seed(11), &[2.0]).unwrap();
            assert_eq!(a.to_json(), b.to_json(), "{kind}");
        }
    }

    #[test]
    fn bad_parameters_name_the_field() {
        let err = generate_set(SetKind::CubeVertices, 2, 5, Seed(0), &[]).unwrap_err();
        assert!(matches!(err, Error::Parameter { field: "count", .. }));
        let err = generate_set(SetKind::RandomSphere, 0, 5, Seed(0), &[]).unwrap_err();
        assert!(matches!(err, Error::Parameter { field: "dim", .. }));
        let err = generate_set(SetKind::DisjointBlocks, 5, 2, Seed(0), &[3.0]).unwrap_err();
        assert!(matches!(err, Error::Parameter { field: "count", .. }));
        let err = generate_set(SetKind::SimplexVertices, 2, 3, Seed(0), &[]).unwrap_err();
        assert!(matches!(err, Error::Parameter { field: "count", .. }));
    }

    #[test]
    fn centering_examples() {
        let f = FiniteSet::from_coords("f", vec![vec![1.0, 1.0], vec![2.0, 0.0]]).unwrap();
        assert_eq!(coords(&center_at_zero(&f)), vec![vec![0.0, 0.0], vec![1.0, -1.0]]);
        let z = FiniteSet::from_coords("z", vec![vec![0.0, 0.0]]).unwrap();
        assert_eq!(coords(&center_at_zero(&z)), vec![vec![0.0, 0.0]]);
        let l = FiniteSet::from_coords("l", vec![vec![3.0], vec![5.0], vec![4.0]]).unwrap();
        assert_eq!(coords(&center_at_zero(&l)), vec![vec![0.0], vec![2.0], vec![1.0]]);
    }

    #[test]
    fn invalid_sets_are_rejected() {
        assert!(matches!(
            FiniteSet::from_coords("x", vec![vec![1.0], vec![1.0, 2.0]]),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            FiniteSet::from_coords("x", vec![vec![1.0], vec![1.0]]),
            Err(Error::Validation(_))
        ));
        assert!(matches!(FiniteSet::from_coords("x", vec![]), Err(Error::Validation(_))));
        assert!(Point::new(vec![f64::NAN]).is_err());
        assert!(Point::new(vec![]).is_err());
    }

    #[test]
    fn malformed_file_reports_position() {
        let err = FiniteSet::from_json("{\n \"name\": \"a\",\n \"dim\": 1,\n \"points\": [[1.0],, ]\n}")
            .unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        let err = FiniteSet::from_json(r#"{"name":"a","dim":2,"points":[[1.0,2.0],[3.0]]}"#)
            .unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        let err = FiniteSet::from_json(r#"{"name":"a","dim":2,"points":[]}"#).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        let err = FiniteSet::from_json(r#"{"name":"a","dim":3,"points":[[1.0,2.0]]}"#).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn dedup_maps_repeats_to_first_occurrence() {
        let pts = vec![
            Point::new(vec![1.0]).unwrap(),
            Point::new(vec![0.0]).unwrap(),
            Point::new(vec![1.0]).unwrap(),
            Point::new(vec![-0.0]).unwrap(),
        ];
        let (set, map) = FiniteSet::dedup("d", pts).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(map, vec![0, 1, 0, 1]);
    }
}
