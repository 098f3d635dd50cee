//! Persistence diagrams and their serialization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One feature: born at `birth`, dead at `death` (`f64::INFINITY` for
/// essential classes), in homology dimension `dimension`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersistencePoint {
    pub birth: f64,
    #[serde(with = "inf_marker")]
    pub death: f64,
    pub dimension: usize,
}

impl PersistencePoint {
    pub fn persistence(&self) -> f64 {
        self.death - self.birth
    }

    pub fn is_essential(&self) -> bool {
        self.death.is_infinite()
    }
}

/// Which filtration produced a diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FiltrationKind {
    Rips {
        /// Edge-length cap; `None` builds the full complex.
        max_edge: Option<f64>,
    },
    Sublevel {
        k_neighbors: usize,
    },
}

/// Multiset of persistence points in canonical order
/// (dimension, birth, death).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceDiagram {
    pub points: Vec<PersistencePoint>,
    pub filtration: FiltrationKind,
    /// Features still alive at the edge-length cap whose death was truncated
    /// to the cap.
    pub truncated: usize,
}

impl PersistenceDiagram {
    pub fn new(
        mut points: Vec<PersistencePoint>,
        filtration: FiltrationKind,
        truncated: usize,
    ) -> Self {
        points.sort_by(|a, b| {
            a.dimension
                .cmp(&b.dimension)
                .then(a.birth.total_cmp(&b.birth))
                .then(a.death.total_cmp(&b.death))
        });
        Self { points, filtration, truncated }
    }

    pub fn points_of_dim(&self, dim: usize) -> impl Iterator<Item = &PersistencePoint> {
        self.points.iter().filter(move |p| p.dimension == dim)
    }

    pub fn essential_count(&self) -> usize {
        self.points.iter().filter(|p| p.is_essential()).count()
    }

    /// CSV rows `dimension,birth,death` with `inf` for essential classes.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dimension,birth,death\n");
        for p in &self.points {
            let death = if p.death.is_infinite() {
                "inf".to_string()
            } else {
                format!("{}", p.death)
            };
            out.push_str(&format!("{},{},{}\n", p.dimension, p.birth, death));
        }
        out
    }

    pub fn from_csv(text: &str, filtration: FiltrationKind) -> Result<Self> {
        let mut points = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::InvalidInput(format!(
                    "diagram csv line {} has {} fields",
                    lineno + 1,
                    fields.len()
                )));
            }
            let dimension = fields[0]
                .trim()
                .parse::<usize>()
                .map_err(|e| Error::InvalidInput(format!("bad dimension: {e}")))?;
            let birth = fields[1]
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidInput(format!("bad birth: {e}")))?;
            let death = match fields[2].trim() {
                "inf" => f64::INFINITY,
                v => v
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidInput(format!("bad death: {e}")))?,
            };
            points.push(PersistencePoint { birth, death, dimension });
        }
        Ok(Self::new(points, filtration, 0))
    }
}

/// Sum of finite feature lifespans; essential classes are excluded.
pub fn total_persistence(diagram: &PersistenceDiagram) -> f64 {
    diagram
        .points
        .iter()
        .filter(|p| !p.is_essential())
        .map(PersistencePoint::persistence)
        .sum()
}

/// JSON-safe encoding of a possibly-infinite death value ("inf" string).
mod inf_marker {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum DeathRepr {
        Finite(f64),
        Marker(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            DeathRepr::Marker("inf".into()).serialize(s)
        } else {
            DeathRepr::Finite(*v).serialize(s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match DeathRepr::deserialize(d)? {
            DeathRepr::Finite(v) => Ok(v),
            DeathRepr::Marker(m) if m == "inf" => Ok(f64::INFINITY),
            DeathRepr::Marker(m) => Err(serde::de::Error::custom(format!(
                "unknown death marker {m:?}"
            ))),
        }
    }
}
