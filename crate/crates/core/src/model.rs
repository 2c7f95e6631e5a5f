//! Block inventories, assembly plans and their canonical JSON form.

use std::fmt;

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

/// Absolute tolerance used whenever two authored dimensions are compared.
pub const DIM_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("malformed document: {0}")]
    Json(String),
    #[error("entry {index}: {reason}")]
    InvalidEntry { index: usize, reason: String },
    #[error("inventory is empty")]
    EmptyInventory,
    #[error("dims {planned:?} are not an axis permutation of {inventory:?}")]
    NotAPermutation { planned: [f64; 3], inventory: [f64; 3] },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Cuboid,
    Cylinder,
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Cuboid => f.write_str("cuboid"),
            Shape::Cylinder => f.write_str("cylinder"),
        }
    }
}

pub(crate) fn dims_eq(a: [f64; 3], b: [f64; 3]) -> bool {
    a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= DIM_TOL)
}

pub(crate) fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= DIM_TOL
}

/// Rounds to six decimals and clears negative zero, the canonical float form.
pub fn canonical_f64(v: f64) -> f64 {
    let r = (v * 1e6).round() / 1e6;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

pub(crate) fn ser_f64<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(canonical_f64(*v))
}

pub(crate) fn ser_triple<S: Serializer>(v: &[f64; 3], s: S) -> Result<S::Ok, S::Error> {
    [canonical_f64(v[0]), canonical_f64(v[1]), canonical_f64(v[2])].serialize(s)
}

/// One line of the block inventory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub shape: Shape,
    #[serde(serialize_with = "ser_triple")]
    pub dims: [f64; 3],
    pub quantity: u32,
}

impl BlockSpec {
    /// Key under which two types count as the same block type.
    fn merge_key(&self) -> [f64; 3] {
        match self.shape {
            Shape::Cuboid => {
                let mut d = self.dims;
                d.sort_by(|a, b| a.total_cmp(b));
                d
            }
            Shape::Cylinder => self.dims,
        }
    }

    pub fn volume(&self) -> f64 {
        let [dx, dy, dz] = self.dims;
        match self.shape {
            Shape::Cuboid => dx * dy * dz,
            Shape::Cylinder => std::f64::consts::PI * 0.25 * dx * dx * dz,
        }
    }

    fn check(&self) -> Result<(), String> {
        check_dims(self.shape, self.dims, false)?;
        if self.quantity == 0 {
            return Err("quantity must be at least 1".into());
        }
        Ok(())
    }
}

pub(crate) fn check_dims(shape: Shape, dims: [f64; 3], allow_lying: bool) -> Result<(), String> {
    if dims.iter().any(|d| !d.is_finite() || *d <= 0.0) {
        return Err(format!("non-positive dimension in {dims:?}"));
    }
    if shape == Shape::Cylinder && !close(dims[0], dims[1]) {
        // A lying cylinder is recorded as (height, diameter, diameter).
        if !(allow_lying && close(dims[1], dims[2])) {
            return Err("cylinder diameter mismatch".into());
        }
    }
    Ok(())
}

/// Multiset of available blocks. Entries never share a merge key.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BlockInventory {
    entries: Vec<BlockSpec>,
}

impl BlockInventory {
    pub fn new(types: Vec<BlockSpec>) -> Result<Self, ModelError> {
        let mut entries: Vec<BlockSpec> = Vec::with_capacity(types.len());
        for (index, ty) in types.into_iter().enumerate() {
            ty.check()
                .map_err(|reason| ModelError::InvalidEntry { index, reason })?;
            let key = ty.merge_key();
            match entries
                .iter_mut()
                .find(|e| e.shape == ty.shape && dims_eq(e.merge_key(), key))
            {
                Some(existing) => existing.quantity += ty.quantity,
                None => entries.push(ty),
            }
        }
        Ok(Self { entries })
    }

    /// Exactly the blocks `plan` uses, one unit per planned block.
    pub fn covering(plan: &AssemblyPlan) -> Result<Self, ModelError> {
        let types = plan
            .blocks
            .iter()
            .map(|b| {
                let dims = if b.is_lying_cylinder() { [b.dims[1], b.dims[2], b.dims[0]] } else { b.dims };
                BlockSpec { shape: b.shape, dims, quantity: 1 }
            })
            .collect();
        Self::new(types)
    }

    pub fn entries(&self) -> &[BlockSpec] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_units(&self) -> usize {
        self.entries.iter().map(|e| e.quantity as usize).sum()
    }

    /// Adds one unit of `ty` (merging when the type already exists).
    pub fn with_extra_unit(&self, shape: Shape, dims: [f64; 3]) -> Result<Self, ModelError> {
        let mut types = self.entries.clone();
        types.push(BlockSpec { shape, dims, quantity: 1 });
        Self::new(types)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("inventory serializes")
    }
}

pub fn parse_inventory(text: &str) -> Result<BlockInventory, ModelError> {
    let types: Vec<BlockSpec> =
        serde_json::from_str(text).map_err(|e| ModelError::Json(e.to_string()))?;
    BlockInventory::new(types)
}

pub const NAMED_COLORS: [(&str, [u8; 3]); 16] = [
    ("black", [20, 20, 20]),
    ("white", [240, 240, 240]),
    ("red", [200, 40, 40]),
    ("green", [60, 170, 75]),
    ("blue", [45, 90, 200]),
    ("yellow", [230, 210, 50]),
    ("cyan", [60, 200, 210]),
    ("magenta", [200, 60, 190]),
    ("gray", [128, 128, 128]),
    ("orange", [235, 140, 40]),
    ("purple", [120, 60, 170]),
    ("brown", [130, 85, 50]),
    ("pink", [240, 150, 180]),
    ("lime", [150, 220, 60]),
    ("navy", [30, 40, 110]),
    ("teal", [30, 130, 130]),
];

/// Plan color: one of the named colors or an explicit RGB triple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Color {
    Named(String),
    Rgb([u8; 3]),
}

impl Color {
    pub fn named(name: &str) -> Self {
        Color::Named(name.to_string())
    }

    pub fn lookup(name: &str) -> Option<[u8; 3]> {
        let lower = name.trim().to_ascii_lowercase();
        let lower = if lower == "grey" { "gray".to_string() } else { lower };
        NAMED_COLORS
            .iter()
            .find(|(n, _)| *n == lower)
            .map(|(_, rgb)| *rgb)
    }

    /// Unknown names resolve to gray.
    pub fn rgb(&self) -> [u8; 3] {
        match self {
            Color::Rgb(c) => *c,
            Color::Named(n) => Color::lookup(n).unwrap_or([128, 128, 128]),
        }
    }
}

/// Block pose. Roll and pitch come from dimension switching and are never
/// part of a plan document.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    #[serde(serialize_with = "ser_triple")]
    pub position: [f64; 3],
    #[serde(serialize_with = "ser_f64")]
    pub yaw_deg: f64,
    pub roll_deg: u16,
    pub pitch_deg: u16,
}

impl Pose {
    pub fn new(position: [f64; 3], yaw_deg: f64) -> Self {
        Self {
            position,
            yaw_deg: normalize_yaw(yaw_deg),
            roll_deg: 0,
            pitch_deg: 0,
        }
    }
}

/// Maps any yaw onto [0, 360).
pub fn normalize_yaw(yaw: f64) -> f64 {
    let y = yaw.rem_euclid(360.0);
    if y >= 360.0 {
        0.0
    } else {
        y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedBlock {
    pub name: String,
    pub color: Color,
    pub shape: Shape,
    /// Oriented extents as placed, possibly a permutation of an inventory entry.
    pub dims: [f64; 3],
    pub pose: Pose,
}

impl PlannedBlock {
    pub fn descriptor(&self) -> BlockDescriptor {
        BlockDescriptor { shape: self.shape, dims: self.dims }
    }

    pub fn is_lying_cylinder(&self) -> bool {
        self.shape == Shape::Cylinder && !close(self.dims[0], self.dims[1])
    }
}

/// Shape and dims, the identity the matcher and the Judge care about.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockDescriptor {
    pub shape: Shape,
    #[serde(serialize_with = "ser_triple")]
    pub dims: [f64; 3],
}

impl fmt::Display for BlockDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c] = self.dims.map(canonical_f64);
        write!(f, "{} {a}x{b}x{c}", self.shape)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssemblyPlan {
    pub target: String,
    pub iteration: u32,
    pub blocks: Vec<PlannedBlock>,
}

#[derive(Serialize, Deserialize)]
struct PlanDoc {
    target: String,
    iteration: u32,
    blocks: Vec<PlanBlockDoc>,
}

#[derive(Serialize, Deserialize)]
struct PlanBlockDoc {
    #[serde(default)]
    name: String,
    color: Color,
    shape: Shape,
    #[serde(serialize_with = "ser_triple")]
    dims: [f64; 3],
    #[serde(serialize_with = "ser_triple")]
    position: [f64; 3],
    #[serde(default, serialize_with = "ser_f64")]
    yaw: f64,
}

impl AssemblyPlan {
    pub fn from_value(value: serde_json::Value) -> Result<Self, ModelError> {
        let doc: PlanDoc =
            serde_json::from_value(value).map_err(|e| ModelError::Json(e.to_string()))?;
        let mut blocks = Vec::with_capacity(doc.blocks.len());
        for (index, b) in doc.blocks.into_iter().enumerate() {
            check_dims(b.shape, b.dims, true)
                .map_err(|reason| ModelError::InvalidEntry { index, reason })?;
            if b.position.iter().any(|p| !p.is_finite()) || !b.yaw.is_finite() {
                return Err(ModelError::InvalidEntry {
                    index,
                    reason: "non-finite pose".into(),
                });
            }
            if let Color::Named(n) = &b.color {
                if Color::lookup(n).is_none() {
                    log::warn!("block {index}: unknown color {n:?}, drawing it gray");
                }
            }
            blocks.push(PlannedBlock {
                name: b.name,
                color: b.color,
                shape: b.shape,
                dims: b.dims,
                pose: Pose::new(b.position, b.yaw),
            });
        }
        Ok(Self { target: doc.target, iteration: doc.iteration, blocks })
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self.doc()).expect("plan serializes")
    }

    fn doc(&self) -> PlanDoc {
        PlanDoc {
            target: self.target.clone(),
            iteration: self.iteration,
            blocks: self
                .blocks
                .iter()
                .map(|b| PlanBlockDoc {
                    name: b.name.clone(),
                    color: b.color.clone(),
                    shape: b.shape,
                    dims: b.dims,
                    position: b.pose.position,
                    yaw: b.pose.yaw_deg,
                })
                .collect(),
        }
    }

    /// Canonical pretty JSON: fixed key order, floats at six decimals.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.doc()).expect("plan serializes")
    }

    /// Plan document without semantic names, as shown to the Judge.
    pub fn to_value_without_names(&self) -> serde_json::Value {
        let mut v = self.to_value();
        if let Some(blocks) = v.get_mut("blocks").and_then(|b| b.as_array_mut()) {
            for b in blocks {
                if let Some(obj) = b.as_object_mut() {
                    obj.remove("name");
                }
            }
        }
        v
    }
}

impl Serialize for AssemblyPlan {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.doc().serialize(s)
    }
}

impl<'de> Deserialize<'de> for AssemblyPlan {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let value = serde_json::Value::deserialize(d)?;
        Self::from_value(value).map_err(serde::de::Error::custom)
    }
}

pub fn parse_plan(text: &str) -> Result<AssemblyPlan, ModelError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| ModelError::Json(e.to_string()))?;
    AssemblyPlan::from_value(value)
}
