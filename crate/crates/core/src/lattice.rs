//! Lattice points as sets of consistency properties.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Property {
    GPO,
    GDO,
    GWO,
    GAO,
    GPDO,
}

impl Property {
    pub const ALL: [Property; 5] = [
        Property::GPO,
        Property::GDO,
        Property::GWO,
        Property::GAO,
        Property::GPDO,
    ];

    fn bit(self) -> u8 {
        1 << self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            Property::GPO => "GPO",
            Property::GDO => "GDO",
            Property::GWO => "GWO",
            Property::GAO => "GAO",
            Property::GPDO => "GPDO",
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Property {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Property::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown property `{s}`"))
    }
}

/// A set of properties, not necessarily normalized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PropertySet(u8);

impl PropertySet {
    pub const EMPTY: PropertySet = PropertySet(0);

    pub fn new(props: impl IntoIterator<Item = Property>) -> Self {
        let mut s = PropertySet::EMPTY;
        for p in props {
            s.insert(p);
        }
        s
    }

    pub fn insert(&mut self, p: Property) {
        self.0 |= p.bit();
    }

    pub fn remove(&mut self, p: Property) {
        self.0 &= !p.bit();
    }

    pub fn contains(self, p: Property) -> bool {
        self.0 & p.bit() != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset(self, other: PropertySet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn union(self, other: PropertySet) -> PropertySet {
        PropertySet(self.0 | other.0)
    }

    pub fn intersection(self, other: PropertySet) -> PropertySet {
        PropertySet(self.0 & other.0)
    }

    pub fn iter(self) -> impl Iterator<Item = Property> {
        Property::ALL.into_iter().filter(move |p| self.contains(*p))
    }

    /// Adds every property implied by the members: GAO implies GDO, and
    /// GPO or GDO imply GPDO.
    pub fn expanded(self) -> PropertySet {
        let mut s = self;
        if s.contains(Property::GAO) {
            s.insert(Property::GDO);
        }
        if s.contains(Property::GPO) || s.contains(Property::GDO) {
            s.insert(Property::GPDO);
        }
        s
    }

    /// Drops every property implied by another member.
    pub fn normalized(self) -> PropertySet {
        let mut s = self.expanded();
        if s.contains(Property::GAO) {
            s.remove(Property::GDO);
        }
        if s.contains(Property::GPO) || s.contains(Property::GDO) || s.contains(Property::GAO) {
            s.remove(Property::GPDO);
        }
        s
    }
}

impl fmt::Display for PropertySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("LOCAL");
        }
        let names: Vec<_> = self.iter().map(Property::name).collect();
        f.write_str(&names.join("+"))
    }
}

impl FromStr for PropertySet {
    type Err = String;

    /// `GPO+GWO` style, case-insensitive; `LOCAL` is the empty set.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim().eq_ignore_ascii_case("local") {
            return Ok(PropertySet::EMPTY);
        }
        let mut set = PropertySet::EMPTY;
        for part in s.split('+') {
            set.insert(part.parse()?);
        }
        Ok(set)
    }
}

impl Serialize for PropertySet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PropertySet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Comparison {
    Stronger,
    Weaker,
    Equal,
    Incomparable,
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Comparison::Stronger => "stronger",
            Comparison::Weaker => "weaker",
            Comparison::Equal => "equal",
            Comparison::Incomparable => "incomparable",
        })
    }
}

/// A point of the lattice. `augmented` marks processor consistency, which
/// shares its property set with GPO+GDO but quantifies over augmented data
/// orders.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelNode {
    pub properties: PropertySet,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub augmented: bool,
}

const SEQUENTIAL_BITS: [Property; 3] = [Property::GPO, Property::GWO, Property::GAO];

impl ModelNode {
    pub fn new(properties: PropertySet) -> Self {
        ModelNode {
            properties: properties.normalized(),
            augmented: false,
        }
    }

    pub fn of(props: &[Property]) -> Self {
        ModelNode::new(PropertySet::new(props.iter().copied()))
    }

    pub fn local() -> Self {
        ModelNode::new(PropertySet::EMPTY)
    }

    pub fn sequential() -> Self {
        ModelNode::of(&SEQUENTIAL_BITS)
    }

    pub fn processor() -> Self {
        ModelNode {
            properties: PropertySet::new([Property::GPO, Property::GDO]),
            augmented: true,
        }
    }

    pub fn contains(&self, p: Property) -> bool {
        self.properties.contains(p)
    }

    pub fn is_sequential(&self) -> bool {
        self.properties == ModelNode::sequential().properties
    }

    /// `LOCAL`, `SEQUENTIAL`, or the properties joined by `+`.
    pub fn label(&self) -> String {
        if self.augmented {
            "GPO+GDO'".to_string()
        } else if self.is_sequential() {
            "SEQUENTIAL".to_string()
        } else {
            self.properties.to_string()
        }
    }

    /// Classical names of this node, if any.
    pub fn aliases(&self) -> &'static [&'static str] {
        if self.augmented {
            return &["processor"];
        }
        match self.properties.to_string().as_str() {
            "LOCAL" => &["local"],
            "GPDO" => &["slow"],
            "GPO" => &["pram"],
            "GDO" => &["cache"],
            "GPO+GWO" => &["causal"],
            "GPO+GWO+GAO" => &["sequential"],
            _ => &[],
        }
    }

    pub fn compare(&self, other: &ModelNode) -> Comparison {
        if self.augmented != other.augmented && self.properties == other.properties {
            return if self.augmented {
                Comparison::Stronger
            } else {
                Comparison::Weaker
            };
        }
        let a = self.properties.expanded();
        let b = other.properties.expanded();
        match (b.is_subset(a), a.is_subset(b)) {
            (true, true) => Comparison::Equal,
            (true, false) => Comparison::Stronger,
            (false, true) => Comparison::Weaker,
            (false, false) => Comparison::Incomparable,
        }
    }

    pub fn lub(&self, other: &ModelNode) -> ModelNode {
        ModelNode::new(
            self.properties
                .expanded()
                .union(other.properties.expanded()),
        )
    }

    pub fn glb(&self, other: &ModelNode) -> ModelNode {
        ModelNode::new(
            self.properties
                .expanded()
                .intersection(other.properties.expanded()),
        )
    }
}

impl fmt::Display for ModelNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// The boxes of the lattice figure, bottom to top.
pub fn lattice_nodes() -> Vec<ModelNode> {
    use Property::*;
    [
        &[][..],
        &[GPDO],
        &[GPO],
        &[GDO],
        &[GWO],
        &[GAO],
        &[GPO, GDO],
        &[GPO, GWO],
        &[GDO, GWO],
        &[GPO, GAO],
        &[GWO, GAO],
        &[GPO, GDO, GWO],
        &[GPO, GWO, GAO],
    ]
    .iter()
    .map(|props| ModelNode::of(props))
    .collect()
}
