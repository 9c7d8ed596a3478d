//! The fixed, versioned roster of object classes scored by the evaluator.
//!
//! Index order is score-relevant: label vectors are stored positionally.
//! Background is never a stored entry; it is the residual mass of a vector.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub const CLASS_LIST_VERSION: &str = "coco25-v1";

pub const NUM_CLASSES: usize = 25;

pub const CLASS_NAMES: [&str; NUM_CLASSES] = [
    "bottle", "cup", "bowl", "spoon", "banana", "apple", "orange", "cake", "plant", "mouse",
    "keyboard", "laptop", "book", "clock", "chair", "table", "couch", "bed", "toilet", "tv",
    "microwave", "toaster", "fridge", "sink", "person",
];

/// Name reserved for the implicit residual class.
pub const BACKGROUND: &str = "background";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassId(u8);

impl ClassId {
    pub fn from_index(i: usize) -> Option<Self> {
        (i < NUM_CLASSES).then_some(ClassId(i as u8))
    }

    pub fn from_name(name: &str) -> Option<Self> {
        CLASS_NAMES.iter().position(|n| *n == name).map(|i| ClassId(i as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        CLASS_NAMES[self.index()]
    }

    pub fn all() -> impl Iterator<Item = ClassId> {
        (0..NUM_CLASSES as u8).map(ClassId)
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for ClassId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for ClassId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let name = String::deserialize(d)?;
        ClassId::from_name(&name)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown class '{name}'")))
    }
}
