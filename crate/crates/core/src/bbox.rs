use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Default traffic class list; a box's `class_id` indexes into it.
pub const TRAFFIC_CLASSES: [&str; 7] = [
    "car",
    "pedestrian",
    "truck",
    "bus",
    "train",
    "motorcycle",
    "bicycle",
];

pub fn default_class_names() -> Vec<String> {
    TRAFFIC_CLASSES.iter().map(|s| s.to_string()).collect()
}

/// Axis-aligned pixel box. Min edges are inclusive, max edges exclusive, so
/// the area is exactly `(x_max - x_min) * (y_max - y_min)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
    pub class_id: u32,
    pub confidence: f64,
}

impl BBox {
    pub fn new(
        x_min: u32,
        y_min: u32,
        x_max: u32,
        y_max: u32,
        class_id: u32,
        confidence: f64,
    ) -> Result<Self> {
        let b = BBox {
            x_min,
            y_min,
            x_max,
            y_max,
            class_id,
            confidence,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x_min >= self.x_max || self.y_min >= self.y_max {
            return Err(Error::InvalidBox(format!("{self}: empty extent")));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::InvalidBox(format!(
                "{self}: confidence outside [0, 1]"
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> u32 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> u32 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> u64 {
        u64::from(self.width()) * u64::from(self.height())
    }

    pub fn fits_within(&self, width: u32, height: u32) -> bool {
        self.x_max <= width && self.y_max <= height
    }

    pub fn with_confidence(mut self, confidence: f64) -> Self {
        self.confidence = confidence;
        self
    }

    pub fn as_array(&self) -> [f64; 6] {
        [
            f64::from(self.x_min),
            f64::from(self.y_min),
            f64::from(self.x_max),
            f64::from(self.y_max),
            f64::from(self.class_id),
            self.confidence,
        ]
    }

    /// Accepts real-valued coordinates from external nodes; they are rounded
    /// to the nearest pixel edge.
    pub fn from_array(a: [f64; 6]) -> Result<Self> {
        if a[..5].iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidBox(format!(
                "{a:?}: negative or non-finite field"
            )));
        }
        let r = |v: f64| v.round() as u32;
        BBox::new(r(a[0]), r(a[1]), r(a[2]), r(a[3]), r(a[4]), a[5])
    }
}

impl std::fmt::Display for BBox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}, {}, {}, {}, class {}, conf {}]",
            self.x_min, self.y_min, self.x_max, self.y_max, self.class_id, self.confidence
        )
    }
}

impl Serialize for BBox {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeTuple;
        let mut t = s.serialize_tuple(6)?;
        t.serialize_element(&self.x_min)?;
        t.serialize_element(&self.y_min)?;
        t.serialize_element(&self.x_max)?;
        t.serialize_element(&self.y_max)?;
        t.serialize_element(&self.class_id)?;
        t.serialize_element(&self.confidence)?;
        t.end()
    }
}

impl<'de> Deserialize<'de> for BBox {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let a = <[f64; 6]>::deserialize(d)?;
        BBox::from_array(a).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_is_a_flat_array() {
        let b = BBox::new(1, 2, 3, 4, 5, 0.5).unwrap();
        let s = serde_json::to_string(&b).unwrap();
        assert_eq!(s, "[1,2,3,4,5,0.5]");
        assert_eq!(serde_json::from_str::<BBox>(&s).unwrap(), b);
        assert_eq!(
            serde_json::from_str::<BBox>("[1.4,2,3.6,4,0,1]")
                .unwrap()
                .x_max,
            4
        );
    }

    #[test]
    fn rejects_degenerate() {
        assert!(BBox::new(3, 0, 3, 4, 0, 1.0).is_err());
        assert!(BBox::new(0, 0, 3, 4, 0, 1.5).is_err());
        assert!(serde_json::from_str::<BBox>("[5,0,2,4,0,1]").is_err());
        assert_eq!(BBox::new(0, 0, 10, 5, 0, 1.0).unwrap().area(), 50);
    }
}
