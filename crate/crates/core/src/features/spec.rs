use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::weather::WeatherSignal;
use super::FeatureError;

/// Model input variants: baseline `X`, time embedding `T`, weather `W1..W7`,
/// car flow `I1..I5`, and the combination `WIT`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    X,
    T,
    W(u8),
    I(u8),
    Wit,
}

impl Variant {
    /// The fifteen variants in reporting order.
    pub fn all() -> Vec<Variant> {
        let mut v = vec![Variant::X, Variant::T];
        v.extend((1..=7).map(Variant::W));
        v.extend((1..=5).map(Variant::I));
        v.push(Variant::Wit);
        v
    }

    pub fn names() -> Vec<String> {
        Self::all().iter().map(|v| v.to_string()).collect()
    }

    /// Term lists for this variant. Offsets are relative to the forecast hour:
    /// negative for past hours, 0 for the forecast hour, positive beyond it.
    pub fn spec(self) -> FeatureSpec {
        use WeatherSignal::{Hd, Hr};
        let (weather, flow, embedding): (Vec<(WeatherSignal, i64)>, Vec<i64>, bool) = match self {
            Variant::X => (vec![], vec![], false),
            Variant::T => (vec![], vec![], true),
            Variant::W(1) => (vec![(Hr, -1)], vec![], false),
            Variant::W(2) => (vec![(Hr, -2), (Hr, -1)], vec![], false),
            Variant::W(3) => (vec![(Hr, -3), (Hr, -2), (Hr, -1)], vec![], false),
            Variant::W(4) => (vec![(Hr, 0)], vec![], false),
            Variant::W(5) => (vec![(Hr, -1), (Hr, 0)], vec![], false),
            Variant::W(6) => (vec![(Hr, -1), (Hd, -1)], vec![], false),
            Variant::W(7) => (vec![(Hr, 0), (Hd, 0)], vec![], false),
            Variant::I(1) => (vec![], vec![-1], false),
            Variant::I(2) => (vec![], vec![-2, -1], false),
            Variant::I(3) => (vec![], vec![0], false),
            Variant::I(4) => (vec![], vec![-1, 0], false),
            Variant::I(5) => (vec![], vec![-2, -1, 0], false),
            Variant::Wit => (vec![(Hr, -1), (Hr, 0), (Hr, 1)], vec![-1, 0], true),
            Variant::W(_) | Variant::I(_) => unreachable!("constructed through FromStr or all()"),
        };
        FeatureSpec {
            variant: self,
            weather_terms: weather,
            flow_terms: flow,
            embedding,
        }
    }

    /// Family used to group report tables.
    pub fn family(self) -> &'static str {
        match self {
            Variant::X => "X",
            Variant::T => "T",
            Variant::W(_) => "W",
            Variant::I(_) => "I",
            Variant::Wit => "WIT",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::X => f.write_str("X"),
            Variant::T => f.write_str("T"),
            Variant::W(k) => write!(f, "W{k}"),
            Variant::I(k) => write!(f, "I{k}"),
            Variant::Wit => f.write_str("WIT"),
        }
    }
}

impl FromStr for Variant {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::all()
            .into_iter()
            .find(|v| v.to_string() == s.trim())
            .ok_or_else(|| FeatureError::UnknownVariant {
                name: s.to_string(),
                valid: Variant::names(),
            })
    }
}

impl Serialize for Variant {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Variant {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Context terms appended after the four base lags.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub variant: Variant,
    pub weather_terms: Vec<(WeatherSignal, i64)>,
    pub flow_terms: Vec<i64>,
    pub embedding: bool,
}

impl FeatureSpec {
    /// Column count `L` of the feature matrix (excluding the embedding).
    pub fn width(&self) -> usize {
        super::panel::LAG_OFFSETS.len() + self.weather_terms.len() + self.flow_terms.len()
    }

    /// Column labels in matrix order.
    pub fn column_names(&self) -> Vec<String> {
        let mut out: Vec<String> = ["Y(t-7d)", "Y(t-1d)", "Y(t-2)", "Y(t-1)"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let off = |o: i64| match o {
            0 => "t".to_string(),
            o if o < 0 => format!("t{o}"),
            o => format!("t+{o}"),
        };
        out.extend(self.weather_terms.iter().map(|(s, o)| format!("{}({})", s.name(), off(*o))));
        out.extend(self.flow_terms.iter().map(|o| format!("I({})", off(*o))));
        out
    }

    /// Largest look-back in hours needed by the context terms.
    pub fn max_past_offset(&self) -> usize {
        self.weather_terms
            .iter()
            .map(|(_, o)| *o)
            .chain(self.flow_terms.iter().copied())
            .map(|o| (-o).max(0) as usize)
            .max()
            .unwrap_or(0)
    }

    /// Largest look-ahead in hours needed by the context terms.
    pub fn max_future_offset(&self) -> usize {
        self.weather_terms
            .iter()
            .map(|(_, o)| *o)
            .chain(self.flow_terms.iter().copied())
            .map(|o| o.max(0) as usize)
            .max()
            .unwrap_or(0)
    }
}
