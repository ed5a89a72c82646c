//! Run configuration: one TOML file, validated with every problem reported.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::features::Variant;
use crate::model::ModelConfig;
use crate::pipeline::TrainConfig;
use crate::synth::SynthConfig;

/// Input files. Empty paths select synthetic mode, where the `synth` stage
/// writes every input under the output directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputPaths {
    pub zones: String,
    pub stations: String,
    pub trips: String,
    pub weather: String,
    pub calendar: String,
    pub loops: String,
    pub loop_zones: String,
}

impl InputPaths {
    pub fn is_synthetic(&self) -> bool {
        self.entries().iter().all(|(_, p)| p.is_empty())
    }

    pub fn entries(&self) -> [(&'static str, &String); 7] {
        [
            ("zones", &self.zones),
            ("stations", &self.stations),
            ("trips", &self.trips),
            ("weather", &self.weather),
            ("calendar", &self.calendar),
            ("loops", &self.loops),
            ("loop_zones", &self.loop_zones),
        ]
    }
}

/// Windows counted in whole days from the first day of data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Days skipped before the training window.
    pub skip_days: usize,
    pub train_days: usize,
    pub test_days: usize,
    /// First and last hour of day kept in the test window.
    pub test_hours: [u32; 2],
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            skip_days: 0,
            train_days: 35,
            test_days: 7,
            test_hours: [7, 21],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds the synthetic city and every model.
    pub seed: u64,
    pub out_dir: String,
    pub variants: Vec<String>,
    /// Zone count after aggregation.
    pub aggregate_target: usize,
    pub p_bike: f64,
    /// Also write per-variant prediction dumps during `eval`.
    pub dump_predictions: bool,
    pub inputs: InputPaths,
    pub synth: SynthConfig,
    pub split: SplitConfig,
    pub train: TrainConfig,
    pub model: ModelConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            out_dir: "odflow-out".into(),
            variants: Variant::names(),
            aggregate_target: 50,
            p_bike: 0.6,
            dump_predictions: false,
            inputs: InputPaths::default(),
            synth: SynthConfig::default(),
            split: SplitConfig::default(),
            train: TrainConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

/// One validation problem: the offending key path and what to do about it.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct ConfigIssue {
    pub key: String,
    pub message: String,
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

/// Keys whose value is owned elsewhere in the file.
const REDIRECTED: [(&str, &str); 3] = [
    ("synth.seed", "use the top-level `seed`"),
    ("train.seed", "use the top-level `seed`"),
    ("model.dropout", "set `train.dropout`, which drives dropout during training"),
];

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

/// Reports keys of `given` absent from `reference`, recursing into tables.
fn unknown_keys(prefix: &str, given: &Table, reference: &Table, issues: &mut Vec<ConfigIssue>) {
    for (k, v) in given {
        let path = join(prefix, k);
        if let Some((_, hint)) = REDIRECTED.iter().find(|(p, _)| *p == path) {
            issues.push(ConfigIssue { key: path, message: format!("not accepted here; {hint}") });
            continue;
        }
        match (v, reference.get(k)) {
            (Value::Table(sub), Some(Value::Table(rsub))) => unknown_keys(&path, sub, rsub, issues),
            (_, Some(_)) => {}
            (_, None) => {
                let valid: Vec<&str> = reference
                    .keys()
                    .map(String::as_str)
                    .filter(|r| !REDIRECTED.iter().any(|(p, _)| *p == join(prefix, r)))
                    .collect();
                issues.push(ConfigIssue {
                    key: path,
                    message: format!("unknown key; valid keys here are: {}", valid.join(", ")),
                });
            }
        }
    }
}

fn strip_unknown(given: &mut Table, reference: &Table, prefix: &str) {
    given.retain(|k, _| reference.contains_key(k) && !REDIRECTED.iter().any(|(p, _)| *p == join(prefix, k)));
    for (k, v) in given.iter_mut() {
        if let (Value::Table(sub), Some(Value::Table(rsub))) = (v, reference.get(k)) {
            strip_unknown(sub, rsub, &join(prefix, k));
        }
    }
}

fn to_table<T: Serialize>(value: &T) -> Table {
    Table::try_from(value).expect("config types serialize to TOML tables")
}

/// Deserializes `section` one key at a time over the defaults so that every
/// type error is reported, then returns the merged value.
fn typed_section<T: Serialize + DeserializeOwned + Default>(
    prefix: &str,
    given: &Table,
    issues: &mut Vec<ConfigIssue>,
) -> T {
    let defaults = to_table(&T::default());
    let mut merged = defaults.clone();
    for (k, v) in given {
        let mut probe = defaults.clone();
        probe.insert(k.clone(), v.clone());
        match T::deserialize(Value::Table(probe)) {
            Ok(_) => {
                merged.insert(k.clone(), v.clone());
            }
            Err(e) => issues.push(ConfigIssue {
                key: join(prefix, k),
                message: e.message().trim().to_string(),
            }),
        }
    }
    T::deserialize(Value::Table(merged)).unwrap_or_default()
}

impl RunConfig {
    /// Parses and validates TOML text. On failure returns every problem found.
    pub fn from_toml(text: &str) -> Result<Self, Vec<ConfigIssue>> {
        let mut given: Table = text.parse().map_err(|e: toml::de::Error| {
            vec![ConfigIssue {
                key: "<file>".into(),
                message: format!("not valid TOML: {}", e.message()),
            }]
        })?;
        let reference = to_table(&RunConfig::default());
        let mut issues = Vec::new();
        unknown_keys("", &given, &reference, &mut issues);
        strip_unknown(&mut given, &reference, "");

        let mut top = given.clone();
        let mut section = |name: &str| match top.remove(name) {
            Some(Value::Table(t)) => Some(t),
            Some(_) => {
                issues.push(ConfigIssue { key: name.into(), message: "must be a table".into() });
                None
            }
            None => None,
        };
        let sections: Vec<(&str, Option<Table>)> = ["inputs", "synth", "split", "train", "model"]
            .into_iter()
            .map(|n| (n, section(n)))
            .collect();
        let mut cfg: RunConfig = typed_section("", &top, &mut issues);
        for (name, table) in sections {
            let t = table.unwrap_or_default();
            match name {
                "inputs" => cfg.inputs = typed_section(name, &t, &mut issues),
                "synth" => cfg.synth = typed_section(name, &t, &mut issues),
                "split" => cfg.split = typed_section(name, &t, &mut issues),
                "train" => cfg.train = typed_section(name, &t, &mut issues),
                _ => cfg.model = typed_section(name, &t, &mut issues),
            }
        }
        cfg.normalize();
        issues.extend(cfg.problems());
        if issues.is_empty() {
            Ok(cfg)
        } else {
            issues.sort();
            issues.dedup();
            Err(issues)
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, Vec<ConfigIssue>> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            vec![ConfigIssue {
                key: "<file>".into(),
                message: format!("cannot read {}: {e}", path.display()),
            }]
        })?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Propagates the top-level seed into the sections that use it.
    pub fn normalize(&mut self) {
        self.synth.seed = self.seed;
        self.train.seed = self.seed;
        self.model.dropout = self.train.dropout;
    }

    /// Makes relative input paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut String| {
            if !p.is_empty() && Path::new(p.as_str()).is_relative() {
                *p = base.join(&*p).to_string_lossy().into_owned();
            }
        };
        let i = &mut self.inputs;
        for p in [
            &mut i.zones,
            &mut i.stations,
            &mut i.trips,
            &mut i.weather,
            &mut i.calendar,
            &mut i.loops,
            &mut i.loop_zones,
        ] {
            fix(p);
        }
    }

    /// Semantic checks on an already typed config.
    pub fn problems(&self) -> Vec<ConfigIssue> {
        let mut out = Vec::new();
        let mut add = |key: String, message: String| out.push(ConfigIssue { key, message });
        if !(self.p_bike > 0.0 && self.p_bike <= 1.0) {
            add("p_bike".into(), format!("must lie in (0, 1], got {}", self.p_bike));
        }
        if self.aggregate_target == 0 {
            add("aggregate_target".into(), "must be at least 1".into());
        }
        if self.out_dir.is_empty() {
            add("out_dir".into(), "must not be empty".into());
        }
        if self.variants.is_empty() {
            add("variants".into(), format!("list at least one of: {}", Variant::names().join(", ")));
        }
        let mut seen = BTreeSet::new();
        for (i, v) in self.variants.iter().enumerate() {
            if v.parse::<Variant>().is_err() {
                add(format!("variants[{i}]"), format!("unknown variant {v:?}; valid variants are: {}", Variant::names().join(", ")));
            } else if !seen.insert(v.clone()) {
                add(format!("variants[{i}]"), format!("{v} is listed twice"));
            }
        }
        let given = self.inputs.entries();
        let missing: Vec<&str> = given.iter().filter(|(_, p)| p.is_empty()).map(|(k, _)| *k).collect();
        if !self.inputs.is_synthetic() && !missing.is_empty() {
            for k in missing {
                add(format!("inputs.{k}"), "required when any input path is set (leave all empty for synthetic data)".into());
            }
        }
        let s = &self.split;
        if s.train_days <= 7 {
            add("split.train_days".into(), format!("must exceed the 7-day lag history, got {}", s.train_days));
        }
        if s.test_days == 0 {
            add("split.test_days".into(), "must be at least 1".into());
        }
        if s.test_hours[0] > s.test_hours[1] || s.test_hours[1] > 23 {
            add("split.test_hours".into(), format!("need first <= last <= 23, got {:?}", s.test_hours));
        }
        if self.inputs.is_synthetic() {
            let need = s.skip_days + s.train_days + s.test_days;
            if need > self.synth.days {
                add("split".into(), format!("windows span {need} days but synth.days is {}", self.synth.days));
            }
        }
        let section = |prefix: &str, items: Vec<(String, String)>| -> Vec<ConfigIssue> {
            items
                .into_iter()
                .filter(|(k, _)| !(prefix == "model" && k == "dropout"))
                .map(|(k, m)| ConfigIssue { key: format!("{prefix}.{k}"), message: m })
                .collect()
        };
        out.extend(section("synth", self.synth.problems()));
        out.extend(section("train", self.train.problems()));
        out.extend(section("model", self.model.problems()));
        out
    }

    pub fn parsed_variants(&self) -> Vec<Variant> {
        self.variants.iter().filter_map(|v| v.parse().ok()).collect()
    }

    /// The normalized config as TOML.
    pub fn to_toml(&self) -> String {
        let mut t = to_table(self);
        if let Some(Value::Table(s)) = t.get_mut("synth") {
            s.remove("seed");
        }
        if let Some(Value::Table(s)) = t.get_mut("train") {
            s.remove("seed");
        }
        if let Some(Value::Table(s)) = t.get_mut("model") {
            s.remove("dropout");
        }
        toml::to_string(&t).expect("config serializes")
    }

    pub fn out_path(&self) -> PathBuf {
        PathBuf::from(&self.out_dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn keys(issues: &[ConfigIssue]) -> Vec<&str> {
        issues.iter().map(|i| i.key.as_str()).collect()
    }

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        let mut expect = RunConfig::default();
        expect.normalize();
        assert_eq!(cfg, expect);
        assert_eq!(cfg.aggregate_target, 50);
        assert_eq!(cfg.p_bike, 0.6);
        assert_eq!(cfg.split.test_hours, [7, 21]);
        assert_eq!(cfg.variants.len(), 15);
        let echoed = cfg.to_toml();
        assert_eq!(RunConfig::from_toml(&echoed).unwrap(), cfg);
    }

    #[test]
    fn p_bike_range() {
        let e = RunConfig::from_toml("p_bike = 1.5").unwrap_err();
        assert_eq!(keys(&e), vec!["p_bike"]);
        assert!(e[0].message.contains("(0, 1]"));
    }

    #[test]
    fn unknown_variant_lists_valid_names() {
        let e = RunConfig::from_toml("variants = [\"X\", \"W9\"]").unwrap_err();
        assert_eq!(keys(&e), vec!["variants[1]"]);
        for name in Variant::names() {
            assert!(e[0].message.contains(&name));
        }
    }

    #[test]
    fn all_errors_reported_together() {
        let text = r#"
            p_bike = 0
            colour = "red"
            [train]
            epochs = "many"
            batch_size = 0
            seed = 3
            [model]
            dropout = 0.1
            [model.embedding]
            widht = 3
        "#;
        let e = RunConfig::from_toml(text).unwrap_err();
        assert_eq!(
            keys(&e),
            vec!["colour", "model.dropout", "model.embedding.widht", "p_bike", "train.batch_size", "train.epochs", "train.seed"]
        );
        assert!(e.iter().find(|i| i.key == "colour").unwrap().message.contains("valid keys"));
    }

    #[test]
    fn seed_propagates() {
        let cfg = RunConfig::from_toml("seed = 42\n[train]\ndropout = 0.2").unwrap();
        assert_eq!((cfg.synth.seed, cfg.train.seed), (42, 42));
        assert_eq!(cfg.model.dropout, 0.2);
    }

    #[test]
    fn partial_inputs_rejected() {
        let e = RunConfig::from_toml("[inputs]\ntrips = \"t.csv\"").unwrap_err();
        assert!(keys(&e).contains(&"inputs.zones"));
        assert!(!keys(&e).contains(&"inputs.trips"));
    }

    #[test]
    fn split_must_fit_synthetic_horizon() {
        let e = RunConfig::from_toml("[split]\ntrain_days = 40\ntest_days = 7").unwrap_err();
        assert_eq!(keys(&e), vec!["split"]);
    }
}
