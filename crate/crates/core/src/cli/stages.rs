use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use super::{digest_bytes, CliError, Manifest, RunConfig};
use crate::features::io::{
    read_calendar, read_loop_records, read_loop_zones, read_trips, read_weather, read_zone_flows, write_calendar,
    write_weather, write_zone_flows,
};
use crate::features::{aggregate_flow_by_zone, clean_loop_data, trips_to_panel, CalendarTable, HourGrid, ODDemandPanel, Variant};
use crate::geo::io::{read_station_locations, write_station_assignment};
use crate::geo::{assign_stations, load_partition, merge_tree, partition_to_geojson};
use crate::graphs::{read_stack, write_stack, STACK_MANIFEST};
use crate::model::{load_checkpoint, save_checkpoint};
use crate::pipeline::{
    default_scenarios, evaluate_variant, fit_variant, write_predictions, ExperimentData, MetricsReport, SplitSpec,
};
use crate::synth::write_city;

/// Stage names in execution order.
pub const STAGES: [&str; 7] = ["synth", "aggregate", "graphs", "featurize", "train", "eval", "report"];

const SYNTH_FILES: [(&str, &str); 7] = [
    ("zones", "zones.geojson"),
    ("stations", "stations.csv"),
    ("trips", "trips.csv"),
    ("weather", "weather.csv"),
    ("calendar", "calendar.csv"),
    ("loops", "loops.csv"),
    ("loop_zones", "loop_zones.csv"),
];

const DEMAND: &str = "aggregate/demand.json";
const AGG_ZONES: &str = "aggregate/zones.geojson";
const MERGE_TREE: &str = "aggregate/merge_tree.json";
const PANEL: &str = "features/panel.json";
const WEATHER: &str = "features/weather.csv";
const FLOWS: &str = "features/zone_flows.csv";
const CALENDAR: &str = "features/calendar.csv";
const METRICS: &str = "eval/metrics.csv";

/// One invocation against an output directory.
pub struct Run {
    cfg: RunConfig,
    out: PathBuf,
    manifest: Manifest,
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::user(format!("cannot open {}: {e}", path.display())))
}

fn grid_from_calendar(calendar: &CalendarTable) -> Result<HourGrid, CliError> {
    let (Some(first), Some(last)) = (calendar.days.keys().next(), calendar.days.keys().next_back()) else {
        return Err(CliError::user("the calendar lists no dates"));
    };
    let days = (*last - *first).num_days() as usize + 1;
    if days != calendar.days.len() {
        return Err(CliError::user(format!(
            "the calendar must list consecutive dates; {first}..{last} has {days} days but {} are listed",
            calendar.days.len()
        )));
    }
    Ok(HourGrid::days(*first, days))
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<(), CliError>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

impl Run {
    pub fn open(cfg: RunConfig) -> Result<Self, CliError> {
        let out = cfg.out_path();
        fs::create_dir_all(&out)
            .map_err(|e| CliError::user(format!("cannot create output directory {}: {e}", out.display())))?;
        let mut manifest = Manifest::load(&out)?;
        manifest.config_hash = digest_bytes(cfg.to_toml().as_bytes());
        manifest.seed = cfg.seed;
        Ok(Self { cfg, out, manifest })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    /// Digest of the config keys a stage depends on.
    pub fn stage_hash(&self, stage: &str) -> String {
        let c = &self.cfg;
        let keys = match stage {
            "synth" => json!({ "synth": c.synth }),
            "aggregate" => json!({ "inputs": c.inputs, "aggregate_target": c.aggregate_target }),
            "graphs" => json!({ "p_bike": c.p_bike, "split": c.split }),
            "train" => json!({ "split": c.split, "train": c.train, "model": c.model }),
            "eval" => json!({ "split": c.split }),
            _ => json!({}),
        };
        digest_bytes(format!("{stage}:{keys}").as_bytes())
    }

    fn require(&self, stage: &str, rel: &str) -> Result<PathBuf, CliError> {
        self.manifest.require(&self.out, stage, rel, &self.stage_hash(stage))
    }

    fn input(&self, key: &str) -> Result<PathBuf, CliError> {
        if self.cfg.inputs.is_synthetic() {
            let (_, file) = SYNTH_FILES.iter().find(|(k, _)| *k == key).expect("known input key");
            return self.require("synth", &format!("synth/{file}"));
        }
        let (_, path) = self.cfg.inputs.entries().into_iter().find(|(k, _)| *k == key).expect("known input key");
        let path = PathBuf::from(path);
        if !path.is_file() {
            return Err(CliError::user(format!("inputs.{key}: {} does not exist", path.display())));
        }
        Ok(path)
    }

    fn write(&self, rel: &str, bytes: impl AsRef<[u8]>) -> Result<String, CliError> {
        let path = self.out.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(CliError::io)?;
        }
        fs::write(&path, bytes).map_err(CliError::io)?;
        Ok(rel.to_string())
    }

    fn finish(&mut self, stage: &str, inputs: &[PathBuf], outputs: &[String]) -> Result<(), CliError> {
        let hash = self.stage_hash(stage);
        self.manifest.record(&self.out, stage, &hash, inputs, outputs)?;
        self.manifest.save(&self.out)?;
        eprintln!("[{stage}] wrote {} file(s) under {}", outputs.len(), self.out.display());
        Ok(())
    }

    pub fn synth(&mut self) -> Result<(), CliError> {
        if !self.cfg.inputs.is_synthetic() {
            return Err(CliError::user(
                "`synth` only runs when no input paths are configured; clear [inputs] to use synthetic data",
            ));
        }
        let files = write_city(&self.cfg.synth, &self.out.join("synth"))?;
        let outputs: Vec<String> = files
            .all()
            .iter()
            .map(|p| format!("synth/{}", p.file_name().expect("file name").to_string_lossy()))
            .collect();
        self.finish("synth", &[], &outputs)
    }

    pub fn aggregate(&mut self) -> Result<(), CliError> {
        let zones_path = self.input("zones")?;
        let stations_path = self.input("stations")?;
        let trips_path = self.input("trips")?;
        let calendar_path = self.input("calendar")?;

        let partition = load_partition(&zones_path)?;
        let target = self.cfg.aggregate_target.min(partition.len());
        if target < self.cfg.aggregate_target {
            eprintln!(
                "[aggregate] aggregate_target {} exceeds the {} input zones; keeping all of them",
                self.cfg.aggregate_target,
                partition.len()
            );
        }
        let agg = partition.aggregate_to(target)?;
        let stations = assign_stations(&agg, &read_station_locations(&stations_path)?);
        let station_zone: HashMap<String, String> =
            stations.iter().map(|s| (s.id.clone(), s.zone_id.clone())).collect();
        let trips = read_trips(open(&trips_path)?)?;
        let grid = grid_from_calendar(&read_calendar(open(&calendar_path)?)?)?;
        let panel = trips_to_panel(&trips, &station_zone, &agg.zone_ids(), grid)?;
        eprintln!(
            "[aggregate] {} zones, {} stations, {} OD pairs, {} trips counted",
            agg.len(),
            stations.len(),
            panel.n_pairs(),
            panel.total()
        );

        let pretty = |v: &Value| serde_json::to_string_pretty(v).expect("json") + "\n";
        let outputs = vec![
            self.write(AGG_ZONES, pretty(&partition_to_geojson(&agg)))?,
            self.write(MERGE_TREE, pretty(&merge_tree(&agg)))?,
            self.write("aggregate/stations.csv", write_station_assignment(&stations))?,
            self.write(DEMAND, serde_json::to_string(&panel).expect("json"))?,
        ];
        self.finish("aggregate", &[zones_path, stations_path, trips_path, calendar_path], &outputs)
    }

    fn load_demand(&self, path: &Path) -> Result<ODDemandPanel, CliError> {
        serde_json::from_reader(open(path)?).map_err(|e| CliError::user(format!("{}: {e}", path.display())))
    }

    /// Train and test windows counted in days from the first hour of `grid`.
    pub fn split(&self, grid: &HourGrid) -> Result<SplitSpec, CliError> {
        let s = &self.cfg.split;
        let days = s.skip_days + s.train_days + s.test_days;
        if days * 24 > grid.len {
            return Err(CliError::user(format!(
                "split: the windows span {days} days but the data covers {}",
                grid.len / 24
            )));
        }
        let day = |d: usize| grid.time(d * 24);
        Ok(SplitSpec {
            train_start: day(s.skip_days),
            train_end: day(s.skip_days + s.train_days),
            test_start: day(s.skip_days + s.train_days),
            test_end: day(days),
            test_hours: s.test_hours,
        })
    }

    pub fn graphs(&mut self) -> Result<(), CliError> {
        let zones_path = self.require("aggregate", AGG_ZONES)?;
        let demand_path = self.require("aggregate", DEMAND)?;
        let partition = load_partition(&zones_path)?;
        let demand = self.load_demand(&demand_path)?;
        let split = self.split(demand.grid())?;
        let data = ExperimentData::build(&partition, &demand, None, None, None, self.cfg.p_bike, split)?;
        eprintln!("[graphs] {} OD pairs selected", data.panel.n_pairs());
        let files = write_stack(&data.stack, &self.out.join("graphs"))?;
        let outputs: Vec<String> = files.iter().map(|f| format!("graphs/{f}")).collect();
        self.finish("graphs", &[zones_path, demand_path], &outputs)
    }

    pub fn featurize(&mut self) -> Result<(), CliError> {
        let demand_path = self.require("aggregate", DEMAND)?;
        let tree_path = self.require("aggregate", MERGE_TREE)?;
        let stack_path = self.require("graphs", &format!("graphs/{STACK_MANIFEST}"))?;
        let weather_path = self.input("weather")?;
        let calendar_path = self.input("calendar")?;
        let loops_path = self.input("loops")?;
        let loop_zones_path = self.input("loop_zones")?;

        let stack = read_stack(&self.out.join("graphs"))?;
        let panel = self.load_demand(&demand_path)?.select(stack.od_pairs())?;
        let grid = *panel.grid();
        let weather = read_weather(open(&weather_path)?, grid)?;
        let calendar = read_calendar(open(&calendar_path)?)?;

        let tree: Value = serde_json::from_reader(open(&tree_path)?)
            .map_err(|e| CliError::user(format!("{}: {e}", tree_path.display())))?;
        let mut zone_of_member = BTreeMap::new();
        let mut zone_ids = Vec::new();
        for z in tree["zones"].as_array().into_iter().flatten() {
            let id = z["id"].as_str().unwrap_or_default().to_string();
            for m in z["members"].as_array().into_iter().flatten() {
                zone_of_member.insert(m.as_str().unwrap_or_default().to_string(), id.clone());
            }
            zone_ids.push(id);
        }
        let mut loop_zone = BTreeMap::new();
        for (loop_id, zone) in read_loop_zones(open(&loop_zones_path)?)? {
            let agg = zone_of_member.get(&zone).ok_or_else(|| {
                CliError::user(format!("loop {loop_id} lies in zone {zone}, which is not in the zone file"))
            })?;
            loop_zone.insert(loop_id, agg.clone());
        }
        let hourly = clean_loop_data(&read_loop_records(open(&loops_path)?)?, &grid);
        let flows = aggregate_flow_by_zone(&hourly, &loop_zone, &zone_ids, &grid)?;

        let columns: BTreeMap<String, Vec<String>> =
            Variant::all().into_iter().map(|v| (v.to_string(), v.spec().column_names())).collect();
        let outputs = vec![
            self.write(PANEL, serde_json::to_string(&panel).expect("json"))?,
            self.write(WEATHER, csv_bytes(|b| Ok(write_weather(b, &weather)?))?)?,
            self.write(FLOWS, csv_bytes(|b| Ok(write_zone_flows(b, &flows)?))?)?,
            self.write(CALENDAR, csv_bytes(|b| Ok(write_calendar(b, &calendar)?))?)?,
            self.write("features/columns.json", serde_json::to_string_pretty(&columns).expect("json") + "\n")?,
        ];
        self.finish(
            "featurize",
            &[demand_path, tree_path, stack_path, weather_path, calendar_path, loops_path, loop_zones_path],
            &outputs,
        )
    }

    /// Loads the featurized data and graphs; also returns the files read.
    pub fn experiment(&self) -> Result<(ExperimentData, Vec<PathBuf>), CliError> {
        let paths = [PANEL, WEATHER, FLOWS, CALENDAR]
            .into_iter()
            .map(|rel| self.require("featurize", rel))
            .collect::<Result<Vec<_>, _>>()?;
        let stack_path = self.require("graphs", &format!("graphs/{STACK_MANIFEST}"))?;
        let panel = self.load_demand(&paths[0])?;
        let grid = *panel.grid();
        let weather = read_weather(open(&paths[1])?, grid)?;
        let flows = read_zone_flows(open(&paths[2])?, grid)?;
        let calendar = read_calendar(open(&paths[3])?)?;
        let stack = read_stack(&self.out.join("graphs"))?;
        if stack.od_pairs() != panel.od_pairs() {
            return Err(CliError::Stale("the graphs and features disagree on the OD set; rerun `featurize`".into()));
        }
        let split = self.split(&grid)?;
        let data = ExperimentData {
            panel,
            weather: Some(weather),
            flows: Some(flows),
            calendar: Some(calendar),
            stack,
            split,
        };
        let mut inputs = paths;
        inputs.push(stack_path);
        Ok((data, inputs))
    }

    pub fn train(&mut self) -> Result<(), CliError> {
        let (data, inputs) = self.experiment()?;
        let epochs = self.cfg.train.epochs;
        let mut outputs = Vec::new();
        for v in self.cfg.parsed_variants() {
            let fitted = fit_variant(&data, v, &self.cfg.model, &self.cfg.train, |e, loss| {
                eprintln!("[train] {v} epoch {e}/{epochs} loss {loss:.5}");
            })?;
            let rel = format!("models/{v}.json");
            let path = self.out.join(&rel);
            fs::create_dir_all(path.parent().expect("parent")).map_err(CliError::io)?;
            save_checkpoint(&fitted.model, &path)?;
            outputs.push(rel);
            let mut losses = String::from("epoch,loss\n");
            for (i, l) in fitted.losses.iter().enumerate() {
                losses.push_str(&format!("{},{l}\n", i + 1));
            }
            outputs.push(self.write(&format!("models/{v}_loss.csv"), losses)?);
        }
        self.finish("train", &inputs, &outputs)
    }

    pub fn eval(&mut self) -> Result<(), CliError> {
        let (data, mut inputs) = self.experiment()?;
        let scenarios = default_scenarios();
        let mut report = MetricsReport::default();
        let mut outputs = Vec::new();
        for v in self.cfg.parsed_variants() {
            let model_path = self.require("train", &format!("models/{v}.json"))?;
            let model = load_checkpoint(&model_path)?;
            let (rows, records) = evaluate_variant(&data, v, &model, &scenarios)?;
            if let Some(all) = rows.first().and_then(|r| r.mse) {
                eprintln!("[eval] {v} mse {all:.5}");
            }
            report.merge(rows);
            if self.cfg.dump_predictions {
                let bytes = csv_bytes(|b| Ok(write_predictions(b, &records)?))?;
                outputs.push(self.write(&format!("eval/predictions_{v}.csv"), bytes)?);
            }
            inputs.push(model_path);
        }
        outputs.push(self.write(METRICS, csv_bytes(|b| Ok(report.write_csv(b)?))?)?);
        self.finish("eval", &inputs, &outputs)
    }

    /// Writes the report files and returns the text tables.
    pub fn report(&mut self) -> Result<String, CliError> {
        let metrics_path = self.require("eval", METRICS)?;
        let report = MetricsReport::read_csv(open(&metrics_path)?)?;
        let text = report.to_text();
        let outputs = vec![
            self.write("report/report.txt", &text)?,
            self.write("report/report.csv", csv_bytes(|b| Ok(report.write_csv(b)?))?)?,
        ];
        self.finish("report", &[metrics_path], &outputs)?;
        Ok(text)
    }

    /// Every stage in order; `synth` only in synthetic mode.
    pub fn all(&mut self) -> Result<String, CliError> {
        if self.cfg.inputs.is_synthetic() {
            self.synth()?;
        }
        self.aggregate()?;
        self.graphs()?;
        self.featurize()?;
        self.train()?;
        self.eval()?;
        self.report()
    }
}
