//! Narrative serialization of physiological and performance tables.
//!
//! A record becomes one paragraph; a stratum of records becomes an aggregate
//! paragraph of per-column statistics. Paragraphs are filled field by field
//! through increasingly verbose phrasings until the budget minimum is met.
//! Cell values are copied verbatim, never reformatted.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{approx_token_count, BudgetKind, Chunk, ChunkMetadata};
use crate::error::{Error, Result};
use crate::model::{variables, StrokeType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TableSchema {
    AthleteProfile,
    TrainingLog,
    KinematicFrames,
    ResultRows,
}

impl TableSchema {
    pub fn label(self) -> &'static str {
        match self {
            TableSchema::AthleteProfile => "athlete physiological profile",
            TableSchema::TrainingLog => "training session log",
            TableSchema::KinematicFrames => "IMU kinematic frame",
            TableSchema::ResultRows => "competition result",
        }
    }

    /// Column whose tertiles define the performance-tier stratum.
    pub fn primary_performance_column(self) -> Option<&'static str> {
        match self {
            TableSchema::AthleteProfile => Some("vo2max"),
            TableSchema::TrainingLog => Some("split_time_s"),
            TableSchema::ResultRows => Some("time_s"),
            TableSchema::KinematicFrames => None,
        }
    }

    fn detect(headers: &[String]) -> Option<Self> {
        let has = |c: &str| headers.iter().any(|h| h == c);
        if has("sensor_id") {
            Some(TableSchema::KinematicFrames)
        } else if has("session_id") {
            Some(TableSchema::TrainingLog)
        } else if has("event") {
            Some(TableSchema::ResultRows)
        } else if has("athlete_id") {
            Some(TableSchema::AthleteProfile)
        } else {
            None
        }
    }

    fn closing_sentence(self) -> &'static str {
        match self {
            TableSchema::AthleteProfile => {
                "Profiles like this one anchor how training intensity and recovery are prescribed for the athlete."
            }
            TableSchema::TrainingLog => {
                "Session logs connect the prescribed workload with the physiological and kinematic response it produced."
            }
            TableSchema::KinematicFrames => {
                "Frames like this one capture body-segment motion that stroke technique analysis relies on."
            }
            TableSchema::ResultRows => {
                "Competition results show how preparation translated into race performance."
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColumnKind {
    Identifier,
    Category,
    Numeric,
}

struct ColumnInfo {
    label: String,
    unit: &'static str,
    kind: ColumnKind,
    short: String,
    long: String,
}

fn column_info(name: &str) -> Option<ColumnInfo> {
    use ColumnKind::*;
    let c = |label: &str, unit: &'static str, kind, short: &str, long: &str| ColumnInfo {
        label: label.to_string(),
        unit,
        kind,
        short: short.to_string(),
        long: long.to_string(),
    };
    if let Some((sensor, gyro, axis)) = variables::parse_imu(name) {
        let (what, unit) = if gyro {
            ("angular velocity", "deg/s")
        } else {
            ("linear acceleration", "m/s²")
        };
        return Some(ColumnInfo {
            label: format!("{name} {what}"),
            unit,
            kind: Numeric,
            short: format!("the {what} about the {axis} axis reported by IMU sensor imu{sensor}"),
            long: format!(
                "It reflects how the body segment carrying sensor imu{sensor} moves through the stroke cycle."
            ),
        });
    }
    Some(match name {
        "athlete_id" => c("athlete identifier", "", Identifier, "", ""),
        "session_id" => c("session identifier", "", Identifier, "", ""),
        "sensor_id" => c("sensor identifier", "", Identifier, "", ""),
        "timestamp" => c("frame timestamp", "s", Identifier, "", ""),
        "swimmer" => c("swimmer", "", Identifier, "", ""),
        "round" => c("round", "", Category, "", ""),
        "event" => c("event", "", Category, "", ""),
        "place" => c("finishing place", "", Identifier, "", ""),
        "stroke_type" => c("stroke type", "", Category, "", ""),
        "training_phase" => c("training phase", "", Category, "", ""),
        "sex" => c("sex", "", Category, "", ""),
        "fatigue_score" => c("fatigue score", "on a ten-point scale", Numeric,
            "a self-reported rating of accumulated tiredness",
            "Higher values indicate the athlete is carrying more residual fatigue into training."),
        "recovery_time_hr" => c("recovery time", "hours", Numeric,
            "the estimated time needed before the next hard session",
            "Starting a demanding session before this window has elapsed risks incomplete recovery."),
        "adaptation_pct" => c("adaptation", "percent", Numeric,
            "the measured training adaptation relative to the start of the block",
            "Large adaptation values show the athlete is responding strongly to the current load."),
        "training_load_au" => c("training load", "arbitrary units", Numeric,
            "the cumulative internal workload of the session",
            "Loads well above the usual range call for a deload before further progression."),
        "vo2max" => c("VO2max", "ml/kg/min", Numeric,
            "the maximal aerobic capacity of the athlete",
            "Aerobic capacity bounds which intensity zones the athlete can sustain productively."),
        "hrv" => c("heart rate variability", "ms", Numeric,
            "the morning heart rate variability reading",
            "Suppressed variability relative to baseline signals incomplete autonomic recovery."),
        "hrv_baseline" => c("baseline heart rate variability", "ms", Numeric,
            "the rolling baseline against which daily readings are compared",
            "Daily readings well under this baseline suggest the athlete is under-recovered."),
        "stroke_prob" => c("stroke classification confidence", "as a probability", Numeric,
            "the confidence of the stroke classifier for this swimmer",
            "Low confidence indicates a technique pattern that does not match a clean stroke template."),
        "hydration_level" => c("hydration level", "percent", Numeric,
            "the estimated hydration status",
            "Dehydration reduces work capacity and slows recovery between sessions."),
        "biomechanical_efficiency" => c("biomechanical efficiency", "as a ratio", Numeric,
            "the share of propulsive work relative to total mechanical work",
            "Higher efficiency means more of the effort moves the swimmer forward."),
        "blood_lactate" => c("blood lactate", "mmol/L", Numeric,
            "the post-effort blood lactate concentration",
            "Lactate levels locate the effort relative to the aerobic and anaerobic thresholds."),
        "split_time_s" => c("split time", "seconds", Numeric,
            "the time taken over the measured split",
            "Shorter splits reflect faster swimming over the same distance."),
        "swimming_speed" => c("swimming speed", "m/s", Numeric,
            "the average velocity over the measured distance",
            "Speed is the product of stroke rate and stroke length."),
        "stroke_rate" => c("stroke rate", "strokes per minute", Numeric,
            "the cadence of arm cycles",
            "Rate trades off against length when the swimmer tires."),
        "stroke_length" => c("stroke length", "metres per cycle", Numeric,
            "the distance travelled per arm cycle",
            "Longer strokes at the same rate indicate better propulsion."),
        "stroke_index" => c("stroke index", "as an index", Numeric,
            "the product of speed and stroke length",
            "The index is a compact indicator of swimming economy."),
        "time_s" => c("final time", "seconds", Numeric,
            "the official finishing time",
            "Finishing times are the outcome that preparation is judged against."),
        "reaction_time_s" => c("reaction time", "seconds", Numeric,
            "the start reaction time off the blocks",
            "Reaction time reflects start readiness rather than swimming fitness."),
        "acc_x" | "acc_y" | "acc_z" => {
            let axis = &name[4..];
            ColumnInfo {
                label: format!("acceleration along {axis}"),
                unit: "m/s²",
                kind: Numeric,
                short: format!("the linear acceleration measured along the {axis} axis"),
                long: "Acceleration traces show where in the stroke propulsion is gained or lost.".into(),
            }
        }
        "gyro_x" | "gyro_y" | "gyro_z" => {
            let axis = &name[5..];
            ColumnInfo {
                label: format!("angular velocity about {axis}"),
                unit: "deg/s",
                kind: Numeric,
                short: format!("the rotation rate measured about the {axis} axis"),
                long: "Rotation rates describe body roll and limb recovery mechanics.".into(),
            }
        }
        _ => return None,
    })
}

/// A parsed CSV table with a recognised schema.
#[derive(Debug, Clone)]
pub struct DataTable {
    pub document_name: String,
    pub schema: TableSchema,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl DataTable {
    pub fn from_csv_str(document_name: &str, text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::Parse {
                line: 1,
                message: format!("{document_name}: {e}"),
            })?
            .iter()
            .map(str::to_string)
            .collect();
        if let Some(bad) = headers.iter().find(|h| column_info(h).is_none()) {
            return Err(Error::Schema(format!(
                "{document_name}: undeclared column `{bad}`"
            )));
        }
        let schema = TableSchema::detect(&headers).ok_or_else(|| {
            Error::Schema(format!("{document_name}: columns match no known table schema"))
        })?;
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse {
                line: i + 2,
                message: format!("{document_name}: {e}"),
            })?;
            rows.push(rec.iter().map(str::to_string).collect());
        }
        let table = DataTable {
            document_name: document_name.to_string(),
            schema,
            headers,
            rows,
        };
        table.check_numeric_cells()?;
        Ok(table)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::from_csv_str(&name, &text)
    }

    fn check_numeric_cells(&self) -> Result<()> {
        for (c, h) in self.headers.iter().enumerate() {
            if column_info(h).map(|i| i.kind) != Some(ColumnKind::Numeric) {
                continue;
            }
            for (r, row) in self.rows.iter().enumerate() {
                let cell = &row[c];
                if !is_null(cell) && cell.parse::<f64>().is_err() {
                    return Err(Error::Parse {
                        line: r + 2,
                        message: format!(
                            "{}: column `{h}` holds non-numeric value `{cell}`",
                            self.document_name
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    /// Raw cell, `None` when empty or a null marker.
    pub fn cell(&self, row: usize, col: &str) -> Option<&str> {
        let c = self.column(col)?;
        let v = self.rows.get(row)?.get(c)?.as_str();
        (!is_null(v)).then_some(v)
    }

    pub fn number(&self, row: usize, col: &str) -> Option<f64> {
        self.cell(row, col)?.parse().ok()
    }

    pub fn numeric_columns(&self) -> Vec<&str> {
        self.headers
            .iter()
            .filter(|h| column_info(h).map(|i| i.kind) == Some(ColumnKind::Numeric))
            .map(String::as_str)
            .collect()
    }

    /// Registry variables present as columns.
    pub fn variables(&self) -> Vec<&str> {
        self.headers
            .iter()
            .map(String::as_str)
            .filter(|h| variables::canonical(h).as_deref() == Some(*h))
            .collect()
    }

    /// Rows grouped by stratum value, in value order.
    pub fn strata(&self, key: Stratum) -> BTreeMap<String, Vec<usize>> {
        let mut out: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        match key {
            Stratum::StrokeType | Stratum::TrainingPhase => {
                for r in 0..self.rows.len() {
                    if let Some(v) = self.cell(r, key.column()) {
                        out.entry(v.to_string()).or_default().push(r);
                    }
                }
            }
            Stratum::PerformanceTier => {
                let Some(col) = self.schema.primary_performance_column() else {
                    return out;
                };
                let vals: Vec<(usize, f64)> = (0..self.rows.len())
                    .filter_map(|r| self.number(r, col).map(|v| (r, v)))
                    .collect();
                if vals.is_empty() {
                    return out;
                }
                let mut sorted: Vec<f64> = vals.iter().map(|(_, v)| *v).collect();
                sorted.sort_by(f64::total_cmp);
                let q1 = quantile(&sorted, 1.0 / 3.0);
                let q2 = quantile(&sorted, 2.0 / 3.0);
                for (r, v) in vals {
                    let tier = if v <= q1 {
                        "lower"
                    } else if v <= q2 {
                        "middle"
                    } else {
                        "upper"
                    };
                    out.entry(tier.to_string()).or_default().push(r);
                }
            }
        }
        out
    }
}

fn is_null(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c.eq_ignore_ascii_case("na") || c.eq_ignore_ascii_case("null")
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn quantile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stratum {
    StrokeType,
    TrainingPhase,
    PerformanceTier,
}

impl Stratum {
    pub const ALL: [Stratum; 3] = [
        Stratum::StrokeType,
        Stratum::TrainingPhase,
        Stratum::PerformanceTier,
    ];

    pub fn column(self) -> &'static str {
        match self {
            Stratum::StrokeType => "stroke_type",
            Stratum::TrainingPhase => "training_phase",
            Stratum::PerformanceTier => "performance_tier",
        }
    }
}

fn with_unit(value: &str, unit: &str) -> String {
    if unit.is_empty() {
        value.to_string()
    } else {
        format!("{value} {unit}")
    }
}

/// Phrasings of one field, tersest first.
fn field_tiers(name: &str, value: &str) -> Vec<String> {
    let info = column_info(name).expect("columns are validated on load");
    let v = with_unit(value, info.unit);
    match info.kind {
        ColumnKind::Identifier | ColumnKind::Category => {
            vec![format!("{}: {v}.", capitalize(&info.label))]
        }
        ColumnKind::Numeric => vec![
            format!("{}: {v}.", capitalize(&info.label)),
            format!("The recorded {} is {v}, {}.", info.label, info.short),
            format!(
                "The recorded {} is {v}, {}. {}",
                info.label, info.short, info.long
            ),
        ],
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Upgrade fields one tier at a time, in column order, until `min` is reached.
fn fill(intro: &str, fields: &[Vec<String>], closing: &str, min: usize) -> String {
    let mut level = vec![0usize; fields.len()];
    let render = |level: &[usize], with_closing: bool| {
        let mut parts = vec![intro.to_string()];
        parts.extend(fields.iter().zip(level).map(|(f, l)| f[*l].clone()));
        if with_closing {
            parts.push(closing.to_string());
        }
        parts.join(" ")
    };
    loop {
        let text = render(&level, false);
        if approx_token_count(&text) >= min {
            return text;
        }
        let next = (0..fields.len())
            .filter(|&i| level[i] + 1 < fields[i].len())
            .min_by_key(|&i| (level[i], i));
        match next {
            Some(i) => level[i] += 1,
            None => return render(&level, true),
        }
    }
}

fn row_metadata(table: &DataTable, row: usize, base: &ChunkMetadata) -> ChunkMetadata {
    let mut m = base.clone();
    if let Some(s) = table.cell(row, "stroke_type") {
        if s.parse::<StrokeType>().is_ok() {
            m.stroke_type = s.to_string();
        }
    }
    m
}

/// One narrative paragraph for a table row; `None` when every numeric cell is
/// null.
pub fn serialize_record(table: &DataTable, row: usize, base: &ChunkMetadata) -> Option<Chunk> {
    if table.numeric_columns().iter().all(|c| table.cell(row, c).is_none()) {
        return None;
    }
    let fields: Vec<Vec<String>> = table
        .headers
        .iter()
        .filter_map(|h| table.cell(row, h).map(|v| field_tiers(h, v)))
        .collect();
    if fields.is_empty() {
        return None;
    }
    let intro = format!(
        "This {} record comes from {}.",
        table.schema.label(),
        table.document_name
    );
    let (min, _) = BudgetKind::Record.range();
    let text = fill(&intro, &fields, table.schema.closing_sentence(), min);
    Some(Chunk::new(
        format!("{}#row-{:05}", table.document_name, row),
        text,
        row_metadata(table, row, base),
        BudgetKind::Record,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ColumnStats {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; `None` for a single value.
    pub std: Option<f64>,
    pub min: f64,
    pub max: f64,
}

pub(crate) fn column_stats(values: &[f64]) -> Option<ColumnStats> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = (n > 1).then(|| {
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt()
    });
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some(ColumnStats {
        n,
        mean,
        std,
        min,
        max,
    })
}

fn stats_tiers(col: &str, s: &ColumnStats) -> Vec<String> {
    let info = column_info(col).expect("columns are validated on load");
    let std = s
        .std
        .map_or_else(|| "undefined (n=1)".to_string(), |v| v.to_string());
    let base = format!(
        "Column {col} over {n} values: mean {mean}, standard deviation {std}, minimum {min}, maximum {max}.",
        n = s.n,
        mean = s.mean,
        min = s.min,
        max = s.max
    );
    let unit = if info.unit.is_empty() {
        String::new()
    } else {
        format!(", measured in {}", info.unit)
    };
    vec![
        base.clone(),
        format!("{base} This is {}{unit}.", info.short),
        format!("{base} This is {}{unit}. {}", info.short, info.long),
    ]
}

/// Aggregate paragraph(s) for a stratum of rows.
///
/// Usually a single chunk. When the terse rendering of every column would not
/// fit the budget, the columns are spread over several chunks suffixed
/// `-p1`, `-p2`, ...
pub fn serialize_aggregate(
    table: &DataTable,
    rows: &[usize],
    stratum: Stratum,
    value: &str,
    base: &ChunkMetadata,
) -> Result<Vec<Chunk>> {
    if rows.is_empty() {
        return Err(Error::Precondition(format!(
            "{}: empty aggregation group {}={value}",
            table.document_name,
            stratum.column()
        )));
    }
    let fields: Vec<Vec<String>> = table
        .numeric_columns()
        .into_iter()
        .filter_map(|col| {
            let vals: Vec<f64> = rows.iter().filter_map(|&r| table.number(r, col)).collect();
            column_stats(&vals).map(|s| stats_tiers(col, &s))
        })
        .collect();
    let intro = format!(
        "Aggregate summary of {} {} records from {} where {} is {value}.",
        rows.len(),
        table.schema.label(),
        table.document_name,
        stratum.column()
    );
    let (min, max) = BudgetKind::Aggregate.range();
    let closing = table.schema.closing_sentence();

    // Partition columns so each part fits at its tersest.
    let reserve = approx_token_count(&intro) + approx_token_count(closing) + 2;
    let mut parts: Vec<Vec<Vec<String>>> = vec![Vec::new()];
    let mut used = reserve;
    for f in fields {
        let t = approx_token_count(&f[0]) + 1;
        let current = parts.last_mut().unwrap();
        if !current.is_empty() && used + t > max {
            parts.push(vec![f]);
            used = reserve + t;
        } else {
            current.push(f);
            used += t;
        }
    }

    let mut metadata = base.clone();
    if stratum == Stratum::StrokeType && value.parse::<StrokeType>().is_ok() {
        metadata.stroke_type = value.to_string();
    }
    let stem = format!("{}#agg-{}-{value}", table.document_name, stratum.column());
    let single = parts.len() == 1;
    Ok(parts
        .into_iter()
        .enumerate()
        .map(|(i, part)| {
            let id = if single {
                stem.clone()
            } else {
                format!("{stem}-p{}", i + 1)
            };
            Chunk::new(
                id,
                fill(&intro, &part, closing, min),
                metadata.clone(),
                BudgetKind::Aggregate,
            )
        })
        .collect())
}

/// Every record and aggregate chunk for a table.
pub fn serialize_table(table: &DataTable, base: &ChunkMetadata) -> Result<Vec<Chunk>> {
    let mut chunks: Vec<Chunk> = (0..table.rows.len())
        .filter_map(|r| serialize_record(table, r, &row_metadata(table, r, base)))
        .collect();
    for key in Stratum::ALL {
        for (value, rows) in table.strata(key) {
            chunks.extend(serialize_aggregate(table, &rows, key, &value, base)?);
        }
    }
    Ok(chunks)
}
