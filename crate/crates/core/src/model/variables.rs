//! Known-variable registry.
//!
//! Anchors may only name variables listed here (after alias resolution).
//! IMU channels follow the `imu{1..10}_{acc,gyro}_{x,y,z}` pattern.

use super::AnchorType;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Physiological,
    Performance,
    Kinematic,
}

const PHYSIOLOGICAL: &[&str] = &[
    "fatigue_score",
    "recovery_time_hr",
    "adaptation_pct",
    "training_load_au",
    "vo2max",
    "hrv",
    "hrv_baseline",
    "stroke_prob",
    "hydration_level",
    "biomechanical_efficiency",
    "blood_lactate",
];

const PERFORMANCE: &[&str] = &[
    "split_time_s",
    "swimming_speed",
    "stroke_rate",
    "stroke_length",
    "stroke_index",
];

const ALIASES: &[(&str, &str)] = &[
    ("heart_rate_variability", "hrv"),
    ("hr_variability", "hrv"),
    ("vo2_max", "vo2max"),
    ("training_load", "training_load_au"),
    ("recovery_time", "recovery_time_hr"),
    ("fatigue_index", "fatigue_score"),
    ("lactate", "blood_lactate"),
    ("speed", "swimming_speed"),
];

fn normalize(name: &str) -> String {
    name.trim()
        .to_ascii_lowercase()
        .chars()
        .map(|c| if c == ' ' || c == '-' { '_' } else { c })
        .collect()
}

/// Parse an IMU channel name into (sensor, is_gyro, axis).
pub fn parse_imu(name: &str) -> Option<(u8, bool, char)> {
    let rest = name.strip_prefix("imu")?;
    let (num, rest) = rest.split_once('_')?;
    let sensor: u8 = num.parse().ok()?;
    if !(1..=10).contains(&sensor) || num.starts_with('0') {
        return None;
    }
    let (kind, axis) = rest.split_once('_')?;
    let gyro = match kind {
        "acc" => false,
        "gyro" => true,
        _ => return None,
    };
    let axis = match axis {
        "x" | "y" | "z" => axis.chars().next()?,
        _ => return None,
    };
    Some((sensor, gyro, axis))
}

/// Resolve a variable name to its registry spelling.
pub fn canonical(name: &str) -> Option<String> {
    let n = normalize(name);
    if let Some((_, target)) = ALIASES.iter().find(|(a, _)| *a == n) {
        return Some((*target).to_string());
    }
    if PHYSIOLOGICAL.contains(&n.as_str()) || PERFORMANCE.contains(&n.as_str()) {
        return Some(n);
    }
    parse_imu(&n).map(|_| n)
}

pub fn family(canonical_name: &str) -> Option<Family> {
    if PHYSIOLOGICAL.contains(&canonical_name) {
        Some(Family::Physiological)
    } else if PERFORMANCE.contains(&canonical_name) {
        Some(Family::Performance)
    } else if parse_imu(canonical_name).is_some() {
        Some(Family::Kinematic)
    } else {
        None
    }
}

pub fn is_imu(name: &str) -> bool {
    parse_imu(&normalize(name)).is_some()
}

/// All IMU channel names in sensor, modality, axis order.
pub fn imu_channels() -> Vec<String> {
    let mut out = Vec::with_capacity(60);
    for sensor in 1..=10 {
        for kind in ["acc", "gyro"] {
            for axis in ["x", "y", "z"] {
                out.push(format!("imu{sensor}_{kind}_{axis}"));
            }
        }
    }
    out
}

/// Every registry variable: physiological, performance, then IMU channels.
pub fn all() -> Vec<String> {
    PHYSIOLOGICAL
        .iter()
        .chain(PERFORMANCE)
        .map(|s| s.to_string())
        .chain(imu_channels())
        .collect()
}

/// Candidate (primary, partner) predicates for an anchor type's variable family.
pub fn is_primary(anchor_type: AnchorType, var: &str) -> bool {
    match anchor_type {
        AnchorType::FatigueKinematic => matches!(var, "fatigue_score" | "hrv"),
        AnchorType::LoadPerformance => matches!(var, "training_load_au" | "adaptation_pct"),
        AnchorType::StrokeEfficiency => var == "stroke_prob",
    }
}

pub fn is_partner(anchor_type: AnchorType, var: &str) -> bool {
    match anchor_type {
        AnchorType::FatigueKinematic => parse_imu(var).is_some(),
        AnchorType::LoadPerformance => PERFORMANCE.contains(&var) || var == "blood_lactate",
        AnchorType::StrokeEfficiency => matches!(parse_imu(var), Some((_, true, _))),
    }
}

/// The anchor type whose family a single variable most naturally seeds.
pub fn natural_anchor_type(var: &str) -> AnchorType {
    match var {
        "fatigue_score" | "hrv" | "hrv_baseline" | "recovery_time_hr" => AnchorType::FatigueKinematic,
        "stroke_prob" | "biomechanical_efficiency" => AnchorType::StrokeEfficiency,
        v if matches!(parse_imu(v), Some((_, true, _))) => AnchorType::StrokeEfficiency,
        v if parse_imu(v).is_some() => AnchorType::FatigueKinematic,
        _ => AnchorType::LoadPerformance,
    }
}

/// Unit string used when a variable is written into prose.
pub fn unit(var: &str) -> &'static str {
    match var {
        "fatigue_score" | "biomechanical_efficiency" | "stroke_index" => "",
        "recovery_time_hr" => "hours",
        "adaptation_pct" | "hydration_level" => "%",
        "training_load_au" => "AU",
        "vo2max" => "ml/kg/min",
        "hrv" | "hrv_baseline" => "ms",
        "stroke_prob" => "",
        "blood_lactate" => "mmol/L",
        "split_time_s" => "s",
        "swimming_speed" => "m/s",
        "stroke_rate" => "cycles/min",
        "stroke_length" => "m",
        v => match parse_imu(v) {
            Some((_, false, _)) => "m/s²",
            Some((_, true, _)) => "deg/s",
            None => "",
        },
    }
}
