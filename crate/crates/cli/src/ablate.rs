use std::fmt;
use std::str::FromStr;

use egoexo::pipeline::TrainConfig;

/// One pre-training configuration of the task ablation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationRow {
    /// Action loss only (Third-only).
    None,
    Ego,
    Obj,
    Int,
    /// All three auxiliary tasks (Ego-Exo).
    All,
    /// Interaction loss on the hand map alone.
    HandOnly,
    /// Interaction loss on the object map alone.
    ObjectOnly,
}

impl AblationRow {
    pub const GRID: [AblationRow; 7] = [
        AblationRow::None,
        AblationRow::Ego,
        AblationRow::Obj,
        AblationRow::Int,
        AblationRow::All,
        AblationRow::HandOnly,
        AblationRow::ObjectOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationRow::None => "none",
            AblationRow::Ego => "ego",
            AblationRow::Obj => "obj",
            AblationRow::Int => "int",
            AblationRow::All => "all",
            AblationRow::HandOnly => "hand_only",
            AblationRow::ObjectOnly => "object_only",
        }
    }

    /// `base` with this row's task switches applied. Weights and every
    /// other setting are kept.
    pub fn apply(self, base: &TrainConfig) -> TrainConfig {
        let (ego, obj, int, hand, object) = match self {
            AblationRow::None => (false, false, false, true, true),
            AblationRow::Ego => (true, false, false, true, true),
            AblationRow::Obj => (false, true, false, true, true),
            AblationRow::Int => (false, false, true, true, true),
            AblationRow::All => (true, true, true, true, true),
            AblationRow::HandOnly => (false, false, true, true, false),
            AblationRow::ObjectOnly => (false, false, true, false, true),
        };
        TrainConfig {
            enable_ego: ego,
            enable_obj: obj,
            enable_int: int,
            use_hand_map: hand,
            use_object_map: object,
            ..base.clone()
        }
    }
}

impl fmt::Display for AblationRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationRow {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        AblationRow::GRID
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = AblationRow::GRID.iter().map(|r| r.name()).collect();
                format!("unknown row {s:?}, expected one of {}", names.join(", "))
            })
    }
}

pub const ABLATION_HEADER: &str =
    "row,enable_ego,enable_obj,enable_int,use_hand_map,use_object_map,metric,value,n";

pub struct AblationResult {
    pub row: AblationRow,
    pub config: TrainConfig,
    pub metric: String,
    /// Reported x100.
    pub value: f64,
    pub n: usize,
}

pub fn ablation_csv(results: &[AblationResult]) -> String {
    let mut s = String::from(ABLATION_HEADER);
    s.push('\n');
    for r in results {
        let c = &r.config;
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.row,
            c.enable_ego,
            c.enable_obj,
            c.enable_int,
            c.use_hand_map,
            c.use_object_map,
            r.metric,
            r.value,
            r.n
        ));
    }
    s
}
