//! Hand-designed curricula: ordered difficulty tables driven either by a fixed
//! step budget per level or by reward stagnation.
//!
//! A curriculum file is TOML. Each entry of `levels` is one table row
//! `[action_mask_levels, perturbation_levels, bunching_levels, difficulty_thresholds]`:
//!
//! ```toml
//! name = "easy_first"
//! levels = [
//!   [[0], 0, 10, 0.01],
//!   [[0, 1], 0, 10, 0.01],
//! ]
//! [stagnancy]
//! window = 10
//! ```

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{BusInit, Scenario};
use crate::error::{Error, Result};
use crate::lessons::{mask_for, ActionMask, MAX_ACTION_SPACE, MAX_BUNCHING, MAX_PERTURBATION, MIN_BUNCHING, NUM_ACTIONS};

/// Column names of a level row, in file order.
pub const COLUMNS: [&str; 4] = ["action_mask_levels", "perturbation_levels", "bunching_levels", "difficulty_thresholds"];

/// Curricula shipped with the crate, by name.
pub const BUILTIN: [(&str, &str); 3] = [
    ("easy_first", include_str!("../curricula/easy_first.toml")),
    ("hard_first", include_str!("../curricula/hard_first.toml")),
    ("combination", include_str!("../curricula/combination.toml")),
];

/// How the numbers in `action_mask_levels` select legal actions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskSemantics {
    /// Each number is a discrete action index (0..=11 holds, 12 skip, 13 turn).
    /// Holding for zero seconds is always legal.
    #[default]
    ActionIndices,
    /// Each number is an action-space catalog index; the legal set is the
    /// union of their masks.
    CatalogUnion,
}

impl MaskSemantics {
    fn max_index(self) -> u8 {
        match self {
            MaskSemantics::ActionIndices => NUM_ACTIONS as u8 - 1,
            MaskSemantics::CatalogUnion => MAX_ACTION_SPACE,
        }
    }
}

/// One row of a curriculum table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyLevel {
    pub action_mask_levels: Vec<u8>,
    pub perturbation: u8,
    pub bunching: u8,
    /// Required relative reward improvement over the stagnancy window.
    pub threshold: f64,
}

impl DifficultyLevel {
    pub fn mask(&self, semantics: MaskSemantics) -> Result<ActionMask> {
        match semantics {
            MaskSemantics::ActionIndices => {
                ActionMask::from_actions(self.action_mask_levels.iter().map(|&a| a as usize)).map(|m| m.with(0))
            }
            MaskSemantics::CatalogUnion => self
                .action_mask_levels
                .iter()
                .try_fold(ActionMask::EMPTY, |acc, &s| Ok(acc.union(mask_for(s)?))),
        }
    }

    pub fn scenario(&self, semantics: MaskSemantics) -> Result<Scenario> {
        Ok(Scenario {
            mask: self.mask(semantics)?,
            perturbation: Some(self.perturbation),
            init: BusInit::Bunched(self.bunching),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagnancySpec {
    /// Number of consecutive iteration rewards compared.
    pub window: usize,
}

impl Default for StagnancySpec {
    fn default() -> Self {
        Self { window: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumConfig {
    pub name: String,
    pub mask_semantics: MaskSemantics,
    pub levels: Vec<DifficultyLevel>,
    /// Explicit per-level step budgets. When absent the run's total steps are
    /// split evenly.
    pub budgets: Option<Vec<u64>>,
    pub stagnancy: StagnancySpec,
}

impl CurriculumConfig {
    /// Parse TOML text. `source_name` labels errors.
    pub fn from_toml(text: &str, source_name: &str) -> Result<Self> {
        let parse_err = |message: String| Error::Parse { source_name: source_name.to_string(), message };
        let root: toml::Table = text.parse().map_err(|e: toml::de::Error| parse_err(e.to_string()))?;
        for key in root.keys() {
            if !["name", "mask_semantics", "levels", "budgets", "stagnancy"].contains(&key.as_str()) {
                return Err(parse_err(format!("unknown key `{key}`")));
            }
        }
        let name = match root.get("name") {
            Some(toml::Value::String(s)) => s.clone(),
            Some(_) => return Err(parse_err("`name` must be a string".into())),
            None => source_name.to_string(),
        };
        let mask_semantics = match root.get("mask_semantics") {
            None => MaskSemantics::default(),
            Some(v) => v.clone().try_into().map_err(|e: toml::de::Error| parse_err(format!("mask_semantics: {e}")))?,
        };
        let rows = match root.get("levels") {
            Some(toml::Value::Array(rows)) => rows,
            Some(_) => return Err(parse_err("`levels` must be an array of rows".into())),
            None => return Err(parse_err("missing `levels`".into())),
        };
        let levels = rows
            .iter()
            .enumerate()
            .map(|(i, row)| parse_row(row, mask_semantics).map_err(|m| parse_err(format!("row {}: {m}", i + 1))))
            .collect::<Result<Vec<_>>>()?;
        let budgets = match root.get("budgets") {
            None => None,
            Some(v) => Some(v.clone().try_into().map_err(|e: toml::de::Error| parse_err(format!("budgets: {e}")))?),
        };
        let stagnancy = match root.get("stagnancy") {
            None => StagnancySpec::default(),
            Some(v) => v.clone().try_into().map_err(|e: toml::de::Error| parse_err(format!("stagnancy: {e}")))?,
        };
        let cfg = Self { name, mask_semantics, levels, budgets, stagnancy };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::Config(format!("curriculum `{}` has no levels", self.name)));
        }
        if let Some(b) = &self.budgets {
            if b.len() != self.levels.len() {
                return Err(Error::Config(format!(
                    "curriculum `{}`: {} budgets for {} levels",
                    self.name,
                    b.len(),
                    self.levels.len()
                )));
            }
            if b.contains(&0) {
                return Err(Error::Config(format!("curriculum `{}`: budgets must be positive", self.name)));
            }
        }
        if self.stagnancy.window < 2 {
            return Err(Error::Config("stagnancy window must be at least 2".into()));
        }
        for (i, level) in self.levels.iter().enumerate() {
            level.scenario(self.mask_semantics).map_err(|e| Error::Config(format!("level {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    /// Step budget of every level for a run of `total_steps`.
    pub fn budgets(&self, total_steps: u64) -> Result<Vec<u64>> {
        if let Some(b) = &self.budgets {
            return Ok(b.clone());
        }
        let n = self.levels.len() as u64;
        if total_steps < n {
            return Err(Error::Config(format!("{total_steps} steps cannot cover {n} levels")));
        }
        Ok((0..n).map(|i| total_steps / n + u64::from(i < total_steps % n)).collect())
    }

    /// Pipe-separated rendering matching the golden transcriptions.
    pub fn table(&self) -> String {
        let mut out = format!("level | {}\n", COLUMNS.join(" | "));
        for (i, l) in self.levels.iter().enumerate() {
            let masks: Vec<String> = l.action_mask_levels.iter().map(u8::to_string).collect();
            out.push_str(&format!(
                "{} | {} | {} | {} | {}\n",
                i + 1,
                masks.join(","),
                l.perturbation,
                l.bunching,
                l.threshold
            ));
        }
        out
    }
}

impl fmt::Display for CurriculumConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({} levels)", self.name, self.levels.len())
    }
}

fn parse_row(row: &toml::Value, semantics: MaskSemantics) -> std::result::Result<DifficultyLevel, String> {
    let cells = row.as_array().ok_or("expected an array of 4 cells")?;
    if cells.len() != COLUMNS.len() {
        return Err(format!("expected {} cells, found {}", COLUMNS.len(), cells.len()));
    }
    let int = |col: usize, lo: i64, hi: i64| -> std::result::Result<u8, String> {
        match cells[col].as_integer() {
            Some(v) if (lo..=hi).contains(&v) => Ok(v as u8),
            _ => Err(format!("column {}: expected an integer in {lo}..={hi}, found {}", COLUMNS[col], cells[col])),
        }
    };
    let masks = cells[0]
        .as_array()
        .filter(|a| !a.is_empty())
        .ok_or_else(|| format!("column {}: expected a non-empty list, found {}", COLUMNS[0], cells[0]))?
        .iter()
        .map(|v| match v.as_integer() {
            Some(i) if (0..=i64::from(semantics.max_index())).contains(&i) => Ok(i as u8),
            _ => Err(format!("column {}: entry {v} outside 0..={}", COLUMNS[0], semantics.max_index())),
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let perturbation = int(1, 0, i64::from(MAX_PERTURBATION))?;
    let bunching = int(2, i64::from(MIN_BUNCHING), i64::from(MAX_BUNCHING))?;
    let threshold = match &cells[3] {
        toml::Value::Float(x) if *x > 0.0 && *x <= 1.0 => *x,
        v => return Err(format!("column {}: expected a number in (0, 1], found {v}", COLUMNS[3])),
    };
    Ok(DifficultyLevel { action_mask_levels: masks, perturbation, bunching, threshold })
}

/// Load a curriculum from a file path, or by name from the built-in set.
pub fn load_config(path: &Path) -> Result<CurriculumConfig> {
    if !path.exists() {
        if let Some((name, text)) = BUILTIN.iter().find(|(n, _)| Path::new(n) == path) {
            return CurriculumConfig::from_toml(text, name);
        }
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read curriculum {}: {e}", path.display())))?;
    CurriculumConfig::from_toml(&text, &path.display().to_string())
}

/// Zero-based level active at global step `t` under per-level `budgets`:
/// level m covers `[t_m, t_m + T_m)` where `t_m` is the sum of earlier budgets.
/// Steps past the last budget stay on the final level.
pub fn budget_lesson(budgets: &[u64], t: u64) -> usize {
    let mut end = 0u64;
    for (m, &b) in budgets.iter().enumerate() {
        end += b;
        if t < end {
            return m;
        }
    }
    budgets.len().saturating_sub(1)
}

/// Advance one level when the best improvement over the window's first
/// reward is below `threshold × |window mean|`. `window` is oldest first.
pub fn stagnancy_step(config: &CurriculumConfig, window: &[f64], level: usize) -> usize {
    let last = config.levels.len() - 1;
    if level >= last || window.len() < config.stagnancy.window || window.len() < 2 {
        return level.min(last);
    }
    let base = window[0];
    let best = window[1..].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = window.iter().sum::<f64>() / window.len() as f64;
    if best - base < config.levels[level].threshold * mean.abs() {
        level + 1
    } else {
        level
    }
}

/// Sliding reward window feeding [`stagnancy_step`]. The window is cleared
/// whenever the level advances so each level is judged on its own rewards.
#[derive(Debug, Clone)]
pub struct StagnancyTracker {
    window: VecDeque<f64>,
    level: usize,
}

impl StagnancyTracker {
    pub fn new() -> Self {
        Self { window: VecDeque::new(), level: 0 }
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// Record one iteration reward and return the (possibly advanced) level.
    pub fn push(&mut self, config: &CurriculumConfig, reward: f64) -> usize {
        self.window.push_back(reward);
        while self.window.len() > config.stagnancy.window {
            self.window.pop_front();
        }
        if self.window.len() == config.stagnancy.window {
            let next = stagnancy_step(config, self.window.make_contiguous(), self.level);
            if next != self.level {
                self.level = next;
                self.window.clear();
            }
        }
        self.level
    }
}

impl Default for StagnancyTracker {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn builtin(name: &str) -> CurriculumConfig {
        load_config(Path::new(name)).unwrap()
    }

    #[test]
    fn builtins_have_expected_sizes() {
        assert_eq!(builtin("easy_first").levels.len(), 16);
        assert_eq!(builtin("hard_first").levels.len(), 16);
        assert_eq!(builtin("combination").levels.len(), 12);
    }

    #[test]
    fn spot_rows() {
        let l = &builtin("easy_first").levels[2];
        assert_eq!((l.action_mask_levels.as_slice(), l.perturbation, l.bunching, l.threshold), (&[0, 1, 2][..], 0, 9, 0.08));
        let l = &builtin("hard_first").levels[0];
        assert_eq!((l.action_mask_levels.as_slice(), l.perturbation, l.bunching, l.threshold), (&[0][..], 4, 3, 0.01));
        let l = &builtin("combination").levels[8];
        assert_eq!((l.action_mask_levels.as_slice(), l.perturbation, l.bunching, l.threshold), (&[12, 13][..], 2, 1, 0.07));
    }

    #[test]
    fn golden_tables_match_byte_for_byte() {
        for (name, golden) in [
            ("easy_first", include_str!("../curricula/golden/easy_first.txt")),
            ("hard_first", include_str!("../curricula/golden/hard_first.txt")),
            ("combination", include_str!("../curricula/golden/combination.txt")),
        ] {
            assert_eq!(builtin(name).table(), golden, "{name}");
        }
    }

    #[test]
    fn action_index_masks_always_allow_plain_departure() {
        let c = builtin("combination");
        let m = c.levels[8].mask(MaskSemantics::ActionIndices).unwrap();
        assert_eq!(m.actions().collect::<Vec<_>>(), vec![0, 12, 13]);
        let m = builtin("easy_first").levels[2].mask(MaskSemantics::ActionIndices).unwrap();
        assert_eq!(m.actions().collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn catalog_union_reading() {
        let l = DifficultyLevel { action_mask_levels: vec![1, 6], perturbation: 0, bunching: 1, threshold: 0.1 };
        let m = l.mask(MaskSemantics::CatalogUnion).unwrap();
        assert_eq!(m.actions().collect::<Vec<_>>(), vec![0, 1, 2, 3, 4, 12, 13]);
    }

    #[test]
    fn malformed_rows_name_row_and_column() {
        let bad = "levels = [\n  [[0], 0, 10, 0.01],\n  [[0, 1], 7, 10, 0.01],\n]\n";
        let err = CurriculumConfig::from_toml(bad, "bad.toml").unwrap_err().to_string();
        assert!(err.contains("row 2") && err.contains("perturbation_levels"), "{err}");
        let bad = "levels = [[[0, 99], 0, 10, 0.01]]";
        let err = CurriculumConfig::from_toml(bad, "bad.toml").unwrap_err().to_string();
        assert!(err.contains("row 1") && err.contains("action_mask_levels"), "{err}");
        let bad = "levels = [[[0], 0, 10, 0.0]]";
        let err = CurriculumConfig::from_toml(bad, "bad.toml").unwrap_err().to_string();
        assert!(err.contains("difficulty_thresholds"), "{err}");
        assert!(CurriculumConfig::from_toml("levels = []", "x").is_err());
    }

    #[test]
    fn budget_boundaries() {
        let budgets = [5, 3, 2];
        assert_eq!(budget_lesson(&budgets, 0), 0);
        assert_eq!(budget_lesson(&budgets, 4), 0);
        assert_eq!(budget_lesson(&budgets, 5), 1);
        assert_eq!(budget_lesson(&budgets, 8), 2);
        assert_eq!(budget_lesson(&budgets, 10_000), 2);
    }

    #[test]
    fn equal_split_with_remainder() {
        let c = builtin("combination");
        let b = c.budgets(100).unwrap();
        assert_eq!(b.iter().sum::<u64>(), 100);
        assert_eq!(&b[..4], &[9, 9, 9, 9]);
        assert_eq!(b[4], 8);
        assert!(c.budgets(5).is_err());
    }

    #[test]
    fn final_level_is_sticky() {
        let c = builtin("combination");
        let last = c.levels.len() - 1;
        assert_eq!(stagnancy_step(&c, &[1.0; 10], last), last);
    }
}
