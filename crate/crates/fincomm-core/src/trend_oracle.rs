//! Deterministic trend analysis over a delta table.
//!
//! Computes the reasoning a reviewer applies by hand: overall direction,
//! ranked drivers and detractors, cross-region consistency, impact classes.
//! It can also emit a template-based baseline summary. The analysis is the
//! ground truth the validator checks generated text against, and the content
//! source for the mock backend.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ledger::DeltaTable;

/// Overall direction of the net movement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrendDirection {
    Increase,
    Decrease,
    Flat,
}

/// Direction of a single line or claim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

/// Whether a cell's contribution clears the major-impact threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Impact {
    Major,
    Minor,
}

/// Analysis tuning knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Minimum |contribution| (in percent) for a cell to count as major.
    pub major_threshold_pct: f64,
    /// Net totals within ±epsilon are treated as flat.
    pub flat_epsilon: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            major_threshold_pct: 10.0,
            flat_epsilon: 0.0,
        }
    }
}

/// One delta cell with its impact class, in ranked order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedRow {
    pub product_line: String,
    pub region: String,
    pub total_difference: f64,
    pub contribution_pct: f64,
    pub impact: Impact,
}

/// A product line whose regions all move strictly in the same direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistentLine {
    pub product_line: String,
    pub direction: Direction,
}

/// The full deterministic analysis of one delta table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendAnalysis {
    pub overall_direction: TrendDirection,
    pub net_total: f64,
    /// Rows sorted by |contribution| descending, ties by (product line, region).
    pub ranked_rows: Vec<RankedRow>,
    /// The cell with the largest strictly positive contribution, if any.
    pub main_driver: Option<(String, String)>,
    /// The cell with the most negative contribution, if any.
    pub main_detractor: Option<(String, String)>,
    /// Lines moving strictly one way across all their regions, ordered by
    /// |per-line net| descending.
    pub consistent_lines: Vec<ConsistentLine>,
    pub per_line_net: BTreeMap<String, f64>,
}

impl TrendAnalysis {
    /// Stable JSON rendering for the `analyze` subcommand and for injection
    /// into workflow prompts.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("analysis serializes")
    }
}

/// Classify one contribution against the major threshold (inclusive).
pub fn classify_impact(contribution_pct: f64, cfg: &OracleConfig) -> Impact {
    if contribution_pct.abs() >= cfg.major_threshold_pct {
        Impact::Major
    } else {
        Impact::Minor
    }
}

/// Analyze a delta table. Pure and deterministic.
pub fn analyze(table: &DeltaTable, cfg: &OracleConfig) -> TrendAnalysis {
    let overall_direction = if table.net_total > cfg.flat_epsilon {
        TrendDirection::Increase
    } else if table.net_total < -cfg.flat_epsilon {
        TrendDirection::Decrease
    } else {
        TrendDirection::Flat
    };

    let mut ranked_rows: Vec<RankedRow> = table
        .rows
        .iter()
        .map(|r| RankedRow {
            product_line: r.product_line.clone(),
            region: r.region.clone(),
            total_difference: r.total_difference,
            contribution_pct: r.contribution_pct,
            impact: classify_impact(r.contribution_pct, cfg),
        })
        .collect();
    ranked_rows.sort_by(|a, b| {
        b.contribution_pct
            .abs()
            .partial_cmp(&a.contribution_pct.abs())
            .expect("finite contributions")
            .then_with(|| {
                (a.product_line.as_str(), a.region.as_str())
                    .cmp(&(b.product_line.as_str(), b.region.as_str()))
            })
    });

    let key = |r: &RankedRow| (r.product_line.clone(), r.region.clone());
    let main_driver = ranked_rows
        .iter()
        .filter(|r| r.contribution_pct > 0.0)
        .fold(None::<&RankedRow>, |best, r| match best {
            None => Some(r),
            Some(b) => {
                let better = r.contribution_pct > b.contribution_pct
                    || (r.contribution_pct == b.contribution_pct
                        && (r.product_line.as_str(), r.region.as_str())
                            < (b.product_line.as_str(), b.region.as_str()));
                if better {
                    Some(r)
                } else {
                    Some(b)
                }
            }
        })
        .map(key);
    let main_detractor = ranked_rows
        .iter()
        .filter(|r| r.contribution_pct < 0.0)
        .fold(None::<&RankedRow>, |best, r| match best {
            None => Some(r),
            Some(b) => {
                let better = r.contribution_pct < b.contribution_pct
                    || (r.contribution_pct == b.contribution_pct
                        && (r.product_line.as_str(), r.region.as_str())
                            < (b.product_line.as_str(), b.region.as_str()));
                if better {
                    Some(r)
                } else {
                    Some(b)
                }
            }
        })
        .map(key);

    let mut per_line: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in &table.rows {
        per_line
            .entry(r.product_line.clone())
            .or_default()
            .push(r.total_difference);
    }
    let per_line_net: BTreeMap<String, f64> = per_line
        .iter()
        .map(|(pl, ds)| (pl.clone(), ds.iter().sum()))
        .collect();

    let mut consistent_lines: Vec<ConsistentLine> = per_line
        .iter()
        .filter_map(|(pl, ds)| {
            if ds.iter().all(|d| *d > 0.0) {
                Some(ConsistentLine {
                    product_line: pl.clone(),
                    direction: Direction::Up,
                })
            } else if ds.iter().all(|d| *d < 0.0) {
                Some(ConsistentLine {
                    product_line: pl.clone(),
                    direction: Direction::Down,
                })
            } else {
                None
            }
        })
        .collect();
    consistent_lines.sort_by(|a, b| {
        let na = per_line_net[&a.product_line].abs();
        let nb = per_line_net[&b.product_line].abs();
        nb.partial_cmp(&na)
            .expect("finite nets")
            .then_with(|| a.product_line.cmp(&b.product_line))
    });

    TrendAnalysis {
        overall_direction,
        net_total: table.net_total,
        ranked_rows,
        main_driver,
        main_detractor,
        consistent_lines,
        per_line_net,
    }
}

/// Deterministic template summary of an analysis, at most `max_sentences`
/// sentences, each product line mentioned at most once, no digits outside
/// entity names.
///
/// Sentences are emitted in priority order: the headline driver (only under
/// an overall increase) or detractor (only under a decrease), then
/// consistent lines by |per-line net| descending, then remaining major cells
/// by rank.
pub fn baseline_summary(analysis: &TrendAnalysis, max_sentences: usize) -> String {
    let mut sentences: Vec<String> = Vec::new();
    let mut mentioned: Vec<&str> = Vec::new();

    match analysis.overall_direction {
        TrendDirection::Increase => {
            if let Some((pl, region)) = &analysis.main_driver {
                sentences.push(format!("{pl} in {region} as main growth driver."));
                mentioned.push(pl);
            }
        }
        TrendDirection::Decrease => {
            if let Some((pl, region)) = &analysis.main_detractor {
                sentences.push(format!("{pl} in {region} as main detractor."));
                mentioned.push(pl);
            }
        }
        TrendDirection::Flat => {}
    }

    for line in &analysis.consistent_lines {
        if sentences.len() >= max_sentences {
            break;
        }
        if mentioned.contains(&line.product_line.as_str()) {
            continue;
        }
        let word = match line.direction {
            Direction::Up => "up",
            Direction::Down => "down",
        };
        sentences.push(format!("{} {word} in all regions.", line.product_line));
        mentioned.push(&line.product_line);
    }

    for row in &analysis.ranked_rows {
        if sentences.len() >= max_sentences {
            break;
        }
        if row.impact != Impact::Major
            || row.total_difference == 0.0
            || mentioned.contains(&row.product_line.as_str())
        {
            continue;
        }
        let opener = if row.total_difference > 0.0 {
            "Increase"
        } else {
            "Decrease"
        };
        sentences.push(format!(
            "{opener} from {} in {}.",
            row.product_line, row.region
        ));
        mentioned.push(&row.product_line);
    }

    sentences.truncate(max_sentences);
    sentences.join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::test_fixtures::example_table;
    use crate::ledger::{compute_contributions, DeltaTable};
    use proptest::prelude::*;

    fn table_from(deltas: &[(&str, &str, f64)]) -> DeltaTable {
        compute_contributions(DeltaTable::from_deltas(
            deltas
                .iter()
                .map(|(pl, rg, d)| (pl.to_string(), rg.to_string(), *d)),
            "period_a",
            "period_b",
        ))
    }

    #[test]
    fn example_table_driver_detractor_and_direction() {
        let analysis = analyze(&example_table(), &OracleConfig::default());
        assert_eq!(
            analysis.main_driver,
            Some(("CCVE".into(), "AMER - Americas".into()))
        );
        assert_eq!(
            analysis.main_detractor,
            Some(("CCVE".into(), "APAC - Asia/Pacific".into()))
        );
        assert_eq!(analysis.overall_direction, TrendDirection::Increase);
        assert_eq!(analysis.net_total, 118_833_297.0);
    }

    #[test]
    fn example_table_consistent_lines() {
        let analysis = analyze(&example_table(), &OracleConfig::default());
        let got: Vec<(&str, Direction)> = analysis
            .consistent_lines
            .iter()
            .map(|c| (c.product_line.as_str(), c.direction))
            .collect();
        assert_eq!(got, vec![("CCSE", Direction::Up), ("CCHD", Direction::Down)]);
    }

    #[test]
    fn all_zero_table_is_flat_and_empty() {
        let table = table_from(&[("A", "X", 0.0), ("B", "Y", 0.0)]);
        let analysis = analyze(&table, &OracleConfig::default());
        assert_eq!(analysis.overall_direction, TrendDirection::Flat);
        assert_eq!(analysis.main_driver, None);
        assert_eq!(analysis.main_detractor, None);
        assert!(analysis.consistent_lines.is_empty());
        assert_eq!(baseline_summary(&analysis, 4), "");
    }

    #[test]
    fn impact_classification_boundaries() {
        let cfg = OracleConfig::default();
        assert_eq!(classify_impact(0.0, &cfg), Impact::Minor);
        assert_eq!(classify_impact(65.35, &cfg), Impact::Major);
        assert_eq!(classify_impact(-10.0, &cfg), Impact::Major);
        assert_eq!(classify_impact(9.999, &cfg), Impact::Minor);
    }

    #[test]
    fn example_baseline_summary_golden() {
        let analysis = analyze(&example_table(), &OracleConfig::default());
        let summary = baseline_summary(&analysis, 4);
        assert_eq!(
            summary,
            "CCVE in AMER - Americas as main growth driver. \
             CCSE up in all regions. CCHD down in all regions."
        );
    }

    #[test]
    fn baseline_respects_sentence_cap() {
        let analysis = analyze(&example_table(), &OracleConfig::default());
        let summary = baseline_summary(&analysis, 1);
        assert_eq!(summary, "CCVE in AMER - Americas as main growth driver.");
    }

    #[test]
    fn detractor_headline_under_overall_decrease() {
        let table = table_from(&[("A", "X", -80.0), ("B", "Y", 30.0), ("B", "Z", -10.0)]);
        let analysis = analyze(&table, &OracleConfig::default());
        assert_eq!(analysis.overall_direction, TrendDirection::Decrease);
        let summary = baseline_summary(&analysis, 4);
        assert!(summary.starts_with("A in X as main detractor."), "{summary}");
        assert!(!summary.contains("growth driver"));
    }

    #[test]
    fn flat_direction_emits_no_headline() {
        // Net exactly zero but with movement: flat overall, no main claims.
        let table = table_from(&[("A", "X", 50.0), ("B", "Y", -50.0)]);
        let analysis = analyze(&table, &OracleConfig::default());
        assert_eq!(analysis.overall_direction, TrendDirection::Flat);
        let summary = baseline_summary(&analysis, 4);
        assert!(!summary.contains("main growth driver"));
        assert!(!summary.contains("main detractor"));
        // Consistent single-region lines still get reported.
        assert_eq!(summary, "A up in all regions. B down in all regions.");
    }

    #[test]
    fn ties_break_lexicographically() {
        let table = table_from(&[("B", "Y", 10.0), ("A", "X", 10.0), ("C", "Z", -10.0)]);
        let analysis = analyze(&table, &OracleConfig::default());
        assert_eq!(analysis.main_driver, Some(("A".into(), "X".into())));
    }

    #[test]
    fn analysis_json_is_stable() {
        let analysis = analyze(&example_table(), &OracleConfig::default());
        let a = analysis.to_json();
        let b = analysis.to_json();
        assert_eq!(a, b);
        assert!(a.contains("\"overall_direction\": \"increase\""));
        assert!(a.contains("\"main_driver\""));
    }

    prop_compose! {
        fn arb_table(max_rows: usize)(
            deltas in prop::collection::btree_map(
                (0usize..6, 0usize..4),
                -1_000_000i64..1_000_000,
                1..max_rows,
            )
        ) -> DeltaTable {
            let lines = ["PL-A", "PL-B", "PL-C", "PL-D", "PL-E", "PL-F"];
            let regions = ["AMER", "EMEA", "APAC", "LATAM"];
            compute_contributions(DeltaTable::from_deltas(
                deltas
                    .into_iter()
                    .map(|((li, ri), d)| (lines[li].to_string(), regions[ri].to_string(), d as f64)),
                "period_a",
                "period_b",
            ))
        }
    }

    proptest! {
        #[test]
        fn argmax_matches_brute_force(table in arb_table(24)) {
            let analysis = analyze(&table, &OracleConfig::default());

            let mut best_driver: Option<(&str, &str, f64)> = None;
            let mut best_detractor: Option<(&str, &str, f64)> = None;
            for r in &table.rows {
                if r.contribution_pct > 0.0 {
                    let replace = match best_driver {
                        None => true,
                        Some((pl, rg, c)) => r.contribution_pct > c
                            || (r.contribution_pct == c
                                && (r.product_line.as_str(), r.region.as_str()) < (pl, rg)),
                    };
                    if replace {
                        best_driver = Some((&r.product_line, &r.region, r.contribution_pct));
                    }
                }
                if r.contribution_pct < 0.0 {
                    let replace = match best_detractor {
                        None => true,
                        Some((pl, rg, c)) => r.contribution_pct < c
                            || (r.contribution_pct == c
                                && (r.product_line.as_str(), r.region.as_str()) < (pl, rg)),
                    };
                    if replace {
                        best_detractor = Some((&r.product_line, &r.region, r.contribution_pct));
                    }
                }
            }
            prop_assert_eq!(
                analysis.main_driver,
                best_driver.map(|(pl, rg, _)| (pl.to_string(), rg.to_string()))
            );
            prop_assert_eq!(
                analysis.main_detractor,
                best_detractor.map(|(pl, rg, _)| (pl.to_string(), rg.to_string()))
            );

            // Ranked order must match an independently sorted copy.
            let mut expected: Vec<(f64, String, String)> = table
                .rows
                .iter()
                .map(|r| (r.contribution_pct.abs(), r.product_line.clone(), r.region.clone()))
                .collect();
            expected.sort_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .unwrap()
                    .then_with(|| (a.1.as_str(), a.2.as_str()).cmp(&(b.1.as_str(), b.2.as_str())))
            });
            let got: Vec<(String, String)> = analysis
                .ranked_rows
                .iter()
                .map(|r| (r.product_line.clone(), r.region.clone()))
                .collect();
            let want: Vec<(String, String)> = expected.into_iter().map(|(_, pl, rg)| (pl, rg)).collect();
            prop_assert_eq!(got, want);
        }

        #[test]
        fn consistency_entries_are_sound(table in arb_table(24)) {
            let analysis = analyze(&table, &OracleConfig::default());
            for entry in &analysis.consistent_lines {
                let rows: Vec<&crate::ledger::DeltaRow> = table
                    .rows
                    .iter()
                    .filter(|r| r.product_line == entry.product_line)
                    .collect();
                prop_assert!(!rows.is_empty());
                match entry.direction {
                    Direction::Up => prop_assert!(rows.iter().all(|r| r.total_difference > 0.0)),
                    Direction::Down => prop_assert!(rows.iter().all(|r| r.total_difference < 0.0)),
                }
            }
        }

        #[test]
        fn positive_scaling_leaves_analysis_invariant(table in arb_table(20), exp in -3i32..10) {
            // Powers of two keep the scaling exact in floating point, so the
            // invariance holds bit-for-bit rather than within a tolerance.
            let c = 2f64.powi(exp);
            let scaled = compute_contributions(DeltaTable::from_deltas(
                table
                    .rows
                    .iter()
                    .map(|r| (r.product_line.clone(), r.region.clone(), r.total_difference * c)),
                "period_a",
                "period_b",
            ));
            let cfg = OracleConfig::default();
            let a = analyze(&table, &cfg);
            let b = analyze(&scaled, &cfg);
            prop_assert_eq!(a.overall_direction, b.overall_direction);
            prop_assert_eq!(&a.main_driver, &b.main_driver);
            prop_assert_eq!(&a.main_detractor, &b.main_detractor);
            prop_assert_eq!(&a.consistent_lines, &b.consistent_lines);
            let impacts_a: Vec<Impact> = a.ranked_rows.iter().map(|r| r.impact).collect();
            let impacts_b: Vec<Impact> = b.ranked_rows.iter().map(|r| r.impact).collect();
            prop_assert_eq!(impacts_a, impacts_b);
            prop_assert_eq!(baseline_summary(&a, 4), baseline_summary(&b, 4));
        }
    }
}
