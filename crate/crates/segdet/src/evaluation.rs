//! Scoring pipeline outputs against ground truth: greedy matching under a
//! configurable overlap criterion, recall/precision, hierarchical
//! identification rates and confusion reporting.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::geometry::{detection_order, footprint_iou, overlap_over_target, Detection, Footprint};
use crate::ingest::GtObject;
use crate::taxonomy::Taxonomy;

/// Which overlap measure qualifies a detection as covering a ground-truth
/// object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OverlapKind {
    /// Intersection over the ground-truth extent; robust to generous boxes
    /// around low-quality delineations.
    OverTarget,
    /// Intersection over union.
    Iou,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchCriterion {
    pub kind: OverlapKind,
    pub threshold: f64,
}

impl Default for MatchCriterion {
    fn default() -> Self {
        MatchCriterion {
            kind: OverlapKind::OverTarget,
            threshold: 0.5,
        }
    }
}

impl MatchCriterion {
    pub fn iou() -> Self {
        MatchCriterion {
            kind: OverlapKind::Iou,
            threshold: 0.5,
        }
    }

    fn overlap(&self, detection: &Detection, gt: &GtObject) -> f64 {
        let pred = Footprint::Box(detection.bbox);
        match self.kind {
            OverlapKind::OverTarget => {
                overlap_over_target(&pred, &gt.footprint).unwrap_or(0.0)
            }
            OverlapKind::Iou => footprint_iou(&pred, &gt.footprint),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchPair {
    pub gt_index: usize,
    pub det_index: usize,
    pub overlap: f64,
}

/// One-to-one assignment between ground truth and detections.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchResult {
    pub pairs: Vec<MatchPair>,
    /// False negatives.
    pub unmatched_gt: Vec<usize>,
    /// False positives.
    pub unmatched_detections: Vec<usize>,
}

/// Greedy matching in descending detection score: each detection takes the
/// unmatched ground-truth object with the highest qualifying overlap.
/// Ties break toward higher overlap, then input order.
pub fn match_detections(
    gt: &[GtObject],
    detections: &[Detection],
    criterion: &MatchCriterion,
) -> MatchResult {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| detection_order(&detections[a], &detections[b]).then(a.cmp(&b)));

    let mut gt_taken = vec![false; gt.len()];
    let mut det_matched = vec![false; detections.len()];
    let mut pairs = Vec::new();
    for &det_index in &order {
        let detection = &detections[det_index];
        let mut best: Option<(usize, f64)> = None;
        for (gt_index, object) in gt.iter().enumerate() {
            if gt_taken[gt_index] {
                continue;
            }
            let overlap = criterion.overlap(detection, object);
            if overlap < criterion.threshold {
                continue;
            }
            let better = match best {
                None => true,
                Some((_, best_overlap)) => overlap > best_overlap,
            };
            if better {
                best = Some((gt_index, overlap));
            }
        }
        if let Some((gt_index, overlap)) = best {
            gt_taken[gt_index] = true;
            det_matched[det_index] = true;
            pairs.push(MatchPair {
                gt_index,
                det_index,
                overlap,
            });
        }
    }

    MatchResult {
        pairs,
        unmatched_gt: (0..gt.len()).filter(|&i| !gt_taken[i]).collect(),
        unmatched_detections: (0..detections.len()).filter(|&i| !det_matched[i]).collect(),
    }
}

/// Count-based scorecard; ratios are computed on demand so scoreboards can
/// be merged across scenes by summing counts first.
#[derive(Debug, Clone, Default, PartialEq, Serialize, serde::Deserialize)]
pub struct Scoreboard {
    pub n_gt: u64,
    pub n_detections: u64,
    pub n_matched: u64,
    /// Matched pairs whose detection carries a level-3 claim; recovered
    /// level-1 objects count for detection but not identification.
    pub n_identifiable: u64,
    pub n_l2_agree: u64,
    pub n_l3_agree: u64,
    /// Level-3 confusion over identifiable pairs: gt label -> predicted
    /// label -> count.
    pub confusion: BTreeMap<String, BTreeMap<String, u64>>,
}

impl Scoreboard {
    pub fn recall(&self) -> Option<f64> {
        ratio(self.n_matched, self.n_gt)
    }

    pub fn precision(&self) -> Option<f64> {
        ratio(self.n_matched, self.n_detections)
    }

    /// Fraction of identifiable pairs agreeing at the function level.
    pub fn identification_rate_l2(&self) -> Option<f64> {
        ratio(self.n_l2_agree, self.n_identifiable)
    }

    /// Fraction of identifiable pairs with exact identification agreement.
    pub fn identification_rate_l3(&self) -> Option<f64> {
        ratio(self.n_l3_agree, self.n_identifiable)
    }

    pub fn merge(&mut self, other: &Scoreboard) {
        self.n_gt += other.n_gt;
        self.n_detections += other.n_detections;
        self.n_matched += other.n_matched;
        self.n_identifiable += other.n_identifiable;
        self.n_l2_agree += other.n_l2_agree;
        self.n_l3_agree += other.n_l3_agree;
        for (gt_label, row) in &other.confusion {
            let target = self.confusion.entry(gt_label.clone()).or_default();
            for (pred_label, count) in row {
                *target.entry(pred_label.clone()).or_default() += count;
            }
        }
    }
}

fn ratio(numerator: u64, denominator: u64) -> Option<f64> {
    if denominator == 0 {
        None
    } else {
        Some(numerator as f64 / denominator as f64)
    }
}

/// Scores a match result. Identification rates are computed over matched
/// pairs whose detection carries a level-3 label; level-2 agreement follows
/// the taxonomy's ancestor relation.
pub fn score(
    matched: &MatchResult,
    gt: &[GtObject],
    detections: &[Detection],
    taxonomy: &Taxonomy,
) -> Scoreboard {
    let mut board = Scoreboard {
        n_gt: gt.len() as u64,
        n_detections: detections.len() as u64,
        n_matched: matched.pairs.len() as u64,
        ..Scoreboard::default()
    };
    for pair in &matched.pairs {
        let gt_label = &gt[pair.gt_index].label;
        let det_label = &detections[pair.det_index].label;
        if det_label.level != 3 {
            continue;
        }
        board.n_identifiable += 1;
        if det_label.name == gt_label.name {
            board.n_l3_agree += 1;
        }
        let gt_l2 = taxonomy.ancestor(gt_label, 2).ok();
        let det_l2 = taxonomy.ancestor(det_label, 2).ok();
        if gt_l2.is_some() && gt_l2 == det_l2 {
            board.n_l2_agree += 1;
        }
        *board
            .confusion
            .entry(gt_label.name.clone())
            .or_default()
            .entry(det_label.name.clone())
            .or_default() += 1;
    }
    board
}

// ---------------------------------------------------------------------------
// Cross-system comparison
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub name: String,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
}

/// Tabular recall/precision comparison. `dominant` names the system that
/// beats every other on both metrics (strictly on at least one), when one
/// exists.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub dominant: Option<String>,
}

fn dominates(a: &ComparisonRow, b: &ComparisonRow) -> bool {
    match (a.recall, a.precision, b.recall, b.precision) {
        (Some(ra), Some(pa), Some(rb), Some(pb)) => {
            ra >= rb && pa >= pb && (ra > rb || pa > pb)
        }
        _ => false,
    }
}

pub fn compare(boards: &[(String, &Scoreboard)]) -> ComparisonReport {
    debug_assert!(boards.len() >= 2, "comparison needs at least two systems");
    let rows: Vec<ComparisonRow> = boards
        .iter()
        .map(|(name, board)| ComparisonRow {
            name: name.clone(),
            recall: board.recall(),
            precision: board.precision(),
        })
        .collect();
    let dominant = rows
        .iter()
        .find(|candidate| {
            rows.iter()
                .filter(|other| other.name != candidate.name)
                .all(|other| dominates(candidate, other))
        })
        .map(|row| row.name.clone());
    ComparisonReport { rows, dominant }
}

fn fmt_ratio(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.3}"),
        None => "-".to_string(),
    }
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<20} {:>8} {:>8}", "system", "R", "P")?;
        for row in &self.rows {
            writeln!(
                f,
                "{:<20} {:>8} {:>8}",
                row.name,
                fmt_ratio(row.recall),
                fmt_ratio(row.precision)
            )?;
        }
        match &self.dominant {
            Some(name) => writeln!(f, "dominant: {name} (best recall and precision)"),
            None => writeln!(f, "dominant: none"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;
    use crate::taxonomy::Label;

    fn gt_box(x0: f64, y0: f64, x1: f64, y1: f64, label: &str) -> GtObject {
        GtObject {
            id: 0,
            label: Label::new(label, 3),
            footprint: Footprint::Box(BBox::new(x0, y0, x1, y1)),
        }
    }

    fn det(x0: f64, y0: f64, x1: f64, y1: f64, score: f64, label: &str, level: u8) -> Detection {
        Detection::new(BBox::new(x0, y0, x1, y1), score, Label::new(label, level))
    }

    #[test]
    fn match_overlap_threshold() {
        let criterion = MatchCriterion::default();
        let gt = vec![gt_box(0.0, 0.0, 10.0, 10.0, "F-16")];

        // 60% coverage of the target qualifies.
        let covering = vec![det(0.0, 0.0, 6.0, 10.0, 0.9, "F-16", 3)];
        let m = match_detections(&gt, &covering, &criterion);
        assert_eq!(m.pairs.len(), 1);
        assert!(m.unmatched_gt.is_empty() && m.unmatched_detections.is_empty());

        // 40% coverage does not.
        let partial = vec![det(0.0, 0.0, 4.0, 10.0, 0.9, "F-16", 3)];
        let m = match_detections(&gt, &partial, &criterion);
        assert!(m.pairs.is_empty());
        assert_eq!(m.unmatched_gt, vec![0]);
        assert_eq!(m.unmatched_detections, vec![0]);

        // No detections: everything is a false negative.
        let m = match_detections(&gt, &[], &criterion);
        assert_eq!(m.unmatched_gt, vec![0]);
    }

    #[test]
    fn greedy_matching_prefers_higher_scores_and_overlaps() {
        let criterion = MatchCriterion::default();
        let gt = vec![
            gt_box(0.0, 0.0, 10.0, 10.0, "F-16"),
            gt_box(20.0, 0.0, 30.0, 10.0, "Tu-95"),
        ];
        let dets = vec![
            det(0.0, 0.0, 10.0, 10.0, 0.7, "F-16", 3),
            det(19.0, 0.0, 31.0, 10.0, 0.9, "Tu-95", 3),
        ];
        let m = match_detections(&gt, &dets, &criterion);
        assert_eq!(m.pairs.len(), 2);
        // Higher score matched first.
        assert_eq!(m.pairs[0].det_index, 1);
        assert_eq!(m.pairs[0].gt_index, 1);
    }

    #[test]
    fn matching_algebra_on_random_instances() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let tax = Taxonomy::default_taxonomy();
        let names = tax.level3().to_vec();
        for _ in 0..100 {
            let gt: Vec<GtObject> = (0..rng.gen_range(0..8))
                .map(|_| {
                    let x = rng.gen_range(0.0..90.0);
                    let y = rng.gen_range(0.0..90.0);
                    gt_box(x, y, x + rng.gen_range(2.0..10.0), y + rng.gen_range(2.0..10.0),
                        &names[rng.gen_range(0..names.len())])
                })
                .collect();
            let dets: Vec<Detection> = (0..rng.gen_range(0..8))
                .map(|_| {
                    let x = rng.gen_range(0.0..90.0);
                    let y = rng.gen_range(0.0..90.0);
                    det(x, y, x + rng.gen_range(2.0..10.0), y + rng.gen_range(2.0..10.0),
                        rng.gen_range(0.0..1.0), &names[rng.gen_range(0..names.len())], 3)
                })
                .collect();
            let m = match_detections(&gt, &dets, &MatchCriterion::default());
            assert_eq!(m.pairs.len() + m.unmatched_gt.len(), gt.len());
            assert_eq!(m.pairs.len() + m.unmatched_detections.len(), dets.len());
            let board = score(&m, &gt, &dets, &tax);
            if board.n_identifiable > 0 {
                assert!(board.identification_rate_l2() >= board.identification_rate_l3());
            }
        }
    }

    #[test]
    fn perfect_run_scores_ones() {
        let tax = Taxonomy::default_taxonomy();
        let gt = vec![gt_box(0.0, 0.0, 10.0, 10.0, "F-16")];
        let dets = vec![det(0.0, 0.0, 10.0, 10.0, 0.9, "F-16", 3)];
        let m = match_detections(&gt, &dets, &MatchCriterion::default());
        let board = score(&m, &gt, &dets, &tax);
        assert_eq!(board.recall(), Some(1.0));
        assert_eq!(board.precision(), Some(1.0));
        assert_eq!(board.identification_rate_l2(), Some(1.0));
        assert_eq!(board.identification_rate_l3(), Some(1.0));
    }

    #[test]
    fn ten_pair_identification_fixture() {
        // 8 exact level-3 labels, one agreeing only at level 2, one wrong
        // at both levels: l3 = 0.8, l2 = 0.9.
        let tax = Taxonomy::default_taxonomy();
        let mut gt = Vec::new();
        let mut dets = Vec::new();
        for i in 0..10 {
            let x = i as f64 * 20.0;
            gt.push(gt_box(x, 0.0, x + 10.0, 10.0, "F-16"));
            let predicted = match i {
                8 => "Su-27",  // combat, wrong identification
                9 => "Tu-95",  // wrong function entirely
                _ => "F-16",
            };
            dets.push(det(x, 0.0, x + 10.0, 10.0, 0.9, predicted, 3));
        }
        let m = match_detections(&gt, &dets, &MatchCriterion::default());
        assert_eq!(m.pairs.len(), 10);
        let board = score(&m, &gt, &dets, &tax);
        assert_eq!(board.identification_rate_l3(), Some(0.8));
        assert_eq!(board.identification_rate_l2(), Some(0.9));
        assert_eq!(board.confusion["F-16"]["Su-27"], 1);
        assert_eq!(board.confusion["F-16"]["Tu-95"], 1);
        assert_eq!(board.confusion["F-16"]["F-16"], 8);
    }

    #[test]
    fn zero_matches_leave_rates_undefined() {
        let tax = Taxonomy::default_taxonomy();
        let gt = vec![gt_box(0.0, 0.0, 10.0, 10.0, "F-16")];
        let m = match_detections(&gt, &[], &MatchCriterion::default());
        let board = score(&m, &gt, &[], &tax);
        assert_eq!(board.identification_rate_l2(), None);
        assert_eq!(board.identification_rate_l3(), None);
        assert_eq!(board.precision(), None);
        assert_eq!(board.recall(), Some(0.0));
    }

    #[test]
    fn recovered_detections_count_for_detection_not_identification() {
        let tax = Taxonomy::default_taxonomy();
        let gt = vec![gt_box(0.0, 0.0, 10.0, 10.0, "F-16")];
        let dets = vec![det(0.0, 0.0, 10.0, 10.0, 0.9, "aircraft", 1)];
        let m = match_detections(&gt, &dets, &MatchCriterion::default());
        let board = score(&m, &gt, &dets, &tax);
        assert_eq!(board.recall(), Some(1.0));
        assert_eq!(board.precision(), Some(1.0));
        assert_eq!(board.n_identifiable, 0);
        assert_eq!(board.identification_rate_l3(), None);
    }

    #[test]
    fn equal_score_ties_break_deterministically() {
        let criterion = MatchCriterion::default();
        let gt = vec![gt_box(0.0, 0.0, 10.0, 10.0, "F-16")];
        // Same score, same box: larger-area/lexicographic tie-break applies,
        // and a permutation of the input cannot change the matched set.
        let a = det(0.0, 0.0, 10.0, 10.0, 0.9, "F-16", 3);
        let b = det(0.0, 0.0, 9.0, 10.0, 0.9, "Su-27", 3);
        let forward = match_detections(&gt, &[a.clone(), b.clone()], &criterion);
        let backward = match_detections(&gt, &[b, a], &criterion);
        assert_eq!(forward.pairs.len(), 1);
        assert_eq!(backward.pairs.len(), 1);
        // The larger box wins the tie in both orders.
        assert_eq!(forward.pairs[0].overlap, backward.pairs[0].overlap);
    }

    #[test]
    fn scoreboard_merge_sums_counts() {
        let tax = Taxonomy::default_taxonomy();
        let gt = vec![gt_box(0.0, 0.0, 10.0, 10.0, "F-16")];
        let dets = vec![det(0.0, 0.0, 10.0, 10.0, 0.9, "F-16", 3)];
        let m = match_detections(&gt, &dets, &MatchCriterion::default());
        let board = score(&m, &gt, &dets, &tax);
        let mut merged = board.clone();
        merged.merge(&board);
        assert_eq!(merged.n_gt, 2);
        assert_eq!(merged.n_matched, 2);
        assert_eq!(merged.recall(), Some(1.0));
        assert_eq!(merged.confusion["F-16"]["F-16"], 2);
    }

    #[test]
    fn comparison_dominance() {
        let board = |r: u64, p_extra: u64| Scoreboard {
            n_gt: 100,
            n_matched: r,
            n_detections: r + p_extra,
            ..Scoreboard::default()
        };
        // Fused beats both component systems on R and P.
        let seg = board(91, 26);
        let det_alone = board(87, 29);
        let fused = board(95, 13);
        let report = compare(&[
            ("segmentation".to_string(), &seg),
            ("detection".to_string(), &det_alone),
            ("fused".to_string(), &fused),
        ]);
        assert_eq!(report.dominant.as_deref(), Some("fused"));

        // Identical boards: nothing dominates.
        let report = compare(&[
            ("a".to_string(), &seg),
            ("b".to_string(), &seg.clone()),
        ]);
        assert_eq!(report.dominant, None);

        // Equal recall, higher precision still dominates.
        let low_p = board(95, 95);
        let high_p = board(95, 18);
        let report = compare(&[
            ("seg".to_string(), &low_p),
            ("fused".to_string(), &high_p),
        ]);
        assert_eq!(report.dominant.as_deref(), Some("fused"));
    }
}
