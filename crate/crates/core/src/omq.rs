//! Object Map Quality scoring.
//!
//! Every proposal is compared with every ground-truth object through a
//! pairwise quality (geometric mean of 3D IoU and the probability on the true
//! class, plus the probability on the true change state for scene change
//! detection). The optimal assignment of those qualities yields the true
//! positives; unmatched ground truth counts as false negatives and unmatched
//! proposals as false positives weighted by how confident they were.
//!
//! `OMQ = Σ q_tp / (N_TP + N_FN + Σ c_fp)`

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use thiserror::Error;

use crate::assignment::{self, Assignment, QualityMatrix};
use crate::geometry::iou_3d;
use crate::object_map::{GroundTruthMap, GroundTruthObject, ObjectMap, ProposedObject, TaskKind};

pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OmqError {
    #[error("task mismatch: {0}")]
    TaskMismatch(String),
}

pub fn label_quality(o: &ProposedObject, g: &GroundTruthObject) -> f64 {
    o.label.prob(g.true_label)
}

pub fn spatial_quality(o: &ProposedObject, g: &GroundTruthObject) -> f64 {
    iou_3d(&o.cuboid, &g.cuboid)
}

pub fn pairwise_quality(o: &ProposedObject, g: &GroundTruthObject) -> f64 {
    (spatial_quality(o, g) * label_quality(o, g)).sqrt()
}

pub fn state_quality(o: &ProposedObject, g: &GroundTruthObject) -> Result<f64, OmqError> {
    let state = o
        .state
        .ok_or_else(|| OmqError::TaskMismatch("proposal has no state distribution".into()))?;
    let truth = g
        .true_state
        .ok_or_else(|| OmqError::TaskMismatch("ground truth has no change state".into()))?;
    Ok(state.prob(truth))
}

pub fn pairwise_quality_scd(o: &ProposedObject, g: &GroundTruthObject) -> Result<f64, OmqError> {
    let st = state_quality(o, g)?;
    Ok((spatial_quality(o, g) * label_quality(o, g) * st).cbrt())
}

/// Cost of an unmatched proposal: its largest non-background class belief.
pub fn fp_cost(o: &ProposedObject) -> f64 {
    o.label.max_prob()
}

/// Cost of an unmatched change proposal: geometric mean of its largest class
/// belief and its largest belief that the object changed.
pub fn fp_cost_scd(o: &ProposedObject) -> Result<f64, OmqError> {
    let state = o
        .state
        .ok_or_else(|| OmqError::TaskMismatch("proposal has no state distribution".into()))?;
    Ok((o.label.max_prob() * state.max_changed()).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairBreakdown {
    pub proposed: usize,
    pub gt: usize,
    pub gt_instance: String,
    pub spatial: f64,
    pub label: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<f64>,
    pub pairwise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: TaskKind,
    pub environment: String,
    pub omq: f64,
    pub avg_pairwise: f64,
    pub avg_spatial_quality: f64,
    pub avg_label_quality: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avg_state_quality: Option<f64>,
    pub n_tp: usize,
    pub n_fn: usize,
    pub n_fp: usize,
    /// One cost per entry of `assignment.unmatched_proposed`, same order.
    pub fp_costs: Vec<f64>,
    pub assignment: Assignment,
    pub pairs: Vec<PairBreakdown>,
}

impl EvalReport {
    /// Recomputes the score from the stored counts and costs.
    pub fn recompute_omq(&self) -> f64 {
        omq_from_parts(
            sorted_sum(self.pairs.iter().map(|p| p.pairwise)),
            self.n_tp,
            self.n_fn,
            self.n_fp,
            sorted_sum(self.fp_costs.iter().copied()),
        )
    }
}

/// Sums in ascending order so the result does not depend on object order.
fn sorted_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.into_iter().sum()
}

fn omq_from_parts(tp_sum: f64, n_tp: usize, n_fn: usize, n_fp: usize, fp_cost_sum: f64) -> f64 {
    let denom = (n_tp + n_fn) as f64 + fp_cost_sum;
    if denom > 0.0 {
        (tp_sum / denom).clamp(0.0, 1.0)
    } else if n_fp == 0 {
        // Nothing to find and nothing proposed.
        1.0
    } else {
        0.0
    }
}

fn check_tasks(proposed: &ObjectMap, gt: &GroundTruthMap) -> Result<(), OmqError> {
    if proposed.task != gt.task {
        return Err(OmqError::TaskMismatch(format!(
            "proposed map is {} but ground truth is {}",
            proposed.task, gt.task
        )));
    }
    let scd = gt.task == TaskKind::Scd;
    if let Some(i) = proposed.objects.iter().position(|o| o.state.is_some() != scd) {
        return Err(OmqError::TaskMismatch(format!("proposal {i} does not fit a {} map", gt.task)));
    }
    if let Some(j) = gt.objects.iter().position(|g| g.true_state.is_some() != scd) {
        return Err(OmqError::TaskMismatch(format!("ground truth {j} does not fit a {} map", gt.task)));
    }
    Ok(())
}

/// Scores a proposed map against ground truth.
pub fn evaluate(proposed: &ObjectMap, gt: &GroundTruthMap) -> Result<EvalReport, OmqError> {
    check_tasks(proposed, gt)?;
    let scd = gt.task == TaskKind::Scd;
    let (m, n) = (proposed.objects.len(), gt.objects.len());

    let mut spatial = vec![0.0; m * n];
    let mut label = vec![0.0; m * n];
    let mut state = vec![0.0; m * n];
    let mut pairwise = vec![0.0; m * n];
    for (i, o) in proposed.objects.iter().enumerate() {
        for (j, g) in gt.objects.iter().enumerate() {
            let k = i * n + j;
            spatial[k] = spatial_quality(o, g);
            label[k] = label_quality(o, g);
            pairwise[k] = if scd {
                state[k] = state_quality(o, g)?;
                (spatial[k] * label[k] * state[k]).cbrt()
            } else {
                (spatial[k] * label[k]).sqrt()
            };
        }
    }
    let matrix = QualityMatrix::new(m, n, pairwise).expect("pairwise qualities lie in [0, 1]");
    let assignment = assignment::solve(&matrix);

    let pairs: Vec<PairBreakdown> = assignment
        .pairs
        .iter()
        .map(|p| {
            let k = p.proposed * n + p.gt;
            PairBreakdown {
                proposed: p.proposed,
                gt: p.gt,
                gt_instance: gt.objects[p.gt].instance_id.clone(),
                spatial: spatial[k],
                label: label[k],
                state: scd.then_some(state[k]),
                pairwise: p.quality,
            }
        })
        .collect();

    let fp_costs = assignment
        .unmatched_proposed
        .iter()
        .map(|&i| {
            let o = &proposed.objects[i];
            if scd {
                fp_cost_scd(o)
            } else {
                Ok(fp_cost(o))
            }
        })
        .collect::<Result<Vec<_>, _>>()?;

    let n_tp = pairs.len();
    let n_fn = assignment.unmatched_gt.len();
    let n_fp = assignment.unmatched_proposed.len();
    let mean = |f: &dyn Fn(&PairBreakdown) -> f64| {
        if n_tp == 0 {
            0.0
        } else {
            sorted_sum(pairs.iter().map(f)) / n_tp as f64
        }
    };
    let tp_sum = sorted_sum(pairs.iter().map(|p| p.pairwise));
    let omq = omq_from_parts(tp_sum, n_tp, n_fn, n_fp, sorted_sum(fp_costs.iter().copied()));

    Ok(EvalReport {
        task: gt.task,
        environment: gt.environment.clone(),
        omq,
        avg_pairwise: mean(&|p| p.pairwise),
        avg_spatial_quality: mean(&|p| p.spatial),
        avg_label_quality: mean(&|p| p.label),
        avg_state_quality: scd.then(|| mean(&|p| p.state.unwrap_or(0.0))),
        n_tp,
        n_fn,
        n_fp,
        fp_costs,
        assignment,
        pairs,
    })
}

/// A score written with exactly six decimals, rounded half to even on the
/// exact binary value.
#[derive(Debug, Clone, Copy)]
pub struct Fixed6(pub f64);

impl Fixed6 {
    pub fn text(self) -> String {
        format!("{:.6}", self.0 + 0.0)
    }
}

impl Serialize for Fixed6 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let raw = RawValue::from_string(self.text()).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

// Field order is alphabetical so the rendered document has sorted keys.
#[derive(Serialize)]
struct ReportDoc<'a> {
    avg_label_quality: Fixed6,
    avg_pairwise: Fixed6,
    avg_spatial_quality: Fixed6,
    #[serde(skip_serializing_if = "Option::is_none")]
    avg_state_quality: Option<Fixed6>,
    environment: &'a str,
    false_negatives: Vec<FalseNegativeDoc<'a>>,
    false_positives: Vec<FalsePositiveDoc>,
    n_fn: usize,
    n_fp: usize,
    n_tp: usize,
    omq: Fixed6,
    pairs: Vec<PairDoc<'a>>,
    task: &'static str,
    version: u32,
}

#[derive(Serialize)]
struct FalseNegativeDoc<'a> {
    gt: usize,
    gt_instance: &'a str,
}

#[derive(Serialize)]
struct FalsePositiveDoc {
    cost: Fixed6,
    proposed: usize,
}

#[derive(Serialize)]
struct PairDoc<'a> {
    gt: usize,
    gt_instance: &'a str,
    label: Fixed6,
    pairwise: Fixed6,
    proposed: usize,
    spatial: Fixed6,
    #[serde(skip_serializing_if = "Option::is_none")]
    state: Option<Fixed6>,
}

/// Renders the report file: sorted keys, scores fixed at six decimals.
pub fn render_report(report: &EvalReport, gt: &GroundTruthMap) -> Vec<u8> {
    let doc = ReportDoc {
        avg_label_quality: Fixed6(report.avg_label_quality),
        avg_pairwise: Fixed6(report.avg_pairwise),
        avg_spatial_quality: Fixed6(report.avg_spatial_quality),
        avg_state_quality: report.avg_state_quality.map(Fixed6),
        environment: &report.environment,
        false_negatives: report
            .assignment
            .unmatched_gt
            .iter()
            .map(|&j| FalseNegativeDoc { gt: j, gt_instance: &gt.objects[j].instance_id })
            .collect(),
        false_positives: report
            .assignment
            .unmatched_proposed
            .iter()
            .zip(&report.fp_costs)
            .map(|(&i, &c)| FalsePositiveDoc { cost: Fixed6(c), proposed: i })
            .collect(),
        n_fn: report.n_fn,
        n_fp: report.n_fp,
        n_tp: report.n_tp,
        omq: Fixed6(report.omq),
        pairs: report
            .pairs
            .iter()
            .map(|p| PairDoc {
                gt: p.gt,
                gt_instance: &p.gt_instance,
                label: Fixed6(p.label),
                pairwise: Fixed6(p.pairwise),
                proposed: p.proposed,
                spatial: Fixed6(p.spatial),
                state: p.state.map(Fixed6),
            })
            .collect(),
        task: report.task.as_str(),
        version: REPORT_FORMAT_VERSION,
    };
    let mut out = serde_json::to_vec_pretty(&doc).expect("report serializes");
    out.push(b'\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classes::ClassId;
    use crate::geometry::{Cuboid, Vec3};
    use crate::object_map::{ChangeState, LabelDistribution, StateDistribution};

    fn cube_at(x: f64) -> Cuboid {
        Cuboid::new(Vec3::new(x, 0.0, 0.0), Vec3::new(1.0, 1.0, 1.0)).unwrap()
    }

    fn class(name: &str) -> ClassId {
        ClassId::from_name(name).unwrap()
    }

    fn gt(id: &str, name: &str, x: f64, state: Option<ChangeState>) -> GroundTruthObject {
        GroundTruthObject {
            instance_id: id.into(),
            cuboid: cube_at(x),
            true_label: class(name),
            true_state: state,
        }
    }

    fn prop(x: f64, label: LabelDistribution, state: Option<StateDistribution>) -> ProposedObject {
        ProposedObject { cuboid: cube_at(x), label, state }
    }

    #[test]
    fn label_quality_examples() {
        let g = gt("a", "chair", 0.0, None);
        let l = LabelDistribution::from_named([("chair", 0.7), ("table", 0.2)]).unwrap();
        assert_eq!(label_quality(&prop(0.0, l, None), &g), 0.7);
        let l = LabelDistribution::from_named([("table", 1.0)]).unwrap();
        assert_eq!(label_quality(&prop(0.0, l, None), &g), 0.0);
        assert_eq!(label_quality(&prop(0.0, LabelDistribution::uniform(), None), &g), 0.04);
    }

    #[test]
    fn spatial_and_pairwise() {
        let g = gt("a", "chair", 0.0, None);
        let one_hot = LabelDistribution::one_hot(class("chair"));
        assert_eq!(spatial_quality(&prop(0.0, one_hot, None), &g), 1.0);
        assert_eq!(spatial_quality(&prop(3.0, one_hot, None), &g), 0.0);
        assert!((spatial_quality(&prop(0.5, one_hot, None), &g) - 1.0 / 3.0).abs() < 1e-15);

        let l = LabelDistribution::from_named([("chair", 0.75)]).unwrap();
        assert!((pairwise_quality(&prop(0.5, l, None), &g) - 0.5).abs() < 1e-15);
        assert_eq!(pairwise_quality(&prop(3.0, one_hot, None), &g), 0.0);
        assert_eq!(pairwise_quality(&prop(0.0, one_hot, None), &g), 1.0);
    }

    #[test]
    fn state_quality_examples() {
        let added = gt("a", "cup", 0.0, Some(ChangeState::Added));
        let removed = gt("a", "cup", 0.0, Some(ChangeState::Removed));
        let l = LabelDistribution::one_hot(class("cup"));
        let s = StateDistribution::new(0.8, 0.1, 0.1).unwrap();
        assert_eq!(state_quality(&prop(0.0, l, Some(s)), &added).unwrap(), 0.8);
        let same = StateDistribution::new(0.0, 0.0, 1.0).unwrap();
        assert_eq!(state_quality(&prop(0.0, l, Some(same)), &removed).unwrap(), 0.0);
        let third = 1.0 / 3.0;
        let s = StateDistribution::new(third, third, third).unwrap();
        assert_eq!(state_quality(&prop(0.0, l, Some(s)), &added).unwrap(), third);
        assert!(state_quality(&prop(0.0, l, None), &added).is_err());
    }

    #[test]
    fn scd_pairwise_examples() {
        // IoU 0.8 needs a nested cube: inner volume 0.8 inside a unit cube.
        let side = 0.8f64.cbrt();
        let g = gt("a", "cup", 0.0, Some(ChangeState::Added));
        let o = ProposedObject {
            cuboid: Cuboid::new(Vec3::default(), Vec3::new(side, side, side)).unwrap(),
            label: LabelDistribution::from_named([("cup", 0.8)]).unwrap(),
            state: Some(StateDistribution::new(0.8, 0.0, 0.2).unwrap()),
        };
        assert!((pairwise_quality_scd(&o, &g).unwrap() - 0.8).abs() < 1e-12);

        let zero_state = ProposedObject {
            state: Some(StateDistribution::new(0.0, 0.8, 0.2).unwrap()),
            ..o.clone()
        };
        assert_eq!(pairwise_quality_scd(&zero_state, &g).unwrap(), 0.0);

        let one_hot_state = ProposedObject { state: Some(StateDistribution::one_hot(ChangeState::Added)), ..o };
        let expected = pairwise_quality(&one_hot_state, &g).powf(2.0 / 3.0);
        assert!((pairwise_quality_scd(&one_hot_state, &g).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn fp_cost_examples() {
        let l = LabelDistribution::from_named([("chair", 0.6), ("table", 0.3)]).unwrap();
        assert_eq!(fp_cost(&prop(0.0, l, None)), 0.6);
        assert_eq!(fp_cost(&prop(0.0, LabelDistribution::background(), None)), 0.0);
        assert_eq!(fp_cost(&prop(0.0, LabelDistribution::one_hot(class("chair")), None)), 1.0);

        let l = LabelDistribution::from_named([("chair", 0.9)]).unwrap();
        let s = StateDistribution::new(0.4, 0.1, 0.5).unwrap();
        assert!((fp_cost_scd(&prop(0.0, l, Some(s))).unwrap() - 0.6).abs() < 1e-15);
        let same = StateDistribution::new(0.0, 0.0, 1.0).unwrap();
        assert_eq!(fp_cost_scd(&prop(0.0, l, Some(same))).unwrap(), 0.0);
        let one_hot = LabelDistribution::one_hot(class("chair"));
        let added = StateDistribution::one_hot(ChangeState::Added);
        assert_eq!(fp_cost_scd(&prop(0.0, one_hot, Some(added))).unwrap(), 1.0);
        assert!(fp_cost_scd(&prop(0.0, one_hot, None)).is_err());
    }

    fn slam_gt(objects: Vec<GroundTruthObject>) -> GroundTruthMap {
        GroundTruthMap { task: TaskKind::SemanticSlam, environment: "test".into(), objects }
    }

    #[test]
    fn perfect_and_empty_submissions() {
        let g = slam_gt((0..5).map(|k| gt(&format!("o{k}"), "book", 3.0 * k as f64, None)).collect());
        let perfect = evaluate(&ObjectMap::one_hot_from(&g), &g).unwrap();
        assert_eq!(perfect.omq, 1.0);
        assert_eq!((perfect.n_tp, perfect.n_fn, perfect.n_fp), (5, 0, 0));

        let empty = evaluate(&ObjectMap::new(TaskKind::SemanticSlam, "test"), &g).unwrap();
        assert_eq!(empty.omq, 0.0);
        assert_eq!((empty.n_tp, empty.n_fn, empty.n_fp), (0, 5, 0));
        assert_eq!(empty.avg_pairwise, 0.0);
    }

    #[test]
    fn mixed_arithmetic_example() {
        // One TP with pOQ 0.5, one FN, one FP costing 0.6.
        let g = slam_gt(vec![gt("tp", "chair", 0.0, None), gt("fn", "table", 10.0, None)]);
        let mut m = ObjectMap::new(TaskKind::SemanticSlam, "test");
        m.objects.push(prop(0.5, LabelDistribution::from_named([("chair", 0.75)]).unwrap(), None));
        m.objects.push(prop(-20.0, LabelDistribution::from_named([("chair", 0.6), ("cup", 0.3)]).unwrap(), None));
        let r = evaluate(&m, &g).unwrap();
        assert_eq!((r.n_tp, r.n_fn, r.n_fp), (1, 1, 1));
        assert!((r.omq - 0.5 / 2.6).abs() < 1e-15);
        assert_eq!(r.fp_costs, vec![0.6]);
        assert!((r.recompute_omq() - r.omq).abs() < 1e-15);
    }

    #[test]
    fn zero_label_mass_is_never_a_tp() {
        let g = slam_gt(vec![gt("a", "chair", 0.0, None)]);
        let mut m = ObjectMap::new(TaskKind::SemanticSlam, "test");
        m.objects.push(prop(0.0, LabelDistribution::one_hot(class("table")), None));
        let r = evaluate(&m, &g).unwrap();
        assert_eq!((r.n_tp, r.n_fn, r.n_fp), (0, 1, 1));
        assert_eq!(r.omq, 0.0);
    }

    #[test]
    fn both_empty_scores_one() {
        let g = slam_gt(vec![]);
        let r = evaluate(&ObjectMap::new(TaskKind::SemanticSlam, "test"), &g).unwrap();
        assert_eq!(r.omq, 1.0);
    }

    #[test]
    fn task_mismatch() {
        let g = slam_gt(vec![]);
        assert!(matches!(
            evaluate(&ObjectMap::new(TaskKind::Scd, "test"), &g),
            Err(OmqError::TaskMismatch(_))
        ));
    }

    #[test]
    fn fixed6_rounds_half_even() {
        assert_eq!(Fixed6(0.0078125).text(), "0.007812");
        assert_eq!(Fixed6(1.0).text(), "1.000000");
        assert_eq!(Fixed6(0.5 / 2.6).text(), "0.192308");
        assert_eq!(Fixed6(-0.0).text(), "0.000000");
    }

    #[test]
    fn rendered_report_layout() {
        let g = slam_gt(vec![gt("tp", "chair", 0.0, None), gt("fn", "table", 10.0, None)]);
        let mut m = ObjectMap::new(TaskKind::SemanticSlam, "test");
        m.objects.push(prop(0.5, LabelDistribution::from_named([("chair", 0.75)]).unwrap(), None));
        m.objects.push(prop(-20.0, LabelDistribution::from_named([("chair", 0.6)]).unwrap(), None));
        let r = evaluate(&m, &g).unwrap();
        let text = String::from_utf8(render_report(&r, &g)).unwrap();
        assert!(text.contains("\"omq\": 0.192308"), "{text}");
        assert!(text.contains("\"cost\": 0.600000"));
        assert!(!text.contains("avg_state_quality"));
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["false_negatives"][0]["gt_instance"], "fn");
        assert_eq!(v["pairs"][0]["pairwise"].as_f64().unwrap(), 0.5);
    }
}
