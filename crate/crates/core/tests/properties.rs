use std::sync::{Arc, OnceLock};

use proptest::prelude::*;

use omqkit::assignment::{solve, QualityMatrix};
use omqkit::classes::{ClassId, NUM_CLASSES};
use omqkit::envgen::{generate_suite, Suite};
use omqkit::geometry::{intersection_volume, iou_3d, volume, Cuboid, Vec3};
use omqkit::harness::{aggregate, render_table, report_to_bytes, score_files, EpisodeEntry, EpisodeStatus};
use omqkit::object_map::{
    diff_to_gt_scd, parse_map, serialize_gt_map, serialize_map, ChangeState, GroundTruthMap, GroundTruthObject,
    LabelDistribution, ObjectMap, ProposedObject, StateDistribution, TaskKind,
};
use omqkit::omq::{evaluate, EvalReport};
use omqkit::scene::Pose;
use omqkit::simworld::{ControlMode, Localization, NoiseModel, Observation, World, WorldConfig};

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, failure_persistence: None, ..ProptestConfig::default() }
}

fn cuboid() -> impl Strategy<Value = Cuboid> {
    (prop::array::uniform3(-3.0f64..3.0), prop::array::uniform3(0.05f64..2.5))
        .prop_map(|(c, e)| Cuboid::new(c.into(), e.into()).unwrap())
}

fn label() -> impl Strategy<Value = LabelDistribution> {
    prop::collection::vec((0usize..5, 0.0f64..1.0), 1..4).prop_map(|entries| {
        let mut p = [0.0; NUM_CLASSES];
        let total: f64 = entries.iter().map(|e| e.1).sum::<f64>().max(1.0);
        for (c, v) in entries {
            p[c] = (p[c] + v / total).min(1.0);
        }
        let sum: f64 = p.iter().sum();
        if sum > 1.0 {
            p.iter_mut().for_each(|x| *x /= sum);
        }
        LabelDistribution::new(p).unwrap()
    })
}

fn state() -> impl Strategy<Value = StateDistribution> {
    (0.0f64..1.0, 0.0f64..1.0).prop_map(|(a, r)| {
        let r = (1.0 - a) * r;
        StateDistribution::new(a, r, 1.0 - a - r).unwrap()
    })
}

fn change() -> impl Strategy<Value = ChangeState> {
    prop_oneof![Just(ChangeState::Added), Just(ChangeState::Removed)]
}

fn proposals(task: TaskKind) -> impl Strategy<Value = Vec<ProposedObject>> {
    let scd = task == TaskKind::Scd;
    prop::collection::vec((cuboid(), label(), state()), 0..7).prop_map(move |v| {
        v.into_iter()
            .map(|(cuboid, label, st)| ProposedObject { cuboid, label, state: scd.then_some(st) })
            .collect()
    })
}

fn gt_objects(task: TaskKind) -> impl Strategy<Value = Vec<GroundTruthObject>> {
    let scd = task == TaskKind::Scd;
    prop::collection::vec((cuboid(), 0usize..5, change()), 0..7).prop_map(move |v| {
        v.into_iter()
            .enumerate()
            .map(|(j, (cuboid, c, st))| GroundTruthObject {
                instance_id: format!("obj_{j:03}"),
                cuboid,
                true_label: ClassId::from_index(c).unwrap(),
                true_state: scd.then_some(st),
            })
            .collect()
    })
}

fn task() -> impl Strategy<Value = TaskKind> {
    prop_oneof![Just(TaskKind::SemanticSlam), Just(TaskKind::Scd)]
}

fn maps() -> impl Strategy<Value = (ObjectMap, GroundTruthMap)> {
    task().prop_flat_map(|t| {
        (proposals(t), gt_objects(t)).prop_map(move |(p, g)| {
            let mut map = ObjectMap::new(t, "env_1");
            map.objects = p;
            (map, GroundTruthMap { task: t, environment: "env_1".into(), objects: g })
        })
    })
}

fn numbers(r: &EvalReport) -> (u64, u64, u64, u64, Option<u64>, usize, usize, usize) {
    (
        r.omq.to_bits(),
        r.avg_pairwise.to_bits(),
        r.avg_spatial_quality.to_bits(),
        r.avg_label_quality.to_bits(),
        r.avg_state_quality.map(f64::to_bits),
        r.n_tp,
        r.n_fn,
        r.n_fp,
    )
}

proptest! {
    #![proptest_config(config(256))]

    #[test]
    fn iou_bounded_and_symmetric(a in cuboid(), b in cuboid()) {
        let ab = iou_3d(&a, &b);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab.to_bits(), iou_3d(&b, &a).to_bits());
    }

    #[test]
    fn iou_translation_invariant(a in cuboid(), b in cuboid(), t in prop::array::uniform3(-50.0f64..50.0)) {
        let t: Vec3 = t.into();
        let moved = iou_3d(&a.translated(t), &b.translated(t));
        prop_assert!((moved - iou_3d(&a, &b)).abs() <= 1e-12);
    }

    #[test]
    fn self_intersection_is_volume(a in cuboid()) {
        prop_assert_eq!(intersection_volume(&a, &a), volume(&a));
        prop_assert_eq!(iou_3d(&a, &a), 1.0);
    }

    #[test]
    fn assignment_is_a_matching(m in 0usize..8, n in 0usize..8, seed in any::<u64>()) {
        let mut x = seed | 1;
        let q = QualityMatrix::build(m, n, |_, _| {
            x ^= x << 13; x ^= x >> 7; x ^= x << 17;
            if x % 4 == 0 { 0.0 } else { (x % 1000) as f64 / 1000.0 }
        }).unwrap();
        let a = solve(&q);
        let mut rows: Vec<usize> = a.pairs.iter().map(|p| p.proposed).chain(a.unmatched_proposed.iter().copied()).collect();
        let mut cols: Vec<usize> = a.pairs.iter().map(|p| p.gt).chain(a.unmatched_gt.iter().copied()).collect();
        rows.sort();
        cols.sort();
        prop_assert_eq!(rows, (0..m).collect::<Vec<_>>());
        prop_assert_eq!(cols, (0..n).collect::<Vec<_>>());
        prop_assert!(a.pairs.iter().all(|p| p.quality > 0.0 && p.quality == q.get(p.proposed, p.gt)));
    }

    #[test]
    fn assignment_total_monotone(m in 1usize..7, n in 1usize..7, seed in any::<u64>(), bump in 0.0f64..1.0) {
        let mut x = seed | 1;
        let mut data: Vec<f64> = (0..m * n).map(|_| { x ^= x << 13; x ^= x >> 7; x ^= x << 17; (x % 997) as f64 / 997.0 }).collect();
        let before = solve(&QualityMatrix::new(m, n, data.clone()).unwrap()).total();
        let k = (seed as usize) % (m * n);
        data[k] = (data[k] + bump).min(1.0);
        let after = solve(&QualityMatrix::new(m, n, data).unwrap()).total();
        prop_assert!(after >= before - 1e-12);
    }

    #[test]
    fn omq_bounded((map, gt) in maps()) {
        let r = evaluate(&map, &gt).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.omq));
        prop_assert_eq!(r.omq.to_bits(), r.recompute_omq().to_bits());
        let perfect = r.n_fp == 0 && r.n_fn == 0 && r.pairs.iter().all(|p| p.pairwise == 1.0);
        prop_assert_eq!(r.omq == 1.0, perfect);
    }

    #[test]
    fn unmatched_proposal_never_helps((map, gt) in maps(), lab in label(), st in state()) {
        let base = evaluate(&map, &gt).unwrap().omq;
        let mut more = map.clone();
        let far = Cuboid::new(Vec3::new(100.0, 100.0, 100.0), Vec3::new(1.0, 1.0, 1.0)).unwrap();
        more.objects.push(ProposedObject { cuboid: far, label: lab, state: (map.task == TaskKind::Scd).then_some(st) });
        prop_assert!(evaluate(&more, &gt).unwrap().omq <= base);
    }

    #[test]
    fn unmatched_gt_lowers_positive_score((mut map, mut gt) in maps(), c in 0usize..5, st in change()) {
        // One guaranteed match keeps the score positive.
        let anchor = GroundTruthObject {
            instance_id: "anchor".into(),
            cuboid: Cuboid::new(Vec3::new(50.0, 0.0, 0.0), Vec3::new(1.0, 1.0, 1.0)).unwrap(),
            true_label: ClassId::from_index(c).unwrap(),
            true_state: (gt.task == TaskKind::Scd).then_some(st),
        };
        map.objects.extend(ObjectMap::one_hot_from(&GroundTruthMap { objects: vec![anchor.clone()], ..gt.clone() }).objects);
        gt.objects.push(anchor);
        let base = evaluate(&map, &gt).unwrap().omq;
        prop_assert!(base > 0.0);
        gt.objects.push(GroundTruthObject {
            instance_id: "far".into(),
            cuboid: Cuboid::new(Vec3::new(-100.0, 0.0, 0.0), Vec3::new(1.0, 1.0, 1.0)).unwrap(),
            true_label: ClassId::from_index(c).unwrap(),
            true_state: (gt.task == TaskKind::Scd).then_some(st),
        });
        prop_assert!(evaluate(&map, &gt).unwrap().omq < base);
    }

    #[test]
    fn omq_permutation_invariant((map, gt) in maps(), seed in any::<u64>()) {
        let base = numbers(&evaluate(&map, &gt).unwrap());
        let mut shuffled_map = map.clone();
        let mut shuffled_gt = gt.clone();
        let rot = |len: usize| if len == 0 { 0 } else { (seed as usize) % len };
        let k = rot(shuffled_map.objects.len());
        shuffled_map.objects.rotate_left(k);
        shuffled_map.objects.reverse();
        let k = rot(shuffled_gt.objects.len());
        shuffled_gt.objects.rotate_left(k);
        prop_assert_eq!(base, numbers(&evaluate(&shuffled_map, &shuffled_gt).unwrap()));
    }

    #[test]
    fn zero_true_class_mass_never_matches(g in cuboid(), c in 0usize..5) {
        let class = ClassId::from_index(c).unwrap();
        let other = ClassId::from_index((c + 1) % NUM_CLASSES).unwrap();
        let gt = GroundTruthMap {
            task: TaskKind::SemanticSlam,
            environment: "e".into(),
            objects: vec![GroundTruthObject { instance_id: "a".into(), cuboid: g, true_label: class, true_state: None }],
        };
        let mut map = ObjectMap::new(TaskKind::SemanticSlam, "e");
        map.objects.push(ProposedObject { cuboid: g, label: LabelDistribution::one_hot(other), state: None });
        let r = evaluate(&map, &gt).unwrap();
        prop_assert_eq!(r.n_tp, 0);
        prop_assert_eq!(r.omq, 0.0);
    }

    #[test]
    fn map_serialization_round_trips((map, _) in maps()) {
        let bytes = serialize_map(&map);
        let back = parse_map(&bytes, map.task).unwrap();
        prop_assert!(back.validate().is_ok());
        prop_assert_eq!(serialize_map(&back), bytes);
    }

    #[test]
    fn diff_is_antisymmetric(a_mask in 0u16..1024, b_mask in 0u16..1024, boxes in prop::collection::vec(cuboid(), 10)) {
        let make = |mask: u16| GroundTruthMap {
            task: TaskKind::SemanticSlam,
            environment: "e".into(),
            objects: (0..10)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| GroundTruthObject { instance_id: format!("o{i}"), cuboid: boxes[i], true_label: ClassId::from_index(i % 5).unwrap(), true_state: None })
                .collect(),
        };
        let (a, b) = (make(a_mask), make(b_mask));
        let ab = diff_to_gt_scd(&a, &b).unwrap();
        let ba = diff_to_gt_scd(&b, &a).unwrap();
        let ids = |m: &GroundTruthMap, s: ChangeState| {
            let mut v: Vec<String> = m.objects.iter().filter(|o| o.true_state == Some(s)).map(|o| o.instance_id.clone()).collect();
            v.sort();
            v
        };
        prop_assert_eq!(ids(&ab, ChangeState::Added), ids(&ba, ChangeState::Removed));
        prop_assert_eq!(ids(&ab, ChangeState::Removed), ids(&ba, ChangeState::Added));
        prop_assert!(ab.objects.iter().all(|o| o.true_state.is_some()));
        prop_assert_eq!(ab.objects.len(), (a_mask ^ b_mask).count_ones() as usize);
    }

    #[test]
    fn score_files_of_own_ground_truth_is_one((_, gt) in maps()) {
        let dir = tempfile::tempdir().unwrap();
        let (p, g) = (dir.path().join("map.json"), dir.path().join("gt.json"));
        std::fs::write(&p, serialize_map(&ObjectMap::one_hot_from(&gt))).unwrap();
        std::fs::write(&g, serialize_gt_map(&gt)).unwrap();
        prop_assert_eq!(score_files(&p, &g, gt.task).unwrap().omq, 1.0);
    }

    #[test]
    fn aggregation_ignores_episode_order(scores in prop::collection::vec(0.0f64..=1.0, 0..12), seed in any::<u64>()) {
        let entries: Vec<EpisodeEntry> = scores.iter().enumerate().map(|(i, s)| fake_entry(i, *s)).collect();
        let mut shuffled = entries.clone();
        let k = if shuffled.is_empty() { 0 } else { (seed as usize) % shuffled.len() };
        shuffled.rotate_left(k);
        shuffled.reverse();
        let a = aggregate(entries);
        let b = aggregate(shuffled);
        prop_assert_eq!(&a, &b);
        for agg in &a.1 {
            let rows: Vec<f64> = a.0.iter().filter(|e| e.task == agg.task && e.difficulty == agg.difficulty).map(|e| e.omq()).collect();
            let mean = rows.iter().sum::<f64>() / rows.len() as f64;
            prop_assert!((agg.mean_omq - mean).abs() <= 1e-12);
        }
    }
}

fn fake_entry(i: usize, omq: f64) -> EpisodeEntry {
    let task = if i % 2 == 0 { TaskKind::SemanticSlam } else { TaskKind::Scd };
    let report = EvalReport {
        task,
        environment: format!("base_{}", i % 5 + 1),
        omq,
        avg_pairwise: omq,
        avg_spatial_quality: omq,
        avg_label_quality: 1.0,
        avg_state_quality: (task == TaskKind::Scd).then_some(1.0),
        n_tp: 1,
        n_fn: 0,
        n_fp: 0,
        fp_costs: Vec::new(),
        assignment: Default::default(),
        pairs: Vec::new(),
    };
    let difficulty = omqkit::agent_api::Difficulty::ALL[i % 3];
    let envs = if task == TaskKind::Scd { vec![format!("b{i}_1"), format!("b{i}_2")] } else { vec![format!("b{i}_1")] };
    EpisodeEntry {
        key: format!("{task}/{difficulty}/{}", envs.join("+")),
        task,
        difficulty,
        base: format!("b{i}"),
        environments: envs,
        status: if omq == 0.0 { EpisodeStatus::Failed } else { EpisodeStatus::Completed },
        error: None,
        report: (omq != 0.0).then_some(report),
    }
}

#[test]
fn empty_report_renders_headers_only() {
    let (episodes, aggregates, breakdown) = aggregate(Vec::new());
    let report = omqkit::harness::SuiteReport { version: 1, agent: "null".into(), seed: 0, strict: false, episodes, aggregates, breakdown };
    let table = render_table(&report);
    let lines: Vec<&str> = table.lines().filter(|l| !l.is_empty()).collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("task") && lines[1].starts_with("task"));
    let back: serde_json::Value = serde_json::from_slice(&report_to_bytes(&report)).unwrap();
    assert_eq!(back["episodes"], serde_json::json!([]));
}

#[test]
fn one_row_matches_report_to_six_decimals() {
    let e = fake_entry(0, 0.123_456_789);
    let (episodes, aggregates, breakdown) = aggregate(vec![e]);
    let report = omqkit::harness::SuiteReport { version: 1, agent: "x".into(), seed: 0, strict: false, episodes, aggregates, breakdown };
    let table = render_table(&report);
    let row = table.lines().nth(1).unwrap();
    assert!(row.contains("0.123457"), "{row}");
    assert!(table.lines().any(|l| l.starts_with("semantic_slam") && l.ends_with("0.123457")));
}

fn mini_suite() -> Arc<Suite> {
    static SUITE: OnceLock<Arc<Suite>> = OnceLock::new();
    Arc::clone(SUITE.get_or_init(|| Arc::new(generate_suite(21, &["miniroom"]).unwrap())))
}

#[derive(Debug, Clone, Copy)]
enum Act {
    Move(f64),
    Turn(f64),
}

fn actions() -> impl Strategy<Value = Vec<Act>> {
    prop::collection::vec(prop_oneof![(0.0f64..2.5).prop_map(Act::Move), (-180.0f64..180.0).prop_map(Act::Turn)], 1..25)
}

fn drive(cfg: WorldConfig, acts: &[Act]) -> (Vec<Observation>, Vec<Pose>) {
    let scene = Arc::new(mini_suite().scene("miniroom_1").unwrap().clone());
    let mut w = World::new(scene, cfg).unwrap();
    let mut obs = vec![w.observe()];
    let mut truth = vec![w.state().true_pose];
    for a in acts {
        obs.push(match *a {
            Act::Move(d) => w.move_distance(d).unwrap(),
            Act::Turn(t) => w.rotate(t).unwrap(),
        });
        truth.push(w.state().true_pose);
    }
    (obs, truth)
}

fn noisy(loc: Localization, seed: u64, bias: f64) -> WorldConfig {
    let mut cfg = WorldConfig::new(ControlMode::Active, loc);
    cfg.noise = NoiseModel { linear_scale_bias: bias, ..NoiseModel::default_drift(seed) };
    cfg
}

proptest! {
    #![proptest_config(config(48))]

    #[test]
    fn simulation_is_deterministic(acts in actions(), seed in any::<u64>()) {
        let a = drive(noisy(Localization::DeadReckoning, seed, 1.05), &acts);
        let b = drive(noisy(Localization::DeadReckoning, seed, 1.05), &acts);
        prop_assert_eq!(serde_json::to_vec(&a.0).unwrap(), serde_json::to_vec(&b.0).unwrap());
    }

    #[test]
    fn ground_truth_mode_reports_true_pose(acts in actions(), seed in any::<u64>()) {
        let (obs, truth) = drive(noisy(Localization::GroundTruth, seed, 1.05), &acts);
        for (o, t) in obs.iter().zip(&truth) {
            prop_assert_eq!(o.reported_pose, *t);
        }
    }

    #[test]
    fn dead_reckoning_ignores_true_bias(acts in actions(), seed in any::<u64>(), bias in 0.8f64..1.2) {
        let (a, _) = drive(noisy(Localization::DeadReckoning, seed, 1.0), &acts);
        let (b, _) = drive(noisy(Localization::DeadReckoning, seed, bias), &acts);
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.reported_pose, y.reported_pose);
        }
    }

    #[test]
    fn robot_never_enters_obstacles(acts in actions(), seed in any::<u64>()) {
        let (_, truth) = drive(noisy(Localization::GroundTruth, seed, 1.05), &acts);
        let scene = mini_suite().scene("miniroom_1").unwrap().clone();
        let polys = scene.collision_polygons();
        for p in truth {
            prop_assert!(polys.iter().all(|poly| !poly.contains(p.position())));
            prop_assert!(scene.clearance(p.position()) >= 0.25 - 1e-6);
        }
    }

    #[test]
    fn dead_reckoning_observations_hide_true_pose(acts in actions(), seed in any::<u64>()) {
        let (obs, _) = drive(noisy(Localization::DeadReckoning, seed, 1.05), &acts);
        for o in obs {
            let v = serde_json::to_value(&o).unwrap();
            prop_assert!(v.get("true_pose").is_none());
        }
    }
}
