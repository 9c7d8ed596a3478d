use std::sync::OnceLock;

use omqkit::classes::{ClassId, NUM_CLASSES};
use omqkit::envgen::{
    check_interpenetration, generate_suite, load_suite, preset, write_suite, Split, Suite, PRESET_NAMES, VARIATIONS,
};

const TABLE_TOTALS: [u32; NUM_CLASSES] = [
    37, 68, 65, 3, 5, 24, 13, 3, 136, 81, 81, 17, 184, 22, 353, 138, 36, 10, 14, 91, 2, 8, 12, 19, 21,
];

fn suite() -> &'static Suite {
    static SUITE: OnceLock<Suite> = OnceLock::new();
    SUITE.get_or_init(|| generate_suite(31, &PRESET_NAMES).unwrap())
}

#[test]
fn class_frequencies_match_published_totals() {
    let mut counts = [0u32; NUM_CLASSES];
    for scene in suite().scenes.values() {
        for o in &scene.objects {
            counts[o.class.index()] += 1;
        }
    }
    for c in ClassId::all() {
        assert_eq!(counts[c.index()], TABLE_TOTALS[c.index()], "{c}");
    }
}

#[test]
fn per_base_totals_match_presets() {
    for base in PRESET_NAMES {
        let spec = preset(base, 0).unwrap();
        let mut counts = [0u32; NUM_CLASSES];
        for v in 1..=VARIATIONS {
            for o in &suite().scene(&format!("{base}_{v}")).unwrap().objects {
                counts[o.class.index()] += 1;
            }
        }
        assert_eq!(counts, spec.class_totals, "{base}");
    }
}

#[test]
fn no_interpenetration_anywhere() {
    for scene in suite().scenes.values() {
        check_interpenetration(scene).unwrap_or_else(|e| panic!("{}: {e}", scene.name));
    }
}

#[test]
fn trajectory_nodes_have_clearance() {
    for scene in suite().scenes.values() {
        for (i, node) in scene.trajectory.iter().enumerate() {
            let c = scene.clearance(node.position());
            assert!(c >= 0.25, "{} node {i} clearance {c}", scene.name);
        }
        assert_eq!(scene.trajectory[0], scene.start);
    }
}

#[test]
fn splits_and_night_flags() {
    let m = &suite().manifest;
    assert_eq!(m.environments.len(), PRESET_NAMES.len() * VARIATIONS);
    for e in &m.environments {
        let test = matches!(e.base.as_str(), "office" | "apartment" | "company");
        assert_eq!(e.split == Split::Test, test, "{}", e.name);
        assert_eq!(e.night, e.variation == 3 || e.variation == 5, "{}", e.name);
    }
}

#[test]
fn deterministic_per_seed() {
    let a = generate_suite(5, &["miniroom", "apartment"]).unwrap();
    let b = generate_suite(5, &["apartment", "miniroom"]).unwrap();
    for (name, scene) in &a.scenes {
        assert_eq!(scene.to_bytes(), b.scenes[name].to_bytes(), "{name}");
    }
    let c = generate_suite(6, &["miniroom"]).unwrap();
    assert_ne!(a.scenes["miniroom_1"].to_bytes(), c.scenes["miniroom_1"].to_bytes());
}

#[test]
fn suite_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let s = generate_suite(8, &["miniroom"]).unwrap();
    let manifest = write_suite(&s, dir.path()).unwrap();
    let back = load_suite(&manifest).unwrap();
    assert_eq!(back.manifest, s.manifest);
    for (name, scene) in &s.scenes {
        assert_eq!(&back.scenes[name], scene);
    }
    assert!(dir.path().join("gt/miniroom_1.json").exists());
}
