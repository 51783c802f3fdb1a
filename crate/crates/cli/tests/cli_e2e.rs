//! End-to-end coverage of every subcommand on small scenes.

use std::path::Path;
use std::process::Command;

fn meshfeat() -> Command {
    Command::new(env!("CARGO_BIN_EXE_meshfeat"))
}

fn run_ok(args: &[&str], cwd: &Path) -> String {
    let out = meshfeat().args(args).current_dir(cwd).output().unwrap();
    assert!(
        out.status.success(),
        "command {:?} failed\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn full_texture_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    // synth
    run_ok(
        &[
            "synth",
            "--scene",
            "checker-sphere",
            "--out",
            "scene",
            "--views",
            "3",
            "--test-views",
            "1",
            "--res",
            "96",
            "--subdiv",
            "3",
        ],
        root,
    );
    assert!(root.join("scene/mesh.obj").exists());
    assert!(root.join("scene/views/view_002.json").exists());
    assert!(root.join("scene/images/view_002.png").exists());
    assert!(root.join("scene/views_test/test_000.json").exists());

    // simplify
    let out = run_ok(
        &[
            "simplify",
            "--mesh",
            "scene/mesh.obj",
            "--resolutions",
            "1,0.3,0.1",
            "--out",
            "levels.mfh",
        ],
        root,
    );
    assert!(out.contains("level"));
    let hierarchy = meshfeat::simplify::Hierarchy::load(root.join("levels.mfh")).unwrap();
    assert_eq!(hierarchy.level_count(), 3);

    // train
    run_ok(
        &[
            "train",
            "--scene",
            "scene",
            "--task",
            "texture",
            "--out",
            "run",
            "--epochs",
            "60",
            "--resolutions",
            "1,0.3,0.1",
            "--seed",
            "1",
        ],
        root,
    );
    assert!(root.join("run/checkpoint.mfc").exists());
    assert!(root.join("run/hierarchy.mfh").exists());
    let log = std::fs::read_to_string(root.join("run/log.csv")).unwrap();
    assert!(log.starts_with("epoch,data_loss,reg_loss,lr,wall_time"));
    assert_eq!(log.lines().count(), 61);
    assert!(root.join("run/report.json").exists());

    // eval
    let out = run_ok(
        &["eval", "--scene", "scene", "--checkpoint", "run/checkpoint.mfc"],
        root,
    );
    assert!(out.contains("psnr"), "{out}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root.join("run/report.json")).unwrap())
            .unwrap();
    assert!(report["views"].as_array().unwrap().len() == 1);

    // render (with progressive unlock)
    run_ok(
        &[
            "render",
            "--scene",
            "scene",
            "--checkpoint",
            "run/checkpoint.mfc",
            "--view",
            "scene/views_test/test_000.json",
            "--out",
            "render.png",
            "--levels",
            "2",
        ],
        root,
    );
    assert!(root.join("render.png").exists());

    // bench (short protocol for the smoke path)
    let out = run_ok(
        &[
            "bench",
            "--scene",
            "scene",
            "--checkpoint",
            "run/checkpoint.mfc",
            "--batch",
            "2048",
            "--warmup",
            "2",
            "--reps",
            "10",
            "--out",
            "bench.json",
        ],
        root,
    );
    assert!(out.contains("speedup:"), "{out}");
    let bench: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root.join("bench.json")).unwrap()).unwrap();
    assert_eq!(bench["reps"], 10);
}

#[test]
fn brdf_workflow_small() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    run_ok(
        &[
            "synth",
            "--scene",
            "two-material-sphere",
            "--out",
            "scene",
            "--views",
            "3",
            "--test-views",
            "1",
            "--lights",
            "3",
            "--test-lights",
            "2",
            "--res",
            "48",
            "--subdiv",
            "2",
        ],
        root,
    );
    assert!(root.join("scene/materials.json").exists());
    assert!(root.join("scene/images/view_000_01.pfm").exists());

    run_ok(
        &[
            "train",
            "--scene",
            "scene",
            "--task",
            "brdf",
            "--out",
            "run",
            "--epochs",
            "20",
            "--batch",
            "1024",
            "--resolutions",
            "1,0.3",
            "--seed",
            "2",
        ],
        root,
    );
    let out = run_ok(
        &["eval", "--scene", "scene", "--checkpoint", "run/checkpoint.mfc"],
        root,
    );
    assert!(out.contains("gamma space"), "{out}");

    // HDR render output.
    run_ok(
        &[
            "render",
            "--scene",
            "scene",
            "--checkpoint",
            "run/checkpoint.mfc",
            "--view",
            "scene/views_test/test_000_00.json",
            "--out",
            "render.pfm",
        ],
        root,
    );
    assert!(root.join("render.pfm").exists());
}

#[test]
fn deform_pair_scene_has_matching_topology() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    run_ok(
        &[
            "synth",
            "--scene",
            "deform-pair",
            "--out",
            "scene",
            "--views",
            "2",
            "--test-views",
            "1",
            "--res",
            "64",
            "--subdiv",
            "2",
        ],
        root,
    );
    let reference = meshfeat::mesh::Mesh::load_obj(root.join("scene/mesh.obj")).unwrap();
    let deformed = meshfeat::mesh::Mesh::load_obj(root.join("scene/deformed.obj")).unwrap();
    assert_eq!(reference.faces(), deformed.faces());
    assert_ne!(reference.vertices(), deformed.vertices());
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    // Usage error: unknown flag.
    let out = meshfeat()
        .args(["synth", "--bogus-flag"])
        .current_dir(root)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    // Usage error: unknown subcommand.
    let out = meshfeat().args(["frobnicate"]).current_dir(root).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    // Data error: missing scene directory.
    let out = meshfeat()
        .args(["train", "--scene", "nope", "--task", "texture", "--out", "run"])
        .current_dir(root)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Data error: synth with zero views.
    let out = meshfeat()
        .args(["synth", "--scene", "checker-sphere", "--out", "s", "--views", "0"])
        .current_dir(root)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Help exits 0.
    let out = meshfeat().args(["--help"]).current_dir(root).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}
