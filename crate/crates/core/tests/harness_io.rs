//! End-to-end checks of the file and command-line surfaces: output schemas,
//! run-to-run determinism and the config-file merge.

use std::fs;
use std::path::Path;
use std::process::Command;

use bulksurf::harness::{example_config, run_simulation, ExampleId};

fn mini_config(out: Option<&Path>) -> bulksurf::harness::SimulationConfig {
    let mut cfg = example_config(ExampleId::SolubleShear);
    cfg.nx = 16;
    cfg.ny = 16;
    cfg.t_end = cfg.time_step() * 3.0;
    cfg.eval_times = vec![cfg.t_end];
    cfg.output.dir = out.map(|p| p.to_path_buf());
    cfg.output.export_interface = true;
    cfg.output.export_fields = true;
    cfg.output.export_levelset = true;
    cfg.output.frame_stride = 2;
    cfg
}

#[test]
fn identical_configs_write_bit_identical_outputs() {
    let base = std::env::temp_dir().join(format!("bulksurf-det-{}", std::process::id()));
    let dir_a = base.join("a");
    let dir_b = base.join("b");
    run_simulation(&mini_config(Some(&dir_a))).unwrap();
    run_simulation(&mini_config(Some(&dir_b))).unwrap();
    let mut names: Vec<String> = fs::read_dir(&dir_a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(names.contains(&"mass.csv".to_string()));
    assert!(names.contains(&"area.csv".to_string()));
    assert!(names.contains(&"slabs.jsonl".to_string()));
    assert!(names.iter().any(|n| n.starts_with("interface_")));
    assert!(names.iter().any(|n| n.starts_with("fields_")));
    assert!(names.iter().any(|n| n.starts_with("levelset_")));
    for name in &names {
        let a = fs::read(dir_a.join(name)).unwrap();
        let b = fs::read(dir_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    let mass = fs::read_to_string(dir_a.join("mass.csv")).unwrap();
    assert!(mass.starts_with("t,rel_mass_error\n"));
    let area = fs::read_to_string(dir_a.join("area.csv")).unwrap();
    assert!(area.starts_with("t,rel_area_change\n"));
    fs::remove_dir_all(&base).ok();
}

#[test]
fn cli_run_converge_and_dump_mesh() {
    let bin = env!("CARGO_BIN_EXE_bulksurf");
    let base = std::env::temp_dir().join(format!("bulksurf-cli-{}", std::process::id()));
    fs::create_dir_all(&base).unwrap();

    // config file merged under explicit flags
    let cfg_path = base.join("run.json");
    fs::write(
        &cfg_path,
        r#"{"example": 3, "nx": 16, "ny": 16, "t_end": 0.075, "k_ratio": 0.2,
            "time_quadrature": "trapezoid", "conserve_mass": "on"}"#,
    )
    .unwrap();
    let out_dir = base.join("run-out");
    let output = Command::new(bin)
        .args([
            "run",
            "--config",
            cfg_path.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("slabs = 3"), "config t_end/k not honored: {stdout}");
    assert!(out_dir.join("mass.csv").exists());
    assert!(out_dir.join("slabs.jsonl").exists());
    let log = fs::read_to_string(out_dir.join("slabs.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert_eq!(first["slab"], 1);
    assert!(first["newton_iterations"].as_u64().unwrap() >= 1);

    // converge writes the errors.csv schema
    let conv_dir = base.join("conv-out");
    let output = Command::new(bin)
        .args([
            "converge",
            "--example",
            "3",
            "--levels",
            "2",
            "--base-nx",
            "10",
            "--t-eval",
            "0.25",
            "--out",
            conv_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let table = fs::read_to_string(conv_dir.join("errors.csv")).unwrap();
    assert!(table
        .starts_with("h,k,l2_bulk,l1_bulk,l2_surf,l1_surf,order_l2_bulk,order_l2_surf\n"));

    // mesh dump: one record per vertex and triangle
    let output = Command::new(bin)
        .args(["dump-mesh", "--nx", "3", "--ny", "2"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let dump = String::from_utf8_lossy(&output.stdout);
    assert_eq!(dump.lines().filter(|l| l.starts_with("v ")).count(), 12);
    assert_eq!(dump.lines().filter(|l| l.starts_with("t ")).count(), 12);

    // unknown example rejected
    let output = Command::new(bin).args(["run", "--example", "9"]).output().unwrap();
    assert!(!output.status.success());

    fs::remove_dir_all(&base).ok();
}
