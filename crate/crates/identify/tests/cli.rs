use std::process::Command;

fn identify() -> Command {
    Command::new(env!("CARGO_BIN_EXE_identify"))
}

#[test]
fn run_emits_outputs_and_instance_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.json");
    std::fs::write(
        &config_path,
        r#"{
            "n": 3, "dt": 0.1, "num_samples": 10, "seed": 4,
            "one_box_count": 3, "two_box_count": 2,
            "solver": { "max_iter": 8 },
            "variants": ["RNLO-eRSQO", "UCRO"]
        }"#,
    )
    .unwrap();

    let out_a = dir.path().join("a");
    let status = identify()
        .args(["run", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(&out_a)
        .status()
        .unwrap();
    assert!(status.success());
    for file in [
        "report.json",
        "instance.json",
        "trace_rnlo_ersqo.csv",
        "trace_ucro.csv",
        "eigs_rnlo_ersqo.csv",
        "eigs_ucro.csv",
    ] {
        assert!(out_a.join(file).exists(), "missing {file}");
    }

    // re-running from the persisted instance reproduces everything
    let out_b = dir.path().join("b");
    let status = identify()
        .args(["run", "--instance"])
        .arg(out_a.join("instance.json"))
        .arg("--out")
        .arg(&out_b)
        .status()
        .unwrap();
    assert!(status.success());
    for file in ["report.json", "trace_rnlo_ersqo.csv", "trace_ucro.csv"] {
        let a = std::fs::read(out_a.join(file)).unwrap();
        let b = std::fs::read(out_b.join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between run and re-run");
    }
}

#[test]
fn gradcheck_and_qp_oracle_succeed() {
    let status = identify()
        .args(["gradcheck", "--n", "3", "--seed", "1", "--directions", "5"])
        .status()
        .unwrap();
    assert!(status.success());

    let status = identify()
        .args(["qp-oracle", "--trials", "50", "--seed", "2"])
        .status()
        .unwrap();
    assert!(status.success());
}
