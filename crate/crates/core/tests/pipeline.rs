//! End-to-end runs of the training and evaluation harness on tiny data.

mod common;

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::Command;

use common::{tiny_dataset, tiny_run};
use satmae::data::{generate_synthetic, SyntheticConfig};
use satmae::harness::{
    ablate_bands, evaluate, finetune, linear_probe, pretrain, read_metrics, visualize, EvalOptions, VisualizeOptions,
    BEST_CHECKPOINT, LAST_CHECKPOINT, METRICS_FILE, RUN_CONFIG_FILE,
};
use satmae::model::{Checkpoint, CheckpointKind, Variant};
use satmae::Error;

#[test]
fn pretrain_is_bit_reproducible_and_worker_independent() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    tiny_dataset(&data, 1);
    let a = pretrain(&tiny_run(&data, dir.path().join("a"), Variant::SpectralGroup)).unwrap();
    let b = pretrain(&tiny_run(&data, dir.path().join("b"), Variant::SpectralGroup)).unwrap();
    let mut run = tiny_run(&data, dir.path().join("c"), Variant::SpectralGroup);
    run.workers = 3;
    let c = pretrain(&run).unwrap();
    assert!(a.losses().iter().all(|l| l.is_finite()));
    assert_eq!(a.losses(), b.losses());
    assert_eq!(a.losses(), c.losses());
    let ka = Checkpoint::load(&a.checkpoint).unwrap();
    let kc = Checkpoint::load(&c.checkpoint).unwrap();
    assert_eq!(ka.tensors, kc.tensors);

    let out = dir.path().join("a");
    assert!(out.join(RUN_CONFIG_FILE).exists());
    let records = read_metrics(&out.join(METRICS_FILE)).unwrap();
    assert_eq!(records.len(), 2);
    assert_eq!(records[0]["seed"], 0);
}

#[test]
fn resume_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    tiny_dataset(&data, 2);
    for variant in [Variant::Plain, Variant::Temporal] {
        let full_dir = dir.path().join(format!("full-{variant:?}"));
        let split_dir = dir.path().join(format!("split-{variant:?}"));
        let mut run = tiny_run(&data, full_dir.clone(), variant);
        run.epochs = 3;
        let full = pretrain(&run).unwrap();

        run.out_dir = split_dir.clone();
        run.stop_after = Some(1);
        assert_eq!(pretrain(&run).unwrap().history.len(), 1);
        run.stop_after = None;
        run.resume = true;
        let resumed = pretrain(&run).unwrap();
        assert_eq!(resumed.losses(), full.losses());
        let a = Checkpoint::load(&full_dir.join(LAST_CHECKPOINT)).unwrap();
        let b = Checkpoint::load(&split_dir.join(LAST_CHECKPOINT)).unwrap();
        assert_eq!(a.tensors, b.tensors);
        assert_eq!(read_metrics(&split_dir.join(METRICS_FILE)).unwrap().len(), 3);
    }
}

#[test]
fn finetune_resume_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    tiny_dataset(&data, 3);
    let mut run = tiny_run(&data, dir.path().join("full"), Variant::Plain);
    run.epochs = 3;
    let full = finetune(&run).unwrap();
    run.out_dir = dir.path().join("split");
    run.stop_after = Some(2);
    finetune(&run).unwrap();
    run.stop_after = None;
    run.resume = true;
    let resumed = finetune(&run).unwrap();
    assert_eq!(resumed.history, full.history);
    assert_eq!(resumed.best_epoch, full.best_epoch);
}

#[test]
fn resume_with_changed_config_is_a_conflict() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    tiny_dataset(&data, 4);
    let mut run = tiny_run(&data, dir.path().join("run"), Variant::Plain);
    run.stop_after = Some(1);
    pretrain(&run).unwrap();
    run.stop_after = None;
    run.resume = true;
    run.base_lr *= 2.0;
    match pretrain(&run) {
        Err(Error::ConfigConflict(msg)) => assert!(msg.contains("base_lr"), "{msg}"),
        other => panic!("expected a config conflict, got {other:?}"),
    }
}

#[test]
fn finetune_probe_evaluate_ablate() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    tiny_dataset(&data, 5);
    let pre = pretrain(&tiny_run(&data, dir.path().join("pre"), Variant::SpectralGroup)).unwrap();

    let mut ft_run = tiny_run(&data, dir.path().join("ft"), Variant::SpectralGroup);
    ft_run.init = Some(pre.checkpoint.clone());
    let ft = finetune(&ft_run).unwrap();
    assert_eq!(ft.history.len(), 2);
    for e in &ft.history {
        assert!(e.top5 >= e.top1);
    }
    assert!(ft.best_checkpoint.ends_with(BEST_CHECKPOINT));

    let mut probe_run = ft_run.clone();
    probe_run.out_dir = dir.path().join("probe");
    let probe = linear_probe(&probe_run).unwrap();
    assert!(probe.best_top1 >= 0.0 && probe.best_top1 <= 1.0);
    // Encoder weights of the probe equal the pretrained ones.
    let pre_ck = Checkpoint::load(&pre.checkpoint).unwrap();
    let probe_ck = Checkpoint::load(&probe.best_checkpoint).unwrap();
    for (name, value) in pre_ck.tensors.iter().filter(|(k, _)| k.starts_with("encoder.")) {
        assert_eq!(&probe_ck.tensors[name], value, "{name}");
    }

    let opts = EvalOptions::default();
    let report = evaluate(&ft.best_checkpoint, &data, &opts).unwrap();
    assert!((report.metrics.top1 - ft.best_top1).abs() < 1e-12);
    let weighted: f64 = report
        .metrics
        .per_class
        .iter()
        .map(|c| c.correct as f64)
        .sum::<f64>()
        / report.metrics.samples as f64;
    assert!((weighted - report.metrics.top1).abs() < 1e-12);

    let table = ablate_bands(&ft.best_checkpoint, &data, &[vec!["S0".into()], vec!["S1".into(), "S2".into()]], &opts)
        .unwrap();
    assert_eq!(table.rows.len(), 3);
    assert!(table.rows[0].masked.is_empty());
    assert_eq!(table.rows[0].top1, report.metrics.top1);
    assert!(table.render().lines().count() >= 4);
    assert!(matches!(
        ablate_bands(&ft.best_checkpoint, &data, &[vec!["B99".into()]], &opts),
        Err(Error::InvalidArgument(_))
    ));

    // Classifier checkpoints cannot be visualized, and probing needs a checkpoint.
    assert!(matches!(
        visualize(&ft.best_checkpoint, &data, &dir.path().join("viz"), &VisualizeOptions::default()),
        Err(Error::InvalidState(_))
    ));
    let mut no_init = probe_run.clone();
    no_init.init = None;
    assert!(matches!(linear_probe(&no_init), Err(Error::InvalidState(_))));
}

#[test]
fn class_count_mismatch_is_invalid_argument() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    tiny_dataset(&data, 6);
    let ft = finetune(&tiny_run(&data, dir.path().join("ft"), Variant::Plain)).unwrap();
    let other = dir.path().join("other");
    generate_synthetic(
        &SyntheticConfig {
            classes: 3,
            bands: 4,
            size: 16,
            train: 12,
            val: 6,
            ..SyntheticConfig::default()
        },
        &other,
    )
    .unwrap();
    let mut run = tiny_run(&other, dir.path().join("ft2"), Variant::Plain);
    run.init = Some(ft.best_checkpoint.clone());
    assert!(matches!(finetune(&run), Err(Error::InvalidArgument(_))));
    assert!(matches!(evaluate(&ft.best_checkpoint, &other, &EvalOptions::default()), Err(Error::InvalidArgument(_))));
}

#[test]
fn tta_on_single_image_locations_equals_plain_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    generate_synthetic(
        &SyntheticConfig {
            classes: 4,
            bands: 4,
            size: 16,
            train: 16,
            val: 12,
            temporal_depth: 1,
            ..SyntheticConfig::default()
        },
        &data,
    )
    .unwrap();
    let mut run = tiny_run(&data, dir.path().join("ft"), Variant::Temporal);
    run.epochs = 1;
    let ft = finetune(&run).unwrap();
    let plain = evaluate(&ft.best_checkpoint, &data, &EvalOptions::default()).unwrap();
    let tta = evaluate(&ft.best_checkpoint, &data, &EvalOptions { tta: true, ..EvalOptions::default() }).unwrap();
    assert!(tta.tta);
    assert_eq!(plain.metrics, tta.metrics);
}

#[test]
fn visualize_writes_deterministic_pngs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    tiny_dataset(&data, 7);
    let mut run = tiny_run(&data, dir.path().join("pre"), Variant::Temporal);
    run.epochs = 1;
    let pre = pretrain(&run).unwrap();
    let opts = VisualizeOptions {
        indices: vec![0, 3],
        scale: 2,
        ..VisualizeOptions::default()
    };
    let a = visualize(&pre.checkpoint, &data, &dir.path().join("va"), &opts).unwrap();
    let b = visualize(&pre.checkpoint, &data, &dir.path().join("vb"), &opts).unwrap();
    assert_eq!(a.len(), 2);
    for (x, y) in a.iter().zip(&b) {
        let bytes = std::fs::read(x).unwrap();
        assert_eq!(&bytes[1..4], b"PNG");
        assert_eq!(bytes, std::fs::read(y).unwrap());
    }
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_satmae"))
}

#[test]
fn cli_round_trip_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let status = cli()
        .args(["gen-data", "--classes", "3", "--bands", "4", "--size", "16", "--train", "12", "--val", "6", "--out"])
        .arg(&data)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));

    let stats = cli().args(["stats", "--dataset"]).arg(&data).output().unwrap();
    assert!(stats.status.success());
    let v: serde_json::Value = serde_json::from_slice(&stats.stdout).unwrap();
    assert_eq!(v["bands"].as_array().unwrap().len(), 4);

    let out = dir.path().join("pre");
    let pre = cli()
        .args(["pretrain", "--epochs", "1", "--embed-dim", "32", "--depth", "1", "--heads", "2"])
        .args(["--decoder-dim", "32", "--decoder-depth", "1", "--decoder-heads", "2", "--patch-size", "4"])
        .arg("--dataset")
        .arg(&data)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(pre.status.success(), "{}", String::from_utf8_lossy(&pre.stderr));
    let ckpt = out.join(LAST_CHECKPOINT);
    assert_eq!(Checkpoint::load(&ckpt).unwrap().kind(), CheckpointKind::Pretrain);

    // Evaluating a pretrain checkpoint: invalid state.
    let bad = cli().arg("evaluate").arg("--checkpoint").arg(&ckpt).arg("--dataset").arg(&data).output().unwrap();
    assert_eq!(bad.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("invalid-state"));

    // Unknown variant: invalid argument at parse time is still nonzero.
    let parse = cli().args(["pretrain", "--variant", "cubist"]).output().unwrap();
    assert!(!parse.status.success());

    // Probing without a checkpoint.
    let probe = cli().arg("probe").arg("--dataset").arg(&data).arg("--out").arg(dir.path().join("p")).output().unwrap();
    assert_eq!(probe.status.code(), Some(3));

    // Corrupt checkpoint.
    let junk = dir.path().join("junk.ckpt");
    std::fs::write(&junk, b"not a checkpoint").unwrap();
    let corrupt = cli().arg("visualize").arg("--checkpoint").arg(&junk).arg("--dataset").arg(&data)
        .arg("--out").arg(dir.path().join("v")).output().unwrap();
    assert_eq!(corrupt.status.code(), Some(5));

    // Resume with a different configuration.
    let resume = cli()
        .args(["pretrain", "--epochs", "2", "--embed-dim", "32", "--depth", "1", "--heads", "2"])
        .args(["--decoder-dim", "32", "--decoder-depth", "1", "--decoder-heads", "2", "--patch-size", "4", "--resume"])
        .arg("--dataset")
        .arg(&data)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(resume.status.code(), Some(6));

    let viz = cli().arg("visualize").arg("--checkpoint").arg(&ckpt).arg("--dataset").arg(&data)
        .arg("--out").arg(dir.path().join("v")).args(["--indices", "0,1"]).output().unwrap();
    assert!(viz.status.success(), "{}", String::from_utf8_lossy(&viz.stderr));
    let files: BTreeSet<PathBuf> = std::fs::read_dir(dir.path().join("v")).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(files.len(), 2);
}
