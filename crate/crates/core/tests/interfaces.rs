//! The dynamics-log and metrics-table formats shared with external training
//! hooks.

mod common;

use std::io::BufRead;
use std::path::Path;

use common::FixtureSpec;
use earlycut::dynamics::{learning_times, DynamicsLog};
use earlycut::earlycut::{
    compute_metrics, identify_mees, select_with_metrics, CutConfig, SelectionMetrics,
};
use earlycut::nettrain::{init_model, train};
use earlycut::Error;

const HAND_WRITTEN: &str = r#"{"schema":"ec-dynlog/1","n":3,"K":2}
{"epoch":1,"preds":[0,1,1],"val_acc":0.5}
{"epoch":2,"preds":[0,1,0],"val_acc":0.75}
{"epoch":3,"preds":[0,1,0],"val_acc":0.7}
"#;

#[test]
fn hand_written_log_parses() {
    let log = DynamicsLog::read_jsonl(HAND_WRITTEN.as_bytes(), Path::new("mem")).unwrap();
    assert_eq!(
        (log.num_samples(), log.num_classes(), log.epochs_recorded()),
        (3, 2, 3)
    );
    assert_eq!(log.val_curve(), &[0.5, 0.75, 0.7]);
    let lt = learning_times(&log, &[0, 1, 0], 2).unwrap();
    assert_eq!(lt.lt, vec![2, 2, 3]);
}

#[test]
fn out_of_order_epochs_rejected() {
    let text = HAND_WRITTEN.replace("\"epoch\":2", "\"epoch\":4");
    let err = DynamicsLog::read_jsonl(text.as_bytes(), Path::new("mem")).unwrap_err();
    assert!(matches!(err, Error::Parse { .. }));
}

#[test]
fn bad_schema_and_shape_rejected() {
    let text = HAND_WRITTEN.replace("ec-dynlog/1", "ec-dynlog/9");
    assert!(DynamicsLog::read_jsonl(text.as_bytes(), Path::new("mem")).is_err());
    let text = HAND_WRITTEN.replace("[0,1,1]", "[0,1]");
    assert!(DynamicsLog::read_jsonl(text.as_bytes(), Path::new("mem")).is_err());
    let text = HAND_WRITTEN.replace("[0,1,1]", "[0,1,2]");
    assert!(DynamicsLog::read_jsonl(text.as_bytes(), Path::new("mem")).is_err());
}

#[test]
fn header_only_log_is_empty() {
    let text = "{\"schema\":\"ec-dynlog/1\",\"n\":5,\"K\":3}\n";
    let log = DynamicsLog::read_jsonl(text.as_bytes(), Path::new("mem")).unwrap();
    assert_eq!(log.epochs_recorded(), 0);
    assert!(learning_times(&log, &[0; 5], 2).is_err());
}

#[test]
fn engine_log_is_plain_jsonl() {
    let fx = FixtureSpec::small().build(1);
    let mut log = DynamicsLog::new(fx.split.train.len(), fx.ds.num_classes());
    train(
        init_model(&fx.arch, 1).unwrap(),
        &fx.ds,
        &fx.split,
        &fx.train,
        &mut log,
    )
    .unwrap();
    let mut buf = Vec::new();
    log.write_jsonl(&mut buf).unwrap();
    let lines: Vec<serde_json::Value> = buf
        .lines()
        .map(|l| serde_json::from_str(&l.unwrap()).unwrap())
        .collect();
    assert_eq!(lines[0]["schema"], "ec-dynlog/1");
    assert_eq!(lines[0]["n"], fx.split.train.len());
    assert_eq!(lines[0]["K"], 3);
    assert_eq!(lines.len(), fx.train.epochs + 1);
    for (e, line) in lines[1..].iter().enumerate() {
        assert_eq!(line["epoch"], e + 1);
        assert_eq!(
            line["preds"].as_array().unwrap().len(),
            fx.split.train.len()
        );
    }
    assert_eq!(
        DynamicsLog::read_jsonl(&buf[..], Path::new("mem")).unwrap(),
        log
    );
}

#[test]
fn single_row_metrics_table() {
    let m = SelectionMetrics {
        ids: vec![12],
        loss: vec![1.5],
        confidence: vec![0.75],
        grad_norm: vec![0.25],
        epoch_t: 4,
    };
    let mut buf = Vec::new();
    m.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(
        text,
        "sample_id,loss,confidence,grad_norm,epoch_t\n12,1.5,0.75,0.25,4\n"
    );
}

#[test]
fn header_only_metrics_table_is_empty() {
    let text = "sample_id,loss,confidence,grad_norm,epoch_t\n";
    let m = SelectionMetrics::read_csv(text.as_bytes(), Path::new("mem")).unwrap();
    assert!(m.is_empty());
}

#[test]
fn mixed_epochs_rejected() {
    let text = "sample_id,loss,confidence,grad_norm,epoch_t\n1,1,0.5,1,3\n2,1,0.5,1,4\n";
    assert!(SelectionMetrics::read_csv(text.as_bytes(), Path::new("mem")).is_err());
}

#[test]
fn decisions_survive_csv_round_trip() {
    let fx = FixtureSpec::small().build(2);
    let mut log = DynamicsLog::new(fx.split.train.len(), fx.ds.num_classes());
    let out = train(
        init_model(&fx.arch, 2).unwrap(),
        &fx.ds,
        &fx.split,
        &fx.train,
        &mut log,
    )
    .unwrap();
    let cut = CutConfig {
        target_retain: Some(0.7),
        loss_top_frac: 0.3,
        conf_top_frac: 0.5,
        grad_bottom_frac: 0.6,
        ..CutConfig::default()
    };
    let direct = select_with_metrics(&fx.ds, &fx.split.train, &log, &cut, 1, |ids, t| {
        compute_metrics(out.checkpoints.at(t)?, &fx.ds, ids, t)
    })
    .unwrap();
    let mut csv = Vec::new();
    direct.3.write_csv(&mut csv).unwrap();
    let read_back = SelectionMetrics::read_csv(&csv[..], Path::new("mem")).unwrap();
    assert_eq!(read_back, direct.3);
    let via_csv = select_with_metrics(&fx.ds, &fx.split.train, &log, &cut, 1, |_, _| {
        Ok(read_back.clone())
    })
    .unwrap();
    assert_eq!(via_csv.0, direct.0);
    assert_eq!(identify_mees(&direct.3, &cut), direct.4);
}
