use std::path::Path;
use std::process::Command;

use abdo_core::volume::{read_nifti, write_nifti, Geometry, LabelMap};

fn abdo(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_abdo")).args(args).output().unwrap()
}

fn write_labels(dir: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    let g = Geometry::with_spacing([20, 20, 12], [2.0, 2.0, 2.0]).unwrap();
    let labels = LabelMap::from_fn(g, |x, y, _| if (5..15).contains(&x) && (4..12).contains(&y) { 1 } else { 0 }).unwrap();
    write_nifti(&labels, dir.join("a.nii.gz")).unwrap();
}

#[test]
fn generate_without_ct_writes_three_files_per_pair() {
    let tmp = tempfile::tempdir().unwrap();
    write_labels(&tmp.path().join("labels"));
    let config = tmp.path().join("config.toml");
    std::fs::write(
        &config,
        "[generation]\ntarget_shape = [16, 16, 10]\ntarget_spacing = 2.0\nslice_spacing_max = 4.0\n",
    )
    .unwrap();
    let out = tmp.path().join("out");
    let o = abdo(&[
        "generate",
        "--labels-dir",
        tmp.path().join("labels").to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "3",
        "--count",
        "2",
        "--workers",
        "2",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for i in 0..2 {
        let img = read_nifti(out.join(format!("pair_{i:06}_img.nii.gz"))).unwrap();
        assert_eq!(img.geometry().shape(), [16, 16, 10]);
        let seg = read_nifti(out.join(format!("pair_{i:06}_seg.nii.gz"))).unwrap().into_labels().unwrap();
        assert!(seg.label_set().iter().all(|&l| l <= 1));
        let params: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join(format!("pair_{i:06}_params.json"))).unwrap())
                .unwrap();
        assert_eq!(params["subject"], "a");
        assert_eq!(params["pair_index"], i);
        assert_eq!(params["seed"], 3);
    }
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    write_labels(&tmp.path().join("labels"));
    let config = tmp.path().join("config.toml");
    std::fs::write(&config, "[generation]\nnoise_sd = 0.1\n").unwrap();
    let o = abdo(&[
        "generate",
        "--labels-dir",
        tmp.path().join("labels").to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("noise_sd"));
}

#[test]
fn empty_label_directory_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = abdo(&[
        "generate",
        "--labels-dir",
        tmp.path().to_str().unwrap(),
        "--out-dir",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("no .nii"));
}

#[test]
fn stats_summarises_a_records_file() {
    let tmp = tempfile::tempdir().unwrap();
    let records = tmp.path().join("records.csv");
    let mut text = String::from("dataset,subject,sequence,method,region,dice,hd95_mm,gt_volume_ml,pred_volume_ml\n");
    for s in 0..4 {
        text.push_str(&format!("d,s{s},t1,m,liver,0.{},{},10,10\n", 8 + s % 2, s + 1));
    }
    text.push_str("d,s4,t1,m,liver,,,10,0\n");
    std::fs::write(&records, text).unwrap();
    let out = tmp.path().join("summary.csv");
    let o = abdo(&["stats", "--records", records.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(&out).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let row = rdr.records().next().unwrap().unwrap();
    let get = |name: &str| row[headers.iter().position(|h| h == name).unwrap()].to_string();
    assert_eq!(get("dice_n"), "4");
    assert_eq!(get("dice_missing"), "1");
    assert_eq!(get("dice_mean").parse::<f64>().unwrap(), 0.85);
    assert_eq!(get("hd95_display"), "2.50 (1.29)");
}
