//! Round-trip and determinism tests for the on-disk artifact formats.

use widepth::formats::*;
use widepth_core::c64::C64;
use widepth_core::csi::RawCsiWindow;
use widepth_core::data::Sample;
use widepth_core::Tensor;

#[test]
fn checkpoint_round_trips_byte_exactly() {
    let meta = vec![
        ("kind".to_string(), "teacher".to_string()),
        ("latent_dim".to_string(), "4".to_string()),
    ];
    let a = Tensor::from_vec(&[2, 3], vec![0.5f32, -1.25, 3.75, 0.0, f32::MIN_POSITIVE, 1e30]);
    let b = Tensor::from_vec(&[4], vec![1.0f32, 2.0, 3.0, 4.0]);
    let names = vec!["enc.0.w".to_string(), "enc.0.b".to_string()];
    let ck = Checkpoint::from_params(meta, &names, &[&a, &b]);
    let bytes = ck.to_bytes();
    let back = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(ck, back);
    // serialization is deterministic down to the byte
    assert_eq!(bytes, back.to_bytes());
    assert_eq!(back.meta("kind"), Some("teacher"));
}

#[test]
fn checkpoint_load_rejects_mismatches() {
    let t = Tensor::from_vec(&[2], vec![1.0f32, 2.0]);
    let ck = Checkpoint::from_params(vec![], &["w".to_string()], &[&t]);
    // wrong name
    let mut dst = Tensor::<f32>::zeros(&[2]);
    assert!(ck.load_into(&["v".to_string()], &mut [&mut dst]).is_err());
    // wrong shape
    let mut dst = Tensor::<f32>::zeros(&[3]);
    assert!(ck.load_into(&["w".to_string()], &mut [&mut dst]).is_err());
    // correct
    let mut dst = Tensor::<f32>::zeros(&[2]);
    ck.load_into(&["w".to_string()], &mut [&mut dst]).unwrap();
    assert_eq!(dst.data(), t.data());
}

#[test]
fn corrupt_checkpoints_rejected() {
    assert!(Checkpoint::from_bytes(b"nope").is_err());
    let t = Tensor::from_vec(&[2], vec![1.0f32, 2.0]);
    let ck = Checkpoint::from_params(vec![], &["w".to_string()], &[&t]);
    let mut bytes = ck.to_bytes();
    bytes.truncate(bytes.len() - 4); // drop one float
    assert!(Checkpoint::from_bytes(&bytes).is_err());
}

#[test]
fn pgm16_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.pgm");
    let vals: Vec<u16> = (0..12).map(|i| (i * 5000) as u16).collect();
    write_pgm16(&p, 4, 3, &vals).unwrap();
    let (w, h, back) = read_pgm16(&p).unwrap();
    assert_eq!((w, h), (4, 3));
    assert_eq!(back, vals);
}

#[test]
fn csi_record_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("w.csir");
    let mut raw = RawCsiWindow::zeros(2, 3, 4, 5);
    raw.sample_rate_hz = 500.0;
    raw.carrier_hz = 5.0e9;
    for (i, z) in raw.data_mut().iter_mut().enumerate() {
        *z = C64::new(i as f64 * 0.25, -(i as f64) * 0.5);
    }
    write_csi_record(&p, &raw).unwrap();
    let back = read_csi_record(&p).unwrap();
    assert_eq!(
        (back.n_tx, back.n_rx, back.n_sub, back.n_packet),
        (2, 3, 4, 5)
    );
    assert_eq!(back.sample_rate_hz, 500.0);
    assert_eq!(back.carrier_hz, 5.0e9);
    for (a, b) in raw.data().iter().zip(back.data().iter()) {
        // values survive the f32 storage exactly (they are f32-representable)
        assert_eq!(a.re, b.re);
        assert_eq!(a.im, b.im);
    }
}

#[test]
fn sample_and_index_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let s = Sample {
        id: "s0w0001".to_string(),
        subject: 0,
        window_start: 0.1,
        csi: Tensor::from_vec(&[2, 2, 2, 1], vec![0.1f32; 8]),
        phase: vec![0.5f32, -0.5],
        image: Tensor::from_vec(&[1, 2, 2], vec![0.0f32, 0.3, 0.6, 0.9]),
        mask: Tensor::from_vec(&[2, 2], vec![1.0f32, 0.0, 0.0, 1.0]),
        center: (0.25, 0.75),
        avg_depth: 0.4,
    };
    let rel = "samples/s0w0001.smp";
    std::fs::create_dir_all(dir.path().join("samples")).unwrap();
    write_sample(&dir.path().join(rel), &s).unwrap();
    std::fs::write(dir.path().join("index.txt"), format!("{rel}\n")).unwrap();
    let ds = read_dataset(&dir.path().join("index.txt")).unwrap();
    assert_eq!(ds.samples.len(), 1);
    let b = &ds.samples[0];
    assert_eq!(b.id, s.id);
    assert_eq!(b.csi.data(), s.csi.data());
    assert_eq!(b.phase, s.phase);
    assert_eq!(b.image.data(), s.image.data());
    assert_eq!(b.mask.data(), s.mask.data());
    assert_eq!(b.center, s.center);
    assert_eq!(b.avg_depth, s.avg_depth);
}

#[test]
fn manifest_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("manifest.txt");
    let rows = vec![
        ManifestRow {
            id: "s0w0000".to_string(),
            subject: 0,
            window_start_s: 0.0,
            csi_path: "csi/s0w0000.csir".to_string(),
            depth_dir: "depth/s0".to_string(),
        },
        ManifestRow {
            id: "s1w0002".to_string(),
            subject: 1,
            window_start_s: 0.2,
            csi_path: "csi/s1w0002.csir".to_string(),
            depth_dir: "depth/s1".to_string(),
        },
    ];
    write_manifest(&p, &rows).unwrap();
    assert_eq!(read_manifest(&p).unwrap(), rows);
}

#[test]
fn report_csv_has_mean_row_matching_recomputation() {
    use widepth_core::metrics::{EvalReport, SampleScores};
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("report.csv");
    let mut r = EvalReport::new("test".to_string());
    r.push(
        "a".to_string(),
        SampleScores { mse: 0.1, soft_iou: 0.2, depth_err: 0.3, shape_err: 0.4, pos_err: 0.5 },
    );
    r.push(
        "b".to_string(),
        SampleScores { mse: 0.3, soft_iou: 0.4, depth_err: 0.5, shape_err: 0.6, pos_err: 0.7 },
    );
    write_report_csv(&p, &r).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    let mean_line = text.lines().last().unwrap();
    assert!(mean_line.starts_with("MEAN,"));
    let vals: Vec<f64> = mean_line
        .split(',')
        .skip(1)
        .map(|v| v.parse().unwrap())
        .collect();
    for (got, want) in vals.iter().zip([0.2, 0.3, 0.4, 0.5, 0.6]) {
        assert!((got - want).abs() < 1e-9);
    }
}
