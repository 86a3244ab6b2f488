use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use zsmstm::checkpoint::Checkpoint;
use zsmstm::data::{write_interval, IntervalFormat, NormalizationStats};
use zsmstm::model::{Model, ModelConfig};
use zsmstm::synth::{gen_sample, gen_script, gen_speaker, SynthConfig};
use zsmstm_ffi::*;

fn fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let cfg = ModelConfig::tiny();
    let sc = SynthConfig { d_text: cfg.d_text, n_mels: cfg.n_mels, joints: cfg.joints, frames: cfg.frames, max_words: 3, ..SynthConfig::default() };
    let model = Model::new(cfg.clone()).unwrap();
    let ckpt = Checkpoint {
        stats: NormalizationStats::identity(cfg.pose_dim(), cfg.n_mels, cfg.d_text),
        params: model.init_params(5),
        config: cfg,
        train: None,
    };
    let ckpt_path = dir.join("m.ckpt");
    ckpt.save(&ckpt_path).unwrap();
    let sample = gen_sample("s", &gen_speaker(1, &sc), &gen_script(2, &sc), 3, &sc).unwrap();
    let sample_path = dir.join("s.zsi");
    write_interval(&sample, &sample_path, IntervalFormat::Binary).unwrap();
    (ckpt_path, sample_path)
}

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(zsm_last_error()).to_string_lossy().into_owned() }
}

#[test]
fn transfer_through_the_abi_leaves_checkpoint_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let (ckpt_path, sample_path) = fixture(dir.path());
    let before = std::fs::read(&ckpt_path).unwrap();
    unsafe {
        let mut ckpt = ptr::null_mut();
        assert_eq!(zsm_checkpoint_load(cstr(&ckpt_path).as_ptr(), &mut ckpt), ZsmStatus::Ok);
        let (mut joints, mut frames, mut dim) = (0, 0, 0);
        assert_eq!(zsm_checkpoint_shape(ckpt, &mut joints, &mut frames, &mut dim), ZsmStatus::Ok);
        assert_eq!((joints, frames), (3, 8));

        let mut sample = ptr::null_mut();
        assert_eq!(zsm_sample_load(cstr(&sample_path).as_ptr(), &mut sample), ZsmStatus::Ok);
        let list = [sample as *const ZsmSample];
        let mut style = ptr::null_mut();
        assert_eq!(zsm_extract_style(ckpt, list.as_ptr(), 1, &mut style), ZsmStatus::Ok);
        assert_eq!(zsm_style_dim(style), dim);

        let mut small = vec![0.0; dim - 1];
        assert_eq!(zsm_style_values(style, small.as_mut_ptr(), small.len()), ZsmStatus::BufferTooSmall);
        assert!(last_error().contains("need"));
        let mut values = vec![0.0; dim];
        assert_eq!(zsm_style_values(style, values.as_mut_ptr(), dim), ZsmStatus::Ok);
        assert!(values.iter().all(|v| v.is_finite()));

        let mut copy = ptr::null_mut();
        assert_eq!(zsm_style_from_values(values.as_ptr(), dim, &mut copy), ZsmStatus::Ok);
        let (mut p1, mut p2) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(zsm_transfer(ckpt, sample, style, &mut p1), ZsmStatus::Ok);
        assert_eq!(zsm_transfer(ckpt, sample, copy, &mut p2), ZsmStatus::Ok);
        let n = zsm_pose_frames(p1) * zsm_pose_cols(p1);
        assert_eq!((zsm_pose_frames(p1), zsm_pose_cols(p1)), (8, 6));
        let a = std::slice::from_raw_parts(zsm_pose_data(p1), n);
        let b = std::slice::from_raw_parts(zsm_pose_data(p2), n);
        assert_eq!(a, b);

        let mut m = ZsmMetrics::default();
        let wrists = [1usize, 2];
        assert_eq!(zsm_metrics(zsm_pose_data(p1), 8, 6, 15.0, wrists.as_ptr(), 2, &mut m), ZsmStatus::Ok);
        assert!(m.velocity >= 0.0 && m.bbox_perimeter > 0.0);
        let bad = [7usize];
        assert_eq!(zsm_metrics(zsm_pose_data(p1), 8, 6, 15.0, bad.as_ptr(), 1, &mut m), ZsmStatus::Data);

        // wrong-width style is rejected, not truncated
        let mut short = ptr::null_mut();
        assert_eq!(zsm_style_from_values(values.as_ptr(), 3, &mut short), ZsmStatus::Ok);
        let mut p3 = ptr::null_mut();
        assert_eq!(zsm_transfer(ckpt, sample, short, &mut p3), ZsmStatus::Data);
        assert!(p3.is_null());

        for p in [p1, p2] {
            zsm_pose_free(p);
        }
        for s in [style, copy, short] {
            zsm_style_free(s);
        }
        zsm_sample_free(sample);
        zsm_checkpoint_free(ckpt);
    }
    assert_eq!(std::fs::read(&ckpt_path).unwrap(), before);
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut ckpt = ptr::null_mut();
        let missing = CString::new("/nonexistent/model.ckpt").unwrap();
        assert_eq!(zsm_checkpoint_load(missing.as_ptr(), &mut ckpt), ZsmStatus::Data);
        assert!(ckpt.is_null());
        assert!(last_error().contains("missing file"));
        assert_eq!(zsm_checkpoint_load(ptr::null(), &mut ckpt), ZsmStatus::NullArgument);
        let (mut s, mut m) = (0.0, 0.0);
        assert_eq!(zsm_distance_split(10.0, 2.0, 4.0, &mut s, &mut m), ZsmStatus::Ok);
        assert_eq!((s, m), (80.0, 20.0));
        assert_eq!(last_error(), "");
        let frame = [0.5, 0.5];
        let mut out = [1.0; 75];
        let map = [25usize];
        assert_eq!(zsm_map_to_body25(frame.as_ptr(), map.as_ptr(), 1, out.as_mut_ptr()), ZsmStatus::Config);
        let map = [4usize];
        assert_eq!(zsm_map_to_body25(frame.as_ptr(), map.as_ptr(), 1, out.as_mut_ptr()), ZsmStatus::Ok);
        assert_eq!(&out[12..15], &[0.5, 0.5, 1.0]);
        assert_eq!(out.iter().filter(|v| **v != 0.0).count(), 3);
        zsm_checkpoint_free(ptr::null_mut());
        assert!(!CStr::from_ptr(zsm_version()).to_bytes().is_empty());
    }
}

#[test]
fn header_declares_every_export() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(root.join("include/zsmstm.h")).unwrap();
    let src = std::fs::read_to_string(root.join("src/lib.rs")).unwrap();
    let names: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(names.len() >= 15);
    for n in names {
        assert!(header.contains(&format!("{n}(")), "{n} missing from header");
    }
}

fn target_dir() -> PathBuf {
    // .../target/<profile>/deps/abi-<hash>
    std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_static_library() {
    let lib = target_dir().join("libzsmstm_ffi.a");
    if !lib.is_file() {
        eprintln!("note: {} not built, skipping C link test", lib.display());
        return;
    }
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("note: no C compiler, skipping C link test");
        return;
    }
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(root.join("include"))
        .arg(root.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let (ckpt, sample) = fixture(dir.path());
    let out = Command::new(&exe).arg(&ckpt).arg(&sample).output().unwrap();
    assert!(out.status.success(), "exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("8 6 "));
}
