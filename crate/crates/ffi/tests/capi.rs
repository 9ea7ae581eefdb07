use std::ffi::{c_char, CStr, CString};
use std::ptr;

use neoinr::checkpoint::save_checkpoint;
use neoinr::network::{InrNetwork, NetworkConfig};
use neoinr::training::{LatentKeying, LatentTable};
use neoinr_ffi::*;

fn small() -> InrNetwork {
    InrNetwork::init(
        NetworkConfig {
            spatial_dims: 2,
            latent_dim: 4,
            hidden_dim: 8,
            layers: 3,
            omega0: 1.0,
            s0: 1.0,
        },
        7,
    )
    .unwrap()
}

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    unsafe {
        neoinr_last_error(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn saved_model(dir: &std::path::Path, with_table: bool) -> (InrNetwork, CString) {
    let net = small();
    let mut table = LatentTable::new(4, LatentKeying::PerSubject);
    *table.entry_mut("sub-0000") = vec![1.0, 0.0, -1.0, 2.0];
    *table.entry_mut("sub-0001") = vec![-1.0, 2.0, 1.0, 0.0];
    let path = dir.join("m.ckpt");
    save_checkpoint(&net, with_table.then_some(&table), &path).unwrap();
    (net, CString::new(path.to_str().unwrap()).unwrap())
}

#[test]
fn model_handle_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let (net, path) = saved_model(dir.path(), true);
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(neoinr_model_load(path.as_ptr(), &mut m), NeoinrStatus::Ok);
        assert_eq!(neoinr_model_latent_dim(m), 4);
        assert_eq!(neoinr_model_spatial_dims(m), 2);
        assert_eq!(neoinr_model_param_count(m), net.param_count());
        assert_eq!(neoinr_model_latent_count(m), 2);

        let mut avg = [0f32; 4];
        assert_eq!(neoinr_model_average_latent(m, avg.as_mut_ptr(), 4), NeoinrStatus::Ok);
        assert_eq!(avg, [0.0, 1.0, 0.0, 1.0]);

        let coords = [0.0f32, 0.0, 0.5, -0.25, -1.0, 1.0];
        let mut out = [0f32; 3];
        assert_eq!(
            neoinr_model_forward(m, coords.as_ptr(), 3, 35.0, avg.as_ptr(), 4, out.as_mut_ptr()),
            NeoinrStatus::Ok
        );
        assert_eq!(out.to_vec(), net.forward_batch(&coords, 0.35, &avg).unwrap());

        assert_eq!(
            neoinr_model_forward(m, coords.as_ptr(), 3, 35.0, avg.as_ptr(), 3, out.as_mut_ptr()),
            NeoinrStatus::InvalidArgument
        );
        assert_eq!(
            neoinr_model_forward(m, coords.as_ptr(), 3, -5.0, avg.as_ptr(), 4, out.as_mut_ptr()),
            NeoinrStatus::Data
        );
        neoinr_model_free(m);
    }
}

#[test]
fn missing_latent_table_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let (_, path) = saved_model(dir.path(), false);
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(neoinr_model_load(path.as_ptr(), &mut m), NeoinrStatus::Ok);
        assert_eq!(neoinr_model_latent_count(m), 0);
        let mut avg = [0f32; 4];
        assert_eq!(neoinr_model_average_latent(m, avg.as_mut_ptr(), 4), NeoinrStatus::Data);
        assert!(last_error().contains("latent table"));
        neoinr_model_free(m);
    }
}

#[test]
fn load_errors_and_null_pointers() {
    let missing = CString::new("/nonexistent/model.ckpt").unwrap();
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(neoinr_model_load(missing.as_ptr(), &mut m), NeoinrStatus::Data);
        assert!(m.is_null());
        assert!(last_error().contains("/nonexistent/model.ckpt"));
        assert_eq!(neoinr_model_load(ptr::null(), &mut m), NeoinrStatus::NullPointer);
        assert_eq!(neoinr_model_latent_dim(ptr::null()), 0);
        neoinr_model_free(ptr::null_mut());
        neoinr_volume_free(ptr::null_mut());
    }
}

#[test]
fn volumes_round_trip_and_predict() {
    let dir = tempfile::tempdir().unwrap();
    let (_, path) = saved_model(dir.path(), true);
    let shape = [12usize, 10];
    let spacing = [0.3f32, 0.3];
    let data: Vec<f32> = (0..120).map(|i| if (30..90).contains(&i) { 0.6 } else { 0.0 }).collect();
    unsafe {
        let mut v = ptr::null_mut();
        assert_eq!(
            neoinr_volume_new(shape.as_ptr(), spacing.as_ptr(), 2, data.as_ptr(), &mut v),
            NeoinrStatus::Ok
        );
        assert_eq!(neoinr_volume_len(v), 120);
        assert_eq!(neoinr_volume_ndim(v), 2);
        let mut s = [0usize; 3];
        assert_eq!(neoinr_volume_shape(v, s.as_mut_ptr(), 3), NeoinrStatus::Ok);
        assert_eq!(&s[..2], &shape);
        assert_eq!(neoinr_volume_shape(v, s.as_mut_ptr(), 1), NeoinrStatus::InvalidArgument);

        let file = CString::new(dir.path().join("v.ndv").to_str().unwrap()).unwrap();
        assert_eq!(neoinr_volume_save(v, file.as_ptr()), NeoinrStatus::Ok);
        let mut w = ptr::null_mut();
        assert_eq!(neoinr_volume_load(file.as_ptr(), &mut w), NeoinrStatus::Ok);
        let mut back = vec![0f32; 120];
        assert_eq!(neoinr_volume_data(w, back.as_mut_ptr(), 120), NeoinrStatus::Ok);
        assert_eq!(back, data);

        let mut m = ptr::null_mut();
        assert_eq!(neoinr_model_load(path.as_ptr(), &mut m), NeoinrStatus::Ok);
        let mut params = neoinr_inversion_params_default();
        params.steps = 20;
        let (mut rec, mut pred) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(neoinr_predict(m, v, 30.0, 30.0, &params, &mut rec, &mut pred), NeoinrStatus::Ok);
        let (mut a, mut b) = (vec![0f32; 120], vec![0f32; 120]);
        neoinr_volume_data(rec, a.as_mut_ptr(), 120);
        neoinr_volume_data(pred, b.as_mut_ptr(), 120);
        assert_eq!(a, b);
        assert!(a.iter().all(|x| (0.0..=1.0).contains(x)));
        let mut p = 0.0;
        assert_eq!(neoinr_psnr(rec, v, &mut p), NeoinrStatus::Ok);
        assert!(p.is_finite());

        params.lr = 0.0;
        let (mut r2, mut p2) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(neoinr_predict(m, v, 30.0, 40.0, &params, &mut r2, &mut p2), NeoinrStatus::Config);
        assert!(r2.is_null() && p2.is_null());

        for h in [v, w, rec, pred] {
            neoinr_volume_free(h);
        }
        neoinr_model_free(m);
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(neoinr_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/neoinr.h")).unwrap();
    for name in [
        "NEOINR_H",
        "typedef struct NeoinrModel NeoinrModel",
        "typedef struct NeoinrVolume NeoinrVolume",
        "NEOINR_STATUS_OK",
        "neoinr_model_load",
        "neoinr_predict",
        "neoinr_last_error",
    ] {
        assert!(h.contains(name), "header lacks {name}");
    }
}
