use std::ffi::{CStr, CString};
use std::ptr;

use amprlab_ffi::*;

fn last_error() -> String {
    let p = amprlab_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn sample(n: usize, alpha: f64, seed: u64) -> *mut AmprlabInstance {
    let mut inst = ptr::null_mut();
    let st = unsafe { amprlab_instance_sample(n, alpha, 0.15, 0.2, seed, &mut inst) };
    assert_eq!(st, AmprlabStatus::Ok);
    assert!(!inst.is_null());
    inst
}

#[test]
fn scalar_kernels_match_core() {
    let p = amprlab::DenoiserParams::new(0.3, 0.7).unwrap();
    let mut g = 0.0;
    assert_eq!(
        unsafe { amprlab_denoise(1.1, 2.0, 0.3, 0.7, &mut g) },
        AmprlabStatus::Ok
    );
    assert_eq!(g, amprlab::denoise(1.1, 2.0, &p).unwrap());
    assert_eq!(
        unsafe { amprlab_denoise_deriv(1.1, 2.0, 0.3, 0.7, &mut g) },
        AmprlabStatus::Ok
    );
    assert_eq!(g, amprlab::denoise_deriv(1.1, 2.0, &p).unwrap());

    let mut m = AmprlabSmoothedMoments::default();
    assert_eq!(
        unsafe { amprlab_smoothed_moments(0.4, 0.5, 2.0, 0.3, 0.7, &mut m) },
        AmprlabStatus::Ok
    );
    let c = amprlab::smoothed_moments(0.4, 0.5, 2.0, &p).unwrap();
    assert_eq!((m.m1, m.m2, m.mderiv), (c.m1, c.m2, c.mderiv));
}

#[test]
fn poisson_moments_accept_infinity() {
    let mut f = AmprlabResamplingMoments::default();
    assert_eq!(
        unsafe { amprlab_poisson_moments(0.25, f64::INFINITY, &mut f) },
        AmprlabStatus::Ok
    );
    assert_eq!(f.f1, 1.0 / 1.25);
    assert_eq!(f.f2, f.f1 * f.f1);
    assert_eq!(unsafe { amprlab_poisson_moments(0.25, 0.5, &mut f) }, AmprlabStatus::Ok);
    assert!(f.f2 > f.f1 * f.f1);
}

#[test]
fn invalid_arguments_report_status_and_message() {
    let mut g = 0.0;
    assert_eq!(
        unsafe { amprlab_denoise(1.0, 1.0, -1.0, 0.5, &mut g) },
        AmprlabStatus::InvalidArgument
    );
    assert!(!last_error().is_empty());
    assert_eq!(
        unsafe { amprlab_denoise(1.0, 1.0, 0.1, 0.5, ptr::null_mut()) },
        AmprlabStatus::NullPointer
    );
    assert!(last_error().contains("null"));
    let mut f = AmprlabResamplingMoments::default();
    assert_eq!(
        unsafe { amprlab_poisson_moments(0.1, -2.0, &mut f) },
        AmprlabStatus::InvalidArgument
    );
}

#[test]
fn instance_round_trip_through_file() {
    let inst = sample(64, 0.75, 3);
    let (mut m, mut n) = (0, 0);
    assert_eq!(
        unsafe { amprlab_instance_dims(inst, &mut m, &mut n) },
        AmprlabStatus::Ok
    );
    assert_eq!((m, n), (48, 64));

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("inst.bin").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { amprlab_instance_save(inst, path.as_ptr()) }, AmprlabStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(
        unsafe { amprlab_instance_load(path.as_ptr(), &mut back) },
        AmprlabStatus::Ok
    );

    let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
    unsafe {
        assert_eq!(amprlab_instance_signal(inst, a.as_mut_ptr(), n), AmprlabStatus::Ok);
        assert_eq!(amprlab_instance_signal(back, b.as_mut_ptr(), n), AmprlabStatus::Ok);
        assert_eq!(
            amprlab_instance_signal(back, b.as_mut_ptr(), n - 1),
            AmprlabStatus::BufferTooSmall
        );
    }
    assert_eq!(a, b);

    let missing = CString::new(dir.path().join("nope.bin").to_str().unwrap()).unwrap();
    let mut none = ptr::null_mut();
    assert_eq!(
        unsafe { amprlab_instance_load(missing.as_ptr(), &mut none) },
        AmprlabStatus::Io
    );
    assert!(none.is_null());

    unsafe {
        amprlab_instance_free(inst);
        amprlab_instance_free(back);
        amprlab_instance_free(ptr::null_mut());
    }
}

#[test]
fn from_parts_checks_shapes() {
    let x = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
    let y = [1.0, 2.0, 3.0];
    let w0 = [1.0, 2.0];
    let mut inst = ptr::null_mut();
    let st = unsafe { amprlab_instance_from_parts(3, 2, x.as_ptr(), y.as_ptr(), w0.as_ptr(), 0.0, &mut inst) };
    assert_eq!(st, AmprlabStatus::Ok);
    unsafe { amprlab_instance_free(inst) };
    let st = unsafe { amprlab_instance_from_parts(3, 2, x.as_ptr(), ptr::null(), w0.as_ptr(), 0.0, &mut inst) };
    assert_eq!(st, AmprlabStatus::NullPointer);
}

#[test]
fn ampr_at_infinity_matches_uniform_gamp() {
    let inst = sample(400, 0.8, 9);
    let opts = amprlab_solver_options_default();
    let mut res = ptr::null_mut();
    assert_eq!(
        unsafe { amprlab_run_ampr(inst, 0.5, 1.0, f64::INFINITY, &opts, &mut res) },
        AmprlabStatus::Ok
    );
    let mut s = AmprlabAmprSummary::default();
    assert_eq!(unsafe { amprlab_ampr_summary(res, &mut s) }, AmprlabStatus::Ok);
    assert!(s.converged);
    assert_eq!(s.vhat, 0.0);
    assert!(s.sigma2 > 0.0);

    let mut w = vec![0.0; 400];
    assert_eq!(
        unsafe { amprlab_ampr_field(res, AmprlabField::WHat, w.as_mut_ptr(), w.len()) },
        AmprlabStatus::Ok
    );
    let mut stat = vec![0.0; 400];
    let st = unsafe { amprlab_ampr_bootstrap_statistics(res, AmprlabPsi::Identity, stat.as_mut_ptr(), stat.len()) };
    assert_eq!(st, AmprlabStatus::Ok);
    for (a, b) in w.iter().zip(&stat) {
        assert!((a - b).abs() < 1e-12);
    }

    let mut wg = vec![0.0; 400];
    let mut gs = AmprlabGampSummary::default();
    let st = unsafe {
        amprlab_run_gamp(
            inst,
            0.5,
            1.0,
            ptr::null(),
            ptr::null(),
            wg.as_mut_ptr(),
            wg.len(),
            &mut gs,
        )
    };
    assert_eq!(st, AmprlabStatus::Ok);
    assert!(gs.converged);
    let diff = w.iter().zip(&wg).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-10, "max diff {diff}");

    unsafe {
        amprlab_ampr_free(res);
        amprlab_instance_free(inst);
    }
}

#[test]
fn se_and_optimizer_entry_points() {
    let model = AmprlabSeModel {
        alpha: 1.0,
        delta: 0.15,
        rho: 0.2,
        lambda: 0.3,
        gamma: 1.0,
        mu_b: 0.7,
    };
    let mut r = AmprlabSeResult::default();
    assert_eq!(unsafe { amprlab_run_se(&model, &mut r) }, AmprlabStatus::Ok);
    assert!(r.converged && r.mse > 0.0 && r.vhat > 0.0);
    assert!((r.sigma2 - r.chihat / (r.qhat * r.qhat)).abs() < 1e-12 * r.sigma2);

    let mut o = AmprlabOptimum::default();
    assert_eq!(
        unsafe { amprlab_minimize_variance(1.5, 0.15, 0.2, 1.0, 2, &mut o) },
        AmprlabStatus::Ok
    );
    assert!(o.ratio <= 1.0 && o.sigma2_star > 0.0);
    assert!(o.lambda_star >= 1e-7);
    assert_eq!(
        unsafe { amprlab_run_se(ptr::null(), &mut r) },
        AmprlabStatus::NullPointer
    );
}
