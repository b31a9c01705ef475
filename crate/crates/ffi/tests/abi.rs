use std::ffi::{c_char, CStr};
use std::ptr;

use qrelax_ffi::*;

fn last_error() -> String {
    let mut buf = [0 as c_char; 256];
    unsafe {
        qr_last_error_message(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

#[test]
fn scalar_functions() {
    let mut p = 0.0;
    assert_eq!(
        unsafe { qr_transition_probability(1, 2, 2.5, &mut p) },
        QrStatus::Ok
    );
    assert!((p - qrelax::spectrum::transition_probability(1, 2, 2.5).unwrap()).abs() == 0.0);

    assert_eq!(
        unsafe { qr_transition_probability(1, 2, 0.5, &mut p) },
        QrStatus::Domain
    );
    assert!(last_error().contains("alpha"));
    assert_eq!(
        unsafe { qr_transition_probability(1, 2, 2.5, ptr::null_mut()) },
        QrStatus::NullPointer
    );

    assert!((qr_normal_cdf(0.0) - 0.5).abs() < 1e-15);
    let mut x = 0.0;
    assert_eq!(
        unsafe { qr_inverse_normal_cdf(0.975, &mut x) },
        QrStatus::Ok
    );
    assert!((x - 1.959963984540054).abs() < 1e-9);
    assert_eq!(
        unsafe { qr_inverse_normal_cdf(1.5, &mut x) },
        QrStatus::Domain
    );

    let mut tau = 0.0;
    assert_eq!(
        unsafe { qr_tau_r(2.5, 1.0, 1, 10.0, 0.95, &mut tau) },
        QrStatus::Ok
    );
    assert!((tau - 1.8307).abs() < 1e-3);
    assert_eq!(
        unsafe { qr_tau_r(2.5, 1.0, 1, 10.0, 1.5, &mut tau) },
        QrStatus::InvalidConfig
    );

    let v = unsafe { CStr::from_ptr(qr_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn model_and_trajectory_handles() {
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(qr_model_new(2.5, 16, &mut model), QrStatus::Ok);

        let mut len = 0;
        assert_eq!(
            qr_model_energies(model, ptr::null_mut(), 0, &mut len),
            QrStatus::Ok
        );
        assert_eq!(len, 16);
        let mut small = [0.0; 4];
        assert_eq!(
            qr_model_energies(model, small.as_mut_ptr(), 4, &mut len),
            QrStatus::BufferTooSmall
        );
        let mut e = vec![0.0; len];
        assert_eq!(
            qr_model_energies(model, e.as_mut_ptr(), e.len(), &mut len),
            QrStatus::Ok
        );
        assert!((e[0] - std::f64::consts::PI.powi(2) / 6.25).abs() < 1e-12);

        let mut prior = vec![0.0; 16];
        assert_eq!(
            qr_model_prior(model, 1, prior.as_mut_ptr(), 16, &mut len),
            QrStatus::Ok
        );
        assert!((prior.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(prior[4], 0.0);

        let mut traj = ptr::null_mut();
        assert_eq!(
            qr_trajectory_simulate(model, 1, 1.0, 5.0, 100, 3, 0, 2, &mut traj),
            QrStatus::Ok
        );
        assert_eq!(qr_trajectory_len(traj), 101);
        assert_eq!(qr_trajectory_outcome(traj), 2);
        let mut h = vec![0.0; 101];
        assert_eq!(
            qr_trajectory_series(traj, QrSeries::Energy, h.as_mut_ptr(), 101, &mut len),
            QrStatus::Ok
        );
        assert!((h[100] - e[1]).abs() < 1e-6);
        let mut post = vec![0.0; 16];
        assert_eq!(
            qr_trajectory_posterior(traj, 100, post.as_mut_ptr(), 16, &mut len),
            QrStatus::Ok
        );
        assert!(post[1] > 0.999);
        assert_eq!(
            qr_trajectory_posterior(traj, 500, post.as_mut_ptr(), 16, &mut len),
            QrStatus::Domain
        );

        let direct = {
            let m = qrelax::WellModel::dimensionless(2.5, 16).unwrap();
            let p = qrelax::Prior::for_model(1, &m).unwrap();
            let grid = qrelax::TimeGrid::uniform(5.0, 100).unwrap();
            let c = qrelax::SdeConfig::new(1.0, grid, 3, qrelax::OutcomeMode::Forced(2)).unwrap();
            qrelax::filtering::simulate_trajectory(&p, &c, 0).unwrap()
        };
        assert_eq!(h, direct.h_path);

        let mut bad = ptr::null_mut();
        assert_eq!(
            qr_trajectory_simulate(model, 1, -1.0, 5.0, 100, 3, 0, 0, &mut bad),
            QrStatus::InvalidConfig
        );
        assert!(bad.is_null());

        qr_trajectory_free(traj);
        qr_trajectory_free(ptr::null_mut());
        qr_model_free(model);
    }
}

#[test]
fn ensemble_handle() {
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(qr_model_new(2.5, 20, &mut model), QrStatus::Ok);
        let mut a = ptr::null_mut();
        let mut b = ptr::null_mut();
        assert_eq!(
            qr_ensemble_run(model, 1, 1.0, 200, 9, 1, &mut a),
            QrStatus::Ok
        );
        assert_eq!(
            qr_ensemble_run(model, 1, 1.0, 200, 9, 3, &mut b),
            QrStatus::Ok
        );
        let mut len = 0;
        assert_eq!(
            qr_ensemble_mean_energy(
                a,
                ptr::null_mut(),
                ptr::null_mut(),
                ptr::null_mut(),
                0,
                &mut len
            ),
            QrStatus::Ok
        );
        assert_eq!(len, 65);
        let (mut t, mut ma, mut mb, mut se) = (
            vec![0.0; len],
            vec![0.0; len],
            vec![0.0; len],
            vec![0.0; len],
        );
        assert_eq!(
            qr_ensemble_mean_energy(
                a,
                t.as_mut_ptr(),
                ma.as_mut_ptr(),
                se.as_mut_ptr(),
                len,
                &mut len
            ),
            QrStatus::Ok
        );
        assert_eq!(
            qr_ensemble_mean_energy(
                b,
                ptr::null_mut(),
                mb.as_mut_ptr(),
                ptr::null_mut(),
                len,
                &mut len
            ),
            QrStatus::Ok
        );
        assert_eq!(ma, mb);
        assert_eq!(t[0], 0.0);
        assert_eq!(se[0], 0.0);
        let mut counts = vec![0usize; 20];
        assert_eq!(
            qr_ensemble_outcome_counts(a, counts.as_mut_ptr(), 20, &mut len),
            QrStatus::Ok
        );
        assert_eq!(counts.iter().sum::<usize>(), 200);
        assert_eq!(counts[4], 0);
        qr_ensemble_free(a);
        qr_ensemble_free(b);
        qr_model_free(model);
    }
}
