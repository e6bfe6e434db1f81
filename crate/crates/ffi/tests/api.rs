use std::ffi::{CStr, CString};
use std::ptr;

use subspace_sketch_ffi::*;

fn last_error() -> String {
    let p = ss_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn matrix_round_trip() {
    let data = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(ss_matrix_new(3, 2, data.as_ptr(), &mut m), SsStatus::Ok);
        assert_eq!((ss_matrix_rows(m), ss_matrix_cols(m)), (3, 2));
        let mut out = [0.0; 6];
        assert_eq!(ss_matrix_copy_data(m, out.as_mut_ptr(), 5), SsStatus::BufferTooSmall);
        assert_eq!(ss_matrix_copy_data(m, out.as_mut_ptr(), 6), SsStatus::Ok);
        assert_eq!(out, data);

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("m.sskm").to_str().unwrap()).unwrap();
        assert_eq!(ss_matrix_save(m, path.as_ptr()), SsStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(ss_matrix_load(path.as_ptr(), &mut back), SsStatus::Ok);
        let mut out2 = [0.0; 6];
        ss_matrix_copy_data(back, out2.as_mut_ptr(), 6);
        assert_eq!(out2, data);

        let mut x = ptr::null_mut();
        assert_eq!(ss_subspace_from_matrix(m, &mut x), SsStatus::Ok);
        assert_eq!((ss_subspace_dim(x), ss_subspace_ambient(x)), (2, 3));
        ss_subspace_free(x);
        ss_matrix_free(back);
        ss_matrix_free(m);
    }
}

#[test]
fn errors_set_status_and_message() {
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(ss_matrix_new(2, 2, ptr::null(), &mut m), SsStatus::NullPointer);
        assert!(last_error().contains("null"));
        let nan = [f64::NAN; 4];
        assert_eq!(ss_matrix_new(2, 2, nan.as_ptr(), &mut m), SsStatus::InvalidInput);
        assert!(m.is_null());

        let missing = CString::new("/nonexistent/x.sskm").unwrap();
        assert_eq!(ss_matrix_load(missing.as_ptr(), &mut m), SsStatus::Parse);

        let mut op = ptr::null_mut();
        assert_eq!(ss_sketch_operator_new(10, 10, 0, &mut op), SsStatus::InvalidInput);

        let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(ss_subspace_random(10, 2, 1, &mut a), SsStatus::Ok);
        assert_eq!(ss_subspace_random(11, 2, 1, &mut b), SsStatus::Ok);
        let mut aff = 0.0;
        assert_eq!(ss_principal_angles(a, b, ptr::null_mut(), 0, &mut aff, ptr::null_mut()), SsStatus::DimensionMismatch);
        assert_eq!(ss_principal_angles(a, ptr::null(), ptr::null_mut(), 0, &mut aff, ptr::null_mut()), SsStatus::NullPointer);
        let mut one = [0.0; 1];
        assert_eq!(ss_principal_angles(a, a, one.as_mut_ptr(), 1, ptr::null_mut(), ptr::null_mut()), SsStatus::BufferTooSmall);
        ss_subspace_free(a);
        ss_subspace_free(b);

        let mut est = 0.0;
        assert_eq!(ss_projected_affinity_estimate(0.5, 2, 3, 3, &mut est), SsStatus::InvalidInput);
        // Freeing NULL is a no-op.
        ss_matrix_free(ptr::null_mut());
        ss_subspace_free(ptr::null_mut());
        ss_sketch_operator_free(ptr::null_mut());
    }
}

#[test]
fn sketch_through_the_abi_matches_the_library() {
    let cosines = [0.9, 0.5, 0.1];
    let (mut x1, mut x2, mut op, mut y1, mut y2) =
        (ptr::null_mut(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(ss_subspace_pair_with_angles(40, cosines.as_ptr(), 3, 6, 7, &mut x1, &mut x2), SsStatus::Ok);
        let mut c = [0.0; 3];
        let (mut aff, mut dist) = (0.0, 0.0);
        assert_eq!(ss_principal_angles(x1, x2, c.as_mut_ptr(), 3, &mut aff, &mut dist), SsStatus::Ok);
        for (a, b) in c.iter().zip(cosines) {
            assert!((a - b).abs() <= 1e-8);
        }
        assert!((aff - 1.07).abs() <= 1e-10);
        assert!((dist - (4.5 - 1.07)).abs() <= 1e-10);

        assert_eq!(ss_sketch_operator_new(20, 40, 3, &mut op), SsStatus::Ok);
        assert_eq!(ss_sketch_operator_n(op), 20);
        assert_eq!(ss_sketch_apply(op, x1, &mut y1), SsStatus::Ok);
        assert_eq!(ss_sketch_apply(op, x2, &mut y2), SsStatus::Ok);
        let mut aff_y = 0.0;
        assert_eq!(ss_principal_angles(y1, y2, ptr::null_mut(), 0, &mut aff_y, ptr::null_mut()), SsStatus::Ok);

        let lib_op = subspace_sketch::sketch::gaussian_operator(20, 40, 3).unwrap();
        let (l1, l2, _) = subspace_sketch::subspace::generate_pair_with_angles(40, &cosines, 6, 7).unwrap();
        let ly1 = subspace_sketch::sketch::apply(&lib_op, &l1).unwrap();
        let ly2 = subspace_sketch::sketch::apply(&lib_op, &l2).unwrap();
        let expected = subspace_sketch::subspace::principal_angles(&ly1, &ly2).unwrap().affinity_sq;
        assert_eq!(aff_y.to_bits(), expected.to_bits());

        let mut basis = ptr::null_mut();
        assert_eq!(ss_subspace_basis(y1, &mut basis), SsStatus::Ok);
        assert_eq!((ss_matrix_rows(basis), ss_matrix_cols(basis)), (20, 3));
        ss_matrix_free(basis);

        let (mut oa, mut od) = (0.0, 0.0);
        assert_eq!(ss_projected_affinity_estimate(1.07, 3, 6, 20, &mut oa), SsStatus::Ok);
        assert_eq!(ss_projected_distance_estimate(3.43, 3, 6, 20, &mut od), SsStatus::Ok);
        assert!((oa - (1.07 + 0.3 * (3.0 - 1.07))).abs() <= 1e-12);
        assert!((od - (3.43 - 0.3 * (3.43 - 1.5))).abs() <= 1e-12);

        for x in [x1, x2, y1, y2] {
            ss_subspace_free(x);
        }
        ss_sketch_operator_free(op);
    }
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(ss_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
