use std::ffi::{CStr, CString};
use std::ptr;

use dopt_ffi::*;

fn last_error() -> String {
    let p = dopt_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn graph(family: &str, n: usize) -> *mut DoptGraph {
    let name = CString::new(family).unwrap();
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { dopt_graph_new(name.as_ptr(), n, 0, &mut g) }, DoptStatus::Ok);
    g
}

#[test]
fn metropolis_on_a_path_matches_hand_weights() {
    let g = graph("path", 3);
    assert_eq!(unsafe { dopt_graph_node_count(g) }, 3);
    let rule = CString::new("metropolis").unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { dopt_matrix_new(g, rule.as_ptr(), &mut m) }, DoptStatus::Ok);
    let mut w = [0.0; 9];
    assert_eq!(unsafe { dopt_matrix_entries(m, w.as_mut_ptr(), 9) }, DoptStatus::Ok);
    // Degrees 1, 2, 1: off-diagonal 1/2 on both edges.
    let expected = [0.5, 0.5, 0.0, 0.5, 0.0, 0.5, 0.0, 0.5, 0.5];
    for (a, b) in w.iter().zip(expected) {
        assert!((a - b).abs() < 1e-15);
    }
    let mut sigma = 0.0;
    assert_eq!(unsafe { dopt_matrix_sigma2(m, &mut sigma) }, DoptStatus::Ok);
    // Eigenvalues 1, 1/2, -1/2.
    assert!((sigma - 0.5).abs() < 1e-12, "{sigma}");
    let mut small = [0.0; 4];
    assert_eq!(unsafe { dopt_matrix_entries(m, small.as_mut_ptr(), 4) }, DoptStatus::BufferTooSmall);
    unsafe {
        dopt_matrix_free(m);
        dopt_graph_free(g);
    }
}

#[test]
fn consensus_run_reports_time_and_state() {
    let g = graph("complete", 4);
    let rule = CString::new("lazy-metropolis").unwrap();
    let x0 = [1.0, 2.0, 3.0, 6.0];
    let mut run = ptr::null_mut();
    assert_eq!(unsafe { dopt_consensus(g, rule.as_ptr(), x0.as_ptr(), 4, 1e-6, 0, &mut run) }, DoptStatus::Ok);
    let mut t = 0;
    assert_eq!(unsafe { dopt_run_t_eps(run, &mut t) }, DoptStatus::Ok);
    let len = unsafe { dopt_run_len(run) };
    assert_eq!(len, t + 1);
    let mut errors = vec![0.0; len];
    assert_eq!(unsafe { dopt_run_errors(run, errors.as_mut_ptr(), len) }, DoptStatus::Ok);
    assert!(errors[len - 1] <= 1e-6 * errors[0]);
    let mut x = [0.0; 4];
    assert_eq!(unsafe { dopt_run_final_state(run, x.as_mut_ptr(), 4) }, DoptStatus::Ok);
    for v in x {
        assert!((v - 3.0).abs() < 1e-5);
    }
    unsafe {
        dopt_run_free(run);
        dopt_graph_free(g);
    }
}

#[test]
fn capped_run_is_not_converged() {
    let g = graph("path", 10);
    let rule = CString::new("lazy-metropolis").unwrap();
    let x0: Vec<f64> = (0..10).map(f64::from).collect();
    let mut run = ptr::null_mut();
    assert_eq!(unsafe { dopt_consensus(g, rule.as_ptr(), x0.as_ptr(), 10, 1e-9, 5, &mut run) }, DoptStatus::Ok);
    let mut t = 0;
    assert_eq!(unsafe { dopt_run_t_eps(run, &mut t) }, DoptStatus::NotConverged);
    assert_eq!(unsafe { dopt_run_len(run) }, 6);
    unsafe {
        dopt_run_free(run);
        dopt_graph_free(g);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let bad = CString::new("moebius").unwrap();
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { dopt_graph_new(bad.as_ptr(), 5, 0, &mut g) }, DoptStatus::Config);
    assert!(last_error().contains("moebius"));
    assert!(g.is_null());

    let cycle = graph("directed-cycle", 4);
    let rule = CString::new("metropolis").unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { dopt_matrix_new(cycle, rule.as_ptr(), &mut m) }, DoptStatus::GraphError);
    assert!(last_error().contains("undirected"));

    assert_eq!(unsafe { dopt_graph_new(ptr::null(), 5, 0, &mut g) }, DoptStatus::NullPointer);
    let (from, to) = ([0usize, 2], [1usize, 3]);
    let mut split = ptr::null_mut();
    assert_eq!(unsafe { dopt_graph_from_edges(4, false, from.as_ptr(), to.as_ptr(), 2, &mut split) }, DoptStatus::Ok);
    assert!(!unsafe { dopt_graph_is_connected(split) });
    unsafe {
        dopt_graph_free(split);
        dopt_graph_free(cycle);
    }
}

#[test]
fn push_sum_averages_over_a_directed_cycle() {
    let g = graph("directed-cycle", 5);
    assert!(unsafe { dopt_graph_is_directed(g) });
    let rule = CString::new("push-sum").unwrap();
    let x0 = [5.0, 0.0, 0.0, 0.0, 0.0];
    let mut run = ptr::null_mut();
    assert_eq!(unsafe { dopt_consensus(g, rule.as_ptr(), x0.as_ptr(), 5, 1e-10, 0, &mut run) }, DoptStatus::Ok);
    let mut z = [0.0; 5];
    assert_eq!(unsafe { dopt_run_final_state(run, z.as_mut_ptr(), 5) }, DoptStatus::Ok);
    for v in z {
        assert!((v - 1.0).abs() <= 5e-10, "{v}");
    }
    unsafe {
        dopt_run_free(run);
        dopt_graph_free(g);
    }
}

#[test]
fn json_experiment_returns_a_summary() {
    let cfg = CString::new(r#"{"command": "consensus", "graph": {"family": "cycle", "n": 6}, "eps": 1e-4}"#).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { dopt_run_experiment(cfg.as_ptr(), &mut out) }, DoptStatus::Ok);
    let text = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_owned();
    unsafe { dopt_string_free(out) };
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["stop_reason"], "converged");
    assert_eq!(v["n"], 6);

    let bad = CString::new(r#"{"command": "consensus", "graph": {"family": "cycle"}}"#).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { dopt_run_experiment(bad.as_ptr(), &mut out) }, DoptStatus::Config);
    assert!(last_error().contains("graph"));
    assert!(out.is_null());
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(dopt_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
