use std::ffi::CStr;
use std::ptr;

use adaptive_views_ffi::*;

struct Store(*mut AvStore);

impl Store {
    fn new(pages: usize) -> Self {
        let mut opts = av_store_options_default(pages);
        opts.async_mapper = 0;
        let mut s = ptr::null_mut();
        assert_eq!(unsafe { av_store_create(&opts, &mut s) }, AvStatus::Ok);
        assert!(!s.is_null());
        Store(s)
    }
}

impl Drop for Store {
    fn drop(&mut self) {
        unsafe { av_store_free(self.0) }
    }
}

fn query(s: &Store, l: u64, u: u64, full: bool) -> (Vec<AvRow>, AvQueryStats) {
    let mut r = ptr::null_mut();
    let st = unsafe {
        if full {
            av_store_query_full_scan(s.0, l, u, &mut r)
        } else {
            av_store_query(s.0, l, u, &mut r)
        }
    };
    assert_eq!(st, AvStatus::Ok);
    unsafe {
        let rows = std::slice::from_raw_parts(av_result_rows(r), av_result_len(r)).to_vec();
        let mut stats = std::mem::zeroed();
        assert_eq!(av_result_stats(r, &mut stats), AvStatus::Ok);
        av_result_free(r);
        (rows, stats)
    }
}

fn sorted(mut v: Vec<AvRow>) -> Vec<(u64, u64)> {
    v.sort_by_key(|r| r.row_id);
    v.into_iter().map(|r| (r.row_id, r.value)).collect()
}

fn last_error() -> String {
    let p = av_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn fill_query_and_update_round_trip() {
    let s = Store::new(8);
    let mut n = 0;
    assert_eq!(unsafe { av_store_num_rows(s.0, &mut n) }, AvStatus::Ok);
    assert_eq!(n, 8 * 511);
    let values: Vec<u64> = (0..n).map(|i| i * 7 % 1000).collect();
    assert_eq!(unsafe { av_store_fill(s.0, values.as_ptr(), values.len()) }, AvStatus::Ok);

    let expected: Vec<(u64, u64)> = values
        .iter()
        .enumerate()
        .filter(|(_, &v)| (100..=200).contains(&v))
        .map(|(i, &v)| (i as u64, v))
        .collect();
    let (rows, stats) = query(&s, 100, 200, false);
    assert_eq!(sorted(rows), expected);
    assert_eq!(stats.scanned_pages, 8);
    let (rows, _) = query(&s, 100, 200, true);
    assert_eq!(sorted(rows), expected);

    let mut v = 0;
    assert_eq!(unsafe { av_store_read(s.0, 3, &mut v) }, AvStatus::Ok);
    assert_eq!(v, 21);
    let ups = [AvUpdate { row_id: 3, old_value: 21, new_value: 150 }];
    assert_eq!(unsafe { av_store_apply_updates(s.0, ups.as_ptr(), 1) }, AvStatus::Ok);
    let (rows, _) = query(&s, 150, 150, false);
    assert!(rows.contains(&AvRow { row_id: 3, value: 150 }));
}

#[test]
fn views_are_created_and_reused() {
    let s = Store::new(64);
    assert_eq!(
        unsafe { av_store_fill_distribution(s.0, AvDistribution::Linear, 0, 1_000_000, 5) },
        AvStatus::Ok
    );
    let (first, stats) = query(&s, 0, 10_000, false);
    assert_eq!(stats.scanned_pages, 64);
    assert_eq!(stats.candidate, AvCandidate::Accepted);
    let mut views = 0;
    assert_eq!(unsafe { av_store_num_views(s.0, &mut views) }, AvStatus::Ok);
    assert_eq!(views, 1);

    let (again, stats) = query(&s, 0, 10_000, false);
    assert!(stats.scanned_pages < 64);
    assert_eq!(sorted(first), sorted(again));
}

#[test]
fn errors_carry_status_and_message() {
    let s = Store::new(2);
    let mut v = 0;
    assert_eq!(unsafe { av_store_read(s.0, 10_000, &mut v) }, AvStatus::OutOfBounds);
    assert!(!last_error().is_empty());

    let ups = [AvUpdate { row_id: 0, old_value: 99, new_value: 1 }];
    assert_eq!(unsafe { av_store_apply_updates(s.0, ups.as_ptr(), 1) }, AvStatus::StaleUpdate);

    let mut r = ptr::null_mut();
    assert_eq!(unsafe { av_store_query(s.0, 5, 1, &mut r) }, AvStatus::InvalidArgument);
    assert!(r.is_null());

    assert_eq!(unsafe { av_store_fill(s.0, [1u64].as_ptr(), 1) }, AvStatus::InvalidArgument);
}

#[test]
fn null_pointers_are_rejected() {
    let mut v = 0;
    assert_eq!(unsafe { av_store_read(ptr::null(), 0, &mut v) }, AvStatus::NullPointer);
    assert_eq!(last_error(), "store is null");
    let s = Store::new(1);
    assert_eq!(unsafe { av_store_read(s.0, 0, ptr::null_mut()) }, AvStatus::NullPointer);
    assert_eq!(unsafe { av_store_fill(s.0, ptr::null(), 5) }, AvStatus::NullPointer);
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { av_store_create(ptr::null(), &mut out) }, AvStatus::NullPointer);
    assert_eq!(unsafe { av_result_len(ptr::null()) }, 0);
    assert!(unsafe { av_result_rows(ptr::null()) }.is_null());
    unsafe {
        av_result_free(ptr::null_mut());
        av_store_free(ptr::null_mut());
    }
}

#[test]
fn zero_pages_is_invalid() {
    let opts = av_store_options_default(0);
    let mut s = ptr::null_mut();
    let st = unsafe { av_store_create(&opts, &mut s) };
    assert_ne!(st, AvStatus::Ok);
    assert!(s.is_null());
}

#[test]
fn status_names() {
    let name = |s| unsafe { CStr::from_ptr(av_status_name(s)) }.to_str().unwrap();
    assert_eq!(name(AvStatus::Ok), "ok");
    assert_eq!(name(AvStatus::StaleUpdate), "stale update");
}
