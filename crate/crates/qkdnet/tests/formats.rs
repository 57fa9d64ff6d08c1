//! Stats files, analysis tables and pool files.

use std::fs::File;
use std::path::PathBuf;

use proptest::prelude::*;
use qkdnet::poolfile::{read_pool, write_pool, PoolFileError};
use qkdnet::report::{analyze_records, write_analysis};
use qkdnet::stats_file::{read_stats, StatsFileError};
use qkdnet_core::decoy::RateSettings;
use qkdnet_core::fixtures::{self, MEASURED_LINKS};
use qkdnet_core::keystore::{otp_decrypt, otp_encrypt, KeyPool, Lane, NodePair, PairPools};
use qkdnet_core::IntensitySettings;

fn repo_file(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn measured() -> Vec<qkdnet::stats_file::StatsRecord> {
    read_stats(
        File::open(repo_file("fixtures/measured_links.csv")).unwrap(),
        fixtures::RUN_SECONDS,
        [6, 1, 1],
    )
    .unwrap()
}

#[test]
fn fixture_file_matches_builtin_table() {
    let records = measured();
    assert_eq!(records.len(), MEASURED_LINKS.len());
    let s = IntensitySettings::default();
    for (r, m) in records.iter().zip(&MEASURED_LINKS) {
        assert_eq!(r.name, m.name());
        let want = m.stats(&s);
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-15 * a.abs().max(b.abs());
        let (x, y) = (&r.stats, &want);
        for (a, b) in [
            (x.q_mu, y.q_mu),
            (x.e_mu, y.e_mu),
            (x.q_nu, y.q_nu),
            (x.e_nu, y.e_nu),
            (x.y0, y.y0),
        ] {
            assert!(close(a, b), "{}: {a} vs {b}", r.name);
        }
        assert_eq!((x.mu, x.nu, x.n_mu, x.n_nu, x.n_0), (y.mu, y.nu, y.n_mu, y.n_nu, y.n_0));
        assert_eq!(r.clock_hz, m.clock_hz);
        assert_eq!(r.duty_cycle, fixtures::DUTY_CYCLE);
    }
}

#[test]
fn every_table_row_has_a_positive_rate() {
    let rows = analyze_records(&measured(), &RateSettings::default());
    assert_eq!(rows.len(), 13);
    for r in &rows {
        assert_eq!(r.status, "ok", "{}", r.name);
        assert!(r.final_bps.unwrap() > 0.0, "{}", r.name);
        assert!(r.final_bps_active.unwrap() > r.final_bps.unwrap());
    }
    // Line numbers point into the file past the comment lines.
    assert_eq!(rows[0].line, 4);
}

#[test]
fn empty_file_gives_empty_table() {
    let records = read_stats(
        "name,mu,nu,q_mu,e_mu,q_nu,e_nu,y0,clock_hz\n".as_bytes(),
        400.0,
        [6, 1, 1],
    )
    .unwrap();
    assert!(records.is_empty());
    let rows = analyze_records(&records, &RateSettings::default());
    let mut out = Vec::new();
    write_analysis(&rows, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("name,line,status,"));
    assert!(read_stats("".as_bytes(), 400.0, [6, 1, 1]).unwrap().is_empty());
}

#[test]
fn inverted_intensities_are_flagged_not_fatal() {
    let text = "name,mu,nu,q_mu,e_mu,q_nu,e_nu,y0,clock_hz\n\
                good,0.6,0.2,8.21e-3,0.0158,2.71e-3,0.04,2.03e-4,4e6\n\
                bad,0.2,0.6,8.21e-3,0.0158,2.71e-3,0.04,2.03e-4,4e6\n";
    let rows = analyze_records(
        &read_stats(text.as_bytes(), 400.0, [6, 1, 1]).unwrap(),
        &RateSettings::default(),
    );
    assert_eq!(rows[0].status, "ok");
    assert!(rows[1].status.contains("intensity"), "{}", rows[1].status);
    assert_eq!(rows[1].final_bps, None);
    assert_eq!(rows[1].line, 3);
    let mut out = Vec::new();
    write_analysis(&rows, &mut out).unwrap();
    let bad = String::from_utf8(out).unwrap().lines().nth(2).unwrap().to_string();
    assert!(bad.starts_with("bad,3,"), "{bad}");
    assert!(bad.contains(",,,,"));
}

#[test]
fn malformed_row_reports_its_line() {
    let text = "name,mu,nu,q_mu,e_mu,q_nu,e_nu,y0,clock_hz\n\
                # comment\n\
                x,0.6,0.2,oops,0.01,1e-3,0.04,1e-4,4e6\n";
    match read_stats(text.as_bytes(), 400.0, [6, 1, 1]) {
        Err(StatsFileError::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
}

#[test]
fn explicit_counts_override_the_budget() {
    let text = "name,mu,nu,q_mu,e_mu,q_nu,e_nu,y0,clock_hz,n_mu,n_nu,n_0\n\
                x,0.6,0.2,8e-3,0.015,2.7e-3,0.04,2e-4,4e6,600,100,100\n";
    let r = &read_stats(text.as_bytes(), 400.0, [6, 1, 1]).unwrap()[0];
    assert_eq!((r.stats.n_mu, r.stats.n_nu, r.stats.n_0), (600, 100, 100));
}

fn used_pools(key: &[u8], sends: &[(bool, usize)]) -> PairPools {
    let mut p = PairPools::new(NodePair::new("Wanxi", "USTC").unwrap());
    p.deposit(key, key, 42);
    for &(from_a, len) in sends {
        let (tx, rx) = if from_a {
            (&mut p.a, &mut p.b)
        } else {
            (&mut p.b, &mut p.a)
        };
        if let Ok(m) = otp_encrypt(tx, &vec![0; len]) {
            otp_decrypt(rx, &m).unwrap();
        }
    }
    p
}

proptest! {
    #[test]
    fn pool_files_round_trip(
        key in prop::collection::vec(any::<u8>(), 0..600),
        sends in prop::collection::vec((any::<bool>(), 0usize..50), 0..20),
    ) {
        let p = used_pools(&key, &sends);
        for copy in [&p.a, &p.b] {
            let mut buf = Vec::new();
            write_pool(copy, &mut buf).unwrap();
            let back = read_pool(buf.as_slice()).unwrap();
            let mut compacted = copy.clone();
            compacted.compact();
            prop_assert_eq!(back.pair(), copy.pair());
            prop_assert_eq!(back.owner(), copy.owner());
            prop_assert_eq!(back.stored_bytes(), compacted.stored_bytes());
            prop_assert_eq!(back.blocks(), copy.blocks());
            for lane in [Lane::Forward, Lane::Backward] {
                prop_assert_eq!(back.cursor(lane), copy.cursor(lane));
                prop_assert_eq!(back.available(lane), copy.available(lane));
            }
            // Writing the reloaded pool reproduces the file.
            let mut again = Vec::new();
            write_pool(&back, &mut again).unwrap();
            prop_assert_eq!(again, buf);
        }
    }

    #[test]
    fn truncated_pool_files_are_rejected(cut in 0usize..100) {
        let p = used_pools(&[5; 64], &[(true, 3)]);
        let mut buf = Vec::new();
        write_pool(&p.a, &mut buf).unwrap();
        let cut = cut % buf.len();
        prop_assert!(read_pool(&buf[..cut]).is_err());
    }
}

#[test]
fn reloaded_pools_keep_refusing_old_offsets() {
    let mut p = used_pools(&[9; 40], &[]);
    let m = otp_encrypt(&mut p.a, b"hello").unwrap();
    otp_decrypt(&mut p.b, &m).unwrap();
    let mut buf = Vec::new();
    write_pool(&p.b, &mut buf).unwrap();
    let mut b: KeyPool = read_pool(buf.as_slice()).unwrap();
    assert!(otp_decrypt(&mut b, &m).is_err());
}

#[test]
fn corrupted_watermark_is_detected() {
    let p = used_pools(&[9; 40], &[(true, 4)]);
    let mut buf = Vec::new();
    write_pool(&p.a, &mut buf).unwrap();
    // consumed watermark sits right after the three names
    let names = 2 + "USTC".len() + 2 + "Wanxi".len() + 2 + p.a.owner().len();
    buf[8 + names] ^= 1;
    assert!(matches!(read_pool(buf.as_slice()), Err(PoolFileError::Corrupt(_))));
    buf[8 + names] ^= 1;
    buf.push(0);
    assert!(matches!(read_pool(buf.as_slice()), Err(PoolFileError::Corrupt(_))));
}
