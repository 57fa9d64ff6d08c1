//! Key pools, one-time pad and relay composition.

use proptest::prelude::*;
use qkdnet_core::fabric::{relay_compose, FabricError};
use qkdnet_core::keystore::{otp_decrypt, otp_encrypt, KeyError, KeyPool, Lane, NodePair, PairPools, UseKind};

fn filled(x: &str, y: &str, key: &[u8]) -> PairPools {
    let mut p = PairPools::new(NodePair::new(x, y).unwrap());
    p.deposit(key, key, 1);
    p
}

#[test]
fn one_kib_round_trip_zeroizes() {
    let key: Vec<u8> = (0..4096u32).map(|i| (i.wrapping_mul(2654435761) >> 13) as u8).collect();
    let mut p = filled("A", "B", &key);
    let plain: Vec<u8> = (0..1024u32).map(|i| (i % 251) as u8).collect();
    let msg = otp_encrypt(&mut p.a, &plain).unwrap();
    assert_ne!(msg.ciphertext, plain);
    assert_eq!(otp_decrypt(&mut p.b, &msg).unwrap(), plain);
    // Forward lane: even offsets 0..2048.
    assert_eq!(p.a.cursor(Lane::Forward), 2048);
    assert_eq!(p.a.spent(), 1024);
    assert_eq!(p.b.spent(), 1024);
    for off in (0..2048).step_by(2) {
        assert_eq!(p.a.raw_byte(off), Some(0));
        assert_eq!(p.b.raw_byte(off), Some(0));
    }
    assert_eq!(p.a.raw_byte(1), Some(key[1]));
    assert!(matches!(
        otp_decrypt(&mut p.b, &msg),
        Err(KeyError::KeyReuseRefused { offset: 0 })
    ));
}

#[test]
fn exhaustion_reports_shortfall() {
    let mut p = filled("A", "B", &[7; 10]);
    let err = otp_encrypt(&mut p.b, &[0; 8]).unwrap_err();
    assert_eq!(
        err,
        KeyError::KeyExhausted {
            pair: "A<->B".into(),
            shortfall: 3
        }
    );
    assert_eq!(p.b.spent(), 0);
}

#[derive(Debug, Clone)]
enum Step {
    Deposit(Vec<u8>),
    Send { from_a: bool, len: usize },
}

fn step() -> impl Strategy<Value = Step> {
    prop_oneof![
        prop::collection::vec(any::<u8>(), 0..64).prop_map(Step::Deposit),
        (any::<bool>(), 0usize..40).prop_map(|(from_a, len)| Step::Send { from_a, len }),
    ]
}

proptest! {
    #[test]
    fn interleaved_traffic_keeps_copies_in_step(steps in prop::collection::vec(step(), 1..200)) {
        let mut p = PairPools::new(NodePair::new("Wanxi", "Meilan").unwrap());
        let mut deposited = 0u64;
        let mut sent = [0u64; 2];
        for s in &steps {
            match s {
                Step::Deposit(k) => {
                    p.deposit(k, k, deposited);
                    deposited += k.len() as u64;
                }
                Step::Send { from_a, len } => {
                    let plain = vec![0xA5; *len];
                    let (tx, rx) = if *from_a { (&mut p.a, &mut p.b) } else { (&mut p.b, &mut p.a) };
                    let lane = tx.send_lane();
                    match otp_encrypt(tx, &plain) {
                        Ok(msg) => {
                            prop_assert_eq!(Lane::from_offset(msg.offset), lane);
                            prop_assert_eq!(otp_decrypt(rx, &msg).unwrap(), plain);
                            sent[lane.index()] += *len as u64;
                        }
                        Err(KeyError::KeyExhausted { shortfall, .. }) => {
                            prop_assert!(shortfall > 0);
                            prop_assert!((*len as u64) > tx.available(lane));
                        }
                        Err(e) => return Err(TestCaseError::fail(format!("{e}"))),
                    }
                }
            }
            // Both copies agree on everything but the owner.
            for lane in [Lane::Forward, Lane::Backward] {
                prop_assert_eq!(p.a.cursor(lane), p.b.cursor(lane));
                prop_assert_eq!(p.a.available(lane), p.b.available(lane));
            }
            prop_assert_eq!(p.a.total(), deposited);
            prop_assert_eq!(p.a.spent(), sent[0] + sent[1]);
            prop_assert_eq!(p.b.spent(), sent[0] + sent[1]);
            prop_assert!(p.a.consumed() <= p.a.reserved());
            prop_assert!(p.a.reserved() <= p.a.total() + 1);
            let lane_bytes = |l: Lane| (deposited + 1 - l.index() as u64) / 2;
            for lane in [Lane::Forward, Lane::Backward] {
                prop_assert_eq!(p.a.available(lane), lane_bytes(lane) - sent[lane.index()]);
            }
        }
    }

    #[test]
    fn out_of_order_receive_never_reuses(lens in prop::collection::vec(1usize..20, 2..10), skip in 0usize..8) {
        let total: usize = lens.iter().sum::<usize>() * 2 + 2;
        let key: Vec<u8> = (0..total).map(|i| i as u8).collect();
        let mut p = filled("A", "B", &key);
        let msgs: Vec<_> = lens.iter().map(|&n| otp_encrypt(&mut p.a, &vec![1; n]).unwrap()).collect();
        let skip = skip % msgs.len();
        // Deliver one message late: the bytes it needed are gone by then.
        for (i, m) in msgs.iter().enumerate() {
            if i != skip {
                prop_assert!(otp_decrypt(&mut p.b, m).is_ok());
            }
        }
        let late = otp_decrypt(&mut p.b, &msgs[skip]);
        if skip + 1 < msgs.len() {
            let refused = matches!(late, Err(KeyError::KeyReuseRefused { .. }));
            prop_assert!(refused);
            let skipped = p.b.usage().iter().filter(|u| u.kind == UseKind::Skipped).count();
            prop_assert_eq!(skipped, 1);
        } else {
            prop_assert!(late.is_ok());
        }
        for m in &msgs {
            let replay = otp_decrypt(&mut p.b, m);
            let refused = matches!(replay, Err(KeyError::KeyReuseRefused { .. }));
            prop_assert!(refused);
        }
    }

    #[test]
    fn relay_keys_agree_and_accounting_is_exact(
        k1 in prop::collection::vec(any::<u8>(), 0..200),
        k2 in prop::collection::vec(any::<u8>(), 0..200),
        len in 0usize..120,
    ) {
        let mut ar = filled("Feixi", "USTC", &k1);
        let mut rb = filled("USTC", "Wanan", &k2);
        let (ar0, rb0) = (ar.clone(), rb.clone());
        match relay_compose(&mut ar, &mut rb, "USTC", len) {
            Ok(out) => {
                prop_assert_eq!(&out.key_a, &out.key_b);
                prop_assert_eq!(out.key_a.len(), len);
                prop_assert_eq!(out.ledger.len(), 4);
                for copy in [&ar.a, &ar.b, &rb.a, &rb.b] {
                    prop_assert_eq!(copy.spent(), len as u64);
                }
                // Masked value reveals nothing without K2: it is K1 xor K2.
                let k1_used: Vec<u8> = (0..len).map(|i| k1[out.message.offsets.0 as usize + 2 * i]).collect();
                let k2_used: Vec<u8> = (0..len).map(|i| k2[out.message.offsets.1 as usize + 2 * i]).collect();
                let m: Vec<u8> = k1_used.iter().zip(&k2_used).map(|(x, y)| x ^ y).collect();
                prop_assert_eq!(&out.message.masked, &m);
                prop_assert_eq!(&out.key_a, &k1_used);
            }
            Err(FabricError::Key(KeyError::KeyExhausted { .. })) => {
                prop_assert_eq!(&ar, &ar0);
                prop_assert_eq!(&rb, &rb0);
            }
            Err(e) => return Err(TestCaseError::fail(format!("{e}"))),
        }
    }
}

#[test]
fn relay_needs_distinct_far_ends() {
    let mut ar = filled("A", "R", &[1; 8]);
    let mut rb = filled("A", "R", &[1; 8]);
    assert!(matches!(
        relay_compose(&mut ar, &mut rb, "R", 2),
        Err(FabricError::InvalidRequest(_))
    ));
    assert!(relay_compose(&mut ar, &mut rb, "Z", 2).is_err());
}

#[test]
fn pool_rebuilt_from_parts_continues() {
    let mut p = filled("A", "B", &[9; 32]);
    let m = otp_encrypt(&mut p.a, &[1, 2, 3]).unwrap();
    otp_decrypt(&mut p.b, &m).unwrap();
    let mut a = p.a.clone();
    a.compact();
    let rebuilt = KeyPool::from_parts(
        a.pair().clone(),
        a.owner(),
        a.base(),
        a.stored_bytes().to_vec(),
        a.blocks().to_vec(),
        [a.cursor(Lane::Forward), a.cursor(Lane::Backward)],
    )
    .unwrap();
    assert_eq!(rebuilt.available(Lane::Forward), p.a.available(Lane::Forward));
    assert_eq!(rebuilt.available(Lane::Backward), p.a.available(Lane::Backward));
    assert!(KeyPool::from_parts(a.pair().clone(), "A", 0, vec![0; 4], vec![], [1, 1]).is_err());
}
