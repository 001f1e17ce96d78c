use std::io::Cursor;

use mgsim_core::consensus::{run_episode_sync, StateMsg};
use mgsim_core::netsim::codec::{read_frame, write_frame, HEADER_LEN};
use mgsim_core::netsim::qos::sample_retransmissions;
use mgsim_core::netsim::tcp::TcpCluster;
use mgsim_core::netsim::{decode_frame, encode_frame, sample_latency, Content, Envelope, MsgType, QosConfig};
use mgsim_core::topology::{metropolis_weights, CommGraph};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
        Just(0.0),
        Just(-0.0),
        Just(f64::MIN_POSITIVE),
        Just(f64::MAX),
    ]
}

fn envelope() -> impl Strategy<Value = Envelope> {
    let content = prop_oneof![
        finite().prop_map(Content::Scalar),
        (0usize..64, any::<u64>(), finite()).prop_map(|(sender, round, value)| Content::State(StateMsg { sender, round, value })),
    ];
    (prop_oneof![Just(MsgType::Request), Just(MsgType::Result)], any::<u64>(), content)
        .prop_map(|(msg_type, msg_id, content)| Envelope { msg_type, msg_id, content })
}

fn same_bits(a: &Envelope, b: &Envelope) -> bool {
    let bits = |c: &Content| match *c {
        Content::Scalar(v) => (None, v.to_bits()),
        Content::State(m) => (Some((m.sender, m.round)), m.value.to_bits()),
    };
    a.msg_type == b.msg_type && a.msg_id == b.msg_id && bits(&a.content) == bits(&b.content)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn frames_round_trip(env in envelope()) {
        let frame = encode_frame(&env).unwrap();
        let declared = u32::from_be_bytes(frame[..HEADER_LEN].try_into().unwrap()) as usize;
        prop_assert_eq!(declared, frame.len() - HEADER_LEN);
        let back = decode_frame(&frame).unwrap();
        prop_assert!(same_bits(&env, &back), "{:?} vs {:?}", env, back);
    }

    #[test]
    fn stream_round_trip(envs in proptest::collection::vec(envelope(), 0..8)) {
        let mut buf = Vec::new();
        for e in &envs {
            write_frame(&mut buf, e).unwrap();
        }
        let mut r = Cursor::new(buf);
        for e in &envs {
            let got = read_frame(&mut r).unwrap().unwrap();
            prop_assert!(same_bits(e, &got));
        }
        prop_assert!(read_frame(&mut r).unwrap().is_none());
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
        let _ = decode_frame(&bytes);
    }
}

#[test]
fn latency_statistics() {
    let qos = QosConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let draws: Vec<f64> = (0..10_000).map(|_| sample_latency(&qos, &mut rng)).collect();
    let min = draws.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = draws.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    assert!(min >= 0.002 && max <= 0.010);
    assert!((mean - 0.006).abs() < 2e-4, "{mean}");
}

#[test]
fn retransmission_delay_mean() {
    let qos = QosConfig { loss_prob: 0.5, retransmit_timeout: 0.05, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 20_000;
    let extra: f64 = (0..n).map(|_| f64::from(sample_retransmissions(&qos, &mut rng)) * 0.05).sum::<f64>() / n as f64;
    // geometric: p / (1 - p) lost attempts on average
    assert!((extra - 0.05).abs() < 0.003, "{extra}");
}

#[test]
fn tcp_episode_matches_batch() {
    let g = CommGraph::reference();
    let w = metropolis_weights(&g);
    let qos = QosConfig { latency_min: 0.0001, latency_max: 0.0005, ..Default::default() };
    let mut cluster = TcpCluster::connect(&g, 0, qos).unwrap();
    let x = [1.0, 2.0, 3.0, 4.0, 5.0];
    for _ in 0..2 {
        let got = cluster.run_episode(&w, &x, 50).unwrap();
        assert_eq!(got.values, run_episode_sync(&x, &w, 50).values);
        assert!(got.duration > 0.0);
    }
}

#[test]
fn tcp_rejects_wrong_dimension() {
    let g = CommGraph::reference();
    let w = metropolis_weights(&g);
    let mut cluster = TcpCluster::connect(&g, 0, QosConfig::default()).unwrap();
    assert!(cluster.run_episode(&w, &[1.0, 2.0], 5).is_err());
}
