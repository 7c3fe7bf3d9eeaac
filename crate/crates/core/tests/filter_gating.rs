//! Random knock/probe interleavings against one server NIC, checked
//! against a plain map of admitted flows.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use cloaknic::frames::*;
use cloaknic::knock::{seal_knock, KnockFields, SharedKey};
use cloaknic::nic::{CloakingNic, DropReason, Fate, NicConfig};
use proptest::prelude::*;

const SERVER_MAC: MacAddress = MacAddress([2, 0, 0, 0, 0, 9]);
const SERVER_IP: Ipv4Addr = Ipv4Addr::new(10, 0, 0, 9);
const TTL: u64 = 20;

fn client_ip(i: u8) -> Ipv4Addr {
    Ipv4Addr::new(10, 0, 1, i)
}

fn key(i: u8) -> SharedKey {
    SharedKey::new([i.wrapping_add(1); 32])
}

#[derive(Debug, Clone)]
enum Op {
    /// Knock from client `who` for `port`; `valid` false seals under a wrong key.
    Knock {
        who: u8,
        port: u16,
        valid: bool,
    },
    Probe {
        who: u8,
        port: u16,
        dst: u16,
    },
}

fn op() -> impl Strategy<Value = Op> {
    let port = prop_oneof![Just(40000u16), Just(40001), 1u16..];
    prop_oneof![
        (0u8..4, port.clone(), prop::bool::weighted(0.8))
            .prop_map(|(who, port, valid)| Op::Knock { who, port, valid }),
        (0u8..4, port, any::<u16>()).prop_map(|(who, port, dst)| Op::Probe { who, port, dst }),
    ]
}

fn frame(who: u8, payload: Ipv4Payload) -> Vec<u8> {
    serialize_frame(&EthernetFrame::ipv4(
        SERVER_MAC,
        MacAddress([2, 0, 0, 0, 1, who]),
        Ipv4Packet::new(client_ip(who), SERVER_IP, 0, payload),
    ))
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn delivery_iff_admitted(ops in prop::collection::vec((0u64..8, op()), 1..120)) {
        // clients 0..3 hold keys; client 3 does not
        let mut cfg = NicConfig::new(SERVER_MAC, SERVER_IP);
        cfg.filter_ttl_seconds = TTL;
        for i in 0..3 {
            cfg = cfg.with_key(client_ip(i), key(i));
        }
        let mut nic = CloakingNic::new(cfg).unwrap();
        let mut model: BTreeMap<(Ipv4Addr, u16), u64> = BTreeMap::new();
        let mut now = 0u64;
        let mut nonce = 0u64;
        for (dt, op) in ops {
            now += dt;
            nic.tick(now);
            model.retain(|_, exp| now <= *exp);
            match op {
                Op::Knock { who, port, valid } => {
                    nonce += 1;
                    let k = if valid { key(who) } else { key(who + 100) };
                    let fields = KnockFields::new(client_ip(who), port, now).unwrap();
                    let sealed = seal_knock(&k, nonce.to_be_bytes(), &fields).to_bytes().to_vec();
                    let icmp = IcmpMessage::echo_request(port, 0, sealed);
                    let a = nic.on_wire_receive(&frame(who, Ipv4Payload::Icmp(icmp)), now);
                    prop_assert!(a.tx_frames.is_empty());
                    let accepted = matches!(a.dispositions[0].fate, Fate::KnockAccepted(_));
                    prop_assert_eq!(accepted, valid && who < 3);
                    if accepted {
                        model.insert((client_ip(who), port), now + TTL);
                    }
                }
                Op::Probe { who, port, dst } => {
                    let syn = TransportView::tcp_syn(port, dst, 1);
                    let a = nic.on_wire_receive(&frame(who, Ipv4Payload::Transport(syn)), now);
                    prop_assert!(a.tx_frames.is_empty());
                    let admitted = model.contains_key(&(client_ip(who), port));
                    match a.dispositions[0].fate {
                        Fate::Delivered => prop_assert!(admitted),
                        Fate::Dropped(DropReason::NoFilterMatch) => prop_assert!(!admitted),
                        other => prop_assert!(false, "unexpected fate {:?}", other),
                    }
                    if admitted {
                        model.insert((client_ip(who), port), now + TTL);
                    }
                }
            }
            let live: BTreeMap<_, _> = nic.filter().entries().map(|e| ((e.src_ip, e.src_port), e.expires_at)).collect();
            prop_assert_eq!(&live, &model);
        }
    }
}
