use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wksp_core::membership::{bootstrap_member, create_workspace, MemberState};
use wksp_core::security::{self_sign, KeyPair, MembershipModel};
use wksp_core::sim::{Edit, NetConfig, PacketStore, Peer, PeerConfig, SimNet};
use wksp_core::{Name, Validity};

fn n(s: &str) -> Name {
    Name::parse(s).unwrap()
}

fn members(names: &[&str]) -> Vec<MemberState> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let forever = Validity::new(0, u64::MAX).unwrap();
    let root_key = KeyPair::from_seed([1; 32]);
    let anchor = self_sign(&root_key, &n("example.org"), 1, forever).unwrap();
    let ws = create_workspace(&n("example.org/Room"), &root_key, &anchor, MembershipModel::PeerToPeer, names[0], &mut rng).unwrap();
    let mut out = vec![ws.initiator_state(&KeyPair::from_seed([2; 32]), 0, u64::MAX).unwrap()];
    for (i, who) in names.iter().enumerate().skip(1) {
        let key = KeyPair::from_seed([10 + i as u8; 32]);
        let me = self_sign(&key, &n(who), 1, forever).unwrap();
        let inv = out[0].create_invitation(&me, u64::MAX, 0, &mut rng).unwrap();
        out.push(bootstrap_member(who, &key, &inv, &anchor, 0).unwrap());
    }
    out
}

fn cfg(seed: u64) -> PeerConfig {
    PeerConfig { seed, coalesce_ms: 0, ..PeerConfig::default() }
}

#[test]
fn edit_reaches_the_other_peer_after_one_delay() {
    let peers: Vec<Peer> = members(&["alice", "bob"])
        .into_iter()
        .enumerate()
        .map(|(i, m)| Peer::member(m, PacketStore::in_memory(), cfg(i as u64), 0).unwrap())
        .collect();
    let mut net = SimNet::new(NetConfig { delay_ms: 50, ..NetConfig::default() }, peers, 1);
    net.run_until(1000);
    net.with_node(0, |p, now, out| {
        p.edit(now, &Edit::CreateText("a.txt".into()), out).unwrap();
        p.edit(now, &Edit::Insert { path: "a.txt".into(), pos: 0, text: "hi".into() }, out).unwrap();
    });
    net.run_until(5000);
    let bob = net.node(1);
    assert_eq!(bob.doc().unwrap().text("a.txt").as_deref(), Some("hi"));
    let first = &bob.deliveries()[0];
    assert_eq!((first.user.as_str(), first.seq, first.at), ("alice", 1, 1050));
    assert!(bob.rejections().is_empty());
}

#[test]
fn restart_from_disk_restores_document_and_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let states = members(&["alice", "bob"]);
    let open = |label: &str| PacketStore::open(dir.path().join(label)).unwrap();
    let peers = vec![
        Peer::member(states[0].clone(), open("alice"), cfg(1), 0).unwrap(),
        Peer::member(states[1].clone(), open("bob"), cfg(2), 0).unwrap(),
    ];
    let mut net = SimNet::new(NetConfig::default(), peers, 3);
    net.with_node(0, |p, now, out| p.edit(now, &Edit::CreateText("a.txt".into()), out).unwrap());
    net.run_until(2000);
    net.with_node(1, |p, now, out| p.edit(now, &Edit::Insert { path: "a.txt".into(), pos: 0, text: "bob".into() }, out).unwrap());
    net.run_until(4000);
    let before = net.node(1).doc().unwrap().digest();

    net.set_online(1, false);
    let revived = Peer::member(states[1].clone(), open("bob"), cfg(2), net.now()).unwrap();
    assert_eq!(revived.doc().unwrap().digest(), before);
    assert_eq!(revived.sync().local().get("bob"), 1);
    net.replace(1, revived);
    net.set_online(1, true);
    net.with_node(1, |p, now, out| p.edit(now, &Edit::Insert { path: "a.txt".into(), pos: 3, text: "!".into() }, out).unwrap());
    net.run_until(10_000);
    assert_eq!(net.node(0).doc().unwrap().text("a.txt").as_deref(), Some("bob!"));
    assert_eq!(net.node(0).sync().local().get("bob"), 2);
}
