//! Well-formed and malicious packets checked against the workspace trust
//! rules. Shared with the acceptance suite.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wksp_core::membership::{bootstrap_member, create_workspace, MemberState};
use wksp_core::name::{make_blob_name, make_data_name, make_invite_name};
use wksp_core::security::{
    compile_schema, issue_cert, self_sign, sign_data, workspace_rules, CertStore, Certificate, KeyPair,
    MembershipModel, Validator,
};
use wksp_core::{Component, ContentType, DataPacket, Name, Validity};

pub struct Case {
    pub name: &'static str,
    pub expect_accept: bool,
    /// `Ok` if accepted, else the rejection reason.
    pub outcome: Result<(), String>,
}

impl Case {
    pub fn correct(&self) -> bool {
        self.outcome.is_ok() == self.expect_accept
    }
}

const NOW: u64 = 10_000;
const SHORT: u64 = 5_000;

fn n(s: &str) -> Name {
    Name::parse(s).unwrap()
}

fn forever() -> Validity {
    Validity::new(0, u64::MAX).unwrap()
}

struct World {
    ws: Name,
    anchor: Certificate,
    instance_key: KeyPair,
    instance_cert: Certificate,
    alice: MemberState,
    bob: MemberState,
    /// Invited with a lifetime ending before `NOW`.
    carol: MemberState,
    bob_invite: DataPacket,
    rng: ChaCha8Rng,
}

fn world(model: MembershipModel) -> World {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let ws = n("yourworkspaces.app/MeetRoom");
    let root_key = KeyPair::from_seed([1; 32]);
    let anchor = self_sign(&root_key, &n("yourworkspaces.app"), 1, forever()).unwrap();
    let inst = create_workspace(&ws, &root_key, &anchor, model, "alice", &mut rng).unwrap();
    let alice_key = KeyPair::from_seed([2; 32]);
    let mut alice = inst.initiator_state(&alice_key, 0, u64::MAX).unwrap();
    let personal = |seed: u8, id: &str| {
        let k = KeyPair::from_seed([seed; 32]);
        let c = self_sign(&k, &n(id), 1, forever()).unwrap();
        (k, c)
    };
    let (bob_key, bob_self) = personal(3, "bob");
    let bob_invite = alice.create_invitation(&bob_self, u64::MAX, 0, &mut rng).unwrap();
    let bob = bootstrap_member("bob", &bob_key, &bob_invite, &anchor, 0).unwrap();
    let (carol_key, carol_self) = personal(4, "carol");
    let carol_invite = alice.create_invitation(&carol_self, SHORT, 0, &mut rng).unwrap();
    let carol = bootstrap_member("carol", &carol_key, &carol_invite, &anchor, 0).unwrap();
    World {
        ws,
        anchor,
        instance_key: inst.instance_key.clone(),
        instance_cert: inst.instance_cert.clone(),
        alice,
        bob,
        carol,
        bob_invite,
        rng,
    }
}

impl World {
    fn validator(&self, model: MembershipModel) -> Validator {
        Validator::new(compile_schema(workspace_rules(&self.ws, self.anchor.name(), model, "alice").unwrap()).unwrap())
    }

    fn store(&self, extra: &[&Certificate]) -> CertStore {
        let mut s = CertStore::new();
        s.add_anchor(self.anchor.clone());
        for m in [&self.alice, &self.bob, &self.carol] {
            for c in m.cert_chain() {
                s.insert(c);
            }
        }
        for c in extra {
            s.insert((*c).clone());
        }
        s
    }

    fn publication(&self, user: &str, seq: u64, at: u64) -> DataPacket {
        DataPacket::unsigned(
            make_data_name(&self.ws, user, seq).unwrap(),
            ContentType::Blob,
            b"ciphertext".to_vec(),
            Validity::starting_at(at, 1000),
        )
    }

    fn check(&self, p: &DataPacket, extra: &[&Certificate]) -> Result<(), String> {
        self.validator(MembershipModel::PeerToPeer)
            .validate(&mut self.store(extra), p, NOW)
            .map(|_| ())
            .map_err(|e| e.to_string())
    }
}

fn case(name: &'static str, expect_accept: bool, outcome: Result<(), String>) -> Case {
    Case { name, expect_accept, outcome }
}

pub fn cases() -> Vec<Case> {
    let mut w = world(MembershipModel::PeerToPeer);
    let mut v = Vec::new();

    // Well-formed material.
    let alice_pub = w.alice.sign(w.publication("alice", 1, NOW));
    v.push(case("alice publication", true, w.check(&alice_pub, &[])));
    let bob_pub = w.bob.sign(w.publication("bob", 1, NOW));
    v.push(case("bob publication", true, w.check(&bob_pub, &[])));
    v.push(case("invitation by alice", true, w.check(&w.bob_invite, &[])));
    v.push(case("instance certificate", true, w.check(w.instance_cert.packet(), &[])));
    v.push(case("bob workspace certificate", true, w.check(w.bob.workspace_cert.packet(), &[])));
    v.push(case("bob endorsement", true, w.check(w.bob.endorsement.packet(), &[])));
    let seg = w.bob.sign(DataPacket::unsigned(
        make_blob_name(&w.ws, "bob", 1).unwrap().child(Component::segment(0)),
        ContentType::Blob,
        vec![1, 2, 3],
        Validity::starting_at(NOW, 1000),
    ));
    v.push(case("bob blob segment", true, w.check(&seg, &[])));
    let carol_early = w.carol.sign(w.publication("carol", 1, 1000));
    v.push(case("carol publication before expiry", true, w.check(&carol_early, &[])));

    // Publications signed by someone else's workspace key.
    let forged = w.alice.sign(w.publication("bob", 2, NOW));
    v.push(case("bob name signed by alice", false, w.check(&forged, &[])));
    let forged = w.bob.sign(w.publication("alice", 9, NOW));
    v.push(case("alice name signed by bob", false, w.check(&forged, &[])));
    let forged = w.alice.sign(DataPacket::unsigned(
        make_blob_name(&w.ws, "bob", 2).unwrap().child(Component::segment(0)),
        ContentType::Blob,
        vec![0],
        Validity::starting_at(NOW, 1000),
    ));
    v.push(case("bob segment signed by alice", false, w.check(&forged, &[])));

    // Invitation under alice's name signed by bob.
    let mut inv = w.bob_invite.clone();
    inv.name = make_invite_name(&w.ws, "alice", 9).unwrap();
    let inv = w.bob.sign(inv);
    v.push(case("alice invitation signed by bob", false, w.check(&inv, &[])));
    let mut inv = w.bob_invite.clone();
    inv.content.push(0);
    v.push(case("invitation with altered content", false, w.check(&inv, &[])));
    let mut rng = w.rng.clone();
    let mut forged_inviter = w.bob.clone();
    forged_inviter.username = "alice".into();
    let dave = self_sign(&KeyPair::from_seed([5; 32]), &n("dave"), 1, forever()).unwrap();
    let inv = forged_inviter.create_invitation(&dave, 1000, NOW, &mut rng).unwrap();
    v.push(case("invitation named for alice but signed by bob", false, w.check(&inv, &[])));

    // Unanchored instance: a rogue root certifies a second workspace key.
    let rogue_root_key = KeyPair::from_seed([6; 32]);
    let rogue_root = self_sign(&rogue_root_key, &n("yourworkspaces.app"), 2, forever()).unwrap();
    let rogue_inst_key = KeyPair::from_seed([7; 32]);
    let rogue_inst = issue_cert(&rogue_root_key, rogue_root.name(), &rogue_inst_key.public_key(), &w.ws, 1, forever()).unwrap();
    v.push(case("instance certificate from a rogue root", false, w.check(rogue_inst.packet(), &[&rogue_root])));
    let rogue_inst2 = issue_cert(&w.instance_key, w.instance_cert.name(), &rogue_inst_key.public_key(), &w.ws, 9, forever()).unwrap();
    v.push(case("instance certificate signed by the instance key", false, w.check(rogue_inst2.packet(), &[])));

    // Workspace certificates not signed by the member's own personal key.
    let eve_key = KeyPair::from_seed([8; 32]);
    let eve_personal = self_sign(&eve_key, &n("eve"), 1, forever()).unwrap();
    let eve_ws_key = KeyPair::from_seed([9; 32]);
    let eve_ws = issue_cert(&eve_key, eve_personal.name(), &eve_ws_key.public_key(), &w.ws.child("eve"), 1, forever()).unwrap();
    let eve_pub = sign_data(w.publication("eve", 1, NOW), &eve_ws_key, eve_ws.name());
    v.push(case("outsider with a self-made chain", false, w.check(&eve_pub, &[&eve_personal, &eve_ws])));
    let fake_bob_ws = issue_cert(w.alice.personal_key(), w.alice.endorsement.name(), &eve_ws_key.public_key(), &w.ws.child("bob"), 7, forever()).unwrap();
    let p = sign_data(w.publication("bob", 3, NOW), &eve_ws_key, fake_bob_ws.name());
    v.push(case("bob workspace cert signed by alice's personal key", false, w.check(&p, &[&fake_bob_ws])));
    let p = sign_data(w.publication("bob", 4, NOW), &eve_ws_key, w.bob.workspace_cert.name());
    v.push(case("bob name signed with a key that is not bob's", false, w.check(&p, &[])));

    // Expiry, judged at signing time.
    let carol_late = w.carol.sign(w.publication("carol", 2, NOW));
    v.push(case("carol publication after expiry", false, w.check(&carol_late, &[])));
    let future = w.alice.sign(w.publication("alice", 3, NOW + 3_600_000));
    v.push(case("publication dated an hour ahead", false, w.check(&future, &[])));

    // Tampering.
    let mut t = alice_pub.clone();
    t.content[0] ^= 1;
    v.push(case("altered content", false, w.check(&t, &[])));
    let mut t = alice_pub.clone();
    t.name = make_data_name(&w.ws, "alice", 2).unwrap();
    v.push(case("altered name", false, w.check(&t, &[])));
    let mut t = alice_pub.clone();
    t.sig_value[5] ^= 0x40;
    v.push(case("altered signature", false, w.check(&t, &[])));
    let mut t = alice_pub.clone();
    t.sig_info.validity = Validity::starting_at(NOW, 5000);
    v.push(case("altered validity", false, w.check(&t, &[])));
    let mut tampered_cert = w.bob.workspace_cert.packet().clone();
    tampered_cert.sig_value[0] ^= 1;
    let mut chain_store = CertStore::new();
    chain_store.add_anchor(w.anchor.clone());
    chain_store.insert(Certificate::from_packet(tampered_cert).unwrap());
    for c in w.bob.cert_chain() {
        chain_store.insert(c);
    }
    let r = w.validator(MembershipModel::PeerToPeer).validate(&mut chain_store, &bob_pub, NOW).map(|_| ()).map_err(|e| e.to_string());
    v.push(case("publication over a tampered certificate", false, r));
    v.push(case("publication with missing certificate", false, {
        let mut s = CertStore::new();
        s.add_anchor(w.anchor.clone());
        w.validator(MembershipModel::PeerToPeer).validate(&mut s, &bob_pub, NOW).map(|_| ()).map_err(|e| e.to_string())
    }));

    // Only the initiator may endorse members in an initiator-only workspace.
    let mut wi = world(MembershipModel::InitiatorOnly);
    let mut rng = wi.rng.clone();
    let erin = self_sign(&KeyPair::from_seed([10; 32]), &n("erin"), 1, forever()).unwrap();
    wi.bob.model = MembershipModel::PeerToPeer;
    let inv = wi.bob.create_invitation(&erin, 1000, NOW, &mut rng).unwrap();
    let endorsement = wksp_core::membership::Invitation::decode(&inv).unwrap().invitee_cert;
    let r = wi
        .validator(MembershipModel::InitiatorOnly)
        .validate(&mut wi.store(&[]), endorsement.packet(), NOW)
        .map(|_| ())
        .map_err(|e| e.to_string());
    v.push(case("endorsement by a non-initiator", false, r));
    let good = wi.alice.create_invitation(&erin, 1000, NOW, &mut rng).unwrap();
    let endorsement = wksp_core::membership::Invitation::decode(&good).unwrap().invitee_cert;
    let r = wi
        .validator(MembershipModel::InitiatorOnly)
        .validate(&mut wi.store(&[]), endorsement.packet(), NOW)
        .map(|_| ())
        .map_err(|e| e.to_string());
    v.push(case("endorsement by the initiator", true, r));

    // Invitation handling on the invitee's side.
    let bob_key = KeyPair::from_seed([3; 32]);
    let mut inv = w.bob_invite.clone();
    *inv.content.last_mut().unwrap() ^= 1;
    v.push(case("bootstrap from altered invitation", false, bootstrap_member("bob", &bob_key, &inv, &w.anchor, NOW).map(|_| ()).map_err(|e| e.to_string())));
    v.push(case("bootstrap as the wrong invitee", false, bootstrap_member("carol", &bob_key, &w.bob_invite, &w.anchor, NOW).map(|_| ()).map_err(|e| e.to_string())));
    let carol_key = KeyPair::from_seed([4; 32]);
    let carol_self = self_sign(&carol_key, &n("carol"), 1, forever()).unwrap();
    let lapsed = w.alice.create_invitation(&carol_self, 100, 0, &mut w.rng).unwrap();
    v.push(case("bootstrap from lapsed invitation", false, bootstrap_member("carol", &carol_key, &lapsed, &w.anchor, NOW).map(|_| ()).map_err(|e| e.to_string())));
    v.push(case("bootstrap against a rogue anchor", false, bootstrap_member("bob", &bob_key, &w.bob_invite, &rogue_root, NOW).map(|_| ()).map_err(|e| e.to_string())));
    v.push(case("bootstrap from a valid invitation", true, bootstrap_member("bob", &bob_key, &w.bob_invite, &w.anchor, NOW).map(|_| ()).map_err(|e| e.to_string())));
    v
}
