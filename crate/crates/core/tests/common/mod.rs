//! Helpers shared by the integration tests: an independent frame and pcap
//! writer, a random capture generator and a brute-force session oracle.
#![allow(dead_code)]

use std::collections::HashMap;
use std::net::Ipv4Addr;
use std::path::PathBuf;

use rand::{Rng, RngCore, SeedableRng};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures").join(name)
}

pub fn ethernet(dst: [u8; 6], src: [u8; 6], ethertype: u16, body: &[u8]) -> Vec<u8> {
    let mut f = Vec::with_capacity(14 + body.len());
    f.extend_from_slice(&dst);
    f.extend_from_slice(&src);
    f.extend_from_slice(&ethertype.to_be_bytes());
    f.extend_from_slice(body);
    // minimum frame size without FCS
    while f.len() < 60 {
        f.push(0);
    }
    f
}

/// IPv4 packet; `options` must be a multiple of 4 bytes. The checksum is
/// left zero since the reader does not verify it.
pub fn ipv4(src: Ipv4Addr, dst: Ipv4Addr, proto: u8, options: &[u8], body: &[u8]) -> Vec<u8> {
    assert_eq!(options.len() % 4, 0);
    let ihl = 20 + options.len();
    let total = ihl + body.len();
    let mut p = vec![0u8; 20];
    p[0] = 0x40 | (ihl / 4) as u8;
    p[2..4].copy_from_slice(&(total as u16).to_be_bytes());
    p[6] = 0x40; // DF
    p[8] = 64;
    p[9] = proto;
    p[12..16].copy_from_slice(&src.octets());
    p[16..20].copy_from_slice(&dst.octets());
    p.extend_from_slice(options);
    p.extend_from_slice(body);
    p
}

pub fn tcp(sport: u16, dport: u16, flags: u8, options: &[u8], payload: &[u8]) -> Vec<u8> {
    assert_eq!(options.len() % 4, 0);
    let doff = 20 + options.len();
    let mut s = vec![0u8; 20];
    s[0..2].copy_from_slice(&sport.to_be_bytes());
    s[2..4].copy_from_slice(&dport.to_be_bytes());
    s[12] = ((doff / 4) as u8) << 4;
    s[13] = flags;
    s[14..16].copy_from_slice(&65535u16.to_be_bytes());
    s.extend_from_slice(options);
    s.extend_from_slice(payload);
    s
}

pub fn udp(sport: u16, dport: u16, payload: &[u8]) -> Vec<u8> {
    let mut s = vec![0u8; 8];
    s[0..2].copy_from_slice(&sport.to_be_bytes());
    s[2..4].copy_from_slice(&dport.to_be_bytes());
    s[4..6].copy_from_slice(&((8 + payload.len()) as u16).to_be_bytes());
    s.extend_from_slice(payload);
    s
}

/// Little-endian microsecond pcap with Ethernet link type.
pub fn pcap_file(frames: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&0xa1b2_c3d4u32.to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&4u16.to_le_bytes());
    out.extend_from_slice(&0i32.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&65535u32.to_le_bytes());
    out.extend_from_slice(&1u32.to_le_bytes());
    for (i, f) in frames.iter().enumerate() {
        out.extend_from_slice(&(1_600_000_000u32 + i as u32).to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        out.extend_from_slice(&(f.len() as u32).to_le_bytes());
        out.extend_from_slice(&(f.len() as u32).to_le_bytes());
        out.extend_from_slice(f);
    }
    out
}

pub type Ep = (Ipv4Addr, u16);

/// What the generator put on the wire for one TCP packet.
#[derive(Debug, Clone)]
pub struct TcpTruth {
    pub order: u64,
    pub src_mac: [u8; 6],
    pub src: Ep,
    pub dst: Ep,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, Default)]
pub struct CaptureTruth {
    pub tcp: Vec<TcpTruth>,
    pub udp_packets: u64,
    pub non_ip_packets: u64,
    pub ipv6_packets: u64,
    pub other_transport_packets: u64,
    pub total: u64,
}

fn mac_of(ip: Ipv4Addr) -> [u8; 6] {
    let o = ip.octets();
    [0x02, 0x00, o[0], o[1], o[2], o[3]]
}

fn options(rng: &mut impl Rng, max_words: usize) -> Vec<u8> {
    let words = rng.random_range(0..=max_words);
    // NOP padding keeps the bytes plausible; values are irrelevant to slicing
    (0..words * 4).map(|_| 1u8).collect()
}

/// A random capture drawing endpoints from small pools so flows collide,
/// reverse and interleave. Small frames get Ethernet padding.
pub fn random_capture(rng: &mut impl RngCore, packets: usize) -> (Vec<u8>, CaptureTruth) {
    let hosts: Vec<Ipv4Addr> = (0..4).map(|i| Ipv4Addr::new(10, 0, rng.random_range(0..2), 1 + i)).collect();
    let ports = [80u16, 443, 5000 + rng.random_range(0..3u16)];
    let mut truth = CaptureTruth::default();
    let mut frames = Vec::with_capacity(packets);
    for i in 0..packets {
        let a = hosts[rng.random_range(0..hosts.len())];
        let b = hosts[rng.random_range(0..hosts.len())];
        let (pa, pb) = (ports[rng.random_range(0..3)], ports[rng.random_range(0..3)]);
        let payload: Vec<u8> = if rng.random_bool(0.3) {
            Vec::new()
        } else {
            (0..rng.random_range(1..64)).map(|_| rng.random()).collect()
        };
        let roll = rng.random_range(0..100);
        let frame = if roll < 70 {
            let seg = tcp(pa, pb, 0x18, &options(rng, 3), &payload);
            truth.tcp.push(TcpTruth { order: i as u64, src_mac: mac_of(a), src: (a, pa), dst: (b, pb), payload });
            ethernet(mac_of(b), mac_of(a), 0x0800, &ipv4(a, b, 6, &options(rng, 2), &seg))
        } else if roll < 82 {
            truth.udp_packets += 1;
            ethernet(mac_of(b), mac_of(a), 0x0800, &ipv4(a, b, 17, &[], &udp(pa, pb, &payload)))
        } else if roll < 88 {
            truth.non_ip_packets += 1;
            ethernet([0xff; 6], mac_of(a), 0x0806, &[0u8; 28])
        } else if roll < 94 {
            truth.ipv6_packets += 1;
            ethernet(mac_of(b), mac_of(a), 0x86dd, &[0x60; 48])
        } else {
            truth.other_transport_packets += 1;
            ethernet(mac_of(b), mac_of(a), 0x0800, &ipv4(a, b, 1, &[], &payload))
        };
        frames.push(frame);
    }
    truth.total = packets as u64;
    (pcap_file(&frames), truth)
}

/// A session as the brute-force oracle sees it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleSession {
    pub lo: Ep,
    pub hi: Ep,
    pub initiator: Ep,
    pub initiator_mac: [u8; 6],
    /// (capture order, sent by initiator, payload)
    pub packets: Vec<(u64, bool, Vec<u8>)>,
}

fn ep_key(e: Ep) -> (u32, u16) {
    (u32::from(e.0), e.1)
}

type EpKey = (u32, u16);

/// Bucket TCP packets by unordered endpoint pair, sessions ordered by their
/// first packet.
pub fn oracle_sessions(truth: &CaptureTruth) -> Vec<OracleSession> {
    let mut order: Vec<OracleSession> = Vec::new();
    let mut at: HashMap<(EpKey, EpKey), usize> = HashMap::new();
    for p in &truth.tcp {
        let (lo, hi) = if ep_key(p.src) <= ep_key(p.dst) { (p.src, p.dst) } else { (p.dst, p.src) };
        let slot = *at.entry((ep_key(lo), ep_key(hi))).or_insert_with(|| {
            order.push(OracleSession { lo, hi, initiator: p.src, initiator_mac: p.src_mac, packets: Vec::new() });
            order.len() - 1
        });
        let s = &mut order[slot];
        let from_initiator = p.src == s.initiator;
        s.packets.push((p.order, from_initiator, p.payload.clone()));
    }
    order
}

/// Compare a library split against the oracle; returns a description of
/// the first difference.
pub fn compare_split(split: &iotprint::capture::SessionSplit, truth: &CaptureTruth) -> Result<(), String> {
    use iotprint::capture::Direction;
    let oracle = oracle_sessions(truth);
    if split.sessions.len() != oracle.len() {
        return Err(format!("{} sessions, oracle {}", split.sessions.len(), oracle.len()));
    }
    for (k, (s, o)) in split.sessions.iter().zip(&oracle).enumerate() {
        let lo = (s.key.endpoint_lo.ip, s.key.endpoint_lo.port);
        let hi = (s.key.endpoint_hi.ip, s.key.endpoint_hi.port);
        if (lo, hi) != (o.lo, o.hi) || s.key.protocol != 6 {
            return Err(format!("session {k}: key {:?} vs oracle {:?}", (lo, hi), (o.lo, o.hi)));
        }
        if (s.initiator.ip, s.initiator.port) != o.initiator || s.initiator_mac.0 != o.initiator_mac {
            return Err(format!("session {k}: initiator differs"));
        }
        let got: Vec<(u64, bool, Vec<u8>)> = s
            .packets
            .iter()
            .map(|p| (p.capture_order, p.direction == Direction::FromInitiator, p.payload.clone()))
            .collect();
        if got != o.packets {
            return Err(format!("session {k}: packet lists differ"));
        }
    }
    let st = &split.stats;
    let expect = (truth.total, truth.tcp.len() as u64, truth.udp_packets, truth.non_ip_packets, truth.ipv6_packets, truth.other_transport_packets);
    let got = (st.total_packets, st.tcp_packets, st.udp_packets, st.non_ip_packets, st.ipv6_packets, st.other_transport_packets);
    if got != expect {
        return Err(format!("stats {got:?} vs {expect:?}"));
    }
    Ok(())
}

/// Relative error with a floor so near-zero components compare absolutely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Random fingerprints with random labels; every class name is distinct.
pub fn random_dataset(rng: &mut impl RngCore, rows: usize, classes: usize) -> iotprint::dataset::LabeledDataset {
    use iotprint::dataset::{LabeledDataset, SplitTag};
    use iotprint::fingerprint::PayloadFingerprint;
    let fps = (0..rows)
        .map(|_| {
            let len = rng.random_range(1..=1000);
            let payload: Vec<u8> = (0..len).map(|_| rng.random()).collect();
            PayloadFingerprint::normalize(&payload).unwrap()
        })
        .collect();
    let labels = (0..rows).map(|_| rng.random_range(0..classes)).collect();
    let names = (0..classes).map(|c| format!("class {c}")).collect();
    LabeledDataset::new(fps, labels, names, SplitTag::Unsplit).unwrap()
}

/// First 16 bytes of the MNIST t10k image file and first 8 of its label
/// file, as published.
pub const MNIST_T10K_IMAGES_HEADER: [u8; 16] =
    [0x00, 0x00, 0x08, 0x03, 0x00, 0x00, 0x27, 0x10, 0x00, 0x00, 0x00, 0x1c, 0x00, 0x00, 0x00, 0x1c];
pub const MNIST_T10K_LABELS_HEADER: [u8; 8] = [0x00, 0x00, 0x08, 0x01, 0x00, 0x00, 0x27, 0x10];

/// A model with the given widths and a wide initializer so gradients are
/// not vanishingly small.
pub fn random_model(dims: &[usize], seed: u64) -> iotprint::nn::MlpModel {
    use iotprint::nn::{InitSpec, MlpModel};
    let mut m = MlpModel::new(dims, InitSpec { mean: 0.0, stddev: 0.5, seed }).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xb1a5);
    let mut params = m.parameters_mut();
    // tensors alternate weights, biases per layer
    for b in params.iter_mut().skip(1).step_by(2) {
        for v in b.iter_mut() {
            *v = rng.random_range(-0.3..0.3);
        }
    }
    m
}

/// Independent forward pass with explicit loops.
pub fn reference_forward(model: &iotprint::nn::MlpModel, x: &ndarray::Array2<f64>) -> Vec<Vec<f64>> {
    (0..x.nrows())
        .map(|r| {
            let mut a: Vec<f64> = x.row(r).to_vec();
            let layers = model.layers();
            for (li, l) in layers.iter().enumerate() {
                let mut z = vec![0.0; l.out_dim()];
                for (j, zj) in z.iter_mut().enumerate() {
                    let mut s = l.biases[j];
                    for (i, ai) in a.iter().enumerate() {
                        s += ai * l.weights[[i, j]];
                    }
                    *zj = s;
                }
                if li + 1 < layers.len() {
                    a = z.into_iter().map(|v| if v > 0.0 { v } else { 0.0 }).collect();
                } else {
                    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
                    let s: f64 = e.iter().sum();
                    a = e.into_iter().map(|v| v / s).collect();
                }
            }
            a
        })
        .collect()
}

/// Smallest |pre-activation| over all hidden units and rows.
pub fn min_hidden_margin(model: &iotprint::nn::MlpModel, x: &ndarray::Array2<f64>) -> f64 {
    let mut a = x.clone();
    let mut margin = f64::INFINITY;
    let layers = model.layers();
    for l in &layers[..layers.len() - 1] {
        let z = a.dot(&l.weights) + &l.biases;
        margin = z.iter().fold(margin, |m, v| m.min(v.abs()));
        a = z.mapv(|v| v.max(0.0));
    }
    margin
}

/// Inputs in [0, 1] whose hidden pre-activations stay clear of the ReLU
/// kink, so central differences are valid.
pub fn kink_free_batch(model: &iotprint::nn::MlpModel, rng: &mut impl RngCore, batch: usize) -> ndarray::Array2<f64> {
    loop {
        let x = ndarray::Array2::from_shape_simple_fn((batch, model.input_dim()), || rng.random_range(0.0..1.0));
        if min_hidden_margin(model, &x) > 1e-3 {
            return x;
        }
    }
}

/// Max relative error between backprop and central differences with step
/// `h` over every parameter.
pub fn gradient_check(model: &iotprint::nn::MlpModel, x: &ndarray::Array2<f64>, y: &ndarray::Array2<f64>, h: f64) -> (f64, usize) {
    let (_, grads) = model.loss_and_gradients(x.view(), y.view()).unwrap();
    let analytic: Vec<Vec<f64>> = grads.as_slices().iter().map(|s| s.to_vec()).collect();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (t, g) in analytic.iter().enumerate() {
        for (i, &ga) in g.iter().enumerate() {
            let mut plus = model.clone();
            plus.parameters_mut()[t][i] += h;
            let mut minus = model.clone();
            minus.parameters_mut()[t][i] -= h;
            let lp = plus.loss(x.view(), y.view()).unwrap();
            let lm = minus.loss(x.view(), y.view()).unwrap();
            let numeric = (lp - lm) / (2.0 * h);
            worst = worst.max(rel_err(ga, numeric));
            checked += 1;
        }
    }
    (worst, checked)
}

/// Synthetic captures pushed through ingestion and fingerprinting with the
/// library API, one class per device.
pub fn synthetic_dataset(devices: usize, sessions: usize, seed: u64) -> iotprint::dataset::LabeledDataset {
    use iotprint::capture::{group_by_mac, parse_pcap, split_sessions, UnmappedPolicy};
    use iotprint::dataset::LabeledDataset;
    use iotprint::fingerprint::{extract_payload, Deduper, PayloadFingerprint};
    use iotprint::synth::{generate, mac_map, SynthConfig};
    use std::collections::BTreeMap;

    let cap = generate(&SynthConfig { devices, sessions_per_device: sessions, files: 1, seed, ..SynthConfig::default() });
    let map = mac_map(&cap.profiles);
    let split = split_sessions(&parse_pcap(&cap.files[0]).unwrap());
    let groups = group_by_mac(split.sessions, &map, UnmappedPolicy::Unmapped);
    let mut fps: BTreeMap<String, Vec<PayloadFingerprint>> = BTreeMap::new();
    for (label, sessions) in groups {
        let mut d = Deduper::new();
        let v: Vec<PayloadFingerprint> = sessions
            .iter()
            .map(extract_payload)
            .filter(|p| d.admit(p))
            .map(|p| PayloadFingerprint::normalize(&p).unwrap())
            .collect();
        fps.insert(label, v);
    }
    LabeledDataset::from_groups(fps, None).unwrap()
}

/// Run the installed binary and return its exit code and stderr.
pub fn iotprint(args: &[&std::ffi::OsStr]) -> (i32, String) {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_iotprint"))
        .args(args)
        .env("IOTPRINT_LOG", "warn")
        .output()
        .expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

/// Like [`iotprint`] but takes plain strings and panics on a non-zero exit.
pub fn iotprint_ok(args: &[&str]) {
    let os: Vec<&std::ffi::OsStr> = args.iter().map(std::ffi::OsStr::new).collect();
    let (code, err) = iotprint(&os);
    assert_eq!(code, 0, "iotprint {args:?} failed: {err}");
}

/// Synthetic captures through split, encode, train and eval with the
/// binary, leaving `raw`, `sessions`, `data`, `model` and `eval` under
/// `root`.
pub fn cli_pipeline(root: &std::path::Path, devices: usize, sessions: usize, hidden: usize, epochs: usize) {
    let p = |s: &str| root.join(s).to_str().unwrap().to_string();
    iotprint_ok(&["synth", "--out", &p("raw"), "--devices", &devices.to_string(), "--sessions", &sessions.to_string(), "--seed", "7"]);
    let mut split = vec!["split".to_string(), "--out".into(), p("sessions"), "--mac-map".into(), p("raw/mac-map.json")];
    let mut pcaps: Vec<String> = std::fs::read_dir(root.join("raw"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "pcap"))
        .map(|p| p.to_str().unwrap().to_string())
        .collect();
    pcaps.sort();
    split.extend(pcaps);
    iotprint_ok(&split.iter().map(String::as_str).collect::<Vec<_>>());
    iotprint_ok(&["encode", "--sessions", &p("sessions"), "--out", &p("data"), "--drop-label", "unmapped"]);
    iotprint_ok(&[
        "train", "--data", &p("data"), "--out", &p("model"), "--hidden", &hidden.to_string(), "--epochs",
        &epochs.to_string(), "--seed", "7",
    ]);
    iotprint_ok(&["eval", "--model", &p("model/model.json"), "--data", &p("data"), "--out", &p("eval")]);
}
