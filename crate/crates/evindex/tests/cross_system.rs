//! End-to-end agreement of the three access paths: brute-force
//! sequential filtering, directory selection, and tag-database queries
//! over one generated store.

use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use evindex::directory::{
    build_directory, decode_flags, fetch, parse_directory, select, serialize_directory, FlagExpr,
    FlagWords,
};
use evindex::query::{parse_query, QueryAst};
use evindex::store::{
    create_store, open_store, EventRecord, RecordKind, StoreConfig, StoreSet, TypeTag,
};
use evindex::summary::{ElectronCand, JetCand, PhysicsSummary, VertexFit};
use evindex::tagdb::{derive_tag, open_federation, Federation, TagSchema};

fn random_summary(rng: &mut StdRng) -> PhysicsSummary {
    let et_total: f32 = -10.7 * rng.random::<f32>().max(1e-9).ln();
    let n_elec_a = if rng.random::<f64>() < 0.4 {
        rng.random_range(1..=2)
    } else {
        0
    };
    let elec = |rng: &mut StdRng| ElectronCand {
        energy: rng.random_range(5.0..50.0),
        theta: rng.random_range(0.0..std::f32::consts::PI),
        phi: rng.random_range(0.0..std::f32::consts::TAU),
        prob: rng.random_range(0.0..1.0),
        pt: rng.random_range(1.0..30.0),
    };
    PhysicsSummary {
        e_total: et_total + rng.random_range(0.0..80.0),
        et_total,
        et_miss: rng.random_range(0.0..12.0),
        empz: rng.random_range(30.0..60.0),
        elec_a: (0..n_elec_a).map(|_| elec(rng)).collect(),
        elec_b: if rng.random::<f64>() < 0.3 {
            vec![elec(rng)]
        } else {
            vec![]
        },
        vertex: if rng.random::<f64>() < 0.9 {
            Some(VertexFit {
                x: rng.random_range(-1.0..1.0),
                y: rng.random_range(-1.0..1.0),
                z: rng.random_range(-60.0..60.0),
                chi2: rng.random_range(0.0..5.0),
            })
        } else {
            None
        },
        ntrk_prim: rng.random_range(0..40),
        ntrk_sec: rng.random_range(0..10),
        jets: (0..rng.random_range(0..=3))
            .map(|_| JetCand {
                et: rng.random_range(3.0..40.0),
                eta: rng.random_range(-2.0..2.0),
                phi: rng.random_range(0.0..std::f32::consts::TAU),
            })
            .collect(),
        muons: vec![],
        charm: None,
        lumi_e_gamma: rng.random_range(0.0..10.0),
        lumi_e_elec: rng.random_range(0.0..10.0),
        fnc_energy: 0.0,
        bpc_energy: 0.0,
        lps_xl: 0.0,
        aux_seed: rng.random(),
        offline_flags: std::array::from_fn(|_| rng.random()),
        flt: std::array::from_fn(|_| rng.random()),
        slt: std::array::from_fn(|_| rng.random()),
        tlt: std::array::from_fn(|_| rng.random()),
        misc: std::array::from_fn(|_| rng.random()),
    }
}

struct Fixture {
    store_path: std::path::PathBuf,
    fed_path: std::path::PathBuf,
    /// (run, event, summary) of every event, in file order.
    events: Vec<(u32, u32, PhysicsSummary)>,
}

fn build_fixture(root: &Path, seed: u64) -> Fixture {
    let mut rng = StdRng::seed_from_u64(seed);
    let store_path = root.join("events.evt");
    let mut writer = create_store(&store_path, StoreConfig::default()).unwrap();
    let schema = TagSchema::default_schema();
    let mut events = Vec::new();
    let mut per_run_tags = Vec::new();

    for run in [35762u32, 35763, 35764] {
        let mut tags = Vec::new();
        for event in 1..=60u32 {
            if rng.random::<f64>() < 0.06 {
                writer
                    .append(&EventRecord::non_event(
                        TypeTag::new("CALB").unwrap(),
                        vec![0xC5; 64],
                    ))
                    .unwrap();
            }
            let summary = random_summary(&mut rng);
            let mut payload = summary.encode();
            payload.resize(payload.len() + 100, 0);
            let record = EventRecord::event(TypeTag::new("EVTF").unwrap(), run, event, payload);
            let loc = writer.append(&record).unwrap();
            tags.push(derive_tag(&record, loc, &schema).unwrap());
            events.push((run, event, summary));
        }
        per_run_tags.push((run, tags));
    }
    writer.finish().unwrap();

    let fed_path = root.join("tagdb");
    let mut fed = Federation::create(&fed_path, schema, 50_000_000).unwrap();
    for (run, tags) in per_run_tags {
        fed.ingest_run(run, &tags).unwrap();
    }

    Fixture {
        store_path,
        fed_path,
        events,
    }
}

#[test]
fn three_paths_agree_on_flag_selections() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = build_fixture(tmp.path(), 11);

    let mut reader = open_store(&fx.store_path).unwrap();
    let dir = build_directory(&mut reader, |rec| {
        let s = PhysicsSummary::decode(&rec.payload).unwrap();
        decode_flags(&FlagWords(s.offline_flags))
    })
    .unwrap();
    // Exercise the text format on the way.
    let dir = parse_directory(&serialize_directory(&dir)).unwrap();

    let fed = open_federation(&fx.fed_path).unwrap();
    let schema = fed.schema().clone();

    for bit in [0u32, 3, 17, 64, 127] {
        // Path 1: brute-force sequential filter on the stored summaries.
        let want: Vec<(u32, u32)> = fx
            .events
            .iter()
            .filter(|(_, _, s)| s.offline_flags[(bit / 32) as usize] >> (bit % 32) & 1 == 1)
            .map(|(r, e, _)| (*r, *e))
            .collect();

        // Path 2: directory selection.
        let expr = FlagExpr::flag(bit).unwrap();
        let got_dir: Vec<(u32, u32)> = select(&dir, &expr)
            .iter()
            .map(|e| (e.run, e.event))
            .collect();

        // Path 3: tag-database flag query.
        let ast = parse_query(&format!("flag(OFFLINE, {bit})"), &schema).unwrap();
        let got_tag: Vec<(u32, u32)> = fed
            .query(&ast, None)
            .unwrap()
            .iter()
            .map(|h| (h.run, h.event))
            .collect();

        assert_eq!(got_dir, want, "directory vs brute force, bit {bit}");
        assert_eq!(got_tag, want, "tag query vs brute force, bit {bit}");
    }
}

#[test]
fn value_query_agrees_with_brute_force_and_reads_no_store_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = build_fixture(tmp.path(), 23);
    let fed = open_federation(&fx.fed_path).unwrap();
    let schema = fed.schema().clone();

    let reader = open_store(&fx.store_path).unwrap();
    let before = reader.bytes_read();

    let ast = parse_query("ET_TOTAL > 30.0 and not flag(OFFLINE, 2)", &schema).unwrap();
    let got: Vec<(u32, u32)> = fed
        .query(&ast, None)
        .unwrap()
        .iter()
        .map(|h| (h.run, h.event))
        .collect();

    let want: Vec<(u32, u32)> = fx
        .events
        .iter()
        .filter(|(_, _, s)| s.et_total > 30.0 && s.offline_flags[0] >> 2 & 1 == 0)
        .map(|(r, e, _)| (*r, *e))
        .collect();
    assert_eq!(got, want);

    // The export path stays off the store as well.
    let table = fed.export_columns(&["ET_TOTAL", "VTX_Z"], &ast).unwrap();
    assert_eq!(table.rows.len(), want.len());
    assert_eq!(reader.bytes_read(), before, "no event-store bytes read");
}

#[test]
fn fetch_paths_return_identical_events() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = build_fixture(tmp.path(), 37);

    let mut reader = open_store(&fx.store_path).unwrap();
    let dir = build_directory(&mut reader, |rec| {
        let s = PhysicsSummary::decode(&rec.payload).unwrap();
        decode_flags(&FlagWords(s.offline_flags))
    })
    .unwrap();

    let fed = open_federation(&fx.fed_path).unwrap();
    let store = open_store(&fx.store_path).unwrap();

    // Directory fetch of everything equals the sequential event list.
    let entries = select(&dir, &FlagExpr::True);
    let via_dir: Vec<EventRecord> = fetch(&entries, &store).map(|r| r.unwrap()).collect();

    let mut seq_reader = open_store(&fx.store_path).unwrap();
    let mut via_seq = Vec::new();
    while let Some(r) = seq_reader.next_record().unwrap() {
        if r.kind == RecordKind::Event {
            via_seq.push(r);
        }
    }
    assert_eq!(via_dir, via_seq);

    // Tag fetch of a TRUE query equals the same list.
    let hits = fed.query(&QueryAst::True, None).unwrap();
    let mut stores = StoreSet::new();
    stores.open(&fx.store_path).unwrap();
    let via_tag: Vec<EventRecord> = Federation::fetch_events(&hits, &stores)
        .map(|r| r.unwrap())
        .collect();
    assert_eq!(via_tag, via_seq);

    // One corrupted offset: that hit errors, the others still arrive.
    let mut broken = hits.clone();
    let mid = broken.len() / 2;
    broken[mid].location.offset += 3;
    let results: Vec<_> = Federation::fetch_events(&broken, &stores).collect();
    assert_eq!(results.len(), hits.len());
    assert!(results[mid].is_err());
    assert_eq!(results.iter().filter(|r| r.is_ok()).count(), hits.len() - 1);
}
