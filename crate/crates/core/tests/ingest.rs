use std::collections::BTreeSet;
use std::io::Cursor;

use flowvae::ingest::*;
use flowvae::Error;
use proptest::prelude::*;

const HEADER: &str = "#separator \\x09\n#fields\tts\tuid\tid.orig_h\tid.orig_p\tid.resp_h\tid.resp_p\tproto\tservice\tduration\torig_bytes\tresp_bytes\tmissed_bytes\tconn_state\tlocal_orig\torig_pkts\torig_ip_bytes\tresp_pkts\tresp_ip_bytes\n";

fn conn(body: &str) -> Parsed<FlowRecord> {
    parse_conn_log(Cursor::new(format!("{HEADER}{body}")), None).unwrap()
}

#[test]
fn conn_line_parsed_against_declared_field_order() {
    let p = conn("1.5\tC1\t10.0.0.2\t1337\t10.0.0.9\t80\ttcp\thttp\t0.2\t100\t200\t0\tSF\t-\t3\t260\t4\t360\n");
    assert!(p.skipped.is_empty());
    let r = &p.records[0];
    assert_eq!(r.ts, 1.5);
    assert_eq!(r.src_ip, "10.0.0.2");
    assert_eq!(r.src_port, 1337);
    assert_eq!(r.dst_ip, "10.0.0.9");
    assert_eq!(r.dst_port, 80);
    assert_eq!(r.proto, Proto::Tcp);
    assert_eq!(r.service, Service::Http);
    assert_eq!(r.duration, 0.2);
    assert_eq!(r.orig_bytes, 100);
    assert_eq!(r.resp_bytes, 200);
    assert_eq!(r.missed_bytes, 0);
    assert_eq!(r.conn_state, ConnState::SF);
    assert_eq!(r.orig_pkts, 3);
    assert_eq!(r.resp_pkts, 4);
}

#[test]
fn absent_numeric_fields_become_zero() {
    let p = conn("2\tC2\t10.0.0.2\t5\t10.0.0.9\t53\tudp\tdns\t-\t-\t-\t-\tS0\t-\t-\t-\t-\t-\n");
    let r = &p.records[0];
    assert_eq!(r.duration, 0.0);
    assert_eq!((r.orig_bytes, r.resp_bytes, r.orig_pkts), (0, 0, 0));
    assert_eq!(r.service, Service::Dns);
}

#[test]
fn empty_stream_yields_nothing() {
    let p = parse_conn_log(Cursor::new(""), None).unwrap();
    assert!(p.records.is_empty() && p.skipped.is_empty());
    let w = parse_weird_log(Cursor::new(""), None).unwrap();
    assert!(w.records.is_empty());
}

#[test]
fn short_line_is_skipped_and_parsing_continues() {
    let p = conn(
        "1\tC1\t10.0.0.1\t1\t10.0.0.2\t2\ttcp\t-\t1\t1\t1\t0\tSF\t-\t1\t1\t1\t1\n\
         1\tC1\t10.0.0.1\n\
         3\tC3\t10.0.0.3\t1\t10.0.0.2\t2\ttcp\t-\t1\t1\t1\t0\tSF\t-\t1\t1\t1\t1\n",
    );
    assert_eq!(p.records.len(), 2);
    assert_eq!(p.skipped.len(), 1);
    assert_eq!(p.skipped[0].line, 4);
    assert_eq!(p.records[1].src_ip, "10.0.0.3");
}

#[test]
fn malformed_header_is_fatal() {
    let dup = "#fields\tts\tts\n1\t2\n";
    assert!(matches!(
        parse_conn_log(Cursor::new(dup), None),
        Err(Error::MalformedHeader(_))
    ));
    let missing = "#fields\tts\tuid\n1\tx\n";
    assert!(matches!(
        parse_conn_log(Cursor::new(missing), None),
        Err(Error::MalformedHeader(_))
    ));
    let sep = "#separator \\xZZ\n";
    assert!(matches!(
        parse_conn_log(Cursor::new(sep), None),
        Err(Error::MalformedHeader(_))
    ));
    let headless = "1\tC\t10.0.0.1\n";
    assert!(matches!(
        parse_conn_log(Cursor::new(headless), None),
        Err(Error::MissingHeader(1))
    ));
}

#[test]
fn caller_field_spec_without_header() {
    let spec = FieldSpec::new([
        "ts",
        "id.orig_h",
        "id.orig_p",
        "id.resp_h",
        "id.resp_p",
        "proto",
        "conn_state",
    ])
    .unwrap();
    let p = parse_conn_log(
        Cursor::new("7\t1.1.1.1\t9\t2.2.2.2\t22\ttcp\tREJ\n"),
        Some(&spec),
    )
    .unwrap();
    assert_eq!(p.records[0].dst_port, 22);
    assert_eq!(p.records[0].conn_state, ConnState::REJ);
    assert_eq!(p.records[0].service, Service::None);
}

#[test]
fn custom_separator_and_unknown_vocabulary() {
    let log = "#separator ,\n#fields,ts,id.orig_h,id.orig_p,id.resp_h,id.resp_p,proto,service,conn_state\n\
               4,10.0.0.1,1,10.0.0.2,2,sctp,gopher,S_RA\n";
    let p = parse_conn_log(Cursor::new(log), None).unwrap();
    let r = &p.records[0];
    assert_eq!(
        (r.proto, r.service, r.conn_state),
        (Proto::Other, Service::Other, ConnState::OTH)
    );
}

#[test]
fn order_preserved() {
    let mut body = String::new();
    for i in (1..=20).rev() {
        body.push_str(&format!(
            "{i}\tC\t10.0.0.{i}\t1\t10.0.0.99\t2\ttcp\t-\t-\t-\t-\t-\tSF\t-\t-\t-\t-\t-\n"
        ));
    }
    let ts: Vec<f64> = conn(&body).records.iter().map(|r| r.ts).collect();
    assert_eq!(ts, (1..=20).rev().map(f64::from).collect::<Vec<_>>());
}

fn weird(body: &str) -> Vec<WeirdEvent> {
    let log = format!("#fields\tts\tuid\tid.orig_h\tid.orig_p\tid.resp_h\tid.resp_p\tname\taddl\tnotice\tpeer\n{body}");
    parse_weird_log(Cursor::new(log), None).unwrap().records
}

#[test]
fn weird_events_and_labels() {
    let ev = weird(
        "1\tC\t10.0.0.5\t1\t10.0.0.9\t6667\tirc_line_too_short\t-\tF\tzeek\n\
         2\tC\t10.0.0.6\t1\t10.0.0.9\t53\tdns_unmatched_reply\t-\tF\tzeek\n\
         3\tC\t10.0.0.6\t1\t10.0.0.9\t53\tsomething_new\t-\tF\tzeek\n",
    );
    assert_eq!(ev[0].src_ip, "10.0.0.5");
    assert_eq!(ev[0].name, "irc_line_too_short");
    assert_eq!(ev[2].name, "something_new");

    let labels = derive_labels(&ev, &default_indicators()).unwrap();
    assert_eq!(labels.len(), 1);
    assert_eq!(labels.get("10.0.0.5"), Label::Malicious);
    assert_eq!(labels.get("10.0.0.6"), Label::Normal);
    assert_eq!(labels.get("192.0.2.1"), Label::Normal);
}

#[test]
fn labels_edge_cases() {
    assert!(derive_labels(&[], &default_indicators())
        .unwrap()
        .is_empty());
    let e = |ip: &str, name: &str| WeirdEvent {
        ts: 1.0,
        src_ip: ip.into(),
        name: name.into(),
    };
    let mixed = [e("A", "dns_unmatched_reply"), e("A", "irc_invalid_line")];
    assert_eq!(
        derive_labels(&mixed, &default_indicators())
            .unwrap()
            .get("A"),
        Label::Malicious
    );
    assert!(matches!(
        derive_labels(&mixed, &BTreeSet::new()),
        Err(Error::InvalidConfig(_))
    ));
}

#[test]
fn label_tsv_round_trip() {
    let mut l = HostLabelSet::new();
    l.insert("10.0.0.5", Label::Malicious);
    l.insert("10.0.0.1", Label::Normal);
    let mut buf = Vec::new();
    l.write_tsv(&mut buf).unwrap();
    assert_eq!(
        String::from_utf8(buf.clone()).unwrap(),
        "10.0.0.1\tnormal\n10.0.0.5\tmalicious\n"
    );
    assert_eq!(HostLabelSet::read_tsv(Cursor::new(buf)).unwrap(), l);
    assert!(HostLabelSet::read_tsv(Cursor::new("a\tnormal\na\tmalicious\n")).is_err());
}

#[test]
fn csv_rows_match_hand_read_values() {
    let csv = "ts,src_ip,src_port,dst_ip,dst_port,proto,service,duration,orig_bytes,resp_bytes,missed_bytes,orig_pkts,resp_pkts,conn_state\n\
               10.25,10.0.0.1,4000,10.0.0.2,443,tcp,ssl,1.5,10,20,0,2,3,SF\n\
               11,10.0.0.3,53,10.0.0.4,53,udp,dns,0,40,80,0,1,1,SF\n";
    let p = parse_flow_csv(Cursor::new(csv), &CsvSchema::default()).unwrap();
    assert_eq!(p.records.len(), 2);
    let a = &p.records[0];
    assert_eq!(
        (a.ts, a.src_port, a.dst_port, a.service, a.duration),
        (10.25, 4000, 443, Service::Ssl, 1.5)
    );
    assert_eq!(
        (a.orig_bytes, a.resp_bytes, a.orig_pkts, a.resp_pkts),
        (10, 20, 2, 3)
    );
    let b = &p.records[1];
    assert_eq!(
        (b.proto, b.src_ip.as_str(), b.resp_bytes),
        (Proto::Udp, "10.0.0.3", 80)
    );
}

#[test]
fn csv_missing_optional_columns_and_header_only() {
    let p = parse_flow_csv(
        Cursor::new("ts,src_ip,dst_ip\n5,a,b\n"),
        &CsvSchema::default(),
    )
    .unwrap();
    let r = &p.records[0];
    assert_eq!(
        (r.proto, r.service, r.conn_state, r.orig_bytes),
        (Proto::Other, Service::None, ConnState::OTH, 0)
    );
    let empty = parse_flow_csv(Cursor::new("ts,src_ip,dst_ip\n"), &CsvSchema::default()).unwrap();
    assert!(empty.records.is_empty());
    assert!(matches!(
        parse_flow_csv(Cursor::new("time,a\n"), &CsvSchema::default()),
        Err(Error::MalformedHeader(_))
    ));
}

#[test]
fn ctu13_binetflow_row() {
    let csv = "StartTime,Dur,Proto,SrcAddr,Sport,Dir,DstAddr,Dport,State,sTos,dTos,TotPkts,TotBytes,SrcBytes,Label\n\
               2011/08/10 09:46:59.607825,1.026539,tcp,94.44.127.113,1577,   ->,147.32.84.59,6881,S_RA,0,0,4,276,156,flow=Background\n\
               2011/08/10 09:47:00.000000,0,icmp,147.32.84.165,0x0008,   ->,1.2.3.4,0x0303,URP,0,0,1,70,70,flow=From-Botnet\n";
    let p = parse_flow_csv(Cursor::new(csv), &CsvSchema::ctu13_binetflow()).unwrap();
    assert_eq!(p.records.len(), 2, "{:?}", p.skipped);
    let a = &p.records[0];
    assert!((a.ts - 1_312_969_619.607825).abs() < 1e-5);
    assert_eq!(
        (a.orig_pkts, a.orig_bytes, a.conn_state),
        (4, 156, ConnState::OTH)
    );
    assert_eq!(p.records[1].dst_port, 0x0303);
}

fn arb_record() -> impl Strategy<Value = FlowRecord> {
    (
        (
            1e-3f64..2e9,
            "[0-9a-f:.]{1,39}",
            any::<u16>(),
            "[0-9.]{1,15}",
            any::<u16>(),
        ),
        (0usize..4, 0usize..12, 0usize..13, 0f64..1e5),
        (
            any::<u64>(),
            any::<u64>(),
            any::<u64>(),
            any::<u64>(),
            any::<u64>(),
        ),
    )
        .prop_map(
            |((ts, src, sp, dst, dp), (p, s, c, dur), (ob, rb, mb, op, rp))| FlowRecord {
                ts,
                src_ip: src,
                src_port: sp,
                dst_ip: dst,
                dst_port: dp,
                proto: Proto::ALL[p],
                service: Service::ALL[s],
                duration: dur,
                orig_bytes: ob,
                resp_bytes: rb,
                missed_bytes: mb,
                orig_pkts: op,
                resp_pkts: rp,
                conn_state: ConnState::ALL[c],
            },
        )
}

proptest! {
    #[test]
    fn flow_cache_round_trip(records in prop::collection::vec(arb_record(), 0..40)) {
        let hash = [7u8; 32];
        let mut buf = Vec::new();
        write_flow_cache(&mut buf, &hash, &records).unwrap();
        let (h, back) = read_flow_cache(&mut Cursor::new(buf)).unwrap();
        prop_assert_eq!(h, hash);
        prop_assert_eq!(back, records);
    }

    #[test]
    fn label_monotonic_under_added_events(
        base in prop::collection::vec((0u8..6, prop::bool::ANY), 0..20),
        extra in prop::collection::vec((0u8..6, prop::bool::ANY), 0..20),
    ) {
        let ev = |v: &[(u8, bool)]| -> Vec<WeirdEvent> {
            v.iter().map(|&(h, bad)| WeirdEvent {
                ts: 1.0,
                src_ip: format!("10.0.0.{h}"),
                name: if bad { "irc_line_too_short".into() } else { "dns_unmatched_reply".into() },
            }).collect()
        };
        let before = derive_labels(&ev(&base), &default_indicators()).unwrap();
        let mut all = ev(&base);
        all.extend(ev(&extra));
        let after = derive_labels(&all, &default_indicators()).unwrap();
        for ip in before.malicious() {
            prop_assert_eq!(after.get(ip), Label::Malicious);
        }
    }
}

#[test]
fn zeek_writer_round_trips_through_parser() {
    let mut a = FlowRecord::new(100.5, "10.0.0.1", "10.0.0.2");
    a.service = Service::Irc;
    a.dst_port = 6667;
    a.orig_pkts = 3;
    let mut b = FlowRecord::new(101.0, "10.0.0.3", "10.0.0.2");
    b.proto = Proto::Udp;
    b.conn_state = ConnState::S0;
    let mut buf = Vec::new();
    write_conn_log(&mut buf, &[a.clone(), b.clone()]).unwrap();
    let p = parse_conn_log(Cursor::new(buf), None).unwrap();
    assert_eq!(p.records, vec![a, b]);

    let ev = vec![WeirdEvent {
        ts: 5.0,
        src_ip: "10.0.0.1".into(),
        name: "irc_invalid_line".into(),
    }];
    let mut buf = Vec::new();
    write_weird_log(&mut buf, &ev).unwrap();
    assert_eq!(parse_weird_log(Cursor::new(buf), None).unwrap().records, ev);
}
