use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use serde::{Deserialize, Serialize};

use crate::ingest::{ConnState, FlowRecord, Proto, Service, WeirdEvent};

/// Host population and timing of a synthetic capture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrafficConfig {
    pub seed: u64,
    pub start_ts: f64,
    pub duration_s: f64,
    pub web_hosts: usize,
    pub mail_hosts: usize,
    pub admin_hosts: usize,
    pub bot_hosts: usize,
    /// Mean interval between command-and-control check-ins.
    pub beacon_period_s: f64,
    /// Offsets the host address blocks so captures can share a timeline
    /// without sharing hosts.
    pub subnet: u8,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            start_ts: 1_500_000_000.0,
            duration_s: 7200.0,
            web_hosts: 12,
            mail_hosts: 4,
            admin_hosts: 3,
            bot_hosts: 4,
            beacon_period_s: 30.0,
            subnet: 0,
        }
    }
}

/// Flows and weird-log events, each sorted by timestamp.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Traffic {
    pub flows: Vec<FlowRecord>,
    pub weird: Vec<WeirdEvent>,
}

impl Traffic {
    pub fn bot_ips(cfg: &TrafficConfig) -> Vec<String> {
        (0..cfg.bot_hosts).map(|i| host_ip(cfg, 4, i)).collect()
    }
}

const CNC_IP: &str = "147.32.96.69";
const MAIL_SERVER: &str = "10.200.0.25";
const DNS_SERVER: &str = "10.200.0.53";

fn host_ip(cfg: &TrafficConfig, role: u8, i: usize) -> String {
    format!("10.{}.{}.{}", cfg.subnet, role, 10 + i)
}

struct Gen {
    rng: ChaCha8Rng,
    flows: Vec<FlowRecord>,
    weird: Vec<WeirdEvent>,
}

impl Gen {
    fn ephemeral(&mut self) -> u16 {
        self.rng.random_range(32768..61000)
    }

    fn lognormal(&mut self, median: f64, sigma: f64) -> f64 {
        LogNormal::new(median.ln(), sigma)
            .expect("valid lognormal")
            .sample(&mut self.rng)
    }

    #[allow(clippy::too_many_arguments)]
    fn flow(
        &mut self,
        ts: f64,
        src: &str,
        dst: &str,
        dst_port: u16,
        proto: Proto,
        service: Service,
        state: ConnState,
        orig_bytes: f64,
        resp_bytes: f64,
        duration: f64,
    ) {
        let mut f = FlowRecord::new(ts, src, dst);
        f.src_port = self.ephemeral();
        f.dst_port = dst_port;
        f.proto = proto;
        f.service = service;
        f.conn_state = state;
        f.duration = duration;
        f.orig_bytes = orig_bytes.round() as u64;
        f.resp_bytes = resp_bytes.round() as u64;
        f.orig_pkts = 1 + (orig_bytes / 1200.0).ceil() as u64;
        f.resp_pkts = if resp_bytes > 0.0 {
            1 + (resp_bytes / 1400.0).ceil() as u64
        } else {
            0
        };
        self.flows.push(f);
    }

    fn dns(&mut self, ts: f64, src: &str) {
        let q = self.rng.random_range(30.0..70.0);
        let r = self.rng.random_range(60.0..250.0);
        let d = self.lognormal(0.02, 0.5);
        self.flow(
            ts,
            src,
            DNS_SERVER,
            53,
            Proto::Udp,
            Service::Dns,
            ConnState::SF,
            q,
            r,
            d,
        );
    }

    fn web_session(&mut self, ts: f64, src: &str) {
        self.dns(ts, src);
        let server = format!(
            "93.184.{}.{}",
            self.rng.random_range(0..4),
            self.rng.random_range(1..40)
        );
        let (port, service) = if self.rng.random_bool(0.6) {
            (443, Service::Ssl)
        } else {
            (80, Service::Http)
        };
        let up = self.lognormal(900.0, 0.6);
        let down = self.lognormal(40_000.0, 1.2);
        let d = self.lognormal(1.5, 0.8);
        let state = if self.rng.random_bool(0.95) {
            ConnState::SF
        } else {
            ConnState::RSTO
        };
        self.flow(
            ts + 0.05,
            src,
            &server,
            port,
            Proto::Tcp,
            service,
            state,
            up,
            down,
            d,
        );
    }

    /// Poisson arrivals at `rate_per_min` over `[start, end)`.
    fn arrivals(&mut self, start: f64, end: f64, rate_per_min: f64) -> Vec<f64> {
        let gap = Exp::new(rate_per_min / 60.0).expect("positive rate");
        let mut out = Vec::new();
        let mut t = start + gap.sample(&mut self.rng);
        while t < end {
            out.push(t);
            t += gap.sample(&mut self.rng);
        }
        out
    }

    fn web_host(&mut self, ip: &str, start: f64, end: f64, rate: f64) {
        for t in self.arrivals(start, end, rate) {
            self.web_session(t, ip);
        }
    }

    fn mail_host(&mut self, ip: &str, start: f64, end: f64) {
        // Mailbox polling every two minutes with jitter, occasional sends.
        let mut t = start + self.rng.random_range(0.0..120.0);
        while t < end {
            let up = self.lognormal(600.0, 0.3);
            let down = self.lognormal(3000.0, 1.0);
            let d = self.lognormal(0.8, 0.4);
            self.flow(
                t,
                ip,
                MAIL_SERVER,
                143,
                Proto::Tcp,
                Service::Imap,
                ConnState::SF,
                up,
                down,
                d,
            );
            t += 120.0 + self.rng.random_range(-5.0..5.0);
        }
        for t in self.arrivals(start, end, 0.3) {
            self.dns(t, ip);
            let up = self.lognormal(8000.0, 1.0);
            let d = self.lognormal(0.6, 0.4);
            self.flow(
                t + 0.03,
                ip,
                MAIL_SERVER,
                25,
                Proto::Tcp,
                Service::Smtp,
                ConnState::SF,
                up,
                400.0,
                d,
            );
        }
        self.web_host(ip, start, end, 0.5);
    }

    fn admin_host(&mut self, ip: &str, start: f64, end: f64) {
        // Long interactive sessions separated by idle gaps.
        let mut t = start + self.rng.random_range(0.0..300.0);
        while t < end {
            let target = format!("10.200.1.{}", self.rng.random_range(1..6));
            let d = self.lognormal(600.0, 0.7);
            let up = d * self.lognormal(40.0, 0.5);
            let down = d * self.lognormal(200.0, 0.8);
            self.flow(
                t,
                ip,
                &target,
                22,
                Proto::Tcp,
                Service::Ssh,
                ConnState::SF,
                up,
                down,
                d,
            );
            if self.rng.random_bool(0.2) {
                let up = self.lognormal(500.0, 0.4);
                let down = self.lognormal(2e6, 1.0);
                let dd = self.lognormal(20.0, 0.6);
                self.flow(
                    t + 1.0,
                    ip,
                    &target,
                    21,
                    Proto::Tcp,
                    Service::Ftp,
                    ConnState::SF,
                    up,
                    down,
                    dd,
                );
            }
            t += d.min(1800.0) + self.lognormal(400.0, 0.6);
        }
        for t in self.arrivals(start, end, 0.3) {
            let target = format!("10.200.1.{}", self.rng.random_range(1..6));
            self.flow(
                t,
                ip,
                &target,
                161,
                Proto::Udp,
                Service::Other,
                ConnState::SF,
                80.0,
                200.0,
                0.01,
            );
        }
        self.web_host(ip, start, end, 0.7);
    }

    fn bot_host(&mut self, ip: &str, start: f64, end: f64, period: f64) {
        // Periodic IRC check-in to the controller.
        let mut t = start + self.rng.random_range(0.0..period);
        while t < end {
            let up = self.rng.random_range(60.0..140.0);
            let down = self.rng.random_range(100.0..320.0);
            let d = self.lognormal(0.4, 0.3);
            self.flow(
                t,
                ip,
                CNC_IP,
                6667,
                Proto::Tcp,
                Service::Irc,
                ConnState::SF,
                up,
                down,
                d,
            );
            if self.rng.random_bool(0.08) {
                self.weird.push(WeirdEvent {
                    ts: t + 0.1,
                    src_ip: ip.to_string(),
                    name: "irc_line_too_short".into(),
                });
            }
            t += period + self.rng.random_range(-1.0..1.0);
        }
        // Spam bursts to many external relays, many of which refuse.
        for t0 in self.arrivals(start, end, 0.2) {
            let n = self.rng.random_range(15..45);
            for k in 0..n {
                let relay = format!(
                    "{}.{}.{}.{}",
                    self.rng.random_range(20..220),
                    self.rng.random_range(0..255),
                    self.rng.random_range(0..255),
                    self.rng.random_range(1..255)
                );
                let state = match self.rng.random_range(0..10) {
                    0..=3 => ConnState::S0,
                    4..=5 => ConnState::REJ,
                    _ => ConnState::SF,
                };
                let (up, down) = if state == ConnState::SF {
                    (self.lognormal(3000.0, 0.5), 300.0)
                } else {
                    (0.0, 0.0)
                };
                let d = if state == ConnState::SF {
                    self.lognormal(1.0, 0.5)
                } else {
                    0.0
                };
                self.flow(
                    t0 + k as f64 * 0.4,
                    ip,
                    &relay,
                    25,
                    Proto::Tcp,
                    Service::Smtp,
                    state,
                    up,
                    down,
                    d,
                );
            }
        }
        self.web_host(ip, start, end, 1.0);
    }

    fn benign_weird(&mut self, ip: &str, start: f64, end: f64) {
        for t in self.arrivals(start, end, 0.02) {
            let name = if self.rng.random_bool(0.5) {
                "dns_unmatched_msg"
            } else {
                "possible_split_routing"
            };
            self.weird.push(WeirdEvent {
                ts: t,
                src_ip: ip.to_string(),
                name: name.into(),
            });
        }
    }
}

/// Deterministic capture for `cfg`: web, mail and admin users plus bots
/// that beacon over IRC and send spam bursts. Bots raise
/// `irc_line_too_short` weird events; normal hosts raise only benign ones.
pub fn generate_traffic(cfg: &TrafficConfig) -> Traffic {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        flows: Vec::new(),
        weird: Vec::new(),
    };
    let (start, end) = (cfg.start_ts, cfg.start_ts + cfg.duration_s);
    for i in 0..cfg.web_hosts {
        let ip = host_ip(cfg, 1, i);
        let rate = g.rng.random_range(2.0..6.0);
        g.web_host(&ip, start, end, rate);
        g.benign_weird(&ip, start, end);
    }
    for i in 0..cfg.mail_hosts {
        let ip = host_ip(cfg, 2, i);
        g.mail_host(&ip, start, end);
        g.benign_weird(&ip, start, end);
    }
    for i in 0..cfg.admin_hosts {
        let ip = host_ip(cfg, 3, i);
        g.admin_host(&ip, start, end);
    }
    for i in 0..cfg.bot_hosts {
        let ip = host_ip(cfg, 4, i);
        g.bot_host(&ip, start, end, cfg.beacon_period_s);
        // Guarantees every bot is labeled even on short captures.
        g.weird.push(WeirdEvent {
            ts: start + 1.0 + i as f64,
            src_ip: ip.clone(),
            name: "irc_line_too_short".into(),
        });
    }
    let mut flows: Vec<FlowRecord> = g.flows.into_iter().filter(|f| f.ts < end).collect();
    flows.sort_by(|a, b| a.ts.total_cmp(&b.ts).then_with(|| a.src_ip.cmp(&b.src_ip)));
    let mut weird = g.weird;
    weird.sort_by(|a, b| a.ts.total_cmp(&b.ts).then_with(|| a.src_ip.cmp(&b.src_ip)));
    Traffic { flows, weird }
}
