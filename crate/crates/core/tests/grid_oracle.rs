use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::PathBuf;

use proptest::prelude::*;
use stormgrid::grid::{parse_case, GridModel, OutageState};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

#[derive(Debug)]
struct Toy {
    loads: Vec<f64>,
    edges: Vec<(usize, usize)>,
}

impl Toy {
    /// Bus 1 is the only reference bus.
    fn case_text(&self) -> String {
        let mut s = String::from("mpc.bus = [\n");
        for (i, l) in self.loads.iter().enumerate() {
            let ty = if i == 0 { 3 } else { 1 };
            let _ = writeln!(s, "{} {ty} {l} 0;", i + 1);
        }
        s.push_str("];\nmpc.gen = [\n1 0 0 0 0 1 100 1 1000 0;\n];\nmpc.branch = [\n");
        for (a, b) in &self.edges {
            let _ = writeln!(s, "{} {} 0 0.1 0 0 0 0 0 0 1;", a + 1, b + 1);
        }
        s.push_str("];\n");
        s
    }

    /// Breadth-first flood fill from the reference bus.
    fn flood_fill_loss(&self, out: &[bool]) -> f64 {
        let n = self.loads.len();
        let mut adj = vec![Vec::new(); n];
        for (i, &(a, b)) in self.edges.iter().enumerate() {
            if !out[i] {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        (0..n).filter(|&i| !seen[i]).map(|i| self.loads[i]).sum()
    }
}

fn toy() -> impl Strategy<Value = Toy> {
    (2usize..=12).prop_flat_map(|n| {
        let loads = prop::collection::vec((0u32..50).prop_map(f64::from), n);
        let edges = prop::collection::vec((0..n, 0..n), 1..=10).prop_map(|es| {
            es.into_iter().filter(|(a, b)| a != b).collect::<Vec<_>>()
        });
        (loads, edges).prop_map(|(loads, edges)| Toy { loads, edges })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_flood_fill_on_every_outage_subset(t in toy()) {
        let g = parse_case(&t.case_text()).unwrap();
        let m = t.edges.len();
        let total = g.total_load_mw();
        for mask in 0u32..(1 << m) {
            let flags: Vec<bool> = (0..m).map(|i| mask & (1 << i) != 0).collect();
            let got = g.disconnected_load(&OutageState::from_flags(flags.clone()));
            let want = t.flood_fill_loss(&flags);
            prop_assert!((got - want).abs() < 1e-9, "mask {mask:b}: {got} vs {want}");
            prop_assert!((0.0..=total + 1e-9).contains(&got));
            // one more outage never reconnects load
            for extra in 0..m {
                if !flags[extra] {
                    let mut more = flags.clone();
                    more[extra] = true;
                    prop_assert!(g.disconnected_load(&OutageState::from_flags(more)) + 1e-9 >= got);
                }
            }
        }
    }
}

fn load(case: &str, coords: &str) -> GridModel {
    let text = std::fs::read_to_string(fixture(case)).unwrap();
    let coords = std::fs::read_to_string(fixture(coords)).unwrap();
    parse_case(&text).unwrap().with_coordinates(coords.as_bytes()).unwrap()
}

#[test]
fn small_fixture_counts() {
    let g = load("case4_gulf.m", "case4_gulf_coords.csv");
    assert_eq!(g.buses().len(), 4);
    assert_eq!(g.branches().len(), 3);
    assert_eq!(g.generators().len(), 1);
    assert_eq!(g.total_load_mw(), 100.0);
    assert_eq!(g.total_gen_mw(), 150.0);
    assert_eq!(g.load_count(), 3);
    assert!(g.is_located());
}

#[test]
fn gulf_fixture_counts() {
    let g = load("gulf50.m", "gulf50_coords.csv");
    assert_eq!(g.buses().len(), 50);
    assert_eq!(g.branches().len(), 62);
    assert_eq!(g.generators().len(), 4);
    assert_eq!(g.load_count(), 49);
    assert!((g.total_load_mw() - 4807.6).abs() < 1e-6);
    assert_eq!(g.total_gen_mw(), 7800.0);
    // one transformer, one zero-length tie
    assert_eq!(g.exposed_line_count(), 60);
    assert_eq!(g.disconnected_load(&OutageState::none(62)), 0.0);
}

#[test]
fn reparse_is_stable() {
    let text = std::fs::read_to_string(fixture("gulf50.m")).unwrap();
    let a = parse_case(&text).unwrap();
    let b = parse_case(&text).unwrap();
    assert_eq!(a, b);
}
