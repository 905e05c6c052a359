use dkg_norms::grid::{Cell, Color, Grid};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};

/// Fixed-seed configuration without regression files.
pub fn config(cases: u32) -> Config {
    Config {
        cases,
        failure_persistence: None,
        rng_seed: RngSeed::Fixed(0x5eed),
        ..Config::default()
    }
}

fn color() -> impl Strategy<Value = Color> {
    prop_oneof![Just(Color::Red), Just(Color::Yellow), Just(Color::Blue)]
}

fn filler() -> impl Strategy<Value = Cell> {
    prop_oneof![
        8 => Just(Cell::Empty),
        4 => Just(Cell::Wall),
        1 => color().prop_map(Cell::Key),
        1 => color().prop_map(Cell::Door),
        1 => Just(Cell::Gem),
    ]
}

/// Valid grids up to `max` on a side with at most 6 keys and 6 doors. The
/// agent, the human and one gem sit on distinct cells.
pub fn grid(max: usize) -> impl Strategy<Value = Grid> {
    (2..=max, 2..=max)
        .prop_flat_map(|(h, w)| {
            let n = h * w;
            (
                Just(h),
                Just(w),
                proptest::collection::vec(filler(), n),
                0..n,
                0..n,
                0..n,
            )
        })
        .prop_filter("distinct special cells", |(_, _, _, a, h, g)| a != h && a != g && h != g)
        .prop_map(|(h, w, mut cells, agent, human, gem)| {
            cells[agent] = Cell::Agent;
            cells[human] = Cell::Human;
            cells[gem] = Cell::Gem;
            let rows = cells.chunks(w).map(|r| r.to_vec()).collect::<Vec<_>>();
            debug_assert_eq!(rows.len(), h);
            Grid::from_rows("generated", rows).expect("generated grid is valid")
        })
        .prop_filter("bounded keys and doors", |g| {
            let keys: usize = Color::ALL.iter().map(|&c| g.key_count(c)).sum();
            keys <= 6 && g.all_doors().len() <= 6
        })
}

/// Instructions in the command grammar plus a few unrelated requests.
pub fn instruction() -> impl Strategy<Value = String> {
    let verbs = prop::sample::select(vec![
        "Pick up", "Get", "Grab", "Collect", "Fetch", "Find", "Pass me", "Give me", "Hand me",
        "Bring me", "Unlock", "Open", "Can you get", "Could you grab",
    ]);
    let counts = prop::sample::select(vec!["the", "a", "one", "two", "three", "2", ""]);
    let colors = prop::sample::select(vec!["red", "yellow", "blue", "green", "purple", ""]);
    let nouns = prop::sample::select(vec!["key", "keys", "door", "doors", "gem", "gems"]);
    prop_oneof![
        8 => (verbs, counts, colors, nouns).prop_map(|(v, n, c, o)| {
            [v, n, c, o].iter().filter(|w| !w.is_empty()).copied().collect::<Vec<_>>().join(" ") + "."
        }),
        1 => prop::sample::select(vec!["Can you dance?", "Tell me a joke.", "What time is it?", "Sing me a song."])
            .prop_map(str::to_string),
    ]
}
