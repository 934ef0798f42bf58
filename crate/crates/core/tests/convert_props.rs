mod common;

use common::{grid, vocab, HOP};
use proptest::prelude::*;
use sedkit_core::io::{
    format_event_file, format_frame_matrix, parse_event_file, parse_frame_matrix, MatrixKind,
};
use sedkit_core::{events_to_labels, labels_to_events, Event, EventList, FrameMatrix};

/// Same-class events on frame boundaries, separated by at least one frame.
fn aligned_events(n: usize, k: usize) -> impl Strategy<Value = Vec<Event>> {
    prop::collection::vec(prop::collection::vec((1usize..4, 1usize..6), 0..5), k).prop_map(
        move |per_class| {
            let mut out = Vec::new();
            for (class, spans) in per_class.into_iter().enumerate() {
                let mut cursor = 0;
                for (gap, len) in spans {
                    let start = cursor + gap;
                    let end = start + len;
                    if end > n {
                        break;
                    }
                    let name = format!("class_{class}");
                    out.push(Event::new(name, start as f64 * HOP, end as f64 * HOP).unwrap());
                    cursor = end;
                }
            }
            out
        },
    )
}

fn clip() -> impl Strategy<Value = (usize, usize, Vec<Event>)> {
    (8usize..40, 1usize..4).prop_flat_map(|(n, k)| (Just(n), Just(k), aligned_events(n, k)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn rasterize_then_decode_is_identity((n, k, events) in clip()) {
        let list = EventList::new("c.wav", events);
        let labels = events_to_labels(&list, grid(n), vocab(k)).unwrap();
        prop_assert!(labels.is_binary());
        prop_assert_eq!(labels_to_events(&labels, "c.wav", false), list);
    }

    #[test]
    fn adding_an_event_never_clears_a_frame(
        ((n, k, events), class) in clip().prop_flat_map(|c| { let k = c.1; (Just(c), 0..k) }),
        onset in 0.0f64..2.0,
        len in 0.01f64..1.0,
    ) {
        let before = events_to_labels(&EventList::new("c", events.clone()), grid(n), vocab(k)).unwrap();
        let mut grown = events;
        grown.push(Event::new(format!("class_{class}"), onset, onset + len).unwrap());
        let after = events_to_labels(&EventList::new("c", grown), grid(n), vocab(k)).unwrap();
        for (b, a) in before.values().iter().zip(after.values()) {
            prop_assert!(a >= b);
        }
    }

    #[test]
    fn event_file_round_trips_millisecond_times(
        rows in prop::collection::vec((0usize..3, 0u32..5000, 1u32..3000, 0usize..3), 1..20),
    ) {
        let lists: Vec<EventList> = (0..3)
            .map(|c| {
                let events = rows
                    .iter()
                    .filter(|r| r.0 == c)
                    .map(|&(_, on, len, k)| {
                        Event::new(format!("class_{k}"), on as f64 / 1000.0, (on + len) as f64 / 1000.0).unwrap()
                    })
                    .collect();
                EventList::new(format!("clip_{c}.wav"), events)
            })
            .filter(|l| !l.is_empty())
            .collect();
        let parsed = parse_event_file(&format_event_file(&lists), "mem").unwrap();
        prop_assert_eq!(parsed, lists);
    }

    #[test]
    fn score_matrix_round_trips_six_decimals(
        (n, k) in (1usize..20, 1usize..4),
        seed in prop::collection::vec(0u32..=1_000_000, 80),
        mask in any::<bool>(),
    ) {
        let values: Vec<f64> = (0..n * k).map(|i| seed[i % seed.len()] as f64 / 1e6).collect();
        let values = if mask { values.iter().map(|v| 1.0 + 10.0 * v).map(|v| (v * 1e6f64).round() / 1e6).collect() } else { values };
        let matrix = FrameMatrix::new(grid(n), vocab(k), values).unwrap();
        let kind = if mask { MatrixKind::Mask } else { MatrixKind::Scores };
        let (parsed, parsed_kind) = parse_frame_matrix(&format_frame_matrix(&matrix, kind), "mem", HOP).unwrap();
        prop_assert_eq!(parsed_kind, kind);
        prop_assert_eq!(parsed.values(), matrix.values());
        prop_assert_eq!(parsed.vocab().names(), matrix.vocab().names());
    }
}
