//! Seeded synthetic real-estate corpus with known ground truth.
//!
//! Two listing sources with cryptic headers cover disjoint postcodes; one
//! abbreviates street types, the other garbles agency names and drops
//! cities. A deprivation table keyed by postcode supplies crime figures.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wrangle_core::config::{Inputs, StageToggle};
use wrangle_core::model::{ContextRelationship, ContextType, PipelineConfig, Relation, TargetSchema, Value};

pub const TARGET: [&str; 9] = [
    "ref", "number", "street", "city", "postcode", "price", "agency", "contact", "crimestats",
];

const POSTCODES: usize = 20;
const HOUSES: usize = 12;
const LISTINGS_PER_POSTCODE: usize = 11;

const NAMES: [&str; 20] = [
    "Canton", "Heron", "Biscayne", "Whitfield", "Redhill", "Albion", "Beech", "Cedar", "Dover", "Elm",
    "Fulham", "Garnet", "Hollis", "Ivy", "Juniper", "Kestrel", "Larch", "Mercer", "Norfolk", "Orchard",
];
const TYPES: [(&str, &str); 3] = [("Street", "St"), ("Road", "Rd"), ("Avenue", "Ave")];
const CITIES: [&str; 4] = ["London", "Manchester", "Leeds", "Bristol"];
const AGENCIES: [(&str, &str, &str); 6] = [
    ("Leaders", "Leaders", "898756"),
    ("ReedsRains", "ReedsRains", "8654789"),
    ("Belvoir London LTD", "Limited Belvoir London", "7720113"),
    ("Hunters North LTD", "Limited Hunters North", "7731904"),
    ("Savills", "Savills", "6120448"),
    ("Foxtons City LTD", "Limited Foxtons City", "6655021"),
];

pub struct Corpus {
    pub inputs: Inputs,
    pub truth: Relation,
}

struct Place {
    postcode: String,
    street: String,
    abbreviated: String,
    city: &'static str,
}

fn s(v: &str) -> Value {
    Some(v.to_string())
}

fn rel(name: &str, attrs: &[&str], rows: Vec<Vec<Value>>) -> Relation {
    Relation::new(name, attrs.iter().map(|a| a.to_string()).collect(), rows).expect("well-formed corpus relation")
}

fn typo(rng: &mut ChaCha8Rng, city: &str) -> String {
    if city == "London" && rng.gen_bool(0.5) {
        return "Greater London".into();
    }
    let mut chars: Vec<char> = city.chars().collect();
    let i = rng.gen_range(1..chars.len());
    chars.remove(i);
    chars.into_iter().collect()
}

fn price(rng: &mut ChaCha8Rng) -> u32 {
    rng.gen_range(120..900) * 1000 + rng.gen_range(0..20) * 50
}

fn grouped(n: u32) -> String {
    format!("{},{:03}", n / 1000, n % 1000)
}

pub fn generate(seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let places: Vec<Place> = (0..POSTCODES)
        .map(|i| {
            let (full, short) = TYPES[i % TYPES.len()];
            let letters: Vec<char> = "ABDEFGHJLNPQRSTUWXYZ".chars().collect();
            Place {
                postcode: format!(
                    "{}{} {}{}{}",
                    ["E", "N", "SW", "LS", "BS"][i % 5],
                    1 + i,
                    rng.gen_range(1..10),
                    letters[rng.gen_range(0..letters.len())],
                    letters[rng.gen_range(0..letters.len())]
                ),
                street: format!("{} {full}", NAMES[i]),
                abbreviated: format!("{} {short}", NAMES[i]),
                city: CITIES[i % CITIES.len()],
            }
        })
        .collect();

    let mut truth_rows = Vec::new();
    let mut zoopla = Vec::new();
    let mut belvoir = Vec::new();
    let mut deprivation = Vec::new();
    let mut address = Vec::new();
    let mut price_paid = Vec::new();
    let mut next_ref = 1000;
    for (i, place) in places.iter().enumerate() {
        let crime = rng.gen_range(1..300).to_string();
        deprivation.push(vec![
            s(&place.postcode),
            s("Live"),
            s(&crime),
            s(&rng.gen_range(1..11).to_string()),
        ]);
        for house in 1..=HOUSES {
            address.push(vec![
                s(&house.to_string()),
                s(&place.street),
                s(place.city),
                s(&place.postcode),
            ]);
        }
        let mut houses: Vec<usize> = (1..=HOUSES).collect();
        houses.shuffle(&mut rng);
        for &house in houses.iter().take(LISTINGS_PER_POSTCODE) {
            next_ref += rng.gen_range(1..7);
            let r = format!("R{next_ref}");
            let p = price(&mut rng);
            let (agency, garbled, contact) = if i < POSTCODES / 2 {
                AGENCIES[rng.gen_range(0..2)]
            } else {
                AGENCIES[rng.gen_range(2..AGENCIES.len())]
            };
            truth_rows.push(vec![
                s(&r),
                s(&house.to_string()),
                s(&place.street),
                s(place.city),
                s(&place.postcode),
                s(&grouped(p)),
                s(agency),
                s(contact),
                s(&crime),
            ]);
            if i < POSTCODES / 2 {
                let city = if rng.gen_bool(0.2) { s(&typo(&mut rng, place.city)) } else { s(place.city) };
                zoopla.push(vec![
                    s(&r),
                    s(&house.to_string()),
                    s(&place.abbreviated),
                    city,
                    s(&place.postcode),
                    s(&grouped(p)),
                    s(agency),
                    s(contact),
                ]);
            } else {
                let city = if rng.gen_bool(0.2) { None } else { s(place.city) };
                belvoir.push(vec![
                    s(&r),
                    s(&format!("{house} {}", place.street)),
                    city,
                    s(&place.postcode),
                    s(&grouped(p)),
                    s(garbled),
                    s(contact),
                ]);
            }
            if rng.gen_bool(0.3) {
                let paid = price(&mut rng);
                let shown = if rng.gen_bool(0.5) { paid.to_string() } else { grouped(paid) };
                price_paid.push(vec![
                    s(&shown),
                    None,
                    s(&house.to_string()),
                    s(&place.street),
                    s(&place.postcode),
                    if rng.gen_bool(0.1) { None } else { s(place.city) },
                ]);
            }
        }
    }

    let sources = vec![
        rel(
            "zoopla",
            &["ref", "span_h3", "heading_h1", "h2_nth_of_type_1", "n_th_of_type", "h2_nth_of_type_2", "details_box_8", "details_box_6"],
            zoopla,
        ),
        rel(
            "belvoir",
            &["ref", "lst_det_address_h2", "lst_det_city_h2", "lst_details_h1", "p_nth_of_type", "tab_details_ui_tabs", "tab_details_ui_tabs_ph"],
            belvoir,
        ),
        rel("deprivation", &["postcode", "postcodestatus", "crimerank", "crimedecile"], deprivation),
    ];
    let agencies: Vec<Vec<Value>> = AGENCIES.iter().map(|(a, _, c)| vec![s(a), s(c)]).collect();
    let contexts = vec![
        (
            rel("address", &["pao", "street.name", "town.name", "postcode.name"], address),
            ContextRelationship::new(
                "address",
                "listing",
                &[("street.name", "street"), ("town.name", "city"), ("postcode.name", "postcode")],
                ContextType::Reference,
            ),
        ),
        (
            rel("agencies", &["agency", "phone"], agencies),
            ContextRelationship::new("agencies", "listing", &[("agency", "agency"), ("phone", "contact")], ContextType::Master),
        ),
        (
            rel("price_paid", &["price_paid", "saon", "paon", "street", "postcode", "town"], price_paid),
            ContextRelationship::new(
                "price_paid",
                "listing",
                &[("price_paid", "price"), ("street", "street"), ("postcode", "postcode"), ("town", "city")],
                ContextType::Example,
            ),
        ),
    ];
    Corpus {
        inputs: Inputs {
            target: TargetSchema::single("listing", &TARGET).expect("valid target"),
            sources,
            contexts,
            toggles: StageToggle::default(),
            params: PipelineConfig::default(),
            fds: Vec::new(),
        },
        truth: rel("listing", &TARGET, truth_rows),
    }
}

/// The corpus restricted to context of the given types.
pub fn with_contexts(corpus: &Corpus, types: &[ContextType]) -> Inputs {
    let mut inputs = corpus.inputs.clone();
    inputs.contexts.retain(|(_, cr)| types.contains(&cr.ctype));
    inputs
}
