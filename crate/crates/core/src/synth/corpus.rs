//! Bundled text sampler: dictionary words, numbers, domains, URLs, dates,
//! phone numbers and prices, all within the printable ASCII range.

use rand::seq::SliceRandom;
use rand::Rng;

const WORDS: &[&str] = &[
    "the", "of", "and", "to", "in", "is", "was", "for", "on", "that", "with", "as", "by", "from", "at", "his", "her",
    "which", "an", "are", "were", "be", "this", "first", "also", "after", "city", "new", "school", "national", "world",
    "during", "years", "state", "film", "team", "season", "united", "league", "county", "history", "music", "river",
    "album", "district", "north", "south", "east", "west", "village", "population", "family", "station", "company",
    "university", "government", "series", "football", "church", "island", "house", "park", "road", "village", "total",
    "amount", "cash", "change", "invoice", "receipt", "tax", "date", "time", "qty", "price", "item", "discount",
    "subtotal", "balance", "payment", "card", "member", "store", "thank", "you", "please", "come", "again", "order",
    "table", "server", "number", "address", "phone", "email", "service", "charge", "rounding", "sales", "goods",
    "return", "policy", "market", "trading", "enterprise", "limited", "street", "avenue", "plaza", "centre", "mall",
    "coffee", "bread", "rice", "chicken", "water", "milk", "sugar", "paper", "pencil", "book", "stationery",
    "hardware", "electric", "tools", "garden", "office", "supply", "account", "customer", "reference", "cashier",
    "Monday", "Tuesday", "Friday", "January", "March", "August", "December", "London", "Paris", "Berlin", "Tokyo",
    "Lisbon", "Oslo", "Cairo", "Lima", "Delhi", "Sydney", "Toronto", "Boston", "Quebec", "Zurich", "Kyoto", "Jakarta",
    "quick", "brown", "fox", "jumps", "over", "lazy", "dog", "zebra", "quartz", "jacket", "vivid", "oxygen", "wax",
];

const TLDS: &[&str] = &["com", "org", "net", "io", "co.uk", "de", "my", "info"];
const MONTHS: &[&str] = &["Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TextCategory {
    Word,
    Number,
    Domain,
    Url,
    Date,
    Phone,
    Price,
}

impl TextCategory {
    pub const ALL: [TextCategory; 7] = [
        TextCategory::Word,
        TextCategory::Number,
        TextCategory::Domain,
        TextCategory::Url,
        TextCategory::Date,
        TextCategory::Phone,
        TextCategory::Price,
    ];
}

/// Draws short tokens, mostly dictionary words.
#[derive(Debug, Clone)]
pub struct TextSampler {
    weights: [(TextCategory, u32); 7],
}

impl Default for TextSampler {
    fn default() -> Self {
        Self {
            weights: [
                (TextCategory::Word, 60),
                (TextCategory::Number, 12),
                (TextCategory::Domain, 5),
                (TextCategory::Url, 3),
                (TextCategory::Date, 7),
                (TextCategory::Phone, 5),
                (TextCategory::Price, 8),
            ],
        }
    }
}

impl TextSampler {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> String {
        self.sample_with_category(rng).1
    }

    pub fn sample_with_category<R: Rng>(&self, rng: &mut R) -> (TextCategory, String) {
        let total: u32 = self.weights.iter().map(|w| w.1).sum();
        let mut pick = rng.gen_range(0..total);
        let mut cat = TextCategory::Word;
        for &(c, w) in &self.weights {
            if pick < w {
                cat = c;
                break;
            }
            pick -= w;
        }
        (cat, generate(cat, rng))
    }
}

fn word<R: Rng>(rng: &mut R) -> String {
    let w = WORDS.choose(rng).copied().unwrap_or("text");
    match rng.gen_range(0..10) {
        0 => w.to_uppercase(),
        1 | 2 => {
            let mut c = w.chars();
            c.next()
                .map(|f| f.to_uppercase().chain(c).collect())
                .unwrap_or_default()
        }
        _ => w.to_string(),
    }
}

fn generate<R: Rng>(cat: TextCategory, rng: &mut R) -> String {
    match cat {
        TextCategory::Word => word(rng),
        TextCategory::Number => match rng.gen_range(0..3) {
            0 => rng.gen_range(0..100).to_string(),
            1 => rng.gen_range(100..100_000).to_string(),
            _ => format!("#{}", rng.gen_range(1000..999_999)),
        },
        TextCategory::Domain => format!(
            "{}{}.{}",
            WORDS.choose(rng).unwrap().to_lowercase(),
            if rng.gen_bool(0.3) { rng.gen_range(1..99).to_string() } else { String::new() },
            TLDS.choose(rng).unwrap()
        ),
        TextCategory::Url => format!(
            "www.{}.{}/{}",
            WORDS.choose(rng).unwrap().to_lowercase(),
            TLDS.choose(rng).unwrap(),
            WORDS.choose(rng).unwrap().to_lowercase()
        ),
        TextCategory::Date => {
            let (d, m, y) = (rng.gen_range(1..=28), rng.gen_range(1..=12), rng.gen_range(1990..2030));
            match rng.gen_range(0..3) {
                0 => format!("{d:02}/{m:02}/{y}"),
                1 => format!("{y}-{m:02}-{d:02}"),
                _ => format!("{d}-{}-{y}", MONTHS[m - 1]),
            }
        }
        TextCategory::Phone => match rng.gen_range(0..2) {
            0 => format!(
                "{:03}-{:03}-{:04}",
                rng.gen_range(200..999),
                rng.gen_range(100..999),
                rng.gen_range(0..9999)
            ),
            _ => format!("+{}({}){}", rng.gen_range(1..99), rng.gen_range(10..99), rng.gen_range(100_000..9_999_999)),
        },
        TextCategory::Price => format!("{}.{:02}", rng.gen_range(0..1000), rng.gen_range(0..100)),
    }
}
