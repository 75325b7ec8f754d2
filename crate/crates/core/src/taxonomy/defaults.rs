//! Shipped seed lists. Representative, not exhaustive: full lists load from config.

use super::config::{CharacteristicEntry, OccupationEntry, RelationEntry};
use super::{Polarity, RelationClass};

/// Closed set of occupation categories, in report row order.
pub const OCCUPATION_CATEGORIES: [&str; 15] = [
    "Business",
    "Science",
    "Legal",
    "Education",
    "Sports",
    "Arts",
    "Healthcare",
    "Protective",
    "Food",
    "Sales",
    "Construction",
    "Production",
    "Transportation",
    "Other",
    "Unofficial",
];

const OCCUPATIONS: &[(&str, &[&str])] = &[
    ("Business", &["accountant", "financial analyst", "marketing manager", "chief executive", "business consultant"]),
    ("Science", &["chemist", "biologist", "physicist", "software engineer", "data scientist"]),
    ("Legal", &["lawyer", "judge", "paralegal", "legal secretary", "notary"]),
    ("Education", &["professor", "kindergarten teacher", "librarian", "school principal", "tutor"]),
    ("Sports", &["athlete", "football coach", "referee", "fitness trainer", "swimmer"]),
    ("Arts", &["painter", "musician", "actor", "photographer", "fashion designer"]),
    ("Healthcare", &["doctor", "nurse", "surgeon", "pharmacist", "dentist"]),
    ("Protective", &["police officer", "firefighter", "security guard", "soldier", "detective"]),
    ("Food", &["chef", "baker", "waiter", "bartender", "butcher"]),
    ("Sales", &["cashier", "real estate agent", "sales representative", "retail clerk", "insurance agent"]),
    ("Construction", &["carpenter", "electrician", "plumber", "bricklayer", "roofer"]),
    ("Production", &["factory worker", "machinist", "welder", "tailor", "printing press operator"]),
    ("Transportation", &["truck driver", "pilot", "bus driver", "taxi driver", "flight attendant"]),
    ("Other", &["janitor", "hairdresser", "housekeeper", "farmer", "gardener"]),
    ("Unofficial", &["street vendor", "busker", "day laborer", "rickshaw puller", "shoe shiner"]),
];

pub(super) fn occupations() -> Vec<OccupationEntry> {
    OCCUPATIONS
        .iter()
        .flat_map(|(category, labels)| {
            labels.iter().map(move |label| OccupationEntry {
                label: label.to_string(),
                category: category.to_string(),
            })
        })
        .collect()
}

// Two intimate, three instructional, six hierarchical.
const RELATIONS: &[(&str, &str, RelationClass)] = &[
    ("husband", "wife", RelationClass::Intimate),
    ("boyfriend", "girlfriend", RelationClass::Intimate),
    ("teacher", "student", RelationClass::Instructional),
    ("coach", "athlete", RelationClass::Instructional),
    ("mentor", "apprentice", RelationClass::Instructional),
    ("boss", "employee", RelationClass::Hierarchical),
    ("officer", "soldier", RelationClass::Hierarchical),
    ("landlord", "tenant", RelationClass::Hierarchical),
    ("captain", "crew member", RelationClass::Hierarchical),
    ("principal", "teacher", RelationClass::Hierarchical),
    ("manager", "intern", RelationClass::Hierarchical),
];

pub(super) fn relations() -> Vec<RelationEntry> {
    RELATIONS
        .iter()
        .map(|&(left, right, class)| RelationEntry {
            left: left.into(),
            right: right.into(),
            class,
        })
        .collect()
}

// Appearance, personality, social status and wealth.
const ANTONYMS: &[(&str, &str)] = &[
    ("beautiful", "ugly"),
    ("clean", "dirty"),
    ("rich", "poor"),
    ("successful", "unsuccessful"),
    ("powerful", "powerless"),
    ("intelligent", "stupid"),
    ("kind", "cruel"),
    ("honest", "dishonest"),
    ("hardworking", "lazy"),
    ("brave", "cowardly"),
    ("polite", "rude"),
    ("confident", "insecure"),
];

pub(super) fn characteristics() -> Vec<CharacteristicEntry> {
    ANTONYMS
        .iter()
        .flat_map(|&(pos, neg)| {
            [
                CharacteristicEntry {
                    label: pos.into(),
                    polarity: Polarity::Positive,
                    partner: neg.into(),
                },
                CharacteristicEntry {
                    label: neg.into(),
                    polarity: Polarity::Negative,
                    partner: pos.into(),
                },
            ]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists_have_expected_shape() {
        let occ = occupations();
        for category in OCCUPATION_CATEGORIES {
            assert!(occ.iter().any(|o| o.category == category), "{category} empty");
        }
        let rel = relations();
        assert_eq!(rel.len(), 11);
        let count = |c| rel.iter().filter(|r| r.class == c).count();
        assert_eq!(count(RelationClass::Intimate), 2);
        assert_eq!(count(RelationClass::Instructional), 3);
        assert_eq!(count(RelationClass::Hierarchical), 6);
        assert_eq!(characteristics().len(), 24);
    }

    #[test]
    fn antonyms_are_symmetric() {
        let chars = characteristics();
        for c in &chars {
            let partner = chars.iter().find(|p| p.label == c.partner).unwrap();
            assert_eq!(partner.partner, c.label);
            assert_ne!(partner.polarity, c.polarity);
        }
    }
}
