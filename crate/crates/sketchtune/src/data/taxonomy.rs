//! Compiled-in class/category table: six categories, 30 classes.
//! Unknown classes or mismatched memberships are validation errors.

/// The six categories with their classes.
pub const CATEGORIES: [(&str, &[&str]); 6] = [
    ("Fashion Items", &["Hat", "Shoe", "T-shirt", "Umbrella"]),
    (
        "Animals",
        &[
            "Butterfly", "Cat", "Cow", "Dog", "Elephant", "Fish", "Horse", "Rabbit",
        ],
    ),
    (
        "Nature & Environment",
        &["Flower", "Leaf", "Moon", "Sun", "Tree"],
    ),
    (
        "Fictional Characters & Symbols",
        &["Angel", "Mermaid", "Snowman", "Teddy Bear"],
    ),
    (
        "Fruits & Food",
        &["Apple", "Banana", "Cake", "Pineapple", "Strawberry"],
    ),
    (
        "Household Items",
        &["Alarm Clock", "Bicycle", "House", "Mug"],
    ),
];

/// All 30 class names in category order.
pub fn all_classes() -> Vec<&'static str> {
    CATEGORIES.iter().flat_map(|(_, cs)| cs.iter().copied()).collect()
}

/// Category a class belongs to, if the class is known.
/// Matching is case-insensitive; the canonical spelling is the table's.
pub fn category_of(class_name: &str) -> Option<&'static str> {
    let want = class_name.trim().to_ascii_lowercase();
    for (cat, classes) in CATEGORIES {
        if classes.iter().any(|c| c.to_ascii_lowercase() == want) {
            return Some(cat);
        }
    }
    None
}

/// True when `class_name` is listed under `category`.
pub fn class_in_category(class_name: &str, category: &str) -> bool {
    category_of(class_name)
        .map(|c| c.eq_ignore_ascii_case(category.trim()))
        .unwrap_or(false)
}

/// Filesystem-friendly slug for a class name ("Teddy Bear" -> "teddy_bear").
pub fn class_slug(class_name: &str) -> String {
    class_name
        .trim()
        .to_ascii_lowercase()
        .replace([' ', '-'], "_")
}
