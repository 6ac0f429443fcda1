//! Stored classification tables for the shipped presets, used by `verify`
//! for regression diffing.

pub fn table(name: &str) -> Option<&'static str> {
    Some(match name {
        "two_site" => include_str!("../tables/two_site.txt"),
        "three_site" => include_str!("../tables/three_site.txt"),
        "zigzag" => include_str!("../tables/zigzag.txt"),
        "railway" => include_str!("../tables/railway.txt"),
        "quartic" => include_str!("../tables/quartic.txt"),
        "res_211" => include_str!("../tables/res_211.txt"),
        "res_212" => include_str!("../tables/res_212.txt"),
        _ => return None,
    })
}
