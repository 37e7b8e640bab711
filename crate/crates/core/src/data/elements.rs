const SYMBOLS: [&str; 118] = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl", "Ar", "K", "Ca",
    "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y",
    "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce",
    "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir",
    "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm",
    "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc",
    "Lv", "Ts", "Og",
];

pub fn symbol(z: u32) -> Option<&'static str> {
    SYMBOLS.get((z as usize).checked_sub(1)?).copied()
}

/// Atomic number for an element symbol (case-insensitive) or a bare integer.
pub fn atomic_number(token: &str) -> Option<u32> {
    if let Ok(z) = token.parse::<u32>() {
        return (z >= 1).then_some(z);
    }
    SYMBOLS
        .iter()
        .position(|s| s.eq_ignore_ascii_case(token))
        .map(|i| i as u32 + 1)
}

/// Hill-order formula, e.g. `C2H6O`; without carbon, symbols sort alphabetically.
pub fn formula(z: &[u32]) -> String {
    let mut counts = std::collections::BTreeMap::<&str, usize>::new();
    for &zi in z {
        *counts.entry(symbol(zi).unwrap_or("X")).or_default() += 1;
    }
    let mut order: Vec<&str> = Vec::new();
    if counts.contains_key("C") {
        order.push("C");
        if counts.contains_key("H") {
            order.push("H");
        }
    }
    order.extend(counts.keys().filter(|k| !order.contains(k)).collect::<Vec<_>>());
    order
        .iter()
        .map(|s| match counts[s] {
            1 => s.to_string(),
            n => format!("{s}{n}"),
        })
        .collect()
}
