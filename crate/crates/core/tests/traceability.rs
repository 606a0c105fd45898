//! `docs/traceability.md` lists exactly the registered checks.

use soliton_lab::suite::registry;

#[test]
fn table_matches_registry() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/traceability.md");
    let doc = std::fs::read_to_string(path).unwrap();
    let rows: Vec<(u8, String, String)> = doc
        .lines()
        .filter(|l| l.starts_with("| ") && l.contains('`'))
        .map(|l| {
            let cells: Vec<String> = l
                .trim_matches('|')
                .replace("\\|", "\u{1}")
                .split('|')
                .map(|c| c.trim().replace('\u{1}', "|"))
                .collect();
            (cells[0].parse().unwrap(), cells[1].trim_matches('`').to_owned(), cells[2].clone())
        })
        .collect();
    let defs = registry();
    assert_eq!(rows.len(), defs.len());
    for d in &defs {
        let row = rows.iter().find(|r| r.1 == d.id).unwrap_or_else(|| panic!("{} missing", d.id));
        assert_eq!(row.0, d.criterion, "{}", d.id);
        assert_eq!(row.2, d.statement, "{}", d.id);
    }
    let mut covered: Vec<u8> = defs.iter().map(|d| d.criterion).collect();
    covered.sort_unstable();
    covered.dedup();
    assert_eq!(covered, (1..=18).collect::<Vec<_>>());
}
